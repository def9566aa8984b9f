//! Direct convolution kernels on pre-padded NCHW inputs, with analytic
//! input and weight gradients. Loops run over contiguous rows so the inner
//! multiply-adds vectorize; accumulation order is fixed.

use std::ops::{AddAssign, Mul};

use candle_core::{CpuStorage, CustomOp2, Layout, Shape, Tensor};

#[derive(Debug, Clone, Copy)]
struct Geom {
    b: usize,
    ci: usize,
    hp: usize,
    wp: usize,
    co: usize,
    k: usize,
    s: usize,
    ho: usize,
    wo: usize,
}

impl Geom {
    fn new(x: &[usize], w: &[usize], s: usize) -> candle_core::Result<Self> {
        let (&[b, ci, hp, wp], &[co, ci2, k, k2]) = (x, w) else {
            candle_core::bail!("conv expects 4-d input and kernel, got {x:?} and {w:?}")
        };
        if ci != ci2 || k != k2 || hp < k || wp < k {
            candle_core::bail!("conv shapes incompatible: input {x:?}, kernel {w:?}")
        }
        Ok(Geom {
            b,
            ci,
            hp,
            wp,
            co,
            k,
            s,
            ho: (hp - k) / s + 1,
            wo: (wp - k) / s + 1,
        })
    }
}

fn slice<'a, T: candle_core::WithDType>(s: &'a CpuStorage, l: &Layout) -> candle_core::Result<&'a [T]> {
    let data = s.as_slice::<T>()?;
    match l.contiguous_offsets() {
        Some((a, b)) => Ok(&data[a..b]),
        None => candle_core::bail!("conv kernels need contiguous inputs"),
    }
}

trait Num: candle_core::WithDType + Copy + Default + Mul<Output = Self> + AddAssign {}
impl Num for f32 {}
impl Num for f64 {}

impl Geom {
    /// Width of one column phase.
    fn wq(&self) -> usize {
        self.wp.div_ceil(self.s)
    }
}

/// Splits every row of each `hp×wp` plane into `s` column phases so that
/// strided reads become contiguous: `phase[p][r][j] = plane[r][j·s + p]`.
fn split_phases<T: Num>(g: Geom, x: &[T]) -> Vec<T> {
    let wq = g.wq();
    let planes = x.len() / (g.hp * g.wp);
    let mut out = vec![T::default(); planes * g.s * g.hp * wq];
    for pl in 0..planes {
        for r in 0..g.hp {
            let row = &x[(pl * g.hp + r) * g.wp..][..g.wp];
            for (c, &v) in row.iter().enumerate() {
                out[((pl * g.s + c % g.s) * g.hp + r) * wq + c / g.s] = v;
            }
        }
    }
    out
}

fn merge_phases<T: Num>(g: Geom, ph: &[T], planes: usize) -> Vec<T> {
    let wq = g.wq();
    let mut out = vec![T::default(); planes * g.hp * g.wp];
    for pl in 0..planes {
        for r in 0..g.hp {
            for c in 0..g.wp {
                out[(pl * g.hp + r) * g.wp + c] = ph[((pl * g.s + c % g.s) * g.hp + r) * wq + c / g.s];
            }
        }
    }
    out
}

/// Offset of the contiguous phase row read by kernel tap `(ky, kx)` at output row `y`.
#[inline]
fn tap(g: Geom, plane: usize, y: usize, ky: usize, kx: usize) -> usize {
    ((plane * g.s + kx % g.s) * g.hp + y * g.s + ky) * g.wq() + kx / g.s
}

fn forward<T: Num>(g: Geom, x: &[T], w: &[T]) -> Vec<T> {
    let xs = split_phases(g, x);
    let mut out = vec![T::default(); g.b * g.co * g.ho * g.wo];
    for b in 0..g.b {
        for co in 0..g.co {
            let o = &mut out[(b * g.co + co) * g.ho * g.wo..][..g.ho * g.wo];
            for ci in 0..g.ci {
                let plane = b * g.ci + ci;
                for ky in 0..g.k {
                    for kx in 0..g.k {
                        let wv = w[((co * g.ci + ci) * g.k + ky) * g.k + kx];
                        for y in 0..g.ho {
                            let src = &xs[tap(g, plane, y, ky, kx)..][..g.wo];
                            for (d, &v) in o[y * g.wo..(y + 1) * g.wo].iter_mut().zip(src) {
                                *d += wv * v;
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

fn grad_input<T: Num>(g: Geom, go: &[T], w: &[T]) -> Vec<T> {
    let mut gx = vec![T::default(); g.b * g.ci * g.s * g.hp * g.wq()];
    for b in 0..g.b {
        for ci in 0..g.ci {
            let plane = b * g.ci + ci;
            for co in 0..g.co {
                let o = &go[(b * g.co + co) * g.ho * g.wo..][..g.ho * g.wo];
                for ky in 0..g.k {
                    for kx in 0..g.k {
                        let wv = w[((co * g.ci + ci) * g.k + ky) * g.k + kx];
                        for y in 0..g.ho {
                            let base = tap(g, plane, y, ky, kx);
                            for (d, &v) in gx[base..base + g.wo].iter_mut().zip(&o[y * g.wo..(y + 1) * g.wo]) {
                                *d += wv * v;
                            }
                        }
                    }
                }
            }
        }
    }
    merge_phases(g, &gx, g.b * g.ci)
}

fn grad_weight<T: Num>(g: Geom, x: &[T], go: &[T]) -> Vec<T> {
    let xs = split_phases(g, x);
    let mut gw = vec![T::default(); g.co * g.ci * g.k * g.k];
    let mut buf = vec![T::default(); g.wo];
    for co in 0..g.co {
        for ci in 0..g.ci {
            for ky in 0..g.k {
                for kx in 0..g.k {
                    buf.fill(T::default());
                    for b in 0..g.b {
                        let o = &go[(b * g.co + co) * g.ho * g.wo..][..g.ho * g.wo];
                        for y in 0..g.ho {
                            let src = &xs[tap(g, b * g.ci + ci, y, ky, kx)..][..g.wo];
                            for ((d, &a), &v) in buf.iter_mut().zip(&o[y * g.wo..(y + 1) * g.wo]).zip(src) {
                                *d += a * v;
                            }
                        }
                    }
                    let mut acc = T::default();
                    for &v in &buf {
                        acc += v;
                    }
                    gw[((co * g.ci + ci) * g.k + ky) * g.k + kx] = acc;
                }
            }
        }
    }
    gw
}

macro_rules! dispatch {
    ($s1:expr, $l1:expr, $s2:expr, $l2:expr, $f:ident, $g:expr) => {
        match ($s1, $s2) {
            (CpuStorage::F32(_), CpuStorage::F32(_)) => {
                CpuStorage::F32($f($g, slice::<f32>($s1, $l1)?, slice::<f32>($s2, $l2)?))
            }
            (CpuStorage::F64(_), CpuStorage::F64(_)) => {
                CpuStorage::F64($f($g, slice::<f64>($s1, $l1)?, slice::<f64>($s2, $l2)?))
            }
            _ => candle_core::bail!("conv kernels support matching f32 or f64 operands"),
        }
    };
}

/// `conv(x, w)` with stride `s` and no padding.
struct Conv2d {
    stride: usize,
}

impl CustomOp2 for Conv2d {
    fn name(&self) -> &'static str {
        "direct-conv2d"
    }

    fn cpu_fwd(&self, s1: &CpuStorage, l1: &Layout, s2: &CpuStorage, l2: &Layout) -> candle_core::Result<(CpuStorage, Shape)> {
        let g = Geom::new(l1.dims(), l2.dims(), self.stride)?;
        let out = dispatch!(s1, l1, s2, l2, forward, g);
        Ok((out, Shape::from((g.b, g.co, g.ho, g.wo))))
    }

    fn bwd(&self, x: &Tensor, w: &Tensor, _res: &Tensor, grad: &Tensor) -> candle_core::Result<(Option<Tensor>, Option<Tensor>)> {
        let grad = grad.contiguous()?;
        let gx = grad.apply_op2_no_bwd(w, &GradInput { stride: self.stride, x_dims: x.dims4()? })?;
        let gw = x.apply_op2_no_bwd(&grad, &GradWeight { stride: self.stride, w_dims: w.dims4()? })?;
        Ok((Some(gx), Some(gw)))
    }
}

struct GradInput {
    stride: usize,
    x_dims: (usize, usize, usize, usize),
}

impl CustomOp2 for GradInput {
    fn name(&self) -> &'static str {
        "direct-conv2d-grad-input"
    }

    fn cpu_fwd(&self, s1: &CpuStorage, l1: &Layout, s2: &CpuStorage, l2: &Layout) -> candle_core::Result<(CpuStorage, Shape)> {
        let (b, ci, hp, wp) = self.x_dims;
        let g = Geom::new(&[b, ci, hp, wp], l2.dims(), self.stride)?;
        if l1.dims() != [g.b, g.co, g.ho, g.wo] {
            candle_core::bail!("conv gradient shape {:?} does not match output", l1.dims())
        }
        let out = dispatch!(s1, l1, s2, l2, grad_input, g);
        Ok((out, Shape::from(self.x_dims)))
    }
}

struct GradWeight {
    stride: usize,
    w_dims: (usize, usize, usize, usize),
}

impl CustomOp2 for GradWeight {
    fn name(&self) -> &'static str {
        "direct-conv2d-grad-weight"
    }

    fn cpu_fwd(&self, s1: &CpuStorage, l1: &Layout, s2: &CpuStorage, l2: &Layout) -> candle_core::Result<(CpuStorage, Shape)> {
        let (co, ci, k, k2) = self.w_dims;
        let g = Geom::new(l1.dims(), &[co, ci, k, k2], self.stride)?;
        if l2.dims() != [g.b, g.co, g.ho, g.wo] {
            candle_core::bail!("conv gradient shape {:?} does not match output", l2.dims())
        }
        let out = dispatch!(s1, l1, s2, l2, grad_weight, g);
        Ok((out, Shape::from(self.w_dims)))
    }
}

fn im2col<T: Num>(g: Geom, x: &[T]) -> Vec<T> {
    let xs = split_phases(g, x);
    let l = g.ho * g.wo;
    let cols = g.b * l;
    let mut out = vec![T::default(); g.ci * g.k * g.k * cols];
    for ci in 0..g.ci {
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = ((ci * g.k + ky) * g.k + kx) * cols;
                for b in 0..g.b {
                    for y in 0..g.ho {
                        let src = &xs[tap(g, b * g.ci + ci, y, ky, kx)..][..g.wo];
                        out[row + b * l + y * g.wo..][..g.wo].copy_from_slice(src);
                    }
                }
            }
        }
    }
    out
}

fn col2im<T: Num>(g: Geom, cols: &[T]) -> Vec<T> {
    let l = g.ho * g.wo;
    let n = g.b * l;
    let mut gx = vec![T::default(); g.b * g.ci * g.s * g.hp * g.wq()];
    for ci in 0..g.ci {
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = ((ci * g.k + ky) * g.k + kx) * n;
                for b in 0..g.b {
                    for y in 0..g.ho {
                        let base = tap(g, b * g.ci + ci, y, ky, kx);
                        let src = &cols[row + b * l + y * g.wo..][..g.wo];
                        for (d, &v) in gx[base..base + g.wo].iter_mut().zip(src) {
                            *d += v;
                        }
                    }
                }
            }
        }
    }
    merge_phases(g, &gx, g.b * g.ci)
}

/// `[B, Ci, Hp, Wp] → [Ci·K·K, B·Ho·Wo]` patch matrix.
struct Im2Col {
    k: usize,
    stride: usize,
}

impl Im2Col {
    fn geom(&self, dims: &[usize]) -> candle_core::Result<Geom> {
        let &[_, ci, ..] = dims else { candle_core::bail!("im2col expects a 4-d input, got {dims:?}") };
        Geom::new(dims, &[1, ci, self.k, self.k], self.stride)
    }
}

impl candle_core::CustomOp1 for Im2Col {
    fn name(&self) -> &'static str {
        "im2col"
    }

    fn cpu_fwd(&self, s: &CpuStorage, l: &Layout) -> candle_core::Result<(CpuStorage, Shape)> {
        let g = self.geom(l.dims())?;
        let out = match s {
            CpuStorage::F32(_) => CpuStorage::F32(im2col(g, slice::<f32>(s, l)?)),
            CpuStorage::F64(_) => CpuStorage::F64(im2col(g, slice::<f64>(s, l)?)),
            _ => candle_core::bail!("im2col supports f32 or f64"),
        };
        Ok((out, Shape::from((g.ci * g.k * g.k, g.b * g.ho * g.wo))))
    }

    fn bwd(&self, x: &Tensor, _res: &Tensor, grad: &Tensor) -> candle_core::Result<Option<Tensor>> {
        let g = self.geom(x.dims())?;
        Ok(Some(grad.contiguous()?.apply_op1_no_bwd(&Col2Im { g })?))
    }
}

struct Col2Im {
    g: Geom,
}

impl candle_core::CustomOp1 for Col2Im {
    fn name(&self) -> &'static str {
        "col2im"
    }

    fn cpu_fwd(&self, s: &CpuStorage, l: &Layout) -> candle_core::Result<(CpuStorage, Shape)> {
        let g = self.g;
        let out = match s {
            CpuStorage::F32(_) => CpuStorage::F32(col2im(g, slice::<f32>(s, l)?)),
            CpuStorage::F64(_) => CpuStorage::F64(col2im(g, slice::<f64>(s, l)?)),
            _ => candle_core::bail!("col2im supports f32 or f64"),
        };
        Ok((out, Shape::from((g.b, g.ci, g.hp, g.wp))))
    }
}

/// Same contract as [`conv2d`], lowered to a patch matrix and one matmul.
pub fn conv2d_gemm(x: &Tensor, w: &Tensor, stride: usize) -> candle_core::Result<Tensor> {
    let (b, _, hp, wp) = x.dims4()?;
    let (co, ci, k, _) = w.dims4()?;
    let (ho, wo) = ((hp - k) / stride + 1, (wp - k) / stride + 1);
    let cols = x.contiguous()?.apply_op1(Im2Col { k, stride })?;
    let out = w.reshape((co, ci * k * k))?.matmul(&cols)?;
    out.reshape((co, b, ho, wo))?.transpose(0, 1)?.contiguous()
}

/// Picks the faster lowering: direct loops for large kernels, patch matrix otherwise.
pub fn conv2d_auto(x: &Tensor, w: &Tensor, stride: usize) -> candle_core::Result<Tensor> {
    if w.dim(2)? >= 5 {
        conv2d(x, w, stride)
    } else {
        conv2d_gemm(x, w, stride)
    }
}

/// Unpadded strided convolution of `x: [B, Ci, H, W]` by `w: [Co, Ci, K, K]`.
pub fn conv2d(x: &Tensor, w: &Tensor, stride: usize) -> candle_core::Result<Tensor> {
    x.contiguous()?.apply_op2(&w.contiguous()?, Conv2d { stride })
}

#[cfg(test)]
mod tests {
    use super::*;
    use candle_core::{DType, Device, Var};

    fn close(a: &Tensor, b: &Tensor) -> f64 {
        (a - b).unwrap().abs().unwrap().max_all().unwrap().to_dtype(DType::F64).unwrap().to_scalar::<f64>().unwrap()
    }

    #[test]
    fn matches_candle_conv_and_its_gradients() {
        let dev = Device::Cpu;
        for (stride, k, h, w) in [(1, 3, 11, 12), (2, 4, 12, 14), (1, 7, 11, 12), (2, 3, 11, 13)] {
            let x = Var::from_tensor(&Tensor::randn(0f64, 1.0, (2, 3, h, w), &dev).unwrap()).unwrap();
            let w = Var::from_tensor(&Tensor::randn(0f64, 1.0, (4, 3, k, k), &dev).unwrap()).unwrap();
            let ours = conv2d(&x, &w, stride).unwrap();
            let gemm = conv2d_gemm(&x, &w, stride).unwrap();
            assert!(close(&ours, &gemm) < 1e-10);
            let weight = Tensor::randn(0f64, 1.0, ours.dims(), &dev).unwrap();
            let gc = (gemm * &weight).unwrap().sum_all().unwrap().backward().unwrap();
            let theirs = x.as_tensor().conv2d(&w, 0, stride, 1, 1).unwrap();
            assert_eq!(ours.dims(), theirs.dims());
            assert!(close(&ours, &theirs) < 1e-10);
            let ga = (ours * &weight).unwrap().sum_all().unwrap().backward().unwrap();
            let gb = (theirs * &weight).unwrap().sum_all().unwrap().backward().unwrap();
            for v in [&x, &w] {
                assert!(close(ga.get(v).unwrap(), gb.get(v).unwrap()) < 1e-9, "stride {stride} k {k}");
                assert!(close(ga.get(v).unwrap(), gc.get(v).unwrap()) < 1e-9, "stride {stride} k {k}");
            }
        }
    }
}
