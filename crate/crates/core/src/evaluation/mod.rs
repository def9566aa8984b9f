//! Reconstruction and color-control metrics and the ablation harnesses.

mod ablation;
mod metrics;
mod report;

pub use ablation::{
    edge_hash, palette_assignment, run_color_ablation, run_edge_robustness_ablation, seg_f1_report,
    shared_noisy_edges, ColorAblation, ComponentTable, EdgeAblation, EvalItem, F1Table, HistogramConfig, REGIMES,
};
pub use metrics::{
    avg_color_distance, color_hist_kl, kl_divergence, luma, region_pixels, rgb_distance, seg_f1, smoothed_histogram,
    ssim, ssim_planes, SSIM_SIGMA, SSIM_WINDOW,
};
pub use report::{reference, AblationReport};
