use std::path::{Path, PathBuf};

use acgan_core::{Error, Result};
use rayon::prelude::*;

use crate::BatchOpts;

/// Runs `work` over `items` on `opts.jobs` threads, then hands results to
/// `sink` in input order. Each item gets one summary line on stdout.
pub fn run<T, R>(
    items: &[T],
    opts: &BatchOpts,
    id: impl Fn(&T) -> String,
    work: impl Fn(&T) -> Result<R> + Sync,
    mut sink: impl FnMut(&T, R) -> Result<String>,
) -> Result<usize>
where
    T: Sync,
    R: Send,
{
    let results: Vec<Result<R>> = pool(opts.jobs)?.install(|| items.par_iter().map(&work).collect());
    let mut failed = 0;
    for (item, result) in items.iter().zip(results) {
        match result.and_then(|r| sink(item, r)) {
            Ok(line) => println!("{}: {line}", id(item)),
            Err(e) => {
                println!("{}: FAILED {e}", id(item));
                if !opts.keep_going {
                    return Err(e);
                }
                failed += 1;
            }
        }
    }
    if failed > 0 {
        log::warn!("{failed} of {} items failed", items.len());
    }
    Ok(items.len() - failed)
}

pub fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Param(format!("thread pool: {e}")))
}

/// Condition directories named directly or found one level below, as `(id, dir)`.
pub fn condition_dirs(paths: &[PathBuf]) -> Result<Vec<(String, PathBuf)>> {
    let name = |p: &Path| p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let mut out = Vec::new();
    for p in paths {
        if p.join("conditions.json").is_file() {
            out.push((name(p), p.clone()));
            continue;
        }
        if !p.is_dir() {
            return Err(Error::Dataset(format!("{} is not a condition directory", p.display())));
        }
        let mut subdirs: Vec<PathBuf> = std::fs::read_dir(p)
            .map_err(|e| Error::io(p, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|d| d.join("conditions.json").is_file())
            .collect();
        subdirs.sort();
        if subdirs.is_empty() {
            return Err(Error::Dataset(format!("no condition sets under {}", p.display())));
        }
        out.extend(subdirs.into_iter().map(|d| (name(&d), d)));
    }
    Ok(out)
}
