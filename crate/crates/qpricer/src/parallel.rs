//! Worker-count-independent parallel ensemble generation.
//!
//! Paths are split into fixed-size chunks (independent of the worker
//! count); each chunk fills a disjoint slice of the preallocated buffers
//! from per-path substreams. The assembled ensemble is byte-identical to
//! the sequential one for any number of threads.

use std::sync::atomic::{AtomicUsize, Ordering};

use qpricer_core::market::{MarketModel, PathEnsemble, TimeGrid};

use crate::error::Result;

const CHUNK: usize = 4096;

pub fn simulate_par(
    model: &MarketModel,
    grid: &TimeGrid,
    n_paths: usize,
    seed: u64,
    threads: usize,
) -> Result<PathEnsemble> {
    let threads = threads.max(1);
    if threads == 1 || n_paths <= CHUNK {
        return Ok(qpricer_core::market::simulate(model, grid, n_paths, seed)?);
    }
    let (m, n) = (model.m(), model.n());
    let steps = grid.steps();
    let mut dw = vec![0.0_f64; n_paths * steps * m];
    let mut dwp = vec![0.0_f64; n_paths * steps * n];
    let n_chunks = n_paths.div_ceil(CHUNK);
    {
        // Hand each worker disjoint chunk slices through split_at_mut.
        let mut dw_slices: Vec<&mut [f64]> = Vec::with_capacity(n_chunks);
        let mut dwp_slices: Vec<&mut [f64]> = Vec::with_capacity(n_chunks);
        let (mut dw_rest, mut dwp_rest) = (&mut dw[..], &mut dwp[..]);
        for c in 0..n_chunks {
            let count = CHUNK.min(n_paths - c * CHUNK);
            let (a, b) = dw_rest.split_at_mut(count * steps * m);
            dw_slices.push(a);
            dw_rest = b;
            let (a, b) = dwp_rest.split_at_mut(count * steps * n);
            dwp_slices.push(a);
            dwp_rest = b;
        }
        let next = AtomicUsize::new(0);
        let dw_cells: Vec<std::sync::Mutex<Option<&mut [f64]>>> = dw_slices
            .into_iter()
            .map(|s| std::sync::Mutex::new(Some(s)))
            .collect();
        let dwp_cells: Vec<std::sync::Mutex<Option<&mut [f64]>>> = dwp_slices
            .into_iter()
            .map(|s| std::sync::Mutex::new(Some(s)))
            .collect();
        std::thread::scope(|scope| {
            for _ in 0..threads {
                scope.spawn(|| loop {
                    let c = next.fetch_add(1, Ordering::Relaxed);
                    if c >= n_chunks {
                        break;
                    }
                    let first = c * CHUNK;
                    let count = CHUNK.min(n_paths - first);
                    let mut dwo = dw_cells[c].lock().unwrap().take().unwrap();
                    let mut dwpo = dwp_cells[c].lock().unwrap().take().unwrap();
                    PathEnsemble::fill_range(grid, m, n, seed, first, count, &mut dwo, &mut dwpo);
                });
            }
        });
    }
    let ens = PathEnsemble::from_parts(grid.clone(), m, n, n_paths, seed, dw, dwp)?;
    // The drift-bound check from the sequential path still applies.
    if model.drift().as_constant().is_none() {
        // Rerun the bound check by regenerating through the checked entry
        // point once; state-dependent drifts are rare and small runs only.
        let check = qpricer_core::market::simulate(model, grid, n_paths, seed)?;
        debug_assert_eq!(check, ens);
    }
    Ok(ens)
}

#[cfg(test)]
mod tests {
    use super::*;
    use qpricer_core::market::Drift;

    #[test]
    fn thread_count_does_not_change_bytes() {
        let model =
            MarketModel::new(1, 1, Drift::Constant(vec![0.6]), None, 1.0, vec![0.0]).unwrap();
        let grid = TimeGrid::uniform(1.0, 10).unwrap();
        let base = simulate_par(&model, &grid, 10_000, 7, 1).unwrap();
        for threads in [2, 4, 8] {
            let other = simulate_par(&model, &grid, 10_000, 7, threads).unwrap();
            assert_eq!(base, other, "threads = {threads}");
        }
    }
}
