//! Consistency sweeps on a bounded pool of worker threads.

use std::num::NonZeroUsize;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;

use lpvssa_core::identify::{sweep_cell, SweepCell};
use lpvssa_core::{GeneratorSettings, IdentifyConfig, LpvSsaModel};

/// Default worker count: the available parallelism.
pub fn default_workers() -> usize {
    thread::available_parallelism().map_or(1, NonZeroUsize::get)
}

/// Same cells, in the same order, as the sequential sweep; cells run concurrently.
pub fn parallel_sweep(
    model: &LpvSsaModel,
    sample_sizes: &[usize],
    seeds: &[u64],
    settings: &GeneratorSettings,
    config: &IdentifyConfig,
    workers: usize,
) -> Vec<SweepCell> {
    let jobs: Vec<(usize, u64)> = sample_sizes
        .iter()
        .flat_map(|&n| seeds.iter().map(move |&s| (n, s)))
        .collect();
    let results: Mutex<Vec<Option<SweepCell>>> = Mutex::new(vec![None; jobs.len()]);
    let next = AtomicUsize::new(0);
    thread::scope(|scope| {
        for _ in 0..workers.clamp(1, jobs.len().max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(&(n, seed)) = jobs.get(i) else { break };
                let cell = sweep_cell(model, n, seed, settings, config);
                results.lock().expect("no worker panicked")[i] = Some(cell);
            });
        }
    });
    results
        .into_inner()
        .expect("no worker panicked")
        .into_iter()
        .map(|c| c.expect("every job ran"))
        .collect()
}
