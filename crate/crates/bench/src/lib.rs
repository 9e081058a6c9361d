//! Shared fixtures for the microbenchmarks.

use std::sync::Arc;

use kulsif::kernel::{gram_blocks, GramBlocks};
use kulsif::synth::{gaussian_points, substream};
use kulsif::{KernelSpec, PointSet};

/// A paired sample of the 10-d Gaussian-shift benchmark.
pub fn bench_pair(seed: u64, n: usize, m: usize) -> (PointSet, PointSet) {
    let mut rng_x = substream(seed, &[1]);
    let mut rng_y = substream(seed, &[2]);
    (
        gaussian_points(&mut rng_x, n, 10, 0.0),
        gaussian_points(&mut rng_y, m, 10, 0.5),
    )
}

/// Kernel blocks for a paired sample at a fixed bandwidth.
pub fn bench_blocks(seed: u64, n: usize, m: usize, sigma: f64) -> Arc<GramBlocks> {
    let (x, y) = bench_pair(seed, n, m);
    let spec = KernelSpec::gaussian(sigma).unwrap();
    Arc::new(gram_blocks(&spec, &x, &y).unwrap())
}
