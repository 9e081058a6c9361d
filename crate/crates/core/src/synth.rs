use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::points::PointSet;

/// Sample dimension of the synthetic Gaussian benchmark: P = N(0, I) and
/// Q = N(mu * 1, I) on R^10.
pub const BENCH_DIM: usize = 10;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a 64-bit substream seed by folding each tag into a splitmix64
/// chain: state starts at `seed` and absorbs one splitmix round per tag.
/// Substreams for distinct tag tuples are decorrelated, so runs of an
/// experiment are reproducible and order-independent.
pub fn mix_seed(seed: u64, tags: &[u64]) -> u64 {
    let mut state = seed;
    let mut out = splitmix64(&mut state);
    for &t in tags {
        state ^= t.wrapping_mul(0xD6E8_FEB8_6659_FD93);
        out = splitmix64(&mut state);
    }
    out
}

/// A ChaCha8 stream seeded from the mixed (seed, tags) value. ChaCha is
/// portable: the same seed yields the same stream on every platform.
pub fn substream(seed: u64, tags: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix_seed(seed, tags))
}

/// `count` points of N(shift * 1_dim, I_dim).
pub fn gaussian_points(rng: &mut ChaCha8Rng, count: usize, dim: usize, shift: f64) -> PointSet {
    let coords = DMatrix::<f64>::from_fn(dim, count, |_, _| {
        shift + rng.sample::<f64, _>(StandardNormal)
    });
    PointSet::from_matrix(coords).expect("generated coordinates are finite and non-empty")
}

/// The paired benchmark sample: X ~ N(0, I_dim) with n points and
/// Y ~ N(mu * 1_dim, I_dim) with m points, on independent substreams of
/// `seed`.
pub fn gen_pair(seed: u64, dim: usize, n: usize, m: usize, mu: f64) -> (PointSet, PointSet) {
    let mut rng_x = substream(seed, &[1]);
    let mut rng_y = substream(seed, &[2]);
    (
        gaussian_points(&mut rng_x, n, dim, 0.0),
        gaussian_points(&mut rng_y, m, dim, mu),
    )
}
