//! Seeded inputs shared by the benchmarks.

use imuon_core::manifolds::ManifoldDims;
use imuon_core::{sample, DenseMatrix, ManifoldPoint};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// A random point and Euclidean gradient with the given dimensions.
pub fn fixture(dims: &ManifoldDims, seed: u64) -> (ManifoldPoint, DenseMatrix) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = sample::point(&mut rng, dims);
    let g = sample::egrad(&mut rng, dims);
    (x, g)
}

/// Small and medium instances of every manifold.
pub fn standard_dims() -> Vec<(String, ManifoldDims)> {
    vec![
        ("fixed-rank/200x200r5".into(), ManifoldDims::fixed_rank(200, 200, 5)),
        ("fixed-rank/500x300r20".into(), ManifoldDims::fixed_rank(500, 300, 20)),
        ("spd/8".into(), ManifoldDims::spd(8)),
        ("spd/64".into(), ManifoldDims::spd(64)),
        ("stiefel/64x8".into(), ManifoldDims::stiefel(64, 8)),
        ("grassmann/64x8".into(), ManifoldDims::grassmann(64, 8)),
    ]
}
