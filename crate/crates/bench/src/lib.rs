//! Fixtures shared by the kernel benchmarks in `benches/`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use shadowlab::pseudo::random_pseudotrajectory;
use shadowlab::reparam::align::Matrix;
use shadowlab::{CatalogField, Flow, Point, Pseudotrajectory};

/// Dense random cost lattice with values in `[0, 1)`.
pub fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Matrix((0..rows).map(|_| (0..cols).map(|_| rng.gen()).collect()).collect())
}

/// A seeded `blocks`-block pseudotrajectory on the limit-cycle field.
pub fn limit_cycle_pseudo(blocks: usize, d: f64, seed: u64) -> (Flow, Pseudotrajectory) {
    let flow = Flow::catalog(CatalogField::LimitCycle);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xi = random_pseudotrajectory(&flow, Point::new(0.8, 0.3), 1.0, blocks, d, &mut rng)
        .expect("fixture pseudotrajectory");
    (flow, xi)
}
