//! Shared fixtures for the benchmarks.

use smbo_core::objective::SyntheticKind;
use smbo_core::space::SearchSpace;
use smbo_core::SeedStream;

/// `n` random configurations on the mock-SER space with their noise-free
/// scores, encoded into the unit cube.
pub fn mock_ser_observations(n: usize, seed: u64) -> (SearchSpace, Vec<Vec<f64>>, Vec<f64>) {
    let space = SyntheticKind::MockSer.space();
    let mut rng = SeedStream::new(seed).rng();
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let c = space.sample(&mut rng);
        y.push(SyntheticKind::MockSer.score(&space.to_params(&c)).expect("sampled configs are valid"));
        x.push(space.encode(&c).expect("sampled configs are valid"));
    }
    (space, x, y)
}
