//! Owen-scrambled Sobol points on the unit cube, seeded per run.

use crate::seed::SeedStream;

/// Largest supported point index (exclusive).
pub const MAX_POINTS: u32 = 1 << 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SobolDesign {
    dim: usize,
    seed: u32,
}

impl SobolDesign {
    /// # Panics
    ///
    /// If `dim` exceeds the generator's 256 dimensions.
    pub fn new(dim: usize, stream: SeedStream) -> Self {
        assert!(dim as u32 <= sobol_burley::NUM_DIMENSIONS, "Sobol design supports at most 256 dimensions");
        SobolDesign { dim, seed: stream.seed_u32() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// The `index`-th point; coordinates lie in `[0, 1)`.
    pub fn point(&self, index: u32) -> Vec<f64> {
        assert!(index < MAX_POINTS, "Sobol index {index} out of range");
        (0..self.dim as u32).map(|d| f64::from(sobol_burley::sample(index, d, self.seed))).collect()
    }

    pub fn points(&self, n: usize) -> Vec<Vec<f64>> {
        (0..n as u32).map(|i| self.point(i)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_power_of_two_points_are_stratified() {
        for seed in 0..5 {
            let d = SobolDesign::new(4, SeedStream::new(seed));
            for m in [3u32, 5, 8] {
                let n = 1usize << m;
                let pts = d.points(n);
                for dim in 0..4 {
                    let mut hit = vec![false; n];
                    for p in &pts {
                        assert!((0.0..1.0).contains(&p[dim]));
                        hit[(p[dim] * n as f64) as usize] = true;
                    }
                    assert!(hit.iter().all(|h| *h), "seed {seed}, 2^{m} points, dim {dim}");
                }
            }
        }
    }

    #[test]
    fn seeds_change_the_scramble() {
        let a = SobolDesign::new(2, SeedStream::new(1)).points(4);
        let b = SobolDesign::new(2, SeedStream::new(2)).points(4);
        assert_ne!(a, b);
        assert_eq!(a, SobolDesign::new(2, SeedStream::new(1)).points(4));
    }
}
