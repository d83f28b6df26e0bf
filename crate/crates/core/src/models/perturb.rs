//! Multi-scale input perturbations for region pooling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Scale ladder for region pooling: per scale `r`, `counts[r]` offsets
/// drawn uniformly from the box `[-sizes[r], sizes[r]]^dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionSpec {
    pub sizes: Vec<f64>,
    pub counts: Vec<usize>,
}

impl RegionSpec {
    /// Default ladder: radii `(0.01, 0.05, 0.09)` with `(2r+1)^dim` points
    /// per scale — 9/25/49 for one space dimension plus time.
    pub fn default_for_dim(dim: usize) -> Self {
        let sizes = vec![0.01, 0.05, 0.09];
        let counts = (1..=3usize)
            .map(|r| (2 * r + 1).pow(dim as u32))
            .collect();
        RegionSpec { sizes, counts }
    }

    pub fn num_scales(&self) -> usize {
        self.sizes.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.sizes.is_empty() {
            return Err(Error::config("region spec needs at least one scale"));
        }
        if self.sizes.len() != self.counts.len() {
            return Err(Error::config(
                "region spec sizes and counts must have equal length",
            ));
        }
        if self.counts.iter().any(|&k| k == 0) {
            return Err(Error::config("region scale with zero points"));
        }
        if self.sizes.iter().any(|&r| !(r >= 0.0) || !r.is_finite()) {
            return Err(Error::config("region sizes must be finite and nonnegative"));
        }
        Ok(())
    }
}

/// One concrete draw of all perturbation offsets, regenerable bit-exactly
/// from `(seed, stream)`. Training uses `stream = iteration + 1`;
/// evaluation and diagnostics use `stream = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationBatch {
    dim: usize,
    seed: u64,
    stream: u64,
    /// Per scale: `counts[r] * dim` offsets, point-major.
    scales: Vec<Vec<f64>>,
}

impl PerturbationBatch {
    pub fn sample(dim: usize, spec: &RegionSpec, seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let scales = spec
            .sizes
            .iter()
            .zip(&spec.counts)
            .map(|(&radius, &k)| {
                (0..k * dim)
                    .map(|_| (2.0 * rng.gen::<f64>() - 1.0) * radius)
                    .collect()
            })
            .collect();
        PerturbationBatch {
            dim,
            seed,
            stream,
            scales,
        }
    }

    /// All-zero offsets with the given shape (the degenerate batch in which
    /// region pooling reproduces the point representation exactly).
    pub fn zeros(dim: usize, spec: &RegionSpec) -> Self {
        PerturbationBatch {
            dim,
            seed: 0,
            stream: 0,
            scales: spec.counts.iter().map(|&k| vec![0.0; k * dim]).collect(),
        }
    }

    /// Wrap explicit offsets (each scale `k * dim`, point-major). Useful
    /// for controlled experiments with hand-placed companions.
    pub fn from_offsets(dim: usize, scales: Vec<Vec<f64>>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::config("perturbation batch needs dim >= 1"));
        }
        if scales.iter().any(|s| s.is_empty() || s.len() % dim != 0) {
            return Err(Error::config(
                "each scale needs a positive multiple of dim offsets",
            ));
        }
        Ok(PerturbationBatch {
            dim,
            seed: 0,
            stream: 0,
            scales,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    pub fn num_scales(&self) -> usize {
        self.scales.len()
    }

    pub fn count(&self, scale: usize) -> usize {
        self.scales[scale].len() / self.dim
    }

    /// Offsets of one scale, point-major (`k * dim`).
    pub fn offsets(&self, scale: usize) -> &[f64] {
        &self.scales[scale]
    }

    pub fn offset(&self, scale: usize, i: usize) -> &[f64] {
        &self.scales[scale][i * self.dim..(i + 1) * self.dim]
    }

    /// Fraction of perturbed companions of `points` that leave the box
    /// `bounds` (per-axis `(lo, hi)`). Reported per run; the model itself
    /// is defined on all of `R^dim`, so nothing is clamped.
    pub fn fraction_outside(&self, bounds: &[(f64, f64)], points: &crate::points::Points) -> f64 {
        let mut outside = 0usize;
        let mut total = 0usize;
        for p in points.iter() {
            for s in 0..self.num_scales() {
                for i in 0..self.count(s) {
                    let d = self.offset(s, i);
                    total += 1;
                    let out = (0..self.dim)
                        .any(|a| p[a] + d[a] < bounds[a].0 || p[a] + d[a] > bounds[a].1);
                    if out {
                        outside += 1;
                    }
                }
            }
        }
        if total == 0 {
            0.0
        } else {
            outside as f64 / total as f64
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_ladder_counts() {
        let spec = RegionSpec::default_for_dim(2);
        assert_eq!(spec.sizes, vec![0.01, 0.05, 0.09]);
        assert_eq!(spec.counts, vec![9, 25, 49]);
    }

    #[test]
    fn offsets_respect_bounds_and_reproduce() {
        let spec = RegionSpec::default_for_dim(2);
        let a = PerturbationBatch::sample(2, &spec, 42, 7);
        let b = PerturbationBatch::sample(2, &spec, 42, 7);
        assert_eq!(a, b, "same (seed, stream) must regenerate bit-exactly");
        let c = PerturbationBatch::sample(2, &spec, 42, 8);
        assert_ne!(a, c, "different stream must differ");
        for (r, &radius) in spec.sizes.iter().enumerate() {
            assert!(a.offsets(r).iter().all(|d| d.abs() <= radius));
            assert_eq!(a.count(r), spec.counts[r]);
        }
    }

    #[test]
    fn out_of_domain_fraction_counts_correctly() {
        let spec = RegionSpec {
            sizes: vec![1.0],
            counts: vec![1],
        };
        let mut batch = PerturbationBatch::zeros(1, &spec);
        batch.scales[0][0] = 0.5;
        let pts = crate::points::Points::new(1, vec![0.2, 0.9]).unwrap();
        // 0.2 + 0.5 = 0.7 inside, 0.9 + 0.5 = 1.4 outside
        let f = batch.fraction_outside(&[(0.0, 1.0)], &pts);
        assert_eq!(f, 0.5);
    }
}
