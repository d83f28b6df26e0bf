//! Collocation point generation: full-grid or uniform-random sampling of
//! the space–time rectangle, with initial and boundary subsets extracted
//! from the domain faces.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::points::Points;

use super::{BoundaryCondition, PdeProblem};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum CollocationSpec {
    /// Equispaced including the domain edges.
    Grid { nx: usize, nt: usize },
    /// `n` uniform interior samples; face subsets get `ceil(sqrt(n))`
    /// samples each, all reproducible from the seed.
    Random { n: usize, seed: u64 },
}

/// Boundary constraints in sampled form.
#[derive(Debug, Clone)]
pub enum BoundaryPoints {
    /// Pin `u` to a value at explicit points.
    Dirichlet { points: Points, value: f64 },
    /// Tie `u(a_i) = u(b_i)` (and optionally the spatial derivative too).
    Pairs {
        a: Points,
        b: Points,
        with_derivative: bool,
    },
}

impl BoundaryPoints {
    /// The count `n_bc` that normalizes the boundary loss term: number of
    /// points for Dirichlet, number of pairings otherwise.
    pub fn weight_count(&self) -> usize {
        match self {
            BoundaryPoints::Dirichlet { points, .. } => points.len(),
            BoundaryPoints::Pairs { a, .. } => a.len(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct CollocationSet {
    /// Residual points (the full grid, edges included, for grid specs).
    pub residual: Points,
    /// Points on the `t = t_lo` face.
    pub initial: Points,
    pub boundary: BoundaryPoints,
    /// Human-readable generation descriptor, echoed into outputs.
    pub descriptor: String,
}

impl CollocationSet {
    pub fn counts(&self) -> (usize, usize, usize) {
        (
            self.residual.len(),
            self.initial.len(),
            self.boundary.weight_count(),
        )
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    // hit both endpoints exactly
    (0..n)
        .map(|i| {
            if i == n - 1 {
                hi
            } else {
                lo + (hi - lo) * i as f64 / (n - 1) as f64
            }
        })
        .collect()
}

pub fn sample_collocation(problem: &PdeProblem, spec: &CollocationSpec) -> Result<CollocationSet> {
    let (x_lo, x_hi) = problem.x_bounds();
    let (t_lo, t_hi) = problem.t_bounds();
    match *spec {
        CollocationSpec::Grid { nx, nt } => {
            if nx < 2 || nt < 2 {
                return Err(Error::config("collocation grid needs at least 2 per axis"));
            }
            let xs = linspace(x_lo, x_hi, nx);
            let ts = linspace(t_lo, t_hi, nt);
            let mut residual = Vec::with_capacity(2 * nx * nt);
            for &t in &ts {
                for &x in &xs {
                    residual.extend_from_slice(&[x, t]);
                }
            }
            let mut initial = Vec::with_capacity(2 * nx);
            for &x in &xs {
                initial.extend_from_slice(&[x, t_lo]);
            }
            let boundary = make_boundary(problem.bc, &ts, x_lo, x_hi)?;
            Ok(CollocationSet {
                residual: Points::new(2, residual)?,
                initial: Points::new(2, initial)?,
                boundary,
                descriptor: format!("grid({nx},{nt})"),
            })
        }
        CollocationSpec::Random { n, seed } => {
            if n == 0 {
                return Err(Error::config("random collocation needs n >= 1"));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut residual = Vec::with_capacity(2 * n);
            for _ in 0..n {
                let x = x_lo + (x_hi - x_lo) * rng.gen::<f64>();
                let t = t_lo + (t_hi - t_lo) * rng.gen::<f64>();
                residual.extend_from_slice(&[x, t]);
            }
            let n_face = (n as f64).sqrt().ceil() as usize;
            let mut initial = Vec::with_capacity(2 * n_face);
            for _ in 0..n_face {
                let x = x_lo + (x_hi - x_lo) * rng.gen::<f64>();
                initial.extend_from_slice(&[x, t_lo]);
            }
            let ts: Vec<f64> = (0..n_face)
                .map(|_| t_lo + (t_hi - t_lo) * rng.gen::<f64>())
                .collect();
            let boundary = make_boundary(problem.bc, &ts, x_lo, x_hi)?;
            Ok(CollocationSet {
                residual: Points::new(2, residual)?,
                initial: Points::new(2, initial)?,
                boundary,
                descriptor: format!("random({n},seed={seed})"),
            })
        }
    }
}

fn make_boundary(
    bc: BoundaryCondition,
    ts: &[f64],
    x_lo: f64,
    x_hi: f64,
) -> Result<BoundaryPoints> {
    match bc {
        BoundaryCondition::Dirichlet { value } => {
            let mut data = Vec::with_capacity(4 * ts.len());
            for &t in ts {
                data.extend_from_slice(&[x_lo, t]);
            }
            for &t in ts {
                data.extend_from_slice(&[x_hi, t]);
            }
            Ok(BoundaryPoints::Dirichlet {
                points: Points::new(2, data)?,
                value,
            })
        }
        BoundaryCondition::Periodic | BoundaryCondition::PeriodicWithDerivative => {
            let mut a = Vec::with_capacity(2 * ts.len());
            let mut b = Vec::with_capacity(2 * ts.len());
            for &t in ts {
                a.extend_from_slice(&[x_lo, t]);
                b.extend_from_slice(&[x_hi, t]);
            }
            Ok(BoundaryPoints::Pairs {
                a: Points::new(2, a)?,
                b: Points::new(2, b)?,
                with_derivative: matches!(bc, BoundaryCondition::PeriodicWithDerivative),
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pde::{convection, wave, AXIS_T, AXIS_X};

    #[test]
    fn standard_grid_produces_the_published_counts() {
        let set = sample_collocation(
            &convection(),
            &CollocationSpec::Grid { nx: 101, nt: 101 },
        )
        .unwrap();
        let (n_res, n_ic, n_bc) = set.counts();
        assert_eq!(n_res, 10201);
        assert_eq!(n_ic, 101);
        assert_eq!(n_bc, 101, "periodic boundaries count pairings");
    }

    #[test]
    fn minimal_grid_is_the_four_corners() {
        let p = convection();
        let set = sample_collocation(&p, &CollocationSpec::Grid { nx: 2, nt: 2 }).unwrap();
        assert_eq!(set.residual.len(), 4);
        let (x_hi, t_hi) = (p.x_bounds().1, p.t_bounds().1);
        let corners: Vec<&[f64]> = set.residual.iter().collect();
        assert_eq!(corners[0], &[0.0, 0.0]);
        assert_eq!(corners[3], &[x_hi, t_hi]);
    }

    #[test]
    fn grids_hit_domain_edges_exactly() {
        let p = convection();
        let set = sample_collocation(&p, &CollocationSpec::Grid { nx: 7, nt: 5 }).unwrap();
        let (x_hi, t_hi) = (p.x_bounds().1, p.t_bounds().1);
        let last = set.residual.get(set.residual.len() - 1);
        assert_eq!(last[AXIS_X], x_hi, "no floating-point drift at the edge");
        assert_eq!(last[AXIS_T], t_hi);
    }

    #[test]
    fn dirichlet_problems_get_points_not_pairs() {
        let set = sample_collocation(&wave(), &CollocationSpec::Grid { nx: 11, nt: 9 }).unwrap();
        match &set.boundary {
            BoundaryPoints::Dirichlet { points, value } => {
                assert_eq!(points.len(), 18, "both ends, every time sample");
                assert_eq!(*value, 0.0);
            }
            _ => panic!("wave has fixed ends"),
        }
    }

    #[test]
    fn random_sampling_is_reproducible_and_in_bounds() {
        let p = convection();
        let spec = CollocationSpec::Random { n: 64, seed: 17 };
        let a = sample_collocation(&p, &spec).unwrap();
        let b = sample_collocation(&p, &spec).unwrap();
        assert_eq!(a.residual.data(), b.residual.data());
        let (x_lo, x_hi) = p.x_bounds();
        for pt in a.residual.iter() {
            assert!(pt[AXIS_X] >= x_lo && pt[AXIS_X] <= x_hi);
        }
    }

    #[test]
    fn degenerate_grids_are_rejected() {
        assert!(
            sample_collocation(&convection(), &CollocationSpec::Grid { nx: 1, nt: 5 }).is_err()
        );
    }
}
