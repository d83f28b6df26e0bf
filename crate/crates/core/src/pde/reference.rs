//! Reference solutions: closed forms for the transport, logistic-reaction,
//! and standing-wave benchmarks, plus a gridded form for problems solved
//! numerically.
//!
//! Closed forms are wrapped as parameter-free analytic models so they can
//! stand in anywhere a learned model is expected (loss sanity tests run the
//! exact solution through the full training loss).

use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::io;
use crate::jet::Dual2;
use crate::models::analytic::AnalyticModel;

/// `u(x, t) = sin(x − beta t)`: the initial sine transported at speed
/// `beta` (periodic transport on (0, 2π)).
pub fn convection_reference(beta: f64) -> AnalyticModel {
    AnalyticModel::new(2, Arc::new(move |v: &[Dual2]| (v[0] - v[1].scale(beta)).sin()))
}

/// Gaussian bump initial profile centred at π with width π/4.
pub fn reaction_ic(x: f64) -> f64 {
    let s = std::f64::consts::PI / 4.0;
    let d = x - std::f64::consts::PI;
    (-d * d / (2.0 * s * s)).exp()
}

/// Logistic flow map applied pointwise to the initial profile:
/// `u = h e^{rho t} / (h e^{rho t} + 1 − h)` with `h = h(x)` the bump.
/// Each `x` evolves independently because the PDE has no spatial coupling.
pub fn reaction_reference(rho: f64) -> AnalyticModel {
    AnalyticModel::new(
        2,
        Arc::new(move |v: &[Dual2]| {
            let s = std::f64::consts::PI / 4.0;
            let d = v[0] - std::f64::consts::PI;
            let h = (-(d.sq()).scale(1.0 / (2.0 * s * s))).exp();
            let grow = h * (v[1].scale(rho)).exp();
            grow / (grow + 1.0 - h)
        }),
    )
}

/// Two standing modes of `u_tt = 4 u_xx` with fixed ends on (0, 1):
/// `u = sin(πx) cos(2πt) + ½ sin(3πx) cos(6πt)`.
pub fn wave_reference() -> AnalyticModel {
    let pi = std::f64::consts::PI;
    AnalyticModel::new(
        2,
        Arc::new(move |v: &[Dual2]| {
            (v[0].scale(pi)).sin() * (v[1].scale(2.0 * pi)).cos()
                + ((v[0].scale(3.0 * pi)).sin() * (v[1].scale(6.0 * pi)).cos()).scale(0.5)
        }),
    )
}

/// Uniform space–time grid of solution samples with bilinear evaluation.
/// Space may be periodic (samples cover one period, the right edge wraps
/// to the left); time is clamped to the sampled range.
#[derive(Debug, Clone)]
pub struct RefGrid {
    xs: Vec<f64>,
    ts: Vec<f64>,
    /// Row-major over time: `u[it * nx + ix]`.
    u: Vec<f64>,
    periodic_x: bool,
    /// Period length when `periodic_x` (grid covers `[xs[0], xs[0]+period)`).
    period: f64,
}

impl RefGrid {
    pub fn new(xs: Vec<f64>, ts: Vec<f64>, u: Vec<f64>, periodic_x: bool, period: f64) -> Result<Self> {
        if xs.len() < 2 || ts.len() < 2 {
            return Err(Error::config("reference grid needs at least 2x2 samples"));
        }
        if u.len() != xs.len() * ts.len() {
            return Err(Error::DimMismatch {
                what: "reference grid values",
                expected: xs.len() * ts.len(),
                got: u.len(),
            });
        }
        if xs.windows(2).any(|w| w[1] <= w[0]) || ts.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::config("reference grid axes must strictly increase"));
        }
        if periodic_x && period <= 0.0 {
            return Err(Error::config("periodic grid needs a positive period"));
        }
        Ok(RefGrid {
            xs,
            ts,
            u,
            periodic_x,
            period,
        })
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn ts(&self) -> &[f64] {
        &self.ts
    }

    pub fn values(&self) -> &[f64] {
        &self.u
    }

    pub fn at(&self, ix: usize, it: usize) -> f64 {
        self.u[it * self.xs.len() + ix]
    }

    fn bracket(axis: &[f64], v: f64) -> (usize, f64) {
        // clamped binary search: returns left index and the fractional
        // position inside [axis[i], axis[i+1]]
        if v <= axis[0] {
            return (0, 0.0);
        }
        let last = axis.len() - 1;
        if v >= axis[last] {
            return (last - 1, 1.0);
        }
        let mut lo = 0usize;
        let mut hi = last;
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if axis[mid] <= v {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        ((lo), (v - axis[lo]) / (axis[lo + 1] - axis[lo]))
    }

    /// Bilinear interpolation; x wraps when periodic, t clamps.
    pub fn eval(&self, x: f64, t: f64) -> f64 {
        let nx = self.xs.len();
        let (it, ft) = Self::bracket(&self.ts, t);
        let (ix0, ix1, fx) = if self.periodic_x {
            let x0 = self.xs[0];
            let mut xm = (x - x0).rem_euclid(self.period) + x0;
            // guard the rem landing exactly on the period boundary
            if xm >= x0 + self.period {
                xm = x0;
            }
            let dx = self.period / nx as f64;
            let pos = (xm - x0) / dx;
            let i = (pos.floor() as usize).min(nx - 1);
            ((i), ((i + 1) % nx), pos - i as f64)
        } else {
            let (i, f) = Self::bracket(&self.xs, x);
            (i, i + 1, f)
        };
        let fetch = |ix: usize, it: usize| self.u[it * nx + ix];
        let a = fetch(ix0, it) * (1.0 - fx) + fetch(ix1, it) * fx;
        let b = fetch(ix0, it + 1) * (1.0 - fx) + fetch(ix1, it + 1) * fx;
        a * (1.0 - ft) + b * ft
    }

    /// Write as "x,t,u" CSV (time-major rows) plus a JSON sidecar holding
    /// the grid shape, periodicity, and a content hash of the CSV.
    pub fn write(&self, csv_path: &Path) -> Result<()> {
        let rows = self.ts.iter().enumerate().flat_map(|(it, &t)| {
            self.xs
                .iter()
                .enumerate()
                .map(move |(ix, &x)| vec![x, t, self.u[it * self.xs.len() + ix]])
        });
        io::write_csv(csv_path, "x,t,u", rows)?;
        let hash = io::sha256_file(csv_path)?;
        let sidecar = serde_json::json!({
            "nx": self.xs.len(),
            "nt": self.ts.len(),
            "periodic_x": self.periodic_x,
            "period": self.period,
            "content_sha256": hash,
        });
        let side_path = csv_path.with_extension("json");
        std::fs::write(&side_path, serde_json::to_string_pretty(&sidecar)?)?;
        Ok(())
    }

    /// Read back a grid written by [`RefGrid::write`], verifying the
    /// sidecar hash before trusting the contents.
    pub fn read(csv_path: &Path) -> Result<Self> {
        let side_path = csv_path.with_extension("json");
        let sidecar: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&side_path)?)?;
        let want_hash = sidecar["content_sha256"]
            .as_str()
            .ok_or_else(|| Error::config("sidecar missing content hash"))?;
        let got_hash = io::sha256_file(csv_path)?;
        if want_hash != got_hash {
            return Err(Error::config(format!(
                "{}: content hash mismatch (file changed since the sidecar was written)",
                csv_path.display()
            )));
        }
        let (header, rows) = io::read_csv(csv_path)?;
        if header != "x,t,u" {
            return Err(Error::config(format!("unexpected header {header:?}")));
        }
        let nx = sidecar["nx"].as_u64().unwrap_or(0) as usize;
        let nt = sidecar["nt"].as_u64().unwrap_or(0) as usize;
        if rows.len() != nx * nt {
            return Err(Error::config("grid shape disagrees with sidecar"));
        }
        let xs: Vec<f64> = rows[..nx].iter().map(|r| r[0]).collect();
        let ts: Vec<f64> = (0..nt).map(|it| rows[it * nx][1]).collect();
        let u: Vec<f64> = rows.iter().map(|r| r[2]).collect();
        RefGrid::new(
            xs,
            ts,
            u,
            sidecar["periodic_x"].as_bool().unwrap_or(false),
            sidecar["period"].as_f64().unwrap_or(0.0),
        )
    }
}

/// A problem's reference solution: closed form or sampled grid.
#[derive(Debug, Clone)]
pub enum Reference {
    ClosedForm(AnalyticModel),
    Grid(Arc<RefGrid>),
}

impl Reference {
    pub fn eval(&self, x: f64, t: f64) -> f64 {
        match self {
            Reference::ClosedForm(m) => m.eval_value(&[x, t]),
            Reference::Grid(g) => g.eval(x, t),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bilinear_interpolation_is_exact_on_bilinear_data() {
        // u(x,t) = 2x + 3t + xt is reproduced exactly by bilinear patches
        let xs: Vec<f64> = (0..5).map(|i| i as f64 * 0.25).collect();
        let ts: Vec<f64> = (0..4).map(|i| i as f64 / 3.0).collect();
        let f = |x: f64, t: f64| 2.0 * x + 3.0 * t + x * t;
        let mut u = Vec::new();
        for &t in &ts {
            for &x in &xs {
                u.push(f(x, t));
            }
        }
        let g = RefGrid::new(xs, ts, u, false, 0.0).unwrap();
        for &(x, t) in &[(0.1, 0.2), (0.6, 0.9), (0.99, 0.01), (0.0, 1.0)] {
            assert!((g.eval(x, t) - f(x, t)).abs() < 1e-13, "at ({x},{t})");
        }
    }

    #[test]
    fn periodic_grid_wraps_the_right_edge_to_the_left() {
        // samples at x = 0, 0.5, 1.0, 1.5 with period 2: evaluating at
        // x = 1.75 interpolates between u(1.5) and u(0)
        let xs = vec![0.0, 0.5, 1.0, 1.5];
        let ts = vec![0.0, 1.0];
        let u = vec![1.0, 2.0, 3.0, 4.0, 1.0, 2.0, 3.0, 4.0];
        let g = RefGrid::new(xs, ts, u, true, 2.0).unwrap();
        let got = g.eval(1.75, 0.0);
        assert!((got - 2.5).abs() < 1e-13, "wrap midpoint: {got}");
        // exactly one period away reproduces the sample
        assert!((g.eval(2.0, 0.5) - 1.0).abs() < 1e-13);
    }

    #[test]
    fn grid_roundtrips_through_csv_with_hash_verification() {
        let dir = std::env::temp_dir().join(format!("refgrid_{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("grid.csv");
        let g = RefGrid::new(
            vec![0.0, 1.0],
            vec![0.0, 0.5, 1.0],
            vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6],
            false,
            0.0,
        )
        .unwrap();
        g.write(&path).unwrap();
        let back = RefGrid::read(&path).unwrap();
        assert_eq!(back.values(), g.values());
        assert_eq!(back.xs(), g.xs());
        // tampering must be detected
        std::fs::write(&path, "x,t,u\n0,0,999\n").unwrap();
        assert!(RefGrid::read(&path).is_err());
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn logistic_reference_solves_the_ode_along_time() {
        // finite-difference u_t against rho*u*(1-u) at a few points
        let m = reaction_reference(5.0);
        for &(x, t) in &[(2.0, 0.3), (3.5, 0.7), (4.4, 0.05)] {
            let h = 1e-6;
            let ut = (m.eval_value(&[x, t + h]) - m.eval_value(&[x, t - h])) / (2.0 * h);
            let u = m.eval_value(&[x, t]);
            assert!((ut - 5.0 * u * (1.0 - u)).abs() < 1e-7);
        }
    }
}
