//! One-dimensional FEM on hat functions, solved by Jacobi iteration.
//!
//! This is the classical-numerics mirror of propagation failure: for
//! `-u'' = f` on `(0,1)` with zero boundary values, the weak form over hat
//! functions yields a tridiagonal stiffness matrix whose entries vanish
//! whenever two basis functions do not overlap,
//!
//! ```text
//! D(psi_i, psi_j) = 0 for |i - j| > 1 ,   diagonal 2/h, off-diagonal -1/h ,
//! ```
//!
//! so one Jacobi sweep
//!
//! ```text
//! u_j <- ( b_j - sum_{i != j} D(psi_i, psi_j) u_i ) / D(psi_j, psi_j)
//! ```
//!
//! moves information exactly one node per iteration: starting from zero,
//! a load supported at a single node produces iterates that are *exactly*
//! zero beyond `k` hops after `k` sweeps. That is the propagation picture
//! the gradient-correlation diagnostics measure for networks, in a setting
//! where it is a bitwise statement rather than a statistic.
//!
//! Loads use per-element midpoint quadrature. On a hat's two elements the
//! midpoint errors are equal and opposite for any linear `f`, so the
//! assembled `b_j` is exact (and equals `h * f(x_j)`) whenever `f` is
//! piecewise linear with breaks only at nodes.
//!
//! [`solve`] stops on a certified error bound, not the raw update: the
//! contraction factor `rho` is estimated from the geometric trend of the
//! last ten update norms and iteration continues until
//! `update * rho / (1 - rho) < tol`. Stopping on `update < tol` alone
//! would leave an error of `update / (1 - rho)` — two hundred times the
//! tolerance on a 31-node mesh — which is the classic stationary-solver
//! pitfall.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::io;

#[derive(Debug, Clone)]
pub struct HatBasisMesh {
    /// Node spacing `1/(n+1)`; interior node `j` (1-based) sits at `j*h`.
    h: f64,
    diag: Vec<f64>,
    /// `off[j]` couples interior nodes `j` and `j+1` (0-based).
    off: Vec<f64>,
    load: Vec<f64>,
}

impl HatBasisMesh {
    pub fn n(&self) -> usize {
        self.diag.len()
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// Coordinate of interior node `j` (0-based storage, so `(j+1)*h`).
    pub fn node(&self, j: usize) -> f64 {
        (j + 1) as f64 * self.h
    }

    /// `D(psi_i, psi_j)`; zero whenever the hats do not overlap.
    pub fn stiffness(&self, i: usize, j: usize) -> f64 {
        if i == j {
            self.diag[i]
        } else if i.abs_diff(j) == 1 {
            self.off[i.min(j)]
        } else {
            0.0
        }
    }

    pub fn load(&self) -> &[f64] {
        &self.load
    }

    /// Direct tridiagonal solve (Thomas algorithm). Serves as the
    /// fixed-point oracle for the iterative path; never used inside it.
    pub fn direct_solve(&self) -> Vec<f64> {
        let n = self.n();
        let mut c = vec![0.0; n];
        let mut d = vec![0.0; n];
        c[0] = if n > 1 { self.off[0] / self.diag[0] } else { 0.0 };
        d[0] = self.load[0] / self.diag[0];
        for j in 1..n {
            let denom = self.diag[j] - self.off[j - 1] * c[j - 1];
            if j < n - 1 {
                c[j] = self.off[j] / denom;
            }
            d[j] = (self.load[j] - self.off[j - 1] * d[j - 1]) / denom;
        }
        let mut u = d;
        for j in (0..n.saturating_sub(1)).rev() {
            let next = u[j + 1];
            u[j] -= c[j] * next;
        }
        u
    }
}

/// Assemble the weak form of `-u'' = f` on `n` uniformly spaced interior
/// nodes with homogeneous Dirichlet boundaries.
pub fn assemble(n: usize, f: impl Fn(f64) -> f64) -> Result<HatBasisMesh> {
    if n == 0 {
        return Err(Error::config("assemble: need at least one interior node"));
    }
    let h = 1.0 / (n + 1) as f64;
    let diag = vec![2.0 / h; n];
    let off = vec![-1.0 / h; n - 1];
    let mut load = Vec::with_capacity(n);
    for j in 0..n {
        let x = (j + 1) as f64 * h;
        load.push(0.5 * h * (f(x - 0.5 * h) + f(x + 0.5 * h)));
    }
    Ok(HatBasisMesh { h, diag, off, load })
}

/// Same stiffness as [`assemble`], but the load is concentrated on one
/// interior node — the cleanest probe of hop-by-hop propagation.
pub fn assemble_point_load(n: usize, source: usize, strength: f64) -> Result<HatBasisMesh> {
    let mut mesh = assemble(n, |_| 0.0)?;
    if source >= n {
        return Err(Error::config(format!(
            "assemble_point_load: source node {source} out of range for n = {n}"
        )));
    }
    mesh.load[source] = strength;
    Ok(mesh)
}

/// One Jacobi sweep. Slice length must equal the node count.
pub fn jacobi_iterate(mesh: &HatBasisMesh, u: &[f64]) -> Vec<f64> {
    let n = mesh.n();
    assert_eq!(u.len(), n, "iterate length must match the mesh");
    let mut next = Vec::with_capacity(n);
    for j in 0..n {
        let mut s = 0.0;
        if j > 0 {
            s += mesh.off[j - 1] * u[j - 1];
        }
        if j + 1 < n {
            s += mesh.off[j] * u[j + 1];
        }
        next.push((mesh.load[j] - s) / mesh.diag[j]);
    }
    next
}

/// How the update norms certify convergence; see [`solve`].
const RHO_WINDOW: usize = 10;
const GROWTH_LIMIT: usize = 10;
const MAX_ITERS: usize = 10_000_000;

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub solution: Vec<f64>,
    /// Number of Jacobi sweeps applied.
    pub iterations: usize,
    /// Per sweep: the largest index distance from the load support among
    /// nodes with (exactly) nonzero value. Nondecreasing, steps of at most
    /// one — tridiagonal locality in executable form.
    pub front_trace: Vec<usize>,
    /// The iterate after each sweep; `history.len() == iterations`.
    pub history: Vec<Vec<f64>>,
}

impl SolveReport {
    /// Export the iteration history as CSV `iter,node,value` (1-based sweep
    /// and interior-node indices).
    pub fn write_trace_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(file);
        w.write_all(b"iter,node,value\n")?;
        for (it, snap) in self.history.iter().enumerate() {
            for (j, v) in snap.iter().enumerate() {
                writeln!(w, "{},{},{}", it + 1, j + 1, io::fmt_f64(*v))?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Jacobi-iterate from zero until the contraction-certified error bound
/// drops below `tol`.
///
/// The bound uses `rho` estimated as the geometric mean update ratio over
/// the last [`RHO_WINDOW`] sweeps: while the iteration contracts, the true
/// error is at most `update * rho / (1 - rho)`, so stopping there leaves at
/// most `tol` of iteration error. When updates reach the rounding floor the
/// ratio estimate touches one; at that point no further progress is
/// possible and any update already below `tol` is accepted. An exactly zero
/// update means a bitwise fixed point. Updates that grow [`GROWTH_LIMIT`]
/// sweeps in a row abort with a divergence error — impossible for the
/// assembled (diagonally dominant) problem, but the guard keeps doctored
/// inputs from spinning.
pub fn solve(mesh: &HatBasisMesh, tol: f64) -> Result<SolveReport> {
    if !tol.is_finite() || tol <= 0.0 {
        return Err(Error::config("solve: tolerance must be finite and positive"));
    }
    let support: Vec<usize> = (0..mesh.n())
        .filter(|&j| mesh.load[j] != 0.0)
        .collect();
    let mut u = vec![0.0; mesh.n()];
    let mut history = Vec::new();
    let mut front_trace = Vec::new();
    let mut updates: Vec<f64> = Vec::new();
    let mut growth_run = 0usize;
    loop {
        let next = jacobi_iterate(mesh, &u);
        let update = u
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        u = next;
        front_trace.push(front(&u, &support));
        history.push(u.clone());

        if let Some(&prev) = updates.last() {
            growth_run = if update > prev { growth_run + 1 } else { 0 };
            if growth_run >= GROWTH_LIMIT {
                return Err(Error::config(format!(
                    "solve: update norm grew {GROWTH_LIMIT} sweeps in a row \
                     (last {update:.3e}); Jacobi is diverging"
                )));
            }
        }
        updates.push(update);

        if update == 0.0 {
            break;
        }
        if updates.len() > RHO_WINDOW {
            let old = updates[updates.len() - 1 - RHO_WINDOW];
            if old > 0.0 {
                let rho = (update / old).powf(1.0 / RHO_WINDOW as f64);
                if rho < 1.0 {
                    if update * rho / (1.0 - rho) < tol {
                        break;
                    }
                } else if update < tol {
                    break;
                }
            }
        }
        if history.len() >= MAX_ITERS {
            return Err(Error::config(format!(
                "solve: no convergence within {MAX_ITERS} sweeps"
            )));
        }
    }
    Ok(SolveReport {
        iterations: history.len(),
        solution: u,
        front_trace,
        history,
    })
}

/// Largest distance from the load support among exactly-nonzero nodes.
/// Zero for an all-zero iterate or an empty support.
fn front(u: &[f64], support: &[usize]) -> usize {
    if support.is_empty() {
        return 0;
    }
    let mut best = 0usize;
    for (j, &v) in u.iter().enumerate() {
        if v != 0.0 {
            let d = support.iter().map(|&s| s.abs_diff(j)).min().unwrap();
            best = best.max(d);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_assembly_for_a_single_node() {
        let mesh = assemble(1, |_| 1.0).unwrap();
        assert_eq!(mesh.h(), 0.5);
        assert_eq!(mesh.stiffness(0, 0), 4.0);
        assert_eq!(mesh.load(), &[0.5]);
        assert_eq!(mesh.direct_solve(), vec![0.125]);
        let report = solve(&mesh, 1e-12).unwrap();
        assert_eq!(report.solution, vec![0.125], "x(1-x)/2 at the midpoint");
        assert!(report.iterations <= 2, "diagonal system: first sweep is exact");
    }

    #[test]
    fn zero_load_solves_to_zero_immediately() {
        let mesh = assemble(9, |_| 0.0).unwrap();
        let report = solve(&mesh, 1e-12).unwrap();
        assert!(report.solution.iter().all(|&v| v == 0.0));
        assert_eq!(report.iterations, 1);
        assert_eq!(report.front_trace, vec![0]);
    }

    #[test]
    fn stiffness_is_symmetric_and_vanishes_beyond_neighbors() {
        let mesh = assemble(7, |x| x * x).unwrap();
        let h = mesh.h();
        for i in 0..7 {
            for j in 0..7 {
                assert_eq!(mesh.stiffness(i, j), mesh.stiffness(j, i));
                match i.abs_diff(j) {
                    0 => assert_eq!(mesh.stiffness(i, j), 2.0 / h),
                    1 => assert_eq!(mesh.stiffness(i, j), -1.0 / h),
                    _ => assert_eq!(mesh.stiffness(i, j), 0.0),
                }
            }
        }
    }

    #[test]
    fn midpoint_loads_are_exact_for_linear_sources() {
        // Per hat, the two element-midpoint errors cancel for linear f, so
        // b_j = h * f(x_j) exactly (which is also the true integral).
        let mesh = assemble(8, |x| 2.0 * x + 1.0).unwrap();
        let h = mesh.h();
        for j in 0..8 {
            let want = h * (2.0 * mesh.node(j) + 1.0);
            let got = mesh.load()[j];
            assert!(
                (got - want).abs() <= 1e-15 * want.abs(),
                "node {j}: {got} vs {want}"
            );
        }
    }

    #[test]
    fn first_sweep_from_zero_scales_the_load_by_half_h() {
        let mesh = assemble(5, |_| 1.0).unwrap();
        let u1 = jacobi_iterate(&mesh, &[0.0; 5]);
        let h = mesh.h();
        for (j, &v) in u1.iter().enumerate() {
            assert_eq!(v, mesh.load()[j] * h / 2.0, "node {j}");
        }
    }

    #[test]
    fn the_direct_solution_is_a_jacobi_fixed_point() {
        let mesh = assemble(9, |x| x * x).unwrap();
        let direct = mesh.direct_solve();
        let once = jacobi_iterate(&mesh, &direct);
        let drift = direct
            .iter()
            .zip(&once)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(drift < 1e-14, "fixed point drifted by {drift}");
    }

    #[test]
    fn thirty_one_nodes_match_the_analytic_parabola() {
        let mesh = assemble(31, |_| 1.0).unwrap();
        let report = solve(&mesh, 1e-12).unwrap();
        let mut worst = 0.0f64;
        for j in 0..31 {
            let x = mesh.node(j);
            let exact = x * (1.0 - x) / 2.0;
            worst = worst.max((report.solution[j] - exact).abs());
        }
        assert!(worst < 1e-10, "max nodal error {worst}");
        // Hat-basis nodal values are exact for this operator, so the direct
        // solve must agree with the analytic curve even more tightly.
        let direct = mesh.direct_solve();
        for j in 0..31 {
            let x = mesh.node(j);
            assert!((direct[j] - x * (1.0 - x) / 2.0).abs() < 1e-14);
        }
    }

    #[test]
    fn point_loads_stay_exactly_zero_beyond_k_hops() {
        let n = 21;
        let source = 10;
        let mesh = assemble_point_load(n, source, 1.0).unwrap();
        let mut u = vec![0.0; n];
        for k in 1..=5usize {
            u = jacobi_iterate(&mesh, &u);
            for (j, &v) in u.iter().enumerate() {
                if source.abs_diff(j) > k {
                    assert_eq!(v, 0.0, "sweep {k} leaked to node {j}");
                }
            }
            assert_ne!(u[source], 0.0);
        }
    }

    #[test]
    fn the_front_advances_at_most_one_node_per_sweep() {
        let mesh = assemble_point_load(21, 10, 1.0).unwrap();
        let report = solve(&mesh, 1e-10).unwrap();
        let trace = &report.front_trace;
        assert_eq!(trace[0], 0, "first sweep touches only the source");
        for w in trace.windows(2) {
            assert!(w[1] == w[0] || w[1] == w[0] + 1, "front jumped: {w:?}");
        }
        assert_eq!(*trace.last().unwrap(), 10, "front reached both walls");
    }

    #[test]
    fn divergence_is_reported_instead_of_spinning() {
        // Halving the diagonal makes the sweep an expansion (|off|/diag = 2),
        // which the growth guard must catch.
        let mut mesh = assemble_point_load(9, 4, 1.0).unwrap();
        for d in mesh.diag.iter_mut() {
            *d *= 0.25;
        }
        assert!(solve(&mesh, 1e-10).is_err());
    }

    #[test]
    fn the_trace_csv_lists_every_node_each_sweep() {
        let mesh = assemble(3, |_| 1.0).unwrap();
        let report = solve(&mesh, 1e-12).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trace.csv");
        report.write_trace_csv(&path).unwrap();
        let (header, rows) = io::read_csv(&path).unwrap();
        assert_eq!(header, "iter,node,value");
        assert_eq!(rows.len(), report.iterations * 3);
        assert_eq!(rows[0][0], 1.0);
        assert_eq!(rows[0][1], 1.0);
        assert_eq!(rows[0][2], report.history[0][0]);
        let last = rows.last().unwrap();
        assert_eq!(last[0], report.iterations as f64);
        assert_eq!(last[1], 3.0);
        assert_eq!(last[2], report.solution[2]);
    }
}
