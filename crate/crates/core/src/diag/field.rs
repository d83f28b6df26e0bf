//! Gradient-correlation fields over point grids.
//!
//! [`correlation_map`] evaluates `G(p, p + offset)` at every grid point in
//! parallel and packages the result with enough provenance (model id,
//! parameter hash) to tell two snapshots apart. A low-G area is where
//! supervision stops propagating; [`CorrelationField::failure_mask`] turns
//! the raw field into a binary map by thresholding at a configurable
//! epsilon, defaulting to `1e-3` times the median field value so the mask
//! adapts to the overall correlation scale.
//!
//! [`positive_ratio`] is the sign statistic behind the region-boost
//! assumption: the fraction of points whose signed gradient inner product
//! with a fixed-distance neighbor is nonnegative. Freshly initialized
//! networks sit at 1.0 — neighboring gradients point the same way — which
//! is what makes region pooling safe to apply from the first iteration.

use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::io;
use crate::model::{param_gradient, Model};
use crate::params::FlatParams;
use crate::points::Points;
use crate::reduce::pairwise_sum;

use super::{gradient_correlation, signed_inner};

/// A gradient-correlation field: `values[i] = G(points[i], points[i] + offset)`.
#[derive(Debug, Clone)]
pub struct CorrelationField {
    pub points: Points,
    pub offset: Vec<f64>,
    /// Nonnegative, one per point.
    pub values: Vec<f64>,
    /// Free-form identifier of the producing model (architecture tag).
    pub model_id: String,
    /// SHA-256 over the little-endian bytes of the parameter vector, so a
    /// field can be matched to the exact snapshot that produced it.
    pub params_sha256: String,
}

impl CorrelationField {
    /// Order-independent mean of the field (pairwise summation).
    pub fn mean(&self) -> f64 {
        pairwise_sum(&self.values) / self.values.len() as f64
    }

    /// Median field value; the midpoint of the two central order statistics
    /// for even lengths.
    pub fn median(&self) -> f64 {
        let mut sorted = self.values.clone();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        if n == 0 {
            return f64::NAN;
        }
        if n % 2 == 1 {
            sorted[n / 2]
        } else {
            0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
        }
    }

    /// The threshold below which a point counts as failed: the supplied
    /// epsilon, or `1e-3` times the median field value when not given.
    /// Returns the resolved epsilon alongside the mask (`true` = failed).
    pub fn failure_mask(&self, epsilon: Option<f64>) -> (f64, Vec<bool>) {
        let eps = epsilon.unwrap_or_else(|| 1e-3 * self.median());
        let mask = self.values.iter().map(|&g| g < eps).collect();
        (eps, mask)
    }

    /// Export as CSV with header `x,t,G` (two-dimensional grids only; the
    /// first coordinate is the spatial axis, the second is time).
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        self.require_xt()?;
        let rows = (0..self.points.len()).map(|i| {
            let p = self.points.get(i);
            [p[0], p[1], self.values[i]]
        });
        io::write_csv(path, "x,t,G", rows)
    }

    /// Export the binary failure mask as CSV with header `x,t,failed`, flag
    /// values written as bare `0`/`1`. Returns the epsilon actually used.
    pub fn write_failure_mask_csv(&self, path: &Path, epsilon: Option<f64>) -> Result<f64> {
        use std::io::Write;
        self.require_xt()?;
        let (eps, mask) = self.failure_mask(epsilon);
        let file = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(file);
        w.write_all(b"x,t,failed\n")?;
        for (i, failed) in mask.iter().enumerate() {
            let p = self.points.get(i);
            writeln!(
                w,
                "{},{},{}",
                io::fmt_f64(p[0]),
                io::fmt_f64(p[1]),
                u8::from(*failed)
            )?;
        }
        w.flush()?;
        Ok(eps)
    }

    fn require_xt(&self) -> Result<()> {
        if self.points.dim() != 2 {
            return Err(Error::config(format!(
                "field export needs (x, t) grids; got dimension {}",
                self.points.dim()
            )));
        }
        Ok(())
    }
}

/// Evaluate `G(p, p + offset)` at every point of `grid`, in parallel.
///
/// The computation per point is independent and collected in grid order, so
/// the result is bitwise reproducible regardless of thread scheduling.
pub fn correlation_map(
    model: &(impl Model + ?Sized),
    params: &FlatParams,
    grid: Points,
    offset: &[f64],
    model_id: impl Into<String>,
) -> Result<CorrelationField> {
    if grid.dim() != model.input_dim() {
        return Err(Error::DimMismatch {
            what: "correlation grid dimension",
            expected: model.input_dim(),
            got: grid.dim(),
        });
    }
    if offset.len() != model.input_dim() {
        return Err(Error::DimMismatch {
            what: "correlation offset dimension",
            expected: model.input_dim(),
            got: offset.len(),
        });
    }
    if grid.is_empty() {
        return Err(Error::config("correlation_map: empty grid"));
    }
    let values: Vec<f64> = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let p = grid.get(i);
            let q: Vec<f64> = p.iter().zip(offset).map(|(a, b)| a + b).collect();
            gradient_correlation(model, params, p, &q)
        })
        .collect::<Result<_>>()?;
    let params_sha256 = hash_params(params);
    Ok(CorrelationField {
        points: grid,
        offset: offset.to_vec(),
        values,
        model_id: model_id.into(),
        params_sha256,
    })
}

fn hash_params(params: &FlatParams) -> String {
    let mut bytes = Vec::with_capacity(8 * params.len());
    for v in params.values() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    io::sha256_hex(&bytes)
}

/// Fraction of points whose signed gradient inner product with the neighbor
/// `p + distance * e_x` (shift along the first axis) is nonnegative.
///
/// A single point with zero distance pairs with itself, and a self inner
/// product is a squared norm, so the ratio is 1 by construction — the
/// statistic only says something once genuine neighbors are involved.
pub fn positive_ratio(
    model: &(impl Model + ?Sized),
    params: &FlatParams,
    points: &Points,
    distance: f64,
) -> Result<f64> {
    if points.dim() != model.input_dim() {
        return Err(Error::DimMismatch {
            what: "positive-ratio grid dimension",
            expected: model.input_dim(),
            got: points.dim(),
        });
    }
    if points.is_empty() {
        return Err(Error::config("positive_ratio: empty point set"));
    }
    let positives: usize = (0..points.len())
        .into_par_iter()
        .map(|i| -> Result<usize> {
            let p = points.get(i);
            let mut q = p.to_vec();
            q[0] += distance;
            let ga = param_gradient(model, params, p)?;
            let gb = param_gradient(model, params, &q)?;
            Ok(usize::from(signed_inner(&ga, &gb) >= 0.0))
        })
        .try_reduce(|| 0, |a, b| Ok(a + b))?;
    Ok(positives as f64 / points.len() as f64)
}

/// Mean field gap between two models on the same grid and offset — positive
/// when `a` correlates better than `b` on average. Exposed for experiment
/// reports that compare architectures at matched initialization.
pub fn mean_gap(a: &CorrelationField, b: &CorrelationField) -> Result<f64> {
    if a.points.len() != b.points.len() {
        return Err(Error::config(
            "mean_gap: fields cover different numbers of points",
        ));
    }
    Ok(a.mean() - b.mean())
}
