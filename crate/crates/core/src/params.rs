//! Flat parameter vectors with a named layout.
//!
//! All models store their parameters in one contiguous `Vec<f64>`; a
//! [`ParamLayout`] maps named tensors (row-major) to offset ranges in that
//! vector. Optimizers and diagnostics only ever see the flat view, which is
//! what makes parameter-space perturbations (`theta - lambda * g`) and
//! L-BFGS history bookkeeping trivial.

use std::ops::Range;
use std::sync::Arc;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayoutEntry {
    pub name: String,
    pub offset: usize,
    /// Row-major shape; `[out, in]` for weights, `[out]` for biases.
    pub shape: Vec<usize>,
}

impl LayoutEntry {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Immutable description of how named tensors pack into a flat vector.
/// Offsets are contiguous starting at zero, in registration order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamLayout {
    entries: Vec<LayoutEntry>,
    total: usize,
}

impl ParamLayout {
    pub fn empty() -> Arc<Self> {
        Arc::new(ParamLayout {
            entries: Vec::new(),
            total: 0,
        })
    }

    pub fn builder() -> LayoutBuilder {
        LayoutBuilder {
            entries: Vec::new(),
            total: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    pub fn entries(&self) -> &[LayoutEntry] {
        &self.entries
    }

    pub fn entry(&self, name: &str) -> Option<&LayoutEntry> {
        self.entries.iter().find(|e| e.name == name)
    }
}

pub struct LayoutBuilder {
    entries: Vec<LayoutEntry>,
    total: usize,
}

impl LayoutBuilder {
    /// Register a tensor and return its range in the flat vector.
    pub fn push(&mut self, name: impl Into<String>, shape: &[usize]) -> Range<usize> {
        let len: usize = shape.iter().product();
        let entry = LayoutEntry {
            name: name.into(),
            offset: self.total,
            shape: shape.to_vec(),
        };
        let range = entry.range();
        self.entries.push(entry);
        self.total += len;
        range
    }

    pub fn finish(self) -> Arc<ParamLayout> {
        Arc::new(ParamLayout {
            entries: self.entries,
            total: self.total,
        })
    }
}

/// A parameter vector tied to its layout.
#[derive(Debug, Clone, PartialEq)]
pub struct FlatParams {
    layout: Arc<ParamLayout>,
    values: Vec<f64>,
}

impl FlatParams {
    pub fn zeros(layout: Arc<ParamLayout>) -> Self {
        let n = layout.len();
        FlatParams {
            layout,
            values: vec![0.0; n],
        }
    }

    pub fn from_values(layout: Arc<ParamLayout>, values: Vec<f64>) -> Result<Self> {
        if values.len() != layout.len() {
            return Err(Error::DimMismatch {
                what: "parameter vector",
                expected: layout.len(),
                got: values.len(),
            });
        }
        Ok(FlatParams { layout, values })
    }

    pub fn layout(&self) -> &Arc<ParamLayout> {
        &self.layout
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn set_values(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.values.len() {
            return Err(Error::DimMismatch {
                what: "parameter vector",
                expected: self.values.len(),
                got: values.len(),
            });
        }
        self.values.copy_from_slice(values);
        Ok(())
    }

    pub fn tensor(&self, name: &str) -> Option<&[f64]> {
        self.layout
            .entry(name)
            .map(|e| &self.values[e.range()])
    }

    /// `self += a * g`, the only parameter update primitive optimizers need.
    pub fn axpy(&mut self, a: f64, g: &[f64]) {
        debug_assert_eq!(g.len(), self.values.len());
        for (v, gi) in self.values.iter_mut().zip(g) {
            *v += a * gi;
        }
    }
}

/// Glorot-uniform bound for a dense layer: `sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_limit(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}
