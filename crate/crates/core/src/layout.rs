//! Joint parameter vectors and their partition into per-agent blocks.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum LayoutError {
    #[error("layout needs at least one agent")]
    NoAgents,
    #[error("agent {agent} has zero-dimensional block")]
    EmptyBlock { agent: usize },
    #[error("expected {expected} entries for layout, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite entry {value} at index {index}")]
    NonFinite { index: usize, value: f64 },
}

/// Partition of a joint parameter vector into contiguous per-agent blocks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentLayout {
    block_dims: Vec<usize>,
    offsets: Vec<usize>,
    total: usize,
}

impl AgentLayout {
    pub fn new(block_dims: Vec<usize>) -> Result<Self, LayoutError> {
        if block_dims.is_empty() {
            return Err(LayoutError::NoAgents);
        }
        if let Some(agent) = block_dims.iter().position(|&d| d == 0) {
            return Err(LayoutError::EmptyBlock { agent });
        }
        let mut offsets = Vec::with_capacity(block_dims.len());
        let mut total = 0;
        for &d in &block_dims {
            offsets.push(total);
            total += d;
        }
        Ok(Self { block_dims, offsets, total })
    }

    #[must_use]
    pub fn n_agents(&self) -> usize {
        self.block_dims.len()
    }

    /// Total joint dimension D.
    #[must_use]
    pub fn dim(&self) -> usize {
        self.total
    }

    #[must_use]
    pub fn block_dims(&self) -> &[usize] {
        &self.block_dims
    }

    /// Index range of agent `i`'s block within the joint vector.
    #[must_use]
    pub fn block(&self, i: usize) -> std::ops::Range<usize> {
        let start = self.offsets[i];
        start..start + self.block_dims[i]
    }

    /// Splits a joint-dimension slice into per-agent block slices.
    pub fn split<'a>(&self, v: &'a [f64]) -> Vec<&'a [f64]> {
        assert_eq!(v.len(), self.total, "slice length must match layout");
        (0..self.n_agents()).map(|i| &v[self.block(i)]).collect()
    }
}

/// Joint parameter point; every entry is finite by construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointParams {
    values: Vec<f64>,
    layout: AgentLayout,
}

impl JointParams {
    pub fn new(values: Vec<f64>, layout: AgentLayout) -> Result<Self, LayoutError> {
        if values.len() != layout.dim() {
            return Err(LayoutError::DimensionMismatch { expected: layout.dim(), got: values.len() });
        }
        if let Some((index, &value)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(LayoutError::NonFinite { index, value });
        }
        Ok(Self { values, layout })
    }

    #[must_use]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[must_use]
    pub fn layout(&self) -> &AgentLayout {
        &self.layout
    }

    #[must_use]
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    #[must_use]
    pub fn block(&self, i: usize) -> &[f64] {
        &self.values[self.layout.block(i)]
    }

    /// Returns a copy with `values[index] += delta`; used by FD probes.
    pub fn perturbed(&self, index: usize, delta: f64) -> Result<Self, LayoutError> {
        let mut values = self.values.clone();
        values[index] += delta;
        Self::new(values, self.layout.clone())
    }

    /// Returns `self + eta * direction`, revalidating finiteness.
    pub fn stepped(&self, direction: &[f64], eta: f64) -> Result<Self, LayoutError> {
        assert_eq!(direction.len(), self.values.len());
        let values = self
            .values
            .iter()
            .zip(direction)
            .map(|(t, d)| t + eta * d)
            .collect();
        Self::new(values, self.layout.clone())
    }
}
