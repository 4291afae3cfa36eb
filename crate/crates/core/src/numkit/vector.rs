use std::sync::Arc;

use crate::error::{Error, Result};

use super::layout::BlockLayout;
use super::reduce::tree_sum;

/// Flat parameter vector tied to a block layout.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamVector {
    values: Vec<f64>,
    layout: Arc<BlockLayout>,
}

impl ParamVector {
    pub fn new(values: Vec<f64>, layout: Arc<BlockLayout>) -> Result<Self> {
        if values.len() != layout.dim() {
            return Err(Error::Dimension {
                what: "parameter vector",
                expected: layout.dim(),
                got: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Invalid(format!("non-finite entry {} at index {i}", values[i])));
        }
        Ok(ParamVector { values, layout })
    }

    pub fn zeros(layout: Arc<BlockLayout>) -> Self {
        ParamVector { values: vec![0.0; layout.dim()], layout }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn layout(&self) -> &Arc<BlockLayout> {
        &self.layout
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn block(&self, b: usize) -> &[f64] {
        &self.values[self.layout.block(b).range()]
    }

    /// Same values viewed through another layout of equal dimension.
    pub fn relayout(&self, layout: Arc<BlockLayout>) -> Result<Self> {
        if layout.dim() != self.values.len() {
            return Err(Error::Dimension {
                what: "relayout target",
                expected: self.values.len(),
                got: layout.dim(),
            });
        }
        Ok(ParamVector { values: self.values.clone(), layout })
    }

    pub fn same_layout(&self, other: &ParamVector) -> bool {
        Arc::ptr_eq(&self.layout, &other.layout) || self.layout == other.layout
    }

    pub fn norm2(&self) -> f64 {
        let sq: Vec<f64> = self.values.iter().map(|v| v * v).collect();
        tree_sum(&sq).sqrt()
    }

    pub fn norm_inf(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn sub(&self, other: &ParamVector) -> Result<ParamVector> {
        if other.len() != self.len() {
            return Err(Error::Dimension { what: "vector difference", expected: self.len(), got: other.len() });
        }
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        Ok(ParamVector { values, layout: self.layout.clone() })
    }

    pub fn add(&self, other: &ParamVector) -> Result<ParamVector> {
        if other.len() != self.len() {
            return Err(Error::Dimension { what: "vector sum", expected: self.len(), got: other.len() });
        }
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect();
        Ok(ParamVector { values, layout: self.layout.clone() })
    }
}
