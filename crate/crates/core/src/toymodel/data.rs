use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Labelled feature matrix, row-major `n x m`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    labels: Vec<u32>,
    dim: usize,
    classes: usize,
    pub name: String,
}

impl Dataset {
    pub fn new(name: impl Into<String>, features: Vec<f64>, labels: Vec<u32>, dim: usize, classes: usize) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::EmptyDataset("a dataset needs at least one example"));
        }
        if dim == 0 || features.len() != labels.len() * dim {
            return Err(Error::Dimension { what: "feature matrix", expected: labels.len() * dim, got: features.len() });
        }
        if let Some(i) = labels.iter().position(|&y| y as usize >= classes) {
            return Err(Error::Invalid(format!("label {} at row {i} is outside [0, {classes})", labels[i])));
        }
        if let Some(i) = features.iter().position(|v| !v.is_finite()) {
            return Err(Error::Invalid(format!("non-finite feature in row {}", i / dim)));
        }
        Ok(Dataset { features, labels, dim, classes, name: name.into() })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn x(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn y(&self, i: usize) -> u32 {
        self.labels[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], u32)> + '_ {
        self.features.chunks_exact(self.dim).zip(self.labels.iter().copied())
    }

    /// Rows at `indices`, in that order. `None` if `indices` is empty.
    pub fn subset(&self, name: impl Into<String>, indices: &[usize]) -> Option<Dataset> {
        if indices.is_empty() {
            return None;
        }
        let mut features = Vec::with_capacity(indices.len() * self.dim);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            features.extend_from_slice(self.x(i));
            labels.push(self.labels[i]);
        }
        Some(Dataset { features, labels, dim: self.dim, classes: self.classes, name: name.into() })
    }

    pub fn filter(&self, name: impl Into<String>, keep: impl Fn(&[f64], u32) -> bool) -> Option<Dataset> {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| keep(self.x(i), self.labels[i])).collect();
        self.subset(name, &idx)
    }

    pub fn concat(&self, name: impl Into<String>, other: &Dataset) -> Result<Dataset> {
        if other.dim != self.dim || other.classes != self.classes {
            return Err(Error::Invalid("cannot concatenate datasets of different shape".into()));
        }
        let mut features = self.features.clone();
        features.extend_from_slice(&other.features);
        let mut labels = self.labels.clone();
        labels.extend_from_slice(&other.labels);
        Ok(Dataset { features, labels, dim: self.dim, classes: self.classes, name: name.into() })
    }

    /// SHA-256 over shape, features and labels.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.dim as u64).to_le_bytes());
        h.update((self.classes as u64).to_le_bytes());
        for v in &self.features {
            h.update(v.to_le_bytes());
        }
        for y in &self.labels {
            h.update(y.to_le_bytes());
        }
        hex::encode(h.finalize())
    }

    /// Keyed hash of row `i`'s content; used to order examples independently of storage order.
    pub fn row_key(&self, i: usize, seed: u64) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(seed.to_le_bytes());
        for v in self.x(i) {
            h.update(v.to_le_bytes());
        }
        h.update(self.labels[i].to_le_bytes());
        h.finalize().into()
    }
}
