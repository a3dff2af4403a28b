//! In-memory embedding dataset: one metadata record per matrix row.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::metrics::NEW_INDIVIDUAL;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SplitHint {
    Database,
    Query,
}

impl SplitHint {
    pub fn as_str(self) -> &'static str {
        match self {
            SplitHint::Database => "database",
            SplitHint::Query => "query",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "database" => Some(SplitHint::Database),
            "query" => Some(SplitHint::Query),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MetadataRecord {
    pub image_id: String,
    /// `None` marks an unlabeled query image.
    pub individual_id: Option<String>,
    pub species: String,
    pub split_hint: Option<SplitHint>,
}

impl MetadataRecord {
    pub fn new(image_id: impl Into<String>, individual_id: Option<&str>, species: impl Into<String>) -> Self {
        Self {
            image_id: image_id.into(),
            individual_id: individual_id.map(String::from),
            species: species.into(),
            split_hint: None,
        }
    }
}

/// Records paired with an `n x d` matrix; row `i` belongs to `records[i]`.
///
/// Construction validates that image ids are unique, species are non-empty,
/// no individual is named `new_individual`, the row counts agree and every
/// matrix entry is finite.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingDataset {
    records: Vec<MetadataRecord>,
    matrix: Matrix,
}

impl EmbeddingDataset {
    pub fn new(records: Vec<MetadataRecord>, matrix: Matrix) -> Result<Self> {
        if records.len() != matrix.rows() {
            return Err(Error::InvalidDataset(format!(
                "row count mismatch: {} metadata records, {} matrix rows",
                records.len(),
                matrix.rows()
            )));
        }
        let mut seen = BTreeSet::new();
        for (row, r) in records.iter().enumerate() {
            if r.image_id.is_empty() {
                return Err(invalid_row(row, "empty image_id"));
            }
            if !seen.insert(r.image_id.as_str()) {
                return Err(invalid_row(row, &format!("duplicate image_id {:?}", r.image_id)));
            }
            if r.species.is_empty() {
                return Err(invalid_row(row, "empty species"));
            }
            if r.individual_id.as_deref() == Some(NEW_INDIVIDUAL) {
                return Err(invalid_row(row, "individual_id is the reserved label new_individual"));
            }
        }
        if let Some((row, col)) = matrix.find_non_finite() {
            return Err(Error::NonFinite { row, col });
        }
        Ok(Self { records, matrix })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.matrix.cols()
    }

    pub fn records(&self) -> &[MetadataRecord] {
        &self.records
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn into_parts(self) -> (Vec<MetadataRecord>, Matrix) {
        (self.records, self.matrix)
    }

    pub fn embedding(&self, i: usize) -> &[f32] {
        self.matrix.row(i)
    }

    /// Rows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            records: indices.iter().map(|&i| self.records[i].clone()).collect(),
            matrix: self.matrix.select_rows(indices),
        }
    }

    /// Same records with a replacement matrix, e.g. projected embeddings.
    pub fn with_matrix(&self, matrix: Matrix) -> Result<Self> {
        Self::new(self.records.clone(), matrix)
    }

    /// Row indices whose `individual_id` is absent.
    pub fn unlabeled_rows(&self) -> Vec<usize> {
        self.records
            .iter()
            .enumerate()
            .filter(|(_, r)| r.individual_id.is_none())
            .map(|(i, _)| i)
            .collect()
    }

    pub fn species_count(&self) -> usize {
        self.records
            .iter()
            .map(|r| r.species.as_str())
            .collect::<BTreeSet<_>>()
            .len()
    }
}

fn invalid_row(row: usize, reason: &str) -> Error {
    Error::InvalidRow {
        row,
        reason: String::from(reason),
    }
}
