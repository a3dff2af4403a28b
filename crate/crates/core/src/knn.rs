//! Exact flat nearest-neighbor index and the open-set decision rule.
//!
//! A query is labeled [`NEW_INDIVIDUAL`] when its nearest stored vector is
//! farther than the threshold; otherwise it takes the most frequent label
//! among its top-K neighbors. Count ties go to the label whose closest
//! representative comes first in the neighbor list. Distance ties in the
//! neighbor list are ordered by row id.

use alloc::string::String;
use alloc::vec::Vec;

use crate::dataset::EmbeddingDataset;
use crate::error::{Error, Result};
use crate::math;
use crate::matrix::Matrix;
use crate::metrics::NEW_INDIVIDUAL;

/// Default neighbor count.
pub const DEFAULT_K: usize = 5;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Metric {
    /// Euclidean distance (square root applied).
    #[default]
    L2,
    /// `1 - cos(q, x)`, clamped at zero.
    Cosine,
}

impl Metric {
    pub fn as_str(self) -> &'static str {
        match self {
            Metric::L2 => "l2",
            Metric::Cosine => "cosine",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Neighbor {
    pub row: usize,
    pub label: String,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub image_id: String,
    /// An individual id or [`NEW_INDIVIDUAL`].
    pub decision: String,
    pub nearest_distance: f64,
    /// Sorted by non-decreasing distance.
    pub neighbors: Vec<Neighbor>,
}

impl Prediction {
    pub fn is_new(&self) -> bool {
        self.decision == NEW_INDIVIDUAL
    }
}

#[derive(Debug, Clone)]
pub struct FlatIndex {
    vectors: Matrix,
    labels: Vec<String>,
    species: Vec<String>,
    metric: Metric,
    norms: Vec<f64>,
}

impl FlatIndex {
    pub fn new(vectors: Matrix, labels: Vec<String>, species: Vec<String>, metric: Metric) -> Result<Self> {
        if vectors.rows() == 0 {
            return Err(Error::EmptySplit("train"));
        }
        for len in [labels.len(), species.len()] {
            if len != vectors.rows() {
                return Err(Error::DimensionMismatch {
                    expected: vectors.rows(),
                    found: len,
                });
            }
        }
        if let Some((row, col)) = vectors.find_non_finite() {
            return Err(Error::NonFinite { row, col });
        }
        let norms = match metric {
            Metric::L2 => Vec::new(),
            Metric::Cosine => vectors.iter_rows().map(norm_f32).collect(),
        };
        Ok(Self {
            vectors,
            labels,
            species,
            metric,
            norms,
        })
    }

    pub fn len(&self) -> usize {
        self.vectors.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.vectors.cols()
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn label(&self, row: usize) -> &str {
        &self.labels[row]
    }

    pub fn species(&self, row: usize) -> &str {
        &self.species[row]
    }

    pub fn vectors(&self) -> &Matrix {
        &self.vectors
    }

    fn distance(&self, q: &[f32], q_norm: f64, row: usize) -> f64 {
        let x = self.vectors.row(row);
        match self.metric {
            Metric::L2 => math::l2_f32(q, x),
            Metric::Cosine => {
                let dot: f64 = q.iter().zip(x).map(|(&a, &b)| f64::from(a) * f64::from(b)).sum();
                let denom = (q_norm * self.norms[row]).max(math::NORM_EPS);
                (1.0 - dot / denom).max(0.0)
            }
        }
    }

    /// For every stored row, the distance (in this index's metric) to the
    /// nearest row of a different species.
    pub fn cross_species_nn_distances(&self) -> Result<Vec<f64>> {
        let mut distinct: Vec<&str> = self.species.iter().map(String::as_str).collect();
        distinct.sort_unstable();
        distinct.dedup();
        if distinct.len() < 2 {
            return Err(Error::SingleSpecies { found: distinct.len() });
        }
        Ok((0..self.len())
            .map(|i| {
                let q = self.vectors.row(i);
                let q_norm = self.norms.get(i).copied().unwrap_or(0.0);
                (0..self.len())
                    .filter(|&j| self.species[j] != self.species[i])
                    .map(|j| self.distance(q, q_norm, j))
                    .fold(f64::INFINITY, f64::min)
            })
            .collect())
    }

    /// The `k` nearest rows to `q`, by distance then row id.
    pub fn query(&self, q: &[f32], k: usize) -> Result<Vec<Neighbor>> {
        if q.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: q.len(),
            });
        }
        if k == 0 || k > self.len() {
            return Err(Error::out_of_range("k", k, alloc::format!("1..={}", self.len())));
        }
        let q_norm = match self.metric {
            Metric::L2 => 0.0,
            Metric::Cosine => norm_f32(q),
        };
        let mut all: Vec<(f64, usize)> = (0..self.len())
            .map(|row| (self.distance(q, q_norm, row), row))
            .collect();
        let by_distance = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if k < all.len() {
            all.select_nth_unstable_by(k - 1, by_distance);
            all.truncate(k);
        }
        all.sort_unstable_by(by_distance);
        Ok(all
            .into_iter()
            .map(|(distance, row)| Neighbor {
                row,
                label: self.labels[row].clone(),
                distance,
            })
            .collect())
    }

    pub fn classify(&self, q: &[f32], k: usize, threshold: f64) -> Result<Prediction> {
        check_threshold(threshold)?;
        let neighbors = self.query(q, k)?;
        let decision = String::from(decide(&neighbors, threshold));
        Ok(Prediction {
            image_id: String::new(),
            decision,
            nearest_distance: neighbors[0].distance,
            neighbors,
        })
    }

    /// One prediction per query row, in row order.
    pub fn predict_all(&self, queries: &EmbeddingDataset, k: usize, threshold: f64) -> Result<Vec<Prediction>> {
        if queries.dim() != self.dim() && !queries.is_empty() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: queries.dim(),
            });
        }
        queries
            .records()
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let mut p = self.classify(queries.embedding(i), k, threshold)?;
                p.image_id = r.image_id.clone();
                Ok(p)
            })
            .collect()
    }
}

/// Index over every row of `train`. All rows must carry an individual id.
pub fn build_index(train: &EmbeddingDataset, metric: Metric) -> Result<FlatIndex> {
    let missing = train.unlabeled_rows();
    if !missing.is_empty() {
        return Err(Error::MissingIndividual { rows: missing });
    }
    let labels = train
        .records()
        .iter()
        .map(|r| r.individual_id.clone().unwrap_or_default())
        .collect();
    let species = train.records().iter().map(|r| r.species.clone()).collect();
    FlatIndex::new(train.matrix().clone(), labels, species, metric)
}

/// The decision rule applied to an already sorted, non-empty neighbor list.
pub fn decide(neighbors: &[Neighbor], threshold: f64) -> &str {
    if neighbors[0].distance > threshold {
        return NEW_INDIVIDUAL;
    }
    // (label, count) in order of first appearance, so the first maximum is
    // also the label with the nearest representative.
    let mut tally: Vec<(&str, usize)> = Vec::new();
    for n in neighbors {
        match tally.iter_mut().find(|(l, _)| *l == n.label) {
            Some((_, c)) => *c += 1,
            None => tally.push((&n.label, 1)),
        }
    }
    let mut best = 0;
    for (i, t) in tally.iter().enumerate() {
        if t.1 > tally[best].1 {
            best = i;
        }
    }
    tally[best].0
}

pub(crate) fn check_threshold(threshold: f64) -> Result<()> {
    if threshold >= 0.0 {
        Ok(())
    } else {
        Err(Error::out_of_range("threshold", threshold, ">= 0"))
    }
}

fn norm_f32(v: &[f32]) -> f64 {
    math::sqrt(v.iter().map(|&x| f64::from(x) * f64::from(x)).sum())
}
