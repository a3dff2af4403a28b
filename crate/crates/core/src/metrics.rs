//! Balanced accuracy on known samples (BAKS), on unknown samples (BAUS), and
//! their geometric mean.
//!
//! Both accuracies are macro averages: each individual contributes the
//! fraction of its own images handled correctly, and the individuals are
//! weighted equally. For a known individual "correct" means the prediction
//! is that individual; for an unknown individual it means the prediction is
//! [`NEW_INDIVIDUAL`].

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Reserved label for "not a known individual".
pub const NEW_INDIVIDUAL: &str = "new_individual";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalItem {
    pub image_id: String,
    pub truth: String,
    pub predicted: String,
}

/// Ground truth for one split, before predictions are attached.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundTruth {
    /// `(image_id, individual_id)` in dataset order.
    pub items: Vec<(String, String)>,
    pub known: BTreeSet<String>,
    pub unknown: BTreeSet<String>,
}

impl GroundTruth {
    /// Pairs predictions (aligned with `items`) with the truth.
    pub fn with_predictions<S: AsRef<str>>(&self, predicted: &[S]) -> Result<EvaluationSet> {
        if predicted.len() != self.items.len() {
            return Err(Error::DimensionMismatch {
                expected: self.items.len(),
                found: predicted.len(),
            });
        }
        let items = self
            .items
            .iter()
            .zip(predicted)
            .map(|((image_id, truth), p)| EvalItem {
                image_id: image_id.clone(),
                truth: truth.clone(),
                predicted: String::from(p.as_ref()),
            })
            .collect();
        EvaluationSet::new(items, self.known.clone(), self.unknown.clone())
    }

    /// Looks predictions up by image id. Fails with the list of image ids
    /// that have no prediction.
    pub fn with_prediction_map(&self, predicted: &BTreeMap<String, String>) -> Result<EvaluationSet> {
        let missing: Vec<&str> = self
            .items
            .iter()
            .filter(|(id, _)| !predicted.contains_key(id))
            .map(|(id, _)| id.as_str())
            .collect();
        if !missing.is_empty() {
            return Err(Error::InvalidEvaluation(format!(
                "missing predictions for image ids: {}",
                missing.join(", ")
            )));
        }
        let aligned: Vec<&str> = self.items.iter().map(|(id, _)| predicted[id].as_str()).collect();
        self.with_predictions(&aligned)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationSet {
    items: Vec<EvalItem>,
    known: BTreeSet<String>,
    unknown: BTreeSet<String>,
    counts: BTreeMap<String, usize>,
}

impl EvaluationSet {
    /// Checks that the known and unknown sets are disjoint, that every item's
    /// truth belongs to one of them and that every listed individual has at
    /// least one item.
    pub fn new(items: Vec<EvalItem>, known: BTreeSet<String>, unknown: BTreeSet<String>) -> Result<Self> {
        if let Some(both) = known.intersection(&unknown).next() {
            return Err(Error::InvalidEvaluation(format!(
                "individual {both:?} is both known and unknown"
            )));
        }
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for item in &items {
            if !known.contains(&item.truth) && !unknown.contains(&item.truth) {
                return Err(Error::InvalidEvaluation(format!(
                    "image {:?}: individual {:?} is neither known nor unknown",
                    item.image_id, item.truth
                )));
            }
            *counts.entry(item.truth.clone()).or_default() += 1;
        }
        if let Some(empty) = known.iter().chain(&unknown).find(|c| !counts.contains_key(*c)) {
            return Err(Error::InvalidEvaluation(format!("individual {empty:?} has no images")));
        }
        Ok(Self {
            items,
            known,
            unknown,
            counts,
        })
    }

    pub fn items(&self) -> &[EvalItem] {
        &self.items
    }

    pub fn known(&self) -> &BTreeSet<String> {
        &self.known
    }

    pub fn unknown(&self) -> &BTreeSet<String> {
        &self.unknown
    }

    /// Number of images of individual `c` in the set.
    pub fn count(&self, c: &str) -> usize {
        self.counts.get(c).copied().unwrap_or(0)
    }

    /// Mean of per-individual hit rates over `class`.
    fn balanced(&self, class: &BTreeSet<String>, hit: impl Fn(&EvalItem) -> bool) -> f64 {
        let mut hits: BTreeMap<&str, usize> = BTreeMap::new();
        for item in &self.items {
            if class.contains(&item.truth) && hit(item) {
                *hits.entry(item.truth.as_str()).or_default() += 1;
            }
        }
        let total: f64 = class
            .iter()
            .map(|c| hits.get(c.as_str()).copied().unwrap_or(0) as f64 / self.counts[c] as f64)
            .sum();
        total / class.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreReport {
    pub baks: f64,
    pub baus: f64,
    pub final_score: f64,
}

pub fn baks(eval: &EvaluationSet) -> Result<f64> {
    if eval.known.is_empty() {
        return Err(Error::UndefinedMetric("BAKS"));
    }
    Ok(eval.balanced(&eval.known, |it| it.predicted == it.truth))
}

pub fn baus(eval: &EvaluationSet) -> Result<f64> {
    if eval.unknown.is_empty() {
        return Err(Error::UndefinedMetric("BAUS"));
    }
    Ok(eval.balanced(&eval.unknown, |it| it.predicted == NEW_INDIVIDUAL))
}

pub fn final_score(baks: f64, baus: f64) -> f64 {
    crate::math::sqrt(baks * baus)
}

pub fn score(eval: &EvaluationSet) -> Result<ScoreReport> {
    let baks = baks(eval)?;
    let baus = baus(eval)?;
    Ok(ScoreReport {
        baks,
        baus,
        final_score: final_score(baks, baus),
    })
}
