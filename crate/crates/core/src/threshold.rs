//! Robust statistics and the validation grid search for the new-individual
//! threshold.
//!
//! Candidates are `n` evenly spaced values on
//! `[max(0, median - spread * MAD), median + spread * MAD]`, where the
//! median and the (unscaled) MAD are taken over each database image's
//! distance to its nearest image of a different species. Every candidate is
//! scored on the validation split and the best one wins, ties going to the
//! smallest candidate.

use alloc::vec::Vec;

use crate::dataset::EmbeddingDataset;
use crate::error::{Error, Result};
use crate::knn::{decide, FlatIndex, Neighbor};
use crate::math;
use crate::matrix::Matrix;
use crate::metrics::{self, GroundTruth};

pub const DEFAULT_CANDIDATES: usize = 100;
pub const DEFAULT_SPREAD: f64 = 3.0;

pub fn median(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyInput);
    }
    if let Some(x) = values.iter().find(|x| !x.is_finite()) {
        return Err(Error::out_of_range("value", x, "finite"));
    }
    let mut v = values.to_vec();
    v.sort_unstable_by(f64::total_cmp);
    let mid = v.len() / 2;
    Ok(if v.len() % 2 == 1 {
        v[mid]
    } else {
        (v[mid - 1] + v[mid]) / 2.0
    })
}

/// Median absolute deviation from the median, without the 1.4826
/// normal-consistency factor.
pub fn mad(values: &[f64]) -> Result<f64> {
    RobustStats::from_values(values).map(|s| s.mad)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobustStats {
    pub median: f64,
    pub mad: f64,
}

impl RobustStats {
    pub fn from_values(values: &[f64]) -> Result<Self> {
        let median = median(values)?;
        let deviations: Vec<f64> = values.iter().map(|x| (x - median).abs()).collect();
        Ok(Self {
            median,
            mad: self::median(&deviations)?,
        })
    }
}

/// For every row, the L2 distance to the nearest row of another species.
pub fn cross_species_nn_distances<S: AsRef<str>>(vectors: &Matrix, species: &[S]) -> Result<Vec<f64>> {
    if species.len() != vectors.rows() {
        return Err(Error::DimensionMismatch {
            expected: vectors.rows(),
            found: species.len(),
        });
    }
    let mut distinct: Vec<&str> = species.iter().map(AsRef::as_ref).collect();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(Error::SingleSpecies { found: distinct.len() });
    }
    Ok((0..vectors.rows())
        .map(|i| {
            let mut best = f64::INFINITY;
            for j in 0..vectors.rows() {
                if species[j].as_ref() != species[i].as_ref() {
                    best = best.min(math::squared_l2_f32(vectors.row(i), vectors.row(j)));
                }
            }
            math::sqrt(best)
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateGrid {
    pub values: Vec<f64>,
    /// Set when the MAD is zero and the grid collapsed to the median.
    pub degenerate: bool,
}

pub fn candidate_grid(stats: RobustStats, n: usize, spread: f64) -> Result<CandidateGrid> {
    if n < 2 {
        return Err(Error::out_of_range("n", n, ">= 2"));
    }
    if !(spread > 0.0 && spread.is_finite()) {
        return Err(Error::out_of_range("spread", spread, "> 0"));
    }
    if stats.mad == 0.0 {
        return Ok(CandidateGrid {
            values: alloc::vec![stats.median.max(0.0)],
            degenerate: true,
        });
    }
    let lo = (stats.median - spread * stats.mad).max(0.0);
    let hi = stats.median + spread * stats.mad;
    let step = (hi - lo) / (n - 1) as f64;
    let mut values: Vec<f64> = (0..n).map(|i| lo + step * i as f64).collect();
    values[n - 1] = hi;
    Ok(CandidateGrid {
        values,
        degenerate: false,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdCurve {
    pub candidates: Vec<f64>,
    pub baks: Vec<f64>,
    pub baus: Vec<f64>,
    pub scores: Vec<f64>,
    pub best_index: usize,
}

impl ThresholdCurve {
    pub fn best_threshold(&self) -> f64 {
        self.candidates[self.best_index]
    }

    pub fn best_score(&self) -> f64 {
        self.scores[self.best_index]
    }
}

/// Scores every candidate threshold on `val` (rows aligned with
/// `truth.items`).
pub fn tune_threshold(
    index: &FlatIndex,
    val: &EmbeddingDataset,
    truth: &GroundTruth,
    k: usize,
    grid: &[f64],
) -> Result<ThresholdCurve> {
    if grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    if truth.known.is_empty() {
        return Err(Error::UndefinedMetric("BAKS"));
    }
    if truth.unknown.is_empty() {
        return Err(Error::UndefinedMetric("BAUS"));
    }
    if val.len() != truth.items.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.items.len(),
            found: val.len(),
        });
    }
    for (row, (r, (id, _))) in val.records().iter().zip(&truth.items).enumerate() {
        if &r.image_id != id {
            return Err(Error::InvalidRow {
                row,
                reason: alloc::format!("image {:?} does not match ground truth {:?}", r.image_id, id),
            });
        }
    }
    for &t in grid {
        crate::knn::check_threshold(t)?;
    }

    // Neighbor lists do not depend on the threshold.
    let neighbors: Vec<Vec<Neighbor>> = (0..val.len())
        .map(|i| index.query(val.embedding(i), k))
        .collect::<Result<_>>()?;

    let mut curve = ThresholdCurve {
        candidates: grid.to_vec(),
        baks: Vec::with_capacity(grid.len()),
        baus: Vec::with_capacity(grid.len()),
        scores: Vec::with_capacity(grid.len()),
        best_index: 0,
    };
    for &t in grid {
        let decisions: Vec<&str> = neighbors.iter().map(|n| decide(n, t)).collect();
        let report = metrics::score(&truth.with_predictions(&decisions)?)?;
        curve.baks.push(report.baks);
        curve.baus.push(report.baus);
        curve.scores.push(report.final_score);
    }
    for (i, &s) in curve.scores.iter().enumerate() {
        if s > curve.scores[curve.best_index] {
            curve.best_index = i;
        }
    }
    Ok(curve)
}
