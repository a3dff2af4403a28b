//! CSV tables exchanged between subcommands.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::path::Path;

use openreid_core::knn::Prediction;
use openreid_core::split::{ImageAssignment, Split, SplitAssignment};
use openreid_core::threshold::ThresholdCurve;
use openreid_core::train::TrainingHistory;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SPLIT_HEADER: [&str; 4] = ["image_id", "split", "individual_id", "is_known"];
pub const SUBMISSION_HEADER: [&str; 2] = ["image_id", "identity"];
pub const CURVE_HEADER: [&str; 4] = ["threshold", "baks", "baus", "final"];
pub const HISTORY_HEADER: [&str; 5] = ["epoch", "train_loss", "val_loss", "mined_triplets", "learning_rate"];

pub(crate) fn csv_reader(path: &Path) -> Result<csv::Reader<File>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new().has_headers(true).from_reader(f))
}

pub(crate) fn csv_writer(path: &Path) -> Result<csv::Writer<File>> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(f))
}

pub(crate) fn expect_header(rdr: &mut csv::Reader<File>, path: &Path, want: &[&str]) -> Result<()> {
    let got = rdr.headers().map_err(|e| Error::format(path, e.to_string()))?;
    if got.iter().ne(want.iter().copied()) {
        return Err(Error::format(
            path,
            format!(
                "expected header {:?}, found {:?}",
                want.join(","),
                got.iter().collect::<Vec<_>>().join(",")
            ),
        ));
    }
    Ok(())
}

pub(crate) fn finish(mut w: csv::Writer<File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_rows<I, R>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator,
    R::Item: AsRef<[u8]>,
{
    let mut w = csv_writer(path)?;
    let fail = |e: csv::Error| Error::format(path, e.to_string());
    w.write_record(header).map_err(fail)?;
    for r in rows {
        w.write_record(r).map_err(fail)?;
    }
    finish(w, path)
}

#[derive(Serialize, Deserialize)]
struct SplitRow {
    image_id: String,
    split: String,
    individual_id: String,
    is_known: bool,
}

pub fn write_split(path: &Path, assignment: &SplitAssignment) -> Result<()> {
    write_rows(
        path,
        &SPLIT_HEADER,
        assignment.images.iter().map(|a| {
            [
                a.image_id.clone(),
                a.split.as_str().to_string(),
                a.individual_id.clone(),
                assignment.is_known(&a.individual_id).to_string(),
            ]
        }),
    )
}

pub fn read_split(path: &Path) -> Result<SplitAssignment> {
    let mut rdr = csv_reader(path)?;
    expect_header(&mut rdr, path, &SPLIT_HEADER)?;
    let mut images = Vec::new();
    let mut known = BTreeSet::new();
    let mut unknown = BTreeSet::new();
    for (row, rec) in rdr.deserialize::<SplitRow>().enumerate() {
        let rec = rec.map_err(|e| Error::format(path, format!("row {row}: {e}")))?;
        let split = Split::parse(&rec.split)
            .ok_or_else(|| Error::format(path, format!("row {row}: unknown split {:?}", rec.split)))?;
        if rec.is_known {
            known.insert(rec.individual_id.clone());
        } else {
            unknown.insert(rec.individual_id.clone());
        }
        images.push(ImageAssignment {
            image_id: rec.image_id,
            individual_id: rec.individual_id,
            split,
        });
    }
    Ok(SplitAssignment::from_parts(images, known, unknown)?)
}

pub fn write_submission(path: &Path, predictions: &[Prediction]) -> Result<()> {
    write_rows(
        path,
        &SUBMISSION_HEADER,
        predictions.iter().map(|p| [p.image_id.as_str(), p.decision.as_str()]),
    )
}

/// `image_id -> identity`. Duplicate image ids are rejected.
pub fn read_submission(path: &Path) -> Result<BTreeMap<String, String>> {
    let mut rdr = csv_reader(path)?;
    expect_header(&mut rdr, path, &SUBMISSION_HEADER)?;
    let mut out = BTreeMap::new();
    for (row, rec) in rdr.deserialize::<(String, String)>().enumerate() {
        let (id, identity) = rec.map_err(|e| Error::format(path, format!("row {row}: {e}")))?;
        if out.insert(id.clone(), identity).is_some() {
            return Err(Error::format(path, format!("row {row}: duplicate image_id {id:?}")));
        }
    }
    Ok(out)
}

pub fn write_curve(path: &Path, curve: &ThresholdCurve) -> Result<()> {
    write_rows(
        path,
        &CURVE_HEADER,
        (0..curve.candidates.len())
            .map(|i| [curve.candidates[i], curve.baks[i], curve.baus[i], curve.scores[i]].map(|v| v.to_string())),
    )
}

pub fn write_history(path: &Path, history: &TrainingHistory) -> Result<()> {
    write_rows(
        path,
        &HISTORY_HEADER,
        history.epochs.iter().map(|e| {
            [
                e.epoch.to_string(),
                e.train_loss.to_string(),
                e.val_loss.to_string(),
                e.mined_triplets.to_string(),
                e.learning_rate.to_string(),
            ]
        }),
    )
}

/// `image_id,pc1,...,pck`.
pub fn write_coordinates<S: AsRef<str>>(path: &Path, image_ids: &[S], coords: &[Vec<f64>], k: usize) -> Result<()> {
    let header: Vec<String> = std::iter::once("image_id".to_string())
        .chain((1..=k).map(|i| format!("pc{i}")))
        .collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    write_rows(
        path,
        &header,
        image_ids.iter().zip(coords).map(|(id, row)| {
            std::iter::once(id.as_ref().to_string())
                .chain(row.iter().map(f64::to_string))
                .collect::<Vec<_>>()
        }),
    )
}
