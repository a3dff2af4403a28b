//! The metadata CSV + EMB1 pair that carries an [`EmbeddingDataset`].

use std::path::Path;

use openreid_core::dataset::{EmbeddingDataset, MetadataRecord, SplitHint};
use serde::{Deserialize, Serialize};

use crate::emb1;
use crate::error::{Error, Result};
use crate::tables::{csv_reader, csv_writer, expect_header, finish};

pub const METADATA_HEADER: [&str; 4] = ["image_id", "individual_id", "species", "split_hint"];

#[derive(Serialize, Deserialize)]
struct MetadataRow {
    image_id: String,
    individual_id: String,
    species: String,
    split_hint: String,
}

pub fn read_metadata(path: &Path) -> Result<Vec<MetadataRecord>> {
    let mut rdr = csv_reader(path)?;
    expect_header(&mut rdr, path, &METADATA_HEADER)?;
    let mut out = Vec::new();
    for (row, rec) in rdr.deserialize::<MetadataRow>().enumerate() {
        let rec = rec.map_err(|e| Error::format(path, format!("row {row}: {e}")))?;
        let split_hint = match rec.split_hint.as_str() {
            "" => None,
            s => Some(
                SplitHint::parse(s)
                    .ok_or_else(|| Error::format(path, format!("row {row}: unknown split_hint {s:?}")))?,
            ),
        };
        out.push(MetadataRecord {
            image_id: rec.image_id,
            individual_id: Some(rec.individual_id).filter(|s| !s.is_empty()),
            species: rec.species,
            split_hint,
        });
    }
    Ok(out)
}

pub fn write_metadata(path: &Path, records: &[MetadataRecord]) -> Result<()> {
    let mut w = csv_writer(path)?;
    for r in records {
        w.serialize(MetadataRow {
            image_id: r.image_id.clone(),
            individual_id: r.individual_id.clone().unwrap_or_default(),
            species: r.species.clone(),
            split_hint: r.split_hint.map_or("", SplitHint::as_str).to_string(),
        })
        .map_err(|e| Error::format(path, e.to_string()))?;
    }
    if records.is_empty() {
        w.write_record(METADATA_HEADER)
            .map_err(|e| Error::format(path, e.to_string()))?;
    }
    finish(w, path)
}

/// Reads and validates a dataset. Row order follows the metadata file.
pub fn read_dataset(meta_path: &Path, matrix_path: &Path) -> Result<EmbeddingDataset> {
    let records = read_metadata(meta_path)?;
    let (n, _) = emb1::read_header(matrix_path)?;
    if n != records.len() {
        return Err(Error::format(
            matrix_path,
            format!(
                "row count mismatch: metadata has {} rows, EMB1 header has {n}",
                records.len()
            ),
        ));
    }
    let matrix = emb1::read(matrix_path)?;
    Ok(EmbeddingDataset::new(records, matrix)?)
}

pub fn write_dataset(dataset: &EmbeddingDataset, meta_path: &Path, matrix_path: &Path) -> Result<()> {
    write_metadata(meta_path, dataset.records())?;
    emb1::write(matrix_path, dataset.matrix())
}
