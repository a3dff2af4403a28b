//! Subcommand bodies. Each one reads its inputs, does the work through
//! `openreid-core`, writes its outputs plus a manifest and returns the
//! in-memory result.

use std::fs;
use std::path::Path;

use openreid_core::dataset::EmbeddingDataset;
use openreid_core::head::{HeadConfig, HeadMode, HeadParams};
use openreid_core::knn::{build_index, Prediction};
use openreid_core::loss::LossKind;
use openreid_core::math::to_f64;
use openreid_core::metrics::{score, ScoreReport};
use openreid_core::pca::fit_pca;
use openreid_core::split::{evaluation_view, stratified_open_set_split, Split, SplitAssignment, SplitConfig};
use openreid_core::threshold::{candidate_grid, tune_threshold, RobustStats, ThresholdCurve};
use openreid_core::train::{train_with, TrainConfig, TrainOutput};
use openreid_core::Matrix;
use serde::{Deserialize, Serialize};

use crate::cli::{
    Command, EvaluateArgs, LossArg, PredictArgs, ProjectArgs, ReplayArgs, SplitArgs, TrainHeadArgs, TuneArgs,
};
use crate::error::{Error, Result};
use crate::manifest::{self, RunManifest};
use crate::{checkpoint, store, tables};

pub const CURVE_FILE: &str = "curve.csv";
pub const THRESHOLD_FILE: &str = "threshold.json";
pub const HEAD_FILE: &str = "head.ckpt";
pub const HISTORY_FILE: &str = "history.csv";

/// Contents of `threshold.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdReport {
    pub threshold: f64,
    pub baks: f64,
    pub baus: f64,
    #[serde(rename = "final")]
    pub final_score: f64,
    pub k: usize,
    pub metric: String,
    pub median: f64,
    pub mad: f64,
    pub candidates: usize,
    /// The MAD was zero and the grid collapsed to the median.
    pub degenerate_grid: bool,
}

/// Contents of the evaluation JSON.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreJson {
    pub baks: f64,
    pub baus: f64,
    #[serde(rename = "final")]
    pub final_score: f64,
}

impl From<ScoreReport> for ScoreJson {
    fn from(r: ScoreReport) -> Self {
        Self {
            baks: r.baks,
            baus: r.baus,
            final_score: r.final_score,
        }
    }
}

pub fn run(command: &Command) -> Result<()> {
    match command {
        Command::Split(a) => split(a).map(drop),
        Command::TrainHead(a) => {
            let out = train_head(a)?;
            eprintln!(
                "best epoch {} (val loss {})",
                out.best_epoch,
                out.history.epochs[out.best_epoch - 1].val_loss
            );
            Ok(())
        }
        Command::Tune(a) => {
            let (report, _) = tune(a)?;
            eprintln!("threshold {} (val final {})", report.threshold, report.final_score);
            Ok(())
        }
        Command::Predict(a) => predict(a).map(drop),
        Command::Evaluate(a) => {
            let s = evaluate(a)?;
            eprintln!("baks {} baus {} final {}", s.baks, s.baus, s.final_score);
            Ok(())
        }
        Command::Project(a) => project(a).map(drop),
        Command::Replay(a) => replay(a),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Usage(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Reads a split file and checks that it lists the dataset's images in
/// dataset order.
fn read_aligned_split(dataset: &EmbeddingDataset, path: &Path) -> Result<SplitAssignment> {
    let a = tables::read_split(path)?;
    if a.images.len() != dataset.len() {
        return Err(Error::format(
            path,
            format!("split has {} rows, dataset has {}", a.images.len(), dataset.len()),
        ));
    }
    for (row, (img, rec)) in a.images.iter().zip(dataset.records()).enumerate() {
        if img.image_id != rec.image_id {
            return Err(Error::format(
                path,
                format!(
                    "row {row}: image {:?} where the metadata has {:?}",
                    img.image_id, rec.image_id
                ),
            ));
        }
    }
    Ok(a)
}

/// Replaces every embedding with its head output (stored as `f32`).
pub fn apply_head(dataset: EmbeddingDataset, head: &HeadParams) -> Result<EmbeddingDataset> {
    let cfg = head.config();
    if dataset.dim() != cfg.input_dim {
        return Err(openreid_core::Error::DimensionMismatch {
            expected: cfg.input_dim,
            found: dataset.dim(),
        }
        .into());
    }
    let rows = dataset
        .matrix()
        .iter_rows()
        .map(|r| head.embed(&to_f64(r)))
        .collect::<openreid_core::Result<Vec<_>>>()?;
    Ok(dataset.with_matrix(Matrix::from_f64_rows(cfg.output_dim, &rows)?)?)
}

fn load(meta: &Path, emb: &Path, head_ckpt: Option<&Path>) -> Result<EmbeddingDataset> {
    let ds = store::read_dataset(meta, emb)?;
    match head_ckpt {
        Some(p) => apply_head(ds, &checkpoint::read(p)?),
        None => Ok(ds),
    }
}

pub fn split(args: &SplitArgs) -> Result<SplitAssignment> {
    let ds = store::read_dataset(&args.meta, &args.emb)?;
    let fracs: [f64; 3] = args
        .image_fracs
        .as_slice()
        .try_into()
        .map_err(|_| Error::Usage("--image-fracs takes exactly three values".into()))?;
    let cfg = SplitConfig {
        known_fraction: args.known_frac,
        unknown_val_fraction: args.unknown_val_frac,
        image_fractions: fracs,
        seed: args.seed,
    };
    let assignment = stratified_open_set_split(&ds, &cfg)?;
    tables::write_split(&args.out, &assignment)?;
    RunManifest::new("split", Some(args.seed), args)?
        .input("meta", &args.meta)?
        .input("emb", &args.emb)?
        .write(&manifest::path_for_file(&args.out))?;
    Ok(assignment)
}

pub fn train_head(args: &TrainHeadArgs) -> Result<TrainOutput> {
    let ds = store::read_dataset(&args.meta, &args.emb)?;
    let a = read_aligned_split(&ds, &args.split)?;
    let head = match HeadMode::from(args.head) {
        HeadMode::Nonlinear => HeadConfig::nonlinear(ds.dim(), args.output_dim).with_dropout(args.dropout),
        HeadMode::Linear => HeadConfig::linear(ds.dim(), args.output_dim),
    };
    let config = TrainConfig {
        margin: args.margin,
        batch_size: args.batch,
        epochs: args.epochs,
        learning_rate: args.lr,
        warmup_epochs: args.warmup,
        mining: args.mining.into(),
        loss: match args.loss {
            LossArg::Triplet => LossKind::Triplet,
            LossArg::Matryoshka => LossKind::Matryoshka(args.matryoshka_dims()),
        },
        sampler: args.sampler(),
        max_random_triplets: args.max_random_triplets,
        val_triplets: args.val_triplets,
        seed: args.seed,
        ..TrainConfig::default()
    };
    if args.checkpoint_every == Some(0) {
        return Err(Error::Usage("--checkpoint-every must be >= 1".into()));
    }

    let train_rows = a.rows_in(Split::Train);
    // Validation individuals must not appear in train: use the unknown ones.
    let val_rows: Vec<usize> = a
        .rows_in(Split::Val)
        .into_iter()
        .filter(|&r| !a.is_known(&a.images[r].individual_id))
        .collect();
    let labels = |rows: &[usize]| -> Vec<&str> { rows.iter().map(|&r| a.images[r].individual_id.as_str()).collect() };

    create_dir(&args.out_dir)?;
    let mut write_error = None;
    let out = train_with(
        &ds.matrix().select_rows(&train_rows),
        &labels(&train_rows),
        &ds.matrix().select_rows(&val_rows),
        &labels(&val_rows),
        &head,
        &config,
        |record, params| {
            if let Some(every) = args.checkpoint_every {
                if record.epoch % every == 0 && write_error.is_none() {
                    let path = args.out_dir.join(format!("epoch_{:04}.ckpt", record.epoch));
                    write_error = checkpoint::write(&path, params).err();
                }
            }
        },
    )?;
    if let Some(e) = write_error {
        return Err(e);
    }
    checkpoint::write(&args.out_dir.join(HEAD_FILE), &out.best)?;
    tables::write_history(&args.out_dir.join(HISTORY_FILE), &out.history)?;
    RunManifest::new("train-head", Some(args.seed), args)?
        .input("meta", &args.meta)?
        .input("emb", &args.emb)?
        .input("split", &args.split)?
        .write(&manifest::path_for_dir(&args.out_dir))?;
    Ok(out)
}

pub fn tune(args: &TuneArgs) -> Result<(ThresholdReport, ThresholdCurve)> {
    let ds = load(&args.meta, &args.emb, args.head_ckpt.as_deref())?;
    let a = read_aligned_split(&ds, &args.split)?;
    let train = ds.subset(&a.rows_in(Split::Train));
    let val = ds.subset(&a.rows_in(Split::Val));
    let index = build_index(&train, args.metric.into())?;
    let stats = RobustStats::from_values(&index.cross_species_nn_distances()?)?;
    let grid = candidate_grid(stats, args.candidates, args.spread)?;
    if grid.degenerate {
        log::warn!("cross-species distances have zero MAD; the grid is the median alone");
    }
    let truth = evaluation_view(&a, Split::Val)?;
    let curve = tune_threshold(&index, &val, &truth, args.k, &grid.values)?;
    let b = curve.best_index;
    let report = ThresholdReport {
        threshold: curve.candidates[b],
        baks: curve.baks[b],
        baus: curve.baus[b],
        final_score: curve.scores[b],
        k: args.k,
        metric: index.metric().as_str().to_string(),
        median: stats.median,
        mad: stats.mad,
        candidates: curve.candidates.len(),
        degenerate_grid: grid.degenerate,
    };
    create_dir(&args.out)?;
    tables::write_curve(&args.out.join(CURVE_FILE), &curve)?;
    write_json(&args.out.join(THRESHOLD_FILE), &report)?;
    RunManifest::new("tune", None, args)?
        .input("meta", &args.meta)?
        .input("emb", &args.emb)?
        .input("split", &args.split)?
        .optional_input("head_ckpt", args.head_ckpt.as_deref())?
        .write(&manifest::path_for_dir(&args.out))?;
    Ok((report, curve))
}

pub fn predict(args: &PredictArgs) -> Result<Vec<Prediction>> {
    let head = args.head_ckpt.as_deref().map(checkpoint::read).transpose()?;
    let with_head = |ds: EmbeddingDataset| match &head {
        Some(h) => apply_head(ds, h),
        None => Ok(ds),
    };
    let ds = with_head(store::read_dataset(&args.meta, &args.emb)?)?;
    let a = read_aligned_split(&ds, &args.split)?;
    let index = build_index(&ds.subset(&a.rows_in(Split::Train)), args.metric.into())?;
    let queries = match (&args.query_meta, &args.query_emb) {
        (Some(m), Some(e)) => with_head(store::read_dataset(m, e)?)?,
        _ => ds.subset(&a.rows_in(args.on.into())),
    };
    let predictions = index.predict_all(&queries, args.k, args.threshold)?;
    tables::write_submission(&args.out, &predictions)?;
    RunManifest::new("predict", None, args)?
        .input("meta", &args.meta)?
        .input("emb", &args.emb)?
        .input("split", &args.split)?
        .optional_input("head_ckpt", args.head_ckpt.as_deref())?
        .optional_input("query_meta", args.query_meta.as_deref())?
        .optional_input("query_emb", args.query_emb.as_deref())?
        .write(&manifest::path_for_file(&args.out))?;
    Ok(predictions)
}

pub fn evaluate(args: &EvaluateArgs) -> Result<ScoreJson> {
    let predicted = tables::read_submission(&args.pred)?;
    let truth = evaluation_view(&tables::read_split(&args.truth)?, args.on.into())?;
    let report: ScoreJson = score(&truth.with_prediction_map(&predicted)?)?.into();
    write_json(&args.out, &report)?;
    RunManifest::new("evaluate", None, args)?
        .input("pred", &args.pred)?
        .input("truth", &args.truth)?
        .write(&manifest::path_for_file(&args.out))?;
    Ok(report)
}

pub fn project(args: &ProjectArgs) -> Result<Vec<Vec<f64>>> {
    let ds = store::read_dataset(&args.meta, &args.emb)?;
    let model = fit_pca(ds.matrix(), args.k)?;
    let coords = model.project(ds.matrix())?;
    let ids: Vec<&str> = ds.records().iter().map(|r| r.image_id.as_str()).collect();
    tables::write_coordinates(&args.out, &ids, &coords, args.k)?;
    RunManifest::new("project", None, args)?
        .input("meta", &args.meta)?
        .input("emb", &args.emb)?
        .write(&manifest::path_for_file(&args.out))?;
    Ok(coords)
}

pub fn replay(args: &ReplayArgs) -> Result<()> {
    let m = RunManifest::read(&args.manifest)?;
    m.verify_inputs()?;
    fn params<T: serde::de::DeserializeOwned>(m: &RunManifest, path: &Path) -> Result<T> {
        serde_json::from_value(m.params.clone()).map_err(|e| Error::format(path, e.to_string()))
    }
    let p = &args.manifest;
    let command = match m.subcommand.as_str() {
        "split" => Command::Split(params(&m, p)?),
        "train-head" => Command::TrainHead(params(&m, p)?),
        "tune" => Command::Tune(params(&m, p)?),
        "predict" => Command::Predict(params(&m, p)?),
        "evaluate" => Command::Evaluate(params(&m, p)?),
        "project" => Command::Project(params(&m, p)?),
        other => return Err(Error::format(p, format!("unknown subcommand {other:?}"))),
    };
    run(&command)
}
