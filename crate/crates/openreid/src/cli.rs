//! Command-line surface. Every subcommand writes a manifest next to its
//! output; `replay` re-runs a manifest after checking its input digests.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use openreid_core::head::HeadMode;
use openreid_core::knn::Metric;
use openreid_core::mining::Mining;
use openreid_core::split::Split;
use openreid_core::train::Sampler;
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(
    name = "openreid",
    version,
    about = "Open-set re-identification over precomputed embeddings"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Split individuals and images into train/val/test.
    Split(SplitArgs),
    /// Train a projection head with triplet loss.
    TrainHead(TrainHeadArgs),
    /// Pick the open-set threshold on the validation split.
    Tune(TuneArgs),
    /// Classify query rows against the train split.
    Predict(PredictArgs),
    /// Score a submission against a split file.
    Evaluate(EvaluateArgs),
    /// PCA coordinates for plotting.
    Project(ProjectArgs),
    /// Re-run the command recorded in a manifest.
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadArg {
    Linear,
    Nonlinear,
}

impl From<HeadArg> for HeadMode {
    fn from(h: HeadArg) -> Self {
        match h {
            HeadArg::Linear => HeadMode::Linear,
            HeadArg::Nonlinear => HeadMode::Nonlinear,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossArg {
    Triplet,
    Matryoshka,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MiningArg {
    Random,
    #[value(name = "semi_hard", alias = "semi-hard")]
    SemiHard,
}

impl From<MiningArg> for Mining {
    fn from(m: MiningArg) -> Self {
        match m {
            MiningArg::Random => Mining::Random,
            MiningArg::SemiHard => Mining::SemiHard,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerArg {
    #[value(name = "class_balanced", alias = "class-balanced")]
    ClassBalanced,
    Shuffle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricArg {
    L2,
    Cosine,
}

impl From<MetricArg> for Metric {
    fn from(m: MetricArg) -> Self {
        match m {
            MetricArg::L2 => Metric::L2,
            MetricArg::Cosine => Metric::Cosine,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalSplit {
    Val,
    Test,
}

impl From<EvalSplit> for Split {
    fn from(s: EvalSplit) -> Self {
        match s {
            EvalSplit::Val => Split::Val,
            EvalSplit::Test => Split::Test,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SplitArgs {
    #[arg(long)]
    pub meta: PathBuf,
    #[arg(long)]
    pub emb: PathBuf,
    /// Fraction of individuals kept as known.
    #[arg(long, default_value_t = 0.6)]
    pub known_frac: f64,
    /// Fraction of individuals held out as unknown in validation.
    #[arg(long, default_value_t = 0.2)]
    pub unknown_val_frac: f64,
    /// Train/val/test shares of each known individual's images.
    #[arg(long, value_delimiter = ',', num_args = 3, default_values_t = [0.6, 0.2, 0.2])]
    pub image_fracs: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct TrainHeadArgs {
    #[arg(long)]
    pub meta: PathBuf,
    #[arg(long)]
    pub emb: PathBuf,
    #[arg(long)]
    pub split: PathBuf,
    #[arg(long, value_enum, default_value_t = HeadArg::Nonlinear)]
    pub head: HeadArg,
    #[arg(long, default_value_t = openreid_core::head::DEFAULT_OUTPUT_DIM)]
    pub output_dim: usize,
    /// Ignored by the linear head.
    #[arg(long, default_value_t = openreid_core::head::DEFAULT_DROPOUT)]
    pub dropout: f64,
    #[arg(long, value_enum, default_value_t = LossArg::Triplet)]
    pub loss: LossArg,
    /// Prefix widths for the matryoshka loss; defaults to
    /// output_dim/8, /4, /2 and output_dim.
    #[arg(long, value_delimiter = ',')]
    pub matryoshka_dims: Option<Vec<usize>>,
    #[arg(long, value_enum, default_value_t = MiningArg::SemiHard)]
    pub mining: MiningArg,
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    #[arg(long, default_value_t = 200)]
    pub batch: usize,
    #[arg(long, default_value_t = 5e-4)]
    pub lr: f64,
    #[arg(long, default_value_t = 10)]
    pub warmup: usize,
    #[arg(long, default_value_t = 1.0)]
    pub margin: f64,
    #[arg(long, value_enum, default_value_t = SamplerArg::ClassBalanced)]
    pub sampler: SamplerArg,
    #[arg(long, default_value_t = 4)]
    pub images_per_individual: usize,
    /// Cap on randomly mined triplets per batch; defaults to --batch.
    #[arg(long)]
    pub max_random_triplets: Option<usize>,
    #[arg(long, default_value_t = 1000)]
    pub val_triplets: usize,
    /// Also write `epoch_NNNN.ckpt` every this many epochs.
    #[arg(long)]
    pub checkpoint_every: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
}

impl TrainHeadArgs {
    pub fn sampler(&self) -> Sampler {
        match self.sampler {
            SamplerArg::ClassBalanced => Sampler::ClassBalanced {
                images_per_individual: self.images_per_individual,
            },
            SamplerArg::Shuffle => Sampler::Shuffle,
        }
    }

    pub fn matryoshka_dims(&self) -> Vec<usize> {
        match &self.matryoshka_dims {
            Some(d) => d.clone(),
            None => {
                let mut d: Vec<usize> = [8, 4, 2, 1]
                    .iter()
                    .map(|div| self.output_dim / div)
                    .filter(|&w| w > 0)
                    .collect();
                d.dedup();
                d
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct TuneArgs {
    #[arg(long)]
    pub meta: PathBuf,
    #[arg(long)]
    pub emb: PathBuf,
    #[arg(long)]
    pub split: PathBuf,
    /// Project every embedding through this head first.
    #[arg(long)]
    pub head_ckpt: Option<PathBuf>,
    #[arg(long, default_value_t = openreid_core::knn::DEFAULT_K)]
    pub k: usize,
    #[arg(long, value_enum, default_value_t = MetricArg::L2)]
    pub metric: MetricArg,
    #[arg(long, default_value_t = openreid_core::threshold::DEFAULT_CANDIDATES)]
    pub candidates: usize,
    /// Grid half-width in MADs around the median.
    #[arg(long, default_value_t = openreid_core::threshold::DEFAULT_SPREAD)]
    pub spread: f64,
    /// Output directory for curve.csv and threshold.json.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct PredictArgs {
    #[arg(long)]
    pub meta: PathBuf,
    #[arg(long)]
    pub emb: PathBuf,
    #[arg(long)]
    pub split: PathBuf,
    #[arg(long)]
    pub head_ckpt: Option<PathBuf>,
    #[arg(long, default_value_t = openreid_core::knn::DEFAULT_K)]
    pub k: usize,
    #[arg(long, value_enum, default_value_t = MetricArg::L2)]
    pub metric: MetricArg,
    /// Distance above which a query is `new_individual`; accepts `inf`.
    #[arg(long)]
    #[serde(with = "float_text")]
    pub threshold: f64,
    /// Which split's rows to classify when no query files are given.
    #[arg(long, value_enum, default_value_t = EvalSplit::Test)]
    pub on: EvalSplit,
    /// External query metadata; requires --query-emb.
    #[arg(long, requires = "query_emb")]
    pub query_meta: Option<PathBuf>,
    #[arg(long, requires = "query_meta")]
    pub query_emb: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct EvaluateArgs {
    /// Submission CSV (`image_id,identity`).
    #[arg(long)]
    pub pred: PathBuf,
    /// Split CSV carrying the ground truth.
    #[arg(long)]
    pub truth: PathBuf,
    #[arg(long, value_enum, default_value_t = EvalSplit::Test)]
    pub on: EvalSplit,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ProjectArgs {
    #[arg(long)]
    pub meta: PathBuf,
    #[arg(long)]
    pub emb: PathBuf,
    #[arg(long, default_value_t = 2)]
    pub k: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
}

/// JSON has no infinity; non-finite floats travel as strings.
mod float_text {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_str(&v.to_string())
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}
