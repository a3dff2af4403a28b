//! Projection-head training with online triplet mining.
//!
//! Each epoch draws batches from the sampler, runs the head in training mode
//! (dropout on), mines triplets on those outputs, and takes one Adam step per
//! batch on the mean loss over the mined triplets. Validation loss is the
//! mean loss of a fixed set of random valid triplets drawn once from the
//! validation split and evaluated with dropout off. The parameters from the
//! epoch with the lowest validation loss are returned.
//!
//! Random streams, all derived from `config.seed` with [`Rng::derive`]:
//! initial weights use `Rng::new(seed)`; the epoch's batch order uses
//! `(seed, 1, epoch)`; random mining `(seed, 2, epoch)`; the validation
//! triplets `(seed, 4, 0)`; and the dropout mask of the `i`-th sample of the
//! epoch `(seed + 3, epoch, i)`.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::head::{init_params, ForwardTrace, HeadConfig, HeadParams};
use crate::loss::{LossKind, DEFAULT_MARGIN};
use crate::math;
use crate::matrix::Matrix;
use crate::mining::{mine_random, mine_semi_hard, Mining, Triplet};
use crate::optim::{adam_step, AdamConfig, AdamState, LrSchedule};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sampler {
    /// `batch_size / images_per_individual` individuals per batch, each
    /// contributing `images_per_individual` images. Individuals with fewer
    /// images contribute all of them plus draws with replacement.
    ClassBalanced { images_per_individual: usize },
    /// Plain shuffle of all rows, chunked into batches.
    Shuffle,
}

impl Default for Sampler {
    fn default() -> Self {
        Sampler::ClassBalanced {
            images_per_individual: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub margin: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Peak learning rate.
    pub learning_rate: f64,
    pub warmup_epochs: usize,
    pub mining: Mining,
    pub loss: LossKind,
    pub adam: AdamConfig,
    pub sampler: Sampler,
    /// Cap on randomly mined triplets per batch; `None` means `batch_size`.
    pub max_random_triplets: Option<usize>,
    /// Size of the fixed validation triplet set.
    pub val_triplets: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            margin: DEFAULT_MARGIN,
            batch_size: 200,
            epochs: 100,
            learning_rate: 5e-4,
            warmup_epochs: 10,
            mining: Mining::SemiHard,
            loss: LossKind::Triplet,
            adam: AdamConfig::default(),
            sampler: Sampler::default(),
            max_random_triplets: None,
            val_triplets: 1000,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn schedule(&self) -> LrSchedule {
        LrSchedule {
            peak: self.learning_rate,
            warmup_epochs: self.warmup_epochs,
            epochs: self.epochs,
        }
    }

    pub fn validate(&self, head: &HeadConfig) -> Result<()> {
        if !(self.margin > 0.0 && self.margin.is_finite()) {
            return Err(Error::out_of_range("margin", self.margin, "> 0"));
        }
        if self.batch_size < 2 {
            return Err(Error::out_of_range("batch_size", self.batch_size, ">= 2"));
        }
        if let Sampler::ClassBalanced { images_per_individual } = self.sampler {
            if images_per_individual < 2 || images_per_individual > self.batch_size / 2 {
                return Err(Error::out_of_range(
                    "images_per_individual",
                    images_per_individual,
                    alloc::format!("2..={}", self.batch_size / 2),
                ));
            }
        }
        if self.val_triplets == 0 {
            return Err(Error::out_of_range("val_triplets", 0, ">= 1"));
        }
        self.schedule().validate()?;
        self.loss.validate(head.output_dim)?;
        head.validate()
    }
}

pub fn lr_at(config: &TrainConfig, epoch: usize) -> f64 {
    config.schedule().at(epoch)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// Mean loss over every triplet mined this epoch; zero if none.
    pub train_loss: f64,
    pub val_loss: f64,
    pub mined_triplets: usize,
    pub batches: usize,
    pub learning_rate: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingHistory {
    pub epochs: Vec<EpochRecord>,
}

impl TrainingHistory {
    /// Epoch record with the lowest validation loss (earliest on ties).
    pub fn best(&self) -> Option<&EpochRecord> {
        self.epochs
            .iter()
            .fold(None, |best: Option<&EpochRecord>, e| match best {
                Some(b) if b.val_loss <= e.val_loss => Some(b),
                _ => Some(e),
            })
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    /// Parameters after the best-validation epoch.
    pub best: HeadParams,
    pub best_epoch: usize,
    /// Parameters after the last epoch.
    pub last: HeadParams,
    pub history: TrainingHistory,
}

/// Rows plus integer class ids, the form the loop works on.
struct Labeled {
    rows: Vec<Vec<f64>>,
    classes: Vec<usize>,
}

impl Labeled {
    fn new<S: AsRef<str>>(m: &Matrix, labels: &[S], names: &mut BTreeMap<String, usize>) -> Result<Self> {
        if labels.len() != m.rows() {
            return Err(Error::DimensionMismatch {
                expected: m.rows(),
                found: labels.len(),
            });
        }
        if let Some((row, col)) = m.find_non_finite() {
            return Err(Error::NonFinite { row, col });
        }
        let classes = labels
            .iter()
            .map(|l| {
                let next = names.len();
                *names.entry(String::from(l.as_ref())).or_insert(next)
            })
            .collect();
        Ok(Self {
            rows: m.iter_rows().map(math::to_f64).collect(),
            classes,
        })
    }
}

/// Runs the head over `inputs`. With `dropout = Some((seed, epoch, first))`
/// sample `i` uses training mode with the stream `(seed, epoch, first + i)`.
pub fn forward_batch<X: AsRef<[f64]>>(
    params: &HeadParams,
    inputs: &[X],
    dropout: Option<(u64, u64, u64)>,
) -> Result<(Vec<Vec<f64>>, Vec<ForwardTrace>)> {
    let mut outputs = Vec::with_capacity(inputs.len());
    let mut traces = Vec::with_capacity(inputs.len());
    for (i, x) in inputs.iter().enumerate() {
        let (out, trace) = match dropout {
            Some((seed, epoch, first)) => {
                let mut rng = Rng::derive(seed, epoch, first + i as u64);
                params.forward(x.as_ref(), Some(&mut rng))?
            }
            None => params.forward(x.as_ref(), None)?,
        };
        outputs.push(out);
        traces.push(trace);
    }
    Ok((outputs, traces))
}

/// Mean loss over `triplets` and its gradient with respect to each output.
pub fn triplet_objective<E: AsRef<[f64]>>(
    outputs: &[E],
    triplets: &[Triplet],
    loss: &LossKind,
    margin: f64,
) -> Result<(f64, Vec<Vec<f64>>)> {
    let dim = outputs.first().map_or(0, |o| o.as_ref().len());
    let mut grads = alloc::vec![alloc::vec![0.0; dim]; outputs.len()];
    if triplets.is_empty() {
        return Ok((0.0, grads));
    }
    let scale = 1.0 / triplets.len() as f64;
    let mut total = 0.0;
    for t in triplets {
        let (l, g) = loss.loss_grad(
            outputs[t.anchor].as_ref(),
            outputs[t.positive].as_ref(),
            outputs[t.negative].as_ref(),
            margin,
        )?;
        total += l;
        if l == 0.0 {
            continue;
        }
        for (row, gk) in [t.anchor, t.positive, t.negative].into_iter().zip(g) {
            for (acc, v) in grads[row].iter_mut().zip(gk) {
                *acc += scale * v;
            }
        }
    }
    Ok((total * scale, grads))
}

pub fn backward_batch(params: &HeadParams, traces: &[ForwardTrace], grad_outputs: &[Vec<f64>]) -> Result<Vec<f64>> {
    let mut grads = alloc::vec![0.0; params.len()];
    for (trace, g) in traces.iter().zip(grad_outputs) {
        if g.iter().all(|&x| x == 0.0) {
            continue;
        }
        params.backward(trace, g, &mut grads)?;
    }
    Ok(grads)
}

/// Mean loss over fixed `triplets` and its gradient with respect to every
/// head parameter.
pub fn batch_loss_and_grad<X: AsRef<[f64]>>(
    params: &HeadParams,
    inputs: &[X],
    triplets: &[Triplet],
    loss: &LossKind,
    margin: f64,
    dropout: Option<(u64, u64, u64)>,
) -> Result<(f64, Vec<f64>)> {
    let (outputs, traces) = forward_batch(params, inputs, dropout)?;
    let (value, grad_outputs) = triplet_objective(&outputs, triplets, loss, margin)?;
    Ok((value, backward_batch(params, &traces, &grad_outputs)?))
}

/// Mean loss over `triplets`, evaluation mode.
pub fn evaluate_triplets<X: AsRef<[f64]>>(
    params: &HeadParams,
    inputs: &[X],
    triplets: &[Triplet],
    loss: &LossKind,
    margin: f64,
) -> Result<f64> {
    let (outputs, _) = forward_batch(params, inputs, None)?;
    Ok(triplet_objective(&outputs, triplets, loss, margin)?.0)
}

fn sample_batches(classes: &[usize], cfg: &TrainConfig, rng: &mut Rng) -> Vec<Vec<usize>> {
    match cfg.sampler {
        Sampler::Shuffle => {
            let mut order: Vec<usize> = (0..classes.len()).collect();
            rng.shuffle(&mut order);
            order.chunks(cfg.batch_size).map(<[usize]>::to_vec).collect()
        }
        Sampler::ClassBalanced {
            images_per_individual: q,
        } => {
            let mut members: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
            for (row, &c) in classes.iter().enumerate() {
                members.entry(c).or_default().push(row);
            }
            let mut ids: Vec<usize> = members.keys().copied().collect();
            rng.shuffle(&mut ids);
            let per_batch = (cfg.batch_size / q).max(2);
            let mut groups: Vec<Vec<usize>> = ids.chunks(per_batch).map(<[usize]>::to_vec).collect();
            // A lone trailing individual has no negatives.
            if groups.len() > 1 && groups.last().is_some_and(|g| g.len() < 2) {
                let tail = groups.pop().unwrap_or_default();
                if let Some(prev) = groups.last_mut() {
                    prev.extend(tail);
                }
            }
            groups
                .into_iter()
                .map(|group| {
                    let mut batch = Vec::with_capacity(group.len() * q);
                    for c in group {
                        let mut rows = members[&c].clone();
                        if rows.len() >= q {
                            rng.shuffle(&mut rows);
                            batch.extend_from_slice(&rows[..q]);
                        } else {
                            let extra: Vec<usize> = (0..q - rows.len()).map(|_| rows[rng.index(rows.len())]).collect();
                            batch.extend(rows);
                            batch.extend(extra);
                        }
                    }
                    batch
                })
                .collect()
        }
    }
}

/// Trains a head from scratch.
pub fn train<S: AsRef<str>, T: AsRef<str>>(
    train_rows: &Matrix,
    train_labels: &[S],
    val_rows: &Matrix,
    val_labels: &[T],
    head: &HeadConfig,
    config: &TrainConfig,
) -> Result<TrainOutput> {
    train_with(train_rows, train_labels, val_rows, val_labels, head, config, |_, _| {})
}

/// [`train`], calling `on_epoch` after every epoch with the record and the
/// current parameters.
pub fn train_with<S: AsRef<str>, T: AsRef<str>>(
    train_rows: &Matrix,
    train_labels: &[S],
    val_rows: &Matrix,
    val_labels: &[T],
    head: &HeadConfig,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord, &HeadParams),
) -> Result<TrainOutput> {
    config.validate(head)?;
    for m in [train_rows, val_rows] {
        if m.cols() != head.input_dim {
            return Err(Error::DimensionMismatch {
                expected: head.input_dim,
                found: m.cols(),
            });
        }
    }
    let train_names: BTreeSet<&str> = train_labels.iter().map(AsRef::as_ref).collect();
    let overlap: Vec<String> = val_labels
        .iter()
        .map(AsRef::as_ref)
        .filter(|l| train_names.contains(l))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .map(String::from)
        .collect();
    if !overlap.is_empty() {
        return Err(Error::OverlappingSplits(overlap));
    }
    if train_names.len() < 2 {
        return Err(Error::TooFewIndividuals {
            needed: 2,
            found: train_names.len(),
        });
    }

    let mut names = BTreeMap::new();
    let train_set = Labeled::new(train_rows, train_labels, &mut names)?;
    let val_set = Labeled::new(val_rows, val_labels, &mut names)?;
    let val_triplets = mine_random(
        &val_set.classes,
        &mut Rng::derive(config.seed, 4, 0),
        config.val_triplets,
    );
    if val_triplets.is_empty() {
        return Err(Error::NoValidationTriplets);
    }

    let mut params = init_params(head, config.seed)?;
    let mut state = AdamState::new(params.len());
    let schedule = config.schedule();
    let max_random = config.max_random_triplets.unwrap_or(config.batch_size);
    let mut history = TrainingHistory::default();
    let mut best: Option<(f64, usize, HeadParams)> = None;

    for epoch in 0..config.epochs {
        let lr = schedule.at(epoch);
        let batches = sample_batches(
            &train_set.classes,
            config,
            &mut Rng::derive(config.seed, 1, epoch as u64),
        );
        let mut mining_rng = Rng::derive(config.seed, 2, epoch as u64);
        let mut loss_sum = 0.0;
        let mut mined = 0usize;
        let mut sample_offset = 0u64;
        for batch in &batches {
            let inputs: Vec<&[f64]> = batch.iter().map(|&r| train_set.rows[r].as_slice()).collect();
            let labels: Vec<usize> = batch.iter().map(|&r| train_set.classes[r]).collect();
            let dropout = (config.seed.wrapping_add(3), epoch as u64, sample_offset);
            sample_offset += batch.len() as u64;
            let (outputs, traces) = forward_batch(&params, &inputs, Some(dropout))?;
            let triplets = match config.mining {
                Mining::SemiHard => mine_semi_hard(&outputs, &labels, config.margin),
                Mining::Random => mine_random(&labels, &mut mining_rng, max_random),
            };
            if triplets.is_empty() {
                continue;
            }
            let (value, grad_outputs) = triplet_objective(&outputs, &triplets, &config.loss, config.margin)?;
            let grads = backward_batch(&params, &traces, &grad_outputs)?;
            adam_step(params.values_mut(), &grads, &mut state, lr, &config.adam)?;
            loss_sum += value * triplets.len() as f64;
            mined += triplets.len();
        }
        if mined == 0 {
            log::warn!("epoch {}: no triplets mined, parameters unchanged", epoch + 1);
        }
        let val_loss = evaluate_triplets(&params, &val_set.rows, &val_triplets, &config.loss, config.margin)?;
        let record = EpochRecord {
            epoch: epoch + 1,
            train_loss: if mined > 0 { loss_sum / mined as f64 } else { 0.0 },
            val_loss,
            mined_triplets: mined,
            batches: batches.len(),
            learning_rate: lr,
        };
        if best.as_ref().is_none_or(|(v, _, _)| val_loss < *v) {
            best = Some((val_loss, epoch + 1, params.clone()));
        }
        on_epoch(&record, &params);
        history.epochs.push(record);
    }

    let (_, best_epoch, best) = best.ok_or(Error::EmptyInput)?;
    Ok(TrainOutput {
        best,
        best_epoch,
        last: params,
        history,
    })
}
