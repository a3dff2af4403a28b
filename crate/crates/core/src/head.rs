//! Projection head: `linear(D -> D) -> GELU -> dropout -> linear(D -> out)
//! -> L2 normalize`, or `linear(D -> out) -> L2 normalize` in linear mode.
//!
//! Parameters live in one flat `f64` buffer so the optimizer and the
//! checkpoint format can treat them uniformly. Nonlinear layout:
//! `W1 (hidden x D) | b1 (hidden) | W2 (out x hidden) | b2 (out)`; linear
//! layout: `W (out x D) | b (out)`. Matrices are row-major.
//!
//! Weights are drawn Kaiming-uniform from `[-sqrt(6 / fan_in),
//! sqrt(6 / fan_in))` in the layout order above, biases start at zero.
//! Dropout is inverted (kept units scaled by `1 / (1 - p)` during training)
//! so evaluation applies no mask and no rescaling.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;
use crate::rng::Rng;

pub const DEFAULT_OUTPUT_DIM: usize = 256;
pub const DEFAULT_DROPOUT: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeadMode {
    Nonlinear,
    Linear,
}

impl HeadMode {
    pub fn as_str(self) -> &'static str {
        match self {
            HeadMode::Nonlinear => "nonlinear",
            HeadMode::Linear => "linear",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeadConfig {
    pub input_dim: usize,
    /// Equal to `input_dim` for the nonlinear head; unused in linear mode.
    pub hidden_dim: usize,
    pub output_dim: usize,
    pub dropout: f64,
    pub mode: HeadMode,
}

impl HeadConfig {
    pub fn nonlinear(input_dim: usize, output_dim: usize) -> Self {
        Self {
            input_dim,
            hidden_dim: input_dim,
            output_dim,
            dropout: DEFAULT_DROPOUT,
            mode: HeadMode::Nonlinear,
        }
    }

    pub fn linear(input_dim: usize, output_dim: usize) -> Self {
        Self {
            input_dim,
            hidden_dim: input_dim,
            output_dim,
            dropout: 0.0,
            mode: HeadMode::Linear,
        }
    }

    pub fn with_dropout(mut self, dropout: f64) -> Self {
        self.dropout = dropout;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::out_of_range("input_dim", 0, ">= 1"));
        }
        if self.output_dim == 0 {
            return Err(Error::out_of_range("output_dim", 0, ">= 1"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::out_of_range("dropout", self.dropout, "[0, 1)"));
        }
        if self.mode == HeadMode::Nonlinear && self.hidden_dim != self.input_dim {
            return Err(Error::Config(alloc::format!(
                "nonlinear head needs hidden_dim == input_dim ({} != {})",
                self.hidden_dim,
                self.input_dim
            )));
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        match self.mode {
            HeadMode::Nonlinear => {
                let (d, h, o) = (self.input_dim, self.hidden_dim, self.output_dim);
                h * d + h + o * h + o
            }
            HeadMode::Linear => self.output_dim * self.input_dim + self.output_dim,
        }
    }
}

/// Exact GELU, `x * Phi(x)` with the erf-based Gaussian CDF.
pub fn gelu(x: f64) -> f64 {
    x * normal_cdf(x)
}

pub fn gelu_grad(x: f64) -> f64 {
    const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
    normal_cdf(x) + x * INV_SQRT_2PI * libm::exp(-0.5 * x * x)
}

fn normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x * core::f64::consts::FRAC_1_SQRT_2))
}

/// Everything backward needs from one forward call.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub input: Vec<f64>,
    /// First-layer pre-activations (empty in linear mode).
    pub pre_activation: Vec<f64>,
    /// Per-unit dropout multipliers: 0 or `1 / (1 - p)`; all ones in eval.
    pub mask: Vec<f64>,
    /// Hidden activations after GELU and dropout.
    pub hidden: Vec<f64>,
    pub output: Vec<f64>,
    /// Norm of the vector before normalization.
    pub pre_norm: f64,
    /// The pre-normalization norm fell below the epsilon guard.
    pub guarded: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams {
    config: HeadConfig,
    values: Vec<f64>,
}

pub fn init_params(config: &HeadConfig, seed: u64) -> Result<HeadParams> {
    config.validate()?;
    let mut rng = Rng::new(seed);
    let mut values = vec![0.0; config.param_count()];
    let mut fill = |slice: &mut [f64], fan_in: usize| {
        let bound = math::sqrt(6.0 / fan_in as f64);
        for w in slice {
            *w = (2.0 * rng.uniform() - 1.0) * bound;
        }
    };
    let (d, h, o) = (config.input_dim, config.hidden_dim, config.output_dim);
    match config.mode {
        HeadMode::Nonlinear => {
            fill(&mut values[..h * d], d);
            let w2 = h * d + h;
            fill(&mut values[w2..w2 + o * h], h);
        }
        HeadMode::Linear => fill(&mut values[..o * d], d),
    }
    Ok(HeadParams {
        config: *config,
        values,
    })
}

impl HeadParams {
    pub fn from_values(config: HeadConfig, values: Vec<f64>) -> Result<Self> {
        config.validate()?;
        if values.len() != config.param_count() {
            return Err(Error::DimensionMismatch {
                expected: config.param_count(),
                found: values.len(),
            });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { row: 0, col: index });
        }
        Ok(Self { config, values })
    }

    pub fn config(&self) -> &HeadConfig {
        &self.config
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Runs the head on `x`. Passing a generator selects training mode and
    /// draws the dropout mask from it.
    pub fn forward(&self, x: &[f64], train: Option<&mut Rng>) -> Result<(Vec<f64>, ForwardTrace)> {
        let c = &self.config;
        if x.len() != c.input_dim {
            return Err(Error::DimensionMismatch {
                expected: c.input_dim,
                found: x.len(),
            });
        }
        let (d, h, o) = (c.input_dim, c.hidden_dim, c.output_dim);
        let (pre_activation, mask, hidden, (w, b)) = match c.mode {
            HeadMode::Nonlinear => {
                let w1 = &self.values[..h * d];
                let b1 = &self.values[h * d..h * d + h];
                let z: Vec<f64> = (0..h).map(|i| math::dot(&w1[i * d..(i + 1) * d], x) + b1[i]).collect();
                let mask = match train {
                    Some(rng) if c.dropout > 0.0 => {
                        let keep = 1.0 / (1.0 - c.dropout);
                        (0..h)
                            .map(|_| if rng.uniform() >= c.dropout { keep } else { 0.0 })
                            .collect()
                    }
                    _ => vec![1.0; h],
                };
                let a: Vec<f64> = z.iter().zip(&mask).map(|(&zi, m)| gelu(zi) * m).collect();
                let off = h * d + h;
                let w2 = &self.values[off..off + o * h];
                let b2 = &self.values[off + o * h..];
                (z, mask, a, (w2, b2))
            }
            HeadMode::Linear => {
                let w = &self.values[..o * d];
                let b = &self.values[o * d..];
                (Vec::new(), Vec::new(), Vec::new(), (w, b))
            }
        };
        let src = if c.mode == HeadMode::Linear { x } else { &hidden[..] };
        let width = src.len();
        let y: Vec<f64> = (0..o)
            .map(|i| math::dot(&w[i * width..(i + 1) * width], src) + b[i])
            .collect();
        let (output, pre_norm) = math::l2_normalize(&y);
        let trace = ForwardTrace {
            input: x.to_vec(),
            pre_activation,
            mask,
            hidden,
            output: output.clone(),
            pre_norm,
            guarded: pre_norm <= math::NORM_EPS,
        };
        Ok((output, trace))
    }

    /// Evaluation-mode output.
    pub fn embed(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.forward(x, None).map(|(out, _)| out)
    }

    /// Adds `d loss / d params` to `grads`, given `d loss / d output` for the
    /// forward call recorded in `trace`.
    pub fn backward(&self, trace: &ForwardTrace, grad_out: &[f64], grads: &mut [f64]) -> Result<()> {
        let c = &self.config;
        let (d, h, o) = (c.input_dim, c.hidden_dim, c.output_dim);
        let hidden_ok = match c.mode {
            HeadMode::Nonlinear => trace.hidden.len() == h && trace.pre_activation.len() == h && trace.mask.len() == h,
            HeadMode::Linear => true,
        };
        if trace.input.len() != d || trace.output.len() != o || !hidden_ok {
            return Err(Error::Config(alloc::string::String::from(
                "forward trace does not match head configuration",
            )));
        }
        for (len, want) in [(grad_out.len(), o), (grads.len(), self.values.len())] {
            if len != want {
                return Err(Error::DimensionMismatch {
                    expected: want,
                    found: len,
                });
            }
        }

        let gy = math::l2_normalize_backward(&trace.output, trace.pre_norm, grad_out);
        match c.mode {
            HeadMode::Linear => {
                accumulate_dense(&mut grads[..o * d + o], &gy, &trace.input);
            }
            HeadMode::Nonlinear => {
                let off = h * d + h;
                accumulate_dense(&mut grads[off..], &gy, &trace.hidden);
                let w2 = &self.values[off..off + o * h];
                let mut gz = vec![0.0; h];
                for (i, &g) in gy.iter().enumerate() {
                    for (j, w) in w2[i * h..(i + 1) * h].iter().enumerate() {
                        gz[j] += g * w;
                    }
                }
                for ((g, m), &u) in gz.iter_mut().zip(&trace.mask).zip(&trace.pre_activation) {
                    *g *= m * gelu_grad(u);
                }
                accumulate_dense(&mut grads[..off], &gz, &trace.input);
            }
        }
        Ok(())
    }
}

/// `grads = [dW | db]` for `y = W x + b` with upstream gradient `gy`.
fn accumulate_dense(grads: &mut [f64], gy: &[f64], x: &[f64]) {
    let (rows, cols) = (gy.len(), x.len());
    let (gw, gb) = grads.split_at_mut(rows * cols);
    for (i, &g) in gy.iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        for (w, &xj) in gw[i * cols..(i + 1) * cols].iter_mut().zip(x) {
            *w += g * xj;
        }
        gb[i] += g;
    }
}
