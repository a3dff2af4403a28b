//! Adam and the warmup + cosine learning-rate schedule.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    /// Steps taken so far.
    pub t: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }
}

/// One bias-corrected Adam update. The gradient is checked for finiteness
/// before anything is modified.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, lr: f64, cfg: &AdamConfig) -> Result<()> {
    if grads.len() != params.len() || state.m.len() != params.len() || state.v.len() != params.len() {
        return Err(Error::DimensionMismatch {
            expected: params.len(),
            found: grads.len(),
        });
    }
    if let Some(index) = grads.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFiniteGradient { index });
    }
    state.t += 1;
    let t = state.t as f64;
    let c1 = 1.0 - libm::pow(cfg.beta1, t);
    let c2 = 1.0 - libm::pow(cfg.beta2, t);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        params[i] -= lr * m_hat / (libm::sqrt(v_hat) + cfg.eps);
    }
    Ok(())
}

/// Linear warmup to `peak` followed by cosine annealing.
///
/// For `epoch < warmup_epochs` the rate rises linearly from
/// `peak / warmup_epochs` at epoch 0 towards `peak` at `epoch ==
/// warmup_epochs`; from there it follows
/// `peak * (1 + cos(pi * (epoch - warmup) / (epochs - warmup))) / 2`.
/// Both pieces give `peak` at the boundary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrSchedule {
    pub peak: f64,
    pub warmup_epochs: usize,
    pub epochs: usize,
}

impl LrSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.peak > 0.0 && self.peak.is_finite()) {
            return Err(Error::out_of_range("learning_rate", self.peak, "> 0"));
        }
        if self.epochs == 0 {
            return Err(Error::out_of_range("epochs", 0, ">= 1"));
        }
        if self.warmup_epochs >= self.epochs {
            return Err(Error::out_of_range(
                "warmup_epochs",
                self.warmup_epochs,
                alloc::format!("< epochs ({})", self.epochs),
            ));
        }
        Ok(())
    }

    pub fn at(&self, epoch: usize) -> f64 {
        let w = self.warmup_epochs as f64;
        let e = epoch as f64;
        if epoch < self.warmup_epochs {
            let start = self.peak / w;
            start + (self.peak - start) * e / w
        } else {
            let span = (self.epochs - self.warmup_epochs) as f64;
            let progress = (e - w) / span;
            self.peak * 0.5 * (1.0 + libm::cos(core::f64::consts::PI * progress))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_about_lr() {
        for g in [3.0, -0.02, 1e-3] {
            let mut p = [1.0];
            let mut s = AdamState::new(1);
            adam_step(&mut p, &[g], &mut s, 0.01, &AdamConfig::default()).unwrap();
            let expected = 0.01 * g.abs() / (g.abs() + 1e-8);
            assert!(((1.0 - p[0]).abs() - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = [0.5, -2.0];
        let mut s = AdamState::new(2);
        for _ in 0..50 {
            adam_step(&mut p, &[0.0, 0.0], &mut s, 0.1, &AdamConfig::default()).unwrap();
        }
        assert_eq!(p, [0.5, -2.0]);
    }

    #[test]
    fn quadratic_bowl_matches_scalar_reference() {
        // f(x) = (x - 3)^2 per coordinate.
        let cfg = AdamConfig::default();
        let mut p = [0.0, 10.0];
        let mut s = AdamState::new(2);
        let mut reference = [(0.0f64, 0.0f64, 0.0f64), (10.0, 0.0, 0.0)];
        for t in 1..=10 {
            let g = [2.0 * (p[0] - 3.0), 2.0 * (p[1] - 3.0)];
            adam_step(&mut p, &g, &mut s, 0.1, &cfg).unwrap();
            for (x, m, v) in reference.iter_mut() {
                let g = 2.0 * (*x - 3.0);
                *m = 0.9 * *m + 0.1 * g;
                *v = 0.999 * *v + 0.001 * g * g;
                let mh = *m / (1.0 - 0.9f64.powi(t));
                let vh = *v / (1.0 - 0.999f64.powi(t));
                *x -= 0.1 * mh / (vh.sqrt() + 1e-8);
            }
            assert!((p[0] - reference[0].0).abs() < 1e-12);
            assert!((p[1] - reference[1].0).abs() < 1e-12);
        }
    }

    #[test]
    fn non_finite_gradient_aborts() {
        let mut p = [1.0, 2.0];
        let mut s = AdamState::new(2);
        let err = adam_step(&mut p, &[0.0, f64::NAN], &mut s, 0.1, &AdamConfig::default()).unwrap_err();
        assert_eq!(err, Error::NonFiniteGradient { index: 1 });
        assert_eq!(p, [1.0, 2.0]);
        assert_eq!(s.t, 0);
    }

    #[test]
    fn schedule_shape() {
        let s = LrSchedule {
            peak: 5e-4,
            warmup_epochs: 10,
            epochs: 100,
        };
        assert!((s.at(0) - 5e-5).abs() < 1e-18);
        assert_eq!(s.at(10), 5e-4);
        assert!((s.at(55) - 2.5e-4).abs() < 1e-18);
        for e in 0..10 {
            assert!(s.at(e) < s.at(e + 1));
        }
        for e in 10..99 {
            assert!(s.at(e + 1) <= s.at(e));
        }
        assert!(s.at(99) < 1e-6);
        // Warmup line extended to the boundary meets the cosine start.
        let start = 5e-4 / 10.0;
        assert!((start + (5e-4 - start) * 10.0 / 10.0 - s.at(10)).abs() < 1e-18);
    }

    #[test]
    fn schedule_validation() {
        assert!(LrSchedule {
            peak: 1e-3,
            warmup_epochs: 5,
            epochs: 5
        }
        .validate()
        .is_err());
        assert!(LrSchedule {
            peak: 0.0,
            warmup_epochs: 0,
            epochs: 5
        }
        .validate()
        .is_err());
        assert!(LrSchedule {
            peak: 1e-3,
            warmup_epochs: 0,
            epochs: 1
        }
        .validate()
        .is_ok());
    }
}
