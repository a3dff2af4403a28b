//! Triplet hinge loss on L2 distances, and its Matryoshka variant that sums
//! the loss over re-normalized prefixes of the embedding.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;

pub const DEFAULT_MARGIN: f64 = 1.0;

/// `max(d(a, p) - d(a, n) + margin, 0)`.
pub fn triplet_loss(a: &[f64], p: &[f64], n: &[f64], margin: f64) -> f64 {
    (math::l2(a, p) - math::l2(a, n) + margin).max(0.0)
}

/// Loss and gradients with respect to the anchor, positive and negative.
/// Inactive triplets (loss clamped at zero) get all-zero gradients; a zero
/// distance contributes a zero subgradient.
pub fn triplet_loss_grad(a: &[f64], p: &[f64], n: &[f64], margin: f64) -> (f64, [Vec<f64>; 3]) {
    let d_ap = math::l2(a, p);
    let d_an = math::l2(a, n);
    let loss = d_ap - d_an + margin;
    let dim = a.len();
    if loss <= 0.0 {
        return (0.0, [vec![0.0; dim], vec![0.0; dim], vec![0.0; dim]]);
    }
    let unit = |x: &[f64], y: &[f64], d: f64| -> Vec<f64> {
        if d > math::NORM_EPS {
            x.iter().zip(y).map(|(xi, yi)| (xi - yi) / d).collect()
        } else {
            vec![0.0; dim]
        }
    };
    let u_ap = unit(a, p, d_ap);
    let u_an = unit(a, n, d_an);
    let ga = u_ap.iter().zip(&u_an).map(|(x, y)| x - y).collect();
    let gp = u_ap.iter().map(|x| -x).collect();
    (loss, [ga, gp, u_an])
}

/// Checks prefix widths: non-empty, strictly ascending, ending at
/// `output_dim`.
pub fn validate_dims(dims: &[usize], output_dim: usize) -> Result<()> {
    let ascending = dims.windows(2).all(|w| w[0] < w[1]);
    if dims.is_empty() || dims[0] == 0 || !ascending || dims.last() != Some(&output_dim) {
        return Err(Error::Config(alloc::format!(
            "matryoshka dims {dims:?} must be ascending, non-zero and end at {output_dim}"
        )));
    }
    Ok(())
}

pub fn matryoshka_triplet_loss(a: &[f64], p: &[f64], n: &[f64], margin: f64, dims: &[usize]) -> Result<f64> {
    validate_dims(dims, a.len())?;
    Ok(dims
        .iter()
        .map(|&m| {
            let (ah, _) = math::l2_normalize(&a[..m]);
            let (ph, _) = math::l2_normalize(&p[..m]);
            let (nh, _) = math::l2_normalize(&n[..m]);
            triplet_loss(&ah, &ph, &nh, margin)
        })
        .sum())
}

pub fn matryoshka_triplet_loss_grad(
    a: &[f64],
    p: &[f64],
    n: &[f64],
    margin: f64,
    dims: &[usize],
) -> Result<(f64, [Vec<f64>; 3])> {
    validate_dims(dims, a.len())?;
    let dim = a.len();
    let mut grads = [vec![0.0; dim], vec![0.0; dim], vec![0.0; dim]];
    let mut total = 0.0;
    for &m in dims {
        let prefixes = [&a[..m], &p[..m], &n[..m]];
        let normed = prefixes.map(math::l2_normalize);
        let (loss, g) = triplet_loss_grad(&normed[0].0, &normed[1].0, &normed[2].0, margin);
        total += loss;
        if loss == 0.0 {
            continue;
        }
        for k in 0..3 {
            let back = math::l2_normalize_backward(&normed[k].0, normed[k].1, &g[k]);
            for (acc, b) in grads[k][..m].iter_mut().zip(back) {
                *acc += b;
            }
        }
    }
    Ok((total, grads))
}

/// Which triplet objective training optimizes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LossKind {
    Triplet,
    /// Equal-weight sum over these prefix widths.
    Matryoshka(Vec<usize>),
}

impl LossKind {
    pub fn name(&self) -> &'static str {
        match self {
            LossKind::Triplet => "triplet",
            LossKind::Matryoshka(_) => "matryoshka",
        }
    }

    pub fn validate(&self, output_dim: usize) -> Result<()> {
        match self {
            LossKind::Triplet => Ok(()),
            LossKind::Matryoshka(dims) => validate_dims(dims, output_dim),
        }
    }

    pub fn loss(&self, a: &[f64], p: &[f64], n: &[f64], margin: f64) -> Result<f64> {
        match self {
            LossKind::Triplet => Ok(triplet_loss(a, p, n, margin)),
            LossKind::Matryoshka(dims) => matryoshka_triplet_loss(a, p, n, margin, dims),
        }
    }

    pub fn loss_grad(&self, a: &[f64], p: &[f64], n: &[f64], margin: f64) -> Result<(f64, [Vec<f64>; 3])> {
        match self {
            LossKind::Triplet => Ok(triplet_loss_grad(a, p, n, margin)),
            LossKind::Matryoshka(dims) => matryoshka_triplet_loss_grad(a, p, n, margin, dims),
        }
    }
}
