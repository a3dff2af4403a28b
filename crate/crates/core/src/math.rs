//! Small dense-vector helpers on top of `libm`, so results do not depend on
//! the platform's `std` math implementation.

use alloc::vec::Vec;

/// Guard used wherever a vector is divided by its norm.
pub const NORM_EPS: f64 = 1e-12;

#[inline]
pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    sqrt(dot(a, a))
}

#[inline]
pub fn squared_l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum()
}

#[inline]
pub fn l2(a: &[f64], b: &[f64]) -> f64 {
    sqrt(squared_l2(a, b))
}

/// Squared L2 distance between two `f32` rows, accumulated in `f64`.
#[inline]
pub fn squared_l2_f32(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = f64::from(x) - f64::from(y);
            d * d
        })
        .sum()
}

#[inline]
pub fn l2_f32(a: &[f32], b: &[f32]) -> f64 {
    sqrt(squared_l2_f32(a, b))
}

/// Returns `(v / max(|v|, NORM_EPS), |v|)`.
pub fn l2_normalize(v: &[f64]) -> (Vec<f64>, f64) {
    let n = norm(v);
    let denom = if n > NORM_EPS { n } else { NORM_EPS };
    (v.iter().map(|x| x / denom).collect(), n)
}

/// Backpropagates `grad_out` through `u = v / max(|v|, eps)` given the
/// normalized output `u` and the input norm.
pub fn l2_normalize_backward(u: &[f64], input_norm: f64, grad_out: &[f64]) -> Vec<f64> {
    if input_norm > NORM_EPS {
        let proj = dot(u, grad_out);
        u.iter()
            .zip(grad_out)
            .map(|(ui, gi)| (gi - ui * proj) / input_norm)
            .collect()
    } else {
        grad_out.iter().map(|g| g / NORM_EPS).collect()
    }
}

#[inline]
pub fn to_f64(row: &[f32]) -> Vec<f64> {
    row.iter().map(|&x| f64::from(x)).collect()
}
