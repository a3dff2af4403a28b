//! PCA on standardized columns, for 2-D diagnostic projections.
//!
//! Columns are centered and divided by their sample standard deviation
//! (`n - 1` divisor); a column whose variance is below `1e-12` keeps scale 1.
//! Components are the leading eigenvectors of the sample covariance of the
//! standardized data, each flipped so its largest-magnitude entry is
//! positive.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;
use crate::matrix::Matrix;

const MIN_VARIANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// Per-column divisor applied after centering.
    pub scale: Vec<f64>,
    /// `k x d`, row-major, orthonormal rows.
    pub components: Vec<f64>,
    /// Descending, clamped at zero.
    pub eigenvalues: Vec<f64>,
}

impl PcaModel {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn n_components(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn component(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.components[i * d..(i + 1) * d]
    }

    pub fn standardize(&self, row: &[f32]) -> Vec<f64> {
        row.iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(&x, (m, s))| (f64::from(x) - m) / s)
            .collect()
    }

    /// `m x k` coordinates, row-major.
    pub fn project(&self, matrix: &Matrix) -> Result<Vec<Vec<f64>>> {
        if matrix.cols() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: matrix.cols(),
            });
        }
        Ok(matrix
            .iter_rows()
            .map(|row| {
                let z = self.standardize(row);
                (0..self.n_components())
                    .map(|c| math::dot(&z, self.component(c)))
                    .collect()
            })
            .collect())
    }
}

pub fn fit_pca(matrix: &Matrix, k: usize) -> Result<PcaModel> {
    let n = matrix.rows();
    let d = matrix.cols();
    if n < 2 {
        return Err(Error::out_of_range("n", n, "PCA needs n >= 2"));
    }
    let k_max = (n - 1).min(d);
    if k == 0 || k > k_max {
        return Err(Error::out_of_range("k", k, alloc::format!("1..={k_max}")));
    }
    if let Some((row, col)) = matrix.find_non_finite() {
        return Err(Error::NonFinite { row, col });
    }

    let denom = (n - 1) as f64;
    let mut mean = vec![0.0; d];
    for row in matrix.iter_rows() {
        for (m, &x) in mean.iter_mut().zip(row) {
            *m += f64::from(x);
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut scale = vec![0.0; d];
    for row in matrix.iter_rows() {
        for ((s, &x), m) in scale.iter_mut().zip(row).zip(&mean) {
            let c = f64::from(x) - m;
            *s += c * c;
        }
    }
    for s in &mut scale {
        let var = *s / denom;
        *s = if var < MIN_VARIANCE { 1.0 } else { math::sqrt(var) };
    }

    // Upper triangle of Z^T Z, mirrored afterwards.
    let mut cov = vec![0.0; d * d];
    let mut z = vec![0.0; d];
    for row in matrix.iter_rows() {
        for j in 0..d {
            z[j] = (f64::from(row[j]) - mean[j]) / scale[j];
        }
        for i in 0..d {
            let zi = z[i];
            if zi == 0.0 {
                continue;
            }
            let out = &mut cov[i * d..(i + 1) * d];
            for j in i..d {
                out[j] += zi * z[j];
            }
        }
    }
    for i in 0..d {
        for j in i..d {
            let v = cov[i * d + j] / denom;
            cov[i * d + j] = v;
            cov[j * d + i] = v;
        }
    }

    let (values, vectors) = symmetric_eigen(cov, d);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));

    let mut components = Vec::with_capacity(k * d);
    let mut eigenvalues = Vec::with_capacity(k);
    for &col in order.iter().take(k) {
        let mut v: Vec<f64> = (0..d).map(|r| vectors[r * d + col]).collect();
        let mut lead = 0;
        for (i, x) in v.iter().enumerate() {
            if x.abs() > v[lead].abs() {
                lead = i;
            }
        }
        if v[lead] < 0.0 {
            for x in &mut v {
                *x = -*x;
            }
        }
        components.extend(v);
        eigenvalues.push(values[col].max(0.0));
    }

    Ok(PcaModel {
        mean,
        scale,
        components,
        eigenvalues,
    })
}

/// Eigen-decomposition of a dense symmetric `n x n` matrix (row-major).
///
/// Householder reduction to tridiagonal form followed by the implicit QL
/// iteration (the EISPACK `tred2`/`tql2` pair). Returns the eigenvalues and
/// a row-major matrix whose columns are the matching unit eigenvectors.
pub fn symmetric_eigen(a: Vec<f64>, n: usize) -> (Vec<f64>, Vec<f64>) {
    assert_eq!(a.len(), n * n);
    if n == 0 {
        return (Vec::new(), Vec::new());
    }
    let mut v = a;
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    tridiagonalize(&mut v, &mut d, &mut e, n);
    tridiagonal_ql(&mut v, &mut d, &mut e, n);
    (d, v)
}

fn tridiagonalize(v: &mut [f64], d: &mut [f64], e: &mut [f64], n: usize) {
    let at = |r: usize, c: usize| r * n + c;
    for j in 0..n {
        d[j] = v[at(n - 1, j)];
    }
    for i in (1..n).rev() {
        let mut scale = 0.0;
        let mut h = 0.0;
        for dk in d.iter().take(i) {
            scale += dk.abs();
        }
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[at(i - 1, j)];
                v[at(i, j)] = 0.0;
                v[at(j, i)] = 0.0;
            }
        } else {
            for dk in d.iter_mut().take(i) {
                *dk /= scale;
                h += *dk * *dk;
            }
            let mut f = d[i - 1];
            let mut g = math::sqrt(h);
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for ej in e.iter_mut().take(i) {
                *ej = 0.0;
            }
            for j in 0..i {
                f = d[j];
                v[at(j, i)] = f;
                g = e[j] + v[at(j, j)] * f;
                for k in j + 1..i {
                    g += v[at(k, j)] * d[k];
                    e[k] += v[at(k, j)] * f;
                }
                e[j] = g;
            }
            f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                for k in j..i {
                    v[at(k, j)] -= f * e[k] + g * d[k];
                }
                d[j] = v[at(i - 1, j)];
                v[at(i, j)] = 0.0;
            }
        }
        d[i] = h;
    }

    for i in 0..n - 1 {
        v[at(n - 1, i)] = v[at(i, i)];
        v[at(i, i)] = 1.0;
        let h = d[i + 1];
        if h != 0.0 {
            for k in 0..=i {
                d[k] = v[at(k, i + 1)] / h;
            }
            for j in 0..=i {
                let mut g = 0.0;
                for k in 0..=i {
                    g += v[at(k, i + 1)] * v[at(k, j)];
                }
                for k in 0..=i {
                    v[at(k, j)] -= g * d[k];
                }
            }
        }
        for k in 0..=i {
            v[at(k, i + 1)] = 0.0;
        }
    }
    for j in 0..n {
        d[j] = v[at(n - 1, j)];
        v[at(n - 1, j)] = 0.0;
    }
    v[at(n - 1, n - 1)] = 1.0;
    e[0] = 0.0;
}

fn tridiagonal_ql(v: &mut [f64], d: &mut [f64], e: &mut [f64], n: usize) {
    const MAX_SWEEPS: usize = 64;
    let at = |r: usize, c: usize| r * n + c;
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;

    let mut f = 0.0;
    let mut tst1: f64 = 0.0;
    let eps = f64::EPSILON;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        // e[n-1] is zero, so m < n here.
        if m > l {
            let mut sweeps = 0;
            loop {
                sweeps += 1;
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = libm::hypot(p, 1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().take(n).skip(l + 2) {
                    *di -= h;
                }
                f += h;

                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = libm::hypot(p, e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    for k in 0..n {
                        let vk1 = v[at(k, i + 1)];
                        let vk = v[at(k, i)];
                        v[at(k, i + 1)] = s * vk + c * vk1;
                        v[at(k, i)] = c * vk - s * vk1;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 || sweeps >= MAX_SWEEPS {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
}
