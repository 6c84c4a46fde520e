//! Principal component analysis by power iteration with deflation.

use crate::float::Float;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::rng::Stream;
use crate::{Error, Result};

pub const PCA_TOLERANCE: f64 = 1e-9;
pub const PCA_MAX_ITERATIONS: usize = 10_000;
/// Eigenvalues at or below this fraction of the total variance count as zero.
pub const RANK_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pca {
    pub mean: Vec<f64>,
    /// Unit-norm principal axes, largest eigenvalue first. May hold fewer
    /// than `k` rows when the data has lower rank.
    pub components: Vec<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
    /// Length `k`; entries past the numerical rank are zero.
    pub explained_variance_ratio: Vec<f64>,
    /// `n x k` coordinates of the centred rows; zero past the numerical rank.
    pub projected: Vec<Vec<f64>>,
    /// Set when fewer than `k` components carry variance.
    pub rank_deficient: bool,
}

fn norm(v: &[f64]) -> f64 {
    Float::sqrt(v.iter().map(|x| x * x).sum::<f64>())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn mat_vec(c: &[f64], v: &[f64]) -> Vec<f64> {
    let d = v.len();
    (0..d).map(|i| dot(&c[i * d..(i + 1) * d], v)).collect()
}

fn orthogonalize(v: &mut [f64], basis: &[Vec<f64>]) {
    for b in basis {
        let k = dot(v, b);
        for (x, y) in v.iter_mut().zip(b) {
            *x -= k * y;
        }
    }
}

/// Project `rows` onto their top `k` principal axes.
pub fn pca_project(rows: &[Vec<f64>], k: usize) -> Result<Pca> {
    let n = rows.len();
    if k == 0 || n <= k {
        return Err(Error::Shape(format!(
            "PCA needs more than k = {k} rows, got {n}"
        )));
    }
    let d = rows[0].len();
    if d == 0 || rows.iter().any(|r| r.len() != d) {
        return Err(Error::Shape(
            "PCA rows must share a positive dimension".into(),
        ));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite PCA input".into()));
    }
    let mut mean = vec![0.0; d];
    for r in rows {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let centred: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| r.iter().zip(&mean).map(|(v, m)| v - m).collect())
        .collect();
    let mut cov = vec![0.0; d * d];
    for r in &centred {
        for i in 0..d {
            for j in i..d {
                cov[i * d + j] += r[i] * r[j];
            }
        }
    }
    let scale = 1.0 / (n - 1) as f64;
    for i in 0..d {
        for j in i..d {
            let v = cov[i * d + j] * scale;
            cov[i * d + j] = v;
            cov[j * d + i] = v;
        }
    }
    let trace: f64 = (0..d).map(|i| cov[i * d + i]).sum();
    let original = cov.clone();
    let mut rng = Stream::new(0x0070_ca00);
    let mut components: Vec<Vec<f64>> = Vec::new();
    let mut eigenvalues = Vec::new();
    let target = k.min(d);
    while components.len() < target && trace > 0.0 {
        let mut v: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
        orthogonalize(&mut v, &components);
        let nv = norm(&v);
        if nv == 0.0 {
            break;
        }
        v.iter_mut().for_each(|x| *x /= nv);
        for _ in 0..PCA_MAX_ITERATIONS {
            let mut w = mat_vec(&cov, &v);
            orthogonalize(&mut w, &components);
            let nw = norm(&w);
            if nw <= RANK_EPS * trace {
                break;
            }
            w.iter_mut().for_each(|x| *x /= nw);
            let sign = if dot(&w, &v) < 0.0 { -1.0 } else { 1.0 };
            let delta = Float::sqrt(
                w.iter()
                    .zip(&v)
                    .map(|(a, b)| (a - sign * b) * (a - sign * b))
                    .sum::<f64>(),
            );
            v = w;
            if delta < PCA_TOLERANCE {
                break;
            }
        }
        let lambda = dot(&v, &mat_vec(&original, &v));
        if !(lambda > RANK_EPS * trace) {
            break;
        }
        let mut big = 0;
        for i in 1..d {
            if v[i].abs() > v[big].abs() {
                big = i;
            }
        }
        if v[big] < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        for i in 0..d {
            for j in 0..d {
                cov[i * d + j] -= lambda * v[i] * v[j];
            }
        }
        components.push(v);
        eigenvalues.push(lambda);
    }
    let mut order: Vec<usize> = (0..components.len()).collect();
    order.sort_by(|&a, &b| eigenvalues[b].total_cmp(&eigenvalues[a]));
    let components: Vec<Vec<f64>> = order.iter().map(|&i| components[i].clone()).collect();
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eigenvalues[i]).collect();
    let mut explained_variance_ratio = vec![0.0; k];
    for (r, &l) in explained_variance_ratio.iter_mut().zip(&eigenvalues) {
        *r = l / trace;
    }
    let projected = centred
        .iter()
        .map(|r| {
            let mut p = vec![0.0; k];
            for (x, c) in p.iter_mut().zip(&components) {
                *x = dot(r, c);
            }
            p
        })
        .collect();
    Ok(Pca {
        mean,
        rank_deficient: components.len() < k,
        components,
        eigenvalues,
        explained_variance_ratio,
        projected,
    })
}
