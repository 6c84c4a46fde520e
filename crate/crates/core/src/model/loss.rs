//! Softmax, soft-target cross-entropy and KL divergence.

use alloc::vec::Vec;

use super::Real;

/// Log-sum-exp stabilized `log softmax(z)`.
pub fn log_softmax<F: Real>(logits: &[F]) -> Vec<F> {
    let m = logits.iter().copied().fold(F::neg_infinity(), F::max);
    let lse = m + logits.iter().map(|&z| (z - m).exp()).sum::<F>().ln();
    logits.iter().map(|&z| z - lse).collect()
}

pub fn softmax<F: Real>(logits: &[F]) -> Vec<F> {
    let m = logits.iter().copied().fold(F::neg_infinity(), F::max);
    let e: Vec<F> = logits.iter().map(|&z| (z - m).exp()).collect();
    let s = e.iter().copied().sum::<F>();
    e.into_iter().map(|v| v / s).collect()
}

/// `-sum_y p(y) log q(y)` with `q = softmax(logits)`. Zero-probability targets contribute nothing.
pub fn cross_entropy<F: Real>(logits: &[F], target: &[f64]) -> F {
    let lq = log_softmax(logits);
    let mut loss = F::zero();
    for (&l, &p) in lq.iter().zip(target) {
        if p != 0.0 {
            loss -= F::lit(p) * l;
        }
    }
    loss
}

/// `dL/dz = q - p`.
pub fn cross_entropy_grad<F: Real>(logits: &[F], target: &[f64]) -> Vec<F> {
    softmax(logits)
        .into_iter()
        .zip(target)
        .map(|(q, &p)| q - F::lit(p))
        .collect()
}

/// `KL(p || q) = sum p (ln p - ln q)`; zero-probability terms of `p` contribute nothing.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(&a, _)| a > 0.0)
        .map(|(&a, &b)| a * (crate::float::Float::ln(a) - crate::float::Float::ln(b)))
        .sum()
}
