//! Distributions over classes induced by centroids, and the divergences
//! between them.
//!
//! Two families live here:
//!
//! * Multinomials: a centroid induces a softmax distribution over classes by
//!   squared distance; KL and symmetrized KL compare two of them. These feed
//!   the partition objective.
//! * Gaussian summaries: mean/covariance fits of a vector set, compared by
//!   closed-form Euclidean, Wasserstein-2 (squared), KL, or symmetrized KL.
//!   These parameterize the divergence ablation only, never the objective.
//!
//! All divergences are in nats. Probabilities are floored at 1e-300 before
//! any log so KL never sees -inf.

use nalgebra::{DMatrix, DVector};

use crate::embeddings::ClassEmbeddingSet;
use crate::exec::map_indexed;
use crate::{Error, Result};

/// Floor applied to probabilities before taking logs.
const PROB_FLOOR: f64 = 1e-300;

/// The divergence measures used across the toolkit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DivergenceKind {
    EuclideanBetweenMeans,
    Wasserstein2,
    KullbackLeibler,
    SymmetrizedKL,
}

impl DivergenceKind {
    /// Short token used in CLI flags and partition metadata.
    pub fn token(&self) -> &'static str {
        match self {
            DivergenceKind::EuclideanBetweenMeans => "euclid",
            DivergenceKind::Wasserstein2 => "w2",
            DivergenceKind::KullbackLeibler => "kl",
            DivergenceKind::SymmetrizedKL => "symkl",
        }
    }

    pub fn from_token(token: &str) -> Option<Self> {
        match token {
            "euclid" => Some(DivergenceKind::EuclideanBetweenMeans),
            "w2" => Some(DivergenceKind::Wasserstein2),
            "kl" => Some(DivergenceKind::KullbackLeibler),
            "symkl" => Some(DivergenceKind::SymmetrizedKL),
            _ => None,
        }
    }
}

/// A probability distribution over an ordered set of classes.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassDistribution {
    class_ids: Vec<u32>,
    probs: Vec<f64>,
}

impl ClassDistribution {
    /// Builds a distribution from explicit probabilities.
    pub fn from_probs(class_ids: Vec<u32>, probs: Vec<f64>) -> Result<Self> {
        if class_ids.len() != probs.len() {
            return Err(Error::DimensionMismatch {
                expected: class_ids.len(),
                found: probs.len(),
            });
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "probabilities sum to {sum}, expected 1"
            )));
        }
        if probs.iter().any(|&p| p <= 0.0) {
            return Err(Error::InvalidParameter(
                "probabilities must be strictly positive".into(),
            ));
        }
        Ok(Self { class_ids, probs })
    }

    pub fn class_ids(&self) -> &[u32] {
        &self.class_ids
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }
}

/// Numerically stable softmax: subtracts the max logit before exponentiating.
/// Entries are floored at 1e-300 so downstream logs stay finite. NaN logits
/// propagate (the comparison-form floor never swallows them).
pub(crate) fn stable_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    let inv = 1.0 / sum;
    for p in &mut out {
        *p *= inv;
        if *p < PROB_FLOOR {
            *p = PROB_FLOOR;
        }
    }
    out
}

/// KL over aligned probability slices, floored and clamped at zero.
/// NaN inputs propagate.
pub(crate) fn kl_slices(p: &[f64], q: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (&pi, &qi) in p.iter().zip(q) {
        acc += pi * (pi.max(PROB_FLOOR).ln() - qi.max(PROB_FLOOR).ln());
    }
    if acc < 0.0 {
        0.0
    } else {
        acc
    }
}

/// Squared Euclidean distances from every class mean to `centroid`.
pub(crate) fn squared_distances(set: &ClassEmbeddingSet, centroid: &[f64]) -> Vec<f64> {
    let dim = set.dim();
    map_indexed(set.len(), |i| {
        let row = set.mean(i);
        let mut acc = 0.0;
        for d in 0..dim {
            let diff = row[d] - centroid[d];
            acc += diff * diff;
        }
        acc
    })
}

/// Softmax distribution over classes induced by a centroid: the probability
/// of class i is proportional to exp(-||mean_i - centroid||^2).
pub fn class_distribution(set: &ClassEmbeddingSet, centroid: &[f64]) -> Result<ClassDistribution> {
    if centroid.len() != set.dim() {
        return Err(Error::DimensionMismatch {
            expected: set.dim(),
            found: centroid.len(),
        });
    }
    let logits: Vec<f64> = squared_distances(set, centroid)
        .into_iter()
        .map(|d| -d)
        .collect();
    Ok(ClassDistribution {
        class_ids: set.class_ids().to_vec(),
        probs: stable_softmax(&logits),
    })
}

fn check_aligned(p: &ClassDistribution, q: &ClassDistribution) -> Result<()> {
    if p.class_ids != q.class_ids {
        return Err(Error::ClassIdMismatch);
    }
    Ok(())
}

/// Kullback-Leibler divergence KL(p || q) in nats.
pub fn kl(p: &ClassDistribution, q: &ClassDistribution) -> Result<f64> {
    check_aligned(p, q)?;
    Ok(kl_slices(&p.probs, &q.probs))
}

/// Symmetrized KL: KL(p || q) + KL(q || p) (Jeffreys sum, not the half-sum).
pub fn sym_kl(p: &ClassDistribution, q: &ClassDistribution) -> Result<f64> {
    Ok(kl(p, q)? + kl(q, p)?)
}

/// Mean and damped covariance of a vector set.
///
/// `covariance` already includes the diagonal damping term recorded in
/// `damping`; divergences consume it as-is.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianSummary {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub damping: f64,
}

/// Fits a Gaussian summary to `n` row vectors laid out row-major in `rows`.
///
/// The covariance is the population covariance (1/n) plus `damping` times the
/// identity.
pub fn gaussian_summary(rows: &[f64], dim: usize, damping: f64) -> Result<GaussianSummary> {
    if dim == 0 || rows.len() % dim != 0 {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: rows.len(),
        });
    }
    let n = rows.len() / dim;
    if n == 0 {
        return Err(Error::NoSamples);
    }
    if damping < 0.0 {
        return Err(Error::InvalidParameter("damping must be >= 0".into()));
    }

    let mut mean = DVector::zeros(dim);
    for row in rows.chunks_exact(dim) {
        for (m, &v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean /= n as f64;

    let mut cov = DMatrix::zeros(dim, dim);
    for row in rows.chunks_exact(dim) {
        for i in 0..dim {
            let di = row[i] - mean[i];
            for j in i..dim {
                let dj = row[j] - mean[j];
                cov[(i, j)] += di * dj;
            }
        }
    }
    cov /= n as f64;
    for i in 0..dim {
        for j in 0..i {
            cov[(i, j)] = cov[(j, i)];
        }
        cov[(i, i)] += damping;
    }

    Ok(GaussianSummary {
        mean,
        covariance: cov,
        damping,
    })
}

/// Rounds roundoff-scale negatives up to zero without swallowing NaN.
fn clamp_nonnegative(x: f64) -> f64 {
    if x < 0.0 {
        0.0
    } else {
        x
    }
}

/// Symmetric positive-semidefinite square root via eigendecomposition.
/// Eigenvalues are clamped at zero before the square root.
fn sqrtm(m: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let sqrt_vals = DVector::from_iterator(
        eig.eigenvalues.len(),
        eig.eigenvalues.iter().map(|&l| l.max(0.0).sqrt()),
    );
    &eig.eigenvectors * DMatrix::from_diagonal(&sqrt_vals) * eig.eigenvectors.transpose()
}

fn gaussian_kl(a: &GaussianSummary, b: &GaussianSummary) -> Result<f64> {
    let dim = a.mean.len();
    let chol_b = b
        .covariance
        .clone()
        .cholesky()
        .ok_or(Error::SingularCovariance)?;
    let chol_a = a
        .covariance
        .clone()
        .cholesky()
        .ok_or(Error::SingularCovariance)?;

    let log_det = |c: &nalgebra::Cholesky<f64, nalgebra::Dyn>| -> f64 {
        (0..dim).map(|i| c.l_dirty()[(i, i)].ln()).sum::<f64>() * 2.0
    };

    let trace = chol_b.solve(&a.covariance).trace();
    let diff = &b.mean - &a.mean;
    let mahal = diff.dot(&chol_b.solve(&DMatrix::from_column_slice(dim, 1, diff.as_slice())));
    let log_det_ratio = log_det(&chol_b) - log_det(&chol_a);
    Ok(0.5 * (trace + mahal - dim as f64 + log_det_ratio))
}

/// Closed-form divergence between two Gaussian summaries.
///
/// `Wasserstein2` returns the squared distance. `KullbackLeibler` is
/// KL(a || b); swap the arguments for the other direction.
pub fn gaussian_divergence(
    a: &GaussianSummary,
    b: &GaussianSummary,
    kind: DivergenceKind,
) -> Result<f64> {
    if a.mean.len() != b.mean.len() {
        return Err(Error::DimensionMismatch {
            expected: a.mean.len(),
            found: b.mean.len(),
        });
    }
    match kind {
        DivergenceKind::EuclideanBetweenMeans => Ok((&a.mean - &b.mean).norm()),
        DivergenceKind::Wasserstein2 => {
            let mean_term = (&a.mean - &b.mean).norm_squared();
            let sqrt_b = sqrtm(&b.covariance);
            let inner = sqrtm(&(&sqrt_b * &a.covariance * &sqrt_b));
            let cov_term = a.covariance.trace() + b.covariance.trace() - 2.0 * inner.trace();
            Ok(clamp_nonnegative(mean_term + cov_term))
        }
        DivergenceKind::KullbackLeibler => Ok(clamp_nonnegative(gaussian_kl(a, b)?)),
        DivergenceKind::SymmetrizedKL => {
            Ok(clamp_nonnegative(gaussian_kl(a, b)? + gaussian_kl(b, a)?))
        }
    }
}
