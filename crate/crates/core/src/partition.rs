//! Penalized two-centroid clustering and class assignment.
//!
//! Two learnable centroids induce softmax distributions over classes (see
//! [`crate::divergence`]). The objective is the negative log-likelihood of
//! the even mixture of those distributions plus a quadratic penalty that
//! pins their divergence to a target:
//!
//! ```text
//! J = -sum_i ln( (p_train(y_i) + p_test(y_i)) / 2 )  +  lambda (D - R)^2
//! ```
//!
//! Minimizing J with SGD+momentum places the centroids so classes cluster
//! well while the train/test distributions sit a chosen divergence apart.
//! Classes are then ranked by the log-ratio `ln p_train - ln p_test` and
//! split into train/validation/test sets.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::divergence::{kl_slices, squared_distances, stable_softmax, DivergenceKind};
use crate::embeddings::ClassEmbeddingSet;
use crate::exec::map_indexed;
use crate::seeds;
use crate::{Error, Result};

/// Hyper-parameters of the partition optimizer.
///
/// Defaults: `lambda = 1`, `learning_rate = 0.1`, `momentum = 0.9`,
/// `iterations = 7000`, symmetrized KL penalty, `train_fraction = 0.6`.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionConfig {
    /// Target divergence R between the train and test distributions (nats).
    pub target_divergence: f64,
    /// Penalty weight lambda.
    pub penalty_weight: f64,
    pub learning_rate: f64,
    /// Momentum coefficient in [0, 1).
    pub momentum: f64,
    /// Number of full-batch optimizer steps.
    pub iterations: usize,
    pub seed: u64,
    /// Penalty divergence; only `KullbackLeibler` and `SymmetrizedKL` are
    /// valid here (the Gaussian kinds parameterize analyses only).
    pub divergence: DivergenceKind,
    /// Fraction of classes assigned to the train split, in (0, 1).
    pub train_fraction: f64,
    /// Record every k-th iteration in the optimizer trace (the final state
    /// is always recorded).
    pub trace_stride: usize,
}

impl Default for PartitionConfig {
    fn default() -> Self {
        Self {
            target_divergence: 0.0,
            penalty_weight: 1.0,
            learning_rate: 0.1,
            momentum: 0.9,
            iterations: 7000,
            seed: 0,
            divergence: DivergenceKind::SymmetrizedKL,
            train_fraction: 0.6,
            trace_stride: 1,
        }
    }
}

impl PartitionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.target_divergence >= 0.0 && self.target_divergence.is_finite()) {
            return Err(Error::InvalidParameter(
                "target divergence must be finite and >= 0".into(),
            ));
        }
        if !(self.penalty_weight >= 0.0 && self.penalty_weight.is_finite()) {
            return Err(Error::InvalidParameter("lambda must be finite and >= 0".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidParameter("learning rate must be > 0".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidParameter("momentum must be in [0, 1)".into()));
        }
        if self.iterations == 0 {
            return Err(Error::InvalidParameter("iterations must be >= 1".into()));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::InvalidParameter("train fraction must be in (0, 1)".into()));
        }
        if self.trace_stride == 0 {
            return Err(Error::InvalidParameter("trace stride must be >= 1".into()));
        }
        match self.divergence {
            DivergenceKind::KullbackLeibler | DivergenceKind::SymmetrizedKL => Ok(()),
            other => Err(Error::InvalidPenaltyDivergence {
                kind: other.token().into(),
            }),
        }
    }
}

/// The learnable centroid pair with its momentum buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct CentroidPair {
    pub mu_train: Vec<f64>,
    pub mu_test: Vec<f64>,
    pub velocity_train: Vec<f64>,
    pub velocity_test: Vec<f64>,
}

impl CentroidPair {
    /// Builds a pair with zeroed velocities.
    pub fn new(mu_train: Vec<f64>, mu_test: Vec<f64>) -> Result<Self> {
        if mu_train.len() != mu_test.len() || mu_train.is_empty() {
            return Err(Error::DimensionMismatch {
                expected: mu_train.len(),
                found: mu_test.len(),
            });
        }
        let dim = mu_train.len();
        Ok(Self {
            mu_train,
            mu_test,
            velocity_train: vec![0.0; dim],
            velocity_test: vec![0.0; dim],
        })
    }

    pub fn dim(&self) -> usize {
        self.mu_train.len()
    }
}

/// One evaluation of the objective: `total = nll + lambda (D - R)^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveValue {
    pub total: f64,
    pub nll: f64,
    pub penalty: f64,
    /// The divergence D actually achieved between the two distributions.
    pub achieved_divergence: f64,
}

/// Per-class assignment scores: `ln p_train(y_i) - ln p_test(y_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AssignmentScores {
    class_ids: Vec<u32>,
    scores: Vec<f64>,
}

impl AssignmentScores {
    pub fn new(class_ids: Vec<u32>, scores: Vec<f64>) -> Result<Self> {
        if class_ids.len() != scores.len() {
            return Err(Error::DimensionMismatch {
                expected: class_ids.len(),
                found: scores.len(),
            });
        }
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::InvalidParameter("scores must be finite".into()));
        }
        Ok(Self { class_ids, scores })
    }

    pub fn len(&self) -> usize {
        self.class_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.class_ids.is_empty()
    }

    pub fn class_ids(&self) -> &[u32] {
        &self.class_ids
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }
}

/// Which decision rule turns scores into a split.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AssignmentRule {
    /// Top `train_fraction` of classes by score go to train; the rest are
    /// dealt to test/validation alternately from the lowest score up.
    Fraction,
    /// Sign of the score decides train vs test; validation stays empty.
    /// Exact zero scores are coin-flipped from the seed.
    Ratio,
}

/// A three-way class split (ids ascending within each list).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<u32>,
    pub validation: Vec<u32>,
    pub test: Vec<u32>,
}

/// Generation metadata recorded alongside a split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionMeta {
    pub target_divergence: f64,
    pub achieved_divergence: f64,
    pub lambda: f64,
    pub seed: u64,
    pub iterations: usize,
    pub divergence_kind: String,
    pub train_fraction: f64,
}

/// The product of the pipeline: a class split plus its generation metadata.
///
/// Serializes to JSON with keys in declaration order and ids ascending
/// within each list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    pub train: Vec<u32>,
    pub validation: Vec<u32>,
    pub test: Vec<u32>,
    pub meta: PartitionMeta,
}

impl Partition {
    /// Compact single-line JSON with a trailing newline.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string(self).expect("partition serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text)
            .map_err(|e| Error::InvalidParameter(format!("invalid partition JSON: {e}")))
    }

    /// All class ids across the three lists.
    pub fn all_class_ids(&self) -> Vec<u32> {
        let mut ids: Vec<u32> = self
            .train
            .iter()
            .chain(&self.validation)
            .chain(&self.test)
            .copied()
            .collect();
        ids.sort_unstable();
        ids
    }
}

struct Distributions {
    p: Vec<f64>,
    q: Vec<f64>,
}

fn distributions(set: &ClassEmbeddingSet, centroids: &CentroidPair) -> Result<Distributions> {
    if centroids.dim() != set.dim() {
        return Err(Error::DimensionMismatch {
            expected: set.dim(),
            found: centroids.dim(),
        });
    }
    if set.is_empty() {
        return Err(Error::NoSamples);
    }
    let d_train = squared_distances(set, &centroids.mu_train);
    let d_test = squared_distances(set, &centroids.mu_test);
    let neg = |d: &[f64]| d.iter().map(|x| -x).collect::<Vec<_>>();
    let p = stable_softmax(&neg(&d_train));
    let q = stable_softmax(&neg(&d_test));
    Ok(Distributions { p, q })
}

fn divergence_of(p: &[f64], q: &[f64], kind: DivergenceKind) -> f64 {
    match kind {
        DivergenceKind::KullbackLeibler => kl_slices(p, q),
        DivergenceKind::SymmetrizedKL => kl_slices(p, q) + kl_slices(q, p),
        _ => unreachable!("validated by PartitionConfig"),
    }
}

fn objective_from(dist: &Distributions, config: &PartitionConfig) -> ObjectiveValue {
    let nll = -dist
        .p
        .iter()
        .zip(&dist.q)
        .map(|(&pi, &qi)| (0.5 * (pi + qi)).ln())
        .sum::<f64>();
    let d = divergence_of(&dist.p, &dist.q, config.divergence);
    let gap = d - config.target_divergence;
    let penalty = config.penalty_weight * gap * gap;
    ObjectiveValue {
        total: nll + penalty,
        nll,
        penalty,
        achieved_divergence: d,
    }
}

/// Evaluates the penalized clustering objective at the given centroids.
pub fn objective(
    set: &ClassEmbeddingSet,
    centroids: &CentroidPair,
    config: &PartitionConfig,
) -> Result<ObjectiveValue> {
    config.validate()?;
    let dist = distributions(set, centroids)?;
    Ok(objective_from(&dist, config))
}

/// Analytic gradient of the objective with respect to both centroids.
pub fn gradient(
    set: &ClassEmbeddingSet,
    centroids: &CentroidPair,
    config: &PartitionConfig,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let (_, g_train, g_test) = objective_and_gradient(set, centroids, config)?;
    Ok((g_train, g_test))
}

/// Objective and gradient in one pass; the distances dominate the cost and
/// are shared between the two.
pub fn objective_and_gradient(
    set: &ClassEmbeddingSet,
    centroids: &CentroidPair,
    config: &PartitionConfig,
) -> Result<(ObjectiveValue, Vec<f64>, Vec<f64>)> {
    config.validate()?;
    let dist = distributions(set, centroids)?;
    let value = objective_from(&dist, config);

    let m = set.len();
    let Distributions { p, q, .. } = &dist;

    // dJ/dp_i and dJ/dq_i: the mixture NLL term plus the penalty chain.
    let coeff = 2.0 * config.penalty_weight * (value.achieved_divergence - config.target_divergence);
    let mut dj_dp = vec![0.0; m];
    let mut dj_dq = vec![0.0; m];
    for i in 0..m {
        let mix = -1.0 / (p[i] + q[i]);
        dj_dp[i] = mix;
        dj_dq[i] = mix;
        match config.divergence {
            DivergenceKind::KullbackLeibler => {
                dj_dp[i] += coeff * (p[i].ln() - q[i].ln() + 1.0);
                dj_dq[i] += coeff * (-p[i] / q[i]);
            }
            DivergenceKind::SymmetrizedKL => {
                dj_dp[i] += coeff * (p[i].ln() - q[i].ln() + 1.0 - q[i] / p[i]);
                dj_dq[i] += coeff * (q[i].ln() - p[i].ln() + 1.0 - p[i] / q[i]);
            }
            _ => unreachable!("validated by PartitionConfig"),
        }
    }

    // Backprop through the softmax: dJ/da_i = p_i (dJ/dp_i - sum_j p_j dJ/dp_j),
    // with logits a_i = -||phi_i - mu||^2, so da_i/dmu = 2 (phi_i - mu).
    let softmax_back = |probs: &[f64], upstream: &[f64]| -> Vec<f64> {
        let inner: f64 = probs.iter().zip(upstream).map(|(&pi, &gi)| pi * gi).sum();
        probs
            .iter()
            .zip(upstream)
            .map(|(&pi, &gi)| pi * (gi - inner))
            .collect()
    };
    let s = softmax_back(p, &dj_dp);
    let t = softmax_back(q, &dj_dq);

    let dim = set.dim();
    let grad_for = |logit_grads: &[f64], mu: &[f64]| -> Vec<f64> {
        let total: f64 = logit_grads.iter().sum();
        map_indexed(dim, |d| {
            let mut acc = 0.0;
            for (i, &g) in logit_grads.iter().enumerate() {
                acc += g * set.mean(i)[d];
            }
            2.0 * (acc - total * mu[d])
        })
    };
    let g_train = grad_for(&s, &centroids.mu_train);
    let g_test = grad_for(&t, &centroids.mu_test);
    Ok((value, g_train, g_test))
}

fn seeded_initial_centroids(set: &ClassEmbeddingSet, seed: u64) -> CentroidPair {
    let mut rng = ChaCha8Rng::seed_from_u64(seeds::derive(seed, seeds::DOMAIN_OPTIMIZER, 0));
    let m = set.len();
    let dim = set.dim();

    // Both centroids start at the mean of the class embeddings, separated by
    // independent noise draws. Starting with D near zero keeps the penalty
    // coefficient 2 lambda (D - R) small while D grows toward R; starting
    // far apart saturates the softmax and blows up the first steps.
    let mut center = vec![0.0f64; dim];
    for i in 0..m {
        for (c, v) in center.iter_mut().zip(set.mean(i)) {
            *c += v;
        }
    }
    for c in &mut center {
        *c /= m as f64;
    }

    let noise = |rng: &mut ChaCha8Rng, mu: &[f64]| -> Vec<f64> {
        mu.iter()
            .map(|v| v + 1e-3 * rng.sample::<f64, _>(StandardNormal))
            .collect()
    };
    let mu_train = noise(&mut rng, &center);
    let mu_test = noise(&mut rng, &center);
    CentroidPair::new(mu_train, mu_test).expect("dims match")
}

/// Minimizes the objective with full-batch SGD + momentum.
///
/// Runs exactly `config.iterations` steps of `v <- momentum v - lr grad;
/// mu <- mu + v`. The trace records the objective every `trace_stride`-th
/// iteration (evaluated before the step) plus one final entry at the
/// returned centroids. Deterministic under a fixed seed.
///
/// The set must be unit-normalized; a non-finite objective or gradient
/// aborts with the iteration index.
pub fn optimize(
    set: &ClassEmbeddingSet,
    config: &PartitionConfig,
) -> Result<(CentroidPair, Vec<ObjectiveValue>)> {
    config.validate()?;
    if !set.is_normalized() {
        return Err(Error::NotNormalized);
    }
    if set.len() < 2 {
        return Err(Error::TooFewClasses {
            required: 2,
            found: set.len(),
        });
    }

    let mut centroids = seeded_initial_centroids(set, config.seed);
    let mut trace = Vec::with_capacity(config.iterations / config.trace_stride + 2);

    for iteration in 0..config.iterations {
        let (value, g_train, g_test) = objective_and_gradient(set, &centroids, config)?;
        let finite = value.total.is_finite()
            && g_train.iter().all(|g| g.is_finite())
            && g_test.iter().all(|g| g.is_finite());
        if !finite {
            return Err(Error::NonFiniteObjective {
                iteration,
                nll: value.nll,
                penalty: value.penalty,
            });
        }
        if iteration % config.trace_stride == 0 {
            trace.push(value);
        }

        for d in 0..centroids.dim() {
            centroids.velocity_train[d] =
                config.momentum * centroids.velocity_train[d] - config.learning_rate * g_train[d];
            centroids.mu_train[d] += centroids.velocity_train[d];
            centroids.velocity_test[d] =
                config.momentum * centroids.velocity_test[d] - config.learning_rate * g_test[d];
            centroids.mu_test[d] += centroids.velocity_test[d];
        }
    }

    let final_value = objective(set, &centroids, config)?;
    if !final_value.total.is_finite() {
        return Err(Error::NonFiniteObjective {
            iteration: config.iterations,
            nll: final_value.nll,
            penalty: final_value.penalty,
        });
    }
    trace.push(final_value);
    Ok((centroids, trace))
}

/// Log-ratio scores `ln p_train(y_i) - ln p_test(y_i)` per class.
///
/// The softmax normalizers are shared across classes, so the induced ranking
/// equals the ranking of `||phi_i - mu_test||^2 - ||phi_i - mu_train||^2`.
pub fn scores(set: &ClassEmbeddingSet, centroids: &CentroidPair) -> Result<AssignmentScores> {
    if centroids.dim() != set.dim() {
        return Err(Error::DimensionMismatch {
            expected: set.dim(),
            found: centroids.dim(),
        });
    }
    let d_train = squared_distances(set, &centroids.mu_train);
    let d_test = squared_distances(set, &centroids.mu_test);
    let lse = |dists: &[f64]| -> f64 {
        let max = dists.iter().map(|d| -d).fold(f64::NEG_INFINITY, f64::max);
        max + dists.iter().map(|d| (-d - max).exp()).sum::<f64>().ln()
    };
    let lse_train = lse(&d_train);
    let lse_test = lse(&d_test);
    let values: Vec<f64> = d_train
        .iter()
        .zip(&d_test)
        .map(|(&dtr, &dte)| (dte - dtr) - lse_train + lse_test)
        .collect();
    AssignmentScores::new(set.class_ids().to_vec(), values)
}

/// Splits classes by score with the fractional rule.
///
/// Classes are sorted by descending score (seeded-random tie keys); the top
/// `floor(train_fraction * M)` go to train. The remainder is walked from the
/// lowest score up, dealing classes alternately to test then validation, so
/// `|test| - |validation|` is 0 or 1.
pub fn assign(scores: &AssignmentScores, train_fraction: f64, seed: u64) -> Result<Split> {
    let m = scores.len();
    if m < 5 {
        return Err(Error::TooFewClasses {
            required: 5,
            found: m,
        });
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidParameter("train fraction must be in (0, 1)".into()));
    }
    let train_count = (train_fraction * m as f64).floor() as usize;
    let rest = m - train_count;
    if train_count == 0 || rest < 2 {
        return Err(Error::InvalidParameter(format!(
            "train fraction {train_fraction} leaves {rest} classes for validation and test"
        )));
    }

    let order = ranked_order(scores, seed);
    let train_ids = sorted_ids(scores, &order[..train_count]);

    let mut test = Vec::with_capacity(rest / 2 + 1);
    let mut validation = Vec::with_capacity(rest / 2);
    // Ascending order is the reversed tail of the descending sort, so ties
    // resolve consistently with the train cut.
    for (k, &i) in order[train_count..].iter().rev().enumerate() {
        if k % 2 == 0 {
            test.push(scores.class_ids[i]);
        } else {
            validation.push(scores.class_ids[i]);
        }
    }
    test.sort_unstable();
    validation.sort_unstable();
    Ok(Split {
        train: train_ids,
        validation,
        test,
    })
}

/// Splits classes by score sign: positive to train, negative to test, exact
/// zeros coin-flipped from the seed. Validation stays empty.
pub fn assign_by_ratio(scores: &AssignmentScores, seed: u64) -> Result<Split> {
    if scores.is_empty() {
        return Err(Error::TooFewClasses {
            required: 1,
            found: 0,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seeds::derive(seed, seeds::DOMAIN_ASSIGN, 1));
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (i, &s) in scores.scores.iter().enumerate() {
        let to_train = if s > 0.0 {
            true
        } else if s < 0.0 {
            false
        } else {
            rng.gen::<bool>()
        };
        if to_train {
            train.push(scores.class_ids[i]);
        } else {
            test.push(scores.class_ids[i]);
        }
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(Split {
        train,
        validation: Vec::new(),
        test,
    })
}

/// Indices sorted by descending score; ties broken by seeded-random keys,
/// then by class id. The keys depend only on (seed, position), so shifting
/// every score by a constant leaves the order unchanged.
fn ranked_order(scores: &AssignmentScores, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seeds::derive(seed, seeds::DOMAIN_ASSIGN, 0));
    let tie_keys: Vec<u64> = (0..scores.len()).map(|_| rng.gen()).collect();
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores.scores[b]
            .partial_cmp(&scores.scores[a])
            .expect("scores validated finite")
            .then(tie_keys[a].cmp(&tie_keys[b]))
            .then(scores.class_ids[a].cmp(&scores.class_ids[b]))
    });
    order
}

fn sorted_ids(scores: &AssignmentScores, indices: &[usize]) -> Vec<u32> {
    let mut ids: Vec<u32> = indices.iter().map(|&i| scores.class_ids[i]).collect();
    ids.sort_unstable();
    ids
}

/// Everything produced by one end-to-end run.
#[derive(Debug, Clone)]
pub struct PartitionOutcome {
    pub partition: Partition,
    pub centroids: CentroidPair,
    pub trace: Vec<ObjectiveValue>,
}

/// End-to-end pipeline: normalize, optimize, score, assign.
pub fn generate_partition(set: &ClassEmbeddingSet, config: &PartitionConfig) -> Result<Partition> {
    Ok(generate_partition_full(set, config, AssignmentRule::Fraction)?.partition)
}

/// As [`generate_partition`], but keeps the centroids and trace, and allows
/// the alternate ratio rule.
pub fn generate_partition_full(
    set: &ClassEmbeddingSet,
    config: &PartitionConfig,
    rule: AssignmentRule,
) -> Result<PartitionOutcome> {
    config.validate()?;
    let normalized;
    let set = if set.is_normalized() {
        set
    } else {
        normalized = set.normalize_unit()?;
        &normalized
    };

    let (centroids, trace) = optimize(set, config)?;
    let class_scores = scores(set, &centroids)?;
    let split = match rule {
        AssignmentRule::Fraction => assign(&class_scores, config.train_fraction, config.seed)?,
        AssignmentRule::Ratio => assign_by_ratio(&class_scores, config.seed)?,
    };
    let final_value = trace.last().expect("trace has a final entry");
    let partition = Partition {
        train: split.train,
        validation: split.validation,
        test: split.test,
        meta: PartitionMeta {
            target_divergence: config.target_divergence,
            achieved_divergence: final_value.achieved_divergence,
            lambda: config.penalty_weight,
            seed: config.seed,
            iterations: config.iterations,
            divergence_kind: config.divergence.token().into(),
            train_fraction: config.train_fraction,
        },
    };
    Ok(PartitionOutcome {
        partition,
        centroids,
        trace,
    })
}
