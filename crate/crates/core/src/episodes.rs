//! N-way K-shot episode sampling and nearest-prototype evaluation.
//!
//! Episodes are drawn from the samples of an allowed class list (typically
//! one split of a partition). A query is classified by the nearest class
//! prototype, the mean of that class's support embeddings, under squared
//! Euclidean distance. [`difficulty_sweep`] chains partition generation and
//! episode evaluation across a grid of target divergences; per-episode RNGs
//! are derived from (seed, grid index, episode index), so evaluation order
//! and thread count never change the results.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::embeddings::EmbeddingTable;
use crate::exec::map_indexed;
use crate::partition::{generate_partition, PartitionConfig};
use crate::seeds;
use crate::{Error, Result};

/// One few-shot task: `way` classes, `shot` support and `query` query
/// samples per class. `class_index` runs over `0..way`.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    way: usize,
    shot: usize,
    query: usize,
    support: Vec<(usize, Vec<f64>)>,
    query_set: Vec<(usize, Vec<f64>)>,
}

impl Episode {
    /// Builds an episode from explicit parts, checking the per-class counts.
    pub fn from_parts(
        way: usize,
        shot: usize,
        query: usize,
        support: Vec<(usize, Vec<f64>)>,
        query_set: Vec<(usize, Vec<f64>)>,
    ) -> Result<Self> {
        if way == 0 || shot == 0 || query == 0 {
            return Err(Error::InvalidParameter(
                "way, shot, and query must be positive".into(),
            ));
        }
        if support.len() != way * shot || query_set.len() != way * query {
            return Err(Error::InvalidParameter(format!(
                "expected {} support and {} query items, found {} and {}",
                way * shot,
                way * query,
                support.len(),
                query_set.len()
            )));
        }
        for (expected, items) in [(shot, &support), (query, &query_set)] {
            let mut counts = vec![0usize; way];
            for (idx, _) in items {
                if *idx >= way {
                    return Err(Error::InvalidParameter(format!(
                        "class index {idx} out of range for {way}-way episode"
                    )));
                }
                counts[*idx] += 1;
            }
            if counts.iter().any(|&c| c != expected) {
                return Err(Error::InvalidParameter(
                    "every class must contribute the same number of items".into(),
                ));
            }
        }
        Ok(Self {
            way,
            shot,
            query,
            support,
            query_set,
        })
    }

    pub fn way(&self) -> usize {
        self.way
    }

    pub fn shot(&self) -> usize {
        self.shot
    }

    pub fn query(&self) -> usize {
        self.query
    }

    pub fn support(&self) -> &[(usize, Vec<f64>)] {
        &self.support
    }

    pub fn query_set(&self) -> &[(usize, Vec<f64>)] {
        &self.query_set
    }
}

/// Partial Fisher-Yates: the first `take` entries of a seeded shuffle.
fn sample_indices(rng: &mut ChaCha8Rng, total: usize, take: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..total).collect();
    for i in 0..take {
        let j = rng.gen_range(i..total);
        idx.swap(i, j);
    }
    idx.truncate(take);
    idx
}

/// Samples an episode: `way` classes drawn uniformly without replacement
/// from `allowed_classes`, then `shot + query` samples per class without
/// replacement (first `shot` to support). Deterministic under `rng_seed`.
pub fn sample_episode(
    table: &EmbeddingTable,
    allowed_classes: &[u32],
    way: usize,
    shot: usize,
    query: usize,
    rng_seed: u64,
) -> Result<Episode> {
    if way == 0 || shot == 0 || query == 0 {
        return Err(Error::InvalidParameter(
            "way, shot, and query must be positive".into(),
        ));
    }
    if allowed_classes.len() < way {
        return Err(Error::TooFewClasses {
            required: way,
            found: allowed_classes.len(),
        });
    }

    let by_class = table.indices_by_class();
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let chosen = sample_indices(&mut rng, allowed_classes.len(), way);

    let needed = shot + query;
    let mut support = Vec::with_capacity(way * shot);
    let mut query_set = Vec::with_capacity(way * query);
    for (class_index, &slot) in chosen.iter().enumerate() {
        let class_id = allowed_classes[slot];
        let indices = by_class.get(&class_id).ok_or(Error::InsufficientSamples {
            class_id,
            available: 0,
            needed,
        })?;
        if indices.len() < needed {
            return Err(Error::InsufficientSamples {
                class_id,
                available: indices.len(),
                needed,
            });
        }
        let picks = sample_indices(&mut rng, indices.len(), needed);
        for (k, &pick) in picks.iter().enumerate() {
            let vector: Vec<f64> = table.vector(indices[pick]).iter().map(|&v| v as f64).collect();
            if k < shot {
                support.push((class_index, vector));
            } else {
                query_set.push((class_index, vector));
            }
        }
    }

    Episode::from_parts(way, shot, query, support, query_set)
}

/// Fraction of queries whose nearest prototype (squared Euclidean distance,
/// ties to the lowest class index) matches their label.
pub fn prototype_classify(episode: &Episode) -> f64 {
    let dim = episode.support[0].1.len();
    let mut prototypes = vec![vec![0.0f64; dim]; episode.way];
    for (idx, vector) in &episode.support {
        for (p, v) in prototypes[*idx].iter_mut().zip(vector) {
            *p += v;
        }
    }
    let inv = 1.0 / episode.shot as f64;
    for proto in &mut prototypes {
        for p in proto.iter_mut() {
            *p *= inv;
        }
    }

    let hits = map_indexed(episode.query_set.len(), |qi| {
        let (label, vector) = &episode.query_set[qi];
        let mut best = 0usize;
        let mut best_dist = f64::INFINITY;
        for (c, proto) in prototypes.iter().enumerate() {
            let dist: f64 = proto
                .iter()
                .zip(vector)
                .map(|(p, v)| (p - v) * (p - v))
                .sum();
            if dist < best_dist {
                best_dist = dist;
                best = c;
            }
        }
        usize::from(best == *label)
    });
    hits.iter().sum::<usize>() as f64 / episode.query_set.len() as f64
}

/// Samples and scores `episodes` episodes; episode `i` uses a seed derived
/// from `(base_seed, stream, i)`. Returns one accuracy per episode, in
/// episode order regardless of scheduling.
pub fn evaluate_episodes(
    table: &EmbeddingTable,
    allowed_classes: &[u32],
    way: usize,
    shot: usize,
    query: usize,
    episodes: usize,
    base_seed: u64,
    stream: u64,
) -> Result<Vec<f64>> {
    if episodes == 0 {
        return Err(Error::InvalidParameter("episodes must be positive".into()));
    }
    let stream_seed = seeds::derive(base_seed, seeds::DOMAIN_EPISODE, stream);
    let results = map_indexed(episodes, |i| {
        let episode_seed = seeds::derive(stream_seed, seeds::DOMAIN_EPISODE, i as u64);
        sample_episode(table, allowed_classes, way, shot, query, episode_seed)
            .map(|e| prototype_classify(&e))
    });
    results.into_iter().collect()
}

/// One grid point of a difficulty sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub target_r: f64,
    /// Achieved divergence, averaged over the partition seeds.
    pub achieved_d: f64,
    pub mean_accuracy: f64,
    /// Sample standard deviation over episode accuracies (0 for one episode).
    pub std_accuracy: f64,
    pub episodes_evaluated: usize,
}

/// For every target divergence in `r_grid` and every seed: generate a
/// partition, sample `episodes_per_r` episodes from its test split, and score
/// them with the prototype classifier. Each grid point aggregates all
/// `episodes_per_r * seeds.len()` accuracies into one row.
#[allow(clippy::too_many_arguments)]
pub fn difficulty_sweep(
    table: &EmbeddingTable,
    r_grid: &[f64],
    episodes_per_r: usize,
    base_config: &PartitionConfig,
    way: usize,
    shot: usize,
    query: usize,
    seeds: &[u64],
) -> Result<Vec<SweepRow>> {
    if r_grid.is_empty() {
        return Err(Error::InvalidParameter("empty divergence grid".into()));
    }
    if let Some(bad) = r_grid.iter().find(|r| !(**r >= 0.0 && r.is_finite())) {
        return Err(Error::InvalidParameter(format!(
            "target divergence {bad} must be finite and >= 0"
        )));
    }
    if seeds.is_empty() {
        return Err(Error::InvalidParameter("need at least one seed".into()));
    }

    let class_set = table.class_means().normalize_unit()?;
    let mut rows = Vec::with_capacity(r_grid.len());
    for (r_index, &target) in r_grid.iter().enumerate() {
        let mut accuracies = Vec::with_capacity(episodes_per_r * seeds.len());
        let mut achieved_sum = 0.0;
        for &seed in seeds {
            let config = PartitionConfig {
                target_divergence: target,
                seed,
                ..base_config.clone()
            };
            let partition = generate_partition(&class_set, &config)?;
            achieved_sum += partition.meta.achieved_divergence;
            accuracies.extend(evaluate_episodes(
                table,
                &partition.test,
                way,
                shot,
                query,
                episodes_per_r,
                seed,
                r_index as u64,
            )?);
        }
        let (mean, std) = mean_std(&accuracies);
        rows.push(SweepRow {
            target_r: target,
            achieved_d: achieved_sum / seeds.len() as f64,
            mean_accuracy: mean,
            std_accuracy: std,
            episodes_evaluated: accuracies.len(),
        });
    }
    Ok(rows)
}

/// Serializes sweep rows as the plot-ready CSV.
pub fn sweep_to_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("target_R,achieved_D,mean_accuracy,std_accuracy,episodes\n");
    for row in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            row.target_r, row.achieved_d, row.mean_accuracy, row.std_accuracy, row.episodes_evaluated
        ));
    }
    out
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
