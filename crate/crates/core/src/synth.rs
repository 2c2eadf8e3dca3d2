//! Deterministic synthetic embedding tables with a known supercluster
//! structure, for tests and difficulty experiments.
//!
//! Draws come from ChaCha8 seeded by `SynthSpec::seed` in a fixed order
//! (supercluster centers, then class centers, then samples), so equal seeds
//! give bit-identical tables on every run.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::embeddings::EmbeddingTable;
use crate::{Error, Result};

/// Shape of a synthetic embedding set.
///
/// `num_superclusters` Gaussian centers of scale `inter_spread` carry
/// `num_classes` class centers (round-robin) offset by `intra_spread`;
/// each class gets `samples_per_class` samples offset by `intra_spread / 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub num_classes: usize,
    pub dim: usize,
    pub samples_per_class: usize,
    pub num_superclusters: usize,
    pub intra_spread: f64,
    pub inter_spread: f64,
    pub seed: u64,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_superclusters < 1 || self.num_classes < self.num_superclusters {
            return Err(Error::InvalidParameter(
                "need num_classes >= num_superclusters >= 1".into(),
            ));
        }
        if self.dim == 0 || self.samples_per_class == 0 {
            return Err(Error::InvalidParameter(
                "dim and samples_per_class must be positive".into(),
            ));
        }
        if !(self.intra_spread > 0.0) || !(self.inter_spread > 0.0) {
            return Err(Error::InvalidParameter("spreads must be positive".into()));
        }
        Ok(())
    }
}

/// Generates the table plus the ground-truth class -> supercluster map.
/// Class ids are contiguous `0..num_classes`.
pub fn generate(spec: &SynthSpec) -> Result<(EmbeddingTable, BTreeMap<u32, u32>)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let normal = StandardNormal;
    let gauss_vec = |rng: &mut ChaCha8Rng, scale: f64| -> Vec<f64> {
        (0..spec.dim)
            .map(|_| scale * <StandardNormal as Distribution<f64>>::sample(&normal, rng))
            .collect()
    };

    let super_centers: Vec<Vec<f64>> = (0..spec.num_superclusters)
        .map(|_| gauss_vec(&mut rng, spec.inter_spread))
        .collect();

    let mut ground_truth = BTreeMap::new();
    let mut class_centers = Vec::with_capacity(spec.num_classes);
    for class in 0..spec.num_classes {
        let group = class % spec.num_superclusters;
        ground_truth.insert(class as u32, group as u32);
        let offset = gauss_vec(&mut rng, spec.intra_spread);
        let center: Vec<f64> = super_centers[group]
            .iter()
            .zip(&offset)
            .map(|(c, o)| c + o)
            .collect();
        class_centers.push(center);
    }

    let sample_scale = spec.intra_spread / 2.0;
    let mut rows = Vec::with_capacity(spec.num_classes * spec.samples_per_class);
    for (class, center) in class_centers.iter().enumerate() {
        for _ in 0..spec.samples_per_class {
            let offset = gauss_vec(&mut rng, sample_scale);
            let vector: Vec<f32> = center
                .iter()
                .zip(&offset)
                .map(|(c, o)| (c + o) as f32)
                .collect();
            rows.push((class as u32, vector));
        }
    }

    Ok((EmbeddingTable::from_rows(spec.dim, rows)?, ground_truth))
}
