//! Compares the data-parallel inner loops against sequential execution.
//!
//! With the default `parallel` feature, each kernel is measured on the
//! ambient rayon pool and on a single-threaded pool (the sequential
//! baseline). Built with `--no-default-features` the same benches measure
//! the plain-iterator fallback. Outputs are bit-identical in all cases;
//! only the wall time differs.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use taskgen_core::embeddings::EmbeddingTable;
use taskgen_core::partition::{objective_and_gradient, CentroidPair, PartitionConfig};
use taskgen_core::synth::{generate, SynthSpec};

fn big_table() -> EmbeddingTable {
    let spec = SynthSpec {
        num_classes: 512,
        dim: 128,
        samples_per_class: 40,
        num_superclusters: 8,
        intra_spread: 0.3,
        inter_spread: 2.0,
        seed: 17,
    };
    generate(&spec).unwrap().0
}

fn run_bench<F: Fn() + Sync>(c: &mut Criterion, group: &str, f: F) {
    let mut g = c.benchmark_group(group);
    #[cfg(feature = "parallel")]
    {
        let single = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        g.bench_function(BenchmarkId::new("threads", 1), |b| {
            b.iter(|| single.install(&f))
        });
        g.bench_function(
            BenchmarkId::new("threads", rayon::current_num_threads()),
            |b| b.iter(&f),
        );
    }
    #[cfg(not(feature = "parallel"))]
    g.bench_function("sequential", |b| b.iter(&f));
    g.finish();
}

fn bench_class_means(c: &mut Criterion) {
    let table = big_table();
    run_bench(c, "class_means/512x40x128", || {
        std::hint::black_box(table.class_means());
    });
}

fn bench_objective_gradient(c: &mut Criterion) {
    let set = big_table().class_means().normalize_unit().unwrap();
    let config = PartitionConfig {
        target_divergence: 0.64,
        ..PartitionConfig::default()
    };
    let centroids = CentroidPair::new(
        set.mean(0).to_vec(),
        set.mean(set.len() - 1).to_vec(),
    )
    .unwrap();
    run_bench(c, "objective_and_gradient/m512_d128", || {
        std::hint::black_box(objective_and_gradient(&set, &centroids, &config).unwrap());
    });
}

fn bench_episode_eval(c: &mut Criterion) {
    let table = big_table();
    let allowed: Vec<u32> = (0..64).collect();
    run_bench(c, "episodes/200x5w5s15q", || {
        let accs =
            taskgen_core::episodes::evaluate_episodes(&table, &allowed, 5, 5, 15, 200, 3, 0)
                .unwrap();
        std::hint::black_box(accs);
    });
}

criterion_group!(
    benches,
    bench_class_means,
    bench_objective_gradient,
    bench_episode_eval
);
criterion_main!(benches);
