use taskgen_core::episodes::difficulty_sweep;
use taskgen_core::partition::PartitionConfig;
use taskgen_core::synth::{generate, SynthSpec};

#[test]
fn power_check() {
    // High-power A/B: does R = 0.04 vs 0.96 move mean accuracy at all?
    for table_seed in [777u64, 1234, 9] {
        let spec = SynthSpec {
            num_classes: 100,
            dim: 4,
            samples_per_class: 25,
            num_superclusters: 10,
            intra_spread: 1.0,
            inter_spread: 2.0,
            seed: table_seed,
        };
        let (table, _) = generate(&spec).unwrap();
        let base = PartitionConfig { learning_rate: 0.01, ..PartitionConfig::default() };
        let seeds: Vec<u64> = (0..10).collect();
        let rows = difficulty_sweep(&table, &[0.04, 0.96], 300, &base, 5, 5, 15, &seeds).unwrap();
        println!(
            "table {table_seed}: acc(0.04) = {:.4} +- {:.4}, acc(0.96) = {:.4} +- {:.4}",
            rows[0].mean_accuracy,
            rows[0].std_accuracy / (rows[0].episodes_evaluated as f64).sqrt(),
            rows[1].mean_accuracy,
            rows[1].std_accuracy / (rows[1].episodes_evaluated as f64).sqrt(),
        );
    }
}
