//! Subcommand implementations.

use std::collections::BTreeMap;

use serde::Serialize;

use taskgen_core::analysis::{
    hop_distance_pairs, pca_project, tree_to_graph, ward_cluster, ClassGraph, MergeTree,
};
use taskgen_core::divergence::{gaussian_divergence, gaussian_summary, DivergenceKind};
use taskgen_core::embeddings::{save_samples, SampleFormat};
use taskgen_core::episodes::{difficulty_sweep, evaluate_episodes, sweep_to_csv};
use taskgen_core::partition::{
    generate_partition_full, AssignmentRule, Partition, PartitionConfig,
};
use taskgen_core::synth::{generate, SynthSpec};

use crate::files::{load_table, read_to_string, write_atomic, CentroidsFile};
use crate::{Command, Failure, OptimizerArgs};

pub fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Partition {
            embeddings,
            target_divergence,
            optimizer,
            rule,
            seed,
            out,
            centroids_out,
        } => partition(
            &embeddings,
            target_divergence,
            &optimizer,
            &rule,
            seed,
            &out,
            centroids_out.as_deref(),
        ),
        Command::Sweep {
            embeddings,
            grid,
            episodes,
            way,
            shot,
            query,
            seeds,
            optimizer,
            seed,
            out,
        } => sweep(
            &embeddings,
            &grid,
            episodes,
            way,
            shot,
            query,
            seeds,
            &optimizer,
            seed,
            &out,
        ),
        Command::AnalyzeTree {
            embeddings,
            graph,
            targets,
            out,
            emit_graph,
        } => analyze_tree(
            &embeddings,
            graph.as_deref(),
            targets.as_deref(),
            &out,
            emit_graph.as_deref(),
        ),
        Command::Project {
            embeddings,
            centroids,
            k,
            raw,
            out,
        } => project(&embeddings, centroids.as_deref(), k, raw, &out),
        Command::EpisodeEval {
            embeddings,
            partition,
            split,
            way,
            shot,
            query,
            episodes,
            seed,
            out,
        } => episode_eval(
            &embeddings,
            &partition,
            &split,
            way,
            shot,
            query,
            episodes,
            seed,
            out.as_deref(),
        ),
        Command::Synth {
            classes,
            dim,
            samples,
            superclusters,
            sigma_within,
            sigma_between,
            seed,
            out,
            ground_truth,
        } => synth(
            classes,
            dim,
            samples,
            superclusters,
            sigma_within,
            sigma_between,
            seed,
            &out,
            ground_truth.as_deref(),
        ),
        Command::Divergence {
            a,
            b,
            kind,
            damping,
        } => divergence(&a, &b, &kind, damping),
    }
}

fn build_config(optimizer: &OptimizerArgs, target_divergence: f64, seed: u64) -> PartitionConfig {
    let divergence = DivergenceKind::from_token(&optimizer.divergence)
        .expect("validated by clap value_parser");
    PartitionConfig {
        target_divergence,
        penalty_weight: optimizer.lambda,
        learning_rate: optimizer.lr,
        momentum: optimizer.momentum,
        iterations: optimizer.iterations,
        seed,
        divergence,
        train_fraction: optimizer.train_fraction,
        trace_stride: 1,
    }
}

fn describe_optimizer(o: &OptimizerArgs) -> String {
    format!(
        "lambda={} lr={} momentum={} iterations={} divergence={} train_fraction={}",
        o.lambda, o.lr, o.momentum, o.iterations, o.divergence, o.train_fraction
    )
}

#[allow(clippy::too_many_arguments)]
fn partition(
    embeddings: &str,
    target_divergence: f64,
    optimizer: &OptimizerArgs,
    rule: &str,
    seed: u64,
    out: &str,
    centroids_out: Option<&str>,
) -> Result<(), Failure> {
    println!(
        "partition: embeddings={embeddings} target_divergence={target_divergence} {} rule={rule} seed={seed} out={out}",
        describe_optimizer(optimizer)
    );
    let table = load_table(embeddings)?;
    let set = table.class_means().normalize_unit()?;
    let config = build_config(optimizer, target_divergence, seed);
    let assignment_rule = match rule {
        "ratio" => AssignmentRule::Ratio,
        _ => AssignmentRule::Fraction,
    };
    let outcome = generate_partition_full(&set, &config, assignment_rule)?;
    write_atomic(out, outcome.partition.to_json().as_bytes())?;
    if let Some(path) = centroids_out {
        let file = CentroidsFile {
            mu_train: outcome.centroids.mu_train.clone(),
            mu_test: outcome.centroids.mu_test.clone(),
        };
        let json = serde_json::to_string(&file).expect("centroids serialize");
        write_atomic(path, format!("{json}\n").as_bytes())?;
    }
    let p = &outcome.partition;
    println!(
        "achieved_divergence={} splits: train={} validation={} test={}",
        p.meta.achieved_divergence,
        p.train.len(),
        p.validation.len(),
        p.test.len()
    );
    Ok(())
}

fn parse_grid(grid: &str) -> Result<Vec<f64>, Failure> {
    let mut out = Vec::new();
    for part in grid.split(',') {
        let value: f64 = part
            .trim()
            .parse()
            .map_err(|_| Failure::usage(format!("invalid grid entry {part:?}")))?;
        if !(value >= 0.0 && value.is_finite()) {
            return Err(Failure::usage(format!(
                "grid entry {value} must be finite and >= 0"
            )));
        }
        out.push(value);
    }
    if out.is_empty() {
        return Err(Failure::usage("empty grid"));
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn sweep(
    embeddings: &str,
    grid: &str,
    episodes: usize,
    way: usize,
    shot: usize,
    query: usize,
    seeds: usize,
    optimizer: &OptimizerArgs,
    seed: u64,
    out: &str,
) -> Result<(), Failure> {
    let r_grid = parse_grid(grid)?;
    if seeds == 0 {
        return Err(Failure::usage("--seeds must be at least 1"));
    }
    println!(
        "sweep: embeddings={embeddings} grid={grid} episodes={episodes} way={way} shot={shot} query={query} seeds={seeds} {} seed={seed} out={out}",
        describe_optimizer(optimizer)
    );
    let table = load_table(embeddings)?;
    let base = build_config(optimizer, 0.0, seed);
    let seed_list: Vec<u64> = (0..seeds as u64).map(|k| seed + k).collect();
    let rows = difficulty_sweep(
        &table, &r_grid, episodes, &base, way, shot, query, &seed_list,
    )?;
    write_atomic(out, sweep_to_csv(&rows).as_bytes())?;
    for row in &rows {
        println!(
            "R={} achieved_D={} mean_accuracy={} std_accuracy={} episodes={}",
            row.target_r, row.achieved_d, row.mean_accuracy, row.std_accuracy, row.episodes_evaluated
        );
    }
    Ok(())
}

#[derive(Serialize)]
struct TreeReport {
    mean_hop_distance: Option<f64>,
    pairs: Option<Vec<(u32, u32, f64, f64, f64)>>,
    tree: MergeTree,
}

fn analyze_tree(
    embeddings: &str,
    graph: Option<&str>,
    targets: Option<&str>,
    out: &str,
    emit_graph: Option<&str>,
) -> Result<(), Failure> {
    println!(
        "analyze-tree: embeddings={embeddings} graph={} targets={} out={out}",
        graph.unwrap_or("-"),
        targets.unwrap_or("-")
    );
    let table = load_table(embeddings)?;
    let set = table.class_means();
    let tree = ward_cluster(&set)?;
    let tree_graph = tree_to_graph(&tree);

    if let Some(path) = emit_graph {
        let mut text = String::new();
        for (a, b) in tree_graph.edges() {
            text.push_str(&format!("{a}\t{b}\n"));
        }
        write_atomic(path, text.as_bytes())?;
    }

    let mut report = TreeReport {
        mean_hop_distance: None,
        pairs: None,
        tree,
    };
    if let (Some(graph_path), Some(targets_path)) = (graph, targets) {
        let target_map: BTreeMap<u32, String> = serde_json::from_str(&read_to_string(targets_path)?)
            .map_err(|e| Failure {
                code: 3,
                message: format!("{targets_path}: {e}"),
            })?;
        let external = ClassGraph::from_edge_list(&read_to_string(graph_path)?, &target_map)?;
        let ids: Vec<u32> = target_map.keys().copied().collect();
        let pairs = hop_distance_pairs(&tree_graph, &external, &ids)?;
        let mean = pairs.iter().map(|p| p.4).sum::<f64>() / pairs.len() as f64;
        println!("mean_hop_distance={mean} pairs={}", pairs.len());
        report.mean_hop_distance = Some(mean);
        report.pairs = Some(pairs);
    }
    let json = serde_json::to_string(&report).expect("report serializes");
    write_atomic(out, format!("{json}\n").as_bytes())?;
    Ok(())
}

fn project(
    embeddings: &str,
    centroids: Option<&str>,
    k: usize,
    raw: bool,
    out: &str,
) -> Result<(), Failure> {
    println!(
        "project: embeddings={embeddings} centroids={} k={k} raw={raw} out={out}",
        centroids.unwrap_or("-")
    );
    let table = load_table(embeddings)?;
    let mut set = table.class_means();
    if !raw {
        set = set.normalize_unit()?;
    }
    let projected = pca_project(&set, k)?;

    let mut text = String::from("# explained_variance");
    for v in &projected.explained_variance {
        text.push_str(&format!(",{v}"));
    }
    text.push('\n');
    text.push_str("label");
    for c in 0..k {
        text.push_str(&format!(",pc{c}"));
    }
    text.push('\n');
    for (i, id) in projected.class_ids.iter().enumerate() {
        text.push_str(&id.to_string());
        for v in projected.coord(i) {
            text.push_str(&format!(",{v}"));
        }
        text.push('\n');
    }
    if let Some(path) = centroids {
        let file: CentroidsFile =
            serde_json::from_str(&read_to_string(path)?).map_err(|e| Failure {
                code: 3,
                message: format!("{path}: {e}"),
            })?;
        for (label, mu) in [("mu_train", &file.mu_train), ("mu_test", &file.mu_test)] {
            let coords = projected.project(mu)?;
            text.push_str(label);
            for v in coords {
                text.push_str(&format!(",{v}"));
            }
            text.push('\n');
        }
    }
    write_atomic(out, text.as_bytes())?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn episode_eval(
    embeddings: &str,
    partition_path: &str,
    split: &str,
    way: usize,
    shot: usize,
    query: usize,
    episodes: usize,
    seed: u64,
    out: Option<&str>,
) -> Result<(), Failure> {
    println!(
        "episode-eval: embeddings={embeddings} partition={partition_path} split={split} way={way} shot={shot} query={query} episodes={episodes} seed={seed}"
    );
    let table = load_table(embeddings)?;
    let partition = Partition::from_json(&read_to_string(partition_path)?).map_err(|e| Failure {
        code: 3,
        message: format!("{partition_path}: {e}"),
    })?;
    let allowed = match split {
        "train" => &partition.train,
        "validation" => &partition.validation,
        _ => &partition.test,
    };
    let accuracies = evaluate_episodes(&table, allowed, way, shot, query, episodes, seed, 0)?;
    let n = accuracies.len() as f64;
    let mean = accuracies.iter().sum::<f64>() / n;
    let std = if accuracies.len() > 1 {
        (accuracies.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    println!("episodes={episodes} mean_accuracy={mean} std_accuracy={std}");
    if let Some(path) = out {
        let text = format!(
            "split,way,shot,query,episodes,mean_accuracy,std_accuracy\n{split},{way},{shot},{query},{episodes},{mean},{std}\n"
        );
        write_atomic(path, text.as_bytes())?;
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn synth(
    classes: usize,
    dim: usize,
    samples: usize,
    superclusters: usize,
    sigma_within: f64,
    sigma_between: f64,
    seed: u64,
    out: &str,
    ground_truth: Option<&str>,
) -> Result<(), Failure> {
    println!(
        "synth: classes={classes} dim={dim} samples={samples} superclusters={superclusters} sigma_within={sigma_within} sigma_between={sigma_between} seed={seed} out={out}"
    );
    let spec = SynthSpec {
        num_classes: classes,
        dim,
        samples_per_class: samples,
        num_superclusters: superclusters,
        intra_spread: sigma_within,
        inter_spread: sigma_between,
        seed,
    };
    let (table, truth) = generate(&spec)?;
    let format = if out.ends_with(".csv") {
        SampleFormat::Csv
    } else {
        SampleFormat::Binary
    };
    let mut bytes = Vec::new();
    save_samples(&table, &mut bytes, format)?;
    write_atomic(out, &bytes)?;
    if let Some(path) = ground_truth {
        let json = serde_json::to_string(&truth).expect("ground truth serializes");
        write_atomic(path, format!("{json}\n").as_bytes())?;
    }
    println!("samples={} dim={dim}", table.len());
    Ok(())
}

fn divergence(a: &str, b: &str, kind: &str, damping: f64) -> Result<(), Failure> {
    println!("divergence: a={a} b={b} kind={kind} damping={damping}");
    let kind = DivergenceKind::from_token(kind)
        .ok_or_else(|| Failure::usage(format!("unknown divergence kind {kind:?}")))?;
    let summarize = |path: &str| -> Result<_, Failure> {
        let set = load_table(path)?.class_means();
        Ok(gaussian_summary(set.means(), set.dim(), damping)?)
    };
    let ga = summarize(a)?;
    let gb = summarize(b)?;
    let value = gaussian_divergence(&ga, &gb, kind)?;
    println!("{value}");
    Ok(())
}
