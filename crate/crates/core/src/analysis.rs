//! Post-hoc analyses: Ward hierarchical clustering, hop distances between
//! class hierarchies, PCA projection, and rank/linear correlation.
//!
//! Hop distances compare a clustering tree (as a graph) against an external
//! class graph given as a generic edge list. Shortest paths count edges
//! ("hops") and are normalized by the largest distance over the target
//! pairs, so hierarchies of different depths land on a common [0, 1] scale.

use std::collections::{BTreeMap, HashMap, VecDeque};

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::embeddings::ClassEmbeddingSet;
use crate::exec::map_indexed;
use crate::{Error, Result};

/// A stepwise dendrogram: `merges[k]` joins two prior nodes at a Ward merge
/// cost. Nodes `0..M` are the leaves (aligned with `leaves`); merge `k`
/// creates node `M + k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeTree {
    pub leaves: Vec<u32>,
    pub merges: Vec<(usize, usize, f64)>,
}

impl MergeTree {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("merge tree serializes")
    }
}

/// Agglomerative clustering of the class means with Ward linkage.
///
/// Merge costs are the within-cluster variance increase
/// `|A||B|/(|A|+|B|) ||c_A - c_B||^2`, updated with the Lance-Williams
/// recurrence. Cost ties break on the smallest `(node_a, node_b)` pair.
pub fn ward_cluster(set: &ClassEmbeddingSet) -> Result<MergeTree> {
    let m = set.len();
    if m < 2 {
        return Err(Error::TooFewClasses {
            required: 2,
            found: m,
        });
    }

    // Slot state: leaves occupy slots 0..m; a merge reuses the lower slot.
    let mut node_of: Vec<usize> = (0..m).collect();
    let mut size: Vec<f64> = vec![1.0; m];
    let mut active: Vec<bool> = vec![true; m];

    // Pairwise Ward costs, built in parallel, then maintained in place.
    let costs: Vec<Vec<f64>> = map_indexed(m, |i| {
        let mut row = vec![0.0; m];
        for (j, slot) in row.iter_mut().enumerate() {
            if j != i {
                let d: f64 = set
                    .mean(i)
                    .iter()
                    .zip(set.mean(j))
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                *slot = 0.5 * d;
            }
        }
        row
    });
    let mut costs = costs;

    let mut merges = Vec::with_capacity(m - 1);
    for step in 0..m - 1 {
        // Smallest cost; ties by smallest (node_a, node_b).
        let mut best: Option<(f64, usize, usize, usize, usize)> = None;
        for i in 0..m {
            if !active[i] {
                continue;
            }
            for j in i + 1..m {
                if !active[j] {
                    continue;
                }
                let cost = costs[i][j];
                let (na, nb) = if node_of[i] < node_of[j] {
                    (node_of[i], node_of[j])
                } else {
                    (node_of[j], node_of[i])
                };
                let candidate = (cost, na, nb, i, j);
                let better = match &best {
                    None => true,
                    Some((c, a, b, _, _)) => {
                        cost < *c || (cost == *c && (na, nb) < (*a, *b))
                    }
                };
                if better {
                    best = Some(candidate);
                }
            }
        }
        let (cost, na, nb, i, j) = best.expect("at least one active pair");
        merges.push((na, nb, cost));

        // Lance-Williams update of the merged cluster's costs.
        let (si, sj) = (size[i], size[j]);
        for k in 0..m {
            if !active[k] || k == i || k == j {
                continue;
            }
            let sk = size[k];
            let updated =
                ((si + sk) * costs[i][k] + (sj + sk) * costs[j][k] - sk * cost) / (si + sj + sk);
            costs[i][k] = updated;
            costs[k][i] = updated;
        }
        active[j] = false;
        size[i] = si + sj;
        node_of[i] = m + step;
    }

    Ok(MergeTree {
        leaves: set.class_ids().to_vec(),
        merges,
    })
}

/// An undirected simple graph over named nodes, with class ids mapped onto a
/// subset of the nodes.
#[derive(Debug, Clone)]
pub struct ClassGraph {
    names: Vec<String>,
    adjacency: Vec<Vec<usize>>,
    class_nodes: BTreeMap<u32, usize>,
}

impl ClassGraph {
    /// Builds a graph from `name_a<TAB>name_b` lines plus a class -> node
    /// name map. Duplicate edges collapse; self-loops are ignored.
    pub fn from_edge_list(text: &str, targets: &BTreeMap<u32, String>) -> Result<Self> {
        let mut index: HashMap<String, usize> = HashMap::new();
        let mut names = Vec::new();
        let mut adjacency: Vec<Vec<usize>> = Vec::new();
        let intern = |name: &str,
                          names: &mut Vec<String>,
                          adjacency: &mut Vec<Vec<usize>>,
                          index: &mut HashMap<String, usize>| {
            *index.entry(name.to_string()).or_insert_with(|| {
                names.push(name.to_string());
                adjacency.push(Vec::new());
                names.len() - 1
            })
        };

        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim_end_matches('\r');
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split('\t');
            let (a, b) = match (parts.next(), parts.next(), parts.next()) {
                (Some(a), Some(b), None) if !a.is_empty() && !b.is_empty() => (a, b),
                _ => {
                    return Err(Error::MalformedRow {
                        line: lineno + 1,
                        reason: "expected node_a<TAB>node_b".into(),
                    })
                }
            };
            if a == b {
                continue;
            }
            let ia = intern(a, &mut names, &mut adjacency, &mut index);
            let ib = intern(b, &mut names, &mut adjacency, &mut index);
            if !adjacency[ia].contains(&ib) {
                adjacency[ia].push(ib);
                adjacency[ib].push(ia);
            }
        }

        let mut class_nodes = BTreeMap::new();
        for (&class_id, name) in targets {
            let node = *index
                .get(name)
                .ok_or(Error::MissingGraphNode { class_id })?;
            class_nodes.insert(class_id, node);
        }
        Ok(Self {
            names,
            adjacency,
            class_nodes,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.names.len()
    }

    pub fn num_edges(&self) -> usize {
        self.adjacency.iter().map(|n| n.len()).sum::<usize>() / 2
    }

    pub fn node_name(&self, node: usize) -> &str {
        &self.names[node]
    }

    /// Class ids this graph can answer distance queries for.
    pub fn class_ids(&self) -> Vec<u32> {
        self.class_nodes.keys().copied().collect()
    }

    /// Edges as `(name_a, name_b)` pairs, each once.
    pub fn edges(&self) -> Vec<(String, String)> {
        let mut out = Vec::with_capacity(self.num_edges());
        for (a, nbrs) in self.adjacency.iter().enumerate() {
            for &b in nbrs {
                if a < b {
                    out.push((self.names[a].clone(), self.names[b].clone()));
                }
            }
        }
        out
    }

    fn bfs_hops(&self, start: usize) -> Vec<Option<u32>> {
        let mut dist = vec![None; self.adjacency.len()];
        let mut queue = VecDeque::new();
        dist[start] = Some(0);
        queue.push_back(start);
        while let Some(u) = queue.pop_front() {
            let du = dist[u].expect("queued nodes have distances");
            for &v in &self.adjacency[u] {
                if dist[v].is_none() {
                    dist[v] = Some(du + 1);
                    queue.push_back(v);
                }
            }
        }
        dist
    }
}

/// Turns a merge tree into its graph: one node per leaf, one per merge,
/// edges child -> parent. Leaves are named by class id, merges `m{k}`.
pub fn tree_to_graph(tree: &MergeTree) -> ClassGraph {
    let m = tree.leaves.len();
    let total = m + tree.merges.len();
    let mut names: Vec<String> = Vec::with_capacity(total);
    let mut class_nodes = BTreeMap::new();
    for (i, &id) in tree.leaves.iter().enumerate() {
        names.push(id.to_string());
        class_nodes.insert(id, i);
    }
    for k in 0..tree.merges.len() {
        names.push(format!("m{k}"));
    }
    let mut adjacency = vec![Vec::new(); total];
    for (k, &(a, b, _)) in tree.merges.iter().enumerate() {
        let parent = m + k;
        adjacency[a].push(parent);
        adjacency[parent].push(a);
        adjacency[b].push(parent);
        adjacency[parent].push(b);
    }
    ClassGraph {
        names,
        adjacency,
        class_nodes,
    }
}

/// Pairwise shortest-path hop counts between target classes, divided by the
/// largest count over all target pairs, so entries land in [0, 1].
/// Needs at least two targets (the normalizer is the max pair distance).
pub fn graph_hop_matrix(graph: &ClassGraph, targets: &[u32]) -> Result<Vec<Vec<f64>>> {
    if targets.len() < 2 {
        return Err(Error::InvalidParameter(
            "need at least two target classes".into(),
        ));
    }
    let nodes: Vec<usize> = targets
        .iter()
        .map(|&id| {
            graph
                .class_nodes
                .get(&id)
                .copied()
                .ok_or(Error::MissingGraphNode { class_id: id })
        })
        .collect::<Result<_>>()?;

    let hops_from: Vec<Vec<Option<u32>>> = map_indexed(nodes.len(), |i| graph.bfs_hops(nodes[i]));

    let n = targets.len();
    let mut raw = vec![vec![0.0f64; n]; n];
    let mut max = 0.0f64;
    for i in 0..n {
        for j in i + 1..n {
            let hops = hops_from[i][nodes[j]].ok_or(Error::UnreachablePair {
                a: targets[i],
                b: targets[j],
            })?;
            let h = hops as f64;
            raw[i][j] = h;
            raw[j][i] = h;
            if h > max {
                max = h;
            }
        }
    }
    if max == 0.0 {
        return Err(Error::InvalidParameter(
            "all target classes map to the same node".into(),
        ));
    }
    for row in &mut raw {
        for v in row.iter_mut() {
            *v /= max;
        }
    }
    Ok(raw)
}

/// Mean absolute difference of normalized hop distances over unordered
/// target pairs, between two class graphs.
pub fn hop_distance(ga: &ClassGraph, gb: &ClassGraph, targets: &[u32]) -> Result<f64> {
    let ha = graph_hop_matrix(ga, targets)?;
    let hb = graph_hop_matrix(gb, targets)?;
    let n = targets.len();
    let mut acc = 0.0;
    let mut pairs = 0usize;
    for i in 0..n {
        for j in i + 1..n {
            acc += (ha[i][j] - hb[i][j]).abs();
            pairs += 1;
        }
    }
    Ok(acc / pairs as f64)
}

/// Per-pair hop comparison: `(class_a, class_b, d_a, d_b, |d_a - d_b|)`.
pub fn hop_distance_pairs(
    ga: &ClassGraph,
    gb: &ClassGraph,
    targets: &[u32],
) -> Result<Vec<(u32, u32, f64, f64, f64)>> {
    let ha = graph_hop_matrix(ga, targets)?;
    let hb = graph_hop_matrix(gb, targets)?;
    let n = targets.len();
    let mut out = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            out.push((
                targets[i],
                targets[j],
                ha[i][j],
                hb[i][j],
                (ha[i][j] - hb[i][j]).abs(),
            ));
        }
    }
    Ok(out)
}

/// PCA projection of the class means.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedPoints {
    pub class_ids: Vec<u32>,
    /// Row-major M x k projected coordinates.
    pub coords: Vec<f64>,
    pub k: usize,
    /// Population variance captured by each component, nonincreasing.
    pub explained_variance: Vec<f64>,
    /// Row-major k x dim principal axes (unit length, mutually orthogonal).
    pub components: Vec<f64>,
    /// Column means subtracted before projecting.
    pub center: Vec<f64>,
}

impl ProjectedPoints {
    pub fn coord(&self, i: usize) -> &[f64] {
        &self.coords[i * self.k..(i + 1) * self.k]
    }

    /// Projects an extra vector (e.g. a centroid) with the fitted basis.
    pub fn project(&self, vector: &[f64]) -> Result<Vec<f64>> {
        let dim = self.center.len();
        if vector.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: vector.len(),
            });
        }
        Ok((0..self.k)
            .map(|c| {
                let axis = &self.components[c * dim..(c + 1) * dim];
                vector
                    .iter()
                    .zip(&self.center)
                    .zip(axis)
                    .map(|((v, m), a)| (v - m) * a)
                    .sum()
            })
            .collect())
    }
}

/// Centers the class means, eigendecomposes their population covariance, and
/// projects onto the top-k eigenvectors. Each component is signed so that
/// its largest-magnitude entry is positive.
pub fn pca_project(set: &ClassEmbeddingSet, k: usize) -> Result<ProjectedPoints> {
    let m = set.len();
    let dim = set.dim();
    if k == 0 || k > m.min(dim) {
        return Err(Error::InvalidParameter(format!(
            "k = {k} out of range 1..={}",
            m.min(dim)
        )));
    }

    let mut center = vec![0.0f64; dim];
    for i in 0..m {
        for (c, v) in center.iter_mut().zip(set.mean(i)) {
            *c += v;
        }
    }
    for c in &mut center {
        *c /= m as f64;
    }

    let centered = DMatrix::from_fn(m, dim, |i, d| set.mean(i)[d] - center[d]);
    let cov = centered.transpose() * &centered / m as f64;
    let eig = SymmetricEigen::new(cov);

    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());

    let mut components = Vec::with_capacity(k * dim);
    let mut explained_variance = Vec::with_capacity(k);
    for &col in order.iter().take(k) {
        let mut axis: Vec<f64> = eig.eigenvectors.column(col).iter().copied().collect();
        let lead = axis
            .iter()
            .enumerate()
            .max_by(|(_, a), (_, b)| a.abs().partial_cmp(&b.abs()).unwrap())
            .map(|(i, _)| i)
            .unwrap_or(0);
        if axis[lead] < 0.0 {
            for v in &mut axis {
                *v = -*v;
            }
        }
        components.extend_from_slice(&axis);
        explained_variance.push(eig.eigenvalues[col]);
    }

    let coords = map_indexed(m, |i| {
        let row = set.mean(i);
        (0..k)
            .map(|c| {
                let axis = &components[c * dim..(c + 1) * dim];
                row.iter()
                    .zip(&center)
                    .zip(axis)
                    .map(|((v, mu), a)| (v - mu) * a)
                    .sum::<f64>()
            })
            .collect::<Vec<f64>>()
    })
    .into_iter()
    .flatten()
    .collect();

    Ok(ProjectedPoints {
        class_ids: set.class_ids().to_vec(),
        coords,
        k,
        explained_variance,
        components,
        center,
    })
}

/// Sample Pearson correlation coefficient.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::DimensionMismatch {
            expected: xs.len(),
            found: ys.len(),
        });
    }
    if xs.len() < 2 {
        return Err(Error::InvalidParameter("need at least two points".into()));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        let dx = x - mx;
        let dy = y - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::InvalidParameter("zero variance".into()));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman rank correlation: Pearson over average ranks (ties averaged).
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64> {
    pearson(&average_ranks(xs)?, &average_ranks(ys)?)
}

fn average_ranks(values: &[f64]) -> Result<Vec<f64>> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("values must be finite".into()));
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // 1-based ranks, tied values share the average rank.
        let avg = (i + j + 2) as f64 / 2.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    Ok(ranks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embeddings::ClassEmbeddingSet;

    fn set(dim: usize, rows: &[f64]) -> ClassEmbeddingSet {
        let ids = (0..rows.len() / dim).map(|i| i as u32).collect();
        ClassEmbeddingSet::from_means(ids, dim, rows.to_vec()).unwrap()
    }

    /// Brute-force Ward: recompute every pair's variance increase from
    /// cluster members at each step. Independent of the Lance-Williams path.
    fn ward_oracle(dim: usize, points: &[f64]) -> Vec<(usize, usize, f64)> {
        let m = points.len() / dim;
        struct Cluster {
            node: usize,
            members: Vec<usize>,
        }
        let mut clusters: Vec<Cluster> = (0..m)
            .map(|i| Cluster {
                node: i,
                members: vec![i],
            })
            .collect();
        let centroid = |members: &[usize]| -> Vec<f64> {
            let mut c = vec![0.0; dim];
            for &p in members {
                for (cv, v) in c.iter_mut().zip(&points[p * dim..(p + 1) * dim]) {
                    *cv += v;
                }
            }
            for cv in &mut c {
                *cv /= members.len() as f64;
            }
            c
        };
        let mut merges = Vec::new();
        for step in 0..m - 1 {
            let mut best: Option<(f64, usize, usize, usize, usize)> = None;
            for i in 0..clusters.len() {
                for j in i + 1..clusters.len() {
                    let ca = centroid(&clusters[i].members);
                    let cb = centroid(&clusters[j].members);
                    let sa = clusters[i].members.len() as f64;
                    let sb = clusters[j].members.len() as f64;
                    let d: f64 = ca.iter().zip(&cb).map(|(a, b)| (a - b) * (a - b)).sum();
                    let cost = sa * sb / (sa + sb) * d;
                    let (na, nb) = if clusters[i].node < clusters[j].node {
                        (clusters[i].node, clusters[j].node)
                    } else {
                        (clusters[j].node, clusters[i].node)
                    };
                    let better = match &best {
                        None => true,
                        Some((c, a, b, _, _)) => cost < *c || (cost == *c && (na, nb) < (*a, *b)),
                    };
                    if better {
                        best = Some((cost, na, nb, i, j));
                    }
                }
            }
            let (cost, na, nb, i, j) = best.unwrap();
            merges.push((na, nb, cost));
            let mut members = clusters[i].members.clone();
            members.extend_from_slice(&clusters[j].members);
            clusters.remove(j);
            clusters.remove(i);
            clusters.push(Cluster {
                node: m + step,
                members,
            });
        }
        merges
    }

    #[test]
    fn two_point_merge_height() {
        let s = set(2, &[0.0, 0.0, 3.0, 4.0]);
        let tree = ward_cluster(&s).unwrap();
        assert_eq!(tree.merges.len(), 1);
        let (a, b, h) = tree.merges[0];
        assert_eq!((a, b), (0, 1));
        assert!((h - 12.5).abs() <= 1e-12); // ||a-b||^2 / 2 = 25/2
    }

    #[test]
    fn two_far_pairs_merge_pairs_first() {
        let s = set(
            2,
            &[
                0.0, 0.0, //
                0.4, 0.0, //
                100.0, 0.0, //
                100.0, 0.5,
            ],
        );
        let tree = ward_cluster(&s).unwrap();
        let first_two: Vec<(usize, usize)> =
            tree.merges[..2].iter().map(|&(a, b, _)| (a, b)).collect();
        assert!(first_two.contains(&(0, 1)));
        assert!(first_two.contains(&(2, 3)));
        assert_eq!((tree.merges[2].0, tree.merges[2].1), (4, 5));
    }

    #[test]
    fn matches_brute_force_oracle() {
        let mut state = 7u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        for n in 2..=10 {
            for _ in 0..30 {
                let dim = 3;
                let points: Vec<f64> = (0..n * dim).map(|_| next() * 4.0).collect();
                let s = set(dim, &points);
                let tree = ward_cluster(&s).unwrap();
                let oracle = ward_oracle(dim, &points);
                assert_eq!(tree.merges.len(), oracle.len());
                for (got, want) in tree.merges.iter().zip(&oracle) {
                    assert_eq!((got.0, got.1), (want.0, want.1));
                    assert!((got.2 - want.2).abs() <= 1e-9 * want.2.max(1.0));
                }
                for w in tree.merges.windows(2) {
                    assert!(w[1].2 >= w[0].2 - 1e-12);
                }
            }
        }
    }

    #[test]
    fn tree_graph_counts_and_hops() {
        let s = set(1, &[0.0, 1.0]);
        let tree = ward_cluster(&s).unwrap();
        let g = tree_to_graph(&tree);
        assert_eq!(g.num_nodes(), 3);
        assert_eq!(g.num_edges(), 2);
        let hops = graph_hop_matrix(&g, &[0, 1]).unwrap();
        assert_eq!(hops[0][1], 1.0); // 2 hops, self-normalized

        // 3-leaf caterpillar: closest pair 2 hops apart via the first merge.
        let s3 = set(1, &[0.0, 0.1, 5.0]);
        let t3 = ward_cluster(&s3).unwrap();
        let g3 = tree_to_graph(&t3);
        assert_eq!(g3.num_nodes(), 5);
        assert_eq!(g3.num_edges(), 4);
        let m = graph_hop_matrix(&g3, &[0, 1, 2]).unwrap();
        // Raw hops: (0,1) = 2, (0,2) = (1,2) = 3; normalized by 3.
        assert!((m[0][1] - 2.0 / 3.0).abs() <= 1e-12);
        assert!((m[0][2] - 1.0).abs() <= 1e-12);
    }

    fn graph_from(edges: &str, ids: &[u32]) -> ClassGraph {
        let targets: BTreeMap<u32, String> =
            ids.iter().map(|&i| (i, i.to_string())).collect();
        ClassGraph::from_edge_list(edges, &targets).unwrap()
    }

    #[test]
    fn path_graph_hops() {
        let g = graph_from("0\t1\n1\t2\n", &[0, 1, 2]);
        let m = graph_hop_matrix(&g, &[0, 1, 2]).unwrap();
        assert_eq!(m[0][1], 0.5);
        assert_eq!(m[1][2], 0.5);
        assert_eq!(m[0][2], 1.0);
        assert_eq!(m[1][1], 0.0);
    }

    #[test]
    fn complete_graph_is_uniform() {
        let g = graph_from("0\t1\n0\t2\n1\t2\n", &[0, 1, 2]);
        let m = graph_hop_matrix(&g, &[0, 1, 2]).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    assert_eq!(m[i][j], 1.0);
                }
            }
        }
    }

    #[test]
    fn single_pair_self_normalizes() {
        let g = graph_from("0\tx\nx\t1\n", &[0, 1]);
        let m = graph_hop_matrix(&g, &[0, 1]).unwrap();
        assert_eq!(m[0][1], 1.0);
    }

    #[test]
    fn unreachable_pair_is_named() {
        let g = graph_from("0\t1\n2\t3\n", &[0, 2]);
        match graph_hop_matrix(&g, &[0, 2]) {
            Err(Error::UnreachablePair { a, b }) => assert_eq!((a, b), (0, 2)),
            other => panic!("expected unreachable pair, got {other:?}"),
        }
    }

    #[test]
    fn hop_distance_identity_symmetry_and_hand_case() {
        let path = graph_from("0\t1\n1\t2\n", &[0, 1, 2]);
        let triangle = graph_from("0\t1\n0\t2\n1\t2\n", &[0, 1, 2]);
        let targets = [0, 1, 2];
        assert_eq!(hop_distance(&path, &path, &targets).unwrap(), 0.0);
        let d = hop_distance(&path, &triangle, &targets).unwrap();
        assert!((d - 1.0 / 3.0).abs() <= 1e-12);
        assert_eq!(d, hop_distance(&triangle, &path, &targets).unwrap());
    }

    #[test]
    fn pca_rank_one_data() {
        let s = set(2, &[0.0, 0.0, 1.0, 1.0, 2.0, 2.0]);
        let p = pca_project(&s, 2).unwrap();
        assert!(p.explained_variance[1].abs() <= 1e-9);
        assert!(p.explained_variance[0] >= p.explained_variance[1]);
    }

    #[test]
    fn pca_axis_aligned_variances() {
        // Rectangle corners: population variances exactly (4, 1), no covariance.
        let s = set(2, &[-2.0, -1.0, -2.0, 1.0, 2.0, -1.0, 2.0, 1.0]);
        let p = pca_project(&s, 2).unwrap();
        assert!((p.explained_variance[0] - 4.0).abs() <= 1e-12);
        assert!((p.explained_variance[1] - 1.0).abs() <= 1e-12);
        // Sign convention: leading entries positive.
        assert!(p.components[0] > 0.0);
        assert!(p.components[3] > 0.0);
    }

    #[test]
    fn pca_full_rank_projection_is_isometric() {
        let s = set(
            3,
            &[
                0.2, -0.4, 0.9, //
                1.5, 0.3, -0.2, //
                -0.7, 0.8, 0.1, //
                0.0, -1.2, 0.5,
            ],
        );
        let p = pca_project(&s, 3).unwrap();
        for i in 0..4 {
            for j in i + 1..4 {
                let orig: f64 = s
                    .mean(i)
                    .iter()
                    .zip(s.mean(j))
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                let proj: f64 = p
                    .coord(i)
                    .iter()
                    .zip(p.coord(j))
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                assert!((orig - proj).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn pca_components_orthonormal() {
        let s = set(
            4,
            &[
                0.2, -0.4, 0.9, 1.0, //
                1.5, 0.3, -0.2, -0.4, //
                -0.7, 0.8, 0.1, 0.3, //
                0.0, -1.2, 0.5, 0.8, //
                0.6, 0.6, -0.9, 0.2,
            ],
        );
        let p = pca_project(&s, 3).unwrap();
        for a in 0..3 {
            for b in 0..3 {
                let dot: f64 = p.components[a * 4..(a + 1) * 4]
                    .iter()
                    .zip(&p.components[b * 4..(b + 1) * 4])
                    .map(|(x, y)| x * y)
                    .sum();
                let expected = if a == b { 1.0 } else { 0.0 };
                assert!((dot - expected).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn pearson_hand_cases() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert!((pearson(&xs, &[2.0, 4.0, 6.0, 8.0]).unwrap() - 1.0).abs() <= 1e-12);
        assert!((pearson(&xs, &[-1.0, -2.0, -3.0, -4.0]).unwrap() + 1.0).abs() <= 1e-12);
        assert!((pearson(&xs, &[1.0, 3.0, 2.0, 4.0]).unwrap() - 0.8).abs() <= 1e-12);
        assert!(pearson(&xs, &[5.0, 5.0, 5.0, 5.0]).is_err());
    }

    #[test]
    fn spearman_hand_cases() {
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]).unwrap(), 1.0);
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[30.0, 20.0, 10.0]).unwrap(), -1.0);
        let r = spearman(&[1.0, 2.0, 3.0], &[1.0, 3.0, 2.0]).unwrap();
        assert!((r - 0.5).abs() <= 1e-12);
    }

    #[test]
    fn correlations_affine_invariant() {
        let xs = [0.3, -1.2, 2.5, 0.9, -0.4];
        let ys = [1.1, 0.2, -0.7, 2.0, 0.5];
        let scaled: Vec<f64> = xs.iter().map(|x| 3.5 * x + 10.0).collect();
        let p0 = pearson(&xs, &ys).unwrap();
        let p1 = pearson(&scaled, &ys).unwrap();
        assert!((p0 - p1).abs() <= 1e-12);
        let s0 = spearman(&xs, &ys).unwrap();
        let s1 = spearman(&scaled, &ys).unwrap();
        assert_eq!(s0, s1);
    }

    #[test]
    fn ranks_average_ties() {
        assert_eq!(average_ranks(&[5.0, 1.0, 5.0]).unwrap(), vec![2.5, 1.0, 2.5]);
    }
}
