//! Shared test oracles: exact transportation-LP solver by basis enumeration,
//! random discrete-law generators, and finite differences.

#![allow(dead_code)]

use driftbench::drift::DiscreteDistribution;
use rand::Rng;

/// Exact 1-Wasserstein distance by exhausting the basic feasible solutions
/// of the transportation polytope: every vertex is the unique flow on a
/// spanning tree of the complete bipartite supply/demand graph, so the
/// optimum is the cheapest nonnegative tree flow. Intended for tiny
/// instances (at most 4 atoms per side).
pub fn w1_exhaustive(p: &DiscreteDistribution, q: &DiscreteDistribution) -> f64 {
    let rows = p.len();
    let cols = q.len();
    let mut cost = vec![vec![0.0; cols]; rows];
    for (i, row) in cost.iter_mut().enumerate() {
        for (j, c) in row.iter_mut().enumerate() {
            *c = p.atoms()[i]
                .iter()
                .zip(&q.atoms()[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
        }
    }
    let edges: Vec<(usize, usize)> = (0..rows)
        .flat_map(|i| (0..cols).map(move |j| (i, j)))
        .collect();
    let tree_size = rows + cols - 1;
    let mut best = f64::INFINITY;
    let mut chosen = vec![0usize; tree_size];
    enumerate_subsets(&edges, tree_size, 0, 0, &mut chosen, &mut |subset| {
        if let Some(value) = tree_flow_cost(subset, rows, cols, p.weights(), q.weights(), &cost) {
            if value < best {
                best = value;
            }
        }
    });
    assert!(best.is_finite(), "no feasible tree flow found");
    best
}

fn enumerate_subsets(
    edges: &[(usize, usize)],
    want: usize,
    start: usize,
    depth: usize,
    chosen: &mut [usize],
    visit: &mut impl FnMut(&[(usize, usize)]),
) {
    if depth == want {
        let subset: Vec<(usize, usize)> = chosen.iter().map(|&k| edges[k]).collect();
        visit(&subset);
        return;
    }
    let remaining = want - depth;
    for k in start..=edges.len().saturating_sub(remaining) {
        chosen[depth] = k;
        enumerate_subsets(edges, want, k + 1, depth + 1, chosen, visit);
    }
}

/// Unique flow on a candidate spanning tree via leaf elimination; returns
/// its cost when the subset is a tree and every flow is nonnegative up to
/// rounding slack.
fn tree_flow_cost(
    subset: &[(usize, usize)],
    rows: usize,
    cols: usize,
    supply: &[f64],
    demand: &[f64],
    cost: &[Vec<f64>],
) -> Option<f64> {
    let vertices = rows + cols;
    let mut degree = vec![0usize; vertices];
    for &(i, j) in subset {
        degree[i] += 1;
        degree[rows + j] += 1;
    }
    // An acyclic subset of v-1 edges is a spanning tree; cycles make the
    // leaf elimination below stall, and an isolated vertex fails right away.
    if degree.iter().any(|&d| d == 0) {
        return None;
    }
    // Remaining supply (positive) or unmet demand (negative) per vertex.
    let mut balance: Vec<f64> = supply
        .iter()
        .copied()
        .chain(demand.iter().map(|w| -w))
        .collect();
    let mut used = vec![false; subset.len()];
    let mut flows = vec![0.0; subset.len()];
    for _ in 0..subset.len() {
        let mut leaf_edge = None;
        for (e, &(i, j)) in subset.iter().enumerate() {
            if used[e] {
                continue;
            }
            if degree[i] == 1 {
                leaf_edge = Some((e, true));
                break;
            }
            if degree[rows + j] == 1 {
                leaf_edge = Some((e, false));
                break;
            }
        }
        let (e, leaf_is_supply) = leaf_edge?;
        let (i, j) = subset[e];
        // The leaf's remaining balance forces the flow on its only edge.
        let flow = if leaf_is_supply {
            let f = balance[i];
            balance[i] = 0.0;
            balance[rows + j] += f;
            f
        } else {
            let f = -balance[rows + j];
            balance[rows + j] = 0.0;
            balance[i] -= f;
            f
        };
        flows[e] = flow;
        used[e] = true;
        degree[i] -= 1;
        degree[rows + j] -= 1;
    }
    let mut total = 0.0;
    for (e, &(i, j)) in subset.iter().enumerate() {
        if flows[e] < -1e-9 {
            return None;
        }
        total += flows[e].max(0.0) * cost[i][j];
    }
    Some(total)
}

/// Random discrete law with `atom_count` atoms in `dimension` coordinates.
pub fn random_law(
    rng: &mut impl Rng,
    atom_count: usize,
    dimension: usize,
    span: f64,
) -> DiscreteDistribution {
    let atoms: Vec<Vec<f64>> = (0..atom_count)
        .map(|_| (0..dimension).map(|_| rng.gen_range(-span..span)).collect())
        .collect();
    let raw: Vec<f64> = (0..atom_count).map(|_| rng.gen_range(0.2..1.0)).collect();
    let total: f64 = raw.iter().sum();
    DiscreteDistribution::new(atoms, raw.iter().map(|w| w / total).collect()).unwrap()
}

/// Central finite-difference gradient of `f` at `x`.
pub fn central_difference(f: impl Fn(&[f64]) -> f64, x: &[f64], step: f64) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let mut hi = x.to_vec();
            let mut lo = x.to_vec();
            hi[i] += step;
            lo[i] -= step;
            (f(&hi) - f(&lo)) / (2.0 * step)
        })
        .collect()
}
