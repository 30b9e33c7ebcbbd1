//! Exact distribution distances on small discrete measures.
//!
//! The type-1 Wasserstein distance is computed by an exact min-cost-flow
//! solver (successive shortest paths with node potentials) on the dense
//! bipartite cost matrix, so results carry no approximation beyond float
//! arithmetic. Supports are capped to keep the solver in its exact, fast
//! regime; the cap is generous for diagnostic use.

use crate::drift::DiscreteDistribution;
use crate::error::{Error, Result};

/// Largest support size the exact solver accepts per side.
pub const DEFAULT_SUPPORT_CAP: usize = 64;

/// Tolerance on the marginal feasibility of a returned plan.
pub const MARGINAL_TOLERANCE: f64 = 1e-9;

/// An optimal coupling between two discrete measures.
#[derive(Debug, Clone)]
pub struct TransportPlan {
    masses: Vec<f64>,
    rows: usize,
    cols: usize,
    cost: f64,
}

impl TransportPlan {
    /// Mass shipped from P-atom `i` to Q-atom `j`.
    pub fn mass(&self, i: usize, j: usize) -> f64 {
        self.masses[i * self.cols + j]
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Total transport cost of the plan.
    pub fn cost(&self) -> f64 {
        self.cost
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.rows)
            .map(|i| (0..self.cols).map(|j| self.mass(i, j)).sum())
            .collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        (0..self.cols)
            .map(|j| (0..self.rows).map(|i| self.mass(i, j)).sum())
            .collect()
    }

    /// Checks the plan against the marginals it is supposed to couple.
    pub fn is_feasible(&self, p: &DiscreteDistribution, q: &DiscreteDistribution, tol: f64) -> bool {
        if self.rows != p.len() || self.cols != q.len() {
            return false;
        }
        if self.masses.iter().any(|&m| m < -tol) {
            return false;
        }
        let rows_ok = self
            .row_sums()
            .iter()
            .zip(p.weights())
            .all(|(s, w)| (s - w).abs() <= tol);
        let cols_ok = self
            .col_sums()
            .iter()
            .zip(q.weights())
            .all(|(s, w)| (s - w).abs() <= tol);
        rows_ok && cols_ok
    }
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Exact type-1 Wasserstein distance between two discrete measures, with the
/// optimal plan that attains it.
pub fn w1_discrete(
    p: &DiscreteDistribution,
    q: &DiscreteDistribution,
) -> Result<(f64, TransportPlan)> {
    w1_discrete_capped(p, q, DEFAULT_SUPPORT_CAP)
}

/// Same as [`w1_discrete`] with an explicit support cap.
pub fn w1_discrete_capped(
    p: &DiscreteDistribution,
    q: &DiscreteDistribution,
    cap: usize,
) -> Result<(f64, TransportPlan)> {
    if p.dimension() != q.dimension() {
        return Err(Error::dim(format!(
            "atom dimensions differ: {} vs {}",
            p.dimension(),
            q.dimension()
        )));
    }
    for (name, size) in [("P", p.len()), ("Q", q.len())] {
        if size > cap {
            let _ = name;
            return Err(Error::SupportTooLarge { got: size, cap });
        }
    }
    let m = p.len();
    let n = q.len();
    let mut cost = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            cost[i * n + j] = euclidean(&p.atoms()[i], &q.atoms()[j]);
        }
    }
    let flow = min_cost_transport(p.weights(), q.weights(), &cost)?;
    let total: f64 = flow
        .iter()
        .zip(&cost)
        .map(|(f, c)| f * c)
        .sum();
    let plan = TransportPlan {
        masses: flow,
        rows: m,
        cols: n,
        cost: total,
    };
    Ok((total, plan))
}

/// Type-1 Wasserstein distance between equal-weight 1-D empirical measures:
/// the mean absolute gap between sorted samples.
pub fn w1_1d(samples_p: &[f64], samples_q: &[f64]) -> Result<f64> {
    if samples_p.len() != samples_q.len() {
        return Err(Error::arg(format!(
            "sample sets have lengths {} and {}",
            samples_p.len(),
            samples_q.len()
        )));
    }
    if samples_p.is_empty() {
        return Err(Error::arg("sample sets must be nonempty"));
    }
    let mut a = samples_p.to_vec();
    let mut b = samples_q.to_vec();
    a.sort_by(|x, y| x.partial_cmp(y).expect("finite samples"));
    b.sort_by(|x, y| x.partial_cmp(y).expect("finite samples"));
    let m = a.len() as f64;
    Ok(a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>() / m)
}

/// Discrete total variation distance: half the L1 gap between weights after
/// aligning the two atom lists by exact coordinates.
pub fn total_variation_discrete(
    p: &DiscreteDistribution,
    q: &DiscreteDistribution,
) -> Result<f64> {
    if p.dimension() != q.dimension() {
        return Err(Error::dim(format!(
            "atom dimensions differ: {} vs {}",
            p.dimension(),
            q.dimension()
        )));
    }
    let mut table: Vec<(Vec<u64>, f64, f64)> = Vec::new();
    let key = |atom: &[f64]| -> Vec<u64> { atom.iter().map(|v| v.to_bits()).collect() };
    for (atom, &w) in p.atoms().iter().zip(p.weights()) {
        let k = key(atom);
        match table.iter_mut().find(|(existing, _, _)| *existing == k) {
            Some(entry) => entry.1 += w,
            Option::None => table.push((k, w, 0.0)),
        }
    }
    for (atom, &w) in q.atoms().iter().zip(q.weights()) {
        let k = key(atom);
        match table.iter_mut().find(|(existing, _, _)| *existing == k) {
            Some(entry) => entry.2 += w,
            Option::None => table.push((k, 0.0, w)),
        }
    }
    Ok(0.5 * table.iter().map(|(_, pw, qw)| (pw - qw).abs()).sum::<f64>())
}

/// Mass below which a remaining supply or demand counts as exhausted.
const MASS_CUTOFF: f64 = 1e-13;

/// Successive-shortest-paths min-cost flow on a dense bipartite graph.
///
/// Exact at termination: every augmentation follows a shortest path under
/// potentials that keep all residual reduced costs nonnegative, so the final
/// flow is cost-optimal for the shipped mass.
fn min_cost_transport(supply: &[f64], demand: &[f64], cost: &[f64]) -> Result<Vec<f64>> {
    let m = supply.len();
    let n = demand.len();
    let mut flow = vec![0.0; m * n];
    let mut rem_supply = supply.to_vec();
    let mut rem_demand = demand.to_vec();
    let mut pi_src = vec![0.0; m];
    let mut pi_snk = vec![0.0; n];

    // Node indexing: 0..m sources, m..m+n sinks.
    let v = m + n;
    let max_augmentations = 16 * v * v + 64;
    let mut augmentations = 0usize;

    loop {
        if !(0..m).any(|i| rem_supply[i] > MASS_CUTOFF) {
            break;
        }
        if !(0..n).any(|j| rem_demand[j] > MASS_CUTOFF) {
            break;
        }
        augmentations += 1;
        if augmentations > max_augmentations {
            return Err(Error::Internal(
                "transport solver exceeded its augmentation budget".into(),
            ));
        }

        // Dijkstra over the residual graph, O(V^2) scan form, seeded at every
        // source with remaining supply (a super-source in disguise): reduced
        // costs must stay nonnegative on arcs out of all sources, not just
        // the one an augmentation happens to drain.
        let mut dist = vec![f64::INFINITY; v];
        let mut parent = vec![usize::MAX; v];
        let mut done = vec![false; v];
        for i in 0..m {
            if rem_supply[i] > MASS_CUTOFF {
                dist[i] = 0.0;
            }
        }
        loop {
            let mut u = usize::MAX;
            let mut best = f64::INFINITY;
            for node in 0..v {
                if !done[node] && dist[node] < best {
                    best = dist[node];
                    u = node;
                }
            }
            if u == usize::MAX {
                break;
            }
            done[u] = true;
            if u < m {
                // Forward arcs source u -> every sink.
                for j in 0..n {
                    let rc = (cost[u * n + j] + pi_src[u] - pi_snk[j]).max(0.0);
                    let node = m + j;
                    if dist[u] + rc < dist[node] {
                        dist[node] = dist[u] + rc;
                        parent[node] = u;
                    }
                }
            } else {
                // Backward arcs sink -> sources currently carrying flow.
                let j = u - m;
                for i in 0..m {
                    if flow[i * n + j] > 0.0 {
                        let rc = (-cost[i * n + j] + pi_snk[j] - pi_src[i]).max(0.0);
                        if dist[u] + rc < dist[i] {
                            dist[i] = dist[u] + rc;
                            parent[i] = u;
                        }
                    }
                }
            }
        }

        // Nearest sink with remaining demand.
        let mut target = usize::MAX;
        let mut best = f64::INFINITY;
        for j in 0..n {
            if rem_demand[j] > MASS_CUTOFF && dist[m + j] < best {
                best = dist[m + j];
                target = m + j;
            }
        }
        if target == usize::MAX {
            return Err(Error::Internal(
                "transport solver found no augmenting path".into(),
            ));
        }
        let d_target = dist[target];

        // The path's origin is the root of the parent chain.
        let mut origin = target;
        while parent[origin] != usize::MAX {
            origin = parent[origin];
        }

        // Bottleneck along the path: endpoint remainders and backward arcs.
        let mut delta = rem_supply[origin].min(rem_demand[target - m]);
        {
            let mut node = target;
            while parent[node] != usize::MAX {
                let prev = parent[node];
                if node < m {
                    // Backward arc (prev is a sink, node a source).
                    let j = prev - m;
                    delta = delta.min(flow[node * n + j]);
                }
                node = prev;
            }
        }
        if delta <= 0.0 {
            return Err(Error::Internal(
                "transport solver derived an empty augmentation".into(),
            ));
        }

        // Apply the augmentation.
        let mut node = target;
        while parent[node] != usize::MAX {
            let prev = parent[node];
            if node >= m {
                flow[prev * n + (node - m)] += delta;
            } else {
                flow[node * n + (prev - m)] -= delta;
            }
            node = prev;
        }
        rem_supply[origin] -= delta;
        rem_demand[target - m] -= delta;

        // Johnson-style potential update keeps reduced costs nonnegative.
        // min(d, D) also covers unreached nodes, since min(inf, D) = D.
        for i in 0..m {
            pi_src[i] += dist[i].min(d_target);
        }
        for j in 0..n {
            pi_snk[j] += dist[m + j].min(d_target);
        }
    }
    Ok(flow)
}
