//! Finitely supported probability measures on GL(d, R), their convolution
//! powers and exterior pushforwards, and the exact Wasserstein-1 distance
//! under the operator-norm ground metric.
//!
//! The distance is computed as the primal optimal-transport cost. On a
//! bounded set of matrices this equals the supremum over 1-Lipschitz test
//! functions (Kantorovich–Rubinstein), so the dual potentials returned with
//! every plan double as a certificate.

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng::AtomSampler;

/// Atoms closer than this in operator norm are merged.
pub const MERGE_TOLERANCE: f64 = 1e-10;

/// Default cap on the support size of a convolution power.
pub const DEFAULT_CONVOLUTION_BUDGET: usize = 1_000_000;

const WEIGHT_SUM_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct FiniteMeasure {
    dim: usize,
    atoms: Vec<Matrix>,
    weights: Vec<f64>,
}

impl FiniteMeasure {
    /// Validates the atoms and weights and merges coincident atoms.
    pub fn new(atoms: Vec<Matrix>, weights: Vec<f64>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InvalidMeasure("no atoms".into()));
        }
        if atoms.len() != weights.len() {
            return Err(Error::InvalidMeasure(format!(
                "{} atoms but {} weights",
                atoms.len(),
                weights.len()
            )));
        }
        let dim = atoms[0].dim();
        for (i, a) in atoms.iter().enumerate() {
            if a.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: a.dim(),
                });
            }
            a.ensure_invertible().map_err(|e| {
                Error::InvalidMeasure(format!("atom {i} is not invertible ({e})"))
            })?;
        }
        if let Some((i, w)) = weights
            .iter()
            .enumerate()
            .find(|(_, w)| !(w.is_finite() && **w > 0.0))
        {
            return Err(Error::InvalidMeasure(format!("weight {i} = {w} is not positive")));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            return Err(Error::InvalidMeasure(format!("weights sum to {total}, not 1")));
        }
        Ok(merge_atoms(dim, atoms, weights))
    }

    pub fn uniform(atoms: Vec<Matrix>) -> Result<Self> {
        let n = atoms.len();
        Self::new(atoms, vec![1.0 / n as f64; n])
    }

    pub fn dirac(atom: Matrix) -> Result<Self> {
        Self::new(vec![atom], vec![1.0])
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn atoms(&self) -> &[Matrix] {
        &self.atoms
    }

    #[inline]
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Matrix, f64)> {
        self.atoms.iter().zip(self.weights.iter().copied())
    }

    pub fn sampler(&self) -> AtomSampler {
        AtomSampler::new(&self.weights)
    }

    pub fn expectation(&self, f: impl Fn(&Matrix) -> f64) -> f64 {
        self.iter().map(|(g, w)| w * f(g)).sum()
    }

    pub fn is_diagonal(&self) -> bool {
        self.atoms.iter().all(|a| a.is_diagonal(1e-14))
    }

    pub fn convolve(&self, p: usize) -> Result<Self> {
        convolve(self, p, DEFAULT_CONVOLUTION_BUDGET)
    }

    pub fn wedge_pushforward(&self, k: usize) -> Result<Self> {
        wedge_pushforward(self, k)
    }
}

/// Deterministic positive coefficients for the sort key used when merging.
fn key_coefficients(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 + 0.5 * ((crate::rng::mix(i as u64 + 17) >> 11) as f64 / (1u64 << 53) as f64))
        .collect()
}

/// Merges atoms within `MERGE_TOLERANCE` of each other, summing weights.
/// Output keeps the order of first occurrence.
///
/// Atoms are sorted by a positive linear functional of their entries. Since
/// `|key(a) − key(b)| ≤ (Σ c) · max|a − b| ≤ (Σ c) · ‖a − b‖`, only atoms
/// inside a key window can be merge partners.
fn merge_atoms(dim: usize, atoms: Vec<Matrix>, weights: Vec<f64>) -> FiniteMeasure {
    let n = atoms.len();
    let coeffs = key_coefficients(dim * dim);
    let window = coeffs.iter().sum::<f64>() * MERGE_TOLERANCE;
    let keys: Vec<f64> = atoms
        .iter()
        .map(|a| a.entries().iter().zip(&coeffs).map(|(x, c)| x * c).sum())
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| keys[a].total_cmp(&keys[b]).then(a.cmp(&b)));

    let mut owner: Vec<usize> = (0..n).collect();
    for (pos, &i) in order.iter().enumerate() {
        if owner[i] != i {
            continue;
        }
        for &j in &order[pos + 1..] {
            if keys[j] - keys[i] > window {
                break;
            }
            if owner[j] != j {
                continue;
            }
            if close(&atoms[i], &atoms[j]) {
                owner[j] = i;
            }
        }
    }
    // representative = smallest original index in its class
    let mut rep: Vec<usize> = (0..n).collect();
    for i in 0..n {
        let o = owner[i];
        rep[o] = rep[o].min(i);
    }
    let mut slot = vec![usize::MAX; n];
    let mut out_atoms = Vec::new();
    let mut out_weights: Vec<f64> = Vec::new();
    for i in 0..n {
        let class = owner[i];
        let r = rep[class];
        if slot[class] == usize::MAX {
            slot[class] = out_atoms.len();
            out_atoms.push(atoms[r].clone());
            out_weights.push(0.0);
        }
        out_weights[slot[class]] += weights[i];
    }
    FiniteMeasure {
        dim,
        atoms: out_atoms,
        weights: out_weights,
    }
}

fn close(a: &Matrix, b: &Matrix) -> bool {
    let diff = a.sub(b).expect("same dimension");
    if diff.max_abs() > MERGE_TOLERANCE {
        return false;
    }
    if diff.frobenius() <= MERGE_TOLERANCE {
        return true;
    }
    diff.op_norm() <= MERGE_TOLERANCE
}

/// Exact law of the ordered product `g_p ⋯ g_1` of `p` independent draws.
pub fn convolve(mu: &FiniteMeasure, p: usize, budget: usize) -> Result<FiniteMeasure> {
    if p == 0 {
        return Err(Error::BadParams("convolution power must be at least 1".into()));
    }
    let support = (mu.len() as u128).checked_pow(p as u32).unwrap_or(u128::MAX);
    if support > budget as u128 {
        return Err(Error::BudgetExceeded { support, budget });
    }
    let mut current = mu.clone();
    for _ in 1..p {
        let mut atoms = Vec::with_capacity(current.len() * mu.len());
        let mut weights = Vec::with_capacity(current.len() * mu.len());
        for (h, wh) in current.iter() {
            for (g, wg) in mu.iter() {
                atoms.push(g.mul(h)?);
                weights.push(wh * wg);
            }
        }
        current = merge_atoms(mu.dim, atoms, weights);
    }
    Ok(current)
}

/// Pushforward under `g ↦ ∧^k g`.
pub fn wedge_pushforward(mu: &FiniteMeasure, k: usize) -> Result<FiniteMeasure> {
    let atoms = mu
        .atoms
        .iter()
        .map(|g| g.wedge_power(k))
        .collect::<Result<Vec<_>>>()?;
    let dim = atoms[0].dim();
    Ok(merge_atoms(dim, atoms, mu.weights.clone()))
}

/// `L_K = max N(g)^2` over the list and `C_K = 2 L_K^2`.
pub fn lipschitz_constants(support: &[Matrix]) -> Result<(f64, f64)> {
    if support.is_empty() {
        return Err(Error::BadParams("empty support".into()));
    }
    let mut lk = 1.0_f64;
    for g in support {
        let n = g.norms()?.n;
        lk = lk.max(n * n);
    }
    Ok((lk, 2.0 * lk * lk))
}

/// Union of the supports of several measures (no merging).
pub fn joint_support(measures: &[&FiniteMeasure]) -> Vec<Matrix> {
    measures
        .iter()
        .flat_map(|m| m.atoms.iter().cloned())
        .collect()
}

/// An optimal coupling with its cost and a dual certificate.
#[derive(Debug, Clone)]
pub struct TransportPlan {
    /// `coupling[i][j]`: mass moved from atom `i` of the first measure to atom
    /// `j` of the second.
    pub coupling: Vec<Vec<f64>>,
    pub cost: f64,
    /// Dual potentials `(u, v)` with `u_i + v_j ≤ c_ij`, tight on the support
    /// of the coupling.
    pub potentials: (Vec<f64>, Vec<f64>),
}

pub fn cost_matrix(mu: &FiniteMeasure, nu: &FiniteMeasure) -> Result<Vec<Vec<f64>>> {
    if mu.dim != nu.dim {
        return Err(Error::DimensionMismatch {
            expected: mu.dim,
            got: nu.dim,
        });
    }
    mu.atoms
        .iter()
        .map(|a| nu.atoms.iter().map(|b| a.distance(b)).collect())
        .collect()
}

/// Exact Wasserstein-1 distance and an optimal plan.
pub fn wasserstein(mu: &FiniteMeasure, nu: &FiniteMeasure) -> Result<(f64, TransportPlan)> {
    let cost = cost_matrix(mu, nu)?;
    let plan = min_cost_transport(&mu.weights, &nu.weights, &cost);
    Ok((plan.cost, plan))
}

pub fn wasserstein_distance(mu: &FiniteMeasure, nu: &FiniteMeasure) -> Result<f64> {
    Ok(wasserstein(mu, nu)?.0)
}

/// Successive shortest paths with Johnson potentials on the complete
/// bipartite graph. Forward arcs have unbounded capacity; backward arcs carry
/// the current flow. Each augmentation exhausts a supply, a demand or a
/// backward arc.
pub fn min_cost_transport(supply: &[f64], demand: &[f64], cost: &[Vec<f64>]) -> TransportPlan {
    let m = supply.len();
    let n = demand.len();
    let total = supply.iter().sum::<f64>().max(demand.iter().sum::<f64>());
    let eps = 1e-15 * total.max(1.0);

    let mut left = supply.to_vec();
    let mut right = demand.to_vec();
    let mut flow = vec![vec![0.0; n]; m];
    // potentials: p[0..m] for sources, p[m..m+n] for sinks
    let mut pot = vec![0.0; m + n];

    let mut dist = vec![f64::INFINITY; m + n];
    let mut parent = vec![usize::MAX; m + n];
    let mut done = vec![false; m + n];

    loop {
        if !left.iter().any(|&x| x > eps) || !right.iter().any(|&x| x > eps) {
            break;
        }
        dist.fill(f64::INFINITY);
        parent.fill(usize::MAX);
        done.fill(false);
        for i in 0..m {
            if left[i] > eps {
                dist[i] = 0.0;
            }
        }
        // dense Dijkstra on reduced costs
        loop {
            let mut u = usize::MAX;
            let mut best = f64::INFINITY;
            for (v, (&d, &fin)) in dist.iter().zip(&done).enumerate() {
                if !fin && d < best {
                    best = d;
                    u = v;
                }
            }
            if u == usize::MAX {
                break;
            }
            done[u] = true;
            if u >= m && right[u - m] > eps {
                // nearest deficit sink; unsettled labels are all >= best
                break;
            }
            if u < m {
                for j in 0..n {
                    let v = m + j;
                    if done[v] {
                        continue;
                    }
                    let rc = (cost[u][j] + pot[u] - pot[v]).max(0.0);
                    if best + rc < dist[v] {
                        dist[v] = best + rc;
                        parent[v] = u;
                    }
                }
            } else {
                let j = u - m;
                for i in 0..m {
                    if done[i] || flow[i][j] <= eps {
                        continue;
                    }
                    let rc = (pot[u] - pot[i] - cost[i][j]).max(0.0);
                    if best + rc < dist[i] {
                        dist[i] = best + rc;
                        parent[i] = u;
                    }
                }
            }
        }
        let target = (0..n)
            .filter(|&j| right[j] > eps && done[m + j])
            .min_by(|&a, &b| dist[m + a].total_cmp(&dist[m + b]));
        let Some(tj) = target else { break };
        let t = m + tj;
        let cap = dist[t];
        for v in 0..m + n {
            pot[v] += dist[v].min(cap);
        }
        // bottleneck along the path
        let mut delta = right[tj];
        let mut v = t;
        while parent[v] != usize::MAX {
            let u = parent[v];
            if u >= m {
                // backward arc sink(u) -> source(v)
                delta = delta.min(flow[v][u - m]);
            }
            v = u;
        }
        delta = delta.min(left[v]);
        let mut v = t;
        while parent[v] != usize::MAX {
            let u = parent[v];
            if u < m {
                flow[u][v - m] += delta;
            } else {
                flow[v][u - m] -= delta;
                if flow[v][u - m] < eps {
                    flow[v][u - m] = 0.0;
                }
            }
            v = u;
        }
        left[v] -= delta;
        right[tj] -= delta;
    }

    let cost_value: f64 = flow
        .iter()
        .zip(cost)
        .map(|(f, c)| f.iter().zip(c).map(|(a, b)| a * b).sum::<f64>())
        .sum();
    // reduced costs c_ij + p_i − p_j are nonnegative and vanish on used arcs
    let u: Vec<f64> = pot[..m].iter().map(|p| -p).collect();
    let v: Vec<f64> = pot[m..].to_vec();
    TransportPlan {
        coupling: flow,
        cost: cost_value,
        potentials: (u, v),
    }
}
