//! Block-conformal structure of a measure with respect to a supplied
//! decomposition `R^d = ⊕ W^j`: generator factorization `g = q a`, the
//! induced walk on a finite permutation group, aperiodicity, mixing and the
//! norm-centering Poisson equation.

use std::collections::{HashMap, VecDeque};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{solve_linear, Matrix};
use crate::measure::FiniteMeasure;

/// Off-block mass, orthogonality and scalarity tolerance.
pub const BLOCK_TOLERANCE: f64 = 1e-8;

/// Hard cap on the size of the permutation group.
pub const MAX_GROUP_SIZE: usize = 40_320;

/// Coordinate blocks `W^j` and a partition of the block indices into orbits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockDecomposition {
    dim: usize,
    blocks: Vec<Vec<usize>>,
    orbits: Vec<Vec<usize>>,
}

impl BlockDecomposition {
    pub fn new(dim: usize, blocks: Vec<Vec<usize>>, orbits: Vec<Vec<usize>>) -> Result<Self> {
        let mut seen = vec![false; dim];
        for b in &blocks {
            if b.is_empty() {
                return Err(Error::InvalidDecomposition("empty block".into()));
            }
            for &i in b {
                if i >= dim || seen[i] {
                    return Err(Error::InvalidDecomposition(format!(
                        "coordinate {i} is out of range or repeated"
                    )));
                }
                seen[i] = true;
            }
        }
        if seen.iter().any(|s| !s) || dim == 0 {
            return Err(Error::InvalidDecomposition("blocks do not cover every coordinate".into()));
        }
        let mut seen = vec![false; blocks.len()];
        for o in &orbits {
            if o.is_empty() {
                return Err(Error::InvalidDecomposition("empty orbit".into()));
            }
            for &j in o {
                if j >= blocks.len() || seen[j] {
                    return Err(Error::InvalidDecomposition(format!(
                        "block {j} is out of range or in two orbits"
                    )));
                }
                seen[j] = true;
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::InvalidDecomposition("orbits do not cover every block".into()));
        }
        Ok(Self { dim, blocks, orbits })
    }

    /// One block per coordinate, one orbit per block.
    pub fn coordinate(dim: usize) -> Self {
        Self {
            dim,
            blocks: (0..dim).map(|i| vec![i]).collect(),
            orbits: (0..dim).map(|i| vec![i]).collect(),
        }
    }

    /// Same blocks with a different orbit partition.
    pub fn with_orbits(&self, orbits: Vec<Vec<usize>>) -> Result<Self> {
        Self::new(self.dim, self.blocks.clone(), orbits)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn orbits(&self) -> &[Vec<usize>] {
        &self.orbits
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// Block index of every coordinate.
    pub fn block_of(&self) -> Vec<usize> {
        let mut out = vec![0; self.dim];
        for (j, b) in self.blocks.iter().enumerate() {
            for &i in b {
                out[i] = j;
            }
        }
        out
    }

    pub fn orbit_of(&self) -> Vec<usize> {
        let mut out = vec![0; self.blocks.len()];
        for (o, members) in self.orbits.iter().enumerate() {
            for &j in members {
                out[j] = o;
            }
        }
        out
    }
}

/// A permutation of the block indices, `p[j]` the image of `j`.
pub type Perm = Vec<usize>;

pub fn identity_perm(n: usize) -> Perm {
    (0..n).collect()
}

/// `a ∘ b`.
pub fn compose(a: &[usize], b: &[usize]) -> Perm {
    b.iter().map(|&j| a[j]).collect()
}

pub fn inverse(a: &[usize]) -> Perm {
    let mut out = vec![0; a.len()];
    for (j, &k) in a.iter().enumerate() {
        out[k] = j;
    }
    out
}

/// `g = q a` with `g W^j = W^{π(j)}`; the restriction of `g` to `W^j` is
/// `a^j q^j` where `q^j` is orthogonal.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorFactorization {
    pub permutation: Perm,
    pub scalars: Vec<f64>,
    /// `q^j` as a square matrix from the coordinates of `W^j` (columns) to
    /// those of `W^{π(j)}` (rows).
    pub orthogonal_parts: Vec<Matrix>,
}

impl GeneratorFactorization {
    pub fn reassemble(&self, blocks: &BlockDecomposition) -> Matrix {
        let mut g = Matrix::new(blocks.dim, vec![0.0; blocks.dim * blocks.dim])
            .expect("dim >= 1");
        for (j, src) in blocks.blocks.iter().enumerate() {
            let dst = &blocks.blocks[self.permutation[j]];
            let q = &self.orthogonal_parts[j];
            for (r, &row) in dst.iter().enumerate() {
                for (c, &col) in src.iter().enumerate() {
                    g.set(row, col, self.scalars[j] * q.get(r, c));
                }
            }
        }
        g
    }
}

pub fn factor_generator(g: &Matrix, blocks: &BlockDecomposition) -> Result<GeneratorFactorization> {
    if g.dim() != blocks.dim {
        return Err(Error::DimensionMismatch {
            expected: blocks.dim,
            got: g.dim(),
        });
    }
    let block_of = blocks.block_of();
    let scale = g.frobenius();
    let nb = blocks.len();
    let mut permutation = vec![usize::MAX; nb];
    let mut scalars = Vec::with_capacity(nb);
    let mut parts = Vec::with_capacity(nb);
    let mut hit = vec![false; nb];
    for (j, src) in blocks.blocks.iter().enumerate() {
        let mut mass = vec![0.0; nb];
        for &c in src {
            for r in 0..blocks.dim {
                mass[block_of[r]] += g.get(r, c) * g.get(r, c);
            }
        }
        let target = (0..nb)
            .max_by(|&a, &b| mass[a].total_cmp(&mass[b]))
            .expect("at least one block");
        let off: f64 = mass
            .iter()
            .enumerate()
            .filter(|(k, _)| *k != target)
            .map(|(_, m)| m)
            .sum::<f64>()
            .sqrt();
        if off > BLOCK_TOLERANCE * scale {
            return Err(Error::NotBlockConformal(format!(
                "block {j} is spread over several blocks (off-block mass {off:e})"
            )));
        }
        let dst = &blocks.blocks[target];
        if dst.len() != src.len() || hit[target] {
            return Err(Error::NotBlockConformal(format!(
                "block {j} is not mapped bijectively onto block {target}"
            )));
        }
        hit[target] = true;
        let k = src.len();
        let mut data = Vec::with_capacity(k * k);
        for &r in dst {
            for &c in src {
                data.push(g.get(r, c));
            }
        }
        let restricted = Matrix::new(k, data)?;
        let sv = restricted.singular_values_unchecked();
        let a = sv[0];
        if !(a > 0.0) || sv[k - 1] / a < 1.0 - BLOCK_TOLERANCE {
            return Err(Error::NotBlockConformal(format!(
                "restriction to block {j} is not scalar times orthogonal"
            )));
        }
        let q = restricted.scale(1.0 / a);
        let defect = q.transpose().mul(&q)?.sub(&Matrix::identity(k))?.op_norm();
        if defect > BLOCK_TOLERANCE {
            return Err(Error::NotBlockConformal(format!(
                "orthogonal part of block {j} has defect {defect:e}"
            )));
        }
        permutation[j] = target;
        scalars.push(a);
        parts.push(q);
    }
    Ok(GeneratorFactorization {
        permutation,
        scalars,
        orthogonal_parts: parts,
    })
}

/// A measure together with the factorization of each of its atoms.
#[derive(Debug, Clone)]
pub struct FactoredMeasure {
    pub measure: FiniteMeasure,
    pub blocks: BlockDecomposition,
    pub factors: Vec<GeneratorFactorization>,
}

impl FactoredMeasure {
    pub fn new(mu: &FiniteMeasure, blocks: &BlockDecomposition) -> Result<Self> {
        let factors = mu
            .atoms()
            .iter()
            .enumerate()
            .map(|(i, g)| {
                factor_generator(g, blocks).map_err(|e| match e {
                    Error::NotBlockConformal(msg) => Error::NotBlockConformal(format!("atom {i}: {msg}")),
                    other => other,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            measure: mu.clone(),
            blocks: blocks.clone(),
            factors,
        })
    }

    pub fn weights(&self) -> &[f64] {
        self.measure.weights()
    }

    pub fn walk(&self) -> Result<PermutationWalk> {
        PermutationWalk::from_distribution(
            self.factors
                .iter()
                .zip(self.weights())
                .map(|(f, &w)| (f.permutation.clone(), w))
                .collect(),
        )
    }

    /// Atoms conjugated by `T = ⊕ t^j Id_{W^j}`, i.e. `T⁻¹ g T`, which rescales
    /// `a^j` to `a^j t^j / t^{π(j)}`.
    pub fn rescaled(&self, t: &[f64]) -> Result<FiniteMeasure> {
        let block_of = self.blocks.block_of();
        let atoms = self
            .measure
            .atoms()
            .iter()
            .map(|g| {
                let mut h = g.clone();
                for r in 0..g.dim() {
                    for c in 0..g.dim() {
                        h.set(r, c, g.get(r, c) * t[block_of[c]] / t[block_of[r]]);
                    }
                }
                h
            })
            .collect();
        FiniteMeasure::new(atoms, self.weights().to_vec())
    }
}

/// Random walk on the finite group `F` generated by the atom permutations.
#[derive(Debug, Clone)]
pub struct PermutationWalk {
    pub group_elements: Vec<Perm>,
    /// `transition[s][s']` = mass of `{π : π ∘ s = s'}`.
    pub transition: Vec<Vec<f64>>,
    pub generator_distribution: Vec<(Perm, f64)>,
    index: HashMap<Perm, usize>,
}

impl PermutationWalk {
    /// Builds the walk from weighted permutations of a common degree;
    /// repeated permutations are merged.
    pub fn from_distribution(dist: Vec<(Perm, f64)>) -> Result<Self> {
        let n = dist
            .first()
            .ok_or_else(|| Error::InvalidMeasure("empty permutation distribution".into()))?
            .0
            .len();
        let mut merged: Vec<(Perm, f64)> = Vec::new();
        for (p, w) in dist {
            let mut sorted = p.clone();
            sorted.sort_unstable();
            if p.len() != n || sorted != identity_perm(n) {
                return Err(Error::InvalidMeasure(format!("{p:?} is not a permutation of 0..{n}")));
            }
            match merged.iter_mut().find(|(q, _)| *q == p) {
                Some(entry) => entry.1 += w,
                None => merged.push((p, w)),
            }
        }
        let gens: Vec<Perm> = merged.iter().map(|(p, _)| p.clone()).collect();
        let group_elements = closure(&gens, n)?;
        let index: HashMap<Perm, usize> = group_elements
            .iter()
            .enumerate()
            .map(|(i, p)| (p.clone(), i))
            .collect();
        let m = group_elements.len();
        let mut transition = vec![vec![0.0; m]; m];
        for (s, x) in group_elements.iter().enumerate() {
            for (p, w) in &merged {
                transition[s][index[&compose(p, x)]] += w;
            }
        }
        Ok(Self {
            group_elements,
            transition,
            generator_distribution: merged,
            index,
        })
    }

    pub fn len(&self) -> usize {
        self.group_elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.group_elements.is_empty()
    }

    pub fn index_of(&self, p: &[usize]) -> Option<usize> {
        self.index.get(p).copied()
    }

    pub fn identity_index(&self) -> usize {
        self.index[&identity_perm(self.group_elements[0].len())]
    }

    /// Law of `π_p ∘ ⋯ ∘ π_1` as a vector over the group elements.
    pub fn convolution_power(&self, p: usize) -> Vec<f64> {
        let mut dist = vec![0.0; self.len()];
        dist[self.identity_index()] = 1.0;
        for _ in 0..p {
            dist = self.step(&dist);
        }
        dist
    }

    /// One step of the chain: `dist · P`.
    pub fn step(&self, dist: &[f64]) -> Vec<f64> {
        let m = self.len();
        let mut out = vec![0.0; m];
        for (s, &mass) in dist.iter().enumerate() {
            if mass == 0.0 {
                continue;
            }
            for (t, p) in self.transition[s].iter().enumerate() {
                out[t] += mass * p;
            }
        }
        out
    }

    /// Walk of the `p`-step distribution.
    pub fn power(&self, p: usize) -> Result<PermutationWalk> {
        let dist = self.convolution_power(p);
        Self::from_distribution(
            self.group_elements
                .iter()
                .zip(dist)
                .filter(|(_, w)| *w > 0.0)
                .map(|(g, w)| (g.clone(), w))
                .collect(),
        )
    }

    pub fn is_doubly_stochastic(&self, tol: f64) -> bool {
        let m = self.len();
        (0..m).all(|i| {
            (self.transition[i].iter().sum::<f64>() - 1.0).abs() <= tol
                && ((0..m).map(|k| self.transition[k][i]).sum::<f64>() - 1.0).abs() <= tol
        })
    }
}

pub fn permutation_walk(mu: &FiniteMeasure, blocks: &BlockDecomposition) -> Result<PermutationWalk> {
    FactoredMeasure::new(mu, blocks)?.walk()
}

/// Smallest set containing `gens` and closed under composition, sorted.
fn closure(gens: &[Perm], degree: usize) -> Result<Vec<Perm>> {
    let cap = (1..=degree).try_fold(1usize, |acc, k| acc.checked_mul(k)).unwrap_or(usize::MAX);
    let cap = cap.min(MAX_GROUP_SIZE);
    let mut seen: std::collections::HashSet<Perm> = gens.iter().cloned().collect();
    let mut queue: VecDeque<Perm> = gens.iter().cloned().collect();
    while let Some(x) = queue.pop_front() {
        for s in gens {
            let y = compose(s, &x);
            if seen.insert(y.clone()) {
                if seen.len() > cap {
                    return Err(Error::BadParams(format!("permutation group exceeds {cap} elements")));
                }
                queue.push_back(y);
            }
        }
    }
    let mut out: Vec<Perm> = seen.into_iter().collect();
    out.sort();
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Aperiodicity {
    /// Normal subgroup generated by `{x⁻¹ y : x, y ∈ supp}`, sorted.
    pub subgroup: Vec<Perm>,
    pub p: usize,
    /// The `p`-step law gives no mass outside the subgroup.
    pub power_supported_in_subgroup: bool,
    /// The support of the `p`-step law generates the subgroup.
    pub power_generates_subgroup: bool,
}

pub fn aperiodicity(walk: &PermutationWalk) -> Result<Aperiodicity> {
    let degree = walk.group_elements[0].len();
    let support: Vec<&Perm> = walk.generator_distribution.iter().map(|(p, _)| p).collect();
    let mut gens: Vec<Perm> = vec![identity_perm(degree)];
    for x in &support {
        let xi = inverse(x);
        for y in &support {
            gens.push(compose(&xi, y));
        }
    }
    gens.sort();
    gens.dedup();
    let mut subgroup = closure(&gens, degree)?;
    loop {
        let mut extended = subgroup.clone();
        for f in &walk.group_elements {
            let fi = inverse(f);
            for h in &subgroup {
                extended.push(compose(&compose(f, h), &fi));
            }
        }
        extended.sort();
        extended.dedup();
        if extended.len() == subgroup.len() {
            break;
        }
        subgroup = closure(&extended, degree)?;
    }
    let p = walk.len() / subgroup.len();

    let dist = walk.convolution_power(p);
    let in_subgroup = |g: &Perm| subgroup.binary_search(g).is_ok();
    let power_supported_in_subgroup = walk
        .group_elements
        .iter()
        .zip(&dist)
        .all(|(g, &w)| w == 0.0 || in_subgroup(g));
    let power_support: Vec<Perm> = walk
        .group_elements
        .iter()
        .zip(&dist)
        .filter(|(_, w)| **w > 0.0)
        .map(|(g, _)| g.clone())
        .collect();
    let power_generates_subgroup = closure(&power_support, degree)? == subgroup;
    Ok(Aperiodicity {
        subgroup,
        p,
        power_supported_in_subgroup,
        power_generates_subgroup,
    })
}

pub const DEFAULT_TV_HORIZON: usize = 64;

#[derive(Debug, Clone)]
pub struct MixingReport {
    /// Largest eigenvalue modulus of `P − J/|F|`.
    pub rho: f64,
    /// Exact total-variation distance to uniform after `n` steps from the
    /// identity, `n = 1..=N`.
    pub tv_curve: Vec<(usize, f64)>,
    /// `tv(N)/tv(N−1)`, or 0 once the curve reaches 0.
    pub measured_rate: f64,
    /// `max_n tv(n)/ρ^n`, 0 when `ρ = 0` and the curve vanishes.
    pub constant: f64,
}

pub fn mixing_rate(walk: &PermutationWalk) -> MixingReport {
    mixing_rate_with_horizon(walk, DEFAULT_TV_HORIZON)
}

pub fn mixing_rate_with_horizon(walk: &PermutationWalk, horizon: usize) -> MixingReport {
    let m = walk.len();
    let u = 1.0 / m as f64;
    let deflated = DMatrix::from_fn(m, m, |i, k| walk.transition[i][k] - u);
    let rho = deflated
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max);

    // The deviation from uniform evolves by the same transition matrix.
    // Rounding leaks a little mass into the uniform direction, which never
    // decays, so it is projected out after every step.
    let mut dev = vec![-u; m];
    dev[walk.identity_index()] += 1.0;
    let mut tv_curve = Vec::with_capacity(horizon);
    for n in 1..=horizon.max(2) {
        dev = walk.step(&dev);
        let drift = dev.iter().sum::<f64>() / m as f64;
        for x in dev.iter_mut() {
            *x -= drift;
        }
        tv_curve.push((n, 0.5 * dev.iter().map(|x| x.abs()).sum::<f64>()));
    }
    let last = tv_curve[tv_curve.len() - 1].1;
    let prev = tv_curve[tv_curve.len() - 2].1;
    let measured_rate = if last == 0.0 || prev == 0.0 { 0.0 } else { last / prev };
    let constant = if rho > 0.0 {
        tv_curve
            .iter()
            .map(|&(n, tv)| tv / rho.powi(n as i32))
            .fold(0.0, f64::max)
    } else if tv_curve.iter().all(|&(_, tv)| tv == 0.0) {
        0.0
    } else {
        f64::INFINITY
    };
    MixingReport {
        rho,
        tv_curve,
        measured_rate,
        constant,
    }
}

/// `c^j = Σ_i w_i log a^j(g_i)`.
pub fn mean_log_scalars(fm: &FactoredMeasure) -> Vec<f64> {
    let nb = fm.blocks.len();
    (0..nb)
        .map(|j| {
            fm.factors
                .iter()
                .zip(fm.weights())
                .map(|(f, w)| w * f.scalars[j].ln())
                .sum()
        })
        .collect()
}

/// Per-block `E[log ã^j]` after conjugating by `t`.
pub fn rescaled_log_means(fm: &FactoredMeasure, t: &[f64]) -> Vec<f64> {
    let nb = fm.blocks.len();
    (0..nb)
        .map(|j| {
            fm.factors
                .iter()
                .zip(fm.weights())
                .map(|(f, w)| w * (f.scalars[j] * t[j] / t[f.permutation[j]]).ln())
                .sum()
        })
        .collect()
}

/// Norm-centering weights `t^j`, normalized to geometric mean 1 per orbit.
///
/// Conjugating by `T = ⊕ t^j Id_{W^j}` turns `a^j` into
/// `ã^j = a^j t^j / t^{π(j)}`. With `z = log t` the requirement that
/// `E[log ã^j]` be the orbit mean `C` reads `(I − P)z = C·1 − c`, where
/// `P_{j,k} = μ(π(j) = k)`.
pub fn center_norms(mu: &FiniteMeasure, blocks: &BlockDecomposition) -> Result<Vec<f64>> {
    center_factored(&FactoredMeasure::new(mu, blocks)?)
}

pub fn center_factored(fm: &FactoredMeasure) -> Result<Vec<f64>> {
    let nb = fm.blocks.len();
    let c = mean_log_scalars(fm);
    let mut z = vec![0.0; nb];
    for orbit in fm.blocks.orbits() {
        let local: HashMap<usize, usize> = orbit.iter().enumerate().map(|(i, &j)| (j, i)).collect();
        let m = orbit.len();
        let mut p = vec![0.0; m * m];
        for (f, &w) in fm.factors.iter().zip(fm.weights()) {
            for (i, &j) in orbit.iter().enumerate() {
                let Some(&k) = local.get(&f.permutation[j]) else {
                    return Err(Error::InvalidDecomposition(format!(
                        "orbit {orbit:?} is not invariant: block {j} is sent to block {}",
                        f.permutation[j]
                    )));
                };
                p[i * m + k] += w;
            }
        }
        let mean = orbit.iter().map(|&j| c[j]).sum::<f64>() / m as f64;
        // P is doubly stochastic, so its communicating classes are the
        // connected components of its support. On each class the equation
        // is solvable iff the right-hand side sums to zero there.
        for class in components(m, &p) {
            let k = class.len();
            let rhs: Vec<f64> = class.iter().map(|&i| mean - c[orbit[i]]).collect();
            let scale = 1.0 + rhs.iter().map(|x| x.abs()).sum::<f64>();
            if rhs.iter().sum::<f64>().abs() > 1e-12 * scale {
                return Err(Error::SingularPoisson { orbit: orbit.clone() });
            }
            // I − P + J/k is invertible on a class and pins Σ z = 0 there
            let mut a = vec![0.0; k * k];
            for (r, &i) in class.iter().enumerate() {
                for (s, &l) in class.iter().enumerate() {
                    a[r * k + s] = f64::from(u8::from(r == s)) - p[i * m + l] + 1.0 / k as f64;
                }
            }
            let sol = solve_linear(k, a, rhs).ok_or_else(|| Error::SingularPoisson { orbit: orbit.clone() })?;
            for (&i, zi) in class.iter().zip(sol) {
                z[orbit[i]] = zi;
            }
        }
    }
    let t: Vec<f64> = z.iter().map(|x| x.exp()).collect();

    let means = rescaled_log_means(fm, &t);
    for orbit in fm.blocks.orbits() {
        let target = orbit.iter().map(|&j| c[j]).sum::<f64>() / orbit.len() as f64;
        for &j in orbit {
            if (means[j] - target).abs() > 1e-10 {
                return Err(Error::SingularPoisson { orbit: orbit.clone() });
            }
        }
    }
    Ok(t)
}

/// Connected components of the support graph of an `m × m` matrix.
fn components(m: usize, p: &[f64]) -> Vec<Vec<usize>> {
    let mut label = vec![usize::MAX; m];
    let mut out = Vec::new();
    for start in 0..m {
        if label[start] != usize::MAX {
            continue;
        }
        let id = out.len();
        let mut members = vec![start];
        label[start] = id;
        let mut stack = vec![start];
        while let Some(i) = stack.pop() {
            for k in 0..m {
                if (p[i * m + k] > 0.0 || p[k * m + i] > 0.0) && label[k] == usize::MAX {
                    label[k] = id;
                    members.push(k);
                    stack.push(k);
                }
            }
        }
        members.sort_unstable();
        out.push(members);
    }
    out
}

/// One-step slope `log(a^{s(j')}(g) / a^{s(j)}(g))` for a factored atom.
#[inline]
pub fn slope(f: &GeneratorFactorization, state: &[usize], j: usize, j_prime: usize) -> f64 {
    (f.scalars[state[j_prime]] / f.scalars[state[j]]).ln()
}

/// Exact law of the slope `α^{j',j}` from state `state`, equal values merged.
pub fn slope_distribution(
    mu: &FiniteMeasure,
    blocks: &BlockDecomposition,
    j: usize,
    j_prime: usize,
    state: &[usize],
) -> Result<Vec<(f64, f64)>> {
    slope_law(&FactoredMeasure::new(mu, blocks)?, j, j_prime, state)
}

pub fn slope_law(fm: &FactoredMeasure, j: usize, j_prime: usize, state: &[usize]) -> Result<Vec<(f64, f64)>> {
    let nb = fm.blocks.len();
    if j == j_prime || j >= nb || j_prime >= nb || state.len() != nb {
        return Err(Error::BadParams(format!(
            "need distinct block indices below {nb} and a state of length {nb}"
        )));
    }
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (f, &w) in fm.factors.iter().zip(fm.weights()) {
        let v = slope(f, state, j, j_prime);
        match out.iter_mut().find(|(x, _)| (x - v).abs() <= 1e-12 * (1.0 + v.abs())) {
            Some(entry) => entry.1 += w,
            None => out.push((v, w)),
        }
    }
    Ok(out)
}

/// `w^{j',j} = (1/|F|) Σ_s E[log²(a^{s(j')}/a^{s(j)})]`.
pub fn slope_variance(fm: &FactoredMeasure, j: usize, j_prime: usize) -> Result<f64> {
    let walk = fm.walk()?;
    let total: f64 = walk
        .group_elements
        .iter()
        .map(|s| {
            fm.factors
                .iter()
                .zip(fm.weights())
                .map(|(f, w)| w * slope(f, s, j, j_prime).powi(2))
                .sum::<f64>()
        })
        .sum();
    Ok(total / walk.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn swap() -> Matrix {
        Matrix::from_rows(&[&[0.0, 2.0], &[1.0, 0.0]]).unwrap()
    }

    fn abc() -> FiniteMeasure {
        FiniteMeasure::uniform(vec![
            Matrix::diag(&[2.0, 0.5, 1.0]),
            Matrix::diag(&[1.0, 2.0, 0.5]),
            Matrix::diag(&[0.5, 1.0, 2.0]),
        ])
        .unwrap()
    }

    fn shift(n: usize, k: usize) -> Perm {
        (0..n).map(|j| (j + k) % n).collect()
    }

    #[test]
    fn decomposition_validation() {
        assert!(BlockDecomposition::new(3, vec![vec![0], vec![1, 2]], vec![vec![0, 1]]).is_ok());
        assert!(BlockDecomposition::new(3, vec![vec![0], vec![1]], vec![vec![0, 1]]).is_err());
        assert!(BlockDecomposition::new(2, vec![vec![0, 1], vec![1]], vec![vec![0, 1]]).is_err());
        assert!(BlockDecomposition::new(2, vec![vec![0], vec![1]], vec![vec![0]]).is_err());
        assert!(BlockDecomposition::new(2, vec![vec![0], vec![1]], vec![vec![0, 1], vec![1]]).is_err());
    }

    #[test]
    fn factor_examples() {
        let blocks = BlockDecomposition::coordinate(3);
        let f = factor_generator(&Matrix::diag(&[2.0, 0.5, 1.0]), &blocks).unwrap();
        assert_eq!(f.permutation, vec![0, 1, 2]);
        assert_eq!(f.scalars, vec![2.0, 0.5, 1.0]);
        assert!(f.orthogonal_parts.iter().all(|q| q.entries() == [1.0]));

        let blocks = BlockDecomposition::coordinate(2);
        let f = factor_generator(&swap(), &blocks).unwrap();
        assert_eq!(f.permutation, vec![1, 0]);
        assert_eq!(f.scalars, vec![1.0, 2.0]);
        assert_eq!(f.reassemble(&blocks), swap());

        let rot = Matrix::plane_rotation(2, 0, 1, std::f64::consts::FRAC_PI_4);
        assert!(matches!(factor_generator(&rot, &blocks), Err(Error::NotBlockConformal(_))));
    }

    #[test]
    fn factor_with_two_dimensional_block() {
        let blocks = BlockDecomposition::new(3, vec![vec![0, 1], vec![2]], vec![vec![0], vec![1]]).unwrap();
        let mut g = Matrix::plane_rotation(3, 0, 1, 0.4).scale(3.0);
        g.set(2, 2, -0.5);
        let f = factor_generator(&g, &blocks).unwrap();
        assert_relative_eq!(f.scalars[0], 3.0, max_relative = 1e-14);
        assert_relative_eq!(f.scalars[1], 0.5, max_relative = 1e-14);
        assert!(f.reassemble(&blocks).distance(&g).unwrap() < 1e-14);
        let mut skew = g.clone();
        skew.set(0, 0, 4.0);
        assert!(factor_generator(&skew, &blocks).is_err());
    }

    #[test]
    fn walk_examples() {
        let w = permutation_walk(&abc(), &BlockDecomposition::coordinate(3)).unwrap();
        assert_eq!(w.group_elements, vec![vec![0, 1, 2]]);
        assert_eq!(w.transition, vec![vec![1.0]]);

        let w = permutation_walk(&FiniteMeasure::dirac(swap()).unwrap(), &BlockDecomposition::coordinate(2)).unwrap();
        assert_eq!(w.len(), 2);
        assert_eq!(w.transition, vec![vec![0.0, 1.0], vec![1.0, 0.0]]);

        let lazy = FiniteMeasure::uniform(vec![Matrix::identity(2), swap()]).unwrap();
        let w = permutation_walk(&lazy, &BlockDecomposition::coordinate(2)).unwrap();
        assert_eq!(w.transition, vec![vec![0.5, 0.5], vec![0.5, 0.5]]);
        assert!(w.is_doubly_stochastic(1e-12));
    }

    #[test]
    fn aperiodicity_examples() {
        let swap_only = PermutationWalk::from_distribution(vec![(vec![1, 0], 1.0)]).unwrap();
        let a = aperiodicity(&swap_only).unwrap();
        assert_eq!((a.subgroup.clone(), a.p), (vec![vec![0, 1]], 2));
        assert!(a.power_supported_in_subgroup && a.power_generates_subgroup);

        let lazy = PermutationWalk::from_distribution(vec![(vec![0, 1], 0.5), (vec![1, 0], 0.5)]).unwrap();
        let a = aperiodicity(&lazy).unwrap();
        assert_eq!((a.subgroup.len(), a.p), (2, 1));

        let z4 = PermutationWalk::from_distribution(vec![(shift(4, 1), 0.5), (shift(4, 3), 0.5)]).unwrap();
        let a = aperiodicity(&z4).unwrap();
        assert_eq!(a.subgroup, vec![shift(4, 0), shift(4, 2)]);
        assert_eq!(a.p, 2);
        assert!(a.power_supported_in_subgroup && a.power_generates_subgroup);
    }

    #[test]
    fn normal_closure_in_s3() {
        // differences of two transpositions generate A3, which is normal
        let w = PermutationWalk::from_distribution(vec![(vec![1, 0, 2], 0.5), (vec![0, 2, 1], 0.5)]).unwrap();
        assert_eq!(w.len(), 6);
        let a = aperiodicity(&w).unwrap();
        assert_eq!((a.subgroup.len(), a.p), (3, 2));
        assert!(a.power_supported_in_subgroup && a.power_generates_subgroup);
    }

    #[test]
    fn mixing_examples() {
        let lazy = PermutationWalk::from_distribution(vec![(vec![0, 1], 0.5), (vec![1, 0], 0.5)]).unwrap();
        let r = mixing_rate(&lazy);
        assert!(r.rho < 1e-14);
        assert!(r.tv_curve.iter().all(|&(_, tv)| tv == 0.0));
        assert_eq!(r.measured_rate, 0.0);

        let swap_only = PermutationWalk::from_distribution(vec![(vec![1, 0], 1.0)]).unwrap();
        let r = mixing_rate(&swap_only);
        assert_relative_eq!(r.rho, 1.0, max_relative = 1e-14);

        let z4 = PermutationWalk::from_distribution(vec![(shift(4, 1), 0.5), (shift(4, 3), 0.5)]).unwrap();
        let a = aperiodicity(&z4).unwrap();
        let on_a = z4.power(a.p).unwrap();
        assert_eq!(on_a.len(), 2);
        let r = mixing_rate(&on_a);
        assert!(r.rho < 1e-14);
        assert_eq!(r.measured_rate, 0.0);
    }

    #[test]
    fn lazy_cycle_rate() {
        let w = PermutationWalk::from_distribution(vec![
            (shift(5, 0), 0.5),
            (shift(5, 1), 0.25),
            (shift(5, 4), 0.25),
        ])
        .unwrap();
        let r = mixing_rate(&w);
        let expected = 0.5 + 0.5 * (2.0 * std::f64::consts::PI / 5.0).cos();
        assert_relative_eq!(r.rho, expected, max_relative = 1e-12);
        assert!((r.measured_rate - expected).abs() < 1e-9);
        assert!(r.tv_curve.iter().all(|&(n, tv)| tv <= r.constant * r.rho.powi(n as i32) * (1.0 + 1e-12)));
    }

    #[test]
    fn centering_examples() {
        let t = center_norms(&abc(), &BlockDecomposition::coordinate(3)).unwrap();
        assert_eq!(t, vec![1.0, 1.0, 1.0]);

        let blocks = BlockDecomposition::new(2, vec![vec![0], vec![1]], vec![vec![0, 1]]).unwrap();
        let mu = FiniteMeasure::dirac(swap()).unwrap();
        let t = center_norms(&mu, &blocks).unwrap();
        assert_relative_eq!(t[0], 2f64.powf(0.25), max_relative = 1e-14);
        assert_relative_eq!(t[1], 2f64.powf(-0.25), max_relative = 1e-14);
        let fm = FactoredMeasure::new(&mu, &blocks).unwrap();
        for m in rescaled_log_means(&fm, &t) {
            assert_relative_eq!(m, 0.5 * 2f64.ln(), max_relative = 1e-14);
        }
        let rescaled = fm.rescaled(&t).unwrap();
        let f = factor_generator(&rescaled.atoms()[0], &blocks).unwrap();
        for a in f.scalars {
            assert_relative_eq!(a, 2f64.sqrt(), max_relative = 1e-14);
        }

        let equal = FiniteMeasure::dirac(Matrix::diag(&[3.0, 3.0])).unwrap();
        assert_eq!(center_norms(&equal, &blocks).unwrap(), vec![1.0, 1.0]);
    }

    #[test]
    fn reducible_orbit_is_singular() {
        let blocks = BlockDecomposition::new(2, vec![vec![0], vec![1]], vec![vec![0, 1]]).unwrap();
        let mu = FiniteMeasure::dirac(Matrix::diag(&[2.0, 1.0])).unwrap();
        assert!(matches!(center_norms(&mu, &blocks), Err(Error::SingularPoisson { .. })));
        let split = BlockDecomposition::coordinate(2);
        let mu = FiniteMeasure::dirac(swap()).unwrap();
        assert!(matches!(center_norms(&mu, &split), Err(Error::InvalidDecomposition(_))));
    }

    #[test]
    fn slope_examples() {
        let blocks = BlockDecomposition::coordinate(3);
        let l2 = 2f64.ln();
        let law = slope_distribution(&abc(), &blocks, 0, 1, &[0, 1, 2]).unwrap();
        assert_eq!(law.len(), 2);
        assert_relative_eq!(law[0].0, -2.0 * l2, max_relative = 1e-15);
        assert_relative_eq!(law[0].1, 1.0 / 3.0, max_relative = 1e-15);
        assert_relative_eq!(law[1].0, l2, max_relative = 1e-15);
        assert_relative_eq!(law[1].1, 2.0 / 3.0, max_relative = 1e-15);
        assert!(law.iter().map(|(v, p)| v * p).sum::<f64>().abs() < 1e-15);

        let flat = FiniteMeasure::dirac(Matrix::diag(&[2.0, 2.0, 1.0])).unwrap();
        assert_eq!(slope_distribution(&flat, &blocks, 0, 1, &[0, 1, 2]).unwrap(), vec![(0.0, 1.0)]);

        let law = slope_distribution(
            &FiniteMeasure::dirac(swap()).unwrap(),
            &BlockDecomposition::coordinate(2),
            0,
            1,
            &[0, 1],
        )
        .unwrap();
        assert_eq!(law, vec![(l2, 1.0)]);
        assert!(slope_distribution(&abc(), &blocks, 1, 1, &[0, 1, 2]).is_err());
    }

    #[test]
    fn slope_variance_of_example() {
        let fm = FactoredMeasure::new(&abc(), &BlockDecomposition::coordinate(3)).unwrap();
        let l2 = 2f64.ln();
        // (4 l2² + 2 l2²)/3 = 2 l2²
        assert_relative_eq!(slope_variance(&fm, 0, 1).unwrap(), 2.0 * l2 * l2, max_relative = 1e-14);
    }
}
