//! Statistics of the projective walk `x_n = g_n ⋯ g_1 x_0` relative to a
//! block decomposition: region occupancy, an exact oracle for diagonal
//! power-lattice systems, logarithmic slopes and Berry–Esseen gaps, and
//! power-law fitting.

use rayon::prelude::*;
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::linalg::{normalize_in_place, ProjectivePoint};
use crate::measure::FiniteMeasure;
use crate::rng::{purpose, stream, AtomSampler};
use crate::structure::{compose, identity_perm, slope, BlockDecomposition, FactoredMeasure};

/// Neighborhoods `B^j` of radius `r` around the block subspaces and the
/// sharp neighborhoods `U^j_R`, `R = −log(r/√d)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionPartition {
    pub blocks: BlockDecomposition,
    pub r: f64,
    pub big_r: f64,
}

impl RegionPartition {
    pub fn new(blocks: BlockDecomposition, r: f64) -> Result<Self> {
        if !(r > 0.0 && r < 0.5) {
            return Err(Error::BadParams(format!("r = {r} is outside (0, 1/2)")));
        }
        let big_r = -(r / (blocks.dim() as f64).sqrt()).ln();
        Ok(Self { blocks, r, big_r })
    }

    pub fn with_sharp_radius(mut self, big_r: f64) -> Result<Self> {
        if !(big_r >= 0.0) {
            return Err(Error::BadParams(format!("R = {big_r} is negative")));
        }
        self.big_r = big_r;
        Ok(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    Block(usize),
    Complement,
}

/// `‖v^j‖²` for every block.
fn block_masses(v: &[f64], block_of: &[usize], out: &mut [f64]) {
    out.fill(0.0);
    for (x, &j) in v.iter().zip(block_of) {
        out[j] += x * x;
    }
}

/// Region from block masses: `j` when `d(x, P(W^j))² = Σ_{k≠j} s_k / Σ s < r²`.
fn classify(masses: &[f64], r: f64) -> Region {
    let total: f64 = masses.iter().sum();
    let r2 = r * r;
    for (j, &s) in masses.iter().enumerate() {
        let other: f64 = masses.iter().enumerate().filter(|(k, _)| *k != j).map(|(_, m)| m).sum();
        if s > 0.0 && other < r2 * total {
            return Region::Block(j);
        }
    }
    Region::Complement
}

fn classify_sharp(masses: &[f64], big_r: f64) -> Option<usize> {
    let threshold = (2.0 * big_r).exp();
    (0..masses.len()).find(|&j| {
        masses[j] > 0.0
            && masses
                .iter()
                .enumerate()
                .all(|(k, &s)| k == j || masses[j] > threshold * s)
    })
}

pub fn region_of(x: &ProjectivePoint, part: &RegionPartition) -> Result<Region> {
    let masses = point_masses(x, part)?;
    Ok(classify(&masses, part.r))
}

/// Block `j` with `x ∈ U^j_R`, if any.
pub fn sharp_region_of(x: &ProjectivePoint, part: &RegionPartition) -> Result<Option<usize>> {
    let masses = point_masses(x, part)?;
    Ok(classify_sharp(&masses, part.big_r))
}

fn point_masses(x: &ProjectivePoint, part: &RegionPartition) -> Result<Vec<f64>> {
    if x.dim() != part.blocks.dim() {
        return Err(Error::DimensionMismatch {
            expected: part.blocks.dim(),
            got: x.dim(),
        });
    }
    let mut masses = vec![0.0; part.blocks.len()];
    block_masses(x.rep(), &part.blocks.block_of(), &mut masses);
    Ok(masses)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Occupancy {
    pub n: usize,
    pub r: f64,
    pub complement_mass: f64,
    pub region_masses: Vec<f64>,
    /// Binomial standard error of `complement_mass`.
    pub stderr: f64,
    pub trials: usize,
}

impl Occupancy {
    /// Binomial standard error of `region_masses[j] − region_masses[k]`.
    pub fn difference_stderr(&self, j: usize, k: usize) -> f64 {
        let (p, q) = (self.region_masses[j], self.region_masses[k]);
        ((p + q - (p - q).powi(2)).max(0.0) / self.trials as f64).sqrt()
    }
}

/// Monte Carlo law of the region of `x_n` started at `x0`.
pub fn occupancy(
    mu: &FiniteMeasure,
    x0: &ProjectivePoint,
    part: &RegionPartition,
    n: usize,
    trials: usize,
    seed: u64,
) -> Result<Occupancy> {
    Ok(occupancy_series(mu, x0, &part.blocks, &[part.r], &[n], trials, seed)?.remove(0))
}

/// Occupancy at every `(n, r)` in `ns × rs` from a single set of
/// trajectories. Records come out ordered by `n`, then `r`.
pub fn occupancy_series(
    mu: &FiniteMeasure,
    x0: &ProjectivePoint,
    blocks: &BlockDecomposition,
    rs: &[f64],
    ns: &[usize],
    trials: usize,
    seed: u64,
) -> Result<Vec<Occupancy>> {
    if trials == 0 {
        return Err(Error::BadParams("trials must be at least 1".into()));
    }
    if mu.dim() != x0.dim() || mu.dim() != blocks.dim() {
        return Err(Error::DimensionMismatch {
            expected: blocks.dim(),
            got: mu.dim().max(x0.dim()),
        });
    }
    for &r in rs {
        RegionPartition::new(blocks.clone(), r)?;
    }
    let mut ns_sorted = ns.to_vec();
    ns_sorted.sort_unstable();
    ns_sorted.dedup();
    let horizon = ns_sorted.last().copied().unwrap_or(0);
    let nb = blocks.len();
    let block_of = blocks.block_of();
    let sampler = mu.sampler();
    let slots = ns_sorted.len() * rs.len() * (nb + 1);

    // counts[(t * |rs| + k) * (nb + 1) + region], last region = complement
    let counts = (0..trials)
        .into_par_iter()
        .fold(
            || vec![0u64; slots],
            |mut counts, trial| {
                let mut rng = stream(seed, &[purpose::OCCUPANCY, trial as u64]);
                let mut v = x0.rep().to_vec();
                let mut buf = vec![0.0; v.len()];
                let mut masses = vec![0.0; nb];
                let mut next = 0;
                for step in 0..=horizon {
                    if step > 0 {
                        mu.atoms()[sampler.sample(&mut rng)].apply_into(&v, &mut buf);
                        std::mem::swap(&mut v, &mut buf);
                        normalize_in_place(&mut v);
                    }
                    if next < ns_sorted.len() && ns_sorted[next] == step {
                        block_masses(&v, &block_of, &mut masses);
                        for (k, &r) in rs.iter().enumerate() {
                            let region = match classify(&masses, r) {
                                Region::Block(j) => j,
                                Region::Complement => nb,
                            };
                            counts[(next * rs.len() + k) * (nb + 1) + region] += 1;
                        }
                        next += 1;
                    }
                }
                counts
            },
        )
        .reduce(
            || vec![0u64; slots],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        );

    let total = trials as f64;
    let mut out = Vec::with_capacity(ns_sorted.len() * rs.len());
    for (t, &n) in ns_sorted.iter().enumerate() {
        for (k, &r) in rs.iter().enumerate() {
            let base = (t * rs.len() + k) * (nb + 1);
            let region_masses: Vec<f64> = (0..nb).map(|j| counts[base + j] as f64 / total).collect();
            let complement_mass = counts[base + nb] as f64 / total;
            out.push(Occupancy {
                n,
                r,
                complement_mass,
                region_masses,
                stderr: (complement_mass * (1.0 - complement_mass) / total).sqrt(),
                trials,
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExactOccupancy {
    pub n: usize,
    pub r: f64,
    pub complement_mass: f64,
    pub region_masses: Vec<f64>,
}

/// Largest number of atom-count compositions the oracle will enumerate.
pub const ORACLE_BUDGET: u128 = 200_000_000;

/// Diagonal atoms whose entries are `± b^{e}` with integer `e`.
#[derive(Debug, Clone)]
pub struct PowerLattice {
    pub base: f64,
    /// `exponents[i][c]`: power of the base in entry `c` of atom `i`.
    pub exponents: Vec<Vec<i64>>,
}

impl PowerLattice {
    pub fn detect(mu: &FiniteMeasure) -> Result<Self> {
        if !mu.is_diagonal() {
            return Err(Error::OracleInapplicable("atoms are not diagonal".into()));
        }
        let logs: Vec<Vec<f64>> = mu
            .atoms()
            .iter()
            .map(|g| g.diagonal().iter().map(|x| x.abs().ln()).collect())
            .collect();
        let smallest = logs
            .iter()
            .flatten()
            .map(|x| x.abs())
            .filter(|x| *x > 1e-12)
            .fold(f64::INFINITY, f64::min);
        if smallest.is_infinite() {
            let exponents = logs.iter().map(|row| vec![0; row.len()]).collect();
            return Ok(Self { base: 2.0, exponents });
        }
        for q in 1..=12 {
            let step = smallest / q as f64;
            let exps: Option<Vec<Vec<i64>>> = logs
                .iter()
                .map(|row| {
                    row.iter()
                        .map(|x| {
                            let e = x / step;
                            ((e - e.round()).abs() < 1e-9).then_some(e.round() as i64)
                        })
                        .collect()
                })
                .collect();
            if let Some(exponents) = exps {
                return Ok(Self {
                    base: step.exp(),
                    exponents,
                });
            }
        }
        Err(Error::OracleInapplicable(
            "diagonal entries are not integer powers of a common base".into(),
        ))
    }
}

/// Exact region law at time `n` for a diagonal power-lattice system.
pub fn exact_occupancy_oracle(
    mu: &FiniteMeasure,
    x0: &ProjectivePoint,
    part: &RegionPartition,
    n: usize,
) -> Result<ExactOccupancy> {
    Ok(exact_occupancy_series(mu, x0, &part.blocks, &[part.r], &[n])?.remove(0))
}

/// Exact occupancy for every `(n, r)`, ordered by `n` then `r`.
///
/// Diagonal atoms commute, so `x_n` depends only on how many times each atom
/// was drawn. The law of the counts is multinomial, and the log-coordinates
/// of `x_n` are `log|x0_c| + log b · Σ_i k_i e_{i,c}`.
pub fn exact_occupancy_series(
    mu: &FiniteMeasure,
    x0: &ProjectivePoint,
    blocks: &BlockDecomposition,
    rs: &[f64],
    ns: &[usize],
) -> Result<Vec<ExactOccupancy>> {
    let lattice = PowerLattice::detect(mu)?;
    if mu.dim() != x0.dim() || mu.dim() != blocks.dim() {
        return Err(Error::DimensionMismatch {
            expected: blocks.dim(),
            got: mu.dim().max(x0.dim()),
        });
    }
    for &r in rs {
        RegionPartition::new(blocks.clone(), r)?;
    }
    let m = mu.len();
    let d = mu.dim();
    let nb = blocks.len();
    let block_of = blocks.block_of();
    let log_b = lattice.base.ln();
    let log_w: Vec<f64> = mu.weights().iter().map(|w| w.ln()).collect();
    let start: Vec<f64> = x0.rep().iter().map(|x| x.abs().ln()).collect();

    let mut out = Vec::new();
    let mut ns_sorted = ns.to_vec();
    ns_sorted.sort_unstable();
    ns_sorted.dedup();
    for &n in &ns_sorted {
        let compositions = count_compositions(n, m);
        if compositions > ORACLE_BUDGET {
            return Err(Error::OracleInapplicable(format!(
                "{compositions} count vectors at n = {n} exceed the budget"
            )));
        }
        let mut ln_fact = vec![0.0; n + 1];
        for k in 1..=n {
            ln_fact[k] = ln_fact[k - 1] + (k as f64).ln();
        }
        let mut acc = vec![vec![0.0; nb + 1]; rs.len()];
        let mut counts = vec![0usize; m];
        let mut y = vec![0.0; d];
        let mut masses = vec![0.0; nb];
        let mut visit = |counts: &[usize]| {
            let mut lp = ln_fact[n];
            for (k, lw) in counts.iter().zip(&log_w) {
                lp += *k as f64 * lw - ln_fact[*k];
            }
            let p = lp.exp();
            for c in 0..d {
                let e: i64 = counts
                    .iter()
                    .zip(&lattice.exponents)
                    .map(|(&k, ex)| k as i64 * ex[c])
                    .sum();
                y[c] = start[c] + log_b * e as f64;
            }
            let top = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            masses.fill(0.0);
            for c in 0..d {
                masses[block_of[c]] += (2.0 * (y[c] - top)).exp();
            }
            for (k, &r) in rs.iter().enumerate() {
                let region = match classify(&masses, r) {
                    Region::Block(j) => j,
                    Region::Complement => nb,
                };
                acc[k][region] += p;
            }
        };
        for_each_composition(n, m, &mut counts, 0, &mut visit);
        for (k, &r) in rs.iter().enumerate() {
            out.push(ExactOccupancy {
                n,
                r,
                complement_mass: acc[k][nb],
                region_masses: acc[k][..nb].to_vec(),
            });
        }
    }
    Ok(out)
}

/// `C(n + m − 1, m − 1)`, saturating.
fn count_compositions(n: usize, m: usize) -> u128 {
    let k = (m - 1) as u128;
    let top = (n + m - 1) as u128;
    (0..k).fold(1u128, |acc, i| acc.saturating_mul(top - i) / (i + 1))
}

fn for_each_composition(
    remaining: usize,
    parts: usize,
    counts: &mut [usize],
    idx: usize,
    visit: &mut impl FnMut(&[usize]),
) {
    if idx + 1 == parts {
        counts[idx] = remaining;
        visit(counts);
        return;
    }
    for k in 0..=remaining {
        counts[idx] = k;
        for_each_composition(remaining - k, parts, counts, idx + 1, visit);
    }
}

/// Slope increments along sampled trajectories, with the largest deviation
/// seen in the telescoping identity
/// `log(‖v_n^{ζ_n(j')}‖/‖v_n^{ζ_n(j)}‖) − log(‖v^{j'}‖/‖v^j‖) = Σ α_m`.
#[derive(Debug, Clone)]
pub struct SlopeSeries {
    /// `increments[trial][m-1] = α_m^{j',j}`.
    pub increments: Vec<Vec<f64>>,
    pub max_telescoping_error: f64,
}

/// Samples `trials` trajectories of length `n`. The telescoping identity is
/// checked against direct products applied to the block components of the
/// barycenter, each component carried with its own log-scale.
pub fn slope_series(
    mu: &FiniteMeasure,
    blocks: &BlockDecomposition,
    j: usize,
    j_prime: usize,
    n: usize,
    trials: usize,
    seed: u64,
) -> Result<SlopeSeries> {
    let fm = FactoredMeasure::new(mu, blocks)?;
    check_pair(&fm, j, j_prime)?;
    let d = blocks.dim();
    let block_of = blocks.block_of();
    let sampler = mu.sampler();
    let rows: Vec<(Vec<f64>, f64)> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = stream(seed, &[purpose::SLOPES, trial as u64]);
            let mut state = identity_perm(blocks.len());
            // components of the barycenter in W^j and W^{j'}
            let mut comps: Vec<(Vec<f64>, f64)> = [j, j_prime]
                .iter()
                .map(|&b| {
                    let v: Vec<f64> = (0..d).map(|c| f64::from(u8::from(block_of[c] == b))).collect();
                    (v, 0.0)
                })
                .collect();
            let initial = comps[1].0.iter().map(|x| x * x).sum::<f64>().ln() * 0.5
                - comps[0].0.iter().map(|x| x * x).sum::<f64>().ln() * 0.5;
            let mut buf = vec![0.0; d];
            let mut row = Vec::with_capacity(n);
            let mut sum = 0.0;
            for _ in 0..n {
                let idx = sampler.sample(&mut rng);
                let f = &fm.factors[idx];
                let a = slope(f, &state, j, j_prime);
                row.push(a);
                sum += a;
                state = compose(&f.permutation, &state);
                for (v, scale) in comps.iter_mut() {
                    mu.atoms()[idx].apply_into(v, &mut buf);
                    std::mem::swap(v, &mut buf);
                    *scale += normalize_in_place(v);
                }
            }
            let direct = comps[1].1 - comps[0].1;
            let err = (direct - initial - sum).abs();
            (row, err)
        })
        .collect();
    let max_telescoping_error = rows.iter().map(|(_, e)| *e).fold(0.0, f64::max);
    Ok(SlopeSeries {
        increments: rows.into_iter().map(|(r, _)| r).collect(),
        max_telescoping_error,
    })
}

fn check_pair(fm: &FactoredMeasure, j: usize, j_prime: usize) -> Result<()> {
    let nb = fm.blocks.len();
    if j == j_prime || j >= nb || j_prime >= nb {
        return Err(Error::BadParams(format!("need distinct block indices below {nb}")));
    }
    Ok(())
}

/// Exact `(E[α_m], E[α_m²])` for `m = 1..=n`, from the law of `ζ_{m−1}`.
pub fn slope_moments(fm: &FactoredMeasure, j: usize, j_prime: usize, n: usize) -> Result<Vec<(f64, f64)>> {
    check_pair(fm, j, j_prime)?;
    let walk = fm.walk()?;
    let per_state: Vec<(f64, f64)> = walk
        .group_elements
        .iter()
        .map(|s| {
            fm.factors.iter().zip(fm.weights()).fold((0.0, 0.0), |(m1, m2), (f, w)| {
                let a = slope(f, s, j, j_prime);
                (m1 + w * a, m2 + w * a * a)
            })
        })
        .collect();
    let mut dist = vec![0.0; walk.len()];
    dist[walk.identity_index()] = 1.0;
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let m = dist
            .iter()
            .zip(&per_state)
            .fold((0.0, 0.0), |(a, b), (p, (m1, m2))| (a + p * m1, b + p * m2));
        out.push(m);
        dist = walk.step(&dist);
    }
    Ok(out)
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// `sup_t |F̂(t) − Ψ(t)|` for the empirical CDF of `samples`.
pub fn berry_esseen_gap(samples: &[f64]) -> Result<f64> {
    let w = 1.0 / samples.len() as f64;
    berry_esseen_gap_weighted(&samples.iter().map(|&x| (x, w)).collect::<Vec<_>>())
}

/// Kolmogorov distance between a finite distribution `(value, prob)` and
/// the standard normal law. Checked at both one-sided limits of every jump.
pub fn berry_esseen_gap_weighted(points: &[(f64, f64)]) -> Result<f64> {
    if points.is_empty() {
        return Err(Error::EmptySample);
    }
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = sorted.iter().map(|p| p.1).sum();
    let mut below = 0.0;
    let mut gap: f64 = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let x = sorted[i].0;
        let mut mass = 0.0;
        while i < sorted.len() && sorted[i].0 == x {
            mass += sorted[i].1;
            i += 1;
        }
        let psi = normal_cdf(x);
        gap = gap.max((below / total - psi).abs());
        below += mass;
        gap = gap.max((below / total - psi).abs());
    }
    Ok(gap)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BerryEsseenPoint {
    pub n: usize,
    pub gap: f64,
    /// `gap · √n / log n`.
    pub normalized: f64,
    pub w_n: f64,
}

/// Berry–Esseen gaps of `(Σ α_m − Σ E[α_m]) / w_n`, `w_n² = Σ E[α_m²]`, at
/// each `n` in `ns`, from `trials` trajectories. Partial sums are streamed
/// so memory is `trials × |ns|`.
pub fn berry_esseen_series(
    fm: &FactoredMeasure,
    j: usize,
    j_prime: usize,
    ns: &[usize],
    trials: usize,
    seed: u64,
) -> Result<Vec<BerryEsseenPoint>> {
    if trials == 0 {
        return Err(Error::EmptySample);
    }
    let mut ns_sorted = ns.to_vec();
    ns_sorted.sort_unstable();
    ns_sorted.dedup();
    if ns_sorted.first() == Some(&0) {
        return Err(Error::BadParams("n must be positive".into()));
    }
    let horizon = ns_sorted.last().copied().unwrap_or(0);
    let moments = slope_moments(fm, j, j_prime, horizon)?;
    let mut centers = Vec::new();
    let mut scales = Vec::new();
    let (mut m1, mut m2) = (0.0, 0.0);
    for (m, (a, b)) in moments.iter().enumerate() {
        m1 += a;
        m2 += b;
        if ns_sorted.contains(&(m + 1)) {
            centers.push(m1);
            scales.push(m2.sqrt());
        }
    }
    if let Some(k) = scales.iter().position(|s| !(*s > 0.0)) {
        return Err(Error::BadParams(format!("slope variance vanishes at n = {}", ns_sorted[k])));
    }

    let sampler = AtomSampler::new(fm.weights());
    let nb = fm.blocks.len();
    let sums: Vec<Vec<f64>> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = stream(seed, &[purpose::SLOPES, trial as u64]);
            let mut state = identity_perm(nb);
            let mut s = 0.0;
            let mut out = Vec::with_capacity(ns_sorted.len());
            let mut next = 0;
            for m in 1..=horizon {
                let f = &fm.factors[sampler.sample(&mut rng)];
                s += slope(f, &state, j, j_prime);
                state = compose(&f.permutation, &state);
                if ns_sorted[next] == m {
                    out.push((s - centers[next]) / scales[next]);
                    next += 1;
                }
            }
            out
        })
        .collect();

    ns_sorted
        .iter()
        .enumerate()
        .map(|(k, &n)| {
            let column: Vec<f64> = sums.iter().map(|row| row[k]).collect();
            let gap = berry_esseen_gap(&column)?;
            let nf = n as f64;
            Ok(BerryEsseenPoint {
                n,
                gap,
                normalized: gap * nf.sqrt() / nf.ln(),
                w_n: scales[k],
            })
        })
        .collect()
}

/// `C n^{−γ}` fitted by least squares in log-log coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayFit {
    pub c: f64,
    pub gamma: f64,
    pub rms_residual: f64,
}

pub fn fit_decay(points: &[(f64, f64)]) -> Result<DecayFit> {
    if points.len() < 4 {
        return Err(Error::TooFewPoints(points.len()));
    }
    if let Some((index, &(_, value))) = points.iter().enumerate().find(|(_, p)| !(p.1 > 0.0) || !(p.0 > 0.0)) {
        return Err(Error::NonpositiveValue { index, value });
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let (slope, intercept) = least_squares(&xs, &ys);
    let rss: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    Ok(DecayFit {
        c: intercept.exp(),
        gamma: -slope,
        rms_residual: (rss / xs.len() as f64).sqrt(),
    })
}

/// `(slope, intercept)` of the ordinary least-squares line.
pub(crate) fn least_squares(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (slope, my - slope * mx)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapEstimate {
    pub n: usize,
    pub gap: f64,
    /// Sum of the standard errors of the individual differences.
    pub stderr: f64,
}

/// `Σ_i Σ_{j,j' ∈ J^i} |mass(B^j) − mass(B^{j'})|` over ordered pairs.
pub fn orbit_gap(blocks: &BlockDecomposition, masses: &[f64]) -> f64 {
    blocks
        .orbits()
        .iter()
        .map(|orbit| {
            orbit
                .iter()
                .flat_map(|&j| orbit.iter().map(move |&k| (masses[j] - masses[k]).abs()))
                .sum::<f64>()
        })
        .sum()
}

fn gap_from(blocks: &BlockDecomposition, occ: &Occupancy) -> GapEstimate {
    let stderr = blocks
        .orbits()
        .iter()
        .map(|orbit| {
            orbit
                .iter()
                .flat_map(|&j| orbit.iter().map(move |&k| (j, k)))
                .filter(|(j, k)| j != k)
                .map(|(j, k)| occ.difference_stderr(j, k))
                .sum::<f64>()
        })
        .sum();
    GapEstimate {
        n: occ.n,
        gap: orbit_gap(blocks, &occ.region_masses),
        stderr,
    }
}

pub fn equidistribution_gap(
    mu: &FiniteMeasure,
    x0: &ProjectivePoint,
    part: &RegionPartition,
    n: usize,
    trials: usize,
    seed: u64,
) -> Result<GapEstimate> {
    let occ = occupancy(mu, x0, part, n, trials, seed)?;
    Ok(gap_from(&part.blocks, &occ))
}

pub fn equidistribution_series(
    mu: &FiniteMeasure,
    x0: &ProjectivePoint,
    part: &RegionPartition,
    ns: &[usize],
    trials: usize,
    seed: u64,
) -> Result<Vec<GapEstimate>> {
    Ok(occupancy_series(mu, x0, &part.blocks, &[part.r], ns, trials, seed)?
        .iter()
        .map(|occ| gap_from(&part.blocks, occ))
        .collect())
}
