//! Modulus-of-continuity experiments: perturbation families, exact
//! transport distances against spectrum differences, the log-Hölder
//! envelope, the balancing arithmetic of the main bound, and the drift
//! convergence gap.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{normalize_in_place, Matrix, ProjectivePoint};
use crate::lyapunov::{conformal_exponent, reference_spectrum, spectrum_qr, ParticleCloud};
use crate::measure::{lipschitz_constants, wasserstein_distance, FiniteMeasure};
use crate::rng::{purpose, stream};
use crate::walk::least_squares;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PerturbationKind {
    /// Moves ε of mass from atom `down` to atom `up`.
    WeightShift { up: usize, down: usize },
    /// Replaces atom `g` by `diag(e^ε, 1, …, 1) g`.
    AtomScale { atom: usize },
    /// Replaces atom `g` by `R_ε g R_ε⁻¹`, `R_ε` a rotation of angle ε in
    /// the coordinate plane `(p, q)`.
    AtomRotation { atom: usize, p: usize, q: usize },
}

impl PerturbationKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::WeightShift { .. } => "weight-shift",
            Self::AtomScale { .. } => "atom-scale",
            Self::AtomRotation { .. } => "atom-rotation",
        }
    }
}

#[derive(Debug, Clone)]
pub struct PerturbationFamily {
    pub kind: PerturbationKind,
    pub base: FiniteMeasure,
    pub epsilons: Vec<f64>,
}

/// Geometric grid with `per_decade` points per decade from `lo` to `hi`.
pub fn geometric_grid(lo: f64, hi: f64, per_decade: usize) -> Vec<f64> {
    let decades = (hi / lo).log10();
    let steps = (decades * per_decade as f64).round() as usize;
    (0..=steps)
        .map(|k| lo * 10f64.powf(k as f64 / per_decade as f64))
        .collect()
}

/// 8 points per decade over `[1e-4, 1e-1]`.
pub fn default_epsilons() -> Vec<f64> {
    geometric_grid(1e-4, 1e-1, 8)
}

pub fn make_family(
    kind: PerturbationKind,
    base: &FiniteMeasure,
    epsilons: Vec<f64>,
) -> Result<PerturbationFamily> {
    let m = base.len();
    let d = base.dim();
    if let Some(e) = epsilons.iter().find(|e| !(**e >= 0.0 && **e <= 0.5)) {
        return Err(Error::BadParams(format!("epsilon {e} is outside [0, 0.5]")));
    }
    match kind {
        PerturbationKind::WeightShift { up, down } => {
            if up >= m || down >= m || up == down {
                return Err(Error::BadParams(format!(
                    "weight shift needs two distinct atoms below {m}, got {up} and {down}"
                )));
            }
            let largest = epsilons.iter().copied().fold(0.0, f64::max);
            if largest >= base.weights()[down] {
                return Err(Error::BadParams(format!(
                    "epsilon {largest} would empty atom {down} of weight {}",
                    base.weights()[down]
                )));
            }
        }
        PerturbationKind::AtomScale { atom } => {
            if atom >= m {
                return Err(Error::BadParams(format!("atom {atom} out of range (support size {m})")));
            }
        }
        PerturbationKind::AtomRotation { atom, p, q } => {
            if atom >= m || p >= d || q >= d || p == q {
                return Err(Error::BadParams(format!(
                    "rotation needs an atom below {m} and two distinct coordinates below {d}"
                )));
            }
        }
    }
    Ok(PerturbationFamily {
        kind,
        base: base.clone(),
        epsilons,
    })
}

impl PerturbationFamily {
    pub fn measure_at(&self, eps: f64) -> Result<FiniteMeasure> {
        let mut atoms = self.base.atoms().to_vec();
        let mut weights = self.base.weights().to_vec();
        match self.kind {
            PerturbationKind::WeightShift { up, down } => {
                weights[up] += eps;
                weights[down] -= eps;
            }
            PerturbationKind::AtomScale { atom } => {
                let mut s = vec![1.0; self.base.dim()];
                s[0] = eps.exp();
                atoms[atom] = Matrix::diag(&s).mul(&atoms[atom])?;
            }
            PerturbationKind::AtomRotation { atom, p, q } => {
                let d = self.base.dim();
                let r = Matrix::plane_rotation(d, p, q, eps);
                let r_inv = Matrix::plane_rotation(d, p, q, -eps);
                atoms[atom] = r.mul(&atoms[atom])?.mul(&r_inv)?;
            }
        }
        FiniteMeasure::new(atoms, weights)
    }

    /// All atoms of the base together with the perturbed atoms at every ε.
    pub fn compact_support(&self) -> Result<Vec<Matrix>> {
        let mut out = self.base.atoms().to_vec();
        for &e in &self.epsilons {
            out.extend(self.measure_at(e)?.atoms().iter().cloned());
        }
        Ok(out)
    }
}

/// Spectrum of a measure, exact when a closed form exists.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumValue {
    pub values: Vec<f64>,
    pub stderr: Vec<f64>,
    pub exact: bool,
}

/// Closed form when available, otherwise `spectrum_qr` with `steps`.
pub fn spectrum_value(mu: &FiniteMeasure, steps: usize, seed: u64) -> Result<SpectrumValue> {
    match reference_spectrum(mu) {
        Ok(values) => Ok(SpectrumValue {
            stderr: vec![0.0; values.len()],
            values,
            exact: true,
        }),
        Err(Error::NoReference) => {
            let est = spectrum_qr(mu, steps, seed)?;
            Ok(SpectrumValue {
                values: est.values,
                stderr: est.stderr,
                exact: false,
            })
        }
        Err(e) => Err(e),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModulusRecord {
    pub epsilon: f64,
    pub d_w: f64,
    /// `|λ_i(μ′) − λ_i(μ)|` per exponent.
    pub deltas: Vec<f64>,
    /// Combined standard error of each difference, 0 when both are exact.
    pub stderr: Vec<f64>,
    pub exact: bool,
}

/// `|Δλ_1| ≤ C |log d_W|^{−γ}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Envelope {
    pub c: f64,
    pub gamma: f64,
}

impl Envelope {
    pub fn at(&self, d_w: f64) -> f64 {
        self.c * d_w.ln().abs().powf(-self.gamma)
    }
}

#[derive(Debug, Clone)]
pub struct ModulusReport {
    /// Sorted by `d_w`.
    pub records: Vec<ModulusRecord>,
    pub reference: SpectrumValue,
    /// Fitted to records with `0 < d_W < e^{−2}` and `Δλ_1 > 0`; `None` with
    /// fewer than two such records.
    pub envelope: Option<Envelope>,
}

/// Runs the family. Spectra use closed forms where they exist; otherwise
/// `spectrum_qr` with `steps` (the base with `10 × steps`). Every ε shares one
/// random stream, so Monte Carlo differences vary smoothly in ε.
pub fn modulus_experiment(family: &PerturbationFamily, steps: usize, seed: u64) -> Result<ModulusReport> {
    let run_seed = crate::rng::derive_key(seed, &[purpose::MODULUS]);
    let reference = spectrum_value(&family.base, steps.saturating_mul(10), run_seed)?;
    let mut records = family
        .epsilons
        .par_iter()
        .map(|&eps| {
            let mu = family.measure_at(eps)?;
            let d_w = wasserstein_distance(&mu, &family.base)?;
            let value = spectrum_value(&mu, steps, run_seed)?;
            let deltas = value
                .values
                .iter()
                .zip(&reference.values)
                .map(|(a, b)| (a - b).abs())
                .collect();
            let stderr = value
                .stderr
                .iter()
                .zip(&reference.stderr)
                .map(|(a, b)| a.hypot(*b))
                .collect();
            Ok(ModulusRecord {
                epsilon: eps,
                d_w,
                deltas,
                stderr,
                exact: value.exact && reference.exact,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    records.sort_by(|a, b| a.d_w.total_cmp(&b.d_w).then(a.epsilon.total_cmp(&b.epsilon)));
    let envelope = fit_envelope(
        &records
            .iter()
            .map(|r| (r.d_w, r.deltas[0]))
            .collect::<Vec<_>>(),
    );
    Ok(ModulusReport {
        records,
        reference,
        envelope,
    })
}

/// Envelope through the upper convex hull of `(log|log d_W|, log Δ)`: least
/// squares on the hull vertices, then the intercept is raised until the line
/// dominates every point.
pub fn fit_envelope(points: &[(f64, f64)]) -> Option<Envelope> {
    let cutoff = (-2.0f64).exp();
    let mut pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(dw, delta)| *dw > 0.0 && *dw < cutoff && *delta > 0.0)
        .map(|(dw, delta)| (dw.ln().abs().ln(), delta.ln()))
        .collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    pts.dedup_by(|a, b| a.0 == b.0 && a.1 <= b.1);
    // keep only the highest point per abscissa
    let mut by_x: Vec<(f64, f64)> = Vec::new();
    for p in pts {
        match by_x.last_mut() {
            Some(last) if last.0 == p.0 => last.1 = last.1.max(p.1),
            _ => by_x.push(p),
        }
    }
    if by_x.len() < 2 {
        return None;
    }
    let mut hull: Vec<(f64, f64)> = Vec::new();
    for &p in &by_x {
        while hull.len() >= 2 {
            let (a, b) = (hull[hull.len() - 2], hull[hull.len() - 1]);
            let cross = (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0);
            if cross >= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(p);
    }
    let xs: Vec<f64> = hull.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = hull.iter().map(|p| p.1).collect();
    let (slope, _) = least_squares(&xs, &ys);
    let gamma = -slope;
    let intercept = by_x
        .iter()
        .map(|(x, y)| y + gamma * x)
        .fold(f64::NEG_INFINITY, f64::max);
    Some(Envelope {
        c: intercept.exp() * (1.0 + 1e-12),
        gamma,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundAssembly {
    /// `C0/n^γ + C_K^n d_W`.
    pub rhs: f64,
    /// Smallest `n ≥ 1` with `(2 C_K)^n d_W > 1`.
    pub n_star: usize,
    /// `(C0 + C_K)/n_star^γ`.
    pub budget_bound: f64,
}

pub fn bound_assembly(n: usize, d_w: f64, c0: f64, gamma: f64, c_k: f64) -> Result<BoundAssembly> {
    if !(d_w > 0.0 && d_w < 1.0) {
        return Err(Error::BadParams(format!("d_W = {d_w} is outside (0, 1)")));
    }
    if !(c_k >= 2.0) || !(gamma > 0.0) || !(c0 >= 0.0) || n == 0 {
        return Err(Error::BadParams(
            "need C_K >= 2, gamma > 0, C0 >= 0 and n >= 1".into(),
        ));
    }
    let nf = n as f64;
    let rhs = c0 / nf.powf(gamma) + (nf * c_k.ln() + d_w.ln()).exp();
    // compare in logs: (2 C_K)^n d_W > 1  ⇔  n log(2 C_K) > −log d_W
    let step = (2.0 * c_k).ln();
    let target = -d_w.ln();
    let mut n_star = ((target / step).floor() as usize).max(1);
    while n_star > 1 && (n_star - 1) as f64 * step > target {
        n_star -= 1;
    }
    while n_star as f64 * step <= target {
        n_star += 1;
    }
    Ok(BoundAssembly {
        rhs,
        n_star,
        budget_bound: (c0 + c_k) / (n_star as f64).powf(gamma),
    })
}

pub const DEFAULT_DRIFT_PARTICLES: usize = 4096;
pub const DEFAULT_DRIFT_BURN_IN: usize = 32;

/// `|∫ φ_μ dν_n − λ_1(μ)|` where `ν_n` is `n` steps of the μ-walk applied to
/// a cloud that has first run [`DEFAULT_DRIFT_BURN_IN`] steps of the μ′-walk
/// from uniform points. `λ_1(μ)` must have a closed form.
pub fn drift_gap(
    mu: &FiniteMeasure,
    mu_prime: &FiniteMeasure,
    n: usize,
    particles: usize,
    seed: u64,
) -> Result<f64> {
    Ok(drift_gap_series(mu, mu_prime, &[n], particles, DEFAULT_DRIFT_BURN_IN, seed)?[0].1)
}

/// Drift gaps at every `n` in `ns` from one cloud, with an explicit μ′
/// burn-in. Longer burn-ins start closer to where the μ-walk is heading, which
/// flattens the early part of the series.
pub fn drift_gap_series(
    mu: &FiniteMeasure,
    mu_prime: &FiniteMeasure,
    ns: &[usize],
    particles: usize,
    burn_in: usize,
    seed: u64,
) -> Result<Vec<(usize, f64)>> {
    if mu.dim() != mu_prime.dim() {
        return Err(Error::DimensionMismatch {
            expected: mu.dim(),
            got: mu_prime.dim(),
        });
    }
    if particles == 0 {
        return Err(Error::EmptySample);
    }
    let lambda = reference_spectrum(mu)?[0];
    let mut ns_sorted = ns.to_vec();
    ns_sorted.sort_unstable();
    ns_sorted.dedup();
    let horizon = ns_sorted.last().copied().unwrap_or(0);
    let cloud = ParticleCloud::uniform(mu.dim(), particles, seed)?;
    let s_prime = mu_prime.sampler();
    let s = mu.sampler();
    let d = mu.dim();

    let drifts: Vec<Vec<f64>> = cloud
        .points()
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let mut rng = stream(seed, &[purpose::DRIFT_GAP, i as u64]);
            let mut v = p.rep().to_vec();
            let mut buf = vec![0.0; d];
            for _ in 0..burn_in {
                mu_prime.atoms()[s_prime.sample(&mut rng)].apply_into(&v, &mut buf);
                std::mem::swap(&mut v, &mut buf);
                normalize_in_place(&mut v);
            }
            let mut out = Vec::with_capacity(ns_sorted.len());
            let mut next = 0;
            for step in 0..=horizon {
                if step > 0 {
                    mu.atoms()[s.sample(&mut rng)].apply_into(&v, &mut buf);
                    std::mem::swap(&mut v, &mut buf);
                    normalize_in_place(&mut v);
                }
                if next < ns_sorted.len() && ns_sorted[next] == step {
                    let x = ProjectivePoint::new(&v).expect("unit vector");
                    out.push(crate::lyapunov::drift(mu, &x).expect("same dimension"));
                    next += 1;
                }
            }
            out
        })
        .collect();

    Ok(ns_sorted
        .iter()
        .enumerate()
        .map(|(k, &n)| {
            let mean = drifts.iter().map(|row| row[k]).sum::<f64>() / particles as f64;
            (n, (mean - lambda).abs())
        })
        .collect())
}

/// Least-squares fit of `|Δλ_1|` against `d_W`.
#[derive(Debug, Clone, PartialEq)]
pub struct LipschitzFit {
    pub slope: f64,
    pub intercept: f64,
    pub rms_residual: f64,
    /// `(d_W, |Δλ_1|)` per ε, in ε order.
    pub points: Vec<(f64, f64)>,
}

/// Regression of `|Δλ_1|` on `d_W` along a family whose base is conformal.
pub fn conformal_lipschitz_check(family: &PerturbationFamily, steps: usize, seed: u64) -> Result<LipschitzFit> {
    let lambda = conformal_exponent(&family.base)?;
    let run_seed = crate::rng::derive_key(seed, &[purpose::LIPSCHITZ]);
    let points = family
        .epsilons
        .iter()
        .map(|&eps| {
            let mu = family.measure_at(eps)?;
            let d_w = wasserstein_distance(&mu, &family.base)?;
            let value = spectrum_value(&mu, steps, run_seed)?;
            Ok((d_w, (value.values[0] - lambda).abs()))
        })
        .collect::<Result<Vec<_>>>()?;
    if points.len() < 2 {
        return Err(Error::TooFewPoints(points.len()));
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
    let (slope, intercept) = least_squares(&xs, &ys);
    let rss: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    Ok(LipschitzFit {
        slope,
        intercept,
        rms_residual: (rss / xs.len() as f64).sqrt(),
        points,
    })
}

/// Largest observed Lipschitz quotients over random pairs of points:
/// `|φ_μ(x) − φ_μ(y)| / d(x, y)` and `Σ w d(gx, gy) / d(x, y)`. Half of the
/// pairs are independent uniform points, half are close pairs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LipschitzRatios {
    pub drift: f64,
    pub markov: f64,
    pub l_k: f64,
}

pub fn lipschitz_ratios(mu: &FiniteMeasure, pairs: usize, seed: u64) -> Result<LipschitzRatios> {
    let (l_k, _) = lipschitz_constants(mu.atoms())?;
    let d = mu.dim();
    let ratios: Vec<(f64, f64)> = (0..pairs)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(seed, &[purpose::LIPSCHITZ, i as u64]);
            let mut gauss = || -> Vec<f64> { (0..d).map(|_| StandardNormal.sample(&mut rng)).collect() };
            let u = gauss();
            let mut w = gauss();
            if i % 2 == 1 {
                let scale = 10f64.powf(-1.0 - 6.0 * stream(seed, &[purpose::LIPSCHITZ, i as u64, 1]).random::<f64>());
                w = u.iter().zip(&w).map(|(a, b)| a + scale * b).collect();
            }
            let x = ProjectivePoint::new(&u).expect("nonzero");
            let y = ProjectivePoint::new(&w).expect("nonzero");
            let dist = x.distance(&y).expect("same dimension");
            if dist == 0.0 {
                return (0.0, 0.0);
            }
            let fx = crate::lyapunov::drift(mu, &x).expect("same dimension");
            let fy = crate::lyapunov::drift(mu, &y).expect("same dimension");
            let moved: f64 = mu
                .iter()
                .map(|(g, wt)| {
                    wt * x
                        .act(g)
                        .and_then(|gx| gx.distance(&y.act(g)?))
                        .expect("invertible atoms")
                })
                .sum();
            ((fx - fy).abs() / dist, moved / dist)
        })
        .collect();
    Ok(LipschitzRatios {
        drift: ratios.iter().map(|r| r.0).fold(0.0, f64::max),
        markov: ratios.iter().map(|r| r.1).fold(0.0, f64::max),
        l_k,
    })
}
