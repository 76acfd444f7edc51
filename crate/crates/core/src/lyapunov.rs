//! Lyapunov spectrum estimation along random products, the drift function
//! and Markov-operator iteration on particle clouds.

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{normalize_in_place, orthonormalize_columns, Matrix, ProjectivePoint};
use crate::measure::FiniteMeasure;
use crate::rng::{purpose, stream};

pub const BATCHES: usize = 30;

/// Atoms whose `σ_1/σ_d − 1` is below this count as scalar × orthogonal.
pub const CONFORMAL_TOLERANCE: f64 = 1e-8;

pub const DEFAULT_CLOUD_SIZE: usize = 512;

#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovEstimate {
    /// Exponents in nats per step, non-increasing.
    pub values: Vec<f64>,
    pub stderr: Vec<f64>,
    pub steps: usize,
    pub seed: u64,
    /// `(1/n) Σ log|det g_m|` along the sampled trajectory.
    pub mean_log_det: f64,
}

/// QR estimate of the full spectrum along one trajectory of length `steps`.
pub fn spectrum_qr(mu: &FiniteMeasure, steps: usize, seed: u64) -> Result<LyapunovEstimate> {
    if steps == 0 {
        return Err(Error::BadParams("steps must be at least 1".into()));
    }
    let d = mu.dim();
    let sampler = mu.sampler();
    let log_dets: Vec<f64> = mu.atoms().iter().map(|g| g.det().abs().ln()).collect();
    let mut rng = stream(seed, &[purpose::SPECTRUM]);

    let batches = BATCHES.min(steps);
    let mut batch_sums = vec![vec![0.0; d]; batches];
    let mut frame = Matrix::identity(d).entries().to_vec(); // column-major, identity is symmetric
    let mut next = vec![0.0; d * d];
    let mut r = vec![0.0; d];
    let mut log_det_sum = 0.0;

    let mut batch = 0;
    let mut batch_end = steps / batches;
    for m in 0..steps {
        if m == batch_end {
            batch += 1;
            batch_end = (batch + 1) * steps / batches;
        }
        let idx = sampler.sample(&mut rng);
        let g = &mu.atoms()[idx];
        log_det_sum += log_dets[idx];
        for k in 0..d {
            g.apply_into(&frame[k * d..(k + 1) * d], &mut next[k * d..(k + 1) * d]);
        }
        orthonormalize_columns(d, &mut next, &mut r);
        std::mem::swap(&mut frame, &mut next);
        for (acc, x) in batch_sums[batch].iter_mut().zip(&r) {
            *acc += x.ln();
        }
    }

    let n = steps as f64;
    let raw: Vec<f64> = (0..d)
        .map(|i| batch_sums.iter().map(|b| b[i]).sum::<f64>() / n)
        .collect();
    let stderr: Vec<f64> = (0..d)
        .map(|i| {
            if batches < 2 {
                return 0.0;
            }
            let means: Vec<f64> = (0..batches)
                .map(|b| {
                    let len = (b + 1) * steps / batches - b * steps / batches;
                    batch_sums[b][i] / len as f64
                })
                .collect();
            let avg = means.iter().sum::<f64>() / batches as f64;
            let ss: f64 = means.iter().map(|x| (x - avg) * (x - avg)).sum();
            (ss / (batches * (batches - 1)) as f64).sqrt()
        })
        .collect();

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| raw[b].total_cmp(&raw[a]));
    Ok(LyapunovEstimate {
        values: order.iter().map(|&i| raw[i]).collect(),
        stderr: order.iter().map(|&i| stderr[i]).collect(),
        steps,
        seed,
        mean_log_det: log_det_sum / n,
    })
}

/// `φ_μ(x) = Σ w_i log‖g_i v‖` for the unit representative `v` of `x`.
pub fn drift(mu: &FiniteMeasure, x: &ProjectivePoint) -> Result<f64> {
    if mu.dim() != x.dim() {
        return Err(Error::DimensionMismatch {
            expected: mu.dim(),
            got: x.dim(),
        });
    }
    Ok(drift_raw(mu, x.rep()))
}

fn drift_raw(mu: &FiniteMeasure, v: &[f64]) -> f64 {
    let mut buf = vec![0.0; v.len()];
    mu.iter()
        .map(|(g, w)| {
            g.apply_into(v, &mut buf);
            w * 0.5 * buf.iter().map(|x| x * x).sum::<f64>().ln()
        })
        .sum()
}

/// Equally weighted points of projective space.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleCloud {
    points: Vec<ProjectivePoint>,
    dim: usize,
}

impl ParticleCloud {
    pub fn new(points: Vec<ProjectivePoint>) -> Result<Self> {
        let dim = points.first().ok_or(Error::EmptySample)?.dim();
        if let Some(p) = points.iter().find(|p| p.dim() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: p.dim(),
            });
        }
        Ok(Self { points, dim })
    }

    /// `m` copies of one point.
    pub fn replicate(point: &ProjectivePoint, m: usize) -> Result<Self> {
        Self::new(vec![point.clone(); m])
    }

    /// `m` independent uniform points, from normalized Gaussian vectors.
    pub fn uniform(dim: usize, m: usize, seed: u64) -> Result<Self> {
        let points = (0..m)
            .map(|i| {
                let mut rng = stream(seed, &[purpose::CLOUD, i as u64]);
                loop {
                    let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
                    if let Ok(p) = ProjectivePoint::new(&v) {
                        break p;
                    }
                }
            })
            .collect();
        Self::new(points)
    }

    pub fn points(&self) -> &[ProjectivePoint] {
        &self.points
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Pushes every particle through `steps` fresh μ-samples. Particle `i` uses
/// its own stream keyed by `(seed, i)`, so the result does not depend on the
/// number of workers.
pub fn markov_iterate(
    mu: &FiniteMeasure,
    cloud: &ParticleCloud,
    steps: usize,
    seed: u64,
) -> Result<ParticleCloud> {
    if mu.dim() != cloud.dim() {
        return Err(Error::DimensionMismatch {
            expected: mu.dim(),
            got: cloud.dim(),
        });
    }
    let sampler = mu.sampler();
    let points = cloud
        .points
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let mut rng = stream(seed, &[purpose::MARKOV, i as u64]);
            let mut v = p.rep().to_vec();
            let mut buf = vec![0.0; v.len()];
            for _ in 0..steps {
                mu.atoms()[sampler.sample(&mut rng)].apply_into(&v, &mut buf);
                std::mem::swap(&mut v, &mut buf);
                normalize_in_place(&mut v);
            }
            ProjectivePoint::new(&v)
        })
        .collect::<Result<Vec<_>>>()?;
    ParticleCloud::new(points)
}

/// Furstenberg estimate of `λ_1`: the drift averaged along the trajectories
/// of a cloud after `burn_in` steps, over `samples` further steps.
///
/// Starts from `DEFAULT_CLOUD_SIZE` uniform particles. When the spectrum is
/// not a single point this can settle on a non-maximal stationary measure, so
/// outside that regime the value is heuristic.
pub fn furstenberg_top(mu: &FiniteMeasure, burn_in: usize, samples: usize, seed: u64) -> Result<f64> {
    let cloud = ParticleCloud::uniform(mu.dim(), DEFAULT_CLOUD_SIZE, seed)?;
    furstenberg_from(mu, &cloud, burn_in, samples, seed)
}

pub fn furstenberg_from(
    mu: &FiniteMeasure,
    cloud: &ParticleCloud,
    burn_in: usize,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    if burn_in == 0 || samples == 0 {
        return Err(Error::BadParams("burn_in and samples must be at least 1".into()));
    }
    if mu.dim() != cloud.dim() {
        return Err(Error::DimensionMismatch {
            expected: mu.dim(),
            got: cloud.dim(),
        });
    }
    let sampler = mu.sampler();
    let per_particle: Vec<f64> = cloud
        .points
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let mut rng = stream(seed, &[purpose::MARKOV, i as u64]);
            let mut v = p.rep().to_vec();
            let mut buf = vec![0.0; v.len()];
            let mut acc = 0.0;
            for step in 0..burn_in + samples {
                if step >= burn_in {
                    acc += drift_raw(mu, &v);
                }
                mu.atoms()[sampler.sample(&mut rng)].apply_into(&v, &mut buf);
                std::mem::swap(&mut v, &mut buf);
                normalize_in_place(&mut v);
            }
            acc / samples as f64
        })
        .collect();
    Ok(per_particle.iter().sum::<f64>() / per_particle.len() as f64)
}

/// `Σ w_i (1/d) log|det g_i|`, the common value of all exponents of a
/// conformal measure.
pub fn conformal_exponent(mu: &FiniteMeasure) -> Result<f64> {
    for (atom, g) in mu.atoms().iter().enumerate() {
        let defect = g.conformal_defect();
        if !(defect <= CONFORMAL_TOLERANCE) {
            return Err(Error::NotConformal { atom, defect });
        }
    }
    let d = mu.dim() as f64;
    Ok(mu.expectation(|g| g.det().abs().ln() / d))
}

/// Exact spectrum in the cases where it has a closed form: all atoms
/// diagonal, all atoms conformal, or a single atom.
pub fn reference_spectrum(mu: &FiniteMeasure) -> Result<Vec<f64>> {
    let d = mu.dim();
    if mu.is_diagonal() {
        let mut values: Vec<f64> = (0..d)
            .map(|i| mu.expectation(|g| g.get(i, i).abs().ln()))
            .collect();
        values.sort_by(|a, b| b.total_cmp(a));
        return Ok(values);
    }
    if let Ok(c) = conformal_exponent(mu) {
        return Ok(vec![c; d]);
    }
    if mu.len() == 1 {
        let g = &mu.atoms()[0];
        let m = DMatrix::from_row_slice(d, d, g.entries());
        let mut values: Vec<f64> = m
            .complex_eigenvalues()
            .iter()
            .map(|z| z.norm().ln())
            .collect();
        values.sort_by(|a, b| b.total_cmp(a));
        return Ok(values);
    }
    Err(Error::NoReference)
}
