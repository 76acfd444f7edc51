//! Dense linear algebra for small square matrices (d ≤ 8).
//!
//! Everything here is a pure function of its inputs. Singular values come
//! from one-sided Jacobi rotations, which are accurate to a few ulps relative
//! to each singular value at these sizes.

use std::fmt;

use crate::error::{Error, Result};

/// Smallest admissible ratio `sigma_d / sigma_1` for an invertible element.
pub const INVERTIBILITY_RATIO: f64 = 1e-12;

/// Threshold below which a coordinate is treated as zero when choosing the
/// canonical sign of a projective representative.
pub const SIGN_THRESHOLD: f64 = 1e-12;

/// A square real matrix stored row-major.
///
/// Group elements of GL(d, R) are represented by this type; invertibility is
/// checked by the operations that need it rather than at construction.
#[derive(Clone, PartialEq)]
pub struct Matrix {
    dim: usize,
    data: Vec<f64>,
}

/// Group element alias used throughout the crate.
pub type MatrixElement = Matrix;

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Matrix{}x{}[", self.dim, self.dim)?;
        for i in 0..self.dim {
            if i > 0 {
                write!(f, "; ")?;
            }
            for j in 0..self.dim {
                if j > 0 {
                    write!(f, ", ")?;
                }
                write!(f, "{}", self.get(i, j))?;
            }
        }
        write!(f, "]")
    }
}

impl Matrix {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::DimensionMismatch { expected: 1, got: 0 });
        }
        if data.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                got: data.len(),
            });
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidMeasure("non-finite matrix entry".into()));
        }
        Ok(Self { dim, data })
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let dim = rows.len();
        let mut data = Vec::with_capacity(dim * dim);
        for row in rows {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Self::new(dim, data)
    }

    pub fn identity(dim: usize) -> Self {
        Self::diag(&vec![1.0; dim])
    }

    pub fn diag(entries: &[f64]) -> Self {
        let dim = entries.len();
        let mut data = vec![0.0; dim * dim];
        for (i, &x) in entries.iter().enumerate() {
            data[i * dim + i] = x;
        }
        Self { dim, data }
    }

    /// Rotation by `angle` in the coordinate plane `(p, q)`.
    pub fn plane_rotation(dim: usize, p: usize, q: usize, angle: f64) -> Self {
        let mut m = Self::identity(dim);
        let (s, c) = angle.sin_cos();
        m.set(p, p, c);
        m.set(q, q, c);
        m.set(p, q, -s);
        m.set(q, p, s);
        m
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn entries(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, x: f64) {
        self.data[i * self.dim + j] = x;
    }

    pub fn transpose(&self) -> Self {
        let d = self.dim;
        let mut data = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                data[j * d + i] = self.data[i * d + j];
            }
        }
        Self { dim: d, data }
    }

    pub fn mul(&self, other: &Matrix) -> Result<Self> {
        self.check_dim(other.dim)?;
        let d = self.dim;
        let mut data = vec![0.0; d * d];
        for i in 0..d {
            for k in 0..d {
                let a = self.data[i * d + k];
                if a == 0.0 {
                    continue;
                }
                for j in 0..d {
                    data[i * d + j] += a * other.data[k * d + j];
                }
            }
        }
        Ok(Self { dim: d, data })
    }

    pub fn sub(&self, other: &Matrix) -> Result<Self> {
        self.check_dim(other.dim)?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a - b)
            .collect();
        Ok(Self {
            dim: self.dim,
            data,
        })
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|x| x * s).collect(),
        }
    }

    /// `self · v` for a column vector `v`.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.apply_into(v, &mut out);
        out
    }

    #[inline]
    pub fn apply_into(&self, v: &[f64], out: &mut [f64]) {
        let d = self.dim;
        for (i, o) in out.iter_mut().enumerate().take(d) {
            let row = &self.data[i * d..(i + 1) * d];
            *o = row.iter().zip(v).map(|(a, b)| a * b).sum();
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn is_diagonal(&self, tol: f64) -> bool {
        let d = self.dim;
        let scale = self.max_abs().max(f64::MIN_POSITIVE);
        (0..d).all(|i| (0..d).all(|j| i == j || self.get(i, j).abs() <= tol * scale))
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim).map(|i| self.get(i, i)).collect()
    }

    /// All singular values, sorted non-increasing, with no invertibility check.
    pub fn singular_values_unchecked(&self) -> Vec<f64> {
        jacobi_singular_values(self.dim, self.dim, &self.data)
    }

    /// Operator (spectral) norm, `sigma_1`.
    pub fn op_norm(&self) -> f64 {
        self.singular_values_unchecked()[0]
    }

    /// Operator-norm distance `‖self − other‖`.
    pub fn distance(&self, other: &Matrix) -> Result<f64> {
        Ok(self.sub(other)?.op_norm())
    }

    pub fn singular_values(&self) -> Result<SingularSpectrum> {
        let values = self.singular_values_unchecked();
        check_invertible(&values)?;
        Ok(SingularSpectrum { values })
    }

    pub fn ensure_invertible(&self) -> Result<()> {
        check_invertible(&self.singular_values_unchecked())
    }

    pub fn norms(&self) -> Result<MatrixNorms> {
        let s = self.singular_values()?;
        let opnorm = s.values[0];
        let invnorm = 1.0 / s.values[self.dim - 1];
        Ok(MatrixNorms {
            opnorm,
            invnorm,
            n: opnorm.max(invnorm),
        })
    }

    /// Determinant by Gaussian elimination with partial pivoting.
    pub fn det(&self) -> f64 {
        determinant(self.dim, self.data.clone())
    }

    /// `sigma_1/sigma_d − 1`; zero exactly for scalar multiples of orthogonal matrices.
    pub fn conformal_defect(&self) -> f64 {
        let s = self.singular_values_unchecked();
        let last = s[self.dim - 1];
        if last <= 0.0 {
            return f64::INFINITY;
        }
        s[0] / last - 1.0
    }

    /// Matrix of the k-th exterior power in the lexicographic basis
    /// `e_{i1} ∧ … ∧ e_{ik}`, `i1 < … < ik`. Entries are the k×k minors.
    pub fn wedge_power(&self, k: usize) -> Result<Matrix> {
        let d = self.dim;
        if k == 0 || k > d {
            return Err(Error::BadOrder { k, dim: d });
        }
        let combos = combinations(d, k);
        let n = combos.len();
        let mut data = vec![0.0; n * n];
        let mut minor = vec![0.0; k * k];
        for (r, rows) in combos.iter().enumerate() {
            for (c, cols) in combos.iter().enumerate() {
                for (a, &i) in rows.iter().enumerate() {
                    for (b, &j) in cols.iter().enumerate() {
                        minor[a * k + b] = self.get(i, j);
                    }
                }
                data[r * n + c] = determinant(k, minor.clone());
            }
        }
        Ok(Matrix { dim: n, data })
    }

    fn check_dim(&self, other: usize) -> Result<()> {
        if self.dim != other {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: other,
            });
        }
        Ok(())
    }
}

fn check_invertible(values: &[f64]) -> Result<()> {
    let first = values[0];
    let last = values[values.len() - 1];
    let ratio = if first > 0.0 { last / first } else { 0.0 };
    if !(ratio > INVERTIBILITY_RATIO) {
        return Err(Error::SingularMatrix { ratio });
    }
    Ok(())
}

/// Singular values, all positive and sorted non-increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct SingularSpectrum {
    pub values: Vec<f64>,
}

/// `(‖g‖, ‖g⁻¹‖, N(g) = max of the two)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatrixNorms {
    pub opnorm: f64,
    pub invnorm: f64,
    pub n: f64,
}

pub fn singular_values(g: &Matrix) -> Result<SingularSpectrum> {
    g.singular_values()
}

pub fn matrix_norms(g: &Matrix) -> Result<MatrixNorms> {
    g.norms()
}

pub fn wedge_power(g: &Matrix, k: usize) -> Result<Matrix> {
    g.wedge_power(k)
}

/// One-sided Jacobi (Hestenes) on the columns of a `rows × cols` matrix.
fn jacobi_singular_values(rows: usize, cols: usize, data: &[f64]) -> Vec<f64> {
    // column-major working copy
    let mut u = vec![0.0; rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            u[j * rows + i] = data[i * cols + j];
        }
    }
    for _sweep in 0..60 {
        let mut rotated = false;
        for p in 0..cols {
            for q in (p + 1)..cols {
                let (mut alpha, mut beta, mut gamma) = (0.0, 0.0, 0.0);
                for i in 0..rows {
                    let a = u[p * rows + i];
                    let b = u[q * rows + i];
                    alpha += a * a;
                    beta += b * b;
                    gamma += a * b;
                }
                if gamma == 0.0 || gamma.abs() <= 1e-15 * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..rows {
                    let a = u[p * rows + i];
                    let b = u[q * rows + i];
                    u[p * rows + i] = c * a - s * b;
                    u[q * rows + i] = s * a + c * b;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut values: Vec<f64> = (0..cols)
        .map(|j| {
            u[j * rows..(j + 1) * rows]
                .iter()
                .map(|x| x * x)
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    values.sort_by(|a, b| b.total_cmp(a));
    values
}

pub(crate) fn determinant(n: usize, mut a: Vec<f64>) -> f64 {
    let mut det = 1.0;
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&x, &y| a[x * n + col].abs().total_cmp(&a[y * n + col].abs()))
            .unwrap();
        let p = a[pivot * n + col];
        if p == 0.0 {
            return 0.0;
        }
        if pivot != col {
            for j in 0..n {
                a.swap(col * n + j, pivot * n + j);
            }
            det = -det;
        }
        det *= p;
        for r in (col + 1)..n {
            let f = a[r * n + col] / p;
            if f != 0.0 {
                for j in col..n {
                    a[r * n + j] -= f * a[col * n + j];
                }
            }
        }
    }
    det
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
pub(crate) fn solve_linear(n: usize, mut a: Vec<f64>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let scale = a.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&x, &y| a[x * n + col].abs().total_cmp(&a[y * n + col].abs()))
            .unwrap();
        if a[pivot * n + col].abs() <= 1e-13 * scale {
            return None;
        }
        if pivot != col {
            for j in 0..n {
                a.swap(col * n + j, pivot * n + j);
            }
            b.swap(col, pivot);
        }
        let p = a[col * n + col];
        for r in (col + 1)..n {
            let f = a[r * n + col] / p;
            if f != 0.0 {
                for j in col..n {
                    a[r * n + j] -= f * a[col * n + j];
                }
                b[r] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = ((i + 1)..n).map(|j| a[i * n + j] * x[j]).sum();
        x[i] = (b[i] - s) / a[i * n + i];
    }
    Some(x)
}

/// Index tuples `i1 < … < ik` of `0..d` in lexicographic order.
pub fn combinations(d: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..k).collect();
    if k > d {
        return out;
    }
    loop {
        out.push(cur.clone());
        let mut i = k;
        while i > 0 && cur[i - 1] == d - k + i - 1 {
            i -= 1;
        }
        if i == 0 {
            break;
        }
        cur[i - 1] += 1;
        for t in i..k {
            cur[t] = cur[t - 1] + 1;
        }
    }
    out
}

pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

/// Orthonormalizes the columns of a column-major `d × d` frame in place
/// (Gram–Schmidt with one reorthogonalization pass) and writes the positive
/// diagonal of the triangular factor into `r_diag`.
pub(crate) fn orthonormalize_columns(d: usize, cols: &mut [f64], r_diag: &mut [f64]) {
    for k in 0..d {
        for _pass in 0..2 {
            for i in 0..k {
                let (head, tail) = cols.split_at_mut(k * d);
                let qi = &head[i * d..(i + 1) * d];
                let v = &mut tail[..d];
                let r: f64 = qi.iter().zip(v.iter()).map(|(a, b)| a * b).sum();
                for (x, q) in v.iter_mut().zip(qi) {
                    *x -= r * q;
                }
            }
        }
        let v = &mut cols[k * d..(k + 1) * d];
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        r_diag[k] = norm;
        for x in v.iter_mut() {
            *x /= norm;
        }
    }
}

/// A point of the real projective space, stored as its canonical unit
/// representative: norm one and first significant coordinate positive.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectivePoint {
    rep: Vec<f64>,
}

impl ProjectivePoint {
    pub fn new(v: &[f64]) -> Result<Self> {
        if v.is_empty() {
            return Err(Error::DimensionMismatch { expected: 1, got: 0 });
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::BadParams("projective point needs a nonzero finite vector".into()));
        }
        let mut rep: Vec<f64> = v.iter().map(|x| x / norm).collect();
        canonicalize(&mut rep);
        Ok(Self { rep })
    }

    /// Basis vector `e_i` of R^dim.
    pub fn axis(dim: usize, i: usize) -> Self {
        let mut rep = vec![0.0; dim];
        rep[i] = 1.0;
        Self { rep }
    }

    /// Normalized all-ones vector.
    pub fn barycenter(dim: usize) -> Self {
        Self {
            rep: vec![1.0 / (dim as f64).sqrt(); dim],
        }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.rep.len()
    }

    #[inline]
    pub fn rep(&self) -> &[f64] {
        &self.rep
    }

    /// `|sin ∠(u, v)| = ‖u ∧ v‖` for the unit representatives.
    pub fn distance(&self, other: &ProjectivePoint) -> Result<f64> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: other.dim(),
            });
        }
        Ok(wedge_norm(&self.rep, &other.rep).min(1.0))
    }

    /// `[g v]`.
    pub fn act(&self, g: &Matrix) -> Result<ProjectivePoint> {
        if g.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: g.dim(),
            });
        }
        ProjectivePoint::new(&g.apply(&self.rep))
    }
}

pub fn projective_distance(x: &ProjectivePoint, y: &ProjectivePoint) -> Result<f64> {
    x.distance(y)
}

pub fn act(g: &Matrix, x: &ProjectivePoint) -> Result<ProjectivePoint> {
    x.act(g)
}

/// `‖u ∧ v‖ / (‖u‖ ‖v‖)` computed from the 2×2 minors, which keeps full
/// relative accuracy for nearly parallel vectors.
pub(crate) fn wedge_norm(u: &[f64], v: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..u.len() {
        for j in (i + 1)..u.len() {
            let m = u[i] * v[j] - u[j] * v[i];
            s += m * m;
        }
    }
    let nu = u.iter().map(|x| x * x).sum::<f64>();
    let nv = v.iter().map(|x| x * x).sum::<f64>();
    (s / (nu * nv)).sqrt()
}

pub(crate) fn canonicalize(rep: &mut [f64]) {
    if let Some(first) = rep.iter().find(|x| x.abs() > SIGN_THRESHOLD) {
        if *first < 0.0 {
            for x in rep.iter_mut() {
                *x = -*x;
            }
        }
    }
}

/// Normalizes `v` in place and returns the log of its former norm.
#[inline]
pub(crate) fn normalize_in_place(v: &mut [f64]) -> f64 {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    for x in v.iter_mut() {
        *x /= norm;
    }
    norm.ln()
}
