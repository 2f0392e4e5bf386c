//! Dense linear algebra for the small (k ≤ 8) complex blocks that make up
//! block-Jacobi coefficients.
//!
//! Hermitian eigenproblems are solved with cyclic Jacobi rotations. Matrix
//! square roots go through a complex Schur form followed by the triangular
//! square-root recurrence, which keeps non-Hermitian inputs (products such as
//! `D_{n+1} R_n`) on the same code path as Hermitian ones.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type SmallMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Maximum Hermiticity defect accepted by [`hermitian_eigen`], relative to `max(1, ‖M‖_max)`.
pub const HERMITIAN_TOL: f64 = 1e-12;
/// Largest 1-norm condition number accepted by [`invert`].
pub const MAX_CONDITION: f64 = 1e12;

const JACOBI_OFF_TOL: f64 = 1e-14;
const JACOBI_MAX_SWEEPS: usize = 100;
/// An eigenvalue whose imaginary part is below this (relative) threshold is
/// treated as lying on the real axis when choosing a square-root branch.
const CUT_TOL: f64 = 1e-12;
const ZERO_TOL: f64 = 1e-14;

#[derive(Debug, Clone)]
pub struct EigenPair {
    /// Ascending.
    pub values: Vec<f64>,
    /// Orthonormal eigenvectors stored as columns, ordered like `values`.
    pub vectors: SmallMatrix,
}

impl EigenPair {
    pub fn reconstruct(&self) -> SmallMatrix {
        let diag = SmallMatrix::from_diagonal(&CVector::from_iterator(
            self.values.len(),
            self.values.iter().map(|&v| Complex64::new(v, 0.0)),
        ));
        &self.vectors * diag * self.vectors.adjoint()
    }
}

/// Branch used for eigenvalues on the closed negative real axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SqrtBranch {
    /// Reject any eigenvalue in `(-inf, 0]`.
    Principal,
    /// Map a negative real eigenvalue `-x` to `+i sqrt(x)` (the limit from the
    /// upper half plane). Zero is still rejected.
    UpperCut,
}

pub fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

pub fn identity(k: usize) -> SmallMatrix {
    SmallMatrix::identity(k, k)
}

pub fn zeros(k: usize) -> SmallMatrix {
    SmallMatrix::zeros(k, k)
}

pub fn scalar(k: usize, value: f64) -> SmallMatrix {
    identity(k) * c(value)
}

/// Build a complex matrix from real row-major data.
pub fn from_real_rows(rows: &[&[f64]]) -> SmallMatrix {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, |r| r.len());
    SmallMatrix::from_fn(nrows, ncols, |i, j| c(rows[i][j]))
}

pub fn max_norm(m: &SmallMatrix) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

pub fn vec_max_norm(v: &CVector) -> f64 {
    v.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

/// `‖M − M†‖_max`
pub fn hermitian_defect(m: &SmallMatrix) -> f64 {
    max_norm(&(m - m.adjoint()))
}

/// `‖M + M†‖_max`
pub fn anti_hermitian_defect(m: &SmallMatrix) -> f64 {
    max_norm(&(m + m.adjoint()))
}

/// Largest imaginary part or asymmetry, i.e. distance from a real symmetric matrix.
pub fn real_symmetric_defect(m: &SmallMatrix) -> f64 {
    let imag = m.iter().fold(0.0_f64, |acc, z| acc.max(z.im.abs()));
    imag.max(max_norm(&(m - m.transpose())))
}

pub fn commutator(a: &SmallMatrix, b: &SmallMatrix) -> SmallMatrix {
    a * b - b * a
}

fn ensure_square(m: &SmallMatrix) -> Result<usize> {
    if m.nrows() != m.ncols() {
        return Err(Error::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    Ok(m.nrows())
}

fn norm1(m: &SmallMatrix) -> f64 {
    (0..m.ncols())
        .map(|j| m.column(j).iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Eigendecomposition of a Hermitian matrix by cyclic Jacobi rotations.
///
/// Works for any size; callers that materialize large finite sections are
/// expected to apply their own size limit.
pub fn hermitian_eigen(m: &SmallMatrix) -> Result<EigenPair> {
    let k = ensure_square(m)?;
    let defect = hermitian_defect(m);
    if defect > HERMITIAN_TOL * max_norm(m).max(1.0) {
        return Err(Error::NotHermitian { defect });
    }
    let mut a = (m + m.adjoint()) * c(0.5);
    let mut v = identity(k);
    let scale = a.norm().max(f64::MIN_POSITIVE);

    for _ in 0..JACOBI_MAX_SWEEPS {
        if off_diagonal_mass(&a) <= JACOBI_OFF_TOL * scale {
            break;
        }
        for p in 0..k {
            for q in (p + 1)..k {
                rotate(&mut a, &mut v, p, q);
            }
        }
    }

    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| a[(i, i)].re.total_cmp(&a[(j, j)].re));
    let values = order.iter().map(|&i| a[(i, i)].re).collect();
    let vectors = SmallMatrix::from_fn(k, k, |r, col| v[(r, order[col])]);
    Ok(EigenPair { values, vectors })
}

fn off_diagonal_mass(a: &SmallMatrix) -> f64 {
    let mut sum = 0.0;
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            if i != j {
                sum += a[(i, j)].norm_sqr();
            }
        }
    }
    sum.sqrt()
}

/// One unitary rotation annihilating `a[(p, q)]`; accumulates into `v`.
fn rotate(a: &mut SmallMatrix, v: &mut SmallMatrix, p: usize, q: usize) {
    let apq = a[(p, q)];
    let mag = apq.norm();
    if mag == 0.0 {
        return;
    }
    let phase = apq / mag;
    let app = a[(p, p)].re;
    let aqq = a[(q, q)].re;
    let theta = (aqq - app) / (2.0 * mag);
    let t = if theta >= 0.0 {
        1.0 / (theta + (theta * theta + 1.0).sqrt())
    } else {
        -1.0 / (-theta + (theta * theta + 1.0).sqrt())
    };
    let cs = 1.0 / (t * t + 1.0).sqrt();
    let sn = t * cs;

    // G = diag(1, conj(phase)) * [[c, s], [-s, c]] restricted to (p, q)
    let gpp = c(cs);
    let gpq = c(sn);
    let gqp = -phase.conj() * sn;
    let gqq = phase.conj() * cs;

    let n = a.nrows();
    // A <- A G
    for r in 0..n {
        let arp = a[(r, p)];
        let arq = a[(r, q)];
        a[(r, p)] = arp * gpp + arq * gqp;
        a[(r, q)] = arp * gpq + arq * gqq;
    }
    // A <- G† A
    for col in 0..n {
        let apc = a[(p, col)];
        let aqc = a[(q, col)];
        a[(p, col)] = gpp.conj() * apc + gqp.conj() * aqc;
        a[(q, col)] = gpq.conj() * apc + gqq.conj() * aqc;
    }
    a[(p, q)] = Complex64::new(0.0, 0.0);
    a[(q, p)] = Complex64::new(0.0, 0.0);
    a[(p, p)].im = 0.0;
    a[(q, q)].im = 0.0;
    // V <- V G
    for r in 0..n {
        let vrp = v[(r, p)];
        let vrq = v[(r, q)];
        v[(r, p)] = vrp * gpp + vrq * gqp;
        v[(r, q)] = vrp * gpq + vrq * gqq;
    }
}

/// Scalar square root of an eigenvalue under the given branch. `scale` sets
/// the magnitude below which the eigenvalue counts as zero or as real.
pub fn branch_sqrt(z: Complex64, branch: SqrtBranch, scale: f64) -> Result<Complex64> {
    let scale = scale.max(z.norm()).max(f64::MIN_POSITIVE);
    let cut = Error::BranchCut {
        eigenvalue: z,
        index: None,
    };
    if z.norm() <= ZERO_TOL * scale {
        return Err(cut);
    }
    if z.re < 0.0 && z.im.abs() <= CUT_TOL * scale {
        return match branch {
            SqrtBranch::Principal => Err(cut),
            SqrtBranch::UpperCut => Ok(Complex64::new(0.0, (-z.re).sqrt())),
        };
    }
    Ok(z.sqrt())
}

/// Principal square root: `S·S = M` with the spectrum of `S` in the open right
/// half plane. Fails with [`Error::BranchCut`] if `M` has an eigenvalue on
/// `(-inf, 0]`.
pub fn principal_sqrt(m: &SmallMatrix) -> Result<SmallMatrix> {
    matrix_sqrt(m, SqrtBranch::Principal)
}

pub fn matrix_sqrt(m: &SmallMatrix, branch: SqrtBranch) -> Result<SmallMatrix> {
    let k = ensure_square(m)?;
    let scale = max_norm(m);
    if k == 0 {
        return Ok(m.clone());
    }

    if hermitian_defect(m) <= 1e-15 * scale.max(1.0) {
        let eig = hermitian_eigen(m)?;
        let roots = eig
            .values
            .iter()
            .map(|&l| branch_sqrt(c(l), branch, scale))
            .collect::<Result<Vec<_>>>()?;
        let diag = SmallMatrix::from_diagonal(&CVector::from_vec(roots));
        return Ok(&eig.vectors * diag * eig.vectors.adjoint());
    }

    let (q, t) = m.clone().schur().unpack();
    let mut r = zeros(k);
    for i in 0..k {
        r[(i, i)] = branch_sqrt(t[(i, i)], branch, scale)?;
    }
    for j in 1..k {
        for i in (0..j).rev() {
            let mut acc = t[(i, j)];
            for l in (i + 1)..j {
                acc -= r[(i, l)] * r[(l, j)];
            }
            let denom = r[(i, i)] + r[(j, j)];
            if denom.norm() <= ZERO_TOL * scale.sqrt().max(f64::MIN_POSITIVE) {
                return Err(Error::BranchCut {
                    eigenvalue: t[(i, i)],
                    index: None,
                });
            }
            r[(i, j)] = acc / denom;
        }
    }
    Ok(&q * r * q.adjoint())
}

/// Inverse with a 1-norm condition check.
pub fn invert(m: &SmallMatrix) -> Result<SmallMatrix> {
    ensure_square(m)?;
    let inv = m.clone().try_inverse().ok_or(Error::Singular {
        condition: f64::INFINITY,
        index: None,
    })?;
    let condition = norm1(m) * norm1(&inv);
    if !condition.is_finite() || condition > MAX_CONDITION {
        return Err(Error::Singular { condition, index: None });
    }
    Ok(inv)
}
