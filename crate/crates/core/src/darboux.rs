//! Darboux transformation of a step-1 block-Jacobi operator.
//!
//! Everything here is indexed along a step-1 chain. Step-2 chains such as the
//! free particle in the oscillator basis are handled by passing one parity
//! subchain at a time (see [`crate::hermite2ch`]).
//!
//! Given a transformation function `U_n` solving
//! `D_{n+1}U_{n+1} + D_n U_{n-1} + Q_n U_n = U_n Λ`, the intertwiner
//! `(LΨ)_n = A_{n+1}Ψ_{n+1} + B_nΨ_n` and the transformed blocks `D̃_n`, `Q̃_n`
//! are built either through the general recursion for `A_n` or through the
//! closed forms available for the two-channel special form
//! `U_n = [[u1, -u2], [u1, u2]]`.
//!
//! Square roots of matrices whose spectrum sits on the negative real axis
//! (e.g. `U_{n-1}U_n^{-1}` for nodeless seeds with alternating sign) use
//! [`SqrtBranch::UpperCut`], which makes `A_n` and `B_n` anti-Hermitian.

use num_complex::Complex64;

use crate::blockjacobi::BlockJacobiOperator;
use crate::error::{Error, Result};
use crate::seeds::{ScalarChain, SeedSolution, SeedValue};
use crate::smallmat::{self, c, invert, matrix_sqrt, max_norm, principal_sqrt, SmallMatrix, SqrtBranch};

/// `|Δ_n|` below this is reported as a node.
pub const DELTA_FLOOR: f64 = 1e-300;

/// `Λ = diag(λ_i)` together with the matrix solution `U_n` (columns are seed solutions).
#[derive(Debug, Clone)]
pub struct TransformationFunction {
    pub lambda: Vec<f64>,
    u: Vec<SmallMatrix>,
    u_inv: Vec<SmallMatrix>,
}

impl TransformationFunction {
    pub fn new(lambda: Vec<f64>, u: Vec<SmallMatrix>) -> Result<Self> {
        let u_inv = u
            .iter()
            .enumerate()
            .map(|(n, m)| invert(m).map_err(|e| e.at(n)))
            .collect::<Result<Vec<_>>>()?;
        Ok(TransformationFunction { lambda, u, u_inv })
    }

    /// Solve the matrix recurrence forward from `U_0` (with `D_0 = 0`).
    pub fn from_recurrence(op: &BlockJacobiOperator, lambda: Vec<f64>, u0: SmallMatrix, len: usize) -> Result<Self> {
        let big_lambda = diag(&lambda);
        let mut u: Vec<SmallMatrix> = vec![u0];
        for n in 0..len.saturating_sub(1) {
            let mut rhs = &u[n] * &big_lambda - op.q(n) * &u[n];
            if n >= 1 {
                rhs -= op.d(n) * &u[n - 1];
            }
            let dinv = invert(op.d(n + 1)).map_err(|e| e.at(n + 1))?;
            u.push(dinv * rhs);
        }
        TransformationFunction::new(lambda, u)
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    pub fn k(&self) -> usize {
        self.lambda.len()
    }

    pub fn u(&self, n: usize) -> &SmallMatrix {
        &self.u[n]
    }

    pub fn u_inv(&self, n: usize) -> &SmallMatrix {
        &self.u_inv[n]
    }

    pub fn lambda_matrix(&self) -> SmallMatrix {
        diag(&self.lambda)
    }

    /// `U_a U_b^{-1}`
    pub fn ratio(&self, a: usize, b: usize) -> SmallMatrix {
        &self.u[a] * &self.u_inv[b]
    }
}

fn diag(values: &[f64]) -> SmallMatrix {
    SmallMatrix::from_fn(
        values.len(),
        values.len(),
        |i, j| {
            if i == j {
                c(values[i])
            } else {
                c(0.0)
            }
        },
    )
}

/// Two-channel transformation function `U_n = [[u1, -u2], [u1, u2]]` with the
/// closed-form inverse `Δ_n^{-1} [[u2, u2], [-u1, u1]]`, `Δ_n = 2 u1 u2`.
pub fn build_u2(seed1: &SeedSolution, seed2: &SeedSolution) -> Result<TransformationFunction> {
    if seed1.step != seed2.step || seed1.offset != seed2.offset {
        return Err(Error::Unsupported(
            "seeds must live on the same chain and parity".into(),
        ));
    }
    for lambda in [seed1.lambda, seed2.lambda] {
        if !(lambda < 0.0) {
            return Err(Error::InvalidEnergy { lambda });
        }
    }
    let len = seed1.len().min(seed2.len());
    let mut u = Vec::with_capacity(len);
    let mut u_inv = Vec::with_capacity(len);
    for m in 0..len {
        let n = seed1.step * m + seed1.offset;
        let a = seed1.chain_values()[m].to_complex();
        let b = seed2.chain_values()[m].to_complex();
        let delta = a * b * 2.0;
        if a.norm() == 0.0 || b.norm() == 0.0 || delta.norm() < DELTA_FLOOR {
            return Err(Error::NodeFailure { index: n });
        }
        u.push(SmallMatrix::from_row_slice(2, 2, &[a, -b, a, b]));
        u_inv.push(SmallMatrix::from_row_slice(2, 2, &[b, b, -a, a]) / delta);
    }
    Ok(TransformationFunction {
        lambda: vec![seed1.lambda, seed2.lambda],
        u,
        u_inv,
    })
}

/// `A_n` (with `A_0 = 0`) and `B_n`, defining `(LΨ)_n = A_{n+1}Ψ_{n+1} + B_nΨ_n`.
///
/// Holds `B_0..B_{len-1}` and `A_0..A_len`.
#[derive(Debug, Clone)]
pub struct IntertwinerCoefficients {
    pub a: Vec<SmallMatrix>,
    pub b: Vec<SmallMatrix>,
}

impl IntertwinerCoefficients {
    pub fn len(&self) -> usize {
        self.b.len()
    }

    pub fn is_empty(&self) -> bool {
        self.b.is_empty()
    }

    pub fn k(&self) -> usize {
        self.b.first().map_or(0, |m| m.nrows())
    }

    /// Worst `‖X + X†‖_max` over all `A_n`, `B_n`.
    pub fn anti_hermitian_defect(&self) -> f64 {
        self.a
            .iter()
            .chain(&self.b)
            .map(smallmat::anti_hermitian_defect)
            .fold(0.0, f64::max)
    }
}

/// Transformed blocks `D̃_n`, `Q̃_n` next to the initial `D_n`, `Q_n`.
#[derive(Debug, Clone)]
pub struct TransformedCoefficients {
    pub dt: Vec<SmallMatrix>,
    pub qt: Vec<SmallMatrix>,
    d: Vec<SmallMatrix>,
    q: Vec<SmallMatrix>,
}

impl TransformedCoefficients {
    pub fn len(&self) -> usize {
        self.dt.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dt.is_empty()
    }

    /// `G_n = D̃_n − D_n`
    pub fn g(&self, n: usize) -> SmallMatrix {
        &self.dt[n] - &self.d[n]
    }

    /// `R_n = Q̃_n − Q_n`
    pub fn r(&self, n: usize) -> SmallMatrix {
        &self.qt[n] - &self.q[n]
    }

    /// The transformed operator `H_1` (step 1).
    pub fn operator(&self) -> BlockJacobiOperator {
        BlockJacobiOperator::from_blocks_unchecked(1, self.dt.clone(), self.qt.clone())
    }
}

/// Closed-form entries of the two-channel blocks
/// `D̃_n = [[a+, a-], [a-, a+]]`, `Q̃_n − Q_n = [[b+, b-], [b-, b+]]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AbValues {
    pub a_plus: f64,
    pub a_minus: f64,
    pub b_plus: f64,
    pub b_minus: f64,
}

/// Scalar data of the two-channel special form, by subchain index.
#[derive(Debug, Clone)]
struct SeedPair {
    d: Vec<f64>,
    u1: Vec<SeedValue>,
    u2: Vec<SeedValue>,
}

#[derive(Debug, Clone)]
pub struct Darboux {
    op: BlockJacobiOperator,
    tf: TransformationFunction,
    pair: Option<SeedPair>,
}

impl Darboux {
    /// General path: any step-1 operator and any transformation function.
    pub fn new(op: BlockJacobiOperator, tf: TransformationFunction) -> Result<Self> {
        if op.step() != 1 {
            return Err(Error::Unsupported(
                "Darboux construction runs on step-1 chains; pass a parity subchain".into(),
            ));
        }
        if op.k() != tf.k() {
            return Err(Error::DimensionMismatch {
                expected: op.k(),
                found: tf.k(),
            });
        }
        if op.len() < tf.len() {
            return Err(Error::OutOfRange {
                index: tf.len(),
                len: op.len(),
            });
        }
        Ok(Darboux { op, tf, pair: None })
    }

    /// Two-channel construction with `D_n = d_n I`, `Q_n = q_n I` from two
    /// scalar seeds on the same parity class of `chain`.
    pub fn two_channel(chain: &ScalarChain, seed1: &SeedSolution, seed2: &SeedSolution) -> Result<Self> {
        let tf = build_u2(seed1, seed2)?;
        let sub = if chain.step() == 1 {
            chain.clone()
        } else {
            chain.subchain(seed1.offset)
        };
        let len = tf.len();
        let op = BlockJacobiOperator::from_scalar_chain(&sub, 2, len);
        let pair = SeedPair {
            d: (0..len).map(|m| sub.d(m)).collect(),
            u1: seed1.chain_values()[..len].to_vec(),
            u2: seed2.chain_values()[..len].to_vec(),
        };
        Ok(Darboux {
            op,
            tf,
            pair: Some(pair),
        })
    }

    pub fn op(&self) -> &BlockJacobiOperator {
        &self.op
    }

    pub fn tf(&self) -> &TransformationFunction {
        &self.tf
    }

    pub fn k(&self) -> usize {
        self.op.k()
    }

    /// Number of sites with a transformation function value.
    pub fn len(&self) -> usize {
        self.tf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tf.is_empty()
    }

    fn need(&self, n: usize) -> Result<()> {
        if n >= self.len() {
            return Err(Error::OutOfRange {
                index: n,
                len: self.len(),
            });
        }
        Ok(())
    }

    /// `σ_n = −U_{n+1} U_n^{-1}`
    pub fn sigma(&self, n: usize) -> Result<SmallMatrix> {
        self.need(n + 1)?;
        Ok(-self.tf.ratio(n + 1, n))
    }

    /// `(ω_n, π_n, Δ_n)` of the two-channel form, where
    /// `σ_n = −Δ_n^{-1} [[ω_n, π_n], [π_n, ω_n]]`.
    pub fn sigma_parts(&self, n: usize) -> Result<(Complex64, Complex64, Complex64)> {
        self.need(n + 1)?;
        let pair = self.pair()?;
        let (a0, a1) = (pair.u1[n].to_complex(), pair.u1[n + 1].to_complex());
        let (b0, b1) = (pair.u2[n].to_complex(), pair.u2[n + 1].to_complex());
        Ok((a1 * b0 + a0 * b1, a1 * b0 - a0 * b1, a0 * b0 * 2.0))
    }

    fn pair(&self) -> Result<&SeedPair> {
        self.pair
            .as_ref()
            .ok_or_else(|| Error::Unsupported("closed forms need the two-channel special form".into()))
    }

    /// `U_nΛU_n^{-1}`; constant in `n` for the two-channel form.
    pub fn lambda_tilde(&self, n: usize) -> SmallMatrix {
        self.tf.u(n) * self.tf.lambda_matrix() * self.tf.u_inv(n)
    }

    /// Relative residual of `D_{n+1}U_{n+1} + D_nU_{n-1} + Q_nU_n − U_nΛ`.
    pub fn u_equation_residual(&self, n: usize) -> Result<f64> {
        self.need(n + 1)?;
        let u = |m: usize| self.tf.u(m);
        let t1 = self.op.d(n + 1) * u(n + 1);
        let t2 = if n >= 1 {
            self.op.d(n) * u(n - 1)
        } else {
            smallmat::zeros(self.k())
        };
        let t3 = self.op.q(n) * u(n);
        let rhs = u(n) * self.tf.lambda_matrix();
        let scale = [&t1, &t2, &t3, &rhs].iter().map(|m| max_norm(m)).fold(0.0, f64::max);
        Ok(max_norm(&(t1 + t2 + t3 - rhs)) / scale.max(f64::MIN_POSITIVE))
    }

    /// Max-norm of the matrix Riccati-type difference equation
    /// `Q_{n+1} − D_{n+2}σ_{n+1} − D_{n+1}σ_n^{-1} − σ_n(Q_n − D_{n+1}σ_n − D_nσ_{n-1}^{-1})σ_n^{-1}`.
    pub fn riccati_residual(&self, n: usize) -> Result<f64> {
        let prev = if n >= 1 { Some(self.sigma(n - 1)?) } else { None };
        riccati_residual_with(&self.op, prev.as_ref(), &self.sigma(n)?, &self.sigma(n + 1)?, n)
    }

    /// `R_n = σ_n D_n σ_{n-1}^{-1}`, `n ≥ 1`.
    pub fn general_r(&self, n: usize) -> Result<SmallMatrix> {
        if n == 0 {
            return Err(Error::OutOfRange { index: 0, len: 0 });
        }
        let prev_inv = invert(&self.sigma(n - 1)?).map_err(|e| e.at(n - 1))?;
        Ok(self.sigma(n)? * self.op.d(n) * prev_inv)
    }

    /// Default normalization of `A_1`: the closed form evaluated at `n = 1`.
    pub fn default_a1(&self) -> Result<SmallMatrix> {
        self.closed_a(1)
    }

    /// General recursion `A_{n+1} = A_n (D_{n+1}R_n)^{1/2} R_n^{-1}` from `A_1`,
    /// with `B_n = A_{n+1}σ_n`. Produces `B_0..B_{count-1}`.
    pub fn a_recursion(&self, a1: SmallMatrix, count: usize) -> Result<IntertwinerCoefficients> {
        self.need(count)?;
        let mut a = vec![smallmat::zeros(self.k()), a1];
        for n in 1..count {
            let r = self.general_r(n)?;
            let root = principal_sqrt(&(self.op.d(n + 1) * &r)).map_err(|e| e.at(n))?;
            let r_inv = invert(&r).map_err(|e| e.at(n))?;
            let next = &a[n] * root * r_inv;
            a.push(next);
        }
        let b = (0..count)
            .map(|n| Ok(&a[n + 1] * self.sigma(n)?))
            .collect::<Result<Vec<_>>>()?;
        Ok(IntertwinerCoefficients { a, b })
    }

    /// `A_n = D_n^{1/2} (U_{n-1}U_n^{-1})^{1/2}`, `A_0 = 0`.
    pub fn closed_a(&self, n: usize) -> Result<SmallMatrix> {
        self.need(n)?;
        if n == 0 {
            return Ok(smallmat::zeros(self.k()));
        }
        let droot = principal_sqrt(self.op.d(n)).map_err(|e| e.at(n))?;
        let uroot = matrix_sqrt(&self.tf.ratio(n - 1, n), SqrtBranch::UpperCut).map_err(|e| e.at(n))?;
        Ok(droot * uroot)
    }

    /// `B_n = −D_{n+1}^{1/2} [(U_nU_{n+1}^{-1})^{1/2}]^{-1}`.
    ///
    /// Off the branch cut this is `−D_{n+1}^{1/2}(U_{n+1}U_n^{-1})^{1/2}`; written
    /// through the root of `U_nU_{n+1}^{-1}` it satisfies `B_n = A_{n+1}σ_n`
    /// on the cut as well.
    pub fn closed_b(&self, n: usize) -> Result<SmallMatrix> {
        self.need(n + 1)?;
        let droot = principal_sqrt(self.op.d(n + 1)).map_err(|e| e.at(n + 1))?;
        let uroot = matrix_sqrt(&self.tf.ratio(n, n + 1), SqrtBranch::UpperCut).map_err(|e| e.at(n))?;
        Ok(-(droot * invert(&uroot).map_err(|e| e.at(n))?))
    }

    /// Closed-form `A_0..A_count`, `B_0..B_{count-1}`.
    pub fn closed_coefficients(&self, count: usize) -> Result<IntertwinerCoefficients> {
        self.need(count)?;
        let a = (0..=count).map(|n| self.closed_a(n)).collect::<Result<Vec<_>>>()?;
        let b = (0..count).map(|n| self.closed_b(n)).collect::<Result<Vec<_>>>()?;
        Ok(IntertwinerCoefficients { a, b })
    }

    /// Matrix-function path:
    /// `D̃_n = (D_nD_{n+1}U_{n-1}U_n^{-1}U_{n+1}U_n^{-1})^{1/2}` (principal root),
    /// `Q̃_n = Q_n − D_{n+1}U_nU_{n+1}^{-1} + D_nU_{n-1}U_n^{-1}`.
    pub fn transformed_coeffs(&self, n: usize) -> Result<(SmallMatrix, SmallMatrix)> {
        self.need(n + 1)?;
        let k = self.k();
        let mut qt = self.op.q(n) - self.op.d(n + 1) * self.tf.ratio(n, n + 1);
        if n == 0 {
            return Ok((smallmat::zeros(k), qt));
        }
        qt += self.op.d(n) * self.tf.ratio(n - 1, n);
        let prod = self.op.d(n) * self.op.d(n + 1) * self.tf.ratio(n - 1, n) * self.tf.ratio(n + 1, n);
        let dt = principal_sqrt(&prod).map_err(|e| e.at(n))?;
        Ok((dt, qt))
    }

    /// [`Self::transformed_coeffs`] for `n = 0..count`.
    pub fn transformed(&self, count: usize) -> Result<TransformedCoefficients> {
        let (dt, qt): (Vec<_>, Vec<_>) = (0..count)
            .map(|n| self.transformed_coeffs(n))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .unzip();
        Ok(TransformedCoefficients {
            dt,
            qt,
            d: self.op.d_blocks()[..count].to_vec(),
            q: self.op.q_blocks()[..count].to_vec(),
        })
    }

    /// General-N expressions from given intertwiner coefficients:
    /// `(A_{n+1}σ_nD_nσ_{n-1}^{-1}A_n^{-1}, A_nD_{n+1}A_{n+1}^{-1}, Q̃_n)`.
    /// Both `D̃` expressions are zero at `n = 0`.
    pub fn general_transformed(
        &self,
        coeffs: &IntertwinerCoefficients,
        n: usize,
    ) -> Result<(SmallMatrix, SmallMatrix, SmallMatrix)> {
        let k = self.k();
        let sigma = self.sigma(n)?;
        let sigma_inv = invert(&sigma).map_err(|e| e.at(n))?;
        let a_next = &coeffs.a[n + 1];
        let a_next_inv = invert(a_next).map_err(|e| e.at(n + 1))?;
        let mut inner = self.op.d(n + 1) + &sigma * self.op.q(n);
        let (dt1, dt2) = if n == 0 {
            (smallmat::zeros(k), smallmat::zeros(k))
        } else {
            let r = self.general_r(n)?;
            inner -= &r;
            let a_inv = invert(&coeffs.a[n]).map_err(|e| e.at(n))?;
            (a_next * &r * a_inv, &coeffs.a[n] * self.op.d(n + 1) * &a_next_inv)
        };
        let qt = a_next * inner * sigma_inv * a_next_inv;
        Ok((dt1, dt2, qt))
    }

    /// Closed forms for `a±`, `b±` computed from real seed ratios only.
    pub fn closed_ab(&self, n: usize) -> Result<AbValues> {
        self.need(n + 1)?;
        let pair = self.pair()?;
        let ratio = |u: &[SeedValue], a: usize, b: usize| -> Result<f64> {
            u[a].real_ratio(u[b])
                .ok_or_else(|| Error::Unsupported("seed values of mixed reality".into()))
        };
        let d0 = pair.d[n];
        let d1 = pair.d[n + 1];
        let up1 = ratio(&pair.u1, n, n + 1)?;
        let up2 = ratio(&pair.u2, n, n + 1)?;
        let mut ab = AbValues {
            a_plus: 0.0,
            a_minus: 0.0,
            b_plus: -0.5 * d1 * (up1 + up2),
            b_minus: -0.5 * d1 * (up1 - up2),
        };
        if n == 0 {
            return Ok(ab);
        }
        let down1 = ratio(&pair.u1, n - 1, n)?;
        let down2 = ratio(&pair.u2, n - 1, n)?;
        // u_{n+1} u_{n-1} / u_n^2 = (u_{n-1}/u_n) / (u_n/u_{n+1})
        let rho1 = down1 / up1;
        let rho2 = down2 / up2;
        for rho in [rho1, rho2] {
            if rho < 0.0 {
                return Err(Error::NegativeRatio { index: n, ratio: rho });
            }
        }
        let pre = 0.5 * (d0 * d1).sqrt();
        ab.a_plus = pre * (rho1.sqrt() + rho2.sqrt());
        ab.a_minus = pre * (rho1.sqrt() - rho2.sqrt());
        ab.b_plus += 0.5 * d0 * (down1 + down2);
        ab.b_minus += 0.5 * d0 * (down1 - down2);
        Ok(ab)
    }
}

/// Riccati residual for explicitly supplied `σ_{n-1}`, `σ_n`, `σ_{n+1}`
/// (`σ_{n-1}` is ignored when `D_n = 0`).
pub fn riccati_residual_with(
    op: &BlockJacobiOperator,
    sigma_prev: Option<&SmallMatrix>,
    sigma: &SmallMatrix,
    sigma_next: &SmallMatrix,
    n: usize,
) -> Result<f64> {
    let sigma_inv = invert(sigma).map_err(|e| e.at(n))?;
    let lhs = op.q(n + 1) - op.d(n + 2) * sigma_next - op.d(n + 1) * &sigma_inv;
    let mut inner = op.q(n) - op.d(n + 1) * sigma;
    if n >= 1 {
        let prev = sigma_prev.ok_or(Error::OutOfRange { index: n - 1, len: 0 })?;
        inner -= op.d(n) * invert(prev).map_err(|e| e.at(n - 1))?;
    }
    let rhs = sigma * inner * sigma_inv;
    Ok(max_norm(&(lhs - rhs)))
}

/// Relative residuals of the four intertwining equations at `n`:
/// `A_nD_{n+1} = D̃_nA_{n+1}`, `B_nD_n = D̃_nB_{n-1}`,
/// `A_{n+1}Q_{n+1} + B_nD_{n+1} = D̃_{n+1}B_{n+1} + Q̃_nA_{n+1}`,
/// `A_{n+1}D_{n+1} + B_nQ_n = D̃_nA_n + Q̃_nB_n`.
pub fn intertwining_residuals(
    op: &BlockJacobiOperator,
    coeffs: &IntertwinerCoefficients,
    transformed: &TransformedCoefficients,
    n: usize,
) -> [f64; 4] {
    let (a, b) = (&coeffs.a, &coeffs.b);
    let (dt, qt) = (&transformed.dt, &transformed.qt);
    let rel = |lhs: SmallMatrix, rhs: SmallMatrix| {
        let scale = max_norm(&lhs).max(max_norm(&rhs)).max(1.0);
        max_norm(&(lhs - rhs)) / scale
    };
    let sys1 = rel(&a[n] * op.d(n + 1), &dt[n] * &a[n + 1]);
    let sys2 = if n >= 1 {
        rel(&b[n] * op.d(n), &dt[n] * &b[n - 1])
    } else {
        0.0
    };
    let sys3 = rel(
        &a[n + 1] * op.q(n + 1) + &b[n] * op.d(n + 1),
        &dt[n + 1] * &b[n + 1] + &qt[n] * &a[n + 1],
    );
    let sys4 = rel(
        &a[n + 1] * op.d(n + 1) + &b[n] * op.q(n),
        &dt[n] * &a[n] + &qt[n] * &b[n],
    );
    [sys1, sys2, sys3, sys4]
}
