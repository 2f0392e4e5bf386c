//! Two-channel free particle in the oscillator basis.
//!
//! The chain `d_n = √(n(n−1))/4`, `q_n = n/2 + 1/4` couples `n` to `n ± 2`
//! only, so each parity class is an independent step-1 subchain with site
//! index `m = (n − p)/2`. Everything public here speaks the full index `n`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::blockjacobi::StateSequence;
use crate::darboux::{AbValues, Darboux, IntertwinerCoefficients, TransformedCoefficients};
use crate::error::{Error, Result};
use crate::intertwine::apply_l;
use crate::seeds::{free_d, free_q, physical_states, Parity, ScalarChain, SeedSolution};
use crate::smallmat::{self, c, matrix_sqrt, max_norm, principal_sqrt, CVector, SmallMatrix, SqrtBranch};

/// Sites past `nmax` kept so that every reported row has both neighbours.
const PADDING: usize = 4;

/// Start index (subchain) of the backward recursion for traveling waves.
pub const WAVE_START: usize = 400_000;

/// `n²·|dev|` bounds over even `n ∈ [200, 4000]` for `(λ₁, λ₂) = (−0.5, −1)`,
/// twice the largest value seen on that grid: `a₊`, `a₋`, `b₊`, `b₋`.
pub const CALIBRATED_LAMBDAS: (f64, f64) = (-0.5, -1.0);
pub const CALIBRATED_N2_BOUNDS: [f64; 4] = [107_949.63, 18_517.99, 215_872.34, 37_031.35];
/// Same for the shift deviations `|a₊ − d_{n+1}|`, `|q_n + b₊ − q_{n+1}|` over `n ∈ [1000, 4000]`.
pub const CALIBRATED_SHIFT_BOUNDS: [f64; 2] = [107_949.66, 215_872.34];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PotentialRow {
    pub n: usize,
    pub a_plus: f64,
    pub a_minus: f64,
    pub b_plus: f64,
    pub b_minus: f64,
    #[serde(rename = "G11")]
    pub g11: f64,
    #[serde(rename = "G12")]
    pub g12: f64,
    #[serde(rename = "R11")]
    pub r11: f64,
    #[serde(rename = "R12")]
    pub r12: f64,
}

impl PotentialRow {
    fn new(n: usize, ab: AbValues) -> Self {
        PotentialRow {
            n,
            a_plus: ab.a_plus,
            a_minus: ab.a_minus,
            b_plus: ab.b_plus,
            b_minus: ab.b_minus,
            g11: ab.a_plus - free_d(n),
            g12: ab.a_minus,
            r11: ab.b_plus,
            r12: ab.b_minus,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateRow {
    pub n: usize,
    pub psi1: f64,
    pub psi2: f64,
    pub tpsi1: f64,
    pub tpsi2: f64,
    pub residual: f64,
}

/// Darboux pipeline on one parity class of the free chain.
#[derive(Debug, Clone)]
pub struct Application {
    pub lambda1: f64,
    pub lambda2: f64,
    pub parity: Parity,
    pub nmax: usize,
    chain: ScalarChain,
    dx: Darboux,
    coeffs: IntertwinerCoefficients,
    transformed: TransformedCoefficients,
}

impl Application {
    pub fn build(lambda1: f64, lambda2: f64, parity: Parity, nmax: usize) -> Result<Self> {
        for lambda in [lambda1, lambda2] {
            if !(lambda < 0.0) {
                return Err(Error::InvalidEnergy { lambda });
            }
        }
        if nmax < 4 {
            return Err(Error::OutOfRange { index: nmax, len: 4 });
        }
        let chain = ScalarChain::free_particle();
        let s1 = SeedSolution::hermite(lambda1, parity, nmax + PADDING)?;
        let s2 = SeedSolution::hermite(lambda2, parity, nmax + PADDING)?;
        let dx = Darboux::two_channel(&chain, &s1, &s2)?;
        let count = dx.len() - 1;
        let coeffs = dx.closed_coefficients(count)?;
        let transformed = dx.transformed(count)?;
        Ok(Application {
            lambda1,
            lambda2,
            parity,
            nmax,
            chain,
            dx,
            coeffs,
            transformed,
        })
    }

    pub fn chain(&self) -> &ScalarChain {
        &self.chain
    }

    pub fn darboux(&self) -> &Darboux {
        &self.dx
    }

    pub fn coeffs(&self) -> &IntertwinerCoefficients {
        &self.coeffs
    }

    pub fn transformed(&self) -> &TransformedCoefficients {
        &self.transformed
    }

    /// Number of reported sites (`n ≤ nmax` in this parity class).
    pub fn rows(&self) -> usize {
        (self.nmax - self.parity.offset()) / 2 + 1
    }

    /// Full index of subchain site `m`.
    pub fn site(&self, m: usize) -> usize {
        self.parity.site(m)
    }

    fn sub_index(&self, n: usize) -> Result<usize> {
        if Parity::of(n) != self.parity {
            return Err(Error::Unsupported(format!(
                "n = {n} is not in the {} class",
                self.parity
            )));
        }
        Ok((n - self.parity.offset()) / 2)
    }

    /// `a±`, `b±` at full index `n`.
    pub fn ab(&self, n: usize) -> Result<AbValues> {
        self.dx.closed_ab(self.sub_index(n)?)
    }

    pub fn potential_table(&self) -> Result<Vec<PotentialRow>> {
        (0..self.rows())
            .map(|m| Ok(PotentialRow::new(self.site(m), self.dx.closed_ab(m)?)))
            .collect()
    }

    /// `Ψ_n = ψ_n(E) e_channel` on the subchain, one site past the reported range.
    pub fn physical_state(&self, energy: f64, channel: usize) -> Result<StateSequence> {
        if !(energy > 0.0) {
            return Err(Error::InvalidEnergy { lambda: energy });
        }
        if channel != 1 && channel != 2 {
            return Err(Error::OutOfRange { index: channel, len: 3 });
        }
        let len = self.coeffs.len() + 1;
        let phys = physical_states(energy, self.site(len - 1));
        let values = (0..len)
            .map(|m| {
                let mut v = CVector::zeros(2);
                v[channel - 1] = c(phys[self.site(m)]);
                v
            })
            .collect();
        Ok(StateSequence::new(2, values).with_label(energy))
    }

    /// `Ψ̃_n = D_{n+2}^{1/2}(U_nU_{n+2}^{-1})^{1/2}(Ψ_{n+2} − U_{n+2}U_n^{-1}Ψ_n)`.
    pub fn transform(&self, psi: &StateSequence) -> Result<StateSequence> {
        let mut out = apply_l(&self.coeffs, psi)?;
        out.label = psi.label;
        Ok(out)
    }

    pub fn transform_state(&self, energy: f64, channel: usize) -> Result<StateSequence> {
        self.transform(&self.physical_state(energy, channel)?)
    }

    /// Relative residual of `D̃_nΨ̃_{n−2} + D̃_{n+2}Ψ̃_{n+2} + Q̃_nΨ̃_n = EΨ̃_n` at subchain site `m`.
    pub fn transformed_residual(&self, tpsi: &StateSequence, energy: f64, m: usize) -> f64 {
        let (dt, qt) = (&self.transformed.dt, &self.transformed.qt);
        let terms = [
            &dt[m + 1] * tpsi.at(m + 1),
            if m >= 1 {
                &dt[m] * tpsi.at(m - 1)
            } else {
                CVector::zeros(2)
            },
            &qt[m] * tpsi.at(m),
        ];
        let rhs = tpsi.at(m) * c(energy);
        let scale = terms.iter().chain([&rhs]).map(|v| v.norm()).fold(0.0, f64::max);
        let lhs: CVector = terms.iter().sum();
        if scale == 0.0 {
            return 0.0;
        }
        (lhs - rhs).norm() / scale
    }

    /// Rows `n, ψ₁, ψ₂, ψ̃₁, ψ̃₂, residual` for `n ≤ nmax`.
    ///
    /// `A_n`, `B_n` are `i` times real matrices, so `Ψ̃` is reported with the
    /// global phase `−i` that makes it real.
    pub fn state_table(&self, energy: f64, channel: usize) -> Result<Vec<StateRow>> {
        let psi = self.physical_state(energy, channel)?;
        let tpsi = self.transform(&psi)?;
        Ok((0..self.rows())
            .map(|m| {
                let (p, t) = (psi.at(m), tpsi.at(m));
                StateRow {
                    n: self.site(m),
                    psi1: p[0].re,
                    psi2: p[1].re,
                    tpsi1: t[0].im,
                    tpsi2: t[1].im,
                    residual: self.transformed_residual(&tpsi, energy, m),
                }
            })
            .collect())
    }

    /// `P(n) = D_{n+2}^{1/2}(U_{n+2}U_n^{-1})^{1/2}(U_nU_{n+2}^{-1}Ξ_{n+2}Ξ_n^{-1} − I)`
    /// with `Ξ_n = diag(w_n(E₁), w_n(E₂))` built from waves traveling in one direction.
    pub fn scatter_p(&self, e1: f64, e2: f64, n: usize) -> Result<SmallMatrix> {
        let waves = [traveling_wave(e1, n / 2 + 2)?, traveling_wave(e2, n / 2 + 2)?];
        self.scatter_p_with(&waves, n)
    }

    /// [`Self::scatter_p`] with precomputed waves (even subchain values).
    pub fn scatter_p_with(&self, waves: &[Vec<Complex64>; 2], n: usize) -> Result<SmallMatrix> {
        if self.parity != Parity::Even {
            return Err(Error::Unsupported(
                "the P matrix is available for the even chain only".into(),
            ));
        }
        let m = self.sub_index(n)?;
        let mut xi = SmallMatrix::zeros(2, 2);
        for (j, w) in waves.iter().enumerate() {
            if w.len() < m + 2 {
                return Err(Error::OutOfRange {
                    index: m + 1,
                    len: w.len(),
                });
            }
            if w[m].norm() == 0.0 {
                return Err(Error::Singular {
                    condition: f64::INFINITY,
                    index: Some(n),
                });
            }
            xi[(j, j)] = w[m + 1] / w[m];
        }
        let tf = self.dx.tf();
        let droot = principal_sqrt(self.dx.op().d(m + 1)).map_err(|e| e.at(n + 2))?;
        let uroot = matrix_sqrt(&tf.ratio(m + 1, m), SqrtBranch::UpperCut).map_err(|e| e.at(n))?;
        let inner = tf.ratio(m, m + 1) * xi - smallmat::identity(2);
        Ok(droot * uroot * inner)
    }
}

/// `√λ` with `Im > 0` for `λ < 0`.
fn upper_sqrt(lambda: f64) -> Complex64 {
    if lambda < 0.0 {
        Complex64::new(0.0, (-lambda).sqrt())
    } else {
        c(lambda.sqrt())
    }
}

/// Large-`n` limit `[[p₁, q], [q, p₂]]` with `p_j = √E_j − ½(√λ₁ + √λ₂)`, `q = ½(√λ₂ − √λ₁)`.
pub fn p_infinity(lambda1: f64, lambda2: f64, e1: f64, e2: f64) -> SmallMatrix {
    let (s1, s2) = (upper_sqrt(lambda1), upper_sqrt(lambda2));
    let mean = (s1 + s2) * 0.5;
    let q = (s2 - s1) * 0.5;
    SmallMatrix::from_row_slice(2, 2, &[upper_sqrt(e1) - mean, q, q, upper_sqrt(e2) - mean])
}

/// Leading large-`m` form of the normalized `ĥ_{2m}(√(2z))`, up to an
/// `m`-independent factor:
/// `(−1)^m √((2m−1)!!/(2m)!!) e^{−2i√(2zm)} (1 − z/(8m))`.
fn hermite_even_asymptotic(z: f64, m: usize) -> Complex64 {
    let mf = m as f64;
    let log_mag = 0.5 * (ln_gamma(2.0 * mf + 1.0) - mf * 4f64.ln() - 2.0 * ln_gamma(mf + 1.0));
    let sign = if m.is_multiple_of(2) { 1.0 } else { -1.0 };
    let phase = Complex64::new(0.0, -2.0 * (2.0 * z * mf).sqrt()).exp();
    phase * (sign * log_mag.exp() * (1.0 - z / (8.0 * mf)))
}

/// Stirling series for `ln Γ(x)`, `x ≥ 1`; adequate for the large arguments used here.
fn ln_gamma(x: f64) -> f64 {
    if x < 10.0 {
        let mut shift = 0.0;
        let mut y = x;
        while y < 10.0 {
            shift -= y.ln();
            y += 1.0;
        }
        return shift + ln_gamma(y);
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    (x - 0.5) * x.ln() - x
        + 0.5 * (2.0 * std::f64::consts::PI).ln()
        + inv * (1.0 / 12.0 - inv2 * (1.0 / 360.0 - inv2 * (1.0 / 1260.0 - inv2 / 1680.0)))
}

/// Solution of the even free chain at energy `E > 0` behaving like a single
/// traveling wave, on subchain sites `0..len`. Obtained by backward recursion
/// from the asymptotic form at `m = max(WAVE_START, 4·len)`.
pub fn traveling_wave(energy: f64, len: usize) -> Result<Vec<Complex64>> {
    if !(energy > 0.0) {
        return Err(Error::InvalidEnergy { lambda: energy });
    }
    let start = WAVE_START.max(4 * len);
    let d = |m: usize| free_d(2 * m);
    let q = |m: usize| free_q(2 * m);
    let mut next = hermite_even_asymptotic(energy, start + 1);
    let mut cur = hermite_even_asymptotic(energy, start);
    let mut out = vec![Complex64::new(0.0, 0.0); len];
    for m in (1..=start).rev() {
        let prev = (cur * (energy - q(m)) - next * d(m + 1)) / d(m);
        if m < len {
            out[m] = cur;
        }
        next = cur;
        cur = prev;
    }
    if len > 0 {
        out[0] = cur;
    }
    Ok(out)
}

/// Deviation kinds tracked by [`AsymptoticReport`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Claim {
    /// `|a₊ − (n/4 + 1/8 − 1/(32n))|`
    APlus,
    /// `|b₊ − 1/2|`
    BPlus,
    /// `|a₋|`
    AMinus,
    /// `|b₋|`
    BMinus,
    /// `|a₊ − d_{n+1}|`
    ShiftA,
    /// `|q_n + b₊ − q_{n+1}|`
    ShiftB,
}

impl Claim {
    pub const ALL: [Claim; 6] = [
        Claim::APlus,
        Claim::BPlus,
        Claim::AMinus,
        Claim::BMinus,
        Claim::ShiftA,
        Claim::ShiftB,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Claim::APlus => "a_plus",
            Claim::BPlus => "b_plus",
            Claim::AMinus => "a_minus",
            Claim::BMinus => "b_minus",
            Claim::ShiftA => "shift_a",
            Claim::ShiftB => "shift_b",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticRow {
    pub n: usize,
    pub a_plus: f64,
    pub b_plus: f64,
    pub a_minus: f64,
    pub b_minus: f64,
    pub shift_a: f64,
    pub shift_b: f64,
}

impl AsymptoticRow {
    fn new(n: usize, ab: AbValues) -> Self {
        let nf = n as f64;
        AsymptoticRow {
            n,
            a_plus: (ab.a_plus - (nf / 4.0 + 0.125 - 1.0 / (32.0 * nf))).abs(),
            b_plus: (ab.b_plus - 0.5).abs(),
            a_minus: ab.a_minus.abs(),
            b_minus: ab.b_minus.abs(),
            shift_a: (ab.a_plus - free_d(n + 1)).abs(),
            shift_b: (free_q(n) + ab.b_plus - free_q(n + 1)).abs(),
        }
    }

    pub fn deviation(&self, claim: Claim) -> f64 {
        match claim {
            Claim::APlus => self.a_plus,
            Claim::BPlus => self.b_plus,
            Claim::AMinus => self.a_minus,
            Claim::BMinus => self.b_minus,
            Claim::ShiftA => self.shift_a,
            Claim::ShiftB => self.shift_b,
        }
    }

    /// `n²·|dev|`
    pub fn weighted(&self, claim: Claim) -> f64 {
        let nf = self.n as f64;
        nf * nf * self.deviation(claim)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PRow {
    pub n: usize,
    /// `‖P(n) − P∞‖_max`
    pub deviation: f64,
    /// `n^{1/2}·‖P(n) − P∞‖_max`
    pub weighted: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticReport {
    pub lambda1: f64,
    pub lambda2: f64,
    pub parity: Parity,
    pub rows: Vec<AsymptoticRow>,
    pub energies: (f64, f64),
    pub p_rows: Vec<PRow>,
    /// Row-major `P∞` as `(re, im)` pairs.
    pub p_infinity: Vec<(f64, f64)>,
}

impl AsymptoticReport {
    pub fn row(&self, n: usize) -> Option<&AsymptoticRow> {
        self.rows.iter().find(|r| r.n == n)
    }

    pub fn p_row(&self, n: usize) -> Option<&PRow> {
        self.p_rows.iter().find(|r| r.n == n)
    }

    /// Largest `n²·|dev|` over rows with `n ≥ from`.
    pub fn max_weighted(&self, claim: Claim, from: usize) -> f64 {
        self.rows
            .iter()
            .filter(|r| r.n >= from)
            .map(|r| r.weighted(claim))
            .fold(0.0, f64::max)
    }

    /// `|dev(n2)| / |dev(n1)|`
    pub fn decay_ratio(&self, claim: Claim, n1: usize, n2: usize) -> Option<f64> {
        Some(self.row(n2)?.deviation(claim) / self.row(n1)?.deviation(claim))
    }

    pub fn p_ratio(&self, n1: usize, n2: usize) -> Option<f64> {
        Some(self.p_row(n2)?.deviation / self.p_row(n1)?.deviation)
    }
}

/// Deviations at the full indices `ns` and, for the even chain, the P-matrix
/// deviation at `p_ns` for energies `(E₁, E₂)`.
pub fn asymptotics(app: &Application, ns: &[usize], p_ns: &[usize], energies: (f64, f64)) -> Result<AsymptoticReport> {
    let rows = ns
        .iter()
        .map(|&n| Ok(AsymptoticRow::new(n, app.ab(n)?)))
        .collect::<Result<Vec<_>>>()?;
    let p_inf = p_infinity(app.lambda1, app.lambda2, energies.0, energies.1);
    let mut p_rows = Vec::new();
    if app.parity == Parity::Even && !p_ns.is_empty() {
        let len = p_ns.iter().max().map_or(0, |&n| n / 2 + 2);
        let waves = [traveling_wave(energies.0, len)?, traveling_wave(energies.1, len)?];
        for &n in p_ns {
            let p = app.scatter_p_with(&waves, n)?;
            let deviation = max_norm(&(p - &p_inf));
            p_rows.push(PRow {
                n,
                deviation,
                weighted: (n as f64).sqrt() * deviation,
            });
        }
    }
    Ok(AsymptoticReport {
        lambda1: app.lambda1,
        lambda2: app.lambda2,
        parity: app.parity,
        rows,
        energies,
        p_rows,
        p_infinity: p_inf.iter_row_major(),
    })
}

trait RowMajor {
    fn iter_row_major(&self) -> Vec<(f64, f64)>;
}

impl RowMajor for SmallMatrix {
    fn iter_row_major(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::with_capacity(self.len());
        for i in 0..self.nrows() {
            for j in 0..self.ncols() {
                out.push((self[(i, j)].re, self[(i, j)].im));
            }
        }
        out
    }
}

/// Even `n` from `from` to `to` in steps of `step`.
pub fn grid(from: usize, to: usize, step: usize) -> Vec<usize> {
    (from..=to).step_by(step).collect()
}
