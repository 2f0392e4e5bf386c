//! Residual-based verification of the whole pipeline.
//!
//! [`run_suite`] evaluates a fixed registry of named checks and records every
//! outcome; nothing aborts the run. A [`Fault`] perturbs the input of exactly
//! one named check so that fault isolation can itself be tested.

use std::collections::BTreeMap;
use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::blockjacobi::{inner, BlockJacobiOperator, StateSequence};
use crate::darboux::{intertwining_residuals, IntertwinerCoefficients};
use crate::error::{Error, Result};
use crate::hermite2ch::{
    asymptotics, grid, Application, AsymptoticReport, Claim, CALIBRATED_LAMBDAS, CALIBRATED_N2_BOUNDS,
    CALIBRATED_SHIFT_BOUNDS,
};
use crate::intertwine::{
    apply_l, apply_ldag, factorization_residuals, kernel_sequence, l_matrix_defect, ldag_matrix_residual,
    matrix_solution_residual, second_solution, wronskian_defect, FactorizationShift,
};
use crate::seeds::{seed_residual, Parity, ScalarChain, SeedSolution, SeedValue};
use crate::smallmat::{
    self, anti_hermitian_defect, branch_sqrt, commutator, hermitian_defect, identity, max_norm, real_symmetric_defect,
    CVector, SmallMatrix, SqrtBranch,
};

/// Largest block count accepted by [`dense_oracle`].
pub const DENSE_LIMIT: usize = 400;

/// Full-index range of the asymptotic checks.
pub const ASYM_FROM: usize = 200;
pub const ASYM_TO: usize = 4000;
pub const ASYM_STEP: usize = 200;
pub const SHIFT_FROM: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParitySelection {
    Even,
    Odd,
    Both,
}

impl ParitySelection {
    pub fn parities(self) -> Vec<Parity> {
        match self {
            ParitySelection::Even => vec![Parity::Even],
            ParitySelection::Odd => vec![Parity::Odd],
            ParitySelection::Both => vec![Parity::Even, Parity::Odd],
        }
    }
}

/// Perturbation of one block (or value) feeding the named check.
///
/// Matrices get `(factor − 1)·max(‖X‖_max, 1)` added to their `(0, 1)` entry,
/// vectors `(factor − 1)·‖v‖` to their first component, and scalars
/// `(factor − 1)·max(|x|, 1)`. `index` is the subchain site for block-valued
/// inputs and the full chain index `n` for seed values and asymptotic
/// deviations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fault {
    pub check: String,
    pub index: usize,
    pub factor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyConfig {
    pub lambda1: f64,
    pub lambda2: f64,
    pub parity: ParitySelection,
    pub nmax: usize,
    pub energies: Vec<f64>,
    /// Energies `(E₁, E₂)` of the traveling waves in the P-matrix checks.
    pub p_energies: (f64, f64),
    pub tolerances: BTreeMap<String, f64>,
    pub seed: u64,
    pub fault: Option<Fault>,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            lambda1: -0.5,
            lambda2: -1.0,
            parity: ParitySelection::Even,
            nmax: 200,
            energies: vec![0.5, 1.0, 2.5],
            p_energies: (1.0, 1.0),
            tolerances: BTreeMap::new(),
            seed: 20_240_601,
            fault: None,
        }
    }
}

impl VerifyConfig {
    pub fn validate(&self) -> Result<()> {
        for lambda in [self.lambda1, self.lambda2] {
            if !(lambda < 0.0) {
                return Err(Error::InvalidEnergy { lambda });
            }
        }
        if self.nmax < 8 {
            return Err(Error::OutOfRange {
                index: self.nmax,
                len: 8,
            });
        }
        for &e in self.energies.iter().chain([&self.p_energies.0, &self.p_energies.1]) {
            if !(e > 0.0) {
                return Err(Error::InvalidEnergy { lambda: e });
            }
        }
        for name in self.tolerances.keys() {
            if check_spec(name).is_none() {
                return Err(Error::Unsupported(format!("unknown check `{name}`")));
            }
        }
        for (name, &tol) in &self.tolerances {
            if !(tol >= 0.0) {
                return Err(Error::Unsupported(format!(
                    "tolerance for `{name}` must be non-negative"
                )));
            }
        }
        if let Some(fault) = &self.fault {
            if check_spec(&fault.check).is_none() {
                return Err(Error::Unsupported(format!("unknown check `{}`", fault.check)));
            }
        }
        Ok(())
    }

    fn tolerance(&self, spec: &CheckSpec) -> f64 {
        self.tolerances.get(spec.name).copied().unwrap_or(spec.tolerance)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Relative,
    Absolute,
}

/// Where and for which parameters a check was evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckContext {
    pub lambda1: f64,
    pub lambda2: f64,
    pub parity: Parity,
    pub nmax: usize,
    /// Index of the worst residual, when meaningful.
    pub worst_at: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub residual: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub scale: Scale,
    pub context: CheckContext,
    pub skipped: Option<String>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Section {
    pub parity: Parity,
    pub checks: Vec<Check>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub passed: usize,
    pub failed: usize,
    pub skipped: usize,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub config: VerifyConfig,
    pub sections: Vec<Section>,
    pub summary: Summary,
}

impl VerificationReport {
    pub fn checks(&self) -> impl Iterator<Item = &Check> {
        self.sections.iter().flat_map(|s| s.checks.iter())
    }

    pub fn all_passed(&self) -> bool {
        self.summary.failed == 0
    }

    pub fn failed_names(&self) -> Vec<String> {
        self.checks().filter(|c| !c.pass).map(|c| c.name.clone()).collect()
    }

    pub fn find(&self, parity: Parity, name: &str) -> Option<&Check> {
        self.sections
            .iter()
            .find(|s| s.parity == parity)?
            .checks
            .iter()
            .find(|c| c.name == name)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CheckSpec {
    pub name: &'static str,
    pub tolerance: f64,
    pub scale: Scale,
}

const fn spec(name: &'static str, tolerance: f64, scale: Scale) -> CheckSpec {
    CheckSpec { name, tolerance, scale }
}

/// Every check, in evaluation order.
pub const REGISTRY: &[CheckSpec] = &[
    spec("seed_residual", 1e-10, Scale::Relative),
    spec("u_equation", 1e-10, Scale::Relative),
    spec("lambda_shift", 1e-12, Scale::Absolute),
    spec("sigma_hermitian", 1e-12, Scale::Relative),
    spec("sigma_commute", 1e-12, Scale::Relative),
    spec("riccati", 1e-9, Scale::Absolute),
    spec("a_recursion", 1e-9, Scale::Relative),
    spec("intertwining", 1e-9, Scale::Relative),
    spec("cross_path", 1e-10, Scale::Absolute),
    spec("scalar_equivalence", 1e-10, Scale::Relative),
    spec("degenerate_minus", 1e-12, Scale::Absolute),
    spec("anti_hermitian", 1e-10, Scale::Absolute),
    spec("transformed_symmetric", 1e-10, Scale::Absolute),
    spec("adjoint", 1e-10, Scale::Relative),
    spec("factorization", 1e-9, Scale::Relative),
    spec("dense_oracle", 1e-9, Scale::Absolute),
    spec("seed_annihilation", 1e-9, Scale::Relative),
    spec("kernel", 1e-9, Scale::Relative),
    spec("wronskian", 1e-9, Scale::Relative),
    spec("second_solution", 1e-8, Scale::Relative),
    spec("transformed_states", 1e-8, Scale::Relative),
    spec("asym_a_plus_bound", CALIBRATED_N2_BOUNDS[0], Scale::Absolute),
    spec("asym_a_minus_bound", CALIBRATED_N2_BOUNDS[1], Scale::Absolute),
    spec("asym_b_plus_bound", CALIBRATED_N2_BOUNDS[2], Scale::Absolute),
    spec("asym_b_minus_bound", CALIBRATED_N2_BOUNDS[3], Scale::Absolute),
    spec("asym_shift_a", CALIBRATED_SHIFT_BOUNDS[0], Scale::Absolute),
    spec("asym_shift_b", CALIBRATED_SHIFT_BOUNDS[1], Scale::Absolute),
    spec("asym_a_plus_decay", 0.35, Scale::Relative),
    spec("asym_a_minus_decay", 0.35, Scale::Relative),
    spec("asym_b_plus_decay", 0.35, Scale::Relative),
    spec("asym_b_minus_decay", 0.35, Scale::Relative),
    spec("p_decay", 1.0 / 3.0, Scale::Relative),
    spec("p_limit", 0.05, Scale::Absolute),
];

pub fn check_spec(name: &str) -> Option<&'static CheckSpec> {
    REGISTRY.iter().find(|s| s.name == name)
}

struct Measured {
    residual: f64,
    worst_at: Option<usize>,
}

enum Outcome {
    Measured(Measured),
    Skipped(String),
}

fn worst(values: impl IntoIterator<Item = (usize, f64)>) -> Outcome {
    let mut best = Measured {
        residual: 0.0,
        worst_at: None,
    };
    for (n, r) in values {
        // NaN ranks as infinitely bad
        let r = if r.is_nan() { f64::INFINITY } else { r };
        if best.worst_at.is_none() || r > best.residual {
            best = Measured {
                residual: r,
                worst_at: Some(n),
            };
        }
    }
    Outcome::Measured(best)
}

fn measured(residual: f64, worst_at: Option<usize>) -> Outcome {
    Outcome::Measured(Measured { residual, worst_at })
}

fn perturb(x: &SmallMatrix, factor: f64) -> SmallMatrix {
    let mut out = x.clone();
    let bump = (factor - 1.0) * max_norm(x).max(1.0);
    out[(0, 1)] += Complex64::new(bump, 0.0);
    out
}

fn perturb_vec(v: &CVector, factor: f64) -> CVector {
    let mut out = v.clone();
    out[0] += Complex64::new((factor - 1.0) * v.norm().max(1e-300), 0.0);
    out
}

/// State shared by all checks of one parity section.
struct Ctx<'a> {
    config: &'a VerifyConfig,
    app: Application,
    asym: Option<AsymptoticReport>,
    asym_error: Option<String>,
    name: &'static str,
}

impl Ctx<'_> {
    fn fault_at(&self) -> Option<(usize, f64)> {
        let f = self.config.fault.as_ref()?;
        (f.check == self.name).then_some((f.index, f.factor))
    }

    fn tamper(&self, n: usize, x: &SmallMatrix) -> SmallMatrix {
        match self.fault_at() {
            Some((i, factor)) if i == n => perturb(x, factor),
            _ => x.clone(),
        }
    }

    fn tamper_f(&self, n: usize, x: f64) -> f64 {
        match self.fault_at() {
            Some((i, factor)) if i == n => x + (factor - 1.0) * x.abs().max(1.0),
            _ => x,
        }
    }

    fn coeffs(&self) -> IntertwinerCoefficients {
        let mut co = self.app.coeffs().clone();
        if let Some((i, _)) = self.fault_at() {
            if i < co.b.len() {
                co.b[i] = self.tamper(i, &co.b[i]);
            }
        }
        co
    }

    fn rows(&self) -> usize {
        self.app.rows()
    }

    fn sigmas(&self, count: usize) -> Result<Vec<SmallMatrix>> {
        (0..count)
            .map(|n| Ok(self.tamper(n, &self.app.darboux().sigma(n)?)))
            .collect()
    }

    fn asym(&self) -> std::result::Result<&AsymptoticReport, String> {
        self.asym.as_ref().ok_or_else(|| {
            self.asym_error
                .clone()
                .unwrap_or_else(|| "asymptotics unavailable".into())
        })
    }
}

fn random_state(rng: &mut ChaCha8Rng, len: usize, support: usize) -> StateSequence {
    let values = (0..len)
        .map(|n| {
            if n < support {
                CVector::from_fn(2, |_, _| {
                    Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
                })
            } else {
                CVector::zeros(2)
            }
        })
        .collect();
    StateSequence::new(2, values)
}

/// Transformed blocks of a scalar chain `(d̃_n, q̃_n)` from one seed, computed
/// with scalar complex arithmetic through `ã_n = a_n d_{n+1}/a_{n+1}`,
/// `a_n = √d_n (u_{n−1}/u_n)^{1/2}`.
pub fn scalar_darboux(d: &[f64], q: &[f64], u: &[SeedValue], count: usize) -> Result<Vec<(f64, f64)>> {
    let root = |n: usize| -> Result<Complex64> {
        let ratio = u[n - 1].ratio(u[n]);
        Ok(branch_sqrt(ratio, SqrtBranch::UpperCut, ratio.norm())? * d[n].sqrt())
    };
    (0..count)
        .map(|n| {
            let up = u[n].ratio(u[n + 1]).re;
            let mut qt = q[n] - d[n + 1] * up;
            let dt = if n == 0 {
                0.0
            } else {
                qt += d[n] * u[n - 1].ratio(u[n]).re;
                (root(n)? * d[n + 1] / root(n + 1)?).re
            };
            Ok((dt, qt))
        })
        .collect()
}

/// Max-norm of `L·H₀ − H₁·L` over block rows `0..=N−3`, all built as dense
/// `2N×2N` matrices from the first `N` blocks.
pub fn dense_oracle(
    op0: &BlockJacobiOperator,
    op1: &BlockJacobiOperator,
    coeffs: &IntertwinerCoefficients,
    n_blocks: usize,
) -> Result<DenseOracle> {
    if n_blocks > DENSE_LIMIT {
        return Err(Error::SizeLimit {
            size: n_blocks,
            limit: DENSE_LIMIT,
        });
    }
    if n_blocks < 3 {
        return Err(Error::OutOfRange {
            index: n_blocks,
            len: 3,
        });
    }
    let need = n_blocks;
    for avail in [op0.len(), op1.len(), coeffs.len()] {
        if avail < need {
            return Err(Error::OutOfRange {
                index: need,
                len: avail,
            });
        }
    }
    let k = coeffs.k();
    let h0 = op0.finite_section(n_blocks).dense;
    let h1 = op1.finite_section(n_blocks).dense;
    let dim = k * n_blocks;
    let mut l = SmallMatrix::zeros(dim, dim);
    for n in 0..n_blocks {
        l.view_mut((k * n, k * n), (k, k)).copy_from(&coeffs.b[n]);
        if n + 1 < n_blocks {
            l.view_mut((k * n, k * (n + 1)), (k, k)).copy_from(&coeffs.a[n + 1]);
        }
    }
    // banded products: block row n only touches block columns n−1..n+2
    let mut row_residuals = Vec::with_capacity(n_blocks - 2);
    for n in 0..=(n_blocks - 3) {
        let lo = k * n.saturating_sub(2);
        let hi = (k * (n + 4)).min(dim);
        let mut worst = 0.0f64;
        for r in (k * n)..(k * (n + 1)) {
            for col in lo..hi {
                let mut acc = Complex64::new(0.0, 0.0);
                for mid in lo..hi {
                    acc += l[(r, mid)] * h0[(mid, col)] - h1[(r, mid)] * l[(mid, col)];
                }
                worst = worst.max(acc.norm());
            }
        }
        row_residuals.push(worst);
    }
    let residual = row_residuals.iter().copied().fold(0.0, f64::max);
    Ok(DenseOracle {
        residual,
        row_residuals,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseOracle {
    pub residual: f64,
    /// Worst entry per block row `0..=N−3`.
    pub row_residuals: Vec<f64>,
}

fn claim_for(name: &str) -> Option<Claim> {
    let claim = match name {
        "asym_a_plus_bound" | "asym_a_plus_decay" => Claim::APlus,
        "asym_a_minus_bound" | "asym_a_minus_decay" => Claim::AMinus,
        "asym_b_plus_bound" | "asym_b_plus_decay" => Claim::BPlus,
        "asym_b_minus_bound" | "asym_b_minus_decay" => Claim::BMinus,
        "asym_shift_a" => Claim::ShiftA,
        "asym_shift_b" => Claim::ShiftB,
        _ => return None,
    };
    Some(claim)
}

fn evaluate(ctx: &Ctx) -> Result<Outcome> {
    let app = &ctx.app;
    let dx = app.darboux();
    let rows = ctx.rows();
    let cfg = ctx.config;
    match ctx.name {
        "seed_residual" => {
            let chain = ScalarChain::free_particle();
            let mut out = Vec::new();
            for lambda in [cfg.lambda1, cfg.lambda2] {
                let seed = SeedSolution::hermite(lambda, app.parity, cfg.nmax + 2)?;
                let mut values = seed.chain_values().to_vec();
                for (m, v) in values.iter_mut().enumerate() {
                    v.value = ctx.tamper_f(app.site(m), v.value);
                }
                let seed = SeedSolution::from_values(lambda, seed.step, seed.offset, values);
                for m in 0..rows {
                    let n = app.site(m);
                    out.push((n, seed_residual(&chain, &seed, n)));
                }
            }
            Ok(worst(out))
        }
        "u_equation" => {
            let op = dx.op();
            let lam = dx.tf().lambda_matrix();
            let u: Vec<SmallMatrix> = (0..=rows).map(|n| ctx.tamper(n, dx.tf().u(n))).collect();
            Ok(worst((1..rows).map(|n| {
                (n, matrix_solution_residual(op.d_blocks(), op.q_blocks(), &u, &lam, n))
            })))
        }
        "lambda_shift" => {
            let shift = FactorizationShift::two_channel(cfg.lambda1, cfg.lambda2);
            let lam = dx.tf().lambda_matrix();
            let mut out: Vec<(usize, f64)> = (0..rows)
                .map(|n| {
                    let u = ctx.tamper(n, dx.tf().u(n));
                    let lt = &u * &lam * dx.tf().u_inv(n);
                    (n, max_norm(&(lt - &shift.lt)))
                })
                .collect();
            let ev = shift.eigenvalues()?;
            let (lo, hi) = (cfg.lambda1.min(cfg.lambda2), cfg.lambda1.max(cfg.lambda2));
            out.push((0, (ev[0] - lo).abs().max((ev[1] - hi).abs())));
            Ok(worst(out))
        }
        "sigma_hermitian" => {
            let sigmas = ctx.sigmas(rows)?;
            Ok(worst(
                sigmas
                    .iter()
                    .enumerate()
                    .map(|(n, s)| (n, hermitian_defect(s) / max_norm(s))),
            ))
        }
        "sigma_commute" => {
            let count = rows.min(51);
            let sigmas = ctx.sigmas(count)?;
            let mut out = Vec::new();
            for n in 0..count {
                for m in (n + 1)..count {
                    let scale = max_norm(&sigmas[n]) * max_norm(&sigmas[m]);
                    out.push((n, max_norm(&commutator(&sigmas[n], &sigmas[m])) / scale));
                    let prod = &sigmas[n] * smallmat::invert(&sigmas[m])?;
                    let form = (prod[(0, 0)] - prod[(1, 1)])
                        .norm()
                        .max((prod[(0, 1)] - prod[(1, 0)]).norm());
                    out.push((n, form / max_norm(&prod)));
                }
            }
            Ok(worst(out))
        }
        "riccati" => {
            let count = rows.min(52);
            let sigmas = ctx.sigmas(count + 1)?;
            let out = (0..count)
                .map(|n| {
                    let prev = if n >= 1 { Some(&sigmas[n - 1]) } else { None };
                    let r = crate::darboux::riccati_residual_with(dx.op(), prev, &sigmas[n], &sigmas[n + 1], n);
                    (n, r.unwrap_or(f64::INFINITY))
                })
                .collect::<Vec<_>>();
            Ok(worst(out))
        }
        "a_recursion" => {
            let rec = dx.a_recursion(dx.default_a1()?, rows)?;
            let closed = app.coeffs();
            Ok(worst((0..=rows).map(|n| {
                let a = ctx.tamper(n, &rec.a[n]);
                (n, max_norm(&(a - &closed.a[n])) / max_norm(&closed.a[n]).max(1.0))
            })))
        }
        "intertwining" => {
            let co = ctx.coeffs();
            let tc = app.transformed();
            Ok(worst((0..rows).map(|n| {
                let r = intertwining_residuals(dx.op(), &co, tc, n);
                (n, r.into_iter().fold(0.0, f64::max))
            })))
        }
        "cross_path" => {
            let tc = app.transformed();
            let mut out = Vec::new();
            for n in 0..rows {
                let ab = dx.closed_ab(n)?;
                let dt = ctx.tamper(n, &tc.dt[n]);
                let r = tc.r(n);
                let diffs = [
                    dt[(0, 0)] - ab.a_plus,
                    dt[(1, 1)] - ab.a_plus,
                    dt[(0, 1)] - ab.a_minus,
                    dt[(1, 0)] - ab.a_minus,
                    r[(0, 0)] - ab.b_plus,
                    r[(1, 1)] - ab.b_plus,
                    r[(0, 1)] - ab.b_minus,
                    r[(1, 0)] - ab.b_minus,
                ];
                out.push((n, diffs.iter().map(|z| z.norm()).fold(0.0, f64::max)));
            }
            Ok(worst(out))
        }
        "scalar_equivalence" => {
            let count = rows;
            let d: Vec<f64> = (0..=count + 1).map(|m| app.chain().d(app.site(m))).collect();
            let q: Vec<f64> = (0..=count + 1).map(|m| app.chain().q(app.site(m))).collect();
            let mut scalar = Vec::new();
            for lambda in [cfg.lambda1, cfg.lambda2] {
                let seed = SeedSolution::hermite(lambda, app.parity, app.site(count + 1))?;
                scalar.push(scalar_darboux(&d, &q, seed.chain_values(), count)?);
            }
            let mut out = Vec::new();
            for n in 0..count {
                let ab = dx.closed_ab(n)?;
                let a_plus = ctx.tamper_f(n, ab.a_plus);
                let pairs = [
                    (a_plus + ab.a_minus, scalar[0][n].0),
                    (a_plus - ab.a_minus, scalar[1][n].0),
                    (ab.b_plus + ab.b_minus, scalar[0][n].1 - q[n]),
                    (ab.b_plus - ab.b_minus, scalar[1][n].1 - q[n]),
                ];
                let r = pairs
                    .iter()
                    .map(|(x, y)| (x - y).abs() / y.abs().max(1.0))
                    .fold(0.0, f64::max);
                out.push((n, r));
            }
            Ok(worst(out))
        }
        "degenerate_minus" => {
            if cfg.lambda1 != cfg.lambda2 {
                return Ok(Outcome::Skipped("applies only when lambda1 = lambda2".into()));
            }
            let mut out = Vec::new();
            for n in 0..rows {
                let ab = dx.closed_ab(n)?;
                let a_minus = ctx.tamper_f(n, ab.a_minus);
                out.push((n, a_minus.abs().max(ab.b_minus.abs())));
            }
            Ok(worst(out))
        }
        "anti_hermitian" => {
            let co = app.coeffs();
            let mut out: Vec<(usize, f64)> =
                co.a.iter()
                    .enumerate()
                    .map(|(n, a)| (n, anti_hermitian_defect(&ctx.tamper(n, a))))
                    .collect();
            out.extend(co.b.iter().enumerate().map(|(n, b)| (n, anti_hermitian_defect(b))));
            Ok(worst(out))
        }
        "transformed_symmetric" => {
            let tc = app.transformed();
            Ok(worst((0..tc.len()).map(|n| {
                let qt = ctx.tamper(n, &tc.qt[n]);
                (n, real_symmetric_defect(&tc.dt[n]).max(real_symmetric_defect(&qt)))
            })))
        }
        "adjoint" => {
            // only L sees the fault; a shared perturbation would stay self-adjoint
            let co = ctx.coeffs();
            let clean = app.coeffs();
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let len = rows.saturating_sub(2);
            let mut out = Vec::new();
            for trial in 0..20 {
                let psi = random_state(&mut rng, len, len.saturating_sub(1));
                let phi = random_state(&mut rng, len, len.saturating_sub(1));
                let lhs = inner(&phi, &apply_l(&co, &psi)?)?;
                let rhs = inner(&apply_ldag(clean, &phi)?, &psi)?;
                out.push((trial, (lhs - rhs).norm() / lhs.norm().max(1.0)));
            }
            Ok(worst(out))
        }
        "factorization" => {
            let co = ctx.coeffs();
            let h1 = app.transformed().operator();
            let shift = FactorizationShift::from_darboux(dx);
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed);
            let len = rows.saturating_sub(2);
            let mut out = Vec::new();
            for trial in 0..20 {
                let psi = random_state(&mut rng, len, len);
                let (r1, r2) = factorization_residuals(dx.op(), &h1, &co, &shift, &psi)?;
                out.push((trial, r1.max(r2)));
            }
            Ok(worst(out))
        }
        "dense_oracle" => {
            let co = ctx.coeffs();
            let n_blocks = (rows - 1).min(DENSE_LIMIT).min(co.len());
            let res = dense_oracle(dx.op(), &app.transformed().operator(), &co, n_blocks)?;
            Ok(worst(res.row_residuals.iter().copied().enumerate()))
        }
        "seed_annihilation" => {
            let co = app.coeffs();
            let u: Vec<SmallMatrix> = (0..=rows).map(|n| ctx.tamper(n, dx.tf().u(n))).collect();
            Ok(worst((0..rows).map(|n| {
                let r = &co.a[n + 1] * &u[n + 1] + &co.b[n] * &u[n];
                let scale = max_norm(&(&co.a[n + 1] * &u[n + 1])).max(max_norm(&(&co.b[n] * &u[n])));
                (n, max_norm(&r) / scale)
            })))
        }
        "kernel" => {
            let co = app.coeffs();
            let s: Vec<SmallMatrix> = kernel_sequence(dx, rows, &identity(2))?
                .iter()
                .enumerate()
                .map(|(n, m)| ctx.tamper(n, m))
                .collect();
            Ok(worst((1..rows).map(|n| (n, ldag_matrix_residual(co, &s, n)))))
        }
        "wronskian" | "second_solution" => {
            let u: Vec<SmallMatrix> = (0..=rows).map(|n| dx.tf().u(n).clone()).collect();
            let w0 = identity(2);
            let uhat: Vec<SmallMatrix> = second_solution(dx.op().d_blocks(), dx.tf(), &u[0], &w0, rows + 1)?
                .iter()
                .enumerate()
                .map(|(n, m)| ctx.tamper(n, m))
                .collect();
            let d = dx.op().d_blocks();
            if ctx.name == "wronskian" {
                return Ok(worst((1..=rows).map(|n| (n, wronskian_defect(d, &u, &uhat, &w0, n)))));
            }
            let s = kernel_sequence(dx, rows, &w0)?;
            let lam = dx.tf().lambda_matrix();
            let mut out: Vec<(usize, f64)> = (0..rows)
                .map(|n| (n, l_matrix_defect(app.coeffs(), &uhat, &s[n], n)))
                .collect();
            out.extend((1..rows).map(|n| (n, matrix_solution_residual(d, dx.op().q_blocks(), &uhat, &lam, n))));
            Ok(worst(out))
        }
        "transformed_states" => {
            let mut out = Vec::new();
            for &energy in &cfg.energies {
                for channel in [1, 2] {
                    let mut tpsi = app.transform_state(energy, channel)?;
                    if let Some((i, factor)) = ctx.fault_at() {
                        if i < tpsi.len() {
                            tpsi.values_mut()[i] = perturb_vec(&tpsi.values()[i], factor);
                        }
                    }
                    out.extend((0..rows).map(|m| (app.site(m), app.transformed_residual(&tpsi, energy, m))));
                }
            }
            Ok(worst(out))
        }
        name if name.starts_with("asym_") => {
            if app.parity != Parity::Even {
                return Ok(Outcome::Skipped(
                    "asymptotic expansion is derived for the even chain only; odd values are reported by the asymptotics command".into(),
                ));
            }
            let report = match ctx.asym() {
                Ok(r) => r,
                Err(e) => return Err(Error::Unsupported(e)),
            };
            let claim = claim_for(name).expect("registered asymptotic check");
            let dev = |n: usize| -> f64 {
                let row = report.row(n).expect("grid row");
                ctx.tamper_f(n, row.deviation(claim))
            };
            if name.ends_with("_decay") {
                let (early, late) = (dev(200), dev(2000));
                // identically vanishing deviations (degenerate seeds) have nothing to decay
                let ratio = if early == 0.0 && late == 0.0 { 0.0 } else { late / early };
                return Ok(measured(ratio, Some(2000)));
            }
            if (cfg.lambda1, cfg.lambda2) != CALIBRATED_LAMBDAS {
                return Ok(Outcome::Skipped(format!(
                    "calibrated constants exist only for (lambda1, lambda2) = {CALIBRATED_LAMBDAS:?}"
                )));
            }
            let from = if name.starts_with("asym_shift") {
                SHIFT_FROM
            } else {
                ASYM_FROM
            };
            Ok(worst(
                report
                    .rows
                    .iter()
                    .filter(|r| r.n >= from)
                    .map(|r| (r.n, (r.n * r.n) as f64 * dev(r.n))),
            ))
        }
        "p_decay" | "p_limit" => {
            if app.parity != Parity::Even {
                return Ok(Outcome::Skipped(
                    "the P matrix is defined on the even chain only".into(),
                ));
            }
            let report = match ctx.asym() {
                Ok(r) => r,
                Err(e) => return Err(Error::Unsupported(e)),
            };
            let dev = |n: usize| ctx.tamper_f(n, report.p_row(n).expect("p row").deviation);
            if ctx.name == "p_decay" {
                Ok(measured(dev(4000) / dev(400), Some(4000)))
            } else {
                Ok(measured(dev(4000), Some(4000)))
            }
        }
        other => Err(Error::Unsupported(format!("no evaluator for `{other}`"))),
    }
}

fn asymptotic_report(config: &VerifyConfig) -> Result<AsymptoticReport> {
    let app = Application::build(config.lambda1, config.lambda2, Parity::Even, ASYM_TO)?;
    asymptotics(
        &app,
        &grid(ASYM_FROM, ASYM_TO, ASYM_STEP),
        &[400, 4000],
        config.p_energies,
    )
}

/// All checks of one parity class.
pub fn run_section(config: &VerifyConfig, parity: Parity) -> Section {
    let context = CheckContext {
        lambda1: config.lambda1,
        lambda2: config.lambda2,
        parity,
        nmax: config.nmax,
        worst_at: None,
    };
    let fail_all = |msg: String| Section {
        parity,
        checks: REGISTRY
            .iter()
            .map(|s| Check {
                name: s.name.to_string(),
                residual: f64::MAX,
                tolerance: config.tolerance(s),
                pass: false,
                scale: s.scale,
                context: context.clone(),
                skipped: None,
                error: Some(msg.clone()),
            })
            .collect(),
    };
    let app = match Application::build(config.lambda1, config.lambda2, parity, config.nmax) {
        Ok(app) => app,
        Err(e) => return fail_all(e.to_string()),
    };
    let (asym, asym_error) = if parity == Parity::Even {
        match asymptotic_report(config) {
            Ok(r) => (Some(r), None),
            Err(e) => (None, Some(e.to_string())),
        }
    } else {
        (None, None)
    };
    let mut ctx = Ctx {
        config,
        app,
        asym,
        asym_error,
        name: "",
    };
    let mut checks = Vec::with_capacity(REGISTRY.len());
    for spec in REGISTRY {
        ctx.name = spec.name;
        let tolerance = config.tolerance(spec);
        let mut check = Check {
            name: spec.name.to_string(),
            residual: 0.0,
            tolerance,
            pass: true,
            scale: spec.scale,
            context: context.clone(),
            skipped: None,
            error: None,
        };
        match evaluate(&ctx) {
            Ok(Outcome::Measured(m)) => {
                // non-finite residuals are stored as f64::MAX so the report stays valid JSON
                check.residual = if m.residual.is_finite() { m.residual } else { f64::MAX };
                check.pass = m.residual <= tolerance;
                check.context.worst_at = m.worst_at;
            }
            Ok(Outcome::Skipped(reason)) => check.skipped = Some(reason),
            Err(e) => {
                check.residual = f64::MAX;
                check.pass = false;
                check.error = Some(e.to_string());
            }
        }
        checks.push(check);
    }
    Section { parity, checks }
}

pub fn summarize(sections: &[Section], wall_time_s: f64) -> Summary {
    let all = || sections.iter().flat_map(|s| s.checks.iter());
    Summary {
        passed: all().filter(|c| c.pass && c.skipped.is_none()).count(),
        failed: all().filter(|c| !c.pass).count(),
        skipped: all().filter(|c| c.skipped.is_some()).count(),
        wall_time_s,
    }
}

/// Run every registered check for each selected parity.
pub fn run_suite(config: &VerifyConfig) -> VerificationReport {
    let start = Instant::now();
    let sections = config
        .parity
        .parities()
        .into_iter()
        .map(|p| run_section(config, p))
        .collect::<Vec<_>>();
    let summary = summarize(&sections, start.elapsed().as_secs_f64());
    VerificationReport {
        config: config.clone(),
        sections,
        summary,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeds::Parity;

    #[test]
    fn registry_names_unique() {
        let mut names: Vec<_> = REGISTRY.iter().map(|s| s.name).collect();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), REGISTRY.len());
    }

    #[test]
    fn dense_oracle_limits() {
        let app = Application::build(-0.5, -1.0, Parity::Even, 40).unwrap();
        let dx = app.darboux();
        let h1 = app.transformed().operator();
        assert!(matches!(
            dense_oracle(dx.op(), &h1, app.coeffs(), 401),
            Err(Error::SizeLimit { .. })
        ));
        let res = dense_oracle(dx.op(), &h1, app.coeffs(), 20).unwrap();
        assert!(res.residual <= 1e-9);
    }

    #[test]
    fn dense_oracle_localizes_perturbation() {
        let app = Application::build(-0.5, -1.0, Parity::Even, 80).unwrap();
        let dx = app.darboux();
        let h1 = app.transformed().operator();
        let mut co = app.coeffs().clone();
        co.b[5] = perturb(&co.b[5], 1.01);
        let res = dense_oracle(dx.op(), &h1, &co, 35).unwrap();
        assert!(res.residual >= 1e-4);
        for (n, r) in res.row_residuals.iter().enumerate() {
            if (4..=6).contains(&n) {
                continue;
            }
            assert!(*r <= 1e-9, "row {n}: {r:e}");
        }
    }

    #[test]
    fn identity_transformation_is_exact() {
        // L = identity blocks on a diagonal chain commutes with it exactly
        let op = BlockJacobiOperator::from_blocks_unchecked(
            1,
            vec![SmallMatrix::zeros(2, 2); 10],
            (0..10).map(|n| smallmat::scalar(2, n as f64)).collect(),
        );
        let co = IntertwinerCoefficients {
            a: vec![SmallMatrix::zeros(2, 2); 11],
            b: vec![identity(2); 10],
        };
        let res = dense_oracle(&op, &op, &co, 10).unwrap();
        assert!(res.residual <= 1e-12);
    }

    #[test]
    fn scalar_pipeline_matches_closed_forms() {
        let app = Application::build(-0.7, -0.7, Parity::Even, 60).unwrap();
        let chain = ScalarChain::free_particle();
        let sub = chain.subchain(0);
        let d: Vec<f64> = (0..30).map(|m| sub.d(m)).collect();
        let q: Vec<f64> = (0..30).map(|m| sub.q(m)).collect();
        let seed = SeedSolution::hermite(-0.7, Parity::Even, 60).unwrap();
        let s = scalar_darboux(&d, &q, seed.chain_values(), 25).unwrap();
        for (n, (dt, qt)) in s.iter().enumerate() {
            let ab = app.darboux().closed_ab(n).unwrap();
            assert!((ab.a_plus - dt).abs() <= 1e-10 * dt.abs().max(1.0));
            assert!((ab.b_plus - (qt - q[n])).abs() <= 1e-10 * qt.abs().max(1.0));
        }
    }

    #[test]
    fn default_suite_passes() {
        let report = run_suite(&VerifyConfig::default());
        let failed: Vec<_> = report.checks().filter(|c| !c.pass).collect();
        assert!(failed.is_empty(), "{failed:#?}");
        assert!(report.find(Parity::Even, "degenerate_minus").unwrap().skipped.is_some());
    }

    #[test]
    fn validate_rejects() {
        let cfg = VerifyConfig {
            lambda1: 0.1,
            ..VerifyConfig::default()
        };
        assert!(cfg.validate().is_err());
        let mut cfg = VerifyConfig::default();
        cfg.tolerances.insert("nope".into(), 1.0);
        assert!(cfg.validate().is_err());
        let cfg = VerifyConfig {
            nmax: 4,
            ..VerifyConfig::default()
        };
        assert!(cfg.validate().is_err());
        assert!(VerifyConfig::default().validate().is_ok());
    }
}
