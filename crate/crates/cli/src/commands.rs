use std::path::PathBuf;
use std::time::Instant;

use jdx_core::blockjacobi::{section_eigenvalues, SECTION_SIZE_LIMIT};
use jdx_core::harness::{run_section, summarize, VerificationReport, ASYM_FROM, ASYM_STEP, ASYM_TO};
use jdx_core::hermite2ch::{asymptotics, grid, p_infinity, traveling_wave, Application, Claim};
use jdx_core::seeds::Parity;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::CliError;
use crate::output::{commit, num, Artifact, Format, Table};

pub const POTENTIAL_HEADER: &[&str] = &[
    "n", "a_plus", "a_minus", "b_plus", "b_minus", "G11", "G12", "R11", "R12",
];
pub const STATE_HEADER: &[&str] = &["n", "psi1", "psi2", "tpsi1", "tpsi2", "residual"];
pub const CLAIM_HEADER: &[&str] = &["n", "n2_times_abs_dev"];
pub const P_HEADER: &[&str] = &[
    "n",
    "P11_re",
    "P11_im",
    "P12_re",
    "P12_im",
    "P21_re",
    "P21_im",
    "P22_re",
    "P22_im",
    "max_abs_dev",
];
pub const SPECTRUM_HEADER: &[&str] = &["index", "h0", "h1"];

pub const REPORT_FILE: &str = "verify_report.json";

fn path(config: &RunConfig, stem: String, format: Format) -> PathBuf {
    config.out.join(format!("{stem}.{}", format.extension()))
}

fn build(config: &RunConfig, parity: Parity, nmax: usize) -> Result<Application, CliError> {
    Ok(Application::build(config.lambda1, config.lambda2, parity, nmax)?)
}

fn collect<T: Send>(
    config: &RunConfig,
    f: impl Fn(Parity) -> Result<Vec<T>, CliError> + Sync,
) -> Result<Vec<T>, CliError> {
    let per_parity = config
        .parity
        .parities()
        .into_par_iter()
        .map(&f)
        .collect::<Result<Vec<_>, _>>()?;
    Ok(per_parity.into_iter().flatten().collect())
}

/// One potential table per parity class.
pub fn generate(config: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let artifacts = collect(config, |parity| {
        let rows = build(config, parity, config.nmax)?.potential_table()?;
        let target = path(config, format!("potential_{parity}"), config.format);
        Ok(vec![match config.format {
            Format::Json => Artifact::json(target, &rows),
            Format::Csv => {
                let mut table = Table::new(POTENTIAL_HEADER);
                for r in &rows {
                    table.push(vec![
                        r.n.to_string(),
                        num(r.a_plus),
                        num(r.a_minus),
                        num(r.b_plus),
                        num(r.b_minus),
                        num(r.g11),
                        num(r.g12),
                        num(r.r11),
                        num(r.r12),
                    ]);
                }
                Artifact::table(target, &table)
            }
        }])
    })?;
    finish(artifacts)
}

/// File stem of the transformed-state table for one energy.
pub fn state_stem(parity: Parity, channel: usize, energy: f64) -> String {
    format!("states_{parity}_ch{channel}_E{energy}")
}

/// One state table per parity class and energy.
pub fn transform(config: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    if config.energies.is_empty() {
        return Err(CliError::config("energies", "at least one energy is required"));
    }
    let artifacts = collect(config, |parity| {
        let app = build(config, parity, config.nmax)?;
        config
            .energies
            .par_iter()
            .map(|&energy| {
                let rows = app.state_table(energy, config.channel)?;
                let target = path(config, state_stem(parity, config.channel, energy), config.format);
                Ok(match config.format {
                    Format::Json => Artifact::json(target, &rows),
                    Format::Csv => {
                        let mut table = Table::new(STATE_HEADER);
                        for r in &rows {
                            table.push(vec![
                                r.n.to_string(),
                                num(r.psi1),
                                num(r.psi2),
                                num(r.tpsi1),
                                num(r.tpsi2),
                                num(r.residual),
                            ]);
                        }
                        Artifact::table(target, &table)
                    }
                })
            })
            .collect()
    })?;
    finish(artifacts)
}

#[derive(Debug, Serialize)]
struct ClaimSeries<'a> {
    claim: &'a str,
    parity: Parity,
    n: Vec<usize>,
    n2_times_abs_dev: Vec<f64>,
}

#[derive(Debug, Serialize)]
struct PEntry {
    /// `n` as a string so the limit row can be labeled `inf`.
    n: String,
    /// Row-major entries as `(re, im)`.
    p: Vec<(f64, f64)>,
    max_abs_dev: f64,
}

#[derive(Debug, Serialize)]
struct PSeries {
    energies: (f64, f64),
    rows: Vec<PEntry>,
}

/// Weighted deviation series for every claim, plus the P-matrix convergence
/// table on the even chain.
pub fn asymptotics_cmd(config: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let artifacts = collect(config, |parity| {
        let top = ASYM_TO + parity.offset();
        let app = build(config, parity, top)?;
        let ns = grid(ASYM_FROM + parity.offset(), top, ASYM_STEP);
        let report = asymptotics(&app, &ns, &[], config.p_energies)?;
        let mut out = Vec::new();
        for claim in Claim::ALL {
            let target = path(config, format!("asym_{}_{parity}", claim.name()), config.format);
            out.push(match config.format {
                Format::Json => Artifact::json(
                    target,
                    &ClaimSeries {
                        claim: claim.name(),
                        parity,
                        n: report.rows.iter().map(|r| r.n).collect(),
                        n2_times_abs_dev: report.rows.iter().map(|r| r.weighted(claim)).collect(),
                    },
                ),
                Format::Csv => {
                    let mut table = Table::new(CLAIM_HEADER);
                    for r in &report.rows {
                        table.push(vec![r.n.to_string(), num(r.weighted(claim))]);
                    }
                    Artifact::table(target, &table)
                }
            });
        }
        if parity == Parity::Even {
            out.push(p_table(config, &app, &ns)?);
        }
        Ok(out)
    })?;
    finish(artifacts)
}

fn p_table(config: &RunConfig, app: &Application, ns: &[usize]) -> Result<Artifact, CliError> {
    let (e1, e2) = config.p_energies;
    let len = ns.iter().max().map_or(0, |&n| n / 2 + 2);
    let waves = [traveling_wave(e1, len)?, traveling_wave(e2, len)?];
    let limit = p_infinity(config.lambda1, config.lambda2, e1, e2);
    let entries = |p: &jdx_core::smallmat::SmallMatrix| {
        (0..2)
            .flat_map(|i| (0..2).map(move |j| (i, j)))
            .map(|ij| (p[ij].re, p[ij].im))
            .collect::<Vec<_>>()
    };
    let mut rows = Vec::with_capacity(ns.len() + 1);
    for &n in ns {
        let p = app.scatter_p_with(&waves, n)?;
        let dev = (&p - &limit).iter().map(|z| z.norm()).fold(0.0, f64::max);
        rows.push(PEntry {
            n: n.to_string(),
            p: entries(&p),
            max_abs_dev: dev,
        });
    }
    rows.push(PEntry {
        n: "inf".into(),
        p: entries(&limit),
        max_abs_dev: 0.0,
    });
    let target = path(config, "p_matrix_even".into(), config.format);
    Ok(match config.format {
        Format::Json => Artifact::json(
            target,
            &PSeries {
                energies: config.p_energies,
                rows,
            },
        ),
        Format::Csv => {
            let mut table = Table::new(P_HEADER);
            for entry in rows {
                let mut row = vec![entry.n];
                row.extend(entry.p.iter().flat_map(|&(re, im)| [num(re), num(im)]));
                row.push(num(entry.max_abs_dev));
                table.push(row);
            }
            Artifact::table(target, &table)
        }
    })
}

/// Finite-section eigenvalues of the original and transformed operators.
pub fn spectrum(config: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let artifacts = collect(config, |parity| {
        let app = build(config, parity, config.nmax)?;
        let h0 = app.darboux().op();
        let h1 = app.transformed().operator();
        let blocks = app.rows().min(h0.len()).min(h1.len()).min(SECTION_SIZE_LIMIT / 2);
        let ev0 = section_eigenvalues(&h0.finite_section(blocks))?;
        let ev1 = section_eigenvalues(&h1.finite_section(blocks))?;
        let target = path(config, format!("spectrum_{parity}"), config.format);
        Ok(vec![match config.format {
            Format::Json => Artifact::json(target, &(ev0, ev1)),
            Format::Csv => {
                let mut table = Table::new(SPECTRUM_HEADER);
                for (i, (a, b)) in ev0.iter().zip(&ev1).enumerate() {
                    table.push(vec![i.to_string(), num(*a), num(*b)]);
                }
                Artifact::table(target, &table)
            }
        }])
    })?;
    finish(artifacts)
}

/// Run the suite, write the JSON report and fail if any check failed.
pub fn verify(config: &RunConfig) -> Result<(VerificationReport, PathBuf), CliError> {
    let vc = config.verify_config();
    vc.validate().map_err(|e| CliError::config("config", e.to_string()))?;
    let start = Instant::now();
    let sections = vc
        .parity
        .parities()
        .into_par_iter()
        .map(|p| run_section(&vc, p))
        .collect::<Vec<_>>();
    let summary = summarize(&sections, start.elapsed().as_secs_f64());
    let report = VerificationReport {
        config: vc,
        sections,
        summary,
    };
    let target = config.out.join(REPORT_FILE);
    commit(&[Artifact::json(target.clone(), &report)])?;
    Ok((report, target))
}

fn finish(artifacts: Vec<Artifact>) -> Result<Vec<PathBuf>, CliError> {
    commit(&artifacts)?;
    Ok(artifacts.into_iter().map(|a| a.path).collect())
}
