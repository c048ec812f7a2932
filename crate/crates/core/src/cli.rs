//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 computation
//! error. Failures print one JSON object on standard error. Output bytes
//! depend only on the configuration, the seed and the crate version.

use crate::checks::{
    chi_square_two_sample, ci_coverage_rate, ks_normal, poisson_gof, ratio_exceedance,
    z_empirical_samples, ChiSquareResult, CoverageRate, GofResult, Reference, CALIBRATION_NOTE,
};
use crate::error::{Error, Result};
use crate::estimator::{
    confidence_interval, CoverageEstimate, FrequencyProfile, ProfileMode, VarianceMode,
};
use crate::io::{example4_profile, fmt_f64, parse_counts_file, to_json};
use crate::population::{
    build_model, condition_report, integral_approximations, ConditionReport, FamilySpec,
    IntegralApproximation, TruncationPolicy, DEFAULT_EPSILONS, DEFAULT_MAX_ATOMS,
};
use crate::simulation::{control_poissonized_f1, run_replicates, ReplicateBatch, SimulationConfig};
use crate::VERSION;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

/// Interval reported alongside the tomato EST example, at level 0.95.
pub const PUBLISHED_EXAMPLE4_INTERVAL: (f64, f64) = (0.5391, 0.5777);

#[derive(Parser, Debug)]
#[command(
    name = "coverage",
    version,
    about = "Missing-mass estimation and CLT condition diagnostics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Estimate the missing mass and its Wald interval from a counts file.
    Estimate(EstimateArgs),
    /// Run a seeded Monte Carlo batch and goodness-of-fit checks.
    Simulate(SimulateArgs),
    /// Tabulate CLT condition trackers over an n grid.
    Conditions(ConditionsArgs),
    /// Recompute the tomato EST example from the embedded profile.
    ReproduceExample4(ReproduceArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Args, Debug)]
struct OutputArgs {
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    /// Output path; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EstimateArgs {
    /// Species counts, one per line, or a `j<TAB>F_j` profile with optional `n=` header
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    /// `esty` or `f1-only`
    #[arg(long, default_value = "esty")]
    variance_mode: String,
    /// Require Σ j·F_j to equal the declared n.
    #[arg(long, conflicts_with = "declared")]
    strict: bool,
    /// Accept a mismatch between Σ j·F_j and the declared n, with a warning.
    #[arg(long)]
    declared: bool,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args, Debug)]
struct TruncationArgs {
    /// Bound on n times the discarded tail mass.
    #[arg(long)]
    truncation_tol: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_MAX_ATOMS)]
    max_atoms: usize,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Population family, e.g. `pareto:b=3` or `example3-case1`
    #[arg(long)]
    family: String,
    /// Sample size; scientific notation such as `1e6` is accepted
    #[arg(long)]
    n: String,
    #[arg(long, default_value_t = 1000)]
    replicates: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Also draw the coupled Poissonized sample at λ = n.
    #[arg(long)]
    coupled: bool,
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    /// `esty` or `f1-only`
    #[arg(long, default_value = "esty")]
    variance_mode: String,
    #[command(flatten)]
    truncation: TruncationArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args, Debug)]
struct ConditionsArgs {
    /// Population family, e.g. `pareto:b=3` or `example3-case1`
    #[arg(long)]
    family: String,
    /// Comma-separated, strictly increasing sample sizes.
    #[arg(long)]
    n_grid: String,
    /// Comma-separated Lindeberg thresholds [default: 0.01,0.05,0.1,0.5,1]
    #[arg(long)]
    epsilons: Option<String>,
    /// Write the model at the largest n as an `i<TAB>p` table.
    #[arg(long)]
    model_table: Option<PathBuf>,
    #[command(flatten)]
    truncation: TruncationArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args, Debug)]
struct ReproduceArgs {
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    #[command(flatten)]
    output: OutputArgs,
}

/// Validated run configuration; the serialized form is embedded in every output.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "subcommand", rename_all = "kebab-case")]
pub enum RunConfig {
    Estimate {
        input: PathBuf,
        level: f64,
        variance_mode: VarianceMode,
        profile_mode: Option<ProfileMode>,
        format: Format,
        #[serde(skip)]
        out: Option<PathBuf>,
    },
    Simulate {
        simulation: SimulationConfig,
        level: f64,
        variance_mode: VarianceMode,
        format: Format,
        #[serde(skip)]
        out: Option<PathBuf>,
    },
    Conditions {
        family: FamilySpec,
        n_grid: Vec<u64>,
        epsilons: Vec<f64>,
        truncation: TruncationPolicy,
        format: Format,
        #[serde(skip)]
        model_table: Option<PathBuf>,
        #[serde(skip)]
        out: Option<PathBuf>,
    },
    ReproduceExample4 {
        level: f64,
        format: Format,
        #[serde(skip)]
        out: Option<PathBuf>,
    },
}

/// Parses `1000`, `1e6` or `2.5e5` as a sample size.
fn parse_size(s: &str) -> std::result::Result<u64, String> {
    let s = s.trim();
    if let Ok(v) = s.parse::<u64>() {
        return Ok(v);
    }
    match s.parse::<f64>() {
        Ok(v) if v >= 0.0 && v.fract() == 0.0 && v < 9.0e18 => Ok(v as u64),
        _ => Err(format!("'{s}' is not a nonnegative integer")),
    }
}

fn parse_list<T>(
    s: &str,
    what: &str,
    item: impl Fn(&str) -> std::result::Result<T, String>,
) -> std::result::Result<Vec<T>, String> {
    s.split(',')
        .map(|t| item(t.trim()).map_err(|e| format!("{what}: {e}")))
        .collect()
}

/// Collects every configuration problem before failing.
#[derive(Default)]
struct Problems(Vec<String>);

impl Problems {
    fn take<T>(&mut self, r: std::result::Result<T, String>) -> Option<T> {
        r.map_err(|e| self.0.push(e)).ok()
    }

    fn check(&mut self, ok: bool, message: impl FnOnce() -> String) {
        if !ok {
            self.0.push(message());
        }
    }

    fn finish<T>(self, value: Option<T>) -> Result<T> {
        match value {
            Some(v) if self.0.is_empty() => Ok(v),
            _ => Err(Error::Config(self.0)),
        }
    }
}

fn level_problem(level: f64) -> std::result::Result<f64, String> {
    if level > 0.0 && level < 1.0 {
        Ok(level)
    } else {
        Err(format!("--level must lie in (0, 1), got {level}"))
    }
}

fn truncation_policy(args: &TruncationArgs, p: &mut Problems) -> TruncationPolicy {
    if let Some(tol) = args.truncation_tol {
        p.check(tol > 0.0 && tol.is_finite(), || {
            format!("--truncation-tol must be positive, got {tol}")
        });
    }
    p.check(args.max_atoms > 0, || "--max-atoms must be positive".into());
    TruncationPolicy {
        tolerance: args.truncation_tol,
        max_atoms: args.max_atoms,
    }
}

impl RunConfig {
    fn from_command(command: Command) -> Result<Self> {
        let mut p = Problems::default();
        let err = |e: Error| e.to_string();
        match command {
            Command::Estimate(a) => {
                let level = p.take(level_problem(a.level));
                let mode = p.take(a.variance_mode.parse::<VarianceMode>().map_err(err));
                let profile_mode = if a.strict {
                    Some(ProfileMode::Strict)
                } else if a.declared {
                    Some(ProfileMode::Declared)
                } else {
                    None
                };
                let value = level
                    .zip(mode)
                    .map(|(level, variance_mode)| RunConfig::Estimate {
                        input: a.input,
                        level,
                        variance_mode,
                        profile_mode,
                        format: a.output.format,
                        out: a.output.out,
                    });
                p.finish(value)
            }
            Command::Simulate(a) => {
                let family = p.take(a.family.parse::<FamilySpec>().map_err(err));
                if let Some(f) = &family {
                    p.take(f.validate().map_err(err));
                }
                let n = p.take(parse_size(&a.n).map_err(|e| format!("--n: {e}")));
                p.check(n != Some(0), || "--n must be positive".into());
                p.check(a.replicates >= 1, || {
                    "--replicates must be at least 1".into()
                });
                let level = p.take(level_problem(a.level));
                let mode = p.take(a.variance_mode.parse::<VarianceMode>().map_err(err));
                let truncation = truncation_policy(&a.truncation, &mut p);
                p.check(
                    a.output.format == Format::Json || a.output.out.is_some(),
                    || "--format csv needs --out for the records file and its companion".into(),
                );
                let value = match (family, n, level, mode) {
                    (Some(family), Some(n), Some(level), Some(variance_mode)) => {
                        Some(RunConfig::Simulate {
                            simulation: SimulationConfig {
                                family,
                                n,
                                replicates: a.replicates,
                                seed: a.seed,
                                coupled: a.coupled,
                                truncation,
                            },
                            level,
                            variance_mode,
                            format: a.output.format,
                            out: a.output.out,
                        })
                    }
                    _ => None,
                };
                p.finish(value)
            }
            Command::Conditions(a) => {
                let family = p.take(a.family.parse::<FamilySpec>().map_err(err));
                if let Some(f) = &family {
                    p.take(f.validate().map_err(err));
                }
                let n_grid = p.take(parse_list(&a.n_grid, "--n-grid", parse_size));
                if let Some(g) = &n_grid {
                    p.check(g.iter().all(|&n| n > 0), || {
                        "--n-grid entries must be positive".into()
                    });
                    p.check(g.windows(2).all(|w| w[0] < w[1]), || {
                        "--n-grid must be strictly increasing".into()
                    });
                }
                let epsilons = match &a.epsilons {
                    Some(s) => p.take(parse_list(s, "--epsilons", |t| {
                        t.parse::<f64>()
                            .map_err(|_| format!("'{t}' is not a number"))
                    })),
                    None => Some(DEFAULT_EPSILONS.to_vec()),
                };
                if let Some(e) = &epsilons {
                    p.check(e.iter().all(|&x| x > 0.0 && x.is_finite()), || {
                        "--epsilons entries must be positive".into()
                    });
                    p.check(e.windows(2).all(|w| w[0] < w[1]), || {
                        "--epsilons must be strictly increasing".into()
                    });
                }
                let truncation = truncation_policy(&a.truncation, &mut p);
                let value = match (family, n_grid, epsilons) {
                    (Some(family), Some(n_grid), Some(epsilons)) => Some(RunConfig::Conditions {
                        family,
                        n_grid,
                        epsilons,
                        truncation,
                        format: a.output.format,
                        model_table: a.model_table,
                        out: a.output.out,
                    }),
                    _ => None,
                };
                p.finish(value)
            }
            Command::ReproduceExample4(a) => {
                let level = p.take(level_problem(a.level));
                let value = level.map(|level| RunConfig::ReproduceExample4 {
                    level,
                    format: a.output.format,
                    out: a.output.out,
                });
                p.finish(value)
            }
        }
    }

    fn out(&self) -> Option<&Path> {
        match self {
            RunConfig::Estimate { out, .. }
            | RunConfig::Simulate { out, .. }
            | RunConfig::Conditions { out, .. }
            | RunConfig::ReproduceExample4 { out, .. } => out.as_deref(),
        }
    }
}

#[derive(Serialize)]
struct ProfileSummary {
    n: u64,
    mode: ProfileMode,
    observed_total: u128,
    species_observed: u64,
    f1: u64,
    f2: u64,
    warnings: Vec<String>,
}

impl ProfileSummary {
    fn of(p: &FrequencyProfile) -> Self {
        Self {
            n: p.n(),
            mode: p.mode(),
            observed_total: p.observed_total(),
            species_observed: p.species_observed(),
            f1: p.f(1),
            f2: p.f(2),
            warnings: p.warnings(),
        }
    }
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    version: &'static str,
    config: &'a RunConfig,
    #[serde(flatten)]
    body: T,
}

fn csv_bytes(header: &[&str], rows: &[Vec<String>]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::InvalidParameter(format!("csv: {e}"));
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.write_record(r).map_err(csv_err)?;
    }
    w.into_inner()
        .map_err(|e| Error::InvalidParameter(format!("csv: {e}")))
}

fn opt_f64(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

fn opt_u64(v: Option<u64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn estimate_row(label: &str, e: &CoverageEstimate) -> Vec<String> {
    vec![
        label.to_string(),
        fmt_f64(e.q_hat),
        fmt_f64(e.variance_hat),
        fmt_f64(e.ci_low),
        fmt_f64(e.ci_high),
        fmt_f64(e.level),
        e.mode.to_string(),
        e.degenerate.to_string(),
    ]
}

const ESTIMATE_HEADER: [&str; 8] = [
    "label",
    "q_hat",
    "variance_hat",
    "ci_low",
    "ci_high",
    "level",
    "mode",
    "degenerate",
];

/// Primary artifact plus optional companion files, all written after the computation succeeds.
struct Artifacts {
    primary: Vec<u8>,
    companions: Vec<(PathBuf, Vec<u8>)>,
}

fn run_estimate(config: &RunConfig) -> Result<Artifacts> {
    let RunConfig::Estimate {
        input,
        level,
        variance_mode,
        profile_mode,
        format,
        ..
    } = config
    else {
        unreachable!()
    };
    let profile = parse_counts_file(input, *profile_mode)?;
    let estimate = confidence_interval(&profile, *level, *variance_mode)?;
    let primary = match format {
        Format::Json => {
            #[derive(Serialize)]
            struct Body {
                profile: ProfileSummary,
                estimate: CoverageEstimate,
            }
            to_json(&Envelope {
                version: VERSION,
                config,
                body: Body {
                    profile: ProfileSummary::of(&profile),
                    estimate,
                },
            })?
            .into_bytes()
        }
        Format::Csv => csv_bytes(&ESTIMATE_HEADER, &[estimate_row("estimate", &estimate)])?,
    };
    Ok(Artifacts {
        primary,
        companions: Vec::new(),
    })
}

#[derive(Serialize)]
struct PublishedInterval {
    level: f64,
    ci_low: f64,
    ci_high: f64,
    f1_only_low_difference: f64,
    f1_only_high_difference: f64,
}

fn run_example4(config: &RunConfig) -> Result<Artifacts> {
    let RunConfig::ReproduceExample4 { level, format, .. } = config else {
        unreachable!()
    };
    let profile = example4_profile();
    let esty = confidence_interval(&profile, *level, VarianceMode::Esty)?;
    let f1_only = confidence_interval(&profile, *level, VarianceMode::F1Only)?;
    let (lo, hi) = PUBLISHED_EXAMPLE4_INTERVAL;
    let published = PublishedInterval {
        level: 0.95,
        ci_low: lo,
        ci_high: hi,
        f1_only_low_difference: f1_only.ci_low - lo,
        f1_only_high_difference: f1_only.ci_high - hi,
    };
    let notes = vec![
        "the published interval matches the f1-only denominator F_1 (1 - F_1/n); \
         the esty denominator F_1 (1 - F_1/n) + 2 F_2 gives a wider interval"
            .to_string(),
        format!(
            "listed counts give sum j F_j = {} against the declared n = {}",
            profile.observed_total(),
            profile.n()
        ),
    ];
    let primary = match format {
        Format::Json => {
            #[derive(Serialize)]
            struct Body {
                profile: ProfileSummary,
                q_hat: f64,
                esty: CoverageEstimate,
                f1_only: CoverageEstimate,
                published: PublishedInterval,
                notes: Vec<String>,
            }
            to_json(&Envelope {
                version: VERSION,
                config,
                body: Body {
                    profile: ProfileSummary::of(&profile),
                    q_hat: esty.q_hat,
                    esty,
                    f1_only,
                    published,
                    notes,
                },
            })?
            .into_bytes()
        }
        Format::Csv => {
            let published_row = vec![
                "published".into(),
                String::new(),
                String::new(),
                fmt_f64(lo),
                fmt_f64(hi),
                fmt_f64(0.95),
                String::new(),
                String::new(),
            ];
            csv_bytes(
                &ESTIMATE_HEADER,
                &[
                    estimate_row("esty", &esty),
                    estimate_row("f1-only", &f1_only),
                    published_row,
                ],
            )?
        }
    };
    Ok(Artifacts {
        primary,
        companions: Vec::new(),
    })
}

#[derive(Serialize)]
struct CouplingCheck {
    /// Mean of `|ξ_n - ζ_n| / s_n` over replicates.
    mean_abs_gap: f64,
    s_n: f64,
    /// Coupled Poissonized `F_1` against an independent Poissonized batch.
    marginal_chi_square: ChiSquareResult,
}

#[derive(Serialize)]
struct RatioExceedance {
    tolerance: f64,
    fraction: f64,
}

#[derive(Serialize)]
struct SimulationChecks {
    calibration_note: &'static str,
    ks_z_expected: GofResult,
    ks_z_empirical: Option<GofResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    z_empirical_error: Option<String>,
    ci_coverage: CoverageRate,
    ratio_exceedance: RatioExceedance,
    /// Total variation of the `F_1` batch against `Poisson(E F_1)`; needs 100 replicates.
    poisson_f1: Option<GofResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    coupling: Option<CouplingCheck>,
}

fn simulation_checks(
    batch: &ReplicateBatch,
    sim: &SimulationConfig,
    level: f64,
    mode: VarianceMode,
) -> Result<SimulationChecks> {
    let (ks_z_empirical, z_empirical_error) = match z_empirical_samples(batch) {
        Ok(z) if z.len() >= 2 => (Some(ks_normal(&z)?), None),
        Ok(_) => (
            None,
            Some("fewer than 2 non-degenerate replicates".to_string()),
        ),
        Err(e) => (None, Some(e.to_string())),
    };
    let f1: Vec<u64> = batch.records.iter().map(|r| r.f1).collect();
    let poisson_f1 = if f1.len() >= 100 && batch.expected.ef1 > 0.0 {
        Some(poisson_gof(&f1, batch.expected.ef1)?)
    } else {
        None
    };
    let coupling = if sim.coupled {
        let s_n = batch.expected.s_sq.sqrt();
        let gaps: Vec<f64> = batch
            .records
            .iter()
            .map(|r| (r.xi - r.zeta.expect("coupled record")).abs() / s_n)
            .collect();
        let coupled_f1: Vec<u64> = batch
            .records
            .iter()
            .map(|r| r.poisson_f1.expect("coupled record"))
            .collect();
        let control = control_poissonized_f1(sim, coupled_f1.len())?;
        Some(CouplingCheck {
            mean_abs_gap: gaps.iter().sum::<f64>() / gaps.len() as f64,
            s_n,
            marginal_chi_square: chi_square_two_sample(&coupled_f1, &control)?,
        })
    } else {
        None
    };
    let ks_z_expected = if batch.records.len() >= 2 {
        ks_normal(&batch.z_expected())?
    } else {
        GofResult {
            statistic: f64::NAN,
            sample_size: batch.records.len(),
            reference: Reference::StandardNormal,
            p_value: None,
        }
    };
    Ok(SimulationChecks {
        calibration_note: CALIBRATION_NOTE,
        ks_z_expected,
        ks_z_empirical,
        z_empirical_error,
        ci_coverage: ci_coverage_rate(batch, level, mode)?,
        ratio_exceedance: RatioExceedance {
            tolerance: 0.1,
            fraction: ratio_exceedance(batch, 0.1),
        },
        poisson_f1,
        coupling,
    })
}

fn gof_row(name: &str, g: &GofResult) -> Vec<String> {
    let reference = match g.reference {
        Reference::StandardNormal => "standard-normal".to_string(),
        Reference::Poisson { mean } => format!("poisson({})", fmt_f64(mean)),
    };
    vec![
        name.into(),
        fmt_f64(g.statistic),
        g.sample_size.to_string(),
        reference,
        opt_f64(g.p_value),
    ]
}

/// `runs/out.csv` → `runs/out.gof.json`.
pub fn companion_path(out: &Path) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    out.with_file_name(format!("{stem}.gof.json"))
}

fn run_simulate(config: &RunConfig) -> Result<Artifacts> {
    let RunConfig::Simulate {
        simulation,
        level,
        variance_mode,
        format,
        out,
    } = config
    else {
        unreachable!()
    };
    let batch = run_replicates(simulation)?;
    let checks = simulation_checks(&batch, simulation, *level, *variance_mode)?;
    match format {
        Format::Json => {
            #[derive(Serialize)]
            struct Body<'a> {
                batch: &'a ReplicateBatch,
                checks: SimulationChecks,
            }
            let primary = to_json(&Envelope {
                version: VERSION,
                config,
                body: Body {
                    batch: &batch,
                    checks,
                },
            })?;
            Ok(Artifacts {
                primary: primary.into_bytes(),
                companions: Vec::new(),
            })
        }
        Format::Csv => {
            let coupled = simulation.coupled;
            let mut header = vec![
                "index",
                "q_true",
                "q_hat",
                "f1",
                "f2",
                "xi",
                "z_expected",
                "z_empirical",
                "degenerate",
            ];
            if coupled {
                header.extend(["zeta", "poisson_total", "poisson_f1"]);
            }
            let rows: Vec<Vec<String>> = batch
                .records
                .iter()
                .map(|r| {
                    let mut row = vec![
                        r.index.to_string(),
                        fmt_f64(r.q_true),
                        fmt_f64(r.q_hat),
                        r.f1.to_string(),
                        r.f2.to_string(),
                        fmt_f64(r.xi),
                        fmt_f64(r.z_expected),
                        opt_f64(r.z_empirical),
                        r.degenerate.to_string(),
                    ];
                    if coupled {
                        row.extend([
                            opt_f64(r.zeta),
                            opt_u64(r.poisson_total),
                            opt_u64(r.poisson_f1),
                        ]);
                    }
                    row
                })
                .collect();
            let primary = csv_bytes(&header, &rows)?;

            #[derive(Serialize)]
            struct Companion<'a> {
                kept_atoms: usize,
                tail_mass_bound: f64,
                expected: crate::simulation::ExpectedMoments,
                degenerate_count: usize,
                warnings: &'a [String],
                checks: SimulationChecks,
                gof_table: Vec<Vec<String>>,
            }
            let mut gof_table = vec![gof_row("ks_z_expected", &checks.ks_z_expected)];
            if let Some(g) = &checks.ks_z_empirical {
                gof_table.push(gof_row("ks_z_empirical", g));
            }
            if let Some(g) = &checks.poisson_f1 {
                gof_table.push(gof_row("poisson_f1_tv", g));
            }
            let companion = to_json(&Envelope {
                version: VERSION,
                config,
                body: Companion {
                    kept_atoms: batch.kept_atoms,
                    tail_mass_bound: batch.tail_mass_bound,
                    expected: batch.expected,
                    degenerate_count: batch.degenerate_count,
                    warnings: &batch.warnings,
                    checks,
                    gof_table,
                },
            })?;
            let out = out.as_deref().expect("validated: csv needs --out");
            Ok(Artifacts {
                primary,
                companions: vec![(companion_path(out), companion.into_bytes())],
            })
        }
    }
}

#[derive(Serialize)]
struct ApproximationRow {
    n: u64,
    #[serde(flatten)]
    approximation: Option<IntegralApproximation>,
    #[serde(skip_serializing_if = "Option::is_none")]
    unavailable: Option<String>,
}

fn run_conditions(config: &RunConfig) -> Result<Artifacts> {
    let RunConfig::Conditions {
        family,
        n_grid,
        epsilons,
        truncation,
        format,
        model_table,
        ..
    } = config
    else {
        unreachable!()
    };
    let report = condition_report(family, n_grid, epsilons, *truncation)?;
    let approximations: Vec<ApproximationRow> = n_grid
        .iter()
        .map(|&n| match integral_approximations(family, n) {
            Ok(a) => ApproximationRow {
                n,
                approximation: Some(a),
                unavailable: None,
            },
            Err(e) => ApproximationRow {
                n,
                approximation: None,
                unavailable: Some(e.to_string()),
            },
        })
        .collect();
    let mut companions = Vec::new();
    if let Some(path) = model_table {
        let n = *n_grid.last().expect("validated nonempty grid");
        let model = build_model(family, n, *truncation)?;
        let mut buf = Vec::new();
        model.write_table(&mut buf)?;
        companions.push((path.clone(), buf));
    }
    let primary = match format {
        Format::Json => {
            #[derive(Serialize)]
            struct Body<'a> {
                report: &'a ConditionReport,
                integral_approximations: Vec<ApproximationRow>,
            }
            to_json(&Envelope {
                version: VERSION,
                config,
                body: Body {
                    report: &report,
                    integral_approximations: approximations,
                },
            })?
            .into_bytes()
        }
        Format::Csv => {
            let mut header: Vec<String> = [
                "n",
                "kept_atoms",
                "tail_mass_bound",
                "ef1",
                "ef2",
                "ef1_over_n",
                "ef2_over_n",
                "ef1_plus_ef2",
                "s_sq",
            ]
            .iter()
            .map(|s| s.to_string())
            .collect();
            header.extend(epsilons.iter().map(|e| format!("lindeberg_eps_{e}")));
            header.extend(["ef1_integral".into(), "s_sq_integral".into()]);
            let rows: Vec<Vec<String>> = report
                .records
                .iter()
                .zip(&approximations)
                .map(|(r, a)| {
                    let mut row = vec![
                        r.n.to_string(),
                        r.kept_atoms.to_string(),
                        fmt_f64(r.tail_mass_bound),
                        fmt_f64(r.ef1),
                        fmt_f64(r.ef2),
                        fmt_f64(r.ef1_over_n),
                        fmt_f64(r.ef2_over_n),
                        fmt_f64(r.ef1_plus_ef2),
                        fmt_f64(r.s_sq),
                    ];
                    row.extend(r.lindeberg.iter().map(|p| fmt_f64(p.value)));
                    row.push(opt_f64(a.approximation.map(|x| x.ef1_approx)));
                    row.push(opt_f64(a.approximation.map(|x| x.s_sq_approx)));
                    row
                })
                .collect();
            let header: Vec<&str> = header.iter().map(String::as_str).collect();
            csv_bytes(&header, &rows)?
        }
    };
    Ok(Artifacts {
        primary,
        companions,
    })
}

pub fn run(config: &RunConfig, stdout: &mut dyn Write) -> Result<()> {
    let artifacts = match config {
        RunConfig::Estimate { .. } => run_estimate(config)?,
        RunConfig::Simulate { .. } => run_simulate(config)?,
        RunConfig::Conditions { .. } => run_conditions(config)?,
        RunConfig::ReproduceExample4 { .. } => run_example4(config)?,
    };
    match config.out() {
        Some(path) => std::fs::write(path, &artifacts.primary)?,
        None => stdout.write_all(&artifacts.primary)?,
    }
    for (path, bytes) in &artifacts.companions {
        std::fs::write(path, bytes)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct ErrorReport<'a> {
    error: ErrorBody<'a>,
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    kind: &'a str,
    message: String,
    exit_code: i32,
    #[serde(skip_serializing_if = "<[String]>::is_empty")]
    problems: &'a [String],
}

fn report_error(
    stderr: &mut dyn Write,
    kind: &str,
    message: String,
    problems: &[String],
    exit_code: i32,
) -> i32 {
    let report = ErrorReport {
        error: ErrorBody {
            kind,
            message,
            exit_code,
            problems,
        },
    };
    let text = serde_json::to_string(&report)
        .unwrap_or_else(|_| format!("{{\"error\":{{\"kind\":\"{kind}\"}}}}"));
    let _ = writeln!(stderr, "{text}");
    exit_code
}

/// Parses `args` (including the program name), runs, and returns the exit code.
pub fn main_with<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(stdout, "{e}");
                return 0;
            }
            let message = e.render().to_string().trim_end().to_string();
            return report_error(stderr, "usage", message, &[], 1);
        }
    };
    let config = match RunConfig::from_command(cli.command) {
        Ok(c) => c,
        Err(e) => {
            let problems = match &e {
                Error::Config(p) => p.clone(),
                _ => Vec::new(),
            };
            return report_error(stderr, e.kind(), e.to_string(), &problems, 1);
        }
    };
    match run(&config, stdout) {
        Ok(()) => 0,
        Err(e) => report_error(stderr, e.kind(), e.to_string(), &[], 2),
    }
}
