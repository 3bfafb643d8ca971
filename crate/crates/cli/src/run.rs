//! The four subcommands.

use std::fmt;
use std::fs::{self, File};
use std::io::{self, BufWriter};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use qrd_core::audit::{audit_system, check_heterogeneous_rates, AuditOptions, AuditReport, HeterogeneousReport, SampleBudget};
use qrd_core::diagnostics::{
    select_theta, DissipationMonitor, DissipationReport, MassReport, Recorder, ThetaSearch, ThetaSelection,
};
use qrd_core::energy::{check_pd, lp_energy, lp_equivalence_bounds, EnergyConfig};
use qrd_core::integrator::{epsilon_sweep, integrate, EpsilonGap, RunOptions, SimState};
use qrd_core::sampling::Sampler;
use qrd_core::seird::heat_exact;
use qrd_core::snapshot::write_snapshot;
use qrd_core::{BoundarySpec, Error, Field, Grid};

use crate::config::{emit, ConfigErrors, InitialSpec, ModelSpec, RunConfig, ThetaMode};
use crate::output::{emit_plot_data, write_series};
use crate::setup::{build, build_on, Setup};

/// Environment variable that relocates relative output directories.
pub const OUTPUT_ROOT_ENV: &str = "QRD_OUTPUT_ROOT";

/// Space-time samples used for diffusion-matrix bounds.
const XT_SAMPLES: usize = 16;

/// Why a command did not succeed; each kind has its own exit code.
#[derive(Debug)]
pub enum Failure {
    Config(String),
    Violation(String),
    Runtime(String),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Violation(_) => 1,
            Failure::Config(_) => 2,
            Failure::Runtime(_) => 3,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Config(m) => write!(f, "configuration error: {m}"),
            Failure::Violation(m) => write!(f, "property violation: {m}"),
            Failure::Runtime(m) => write!(f, "runtime failure: {m}"),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::Expr(_) => Failure::Config(e.to_string()),
            Error::Selection { .. } => Failure::Violation(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

impl From<ConfigErrors> for Failure {
    fn from(e: ConfigErrors) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Runtime(format!("i/o error: {e}"))
    }
}

#[derive(Clone, Debug, Default)]
pub struct Context {
    /// Base for relative output directories, normally from [`OUTPUT_ROOT_ENV`].
    pub output_root: Option<PathBuf>,
}

impl Context {
    pub fn from_env() -> Self {
        Context { output_root: std::env::var_os(OUTPUT_ROOT_ENV).map(PathBuf::from) }
    }

    /// Creates the run directory and stores the canonical configuration in it.
    pub fn run_dir(&self, cfg: &RunConfig) -> Result<PathBuf, Failure> {
        let dir = Path::new(&cfg.output.directory);
        let dir = match &self.output_root {
            Some(root) if dir.is_relative() => root.join(dir),
            _ => dir.to_path_buf(),
        };
        fs::create_dir_all(&dir)
            .and_then(|_| fs::write(dir.join("config.ini"), emit(cfg)))
            .map_err(|e| Failure::Config(format!("output directory {} is not writable: {e}", dir.display())))?;
        Ok(dir)
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Failure::Runtime(e.to_string()))?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn budget(cfg: &RunConfig) -> SampleBudget {
    SampleBudget { interior: cfg.audit.interior, per_face: cfg.audit.per_face, seed: cfg.audit.seed }
}

fn xt_samples(setup: &Setup, cfg: &RunConfig) -> Vec<(Vec<f64>, f64)> {
    Sampler::new(cfg.audit.seed).space_time(&setup.region, XT_SAMPLES)
}

#[derive(Clone, Debug, Serialize)]
pub struct Weights {
    pub p: u32,
    pub theta: Vec<f64>,
    /// Present when the weights were selected automatically.
    pub selection: Option<ThetaSelection>,
}

fn weights(setup: &Setup, cfg: &RunConfig, p: u32) -> Result<Weights, Failure> {
    match &cfg.energy.theta {
        ThetaMode::Explicit(theta) => Ok(Weights { p, theta: theta.clone(), selection: None }),
        ThetaMode::Auto => {
            let mut search = ThetaSearch::new(p, setup.region.clone());
            search.seed = cfg.audit.seed;
            let sel = select_theta(&setup.sys, &search)?;
            Ok(Weights { p, theta: sel.theta.clone(), selection: Some(sel) })
        }
    }
}

#[derive(Debug, Serialize)]
pub struct AuditOutcome {
    pub report: AuditReport,
    pub heterogeneous: Option<HeterogeneousReport>,
}

impl AuditOutcome {
    pub fn passed(&self) -> bool {
        self.report.all_passed() && self.heterogeneous.as_ref().is_none_or(|h| h.passed())
    }

    /// One line per hypothesis.
    pub fn lines(&self) -> Vec<String> {
        let mut out: Vec<String> = self
            .report
            .named_verdicts()
            .into_iter()
            .map(|(name, v)| match v.witness() {
                Some(w) => format!("{name}: {} at u = {:?}, x = {:?}, t = {} ({})", v.label(), w.point.u, w.point.x, w.point.t, w.detail),
                None => format!("{name}: {}", v.label()),
            })
            .collect();
        if let Some(h) = &self.heterogeneous {
            for (name, v) in [("response_growth", &h.growth), ("ellipticity", &h.ellipticity), ("rate_bounds", &h.boundedness)] {
                out.push(format!("{name}: {}", v.label()));
            }
        }
        let a = &self.report.applicability;
        out.push(match a.theorem {
            Some(t) if a.uniform_in_time => format!("applicable result: {}, uniform in time ({})", t.id(), a.reason),
            Some(t) => format!("applicable result: {} ({})", t.id(), a.reason),
            None => format!("no applicable result: {}", a.reason),
        });
        out
    }
}

fn audit(setup: &Setup, cfg: &RunConfig) -> Result<AuditOutcome, Failure> {
    let mut opts = AuditOptions::new(setup.region.clone());
    opts.budget = budget(cfg);
    opts.robin = matches!(setup.bc, BoundarySpec::Robin(_));
    let report = audit_system(&setup.sys, &opts)?;
    let heterogeneous = setup.hetero.as_ref().map(|p| check_heterogeneous_rates(p, cfg.audit.u_max, &opts.budget));
    Ok(AuditOutcome { report, heterogeneous })
}

#[derive(Debug, Serialize)]
struct DissipationSummary {
    p: u32,
    alpha_hat: f64,
    c_hat: f64,
    fraction_satisfied: f64,
    energy_increases: usize,
    decay_rate: Option<f64>,
}

#[derive(Debug, Serialize)]
struct SimulateSummary<'a> {
    command: &'static str,
    model: String,
    species: Vec<String>,
    cells: &'a [usize],
    extent: &'a [f64],
    boundary: &'a BoundarySpec,
    t_end: f64,
    checkpoints: usize,
    eps: f64,
    steps: u64,
    rejected_steps: u64,
    min_value: f64,
    initial_mass: f64,
    clamp_mass: f64,
    final_masses: &'a [f64],
    deceased_total: Option<f64>,
    snapshots: usize,
    weights: &'a [Weights],
    mass_monitor: &'a MassReport,
    dissipation: Vec<DissipationSummary>,
    audit: &'a AuditOutcome,
    violations: &'a [String],
    #[serde(skip_serializing_if = "Option::is_none")]
    elapsed_seconds: Option<f64>,
}

#[derive(Debug)]
pub struct SimulateOutcome {
    pub dir: PathBuf,
    pub rows: usize,
    pub violations: Vec<String>,
    pub notices: Vec<String>,
    pub audit_passed: bool,
}

/// Integrates the configured system and writes `series.csv`, snapshots,
/// plot panels and `summary.json` into the run directory.
pub fn run_simulate(cfg: &RunConfig, ctx: &Context) -> Result<SimulateOutcome, Failure> {
    let start = Instant::now();
    let setup = build(cfg)?;
    let dir = ctx.run_dir(cfg)?;
    let names = setup.sys.names().to_vec();
    let orders = cfg.energy.orders.clone();

    let weights = orders.iter().map(|p| weights(&setup, cfg, *p)).collect::<Result<Vec<_>, _>>()?;
    let xt = xt_samples(&setup, cfg);
    let monitors = weights
        .iter()
        .map(|w| DissipationMonitor::new(&setup.sys, EnergyConfig::new(w.p, w.theta.clone())?, &xt, cfg.time.eps))
        .collect::<qrd_core::Result<Vec<_>>>()?;
    let mut recorder = Recorder::new(&setup.sys, &setup.grid, monitors);

    let snap_dir = dir.join("snapshots");
    if snap_dir.exists() {
        fs::remove_dir_all(&snap_dir)?;
    }
    let every = cfg.output.snapshot_every;
    if every > 0 {
        fs::create_dir_all(&snap_dir)?;
    }
    let last = cfg.time.checkpoints - 1;
    let (mut index, mut written) = (0usize, 0usize);
    let mut snapshots = |s: &SimState| -> qrd_core::Result<()> {
        if every > 0 && (index % every == 0 || index == last) {
            let file = File::create(snap_dir.join(format!("snap_{index:05}.qdf")))?;
            write_snapshot(BufWriter::new(file), setup.grid.counts(), setup.grid.spacings(), s.t, &s.u)?;
            written += 1;
        }
        index += 1;
        Ok(())
    };

    let opts = RunOptions::new(cfg.time.t_end).with_checkpoints(cfg.time.checkpoints).with_eps(cfg.time.eps);
    let run = integrate(&setup.sys, &setup.grid, &setup.u0, &setup.bc, &cfg.time.control, &opts, &mut [
        &mut recorder,
        &mut snapshots,
    ])
    .map_err(|e| match e {
        Error::Integration { .. } => Failure::Runtime(e.to_string()),
        other => Failure::from(other),
    })?;

    let mass = recorder.mass_report();
    let reports: Vec<DissipationReport> = if orders.is_empty() { Vec::new() } else { recorder.dissipation_reports()? };
    let rows = &recorder.rows;
    let mut flags = vec![true; rows.len()];
    for rep in &reports {
        for (k, ok) in rep.satisfied.iter().enumerate() {
            flags[k + 1] &= *ok;
        }
    }

    let mut violations = Vec::new();
    if run.min_value < 0.0 {
        violations.push(format!("a checkpoint holds the negative value {:e}", run.min_value));
    }
    if mass.fraction_satisfied < 1.0 {
        let failed = mass.satisfied.iter().filter(|s| !**s).count();
        violations.push(format!(
            "mass-control inequality failed on {failed} of {} intervals (worst excess {:e})",
            mass.satisfied.len(),
            mass.worst_excess
        ));
    }
    for rep in &reports {
        if rep.fraction_satisfied < 1.0 {
            let failed = rep.satisfied.iter().filter(|s| !**s).count();
            violations.push(format!("energy inequality for p = {} failed on {failed} intervals", rep.p));
        }
    }

    write_series(&dir.join("series.csv"), &names, &orders, rows, &flags)?;
    let deceased = matches!(cfg.model, ModelSpec::Seird { include_deceased: true, .. });
    let plots = emit_plot_data(&dir.join("plots"), &names, &orders, rows, &cfg.output.panels, deceased)?;
    let audit = audit(&setup, cfg)?;

    let last_row = rows.last().expect("at least two checkpoints were recorded");
    let summary = SimulateSummary {
        command: "simulate",
        model: cfg.model.preset_id(),
        species: names.clone(),
        cells: setup.grid.counts(),
        extent: setup.grid.extents(),
        boundary: &setup.bc,
        t_end: cfg.time.t_end,
        checkpoints: cfg.time.checkpoints,
        eps: cfg.time.eps,
        steps: run.steps,
        rejected_steps: run.rejected_steps,
        min_value: run.min_value,
        initial_mass: run.initial_mass,
        clamp_mass: run.clamp_mass(),
        final_masses: &last_row.masses,
        deceased_total: last_row.passive_total,
        snapshots: written,
        weights: &weights,
        mass_monitor: &mass,
        dissipation: reports
            .iter()
            .map(|r| DissipationSummary {
                p: r.p,
                alpha_hat: r.alpha_hat,
                c_hat: r.c_hat,
                fraction_satisfied: r.fraction_satisfied,
                energy_increases: r.energy_increases,
                decay_rate: r.decay_rate,
            })
            .collect(),
        audit: &audit,
        violations: &violations,
        elapsed_seconds: (!cfg.output.deterministic).then(|| start.elapsed().as_secs_f64()),
    };
    write_json(&dir.join("summary.json"), &summary)?;

    Ok(SimulateOutcome { dir, rows: rows.len(), violations, notices: plots.notices, audit_passed: audit.passed() })
}

#[derive(Debug)]
pub struct CheckOutcome {
    pub dir: PathBuf,
    pub audit: AuditOutcome,
}

/// Audits the structural hypotheses on the configured box; writes `check.json`.
pub fn run_check(cfg: &RunConfig, ctx: &Context) -> Result<CheckOutcome, Failure> {
    let setup = build(cfg)?;
    let dir = ctx.run_dir(cfg)?;
    let audit = audit(&setup, cfg)?;
    write_json(&dir.join("check.json"), &audit)?;
    Ok(CheckOutcome { dir, audit })
}

#[derive(Clone, Debug, Serialize)]
pub struct EnergyRow {
    pub p: u32,
    pub weights: Weights,
    pub c_low: f64,
    pub c_high: f64,
    /// Smallest eigenvalue of the diffusion block matrix over the samples.
    pub min_eigenvalue: f64,
    pub positive_definite: bool,
    /// ℒ_p of the initial data.
    pub initial_energy: f64,
}

#[derive(Debug)]
pub struct EnergyOutcome {
    pub dir: PathBuf,
    pub rows: Vec<EnergyRow>,
}

/// Selects or checks the energy weights for each order; writes `energy.json`.
pub fn run_energy(cfg: &RunConfig, ctx: &Context, orders: &[u32]) -> Result<EnergyOutcome, Failure> {
    if orders.is_empty() {
        return Err(Failure::Config("--p needs at least one order".into()));
    }
    if let Some(p) = orders.iter().find(|p| **p < 2) {
        return Err(Failure::Config(format!("energy order p must be ≥ 2 (got {p})")));
    }
    let setup = build(cfg)?;
    let dir = ctx.run_dir(cfg)?;
    let xt = xt_samples(&setup, cfg);
    let mut rows = Vec::new();
    for &p in orders {
        let w = weights(&setup, cfg, p)?;
        let ecfg = EnergyConfig::new(p, w.theta.clone())?;
        let (c_low, c_high) = lp_equivalence_bounds(&ecfg);
        let pd = check_pd(&ecfg, &setup.sys, &ecfg.order_p2.indices[0], &xt)?;
        rows.push(EnergyRow {
            p,
            c_low,
            c_high,
            min_eigenvalue: pd.min_eigenvalue,
            positive_definite: pd.positive_definite,
            initial_energy: lp_energy(&setup.u0, &setup.grid, &ecfg),
            weights: w,
        });
    }
    write_json(&dir.join("energy.json"), &rows)?;
    Ok(EnergyOutcome { dir, rows })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorReference {
    /// Against the closed-form heat solution.
    Exact,
    /// Between consecutive refinement levels.
    Consecutive,
}

#[derive(Clone, Debug, Serialize)]
pub struct GridLevel {
    pub cells: Vec<usize>,
    pub h: f64,
    /// Max-norm error at `T`; for consecutive comparisons the entry of level
    /// `k` compares it with level `k + 1`.
    pub error: Option<f64>,
    /// `log2(e_{k−1} / e_k)`.
    pub order: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
#[serde(tag = "study", rename_all = "snake_case")]
pub enum ConvergenceTable {
    Grid { reference: ErrorReference, levels: Vec<GridLevel> },
    Epsilon { gaps: Vec<EpsilonGap>, strictly_decreasing: bool },
}

impl ConvergenceTable {
    pub fn orders(&self) -> Vec<f64> {
        match self {
            ConvergenceTable::Grid { levels, .. } => levels.iter().filter_map(|l| l.order).collect(),
            ConvergenceTable::Epsilon { .. } => Vec::new(),
        }
    }

    pub fn lines(&self) -> Vec<String> {
        let opt = |v: Option<f64>, f: fn(f64) -> String| v.map_or("n/a".to_string(), f);
        match self {
            ConvergenceTable::Grid { reference, levels } => {
                let mut out = vec![format!("grid study ({reference:?} reference)"), "cells h error order".into()];
                for l in levels {
                    out.push(format!(
                        "{:?} {:.6e} {} {}",
                        l.cells,
                        l.h,
                        opt(l.error, |e| format!("{e:.6e}")),
                        opt(l.order, |o| format!("{o:.4}"))
                    ));
                }
                out
            }
            ConvergenceTable::Epsilon { gaps, strictly_decreasing } => {
                let mut out = vec!["epsilon study".into(), "eps_coarse eps_fine gap".into()];
                for g in gaps {
                    out.push(format!("{:e} {:e} {:.6e}", g.eps_coarse, g.eps_fine, g.gap));
                }
                out.push(format!("strictly decreasing: {strictly_decreasing}"));
                out
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Study {
    Grid,
    Epsilon,
}

#[derive(Debug)]
pub struct ConvergeOutcome {
    pub dir: PathBuf,
    pub table: ConvergenceTable,
}

fn max_abs_diff(a: &Field, b: &Field) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// The heat preset started from `1 + cos(πx)` with zero-flux walls on a unit
/// first axis has a closed-form solution.
fn has_exact_solution(cfg: &RunConfig) -> bool {
    matches!(cfg.model, ModelSpec::Heat)
        && matches!(cfg.initial, InitialSpec::Heat)
        && cfg.boundary == BoundarySpec::NeumannZeroFlux
        && cfg.grid.extent[0] == 1.0
        && cfg.time.eps == 0.0
}

fn final_state(setup: &Setup, cfg: &RunConfig) -> Result<Field, Failure> {
    let opts = RunOptions::new(cfg.time.t_end).with_checkpoints(2).with_eps(cfg.time.eps);
    let run = integrate(&setup.sys, &setup.grid, &setup.u0, &setup.bc, &cfg.time.control, &opts, &mut [])?;
    Ok(run.final_state.u)
}

/// Grid refinement (each level halves `h`) or regularization study; writes
/// `converge.json`.
pub fn run_converge(cfg: &RunConfig, ctx: &Context, levels: usize, study: Study) -> Result<ConvergeOutcome, Failure> {
    let table = match study {
        Study::Grid => grid_study(cfg, levels)?,
        Study::Epsilon => {
            let setup = build(cfg)?;
            let gaps = epsilon_sweep(
                &setup.sys,
                &setup.grid,
                &setup.u0,
                &setup.bc,
                &cfg.time.control,
                cfg.time.t_end,
                cfg.time.checkpoints,
                &cfg.time.eps_levels,
            )?;
            let strictly_decreasing = gaps.windows(2).all(|w| w[1].gap < w[0].gap);
            ConvergenceTable::Epsilon { gaps, strictly_decreasing }
        }
    };
    let dir = ctx.run_dir(cfg)?;
    write_json(&dir.join("converge.json"), &table)?;
    Ok(ConvergeOutcome { dir, table })
}

fn grid_study(cfg: &RunConfig, levels: usize) -> Result<ConvergenceTable, Failure> {
    let exact = has_exact_solution(cfg);
    let needed = if exact { 2 } else { 3 };
    if levels < needed {
        return Err(Failure::Config(format!(
            "a {} grid study needs at least {needed} levels (got {levels})",
            if exact { "exact-solution" } else { "self-convergence" }
        )));
    }
    let base = cfg.grid.build()?;
    let grids: Vec<Grid> = (0..levels).map(|k| base.refined(1 << k)).collect::<qrd_core::Result<_>>()?;
    let finals: Vec<Field> = grids
        .iter()
        .map(|g| final_state(&build_on(cfg, g.clone())?, cfg))
        .collect::<Result<_, Failure>>()?;

    let errors: Vec<f64> = if exact {
        grids
            .iter()
            .zip(&finals)
            .map(|(g, u)| {
                (0..g.cells())
                    .map(|c| (u.get(0, c) - heat_exact(g.center(c)[0], cfg.time.t_end)).abs())
                    .fold(0.0, f64::max)
            })
            .collect()
    } else {
        (0..levels - 1)
            .map(|k| Ok(max_abs_diff(&finals[k], &finals[k + 1].coarsened(&grids[k + 1], 2)?)))
            .collect::<qrd_core::Result<_>>()?
    };
    let order = |k: usize| -> Option<f64> {
        (k >= 1 && k < errors.len()).then(|| (errors[k - 1] / errors[k]).log2()).filter(|o| o.is_finite())
    };
    let rows = grids
        .iter()
        .enumerate()
        .map(|(k, g)| GridLevel { cells: g.counts().to_vec(), h: g.h(0), error: errors.get(k).copied(), order: order(k) })
        .collect();
    let reference = if exact { ErrorReference::Exact } else { ErrorReference::Consecutive };
    Ok(ConvergenceTable::Grid { reference, levels: rows })
}
