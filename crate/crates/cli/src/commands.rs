//! Subcommand implementations. Each writes its files under the output
//! directory and returns the summary it wrote.
use std::path::{Path, PathBuf};

use asap_core::analysis::{
    failure_bounds, failure_condition, monotonicity_violations, performance_entropy, rank_one_ratio_check,
    reduced_lyapunov, DEFAULT_LYAPUNOV_SLACK,
};
use asap_core::dynamics::ReducedState;
use asap_core::equilibrium::{
    check_equilibrium, construct_equilibrium_matrix, solve_optimal_workload, EquilibriumReport,
};
use asap_core::experiments::{run_monte_carlo, run_switching_scenario, MonteCarloConfig, ScenarioTeam};
use asap_core::graph::{cycle_constant, enumerate_cycles, pattern_of};
use asap_core::integrator::{
    detect_convergence, integrate_full, integrate_reduced, DiagnosticsRequest, LyapunovReference,
};
use asap_core::{AppraisalMatrix, PerformanceProfile, TeamState, Trajectory, WorkFlowKind};
use serde::Serialize;

use crate::config::{ModelKind, ScenarioConfig, CONFIG_VERSION};
use crate::error::{CliError, CliResult};
use crate::table::TrajectoryTable;

/// Threshold used by `analyze` for conservation checks.
pub const ANALYZE_TOLERANCE: f64 = 1e-6;

fn rows_of(a: &AppraisalMatrix) -> Vec<Vec<f64>> {
    a.matrix().row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn prepare_dir(dir: &Path) -> CliResult<PathBuf> {
    std::fs::create_dir_all(dir).map_err(CliError::io(dir))?;
    Ok(dir.to_path_buf())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).expect("summary serializes");
    std::fs::write(path, text + "\n").map_err(CliError::io(path))
}

fn file_name(path: &Path) -> String {
    path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Largest `|row sum - 1|` or `|sum w - 1|` over the samples, with the time
/// it first exceeds `tol`.
fn simplex_drift(traj: &Trajectory<TeamState>, tol: f64) -> (f64, Option<f64>) {
    let mut worst: f64 = 0.0;
    let mut first = None;
    for (t, s) in traj.times.iter().zip(&traj.states) {
        let rows = s.appraisal.matrix().row_iter().map(|r| (r.sum() - 1.0).abs()).fold(0.0, f64::max);
        let drift = rows.max((s.workload.vector().sum() - 1.0).abs());
        let drift = if drift.is_finite() { drift } else { f64::INFINITY };
        worst = worst.max(drift);
        if drift > tol && first.is_none() {
            first = Some(*t);
        }
    }
    (worst, first)
}

/// Largest relative drift of any cycle constant from its initial value, with
/// the time it first exceeds `tol`.
fn cycle_drift(times: &[f64], constants: &[Vec<f64>], tol: f64) -> (f64, Option<f64>) {
    let Some(initial) = constants.first() else { return (0.0, None) };
    let mut worst: f64 = 0.0;
    let mut first = None;
    for (t, row) in times.iter().zip(constants) {
        let drift = row
            .iter()
            .zip(initial)
            .map(|(x, x0)| {
                let d = (x - x0).abs() / x0.abs();
                if d.is_finite() {
                    d
                } else {
                    f64::INFINITY
                }
            })
            .fold(0.0, f64::max);
        worst = worst.max(drift);
        if drift > tol && first.is_none() {
            first = Some(*t);
        }
    }
    (worst, first)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LyapunovVerdict {
    pub monotone: bool,
    pub violations: usize,
    pub first_violation_time: Option<f64>,
}

fn lyapunov_verdict(times: &[f64], values: &[f64]) -> LyapunovVerdict {
    let bad = monotonicity_violations(values, DEFAULT_LYAPUNOV_SLACK);
    LyapunovVerdict { monotone: bad.is_empty(), violations: bad.len(), first_violation_time: bad.first().map(|&k| times[k + 1]) }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TerminalState {
    pub t: f64,
    pub appraisal: Vec<Vec<f64>>,
    pub workload: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConservationDrift {
    pub simplex: f64,
    pub cycles: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub label: String,
    pub file: String,
    pub samples: usize,
    pub terminal: Option<TerminalState>,
    pub converged: bool,
    pub convergence_time: Option<f64>,
    pub w_opt: Vec<f64>,
    pub residuals: Option<EquilibriumReport>,
    pub conservation_max_drift: ConservationDrift,
    pub lyapunov: Option<LyapunovVerdict>,
    pub notes: Vec<String>,
    pub rank_ratio: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulateSummary {
    pub version: u32,
    pub command: &'static str,
    pub model: ModelKind,
    pub flow: WorkFlowKind,
    pub runs: Vec<RunSummary>,
}

pub fn cmd_simulate(cfg: &ScenarioConfig) -> CliResult<SimulateSummary> {
    let profile: PerformanceProfile = cfg.power_law()?.into();
    let out = prepare_dir(&cfg.output.dir)?;
    let w_opt = solve_optimal_workload(&profile, cfg.equilibrium.solver_tolerance)?.w_opt;
    let mut summary =
        SimulateSummary { version: CONFIG_VERSION, command: "simulate", model: cfg.model, flow: cfg.flow, runs: Vec::new() };
    let mut failure = None;
    for (label, state) in cfg.initial_states()? {
        let mut notes = Vec::new();
        let cycles = if cfg.diagnostics.cycles { enumerate_cycles(&pattern_of(&state.appraisal, 0.0))? } else { Vec::new() };
        let lyapunov = match (cfg.diagnostics.lyapunov, cfg.model, cfg.flow) {
            (false, ..) => None,
            (true, ModelKind::Full, WorkFlowKind::DonorControlled) => Some(LyapunovReference {
                a_star: Some(construct_equilibrium_matrix(&state.appraisal, &w_opt, cfg.equilibrium.epsilon)?),
                w_opt: w_opt.clone(),
            }),
            (true, ModelKind::Full, WorkFlowKind::AverageAppraisal) => {
                notes.push("lyapunov: the full model needs an equilibrium matrix, which is not constructed for average-appraisal flow; use model = \"reduced\"".into());
                None
            }
            (true, ModelKind::Reduced, _) => Some(LyapunovReference { a_star: None, w_opt: w_opt.clone() }),
        };
        let request = DiagnosticsRequest { cycles, lyapunov };
        let (table, error) = match cfg.model {
            ModelKind::Full => match integrate_full(&state, &profile, cfg.flow, &cfg.integrator, &request) {
                Ok(t) => (TrajectoryTable::from_full(&t), None),
                Err(f) => (TrajectoryTable::from_full(&f.partial), Some(f.error.to_string())),
            },
            ModelKind::Reduced => {
                let rs = ReducedState::initial(state.appraisal.clone().into(), state.workload.clone())?;
                match integrate_reduced(&rs, &profile, cfg.flow, &cfg.integrator, &request) {
                    Ok(t) => (TrajectoryTable::from_reduced(&t)?, None),
                    Err(f) => (TrajectoryTable::from_reduced(&f.partial)?, Some(f.error.to_string())),
                }
            }
        };
        let path = out.join(format!("trajectory_{label}.csv"));
        table.save(&path)?;
        log::info!("wrote {} ({} samples)", path.display(), table.rows.len());

        let traj = table.to_full()?;
        let convergence = detect_convergence(&traj, cfg.integrator.convergence_tolerance);
        let terminal = traj.last().map(|(t, s)| TerminalState {
            t,
            appraisal: rows_of(&s.appraisal),
            workload: s.workload.as_slice().to_vec(),
        });
        let residuals = match traj.last() {
            Some((_, s)) => Some(check_equilibrium(
                &s.appraisal,
                &s.workload,
                &profile,
                cfg.flow,
                cfg.equilibrium.residual_tolerance,
            )?),
            None => None,
        };
        let cycles = (!traj.diagnostics.cycles.is_empty())
            .then(|| cycle_drift(&traj.times, &traj.diagnostics.cycle_constants, f64::INFINITY).0);
        let lyapunov =
            (!traj.diagnostics.lyapunov.is_empty()).then(|| lyapunov_verdict(&traj.times, &traj.diagnostics.lyapunov));
        let rank_ratio = if cfg.diagnostics.rank_ratio {
            let checks: Result<Vec<f64>, _> =
                traj.states.iter().map(|s| rank_one_ratio_check(&s.appraisal, &state.appraisal)).collect();
            match checks {
                Ok(r) => Some(r.into_iter().fold(0.0, f64::max)),
                Err(e) => {
                    notes.push(format!("rank_ratio: {e}"));
                    None
                }
            }
        } else {
            None
        };
        summary.runs.push(RunSummary {
            label,
            file: file_name(&path),
            samples: traj.len(),
            terminal,
            converged: convergence.is_some(),
            convergence_time: convergence.map(|(t, _)| t),
            w_opt: w_opt.as_slice().to_vec(),
            residuals,
            conservation_max_drift: ConservationDrift { simplex: simplex_drift(&traj, f64::INFINITY).0, cycles },
            lyapunov,
            notes,
            rank_ratio,
            error: error.clone(),
        });
        if let Some(message) = error {
            failure = Some(CliError::Integration { message, partial: path });
            break;
        }
    }
    write_json(&out.join("simulate.json"), &summary)?;
    match failure {
        Some(e) => Err(e),
        None => Ok(summary),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TeamEquilibrium {
    pub label: String,
    pub a_star: Option<Vec<Vec<f64>>>,
    pub certification: EquilibriumReport,
    /// Members certified never to reach `w_opt` (average-appraisal flow).
    pub failure_certificate: Option<Vec<usize>>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquilibriumSummary {
    pub version: u32,
    pub command: &'static str,
    pub flow: WorkFlowKind,
    pub p_star: f64,
    pub w_opt: Vec<f64>,
    pub teams: Vec<TeamEquilibrium>,
}

pub fn cmd_equilibrium(cfg: &ScenarioConfig) -> CliResult<EquilibriumSummary> {
    let profile: PerformanceProfile = cfg.power_law()?.into();
    let out = prepare_dir(&cfg.output.dir)?;
    let pair = solve_optimal_workload(&profile, cfg.equilibrium.solver_tolerance)?;
    let tol = cfg.equilibrium.residual_tolerance;
    let states = if cfg.initial.is_empty() { Vec::new() } else { cfg.initial_states()? };
    let teams = states
        .into_iter()
        .map(|(label, state)| -> CliResult<TeamEquilibrium> {
            Ok(match cfg.flow {
                WorkFlowKind::DonorControlled => {
                    let a = construct_equilibrium_matrix(&state.appraisal, &pair.w_opt, cfg.equilibrium.epsilon)?;
                    let certification = check_equilibrium(&a, &pair.w_opt, &profile, cfg.flow, tol)?;
                    TeamEquilibrium { label, a_star: Some(rows_of(&a)), certification, failure_certificate: None, note: None }
                }
                WorkFlowKind::AverageAppraisal => TeamEquilibrium {
                    label,
                    a_star: None,
                    certification: check_equilibrium(&state.appraisal, &pair.w_opt, &profile, cfg.flow, tol)?,
                    failure_certificate: Some(
                        failure_condition(&state.appraisal, &state.workload, &pair.w_opt).into_iter().collect(),
                    ),
                    note: Some(
                        "equilibrium matrix construction is unavailable for average-appraisal flow; the given matrix is certified only".into(),
                    ),
                },
            })
        })
        .collect::<CliResult<Vec<_>>>()?;
    let summary = EquilibriumSummary {
        version: CONFIG_VERSION,
        command: "equilibrium",
        flow: cfg.flow,
        p_star: pair.p_star,
        w_opt: pair.w_opt.as_slice().to_vec(),
        teams,
    };
    write_json(&out.join("equilibrium.json"), &summary)?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonteCarloSummary {
    pub version: u32,
    pub command: &'static str,
    pub planned: u64,
    pub completed: usize,
    pub bounded: u64,
    pub unbounded: u64,
    pub indeterminate: u64,
    pub p_hat: Option<f64>,
    pub max_v_norm: Option<f64>,
    pub base_seed: u64,
    pub horizon: f64,
    pub v_cap: f64,
    pub checkpoint: PathBuf,
}

/// Campaign settings after defaults: the checkpoint lives in the output
/// directory unless the config names one.
pub fn montecarlo_plan(cfg: &ScenarioConfig) -> CliResult<(MonteCarloConfig, u64)> {
    let mut mc = cfg.montecarlo.clone();
    if mc.checkpoint.is_none() {
        mc.checkpoint = Some(cfg.output.dir.join("montecarlo_checkpoint.jsonl"));
    }
    let planned = mc.planned_samples()?;
    Ok((mc, planned))
}

pub fn cmd_montecarlo(cfg: &ScenarioConfig) -> CliResult<MonteCarloSummary> {
    let out = prepare_dir(&cfg.output.dir)?;
    let (mc, planned) = montecarlo_plan(cfg)?;
    log::info!("monte carlo: {planned} samples, base seed {}", mc.base_seed);
    let report = run_monte_carlo(&mc)?;
    let summary = MonteCarloSummary {
        version: CONFIG_VERSION,
        command: "montecarlo",
        planned,
        completed: report.records.len(),
        bounded: report.bounded,
        unbounded: report.unbounded,
        indeterminate: report.indeterminate,
        p_hat: report.p_hat,
        max_v_norm: report.records.iter().filter_map(|r| r.max_v_norm).reduce(f64::max),
        base_seed: mc.base_seed,
        horizon: mc.horizon,
        v_cap: mc.v_cap,
        checkpoint: mc.checkpoint.clone().unwrap_or_default(),
    };
    write_json(&out.join("montecarlo.json"), &summary)?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntervalSummary {
    pub start: f64,
    pub end: f64,
    pub ids: Vec<u32>,
    pub file: String,
    pub final_workload: Vec<f64>,
    pub final_h_tot: Option<f64>,
    pub h_tot_opt: f64,
    pub w_opt: Vec<f64>,
    pub final_spread: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioSummary {
    pub version: u32,
    pub command: &'static str,
    pub intervals: Vec<IntervalSummary>,
    pub event_sum_drift: Vec<f64>,
}

pub fn cmd_scenario(cfg: &ScenarioConfig) -> CliResult<ScenarioSummary> {
    let law = cfg.power_law()?;
    let spec = cfg.scenario.as_ref().ok_or_else(|| CliError::Invalid("config has no [scenario] table".into()))?;
    let out = prepare_dir(&cfg.output.dir)?;
    let (_, state) = cfg.initial_states()?.into_iter().next().expect("at least one initial state");
    let team = ScenarioTeam::new(spec.ids.clone(), state, &law)?;
    let outcome = run_switching_scenario(&team, &spec.events, cfg.flow, &cfg.integrator)?;
    let intervals = outcome
        .intervals
        .iter()
        .enumerate()
        .map(|(k, iv)| -> CliResult<IntervalSummary> {
            let path = out.join(format!("scenario_interval_{k}.csv"));
            TrajectoryTable::from_full(&iv.trajectory).save(&path)?;
            Ok(IntervalSummary {
                start: iv.start,
                end: iv.end,
                ids: iv.ids.clone(),
                file: file_name(&path),
                final_workload: iv.trajectory.last().map(|(_, s)| s.workload.as_slice().to_vec()).unwrap_or_default(),
                final_h_tot: iv.h_tot.last().copied(),
                h_tot_opt: iv.h_tot_opt,
                w_opt: iv.w_opt.as_slice().to_vec(),
                final_spread: iv.final_spread,
            })
        })
        .collect::<CliResult<Vec<_>>>()?;
    let summary =
        ScenarioSummary { version: CONFIG_VERSION, command: "scenario", intervals, event_sum_drift: outcome.event_sum_drift };
    write_json(&out.join("scenario.json"), &summary)?;
    Ok(summary)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckStatus {
    Pass,
    Fail,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub status: CheckStatus,
    pub detail: String,
    pub offending_time: Option<f64>,
}

impl Check {
    fn skipped(name: &'static str, why: impl Into<String>) -> Self {
        Self { name, status: CheckStatus::Skipped, detail: why.into(), offending_time: None }
    }

    fn from_drift(name: &'static str, (worst, first): (f64, Option<f64>), what: &str) -> Self {
        Self {
            name,
            status: if first.is_none() { CheckStatus::Pass } else { CheckStatus::Fail },
            detail: format!("max {what} {worst:e} (tolerance {ANALYZE_TOLERANCE:e})"),
            offending_time: first,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FileAnalysis {
    pub file: PathBuf,
    pub checks: Vec<Check>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalysisReport {
    pub version: u32,
    pub command: &'static str,
    pub passed: bool,
    pub files: Vec<FileAnalysis>,
}

fn check_cycles(traj: &Trajectory<TeamState>) -> CliResult<Check> {
    const NAME: &str = "cycle_conservation";
    if !traj.diagnostics.cycles.is_empty() {
        return Ok(Check::from_drift(
            NAME,
            cycle_drift(&traj.times, &traj.diagnostics.cycle_constants, ANALYZE_TOLERANCE),
            "relative drift of stored cycle constants",
        ));
    }
    let Some(first) = traj.states.first() else { return Ok(Check::skipped(NAME, "empty trajectory")) };
    let cycles = match enumerate_cycles(&pattern_of(&first.appraisal, 0.0)) {
        Ok(c) => c,
        Err(e) => return Ok(Check::skipped(NAME, e.to_string())),
    };
    if cycles.is_empty() {
        return Ok(Check::skipped(NAME, "no cycles in the appraisal pattern"));
    }
    let constants: Vec<Vec<f64>> = traj
        .states
        .iter()
        .map(|s| cycles.iter().map(|c| cycle_constant(&s.appraisal, c).unwrap_or(f64::NAN)).collect())
        .collect();
    Ok(Check::from_drift(
        NAME,
        cycle_drift(&traj.times, &constants, ANALYZE_TOLERANCE),
        "relative drift of recomputed cycle constants",
    ))
}

fn check_lyapunov(
    table: &TrajectoryTable,
    traj: &Trajectory<TeamState>,
    cfg: Option<&ScenarioConfig>,
) -> CliResult<Check> {
    const NAME: &str = "lyapunov_monotonicity";
    let values = if !traj.diagnostics.lyapunov.is_empty() {
        traj.diagnostics.lyapunov.clone()
    } else {
        let Some(cfg) = cfg.filter(|c| c.profile.is_some()) else {
            return Ok(Check::skipped(NAME, "no stored channel and no profile to recompute it"));
        };
        let Some(first) = traj.states.first() else { return Ok(Check::skipped(NAME, "empty trajectory")) };
        let profile: PerformanceProfile = cfg.power_law()?.into();
        if profile.n() != table.n {
            return Err(CliError::Invalid(format!("profile has {} members, trajectory has {}", profile.n(), table.n)));
        }
        let w_opt = solve_optimal_workload(&profile, cfg.equilibrium.solver_tolerance)?.w_opt;
        match (table.model, cfg.flow) {
            (ModelKind::Reduced, kind) => table
                .to_reduced()?
                .states
                .iter()
                .map(|s| Ok(reduced_lyapunov(s, &w_opt, &profile, kind)?.value))
                .collect::<CliResult<Vec<_>>>()?,
            (ModelKind::Full, WorkFlowKind::DonorControlled) => {
                let a_star = construct_equilibrium_matrix(&first.appraisal, &w_opt, cfg.equilibrium.epsilon)?;
                traj.states
                    .iter()
                    .map(|s| Ok(performance_entropy(&s.appraisal, &s.workload, &a_star, &w_opt, &profile)?))
                    .collect::<CliResult<Vec<_>>>()?
            }
            (ModelKind::Full, WorkFlowKind::AverageAppraisal) => {
                return Ok(Check::skipped(NAME, "no full-model Lyapunov function for average-appraisal flow"))
            }
        }
    };
    let v = lyapunov_verdict(&traj.times, &values);
    Ok(Check {
        name: NAME,
        status: if v.monotone { CheckStatus::Pass } else { CheckStatus::Fail },
        detail: format!("{} increases beyond slack {DEFAULT_LYAPUNOV_SLACK:e}", v.violations),
        offending_time: v.first_violation_time,
    })
}

fn check_failure_bound(traj: &Trajectory<TeamState>, cfg: Option<&ScenarioConfig>) -> Check {
    const NAME: &str = "failure_bound";
    if cfg.map(|c| c.flow) != Some(WorkFlowKind::AverageAppraisal) {
        return Check::skipped(NAME, "applies to average-appraisal flow only");
    }
    let Some(first) = traj.states.first() else { return Check::skipped(NAME, "empty trajectory") };
    let bounds = failure_bounds(&first.appraisal, &first.workload);
    let mut worst = f64::NEG_INFINITY;
    let mut offending = None;
    for (t, s) in traj.times.iter().zip(&traj.states) {
        let excess = s.workload.as_slice().iter().zip(&bounds).map(|(w, b)| w - b).fold(f64::NEG_INFINITY, f64::max);
        worst = worst.max(excess);
        if excess > ANALYZE_TOLERANCE && offending.is_none() {
            offending = Some(*t);
        }
    }
    Check {
        name: NAME,
        status: if offending.is_none() { CheckStatus::Pass } else { CheckStatus::Fail },
        detail: format!("max excess of w_i(t) over its bound {worst:e}"),
        offending_time: offending,
    }
}

pub fn analyze_table(table: &TrajectoryTable, cfg: Option<&ScenarioConfig>) -> CliResult<Vec<Check>> {
    let traj = table.to_full()?;
    Ok(vec![
        Check::from_drift("simplex", simplex_drift(&traj, ANALYZE_TOLERANCE), "row-sum or workload-sum drift"),
        check_cycles(&traj)?,
        check_lyapunov(table, &traj, cfg)?,
        check_failure_bound(&traj, cfg),
    ])
}

pub fn cmd_analyze(files: &[PathBuf], cfg: Option<&ScenarioConfig>, out: &Path) -> CliResult<AnalysisReport> {
    if files.is_empty() {
        return Err(CliError::Invalid("analyze needs at least one trajectory file".into()));
    }
    let out = prepare_dir(out)?;
    let files = files
        .iter()
        .map(|f| {
            let table = TrajectoryTable::load(f)?;
            Ok(FileAnalysis { file: f.clone(), checks: analyze_table(&table, cfg)? })
        })
        .collect::<CliResult<Vec<_>>>()?;
    let passed = files.iter().all(|f| f.checks.iter().all(|c| c.status != CheckStatus::Fail));
    let report = AnalysisReport { version: CONFIG_VERSION, command: "analyze", passed, files };
    write_json(&out.join("analysis.json"), &report)?;
    Ok(report)
}
