//! Random team generation, the Monte Carlo boundedness study and the
//! member-switching scenario.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::ops::ControlFlow;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::{boundedness_from_norms, DEFAULT_V_CAP};
use crate::dynamics::{ReducedState, WorkFlowKind};
use crate::equilibrium::{solve_optimal_workload, DEFAULT_SOLVER_TOLERANCE};
use crate::error::{AsapError, Result};
use crate::graph::{is_strongly_connected, pattern_of};
use crate::integrator::{integrate, integrate_full, DiagnosticsRequest, IntegratorOptions, ReducedModel, Trajectory};
use crate::types::{
    eval_performance, team_performance, validate_state, AppraisalMatrix, PerformanceProfile, PowerLaw, TeamMetric,
    TeamState, WorkloadVector, DEFAULT_INVARIANT_TOLERANCE,
};

const MAX_GENERATION_ATTEMPTS: usize = 10_000;
const EXPONENT_RANGE: (f64, f64) = (0.1, 0.9);

/// Smallest `N >= ln(2 / xi) / (2 eps^2)`.
pub fn chernoff_sample_size(epsilon: f64, xi: f64) -> Result<u64> {
    for (name, v) in [("epsilon", epsilon), ("xi", xi)] {
        if !(v > 0.0 && v < 1.0) {
            return Err(AsapError::Parameter(format!("{name} must lie in (0, 1), got {v}")));
        }
    }
    Ok(((2.0 / xi).ln() / (2.0 * epsilon * epsilon)).ceil() as u64)
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Seed of sample `index` in a campaign with the given base seed.
pub fn sample_seed(base_seed: u64, index: u64) -> u64 {
    splitmix64(base_seed ^ splitmix64(index))
}

/// Uniform sample from the open simplex by normalized exponential spacings.
fn simplex_point(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    let e = DVector::from_iterator(n, (0..n).map(|_| -(1.0 - rng.random::<f64>()).ln()));
    let s = e.sum();
    e / s
}

fn random_team(rng: &mut ChaCha8Rng, n: usize, edge_probability: f64) -> Result<(AppraisalMatrix, WorkloadVector)> {
    for _ in 0..MAX_GENERATION_ATTEMPTS {
        let mut a = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                if i == j || rng.random_bool(edge_probability) {
                    a[(i, j)] = 1.0 - rng.random::<f64>();
                }
            }
        }
        for i in 0..n {
            let s: f64 = a.row(i).sum();
            a.row_mut(i).iter_mut().for_each(|x| *x /= s);
        }
        let a = AppraisalMatrix::from_matrix_unchecked(a);
        if is_strongly_connected(&pattern_of(&a, 0.0)) {
            let w = WorkloadVector::from_vector_unchecked(simplex_point(rng, n));
            return Ok((a, w));
        }
    }
    Err(AsapError::Generation(format!(
        "no strongly connected pattern in {MAX_GENERATION_ATTEMPTS} draws (n = {n}, p = {edge_probability})"
    )))
}

fn check_generation_params(n: usize, edge_probability: f64) -> Result<()> {
    if n < 2 {
        return Err(AsapError::Parameter(format!("team size must be at least 2, got {n}")));
    }
    if !(edge_probability > 0.0 && edge_probability <= 1.0) {
        return Err(AsapError::Parameter(format!("edge probability must lie in (0, 1], got {edge_probability}")));
    }
    Ok(())
}

/// Erdos-Renyi appraisal network with self-loops, uniform weights normalized
/// per row, resampled until strongly connected; `w0` uniform on the simplex.
pub fn generate_random_team(n: usize, edge_probability: f64, seed: u64) -> Result<(AppraisalMatrix, WorkloadVector)> {
    check_generation_params(n, edge_probability)?;
    random_team(&mut ChaCha8Rng::seed_from_u64(seed), n, edge_probability)
}

/// One Monte Carlo instance: team plus power-law profile.
#[derive(Debug, Clone)]
pub struct RandomInstance {
    pub a0: AppraisalMatrix,
    pub w0: WorkloadVector,
    pub profile: PerformanceProfile,
}

/// Same team as [`generate_random_team`] with the same seed, followed by
/// skills uniform on the simplex and exponents uniform on `[0.1, 0.9)`.
pub fn generate_random_instance(n: usize, edge_probability: f64, seed: u64) -> Result<RandomInstance> {
    check_generation_params(n, edge_probability)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (a0, w0) = random_team(&mut rng, n, edge_probability)?;
    let skill = simplex_point(&mut rng, n).as_slice().to_vec();
    let exponent = (0..n).map(|_| rng.random_range(EXPONENT_RANGE.0..EXPONENT_RANGE.1)).collect();
    Ok(RandomInstance { a0, w0, profile: PowerLaw::new(skill, exponent)?.into() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MonteCarloConfig {
    pub n: usize,
    pub edge_probability: f64,
    pub epsilon: f64,
    pub xi: f64,
    pub sample_count: Option<u64>,
    pub horizon: f64,
    pub base_seed: u64,
    pub workers: Option<usize>,
    pub v_cap: f64,
    pub integrator: IntegratorOptions,
    pub checkpoint: Option<PathBuf>,
}

impl Default for MonteCarloConfig {
    fn default() -> Self {
        Self {
            n: 6,
            edge_probability: 0.3,
            epsilon: 0.01,
            xi: 0.01,
            sample_count: None,
            horizon: 1000.0,
            base_seed: 0,
            workers: None,
            v_cap: DEFAULT_V_CAP,
            integrator: IntegratorOptions::default(),
            checkpoint: None,
        }
    }
}

impl MonteCarloConfig {
    pub fn validate(&self) -> Result<()> {
        check_generation_params(self.n, self.edge_probability)?;
        chernoff_sample_size(self.epsilon, self.xi)?;
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(AsapError::Parameter(format!("horizon must be positive, got {}", self.horizon)));
        }
        if self.workers == Some(0) {
            return Err(AsapError::Parameter("worker count must be positive".into()));
        }
        if !(self.v_cap > 0.0) {
            return Err(AsapError::Parameter("v_cap must be positive".into()));
        }
        Ok(())
    }

    /// Explicit sample count, or the Chernoff size for `(epsilon, xi)`.
    pub fn planned_samples(&self) -> Result<u64> {
        match self.sample_count {
            Some(n) => Ok(n),
            None => chernoff_sample_size(self.epsilon, self.xi),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleStatus {
    Bounded,
    Unbounded,
    Indeterminate,
}

/// One checkpoint line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub sample_index: u64,
    pub seed: u64,
    pub indicator: Option<u8>,
    /// `None` when the norm was not finite.
    pub max_v_norm: Option<f64>,
    pub status: SampleStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloReport {
    pub planned: u64,
    pub bounded: u64,
    pub unbounded: u64,
    pub indeterminate: u64,
    /// `bounded / (bounded + unbounded)`; `None` if no run was determinate.
    pub p_hat: Option<f64>,
    pub records: Vec<SampleRecord>,
}

impl MonteCarloReport {
    pub fn from_records(planned: u64, records: Vec<SampleRecord>) -> Self {
        let count = |s| records.iter().filter(|r| r.status == s).count() as u64;
        let (bounded, unbounded, indeterminate) =
            (count(SampleStatus::Bounded), count(SampleStatus::Unbounded), count(SampleStatus::Indeterminate));
        let p_hat = (bounded + unbounded > 0).then(|| bounded as f64 / (bounded + unbounded) as f64);
        Self { planned, bounded, unbounded, indeterminate, p_hat, records }
    }
}

/// Integrates the reduced donor-controlled model of one instance and
/// classifies `sup_t ||v(t)||_inf` against the cap.
pub fn run_sample(config: &MonteCarloConfig, index: u64, instance: Result<RandomInstance>) -> SampleRecord {
    let seed = sample_seed(config.base_seed, index);
    let indeterminate = |why: String| {
        log::warn!("sample {index} (seed {seed}) indeterminate: {why}");
        SampleRecord { sample_index: index, seed, indicator: None, max_v_norm: None, status: SampleStatus::Indeterminate }
    };
    let inst = match instance {
        Ok(i) => i,
        Err(e) => return indeterminate(e.to_string()),
    };
    let a0 = Arc::new(inst.a0);
    let rs = match ReducedState::initial(a0.clone(), inst.w0) {
        Ok(rs) => rs,
        Err(e) => return indeterminate(e.to_string()),
    };
    let model = match ReducedModel::new(&a0, &inst.profile, WorkFlowKind::DonorControlled) {
        Ok(m) => m,
        Err(e) => return indeterminate(e.to_string()),
    };
    let n = rs.n();
    let mut opts = config.integrator.clone();
    opts.t_end = config.horizon;
    let mut max_norm: f64 = 0.0;
    let mut exceeded = false;
    let y0 = ReducedModel::pack(&rs);
    let outcome = integrate(&model, 0.0, &y0, &opts, |_, y| {
        let norm = y[..n].iter().fold(0.0, |m: f64, x| if x.is_finite() { m.max(x.abs()) } else { f64::INFINITY });
        max_norm = max_norm.max(norm);
        if boundedness_from_norms([norm], Some(config.v_cap)) == 0 {
            exceeded = true;
            return Ok(ControlFlow::Break(()));
        }
        Ok(ControlFlow::Continue(()))
    });
    match outcome {
        Ok(_) => {
            let indicator = u8::from(!exceeded);
            SampleRecord {
                sample_index: index,
                seed,
                indicator: Some(indicator),
                max_v_norm: max_norm.is_finite().then_some(max_norm),
                status: if exceeded { SampleStatus::Unbounded } else { SampleStatus::Bounded },
            }
        }
        Err(e) => indeterminate(e.to_string()),
    }
}

fn load_checkpoint(config: &MonteCarloConfig) -> Result<BTreeMap<u64, SampleRecord>> {
    let mut done = BTreeMap::new();
    let Some(path) = &config.checkpoint else { return Ok(done) };
    if !path.exists() {
        return Ok(done);
    }
    for (lineno, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: SampleRecord = match serde_json::from_str(&line) {
            Ok(r) => r,
            Err(e) => {
                // A torn final line from an interrupted run is recomputed.
                log::warn!("skipping unreadable checkpoint line {}: {e}", lineno + 1);
                continue;
            }
        };
        if rec.seed != sample_seed(config.base_seed, rec.sample_index) {
            return Err(AsapError::Parameter(format!(
                "checkpoint {} was written with a different base seed (sample {})",
                path.display(),
                rec.sample_index
            )));
        }
        done.insert(rec.sample_index, rec);
    }
    Ok(done)
}

#[cfg(feature = "parallel")]
fn run_all<F>(todo: &[u64], workers: Option<usize>, run: F) -> Result<Vec<SampleRecord>>
where
    F: Fn(u64) -> Result<SampleRecord> + Sync,
{
    use rayon::prelude::*;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(k) = workers {
        builder = builder.num_threads(k);
    }
    let pool = builder.build().map_err(|e| AsapError::Parameter(format!("worker pool: {e}")))?;
    pool.install(|| todo.par_iter().map(|&i| run(i)).collect())
}

#[cfg(not(feature = "parallel"))]
fn run_all<F>(todo: &[u64], _workers: Option<usize>, run: F) -> Result<Vec<SampleRecord>>
where
    F: Fn(u64) -> Result<SampleRecord> + Sync,
{
    todo.iter().map(|&i| run(i)).collect()
}

/// Runs the campaign with [`generate_random_instance`] as the generator.
pub fn run_monte_carlo(config: &MonteCarloConfig) -> Result<MonteCarloReport> {
    let (n, p) = (config.n, config.edge_probability);
    run_monte_carlo_with(config, |seed, _| generate_random_instance(n, p, seed))
}

/// Runs the campaign on a worker pool with a custom instance generator
/// `(sample seed, sample index) -> instance`. Completed samples found in the
/// checkpoint file are skipped; new records are appended as they finish.
pub fn run_monte_carlo_with<G>(config: &MonteCarloConfig, generator: G) -> Result<MonteCarloReport>
where
    G: Fn(u64, u64) -> Result<RandomInstance> + Sync,
{
    config.validate()?;
    let planned = config.planned_samples()?;
    let mut done = load_checkpoint(config)?;
    done.retain(|&i, _| i < planned);
    let todo: Vec<u64> = (0..planned).filter(|i| !done.contains_key(i)).collect();
    log::info!("monte carlo: {planned} planned, {} from checkpoint, {} to run", done.len(), todo.len());

    let sink = match &config.checkpoint {
        Some(path) => Some(Mutex::new(OpenOptions::new().create(true).append(true).open(path)?)),
        None => None,
    };
    let run = |i: u64| -> Result<SampleRecord> {
        let rec = run_sample(config, i, generator(sample_seed(config.base_seed, i), i));
        if let Some(sink) = &sink {
            let line = serde_json::to_string(&rec).map_err(|e| AsapError::Numeric(e.to_string()))?;
            let mut f = sink.lock().expect("checkpoint lock");
            writeln!(f, "{line}")?;
            f.flush()?;
        }
        Ok(rec)
    };
    let fresh = run_all(&todo, config.workers, run)?;
    for rec in fresh {
        done.insert(rec.sample_index, rec);
    }
    Ok(MonteCarloReport::from_records(planned, done.into_values().collect()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SwitchKind {
    Add,
    Remove,
}

/// Appraisals set up when a member joins: the newcomer puts `self_weight` on
/// itself and the rest on the sponsor; the sponsor scales its row by
/// `1 - sponsor_grant` and gives `sponsor_grant` to the newcomer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NewcomerInit {
    pub self_weight: f64,
    pub sponsor_grant: f64,
}

impl Default for NewcomerInit {
    fn default() -> Self {
        Self { self_weight: 0.5, sponsor_grant: 0.2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchEvent {
    pub time: f64,
    pub kind: SwitchKind,
    pub subject: u32,
    /// Sponsor (on add) or absorber (on remove).
    pub neighbor: u32,
    /// Share of the sponsor's workload handed to a newcomer.
    #[serde(default = "default_transfer")]
    pub transfer_fraction: f64,
    #[serde(default)]
    pub init: NewcomerInit,
    /// Newcomer's `(skill, exponent)`; required on add.
    #[serde(default)]
    pub performance: Option<(f64, f64)>,
}

fn default_transfer() -> f64 {
    0.5
}

/// A team whose members carry stable ids and power-law parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioTeam {
    pub ids: Vec<u32>,
    pub state: TeamState,
    pub skill: Vec<f64>,
    pub exponent: Vec<f64>,
}

impl ScenarioTeam {
    pub fn new(ids: Vec<u32>, state: TeamState, profile: &PowerLaw) -> Result<Self> {
        let n = state.n();
        crate::error::check_dim(n, ids.len())?;
        crate::error::check_dim(n, profile.skill().len())?;
        let mut sorted = ids.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != n {
            return Err(AsapError::Scenario("member ids must be distinct".into()));
        }
        Ok(Self { ids, state, skill: profile.skill().to_vec(), exponent: profile.exponent().to_vec() })
    }

    pub fn profile(&self) -> Result<PerformanceProfile> {
        Ok(PowerLaw::new(self.skill.clone(), self.exponent.clone())?.into())
    }

    fn position(&self, id: u32) -> Result<usize> {
        self.ids.iter().position(|&x| x == id).ok_or_else(|| AsapError::Scenario(format!("no member with id {id}")))
    }

    fn check_hypotheses(&self) -> Result<()> {
        let report = validate_state(&self.state, DEFAULT_INVARIANT_TOLERANCE);
        if !report.is_ok() {
            return Err(AsapError::Scenario(format!("mutated state is invalid: {:?}", report.violations)));
        }
        if !self.state.appraisal.has_positive_diagonal() {
            return Err(AsapError::Scenario("mutated state lost a self-appraisal".into()));
        }
        if !is_strongly_connected(&pattern_of(&self.state.appraisal, 0.0)) {
            return Err(AsapError::Scenario("event breaks strong connectivity".into()));
        }
        Ok(())
    }
}

/// Applies one event and checks that the result is a valid, strongly
/// connected team with positive self-appraisals.
pub fn apply_event(team: &ScenarioTeam, event: &SwitchEvent) -> Result<ScenarioTeam> {
    let n = team.state.n();
    let a = team.state.appraisal.matrix();
    let w = team.state.workload.vector();
    let time = team.state.time;
    let out = match event.kind {
        SwitchKind::Add => {
            if team.ids.contains(&event.subject) {
                return Err(AsapError::Scenario(format!("member {} already present", event.subject)));
            }
            let s = team.position(event.neighbor)?;
            let f = event.transfer_fraction;
            let NewcomerInit { self_weight, sponsor_grant } = event.init;
            for (name, v) in [("transfer_fraction", f), ("self_weight", self_weight), ("sponsor_grant", sponsor_grant)] {
                if !(v > 0.0 && v < 1.0) {
                    return Err(AsapError::Scenario(format!("{name} must lie in (0, 1), got {v}")));
                }
            }
            let (skill, exponent) = event
                .performance
                .ok_or_else(|| AsapError::Scenario(format!("added member {} needs a performance function", event.subject)))?;
            PowerLaw::new(vec![skill], vec![exponent])?;

            let mut m = DMatrix::zeros(n + 1, n + 1);
            m.view_mut((0, 0), (n, n)).copy_from(a);
            let scaled: Vec<f64> = m.row(s).iter().map(|x| x * (1.0 - sponsor_grant)).collect();
            m.row_mut(s).iter_mut().zip(scaled).for_each(|(x, y)| *x = y);
            m[(s, n)] = sponsor_grant;
            m[(n, n)] = self_weight;
            m[(n, s)] = 1.0 - self_weight;

            let moved = f * w[s];
            let mut nw = w.clone().insert_row(n, moved);
            nw[s] = w[s] - moved;

            let mut ids = team.ids.clone();
            ids.push(event.subject);
            let mut sk = team.skill.clone();
            sk.push(skill);
            let mut ex = team.exponent.clone();
            ex.push(exponent);
            ScenarioTeam {
                ids,
                state: TeamState {
                    appraisal: AppraisalMatrix::from_matrix_unchecked(m),
                    workload: WorkloadVector::from_vector_unchecked(nw),
                    time,
                },
                skill: sk,
                exponent: ex,
            }
        }
        SwitchKind::Remove => {
            let j = team.position(event.subject)?;
            let k = team.position(event.neighbor)?;
            if j == k {
                return Err(AsapError::Scenario("a member cannot absorb its own workload".into()));
            }
            if !(a[(j, k)] > 0.0 || a[(k, j)] > 0.0) {
                return Err(AsapError::Scenario(format!(
                    "absorber {} is not adjacent to {}",
                    event.neighbor, event.subject
                )));
            }
            if n <= 1 {
                return Err(AsapError::Scenario("cannot remove the last member".into()));
            }
            let mut nw = w.clone();
            nw[k] += w[j];
            let nw = nw.remove_row(j);
            let mut m = a.clone().remove_row(j).remove_column(j);
            for i in 0..n - 1 {
                let s: f64 = m.row(i).sum();
                m.row_mut(i).iter_mut().for_each(|x| *x /= s);
            }
            let mut ids = team.ids.clone();
            ids.remove(j);
            let mut sk = team.skill.clone();
            sk.remove(j);
            let mut ex = team.exponent.clone();
            ex.remove(j);
            ScenarioTeam {
                ids,
                state: TeamState {
                    appraisal: AppraisalMatrix::from_matrix_unchecked(m),
                    workload: WorkloadVector::from_vector_unchecked(nw),
                    time,
                },
                skill: sk,
                exponent: ex,
            }
        }
    };
    out.check_hypotheses()?;
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct ScenarioInterval {
    pub start: f64,
    pub end: f64,
    pub ids: Vec<u32>,
    pub trajectory: Trajectory<TeamState>,
    /// `H_tot` of the sub-team at each sample.
    pub h_tot: Vec<f64>,
    /// `H_tot` at the sub-team's optimal workload.
    pub h_tot_opt: f64,
    pub w_opt: WorkloadVector,
    /// Performance spread at the last sample of the interval.
    pub final_spread: f64,
}

#[derive(Debug, Clone)]
pub struct ScenarioOutcome {
    pub intervals: Vec<ScenarioInterval>,
    /// `|sum w after - sum w before|` for each event.
    pub event_sum_drift: Vec<f64>,
}

/// Integrates the full model between events, mutating the team at each
/// event time. The last interval ends at `opts.t_end`.
pub fn run_switching_scenario(
    initial: &ScenarioTeam,
    events: &[SwitchEvent],
    kind: WorkFlowKind,
    opts: &IntegratorOptions,
) -> Result<ScenarioOutcome> {
    let mut prev = initial.state.time;
    for e in events {
        if !(e.time > prev && e.time < opts.t_end) {
            return Err(AsapError::Scenario(format!(
                "event times must increase strictly inside ({}, {}); got {}",
                initial.state.time, opts.t_end, e.time
            )));
        }
        prev = e.time;
    }
    initial.check_hypotheses()?;

    let mut team = initial.clone();
    let mut intervals = Vec::with_capacity(events.len() + 1);
    let mut event_sum_drift = Vec::with_capacity(events.len());
    let ends = events.iter().map(|e| e.time).chain(std::iter::once(opts.t_end));
    for (k, end) in ends.enumerate() {
        let profile = team.profile()?;
        let mut seg = opts.clone();
        seg.t_end = end;
        let traj = integrate_full(&team.state, &profile, kind, &seg, &DiagnosticsRequest::default())?;
        let h_tot = traj
            .states
            .iter()
            .map(|s| team_performance(&profile, s.workload.vector(), TeamMetric::Total))
            .collect::<Result<Vec<_>>>()?;
        let w_opt = solve_optimal_workload(&profile, DEFAULT_SOLVER_TOLERANCE)?.w_opt;
        let h_tot_opt = team_performance(&profile, w_opt.vector(), TeamMetric::Total)?;
        let (_, last) = traj.last().ok_or_else(|| AsapError::Scenario("empty interval".into()))?;
        let last = last.clone();
        let p = eval_performance(&profile, last.workload.vector())?;
        intervals.push(ScenarioInterval {
            start: team.state.time,
            end,
            ids: team.ids.clone(),
            h_tot,
            h_tot_opt,
            w_opt,
            final_spread: p.max() - p.min(),
            trajectory: traj,
        });
        if let Some(event) = events.get(k) {
            let before: f64 = last.workload.as_slice().iter().sum();
            team.state = last;
            team = apply_event(&team, event)?;
            let after: f64 = team.state.workload.as_slice().iter().sum();
            event_sum_drift.push((after - before).abs());
            log::info!("t = {end}: {:?} member {} ({} members now)", event.kind, event.subject, team.ids.len());
        }
    }
    Ok(ScenarioOutcome { intervals, event_sum_drift })
}
