//! Adaptive Dormand-Prince 5(4) integration with PI step control, dense
//! output sampling and invariant monitoring, plus the adapters that turn the
//! full, reduced and two-node models into flat ODE systems.

use std::ops::ControlFlow;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::analysis::{performance_entropy, reduced_lyapunov};
use crate::dynamics::{
    reconstruct_appraisal, reduced_rhs_with, rhs_full_conservative, rhs_two_node, ReducedState, WorkFlowKind,
};
use crate::error::{AsapError, Result};
use crate::graph::{cycle_constant, Cycle};
use crate::types::{
    eval_performance, AppraisalMatrix, PerformanceProfile, TeamState, WorkloadVector, DEFAULT_INVARIANT_TOLERANCE,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IntegratorOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
    pub t_end: f64,
    pub sample_interval: f64,
    pub invariant_tolerance: f64,
    pub convergence_tolerance: f64,
    pub renormalize: bool,
    pub max_steps: usize,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-8,
            abs_tol: 1e-10,
            max_step: f64::INFINITY,
            t_end: 1000.0,
            sample_interval: 1.0,
            invariant_tolerance: DEFAULT_INVARIANT_TOLERANCE,
            convergence_tolerance: 1e-8,
            renormalize: false,
            max_steps: 50_000_000,
        }
    }
}

impl IntegratorOptions {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("rel_tol", self.rel_tol),
            ("abs_tol", self.abs_tol),
            ("max_step", self.max_step),
            ("t_end", self.t_end),
            ("sample_interval", self.sample_interval),
            ("invariant_tolerance", self.invariant_tolerance),
            ("convergence_tolerance", self.convergence_tolerance),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(AsapError::Parameter(format!("{name} must be positive, got {v}")));
            }
        }
        if !self.t_end.is_finite() || !self.sample_interval.is_finite() {
            return Err(AsapError::Parameter("t_end and sample_interval must be finite".into()));
        }
        Ok(())
    }

    pub fn with_t_end(mut self, t_end: f64) -> Self {
        self.t_end = t_end;
        self
    }

    pub fn with_tolerances(mut self, rel_tol: f64, abs_tol: f64) -> Self {
        self.rel_tol = rel_tol;
        self.abs_tol = abs_tol;
        self
    }

    pub fn with_sample_interval(mut self, dt: f64) -> Self {
        self.sample_interval = dt;
        self
    }
}

/// A flat first-order system `y' = f(t, y)`.
pub trait OdeSystem {
    fn dim(&self) -> usize;

    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<()>;

    /// Largest violation of the system's conserved sums at `y`.
    fn invariant_drift(&self, _y: &[f64]) -> f64 {
        0.0
    }

    /// Projects `y` back onto the invariant set.
    fn renormalize(&self, _y: &mut [f64]) {}
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolveStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

// Dormand-Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A21: f64 = 0.2;
const A3: [f64; 2] = [3.0 / 40.0, 9.0 / 40.0];
const A4: [f64; 3] = [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0];
const A5: [f64; 4] = [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0];
const A6: [f64; 5] = [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0];
const B: [f64; 6] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];
const D: [f64; 7] = [
    -12715105075.0 / 11282082432.0,
    0.0,
    87487479700.0 / 32700410799.0,
    -10690763975.0 / 1880347072.0,
    701980252875.0 / 199316789632.0,
    -1453857185.0 / 822651844.0,
    69997945.0 / 29380423.0,
];

// PI controller (Hairer & Wanner defaults).
const SAFETY: f64 = 0.9;
const BETA: f64 = 0.04;
const EXPO1: f64 = 0.2 - BETA * 0.75;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;

fn error_norm(err: &[f64], y0: &[f64], y1: &[f64], rtol: f64, atol: f64) -> f64 {
    let n = err.len().max(1) as f64;
    let sum: f64 = err
        .iter()
        .zip(y0.iter().zip(y1))
        .map(|(e, (a, b))| {
            let sk = atol + rtol * a.abs().max(b.abs());
            (e / sk).powi(2)
        })
        .sum();
    (sum / n).sqrt()
}

fn initial_step<S: OdeSystem>(sys: &S, t: f64, y: &[f64], f0: &[f64], opts: &IntegratorOptions) -> f64 {
    let n = y.len();
    let scale: Vec<f64> = y.iter().map(|v| opts.abs_tol + opts.rel_tol * v.abs()).collect();
    let norm = |v: &[f64]| (v.iter().zip(&scale).map(|(x, s)| (x / s).powi(2)).sum::<f64>() / n.max(1) as f64).sqrt();
    let (d0, d1) = (norm(y), norm(f0));
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let h0 = h0.min(opts.max_step);
    let y1: Vec<f64> = y.iter().zip(f0).map(|(a, b)| a + h0 * b).collect();
    let mut f1 = vec![0.0; n];
    if sys.rhs(t + h0, &y1, &mut f1).is_err() {
        return h0 * 1e-3;
    }
    let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
    let d2 = norm(&diff) / h0;
    let h1 = if d1.max(d2) <= 1e-15 { (h0 * 1e-3).max(1e-6) } else { (0.01 / d1.max(d2)).powf(0.2) };
    (100.0 * h0).min(h1).min(opts.max_step)
}

/// Integrates `sys` from `(t0, y0)` to `opts.t_end`, calling `on_sample` at
/// `t0` and then every `sample_interval` (plus `t_end`). Sample values come
/// from the 4th-order continuous extension. `on_sample` may stop early.
pub fn integrate<S, F>(sys: &S, t0: f64, y0: &[f64], opts: &IntegratorOptions, mut on_sample: F) -> Result<SolveStats>
where
    S: OdeSystem,
    F: FnMut(f64, &[f64]) -> Result<ControlFlow<()>>,
{
    opts.validate()?;
    let n = sys.dim();
    crate::error::check_dim(n, y0.len())?;
    let mut stats = SolveStats::default();
    let mut y = y0.to_vec();
    let mut t = t0;
    let t_end = opts.t_end;
    let drift_limit = 10.0 * opts.invariant_tolerance;

    let mut next_sample_index: u64 = 1;
    let sample_time = |k: u64| (t0 + k as f64 * opts.sample_interval).min(t_end);
    if on_sample(t, &y)?.is_break() || t >= t_end {
        return Ok(stats);
    }

    let mut k: [Vec<f64>; 7] = std::array::from_fn(|_| vec![0.0; n]);
    sys.rhs(t, &y, &mut k[0])?;
    stats.evaluations += 1;
    let mut h = initial_step(sys, t, &y, &k[0], opts);
    stats.evaluations += 1;
    let mut facold: f64 = 1e-4;
    let mut last_rejected = false;
    let mut ytmp = vec![0.0; n];
    let mut ynew = vec![0.0; n];
    let mut err = vec![0.0; n];
    let mut cont: [Vec<f64>; 5] = std::array::from_fn(|_| vec![0.0; n]);

    while t < t_end {
        if stats.accepted + stats.rejected >= opts.max_steps {
            return Err(AsapError::Numeric(format!("step budget of {} exhausted at t = {t}", opts.max_steps)));
        }
        let min_step = 1e-14 * t.abs().max(1.0);
        if h < min_step {
            return Err(AsapError::StepUnderflow { time: t, step: h });
        }
        h = h.min(opts.max_step);
        if t + h >= t_end || t + 1.01 * h >= t_end {
            h = t_end - t;
        }

        let stage_ok = (|| -> Result<()> {
            let (k0, rest) = k.split_first_mut().expect("seven stages");
            let k0 = &*k0;
            for i in 0..n {
                ytmp[i] = y[i] + h * A21 * k0[i];
            }
            sys.rhs(t + C[1] * h, &ytmp, &mut rest[0])?;
            for i in 0..n {
                ytmp[i] = y[i] + h * (A3[0] * k0[i] + A3[1] * rest[0][i]);
            }
            sys.rhs(t + C[2] * h, &ytmp, &mut rest[1])?;
            for i in 0..n {
                ytmp[i] = y[i] + h * (A4[0] * k0[i] + A4[1] * rest[0][i] + A4[2] * rest[1][i]);
            }
            sys.rhs(t + C[3] * h, &ytmp, &mut rest[2])?;
            for i in 0..n {
                ytmp[i] = y[i]
                    + h * (A5[0] * k0[i] + A5[1] * rest[0][i] + A5[2] * rest[1][i] + A5[3] * rest[2][i]);
            }
            sys.rhs(t + C[4] * h, &ytmp, &mut rest[3])?;
            for i in 0..n {
                ytmp[i] = y[i]
                    + h * (A6[0] * k0[i]
                        + A6[1] * rest[0][i]
                        + A6[2] * rest[1][i]
                        + A6[3] * rest[2][i]
                        + A6[4] * rest[3][i]);
            }
            sys.rhs(t + C[5] * h, &ytmp, &mut rest[4])?;
            for i in 0..n {
                ynew[i] = y[i]
                    + h * (B[0] * k0[i] + B[2] * rest[1][i] + B[3] * rest[2][i] + B[4] * rest[3][i]
                        + B[5] * rest[4][i]);
            }
            sys.rhs(t + h, &ynew, &mut rest[5])?;
            Ok(())
        })();
        stats.evaluations += 6;

        if stage_ok.is_err() || ynew.iter().any(|v| !v.is_finite()) {
            // A stage left the model's domain; retry with a much smaller step.
            stats.rejected += 1;
            last_rejected = true;
            h *= 0.25;
            continue;
        }

        for i in 0..n {
            err[i] = h * (E[0] * k[0][i] + E[2] * k[2][i] + E[3] * k[3][i] + E[4] * k[4][i] + E[5] * k[5][i]
                + E[6] * k[6][i]);
        }
        let e = error_norm(&err, &y, &ynew, opts.rel_tol, opts.abs_tol);
        let fac11 = e.powf(EXPO1);

        if e <= 1.0 {
            let fac = (fac11 / facold.powf(BETA) / SAFETY).clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
            let mut hnew = h / fac;
            if last_rejected {
                hnew = hnew.min(h);
            }
            facold = e.max(1e-4);
            stats.accepted += 1;
            last_rejected = false;

            for i in 0..n {
                let ydiff = ynew[i] - y[i];
                let bspl = h * k[0][i] - ydiff;
                cont[0][i] = y[i];
                cont[1][i] = ydiff;
                cont[2][i] = bspl;
                cont[3][i] = ydiff - h * k[6][i] - bspl;
                cont[4][i] = h
                    * (D[0] * k[0][i] + D[2] * k[2][i] + D[3] * k[3][i] + D[4] * k[4][i] + D[5] * k[5][i]
                        + D[6] * k[6][i]);
            }
            let t_new = if (t_end - (t + h)).abs() <= 1e-12 * t_end.abs().max(1.0) { t_end } else { t + h };

            if opts.renormalize {
                sys.renormalize(&mut ynew);
                sys.rhs(t_new, &ynew, &mut k[6])?;
                stats.evaluations += 1;
            }
            let drift = sys.invariant_drift(&ynew);
            if !(drift <= drift_limit) {
                return Err(AsapError::IntegrationDiverged { time: t_new, drift, limit: drift_limit });
            }

            let mut stop = false;
            loop {
                let ts = sample_time(next_sample_index);
                if ts > t_new || (ts == t_new && t_new < t_end && ts < t_end && next_sample_index == u64::MAX) {
                    break;
                }
                if ts > t_new {
                    break;
                }
                let sample: Vec<f64> = if ts == t_new {
                    ynew.clone()
                } else {
                    let theta = (ts - t) / h;
                    let theta1 = 1.0 - theta;
                    let mut s: Vec<f64> = (0..n)
                        .map(|i| {
                            cont[0][i]
                                + theta * (cont[1][i] + theta1 * (cont[2][i] + theta * (cont[3][i] + theta1 * cont[4][i])))
                        })
                        .collect();
                    if opts.renormalize {
                        sys.renormalize(&mut s);
                    }
                    s
                };
                next_sample_index += 1;
                if on_sample(ts, &sample)?.is_break() {
                    stop = true;
                    break;
                }
                if ts >= t_end {
                    break;
                }
            }

            y.copy_from_slice(&ynew);
            k.swap(0, 6);
            t = t_new;
            h = hnew;
            if stop {
                break;
            }
        } else {
            stats.rejected += 1;
            last_rejected = true;
            h /= (fac11 / SAFETY).min(1.0 / FAC_MIN);
        }
    }
    Ok(stats)
}

/// Snapshots plus diagnostic channels sampled along one integration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory<S> {
    pub times: Vec<f64>,
    pub states: Vec<S>,
    pub diagnostics: Diagnostics,
}

impl<S> Default for Trajectory<S> {
    fn default() -> Self {
        Self { times: Vec::new(), states: Vec::new(), diagnostics: Diagnostics::default() }
    }
}

impl<S> Trajectory<S> {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> Option<(f64, &S)> {
        self.times.last().copied().zip(self.states.last())
    }
}

/// Per-sample diagnostic channels. `spread` and `rhs_norm` are always
/// filled; cycle constants and Lyapunov values only when requested.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub cycles: Vec<Cycle>,
    /// `cycle_constants[k][r]`: constant of `cycles[r]` at sample `k`; NaN
    /// once an entry on the cycle is no longer positive.
    pub cycle_constants: Vec<Vec<f64>>,
    pub lyapunov: Vec<f64>,
    /// `max_i p_i - min_i p_i`.
    pub spread: Vec<f64>,
    /// Sup-norm of the right-hand side (relative rates `v'/v` for the
    /// reduced model).
    pub rhs_norm: Vec<f64>,
}

/// Which optional diagnostic channels to record.
#[derive(Debug, Clone, Default)]
pub struct DiagnosticsRequest {
    pub cycles: Vec<Cycle>,
    pub lyapunov: Option<LyapunovReference>,
}

/// Reference equilibrium for the Lyapunov channel. Full trajectories use the
/// performance-entropy function and need `a_star`; reduced trajectories use
/// the reduced function and only need `w_opt`.
#[derive(Debug, Clone)]
pub struct LyapunovReference {
    pub a_star: Option<AppraisalMatrix>,
    pub w_opt: WorkloadVector,
}

/// Integration error together with everything sampled before it.
#[derive(Debug)]
pub struct IntegrationFailure<S> {
    pub error: AsapError,
    pub partial: Trajectory<S>,
}

impl<S> std::fmt::Display for IntegrationFailure<S> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} (after {} samples)", self.error, self.partial.len())
    }
}

impl<S: std::fmt::Debug> std::error::Error for IntegrationFailure<S> {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

impl<S> From<IntegrationFailure<S>> for AsapError {
    fn from(f: IntegrationFailure<S>) -> Self {
        f.error
    }
}

/// Full model packed as `[a_11, a_12, ..., a_nn, w_1, ..., w_n]`.
pub struct FullModel<'a> {
    profile: &'a PerformanceProfile,
    kind: WorkFlowKind,
    n: usize,
    pinned: Vec<bool>,
}

impl<'a> FullModel<'a> {
    /// Entries that are exactly zero in `initial` stay pinned at zero.
    pub fn new(profile: &'a PerformanceProfile, kind: WorkFlowKind, initial: &TeamState) -> Result<Self> {
        let n = initial.n();
        crate::error::check_dim(profile.n(), n)?;
        let a = initial.appraisal.matrix();
        let pinned = (0..n * n).map(|k| a[(k / n, k % n)] == 0.0).collect();
        Ok(Self { profile, kind, n, pinned })
    }

    pub fn pack(state: &TeamState) -> Vec<f64> {
        let n = state.n();
        let a = state.appraisal.matrix();
        let mut y = Vec::with_capacity(n * n + n);
        for i in 0..n {
            for j in 0..n {
                y.push(a[(i, j)]);
            }
        }
        y.extend_from_slice(state.workload.as_slice());
        y
    }

    pub fn unpack(&self, t: f64, y: &[f64]) -> TeamState {
        let n = self.n;
        TeamState {
            appraisal: AppraisalMatrix::from_matrix_unchecked(DMatrix::from_row_slice(n, n, &y[..n * n])),
            workload: WorkloadVector::from_vector_unchecked(DVector::from_column_slice(&y[n * n..])),
            time: t,
        }
    }
}

impl OdeSystem for FullModel<'_> {
    fn dim(&self) -> usize {
        self.n * self.n + self.n
    }

    fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
        let n = self.n;
        let a = DMatrix::from_row_slice(n, n, &y[..n * n]);
        let w = DVector::from_column_slice(&y[n * n..]);
        let p = eval_performance(self.profile, &w)?;
        let (da, dw) = rhs_full_conservative(&a, &w, &p, self.kind)?;
        for i in 0..n {
            for j in 0..n {
                let k = i * n + j;
                dy[k] = if self.pinned[k] { 0.0 } else { da[(i, j)] };
            }
        }
        dy[n * n..].copy_from_slice(dw.as_slice());
        Ok(())
    }

    fn invariant_drift(&self, y: &[f64]) -> f64 {
        let n = self.n;
        let rows = (0..n).map(|i| (y[i * n..(i + 1) * n].iter().sum::<f64>() - 1.0).abs());
        let w = (y[n * n..].iter().sum::<f64>() - 1.0).abs();
        rows.fold(w, f64::max)
    }

    fn renormalize(&self, y: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            let row = &mut y[i * n..(i + 1) * n];
            let s: f64 = row.iter().sum();
            row.iter_mut().for_each(|x| *x /= s);
        }
        let w = &mut y[n * n..];
        let s: f64 = w.iter().sum();
        w.iter_mut().for_each(|x| *x /= s);
    }
}

/// Reduced model packed as `[v_1, ..., v_n, w_1, ..., w_n]`.
pub struct ReducedModel<'a> {
    a0: &'a AppraisalMatrix,
    profile: &'a PerformanceProfile,
    kind: WorkFlowKind,
}

impl<'a> ReducedModel<'a> {
    pub fn new(a0: &'a AppraisalMatrix, profile: &'a PerformanceProfile, kind: WorkFlowKind) -> Result<Self> {
        crate::error::check_dim(profile.n(), a0.n())?;
        Ok(Self { a0, profile, kind })
    }

    pub fn pack(state: &ReducedState) -> Vec<f64> {
        state.v.iter().chain(state.workload.as_slice()).copied().collect()
    }
}

impl OdeSystem for ReducedModel<'_> {
    fn dim(&self) -> usize {
        2 * self.a0.n()
    }

    fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
        let n = self.a0.n();
        let v = DVector::from_column_slice(&y[..n]);
        let w = DVector::from_column_slice(&y[n..]);
        let a = reconstruct_appraisal(&v, self.a0)?;
        let (dv, dw) = reduced_rhs_with(&v, &w, a.matrix(), self.profile, self.kind)?;
        dy[..n].copy_from_slice(dv.as_slice());
        dy[n..].copy_from_slice(dw.as_slice());
        Ok(())
    }

    fn invariant_drift(&self, y: &[f64]) -> f64 {
        let n = self.a0.n();
        if y[..n].iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return f64::INFINITY;
        }
        (y[n..].iter().sum::<f64>() - 1.0).abs()
    }

    fn renormalize(&self, y: &mut [f64]) {
        let n = self.a0.n();
        let w = &mut y[n..];
        let s: f64 = w.iter().sum();
        w.iter_mut().for_each(|x| *x /= s);
    }
}

/// Two-member donor-controlled system in `(a11, w1)` with fixed cycle
/// constant `c`.
pub struct TwoNodeModel<'a> {
    pub c: f64,
    pub profile: &'a PerformanceProfile,
}

impl OdeSystem for TwoNodeModel<'_> {
    fn dim(&self) -> usize {
        2
    }

    fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
        let (da, dw) = rhs_two_node(y[0], y[1], self.c, self.profile)?;
        dy[0] = da;
        dy[1] = dw;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoNodeState {
    pub a11: f64,
    pub w1: f64,
    pub time: f64,
}

fn spread(p: &DVector<f64>) -> f64 {
    p.max() - p.min()
}

fn run_into_trajectory<S, M, F>(
    sys: &M,
    t0: f64,
    y0: &[f64],
    opts: &IntegratorOptions,
    mut record: F,
) -> Result<Trajectory<S>, IntegrationFailure<S>>
where
    M: OdeSystem,
    F: FnMut(f64, &[f64], &mut Trajectory<S>) -> Result<()>,
{
    let mut traj = Trajectory::default();
    let outcome = integrate(sys, t0, y0, opts, |t, y| {
        record(t, y, &mut traj)?;
        Ok(ControlFlow::Continue(()))
    });
    match outcome {
        Ok(_) => Ok(traj),
        Err(error) => Err(IntegrationFailure { error, partial: traj }),
    }
}

/// Integrates the full appraisal/workload model.
pub fn integrate_full(
    initial: &TeamState,
    profile: &PerformanceProfile,
    kind: WorkFlowKind,
    opts: &IntegratorOptions,
    request: &DiagnosticsRequest,
) -> Result<Trajectory<TeamState>, IntegrationFailure<TeamState>> {
    let fail = |error| IntegrationFailure { error, partial: Trajectory::default() };
    let model = FullModel::new(profile, kind, initial).map_err(fail)?;
    let y0 = FullModel::pack(initial);
    let mut dy = vec![0.0; model.dim()];
    let mut traj = run_into_trajectory(&model, initial.time, &y0, opts, |t, y, traj: &mut Trajectory<TeamState>| {
        let state = model.unpack(t, y);
        model.rhs(t, y, &mut dy)?;
        let p = eval_performance(profile, state.workload.vector())?;
        traj.diagnostics.spread.push(spread(&p));
        traj.diagnostics.rhs_norm.push(dy.iter().fold(0.0, |m: f64, x| m.max(x.abs())));
        if !request.cycles.is_empty() {
            let row = request.cycles.iter().map(|c| cycle_constant(&state.appraisal, c).unwrap_or(f64::NAN)).collect();
            traj.diagnostics.cycle_constants.push(row);
        }
        if let Some(r) = &request.lyapunov {
            let a_star = r.a_star.as_ref().ok_or_else(|| {
                AsapError::Parameter("the full-model Lyapunov channel needs an equilibrium matrix".into())
            })?;
            traj.diagnostics.lyapunov.push(performance_entropy(
                &state.appraisal,
                &state.workload,
                a_star,
                &r.w_opt,
                profile,
            )?);
        }
        traj.times.push(t);
        traj.states.push(state);
        Ok(())
    })?;
    traj.diagnostics.cycles = request.cycles.clone();
    Ok(traj)
}

/// Integrates the reduced model from `initial`. Cycle-constant requests are
/// evaluated on the reconstructed appraisal matrix.
pub fn integrate_reduced(
    initial: &ReducedState,
    profile: &PerformanceProfile,
    kind: WorkFlowKind,
    opts: &IntegratorOptions,
    request: &DiagnosticsRequest,
) -> Result<Trajectory<ReducedState>, IntegrationFailure<ReducedState>> {
    let fail = |error| IntegrationFailure { error, partial: Trajectory::default() };
    let a0: Arc<AppraisalMatrix> = initial.reference.clone();
    let model = ReducedModel::new(&a0, profile, kind).map_err(fail)?;
    let n = a0.n();
    let y0 = ReducedModel::pack(initial);
    let mut dy = vec![0.0; 2 * n];
    let mut traj = run_into_trajectory(&model, initial.time, &y0, opts, |t, y, traj: &mut Trajectory<ReducedState>| {
        let state = ReducedState {
            v: DVector::from_column_slice(&y[..n]),
            workload: WorkloadVector::from_vector_unchecked(DVector::from_column_slice(&y[n..])),
            reference: a0.clone(),
            time: t,
        };
        model.rhs(t, y, &mut dy)?;
        let p = eval_performance(profile, state.workload.vector())?;
        traj.diagnostics.spread.push(spread(&p));
        let rate = (0..n).map(|i| (dy[i] / y[i]).abs()).chain(dy[n..].iter().map(|x| x.abs()));
        traj.diagnostics.rhs_norm.push(rate.fold(0.0, f64::max));
        if !request.cycles.is_empty() {
            let a = state.appraisal()?;
            let row = request.cycles.iter().map(|c| cycle_constant(&a, c).unwrap_or(f64::NAN)).collect();
            traj.diagnostics.cycle_constants.push(row);
        }
        if let Some(r) = &request.lyapunov {
            traj.diagnostics.lyapunov.push(reduced_lyapunov(&state, &r.w_opt, profile, kind)?.value);
        }
        traj.times.push(t);
        traj.states.push(state);
        Ok(())
    })?;
    traj.diagnostics.cycles = request.cycles.clone();
    Ok(traj)
}

/// Integrates the two-member system in `(a11, w1)` with cycle constant `c`.
pub fn integrate_two_node(
    a11: f64,
    w1: f64,
    c: f64,
    profile: &PerformanceProfile,
    opts: &IntegratorOptions,
) -> Result<Trajectory<TwoNodeState>, IntegrationFailure<TwoNodeState>> {
    let model = TwoNodeModel { c, profile };
    let mut dy = [0.0; 2];
    run_into_trajectory(&model, 0.0, &[a11, w1], opts, |t, y, traj: &mut Trajectory<TwoNodeState>| {
        model.rhs(t, y, &mut dy)?;
        traj.diagnostics.spread.push((profile.member(0, y[1]) - profile.member(1, 1.0 - y[1])).abs());
        traj.diagnostics.rhs_norm.push(dy[0].abs().max(dy[1].abs()));
        traj.times.push(t);
        traj.states.push(TwoNodeState { a11: y[0], w1: y[1], time: t });
        Ok(())
    })
}

/// Earliest sample at which both the right-hand side sup-norm and the
/// performance spread fall below `tol`.
pub fn detect_convergence<S: Clone>(traj: &Trajectory<S>, tol: f64) -> Option<(f64, S)> {
    let d = &traj.diagnostics;
    (0..traj.len())
        .find(|&k| d.rhs_norm.get(k).is_some_and(|&r| r < tol) && d.spread.get(k).is_some_and(|&s| s < tol))
        .map(|k| (traj.times[k], traj.states[k].clone()))
}
