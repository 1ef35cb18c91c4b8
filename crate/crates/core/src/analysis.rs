//! Lyapunov functions and their derivatives, failure certificates, rank-1
//! checks and boundedness indicators.

use std::collections::BTreeSet;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::dynamics::{rhs_workload, ReducedState, WorkFlowKind};
use crate::error::{check_dim, AsapError, Result};
use crate::integrator::Trajectory;
use crate::types::{eval_performance, AppraisalMatrix, PerformanceProfile, WorkloadVector};

/// Slack allowed on discrete monotonicity checks.
pub const DEFAULT_LYAPUNOV_SLACK: f64 = 1e-8;
pub const DEFAULT_V_CAP: f64 = 1e9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LyapunovSample {
    pub t: f64,
    pub value: f64,
    pub lie_derivative: f64,
    /// Centered difference quotient; `None` at the first and last sample.
    pub difference_quotient: Option<f64>,
}

fn utility_gap(profile: &PerformanceProfile, w: &WorkloadVector, w_opt: &WorkloadVector) -> Result<f64> {
    (0..w.n()).map(|i| profile.integral_between(i, w_opt.as_slice()[i], w.as_slice()[i])).sum()
}

/// `V = -sum_i [ int_{w_opt_i}^{w_i} p_i + w_opt_i sum_k a*_ik ln(a_ik / a*_ik) ]`,
/// the inner sum running over the pattern of `a_star`.
pub fn performance_entropy(
    a: &AppraisalMatrix,
    w: &WorkloadVector,
    a_star: &AppraisalMatrix,
    w_opt: &WorkloadVector,
    profile: &PerformanceProfile,
) -> Result<f64> {
    let n = a.n();
    check_dim(n, a_star.n())?;
    check_dim(n, w.n())?;
    check_dim(n, w_opt.n())?;
    let mut kl = 0.0;
    for i in 0..n {
        let mut row = 0.0;
        for k in 0..n {
            let (x, s) = (a.get(i, k), a_star.get(i, k));
            match (x > 0.0, s > 0.0) {
                (true, true) => row += s * (x / s).ln(),
                (false, false) => {}
                _ => {
                    return Err(AsapError::Domain(format!(
                        "pattern mismatch at ({i}, {k}): a = {x}, a* = {s}"
                    )))
                }
            }
        }
        kl += w_opt.as_slice()[i] * row;
    }
    Ok(-(utility_gap(profile, w, w_opt)? + kl))
}

/// `p(w)^T (I - A^T)(w - w_opt)`, the derivative of the performance entropy
/// along donor-controlled flow.
pub fn lie_derivative_v(
    a: &AppraisalMatrix,
    w: &WorkloadVector,
    w_opt: &WorkloadVector,
    profile: &PerformanceProfile,
) -> Result<f64> {
    check_dim(a.n(), w.n())?;
    check_dim(a.n(), w_opt.n())?;
    let p = eval_performance(profile, w.vector())?;
    let d = w.vector() - w_opt.vector();
    Ok(p.dot(&d) - (a.matrix() * &p).dot(&d))
}

/// Derivative of the performance entropy along either work flow, valid for
/// any `A*` whose left Perron vector is `w_opt`:
/// `-p^T w' - w_opt^T p + w_opt^T A p`.
pub fn lie_derivative_v_for(
    a: &AppraisalMatrix,
    w: &WorkloadVector,
    w_opt: &WorkloadVector,
    profile: &PerformanceProfile,
    kind: WorkFlowKind,
) -> Result<f64> {
    check_dim(a.n(), w.n())?;
    check_dim(a.n(), w_opt.n())?;
    let p = eval_performance(profile, w.vector())?;
    let dw = rhs_workload(a.matrix(), w.vector(), kind)?;
    Ok(-p.dot(&dw) - w_opt.vector().dot(&p) + w_opt.vector().dot(&(a.matrix() * &p)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReducedLyapunov {
    pub value: f64,
    /// `ln(a_min)` for the average-flow variant with `A0 > 0`; `None` when
    /// the bound is unavailable.
    pub lower_bound: Option<f64>,
}

/// Reduced Lyapunov function. Donor flow:
/// `-sum_i (int_{w_opt_i}^{w_i} p_i + w_opt_i ln v_i)`; average flow adds
/// `(1/n) sum_i ln((A0 v)_i)`.
pub fn reduced_lyapunov(
    rs: &ReducedState,
    w_opt: &WorkloadVector,
    profile: &PerformanceProfile,
    kind: WorkFlowKind,
) -> Result<ReducedLyapunov> {
    let n = rs.n();
    check_dim(n, w_opt.n())?;
    if rs.v.iter().any(|&x| !(x > 0.0)) {
        return Err(AsapError::Domain("reduced Lyapunov function needs v > 0".into()));
    }
    let log_term: f64 = (0..n).map(|i| w_opt.as_slice()[i] * rs.v[i].ln()).sum();
    let mut value = -(utility_gap(profile, &rs.workload, w_opt)? + log_term);
    let mut lower_bound = None;
    if kind == WorkFlowKind::AverageAppraisal {
        let a0 = rs.reference.matrix();
        let u = a0 * &rs.v;
        value += u.iter().map(|x| x.ln()).sum::<f64>() / n as f64;
        let a_min = a0.min();
        if a_min > 0.0 {
            lower_bound = Some(a_min.ln());
        }
    }
    Ok(ReducedLyapunov { value, lower_bound })
}

/// `p(w)^T (w - w_opt)`, the derivative of either reduced Lyapunov function
/// along its own flow.
pub fn reduced_lie_derivative(w: &WorkloadVector, w_opt: &WorkloadVector, profile: &PerformanceProfile) -> Result<f64> {
    check_dim(w.n(), w_opt.n())?;
    let p = eval_performance(profile, w.vector())?;
    Ok(p.dot(&(w.vector() - w_opt.vector())))
}

/// Pairs values with analytic derivatives and centered difference quotients.
pub fn lyapunov_samples(times: &[f64], values: &[f64], derivatives: &[f64]) -> Result<Vec<LyapunovSample>> {
    check_dim(times.len(), values.len())?;
    check_dim(times.len(), derivatives.len())?;
    let n = times.len();
    Ok((0..n)
        .map(|k| LyapunovSample {
            t: times[k],
            value: values[k],
            lie_derivative: derivatives[k],
            difference_quotient: (k > 0 && k + 1 < n)
                .then(|| (values[k + 1] - values[k - 1]) / (times[k + 1] - times[k - 1])),
        })
        .collect())
}

/// Indices `k` where `values[k+1] > values[k] + slack`.
pub fn monotonicity_violations(values: &[f64], slack: f64) -> Vec<usize> {
    values.windows(2).enumerate().filter(|(_, w)| w[1] > w[0] + slack).map(|(k, _)| k).collect()
}

/// The bound `max{(1/n) sum_k [a_ki(0) > 0], w_i(0)}` on each `w_i(t)` under
/// average-appraisal flow.
pub fn failure_bounds(a0: &AppraisalMatrix, w0: &WorkloadVector) -> Vec<f64> {
    let n = a0.n();
    (0..n)
        .map(|i| {
            let indegree = (0..n).filter(|&k| a0.get(k, i) > 0.0).count() as f64 / n as f64;
            indegree.max(w0.as_slice()[i])
        })
        .collect()
}

/// Members whose optimal workload exceeds the bound, certifying that the
/// average-appraisal flow never reaches `w_opt`.
pub fn failure_condition(a0: &AppraisalMatrix, w0: &WorkloadVector, w_opt: &WorkloadVector) -> BTreeSet<usize> {
    failure_bounds(a0, w0)
        .into_iter()
        .enumerate()
        .filter(|&(i, b)| w_opt.as_slice()[i] > b)
        .map(|(i, _)| i)
        .collect()
}

/// `sigma_2 / sigma_1` of the entrywise quotient `A / A0`.
pub fn rank_one_ratio_check(a: &AppraisalMatrix, a0: &AppraisalMatrix) -> Result<f64> {
    check_dim(a0.n(), a.n())?;
    if a0.matrix().iter().any(|&x| !(x > 0.0)) {
        return Err(AsapError::Precondition("rank-one check needs A0 > 0 entrywise".into()));
    }
    let q = a.matrix().component_div(a0.matrix());
    let mut sv: Vec<f64> = q.singular_values().iter().copied().collect();
    sv.sort_by(|x, y| y.total_cmp(x));
    Ok(match sv.as_slice() {
        [s1, s2, ..] if *s1 > 0.0 => s2 / s1,
        _ => 0.0,
    })
}

/// Largest `||v||_inf` over the samples (infinite if any entry is not finite).
pub fn max_v_norm(traj: &Trajectory<ReducedState>) -> f64 {
    traj.states
        .iter()
        .map(|s| if s.v.iter().all(|x| x.is_finite()) { s.v.amax() } else { f64::INFINITY })
        .fold(0.0, f64::max)
}

/// 1 iff every sampled norm is finite and below `v_cap` (when given).
pub fn boundedness_from_norms(norms: impl IntoIterator<Item = f64>, v_cap: Option<f64>) -> u8 {
    let cap = v_cap.unwrap_or(f64::INFINITY);
    u8::from(norms.into_iter().all(|x| x.is_finite() && x < cap))
}

pub fn boundedness_indicator(traj: &Trajectory<ReducedState>, v_cap: Option<f64>) -> u8 {
    boundedness_from_norms(
        traj.states.iter().map(|s| if s.v.iter().all(|x| x.is_finite()) { s.v.amax() } else { f64::INFINITY }),
        v_cap,
    )
}

/// Member-wise `max_t w_i(t)` over a sequence of workload vectors.
pub fn running_max(workloads: impl IntoIterator<Item = DVector<f64>>) -> Option<DVector<f64>> {
    workloads.into_iter().reduce(|m, w| m.zip_map(&w, f64::max))
}
