//! Optimal workloads, dominant left eigenvectors, equilibrium appraisal
//! matrices and equilibrium certification.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dynamics::WorkFlowKind;
use crate::error::{check_dim, AsapError, Result};
use crate::graph::{is_strongly_connected, pattern_of};
use crate::types::{eval_performance, AppraisalMatrix, PerformanceProfile, WorkloadVector};

pub const DEFAULT_SOLVER_TOLERANCE: f64 = 1e-12;
pub const DEFAULT_EIGEN_TOLERANCE: f64 = 1e-14;
pub const DEFAULT_EPSILON: f64 = 0.5;
const BRACKET_MARGIN: f64 = 1e-14;
const MAX_POWER_ITERATIONS: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimalPair {
    pub p_star: f64,
    pub w_opt: WorkloadVector,
}

fn matched_workloads(profile: &PerformanceProfile, w1: f64) -> Vec<f64> {
    let target = profile.member(0, w1);
    std::iter::once(w1).chain((1..profile.n()).map(|i| profile.inverse(i, target))).collect()
}

/// Unique workload at which all members perform equally, found by bisection
/// on the strictly increasing map `w1 -> w1 + sum_i p_i^-1(p_1(w1))`.
pub fn solve_optimal_workload(profile: &PerformanceProfile, tol: f64) -> Result<OptimalPair> {
    if !(tol > 0.0) {
        return Err(AsapError::Parameter(format!("solver tolerance must be positive, got {tol}")));
    }
    let n = profile.n();
    if n == 1 {
        return Ok(OptimalPair { p_star: profile.member(0, 1.0), w_opt: WorkloadVector::uniform(1) });
    }
    let excess = |w1: f64| matched_workloads(profile, w1).iter().sum::<f64>() - 1.0;
    let (mut lo, mut hi) = (BRACKET_MARGIN, 1.0 - BRACKET_MARGIN);
    let (g_lo, g_hi) = (excess(lo), excess(hi));
    if !(g_lo <= 0.0 && g_hi >= 0.0) {
        return Err(AsapError::Solver(format!(
            "optimal-workload bracket [{lo}, {hi}] does not contain a root (g = {g_lo}, {g_hi})"
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if excess(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let w1 = if excess(hi).abs() < excess(lo).abs() { hi } else { lo };
    let w = matched_workloads(profile, w1);
    let p_star = profile.member(0, w1);
    for (i, &wi) in w.iter().enumerate() {
        let pi = profile.member(i, wi);
        if !(wi > 0.0 && wi < 1.0) || !((pi - p_star).abs() < tol * p_star) {
            return Err(AsapError::Solver(format!("member {i} not matched: w = {wi}, p = {pi}, p* = {p_star}")));
        }
    }
    let w_opt = WorkloadVector::new(DVector::from_vec(w), 1e-9)
        .map_err(|e| AsapError::Solver(format!("optimal workload off the simplex: {e}")))?;
    Ok(OptimalPair { p_star, w_opt })
}

/// Normalized left Perron vector of an irreducible row-stochastic matrix by
/// power iteration from the uniform vector.
pub fn left_dominant_eigenvector(a: &AppraisalMatrix, tol: f64) -> Result<WorkloadVector> {
    let n = a.n();
    let m = a.matrix();
    let mut x = DVector::from_element(n, 1.0 / n as f64);
    for _ in 0..MAX_POWER_ITERATIONS {
        let mut y = m.tr_mul(&x);
        let s = y.sum();
        if !(s > 0.0) || !s.is_finite() {
            return Err(AsapError::Numeric("power iteration lost positivity".into()));
        }
        y /= s;
        let residual = (&y - &x).amax();
        x = y;
        if residual < tol {
            return Ok(WorkloadVector::from_vector_unchecked(x));
        }
    }
    Err(AsapError::Numeric(format!("power iteration did not reach {tol} in {MAX_POWER_ITERATIONS} iterations")))
}

/// Equilibrium appraisal matrix with the pattern of `a0` and left Perron
/// vector `w_opt`: `A* = diag(a_d) + (I - diag(a_d)) A0` with
/// `a_d = 1 - sigma (wbar / w_opt)`, `sigma = eps / max_i(wbar_i / w_opt_i)`.
pub fn construct_equilibrium_matrix(a0: &AppraisalMatrix, w_opt: &WorkloadVector, eps: f64) -> Result<AppraisalMatrix> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(AsapError::Parameter(format!("epsilon must lie in (0, 1), got {eps}")));
    }
    let n = a0.n();
    check_dim(n, w_opt.n())?;
    if !a0.has_positive_diagonal() {
        return Err(AsapError::Precondition("A0 needs a strictly positive diagonal".into()));
    }
    if !is_strongly_connected(&pattern_of(a0, 0.0)) {
        return Err(AsapError::Precondition("A0 must be irreducible".into()));
    }
    if w_opt.as_slice().iter().any(|&x| !(x > 0.0)) {
        return Err(AsapError::Precondition("w_opt must be interior".into()));
    }
    let wbar = left_dominant_eigenvector(a0, DEFAULT_EIGEN_TOLERANCE)?;
    let ratio = wbar.vector().component_div(w_opt.vector());
    let sigma = eps / ratio.max();
    let m0 = a0.matrix();
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n {
        let d = 1.0 - sigma * ratio[i];
        for j in 0..n {
            a[(i, j)] = (1.0 - d) * m0[(i, j)];
        }
        a[(i, i)] += d;
    }
    AppraisalMatrix::new(a, 1e-12)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumReport {
    /// `|| diag(a_d)(I - A) p(w) ||_inf`
    pub appraisal_residual: f64,
    /// `|| (A - I)^T w ||_inf` (donor) or `|| -w + A^T 1 / n ||_inf` (average).
    pub workload_residual: f64,
    pub tolerance: f64,
    pub passed: bool,
}

pub fn check_equilibrium(
    a: &AppraisalMatrix,
    w: &WorkloadVector,
    profile: &PerformanceProfile,
    kind: WorkFlowKind,
    tol: f64,
) -> Result<EquilibriumReport> {
    let n = a.n();
    check_dim(n, w.n())?;
    let m = a.matrix();
    let p = eval_performance(profile, w.vector())?;
    let ap = m * &p;
    let appraisal_residual = (0..n).map(|i| (m[(i, i)] * (p[i] - ap[i])).abs()).fold(0.0, f64::max);
    let flow = match kind {
        WorkFlowKind::DonorControlled => m.tr_mul(w.vector()) - w.vector(),
        WorkFlowKind::AverageAppraisal => {
            m.tr_mul(&DVector::from_element(n, 1.0)) / n as f64 - w.vector()
        }
    };
    let workload_residual = flow.amax();
    Ok(EquilibriumReport {
        appraisal_residual,
        workload_residual,
        tolerance: tol,
        passed: appraisal_residual < tol && workload_residual < tol,
    })
}
