//! Right-hand sides of the coupled appraisal/workload dynamics.
//!
//! Appraisals follow replicator-like dynamics
//! `da_ij/dt = a_ij (p_j(w_j) - sum_k a_ik p_k(w_k))` and workloads follow
//! one of two work-flow laws. The reduced model tracks an `n`-vector `v`
//! with `A(t) = diag(A0 v)^{-1} A0 diag(v)`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, AsapError, Result};
use crate::types::{eval_performance, AppraisalMatrix, PerformanceProfile, TeamState, WorkloadVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorkFlowKind {
    /// `F(A, w) = -w + A^T w`: member j hands work to i at rate `a_ji w_j`.
    DonorControlled,
    /// `F(A, w) = -w + (1/n) A^T 1`: each member tracks their average appraisal.
    AverageAppraisal,
}

/// `dA/dt` for performance vector `p`.
pub fn rhs_appraisal(a: &DMatrix<f64>, p: &DVector<f64>) -> Result<DMatrix<f64>> {
    check_dim(a.nrows(), p.len())?;
    check_dim(a.ncols(), p.len())?;
    let avg = a * p;
    Ok(DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] * (p[j] - avg[i])))
}

/// Work-flow vector field `F(A, w)`; both laws keep `1^T F = 0` for
/// row-stochastic `A`.
pub fn rhs_workload(a: &DMatrix<f64>, w: &DVector<f64>, kind: WorkFlowKind) -> Result<DVector<f64>> {
    check_dim(a.nrows(), w.len())?;
    check_dim(a.ncols(), w.len())?;
    let n = w.len();
    Ok(match kind {
        WorkFlowKind::DonorControlled => a.tr_mul(w) - w,
        WorkFlowKind::AverageAppraisal => {
            let col_avg = DVector::from_iterator(n, a.column_iter().map(|c| c.sum() / n as f64));
            col_avg - w
        }
    })
}

/// Stacked derivative `(dA/dt, dw/dt)` of the full model.
pub fn rhs_full(
    state: &TeamState,
    profile: &PerformanceProfile,
    kind: WorkFlowKind,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let a = state.appraisal.matrix();
    let w = state.workload.vector();
    let p = eval_performance(profile, w)?;
    Ok((rhs_appraisal(a, &p)?, rhs_workload(a, w, kind)?))
}

/// Work flow with `A` row-normalized and the average-appraisal inflow scaled
/// by `sum w`, so that `1^T F = 0` for every `A` and `w`.
fn conservative_workload(a_hat: &DMatrix<f64>, w: &DVector<f64>, kind: WorkFlowKind) -> DVector<f64> {
    let n = w.len();
    match kind {
        WorkFlowKind::DonorControlled => a_hat.tr_mul(w) - w,
        WorkFlowKind::AverageAppraisal => {
            let scale = w.sum() / n as f64;
            DVector::from_iterator(n, a_hat.column_iter().map(|c| c.sum() * scale)) - w
        }
    }
}

/// `(dA/dt, dw/dt)` in a form for which the row sums of `A` and `sum w` are
/// exact first integrals. Agrees with [`rhs_appraisal`] and [`rhs_workload`]
/// whenever `A` is row-stochastic and `sum w = 1`; integrators use it so that
/// round-off never excites the directions transverse to the simplex.
pub fn rhs_full_conservative(
    a: &DMatrix<f64>,
    w: &DVector<f64>,
    p: &DVector<f64>,
    kind: WorkFlowKind,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let n = w.len();
    check_dim(a.nrows(), n)?;
    check_dim(a.ncols(), n)?;
    check_dim(p.len(), n)?;
    let rows: Vec<f64> = a.row_iter().map(|r| r.sum()).collect();
    let ap = a * p;
    let da = DMatrix::from_fn(n, n, |i, j| a[(i, j)] * (p[j] - ap[i] / rows[i]));
    let a_hat = DMatrix::from_fn(n, n, |i, j| a[(i, j)] / rows[i]);
    Ok((da, conservative_workload(&a_hat, w, kind)))
}

/// Reconstruction map `A(v) = diag(A0 v)^{-1} A0 diag(v)`.
pub fn reconstruct_appraisal(v: &DVector<f64>, a0: &AppraisalMatrix) -> Result<AppraisalMatrix> {
    let m = a0.matrix();
    check_dim(m.nrows(), v.len())?;
    if let Some((i, &x)) = v.iter().enumerate().find(|(_, &x)| !(x > 0.0)) {
        return Err(AsapError::Domain(format!("v_{i} = {x} must be positive")));
    }
    let row = m * v;
    if let Some(i) = row.iter().position(|&x| x == 0.0) {
        return Err(AsapError::SingularReconstruction { row: i });
    }
    Ok(AppraisalMatrix::from_matrix_unchecked(DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| {
        m[(i, j)] * v[j] / row[i]
    })))
}

/// State of the reduced model. The reference matrix `A0` is shared and never
/// mutated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReducedState {
    pub v: DVector<f64>,
    pub workload: WorkloadVector,
    pub reference: Arc<AppraisalMatrix>,
    pub time: f64,
}

impl ReducedState {
    /// Initial reduced state `(v, w) = (1, w0)` anchored at `A0`.
    pub fn initial(a0: Arc<AppraisalMatrix>, w0: WorkloadVector) -> Result<Self> {
        check_dim(a0.n(), w0.n())?;
        if !a0.has_positive_diagonal() {
            return Err(AsapError::Precondition("A0 must have a positive diagonal".into()));
        }
        Ok(Self { v: DVector::from_element(w0.n(), 1.0), workload: w0, reference: a0, time: 0.0 })
    }

    pub fn n(&self) -> usize {
        self.v.len()
    }

    /// Appraisal matrix represented by this state.
    pub fn appraisal(&self) -> Result<AppraisalMatrix> {
        reconstruct_appraisal(&self.v, &self.reference)
    }
}

/// `(dv/dt, dw/dt)` of the reduced model.
pub fn rhs_reduced(
    rs: &ReducedState,
    profile: &PerformanceProfile,
    kind: WorkFlowKind,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let a = rs.appraisal()?;
    reduced_rhs_with(&rs.v, rs.workload.vector(), a.matrix(), profile, kind)
}

pub(crate) fn reduced_rhs_with(
    v: &DVector<f64>,
    w: &DVector<f64>,
    a: &DMatrix<f64>,
    profile: &PerformanceProfile,
    kind: WorkFlowKind,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let p = eval_performance(profile, w)?;
    let mean = w.dot(&(a * &p));
    let dv = v.component_mul(&p.add_scalar(-mean));
    Ok((dv, conservative_workload(a, w, kind)))
}

/// Two-member donor-controlled system written in `(a11, w1)` with the
/// conserved cycle constant `c = a11 a22 / ((1 - a11)(1 - a22))` passed in.
pub fn rhs_two_node(a11: f64, w1: f64, c: f64, profile: &PerformanceProfile) -> Result<(f64, f64)> {
    check_dim(2, profile.n())?;
    if !(a11 > 0.0 && a11 < 1.0) || !(w1 > 0.0 && w1 < 1.0) || !(c > 0.0 && c.is_finite()) {
        return Err(AsapError::Domain(format!(
            "two-node state needs a11, w1 in (0, 1) and c > 0, got ({a11}, {w1}, {c})"
        )));
    }
    let gap = profile.member(0, w1) - profile.member(1, 1.0 - w1);
    let da11 = a11 * (1.0 - a11) * gap;
    // a21 = 1 - a22 = a11 / (c + a11 (1 - c)) once a22 is eliminated through c.
    let denom = c + a11 * (1.0 - c);
    let dw1 = -w1 + (a11 * (1.0 - a11) * (c - 1.0) * w1 + a11) / denom;
    Ok((da11, dw1))
}

/// Self-appraisal `a22` consistent with `(a11, c)`.
pub fn two_node_a22(a11: f64, c: f64) -> f64 {
    let q = c * (1.0 - a11) / a11;
    q / (1.0 + q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::PowerLaw;
    use approx::assert_relative_eq;

    #[test]
    fn conservative_form_matches_on_simplex_and_conserves_off_it() {
        let profile = case_study();
        let a = DMatrix::from_row_slice(2, 2, &[0.8, 0.2, 0.3, 0.7]);
        let w = DVector::from_vec(vec![0.4, 0.6]);
        let p = eval_performance(&profile, &w).unwrap();
        for kind in [WorkFlowKind::DonorControlled, WorkFlowKind::AverageAppraisal] {
            let (da, dw) = rhs_full_conservative(&a, &w, &p, kind).unwrap();
            assert!((da - rhs_appraisal(&a, &p).unwrap()).amax() < 1e-15);
            assert!((dw - rhs_workload(&a, &w, kind).unwrap()).amax() < 1e-15);
        }
        let off = DMatrix::from_row_slice(2, 2, &[0.9, 0.2, 0.3, 0.6]);
        let w_off = DVector::from_vec(vec![0.45, 0.6]);
        let p = eval_performance(&profile, &w_off).unwrap();
        for kind in [WorkFlowKind::DonorControlled, WorkFlowKind::AverageAppraisal] {
            let (da, dw) = rhs_full_conservative(&off, &w_off, &p, kind).unwrap();
            assert!(da.row_iter().all(|r| r.sum().abs() < 1e-15));
            assert!(dw.sum().abs() < 1e-15);
        }
    }

    fn case_study() -> PerformanceProfile {
        PowerLaw::new(vec![0.45, 0.55], vec![0.9, 0.8]).unwrap().into()
    }

    #[test]
    fn equal_performance_freezes_appraisals() {
        let a = DMatrix::from_row_slice(3, 3, &[0.5, 0.3, 0.2, 0.1, 0.8, 0.1, 0.0, 0.4, 0.6]);
        let p = DVector::from_element(3, 1.7);
        let d = rhs_appraisal(&a, &p).unwrap();
        assert!(d.iter().all(|&x| x.abs() < 1e-15));
    }

    #[test]
    fn zero_appraisals_stay_zero() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.3, 0.7]);
        let p = DVector::from_vec(vec![1.0, 3.0]);
        assert_eq!(rhs_appraisal(&a, &p).unwrap()[(0, 1)], 0.0);
    }

    #[test]
    fn donor_flow_hand_example() {
        let a = DMatrix::from_row_slice(2, 2, &[0.8, 0.2, 0.3, 0.7]);
        let w = DVector::from_vec(vec![0.5, 0.5]);
        let f = rhs_workload(&a, &w, WorkFlowKind::DonorControlled).unwrap();
        assert_relative_eq!(f[0], 0.05, epsilon = 1e-15);
        assert_relative_eq!(f[1], -0.05, epsilon = 1e-15);
    }

    #[test]
    fn average_flow_fixed_for_doubly_stochastic() {
        let a = DMatrix::from_row_slice(3, 3, &[0.5, 0.25, 0.25, 0.25, 0.5, 0.25, 0.25, 0.25, 0.5]);
        let w = DVector::from_element(3, 1.0 / 3.0);
        let f = rhs_workload(&a, &w, WorkFlowKind::AverageAppraisal).unwrap();
        assert!(f.amax() < 1e-16);
    }

    #[test]
    fn donor_flow_fixed_at_left_eigenvector() {
        // Left eigenvector of [[5/6, 1/6], [1/4, 3/4]] is (0.6, 0.4).
        let a = DMatrix::from_row_slice(2, 2, &[5.0 / 6.0, 1.0 / 6.0, 0.25, 0.75]);
        let w = DVector::from_vec(vec![0.6, 0.4]);
        assert!(rhs_workload(&a, &w, WorkFlowKind::DonorControlled).unwrap().amax() < 1e-15);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let a = DMatrix::identity(3, 3);
        let p = DVector::from_element(2, 1.0);
        assert!(matches!(rhs_appraisal(&a, &p), Err(AsapError::DimensionMismatch { .. })));
        assert!(rhs_workload(&a, &p, WorkFlowKind::DonorControlled).is_err());
    }

    #[test]
    fn uniform_team_is_stationary() {
        let n = 4;
        let profile: PerformanceProfile = PowerLaw::common(vec![0.25; n], 0.5).unwrap().into();
        let state = TeamState::new(
            AppraisalMatrix::new(DMatrix::from_element(n, n, 0.25), 1e-12).unwrap(),
            WorkloadVector::uniform(n),
        )
        .unwrap();
        for kind in [WorkFlowKind::DonorControlled, WorkFlowKind::AverageAppraisal] {
            let (da, dw) = rhs_full(&state, &profile, kind).unwrap();
            assert!(da.amax() < 1e-15 && dw.amax() < 1e-15);
        }
    }

    #[test]
    fn reconstruction_examples() {
        let a0 = AppraisalMatrix::from_rows(&[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        let a = reconstruct_appraisal(&DVector::from_vec(vec![1.0, 2.0]), &a0).unwrap();
        for i in 0..2 {
            assert_relative_eq!(a.get(i, 0), 1.0 / 3.0, epsilon = 1e-15);
            assert_relative_eq!(a.get(i, 1), 2.0 / 3.0, epsilon = 1e-15);
        }
        let ones = reconstruct_appraisal(&DVector::from_element(2, 1.0), &a0).unwrap();
        assert_eq!(ones, a0);
        let scaled = reconstruct_appraisal(&DVector::from_element(2, 7.5), &a0).unwrap();
        assert!((scaled.matrix() - a0.matrix()).amax() < 1e-15);
        assert!(reconstruct_appraisal(&DVector::from_vec(vec![1.0, 0.0]), &a0).is_err());
    }

    #[test]
    fn reduced_rhs_at_start_matches_full_workload() {
        let a0 = Arc::new(AppraisalMatrix::from_rows(&[vec![0.6, 0.4], vec![0.3, 0.7]]).unwrap());
        let w0 = WorkloadVector::from_slice(&[0.3, 0.7]).unwrap();
        let rs = ReducedState::initial(a0.clone(), w0.clone()).unwrap();
        for kind in [WorkFlowKind::DonorControlled, WorkFlowKind::AverageAppraisal] {
            let (_, dw) = rhs_reduced(&rs, &case_study(), kind).unwrap();
            let full = rhs_workload(a0.matrix(), w0.vector(), kind).unwrap();
            assert!((dw - full).amax() < 1e-16);
        }
    }

    #[test]
    fn reduced_rhs_vanishes_at_equilibrium() {
        // Equal skills and uniform split: every performance is equal and the
        // doubly stochastic A0 is fixed by both flows.
        let profile: PerformanceProfile = PowerLaw::common(vec![0.5, 0.5], 0.6).unwrap().into();
        let a0 = Arc::new(AppraisalMatrix::from_rows(&[vec![0.7, 0.3], vec![0.3, 0.7]]).unwrap());
        let rs = ReducedState::initial(a0, WorkloadVector::uniform(2)).unwrap();
        let (dv, dw) = rhs_reduced(&rs, &profile, WorkFlowKind::DonorControlled).unwrap();
        assert!(dv.amax() < 1e-15 && dw.amax() < 1e-15);
    }

    #[test]
    fn two_node_special_cases() {
        let profile = case_study();
        // c = 1: dw1 = -w1 + a11.
        let (_, dw) = rhs_two_node(0.35, 0.6, 1.0, &profile).unwrap();
        assert_relative_eq!(dw, -0.6 + 0.35, epsilon = 1e-15);
        assert!(rhs_two_node(1.0, 0.5, 1.0, &profile).is_err());
        assert!(rhs_two_node(0.5, 0.5, 0.0, &profile).is_err());
    }

    #[test]
    fn two_node_matches_embedded_full_system() {
        let profile = case_study();
        for &(a11, a22, w1) in &[(0.6, 0.7, 0.5), (0.2, 0.9, 0.3), (0.85, 0.4, 0.7)] {
            let c = a11 * a22 / ((1.0 - a11) * (1.0 - a22));
            assert_relative_eq!(two_node_a22(a11, c), a22, epsilon = 1e-14);
            let state = TeamState::new(
                AppraisalMatrix::from_rows(&[vec![a11, 1.0 - a11], vec![1.0 - a22, a22]]).unwrap(),
                WorkloadVector::from_slice(&[w1, 1.0 - w1]).unwrap(),
            )
            .unwrap();
            let (da, dw) = rhs_full(&state, &profile, WorkFlowKind::DonorControlled).unwrap();
            let (da11, dw1) = rhs_two_node(a11, w1, c, &profile).unwrap();
            assert_relative_eq!(da11, da[(0, 0)], epsilon = 1e-14);
            assert_relative_eq!(dw1, dw[0], epsilon = 1e-14);
        }
    }
}
