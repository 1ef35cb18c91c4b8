//! WebAssembly bindings for the browser demo. Each export wraps a plain Rust
//! function returning flat `f64` buffers so the page can plot them directly.
use asap_core::equilibrium::{solve_optimal_workload, DEFAULT_SOLVER_TOLERANCE};
use asap_core::experiments::{run_monte_carlo, MonteCarloConfig};
use asap_core::integrator::{integrate_full, DiagnosticsRequest};
use asap_core::{AppraisalMatrix, IntegratorOptions, PerformanceProfile, PowerLaw, TeamState, WorkFlowKind, WorkloadVector};
use nalgebra::DMatrix;
use wasm_bindgen::prelude::*;

fn profile(skill: &[f64], exponent: &[f64]) -> Result<PerformanceProfile, String> {
    Ok(PowerLaw::new(skill.to_vec(), exponent.to_vec()).map_err(|e| e.to_string())?.into())
}

/// `[p*, w_opt_1, .., w_opt_n]`.
pub fn optimum(skill: &[f64], exponent: &[f64]) -> Result<Vec<f64>, String> {
    let pair = solve_optimal_workload(&profile(skill, exponent)?, DEFAULT_SOLVER_TOLERANCE).map_err(|e| e.to_string())?;
    Ok(std::iter::once(pair.p_star).chain(pair.w_opt.as_slice().iter().copied()).collect())
}

/// Integrates the full model from a row-major appraisal matrix. Returns one
/// record `[t, w_1..w_n, a_11..a_nn, spread]` per unit of time.
pub fn trajectory(
    appraisal: &[f64],
    workload: &[f64],
    skill: &[f64],
    exponent: &[f64],
    average_flow: bool,
    t_end: f64,
) -> Result<Vec<f64>, String> {
    let n = workload.len();
    if appraisal.len() != n * n {
        return Err(format!("appraisal needs {} entries, got {}", n * n, appraisal.len()));
    }
    let a = AppraisalMatrix::new(DMatrix::from_row_slice(n, n, appraisal), 1e-9).map_err(|e| e.to_string())?;
    let w = WorkloadVector::from_slice(workload).map_err(|e| e.to_string())?;
    let state = TeamState::new(a, w).map_err(|e| e.to_string())?;
    let kind = if average_flow { WorkFlowKind::AverageAppraisal } else { WorkFlowKind::DonorControlled };
    let opts = IntegratorOptions::default().with_t_end(t_end);
    let traj = integrate_full(&state, &profile(skill, exponent)?, kind, &opts, &DiagnosticsRequest::default())
        .map_err(|e| e.to_string())?;
    let mut out = Vec::with_capacity(traj.len() * (2 + n + n * n));
    for (k, s) in traj.states.iter().enumerate() {
        out.push(traj.times[k]);
        out.extend(s.workload.as_slice());
        for i in 0..n {
            out.extend(s.appraisal.matrix().row(i).iter());
        }
        out.push(traj.diagnostics.spread[k]);
    }
    Ok(out)
}

/// Monte Carlo boundedness estimate on random teams:
/// `[p_hat, bounded, unbounded, indeterminate, max |v|]`.
pub fn boundedness(n: usize, edge_probability: f64, samples: u64, seed: u64, horizon: f64) -> Result<Vec<f64>, String> {
    let config = MonteCarloConfig {
        n,
        edge_probability,
        sample_count: Some(samples),
        base_seed: seed,
        horizon,
        ..Default::default()
    };
    let report = run_monte_carlo(&config).map_err(|e| e.to_string())?;
    let largest = report.records.iter().filter_map(|r| r.max_v_norm).fold(0.0, f64::max);
    Ok(vec![
        report.p_hat.unwrap_or(f64::NAN),
        report.bounded as f64,
        report.unbounded as f64,
        report.indeterminate as f64,
        largest,
    ])
}

#[wasm_bindgen(js_name = optimalWorkload)]
pub fn optimal_workload(skill: &[f64], exponent: &[f64]) -> Result<Vec<f64>, JsError> {
    optimum(skill, exponent).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = simulateTeam)]
pub fn simulate_team(
    appraisal: &[f64],
    workload: &[f64],
    skill: &[f64],
    exponent: &[f64],
    average_flow: bool,
    t_end: f64,
) -> Result<Vec<f64>, JsError> {
    trajectory(appraisal, workload, skill, exponent, average_flow, t_end).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = estimateBoundedness)]
pub fn estimate_boundedness(
    n: usize,
    edge_probability: f64,
    samples: u32,
    seed: u32,
    horizon: f64,
) -> Result<Vec<f64>, JsError> {
    boundedness(n, edge_probability, samples.into(), seed.into(), horizon).map_err(|e| JsError::new(&e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn optimum_of_the_two_member_case() {
        let r = optimum(&[0.3, 0.7], &[0.5, 0.8]).unwrap();
        assert!((r[0] - 1.0).abs() < 1e-10);
        assert!((r[1] - 0.3).abs() < 1e-10 && (r[2] - 0.7).abs() < 1e-10);
    }

    #[test]
    fn trajectory_records_have_the_documented_layout() {
        let out = trajectory(&[0.7, 0.3, 0.4, 0.6], &[0.2, 0.8], &[0.3, 0.7], &[0.5, 0.8], false, 100.0).unwrap();
        let width = 2 + 2 + 4;
        assert_eq!(out.len() % width, 0);
        let last = &out[out.len() - width..];
        assert_eq!(last[0], 100.0);
        assert!((last[1] - 0.3).abs() < 1e-6 && (last[2] - 0.7).abs() < 1e-6);
        assert!(last[7] < 1e-6);
    }

    #[test]
    fn bad_inputs_are_reported() {
        assert!(trajectory(&[1.0], &[0.5, 0.5], &[0.5, 0.5], &[0.5, 0.5], false, 1.0).is_err());
        assert!(optimum(&[0.5], &[1.5]).is_err());
    }

    #[test]
    fn boundedness_summary_counts_every_sample() {
        let r = boundedness(4, 0.5, 6, 1, 30.0).unwrap();
        assert_eq!(r[1] + r[2] + r[3], 6.0);
    }
}
