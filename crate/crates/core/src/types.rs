//! Domain value types shared by every other module: performance profiles,
//! appraisal matrices, workload vectors and team states, plus the collective
//! team-performance metrics and the report-only state validator.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, AsapError, Result};
use crate::quadrature;

/// Default tolerance for row-sum and simplex drift.
pub const DEFAULT_INVARIANT_TOLERANCE: f64 = 1e-9;

/// Argument used to probe the blow-up of `p_i` at the origin.
const BLOWUP_PROBE: f64 = 1e-12;
/// Any admissible profile must exceed this value at [`BLOWUP_PROBE`].
const BLOWUP_BOUND: f64 = 1e3;

/// Per-member power-law skill model `p_i(x) = (s_i / x)^{gamma_i}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerLaw {
    skill: Vec<f64>,
    exponent: Vec<f64>,
}

impl PowerLaw {
    pub fn new(skill: Vec<f64>, exponent: Vec<f64>) -> Result<Self> {
        check_dim(skill.len(), exponent.len())?;
        if skill.is_empty() {
            return Err(AsapError::Parameter("profile has no members".into()));
        }
        for (i, &s) in skill.iter().enumerate() {
            if !(s > 0.0 && s.is_finite()) {
                return Err(AsapError::Parameter(format!("skill[{i}] = {s} must be positive")));
            }
        }
        for (i, &g) in exponent.iter().enumerate() {
            if !(g > 0.0 && g < 1.0) {
                return Err(AsapError::Parameter(format!(
                    "exponent[{i}] = {g} must lie strictly inside (0, 1)"
                )));
            }
        }
        Ok(Self { skill, exponent })
    }

    /// All members share the exponent `gamma`.
    pub fn common(skill: Vec<f64>, gamma: f64) -> Result<Self> {
        let n = skill.len();
        Self::new(skill, vec![gamma; n])
    }

    pub fn skill(&self) -> &[f64] {
        &self.skill
    }

    pub fn exponent(&self) -> &[f64] {
        &self.exponent
    }

    /// True when every member has the same exponent.
    pub fn has_common_exponent(&self) -> bool {
        self.exponent.windows(2).all(|w| w[0] == w[1])
    }
}

/// `f(member, x)` for a user supplied performance function or one of its
/// companions.
pub type MemberFn = Arc<dyn Fn(usize, f64) -> f64 + Send + Sync>;

/// User supplied performance functions.
///
/// `antiderivative(i, x)` must return `\int_0^x p_i`, and `inverse(i, y)` the
/// unique `x` with `p_i(x) = y`. Both are optional; the inverse falls back to
/// bisection and the utility integral to adaptive quadrature.
#[derive(Clone)]
pub struct CustomProfile {
    n: usize,
    performance: MemberFn,
    antiderivative: Option<MemberFn>,
    inverse: Option<MemberFn>,
}

impl fmt::Debug for CustomProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomProfile")
            .field("n", &self.n)
            .field("antiderivative", &self.antiderivative.is_some())
            .field("inverse", &self.inverse.is_some())
            .finish()
    }
}

impl CustomProfile {
    pub fn new(n: usize, performance: MemberFn) -> Self {
        Self { n, performance, antiderivative: None, inverse: None }
    }

    pub fn with_antiderivative(mut self, f: MemberFn) -> Self {
        self.antiderivative = Some(f);
        self
    }

    pub fn with_inverse(mut self, f: MemberFn) -> Self {
        self.inverse = Some(f);
        self
    }
}

/// Skill model of a team: one strictly decreasing performance function per
/// member.
#[derive(Debug, Clone)]
pub enum PerformanceProfile {
    PowerLaw(PowerLaw),
    Custom(CustomProfile),
}

impl From<PowerLaw> for PerformanceProfile {
    fn from(p: PowerLaw) -> Self {
        Self::PowerLaw(p)
    }
}

impl PerformanceProfile {
    /// Validates a custom profile against the admissibility conditions
    /// (strictly decreasing on a sample grid, blow-up at the origin).
    pub fn custom(profile: CustomProfile) -> Result<Self> {
        let out = Self::Custom(profile);
        out.check_admissible()?;
        Ok(out)
    }

    pub fn n(&self) -> usize {
        match self {
            Self::PowerLaw(p) => p.skill.len(),
            Self::Custom(c) => c.n,
        }
    }

    /// `p_i(x)` without domain checks.
    #[inline]
    pub fn member(&self, i: usize, x: f64) -> f64 {
        match self {
            Self::PowerLaw(p) => (p.skill[i] / x).powf(p.exponent[i]),
            Self::Custom(c) => (c.performance)(i, x),
        }
    }

    /// `\int_0^x p_i(y) dy`, when a closed form is available.
    pub fn antiderivative(&self, i: usize, x: f64) -> Option<f64> {
        match self {
            Self::PowerLaw(p) => {
                let g = p.exponent[i];
                Some(p.skill[i].powf(g) * x.powf(1.0 - g) / (1.0 - g))
            }
            Self::Custom(c) => c.antiderivative.as_ref().map(|f| f(i, x)),
        }
    }

    /// `\int_a^b p_i(y) dy` for `a, b > 0`: closed form when available,
    /// adaptive quadrature otherwise.
    pub fn integral_between(&self, i: usize, a: f64, b: f64) -> Result<f64> {
        if !(a > 0.0 && b > 0.0) {
            return Err(AsapError::Domain(format!("integration bounds must be positive, got [{a}, {b}]")));
        }
        if let (Some(fa), Some(fb)) = (self.antiderivative(i, a), self.antiderivative(i, b)) {
            return Ok(fb - fa);
        }
        quadrature::adaptive_simpson(|x| self.member(i, x), a, b, 1e-12)
    }

    /// `p_i^{-1}(y)`. Closed form for the power law; bisection on `(0, 1]`
    /// for custom profiles without an explicit inverse (clamped to 1 when `y`
    /// lies below `p_i(1)`).
    pub fn inverse(&self, i: usize, y: f64) -> f64 {
        match self {
            Self::PowerLaw(p) => p.skill[i] * y.powf(-1.0 / p.exponent[i]),
            Self::Custom(c) => match &c.inverse {
                Some(f) => f(i, y),
                None => {
                    if self.member(i, 1.0) >= y {
                        return 1.0;
                    }
                    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
                    for _ in 0..200 {
                        let mid = 0.5 * (lo + hi);
                        if mid <= lo || mid >= hi {
                            break;
                        }
                        if self.member(i, mid) > y {
                            lo = mid;
                        } else {
                            hi = mid;
                        }
                    }
                    0.5 * (lo + hi)
                }
            },
        }
    }

    /// Checks the admissibility conditions by sampling.
    pub fn check_admissible(&self) -> Result<()> {
        const GRID: usize = 64;
        for i in 0..self.n() {
            let mut prev = f64::INFINITY;
            for k in 1..=GRID {
                let x = k as f64 / GRID as f64;
                let v = self.member(i, x);
                if !v.is_finite() || v < 0.0 {
                    return Err(AsapError::Parameter(format!("p_{i}({x}) = {v} is not a finite nonnegative value")));
                }
                if v >= prev {
                    return Err(AsapError::Parameter(format!("p_{i} is not strictly decreasing near x = {x}")));
                }
                prev = v;
            }
            let probe = self.member(i, BLOWUP_PROBE);
            if !(probe > BLOWUP_BOUND) {
                return Err(AsapError::Parameter(format!(
                    "p_{i} does not blow up at the origin: p({BLOWUP_PROBE:e}) = {probe}"
                )));
            }
        }
        Ok(())
    }
}

/// Evaluates the vector of individual performances `p(w)`.
pub fn eval_performance(profile: &PerformanceProfile, w: &DVector<f64>) -> Result<DVector<f64>> {
    check_dim(profile.n(), w.len())?;
    if let Some((i, &x)) = w.iter().enumerate().find(|(_, &x)| !(x > 0.0)) {
        return Err(AsapError::Domain(format!("workload w_{i} = {x} must be positive")));
    }
    Ok(DVector::from_iterator(w.len(), w.iter().enumerate().map(|(i, &x)| profile.member(i, x))))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TeamMetric {
    /// Total utility, `sum_i \int_0^{w_i} p_i`.
    Total,
    /// Weakest-link performance, `min_i p_i(w_i)`.
    Min,
    /// Workload-weighted average performance, `sum_i w_i p_i(w_i)`.
    Avg,
}

/// Collective team performance for the chosen metric.
pub fn team_performance(profile: &PerformanceProfile, w: &DVector<f64>, metric: TeamMetric) -> Result<f64> {
    let p = eval_performance(profile, w)?;
    match metric {
        TeamMetric::Total => (0..w.len())
            .map(|i| profile.antiderivative(i, w[i]).ok_or(AsapError::UnsupportedMetric("Total")))
            .sum(),
        TeamMetric::Min => Ok(p.min()),
        TeamMetric::Avg => Ok(w.dot(&p)),
    }
}

/// Nonnegative row-stochastic appraisal matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppraisalMatrix(DMatrix<f64>);

impl AppraisalMatrix {
    /// Validates squareness, nonnegativity and unit row sums within `tol`.
    pub fn new(m: DMatrix<f64>, tol: f64) -> Result<Self> {
        if !m.is_square() {
            return Err(AsapError::DimensionMismatch { expected: m.nrows(), found: m.ncols() });
        }
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                let a = m[(i, j)];
                if !(a >= 0.0 && a.is_finite()) {
                    return Err(AsapError::Domain(format!(
                        "a_{{{},{}}} = {a} must be finite and nonnegative",
                        i + 1,
                        j + 1
                    )));
                }
            }
        }
        for (i, row) in m.row_iter().enumerate() {
            let s = row.sum();
            if (s - 1.0).abs() > tol {
                return Err(AsapError::Domain(format!("row {} sums to {s}, not 1", i + 1)));
            }
        }
        Ok(Self(m))
    }

    /// Row-major construction with the default tolerance.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        for r in rows {
            check_dim(n, r.len())?;
        }
        let m = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
        Self::new(m, DEFAULT_INVARIANT_TOLERANCE)
    }

    /// Wraps a matrix without checks; used for integrated states whose
    /// invariants are monitored separately.
    pub fn from_matrix_unchecked(m: DMatrix<f64>) -> Self {
        Self(m)
    }

    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn diagonal(&self) -> DVector<f64> {
        self.0.diagonal()
    }

    pub fn has_positive_diagonal(&self) -> bool {
        self.0.diagonal().iter().all(|&d| d > 0.0)
    }
}

/// Workload split over the open simplex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadVector(DVector<f64>);

impl WorkloadVector {
    pub fn new(w: DVector<f64>, tol: f64) -> Result<Self> {
        if let Some((i, &x)) = w.iter().enumerate().find(|(_, &x)| !(x > 0.0 && x < 1.0 + tol)) {
            return Err(AsapError::Domain(format!("w_{} = {x} is not inside (0, 1)", i + 1)));
        }
        let s = w.sum();
        if (s - 1.0).abs() > tol {
            return Err(AsapError::Domain(format!("workload sums to {s}, not 1")));
        }
        Ok(Self(w))
    }

    pub fn from_slice(w: &[f64]) -> Result<Self> {
        Self::new(DVector::from_column_slice(w), DEFAULT_INVARIANT_TOLERANCE)
    }

    /// Uniform split `1/n`.
    pub fn uniform(n: usize) -> Self {
        Self(DVector::from_element(n, 1.0 / n as f64))
    }

    pub fn from_vector_unchecked(w: DVector<f64>) -> Self {
        Self(w)
    }

    pub fn n(&self) -> usize {
        self.0.len()
    }

    pub fn vector(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn into_vector(self) -> DVector<f64> {
        self.0
    }

    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice()
    }
}

/// Joint appraisal/workload state at model time `time`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeamState {
    pub appraisal: AppraisalMatrix,
    pub workload: WorkloadVector,
    pub time: f64,
}

impl TeamState {
    pub fn new(appraisal: AppraisalMatrix, workload: WorkloadVector) -> Result<Self> {
        check_dim(appraisal.n(), workload.n())?;
        Ok(Self { appraisal, workload, time: 0.0 })
    }

    pub fn n(&self) -> usize {
        self.workload.n()
    }
}

/// Directed zero/positive pattern of an appraisal matrix, diagonal included.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SparsityPattern {
    n: usize,
    present: Vec<bool>,
}

impl SparsityPattern {
    pub fn empty(n: usize) -> Self {
        Self { n, present: vec![false; n * n] }
    }

    /// Pattern with the full diagonal and the given off-diagonal edges
    /// (0-based).
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Self {
        let mut p = Self::empty(n);
        for i in 0..n {
            p.insert(i, i);
        }
        for &(i, j) in edges {
            p.insert(i, j);
        }
        p
    }

    pub fn insert(&mut self, i: usize, j: usize) {
        self.present[i * self.n + j] = true;
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.present[i * self.n + j]
    }

    pub fn has_full_diagonal(&self) -> bool {
        (0..self.n).all(|i| self.contains(i, i))
    }

    /// Off-diagonal edges in row-major order.
    pub fn off_diagonal_edges(&self) -> Vec<(usize, usize)> {
        (0..self.n)
            .flat_map(|i| (0..self.n).map(move |j| (i, j)))
            .filter(|&(i, j)| i != j && self.contains(i, j))
            .collect()
    }

    /// Number of off-diagonal edges.
    pub fn m(&self) -> usize {
        self.off_diagonal_edges().len()
    }

    pub fn successors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.n).filter(move |&j| j != i && self.contains(i, j))
    }
}

/// A single invariant violation found by [`validate_state`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Violation {
    DimensionMismatch { appraisal: usize, workload: usize },
    RowSum { row: usize, drift: f64 },
    NegativeAppraisal { row: usize, col: usize, value: f64 },
    NonFinite { what: String },
    SimplexSum { drift: f64 },
    NonPositiveWorkload { index: usize, value: f64 },
}

impl Violation {
    pub fn magnitude(&self) -> f64 {
        match self {
            Self::RowSum { drift, .. } | Self::SimplexSum { drift } => drift.abs(),
            Self::NegativeAppraisal { value, .. } | Self::NonPositiveWorkload { value, .. } => value.abs(),
            Self::DimensionMismatch { .. } | Self::NonFinite { .. } => f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn max_magnitude(&self) -> f64 {
        self.violations.iter().map(Violation::magnitude).fold(0.0, f64::max)
    }
}

/// Lists every violated state invariant; an empty report means the state is
/// valid within `tol`.
pub fn validate_state(state: &TeamState, tol: f64) -> ValidationReport {
    let a = state.appraisal.matrix();
    let w = state.workload.vector();
    let mut violations = Vec::new();
    if a.nrows() != w.len() || !a.is_square() {
        violations.push(Violation::DimensionMismatch { appraisal: a.nrows(), workload: w.len() });
        return ValidationReport { violations };
    }
    if a.iter().chain(w.iter()).any(|x| !x.is_finite()) {
        violations.push(Violation::NonFinite { what: "state contains non-finite entries".into() });
    }
    for (i, row) in a.row_iter().enumerate() {
        let drift = row.sum() - 1.0;
        if drift.abs() > tol {
            violations.push(Violation::RowSum { row: i, drift });
        }
        for (j, &v) in row.iter().enumerate() {
            if v < 0.0 {
                violations.push(Violation::NegativeAppraisal { row: i, col: j, value: v });
            }
        }
    }
    let drift = w.sum() - 1.0;
    if drift.abs() > tol {
        violations.push(Violation::SimplexSum { drift });
    }
    for (i, &x) in w.iter().enumerate() {
        if !(x > 0.0) {
            violations.push(Violation::NonPositiveWorkload { index: i, value: x });
        }
    }
    ValidationReport { violations }
}
