//! Trajectory CSV files.
//!
//! The first line is `# asap-trajectory <version> <model> <n>`, followed by a
//! header row `t, a_1_1 .. a_n_n, w_1 .. w_n, diag:*` and one row per sample.
//! Floats are written as shortest round-trip decimals, so parsing restores
//! every value bit for bit.
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::sync::Arc;

use asap_core::dynamics::ReducedState;
use asap_core::graph::{pattern_of, Cycle};
use asap_core::integrator::Diagnostics;
use asap_core::{AppraisalMatrix, TeamState, Trajectory, WorkloadVector};
use nalgebra::{DMatrix, DVector};

use crate::config::ModelKind;
use crate::error::{CliError, CliResult};

pub const SCHEMA: &str = "asap-trajectory";
pub const SCHEMA_VERSION: u32 = 1;

const SPREAD: &str = "diag:spread";
const RHS_NORM: &str = "diag:rhs_norm";
const LYAPUNOV: &str = "diag:lyapunov";
const CYCLE_PREFIX: &str = "diag:cycle:";
const V_PREFIX: &str = "diag:v_";

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryTable {
    pub model: ModelKind,
    pub n: usize,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

fn state_columns(n: usize) -> Vec<String> {
    let mut cols = vec!["t".to_string()];
    for i in 1..=n {
        for j in 1..=n {
            cols.push(format!("a_{i}_{j}"));
        }
    }
    cols.extend((1..=n).map(|i| format!("w_{i}")));
    cols
}

fn cycle_column(c: &Cycle) -> String {
    let nodes: Vec<String> = c.nodes().iter().map(|v| (v + 1).to_string()).collect();
    format!("{CYCLE_PREFIX}{}", nodes.join("-"))
}

fn state_row(t: f64, a: &DMatrix<f64>, w: &DVector<f64>) -> Vec<f64> {
    let n = w.len();
    let mut row = Vec::with_capacity(1 + n * n + n);
    row.push(t);
    for i in 0..n {
        row.extend(a.row(i).iter());
    }
    row.extend(w.iter());
    row
}

fn diagnostic_columns(d: &Diagnostics) -> Vec<String> {
    let mut cols = Vec::new();
    if !d.spread.is_empty() {
        cols.push(SPREAD.to_string());
    }
    if !d.rhs_norm.is_empty() {
        cols.push(RHS_NORM.to_string());
    }
    cols.extend(d.cycles.iter().map(cycle_column));
    if !d.lyapunov.is_empty() {
        cols.push(LYAPUNOV.to_string());
    }
    cols
}

fn push_diagnostics(row: &mut Vec<f64>, d: &Diagnostics, k: usize) {
    if !d.spread.is_empty() {
        row.push(d.spread[k]);
    }
    if !d.rhs_norm.is_empty() {
        row.push(d.rhs_norm[k]);
    }
    if !d.cycles.is_empty() {
        row.extend(&d.cycle_constants[k]);
    }
    if !d.lyapunov.is_empty() {
        row.push(d.lyapunov[k]);
    }
}

impl TrajectoryTable {
    pub fn from_full(traj: &Trajectory<TeamState>) -> Self {
        let n = traj.states.first().map_or(0, TeamState::n);
        let mut columns = state_columns(n);
        columns.extend(diagnostic_columns(&traj.diagnostics));
        let rows = traj
            .states
            .iter()
            .enumerate()
            .map(|(k, s)| {
                let mut row = state_row(traj.times[k], s.appraisal.matrix(), s.workload.vector());
                push_diagnostics(&mut row, &traj.diagnostics, k);
                row
            })
            .collect();
        Self { model: ModelKind::Full, n, columns, rows }
    }

    /// Reduced trajectories store the reconstructed appraisal matrix and
    /// carry `v` as extra diagnostic columns.
    pub fn from_reduced(traj: &Trajectory<ReducedState>) -> CliResult<Self> {
        let n = traj.states.first().map_or(0, ReducedState::n);
        let mut columns = state_columns(n);
        columns.extend(diagnostic_columns(&traj.diagnostics));
        columns.extend((1..=n).map(|i| format!("{V_PREFIX}{i}")));
        let rows = traj
            .states
            .iter()
            .enumerate()
            .map(|(k, s)| -> CliResult<Vec<f64>> {
                let a = s.appraisal()?;
                let mut row = state_row(traj.times[k], a.matrix(), s.workload.vector());
                push_diagnostics(&mut row, &traj.diagnostics, k);
                row.extend(s.v.iter());
                Ok(row)
            })
            .collect::<CliResult<_>>()?;
        Ok(Self { model: ModelKind::Reduced, n, columns, rows })
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        self.rows.iter().map(|r| r[0])
    }

    pub fn state(&self, k: usize) -> TeamState {
        let (n, row) = (self.n, &self.rows[k]);
        TeamState {
            appraisal: AppraisalMatrix::from_matrix_unchecked(DMatrix::from_row_slice(n, n, &row[1..1 + n * n])),
            workload: WorkloadVector::from_vector_unchecked(DVector::from_column_slice(&row[1 + n * n..1 + n * n + n])),
            time: row[0],
        }
    }

    pub fn cycles(&self) -> CliResult<Vec<(usize, Cycle)>> {
        if self.rows.is_empty() {
            return Ok(Vec::new());
        }
        let pattern = pattern_of(&self.state(0).appraisal, 0.0);
        self.columns
            .iter()
            .enumerate()
            .filter_map(|(k, c)| c.strip_prefix(CYCLE_PREFIX).map(|spec| (k, spec)))
            .map(|(k, spec)| {
                let nodes = spec
                    .split('-')
                    .map(|x| x.parse::<usize>().ok().filter(|&v| v >= 1).map(|v| v - 1))
                    .collect::<Option<Vec<_>>>()
                    .ok_or_else(|| CliError::Invalid(format!("bad cycle column `{}`", self.columns[k])))?;
                Ok((k, Cycle::new(nodes, &pattern)?))
            })
            .collect()
    }

    fn channel(&self, name: &str) -> Vec<f64> {
        self.column(name).map(|k| self.rows.iter().map(|r| r[k]).collect()).unwrap_or_default()
    }

    /// Rebuilds the full-state trajectory with every stored channel.
    pub fn to_full(&self) -> CliResult<Trajectory<TeamState>> {
        let cycles = self.cycles()?;
        let diagnostics = Diagnostics {
            cycle_constants: if cycles.is_empty() {
                Vec::new()
            } else {
                self.rows.iter().map(|r| cycles.iter().map(|&(k, _)| r[k]).collect()).collect()
            },
            cycles: cycles.into_iter().map(|(_, c)| c).collect(),
            lyapunov: self.channel(LYAPUNOV),
            spread: self.channel(SPREAD),
            rhs_norm: self.channel(RHS_NORM),
        };
        Ok(Trajectory {
            times: self.times().collect(),
            states: (0..self.rows.len()).map(|k| self.state(k)).collect(),
            diagnostics,
        })
    }

    /// Rebuilds a reduced trajectory anchored at the first stored matrix.
    pub fn to_reduced(&self) -> CliResult<Trajectory<ReducedState>> {
        let first = self.column(&format!("{V_PREFIX}1")).ok_or_else(|| CliError::Invalid("no v columns".into()))?;
        let full = self.to_full()?;
        let a0 = Arc::new(full.states.first().map(|s| s.appraisal.clone()).unwrap_or_else(|| {
            AppraisalMatrix::from_matrix_unchecked(DMatrix::zeros(0, 0))
        }));
        let states = self
            .rows
            .iter()
            .zip(full.states)
            .map(|(r, s)| ReducedState {
                v: DVector::from_column_slice(&r[first..first + self.n]),
                workload: s.workload,
                reference: a0.clone(),
                time: s.time,
            })
            .collect();
        Ok(Trajectory { times: full.times, states, diagnostics: full.diagnostics })
    }

    pub fn write<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let model = match self.model {
            ModelKind::Full => "full",
            ModelKind::Reduced => "reduced",
        };
        writeln!(out, "# {SCHEMA} {SCHEMA_VERSION} {model} {}", self.n)?;
        let mut csv = csv::Writer::from_writer(out);
        csv.write_record(&self.columns)?;
        for row in &self.rows {
            csv.write_record(row.iter().map(|x| format!("{x:?}")))?;
        }
        csv.flush()
    }

    pub fn read<R: Read>(input: R) -> Result<Self, String> {
        let mut input = BufReader::new(input);
        let mut first = String::new();
        input.read_line(&mut first).map_err(|e| e.to_string())?;
        let fields: Vec<&str> = first.trim().trim_start_matches('#').split_whitespace().collect();
        let [schema, version, model, n] = fields[..] else {
            return Err(format!("missing `# {SCHEMA}` preamble"));
        };
        if schema != SCHEMA {
            return Err(format!("unknown schema `{schema}`"));
        }
        if version != SCHEMA_VERSION.to_string() {
            return Err(format!("schema version {version} is not supported (expected {SCHEMA_VERSION})"));
        }
        let model = match model {
            "full" => ModelKind::Full,
            "reduced" => ModelKind::Reduced,
            other => return Err(format!("unknown model `{other}`")),
        };
        let n: usize = n.parse().map_err(|_| format!("bad member count `{n}`"))?;
        let mut csv = csv::Reader::from_reader(input);
        let columns: Vec<String> = csv.headers().map_err(|e| e.to_string())?.iter().map(str::to_string).collect();
        let expected = state_columns(n);
        if let Some(missing) = expected.iter().find(|c| !columns.contains(c)) {
            return Err(format!("missing column `{missing}`"));
        }
        if columns[..expected.len()] != expected[..] {
            return Err("state columns are out of order".into());
        }
        let mut rows = Vec::new();
        for (k, rec) in csv.records().enumerate() {
            let rec = rec.map_err(|e| e.to_string())?;
            let row = rec
                .iter()
                .map(|x| x.parse::<f64>().map_err(|_| format!("row {}: `{x}` is not a number", k + 1)))
                .collect::<Result<Vec<_>, _>>()?;
            rows.push(row);
        }
        Ok(Self { model, n, columns, rows })
    }

    pub fn save(&self, path: &Path) -> CliResult<()> {
        let file = std::fs::File::create(path).map_err(CliError::io(path))?;
        self.write(std::io::BufWriter::new(file)).map_err(CliError::io(path))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let file = std::fs::File::open(path).map_err(CliError::io(path))?;
        Self::read(file).map_err(|message| CliError::Schema { path: path.into(), message })
    }

    pub fn to_text(&self) -> String {
        let mut buf = Vec::new();
        self.write(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("utf-8")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> TrajectoryTable {
        TrajectoryTable {
            model: ModelKind::Full,
            n: 1,
            columns: vec!["t".into(), "a_1_1".into(), "w_1".into(), SPREAD.into()],
            rows: vec![vec![0.0, 1.0, 1.0, 0.1], vec![1e-300, -0.0, 5e-324, f64::NAN]],
        }
    }

    #[test]
    fn text_round_trip_is_exact() {
        let t = sample();
        let text = t.to_text();
        assert!(text.starts_with("# asap-trajectory 1 full 1\nt,a_1_1,w_1,diag:spread\n"));
        let back = TrajectoryTable::read(text.as_bytes()).unwrap();
        assert_eq!(back.to_text(), text);
        assert_eq!(back.rows[1][2].to_bits(), 5e-324f64.to_bits());
        assert!(back.rows[1][1].is_sign_negative());
    }

    #[test]
    fn rejects_other_versions_and_missing_columns() {
        let text = sample().to_text();
        let e = TrajectoryTable::read(text.replace("trajectory 1", "trajectory 9").as_bytes()).unwrap_err();
        assert!(e.contains("version 9"), "{e}");
        let e = TrajectoryTable::read(text.replace(",w_1", ",x_1").as_bytes()).unwrap_err();
        assert!(e.contains("w_1"), "{e}");
        assert!(TrajectoryTable::read("t,a_1_1\n".as_bytes()).is_err());
    }
}
