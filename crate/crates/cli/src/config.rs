//! Scenario configuration files (TOML).
use std::path::{Path, PathBuf};

use asap_core::experiments::{generate_random_team, sample_seed, MonteCarloConfig, SwitchEvent};
use asap_core::{AppraisalMatrix, IntegratorOptions, PowerLaw, TeamState, WorkFlowKind, WorkloadVector};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    #[default]
    Full,
    Reduced,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileKind {
    #[default]
    PowerLaw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileSpec {
    #[serde(default)]
    pub kind: ProfileKind,
    pub skill: Vec<f64>,
    pub exponent: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    pub n: usize,
    pub edge_probability: f64,
    #[serde(default)]
    pub seed: u64,
}

/// One initial condition: an explicit matrix or a random-team generator, and
/// an optional workload (uniform, or the generator's draw, when omitted).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSpec {
    #[serde(default)]
    pub label: Option<String>,
    #[serde(default)]
    pub appraisal: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub generate: Option<GeneratorSpec>,
    #[serde(default)]
    pub workload: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnosticsSpec {
    pub cycles: bool,
    pub lyapunov: bool,
    pub rank_ratio: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EquilibriumSpec {
    pub epsilon: f64,
    pub solver_tolerance: f64,
    pub residual_tolerance: f64,
}

impl Default for EquilibriumSpec {
    fn default() -> Self {
        Self { epsilon: 0.5, solver_tolerance: 1e-12, residual_tolerance: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub ids: Vec<u32>,
    #[serde(default)]
    pub events: Vec<SwitchEvent>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSpec {
    pub dir: PathBuf,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self { dir: PathBuf::from("out") }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub version: u32,
    #[serde(default = "default_flow")]
    pub flow: WorkFlowKind,
    #[serde(default)]
    pub model: ModelKind,
    #[serde(default)]
    pub profile: Option<ProfileSpec>,
    #[serde(default)]
    pub initial: Vec<InitialSpec>,
    #[serde(default)]
    pub integrator: IntegratorOptions,
    #[serde(default)]
    pub diagnostics: DiagnosticsSpec,
    #[serde(default)]
    pub equilibrium: EquilibriumSpec,
    #[serde(default)]
    pub montecarlo: MonteCarloConfig,
    #[serde(default)]
    pub scenario: Option<ScenarioSpec>,
    #[serde(default)]
    pub output: OutputSpec,
}

fn default_flow() -> WorkFlowKind {
    WorkFlowKind::DonorControlled
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub horizon: Option<f64>,
}

impl ScenarioConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
        Self::parse(&text, path)
    }

    pub fn parse(text: &str, path: &Path) -> CliResult<Self> {
        let config: Self =
            toml::from_str(text).map_err(|e| CliError::Config { path: path.into(), message: e.to_string() })?;
        config.validate().map_err(|message| CliError::Config { path: path.into(), message })?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    fn validate(&self) -> Result<(), String> {
        if self.version != CONFIG_VERSION {
            return Err(format!("version: expected {CONFIG_VERSION}, found {}", self.version));
        }
        let n = match &self.profile {
            Some(p) => {
                PowerLaw::new(p.skill.clone(), p.exponent.clone()).map_err(|e| format!("profile: {e}"))?;
                Some(p.skill.len())
            }
            None => None,
        };
        for (k, init) in self.initial.iter().enumerate() {
            let dim = match (&init.appraisal, &init.generate) {
                (Some(rows), None) => rows.len(),
                (None, Some(g)) => g.n,
                _ => return Err(format!("initial[{k}]: give exactly one of `appraisal` or `generate`")),
            };
            if let Some(n) = n.filter(|&n| n != dim) {
                return Err(format!("initial[{k}]: team has {dim} members but the profile has {n}"));
            }
            if let Some(w) = init.workload.as_ref().filter(|w| w.len() != dim) {
                return Err(format!("initial[{k}].workload: expected {dim} entries, found {}", w.len()));
            }
        }
        if let (Some(s), Some(n)) = (&self.scenario, n) {
            if s.ids.len() != n {
                return Err(format!("scenario.ids: expected {n} ids, found {}", s.ids.len()));
            }
        }
        self.integrator.validate().map_err(|e| format!("integrator: {e}"))?;
        self.montecarlo.validate().map_err(|e| format!("montecarlo: {e}"))?;
        Ok(())
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(out) = &o.out {
            self.output.dir = out.clone();
        }
        if let Some(seed) = o.seed {
            self.montecarlo.base_seed = seed;
            for (k, init) in self.initial.iter_mut().enumerate() {
                if let Some(g) = &mut init.generate {
                    g.seed = sample_seed(seed, k as u64);
                }
            }
        }
        if let Some(k) = o.workers {
            self.montecarlo.workers = Some(k);
        }
        if let Some(t) = o.horizon {
            self.integrator.t_end = t;
            self.montecarlo.horizon = t;
        }
    }

    pub fn power_law(&self) -> CliResult<PowerLaw> {
        let p = self.profile.as_ref().ok_or_else(|| CliError::Invalid("config has no [profile] table".into()))?;
        Ok(PowerLaw::new(p.skill.clone(), p.exponent.clone())?)
    }

    /// Resolved initial states, one per `[[initial]]` entry.
    pub fn initial_states(&self) -> CliResult<Vec<(String, TeamState)>> {
        if self.initial.is_empty() {
            return Err(CliError::Invalid("config has no [[initial]] entries".into()));
        }
        self.initial
            .iter()
            .enumerate()
            .map(|(k, init)| {
                let label = init.label.clone().unwrap_or_else(|| format!("{k:03}"));
                let (a, w) = match (&init.appraisal, &init.generate) {
                    (Some(rows), _) => (AppraisalMatrix::from_rows(rows)?, None),
                    (None, Some(g)) => {
                        let (a, w) = generate_random_team(g.n, g.edge_probability, g.seed)?;
                        (a, Some(w))
                    }
                    (None, None) => unreachable!("validated"),
                };
                let w = match (&init.workload, w) {
                    (Some(w), _) => WorkloadVector::from_slice(w)?,
                    (None, Some(w)) => w,
                    (None, None) => WorkloadVector::uniform(a.n()),
                };
                Ok((label, TeamState::new(a, w)?))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
version = 1
flow = "donor_controlled"

[profile]
skill = [0.3, 0.7]
exponent = [0.5, 0.8]

[[initial]]
appraisal = [[0.7, 0.3], [0.4, 0.6]]
workload = [0.2, 0.8]

[integrator]
t_end = 50.0
"#;

    #[test]
    fn parses_and_round_trips() {
        let c = ScenarioConfig::parse(SAMPLE, Path::new("x.toml")).unwrap();
        assert_eq!(c.integrator.t_end, 50.0);
        assert_eq!(c.integrator.rel_tol, IntegratorOptions::default().rel_tol);
        let again = ScenarioConfig::parse(&c.to_toml(), Path::new("y.toml")).unwrap();
        assert_eq!(again, c);
    }

    #[test]
    fn rejects_bad_exponent_naming_the_field() {
        let text = SAMPLE.replace("[0.5, 0.8]", "[1.2, 0.8]");
        let e = ScenarioConfig::parse(&text, Path::new("x.toml")).unwrap_err().to_string();
        assert!(e.contains("profile") && e.contains("exponent[0]"), "{e}");
    }

    #[test]
    fn parse_errors_carry_a_location() {
        let text = SAMPLE.replace("t_end = 50.0", "t_end = \"soon\"");
        let e = ScenarioConfig::parse(&text, Path::new("x.toml")).unwrap_err().to_string();
        assert!(e.contains("line 14") && e.contains("t_end"), "{e}");
    }

    #[test]
    fn rejects_wrong_version_and_dimensions() {
        assert!(ScenarioConfig::parse(&SAMPLE.replace("version = 1", "version = 2"), Path::new("x")).is_err());
        assert!(ScenarioConfig::parse(&SAMPLE.replace("[0.2, 0.8]", "[1.0]"), Path::new("x")).is_err());
    }

    #[test]
    fn overrides_take_precedence() {
        let mut c = ScenarioConfig::parse(SAMPLE, Path::new("x.toml")).unwrap();
        c.apply(&Overrides { horizon: Some(7.0), seed: Some(3), workers: Some(2), out: Some("o".into()) });
        assert_eq!((c.integrator.t_end, c.montecarlo.horizon), (7.0, 7.0));
        assert_eq!((c.montecarlo.base_seed, c.montecarlo.workers), (3, Some(2)));
        assert_eq!(c.output.dir, PathBuf::from("o"));
    }
}
