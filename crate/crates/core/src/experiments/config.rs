//! Declarative experiment configuration, read from TOML.
//!
//! ```toml
//! suite = "estimate"
//!
//! [grid]
//! n = [10, 50]
//! epsilon = [0.2, 0.05]
//! models = ["hyperplane", "quadratic"]
//! tie_policies = ["plus", "random"]
//!
//! [seeds]
//! base = 7
//! replicas = 100
//!
//! [output]
//! path = "estimate.csv"
//! format = "csv"
//! ```
//!
//! Grid keys left out fall back to the suite's defaults; a key given as an
//! empty list yields no cells.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::comparator::TiePolicy;
use crate::error::{Error, Result};
use crate::quantumsim::{SearchMode, DEFAULT_MAX_AMPLITUDES};
use crate::testing::{RANDOMIZED_MIN_DIMENSION, DEFAULT_YES_THRESHOLD};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    DpSoundness,
    TestRandomized,
    TestDeterministic,
    Estimate,
    EstimateConstant,
    Quantum,
    QftRecovery,
    Concentration,
    Overlap,
}

impl Suite {
    pub const ALL: [Suite; 9] = [
        Suite::DpSoundness,
        Suite::TestRandomized,
        Suite::TestDeterministic,
        Suite::Estimate,
        Suite::EstimateConstant,
        Suite::Quantum,
        Suite::QftRecovery,
        Suite::Concentration,
        Suite::Overlap,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::DpSoundness => "dp_soundness",
            Suite::TestRandomized => "test_randomized",
            Suite::TestDeterministic => "test_deterministic",
            Suite::Estimate => "estimate",
            Suite::EstimateConstant => "estimate_constant",
            Suite::Quantum => "quantum",
            Suite::QftRecovery => "qft_recovery",
            Suite::Concentration => "concentration",
            Suite::Overlap => "overlap",
        }
    }

    fn uses_epsilon(self) -> bool {
        matches!(
            self,
            Suite::TestRandomized | Suite::TestDeterministic | Suite::Estimate | Suite::Quantum
        )
    }

    fn uses_model(self) -> bool {
        matches!(
            self,
            Suite::DpSoundness
                | Suite::TestRandomized
                | Suite::TestDeterministic
                | Suite::Estimate
                | Suite::EstimateConstant
                | Suite::Quantum
        )
    }

    fn uses_case(self) -> bool {
        matches!(self, Suite::TestRandomized | Suite::TestDeterministic)
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|suite| suite.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown suite `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Hyperplane,
    Quadratic,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Hyperplane => "hyperplane",
            ModelKind::Quadratic => "quadratic",
        }
    }
}

/// Which side of the testing promise an instance is drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromiseCase {
    Yes,
    No,
}

impl PromiseCase {
    pub fn name(self) -> &'static str {
        match self {
            PromiseCase::Yes => "yes",
            PromiseCase::No => "no",
        }
    }
}

/// How promise instances are placed inside their allowed distance range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    /// Distance exactly `ε` for YES and just over `2ε` for NO.
    #[default]
    Boundary,
    /// Distance uniform over the allowed range, with a share of boundary,
    /// axis-sparse and tiny-overlap instances mixed in.
    Mixed,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub n: Option<Vec<usize>>,
    pub epsilon: Option<Vec<f64>>,
    /// Failure probability of the randomized tester.
    pub delta: Option<Vec<f64>>,
    pub models: Option<Vec<ModelKind>>,
    pub tie_policies: Option<Vec<String>>,
    pub cases: Option<Vec<PromiseCase>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Seeds {
    pub base: u64,
    pub replicas: usize,
}

impl Default for Seeds {
    fn default() -> Self {
        Self {
            base: 0,
            replicas: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Caps {
    pub max_amplitudes: usize,
    /// Grid parameter for the quantum suites; unset picks each suite's default.
    pub grid_t: Option<usize>,
    pub search_mode: SearchMode,
    /// Monte-Carlo samples per replica (concentration, overlap).
    pub samples: u64,
    /// Shots per replica (qft_recovery).
    pub shots: usize,
    /// Distance of the perturbed state from the ideal one (qft_recovery).
    pub perturbation: f64,
    pub yes_threshold: f64,
    pub placement: Placement,
}

impl Default for Caps {
    fn default() -> Self {
        Self {
            max_amplitudes: DEFAULT_MAX_AMPLITUDES,
            grid_t: None,
            search_mode: SearchMode::Reference,
            samples: 100_000,
            shots: 1,
            perturbation: 0.0,
            yes_threshold: DEFAULT_YES_THRESHOLD,
            placement: Placement::Boundary,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(Error::Config(format!("unknown format `{other}` (csv, json)"))),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Output {
    pub path: Option<PathBuf>,
    pub format: Format,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub suite: Suite,
    #[serde(default)]
    pub grid: Grid,
    #[serde(default)]
    pub seeds: Seeds,
    #[serde(default)]
    pub caps: Caps,
    #[serde(default)]
    pub output: Output,
}

/// A fully resolved grid, one value list per axis.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedGrid {
    pub n: Vec<usize>,
    pub epsilon: Vec<f64>,
    pub delta: Vec<f64>,
    pub models: Vec<ModelKind>,
    pub tie_policies: Vec<String>,
    pub cases: Vec<PromiseCase>,
}

const ALL_POLICIES: [&str; 5] = ["plus", "minus", "random", "adversarial", "contrarian"];

impl ExperimentConfig {
    /// The suite's default grid with the given seeds.
    pub fn for_suite(suite: Suite) -> Self {
        Self {
            suite,
            grid: Grid::default(),
            seeds: Seeds {
                base: 0,
                replicas: match suite {
                    Suite::DpSoundness => 2000,
                    Suite::QftRecovery => 1000,
                    Suite::Concentration | Suite::Overlap => 1,
                    _ => 300,
                },
            },
            caps: Caps::default(),
            output: Output::default(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn resolved_grid(&self) -> ResolvedGrid {
        let suite = self.suite;
        let g = &self.grid;
        let default_n: Vec<usize> = match suite {
            Suite::DpSoundness => vec![2, 5, 20],
            Suite::TestRandomized => vec![6, 50, 200],
            Suite::TestDeterministic => vec![10, 20, 40, 80, 160],
            Suite::Estimate => vec![10, 50, 200],
            Suite::EstimateConstant => vec![10, 100, 500],
            Suite::Quantum | Suite::QftRecovery => vec![2],
            Suite::Concentration => vec![5, 20, 200],
            Suite::Overlap => vec![500],
        };
        let default_eps: Vec<f64> = match suite {
            Suite::TestRandomized => vec![0.1, 0.3],
            Suite::TestDeterministic => vec![0.1, 0.3],
            Suite::Estimate => vec![0.2, 0.05, 0.01],
            Suite::Quantum => vec![0.25],
            _ => vec![],
        };
        let default_models = match suite {
            Suite::TestRandomized | Suite::TestDeterministic | Suite::Quantum => {
                vec![ModelKind::Hyperplane]
            }
            _ => vec![ModelKind::Hyperplane, ModelKind::Quadratic],
        };
        let default_policies: Vec<String> = match suite {
            Suite::DpSoundness | Suite::TestDeterministic => {
                ALL_POLICIES.iter().map(|s| s.to_string()).collect()
            }
            _ => vec!["random".to_string()],
        };
        let pick_f = |v: &Option<Vec<f64>>, d: Vec<f64>| {
            if suite.uses_epsilon() {
                v.clone().unwrap_or(d)
            } else {
                vec![f64::NAN]
            }
        };
        ResolvedGrid {
            n: g.n.clone().unwrap_or(default_n),
            epsilon: pick_f(&g.epsilon, default_eps),
            delta: if suite == Suite::TestRandomized {
                g.delta.clone().unwrap_or_else(|| vec![1.0 / 3.0])
            } else {
                vec![f64::NAN]
            },
            models: if suite.uses_model() {
                g.models.clone().unwrap_or(default_models)
            } else {
                vec![ModelKind::Hyperplane]
            },
            tie_policies: if suite.uses_model() {
                g.tie_policies.clone().unwrap_or(default_policies)
            } else {
                vec!["none".to_string()]
            },
            cases: if suite.uses_case() {
                g.cases
                    .clone()
                    .unwrap_or_else(|| vec![PromiseCase::Yes, PromiseCase::No])
            } else {
                vec![PromiseCase::Yes]
            },
        }
    }

    /// Checks every grid point against the preconditions of the operation
    /// the suite drives.
    pub fn validate(&self) -> Result<()> {
        let grid = self.resolved_grid();
        let bad = |msg: String| Err(Error::Config(format!("{}: {msg}", self.suite)));
        for &n in &grid.n {
            let min = match self.suite {
                Suite::TestRandomized => RANDOMIZED_MIN_DIMENSION,
                Suite::Concentration => 5,
                Suite::Overlap => 3,
                _ => 1,
            };
            if n < min {
                return bad(format!("n = {n} is below the minimum {min}"));
            }
            if matches!(self.suite, Suite::Quantum | Suite::QftRecovery) {
                let t = self.caps.grid_t.unwrap_or(64) as u128;
                let size = (t + 1).checked_pow(n as u32).unwrap_or(u128::MAX);
                if self.suite == Suite::QftRecovery && size > self.caps.max_amplitudes as u128 {
                    return bad(format!(
                        "grid of {size} amplitudes exceeds the cap {}",
                        self.caps.max_amplitudes
                    ));
                }
            }
        }
        for &eps in &grid.epsilon {
            if self.suite.uses_epsilon()
                && !(eps > 0.0 && eps < std::f64::consts::FRAC_1_SQRT_2)
            {
                return bad(format!("epsilon = {eps} outside (0, 1/sqrt 2)"));
            }
        }
        for &d in &grid.delta {
            if self.suite == Suite::TestRandomized && !(d > 0.0 && d < 1.0) {
                return bad(format!("delta = {d} outside (0, 1)"));
            }
        }
        for p in &grid.tie_policies {
            if self.suite.uses_model() {
                TiePolicy::from_label(p, 0)?;
            }
        }
        if self.suite == Suite::Quantum {
            for &n in &grid.n {
                for &eps in &grid.epsilon {
                    let t = self
                        .caps
                        .grid_t
                        .unwrap_or_else(|| crate::quantumsim::default_grid_t(n, eps));
                    let size = (t as u128 + 1).checked_pow(n as u32).unwrap_or(u128::MAX);
                    if size > self.caps.max_amplitudes as u128 {
                        return bad(format!(
                            "n = {n}, epsilon = {eps} needs {size} amplitudes, cap is {}",
                            self.caps.max_amplitudes
                        ));
                    }
                }
            }
        }
        if !(0.0..=2.0).contains(&self.caps.perturbation) {
            return bad("perturbation must lie in [0, 2]".into());
        }
        if !(self.caps.yes_threshold > 0.0 && self.caps.yes_threshold <= 1.0) {
            return bad("yes_threshold must lie in (0, 1]".into());
        }
        if matches!(self.suite, Suite::Concentration | Suite::Overlap) && self.caps.samples == 0 {
            return bad("samples must be positive".into());
        }
        Ok(())
    }
}
