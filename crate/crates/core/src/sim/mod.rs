//! Monte Carlo harness: scenario configs, the replicated test runner, and
//! CSV/plot export.
//!
//! Replicates run in parallel; each derives its random streams from
//! (master seed, scenario name, n, replicate index), and the per-cell
//! aggregation is a commutative tally, so the output is identical under any
//! thread schedule. The `runtime_s` column is the one wall-clock field and
//! the only one that varies between runs.

mod dgp;
mod export;
mod plot;

pub use dgp::{generate_dataset, Dgp, GeneratedData};
pub use export::{export_summary, parse_summary_csv};
pub use plot::rejection_plot_svg;

use crate::comparators::{wald_test, CovarianceKind};
use crate::error::{Error, Result};
use crate::rng;
use crate::score::{run_univariate_both, Alternative, FlipPlan};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

const STREAM_DATA: u64 = 1;
const STREAM_FLIPS: u64 = 2;

/// Cells whose failure fraction exceeds this are flagged invalid.
const MAX_FAILURE_RATE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    Standardized,
    Effective,
    Parametric,
    Sandwich,
}

impl TestKind {
    pub const ALL: [TestKind; 4] = [
        TestKind::Standardized,
        TestKind::Effective,
        TestKind::Parametric,
        TestKind::Sandwich,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TestKind::Standardized => "standardized",
            TestKind::Effective => "effective",
            TestKind::Parametric => "parametric",
            TestKind::Sandwich => "sandwich",
        }
    }
}

impl FromStr for TestKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TestKind::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown test '{s}'; valid tests: standardized, effective, parametric, sandwich"
                ))
            })
    }
}

impl fmt::Display for TestKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One simulation setting: a data-generating process, sample sizes,
/// replication count, and the tests to run two-sided at `alpha`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub name: String,
    pub dgp: Dgp,
    pub beta_true: f64,
    pub n_grid: Vec<usize>,
    pub replications: usize,
    pub alpha: f64,
    pub g_flips: usize,
    pub tests: Vec<TestKind>,
    pub master_seed: u64,
}

impl ScenarioConfig {
    /// Desk-scale defaults: 2000 replications over n in
    /// (25, 50, 100, 200, 500, 1000), 1000 flips, alpha 0.05, all four tests.
    pub fn builtin(name: &str) -> Result<Self> {
        let dgp = Dgp::from_str(name).map_err(|_| {
            Error::Config(format!(
                "unknown scenario '{name}'; valid names: {}",
                builtin_names().join(", ")
            ))
        })?;
        Ok(ScenarioConfig {
            name: name.to_string(),
            dgp,
            beta_true: dgp.default_beta(),
            n_grid: vec![25, 50, 100, 200, 500, 1000],
            replications: 2000,
            alpha: 0.05,
            g_flips: 1000,
            tests: TestKind::ALL.to_vec(),
            master_seed: 20_200_522,
        })
    }

    /// Full-scale mode: 5000 replications.
    pub fn paper_scale(mut self) -> Self {
        self.replications = 5000;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty()
            || !self
                .name
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
        {
            return Err(Error::Config(format!(
                "scenario name '{}' must be non-empty [A-Za-z0-9_-]",
                self.name
            )));
        }
        if self.replications == 0 {
            return Err(Error::Config("replications must be positive".into()));
        }
        if self.replications < 100 {
            return Err(Error::Config(format!(
                "need at least 100 replications, got {}",
                self.replications
            )));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        if self.g_flips < 2 {
            return Err(Error::Config("g_flips must be at least 2".into()));
        }
        if self.n_grid.is_empty() {
            return Err(Error::Config("n_grid must be non-empty".into()));
        }
        if self.n_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("n_grid must be strictly increasing".into()));
        }
        if self.tests.is_empty() {
            return Err(Error::Config("select at least one test".into()));
        }
        Ok(())
    }
}

pub fn builtin_names() -> Vec<&'static str> {
    Dgp::ALL.iter().map(|d| d.name()).collect()
}

/// TOML scenario file: `[scenario.<name>]` blocks with per-scenario keys;
/// omitted keys fall back to the desk-scale defaults of the named dgp.
#[derive(Debug, Deserialize)]
struct ScenarioFile {
    scenario: BTreeMap<String, ScenarioSpec>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioSpec {
    dgp: Dgp,
    beta_true: Option<f64>,
    n_grid: Option<Vec<usize>>,
    replications: Option<usize>,
    alpha: Option<f64>,
    g_flips: Option<usize>,
    tests: Option<Vec<TestKind>>,
    master_seed: Option<u64>,
}

/// Loads scenario blocks from a TOML file.
pub fn load_scenarios(path: &Path) -> Result<Vec<ScenarioConfig>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    let file: ScenarioFile = toml::from_str(&text)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (name, spec) in file.scenario {
        let base = ScenarioConfig::builtin(spec.dgp.name())?;
        let config = ScenarioConfig {
            name,
            dgp: spec.dgp,
            beta_true: spec.beta_true.unwrap_or_else(|| spec.dgp.default_beta()),
            n_grid: spec.n_grid.unwrap_or(base.n_grid),
            replications: spec.replications.unwrap_or(base.replications),
            alpha: spec.alpha.unwrap_or(base.alpha),
            g_flips: spec.g_flips.unwrap_or(base.g_flips),
            tests: spec.tests.unwrap_or(base.tests),
            master_seed: spec.master_seed.unwrap_or(base.master_seed),
        };
        config.validate()?;
        out.push(config);
    }
    if out.is_empty() {
        return Err(Error::Config(format!(
            "{}: no [scenario.<name>] blocks found",
            path.display()
        )));
    }
    Ok(out)
}

/// One (scenario, test, n) cell of the summary.
#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub scenario: String,
    pub test: TestKind,
    pub n: usize,
    pub replications: usize,
    pub failures: usize,
    pub reject_rate: f64,
    pub mc_se: f64,
    pub seed: u64,
    pub runtime_s: f64,
}

/// Aggregated rejection rates for one scenario.
#[derive(Debug, Clone)]
pub struct SimulationSummary {
    pub scenario: String,
    pub master_seed: u64,
    pub alpha: f64,
    pub cells: Vec<CellSummary>,
    /// "(test, n)" cells whose failure fraction exceeded 5%.
    pub invalid_cells: Vec<String>,
    /// Generator conventions, for auditability.
    pub notes: Vec<String>,
}

#[derive(Default, Clone, Copy)]
struct RepOutcome {
    standardized: Option<bool>,
    effective: Option<bool>,
    parametric: Option<bool>,
    sandwich: Option<bool>,
}

impl RepOutcome {
    fn get(&self, test: TestKind) -> Option<bool> {
        match test {
            TestKind::Standardized => self.standardized,
            TestKind::Effective => self.effective,
            TestKind::Parametric => self.parametric,
            TestKind::Sandwich => self.sandwich,
        }
    }
}

/// Runs one scenario over its full n-grid. Deterministic in the master seed
/// regardless of thread count (runtime_s excepted).
pub fn run_scenario(config: &ScenarioConfig) -> Result<SimulationSummary> {
    config.validate()?;
    let scenario_stream = rng::hash_str(&config.name) ^ rng::hash_str(config.dgp.name());
    let want_flips = config
        .tests
        .iter()
        .any(|t| matches!(t, TestKind::Standardized | TestKind::Effective));

    let mut cells = Vec::new();
    let mut invalid = Vec::new();
    for &n in &config.n_grid {
        let started = Instant::now();
        let outcomes: Vec<RepOutcome> = (0..config.replications)
            .into_par_iter()
            .map(|rep| {
                run_replicate(config, scenario_stream, n, rep as u64, want_flips)
            })
            .collect();
        let runtime_s = started.elapsed().as_secs_f64();

        for &test in &config.tests {
            let mut successes = 0usize;
            let mut rejections = 0usize;
            for o in &outcomes {
                if let Some(reject) = o.get(test) {
                    successes += 1;
                    if reject {
                        rejections += 1;
                    }
                }
            }
            let failures = config.replications - successes;
            let denom = successes.max(1) as f64;
            let rate = rejections as f64 / denom;
            let mc_se = (rate * (1.0 - rate) / denom).sqrt();
            if failures as f64 > MAX_FAILURE_RATE * config.replications as f64 {
                invalid.push(format!("{}@n={}", test.name(), n));
            }
            cells.push(CellSummary {
                scenario: config.name.clone(),
                test,
                n,
                replications: config.replications,
                failures,
                reject_rate: rate,
                mc_se,
                seed: config.master_seed,
                runtime_s,
            });
        }
    }
    Ok(SimulationSummary {
        scenario: config.name.clone(),
        master_seed: config.master_seed,
        alpha: config.alpha,
        cells,
        invalid_cells: invalid,
        notes: vec![
            config.dgp.conventions(),
            format!(
                "beta_true = {}, g_flips = {}, two-sided alpha = {}",
                config.beta_true, config.g_flips, config.alpha
            ),
        ],
    })
}

fn run_replicate(
    config: &ScenarioConfig,
    scenario_stream: u64,
    n: usize,
    rep: u64,
    want_flips: bool,
) -> RepOutcome {
    let mut out = RepOutcome::default();
    let rep_seed = rng::derive2(
        rng::derive(config.master_seed, scenario_stream),
        n as u64,
        rep,
    );
    let generated = match generate_dataset(
        config.dgp,
        config.beta_true,
        n,
        rng::derive(rep_seed, STREAM_DATA),
    ) {
        Ok(g) => g,
        Err(_) => return out,
    };

    if want_flips {
        let plan = match FlipPlan::rademacher(
            config.g_flips,
            n,
            rng::derive(rep_seed, STREAM_FLIPS),
        ) {
            Ok(p) => p,
            Err(_) => return out,
        };
        if let Ok(pair) = run_univariate_both(
            &generated.data,
            &generated.family,
            &plan,
            Alternative::TwoSided,
            config.alpha,
        ) {
            out.standardized = Some(pair.standardized.reject);
            out.effective = Some(pair.effective.reject);
        }
    }
    if config.tests.contains(&TestKind::Parametric) {
        out.parametric = wald_test(
            &generated.data,
            &generated.family,
            CovarianceKind::ModelBased,
            config.alpha,
        )
        .ok()
        .map(|r| r.reject);
    }
    if config.tests.contains(&TestKind::Sandwich) {
        out.sandwich = wald_test(
            &generated.data,
            &generated.family,
            CovarianceKind::SandwichHc0,
            config.alpha,
        )
        .ok()
        .map(|r| r.reject);
    }
    out
}
