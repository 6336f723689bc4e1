//! `signflip` command line: sign-flip score tests on CSV data, Monte Carlo
//! scenarios, self-verification, and report rendering.
//!
//! Exit codes: 0 ok, 2 usage, 3 data, 4 fit non-convergence, 5 degenerate
//! statistic, 6 internal.

mod input;
mod output;
mod report;

use clap::{Args, Parser, Subcommand};
use signflip::multivariate::{run_multivariate_test, CombineMatrix};
use signflip::score::{run_univariate_test, Alternative, FlipPlan, Variant};
use signflip::selfcheck::{run_selfcheck, SelfCheckHook};
use signflip::sim::{
    self, builtin_names, export_summary, load_scenarios, ScenarioConfig, TestKind,
};
use signflip::Error as CoreError;
use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

#[derive(Parser)]
#[command(
    name = "signflip",
    version,
    about = "Sign-flip score tests for generalized linear models"
)]
struct Cli {
    /// Worker threads (overrides the SIGNFLIP_THREADS environment variable).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Test target coefficients in a CSV dataset.
    Test(TestArgs),
    /// Run Monte Carlo scenarios and export rejection-rate summaries.
    Simulate(SimulateArgs),
    /// Verify the fast paths against dense references and exact identities.
    Selfcheck(SelfcheckArgs),
    /// Render a previously exported summary CSV as a table and plots.
    Report(ReportArgs),
}

#[derive(Args)]
struct TestArgs {
    /// CSV file with a header row, '.' decimals, no missing values.
    #[arg(long)]
    data: PathBuf,
    /// Response column name.
    #[arg(long)]
    response: String,
    /// Target column names (comma separated; more than one runs the
    /// multivariate test).
    #[arg(long, value_delimiter = ',', required = true)]
    target: Vec<String>,
    /// Nuisance column names (comma separated; may be empty).
    #[arg(long, value_delimiter = ',', default_value = "")]
    nuisance: Vec<String>,
    /// gaussian | poisson | binomial | negative_binomial
    #[arg(long)]
    family: String,
    /// identity | log | logit (defaults to the family's canonical link).
    #[arg(long)]
    link: Option<String>,
    /// Initial common dispersion for the negative binomial family.
    #[arg(long, default_value_t = 1.0)]
    nb_dispersion: f64,
    /// Hypothesized target value(s); defaults to zero.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    beta0: Option<Vec<f64>>,
    /// standardized | effective
    #[arg(long, default_value = "standardized")]
    variant: String,
    /// two-sided | greater | less
    #[arg(long, default_value = "two-sided")]
    alternative: String,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Number of sign flips (identity included).
    #[arg(long, default_value_t = 5000)]
    flips: usize,
    /// Master seed; all randomness flows from it.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// text | json
    #[arg(long, default_value = "text")]
    output: String,
    /// Do not prepend an intercept column to the nuisance design.
    #[arg(long)]
    no_intercept: bool,
}

#[derive(Args)]
struct SimulateArgs {
    /// Name of a built-in scenario (see --list).
    #[arg(long)]
    scenario: Option<String>,
    /// TOML file with [scenario.<name>] blocks.
    #[arg(long)]
    scenario_file: Option<PathBuf>,
    /// List the built-in scenario names and exit.
    #[arg(long)]
    list: bool,
    /// Override the replication count.
    #[arg(long)]
    reps: Option<usize>,
    /// Override the sample-size grid (comma separated, increasing).
    #[arg(long, value_delimiter = ',')]
    sizes: Option<Vec<usize>>,
    /// Override the flip count.
    #[arg(long)]
    flips: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Override the test list (standardized,effective,parametric,sandwich).
    #[arg(long, value_delimiter = ',')]
    tests: Option<Vec<String>>,
    /// Override the master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Full-scale mode: 5000 replications.
    #[arg(long)]
    paper_scale: bool,
    /// Output directory for summary.csv, metadata.txt, and plots.
    #[arg(long, default_value = "signflip-results")]
    out: PathBuf,
    /// Also write one SVG rejection plot per scenario.
    #[arg(long)]
    plots: bool,
}

#[derive(Args)]
struct SelfcheckArgs {
    /// Negative control: corrupt the projection factor and expect the named
    /// check to fail.
    #[arg(long)]
    perturb_projection: bool,
}

#[derive(Args)]
struct ReportArgs {
    /// summary.csv produced by `signflip simulate`.
    #[arg(long)]
    summary: PathBuf,
    /// Nominal level drawn on plots.
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Re-render SVG plots next to the table.
    #[arg(long)]
    plots: bool,
    /// Directory for regenerated plots (defaults to the summary's directory).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    configure_threads(cli.threads);
    let code = match cli.command {
        Command::Test(args) => cmd_test(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Selfcheck(args) => cmd_selfcheck(args),
        Command::Report(args) => cmd_report(args),
    };
    match code {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error[{}]: {}", err.category(), err.message());
            if let Some(hint) = err.hint() {
                eprintln!("hint: {hint}");
            }
            ExitCode::from(err.exit_code())
        }
    }
}

fn configure_threads(flag: Option<usize>) {
    let from_env = std::env::var("SIGNFLIP_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok());
    if let Some(threads) = flag.or(from_env) {
        if threads > 0 {
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build_global();
        }
    }
}

/// CLI-level error with the documented exit-code taxonomy.
pub struct CliError {
    kind: CliErrorKind,
    message: String,
}

enum CliErrorKind {
    Usage,
    Data,
    NonConvergence,
    Degenerate,
    Internal,
}

impl CliError {
    fn usage(msg: impl Into<String>) -> Self {
        CliError {
            kind: CliErrorKind::Usage,
            message: msg.into(),
        }
    }

    fn data(msg: impl Into<String>) -> Self {
        CliError {
            kind: CliErrorKind::Data,
            message: msg.into(),
        }
    }

    fn internal(msg: impl Into<String>) -> Self {
        CliError {
            kind: CliErrorKind::Internal,
            message: msg.into(),
        }
    }

    fn exit_code(&self) -> u8 {
        match self.kind {
            CliErrorKind::Usage => 2,
            CliErrorKind::Data => 3,
            CliErrorKind::NonConvergence => 4,
            CliErrorKind::Degenerate => 5,
            CliErrorKind::Internal => 6,
        }
    }

    fn category(&self) -> &'static str {
        match self.kind {
            CliErrorKind::Usage => "usage",
            CliErrorKind::Data => "data",
            CliErrorKind::NonConvergence => "non-convergence",
            CliErrorKind::Degenerate => "degenerate",
            CliErrorKind::Internal => "internal",
        }
    }

    fn message(&self) -> &str {
        &self.message
    }

    fn hint(&self) -> Option<&'static str> {
        if matches!(self.kind, CliErrorKind::Degenerate)
            && self.message.contains("span of the nuisance design")
        {
            Some("a target column lies in the nuisance span; drop it or remove the redundant nuisance column")
        } else if matches!(self.kind, CliErrorKind::Degenerate)
            && self.message.contains("residual")
        {
            Some("the response is exactly explained by the null model; there is no variation left to test")
        } else {
            None
        }
    }
}

impl From<CoreError> for CliError {
    fn from(err: CoreError) -> Self {
        let kind = match &err {
            CoreError::Config(_) => CliErrorKind::Usage,
            CoreError::Data(_) | CoreError::Domain(_) | CoreError::Io { .. } => CliErrorKind::Data,
            CoreError::RankDeficient(_) => CliErrorKind::Data,
            CoreError::NonConvergence { .. } | CoreError::PerfectSeparation(_) => {
                CliErrorKind::NonConvergence
            }
            CoreError::DegenerateVariance(_) | CoreError::Collinear(_) | CoreError::Singular(_) => {
                CliErrorKind::Degenerate
            }
        };
        CliError {
            kind,
            message: err.to_string(),
        }
    }
}

type CliResult = Result<ExitCode, CliError>;

fn cmd_test(args: TestArgs) -> CliResult {
    let family = input::parse_family(&args.family, args.link.as_deref(), args.nb_dispersion)?;
    let variant = Variant::from_str(&args.variant).map_err(|e| CliError::usage(e.to_string()))?;
    let alternative =
        Alternative::from_str(&args.alternative).map_err(|e| CliError::usage(e.to_string()))?;
    let nuisance: Vec<String> = args
        .nuisance
        .iter()
        .filter(|s| !s.is_empty())
        .cloned()
        .collect();

    let data = input::load_design(
        &args.data,
        &args.response,
        &args.target,
        &nuisance,
        args.beta0.as_deref(),
        !args.no_intercept,
    )?;

    let plan = FlipPlan::rademacher(args.flips, data.n(), args.seed)?;
    let result = if data.d() == 1 {
        run_univariate_test(&data, &family, &plan, variant, alternative, args.alpha)?
    } else {
        if variant == Variant::Effective {
            return Err(CliError::usage(
                "the multivariate test is defined for the standardized variant only",
            ));
        }
        run_multivariate_test(
            &data,
            &family,
            &plan,
            &CombineMatrix::identity(data.d()),
            args.alpha,
        )?
    };

    let ctx = output::TestContext {
        family: &family,
        data: &data,
        seed: args.seed,
        data_path: &args.data,
    };
    match args.output.as_str() {
        "json" => print!("{}", output::render_json(&result, &ctx)),
        "text" => print!("{}", output::render_text(&result, &ctx)),
        other => return Err(CliError::usage(format!("unknown output format '{other}'"))),
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_simulate(args: SimulateArgs) -> CliResult {
    if args.list {
        for name in builtin_names() {
            println!("{name}");
        }
        return Ok(ExitCode::SUCCESS);
    }
    let mut configs: Vec<ScenarioConfig> = match (&args.scenario, &args.scenario_file) {
        (Some(name), None) => vec![ScenarioConfig::builtin(name)?],
        (None, Some(path)) => load_scenarios(path)?,
        (Some(_), Some(_)) => {
            return Err(CliError::usage(
                "pass either --scenario or --scenario-file, not both",
            ))
        }
        (None, None) => {
            return Err(CliError::usage(format!(
                "pick a scenario with --scenario <name> or --scenario-file <path>; \
                 built-in names: {}",
                builtin_names().join(", ")
            )))
        }
    };

    for config in &mut configs {
        if args.paper_scale {
            *config = config.clone().paper_scale();
        }
        if let Some(reps) = args.reps {
            config.replications = reps;
        }
        if let Some(sizes) = &args.sizes {
            config.n_grid = sizes.clone();
        }
        if let Some(flips) = args.flips {
            config.g_flips = flips;
        }
        if let Some(alpha) = args.alpha {
            config.alpha = alpha;
        }
        if let Some(tests) = &args.tests {
            let mut parsed = Vec::new();
            for t in tests {
                parsed.push(TestKind::from_str(t)?);
            }
            config.tests = parsed;
        }
        if let Some(seed) = args.seed {
            config.master_seed = seed;
        }
        config.validate()?;
    }

    let mut summaries = Vec::new();
    for config in &configs {
        eprintln!(
            "running scenario {} ({} replications, n = {:?}, g = {})",
            config.name, config.replications, config.n_grid, config.g_flips
        );
        let summary = sim::run_scenario(config)?;
        report::print_summary_table(&summary.cells, summary.alpha);
        for cell in &summary.invalid_cells {
            eprintln!("warning: cell {cell} exceeded the 5% failure budget; flagged invalid");
        }
        summaries.push(summary);
    }
    let csv_path = export_summary(&summaries, &args.out, args.plots)?;
    eprintln!("wrote {}", csv_path.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_selfcheck(args: SelfcheckArgs) -> CliResult {
    let hook = if args.perturb_projection {
        SelfCheckHook::PerturbProjection
    } else {
        SelfCheckHook::None
    };
    let outcomes = run_selfcheck(hook);
    let mut all_pass = true;
    for outcome in &outcomes {
        let status = if outcome.pass { "PASS" } else { "FAIL" };
        println!("{status} {} - {}", outcome.id, outcome.detail);
        all_pass &= outcome.pass;
    }
    println!(
        "{} checks, {} failed",
        outcomes.len(),
        outcomes.iter().filter(|o| !o.pass).count()
    );
    if all_pass {
        Ok(ExitCode::SUCCESS)
    } else {
        Err(CliError::internal("selfcheck failed"))
    }
}

fn cmd_report(args: ReportArgs) -> CliResult {
    let cells = sim::parse_summary_csv(&args.summary)?;
    if cells.is_empty() {
        println!("summary is empty");
        return Ok(ExitCode::SUCCESS);
    }
    report::print_summary_table(&cells, args.alpha);
    if args.plots {
        let dir = args
            .out
            .clone()
            .or_else(|| args.summary.parent().map(PathBuf::from))
            .ok_or_else(|| CliError::data("cannot determine an output directory"))?;
        report::write_plots(&cells, args.alpha, &dir)?;
    }
    Ok(ExitCode::SUCCESS)
}
