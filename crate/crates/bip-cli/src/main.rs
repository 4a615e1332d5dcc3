use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use bip::model::Hyperparameters;
use bip::simgen::{Scenario, ScenarioSpec};
use bip_cli::config::{resolve, ConfigFile};
use bip_cli::{cmd_evaluate, cmd_fit, cmd_predict, cmd_simulate, exit_code, parse_variant, FitOptions};

#[derive(Parser)]
#[command(
    name = "bip",
    about = "Bayesian integrative factor analysis with outcome prediction (BIP/BIPnet)",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the model to multi-view data and write posterior summaries.
    Fit(FitArgs),
    /// Predict outcomes for new samples from a fitted model directory.
    Predict(PredictArgs),
    /// Generate a simulation scenario dataset (train + test + truth).
    Simulate(SimulateArgs),
    /// Score a fitted model against a truth manifest and test split.
    Evaluate(EvaluateArgs),
}

#[derive(Args)]
struct FitArgs {
    /// key=value config file; any flag given here overrides it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated view matrix files.
    #[arg(long, value_delimiter = ',')]
    views: Vec<PathBuf>,
    #[arg(long)]
    outcome: Option<PathBuf>,
    #[arg(long)]
    covariates: Option<PathBuf>,
    /// Comma-separated per-view group files ("-" skips a view).
    #[arg(long, value_delimiter = ',')]
    groups: Vec<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    r: Option<usize>,
    #[arg(long)]
    q_eta: Option<f64>,
    #[arg(long)]
    a: Option<f64>,
    #[arg(long)]
    b: Option<f64>,
    #[arg(long)]
    a0: Option<f64>,
    #[arg(long)]
    b0: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    alpha_b: Option<f64>,
    #[arg(long)]
    beta_b: Option<f64>,
    #[arg(long)]
    alpha0_shape: Option<f64>,
    #[arg(long)]
    n_iter: Option<usize>,
    #[arg(long)]
    burn_in: Option<usize>,
    #[arg(long)]
    thin: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n_chains: Option<usize>,
    #[arg(long)]
    center_outcome: Option<bool>,
    /// "scaled_by_sigma2" (default) or "conditional_mean".
    #[arg(long)]
    posterior_mode_variant: Option<String>,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, value_delimiter = ',')]
    views: Vec<PathBuf>,
    #[arg(long)]
    covariates: Option<PathBuf>,
    /// Optional held-out outcome file; prints test MSE when given.
    #[arg(long)]
    outcome: Option<PathBuf>,
    #[arg(long, default_value = "predictions.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    scenario: Option<u8>,
    /// Scenario 1 variant (1-5).
    #[arg(long)]
    setting: Option<u8>,
    /// Scenario 2/3: shared loading support across components.
    #[arg(long)]
    overlap: Option<bool>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    n_test: Option<usize>,
    #[arg(long)]
    p1: Option<usize>,
    #[arg(long)]
    p2: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Draw residuals i.i.d. instead of the block network covariance.
    #[arg(long)]
    iid_noise: Option<bool>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    #[arg(long)]
    test_dir: PathBuf,
    #[arg(long, default_value = "report.json")]
    out: PathBuf,
}

fn load_config(path: &Option<PathBuf>) -> Result<ConfigFile> {
    match path {
        Some(p) => ConfigFile::load(p),
        None => Ok(ConfigFile::default()),
    }
}

fn run_fit(args: FitArgs) -> Result<()> {
    let cfg = load_config(&args.config)?;
    let d = Hyperparameters::default();
    let hp = Hyperparameters {
        r: resolve(args.r, cfg.parse("r")?, d.r),
        q_eta: resolve(args.q_eta, cfg.parse("q_eta")?, d.q_eta),
        a: resolve(args.a, cfg.parse("a")?, d.a),
        b: resolve(args.b, cfg.parse("b")?, d.b),
        a0: resolve(args.a0, cfg.parse("a0")?, d.a0),
        b0: resolve(args.b0, cfg.parse("b0")?, d.b0),
        alpha: resolve(args.alpha, cfg.parse("alpha")?, d.alpha),
        alpha_b: resolve(args.alpha_b, cfg.parse("alpha_b")?, d.alpha_b),
        beta_b: resolve(args.beta_b, cfg.parse("beta_b")?, d.beta_b),
        alpha0_shape: resolve(args.alpha0_shape, cfg.parse("alpha0_shape")?, d.alpha0_shape),
        n_iter: resolve(args.n_iter, cfg.parse("n_iter")?, d.n_iter),
        burn_in: resolve(args.burn_in, cfg.parse("burn_in")?, d.burn_in),
        thin: resolve(args.thin, cfg.parse("thin")?, d.thin),
        seed: resolve(args.seed, cfg.parse("seed")?, d.seed),
        n_chains: resolve(args.n_chains, cfg.parse("n_chains")?, d.n_chains),
    };
    let views = if args.views.is_empty() {
        cfg.list("views")
            .map(|v| v.into_iter().map(PathBuf::from).collect())
            .unwrap_or_default()
    } else {
        args.views
    };
    let groups = if args.groups.is_empty() {
        cfg.list("groups")
            .map(|v| v.into_iter().map(PathBuf::from).collect())
            .unwrap_or_default()
    } else {
        args.groups
    };
    let outcome = resolve(
        args.outcome,
        cfg.get("outcome").map(PathBuf::from),
        PathBuf::new(),
    );
    if outcome.as_os_str().is_empty() {
        anyhow::bail!("an outcome file is required (--outcome or config key 'outcome')");
    }
    let covariates = args
        .covariates
        .or_else(|| cfg.get("covariates").map(PathBuf::from));
    let out = resolve(args.out, cfg.get("out").map(PathBuf::from), PathBuf::from("bip_fit"));
    let variant_name = resolve(
        args.posterior_mode_variant,
        cfg.get("posterior_mode_variant").map(str::to_string),
        "conditional_mean".to_string(),
    );
    let opts = FitOptions {
        views,
        outcome,
        covariates,
        groups,
        out,
        hp,
        center_outcome: resolve(args.center_outcome, cfg.parse("center_outcome")?, true),
        posterior_mode_variant: parse_variant(&variant_name)?,
    };
    cmd_fit(&opts)
}

fn run_simulate(args: SimulateArgs) -> Result<()> {
    let cfg = load_config(&args.config)?;
    let scenario_num: u8 = resolve(args.scenario, cfg.parse("scenario")?, 1);
    let setting: u8 = resolve(args.setting, cfg.parse("setting")?, 1);
    let overlap: bool = resolve(args.overlap, cfg.parse("overlap")?, true);
    let scenario = match scenario_num {
        1 => Scenario::One { setting },
        2 => Scenario::Two { overlap },
        3 => Scenario::Three { overlap },
        other => anyhow::bail!("scenario must be 1, 2, or 3 (got {other})"),
    };
    let defaults = ScenarioSpec::default();
    let spec = ScenarioSpec {
        scenario,
        n: resolve(args.n, cfg.parse("n")?, defaults.n),
        p1: resolve(args.p1, cfg.parse("p1")?, defaults.p1),
        p2: resolve(args.p2, cfg.parse("p2")?, defaults.p2),
        n_test: resolve(args.n_test, cfg.parse("n_test")?, defaults.n_test),
        seed: resolve(args.seed, cfg.parse("seed")?, defaults.seed),
        iid_noise: resolve(args.iid_noise, cfg.parse("iid_noise")?, false),
    };
    let out = resolve(args.out, cfg.get("out").map(PathBuf::from), PathBuf::from("bip_sim"));
    cmd_simulate(&spec, &out)
}

fn main() -> ExitCode {
    if let Ok(raw) = std::env::var("BIP_THREADS") {
        if let Ok(n) = raw.trim().parse::<usize>() {
            if n >= 1 {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
        }
    }
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Fit(args) => run_fit(args),
        Command::Predict(args) => cmd_predict(
            &args.model,
            &args.views,
            args.covariates.as_deref(),
            args.outcome.as_deref(),
            &args.out,
        ),
        Command::Simulate(args) => run_simulate(args),
        Command::Evaluate(args) => cmd_evaluate(&args.model, &args.truth, &args.test_dir, &args.out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err) as u8)
        }
    }
}
