//! Command line front end.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use lgbandit_core::env::make_rotation_lgds;
use lgbandit_core::episode::{init_env, play, InitMode, Policy, PolicySpec};
use lgbandit_core::filter::PBarFallback;
use lgbandit_core::seed::{env_seed, label_id, policy_seed, rng_from};
use lgbandit_core::ubss::UbssAgent;

use crate::config::{Algo, ConfigError, Denominator, ExperimentConfig, Overrides};
use crate::io::{self, write_csv, write_json, write_metadata, IoError, VERSION};
use crate::suite::run_verify;
use crate::sweep::{
    diagnostics_curves, policy_spec, rows, s_comparison, theta_sweep, DiagnosticsRow,
};

#[derive(Debug, Parser)]
#[command(name = "lgbandit", version = VERSION, about = "Restless bandits over linear Gaussian systems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Regret of every policy over the θ grid (sweep.csv)
    Sweep(Args),
    /// One run per policy with the full trajectory (episode.csv)
    Episode(Args),
    /// Gramian and eigenvalue curves over the θ grid (diagnostics.csv)
    Diagnostics(Args),
    /// Bound coverage, covariance checks and the regret bound (verify.json)
    Verify(Args),
    /// Learner regret for several window lengths at one θ (s_compare.csv)
    SCompare(Args),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Sweep(_) => "sweep",
            Command::Episode(_) => "episode",
            Command::Diagnostics(_) => "diagnostics",
            Command::Verify(_) => "verify",
            Command::SCompare(_) => "s-compare",
        }
    }

    pub fn args(&self) -> &Args {
        match self {
            Command::Sweep(a)
            | Command::Episode(a)
            | Command::Diagnostics(a)
            | Command::Verify(a)
            | Command::SCompare(a) => a,
        }
    }
}

fn parse_fallback(s: &str) -> Result<PBarFallback, String> {
    match s {
        "strict" => Ok(PBarFallback::Strict),
        "stationary" => Ok(PBarFallback::Stationary),
        "max-trace" => Ok(PBarFallback::MaxTrace),
        _ => Err(format!(
            "expected strict, stationary or max-trace, got {s:?}"
        )),
    }
}

#[derive(Debug, Clone, clap::Args)]
pub struct Args {
    /// JSON or TOML config file; flags override it
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// θ for single-system commands
    #[arg(long, allow_negative_numbers = true)]
    pub theta: Option<f64>,
    /// Number of evenly spaced θ over [0, 2π]
    #[arg(long)]
    pub theta_steps: Option<usize>,
    /// Rounds per episode
    #[arg(long)]
    pub n: Option<usize>,
    /// Transitions applied before round 0
    #[arg(long)]
    pub burn_in: Option<usize>,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Policy to run; repeat for several
    #[arg(long = "algo", value_enum)]
    pub algo: Vec<Algo>,
    /// Window length; repeat or separate with commas
    #[arg(long = "s", value_delimiter = ',')]
    pub s: Vec<usize>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Sliding window length (0 keeps all history)
    #[arg(long)]
    pub tau: Option<usize>,
    /// UCB exploration scale
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Override the reward bound used by the learner
    #[arg(long)]
    pub b_r: Option<f64>,
    /// Override the weight-norm bound used by the learner
    #[arg(long)]
    pub b_g: Option<f64>,
    #[arg(long, value_enum)]
    pub normalize_denominator: Option<Denominator>,
    /// Common covariance when no action dominates: strict, stationary, max-trace
    #[arg(long, value_parser = parse_fallback)]
    pub p_bar_fallback: Option<PBarFallback>,
    /// Custom system as JSON (episode, verify)
    #[arg(long)]
    pub system: Option<PathBuf>,
    #[arg(long)]
    pub threads: Option<usize>,
    /// Trials per coverage check (verify)
    #[arg(long)]
    pub trials: Option<u64>,
    /// Output directory
    #[arg(long, default_value = "results")]
    pub out: PathBuf,
}

impl Args {
    fn overrides(&self) -> Overrides {
        Overrides {
            theta: self.theta,
            theta_steps: self.theta_steps,
            n: self.n,
            burn_in: self.burn_in,
            reps: self.reps,
            seed: self.seed,
            algorithms: self.algo.clone(),
            s_values: self.s.clone(),
            delta: self.delta,
            lambda: self.lambda,
            tau: self.tau,
            alpha: self.alpha,
            b_r: self.b_r,
            b_g: self.b_g,
            normalize_denominator: self.normalize_denominator,
            p_bar_fallback: self.p_bar_fallback,
            system: self.system.clone(),
            threads: self.threads,
            trials: self.trials,
        }
    }

    /// Defaults, then the config file, then flags.
    pub fn resolve(&self) -> Result<ExperimentConfig, ConfigError> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        cfg.apply(&self.overrides());
        Ok(cfg)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("{0}")]
    Model(#[from] lgbandit_core::Error),
    #[error("cannot start worker pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            _ => 1,
        }
    }
}

/// Summary printed to stdout by the binary.
pub type Summary = Vec<String>;

pub fn run(cli: &Cli) -> Result<Summary, RunError> {
    let args = cli.command.args();
    let cfg = args.resolve()?;
    match cli.command {
        Command::Sweep(_) => cfg.validate_sweep()?,
        _ => cfg.validate()?,
    }
    let system = match &cfg.system {
        Some(p) => Some(io::read_params(p)?),
        None => None,
    };
    let out = args.out.as_path();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads.unwrap_or(0))
        .build()?;
    let summary = pool.install(|| match &cli.command {
        Command::Sweep(_) => sweep(&cfg, out),
        Command::Episode(_) => episode(&cfg, system.as_ref(), out),
        Command::Diagnostics(_) => diagnostics(&cfg, out),
        Command::Verify(_) => verify(&cfg, system.as_ref(), out),
        Command::SCompare(_) => s_compare(&cfg, system.as_ref(), out),
    })?;
    write_metadata(out, cli.command.name(), &cfg)?;
    Ok(summary)
}

fn sweep(cfg: &ExperimentConfig, out: &Path) -> Result<Summary, RunError> {
    let cells = theta_sweep(cfg)?;
    let table = rows(&cells, cfg.normalize_denominator);
    let path = out.join("sweep.csv");
    write_csv(&path, &table)?;
    Ok(vec![format!(
        "wrote {} rows to {}",
        table.len(),
        path.display()
    )])
}

fn s_compare(
    cfg: &ExperimentConfig,
    system: Option<&lgbandit_core::env::LgdsParams>,
    out: &Path,
) -> Result<Summary, RunError> {
    let params = system
        .cloned()
        .unwrap_or_else(|| make_rotation_lgds(cfg.theta));
    let cells = s_comparison(&params, cfg.theta, cfg)?;
    let table = rows(&cells, cfg.normalize_denominator);
    let path = out.join("s_compare.csv");
    write_csv(&path, &table)?;
    Ok(table
        .iter()
        .map(|r| {
            format!(
                "s={} mean_regret={:.1} std_err={:.1}",
                r.s, r.mean_regret, r.std_err
            )
        })
        .collect())
}

fn diagnostics(cfg: &ExperimentConfig, out: &Path) -> Result<Summary, RunError> {
    let diags = diagnostics_curves(&cfg.grid())?;
    let table: Vec<DiagnosticsRow> = diags.iter().map(|d| d.row.clone()).collect();
    let path = out.join("diagnostics.csv");
    write_csv(&path, &table)?;
    let worst = diags.iter().map(|d| d.gramian_residual).fold(0.0, f64::max);
    Ok(vec![
        format!("wrote {} rows to {}", table.len(), path.display()),
        format!("worst relative Gramian residual {worst:.3e}"),
    ])
}

fn episode(
    cfg: &ExperimentConfig,
    system: Option<&lgbandit_core::env::LgdsParams>,
    out: &Path,
) -> Result<Summary, RunError> {
    let params = system
        .cloned()
        .unwrap_or_else(|| make_rotation_lgds(cfg.theta));
    write_json(&out.join("system.json"), &params)?;
    let init = InitMode::BurnIn(cfg.burn_in);
    let env_s = env_seed(cfg.seed, 0, 0);
    let mut all_rows = Vec::new();
    let mut summary = Vec::new();
    let mut specs = Vec::new();
    for &algo in &cfg.algorithms {
        if algo == Algo::Ubss {
            for s in cfg.sweep_s_values() {
                specs.push(policy_spec(&params, cfg, algo, s)?);
            }
        } else {
            specs.push(policy_spec(&params, cfg, algo, 1)?);
        }
    }
    let mut episodes = Vec::new();
    for spec in &specs {
        let name = spec.display_name();
        let mut env = init_env(&params, init, env_s)?;
        let mut rng = rng_from(policy_seed(cfg.seed, 0, 0, label_id(&name)));
        let ep = match spec {
            PolicySpec::Ubss(c) => {
                let mut agent = UbssAgent::new(c.clone(), params.k())?;
                let ep = play(&params, &mut agent, &mut env, &mut rng, cfg.n)?;
                let file = format!("agent_s{}.json", c.s);
                write_json(&out.join(&file), &agent.dump())?;
                write_json(&out.join(format!("agent_s{}_config.json", c.s)), spec)?;
                ep
            }
            _ => {
                let mut policy: Box<dyn Policy> = spec.build(params.k())?;
                play(&params, policy.as_mut(), &mut env, &mut rng, cfg.n)?
            }
        };
        summary.push(format!("{name}: final regret {:.1}", ep.final_regret()));
        episodes.push((name, ep));
    }
    for (name, ep) in &episodes {
        all_rows.extend(io::episode_rows(name, ep));
    }
    write_csv(&out.join("episode.csv"), &all_rows)?;
    Ok(summary)
}

fn verify(
    cfg: &ExperimentConfig,
    system: Option<&lgbandit_core::env::LgdsParams>,
    out: &Path,
) -> Result<Summary, RunError> {
    let report = run_verify(cfg, system)?;
    write_json(&out.join("verify.json"), &report)?;
    let mut lines: Summary = report
        .checks
        .iter()
        .map(|c| {
            format!(
                "{} {}: empirical {:.4} nominal {:.4} slack {:.4}",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                c.empirical_level,
                c.nominal_level,
                c.slack
            )
        })
        .collect();
    lines.extend(report.notes.iter().cloned());
    Ok(lines)
}
