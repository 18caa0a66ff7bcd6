//! Experiment configuration: file loading (JSON or TOML), flag overrides and
//! validation.

use std::f64::consts::PI;
use std::fmt;
use std::path::{Path, PathBuf};

use lgbandit_core::filter::PBarFallback;
use serde::{Deserialize, Serialize};

/// Raised for any invalid configuration; the binary maps it to exit code 2.
#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config file {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot parse config file {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

/// Policies selectable by name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Algo {
    Ubss,
    Ucb,
    SwUcb,
    Random,
}

/// Which regret goes in the denominator of the normalized improvement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Denominator {
    /// `100·(R_alg − R_UBSS)/R_alg`
    #[default]
    Comparison,
    /// `100·(R_alg − R_UBSS)/R_UBSS`
    Ubss,
}

impl Denominator {
    pub fn normalize(self, r_alg: f64, r_ubss: f64) -> f64 {
        let denom = match self {
            Denominator::Comparison => r_alg,
            Denominator::Ubss => r_ubss,
        };
        100.0 * (r_alg - r_ubss) / denom
    }
}

/// Settings of the `verify` suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    /// Trials per coverage check.
    pub trials: u64,
    /// Regression rounds per coverage trial.
    pub rounds: usize,
    /// Random action sequences per system for the covariance checks.
    pub sequences: usize,
    /// Steps per random action sequence.
    pub steps: usize,
    /// Number of benchmark systems for the covariance checks.
    pub theta_steps: usize,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            trials: 400,
            rounds: 500,
            sequences: 100,
            steps: 1000,
            theta_steps: 16,
        }
    }
}

/// Fully resolved experiment settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Explicit θ values; overrides `theta_steps` when present.
    pub theta_grid: Option<Vec<f64>>,
    /// Evenly spaced points over [0, 2π], endpoints included.
    pub theta_steps: usize,
    /// θ for single-system commands (`episode`, `s-compare`, `verify`).
    pub theta: f64,
    pub n: usize,
    pub burn_in: usize,
    pub reps: usize,
    pub seed: u64,
    pub algorithms: Vec<Algo>,
    /// Window lengths; `None` means `[1]` for `sweep` and `[1, 2, 3]` for
    /// `s-compare`.
    pub s_values: Option<Vec<usize>>,
    pub lambda: f64,
    pub delta: f64,
    /// Overrides for the bounds otherwise derived from the true system.
    pub b_r: Option<f64>,
    pub b_g: Option<f64>,
    pub b_c: Option<f64>,
    pub force_explore_unseen: bool,
    pub p_bar_fallback: PBarFallback,
    /// UCB exploration scale.
    pub alpha: f64,
    /// Sliding window length; 0 keeps the whole history.
    pub tau: usize,
    pub xi_exp: f64,
    /// Fixed bonus scale for the sliding window; running reward std when unset.
    pub b_scale: Option<f64>,
    pub normalize_denominator: Denominator,
    /// Custom system (JSON) for `episode` and `verify`.
    pub system: Option<PathBuf>,
    /// Worker threads; all cores when unset.
    pub threads: Option<usize>,
    pub verify: VerifyConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            theta_grid: None,
            theta_steps: 16,
            theta: 5.0 * PI / 8.0,
            n: 10_000,
            burn_in: 10_000,
            reps: 20,
            seed: 0,
            algorithms: vec![Algo::Ubss, Algo::Ucb, Algo::SwUcb, Algo::Random],
            s_values: None,
            lambda: 1.0,
            delta: 0.1,
            b_r: None,
            b_g: None,
            b_c: None,
            force_explore_unseen: true,
            p_bar_fallback: PBarFallback::Stationary,
            alpha: 1.0,
            tau: 500,
            xi_exp: 0.6,
            b_scale: None,
            normalize_denominator: Denominator::Comparison,
            system: None,
            threads: None,
            verify: VerifyConfig::default(),
        }
    }
}

/// Flag values that override the file; `None` leaves the setting alone.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub theta: Option<f64>,
    pub theta_steps: Option<usize>,
    pub n: Option<usize>,
    pub burn_in: Option<usize>,
    pub reps: Option<usize>,
    pub seed: Option<u64>,
    pub algorithms: Vec<Algo>,
    pub s_values: Vec<usize>,
    pub delta: Option<f64>,
    pub lambda: Option<f64>,
    pub tau: Option<usize>,
    pub alpha: Option<f64>,
    pub b_r: Option<f64>,
    pub b_g: Option<f64>,
    pub normalize_denominator: Option<Denominator>,
    pub p_bar_fallback: Option<PBarFallback>,
    pub system: Option<PathBuf>,
    pub threads: Option<usize>,
    pub trials: Option<u64>,
}

impl ExperimentConfig {
    /// Reads a JSON or TOML file, picked by extension (JSON, then TOML, when
    /// the extension is neither).
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_owned(),
            source,
        })?;
        let parse_err = |message: String| ConfigError::Parse {
            path: path.to_owned(),
            message,
        };
        let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
        match ext.to_ascii_lowercase().as_str() {
            "json" => serde_json::from_str(&text).map_err(|e| parse_err(e.to_string())),
            "toml" => toml::from_str(&text).map_err(|e| parse_err(e.to_string())),
            _ => serde_json::from_str(&text)
                .or_else(|_| toml::from_str(&text))
                .map_err(|e: toml::de::Error| parse_err(e.to_string())),
        }
    }

    pub fn apply(&mut self, o: &Overrides) {
        macro_rules! set {
            ($($field:ident),*) => {$(
                if let Some(v) = o.$field.clone() {
                    self.$field = v;
                }
            )*};
        }
        set!(
            theta,
            theta_steps,
            n,
            burn_in,
            reps,
            seed,
            delta,
            lambda,
            tau,
            alpha
        );
        set!(normalize_denominator, p_bar_fallback);
        if o.theta_steps.is_some() {
            self.theta_grid = None;
        }
        if !o.algorithms.is_empty() {
            self.algorithms = o.algorithms.clone();
        }
        if !o.s_values.is_empty() {
            self.s_values = Some(o.s_values.clone());
        }
        if o.b_r.is_some() {
            self.b_r = o.b_r;
        }
        if o.b_g.is_some() {
            self.b_g = o.b_g;
        }
        if o.system.is_some() {
            self.system = o.system.clone();
        }
        if o.threads.is_some() {
            self.threads = o.threads;
        }
        if let Some(t) = o.trials {
            self.verify.trials = t;
        }
    }

    /// θ values of the sweep.
    pub fn grid(&self) -> Vec<f64> {
        match &self.theta_grid {
            Some(g) => g.clone(),
            None => theta_grid(self.theta_steps),
        }
    }

    pub fn sweep_s_values(&self) -> Vec<usize> {
        self.s_values.clone().unwrap_or_else(|| vec![1])
    }

    pub fn compare_s_values(&self) -> Vec<usize> {
        self.s_values.clone().unwrap_or_else(|| vec![1, 2, 3])
    }

    pub fn tau_opt(&self) -> Option<usize> {
        (self.tau > 0).then_some(self.tau)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let in_range = |t: f64| t.is_finite() && (0.0..=2.0 * PI + 1e-12).contains(&t);
        if let Some(g) = &self.theta_grid {
            if g.is_empty() {
                return Err(invalid("theta_grid must not be empty"));
            }
            if let Some(t) = g.iter().find(|t| !in_range(**t)) {
                return Err(invalid(format!("theta_grid value {t} is outside [0, 2π]")));
            }
        } else if self.theta_steps == 0 {
            return Err(invalid("theta_steps must be at least 1"));
        }
        if !in_range(self.theta) {
            return Err(invalid(format!("theta {} is outside [0, 2π]", self.theta)));
        }
        if self.reps == 0 {
            return Err(invalid("reps must be at least 1"));
        }
        if self.algorithms.is_empty() {
            return Err(invalid("algorithms must not be empty"));
        }
        for s_values in [self.sweep_s_values(), self.compare_s_values()] {
            if s_values.is_empty() || s_values.contains(&0) {
                return Err(invalid("s values must be positive"));
            }
            let max_s = *s_values.iter().max().expect("non-empty");
            if self.n <= max_s {
                return Err(invalid(format!(
                    "horizon n = {} must exceed the largest window length {max_s}",
                    self.n
                )));
            }
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(invalid("lambda must be positive"));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(invalid("delta must lie in (0, 1)"));
        }
        for (name, v) in [
            ("b_r", self.b_r),
            ("b_g", self.b_g),
            ("b_c", self.b_c),
            ("b_scale", self.b_scale),
        ] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(invalid(format!("{name} must be positive")));
                }
            }
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(invalid("alpha must be non-negative"));
        }
        if !(self.xi_exp > 0.0 && self.xi_exp.is_finite()) {
            return Err(invalid("xi_exp must be positive"));
        }
        if self.threads == Some(0) {
            return Err(invalid("threads must be at least 1"));
        }
        let v = &self.verify;
        if v.trials == 0 || v.rounds == 0 || v.sequences == 0 || v.steps == 0 || v.theta_steps == 0
        {
            return Err(invalid("verify settings must be positive"));
        }
        Ok(())
    }

    /// Validation specific to the θ sweep.
    pub fn validate_sweep(&self) -> Result<(), ConfigError> {
        self.validate()?;
        if !self.algorithms.contains(&Algo::Ubss) {
            return Err(invalid(
                "the sweep normalizes against UBSS, so it must be listed",
            ));
        }
        Ok(())
    }
}

/// `steps` evenly spaced points over [0, 2π], both endpoints included.
pub fn theta_grid(steps: usize) -> Vec<f64> {
    match steps {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..steps)
            .map(|i| 2.0 * PI * i as f64 / (steps - 1) as f64)
            .collect(),
    }
}

impl fmt::Display for Algo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algo::Ubss => "UBSS",
            Algo::Ucb => "UCB",
            Algo::SwUcb => "SW-UCB",
            Algo::Random => "Random",
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn defaults_match_benchmark() {
        let c = ExperimentConfig::default();
        c.validate_sweep().unwrap();
        assert_eq!((c.n, c.burn_in), (10_000, 10_000));
        assert_eq!(c.sweep_s_values(), vec![1]);
        assert_eq!(c.compare_s_values(), vec![1, 2, 3]);
    }

    #[test]
    fn normalization_formulas() {
        assert_abs_diff_eq!(
            Denominator::Comparison.normalize(110.0, 100.0),
            9.090_909_09,
            epsilon = 1e-8
        );
        assert_eq!(Denominator::Comparison.normalize(100.0, 100.0), 0.0);
        assert!(Denominator::Comparison.normalize(90.0, 100.0) < 0.0);
        assert_abs_diff_eq!(
            Denominator::Ubss.normalize(110.0, 100.0),
            10.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn grid_includes_endpoints() {
        let g = theta_grid(5);
        assert_eq!(g.len(), 5);
        assert_eq!(g[0], 0.0);
        assert_abs_diff_eq!(g[4], 2.0 * PI, epsilon = 1e-15);
    }

    #[test]
    fn overrides_win() {
        let mut c = ExperimentConfig {
            theta_grid: Some(vec![1.0]),
            ..Default::default()
        };
        c.apply(&Overrides {
            theta_steps: Some(4),
            reps: Some(3),
            algorithms: vec![Algo::Ubss],
            s_values: vec![2],
            ..Default::default()
        });
        assert_eq!(c.grid().len(), 4);
        assert_eq!(c.reps, 3);
        assert_eq!(c.algorithms, vec![Algo::Ubss]);
        assert_eq!(c.compare_s_values(), vec![2]);
    }

    #[test]
    fn validation_messages() {
        let bad = ExperimentConfig {
            n: 1,
            ..Default::default()
        };
        assert!(bad.validate().unwrap_err().to_string().contains("horizon"));
        let bad = ExperimentConfig {
            reps: 0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = ExperimentConfig {
            delta: 1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = ExperimentConfig {
            algorithms: vec![Algo::Ucb],
            ..Default::default()
        };
        assert!(bad.validate().is_ok());
        assert!(bad.validate_sweep().is_err());
    }
}
