//! Running one policy against one reward system.

use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;

use crate::baseline::{random_select, BonusScale, SwUcb, Ucb};
use crate::env::{
    init_stationary, init_steady_state, instantaneous_regret, step, EnvState, LgdsParams,
};
use crate::error::{Error, Result};
use crate::seed::rng_from;
use crate::ubss::{UbssAgent, UbssConfig};

/// Anything that picks an action and learns from the reward.
pub trait Policy {
    fn select(&mut self, rng: &mut ChaCha8Rng) -> usize;
    fn observe(&mut self, action: usize, reward: f64);
}

impl Policy for UbssAgent {
    fn select(&mut self, rng: &mut ChaCha8Rng) -> usize {
        self.act(rng)
    }
    fn observe(&mut self, action: usize, reward: f64) {
        UbssAgent::observe(self, action, reward)
    }
}

impl Policy for Ucb {
    fn select(&mut self, rng: &mut ChaCha8Rng) -> usize {
        Ucb::select(self, rng)
    }
    fn observe(&mut self, action: usize, reward: f64) {
        Ucb::observe(self, action, reward)
    }
}

impl Policy for SwUcb {
    fn select(&mut self, rng: &mut ChaCha8Rng) -> usize {
        SwUcb::select(self, rng)
    }
    fn observe(&mut self, action: usize, reward: f64) {
        SwUcb::observe(self, action, reward)
    }
}

/// Uniform play.
#[derive(Debug, Clone, Copy)]
pub struct RandomPolicy {
    pub k: usize,
}

impl Policy for RandomPolicy {
    fn select(&mut self, rng: &mut ChaCha8Rng) -> usize {
        random_select(self.k, rng)
    }
    fn observe(&mut self, _: usize, _: f64) {}
}

/// Plays a fixed action pattern cyclically.
#[derive(Debug, Clone)]
pub struct CyclicPolicy {
    pattern: Vec<usize>,
    t: usize,
}

impl CyclicPolicy {
    pub fn new(pattern: Vec<usize>) -> Result<Self> {
        if pattern.is_empty() {
            return Err(Error::param("pattern", "must not be empty"));
        }
        Ok(CyclicPolicy { pattern, t: 0 })
    }
}

impl Policy for CyclicPolicy {
    fn select(&mut self, _: &mut ChaCha8Rng) -> usize {
        self.pattern[self.t % self.pattern.len()]
    }
    fn observe(&mut self, _: usize, _: f64) {
        self.t += 1;
    }
}

/// A policy together with its parameters.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "kebab-case"))]
pub enum PolicySpec {
    Ubss(UbssConfig),
    Ucb {
        alpha: f64,
    },
    SwUcb {
        /// Window length; `None` keeps every observation.
        tau: Option<usize>,
        xi_exp: f64,
        b_scale: BonusScale,
    },
    Random,
}

impl PolicySpec {
    /// Name used in output tables and for seeding.
    pub fn label(&self) -> &'static str {
        match self {
            PolicySpec::Ubss(_) => "UBSS",
            PolicySpec::Ucb { .. } => "UCB",
            PolicySpec::SwUcb { .. } => "SW-UCB",
            PolicySpec::Random => "Random",
        }
    }

    /// Window length for the learner, if this is one.
    pub fn window(&self) -> Option<usize> {
        match self {
            PolicySpec::Ubss(c) => Some(c.s),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            PolicySpec::Ubss(c) => c.validate(),
            PolicySpec::Ucb { alpha } if !(*alpha >= 0.0 && alpha.is_finite()) => {
                Err(Error::param("alpha", "must be non-negative"))
            }
            PolicySpec::SwUcb { tau: Some(0), .. } => Err(Error::param("tau", "must be positive")),
            PolicySpec::SwUcb { xi_exp, .. } if !(*xi_exp > 0.0 && xi_exp.is_finite()) => {
                Err(Error::param("xi_exp", "must be positive"))
            }
            PolicySpec::SwUcb {
                b_scale: BonusScale::Fixed(b),
                ..
            } if !(*b >= 0.0 && b.is_finite()) => {
                Err(Error::param("b_scale", "must be non-negative"))
            }
            _ => Ok(()),
        }
    }

    pub fn build(&self, k: usize) -> Result<Box<dyn Policy>> {
        self.validate()?;
        if k < 2 {
            return Err(Error::param("k", "need at least two actions"));
        }
        Ok(match self {
            PolicySpec::Ubss(c) => Box::new(UbssAgent::new(c.clone(), k)?),
            PolicySpec::Ucb { alpha } => Box::new(Ucb::new(k, *alpha)),
            PolicySpec::SwUcb {
                tau,
                xi_exp,
                b_scale,
            } => Box::new(SwUcb::new(k, *tau, *xi_exp, *b_scale)),
            PolicySpec::Random => Box::new(RandomPolicy { k }),
        })
    }

    /// Label with the window length appended for the learner.
    pub fn display_name(&self) -> String {
        match self {
            PolicySpec::Ubss(c) => alloc::format!("UBSS(s={})", c.s),
            other => String::from(other.label()),
        }
    }
}

/// How the state is brought to steady state before round 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum InitMode {
    /// Start at zero and apply this many transitions.
    BurnIn(usize),
    /// Sample directly from the stationary law (stable systems only).
    Stationary,
}

pub fn init_env(params: &LgdsParams, init: InitMode, env_seed: u64) -> Result<EnvState> {
    let rng = rng_from(env_seed);
    match init {
        InitMode::BurnIn(b) => Ok(init_steady_state(params, b, rng)),
        InitMode::Stationary => init_stationary(params, rng),
    }
}

/// Per-round record of an episode.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Episode {
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
    pub best_actions: Vec<usize>,
    pub regret: Vec<f64>,
    pub cumulative_regret: Vec<f64>,
}

impl Episode {
    pub fn final_regret(&self) -> f64 {
        self.cumulative_regret.last().copied().unwrap_or(0.0)
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

/// Plays `n` rounds of `policy` against an already initialized system.
pub fn play(
    params: &LgdsParams,
    policy: &mut dyn Policy,
    env: &mut EnvState,
    policy_rng: &mut ChaCha8Rng,
    n: usize,
) -> Result<Episode> {
    let mut ep = Episode {
        actions: Vec::with_capacity(n),
        rewards: Vec::with_capacity(n),
        best_actions: Vec::with_capacity(n),
        regret: Vec::with_capacity(n),
        cumulative_regret: Vec::with_capacity(n),
    };
    let mut total = 0.0;
    for _ in 0..n {
        let a = policy.select(policy_rng);
        let o = step(env, params, a)?;
        policy.observe(a, o.reward);
        let r = instantaneous_regret(&o);
        total += r;
        ep.actions.push(a);
        ep.rewards.push(o.reward);
        ep.best_actions.push(o.best_action);
        ep.regret.push(r);
        ep.cumulative_regret.push(total);
    }
    Ok(ep)
}

/// One full episode from seeds. The environment stream depends only on
/// `env_seed`, so every policy sees the same state and noise trajectory.
pub fn run_episode(
    params: &LgdsParams,
    spec: &PolicySpec,
    n: usize,
    init: InitMode,
    env_seed: u64,
    policy_seed: u64,
) -> Result<Episode> {
    let mut policy = spec.build(params.k())?;
    let mut env = init_env(params, init, env_seed)?;
    play(
        params,
        policy.as_mut(),
        &mut env,
        &mut rng_from(policy_seed),
        n,
    )
}
