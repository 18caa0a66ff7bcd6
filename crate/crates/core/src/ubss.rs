//! Optimistic least-squares learner over reward windows.
//!
//! For every code (the tuple of the last `s` actions) and every candidate
//! action the agent keeps a ridge regression of the reward on the previous
//! `s` rewards, and plays the action with the highest optimistic prediction.

use alloc::collections::{BTreeMap, VecDeque};
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::sherman_morrison_update;
use crate::math::{ln, sqrt};
use crate::matrix::{Matrix, Vector};

/// The last `s` actions, oldest first.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(transparent))]
pub struct Code(Vec<usize>);

impl Code {
    pub fn new(indices: Vec<usize>, s: usize, k: usize) -> Result<Self> {
        if indices.len() != s {
            return Err(Error::dims("code length", s, indices.len()));
        }
        if let Some(&bad) = indices.iter().find(|&&a| a >= k) {
            return Err(Error::BadActionIndex { index: bad, k });
        }
        Ok(Code(indices))
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Running ridge-regression state for one (code, action) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionEntry {
    pub n: u64,
    pub v_inv: Matrix,
    pub log_det_v: f64,
    pub s_vec: Vector,
    pub g_hat: Vector,
}

impl RegressionEntry {
    /// Empty entry: `V = λI`.
    pub fn new(s: usize, lambda: f64) -> Self {
        RegressionEntry {
            n: 0,
            v_inv: Matrix::scaled_identity(s, 1.0 / lambda),
            log_det_v: s as f64 * ln(lambda),
            s_vec: Vector::zeros(s),
            g_hat: Vector::zeros(s),
        }
    }

    /// Adds one `(xi, reward)` observation.
    pub fn update(&mut self, xi: &Vector, reward: f64) {
        self.n += 1;
        let (v_inv, dl) = sherman_morrison_update(&self.v_inv, xi);
        self.v_inv = v_inv;
        self.log_det_v += dl;
        self.s_vec.axpy(reward, xi);
        self.g_hat = self.v_inv.mul_vec(&self.s_vec);
    }

    /// `sqrt(ξᵀ V⁻¹ ξ)`.
    pub fn width(&self, xi: &Vector) -> f64 {
        sqrt(self.v_inv.quad_form(xi, xi).max(0.0))
    }
}

/// Learner hyperparameters.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct UbssConfig {
    pub s: usize,
    pub lambda: f64,
    pub delta_e: f64,
    pub delta_b: f64,
    pub b_r: f64,
    pub b_g: f64,
    pub b_c: f64,
    pub force_explore_unseen: bool,
}

impl UbssConfig {
    pub fn validate(&self) -> Result<()> {
        if self.s == 0 {
            return Err(Error::param("s", "window length must be at least 1"));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::param("lambda", "must be positive"));
        }
        for (name, d) in [("delta_e", self.delta_e), ("delta_b", self.delta_b)] {
            if !(d > 0.0 && d < 1.0) {
                return Err(Error::param(name, "must lie in (0, 1)"));
            }
        }
        for (name, b) in [("b_r", self.b_r), ("b_g", self.b_g), ("b_c", self.b_c)] {
            if !(b > 0.0 && b.is_finite()) {
                return Err(Error::param(name, "must be positive"));
            }
        }
        Ok(())
    }
}

/// Self-normalized noise radius `e`.
pub fn bonus_e(entry: &RegressionEntry, cfg: &UbssConfig) -> f64 {
    let s = entry.s_vec.len() as f64;
    let log_ratio = 0.5 * (entry.log_det_v - s * ln(cfg.lambda));
    let arg = 2.0 * cfg.b_r * cfg.b_r * (ln(1.0 / cfg.delta_e) + log_ratio);
    sqrt(arg.max(0.0))
}

/// Truncation-bias and regularization radius `b`.
pub fn bonus_b(entry: &RegressionEntry, cfg: &UbssConfig) -> f64 {
    let s = entry.s_vec.len();
    let tr_v_inv = entry.v_inv.trace();
    let resid_trace = (s as f64 - cfg.lambda * tr_v_inv).max(0.0);
    let bias = sqrt(entry.n as f64) * (cfg.b_c * cfg.b_r / cfg.delta_b) * sqrt(resid_trace);
    let reg = cfg.lambda * sqrt(tr_v_inv.max(0.0)) * cfg.b_g;
    bias + reg
}

/// Optimistic prediction `ĝᵀξ + (e + b)·sqrt(ξᵀV⁻¹ξ)`.
pub fn ucb_score(entry: &RegressionEntry, cfg: &UbssConfig, xi: &Vector) -> f64 {
    entry.g_hat.dot(xi) + (bonus_e(entry, cfg) + bonus_b(entry, cfg)) * entry.width(xi)
}

/// Oldest-first vector of the last `s` rewards.
pub fn feature_vector(history: &[f64], s: usize) -> Result<Vector> {
    if history.len() < s {
        return Err(Error::InsufficientHistory {
            needed: s,
            have: history.len(),
        });
    }
    Ok(Vector::from_slice(&history[history.len() - s..]))
}

/// Index of a maximal score, ties broken uniformly at random.
pub fn argmax_random_tie<R: Rng + ?Sized>(scores: &[f64], rng: &mut R) -> usize {
    let mut best = f64::NEG_INFINITY;
    let mut chosen = 0;
    let mut ties = 0u32;
    for (i, &x) in scores.iter().enumerate() {
        if x > best {
            best = x;
            chosen = i;
            ties = 1;
        } else if x == best {
            ties += 1;
            if rng.random_range(0..ties) == 0 {
                chosen = i;
            }
        }
    }
    chosen
}

/// The learning agent.
#[derive(Debug, Clone)]
pub struct UbssAgent {
    cfg: UbssConfig,
    k: usize,
    entries: BTreeMap<(Code, usize), RegressionEntry>,
    rewards: VecDeque<f64>,
    actions: VecDeque<usize>,
    t: u64,
}

impl UbssAgent {
    pub fn new(cfg: UbssConfig, k: usize) -> Result<Self> {
        cfg.validate()?;
        if k < 2 {
            return Err(Error::param("k", "need at least two actions"));
        }
        Ok(UbssAgent {
            k,
            entries: BTreeMap::new(),
            rewards: VecDeque::with_capacity(cfg.s + 1),
            actions: VecDeque::with_capacity(cfg.s + 1),
            t: 0,
            cfg,
        })
    }

    pub fn config(&self) -> &UbssConfig {
        &self.cfg
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Rounds observed so far.
    pub fn rounds(&self) -> u64 {
        self.t
    }

    pub fn entries(&self) -> impl Iterator<Item = (&Code, usize, &RegressionEntry)> {
        self.entries.iter().map(|((c, a), e)| (c, *a, e))
    }

    pub fn entry(&self, code: &Code, action: usize) -> Option<&RegressionEntry> {
        self.entries.get(&(code.clone(), action))
    }

    pub fn entry_count(&self) -> usize {
        self.entries.len()
    }

    /// The code formed by the last `s` actions, once enough rounds have passed.
    pub fn current_code(&self) -> Option<Code> {
        (self.actions.len() == self.cfg.s).then(|| Code(self.actions.iter().copied().collect()))
    }

    /// The current feature vector, once enough rounds have passed.
    pub fn current_xi(&self) -> Option<Vector> {
        (self.rewards.len() == self.cfg.s)
            .then(|| Vector::from_slice(&self.rewards.iter().copied().collect::<Vec<_>>()))
    }

    fn score(&self, code: &Code, action: usize, xi: &Vector) -> (bool, f64) {
        match self.entries.get(&(code.clone(), action)) {
            Some(e) => (e.n == 0, ucb_score(e, &self.cfg, xi)),
            None => {
                let e = RegressionEntry::new(self.cfg.s, self.cfg.lambda);
                (true, ucb_score(&e, &self.cfg, xi))
            }
        }
    }

    /// Optimistic choice for a given code and feature vector.
    pub fn select_action<R: Rng + ?Sized>(&self, code: &Code, xi: &Vector, rng: &mut R) -> usize {
        let scored: Vec<(bool, f64)> = (0..self.k).map(|a| self.score(code, a, xi)).collect();
        if self.cfg.force_explore_unseen {
            let unseen: Vec<usize> = (0..self.k).filter(|&a| scored[a].0).collect();
            if !unseen.is_empty() {
                return unseen[rng.random_range(0..unseen.len())];
            }
        }
        let scores: Vec<f64> = scored.iter().map(|s| s.1).collect();
        argmax_random_tie(&scores, rng)
    }

    /// Folds one observation into the `(code, action)` regression.
    pub fn update(&mut self, code: &Code, action: usize, xi: &Vector, reward: f64) {
        let (s, lambda) = (self.cfg.s, self.cfg.lambda);
        self.entries
            .entry((code.clone(), action))
            .or_insert_with(|| RegressionEntry::new(s, lambda))
            .update(xi, reward);
    }

    /// Chooses the next action: uniform while fewer than `s` rounds have
    /// been seen, optimistic afterwards.
    pub fn act<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        match (self.current_code(), self.current_xi()) {
            (Some(code), Some(xi)) => self.select_action(&code, &xi, rng),
            _ => rng.random_range(0..self.k),
        }
    }

    /// Records the outcome of a round. Regression updates start once a full
    /// code precedes the round.
    pub fn observe(&mut self, action: usize, reward: f64) {
        if let (Some(code), Some(xi)) = (self.current_code(), self.current_xi()) {
            self.update(&code, action, &xi, reward);
        }
        if self.rewards.len() == self.cfg.s {
            self.rewards.pop_front();
            self.actions.pop_front();
        }
        self.rewards.push_back(reward);
        self.actions.push_back(action);
        self.t += 1;
    }

    /// Compact per-entry view for inspection.
    pub fn dump(&self) -> AgentDump {
        AgentDump {
            s: self.cfg.s,
            k: self.k,
            rounds: self.t,
            entries: self
                .entries
                .iter()
                .map(|((code, action), e)| EntryDump {
                    code: code.clone(),
                    action: *action,
                    n: e.n,
                    g_hat: e.g_hat.clone(),
                    log_det_v: e.log_det_v,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct EntryDump {
    pub code: Code,
    pub action: usize,
    pub n: u64,
    pub g_hat: Vector,
    pub log_det_v: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct AgentDump {
    pub s: usize,
    pub k: usize,
    pub rounds: u64,
    pub entries: Vec<EntryDump>,
}
