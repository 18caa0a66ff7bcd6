//! Comparison policies: UCB1, sliding-window UCB and uniform random play.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::math::{ln, sqrt};
use crate::stats::RunningStats;
use crate::ubss::argmax_random_tie;

/// UCB1 with exploration scale `alpha`.
#[derive(Debug, Clone, PartialEq)]
pub struct Ucb {
    pub counts: Vec<u64>,
    pub sums: Vec<f64>,
    pub t: u64,
    pub alpha: f64,
}

impl Ucb {
    pub fn new(k: usize, alpha: f64) -> Self {
        Ucb {
            counts: vec![0; k],
            sums: vec![0.0; k],
            t: 0,
            alpha,
        }
    }

    /// Index scores; `None` while some action is unplayed.
    pub fn scores(&self) -> Option<Vec<f64>> {
        if self.counts.contains(&0) {
            return None;
        }
        let lt = ln(self.t as f64);
        Some(
            self.counts
                .iter()
                .zip(&self.sums)
                .map(|(&n, &s)| s / n as f64 + self.alpha * sqrt(2.0 * lt / n as f64))
                .collect(),
        )
    }

    /// Plays every action once in index order, then the highest score.
    pub fn select<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        if let Some(a) = self.counts.iter().position(|&n| n == 0) {
            return a;
        }
        argmax_random_tie(&self.scores().expect("all played"), rng)
    }

    pub fn observe(&mut self, action: usize, reward: f64) {
        self.counts[action] += 1;
        self.sums[action] += reward;
        self.t += 1;
    }
}

/// Bonus scale for the sliding-window policy.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum BonusScale {
    Fixed(f64),
    /// Standard deviation of all rewards seen so far (1 before two arrive).
    RunningStd,
}

/// Sliding-window UCB over the last `tau` rounds (`None` = unbounded).
#[derive(Debug, Clone, PartialEq)]
pub struct SwUcb {
    window: VecDeque<(usize, f64)>,
    counts: Vec<u64>,
    sums: Vec<f64>,
    pub tau: Option<usize>,
    pub xi_exp: f64,
    pub b_scale: BonusScale,
    reward_stats: RunningStats,
    pub t: u64,
}

impl SwUcb {
    pub fn new(k: usize, tau: Option<usize>, xi_exp: f64, b_scale: BonusScale) -> Self {
        SwUcb {
            window: VecDeque::with_capacity(tau.unwrap_or(0).min(1 << 16)),
            counts: vec![0; k],
            sums: vec![0.0; k],
            tau,
            xi_exp,
            b_scale,
            reward_stats: RunningStats::new(),
            t: 0,
        }
    }

    pub fn window(&self) -> &VecDeque<(usize, f64)> {
        &self.window
    }

    pub fn window_counts(&self) -> &[u64] {
        &self.counts
    }

    fn scale(&self) -> f64 {
        match self.b_scale {
            BonusScale::Fixed(b) => b,
            BonusScale::RunningStd if self.reward_stats.count() < 2 => 1.0,
            BonusScale::RunningStd => self.reward_stats.std_dev(),
        }
    }

    /// Index scores; `None` while some action is absent from the window.
    pub fn scores(&self) -> Option<Vec<f64>> {
        if self.counts.contains(&0) {
            return None;
        }
        let horizon = match self.tau {
            Some(tau) => self.t.min(tau as u64),
            None => self.t,
        };
        let lt = ln(horizon as f64);
        let b = self.scale();
        Some(
            self.counts
                .iter()
                .zip(&self.sums)
                .map(|(&n, &s)| s / n as f64 + b * sqrt(self.xi_exp * lt / n as f64))
                .collect(),
        )
    }

    pub fn select<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        if let Some(a) = self.counts.iter().position(|&n| n == 0) {
            return a;
        }
        argmax_random_tie(&self.scores().expect("all in window"), rng)
    }

    pub fn observe(&mut self, action: usize, reward: f64) {
        if let Some(tau) = self.tau {
            if self.window.len() == tau {
                let (old_a, old_r) = self.window.pop_front().expect("non-empty");
                self.counts[old_a] -= 1;
                self.sums[old_a] -= old_r;
                if self.counts[old_a] == 0 {
                    self.sums[old_a] = 0.0;
                }
            }
            self.window.push_back((action, reward));
        }
        self.counts[action] += 1;
        self.sums[action] += reward;
        self.reward_stats.push(reward);
        self.t += 1;
    }
}

/// Uniform choice among `k` actions.
pub fn random_select<R: Rng + ?Sized>(k: usize, rng: &mut R) -> usize {
    rng.random_range(0..k)
}
