//! Regret sweeps over θ and window length, and the diagnostic curves.
//!
//! Every (system, replication) pair gets its own environment seed, shared by
//! all policies and window lengths, so comparisons are paired. Results do not
//! depend on the number of worker threads.

use lgbandit_core::baseline::BonusScale;
use lgbandit_core::env::{make_rotation_lgds, observability_gramian, LgdsParams};
use lgbandit_core::episode::{run_episode, InitMode, PolicySpec};
use lgbandit_core::filter::ModifiedKalman;
use lgbandit_core::linalg::min_eig_sym;
use lgbandit_core::seed::{env_seed, label_id, policy_seed};
use lgbandit_core::stats::mean_se;
use lgbandit_core::verify::default_bounds;
use lgbandit_core::{Matrix, Result};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{Algo, Denominator, ExperimentConfig};

/// One line of `sweep.csv`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub theta: f64,
    pub algorithm: String,
    pub s: usize,
    pub mean_regret: f64,
    pub std_err: f64,
    pub normalized_vs_ubss_pct: f64,
}

/// Final cumulative regrets of one policy on one system, one per replication.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub theta: f64,
    pub algorithm: String,
    pub s: usize,
    pub finals: Vec<f64>,
}

impl Cell {
    pub fn mean_se(&self) -> (f64, f64) {
        mean_se(&self.finals)
    }
}

/// Learner configuration for one system: bounds derived from the true system
/// unless overridden.
pub fn ubss_spec(params: &LgdsParams, cfg: &ExperimentConfig, s: usize) -> Result<PolicySpec> {
    let mk = ModifiedKalman::new(params, cfg.p_bar_fallback)?;
    let b = default_bounds(params, &mk, s)?;
    Ok(PolicySpec::Ubss(lgbandit_core::ubss::UbssConfig {
        s,
        lambda: cfg.lambda,
        delta_e: cfg.delta,
        delta_b: cfg.delta,
        b_r: cfg.b_r.unwrap_or(b.b_r),
        b_g: cfg.b_g.unwrap_or(b.b_g),
        b_c: cfg.b_c.unwrap_or(b.b_c),
        force_explore_unseen: cfg.force_explore_unseen,
    }))
}

pub fn policy_spec(
    params: &LgdsParams,
    cfg: &ExperimentConfig,
    algo: Algo,
    s: usize,
) -> Result<PolicySpec> {
    Ok(match algo {
        Algo::Ubss => ubss_spec(params, cfg, s)?,
        Algo::Ucb => PolicySpec::Ucb { alpha: cfg.alpha },
        Algo::SwUcb => PolicySpec::SwUcb {
            tau: cfg.tau_opt(),
            xi_exp: cfg.xi_exp,
            b_scale: cfg
                .b_scale
                .map_or(BonusScale::RunningStd, BonusScale::Fixed),
        },
        Algo::Random => PolicySpec::Random,
    })
}

fn label(spec: &PolicySpec) -> String {
    spec.label().to_owned()
}

/// Seeds for one run; the policy seed also depends on the window length so
/// that learners with different `s` draw independent tie-breaks.
fn seeds(cfg: &ExperimentConfig, theta_idx: usize, rep: usize, spec: &PolicySpec) -> (u64, u64) {
    let env = env_seed(cfg.seed, theta_idx as u64, rep as u64);
    let tag = label_id(&spec.display_name());
    (
        env,
        policy_seed(cfg.seed, theta_idx as u64, rep as u64, tag),
    )
}

/// Runs every (spec, replication) pair on one system; returns the final
/// regrets per spec.
fn run_specs(
    params: &LgdsParams,
    specs: &[PolicySpec],
    cfg: &ExperimentConfig,
    theta_idx: usize,
) -> Result<Vec<Vec<f64>>> {
    let init = InitMode::BurnIn(cfg.burn_in);
    let jobs: Vec<(usize, usize)> = (0..specs.len())
        .flat_map(|i| (0..cfg.reps).map(move |r| (i, r)))
        .collect();
    let finals: Vec<f64> = jobs
        .par_iter()
        .map(|&(i, rep)| {
            let (e, p) = seeds(cfg, theta_idx, rep, &specs[i]);
            run_episode(params, &specs[i], cfg.n, init, e, p).map(|ep| ep.final_regret())
        })
        .collect::<Result<_>>()?;
    Ok(finals.chunks(cfg.reps).map(<[f64]>::to_vec).collect())
}

/// Regret of every configured policy at every θ of the grid.
pub fn theta_sweep(cfg: &ExperimentConfig) -> Result<Vec<Cell>> {
    let mut cells = Vec::new();
    let s_values = cfg.sweep_s_values();
    for (idx, theta) in cfg.grid().into_iter().enumerate() {
        let params = make_rotation_lgds(theta);
        let mut specs = Vec::new();
        for &algo in &cfg.algorithms {
            if algo == Algo::Ubss {
                for &s in &s_values {
                    specs.push(policy_spec(&params, cfg, algo, s)?);
                }
            } else {
                specs.push(policy_spec(&params, cfg, algo, 1)?);
            }
        }
        let finals = run_specs(&params, &specs, cfg, idx)?;
        for (spec, finals) in specs.iter().zip(finals) {
            cells.push(Cell {
                theta,
                algorithm: label(spec),
                s: spec.window().unwrap_or(0),
                finals,
            });
        }
    }
    Ok(cells)
}

/// Learner regret for each window length on one system.
pub fn s_comparison(params: &LgdsParams, theta: f64, cfg: &ExperimentConfig) -> Result<Vec<Cell>> {
    let specs: Vec<PolicySpec> = cfg
        .compare_s_values()
        .into_iter()
        .map(|s| ubss_spec(params, cfg, s))
        .collect::<Result<_>>()?;
    let finals = run_specs(params, &specs, cfg, 0)?;
    Ok(specs
        .iter()
        .zip(finals)
        .map(|(spec, finals)| Cell {
            theta,
            algorithm: label(spec),
            s: spec.window().unwrap_or(0),
            finals,
        })
        .collect())
}

/// Table rows. Non-learner rows are normalized against the learner with the
/// smallest window at the same θ; learner rows against themselves (zero).
pub fn rows(cells: &[Cell], denom: Denominator) -> Vec<SweepRow> {
    cells
        .iter()
        .map(|c| {
            let (mean, se) = c.mean_se();
            let reference = cells
                .iter()
                .filter(|o| o.theta == c.theta && o.algorithm == "UBSS")
                .min_by_key(|o| o.s);
            let normalized = match reference {
                Some(r) => denom.normalize(mean, r.mean_se().0),
                None => f64::NAN,
            };
            SweepRow {
                theta: c.theta,
                algorithm: c.algorithm.clone(),
                s: c.s,
                mean_regret: mean,
                std_err: se,
                normalized_vs_ubss_pct: normalized,
            }
        })
        .collect()
}

/// One line of `diagnostics.csv`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticsRow {
    pub theta: f64,
    pub min_gramian_eig: f64,
    pub eig_real_part: f64,
}

/// Extra detail not written to the CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostics {
    pub row: DiagnosticsRow,
    /// Worst relative residual of the Gramian equation over actions.
    pub gramian_residual: f64,
}

/// Real part of the dominant eigenvalue pair of the leading 2×2 block.
/// The rotation systems are block triangular, so that block carries the
/// rotating mode.
pub fn leading_block_real_part(gamma: &Matrix) -> f64 {
    let (a, b, c, d) = (gamma[(0, 0)], gamma[(0, 1)], gamma[(1, 0)], gamma[(1, 1)]);
    let half_trace = 0.5 * (a + d);
    let disc = 0.25 * (a - d) * (a - d) + b * c;
    if disc <= 0.0 {
        half_trace
    } else {
        let r = disc.sqrt();
        if half_trace >= 0.0 {
            half_trace + r
        } else {
            half_trace - r
        }
    }
}

/// `max|ΓᵀWΓ + ccᵀ − W| / max(1, max|W|)` for the observability Gramian `W`.
fn gramian_residual(params: &LgdsParams, a: usize, w: &Matrix) -> Result<f64> {
    let c = params.action(a)?;
    let g = &params.gamma;
    let lhs = &(&(&g.transpose() * w) * g) + &c.outer(c);
    let diff = &lhs - w;
    Ok(diff.max_abs() / w.max_abs().max(1.0))
}

/// Smallest Gramian eigenvalue over actions and the leading eigenvalue real
/// part for every θ.
pub fn diagnostics_curves(grid: &[f64]) -> Result<Vec<Diagnostics>> {
    grid.iter()
        .map(|&theta| {
            let params = make_rotation_lgds(theta);
            let mut min_eig = f64::INFINITY;
            let mut residual: f64 = 0.0;
            for a in 0..params.k() {
                let w = observability_gramian(&params, a)?;
                min_eig = min_eig.min(min_eig_sym(&w)?);
                residual = residual.max(gramian_residual(&params, a, &w)?);
            }
            Ok(Diagnostics {
                row: DiagnosticsRow {
                    theta,
                    min_gramian_eig: min_eig,
                    eig_real_part: leading_block_real_part(&params.gamma),
                },
                gramian_residual: residual,
            })
        })
        .collect()
}
