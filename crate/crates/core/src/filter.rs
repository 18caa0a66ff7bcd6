//! Optimal Kalman prediction and the fixed-gain filter built from a single
//! common covariance `P̄`.
//!
//! The fixed-gain filter makes each reward an exact linear function of the
//! previous `s` rewards plus a geometrically decaying remainder, which is what
//! lets the learner identify per-code weight vectors by least squares.

use alloc::vec::Vec;

use crate::env::{stationary_covariance, LgdsParams};
use crate::error::{Error, Result};
use crate::linalg::{self, riccati_step_unchecked, DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::math::sqrt;
use crate::matrix::{Matrix, Vector};

/// Tolerance used when deciding that one steady-state covariance dominates.
pub const DOMINANCE_TOL: f64 = 1e-8;

/// One-step Kalman predictor.
#[derive(Debug, Clone, PartialEq)]
pub struct KalmanState {
    pub z_hat: Vector,
    pub p: Matrix,
}

impl KalmanState {
    pub fn new(z_hat: Vector, p: Matrix) -> Self {
        KalmanState { z_hat, p }
    }

    /// Predicts the reward of `action`, then folds in the observed `reward`.
    /// Returns the prediction made before the update.
    pub fn update(&mut self, params: &LgdsParams, action: usize, reward: f64) -> Result<f64> {
        let c = params.action(action)?;
        let prediction = c.dot(&self.z_hat);
        let pc = self.p.mul_vec(c);
        let gain = pc.scale(1.0 / (c.dot(&pc) + params.noise_var));
        let mut corrected = self.z_hat.clone();
        corrected.axpy(reward - prediction, &gain);
        self.z_hat = params.gamma.mul_vec(&corrected);
        self.p = riccati_step_unchecked(&self.p, c, &params.gamma, &params.q, params.noise_var);
        Ok(prediction)
    }
}

/// Functional form of [`KalmanState::update`].
pub fn kalman_update(
    state: &KalmanState,
    params: &LgdsParams,
    action: usize,
    reward: f64,
) -> Result<(KalmanState, f64)> {
    let mut next = state.clone();
    let pred = next.update(params, action, reward)?;
    Ok((next, pred))
}

/// Steady-state filter covariance for every action.
pub fn steady_state_covariances(params: &LgdsParams) -> Result<Vec<Matrix>> {
    params
        .actions
        .iter()
        .map(|c| {
            linalg::steady_state_riccati(
                &params.gamma,
                &params.q,
                c,
                params.noise_var,
                DEFAULT_TOL,
                DEFAULT_MAX_ITER,
            )
        })
        .collect()
}

/// Index of a steady-state covariance that dominates all others, if any.
pub fn dominating_index(covs: &[Matrix]) -> Result<Option<usize>> {
    'outer: for (i, pi) in covs.iter().enumerate() {
        for (j, pj) in covs.iter().enumerate() {
            if i != j && !linalg::psd_geq(pi, pj, DOMINANCE_TOL)? {
                continue 'outer;
            }
        }
        return Ok(Some(i));
    }
    Ok(None)
}

/// The action whose steady-state covariance dominates every other one.
pub fn compute_p_bar(params: &LgdsParams) -> Result<(usize, Matrix)> {
    let mut covs = steady_state_covariances(params)?;
    match dominating_index(&covs)? {
        Some(i) => Ok((i, covs.swap_remove(i))),
        None => Err(Error::NoDominatingCovariance),
    }
}

/// What to do when no steady-state covariance dominates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum PBarFallback {
    /// Fail with [`Error::NoDominatingCovariance`].
    Strict,
    /// Use the stationary state covariance `Z = ΓZΓᵀ + Q`. Every Riccati step
    /// maps `Z` below itself, so `Z` dominates all reachable covariances and
    /// every closed loop built from it is stable.
    #[default]
    Stationary,
    /// Use the steady-state covariance with the largest trace. Not guaranteed
    /// to dominate; closed loops can be unstable.
    MaxTrace,
}

/// Where the common covariance came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(
    feature = "serde",
    serde(rename_all = "kebab-case", tag = "kind", content = "action")
)]
pub enum PBarSource {
    Dominating(usize),
    Stationary,
    MaxTrace(usize),
}

impl PBarSource {
    pub fn dominating_action(&self) -> Option<usize> {
        match *self {
            PBarSource::Dominating(a) => Some(a),
            _ => None,
        }
    }

    pub fn is_fallback(&self) -> bool {
        !matches!(self, PBarSource::Dominating(_))
    }
}

/// Chooses `P̄`, falling back per `fallback` when no action dominates.
pub fn choose_p_bar(params: &LgdsParams, fallback: PBarFallback) -> Result<(PBarSource, Matrix)> {
    let mut covs = steady_state_covariances(params)?;
    if let Some(i) = dominating_index(&covs)? {
        return Ok((PBarSource::Dominating(i), covs.swap_remove(i)));
    }
    match fallback {
        PBarFallback::Strict => Err(Error::NoDominatingCovariance),
        PBarFallback::Stationary => Ok((PBarSource::Stationary, stationary_covariance(params)?)),
        PBarFallback::MaxTrace => {
            let i = (0..covs.len())
                .max_by(|&a, &b| covs[a].trace().total_cmp(&covs[b].trace()))
                .expect("at least one action");
            Ok((PBarSource::MaxTrace(i), covs.swap_remove(i)))
        }
    }
}

/// Fixed-gain filter: `ẑ′ ← Γẑ′ + ΓL_a(X − ⟨c_a, ẑ′⟩)` with
/// `L_a = P̄c_a / (c_aᵀP̄c_a + σ²)`, plus the error-covariance iterate `P′`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModifiedKalman {
    pub p_bar: Matrix,
    pub source: PBarSource,
    pub gains: Vec<Vector>,
    pub z_hat: Vector,
    pub p_prime: Matrix,
    gamma_gains: Vec<Vector>,
    loops: Vec<Matrix>,
}

/// Output of one fixed-gain filter step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModifiedStep {
    pub prediction: f64,
    pub residual_var: f64,
}

impl ModifiedKalman {
    /// Builds the filter around an explicit `P̄`; starts at `ẑ′ = 0`, `P′ = P̄`.
    pub fn from_p_bar(params: &LgdsParams, p_bar: Matrix, source: PBarSource) -> Result<Self> {
        p_bar.check_same_shape(&params.gamma, "common covariance")?;
        let p_bar = p_bar.symmetrize();
        let mut gains = Vec::with_capacity(params.k());
        let mut gamma_gains = Vec::with_capacity(params.k());
        let mut loops = Vec::with_capacity(params.k());
        for c in &params.actions {
            let pc = p_bar.mul_vec(c);
            let l = pc.scale(1.0 / (c.dot(&pc) + params.noise_var));
            let gl = params.gamma.mul_vec(&l);
            loops.push(&params.gamma - &gl.outer(c));
            gains.push(l);
            gamma_gains.push(gl);
        }
        Ok(ModifiedKalman {
            z_hat: Vector::zeros(params.dim()),
            p_prime: p_bar.clone(),
            p_bar,
            source,
            gains,
            gamma_gains,
            loops,
        })
    }

    /// Builds the filter with `P̄` from [`choose_p_bar`].
    pub fn new(params: &LgdsParams, fallback: PBarFallback) -> Result<Self> {
        let (source, p_bar) = choose_p_bar(params, fallback)?;
        Self::from_p_bar(params, p_bar, source)
    }

    pub fn dominating_action(&self) -> Option<usize> {
        self.source.dominating_action()
    }

    /// Closed-loop matrix `Γ − ΓL_a c_aᵀ`.
    pub fn closed_loop(&self, action: usize) -> Result<&Matrix> {
        self.loops.get(action).ok_or(Error::BadActionIndex {
            index: action,
            k: self.loops.len(),
        })
    }

    /// Upper bound `c_aᵀP̄c_a + σ²` on the residual variance of `action`.
    pub fn residual_var_cap(&self, params: &LgdsParams, action: usize) -> Result<f64> {
        let c = params.action(action)?;
        Ok(self.p_bar.quad_form(c, c) + params.noise_var)
    }

    /// Predicts, reports the current residual variance, then updates.
    pub fn step(
        &mut self,
        params: &LgdsParams,
        action: usize,
        reward: f64,
    ) -> Result<ModifiedStep> {
        let c = params.action(action)?;
        let prediction = c.dot(&self.z_hat);
        let residual_var = self.p_prime.quad_form(c, c) + params.noise_var;
        let gl = &self.gamma_gains[action];
        let mut next = params.gamma.mul_vec(&self.z_hat);
        next.axpy(reward - prediction, gl);
        self.z_hat = next;
        let m = &self.loops[action];
        let mut p = &m.congruence(&self.p_prime) + &params.q;
        p = &p + &gl.outer(gl).scale(params.noise_var);
        self.p_prime = p.symmetrize();
        Ok(ModifiedStep {
            prediction,
            residual_var,
        })
    }

    /// Exact weight vector mapping the previous `code.len()` rewards
    /// (oldest first) to the fixed-gain prediction for `action`.
    ///
    /// Component `j` is `c_aᵀ M_{code[s-1]} ⋯ M_{code[j+1]} Γ L_{code[j]}`.
    pub fn true_g(&self, params: &LgdsParams, code: &[usize], action: usize) -> Result<Vector> {
        let c = params.action(action)?;
        for &a in code {
            params.action(a)?;
        }
        let s = code.len();
        let mut g = Vector::zeros(s);
        // row vector rᵀ = c_aᵀ M_{code[s-1]} ⋯ M_{code[j+1]}, built newest first
        let mut r = c.clone();
        for j in (0..s).rev() {
            g[j] = r.dot(&self.gamma_gains[code[j]]);
            r = self.loops[code[j]].vec_mul(&r);
        }
        Ok(g)
    }

    /// Spectral norm of `M_{code[s-1]} ⋯ M_{code[0]}` by power iteration on
    /// `ΠᵀΠ`. The empty product has norm 1.
    pub fn true_beta_decay(&self, code: &[usize]) -> Result<f64> {
        let d = self.p_bar.rows();
        let mut prod = Matrix::identity(d);
        for &a in code {
            prod = self.closed_loop(a)?.matmul(&prod);
        }
        Ok(spectral_norm(&prod))
    }
}

/// Functional form of [`ModifiedKalman::step`].
pub fn modified_step(
    mk: &ModifiedKalman,
    params: &LgdsParams,
    action: usize,
    reward: f64,
) -> Result<(ModifiedKalman, ModifiedStep)> {
    let mut next = mk.clone();
    let out = next.step(params, action, reward)?;
    Ok((next, out))
}

/// Largest singular value by power iteration on `mᵀm`.
pub fn spectral_norm(m: &Matrix) -> f64 {
    let gram = m.transpose().matmul(m);
    let n = gram.rows();
    let mut v = Vector::from_slice(&alloc::vec![1.0 / sqrt(n as f64); n]);
    let mut lambda = 0.0;
    for _ in 0..500 {
        let w = gram.mul_vec(&v);
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        let next = w.scale(1.0 / norm);
        let converged = (norm - lambda).abs() <= 1e-14 * norm;
        lambda = norm;
        v = next;
        if converged {
            break;
        }
    }
    sqrt(lambda)
}
