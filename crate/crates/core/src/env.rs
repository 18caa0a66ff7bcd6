//! The linear Gaussian reward system: state `z ← Γz + ξ`, reward
//! `X = ⟨c_a, z⟩ + η`, plus the rotation benchmark family.

use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{self, psd_factor, sample_with_factor, DEFAULT_TOL};
use crate::math::{cos, sin, sqrt};
use crate::matrix::{Matrix, Vector};

const NORM_SLACK: f64 = 1e-9;
const DOUBLING_BUDGET: usize = 200;

/// Full description of a reward system.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LgdsParams {
    pub gamma: Matrix,
    pub q: Matrix,
    pub noise_var: f64,
    pub actions: Vec<Vector>,
    pub b_c: f64,
}

impl LgdsParams {
    /// Builds and validates.
    pub fn new(
        gamma: Matrix,
        q: Matrix,
        noise_var: f64,
        actions: Vec<Vector>,
        b_c: f64,
    ) -> Result<Self> {
        let p = LgdsParams {
            gamma,
            q,
            noise_var,
            actions,
            b_c,
        };
        p.validate()?;
        Ok(p)
    }

    /// Checks shapes, finiteness, PSD noise and the action-norm bound.
    ///
    /// A single action is accepted here (the filters are well defined for it);
    /// bandit runs additionally require two or more.
    pub fn validate(&self) -> Result<()> {
        let d = self.gamma.check_square("state matrix")?;
        self.q
            .check_same_shape(&self.gamma, "process noise covariance")?;
        if !self.gamma.is_finite() || !self.q.is_finite() {
            return Err(Error::param("gamma/q", "entries must be finite"));
        }
        if !(self.noise_var > 0.0 && self.noise_var.is_finite()) {
            return Err(Error::param("noise_var", "must be positive and finite"));
        }
        if !(self.b_c > 0.0 && self.b_c.is_finite()) {
            return Err(Error::param("b_c", "must be positive and finite"));
        }
        if self.actions.is_empty() {
            return Err(Error::param("actions", "need at least one action"));
        }
        for c in &self.actions {
            if c.len() != d {
                return Err(Error::dims("action vector", d, c.len()));
            }
            if !c.is_finite() {
                return Err(Error::param("actions", "entries must be finite"));
            }
            if c.norm() > self.b_c * (1.0 + NORM_SLACK) {
                return Err(Error::param("actions", "action norm exceeds b_c"));
            }
        }
        if linalg::min_eig_sym(&self.q)? < -1e-9 * self.q.max_abs().max(1.0) {
            return Err(Error::param("q", "must be positive semidefinite"));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.gamma.rows()
    }

    pub fn k(&self) -> usize {
        self.actions.len()
    }

    pub fn action(&self, a: usize) -> Result<&Vector> {
        self.actions.get(a).ok_or(Error::BadActionIndex {
            index: a,
            k: self.k(),
        })
    }

    /// `true` when some eigenvalue of Γ lies outside the closed unit disc,
    /// judged by Schur stability of `Γ·(1 − 1e-9)`. Callers surface this as a
    /// warning only.
    pub fn exceeds_marginal_stability(&self) -> bool {
        !linalg::is_schur_stable(&self.gamma.scale(1.0 - 1e-9), DEFAULT_TOL, DOUBLING_BUDGET)
    }

    /// Per-action reward means `⟨c_a, z⟩`.
    pub fn means<'a>(&'a self, z: &'a Vector) -> impl Iterator<Item = f64> + 'a {
        self.actions.iter().map(move |c| c.dot(z))
    }
}

/// The 4-state rotation benchmark: `Γ = [[0.9R(θ), I], [0, 0.9R(θ)]]`,
/// `Q = I`, unit reward noise and two axis actions of length 10.
pub fn make_rotation_lgds(theta: f64) -> LgdsParams {
    let (c, s) = (0.9 * cos(theta), 0.9 * sin(theta));
    let gamma = Matrix::from_rows(&[
        [c, s, 1.0, 0.0],
        [-s, c, 0.0, 1.0],
        [0.0, 0.0, c, s],
        [0.0, 0.0, -s, c],
    ])
    .expect("fixed shape");
    LgdsParams {
        gamma,
        q: Matrix::identity(4),
        noise_var: 1.0,
        actions: alloc::vec![
            Vector::from_slice(&[10.0, 0.0, 0.0, 0.0]),
            Vector::from_slice(&[0.0, 10.0, 0.0, 0.0]),
        ],
        b_c: 10.0,
    }
}

/// Current state of a running system together with its private noise stream.
#[derive(Debug, Clone)]
pub struct EnvState {
    pub z: Vector,
    pub t: u64,
    rng: ChaCha8Rng,
    q_factor: Matrix,
    noise_sd: f64,
}

/// What one interaction round produced.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub reward: f64,
    pub best_mean: f64,
    pub best_action: usize,
    pub chosen_mean: f64,
}

impl EnvState {
    /// State `z` with no burn-in applied.
    pub fn with_state(params: &LgdsParams, z: Vector, rng: ChaCha8Rng) -> Result<Self> {
        if z.len() != params.dim() {
            return Err(Error::dims("initial state", params.dim(), z.len()));
        }
        Ok(EnvState {
            z,
            t: 0,
            rng,
            q_factor: psd_factor(&params.q),
            noise_sd: sqrt(params.noise_var),
        })
    }

    /// Advances the state one transition without producing a reward.
    pub fn transition(&mut self, params: &LgdsParams) {
        let gz = params.gamma.mul_vec(&self.z);
        self.z = sample_with_factor(&gz, &self.q_factor, &mut self.rng);
    }

    pub fn rng_mut(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}

/// Starts at `z = 0` and applies `burn_in` noisy transitions; `t` is 0 after.
pub fn init_steady_state(params: &LgdsParams, burn_in: usize, rng: ChaCha8Rng) -> EnvState {
    let mut st = EnvState::with_state(params, Vector::zeros(params.dim()), rng)
        .expect("zero state has the right dimension");
    for _ in 0..burn_in {
        st.transition(params);
    }
    st.t = 0;
    st
}

/// Draws `z₀` from the stationary law `N(0, Z)`; requires a Schur-stable Γ.
pub fn init_stationary(params: &LgdsParams, rng: ChaCha8Rng) -> Result<EnvState> {
    let z = stationary_covariance(params)?;
    let mut st = EnvState::with_state(params, Vector::zeros(params.dim()), rng)?;
    let f = psd_factor(&z);
    st.z = sample_with_factor(&Vector::zeros(params.dim()), &f, &mut st.rng);
    Ok(st)
}

/// Emits the reward for `action` at the current state, then transitions.
pub fn step(state: &mut EnvState, params: &LgdsParams, action: usize) -> Result<StepOutcome> {
    let c = params.action(action)?;
    let chosen_mean = c.dot(&state.z);
    let (best_action, best_mean) = best_of(params, &state.z);
    let eta: f64 = state.rng.sample(StandardNormal);
    let reward = chosen_mean + state.noise_sd * eta;
    state.transition(params);
    state.t += 1;
    Ok(StepOutcome {
        reward,
        best_mean,
        best_action,
        chosen_mean,
    })
}

pub(crate) fn best_of(params: &LgdsParams, z: &Vector) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (a, m) in params.means(z).enumerate() {
        if m > best.1 {
            best = (a, m);
        }
    }
    best
}

/// Noiseless gap between the best and the chosen action; the reward noise is
/// common to all actions and cancels.
pub fn instantaneous_regret(o: &StepOutcome) -> f64 {
    (o.best_mean - o.chosen_mean).max(0.0)
}

/// Solves `O = Γᵀ O Γ + c cᵀ` for the given action.
pub fn observability_gramian(params: &LgdsParams, action: usize) -> Result<Matrix> {
    let c = params.action(action)?;
    linalg::solve_discrete_lyapunov(&params.gamma, &c.outer(c), 1e-9, DOUBLING_BUDGET)
}

/// Stationary state covariance `Z = Γ Z Γᵀ + Q`.
pub fn stationary_covariance(params: &LgdsParams) -> Result<Matrix> {
    linalg::stationary_covariance(&params.gamma, &params.q)
}
