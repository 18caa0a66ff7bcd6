//! Empirical checks of the learner's probabilistic guarantees on systems
//! whose true weight vectors are known, plus evaluation of the regret bound.

use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::env::{stationary_covariance, step, LgdsParams};
use crate::episode::{init_env, CyclicPolicy, InitMode, Policy};
use crate::error::{Error, Result};
use crate::filter::ModifiedKalman;
use crate::linalg::{self, spd_inverse, DEFAULT_TOL};
use crate::math::{exp, ln, powi, sqrt};
use crate::matrix::{Matrix, Vector};
use crate::seed::{rng_from, trial_seed};
use crate::stats::{binomial_sd, RunningStats};
use crate::ubss::{bonus_b, bonus_e, Code, RegressionEntry, UbssConfig};

/// Number of binomial standard deviations tolerated below a nominal level.
pub const COVERAGE_SIGMAS: f64 = 3.0;

/// Known-constant bounds the learner needs.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Bounds {
    pub b_c: f64,
    pub b_r: f64,
    pub b_g: f64,
}

/// Bounds computed from the true system:
/// `B_c` from the parameters, `B_R = max(sqrt(tr Z), max_a sqrt(c_aᵀP̄c_a + σ²))`
/// and `B_G = max ‖G‖₂` over every code of length `s` and every action.
pub fn default_bounds(params: &LgdsParams, mk: &ModifiedKalman, s: usize) -> Result<Bounds> {
    let z = stationary_covariance(params)?;
    let mut b_r = sqrt(z.trace().max(0.0));
    for a in 0..params.k() {
        b_r = b_r.max(sqrt(mk.residual_var_cap(params, a)?));
    }
    let mut b_g: f64 = 0.0;
    for code in all_codes(params.k(), s) {
        for a in 0..params.k() {
            b_g = b_g.max(mk.true_g(params, &code, a)?.norm());
        }
    }
    Ok(Bounds {
        b_c: params.b_c,
        b_r,
        b_g: b_g.max(f64::MIN_POSITIVE),
    })
}

/// Every code of length `s` over `k` actions, in lexicographic order.
pub fn all_codes(k: usize, s: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for _ in 0..s {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                (0..k).map(move |a| {
                    let mut c = prefix.clone();
                    c.push(a);
                    c
                })
            })
            .collect();
    }
    out
}

/// Learner configuration with bounds derived from the true system.
pub fn default_ubss_config(
    params: &LgdsParams,
    mk: &ModifiedKalman,
    s: usize,
    lambda: f64,
    delta: f64,
) -> Result<UbssConfig> {
    let b = default_bounds(params, mk, s)?;
    Ok(UbssConfig {
        s,
        lambda,
        delta_e: delta,
        delta_b: delta,
        b_r: b.b_r,
        b_g: b.b_g,
        b_c: b.b_c,
        force_explore_unseen: true,
    })
}

/// Moments of the reward window `Ξ` with standard errors.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct XiStats {
    pub samples: u64,
    pub sigma_xi: Matrix,
    pub sigma_xi_se: Matrix,
    pub mean_norm: f64,
    pub mean_norm_se: f64,
}

#[derive(Clone)]
struct XiAccum {
    samples: u64,
    outer: Vec<RunningStats>,
    norm: RunningStats,
}

impl XiAccum {
    fn new(s: usize) -> Self {
        XiAccum {
            samples: 0,
            outer: vec![RunningStats::new(); s * s],
            norm: RunningStats::new(),
        }
    }

    fn push(&mut self, xi: &[f64]) {
        let s = xi.len();
        self.samples += 1;
        for i in 0..s {
            for j in 0..s {
                self.outer[i * s + j].push(xi[i] * xi[j]);
            }
        }
        self.norm.push(sqrt(xi.iter().map(|x| x * x).sum()));
    }

    /// Stats with i.i.d. standard errors.
    fn finish(&self, s: usize) -> XiStats {
        let mean = |v: &[RunningStats], f: fn(&RunningStats) -> f64| {
            Matrix::from_row_major(s, s, v.iter().map(f).collect()).expect("square")
        };
        XiStats {
            samples: self.samples,
            sigma_xi: mean(&self.outer, RunningStats::mean).symmetrize(),
            sigma_xi_se: mean(&self.outer, RunningStats::std_err),
            mean_norm: self.norm.mean(),
            mean_norm_se: self.norm.std_err(),
        }
    }
}

/// Window statistics of a single reward stream, i.i.d. standard errors.
pub fn xi_stats_from_stream(rewards: &[f64], s: usize) -> XiStats {
    let mut acc = XiAccum::new(s);
    for w in rewards.windows(s) {
        acc.push(w);
    }
    acc.finish(s)
}

/// Per-code window statistics collected over `reps` independent runs.
///
/// Means pool all samples; standard errors come from the spread of the
/// per-replication means when `reps ≥ 2`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct XiEstimate {
    pub s: usize,
    pub pooled: XiStats,
    pub by_code: BTreeMap<Code, XiStats>,
}

/// Monte-Carlo estimate of `E[ΞΞᵀ]` and `E‖Ξ‖` under a policy.
pub fn estimate_xi_stats(
    params: &LgdsParams,
    make_policy: &dyn Fn() -> Result<Box<dyn Policy>>,
    s: usize,
    rounds: usize,
    reps: usize,
    init: InitMode,
    master_seed: u64,
) -> Result<XiEstimate> {
    if rounds <= s {
        return Err(Error::param("rounds", "must exceed the window length"));
    }
    if reps == 0 {
        return Err(Error::param("reps", "must be positive"));
    }
    let mut pooled = XiAccum::new(s);
    let mut codes: BTreeMap<Vec<usize>, XiAccum> = BTreeMap::new();
    // per-rep means, for across-replication standard errors
    let mut rep_pooled: Vec<XiStats> = Vec::with_capacity(reps);
    let mut rep_codes: BTreeMap<Vec<usize>, Vec<XiStats>> = BTreeMap::new();
    for rep in 0..reps {
        let mut env = init_env(params, init, trial_seed(master_seed, 0x5849, rep as u64))?;
        let mut rng = rng_from(trial_seed(master_seed, 0x5850, rep as u64));
        let mut policy = make_policy()?;
        let mut rewards = Vec::with_capacity(rounds);
        let mut actions = Vec::with_capacity(rounds);
        let mut local = XiAccum::new(s);
        let mut local_codes: BTreeMap<Vec<usize>, XiAccum> = BTreeMap::new();
        for t in 0..rounds {
            if t >= s {
                let xi = &rewards[t - s..t];
                let code: Vec<usize> = actions[t - s..t].to_vec();
                pooled.push(xi);
                local.push(xi);
                codes
                    .entry(code.clone())
                    .or_insert_with(|| XiAccum::new(s))
                    .push(xi);
                local_codes
                    .entry(code)
                    .or_insert_with(|| XiAccum::new(s))
                    .push(xi);
            }
            let a = policy.select(&mut rng);
            let o = step(&mut env, params, a)?;
            policy.observe(a, o.reward);
            rewards.push(o.reward);
            actions.push(a);
        }
        rep_pooled.push(local.finish(s));
        for (code, acc) in local_codes {
            rep_codes.entry(code).or_default().push(acc.finish(s));
        }
    }
    let with_rep_se = |mut st: XiStats, reps: &[XiStats]| {
        if reps.len() >= 2 {
            for i in 0..s * s {
                let r: RunningStats = reps.iter().map(|x| x.sigma_xi.as_slice()[i]).collect();
                let (row, col) = (i / s, i % s);
                st.sigma_xi_se[(row, col)] = r.std_err();
            }
            let r: RunningStats = reps.iter().map(|x| x.mean_norm).collect();
            st.mean_norm_se = r.std_err();
        }
        st
    };
    let pooled_stats = with_rep_se(pooled.finish(s), &rep_pooled);
    let mut by_code = BTreeMap::new();
    for (code, acc) in codes {
        let reps = rep_codes.get(&code).map(Vec::as_slice).unwrap_or(&[]);
        let st = with_rep_se(acc.finish(s), reps);
        by_code.insert(Code::new(code, s, params.k())?, st);
    }
    Ok(XiEstimate {
        s,
        pooled: pooled_stats,
        by_code,
    })
}

/// Inputs of the looser width bound.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct BoundInputs {
    pub sigma_xi: Matrix,
    pub mean_xi_norm: f64,
    pub delta: f64,
    pub n: usize,
    pub s: usize,
    pub lambda: f64,
    pub b_c: f64,
    pub b_r: f64,
    pub b_g: f64,
}

/// Value of the width bound and whether its logarithm had to be clamped at 0.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct BigB {
    pub value: f64,
    pub log_clamped: bool,
}

/// High-probability bound on `(e + b)·sqrt(ΞᵀV⁻¹Ξ)`:
///
/// ```text
/// sqrt(2B_R² ln((1/δ)(sλ + (n−s)E/δ)^{s/2} / λ^{s/2}))·W
///   + sqrt(n−s)(B_c B_R/δ)·sqrt(s)·W + λ B_G·W,      W = sqrt(s/λ)·E/δ
/// ```
pub fn compute_big_b(inputs: &BoundInputs) -> Result<BigB> {
    let BoundInputs {
        mean_xi_norm: e,
        delta,
        n,
        s,
        lambda,
        b_c,
        b_r,
        b_g,
        ..
    } = *inputs;
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::param("delta", "must lie in (0, 1)"));
    }
    if n < s {
        return Err(Error::param("n", "horizon shorter than the window"));
    }
    let sf = s as f64;
    let rest = (n - s) as f64;
    let w = sqrt(sf / lambda) * e / delta;
    let log_arg = ln(1.0 / delta) + 0.5 * sf * (ln(sf * lambda + rest * e / delta) - ln(lambda));
    let log_clamped = log_arg < 0.0;
    let t1 = sqrt(2.0 * b_r * b_r * log_arg.max(0.0)) * w;
    let t2 = sqrt(rest) * (b_c * b_r / delta) * sqrt(sf) * w;
    let t3 = lambda * b_g * w;
    Ok(BigB {
        value: t1 + t2 + t3,
        log_clamped,
    })
}

/// Evaluated regret bound, worst case over codes and optimal actions.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct RegretBound {
    pub value: f64,
    pub warm_up_term: f64,
    pub learning_term: f64,
    pub worst_code: Option<Code>,
    pub worst_optimal_action: usize,
    /// Action pairs whose weight gap has no variance; their exponential term
    /// is taken as `exp(−∞) = 0`.
    pub degenerate_pairs: usize,
    pub log_clamped: bool,
    /// Confidence `(1−δ)⁴` attached to the per-round argument.
    pub confidence_per_round: f64,
    /// Confidence `(1−δ)⁵` attached to the headline statement.
    pub confidence_headline: f64,
}

/// Evaluates the regret bound for horizon `n` with `δ_e = δ_b = δ`.
///
/// The warm-up rounds are bounded by `2·B_c·B_R` each (Cauchy–Schwarz on
/// `⟨c_{a*} − c_a, z⟩`).
pub fn evaluate_regret_bound(
    xi: &XiEstimate,
    params: &LgdsParams,
    mk: &ModifiedKalman,
    bounds: &Bounds,
    lambda: f64,
    n: usize,
    delta: f64,
) -> Result<RegretBound> {
    let s = xi.s;
    if n < s {
        return Err(Error::param("n", "horizon shorter than the window"));
    }
    let k = params.k();
    let per_round = 2.0 * bounds.b_c * bounds.b_c * bounds.b_r * bounds.b_r;
    let rest = (n - s) as f64;
    let keep = powi(1.0 - delta, 4);
    let mut best: Option<(f64, Option<Code>, usize)> = None;
    let mut degenerate_pairs = 0;
    let mut log_clamped = false;
    for (code, st) in &xi.by_code {
        let big_b = compute_big_b(&BoundInputs {
            sigma_xi: st.sigma_xi.clone(),
            mean_xi_norm: st.mean_norm,
            delta,
            n,
            s,
            lambda,
            b_c: bounds.b_c,
            b_r: bounds.b_r,
            b_g: bounds.b_g,
        })?;
        log_clamped |= big_b.log_clamped;
        let gs: Vec<Vector> = (0..k)
            .map(|a| mk.true_g(params, code.as_slice(), a))
            .collect::<Result<_>>()?;
        for star in 0..k {
            let mut total = 0.0;
            for g in &gs {
                let dg = &gs[star] - g;
                let denom = 2.0 * st.sigma_xi.quad_form(&dg, &dg);
                let tail = if denom <= 1e-15 {
                    degenerate_pairs += 1;
                    0.0
                } else {
                    exp(-4.0 * big_b.value * big_b.value / denom)
                };
                total += rest * per_round * (1.0 - keep * (1.0 - tail));
            }
            if best.as_ref().is_none_or(|b| total > b.0) {
                best = Some((total, Some(code.clone()), star));
            }
        }
    }
    let (learning_term, worst_code, worst_optimal_action) = match best {
        Some(b) => b,
        // no code observed: every pair is degenerate
        None => (k as f64 * rest * per_round * (1.0 - keep), None, 0),
    };
    let warm_up_term = s as f64 * 2.0 * bounds.b_c * bounds.b_r;
    Ok(RegretBound {
        value: warm_up_term + learning_term,
        warm_up_term,
        learning_term,
        worst_code,
        worst_optimal_action,
        degenerate_pairs,
        log_clamped,
        confidence_per_round: keep,
        confidence_headline: powi(1.0 - delta, 5),
    })
}

/// Outcome of a Monte-Carlo coverage check.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct CoverageReport {
    pub name: String,
    pub trials: u64,
    pub violations: u64,
    pub nominal_level: f64,
    pub empirical_level: f64,
    pub slack: f64,
    pub passed: bool,
}

impl CoverageReport {
    pub fn new(name: &str, trials: u64, violations: u64, nominal_level: f64) -> Self {
        let empirical_level = if trials == 0 {
            1.0
        } else {
            1.0 - violations as f64 / trials as f64
        };
        let slack = COVERAGE_SIGMAS * binomial_sd(nominal_level, trials);
        CoverageReport {
            name: String::from(name),
            trials,
            violations,
            nominal_level,
            empirical_level,
            slack,
            passed: empirical_level >= nominal_level - slack,
        }
    }
}

/// A known system driven by a fixed cyclic action schedule, with one
/// (code, action) pair singled out as the regression target.
#[derive(Debug, Clone)]
pub struct CoverageSetup {
    pub params: LgdsParams,
    pub mk: ModifiedKalman,
    pub cfg: UbssConfig,
    pub pattern: Vec<usize>,
    /// Regression rounds per trial (after the `s` warm-up rounds).
    pub rounds: usize,
    pub init: InitMode,
}

/// Per-trial measurements.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialOutcome {
    /// `‖Ĝ − G‖_V`.
    pub model_error: f64,
    /// `e + b` at the end of the trial.
    pub radius: f64,
    /// `|(Ĝ − G)ᵀΞ|` for the next feature vector of the target pair.
    pub prediction_error: f64,
    /// `(e + b)·sqrt(ΞᵀV⁻¹Ξ)`.
    pub prediction_width: f64,
}

impl CoverageSetup {
    fn target(&self) -> (Vec<usize>, usize) {
        let s = self.cfg.s;
        let p = self.pattern.len();
        let code = (0..s).map(|i| self.pattern[i % p]).collect();
        (code, self.pattern[s % p])
    }

    /// Runs one trial from `seed`.
    pub fn run_trial(&self, seed: u64) -> Result<TrialOutcome> {
        let s = self.cfg.s;
        let (code, action) = self.target();
        let g = self.mk.true_g(&self.params, &code, action)?;
        let mut env = init_env(&self.params, self.init, seed)?;
        let mut policy = CyclicPolicy::new(self.pattern.clone())?;
        let mut unused = rng_from(0);
        let mut entry = RegressionEntry::new(s, self.cfg.lambda);
        let mut rewards: Vec<f64> = Vec::with_capacity(self.rounds + s);
        let mut actions: Vec<usize> = Vec::with_capacity(self.rounds + s);
        let mut t = 0;
        let xi = loop {
            let a = policy.select(&mut unused);
            let is_target = t >= s && a == action && actions[t - s..t] == code[..];
            if is_target && entry.n as usize >= self.rounds {
                // the next feature vector of the target pair, not used for fitting
                break Vector::from_slice(&rewards[t - s..t]);
            }
            let o = step(&mut env, &self.params, a)?;
            policy.observe(a, o.reward);
            if is_target {
                entry.update(&Vector::from_slice(&rewards[t - s..t]), o.reward);
            }
            rewards.push(o.reward);
            actions.push(a);
            t += 1;
        };
        let diff = &entry.g_hat - &g;
        let v = spd_inverse(&entry.v_inv)?;
        let radius = bonus_e(&entry, &self.cfg) + bonus_b(&entry, &self.cfg);
        Ok(TrialOutcome {
            model_error: sqrt(v.quad_form(&diff, &diff).max(0.0)),
            radius,
            prediction_error: diff.dot(&xi).abs(),
            prediction_width: radius * entry.width(&xi),
        })
    }

    fn nominal(&self) -> f64 {
        (1.0 - self.cfg.delta_e) * (1.0 - self.cfg.delta_b)
    }

    /// Horizon used when evaluating the looser width bound.
    pub fn horizon(&self) -> usize {
        self.rounds * self.pattern.len() + self.cfg.s
    }
}

const MODEL_CHECK: u64 = 1;
const PREDICTION_CHECK: u64 = 2;

/// Fraction of trials with `‖Ĝ − G‖_V ≤ e + b`.
pub fn check_model_error_bound(
    setup: &CoverageSetup,
    trials: u64,
    master_seed: u64,
) -> Result<CoverageReport> {
    let mut violations = 0;
    for i in 0..trials {
        let o = setup.run_trial(trial_seed(master_seed, MODEL_CHECK, i))?;
        if o.model_error > o.radius {
            violations += 1;
        }
    }
    Ok(CoverageReport::new(
        "model_error_bound",
        trials,
        violations,
        setup.nominal(),
    ))
}

/// Fraction of trials with `|(Ĝ − G)ᵀΞ| ≤ (e + b)·sqrt(ΞᵀV⁻¹Ξ)`; returns the
/// outcomes too so that width-bound dominance can be checked on them.
pub fn check_prediction_bound(
    setup: &CoverageSetup,
    trials: u64,
    master_seed: u64,
) -> Result<(CoverageReport, Vec<TrialOutcome>)> {
    let mut violations = 0;
    let mut outcomes = Vec::with_capacity(trials as usize);
    for i in 0..trials {
        let o = setup.run_trial(trial_seed(master_seed, PREDICTION_CHECK, i))?;
        if o.prediction_error > o.prediction_width {
            violations += 1;
        }
        outcomes.push(o);
    }
    let report = CoverageReport::new("prediction_bound", trials, violations, setup.nominal());
    Ok((report, outcomes))
}

/// Fraction of observed widths not exceeding `big_b`, at level `1 − δ`.
pub fn check_big_b_dominance(outcomes: &[TrialOutcome], big_b: f64, delta: f64) -> CoverageReport {
    let violations = outcomes
        .iter()
        .filter(|o| o.prediction_width > big_b)
        .count() as u64;
    CoverageReport::new(
        "width_bound_dominance",
        outcomes.len() as u64,
        violations,
        1.0 - delta,
    )
}

/// Result of a deterministic matrix check.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct MatrixCheck {
    pub name: String,
    pub cases: u64,
    pub failures: u64,
    /// Smallest margin seen (positive is good).
    pub worst_margin: f64,
    pub passed: bool,
}

impl MatrixCheck {
    fn new(name: &str) -> Self {
        MatrixCheck {
            name: String::from(name),
            cases: 0,
            failures: 0,
            worst_margin: f64::INFINITY,
            passed: true,
        }
    }

    fn record(&mut self, margin: f64, ok: bool) {
        self.cases += 1;
        self.worst_margin = self.worst_margin.min(margin);
        if !ok {
            self.failures += 1;
            self.passed = false;
        }
    }
}

/// Tolerance for `P̄ ⪰ P′` along random action sequences.
pub const DOMINATION_TOL: f64 = 1e-6;

/// Closed-loop stability, `P̄ ⪰ P′` along random sequences, and the
/// residual-variance cap, for one system.
pub fn check_filter_covariances<R: Rng + ?Sized>(
    params: &LgdsParams,
    mk: &ModifiedKalman,
    sequences: usize,
    steps: usize,
    rng: &mut R,
) -> Result<Vec<MatrixCheck>> {
    let k = params.k();
    let mut stable = MatrixCheck::new("closed_loop_stable");
    for a in 0..k {
        let ok = linalg::is_schur_stable(mk.closed_loop(a)?, DEFAULT_TOL, 200);
        stable.record(if ok { 1.0 } else { -1.0 }, ok);
    }
    let mut dominated = MatrixCheck::new("common_covariance_dominates");
    let mut capped = MatrixCheck::new("residual_variance_capped");
    let caps: Vec<f64> = (0..k)
        .map(|a| mk.residual_var_cap(params, a))
        .collect::<Result<_>>()?;
    for _ in 0..sequences {
        let mut f = mk.clone();
        f.p_prime = f.p_bar.clone();
        for _ in 0..steps {
            let a = rng.random_range(0..k);
            let out = f.step(params, a, 0.0)?;
            let slack = caps[a] + 1e-9 - out.residual_var;
            capped.record(slack, slack >= 0.0);
            let m = linalg::min_eig_sym(&(&f.p_bar - &f.p_prime))?;
            dominated.record(m, m >= -DOMINATION_TOL);
        }
    }
    Ok(vec![stable, dominated, capped])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::make_rotation_lgds;
    use crate::episode::RandomPolicy;
    use crate::filter::{PBarFallback, PBarSource};
    use approx::assert_abs_diff_eq;
    use core::f64::consts::PI;
    use rand_distr::StandardNormal;

    fn scalar() -> LgdsParams {
        LgdsParams::new(
            Matrix::scalar(0.5),
            Matrix::scalar(1.0),
            1.0,
            vec![Vector::from_slice(&[1.0])],
            1.0,
        )
        .unwrap()
    }

    fn inputs(e: f64, n: usize) -> BoundInputs {
        BoundInputs {
            sigma_xi: Matrix::identity(1),
            mean_xi_norm: e,
            delta: 0.5,
            n,
            s: 1,
            lambda: 1.0,
            b_c: 1.0,
            b_r: 1.0,
            b_g: 1.0,
        }
    }

    #[test]
    fn big_b_examples() {
        assert_eq!(compute_big_b(&inputs(0.0, 2)).unwrap().value, 0.0);
        let got = compute_big_b(&inputs(1.0, 2)).unwrap();
        let want = 2.0 * sqrt(2.0 * ln(2.0 * sqrt(3.0))) + 6.0;
        assert_abs_diff_eq!(got.value, want, epsilon = 1e-12);
        assert_abs_diff_eq!(got.value, 9.152_72, epsilon = 1e-5);
        assert!(!got.log_clamped);
        let mut prev = 0.0;
        for n in 1..50 {
            let v = compute_big_b(&inputs(1.0, n)).unwrap().value;
            assert!(v >= prev);
            prev = v;
        }
        assert!(compute_big_b(&BoundInputs {
            delta: 1.0,
            ..inputs(1.0, 2)
        })
        .is_err());
    }

    #[test]
    fn xi_stats_examples() {
        let zero = xi_stats_from_stream(&[0.0; 100], 2);
        assert_eq!(zero.sigma_xi, Matrix::zeros(2, 2));
        assert_eq!(zero.mean_norm, 0.0);

        let mut rng = rng_from(5);
        let stream: Vec<f64> = (0..20_000).map(|_| rng.sample(StandardNormal)).collect();
        let st = xi_stats_from_stream(&stream, 2);
        for i in 0..2 {
            for j in 0..2 {
                let want = if i == j { 1.0 } else { 0.0 };
                let dev = (st.sigma_xi[(i, j)] - want).abs();
                assert!(dev <= 3.0 * st.sigma_xi_se[(i, j)], "{i}{j}: {dev}");
            }
        }
    }

    #[test]
    fn xi_estimates_replicate_within_error() {
        let p = make_rotation_lgds(5.0 * PI / 8.0);
        let make = || -> Result<Box<dyn Policy>> { Ok(Box::new(RandomPolicy { k: 2 })) };
        let a = estimate_xi_stats(&p, &make, 1, 2000, 8, InitMode::Stationary, 1).unwrap();
        let b = estimate_xi_stats(&p, &make, 1, 2000, 8, InitMode::Stationary, 2).unwrap();
        assert_eq!(a.by_code.len(), 2);
        let se = sqrt(
            a.pooled.mean_norm_se * a.pooled.mean_norm_se
                + b.pooled.mean_norm_se * b.pooled.mean_norm_se,
        );
        assert!((a.pooled.mean_norm - b.pooled.mean_norm).abs() <= 4.0 * se);
    }

    fn scalar_setup(rounds: usize) -> CoverageSetup {
        let p = scalar();
        let mk = ModifiedKalman::new(&p, PBarFallback::Strict).unwrap();
        let b = default_bounds(&p, &mk, 1).unwrap();
        CoverageSetup {
            cfg: UbssConfig {
                s: 1,
                lambda: 1.0,
                delta_e: 0.1,
                delta_b: 0.1,
                b_r: b.b_r,
                b_g: b.b_g,
                b_c: b.b_c,
                force_explore_unseen: true,
            },
            params: p,
            mk,
            pattern: vec![0],
            rounds,
            init: InitMode::Stationary,
        }
    }

    #[test]
    fn scalar_bounds() {
        let s = scalar_setup(10);
        let p_bar = s.mk.p_bar[(0, 0)];
        assert_abs_diff_eq!(s.cfg.b_r, sqrt(p_bar + 1.0), epsilon = 1e-12);
        assert_abs_diff_eq!(s.cfg.b_g, 0.5 * p_bar / (p_bar + 1.0), epsilon = 1e-12);
    }

    #[test]
    fn coverage_on_scalar_system() {
        let setup = scalar_setup(200);
        let r = check_model_error_bound(&setup, 60, 3).unwrap();
        assert!(r.passed, "{r:?}");
        let (r, _) = check_prediction_bound(&setup, 60, 3).unwrap();
        assert!(r.passed, "{r:?}");
    }

    #[test]
    fn exact_recovery_has_no_violations() {
        // no process noise: the state stays at zero and so do the rewards
        let p = LgdsParams::new(
            Matrix::scalar(0.5),
            Matrix::scalar(0.0),
            1e-300,
            vec![Vector::from_slice(&[1.0])],
            1.0,
        )
        .unwrap();
        let p_bar = Matrix::scalar(1.0);
        let mk = ModifiedKalman::from_p_bar(&p, p_bar, PBarSource::Stationary).unwrap();
        let mut setup = scalar_setup(50);
        setup.cfg.lambda = 1e-9;
        setup.cfg.b_g = mk.true_g(&p, &[0], 0).unwrap().norm();
        setup.params = p;
        setup.mk = mk;
        let r = check_model_error_bound(&setup, 20, 0).unwrap();
        assert_eq!(r.violations, 0);
        let (r, _) = check_prediction_bound(&setup, 20, 0).unwrap();
        assert_eq!(r.violations, 0);
    }

    #[test]
    fn report_levels() {
        let r = CoverageReport::new("x", 400, 40, 0.81);
        assert_abs_diff_eq!(r.empirical_level, 0.9, epsilon = 1e-15);
        assert_abs_diff_eq!(r.slack, 3.0 * sqrt(0.81 * 0.19 / 400.0), epsilon = 1e-15);
        assert!(r.passed);
        assert!(!CoverageReport::new("x", 400, 120, 0.81).passed);
    }

    #[test]
    fn regret_bound_limits() {
        let p = make_rotation_lgds(5.0 * PI / 8.0);
        let mk = ModifiedKalman::new(&p, PBarFallback::Stationary).unwrap();
        let b = default_bounds(&p, &mk, 1).unwrap();
        let make = || -> Result<Box<dyn Policy>> { Ok(Box::new(RandomPolicy { k: 2 })) };
        let xi = estimate_xi_stats(&p, &make, 1, 500, 2, InitMode::Stationary, 0).unwrap();
        let n = 1000;
        // δ close to 1 drives every bracket to 1
        let r = evaluate_regret_bound(&xi, &p, &mk, &b, 1.0, n, 1.0 - 1e-12).unwrap();
        let limit = 2.0 * (n - 1) as f64 * b.b_c * b.b_c * b.b_r * b.b_r * 2.0;
        assert!((r.learning_term - limit).abs() <= 1e-6 * limit);
        assert_abs_diff_eq!(r.warm_up_term, 2.0 * b.b_c * b.b_r, epsilon = 1e-9);
        assert!(r.degenerate_pairs > 0);
        assert_abs_diff_eq!(r.confidence_per_round, powi(1e-12, 4), epsilon = 1e-40);
    }

    #[test]
    fn regret_bound_identical_arms() {
        let mut p = make_rotation_lgds(1.0);
        p.actions[1] = p.actions[0].clone();
        let mk = ModifiedKalman::new(&p, PBarFallback::Stationary).unwrap();
        let b = default_bounds(&p, &mk, 1).unwrap();
        let make = || -> Result<Box<dyn Policy>> { Ok(Box::new(RandomPolicy { k: 2 })) };
        let xi = estimate_xi_stats(&p, &make, 1, 300, 1, InitMode::Stationary, 0).unwrap();
        let delta = 0.1;
        let r = evaluate_regret_bound(&xi, &p, &mk, &b, 1.0, 300, delta).unwrap();
        // every pair degenerate: each bracket is 1 − (1−δ)⁴
        let want = 2.0 * 299.0 * 2.0 * b.b_c * b.b_c * b.b_r * b.b_r * (1.0 - powi(0.9, 4));
        assert!((r.learning_term - want).abs() <= 1e-9 * want);
        assert_eq!(r.degenerate_pairs, 2 * 2 * xi.by_code.len());
    }

    #[test]
    fn matrix_checks_on_scalar_and_single_action() {
        let p = scalar();
        let mk = ModifiedKalman::new(&p, PBarFallback::Strict).unwrap();
        let checks = check_filter_covariances(&p, &mk, 5, 200, &mut rng_from(1)).unwrap();
        assert!(checks.iter().all(|c| c.passed), "{checks:?}");
    }

    #[test]
    fn matrix_checks_on_rotation_family() {
        for i in 0..8 {
            let p = make_rotation_lgds(2.0 * PI * i as f64 / 8.0);
            let mk = ModifiedKalman::new(&p, PBarFallback::Stationary).unwrap();
            let checks = check_filter_covariances(&p, &mk, 3, 300, &mut rng_from(i)).unwrap();
            assert!(checks.iter().all(|c| c.passed), "{checks:?}");
        }
    }

    #[test]
    fn codes_enumeration() {
        assert_eq!(
            all_codes(2, 2),
            vec![vec![0, 0], vec![0, 1], vec![1, 0], vec![1, 1]]
        );
        assert_eq!(all_codes(3, 0), vec![Vec::<usize>::new()]);
    }
}
