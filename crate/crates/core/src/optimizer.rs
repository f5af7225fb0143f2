//! Zeroth-order policy gradient ascent driven by pairwise preferences.
//!
//! Each iteration draws a direction v_t, compares N trajectory pairs from
//! π_{θ_t} and π_{θ_t+μv_t} through M simulated preference queries each, turns
//! the trimmed preference frequencies into a value-difference readout
//! Σ σ⁻¹(p_{t,n}) / N, and steps θ_{t+1} = θ_t + α (d/μ) readout v_t.
//!
//! ZPG draws v_t uniformly from the unit sphere; ZBCPG draws a signed random
//! block of K coordinates.

use std::fmt;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::EnvModel;
use crate::error::{Error, Result};
use crate::perturb::{
    gradient_estimate, sample_block_direction, sample_sphere_direction, DirectionSample,
    ValueOracle,
};
use crate::policy::{l2_norm, ParamVector, PolicyModel, PolicyTable};
use crate::preference::{estimate_from_count, minimum_queries, LinkFunction};
use crate::rng::{stream, RngStream, StreamId};

/// Above this many stored parameter entries (d·T) the history is subsampled.
pub const FULL_HISTORY_LIMIT: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Zpg,
    Zbcpg,
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::Zpg => "zpg",
            Algorithm::Zbcpg => "zbcpg",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    /// T
    pub iterations: usize,
    /// N, trajectory pairs per iteration.
    pub pairs: usize,
    /// M, preference queries per pair.
    pub queries: usize,
    pub mu: f64,
    pub alpha: f64,
    /// K, ZBCPG only.
    pub block_size: Option<usize>,
    /// Δ
    pub trim: f64,
    /// L, the declared smoothness constant used by the step schedule.
    pub lipschitz: f64,
    pub seed: u64,
}

impl HyperParams {
    pub fn validate(&self, dim: usize, algorithm: Algorithm) -> Result<()> {
        if self.pairs == 0 || self.queries == 0 {
            return Err(Error::config(format!(
                "N and M must be at least 1 (N = {}, M = {})",
                self.pairs, self.queries
            )));
        }
        for (name, value) in [
            ("mu", self.mu),
            ("alpha", self.alpha),
            ("L", self.lipschitz),
        ] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::config(format!(
                    "{name} must be positive, got {value}"
                )));
            }
        }
        if !(self.trim > 0.0 && self.trim < 0.5) {
            return Err(Error::config(format!(
                "trim level {} must lie in (0, 1/2)",
                self.trim
            )));
        }
        match (algorithm, self.block_size) {
            (Algorithm::Zbcpg, None) => {
                return Err(Error::config("K (block size) is required for zbcpg"));
            }
            (_, Some(k)) if k == 0 || k > dim => {
                return Err(Error::config(format!(
                    "K = {k} must satisfy 1 ≤ K ≤ d = {dim}"
                )));
            }
            _ => {}
        }
        Ok(())
    }
}

/// Perturbation distance and learning rate from the convergence analysis:
///
/// * ZPG: μ² = max{9 √(log M / M), 4H / (L √(dN))}, α = 1/(12 d L)
/// * ZBCPG: μ² = max{4 √(log M / M), H / (3L √(dN))}, α = 1/(12 d L)
pub fn default_hyperparams(
    algorithm: Algorithm,
    dim: usize,
    horizon: f64,
    lipschitz: f64,
    queries: usize,
    pairs: usize,
) -> Result<(f64, f64)> {
    if dim == 0
        || pairs == 0
        || queries < 2
        || horizon.is_nan()
        || horizon <= 0.0
        || lipschitz.is_nan()
        || lipschitz <= 0.0
    {
        return Err(Error::config(format!(
            "default schedule needs d, N, H, L > 0 and M ≥ 2 (d={dim}, N={pairs}, M={queries}, H={horizon}, L={lipschitz})"
        )));
    }
    let (d, m, n) = (dim as f64, queries as f64, pairs as f64);
    let query_term = (m.ln() / m).sqrt();
    let pair_term = horizon / (lipschitz * (d * n).sqrt());
    let mu_sq = match algorithm {
        Algorithm::Zpg => (9.0 * query_term).max(4.0 * pair_term),
        Algorithm::Zbcpg => (4.0 * query_term).max(pair_term / 3.0),
    };
    Ok((mu_sq.sqrt(), 1.0 / (12.0 * d * lipschitz)))
}

/// The schedule constant: the declared smoothness constant, raised to the
/// link's σ⁻¹ Lipschitz constant when that one was declared explicitly.
pub fn resolve_lipschitz(smoothness: f64, link: &LinkFunction) -> f64 {
    link.declared_lipschitz()
        .map_or(smoothness, |l| l.max(smoothness))
}

impl HyperParams {
    /// Hyperparameters with μ, α from [`default_hyperparams`] and Δ from the link.
    #[allow(clippy::too_many_arguments)]
    pub fn schedule_defaults(
        algorithm: Algorithm,
        dim: usize,
        link: &LinkFunction,
        iterations: usize,
        pairs: usize,
        queries: usize,
        smoothness: f64,
        block_size: Option<usize>,
        seed: u64,
    ) -> Result<Self> {
        let lipschitz = resolve_lipschitz(smoothness, link);
        let (mu, alpha) =
            default_hyperparams(algorithm, dim, link.horizon(), lipschitz, queries, pairs)?;
        Ok(HyperParams {
            iterations,
            pairs,
            queries,
            mu,
            alpha,
            block_size,
            trim: link.trim_level()?,
            lipschitz,
            seed,
        })
    }
}

/// Where the value-difference readout comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedbackChannel {
    /// Trajectory pairs judged by the simulated preference oracle.
    #[default]
    Preference,
    /// Diagnostic mode: the exact V(θ+μv) − V(θ); no queries are spent.
    ExactValue,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HistoryPolicy {
    /// Full history when d·T ≤ [`FULL_HISTORY_LIMIT`], otherwise the smallest
    /// stride that fits.
    #[default]
    Auto,
    Full,
    Stride(usize),
}

impl HistoryPolicy {
    fn stride(self, dim: usize, iterations: usize) -> Result<usize> {
        match self {
            HistoryPolicy::Full => Ok(1),
            HistoryPolicy::Stride(0) => Err(Error::config("history stride must be at least 1")),
            HistoryPolicy::Stride(s) => Ok(s),
            HistoryPolicy::Auto => Ok((dim * iterations).div_ceil(FULL_HISTORY_LIMIT).max(1)),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// θ₀; zeros (the uniform policy) when absent.
    pub theta0: Option<ParamVector>,
    pub history: HistoryPolicy,
    pub channel: FeedbackChannel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    /// 1-based: this record describes the step θ_{t−1} → θ_t.
    pub t: usize,
    /// Σ σ⁻¹(p_{t,n}) / N.
    pub value_readout: f64,
    pub grad_est_norm: f64,
    pub queries_cum: u64,
    /// Index into `OptResult::theta_history` of θ_{t−1}, when it was stored.
    pub theta_ref: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredIterate {
    /// Iterate index: this is θ_t.
    pub t: usize,
    pub theta: ParamVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptResult {
    pub algorithm: Algorithm,
    pub hyperparams: HyperParams,
    pub records: Vec<IterationRecord>,
    /// θ₀ … θ_{T−1}, possibly strided. Holds θ₀ alone when T = 0.
    pub theta_history: Vec<StoredIterate>,
    /// θ_R, drawn uniformly from `theta_history`.
    pub theta_r: ParamVector,
    pub theta_r_index: usize,
    /// θ_T.
    pub final_theta: ParamVector,
    pub total_queries: u64,
    pub warnings: Vec<String>,
}

/// One gradient estimate at a fixed θ.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSample {
    pub direction: DirectionSample,
    pub value_readout: f64,
    pub gradient: Vec<f64>,
}

/// What an observer sees after every iteration.
#[derive(Debug)]
pub struct IterationStep<'a> {
    pub record: &'a IterationRecord,
    pub theta_before: &'a ParamVector,
    pub theta_after: &'a ParamVector,
    pub direction: &'a DirectionSample,
    pub gradient: &'a [f64],
}

/// A configured ZPG / ZBCPG run.
pub struct Optimizer<'a> {
    env: &'a EnvModel,
    policy: &'a PolicyModel,
    link: &'a LinkFunction,
    hp: HyperParams,
    algorithm: Algorithm,
    options: RunOptions,
    oracle: Option<ValueOracle<'a>>,
}

impl<'a> Optimizer<'a> {
    pub fn new(
        env: &'a EnvModel,
        policy: &'a PolicyModel,
        link: &'a LinkFunction,
        hp: HyperParams,
        algorithm: Algorithm,
    ) -> Result<Self> {
        env.check_policy(policy)?;
        hp.validate(policy.dim(), algorithm)?;
        if (link.horizon() - env.horizon() as f64).abs() > 1e-12 {
            return Err(Error::config(format!(
                "link horizon {} differs from environment horizon {}",
                link.horizon(),
                env.horizon()
            )));
        }
        let floor = link.trim_level()?;
        if hp.trim < floor * (1.0 - 1e-12) {
            return Err(Error::config(format!(
                "trim level {} is below min{{σ(−H), 1−σ(H)}} = {floor}",
                hp.trim
            )));
        }
        Ok(Optimizer {
            env,
            policy,
            link,
            hp,
            algorithm,
            options: RunOptions::default(),
            oracle: None,
        })
    }

    pub fn with_options(mut self, options: RunOptions) -> Result<Self> {
        if let Some(theta0) = &options.theta0 {
            self.policy.check_theta(theta0)?;
        }
        self.oracle = match options.channel {
            FeedbackChannel::ExactValue => Some(ValueOracle::new(self.env, self.policy)?),
            FeedbackChannel::Preference => None,
        };
        self.options = options;
        Ok(self)
    }

    pub fn hyperparams(&self) -> &HyperParams {
        &self.hp
    }

    fn dim(&self) -> usize {
        self.policy.dim()
    }

    /// v_t for iteration `t` (0-based), from its dedicated stream.
    pub fn sample_direction(&self, t: usize) -> Result<DirectionSample> {
        let mut rng = stream(self.hp.seed, StreamId::Direction { t: t as u64 });
        match self.algorithm {
            Algorithm::Zpg => sample_sphere_direction(self.dim(), &mut rng),
            Algorithm::Zbcpg => {
                let k = self
                    .hp
                    .block_size
                    .ok_or_else(|| Error::config("K missing"))?;
                sample_block_direction(self.dim(), k, &mut rng)
            }
        }
    }

    /// σ⁻¹(p_{t,n}) for pair `n` of iteration `t`, each side and the feedback
    /// block drawn from their own streams.
    pub fn pair_readout(
        &self,
        t: usize,
        n: usize,
        current: &PolicyTable,
        perturbed: &PolicyTable,
    ) -> Result<f64> {
        let (t, n) = (t as u64, n as u64);
        let seed = self.hp.seed;
        let tau0 = self.env.sample_with_table(
            current,
            &mut stream(seed, StreamId::Trajectory { t, n, side: 0 }),
        )?;
        let tau1 = self.env.sample_with_table(
            perturbed,
            &mut stream(seed, StreamId::Trajectory { t, n, side: 1 }),
        )?;
        let (r0, r1) = (
            self.env.trajectory_reward(&tau0),
            self.env.trajectory_reward(&tau1),
        );
        let mut rng = stream(seed, StreamId::Feedback { t, n });
        let ones = self
            .link
            .query_feedback(r1, r0, self.hp.queries, &mut rng)?;
        let estimate = estimate_from_count(ones, self.hp.queries, self.hp.trim)?;
        self.link.inverse(estimate.p_hat)
    }

    fn readout(&self, t: usize, theta: &ParamVector, direction: &DirectionSample) -> Result<f64> {
        let shifted = theta.perturbed(self.hp.mu, &direction.v)?;
        if let Some(oracle) = &self.oracle {
            return Ok(oracle.value(&shifted)? - oracle.value(theta)?);
        }
        let current = self.policy.table(theta)?;
        let perturbed = self.policy.table(&shifted)?;
        let readouts: Vec<f64> = (0..self.hp.pairs)
            .into_par_iter()
            .map(|n| self.pair_readout(t, n, &current, &perturbed))
            .collect::<Result<_>>()?;
        Ok(readouts.iter().sum::<f64>() / self.hp.pairs as f64)
    }

    /// ĝ at `theta` using the direction and pair streams of iteration `t`.
    pub fn gradient_sample(&self, theta: &ParamVector, t: usize) -> Result<GradientSample> {
        self.policy.check_theta(theta)?;
        let direction = self.sample_direction(t)?;
        self.gradient_along(theta, t, direction)
    }

    fn gradient_along(
        &self,
        theta: &ParamVector,
        t: usize,
        direction: DirectionSample,
    ) -> Result<GradientSample> {
        let value_readout = self.readout(t, theta, &direction)?;
        let gradient = gradient_estimate(self.dim(), self.hp.mu, value_readout, &direction)?;
        Ok(GradientSample {
            direction,
            value_readout,
            gradient,
        })
    }

    pub fn run(&self) -> Result<OptResult> {
        self.run_observed(|_| {})
    }

    pub fn run_observed(&self, observer: impl FnMut(&IterationStep<'_>)) -> Result<OptResult> {
        self.run_with_directions(|t| self.sample_direction(t), observer)
    }

    fn run_with_directions(
        &self,
        mut directions: impl FnMut(usize) -> Result<DirectionSample>,
        mut observer: impl FnMut(&IterationStep<'_>),
    ) -> Result<OptResult> {
        let hp = &self.hp;
        let d = self.dim();
        let mut warnings = Vec::new();
        let floor = minimum_queries(self.env.horizon() as f64, hp.lipschitz);
        if hp.queries < floor && self.options.channel == FeedbackChannel::Preference {
            let msg = format!(
                "M = {} is below the recommended floor ⌈4(H/L)²⌉ = {floor}",
                hp.queries
            );
            log::warn!("{msg}");
            warnings.push(msg);
        }
        if let Some(declared) = self.link.declared_lipschitz() {
            if declared != hp.lipschitz {
                warnings.push(format!(
                    "declared link Lipschitz constant {declared} differs from schedule L = {}",
                    hp.lipschitz
                ));
            }
        }
        let stride = self.options.history.stride(d, hp.iterations)?;
        let queries_per_iter = match self.options.channel {
            FeedbackChannel::Preference => (hp.pairs * hp.queries) as u64,
            FeedbackChannel::ExactValue => 0,
        };

        let mut theta = self
            .options
            .theta0
            .clone()
            .unwrap_or_else(|| ParamVector::zeros(d));
        let mut history = Vec::new();
        let mut records = Vec::with_capacity(hp.iterations);
        for t in 0..hp.iterations {
            let theta_ref = (t % stride == 0).then(|| {
                history.push(StoredIterate {
                    t,
                    theta: theta.clone(),
                });
                history.len() - 1
            });
            let sample = self.gradient_along(&theta, t, directions(t)?)?;
            let next = theta.offset(hp.alpha, &sample.gradient);
            if next.as_slice().iter().any(|x| !x.is_finite()) {
                return Err(Error::Domain(format!(
                    "iterate {} became non-finite",
                    t + 1
                )));
            }
            let record = IterationRecord {
                t: t + 1,
                value_readout: sample.value_readout,
                grad_est_norm: l2_norm(&sample.gradient),
                queries_cum: (t as u64 + 1) * queries_per_iter,
                theta_ref,
            };
            observer(&IterationStep {
                record: &record,
                theta_before: &theta,
                theta_after: &next,
                direction: &sample.direction,
                gradient: &sample.gradient,
            });
            records.push(record);
            theta = next;
        }
        if history.is_empty() {
            history.push(StoredIterate {
                t: 0,
                theta: theta.clone(),
            });
        }
        let mut rng = stream(hp.seed, StreamId::Selection);
        let theta_r_index = select_uniform_index(history.len(), &mut rng)?;
        Ok(OptResult {
            algorithm: self.algorithm,
            hyperparams: hp.clone(),
            records,
            theta_r: history[theta_r_index].theta.clone(),
            theta_r_index,
            theta_history: history,
            final_theta: theta,
            total_queries: hp.iterations as u64 * queries_per_iter,
            warnings,
        })
    }
}

/// ZPG with default options (θ₀ = 0, automatic history, preference feedback).
pub fn zpg_run(
    env: &EnvModel,
    policy: &PolicyModel,
    sigma: &LinkFunction,
    hp: &HyperParams,
) -> Result<OptResult> {
    Optimizer::new(env, policy, sigma, hp.clone(), Algorithm::Zpg)?.run()
}

/// ZBCPG with default options; `hp.block_size` must be set.
pub fn zbcpg_run(
    env: &EnvModel,
    policy: &PolicyModel,
    sigma: &LinkFunction,
    hp: &HyperParams,
) -> Result<OptResult> {
    Optimizer::new(env, policy, sigma, hp.clone(), Algorithm::Zbcpg)?.run()
}

/// Uniform index into a history of length `len`.
pub fn select_uniform_index(len: usize, rng: &mut RngStream) -> Result<usize> {
    if len == 0 {
        return Err(Error::Contract(
            "cannot select from an empty history".into(),
        ));
    }
    Ok(rng.random_range(0..len))
}

/// θ_R drawn uniformly from `history`.
pub fn select_uniform_iterate(history: &[ParamVector], rng: &mut RngStream) -> Result<ParamVector> {
    Ok(history[select_uniform_index(history.len(), rng)?].clone())
}
