//! Perturbation directions, the zeroth-order gradient assembly and
//! Monte Carlo estimates of the ball-smoothed value function.

use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::EnvModel;
use crate::error::{Error, Result};
use crate::policy::{l2_norm, ParamVector, PolicyModel};
use crate::rng::{stream, RngStream, StreamId};

/// Samples per Monte Carlo chunk; each chunk owns one RNG stream.
const MC_CHUNK: usize = 2048;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "lowercase")]
pub enum Scheme {
    Sphere,
    Block {
        /// Distinct coordinates i_t, in draw order.
        coords: Vec<usize>,
        /// λ_t ∈ {−1, +1}, aligned with `coords`.
        signs: Vec<i8>,
    },
}

/// A unit-norm perturbation direction v_t.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionSample {
    pub v: Vec<f64>,
    pub scheme: Scheme,
}

impl DirectionSample {
    pub fn dim(&self) -> usize {
        self.v.len()
    }
}

/// v uniform on the unit sphere S^{d−1}: a standard normal vector, normalized.
pub fn sample_sphere_direction(d: usize, rng: &mut RngStream) -> Result<DirectionSample> {
    if d == 0 {
        return Err(Error::config("direction dimension must be at least 1"));
    }
    loop {
        let mut v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let norm = l2_norm(&v);
        if norm > 0.0 && norm.is_finite() {
            for x in &mut v {
                *x /= norm;
            }
            return Ok(DirectionSample {
                v,
                scheme: Scheme::Sphere,
            });
        }
    }
}

/// v = (1/√K) Σ_j λ_j e_{i_j} over a uniform K-subset of coordinates drawn
/// without replacement, with independent uniform signs.
pub fn sample_block_direction(d: usize, k: usize, rng: &mut RngStream) -> Result<DirectionSample> {
    if k == 0 || k > d {
        return Err(Error::config(format!(
            "block size K = {k} must satisfy 1 ≤ K ≤ d = {d}"
        )));
    }
    let coords = index::sample(rng, d, k).into_vec();
    let signs: Vec<i8> = (0..k)
        .map(|_| if rng.random::<bool>() { 1 } else { -1 })
        .collect();
    let scale = 1.0 / (k as f64).sqrt();
    let mut v = vec![0.0; d];
    for (&i, &s) in coords.iter().zip(&signs) {
        v[i] = s as f64 * scale;
    }
    Ok(DirectionSample {
        v,
        scheme: Scheme::Block { coords, signs },
    })
}

/// Uniform point in the unit ball: a sphere sample scaled by U^{1/d}.
pub fn sample_ball(d: usize, rng: &mut RngStream) -> Result<Vec<f64>> {
    let dir = sample_sphere_direction(d, rng)?;
    let radius = rng.random::<f64>().powf(1.0 / d as f64);
    Ok(dir.v.into_iter().map(|x| x * radius).collect())
}

/// ĝ = (d/μ) · value_diff · v.
pub fn gradient_estimate(
    d: usize,
    mu: f64,
    value_diff: f64,
    direction: &DirectionSample,
) -> Result<Vec<f64>> {
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(Error::Contract(format!(
            "perturbation distance must be positive, got {mu}"
        )));
    }
    if direction.dim() != d {
        return Err(Error::Dimension {
            what: "gradient direction",
            expected: d,
            got: direction.dim(),
        });
    }
    let scale = d as f64 / mu * value_diff;
    Ok(direction.v.iter().map(|x| scale * x).collect())
}

/// Mean and standard error of a scalar Monte Carlo estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalarEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub samples: usize,
}

/// Per-coordinate mean and standard error of a vector estimate, plus the
/// mean squared norm of the individual samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorEstimate {
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
    pub mean_sq_norm: f64,
    pub mean_sq_norm_stderr: f64,
    pub samples: usize,
}

/// Running sums for a vector-valued Monte Carlo loop.
#[derive(Debug, Clone)]
pub(crate) struct VectorMoments {
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
    norm_sq: f64,
    norm_sq_sq: f64,
    count: usize,
}

impl VectorMoments {
    pub(crate) fn new(d: usize) -> Self {
        VectorMoments {
            sum: vec![0.0; d],
            sum_sq: vec![0.0; d],
            norm_sq: 0.0,
            norm_sq_sq: 0.0,
            count: 0,
        }
    }

    pub(crate) fn push(&mut self, g: &[f64]) {
        let mut n2 = 0.0;
        for (i, &x) in g.iter().enumerate() {
            self.sum[i] += x;
            self.sum_sq[i] += x * x;
            n2 += x * x;
        }
        self.norm_sq += n2;
        self.norm_sq_sq += n2 * n2;
        self.count += 1;
    }

    pub(crate) fn merge(mut self, other: &VectorMoments) -> Self {
        for i in 0..self.sum.len() {
            self.sum[i] += other.sum[i];
            self.sum_sq[i] += other.sum_sq[i];
        }
        self.norm_sq += other.norm_sq;
        self.norm_sq_sq += other.norm_sq_sq;
        self.count += other.count;
        self
    }

    pub(crate) fn finish(&self) -> VectorEstimate {
        let n = self.count as f64;
        let se = |sum: f64, sum_sq: f64| {
            if self.count < 2 {
                return 0.0;
            }
            let mean = sum / n;
            let var = ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0);
            (var / n).sqrt()
        };
        VectorEstimate {
            mean: self.sum.iter().map(|s| s / n).collect(),
            stderr: self
                .sum
                .iter()
                .zip(&self.sum_sq)
                .map(|(&s, &q)| se(s, q))
                .collect(),
            mean_sq_norm: self.norm_sq / n,
            mean_sq_norm_stderr: se(self.norm_sq, self.norm_sq_sq),
            samples: self.count,
        }
    }
}

/// Runs `n_samples` draws split into fixed-size chunks, one RNG stream per
/// chunk, and reduces chunk results in chunk order. The outcome depends only
/// on `base_seed`, never on the thread count.
pub(crate) fn chunked_monte_carlo<T, F>(
    n_samples: usize,
    base_seed: u64,
    init: impl Fn() -> T + Sync,
    body: F,
    merge: impl Fn(T, &T) -> T,
) -> Result<T>
where
    T: Send,
    F: Fn(&mut T, &mut RngStream) -> Result<()> + Sync,
{
    let chunks = n_samples.div_ceil(MC_CHUNK);
    let parts: Vec<T> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream(base_seed, StreamId::MonteCarlo { chunk: c as u64 });
            let count = MC_CHUNK.min(n_samples - c * MC_CHUNK);
            let mut acc = init();
            for _ in 0..count {
                body(&mut acc, &mut rng)?;
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    Ok(parts.iter().fold(init(), merge))
}

/// Exact value oracle bound to one environment and policy; the enumeration
/// cap is checked once up front.
pub(crate) struct ValueOracle<'a> {
    env: &'a EnvModel,
    policy: &'a PolicyModel,
}

impl<'a> ValueOracle<'a> {
    pub(crate) fn new(env: &'a EnvModel, policy: &'a PolicyModel) -> Result<Self> {
        env.check_policy(policy)?;
        env.check_enumeration(crate::env::DEFAULT_ENUMERATION_CAP)?;
        Ok(ValueOracle { env, policy })
    }

    pub(crate) fn value(&self, theta: &ParamVector) -> Result<f64> {
        Ok(self.env.enumerate_value(&self.policy.table(theta)?))
    }
}

/// V_μ(θ) = E_{v′∼ball}[V(θ + μv′)] by Monte Carlo over the exact value oracle.
/// With μ = 0 this is V(θ) exactly.
pub fn smoothed_value(
    env: &EnvModel,
    policy: &PolicyModel,
    theta: &ParamVector,
    mu: f64,
    n_samples: usize,
    rng: &mut RngStream,
) -> Result<ScalarEstimate> {
    policy.check_theta(theta)?;
    let oracle = ValueOracle::new(env, policy)?;
    check_mc_args(mu, n_samples)?;
    if mu == 0.0 {
        return Ok(ScalarEstimate {
            mean: oracle.value(theta)?,
            stderr: 0.0,
            samples: n_samples,
        });
    }
    let d = theta.len();
    let base: u64 = rng.random();
    let (sum, sum_sq, count) = chunked_monte_carlo(
        n_samples,
        base,
        || (0.0, 0.0, 0usize),
        |acc, rng| {
            let u = sample_ball(d, rng)?;
            let v = oracle.value(&theta.offset(mu, &u))?;
            acc.0 += v;
            acc.1 += v * v;
            acc.2 += 1;
            Ok(())
        },
        |a, b| (a.0 + b.0, a.1 + b.1, a.2 + b.2),
    )?;
    let n = count as f64;
    let mean = sum / n;
    let stderr = if count > 1 {
        (((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0) / n).sqrt()
    } else {
        0.0
    };
    Ok(ScalarEstimate {
        mean,
        stderr,
        samples: count,
    })
}

/// ∇V_μ(θ) ≈ mean of (d/μ)(V(θ + μv) − V(θ)) v over sphere directions, using
/// the exact value oracle (no preference noise).
pub fn smoothed_gradient(
    env: &EnvModel,
    policy: &PolicyModel,
    theta: &ParamVector,
    mu: f64,
    n_samples: usize,
    rng: &mut RngStream,
) -> Result<VectorEstimate> {
    policy.check_theta(theta)?;
    let oracle = ValueOracle::new(env, policy)?;
    check_mc_args(mu, n_samples)?;
    if mu == 0.0 {
        return Err(Error::Contract(
            "smoothed gradient needs a positive perturbation distance".into(),
        ));
    }
    let d = theta.len();
    let base_value = oracle.value(theta)?;
    let seed: u64 = rng.random();
    let moments = chunked_monte_carlo(
        n_samples,
        seed,
        || VectorMoments::new(d),
        |acc, rng| {
            let dir = sample_sphere_direction(d, rng)?;
            let diff = oracle.value(&theta.offset(mu, &dir.v))? - base_value;
            acc.push(&gradient_estimate(d, mu, diff, &dir)?);
            Ok(())
        },
        VectorMoments::merge,
    )?;
    Ok(moments.finish())
}

fn check_mc_args(mu: f64, n_samples: usize) -> Result<()> {
    if !(mu >= 0.0 && mu.is_finite()) {
        return Err(Error::Contract(format!(
            "perturbation distance must be ≥ 0, got {mu}"
        )));
    }
    if n_samples == 0 {
        return Err(Error::Contract(
            "Monte Carlo needs at least one sample".into(),
        ));
    }
    Ok(())
}

/// Empirical second moment E[vvᵀ] (row-major d × d) of `n` directions.
pub fn empirical_second_moment(
    d: usize,
    n: usize,
    base_seed: u64,
    sampler: impl Fn(&mut RngStream) -> Result<DirectionSample> + Sync,
) -> Result<Vec<f64>> {
    let sum = chunked_monte_carlo(
        n,
        base_seed,
        || vec![0.0; d * d],
        |acc, rng| {
            let v = sampler(rng)?.v;
            for i in 0..d {
                for j in 0..d {
                    acc[i * d + j] += v[i] * v[j];
                }
            }
            Ok(())
        },
        |mut a, b| {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
            a
        },
    )?;
    Ok(sum.into_iter().map(|x| x / n as f64).collect())
}

/// ‖M − I/d‖_F for a row-major d × d matrix.
pub fn isotropy_error(moment: &[f64], d: usize) -> f64 {
    let mut acc = 0.0;
    for i in 0..d {
        for j in 0..d {
            let target = if i == j { 1.0 / d as f64 } else { 0.0 };
            acc += (moment[i * d + j] - target).powi(2);
        }
    }
    acc.sqrt()
}
