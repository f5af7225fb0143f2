//! Ground-truth gradients and Monte Carlo checks of the estimator error bounds.
//!
//! Every `validate_*` function is deterministic given its seed and returns a
//! [`Report`] of one-sided line items: an empirical quantity, the theoretical
//! upper bound it must not exceed, and the Monte Carlo slack granted on top.

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::env::EnvModel;
use crate::error::{Error, Result};
use crate::optimizer::{Algorithm, FeedbackChannel, HyperParams, Optimizer, RunOptions};
use crate::perturb::{
    chunked_monte_carlo, empirical_second_moment, isotropy_error, sample_block_direction,
    sample_sphere_direction, smoothed_gradient, smoothed_value, ValueOracle, VectorMoments,
};
use crate::policy::{l2_norm, ParamVector, PolicyModel};
use crate::preference::{estimate_from_count, minimum_queries, LinkFunction};
use crate::rng::{stream, StreamId};

/// Default central-difference step.
pub const DEFAULT_FD_STEP: f64 = 1e-5;
/// Minimum number of trials for the concentration checks.
pub const MIN_TRIALS: usize = 1000;
/// Declared smoothness constant of the bundled chain benchmark
/// (`chain(2, 2, 0.2)`, tabular, d = 8).
pub const CHAIN_SMOOTHNESS: f64 = 0.25;
/// Tolerance on ‖E[vvᵀ] − I/d‖_F and on the block identity.
pub const ISOTROPY_TOL: f64 = 0.02;
/// Entrywise tolerance on the block second moment.
pub const BLOCK_ENTRY_TOL: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineItem {
    pub check: String,
    pub params: serde_json::Value,
    pub empirical: f64,
    pub bound: f64,
    pub slack: f64,
    pub pass: bool,
}

impl LineItem {
    /// Passes iff `empirical ≤ bound + slack`.
    pub fn upper(
        check: impl Into<String>,
        params: serde_json::Value,
        empirical: f64,
        bound: f64,
        slack: f64,
    ) -> Self {
        LineItem {
            check: check.into(),
            params,
            empirical,
            bound,
            slack,
            pass: empirical.is_finite() && empirical <= bound + slack,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Report {
    pub items: Vec<LineItem>,
}

impl Report {
    pub fn passed(&self) -> bool {
        !self.items.is_empty() && self.items.iter().all(|i| i.pass)
    }

    pub fn extend(&mut self, other: Report) {
        self.items.extend(other.items);
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// A fixed, generic evaluation point: θ_i = sin(0.7 i) / 2.
pub fn reference_theta(dim: usize) -> ParamVector {
    ParamVector::new((0..dim).map(|i| 0.5 * (0.7 * i as f64).sin()).collect())
        .expect("finite entries")
}

/// Central differences (f(x + h e_i) − f(x − h e_i)) / 2h.
pub fn central_difference(
    f: impl Fn(&[f64]) -> Result<f64>,
    x: &[f64],
    h: f64,
) -> Result<Vec<f64>> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::Contract(format!(
            "finite-difference step must be positive, got {h}"
        )));
    }
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + h;
            let plus = f(&probe)?;
            probe[i] = x[i] - h;
            let minus = f(&probe)?;
            probe[i] = x[i];
            Ok((plus - minus) / (2.0 * h))
        })
        .collect()
}

/// ∇V(π_θ) by central differences over the exact value oracle.
pub fn finite_diff_gradient(
    env: &EnvModel,
    policy: &PolicyModel,
    theta: &ParamVector,
    h: f64,
) -> Result<Vec<f64>> {
    policy.check_theta(theta)?;
    let oracle = ValueOracle::new(env, policy)?;
    central_difference(
        |x| oracle.value(&ParamVector::new(x.to_vec())?),
        theta.as_slice(),
        h,
    )
}

/// ‖∇V(π_θ)‖₂² at the default step.
pub fn stationarity_metric(
    env: &EnvModel,
    policy: &PolicyModel,
    theta: &ParamVector,
) -> Result<f64> {
    let g = finite_diff_gradient(env, policy, theta, DEFAULT_FD_STEP)?;
    Ok(g.iter().map(|x| x * x).sum())
}

fn check_trials(trials: usize) -> Result<()> {
    if trials < MIN_TRIALS {
        return Err(Error::Contract(format!(
            "at least {MIN_TRIALS} trials are required, got {trials}"
        )));
    }
    Ok(())
}

/// |p̂ − P(τ₁ ≻ τ₀)| for `trials` independent blocks of M queries.
pub fn preference_deviations(
    sigma: &LinkFunction,
    r1: f64,
    r0: f64,
    m: usize,
    trials: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let p = sigma.preference_probability(r1, r0)?;
    let trim = sigma.trim_level()?;
    chunked_monte_carlo(
        trials,
        seed,
        Vec::new,
        |acc: &mut Vec<f64>, rng| {
            let ones = sigma.query_feedback(r1, r0, m, rng)?;
            acc.push((estimate_from_count(ones, m, trim)?.p_hat - p).abs());
            Ok(())
        },
        |mut a, b| {
            a.extend_from_slice(b);
            a
        },
    )
}

/// Frequency of |p̂ − p| > √(log(1/δ)/M) against δ, with slack 2√(δ/trials).
pub fn validate_concentration(
    sigma: &LinkFunction,
    r1: f64,
    r0: f64,
    m: usize,
    trials: usize,
    delta: f64,
    seed: u64,
) -> Result<Report> {
    check_trials(trials)?;
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Contract(format!(
            "confidence level δ = {delta} must lie in (0, 1)"
        )));
    }
    let radius = ((1.0 / delta).ln() / m as f64).sqrt();
    let deviations = preference_deviations(sigma, r1, r0, m, trials, seed)?;
    let violations = deviations.iter().filter(|&&x| x > radius).count();
    let freq = violations as f64 / trials as f64;
    Ok(Report {
        items: vec![LineItem::upper(
            "concentration",
            json!({
                "p": sigma.preference_probability(r1, r0)?,
                "r1": r1, "r0": r0, "M": m, "trials": trials,
                "delta": delta, "radius": radius, "seed": seed,
            }),
            freq,
            delta,
            2.0 * (delta / trials as f64).sqrt(),
        )],
    })
}

/// First and second absolute moments of σ⁻¹(p̂) − (r1 − r0) against
/// L√(2 log M/M) + 2H/M² and 2L² log M/M + 4H²/M².
pub fn validate_reward_bias(
    sigma: &LinkFunction,
    r1: f64,
    r0: f64,
    m: usize,
    trials: usize,
    seed: u64,
) -> Result<Report> {
    check_trials(trials)?;
    let lip = sigma.lipschitz_inv()?;
    let h = sigma.horizon();
    let floor = minimum_queries(h, lip);
    if m < floor {
        return Err(Error::Contract(format!(
            "M = {m} is below the query floor {floor}"
        )));
    }
    let trim = sigma.trim_level()?;
    let gap = r1 - r0;
    let (abs_sum, sq_sum) = chunked_monte_carlo(
        trials,
        seed,
        || (0.0, 0.0),
        |acc, rng| {
            let ones = sigma.query_feedback(r1, r0, m, rng)?;
            let err = sigma.inverse(estimate_from_count(ones, m, trim)?.p_hat)? - gap;
            acc.0 += err.abs();
            acc.1 += err * err;
            Ok(())
        },
        |a, b| (a.0 + b.0, a.1 + b.1),
    )?;
    let mf = m as f64;
    let params =
        json!({"r1": r1, "r0": r0, "M": m, "trials": trials, "L": lip, "H": h, "seed": seed});
    Ok(Report {
        items: vec![
            LineItem::upper(
                "reward-bias/first-moment",
                params.clone(),
                abs_sum / trials as f64,
                lip * (2.0 * mf.ln() / mf).sqrt() + 2.0 * h / (mf * mf),
                0.0,
            ),
            LineItem::upper(
                "reward-bias/second-moment",
                params,
                sq_sum / trials as f64,
                2.0 * lip * lip * mf.ln() / mf + 4.0 * h * h / (mf * mf),
                0.0,
            ),
        ],
    })
}

/// Smoothed-function properties at θ: value gap, gradient gap and gradient
/// noise second moment, each against its bound plus three standard errors.
#[allow(clippy::too_many_arguments)]
pub fn validate_smoothing(
    env: &EnvModel,
    policy: &PolicyModel,
    theta: &ParamVector,
    mu: f64,
    lipschitz: f64,
    n_samples: usize,
    seed: u64,
) -> Result<Report> {
    let d = theta.len() as f64;
    let value = env.exact_value(policy, theta)?;
    let grad = finite_diff_gradient(env, policy, theta, DEFAULT_FD_STEP)?;
    let grad_sq = grad.iter().map(|x| x * x).sum::<f64>();
    let params =
        json!({"mu": mu, "L": lipschitz, "d": theta.len(), "samples": n_samples, "seed": seed});

    let smoothed = smoothed_value(
        env,
        policy,
        theta,
        mu,
        n_samples,
        &mut stream(seed, StreamId::Custom { tag: 1, index: 0 }),
    )?;
    let (grad_gap, grad_se, noise, noise_se) = if mu == 0.0 {
        // V_μ → V and the noise moment → E[(d⟨∇V, v⟩)²] = d‖∇V‖².
        (0.0, 0.0, d * grad_sq, 0.0)
    } else {
        let g = smoothed_gradient(
            env,
            policy,
            theta,
            mu,
            n_samples,
            &mut stream(seed, StreamId::Custom { tag: 1, index: 1 }),
        )?;
        let diff: Vec<f64> = g.mean.iter().zip(&grad).map(|(a, b)| a - b).collect();
        (
            l2_norm(&diff),
            l2_norm(&g.stderr),
            g.mean_sq_norm,
            g.mean_sq_norm_stderr,
        )
    };
    Ok(Report {
        items: vec![
            LineItem::upper(
                "smoothing/value-gap",
                params.clone(),
                (smoothed.mean - value).abs(),
                lipschitz * mu * mu / 2.0,
                3.0 * smoothed.stderr,
            ),
            LineItem::upper(
                "smoothing/gradient-gap",
                params.clone(),
                grad_gap,
                mu * lipschitz * d / 2.0,
                3.0 * grad_se,
            ),
            LineItem::upper(
                "smoothing/gradient-noise",
                params,
                noise,
                2.0 * d * grad_sq + mu * mu * lipschitz * lipschitz * d * d / 2.0,
                3.0 * noise_se,
            ),
        ],
    })
}

/// An arbitrary fixed test vector for the block identity.
fn probe_vector(d: usize) -> Vec<f64> {
    (0..d)
        .map(|i| (i as f64 + 1.0) * if i % 2 == 0 { 1.0 } else { -0.5 })
        .collect()
}

/// ‖mean⟨g, v⟩v − g/d‖ over block directions, for the fixed probe g.
pub fn block_identity_error(d: usize, k: usize, samples: usize, seed: u64) -> Result<(f64, f64)> {
    let g = probe_vector(d);
    let sum = chunked_monte_carlo(
        samples,
        seed,
        || vec![0.0; d],
        |acc, rng| {
            let v = sample_block_direction(d, k, rng)?.v;
            let dot: f64 = g.iter().zip(&v).map(|(a, b)| a * b).sum();
            acc.iter_mut().zip(&v).for_each(|(a, x)| *a += dot * x);
            Ok(())
        },
        |mut a, b| {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
            a
        },
    )?;
    let err: Vec<f64> = sum
        .iter()
        .zip(&g)
        .map(|(s, gi)| s / samples as f64 - gi / d as f64)
        .collect();
    Ok((l2_norm(&err), l2_norm(&g)))
}

/// Isotropy of both samplers and the block identity E[⟨g, v⟩v] = g/d.
pub fn validate_sampler_moments(
    sphere_dim: usize,
    block_dim: usize,
    block_size: usize,
    samples: usize,
    seed: u64,
) -> Result<Report> {
    let sphere = empirical_second_moment(sphere_dim, samples, seed, |r| {
        sample_sphere_direction(sphere_dim, r)
    })?;
    let block = empirical_second_moment(block_dim, samples, seed ^ 0x5EED, |r| {
        sample_block_direction(block_dim, block_size, r)
    })?;
    let entry_err = (0..block_dim * block_dim)
        .map(|ij| {
            let target = if ij / block_dim == ij % block_dim {
                1.0 / block_dim as f64
            } else {
                0.0
            };
            (block[ij] - target).abs()
        })
        .fold(0.0, f64::max);
    let (identity_err, g_norm) =
        block_identity_error(block_dim, block_size, samples, seed ^ 0xB10C)?;
    let block_params = json!({"d": block_dim, "K": block_size, "samples": samples, "seed": seed});
    Ok(Report {
        items: vec![
            LineItem::upper(
                "sampler/sphere-isotropy",
                json!({"d": sphere_dim, "samples": samples, "seed": seed}),
                isotropy_error(&sphere, sphere_dim),
                ISOTROPY_TOL,
                0.0,
            ),
            LineItem::upper(
                "sampler/block-isotropy",
                block_params.clone(),
                isotropy_error(&block, block_dim),
                ISOTROPY_TOL,
                0.0,
            ),
            LineItem::upper(
                "sampler/block-entries",
                block_params.clone(),
                entry_err,
                BLOCK_ENTRY_TOL,
                0.0,
            ),
            LineItem::upper(
                "sampler/block-identity",
                block_params,
                identity_err,
                ISOTROPY_TOL * g_norm,
                0.0,
            ),
        ],
    })
}

/// Mean of the diagnostic-mode ZPG estimate ĝ (exact value differences) over
/// fresh directions against an independent `smoothed_gradient` estimate. The
/// reported figure is the largest per-coordinate z-score, bounded by 3.
pub fn validate_grad_unbiasedness(
    env: &EnvModel,
    policy: &PolicyModel,
    theta: &ParamVector,
    mu: f64,
    samples: usize,
    seed: u64,
) -> Result<Report> {
    let link = LinkFunction::logistic(env.horizon() as f64)?;
    let hp = HyperParams {
        iterations: 0,
        pairs: 1,
        queries: 1,
        mu,
        alpha: 1.0,
        block_size: None,
        trim: link.trim_level()?,
        lipschitz: 1.0,
        seed,
    };
    let opt = Optimizer::new(env, policy, &link, hp, Algorithm::Zpg)?.with_options(RunOptions {
        channel: FeedbackChannel::ExactValue,
        ..RunOptions::default()
    })?;
    let d = theta.len();
    let estimator = (0..samples.div_ceil(1024))
        .map(|c| c * 1024..((c + 1) * 1024).min(samples))
        .collect::<Vec<_>>();
    use rayon::prelude::*;
    let parts: Vec<VectorMoments> = estimator
        .into_par_iter()
        .map(|range| {
            let mut acc = VectorMoments::new(d);
            for t in range {
                acc.push(&opt.gradient_sample(theta, t)?.gradient);
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    let est = parts
        .iter()
        .fold(VectorMoments::new(d), VectorMoments::merge)
        .finish();
    let reference = smoothed_gradient(
        env,
        policy,
        theta,
        mu,
        samples,
        &mut stream(seed, StreamId::Custom { tag: 2, index: 0 }),
    )?;
    let worst_z = (0..d)
        .map(|i| {
            let se = (est.stderr[i].powi(2) + reference.stderr[i].powi(2)).sqrt();
            let gap = (est.mean[i] - reference.mean[i]).abs();
            if se == 0.0 {
                if gap == 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            } else {
                gap / se
            }
        })
        .fold(0.0, f64::max);
    Ok(Report {
        items: vec![LineItem::upper(
            "grad-unbiasedness",
            json!({"mu": mu, "d": d, "samples": samples, "seed": seed,
                   "estimate": est.mean, "smoothed_gradient": reference.mean}),
            worst_z,
            3.0,
            0.0,
        )],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env;

    fn sig(x: f64) -> f64 {
        1.0 / (1.0 + (-x).exp())
    }

    /// Closed form for the two-arm bandit: V = r₀ + (r₁ − r₀) σ(θ₁ − θ₀).
    fn two_arm_gradient(r: [f64; 2], theta: [f64; 2]) -> [f64; 2] {
        let s = sig(theta[1] - theta[0]);
        let g = (r[1] - r[0]) * s * (1.0 - s);
        [-g, g]
    }

    #[test]
    fn matches_two_arm_closed_form() {
        let r = [0.2, 0.9];
        let e = env::bandit(&r).unwrap();
        let p = PolicyModel::tabular(1, 2, 1).unwrap();
        for theta in [[0.0, 0.0], [0.4, -1.3], [2.0, 0.5]] {
            let fd = finite_diff_gradient(&e, &p, &ParamVector::new(theta.to_vec()).unwrap(), 1e-5)
                .unwrap();
            let exact = two_arm_gradient(r, theta);
            for i in 0..2 {
                assert!((fd[i] - exact[i]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn stationarity_examples() {
        let e = env::bandit(&[0.0, 1.0]).unwrap();
        let p = PolicyModel::tabular(1, 2, 1).unwrap();
        let uniform = stationarity_metric(&e, &p, &ParamVector::zeros(2)).unwrap();
        assert!((uniform - 0.125).abs() < 1e-6);
        let saturated =
            stationarity_metric(&e, &p, &ParamVector::new(vec![-6.0, 6.0]).unwrap()).unwrap();
        assert!(saturated <= 1e-4);
        // relabeled arms with mirrored logits
        let swapped = env::bandit(&[1.0, 0.0]).unwrap();
        let a = stationarity_metric(&e, &p, &ParamVector::new(vec![0.3, 0.8]).unwrap()).unwrap();
        let b =
            stationarity_metric(&swapped, &p, &ParamVector::new(vec![0.8, 0.3]).unwrap()).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn constant_landscape_has_zero_gradient() {
        let e = env::bandit(&[0.5, 0.5, 0.5]).unwrap();
        let p = PolicyModel::tabular(1, 3, 1).unwrap();
        let g = finite_diff_gradient(
            &e,
            &p,
            &ParamVector::new(vec![0.1, 2.0, -1.0]).unwrap(),
            1e-5,
        )
        .unwrap();
        assert!(g.iter().all(|x| x.abs() < 1e-10));
    }

    #[test]
    fn central_difference_order() {
        let quad = |x: &[f64]| Ok(3.0 * x[0] * x[0] - x[0] * x[1] + 0.5 * x[1] * x[1]);
        let g = central_difference(quad, &[0.7, -0.2], 1e-3).unwrap();
        assert!((g[0] - (6.0 * 0.7 + 0.2)).abs() < 1e-9);
        assert!((g[1] - (-0.7 - 0.2)).abs() < 1e-9);

        let wavy = |x: &[f64]| Ok(x[0].sin());
        let err = |h: f64| (central_difference(wavy, &[0.3], h).unwrap()[0] - 0.3f64.cos()).abs();
        let (e1, e2, e3) = (err(0.1), err(0.05), err(0.025));
        assert!(e2 <= 1.1 * e1 / 4.0 && e3 <= 1.1 * e2 / 4.0);
        assert!(central_difference(wavy, &[0.3], 0.0).is_err());
    }

    #[test]
    fn richardson_consistency_on_bundled_envs() {
        let cases = [
            (env::chain(2, 2, 0.2).unwrap(), 2, 2),
            (env::windy_grid(2, 0.3).unwrap(), 4, 4),
            (env::coverage_chain(3, 3, 0.1).unwrap(), 3, 2),
        ];
        for (e, s, a) in cases {
            let p = PolicyModel::tabular(s, a, e.horizon()).unwrap();
            let theta =
                ParamVector::new((0..p.dim()).map(|i| (i as f64 * 0.7).sin()).collect()).unwrap();
            let h = 0.02;
            let d1 = finite_diff_gradient(&e, &p, &theta, h).unwrap();
            let d2 = finite_diff_gradient(&e, &p, &theta, h / 2.0).unwrap();
            let d3 = finite_diff_gradient(&e, &p, &theta, h / 4.0).unwrap();
            for i in 0..p.dim() {
                let predicted = 4.0 * (d2[i] - d3[i]).abs();
                assert!(
                    (d1[i] - d2[i]).abs() <= 5.0 * predicted + 1e-9,
                    "coordinate {i}"
                );
            }
        }
    }

    #[test]
    fn concentration_report() {
        let l = LinkFunction::logistic(2.0).unwrap();
        let r = validate_concentration(&l, 1.0, 1.0, 100, 4000, 0.05, 1).unwrap();
        assert!(r.passed(), "{}", r.to_json());
        let again = validate_concentration(&l, 1.0, 1.0, 100, 4000, 0.05, 1).unwrap();
        assert_eq!(r, again);
        assert!(validate_concentration(&l, 1.0, 1.0, 100, 10, 0.05, 1).is_err());
        // at the trim boundary p = σ(−H)
        let edge = validate_concentration(&l, 0.0, 2.0, 100, 4000, 0.05, 2).unwrap();
        assert!(edge.passed());
    }

    #[test]
    fn deviation_shrinks_with_m() {
        let l = LinkFunction::logistic(1.0).unwrap();
        let median = |m| {
            let mut v = preference_deviations(&l, 0.5, 0.5, m, 2000, 4).unwrap();
            v.sort_by(f64::total_cmp);
            v[v.len() / 2]
        };
        assert!(median(10_000) / median(100) <= 0.15);
    }

    #[test]
    fn reward_bias_symmetric_case() {
        let l = LinkFunction::logistic(1.0).unwrap();
        let r = validate_reward_bias(&l, 0.4, 0.4, 1024, 2000, 3).unwrap();
        assert!(r.passed());
        assert_eq!(r.items.len(), 2);
    }

    #[test]
    fn second_moment_decreases_with_m() {
        let l = LinkFunction::logistic(1.0).unwrap();
        let second = |m| {
            validate_reward_bias(&l, 0.8, 0.0, m, 4000, 7)
                .unwrap()
                .items[1]
                .empirical
        };
        let (a, b, c) = (second(64), second(256), second(1024));
        assert!(a > b && b > c, "{a} {b} {c}");
    }

    #[test]
    fn smoothing_zero_radius_degenerates() {
        let e = env::chain(2, 2, 0.2).unwrap();
        let p = PolicyModel::tabular(2, 2, 2).unwrap();
        let theta = ParamVector::new(vec![0.1; 8]).unwrap();
        let r = validate_smoothing(&e, &p, &theta, 0.0, 1.0, 100, 0).unwrap();
        assert!(r.passed());
        assert_eq!(r.items[0].empirical, 0.0);
        assert_eq!(r.items[1].empirical, 0.0);
    }

    #[test]
    fn smoothing_value_gap_scales_with_mu_squared() {
        let e = env::chain(2, 2, 0.2).unwrap();
        let p = PolicyModel::tabular(2, 2, 2).unwrap();
        let theta = ParamVector::new(vec![0.5, -0.5, 0.2, 0.1, -0.3, 0.4, 0.0, 0.6]).unwrap();
        let gap = |mu| {
            let mut gaps: Vec<f64> = (0..5)
                .map(|s| {
                    validate_smoothing(&e, &p, &theta, mu, 1.0, 20_000, s)
                        .unwrap()
                        .items[0]
                        .empirical
                })
                .collect();
            gaps.sort_by(f64::total_cmp);
            gaps[2]
        };
        assert!(gap(0.4) <= 4.0 * gap(0.2) * 1.5);
    }

    #[test]
    fn sampler_moments_report() {
        let r = validate_sampler_moments(6, 8, 3, 100_000, 11).unwrap();
        assert!(r.passed(), "{}", r.to_json());
    }

    #[test]
    fn report_line_items_serialize_with_schema_keys() {
        let item = LineItem::upper("x", json!({"a": 1}), 0.5, 1.0, 0.1);
        let v: serde_json::Value = serde_json::to_value(&item).unwrap();
        for k in ["check", "params", "empirical", "bound", "slack", "pass"] {
            assert!(v.get(k).is_some(), "missing {k}");
        }
        assert!(!LineItem::upper("x", json!({}), 2.0, 1.0, 0.5).pass);
    }
}
