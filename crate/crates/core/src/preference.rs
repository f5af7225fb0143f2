//! Link functions, the simulated preference oracle and the trimmed
//! preference-probability estimator.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Slack allowed when checking that a reward gap lies in [−H, H] or a
/// probability lies in [Δ, 1−Δ].
const EDGE_TOL: f64 = 1e-9;
const BISECTION_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub enum LinkKind {
    /// σ(x) = 1 / (1 + e^{−x}), the Bradley–Terry link.
    Logistic,
    /// Piecewise-linear interpolation through strictly increasing knots.
    Table { xs: Vec<f64>, ps: Vec<f64> },
}

/// A strictly increasing link σ: [−H, H] → (0, 1) with σ(0) = 1/2.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkFunction {
    kind: LinkKind,
    horizon: f64,
    declared_lipschitz: Option<f64>,
}

impl LinkFunction {
    pub fn logistic(horizon: f64) -> Result<Self> {
        check_horizon(horizon)?;
        Ok(LinkFunction {
            kind: LinkKind::Logistic,
            horizon,
            declared_lipschitz: None,
        })
    }

    /// Builds a table link. Knots must be strictly increasing in both
    /// coordinates, lie in [0, 1], cover [−H, H] and pass through (0, 1/2)
    /// within 1e-9.
    pub fn table(xs: Vec<f64>, ps: Vec<f64>, horizon: f64) -> Result<Self> {
        check_horizon(horizon)?;
        if xs.len() != ps.len() || xs.len() < 2 {
            return Err(Error::config(
                "table link needs matching `xs` and `ps` with at least two knots",
            ));
        }
        if xs.iter().chain(&ps).any(|v| !v.is_finite()) {
            return Err(Error::config("table link knots must be finite"));
        }
        for w in xs.windows(2).zip(ps.windows(2)) {
            if w.0[1] <= w.0[0] || w.1[1] <= w.1[0] {
                return Err(Error::config("table link must be strictly increasing"));
            }
        }
        if ps[0] < 0.0 || ps[ps.len() - 1] > 1.0 {
            return Err(Error::config("table link probabilities must lie in [0, 1]"));
        }
        if xs[0] > -horizon || xs[xs.len() - 1] < horizon {
            return Err(Error::config(format!(
                "table link knots [{}, {}] do not cover [−H, H] = [{}, {}]",
                xs[0],
                xs[xs.len() - 1],
                -horizon,
                horizon
            )));
        }
        let link = LinkFunction {
            kind: LinkKind::Table { xs, ps },
            horizon,
            declared_lipschitz: None,
        };
        let mid = link.eval_unchecked(0.0);
        if (mid - 0.5).abs() > 1e-9 {
            return Err(Error::config(format!(
                "table link has σ(0) = {mid}, expected 1/2"
            )));
        }
        Ok(link)
    }

    /// Declares the Lipschitz constant of σ⁻¹ on [Δ, 1−Δ] instead of deriving it.
    pub fn with_lipschitz(mut self, lipschitz: f64) -> Result<Self> {
        if !(lipschitz > 0.0 && lipschitz.is_finite()) {
            return Err(Error::config(format!(
                "link Lipschitz constant must be positive, got {lipschitz}"
            )));
        }
        self.declared_lipschitz = Some(lipschitz);
        Ok(self)
    }

    pub fn kind(&self) -> &LinkKind {
        &self.kind
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// The user-declared σ⁻¹ Lipschitz constant, if any.
    pub fn declared_lipschitz(&self) -> Option<f64> {
        self.declared_lipschitz
    }

    /// Lipschitz constant of σ⁻¹ on [Δ, 1−Δ]. When not declared: 1/(Δ(1−Δ))
    /// for the logistic link, the steepest inverse segment for a table.
    pub fn lipschitz_inv(&self) -> Result<f64> {
        if let Some(l) = self.declared_lipschitz {
            return Ok(l);
        }
        let delta = self.trim_level()?;
        Ok(match &self.kind {
            LinkKind::Logistic => 1.0 / (delta * (1.0 - delta)),
            LinkKind::Table { xs, ps } => xs
                .windows(2)
                .zip(ps.windows(2))
                .filter(|(x, _)| x[1] > -self.horizon && x[0] < self.horizon)
                .map(|(x, p)| (x[1] - x[0]) / (p[1] - p[0]))
                .fold(0.0, f64::max),
        })
    }

    /// σ(x) for a reward gap x ∈ [−H, H].
    pub fn eval(&self, x: f64) -> Result<f64> {
        if !x.is_finite() || x.abs() > self.horizon + EDGE_TOL {
            return Err(Error::Domain(format!(
                "reward gap {x} outside [−H, H] with H = {}",
                self.horizon
            )));
        }
        Ok(self.eval_unchecked(x.clamp(-self.horizon, self.horizon)))
    }

    fn eval_unchecked(&self, x: f64) -> f64 {
        match &self.kind {
            LinkKind::Logistic => 1.0 / (1.0 + (-x).exp()),
            LinkKind::Table { xs, ps } => {
                let i = xs.partition_point(|&k| k <= x).clamp(1, xs.len() - 1);
                let t = (x - xs[i - 1]) / (xs[i] - xs[i - 1]);
                ps[i - 1] + t * (ps[i] - ps[i - 1])
            }
        }
    }

    /// min{σ(−H), 1 − σ(H)}.
    pub fn trim_level(&self) -> Result<f64> {
        let lo = self.eval_unchecked(-self.horizon);
        let hi = 1.0 - self.eval_unchecked(self.horizon);
        let delta = lo.min(hi);
        if delta.is_nan() || delta <= 0.0 {
            return Err(Error::config(format!(
                "degenerate link: σ(−H) = {lo}, 1 − σ(H) = {hi}; trim level must be positive"
            )));
        }
        Ok(delta)
    }

    /// σ⁻¹(p) for p ∈ [Δ, 1−Δ]; closed form for the logistic link, bisection
    /// on [−H, H] otherwise.
    pub fn inverse(&self, p: f64) -> Result<f64> {
        let delta = self.trim_level()?;
        if !(p >= delta - EDGE_TOL && p <= 1.0 - delta + EDGE_TOL) {
            return Err(Error::Contract(format!(
                "σ⁻¹ called with p = {p} outside [Δ, 1−Δ] = [{delta}, {}]; trim first",
                1.0 - delta
            )));
        }
        Ok(match &self.kind {
            LinkKind::Logistic => (p / (1.0 - p)).ln(),
            LinkKind::Table { .. } => self.bisect(p),
        })
    }

    fn bisect(&self, p: f64) -> f64 {
        let (mut lo, mut hi) = (-self.horizon, self.horizon);
        if p <= self.eval_unchecked(lo) {
            return lo;
        }
        if p >= self.eval_unchecked(hi) {
            return hi;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let v = self.eval_unchecked(mid);
            if (v - p).abs() <= BISECTION_TOL {
                return mid;
            }
            if v < p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// One Bernoulli(σ(r1 − r0)) preference bit: `true` means τ₁ ≻ τ₀.
    pub fn sample_feedback(&self, r1: f64, r0: f64, rng: &mut RngStream) -> Result<bool> {
        let p = self.preference_probability(r1, r0)?;
        Ok(rng.random::<f64>() < p)
    }

    /// P(τ₁ ≻ τ₀) = σ(r1 − r0), with both rewards in [0, H].
    pub fn preference_probability(&self, r1: f64, r0: f64) -> Result<f64> {
        for r in [r1, r0] {
            if !(r >= -EDGE_TOL && r <= self.horizon + EDGE_TOL) {
                return Err(Error::Domain(format!(
                    "trajectory reward {r} outside [0, H] with H = {}",
                    self.horizon
                )));
            }
        }
        self.eval(r1 - r0)
    }

    /// Number of `true` bits among `m` feedback queries on one pair.
    pub fn query_feedback(&self, r1: f64, r0: f64, m: usize, rng: &mut RngStream) -> Result<usize> {
        let p = self.preference_probability(r1, r0)?;
        Ok((0..m).filter(|_| rng.random::<f64>() < p).count())
    }
}

fn check_horizon(horizon: f64) -> Result<()> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::config(format!(
            "link horizon must be positive, got {horizon}"
        )));
    }
    Ok(())
}

/// Clamp into [Δ, 1−Δ].
pub fn trim(a: f64, delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta < 0.5) {
        return Err(Error::config(format!(
            "trim level {delta} must lie in (0, 1/2)"
        )));
    }
    Ok(a.max(delta).min(1.0 - delta))
}

/// Δ = min{σ(−H), 1−σ(H)}.
pub fn default_trim_level(sigma: &LinkFunction) -> Result<f64> {
    sigma.trim_level()
}

/// Smallest M for which the preference-noise terms of the analysis are
/// controlled: ⌈4 (H/L)²⌉.
pub fn minimum_queries(horizon: f64, lipschitz: f64) -> usize {
    (4.0 * (horizon / lipschitz).powi(2)).ceil().max(1.0) as usize
}

/// Trimmed empirical preference frequency over M feedback bits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PreferenceEstimate {
    pub p_hat: f64,
    pub m: usize,
    pub delta: f64,
}

/// p̂ = trim(mean(bits), Δ).
pub fn estimate_preference(bits: &[bool], delta: f64) -> Result<PreferenceEstimate> {
    let ones = bits.iter().filter(|&&b| b).count();
    estimate_from_count(ones, bits.len(), delta)
}

/// Same as [`estimate_preference`] from a count of ones.
pub fn estimate_from_count(ones: usize, m: usize, delta: f64) -> Result<PreferenceEstimate> {
    if m == 0 {
        return Err(Error::Contract(
            "preference estimate needs at least one feedback bit".into(),
        ));
    }
    if ones > m {
        return Err(Error::Contract(format!("{ones} positive bits out of {m}")));
    }
    Ok(PreferenceEstimate {
        p_hat: trim(ones as f64 / m as f64, delta)?,
        m,
        delta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use proptest::prelude::*;

    fn sigmoid_table(horizon: f64, knots: usize) -> LinkFunction {
        // symmetric table sampled from tanh, a non-logistic monotone link
        let xs: Vec<f64> = (0..knots)
            .map(|i| -horizon + 2.0 * horizon * i as f64 / (knots - 1) as f64)
            .collect();
        let ps = xs
            .iter()
            .map(|&x| 0.5 + 0.45 * (x / horizon).tanh())
            .collect();
        LinkFunction::table(xs, ps, horizon).unwrap()
    }

    #[test]
    fn logistic_values() {
        let l = LinkFunction::logistic(2.0).unwrap();
        assert_eq!(l.eval(0.0).unwrap(), 0.5);
        assert!((l.eval(3f64.ln()).unwrap() - 0.75).abs() < 1e-15);
        for i in -20..=20 {
            let x = i as f64 / 10.0;
            assert!((l.eval(x).unwrap() + l.eval(-x).unwrap() - 1.0).abs() < 1e-15);
        }
        assert!(matches!(l.eval(2.5), Err(Error::Domain(_))));
    }

    #[test]
    fn logistic_inverse() {
        let l = LinkFunction::logistic(2.0).unwrap();
        assert_eq!(l.inverse(0.5).unwrap(), 0.0);
        assert!((l.inverse(0.75).unwrap() - 3f64.ln()).abs() < 1e-15);
        assert!(matches!(l.inverse(0.01), Err(Error::Contract(_))));
    }

    #[test]
    fn table_round_trip() {
        let l = sigmoid_table(3.0, 61);
        let mut worst: f64 = 0.0;
        for i in 0..100 {
            let x = -3.0 + 6.0 * i as f64 / 99.0;
            let p = l.eval(x).unwrap();
            worst = worst.max((l.inverse(p).unwrap() - x).abs());
        }
        assert!(worst <= 1e-6, "worst round-trip error {worst}");
        assert!(l.eval(0.0).unwrap() == 0.5);
    }

    #[test]
    fn table_validation() {
        assert!(LinkFunction::table(vec![-1.0, 1.0], vec![0.3, 0.7], 2.0).is_err());
        assert!(LinkFunction::table(vec![-1.0, 1.0], vec![0.7, 0.3], 1.0).is_err());
        assert!(LinkFunction::table(vec![-1.0, 1.0], vec![0.2, 0.7], 1.0).is_err());
        let degenerate = LinkFunction::table(vec![-1.0, 1.0], vec![0.0, 1.0], 1.0).unwrap();
        assert!(matches!(
            default_trim_level(&degenerate),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn trim_examples() {
        assert_eq!(trim(0.5, 0.1).unwrap(), 0.5);
        assert_eq!(trim(0.02, 0.1).unwrap(), 0.1);
        assert_eq!(trim(0.99, 0.1).unwrap(), 0.9);
        assert!(trim(0.5, 0.5).is_err());
        assert!(trim(0.5, 0.0).is_err());
    }

    #[test]
    fn default_trim_levels() {
        let h1 = default_trim_level(&LinkFunction::logistic(1.0).unwrap()).unwrap();
        assert!((h1 - 1.0 / (1.0 + std::f64::consts::E)).abs() < 1e-15);
        assert!((h1 - 0.26894).abs() < 1e-5);
        let h4 = default_trim_level(&LinkFunction::logistic(4.0).unwrap()).unwrap();
        assert!((h4 - 0.01799).abs() < 1e-5);
        let l = LinkFunction::logistic(3.0).unwrap();
        assert!((l.eval(-3.0).unwrap() - (1.0 - l.eval(3.0).unwrap())).abs() < 1e-15);
    }

    #[test]
    fn default_lipschitz_for_logistic() {
        let l = LinkFunction::logistic(1.0).unwrap();
        let d = l.trim_level().unwrap();
        assert_eq!(l.lipschitz_inv().unwrap(), 1.0 / (d * (1.0 - d)));
        assert_eq!(
            l.clone()
                .with_lipschitz(2.0)
                .unwrap()
                .lipschitz_inv()
                .unwrap(),
            2.0
        );
        // the derived constant bounds the inverse slope on the trimmed interval
        let (a, b) = (d, d + 1e-6);
        let slope = (l.inverse(b).unwrap() - l.inverse(a).unwrap()) / (b - a);
        assert!(slope <= l.lipschitz_inv().unwrap() * (1.0 + 1e-6));
    }

    #[test]
    fn estimate_examples() {
        let e = estimate_preference(&[true; 7], 0.1).unwrap();
        assert_eq!(e.p_hat, 0.9);
        assert_eq!(e.m, 7);
        let e = estimate_preference(&[true, false, true, false], 0.1).unwrap();
        assert_eq!(e.p_hat, 0.5);
        assert!(matches!(
            estimate_preference(&[], 0.1),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn feedback_frequencies() {
        let l = LinkFunction::logistic(2.0).unwrap();
        let mut rng = seeded(3);
        let n = 100_000;
        let even = (0..n)
            .filter(|_| l.sample_feedback(0.7, 0.7, &mut rng).unwrap())
            .count();
        assert!((even as f64 / n as f64 - 0.5).abs() < 0.01);
        let skew = (0..n)
            .filter(|_| l.sample_feedback(3f64.ln(), 0.0, &mut rng).unwrap())
            .count();
        assert!((skew as f64 / n as f64 - 0.75).abs() < 0.01);
    }

    #[test]
    fn feedback_golden_sequence() {
        let l = LinkFunction::logistic(1.0).unwrap();
        let mut rng = seeded(42);
        let bits: String = (0..32)
            .map(|_| {
                if l.sample_feedback(0.8, 0.0, &mut rng).unwrap() {
                    '1'
                } else {
                    '0'
                }
            })
            .collect();
        assert_eq!(bits, GOLDEN_BITS);
    }

    const GOLDEN_BITS: &str = "10111110011001011111110111001111";

    #[test]
    fn concentration_bound_holds_empirically() {
        let l = LinkFunction::logistic(1.0).unwrap();
        let delta_trim = l.trim_level().unwrap();
        let r1 = 3f64.ln().min(1.0);
        let p = l.eval(r1).unwrap();
        let m = 100;
        let radius = ((1.0f64 / 0.05).ln() / m as f64).sqrt();
        let mut rng = seeded(8);
        let trials = 10_000;
        let violations = (0..trials)
            .filter(|_| {
                let ones = l.query_feedback(r1, 0.0, m, &mut rng).unwrap();
                let e = estimate_from_count(ones, m, delta_trim).unwrap();
                (e.p_hat - p).abs() > radius
            })
            .count();
        assert!(violations as f64 / trials as f64 <= 0.05);
    }

    #[test]
    fn minimum_query_floor() {
        assert_eq!(minimum_queries(1.0, 1.0), 4);
        assert_eq!(minimum_queries(2.0, 0.5), 64);
        assert_eq!(minimum_queries(1.0, 100.0), 1);
    }

    proptest! {
        #[test]
        fn clamp_domination(p_idx in 0usize..=100, o_idx in 0usize..=200) {
            let delta = 0.2;
            let p = delta + (1.0 - 2.0 * delta) * p_idx as f64 / 100.0;
            let o = o_idx as f64 / 200.0;
            prop_assert!((trim(o, delta).unwrap() - p).abs() <= (o - p).abs() + 1e-15);
        }

        #[test]
        fn estimate_in_trim_band(ones in 0usize..=50, extra in 0usize..50, delta in 0.01f64..0.49) {
            let m = ones + extra + 1;
            let e = estimate_from_count(ones, m, delta).unwrap();
            prop_assert!(e.p_hat >= delta && e.p_hat <= 1.0 - delta);
        }

        #[test]
        fn logistic_round_trip(x in -4.0f64..4.0) {
            let l = LinkFunction::logistic(4.0).unwrap();
            prop_assert!((l.inverse(l.eval(x).unwrap()).unwrap() - x).abs() <= 1e-6);
        }
    }
}
