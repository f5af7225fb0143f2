//! Finite-horizon episodic environments with trajectory-level rewards and
//! exact value oracles.

mod bundled;
mod json;

pub use bundled::{bandit, chain, coverage_chain, windy_grid};
pub use json::{EnvSpec, RewardSpec};

use rand::Rng;

use crate::error::{Error, Result};
use crate::policy::{ParamVector, PolicyModel, PolicyTable};
use crate::rng::RngStream;

/// Default ceiling on the number of (state, action) paths the enumeration
/// oracle will visit.
pub const DEFAULT_ENUMERATION_CAP: u64 = 1_000_000;

const PROB_TOL: f64 = 1e-12;

/// How a trajectory is scored.
#[derive(Debug, Clone, PartialEq)]
pub enum Reward {
    /// Σ_h r_h(s_h, a_h) with every entry in [0, 1]; flat `[step][state][action]`.
    Additive { table: Vec<f64> },
    /// H · (distinct states visited) / |S|.
    Coverage,
}

/// An episodic MDP (S, A, H, P, μ₀) with a trajectory reward in [0, H].
#[derive(Debug, Clone, PartialEq)]
pub struct EnvModel {
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    /// Flat `[step][state][action][next_state]`.
    transitions: Vec<f64>,
    initial_dist: Vec<f64>,
    reward: Reward,
}

/// A length-H sequence of (state, action) pairs.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Trajectory {
    steps: Vec<(usize, usize)>,
}

impl Trajectory {
    pub fn new(env: &EnvModel, steps: Vec<(usize, usize)>) -> Result<Self> {
        if steps.len() != env.horizon {
            return Err(Error::Dimension {
                what: "trajectory length",
                expected: env.horizon,
                got: steps.len(),
            });
        }
        for (h, &(s, a)) in steps.iter().enumerate() {
            if s >= env.num_states || a >= env.num_actions {
                return Err(Error::config(format!(
                    "trajectory step {h} has out-of-range pair ({s}, {a})"
                )));
            }
        }
        Ok(Trajectory { steps })
    }

    pub fn steps(&self) -> &[(usize, usize)] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

fn check_distribution(what: &str, row: &[f64]) -> Result<()> {
    if let Some(x) = row.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
        return Err(Error::config(format!("{what} has an invalid entry {x}")));
    }
    let total: f64 = row.iter().sum();
    if (total - 1.0).abs() > PROB_TOL {
        return Err(Error::config(format!(
            "{what} sums to {total:.15}, not 1 (tolerance {PROB_TOL:e})"
        )));
    }
    Ok(())
}

impl EnvModel {
    /// Validates and builds an environment. Transition rows and μ₀ must sum to
    /// one within 1e-12; nothing is renormalized.
    pub fn new(
        num_states: usize,
        num_actions: usize,
        horizon: usize,
        transitions: Vec<f64>,
        initial_dist: Vec<f64>,
        reward: Reward,
    ) -> Result<Self> {
        if num_states == 0 || num_actions == 0 || horizon == 0 {
            return Err(Error::config(format!(
                "environment dimensions must be positive (|S|={num_states}, |A|={num_actions}, H={horizon})"
            )));
        }
        let expected = horizon * num_states * num_actions * num_states;
        if transitions.len() != expected {
            return Err(Error::Dimension {
                what: "transition kernel entries",
                expected,
                got: transitions.len(),
            });
        }
        for (i, row) in transitions.chunks(num_states).enumerate() {
            let a = i % num_actions;
            let s = (i / num_actions) % num_states;
            let h = i / (num_actions * num_states);
            check_distribution(&format!("transition row P_{h}(·|{s},{a})"), row)?;
        }
        if initial_dist.len() != num_states {
            return Err(Error::Dimension {
                what: "initial distribution",
                expected: num_states,
                got: initial_dist.len(),
            });
        }
        check_distribution("initial distribution", &initial_dist)?;
        if let Reward::Additive { table } = &reward {
            let expected = horizon * num_states * num_actions;
            if table.len() != expected {
                return Err(Error::Dimension {
                    what: "reward table entries",
                    expected,
                    got: table.len(),
                });
            }
            if let Some(i) = table.iter().position(|r| !(0.0..=1.0).contains(r)) {
                return Err(Error::config(format!(
                    "per-step reward entry {i} = {} is outside [0, 1]",
                    table[i]
                )));
            }
        }
        Ok(EnvModel {
            num_states,
            num_actions,
            horizon,
            transitions,
            initial_dist,
            reward,
        })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn initial_dist(&self) -> &[f64] {
        &self.initial_dist
    }

    pub fn reward(&self) -> &Reward {
        &self.reward
    }

    pub fn is_additive(&self) -> bool {
        matches!(self.reward, Reward::Additive { .. })
    }

    /// P_step(· | state, action).
    pub fn transition_row(&self, step: usize, state: usize, action: usize) -> &[f64] {
        let base = ((step * self.num_states + state) * self.num_actions + action) * self.num_states;
        &self.transitions[base..base + self.num_states]
    }

    fn step_reward(
        table: &[f64],
        dims: (usize, usize),
        step: usize,
        state: usize,
        action: usize,
    ) -> f64 {
        let (num_states, num_actions) = dims;
        table[(step * num_states + state) * num_actions + action]
    }

    /// r(τ) ∈ [0, H].
    pub fn trajectory_reward(&self, tau: &Trajectory) -> f64 {
        self.reward_of_steps(&tau.steps)
    }

    fn reward_of_steps(&self, steps: &[(usize, usize)]) -> f64 {
        match &self.reward {
            Reward::Additive { table } => steps
                .iter()
                .enumerate()
                .map(|(h, &(s, a))| {
                    Self::step_reward(table, (self.num_states, self.num_actions), h, s, a)
                })
                .sum(),
            Reward::Coverage => {
                let mut seen = vec![false; self.num_states];
                for &(s, _) in steps {
                    seen[s] = true;
                }
                let distinct = seen.iter().filter(|&&x| x).count();
                self.horizon as f64 * distinct as f64 / self.num_states as f64
            }
        }
    }

    pub fn check_policy(&self, policy: &PolicyModel) -> Result<()> {
        if policy.num_states() != self.num_states
            || policy.num_actions() != self.num_actions
            || policy.horizon() != self.horizon
        {
            return Err(Error::config(format!(
                "policy (|S|={}, |A|={}, H={}) does not match environment (|S|={}, |A|={}, H={})",
                policy.num_states(),
                policy.num_actions(),
                policy.horizon(),
                self.num_states,
                self.num_actions,
                self.horizon
            )));
        }
        Ok(())
    }

    fn check_table(&self, table: &PolicyTable) -> Result<()> {
        if table.num_states() != self.num_states
            || table.num_actions() != self.num_actions
            || table.horizon() != self.horizon
        {
            return Err(Error::config(
                "policy table does not match environment dimensions",
            ));
        }
        Ok(())
    }

    /// Rolls out one episode under π_θ.
    pub fn sample_trajectory(
        &self,
        policy: &PolicyModel,
        theta: &ParamVector,
        rng: &mut RngStream,
    ) -> Result<Trajectory> {
        self.check_policy(policy)?;
        let table = policy.table(theta)?;
        self.sample_with_table(&table, rng)
    }

    /// Rolls out one episode under a pre-computed policy table.
    pub fn sample_with_table(
        &self,
        table: &PolicyTable,
        rng: &mut RngStream,
    ) -> Result<Trajectory> {
        self.check_table(table)?;
        let mut steps = Vec::with_capacity(self.horizon);
        let mut state = sample_categorical(&self.initial_dist, rng);
        for h in 0..self.horizon {
            let action = sample_categorical(table.probs(state, h), rng);
            steps.push((state, action));
            if h + 1 < self.horizon {
                state = sample_categorical(self.transition_row(h, state, action), rng);
            }
        }
        Ok(Trajectory { steps })
    }

    /// Number of (state, action) sequences the enumeration oracle covers, (|S|·|A|)^H.
    pub fn path_count(&self) -> u128 {
        let per_step = (self.num_states * self.num_actions) as u128;
        let mut total: u128 = 1;
        for _ in 0..self.horizon {
            total = total.saturating_mul(per_step);
        }
        total
    }

    /// V(π_θ) by full trajectory enumeration with the default cap.
    pub fn exact_value(&self, policy: &PolicyModel, theta: &ParamVector) -> Result<f64> {
        self.exact_value_with_cap(policy, theta, DEFAULT_ENUMERATION_CAP)
    }

    /// V(π_θ) by enumerating every trajectory and weighting `trajectory_reward`
    /// by its probability.
    pub fn exact_value_with_cap(
        &self,
        policy: &PolicyModel,
        theta: &ParamVector,
        cap: u64,
    ) -> Result<f64> {
        self.check_policy(policy)?;
        self.check_enumeration(cap)?;
        let table = policy.table(theta)?;
        Ok(self.enumerate_value(&table))
    }

    pub(crate) fn check_enumeration(&self, cap: u64) -> Result<()> {
        let paths = self.path_count();
        if paths > cap as u128 {
            return Err(Error::Infeasible { paths, cap });
        }
        Ok(())
    }

    /// Enumeration over a pre-computed table; the caller has checked the cap.
    pub(crate) fn enumerate_value(&self, table: &PolicyTable) -> f64 {
        let mut steps = Vec::with_capacity(self.horizon);
        let mut total = 0.0;
        for (s, &p0) in self.initial_dist.iter().enumerate() {
            if p0 > 0.0 {
                self.enumerate_from(table, 0, s, p0, &mut steps, &mut total);
            }
        }
        total
    }

    fn enumerate_from(
        &self,
        table: &PolicyTable,
        step: usize,
        state: usize,
        weight: f64,
        steps: &mut Vec<(usize, usize)>,
        total: &mut f64,
    ) {
        for (a, &pa) in table.probs(state, step).iter().enumerate() {
            if pa == 0.0 {
                continue;
            }
            steps.push((state, a));
            let w = weight * pa;
            if step + 1 == self.horizon {
                *total += w * self.reward_of_steps(steps);
            } else {
                for (next, &pn) in self.transition_row(step, state, a).iter().enumerate() {
                    if pn > 0.0 {
                        self.enumerate_from(table, step + 1, next, w * pn, steps, total);
                    }
                }
            }
            steps.pop();
        }
    }

    /// V(π_θ) by backward dynamic programming; additive rewards only.
    pub fn dp_value(&self, policy: &PolicyModel, theta: &ParamVector) -> Result<f64> {
        self.check_policy(policy)?;
        let table = policy.table(theta)?;
        self.dp_value_table(&table)
    }

    pub(crate) fn dp_value_table(&self, table: &PolicyTable) -> Result<f64> {
        let Reward::Additive { table: rewards } = &self.reward else {
            return Err(Error::config(
                "dynamic programming needs an additive reward; use enumeration",
            ));
        };
        let dims = (self.num_states, self.num_actions);
        let mut next_value = vec![0.0; self.num_states];
        for h in (0..self.horizon).rev() {
            let mut value = vec![0.0; self.num_states];
            for (s, v) in value.iter_mut().enumerate() {
                *v = table
                    .probs(s, h)
                    .iter()
                    .enumerate()
                    .map(|(a, &pa)| {
                        let future: f64 = if h + 1 < self.horizon {
                            self.transition_row(h, s, a)
                                .iter()
                                .zip(&next_value)
                                .map(|(p, v)| p * v)
                                .sum()
                        } else {
                            0.0
                        };
                        pa * (Self::step_reward(rewards, dims, h, s, a) + future)
                    })
                    .sum();
            }
            next_value = value;
        }
        Ok(self
            .initial_dist
            .iter()
            .zip(&next_value)
            .map(|(p, v)| p * v)
            .sum())
    }

    /// The same MDP with state `s` renamed to `perm[s]`.
    pub fn permute_states(&self, perm: &[usize]) -> Result<EnvModel> {
        let n = self.num_states;
        let mut seen = vec![false; n];
        if perm.len() != n
            || perm
                .iter()
                .any(|&p| p >= n || std::mem::replace(&mut seen[p], true))
        {
            return Err(Error::config("state relabeling must be a permutation"));
        }
        let (na, h) = (self.num_actions, self.horizon);
        let mut transitions = vec![0.0; self.transitions.len()];
        for step in 0..h {
            for s in 0..n {
                for a in 0..na {
                    for (s2, &p) in self.transition_row(step, s, a).iter().enumerate() {
                        transitions[((step * n + perm[s]) * na + a) * n + perm[s2]] = p;
                    }
                }
            }
        }
        let mut initial_dist = vec![0.0; n];
        for (s, &p) in self.initial_dist.iter().enumerate() {
            initial_dist[perm[s]] = p;
        }
        let reward = match &self.reward {
            Reward::Coverage => Reward::Coverage,
            Reward::Additive { table } => {
                let mut out = vec![0.0; table.len()];
                for step in 0..h {
                    for s in 0..n {
                        for a in 0..na {
                            out[(step * n + perm[s]) * na + a] = table[(step * n + s) * na + a];
                        }
                    }
                }
                Reward::Additive { table: out }
            }
        };
        EnvModel::new(n, na, h, transitions, initial_dist, reward)
    }
}

/// Inverse-CDF draw from a probability vector.
pub(crate) fn sample_categorical(probs: &[f64], rng: &mut RngStream) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last_positive = i;
            if u < acc {
                return i;
            }
        }
    }
    last_positive
}

#[cfg(test)]
mod tests;
