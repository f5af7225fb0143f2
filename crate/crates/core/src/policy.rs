//! Softmax policies over finite state/action spaces.
//!
//! Step indices are zero-based throughout: `step` ranges over `0..horizon`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Policy parameter vector θ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    pub fn zeros(dim: usize) -> Self {
        ParamVector(vec![0.0; dim])
    }

    /// Wraps `values`, rejecting non-finite entries.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|x| !x.is_finite()) {
            return Err(Error::Domain(format!(
                "parameter entry {i} is not finite ({})",
                values[i]
            )));
        }
        Ok(ParamVector(values))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        l2_norm(&self.0)
    }

    /// θ + μ·v. The receiver is left untouched.
    pub fn perturbed(&self, mu: f64, direction: &[f64]) -> Result<ParamVector> {
        if direction.len() != self.len() {
            return Err(Error::Dimension {
                what: "perturbation direction",
                expected: self.len(),
                got: direction.len(),
            });
        }
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(Error::Contract(format!(
                "perturbation distance must be positive, got {mu}"
            )));
        }
        Ok(self.offset(mu, direction))
    }

    /// θ + scale·v with no sign restriction on `scale`. Lengths must match.
    pub(crate) fn offset(&self, scale: f64, direction: &[f64]) -> ParamVector {
        debug_assert_eq!(direction.len(), self.len());
        ParamVector(
            self.0
                .iter()
                .zip(direction)
                .map(|(x, v)| x + scale * v)
                .collect(),
        )
    }
}

impl AsRef<[f64]> for ParamVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

pub(crate) fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Numerically stable softmax (max-subtracted).
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: f64 = out.iter().sum();
    for p in &mut out {
        *p /= total;
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub enum PolicyKind {
    /// One logit per (step, state, action); θ index `(step·S + state)·A + action`.
    Tabular,
    /// Logits ⟨θ, φ(s, h, a)⟩. `features` is row-major `dim × (H·S·A)` with
    /// columns in the tabular index order.
    Linear { features: Vec<f64> },
}

/// A parameterized stochastic policy π_θ(a | s, h).
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyModel {
    kind: PolicyKind,
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    dim: usize,
}

impl PolicyModel {
    pub fn tabular(num_states: usize, num_actions: usize, horizon: usize) -> Result<Self> {
        check_dims(num_states, num_actions, horizon)?;
        Ok(PolicyModel {
            kind: PolicyKind::Tabular,
            num_states,
            num_actions,
            horizon,
            dim: num_states * num_actions * horizon,
        })
    }

    /// Linear-softmax policy; `features[i]` is the i-th feature row over all
    /// `H·S·A` (step, state, action) columns.
    pub fn linear(
        num_states: usize,
        num_actions: usize,
        horizon: usize,
        features: Vec<Vec<f64>>,
    ) -> Result<Self> {
        check_dims(num_states, num_actions, horizon)?;
        let cols = num_states * num_actions * horizon;
        if features.is_empty() {
            return Err(Error::config(
                "linear policy needs at least one feature row",
            ));
        }
        let mut flat = Vec::with_capacity(features.len() * cols);
        for (i, row) in features.iter().enumerate() {
            if row.len() != cols {
                return Err(Error::config(format!(
                    "feature row {i} has {} columns, expected H·S·A = {cols}",
                    row.len()
                )));
            }
            if row.iter().any(|x| !x.is_finite()) {
                return Err(Error::config(format!(
                    "feature row {i} has a non-finite entry"
                )));
            }
            flat.extend_from_slice(row);
        }
        Ok(PolicyModel {
            kind: PolicyKind::Linear { features: flat },
            num_states,
            num_actions,
            horizon,
            dim: features.len(),
        })
    }

    /// Linear policy with one-hot features; behaves exactly like [`PolicyModel::tabular`].
    pub fn one_hot_linear(num_states: usize, num_actions: usize, horizon: usize) -> Result<Self> {
        let cols = num_states * num_actions * horizon;
        let rows = (0..cols)
            .map(|i| (0..cols).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        Self::linear(num_states, num_actions, horizon, rows)
    }

    pub fn kind(&self) -> &PolicyKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
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

    /// Feature rows for a linear policy, `None` for tabular.
    pub fn feature_rows(&self) -> Option<Vec<Vec<f64>>> {
        match &self.kind {
            PolicyKind::Tabular => None,
            PolicyKind::Linear { features } => {
                let cols = self.num_states * self.num_actions * self.horizon;
                Some(features.chunks(cols).map(<[f64]>::to_vec).collect())
            }
        }
    }

    pub fn check_theta(&self, theta: &ParamVector) -> Result<()> {
        if theta.len() != self.dim {
            return Err(Error::Dimension {
                what: "policy parameter",
                expected: self.dim,
                got: theta.len(),
            });
        }
        Ok(())
    }

    fn column(&self, state: usize, step: usize, action: usize) -> usize {
        (step * self.num_states + state) * self.num_actions + action
    }

    fn logits_unchecked(&self, theta: &[f64], state: usize, step: usize) -> Vec<f64> {
        let base = self.column(state, step, 0);
        match &self.kind {
            PolicyKind::Tabular => theta[base..base + self.num_actions].to_vec(),
            PolicyKind::Linear { features } => {
                let cols = self.num_states * self.num_actions * self.horizon;
                (0..self.num_actions)
                    .map(|a| {
                        theta
                            .iter()
                            .enumerate()
                            .map(|(i, w)| w * features[i * cols + base + a])
                            .sum()
                    })
                    .collect()
            }
        }
    }

    /// π_θ(· | state, step).
    pub fn action_distribution(
        &self,
        theta: &ParamVector,
        state: usize,
        step: usize,
    ) -> Result<Vec<f64>> {
        self.check_theta(theta)?;
        if state >= self.num_states {
            return Err(Error::config(format!(
                "state {state} out of range (|S| = {})",
                self.num_states
            )));
        }
        if step >= self.horizon {
            return Err(Error::config(format!(
                "step {step} out of range (H = {})",
                self.horizon
            )));
        }
        Ok(softmax(&self.logits_unchecked(
            theta.as_slice(),
            state,
            step,
        )))
    }

    /// All action distributions for θ at once.
    pub fn table(&self, theta: &ParamVector) -> Result<PolicyTable> {
        self.check_theta(theta)?;
        let mut probs = Vec::with_capacity(self.num_states * self.num_actions * self.horizon);
        for step in 0..self.horizon {
            for state in 0..self.num_states {
                probs.extend(softmax(&self.logits_unchecked(
                    theta.as_slice(),
                    state,
                    step,
                )));
            }
        }
        Ok(PolicyTable {
            num_states: self.num_states,
            num_actions: self.num_actions,
            horizon: self.horizon,
            probs,
        })
    }
}

fn check_dims(num_states: usize, num_actions: usize, horizon: usize) -> Result<()> {
    if num_states == 0 || num_actions == 0 || horizon == 0 {
        return Err(Error::config(format!(
            "policy dimensions must be positive (|S|={num_states}, |A|={num_actions}, H={horizon})"
        )));
    }
    Ok(())
}

/// Materialized action probabilities of a policy at a fixed θ.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyTable {
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    probs: Vec<f64>,
}

impl PolicyTable {
    pub fn probs(&self, state: usize, step: usize) -> &[f64] {
        let base = (step * self.num_states + state) * self.num_actions;
        &self.probs[base..base + self.num_actions]
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
}
