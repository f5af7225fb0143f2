//! JSON document form of an environment.

use serde::{Deserialize, Serialize};

use super::{EnvModel, Reward};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum RewardSpec {
    /// `table[h][s][a]`.
    Additive {
        table: Vec<Vec<Vec<f64>>>,
    },
    Coverage,
}

/// Environment as stored on disk: `transitions[h][s][a][s']`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvSpec {
    pub num_states: usize,
    pub num_actions: usize,
    pub horizon: usize,
    pub transitions: Vec<Vec<Vec<Vec<f64>>>>,
    pub initial_dist: Vec<f64>,
    pub reward: RewardSpec,
}

fn flatten_shape<T: Clone>(
    what: &'static str,
    rows: &[Vec<T>],
    expected_outer: usize,
    expected_inner: usize,
) -> Result<Vec<T>> {
    if rows.len() != expected_outer {
        return Err(Error::Dimension {
            what,
            expected: expected_outer,
            got: rows.len(),
        });
    }
    let mut out = Vec::with_capacity(expected_outer * expected_inner);
    for row in rows {
        if row.len() != expected_inner {
            return Err(Error::Dimension {
                what,
                expected: expected_inner,
                got: row.len(),
            });
        }
        out.extend_from_slice(row);
    }
    Ok(out)
}

impl TryFrom<EnvSpec> for EnvModel {
    type Error = Error;

    fn try_from(spec: EnvSpec) -> Result<Self> {
        let (ns, na, h) = (spec.num_states, spec.num_actions, spec.horizon);
        let per_step = flatten_shape("transitions (steps)", &spec.transitions, h, ns)?;
        let per_state = flatten_shape("transitions (states)", &per_step, h * ns, na)?;
        let transitions = flatten_shape("transitions (next states)", &per_state, h * ns * na, ns)?;
        let reward = match spec.reward {
            RewardSpec::Coverage => Reward::Coverage,
            RewardSpec::Additive { table } => {
                let per_step = flatten_shape("reward table (steps)", &table, h, ns)?;
                Reward::Additive {
                    table: flatten_shape("reward table (states)", &per_step, h * ns, na)?,
                }
            }
        };
        EnvModel::new(ns, na, h, transitions, spec.initial_dist, reward)
    }
}

impl From<&EnvModel> for EnvSpec {
    fn from(env: &EnvModel) -> Self {
        let (ns, na, h) = (env.num_states, env.num_actions, env.horizon);
        let transitions = (0..h)
            .map(|step| {
                (0..ns)
                    .map(|s| {
                        (0..na)
                            .map(|a| env.transition_row(step, s, a).to_vec())
                            .collect()
                    })
                    .collect()
            })
            .collect();
        let reward = match &env.reward {
            Reward::Coverage => RewardSpec::Coverage,
            Reward::Additive { table } => RewardSpec::Additive {
                table: table
                    .chunks(ns * na)
                    .map(|step| step.chunks(na).map(<[f64]>::to_vec).collect())
                    .collect(),
            },
        };
        EnvSpec {
            num_states: ns,
            num_actions: na,
            horizon: h,
            transitions,
            initial_dist: env.initial_dist.clone(),
            reward,
        }
    }
}

impl EnvModel {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: EnvSpec = serde_json::from_str(text)?;
        spec.try_into()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&EnvSpec::from(self)).expect("env spec serializes")
    }
}
