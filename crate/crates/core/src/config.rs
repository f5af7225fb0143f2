//! Experiment configuration: parsing, validation and resolution into concrete
//! run inputs.
//!
//! A config is resolved once into a [`ResolvedRun`]. Its `echo` is the same
//! config with every `"auto"` replaced by the number it resolved to, the
//! environment inlined and the seed made explicit, so running the echo again
//! reproduces the run exactly.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::env::{self, EnvModel, EnvSpec};
use crate::error::{Error, Result};
use crate::optimizer::{
    default_hyperparams, resolve_lipschitz, Algorithm, FeedbackChannel, HistoryPolicy, HyperParams,
};
use crate::policy::{ParamVector, PolicyModel};
use crate::preference::LinkFunction;

/// Environment variable that overrides the config seed.
pub const SEED_ENV_VAR: &str = "PREFGRAD_SEED";

pub const DEFAULT_EVAL_EVERY: usize = 10;

/// Parses JSON, reporting the offending field path on failure.
pub fn parse_json<T: DeserializeOwned>(text: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| Error::Schema {
        path: e.path().to_string(),
        message: e.inner().to_string(),
    })
}

pub(crate) fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// `"auto"` or an explicit number.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AutoOr {
    Value(f64),
    Keyword(AutoKeyword),
}

impl Default for AutoOr {
    fn default() -> Self {
        AutoOr::Keyword(AutoKeyword::Auto)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AutoKeyword {
    Auto,
}

impl AutoOr {
    pub fn value(self) -> Option<f64> {
        match self {
            AutoOr::Value(v) => Some(v),
            AutoOr::Keyword(_) => None,
        }
    }
}

/// Named bundled environments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum Preset {
    Bandit {
        rewards: Vec<f64>,
    },
    Chain {
        states: usize,
        horizon: usize,
        slip: f64,
    },
    CoverageChain {
        states: usize,
        horizon: usize,
        slip: f64,
    },
    WindyGrid {
        horizon: usize,
        wind: f64,
    },
}

impl Preset {
    pub fn build(&self) -> Result<EnvModel> {
        match self {
            Preset::Bandit { rewards } => env::bandit(rewards),
            Preset::Chain {
                states,
                horizon,
                slip,
            } => env::chain(*states, *horizon, *slip),
            Preset::CoverageChain {
                states,
                horizon,
                slip,
            } => env::coverage_chain(*states, *horizon, *slip),
            Preset::WindyGrid { horizon, wind } => env::windy_grid(*horizon, *wind),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EnvSource {
    Preset {
        preset: Preset,
    },
    /// Path relative to the config file's directory.
    File {
        file: PathBuf,
    },
    Inline(EnvSpec),
}

impl EnvSource {
    pub fn load(&self, base_dir: &Path) -> Result<EnvModel> {
        match self {
            EnvSource::Preset { preset } => preset.build(),
            EnvSource::File { file } => EnvModel::from_json(&read_file(&base_dir.join(file))?),
            EnvSource::Inline(spec) => EnvModel::try_from(spec.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InitSpec {
    Explicit(Vec<f64>),
    Keyword(ZerosKeyword),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ZerosKeyword {
    Zeros,
}

impl Default for InitSpec {
    fn default() -> Self {
        InitSpec::Keyword(ZerosKeyword::Zeros)
    }
}

impl InitSpec {
    pub fn theta(&self, dim: usize) -> Result<ParamVector> {
        match self {
            InitSpec::Keyword(_) => Ok(ParamVector::zeros(dim)),
            InitSpec::Explicit(values) if values.len() != dim => Err(Error::Dimension {
                what: "policy.init",
                expected: dim,
                got: values.len(),
            }),
            InitSpec::Explicit(values) => ParamVector::new(values.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum PolicyConfig {
    Tabular {
        #[serde(default)]
        init: InitSpec,
    },
    Linear {
        /// d rows over the H·S·A (step, state, action) columns.
        features: Vec<Vec<f64>>,
        #[serde(default)]
        init: InitSpec,
    },
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig::Tabular {
            init: InitSpec::default(),
        }
    }
}

impl PolicyConfig {
    pub fn build(&self, env: &EnvModel) -> Result<(PolicyModel, ParamVector)> {
        let (s, a, h) = (env.num_states(), env.num_actions(), env.horizon());
        let (model, init) = match self {
            PolicyConfig::Tabular { init } => (PolicyModel::tabular(s, a, h)?, init),
            PolicyConfig::Linear { features, init } => {
                (PolicyModel::linear(s, a, h, features.clone())?, init)
            }
        };
        let theta0 = init.theta(model.dim())?;
        Ok((model, theta0))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum LinkConfig {
    Logistic {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        lipschitz: Option<f64>,
    },
    Table {
        xs: Vec<f64>,
        ps: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        lipschitz: Option<f64>,
    },
}

impl Default for LinkConfig {
    fn default() -> Self {
        LinkConfig::Logistic { lipschitz: None }
    }
}

impl LinkConfig {
    /// The link over [−H, H] for an environment of horizon H.
    pub fn build(&self, horizon: usize) -> Result<LinkFunction> {
        let h = horizon as f64;
        let (link, lipschitz) = match self {
            LinkConfig::Logistic { lipschitz } => (LinkFunction::logistic(h)?, lipschitz),
            LinkConfig::Table { xs, ps, lipschitz } => {
                (LinkFunction::table(xs.clone(), ps.clone(), h)?, lipschitz)
            }
        };
        match lipschitz {
            Some(l) => link.with_lipschitz(*l),
            None => Ok(link),
        }
    }
}

/// `"auto"`, `"full"` or a positive stride.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum HistorySpec {
    Stride(usize),
    Keyword(HistoryPolicy),
}

impl Default for HistorySpec {
    fn default() -> Self {
        HistorySpec::Keyword(HistoryPolicy::Auto)
    }
}

impl HistorySpec {
    pub fn policy(self) -> HistoryPolicy {
        match self {
            HistorySpec::Stride(s) => HistoryPolicy::Stride(s),
            HistorySpec::Keyword(p) => p,
        }
    }
}

fn default_eval_every() -> usize {
    DEFAULT_EVAL_EVERY
}

fn default_smoothness() -> f64 {
    1.0
}

fn is_false(b: &bool) -> bool {
    !*b
}

fn is_preference(c: &FeedbackChannel) -> bool {
    *c == FeedbackChannel::Preference
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub algorithm: Algorithm,
    pub env: EnvSource,
    #[serde(default)]
    pub policy: PolicyConfig,
    #[serde(default)]
    pub link: LinkConfig,
    #[serde(rename = "T")]
    pub iterations: usize,
    #[serde(rename = "N")]
    pub pairs: usize,
    #[serde(rename = "M")]
    pub queries: usize,
    #[serde(rename = "K", default, skip_serializing_if = "Option::is_none")]
    pub block_size: Option<usize>,
    #[serde(default)]
    pub mu: AutoOr,
    #[serde(default)]
    pub alpha: AutoOr,
    #[serde(default)]
    pub trim: AutoOr,
    /// Declared smoothness constant.
    #[serde(rename = "L", default = "default_smoothness")]
    pub smoothness: f64,
    #[serde(default)]
    pub seed: u64,
    /// Exact stationarity is written every this many iterations; 0 disables it.
    #[serde(default = "default_eval_every")]
    pub eval_every: usize,
    #[serde(default)]
    pub history: HistorySpec,
    /// Record wall-clock milliseconds in metrics.csv. Off by default so that
    /// reruns are byte-identical.
    #[serde(default, skip_serializing_if = "is_false")]
    pub wall_clock: bool,
    #[serde(default, skip_serializing_if = "is_preference")]
    pub feedback: FeedbackChannel,
}

/// Everything a run needs, plus the config that reproduces it.
#[derive(Debug, Clone)]
pub struct ResolvedRun {
    pub algorithm: Algorithm,
    pub env: EnvModel,
    pub policy: PolicyModel,
    pub link: LinkFunction,
    pub hyperparams: HyperParams,
    pub theta0: ParamVector,
    pub history: HistoryPolicy,
    pub channel: FeedbackChannel,
    pub eval_every: usize,
    pub wall_clock: bool,
    pub echo: ExperimentConfig,
}

/// The `PREFGRAD_SEED` override, if set.
pub fn seed_from_env() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV_VAR) {
        Ok(s) => s.trim().parse().map(Some).map_err(|_| {
            Error::config(format!(
                "{SEED_ENV_VAR} must be an unsigned 64-bit integer, got {s:?}"
            ))
        }),
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(e) => Err(Error::config(format!("{SEED_ENV_VAR}: {e}"))),
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        parse_json(text)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&read_file(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Resolves defaults. File references are relative to `base_dir`; a
    /// `seed_override` replaces the config seed.
    pub fn resolve(&self, base_dir: &Path, seed_override: Option<u64>) -> Result<ResolvedRun> {
        let env = self.env.load(base_dir)?;
        let (policy, theta0) = self.policy.build(&env)?;
        let link = self.link.build(env.horizon())?;
        if !(self.smoothness > 0.0 && self.smoothness.is_finite()) {
            return Err(Error::Schema {
                path: "L".into(),
                message: format!("must be positive, got {}", self.smoothness),
            });
        }
        if self.algorithm == Algorithm::Zbcpg && self.block_size.is_none() {
            return Err(Error::Schema {
                path: "K".into(),
                message: "K (block size) is required when algorithm is \"zbcpg\"".into(),
            });
        }
        let dim = policy.dim();
        let lipschitz = resolve_lipschitz(self.smoothness, &link);
        let (mu, alpha) = match (self.mu.value(), self.alpha.value()) {
            (Some(mu), Some(alpha)) => (mu, alpha),
            (mu, alpha) => {
                let (m0, a0) = default_hyperparams(
                    self.algorithm,
                    dim,
                    link.horizon(),
                    lipschitz,
                    self.queries,
                    self.pairs,
                )?;
                (mu.unwrap_or(m0), alpha.unwrap_or(a0))
            }
        };
        let trim = match self.trim.value() {
            Some(t) => t,
            None => link.trim_level()?,
        };
        let hyperparams = HyperParams {
            iterations: self.iterations,
            pairs: self.pairs,
            queries: self.queries,
            mu,
            alpha,
            block_size: self.block_size,
            trim,
            lipschitz,
            seed: seed_override.unwrap_or(self.seed),
        };
        hyperparams.validate(dim, self.algorithm)?;
        let history = self.history.policy();

        let mut echo = self.clone();
        echo.env = EnvSource::Inline(EnvSpec::from(&env));
        echo.mu = AutoOr::Value(mu);
        echo.alpha = AutoOr::Value(alpha);
        echo.trim = AutoOr::Value(trim);
        echo.seed = hyperparams.seed;
        Ok(ResolvedRun {
            algorithm: self.algorithm,
            env,
            policy,
            link,
            hyperparams,
            theta0,
            history,
            channel: self.feedback,
            eval_every: self.eval_every,
            wall_clock: self.wall_clock,
            echo,
        })
    }

    /// Sets one sweep axis.
    pub fn with_axis(&self, axis: SweepAxis, value: usize) -> Self {
        let mut c = self.clone();
        match axis {
            SweepAxis::T => c.iterations = value,
            SweepAxis::N => c.pairs = value,
            SweepAxis::M => c.queries = value,
            SweepAxis::K => c.block_size = Some(value),
        }
        c
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SweepAxis {
    T,
    N,
    M,
    K,
}

impl std::str::FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.contains([',', ' ', '+', '*']) {
            return Err(Error::config(format!(
                "sweeps take a single axis, got {s:?}"
            )));
        }
        match s {
            "T" => Ok(SweepAxis::T),
            "N" => Ok(SweepAxis::N),
            "M" => Ok(SweepAxis::M),
            "K" => Ok(SweepAxis::K),
            other => Err(Error::config(format!(
                "unknown sweep axis {other:?}; expected one of T, N, M, K"
            ))),
        }
    }
}

impl std::fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SweepAxis::T => "T",
            SweepAxis::N => "N",
            SweepAxis::M => "M",
            SweepAxis::K => "K",
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BANDIT: &str = r#"{
        "algorithm": "zpg",
        "env": {"preset": {"name": "bandit", "rewards": [0.0, 1.0]}},
        "T": 20, "N": 4, "M": 50, "L": 0.25, "seed": 3
    }"#;

    #[test]
    fn minimal_config_defaults() {
        let c = ExperimentConfig::from_json(BANDIT).unwrap();
        assert_eq!(c.eval_every, 10);
        assert_eq!(c.policy, PolicyConfig::default());
        assert_eq!(c.mu, AutoOr::default());
        let r = c.resolve(Path::new("."), None).unwrap();
        let (mu, alpha) = default_hyperparams(Algorithm::Zpg, 2, 1.0, 0.25, 50, 4).unwrap();
        assert_eq!(r.hyperparams.mu, mu);
        assert_eq!(r.hyperparams.alpha, alpha);
        assert_eq!(r.hyperparams.trim, r.link.trim_level().unwrap());
        assert_eq!(r.theta0, ParamVector::zeros(2));
    }

    #[test]
    fn auto_keyword_and_numbers() {
        let c: ExperimentConfig = parse_json(&BANDIT.replace(
            "\"seed\": 3",
            "\"seed\": 3, \"mu\": \"auto\", \"alpha\": 0.5",
        ))
        .unwrap();
        assert_eq!(c.mu, AutoOr::Keyword(AutoKeyword::Auto));
        let r = c.resolve(Path::new("."), None).unwrap();
        assert_eq!(r.hyperparams.alpha, 0.5);
        let bad = BANDIT.replace("\"seed\": 3", "\"seed\": 3, \"mu\": \"sometimes\"");
        let err = ExperimentConfig::from_json(&bad).unwrap_err();
        assert!(err.to_string().contains("mu"), "{err}");
    }

    #[test]
    fn schema_errors_name_the_field() {
        let err =
            ExperimentConfig::from_json(&BANDIT.replace("\"N\": 4", "\"N\": -4")).unwrap_err();
        assert!(
            matches!(&err, Error::Schema { path, .. } if path == "N"),
            "{err}"
        );
        let err = ExperimentConfig::from_json(
            &BANDIT.replace("\"seed\": 3", "\"seed\": 3, \"bogus\": 1"),
        )
        .unwrap_err();
        assert!(err.to_string().contains("bogus"), "{err}");
        let err = ExperimentConfig::from_json(&BANDIT.replace("\"zpg\"", "\"sgd\"")).unwrap_err();
        assert!(
            matches!(&err, Error::Schema { path, .. } if path == "algorithm"),
            "{err}"
        );
    }

    #[test]
    fn zbcpg_requires_k() {
        let c = ExperimentConfig::from_json(&BANDIT.replace("\"zpg\"", "\"zbcpg\"")).unwrap();
        let err = c.resolve(Path::new("."), None).unwrap_err();
        assert!(err.to_string().contains('K'), "{err}");
        let mut with_k = c.clone();
        with_k.block_size = Some(1);
        assert!(with_k.resolve(Path::new("."), None).is_ok());
    }

    #[test]
    fn echo_is_idempotent() {
        let c = ExperimentConfig::from_json(BANDIT).unwrap();
        let first = c.resolve(Path::new("."), Some(99)).unwrap();
        assert_eq!(first.hyperparams.seed, 99);
        let reparsed = ExperimentConfig::from_json(&first.echo.to_json()).unwrap();
        let second = reparsed.resolve(Path::new("/nonexistent"), None).unwrap();
        assert_eq!(first.hyperparams, second.hyperparams);
        assert_eq!(first.echo, second.echo);
        assert_eq!(first.env, second.env);
    }

    #[test]
    fn env_from_file_and_inline() {
        let dir = tempfile::tempdir().unwrap();
        let e = env::chain(2, 2, 0.1).unwrap();
        std::fs::write(dir.path().join("chain.json"), e.to_json()).unwrap();
        let text = BANDIT.replace(
            r#"{"preset": {"name": "bandit", "rewards": [0.0, 1.0]}}"#,
            r#"{"file": "chain.json"}"#,
        );
        let r = ExperimentConfig::from_json(&text)
            .unwrap()
            .resolve(dir.path(), None)
            .unwrap();
        assert_eq!(r.env, e);
        assert_eq!(r.policy.dim(), 8);
        let inline = BANDIT.replace(
            r#"{"preset": {"name": "bandit", "rewards": [0.0, 1.0]}}"#,
            &e.to_json(),
        );
        let r = ExperimentConfig::from_json(&inline)
            .unwrap()
            .resolve(Path::new("."), None)
            .unwrap();
        assert_eq!(r.env, e);
    }

    #[test]
    fn policy_variants() {
        let text = BANDIT.replace(
            "\"seed\": 3",
            r#""seed": 3, "policy": {"kind": "linear", "features": [[1.0, -1.0]], "init": [0.5]}"#,
        );
        let r = ExperimentConfig::from_json(&text)
            .unwrap()
            .resolve(Path::new("."), None)
            .unwrap();
        assert_eq!(r.policy.dim(), 1);
        assert_eq!(r.theta0.as_slice(), &[0.5]);
        let wrong = text.replace("[0.5]", "[0.5, 1.0]");
        assert!(ExperimentConfig::from_json(&wrong)
            .unwrap()
            .resolve(Path::new("."), None)
            .is_err());
    }

    #[test]
    fn explicit_link_lipschitz_raises_schedule_constant() {
        let text = BANDIT.replace(
            "\"seed\": 3",
            r#""seed": 3, "link": {"kind": "logistic", "lipschitz": 6.0}"#,
        );
        let r = ExperimentConfig::from_json(&text)
            .unwrap()
            .resolve(Path::new("."), None)
            .unwrap();
        assert_eq!(r.hyperparams.lipschitz, 6.0);
    }

    #[test]
    fn history_spec() {
        let c = ExperimentConfig::from_json(
            &BANDIT.replace("\"seed\": 3", "\"seed\": 3, \"history\": 5"),
        )
        .unwrap();
        assert_eq!(c.history.policy(), HistoryPolicy::Stride(5));
        let c = ExperimentConfig::from_json(
            &BANDIT.replace("\"seed\": 3", "\"seed\": 3, \"history\": \"full\""),
        )
        .unwrap();
        assert_eq!(c.history.policy(), HistoryPolicy::Full);
    }

    #[test]
    fn sweep_axis_parsing() {
        assert_eq!("M".parse::<SweepAxis>().unwrap(), SweepAxis::M);
        assert!("T,M".parse::<SweepAxis>().is_err());
        assert!("alpha".parse::<SweepAxis>().is_err());
        let c = ExperimentConfig::from_json(BANDIT).unwrap();
        assert_eq!(c.with_axis(SweepAxis::T, 7).iterations, 7);
    }
}
