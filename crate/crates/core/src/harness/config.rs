use crate::allocator::CacheSampling;
use crate::error::{Error, Result};
use crate::policy::UpdateConfig;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

/// Training method. The `step_no_*` variants are ablations of `step`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Whole trajectories as samples, group-normalized rewards, full history.
    Tgrpo,
    /// Step samples carrying the group-normalized trajectory advantage.
    Gigrpo,
    Step,
    StepNoSrsampling,
    StepNoStepaug,
    StepNoBoth,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Tgrpo,
        Method::Gigrpo,
        Method::Step,
        Method::StepNoSrsampling,
        Method::StepNoStepaug,
        Method::StepNoBoth,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Tgrpo => "tgrpo",
            Method::Gigrpo => "gigrpo",
            Method::Step => "step",
            Method::StepNoSrsampling => "step_no_srsampling",
            Method::StepNoStepaug => "step_no_stepaug",
            Method::StepNoBoth => "step_no_both",
        }
    }

    /// Success-rate guided allocation instead of uniform expansion.
    pub fn uses_sr_sampling(self) -> bool {
        matches!(self, Method::Step | Method::StepNoStepaug)
    }

    /// Success-only, `(1 - s_hat)`-weighted advantages.
    pub fn uses_sr_advantage(self) -> bool {
        !matches!(self, Method::Tgrpo | Method::Gigrpo)
    }

    pub fn uses_step_augmentation(self) -> bool {
        matches!(self, Method::Step | Method::StepNoSrsampling)
    }

    /// Trains on whole trajectories with untruncated history.
    pub fn is_trajectory_level(self) -> bool {
        self == Method::Tgrpo
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown method '{s}'")))
    }
}

/// Everything needed to reproduce a run. Every field has a default, so a
/// config file only lists what it changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub method: Method,
    /// Rollouts per task per round (`N`).
    #[serde(alias = "N")]
    pub group_size: usize,
    /// Tasks per round, taken round-robin from the suite.
    pub batch_tasks: usize,
    /// Number of rounds; `None` means eight passes over the suite.
    pub rounds: Option<u64>,
    pub s0: f64,
    pub s_low: f64,
    pub kappa: f64,
    pub s_init: f64,
    /// Past responses kept in a step sample's history (`t_r`).
    #[serde(alias = "t_r")]
    pub history_responses: usize,
    /// Past observations kept in a step sample's history (`t_I`).
    #[serde(alias = "t_I")]
    pub history_observations: usize,
    pub seed: u64,
    /// Task-suite file; the built-in desk suite when absent.
    pub suite: Option<PathBuf>,
    /// Seed for the built-in desk suite.
    pub suite_seed: u64,
    /// Per-state spread of the base policy's skill bias.
    pub prior_jitter: f64,
    /// Start from this policy checkpoint instead of the base policy.
    pub init_checkpoint: Option<PathBuf>,
    pub out: Option<PathBuf>,
    /// Samples per policy-gradient minibatch.
    pub ppo_batch: usize,
    /// Passes over a round's samples.
    pub epochs: usize,
    /// Greedy evaluation every this many rounds (and after the last).
    pub eval_every: u64,
    /// Maximum augmentation groups per round.
    pub max_aug_groups: Option<usize>,
    pub cache_sampling: CacheSampling,
    pub observe_mistakes: bool,
    /// Also write every trajectory and step sample to the logs.
    pub log_trajectories: bool,
    pub update: UpdateConfig,
}

/// Learning rate used with the mean-over-minibatch objective of the
/// tabular policy.
pub const DEFAULT_LEARNING_RATE: f64 = 10.0;

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            method: Method::Step,
            group_size: 16,
            batch_tasks: 16,
            rounds: None,
            s0: 0.6,
            s_low: 0.2,
            kappa: 10.0,
            s_init: 0.0,
            history_responses: 3,
            history_observations: 0,
            seed: 0,
            suite: None,
            suite_seed: 0,
            prior_jitter: 1.0,
            init_checkpoint: None,
            out: None,
            ppo_batch: 256,
            epochs: 1,
            eval_every: 4,
            max_aug_groups: None,
            cache_sampling: CacheSampling::Uniform,
            observe_mistakes: false,
            log_trajectories: false,
            update: UpdateConfig {
                learning_rate: DEFAULT_LEARNING_RATE,
                ..UpdateConfig::default()
            },
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut config: RunConfig = toml::from_str(&text)?;
        // relative paths inside a config file resolve against its directory
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut config.suite, &mut config.init_checkpoint] {
            if let Some(rel) = p.as_ref().filter(|p| p.is_relative()) {
                *p = Some(base.join(rel));
            }
        }
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.group_size < 2 {
            return fail(format!("group_size {} below 2", self.group_size));
        }
        if self.method.uses_step_augmentation() && self.group_size < 4 {
            return fail("step augmentation needs group_size >= 4".into());
        }
        if self.batch_tasks == 0 {
            return fail("batch_tasks must be positive".into());
        }
        if !(self.s0 > 0.0 && self.s0 < 1.0) {
            return fail(format!("s0 {} outside (0, 1)", self.s0));
        }
        if !(0.0..=1.0).contains(&self.s_low) {
            return fail(format!("s_low {} outside [0, 1]", self.s_low));
        }
        if !(0.0..=1.0).contains(&self.s_init) {
            return fail(format!("s_init {} outside [0, 1]", self.s_init));
        }
        if self.kappa.is_nan() || self.kappa <= 0.0 {
            return fail("kappa must be positive".into());
        }
        if self.prior_jitter < 0.0 {
            return fail("prior_jitter must be non-negative".into());
        }
        if self.ppo_batch == 0 || self.epochs == 0 || self.eval_every == 0 {
            return fail("ppo_batch, epochs and eval_every must be positive".into());
        }
        self.update.validate()
    }

    /// Resolved round count for a suite of `tasks` tasks.
    pub fn resolved_rounds(&self, tasks: usize) -> u64 {
        self.rounds.unwrap_or_else(|| {
            let per_pass = tasks.div_ceil(self.batch_tasks.max(1)).max(1);
            8 * per_pass as u64
        })
    }

    /// History caps used when the policy reads a state.
    pub fn context(&self) -> (usize, usize) {
        if self.method.is_trajectory_level() {
            (usize::MAX, usize::MAX)
        } else {
            (self.history_responses, self.history_observations)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_reference_hyperparameters() {
        let c = RunConfig::default();
        assert_eq!(c.group_size, 16);
        assert_eq!(c.batch_tasks, 16);
        assert_eq!((c.s0, c.s_low, c.kappa), (0.6, 0.2, 10.0));
        assert_eq!((c.history_responses, c.history_observations), (3, 0));
        assert_eq!(c.ppo_batch, 256);
        assert_eq!(c.update.temperature_train, 0.7);
        assert_eq!(c.update.temperature_eval, 0.0);
        assert_eq!(c.update.clip_epsilon, 0.2);
        assert_eq!(c.resolved_rounds(64), 32);
        c.validate().unwrap();
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("grpo".parse::<Method>().is_err());
    }

    #[test]
    fn toml_round_trip_and_aliases() {
        let c: RunConfig = toml::from_str("method = \"tgrpo\"\nN = 8\nt_r = 2\nrounds = 5\n").unwrap();
        assert_eq!(c.method, Method::Tgrpo);
        assert_eq!(c.group_size, 8);
        assert_eq!(c.history_responses, 2);
        assert_eq!(c.rounds, Some(5));
        let back: RunConfig = toml::from_str(&c.to_toml()).unwrap();
        assert_eq!(back, c);
        assert!(toml::from_str::<RunConfig>("bogus = 1").is_err());
    }

    #[test]
    fn validation_rejects_bad_values() {
        let bad = [
            RunConfig {
                group_size: 1,
                ..RunConfig::default()
            },
            RunConfig {
                group_size: 3,
                ..RunConfig::default()
            },
            RunConfig {
                s0: 1.0,
                ..RunConfig::default()
            },
            RunConfig {
                s_low: 1.2,
                ..RunConfig::default()
            },
            RunConfig {
                kappa: 0.0,
                ..RunConfig::default()
            },
            RunConfig {
                batch_tasks: 0,
                ..RunConfig::default()
            },
        ];
        for c in bad {
            assert!(c.validate().is_err(), "{c:?}");
        }
        // thresholds above s0 are allowed for the augmentation study
        RunConfig {
            s_low: 1.0,
            ..RunConfig::default()
        }
        .validate()
        .unwrap();
        RunConfig {
            method: Method::Gigrpo,
            group_size: 2,
            ..RunConfig::default()
        }
        .validate()
        .unwrap();
    }

    #[test]
    fn trajectory_level_uses_full_history() {
        let c = RunConfig {
            method: Method::Tgrpo,
            ..RunConfig::default()
        };
        assert_eq!(c.context(), (usize::MAX, usize::MAX));
        assert_eq!(RunConfig::default().context(), (3, 0));
    }
}
