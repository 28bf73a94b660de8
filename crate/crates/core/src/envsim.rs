//! Synthetic multi-turn environment.
//!
//! Each task hides a target action sequence of length `L` over an alphabet
//! of `A` symbols. The agent must emit the sequence in order; a correct
//! action advances progress, a wrong one counts as a mistake. The episode
//! fails once mistakes exceed the task's tolerance or the step cap
//! (`2L + 2` by default) is reached, and succeeds with reward 1.0 when the
//! whole sequence has been produced. All other transitions pay 0.
//!
//! Observations encode `(task, progress)` only, so two situations that
//! differ in past mistakes look alike unless the history says otherwise.

use crate::error::{Error, Result};
use crate::policy::Policy;
use crate::types::{truncate_history, Action, Observation, State, Step, TaskId, Trajectory};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTaskSpec {
    pub task: TaskId,
    pub target: Vec<Action>,
    pub alphabet: u32,
    pub tolerance: u32,
    pub step_cap: usize,
    /// Competence of the base policy on this task, as a logit bias towards
    /// the correct action. Only used when building the starting policy.
    pub prior_skill: f64,
}

impl SyntheticTaskSpec {
    pub fn new(task: TaskId, target: Vec<Action>, alphabet: u32, tolerance: u32) -> Result<Self> {
        let step_cap = 2 * target.len() + 2;
        let spec = Self {
            task,
            target,
            alphabet,
            tolerance,
            step_cap,
            prior_skill: 0.0,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn len(&self) -> usize {
        self.target.len()
    }

    pub fn is_empty(&self) -> bool {
        self.target.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.target.is_empty() {
            return Err(Error::Config(format!(
                "task {}: empty target sequence",
                self.task
            )));
        }
        if self.alphabet < 2 {
            return Err(Error::Config(format!("task {}: alphabet below 2", self.task)));
        }
        if let Some(a) = self.target.iter().find(|a| a.0 >= self.alphabet) {
            return Err(Error::ActionOutOfRange {
                action: a.0,
                alphabet: self.alphabet,
            });
        }
        if self.step_cap < self.target.len() {
            return Err(Error::Config(format!(
                "task {}: step cap shorter than target",
                self.task
            )));
        }
        Ok(())
    }
}

/// One task as written in a suite file.
///
/// | field         | meaning                                                    |
/// |---------------|------------------------------------------------------------|
/// | `id`          | task id, unique within the suite                           |
/// | `length`      | target sequence length `L` (>= 1)                          |
/// | `alphabet`    | action alphabet size `A` (>= 2)                            |
/// | `tolerance`   | wrong actions allowed before the episode fails             |
/// | `seed`        | seed for drawing the target sequence                       |
/// | `step_cap`    | optional, defaults to `2L + 2`                             |
/// | `target`      | optional explicit target; overrides `length` and `seed`    |
/// | `prior_skill` | optional base-policy bias towards the target, default 0    |
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteEntry {
    pub id: u32,
    pub length: usize,
    pub alphabet: u32,
    #[serde(default)]
    pub tolerance: u32,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_cap: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<Vec<u32>>,
    #[serde(default)]
    pub prior_skill: f64,
}

impl SuiteEntry {
    pub fn build(&self) -> Result<SyntheticTaskSpec> {
        let target: Vec<Action> = match &self.target {
            Some(t) => t.iter().copied().map(Action).collect(),
            None => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                (0..self.length)
                    .map(|_| Action(rand::Rng::random_range(&mut rng, 0..self.alphabet.max(1))))
                    .collect()
            }
        };
        let step_cap = self.step_cap.unwrap_or(2 * target.len() + 2);
        let spec = SyntheticTaskSpec {
            task: TaskId(self.id),
            target,
            alphabet: self.alphabet,
            tolerance: self.tolerance,
            step_cap,
            prior_skill: self.prior_skill,
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// The on-disk task suite: `{"tasks": [SuiteEntry, ...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteFile {
    pub tasks: Vec<SuiteEntry>,
}

impl SuiteFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    pub fn build(&self) -> Result<Vec<SyntheticTaskSpec>> {
        let mut seen = std::collections::BTreeSet::new();
        let mut specs = Vec::with_capacity(self.tasks.len());
        for entry in &self.tasks {
            if !seen.insert(entry.id) {
                return Err(Error::DuplicateTask(TaskId(entry.id)));
            }
            specs.push(entry.build()?);
        }
        Ok(specs)
    }

    /// The default desk suite: 64 tasks cycling through lengths 2..=8 over
    /// five actions with no tolerance. Base-policy skill is drawn per task
    /// so the starting policy solves a mix of easy and hard tasks.
    pub fn desk_default(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tasks = (0..64u32)
            .map(|id| SuiteEntry {
                id,
                length: 2 + (id as usize % 7),
                alphabet: 5,
                tolerance: 0,
                seed: rng.next_u64(),
                step_cap: None,
                target: None,
                prior_skill: DESK_SKILL_LOW
                    + (DESK_SKILL_HIGH - DESK_SKILL_LOW) * rand::Rng::random::<f64>(&mut rng),
            })
            .collect();
        Self { tasks }
    }
}

const DESK_SKILL_LOW: f64 = -1.0;
const DESK_SKILL_HIGH: f64 = 5.0;

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeState {
    pub spec: Arc<SyntheticTaskSpec>,
    pub progress: usize,
    pub mistakes: u32,
    pub steps: usize,
    pub done: bool,
    pub success: bool,
    state: State,
}

impl EpisodeState {
    /// The state the agent currently observes, with full history.
    pub fn state(&self) -> &State {
        &self.state
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub state: State,
    pub done: bool,
    pub reward: f64,
}

/// A set of synthetic tasks plus an interaction counter shared by every
/// episode run against it.
#[derive(Debug)]
pub struct SyntheticEnv {
    specs: Vec<Arc<SyntheticTaskSpec>>,
    observe_mistakes: bool,
    interactions: AtomicU64,
}

impl SyntheticEnv {
    pub fn new(specs: Vec<SyntheticTaskSpec>) -> Result<Self> {
        let mut specs: Vec<_> = specs.into_iter().map(Arc::new).collect();
        specs.sort_by_key(|s| s.task);
        for pair in specs.windows(2) {
            if pair[0].task == pair[1].task {
                return Err(Error::DuplicateTask(pair[0].task));
            }
        }
        for s in &specs {
            s.validate()?;
        }
        Ok(Self {
            specs,
            observe_mistakes: false,
            interactions: AtomicU64::new(0),
        })
    }

    /// Also fold the mistake count into observations.
    pub fn with_observed_mistakes(mut self, on: bool) -> Self {
        self.observe_mistakes = on;
        self
    }

    pub fn specs(&self) -> &[Arc<SyntheticTaskSpec>] {
        &self.specs
    }

    pub fn task_ids(&self) -> Vec<TaskId> {
        self.specs.iter().map(|s| s.task).collect()
    }

    pub fn spec(&self, task: TaskId) -> Result<&Arc<SyntheticTaskSpec>> {
        self.specs
            .binary_search_by_key(&task, |s| s.task)
            .map(|i| &self.specs[i])
            .map_err(|_| Error::UnknownTask(task))
    }

    /// Number of `step` calls since construction.
    pub fn interaction_counter(&self) -> u64 {
        self.interactions.load(Ordering::SeqCst)
    }

    pub fn observation(&self, task: TaskId, progress: usize, mistakes: u32) -> Observation {
        let mistakes = if self.observe_mistakes { mistakes as u64 } else { 0 };
        let mut x = (task.0 as u64) << 40 ^ (progress as u64) << 16 ^ mistakes;
        // splitmix64 finalizer
        x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
        x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        Observation(x ^ (x >> 31))
    }

    pub fn reset(&self, task: TaskId) -> Result<(EpisodeState, State)> {
        let spec = Arc::clone(self.spec(task)?);
        let state = State::new(task, self.observation(task, 0, 0));
        let episode = EpisodeState {
            spec,
            progress: 0,
            mistakes: 0,
            steps: 0,
            done: false,
            success: false,
            state: state.clone(),
        };
        Ok((episode, state))
    }

    pub fn step(&self, episode: &mut EpisodeState, action: Action) -> Result<StepOutcome> {
        if episode.done {
            return Err(Error::EpisodeFinished);
        }
        let spec = &episode.spec;
        if action.0 >= spec.alphabet {
            return Err(Error::ActionOutOfRange {
                action: action.0,
                alphabet: spec.alphabet,
            });
        }
        self.interactions.fetch_add(1, Ordering::SeqCst);
        episode.steps += 1;
        if spec.target[episode.progress] == action {
            episode.progress += 1;
        } else {
            episode.mistakes += 1;
        }
        let success = episode.progress == spec.len();
        let failed = episode.mistakes > spec.tolerance || episode.steps >= spec.step_cap;
        episode.done = success || failed;
        episode.success = success;

        let prev = episode.state.observation;
        episode.state.history.push(prev, action);
        episode.state.observation = self.observation(spec.task, episode.progress, episode.mistakes);
        Ok(StepOutcome {
            state: episode.state.clone(),
            done: episode.done,
            reward: if success { 1.0 } else { 0.0 },
        })
    }

    /// Plays one episode of `task` with `policy`. The policy sees each state
    /// with history truncated to the given caps; the trajectory records the
    /// same truncated states.
    pub fn rollout<P: Policy + ?Sized>(
        &self,
        task: TaskId,
        policy: &P,
        temperature: f64,
        context: (usize, usize),
        rng: &mut dyn RngCore,
    ) -> Result<Trajectory> {
        let (mut episode, mut state) = self.reset(task)?;
        let mut steps = Vec::with_capacity(episode.spec.step_cap);
        let reward = loop {
            let seen = truncate_history(&state, context.0, context.1);
            let action = policy.sample_action(&seen, temperature, rng)?;
            let outcome = self.step(&mut episode, action)?;
            steps.push(Step { state: seen, action });
            state = outcome.state;
            if outcome.done {
                break outcome.reward;
            }
        };
        Ok(Trajectory::new(task, steps, reward))
    }
}
