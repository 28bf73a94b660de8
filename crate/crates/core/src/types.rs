//! Shared domain types: tasks, states, actions, trajectories and the
//! step-level samples that flow into the policy update.
//!
//! A state is the triple of task, interaction history and current
//! observation. Observations are opaque integer tokens supplied by the
//! environment; the history keeps the responses (actions) and the
//! observations the agent saw before each of them.

use serde::{Deserialize, Serialize};
use std::fmt;

/// Index of a task inside a task set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TaskId(pub u32);

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A discrete action symbol from the environment's alphabet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Action(pub u32);

impl Action {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Opaque observation token standing in for a screenshot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Observation(pub u64);

/// Past responses and past observations, oldest first.
///
/// The two lists are kept separately so they can be truncated to different
/// lengths; entry `i` of each list came from the same earlier turn only when
/// both lists have the same length.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub struct History {
    pub responses: Vec<Action>,
    pub observations: Vec<Observation>,
}

impl History {
    pub fn is_empty(&self) -> bool {
        self.responses.is_empty() && self.observations.is_empty()
    }

    /// Appends one finished turn.
    pub fn push(&mut self, observation: Observation, response: Action) {
        self.observations.push(observation);
        self.responses.push(response);
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct State {
    pub task: TaskId,
    pub history: History,
    pub observation: Observation,
}

impl State {
    pub fn new(task: TaskId, observation: Observation) -> Self {
        Self {
            task,
            history: History::default(),
            observation,
        }
    }
}

/// Keeps only the most recent `max_responses` responses and
/// `max_observations` past observations. Caps larger than the history
/// keep everything.
pub fn truncate_history(state: &State, max_responses: usize, max_observations: usize) -> State {
    let tail = |len: usize, cap: usize| len.saturating_sub(cap);
    let h = &state.history;
    State {
        task: state.task,
        history: History {
            responses: h.responses[tail(h.responses.len(), max_responses)..].to_vec(),
            observations: h.observations[tail(h.observations.len(), max_observations)..].to_vec(),
        },
        observation: state.observation,
    }
}

/// One state-action pair of a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub state: State,
    pub action: Action,
}

/// A finished episode with its terminal reward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub task: TaskId,
    pub steps: Vec<Step>,
    pub reward: f64,
    pub length: usize,
}

impl Trajectory {
    /// Builds a trajectory, checking that every step belongs to `task`.
    ///
    /// Panics if a step's state names another task or `steps` is empty;
    /// both are programming errors in the rollout code.
    pub fn new(task: TaskId, steps: Vec<Step>, reward: f64) -> Self {
        assert!(!steps.is_empty(), "trajectory needs at least one step");
        assert!(
            steps.iter().all(|s| s.state.task == task),
            "step state belongs to another task"
        );
        let length = steps.len();
        Self {
            task,
            steps,
            reward,
            length,
        }
    }

    pub fn is_success(&self) -> bool {
        self.reward > 0.0
    }
}

/// A decomposed training sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepSample {
    pub state: State,
    pub action: Action,
    pub advantage: f64,
    pub source_task: TaskId,
    pub source_success_rate: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn state_with(responses: usize, observations: usize) -> State {
        State {
            task: TaskId(7),
            history: History {
                responses: (0..responses as u32).map(Action).collect(),
                observations: (0..observations as u64).map(Observation).collect(),
            },
            observation: Observation(99),
        }
    }

    #[test]
    fn keeps_last_three_responses_and_no_observations() {
        let s = truncate_history(&state_with(5, 5), 3, 0);
        assert_eq!(s.history.responses, vec![Action(2), Action(3), Action(4)]);
        assert!(s.history.observations.is_empty());
        assert_eq!(s.observation, Observation(99));
        assert_eq!(s.task, TaskId(7));
    }

    #[test]
    fn empty_history_stays_empty() {
        let s = truncate_history(&state_with(0, 0), 4, 4);
        assert!(s.history.is_empty());
    }

    #[test]
    fn cap_larger_than_history_keeps_all() {
        let s = truncate_history(&state_with(2, 2), 3, 3);
        assert_eq!(s.history.responses.len(), 2);
        assert_eq!(s.history.observations.len(), 2);
    }

    #[test]
    #[should_panic]
    fn trajectory_rejects_foreign_steps() {
        let step = Step {
            state: State::new(TaskId(1), Observation(0)),
            action: Action(0),
        };
        Trajectory::new(TaskId(2), vec![step], 1.0);
    }

    #[test]
    fn trajectory_serializes_one_line() {
        let step = Step {
            state: state_with(1, 1),
            action: Action(3),
        };
        let t = Trajectory::new(TaskId(7), vec![step], 1.0);
        let line = serde_json::to_string(&t).unwrap();
        assert!(!line.contains('\n'));
        assert!(line.contains("\"length\":1"));
        let back: Trajectory = serde_json::from_str(&line).unwrap();
        assert_eq!(back, t);
    }

    proptest! {
        #[test]
        fn truncation_is_idempotent(r in 0usize..12, o in 0usize..12, cr in 0usize..6, co in 0usize..6) {
            let s = state_with(r, o);
            let once = truncate_history(&s, cr, co);
            let twice = truncate_history(&once, cr, co);
            prop_assert_eq!(&once, &twice);
            prop_assert_eq!(once.task, s.task);
            prop_assert_eq!(once.observation, s.observation);
            prop_assert_eq!(once.history.responses.len(), r.min(cr));
            prop_assert_eq!(once.history.observations.len(), o.min(co));
        }
    }
}
