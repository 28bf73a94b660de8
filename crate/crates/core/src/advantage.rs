//! Advantage estimators.
//!
//! * Group normalization: `(R_i - mean) / std` over a group of rewards,
//!   using the population standard deviation. A group with zero spread
//!   carries no relative signal and gets all-zero advantages.
//! * Success-rate weighting: a successful trajectory of a task with
//!   estimate `s` gets `(1 - s) * R`. Failed trajectories are not scored.
//! * Step decomposition: every step of a trajectory inherits the
//!   trajectory's advantage.
//! * The final advantage of an augmented step is the product of the
//!   trajectory-level credit and the step-group advantage.

use crate::error::{Error, Result};
use crate::types::{truncate_history, StepSample, TaskId, Trajectory};

/// Trajectories of a single task collected in the same round.
#[derive(Debug, Clone)]
pub struct TrajectoryGroup {
    task: TaskId,
    trajectories: Vec<Trajectory>,
}

impl TrajectoryGroup {
    pub fn new(task: TaskId, trajectories: Vec<Trajectory>) -> Result<Self> {
        if trajectories.is_empty() {
            return Err(Error::Config(format!("empty trajectory group for task {task}")));
        }
        if let Some(t) = trajectories.iter().find(|t| t.task != task) {
            return Err(Error::Config(format!(
                "trajectory of task {} in group of task {task}",
                t.task
            )));
        }
        Ok(Self { task, trajectories })
    }

    pub fn task(&self) -> TaskId {
        self.task
    }

    pub fn trajectories(&self) -> &[Trajectory] {
        &self.trajectories
    }

    pub fn into_trajectories(self) -> Vec<Trajectory> {
        self.trajectories
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }
}

/// Normalized group advantages; the flag is true when the group had no
/// spread and every advantage was set to zero.
pub fn group_normalize(rewards: &[f64]) -> (Vec<f64>, bool) {
    if rewards.is_empty() {
        return (Vec::new(), true);
    }
    let n = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let var = rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    if std <= 1e-12 * mean.abs().max(1.0) {
        return (vec![0.0; rewards.len()], true);
    }
    (rewards.iter().map(|r| (r - mean) / std).collect(), false)
}

/// Trajectory-level group-relative advantages, one per trajectory.
pub fn tgrpo_advantages(group: &TrajectoryGroup) -> Result<Vec<f64>> {
    if group.len() < 2 {
        return Err(Error::Config(format!(
            "group of task {} has {} trajectory, need at least 2",
            group.task,
            group.len()
        )));
    }
    let rewards: Vec<f64> = group.trajectories.iter().map(|t| t.reward).collect();
    Ok(group_normalize(&rewards).0)
}

pub fn sr_weighted_advantage(trajectory: &Trajectory, s_hat: f64) -> Result<f64> {
    if trajectory.reward <= 0.0 {
        return Err(Error::FailedTrajectory(trajectory.reward));
    }
    Ok((1.0 - s_hat) * trajectory.reward)
}

/// Splits a trajectory into one sample per step, each carrying `advantage`
/// and a history truncated to `max_responses` / `max_observations`.
pub fn decompose(
    trajectory: &Trajectory,
    advantage: f64,
    max_responses: usize,
    max_observations: usize,
    source_success_rate: f64,
) -> Vec<StepSample> {
    trajectory
        .steps
        .iter()
        .map(|step| StepSample {
            state: truncate_history(&step.state, max_responses, max_observations),
            action: step.action,
            advantage,
            source_task: trajectory.task,
            source_success_rate,
        })
        .collect()
}

pub fn combine_final(base: f64, aug: f64) -> f64 {
    base * aug
}
