//! Per-task success-rate record and the task cache derived from it.
//!
//! At the end of every collection round each task's estimate is blended
//! with the round's observed success ratio. The weight on the previous
//! estimate shrinks as the round supplies more trajectories:
//!
//! ```text
//! alpha = 1 - n/N   if n < N, else 0
//! s'    = (u + alpha * s * N) / (n + alpha * N)
//! ```
//!
//! where `n` and `u` are the trajectories collected and succeeded for the
//! task this round and `N` is the group size. A round that samples the task
//! fully (`n >= N`) replaces the estimate with the plain ratio; a round that
//! does not sample it at all leaves the estimate unchanged.

use crate::error::{Error, Result};
use crate::types::TaskId;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskRecord {
    pub task: TaskId,
    pub s_hat: f64,
    /// Trajectories collected for the task in the most recent round.
    pub sampled: u64,
    /// Successful trajectories among `sampled`.
    pub successes: u64,
}

/// Trajectories collected and succeeded for one task during a round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RoundCounts {
    pub sampled: u64,
    pub successes: u64,
}

impl RoundCounts {
    pub fn record(&mut self, success: bool) {
        self.sampled += 1;
        self.successes += u64::from(success);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuccessRateTable {
    records: BTreeMap<TaskId, TaskRecord>,
    round: u64,
    group_size: u64,
    threshold: f64,
}

/// Smoothed success-rate update for a single task.
pub fn smoothed_rate(prior: f64, sampled: u64, successes: u64, group_size: u64) -> f64 {
    if sampled == 0 {
        return prior;
    }
    let n = group_size as f64;
    let alpha = if sampled < group_size {
        1.0 - sampled as f64 / n
    } else {
        0.0
    };
    (successes as f64 + alpha * prior * n) / (sampled as f64 + alpha * n)
}

impl SuccessRateTable {
    /// Creates a table with every task at `s_init` and round 0.
    pub fn new(tasks: &[TaskId], group_size: u64, threshold: f64, s_init: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&s_init) {
            return Err(Error::Config(format!(
                "initial success rate {s_init} outside [0, 1]"
            )));
        }
        if group_size < 2 {
            return Err(Error::Config(format!("group size {group_size} below 2")));
        }
        if !(threshold > 0.0 && threshold < 1.0) {
            return Err(Error::Config(format!("threshold {threshold} outside (0, 1)")));
        }
        let mut records = BTreeMap::new();
        for &task in tasks {
            let record = TaskRecord {
                task,
                s_hat: s_init,
                sampled: 0,
                successes: 0,
            };
            if records.insert(task, record).is_some() {
                return Err(Error::DuplicateTask(task));
            }
        }
        Ok(Self {
            records,
            round: 0,
            group_size,
            threshold,
        })
    }

    pub fn round(&self) -> u64 {
        self.round
    }

    pub fn group_size(&self) -> u64 {
        self.group_size
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, task: TaskId) -> Option<&TaskRecord> {
        self.records.get(&task)
    }

    /// Current estimate for `task`; panics on an unknown id.
    pub fn s_hat(&self, task: TaskId) -> f64 {
        self.records[&task].s_hat
    }

    /// Records in ascending task order.
    pub fn records(&self) -> impl Iterator<Item = &TaskRecord> {
        self.records.values()
    }

    /// Applies one round of counts and returns the next table. Tasks absent
    /// from `counts` are treated as unsampled.
    pub fn update_round(&self, counts: &BTreeMap<TaskId, RoundCounts>) -> Result<Self> {
        for (&task, c) in counts {
            if !self.records.contains_key(&task) {
                return Err(Error::UnknownTask(task));
            }
            if c.successes > c.sampled {
                return Err(Error::InvalidCounts {
                    task,
                    sampled: c.sampled,
                    successes: c.successes,
                });
            }
        }
        let records = self
            .records
            .iter()
            .map(|(&task, rec)| {
                let c = counts.get(&task).copied().unwrap_or_default();
                let s_hat = smoothed_rate(rec.s_hat, c.sampled, c.successes, self.group_size);
                (
                    task,
                    TaskRecord {
                        task,
                        s_hat,
                        sampled: c.sampled,
                        successes: c.successes,
                    },
                )
            })
            .collect();
        Ok(Self {
            records,
            round: self.round + 1,
            group_size: self.group_size,
            threshold: self.threshold,
        })
    }

    /// Tasks with `0 < s_hat < threshold`, ascending by id.
    pub fn cache(&self) -> Vec<TaskId> {
        self.records
            .values()
            .filter(|r| r.s_hat > 0.0 && r.s_hat < self.threshold)
            .map(|r| r.task)
            .collect()
    }

    pub fn task_ids(&self) -> BTreeSet<TaskId> {
        self.records.keys().copied().collect()
    }
}
