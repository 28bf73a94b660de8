//! Per-round sampling budget: every task in the batch is expanded into `N`
//! copies, and all copies but the first may be handed to a task from the
//! cache with a probability that grows with the task's success rate.

use crate::tracker::SuccessRateTable;
use crate::types::TaskId;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Slot {
    pub origin: TaskId,
    pub assigned: TaskId,
    pub replaced: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AllocationPlan {
    pub round: u64,
    pub slots: Vec<Slot>,
}

impl AllocationPlan {
    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn replaced_count(&self) -> usize {
        self.slots.iter().filter(|s| s.replaced).count()
    }
}

/// How a replacement target is drawn from the cache.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CacheSampling {
    #[default]
    Uniform,
    /// Weight each cached task by `1 - s_hat`.
    InverseSuccess,
}

/// Logistic replacement probability `1 / (1 + exp(-kappa (s_hat - s0)))`.
pub fn replacement_probability(s_hat: f64, kappa: f64, s0: f64) -> f64 {
    1.0 / (1.0 + (-kappa * (s_hat - s0)).exp())
}

/// Expands each task into `group_size` slots with no replacement.
pub fn allocate_uniform(tasks: &[TaskId], group_size: usize, round: u64) -> AllocationPlan {
    let slots = tasks
        .iter()
        .flat_map(|&t| {
            std::iter::repeat_n(
                Slot {
                    origin: t,
                    assigned: t,
                    replaced: false,
                },
                group_size,
            )
        })
        .collect();
    AllocationPlan { round, slots }
}

/// Success-rate guided allocation.
///
/// Slot 0 of every task keeps the original. Each of the other `N - 1` copies
/// is replaced with probability [`replacement_probability`] of the task's
/// current estimate; the substitute is drawn from `cache`. With an empty
/// cache every copy keeps its origin.
pub fn allocate<R: Rng + ?Sized>(
    tasks: &[TaskId],
    table: &SuccessRateTable,
    cache: &[TaskId],
    group_size: usize,
    kappa: f64,
    sampling: CacheSampling,
    rng: &mut R,
) -> AllocationPlan {
    let weights: Vec<f64> = match sampling {
        CacheSampling::Uniform => Vec::new(),
        CacheSampling::InverseSuccess => cache.iter().map(|&t| 1.0 - table.s_hat(t)).collect(),
    };
    let mut slots = Vec::with_capacity(tasks.len() * group_size);
    for &origin in tasks {
        let p = replacement_probability(table.s_hat(origin), kappa, table.threshold());
        for copy in 0..group_size {
            let keep = Slot {
                origin,
                assigned: origin,
                replaced: false,
            };
            if copy == 0 {
                slots.push(keep);
                continue;
            }
            let hit = rng.random::<f64>() < p;
            let target = if hit && !cache.is_empty() {
                pick(cache, &weights, rng)
            } else {
                None
            };
            slots.push(match target {
                Some(assigned) => Slot {
                    origin,
                    assigned,
                    replaced: true,
                },
                None => keep,
            });
        }
    }
    AllocationPlan {
        round: table.round(),
        slots,
    }
}

fn pick<R: Rng + ?Sized>(cache: &[TaskId], weights: &[f64], rng: &mut R) -> Option<TaskId> {
    if weights.is_empty() {
        return Some(cache[rng.random_range(0..cache.len())]);
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Some(cache[rng.random_range(0..cache.len())]);
    }
    let mut x = rng.random::<f64>() * total;
    for (&task, &w) in cache.iter().zip(weights) {
        if x < w {
            return Some(task);
        }
        x -= w;
    }
    cache.last().copied()
}
