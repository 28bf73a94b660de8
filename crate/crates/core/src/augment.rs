//! Step-level group augmentation.
//!
//! A step sample from a low-success task is expanded into a group: the
//! original action plus `n = N/2 - 1` alternatives drawn from the policy at
//! the same state. Each member earns reward 1 if its action matches the
//! original, 0 otherwise, and the rewards are normalized within the group.
//! Generating the alternatives costs policy inference only; the environment
//! is never touched.

use crate::advantage::{combine_final, group_normalize};
use crate::error::{Error, Result};
use crate::policy::Policy;
use crate::types::{Action, StepSample};
use rand::RngCore;
use serde::{Deserialize, Serialize};

/// Decides whether a candidate action counts as the reference action.
pub trait ActionMatcher {
    fn matches(&self, candidate: Action, reference: Action) -> bool;
}

/// Token equality.
#[derive(Debug, Clone, Copy, Default)]
pub struct ExactMatch;

impl ActionMatcher for ExactMatch {
    fn matches(&self, candidate: Action, reference: Action) -> bool {
        candidate == reference
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub action: Action,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentationGroup {
    pub reference: StepSample,
    /// Candidate 0 is the reference action itself.
    pub candidates: Vec<Candidate>,
    pub advantages: Vec<f64>,
    /// Zero reward variance: every advantage is 0.
    pub inert: bool,
}

/// Number of generated alternatives for rollout group size `group_size`.
pub fn alternatives_for(group_size: usize) -> usize {
    (group_size / 2).saturating_sub(1).max(1)
}

/// Step samples whose source task has success rate at most `s_low`.
pub fn select_for_augmentation(samples: &[StepSample], s_low: f64) -> Vec<StepSample> {
    samples
        .iter()
        .filter(|s| s.source_success_rate <= s_low)
        .cloned()
        .collect()
}

pub fn build_group<P: Policy + ?Sized, M: ActionMatcher + ?Sized>(
    reference: &StepSample,
    policy: &P,
    group_size: usize,
    temperature: f64,
    matcher: &M,
    rng: &mut dyn RngCore,
) -> Result<AugmentationGroup> {
    if group_size < 2 {
        return Err(Error::Config(format!(
            "group size {group_size} too small to augment"
        )));
    }
    let n = alternatives_for(group_size);
    let mut candidates = Vec::with_capacity(n + 1);
    candidates.push(Candidate {
        action: reference.action,
        reward: 1.0,
    });
    for _ in 0..n {
        let action = policy.sample_action(&reference.state, temperature, rng)?;
        let reward = if matcher.matches(action, reference.action) {
            1.0
        } else {
            0.0
        };
        candidates.push(Candidate { action, reward });
    }
    let mut group = AugmentationGroup {
        reference: reference.clone(),
        candidates,
        advantages: Vec::new(),
        inert: false,
    };
    let (advantages, inert) = aug_advantages(&group);
    group.advantages = advantages;
    group.inert = inert;
    Ok(group)
}

/// Group-normalized candidate rewards and the inert flag.
pub fn aug_advantages(group: &AugmentationGroup) -> (Vec<f64>, bool) {
    let rewards: Vec<f64> = group.candidates.iter().map(|c| c.reward).collect();
    group_normalize(&rewards)
}

/// Always zero: candidates come from the policy, not the environment.
pub fn env_interaction_count(_group: &AugmentationGroup) -> u64 {
    0
}

/// Policy calls spent generating the alternatives.
pub fn inference_count(group: &AugmentationGroup) -> u64 {
    group.candidates.len().saturating_sub(1) as u64
}

impl AugmentationGroup {
    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    /// The group as training samples, the reference first, each carrying
    /// `reference.advantage * aug_advantage`.
    pub fn into_samples(self) -> Vec<StepSample> {
        let base = self.reference.advantage;
        self.candidates
            .iter()
            .zip(&self.advantages)
            .map(|(c, &adv)| StepSample {
                state: self.reference.state.clone(),
                action: c.action,
                advantage: combine_final(base, adv),
                source_task: self.reference.source_task,
                source_success_rate: self.reference.source_success_rate,
            })
            .collect()
    }
}
