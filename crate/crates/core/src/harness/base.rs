//! Starting policy for the synthetic suite.
//!
//! Training begins from a partially competent policy rather than from
//! scratch. Along each task's target path the correct action's logit is
//! raised by the task's `prior_skill` plus a per-state perturbation drawn
//! uniformly from `[-jitter, jitter]`. A negative total makes the base
//! policy prefer a wrong action there. States off the target path stay at
//! zero logits.

use super::seed_for;
use crate::envsim::{SyntheticEnv, SyntheticTaskSpec};
use crate::policy::TabularSoftmaxPolicy;
use crate::types::{truncate_history, State};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const BASE_STREAM: u64 = 0xBA5E;

pub fn base_policy(
    env: &SyntheticEnv,
    context: (usize, usize),
    jitter: f64,
    seed: u64,
) -> TabularSoftmaxPolicy {
    let alphabet = env.specs().iter().map(|s| s.alphabet).max().unwrap_or(2) as usize;
    let mut policy = TabularSoftmaxPolicy::new(alphabet);
    for spec in env.specs() {
        for (state, bias) in on_path_biases(env, spec, jitter, seed) {
            if bias == 0.0 {
                continue;
            }
            let mut logits = vec![0.0; alphabet];
            logits[spec.target[state.history.responses.len()].index()] = bias;
            policy.set_logits(truncate_history(&state, context.0, context.1), logits);
        }
    }
    policy
}

/// Full-history states along the target path with their skill bias.
fn on_path_biases(env: &SyntheticEnv, spec: &SyntheticTaskSpec, jitter: f64, seed: u64) -> Vec<(State, f64)> {
    let mut state = State::new(spec.task, env.observation(spec.task, 0, 0));
    let mut out = Vec::with_capacity(spec.len());
    for (progress, &action) in spec.target.iter().enumerate() {
        let mut rng =
            ChaCha8Rng::seed_from_u64(seed_for(seed, spec.task.0 as u64, BASE_STREAM, progress as u64));
        let noise = if jitter > 0.0 {
            rng.random_range(-jitter..=jitter)
        } else {
            0.0
        };
        out.push((state.clone(), spec.prior_skill + noise));
        let obs = state.observation;
        state.history.push(obs, action);
        state.observation = env.observation(spec.task, progress + 1, 0);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::Policy;
    use crate::types::{Action, TaskId};
    use rand_chacha::ChaCha8Rng;

    fn env(skill: f64) -> SyntheticEnv {
        let mut spec =
            SyntheticTaskSpec::new(TaskId(0), vec![Action(3), Action(1), Action(4)], 5, 0).unwrap();
        spec.prior_skill = skill;
        SyntheticEnv::new(vec![spec]).unwrap()
    }

    #[test]
    fn skilled_base_solves_greedily() {
        let env = env(2.0);
        let policy = base_policy(&env, (3, 0), 0.5, 0);
        let traj = env
            .rollout(TaskId(0), &policy, 0.0, (3, 0), &mut ChaCha8Rng::seed_from_u64(0))
            .unwrap();
        assert_eq!(traj.reward, 1.0);
        assert_eq!(policy.len(), 3);
    }

    #[test]
    fn unskilled_base_is_uniform() {
        let policy = base_policy(&env(0.0), (3, 0), 0.0, 0);
        assert!(policy.is_empty());
    }

    #[test]
    fn same_biases_for_every_context() {
        let env = env(1.0);
        let short = base_policy(&env, (1, 0), 1.0, 9);
        let full = base_policy(&env, (usize::MAX, usize::MAX), 1.0, 9);
        let mut a: Vec<Vec<f64>> = Vec::new();
        let mut b: Vec<Vec<f64>> = Vec::new();
        for (state, _) in on_path_biases(&env, &env.specs()[0], 1.0, 9) {
            a.push(short.logits(&truncate_history(&state, 1, 0)));
            b.push(full.logits(&state));
        }
        assert_eq!(a, b);
    }
}
