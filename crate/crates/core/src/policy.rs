//! Policies over a discrete action alphabet and the clipped policy-gradient
//! update.
//!
//! [`TabularSoftmaxPolicy`] keeps one logit vector per state fingerprint.
//! The fingerprint is the [`State`] exactly as presented (task, the history
//! the caller chose to keep, current observation), so history truncation
//! decides which situations share parameters. Unseen states have all-zero
//! logits, i.e. the uniform distribution.
//!
//! The update performs one gradient-ascent step on
//!
//! ```text
//! J = sum_i w_i * [ min(r_i A_i, clip(r_i, 1-eps, 1+eps) A_i) - beta * KL(pi(.|s_i) || pi_old(.|s_i)) ]
//! ```
//!
//! with `r_i = pi(a_i|s_i) / pi_old(a_i|s_i)`. For step samples the weights
//! are `1/n`, the plain mean. For sequence samples each sequence has weight
//! `1/n` spread evenly over its steps.

use crate::error::{Error, Result};
use crate::types::{Action, State, StepSample};
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::io::{BufRead, Write};

pub trait Policy {
    fn num_actions(&self) -> usize;

    /// Unnormalized scores for `state`.
    fn logits(&self, state: &State) -> Vec<f64>;

    fn action_log_prob(&self, state: &State, action: Action) -> f64 {
        log_softmax(&self.logits(state))[action.index()]
    }

    /// Temperature 0 picks the argmax (lowest index on ties); otherwise
    /// samples from `softmax(logits / temperature)`.
    fn sample_action(&self, state: &State, temperature: f64, rng: &mut dyn RngCore) -> Result<Action> {
        let logits = self.logits(state);
        if logits.is_empty() {
            return Err(Error::Policy("empty action alphabet".into()));
        }
        if temperature <= 0.0 {
            return Ok(Action(argmax(&logits) as u32));
        }
        let scaled: Vec<f64> = logits.iter().map(|z| z / temperature).collect();
        let probs = softmax(&scaled);
        let mut x = rng.random::<f64>();
        for (i, p) in probs.iter().enumerate() {
            if x < *p {
                return Ok(Action(i as u32));
            }
            x -= p;
        }
        // rounding left a sliver past the last bucket
        Ok(Action((probs.len() - 1) as u32))
    }
}

pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    logits.iter().map(|z| z - lse).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UpdateConfig {
    pub learning_rate: f64,
    pub clip_epsilon: f64,
    pub temperature_train: f64,
    pub temperature_eval: f64,
    pub kl_coefficient: f64,
}

impl Default for UpdateConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            clip_epsilon: 0.2,
            temperature_train: 0.7,
            temperature_eval: 0.0,
            kl_coefficient: 0.001,
        }
    }
}

impl UpdateConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if !(self.clip_epsilon > 0.0 && self.clip_epsilon < 1.0) {
            return Err(Error::Config("clip_epsilon must lie in (0, 1)".into()));
        }
        if self.temperature_train < 0.0 || self.temperature_eval < 0.0 {
            return Err(Error::Config("temperatures must be non-negative".into()));
        }
        if self.kl_coefficient < 0.0 {
            return Err(Error::Config("kl_coefficient must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct UpdateStats {
    pub terms: usize,
    pub mean_ratio: f64,
    pub clipped_fraction: f64,
    pub mean_kl: f64,
}

/// A whole trajectory treated as one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceSample {
    pub steps: Vec<(State, Action)>,
    pub advantage: f64,
}

/// One weighted term of the objective.
#[derive(Debug, Clone, Copy)]
pub struct Term<'a> {
    pub state: &'a State,
    pub action: Action,
    pub advantage: f64,
    pub weight: f64,
}

pub fn step_terms(samples: &[StepSample]) -> Vec<Term<'_>> {
    let w = 1.0 / samples.len().max(1) as f64;
    samples
        .iter()
        .map(|s| Term {
            state: &s.state,
            action: s.action,
            advantage: s.advantage,
            weight: w,
        })
        .collect()
}

pub fn sequence_terms(samples: &[SequenceSample]) -> Vec<Term<'_>> {
    let per_seq = 1.0 / samples.len().max(1) as f64;
    samples
        .iter()
        .flat_map(|seq| {
            let w = per_seq / seq.steps.len().max(1) as f64;
            seq.steps.iter().map(move |(state, action)| Term {
                state,
                action: *action,
                advantage: seq.advantage,
                weight: w,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TabularSoftmaxPolicy {
    num_actions: usize,
    table: HashMap<State, Vec<f64>>,
}

impl Policy for TabularSoftmaxPolicy {
    fn num_actions(&self) -> usize {
        self.num_actions
    }

    fn logits(&self, state: &State) -> Vec<f64> {
        self.table
            .get(state)
            .cloned()
            .unwrap_or_else(|| vec![0.0; self.num_actions])
    }
}

#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    num_actions: usize,
    states: usize,
}

#[derive(Serialize, Deserialize)]
struct CheckpointEntry {
    state: State,
    logits: Vec<f64>,
}

impl TabularSoftmaxPolicy {
    pub fn new(num_actions: usize) -> Self {
        Self {
            num_actions,
            table: HashMap::new(),
        }
    }

    /// Number of states with explicit logits.
    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    pub fn probabilities(&self, state: &State) -> Vec<f64> {
        softmax(&self.logits(state))
    }

    pub fn set_logits(&mut self, state: State, logits: Vec<f64>) {
        assert_eq!(logits.len(), self.num_actions, "logit vector has wrong length");
        self.table.insert(state, logits);
    }

    /// Clipped surrogate minus KL penalty.
    pub fn objective(&self, terms: &[Term<'_>], old: &TabularSoftmaxPolicy, config: &UpdateConfig) -> f64 {
        terms
            .iter()
            .map(|t| {
                let logp = log_softmax(&self.logits(t.state));
                let old_logp = log_softmax(&old.logits(t.state));
                let ratio = (logp[t.action.index()] - old_logp[t.action.index()]).exp();
                let clipped = ratio.clamp(1.0 - config.clip_epsilon, 1.0 + config.clip_epsilon);
                let surrogate = (ratio * t.advantage).min(clipped * t.advantage);
                t.weight * (surrogate - config.kl_coefficient * kl(&logp, &old_logp))
            })
            .sum()
    }

    /// Analytic gradient of [`Self::objective`] with respect to the logits.
    pub fn gradient(
        &self,
        terms: &[Term<'_>],
        old: &TabularSoftmaxPolicy,
        config: &UpdateConfig,
    ) -> (HashMap<State, Vec<f64>>, UpdateStats) {
        let mut grad: HashMap<State, Vec<f64>> = HashMap::new();
        let mut ratio_sum = 0.0;
        let mut clipped = 0usize;
        let mut kl_sum = 0.0;
        for t in terms {
            let logp = log_softmax(&self.logits(t.state));
            let old_logp = log_softmax(&old.logits(t.state));
            let probs: Vec<f64> = logp.iter().map(|l| l.exp()).collect();
            let a = t.action.index();
            let ratio = (logp[a] - old_logp[a]).exp();
            let div = kl(&logp, &old_logp);
            ratio_sum += ratio;
            kl_sum += div;

            let active = if t.advantage >= 0.0 {
                ratio <= 1.0 + config.clip_epsilon
            } else {
                ratio >= 1.0 - config.clip_epsilon
            };
            if !active {
                clipped += 1;
            }
            let g = grad
                .entry(t.state.clone())
                .or_insert_with(|| vec![0.0; self.num_actions]);
            for (c, gc) in g.iter_mut().enumerate() {
                let mut d = 0.0;
                if active {
                    let indicator = if c == a { 1.0 } else { 0.0 };
                    d += t.advantage * ratio * (indicator - probs[c]);
                }
                d -= config.kl_coefficient * probs[c] * (logp[c] - old_logp[c] - div);
                *gc += t.weight * d;
            }
        }
        let n = terms.len().max(1) as f64;
        let stats = UpdateStats {
            terms: terms.len(),
            mean_ratio: if terms.is_empty() { 0.0 } else { ratio_sum / n },
            clipped_fraction: clipped as f64 / n,
            mean_kl: kl_sum / n,
        };
        (grad, stats)
    }

    /// One gradient-ascent step. An empty term list is a no-op.
    pub fn apply(
        &mut self,
        terms: &[Term<'_>],
        old: &TabularSoftmaxPolicy,
        config: &UpdateConfig,
    ) -> UpdateStats {
        if terms.is_empty() {
            return UpdateStats::default();
        }
        let (grad, stats) = self.gradient(terms, old, config);
        for (state, g) in grad {
            let n = self.num_actions;
            let logits = self.table.entry(state).or_insert_with(|| vec![0.0; n]);
            for (z, d) in logits.iter_mut().zip(g) {
                *z += config.learning_rate * d;
            }
        }
        stats
    }

    pub fn update(
        &mut self,
        samples: &[StepSample],
        old: &TabularSoftmaxPolicy,
        config: &UpdateConfig,
    ) -> UpdateStats {
        self.apply(&step_terms(samples), old, config)
    }

    pub fn update_sequences(
        &mut self,
        samples: &[SequenceSample],
        old: &TabularSoftmaxPolicy,
        config: &UpdateConfig,
    ) -> UpdateStats {
        self.apply(&sequence_terms(samples), old, config)
    }

    /// Writes a header line followed by one `{state, logits}` record per
    /// line, ordered by state.
    pub fn save<W: Write>(&self, mut out: W) -> Result<()> {
        let header = CheckpointHeader {
            num_actions: self.num_actions,
            states: self.table.len(),
        };
        writeln!(out, "{}", serde_json::to_string(&header)?)?;
        let mut entries: Vec<_> = self.table.iter().collect();
        entries.sort_by(|a, b| a.0.cmp(b.0));
        for (state, logits) in entries {
            let entry = CheckpointEntry {
                state: state.clone(),
                logits: logits.clone(),
            };
            writeln!(out, "{}", serde_json::to_string(&entry)?)?;
        }
        Ok(())
    }

    pub fn load<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let header: CheckpointHeader = match lines.next() {
            Some(line) => serde_json::from_str(&line?)?,
            None => return Err(Error::Config("empty checkpoint".into())),
        };
        let mut policy = Self::new(header.num_actions);
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: CheckpointEntry = serde_json::from_str(&line)?;
            if entry.logits.len() != header.num_actions {
                return Err(Error::Config(format!(
                    "checkpoint entry has {} logits, expected {}",
                    entry.logits.len(),
                    header.num_actions
                )));
            }
            policy.table.insert(entry.state, entry.logits);
        }
        if policy.table.len() != header.states {
            return Err(Error::Config(format!(
                "checkpoint declares {} states but holds {}",
                header.states,
                policy.table.len()
            )));
        }
        Ok(policy)
    }
}

fn kl(logp: &[f64], old_logp: &[f64]) -> f64 {
    logp.iter().zip(old_logp).map(|(l, o)| l.exp() * (l - o)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{Observation, TaskId};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn state(obs: u64) -> State {
        State::new(TaskId(0), Observation(obs))
    }

    fn sample(obs: u64, action: u32, advantage: f64) -> StepSample {
        StepSample {
            state: state(obs),
            action: Action(action),
            advantage,
            source_task: TaskId(0),
            source_success_rate: 0.0,
        }
    }

    #[test]
    fn greedy_ties_break_low() {
        let p = TabularSoftmaxPolicy::new(4);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(p.sample_action(&state(1), 0.0, &mut rng).unwrap(), Action(0));
    }

    #[test]
    fn greedy_picks_max() {
        let mut p = TabularSoftmaxPolicy::new(2);
        p.set_logits(state(1), vec![2.0, 0.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(p.sample_action(&state(1), 0.0, &mut rng).unwrap(), Action(0));
        // near-zero temperature concentrates on the argmax
        let hits = (0..1000)
            .filter(|_| p.sample_action(&state(1), 1e-3, &mut rng).unwrap() == Action(0))
            .count();
        assert_eq!(hits, 1000);
    }

    #[test]
    fn equal_logits_sample_uniformly() {
        let mut p = TabularSoftmaxPolicy::new(3);
        p.set_logits(state(1), vec![1.0, 1.0, 1.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut counts = [0usize; 3];
        let draws = 30_000;
        for _ in 0..draws {
            counts[p.sample_action(&state(1), 0.7, &mut rng).unwrap().index()] += 1;
        }
        for c in counts {
            assert!((c as f64 / draws as f64 - 1.0 / 3.0).abs() < 0.02, "{counts:?}");
        }
    }

    #[test]
    fn positive_advantage_raises_log_prob() {
        let mut p = TabularSoftmaxPolicy::new(3);
        let old = p.clone();
        let before = p.action_log_prob(&state(1), Action(2));
        p.update(&[sample(1, 2, 1.0)], &old, &UpdateConfig::default());
        assert!(p.action_log_prob(&state(1), Action(2)) > before);
    }

    #[test]
    fn zero_advantage_is_stationary_at_snapshot() {
        let mut p = TabularSoftmaxPolicy::new(3);
        p.set_logits(state(1), vec![0.5, -0.2, 0.1]);
        let old = p.clone();
        p.update(&[sample(1, 0, 0.0)], &old, &UpdateConfig::default());
        assert_eq!(p.logits(&state(1)), vec![0.5, -0.2, 0.1]);
    }

    #[test]
    fn empty_update_is_noop() {
        let mut p = TabularSoftmaxPolicy::new(3);
        let old = p.clone();
        let stats = p.update(&[], &old, &UpdateConfig::default());
        assert_eq!(stats, UpdateStats::default());
        assert!(p.is_empty());
    }

    #[test]
    fn clipping_stops_gradient() {
        let mut p = TabularSoftmaxPolicy::new(2);
        p.set_logits(state(1), vec![3.0, 0.0]);
        let old = TabularSoftmaxPolicy::new(2);
        let samples = [sample(1, 0, 1.0)];
        let config = UpdateConfig {
            kl_coefficient: 0.0,
            ..UpdateConfig::default()
        };
        let (grad, stats) = p.gradient(&step_terms(&samples), &old, &config);
        assert_eq!(stats.clipped_fraction, 1.0);
        assert!(grad[&state(1)].iter().all(|g| *g == 0.0));
    }

    #[test]
    fn sequence_weights_sum_to_one() {
        let seqs = vec![
            SequenceSample {
                steps: vec![(state(1), Action(0)), (state(2), Action(1))],
                advantage: 1.0,
            },
            SequenceSample {
                steps: vec![(state(3), Action(0))],
                advantage: -1.0,
            },
        ];
        let total: f64 = sequence_terms(&seqs).iter().map(|t| t.weight).sum();
        assert!((total - 1.0).abs() < 1e-15);
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut p = TabularSoftmaxPolicy::new(3);
        p.set_logits(state(4), vec![0.25, -1.5, 3.0]);
        p.set_logits(state(2), vec![1.0, 0.0, 0.0]);
        let mut buf = Vec::new();
        p.save(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap().lines().count(), 3);
        let back = TabularSoftmaxPolicy::load(buf.as_slice()).unwrap();
        assert_eq!(back, p);
        assert!(TabularSoftmaxPolicy::load(&b""[..]).is_err());
    }

    proptest! {
        #[test]
        fn probabilities_normalize(logits in prop::collection::vec(-30.0f64..30.0, 2..8)) {
            let total: f64 = softmax(&logits).iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
        }

        #[test]
        fn greedy_invariant_under_positive_scaling(
            logits in prop::collection::vec(-5.0f64..5.0, 2..8),
            scale in 0.01f64..100.0,
        ) {
            let scaled: Vec<f64> = logits.iter().map(|z| z * scale).collect();
            prop_assert_eq!(argmax(&logits), argmax(&scaled));
        }

        #[test]
        fn single_positive_update_never_lowers_probability(
            logits in prop::collection::vec(-3.0f64..3.0, 3),
            action in 0u32..3,
            adv in 0.01f64..5.0,
        ) {
            let mut p = TabularSoftmaxPolicy::new(3);
            p.set_logits(state(1), logits);
            let old = p.clone();
            let before = p.probabilities(&state(1))[action as usize];
            p.update(&[sample(1, action, adv)], &old, &UpdateConfig::default());
            let after = p.probabilities(&state(1));
            prop_assert!(after[action as usize] >= before);
            prop_assert!((after.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
