//! One training round, and whole experiments built from rounds.
//!
//! A round runs: batch selection, allocation, rollout with the round's
//! frozen policy snapshot, tracker update, advantage estimation for the
//! configured method, optional step augmentation, and the policy update.

use super::base::base_policy;
use super::config::{Method, RunConfig};
use super::metrics::{high_success_fraction, high_success_series, tasks_above};
use super::seed_for;
use crate::advantage::{decompose, sr_weighted_advantage, tgrpo_advantages, TrajectoryGroup};
use crate::allocator::{allocate, allocate_uniform, AllocationPlan};
use crate::augment::{build_group, env_interaction_count, inference_count, ExactMatch};
use crate::envsim::{SuiteFile, SyntheticEnv, SyntheticTaskSpec};
use crate::error::Result;
use crate::policy::{SequenceSample, TabularSoftmaxPolicy, UpdateStats};
use crate::tracker::{RoundCounts, SuccessRateTable, TaskRecord};
use crate::types::{StepSample, TaskId, Trajectory};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

const ALLOC_STREAM: u64 = 1;
const ROLLOUT_STREAM: u64 = 2;
const AUG_STREAM: u64 = 3;
const SHUFFLE_STREAM: u64 = 4;
const EVAL_STREAM: u64 = 5;

/// Task success threshold used by the headline count.
pub const ABOVE: f64 = 0.6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mean_success: f64,
    pub tasks_above_60: usize,
    pub success: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundReport {
    pub round: u64,
    pub method: Method,
    pub batch: Vec<TaskId>,
    pub trajectories: usize,
    pub successes: usize,
    pub replaced_slots: usize,
    pub cache_size: usize,
    /// Post-update record of every task: this round's counts and estimate.
    pub tasks: Vec<TaskRecord>,
    pub tasks_above_60: usize,
    pub mean_s_hat: f64,
    pub high_success_fraction: f64,
    pub env_steps: u64,
    pub inference_calls: u64,
    pub rollout_inference: u64,
    pub augmentation_inference: u64,
    pub augmentation_env_steps: u64,
    pub augmentation_groups: usize,
    pub inert_groups: usize,
    pub training_samples: usize,
    pub update: UpdateStats,
    pub eval: Option<EvalReport>,
}

/// Everything a round produced, beyond its report.
#[derive(Debug, Clone)]
pub struct RoundOutput {
    pub report: RoundReport,
    pub plan: AllocationPlan,
    /// The table the plan was drawn from.
    pub pre_table: SuccessRateTable,
    pub trajectories: Vec<Trajectory>,
    pub samples: Vec<StepSample>,
}

enum Batch {
    Steps(Vec<StepSample>),
    Sequences(Vec<SequenceSample>),
}

/// Owns the mutable state of a run: tracker table, policy and environment.
pub struct Trainer {
    config: RunConfig,
    env: SyntheticEnv,
    eval_env: SyntheticEnv,
    table: SuccessRateTable,
    policy: TabularSoftmaxPolicy,
    tasks: Vec<TaskId>,
    round: u64,
}

impl Trainer {
    pub fn new(config: RunConfig) -> Result<Self> {
        config.validate()?;
        let specs = load_specs(&config)?;
        Self::with_specs(config, specs)
    }

    pub fn with_specs(config: RunConfig, specs: Vec<SyntheticTaskSpec>) -> Result<Self> {
        config.validate()?;
        let env = SyntheticEnv::new(specs.clone())?.with_observed_mistakes(config.observe_mistakes);
        let eval_env = SyntheticEnv::new(specs)?.with_observed_mistakes(config.observe_mistakes);
        let tasks = env.task_ids();
        let table = SuccessRateTable::new(&tasks, config.group_size as u64, config.s0, config.s_init)?;
        let policy = match &config.init_checkpoint {
            Some(path) => TabularSoftmaxPolicy::load(BufReader::new(File::open(path)?))?,
            None => base_policy(&env, config.context(), config.prior_jitter, config.suite_seed),
        };
        Ok(Self {
            config,
            env,
            eval_env,
            table,
            policy,
            tasks,
            round: 0,
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn table(&self) -> &SuccessRateTable {
        &self.table
    }

    pub fn policy(&self) -> &TabularSoftmaxPolicy {
        &self.policy
    }

    pub fn env(&self) -> &SyntheticEnv {
        &self.env
    }

    pub fn round(&self) -> u64 {
        self.round
    }

    /// Replaces the tracker table, e.g. to start from known estimates.
    pub fn set_table(&mut self, table: SuccessRateTable) {
        self.table = table;
    }

    /// Round-robin batch for `round`.
    pub fn batch_for(&self, round: u64) -> Vec<TaskId> {
        let n = self.tasks.len();
        let size = self.config.batch_tasks.min(n);
        let start = (round as usize * size) % n.max(1);
        (0..size).map(|k| self.tasks[(start + k) % n]).collect()
    }

    /// Greedy (or evaluation-temperature) pass over every task.
    pub fn evaluate(&self) -> Result<EvalReport> {
        let temperature = self.config.update.temperature_eval;
        let episodes = if temperature <= 0.0 {
            1
        } else {
            self.config.group_size
        };
        let context = self.config.context();
        let success = self
            .tasks
            .par_iter()
            .map(|&task| {
                let mut wins = 0.0;
                for e in 0..episodes {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed_for(
                        self.config.seed,
                        self.round,
                        EVAL_STREAM,
                        (task.0 as u64) << 16 | e as u64,
                    ));
                    let t = self
                        .eval_env
                        .rollout(task, &self.policy, temperature, context, &mut rng)?;
                    wins += t.reward;
                }
                Ok(wins / episodes as f64)
            })
            .collect::<Result<Vec<f64>>>()?;
        let mean_success = success.iter().sum::<f64>() / success.len().max(1) as f64;
        let tasks_above_60 = success.iter().filter(|&&s| s > ABOVE).count();
        Ok(EvalReport {
            mean_success,
            tasks_above_60,
            success,
        })
    }

    pub fn run_round(&mut self) -> Result<RoundOutput> {
        let config = self.config.clone();
        let round = self.round;
        let method = config.method;
        let seed = config.seed;
        let context = config.context();
        let batch = self.batch_for(round);
        let snapshot = self.policy.clone();
        let pre_table = self.table.clone();

        let cache = pre_table.cache();
        let plan = if method.uses_sr_sampling() {
            let mut rng = ChaCha8Rng::seed_from_u64(seed_for(seed, round, ALLOC_STREAM, 0));
            allocate(
                &batch,
                &pre_table,
                &cache,
                config.group_size,
                config.kappa,
                config.cache_sampling,
                &mut rng,
            )
        } else {
            allocate_uniform(&batch, config.group_size, round)
        };

        let env_before = self.env.interaction_counter();
        let env = &self.env;
        let trajectories: Vec<Trajectory> = plan
            .slots
            .par_iter()
            .enumerate()
            .map(|(i, slot)| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed_for(seed, round, ROLLOUT_STREAM, i as u64));
                env.rollout(
                    slot.assigned,
                    &snapshot,
                    config.update.temperature_train,
                    context,
                    &mut rng,
                )
            })
            .collect::<Result<_>>()?;
        let env_steps = self.env.interaction_counter() - env_before;
        let rollout_inference: u64 = trajectories.iter().map(|t| t.length as u64).sum();

        let mut counts: BTreeMap<TaskId, RoundCounts> = BTreeMap::new();
        for t in &trajectories {
            counts.entry(t.task).or_default().record(t.is_success());
        }
        let next_table = pre_table.update_round(&counts)?;

        let mut aug = AugmentationTally::default();
        let batch_samples = if method.is_trajectory_level() {
            Batch::Sequences(trajectory_samples(&trajectories)?)
        } else if !method.uses_sr_advantage() {
            Batch::Steps(broadcast_samples(&trajectories, &pre_table, context)?)
        } else {
            let base = success_samples(&trajectories, &pre_table, context)?;
            if method.uses_step_augmentation() {
                let before = self.env.interaction_counter();
                let (samples, tally) = augment_samples(base, &snapshot, &config, round)?;
                aug = tally;
                aug.env_steps = self.env.interaction_counter() - before;
                Batch::Steps(samples)
            } else {
                Batch::Steps(base)
            }
        };

        let (training_samples, logged_samples) = match &batch_samples {
            Batch::Steps(s) => (
                s.len(),
                if config.log_trajectories {
                    s.clone()
                } else {
                    Vec::new()
                },
            ),
            Batch::Sequences(s) => (s.iter().map(|q| q.steps.len()).sum(), Vec::new()),
        };
        let update = self.train(batch_samples, &snapshot, round);

        self.table = next_table;
        self.round += 1;

        let eval = if self.round.is_multiple_of(config.eval_every) {
            Some(self.evaluate()?)
        } else {
            None
        };

        let successes = trajectories.iter().filter(|t| t.is_success()).count();
        let mean_s_hat = self.table.records().map(|r| r.s_hat).sum::<f64>() / self.table.len().max(1) as f64;
        let report = RoundReport {
            round,
            method,
            batch,
            trajectories: trajectories.len(),
            successes,
            replaced_slots: plan.replaced_count(),
            cache_size: cache.len(),
            tasks: self.table.records().copied().collect(),
            tasks_above_60: tasks_above(&self.table, ABOVE),
            mean_s_hat,
            high_success_fraction: high_success_fraction(&plan, &pre_table),
            env_steps,
            inference_calls: rollout_inference + aug.inference,
            rollout_inference,
            augmentation_inference: aug.inference,
            augmentation_env_steps: aug.env_steps,
            augmentation_groups: aug.groups,
            inert_groups: aug.inert,
            training_samples,
            update,
            eval,
        };
        Ok(RoundOutput {
            report,
            plan,
            pre_table,
            trajectories: if config.log_trajectories {
                trajectories
            } else {
                Vec::new()
            },
            samples: logged_samples,
        })
    }

    fn train(&mut self, batch: Batch, snapshot: &TabularSoftmaxPolicy, round: u64) -> UpdateStats {
        let config = &self.config;
        let mut total = UpdateStats::default();
        let mut weight = 0usize;
        let mut accumulate = |s: UpdateStats| {
            let w = s.terms;
            if w == 0 {
                return;
            }
            let (a, b) = (weight as f64, w as f64);
            total.mean_ratio = (total.mean_ratio * a + s.mean_ratio * b) / (a + b);
            total.clipped_fraction = (total.clipped_fraction * a + s.clipped_fraction * b) / (a + b);
            total.mean_kl = (total.mean_kl * a + s.mean_kl * b) / (a + b);
            weight += w;
            total.terms = weight;
        };
        match batch {
            Batch::Steps(mut samples) => {
                for epoch in 0..config.epochs {
                    let mut rng =
                        ChaCha8Rng::seed_from_u64(seed_for(config.seed, round, SHUFFLE_STREAM, epoch as u64));
                    samples.shuffle(&mut rng);
                    for chunk in samples.chunks(config.ppo_batch) {
                        accumulate(self.policy.update(chunk, snapshot, &config.update));
                    }
                }
            }
            Batch::Sequences(mut samples) => {
                for epoch in 0..config.epochs {
                    let mut rng =
                        ChaCha8Rng::seed_from_u64(seed_for(config.seed, round, SHUFFLE_STREAM, epoch as u64));
                    samples.shuffle(&mut rng);
                    for chunk in samples.chunks(config.ppo_batch) {
                        accumulate(self.policy.update_sequences(chunk, snapshot, &config.update));
                    }
                }
            }
        }
        total
    }
}

#[derive(Debug, Default)]
struct AugmentationTally {
    groups: usize,
    inert: usize,
    inference: u64,
    env_steps: u64,
}

fn load_specs(config: &RunConfig) -> Result<Vec<SyntheticTaskSpec>> {
    let suite = match &config.suite {
        Some(path) => SuiteFile::load(path)?,
        None => SuiteFile::desk_default(config.suite_seed),
    };
    suite.build()
}

/// Group-normalized advantage per trajectory, in input order. Trajectories
/// are grouped by task; a task with a single trajectory gets 0.
fn group_advantages(trajectories: &[Trajectory]) -> Result<Vec<f64>> {
    let mut groups: BTreeMap<TaskId, Vec<usize>> = BTreeMap::new();
    for (i, t) in trajectories.iter().enumerate() {
        groups.entry(t.task).or_default().push(i);
    }
    let mut out = vec![0.0; trajectories.len()];
    for (task, members) in groups {
        if members.len() < 2 {
            continue;
        }
        let group = TrajectoryGroup::new(task, members.iter().map(|&i| trajectories[i].clone()).collect())?;
        for (&i, a) in members.iter().zip(tgrpo_advantages(&group)?) {
            out[i] = a;
        }
    }
    Ok(out)
}

fn trajectory_samples(trajectories: &[Trajectory]) -> Result<Vec<SequenceSample>> {
    let advantages = group_advantages(trajectories)?;
    Ok(trajectories
        .iter()
        .zip(advantages)
        .map(|(t, advantage)| SequenceSample {
            steps: t.steps.iter().map(|s| (s.state.clone(), s.action)).collect(),
            advantage,
        })
        .collect())
}

fn broadcast_samples(
    trajectories: &[Trajectory],
    table: &SuccessRateTable,
    context: (usize, usize),
) -> Result<Vec<StepSample>> {
    let advantages = group_advantages(trajectories)?;
    Ok(trajectories
        .iter()
        .zip(advantages)
        .flat_map(|(t, a)| decompose(t, a, context.0, context.1, table.s_hat(t.task)))
        .collect())
}

fn success_samples(
    trajectories: &[Trajectory],
    table: &SuccessRateTable,
    context: (usize, usize),
) -> Result<Vec<StepSample>> {
    let mut out = Vec::new();
    for t in trajectories.iter().filter(|t| t.is_success()) {
        let s_hat = table.s_hat(t.task);
        let advantage = sr_weighted_advantage(t, s_hat)?;
        out.extend(decompose(t, advantage, context.0, context.1, s_hat));
    }
    Ok(out)
}

/// Replaces each eligible sample by its augmentation group, in place.
fn augment_samples(
    base: Vec<StepSample>,
    snapshot: &TabularSoftmaxPolicy,
    config: &RunConfig,
    round: u64,
) -> Result<(Vec<StepSample>, AugmentationTally)> {
    let cap = config.max_aug_groups.unwrap_or(usize::MAX);
    let eligible: Vec<usize> = base
        .iter()
        .enumerate()
        .filter(|(_, s)| s.source_success_rate <= config.s_low)
        .map(|(i, _)| i)
        .take(cap)
        .collect();
    let groups = eligible
        .par_iter()
        .map(|&i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed_for(config.seed, round, AUG_STREAM, i as u64));
            build_group(
                &base[i],
                snapshot,
                config.group_size,
                config.update.temperature_train,
                &ExactMatch,
                &mut rng,
            )
        })
        .collect::<Result<Vec<_>>>()?;

    let mut tally = AugmentationTally::default();
    let mut expanded: BTreeMap<usize, Vec<StepSample>> = BTreeMap::new();
    for (&i, group) in eligible.iter().zip(groups) {
        tally.groups += 1;
        tally.inert += usize::from(group.inert);
        tally.inference += inference_count(&group);
        tally.env_steps += env_interaction_count(&group);
        expanded.insert(i, group.into_samples());
    }
    let mut out = Vec::with_capacity(base.len() + tally.inference as usize);
    for (i, sample) in base.into_iter().enumerate() {
        match expanded.remove(&i) {
            Some(group) => out.extend(group),
            None => out.push(sample),
        }
    }
    Ok((out, tally))
}

/// Final numbers of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub method: Method,
    pub seed: u64,
    pub rounds: u64,
    pub tasks: usize,
    pub final_tasks_above_60: usize,
    pub final_mean_s_hat: f64,
    pub final_eval_mean_success: f64,
    pub final_eval_tasks_above_60: usize,
    /// Sum over rounds of the tracker's tasks-above-0.6 count.
    pub auc_tasks_above_60: u64,
    /// Sum over evaluation passes of the evaluated tasks-above-0.6 count.
    pub auc_eval_tasks_above_60: u64,
    pub total_env_steps: u64,
    pub total_inference_calls: u64,
    pub total_augmentation_inference: u64,
    pub total_augmentation_groups: u64,
    pub total_augmentation_env_steps: u64,
    /// High-success trajectory fraction pooled over windows of 4 rounds.
    pub high_success_series: Vec<f64>,
    pub final_s_hat: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub reports: Vec<RoundReport>,
    pub plans: Vec<AllocationPlan>,
    pub pre_tables: Vec<SuccessRateTable>,
    pub summary: Summary,
}

pub const HIGH_SUCCESS_WINDOW: usize = 4;

/// Runs every round of `config`. When `config.out` is set, logs are written
/// there and flushed after each round.
pub fn run_experiment(config: &RunConfig) -> Result<RunOutcome> {
    let mut trainer = Trainer::new(config.clone())?;
    let rounds = config.resolved_rounds(trainer.tasks.len());
    let mut logs = match &config.out {
        Some(dir) => Some(RunLogs::create(dir, config)?),
        None => None,
    };

    let mut reports = Vec::new();
    let mut plans = Vec::new();
    let mut pre_tables = Vec::new();
    for r in 0..rounds {
        let mut out = trainer.run_round()?;
        if r + 1 == rounds && out.report.eval.is_none() {
            out.report.eval = Some(trainer.evaluate()?);
        }
        if let Some(logs) = logs.as_mut() {
            logs.write_round(&out)?;
        }
        reports.push(out.report);
        plans.push(out.plan);
        pre_tables.push(out.pre_table);
    }

    let summary = summarize(config, &trainer, &reports, &plans, &pre_tables, rounds);
    if let Some(logs) = logs.as_mut() {
        logs.finish(&summary, &reports, trainer.policy())?;
    }
    Ok(RunOutcome {
        reports,
        plans,
        pre_tables,
        summary,
    })
}

fn summarize(
    config: &RunConfig,
    trainer: &Trainer,
    reports: &[RoundReport],
    plans: &[AllocationPlan],
    pre_tables: &[SuccessRateTable],
    rounds: u64,
) -> Summary {
    let last_eval = reports.iter().rev().find_map(|r| r.eval.as_ref());
    let table = trainer.table();
    let final_s_hat: Vec<f64> = table.records().map(|r| r.s_hat).collect();
    Summary {
        method: config.method,
        seed: config.seed,
        rounds,
        tasks: table.len(),
        final_tasks_above_60: if reports.is_empty() {
            0
        } else {
            tasks_above(table, ABOVE)
        },
        final_mean_s_hat: if reports.is_empty() {
            0.0
        } else {
            final_s_hat.iter().sum::<f64>() / final_s_hat.len().max(1) as f64
        },
        final_eval_mean_success: last_eval.map_or(0.0, |e| e.mean_success),
        final_eval_tasks_above_60: last_eval.map_or(0, |e| e.tasks_above_60),
        auc_tasks_above_60: reports.iter().map(|r| r.tasks_above_60 as u64).sum(),
        auc_eval_tasks_above_60: reports
            .iter()
            .filter_map(|r| r.eval.as_ref())
            .map(|e| e.tasks_above_60 as u64)
            .sum(),
        total_env_steps: reports.iter().map(|r| r.env_steps).sum(),
        total_inference_calls: reports.iter().map(|r| r.inference_calls).sum(),
        total_augmentation_inference: reports.iter().map(|r| r.augmentation_inference).sum(),
        total_augmentation_groups: reports.iter().map(|r| r.augmentation_groups as u64).sum(),
        total_augmentation_env_steps: reports.iter().map(|r| r.augmentation_env_steps).sum(),
        high_success_series: high_success_series(plans, pre_tables, HIGH_SUCCESS_WINDOW),
        final_s_hat,
    }
}

struct RunLogs {
    dir: std::path::PathBuf,
    rounds: BufWriter<File>,
    plans: BufWriter<File>,
    trajectories: Option<BufWriter<File>>,
    samples: Option<BufWriter<File>>,
}

impl RunLogs {
    fn create(dir: &Path, config: &RunConfig) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("config.toml"), config.to_toml())?;
        let open =
            |name: &str| -> Result<BufWriter<File>> { Ok(BufWriter::new(File::create(dir.join(name))?)) };
        let (trajectories, samples) = if config.log_trajectories {
            (Some(open("trajectories.jsonl")?), Some(open("samples.jsonl")?))
        } else {
            (None, None)
        };
        Ok(Self {
            dir: dir.to_path_buf(),
            rounds: open("rounds.jsonl")?,
            plans: open("plans.jsonl")?,
            trajectories,
            samples,
        })
    }

    fn write_round(&mut self, out: &RoundOutput) -> Result<()> {
        writeln!(self.rounds, "{}", serde_json::to_string(&out.report)?)?;
        writeln!(self.plans, "{}", serde_json::to_string(&out.plan)?)?;
        if let Some(w) = self.trajectories.as_mut() {
            for t in &out.trajectories {
                writeln!(w, "{}", serde_json::to_string(t)?)?;
            }
            w.flush()?;
        }
        if let Some(w) = self.samples.as_mut() {
            for s in &out.samples {
                writeln!(w, "{}", serde_json::to_string(s)?)?;
            }
            w.flush()?;
        }
        self.rounds.flush()?;
        self.plans.flush()?;
        Ok(())
    }

    fn finish(
        &mut self,
        summary: &Summary,
        reports: &[RoundReport],
        policy: &TabularSoftmaxPolicy,
    ) -> Result<()> {
        std::fs::write(
            self.dir.join("summary.json"),
            serde_json::to_string_pretty(summary)? + "\n",
        )?;
        let mut csv = BufWriter::new(File::create(self.dir.join("summary.csv"))?);
        writeln!(
            csv,
            "round,tasks_above_60,mean_s_hat,high_success_fraction,eval_tasks_above_60,eval_mean_success,env_steps,inference_calls,augmentation_groups,training_samples"
        )?;
        for r in reports {
            let (eval_above, eval_mean) = match &r.eval {
                Some(e) => (e.tasks_above_60.to_string(), e.mean_success.to_string()),
                None => (String::new(), String::new()),
            };
            writeln!(
                csv,
                "{},{},{},{},{},{},{},{},{},{}",
                r.round,
                r.tasks_above_60,
                r.mean_s_hat,
                r.high_success_fraction,
                eval_above,
                eval_mean,
                r.env_steps,
                r.inference_calls,
                r.augmentation_groups,
                r.training_samples
            )?;
        }
        csv.flush()?;
        policy.save(BufWriter::new(File::create(self.dir.join("policy.jsonl"))?))?;
        Ok(())
    }
}
