use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use std::fmt::Write as _;
use std::path::PathBuf;
use steprl::envsim::SuiteFile;
use steprl::harness::metrics::{mean, paired_wins, sign_test};
use steprl::harness::{run_experiment, Method, RunConfig, Summary};

#[derive(Parser)]
#[command(
    name = "steprl",
    version,
    about = "Run and compare training methods on the synthetic task suite"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and print its summary as JSON.
    Run {
        /// TOML config; fields not given keep their defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        method: Option<Method>,
        #[arg(long, env = "STEPRL_SEED")]
        seed: Option<u64>,
        #[arg(long)]
        rounds: Option<u64>,
        /// Log directory.
        #[arg(long, env = "STEPRL_OUT")]
        out: Option<PathBuf>,
    },
    /// Run several configs over the same seeds and compare each against the
    /// first with a paired sign test.
    Compare {
        #[arg(long, num_args = 1.., required = true)]
        configs: Vec<PathBuf>,
        /// Seeds 0..N.
        #[arg(long, default_value_t = 5)]
        seeds: u64,
        #[arg(long)]
        rounds: Option<u64>,
        /// Writes compare.csv and per-run logs here.
        #[arg(long, env = "STEPRL_OUT")]
        out: Option<PathBuf>,
    },
    /// Write the built-in desk suite to a file.
    Suite {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn load(path: Option<&PathBuf>) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::load(p).with_context(|| format!("loading config {}", p.display())),
        None => Ok(RunConfig::default()),
    }
}

fn run(config: &RunConfig) -> Result<Summary> {
    config.validate()?;
    Ok(run_experiment(config)?.summary)
}

fn compare(configs: &[PathBuf], seeds: u64, rounds: Option<u64>, out: Option<PathBuf>) -> Result<String> {
    if seeds == 0 {
        bail!("--seeds must be positive");
    }
    let mut rows: Vec<(String, Vec<Summary>)> = Vec::new();
    for (i, path) in configs.iter().enumerate() {
        let base = load(Some(path))?;
        let label = format!(
            "{}:{}",
            i,
            path.file_stem()
                .map_or_else(|| "config".into(), |s| s.to_string_lossy())
        );
        let mut summaries = Vec::new();
        for seed in 0..seeds {
            let mut config = RunConfig { seed, ..base.clone() };
            if rounds.is_some() {
                config.rounds = rounds;
            }
            config.out = out
                .as_ref()
                .map(|d| d.join(label.replace(':', "_")).join(format!("seed{seed}")));
            summaries.push(run(&config)?);
        }
        rows.push((label, summaries));
    }

    let metric = |s: &Summary| s.final_tasks_above_60 as f64;
    let baseline: Vec<f64> = rows[0].1.iter().map(metric).collect();
    let mut csv = String::from(
        "config,method,seeds,final_tasks_above_60,final_eval_tasks_above_60,final_eval_mean_success,total_env_steps,wins,losses,sign_test_p\n",
    );
    for (label, summaries) in &rows {
        let values: Vec<f64> = summaries.iter().map(metric).collect();
        let (wins, losses) = paired_wins(&values, &baseline);
        let col = |f: &dyn Fn(&Summary) -> f64| mean(&summaries.iter().map(f).collect::<Vec<_>>());
        writeln!(
            csv,
            "{label},{},{seeds},{:.3},{:.3},{:.4},{:.0},{wins},{losses},{:.4}",
            summaries[0].method,
            mean(&values),
            col(&|s| s.final_eval_tasks_above_60 as f64),
            col(&|s| s.final_eval_mean_success),
            col(&|s| s.total_env_steps as f64),
            sign_test(wins, losses)
        )?;
    }
    if let Some(dir) = out {
        std::fs::create_dir_all(&dir)?;
        std::fs::write(dir.join("compare.csv"), &csv)?;
    }
    Ok(csv)
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run {
            config,
            method,
            seed,
            rounds,
            out,
        } => {
            let mut config = load(config.as_ref())?;
            if let Some(m) = method {
                config.method = m;
            }
            if let Some(s) = seed {
                config.seed = s;
            }
            if rounds.is_some() {
                config.rounds = rounds;
            }
            if out.is_some() {
                config.out = out;
            }
            let summary = run(&config)?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
        }
        Command::Compare {
            configs,
            seeds,
            rounds,
            out,
        } => print!("{}", compare(&configs, seeds, rounds, out)?),
        Command::Suite { out, seed } => SuiteFile::desk_default(seed).save(&out)?,
    }
    Ok(())
}
