//! Runs every method over a few seeds on the desk suite and prints the
//! headline numbers side by side.
//!
//! cargo run --release -p steprl --example sweep -- [seeds] [rounds] [learning_rate]

use steprl::harness::metrics::mean;
use steprl::harness::{run_experiment, Method, RunConfig};

fn main() -> steprl::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let seeds: u64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(5);
    let rounds: Option<u64> = args.get(2).and_then(|s| s.parse().ok());
    let lr: Option<f64> = args.get(3).and_then(|s| s.parse().ok());
    println!(
        "{:<20} {:>8} {:>8} {:>8} {:>8} {:>8} {:>10}",
        "method", "above60", "eval>60", "evalmean", "s_hat", "early_hs", "env_steps"
    );
    for method in Method::ALL {
        let mut rows: Vec<[f64; 6]> = Vec::new();
        for seed in 0..seeds {
            let mut config = RunConfig {
                method,
                seed,
                rounds,
                ..RunConfig::default()
            };
            if let Some(lr) = lr {
                config.update.learning_rate = lr;
            }
            let outcome = run_experiment(&config)?;
            let s = &outcome.summary;
            let quarter = (outcome.reports.len() / 4).max(1);
            let early: Vec<f64> = outcome.reports[..quarter]
                .iter()
                .map(|r| r.high_success_fraction)
                .collect();
            rows.push([
                s.final_tasks_above_60 as f64,
                s.final_eval_tasks_above_60 as f64,
                s.final_eval_mean_success,
                s.final_mean_s_hat,
                mean(&early),
                s.total_env_steps as f64,
            ]);
        }
        let col = |i: usize| mean(&rows.iter().map(|r| r[i]).collect::<Vec<_>>());
        println!(
            "{:<20} {:>8.2} {:>8.2} {:>8.3} {:>8.3} {:>8.3} {:>10.0}",
            method.name(),
            col(0),
            col(1),
            col(2),
            col(3),
            col(4),
            col(5)
        );
    }
    Ok(())
}
