//! Experiment harness: run configuration, the training round for every
//! method, metrics, and on-disk logs.

mod base;
pub mod config;
pub mod metrics;
pub mod runner;

pub use base::base_policy;
pub use config::{Method, RunConfig};
pub use runner::{run_experiment, EvalReport, RoundOutput, RoundReport, RunOutcome, Summary, Trainer};

/// Derives an independent seed for one random stream of a run, so results
/// do not depend on the order in which parallel work finishes.
pub fn seed_for(seed: u64, round: u64, stream: u64, index: u64) -> u64 {
    let mut x = seed;
    for v in [round, stream, index] {
        x = splitmix(x ^ splitmix(v));
    }
    x
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}
