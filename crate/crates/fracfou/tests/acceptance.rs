//! Runs every acceptance criterion and prints one line per criterion.
//!
//! `FRACFOU_SUITE=quick` selects the reduced replica counts; `FRACFOU_SEED`
//! overrides the master seed.

use std::process::ExitCode;
use std::time::Instant;

use fracfou::acceptance::{run_suite, Suite};
use fracfou::rng::Streams;

fn main() -> ExitCode {
    let suite = match std::env::var("FRACFOU_SUITE").as_deref() {
        Ok("quick") => Suite::Quick,
        _ => Suite::Full,
    };
    let seed = std::env::var("FRACFOU_SEED").ok().and_then(|s| s.parse().ok()).unwrap_or(20240101);
    let start = Instant::now();
    let reports = run_suite(suite, Streams::new(seed), |r| {
        println!("{} [{:.0?}]", r.line(), start.elapsed());
    });
    let failed = reports.iter().filter(|r| !r.passed).count();
    println!("acceptance: {} passed, {failed} failed", reports.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
