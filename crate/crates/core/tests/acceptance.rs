//! Acceptance run: every experiment at its default resolution and seed 1,
//! one line per criterion. Thresholds live in the experiments themselves.

use std::process::ExitCode;
use std::time::Instant;

use lts_core::cli::{run, ExperimentConfig};
use lts_core::experiments::ExperimentName;

fn main() -> ExitCode {
    let root = tempfile::tempdir().expect("temp dir");
    let mut failed = 0;
    for (i, name) in ExperimentName::ALL.into_iter().enumerate() {
        let cfg = ExperimentConfig::new(name, root.path().join(name.as_str()));
        let start = Instant::now();
        let line = match run(&cfg) {
            Ok(out) => {
                let bad: Vec<String> = out
                    .checks
                    .iter()
                    .filter(|c| !c.pass)
                    .map(|c| format!("{} = {:.4e} vs {:.4e}", c.name, c.value, c.limit))
                    .collect();
                if bad.is_empty() {
                    format!("PASS {} checks", out.checks.len())
                } else {
                    failed += 1;
                    format!("FAIL {}", bad.join("; "))
                }
            }
            Err(e) => {
                failed += 1;
                format!("FAIL error: {e}")
            }
        };
        println!("c{:<2} {:<22} {line} ({:.1}s)", i + 1, name.as_str(), start.elapsed().as_secs_f64());
    }
    println!("acceptance: {} of {} criteria passed", ExperimentName::ALL.len() - failed, ExperimentName::ALL.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
