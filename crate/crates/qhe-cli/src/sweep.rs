//! Randomized end-to-end sweep: every generated scenario must match the
//! direct-evaluation oracle.

use std::process::ExitCode;

use qhe_core::harness::{self, SweepConfig};

use crate::{EXIT_FIDELITY, EXIT_PASS};

#[derive(serde::Serialize)]
struct SweepSummary {
    count: u32,
    seed: u64,
    passed: u32,
    failed: u32,
    min_fidelity: f64,
}

pub fn cmd_sweep(count: u32, seed: u64, tolerance: f64, json: bool) -> ExitCode {
    let cfg = SweepConfig {
        tolerance,
        ..SweepConfig::default()
    };
    let mut passed = 0u32;
    let mut min_fidelity = f64::INFINITY;
    for index in 0..u64::from(count) {
        let scenario = harness::random_scenario(&cfg, seed, index);
        let report = match harness::run(&scenario) {
            Ok(r) => r,
            Err(e) => {
                eprintln!("error: scenario {index}: {e}");
                return ExitCode::from(EXIT_FIDELITY);
            }
        };
        let fidelity = report.fidelity.unwrap_or(0.0);
        min_fidelity = min_fidelity.min(fidelity);
        if report.pass {
            passed += 1;
        } else if !json {
            println!(
                "scenario {index}: FAIL (fidelity {fidelity:.12}, chain {:?})",
                scenario.chain
            );
        }
        if json {
            println!("{}", report.to_json());
        }
    }
    let failed = count - passed;
    let summary = SweepSummary {
        count,
        seed,
        passed,
        failed,
        min_fidelity,
    };
    if json {
        println!("{}", serde_json::to_string(&summary).unwrap());
    } else {
        println!("sweep: {passed}/{count} passed (seed {seed}, min fidelity {min_fidelity:.12})");
    }
    if failed == 0 {
        ExitCode::from(EXIT_PASS)
    } else {
        ExitCode::from(EXIT_FIDELITY)
    }
}
