//! `qhe`: run threshold-QHE scenarios, randomized sweeps, and the channel
//! security statistics from the command line.

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

use qhe_core::harness::{self, ComparisonMode, RunOutcome, RunReport, Scenario};
use qhe_core::linalg::{u_rot, Angle, ComplexMatrix};

use qhe_cli::{scenario_file, sweep, EXIT_COMPROMISED, EXIT_FIDELITY, EXIT_PARSE, EXIT_PASS};

#[derive(Parser)]
#[command(
    name = "qhe",
    version,
    about = "Threshold quantum homomorphic encryption simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario file and report the result.
    Run(RunArgs),
    /// Generate and run random scenarios; all must match the oracle.
    Sweep(SweepArgs),
    /// Channel and key security statistics.
    Security(SecurityArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Scenario file (TOML).
    path: PathBuf,
    /// Override the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the comparison tolerance.
    #[arg(long)]
    tolerance: Option<f64>,
    /// Override the comparison mode.
    #[arg(long, value_parser = parse_comparison)]
    comparison: Option<ComparisonMode>,
    /// Emit the machine-readable report instead of text.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct SweepArgs {
    /// Number of random scenarios.
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u32).range(1..))]
    count: u32,
    /// Seed for scenario generation.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Tolerance for the oracle comparison.
    #[arg(long, default_value_t = 1e-8)]
    tolerance: f64,
    /// Emit one JSON line per scenario plus a JSON summary.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct SecurityArgs {
    /// Monte-Carlo samples for the encryption density average.
    #[arg(long, default_value_t = 100_000)]
    samples: usize,
    /// Trials for the eavesdropper detection estimate.
    #[arg(long, default_value_t = 2_000)]
    trials: usize,
    /// Decoys per hop in the detection experiment.
    #[arg(long, default_value_t = 20)]
    decoys: usize,
    /// Seed for all statistics.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    json: bool,
}

fn parse_comparison(s: &str) -> Result<ComparisonMode, String> {
    match s {
        "phase" | "global_phase" => Ok(ComparisonMode::GlobalPhase),
        "exact" => Ok(ComparisonMode::Exact),
        other => Err(format!(
            "unknown comparison mode `{other}` (use phase|exact)"
        )),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Sweep(args) => sweep::cmd_sweep(args.count, args.seed, args.tolerance, args.json),
        Command::Security(args) => cmd_security(args),
    }
}

fn cmd_run(args: RunArgs) -> ExitCode {
    let text = match std::fs::read_to_string(&args.path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", args.path.display());
            return ExitCode::from(EXIT_PARSE);
        }
    };
    let mut scenario = match scenario_file::parse(&text) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {}: {e}", args.path.display());
            return ExitCode::from(EXIT_PARSE);
        }
    };
    if let Some(seed) = args.seed {
        scenario.seed = seed;
    }
    if let Some(t) = args.tolerance {
        scenario.tolerance = t;
    }
    if let Some(c) = args.comparison {
        scenario.comparison = c;
    }
    let report = match harness::run(&scenario) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {}: {e}", args.path.display());
            return ExitCode::from(EXIT_PARSE);
        }
    };
    if args.json {
        println!("{}", report.to_json());
    } else {
        print_report(&scenario, &report);
    }
    match report.outcome {
        RunOutcome::Pass => ExitCode::from(EXIT_PASS),
        RunOutcome::FidelityFailure => ExitCode::from(EXIT_FIDELITY),
        RunOutcome::ChannelCompromised { .. } => ExitCode::from(EXIT_COMPROMISED),
    }
}

fn print_report(s: &Scenario, r: &RunReport) {
    println!(
        "scenario: seed={} (k,n)=({},{}) chain={:?} qubits={}",
        s.seed,
        s.k,
        s.n,
        s.chain,
        s.qubits.len()
    );
    for hop in &r.hops {
        println!(
            "hop {} -> Bob{}: {} decoys, error rate {:.4}, retries {}, {}",
            hop.hop,
            hop.receiver,
            hop.decoy_count,
            hop.error_rate,
            hop.retries,
            if hop.passed { "passed" } else { "aborted" }
        );
    }
    match &r.outcome {
        RunOutcome::ChannelCompromised { hop, error_rate } => {
            println!("outcome: CHANNEL COMPROMISED at hop {hop} (error rate {error_rate:.4})");
            return;
        }
        RunOutcome::FidelityFailure => println!("outcome: FIDELITY FAILURE"),
        RunOutcome::Pass => println!("outcome: PASS"),
    }
    if let Some(f) = r.fidelity {
        println!(
            "fidelity vs oracle: {f:.12} ({:?} comparison)",
            r.comparison
        );
    }
    for item in &r.q_prime {
        let names: Vec<String> = item.qubits.iter().map(ToString::to_string).collect();
        println!("Q' on [{}]:", names.join(", "));
        print!("{}", format_matrix(&item.matrix));
    }
    if let Some(state) = &r.final_state {
        let order: Vec<&str> = r.qubit_order.iter().map(|q| q.as_str()).collect();
        println!("final state (qubit order {order:?}):");
        for (re, im) in state {
            println!("  {re:+.9}{im:+.9}i");
        }
    }
    println!("elapsed: {:?}", r.elapsed);
}

fn format_matrix(m: &ComplexMatrix) -> String {
    let mut out = String::new();
    for i in 0..m.rows() {
        out.push_str("  [");
        for j in 0..m.cols() {
            let v = m.get(i, j);
            if j > 0 {
                out.push_str(", ");
            }
            out.push_str(&format!("{:+.6}{:+.6}i", v.re, v.im));
        }
        out.push_str("]\n");
    }
    out
}

#[derive(serde::Serialize)]
struct SecuritySummary {
    samples: usize,
    rho_enc_deviation: f64,
    rho_q_deviation: f64,
    trials: usize,
    decoys: usize,
    detection_rate: f64,
    expected_detection: f64,
}

fn cmd_security(args: SecurityArgs) -> ExitCode {
    use qhe_core::harness::{eavesdrop_detection, security_rho_enc, security_rho_q, Eavesdropper};
    use rand::SeedableRng;

    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(args.seed);
    let rho_enc = match security_rho_enc(args.samples, &mut rng) {
        Ok(m) => m,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_PARSE);
        }
    };
    let half = half_identity(2);
    let enc_dev = rho_enc.max_abs_diff(&half);

    let rho_q = security_rho_q(|g: Angle| u_rot(g.rad()), Angle(0.77)).expect("unitary rhs");
    let q_dev = rho_q.max_abs_diff(&half);

    let mut scenario = Scenario::new(
        args.seed,
        1,
        1,
        vec![1],
        vec![qhe_core::QubitId::from("q0")],
        vec![0.4],
        Default::default(),
    );
    scenario.decoy_ratio = args.decoys as f64;
    scenario.eavesdropper = Eavesdropper::InterceptResend {
        hop: 1,
        probability: 1.0,
    };
    let detection = match eavesdrop_detection(&scenario, args.trials) {
        Ok(d) => d,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_PARSE);
        }
    };
    let expected = 1.0 - 0.75f64.powi(args.decoys as i32);

    let summary = SecuritySummary {
        samples: args.samples,
        rho_enc_deviation: enc_dev,
        rho_q_deviation: q_dev,
        trials: args.trials,
        decoys: args.decoys,
        detection_rate: detection,
        expected_detection: expected,
    };
    if args.json {
        println!("{}", serde_json::to_string(&summary).unwrap());
    } else {
        println!(
            "rho_enc: max deviation from I/2 over {} samples: {:.6}",
            summary.samples, summary.rho_enc_deviation
        );
        if summary.rho_enc_deviation >= 0.05 {
            println!("warning: sampling too coarse for a tight estimate");
        }
        println!(
            "rho_q: max deviation from I/2 (exact 4-term average): {:.2e}",
            summary.rho_q_deviation
        );
        println!(
            "eavesdropper detection: {:.4} over {} trials ({} decoys/hop, expected {:.4})",
            summary.detection_rate, summary.trials, summary.decoys, summary.expected_detection
        );
    }
    ExitCode::from(EXIT_PASS)
}

fn half_identity(dim: usize) -> ComplexMatrix {
    let mut m = ComplexMatrix::zeros(dim, dim);
    for i in 0..dim {
        m.set(i, i, num_complex::Complex64::new(0.5, 0.0));
    }
    m
}
