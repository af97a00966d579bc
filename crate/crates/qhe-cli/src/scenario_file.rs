//! Scenario file format: a TOML document mirroring the runner's scenario
//! fields, with gate programs in the shared text syntax. Unknown keys are
//! rejected; every referenced qubit must appear in the `qubits` list.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use qhe_core::gates::GateProgram;
use qhe_core::harness::{ComparisonMode, Eavesdropper, Scenario};
use qhe_core::QubitId;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    seed: u64,
    n: usize,
    k: usize,
    chain: Vec<usize>,
    qubits: Vec<String>,
    angles: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    programs: Vec<ProgramEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    decoy_ratio: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    decoy_error_threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    eavesdropper: Option<EavesdropperEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    comparison: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tolerance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sigma2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    masks: Option<Vec<[u8; 2]>>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    force_matrix: bool,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProgramEntry {
    server: usize,
    /// Gate statements, e.g. `["X q0", "CNOT q0 q1"]`.
    gates: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EavesdropperEntry {
    kind: String,
    hop: usize,
    probability: f64,
}

/// Parse a scenario document. TOML errors carry line/column positions.
pub fn parse(text: &str) -> Result<Scenario, String> {
    let file: ScenarioFile = toml::from_str(text).map_err(|e| e.to_string())?;
    let mut programs = BTreeMap::new();
    for entry in &file.programs {
        if programs.contains_key(&entry.server) {
            return Err(format!(
                "duplicate program entry for server {}",
                entry.server
            ));
        }
        let program = GateProgram::parse(&entry.gates.join(" "))
            .map_err(|e| format!("server {}: {e}", entry.server))?;
        programs.insert(entry.server, program);
    }
    let mut scenario = Scenario::new(
        file.seed,
        file.n,
        file.k,
        file.chain,
        file.qubits
            .iter()
            .map(|s| QubitId::from(s.as_str()))
            .collect(),
        file.angles,
        programs,
    );
    if let Some(r) = file.decoy_ratio {
        scenario.decoy_ratio = r;
    }
    if let Some(t) = file.decoy_error_threshold {
        scenario.decoy_error_threshold = t;
    }
    if let Some(e) = file.eavesdropper {
        if e.kind != "intercept_resend" {
            return Err(format!("unknown eavesdropper kind `{}`", e.kind));
        }
        scenario.eavesdropper = Eavesdropper::InterceptResend {
            hop: e.hop,
            probability: e.probability,
        };
    }
    if let Some(c) = file.comparison {
        scenario.comparison = match c.as_str() {
            "global_phase" | "phase" => ComparisonMode::GlobalPhase,
            "exact" => ComparisonMode::Exact,
            other => return Err(format!("unknown comparison mode `{other}`")),
        };
    }
    if let Some(t) = file.tolerance {
        scenario.tolerance = t;
    }
    scenario.sigma2 = file.sigma2;
    scenario.masks = file
        .masks
        .map(|ms| ms.into_iter().map(|[a, b]| (a, b)).collect());
    scenario.force_matrix = file.force_matrix;
    scenario.validate().map_err(|e| e.to_string())?;
    Ok(scenario)
}

/// Serialize a scenario back to the file format.
pub fn to_toml(s: &Scenario) -> String {
    let file = ScenarioFile {
        seed: s.seed,
        n: s.n,
        k: s.k,
        chain: s.chain.clone(),
        qubits: s.qubits.iter().map(ToString::to_string).collect(),
        angles: s.angles.clone(),
        programs: s
            .programs
            .iter()
            .map(|(server, prog)| ProgramEntry {
                server: *server,
                gates: prog.gates.iter().map(ToString::to_string).collect(),
            })
            .collect(),
        decoy_ratio: Some(s.decoy_ratio),
        decoy_error_threshold: Some(s.decoy_error_threshold),
        eavesdropper: match s.eavesdropper {
            Eavesdropper::None => None,
            Eavesdropper::InterceptResend { hop, probability } => Some(EavesdropperEntry {
                kind: "intercept_resend".into(),
                hop,
                probability,
            }),
        },
        comparison: Some(
            match s.comparison {
                ComparisonMode::GlobalPhase => "global_phase",
                ComparisonMode::Exact => "exact",
            }
            .into(),
        ),
        tolerance: Some(s.tolerance),
        sigma2: s.sigma2,
        masks: s
            .masks
            .as_ref()
            .map(|ms| ms.iter().map(|&(a, b)| [a, b]).collect()),
        force_matrix: s.force_matrix,
    };
    toml::to_string_pretty(&file).expect("scenario serializes")
}
