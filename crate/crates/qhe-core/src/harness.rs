//! Scenario runner: wires the parties over an in-process transport,
//! verifies every run against the direct-evaluation oracle, and hosts the
//! channel-security statistics.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap, VecDeque};
use std::sync::mpsc;
use std::time::{Duration, Instant};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::gates::{Gate, GateProgram};
use crate::keygen::{self, KeyMaterial};
use crate::linalg::{blinding_prefix, Angle, ComplexMatrix};
use crate::party::{AliceParty, DecoyPolicy, Envelope, EvaluatorParty, HopCheck, Message, PartyId};
use crate::protocol::{FormPolicy, QPrimeItem};
use crate::state::{self, DecoyBasis, PlaintextSpec, QubitId, Statevector};

pub use crate::party::ChannelFailure;

/// How final states are compared against the oracle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComparisonMode {
    #[default]
    GlobalPhase,
    Exact,
}

/// Channel adversary model.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Eavesdropper {
    #[default]
    None,
    /// Measure-and-resend each transmitted qubit of one hop with the given
    /// probability, in a uniformly random basis.
    InterceptResend { hop: usize, probability: f64 },
}

/// Full description of one protocol run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Scenario {
    pub seed: u64,
    pub n: usize,
    pub k: usize,
    /// The chosen evaluation order (a k-subset of 1..=n).
    pub chain: Vec<usize>,
    pub qubits: Vec<QubitId>,
    pub angles: Vec<f64>,
    /// Per-server gate programs; servers without an entry apply no gates.
    pub programs: BTreeMap<usize, GateProgram>,
    pub decoy_ratio: f64,
    pub decoy_error_threshold: f64,
    pub eavesdropper: Eavesdropper,
    pub comparison: ComparisonMode,
    pub tolerance: f64,
    /// Pin the private key (golden scenarios); drawn from the seed otherwise.
    pub sigma2: Option<f64>,
    /// Pin the blinding bits per qubit (golden scenarios).
    pub masks: Option<Vec<(u8, u8)>>,
    /// Escalate every decryption component to matrix form (reference runs).
    pub force_matrix: bool,
}

impl Scenario {
    /// A scenario with library defaults for the policy knobs.
    pub fn new(
        seed: u64,
        n: usize,
        k: usize,
        chain: Vec<usize>,
        qubits: Vec<QubitId>,
        angles: Vec<f64>,
        programs: BTreeMap<usize, GateProgram>,
    ) -> Self {
        Self {
            seed,
            n,
            k,
            chain,
            qubits,
            angles,
            programs,
            decoy_ratio: 0.2,
            decoy_error_threshold: 0.0,
            eavesdropper: Eavesdropper::None,
            comparison: ComparisonMode::GlobalPhase,
            tolerance: crate::linalg::DEFAULT_TOL,
            sigma2: None,
            masks: None,
            force_matrix: false,
        }
    }

    pub fn plaintext(&self) -> Result<PlaintextSpec> {
        PlaintextSpec::new(self.qubits.clone(), self.angles.clone())
    }

    /// Programs in chain order, one per hop (empty when unset).
    pub fn chain_programs(&self) -> Vec<GateProgram> {
        self.chain
            .iter()
            .map(|s| self.programs.get(s).cloned().unwrap_or_default())
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.k > self.n {
            return Err(Error::invalid(format!(
                "require 0 < k <= n, got k={} n={}",
                self.k, self.n
            )));
        }
        if self.chain.len() != self.k {
            return Err(Error::invalid("chain length must equal k"));
        }
        for (i, s) in self.chain.iter().enumerate() {
            if *s == 0 || *s > self.n {
                return Err(Error::invalid(format!(
                    "server {s} out of range 1..={}",
                    self.n
                )));
            }
            if self.chain[..i].contains(s) {
                return Err(Error::invalid(format!(
                    "server {s} appears twice in the chain"
                )));
            }
        }
        self.plaintext()?;
        if self.qubits.len() > MAX_REGISTER_QUBITS {
            return Err(Error::invalid(format!(
                "register of {} qubits exceeds the dense-simulation cap {MAX_REGISTER_QUBITS}",
                self.qubits.len()
            )));
        }
        for (server, prog) in &self.programs {
            if !self.chain.contains(server) {
                return Err(Error::invalid(format!(
                    "program given for server {server} outside the chain"
                )));
            }
            for gate in &prog.gates {
                for q in gate.operands() {
                    if !self.qubits.contains(q) {
                        return Err(Error::invalid(format!(
                            "program for server {server} references undeclared qubit {q}"
                        )));
                    }
                }
            }
        }
        if !(self.decoy_ratio.is_finite() && self.decoy_ratio >= 0.0) {
            return Err(Error::invalid(
                "decoy_ratio must be a finite non-negative number",
            ));
        }
        if !(0.0..=1.0).contains(&self.decoy_error_threshold) {
            return Err(Error::invalid("decoy_error_threshold must lie in [0, 1]"));
        }
        if !(self.tolerance.is_finite() && self.tolerance > 0.0) {
            return Err(Error::invalid("tolerance must be positive"));
        }
        if let Some(s2) = self.sigma2 {
            if !s2.is_finite() {
                return Err(Error::invalid("pinned sigma2 must be finite"));
            }
        }
        if let Some(masks) = &self.masks {
            if masks.len() != self.qubits.len() {
                return Err(Error::invalid("one mask pair required per qubit"));
            }
            if masks.iter().any(|&(a, b)| a > 1 || b > 1) {
                return Err(Error::invalid("mask entries must be bits"));
            }
        }
        if let Eavesdropper::InterceptResend { hop, probability } = self.eavesdropper {
            if hop == 0 || hop > self.k {
                return Err(Error::invalid(format!(
                    "eavesdropper hop {hop} out of range 1..={}",
                    self.k
                )));
            }
            if !(0.0..=1.0).contains(&probability) {
                return Err(Error::invalid(
                    "interception probability must lie in [0, 1]",
                ));
            }
        }
        Ok(())
    }
}

/// Dense statevectors and block matrices stay tiny; this cap keeps the
/// largest possible expansion at 2^8 amplitudes.
pub const MAX_REGISTER_QUBITS: usize = 8;

/// Outcome of one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum RunOutcome {
    Pass,
    FidelityFailure,
    ChannelCompromised { hop: usize, error_rate: f64 },
}

/// Per-hop security-check summary (final attempt).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HopReport {
    pub hop: usize,
    pub receiver: usize,
    pub decoy_count: usize,
    pub error_rate: f64,
    pub retries: usize,
    pub passed: bool,
}

/// Machine-readable result of a run. Serialization omits timing so that
/// equal seeds give byte-identical reports.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub pass: bool,
    pub outcome: RunOutcome,
    pub comparison: ComparisonMode,
    pub tolerance: f64,
    pub fidelity: Option<f64>,
    pub hops: Vec<HopReport>,
    pub q_prime: Vec<QPrimeItem>,
    pub qubit_order: Vec<QubitId>,
    pub final_state: Option<Vec<(f64, f64)>>,
    pub matrix_escalated: bool,
    /// Echo of the generated keys, for reproducibility. Report-only: the
    /// simulated channel never carries this.
    pub key_material: KeyMaterial,
    #[serde(skip)]
    pub elapsed: Duration,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

/// Transport schedule for the party pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Schedule {
    #[default]
    Sequential,
    Threaded,
}

// RNG stream ids per role; one scenario seed feeds every party.
const STREAM_ALICE: u64 = 1;
const STREAM_BOB_BASE: u64 = 100;
const STREAM_EVE: u64 = 7_000;

fn stream_rng(seed: u64, stream: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Measure-and-resend decorator applied to one hop's quantum payload.
struct EveTap {
    hop: usize,
    probability: f64,
    rng: ChaCha12Rng,
}

impl EveTap {
    fn intercept(&mut self, env: Envelope) -> Result<Envelope> {
        let Message::QubitSequence { hop, state } = env.decode()? else {
            return Ok(env);
        };
        if hop != self.hop {
            return Ok(env);
        }
        let mut tampered = state;
        for q in tampered.qubit_ids().to_vec() {
            if self.rng.gen_bool(self.probability) {
                let basis = if self.rng.gen_bool(0.5) {
                    DecoyBasis::Computational
                } else {
                    DecoyBasis::Hadamard
                };
                let (next, _) = tampered.measure_in_basis(&q, basis, &mut self.rng)?;
                tampered = next;
            }
        }
        Envelope::pack(
            env.from,
            env.to,
            &Message::QubitSequence {
                hop,
                state: tampered,
            },
        )
    }
}

enum PartyMachine {
    Alice(AliceParty),
    Evaluator(EvaluatorParty),
}

impl PartyMachine {
    fn handle(&mut self, msg: Message) -> Result<Vec<Envelope>> {
        match self {
            PartyMachine::Alice(a) => a.handle(msg),
            PartyMachine::Evaluator(e) => e.handle(msg),
        }
    }

    fn is_terminal(&self) -> bool {
        match self {
            PartyMachine::Alice(a) => a.is_terminal(),
            PartyMachine::Evaluator(e) => e.is_terminal(),
        }
    }

    /// True when this party's termination ends the whole run (the client
    /// finishing, or any party exhausting its channel retries).
    fn ends_run(&self) -> bool {
        match self {
            PartyMachine::Alice(_) => true,
            PartyMachine::Evaluator(e) => e.failure.is_some(),
        }
    }
}

struct PartyRunner {
    machine: PartyMachine,
    tap: Option<EveTap>,
}

impl PartyRunner {
    fn filter(&mut self, outs: Vec<Envelope>) -> Result<Vec<Envelope>> {
        match &mut self.tap {
            None => Ok(outs),
            Some(tap) => outs.into_iter().map(|e| tap.intercept(e)).collect(),
        }
    }
}

fn build_parties(s: &Scenario) -> Result<HashMap<PartyId, PartyRunner>> {
    let spec = s.plaintext()?;
    let mut alice_rng = stream_rng(s.seed, STREAM_ALICE);
    let mut km: KeyMaterial = keygen::generate(s.n, s.k, &mut alice_rng)?;
    if let Some(s2) = s.sigma2 {
        km.sigma2 = Angle(s2);
    }
    let policy = DecoyPolicy {
        ratio: s.decoy_ratio,
        error_threshold: s.decoy_error_threshold,
        max_retries: 3,
    };
    let form_policy = if s.force_matrix {
        FormPolicy::ForceMatrix
    } else {
        FormPolicy::Auto
    };

    let mut parties = HashMap::new();
    parties.insert(
        PartyId::Alice,
        PartyRunner {
            machine: PartyMachine::Alice(AliceParty::new(
                spec,
                km.clone(),
                s.chain.clone(),
                policy,
                s.masks.clone(),
                alice_rng,
            )),
            tap: None,
        },
    );
    for (idx, &server) in s.chain.iter().enumerate() {
        let share = keygen::share_for(&km, server)?;
        let program = s.programs.get(&server).cloned().unwrap_or_default();
        parties.insert(
            PartyId::Bob(server),
            PartyRunner {
                machine: PartyMachine::Evaluator(EvaluatorParty::new(
                    server,
                    idx + 1,
                    s.chain.clone(),
                    share,
                    program,
                    policy,
                    form_policy,
                    stream_rng(s.seed, STREAM_BOB_BASE + server as u64),
                )),
                tap: None,
            },
        );
    }
    if let Eavesdropper::InterceptResend { hop, probability } = s.eavesdropper {
        let sender = if hop == 1 {
            PartyId::Alice
        } else {
            PartyId::Bob(s.chain[hop - 2])
        };
        parties.get_mut(&sender).expect("sender exists").tap = Some(EveTap {
            hop,
            probability,
            rng: stream_rng(s.seed, STREAM_EVE + hop as u64),
        });
    }
    Ok(parties)
}

fn start_alice(parties: &mut HashMap<PartyId, PartyRunner>) -> Result<Vec<Envelope>> {
    let runner = parties.get_mut(&PartyId::Alice).expect("client exists");
    let PartyMachine::Alice(alice) = &mut runner.machine else {
        unreachable!()
    };
    let outs = alice.start()?;
    runner.filter(outs)
}

fn drive_sequential(
    mut parties: HashMap<PartyId, PartyRunner>,
) -> Result<HashMap<PartyId, PartyRunner>> {
    let mut queue: VecDeque<Envelope> = start_alice(&mut parties)?.into();
    while let Some(env) = queue.pop_front() {
        let runner = parties
            .get_mut(&env.to)
            .ok_or_else(|| Error::ProtocolViolation(format!("no such party {}", env.to)))?;
        let msg = env.decode()?;
        let outs = runner.machine.handle(msg)?;
        let outs = runner.filter(outs)?;
        queue.extend(outs);
    }
    Ok(parties)
}

enum Packet {
    Deliver(Envelope),
    Shutdown,
}

fn drive_threaded(
    mut parties: HashMap<PartyId, PartyRunner>,
) -> Result<HashMap<PartyId, PartyRunner>> {
    let ids: Vec<PartyId> = parties.keys().copied().collect();
    let mut txs: HashMap<PartyId, mpsc::Sender<Packet>> = HashMap::new();
    let mut rxs: HashMap<PartyId, mpsc::Receiver<Packet>> = HashMap::new();
    for &id in &ids {
        let (tx, rx) = mpsc::channel();
        txs.insert(id, tx);
        rxs.insert(id, rx);
    }

    let initial = start_alice(&mut parties)?;
    for env in &initial {
        txs[&env.to]
            .send(Packet::Deliver(env.clone()))
            .map_err(|_| Error::ProtocolViolation("initial send failed".into()))?;
    }

    let results: Vec<(PartyId, Result<PartyRunner>)> = std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for &id in txs.keys() {
            let mut runner = parties.remove(&id).expect("runner exists");
            let rx = rxs.remove(&id).expect("receiver exists");
            let peer_txs = txs.clone();
            handles.push((
                id,
                scope.spawn(move || -> Result<PartyRunner> {
                    let shutdown_peers = |peer_txs: &HashMap<PartyId, mpsc::Sender<Packet>>| {
                        for tx in peer_txs.values() {
                            let _ = tx.send(Packet::Shutdown);
                        }
                    };
                    while let Ok(packet) = rx.recv() {
                        let env = match packet {
                            Packet::Shutdown => break,
                            Packet::Deliver(env) => env,
                        };
                        let outs = env
                            .decode()
                            .and_then(|msg| runner.machine.handle(msg))
                            .and_then(|outs| runner.filter(outs));
                        let outs = match outs {
                            Ok(outs) => outs,
                            Err(e) => {
                                // Unblock the other parties before bailing.
                                shutdown_peers(&peer_txs);
                                return Err(e);
                            }
                        };
                        for out in outs {
                            // A finished peer may already have dropped its
                            // inbox; delivery failures are then moot.
                            let _ = peer_txs[&out.to].send(Packet::Deliver(out));
                        }
                        if runner.machine.is_terminal() {
                            if runner.machine.ends_run() {
                                shutdown_peers(&peer_txs);
                            }
                            break;
                        }
                    }
                    Ok(runner)
                }),
            ));
        }
        drop(txs);
        handles
            .into_iter()
            .map(|(id, h)| (id, h.join().expect("party thread panicked")))
            .collect()
    });

    let mut out = HashMap::new();
    for (id, result) in results {
        out.insert(id, result?);
    }
    Ok(out)
}

/// Direct application of all hop programs to the plaintext, no encryption.
pub fn oracle(spec: &PlaintextSpec, programs: &[GateProgram]) -> Result<Statevector> {
    let mut sv = Statevector::prepare(spec)?;
    for prog in programs {
        for gate in &prog.gates {
            sv = match gate {
                Gate::Single { kind, qubit } => {
                    sv.apply_single(qubit, &crate::gates::gate_matrix(*kind))?
                }
                Gate::Cnot { control, target } => sv.apply_cnot(control, target)?,
            };
        }
    }
    Ok(sv)
}

/// Run a scenario on the default (sequential) schedule.
pub fn run(s: &Scenario) -> Result<RunReport> {
    run_with_schedule(s, Schedule::Sequential)
}

pub fn run_with_schedule(s: &Scenario, schedule: Schedule) -> Result<RunReport> {
    s.validate()?;
    let started = Instant::now();
    let parties = build_parties(s)?;
    let parties = match schedule {
        Schedule::Sequential => drive_sequential(parties)?,
        Schedule::Threaded => drive_threaded(parties)?,
    };
    assemble_report(s, parties, started.elapsed())
}

fn assemble_report(
    s: &Scenario,
    mut parties: HashMap<PartyId, PartyRunner>,
    elapsed: Duration,
) -> Result<RunReport> {
    let PartyMachine::Alice(alice) = parties
        .remove(&PartyId::Alice)
        .expect("client exists")
        .machine
    else {
        unreachable!()
    };

    let mut checks: Vec<HopCheck> = alice.checks.clone();
    let mut failure = alice.failure.clone();
    for runner in parties.into_values() {
        if let PartyMachine::Evaluator(e) = runner.machine {
            checks.extend(e.checks.iter().cloned());
            if failure.is_none() {
                failure = e.failure.clone();
            }
        }
    }
    checks.sort_by_key(|c| c.hop);
    let hops: Vec<HopReport> = checks
        .iter()
        .map(|c| HopReport {
            hop: c.hop,
            receiver: c.receiver,
            decoy_count: c.decoy_count,
            error_rate: c.last_error_rate(),
            retries: c.retries(),
            passed: c.passed,
        })
        .collect();

    if let Some(fail) = failure {
        return Ok(RunReport {
            pass: false,
            outcome: RunOutcome::ChannelCompromised {
                hop: fail.hop,
                error_rate: fail.error_rate,
            },
            comparison: s.comparison,
            tolerance: s.tolerance,
            fidelity: None,
            hops,
            q_prime: Vec::new(),
            qubit_order: s.qubits.clone(),
            final_state: None,
            matrix_escalated: false,
            key_material: alice.key_material().clone(),
            elapsed,
        });
    }

    let final_state = alice
        .final_state
        .as_ref()
        .ok_or_else(|| Error::ProtocolViolation("run ended without a final state".into()))?;
    let spec = s.plaintext()?;
    let oracle_state = oracle(&spec, &s.chain_programs())?;
    let fidelity = state::fidelity(final_state, &oracle_state)?;
    let matched = match s.comparison {
        ComparisonMode::GlobalPhase => {
            state::equal_up_to_global_phase(final_state, &oracle_state, s.tolerance)?
        }
        ComparisonMode::Exact => state::equal_exact(final_state, &oracle_state, s.tolerance)?,
    };
    let dense = final_state.to_dense(&s.qubits)?;

    Ok(RunReport {
        pass: matched,
        outcome: if matched {
            RunOutcome::Pass
        } else {
            RunOutcome::FidelityFailure
        },
        comparison: s.comparison,
        tolerance: s.tolerance,
        fidelity: Some(fidelity),
        hops,
        q_prime: alice.q_prime.clone(),
        qubit_order: s.qubits.clone(),
        final_state: Some(dense.iter().map(|c| (c.re, c.im)).collect()),
        matrix_escalated: alice
            .final_tuple
            .as_ref()
            .map(crate::protocol::DecTuple::any_matrix_form)
            .unwrap_or(false),
        key_material: alice.key_material().clone(),
        elapsed,
    })
}

/// Average density matrix over sampled encryption angles for one random
/// plaintext. Converges to I/2 at the Monte-Carlo rate.
pub fn security_rho_enc(samples: usize, rng: &mut impl Rng) -> Result<ComplexMatrix> {
    if samples == 0 {
        return Err(Error::invalid("at least one sample required"));
    }
    let alpha = rng.gen_range(0.0..std::f64::consts::TAU);
    let sigmas: Vec<f64> = (0..samples)
        .map(|_| rng.gen_range(-std::f64::consts::TAU..std::f64::consts::TAU))
        .collect();
    Ok(rho_enc_average(alpha, &sigmas))
}

/// Average of `U(sigma) rho U(sigma)^dag` over the given encryption angles.
pub fn rho_enc_average(alpha: f64, sigmas: &[f64]) -> ComplexMatrix {
    let mut acc = ComplexMatrix::zeros(2, 2);
    for &sigma in sigmas {
        let t = alpha + sigma;
        let (s, c) = t.sin_cos();
        acc.set(0, 0, acc.get(0, 0) + Complex64::new(c * c, 0.0));
        acc.set(0, 1, acc.get(0, 1) + Complex64::new(c * s, 0.0));
        acc.set(1, 0, acc.get(1, 0) + Complex64::new(s * c, 0.0));
        acc.set(1, 1, acc.get(1, 1) + Complex64::new(s * s, 0.0));
    }
    let scale = Complex64::new(1.0 / sigmas.len() as f64, 0.0);
    let mut out = ComplexMatrix::zeros(2, 2);
    for i in 0..2 {
        for j in 0..2 {
            out.set(i, j, acc.get(i, j) * scale);
        }
    }
    out
}

/// Exact finite average of the blinded decryption blocks: for every mask
/// assignment, `Q = prefix^dag * rhs(sigma2)` contributes `Q Q^dag / 2^j`.
/// Unitary rhs gives the maximally mixed `I / 2^j`.
pub fn security_rho_q(
    rhs_factory: impl Fn(Angle) -> Result<ComplexMatrix>,
    sigma2: Angle,
) -> Result<ComplexMatrix> {
    let rhs = rhs_factory(sigma2)?;
    let dim = rhs.rows();
    if dim == 0 || !dim.is_power_of_two() || rhs.cols() != dim {
        return Err(Error::invalid("rhs must be square with power-of-two size"));
    }
    let j = dim.trailing_zeros() as usize;
    let mut acc = ComplexMatrix::zeros(dim, dim);
    let mask_count = 1usize << (2 * j);
    for bits in 0..mask_count {
        let mut prefix = ComplexMatrix::identity(1);
        for qubit in 0..j {
            let a = (bits >> (2 * qubit)) as u8 & 1;
            let b = (bits >> (2 * qubit + 1)) as u8 & 1;
            prefix = prefix.tensor(&blinding_prefix(a, b, sigma2)?);
        }
        let q = &prefix.dagger() * &rhs;
        let qq = &q * &q.dagger();
        for r in 0..dim {
            for c in 0..dim {
                acc.set(r, c, acc.get(r, c) + qq.get(r, c));
            }
        }
    }
    let scale = Complex64::new(1.0 / (mask_count as f64 * dim as f64), 0.0);
    let mut out = ComplexMatrix::zeros(dim, dim);
    for r in 0..dim {
        for c in 0..dim {
            out.set(r, c, acc.get(r, c) * scale);
        }
    }
    Ok(out)
}

/// Shape limits for randomized scenario generation.
#[derive(Debug, Clone, Copy)]
pub struct SweepConfig {
    pub max_n: usize,
    pub max_qubits: usize,
    pub max_gates_per_server: usize,
    pub tolerance: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            max_n: 6,
            max_qubits: 4,
            max_gates_per_server: 8,
            tolerance: 1e-8,
        }
    }
}

const SINGLE_KINDS: [crate::gates::GateKind; 6] = [
    crate::gates::GateKind::X,
    crate::gates::GateKind::Y,
    crate::gates::GateKind::Z,
    crate::gates::GateKind::H,
    crate::gates::GateKind::S,
    crate::gates::GateKind::T,
];

/// Draw a random scenario over the full universal gate set.
pub fn random_scenario(cfg: &SweepConfig, master_seed: u64, index: u64) -> Scenario {
    let mut rng = stream_rng(master_seed, 50_000 + index);
    let n = rng.gen_range(1..=cfg.max_n);
    let k = rng.gen_range(1..=n);
    let mut servers: Vec<usize> = (1..=n).collect();
    for i in (1..servers.len()).rev() {
        servers.swap(i, rng.gen_range(0..=i));
    }
    let mut chain: Vec<usize> = servers[..k].to_vec();
    chain.sort_unstable();

    let m = rng.gen_range(1..=cfg.max_qubits);
    let qubits: Vec<QubitId> = (0..m).map(|i| QubitId::from(format!("q{i}"))).collect();
    let angles: Vec<f64> = (0..m)
        .map(|_| rng.gen_range(0.0..std::f64::consts::TAU))
        .collect();

    let mut programs = BTreeMap::new();
    for &server in &chain {
        let count = rng.gen_range(0..=cfg.max_gates_per_server);
        let mut gates = Vec::with_capacity(count);
        for _ in 0..count {
            let cnot_ok = m >= 2;
            if cnot_ok && rng.gen_bool(0.25) {
                let c = rng.gen_range(0..m);
                let mut t = rng.gen_range(0..m - 1);
                if t >= c {
                    t += 1;
                }
                gates.push(Gate::cnot(qubits[c].clone(), qubits[t].clone()).expect("distinct"));
            } else {
                let kind = SINGLE_KINDS[rng.gen_range(0..SINGLE_KINDS.len())];
                let q = rng.gen_range(0..m);
                gates.push(Gate::single(kind, qubits[q].clone()).expect("single"));
            }
        }
        if !gates.is_empty() {
            programs.insert(server, GateProgram::new(gates));
        }
    }

    let mut s = Scenario::new(
        master_seed ^ index.wrapping_mul(0x5851_F42D_4C95_7F2D),
        n,
        k,
        chain,
        qubits,
        angles,
        programs,
    );
    s.tolerance = cfg.tolerance;
    s
}

/// Draw a scenario whose programs keep every component in integer form
/// (no CNOT, no H after T/S, phase gates only in a trailing block). The
/// shape makes eligibility likely; the run result is checked and the draw
/// repeated until no component escalated.
pub fn integer_form_scenario(cfg: &SweepConfig, master_seed: u64, index: u64) -> Result<Scenario> {
    for attempt in 0..1_000u64 {
        let mut rng = stream_rng(master_seed, 60_000 + index * 1_000 + attempt);
        let n = rng.gen_range(1..=cfg.max_n);
        let k = rng.gen_range(1..=n);
        let mut servers: Vec<usize> = (1..=n).collect();
        for i in (1..servers.len()).rev() {
            servers.swap(i, rng.gen_range(0..=i));
        }
        let mut chain: Vec<usize> = servers[..k].to_vec();
        chain.sort_unstable();
        let m = rng.gen_range(1..=cfg.max_qubits);
        let qubits: Vec<QubitId> = (0..m).map(|i| QubitId::from(format!("q{i}"))).collect();
        let angles: Vec<f64> = (0..m)
            .map(|_| rng.gen_range(0.0..std::f64::consts::TAU))
            .collect();

        let mut programs = BTreeMap::new();
        for &server in &chain {
            let mut gates = Vec::new();
            for qubit in &qubits {
                // Pauli/H prefix, then an optional trailing phase block.
                for _ in 0..rng.gen_range(0..=2) {
                    let kind = SINGLE_KINDS[rng.gen_range(0..4)];
                    gates.push(Gate::single(kind, qubit.clone()).expect("single"));
                }
                for _ in 0..rng.gen_range(0..=2) {
                    let kind = if rng.gen_bool(0.5) {
                        crate::gates::GateKind::T
                    } else {
                        crate::gates::GateKind::S
                    };
                    gates.push(Gate::single(kind, qubit.clone()).expect("single"));
                }
            }
            if !gates.is_empty() {
                programs.insert(server, GateProgram::new(gates));
            }
        }

        let mut s = Scenario::new(
            master_seed ^ (index * 1_000 + attempt).wrapping_mul(0x5851_F42D_4C95_7F2D),
            n,
            k,
            chain,
            qubits,
            angles,
            programs,
        );
        s.tolerance = cfg.tolerance;
        let report = run(&s)?;
        if !report.matrix_escalated {
            return Ok(s);
        }
    }
    Err(Error::GenerationFailure(
        "no integer-form-eligible scenario found".into(),
    ))
}

/// Fraction of seeded runs whose decoy check aborts at least once on the
/// eavesdropped hop.
pub fn eavesdrop_detection(s: &Scenario, trials: usize) -> Result<f64> {
    let Eavesdropper::InterceptResend { hop, .. } = s.eavesdropper else {
        return Err(Error::invalid("scenario has no active eavesdropper"));
    };
    if trials == 0 {
        return Err(Error::invalid("at least one trial required"));
    }
    let mut detected = 0usize;
    for trial in 0..trials {
        let mut per_trial = s.clone();
        per_trial.seed = s
            .seed
            .wrapping_add(trial as u64)
            .wrapping_mul(0x9E37_79B9_7F4A_7C15);
        let report = run(&per_trial)?;
        let aborted = report
            .hops
            .iter()
            .any(|h| h.hop == hop && (h.retries > 0 || !h.passed))
            || matches!(report.outcome, RunOutcome::ChannelCompromised { hop: fh, .. } if fh == hop);
        if aborted {
            detected += 1;
        }
    }
    Ok(detected as f64 / trials as f64)
}
