//! Client and evaluator state machines, driven purely by messages.
//!
//! Each party is a state machine: feed it one decoded message, get back
//! the envelopes it wants delivered. The harness owns transport and may
//! run parties sequentially or as concurrent tasks; the protocol is a
//! strict pipeline either way.

use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gates::{self, Gate, GateProgram};
use crate::keygen::{theta_for, KeyMaterial, KeyShare};
use crate::protocol::{
    client_final, client_unmask, encrypt, partial_decrypt, update_dec, DecTuple, FinalMask,
    FormPolicy, QPrimeItem,
};
use crate::state::{DecoyBasis, DecoyState, PlaintextSpec, QubitId, Statevector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PartyId {
    Alice,
    Bob(usize),
}

impl std::fmt::Display for PartyId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PartyId::Alice => write!(f, "Alice"),
            PartyId::Bob(i) => write!(f, "Bob{i}"),
        }
    }
}

/// Everything that crosses the simulated wire.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum Message {
    /// Quantum payload of one hop, check states inserted.
    QubitSequence { hop: usize, state: Statevector },
    /// Positions and bases of the inserted check states.
    DecoyAnnounce {
        hop: usize,
        positions: Vec<usize>,
        bases: Vec<DecoyBasis>,
    },
    /// Receiver's measurement outcomes, one per announced check state.
    DecoyResults { hop: usize, outcomes: Vec<u8> },
    /// The decryption tuple accompanying a hop (hop k+1 goes to the client).
    ClassicalTuple { hop: usize, tuple: DecTuple },
    /// Blinded final-decryption blocks from the client.
    QPrime { items: Vec<QPrimeItem> },
    /// Evaluated qubits returned to the client.
    FinalQubits { state: Statevector },
}

/// A serialized message in flight.
#[derive(Debug, Clone)]
pub struct Envelope {
    pub from: PartyId,
    pub to: PartyId,
    pub body: String,
}

impl Envelope {
    pub fn pack(from: PartyId, to: PartyId, msg: &Message) -> Result<Self> {
        Ok(Self {
            from,
            to,
            body: serde_json::to_string(msg)
                .map_err(|e| Error::ProtocolViolation(format!("encode: {e}")))?,
        })
    }

    pub fn decode(&self) -> Result<Message> {
        serde_json::from_str(&self.body)
            .map_err(|e| Error::ProtocolViolation(format!("decode: {e}")))
    }
}

/// Check-state policy shared by every hop sender.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DecoyPolicy {
    /// Check states per data qubit (count = ceil(ratio * m)).
    pub ratio: f64,
    /// Highest tolerated decoy error rate.
    pub error_threshold: f64,
    /// Retries after the first failed check before giving up.
    pub max_retries: usize,
}

impl Default for DecoyPolicy {
    fn default() -> Self {
        Self {
            ratio: 0.2,
            error_threshold: 0.0,
            max_retries: 3,
        }
    }
}

impl DecoyPolicy {
    pub fn count_for(&self, data_qubits: usize) -> usize {
        (self.ratio * data_qubits as f64).ceil() as usize
    }
}

/// Per-attempt record kept by the verifying sender of a hop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HopCheck {
    pub hop: usize,
    pub receiver: usize,
    pub decoy_count: usize,
    pub attempts: Vec<f64>,
    pub passed: bool,
}

impl HopCheck {
    pub fn retries(&self) -> usize {
        self.attempts.len().saturating_sub(1)
    }

    pub fn last_error_rate(&self) -> f64 {
        self.attempts.last().copied().unwrap_or(0.0)
    }
}

/// Sender-side state for one hop's check-and-forward cycle.
struct HopSend {
    hop: usize,
    to: PartyId,
    state: Statevector,
    tuple: DecTuple,
    expected: Vec<DecoyState>,
    check: HopCheck,
}

impl HopSend {
    fn new(
        hop: usize,
        to: PartyId,
        receiver_id: usize,
        state: Statevector,
        tuple: DecTuple,
        decoy_count: usize,
    ) -> Self {
        Self {
            hop,
            to,
            state,
            tuple,
            expected: Vec::new(),
            check: HopCheck {
                hop,
                receiver: receiver_id,
                decoy_count,
                attempts: Vec::new(),
                passed: false,
            },
        }
    }

    /// Insert fresh check states and emit the sequence plus its announce.
    fn send_attempt(&mut self, from: PartyId, rng: &mut ChaCha12Rng) -> Result<Vec<Envelope>> {
        let attempt = self.check.attempts.len();
        let mut wired = self.state.clone();
        let mut decoys = Vec::with_capacity(self.check.decoy_count);
        let mut ids = Vec::with_capacity(self.check.decoy_count);
        for i in 0..self.check.decoy_count {
            use rand::Rng;
            let basis = if rng.gen_bool(0.5) {
                DecoyBasis::Computational
            } else {
                DecoyBasis::Hadamard
            };
            let value = u8::from(rng.gen_bool(0.5));
            let position = rng.gen_range(0..=wired.qubit_ids().len());
            let d = DecoyState {
                basis,
                value,
                position,
            };
            let id = QubitId::from(format!("!chk-{}-{attempt}-{i}", self.hop));
            wired.insert_qubit(position, id.clone(), d.amplitudes())?;
            decoys.push(d);
            ids.push(id);
        }
        // Positions announced in final wire order (later insertions shift
        // earlier ones).
        let positions: Vec<usize> = ids
            .iter()
            .map(|id| wired.qubit_ids().iter().position(|q| q == id).unwrap())
            .collect();
        let bases: Vec<DecoyBasis> = decoys.iter().map(|d| d.basis).collect();
        self.expected = decoys;
        Ok(vec![
            Envelope::pack(
                from,
                self.to,
                &Message::QubitSequence {
                    hop: self.hop,
                    state: wired,
                },
            )?,
            Envelope::pack(
                from,
                self.to,
                &Message::DecoyAnnounce {
                    hop: self.hop,
                    positions,
                    bases,
                },
            )?,
        ])
    }
}

/// Receiver-side helper: measure announced check states and strip them.
fn measure_and_strip(
    state: &Statevector,
    positions: &[usize],
    bases: &[DecoyBasis],
    rng: &mut ChaCha12Rng,
) -> Result<(Statevector, Vec<u8>)> {
    if positions.len() != bases.len() {
        return Err(Error::ProtocolViolation(
            "announce positions and bases disagree".into(),
        ));
    }
    let mut current = state.clone();
    let mut outcomes = Vec::with_capacity(positions.len());
    let mut ids = Vec::with_capacity(positions.len());
    for (&pos, &basis) in positions.iter().zip(bases) {
        let id =
            current.qubit_ids().get(pos).cloned().ok_or_else(|| {
                Error::ProtocolViolation(format!("announced position {pos} invalid"))
            })?;
        let (next, outcome) = current.measure_decoy(&id, basis, rng)?;
        current = next;
        outcomes.push(outcome);
        ids.push(id);
    }
    for id in &ids {
        current.remove_singleton(id)?;
    }
    Ok((current, outcomes))
}

/// Why a party stopped participating.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelFailure {
    pub hop: usize,
    pub error_rate: f64,
}

enum AliceState {
    Hop1Check,
    AwaitFinalTuple,
    AwaitFinalQubits,
    Done,
    Failed,
}

/// The client: encrypts, runs the hop-1 check, and completes the blinded
/// final-decryption handshake.
pub struct AliceParty {
    spec: PlaintextSpec,
    km: KeyMaterial,
    chain: Vec<usize>,
    policy: DecoyPolicy,
    pinned_mask: Option<Vec<(u8, u8)>>,
    rng: ChaCha12Rng,
    state: AliceState,
    hop1: Option<HopSend>,
    mask: Option<FinalMask>,
    pub q_prime: Vec<QPrimeItem>,
    pub final_tuple: Option<DecTuple>,
    pub final_state: Option<Statevector>,
    pub checks: Vec<HopCheck>,
    pub failure: Option<ChannelFailure>,
}

impl AliceParty {
    pub fn new(
        spec: PlaintextSpec,
        km: KeyMaterial,
        chain: Vec<usize>,
        policy: DecoyPolicy,
        pinned_mask: Option<Vec<(u8, u8)>>,
        rng: ChaCha12Rng,
    ) -> Self {
        Self {
            spec,
            km,
            chain,
            policy,
            pinned_mask,
            rng,
            state: AliceState::Hop1Check,
            hop1: None,
            mask: None,
            q_prime: Vec::new(),
            final_tuple: None,
            final_state: None,
            checks: Vec::new(),
            failure: None,
        }
    }

    pub fn is_terminal(&self) -> bool {
        matches!(self.state, AliceState::Done | AliceState::Failed)
    }

    pub fn succeeded(&self) -> bool {
        matches!(self.state, AliceState::Done)
    }

    pub fn key_material(&self) -> &KeyMaterial {
        &self.km
    }

    /// Encrypt and launch the first hop.
    pub fn start(&mut self) -> Result<Vec<Envelope>> {
        let (ciphertext, tuple) = encrypt(&self.spec, &self.km)?;
        let receiver = self.chain[0];
        let mut hop = HopSend::new(
            1,
            PartyId::Bob(receiver),
            receiver,
            ciphertext,
            tuple,
            self.policy.count_for(self.spec.len()),
        );
        let out = hop.send_attempt(PartyId::Alice, &mut self.rng)?;
        self.hop1 = Some(hop);
        Ok(out)
    }

    pub fn handle(&mut self, msg: Message) -> Result<Vec<Envelope>> {
        match (&self.state, msg) {
            (AliceState::Hop1Check, Message::DecoyResults { hop: 1, outcomes }) => {
                let hop = self.hop1.as_mut().expect("hop 1 in flight");
                let ok = verify_hop(hop, &outcomes, self.policy.error_threshold)?;
                if ok {
                    hop.check.passed = true;
                    let env = Envelope::pack(
                        PartyId::Alice,
                        hop.to,
                        &Message::ClassicalTuple {
                            hop: 1,
                            tuple: hop.tuple.clone(),
                        },
                    )?;
                    self.checks.push(hop.check.clone());
                    self.state = AliceState::AwaitFinalTuple;
                    Ok(vec![env])
                } else if hop.check.retries() >= self.policy.max_retries {
                    self.failure = Some(ChannelFailure {
                        hop: 1,
                        error_rate: hop.check.last_error_rate(),
                    });
                    self.checks.push(hop.check.clone());
                    self.state = AliceState::Failed;
                    Ok(vec![])
                } else {
                    hop.send_attempt(PartyId::Alice, &mut self.rng)
                }
            }
            (AliceState::AwaitFinalTuple, Message::ClassicalTuple { tuple, .. }) => {
                let mask = match &self.pinned_mask {
                    Some(values) => FinalMask::pinned(&self.spec.qubits, values)?,
                    None => FinalMask::draw(&self.spec.qubits, &mut self.rng),
                };
                let items = client_final(&tuple, &self.km, &mask)?;
                self.q_prime = items.clone();
                self.final_tuple = Some(tuple);
                self.mask = Some(mask);
                let last = *self.chain.last().expect("non-empty chain");
                self.state = AliceState::AwaitFinalQubits;
                Ok(vec![Envelope::pack(
                    PartyId::Alice,
                    PartyId::Bob(last),
                    &Message::QPrime { items },
                )?])
            }
            (AliceState::AwaitFinalQubits, Message::FinalQubits { state }) => {
                let mask = self.mask.as_ref().expect("mask drawn");
                self.final_state = Some(client_unmask(&state, &self.km, mask)?);
                self.state = AliceState::Done;
                Ok(vec![])
            }
            (_, other) => Err(Error::ProtocolViolation(format!(
                "client cannot handle {other:?} in its current phase"
            ))),
        }
    }
}

fn verify_hop(hop: &mut HopSend, outcomes: &[u8], threshold: f64) -> Result<bool> {
    if outcomes.len() != hop.expected.len() {
        return Err(Error::ProtocolViolation(
            "decoy result count does not match announce".into(),
        ));
    }
    let mismatches = hop
        .expected
        .iter()
        .zip(outcomes)
        .filter(|(d, &o)| d.value != o)
        .count();
    let rate = if outcomes.is_empty() {
        0.0
    } else {
        mismatches as f64 / outcomes.len() as f64
    };
    hop.check.attempts.push(rate);
    Ok(rate <= threshold)
}

enum EvalState {
    AwaitSequence,
    AwaitAnnounce,
    AwaitTuple,
    AwaitResults,
    AwaitQPrime,
    Done,
    Failed,
}

/// One evaluation server at a fixed position in the chosen chain.
pub struct EvaluatorParty {
    server_id: usize,
    position: usize, // 1-based chain position
    k: usize,
    chain: Vec<usize>,
    share: KeyShare,
    program: GateProgram,
    policy: DecoyPolicy,
    form_policy: FormPolicy,
    rng: ChaCha12Rng,
    state: EvalState,
    received: Option<Statevector>,
    data: Option<Statevector>,
    evaluated: Option<Statevector>,
    outgoing: Option<HopSend>,
    pub checks: Vec<HopCheck>,
    pub failure: Option<ChannelFailure>,
}

impl EvaluatorParty {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        server_id: usize,
        position: usize,
        chain: Vec<usize>,
        share: KeyShare,
        program: GateProgram,
        policy: DecoyPolicy,
        form_policy: FormPolicy,
        rng: ChaCha12Rng,
    ) -> Self {
        Self {
            server_id,
            position,
            k: chain.len(),
            chain,
            share,
            program,
            policy,
            form_policy,
            rng,
            state: EvalState::AwaitSequence,
            received: None,
            data: None,
            evaluated: None,
            outgoing: None,
            checks: Vec::new(),
            failure: None,
        }
    }

    pub fn is_terminal(&self) -> bool {
        matches!(self.state, EvalState::Done | EvalState::Failed)
    }

    fn me(&self) -> PartyId {
        PartyId::Bob(self.server_id)
    }

    fn upstream(&self) -> PartyId {
        if self.position == 1 {
            PartyId::Alice
        } else {
            PartyId::Bob(self.chain[self.position - 2])
        }
    }

    pub fn handle(&mut self, msg: Message) -> Result<Vec<Envelope>> {
        match (&self.state, msg) {
            // A fresh sequence arrives; a repeat while waiting for the
            // tuple means the sender discarded the previous round.
            (
                EvalState::AwaitSequence | EvalState::AwaitTuple,
                Message::QubitSequence { hop, state },
            ) if hop == self.position => {
                self.received = Some(state);
                self.state = EvalState::AwaitAnnounce;
                Ok(vec![])
            }
            (
                EvalState::AwaitAnnounce,
                Message::DecoyAnnounce {
                    hop,
                    positions,
                    bases,
                },
            ) if hop == self.position => {
                let received = self
                    .received
                    .take()
                    .ok_or_else(|| Error::ProtocolViolation("announce before sequence".into()))?;
                let (clean, outcomes) =
                    measure_and_strip(&received, &positions, &bases, &mut self.rng)?;
                self.data = Some(clean);
                self.state = EvalState::AwaitTuple;
                Ok(vec![Envelope::pack(
                    self.me(),
                    self.upstream(),
                    &Message::DecoyResults {
                        hop: self.position,
                        outcomes,
                    },
                )?])
            }
            (EvalState::AwaitTuple, Message::ClassicalTuple { hop, tuple })
                if hop == self.position =>
            {
                self.evaluate(tuple)
            }
            (EvalState::AwaitResults, Message::DecoyResults { hop, outcomes })
                if hop == self.position + 1 =>
            {
                let me = self.me();
                let threshold = self.policy.error_threshold;
                let max_retries = self.policy.max_retries;
                let out = self.outgoing.as_mut().expect("outgoing hop in flight");
                let ok = verify_hop(out, &outcomes, threshold)?;
                if ok {
                    out.check.passed = true;
                    let env = Envelope::pack(
                        me,
                        out.to,
                        &Message::ClassicalTuple {
                            hop: out.hop,
                            tuple: out.tuple.clone(),
                        },
                    )?;
                    self.checks.push(out.check.clone());
                    self.state = EvalState::Done;
                    Ok(vec![env])
                } else if out.check.retries() >= max_retries {
                    self.failure = Some(ChannelFailure {
                        hop: out.hop,
                        error_rate: out.check.last_error_rate(),
                    });
                    self.checks.push(out.check.clone());
                    self.state = EvalState::Failed;
                    Ok(vec![])
                } else {
                    out.send_attempt(me, &mut self.rng)
                }
            }
            (EvalState::AwaitQPrime, Message::QPrime { items }) => {
                let mut state = self.evaluated.take().expect("evaluated state held");
                for item in &items {
                    state = state.apply_block(&item.qubits, &item.matrix)?;
                }
                self.state = EvalState::Done;
                Ok(vec![Envelope::pack(
                    self.me(),
                    PartyId::Alice,
                    &Message::FinalQubits { state },
                )?])
            }
            (_, other) => Err(Error::ProtocolViolation(format!(
                "evaluator {} cannot handle {other:?} in its current phase",
                self.server_id
            ))),
        }
    }

    /// Partial decryption, evaluation, tuple update, then forward.
    fn evaluate(&mut self, tuple: DecTuple) -> Result<Vec<Envelope>> {
        let data = self
            .data
            .take()
            .ok_or_else(|| Error::ProtocolViolation("tuple before sequence".into()))?;
        let theta = theta_for(&self.share, &self.chain)?;
        let mut state = partial_decrypt(&data, &tuple, theta)?;
        for gate in &self.program.gates {
            state = match gate {
                Gate::Single { kind, qubit } => {
                    state.apply_single(qubit, &gates::gate_matrix(*kind))?
                }
                Gate::Cnot { control, target } => state.apply_cnot(control, target)?,
            };
        }
        let profile = gates::profile(&self.program);
        let next_tuple = update_dec(&tuple, &self.program, &profile, self.form_policy)?;

        if self.position < self.k {
            let receiver = self.chain[self.position];
            let mut hop = HopSend::new(
                self.position + 1,
                PartyId::Bob(receiver),
                receiver,
                state,
                next_tuple,
                self.policy.count_for(data.qubit_ids().len()),
            );
            let me = self.me();
            let out = hop.send_attempt(me, &mut self.rng)?;
            self.outgoing = Some(hop);
            self.state = EvalState::AwaitResults;
            Ok(out)
        } else {
            self.evaluated = Some(state);
            self.state = EvalState::AwaitQPrime;
            Ok(vec![Envelope::pack(
                self.me(),
                PartyId::Alice,
                &Message::ClassicalTuple {
                    hop: self.k + 1,
                    tuple: next_tuple,
                },
            )?])
        }
    }
}
