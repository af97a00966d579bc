//! Integration tests for the hop pipeline: residual-key telescoping,
//! the final-handshake identity, wire-format coverage, and schedule
//! equivalence.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use std::collections::BTreeMap;

use qhe_core::gates::{gate_matrix, profile, Gate, GateProgram};
use qhe_core::harness::{
    self, random_scenario, run, run_with_schedule, ComparisonMode, Eavesdropper, Scenario,
    Schedule, SweepConfig,
};
use qhe_core::keygen;
use qhe_core::linalg::{blinding_prefix, u_rot, ComplexMatrix};
use qhe_core::party::{Envelope, Message, PartyId};
use qhe_core::protocol::{
    client_final, encrypt, final_rhs, partial_decrypt, update_dec, DecTuple, FinalMask, FormPolicy,
};
use qhe_core::state::{self, PlaintextSpec, Statevector};
use qhe_core::QubitId;

fn apply_program(mut sv: Statevector, prog: &GateProgram) -> Statevector {
    for gate in &prog.gates {
        sv = match gate {
            Gate::Single { kind, qubit } => sv.apply_single(qubit, &gate_matrix(*kind)).unwrap(),
            Gate::Cnot { control, target } => sv.apply_cnot(control, target).unwrap(),
        };
    }
    sv
}

/// Drive the hop chain directly through the protocol API (no transport,
/// no decoys) and return the state plus tuple after all k hops.
fn manual_hops(
    s: &Scenario,
    km: &keygen::KeyMaterial,
    policy: FormPolicy,
) -> (Statevector, DecTuple) {
    let spec = s.plaintext().unwrap();
    let (mut sv, mut dec) = encrypt(&spec, km).unwrap();
    for &server in &s.chain {
        let share = keygen::share_for(km, server).unwrap();
        let theta = keygen::theta_for(&share, &s.chain).unwrap();
        sv = partial_decrypt(&sv, &dec, theta).unwrap();
        let prog = s.programs.get(&server).cloned().unwrap_or_default();
        sv = apply_program(sv, &prog);
        dec = update_dec(&dec, &prog, &profile(&prog), policy).unwrap();
    }
    (sv, dec)
}

/// After all k hops, the residual encryption is the accumulated gate word
/// conjugating a 2pi - sigma2 rotation on every qubit.
#[test]
fn residual_key_telescopes() {
    let cfg = SweepConfig::default();
    for index in 0..40u64 {
        let s = random_scenario(&cfg, 0xBEEF, index);
        let mut rng = ChaCha12Rng::seed_from_u64(s.seed);
        let km = keygen::generate(s.n, s.k, &mut rng).unwrap();
        let spec = s.plaintext().unwrap();

        for (policy, exact) in [(FormPolicy::ForceMatrix, true), (FormPolicy::Auto, false)] {
            let (sv, _) = manual_hops(&s, &km, policy);
            // Reference: rotate the plaintext by the residual key, then
            // replay every gate directly.
            let residual = std::f64::consts::TAU - km.sigma2.rad();
            let mut expect = Statevector::prepare(&spec).unwrap();
            for qb in &s.qubits {
                expect = expect.apply_single(qb, &u_rot(residual).unwrap()).unwrap();
            }
            for prog in s.chain_programs() {
                expect = apply_program(expect, &prog);
            }
            if exact {
                assert!(
                    state::equal_exact(&sv, &expect, 1e-9).unwrap(),
                    "matrix-form residual drifted (scenario {index})"
                );
            } else {
                assert!(
                    state::equal_up_to_global_phase(&sv, &expect, 1e-9).unwrap(),
                    "integer-form residual drifted (scenario {index})"
                );
            }
        }
    }
}

/// The blinding prefix times the solved block reproduces the decryption
/// right-hand side, component by component.
#[test]
fn handshake_identity_holds() {
    let cfg = SweepConfig::default();
    for index in 0..40u64 {
        let s = random_scenario(&cfg, 0xCAFE, index);
        let mut rng = ChaCha12Rng::seed_from_u64(s.seed);
        let km = keygen::generate(s.n, s.k, &mut rng).unwrap();
        let (_, dec) = manual_hops(&s, &km, FormPolicy::Auto);
        let mask = FinalMask::draw(&s.qubits, &mut rng);
        let items = client_final(&dec, &km, &mask).unwrap();
        let rhs = final_rhs(&dec, km.sigma2).unwrap();
        assert_eq!(items.len(), rhs.len());
        for (item, (qubits, rhs)) in items.iter().zip(&rhs) {
            assert_eq!(&item.qubits, qubits);
            let mut prefix = ComplexMatrix::identity(1);
            for qb in qubits {
                let (a, b) = mask.get(qb).unwrap();
                prefix = prefix.tensor(&blinding_prefix(a, b, km.sigma2).unwrap());
            }
            assert!((&prefix * &item.matrix).approx_eq(rhs, 1e-9));
        }
    }
}

/// Matrix-form-only runs are exact, not merely phase-equal.
#[test]
fn forced_matrix_runs_pass_exact_comparison() {
    let cfg = SweepConfig::default();
    for index in 0..30u64 {
        let mut s = random_scenario(&cfg, 0xDEAD, index);
        s.force_matrix = true;
        s.comparison = ComparisonMode::Exact;
        s.tolerance = 1e-9;
        let report = run(&s).unwrap();
        assert!(report.pass, "scenario {index}: {:?}", report.outcome);
    }
}

/// Clean channels never abort, whatever the gates do.
#[test]
fn clean_channel_never_aborts() {
    let cfg = SweepConfig::default();
    for index in 0..50u64 {
        let s = random_scenario(&cfg, 0xFEED, index);
        let report = run(&s).unwrap();
        assert!(report
            .hops
            .iter()
            .all(|h| h.passed && h.retries == 0 && h.error_rate == 0.0));
    }
}

/// Both transport schedules produce byte-identical reports, with and
/// without an eavesdropper on the channel.
#[test]
fn schedules_agree() {
    let cfg = SweepConfig::default();
    for index in 0..10u64 {
        let mut s = random_scenario(&cfg, 0xF00D, index);
        if index % 2 == 0 {
            s.eavesdropper = Eavesdropper::InterceptResend {
                hop: 1,
                probability: 0.5,
            };
            s.decoy_error_threshold = 0.30;
        }
        let seq = run_with_schedule(&s, Schedule::Sequential).unwrap();
        let thr = run_with_schedule(&s, Schedule::Threaded).unwrap();
        assert_eq!(
            seq.to_json(),
            thr.to_json(),
            "schedule divergence at {index}"
        );
    }
}

/// Every message kind survives the wire encoding.
#[test]
fn wire_covers_all_message_kinds() {
    let spec = PlaintextSpec::new(vec![QubitId::from("q0")], vec![0.3]).unwrap();
    let sv = Statevector::prepare(&spec).unwrap();
    let dec = DecTuple::initial(&[QubitId::from("q0")]);
    let mut rng = ChaCha12Rng::seed_from_u64(1);
    let km = keygen::generate(1, 1, &mut rng).unwrap();
    let mask = FinalMask::pinned(&[QubitId::from("q0")], &[(1, 0)]).unwrap();
    let items = client_final(&dec, &km, &mask).unwrap();

    let messages = vec![
        Message::QubitSequence {
            hop: 1,
            state: sv.clone(),
        },
        Message::DecoyAnnounce {
            hop: 1,
            positions: vec![0],
            bases: vec![qhe_core::state::DecoyBasis::Hadamard],
        },
        Message::DecoyResults {
            hop: 1,
            outcomes: vec![1],
        },
        Message::ClassicalTuple { hop: 1, tuple: dec },
        Message::QPrime { items },
        Message::FinalQubits { state: sv },
    ];
    for msg in messages {
        let env = Envelope::pack(PartyId::Alice, PartyId::Bob(1), &msg).unwrap();
        let back = env.decode().unwrap();
        assert_eq!(
            std::mem::discriminant(&back),
            std::mem::discriminant(&msg),
            "wire kind changed"
        );
    }
}

/// A hostile hop with a zero threshold ends in a compromised-channel
/// report after the retry budget.
#[test]
fn hostile_channel_reports_compromise() {
    let mut s = Scenario::new(
        3,
        2,
        2,
        vec![1, 2],
        vec![QubitId::from("q0")],
        vec![0.8],
        BTreeMap::new(),
    );
    s.decoy_ratio = 10.0;
    s.eavesdropper = Eavesdropper::InterceptResend {
        hop: 2,
        probability: 1.0,
    };
    let report = run(&s).unwrap();
    assert!(!report.pass);
    match report.outcome {
        harness::RunOutcome::ChannelCompromised { hop, error_rate } => {
            assert_eq!(hop, 2);
            assert!(error_rate > 0.0);
        }
        other => panic!("expected compromise, got {other:?}"),
    }
    // Retry budget: 1 initial + 3 retries.
    let hop2 = report.hops.iter().find(|h| h.hop == 2).unwrap();
    assert_eq!(hop2.retries, 3);
    assert!(!hop2.passed);
}
