//! Encryption, partial decryption, and the per-hop decryption-tuple
//! calculus covering all three evaluation cases.
//!
//! A decryption component describes, for one qubit group, how a rotation
//! key still has to be applied through the gates evaluated so far: either
//! three integers (eta, t', s') driving a phase-sandwiched rotation, or a
//! conjugated matrix factory for the cases the integers cannot express.
//!
//! Integer bookkeeping note: the closed-form integer update collapses all
//! X/Y sign flips of a hop into a single factor. That collapse is only
//! valid when no X or Y lands between phase-gate contributions with
//! opposite orientations. `update_dec` therefore re-derives the sandwich
//! phase gate by gate and silently falls back to the (always exact)
//! matrix form whenever the closed form would drift; see `phase_walk`.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

use crate::error::{Error, Result};
use crate::gates::{composite_matrix, Gate, GateCounts, GateKind, GateProgram, ProgramProfile};
use crate::keygen::KeyMaterial;
use crate::linalg::{blinding_prefix, e_phase, solve_blinded, u_rot, Angle, ComplexMatrix};
use crate::state::{PlaintextSpec, QubitId, Statevector};

/// The (eta, t', s') integers of one qubit's integer-form component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct IntegerParams {
    pub eta: u64,
    pub t_prime: i64,
    pub s_prime: i64,
}

impl IntegerParams {
    /// Sandwich phase in quarter-pi units.
    fn phi_quarters(self) -> i64 {
        2 * self.s_prime + self.t_prime
    }
}

/// A matrix-form decryption function `gamma -> conj * (x) inner_i(gamma) * conj^dag`.
///
/// The inner factors keep the structure of the components they absorbed,
/// so the factory serializes as plain data and later hops can wrap it again.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixFactory {
    pub conj: ComplexMatrix,
    pub inner: Vec<InnerFactor>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum InnerFactor {
    /// A prior integer component: E(phi) U((-1)^eta gamma) E(-phi).
    Rotation(IntegerParams),
    /// A prior matrix component, conjugated as a whole.
    Nested(MatrixFactory),
}

impl InnerFactor {
    fn eval(&self, gamma: Angle) -> Result<ComplexMatrix> {
        match self {
            InnerFactor::Rotation(p) => integer_sandwich(*p, gamma),
            InnerFactor::Nested(f) => f.eval(gamma),
        }
    }
}

impl MatrixFactory {
    pub fn eval(&self, gamma: Angle) -> Result<ComplexMatrix> {
        let mut inner = ComplexMatrix::identity(1);
        for f in &self.inner {
            inner = inner.tensor(&f.eval(gamma)?);
        }
        Ok(&(&self.conj * &inner) * &self.conj.dagger())
    }
}

/// Per-qubit-group partial decryption function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DecComponent {
    /// Integer form for a single qubit.
    Integer {
        qubit: QubitId,
        params: IntegerParams,
    },
    /// Matrix form for a single qubit (H applied after T/S).
    HMatrix {
        qubit: QubitId,
        factory: MatrixFactory,
    },
    /// Matrix form for an entangled group (CNOT applied).
    CnMatrix {
        qubits: Vec<QubitId>,
        factory: MatrixFactory,
    },
}

impl DecComponent {
    pub fn qubits(&self) -> &[QubitId] {
        match self {
            DecComponent::Integer { qubit, .. } | DecComponent::HMatrix { qubit, .. } => {
                std::slice::from_ref(qubit)
            }
            DecComponent::CnMatrix { qubits, .. } => qubits,
        }
    }

    pub fn is_matrix_form(&self) -> bool {
        !matches!(self, DecComponent::Integer { .. })
    }

    /// The sigma2-substituted decryption matrix of this component.
    pub fn rhs(&self, gamma: Angle) -> Result<ComplexMatrix> {
        match self {
            DecComponent::Integer { params, .. } => integer_sandwich(*params, gamma),
            DecComponent::HMatrix { factory, .. } | DecComponent::CnMatrix { factory, .. } => {
                factory.eval(gamma)
            }
        }
    }

    fn as_inner(&self) -> InnerFactor {
        match self {
            DecComponent::Integer { params, .. } => InnerFactor::Rotation(*params),
            DecComponent::HMatrix { factory, .. } | DecComponent::CnMatrix { factory, .. } => {
                InnerFactor::Nested(factory.clone())
            }
        }
    }
}

/// The full decryption tuple: one component per qubit group, covering
/// every data qubit exactly once.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecTuple {
    pub components: Vec<DecComponent>,
}

impl DecTuple {
    /// The all-zero integer tuple attached to a fresh ciphertext.
    pub fn initial(qubits: &[QubitId]) -> Self {
        Self {
            components: qubits
                .iter()
                .map(|q| DecComponent::Integer {
                    qubit: q.clone(),
                    params: IntegerParams::default(),
                })
                .collect(),
        }
    }

    pub fn covered_qubits(&self) -> Vec<&QubitId> {
        self.components.iter().flat_map(|c| c.qubits()).collect()
    }

    pub fn covers_exactly(&self, qubits: &[QubitId]) -> bool {
        let mut mine: Vec<&QubitId> = self.covered_qubits();
        if mine.len() != qubits.len() {
            return false;
        }
        mine.sort();
        let mut theirs: Vec<&QubitId> = qubits.iter().collect();
        theirs.sort();
        mine == theirs && {
            let mut dedup = mine.clone();
            dedup.dedup();
            dedup.len() == mine.len()
        }
    }

    pub fn any_matrix_form(&self) -> bool {
        self.components.iter().any(DecComponent::is_matrix_form)
    }
}

/// `E(phi) U((-1)^eta gamma) E(-phi)` with `phi = pi s'/2 + pi t'/4`.
pub fn integer_sandwich(p: IntegerParams, gamma: Angle) -> Result<ComplexMatrix> {
    let phi = FRAC_PI_2 * p.s_prime as f64 + FRAC_PI_4 * p.t_prime as f64;
    let sign = if p.eta.is_multiple_of(2) { 1.0 } else { -1.0 };
    Ok(&(&e_phase(phi)? * &u_rot(sign * gamma.rad())?) * &e_phase(-phi)?)
}

/// Random per-qubit blinding bits for the final handshake. Generated by
/// the client and never transmitted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FinalMask {
    pub bits: BTreeMap<QubitId, (u8, u8)>,
}

impl FinalMask {
    pub fn draw(qubits: &[QubitId], rng: &mut impl rand::Rng) -> Self {
        let mut bits = BTreeMap::new();
        for q in qubits {
            let a = u8::from(rng.gen_bool(0.5));
            let b = u8::from(rng.gen_bool(0.5));
            bits.insert(q.clone(), (a, b));
        }
        Self { bits }
    }

    pub fn pinned(qubits: &[QubitId], values: &[(u8, u8)]) -> Result<Self> {
        if qubits.len() != values.len() {
            return Err(Error::invalid("one mask pair required per qubit"));
        }
        Ok(Self {
            bits: qubits.iter().cloned().zip(values.iter().copied()).collect(),
        })
    }

    pub fn get(&self, q: &QubitId) -> Result<(u8, u8)> {
        self.bits
            .get(q)
            .copied()
            .ok_or_else(|| Error::NotFound(format!("mask bits for qubit {q}")))
    }
}

/// Encrypt a plaintext register: every qubit rotated by `2pi - s1 - s2`.
/// Returns the ciphertext and the initial all-zero decryption tuple.
pub fn encrypt(spec: &PlaintextSpec, km: &KeyMaterial) -> Result<(Statevector, DecTuple)> {
    let theta0 = std::f64::consts::TAU - km.sigma1.rad() - km.sigma2.rad();
    let rot = u_rot(theta0)?;
    let mut sv = Statevector::prepare(spec)?;
    for q in &spec.qubits {
        sv = sv.apply_single(q, &rot)?;
    }
    let dec = DecTuple::initial(&spec.qubits);
    Ok((sv, dec))
}

/// Apply one hop's partial decryption: every component of the tuple is
/// evaluated at the same key angle `theta`.
pub fn partial_decrypt(sv: &Statevector, dec: &DecTuple, theta: Angle) -> Result<Statevector> {
    if !dec.covers_exactly(sv.qubit_ids()) {
        return Err(Error::ProtocolViolation(
            "decryption tuple does not cover the received qubits".into(),
        ));
    }
    let mut out = sv.clone();
    for comp in &dec.components {
        let m = comp.rhs(theta)?;
        out = match comp {
            DecComponent::Integer { qubit, .. } | DecComponent::HMatrix { qubit, .. } => {
                out.apply_single(qubit, &m)?
            }
            DecComponent::CnMatrix { qubits, .. } => out.apply_block(qubits, &m)?,
        };
    }
    Ok(out)
}

/// Closed-form integer update for one hop (the second-case rules, which
/// degenerate to the first case when the hop has no T or S gates).
pub fn integer_update(prev: IntegerParams, c: &GateCounts) -> IntegerParams {
    IntegerParams {
        eta: prev.eta + u64::from(c.eta_contribution()),
        t_prime: signed_accumulate(prev.t_prime, c.t, c.x_after_t + c.y_after_t, c.x + c.y),
        s_prime: signed_accumulate(prev.s_prime, c.s, c.x_after_s + c.y_after_s, c.x + c.y),
    }
}

fn signed_accumulate(prev: i64, added: u32, flips_after_first: u32, flips_total: u32) -> i64 {
    if prev == 0 {
        neg_pow(flips_after_first) * i64::from(added)
    } else {
        neg_pow(flips_total) * prev.signum() * (prev.abs() + i64::from(added))
    }
}

fn neg_pow(n: u32) -> i64 {
    if n.is_multiple_of(2) {
        1
    } else {
        -1
    }
}

/// Walk a qubit's single-gate sequence and track the exact sandwich phase
/// in quarter-pi units. Returns `None` when an H hits a non-trivial phase,
/// i.e. when no phase-sandwiched rotation can express the conjugation.
fn phase_walk(prev: IntegerParams, kinds: &[GateKind]) -> Option<i64> {
    let mut phi = prev.phi_quarters();
    for kind in kinds {
        match kind {
            GateKind::X | GateKind::Y => phi = -phi,
            GateKind::Z => {}
            GateKind::H => {
                if phi.rem_euclid(8) != 0 {
                    return None;
                }
            }
            GateKind::T => phi += 1,
            GateKind::S => phi += 2,
            GateKind::Cnot => return None,
        }
    }
    Some(phi)
}

/// Whether the matrix fallback is forced regardless of eligibility.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum FormPolicy {
    /// Keep integer form wherever it is exact; escalate otherwise.
    #[default]
    Auto,
    /// Escalate every component to matrix form (reference runs).
    ForceMatrix,
}

/// Update the decryption tuple after one evaluator's gates.
///
/// Groups are the connected components of this hop's CNOT pairs merged
/// with the tuple's existing group structure; merged inner factors are
/// tensored in merged-qubit order before conjugation.
pub fn update_dec(
    prev: &DecTuple,
    prog: &GateProgram,
    profile: &ProgramProfile,
    policy: FormPolicy,
) -> Result<DecTuple> {
    let covered = prev.covered_qubits();
    for q in prog.touched_qubits() {
        if !covered.contains(&&q) {
            return Err(Error::ProtocolViolation(format!(
                "program touches qubit {q} outside the tuple coverage"
            )));
        }
    }

    // Union-find over previous components, joined by this hop's CNOTs.
    let mut group_of: Vec<usize> = (0..prev.components.len()).collect();
    let find = |group_of: &Vec<usize>, mut i: usize| -> usize {
        while group_of[i] != i {
            i = group_of[i];
        }
        i
    };
    let comp_of_qubit = |q: &QubitId| -> usize {
        prev.components
            .iter()
            .position(|c| c.qubits().contains(q))
            .expect("coverage checked above")
    };
    for gate in &prog.gates {
        if let Gate::Cnot { control, target } = gate {
            let a = find(&group_of, comp_of_qubit(control));
            let b = find(&group_of, comp_of_qubit(target));
            if a != b {
                let (keep, drop) = (a.min(b), a.max(b));
                group_of[drop] = keep;
            }
        }
    }

    let mut components = Vec::new();
    let mut done = vec![false; prev.components.len()];
    for root in 0..prev.components.len() {
        if done[root] || find(&group_of, root) != root {
            continue;
        }
        let members: Vec<usize> = (0..prev.components.len())
            .filter(|&i| find(&group_of, i) == root)
            .collect();
        for &i in &members {
            done[i] = true;
        }
        let group_qubits: Vec<QubitId> = members
            .iter()
            .flat_map(|&i| prev.components[i].qubits().iter().cloned())
            .collect();
        let hop_gates = prog.restricted_to(&group_qubits);

        if hop_gates.is_empty() && policy == FormPolicy::Auto {
            for &i in &members {
                components.push(prev.components[i].clone());
            }
            continue;
        }

        let escalate = |components: &mut Vec<DecComponent>| -> Result<()> {
            let conj = composite_matrix(&hop_gates, &group_qubits)?;
            let inner: Vec<InnerFactor> = members
                .iter()
                .map(|&i| prev.components[i].as_inner())
                .collect();
            let factory = MatrixFactory { conj, inner };
            components.push(if group_qubits.len() == 1 {
                DecComponent::HMatrix {
                    qubit: group_qubits[0].clone(),
                    factory,
                }
            } else {
                DecComponent::CnMatrix {
                    qubits: group_qubits.clone(),
                    factory,
                }
            });
            Ok(())
        };

        if policy == FormPolicy::ForceMatrix {
            escalate(&mut components)?;
            continue;
        }

        // Integer form survives only for a lone qubit that was integer
        // before and whose hop program keeps the sandwich expressible.
        let keep_integer = if let [single] = members.as_slice() {
            if let DecComponent::Integer { qubit, params } = &prev.components[*single] {
                let grp = profile
                    .group_for(qubit)
                    .expect("profiled: program touches this qubit");
                if grp.has_cnot || grp.h_after_ts || grp.z_after_ts {
                    None
                } else {
                    let kinds: Vec<GateKind> = hop_gates.gates.iter().map(Gate::kind).collect();
                    let updated = integer_update(*params, &grp.counts);
                    match phase_walk(*params, &kinds) {
                        Some(phi) if (updated.phi_quarters() - phi).rem_euclid(8) == 0 => {
                            Some(DecComponent::Integer {
                                qubit: qubit.clone(),
                                params: updated,
                            })
                        }
                        _ => None,
                    }
                }
            } else {
                None
            }
        } else {
            None
        };

        match keep_integer {
            Some(c) => components.push(c),
            None => escalate(&mut components)?,
        }
    }

    let next = DecTuple { components };
    debug_assert!(
        {
            let mut before: Vec<_> = prev.covered_qubits();
            let mut after: Vec<_> = next.covered_qubits();
            before.sort();
            after.sort();
            before == after
        },
        "tuple update changed qubit coverage"
    );
    Ok(next)
}

/// Per-component right-hand sides of the final decryption equation,
/// with the client's private key substituted.
pub fn final_rhs(dec: &DecTuple, sigma2: Angle) -> Result<Vec<(Vec<QubitId>, ComplexMatrix)>> {
    dec.components
        .iter()
        .map(|c| Ok((c.qubits().to_vec(), c.rhs(sigma2)?)))
        .collect()
}

/// One blinded decryption block sent to the last evaluator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QPrimeItem {
    pub qubits: Vec<QubitId>,
    pub matrix: ComplexMatrix,
}

/// Solve the blinding equation per component. The mask bits stay with the
/// client; only the solved matrices leave.
pub fn client_final(dec: &DecTuple, km: &KeyMaterial, mask: &FinalMask) -> Result<Vec<QPrimeItem>> {
    let mut out = Vec::with_capacity(dec.components.len());
    for (qubits, rhs) in final_rhs(dec, km.sigma2)? {
        let bits: Vec<(u8, u8)> = qubits.iter().map(|q| mask.get(q)).collect::<Result<_>>()?;
        let matrix = solve_blinded(&rhs, km.sigma2, &bits)?;
        out.push(QPrimeItem { qubits, matrix });
    }
    Ok(out)
}

/// The client's last step: `X^a Z^b U(sigma2)` on every qubit.
pub fn client_unmask(sv: &Statevector, km: &KeyMaterial, mask: &FinalMask) -> Result<Statevector> {
    let mut out = sv.clone();
    for q in sv.qubit_ids().to_vec() {
        let (a, b) = mask.get(&q)?;
        out = out.apply_single(&q, &blinding_prefix(a, b, km.sigma2)?)?;
    }
    Ok(out)
}
