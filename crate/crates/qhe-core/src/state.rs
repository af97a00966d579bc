//! Multi-qubit register with explicit entanglement-partition tracking.
//!
//! A register is a set of labelled qubits split into disjoint partitions;
//! each partition carries its own amplitude vector. Partitions only merge
//! (when a multi-qubit gate joins them), never split: entanglement is
//! tracked structurally, not inferred from amplitudes.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::fmt;

use crate::error::{Error, Result};
use crate::linalg::{cnot, hadamard, ComplexMatrix, DEFAULT_TOL};

/// Label of a single qubit.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct QubitId(pub String);

impl QubitId {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for QubitId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for QubitId {
    fn from(s: &str) -> Self {
        QubitId(s.to_string())
    }
}

impl From<String> for QubitId {
    fn from(s: String) -> Self {
        QubitId(s)
    }
}

/// Plaintext description: qubit `i` is `cos(a_i)|0> + sin(a_i)|1>`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaintextSpec {
    pub qubits: Vec<QubitId>,
    pub angles: Vec<f64>,
}

impl PlaintextSpec {
    pub fn new(qubits: Vec<QubitId>, angles: Vec<f64>) -> Result<Self> {
        if qubits.is_empty() {
            return Err(Error::invalid("plaintext must contain at least one qubit"));
        }
        if qubits.len() != angles.len() {
            return Err(Error::invalid("one angle required per qubit"));
        }
        if angles.iter().any(|a| !a.is_finite()) {
            return Err(Error::invalid("plaintext angles must be finite"));
        }
        for (i, q) in qubits.iter().enumerate() {
            if qubits[..i].contains(q) {
                return Err(Error::invalid(format!("duplicate qubit label {q}")));
            }
        }
        Ok(Self { qubits, angles })
    }

    pub fn len(&self) -> usize {
        self.qubits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.qubits.is_empty()
    }
}

/// Measurement basis for check states.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecoyBasis {
    Computational,
    Hadamard,
}

/// One check state: basis and value identify |0>, |1>, |+> or |->,
/// `position` is the insertion index in the transmitted sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecoyState {
    pub basis: DecoyBasis,
    pub value: u8,
    pub position: usize,
}

impl DecoyState {
    pub fn amplitudes(&self) -> [Complex64; 2] {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        match (self.basis, self.value) {
            (DecoyBasis::Computational, 0) => [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)],
            (DecoyBasis::Computational, _) => [Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)],
            (DecoyBasis::Hadamard, 0) => [Complex64::new(h, 0.0), Complex64::new(h, 0.0)],
            (DecoyBasis::Hadamard, _) => [Complex64::new(h, 0.0), Complex64::new(-h, 0.0)],
        }
    }
}

mod amps_serde {
    use num_complex::Complex64;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[Complex64], s: S) -> Result<S::Ok, S::Error> {
        v.iter()
            .map(|c| (c.re, c.im))
            .collect::<Vec<_>>()
            .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Complex64>, D::Error> {
        Ok(Vec::<(f64, f64)>::deserialize(d)?
            .into_iter()
            .map(|(re, im)| Complex64::new(re, im))
            .collect())
    }
}

/// One entanglement partition. The first qubit in `qubits` is the
/// most-significant bit of the amplitude index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    pub qubits: Vec<QubitId>,
    #[serde(with = "amps_serde")]
    pub amps: Vec<Complex64>,
}

impl Partition {
    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }
}

/// Register of labelled qubits in wire order, grouped into partitions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Statevector {
    order: Vec<QubitId>,
    partitions: Vec<Partition>,
}

impl Statevector {
    /// One singleton partition per qubit, amplitudes `(cos a, sin a)`.
    pub fn prepare(spec: &PlaintextSpec) -> Result<Self> {
        let mut partitions = Vec::with_capacity(spec.len());
        for (q, &a) in spec.qubits.iter().zip(&spec.angles) {
            partitions.push(Partition {
                qubits: vec![q.clone()],
                amps: vec![Complex64::new(a.cos(), 0.0), Complex64::new(a.sin(), 0.0)],
            });
        }
        Ok(Self {
            order: spec.qubits.clone(),
            partitions,
        })
    }

    pub fn qubit_ids(&self) -> &[QubitId] {
        &self.order
    }

    pub fn partitions(&self) -> &[Partition] {
        &self.partitions
    }

    pub fn contains(&self, q: &QubitId) -> bool {
        self.order.contains(q)
    }

    fn partition_index(&self, q: &QubitId) -> Result<usize> {
        self.partitions
            .iter()
            .position(|p| p.qubits.contains(q))
            .ok_or_else(|| Error::NotFound(format!("qubit {q}")))
    }

    /// Insert a fresh singleton qubit at a wire position.
    pub fn insert_qubit(
        &mut self,
        position: usize,
        id: QubitId,
        amps: [Complex64; 2],
    ) -> Result<()> {
        if self.contains(&id) {
            return Err(Error::invalid(format!("qubit {id} already present")));
        }
        if position > self.order.len() {
            return Err(Error::invalid(format!(
                "insert position {position} out of range 0..={}",
                self.order.len()
            )));
        }
        self.order.insert(position, id.clone());
        self.partitions.push(Partition {
            qubits: vec![id],
            amps: amps.to_vec(),
        });
        Ok(())
    }

    /// Remove a singleton qubit (a measured check state).
    pub fn remove_singleton(&mut self, id: &QubitId) -> Result<()> {
        let idx = self.partition_index(id)?;
        if self.partitions[idx].qubits.len() != 1 {
            return Err(Error::ProtocolViolation(format!(
                "qubit {id} is entangled and cannot be removed"
            )));
        }
        self.partitions.remove(idx);
        self.order.retain(|q| q != id);
        Ok(())
    }

    /// Apply a 2x2 unitary to one qubit.
    pub fn apply_single(&self, qubit: &QubitId, m: &ComplexMatrix) -> Result<Self> {
        if m.rows() != 2 || m.cols() != 2 {
            return Err(Error::invalid("apply_single expects a 2x2 matrix"));
        }
        self.apply_block(std::slice::from_ref(qubit), m)
    }

    /// Apply CNOT, merging the two partitions if they are distinct.
    pub fn apply_cnot(&self, control: &QubitId, target: &QubitId) -> Result<Self> {
        if control == target {
            return Err(Error::invalid("CNOT control and target must differ"));
        }
        self.apply_block(&[control.clone(), target.clone()], &cnot())
    }

    /// Apply a `2^j x 2^j` unitary to the listed qubits (first listed qubit
    /// is the most significant bit of the matrix index). Partitions of the
    /// listed qubits are merged as needed.
    pub fn apply_block(&self, qubits: &[QubitId], m: &ComplexMatrix) -> Result<Self> {
        let j = qubits.len();
        if j == 0 {
            return Err(Error::invalid("apply_block requires at least one qubit"));
        }
        for (i, q) in qubits.iter().enumerate() {
            if qubits[..i].contains(q) {
                return Err(Error::invalid(format!("duplicate qubit {q} in block")));
            }
        }
        let dim = 1usize << j;
        if m.rows() != dim || m.cols() != dim {
            return Err(Error::invalid(format!(
                "matrix is {}x{} but block has {} qubits",
                m.rows(),
                m.cols(),
                j
            )));
        }
        if !m.is_unitary(DEFAULT_TOL) {
            return Err(Error::invalid("block matrix is not unitary"));
        }

        let mut sv = self.clone();
        let mut involved = Vec::new();
        for q in qubits {
            let idx = sv.partition_index(q)?;
            if !involved.contains(&idx) {
                involved.push(idx);
            }
        }
        involved.sort_unstable();
        let target = involved[0];
        // Merge later partitions into the first, in partition order.
        for &idx in involved[1..].iter().rev() {
            let part = sv.partitions.remove(idx);
            let host = &mut sv.partitions[target];
            let mut merged = Vec::with_capacity(host.amps.len() * part.amps.len());
            for &a in &host.amps {
                for &b in &part.amps {
                    merged.push(a * b);
                }
            }
            host.amps = merged;
            host.qubits.extend(part.qubits);
        }

        let part = &mut sv.partitions[target];
        let r = part.qubits.len();
        let shifts: Vec<usize> = qubits
            .iter()
            .map(|q| {
                let pos = part.qubits.iter().position(|p| p == q).expect("merged");
                r - 1 - pos
            })
            .collect();
        part.amps = apply_on_bits(&part.amps, r, &shifts, m);
        Ok(sv)
    }

    /// Projective measurement of one qubit with collapse. Works on entangled
    /// partitions (used by the channel eavesdropper model).
    pub fn measure_in_basis(
        &self,
        qubit: &QubitId,
        basis: DecoyBasis,
        rng: &mut impl Rng,
    ) -> Result<(Self, u8)> {
        match basis {
            DecoyBasis::Computational => self.measure_computational(qubit, rng),
            DecoyBasis::Hadamard => {
                let h = hadamard();
                let rotated = self.apply_single(qubit, &h)?;
                let (collapsed, outcome) = rotated.measure_computational(qubit, rng)?;
                Ok((collapsed.apply_single(qubit, &h)?, outcome))
            }
        }
    }

    fn measure_computational(&self, qubit: &QubitId, rng: &mut impl Rng) -> Result<(Self, u8)> {
        let mut sv = self.clone();
        let idx = sv.partition_index(qubit)?;
        let part = &mut sv.partitions[idx];
        let r = part.qubits.len();
        let pos = part.qubits.iter().position(|p| p == qubit).unwrap();
        let shift = r - 1 - pos;
        let p1: f64 = part
            .amps
            .iter()
            .enumerate()
            .filter(|(i, _)| i >> shift & 1 == 1)
            .map(|(_, a)| a.norm_sqr())
            .sum();
        let outcome = u8::from(rng.gen::<f64>() < p1.clamp(0.0, 1.0));
        let keep = outcome as usize;
        let p_keep = if outcome == 1 { p1 } else { 1.0 - p1 };
        let scale = 1.0 / p_keep.max(f64::MIN_POSITIVE).sqrt();
        for (i, a) in part.amps.iter_mut().enumerate() {
            if i >> shift & 1 == keep {
                *a *= scale;
            } else {
                *a = Complex64::new(0.0, 0.0);
            }
        }
        Ok((sv, outcome))
    }

    /// Measure a check state. The decoy must still be a singleton partition.
    pub fn measure_decoy(
        &self,
        qubit: &QubitId,
        basis: DecoyBasis,
        rng: &mut impl Rng,
    ) -> Result<(Self, u8)> {
        let idx = self.partition_index(qubit)?;
        if self.partitions[idx].qubits.len() != 1 {
            return Err(Error::ProtocolViolation(format!(
                "check state {qubit} became entangled"
            )));
        }
        self.measure_in_basis(qubit, basis, rng)
    }

    /// Expand to a single amplitude vector over the requested qubit order.
    pub fn to_dense(&self, order: &[QubitId]) -> Result<Vec<Complex64>> {
        if order.len() != self.order.len() {
            return Err(Error::invalid("qubit order must cover the register"));
        }
        for q in order {
            if !self.contains(q) {
                return Err(Error::NotFound(format!("qubit {q}")));
            }
        }
        // Tensor partitions together, then permute to the requested order.
        let mut amps = vec![Complex64::new(1.0, 0.0)];
        let mut natural: Vec<&QubitId> = Vec::new();
        for part in &self.partitions {
            let mut next = Vec::with_capacity(amps.len() * part.amps.len());
            for &a in &amps {
                for &b in &part.amps {
                    next.push(a * b);
                }
            }
            amps = next;
            natural.extend(part.qubits.iter());
        }
        let n = natural.len();
        let src_shift: Vec<usize> = order
            .iter()
            .map(|q| {
                let pos = natural.iter().position(|p| *p == q).unwrap();
                n - 1 - pos
            })
            .collect();
        let mut out = vec![Complex64::new(0.0, 0.0); amps.len()];
        for (dst, slot) in out.iter_mut().enumerate() {
            let mut src = 0usize;
            for (k, &s) in src_shift.iter().enumerate() {
                if dst >> (n - 1 - k) & 1 == 1 {
                    src |= 1 << s;
                }
            }
            *slot = amps[src];
        }
        Ok(out)
    }

    pub fn partition_norms(&self) -> Vec<f64> {
        self.partitions.iter().map(Partition::norm).collect()
    }
}

fn apply_on_bits(
    amps: &[Complex64],
    r: usize,
    shifts: &[usize],
    m: &ComplexMatrix,
) -> Vec<Complex64> {
    let j = shifts.len();
    let sub_dim = 1usize << j;
    let listed_mask: usize = shifts.iter().map(|&s| 1usize << s).sum();
    let spread = |bits: usize| -> usize {
        let mut out = 0;
        for (i, &s) in shifts.iter().enumerate() {
            if bits >> (j - 1 - i) & 1 == 1 {
                out |= 1 << s;
            }
        }
        out
    };
    let mut out = vec![Complex64::new(0.0, 0.0); 1 << r];
    for base in 0..1usize << r {
        if base & listed_mask != 0 {
            continue;
        }
        for row in 0..sub_dim {
            let mut acc = Complex64::new(0.0, 0.0);
            for col in 0..sub_dim {
                acc += m.get(row, col) * amps[base | spread(col)];
            }
            out[base | spread(row)] = acc;
        }
    }
    out
}

/// True iff `a = c * b` entrywise for some unit complex `c`, after aligning
/// both registers on a common dense expansion.
pub fn equal_up_to_global_phase(a: &Statevector, b: &Statevector, tol: f64) -> Result<bool> {
    let (va, vb) = align(a, b)?;
    let (i, max) = va
        .iter()
        .enumerate()
        .map(|(i, v)| (i, v.norm()))
        .fold((0, 0.0), |acc, cur| if cur.1 > acc.1 { cur } else { acc });
    if max < tol {
        return Err(Error::invalid("cannot phase-align a near-zero state"));
    }
    let c = vb[i] / va[i];
    if (c.norm() - 1.0).abs() > tol {
        return Ok(false);
    }
    Ok(va.iter().zip(&vb).all(|(x, y)| (y - c * x).norm() <= tol))
}

/// Entrywise equality on the common dense expansion.
pub fn equal_exact(a: &Statevector, b: &Statevector, tol: f64) -> Result<bool> {
    let (va, vb) = align(a, b)?;
    Ok(va.iter().zip(&vb).all(|(x, y)| (y - x).norm() <= tol))
}

/// `|<a|b>|^2` over the common dense expansion.
pub fn fidelity(a: &Statevector, b: &Statevector) -> Result<f64> {
    let (va, vb) = align(a, b)?;
    let ip: Complex64 = va.iter().zip(&vb).map(|(x, y)| x.conj() * y).sum();
    Ok(ip.norm_sqr())
}

fn align(a: &Statevector, b: &Statevector) -> Result<(Vec<Complex64>, Vec<Complex64>)> {
    let mut sa: Vec<_> = a.qubit_ids().to_vec();
    let mut sb: Vec<_> = b.qubit_ids().to_vec();
    sa.sort();
    sb.sort();
    if sa != sb {
        return Err(Error::invalid("states are over different qubit sets"));
    }
    Ok((a.to_dense(a.qubit_ids())?, b.to_dense(a.qubit_ids())?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{e_phase, pauli_x, u_rot};
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;
    use std::f64::consts::FRAC_PI_4;

    fn q(s: &str) -> QubitId {
        QubitId::from(s)
    }

    fn single(angle: f64) -> Statevector {
        Statevector::prepare(&PlaintextSpec::new(vec![q("q0")], vec![angle]).unwrap()).unwrap()
    }

    #[test]
    fn prepare_basis_states() {
        let sv = single(0.0);
        assert!((sv.partitions()[0].amps[0].re - 1.0).abs() < 1e-15);
        assert!(sv.partitions()[0].amps[1].norm() < 1e-15);

        let plus = single(FRAC_PI_4);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((plus.partitions()[0].amps[0].re - h).abs() < 1e-15);
        assert!((plus.partitions()[0].amps[1].re - h).abs() < 1e-15);
    }

    #[test]
    fn prepare_two_singletons() {
        let spec = PlaintextSpec::new(vec![q("a"), q("b")], vec![0.3, 1.2]).unwrap();
        let sv = Statevector::prepare(&spec).unwrap();
        assert_eq!(sv.partitions().len(), 2);
        assert!((sv.partitions()[0].amps[0].re - 0.3f64.cos()).abs() < 1e-15);
        assert!((sv.partitions()[1].amps[1].re - 1.2f64.sin()).abs() < 1e-15);
    }

    #[test]
    fn prepare_rejects_empty() {
        assert!(PlaintextSpec::new(vec![], vec![]).is_err());
    }

    #[test]
    fn apply_x_flips() {
        let sv = single(0.0).apply_single(&q("q0"), &pauli_x()).unwrap();
        assert!(sv.partitions()[0].amps[0].norm() < 1e-15);
        assert!((sv.partitions()[0].amps[1].re - 1.0).abs() < 1e-15);
    }

    #[test]
    fn apply_u_rot_shifts_angle() {
        let (alpha, gamma) = (0.2, 0.5);
        let sv = single(alpha)
            .apply_single(&q("q0"), &u_rot(gamma).unwrap())
            .unwrap();
        let amps = &sv.partitions()[0].amps;
        assert!((amps[0].re - (alpha + gamma).cos()).abs() < 1e-12);
        assert!((amps[1].re - (alpha + gamma).sin()).abs() < 1e-12);
    }

    #[test]
    fn apply_e_phase_phases_one_component() {
        let (alpha, beta) = (0.4, 1.0);
        let sv = single(alpha)
            .apply_single(&q("q0"), &e_phase(beta).unwrap())
            .unwrap();
        let amps = &sv.partitions()[0].amps;
        assert!((amps[0].re - alpha.cos()).abs() < 1e-12);
        let expect = Complex64::from_polar(alpha.sin(), beta);
        assert!((amps[1] - expect).norm() < 1e-12);
    }

    #[test]
    fn apply_single_unknown_qubit() {
        let sv = single(0.0);
        assert!(matches!(
            sv.apply_single(&q("nope"), &pauli_x()),
            Err(Error::NotFound(_))
        ));
    }

    #[test]
    fn apply_single_rejects_non_unitary() {
        let sv = single(0.0);
        let bad = ComplexMatrix::from_real(2, 2, &[1.0, 0.0, 0.0, 2.0]).unwrap();
        assert!(sv.apply_single(&q("q0"), &bad).is_err());
    }

    #[test]
    fn cnot_truth_table_and_merge() {
        // |10> -> |11>
        let spec = PlaintextSpec::new(vec![q("c"), q("t")], vec![std::f64::consts::FRAC_PI_2, 0.0])
            .unwrap();
        let sv = Statevector::prepare(&spec).unwrap();
        let out = sv.apply_cnot(&q("c"), &q("t")).unwrap();
        assert_eq!(out.partitions().len(), 1);
        assert_eq!(out.partitions()[0].qubits.len(), 2);
        let dense = out.to_dense(&[q("c"), q("t")]).unwrap();
        assert!((dense[3].re - 1.0).abs() < 1e-12);

        // |00> -> |00>
        let sv = Statevector::prepare(
            &PlaintextSpec::new(vec![q("c"), q("t")], vec![0.0, 0.0]).unwrap(),
        )
        .unwrap();
        let out = sv.apply_cnot(&q("c"), &q("t")).unwrap();
        let dense = out.to_dense(&[q("c"), q("t")]).unwrap();
        assert!((dense[0].re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cnot_rejects_equal_operands() {
        let sv = single(0.0);
        assert!(sv.apply_cnot(&q("q0"), &q("q0")).is_err());
    }

    #[test]
    fn block_identity_is_noop() {
        let spec = PlaintextSpec::new(vec![q("a"), q("b")], vec![0.3, 0.9]).unwrap();
        let sv = Statevector::prepare(&spec).unwrap();
        let out = sv
            .apply_block(&[q("a"), q("b")], &ComplexMatrix::identity(4))
            .unwrap();
        let da = sv.to_dense(&[q("a"), q("b")]).unwrap();
        let db = out.to_dense(&[q("a"), q("b")]).unwrap();
        for (x, y) in da.iter().zip(&db) {
            assert!((x - y).norm() < 1e-12);
        }
    }

    #[test]
    fn block_tensor_equals_per_qubit_application() {
        let gamma = 0.9;
        let spec = PlaintextSpec::new(vec![q("a"), q("b")], vec![0.25, 1.4]).unwrap();
        let sv = Statevector::prepare(&spec).unwrap();
        let u = u_rot(gamma).unwrap();
        let blocked = sv.apply_block(&[q("a"), q("b")], &u.tensor(&u)).unwrap();
        let single = sv
            .apply_single(&q("a"), &u)
            .unwrap()
            .apply_single(&q("b"), &u)
            .unwrap();
        let da = blocked.to_dense(&[q("a"), q("b")]).unwrap();
        let db = single.to_dense(&[q("a"), q("b")]).unwrap();
        for (x, y) in da.iter().zip(&db) {
            assert!((x - y).norm() < 1e-12);
        }
    }

    #[test]
    fn block_respects_listed_order() {
        // Applying CNOT with reversed listing swaps control/target roles.
        let spec = PlaintextSpec::new(vec![q("a"), q("b")], vec![0.0, std::f64::consts::FRAC_PI_2])
            .unwrap();
        let sv = Statevector::prepare(&spec).unwrap(); // |0>|1>
        let out = sv.apply_block(&[q("b"), q("a")], &cnot()).unwrap();
        let dense = out.to_dense(&[q("a"), q("b")]).unwrap();
        // control b=1 flips a: |11>
        assert!((dense[3].re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn measure_decoy_eigenstate_is_deterministic() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        for value in [0u8, 1u8] {
            for basis in [DecoyBasis::Computational, DecoyBasis::Hadamard] {
                let d = DecoyState {
                    basis,
                    value,
                    position: 0,
                };
                let mut sv = single(0.0);
                sv.insert_qubit(0, q("d"), d.amplitudes()).unwrap();
                for _ in 0..32 {
                    let (_, outcome) = sv.measure_decoy(&q("d"), basis, &mut rng).unwrap();
                    assert_eq!(outcome, value);
                }
            }
        }
    }

    #[test]
    fn measure_zero_in_hadamard_is_unbiased() {
        let mut rng = ChaCha12Rng::seed_from_u64(42);
        let trials = 10_000;
        let mut ones = 0u32;
        for _ in 0..trials {
            let mut sv = single(0.3);
            sv.insert_qubit(
                0,
                q("d"),
                [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)],
            )
            .unwrap();
            let (_, outcome) = sv
                .measure_decoy(&q("d"), DecoyBasis::Hadamard, &mut rng)
                .unwrap();
            ones += u32::from(outcome);
        }
        // chi-squared with 1 dof against p = 1/2
        let expect = trials as f64 / 2.0;
        let zeros = trials as f64 - f64::from(ones);
        let chi2 = (f64::from(ones) - expect).powi(2) / expect + (zeros - expect).powi(2) / expect;
        assert!(chi2 < 6.63, "chi2 = {chi2}");
    }

    #[test]
    fn intercept_resend_flips_decoy_with_quarter_probability() {
        // Eve measures in a uniformly random basis and resends; the
        // legitimate measurement then flips with probability 1/4.
        let mut rng = ChaCha12Rng::seed_from_u64(2024);
        let trials = 10_000;
        let mut flips = 0u32;
        for t in 0..trials {
            let d = DecoyState {
                basis: if t % 2 == 0 {
                    DecoyBasis::Computational
                } else {
                    DecoyBasis::Hadamard
                },
                value: u8::from(t % 4 < 2),
                position: 0,
            };
            let mut sv = single(0.9);
            sv.insert_qubit(0, q("d"), d.amplitudes()).unwrap();
            let eve_basis = if rng.gen::<bool>() {
                DecoyBasis::Computational
            } else {
                DecoyBasis::Hadamard
            };
            let (sv, _) = sv.measure_in_basis(&q("d"), eve_basis, &mut rng).unwrap();
            let (_, outcome) = sv.measure_decoy(&q("d"), d.basis, &mut rng).unwrap();
            flips += u32::from(outcome != d.value);
        }
        let rate = f64::from(flips) / f64::from(trials);
        assert!((rate - 0.25).abs() < 0.02, "flip rate {rate}");
    }

    #[test]
    fn entangled_decoy_is_protocol_violation() {
        let spec = PlaintextSpec::new(vec![q("a"), q("b")], vec![0.3, 0.0]).unwrap();
        let sv = Statevector::prepare(&spec).unwrap();
        let sv = sv.apply_cnot(&q("a"), &q("b")).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        assert!(matches!(
            sv.measure_decoy(&q("b"), DecoyBasis::Computational, &mut rng),
            Err(Error::ProtocolViolation(_))
        ));
    }

    #[test]
    fn global_phase_comparison() {
        let a = single(0.3);
        let mut b = a.clone();
        b.partitions[0].amps = b.partitions[0]
            .amps
            .iter()
            .map(|&v| v * Complex64::from_polar(1.0, FRAC_PI_4))
            .collect();
        assert!(equal_up_to_global_phase(&a, &b, 1e-12).unwrap());
        let mut neg = a.clone();
        neg.partitions[0].amps = neg.partitions[0].amps.iter().map(|&v| -v).collect();
        assert!(equal_up_to_global_phase(&a, &neg, 1e-12).unwrap());

        let zero = single(0.0);
        let one = single(std::f64::consts::FRAC_PI_2);
        assert!(!equal_up_to_global_phase(&zero, &one, 1e-9).unwrap());
        assert!(!equal_exact(&a, &neg, 1e-9).unwrap());
    }

    #[test]
    fn comparison_rejects_mismatched_qubit_sets() {
        let a = single(0.1);
        let spec = PlaintextSpec::new(vec![q("zz")], vec![0.1]).unwrap();
        let b = Statevector::prepare(&spec).unwrap();
        assert!(equal_up_to_global_phase(&a, &b, 1e-9).is_err());
    }

    #[test]
    fn norms_preserved_across_operations() {
        let spec = PlaintextSpec::new(vec![q("a"), q("b"), q("c")], vec![0.3, 0.8, 2.1]).unwrap();
        let mut sv = Statevector::prepare(&spec).unwrap();
        sv = sv.apply_single(&q("a"), &hadamard()).unwrap();
        sv = sv.apply_cnot(&q("a"), &q("b")).unwrap();
        sv = sv.apply_single(&q("b"), &e_phase(0.9).unwrap()).unwrap();
        sv = sv.apply_cnot(&q("b"), &q("c")).unwrap();
        for n in sv.partition_norms() {
            assert!((n - 1.0).abs() < 1e-9);
        }
        assert_eq!(sv.partitions().len(), 1);
    }

    #[test]
    fn statevector_serde_round_trip() {
        let spec = PlaintextSpec::new(vec![q("a"), q("b")], vec![0.3, 0.8]).unwrap();
        let sv = Statevector::prepare(&spec)
            .unwrap()
            .apply_cnot(&q("a"), &q("b"))
            .unwrap();
        let text = serde_json::to_string(&sv).unwrap();
        let back: Statevector = serde_json::from_str(&text).unwrap();
        assert_eq!(sv, back);
    }
}
