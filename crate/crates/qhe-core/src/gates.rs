//! The universal gate set, per-evaluator gate programs, and the
//! classification metadata that drives the decryption-tuple rules.
//!
//! Program text syntax (shared with the CLI): one gate statement per
//! whitespace-separated token group, e.g. `X q0` or `CNOT q0 q1`,
//! ordered left to right as applied.

use serde::{Deserialize, Serialize};
use std::fmt;

use crate::error::{Error, Result};
use crate::linalg::{cnot, e_phase, hadamard, pauli_x, pauli_y, pauli_z, ComplexMatrix};
use crate::state::QubitId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GateKind {
    X,
    Y,
    Z,
    H,
    S,
    T,
    Cnot,
}

impl GateKind {
    pub fn arity(self) -> usize {
        match self {
            GateKind::Cnot => 2,
            _ => 1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            GateKind::X => "X",
            GateKind::Y => "Y",
            GateKind::Z => "Z",
            GateKind::H => "H",
            GateKind::S => "S",
            GateKind::T => "T",
            GateKind::Cnot => "CNOT",
        }
    }

    fn from_str(s: &str) -> Option<Self> {
        match s {
            "X" => Some(GateKind::X),
            "Y" => Some(GateKind::Y),
            "Z" => Some(GateKind::Z),
            "H" => Some(GateKind::H),
            "S" => Some(GateKind::S),
            "T" => Some(GateKind::T),
            "CNOT" => Some(GateKind::Cnot),
            _ => None,
        }
    }
}

/// One gate applied to named qubits.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Gate {
    Single { kind: GateKind, qubit: QubitId },
    Cnot { control: QubitId, target: QubitId },
}

impl Gate {
    pub fn single(kind: GateKind, qubit: impl Into<QubitId>) -> Result<Self> {
        if kind == GateKind::Cnot {
            return Err(Error::invalid("CNOT requires control and target"));
        }
        Ok(Gate::Single {
            kind,
            qubit: qubit.into(),
        })
    }

    pub fn cnot(control: impl Into<QubitId>, target: impl Into<QubitId>) -> Result<Self> {
        let control = control.into();
        let target = target.into();
        if control == target {
            return Err(Error::invalid("CNOT operands must be distinct"));
        }
        Ok(Gate::Cnot { control, target })
    }

    pub fn kind(&self) -> GateKind {
        match self {
            Gate::Single { kind, .. } => *kind,
            Gate::Cnot { .. } => GateKind::Cnot,
        }
    }

    pub fn operands(&self) -> Vec<&QubitId> {
        match self {
            Gate::Single { qubit, .. } => vec![qubit],
            Gate::Cnot { control, target } => vec![control, target],
        }
    }
}

impl fmt::Display for Gate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Gate::Single { kind, qubit } => write!(f, "{} {}", kind.as_str(), qubit),
            Gate::Cnot { control, target } => write!(f, "CNOT {control} {target}"),
        }
    }
}

/// Standard 2x2 matrix of a single-qubit gate, or the 4x4 CNOT.
pub fn gate_matrix(kind: GateKind) -> ComplexMatrix {
    match kind {
        GateKind::X => pauli_x(),
        GateKind::Y => pauli_y(),
        GateKind::Z => pauli_z(),
        GateKind::H => hadamard(),
        GateKind::S => e_phase(std::f64::consts::FRAC_PI_2).unwrap(),
        GateKind::T => e_phase(std::f64::consts::FRAC_PI_4).unwrap(),
        GateKind::Cnot => cnot(),
    }
}

/// Ordered list of gates applied by one evaluator.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct GateProgram {
    pub gates: Vec<Gate>,
}

impl GateProgram {
    pub fn new(gates: Vec<Gate>) -> Self {
        Self { gates }
    }

    pub fn is_empty(&self) -> bool {
        self.gates.is_empty()
    }

    /// Parse the shared text syntax, e.g. `"X q0 CNOT q0 q1"`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut tokens = text.split_whitespace().peekable();
        let mut gates = Vec::new();
        while let Some(tok) = tokens.next() {
            let kind = GateKind::from_str(tok)
                .ok_or_else(|| Error::invalid(format!("unknown gate `{tok}`")))?;
            let mut operands = Vec::new();
            for _ in 0..kind.arity() {
                let operand = tokens
                    .next()
                    .ok_or_else(|| Error::invalid(format!("gate {tok} is missing an operand")))?;
                operands.push(QubitId::from(operand));
            }
            let gate = match kind {
                GateKind::Cnot => Gate::cnot(operands[0].clone(), operands[1].clone())?,
                _ => Gate::single(kind, operands[0].clone())?,
            };
            gates.push(gate);
        }
        Ok(Self { gates })
    }

    /// Qubits referenced by the program, in first-use order.
    pub fn touched_qubits(&self) -> Vec<QubitId> {
        let mut out: Vec<QubitId> = Vec::new();
        for g in &self.gates {
            for q in g.operands() {
                if !out.contains(q) {
                    out.push(q.clone());
                }
            }
        }
        out
    }

    /// Gates whose operands all lie inside `group`, preserving order.
    pub fn restricted_to(&self, group: &[QubitId]) -> GateProgram {
        GateProgram {
            gates: self
                .gates
                .iter()
                .filter(|g| g.operands().iter().all(|q| group.contains(q)))
                .cloned()
                .collect(),
        }
    }
}

impl fmt::Display for GateProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, g) in self.gates.iter().enumerate() {
            if i > 0 {
                write!(f, " ")?;
            }
            write!(f, "{g}")?;
        }
        Ok(())
    }
}

/// Per-qubit gate counters used by the integer decryption rules.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateCounts {
    pub x: u32,
    pub y: u32,
    pub z: u32,
    pub h: u32,
    pub t: u32,
    pub s: u32,
    /// X / Y gates strictly after the first T on the same qubit.
    pub x_after_t: u32,
    pub y_after_t: u32,
    /// X / Y gates strictly after the first S on the same qubit.
    pub x_after_s: u32,
    pub y_after_s: u32,
}

impl GateCounts {
    /// Contribution to the sign counter: one per X, Z or H.
    pub fn eta_contribution(&self) -> u32 {
        self.x + self.z + self.h
    }

    pub fn single_gate_total(&self) -> u32 {
        self.x + self.y + self.z + self.h + self.t + self.s
    }

    pub fn has_ts(&self) -> bool {
        self.t > 0 || self.s > 0
    }
}

/// Classification of one qubit group within a single evaluator's program.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupProfile {
    /// Qubits touched as one entangled block (singleton when no CNOT).
    pub qubits: Vec<QubitId>,
    pub has_cnot: bool,
    /// Aggregated counts over the group's qubits.
    pub counts: GateCounts,
    /// Some H on a member qubit comes after a T or S on that qubit.
    pub h_after_ts: bool,
    /// Some Z on a member qubit comes after a T or S on that qubit.
    pub z_after_ts: bool,
}

/// Classification of a whole program: one profile per qubit group, where
/// groups are the connected components induced by CNOT operand pairs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProgramProfile {
    pub groups: Vec<GroupProfile>,
}

impl ProgramProfile {
    pub fn group_for(&self, qubit: &QubitId) -> Option<&GroupProfile> {
        self.groups.iter().find(|g| g.qubits.contains(qubit))
    }
}

/// Compute per-group counts and flags for one evaluator's program.
pub fn profile(program: &GateProgram) -> ProgramProfile {
    let touched = program.touched_qubits();
    // Connected components over CNOT pairs, in first-use order.
    let mut groups: Vec<Vec<QubitId>> = touched.iter().map(|q| vec![q.clone()]).collect();
    for g in &program.gates {
        if let Gate::Cnot { control, target } = g {
            let ci = groups.iter().position(|grp| grp.contains(control)).unwrap();
            let ti = groups.iter().position(|grp| grp.contains(target)).unwrap();
            if ci != ti {
                let (keep, drop) = (ci.min(ti), ci.max(ti));
                let moved = groups.remove(drop);
                groups[keep].extend(moved);
            }
        }
    }

    let mut out = Vec::with_capacity(groups.len());
    for qubits in groups {
        let mut counts = GateCounts::default();
        let mut has_cnot = false;
        let mut h_after_ts = false;
        let mut z_after_ts = false;
        for q in &qubits {
            let mut seen_t = false;
            let mut seen_s = false;
            for g in &program.gates {
                match g {
                    Gate::Cnot { control, target } if control == q || target == q => {
                        has_cnot = true;
                    }
                    Gate::Single { kind, qubit } if qubit == q => match kind {
                        GateKind::X => {
                            counts.x += 1;
                            counts.x_after_t += u32::from(seen_t);
                            counts.x_after_s += u32::from(seen_s);
                        }
                        GateKind::Y => {
                            counts.y += 1;
                            counts.y_after_t += u32::from(seen_t);
                            counts.y_after_s += u32::from(seen_s);
                        }
                        GateKind::Z => {
                            counts.z += 1;
                            z_after_ts |= seen_t || seen_s;
                        }
                        GateKind::H => {
                            counts.h += 1;
                            h_after_ts |= seen_t || seen_s;
                        }
                        GateKind::S => {
                            counts.s += 1;
                            seen_s = true;
                        }
                        GateKind::T => {
                            counts.t += 1;
                            seen_t = true;
                        }
                        GateKind::Cnot => unreachable!(),
                    },
                    _ => {}
                }
            }
        }
        out.push(GroupProfile {
            qubits,
            has_cnot,
            counts,
            h_after_ts,
            z_after_ts,
        });
    }
    ProgramProfile { groups: out }
}

/// Product of all gate matrices of `program` lifted to the group's
/// dimension, later gates multiplied on the left. The first qubit in
/// `group` is the most significant bit.
pub fn composite_matrix(program: &GateProgram, group: &[QubitId]) -> Result<ComplexMatrix> {
    let j = group.len();
    let dim = 1usize << j;
    let pos = |q: &QubitId| -> Result<usize> {
        group
            .iter()
            .position(|g| g == q)
            .ok_or_else(|| Error::invalid(format!("operand {q} outside group")))
    };
    let mut acc = ComplexMatrix::identity(dim);
    for gate in &program.gates {
        let lifted = match gate {
            Gate::Single { kind, qubit } => lift_single(&gate_matrix(*kind), pos(qubit)?, j),
            Gate::Cnot { control, target } => lift_cnot(pos(control)?, pos(target)?, j),
        };
        acc = &lifted * &acc;
    }
    Ok(acc)
}

fn lift_single(m: &ComplexMatrix, position: usize, j: usize) -> ComplexMatrix {
    let mut acc = ComplexMatrix::identity(1);
    for i in 0..j {
        let factor = if i == position {
            m.clone()
        } else {
            ComplexMatrix::identity(2)
        };
        acc = acc.tensor(&factor);
    }
    acc
}

fn lift_cnot(control: usize, target: usize, j: usize) -> ComplexMatrix {
    let dim = 1usize << j;
    let cshift = j - 1 - control;
    let tshift = j - 1 - target;
    let mut out = ComplexMatrix::zeros(dim, dim);
    for col in 0..dim {
        let row = if col >> cshift & 1 == 1 {
            col ^ (1 << tshift)
        } else {
            col
        };
        out.set(row, col, num_complex::Complex64::new(1.0, 0.0));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::{PlaintextSpec, Statevector};
    use std::f64::consts::FRAC_PI_2;

    fn q(s: &str) -> QubitId {
        QubitId::from(s)
    }

    #[test]
    fn gate_matrix_definitions() {
        assert!(gate_matrix(GateKind::S).approx_eq(&e_phase(FRAC_PI_2).unwrap(), 1e-15));
        // T^4 = Z
        let t = gate_matrix(GateKind::T);
        let t4 = &(&(&t * &t) * &t) * &t;
        assert!(t4.approx_eq(&pauli_z(), 1e-12));
        // CNOT |10> = |11>
        let v = gate_matrix(GateKind::Cnot)
            .apply(&[
                num_complex::Complex64::new(0.0, 0.0),
                num_complex::Complex64::new(0.0, 0.0),
                num_complex::Complex64::new(1.0, 0.0),
                num_complex::Complex64::new(0.0, 0.0),
            ])
            .unwrap();
        assert!((v[3].re - 1.0).abs() < 1e-15);
        assert!(v[2].norm() < 1e-15);
    }

    #[test]
    fn parse_and_display_round_trip() {
        let p = GateProgram::parse("X q0 CNOT q0 q1 T q1").unwrap();
        assert_eq!(p.gates.len(), 3);
        assert_eq!(p.to_string(), "X q0 CNOT q0 q1 T q1");
        let back = GateProgram::parse(&p.to_string()).unwrap();
        assert_eq!(p, back);
    }

    #[test]
    fn parse_errors() {
        assert!(GateProgram::parse("Q q0").is_err());
        assert!(GateProgram::parse("CNOT q0").is_err());
        assert!(GateProgram::parse("X").is_err());
    }

    #[test]
    fn profile_zhy_single_qubit() {
        let p = GateProgram::parse("Z q0 H q0 Y q0").unwrap();
        let prof = profile(&p);
        assert_eq!(prof.groups.len(), 1);
        let g = &prof.groups[0];
        let c = g.counts;
        assert_eq!((c.x, c.y, c.z, c.h, c.t, c.s), (0, 1, 1, 1, 0, 0));
        assert_eq!(c.eta_contribution(), 2);
        assert!(!g.has_cnot && !g.h_after_ts);
    }

    #[test]
    fn profile_worked_ts_example() {
        // Time order X H T X T X Y S: three X and one H give eta
        // contribution 4; two X and one Y follow the first T; nothing
        // follows the S.
        let p = GateProgram::parse("X q H q T q X q T q X q Y q S q").unwrap();
        let prof = profile(&p);
        let c = prof.groups[0].counts;
        assert_eq!((c.x, c.y, c.z, c.h, c.t, c.s), (3, 1, 0, 1, 2, 1));
        assert_eq!(c.eta_contribution(), 4);
        assert_eq!(c.x_after_t + c.y_after_t, 3);
        assert_eq!(c.x_after_s + c.y_after_s, 0);
        assert!(!prof.groups[0].h_after_ts, "H precedes every T and S");
    }

    #[test]
    fn profile_empty_program() {
        let prof = profile(&GateProgram::default());
        assert!(prof.groups.is_empty());
    }

    #[test]
    fn profile_counts_sum_per_qubit() {
        let p = GateProgram::parse("X a Y a S a H b T b Z a").unwrap();
        let prof = profile(&p);
        let ga = prof.group_for(&q("a")).unwrap();
        assert_eq!(ga.counts.single_gate_total(), 4);
        let gb = prof.group_for(&q("b")).unwrap();
        assert_eq!(gb.counts.single_gate_total(), 2);
    }

    #[test]
    fn profile_groups_by_cnot_components() {
        let p = GateProgram::parse("CNOT a b X c CNOT b d").unwrap();
        let prof = profile(&p);
        assert_eq!(prof.groups.len(), 2);
        let big = prof.group_for(&q("a")).unwrap();
        assert_eq!(big.qubits.len(), 3);
        assert!(big.has_cnot);
        let small = prof.group_for(&q("c")).unwrap();
        assert_eq!(small.qubits, vec![q("c")]);
        assert!(!small.has_cnot);
    }

    #[test]
    fn profile_flags_h_and_z_after_ts() {
        let p = GateProgram::parse("T a H a").unwrap();
        assert!(profile(&p).groups[0].h_after_ts);
        let p = GateProgram::parse("S a Z a").unwrap();
        assert!(profile(&p).groups[0].z_after_ts);
        let p = GateProgram::parse("H a Z a T a").unwrap();
        let g = &profile(&p).groups[0];
        assert!(!g.h_after_ts && !g.z_after_ts);
    }

    #[test]
    fn composite_single_gate() {
        let p = GateProgram::parse("X q0").unwrap();
        let m = composite_matrix(&p, &[q("q0")]).unwrap();
        assert!(m.approx_eq(&pauli_x(), 1e-15));
    }

    #[test]
    fn composite_example2_word() {
        // X p, Y q, CNOT p q, H p, Z q == (H (x) Z) CNOT (X (x) Y)
        let p = GateProgram::parse("X p Y q CNOT p q H p Z q").unwrap();
        let m = composite_matrix(&p, &[q("p"), q("q")]).unwrap();
        let expect = &(&hadamard().tensor(&pauli_z()) * &cnot()) * &pauli_x().tensor(&pauli_y());
        assert!(m.approx_eq(&expect, 1e-12));
    }

    #[test]
    fn composite_example3_overlapping_cnots() {
        // CNOT o p then CNOT p q over (o, p, q):
        // lift(CNOT_pq) * lift(CNOT_op)
        let p = GateProgram::parse("CNOT o p CNOT p q").unwrap();
        let m = composite_matrix(&p, &[q("o"), q("p"), q("q")]).unwrap();
        let lhs = ComplexMatrix::identity(2).tensor(&cnot());
        let rhs = cnot().tensor(&ComplexMatrix::identity(2));
        assert!(m.approx_eq(&(&lhs * &rhs), 1e-12));
    }

    #[test]
    fn composite_rejects_foreign_operand() {
        let p = GateProgram::parse("X other").unwrap();
        assert!(composite_matrix(&p, &[q("q0")]).is_err());
    }

    #[test]
    fn composite_is_unitary() {
        let p = GateProgram::parse("X a T a CNOT a b H b S b Y a CNOT b a").unwrap();
        let m = composite_matrix(&p, &[q("a"), q("b")]).unwrap();
        assert!(m.is_unitary(1e-9));
    }

    #[test]
    fn composite_matches_gate_by_gate_state_evolution() {
        let prog = GateProgram::parse("H a CNOT a b T b X a CNOT a b S a").unwrap();
        let spec = PlaintextSpec::new(vec![q("a"), q("b")], vec![0.37, 1.21]).unwrap();
        let mut sv = Statevector::prepare(&spec).unwrap();
        for g in &prog.gates {
            sv = match g {
                Gate::Single { kind, qubit } => {
                    sv.apply_single(qubit, &gate_matrix(*kind)).unwrap()
                }
                Gate::Cnot { control, target } => sv.apply_cnot(control, target).unwrap(),
            };
        }
        let group = [q("a"), q("b")];
        let m = composite_matrix(&prog, &group).unwrap();
        let direct = Statevector::prepare(&spec)
            .unwrap()
            .apply_block(&group, &m)
            .unwrap();
        let da = sv.to_dense(&group).unwrap();
        let db = direct.to_dense(&group).unwrap();
        for (x, y) in da.iter().zip(&db) {
            assert!((x - y).norm() < 1e-10);
        }
    }
}
