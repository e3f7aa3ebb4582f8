//! Measurement-based computation on open graphs: graph states and their
//! stabilizers, plane measurements, outcome-controlled correction unitaries,
//! the correction comb of a gflow, and the classical-quantum comb families
//! (gflow mixtures, plane mixtures, frame calibration) built from it.
//!
//! Wire conventions. A block of one gflow lives on positional wires: `A1` is
//! the first qubit handed over, `C1` the outcome returned after it, and so on;
//! unmeasured output qubits occupy the trailing `A` wires in ascending vertex
//! order. The uncontracted correction comb additionally carries the incoming
//! copy of each qubit on `A'v`, indexed by vertex. Bitstrings index vertices
//! big-endian: vertex 1 is the most significant bit.

use crate::combs::{Comb, CombError, TimeStep, TimeStepStructure};
use crate::gflow::{
    correction_sets, induced_dag, orders_compatible, CorrectionSets, Gflow, GflowError, OpenGraph,
    Plane,
};
use crate::operators::{
    c, trace_norm_hermitian, CMat, LabeledOperator, OperatorError, SpaceLayout, SubsystemLabel,
};
use num_complex::Complex64;
use std::collections::BTreeMap;
use thiserror::Error;

/// Densely built graph states stop here (dimension 2^cap).
pub const GRAPH_STATE_QUBIT_CAP: usize = 10;

#[derive(Debug, Error)]
pub enum MbqcError {
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Comb(#[from] CombError),
    #[error(transparent)]
    Gflow(#[from] GflowError),
    #[error("{0} qubits exceed the dense graph-state cap {1}")]
    TooManyQubits(usize, usize),
    #[error("graph has no output qubits, so there is no final slot")]
    NoOutputs,
    #[error("gflow order does not embed into the requested total order")]
    OrderIncompatible,
    #[error("gflows disagree on the plane of vertex {0}")]
    PlaneMismatch(usize),
    #[error("no common total order extends all the gflow orders")]
    IncompatibleOrders,
    #[error("angle count {0} outside the supported range 2..=32")]
    AngleCountOutOfRange(usize),
    #[error("no gflows to group")]
    NoGflows,
}

// ---------------------------------------------------------------------------
// Pauli strings.

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PauliLetter {
    I,
    X,
    Y,
    Z,
}

impl PauliLetter {
    pub fn matrix(self) -> CMat {
        match self {
            PauliLetter::I => CMat::identity(2, 2),
            PauliLetter::X => CMat::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)]),
            PauliLetter::Y => CMat::from_row_slice(2, 2, &[c(0.0, 0.0), c(0.0, -1.0), c(0.0, 1.0), c(0.0, 0.0)]),
            PauliLetter::Z => CMat::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-1.0, 0.0)]),
        }
    }
}

/// Product of two letters as (power of i, resulting letter).
fn letter_mul(a: PauliLetter, b: PauliLetter) -> (u8, PauliLetter) {
    use PauliLetter::*;
    match (a, b) {
        (I, x) | (x, I) => (0, x),
        (X, X) | (Y, Y) | (Z, Z) => (0, I),
        (X, Y) => (1, Z),
        (Y, Z) => (1, X),
        (Z, X) => (1, Y),
        (Y, X) => (3, Z),
        (Z, Y) => (3, X),
        (X, Z) => (3, Y),
    }
}

/// Phase times a tensor product of Pauli letters, indexed by vertex. The
/// phase is stored as a power of i, so group arithmetic stays exact.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PauliString {
    /// Phase is `i^phase_quarter`.
    pub phase_quarter: u8,
    pub letters: BTreeMap<usize, PauliLetter>,
}

impl PauliString {
    pub fn identity() -> Self {
        Self {
            phase_quarter: 0,
            letters: BTreeMap::new(),
        }
    }

    pub fn from_letters(phase_quarter: u8, letters: &[(usize, PauliLetter)]) -> Self {
        let mut map = BTreeMap::new();
        for &(v, l) in letters {
            if l != PauliLetter::I {
                map.insert(v, l);
            }
        }
        Self {
            phase_quarter: phase_quarter % 4,
            letters: map,
        }
    }

    pub fn phase(&self) -> Complex64 {
        match self.phase_quarter % 4 {
            0 => c(1.0, 0.0),
            1 => c(0.0, 1.0),
            2 => c(-1.0, 0.0),
            _ => c(0.0, -1.0),
        }
    }

    pub fn letter(&self, v: usize) -> PauliLetter {
        self.letters.get(&v).copied().unwrap_or(PauliLetter::I)
    }

    pub fn mul(&self, other: &Self) -> Self {
        let mut quarter = (self.phase_quarter + other.phase_quarter) % 4;
        let mut letters = BTreeMap::new();
        let verts: std::collections::BTreeSet<usize> = self
            .letters
            .keys()
            .chain(other.letters.keys())
            .copied()
            .collect();
        for v in verts {
            let (q, l) = letter_mul(self.letter(v), other.letter(v));
            quarter = (quarter + q) % 4;
            if l != PauliLetter::I {
                letters.insert(v, l);
            }
        }
        Self {
            phase_quarter: quarter,
            letters,
        }
    }

    pub fn dagger(&self) -> Self {
        Self {
            phase_quarter: (4 - self.phase_quarter % 4) % 4,
            letters: self.letters.clone(),
        }
    }

    /// Transpose: Y is the only antisymmetric letter.
    pub fn transpose(&self) -> Self {
        let ys = self
            .letters
            .values()
            .filter(|l| **l == PauliLetter::Y)
            .count();
        Self {
            phase_quarter: (self.phase_quarter + 2 * (ys as u8 % 2)) % 4,
            letters: self.letters.clone(),
        }
    }

    /// Dense matrix over vertices `1..=n`, vertex 1 most significant.
    pub fn to_matrix(&self, n: usize) -> CMat {
        let mut out = CMat::from_element(1, 1, self.phase());
        for v in 1..=n {
            out = out.kronecker(&self.letter(v).matrix());
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Graph states.

fn vbit(x: usize, v: usize, n: usize) -> usize {
    (x >> (n - v)) & 1
}

#[derive(Clone, Debug)]
pub struct GraphState {
    n: usize,
    op: LabeledOperator,
}

impl GraphState {
    pub fn n_qubits(&self) -> usize {
        self.n
    }

    /// Density matrix on wires `q1..qn`.
    pub fn op(&self) -> &LabeledOperator {
        &self.op
    }

    /// Largest deviation of `K rho K^dagger` from `rho` over all generators.
    pub fn stabilizer_residual(&self, graph: &OpenGraph) -> f64 {
        let mut worst = 0.0f64;
        let rho = self.op.matrix();
        for v in 1..=self.n {
            let k = stabilizer_generator(graph, v).to_matrix(self.n);
            let fixed = &k * rho * k.adjoint();
            let dev = (&fixed - rho).iter().map(|e| e.norm()).fold(0.0, f64::max);
            worst = worst.max(dev);
        }
        worst
    }
}

/// Generator `K_v = X_v  prod_{w ~ v} Z_w`.
pub fn stabilizer_generator(graph: &OpenGraph, v: usize) -> PauliString {
    let mut letters = vec![(v, PauliLetter::X)];
    for w in graph.neighbors(v) {
        letters.push((w, PauliLetter::Z));
    }
    PauliString::from_letters(0, &letters)
}

fn graph_state_matrix(graph: &OpenGraph) -> CMat {
    let n = graph.n_vertices();
    let d = 1usize << n;
    let norm = 1.0 / (d as f64).sqrt();
    let mut amp = vec![Complex64::new(norm, 0.0); d];
    for (i, j) in graph.edges() {
        for (b, a) in amp.iter_mut().enumerate() {
            if vbit(b, i, n) == 1 && vbit(b, j, n) == 1 {
                *a = -*a;
            }
        }
    }
    CMat::from_fn(d, d, |r, s| amp[r] * amp[s].conj())
}

/// Projector onto the graph state `prod CZ |+..+>`.
pub fn graph_state(graph: &OpenGraph) -> Result<GraphState, MbqcError> {
    let n = graph.n_vertices();
    if n > GRAPH_STATE_QUBIT_CAP {
        return Err(MbqcError::TooManyQubits(n, GRAPH_STATE_QUBIT_CAP));
    }
    let pairs: Vec<(String, usize)> = (1..=n).map(|v| (format!("q{v}"), 2)).collect();
    let factors = pairs
        .iter()
        .map(|(name, dim)| SubsystemLabel::new(name.clone(), *dim))
        .collect();
    let layout = SpaceLayout::new(factors)?;
    let op = LabeledOperator::new(layout, graph_state_matrix(graph))?;
    Ok(GraphState { n, op })
}

// ---------------------------------------------------------------------------
// Plane measurements.

/// Rank-1 projective measurement in one of the three planes. Conventions:
/// `XY` vectors are `(|0> + e^{-i a}|1>)/sqrt(2)`; `XZ` vectors are
/// `cos(a/2)|0> + sin(a/2)|1>`; `YZ` vectors are `cos(a/2)|0> + i sin(a/2)|1>`
/// (both start at +Z for a = 0). The outcome-1 vector uses `a + pi`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlaneMeasurement {
    pub plane: Plane,
    pub angle: f64,
}

impl PlaneMeasurement {
    pub fn new(plane: Plane, angle: f64) -> Self {
        Self {
            plane,
            angle: angle.rem_euclid(2.0 * std::f64::consts::PI),
        }
    }

    pub fn vector(&self, outcome: u8) -> [Complex64; 2] {
        let a = self.angle + if outcome == 1 { std::f64::consts::PI } else { 0.0 };
        match self.plane {
            Plane::XY => {
                let r = 1.0 / 2f64.sqrt();
                [c(r, 0.0), Complex64::from_polar(r, -a)]
            }
            Plane::XZ => [c((a / 2.0).cos(), 0.0), c((a / 2.0).sin(), 0.0)],
            Plane::YZ => [c((a / 2.0).cos(), 0.0), c(0.0, (a / 2.0).sin())],
        }
    }

    pub fn projector(&self, outcome: u8) -> CMat {
        let v = self.vector(outcome);
        CMat::from_fn(2, 2, |i, j| v[i] * v[j].conj())
    }
}

/// Choi operator of the device-side measurement: qubit in, classical bit out,
/// `sum_c |c><c| (x) (projector_c)^T`. Validates as a one-step comb.
pub fn measurement_channel(
    m: &PlaneMeasurement,
    in_label: &str,
    out_label: &str,
) -> Result<LabeledOperator, MbqcError> {
    let layout = SpaceLayout::new(vec![
        SubsystemLabel::new(in_label, 2),
        SubsystemLabel::new(out_label, 2),
    ])?;
    let mut data = CMat::zeros(4, 4);
    for outcome in 0..2u8 {
        let p = m.projector(outcome);
        for a in 0..2 {
            for b in 0..2 {
                // transpose of the projector on the input wire
                data[(a * 2 + outcome as usize, b * 2 + outcome as usize)] = p[(b, a)];
            }
        }
    }
    Ok(LabeledOperator::new(layout, data)?)
}

// ---------------------------------------------------------------------------
// Correction unitaries.

/// Outcome-controlled correction `X^{xor of X-set outcomes} Z^{xor of Z-set
/// outcomes}` per vertex, X written left of Z.
#[derive(Clone, Debug)]
pub struct CorrectionUnitary {
    pub per_vertex: BTreeMap<usize, PauliString>,
    pub assembled: PauliString,
}

pub fn correction_unitary(
    sets: &CorrectionSets,
    outcomes: &BTreeMap<usize, u8>,
) -> CorrectionUnitary {
    let parity = |deps: &[usize]| -> u8 {
        deps.iter()
            .map(|j| outcomes.get(j).copied().unwrap_or(0))
            .fold(0, |acc, b| acc ^ (b & 1))
    };
    let mut per_vertex = BTreeMap::new();
    let mut assembled = PauliString::identity();
    for (&v, xs) in &sets.x_sets {
        let x = parity(xs);
        let z = parity(&sets.z_sets[&v]);
        let s = match (x, z) {
            (0, 0) => PauliString::identity(),
            (1, 0) => PauliString::from_letters(0, &[(v, PauliLetter::X)]),
            (0, 1) => PauliString::from_letters(0, &[(v, PauliLetter::Z)]),
            // X.Z = -iY
            _ => PauliString::from_letters(3, &[(v, PauliLetter::Y)]),
        };
        assembled = assembled.mul(&s);
        per_vertex.insert(v, s);
    }
    CorrectionUnitary {
        per_vertex,
        assembled,
    }
}

// ---------------------------------------------------------------------------
// Slot bookkeeping shared by the comb builders.

struct SlotFrame {
    n: usize,
    /// Measured vertices in hand-over order; slot k carries `measured[k-1]`.
    measured: Vec<usize>,
    outputs: Vec<usize>,
    layout: SpaceLayout,
    structure: TimeStepStructure,
    /// For vertex v, the flat stride of the `A` wire that carries it.
    stride_q: Vec<usize>,
    /// For slot k (1-based), the stride of `Ck`.
    stride_c: Vec<usize>,
    /// Slot index (1-based) of each measured vertex.
    slot_of: BTreeMap<usize, usize>,
}

impl SlotFrame {
    fn new(graph: &OpenGraph, measured_order: &[usize]) -> Result<Self, MbqcError> {
        let n = graph.n_vertices();
        let outputs = graph.outputs();
        if outputs.is_empty() {
            return Err(MbqcError::NoOutputs);
        }
        let m = measured_order.len();
        debug_assert_eq!(m + outputs.len(), n);
        let mut factors = Vec::new();
        let mut steps = Vec::new();
        for k in 1..=m {
            factors.push(SubsystemLabel::new(format!("A{k}"), 2));
            factors.push(SubsystemLabel::new(format!("C{k}"), 2));
            let ins: Vec<String> = if k == 1 {
                vec![]
            } else {
                vec![format!("C{}", k - 1)]
            };
            steps.push(TimeStep::new(&ins, &[format!("A{k}")]));
        }
        let last_ins = vec![format!("C{m}")];
        let mut last_outs = Vec::new();
        for (j, _) in outputs.iter().enumerate() {
            let name = format!("A{}", m + 1 + j);
            factors.push(SubsystemLabel::new(name.clone(), 2));
            last_outs.push(name);
        }
        steps.push(TimeStep::new(&last_ins, &last_outs));
        let layout = SpaceLayout::new(factors)?;
        let structure = TimeStepStructure::new(steps)?;
        let strides = layout.strides();
        let mut stride_q = vec![0usize; n + 1];
        let mut stride_c = vec![0usize; m + 1];
        let mut slot_of = BTreeMap::new();
        for (k, &v) in measured_order.iter().enumerate() {
            stride_q[v] = strides[2 * k];
            stride_c[k + 1] = strides[2 * k + 1];
            slot_of.insert(v, k + 1);
        }
        for (j, &v) in outputs.iter().enumerate() {
            stride_q[v] = strides[2 * m + j];
        }
        Ok(Self {
            n,
            measured: measured_order.to_vec(),
            outputs,
            layout,
            structure,
            stride_q,
            stride_c,
            slot_of,
        })
    }

    fn n_measured(&self) -> usize {
        self.measured.len()
    }

    /// Flat index contribution of an n-bit vertex string on the `A` wires.
    fn q_index(&self, bits: usize) -> usize {
        (1..=self.n)
            .map(|v| vbit(bits, v, self.n) * self.stride_q[v])
            .sum()
    }

    /// Flat index contribution of the outcome string (bit k-1 = slot k).
    fn c_index(&self, cbits: usize) -> usize {
        (1..=self.n_measured())
            .map(|k| ((cbits >> (k - 1)) & 1) * self.stride_c[k])
            .sum()
    }

    /// Outcomes keyed by vertex for a slot-indexed outcome string.
    fn outcomes_by_vertex(&self, cbits: usize) -> BTreeMap<usize, u8> {
        self.measured
            .iter()
            .enumerate()
            .map(|(k, &v)| (v, ((cbits >> k) & 1) as u8))
            .collect()
    }

    /// Wire carrying vertex `v`.
    fn wire_of(&self, v: usize) -> String {
        if let Some(k) = self.slot_of.get(&v) {
            format!("A{k}")
        } else {
            let j = self.outputs.iter().position(|&o| o == v).expect("vertex is measured or output");
            format!("A{}", self.n_measured() + 1 + j)
        }
    }
}

/// The measured prefix of the gflow's lexicographically smallest total order.
fn own_measured_order(gflow: &Gflow, graph: &OpenGraph) -> Vec<usize> {
    let outputs = graph.outputs();
    gflow
        .minimal_total_order(graph.n_vertices())
        .into_iter()
        .filter(|v| !outputs.contains(v))
        .collect()
}

/// Local correction on one qubit: `(R X R^dagger)^x Z^z` with
/// `R = diag(1, e^{i theta})`, X left of Z. `theta = 0` gives plain `X^x Z^z`.
fn u_local(theta: f64, x: u8, z: u8) -> CMat {
    let e_m = Complex64::from_polar(1.0, -theta);
    let e_p = Complex64::from_polar(1.0, theta);
    match (x, z) {
        (0, 0) => CMat::identity(2, 2),
        (0, _) => CMat::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-1.0, 0.0)]),
        (_, 0) => CMat::from_row_slice(2, 2, &[c(0.0, 0.0), e_m, e_p, c(0.0, 0.0)]),
        _ => CMat::from_row_slice(2, 2, &[c(0.0, 0.0), -e_m, e_p, c(0.0, 0.0)]),
    }
}

fn correction_parities(sets: &CorrectionSets, outcomes: &BTreeMap<usize, u8>, v: usize) -> (u8, u8) {
    let parity = |deps: &[usize]| -> u8 {
        deps.iter()
            .map(|j| outcomes.get(j).copied().unwrap_or(0))
            .fold(0, |acc, b| acc ^ (b & 1))
    };
    (parity(&sets.x_sets[&v]), parity(&sets.z_sets[&v]))
}

/// Dense correction unitary for one outcome assignment on `1..=n`.
fn correction_matrix(n: usize, sets: &CorrectionSets, outcomes: &BTreeMap<usize, u8>, theta: f64) -> CMat {
    let mut u = CMat::identity(1, 1);
    for v in 1..=n {
        let (x, z) = correction_parities(sets, outcomes, v);
        u = u.kronecker(&u_local(theta, x, z));
    }
    u
}

/// One gflow's contracted block `sum_c U(c) rho U(c)^dagger (x) |c><c|` on
/// positional wires, optionally in the frame rotated by `theta`.
fn correction_block_with(
    graph: &OpenGraph,
    sets: &CorrectionSets,
    measured_order: &[usize],
    theta: f64,
) -> Result<Comb, MbqcError> {
    let frame = SlotFrame::new(graph, measured_order)?;
    let n = frame.n;
    let m = frame.n_measured();
    let dq = 1usize << n;
    let mut rho = graph_state_matrix(graph);
    if theta != 0.0 {
        // conjugate by diag(1, e^{i theta}) on every qubit
        for r in 0..dq {
            for s in 0..dq {
                let d = r.count_ones() as i32 - s.count_ones() as i32;
                rho[(r, s)] *= Complex64::from_polar(1.0, theta * d as f64);
            }
        }
    }
    let dim = frame.layout.total_dim();
    let mut data = CMat::zeros(dim, dim);
    for cbits in 0..(1usize << m) {
        let outcomes = frame.outcomes_by_vertex(cbits);
        let u = correction_matrix(n, sets, &outcomes, theta);
        let t = &u * &rho * u.adjoint();
        let base = frame.c_index(cbits);
        for i in 0..dq {
            let row = frame.q_index(i) + base;
            for j in 0..dq {
                data[(row, frame.q_index(j) + base)] = t[(i, j)];
            }
        }
    }
    let op = LabeledOperator::new(frame.layout, data)?;
    Ok(Comb::new(op, frame.structure, true)?)
}

/// Correction comb of `gflow` contracted with the graph state, using the
/// gflow's own minimal measurement order for the slots.
pub fn gflow_block(gflow: &Gflow, graph: &OpenGraph) -> Result<Comb, MbqcError> {
    let sets = correction_sets(gflow, graph);
    correction_block_with(graph, &sets, &own_measured_order(gflow, graph), 0.0)
}

/// Uncontracted correction comb `sum_{a,b,c} U(c)|a><b|U(c)^dagger (x)
/// |c,a><c,b|` with the incoming qubit copies on wires `A'v`. The structure
/// is (all `A'` wires -> `A1`), (`C1` -> `A2`), ..., (last outcome -> output
/// qubits).
pub fn build_sigma_mbqc(
    gflow: &Gflow,
    graph: &OpenGraph,
    total_order: &[usize],
) -> Result<Comb, MbqcError> {
    if !gflow.embeds_in(total_order) {
        return Err(MbqcError::OrderIncompatible);
    }
    let outputs = graph.outputs();
    let measured_order: Vec<usize> = total_order
        .iter()
        .copied()
        .filter(|v| !outputs.contains(v))
        .collect();
    let frame = SlotFrame::new(graph, &measured_order)?;
    let n = frame.n;
    let m = frame.n_measured();
    let sets = correction_sets(gflow, graph);

    let mut factors = Vec::new();
    for v in 1..=n {
        factors.push(SubsystemLabel::new(format!("A'{v}"), 2));
    }
    factors.extend(frame.layout.factors().iter().cloned());
    let layout = SpaceLayout::new(factors)?;
    let mut steps: Vec<TimeStep> = frame.structure.steps().to_vec();
    let first_ins: Vec<String> = (1..=n).map(|v| format!("A'{v}")).collect();
    let first_outs = steps[0].outputs.clone();
    steps[0] = TimeStep::new(&first_ins, &first_outs);
    let structure = TimeStepStructure::new(steps)?;

    let strides = layout.strides();
    // the A' wires sit first in the layout and carry strides[v-1]; the frame
    // factors keep their own strides because they form the layout's tail
    let ap_index = |bits: usize| -> usize {
        (1..=n).map(|v| vbit(bits, v, n) * strides[v - 1]).sum()
    };
    let dq = 1usize << n;
    let dim = layout.total_dim();
    let mut data = CMat::zeros(dim, dim);
    for cbits in 0..(1usize << m) {
        let outcomes = frame.outcomes_by_vertex(cbits);
        let u = correction_matrix(n, &sets, &outcomes, 0.0);
        let base = frame.c_index(cbits);
        for a in 0..dq {
            for b in 0..dq {
                for x in 0..dq {
                    let ux = u[(x, a)];
                    if ux.norm_sqr() == 0.0 {
                        continue;
                    }
                    for y in 0..dq {
                        let val = ux * u[(y, b)].conj();
                        if val.norm_sqr() == 0.0 {
                            continue;
                        }
                        let row = ap_index(a) + frame.q_index(x) + base;
                        let col = ap_index(b) + frame.q_index(y) + base;
                        data[(row, col)] += val;
                    }
                }
            }
        }
    }
    let op = LabeledOperator::new(layout, data)?;
    Ok(Comb::new(op, structure, true)?)
}

// ---------------------------------------------------------------------------
// Determinism and structural checks.

/// Measurement-branch states of a block: project the outcome wires on `c`,
/// measure slot k's qubit with `projs[k]` post-selected on outcome `c_k`, and
/// trace the measured wires. Returns the (unnormalized) state on the outputs.
fn branch_state(
    block: &Comb,
    frame: &SlotFrame,
    projs: Option<&[CMat]>,
    cbits: usize,
) -> Result<LabeledOperator, MbqcError> {
    let m = frame.n_measured();
    let mut w = LabeledOperator::scalar(c(1.0, 0.0));
    let mut traced: Vec<String> = Vec::new();
    for k in 1..=m {
        let ck = (cbits >> (k - 1)) & 1;
        let q = match projs {
            Some(ps) => {
                let p = if ck == 0 {
                    ps[k - 1].clone()
                } else {
                    CMat::identity(2, 2) - &ps[k - 1]
                };
                p.transpose()
            }
            None => CMat::identity(2, 2),
        };
        let qa = LabeledOperator::new(
            SpaceLayout::new(vec![SubsystemLabel::new(format!("A{k}"), 2)])?,
            q,
        )?;
        let mut sel = CMat::zeros(2, 2);
        sel[(ck, ck)] = c(1.0, 0.0);
        let cc = LabeledOperator::new(
            SpaceLayout::new(vec![SubsystemLabel::new(format!("C{k}"), 2)])?,
            sel,
        )?;
        w = w.kron(&qa)?.kron(&cc)?;
        traced.push(format!("A{k}"));
        traced.push(format!("C{k}"));
    }
    for j in 0..frame.outputs.len() {
        let name = format!("A{}", m + 1 + j);
        let id = LabeledOperator::identity(SpaceLayout::new(vec![SubsystemLabel::new(
            name, 2,
        )])?);
        w = w.kron(&id)?;
    }
    let prod = w.matmul(&block.op)?;
    let names: Vec<&str> = traced.iter().map(|s| s.as_str()).collect();
    Ok(prod.partial_trace(&names)?)
}

/// Max trace-norm deviation between the post-measurement output states of
/// any outcome branch and the all-zero branch. Angles are keyed by vertex and
/// are expected to respect the gflow's planes; passing other planes shows the
/// deviation a wrong plane causes.
pub fn check_determinism(
    gflow: &Gflow,
    graph: &OpenGraph,
    angles: &BTreeMap<usize, PlaneMeasurement>,
) -> Result<f64, MbqcError> {
    let order = own_measured_order(gflow, graph);
    let sets = correction_sets(gflow, graph);
    let block = correction_block_with(graph, &sets, &order, 0.0)?;
    let frame = SlotFrame::new(graph, &order)?;
    let projs: Vec<CMat> = order
        .iter()
        .map(|v| angles[v].projector(0))
        .collect();
    let m = frame.n_measured();
    let reference = branch_state(&block, &frame, Some(&projs), 0)?;
    let mut worst = 0.0f64;
    for cbits in 1..(1usize << m) {
        let tau = branch_state(&block, &frame, Some(&projs), cbits)?;
        let diff = tau.sub(&reference)?;
        worst = worst.max(trace_norm_hermitian(diff.matrix()));
    }
    Ok(worst)
}

/// Choi operator of conjugation by `u` on one qubit: out wire first, in wire
/// second.
fn unitary_choi(u: &CMat, out_wire: &str, in_wire: &str) -> Result<LabeledOperator, MbqcError> {
    let layout = SpaceLayout::new(vec![
        SubsystemLabel::new(out_wire, 2),
        SubsystemLabel::new(in_wire, 2),
    ])?;
    let mut data = CMat::zeros(4, 4);
    for a in 0..2 {
        for b in 0..2 {
            for x in 0..2 {
                for y in 0..2 {
                    data[(x * 2 + a, y * 2 + b)] = u[(x, a)] * u[(y, b)].conj();
                }
            }
        }
    }
    Ok(LabeledOperator::new(layout, data)?)
}

/// Per-vertex controlled-correction channel: parents' outcome wires are
/// control inputs, `A'v` is the qubit input, and the positional wire carrying
/// `v` is the output.
fn node_channel(
    v: usize,
    sets: &CorrectionSets,
    frame: &SlotFrame,
) -> Result<(LabeledOperator, TimeStepStructure), MbqcError> {
    let mut parents: Vec<usize> = sets.x_sets[&v]
        .iter()
        .chain(sets.z_sets[&v].iter())
        .copied()
        .collect();
    parents.sort_unstable();
    parents.dedup();
    let out_wire = frame.wire_of(v);
    let in_wire = format!("A'{v}");
    let mut total = LabeledOperator::scalar(c(0.0, 0.0));
    for assign in 0..(1usize << parents.len()) {
        let outcomes: BTreeMap<usize, u8> = parents
            .iter()
            .enumerate()
            .map(|(i, &p)| (p, ((assign >> i) & 1) as u8))
            .collect();
        let (x, z) = correction_parities(sets, &outcomes, v);
        let mut term = unitary_choi(&u_local(0.0, x, z), &out_wire, &in_wire)?;
        for &p in &parents {
            let mut sel = CMat::zeros(2, 2);
            let bit = outcomes[&p] as usize;
            sel[(bit, bit)] = c(1.0, 0.0);
            let cw = LabeledOperator::new(
                SpaceLayout::new(vec![SubsystemLabel::new(
                    format!("C{}", frame.slot_of[&p]),
                    2,
                )])?,
                sel,
            )?;
            term = term.kron(&cw)?;
        }
        total = if assign == 0 {
            term
        } else {
            total.add(&term)?
        };
    }
    let mut ins: Vec<String> = parents
        .iter()
        .map(|p| format!("C{}", frame.slot_of[p]))
        .collect();
    ins.push(in_wire);
    let structure = TimeStepStructure::new(vec![TimeStep::new(&ins, &[out_wire])])?;
    Ok((total, structure))
}

/// Kronecker-extend `op` with identities so it covers `names` (with `dims`),
/// then order the factors as listed.
fn extend_to(
    op: &LabeledOperator,
    names: &[String],
    dims: &BTreeMap<String, usize>,
) -> Result<LabeledOperator, MbqcError> {
    let mut out = op.clone();
    for name in names {
        if !out.layout().contains(name) {
            let id = LabeledOperator::identity(SpaceLayout::new(vec![SubsystemLabel::new(
                name.clone(),
                dims[name],
            )])?);
            out = out.kron(&id)?;
        }
    }
    let refs: Vec<&str> = names.iter().map(|s| s.as_str()).collect();
    Ok(out.reorder(&refs)?)
}

/// Quantum-causal-model check: the block factorizes into per-vertex
/// outcome-controlled channels that (i) are valid channels, (ii) commute
/// pairwise, and (iii) multiply to the uncontracted correction comb.
pub fn check_qcm_structure(
    gflow: &Gflow,
    graph: &OpenGraph,
    tol: f64,
) -> Result<bool, MbqcError> {
    let sets = correction_sets(gflow, graph);
    induced_dag(gflow, graph)?;
    let order = own_measured_order(gflow, graph);
    let frame = SlotFrame::new(graph, &order)?;
    let n = frame.n;
    let m = frame.n_measured();

    let mut channels = Vec::new();
    for v in 1..=n {
        let (op, structure) = node_channel(v, &sets, &frame)?;
        let report = crate::combs::validate_comb(&op, &structure, true, 1e-9)?;
        if !report.accepted {
            return Ok(false);
        }
        channels.push(op);
    }

    // (ii) pairwise commutation, checked on each pair's joint support
    let mut dims: BTreeMap<String, usize> = BTreeMap::new();
    for f in frame.layout.factors() {
        dims.insert(f.name.clone(), f.dim);
    }
    for v in 1..=n {
        dims.insert(format!("A'{v}"), 2);
    }
    for i in 0..channels.len() {
        for j in i + 1..channels.len() {
            let mut union: Vec<String> = channels[i]
                .layout()
                .names()
                .iter()
                .map(|s| s.to_string())
                .collect();
            for name in channels[j].layout().names() {
                if !union.iter().any(|u| u == name) {
                    union.push(name.to_string());
                }
            }
            let a = extend_to(&channels[i], &union, &dims)?;
            let b = extend_to(&channels[j], &union, &dims)?;
            let ab = a.matmul(&b)?;
            let ba = b.matmul(&a)?;
            let dev = ab
                .sub(&ba)?
                .matrix()
                .iter()
                .map(|e| e.norm())
                .fold(0.0, f64::max);
            if dev > tol {
                return Ok(false);
            }
        }
    }

    // (iii) the product of all channels equals the uncontracted comb. The
    // channels are diagonal in the outcome wires and act on disjoint qubit
    // wires, so the product is assembled branch by branch; the cross terms
    // are covered by the commutation check above.
    let total_order: Vec<usize> = {
        let mut t = order.clone();
        t.extend(frame.outputs.iter().copied());
        t
    };
    let sigma = build_sigma_mbqc(gflow, graph, &total_order)?;
    let mut product: Option<LabeledOperator> = None;
    for cbits in 0..(1usize << m) {
        let outcomes = frame.outcomes_by_vertex(cbits);
        let mut term = LabeledOperator::scalar(c(1.0, 0.0));
        for v in 1..=n {
            let (x, z) = correction_parities(&sets, &outcomes, v);
            let choi = unitary_choi(&u_local(0.0, x, z), &frame.wire_of(v), &format!("A'{v}"))?;
            term = term.kron(&choi)?;
        }
        for k in 1..=m {
            let mut sel = CMat::zeros(2, 2);
            let bit = (cbits >> (k - 1)) & 1;
            sel[(bit, bit)] = c(1.0, 0.0);
            let cw = LabeledOperator::new(
                SpaceLayout::new(vec![SubsystemLabel::new(format!("C{k}"), 2)])?,
                sel,
            )?;
            term = term.kron(&cw)?;
        }
        product = Some(match product {
            None => term,
            Some(acc) => acc.add(&term)?,
        });
    }
    let product = product.expect("at least one outcome branch");
    let names = product.layout().names();
    let sigma_aligned = sigma.op.reorder(&names)?;
    let dev = product
        .sub(&sigma_aligned)?
        .matrix()
        .iter()
        .map(|e| e.norm())
        .fold(0.0, f64::max);
    Ok(dev <= tol)
}

/// Max deviation between corresponding outcome branches of gflows that share
/// planes and admit a common order. Blocks are rebuilt on the
/// lexicographically smallest common total order before comparing.
pub fn check_causal_equivalence(
    gflows: &[&Gflow],
    graph: &OpenGraph,
) -> Result<f64, MbqcError> {
    let Some(first) = gflows.first() else {
        return Ok(0.0);
    };
    let n = graph.n_vertices();
    for gf in &gflows[1..] {
        for v in graph.measured_vertices() {
            if gf.plane(v) != first.plane(v) {
                return Err(MbqcError::PlaneMismatch(v));
            }
        }
    }
    if !orders_compatible(gflows, n) {
        return Err(MbqcError::IncompatibleOrders);
    }
    // lexicographically smallest topological order of the union relation
    let mut edges: Vec<(usize, usize)> = Vec::new();
    for gf in gflows {
        for &e in gf.generated_edges() {
            if !edges.contains(&e) {
                edges.push(e);
            }
        }
    }
    let mut indeg = vec![0usize; n + 1];
    for &(_, b) in &edges {
        indeg[b] += 1;
    }
    let mut ready: Vec<usize> = (1..=n).filter(|&v| indeg[v] == 0).collect();
    let mut common = Vec::with_capacity(n);
    while !ready.is_empty() {
        ready.sort_unstable();
        let v = ready.remove(0);
        common.push(v);
        for &(a, b) in &edges {
            if a == v {
                indeg[b] -= 1;
                if indeg[b] == 0 {
                    ready.push(b);
                }
            }
        }
    }
    let outputs = graph.outputs();
    let order: Vec<usize> = common
        .into_iter()
        .filter(|v| !outputs.contains(v))
        .collect();
    let frame = SlotFrame::new(graph, &order)?;
    let m = frame.n_measured();
    let blocks: Vec<Comb> = gflows
        .iter()
        .map(|gf| {
            let sets = correction_sets(gf, graph);
            correction_block_with(graph, &sets, &order, 0.0)
        })
        .collect::<Result<_, _>>()?;
    let mut worst = 0.0f64;
    for cbits in 0..(1usize << m) {
        let reference = branch_state(&blocks[0], &frame, None, cbits)?;
        for b in &blocks[1..] {
            let tau = branch_state(b, &frame, None, cbits)?;
            let dev = trace_norm_hermitian(tau.sub(&reference)?.matrix());
            worst = worst.max(dev);
        }
    }
    Ok(worst)
}

// ---------------------------------------------------------------------------
// Classical-quantum comb families.

use crate::combs::ClassicalQuantumComb;

/// Gflow mixture: block x is gflow x's correction comb contracted with the
/// graph state, each on its own minimal measurement order.
pub fn build_d_gflow(
    graph: &OpenGraph,
    gflows: &[&Gflow],
    prior: &[f64],
) -> Result<ClassicalQuantumComb, MbqcError> {
    if gflows.is_empty() {
        return Err(MbqcError::NoGflows);
    }
    let blocks: Vec<Comb> = gflows
        .iter()
        .map(|gf| gflow_block(gf, graph))
        .collect::<Result<_, _>>()?;
    Ok(ClassicalQuantumComb::new(
        prior.to_vec(),
        blocks,
        SubsystemLabel::new("G", gflows.len()),
    )?)
}

/// Plane mixture: gflows are grouped by their full plane assignment; block x
/// is the uniform mixture over group x, and the prior is uniform over groups.
pub fn build_d_mp(graph: &OpenGraph) -> Result<ClassicalQuantumComb, MbqcError> {
    let gflows = crate::gflow::enumerate_gflows(graph, None)?;
    if gflows.is_empty() {
        return Err(MbqcError::NoGflows);
    }
    let mut groups: BTreeMap<Vec<(usize, Plane)>, Vec<&Gflow>> = BTreeMap::new();
    for gf in &gflows {
        let key: Vec<(usize, Plane)> = graph
            .measured_vertices()
            .iter()
            .map(|&v| (v, gf.plane(v).expect("measured vertices carry planes")))
            .collect();
        groups.entry(key).or_default().push(gf);
    }
    let mut blocks = Vec::new();
    for members in groups.values() {
        let mut acc: Option<Comb> = None;
        for gf in members {
            let b = gflow_block(gf, graph)?;
            acc = Some(match acc {
                None => b,
                Some(prev) => Comb::new(prev.op.add(&b.op)?, prev.structure, true)?,
            });
        }
        let mut comb = acc.expect("groups are nonempty");
        comb.op = comb.op.scale(c(1.0 / members.len() as f64, 0.0));
        blocks.push(comb);
    }
    let k = blocks.len();
    Ok(ClassicalQuantumComb::new(
        vec![1.0 / k as f64; k],
        blocks,
        SubsystemLabel::new("MP", k),
    )?)
}

/// Reference-frame calibration on the three-vertex path: block k carries the
/// correction comb rotated into the frame `theta_k = 2 pi k / angle_count`,
/// uniform prior.
pub fn build_d_calibr(angle_count: usize) -> Result<ClassicalQuantumComb, MbqcError> {
    if !(2..=32).contains(&angle_count) {
        return Err(MbqcError::AngleCountOutOfRange(angle_count));
    }
    let graph = crate::gflow::line_graph_3();
    let map: BTreeMap<usize, Vec<usize>> = [(1, vec![2]), (2, vec![3])].into_iter().collect();
    let (report, gflow) = crate::gflow::verify_gflow(&graph, &map)?;
    debug_assert!(report.valid);
    let gflow = gflow.expect("calibration gflow is valid");
    let sets = correction_sets(&gflow, &graph);
    let order = own_measured_order(&gflow, &graph);
    let mut blocks = Vec::new();
    for k in 0..angle_count {
        let theta = 2.0 * std::f64::consts::PI * k as f64 / angle_count as f64;
        blocks.push(correction_block_with(&graph, &sets, &order, theta)?);
    }
    Ok(ClassicalQuantumComb::new(
        vec![1.0 / angle_count as f64; angle_count],
        blocks,
        SubsystemLabel::new("Theta", angle_count),
    )?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gflow::{
        enumerate_gflows, four_qubit_graph, line_graph_3, triangle_graph, verify_gflow,
        PlaneChoice, FOUR_QUBIT_ENUM_TO_CATALOGUE,
    };
    use std::f64::consts::PI;

    fn max_abs(m: &CMat) -> f64 {
        m.iter().map(|e| e.norm()).fold(0.0, f64::max)
    }

    fn catalogue_indexed(graph: &OpenGraph) -> Vec<(usize, Gflow)> {
        let found = enumerate_gflows(graph, None).unwrap();
        found
            .into_iter()
            .enumerate()
            .map(|(pos, gf)| (FOUR_QUBIT_ENUM_TO_CATALOGUE[pos], gf))
            .collect()
    }

    #[test]
    fn pauli_products_follow_the_group_table() {
        use PauliLetter::*;
        let x = PauliString::from_letters(0, &[(1, X)]);
        let y = PauliString::from_letters(0, &[(1, Y)]);
        let xy = x.mul(&y);
        assert_eq!(xy.phase_quarter, 1);
        assert_eq!(xy.letter(1), Z);
        let yx = y.mul(&x);
        assert_eq!(yx.phase_quarter, 3);
        // numerically: phase * letters matches matrix product
        let lhs = xy.to_matrix(1);
        let rhs = x.to_matrix(1) * y.to_matrix(1);
        assert!(max_abs(&(lhs - rhs)) < 1e-15);
        // X.Z = -iY
        let z = PauliString::from_letters(0, &[(1, Z)]);
        let xz = x.mul(&z);
        assert_eq!((xz.phase_quarter, xz.letter(1)), (3, Y));
    }

    #[test]
    fn stabilizers_transpose_to_themselves() {
        let g = line_graph_3();
        for v in 1..=3 {
            let k = stabilizer_generator(&g, v);
            assert_eq!(k.transpose(), k, "X/Z strings are symmetric");
            assert_eq!(k.dagger(), k);
        }
        // a Y flips sign under transposition
        let y = PauliString::from_letters(0, &[(2, PauliLetter::Y)]);
        assert_eq!(y.transpose().phase_quarter, 2);
    }

    #[test]
    fn two_vertex_graph_state_matrix() {
        let g = OpenGraph::with_uniform_planes(2, &[(1, 2)], &[], &[2], PlaneChoice::Any).unwrap();
        let gs = graph_state(&g).unwrap();
        let m = gs.op().matrix();
        // |G> = (|00>+|01>+|10>-|11>)/2
        for r in 0..4 {
            for s in 0..4 {
                let sr = if r == 3 { -0.25 } else { 0.25 };
                let ss = if s == 3 { -1.0 } else { 1.0 };
                assert!((m[(r, s)] - c(sr * ss, 0.0)).norm() < 1e-15, "({r},{s})");
            }
        }
    }

    #[test]
    fn line_graph_stabilizers_fix_the_state() {
        let g = line_graph_3();
        let gs = graph_state(&g).unwrap();
        assert!(gs.stabilizer_residual(&g) < 1e-10);
        // spot-check the middle generator Z1 X2 Z3
        let k = stabilizer_generator(&g, 2);
        assert_eq!(k.letter(1), PauliLetter::Z);
        assert_eq!(k.letter(2), PauliLetter::X);
        assert_eq!(k.letter(3), PauliLetter::Z);
    }

    #[test]
    fn four_qubit_state_marginals_are_maximally_mixed() {
        let g = four_qubit_graph();
        let gs = graph_state(&g).unwrap();
        assert!(gs.stabilizer_residual(&g) < 1e-10);
        for v in 1..=4 {
            let others: Vec<String> = (1..=4)
                .filter(|w| *w != v)
                .map(|w| format!("q{w}"))
                .collect();
            let refs: Vec<&str> = others.iter().map(|s| s.as_str()).collect();
            let red = gs.op().partial_trace(&refs).unwrap();
            let dev = max_abs(&(red.matrix() - CMat::identity(2, 2) * c(0.5, 0.0)));
            assert!(dev < 1e-12, "qubit {v}");
        }
        let pair = gs.op().partial_trace(&["q3", "q4"]).unwrap();
        let dev = max_abs(&(pair.matrix() - CMat::identity(4, 4) * c(0.25, 0.0)));
        assert!(dev < 1e-12);
    }

    #[test]
    fn plane_projectors_are_rank_one_and_complete() {
        for plane in [Plane::XY, Plane::XZ, Plane::YZ] {
            for k in 0..16 {
                let m = PlaneMeasurement::new(plane, 2.0 * PI * k as f64 / 16.0);
                let p0 = m.projector(0);
                let p1 = m.projector(1);
                assert!(max_abs(&(&p0 + &p1 - CMat::identity(2, 2))) < 1e-12);
                assert!(max_abs(&(&p0 * &p1)) < 1e-12);
                assert!((p0.trace() - c(1.0, 0.0)).norm() < 1e-12);
                assert!(max_abs(&(&p0 * &p0 - p0.clone())) < 1e-12);
            }
        }
    }

    #[test]
    fn outcome_flip_is_conjugation_by_the_plane_normal() {
        let flips = [
            (Plane::XY, PauliLetter::Z),
            (Plane::XZ, PauliLetter::Y),
            (Plane::YZ, PauliLetter::X),
        ];
        for (plane, normal) in flips {
            let u = PauliString::from_letters(0, &[(1, normal)]).to_matrix(1);
            for k in 0..16 {
                let m = PlaneMeasurement::new(plane, 2.0 * PI * k as f64 / 16.0);
                let conj = &u * m.projector(0) * u.adjoint();
                assert!(max_abs(&(conj - m.projector(1))) < 1e-12, "{plane}");
            }
        }
    }

    #[test]
    fn xy_angle_adaptation_under_pauli_frames() {
        let x = PauliString::from_letters(0, &[(1, PauliLetter::X)]).to_matrix(1);
        let z = PauliString::from_letters(0, &[(1, PauliLetter::Z)]).to_matrix(1);
        for k in 0..16 {
            let a = 2.0 * PI * k as f64 / 16.0;
            let m = PlaneMeasurement::new(Plane::XY, a);
            let neg = PlaneMeasurement::new(Plane::XY, -a);
            let shift = PlaneMeasurement::new(Plane::XY, a + PI);
            for outcome in 0..2u8 {
                let xc = &x * m.projector(outcome) * x.adjoint();
                assert!(max_abs(&(xc - neg.projector(outcome))) < 1e-12);
                let zc = &z * m.projector(outcome) * z.adjoint();
                assert!(max_abs(&(zc - shift.projector(outcome))) < 1e-12);
            }
        }
    }

    #[test]
    fn measurement_channel_is_a_channel_with_expected_statistics() {
        let m = PlaneMeasurement::new(Plane::XY, 0.0);
        let ch = measurement_channel(&m, "A", "C").unwrap();
        let structure = TimeStepStructure::of(&[(&["A"], &["C"])]);
        let report = crate::combs::validate_comb(&ch, &structure, true, 1e-9).unwrap();
        assert!(report.accepted);
        // |+> gives outcome 0 with certainty
        let plus = LabeledOperator::new(
            SpaceLayout::of(&[("A", 2)]),
            CMat::from_element(2, 2, c(0.5, 0.0)),
        )
        .unwrap();
        let stats = plus.link_product(&ch).unwrap();
        assert!((stats.matrix()[(0, 0)] - c(1.0, 0.0)).norm() < 1e-12);
        assert!(stats.matrix()[(1, 1)].norm() < 1e-12);
        // |0> is unbiased for every XY angle
        for k in 0..8 {
            let m = PlaneMeasurement::new(Plane::XY, 2.0 * PI * k as f64 / 8.0);
            let ch = measurement_channel(&m, "A", "C").unwrap();
            let zero = LabeledOperator::new(
                SpaceLayout::of(&[("A", 2)]),
                CMat::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]),
            )
            .unwrap();
            let stats = zero.link_product(&ch).unwrap();
            assert!((stats.matrix()[(0, 0)] - c(0.5, 0.0)).norm() < 1e-12);
        }
        // YZ at angle 0 is a Z-basis measurement
        let m = PlaneMeasurement::new(Plane::YZ, 0.0);
        let zero_proj = CMat::from_row_slice(
            2,
            2,
            &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)],
        );
        assert!(max_abs(&(m.projector(0) - zero_proj)) < 1e-12);
    }

    #[test]
    fn correction_unitary_puts_x_left_of_z() {
        let tri = triangle_graph();
        let found = enumerate_gflows(&tri, None).unwrap();
        let sets = correction_sets(&found[0], &tri);
        let outcomes: BTreeMap<usize, u8> = [(1, 1u8)].into_iter().collect();
        let u = correction_unitary(&sets, &outcomes);
        assert_eq!(u.assembled.letter(2), PauliLetter::X);
        assert_eq!(u.assembled.letter(3), PauliLetter::Z);
        assert_eq!(u.assembled.phase_quarter, 0);
        // a vertex in both sets picks up X.Z = -iY
        let both = CorrectionSets {
            x_sets: [(1, vec![]), (2, vec![1])].into_iter().collect(),
            z_sets: [(1, vec![]), (2, vec![1])].into_iter().collect(),
        };
        let u = correction_unitary(&both, &outcomes);
        assert_eq!(u.per_vertex[&2].letter(2), PauliLetter::Y);
        assert_eq!(u.per_vertex[&2].phase_quarter, 3);
        let dense = u.per_vertex[&2].to_matrix(2);
        let manual = PauliString::from_letters(0, &[(2, PauliLetter::X)]).to_matrix(2)
            * PauliString::from_letters(0, &[(2, PauliLetter::Z)]).to_matrix(2);
        assert!(max_abs(&(dense - manual)) < 1e-15);
    }

    #[test]
    fn sigma_comb_validates_and_routes_identity_on_zero_outcomes() {
        let g = four_qubit_graph();
        let cat = catalogue_indexed(&g);
        let (_, g1) = cat.iter().find(|(l, _)| *l == 1).unwrap().clone();
        let sigma = build_sigma_mbqc(&g1, &g, &[1, 2, 3, 4]).unwrap();
        let report = sigma.validate(1e-9).unwrap();
        assert!(report.accepted, "{report:?}");
        // project every outcome wire on 0: corrections vanish, leaving the
        // unnormalized identity Choi between A' and the qubit wires
        let mut w = LabeledOperator::identity(SpaceLayout::of(&[
            ("A'1", 2), ("A'2", 2), ("A'3", 2), ("A'4", 2),
            ("A1", 2), ("A2", 2), ("A3", 2), ("A4", 2),
        ]));
        for k in 1..=2 {
            let mut sel = CMat::zeros(2, 2);
            sel[(0, 0)] = c(1.0, 0.0);
            let layout = SpaceLayout::new(vec![SubsystemLabel::new(format!("C{k}"), 2)]).unwrap();
            let cw = LabeledOperator::new(layout, sel).unwrap();
            w = w.kron(&cw).unwrap();
        }
        let routed = w
            .matmul(&sigma.op)
            .unwrap()
            .partial_trace(&["C1", "C2"])
            .unwrap()
            .reorder(&["A1", "A2", "A3", "A4", "A'1", "A'2", "A'3", "A'4"])
            .unwrap();
        // order [1,2,3,4] puts vertex v on wire Av, so the branch must be
        // sum_{a,b} |a><b| (x) |a><b|
        let d = 16;
        for a in 0..d {
            for b in 0..d {
                for x in 0..d {
                    for y in 0..d {
                        let want = if a == x && b == y { 1.0 } else { 0.0 };
                        let got = routed.matrix()[(x * d + a, y * d + b)];
                        assert!((got - c(want, 0.0)).norm() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn block_equals_sigma_contracted_with_the_graph_state() {
        let g = four_qubit_graph();
        let cat = catalogue_indexed(&g);
        let (_, g1) = cat.iter().find(|(l, _)| *l == 1).unwrap().clone();
        let sigma = build_sigma_mbqc(&g1, &g, &[1, 2, 3, 4]).unwrap();
        let rho = graph_state(&g)
            .unwrap()
            .op()
            .relabeled(|name| name.replace('q', "A'"))
            .unwrap();
        let linked = rho.link_product(&sigma.op).unwrap();
        let direct = gflow_block(&g1, &g).unwrap();
        let aligned = linked
            .reorder(&direct.op.layout().names())
            .unwrap();
        assert!(max_abs(&(aligned.matrix() - direct.op.matrix())) < 1e-12);
    }

    #[test]
    fn all_fifteen_blocks_are_valid_combs_of_trace_four() {
        let g = four_qubit_graph();
        for gf in enumerate_gflows(&g, None).unwrap() {
            let b = gflow_block(&gf, &g).unwrap();
            let report = b.validate(1e-9).unwrap();
            assert!(report.accepted, "{report:?}");
            assert!((b.op.trace() - c(4.0, 0.0)).norm() < 1e-9);
            assert!(b.op.hermiticity_residual() < 1e-12);
        }
    }

    #[test]
    fn determinism_holds_for_every_catalogued_gflow() {
        let g = four_qubit_graph();
        for gf in enumerate_gflows(&g, None).unwrap() {
            let angles: BTreeMap<usize, PlaneMeasurement> = [(1, 0.9), (2, 2.0)]
                .into_iter()
                .map(|(v, a)| (v, PlaneMeasurement::new(gf.plane(v).unwrap(), a)))
                .collect();
            let dev = check_determinism(&gf, &g, &angles).unwrap();
            assert!(dev < 1e-9, "deviation {dev}");
        }
    }

    #[test]
    fn swapped_corrections_break_determinism() {
        let g = four_qubit_graph();
        let cat = catalogue_indexed(&g);
        let (_, g1) = cat.iter().find(|(l, _)| *l == 1).unwrap().clone();
        let sets = correction_sets(&g1, &g);
        let swapped = CorrectionSets {
            x_sets: sets.z_sets.clone(),
            z_sets: sets.x_sets.clone(),
        };
        let order = own_measured_order(&g1, &g);
        let block = correction_block_with(&g, &swapped, &order, 0.0).unwrap();
        let frame = SlotFrame::new(&g, &order).unwrap();
        let projs: Vec<CMat> = order
            .iter()
            .map(|v| PlaneMeasurement::new(g1.plane(*v).unwrap(), if *v == 1 { 0.9 } else { 2.0 }).projector(0))
            .collect();
        let reference = branch_state(&block, &frame, Some(&projs), 0).unwrap();
        let mut worst = 0.0f64;
        for cbits in 1..4 {
            let tau = branch_state(&block, &frame, Some(&projs), cbits).unwrap();
            worst = worst.max(trace_norm_hermitian(tau.sub(&reference).unwrap().matrix()));
        }
        assert!(worst > 0.1, "swapped corrections still deterministic: {worst}");
    }

    #[test]
    fn wrong_plane_angles_break_determinism() {
        let g = four_qubit_graph();
        let cat = catalogue_indexed(&g);
        let (_, g1) = cat.iter().find(|(l, _)| *l == 1).unwrap().clone();
        // catalogue g1 measures both vertices in XY; asking for XZ angles
        // probes states the corrections do not stabilize
        let angles: BTreeMap<usize, PlaneMeasurement> = [(1, 0.9), (2, 2.0)]
            .into_iter()
            .map(|(v, a)| (v, PlaneMeasurement::new(Plane::XZ, a)))
            .collect();
        let dev = check_determinism(&g1, &g, &angles).unwrap();
        assert!(dev > 1e-4, "wrong-plane deviation {dev}");
    }

    #[test]
    fn branch_probabilities_are_uniform() {
        let g = four_qubit_graph();
        let cat = catalogue_indexed(&g);
        let (_, g1) = cat.iter().find(|(l, _)| *l == 1).unwrap().clone();
        let order = own_measured_order(&g1, &g);
        let sets = correction_sets(&g1, &g);
        let block = correction_block_with(&g, &sets, &order, 0.0).unwrap();
        let frame = SlotFrame::new(&g, &order).unwrap();
        let projs: Vec<CMat> = order
            .iter()
            .map(|v| PlaneMeasurement::new(g1.plane(*v).unwrap(), 1.1 * *v as f64).projector(0))
            .collect();
        for cbits in 0..4 {
            let tau = branch_state(&block, &frame, Some(&projs), cbits).unwrap();
            assert!((tau.trace() - c(0.25, 0.0)).norm() < 1e-9);
        }
    }

    #[test]
    fn qcm_structure_holds_for_all_catalogued_gflows() {
        let g = four_qubit_graph();
        for gf in enumerate_gflows(&g, None).unwrap() {
            assert!(check_qcm_structure(&gf, &g, 1e-9).unwrap());
        }
    }

    #[test]
    fn qcm_structure_holds_for_a_single_measured_vertex() {
        let g = OpenGraph::with_uniform_planes(2, &[(1, 2)], &[1], &[2], PlaneChoice::One(Plane::XY))
            .unwrap();
        let (report, gf) = verify_gflow(&g, &[(1, vec![2])].into_iter().collect()).unwrap();
        assert!(report.valid);
        assert!(check_qcm_structure(&gf.unwrap(), &g, 1e-9).unwrap());
    }

    #[test]
    fn mixed_gflow_channels_do_not_rebuild_either_comb() {
        let g = four_qubit_graph();
        let cat = catalogue_indexed(&g);
        let (_, g1) = cat.iter().find(|(l, _)| *l == 1).unwrap().clone();
        let (_, g2) = cat.iter().find(|(l, _)| *l == 2).unwrap().clone();
        let order = own_measured_order(&g1, &g);
        let frame = SlotFrame::new(&g, &order).unwrap();
        let sets1 = correction_sets(&g1, &g);
        let sets2 = correction_sets(&g2, &g);
        // product with vertex 2's channel taken from the other gflow
        let m = frame.n_measured();
        let mut product: Option<LabeledOperator> = None;
        for cbits in 0..(1usize << m) {
            let outcomes = frame.outcomes_by_vertex(cbits);
            let mut term = LabeledOperator::scalar(c(1.0, 0.0));
            for v in 1..=4 {
                let sets = if v == 2 { &sets2 } else { &sets1 };
                let (x, z) = correction_parities(sets, &outcomes, v);
                let choi =
                    unitary_choi(&u_local(0.0, x, z), &frame.wire_of(v), &format!("A'{v}")).unwrap();
                term = term.kron(&choi).unwrap();
            }
            for k in 1..=m {
                let mut sel = CMat::zeros(2, 2);
                let bit = (cbits >> (k - 1)) & 1;
                sel[(bit, bit)] = c(1.0, 0.0);
                let layout =
                    SpaceLayout::new(vec![SubsystemLabel::new(format!("C{k}"), 2)]).unwrap();
                let cw = LabeledOperator::new(layout, sel).unwrap();
                term = term.kron(&cw).unwrap();
            }
            product = Some(match product {
                None => term,
                Some(acc) => acc.add(&term).unwrap(),
            });
        }
        let product = product.unwrap();
        for gf in [&g1, &g2] {
            let sigma = build_sigma_mbqc(gf, &g, &[1, 2, 3, 4]).unwrap();
            let aligned = sigma.op.reorder(&product.layout().names()).unwrap();
            let dev = max_abs(&(product.matrix() - aligned.matrix()));
            assert!(dev > 0.1, "mixed product should not match");
        }
    }

    #[test]
    fn qcm_product_matches_honest_matrix_multiplication_on_one_branch() {
        // same factors as the structural check, multiplied as matrices on the
        // full qubit space for one outcome branch
        let g = four_qubit_graph();
        let cat = catalogue_indexed(&g);
        let (_, g1) = cat.iter().find(|(l, _)| *l == 1).unwrap().clone();
        let order = own_measured_order(&g1, &g);
        let frame = SlotFrame::new(&g, &order).unwrap();
        let sets = correction_sets(&g1, &g);
        let outcomes = frame.outcomes_by_vertex(0b11);
        let mut dims: BTreeMap<String, usize> = BTreeMap::new();
        let mut names: Vec<String> = Vec::new();
        for v in 1..=4 {
            names.push(frame.wire_of(v));
            names.push(format!("A'{v}"));
        }
        for n in &names {
            dims.insert(n.clone(), 2);
        }
        let mut product: Option<LabeledOperator> = None;
        let mut kron_version: Option<LabeledOperator> = None;
        for v in 1..=4 {
            let (x, z) = correction_parities(&sets, &outcomes, v);
            let choi = unitary_choi(&u_local(0.0, x, z), &frame.wire_of(v), &format!("A'{v}")).unwrap();
            let ext = extend_to(&choi, &names, &dims).unwrap();
            product = Some(match product {
                None => ext,
                Some(acc) => acc.matmul(&ext).unwrap(),
            });
            kron_version = Some(match kron_version {
                None => choi,
                Some(acc) => acc.kron(&choi).unwrap(),
            });
        }
        let product = product.unwrap();
        let kron_version = extend_to(&kron_version.unwrap(), &names, &dims).unwrap();
        assert!(max_abs(&(product.matrix() - kron_version.matrix())) < 1e-12);
    }

    #[test]
    fn causal_classes_partition_the_catalogue() {
        let g = four_qubit_graph();
        let found = enumerate_gflows(&g, None).unwrap();
        let blocks: Vec<Comb> = found.iter().map(|gf| gflow_block(gf, &g).unwrap()).collect();
        let mut classes: Vec<Vec<usize>> = Vec::new();
        for (i, b) in blocks.iter().enumerate() {
            let label = FOUR_QUBIT_ENUM_TO_CATALOGUE[i];
            match classes.iter_mut().find(|cl| {
                let j = FOUR_QUBIT_ENUM_TO_CATALOGUE
                    .iter()
                    .position(|l| *l == cl[0])
                    .unwrap();
                max_abs(&(blocks[j].op.matrix() - b.op.matrix())) < 1e-9
            }) {
                Some(cl) => cl.push(label),
                None => classes.push(vec![label]),
            }
        }
        for cl in &mut classes {
            cl.sort_unstable();
        }
        classes.sort();
        assert_eq!(
            classes,
            vec![
                vec![1, 2, 4, 5],
                vec![3],
                vec![6, 7, 9, 10],
                vec![8],
                vec![11, 13, 14, 15],
                vec![12],
            ]
        );
    }

    #[test]
    fn causal_equivalence_within_and_across_classes() {
        let g = four_qubit_graph();
        let cat = catalogue_indexed(&g);
        let by = |want: usize| &cat.iter().find(|(l, _)| *l == want).unwrap().1;
        let dev = check_causal_equivalence(&[by(1), by(2), by(4), by(5)], &g).unwrap();
        assert!(dev < 1e-9, "{dev}");
        assert!(matches!(
            check_causal_equivalence(&[by(1), by(6)], &g),
            Err(MbqcError::PlaneMismatch(2))
        ));
        assert!(matches!(
            check_causal_equivalence(&[by(1), by(3)], &g),
            Err(MbqcError::IncompatibleOrders)
        ));
        assert_eq!(check_causal_equivalence(&[by(3)], &g).unwrap(), 0.0);
    }

    #[test]
    fn d_gflow_assembles_the_catalogue_mixture() {
        let g = four_qubit_graph();
        let found = enumerate_gflows(&g, None).unwrap();
        let refs: Vec<&Gflow> = found.iter().collect();
        let d = build_d_gflow(&g, &refs, &vec![1.0 / 15.0; 15]).unwrap();
        assert_eq!(d.blocks().len(), 15);
        assert_eq!(d.block_dim(), 64);
        // the restricted order-compatible XY family has identical blocks
        let cat = catalogue_indexed(&g);
        let by = |want: usize| cat.iter().find(|(l, _)| *l == want).unwrap().1.clone();
        let xy = [by(1), by(2), by(4), by(5)];
        let xr: Vec<&Gflow> = xy.iter().collect();
        let dxy = build_d_gflow(&g, &xr, &[0.25; 4]).unwrap();
        for b in &dxy.blocks()[1..] {
            let dev = max_abs(&(b.op.matrix() - dxy.blocks()[0].op.matrix()));
            assert!(dev < 1e-9);
        }
        // the assembled classical-quantum operator is a comb with X leftmost
        let assembled = dxy.assemble().unwrap();
        let report = crate::combs::validate_comb(
            &assembled,
            &dxy.structure_x_first(),
            true,
            1e-9,
        )
        .unwrap();
        assert!(report.accepted, "{report:?}");
    }

    #[test]
    fn d_mp_averages_five_gflows_per_plane_assignment() {
        let g = four_qubit_graph();
        let d = build_d_mp(&g).unwrap();
        assert_eq!(d.blocks().len(), 3);
        assert_eq!(d.prior(), &[1.0 / 3.0; 3]);
        // group order follows the plane order XY < XZ < YZ on vertex 2
        let found = enumerate_gflows(&g, None).unwrap();
        for (gi, plane) in [(0, Plane::XY), (1, Plane::XZ), (2, Plane::YZ)] {
            let members: Vec<&Gflow> = found
                .iter()
                .filter(|gf| gf.plane(2) == Some(plane))
                .collect();
            assert_eq!(members.len(), 5);
            let mut mean: Option<CMat> = None;
            for gf in members {
                let b = gflow_block(gf, &g).unwrap();
                mean = Some(match mean {
                    None => b.op.matrix().clone(),
                    Some(acc) => acc + b.op.matrix(),
                });
            }
            let mean = mean.unwrap() / c(5.0, 0.0);
            let dev = max_abs(&(d.blocks()[gi].op.matrix() - mean));
            assert!(dev < 1e-12, "{plane}");
        }
    }

    #[test]
    fn d_calibr_range_and_zero_angle_block() {
        assert!(matches!(
            build_d_calibr(1),
            Err(MbqcError::AngleCountOutOfRange(1))
        ));
        assert!(matches!(
            build_d_calibr(33),
            Err(MbqcError::AngleCountOutOfRange(33))
        ));
        let d = build_d_calibr(4).unwrap();
        assert_eq!(d.blocks().len(), 4);
        assert_eq!(d.block_dim(), 32);
        for b in d.blocks() {
            let report = b.validate(1e-9).unwrap();
            assert!(report.accepted);
        }
        // theta = 0 is the unrotated correction comb
        let graph = line_graph_3();
        let (_, gf) = verify_gflow(
            &graph,
            &[(1, vec![2]), (2, vec![3])].into_iter().collect(),
        )
        .unwrap();
        let plain = gflow_block(&gf.unwrap(), &graph).unwrap();
        let dev = max_abs(&(d.blocks()[0].op.matrix() - plain.op.matrix()));
        assert!(dev < 1e-15);
    }
}
