//! Classically driven blind computation on an open graph: closed angle sets,
//! the reported-angle law under one-time pads and corrections, the resulting
//! deterministic classical combs and their mixtures over secrets, the client
//! ensemble over (angles, output set), and analytic guessing-probability
//! bounds for one and several protocol rounds.
//!
//! Angles live in a closed set and are handled as indices into it; the maps
//! `a -> -a` and `a -> a + pi` act as precomputed index permutations, so the
//! transcript combinatorics never touches floating-point angle arithmetic.

use crate::combs::{
    ClassicalComb, ClassicalQuantumComb, Comb, CombError, TimeStep, TimeStepStructure,
};
use crate::gflow::{
    correction_sets, enumerate_gflows, CorrectionSets, Gflow, GflowError, OpenGraph, Plane,
    PlaneChoice,
};
use crate::operators::{OperatorError, SpaceLayout, SubsystemLabel};
use std::collections::{BTreeMap, HashMap};
use std::f64::consts::PI;
use thiserror::Error;

/// Two angles closer than this are the same angle.
pub const ANGLE_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum BqcError {
    #[error(transparent)]
    Gflow(#[from] GflowError),
    #[error(transparent)]
    Comb(#[from] CombError),
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error("no seed angles given")]
    EmptySeeds,
    #[error("closure has {got} angles, expected {expected}")]
    ClosureSize { got: usize, expected: usize },
    #[error("angle index {0} outside the angle set")]
    BadAngleIndex(usize),
    #[error("{what} has length {got}, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("order must list each vertex exactly once")]
    BadOrder,
    #[error("correction for vertex {vertex} depends on vertex {dependency}, which is not earlier in the order")]
    FutureCorrection { vertex: usize, dependency: usize },
    #[error("no output set admits an order-compatible gflow")]
    NoOutputSets,
    #[error("gflow list is empty")]
    EmptyGflowSet,
    #[error("block {0} is not diagonal")]
    NonClassicalBlock(usize),
    #[error("prior has {got} entries, expected {expected}")]
    PriorLength { got: usize, expected: usize },
    #[error("{0} rounds not supported by the product-bound evaluator")]
    RoundsUnsupported(u32),
}

// ---------------------------------------------------------------------------
// Closed angle sets.

/// Sorted distinct angles in `[0, 2 pi)`, closed under `a -> (-1)^x a + z pi`.
/// `neg` and `shift` are those two maps as index permutations.
#[derive(Clone, Debug)]
pub struct AngleSet {
    angles: Vec<f64>,
    neg: Vec<usize>,
    shift: Vec<usize>,
}

fn norm_angle(a: f64) -> f64 {
    let t = a.rem_euclid(2.0 * PI);
    if (t - 2.0 * PI).abs() < ANGLE_TOL {
        0.0
    } else {
        t
    }
}

/// Smallest closed set containing `seeds`: the union of their orbits under
/// the four maps `a -> (-1)^x a + z pi`.
pub fn closed_angle_set(seeds: &[f64]) -> Result<AngleSet, BqcError> {
    if seeds.is_empty() {
        return Err(BqcError::EmptySeeds);
    }
    let mut angles: Vec<f64> = Vec::new();
    for &s in seeds {
        for img in [s, -s, s + PI, -s + PI] {
            let a = norm_angle(img);
            if !angles.iter().any(|b| (b - a).abs() < ANGLE_TOL) {
                angles.push(a);
            }
        }
    }
    angles.sort_by(|a, b| a.partial_cmp(b).expect("angles are finite"));
    let find = |a: f64| -> usize {
        angles
            .iter()
            .position(|b| (b - norm_angle(a)).abs() < ANGLE_TOL)
            .expect("orbit closure contains every image")
    };
    let neg = angles.iter().map(|&a| find(-a)).collect();
    let shift = angles.iter().map(|&a| find(a + PI)).collect();
    Ok(AngleSet { angles, neg, shift })
}

/// [`closed_angle_set`], also checking the closure has the expected size.
pub fn closed_angle_set_sized(seeds: &[f64], expected: usize) -> Result<AngleSet, BqcError> {
    let set = closed_angle_set(seeds)?;
    if set.len() != expected {
        return Err(BqcError::ClosureSize {
            got: set.len(),
            expected,
        });
    }
    Ok(set)
}

impl AngleSet {
    pub fn len(&self) -> usize {
        self.angles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.angles.is_empty()
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn angle(&self, i: usize) -> f64 {
        self.angles[i]
    }

    pub fn index_of(&self, a: f64) -> Option<usize> {
        let a = norm_angle(a);
        self.angles.iter().position(|b| (b - a).abs() < ANGLE_TOL)
    }

    /// Index of `-a` for angle index `i`.
    pub fn negate(&self, i: usize) -> usize {
        self.neg[i]
    }

    /// Index of `a + pi` for angle index `i`.
    pub fn shift_pi(&self, i: usize) -> usize {
        self.shift[i]
    }
}

// ---------------------------------------------------------------------------
// The reported-angle law.

fn order_positions(order: &[usize]) -> Result<BTreeMap<usize, usize>, BqcError> {
    let mut pos = BTreeMap::new();
    for (k, &v) in order.iter().enumerate() {
        if pos.insert(v, k).is_some() {
            return Err(BqcError::BadOrder);
        }
    }
    Ok(pos)
}

/// Parity of the true outcomes `c_j = c'_j xor r_j` over the given correction
/// set, with every dependency required to be strictly earlier in the order.
fn outcome_parity(
    deps: &[usize],
    vertex: usize,
    position: usize,
    r: &[u8],
    c_prime: &[u8],
    pos: &BTreeMap<usize, usize>,
) -> Result<u8, BqcError> {
    let mut parity = 0u8;
    for &j in deps {
        match pos.get(&j) {
            Some(&pj) if pj < position => parity ^= (c_prime[pj] ^ r[pj]) & 1,
            _ => {
                return Err(BqcError::FutureCorrection {
                    vertex,
                    dependency: j,
                })
            }
        }
    }
    Ok(parity)
}

/// Angle index the user reports for the step at `position` (0-based):
/// `alpha' = (-1)^{X-parity} alpha + (r xor Z-parity) pi`.
pub fn reported_angle_index(
    set: &AngleSet,
    position: usize,
    alpha: &[usize],
    r: &[u8],
    c_prime: &[u8],
    sets: &CorrectionSets,
    order: &[usize],
) -> Result<usize, BqcError> {
    let n = order.len();
    for (what, len) in [("alpha", alpha.len()), ("r", r.len()), ("c'", c_prime.len())] {
        if len != n {
            return Err(BqcError::LengthMismatch {
                what,
                got: len,
                expected: n,
            });
        }
    }
    let pos = order_positions(order)?;
    let v = order[position];
    let mut idx = alpha[position];
    if idx >= set.len() {
        return Err(BqcError::BadAngleIndex(idx));
    }
    let xpar = outcome_parity(&sets.x_sets[&v], v, position, r, c_prime, &pos)?;
    let zpar = outcome_parity(&sets.z_sets[&v], v, position, r, c_prime, &pos)?;
    if xpar == 1 {
        idx = set.negate(idx);
    }
    if (r[position] ^ zpar) & 1 == 1 {
        idx = set.shift_pi(idx);
    }
    Ok(idx)
}

/// Reported angle indices for the whole transcript.
pub fn reported_angles(
    set: &AngleSet,
    alpha: &[usize],
    r: &[u8],
    c_prime: &[u8],
    sets: &CorrectionSets,
    order: &[usize],
) -> Result<Vec<usize>, BqcError> {
    (0..order.len())
        .map(|k| reported_angle_index(set, k, alpha, r, c_prime, sets, order))
        .collect()
}

// ---------------------------------------------------------------------------
// Client-side classical combs.

fn transcript_layout(set: &AngleSet, n: usize) -> Result<(SpaceLayout, TimeStepStructure), BqcError> {
    let mut factors = Vec::new();
    let mut steps = Vec::new();
    for k in 1..=n {
        factors.push(SubsystemLabel::new(format!("A'{k}"), set.len()));
        factors.push(SubsystemLabel::new(format!("C'{k}"), 2));
        let ins: Vec<String> = if k == 1 {
            vec![]
        } else {
            vec![format!("C'{}", k - 1)]
        };
        steps.push(TimeStep::new(&ins, &[format!("A'{k}")]));
    }
    steps.push(TimeStep::new(&[format!("C'{n}")], &[]));
    Ok((
        SpaceLayout::new(factors)?,
        TimeStepStructure::new(steps)?,
    ))
}

fn accumulate_transcripts(
    set: &AngleSet,
    alpha: &[usize],
    sets: &CorrectionSets,
    order: &[usize],
    weight_per_pad: f64,
    diag: &mut [f64],
    strides: &[usize],
) -> Result<(), BqcError> {
    let n = order.len();
    for rbits in 0..(1usize << n) {
        let r: Vec<u8> = (0..n).map(|k| ((rbits >> k) & 1) as u8).collect();
        for cbits in 0..(1usize << n) {
            let c_prime: Vec<u8> = (0..n).map(|k| ((cbits >> k) & 1) as u8).collect();
            let ap = reported_angles(set, alpha, &r, &c_prime, sets, order)?;
            let mut idx = 0usize;
            for k in 0..n {
                idx += ap[k] * strides[2 * k] + (c_prime[k] as usize) * strides[2 * k + 1];
            }
            diag[idx] += weight_per_pad;
        }
    }
    Ok(())
}

/// Deterministic client comb for fixed secrets: for every outcome string
/// `c'` exactly one reported-angle string carries weight 1. Wires are
/// `A'k` (reported angle, dimension of the angle set) and `C'k` (outcome).
pub fn build_sigma_bqc(
    set: &AngleSet,
    alpha: &[usize],
    r: &[u8],
    sets: &CorrectionSets,
    order: &[usize],
) -> Result<ClassicalComb, BqcError> {
    let n = order.len();
    let (layout, structure) = transcript_layout(set, n)?;
    let strides = layout.strides();
    let mut diag = vec![0.0f64; layout.total_dim()];
    for cbits in 0..(1usize << n) {
        let c_prime: Vec<u8> = (0..n).map(|k| ((cbits >> k) & 1) as u8).collect();
        let ap = reported_angles(set, alpha, r, &c_prime, sets, order)?;
        let mut idx = 0usize;
        for k in 0..n {
            idx += ap[k] * strides[2 * k] + (c_prime[k] as usize) * strides[2 * k + 1];
        }
        diag[idx] += 1.0;
    }
    Ok(ClassicalComb::new(layout, diag, structure)?)
}

/// Mixture of [`build_sigma_bqc`] over a uniform one-time pad and the given
/// correction-set family (one entry per admissible gflow).
pub fn build_sigma_alpha_o_from_sets(
    set: &AngleSet,
    alpha: &[usize],
    families: &[CorrectionSets],
    order: &[usize],
) -> Result<ClassicalComb, BqcError> {
    if families.is_empty() {
        return Err(BqcError::EmptyGflowSet);
    }
    let n = order.len();
    let (layout, structure) = transcript_layout(set, n)?;
    let strides = layout.strides();
    let mut diag = vec![0.0f64; layout.total_dim()];
    let w = 1.0 / ((1usize << n) as f64 * families.len() as f64);
    for sets in families {
        accumulate_transcripts(set, alpha, sets, order, w, &mut diag, &strides)?;
    }
    Ok(ClassicalComb::new(layout, diag, structure)?)
}

/// Mixture over the gflows admissible for one output set.
pub fn build_sigma_alpha_o(
    set: &AngleSet,
    alpha: &[usize],
    graph: &OpenGraph,
    gflows: &[Gflow],
    order: &[usize],
) -> Result<ClassicalComb, BqcError> {
    let families: Vec<CorrectionSets> =
        gflows.iter().map(|g| correction_sets(g, graph)).collect();
    build_sigma_alpha_o_from_sets(set, alpha, &families, order)
}

// ---------------------------------------------------------------------------
// Output sets and the client ensemble.

/// One admissible output set: the graph with those outputs and the gflows
/// compatible with the agreed order.
#[derive(Clone, Debug)]
pub struct OutSetFamily {
    pub outputs: Vec<usize>,
    pub graph: OpenGraph,
    pub gflows: Vec<Gflow>,
}

/// Proper nonempty output sets admitting an order-compatible XY gflow, in
/// ascending bitmask order.
pub fn out_sets(
    n: usize,
    edges: &[(usize, usize)],
    inputs: &[usize],
    order: &[usize],
) -> Result<Vec<OutSetFamily>, BqcError> {
    if order.len() != n {
        return Err(BqcError::BadOrder);
    }
    order_positions(order)?;
    let full = (1usize << n) - 1;
    let mut out = Vec::new();
    for omask in 1..full {
        let outputs: Vec<usize> = (1..=n).filter(|v| omask >> (v - 1) & 1 == 1).collect();
        let graph = OpenGraph::with_uniform_planes(
            n,
            edges,
            inputs,
            &outputs,
            PlaneChoice::One(Plane::XY),
        )?;
        let gflows = enumerate_gflows(&graph, Some(order))?;
        if !gflows.is_empty() {
            out.push(OutSetFamily {
                outputs,
                graph,
                gflows,
            });
        }
    }
    Ok(out)
}

/// The client comb family `{P(alpha, O), sigma_{alpha,O}}`, stored as
/// diagonal blocks. `x` runs over angle strings (lexicographic, first vertex
/// most significant) times output sets.
#[derive(Clone, Debug)]
pub struct ClientEnsemble {
    set: AngleSet,
    prior: Vec<f64>,
    blocks: Vec<ClassicalComb>,
    labels: Vec<(Vec<usize>, usize)>,
    out_sets: Vec<OutSetFamily>,
}

/// Build the client ensemble for a graph whose output set is left free.
/// `prior = None` is uniform over `(alpha, O)`.
pub fn build_d_client(
    n: usize,
    edges: &[(usize, usize)],
    inputs: &[usize],
    order: &[usize],
    set: &AngleSet,
    prior: Option<&[f64]>,
) -> Result<ClientEnsemble, BqcError> {
    let families = out_sets(n, edges, inputs, order)?;
    if families.is_empty() {
        return Err(BqcError::NoOutputSets);
    }
    let n_alpha = set.len().pow(n as u32);
    let x_dim = n_alpha * families.len();
    let prior: Vec<f64> = match prior {
        Some(p) => {
            if p.len() != x_dim {
                return Err(BqcError::PriorLength {
                    got: p.len(),
                    expected: x_dim,
                });
            }
            p.to_vec()
        }
        None => vec![1.0 / x_dim as f64; x_dim],
    };
    let mut blocks = Vec::with_capacity(x_dim);
    let mut labels = Vec::with_capacity(x_dim);
    for rank in 0..n_alpha {
        let mut alpha = vec![0usize; n];
        let mut rem = rank;
        for k in (0..n).rev() {
            alpha[k] = rem % set.len();
            rem /= set.len();
        }
        for (o_idx, fam) in families.iter().enumerate() {
            blocks.push(build_sigma_alpha_o(
                set,
                &alpha,
                &fam.graph,
                &fam.gflows,
                order,
            )?);
            labels.push((alpha.clone(), o_idx));
        }
    }
    Ok(ClientEnsemble {
        set: set.clone(),
        prior,
        blocks,
        labels,
        out_sets: families,
    })
}

impl ClientEnsemble {
    pub fn angle_set(&self) -> &AngleSet {
        &self.set
    }

    pub fn prior(&self) -> &[f64] {
        &self.prior
    }

    pub fn blocks(&self) -> &[ClassicalComb] {
        &self.blocks
    }

    /// `(alpha indices, output-set index)` for each `x`.
    pub fn labels(&self) -> &[(Vec<usize>, usize)] {
        &self.labels
    }

    pub fn out_sets(&self) -> &[OutSetFamily] {
        &self.out_sets
    }

    pub fn x_dim(&self) -> usize {
        self.blocks.len()
    }

    /// Densify into a classical-quantum comb (diagonal blocks); refuses
    /// blocks larger than `cap`.
    pub fn to_classical_quantum(&self, cap: usize) -> Result<ClassicalQuantumComb, BqcError> {
        let blocks: Vec<Comb> = self
            .blocks
            .iter()
            .map(|b| {
                Comb::new(b.to_operator(cap)?, b.structure().clone(), true)
            })
            .collect::<Result<_, CombError>>()?;
        Ok(ClassicalQuantumComb::new(
            self.prior.clone(),
            blocks,
            SubsystemLabel::new("AO", self.x_dim()),
        )?)
    }

    pub fn classical_bounds(&self, rounds: u32) -> Result<(f64, f64), BqcError> {
        classical_bounds(&self.prior, &self.blocks, rounds)
    }

    pub fn exact_guessing_probability(&self) -> Result<f64, BqcError> {
        exact_guessing_probability(&self.prior, &self.blocks)
    }
}

// ---------------------------------------------------------------------------
// Guessing-probability bounds for diagonal block families.

struct TranscriptCells {
    /// `(in_key << out_bits) | out_key` and weight, one entry per nonzero
    /// diagonal.
    cells: Vec<(u64, f64)>,
    /// `out_key -> max over inputs of the weight`.
    out_max: HashMap<u64, f64>,
    d_in: usize,
    /// Bits needed to store a full-cell key and an output key.
    sig_bits: u32,
    out_bits: u32,
}

fn transcript_cells(block: &ClassicalComb) -> Result<TranscriptCells, BqcError> {
    let (layout, diag) = block.canonical_diag();
    let input_names: Vec<String> = block
        .structure()
        .steps()
        .iter()
        .flat_map(|s| s.inputs.iter().cloned())
        .collect();
    let dims = layout.dims();
    let is_input: Vec<bool> = layout
        .names()
        .iter()
        .map(|n| input_names.iter().any(|i| i == n))
        .collect();
    let strides = layout.strides();
    let d_in: usize = dims
        .iter()
        .zip(&is_input)
        .filter(|(_, inp)| **inp)
        .map(|(d, _)| d)
        .product();
    let d_out: usize = dims
        .iter()
        .zip(&is_input)
        .filter(|(_, inp)| !**inp)
        .map(|(d, _)| d)
        .product();
    let bits = |d: usize| usize::BITS - (d.max(2) - 1).leading_zeros();
    let (in_bits, out_bits) = (bits(d_in), bits(d_out));
    if in_bits + out_bits > 63 {
        return Err(BqcError::RoundsUnsupported(1));
    }
    let mut cells = Vec::new();
    let mut out_max: HashMap<u64, f64> = HashMap::new();
    for (idx, &w) in diag.iter().enumerate() {
        if w <= 0.0 {
            continue;
        }
        let mut in_key = 0u64;
        let mut out_key = 0u64;
        for f in 0..dims.len() {
            let digit = (idx / strides[f] % dims[f]) as u64;
            if is_input[f] {
                in_key = in_key * dims[f] as u64 + digit;
            } else {
                out_key = out_key * dims[f] as u64 + digit;
            }
        }
        cells.push(((in_key << out_bits) | out_key, w));
        let slot = out_max.entry(out_key).or_insert(0.0);
        if w > *slot {
            *slot = w;
        }
    }
    Ok(TranscriptCells {
        cells,
        out_max,
        d_in,
        sig_bits: in_bits + out_bits,
        out_bits,
    })
}

fn check_family(prior: &[f64], blocks: &[ClassicalComb]) -> Result<(), BqcError> {
    if prior.len() != blocks.len() {
        return Err(BqcError::PriorLength {
            got: prior.len(),
            expected: blocks.len(),
        });
    }
    if blocks.is_empty() {
        return Err(BqcError::Comb(CombError::EmptyBlocks));
    }
    Ok(())
}

/// Product-form sandwich on the guessing probability of `rounds` independent
/// uses of a diagonal block family. Lower bound: best input-oblivious
/// guess per full transcript tuple. Upper bound: per-round maxima over
/// inputs, summed over output tuples.
pub fn classical_bounds(
    prior: &[f64],
    blocks: &[ClassicalComb],
    rounds: u32,
) -> Result<(f64, f64), BqcError> {
    check_family(prior, blocks)?;
    if rounds == 0 {
        return Err(BqcError::RoundsUnsupported(rounds));
    }
    let m = rounds as usize;
    let per_block: Vec<TranscriptCells> = blocks
        .iter()
        .map(transcript_cells)
        .collect::<Result<_, _>>()?;
    let max_cells = per_block.iter().map(|t| t.cells.len()).fold(0, usize::max);
    let cost = (max_cells as f64).powi(rounds as i32) * blocks.len() as f64;
    let sig_bits = per_block[0].sig_bits;
    let out_bits = per_block[0].out_bits;
    if cost > 5e7 || rounds as u64 * sig_bits as u64 > 128 {
        return Err(BqcError::RoundsUnsupported(rounds));
    }
    let d_in = per_block[0].d_in;

    // key of an m-tuple of cells: m per-round keys, `bits` wide each
    fn tuples(
        cells: &[(u64, f64)],
        depth: usize,
        m: usize,
        bits: u32,
        key: u128,
        w: f64,
        p: f64,
        acc: &mut HashMap<u128, f64>,
    ) {
        if depth == m {
            let v = p * w;
            let slot = acc.entry(key).or_insert(0.0);
            if v > *slot {
                *slot = v;
            }
            return;
        }
        for &(sig, cw) in cells {
            tuples(cells, depth + 1, m, bits, (key << bits) | sig as u128, w * cw, p, acc);
        }
    }

    let mut lower_cells: HashMap<u128, f64> = HashMap::new();
    let mut upper_cells: HashMap<u128, f64> = HashMap::new();
    let mut out_scratch: Vec<(u64, f64)> = Vec::new();
    for (x, t) in per_block.iter().enumerate() {
        let p = prior[x];
        if p == 0.0 {
            continue;
        }
        tuples(&t.cells, 0, m, sig_bits, 0, 1.0, p, &mut lower_cells);
        out_scratch.clear();
        out_scratch.extend(t.out_max.iter().map(|(&o, &w)| (o, w)));
        tuples(&out_scratch, 0, m, out_bits, 0, 1.0, p, &mut upper_cells);
    }
    let lower: f64 =
        lower_cells.values().sum::<f64>() / (d_in as f64).powi(rounds as i32);
    let upper: f64 = upper_cells.values().sum::<f64>();
    Ok((lower, upper))
}

/// Exact single-round guessing probability of a diagonal block family by
/// backward induction over the transcript: the server chooses each input
/// after seeing all earlier outputs, and guesses `x` at the end.
pub fn exact_guessing_probability(
    prior: &[f64],
    blocks: &[ClassicalComb],
) -> Result<f64, BqcError> {
    check_family(prior, blocks)?;
    let (layout, first) = blocks[0].canonical_diag();
    let mut diags = vec![first];
    for b in &blocks[1..] {
        let (l, d) = b.canonical_diag();
        if l.dims() != layout.dims() {
            return Err(BqcError::LengthMismatch {
                what: "block diagonal",
                got: d.len(),
                expected: diags[0].len(),
            });
        }
        diags.push(d);
    }
    let input_names: Vec<String> = blocks[0]
        .structure()
        .steps()
        .iter()
        .flat_map(|s| s.inputs.iter().cloned())
        .collect();
    let is_input: Vec<bool> = layout
        .names()
        .iter()
        .map(|n| input_names.iter().any(|i| i == n))
        .collect();
    let dims = layout.dims();
    let strides = layout.strides();

    fn walk(
        pos: usize,
        base: usize,
        dims: &[usize],
        strides: &[usize],
        is_input: &[bool],
        prior: &[f64],
        diags: &[Vec<f64>],
    ) -> f64 {
        if pos == dims.len() {
            return prior
                .iter()
                .zip(diags)
                .map(|(p, d)| p * d[base])
                .fold(0.0, f64::max);
        }
        let branches =
            (0..dims[pos]).map(|v| walk(pos + 1, base + v * strides[pos], dims, strides, is_input, prior, diags));
        if is_input[pos] {
            branches.fold(0.0, f64::max)
        } else {
            branches.sum()
        }
    }
    Ok(walk(0, 0, &dims, &strides, &is_input, prior, &diags))
}

/// Adapter for dense classical-quantum combs: extracts the diagonals
/// (rejecting blocks with off-diagonal mass) and evaluates the same bounds.
pub fn classical_bounds_cq(
    cq: &ClassicalQuantumComb,
    rounds: u32,
) -> Result<(f64, f64), BqcError> {
    let mut blocks = Vec::new();
    for (x, b) in cq.blocks().iter().enumerate() {
        let m = b.op.matrix();
        let mut diag = vec![0.0f64; b.op.dim()];
        for r in 0..b.op.dim() {
            for s in 0..b.op.dim() {
                if r == s {
                    diag[r] = m[(r, r)].re;
                } else if m[(r, s)].norm() > 1e-12 {
                    return Err(BqcError::NonClassicalBlock(x));
                }
            }
        }
        blocks.push(ClassicalComb::new(
            b.op.layout().clone(),
            diag,
            b.structure.clone(),
        )?);
    }
    classical_bounds(cq.prior(), &blocks, rounds)
}

// ---------------------------------------------------------------------------
// Analytic entropy bounds.

#[derive(Clone, Copy, Debug)]
pub struct TheoremBounds {
    /// Single-round bound `n + log2 |O-sets|` under the fully uniform prior;
    /// absent for several rounds.
    pub round_one_uniform: Option<f64>,
    /// Round-independent bound `-log2 sum_O P(O) / 2^|O|`.
    pub any_rounds: f64,
}

/// Analytic lower bounds on the min-entropy of the client ensemble.
/// `p_o = None` is uniform over the admissible output sets.
pub fn theorem_bounds(
    n: usize,
    edges: &[(usize, usize)],
    inputs: &[usize],
    order: &[usize],
    rounds: u32,
    p_o: Option<&[f64]>,
) -> Result<TheoremBounds, BqcError> {
    let families = out_sets(n, edges, inputs, order)?;
    if families.is_empty() {
        return Err(BqcError::NoOutputSets);
    }
    let k = families.len();
    let p_o: Vec<f64> = match p_o {
        Some(p) => {
            if p.len() != k {
                return Err(BqcError::PriorLength {
                    got: p.len(),
                    expected: k,
                });
            }
            p.to_vec()
        }
        None => vec![1.0 / k as f64; k],
    };
    let mass: f64 = families
        .iter()
        .zip(&p_o)
        .map(|(fam, p)| p / 2f64.powi(fam.outputs.len() as i32))
        .sum();
    let uniform = p_o.iter().all(|p| (p - 1.0 / k as f64).abs() < 1e-12);
    Ok(TheoremBounds {
        round_one_uniform: (rounds == 1 && uniform)
            .then(|| n as f64 + (k as f64).log2()),
        any_rounds: -mass.log2(),
    })
}
