//! Open graphs and gflow: verification of the five defining conditions,
//! exhaustive enumeration, correction sets, induced DAGs, and compatibility
//! of the generated partial orders.
//!
//! Vertices are 1-based. Vertex sets are stored as bitmasks (bit `v-1` for
//! vertex `v`), which keeps the parity computation for odd neighborhoods and
//! the enumeration loop cheap.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

/// Default cap on candidate maps visited by [`enumerate_gflows`].
pub const DEFAULT_ENUMERATION_CAP: u64 = 10_000_000;

#[derive(Debug, Error)]
pub enum GflowError {
    #[error("vertex {0} out of range 1..={1}")]
    VertexOutOfRange(usize, usize),
    #[error("edge ({0},{1}) is a self loop")]
    SelfLoop(usize, usize),
    #[error("graph is not connected")]
    Disconnected,
    #[error("measurement plane missing for measured vertex {0}")]
    MissingPlane(usize),
    #[error("candidate domain must be exactly the measured vertices; offending vertex {0}")]
    DomainMismatch(usize),
    #[error("g({v}) contains {w}, which is an input vertex")]
    CodomainEscapes { v: usize, w: usize },
    #[error("enumeration would visit {0} candidate maps, above the cap {1}")]
    CapExceeded(u64, u64),
    #[error("induced parent relation has a cycle through vertex {0}; gflow verification is inconsistent")]
    InternalCycle(usize),
}

/// Measurement plane of a measured qubit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Plane {
    XY,
    XZ,
    YZ,
}

impl std::fmt::Display for Plane {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Plane::XY => "XY",
            Plane::XZ => "XZ",
            Plane::YZ => "YZ",
        })
    }
}

/// Plane constraint for a measured vertex: pinned to one plane, or free
/// (any plane whose two membership conditions can be met).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlaneChoice {
    One(Plane),
    Any,
}

impl Serialize for PlaneChoice {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            PlaneChoice::One(p) => p.serialize(s),
            PlaneChoice::Any => "any".serialize(s),
        }
    }
}

impl<'de> Deserialize<'de> for PlaneChoice {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        let text = String::deserialize(de)?;
        match text.as_str() {
            "XY" => Ok(PlaneChoice::One(Plane::XY)),
            "XZ" => Ok(PlaneChoice::One(Plane::XZ)),
            "YZ" => Ok(PlaneChoice::One(Plane::YZ)),
            "any" | "Any" => Ok(PlaneChoice::Any),
            other => Err(serde::de::Error::custom(format!(
                "unknown plane choice `{other}`"
            ))),
        }
    }
}

fn mask_of(vertices: &[usize], n: usize) -> Result<u64, GflowError> {
    let mut m = 0u64;
    for &v in vertices {
        if v == 0 || v > n {
            return Err(GflowError::VertexOutOfRange(v, n));
        }
        m |= 1 << (v - 1);
    }
    Ok(m)
}

fn mask_to_vec(mut m: u64) -> Vec<usize> {
    let mut out = Vec::new();
    while m != 0 {
        let b = m.trailing_zeros() as usize;
        out.push(b + 1);
        m &= m - 1;
    }
    out
}

/// Simple connected graph with distinguished input and output vertices and a
/// plane constraint for every measured (non-output) vertex.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OpenGraph {
    n: usize,
    adj: Vec<u64>,
    inputs: u64,
    outputs: u64,
    planes: BTreeMap<usize, PlaneChoice>,
}

impl OpenGraph {
    pub fn new(
        n: usize,
        edges: &[(usize, usize)],
        inputs: &[usize],
        outputs: &[usize],
        planes: BTreeMap<usize, PlaneChoice>,
    ) -> Result<Self, GflowError> {
        assert!(n >= 1 && n <= 63, "vertex count must fit a bitmask");
        let mut adj = vec![0u64; n + 1];
        for &(a, b) in edges {
            if a == b {
                return Err(GflowError::SelfLoop(a, b));
            }
            if a == 0 || a > n {
                return Err(GflowError::VertexOutOfRange(a, n));
            }
            if b == 0 || b > n {
                return Err(GflowError::VertexOutOfRange(b, n));
            }
            adj[a] |= 1 << (b - 1);
            adj[b] |= 1 << (a - 1);
        }
        // connectivity by BFS from vertex 1
        if n > 1 {
            let mut seen = 1u64;
            let mut frontier = 1u64;
            while frontier != 0 {
                let mut next = 0u64;
                let mut f = frontier;
                while f != 0 {
                    let v = f.trailing_zeros() as usize + 1;
                    f &= f - 1;
                    next |= adj[v] & !seen;
                }
                seen |= next;
                frontier = next;
            }
            if seen.count_ones() as usize != n {
                return Err(GflowError::Disconnected);
            }
        }
        let inputs = mask_of(inputs, n)?;
        let outputs = mask_of(outputs, n)?;
        let graph = Self {
            n,
            adj,
            inputs,
            outputs,
            planes,
        };
        for v in graph.measured_vertices() {
            if !graph.planes.contains_key(&v) {
                return Err(GflowError::MissingPlane(v));
            }
        }
        Ok(graph)
    }

    /// Same plane constraint on every measured vertex.
    pub fn with_uniform_planes(
        n: usize,
        edges: &[(usize, usize)],
        inputs: &[usize],
        outputs: &[usize],
        choice: PlaneChoice,
    ) -> Result<Self, GflowError> {
        let outputs_mask = mask_of(outputs, n)?;
        let planes = (1..=n)
            .filter(|v| outputs_mask & (1 << (v - 1)) == 0)
            .map(|v| (v, choice))
            .collect();
        Self::new(n, edges, inputs, outputs, planes)
    }

    pub fn n_vertices(&self) -> usize {
        self.n
    }

    pub fn inputs(&self) -> Vec<usize> {
        mask_to_vec(self.inputs)
    }

    pub fn outputs(&self) -> Vec<usize> {
        mask_to_vec(self.outputs)
    }

    /// Non-output vertices in ascending order.
    pub fn measured_vertices(&self) -> Vec<usize> {
        (1..=self.n)
            .filter(|v| self.outputs & (1 << (v - 1)) == 0)
            .collect()
    }

    pub fn plane_choice(&self, v: usize) -> Option<PlaneChoice> {
        self.planes.get(&v).copied()
    }

    pub fn neighbors(&self, v: usize) -> Vec<usize> {
        mask_to_vec(self.adj[v])
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for a in 1..=self.n {
            for b in mask_to_vec(self.adj[a]) {
                if a < b {
                    out.push((a, b));
                }
            }
        }
        out
    }

    pub(crate) fn odd_mask(&self, k: u64) -> u64 {
        let mut acc = 0u64;
        let mut m = k;
        while m != 0 {
            let v = m.trailing_zeros() as usize + 1;
            m &= m - 1;
            acc ^= self.adj[v];
        }
        acc
    }

    /// Odd neighborhood: vertices with an odd number of neighbors in `k`.
    pub fn odd_neighborhood(&self, k: &[usize]) -> Result<Vec<usize>, GflowError> {
        Ok(mask_to_vec(self.odd_mask(mask_of(k, self.n)?)))
    }

    fn candidate_mask_space(&self) -> u64 {
        // g(v) ranges over subsets of I^c
        !self.inputs & ((1u64 << self.n) - 1)
    }
}

/// Which defining condition a candidate map breaks.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum GflowViolation {
    /// Clause 1: some w in g(v), w != v, is not in v's future.
    GNotInFuture { v: usize, w: usize },
    /// Clause 2: some w in Odd(g(v)), w != v, is not in v's future.
    OddNotInFuture { v: usize, w: usize },
    /// Clauses 3-5: the required plane memberships fail.
    PlaneCondition {
        v: usize,
        plane: Plane,
        in_g: bool,
        in_odd: bool,
    },
    /// Free-plane vertex with (v in g(v), v in Odd(g(v))) = (false, false),
    /// which no plane accepts.
    NoPlaneFits { v: usize },
    /// The generated order relation is cyclic, so no strict partial order
    /// witnesses clauses 1-2.
    CyclicOrder { through: usize },
}

#[derive(Clone, Debug)]
pub struct VerifyReport {
    pub valid: bool,
    pub violations: Vec<GflowViolation>,
}

/// A verified gflow: the map, the induced plane per measured vertex, and the
/// minimal generated strict partial order (stored as reachability masks).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Gflow {
    g: BTreeMap<usize, u64>,
    planes: BTreeMap<usize, Plane>,
    /// `succ[v]` = vertices strictly after `v` in the generated order.
    succ: Vec<u64>,
    /// Generating edges `v -> w` from clauses 1-2 (before transitive closure).
    edges: Vec<(usize, usize)>,
}

impl Gflow {
    /// Correction-set image `g(v)`, ascending.
    pub fn g(&self, v: usize) -> Option<Vec<usize>> {
        self.g.get(&v).map(|m| mask_to_vec(*m))
    }

    pub(crate) fn g_mask(&self, v: usize) -> u64 {
        self.g[&v]
    }

    pub fn domain(&self) -> Vec<usize> {
        self.g.keys().copied().collect()
    }

    pub fn plane(&self, v: usize) -> Option<Plane> {
        self.planes.get(&v).copied()
    }

    /// Strictly-before relation of the generated partial order.
    pub fn before(&self, a: usize, b: usize) -> bool {
        self.succ[a] & (1 << (b - 1)) != 0
    }

    pub fn generated_edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// A total order (as a vertex list, earliest first) extending the
    /// generated order: lexicographically smallest topological order, so the
    /// layout of downstream comb constructions is reproducible.
    pub fn minimal_total_order(&self, n: usize) -> Vec<usize> {
        let mut indeg = vec![0usize; n + 1];
        for &(_, w) in &self.edges {
            indeg[w] += 1;
        }
        let mut out = Vec::with_capacity(n);
        let mut ready: Vec<usize> = (1..=n).filter(|&v| indeg[v] == 0).collect();
        while !ready.is_empty() {
            ready.sort_unstable();
            let v = ready.remove(0);
            out.push(v);
            for &(a, w) in &self.edges {
                if a == v {
                    indeg[w] -= 1;
                    if indeg[w] == 0 {
                        ready.push(w);
                    }
                }
            }
        }
        debug_assert_eq!(out.len(), n, "generated order is acyclic");
        out
    }

    /// True iff every generated relation is consistent with `total`, a vertex
    /// list in causal order.
    pub fn embeds_in(&self, total: &[usize]) -> bool {
        let pos: BTreeMap<usize, usize> =
            total.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        self.edges
            .iter()
            .all(|(a, b)| match (pos.get(a), pos.get(b)) {
                (Some(x), Some(y)) => x < y,
                _ => false,
            })
    }
}

fn induced_plane(in_g: bool, in_odd: bool) -> Option<Plane> {
    match (in_g, in_odd) {
        (false, true) => Some(Plane::XY),
        (true, true) => Some(Plane::XZ),
        (true, false) => Some(Plane::YZ),
        (false, false) => None,
    }
}

/// Check the five gflow conditions for `candidate` (a map from each measured
/// vertex to a vertex set) against the graph's plane constraints. Domain and
/// codomain mismatches are hard errors; condition failures are reported as
/// violations.
pub fn verify_gflow(
    graph: &OpenGraph,
    candidate: &BTreeMap<usize, Vec<usize>>,
) -> Result<(VerifyReport, Option<Gflow>), GflowError> {
    let measured = graph.measured_vertices();
    for v in &measured {
        if !candidate.contains_key(v) {
            return Err(GflowError::DomainMismatch(*v));
        }
    }
    for v in candidate.keys() {
        if !measured.contains(v) {
            return Err(GflowError::DomainMismatch(*v));
        }
    }
    let mut masks = BTreeMap::new();
    for (&v, set) in candidate {
        let m = mask_of(set, graph.n_vertices())?;
        if m & graph.inputs != 0 {
            let w = (m & graph.inputs).trailing_zeros() as usize + 1;
            return Err(GflowError::CodomainEscapes { v, w });
        }
        masks.insert(v, m);
    }
    Ok(check_masks(graph, &masks))
}

/// Shared core of verification and enumeration.
fn check_masks(graph: &OpenGraph, masks: &BTreeMap<usize, u64>) -> (VerifyReport, Option<Gflow>) {
    let n = graph.n_vertices();
    let mut violations = Vec::new();
    let mut planes = BTreeMap::new();
    let mut edges: Vec<(usize, usize)> = Vec::new();
    for (&v, &gm) in masks {
        let bit = 1u64 << (v - 1);
        let odd = graph.odd_mask(gm);
        let in_g = gm & bit != 0;
        let in_odd = odd & bit != 0;
        match (graph.plane_choice(v), induced_plane(in_g, in_odd)) {
            (Some(PlaneChoice::One(p)), got) => {
                if got == Some(p) {
                    planes.insert(v, p);
                } else {
                    violations.push(GflowViolation::PlaneCondition {
                        v,
                        plane: p,
                        in_g,
                        in_odd,
                    });
                }
            }
            (Some(PlaneChoice::Any), Some(p)) => {
                planes.insert(v, p);
            }
            (Some(PlaneChoice::Any), None) => {
                violations.push(GflowViolation::NoPlaneFits { v });
            }
            (None, _) => unreachable!("graph invariant guarantees a plane constraint"),
        }
        for w in mask_to_vec((gm | odd) & !bit) {
            edges.push((v, w));
        }
    }
    // Clauses 1-2 demand every generated edge point into the future of some
    // strict partial order; such an order exists iff the relation is acyclic.
    // A cycle necessarily passes through a measured vertex (only they have
    // outgoing edges), and any measured w with an incoming edge v -> w
    // witnesses the violation v < w unrealizable when on a cycle.
    let mut succ = vec![0u64; n + 1];
    let mut cyclic_through = None;
    {
        // Kahn's algorithm for cycle detection.
        let mut indeg = vec![0usize; n + 1];
        for &(_, w) in &edges {
            indeg[w] += 1;
        }
        let mut stack: Vec<usize> = (1..=n).filter(|&v| indeg[v] == 0).collect();
        let mut seen = 0usize;
        while let Some(v) = stack.pop() {
            seen += 1;
            for &(a, w) in &edges {
                if a == v {
                    indeg[w] -= 1;
                    if indeg[w] == 0 {
                        stack.push(w);
                    }
                }
            }
        }
        if seen != n {
            let through = (1..=n).find(|&v| indeg[v] > 0).unwrap_or(1);
            cyclic_through = Some(through);
        }
    }
    match cyclic_through {
        Some(through) => violations.push(GflowViolation::CyclicOrder { through }),
        None => {
            // reachability closure; iterate to fixpoint (graphs are tiny)
            let mut adj_out = vec![0u64; n + 1];
            for &(v, w) in &edges {
                adj_out[v] |= 1 << (w - 1);
            }
            let mut changed = true;
            while changed {
                changed = false;
                for v in 1..=n {
                    let mut acc = adj_out[v];
                    let mut m = adj_out[v];
                    while m != 0 {
                        let w = m.trailing_zeros() as usize + 1;
                        m &= m - 1;
                        acc |= succ[w];
                    }
                    if acc != succ[v] {
                        succ[v] = acc;
                        changed = true;
                    }
                }
            }
        }
    }
    let valid = violations.is_empty();
    let gflow = valid.then(|| Gflow {
        g: masks.clone(),
        planes,
        succ,
        edges,
    });
    (VerifyReport { valid, violations }, gflow)
}

/// Exhaustive search over all maps `g: measured -> P(I^c)`. Returned gflows
/// are listed lexicographically by (vertex, image bitmask). An optional total
/// order (vertex list, earliest first) keeps only gflows whose generated
/// order embeds into it.
pub fn enumerate_gflows(
    graph: &OpenGraph,
    order_constraint: Option<&[usize]>,
) -> Result<Vec<Gflow>, GflowError> {
    enumerate_gflows_capped(graph, order_constraint, DEFAULT_ENUMERATION_CAP)
}

pub fn enumerate_gflows_capped(
    graph: &OpenGraph,
    order_constraint: Option<&[usize]>,
    cap: u64,
) -> Result<Vec<Gflow>, GflowError> {
    let measured = graph.measured_vertices();
    let k = measured.len();
    if k == 0 {
        // the empty map is vacuously a gflow
        let (_, gf) = check_masks(graph, &BTreeMap::new());
        return Ok(vec![gf.expect("empty map is valid")]);
    }
    let space = graph.candidate_mask_space();
    let options = space.count_ones() as usize;
    let total: u64 = 1u64
        .checked_shl(((options * k).min(63)) as u32)
        .unwrap_or(u64::MAX);
    if total > cap {
        return Err(GflowError::CapExceeded(total, cap));
    }
    // enumerate subsets of `space` in increasing mask order per vertex
    let subsets: Vec<u64> = {
        let mut list = Vec::with_capacity(1usize << options);
        let mut s = 0u64;
        loop {
            list.push(s);
            if s == space {
                break;
            }
            s = (s.wrapping_sub(space)) & space; // next subset of `space`
        }
        list.sort_unstable();
        list
    };
    let mut out = Vec::new();
    let mut idx = vec![0usize; k];
    loop {
        let masks: BTreeMap<usize, u64> = measured
            .iter()
            .enumerate()
            .map(|(i, &v)| (v, subsets[idx[i]]))
            .collect();
        let (report, gflow) = check_masks(graph, &masks);
        if report.valid {
            let gf = gflow.expect("valid reports carry the gflow");
            let keep = match order_constraint {
                Some(total_order) => gf.embeds_in(total_order),
                None => true,
            };
            if keep {
                out.push(gf);
            }
        }
        // odometer increment; first vertex is the most significant digit, so
        // the visit order is already lexicographic
        let mut pos = k;
        loop {
            if pos == 0 {
                return Ok(out);
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < subsets.len() {
                break;
            }
            idx[pos] = 0;
        }
    }
}

/// Correction sets: `x_sets[v]` lists the measured vertices whose outcome
/// flips X on `v`, `z_sets[v]` those flipping Z. Self-membership `v in g(v)`
/// or `v in Odd(g(v))` is excluded: a vertex never corrects itself.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorrectionSets {
    pub x_sets: BTreeMap<usize, Vec<usize>>,
    pub z_sets: BTreeMap<usize, Vec<usize>>,
}

pub fn correction_sets(gflow: &Gflow, graph: &OpenGraph) -> CorrectionSets {
    let n = graph.n_vertices();
    let mut x_sets: BTreeMap<usize, Vec<usize>> = (1..=n).map(|v| (v, Vec::new())).collect();
    let mut z_sets = x_sets.clone();
    for &vp in &gflow.domain() {
        let gm = gflow.g_mask(vp);
        let odd = graph.odd_mask(gm);
        let self_bit = 1u64 << (vp - 1);
        for v in mask_to_vec(gm & !self_bit) {
            x_sets.get_mut(&v).unwrap().push(vp);
        }
        for v in mask_to_vec(odd & !self_bit) {
            z_sets.get_mut(&v).unwrap().push(vp);
        }
    }
    for set in x_sets.values_mut().chain(z_sets.values_mut()) {
        set.sort_unstable();
    }
    CorrectionSets { x_sets, z_sets }
}

/// Dependency DAG of the correction sets: an edge `j -> i` whenever j's
/// outcome enters i's correction, i.e. `Pa(i) = X_i  union  Z_i`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InducedDag {
    pub n_vertices: usize,
    /// Directed edges `(from, to)`, sorted.
    pub edges: Vec<(usize, usize)>,
}

impl InducedDag {
    pub fn parents(&self, v: usize) -> Vec<usize> {
        self.edges
            .iter()
            .filter(|(_, to)| *to == v)
            .map(|(from, _)| *from)
            .collect()
    }

    /// Graphviz rendering, one node per vertex.
    pub fn to_dot(&self) -> String {
        let mut s = String::from("digraph corrections {\n");
        for v in 1..=self.n_vertices {
            s.push_str(&format!("  {v};\n"));
        }
        for (a, b) in &self.edges {
            s.push_str(&format!("  {a} -> {b};\n"));
        }
        s.push_str("}\n");
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("plain data serializes")
    }
}

pub fn induced_dag(gflow: &Gflow, graph: &OpenGraph) -> Result<InducedDag, GflowError> {
    let sets = correction_sets(gflow, graph);
    let n = graph.n_vertices();
    let mut edges = Vec::new();
    for v in 1..=n {
        for &j in sets.x_sets[&v].iter().chain(sets.z_sets[&v].iter()) {
            let e = (j, v);
            if !edges.contains(&e) {
                edges.push(e);
            }
        }
    }
    edges.sort_unstable();
    // a cycle here would contradict the acyclicity established at
    // verification time, so it is an internal inconsistency
    let mut indeg = vec![0usize; n + 1];
    for &(_, b) in &edges {
        indeg[b] += 1;
    }
    let mut stack: Vec<usize> = (1..=n).filter(|&v| indeg[v] == 0).collect();
    let mut seen = 0usize;
    while let Some(v) = stack.pop() {
        seen += 1;
        for &(a, b) in &edges {
            if a == v {
                indeg[b] -= 1;
                if indeg[b] == 0 {
                    stack.push(b);
                }
            }
        }
    }
    if seen != n {
        let through = (1..=n).find(|&v| indeg[v] > 0).unwrap_or(1);
        return Err(GflowError::InternalCycle(through));
    }
    Ok(InducedDag {
        n_vertices: n,
        edges,
    })
}

/// True iff the union of the generated orders is acyclic, i.e. one total
/// order is compatible with every gflow in the list.
pub fn orders_compatible(gflows: &[&Gflow], n_vertices: usize) -> bool {
    let mut edges: Vec<(usize, usize)> = Vec::new();
    for gf in gflows {
        for &e in gf.generated_edges() {
            if !edges.contains(&e) {
                edges.push(e);
            }
        }
    }
    let mut indeg = vec![0usize; n_vertices + 1];
    for &(_, b) in &edges {
        indeg[b] += 1;
    }
    let mut stack: Vec<usize> = (1..=n_vertices).filter(|&v| indeg[v] == 0).collect();
    let mut seen = 0usize;
    while let Some(v) = stack.pop() {
        seen += 1;
        for &(a, b) in &edges {
            if a == v {
                indeg[b] -= 1;
                if indeg[b] == 0 {
                    stack.push(b);
                }
            }
        }
    }
    seen == n_vertices
}

// ---------------------------------------------------------------------------
// Shared graph fixtures.

/// Path 1 - 2 - 3. Used by the reference-frame calibration scenario.
pub fn line_graph_3() -> OpenGraph {
    OpenGraph::with_uniform_planes(
        3,
        &[(1, 2), (2, 3)],
        &[1],
        &[3],
        PlaneChoice::One(Plane::XY),
    )
    .expect("line graph is well formed")
}

/// Triangle on three vertices, measured vertex 1, outputs {2,3}. This is the
/// smallest instance of the classically-driven blind protocol: exactly two
/// gflows, and the reporting distribution is maximally uninformative.
pub fn triangle_graph() -> OpenGraph {
    OpenGraph::with_uniform_planes(
        3,
        &[(1, 2), (1, 3), (2, 3)],
        &[1],
        &[2, 3],
        PlaneChoice::One(Plane::XY),
    )
    .expect("triangle graph is well formed")
}

/// The four-vertex graph with edges 12, 13, 14, 24, 34, input {1}, outputs
/// {3,4}, planes unconstrained. It admits exactly fifteen gflows, five for
/// each plane of qubit 2.
pub fn four_qubit_graph() -> OpenGraph {
    OpenGraph::with_uniform_planes(
        4,
        &[(1, 2), (1, 3), (1, 4), (2, 4), (3, 4)],
        &[1],
        &[3, 4],
        PlaneChoice::Any,
    )
    .expect("four-qubit graph is well formed")
}

/// The fifteen gflow maps of [`four_qubit_graph`] in catalogue order: indices
/// 1-5 give qubit 2 the XY plane, 6-10 XZ, 11-15 YZ. Entry `i` holds
/// `(g(1), g(2))` for catalogue label `i+1`.
pub fn four_qubit_catalogue() -> Vec<(Vec<usize>, Vec<usize>)> {
    vec![
        (vec![2], vec![3, 4]),       // g1
        (vec![3], vec![3, 4]),       // g2
        (vec![3], vec![4]),          // g3
        (vec![4], vec![3, 4]),       // g4
        (vec![2, 3, 4], vec![3, 4]), // g5
        (vec![2], vec![2, 4]),       // g6
        (vec![3], vec![2, 4]),       // g7
        (vec![3], vec![2, 3, 4]),    // g8
        (vec![4], vec![2, 4]),       // g9
        (vec![2, 3, 4], vec![2, 4]), // g10
        (vec![2], vec![2, 3]),       // g11
        (vec![3], vec![2]),          // g12
        (vec![3], vec![2, 3]),       // g13
        (vec![4], vec![2, 3]),       // g14
        (vec![2, 3, 4], vec![2, 3]), // g15
    ]
}

/// Catalogue label (1-based) of each gflow in the lexicographic enumeration
/// order produced by [`enumerate_gflows`] on [`four_qubit_graph`].
pub const FOUR_QUBIT_ENUM_TO_CATALOGUE: [usize; 15] =
    [11, 6, 1, 12, 13, 3, 7, 2, 8, 14, 9, 4, 15, 10, 5];
