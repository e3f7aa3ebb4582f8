//! Structural analysis behind the min-entropy solvers.
//!
//! The guessing-probability program optimizes over an unnormalized comb
//! `Gamma` dominating every weighted hypothesis block. Whenever all blocks
//! are simultaneously diagonal on some wire, conjugating a feasible `Gamma`
//! by the projectors onto that wire's basis keeps it feasible (the chain
//! conditions and the objective are invariant under the pinching, and
//! domination survives because the blocks commute with the projectors), so
//! the search may be restricted to block-diagonal candidates. This file
//! detects those wires, splits every chain variable into sectors, and groups
//! duplicate hypotheses; the interior-point code consumes the result.

use crate::combs::{ClassicalQuantumComb, TimeStepStructure};
use crate::operators::{CMat, SpaceLayout};

use super::EntropyError;

/// Absolute entry bound below which coherences are treated as exact zeros
/// during classical-wire detection.
pub(crate) const CLASSICAL_TOL: f64 = 1e-12;

/// One wire of the block space, in canonical slot order.
#[derive(Clone, Debug)]
pub(crate) struct Wire {
    pub name: String,
    pub dim: usize,
    /// Every hypothesis block is diagonal on this wire, so chain variables
    /// are restricted to matrices block-diagonal over its basis.
    pub classical: bool,
    pub step: usize,
    pub is_input: bool,
}

/// Chain variable after output-bearing step `k`. It lives on every wire of
/// steps `1..=k`; classical wires contribute sector digits, the rest a
/// quantum factor of dimension `q`.
#[derive(Clone, Debug)]
pub(crate) struct Level {
    pub step: usize,
    /// Wire indices of this level, canonical order.
    pub wires: Vec<usize>,
    pub q: usize,
    pub sectors: usize,
    /// Dimension split of this step's wires, used by the chain equation
    /// into the previous level.
    pub in_cl: usize,
    pub in_q: usize,
    pub out_cl: usize,
    pub out_q: usize,
}

/// Hypotheses whose blocks coincide entrywise. Dominating the shared block
/// with the largest prior of the group implies every member's constraint,
/// so one constraint per group suffices.
#[derive(Clone, Debug)]
pub(crate) struct HypGroup {
    pub members: Vec<usize>,
    pub coeff: f64,
    /// Member realizing `coeff`; dual mass is attributed to it.
    pub attributed: usize,
}

/// A min-entropy instance after structural analysis: canonical block
/// matrices, sector split, chain levels, and hypothesis groups.
pub struct CombSdpProblem {
    pub(crate) prior: Vec<f64>,
    pub(crate) mats: Vec<CMat>,
    pub(crate) layout: SpaceLayout,
    pub(crate) structure: TimeStepStructure,
    pub(crate) wires: Vec<Wire>,
    pub(crate) levels: Vec<Level>,
    /// Wires of trailing input-only steps. The top variable is constant
    /// across their basis labels and is stored once per assignment class.
    pub(crate) expansion: Vec<usize>,
    pub(crate) mult: usize,
    pub(crate) k_in: f64,
    pub(crate) groups: Vec<HypGroup>,
}

impl CombSdpProblem {
    pub fn new(
        cq: &ClassicalQuantumComb,
        sector_split: bool,
        dedupe_tol: f64,
    ) -> Result<Self, EntropyError> {
        let structure = cq.block_structure().clone();
        let names = structure.canonical_names();
        let prior = cq.prior().to_vec();
        let mut mats = Vec::with_capacity(cq.blocks().len());
        let mut layout: Option<SpaceLayout> = None;
        for b in cq.blocks() {
            let r = b.op.reorder(&names)?;
            if layout.is_none() {
                layout = Some(r.layout().clone());
            }
            mats.push(r.into_matrix());
        }
        let layout = layout.ok_or(EntropyError::NoHypotheses)?;
        let dims = layout.dims();
        let detected = detect_diagonal_wires(&mats, &dims, &layout.strides());

        let steps = structure.steps();
        let last_out = steps
            .iter()
            .rposition(|s| !s.outputs.is_empty())
            .ok_or_else(|| {
                EntropyError::UnsupportedStructure("every step is input-only".into())
            })?;
        for (k, s) in steps.iter().enumerate() {
            if k < last_out && s.outputs.is_empty() {
                return Err(EntropyError::UnsupportedStructure(format!(
                    "step {} sends nothing but a later step does",
                    k + 1
                )));
            }
        }

        // Wire table in canonical order; position matches the layout.
        let mut wires = Vec::with_capacity(dims.len());
        for (k, s) in steps.iter().enumerate() {
            for (name, is_input) in s
                .inputs
                .iter()
                .map(|n| (n, true))
                .chain(s.outputs.iter().map(|n| (n, false)))
            {
                let pos = wires.len();
                let classical = detected[pos] && (sector_split || k > last_out);
                wires.push(Wire {
                    name: name.clone(),
                    dim: dims[pos],
                    classical,
                    step: k,
                    is_input,
                });
            }
        }

        let expansion: Vec<usize> = (0..wires.len())
            .filter(|&w| wires[w].step > last_out)
            .collect();
        for &w in &expansion {
            if !detected[w] {
                return Err(EntropyError::NotClassical(wires[w].name.clone()));
            }
        }
        let mult: usize = expansion.iter().map(|&w| wires[w].dim).product();

        let mut levels = Vec::with_capacity(last_out + 1);
        let mut acc: Vec<usize> = Vec::new();
        let mut cursor = 0usize;
        for (k, step) in steps.iter().take(last_out + 1).enumerate() {
            let mut split = [1usize; 4]; // in_cl, in_q, out_cl, out_q
            for group in [&step.inputs, &step.outputs] {
                let base = if std::ptr::eq(group, &step.inputs) { 0 } else { 2 };
                for _ in group.iter() {
                    let w = cursor;
                    cursor += 1;
                    acc.push(w);
                    if wires[w].classical {
                        split[base] *= wires[w].dim;
                    } else {
                        split[base + 1] *= wires[w].dim;
                    }
                }
            }
            let q: usize = acc
                .iter()
                .filter(|&&w| !wires[w].classical)
                .map(|&w| wires[w].dim)
                .product();
            let sectors: usize = acc
                .iter()
                .filter(|&&w| wires[w].classical)
                .map(|&w| wires[w].dim)
                .product();
            levels.push(Level {
                step: k,
                wires: acc.clone(),
                q,
                sectors,
                in_cl: split[0],
                in_q: split[1],
                out_cl: split[2],
                out_q: split[3],
            });
        }

        let k_in: f64 = wires
            .iter()
            .filter(|w| w.is_input)
            .map(|w| w.dim as f64)
            .product();

        let mut groups: Vec<HypGroup> = Vec::new();
        for x in 0..mats.len() {
            let mut into = None;
            for (gi, g) in groups.iter().enumerate() {
                if max_abs_diff(&mats[x], &mats[g.members[0]]) <= dedupe_tol {
                    into = Some(gi);
                    break;
                }
            }
            match into {
                Some(gi) => {
                    let g = &mut groups[gi];
                    g.members.push(x);
                    if prior[x] > g.coeff {
                        g.coeff = prior[x];
                        g.attributed = x;
                    }
                }
                None => groups.push(HypGroup {
                    members: vec![x],
                    coeff: prior[x],
                    attributed: x,
                }),
            }
        }

        Ok(Self {
            prior,
            mats,
            layout,
            structure,
            wires,
            levels,
            expansion,
            mult,
            k_in,
            groups,
        })
    }

    pub fn n_hypotheses(&self) -> usize {
        self.mats.len()
    }

    pub fn n_distinct(&self) -> usize {
        self.groups.len()
    }

    /// Total input dimension `K`; the guessing probability is `Tr[Gamma]/K`.
    pub fn input_dim(&self) -> f64 {
        self.k_in
    }

    pub fn expansion_multiplier(&self) -> usize {
        self.mult
    }

    /// Wires on which every block is diagonal and the solver splits sectors.
    pub fn classical_wires(&self) -> Vec<&str> {
        self.wires
            .iter()
            .filter(|w| w.classical)
            .map(|w| w.name.as_str())
            .collect()
    }

    /// True when every chain variable is fully diagonal; the program then
    /// degenerates to a linear program over sector weights.
    pub fn is_diagonal(&self) -> bool {
        self.levels.iter().all(|l| l.q == 1)
    }

    /// `(sectors, quantum dim)` of each chain level, top level last.
    pub fn sector_shape(&self) -> Vec<(usize, usize)> {
        self.levels.iter().map(|l| (l.sectors, l.q)).collect()
    }

    pub fn n_equalities(&self) -> usize {
        let mut total = 0usize;
        let mut prev_sectors = 1usize;
        let mut prev_q = 1usize;
        for l in &self.levels {
            let qp = prev_q * l.in_q;
            total += prev_sectors * l.in_cl * qp * qp;
            prev_sectors = l.sectors;
            prev_q = l.q;
        }
        total
    }

    pub fn n_variables(&self) -> usize {
        1 + self
            .levels
            .iter()
            .map(|l| l.sectors * l.q * l.q)
            .sum::<usize>()
    }

    pub(crate) fn top(&self) -> &Level {
        self.levels.last().expect("at least one output-bearing step")
    }

    /// Full-space index of each `(sector, expansion, quantum)` basis label of
    /// the top level; row `s * mult + e` lists the `q` indices of that cell.
    pub(crate) fn top_index_table(&self) -> Vec<Vec<usize>> {
        let top = self.top();
        let strides = self.layout.strides();
        let cl: Vec<usize> = top
            .wires
            .iter()
            .copied()
            .filter(|&w| self.wires[w].classical)
            .collect();
        let qw: Vec<usize> = top
            .wires
            .iter()
            .copied()
            .filter(|&w| !self.wires[w].classical)
            .collect();
        let spread = |mut v: usize, ws: &[usize]| -> usize {
            let mut idx = 0usize;
            for &w in ws.iter().rev() {
                idx += (v % self.wires[w].dim) * strides[w];
                v /= self.wires[w].dim;
            }
            idx
        };
        let mut out = Vec::with_capacity(top.sectors * self.mult);
        for s in 0..top.sectors {
            let s_base = spread(s, &cl);
            for e in 0..self.mult {
                let e_base = spread(e, &self.expansion);
                let mut row = Vec::with_capacity(top.q);
                for r in 0..top.q {
                    row.push(s_base + e_base + spread(r, &qw));
                }
                out.push(row);
            }
        }
        out
    }
}

/// Wires on which every block matrix is diagonal: any entry above
/// `CLASSICAL_TOL` whose row and column labels differ on the wire rules it
/// out.
fn detect_diagonal_wires(mats: &[CMat], dims: &[usize], strides: &[usize]) -> Vec<bool> {
    let n_w = dims.len();
    let mut diagonal = vec![true; n_w];
    for m in mats {
        let d = m.nrows();
        for r in 0..d {
            for c in 0..d {
                if r == c || m[(r, c)].norm() <= CLASSICAL_TOL {
                    continue;
                }
                for w in 0..n_w {
                    if diagonal[w] && (r / strides[w]) % dims[w] != (c / strides[w]) % dims[w] {
                        diagonal[w] = false;
                    }
                }
            }
        }
    }
    diagonal
}

fn max_abs_diff(a: &CMat, b: &CMat) -> f64 {
    if a.nrows() != b.nrows() {
        return f64::INFINITY;
    }
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}
