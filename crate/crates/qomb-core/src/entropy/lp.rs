//! Guessing probability of fully classical ensembles.
//!
//! When every block is diagonal the attack comb can be taken diagonal as
//! well, so the semidefinite program collapses to a linear program over
//! the cumulative level distributions of the chain. The LP is solved with
//! Clarabel; an independent backward induction recovers the same value
//! together with an explicit deterministic attack.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettings, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};

use crate::combs::{ClassicalComb, TimeStep, TimeStepStructure};
use crate::operators::{SpaceLayout, SubsystemLabel};

use super::EntropyError;

#[derive(Debug)]
pub(crate) struct LpOutcome {
    pub value: f64,
    pub dual_value: f64,
    pub gap: f64,
    pub status: String,
    pub certificate: ClassicalComb,
}

struct Family {
    layout: SpaceLayout,
    diags: Vec<Vec<f64>>,
    structure: TimeStepStructure,
}

struct Shape {
    /// Input and output digit counts of each level (steps through the last
    /// output-bearing one).
    level_in: Vec<usize>,
    level_out: Vec<usize>,
    /// Cumulative transcript count after each level.
    level_dim: Vec<usize>,
    /// Product of trailing input dimensions past the last output.
    mult: usize,
    /// Product of all input dimensions.
    k_in: f64,
}

fn family(prior: &[f64], blocks: &[ClassicalComb]) -> Result<Family, EntropyError> {
    if blocks.is_empty() {
        return Err(EntropyError::NoHypotheses);
    }
    if prior.len() != blocks.len() {
        return Err(EntropyError::PriorLength);
    }
    let structure = blocks[0].structure().clone();
    let (layout, first) = blocks[0].canonical_diag();
    let mut diags = vec![first];
    for b in &blocks[1..] {
        if b.structure() != &structure {
            return Err(EntropyError::UnsupportedStructure(
                "blocks disagree on the slot pattern".into(),
            ));
        }
        let (lay, d) = b.canonical_diag();
        if lay.names() != layout.names() || lay.dims() != layout.dims() {
            return Err(EntropyError::UnsupportedStructure(
                "blocks disagree on wire names or dimensions".into(),
            ));
        }
        diags.push(d);
    }
    Ok(Family {
        layout,
        diags,
        structure,
    })
}

fn shape(structure: &TimeStepStructure, layout: &SpaceLayout) -> Result<Shape, EntropyError> {
    let dim_of = |name: &str| -> usize {
        let pos = layout.position(name).expect("covered label");
        layout.dims()[pos]
    };
    let steps = structure.steps();
    let last_out = steps.iter().rposition(|s| !s.outputs.is_empty());
    let mut k_in = 1.0f64;
    for s in steps {
        for w in &s.inputs {
            k_in *= dim_of(w) as f64;
        }
    }
    let mut level_in = Vec::new();
    let mut level_out = Vec::new();
    let mut level_dim = Vec::new();
    let mut mult = 1usize;
    if let Some(last) = last_out {
        let mut cum = 1usize;
        for (k, s) in steps.iter().enumerate() {
            if k > last {
                for w in &s.inputs {
                    mult *= dim_of(w);
                }
                continue;
            }
            if s.outputs.is_empty() {
                return Err(EntropyError::UnsupportedStructure(
                    "input-only step before an output-bearing step".into(),
                ));
            }
            let di: usize = s.inputs.iter().map(|w| dim_of(w)).product();
            let dv: usize = s.outputs.iter().map(|w| dim_of(w)).product();
            cum *= di * dv;
            level_in.push(di);
            level_out.push(dv);
            level_dim.push(cum);
        }
    } else {
        for s in steps {
            for w in &s.inputs {
                mult *= dim_of(w);
            }
        }
    }
    Ok(Shape {
        level_in,
        level_out,
        level_dim,
        mult,
        k_in,
    })
}

pub(crate) fn solve_classical_lp(
    prior: &[f64],
    blocks: &[ClassicalComb],
) -> Result<LpOutcome, EntropyError> {
    let fam = family(prior, blocks)?;
    let sh = shape(&fam.structure, &fam.layout)?;
    let total = fam.layout.total_dim();

    if sh.level_dim.is_empty() {
        // no outputs ever leave the comb, so the best attack is the best
        // constant guess
        let mut g0 = 0.0f64;
        for (p, d) in prior.iter().zip(&fam.diags) {
            for v in d {
                g0 = g0.max(p * v);
            }
        }
        let certificate = ClassicalComb::new(
            fam.layout.clone(),
            vec![g0; total],
            fam.structure.clone(),
        )?;
        return Ok(LpOutcome {
            value: g0,
            dual_value: g0,
            gap: 0.0,
            status: "Closed".into(),
            certificate,
        });
    }

    let n_lvl = sh.level_dim.len();
    let mut offset = vec![0usize; n_lvl];
    let mut acc = 0usize;
    for k in 0..n_lvl {
        offset[k] = acc;
        acc += sh.level_dim[k];
    }
    let g0_idx = acc;
    let n_vars = acc + 1;
    let top_dim = sh.level_dim[n_lvl - 1];
    let top_off = offset[n_lvl - 1];

    // domination floor per top transcript
    let mut req = vec![0.0f64; top_dim];
    for (p, d) in prior.iter().zip(&fam.diags) {
        for (cell, v) in d.iter().enumerate() {
            let s = cell / sh.mult;
            let w = p * v;
            if w > req[s] {
                req[s] = w;
            }
        }
    }

    let mut rows_i = Vec::new();
    let mut cols_j = Vec::new();
    let mut vals = Vec::new();
    let mut push = |r: usize, c: usize, v: f64| {
        rows_i.push(r);
        cols_j.push(c);
        vals.push(v);
    };
    let mut n_eq = 0usize;
    for k in 0..n_lvl {
        let prev_dim = if k == 0 { 1 } else { sh.level_dim[k - 1] };
        let (di, dv) = (sh.level_in[k], sh.level_out[k]);
        for sp in 0..prev_dim {
            for a in 0..di {
                let r = n_eq;
                n_eq += 1;
                for b in 0..dv {
                    push(r, offset[k] + (sp * di + a) * dv + b, 1.0);
                }
                if k == 0 {
                    push(r, g0_idx, -1.0);
                } else {
                    push(r, offset[k - 1] + sp, -1.0);
                }
            }
        }
    }
    for i in 0..n_vars {
        push(n_eq + i, i, -1.0);
    }
    let mut b_vec = vec![0.0f64; n_eq + n_vars];
    let mut n_req = 0usize;
    for (s, r) in req.iter().enumerate() {
        if *r > 0.0 {
            push(n_eq + n_vars + n_req, top_off + s, -1.0);
            b_vec.push(-r);
            n_req += 1;
        }
    }

    let n_rows = n_eq + n_vars + n_req;
    let a = CscMatrix::new_from_triplets(n_rows, n_vars, rows_i, cols_j, vals);
    let p_mat = CscMatrix::zeros((n_vars, n_vars));
    let mut q = vec![0.0f64; n_vars];
    let coeff = sh.mult as f64 / sh.k_in;
    for s in 0..top_dim {
        q[top_off + s] = coeff;
    }
    let cones = [
        SupportedConeT::ZeroConeT(n_eq),
        SupportedConeT::NonnegativeConeT(n_vars + n_req),
    ];
    let settings = DefaultSettings {
        verbose: false,
        tol_gap_abs: 1e-12,
        tol_gap_rel: 1e-12,
        tol_feas: 1e-12,
        max_iter: 200,
        ..DefaultSettings::default()
    };
    let mut solver = DefaultSolver::new(&p_mat, &q, &a, &b_vec, &cones, settings)
        .map_err(|e| EntropyError::LpStatus(format!("{e:?}")))?;
    solver.solve();
    let sol = &solver.solution;
    let status = format!("{:?}", sol.status);
    if !matches!(sol.status, SolverStatus::Solved | SolverStatus::AlmostSolved) {
        return Err(EntropyError::LpStatus(status));
    }

    let theta = &sol.x;
    let mut full = vec![0.0f64; total];
    for (cell, slot) in full.iter_mut().enumerate() {
        *slot = theta[top_off + cell / sh.mult];
    }
    let certificate = ClassicalComb::new(fam.layout.clone(), full, fam.structure.clone())?;
    Ok(LpOutcome {
        value: sol.obj_val,
        dual_value: sol.obj_val_dual,
        gap: (sol.obj_val - sol.obj_val_dual).abs(),
        status,
        certificate,
    })
}

/// Optimal deterministic attack by backward induction over the transcript
/// tree, together with its exact value.
pub(crate) fn induction_strategy(
    prior: &[f64],
    blocks: &[ClassicalComb],
    guess_label: &str,
) -> Result<(ClassicalComb, f64), EntropyError> {
    let fam = family(prior, blocks)?;
    shape(&fam.structure, &fam.layout)?;
    let dims = fam.layout.dims();
    let n_wires = dims.len();
    let total = fam.layout.total_dim();
    let nx = prior.len();

    let mut decision = vec![false; n_wires];
    {
        let mut pos = 0usize;
        for step in fam.structure.steps() {
            for _ in &step.inputs {
                decision[pos] = true;
                pos += 1;
            }
            pos += step.outputs.len();
        }
        debug_assert_eq!(pos, n_wires);
    }

    let mut val = vec![0.0f64; total];
    let mut guess = vec![0usize; total];
    for t in 0..total {
        let mut best = f64::NEG_INFINITY;
        let mut arg = 0usize;
        for x in 0..nx {
            let v = prior[x] * fam.diags[x][t];
            if v > best {
                best = v;
                arg = x;
            }
        }
        val[t] = best;
        guess[t] = arg;
    }
    let mut chosen: Vec<Option<Vec<usize>>> = vec![None; n_wires];
    for w in (0..n_wires).rev() {
        let d = dims[w];
        let m = val.len() / d;
        if decision[w] {
            let mut nv = vec![f64::NEG_INFINITY; m];
            let mut amax = vec![0usize; m];
            for p in 0..m {
                for dig in 0..d {
                    let v = val[p * d + dig];
                    if v > nv[p] {
                        nv[p] = v;
                        amax[p] = dig;
                    }
                }
            }
            chosen[w] = Some(amax);
            val = nv;
        } else {
            let mut nv = vec![0.0f64; m];
            for p in 0..m {
                for dig in 0..d {
                    nv[p] += val[p * d + dig];
                }
            }
            val = nv;
        }
    }
    let achieved = val[0];

    let mut e_diag = vec![0.0f64; total * nx];
    let mut suffix = vec![1usize; n_wires + 1];
    for w in (0..n_wires).rev() {
        suffix[w] = suffix[w + 1] * dims[w];
    }
    'next: for t in 0..total {
        for w in 0..n_wires {
            if let Some(amax) = &chosen[w] {
                let prefix = t / suffix[w];
                let digit = (t / suffix[w + 1]) % dims[w];
                if digit != amax[prefix] {
                    continue 'next;
                }
            }
        }
        e_diag[t * nx + guess[t]] = 1.0;
    }

    let mut factors: Vec<SubsystemLabel> = fam.layout.factors().to_vec();
    factors.push(SubsystemLabel::new(guess_label, nx));
    let e_layout = SpaceLayout::new(factors)?;
    let mut steps: Vec<TimeStep> = fam.structure.dual().steps().to_vec();
    match steps.last_mut() {
        Some(last) => last.outputs.push(guess_label.to_string()),
        None => steps.push(TimeStep::new::<&str>(&[], &[guess_label])),
    }
    let e_structure = TimeStepStructure::new(steps)?;
    let comb = ClassicalComb::new(e_layout, e_diag, e_structure)?;
    Ok((comb, achieved))
}
