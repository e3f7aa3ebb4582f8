//! Comb structures over labeled operators: time-step bookkeeping, the
//! partial-trace validation chain, classical (diagonal) combs, and
//! classical-quantum ensembles with block-wise storage.
//!
//! A comb on steps `(I_1 -> O_1), ..., (I_n -> O_n)` is a PSD operator `D`
//! with `Tr_{O_k}[D_k] = I_{I_k} (x) D_{k-1}` down to a scalar `D_0`; `D_0 = 1`
//! for normalized combs. Classical combs keep the same chain for a diagonal
//! distribution. A classical-quantum comb stores `P(x)` and per-`x` blocks and
//! is only assembled on demand: every solver downstream consumes the blocks,
//! which is what keeps the larger ensembles tractable.

use crate::operators::{
    c, CMat, LabeledOperator, OperatorError, PsdCheck, SpaceLayout, SubsystemLabel, Tolerances,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Assembled operators above this dimension are refused by default.
pub const DEFAULT_DIM_CAP: usize = 4096;

#[derive(Debug, Error)]
pub enum CombError {
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error("label `{0}` appears in more than one slot")]
    DuplicateSlotLabel(String),
    #[error("structure does not cover the layout: missing {missing:?}, extra {extra:?}")]
    Coverage {
        missing: Vec<String>,
        extra: Vec<String>,
    },
    #[error("prior sums to {0}, expected 1 within 1e-12")]
    PriorNotNormalized(f64),
    #[error("prior entry {0} is negative")]
    NegativePrior(f64),
    #[error("classical-quantum comb needs at least one block")]
    EmptyBlocks,
    #[error("x label dimension {x_dim} does not match the number of blocks {blocks}")]
    XDimMismatch { x_dim: usize, blocks: usize },
    #[error("block {index} disagrees with block 0 on {what}")]
    BlockMismatch { index: usize, what: String },
    #[error("operator dimension {dim} exceeds the cap {cap}")]
    DimCapExceeded { dim: usize, cap: usize },
    #[error("diagonal has {got} entries but the layout dimension is {expected}")]
    DiagLength { got: usize, expected: usize },
    #[error("operands share no layout, or wire names disagree: {0}")]
    PairingMismatch(String),
}

/// One causal slot: classical or quantum wires entering, then leaving.
/// Either side may be empty (the trivial one-dimensional space).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeStep {
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
}

impl TimeStep {
    pub fn new<S: Into<String> + Clone>(inputs: &[S], outputs: &[S]) -> Self {
        Self {
            inputs: inputs.iter().cloned().map(Into::into).collect(),
            outputs: outputs.iter().cloned().map(Into::into).collect(),
        }
    }

    pub fn is_trivial(&self) -> bool {
        self.inputs.is_empty() && self.outputs.is_empty()
    }
}

/// Ordered causal slots; slot order defines the causal order of the comb.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<TimeStep>", into = "Vec<TimeStep>")]
pub struct TimeStepStructure {
    steps: Vec<TimeStep>,
}

impl TryFrom<Vec<TimeStep>> for TimeStepStructure {
    type Error = CombError;
    fn try_from(steps: Vec<TimeStep>) -> Result<Self, CombError> {
        Self::new(steps)
    }
}

impl From<TimeStepStructure> for Vec<TimeStep> {
    fn from(s: TimeStepStructure) -> Self {
        s.steps
    }
}

impl TimeStepStructure {
    pub fn new(steps: Vec<TimeStep>) -> Result<Self, CombError> {
        let mut seen: Vec<&str> = Vec::new();
        for step in &steps {
            for name in step.inputs.iter().chain(step.outputs.iter()) {
                if seen.contains(&name.as_str()) {
                    return Err(CombError::DuplicateSlotLabel(name.clone()));
                }
                seen.push(name);
            }
        }
        Ok(Self { steps })
    }

    /// Build from `(inputs, outputs)` pairs of static names.
    pub fn of(steps: &[(&[&str], &[&str])]) -> Self {
        Self::new(
            steps
                .iter()
                .map(|(i, o)| TimeStep::new(i, o))
                .collect::<Vec<_>>(),
        )
        .expect("static structure must be well formed")
    }

    pub fn steps(&self) -> &[TimeStep] {
        &self.steps
    }

    pub fn n_steps(&self) -> usize {
        self.steps.len()
    }

    /// All labels in slot order: inputs then outputs of step 1, then step 2...
    /// This is the canonical storage order used by the validator.
    pub fn canonical_names(&self) -> Vec<&str> {
        let mut out = Vec::new();
        for step in &self.steps {
            out.extend(step.inputs.iter().map(String::as_str));
            out.extend(step.outputs.iter().map(String::as_str));
        }
        out
    }

    /// Structure equality test against a layout: same label multiset.
    pub fn covers(&self, layout: &SpaceLayout) -> Result<(), CombError> {
        let mine = self.canonical_names();
        let missing: Vec<String> = layout
            .names()
            .iter()
            .filter(|n| !mine.contains(n))
            .map(|n| n.to_string())
            .collect();
        let extra: Vec<String> = mine
            .iter()
            .filter(|n| !layout.contains(n))
            .map(|n| n.to_string())
            .collect();
        if missing.is_empty() && extra.is_empty() {
            Ok(())
        } else {
            Err(CombError::Coverage { missing, extra })
        }
    }

    /// Dual slot pattern `(0 -> I_1), (O_1 -> I_2), ..., (O_n -> 0)`, with
    /// fully trivial slots dropped so that the dual of the dual reproduces
    /// the original pattern.
    pub fn dual(&self) -> Self {
        let n = self.steps.len();
        let mut steps = Vec::with_capacity(n + 1);
        for k in 0..=n {
            let inputs = if k == 0 {
                Vec::new()
            } else {
                self.steps[k - 1].outputs.clone()
            };
            let outputs = if k == n {
                Vec::new()
            } else {
                self.steps[k].inputs.clone()
            };
            let step = TimeStep { inputs, outputs };
            if !step.is_trivial() {
                steps.push(step);
            }
        }
        Self { steps }
    }

    /// Rename every wire through `f`, keeping the slot pattern.
    pub fn relabeled(&self, f: impl Fn(&str) -> String) -> Self {
        Self {
            steps: self
                .steps
                .iter()
                .map(|s| TimeStep {
                    inputs: s.inputs.iter().map(|n| f(n)).collect(),
                    outputs: s.outputs.iter().map(|n| f(n)).collect(),
                })
                .collect(),
        }
    }

    /// Concatenate two structures (used for multi-round stacking). Label
    /// disjointness is re-checked.
    pub fn then(&self, later: &Self) -> Result<Self, CombError> {
        let mut steps = self.steps.clone();
        steps.extend(later.steps.iter().cloned());
        Self::new(steps)
    }
}

/// Validation report for a quantum comb candidate.
#[derive(Clone, Debug)]
pub struct CombReport {
    pub psd: PsdCheck,
    /// Residual of `Tr_{O_k}[D_k] = I_{I_k} (x) D_{k-1}`, indexed by step
    /// (entry 0 is step 1).
    pub step_residuals: Vec<f64>,
    /// The terminal scalar `D_0`.
    pub terminal: f64,
    /// Largest imaginary part encountered while reducing to `D_0`.
    pub imag_residual: f64,
    pub accepted: bool,
}

impl CombReport {
    pub fn max_step_residual(&self) -> f64 {
        self.step_residuals.iter().copied().fold(0.0, f64::max)
    }
}

fn max_abs_entry(m: &CMat) -> f64 {
    m.iter().map(|v| v.norm()).fold(0.0, f64::max)
}

/// Run the partial-trace chain of conditions for `op` against `structure`.
///
/// `D_{k-1}` is extracted as `Tr_{I_k O_k}[D_k] / dim(I_k)`, which is exact
/// whenever the condition holds and leaves a nonzero residual otherwise.
pub fn validate_comb(
    op: &LabeledOperator,
    structure: &TimeStepStructure,
    normalized: bool,
    tol: f64,
) -> Result<CombReport, CombError> {
    validate_comb_with(op, structure, normalized, tol, &Tolerances::default())
}

pub fn validate_comb_with(
    op: &LabeledOperator,
    structure: &TimeStepStructure,
    normalized: bool,
    tol: f64,
    op_tols: &Tolerances,
) -> Result<CombReport, CombError> {
    structure.covers(op.layout())?;
    let psd = op.is_psd(op_tols);
    let mut current = op.reorder(&structure.canonical_names())?;
    let n = structure.n_steps();
    let mut step_residuals = vec![0.0f64; n];
    for k in (0..n).rev() {
        let step = &structure.steps()[k];
        let outs: Vec<&str> = step.outputs.iter().map(String::as_str).collect();
        let ins: Vec<&str> = step.inputs.iter().map(String::as_str).collect();
        let traced = if outs.is_empty() {
            current.clone()
        } else {
            current.partial_trace(&outs)?
        };
        let d_in: usize = step
            .inputs
            .iter()
            .map(|name| {
                let p = traced.layout().position(name).expect("covered label");
                traced.layout().factors()[p].dim
            })
            .product();
        let prev = if ins.is_empty() {
            traced.clone()
        } else {
            traced.partial_trace(&ins)?
        }
        .scale(c(1.0 / d_in as f64, 0.0));
        let expected = if ins.is_empty() {
            prev.clone()
        } else {
            let in_layout = SpaceLayout::new(
                ins.iter()
                    .map(|name| {
                        let p = traced.layout().position(name).unwrap();
                        traced.layout().factors()[p].clone()
                    })
                    .collect(),
            )?;
            prev.kron(&LabeledOperator::identity(in_layout))?
        };
        // traced's storage is (step-1 wires, ..., I_k): the identity factor
        // sits on the trailing wires, so layouts line up exactly.
        debug_assert_eq!(expected.layout(), traced.layout());
        step_residuals[k] = max_abs_entry(&(traced.matrix() - expected.matrix()));
        current = prev;
    }
    let terminal_c = current.matrix()[(0, 0)];
    let terminal = terminal_c.re;
    let imag_residual = terminal_c.im.abs();
    let chain_ok = step_residuals.iter().all(|r| *r <= tol) && imag_residual <= tol;
    let terminal_ok = if normalized {
        (terminal - 1.0).abs() <= tol
    } else {
        terminal > tol
    };
    Ok(CombReport {
        accepted: psd.is_psd() && chain_ok && terminal_ok,
        psd,
        step_residuals,
        terminal,
        imag_residual,
    })
}

/// A quantum comb: PSD operator plus its causal slot structure. Construction
/// checks structural coverage only; numerical validity is a separate,
/// explicit step.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Comb {
    pub op: LabeledOperator,
    pub structure: TimeStepStructure,
    pub normalized: bool,
}

impl Comb {
    pub fn new(
        op: LabeledOperator,
        structure: TimeStepStructure,
        normalized: bool,
    ) -> Result<Self, CombError> {
        structure.covers(op.layout())?;
        Ok(Self {
            op,
            structure,
            normalized,
        })
    }

    pub fn validate(&self, tol: f64) -> Result<CombReport, CombError> {
        validate_comb(&self.op, &self.structure, self.normalized, tol)
    }
}

/// Validation report for a classical comb.
#[derive(Clone, Debug)]
pub struct ClassicalCombReport {
    /// Smallest diagonal entry (negative entries are a hard failure).
    pub min_entry: f64,
    /// Per-step marginalization residuals (entry 0 is step 1).
    pub step_residuals: Vec<f64>,
    /// Fully marginalized mass `f^(0)`.
    pub terminal: f64,
    pub accepted: bool,
}

/// Diagonal comb: a conditional distribution satisfying the classical
/// no-back-signalling chain.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ClassicalComb {
    layout: SpaceLayout,
    diag: Vec<f64>,
    structure: TimeStepStructure,
}

impl ClassicalComb {
    pub fn new(
        layout: SpaceLayout,
        diag: Vec<f64>,
        structure: TimeStepStructure,
    ) -> Result<Self, CombError> {
        structure.covers(&layout)?;
        if diag.len() != layout.total_dim() {
            return Err(CombError::DiagLength {
                got: diag.len(),
                expected: layout.total_dim(),
            });
        }
        Ok(Self {
            layout,
            diag,
            structure,
        })
    }

    pub fn layout(&self) -> &SpaceLayout {
        &self.layout
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn structure(&self) -> &TimeStepStructure {
        &self.structure
    }

    /// Diagonal reindexed into the canonical slot order of the structure.
    pub fn canonical_diag(&self) -> (SpaceLayout, Vec<f64>) {
        let names = self.structure.canonical_names();
        let perm: Vec<usize> = names
            .iter()
            .map(|n| self.layout.position(n).expect("covered label"))
            .collect();
        let dims = self.layout.dims();
        let old_strides = self.layout.strides();
        let new_dims: Vec<usize> = perm.iter().map(|&p| dims[p]).collect();
        let d = self.diag.len();
        let mut out = vec![0.0; d];
        for (new_idx, slot) in out.iter_mut().enumerate() {
            let mut rem = new_idx;
            let mut old = 0usize;
            for (pos, &p) in perm.iter().enumerate() {
                let block: usize = new_dims[pos + 1..].iter().product();
                old += (rem / block) * old_strides[p];
                rem %= block;
            }
            *slot = self.diag[old];
        }
        let layout = SpaceLayout::new(
            perm.iter()
                .map(|&p| self.layout.factors()[p].clone())
                .collect(),
        )
        .expect("permutation of a valid layout");
        (layout, out)
    }

    /// Marginalization-independence chain on the diagonal.
    pub fn validate(&self, tol: f64) -> ClassicalCombReport {
        let (layout, mut f) = self.canonical_diag();
        let min_entry = f.iter().copied().fold(f64::INFINITY, f64::min);
        let mut dims = layout.dims();
        let n = self.structure.n_steps();
        let mut step_residuals = vec![0.0f64; n];
        for k in (0..n).rev() {
            let step = &self.structure.steps()[k];
            let n_out = step.outputs.len();
            let n_in = step.inputs.len();
            // trailing wires of f are (I_k wires, O_k wires)
            let d_out: usize = dims[dims.len() - n_out..].iter().product();
            let d_in: usize = dims[dims.len() - n_out - n_in..dims.len() - n_out]
                .iter()
                .product();
            let d_rest = f.len() / (d_in * d_out);
            let mut g = vec![0.0; d_rest * d_in];
            for (i, v) in f.iter().enumerate() {
                g[i / d_out] += v;
            }
            let mut reduced = vec![0.0; d_rest];
            for r in 0..d_rest {
                let mut mean = 0.0;
                for a in 0..d_in {
                    mean += g[r * d_in + a];
                }
                mean /= d_in as f64;
                reduced[r] = mean;
                for a in 0..d_in {
                    let dev = (g[r * d_in + a] - mean).abs();
                    if dev > step_residuals[k] {
                        step_residuals[k] = dev;
                    }
                }
            }
            f = reduced;
            dims.truncate(dims.len() - n_out - n_in);
        }
        let terminal = f[0];
        let accepted = min_entry >= -tol
            && step_residuals.iter().all(|r| *r <= tol)
            && terminal > tol;
        ClassicalCombReport {
            min_entry,
            step_residuals,
            terminal,
            accepted,
        }
    }

    /// Embed as a diagonal quantum operator (small instances only).
    pub fn to_operator(&self, cap: usize) -> Result<LabeledOperator, CombError> {
        let d = self.layout.total_dim();
        if d > cap {
            return Err(CombError::DimCapExceeded { dim: d, cap });
        }
        let mut m = CMat::zeros(d, d);
        for (i, v) in self.diag.iter().enumerate() {
            m[(i, i)] = c(*v, 0.0);
        }
        Ok(LabeledOperator::new(self.layout.clone(), m)?)
    }
}

/// `D = sum_x P(x) |x><x| (x) sigma_x`, stored block-wise. The `x` register is
/// kept leftmost in storage and appears causally either first or last; both
/// readings give a valid comb, which `assemble` callers can verify through
/// [`structure_x_first`](Self::structure_x_first) and
/// [`structure_x_last`](Self::structure_x_last).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ClassicalQuantumComb {
    prior: Vec<f64>,
    blocks: Vec<Comb>,
    x_label: SubsystemLabel,
}

impl ClassicalQuantumComb {
    pub fn new(
        prior: Vec<f64>,
        blocks: Vec<Comb>,
        x_label: SubsystemLabel,
    ) -> Result<Self, CombError> {
        if blocks.is_empty() {
            return Err(CombError::EmptyBlocks);
        }
        if x_label.dim != blocks.len() || prior.len() != blocks.len() {
            return Err(CombError::XDimMismatch {
                x_dim: x_label.dim.min(prior.len()),
                blocks: blocks.len(),
            });
        }
        if let Some(p) = prior.iter().copied().find(|p| *p < 0.0) {
            return Err(CombError::NegativePrior(p));
        }
        let total: f64 = prior.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(CombError::PriorNotNormalized(total));
        }
        for (i, b) in blocks.iter().enumerate().skip(1) {
            if b.op.layout() != blocks[0].op.layout() {
                return Err(CombError::BlockMismatch {
                    index: i,
                    what: "layout".into(),
                });
            }
            if b.structure != blocks[0].structure {
                return Err(CombError::BlockMismatch {
                    index: i,
                    what: "structure".into(),
                });
            }
        }
        Ok(Self {
            prior,
            blocks,
            x_label,
        })
    }

    pub fn prior(&self) -> &[f64] {
        &self.prior
    }

    pub fn blocks(&self) -> &[Comb] {
        &self.blocks
    }

    pub fn x_label(&self) -> &SubsystemLabel {
        &self.x_label
    }

    pub fn block_structure(&self) -> &TimeStepStructure {
        &self.blocks[0].structure
    }

    pub fn block_dim(&self) -> usize {
        self.blocks[0].op.dim()
    }

    /// Slot structure with the `x` register as the causally first output.
    pub fn structure_x_first(&self) -> TimeStepStructure {
        let mut steps = vec![TimeStep {
            inputs: vec![],
            outputs: vec![self.x_label.name.clone()],
        }];
        steps.extend(self.block_structure().steps().iter().cloned());
        TimeStepStructure::new(steps).expect("x label must not clash with block wires")
    }

    /// Slot structure with the `x` register as the causally last output.
    pub fn structure_x_last(&self) -> TimeStepStructure {
        let mut steps = self.block_structure().steps().to_vec();
        steps.push(TimeStep {
            inputs: vec![],
            outputs: vec![self.x_label.name.clone()],
        });
        TimeStepStructure::new(steps).expect("x label must not clash with block wires")
    }

    /// Assemble the block-diagonal operator with `x` leftmost in storage.
    /// Off-diagonal (in `x`) entries are exactly zero and diagonal blocks are
    /// exactly `P(x) sigma_x`: the embedding introduces no arithmetic.
    pub fn assemble(&self) -> Result<LabeledOperator, CombError> {
        self.assemble_with_cap(DEFAULT_DIM_CAP)
    }

    pub fn assemble_with_cap(&self, cap: usize) -> Result<LabeledOperator, CombError> {
        let d = self.block_dim();
        let big = d * self.blocks.len();
        if big > cap {
            return Err(CombError::DimCapExceeded { dim: big, cap });
        }
        let mut factors = vec![self.x_label.clone()];
        factors.extend(self.blocks[0].op.layout().factors().iter().cloned());
        let layout = SpaceLayout::new(factors)?;
        let mut m = CMat::zeros(big, big);
        for (x, b) in self.blocks.iter().enumerate() {
            let p = c(self.prior[x], 0.0);
            let src = b.op.matrix();
            for i in 0..d {
                for j in 0..d {
                    m[(x * d + i, x * d + j)] = p * src[(i, j)];
                }
            }
        }
        Ok(LabeledOperator::new(layout, m)?)
    }

    /// Tensor the blocks `m` times with round-tagged labels (`wire@round`),
    /// keeping the prior: the same `x` drives every round.
    pub fn multi_round(&self, m: usize, cap: usize) -> Result<Self, CombError> {
        assert!(m >= 1, "at least one round");
        let d = self.block_dim();
        let big = d.checked_pow(m as u32).filter(|&b| b <= cap);
        let Some(_) = big else {
            return Err(CombError::DimCapExceeded {
                dim: usize::MAX.min(d.saturating_pow(m as u32)),
                cap,
            });
        };
        let round_structure = |r: usize| {
            self.block_structure()
                .relabeled(|name| format!("{name}@{r}"))
        };
        let mut structure = round_structure(1);
        for r in 2..=m {
            structure = structure.then(&round_structure(r))?;
        }
        let mut blocks = Vec::with_capacity(self.blocks.len());
        for b in &self.blocks {
            let relabel = |r: usize| {
                let factors = b
                    .op
                    .layout()
                    .factors()
                    .iter()
                    .map(|f| SubsystemLabel::new(format!("{}@{r}", f.name), f.dim))
                    .collect();
                LabeledOperator::new(
                    SpaceLayout::new(factors).expect("relabeled layout"),
                    b.op.matrix().clone(),
                )
                .expect("same matrix, same dims")
            };
            let mut acc = relabel(1);
            for r in 2..=m {
                acc = acc.kron(&relabel(r))?;
            }
            blocks.push(Comb::new(acc, structure.clone(), b.normalized)?);
        }
        Self::new(self.prior.clone(), blocks, self.x_label.clone())
    }
}

/// Generalized Born pairing `Tr[D E^T]` of two combs on the same wire set.
/// For a normalized comb and a normalized dual comb this is exactly 1; tester
/// elements dominated by a normalized dual comb give values in `[0, 1]`.
pub fn born_probability(d: &Comb, e: &Comb) -> Result<f64, CombError> {
    let dn = d.op.layout().names();
    let en = e.op.layout().names();
    if dn.len() != en.len() || dn.iter().any(|n| !en.contains(n)) {
        return Err(CombError::PairingMismatch(format!(
            "left wires {:?} vs right wires {:?}",
            dn, en
        )));
    }
    let s = d.op.link_product(&e.op)?;
    let v = s.matrix()[(0, 0)];
    if v.im.abs() > 1e-9 {
        return Err(CombError::PairingMismatch(format!(
            "pairing has imaginary part {:.3e}",
            v.im
        )));
    }
    Ok(v.re)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::C_ONE;

    /// Choi of the identity qubit channel on wires (in_name -> out_name).
    fn identity_choi(in_name: &str, out_name: &str) -> LabeledOperator {
        let mut j = CMat::zeros(4, 4);
        for i in 0..2 {
            for k in 0..2 {
                j[(i * 2 + i, k * 2 + k)] = C_ONE;
            }
        }
        LabeledOperator::new(SpaceLayout::of(&[(in_name, 2), (out_name, 2)]), j).unwrap()
    }

    fn one_step(in_name: &str, out_name: &str) -> TimeStepStructure {
        TimeStepStructure::of(&[(&[in_name], &[out_name])])
    }

    #[test]
    fn structure_rejects_duplicate_labels() {
        assert!(matches!(
            TimeStepStructure::new(vec![
                TimeStep::new(&["A"], &["B"]),
                TimeStep::new(&["B"], &["C"]),
            ]),
            Err(CombError::DuplicateSlotLabel(_))
        ));
    }

    #[test]
    fn coverage_reports_missing_and_extra() {
        let s = TimeStepStructure::of(&[(&["A"], &["B"])]);
        let layout = SpaceLayout::of(&[("A", 2), ("C", 2)]);
        match s.covers(&layout) {
            Err(CombError::Coverage { missing, extra }) => {
                assert_eq!(missing, vec!["C".to_string()]);
                assert_eq!(extra, vec!["B".to_string()]);
            }
            other => panic!("expected coverage error, got {other:?}"),
        }
    }

    #[test]
    fn identity_choi_is_a_normalized_one_step_comb() {
        let report = validate_comb(
            &identity_choi("Ain", "Aout"),
            &one_step("Ain", "Aout"),
            true,
            1e-9,
        )
        .unwrap();
        assert!(report.accepted, "{report:?}");
        assert!((report.terminal - 1.0).abs() < 1e-12);
        assert!(report.max_step_residual() < 1e-12);
    }

    #[test]
    fn scaled_identity_is_valid_but_unnormalized() {
        let op = LabeledOperator::identity(SpaceLayout::of(&[("Ain", 2), ("Aout", 2)]));
        let s = one_step("Ain", "Aout");
        let unnorm = validate_comb(&op, &s, false, 1e-9).unwrap();
        assert!(unnorm.accepted);
        assert!((unnorm.terminal - 2.0).abs() < 1e-12);
        let norm = validate_comb(&op, &s, true, 1e-9).unwrap();
        assert!(!norm.accepted, "terminal 2 must fail the normalized check");
    }

    #[test]
    fn back_signalling_operator_fails_step_two() {
        // Entangle the first output with the second input: step 2's condition
        // Tr_{O_2}[D] = I_{I_2} (x) D_1 cannot hold.
        let j = identity_choi("A1out", "A2in");
        let front = LabeledOperator::identity(SpaceLayout::of(&[("A1in", 2)]));
        let back = LabeledOperator::identity(SpaceLayout::of(&[("A2out", 2)]));
        let op = front
            .kron(&j)
            .unwrap()
            .kron(&back)
            .unwrap()
            .scale(c(0.5, 0.0));
        let s = TimeStepStructure::of(&[(&["A1in"], &["A1out"]), (&["A2in"], &["A2out"])]);
        let report = validate_comb(&op, &s, true, 1e-9).unwrap();
        assert!(!report.accepted);
        assert!(report.step_residuals[1] > 0.1, "{report:?}");
    }

    #[test]
    fn classical_uniform_output_is_valid() {
        let layout = SpaceLayout::of(&[("in", 2), ("out", 2)]);
        let s = TimeStepStructure::of(&[(&["in"], &["out"])]);
        let cc = ClassicalComb::new(layout, vec![0.5, 0.5, 0.5, 0.5], s).unwrap();
        let report = cc.validate(1e-12);
        assert!(report.accepted, "{report:?}");
        assert!((report.terminal - 1.0).abs() < 1e-15);
    }

    #[test]
    fn classical_back_signalling_is_flagged() {
        // First slot outputs a bit equal to the *second* slot's input.
        let layout = SpaceLayout::of(&[("b1out", 2), ("b2in", 2)]);
        let s = TimeStepStructure::of(&[(&[], &["b1out"]), (&["b2in"], &[])]);
        let mut diag = vec![0.0; 4];
        diag[0] = 1.0; // b1out=0, b2in=0
        diag[3] = 1.0; // b1out=1, b2in=1
        let cc = ClassicalComb::new(layout, diag, s).unwrap();
        let report = cc.validate(1e-12);
        assert!(!report.accepted);
        // the dependence surfaces when step 2's input is marginalized
        assert!(report.step_residuals[1] > 0.4, "{report:?}");
    }

    #[test]
    fn classical_negative_entry_fails() {
        let layout = SpaceLayout::of(&[("out", 2)]);
        let s = TimeStepStructure::of(&[(&[], &["out"])]);
        let cc = ClassicalComb::new(layout, vec![1.5, -0.5], s).unwrap();
        let report = cc.validate(1e-12);
        assert!(!report.accepted);
        assert!(report.min_entry < -0.4);
    }

    fn small_cq() -> ClassicalQuantumComb {
        // Two one-step channel blocks: identity Choi and the X-gate Choi.
        let s = one_step("Ain", "Aout");
        let id = Comb::new(identity_choi("Ain", "Aout"), s.clone(), true).unwrap();
        let mut xj = CMat::zeros(4, 4);
        // Choi of X: sum_{ik} |i, not i><k, not k|
        for i in 0..2 {
            for k in 0..2 {
                xj[(i * 2 + (1 - i), k * 2 + (1 - k))] = C_ONE;
            }
        }
        let x = Comb::new(
            LabeledOperator::new(SpaceLayout::of(&[("Ain", 2), ("Aout", 2)]), xj).unwrap(),
            s,
            true,
        )
        .unwrap();
        ClassicalQuantumComb::new(
            vec![0.3, 0.7],
            vec![id, x],
            SubsystemLabel::new("X", 2),
        )
        .unwrap()
    }

    #[test]
    fn prior_must_be_normalized_and_nonnegative() {
        let cq = small_cq();
        let blocks = cq.blocks().to_vec();
        assert!(matches!(
            ClassicalQuantumComb::new(
                vec![0.5, 0.6],
                blocks.clone(),
                SubsystemLabel::new("X", 2)
            ),
            Err(CombError::PriorNotNormalized(_))
        ));
        assert!(matches!(
            ClassicalQuantumComb::new(
                vec![1.5, -0.5],
                blocks,
                SubsystemLabel::new("X", 2)
            ),
            Err(CombError::NegativePrior(_))
        ));
    }

    #[test]
    fn assemble_is_exact_direct_sum() {
        let cq = small_cq();
        let d = cq.assemble().unwrap();
        assert_eq!(d.layout().names(), vec!["X", "Ain", "Aout"]);
        let m = d.matrix();
        for x in 0..2 {
            for x2 in 0..2 {
                for i in 0..4 {
                    for j in 0..4 {
                        let got = m[(x * 4 + i, x2 * 4 + j)];
                        let want = if x == x2 {
                            c(cq.prior()[x], 0.0) * cq.blocks()[x].op.matrix()[(i, j)]
                        } else {
                            crate::operators::C_ZERO
                        };
                        assert_eq!(got, want, "entry ({x},{i}),({x2},{j})");
                    }
                }
            }
        }
    }

    #[test]
    fn assembled_comb_is_valid_in_both_orderings() {
        let cq = small_cq();
        let d = cq.assemble().unwrap();
        let first = validate_comb(&d, &cq.structure_x_first(), true, 1e-9).unwrap();
        assert!(first.accepted, "x-first: {first:?}");
        let last = validate_comb(&d, &cq.structure_x_last(), true, 1e-9).unwrap();
        assert!(last.accepted, "x-last: {last:?}");
    }

    #[test]
    fn tracing_out_x_leaves_the_mixture_comb() {
        let cq = small_cq();
        let d = cq.assemble().unwrap();
        let mix = d.partial_trace(&["X"]).unwrap();
        let report = validate_comb(&mix, cq.block_structure(), true, 1e-9).unwrap();
        assert!(report.accepted);
        // mixture entries are the prior-weighted sum of blocks
        let expect = cq.blocks()[0].op.scale(c(0.3, 0.0)).matrix()
            + cq.blocks()[1].op.scale(c(0.7, 0.0)).matrix();
        assert!(max_abs_entry(&(mix.matrix() - expect)) < 1e-14);
    }

    #[test]
    fn assemble_respects_dim_cap() {
        let cq = small_cq();
        assert!(matches!(
            cq.assemble_with_cap(7),
            Err(CombError::DimCapExceeded { dim: 8, cap: 7 })
        ));
    }

    #[test]
    fn multi_round_relabels_and_powers() {
        let cq = small_cq();
        let one = cq.multi_round(1, DEFAULT_DIM_CAP).unwrap();
        assert_eq!(
            one.blocks()[0].op.layout().names(),
            vec!["Ain@1", "Aout@1"]
        );
        let two = cq.multi_round(2, DEFAULT_DIM_CAP).unwrap();
        assert_eq!(two.block_dim(), 16);
        assert_eq!(two.block_structure().n_steps(), 2);
        // trace of each block = (prod of input dims)^m
        for b in two.blocks() {
            assert!((b.op.trace().re - 4.0).abs() < 1e-12);
            assert!(b.validate(1e-9).unwrap().accepted);
        }
        assert!(matches!(
            cq.multi_round(2, 8),
            Err(CombError::DimCapExceeded { .. })
        ));
    }

    #[test]
    fn dual_structure_of_one_step_is_state_then_effect() {
        let s = one_step("Ain", "Aout");
        let d = s.dual();
        assert_eq!(
            d.steps(),
            &[
                TimeStep::new(&[] as &[&str], &["Ain"]),
                TimeStep::new(&["Aout"], &[] as &[&str]),
            ]
        );
        assert_eq!(d.dual(), s, "dual of dual restores the slot pattern");
    }

    #[test]
    fn dual_of_dual_on_longer_structures() {
        let s = TimeStepStructure::of(&[
            (&["A1in"], &["A1out"]),
            (&["A2in"], &["A2out"]),
            (&["A3in"], &["A3out"]),
        ]);
        assert_eq!(s.dual().dual(), s);
    }

    #[test]
    fn born_pairing_with_normalized_dual_is_one() {
        // D: identity channel Choi. E: state |0><0| into Ain, identity effect
        // on Aout. E is a normalized comb on the dual structure.
        let d = Comb::new(identity_choi("Ain", "Aout"), one_step("Ain", "Aout"), true).unwrap();
        let mut st = CMat::zeros(2, 2);
        st[(0, 0)] = C_ONE;
        let state = LabeledOperator::new(SpaceLayout::of(&[("Ain", 2)]), st).unwrap();
        let effect = LabeledOperator::identity(SpaceLayout::of(&[("Aout", 2)]));
        let e_op = state.kron(&effect).unwrap();
        let e = Comb::new(e_op, d.structure.dual(), true).unwrap();
        assert!(e.validate(1e-9).unwrap().accepted);
        let p = born_probability(&d, &e).unwrap();
        assert!((p - 1.0).abs() < 1e-12);
        // a dominated tester element scales the probability
        let half = Comb::new(e.op.scale(c(0.25, 0.0)), e.structure.clone(), false).unwrap();
        assert!((born_probability(&d, &half).unwrap() - 0.25).abs() < 1e-12);
    }

    #[test]
    fn born_pairing_rejects_mismatched_wires() {
        let d = Comb::new(identity_choi("Ain", "Aout"), one_step("Ain", "Aout"), true).unwrap();
        let e = Comb::new(
            LabeledOperator::identity(SpaceLayout::of(&[("Bin", 2), ("Bout", 2)])),
            one_step("Bin", "Bout").dual(),
            true,
        );
        // structure of e: dual over B wires, which never match D's wires
        assert!(born_probability(&d, &e.unwrap()).is_err());
    }

    #[test]
    fn comb_json_round_trip() {
        let d = Comb::new(identity_choi("Ain", "Aout"), one_step("Ain", "Aout"), true).unwrap();
        let text = serde_json::to_string(&d).unwrap();
        let back: Comb = serde_json::from_str(&text).unwrap();
        assert_eq!(back.structure, d.structure);
        assert_eq!(back.normalized, d.normalized);
        assert_eq!(back.op.layout(), d.op.layout());
        assert!(max_abs_entry(&(back.op.matrix() - d.op.matrix())) < 1e-15);
    }

    #[test]
    fn classical_comb_json_round_trip() {
        let layout = SpaceLayout::of(&[("in", 2), ("out", 3)]);
        let s = TimeStepStructure::of(&[(&["in"], &["out"])]);
        let diag = vec![0.2, 0.3, 0.5, 0.1, 0.4, 0.5];
        let cc = ClassicalComb::new(layout, diag.clone(), s).unwrap();
        let text = serde_json::to_string(&cc).unwrap();
        let back: ClassicalComb = serde_json::from_str(&text).unwrap();
        assert_eq!(back.diag(), cc.diag());
        assert_eq!(back.structure(), cc.structure());
    }
}
