//! Min-entropy of classical-quantum strategy ensembles.
//!
//! The central quantity is the guessing probability of the label `x` held
//! by a party that interacts with the broadcast side of a comb ensemble:
//! the optimal success probability of any attack compatible with the
//! causal structure. Its negative log is the min-entropy. The guessing
//! probability is a semidefinite program over the attack comb; this module
//! solves it with a barrier method that exploits block-diagonal structure
//! on classical wires, extracts optimal attacks from the dual, and covers
//! the fully classical case with an exact linear program.

mod sector;

pub(crate) mod ipm;
pub(crate) mod lp;

pub use sector::CombSdpProblem;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::bqc::{self, BqcError};
use crate::combs::{
    validate_comb, ClassicalComb, ClassicalCombReport, ClassicalQuantumComb, Comb, CombError,
    CombReport, TimeStep, TimeStepStructure, DEFAULT_DIM_CAP,
};
use crate::operators::{CMat, LabeledOperator, OperatorError, SpaceLayout};

/// Errors surfaced by the entropy solvers.
#[derive(Debug, Error)]
pub enum EntropyError {
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Comb(#[from] CombError),
    #[error(transparent)]
    Bqc(#[from] BqcError),
    #[error("ensemble has no hypotheses")]
    NoHypotheses,
    #[error("unsupported comb structure: {0}")]
    UnsupportedStructure(String),
    #[error("wire is not classical: {0}")]
    NotClassical(String),
    #[error("dimension {dim} exceeds cap {cap}")]
    DimCap { dim: usize, cap: usize },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("prior length does not match the number of blocks")]
    PriorLength,
    #[error("linear program terminated with status {0}")]
    LpStatus(String),
    #[error("multi-round reduction unavailable: {0}")]
    MultiRound(String),
}

/// Tuning knobs of the barrier solver. The defaults are what every
/// shipped scenario is verified against.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Target certified duality gap.
    pub gap_tol: f64,
    /// Squared Newton decrement at which a center is accepted.
    pub newton_tol: f64,
    pub max_outer: usize,
    pub max_newton: usize,
    /// Initial barrier weight.
    pub t0: f64,
    /// Barrier weight multiplier per outer round.
    pub mu: f64,
    /// Restrict chain variables to the block structure induced by
    /// classical wires (exact, and much faster when it applies).
    pub sector_split: bool,
    /// Blocks closer than this collapse into one domination constraint.
    pub dedupe_tol: f64,
    /// Refuse per-block dimensions above this bound.
    pub dim_cap: usize,
    /// Worker threads for grid searches; 0 picks the hardware default.
    pub jobs: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            gap_tol: 1e-8,
            newton_tol: 1e-9,
            max_outer: 40,
            max_newton: 400,
            t0: 1.0,
            mu: 10.0,
            sector_split: true,
            dedupe_tol: 1e-12,
            dim_cap: DEFAULT_DIM_CAP,
            jobs: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    /// Converged to the requested gap.
    Optimal,
    /// Terminated early; the value is still correct to the reported gap.
    Stalled,
}

/// Outcome of the semidefinite min-entropy computation.
#[derive(Clone, Debug)]
pub struct MinEntropyResult {
    pub p_guess: f64,
    pub h_min: f64,
    pub status: SolveStatus,
    /// Certified bound on how far `p_guess` can sit above the optimum.
    pub duality_gap: f64,
    /// Largest violation of the chain equalities at the solution.
    pub primal_residual: f64,
    pub newton_steps: usize,
    pub wall_ms: f64,
    /// Number of distinct hypothesis blocks after deduplication.
    pub distinct_blocks: usize,
    /// The optimal (unnormalized) attack comb variable.
    pub certificate: Comb,
    /// Dual blocks `Z_x`, one per hypothesis, in the canonical wire order
    /// of the block structure.
    pub dual_blocks: Vec<CMat>,
}

impl MinEntropyResult {
    pub fn summary_json(&self) -> serde_json::Value {
        json!({
            "p_guess": self.p_guess,
            "h_min": self.h_min,
            "status": self.status,
            "duality_gap": self.duality_gap,
            "primal_residual": self.primal_residual,
            "newton_steps": self.newton_steps,
            "wall_ms": self.wall_ms,
            "distinct_blocks": self.distinct_blocks,
        })
    }
}

/// Outcome of the classical linear-programming computation.
#[derive(Clone, Debug, Serialize)]
pub struct ClassicalMinEntropyResult {
    pub p_guess: f64,
    pub h_min: f64,
    pub status: SolveStatus,
    /// Verbatim LP termination status.
    pub lp_status: String,
    pub duality_gap: f64,
    pub wall_ms: f64,
    pub certificate: ClassicalComb,
}

impl ClassicalMinEntropyResult {
    pub fn summary_json(&self) -> serde_json::Value {
        json!({
            "p_guess": self.p_guess,
            "h_min": self.h_min,
            "status": self.status,
            "lp_status": self.lp_status,
            "duality_gap": self.duality_gap,
            "wall_ms": self.wall_ms,
        })
    }
}

/// An explicit attack comb together with the value it achieves.
#[derive(Clone, Debug)]
pub struct Strategy {
    pub comb: Comb,
    pub achieved: f64,
    pub report: CombReport,
}

#[derive(Clone, Debug)]
pub struct ClassicalStrategy {
    pub comb: ClassicalComb,
    pub achieved: f64,
    pub report: ClassicalCombReport,
}

/// Guessing probability of one round count in a monotonicity sweep.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub enum RoundValue {
    Exact(f64),
    Bounds { lower: f64, upper: f64 },
}

impl RoundValue {
    pub fn lower(&self) -> f64 {
        match self {
            RoundValue::Exact(v) => *v,
            RoundValue::Bounds { lower, .. } => *lower,
        }
    }

    pub fn upper(&self) -> f64 {
        match self {
            RoundValue::Exact(v) => *v,
            RoundValue::Bounds { upper, .. } => *upper,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct MonotonicityReport {
    /// Entry `m - 1` is the value for `m` rounds.
    pub rounds: Vec<RoundValue>,
    /// Whether the representative lower values never decrease.
    pub nondecreasing: bool,
}

/// Guessing probability and min-entropy of a classical-quantum comb
/// ensemble against the strongest causally compatible attack.
pub fn min_entropy(
    cq: &ClassicalQuantumComb,
    cfg: &SolverConfig,
) -> Result<MinEntropyResult, EntropyError> {
    let started = Instant::now();
    if cq.block_dim() > cfg.dim_cap {
        return Err(EntropyError::DimCap {
            dim: cq.block_dim(),
            cap: cfg.dim_cap,
        });
    }
    let problem = CombSdpProblem::new(cq, cfg.sector_split, cfg.dedupe_tol)?;
    let program = ipm::program_from(&problem);
    let raw = ipm::solve(
        &program,
        &ipm::SolveOptions {
            gap_tol: cfg.gap_tol,
            newton_tol: cfg.newton_tol,
            max_outer: cfg.max_outer,
            max_newton: cfg.max_newton,
            t0: cfg.t0,
            mu: cfg.mu,
        },
    )?;
    let (certificate, dual_blocks) = assemble_outputs(&problem, &program, &raw)?;
    let p_guess = raw.value;
    Ok(MinEntropyResult {
        p_guess,
        h_min: -p_guess.log2(),
        status: if raw.converged {
            SolveStatus::Optimal
        } else {
            SolveStatus::Stalled
        },
        duality_gap: raw.gap,
        primal_residual: raw.eq_residual,
        newton_steps: raw.newton_steps,
        wall_ms: started.elapsed().as_secs_f64() * 1e3,
        distinct_blocks: problem.n_distinct(),
        certificate,
        dual_blocks,
    })
}

fn assemble_outputs(
    problem: &CombSdpProblem,
    program: &ipm::Program,
    raw: &ipm::RawSolution,
) -> Result<(Comb, Vec<CMat>), EntropyError> {
    let d = problem.layout.total_dim();
    let table = problem.top_index_table();
    let mult = problem.mult;

    let mut gamma = CMat::zeros(d, d);
    for (s, &v) in program.top_vars.iter().enumerate() {
        let vb = &program.vars[v];
        let m = ipm::mat_of_svec(&raw.theta[vb.offset..vb.offset + vb.q * vb.q], vb.q);
        for e in 0..mult {
            let tbl = &table[s * mult + e];
            for r in 0..vb.q {
                for c in 0..vb.q {
                    gamma[(tbl[r], tbl[c])] = m[(r, c)];
                }
            }
        }
    }
    let op = LabeledOperator::new(problem.layout.clone(), gamma)?;
    let certificate = Comb {
        op,
        structure: problem.structure.clone(),
        normalized: false,
    };

    let nx = problem.prior.len();
    let mut dual_blocks = vec![CMat::zeros(d, d); nx];
    for (term, u) in program.terms.iter().zip(&raw.duals) {
        let (Some(x), Some(cell)) = (term.attributed, term.cell) else {
            continue;
        };
        let tbl = &table[cell];
        for r in 0..u.nrows() {
            for c in 0..u.ncols() {
                dual_blocks[x][(tbl[r], tbl[c])] += u[(r, c)];
            }
        }
    }
    Ok((certificate, dual_blocks))
}

/// Turn the dual blocks of a solved instance into an explicit attack comb
/// `E = sum_x |x><x| (x) Z_x^T` on the dual slot structure, with the guess
/// register emitted in the final step.
pub fn extract_strategy(
    cq: &ClassicalQuantumComb,
    result: &MinEntropyResult,
) -> Result<Strategy, EntropyError> {
    let d = cq.block_dim();
    let nx = cq.blocks().len();
    if result.dual_blocks.len() != nx || result.dual_blocks.iter().any(|z| z.nrows() != d) {
        return Err(EntropyError::Numerical(
            "dual blocks do not match the ensemble".into(),
        ));
    }
    let guess = cq.x_label().name.clone();
    let mut steps: Vec<TimeStep> = cq.block_structure().dual().steps().to_vec();
    match steps.last_mut() {
        Some(last) => last.outputs.push(guess.clone()),
        None => steps.push(TimeStep {
            inputs: vec![],
            outputs: vec![guess.clone()],
        }),
    }
    let structure = TimeStepStructure::new(steps)?;

    let mut factors = vec![cq.x_label().clone()];
    factors.extend(result.certificate.op.layout().factors().iter().cloned());
    let layout = SpaceLayout::new(factors)?;
    let mut m = CMat::zeros(nx * d, nx * d);
    for (x, z) in result.dual_blocks.iter().enumerate() {
        for r in 0..d {
            for c in 0..d {
                m[(x * d + r, x * d + c)] = z[(c, r)];
            }
        }
    }
    let op = LabeledOperator::new(layout, m)?;
    let report = validate_comb(&op, &structure, true, 1e-5)?;

    let names = cq.block_structure().canonical_names();
    let mut achieved = 0.0f64;
    for (x, b) in cq.blocks().iter().enumerate() {
        let sigma = b.op.reorder(&names)?;
        let z = &result.dual_blocks[x];
        let mut tr = 0.0f64;
        for r in 0..d {
            for c in 0..d {
                tr += (sigma.matrix()[(r, c)] * z[(c, r)]).re;
            }
        }
        achieved += cq.prior()[x] * tr;
    }
    let comb = Comb {
        op,
        structure,
        normalized: true,
    };
    Ok(Strategy {
        comb,
        achieved,
        report,
    })
}

/// Exact guessing probability of a fully classical ensemble.
pub fn min_entropy_classical(
    prior: &[f64],
    blocks: &[ClassicalComb],
    _cfg: &SolverConfig,
) -> Result<ClassicalMinEntropyResult, EntropyError> {
    let started = Instant::now();
    let out = lp::solve_classical_lp(prior, blocks)?;
    let status = if out.status == "Solved" || out.status == "Closed" {
        SolveStatus::Optimal
    } else {
        SolveStatus::Stalled
    };
    Ok(ClassicalMinEntropyResult {
        p_guess: out.value,
        h_min: -out.value.log2(),
        status,
        lp_status: out.status,
        duality_gap: out.gap,
        wall_ms: started.elapsed().as_secs_f64() * 1e3,
        certificate: out.certificate,
    })
}

/// Optimal deterministic attack against a fully classical ensemble. Its
/// value matches the linear program exactly (the induction is the LP's
/// combinatorial dual), so the pair forms a zero-gap certificate.
pub fn classical_strategy(
    prior: &[f64],
    blocks: &[ClassicalComb],
) -> Result<ClassicalStrategy, EntropyError> {
    let mut label = "X".to_string();
    while blocks.first().is_some_and(|b| b.layout().contains(&label)) {
        label.push('_');
    }
    let (comb, achieved) = lp::induction_strategy(prior, blocks, &label)?;
    let report = comb.validate(1e-12);
    Ok(ClassicalStrategy {
        comb,
        achieved,
        report,
    })
}

/// Guessing probabilities for `1..=m_max` repetitions of the same ensemble
/// (the label is drawn once and every round leaks through the same blocks).
///
/// Exact values are available for one round, for classical ensembles, and
/// for the degenerate cases where repetition cannot help; other multi-round
/// instances are refused rather than approximated silently.
pub fn monotonicity_check(
    cq: &ClassicalQuantumComb,
    m_max: usize,
    cfg: &SolverConfig,
) -> Result<MonotonicityReport, EntropyError> {
    if m_max == 0 {
        return Err(EntropyError::MultiRound("zero rounds requested".into()));
    }
    let problem = CombSdpProblem::new(cq, cfg.sector_split, cfg.dedupe_tol)?;
    let mut rounds = Vec::with_capacity(m_max);
    if problem.is_diagonal() {
        let classical = classical_blocks_of(&problem)?;
        let r1 = lp::solve_classical_lp(&problem.prior, &classical)?;
        rounds.push(RoundValue::Exact(r1.value));
        for m in 2..=m_max {
            let (lower, upper) = bqc::classical_bounds(&problem.prior, &classical, m as u32)?;
            rounds.push(RoundValue::Bounds { lower, upper });
        }
    } else {
        let r1 = min_entropy(cq, cfg)?;
        let p1 = r1.p_guess;
        rounds.push(RoundValue::Exact(p1));
        if m_max > 1 {
            if problem.n_distinct() <= 1 || p1 >= 1.0 - 1e-9 {
                // repetition reveals nothing new: the blocks are
                // indistinguishable, or the label is already determined
                for _ in 2..=m_max {
                    rounds.push(RoundValue::Exact(p1));
                }
            } else {
                return Err(EntropyError::MultiRound(
                    "no exact reduction for repeated general quantum ensembles".into(),
                ));
            }
        }
    }
    let nondecreasing = rounds
        .windows(2)
        .all(|w| w[1].lower() >= w[0].lower() - 1e-9);
    Ok(MonotonicityReport {
        rounds,
        nondecreasing,
    })
}

fn classical_blocks_of(problem: &CombSdpProblem) -> Result<Vec<ClassicalComb>, EntropyError> {
    problem
        .mats
        .iter()
        .map(|m| {
            let diag: Vec<f64> = (0..m.nrows()).map(|i| m[(i, i)].re).collect();
            Ok(ClassicalComb::new(
                problem.layout.clone(),
                diag,
                problem.structure.clone(),
            )?)
        })
        .collect()
}

/// Evaluate `f` on `0..n`, optionally across worker threads. Results are
/// identical to the sequential run regardless of scheduling.
pub(crate) fn run_indexed<T: Send>(
    n: usize,
    jobs: usize,
    f: impl Fn(usize) -> T + Sync,
) -> Vec<T> {
    let jobs = if jobs == 0 {
        std::thread::available_parallelism()
            .map(|v| v.get())
            .unwrap_or(1)
    } else {
        jobs
    };
    let jobs = jobs.min(n.max(1));
    let mut out: Vec<Option<T>> = (0..n).map(|_| None).collect();
    if jobs <= 1 {
        for (i, slot) in out.iter_mut().enumerate() {
            *slot = Some(f(i));
        }
    } else {
        let counter = AtomicUsize::new(0);
        std::thread::scope(|scope| {
            let handles: Vec<_> = (0..jobs)
                .map(|_| {
                    scope.spawn(|| {
                        let mut local = Vec::new();
                        loop {
                            let i = counter.fetch_add(1, Ordering::Relaxed);
                            if i >= n {
                                break;
                            }
                            local.push((i, f(i)));
                        }
                        local
                    })
                })
                .collect();
            for h in handles {
                for (i, v) in h.join().expect("worker panicked") {
                    out[i] = Some(v);
                }
            }
        });
    }
    out.into_iter().map(|v| v.expect("all indices filled")).collect()
}
