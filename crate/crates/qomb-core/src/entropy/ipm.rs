//! Barrier path following for the sector-split guessing-probability program.
//!
//! The program minimizes `Tr[Gamma] / K` over the chain variables
//! `gamma_0, Gamma_1, ..., Gamma_n` subject to linear chain equalities and
//! per-sector domination constraints `Gamma_top[s] >= rhs`. All cone
//! constraints are handled by log-det barriers; the Newton KKT system is
//! reduced to a Schur complement on the equality multipliers, which stays
//! small because the Hessian is block-diagonal over sector variables.

use nalgebra::linalg::Cholesky;
use nalgebra::{DMatrix, DVector, Dyn};
use num_complex::Complex64;

use crate::operators::CMat;

use super::sector::CombSdpProblem;
use super::EntropyError;

/// One real-symmetric coordinate block: the svec of a Hermitian sector
/// matrix of dimension `q` (a scalar when `q == 1`).
#[derive(Clone, Debug)]
pub(crate) struct VarBlock {
    pub q: usize,
    pub offset: usize,
}

impl VarBlock {
    fn len(&self) -> usize {
        self.q * self.q
    }
}

/// Barrier term `-logdet(mat(var) - rhs)`.
pub(crate) struct Term {
    pub var: usize,
    pub rhs: CMat,
    /// Hypothesis receiving this constraint's dual mass, if any.
    pub attributed: Option<usize>,
    /// Row of the top index table (`sector * mult + expansion`) the dual
    /// block embeds into.
    pub cell: Option<usize>,
}

enum ACol {
    Scalar(Vec<(usize, f64)>),
    Dense(DMatrix<f64>),
}

pub(crate) struct Program {
    pub vars: Vec<VarBlock>,
    pub n_theta: usize,
    /// Homogeneous equality rows `sum coef * theta = 0`.
    pub rows: Vec<Vec<(usize, f64)>>,
    pub c: Vec<f64>,
    pub terms: Vec<Term>,
    pub nu: f64,
    pub start: Vec<f64>,
    /// Variable index of each top-level sector, sector order.
    pub top_vars: Vec<usize>,
    acols: Vec<ACol>,
}

pub(crate) struct SolveOptions {
    pub gap_tol: f64,
    pub newton_tol: f64,
    pub max_outer: usize,
    pub max_newton: usize,
    pub t0: f64,
    pub mu: f64,
}

pub(crate) struct RawSolution {
    pub theta: Vec<f64>,
    pub value: f64,
    pub dual_value: f64,
    pub gap: f64,
    pub t: f64,
    /// Per-term dual matrix `S^{-1} / t` at the final center.
    pub duals: Vec<CMat>,
    pub eq_residual: f64,
    pub newton_steps: usize,
    pub converged: bool,
}

// ---------------------------------------------------------------- svec

// Coordinates of Herm(q) in R^{q^2}: the q diagonal entries first, then for
// each pair i < j (row-major) the pair (sqrt2 Re, sqrt2 Im). The map is an
// isometry for the trace inner product.

#[inline]
fn sv_off_base(q: usize, i: usize, j: usize) -> usize {
    q + 2 * (i * q - i * (i + 1) / 2 + (j - i - 1))
}

pub(crate) fn svec_into(m: &CMat, out: &mut [f64]) {
    let q = m.nrows();
    let s = std::f64::consts::SQRT_2;
    for i in 0..q {
        out[i] = m[(i, i)].re;
    }
    for i in 0..q {
        for j in (i + 1)..q {
            let b = sv_off_base(q, i, j);
            out[b] = s * m[(i, j)].re;
            out[b + 1] = s * m[(i, j)].im;
        }
    }
}

pub(crate) fn mat_of_svec(v: &[f64], q: usize) -> CMat {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut m = CMat::zeros(q, q);
    for i in 0..q {
        m[(i, i)] = Complex64::new(v[i], 0.0);
    }
    for i in 0..q {
        for j in (i + 1)..q {
            let b = sv_off_base(q, i, j);
            let z = Complex64::new(v[b] * s, v[b + 1] * s);
            m[(i, j)] = z;
            m[(j, i)] = z.conj();
        }
    }
    m
}

/// Image of each svec basis element of Herm(q) under the partial trace over
/// a trailing factor of dimension `dq`: at most one target coordinate each.
fn ptrace_basis_map(q: usize, dq: usize) -> Vec<Option<(usize, f64)>> {
    let qh = q / dq;
    let mut map = vec![None; q * q];
    for i in 0..q {
        map[i] = Some((i / dq, 1.0));
    }
    for i in 0..q {
        for j in (i + 1)..q {
            if i % dq == j % dq {
                let (ih, jh) = (i / dq, j / dq);
                let b = sv_off_base(q, i, j);
                let bh = sv_off_base(qh, ih, jh);
                map[b] = Some((bh, 1.0));
                map[b + 1] = Some((bh + 1, 1.0));
            }
        }
    }
    map
}

/// Image of each svec basis element of Herm(qp) under `B -> B (x) I_di`,
/// landing in Herm(qp * di): `di` coordinates each, all with weight one.
fn kron_basis_map(qp: usize, di: usize) -> Vec<Vec<usize>> {
    let q = qp * di;
    let mut map = vec![Vec::new(); qp * qp];
    for i in 0..qp {
        map[i] = (0..di).map(|t| i * di + t).collect();
    }
    for i in 0..qp {
        for j in (i + 1)..qp {
            let b = sv_off_base(qp, i, j);
            let re: Vec<usize> = (0..di).map(|t| sv_off_base(q, i * di + t, j * di + t)).collect();
            let im: Vec<usize> = re.iter().map(|&r| r + 1).collect();
            map[b] = re;
            map[b + 1] = im;
        }
    }
    map
}

// ---------------------------------------------------------------- build

fn hermitize(m: &CMat) -> CMat {
    (m + m.adjoint()) * Complex64::new(0.5, 0.0)
}

fn lambda_max(m: &CMat) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    -crate::operators::min_hermitian_eigenvalue(&(-m))
}

pub(crate) fn program_from(p: &CombSdpProblem) -> Program {
    let levels = &p.levels;
    let mut vars = vec![VarBlock { q: 1, offset: 0 }];
    let mut var_of: Vec<Vec<usize>> = Vec::with_capacity(levels.len());
    let mut offset = 1usize;
    for l in levels {
        let mut row = Vec::with_capacity(l.sectors);
        for _ in 0..l.sectors {
            row.push(vars.len());
            vars.push(VarBlock { q: l.q, offset });
            offset += l.q * l.q;
        }
        var_of.push(row);
    }
    let n_theta = offset;

    let top = levels.last().expect("nonempty levels");
    let scale = p.mult as f64 / p.k_in;
    let mut c = vec![0.0f64; n_theta];
    for &v in &var_of[levels.len() - 1] {
        for i in 0..top.q {
            c[vars[v].offset + i] = scale;
        }
    }

    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    for (k, l) in levels.iter().enumerate() {
        let (prev_q, prev_sectors) = if k == 0 {
            (1usize, 1usize)
        } else {
            (levels[k - 1].q, levels[k - 1].sectors)
        };
        let qp = prev_q * l.in_q;
        let t_map = ptrace_basis_map(l.q, l.out_q);
        let kr_map = kron_basis_map(prev_q, l.in_q);
        for sp in 0..prev_sectors {
            let prev_off = if k == 0 {
                0
            } else {
                vars[var_of[k - 1][sp]].offset
            };
            for a in 0..l.in_cl {
                let base = rows.len();
                rows.resize_with(base + qp * qp, Vec::new);
                for b in 0..l.out_cl {
                    let s = (sp * l.in_cl + a) * l.out_cl + b;
                    let off = vars[var_of[k][s]].offset;
                    for (m, img) in t_map.iter().enumerate() {
                        if let Some((mp, w)) = img {
                            rows[base + mp].push((off + m, *w));
                        }
                    }
                }
                for (m, img) in kr_map.iter().enumerate() {
                    for &mp in img {
                        rows[base + mp].push((prev_off + m, -1.0));
                    }
                }
            }
        }
    }

    let mut terms = vec![Term {
        var: 0,
        rhs: CMat::zeros(1, 1),
        attributed: None,
        cell: None,
    }];
    for (k, l) in levels.iter().enumerate().take(levels.len() - 1) {
        for s in 0..l.sectors {
            terms.push(Term {
                var: var_of[k][s],
                rhs: CMat::zeros(l.q, l.q),
                attributed: None,
                cell: None,
            });
        }
    }
    let table = p.top_index_table();
    let tk = levels.len() - 1;
    if top.q == 1 {
        // every sector matrix is a scalar, so the dominations of all
        // hypotheses and expansion cells collapse to one envelope bound
        for s in 0..top.sectors {
            let mut best = 0.0f64;
            let mut attributed = None;
            let mut cell = None;
            for g in &p.groups {
                if g.coeff <= 0.0 {
                    continue;
                }
                for e in 0..p.mult {
                    let idx = table[s * p.mult + e][0];
                    let v = g.coeff * p.mats[g.members[0]][(idx, idx)].re;
                    if v > best {
                        best = v;
                        attributed = Some(g.attributed);
                        cell = Some(s * p.mult + e);
                    }
                }
            }
            let mut rhs = CMat::zeros(1, 1);
            rhs[(0, 0)] = Complex64::new(best, 0.0);
            terms.push(Term {
                var: var_of[tk][s],
                rhs,
                attributed,
                cell,
            });
        }
    } else {
        let mut covered = vec![false; top.sectors];
        for g in &p.groups {
            if g.coeff <= 0.0 {
                continue;
            }
            let rep = &p.mats[g.members[0]];
            for s in 0..top.sectors {
                covered[s] = true;
                for e in 0..p.mult {
                    let tbl = &table[s * p.mult + e];
                    let mut sig = CMat::zeros(top.q, top.q);
                    for r in 0..top.q {
                        for cc in 0..top.q {
                            sig[(r, cc)] = rep[(tbl[r], tbl[cc])] * g.coeff;
                        }
                    }
                    terms.push(Term {
                        var: var_of[tk][s],
                        rhs: hermitize(&sig),
                        attributed: Some(g.attributed),
                        cell: Some(s * p.mult + e),
                    });
                }
            }
        }
        for (s, done) in covered.iter().enumerate() {
            if !done {
                terms.push(Term {
                    var: var_of[tk][s],
                    rhs: CMat::zeros(top.q, top.q),
                    attributed: None,
                    cell: None,
                });
            }
        }
    }

    let nu: f64 = terms.iter().map(|t| vars[t.var].q as f64).sum();

    // Strictly feasible start: scaled identities along the chain.
    let lam = terms.iter().map(|t| lambda_max(&t.rhs)).fold(0.0, f64::max);
    let c0 = 2.0 * lam + 1.0;
    let mut beta = vec![1.0f64; levels.len()];
    for k in (0..levels.len() - 1).rev() {
        let l = &levels[k + 1];
        beta[k] = beta[k + 1] * (l.out_cl * l.out_q) as f64;
    }
    let beta0 = beta[0] * (levels[0].out_cl * levels[0].out_q) as f64;
    let mut start = vec![0.0f64; n_theta];
    start[0] = c0 * beta0;
    for (k, l) in levels.iter().enumerate() {
        for s in 0..l.sectors {
            let off = vars[var_of[k][s]].offset;
            for i in 0..l.q {
                start[off + i] = c0 * beta[k];
            }
        }
    }

    let top_vars = var_of[tk].clone();
    let acols = build_acols(&vars, n_theta, &rows);
    Program {
        vars,
        n_theta,
        rows,
        c,
        terms,
        nu,
        start,
        top_vars,
        acols,
    }
}

/// Hypothesis-testing form: minimize `Tr[Y]` with `Y >= rhs_x` on a single
/// uncontrolled slot. `mats` must already carry their prior weights.
pub(crate) fn discrimination_program(mats: &[CMat]) -> Program {
    let d = mats[0].nrows();
    let vars = vec![
        VarBlock { q: 1, offset: 0 },
        VarBlock { q: d, offset: 1 },
    ];
    let n_theta = 1 + d * d;
    let mut c = vec![0.0f64; n_theta];
    for i in 0..d {
        c[1 + i] = 1.0;
    }
    let mut row = Vec::with_capacity(d + 1);
    for i in 0..d {
        row.push((1 + i, 1.0));
    }
    row.push((0, -1.0));
    let rows = vec![row];
    let mut terms = vec![Term {
        var: 0,
        rhs: CMat::zeros(1, 1),
        attributed: None,
        cell: None,
    }];
    for (x, m) in mats.iter().enumerate() {
        terms.push(Term {
            var: 1,
            rhs: hermitize(m),
            attributed: Some(x),
            cell: None,
        });
    }
    let nu = terms.iter().map(|t| vars[t.var].q as f64).sum();
    let lam = terms.iter().map(|t| lambda_max(&t.rhs)).fold(0.0, f64::max);
    let c0 = 2.0 * lam + 1.0;
    let mut start = vec![0.0f64; n_theta];
    start[0] = c0 * d as f64;
    for i in 0..d {
        start[1 + i] = c0;
    }
    let acols = build_acols(&vars, n_theta, &rows);
    Program {
        vars,
        n_theta,
        rows,
        c,
        terms,
        nu,
        start,
        top_vars: vec![1],
        acols,
    }
}

fn build_acols(vars: &[VarBlock], n_theta: usize, rows: &[Vec<(usize, f64)>]) -> Vec<ACol> {
    let n_rows = rows.len();
    // map theta coordinate -> variable block
    let mut owner = vec![0usize; n_theta];
    for (vi, v) in vars.iter().enumerate() {
        for t in v.offset..v.offset + v.len() {
            owner[t] = vi;
        }
    }
    let mut scalar: Vec<Vec<(usize, f64)>> = vec![Vec::new(); vars.len()];
    let mut dense: Vec<Option<DMatrix<f64>>> = vars
        .iter()
        .map(|v| {
            if v.q > 1 {
                Some(DMatrix::zeros(n_rows, v.len()))
            } else {
                None
            }
        })
        .collect();
    for (r, row) in rows.iter().enumerate() {
        for &(col, w) in row {
            let vi = owner[col];
            match &mut dense[vi] {
                Some(m) => m[(r, col - vars[vi].offset)] += w,
                None => scalar[vi].push((r, w)),
            }
        }
    }
    vars.iter()
        .enumerate()
        .map(|(vi, _)| match dense[vi].take() {
            Some(m) => ACol::Dense(m),
            None => ACol::Scalar(std::mem::take(&mut scalar[vi])),
        })
        .collect()
}

// ---------------------------------------------------------------- solve

/// Cholesky factorization of a Hermitian matrix with a hard positivity
/// gate. nalgebra's complex Cholesky cannot serve here: complex square
/// roots always exist, so it "succeeds" on indefinite matrices.
pub(crate) struct HermChol {
    l: CMat,
}

impl HermChol {
    pub fn new(a: CMat) -> Option<Self> {
        let n = a.nrows();
        let mut l = a;
        for j in 0..n {
            let mut d = l[(j, j)].re;
            for k in 0..j {
                d -= l[(j, k)].norm_sqr();
            }
            if d <= 0.0 || !d.is_finite() {
                return None;
            }
            let dj = d.sqrt();
            l[(j, j)] = Complex64::new(dj, 0.0);
            for i in (j + 1)..n {
                let mut v = l[(i, j)];
                for k in 0..j {
                    v -= l[(i, k)] * l[(j, k)].conj();
                }
                l[(i, j)] = v / dj;
            }
        }
        for j in 0..n {
            for i in 0..j {
                l[(i, j)] = Complex64::new(0.0, 0.0);
            }
        }
        Some(HermChol { l })
    }

    pub fn log_det(&self) -> f64 {
        let mut s = 0.0;
        for j in 0..self.l.nrows() {
            s += self.l[(j, j)].re.ln();
        }
        2.0 * s
    }

    pub fn inverse(&self) -> CMat {
        let n = self.l.nrows();
        let mut x = CMat::identity(n, n);
        for col in 0..n {
            for i in 0..n {
                let mut v = x[(i, col)];
                for k in 0..i {
                    v -= self.l[(i, k)] * x[(k, col)];
                }
                x[(i, col)] = v / self.l[(i, i)].re;
            }
            for i in (0..n).rev() {
                let mut v = x[(i, col)];
                for k in (i + 1)..n {
                    v -= self.l[(k, i)].conj() * x[(k, col)];
                }
                x[(i, col)] = v / self.l[(i, i)].re;
            }
        }
        x
    }
}

enum HFac {
    Scalar(f64),
    Chol(Cholesky<f64, Dyn>),
}

impl HFac {
    fn solve_vec(&self, v: &DVector<f64>) -> DVector<f64> {
        match self {
            HFac::Scalar(h) => v / *h,
            HFac::Chol(ch) => ch.solve(v),
        }
    }
}

fn term_s(p: &Program, theta: &[f64], term: &Term) -> CMat {
    let vb = &p.vars[term.var];
    let m = mat_of_svec(&theta[vb.offset..vb.offset + vb.len()], vb.q);
    m - &term.rhs
}

fn factor_terms(p: &Program, theta: &[f64]) -> Option<Vec<HermChol>> {
    p.terms
        .iter()
        .map(|t| HermChol::new(term_s(p, theta, t)))
        .collect()
}

fn barrier_value(chols: &[HermChol]) -> f64 {
    -chols.iter().map(HermChol::log_det).sum::<f64>()
}

/// Accumulate the barrier Hessian of one term: column `l` is
/// `svec(S^{-1} B_l S^{-1})`, assembled from outer products of `S^{-1}`
/// columns.
fn accumulate_hessian(u: &CMat, h: &mut DMatrix<f64>) {
    let q = u.nrows();
    if q == 1 {
        let x = u[(0, 0)].re;
        h[(0, 0)] += x * x;
        return;
    }
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut col = vec![0.0f64; q * q];
    let mut m = CMat::zeros(q, q);
    for i in 0..q {
        for r in 0..q {
            for cc in 0..q {
                m[(r, cc)] = u[(r, i)] * u[(cc, i)].conj();
            }
        }
        svec_into(&m, &mut col);
        for t in 0..q * q {
            h[(t, i)] += col[t];
        }
    }
    for i in 0..q {
        for j in (i + 1)..q {
            let b = sv_off_base(q, i, j);
            for r in 0..q {
                for cc in 0..q {
                    let a = u[(r, i)] * u[(cc, j)].conj();
                    let d = u[(r, j)] * u[(cc, i)].conj();
                    m[(r, cc)] = (a + d) * s;
                }
            }
            svec_into(&m, &mut col);
            for t in 0..q * q {
                h[(t, b)] += col[t];
            }
            for r in 0..q {
                for cc in 0..q {
                    let a = u[(r, i)] * u[(cc, j)].conj();
                    let d = u[(r, j)] * u[(cc, i)].conj();
                    m[(r, cc)] = Complex64::new(0.0, 1.0) * (a - d) * s;
                }
            }
            svec_into(&m, &mut col);
            for t in 0..q * q {
                h[(t, b + 1)] += col[t];
            }
        }
    }
}

fn rows_apply(rows: &[Vec<(usize, f64)>], theta: &[f64]) -> DVector<f64> {
    DVector::from_iterator(
        rows.len(),
        rows.iter()
            .map(|row| row.iter().map(|&(c, w)| w * theta[c]).sum::<f64>()),
    )
}

/// Factorized `A A^T`, used to keep iterates on the equality subspace:
/// numerically exact chain equalities are what the certificate validator
/// later checks.
struct Projector {
    chol: Option<Cholesky<f64, Dyn>>,
}

impl Projector {
    fn build(rows: &[Vec<(usize, f64)>]) -> Self {
        let n = rows.len();
        let mut aat = DMatrix::<f64>::zeros(n, n);
        for (i, ri) in rows.iter().enumerate() {
            for (j, rj) in rows.iter().enumerate().skip(i) {
                let mut acc = 0.0;
                // rows are short; merge by scanning
                for &(c1, w1) in ri {
                    for &(c2, w2) in rj {
                        if c1 == c2 {
                            acc += w1 * w2;
                        }
                    }
                }
                aat[(i, j)] = acc;
                aat[(j, i)] = acc;
            }
        }
        Projector {
            chol: Cholesky::new(aat),
        }
    }

    fn apply(&self, rows: &[Vec<(usize, f64)>], theta: &mut [f64]) {
        let Some(ch) = &self.chol else { return };
        let r = rows_apply(rows, theta);
        let y = ch.solve(&r);
        for (row, row_entries) in rows.iter().enumerate() {
            let yv = y[row];
            for &(c, w) in row_entries {
                theta[c] -= w * yv;
            }
        }
    }
}

pub(crate) fn solve(p: &Program, o: &SolveOptions) -> Result<RawSolution, EntropyError> {
    let projector = Projector::build(&p.rows);
    let mut theta = p.start.clone();
    projector.apply(&p.rows, &mut theta);
    let mut chols = factor_terms(p, &theta)
        .ok_or_else(|| EntropyError::Numerical("interior start is not strictly feasible".into()))?;
    let mut t = o.t0;
    let mut steps_total = 0usize;
    let mut converged = false;
    let mut stalled = false;
    let mut lambda2_end = f64::INFINITY;

    'outer: for _ in 0..o.max_outer {
        for _ in 0..o.max_newton {
            let step = newton_direction(p, &theta, t, &chols)?;
            let (delta, lambda2, dirderiv) = match step {
                Some(s) => s,
                None => {
                    stalled = true;
                    break;
                }
            };
            lambda2_end = lambda2;
            if lambda2 <= o.newton_tol {
                break;
            }
            steps_total += 1;
            let f0 = t * dot(&p.c, &theta) + barrier_value(&chols);
            let mut alpha = 1.0f64;
            let mut accepted = false;
            while alpha > 1e-13 {
                let trial: Vec<f64> = theta
                    .iter()
                    .zip(delta.iter())
                    .map(|(x, d)| x + alpha * d)
                    .collect();
                if let Some(ch) = factor_terms(p, &trial) {
                    let f1 = t * dot(&p.c, &trial) + barrier_value(&ch);
                    if f1 <= f0 + 0.01 * alpha * dirderiv.min(0.0) {
                        theta = trial;
                        chols = ch;
                        accepted = true;
                        break;
                    }
                }
                alpha *= 0.5;
            }
            if !accepted {
                stalled = true;
                break;
            }
        }
        // certified bound at an approximate center
        let gap = cert_gap(p.nu, lambda2_end, t);
        if gap <= o.gap_tol {
            converged = true;
            break 'outer;
        }
        if stalled || t > 1e15 {
            break 'outer;
        }
        t *= o.mu;
    }

    let gap = cert_gap(p.nu, lambda2_end, t);
    // Iterates drift off the equality subspace by the accumulated error of
    // the reduced solves; snap the reported point back. The displacement is
    // bounded by that drift, far below the validator tolerances, so the
    // certificate keeps its PSD margin.
    projector.apply(&p.rows, &mut theta);
    let value = dot(&p.c, &theta);
    let dual_value = value - gap;
    let duals: Vec<CMat> = chols
        .iter()
        .map(|ch| ch.inverse() * Complex64::new(1.0 / t, 0.0))
        .collect();
    let eq_residual = rows_apply(&p.rows, &theta)
        .iter()
        .map(|v| v.abs())
        .fold(0.0, f64::max);
    Ok(RawSolution {
        theta,
        value,
        dual_value,
        gap,
        t,
        duals,
        eq_residual,
        newton_steps: steps_total,
        converged,
    })
}

fn cert_gap(nu: f64, lambda2: f64, t: f64) -> f64 {
    // The bound only holds near a center; past lambda ~ 1/4 the
    // self-concordance estimate breaks down and nothing is certified.
    if !lambda2.is_finite() || lambda2 > 0.0625 {
        return f64::INFINITY;
    }
    (nu + (lambda2 * nu).sqrt()) / t
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Newton step of the equality-constrained barrier problem. Returns the
/// direction, the squared Newton decrement, and the directional derivative
/// of the barrier objective; `None` when the reduced system loses
/// definiteness.
fn newton_direction(
    p: &Program,
    theta: &[f64],
    t: f64,
    chols: &[HermChol],
) -> Result<Option<(DVector<f64>, f64, f64)>, EntropyError> {
    let n_rows = p.rows.len();
    let g = {
        let mut g = DVector::from_iterator(p.n_theta, p.c.iter().map(|v| t * v));
        let mut buf = vec![0.0f64; p.vars.iter().map(|v| v.len()).max().unwrap_or(1)];
        for (term, ch) in p.terms.iter().zip(chols) {
            let vb = &p.vars[term.var];
            let u = ch.inverse();
            svec_into(&u, &mut buf[..vb.len()]);
            for (i, v) in buf[..vb.len()].iter().enumerate() {
                g[vb.offset + i] -= v;
            }
        }
        g
    };

    // per-variable Hessians
    let mut h_blocks: Vec<DMatrix<f64>> = p
        .vars
        .iter()
        .map(|v| DMatrix::zeros(v.len(), v.len()))
        .collect();
    for (term, ch) in p.terms.iter().zip(chols) {
        let u = ch.inverse();
        accumulate_hessian(&u, &mut h_blocks[term.var]);
    }
    let h_fac: Vec<HFac> = h_blocks
        .into_iter()
        .map(|h| {
            if h.nrows() == 1 {
                let v = h[(0, 0)];
                if v > 0.0 {
                    Some(HFac::Scalar(v))
                } else {
                    None
                }
            } else {
                Cholesky::new(h).map(HFac::Chol)
            }
        })
        .collect::<Option<Vec<_>>>()
        .ok_or_else(|| EntropyError::Numerical("barrier Hessian lost definiteness".into()))?;

    // w = H^{-1} g, blockwise
    let mut w = DVector::zeros(p.n_theta);
    for (vi, v) in p.vars.iter().enumerate() {
        let gv = DVector::from_column_slice(&g.as_slice()[v.offset..v.offset + v.len()]);
        let wv = h_fac[vi].solve_vec(&gv);
        w.rows_mut(v.offset, v.len()).copy_from(&wv);
    }

    let r = rows_apply(&p.rows, theta);
    // rhs = r - A w
    let mut rhs = r.clone();
    for (row_idx, row) in p.rows.iter().enumerate() {
        let mut acc = 0.0;
        for &(cc, wt) in row {
            acc += wt * w[cc];
        }
        rhs[row_idx] -= acc;
    }

    // Schur complement M = A H^{-1} A^T
    let mut m = DMatrix::<f64>::zeros(n_rows, n_rows);
    for vi in 0..p.vars.len() {
        match &p.acols[vi] {
            ACol::Scalar(entries) => {
                if entries.is_empty() {
                    continue;
                }
                let hinv = match &h_fac[vi] {
                    HFac::Scalar(h) => 1.0 / *h,
                    HFac::Chol(_) => unreachable!("scalar column on dense block"),
                };
                for &(r1, w1) in entries {
                    for &(r2, w2) in entries {
                        m[(r1, r2)] += hinv * w1 * w2;
                    }
                }
            }
            ACol::Dense(a) => {
                let x = match &h_fac[vi] {
                    HFac::Chol(ch) => ch.solve(&a.transpose()),
                    HFac::Scalar(h) => a.transpose() / *h,
                };
                m += a * x;
            }
        }
    }
    let m_chol = match Cholesky::new(m.clone()) {
        Some(ch) => ch,
        None => return Ok(None),
    };
    let mut y = m_chol.solve(&rhs);
    // one pass of iterative refinement; the Schur complement turns badly
    // conditioned near the end of the path
    let resid = &rhs - &m * &y;
    y += m_chol.solve(&resid);

    // delta = -H^{-1} (g + A^T y)
    let mut gy = g.clone();
    for (row_idx, row) in p.rows.iter().enumerate() {
        let yv = y[row_idx];
        for &(cc, wt) in row {
            gy[cc] += wt * yv;
        }
    }
    let mut delta = DVector::zeros(p.n_theta);
    for (vi, v) in p.vars.iter().enumerate() {
        let gv = DVector::from_column_slice(&gy.as_slice()[v.offset..v.offset + v.len()]);
        let dv = h_fac[vi].solve_vec(&gv);
        for (i, x) in dv.iter().enumerate() {
            delta[v.offset + i] = -x;
        }
    }
    let g_dot = g.dot(&delta);
    let lambda2 = (-g_dot + r.dot(&y)).max(0.0);
    Ok(Some((delta, lambda2, g_dot)))
}
