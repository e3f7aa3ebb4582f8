//! Dense complex operators on labeled tensor factors.
//!
//! Every operator carries a [`SpaceLayout`] naming its tensor factors; the
//! leftmost factor is the most significant index (row-major multi-index
//! convention, matching the usual `kron` ordering).

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type CMat = DMatrix<Complex64>;

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub const C_ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const C_ONE: Complex64 = Complex64::new(1.0, 0.0);

#[derive(Debug, Error)]
pub enum OperatorError {
    #[error("duplicate wire label `{0}`")]
    DuplicateLabel(String),
    #[error("unknown wire label `{0}`")]
    UnknownLabel(String),
    #[error("wire `{0}` has dimension zero")]
    ZeroDim(String),
    #[error("shared wire `{label}` has dimension {left} on the left operand but {right} on the right")]
    SharedDimMismatch {
        label: String,
        left: usize,
        right: usize,
    },
    #[error("matrix is {rows}x{cols} but the layout dimension is {expected}")]
    ShapeMismatch {
        rows: usize,
        cols: usize,
        expected: usize,
    },
    #[error("index list {0:?} is not a permutation of the factor positions")]
    BadPermutation(Vec<usize>),
}

/// One named tensor factor.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SubsystemLabel {
    pub name: String,
    pub dim: usize,
}

impl SubsystemLabel {
    pub fn new(name: impl Into<String>, dim: usize) -> Self {
        Self {
            name: name.into(),
            dim,
        }
    }
}

/// Ordered list of distinct named factors; the empty layout is the scalar
/// space (total dimension 1).
#[derive(Clone, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "Vec<SubsystemLabel>", into = "Vec<SubsystemLabel>")]
pub struct SpaceLayout {
    factors: Vec<SubsystemLabel>,
}

impl TryFrom<Vec<SubsystemLabel>> for SpaceLayout {
    type Error = OperatorError;
    fn try_from(factors: Vec<SubsystemLabel>) -> Result<Self, OperatorError> {
        Self::new(factors)
    }
}

impl From<SpaceLayout> for Vec<SubsystemLabel> {
    fn from(l: SpaceLayout) -> Self {
        l.factors
    }
}

impl SpaceLayout {
    pub fn new(factors: Vec<SubsystemLabel>) -> Result<Self, OperatorError> {
        for (i, f) in factors.iter().enumerate() {
            if f.dim == 0 {
                return Err(OperatorError::ZeroDim(f.name.clone()));
            }
            if factors[..i].iter().any(|g| g.name == f.name) {
                return Err(OperatorError::DuplicateLabel(f.name.clone()));
            }
        }
        Ok(Self { factors })
    }

    /// Convenience constructor from `(name, dim)` pairs.
    pub fn of(pairs: &[(&str, usize)]) -> Self {
        Self::new(
            pairs
                .iter()
                .map(|(n, d)| SubsystemLabel::new(*n, *d))
                .collect(),
        )
        .expect("static layout must be well formed")
    }

    pub fn scalar() -> Self {
        Self::default()
    }

    pub fn factors(&self) -> &[SubsystemLabel] {
        &self.factors
    }

    pub fn dims(&self) -> Vec<usize> {
        self.factors.iter().map(|f| f.dim).collect()
    }

    pub fn names(&self) -> Vec<&str> {
        self.factors.iter().map(|f| f.name.as_str()).collect()
    }

    pub fn total_dim(&self) -> usize {
        self.factors.iter().map(|f| f.dim).product()
    }

    pub fn len(&self) -> usize {
        self.factors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.factors.is_empty()
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.factors.iter().position(|f| f.name == name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.position(name).is_some()
    }

    fn positions(&self, names: &[&str]) -> Result<Vec<usize>, OperatorError> {
        names
            .iter()
            .map(|n| {
                self.position(n)
                    .ok_or_else(|| OperatorError::UnknownLabel((*n).to_string()))
            })
            .collect()
    }

    /// Row strides of each factor; factor 0 is most significant.
    pub fn strides(&self) -> Vec<usize> {
        let mut s = vec![1usize; self.factors.len()];
        for j in (0..self.factors.len().saturating_sub(1)).rev() {
            s[j] = s[j + 1] * self.factors[j + 1].dim;
        }
        s
    }
}

impl std::fmt::Display for SpaceLayout {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self
            .factors
            .iter()
            .map(|x| format!("{}:{}", x.name, x.dim))
            .collect();
        write!(f, "[{}]", parts.join(", "))
    }
}

/// Flat indices of all multi-indices over the factors at `positions`,
/// embedded into the full index space (contributions are additive because
/// factor positions are disjoint).
fn embeddings(dims: &[usize], strides: &[usize], positions: &[usize]) -> Vec<usize> {
    let mut out = vec![0usize];
    for &p in positions {
        let mut next = Vec::with_capacity(out.len() * dims[p]);
        for &base in &out {
            for k in 0..dims[p] {
                next.push(base + k * strides[p]);
            }
        }
        out = next;
    }
    out
}

/// Check result of [`LabeledOperator::is_psd`]. A non-Hermitian matrix is
/// reported as such rather than as merely "not PSD".
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PsdCheck {
    Psd { min_eigenvalue: f64 },
    NotPsd { min_eigenvalue: f64 },
    NotHermitian { residual: f64 },
}

impl PsdCheck {
    pub fn is_psd(&self) -> bool {
        matches!(self, PsdCheck::Psd { .. })
    }

    pub fn min_eigenvalue(&self) -> Option<f64> {
        match self {
            PsdCheck::Psd { min_eigenvalue } | PsdCheck::NotPsd { min_eigenvalue } => {
                Some(*min_eigenvalue)
            }
            PsdCheck::NotHermitian { .. } => None,
        }
    }
}

/// Numerical tolerances for operator-level checks.
#[derive(Clone, Copy, Debug)]
pub struct Tolerances {
    /// Max allowed entry of `|M - M^dagger|`.
    pub hermiticity: f64,
    /// Eigenvalues above `-psd` count as nonnegative.
    pub psd: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            hermiticity: 1e-9,
            psd: 1e-8,
        }
    }
}

/// Dense complex operator together with the layout of the space it acts on.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledOperator {
    layout: SpaceLayout,
    data: CMat,
}

impl LabeledOperator {
    pub fn new(layout: SpaceLayout, data: CMat) -> Result<Self, OperatorError> {
        let d = layout.total_dim();
        if data.nrows() != d || data.ncols() != d {
            return Err(OperatorError::ShapeMismatch {
                rows: data.nrows(),
                cols: data.ncols(),
                expected: d,
            });
        }
        Ok(Self { layout, data })
    }

    pub fn identity(layout: SpaceLayout) -> Self {
        let d = layout.total_dim();
        Self {
            layout,
            data: CMat::identity(d, d),
        }
    }

    pub fn zeros(layout: SpaceLayout) -> Self {
        let d = layout.total_dim();
        Self {
            layout,
            data: CMat::zeros(d, d),
        }
    }

    /// The 1x1 operator holding a bare scalar.
    pub fn scalar(v: Complex64) -> Self {
        Self {
            layout: SpaceLayout::scalar(),
            data: CMat::from_element(1, 1, v),
        }
    }

    pub fn layout(&self) -> &SpaceLayout {
        &self.layout
    }

    pub fn matrix(&self) -> &CMat {
        &self.data
    }

    pub fn into_matrix(self) -> CMat {
        self.data
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn trace(&self) -> Complex64 {
        self.data.diagonal().sum()
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Self {
            layout: self.layout.clone(),
            data: &self.data * s,
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self, OperatorError> {
        if self.layout != other.layout {
            return Err(OperatorError::ShapeMismatch {
                rows: other.data.nrows(),
                cols: other.data.ncols(),
                expected: self.dim(),
            });
        }
        Ok(Self {
            layout: self.layout.clone(),
            data: &self.data + &other.data,
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self, OperatorError> {
        self.add(&other.scale(crate::operators::c(-1.0, 0.0)))
    }

    /// Matrix product. `other` is first aligned to this operator's factor
    /// order, so both must live on the same set of wires.
    pub fn matmul(&self, other: &Self) -> Result<Self, OperatorError> {
        let names = self.layout.names();
        let aligned = other.reorder(&names)?;
        if aligned.layout != self.layout {
            return Err(OperatorError::ShapeMismatch {
                rows: other.data.nrows(),
                cols: other.data.ncols(),
                expected: self.dim(),
            });
        }
        Ok(Self {
            layout: self.layout.clone(),
            data: &self.data * &aligned.data,
        })
    }

    /// Rename wires without touching the data.
    pub fn relabeled(&self, f: impl Fn(&str) -> String) -> Result<Self, OperatorError> {
        let factors = self
            .layout
            .factors
            .iter()
            .map(|l| SubsystemLabel::new(f(&l.name), l.dim))
            .collect();
        Ok(Self {
            layout: SpaceLayout::new(factors)?,
            data: self.data.clone(),
        })
    }

    pub fn dagger(&self) -> Self {
        Self {
            layout: self.layout.clone(),
            data: self.data.adjoint(),
        }
    }

    /// Max entry of `|M - M^dagger|`.
    pub fn hermiticity_residual(&self) -> f64 {
        let d = self.dim();
        let mut worst = 0.0f64;
        for i in 0..d {
            for j in i..d {
                let r = (self.data[(i, j)] - self.data[(j, i)].conj()).norm();
                if r > worst {
                    worst = r;
                }
            }
        }
        worst
    }

    /// Kronecker product; layouts are concatenated and must stay disjoint.
    pub fn kron(&self, other: &Self) -> Result<Self, OperatorError> {
        let mut factors = self.layout.factors.clone();
        factors.extend(other.layout.factors.iter().cloned());
        let layout = SpaceLayout::new(factors)?;
        Ok(Self {
            layout,
            data: self.data.kronecker(&other.data),
        })
    }

    /// Reorder tensor factors; `perm[p]` is the old position placed at `p`.
    pub fn permute_factors(&self, perm: &[usize]) -> Result<Self, OperatorError> {
        let k = self.layout.len();
        let mut seen = vec![false; k];
        if perm.len() != k || perm.iter().any(|&p| p >= k || std::mem::replace(&mut seen[p], true))
        {
            return Err(OperatorError::BadPermutation(perm.to_vec()));
        }
        let dims = self.layout.dims();
        let old_strides = self.layout.strides();
        let new_factors: Vec<SubsystemLabel> =
            perm.iter().map(|&p| self.layout.factors[p].clone()).collect();
        let new_layout = SpaceLayout::new(new_factors)?;
        let d = self.dim();
        // Map each new flat index to the old one.
        let mut map = vec![0usize; d];
        let new_dims: Vec<usize> = perm.iter().map(|&p| dims[p]).collect();
        for (r, slot) in map.iter_mut().enumerate() {
            let mut rem = r;
            let mut old = 0usize;
            for (pos, &p) in perm.iter().enumerate() {
                let block: usize = new_dims[pos + 1..].iter().product();
                let idx = rem / block;
                rem %= block;
                old += idx * old_strides[p];
            }
            *slot = old;
        }
        let mut out = CMat::zeros(d, d);
        for r in 0..d {
            for col in 0..d {
                out[(r, col)] = self.data[(map[r], map[col])];
            }
        }
        Ok(Self {
            layout: new_layout,
            data: out,
        })
    }

    /// Reorder factors so their names appear in the order given by `names`
    /// (which must list every factor exactly once).
    pub fn reorder(&self, names: &[&str]) -> Result<Self, OperatorError> {
        if names.len() != self.layout.len() {
            return Err(OperatorError::BadPermutation(vec![]));
        }
        let perm = self.layout.positions(names)?;
        self.permute_factors(&perm)
    }

    /// Trace out the named factors; remaining factors keep their order.
    pub fn partial_trace(&self, over: &[&str]) -> Result<Self, OperatorError> {
        let traced = self.layout.positions(over)?;
        let dims = self.layout.dims();
        let strides = self.layout.strides();
        let kept: Vec<usize> = (0..self.layout.len()).filter(|p| !traced.contains(p)).collect();
        let kept_embed = embeddings(&dims, &strides, &kept);
        let traced_embed = embeddings(&dims, &strides, &traced);
        let kept_factors: Vec<SubsystemLabel> =
            kept.iter().map(|&p| self.layout.factors[p].clone()).collect();
        let layout = SpaceLayout::new(kept_factors)?;
        let dr = kept_embed.len();
        let mut out = CMat::zeros(dr, dr);
        for (r, &re) in kept_embed.iter().enumerate() {
            for (col, &ce) in kept_embed.iter().enumerate() {
                let mut acc = C_ZERO;
                for &te in &traced_embed {
                    acc += self.data[(re + te, ce + te)];
                }
                out[(r, col)] = acc;
            }
        }
        Ok(Self { layout, data: out })
    }

    /// Transpose the named factors in place, leaving the rest untouched.
    pub fn partial_transpose(&self, over: &[&str]) -> Result<Self, OperatorError> {
        let flipped = self.layout.positions(over)?;
        let dims = self.layout.dims();
        let strides = self.layout.strides();
        let kept: Vec<usize> =
            (0..self.layout.len()).filter(|p| !flipped.contains(p)).collect();
        let kept_embed = embeddings(&dims, &strides, &kept);
        let flip_embed = embeddings(&dims, &strides, &flipped);
        let d = self.dim();
        let mut out = CMat::zeros(d, d);
        for &rk in &kept_embed {
            for &ck in &kept_embed {
                for &rf in &flip_embed {
                    for &cf in &flip_embed {
                        out[(rk + rf, ck + cf)] = self.data[(rk + cf, ck + rf)];
                    }
                }
            }
        }
        Ok(Self {
            layout: self.layout.clone(),
            data: out,
        })
    }

    /// Link product: contract over all factors whose names appear in both
    /// operands. With no shared factor this is a plain Kronecker product; with
    /// all factors shared it is `Tr[M^T N]` on a scalar layout.
    ///
    /// The result lives on M's unshared factors followed by N's, so the
    /// operation is commutative only up to factor reordering.
    pub fn link_product(&self, other: &Self) -> Result<Self, OperatorError> {
        let shared: Vec<&str> = self
            .layout
            .factors
            .iter()
            .filter(|f| other.layout.contains(&f.name))
            .map(|f| f.name.as_str())
            .collect();
        for name in &shared {
            let dl = self.layout.factors[self.layout.position(name).unwrap()].dim;
            let dr = other.layout.factors[other.layout.position(name).unwrap()].dim;
            if dl != dr {
                return Err(OperatorError::SharedDimMismatch {
                    label: (*name).to_string(),
                    left: dl,
                    right: dr,
                });
            }
        }
        if shared.is_empty() {
            return self.kron(other);
        }
        let rest_m: Vec<&str> = self
            .layout
            .factors
            .iter()
            .filter(|f| !shared.contains(&f.name.as_str()))
            .map(|f| f.name.as_str())
            .collect();
        let rest_n: Vec<&str> = other
            .layout
            .factors
            .iter()
            .filter(|f| !shared.contains(&f.name.as_str()))
            .map(|f| f.name.as_str())
            .collect();
        let mut m_order = rest_m.clone();
        m_order.extend(shared.iter().copied());
        let mut n_order = shared.clone();
        n_order.extend(rest_n.iter().copied());
        let mp = self.reorder(&m_order)?;
        let np = other.reorder(&n_order)?;
        let db: usize = shared
            .iter()
            .map(|n| self.layout.factors[self.layout.position(n).unwrap()].dim)
            .product();
        let da = mp.dim() / db;
        let dc = np.dim() / db;
        // R(ac, a'c') = sum_{b,b''} M(a b'', a' b) N(b'' c, b c')
        let mut out = CMat::zeros(da * dc, da * dc);
        for a in 0..da {
            for a2 in 0..da {
                for cc in 0..dc {
                    for c2 in 0..dc {
                        let mut acc = C_ZERO;
                        for b in 0..db {
                            for b2 in 0..db {
                                acc += mp.data[(a * db + b2, a2 * db + b)]
                                    * np.data[(b2 * dc + cc, b * dc + c2)];
                            }
                        }
                        out[(a * dc + cc, a2 * dc + c2)] = acc;
                    }
                }
            }
        }
        let mut factors: Vec<SubsystemLabel> = rest_m
            .iter()
            .map(|n| self.layout.factors[self.layout.position(n).unwrap()].clone())
            .collect();
        factors.extend(
            rest_n
                .iter()
                .map(|n| other.layout.factors[other.layout.position(n).unwrap()].clone()),
        );
        Ok(Self {
            layout: SpaceLayout::new(factors)?,
            data: out,
        })
    }

    /// PSD check: Hermiticity within `tol.hermiticity` first, then the
    /// spectrum bound `lambda_min >= -tol.psd`.
    pub fn is_psd(&self, tol: &Tolerances) -> PsdCheck {
        let residual = self.hermiticity_residual();
        if residual > tol.hermiticity {
            return PsdCheck::NotHermitian { residual };
        }
        let min_eigenvalue = min_hermitian_eigenvalue(&self.data);
        if min_eigenvalue >= -tol.psd {
            PsdCheck::Psd { min_eigenvalue }
        } else {
            PsdCheck::NotPsd { min_eigenvalue }
        }
    }
}

/// Smallest eigenvalue of the Hermitian part of `m`, computed through the
/// real symmetric embedding `[[Re, -Im], [Im, Re]]` (its spectrum is the
/// complex spectrum with doubled multiplicities).
pub fn min_hermitian_eigenvalue(m: &CMat) -> f64 {
    let d = m.nrows();
    if d == 0 {
        return 0.0;
    }
    let emb = faer::Mat::<f64>::from_fn(2 * d, 2 * d, |i, j| {
        // Hermitian part, so rounding noise in the input cannot break the
        // symmetry the eigensolver assumes.
        let h = |r: usize, c: usize| 0.5 * (m[(r, c)] + m[(c, r)].conj());
        match (i < d, j < d) {
            (true, true) => h(i, j).re,
            (true, false) => -h(i, j - d).im,
            (false, true) => h(i - d, j).im,
            (false, false) => h(i - d, j - d).re,
        }
    });
    let ev = emb
        .self_adjoint_eigenvalues(faer::Side::Lower)
        .expect("eigenvalue computation on a finite symmetric matrix");
    ev.first().copied().unwrap_or(0.0)
}

/// Trace norm of the Hermitian part of `m` (sum of absolute eigenvalues).
/// Uses the same real embedding as [`min_hermitian_eigenvalue`]; the
/// embedding doubles every multiplicity, hence the factor 1/2.
pub fn trace_norm_hermitian(m: &CMat) -> f64 {
    let d = m.nrows();
    if d == 0 {
        return 0.0;
    }
    let emb = faer::Mat::<f64>::from_fn(2 * d, 2 * d, |i, j| {
        let h = |r: usize, c: usize| 0.5 * (m[(r, c)] + m[(c, r)].conj());
        match (i < d, j < d) {
            (true, true) => h(i, j).re,
            (true, false) => -h(i, j - d).im,
            (false, true) => h(i - d, j).im,
            (false, false) => h(i - d, j - d).re,
        }
    });
    let ev = emb
        .self_adjoint_eigenvalues(faer::Side::Lower)
        .expect("eigenvalue computation on a finite symmetric matrix");
    ev.iter().map(|v| v.abs()).sum::<f64>() / 2.0
}

/// Serialization shell: layout plus row-major `[re, im]` entries.
#[derive(Serialize, Deserialize)]
struct OperatorWire {
    layout: Vec<SubsystemLabel>,
    data: Vec<[f64; 2]>,
}

impl Serialize for LabeledOperator {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let d = self.dim();
        let mut data = Vec::with_capacity(d * d);
        for r in 0..d {
            for col in 0..d {
                let v = self.data[(r, col)];
                data.push([v.re, v.im]);
            }
        }
        OperatorWire {
            layout: self.layout.factors.clone(),
            data,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for LabeledOperator {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let wire = OperatorWire::deserialize(de)?;
        let layout = SpaceLayout::new(wire.layout).map_err(D::Error::custom)?;
        let d = layout.total_dim();
        if wire.data.len() != d * d {
            return Err(D::Error::custom(format!(
                "expected {} entries for layout {}, got {}",
                d * d,
                layout,
                wire.data.len()
            )));
        }
        let mut m = CMat::zeros(d, d);
        for r in 0..d {
            for col in 0..d {
                let [re, im] = wire.data[r * d + col];
                m[(r, col)] = c(re, im);
            }
        }
        LabeledOperator::new(layout, m).map_err(D::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pauli_x() -> CMat {
        CMat::from_row_slice(2, 2, &[C_ZERO, C_ONE, C_ONE, C_ZERO])
    }

    fn pauli_z() -> CMat {
        CMat::from_row_slice(2, 2, &[C_ONE, C_ZERO, C_ZERO, -C_ONE])
    }

    fn max_abs_diff(a: &CMat, b: &CMat) -> f64 {
        (a - b).iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    #[test]
    fn layout_rejects_duplicates_and_zero_dims() {
        assert!(matches!(
            SpaceLayout::new(vec![
                SubsystemLabel::new("A", 2),
                SubsystemLabel::new("A", 3)
            ]),
            Err(OperatorError::DuplicateLabel(_))
        ));
        assert!(matches!(
            SpaceLayout::new(vec![SubsystemLabel::new("A", 0)]),
            Err(OperatorError::ZeroDim(_))
        ));
    }

    #[test]
    fn strides_follow_most_significant_first() {
        let l = SpaceLayout::of(&[("A", 2), ("B", 3), ("C", 4)]);
        assert_eq!(l.strides(), vec![12, 4, 1]);
        assert_eq!(l.total_dim(), 24);
    }

    #[test]
    fn kron_of_paulis_has_expected_entries() {
        let x = LabeledOperator::new(SpaceLayout::of(&[("A", 2)]), pauli_x()).unwrap();
        let z = LabeledOperator::new(SpaceLayout::of(&[("B", 2)]), pauli_z()).unwrap();
        let xz = x.kron(&z).unwrap();
        // (X tensor Z)(0,2) = X(0,1) Z(0,0) = 1, (1,3) = -1
        assert_eq!(xz.matrix()[(0, 2)], C_ONE);
        assert_eq!(xz.matrix()[(1, 3)], -C_ONE);
        assert_eq!(xz.layout().names(), vec!["A", "B"]);
        assert!(x.kron(&x).is_err(), "same label twice must be rejected");
    }

    #[test]
    fn partial_trace_of_product_state_splits() {
        let a = LabeledOperator::new(
            SpaceLayout::of(&[("A", 2)]),
            CMat::from_row_slice(2, 2, &[c(0.7, 0.0), c(0.1, 0.2), c(0.1, -0.2), c(0.3, 0.0)]),
        )
        .unwrap();
        let b = LabeledOperator::new(
            SpaceLayout::of(&[("B", 3)]),
            CMat::identity(3, 3) * c(1.0 / 3.0, 0.0),
        )
        .unwrap();
        let ab = a.kron(&b).unwrap();
        let back = ab.partial_trace(&["B"]).unwrap();
        assert!(max_abs_diff(back.matrix(), a.matrix()) < 1e-14);
        let other = ab.partial_trace(&["A"]).unwrap();
        assert!(max_abs_diff(other.matrix(), b.matrix()) < 1e-14);
        // tracing everything leaves the scalar trace
        let s = ab.partial_trace(&["A", "B"]).unwrap();
        assert!(s.layout().is_empty());
        assert!((s.matrix()[(0, 0)] - ab.trace()).norm() < 1e-14);
    }

    #[test]
    fn partial_trace_unknown_label_errors() {
        let a = LabeledOperator::identity(SpaceLayout::of(&[("A", 2)]));
        assert!(matches!(
            a.partial_trace(&["nope"]),
            Err(OperatorError::UnknownLabel(_))
        ));
    }

    #[test]
    fn partial_transpose_is_involutive_and_matches_manual() {
        let l = SpaceLayout::of(&[("A", 2), ("B", 2)]);
        let mut m = CMat::zeros(4, 4);
        for r in 0..4 {
            for col in 0..4 {
                m[(r, col)] = c(r as f64 + 0.5, col as f64 - 1.0);
            }
        }
        let op = LabeledOperator::new(l, m).unwrap();
        let tb = op.partial_transpose(&["B"]).unwrap();
        // Entry ((a r_b),(a' c_b)) of T_B equals ((a c_b),(a' r_b)) of M.
        assert_eq!(tb.matrix()[(0, 1)], op.matrix()[(1, 0)]);
        assert_eq!(tb.matrix()[(2, 3)], op.matrix()[(3, 2)]);
        assert_eq!(tb.matrix()[(0, 3)], op.matrix()[(1, 2)]);
        let back = tb.partial_transpose(&["B"]).unwrap();
        assert!(max_abs_diff(back.matrix(), op.matrix()) < 1e-14);
        // transposing every factor is the full transpose
        let tall = op.partial_transpose(&["A", "B"]).unwrap();
        assert!(max_abs_diff(tall.matrix(), &op.matrix().transpose()) < 1e-14);
    }

    #[test]
    fn permute_factors_round_trips() {
        let l = SpaceLayout::of(&[("A", 2), ("B", 3), ("C", 2)]);
        let d = l.total_dim();
        let mut m = CMat::zeros(d, d);
        for r in 0..d {
            for col in 0..d {
                m[(r, col)] = c((r * d + col) as f64, (r + 2 * col) as f64);
            }
        }
        let op = LabeledOperator::new(l, m).unwrap();
        let p = op.permute_factors(&[2, 0, 1]).unwrap();
        assert_eq!(p.layout().names(), vec!["C", "A", "B"]);
        let back = p.reorder(&["A", "B", "C"]).unwrap();
        assert!(max_abs_diff(back.matrix(), op.matrix()) < 1e-14);
    }

    #[test]
    fn link_product_with_identity_choi_teleports() {
        // Choi of the identity channel on (B -> C), unnormalized.
        let mut j = CMat::zeros(4, 4);
        for i in 0..2 {
            for k in 0..2 {
                j[(i * 2 + i, k * 2 + k)] = C_ONE;
            }
        }
        let choi =
            LabeledOperator::new(SpaceLayout::of(&[("B", 2), ("C", 2)]), j).unwrap();
        let rho = LabeledOperator::new(
            SpaceLayout::of(&[("B", 2)]),
            CMat::from_row_slice(2, 2, &[c(0.6, 0.0), c(0.2, 0.1), c(0.2, -0.1), c(0.4, 0.0)]),
        )
        .unwrap();
        let out = rho.link_product(&choi).unwrap();
        assert_eq!(out.layout().names(), vec!["C"]);
        assert!(max_abs_diff(out.matrix(), rho.matrix()) < 1e-14);
    }

    #[test]
    fn link_product_full_overlap_is_transposed_trace() {
        let l = SpaceLayout::of(&[("A", 2)]);
        let m = LabeledOperator::new(
            l.clone(),
            CMat::from_row_slice(2, 2, &[c(1.0, 0.0), c(2.0, 1.0), c(0.5, 0.0), c(3.0, 0.0)]),
        )
        .unwrap();
        let n = LabeledOperator::new(
            l,
            CMat::from_row_slice(2, 2, &[c(2.0, 0.0), c(0.0, 1.0), c(1.0, 0.0), c(1.0, 0.0)]),
        )
        .unwrap();
        let s = m.link_product(&n).unwrap();
        assert!(s.layout().is_empty());
        // Tr[M^T N]
        let expect = (m.matrix().transpose() * n.matrix()).trace();
        assert!((s.matrix()[(0, 0)] - expect).norm() < 1e-14);
    }

    #[test]
    fn link_product_commutes_up_to_reordering() {
        let m = LabeledOperator::new(
            SpaceLayout::of(&[("A", 2), ("B", 2)]),
            CMat::from_fn(4, 4, |r, c_| c(0.3 * r as f64 - c_ as f64, 0.1 * (r * c_) as f64)),
        )
        .unwrap();
        let n = LabeledOperator::new(
            SpaceLayout::of(&[("B", 2), ("C", 3)]),
            CMat::from_fn(6, 6, |r, c_| c(1.0 / (1.0 + (r + c_) as f64), 0.2 * r as f64)),
        )
        .unwrap();
        let mn = m.link_product(&n).unwrap();
        let nm = n.link_product(&m).unwrap().reorder(&["A", "C"]).unwrap();
        assert_eq!(mn.layout().names(), vec!["A", "C"]);
        assert!(max_abs_diff(mn.matrix(), nm.matrix()) < 1e-12);
    }

    #[test]
    fn link_product_shared_dim_mismatch_errors() {
        let m = LabeledOperator::identity(SpaceLayout::of(&[("B", 2)]));
        let n = LabeledOperator::identity(SpaceLayout::of(&[("B", 3)]));
        assert!(matches!(
            m.link_product(&n),
            Err(OperatorError::SharedDimMismatch { .. })
        ));
    }

    #[test]
    fn psd_check_distinguishes_three_outcomes() {
        let tol = Tolerances::default();
        let psd = LabeledOperator::new(
            SpaceLayout::of(&[("A", 2)]),
            CMat::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.5, 0.0), c(0.5, 0.0), c(1.0, 0.0)]),
        )
        .unwrap();
        assert!(psd.is_psd(&tol).is_psd());

        let indef = LabeledOperator::new(SpaceLayout::of(&[("A", 2)]), pauli_z()).unwrap();
        match indef.is_psd(&tol) {
            PsdCheck::NotPsd { min_eigenvalue } => assert!((min_eigenvalue + 1.0).abs() < 1e-10),
            other => panic!("expected NotPsd, got {other:?}"),
        }

        let nonherm = LabeledOperator::new(
            SpaceLayout::of(&[("A", 2)]),
            CMat::from_row_slice(2, 2, &[C_ONE, C_ONE, C_ZERO, C_ONE]),
        )
        .unwrap();
        assert!(matches!(
            nonherm.is_psd(&tol),
            PsdCheck::NotHermitian { .. }
        ));
    }

    #[test]
    fn min_eigenvalue_matches_hand_computed_spectrum() {
        // diag(3, -2) has lambda_min = -2; embedding must not change it.
        let m = CMat::from_row_slice(2, 2, &[c(3.0, 0.0), C_ZERO, C_ZERO, c(-2.0, 0.0)]);
        assert!((min_hermitian_eigenvalue(&m) + 2.0).abs() < 1e-12);
        // Hermitian with complex off-diagonal: eigs of [[0, -i],[i, 0]] are -1, 1.
        let y = CMat::from_row_slice(2, 2, &[C_ZERO, c(0.0, -1.0), c(0.0, 1.0), C_ZERO]);
        assert!((min_hermitian_eigenvalue(&y) + 1.0).abs() < 1e-12);
    }

    #[test]
    fn json_round_trip_preserves_operator() {
        let op = LabeledOperator::new(
            SpaceLayout::of(&[("A1", 2), ("X", 3)]),
            CMat::from_fn(6, 6, |r, c_| c(r as f64 * 0.25, c_ as f64 - 2.0)),
        )
        .unwrap();
        let text = serde_json::to_string(&op).unwrap();
        let back: LabeledOperator = serde_json::from_str(&text).unwrap();
        assert_eq!(back.layout(), op.layout());
        assert!(max_abs_diff(back.matrix(), op.matrix()) < 1e-15);
    }
}
