//! Commuting contraction tuples, subset defect operators, and the positivity
//! classes that control when an isometric dilation exists.

use crate::config::Tolerances;
use crate::error::{Error, Result};
use crate::linalg::{herm_eigen, spectral_norm, spectral_radius, CMatrix};

/// Subset of coordinate indices {1, ..., n}, stored as a bitmask
/// (bit i-1 set means index i is in the subset).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SubsetMask {
    pub bits: u32,
    pub n: u32,
}

impl SubsetMask {
    pub fn new(bits: u32, n: u32) -> Result<Self> {
        if n > 16 {
            return Err(Error::precondition("subset universe capped at 16 indices"));
        }
        if bits >= (1u32 << n) {
            return Err(Error::precondition("subset bits outside the universe"));
        }
        Ok(SubsetMask { bits, n })
    }

    pub fn empty(n: u32) -> Self {
        SubsetMask { bits: 0, n }
    }

    pub fn full(n: u32) -> Self {
        SubsetMask { bits: (1u32 << n) - 1, n }
    }

    pub fn from_indices(idx: &[u32], n: u32) -> Result<Self> {
        let mut bits = 0u32;
        for &i in idx {
            if i == 0 || i > n {
                return Err(Error::precondition("subset index out of range (1-based)"));
            }
            bits |= 1 << (i - 1);
        }
        SubsetMask::new(bits, n)
    }

    pub fn contains(&self, i: u32) -> bool {
        i >= 1 && i <= self.n && (self.bits >> (i - 1)) & 1 == 1
    }

    pub fn len(&self) -> u32 {
        self.bits.count_ones()
    }

    pub fn is_empty(&self) -> bool {
        self.bits == 0
    }

    /// 1-based member indices, ascending.
    pub fn indices(&self) -> Vec<u32> {
        (1..=self.n).filter(|&i| self.contains(i)).collect()
    }

    /// Complement within the universe.
    pub fn complement(&self) -> SubsetMask {
        SubsetMask { bits: !self.bits & ((1u32 << self.n) - 1), n: self.n }
    }

    /// All subsets of this subset (including empty and itself).
    pub fn subsets(&self) -> Vec<SubsetMask> {
        let mut out = Vec::with_capacity(1 << self.len());
        let mut sub = self.bits;
        loop {
            out.push(SubsetMask { bits: sub, n: self.n });
            if sub == 0 {
                break;
            }
            sub = (sub - 1) & self.bits;
        }
        out.sort();
        out
    }

    /// All subsets of the full universe of size n, ascending by bits.
    pub fn all(n: u32) -> Vec<SubsetMask> {
        (0..(1u32 << n)).map(|bits| SubsetMask { bits, n }).collect()
    }
}

/// Validation diagnostics for a tuple of operators.
#[derive(Debug, Clone)]
pub struct ValidationReport {
    /// Largest `||T_i T_j - T_j T_i||` over pairs.
    pub max_commutator: f64,
    /// Largest `||T_i|| - 1` over coordinates (negative if all contractive).
    pub max_norm_excess: f64,
}

/// An n-tuple of commuting contractions on a common d-dimensional space.
#[derive(Debug, Clone)]
pub struct OperatorTuple {
    pub ops: Vec<CMatrix>,
    pub dim: usize,
}

impl OperatorTuple {
    /// Validate commutation and contractivity against `tol.tuple` and build
    /// the tuple. The report is returned alongside so callers can log it.
    pub fn validated(ops: Vec<CMatrix>, tol: &Tolerances) -> Result<(Self, ValidationReport)> {
        if ops.is_empty() {
            return Err(Error::InvalidTuple("empty tuple".into()));
        }
        let dim = ops[0].rows;
        for (i, t) in ops.iter().enumerate() {
            if !t.is_square() || t.rows != dim {
                return Err(Error::InvalidTuple(format!(
                    "operator {} is {}x{}, expected {}x{}",
                    i + 1,
                    t.rows,
                    t.cols,
                    dim,
                    dim
                )));
            }
            if !t.data.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
                return Err(Error::InvalidTuple(format!("operator {} has non-finite entries", i + 1)));
            }
        }
        let mut max_commutator = 0.0f64;
        for i in 0..ops.len() {
            for j in i + 1..ops.len() {
                let c = ops[i].mul(&ops[j]).sub(&ops[j].mul(&ops[i])).frobenius();
                max_commutator = max_commutator.max(c);
            }
        }
        let mut max_norm_excess = f64::NEG_INFINITY;
        for t in &ops {
            max_norm_excess = max_norm_excess.max(spectral_norm(t) - 1.0);
        }
        let report = ValidationReport { max_commutator, max_norm_excess };
        if max_commutator > tol.tuple {
            return Err(Error::InvalidTuple(format!(
                "commutator residual {max_commutator:.3e} exceeds {:.3e}",
                tol.tuple
            )));
        }
        if max_norm_excess > tol.tuple {
            return Err(Error::InvalidTuple(format!(
                "operator norm exceeds 1 by {max_norm_excess:.3e} (tol {:.3e})",
                tol.tuple
            )));
        }
        Ok((OperatorTuple { ops, dim }, report))
    }

    /// Construct without revalidating (for tuples produced by the pipeline
    /// itself, which carry their own residual bookkeeping).
    pub fn unchecked(ops: Vec<CMatrix>) -> Self {
        let dim = ops[0].rows;
        OperatorTuple { ops, dim }
    }

    pub fn n(&self) -> u32 {
        self.ops.len() as u32
    }

    /// 1-based coordinate access.
    pub fn op(&self, i: u32) -> &CMatrix {
        &self.ops[(i - 1) as usize]
    }

    /// Ordered product over the subset, ascending index; identity for the
    /// empty subset.
    pub fn subset_product(&self, g: SubsetMask) -> CMatrix {
        assert_eq!(g.n, self.n(), "subset universe must match tuple length");
        let mut p = CMatrix::identity(self.dim);
        for i in g.indices() {
            p = p.mul(self.op(i));
        }
        p
    }

    /// Sub-tuple selected by the subset, ascending index order.
    pub fn select(&self, g: SubsetMask) -> OperatorTuple {
        assert_eq!(g.n, self.n());
        let ops: Vec<CMatrix> = g.indices().iter().map(|&i| self.op(i).clone()).collect();
        OperatorTuple { ops, dim: self.dim }
    }

    /// Drop coordinate i (1-based): the (n-1)-tuple with the remaining
    /// operators in order. For i = n this keeps (T_1, ..., T_{n-1}); for
    /// i = 1 it keeps (T_2, ..., T_n).
    pub fn hat(&self, i: u32) -> OperatorTuple {
        assert!(i >= 1 && i <= self.n());
        let ops: Vec<CMatrix> = self
            .ops
            .iter()
            .enumerate()
            .filter(|(k, _)| *k != (i - 1) as usize)
            .map(|(_, t)| t.clone())
            .collect();
        OperatorTuple { ops, dim: self.dim }
    }

    /// The slot-aligned companion (T_n, T_2, ..., T_{n-1}).
    ///
    /// The glued tuple carries T_1 T_n in its first slot; removing the T_1
    /// factor leaves T_n there, while removing the T_n factor leaves T_1
    /// (i.e. `hat(n)`). Keeping all three companions indexed by the same
    /// slots is what makes one subset mask select matching factors across
    /// them in the glued-defect identity.
    pub fn hat_inner_aligned(&self) -> OperatorTuple {
        let n = self.n();
        assert!(n >= 2);
        let mut ops = Vec::with_capacity((n - 1) as usize);
        ops.push(self.op(n).clone());
        for i in 2..n {
            ops.push(self.op(i).clone());
        }
        OperatorTuple { ops, dim: self.dim }
    }

    /// The glued (n-1)-tuple (T_1 T_n, T_2, ..., T_{n-1}): the product of the
    /// outer coordinates in the first slot, inner coordinates unchanged.
    pub fn hat_glued(&self) -> OperatorTuple {
        let n = self.n();
        assert!(n >= 2);
        let mut ops = Vec::with_capacity((n - 1) as usize);
        ops.push(self.op(1).mul(self.op(n)));
        for i in 2..n {
            ops.push(self.op(i).clone());
        }
        OperatorTuple { ops, dim: self.dim }
    }

    /// Largest spectral-radius estimate over coordinates.
    pub fn max_radius(&self) -> f64 {
        self.ops
            .iter()
            .map(|t| spectral_radius(t, 1e-10).unwrap_or(1.0))
            .fold(0.0, f64::max)
    }

    /// Largest operator norm over coordinates.
    pub fn max_norm(&self) -> f64 {
        self.ops.iter().map(spectral_norm).fold(0.0, f64::max)
    }
}

/// Defect operator data for a subset G:
/// `Delta_G = sum over F subset of G of (-1)^|F| T_F T_F*`, its PSD square
/// root and an orthonormal basis of its range (when PSD).
#[derive(Debug, Clone)]
pub struct DefectData {
    pub delta: CMatrix,
    /// Smallest eigenvalue of the (symmetrized) defect.
    pub min_eig: f64,
    /// PSD square root, present when the defect is PSD up to clamping.
    pub sqrt: Option<CMatrix>,
    /// Orthonormal basis of the range of the square root.
    pub basis: Option<CMatrix>,
    pub rank: usize,
    /// Number of eigenvalues clamped to zero when taking the root.
    pub clamped: usize,
}

/// Defect operator via the one-index-at-a-time recursion
/// `Delta_{G + {j}} = Delta_G - T_j Delta_G T_j*`, which needs |G| matrix
/// sandwiches instead of 2^|G| products. The brute-force alternating sum is
/// kept in the test module as an oracle.
pub fn defect(t: &OperatorTuple, g: SubsetMask, tol: &Tolerances) -> Result<DefectData> {
    assert_eq!(g.n, t.n(), "subset universe must match tuple length");
    let mut delta = CMatrix::identity(t.dim);
    for i in g.indices() {
        let ti = t.op(i);
        delta = delta.sub(&ti.mul(&delta).mul(&ti.adjoint()));
    }
    let delta = delta.symmetrize();
    let eg = herm_eigen(&delta, tol.eig)?;
    let min_eig = eg.eigenvalues.first().copied().unwrap_or(0.0);
    let lmax = eg.eigenvalues.last().copied().unwrap_or(0.0).max(0.0);
    if min_eig < -tol.clamp * lmax.max(1.0) {
        return Ok(DefectData { delta, min_eig, sqrt: None, basis: None, rank: 0, clamped: 0 });
    }
    // Contractive inputs put the natural scale of the defect at 1, so the
    // rank cut is absolute: eigenvalues at round-off scale are zero, even
    // when the whole defect is round-off (rank 0), where a relative cut
    // would keep pure noise.
    let cut = tol.rank * lmax.max(1.0);
    let d = t.dim;
    let mut clamped = 0usize;
    let mut sqrt = CMatrix::zeros(d, d);
    let mut kept: Vec<usize> = Vec::new();
    for (idx, &lam) in eg.eigenvalues.iter().enumerate() {
        if lam <= cut {
            if lam != 0.0 {
                clamped += 1;
            }
            continue;
        }
        kept.push(idx);
        let v = eg.eigenvectors.col(idx);
        let s = lam.sqrt();
        for i in 0..d {
            for j in 0..d {
                let val = sqrt.at(i, j) + v[i] * v[j].conj() * s;
                sqrt.set(i, j, val);
            }
        }
    }
    let basis = eg.eigenvectors.select_cols(&kept);
    let rank = kept.len();
    Ok(DefectData { delta, min_eig, sqrt: Some(sqrt), basis: Some(basis), rank, clamped })
}

/// Witness for a failed positivity check.
#[derive(Debug, Clone)]
pub struct NegativityWitness {
    pub subset: SubsetMask,
    pub min_eig: f64,
}

/// All subset defects PSD (within `-tol.clamp` of scale). On failure the
/// worst offending subset and eigenvalue are returned as a witness.
pub fn is_brehmer(t: &OperatorTuple, tol: &Tolerances) -> Result<std::result::Result<(), NegativityWitness>> {
    let mut worst: Option<NegativityWitness> = None;
    for g in SubsetMask::all(t.n()) {
        let d = defect(t, g, tol)?;
        let scale = d.delta.frobenius().max(1.0);
        if d.min_eig < -tol.clamp * scale {
            let better = worst.as_ref().map_or(true, |w| d.min_eig < w.min_eig);
            if better {
                worst = Some(NegativityWitness { subset: g, min_eig: d.min_eig });
            }
        }
    }
    Ok(match worst {
        None => Ok(()),
        Some(w) => Err(w),
    })
}

/// Full-set defect PSD only.
pub fn is_szego(t: &OperatorTuple, tol: &Tolerances) -> Result<std::result::Result<(), NegativityWitness>> {
    let g = SubsetMask::full(t.n());
    let d = defect(t, g, tol)?;
    let scale = d.delta.frobenius().max(1.0);
    if d.min_eig < -tol.clamp * scale {
        Ok(Err(NegativityWitness { subset: g, min_eig: d.min_eig }))
    } else {
        Ok(Ok(()))
    }
}

/// Pure tuple: every coordinate has spectral radius strictly below 1
/// (estimated radius < 1 - margin).
pub fn is_pure(t: &OperatorTuple, margin: f64) -> bool {
    t.ops
        .iter()
        .all(|op| spectral_radius(op, 1e-10).map(|r| r < 1.0 - margin).unwrap_or(false))
}

/// Report for a two-sided positivity class membership test.
#[derive(Debug, Clone)]
pub struct ClassReport {
    pub member: bool,
    /// Worst subset-defect eigenvalue over the two checked hat-tuples
    /// (0 when everything is safely PSD).
    pub worst_eig: f64,
    pub witness: Option<NegativityWitness>,
}

/// Membership in the two-sided positivity class indexed by (p, q):
/// drop coordinate p and drop coordinate q; both resulting (n-1)-tuples must
/// satisfy the all-subsets positivity condition. Only (p, q) = (1, n) is
/// exercised by the dilation pipeline; other index pairs are reduced to it by
/// permuting coordinates before calling.
pub fn class_membership(t: &OperatorTuple, p: u32, q: u32, tol: &Tolerances) -> Result<ClassReport> {
    let n = t.n();
    if !(p >= 1 && q <= n && p < q) {
        return Err(Error::precondition("class membership requires 1 <= p < q <= n"));
    }
    let mut worst = 0.0f64;
    let mut witness = None;
    for hat in [t.hat(p), t.hat(q)] {
        match is_brehmer(&hat, tol)? {
            Ok(()) => {}
            Err(w) => {
                if w.min_eig < worst {
                    worst = w.min_eig;
                    witness = Some(w);
                }
            }
        }
    }
    Ok(ClassReport { member: witness.is_none(), worst_eig: worst, witness })
}

/// Residual pair for the glued-defect identity at subset G (which must
/// contain index 1 inside the universe {1, ..., n-1}):
///
/// the defect of the glued tuple at G equals both
/// `Delta_{hat_n, G} + T_1 Delta_{hat_1, G} T_1*` and
/// `Delta_{hat_1, G} + T_n Delta_{hat_n, G} T_n*`.
pub fn check_defect_identity(
    t: &OperatorTuple,
    g: SubsetMask,
    tol: &Tolerances,
) -> Result<(f64, f64)> {
    let n = t.n();
    if n < 2 {
        return Err(Error::precondition("defect identity needs n >= 2"));
    }
    if g.n != n - 1 || !g.contains(1) {
        return Err(Error::precondition(
            "defect identity subset must contain 1 inside {1, ..., n-1}",
        ));
    }
    let hat_n = t.hat(n);
    let hat_1 = t.hat_inner_aligned();
    let glued = t.hat_glued();
    let d_n = defect(&hat_n, g, tol)?.delta;
    let d_1 = defect(&hat_1, g, tol)?.delta;
    let d_g = defect(&glued, g, tol)?.delta;
    let t1 = t.op(1);
    let tn = t.op(n);
    let lhs1 = d_n.add(&t1.mul(&d_1).mul(&t1.adjoint()));
    let lhs2 = d_1.add(&tn.mul(&d_n).mul(&tn.adjoint()));
    Ok((lhs1.sub(&d_g).frobenius(), lhs2.sub(&d_g).frobenius()))
}

/// Evaluate `sum_{F subset G} (-1)^|F| T_F X T_F*`; with X = I this is the
/// subset defect. Exposed for the hereditary-calculus tests.
pub fn alternating_sum(t: &OperatorTuple, g: SubsetMask, x: &CMatrix) -> CMatrix {
    let mut acc = CMatrix::zeros(t.dim, t.dim);
    for f in g.subsets() {
        let tf = t.subset_product(f);
        let term = tf.mul(x).mul(&tf.adjoint());
        if f.len() % 2 == 0 {
            acc = acc.add(&term);
        } else {
            acc = acc.sub(&term);
        }
    }
    acc
}
