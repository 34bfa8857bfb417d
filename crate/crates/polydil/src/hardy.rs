//! Truncated vector-valued Hardy space over the polydisc and the
//! block-structured operators that act on it.
//!
//! Coefficients are indexed by multi-degrees in {0, ..., N}^r; every operator
//! here is block-banded (multiplication symbols connect a degree only to its
//! neighbours), so operators are stored as sparse block maps rather than
//! dense matrices. Each operator carries an `exact_degree` g: its rows at
//! degrees with every component at most N - g agree with the untruncated
//! model, which is what the verifiers restrict residual claims to.

use crate::config::Tolerances;
use crate::error::{Error, Result};
use crate::linalg::CMatrix;
use crate::tuple::{defect, DefectData, OperatorTuple, SubsetMask};
use num_complex::Complex64 as C;
use std::collections::BTreeMap;


/// Truncated Hardy space: coefficient dimension `coeff_dim`, `vars`
/// variables, per-variable degree cap `degree`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HardySpace {
    pub vars: usize,
    pub degree: usize,
    pub coeff_dim: usize,
}

impl HardySpace {
    pub fn new(vars: usize, degree: usize, coeff_dim: usize) -> Self {
        HardySpace { vars, degree, coeff_dim }
    }

    pub fn n_blocks(&self) -> usize {
        (self.degree + 1).pow(self.vars as u32)
    }

    pub fn total_dim(&self) -> usize {
        self.coeff_dim * self.n_blocks()
    }

    /// Flat block index; variable 1 is the most significant digit.
    pub fn flat(&self, k: &[usize]) -> usize {
        debug_assert_eq!(k.len(), self.vars);
        let mut f = 0usize;
        for &ki in k {
            debug_assert!(ki <= self.degree);
            f = f * (self.degree + 1) + ki;
        }
        f
    }

    pub fn unflat(&self, mut f: usize) -> Vec<usize> {
        let base = self.degree + 1;
        let mut k = vec![0usize; self.vars];
        for i in (0..self.vars).rev() {
            k[i] = f % base;
            f /= base;
        }
        k
    }

    /// Same grading, different coefficient dimension.
    pub fn with_coeff(&self, coeff_dim: usize) -> HardySpace {
        HardySpace { coeff_dim, ..*self }
    }

    pub fn same_grading(&self, other: &HardySpace) -> bool {
        self.vars == other.vars && self.degree == other.degree
    }
}

/// Block-banded operator between two Hardy spaces with the same grading.
#[derive(Debug, Clone)]
pub struct HardyOp {
    pub row_space: HardySpace,
    pub col_space: HardySpace,
    /// Nonzero blocks keyed by (flat row block, flat col block).
    pub blocks: BTreeMap<(usize, usize), CMatrix>,
    /// Rows at degrees with every component <= degree - exact_degree agree
    /// with the untruncated model.
    pub exact_degree: usize,
}

impl HardyOp {
    pub fn zero(row_space: HardySpace, col_space: HardySpace) -> Self {
        assert!(row_space.same_grading(&col_space));
        HardyOp { row_space, col_space, blocks: BTreeMap::new(), exact_degree: 0 }
    }

    pub fn identity(space: HardySpace) -> Self {
        let mut op = HardyOp::zero(space.clone(), space.clone());
        let e = space.coeff_dim;
        for b in 0..space.n_blocks() {
            op.blocks.insert((b, b), CMatrix::identity(e));
        }
        op
    }

    fn insert(&mut self, r: usize, c: usize, m: CMatrix) {
        assert_eq!(m.rows, self.row_space.coeff_dim);
        assert_eq!(m.cols, self.col_space.coeff_dim);
        if m.max_abs() > 0.0 {
            self.blocks.insert((r, c), m);
        }
    }

    /// Coordinate shift: multiplication by z_i (1-based variable index).
    /// Forward rows are exact at every represented degree.
    pub fn shift(space: &HardySpace, var: usize) -> Self {
        assert!(var >= 1 && var <= space.vars, "shift variable out of range");
        let mut op = HardyOp::zero(space.clone(), space.clone());
        let e = space.coeff_dim;
        for b in 0..space.n_blocks() {
            let k = space.unflat(b);
            if k[var - 1] < space.degree {
                let mut up = k.clone();
                up[var - 1] += 1;
                op.blocks.insert((space.flat(&up), b), CMatrix::identity(e));
            }
        }
        op
    }

    /// Multiplication by the degree-one symbol `A0 + z_i A1` acting on
    /// coefficients.
    pub fn mult_linear(space: &HardySpace, var: usize, a0: &CMatrix, a1: &CMatrix) -> Self {
        assert!(var >= 1 && var <= space.vars);
        assert_eq!(a0.rows, space.coeff_dim);
        assert!(a0.is_square() && a1.is_square() && a1.rows == a0.rows);
        let mut op = HardyOp::zero(space.clone(), space.clone());
        for b in 0..space.n_blocks() {
            let k = space.unflat(b);
            op.insert(b, b, a0.clone());
            if k[var - 1] < space.degree {
                let mut up = k.clone();
                up[var - 1] += 1;
                op.insert(space.flat(&up), b, a1.clone());
            }
        }
        op
    }

    /// Coefficient-wise operator `I (x) A` (A may be rectangular: it maps the
    /// coefficient space of `col_space` into that of `row_space`).
    pub fn tensor(space: &HardySpace, a: &CMatrix) -> Self {
        let row_space = space.with_coeff(a.rows);
        let col_space = space.with_coeff(a.cols);
        let mut op = HardyOp::zero(row_space, col_space);
        for b in 0..space.n_blocks() {
            op.blocks.insert((b, b), a.clone());
        }
        op
    }

    pub fn adjoint(&self) -> HardyOp {
        let mut out = HardyOp::zero(self.col_space.clone(), self.row_space.clone());
        for (&(r, c), m) in &self.blocks {
            out.blocks.insert((c, r), m.adjoint());
        }
        // A backward move by one degree costs one trusted degree per factor.
        let mut shift_loss = 0usize;
        for &(r, c) in self.blocks.keys() {
            let kr = self.row_space.unflat(r);
            let kc = self.row_space.unflat(c);
            for v in 0..self.row_space.vars {
                if kr[v] > kc[v] {
                    shift_loss = shift_loss.max(kr[v] - kc[v]);
                }
            }
        }
        out.exact_degree = self.exact_degree + shift_loss;
        out
    }

    pub fn add(&self, other: &HardyOp) -> HardyOp {
        assert!(self.row_space == other.row_space && self.col_space == other.col_space);
        let mut out = self.clone();
        for (&key, m) in &other.blocks {
            match out.blocks.get_mut(&key) {
                Some(b) => *b = b.add(m),
                None => {
                    out.blocks.insert(key, m.clone());
                }
            }
        }
        out.exact_degree = self.exact_degree.max(other.exact_degree);
        out
    }

    pub fn sub(&self, other: &HardyOp) -> HardyOp {
        self.add(&other.scale(C::new(-1.0, 0.0)))
    }

    pub fn scale(&self, s: C) -> HardyOp {
        let mut out = self.clone();
        for m in out.blocks.values_mut() {
            *m = m.scale(s);
        }
        out
    }

    pub fn mul(&self, other: &HardyOp) -> HardyOp {
        assert_eq!(self.col_space, other.row_space, "HardyOp::mul: space mismatch");
        let mut by_row: BTreeMap<usize, Vec<(usize, &CMatrix)>> = BTreeMap::new();
        for (&(r, c), m) in &other.blocks {
            by_row.entry(r).or_default().push((c, m));
        }
        let mut out = HardyOp::zero(self.row_space.clone(), other.col_space.clone());
        for (&(r, mid), a) in &self.blocks {
            if let Some(cols) = by_row.get(&mid) {
                for &(c, b) in cols {
                    let prod = a.mul(b);
                    match out.blocks.get_mut(&(r, c)) {
                        Some(acc) => *acc = acc.add(&prod),
                        None => {
                            out.blocks.insert((r, c), prod);
                        }
                    }
                }
            }
        }
        out.blocks.retain(|_, m| m.max_abs() > 0.0);
        out.exact_degree = self.exact_degree + other.exact_degree;
        out
    }

    /// Apply to a dense matrix whose rows are grouped by block.
    pub fn apply(&self, x: &CMatrix) -> CMatrix {
        let e_in = self.col_space.coeff_dim;
        assert_eq!(x.rows, self.col_space.total_dim(), "HardyOp::apply: input height");
        let e_out = self.row_space.coeff_dim;
        let mut out = CMatrix::zeros(self.row_space.total_dim(), x.cols);
        for (&(r, c), m) in &self.blocks {
            let xin = x.slice(c * e_in, 0, e_in, x.cols);
            let prod = m.mul(&xin);
            for i in 0..e_out {
                for j in 0..x.cols {
                    let v = out.at(r * e_out + i, j) + prod.at(i, j);
                    out.set(r * e_out + i, j, v);
                }
            }
        }
        out
    }

    pub fn frobenius(&self) -> f64 {
        self.blocks
            .values()
            .map(|m| m.data.iter().map(|z| z.norm_sqr()).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }

    /// Keep only blocks whose row degree satisfies the predicate.
    pub fn restrict_rows(&self, keep: impl Fn(&[usize]) -> bool) -> HardyOp {
        let mut out = HardyOp::zero(self.row_space.clone(), self.col_space.clone());
        out.exact_degree = self.exact_degree;
        for (&(r, c), m) in &self.blocks {
            if keep(&self.row_space.unflat(r)) {
                out.blocks.insert((r, c), m.clone());
            }
        }
        out
    }

    /// Compress coefficients by an isometric column block `iso`
    /// (old coeff dim x new coeff dim): blocks become `iso* B iso`.
    pub fn compress(&self, iso: &CMatrix) -> HardyOp {
        assert_eq!(iso.rows, self.row_space.coeff_dim);
        assert_eq!(iso.rows, self.col_space.coeff_dim);
        let space = self.row_space.with_coeff(iso.cols);
        let mut out = HardyOp::zero(space.clone(), space);
        out.exact_degree = self.exact_degree;
        let iso_adj = iso.adjoint();
        for (&key, m) in &self.blocks {
            let b = iso_adj.mul(m).mul(iso);
            if b.max_abs() > 0.0 {
                out.blocks.insert(key, b);
            }
        }
        out
    }

    pub fn to_dense(&self) -> CMatrix {
        let mut out = CMatrix::zeros(self.row_space.total_dim(), self.col_space.total_dim());
        let (er, ec) = (self.row_space.coeff_dim, self.col_space.coeff_dim);
        for (&(r, c), m) in &self.blocks {
            out.paste(r * er, c * ec, m);
        }
        out
    }
}

/// Frobenius norm of `a - b` restricted to rows both operators trust
/// (every degree component at most `degree - max(exact_degree)`).
pub fn trusted_residual(a: &HardyOp, b: &HardyOp) -> f64 {
    assert!(a.row_space == b.row_space && a.col_space == b.col_space);
    let g = a.exact_degree.max(b.exact_degree);
    let cap = a.row_space.degree.saturating_sub(g);
    a.sub(b)
        .restrict_rows(|k| k.iter().all(|&ki| ki <= cap))
        .frobenius()
}

/// The canonical dilation map of a tuple into its truncated Hardy space,
/// together with the defect data that defines the coefficient space.
#[derive(Debug, Clone)]
pub struct CanonicalDilation {
    pub space: HardySpace,
    /// total_dim x d map: block k holds `B* D S^{*k}`.
    pub pi: CMatrix,
    pub defect: DefectData,
    /// Exact residual of the backward-shift intertwining on trusted rows,
    /// one value per variable. Zero up to round-off by construction.
    pub intertwine_residuals: Vec<f64>,
}

/// Build the canonical dilation map of `sub` (an r-tuple with PSD full-set
/// defect) at per-variable truncation `degree`.
///
/// Block k of the map is `B* D S^{*k} = B* D S_1^{*k_1} ... S_r^{*k_r}`,
/// where D is the full-set defect root and B an orthonormal basis of its
/// range. The backward-shift relation `Pi S_i* = M_{z_i}* Pi` is exact on
/// rows with k_i < degree (the top slice reads coefficients beyond the
/// truncation, so claims are restricted below it).
pub fn canonical_dilation(
    sub: &OperatorTuple,
    degree: usize,
    tol: &Tolerances,
) -> Result<CanonicalDilation> {
    let r = sub.n() as usize;
    let d = sub.dim;
    let full = SubsetMask::full(r as u32);
    let dd = defect(sub, full, tol)?;
    let (sqrt, basis) = match (&dd.sqrt, &dd.basis) {
        (Some(s), Some(b)) => (s, b),
        _ => {
            return Err(Error::ClassViolation(format!(
                "full-set defect is not PSD (min eigenvalue {:.3e})",
                dd.min_eig
            )))
        }
    };
    let e = basis.cols;
    let space = HardySpace::new(r, degree, e);
    let bd = basis.adjoint().mul(sqrt); // e x d
    let sadj: Vec<CMatrix> = sub.ops.iter().map(|t| t.adjoint()).collect();
    let n_blocks = space.n_blocks();
    // S^{*k} by single-step recursion over flat order (ascending flat order
    // guarantees the predecessor block is already computed).
    let mut powers: Vec<CMatrix> = Vec::with_capacity(n_blocks);
    for b in 0..n_blocks {
        let k = space.unflat(b);
        if k.iter().all(|&ki| ki == 0) {
            powers.push(CMatrix::identity(d));
            continue;
        }
        let i = k.iter().position(|&ki| ki > 0).unwrap();
        let mut prev = k.clone();
        prev[i] -= 1;
        let m = sadj[i].mul(&powers[space.flat(&prev)]);
        powers.push(m);
    }
    let mut pi = CMatrix::zeros(space.total_dim(), d);
    for b in 0..n_blocks {
        pi.paste(b * e, 0, &bd.mul(&powers[b]));
    }
    // Backward-shift intertwining on trusted rows (k_i < degree): exact.
    let mut intertwine_residuals = Vec::with_capacity(r);
    for i in 0..r {
        let lhs = {
            // Pi S_i*, then drop rows with k_i = degree.
            let full_rows = pi.rows;
            let mut m = CMatrix::zeros(full_rows, d);
            let shifted = {
                let mut out = CMatrix::zeros(full_rows, d);
                for b in 0..n_blocks {
                    let blk = pi.slice(b * e, 0, e, d).mul(&sadj[i]);
                    out.paste(b * e, 0, &blk);
                }
                out
            };
            m.paste(0, 0, &shifted);
            m
        };
        let rhs = {
            // shift_i* Pi: block k reads block k + e_i (zero at the top).
            let mut out = CMatrix::zeros(pi.rows, d);
            for b in 0..n_blocks {
                let k = space.unflat(b);
                if k[i] < degree {
                    let mut up = k.clone();
                    up[i] += 1;
                    let blk = pi.slice(space.flat(&up) * e, 0, e, d);
                    out.paste(b * e, 0, &blk);
                }
            }
            out
        };
        let mut acc = 0.0f64;
        for b in 0..n_blocks {
            let k = space.unflat(b);
            if k[i] < degree {
                let diff = lhs.slice(b * e, 0, e, d).sub(&rhs.slice(b * e, 0, e, d));
                acc += diff.frobenius().powi(2);
            }
        }
        intertwine_residuals.push(acc.sqrt());
    }
    Ok(CanonicalDilation { space, pi, defect: dd, intertwine_residuals })
}

/// Block-diagonal coefficient embedding `I (x) gamma`.
pub fn embed_coeff(space: &HardySpace, gamma: &CMatrix) -> HardyOp {
    HardyOp::tensor(space, gamma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::spectral_norm;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> C {
        C::new(re, im)
    }

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    fn test_matrix(rows: usize, cols: usize, seed: u64) -> CMatrix {
        let mut s = seed;
        let mut next = move || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64) / ((1u64 << 53) as f64) * 2.0 - 1.0
        };
        CMatrix::from_fn(rows, cols, |_, _| c(next(), next()))
    }

    #[test]
    fn flat_unflat_roundtrip() {
        let sp = HardySpace::new(3, 4, 2);
        for b in 0..sp.n_blocks() {
            assert_eq!(sp.flat(&sp.unflat(b)), b);
        }
        assert_eq!(sp.total_dim(), 2 * 125);
    }

    /// I minus the projector onto the top slice of variable `var`.
    fn below_top(sp: &HardySpace, var: usize) -> HardyOp {
        let mut op = HardyOp::zero(sp.clone(), sp.clone());
        for b in 0..sp.n_blocks() {
            if sp.unflat(b)[var - 1] < sp.degree {
                op.blocks.insert((b, b), CMatrix::identity(sp.coeff_dim));
            }
        }
        op
    }

    #[test]
    fn shift_adjoint_is_left_inverse_below_top() {
        let sp = HardySpace::new(2, 3, 2);
        for var in 1..=2 {
            let s = HardyOp::shift(&sp, var);
            let prod = s.adjoint().mul(&s);
            // The truncated forward shift annihilates the top slice, so
            // M* M = I - (top-slice projector), exactly.
            assert!(prod.sub(&below_top(&sp, var)).frobenius() <= 1e-15);
        }
        // Shifts in different variables commute exactly.
        let s1 = HardyOp::shift(&sp, 1);
        let s2 = HardyOp::shift(&sp, 2);
        assert!(s1.mul(&s2).sub(&s2.mul(&s1)).frobenius() <= 1e-15);
        // ... and doubly commute away from the edges.
        assert!(trusted_residual(&s1.mul(&s2.adjoint()), &s2.adjoint().mul(&s1)) <= 1e-15);
    }

    #[test]
    fn mult_linear_matches_shift_composition() {
        let sp = HardySpace::new(2, 3, 2);
        let a0 = test_matrix(2, 2, 3);
        let a1 = test_matrix(2, 2, 4);
        let m = HardyOp::mult_linear(&sp, 1, &a0, &a1);
        let alt = HardyOp::tensor(&sp, &a0).add(&HardyOp::shift(&sp, 1).mul(&HardyOp::tensor(&sp, &a1)));
        assert!(m.sub(&alt).frobenius() <= 1e-15);
    }

    #[test]
    fn apply_agrees_with_dense() {
        let sp = HardySpace::new(2, 2, 2);
        let a0 = test_matrix(2, 2, 7);
        let a1 = test_matrix(2, 2, 8);
        let m = HardyOp::mult_linear(&sp, 2, &a0, &a1);
        let x = test_matrix(sp.total_dim(), 3, 9);
        let via_blocks = m.apply(&x);
        let via_dense = m.to_dense().mul(&x);
        assert!(via_blocks.sub(&via_dense).frobenius() <= 1e-13);
    }

    #[test]
    fn canonical_dilation_scalar_geometric() {
        // One variable, T = 0.5 on C: the truncated Gram is the geometric
        // partial sum 1 - 0.25^(N+1).
        let n_deg = 12usize;
        let t = OperatorTuple::unchecked(vec![CMatrix::from_rows(&[vec![c(0.5, 0.0)]])]);
        let cd = canonical_dilation(&t, n_deg, &tol()).unwrap();
        let gram = cd.pi.adjoint().mul(&cd.pi);
        // Independent scalar partial sum.
        let mut expected = 0.0f64;
        for k in 0..=n_deg {
            expected += 0.25f64.powi(k as i32) * 0.75;
        }
        assert!((gram.at(0, 0).re - expected).abs() <= 1e-15);
        assert!((expected - (1.0 - 0.25f64.powi(n_deg as i32 + 1))).abs() <= 1e-15);
        for r in &cd.intertwine_residuals {
            assert!(*r <= 1e-14);
        }
    }

    #[test]
    fn canonical_dilation_gram_partial_sum() {
        // ||Pi* Pi - sum_{k <= N} S^k Delta S^{*k}|| is exactly zero in
        // truncation (both sides are the same finite sum).
        let mut ops = Vec::new();
        for seed in [11u64, 12] {
            let m = test_matrix(3, 3, seed);
            let nm = spectral_norm(&m);
            ops.push(m.scale(c(0.45 / nm, 0.0)));
        }
        // Make them commute: second = polynomial of first.
        let a = ops[0].clone();
        let b = a.mul(&a).scale(c(1.3, 0.2));
        let nb = spectral_norm(&b);
        let t = OperatorTuple::unchecked(vec![a, b.scale(c(0.5 / nb, 0.0))]);
        let n_deg = 6usize;
        let cd = canonical_dilation(&t, n_deg, &tol()).unwrap();
        let gram = cd.pi.adjoint().mul(&cd.pi);
        let delta = &cd.defect.delta;
        let sp = &cd.space;
        let mut acc = CMatrix::zeros(3, 3);
        for bidx in 0..sp.n_blocks() {
            let k = sp.unflat(bidx);
            let mut fwd = CMatrix::identity(3);
            for (i, &ki) in k.iter().enumerate() {
                for _ in 0..ki {
                    fwd = t.ops[i].mul(&fwd);
                }
            }
            acc = acc.add(&fwd.mul(delta).mul(&fwd.adjoint()));
        }
        assert!(gram.sub(&acc).frobenius() <= 1e-12);
        for r in &cd.intertwine_residuals {
            assert!(*r <= 1e-12);
        }
    }

    #[test]
    fn embed_coeff_isometry() {
        let sp = HardySpace::new(2, 2, 3);
        // Isometric 3 -> 2 embedding adjoint: use a 3x2 orthonormal block.
        let g = crate::linalg::range_basis(&test_matrix(3, 2, 21), 1e-10).unwrap();
        let emb = embed_coeff(&sp, &g);
        let prod = emb.adjoint().mul(&emb);
        let id = HardyOp::identity(sp.with_coeff(g.cols));
        assert!(prod.sub(&id).frobenius() <= 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn shift_gram_is_below_top_projector(deg in 1usize..5, var in 1usize..3) {
            let sp = HardySpace::new(2, deg, 1);
            let s = HardyOp::shift(&sp, var);
            let prod = s.adjoint().mul(&s);
            prop_assert!(prod.sub(&below_top(&sp, var)).frobenius() <= 1e-14);
        }
    }
}
