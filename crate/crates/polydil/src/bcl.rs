//! Transfer-function data for one subset block: the defect-space isometry
//! that glues the two companion defects, its unitary extension, and the
//! degree-one symbol pair whose multiplication operators factor the first
//! coordinate shift.

use crate::config::Tolerances;
use crate::error::{Error, Result};
use crate::hardy::{HardyOp, HardySpace};
use crate::linalg::{
    isometry_from_pairs, range_basis, unitary_complete, CMatrix,
};
use crate::tuple::{defect, DefectData, OperatorTuple, SubsetMask};
use num_complex::Complex64 as C;

/// The glueing isometry between defect coordinate spaces.
#[derive(Debug, Clone)]
pub struct GammaData {
    /// (rn + r1) x r1n isometry: sends glued-defect coordinates of h to the
    /// pair (outer-defect coords of h, inner-defect coords of T_1* h).
    pub gamma: CMatrix,
    pub glued: DefectData,
    /// Defect of the drop-outer companion (first summand, dim rn).
    pub outer: DefectData,
    /// Defect of the slot-aligned drop-first companion (second summand, dim r1).
    pub inner: DefectData,
    pub residual: f64,
    pub isometry_defect: f64,
}

/// Coordinate matrix `B* D` of a defect (range-basis coordinates of the
/// defect root applied to the ambient space).
fn defect_coords(d: &DefectData) -> Result<CMatrix> {
    match (&d.sqrt, &d.basis) {
        (Some(s), Some(b)) => Ok(b.adjoint().mul(s)),
        _ => Err(Error::ClassViolation(format!(
            "defect is not PSD (min eigenvalue {:.3e})",
            d.min_eig
        ))),
    }
}

/// Build the glueing isometry for subset `g` (must contain 1, inside the
/// universe {1, ..., n-1} of the companion tuples).
///
/// The defining pairing is Gram-consistent by the glued-defect identity, so
/// the map is transported by pivoted Gram-Schmidt rather than solved through
/// a pseudo-inverse.
pub fn build_gamma(t: &OperatorTuple, g: SubsetMask, tol: &Tolerances) -> Result<GammaData> {
    let n = t.n();
    if n < 2 || g.n != n - 1 || !g.contains(1) {
        return Err(Error::precondition("build_gamma needs 1 in G inside {1, ..., n-1}"));
    }
    let glued = defect(&t.hat_glued(), g, tol)?;
    let outer = defect(&t.hat(n), g, tol)?;
    let inner = defect(&t.hat_inner_aligned(), g, tol)?;
    let x = defect_coords(&glued)?; // r1n x d
    let cn = defect_coords(&outer)?; // rn x d
    let c1 = defect_coords(&inner)?.mul(&t.op(1).adjoint()); // r1 x d
    let y = CMatrix::vstack(&[&cn, &c1]);
    let (gamma, residual) = isometry_from_pairs(&x, &y, tol.rank)?;
    let r1n = x.rows;
    let isometry_defect = gamma
        .adjoint()
        .mul(&gamma)
        .sub(&CMatrix::identity(r1n))
        .frobenius();
    if residual > tol.solve * y.frobenius().max(1.0) {
        return Err(Error::SolveResidual { residual, tol: tol.solve });
    }
    Ok(GammaData { gamma, glued, outer, inner, residual, isometry_defect })
}

/// Douglas-type operator on a defect space: the unique `W` with
/// `W* (B* D) = B* D T_j*` in range-basis coordinates. When `T_j` is a
/// co-isometry for this defect (it leaves the defect invariant under
/// conjugation), `W` is unitary on the defect coordinates; the returned
/// diagnostics report how true that is.
#[derive(Debug, Clone)]
pub struct DouglasOp {
    pub w: CMatrix,
    pub residual: f64,
    pub unitary_defect: f64,
}

pub fn douglas_op(d: &DefectData, tj: &CMatrix, tol: &Tolerances) -> Result<DouglasOp> {
    let coords = defect_coords(d)?;
    let y = coords.mul(&tj.adjoint());
    let (w_adj, residual) = isometry_from_pairs(&coords, &y, tol.rank)?;
    let w = w_adj.adjoint();
    let r = coords.rows;
    let unitary_defect = w
        .mul(&w.adjoint())
        .sub(&CMatrix::identity(r))
        .frobenius()
        .max(w.adjoint().mul(&w).sub(&CMatrix::identity(r)).frobenius());
    Ok(DouglasOp { w, residual, unitary_defect })
}

/// The partial isometry swapping the roles of the outer coordinate on the
/// glued defect pair space.
#[derive(Debug, Clone)]
pub struct UPrimeData {
    /// kappa x kappa (kappa = rn + r1), zero off the source subspace.
    pub uprime: CMatrix,
    /// Orthonormal basis of the source subspace Q.
    pub q_basis: CMatrix,
    /// Orthonormal basis of the target subspace.
    pub qt_basis: CMatrix,
    pub residual: f64,
    pub isometry_defect: f64,
}

/// Build the swap isometry: on pairs `(outer coords of h, inner coords of
/// T_1* h)` it produces `(outer coords of T_n* h, inner coords of h)`. Both
/// sides have equal Grams by the glued-defect identity.
pub fn build_uprime(
    t: &OperatorTuple,
    gd: &GammaData,
    tol: &Tolerances,
) -> Result<UPrimeData> {
    let n = t.n();
    let cn = defect_coords(&gd.outer)?;
    let c1 = defect_coords(&gd.inner)?;
    let xq = CMatrix::vstack(&[&cn, &c1.mul(&t.op(1).adjoint())]);
    let xqt = CMatrix::vstack(&[&cn.mul(&t.op(n).adjoint()), &c1]);
    let (uprime, residual) = isometry_from_pairs(&xq, &xqt, tol.rank)?;
    let q_basis = range_basis(&xq, tol.rank)?;
    let qt_basis = range_basis(&xqt, tol.rank)?;
    if q_basis.cols != qt_basis.cols {
        return Err(Error::LiftFailed {
            residual: (q_basis.cols as f64 - qt_basis.cols as f64).abs(),
            context: "source and target subspaces have different dimensions".into(),
        });
    }
    // Isometry defect on the source subspace.
    let img = uprime.mul(&q_basis);
    let isometry_defect = img
        .adjoint()
        .mul(&img)
        .sub(&CMatrix::identity(q_basis.cols))
        .frobenius();
    if residual > tol.solve * xqt.frobenius().max(1.0) {
        return Err(Error::SolveResidual { residual, tol: tol.solve });
    }
    Ok(UPrimeData { uprime, q_basis, qt_basis, residual, isometry_defect })
}

/// Lift of the swap isometry to the joint reducing closure of its source
/// under a commuting family of unitaries.
#[derive(Debug, Clone)]
pub struct LiftData {
    /// kappa x kappa, zero off the closure subspace.
    pub u_lift: CMatrix,
    pub h_basis: CMatrix,
    pub ht_basis: CMatrix,
    pub welldef_residual: f64,
    pub intertwine_residual: f64,
}

/// Extend the swap isometry by `U'' (w(W) q) = w(W) U' q` over words `w` in
/// the generators and their adjoints, then solve for the single matrix
/// consistent with every pair. Well-definedness is exactly the reported
/// residual; it blows up only if the generators fail to commute with the
/// swap relation.
pub fn lift_uprime(up: &UPrimeData, w_ops: &[CMatrix], tol: &Tolerances) -> Result<LiftData> {
    let kappa = up.uprime.rows;
    let q = &up.q_basis;
    let img0 = up.uprime.mul(q);
    if w_ops.is_empty() {
        let welldef_residual = up.residual;
        return Ok(LiftData {
            u_lift: up.uprime.clone(),
            h_basis: q.clone(),
            ht_basis: up.qt_basis.clone(),
            welldef_residual,
            intertwine_residual: 0.0,
        });
    }
    let mut gens: Vec<CMatrix> = Vec::new();
    for w in w_ops {
        gens.push(w.clone());
        gens.push(w.adjoint());
    }
    let mut xs: Vec<CMatrix> = vec![q.clone()];
    let mut ys: Vec<CMatrix> = vec![img0];
    let mut rank = range_basis(q, tol.rank)?.cols;
    let cap = 4 * kappa + 4;
    for _round in 0..cap {
        let mut new_x = Vec::new();
        let mut new_y = Vec::new();
        let last_x = xs.last().unwrap();
        let last_y = ys.last().unwrap();
        for gop in &gens {
            new_x.push(gop.mul(last_x));
            new_y.push(gop.mul(last_y));
        }
        xs.push(CMatrix::hstack(&new_x.iter().collect::<Vec<_>>()));
        ys.push(CMatrix::hstack(&new_y.iter().collect::<Vec<_>>()));
        let all_x = CMatrix::hstack(&xs.iter().collect::<Vec<_>>());
        let new_rank = range_basis(&all_x, tol.rank)?.cols;
        if new_rank == rank {
            break;
        }
        rank = new_rank;
    }
    let all_x = CMatrix::hstack(&xs.iter().collect::<Vec<_>>());
    let all_y = CMatrix::hstack(&ys.iter().collect::<Vec<_>>());
    let (u_lift, welldef_residual) = isometry_from_pairs(&all_x, &all_y, tol.rank)?;
    if welldef_residual > tol.solve * all_y.frobenius().max(1.0) {
        return Err(Error::LiftFailed {
            residual: welldef_residual,
            context: "lifted swap map is not well defined on the closure".into(),
        });
    }
    let h_basis = range_basis(&all_x, tol.rank)?;
    let ht_basis = range_basis(&all_y, tol.rank)?;
    if h_basis.cols != ht_basis.cols {
        return Err(Error::LiftFailed {
            residual: (h_basis.cols as f64 - ht_basis.cols as f64).abs(),
            context: "closure and image closure dimensions differ".into(),
        });
    }
    let mut intertwine_residual = 0.0f64;
    for w in w_ops {
        let lhs = u_lift.mul(w).mul(&h_basis);
        let rhs = w.mul(&u_lift).mul(&h_basis);
        intertwine_residual = intertwine_residual.max(lhs.sub(&rhs).frobenius());
        let lhs = u_lift.mul(&w.adjoint()).mul(&h_basis);
        let rhs = w.adjoint().mul(&u_lift).mul(&h_basis);
        intertwine_residual = intertwine_residual.max(lhs.sub(&rhs).frobenius());
    }
    Ok(LiftData { u_lift, h_basis, ht_basis, welldef_residual, intertwine_residual })
}

/// Complete the lifted partial isometry to a unitary on the whole pair space
/// by matching the orthogonal complements of its source and target closures,
/// then polish to machine unitarity.
pub fn complete_unitary_pair(lift: &LiftData) -> Result<CMatrix> {
    let kappa = lift.u_lift.rows;
    let h = &lift.h_basis;
    let ht = &lift.ht_basis;
    let comp = |basis: &CMatrix| -> Result<CMatrix> {
        if basis.cols == kappa {
            return Ok(CMatrix::zeros(kappa, 0));
        }
        let full = unitary_complete(basis)?;
        Ok(full.slice(0, basis.cols, kappa, kappa - basis.cols))
    };
    let ch = comp(h)?;
    let cht = comp(ht)?;
    let mut u = lift.u_lift.clone();
    if ch.cols > 0 {
        u = u.add(&cht.mul(&ch.adjoint()));
    }
    // Newton polish toward the unitary group; quadratic, 2-3 steps suffice.
    for _ in 0..4 {
        let defect = u.adjoint().mul(&u).sub(&CMatrix::identity(kappa)).frobenius();
        if defect <= 1e-13 {
            break;
        }
        let uuu = u.mul(&u.adjoint()).mul(&u);
        u = u.scale(C::new(1.5, 0.0)).sub(&uuu.scale(C::new(0.5, 0.0)));
    }
    let defect = u.adjoint().mul(&u).sub(&CMatrix::identity(kappa)).frobenius();
    if defect > 1e-12 {
        return Err(Error::NotIsometric { defect, tol: 1e-12 });
    }
    let drift = u.mul(h).sub(&lift.u_lift.mul(h)).frobenius();
    if drift > 1e-7 {
        return Err(Error::LiftFailed {
            residual: drift,
            context: "unitary completion drifted off the lift on its domain".into(),
        });
    }
    Ok(u)
}

/// Degree-one symbol pairs of the transfer functions attached to a unitary
/// `u` on the pair space and the projection onto its second (inner) summand.
#[derive(Debug, Clone)]
pub struct BCLData {
    pub phi0: CMatrix,
    pub phi1: CMatrix,
    pub psi0: CMatrix,
    pub psi1: CMatrix,
    /// Dimension of the first (outer) summand.
    pub outer_dim: usize,
}

/// `Phi(z) = (P + z P_perp) U` and `Psi(z) = U* (P_perp + z P)`, where
/// `P_perp` projects onto the first `outer_dim` coordinates and `P` onto the
/// rest. Their product is `z * I` by construction.
pub fn bcl_pair(u: &CMatrix, outer_dim: usize) -> BCLData {
    let kappa = u.rows;
    let proj = |lo: usize, hi: usize| -> CMatrix {
        CMatrix::from_fn(kappa, kappa, |i, j| {
            if i == j && i >= lo && i < hi {
                C::new(1.0, 0.0)
            } else {
                C::new(0.0, 0.0)
            }
        })
    };
    let p_perp = proj(0, outer_dim);
    let p = proj(outer_dim, kappa);
    BCLData {
        phi0: p.mul(u),
        phi1: p_perp.mul(u),
        psi0: u.adjoint().mul(&p_perp),
        psi1: u.adjoint().mul(&p),
        outer_dim,
    }
}

/// Residuals of the three coefficient identities equivalent to
/// `Phi(z) Psi(z) = z I`.
pub fn bcl_product_residuals(b: &BCLData) -> (f64, f64, f64) {
    let kappa = b.phi0.rows;
    let zero0 = b.phi0.mul(&b.psi0).frobenius();
    let zero1 = b.phi1.mul(&b.psi1).frobenius();
    let cross = b
        .phi0
        .mul(&b.psi1)
        .add(&b.phi1.mul(&b.psi0))
        .sub(&CMatrix::identity(kappa))
        .frobenius();
    (zero0, zero1, cross)
}

/// Evaluate `Phi(z) Psi(z) - z I` at a point of the disc.
pub fn bcl_product_at(b: &BCLData, z: C) -> f64 {
    let kappa = b.phi0.rows;
    let phi = b.phi0.add(&b.phi1.scale(z));
    let psi = b.psi0.add(&b.psi1.scale(z));
    phi.mul(&psi).sub(&CMatrix::identity(kappa).scale(z)).frobenius()
}

/// Residual of the factorization intertwining on trusted rows:
/// the embedded dilation map intertwines `T_1*` with the adjoint of the
/// transfer multiplication operator.
///
/// `pi` is the canonical dilation map of the glued sub-tuple; `gamma` embeds
/// its coefficients into the pair space. Rows at top degree of variable 1
/// read beyond the truncation and are excluded.
pub fn factorization_check(
    space: &HardySpace,
    pi: &CMatrix,
    gamma: &CMatrix,
    bcl: &BCLData,
    t1: &CMatrix,
) -> f64 {
    let kappa = gamma.rows;
    let pair_space = space.with_coeff(kappa);
    let embedded = HardyOp::tensor(space, gamma).apply(pi);
    let m_phi = HardyOp::mult_linear(&pair_space, 1, &bcl.phi0, &bcl.phi1);
    let lhs = {
        // embedded . T_1*
        embedded.mul(&t1.adjoint())
    };
    let rhs = m_phi.adjoint().apply(&embedded);
    let mut acc = 0.0f64;
    for b in 0..pair_space.n_blocks() {
        let k = pair_space.unflat(b);
        if k[0] < pair_space.degree {
            let diff = lhs
                .slice(b * kappa, 0, kappa, lhs.cols)
                .sub(&rhs.slice(b * kappa, 0, kappa, rhs.cols));
            acc += diff.frobenius().powi(2);
        }
    }
    acc.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hardy::canonical_dilation;
    use crate::linalg::spectral_norm;

    fn c(re: f64, im: f64) -> C {
        C::new(re, im)
    }

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    fn poly_tuple(n: usize, d: usize, seed: u64, radius: f64) -> OperatorTuple {
        let mut s = seed;
        let mut next = move || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64) / ((1u64 << 53) as f64) * 2.0 - 1.0
        };
        let a = CMatrix::from_fn(d, d, |_, _| c(next(), next()));
        let mut ops = Vec::new();
        for _ in 0..n {
            let m = CMatrix::identity(d)
                .scale(c(next(), next()))
                .add(&a.scale(c(next(), next())))
                .add(&a.mul(&a).scale(c(next(), next())));
            let nm = spectral_norm(&m).max(1e-12);
            ops.push(m.scale(c(radius / nm, 0.0)));
        }
        OperatorTuple::unchecked(ops)
    }

    #[test]
    fn gamma_is_isometric_and_consistent() {
        for seed in [3u64, 19, 41] {
            let t = poly_tuple(3, 3, seed, 0.5);
            let g = SubsetMask::full(2);
            let gd = build_gamma(&t, g, &tol()).unwrap();
            assert!(gd.isometry_defect <= 1e-8, "defect {:.2e}", gd.isometry_defect);
            assert!(gd.residual <= 1e-8);
        }
    }

    #[test]
    fn uprime_is_isometric_on_source() {
        let t = poly_tuple(3, 3, 13, 0.5);
        let g = SubsetMask::full(2);
        let gd = build_gamma(&t, g, &tol()).unwrap();
        let up = build_uprime(&t, &gd, &tol()).unwrap();
        assert!(up.isometry_defect <= 1e-8);
        assert!(up.residual <= 1e-8);
        // Zero on the complement of the source subspace.
        let kappa = up.uprime.rows;
        let pq = up.q_basis.mul(&up.q_basis.adjoint());
        let offq = up.uprime.mul(&CMatrix::identity(kappa).sub(&pq)).frobenius();
        assert!(offq <= 1e-8);
    }

    #[test]
    fn lift_and_completion_produce_unitary() {
        let t = poly_tuple(3, 3, 29, 0.5);
        let g = SubsetMask::full(2);
        let gd = build_gamma(&t, g, &tol()).unwrap();
        let up = build_uprime(&t, &gd, &tol()).unwrap();
        let lift = lift_uprime(&up, &[], &tol()).unwrap();
        let u = complete_unitary_pair(&lift).unwrap();
        let kappa = u.rows;
        assert!(u.adjoint().mul(&u).sub(&CMatrix::identity(kappa)).frobenius() <= 1e-12);
        // U agrees with the swap on its source.
        assert!(u.mul(&up.q_basis).sub(&up.uprime.mul(&up.q_basis)).frobenius() <= 1e-7);
    }

    #[test]
    fn bcl_coefficient_identities() {
        let t = poly_tuple(3, 3, 31, 0.5);
        let g = SubsetMask::full(2);
        let gd = build_gamma(&t, g, &tol()).unwrap();
        let up = build_uprime(&t, &gd, &tol()).unwrap();
        let lift = lift_uprime(&up, &[], &tol()).unwrap();
        let u = complete_unitary_pair(&lift).unwrap();
        let b = bcl_pair(&u, gd.outer.rank);
        let (z0, z1, cross) = bcl_product_residuals(&b);
        assert!(z0 <= 1e-12 && z1 <= 1e-12 && cross <= 1e-12, "{z0:.2e} {z1:.2e} {cross:.2e}");
        // Point evaluation on the disc.
        for (re, im) in [(0.3, -0.4), (0.9, 0.1), (-0.7, 0.2)] {
            assert!(bcl_product_at(&b, c(re, im)) <= 1e-10);
        }
    }

    #[test]
    fn block_unitary_form() {
        // [[U*P, U*i1], [i1*, 0]] on (pair space) + (outer summand) is
        // unitary when U is.
        let t = poly_tuple(3, 3, 37, 0.5);
        let g = SubsetMask::full(2);
        let gd = build_gamma(&t, g, &tol()).unwrap();
        let up = build_uprime(&t, &gd, &tol()).unwrap();
        let lift = lift_uprime(&up, &[], &tol()).unwrap();
        let u = complete_unitary_pair(&lift).unwrap();
        let kappa = u.rows;
        let rn = gd.outer.rank;
        let iota = CMatrix::from_fn(kappa, rn, |i, j| {
            if i == j { c(1.0, 0.0) } else { c(0.0, 0.0) }
        });
        let p = CMatrix::from_fn(kappa, kappa, |i, j| {
            if i == j && i >= rn { c(1.0, 0.0) } else { c(0.0, 0.0) }
        });
        let top = CMatrix::hstack(&[&u.adjoint().mul(&p), &u.adjoint().mul(&iota)]);
        let bottom = CMatrix::hstack(&[&iota.adjoint(), &CMatrix::zeros(rn, rn)]);
        let big = CMatrix::vstack(&[&top, &bottom]);
        let m = big.rows;
        assert!(big.adjoint().mul(&big).sub(&CMatrix::identity(m)).frobenius() <= 1e-12);
    }

    #[test]
    fn factorization_on_trusted_rows() {
        let t = poly_tuple(3, 3, 43, 0.5);
        let g = SubsetMask::full(2);
        let gd = build_gamma(&t, g, &tol()).unwrap();
        let up = build_uprime(&t, &gd, &tol()).unwrap();
        let lift = lift_uprime(&up, &[], &tol()).unwrap();
        let u = complete_unitary_pair(&lift).unwrap();
        let b = bcl_pair(&u, gd.outer.rank);
        let glued = t.hat_glued();
        let cd = canonical_dilation(&glued.select(g), 8, &tol()).unwrap();
        let res = factorization_check(&cd.space, &cd.pi, &gd.gamma, &b, t.op(1));
        assert!(res <= 1e-8, "factorization residual {res:.2e}");
    }
}
