//! Dense complex matrices and the factorizations the pipeline needs.
//!
//! Everything here is self-contained: a cyclic Jacobi eigensolver for
//! Hermitian matrices drives the spectral decompositions, pivoted Cholesky
//! factors Gram matrices, and least-squares maps are built from the
//! eigen-based pseudo-inverse. Matrices are small (defect spaces, window
//! Gram factors), so O(d^3) kernels with good constants are enough.

use crate::error::{Error, Result};
use num_complex::Complex64 as C;

const ZERO: C = C { re: 0.0, im: 0.0 };
const ONE: C = C { re: 1.0, im: 0.0 };

/// Dense complex matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<C>,
}

impl CMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        CMatrix { rows, cols, data: vec![ZERO; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = CMatrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = ONE;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        CMatrix { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<C>]) -> Self {
        let r = rows.len();
        let c = if r == 0 { 0 } else { rows[0].len() };
        CMatrix::from_fn(r, c, |i, j| rows[i][j])
    }

    /// Real diagonal matrix.
    pub fn diag(vals: &[f64]) -> Self {
        let n = vals.len();
        CMatrix::from_fn(n, n, |i, j| if i == j { C::new(vals[i], 0.0) } else { ZERO })
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> C {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: C) {
        self.data[i * self.cols + j] = v;
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn adjoint(&self) -> CMatrix {
        CMatrix::from_fn(self.cols, self.rows, |i, j| self.at(j, i).conj())
    }

    pub fn scale(&self, s: C) -> CMatrix {
        CMatrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|z| z * s).collect() }
    }

    pub fn add(&self, other: &CMatrix) -> CMatrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols), "add: shape mismatch");
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn sub(&self, other: &CMatrix) -> CMatrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols), "sub: shape mismatch");
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn mul(&self, other: &CMatrix) -> CMatrix {
        assert_eq!(self.cols, other.rows, "mul: shape mismatch");
        // Interleaved re/im blocks the vectorizer; above a size threshold,
        // split both operands into real planes and fuse four real kernels.
        if self.rows * self.cols * other.cols > 32_768 {
            return self.mul_split(other);
        }
        let mut out = CMatrix::zeros(self.rows, other.cols);
        // i-k-j order keeps the inner loop contiguous in both operands.
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.at(i, k);
                if a == ZERO {
                    continue;
                }
                let src = &other.data[k * other.cols..(k + 1) * other.cols];
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for j in 0..other.cols {
                    dst[j] += a * src[j];
                }
            }
        }
        out
    }

    /// Product via separate real/imaginary planes: the four planar i-k-j
    /// kernels keep unit-stride f64 streams that vectorize, unlike the
    /// interleaved complex layout.
    fn mul_split(&self, other: &CMatrix) -> CMatrix {
        let (r, kk, c) = (self.rows, self.cols, other.cols);
        let br: Vec<f64> = other.data.iter().map(|z| z.re).collect();
        let bi: Vec<f64> = other.data.iter().map(|z| z.im).collect();
        let mut cr = vec![0.0f64; r * c];
        let mut ci = vec![0.0f64; r * c];
        for i in 0..r {
            let dst_r = &mut cr[i * c..(i + 1) * c];
            let dst_i = &mut ci[i * c..(i + 1) * c];
            for k in 0..kk {
                let a = self.data[i * kk + k];
                if a == ZERO {
                    continue;
                }
                let (are, aim) = (a.re, a.im);
                let src_r = &br[k * c..(k + 1) * c];
                let src_i = &bi[k * c..(k + 1) * c];
                for j in 0..c {
                    dst_r[j] += are * src_r[j] - aim * src_i[j];
                    dst_i[j] += are * src_i[j] + aim * src_r[j];
                }
            }
        }
        let data: Vec<C> = cr.into_iter().zip(ci).map(|(re, im)| C::new(re, im)).collect();
        CMatrix { rows: r, cols: c, data }
    }

    pub fn matvec(&self, x: &[C]) -> Vec<C> {
        assert_eq!(self.cols, x.len());
        let mut out = vec![ZERO; self.rows];
        for i in 0..self.rows {
            let mut acc = ZERO;
            let row = &self.data[i * self.cols..(i + 1) * self.cols];
            for j in 0..self.cols {
                acc += row[j] * x[j];
            }
            out[i] = acc;
        }
        out
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn col(&self, j: usize) -> Vec<C> {
        (0..self.rows).map(|i| self.at(i, j)).collect()
    }

    pub fn set_col(&mut self, j: usize, v: &[C]) {
        assert_eq!(v.len(), self.rows);
        for i in 0..self.rows {
            self.set(i, j, v[i]);
        }
    }

    pub fn hstack(blocks: &[&CMatrix]) -> CMatrix {
        assert!(!blocks.is_empty());
        let rows = blocks[0].rows;
        let cols: usize = blocks.iter().map(|b| b.cols).sum();
        let mut out = CMatrix::zeros(rows, cols);
        let mut off = 0;
        for b in blocks {
            assert_eq!(b.rows, rows, "hstack: row mismatch");
            for i in 0..rows {
                for j in 0..b.cols {
                    out.set(i, off + j, b.at(i, j));
                }
            }
            off += b.cols;
        }
        out
    }

    pub fn vstack(blocks: &[&CMatrix]) -> CMatrix {
        assert!(!blocks.is_empty());
        let cols = blocks[0].cols;
        let rows: usize = blocks.iter().map(|b| b.rows).sum();
        let mut out = CMatrix::zeros(rows, cols);
        let mut off = 0;
        for b in blocks {
            assert_eq!(b.cols, cols, "vstack: col mismatch");
            for i in 0..b.rows {
                for j in 0..cols {
                    out.set(off + i, j, b.at(i, j));
                }
            }
            off += b.rows;
        }
        out
    }

    /// Copy `block` into `self` with its (0,0) entry at (i0, j0).
    pub fn paste(&mut self, i0: usize, j0: usize, block: &CMatrix) {
        assert!(i0 + block.rows <= self.rows && j0 + block.cols <= self.cols);
        for i in 0..block.rows {
            for j in 0..block.cols {
                self.set(i0 + i, j0 + j, block.at(i, j));
            }
        }
    }

    pub fn slice(&self, i0: usize, j0: usize, rows: usize, cols: usize) -> CMatrix {
        assert!(i0 + rows <= self.rows && j0 + cols <= self.cols);
        CMatrix::from_fn(rows, cols, |i, j| self.at(i0 + i, j0 + j))
    }

    /// Columns with the given indices, in order.
    pub fn select_cols(&self, idx: &[usize]) -> CMatrix {
        CMatrix::from_fn(self.rows, idx.len(), |i, j| self.at(i, idx[j]))
    }

    /// Hermitian asymmetry `||A - A*||_F`.
    pub fn herm_defect(&self) -> f64 {
        assert!(self.is_square());
        let mut acc = 0.0;
        for i in 0..self.rows {
            for j in 0..self.cols {
                let d = self.at(i, j) - self.at(j, i).conj();
                acc += d.norm_sqr();
            }
        }
        acc.sqrt()
    }

    /// (A + A*)/2.
    pub fn symmetrize(&self) -> CMatrix {
        assert!(self.is_square());
        CMatrix::from_fn(self.rows, self.cols, |i, j| {
            (self.at(i, j) + self.at(j, i).conj()) * 0.5
        })
    }
}

/// Eigendecomposition of a Hermitian matrix: `a = V diag(w) V*`,
/// eigenvalues ascending, eigenvector columns orthonormal.
#[derive(Debug, Clone)]
pub struct HermEigen {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: CMatrix,
}

/// Cyclic Jacobi for Hermitian matrices.
///
/// Each rotation is a complex Givens transform that annihilates one
/// off-diagonal pair; sweeps repeat until the off-diagonal Frobenius mass
/// drops below `tol` times the input norm. Inputs are symmetrized first and
/// rejected if the asymmetry exceeds `1e-8` of the norm.
pub fn herm_eigen(a: &CMatrix, tol: f64) -> Result<HermEigen> {
    if !a.is_square() {
        return Err(Error::dim("herm_eigen requires a square matrix"));
    }
    let n = a.rows;
    let scale = a.frobenius().max(1e-300);
    let asym = a.herm_defect();
    if asym > 1e-8 * scale {
        return Err(Error::NotHermitian { asymmetry: asym, tol: 1e-8 * scale });
    }
    let mut m = a.symmetrize();
    let mut v = CMatrix::identity(n);
    if n <= 1 {
        return Ok(HermEigen {
            eigenvalues: (0..n).map(|i| m.at(i, i).re).collect(),
            eigenvectors: v,
        });
    }
    let off = |m: &CMatrix| -> f64 {
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    acc += m.at(i, j).norm_sqr();
                }
            }
        }
        acc.sqrt()
    };
    let max_sweeps = 60;
    let mut converged = false;
    let mut last = off(&m);
    for _ in 0..max_sweeps {
        if off(&m) <= tol * scale {
            converged = true;
            break;
        }
        for p in 0..n - 1 {
            for q in p + 1..n {
                let apq = m.at(p, q);
                let abs = apq.norm();
                if abs <= 1e-300 {
                    continue;
                }
                let app = m.at(p, p).re;
                let aqq = m.at(q, q).re;
                // Phase so the pivot becomes real, then a real Jacobi angle.
                let d2 = apq.conj() / abs;
                let tau = (aqq - app) / (2.0 * abs);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                // 2x2 unitary R = [[c, s], [-d2*s, d2*c]] acting on (p,q).
                let r11 = C::new(c, 0.0);
                let r12 = C::new(s, 0.0);
                let r21 = -d2 * s;
                let r22 = d2 * c;
                // A <- R* A R : columns first, then rows.
                for i in 0..n {
                    let aip = m.at(i, p);
                    let aiq = m.at(i, q);
                    m.set(i, p, aip * r11 + aiq * r21);
                    m.set(i, q, aip * r12 + aiq * r22);
                }
                for j in 0..n {
                    let apj = m.at(p, j);
                    let aqj = m.at(q, j);
                    m.set(p, j, r11.conj() * apj + r21.conj() * aqj);
                    m.set(q, j, r12.conj() * apj + r22.conj() * aqj);
                }
                for i in 0..n {
                    let vip = v.at(i, p);
                    let viq = v.at(i, q);
                    v.set(i, p, vip * r11 + viq * r21);
                    v.set(i, q, vip * r12 + viq * r22);
                }
            }
        }
        last = off(&m);
    }
    if !converged && last > tol * scale {
        return Err(Error::NoConvergence { iterations: max_sweeps, last_delta: last });
    }
    let mut order: Vec<usize> = (0..n).collect();
    let vals: Vec<f64> = (0..n).map(|i| m.at(i, i).re).collect();
    order.sort_by(|&i, &j| vals[i].partial_cmp(&vals[j]).unwrap());
    let eigenvalues: Vec<f64> = order.iter().map(|&i| vals[i]).collect();
    let eigenvectors = v.select_cols(&order);
    Ok(HermEigen { eigenvalues, eigenvectors })
}

/// Result of a PSD square root, with clamping diagnostics.
#[derive(Debug, Clone)]
pub struct PsdSqrt {
    pub matrix: CMatrix,
    /// Number of eigenvalues clamped from slightly negative to zero.
    pub clamped: usize,
    /// Most negative eigenvalue encountered (0 if none).
    pub most_negative: f64,
}

/// Hermitian PSD square root via eigendecomposition.
///
/// Eigenvalues in `[-clamp_tol * scale, 0)` are clamped to zero (the clamp is
/// recorded, never silent); anything below that bound is `NotPsd`.
pub fn psd_sqrt(a: &CMatrix, eig_tol: f64, clamp_tol: f64) -> Result<PsdSqrt> {
    let eg = herm_eigen(a, eig_tol)?;
    let scale = eg.eigenvalues.iter().fold(0.0f64, |m, &w| m.max(w.abs())).max(1.0);
    let mut clamped = 0;
    let mut most_negative = 0.0f64;
    let mut roots = Vec::with_capacity(eg.eigenvalues.len());
    for &w in &eg.eigenvalues {
        if w < 0.0 {
            most_negative = most_negative.min(w);
            if w < -clamp_tol * scale {
                return Err(Error::NotPsd { eigenvalue: w, tol: clamp_tol * scale });
            }
            clamped += 1;
            roots.push(0.0);
        } else {
            roots.push(w.sqrt());
        }
    }
    let v = &eg.eigenvectors;
    let sq = v.mul(&CMatrix::diag(&roots)).mul(&v.adjoint());
    Ok(PsdSqrt { matrix: sq.symmetrize(), clamped, most_negative })
}

/// Orthonormal basis of the column space of `a`.
///
/// Computed from the eigenvectors of `a a*`; columns whose singular value is
/// at least `rank_tol * sigma_max` are kept, so the column count is the
/// numerical rank. Because the Gram squares the singular values, the cut is
/// floored at the eigen-noise level of `a a*` (about `n * 1e-14` relative),
/// below which directions are indistinguishable from round-off anyway.
pub fn range_basis(a: &CMatrix, rank_tol: f64) -> Result<CMatrix> {
    let gram = a.mul(&a.adjoint());
    let eg = herm_eigen(&gram, 1e-14)?;
    let lmax = eg.eigenvalues.last().copied().unwrap_or(0.0).max(0.0);
    let cut = lmax * (rank_tol * rank_tol).max(gram.rows as f64 * 1e-14);
    let mut keep = Vec::new();
    for (i, &w) in eg.eigenvalues.iter().enumerate() {
        if lmax > 0.0 && w > cut {
            keep.push(i);
        }
    }
    Ok(eg.eigenvectors.select_cols(&keep))
}

/// Complete an isometric column block `v` (m x k) to a unitary (m x m).
///
/// The complement is extracted from `I - V V*` and re-orthogonalized twice,
/// so the output satisfies `||U*U - I|| <= 1e-12`. Complement columns are
/// ordered by ascending standard-basis pivot index.
pub fn unitary_complete(v: &CMatrix) -> Result<CMatrix> {
    let (m, k) = (v.rows, v.cols);
    if k > m {
        return Err(Error::dim("unitary_complete: more columns than rows"));
    }
    let iso_defect = v.adjoint().mul(v).sub(&CMatrix::identity(k)).frobenius();
    if iso_defect > 1e-10 {
        return Err(Error::NotIsometric { defect: iso_defect, tol: 1e-10 });
    }
    let mut basis: Vec<Vec<C>> = (0..k).map(|j| v.col(j)).collect();
    let mut extra: Vec<Vec<C>> = Vec::new();
    for p in 0..m {
        if basis.len() + extra.len() == m {
            break;
        }
        let mut e = vec![ZERO; m];
        e[p] = ONE;
        // Two Gram-Schmidt passes against everything collected so far.
        for _ in 0..2 {
            for b in basis.iter().chain(extra.iter()) {
                let coef: C = b.iter().zip(&e).map(|(x, y)| x.conj() * y).sum();
                for (ei, bi) in e.iter_mut().zip(b) {
                    *ei -= coef * bi;
                }
            }
        }
        let norm = e.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm > 1e-6 {
            for z in e.iter_mut() {
                *z /= norm;
            }
            extra.push(e);
        }
    }
    if basis.len() + extra.len() != m {
        return Err(Error::precondition("unitary_complete: complement extraction fell short"));
    }
    basis.extend(extra);
    let u = CMatrix::from_fn(m, m, |i, j| basis[j][i]);
    let defect = u.adjoint().mul(&u).sub(&CMatrix::identity(m)).frobenius();
    if defect > 1e-12 {
        return Err(Error::NotIsometric { defect, tol: 1e-12 });
    }
    Ok(u)
}

/// Pivoted Cholesky factor of a Hermitian PSD matrix, with clamping.
#[derive(Debug, Clone)]
pub struct CholFactor {
    /// `l` has `rank` columns and satisfies `||G - L L*|| <= clamp` scale.
    pub l: CMatrix,
    pub rank: usize,
    /// Most negative residual diagonal pivot seen (0 if none).
    pub most_negative: f64,
}

/// Diagonally pivoted Cholesky for Hermitian PSD matrices.
///
/// Stops when the largest remaining diagonal falls below
/// `clamp_tol * ||G||`; a pivot below the negative of that bound is `NotPsd`.
pub fn pivoted_cholesky(g: &CMatrix, clamp_tol: f64) -> Result<CholFactor> {
    if !g.is_square() {
        return Err(Error::dim("pivoted_cholesky requires a square matrix"));
    }
    let n = g.rows;
    let scale = g.frobenius().max(1e-300);
    let asym = g.herm_defect();
    if asym > 1e-8 * scale {
        return Err(Error::NotHermitian { asymmetry: asym, tol: 1e-8 * scale });
    }
    let gs = g.symmetrize();
    let mut diag: Vec<f64> = (0..n).map(|i| gs.at(i, i).re).collect();
    let mut active: Vec<bool> = vec![true; n];
    let mut cols: Vec<Vec<C>> = Vec::new();
    let mut pivots: Vec<usize> = Vec::new();
    let mut most_negative = 0.0f64;
    let stop = clamp_tol * scale;
    loop {
        let mut best = usize::MAX;
        let mut best_val = f64::NEG_INFINITY;
        for i in 0..n {
            if active[i] && diag[i] > best_val {
                best_val = diag[i];
                best = i;
            }
        }
        for i in 0..n {
            if active[i] && diag[i] < 0.0 {
                most_negative = most_negative.min(diag[i]);
                if diag[i] < -stop {
                    return Err(Error::NotPsd { eigenvalue: diag[i], tol: stop });
                }
            }
        }
        if best == usize::MAX || best_val <= stop {
            break;
        }
        let p = best;
        let piv = best_val.sqrt();
        let k = cols.len();
        let mut col = vec![ZERO; n];
        col[p] = C::new(piv, 0.0);
        for i in 0..n {
            if i == p || !active[i] {
                continue;
            }
            let mut acc = gs.at(i, p);
            for (m, c) in cols.iter().enumerate() {
                let _ = m;
                acc -= c[i] * c[p].conj();
            }
            col[i] = acc / piv;
            diag[i] -= col[i].norm_sqr();
        }
        active[p] = false;
        cols.push(col);
        pivots.push(p);
        if k + 1 == n {
            break;
        }
    }
    let rank = cols.len();
    let l = CMatrix::from_fn(n, rank, |i, j| cols[j][i]);
    Ok(CholFactor { l, rank, most_negative })
}

/// Operator (spectral) norm via the top eigenvalue of `A* A`.
pub fn spectral_norm(a: &CMatrix) -> f64 {
    if a.rows == 0 || a.cols == 0 {
        return 0.0;
    }
    let g = if a.rows <= a.cols { a.mul(&a.adjoint()) } else { a.adjoint().mul(a) };
    match herm_eigen(&g, 1e-13) {
        Ok(eg) => eg.eigenvalues.last().copied().unwrap_or(0.0).max(0.0).sqrt(),
        // Jacobi stagnation on a Gram matrix is effectively unreachable;
        // fall back to the Frobenius bound rather than panic.
        Err(_) => a.frobenius(),
    }
}

/// Upper estimate of the spectral radius via norms of repeated squarings:
/// `||A^(2^j)||^(2^-j)` decreases to the radius; the minimum over iterates is
/// returned once the sequence stabilizes. Always satisfies
/// `radius <= estimate <= ||A||`.
pub fn spectral_radius(a: &CMatrix, tol: f64) -> Result<f64> {
    if !a.is_square() {
        return Err(Error::dim("spectral_radius requires a square matrix"));
    }
    if a.rows == 0 {
        return Ok(0.0);
    }
    let mut b = a.clone();
    let mut log_scale = 0.0f64; // log of accumulated normalization of b = A^p / exp(log_scale)
    let mut p = 1.0f64;
    let mut best = f64::INFINITY;
    let max_squarings = 24;
    let mut prev = f64::INFINITY;
    for _ in 0..max_squarings {
        let nb = spectral_norm(&b);
        if nb == 0.0 {
            return Ok(0.0);
        }
        let est = ((nb.ln() + log_scale) / p).exp();
        best = best.min(est);
        if (est - prev).abs() <= tol * est.max(1.0) {
            return Ok(best);
        }
        prev = est;
        // b <- (b/nb)^2, p doubles.
        let scaled = b.scale(C::new(1.0 / nb, 0.0));
        b = scaled.mul(&scaled);
        log_scale = 2.0 * (log_scale + nb.ln());
        p *= 2.0;
    }
    Ok(best)
}

/// Least-squares operator solve: the `M` minimizing `||M X - Y||_F`,
/// extended by zero on the orthogonal complement of the column space of `X`.
///
/// Pseudo-inverse semantics: singular values of `X` below
/// `rank_tol * sigma_max` are treated as zero. Returns the map and the
/// achieved residual `||M X - Y||_F`.
pub fn least_squares_map(x: &CMatrix, y: &CMatrix, rank_tol: f64) -> Result<(CMatrix, f64)> {
    if x.cols != y.cols {
        return Err(Error::dim("least_squares_map: X and Y need matching column counts"));
    }
    let g = x.mul(&x.adjoint()); // m x m Gram; eigenvalues are squared singular values of X.
    let eg = herm_eigen(&g, 1e-14)?;
    let lmax = eg.eigenvalues.last().copied().unwrap_or(0.0).max(0.0);
    let cut = rank_tol * rank_tol * lmax;
    let inv: Vec<f64> = eg
        .eigenvalues
        .iter()
        .map(|&w| if w > cut && w > 0.0 { 1.0 / w } else { 0.0 })
        .collect();
    let v = &eg.eigenvectors;
    let pinv = v.mul(&CMatrix::diag(&inv)).mul(&v.adjoint());
    let m = y.mul(&x.adjoint()).mul(&pinv);
    let residual = m.mul(x).sub(y).frobenius();
    Ok((m, residual))
}

/// Build the isometry sending the columns of `x` to the columns of `y`,
/// assuming the two families have (numerically) equal Grams.
///
/// Pivoted modified Gram-Schmidt runs on the `x` columns; the identical
/// elimination coefficients are transported to the `y` columns, which makes
/// the construction stable without forming a pseudo-inverse. The returned map
/// is a partial isometry (unitary from span X to span Y, zero on the
/// complement). Also returns `||W X - Y||_F`, which measures how consistent
/// the input pairing actually was.
pub fn isometry_from_pairs(x: &CMatrix, y: &CMatrix, rank_tol: f64) -> Result<(CMatrix, f64)> {
    if x.cols != y.cols {
        return Err(Error::dim("isometry_from_pairs: column count mismatch"));
    }
    let k = x.cols;
    // Columns kept as separate real/imaginary planes: the elimination
    // kernels below are unit-stride f64 loops that vectorize.
    let split =
        |m: &CMatrix, j: usize| -> (Vec<f64>, Vec<f64>) {
            let c = m.col(j);
            (c.iter().map(|z| z.re).collect(), c.iter().map(|z| z.im).collect())
        };
    let (mut xr, mut xi): (Vec<Vec<f64>>, Vec<Vec<f64>>) = (0..k).map(|j| split(x, j)).unzip();
    let (mut yr, mut yi): (Vec<Vec<f64>>, Vec<Vec<f64>>) = (0..k).map(|j| split(y, j)).unzip();
    // `used` marks both selected pivots and columns eliminated to the noise
    // floor; dead columns drop out of every later sweep.
    let mut used = vec![false; k];
    // Squared-norm estimates maintained by downdating with the elimination
    // coefficients; exact values are recomputed at decision points only.
    let exact2 = |re: &[f64], im: &[f64]| -> f64 {
        re.iter().zip(im).map(|(a, b)| a * a + b * b).sum::<f64>()
    };
    let dot_conj = |ar: &[f64], ai: &[f64], br: &[f64], bi: &[f64]| -> C {
        let mut re = 0.0f64;
        let mut im = 0.0f64;
        for j in 0..ar.len() {
            re += ar[j] * br[j] + ai[j] * bi[j];
            im += ar[j] * bi[j] - ai[j] * br[j];
        }
        C::new(re, im)
    };
    let axpy_sub = |tr: &mut [f64], ti: &mut [f64], c: C, sr: &[f64], si: &[f64]| {
        for j in 0..tr.len() {
            tr[j] -= c.re * sr[j] - c.im * si[j];
            ti[j] -= c.re * si[j] + c.im * sr[j];
        }
    };
    let mut est2: Vec<f64> = (0..k).map(|j| exact2(&xr[j], &xi[j])).collect();
    let norm0 = est2.iter().fold(0.0f64, |a, &b| a.max(b)).sqrt();
    let thresh2 = (rank_tol * norm0).max(1e-300).powi(2);
    let mut bx: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
    let mut by: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
    loop {
        let mut best = usize::MAX;
        let mut best_est = thresh2;
        for j in 0..k {
            if !used[j] && est2[j] > best_est {
                best_est = est2[j];
                best = j;
            }
        }
        if best == usize::MAX {
            break;
        }
        // Downdated estimates only decrease; confirm the winner exactly and
        // re-enter the selection if its true norm lost the race.
        let actual = exact2(&xr[best], &xi[best]);
        est2[best] = actual;
        if actual <= thresh2 {
            used[best] = true;
            continue;
        }
        if actual < 0.5 * best_est {
            continue;
        }
        used[best] = true;
        let inv = 1.0 / actual.sqrt();
        let scale = |v: &[f64]| -> Vec<f64> { v.iter().map(|t| t * inv).collect() };
        let (qxr, qxi) = (scale(&xr[best]), scale(&xi[best]));
        let (qyr, qyi) = (scale(&yr[best]), scale(&yi[best]));
        for j in 0..k {
            if used[j] {
                continue;
            }
            let pre = est2[j];
            // One elimination pass on both families; a second pass only when
            // the removed component was a large fraction of the column (the
            // standard re-orthogonalization criterion).
            let coef = dot_conj(&qxr, &qxi, &xr[j], &xi[j]);
            axpy_sub(&mut xr[j], &mut xi[j], coef, &qxr, &qxi);
            axpy_sub(&mut yr[j], &mut yi[j], coef, &qyr, &qyi);
            let removed = coef.norm_sqr();
            est2[j] = (pre - removed).max(0.0);
            if removed > 0.1 * pre.max(1e-300) {
                let coef2 = dot_conj(&qxr, &qxi, &xr[j], &xi[j]);
                axpy_sub(&mut xr[j], &mut xi[j], coef2, &qxr, &qxi);
                axpy_sub(&mut yr[j], &mut yi[j], coef2, &qyr, &qyi);
                est2[j] = (est2[j] - coef2.norm_sqr()).max(0.0);
            }
            if est2[j] <= thresh2 {
                let ex = exact2(&xr[j], &xi[j]);
                est2[j] = ex;
                if ex <= thresh2 {
                    used[j] = true;
                }
            }
        }
        bx.push((qxr, qxi));
        by.push((qyr, qyi));
    }
    let r = bx.len();
    let bxm = CMatrix::from_fn(x.rows, r, |i, j| C::new(bx[j].0[i], bx[j].1[i]));
    let bym = CMatrix::from_fn(y.rows, r, |i, j| C::new(by[j].0[i], by[j].1[i]));
    let w = bym.mul(&bxm.adjoint());
    let residual = w.mul(x).sub(y).frobenius();
    Ok((w, residual))
}
