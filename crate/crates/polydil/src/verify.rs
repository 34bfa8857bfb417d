//! Residual bookkeeping, polynomial evaluation at operator tuples, the
//! torus-grid supremum, and the von Neumann inequality checker.

use crate::error::{Error, Result};
use crate::linalg::{spectral_norm, CMatrix};
use crate::tuple::OperatorTuple;
use num_complex::Complex64 as C;
use serde::{Deserialize, Serialize};

/// One verified identity: a residual against a tolerance, with enough
/// context to locate the failing object.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub name: String,
    /// Which construction or identity the residual measures.
    pub anchor: String,
    pub residual: f64,
    pub tol: f64,
    pub pass: bool,
    /// Free-form locator (subset, multi-index, sample id).
    pub context: String,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ResidualLedger {
    pub entries: Vec<LedgerEntry>,
}

impl ResidualLedger {
    pub fn new() -> Self {
        ResidualLedger { entries: Vec::new() }
    }

    pub fn push(
        &mut self,
        name: impl Into<String>,
        anchor: impl Into<String>,
        residual: f64,
        tol: f64,
        context: impl Into<String>,
    ) {
        self.entries.push(LedgerEntry {
            name: name.into(),
            anchor: anchor.into(),
            residual,
            tol,
            pass: residual <= tol,
            context: context.into(),
        });
    }

    pub fn pass(&self) -> bool {
        self.entries.iter().all(|e| e.pass)
    }

    pub fn worst(&self) -> Option<&LedgerEntry> {
        self.entries
            .iter()
            .max_by(|a, b| (a.residual / a.tol).total_cmp(&(b.residual / b.tol)))
    }

    pub fn merge(&mut self, other: ResidualLedger) {
        self.entries.extend(other.entries);
    }
}

/// A polynomial in n commuting variables with finitely many terms.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolySample {
    pub n: usize,
    pub degree: usize,
    /// (multi-index, coefficient) pairs; multi-index length n, entries
    /// bounded by `degree`.
    pub coeffs: Vec<(Vec<usize>, C)>,
}

impl PolySample {
    pub fn new(n: usize, degree: usize, coeffs: Vec<(Vec<usize>, C)>) -> Result<Self> {
        for (k, _) in &coeffs {
            if k.len() != n {
                return Err(Error::dim("polynomial multi-index length mismatch"));
            }
            if k.iter().any(|&ki| ki > degree) {
                return Err(Error::precondition("polynomial exceeds stated per-variable degree"));
            }
        }
        Ok(PolySample { n, degree, coeffs })
    }
}

/// `p(T)` with each monomial evaluated in ascending coordinate order (the
/// coordinates commute, so order only moves round-off).
pub fn eval_poly_at_tuple(p: &PolySample, t: &OperatorTuple) -> Result<CMatrix> {
    if p.n != t.n() as usize {
        return Err(Error::dim("polynomial variable count does not match tuple length"));
    }
    let d = t.dim;
    // Progressive power cache per coordinate: powers[i][e] = T_{i+1}^e.
    let mut powers: Vec<Vec<CMatrix>> = Vec::with_capacity(p.n);
    for i in 0..p.n {
        let mut v = vec![CMatrix::identity(d)];
        for e in 1..=p.degree {
            let next = v[e - 1].mul(t.op((i + 1) as u32));
            v.push(next);
        }
        powers.push(v);
    }
    let mut out = CMatrix::zeros(d, d);
    for (k, c) in &p.coeffs {
        let mut m = CMatrix::identity(d);
        for (i, &ki) in k.iter().enumerate() {
            if ki > 0 {
                m = m.mul(&powers[i][ki]);
            }
        }
        out = out.add(&m.scale(*c));
    }
    Ok(out)
}

/// Max of |p| over the g^n grid of n-torus points; a lower bound on the true
/// supremum over the closed polydisc (maximum modulus pushes the sup to the
/// torus), converging as the grid refines.
///
/// Evaluated by folding one variable at a time (Horner in each variable over
/// the coefficient tensor), so the cost is g^n * (terms per fold) rather
/// than g^n * terms.
pub fn sup_on_torus(p: &PolySample, g: usize) -> f64 {
    assert!(g >= 1);
    let roots: Vec<C> = (0..g)
        .map(|a| C::from_polar(1.0, 2.0 * std::f64::consts::PI * a as f64 / g as f64))
        .collect();
    // Fold variables one at a time: maintain a map from the remaining
    // multi-index suffix to a partially evaluated coefficient.
    fn fold(coeffs: &[(Vec<usize>, C)], roots: &[C], sup: &mut f64, var: usize, n: usize) {
        if var == n {
            let total: C = coeffs.iter().map(|(_, c)| *c).sum();
            let v = total.norm();
            if v > *sup {
                *sup = v;
            }
            return;
        }
        for z in roots {
            // Evaluate variable `var` at z: merge terms with equal suffix.
            let mut merged: std::collections::BTreeMap<Vec<usize>, C> = Default::default();
            for (k, c) in coeffs {
                let zpow = z.powu(k[0] as u32);
                let suffix = k[1..].to_vec();
                *merged.entry(suffix).or_insert(C::new(0.0, 0.0)) += c * zpow;
            }
            let next: Vec<(Vec<usize>, C)> =
                merged.into_iter().map(|(k, c)| (k, c)).collect();
            fold(&next, roots, sup, var + 1, n);
        }
    }
    let mut sup = 0.0f64;
    fold(&p.coeffs, &roots, &mut sup, 0, p.n);
    sup
}

/// Grid slack: the torus grid underestimates the true supremum by at most
/// the maximal gradient step, bounded by (pi / g) * sum_k |c_k| * |k|_1.
pub fn grid_slack(p: &PolySample, g: usize) -> f64 {
    let lip: f64 = p
        .coeffs
        .iter()
        .map(|(k, c)| c.norm() * k.iter().sum::<usize>() as f64)
        .sum();
    std::f64::consts::PI / g as f64 * lip
}

/// von Neumann inequality check: `||p(T)|| <= sup_grid + slack` for every
/// sample, with slack = `extra + grid_slack`. Entries record the excess
/// (zero when the inequality holds outright).
pub fn von_neumann_check(
    t: &OperatorTuple,
    samples: &[PolySample],
    g: usize,
    extra: f64,
) -> Result<ResidualLedger> {
    let mut ledger = ResidualLedger::new();
    for (i, p) in samples.iter().enumerate() {
        let m = eval_poly_at_tuple(p, t)?;
        let norm = spectral_norm(&m);
        let sup = sup_on_torus(p, g);
        let slack = extra + grid_slack(p, g);
        let excess = (norm - sup).max(0.0);
        ledger.push(
            format!("von_neumann_sample_{i}"),
            "operator norm vs torus supremum",
            excess,
            slack,
            format!("grid {g}, sup {sup:.6e}, norm {norm:.6e}"),
        );
    }
    Ok(ledger)
}

/// Enumerate signed multi-indices alpha in Z^r with |alpha|_1 <= budget.
pub fn signed_indices(r: usize, budget: usize) -> Vec<Vec<i64>> {
    let mut out = Vec::new();
    let mut cur = vec![0i64; r];
    fn rec(out: &mut Vec<Vec<i64>>, cur: &mut Vec<i64>, var: usize, left: i64, r: usize) {
        if var == r {
            out.push(cur.clone());
            return;
        }
        for a in -left..=left {
            cur[var] = a;
            rec(out, cur, var + 1, left - a.abs(), r);
        }
    }
    rec(&mut out, &mut cur, 0, budget as i64, r);
    out
}

fn word(ops: &[&CMatrix], exps: &[usize], dim: usize) -> CMatrix {
    let mut m = CMatrix::identity(dim);
    for (op, &e) in ops.iter().zip(exps) {
        for _ in 0..e {
            m = m.mul(op);
        }
    }
    m
}

/// Apply a coordinate word to a (typically thin) matrix without forming the
/// full product of the word itself.
fn word_apply(ops: &[&CMatrix], exps: &[usize], x: &CMatrix) -> CMatrix {
    let mut y = x.clone();
    for (op, &e) in ops.iter().zip(exps) {
        for _ in 0..e {
            y = op.mul(&y);
        }
    }
    y
}

/// Worst residual of the regular-dilation identity
/// `embed* W^{*a-} W^{a+} embed = T^{*a-} T^{a+}` over signed multi-indices
/// with |alpha|_1 <= budget.
pub fn regular_residual(
    ws: &[&CMatrix],
    embed: &CMatrix,
    ts: &[&CMatrix],
    budget: usize,
) -> f64 {
    let r = ws.len();
    assert_eq!(ts.len(), r);
    let small = ts[0].rows;
    let mut worst = 0.0f64;
    for alpha in signed_indices(r, budget) {
        let ap: Vec<usize> = alpha.iter().map(|&a| a.max(0) as usize).collect();
        let am: Vec<usize> = alpha.iter().map(|&a| (-a).max(0) as usize).collect();
        let lhs = word_apply(ws, &am, embed).adjoint().mul(&word_apply(ws, &ap, embed));
        let rhs = word(ts, &am, small).adjoint().mul(&word(ts, &ap, small));
        worst = worst.max(lhs.sub(&rhs).frobenius());
    }
    worst
}

/// Worst residual of the *-regular identity
/// `embed* W^{*a-} W^{a+} embed = T^{a+} T^{*a-}` over signed multi-indices
/// with |alpha|_1 <= budget.
pub fn star_regular_residual(
    ws: &[&CMatrix],
    embed: &CMatrix,
    ts: &[&CMatrix],
    budget: usize,
) -> f64 {
    let r = ws.len();
    assert_eq!(ts.len(), r);
    let small = ts[0].rows;
    let mut worst = 0.0f64;
    for alpha in signed_indices(r, budget) {
        let ap: Vec<usize> = alpha.iter().map(|&a| a.max(0) as usize).collect();
        let am: Vec<usize> = alpha.iter().map(|&a| (-a).max(0) as usize).collect();
        let lhs = word_apply(ws, &am, embed).adjoint().mul(&word_apply(ws, &ap, embed));
        let rhs = word(ts, &ap, small).mul(&word(ts, &am, small).adjoint());
        worst = worst.max(lhs.sub(&rhs).frobenius());
    }
    worst
}
