//! Deterministic, seeded generators of commuting-contraction test tuples,
//! with closed-form oracles where a recipe admits one.
//!
//! Determinism is part of the contract: the generator is a splitmix-style
//! 64-bit PRNG fixed by its update constants (not by a platform library), so
//! identical [`GenSpec`]s produce bit-identical tuples on every platform.

use crate::config::Tolerances;
use crate::error::{Error, Result};
use crate::linalg::{spectral_norm, CMatrix};
use crate::tuple::{class_membership, is_brehmer, OperatorTuple, SubsetMask};
use num_complex::Complex64 as C;
use serde::{Deserialize, Serialize};

/// Generation recipe.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Recipe {
    /// Commuting diagonal contractions; positivity has a closed product
    /// formula, so every defect is checkable against an exact oracle.
    Diagonal,
    /// Polynomials of one random matrix, rescaled; commuting exactly by
    /// construction, class membership decided by the positivity module.
    PolyOfOne,
    /// Commuting unitaries (shared eigenbasis) scaled by the radius cap.
    ScaledUnitaries,
    /// The nilpotent pair `T1 = T2 = [[0,1],[0,0]]`, which fails Szego
    /// positivity: a pinned negative control.
    JordanPair,
}

/// Everything that determines a generated tuple.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenSpec {
    pub seed: u64,
    pub n: u32,
    pub d: usize,
    pub recipe: Recipe,
    pub radius_cap: f64,
}

/// Splitmix-style 64-bit PRNG. Update: add the golden-gamma constant
/// `0x9E3779B97F4A7C15`, then finalize with the two mixing multiplications
/// `0xBF58476D1CE4E5B9` and `0x94D049BB133111EB`.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> SplitMix64 {
        SplitMix64 { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E3779B97F4A7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
        z ^ (z >> 31)
    }

    /// Uniform in [0, 1) with 53 significant bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    /// Uniform in [-1, 1).
    pub fn next_signed(&mut self) -> f64 {
        2.0 * self.next_f64() - 1.0
    }

    /// Uniform on the complex disc of the given radius (by rejection from
    /// the bounding square; expected < 1.28 draws).
    pub fn next_in_disc(&mut self, radius: f64) -> C {
        loop {
            let re = self.next_signed();
            let im = self.next_signed();
            if re * re + im * im < 1.0 {
                return C::new(re * radius, im * radius);
            }
        }
    }
}

fn check_spec(spec: &GenSpec) -> Result<()> {
    if spec.n < 2 || spec.d == 0 {
        return Err(Error::precondition("need n >= 2 coordinates and d >= 1"));
    }
    if !(spec.radius_cap > 0.0 && spec.radius_cap <= 1.0) {
        return Err(Error::precondition("radius cap must lie in (0, 1]"));
    }
    Ok(())
}

/// Commuting diagonal contractions with eigenvalues drawn uniformly from
/// the disc of radius `radius_cap`.
pub fn gen_diagonal(spec: &GenSpec) -> Result<OperatorTuple> {
    check_spec(spec)?;
    let mut rng = SplitMix64::new(spec.seed);
    let mut ops = Vec::with_capacity(spec.n as usize);
    for _ in 0..spec.n {
        let evs: Vec<C> = (0..spec.d).map(|_| rng.next_in_disc(spec.radius_cap)).collect();
        ops.push(CMatrix::from_fn(spec.d, spec.d, |i, j| {
            if i == j {
                evs[i]
            } else {
                C::new(0.0, 0.0)
            }
        }));
    }
    Ok(OperatorTuple::validated(ops, &Tolerances::default())?.0)
}

/// Exact positivity defect of a diagonal tuple on a subset: the diagonal
/// matrix with entries `prod_{i in G} (1 - |lambda_k^{(i)}|^2)` (inclusion-
/// exclusion telescopes entrywise for commuting diagonals).
pub fn diagonal_defect_oracle(t: &OperatorTuple, g: SubsetMask) -> CMatrix {
    let d = t.dim;
    CMatrix::from_fn(d, d, |i, j| {
        if i != j {
            return C::new(0.0, 0.0);
        }
        let mut p = 1.0;
        for idx in g.indices() {
            p *= 1.0 - t.op(idx).at(i, i).norm_sqr();
        }
        C::new(p, 0.0)
    })
}

/// One random matrix `A`, coordinates `T_i = p_i(A)` for random quadratic
/// polynomials, each rescaled to spectral norm `radius_cap`. Commutes
/// exactly; no closed-form class oracle.
pub fn gen_poly_of_one(spec: &GenSpec) -> Result<OperatorTuple> {
    check_spec(spec)?;
    let mut rng = SplitMix64::new(spec.seed);
    gen_poly_of_one_from(spec, &mut rng)
}

fn gen_poly_of_one_from(spec: &GenSpec, rng: &mut SplitMix64) -> Result<OperatorTuple> {
    let d = spec.d;
    let a = CMatrix::from_fn(d, d, |_, _| C::new(rng.next_signed(), rng.next_signed()));
    let a2 = a.mul(&a);
    let mut ops = Vec::with_capacity(spec.n as usize);
    for _ in 0..spec.n {
        let c0 = rng.next_in_disc(1.0);
        let c1 = rng.next_in_disc(1.0);
        let c2 = rng.next_in_disc(1.0);
        let m = CMatrix::identity(d)
            .scale(c0)
            .add(&a.scale(c1))
            .add(&a2.scale(c2));
        let nm = spectral_norm(&m);
        let f = if nm > 1e-12 { spec.radius_cap / nm } else { 0.0 };
        ops.push(m.scale(C::new(f, 0.0)));
    }
    Ok(OperatorTuple::validated(ops, &Tolerances::default())?.0)
}

/// Rejection-sample [`gen_poly_of_one`] until the tuple is accepted into the
/// positivity class whose two deleted sub-tuples (dropping the first and the
/// last coordinate) are both Brehmer. Returns the tuple and the number of
/// rejected draws.
pub fn gen_poly_in_class(spec: &GenSpec, budget: u64, tol: &Tolerances) -> Result<(OperatorTuple, u64)> {
    check_spec(spec)?;
    let mut rng = SplitMix64::new(spec.seed);
    for rejected in 0..budget.max(1) {
        let t = gen_poly_of_one_from(spec, &mut rng)?;
        if class_membership(&t, 1, t.n(), tol)?.member {
            return Ok((t, rejected));
        }
    }
    Err(Error::precondition(
        "rejection budget exceeded while sampling the positivity class",
    ))
}

/// Commuting unitaries in a shared random eigenbasis (a Householder-style
/// reflection applied to diagonal phase matrices), scaled by `radius_cap`.
pub fn gen_scaled_unitaries(spec: &GenSpec) -> Result<OperatorTuple> {
    check_spec(spec)?;
    let mut rng = SplitMix64::new(spec.seed);
    let d = spec.d;
    // Shared orthonormal eigenbasis from one reflection I - 2 v v*.
    let mut v: Vec<C> = (0..d).map(|_| rng.next_in_disc(1.0)).collect();
    let nrm = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt().max(1e-12);
    for x in v.iter_mut() {
        *x /= C::new(nrm, 0.0);
    }
    let basis = CMatrix::from_fn(d, d, |i, j| {
        let delta = if i == j { C::new(1.0, 0.0) } else { C::new(0.0, 0.0) };
        delta - C::new(2.0, 0.0) * v[i] * v[j].conj()
    });
    let mut ops = Vec::with_capacity(spec.n as usize);
    for _ in 0..spec.n {
        let phases: Vec<f64> = (0..d)
            .map(|_| rng.next_f64() * 2.0 * std::f64::consts::PI)
            .collect();
        let diag = CMatrix::from_fn(d, d, |i, j| {
            if i == j {
                C::from_polar(spec.radius_cap, phases[i])
            } else {
                C::new(0.0, 0.0)
            }
        });
        ops.push(basis.mul(&diag).mul(&basis.adjoint()));
    }
    Ok(OperatorTuple::validated(ops, &Tolerances::default())?.0)
}

/// The pinned negative control: `T1 = T2 = [[0, c], [0, 0]]` with
/// `c = radius_cap`. At `c = 1` the Szego defect is `diag(-1, 1)`, so the
/// pair is commuting and contractive but not Szego-positive.
pub fn jordan_pair(radius_cap: f64) -> OperatorTuple {
    let m = CMatrix::from_fn(2, 2, |i, j| {
        if i == 0 && j == 1 {
            C::new(radius_cap, 0.0)
        } else {
            C::new(0.0, 0.0)
        }
    });
    OperatorTuple::unchecked(vec![m.clone(), m])
}

/// Generate a tuple according to the recipe.
pub fn generate(spec: &GenSpec) -> Result<OperatorTuple> {
    match spec.recipe {
        Recipe::Diagonal => gen_diagonal(spec),
        Recipe::PolyOfOne => gen_poly_of_one(spec),
        Recipe::ScaledUnitaries => gen_scaled_unitaries(spec),
        Recipe::JordanPair => Ok(jordan_pair(spec.radius_cap)),
    }
}

/// Best-effort search for a tuple separating the two positivity classes:
/// accepted by the deleted-sub-tuple class test but failing full Brehmer
/// positivity. Returns the tuple and the witnessing subset if one is found
/// within `budget` draws; `None` is a report, not an error.
pub fn gen_separating_search(
    spec: &GenSpec,
    budget: u64,
    tol: &Tolerances,
) -> Result<Option<(OperatorTuple, SubsetMask)>> {
    check_spec(spec)?;
    let mut rng = SplitMix64::new(spec.seed);
    for _ in 0..budget {
        let t = gen_poly_of_one_from(spec, &mut rng)?;
        if !class_membership(&t, 1, t.n(), tol)?.member {
            continue;
        }
        if let Err(w) = is_brehmer(&t, tol)? {
            return Ok(Some((t, w.subset)));
        }
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tuple::{defect, is_szego};

    fn spec(recipe: Recipe, seed: u64) -> GenSpec {
        GenSpec {
            seed,
            n: 3,
            d: 4,
            recipe,
            radius_cap: 0.8,
        }
    }

    #[test]
    fn prng_reference_values() {
        // Frozen first outputs for seed 0 (any change breaks cross-platform
        // reproducibility of the whole corpus).
        let mut r = SplitMix64::new(0);
        assert_eq!(r.next_u64(), 0xE220A8397B1DCDAF);
        assert_eq!(r.next_u64(), 0x6E789E6AA1B965F4);
        assert_eq!(r.next_u64(), 0x06C45D188009454F);
    }

    #[test]
    fn determinism_bit_identical() {
        for recipe in [Recipe::Diagonal, Recipe::PolyOfOne, Recipe::ScaledUnitaries] {
            let a = generate(&spec(recipe, 42)).unwrap();
            let b = generate(&spec(recipe, 42)).unwrap();
            for j in 1..=3 {
                for i in 0..4 {
                    for k in 0..4 {
                        assert_eq!(a.op(j).at(i, k), b.op(j).at(i, k));
                    }
                }
            }
        }
    }

    #[test]
    fn diagonal_defect_matches_product_formula() {
        let tol = Tolerances::default();
        for seed in 0..20u64 {
            let t = gen_diagonal(&spec(Recipe::Diagonal, seed)).unwrap();
            for g in SubsetMask::all(3) {
                let dd = defect(&t, g, &tol).unwrap();
                let oracle = diagonal_defect_oracle(&t, g);
                assert!(
                    dd.delta.sub(&oracle).max_abs() <= 1e-12,
                    "seed {seed} subset {:?}",
                    g.indices()
                );
            }
        }
    }

    #[test]
    fn poly_recipe_commutes_exactly_and_respects_cap() {
        let t = gen_poly_of_one(&spec(Recipe::PolyOfOne, 7)).unwrap();
        for a in 1..=3 {
            for b in 1..=3 {
                let comm = t.op(a).mul(t.op(b)).sub(&t.op(b).mul(t.op(a)));
                assert!(comm.max_abs() <= 1e-13);
            }
            assert!(spectral_norm(t.op(a)) <= 0.8 + 1e-10);
        }
    }

    #[test]
    fn class_rejection_sampling_accepts_within_budget() {
        let tol = Tolerances::default();
        let s = GenSpec {
            seed: 11,
            n: 3,
            d: 4,
            recipe: Recipe::PolyOfOne,
            radius_cap: 0.6,
        };
        let (t, rejected) = gen_poly_in_class(&s, 1000, &tol).unwrap();
        assert!(class_membership(&t, 1, 3, &tol).unwrap().member);
        assert!(rejected < 1000);
    }

    #[test]
    fn jordan_pair_fails_szego_with_witness() {
        let t = jordan_pair(1.0);
        let tol = Tolerances::default();
        match is_szego(&t, &tol).unwrap() {
            Ok(()) => panic!("nilpotent pair must fail the Szego inequality"),
            Err(w) => {
                // Szego defect is diag(-1, 1): worst eigenvalue -1.
                assert!((w.min_eig + 1.0).abs() <= 1e-12);
                assert_eq!(w.subset, SubsetMask::full(2));
            }
        }
    }

    #[test]
    fn scaled_unitaries_are_commuting_scaled_isometries() {
        let t = gen_scaled_unitaries(&spec(Recipe::ScaledUnitaries, 3)).unwrap();
        for j in 1..=3 {
            let g = t.op(j).adjoint().mul(t.op(j));
            let want = CMatrix::identity(4).scale(C::new(0.8 * 0.8, 0.0));
            assert!(g.sub(&want).max_abs() <= 1e-12);
        }
    }

    #[test]
    fn separating_search_zero_budget_is_none() {
        let tol = Tolerances::default();
        let got = gen_separating_search(&spec(Recipe::PolyOfOne, 1), 0, &tol).unwrap();
        assert!(got.is_none());
    }
}
