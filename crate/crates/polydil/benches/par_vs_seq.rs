//! Parallel-vs-sequential comparison of the data-parallel map used in the
//! hot paths (subset-defect sweeps and Gram offset-block assembly).
//!
//! With the default `parallel` feature, `pmap` fans out over rayon; built
//! with `--no-default-features` it degrades to the sequential map, and the
//! two benchmarks coincide.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use polydil::corpus::{gen_poly_in_class, GenSpec, Recipe};
use polydil::par::{pmap, pmap_seq};
use polydil::tuple::{defect, OperatorTuple, SubsetMask};
use polydil::{CMatrix, Tolerances};

fn corpus_tuple(seed: u64, n: u32, d: usize) -> OperatorTuple {
    let spec = GenSpec { seed, n, d, recipe: Recipe::PolyOfOne, radius_cap: 0.6 };
    gen_poly_in_class(&spec, 1000, &Tolerances::default()).expect("class sampling").0
}

/// Per-subset defect computation, the map inside the Brehmer sweep.
fn bench_defect_sweep(c: &mut Criterion) {
    let tol = Tolerances::default();
    let t = corpus_tuple(7, 4, 24);
    let subsets = SubsetMask::all(t.n());
    let mut group = c.benchmark_group("defect_sweep");
    group.sample_size(10);
    group.bench_with_input(BenchmarkId::new("pmap", subsets.len()), &t, |b, t| {
        b.iter(|| {
            pmap(subsets.clone(), |g| defect(t, g, &tol).unwrap().min_eig)
        })
    });
    group.bench_with_input(BenchmarkId::new("pmap_seq", subsets.len()), &t, |b, t| {
        b.iter(|| {
            pmap_seq(subsets.clone(), |g| defect(t, g, &tol).unwrap().min_eig)
        })
    });
    group.finish();
}

/// Offset-block products `A^{k-} adj * A^{k+}`, the map inside window Gram
/// assembly.
fn bench_gram_blocks(c: &mut Criterion) {
    let dim = 96usize;
    let a = CMatrix::from_fn(dim, dim, |i, j| {
        let s = ((i * 131 + j * 17 + 3) % 101) as f64 / 101.0 - 0.5;
        num_complex::Complex64::new(s / dim as f64, -s / (2 * dim) as f64)
    });
    let m = 4i64;
    let mut powers: Vec<CMatrix> = vec![CMatrix::identity(dim)];
    for k in 1..=m as usize {
        powers.push(powers[k - 1].mul(&a));
    }
    let offsets: Vec<(i64, i64)> = (-m..=m).flat_map(|d1| (-m..=m).map(move |d2| (d1, d2))).collect();
    let work = |(d1, d2): (i64, i64)| -> f64 {
        let neg = &powers[(-d1).max(0) as usize].mul(&powers[(-d2).max(0) as usize]);
        let pos = &powers[d1.max(0) as usize].mul(&powers[d2.max(0) as usize]);
        neg.adjoint().mul(pos).frobenius()
    };
    let mut group = c.benchmark_group("gram_offset_blocks");
    group.sample_size(10);
    group.bench_function("pmap", |b| b.iter(|| pmap(offsets.clone(), work)));
    group.bench_function("pmap_seq", |b| b.iter(|| pmap_seq(offsets.clone(), work)));
    group.finish();
}

criterion_group!(benches, bench_defect_sweep, bench_gram_blocks);
criterion_main!(benches);
