use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use num_rational::BigRational;

use sphere_fraisse::gaussian::orthant::orthant_3d_quadrature;
use sphere_fraisse::gaussian::{build_model, sample};
use sphere_fraisse::orders::order_distribution;
use sphere_fraisse::rational::{int, snap};
use sphere_fraisse::rng::{seeded, unit_vector, Normals};
use sphere_fraisse::{certify_membership, embed, SpaceDistances};

/// A certified space of `n` random unit vectors in `R^(n+2)`.
fn member(n: usize) -> SpaceDistances {
    let mut normals = Normals::new(seeded(n as u64));
    loop {
        let pts: Vec<Vec<f64>> = (0..n).map(|_| unit_vector(&mut normals, n + 2)).collect();
        let mut rows = vec![vec![BigRational::default(); n]; n];
        for i in 0..n {
            for j in (i + 1)..n {
                let d2: f64 = pts[i].iter().zip(&pts[j]).map(|(a, b)| (a - b) * (a - b)).sum();
                rows[i][j] = snap(d2, 30).unwrap();
                rows[j][i] = rows[i][j].clone();
            }
        }
        let space = SpaceDistances::from_rows(rows).unwrap();
        if certify_membership(&space).is_member() {
            return space;
        }
    }
}

fn certify(c: &mut Criterion) {
    let mut g = c.benchmark_group("certify");
    for n in [4, 8, 16, 32] {
        let space = member(n);
        g.bench_with_input(BenchmarkId::from_parameter(n), &space, |b, s| b.iter(|| certify_membership(s)));
    }
    g.finish();
    let space = member(32);
    c.bench_function("embed/32", |b| b.iter(|| embed(&space, 1e-9).unwrap()));
}

fn gaussian(c: &mut Criterion) {
    let model = build_model(&member(8), 0).unwrap();
    c.bench_function("sample/8x100k", |b| b.iter(|| sample(&model, 100_000)));
    let iso = SpaceDistances::from_rows(vec![
        vec![int(0), int(2), int(1)],
        vec![int(2), int(0), int(1)],
        vec![int(1), int(1), int(0)],
    ])
    .unwrap();
    let iso = build_model(&iso, 0).unwrap();
    c.bench_function("order_distribution/3x100k", |b| {
        b.iter(|| order_distribution(&iso, &[0, 1, 2], 100_000).unwrap())
    });
    let cov = [1.0, 0.3, -0.2, 0.3, 1.0, 0.4, -0.2, 0.4, 1.0];
    c.bench_function("orthant_3d_quadrature", |b| b.iter(|| orthant_3d_quadrature(&cov, 1e-9)));
}

criterion_group!(benches, certify, gaussian);
criterion_main!(benches);
