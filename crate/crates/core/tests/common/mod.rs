#![allow(dead_code)]

use num_rational::BigRational;
use rand::Rng;
use sphere_fraisse::rational::{snap, to_f64};
use sphere_fraisse::rng::{seeded, unit_vector, Normals};
use sphere_fraisse::{certify_membership, SpaceDistances};

/// `n` random unit vectors of `R^dim` with squared distances snapped to
/// multiples of `2^-bits`; retried until the snapped space is certified.
pub fn random_member(seed: u64, n: usize, dim: usize, bits: u32) -> SpaceDistances {
    let mut normals = Normals::new(seeded(seed));
    loop {
        let pts: Vec<Vec<f64>> = (0..n).map(|_| unit_vector(&mut normals, dim)).collect();
        let mut rows = vec![vec![BigRational::default(); n]; n];
        let mut ok = true;
        for i in 0..n {
            for j in (i + 1)..n {
                let d2: f64 = pts[i].iter().zip(&pts[j]).map(|(a, b)| (a - b) * (a - b)).sum();
                let s = snap(d2, bits).unwrap();
                if to_f64(&s) <= 0.0 || to_f64(&s) >= 4.0 {
                    ok = false;
                }
                rows[i][j] = s.clone();
                rows[j][i] = s;
            }
        }
        if !ok {
            continue;
        }
        let space = SpaceDistances::from_rows(rows).unwrap();
        if certify_membership(&space).is_member() {
            return space;
        }
    }
}

/// A symmetric matrix of random squared distances in (0, 4) with small
/// denominators; often not a member.
pub fn random_matrix<R: Rng>(rng: &mut R, n: usize, denom: i64) -> SpaceDistances {
    let mut rows = vec![vec![BigRational::default(); n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let num = rng.random_range(1..4 * denom);
            let v = BigRational::new(num.into(), denom.into());
            rows[i][j] = v.clone();
            rows[j][i] = v;
        }
    }
    SpaceDistances::from_rows(rows).unwrap()
}

/// Eigenvalues of the float Gram matrix, ascending.
pub fn gram_eigenvalues(space: &SpaceDistances) -> Vec<f64> {
    let n = space.len();
    let g: Vec<f64> = space.to_f64_matrix().iter().map(|d| 1.0 - d / 2.0).collect();
    let m = nalgebra::DMatrix::from_row_slice(n, n, &g);
    let mut ev: Vec<f64> = m.symmetric_eigen().eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}
