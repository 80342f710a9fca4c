use super::{certify_membership, SpaceDistances};
use crate::error::{Error, Result};
use crate::rational::to_f64;

pub const DEFAULT_TOL: f64 = 1e-9;

/// Exact pivots below this are treated as float-degenerate.
const MIN_FLOAT_PIVOT: f64 = 1e-13;

/// Unit-sphere coordinates realizing a certified space.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddedSpace {
    n: usize,
    dim: usize,
    coords: Vec<f64>,
    tol: f64,
}

impl EmbeddedSpace {
    /// Wraps raw row-major coordinates; the caller vouches for the invariants.
    pub fn from_coords(n: usize, dim: usize, coords: Vec<f64>, tol: f64) -> Self {
        assert_eq!(coords.len(), n * dim);
        Self { n, dim, coords, tol }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks(self.dim.max(1)).take(self.n)
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    /// Same points with `extra` zero coordinates appended.
    pub fn padded(&self, extra: usize) -> Self {
        let dim = self.dim + extra;
        let mut coords = Vec::with_capacity(self.n * dim);
        for i in 0..self.n {
            coords.extend_from_slice(self.row(i));
            coords.extend(std::iter::repeat_n(0.0, extra));
        }
        Self::from_coords(self.n, dim, coords, self.tol)
    }

    /// Largest `|recomputed d² - exact d²|` over all pairs.
    pub fn max_sq_dist_error(&self, space: &SpaceDistances) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                let d = sq_dist(self.row(i), self.row(j));
                worst = worst.max((d - to_f64(space.sq_dist(i, j))).abs());
            }
        }
        worst
    }

    pub fn max_norm_error(&self) -> f64 {
        self.rows()
            .map(|r| (dot(r, r).sqrt() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Coordinates `L·√D` from the exact LDLᵀ factor: row `i` lives in the first
/// `i + 1` coordinates of R^n.
pub fn embed(space: &SpaceDistances, tol: f64) -> Result<EmbeddedSpace> {
    if !(tol > 0.0) {
        return Err(Error::Precondition(format!("tolerance must be positive, got {tol}")));
    }
    let gram = certify_membership(space).into_result()?;
    let factor = gram.factor().expect("certified gram carries its factor");
    let n = space.len();
    let mut scale = Vec::with_capacity(n);
    for (j, d) in factor.pivots().iter().enumerate() {
        let p = to_f64(d);
        if p < MIN_FLOAT_PIVOT {
            return Err(Error::IllConditioned(format!(
                "pivot {j} = {p:e} is below float resolution"
            )));
        }
        scale.push(p.sqrt());
    }
    let mut coords = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            coords[i * n + j] = to_f64(factor.l(i, j)) * scale[j];
        }
    }
    let embedded = EmbeddedSpace::from_coords(n, n, coords, tol);
    let err = embedded.max_sq_dist_error(space).max(embedded.max_norm_error());
    if err > tol {
        return Err(Error::IllConditioned(format!(
            "round-trip error {err:e} exceeds tolerance {tol:e}"
        )));
    }
    Ok(embedded)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::int;

    #[test]
    fn single_point() {
        let s = SpaceDistances::from_rows(vec![vec![int(0)]]).unwrap();
        let e = embed(&s, DEFAULT_TOL).unwrap();
        assert_eq!(e.coords(), &[1.0]);
    }

    #[test]
    fn orthonormal_pair() {
        let s = SpaceDistances::uniform(2, int(2)).unwrap();
        let e = embed(&s, DEFAULT_TOL).unwrap();
        assert!(dot(e.row(0), e.row(1)).abs() < 1e-15);
        assert!((sq_dist(e.row(0), e.row(1)) - 2.0).abs() < DEFAULT_TOL);
    }

    #[test]
    fn equilateral_round_trip() {
        let s = SpaceDistances::uniform(3, int(1)).unwrap();
        let e = embed(&s, DEFAULT_TOL).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.5 };
                assert!((dot(e.row(i), e.row(j)) - want).abs() < DEFAULT_TOL);
            }
        }
    }

    #[test]
    fn non_member_is_an_error() {
        let s = SpaceDistances::uniform(2, int(4)).unwrap();
        assert!(matches!(embed(&s, DEFAULT_TOL), Err(Error::NotMember { .. })));
    }

    #[test]
    fn padding_keeps_geometry() {
        let s = SpaceDistances::uniform(3, int(1)).unwrap();
        let e = embed(&s, DEFAULT_TOL).unwrap().padded(3);
        assert_eq!(e.dim(), 6);
        assert!(e.max_sq_dist_error(&s) < 1e-12);
    }
}
