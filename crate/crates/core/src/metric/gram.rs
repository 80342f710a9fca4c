use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

use super::SpaceDistances;
use crate::error::{Error, Result};
use crate::rational::to_f64;

/// Exact inner-product matrix `g[i][j] = 1 - d²(i,j)/2`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GramMatrix {
    n: usize,
    g: Vec<BigRational>,
    factor: Option<ExactLdlt>,
}

impl GramMatrix {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn entry(&self, i: usize, j: usize) -> &BigRational {
        &self.g[i * self.n + j]
    }

    pub fn entries(&self) -> &[BigRational] {
        &self.g
    }

    pub fn to_f64_matrix(&self) -> Vec<f64> {
        self.g.iter().map(to_f64).collect()
    }

    /// LDLᵀ pivots, present once the matrix has been certified.
    pub fn pd_certificate(&self) -> Option<&[BigRational]> {
        self.factor.as_ref().map(|f| f.pivots())
    }

    pub fn factor(&self) -> Option<&ExactLdlt> {
        self.factor.as_ref()
    }

    /// Product of the pivots.
    pub fn determinant(&self) -> Option<BigRational> {
        self.pd_certificate()
            .map(|p| p.iter().fold(BigRational::one(), |acc, d| acc * d))
    }

    /// Rebuilds `L D Lᵀ` from the stored factor and compares entrywise.
    pub fn certificate_reproduces(&self) -> bool {
        match &self.factor {
            Some(f) => f.reconstruct() == self.g && f.pivots().iter().all(Signed::is_positive),
            None => false,
        }
    }
}

/// Polarization on the unit sphere. Never attaches a certificate.
pub fn gram_from_distances(space: &SpaceDistances) -> GramMatrix {
    let n = space.len();
    let half = BigRational::new(1.into(), 2.into());
    let mut g = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            g.push(BigRational::one() - space.sq_dist(i, j) * &half);
        }
    }
    GramMatrix { n, g, factor: None }
}

/// Unit lower-triangular `L` and diagonal `D` with `A = L D Lᵀ`, exact.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExactLdlt {
    n: usize,
    l: Vec<BigRational>,
    d: Vec<BigRational>,
}

impl ExactLdlt {
    /// Factorizes without pivoting. Stops at the first pivot that is not
    /// strictly positive and returns its index and the leading principal
    /// minor ending there.
    ///
    /// Runs fraction-free (Bareiss) elimination on `s·A`, with `s` the common
    /// denominator, so every intermediate is an integer minor and rationals
    /// are normalized only once per output entry.
    pub fn factorize(a: &[BigRational], n: usize) -> std::result::Result<Self, (usize, BigRational)> {
        assert_eq!(a.len(), n * n);
        let s = a.iter().fold(BigInt::one(), |acc, x| acc.lcm(x.denom()));
        // Lower triangle of the working matrix.
        let mut m: Vec<BigInt> = a.iter().map(|x| x.numer() * (&s / x.denom())).collect();
        let mut l = vec![BigRational::zero(); n * n];
        let mut d: Vec<BigRational> = Vec::with_capacity(n);
        // `prev` is the previous leading minor of `s·A`.
        let mut prev = BigInt::one();
        let mut s_pow = BigInt::one();
        for k in 0..n {
            let pivot = m[k * n + k].clone();
            s_pow *= &s;
            if !pivot.is_positive() {
                return Err((k, BigRational::new(pivot, s_pow)));
            }
            l[k * n + k] = BigRational::one();
            for i in (k + 1)..n {
                l[i * n + k] = BigRational::new(m[i * n + k].clone(), pivot.clone());
            }
            d.push(BigRational::new(pivot.clone(), &prev * &s));
            for i in (k + 1)..n {
                let mik = m[i * n + k].clone();
                for j in (k + 1)..=i {
                    let v = (&pivot * &m[i * n + j] - &mik * &m[j * n + k]) / &prev;
                    m[i * n + j] = v;
                }
            }
            prev = pivot;
        }
        Ok(Self { n, l, d })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn pivots(&self) -> &[BigRational] {
        &self.d
    }

    pub fn l(&self, i: usize, j: usize) -> &BigRational {
        &self.l[i * self.n + j]
    }

    pub fn reconstruct(&self) -> Vec<BigRational> {
        let n = self.n;
        let mut out = vec![BigRational::zero(); n * n];
        for i in 0..n {
            for j in 0..=i {
                let mut s = BigRational::zero();
                for k in 0..=j {
                    s += &self.l[i * n + k] * &self.d[k] * &self.l[j * n + k];
                }
                out[j * n + i] = s.clone();
                out[i * n + j] = s;
            }
        }
        out
    }

    /// Exact solution of `A x = b`.
    pub fn solve(&self, b: &[BigRational]) -> Vec<BigRational> {
        let n = self.n;
        assert_eq!(b.len(), n);
        let mut y = b.to_vec();
        for i in 0..n {
            for k in 0..i {
                let t = &self.l[i * n + k] * &y[k];
                y[i] -= t;
            }
        }
        for i in 0..n {
            y[i] /= &self.d[i];
        }
        for i in (0..n).rev() {
            for k in (i + 1)..n {
                let t = &self.l[k * n + i] * &y[k];
                y[i] -= t;
            }
        }
        y
    }
}

/// Why a space is not in the class.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rejection {
    /// First LDLᵀ pivot that is `<= 0`.
    pub pivot_index: usize,
    /// Leading principal minor of order `pivot_index + 1`.
    pub minor: BigRational,
    pub gram: GramMatrix,
}

impl Rejection {
    pub fn into_error(self) -> Error {
        Error::NotMember {
            pivot_index: self.pivot_index,
            minor: self.minor.to_string(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Membership {
    Member(GramMatrix),
    NonMember(Rejection),
}

impl Membership {
    pub fn is_member(&self) -> bool {
        matches!(self, Membership::Member(_))
    }

    pub fn into_result(self) -> Result<GramMatrix> {
        match self {
            Membership::Member(g) => Ok(g),
            Membership::NonMember(r) => Err(r.into_error()),
        }
    }
}

/// Decides exactly whether the points are linearly independent, i.e. whether
/// `(0, x_1, ..., x_n)` is affinely independent.
pub fn certify_membership(space: &SpaceDistances) -> Membership {
    let mut gram = gram_from_distances(space);
    match ExactLdlt::factorize(&gram.g, gram.n) {
        Ok(f) => {
            gram.factor = Some(f);
            Membership::Member(gram)
        }
        Err((pivot_index, minor)) => Membership::NonMember(Rejection {
            pivot_index,
            minor,
            gram,
        }),
    }
}
