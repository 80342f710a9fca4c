//! Finite pointed sphere metric spaces.
//!
//! A space is a finite set of points on a unit sphere, each at distance 1
//! from the implicit base point 0. Only squared distances are stored, as
//! exact rationals, so every inner product `1 - d²/2` is rational and
//! membership in the class (linear independence of the points) can be
//! decided exactly.

mod embed;
mod gram;
pub mod io;

pub use embed::{embed, EmbeddedSpace, DEFAULT_TOL};
pub use gram::{certify_membership, gram_from_distances, ExactLdlt, GramMatrix, Membership, Rejection};

use std::fmt;

use num_rational::BigRational;
use num_traits::{Signed, Zero};

use crate::error::{Error, Result};
use crate::rational::{int, to_f64};

/// An exact squared distance `d²` with `0 < d² < 4`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ScalarSquared(BigRational);

impl ScalarSquared {
    pub fn new(value: BigRational) -> Result<Self> {
        if is_valid_sq_dist(&value) {
            Ok(Self(value))
        } else {
            Err(Error::Malformed(format!(
                "squared distance {value} outside (0, 4)"
            )))
        }
    }

    pub fn from_ratio(numer: i64, denom: i64) -> Result<Self> {
        Self::new(crate::rational::ratio(numer, denom))
    }

    pub fn value(&self) -> &BigRational {
        &self.0
    }

    pub fn into_inner(self) -> BigRational {
        self.0
    }

    pub fn to_f64(&self) -> f64 {
        to_f64(&self.0)
    }
}

impl fmt::Display for ScalarSquared {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

pub(crate) fn is_valid_sq_dist(v: &BigRational) -> bool {
    v.is_positive() && *v < int(4)
}

/// Antipodal pairs (`d² = 4`) are realizable on the sphere and may appear in a
/// space; certification rejects them.
fn is_admissible_entry(v: &BigRational) -> bool {
    v.is_positive() && *v <= int(4)
}

/// Exact squared-distance matrix of a finite pointed sphere space.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SpaceDistances {
    labels: Vec<String>,
    sq: Vec<BigRational>,
}

impl SpaceDistances {
    /// Validates symmetry, a zero diagonal, and off-diagonal entries in (0, 4].
    pub fn new(labels: Vec<String>, rows: Vec<Vec<BigRational>>) -> Result<Self> {
        let n = labels.len();
        if rows.len() != n {
            return Err(Error::Malformed(format!(
                "{} labels but {} matrix rows",
                n,
                rows.len()
            )));
        }
        let mut sq = Vec::with_capacity(n * n);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != n {
                return Err(Error::Malformed(format!(
                    "row {i} has {} entries, expected {n}",
                    row.len()
                )));
            }
            sq.extend(row);
        }
        let space = Self { labels, sq };
        space.validate()?;
        Ok(space)
    }

    /// Labels default to `x0, x1, ...`.
    pub fn from_rows(rows: Vec<Vec<BigRational>>) -> Result<Self> {
        let labels = default_labels(rows.len());
        Self::new(labels, rows)
    }

    /// Matrix with every off-diagonal entry equal to `value`.
    pub fn uniform(n: usize, value: BigRational) -> Result<Self> {
        let rows = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| if i == j { BigRational::zero() } else { value.clone() })
                    .collect()
            })
            .collect();
        Self::from_rows(rows)
    }

    pub fn empty() -> Self {
        Self {
            labels: Vec::new(),
            sq: Vec::new(),
        }
    }

    fn validate(&self) -> Result<()> {
        let n = self.len();
        let mut seen = std::collections::HashSet::new();
        for l in &self.labels {
            if !seen.insert(l) {
                return Err(Error::Malformed(format!("duplicate label {l:?}")));
            }
        }
        for i in 0..n {
            if !self.sq_dist(i, i).is_zero() {
                return Err(Error::Malformed(format!("diagonal entry {i} is not 0")));
            }
            for j in (i + 1)..n {
                let a = self.sq_dist(i, j);
                if a != self.sq_dist(j, i) {
                    return Err(Error::Malformed(format!("entries ({i},{j}) and ({j},{i}) differ")));
                }
                if !is_admissible_entry(a) {
                    return Err(Error::Malformed(format!(
                        "entry ({i},{j}) = {a} outside (0, 4]"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn sq_dist(&self, i: usize, j: usize) -> &BigRational {
        &self.sq[i * self.len() + j]
    }

    pub fn rows(&self) -> Vec<Vec<BigRational>> {
        let n = self.len();
        (0..n).map(|i| self.sq[i * n..(i + 1) * n].to_vec()).collect()
    }

    pub fn check_index(&self, index: usize) -> Result<()> {
        if index < self.len() {
            Ok(())
        } else {
            Err(Error::IndexOutOfRange {
                index,
                len: self.len(),
            })
        }
    }

    /// Principal submatrix on `indices`, in the given order.
    pub fn restrict(&self, indices: &[usize]) -> Result<Self> {
        for &i in indices {
            self.check_index(i)?;
        }
        let labels = indices.iter().map(|&i| self.labels[i].clone()).collect();
        let rows = indices
            .iter()
            .map(|&i| indices.iter().map(|&j| self.sq_dist(i, j).clone()).collect())
            .collect();
        Self::new(labels, rows)
    }

    /// Appends one point with the given squared distances to the existing points.
    pub fn with_point(&self, label: impl Into<String>, dists: &[BigRational]) -> Result<Self> {
        let n = self.len();
        if dists.len() != n {
            return Err(Error::Malformed(format!(
                "new point has {} distances, expected {n}",
                dists.len()
            )));
        }
        let mut rows = self.rows();
        for (row, d) in rows.iter_mut().zip(dists) {
            row.push(d.clone());
        }
        let mut last = dists.to_vec();
        last.push(BigRational::zero());
        rows.push(last);
        let mut labels = self.labels.clone();
        labels.push(unique_label(&labels, label.into()));
        Self::new(labels, rows)
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.len() {
            return Err(Error::Malformed("label count mismatch".into()));
        }
        self.labels = labels;
        self.validate()?;
        Ok(self)
    }

    /// Squared distances as floats, row-major.
    pub fn to_f64_matrix(&self) -> Vec<f64> {
        self.sq.iter().map(to_f64).collect()
    }
}

pub(crate) fn default_labels(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("x{i}")).collect()
}

/// Returns `label`, or `label` with a numeric suffix if it is already taken.
pub(crate) fn unique_label(existing: &[String], label: String) -> String {
    if !existing.contains(&label) {
        return label;
    }
    (1..)
        .map(|k| format!("{label}_{k}"))
        .find(|l| !existing.contains(l))
        .expect("unbounded suffix search")
}

/// Index correspondence `domain[i] -> codomain[i]` between two spaces.
#[derive(Clone, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct PartialIsometry {
    pub domain: Vec<usize>,
    pub codomain: Vec<usize>,
}

impl PartialIsometry {
    pub fn new(domain: Vec<usize>, codomain: Vec<usize>) -> Result<Self> {
        if domain.len() != codomain.len() {
            return Err(Error::Malformed(format!(
                "domain has {} indices, codomain {}",
                domain.len(),
                codomain.len()
            )));
        }
        Ok(Self { domain, codomain })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            domain: (0..n).collect(),
            codomain: (0..n).collect(),
        }
    }

    /// Full permutation `i -> perm[i]`.
    pub fn permutation(perm: Vec<usize>) -> Self {
        Self {
            domain: (0..perm.len()).collect(),
            codomain: perm,
        }
    }

    pub fn len(&self) -> usize {
        self.domain.len()
    }

    pub fn is_empty(&self) -> bool {
        self.domain.is_empty()
    }

    /// The map as a permutation of `0..n`, if it is one.
    pub fn as_permutation(&self, n: usize) -> Option<Vec<usize>> {
        if self.len() != n {
            return None;
        }
        let mut perm = vec![usize::MAX; n];
        for (&d, &c) in self.domain.iter().zip(&self.codomain) {
            if d >= n || c >= n || perm[d] != usize::MAX {
                return None;
            }
            perm[d] = c;
        }
        let mut hit = vec![false; n];
        for &c in &perm {
            if std::mem::replace(&mut hit[c], true) {
                return None;
            }
        }
        Some(perm)
    }
}

/// True iff `map` preserves every squared distance exactly.
pub fn verify_isometry(a: &SpaceDistances, b: &SpaceDistances, map: &PartialIsometry) -> Result<bool> {
    if map.domain.len() != map.codomain.len() {
        return Err(Error::Malformed("domain and codomain lengths differ".into()));
    }
    for &i in &map.domain {
        a.check_index(i)?;
    }
    for &j in &map.codomain {
        b.check_index(j)?;
    }
    let m = map.len();
    for p in 0..m {
        for q in (p + 1)..m {
            let (i, k) = (map.domain[p], map.domain[q]);
            let (j, l) = (map.codomain[p], map.codomain[q]);
            if a.sq_dist(i, k) != b.sq_dist(j, l) {
                return Ok(false);
            }
        }
    }
    Ok(true)
}
