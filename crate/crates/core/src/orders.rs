//! The random linear order obtained by sorting the Gaussian values.
//!
//! An ordering of `k` chosen points is written as a string of 1-based
//! positions into the chosen index list: `"132"` is the event
//! `η[p1] < η[p3] < η[p2]` where `p1, p2, p3` are the chosen points in order.
//! Orderings are enumerated lexicographically.

use std::collections::BTreeMap;
use std::fmt;

use num_rational::BigRational;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::orthant::{orthant_3d_quadrature, sheppard};
use crate::gaussian::{streams, GaussianModel};
use crate::metric::io::space_hash;
use crate::rational::to_f64;
use crate::stats::{chi_square, ChiSquareResult, Estimate};

pub const MAX_K: usize = 8;

/// Ties above this rate per million draws mark the distribution as suspect.
pub const TIE_LIMIT_PER_MILLION: f64 = 10.0;

/// Absolute tolerance requested from the `k = 4` quadrature.
pub const QUADRATURE_TOL: f64 = 1e-9;

fn factorial(k: usize) -> usize {
    (1..=k).product()
}

/// Lexicographic rank of a permutation of `0..k`.
fn rank(perm: &[usize]) -> usize {
    let k = perm.len();
    let mut r = 0;
    for i in 0..k {
        let smaller = perm[i + 1..].iter().filter(|&&p| p < perm[i]).count();
        r += smaller * factorial(k - 1 - i);
    }
    r
}

/// All permutations of `0..k` in lexicographic order.
pub fn permutations(k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::with_capacity(factorial(k));
    let mut p: Vec<usize> = (0..k).collect();
    loop {
        out.push(p.clone());
        // Next permutation in lexicographic order.
        let Some(i) = (1..k).rev().find(|&i| p[i - 1] < p[i]) else {
            return out;
        };
        let j = (i..k).rev().find(|&j| p[j] > p[i - 1]).expect("pivot has a successor");
        p.swap(i - 1, j);
        p[i..].reverse();
    }
}

pub fn perm_key(perm: &[usize]) -> String {
    perm.iter().map(|&p| char::from_digit(p as u32 + 1, 10).expect("k <= 8")).collect()
}

/// Inverse of [`perm_key`].
pub fn parse_perm_key(key: &str, k: usize) -> Result<Vec<usize>> {
    let perm: Vec<usize> = key
        .chars()
        .map(|c| c.to_digit(10).map(|d| d as usize).filter(|&d| d >= 1 && d <= k).map(|d| d - 1))
        .collect::<Option<_>>()
        .ok_or_else(|| Error::Malformed(format!("ordering {key:?} is not over 1..{k}")))?;
    let mut seen = vec![false; k];
    for &p in &perm {
        if std::mem::replace(&mut seen[p], true) {
            return Err(Error::Malformed(format!("ordering {key:?} repeats a position")));
        }
    }
    if perm.len() != k {
        return Err(Error::Malformed(format!("ordering {key:?} has length {} not {k}", perm.len())));
    }
    Ok(perm)
}

fn check_indices(model: &GaussianModel, indices: &[usize]) -> Result<()> {
    if indices.is_empty() || indices.len() > MAX_K {
        return Err(Error::Precondition(format!(
            "order statistics need 1..={MAX_K} points, got {}",
            indices.len()
        )));
    }
    for (a, &i) in indices.iter().enumerate() {
        model.space().check_index(i)?;
        if indices[..a].contains(&i) {
            return Err(Error::Precondition(format!("index {i} chosen twice")));
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct OrderDistribution {
    pub indices: Vec<usize>,
    pub labels: Vec<String>,
    /// Counts per ordering, lexicographic.
    pub counts: Vec<u64>,
    pub n_samples: usize,
    pub seed: u64,
    pub ties: u64,
    pub space_hash: String,
}

impl OrderDistribution {
    pub fn k(&self) -> usize {
        self.indices.len()
    }

    pub fn keys(&self) -> Vec<String> {
        permutations(self.k()).iter().map(|p| perm_key(p)).collect()
    }

    pub fn estimate(&self, perm: &[usize]) -> Estimate {
        Estimate::proportion(self.counts[rank(perm)], self.n_samples as u64, self.seed)
    }

    pub fn estimates(&self) -> Vec<(String, Estimate)> {
        permutations(self.k())
            .iter()
            .map(|p| (perm_key(p), self.estimate(p)))
            .collect()
    }

    pub fn tie_flag(&self) -> bool {
        self.n_samples > 0 && self.ties as f64 * 1e6 / self.n_samples as f64 > TIE_LIMIT_PER_MILLION
    }

    pub fn report(&self) -> OrderReport {
        OrderReport {
            k: self.k(),
            indices: self.indices.clone(),
            labels: self.labels.clone(),
            n_samples: self.n_samples,
            seed: self.seed,
            space_hash: self.space_hash.clone(),
            ties: self.ties,
            tie_flag: self.tie_flag(),
            probs: self
                .estimates()
                .into_iter()
                .map(|(key, e)| {
                    (
                        key,
                        OrderCell {
                            estimate: e.value,
                            std_error: e.std_error,
                        },
                    )
                })
                .collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrderCell {
    pub estimate: f64,
    pub std_error: f64,
}

/// Serialized form of an [`OrderDistribution`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrderReport {
    pub k: usize,
    pub indices: Vec<usize>,
    pub labels: Vec<String>,
    pub n_samples: usize,
    pub seed: u64,
    pub space_hash: String,
    pub ties: u64,
    pub tie_flag: bool,
    pub probs: BTreeMap<String, OrderCell>,
}

/// Empirical frequencies of the `k!` orderings of `η` at `indices`. Exact
/// float ties are broken by position and counted.
pub fn order_distribution(model: &GaussianModel, indices: &[usize], n_samples: usize) -> Result<OrderDistribution> {
    check_indices(model, indices)?;
    let k = indices.len();
    let n = model.len();
    let cells = factorial(k);
    let blocks = model.map_blocks(n_samples, streams::SAMPLE, |data, rows| {
        let mut counts = vec![0u64; cells];
        let mut ties = 0u64;
        let mut perm: Vec<usize> = Vec::with_capacity(k);
        for r in data.chunks(n).take(rows) {
            perm.clear();
            perm.extend(0..k);
            perm.sort_by(|&a, &b| r[indices[a]].total_cmp(&r[indices[b]]).then(a.cmp(&b)));
            if perm.windows(2).any(|w| r[indices[w[0]]] == r[indices[w[1]]]) {
                ties += 1;
            }
            counts[rank(&perm)] += 1;
        }
        (counts, ties)
    });
    let mut counts = vec![0u64; cells];
    let mut ties = 0;
    for (c, t) in blocks {
        counts.iter_mut().zip(c).for_each(|(a, b)| *a += b);
        ties += t;
    }
    let labels = indices.iter().map(|&i| model.space().labels()[i].clone()).collect();
    Ok(OrderDistribution {
        indices: indices.to_vec(),
        labels,
        counts,
        n_samples,
        seed: model.seed(),
        ties,
        space_hash: space_hash(model.space()),
    })
}

/// Covariance of the consecutive differences `η[a_{m+1}] − η[a_m]` along the
/// ordering, as exact rationals.
fn difference_covariance(model: &GaussianModel, points: &[usize]) -> Vec<BigRational> {
    let g = |i: usize, j: usize| model.sigma().entry(points[i], points[j]).clone();
    let m = points.len() - 1;
    let mut cov = Vec::with_capacity(m * m);
    for a in 0..m {
        for b in 0..m {
            cov.push(g(a + 1, b + 1) - g(a + 1, b) - g(a, b + 1) + g(a, b));
        }
    }
    cov
}

/// Probability of one ordering: `k = 1, 2` trivially, `k = 3` by Sheppard's
/// formula on the two differences, `k = 4` by quadrature.
pub fn ordering_prob_exact(model: &GaussianModel, indices: &[usize], perm: &[usize]) -> Result<f64> {
    check_indices(model, indices)?;
    let k = indices.len();
    if perm.len() != k || {
        let mut s = perm.to_vec();
        s.sort_unstable();
        s != (0..k).collect::<Vec<_>>()
    } {
        return Err(Error::Precondition(format!("{perm:?} is not a permutation of 0..{k}")));
    }
    let points: Vec<usize> = perm.iter().map(|&p| indices[p]).collect();
    match k {
        1 => Ok(1.0),
        2 => Ok(0.5),
        3 => {
            let c: Vec<f64> = difference_covariance(model, &points).iter().map(to_f64).collect();
            Ok(sheppard(c[1] / (c[0] * c[3]).sqrt()))
        }
        4 => {
            let c: Vec<f64> = difference_covariance(model, &points).iter().map(to_f64).collect();
            let cov: [f64; 9] = c.try_into().expect("3x3 covariance");
            orthant_3d_quadrature(&cov, QUADRATURE_TOL)
                .ok_or_else(|| Error::IllConditioned("difference covariance is singular in floats".into()))
        }
        _ => Err(Error::Precondition(format!("no exact path for k = {k}; use order_distribution"))),
    }
}

/// Exact probabilities of all orderings, lexicographic, for `k ≤ 4`.
pub fn exact_distribution(model: &GaussianModel, indices: &[usize]) -> Result<Vec<(String, f64)>> {
    permutations(indices.len())
        .iter()
        .map(|p| Ok((perm_key(p), ordering_prob_exact(model, indices, p)?)))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UniformityVerdict {
    /// `k = 1`: a single ordering, nothing to test.
    Degenerate,
    /// `p < 1e-3`.
    RejectUniform,
    /// `1e-3 ≤ p ≤ 0.01`.
    Inconclusive,
    /// `p > 0.01`.
    NoEvidence,
}

impl fmt::Display for UniformityVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Degenerate => "degenerate (k = 1, single ordering)",
            Self::RejectUniform => "REJECT uniform (p < 1e-3)",
            Self::Inconclusive => "inconclusive (1e-3 <= p <= 0.01)",
            Self::NoEvidence => "no evidence against uniform",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UniformityTest {
    pub chi_square: ChiSquareResult,
    pub verdict: UniformityVerdict,
}

/// Chi-square test of the counts against the uniform law on `k!` orderings;
/// every expected count must be at least 5.
pub fn uniformity_test(dist: &OrderDistribution) -> Result<UniformityTest> {
    let cells = dist.counts.len();
    let probs = vec![1.0 / cells as f64; cells];
    let chi = chi_square(&dist.counts, &probs, 5.0)?;
    let verdict = if cells <= 1 {
        UniformityVerdict::Degenerate
    } else if chi.p_value < 1e-3 {
        UniformityVerdict::RejectUniform
    } else if chi.p_value <= 0.01 {
        UniformityVerdict::Inconclusive
    } else {
        UniformityVerdict::NoEvidence
    };
    Ok(UniformityTest { chi_square: chi, verdict })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FullSupportReport {
    pub all_observed: bool,
    /// Orderings never seen; suspicious at a feasible sample size.
    pub zero_cells: Vec<String>,
    /// Exact probabilities where an exact path exists (`k ≤ 4`).
    pub exact: Option<BTreeMap<String, f64>>,
    pub exact_all_positive: Option<bool>,
}

impl FullSupportReport {
    pub fn supported(&self) -> bool {
        self.all_observed && self.exact_all_positive != Some(false)
    }
}

pub fn full_support_check(dist: &OrderDistribution, model: &GaussianModel) -> Result<FullSupportReport> {
    let zero_cells: Vec<String> = dist
        .estimates()
        .into_iter()
        .filter(|(_, e)| e.value == 0.0)
        .map(|(k, _)| k)
        .collect();
    let exact = if dist.k() <= 4 {
        Some(exact_distribution(model, &dist.indices)?.into_iter().collect::<BTreeMap<_, _>>())
    } else {
        None
    };
    Ok(FullSupportReport {
        all_observed: zero_cells.is_empty(),
        zero_cells,
        exact_all_positive: exact.as_ref().map(|m| m.values().all(|&p| p > 0.0)),
        exact,
    })
}
