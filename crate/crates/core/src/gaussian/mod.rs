//! The Gaussian field `(η_a)` indexed by a certified space, with covariance
//! `⟨a, b⟩` read off the exact Gram matrix.
//!
//! Sampling is split into fixed blocks of [`BLOCK_ROWS`] rows. Block `b` of a
//! draw set with stream base `s` uses the ChaCha stream `s + b` of the model
//! seed, so the output does not depend on the number of worker threads.

mod cylinder;
mod invariance;
mod mixing;
pub mod orthant;

use std::io::Write;

use num_rational::BigRational;
use num_traits::{Signed, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::{certify_membership, embed, GramMatrix, SpaceDistances};
use crate::rational::{serde_rational, to_f64};
use crate::rng::{stream, Normals};
use crate::stats::Estimate;

pub use cylinder::{cylinder_approximation_demo, Comparison, Constraint, CylinderApproximation, CylinderEvent};
pub use invariance::{invariance_check, InvarianceReport};
pub use mixing::{
    ergodicity_chain, kl_divergence, mixing_experiment, near_orthogonal_copy, near_orthogonal_copy_with,
    pinsker_bound, tv_estimate_2d, ErgodicityChain, MixingReport, MixingRow, NearOrthogonalCopy,
};

pub const BLOCK_ROWS: usize = 1 << 14;

/// Maximum entrywise deviation of `chol·cholᵀ` from the covariance.
pub const CHOL_TOL: f64 = 1e-10;

/// Stream bases keeping independent draw sets of one model apart.
pub mod streams {
    pub const SAMPLE: u64 = 0;
    pub const ALT: u64 = 1 << 32;
    pub const FIT: u64 = 2 << 32;
    pub const EVAL: u64 = 3 << 32;
    pub const PERMUTE: u64 = 4 << 32;
}

#[derive(Clone, Debug)]
pub struct GaussianModel {
    space: SpaceDistances,
    sigma: GramMatrix,
    chol: Vec<f64>,
    seed: u64,
}

pub fn build_model(space: &SpaceDistances, seed: u64) -> Result<GaussianModel> {
    let sigma = certify_membership(space).into_result()?;
    let n = space.len();
    let chol = embed(space, crate::metric::DEFAULT_TOL)?.coords().to_vec();
    let cov = sigma.to_f64_matrix();
    for i in 0..n {
        for j in 0..=i {
            let v: f64 = (0..=j).map(|k| chol[i * n + k] * chol[j * n + k]).sum();
            let err = (v - cov[i * n + j]).abs();
            if err > CHOL_TOL {
                return Err(Error::IllConditioned(format!(
                    "float factor misses covariance entry ({i},{j}) by {err:.3e}"
                )));
            }
        }
    }
    Ok(GaussianModel {
        space: space.clone(),
        sigma,
        chol,
        seed,
    })
}

impl GaussianModel {
    pub fn len(&self) -> usize {
        self.space.len()
    }

    pub fn is_empty(&self) -> bool {
        self.space.is_empty()
    }

    pub fn space(&self) -> &SpaceDistances {
        &self.space
    }

    pub fn sigma(&self) -> &GramMatrix {
        &self.sigma
    }

    /// Row-major lower-triangular factor.
    pub fn chol(&self) -> &[f64] {
        &self.chol
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    fn draw_block(&self, stream_id: u64, rows: usize) -> Vec<f64> {
        let n = self.len();
        let mut normals = Normals::new(stream(self.seed, stream_id));
        let mut z = vec![0.0; n];
        let mut out = vec![0.0; rows * n];
        for row in out.chunks_mut(n.max(1)).take(rows) {
            normals.fill(&mut z);
            for (i, v) in row.iter_mut().enumerate() {
                let l = &self.chol[i * n..i * n + i + 1];
                *v = l.iter().zip(&z).map(|(a, b)| a * b).sum();
            }
        }
        out
    }

    /// Applies `f` to each block of `count` draws (row-major, `len()` columns)
    /// in parallel and returns the per-block results in block order.
    pub fn map_blocks<T, F>(&self, count: usize, stream_base: u64, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(&[f64], usize) -> T + Sync,
    {
        let blocks = count.div_ceil(BLOCK_ROWS);
        (0..blocks)
            .into_par_iter()
            .map(|b| {
                let rows = BLOCK_ROWS.min(count - b * BLOCK_ROWS);
                let data = self.draw_block(stream_base + b as u64, rows);
                f(&data, rows)
            })
            .collect()
    }

    /// Monte Carlo probability of `event` from `count` draws.
    pub fn probability<F>(&self, count: usize, stream_base: u64, event: F) -> Estimate
    where
        F: Fn(&[f64]) -> bool + Sync,
    {
        let n = self.len().max(1);
        let hits: u64 = self
            .map_blocks(count, stream_base, |data, rows| {
                data.chunks(n).take(rows).filter(|r| event(r)).count() as u64
            })
            .into_iter()
            .sum();
        Estimate::proportion(hits, count as u64, self.seed)
    }

    /// Empirical covariance `E[η_i η_j]` and Pearson correlation for each pair.
    pub fn pair_statistics(&self, count: usize, stream_base: u64, pairs: &[(usize, usize)]) -> Result<Vec<PairStatistics>> {
        for &(i, j) in pairs {
            self.space.check_index(i)?;
            self.space.check_index(j)?;
        }
        let n = self.len();
        // Per pair: Σx, Σy, Σx², Σy², Σxy, Σ(xy)².
        let blocks = self.map_blocks(count, stream_base, |data, rows| {
            let mut acc = vec![[0.0f64; 6]; pairs.len()];
            for r in data.chunks(n.max(1)).take(rows) {
                for (a, &(i, j)) in acc.iter_mut().zip(pairs) {
                    let (x, y) = (r[i], r[j]);
                    let xy = x * y;
                    a[0] += x;
                    a[1] += y;
                    a[2] += x * x;
                    a[3] += y * y;
                    a[4] += xy;
                    a[5] += xy * xy;
                }
            }
            acc
        });
        let mut total = vec![[0.0f64; 6]; pairs.len()];
        for block in blocks {
            for (t, b) in total.iter_mut().zip(block) {
                for k in 0..6 {
                    t[k] += b[k];
                }
            }
        }
        let m = count as f64;
        Ok(pairs
            .iter()
            .zip(total)
            .map(|(&(i, j), s)| {
                let covariance = Estimate::from_moments(s[4], s[5], count as u64, self.seed);
                let (mx, my) = (s[0] / m, s[1] / m);
                let sxy = s[4] / m - mx * my;
                let sxx = s[2] / m - mx * mx;
                let syy = s[3] / m - my * my;
                let r = sxy / (sxx * syy).sqrt();
                PairStatistics {
                    pair: (i, j),
                    exact: to_f64(self.sigma.entry(i, j)),
                    covariance,
                    correlation: Estimate {
                        value: r,
                        std_error: (1.0 - r * r) / m.sqrt(),
                        n_samples: count as u64,
                        seed: self.seed,
                    },
                }
            })
            .collect())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairStatistics {
    pub pair: (usize, usize),
    pub exact: f64,
    pub covariance: Estimate,
    pub correlation: Estimate,
}

/// A block of draws, one row per sample.
#[derive(Clone, Debug, PartialEq)]
pub struct Samples {
    pub labels: Vec<String>,
    pub count: usize,
    pub data: Vec<f64>,
}

impl Samples {
    pub fn dim(&self) -> usize {
        self.labels.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.dim();
        &self.data[i * n..(i + 1) * n]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.count).map(|i| self.row(i)[j]).collect()
    }

    /// CSV with a header of point labels and shortest round-trip floats.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
        w.write_record(&self.labels).map_err(csv_err)?;
        for i in 0..self.count {
            w.write_record(self.row(i).iter().map(|v| v.to_string())).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `count` i.i.d. draws of `N(0, sigma)`; deterministic in the model seed.
pub fn sample(model: &GaussianModel, count: usize) -> Samples {
    let data = model.map_blocks(count, streams::SAMPLE, |d, _| d.to_vec()).concat();
    Samples {
        labels: model.space.labels().to_vec(),
        count,
        data,
    }
}

/// A pair with nonzero exact correlation: under any i.i.d. product measure
/// distinct coordinates would be uncorrelated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NonProductWitness {
    pub pair: (usize, usize),
    pub labels: (String, String),
    #[serde(with = "serde_rational")]
    pub exact: BigRational,
    pub exact_f64: f64,
    pub empirical: Estimate,
    /// 95% normal-approximation interval for the empirical correlation.
    pub ci: (f64, f64),
}

/// Pair of maximal exact `|correlation|`; `None` when every pair is orthogonal.
pub fn nonproduct_witness(model: &GaussianModel, samples: usize) -> Result<Option<NonProductWitness>> {
    let n = model.len();
    if n < 2 {
        return Err(Error::Precondition("a correlation witness needs at least two points".into()));
    }
    let mut best: Option<(usize, usize)> = None;
    for i in 0..n {
        for j in (i + 1)..n {
            let v = model.sigma.entry(i, j).abs();
            if v.is_zero() {
                continue;
            }
            if best.is_none_or(|(a, b)| v > model.sigma.entry(a, b).abs()) {
                best = Some((i, j));
            }
        }
    }
    let Some((i, j)) = best else {
        return Ok(None);
    };
    let stats = model.pair_statistics(samples, streams::SAMPLE, &[(i, j)])?;
    let empirical = stats[0].correlation;
    let exact = model.sigma.entry(i, j).clone();
    let labels = model.space.labels();
    Ok(Some(NonProductWitness {
        pair: (i, j),
        labels: (labels[i].clone(), labels[j].clone()),
        exact_f64: to_f64(&exact),
        exact,
        empirical,
        ci: (
            empirical.value - 1.96 * empirical.std_error,
            empirical.value + 1.96 * empirical.std_error,
        ),
    }))
}
