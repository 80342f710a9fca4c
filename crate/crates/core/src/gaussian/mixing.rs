//! Near-orthogonal copies and the mixing estimates `μ(B ∩ g B) → μ(B)²`.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use super::{build_model, CylinderEvent, GaussianModel};
use crate::error::{Error, Result};
use crate::metric::io::space_hash;
use crate::metric::{certify_membership, unique_label, PartialIsometry, SpaceDistances};
use crate::rational::{int, serde_rational, to_f64};
use crate::stats::Estimate;

/// An exactly isometric copy `z` of a space `x` with `⟨x_i, z_j⟩ = c·⟨x_i, x_j⟩`.
///
/// The combined Gram matrix is `[[1, c], [c, 1]] ⊗ G`, positive definite
/// whenever `G` is and `|c| < 1`, so every cross inner product is bounded by
/// `|c|` and all entries stay rational.
#[derive(Clone, Debug)]
pub struct NearOrthogonalCopy {
    pub copy: SpaceDistances,
    /// Original points at `0..n`, copy at `n..2n`.
    pub combined: SpaceDistances,
    /// `i ↦ n + i` inside `combined`.
    pub map: PartialIsometry,
    pub cross: BigRational,
    /// `max |⟨x_i, z_j⟩|`, checked to be at most `|cross|`.
    pub max_cross_inner: BigRational,
}

/// Copy with cross inner products bounded by `1/k` (`c = 1/k`, or an exactly
/// orthogonal copy for `k = 1`).
pub fn near_orthogonal_copy(space: &SpaceDistances, k: u64) -> Result<NearOrthogonalCopy> {
    let c = match k {
        0 => return Err(Error::Precondition("k must be at least 1".into())),
        1 => BigRational::zero(),
        _ => BigRational::new(1.into(), k.into()),
    };
    near_orthogonal_copy_with(space, &c)
}

pub fn near_orthogonal_copy_with(space: &SpaceDistances, c: &BigRational) -> Result<NearOrthogonalCopy> {
    if c.abs() >= BigRational::one() {
        return Err(Error::Precondition(format!("cross coefficient {c} must satisfy |c| < 1")));
    }
    let gram = certify_membership(space).into_result()?;
    let n = space.len();
    let mut labels = space.labels().to_vec();
    let mut copy_labels = Vec::with_capacity(n);
    for l in space.labels() {
        let l = unique_label(&labels, format!("{l}'"));
        labels.push(l.clone());
        copy_labels.push(l);
    }
    let two = int(2);
    let mut max_cross = BigRational::zero();
    let mut rows = vec![vec![BigRational::zero(); 2 * n]; 2 * n];
    for i in 0..n {
        for j in 0..n {
            let d = space.sq_dist(i, j).clone();
            rows[i][j] = d.clone();
            rows[n + i][n + j] = d;
            let inner = c * gram.entry(i, j);
            let cross = &two - &two * &inner;
            rows[i][n + j] = cross.clone();
            rows[n + j][i] = cross;
            if inner.abs() > max_cross {
                max_cross = inner.abs();
            }
        }
    }
    debug_assert!(max_cross <= c.abs());
    let combined = SpaceDistances::new(labels, rows)?;
    certify_membership(&combined).into_result()?;
    Ok(NearOrthogonalCopy {
        copy: space.clone().with_labels(copy_labels)?,
        combined,
        map: PartialIsometry::new((0..n).collect(), (n..2 * n).collect())?,
        cross: c.clone(),
        max_cross_inner: max_cross,
    })
}

/// `KL(N(0, joint) ‖ N(0, product))` for `dim × dim` row-major covariances:
/// `½(tr(Σp⁻¹Σj) − dim + ln(det Σp / det Σj))`.
pub fn kl_divergence(joint: &[f64], product: &[f64], dim: usize) -> Result<f64> {
    let sj = DMatrix::from_row_slice(dim, dim, joint);
    let sp = DMatrix::from_row_slice(dim, dim, product);
    let not_pd = |what: &str| Error::IllConditioned(format!("{what} covariance not positive definite in floats"));
    let cj = sj.clone().cholesky().ok_or_else(|| not_pd("joint"))?;
    let cp = sp.cholesky().ok_or_else(|| not_pd("product"))?;
    let log_det = |l: &DMatrix<f64>| 2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let trace = cp.solve(&sj).trace();
    let kl = 0.5 * (trace - dim as f64 + log_det(&cp.l()) - log_det(&cj.l()));
    Ok(kl.max(0.0))
}

pub fn pinsker_bound(kl: f64) -> f64 {
    (kl / 2.0).sqrt()
}

/// Total variation between the standard bivariate normal with correlation
/// `r` and the independent one, by the midpoint rule on `[-8, 8]²`.
pub fn tv_estimate_2d(r: f64) -> f64 {
    if r == 0.0 {
        return 0.0;
    }
    let cells = 800;
    let h = 16.0 / cells as f64;
    let det = 1.0 - r * r;
    let norm_r = 1.0 / (2.0 * PI * det.sqrt());
    let norm_0 = 1.0 / (2.0 * PI);
    let mut sum = 0.0;
    for a in 0..cells {
        let x = -8.0 + (a as f64 + 0.5) * h;
        for b in 0..cells {
            let y = -8.0 + (b as f64 + 0.5) * h;
            let pr = norm_r * (-(x * x - 2.0 * r * x * y + y * y) / (2.0 * det)).exp();
            let p0 = norm_0 * (-(x * x + y * y) / 2.0).exp();
            sum += (pr - p0).abs();
        }
    }
    0.5 * sum * h * h
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixingRow {
    pub k: u64,
    #[serde(with = "serde_rational")]
    pub cross_inner: BigRational,
    pub cross_inner_f64: f64,
    /// `μ(B ∩ g_k B)`.
    pub joint: Estimate,
    /// `μ(B)` on the original coordinates.
    pub marginal: Estimate,
    /// `μ(B)²` with a delta-method standard error.
    pub product: Estimate,
    pub kl: f64,
    pub tv_bound: f64,
    /// Largest TV over the 2D marginals `(η_{x_i}, η_{z_i})`, `i` in `B`.
    pub tv_estimate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixingReport {
    pub event: CylinderEvent,
    pub k_values: Vec<u64>,
    pub rows: Vec<MixingRow>,
    pub n_samples: usize,
    pub seed: u64,
    pub space_hash: String,
}

impl MixingReport {
    /// `k,joint,product,kl,tv_bound` with one row per `k`.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
        w.write_record(["k", "joint", "product", "kl", "tv_bound"]).map_err(csv_err)?;
        for r in &self.rows {
            w.write_record([
                r.k.to_string(),
                r.joint.value.to_string(),
                r.product.value.to_string(),
                r.kl.to_string(),
                r.tv_bound.to_string(),
            ])
            .map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

/// Joint, marginal and product estimates for `event` and its image under the
/// copy map, from one set of draws on the combined space.
fn mixing_counts(model: &GaussianModel, n: usize, event: &CylinderEvent, samples: usize) -> (Estimate, Estimate, Estimate) {
    let first = event.predicate();
    let second = event.shifted(n).predicate();
    let dim = 2 * n;
    let counts = model.map_blocks(samples, super::streams::SAMPLE, |data, rows| {
        let (mut b, mut both) = (0u64, 0u64);
        for r in data.chunks(dim).take(rows) {
            let in_b = first(r);
            b += in_b as u64;
            both += (in_b && second(r)) as u64;
        }
        (b, both)
    });
    let (b, both) = counts.into_iter().fold((0, 0), |acc, x| (acc.0 + x.0, acc.1 + x.1));
    let seed = model.seed();
    let marginal = Estimate::proportion(b, samples as u64, seed);
    let joint = Estimate::proportion(both, samples as u64, seed);
    let product = Estimate {
        value: marginal.value * marginal.value,
        std_error: 2.0 * marginal.value * marginal.std_error,
        n_samples: samples as u64,
        seed,
    };
    (joint, marginal, product)
}

pub fn mixing_experiment(
    space: &SpaceDistances,
    event: &CylinderEvent,
    k_values: &[u64],
    samples: usize,
    seed: u64,
) -> Result<MixingReport> {
    let n = space.len();
    if n == 0 {
        return Err(Error::Precondition("mixing needs a nonempty space".into()));
    }
    event.check_within(n)?;
    let mut rows = Vec::with_capacity(k_values.len());
    for &k in k_values {
        let copy = near_orthogonal_copy(space, k)?;
        let model = build_model(&copy.combined, seed)?;
        let (joint, marginal, product) = mixing_counts(&model, n, event, samples);

        let sigma = model.sigma().to_f64_matrix();
        let dim = 2 * n;
        let mut product_cov = sigma.clone();
        for i in 0..n {
            for j in 0..n {
                product_cov[i * dim + n + j] = 0.0;
                product_cov[(n + j) * dim + i] = 0.0;
            }
        }
        let kl = kl_divergence(&sigma, &product_cov, dim)?;
        let tv_estimate = event
            .point_indices()
            .into_iter()
            .map(|i| tv_estimate_2d(sigma[i * dim + n + i]))
            .fold(0.0, f64::max);
        rows.push(MixingRow {
            k,
            cross_inner_f64: to_f64(&copy.cross),
            cross_inner: copy.cross,
            joint,
            marginal,
            product,
            kl,
            tv_bound: pinsker_bound(kl),
            tv_estimate,
        });
    }
    Ok(MixingReport {
        event: event.clone(),
        k_values: k_values.to_vec(),
        rows,
        n_samples: samples,
        seed,
        space_hash: space_hash(space),
    })
}

/// Empirical instance of the chain
/// `|μ(A ∩ gA) − μ(A)²| ≤ 4ε + |μ(B ∩ gB) − μ(B)²|`
/// for an event `A` approximated by the cylinder `B`, where `ε` bounds both
/// `μ(A △ B)` and `μ(gA △ gB)`. All measures are empirical on one draw set,
/// so the inequality holds exactly; the report shows how tight it is.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErgodicityChain {
    pub epsilon: f64,
    pub mu_a: f64,
    pub mu_a_ga: f64,
    pub mu_b: f64,
    pub mu_b_gb: f64,
    pub discrepancy: f64,
    pub mixing_remainder: f64,
    pub bound: f64,
    pub holds: bool,
    pub n_samples: usize,
    pub seed: u64,
}

pub fn ergodicity_chain<A>(copy: &NearOrthogonalCopy, a: A, b: &CylinderEvent, samples: usize, seed: u64) -> Result<ErgodicityChain>
where
    A: Fn(&[f64]) -> bool + Sync,
{
    let n = copy.copy.len();
    if n == 0 {
        return Err(Error::Precondition("mixing needs a nonempty space".into()));
    }
    b.check_within(n)?;
    let model = build_model(&copy.combined, seed)?;
    let pb = b.predicate();
    // Counts: A, A∩gA, B, B∩gB, A△B, gA△gB.
    let blocks = model.map_blocks(samples, super::streams::SAMPLE, |data, rows| {
        let mut c = [0u64; 6];
        for r in data.chunks(2 * n).take(rows) {
            let (x, z) = r.split_at(n);
            let (ax, az, bx, bz) = (a(x), a(z), pb(x), pb(z));
            c[0] += ax as u64;
            c[1] += (ax && az) as u64;
            c[2] += bx as u64;
            c[3] += (bx && bz) as u64;
            c[4] += (ax != bx) as u64;
            c[5] += (az != bz) as u64;
        }
        c
    });
    let mut c = [0u64; 6];
    for blk in blocks {
        for (t, v) in c.iter_mut().zip(blk) {
            *t += v;
        }
    }
    let f = |v: u64| v as f64 / samples.max(1) as f64;
    let epsilon = f(c[4]).max(f(c[5]));
    let (mu_a, mu_a_ga, mu_b, mu_b_gb) = (f(c[0]), f(c[1]), f(c[2]), f(c[3]));
    let discrepancy = (mu_a_ga - mu_a * mu_a).abs();
    let mixing_remainder = (mu_b_gb - mu_b * mu_b).abs();
    let bound = 4.0 * epsilon + mixing_remainder;
    Ok(ErgodicityChain {
        epsilon,
        mu_a,
        mu_a_ga,
        mu_b,
        mu_b_gb,
        discrepancy,
        mixing_remainder,
        bound,
        holds: discrepancy <= bound + 1e-12,
        n_samples: samples,
        seed,
    })
}
