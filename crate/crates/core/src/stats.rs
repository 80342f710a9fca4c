//! Small statistical helpers shared by the Monte Carlo experiments.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// A Monte Carlo estimate with its provenance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
    pub n_samples: u64,
    pub seed: u64,
}

impl Estimate {
    /// Binomial proportion `hits / n` with standard error `√(p(1-p)/n)`.
    pub fn proportion(hits: u64, n: u64, seed: u64) -> Self {
        let p = if n == 0 { 0.0 } else { hits as f64 / n as f64 };
        let se = if n == 0 { f64::INFINITY } else { (p * (1.0 - p) / n as f64).sqrt() };
        Self {
            value: p,
            std_error: se,
            n_samples: n,
            seed,
        }
    }

    /// `|value - target| / std_error`; infinite when the error is zero but the
    /// values differ.
    pub fn z_score(&self, target: f64) -> f64 {
        let diff = (self.value - target).abs();
        if diff == 0.0 {
            0.0
        } else {
            diff / self.std_error
        }
    }

    pub fn within(&self, target: f64, sigmas: f64) -> bool {
        self.z_score(target) <= sigmas
    }

    /// Sample mean of `n` values from their sum and sum of squares, with the
    /// standard error of the mean.
    pub fn from_moments(sum: f64, sum_sq: f64, n: u64, seed: u64) -> Self {
        if n == 0 {
            return Self {
                value: 0.0,
                std_error: f64::INFINITY,
                n_samples: 0,
                seed,
            };
        }
        let nf = n as f64;
        let mean = sum / nf;
        let var = (sum_sq / nf - mean * mean).max(0.0);
        Self {
            value: mean,
            std_error: (var / nf).sqrt(),
            n_samples: n,
            seed,
        }
    }
}

/// Pearson chi-square goodness of fit against the given cell probabilities.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareResult {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
}

pub fn chi_square(counts: &[u64], expected_probs: &[f64], min_expected: f64) -> Result<ChiSquareResult> {
    assert_eq!(counts.len(), expected_probs.len());
    let total: u64 = counts.iter().sum();
    if counts.len() <= 1 {
        return Ok(ChiSquareResult {
            statistic: 0.0,
            df: 0,
            p_value: 1.0,
        });
    }
    let mut stat = 0.0;
    for (&c, &p) in counts.iter().zip(expected_probs) {
        let e = p * total as f64;
        if e < min_expected {
            return Err(Error::SampleTooSmall(format!(
                "expected count {e:.2} below {min_expected}"
            )));
        }
        stat += (c as f64 - e).powi(2) / e;
    }
    let df = counts.len() - 1;
    let dist = ChiSquared::new(df as f64).expect("positive degrees of freedom");
    Ok(ChiSquareResult {
        statistic: stat,
        df,
        p_value: dist.sf(stat),
    })
}

/// Standard normal upper tail `P(Z > x)`.
pub fn normal_sf(x: f64) -> f64 {
    Normal::standard().sf(x)
}

pub fn normal_cdf(x: f64) -> f64 {
    Normal::standard().cdf(x)
}

pub fn normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Sample Pearson correlation with the large-sample standard error
/// `(1 - r²)/√n`.
pub fn correlation(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    let r = sxy / (sxx * syy).sqrt();
    (r, (1.0 - r * r) / n.sqrt())
}

/// Two-sample energy statistic and its permutation p-value.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyTest {
    pub statistic: f64,
    pub p_value: f64,
    pub permutations: usize,
}

/// Energy-distance permutation test between row samples `x` and `y` of
/// dimension `dim` (row-major). The p-value is `(1 + #{E* >= E}) / (1 + P)`.
pub fn energy_test<R: Rng>(x: &[f64], y: &[f64], dim: usize, permutations: usize, rng: &mut R) -> EnergyTest {
    let (m1, m2) = if dim == 0 { (0, 0) } else { (x.len() / dim, y.len() / dim) };
    if m1 == 0 || m2 == 0 {
        return EnergyTest {
            statistic: 0.0,
            p_value: 1.0,
            permutations: 0,
        };
    }
    let pooled: Vec<&[f64]> = x.chunks(dim).chain(y.chunks(dim)).collect();
    let n = pooled.len();
    let mut dist = vec![0.0; n * n];
    let mut total = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let d = pooled[i]
                .iter()
                .zip(pooled[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            dist[i * n + j] = d;
            dist[j * n + i] = d;
            total += 2.0 * d;
        }
    }
    let statistic_of = |labels: &[usize]| {
        let (first, second) = labels.split_at(m1);
        let within = |set: &[usize]| {
            let mut s = 0.0;
            for (a, &i) in set.iter().enumerate() {
                for &j in &set[a + 1..] {
                    s += 2.0 * dist[i * n + j];
                }
            }
            s
        };
        let (sxx, syy) = (within(first), within(second));
        let sxy = 0.5 * (total - sxx - syy);
        let (f1, f2) = (m1 as f64, m2 as f64);
        2.0 * sxy / (f1 * f2) - sxx / (f1 * f1) - syy / (f2 * f2)
    };
    let mut labels: Vec<usize> = (0..n).collect();
    let observed = statistic_of(&labels);
    let mut exceed = 0usize;
    for _ in 0..permutations {
        labels.shuffle(rng);
        if statistic_of(&labels) >= observed {
            exceed += 1;
        }
    }
    EnergyTest {
        statistic: observed,
        p_value: (1 + exceed) as f64 / (1 + permutations) as f64,
        permutations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn proportion_error() {
        let e = Estimate::proportion(250, 1000, 0);
        assert_eq!(e.value, 0.25);
        assert!((e.std_error - (0.25f64 * 0.75 / 1000.0).sqrt()).abs() < 1e-15);
        assert!(e.within(0.26, 1.0));
        assert!(!e.within(0.3, 3.0));
    }

    #[test]
    fn chi_square_uniform_and_skewed() {
        let r = chi_square(&[100, 100, 100], &[1.0 / 3.0; 3], 5.0).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert!((r.p_value - 1.0).abs() < 1e-12);
        let r = chi_square(&[150, 100, 50], &[1.0 / 3.0; 3], 5.0).unwrap();
        // (50² + 0 + 50²)/100 = 50 on 2 df: p = exp(-25).
        assert!((r.statistic - 50.0).abs() < 1e-12);
        assert!((r.p_value - (-25.0f64).exp()).abs() < 1e-15);
        assert!(chi_square(&[1, 2], &[0.5, 0.5], 5.0).is_err());
        assert_eq!(chi_square(&[10], &[1.0], 5.0).unwrap().df, 0);
    }

    #[test]
    fn normal_helpers() {
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-15);
        assert!((normal_sf(1.96) - 0.024997895).abs() < 1e-8);
        assert!((normal_quantile(0.975) - 1.959963985).abs() < 1e-8);
    }

    #[test]
    fn moments_estimate() {
        let e = Estimate::from_moments(10.0, 30.0, 5, 1);
        // values with mean 2 and second moment 6: variance 2.
        assert_eq!(e.value, 2.0);
        assert!((e.std_error - (2.0f64 / 5.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn energy_test_separates_shifted_samples() {
        use crate::rng::{seeded, Normals};
        let mut normals = Normals::new(seeded(3));
        let mut x = vec![0.0; 400];
        let mut y = vec![0.0; 400];
        normals.fill(&mut x);
        normals.fill(&mut y);
        let mut rng = seeded(4);
        let same = energy_test(&x, &y, 2, 99, &mut rng);
        assert!(same.p_value > 0.01, "{same:?}");
        y.iter_mut().for_each(|v| *v += 1.0);
        let shifted = energy_test(&x, &y, 2, 99, &mut rng);
        assert_eq!(shifted.p_value, 0.01);
        assert!(shifted.statistic > same.statistic);
    }
}
