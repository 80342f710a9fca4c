//! Invariance of the Gaussian law under self-isometries of the space.

use serde::{Deserialize, Serialize};

use super::{streams, GaussianModel};
use crate::error::{Error, Result};
use crate::metric::{verify_isometry, PartialIsometry};
use crate::rng::stream;
use crate::stats::energy_test;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvarianceReport {
    pub permutation: Vec<usize>,
    /// `sigma[g(i)][g(j)] == sigma[i][j]` for all `i, j`, as rationals.
    pub exact_equal: bool,
    pub energy_statistic: f64,
    pub p_value: f64,
    pub n_samples: usize,
    pub permutations: usize,
    pub seed: u64,
}

/// Checks that the self-isometry `g` fixes the covariance exactly, and tests
/// the pushforward of fresh draws against the original law by an energy
/// permutation test on `samples` draws per side.
pub fn invariance_check(model: &GaussianModel, g: &PartialIsometry, samples: usize, permutations: usize) -> Result<InvarianceReport> {
    let n = model.len();
    let perm = g
        .as_permutation(n)
        .ok_or_else(|| Error::Precondition("map is not a permutation of the whole space".into()))?;
    if !verify_isometry(model.space(), model.space(), g)? {
        return Err(Error::Precondition("map is not an isometry of the space".into()));
    }
    let sigma = model.sigma();
    let exact_equal = (0..n).all(|i| (0..n).all(|j| sigma.entry(perm[i], perm[j]) == sigma.entry(i, j)));

    let x = model.map_blocks(samples, streams::SAMPLE, |d, _| d.to_vec()).concat();
    let y: Vec<f64> = model
        .map_blocks(samples, streams::ALT, |d, _| d.to_vec())
        .concat()
        .chunks(n.max(1))
        .flat_map(|row| perm.iter().map(|&p| row[p]).collect::<Vec<_>>())
        .collect();
    let mut rng = stream(model.seed(), streams::PERMUTE);
    let test = energy_test(&x, &y, n, permutations, &mut rng);
    Ok(InvarianceReport {
        permutation: perm,
        exact_equal,
        energy_statistic: test.statistic,
        p_value: test.p_value,
        n_samples: samples,
        permutations,
        seed: model.seed(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::build_model;
    use crate::metric::SpaceDistances;
    use crate::rational::{int, ratio};

    #[test]
    fn identity_passes() {
        let space = SpaceDistances::from_rows(vec![
            vec![int(0), int(1), ratio(1, 2)],
            vec![int(1), int(0), ratio(3, 2)],
            vec![ratio(1, 2), ratio(3, 2), int(0)],
        ])
        .unwrap();
        let m = build_model(&space, 2).unwrap();
        let r = invariance_check(&m, &PartialIsometry::identity(3), 300, 99).unwrap();
        assert!(r.exact_equal);
        assert!(r.p_value > 0.01, "{r:?}");
    }

    #[test]
    fn swap_on_equilateral_triangle() {
        let m = build_model(&SpaceDistances::uniform(3, int(1)).unwrap(), 2).unwrap();
        let r = invariance_check(&m, &PartialIsometry::permutation(vec![1, 0, 2]), 300, 99).unwrap();
        assert!(r.exact_equal);
        assert!(r.p_value > 0.01, "{r:?}");
    }

    #[test]
    fn swap_on_scalene_triangle_is_rejected() {
        let space = SpaceDistances::from_rows(vec![
            vec![int(0), int(1), ratio(1, 2)],
            vec![int(1), int(0), ratio(3, 2)],
            vec![ratio(1, 2), ratio(3, 2), int(0)],
        ])
        .unwrap();
        let m = build_model(&space, 2).unwrap();
        let err = invariance_check(&m, &PartialIsometry::permutation(vec![1, 0, 2]), 10, 9).unwrap_err();
        assert!(matches!(err, Error::Precondition(_)));
        let partial = PartialIsometry::new(vec![0], vec![0]).unwrap();
        assert!(invariance_check(&m, &partial, 10, 9).is_err());
    }

    #[test]
    fn a_non_invariant_push_forward_would_be_detected() {
        // Sanity check on the test's power: swapping two points of a scalene
        // pair of correlations changes the law, and the energy test sees it.
        let space = SpaceDistances::from_rows(vec![
            vec![int(0), ratio(1, 4), int(2)],
            vec![ratio(1, 4), int(0), int(2)],
            vec![int(2), int(2), int(0)],
        ])
        .unwrap();
        let m = build_model(&space, 2).unwrap();
        let n = 3;
        let x = m.map_blocks(400, streams::SAMPLE, |d, _| d.to_vec()).concat();
        let y: Vec<f64> = m
            .map_blocks(400, streams::ALT, |d, _| d.to_vec())
            .concat()
            .chunks(n)
            .flat_map(|r| [r[0], r[2], r[1]])
            .collect();
        let t = energy_test(&x, &y, n, 99, &mut stream(1, 1));
        assert!(t.p_value <= 0.01, "{t:?}");
    }
}
