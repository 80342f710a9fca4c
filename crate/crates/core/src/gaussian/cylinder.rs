//! Threshold cylinders and the greedy search approximating an arbitrary
//! event by one.

use std::fmt;
use std::str::FromStr;

use num_rational::BigRational;
use serde::{Deserialize, Serialize};

use super::{streams, GaussianModel};
use crate::error::{Error, Result};
use crate::rational::{ratio, serde_rational, to_f64};
use crate::stats::Estimate;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Comparison {
    Less,
    Greater,
}

/// `η[index] < threshold` or `η[index] > threshold`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Constraint {
    pub index: usize,
    pub cmp: Comparison,
    #[serde(with = "serde_rational")]
    pub threshold: BigRational,
}

/// A conjunction of threshold constraints; the empty conjunction is the
/// whole space.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CylinderEvent {
    pub constraints: Vec<Constraint>,
}

impl CylinderEvent {
    pub fn new(constraints: Vec<Constraint>) -> Self {
        Self { constraints }
    }

    /// `{η[index] > threshold}`.
    pub fn above(index: usize, threshold: BigRational) -> Self {
        Self::new(vec![Constraint {
            index,
            cmp: Comparison::Greater,
            threshold,
        }])
    }

    /// Sorted distinct coordinates the event depends on.
    pub fn point_indices(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.constraints.iter().map(|c| c.index).collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    pub fn check_within(&self, n: usize) -> Result<()> {
        match self.constraints.iter().find(|c| c.index >= n) {
            Some(c) => Err(Error::IndexOutOfRange { index: c.index, len: n }),
            None => Ok(()),
        }
    }

    /// The same event read on coordinates shifted by `offset`.
    pub fn shifted(&self, offset: usize) -> Self {
        Self::new(
            self.constraints
                .iter()
                .map(|c| Constraint {
                    index: c.index + offset,
                    ..c.clone()
                })
                .collect(),
        )
    }

    /// Float predicate with thresholds converted once.
    pub fn predicate(&self) -> impl Fn(&[f64]) -> bool + Sync + Send + use<> {
        let parts: Vec<(usize, Comparison, f64)> = self
            .constraints
            .iter()
            .map(|c| (c.index, c.cmp, to_f64(&c.threshold)))
            .collect();
        move |eta: &[f64]| {
            parts.iter().all(|&(i, cmp, t)| match cmp {
                Comparison::Less => eta[i] < t,
                Comparison::Greater => eta[i] > t,
            })
        }
    }

    pub fn contains(&self, eta: &[f64]) -> bool {
        (self.predicate())(eta)
    }
}

impl fmt::Display for CylinderEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .constraints
            .iter()
            .map(|c| {
                let op = match c.cmp {
                    Comparison::Less => '<',
                    Comparison::Greater => '>',
                };
                format!("{}{}{}", c.index, op, c.threshold)
            })
            .collect();
        write!(f, "{}", parts.join(","))
    }
}

/// Parses comma-separated constraints such as `0>0,2<-1/2`.
impl FromStr for CylinderEvent {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut constraints = Vec::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (pos, cmp) = part
                .char_indices()
                .find_map(|(i, ch)| match ch {
                    '<' => Some((i, Comparison::Less)),
                    '>' => Some((i, Comparison::Greater)),
                    _ => None,
                })
                .ok_or_else(|| Error::Malformed(format!("constraint {part:?} has no '<' or '>'")))?;
            let index = part[..pos]
                .trim()
                .parse::<usize>()
                .map_err(|e| Error::Malformed(format!("bad index in {part:?}: {e}")))?;
            let threshold = part[pos + 1..]
                .trim()
                .parse::<BigRational>()
                .map_err(|e| Error::Malformed(format!("bad threshold in {part:?}: {e}")))?;
            constraints.push(Constraint { index, cmp, threshold });
        }
        Ok(Self::new(constraints))
    }
}

/// Result of the greedy cylinder search.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CylinderApproximation {
    pub event: CylinderEvent,
    /// `μ(A △ B)` on fresh draws, independent of the fit.
    pub symmetric_difference: Estimate,
    /// `μ(A △ B)` on the draws used for fitting.
    pub fit_error: f64,
    pub epsilon: f64,
    /// Whether the fitted error reached `epsilon`.
    pub reached: bool,
}

/// Thresholds tried by the search: multiples of 1/8 in [-3, 3].
fn threshold_grid() -> Vec<BigRational> {
    (-24..=24).map(|k| ratio(k, 8)).collect()
}

/// Best (comparison, grid index, error count) for a constraint on column
/// `idx` added to the draws selected by `base`, with `a` the target event.
fn best_constraint(data: &[f64], n: usize, a: &[bool], base: &[bool], idx: usize, grid: &[f64]) -> (Comparison, usize, u64) {
    let g = grid.len();
    // Bucket p holds draws with exactly p grid thresholds below the value.
    let mut in_a = vec![0u64; g + 1];
    let mut out_a = vec![0u64; g + 1];
    let mut fixed = 0u64;
    for (s, (&is_a, &keep)) in a.iter().zip(base).enumerate() {
        if !keep {
            fixed += is_a as u64;
            continue;
        }
        let v = data[s * n + idx];
        let p = grid.partition_point(|&t| t < v);
        if is_a {
            in_a[p] += 1;
        } else {
            out_a[p] += 1;
        }
    }
    let total_in: u64 = in_a.iter().sum();
    let total_out: u64 = out_a.iter().sum();
    let mut best = (Comparison::Greater, 0, u64::MAX);
    // For threshold j, `v > t_j` iff bucket p > j.
    let (mut in_le, mut out_le) = (0u64, 0u64);
    for j in 0..g {
        in_le += in_a[j];
        out_le += out_a[j];
        let greater = fixed + (total_out - out_le) + in_le;
        let less = fixed + out_le + (total_in - in_le);
        if greater < best.2 {
            best = (Comparison::Greater, j, greater);
        }
        if less < best.2 {
            best = (Comparison::Less, j, less);
        }
    }
    best
}

fn mask_of(data: &[f64], n: usize, count: usize, constraints: &[Constraint], skip: Option<usize>) -> Vec<bool> {
    let kept: Vec<Constraint> = constraints
        .iter()
        .enumerate()
        .filter(|(i, _)| Some(*i) != skip)
        .map(|(_, c)| c.clone())
        .collect();
    let pred = CylinderEvent::new(kept).predicate();
    (0..count).map(|s| pred(&data[s * n..(s + 1) * n])).collect()
}

/// Greedy threshold-cylinder approximation of the event `a`.
///
/// Coordinates are added one at a time, each with the comparison and grid
/// threshold that most reduce the fitted `μ(A △ B)`, and after each addition
/// every chosen threshold is re-optimized with the others held fixed. The
/// search stops once the fitted error is at most `epsilon`, no coordinate
/// improves it, or every coordinate is used.
pub fn cylinder_approximation_demo<A>(model: &GaussianModel, a: A, epsilon: f64, samples: usize) -> Result<CylinderApproximation>
where
    A: Fn(&[f64]) -> bool + Sync,
{
    let n = model.len();
    if n == 0 || samples == 0 {
        return Err(Error::Precondition("cylinder search needs points and samples".into()));
    }
    let data = model.map_blocks(samples, streams::FIT, |d, _| d.to_vec()).concat();
    let a_mask: Vec<bool> = data.chunks(n).map(&a).collect();
    let grid = threshold_grid();
    let grid_f: Vec<f64> = grid.iter().map(to_f64).collect();

    let mut constraints: Vec<Constraint> = Vec::new();
    let mut err = a_mask.iter().filter(|&&x| !x).count() as u64;
    let target = (epsilon * samples as f64).floor() as u64;
    while err > target && constraints.len() < n {
        let base = mask_of(&data, n, samples, &constraints, None);
        let used: Vec<usize> = constraints.iter().map(|c| c.index).collect();
        let candidate = (0..n)
            .filter(|i| !used.contains(i))
            .map(|i| (i, best_constraint(&data, n, &a_mask, &base, i, &grid_f)))
            .min_by_key(|(i, (_, _, e))| (*e, *i));
        let Some((index, (cmp, j, e))) = candidate else { break };
        if e >= err {
            break;
        }
        constraints.push(Constraint {
            index,
            cmp,
            threshold: grid[j].clone(),
        });
        err = e;
        for _sweep in 0..10 {
            let mut improved = false;
            for c in 0..constraints.len() {
                let others = mask_of(&data, n, samples, &constraints, Some(c));
                let (cmp, j, e) = best_constraint(&data, n, &a_mask, &others, constraints[c].index, &grid_f);
                if e < err {
                    constraints[c].cmp = cmp;
                    constraints[c].threshold = grid[j].clone();
                    err = e;
                    improved = true;
                }
            }
            if !improved {
                break;
            }
        }
    }

    let event = CylinderEvent::new(constraints);
    let b = event.predicate();
    let symmetric_difference = model.probability(samples, streams::EVAL, |eta| a(eta) != b(eta));
    Ok(CylinderApproximation {
        event,
        symmetric_difference,
        fit_error: err as f64 / samples as f64,
        epsilon,
        reached: err <= target,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::build_model;
    use crate::metric::SpaceDistances;
    use crate::rational::int;

    #[test]
    fn parse_and_display_round_trip() {
        let e: CylinderEvent = "0>0, 2<-1/2".parse().unwrap();
        assert_eq!(e.constraints.len(), 2);
        assert_eq!(e.constraints[1].threshold, ratio(-1, 2));
        assert_eq!(e.to_string(), "0>0,2<-1/2");
        assert_eq!(e.point_indices(), vec![0, 2]);
        assert!(e.contains(&[0.1, 5.0, -0.6]));
        assert!(!e.contains(&[0.1, 5.0, -0.4]));
        assert!("0=1".parse::<CylinderEvent>().is_err());
        assert!("x>1".parse::<CylinderEvent>().is_err());
        assert!(e.check_within(2).is_err());
        assert_eq!(e.shifted(3).point_indices(), vec![3, 5]);
        let json = serde_json::to_string(&e).unwrap();
        assert_eq!(serde_json::from_str::<CylinderEvent>(&json).unwrap(), e);
    }

    fn orthogonal(n: usize) -> GaussianModel {
        build_model(&SpaceDistances::uniform(n, int(2)).unwrap(), 17).unwrap()
    }

    #[test]
    fn recovers_a_threshold_cylinder() {
        let m = orthogonal(3);
        let r = cylinder_approximation_demo(&m, |e| e[1] > 0.5, 0.01, 50_000).unwrap();
        assert!(r.reached);
        assert_eq!(r.event, CylinderEvent::above(1, ratio(1, 2)));
        assert_eq!(r.symmetric_difference.value, 0.0);
    }

    #[test]
    fn recovers_the_complement() {
        let m = orthogonal(2);
        let r = cylinder_approximation_demo(&m, |e| !(e[0] > 0.25), 0.01, 50_000).unwrap();
        assert_eq!(r.event.constraints.len(), 1);
        assert_eq!(r.event.constraints[0].cmp, Comparison::Less);
        assert_eq!(r.event.constraints[0].threshold, ratio(1, 4));
        assert_eq!(r.fit_error, 0.0);
    }

    #[test]
    fn approximates_a_half_plane() {
        let m = orthogonal(2);
        let r = cylinder_approximation_demo(&m, |e| e[0] + e[1] > 0.0, 0.2, 100_000).unwrap();
        assert!(r.reached, "{r:?}");
        assert_eq!(r.event.point_indices(), vec![0, 1]);
        assert!(r.symmetric_difference.value + 3.0 * r.symmetric_difference.std_error <= 0.2);
    }

    #[test]
    fn unreachable_target_is_flagged() {
        let m = orthogonal(1);
        let r = cylinder_approximation_demo(&m, |e| e[0].abs() < 0.5, 0.01, 20_000).unwrap();
        assert!(!r.reached);
        assert!(r.fit_error > 0.01);
    }
}
