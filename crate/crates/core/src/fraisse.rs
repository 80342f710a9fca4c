//! Strong amalgamation, random extensions, and finite witnesses for the
//! extension properties of the limit structure.

use std::path::Path;

use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::type_sphere;
use crate::metric::io::{read_space, space_hash, space_to_json};
use crate::metric::{
    certify_membership, embed, gram_from_distances, unique_label, verify_isometry, ExactLdlt, GramMatrix,
    PartialIsometry, ScalarSquared, SpaceDistances, DEFAULT_TOL,
};
use crate::rational::{int, snap, SnapPolicy};
use crate::rng::{stream, unit_vector, Normals};

/// Two certified spaces and the identification of a common subspace.
#[derive(Clone, Debug)]
pub struct AmalgamProblem {
    pub left: SpaceDistances,
    pub right: SpaceDistances,
    pub common_left: Vec<usize>,
    pub common_right: Vec<usize>,
}

fn check_distinct(indices: &[usize], space: &SpaceDistances, what: &str) -> Result<()> {
    let mut seen = vec![false; space.len()];
    for &i in indices {
        space.check_index(i)?;
        if std::mem::replace(&mut seen[i], true) {
            return Err(Error::Malformed(format!("index {i} repeated in {what}")));
        }
    }
    Ok(())
}

impl AmalgamProblem {
    pub fn new(
        left: SpaceDistances,
        right: SpaceDistances,
        common_left: Vec<usize>,
        common_right: Vec<usize>,
    ) -> Result<Self> {
        let p = Self {
            left,
            right,
            common_left,
            common_right,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        check_distinct(&self.common_left, &self.left, "common_left")?;
        check_distinct(&self.common_right, &self.right, "common_right")?;
        let map = PartialIsometry::new(self.common_left.clone(), self.common_right.clone())?;
        if !verify_isometry(&self.left, &self.right, &map)? {
            return Err(Error::Precondition("identified subspaces are not isometric".into()));
        }
        certify_membership(&self.left).into_result()?;
        certify_membership(&self.right).into_result()?;
        Ok(())
    }
}

/// The free amalgam and where each input lands in it.
#[derive(Clone, Debug)]
pub struct Amalgam {
    pub space: SpaceDistances,
    pub gram: GramMatrix,
    /// `left` index `i` is amalgam index `left_embedding[i]` (always `i`).
    pub left_embedding: Vec<usize>,
    pub right_embedding: Vec<usize>,
}

/// Free amalgam over the common part `A`.
///
/// The components of left-only and right-only points orthogonal to `span(A)`
/// are placed in mutually orthogonal subspaces, so a cross inner product is
/// `⟨P_A x, P_A y⟩ = h_xᵀ G_A⁻¹ h_y`, which is rational. The result is exact,
/// needs no snapping, and is positive definite whenever both inputs are.
pub fn amalgamate(p: &AmalgamProblem) -> Result<Amalgam> {
    p.validate()?;
    let (nl, nr) = (p.left.len(), p.right.len());
    let k = p.common_left.len();
    let gl = gram_from_distances(&p.left);
    let gr = gram_from_distances(&p.right);

    let mut ga = Vec::with_capacity(k * k);
    for &a in &p.common_left {
        for &b in &p.common_left {
            ga.push(gl.entry(a, b).clone());
        }
    }
    let factor = ExactLdlt::factorize(&ga, k).map_err(|_| {
        Error::Precondition("common subspace is not positive definite".into())
    })?;

    let mut in_common = vec![None; nr];
    for (pos, &j) in p.common_right.iter().enumerate() {
        in_common[j] = Some(pos);
    }
    let right_only: Vec<usize> = (0..nr).filter(|&j| in_common[j].is_none()).collect();

    // w_y = G_A⁻¹ h_y for each right-only y.
    let weights: Vec<Vec<BigRational>> = right_only
        .iter()
        .map(|&y| {
            let h: Vec<BigRational> = p.common_right.iter().map(|&b| gr.entry(y, b).clone()).collect();
            factor.solve(&h)
        })
        .collect();

    let mut right_embedding = vec![0; nr];
    for (j, slot) in right_embedding.iter_mut().enumerate() {
        if let Some(pos) = in_common[j] {
            *slot = p.common_left[pos];
        }
    }
    for (r, &y) in right_only.iter().enumerate() {
        right_embedding[y] = nl + r;
    }

    let total = nl + right_only.len();
    let mut rows = vec![vec![BigRational::zero(); total]; total];
    for i in 0..nl {
        for j in 0..nl {
            rows[i][j] = p.left.sq_dist(i, j).clone();
        }
    }
    for j in 0..nr {
        for l in 0..nr {
            rows[right_embedding[j]][right_embedding[l]] = p.right.sq_dist(j, l).clone();
        }
    }
    let two = int(2);
    for x in 0..nl {
        if p.common_left.contains(&x) {
            continue;
        }
        for r in 0..right_only.len() {
            let mut ip = BigRational::zero();
            for (pos, &a) in p.common_left.iter().enumerate() {
                ip += gl.entry(x, a) * &weights[r][pos];
            }
            let d = &two - &two * ip;
            rows[x][nl + r] = d.clone();
            rows[nl + r][x] = d;
        }
    }

    let mut labels = p.left.labels().to_vec();
    for &y in &right_only {
        let l = unique_label(&labels, p.right.labels()[y].clone());
        labels.push(l);
    }
    let space = SpaceDistances::new(labels, rows)?;
    let gram = certify_membership(&space).into_result()?;
    Ok(Amalgam {
        space,
        gram,
        left_embedding: (0..nl).collect(),
        right_embedding,
    })
}

fn snapped_extension<R: Rng>(
    space: &SpaceDistances,
    k: usize,
    policy: SnapPolicy,
    normals: &mut Normals<R>,
    label_offset: usize,
) -> Result<(SpaceDistances, u32)> {
    if k == 0 {
        return Ok((space.clone(), policy.denom_bits));
    }
    let n = space.len();
    let dim = n + k;
    let base = embed(space, DEFAULT_TOL)?;
    let fresh: Vec<Vec<f64>> = (0..k).map(|_| unit_vector(normals, dim)).collect();
    // Squared distances of each new point to everything before it.
    let float_rows: Vec<Vec<f64>> = fresh
        .iter()
        .enumerate()
        .map(|(a, u)| {
            let mut row: Vec<f64> = base
                .rows()
                .map(|x| 2.0 - 2.0 * x.iter().zip(u).map(|(p, q)| p * q).sum::<f64>())
                .collect();
            row.extend(
                fresh[..a]
                    .iter()
                    .map(|v| 2.0 - 2.0 * v.iter().zip(u).map(|(p, q)| p * q).sum::<f64>()),
            );
            row
        })
        .collect();

    let mut attempts = 0;
    'bits: for bits in policy.schedule() {
        attempts += 1;
        let mut out = space.clone();
        for (a, row) in float_rows.iter().enumerate() {
            let mut dists = Vec::with_capacity(row.len());
            for &v in row {
                match snap(v, bits) {
                    Some(s) if s.is_positive() && s < int(4) => dists.push(s),
                    _ => continue 'bits,
                }
            }
            out = out.with_point(format!("x{}", label_offset + a), &dists)?;
        }
        if certify_membership(&out).is_member() {
            return Ok((out, bits));
        }
    }
    Err(Error::SnapFailed {
        attempts,
        reason: "extension never re-certified".into(),
    })
}

/// Adds `k` points drawn uniformly from the unit sphere of an `(n+k)`-dimensional
/// embedding, with squared distances snapped to rationals and re-certified.
/// The original points and their distances are kept exactly.
pub fn random_extension<R: Rng>(
    space: &SpaceDistances,
    k: usize,
    policy: SnapPolicy,
    normals: &mut Normals<R>,
) -> Result<SpaceDistances> {
    certify_membership(space).into_result()?;
    snapped_extension(space, k, policy, normals, space.len()).map(|(s, _)| s)
}

/// One growth step of a [`GenericChain`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtensionRecord {
    pub stage: usize,
    pub added: usize,
    pub denom_bits: u32,
}

/// Growing finite approximation of the limit: each stage is a certified
/// extension of the previous one, on the same leading indices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GenericChain {
    pub stages: Vec<SpaceDistances>,
    pub seed: u64,
    pub policy: SnapPolicy,
    pub per_stage: usize,
    pub log: Vec<ExtensionRecord>,
}

/// Name of the extension measure, recorded in chain manifests.
pub const EXTENSION_MEASURE: &str = "uniform-sphere";

/// Grows `stages` stages after `initial`, adding `per_stage` points each.
/// Stage `i` draws from substream `i` of `seed`.
pub fn grow_chain(
    initial: SpaceDistances,
    stages: usize,
    per_stage: usize,
    seed: u64,
    policy: SnapPolicy,
) -> Result<GenericChain> {
    certify_membership(&initial).into_result()?;
    let mut chain = GenericChain {
        stages: vec![initial],
        seed,
        policy,
        per_stage,
        log: Vec::new(),
    };
    for stage in 1..=stages {
        let prev = chain.stages.last().expect("initial stage");
        let mut normals = Normals::new(stream(seed, stage as u64));
        let (next, bits) = snapped_extension(prev, per_stage, policy, &mut normals, prev.len())?;
        chain.log.push(ExtensionRecord {
            stage,
            added: per_stage,
            denom_bits: bits,
        });
        chain.stages.push(next);
    }
    Ok(chain)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageEntry {
    pub file: String,
    pub points: usize,
    pub sha256: String,
}

/// `manifest.json` of a persisted chain.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainManifest {
    pub seed: u64,
    pub snapping: SnapPolicy,
    pub per_stage: usize,
    pub measure: String,
    pub log: Vec<ExtensionRecord>,
    pub stages: Vec<StageEntry>,
}

impl GenericChain {
    /// Stage `i` is the principal submatrix of stage `i+1` on its first indices,
    /// and every stage is certified.
    pub fn is_coherent(&self) -> bool {
        self.stages.iter().all(|s| certify_membership(s).is_member())
            && self.stages.windows(2).all(|w| {
                let idx: Vec<usize> = (0..w[0].len()).collect();
                w[1].restrict(&idx).is_ok_and(|r| r.rows() == w[0].rows())
            })
    }

    pub fn manifest(&self) -> ChainManifest {
        ChainManifest {
            seed: self.seed,
            snapping: self.policy,
            per_stage: self.per_stage,
            measure: EXTENSION_MEASURE.into(),
            log: self.log.clone(),
            stages: self
                .stages
                .iter()
                .enumerate()
                .map(|(i, s)| StageEntry {
                    file: format!("stage_{i:03}.json"),
                    points: s.len(),
                    sha256: space_hash(s),
                })
                .collect(),
        }
    }

    /// Writes one space file per stage plus `manifest.json`.
    pub fn write_dir(&self, dir: impl AsRef<Path>) -> Result<ChainManifest> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let manifest = self.manifest();
        for (entry, stage) in manifest.stages.iter().zip(&self.stages) {
            std::fs::write(dir.join(&entry.file), space_to_json(stage) + "\n")?;
        }
        std::fs::write(
            dir.join("manifest.json"),
            serde_json::to_string_pretty(&manifest)? + "\n",
        )?;
        Ok(manifest)
    }

    /// Reads a persisted chain, checking every stage hash.
    pub fn read_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let manifest: ChainManifest =
            serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json"))?)?;
        let mut stages = Vec::with_capacity(manifest.stages.len());
        for entry in &manifest.stages {
            let s = read_space(dir.join(&entry.file))?;
            if space_hash(&s) != entry.sha256 {
                return Err(Error::Malformed(format!("hash mismatch for {}", entry.file)));
            }
            stages.push(s);
        }
        Ok(Self {
            stages,
            seed: manifest.seed,
            policy: manifest.snapping,
            per_stage: manifest.per_stage,
            log: manifest.log,
        })
    }
}

/// Result of prescribing a one-point extension.
#[derive(Clone, Debug)]
pub enum ExtensionOutcome {
    Realized {
        space: SpaceDistances,
        index: usize,
        gram: GramMatrix,
    },
    /// The prescribed Gram is not positive definite.
    Unrealizable { pivot_index: usize, minor: BigRational },
}

/// Realizes a new point at exactly the prescribed squared distances, if the
/// extended Gram matrix is positive definite. A prescribed distance of 0
/// (coincidence) is accepted as input and rejected by the pivot test.
pub fn one_point_extension_witness(space: &SpaceDistances, target_dists: &[BigRational]) -> Result<ExtensionOutcome> {
    let n = space.len();
    if target_dists.len() != n {
        return Err(Error::Malformed(format!(
            "{} prescribed distances for {n} points",
            target_dists.len()
        )));
    }
    if let Some(bad) = target_dists.iter().find(|d| d.is_negative() || **d > int(4)) {
        return Err(Error::Malformed(format!("prescribed squared distance {bad} outside [0, 4]")));
    }
    let g = gram_from_distances(space);
    let half = BigRational::new(1.into(), 2.into());
    let m = n + 1;
    let mut ext = vec![BigRational::zero(); m * m];
    for i in 0..n {
        for j in 0..n {
            ext[i * m + j] = g.entry(i, j).clone();
        }
        let h = BigRational::one() - &target_dists[i] * &half;
        ext[i * m + n] = h.clone();
        ext[n * m + i] = h;
    }
    ext[n * m + n] = BigRational::one();
    if let Err((pivot_index, minor)) = ExactLdlt::factorize(&ext, m) {
        return Ok(ExtensionOutcome::Unrealizable { pivot_index, minor });
    }
    let label = format!("x{n}");
    let space = space.with_point(label, target_dists)?;
    let gram = certify_membership(&space).into_result()?;
    Ok(ExtensionOutcome::Realized { space, index: n, gram })
}

/// The one-point map `a ↦ b`. Every singleton is isometric to every other
/// (each point is at distance 1 from the base point), so this is always a
/// valid partial isometry.
pub fn check_transitivity_witness(a_idx: usize, b_idx: usize, space: &SpaceDistances) -> Result<PartialIsometry> {
    transitivity_witness_between(space, a_idx, space, b_idx)
}

pub fn transitivity_witness_between(
    from: &SpaceDistances,
    a_idx: usize,
    to: &SpaceDistances,
    b_idx: usize,
) -> Result<PartialIsometry> {
    from.check_index(a_idx)?;
    to.check_index(b_idx)?;
    let map = PartialIsometry::new(vec![a_idx], vec![b_idx])?;
    debug_assert!(verify_isometry(from, to, &map)?);
    Ok(map)
}

/// A new point with the same distances as `x` to a fixed set.
#[derive(Clone, Debug)]
pub struct AlgebraicityWitness {
    /// `space` plus the new point, certified.
    pub space: SpaceDistances,
    pub index: usize,
    /// Exact squared distances from the new point to the original points.
    pub profile: Vec<BigRational>,
}

const MAX_ALGEBRAICITY_ATTEMPTS: usize = 100;

/// `m` distinct certified one-point extensions of `space`, each adding a point
/// that agrees with `x_idx` on its distances to `fixed` but differs from it.
///
/// The new points are realizations of the type of `x` over `fixed` in
/// directions orthogonal to `span(fixed)`; distances to points outside `fixed`
/// are snapped.
pub fn no_algebraicity_witnesses<R: Rng>(
    space: &SpaceDistances,
    fixed: &[usize],
    x_idx: usize,
    m: usize,
    policy: SnapPolicy,
    normals: &mut Normals<R>,
) -> Result<Vec<AlgebraicityWitness>> {
    check_distinct(fixed, space, "fixed")?;
    space.check_index(x_idx)?;
    if fixed.contains(&x_idx) {
        return Err(Error::Precondition("x must not be one of the fixed points".into()));
    }
    certify_membership(space).into_result()?;

    let c = space.restrict(fixed)?;
    let prescription = fixed
        .iter()
        .map(|&f| ScalarSquared::new(space.sq_dist(x_idx, f).clone()))
        .collect::<Result<Vec<_>>>()?;
    let ts = type_sphere(&c, &prescription, DEFAULT_TOL)?;
    let rho = ts.radius();

    let n = space.len();
    let order: Vec<usize> = fixed
        .iter()
        .copied()
        .chain((0..n).filter(|i| !fixed.contains(i)))
        .collect();
    let reordered = space.restrict(&order)?;
    let coords = embed(&reordered, DEFAULT_TOL)?.padded(1);
    let k = fixed.len();
    // Lower-triangular coordinates: span(fixed) is the first k axes, and the
    // projection of x onto it is the head of x's row.
    let x_pos = order.iter().position(|&i| i == x_idx).expect("x is in the order");
    let head: Vec<f64> = coords.row(x_pos)[..k].to_vec();

    let mut out: Vec<AlgebraicityWitness> = Vec::with_capacity(m);
    let mut attempts = 0;
    while out.len() < m {
        attempts += 1;
        if attempts > MAX_ALGEBRAICITY_ATTEMPTS * m.max(1) {
            return Err(Error::SearchFailed {
                attempts: attempts as u32,
                reason: "could not certify distinct realizations".into(),
            });
        }
        let u = unit_vector(normals, n + 1 - k);
        let z: Vec<f64> = head.iter().copied().chain(u.iter().map(|v| rho * v)).collect();
        let mut found = None;
        'bits: for bits in policy.schedule() {
            let mut profile = vec![BigRational::zero(); n];
            for (pos, &orig) in order.iter().enumerate() {
                profile[orig] = if pos < k {
                    space.sq_dist(x_idx, orig).clone()
                } else {
                    let d: f64 = coords.row(pos).iter().zip(&z).map(|(a, b)| (a - b) * (a - b)).sum();
                    match snap(d, bits) {
                        Some(s) if s.is_positive() && s < int(4) => s,
                        _ => continue 'bits,
                    }
                };
            }
            let label = format!("{}'", space.labels()[x_idx]);
            let ext = space.with_point(label, &profile)?;
            if certify_membership(&ext).is_member() {
                found = Some((ext, profile));
                break;
            }
        }
        let Some((ext, profile)) = found else { continue };
        if out.iter().any(|w| w.profile == profile) {
            continue;
        }
        out.push(AlgebraicityWitness {
            space: ext,
            index: n,
            profile,
        });
    }
    Ok(out)
}
