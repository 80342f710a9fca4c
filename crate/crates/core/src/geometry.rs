//! Geometry of 1-types over a finite set `C`.
//!
//! Points of the unit sphere with prescribed squared distances to the points
//! of `C` form a 2-sphere once three coordinates orthogonal to `span(C)` are
//! adjoined: `C` is embedded in the first `|C|` coordinates of `R^{|C|+3}`,
//! every realization shares the projection `center` onto `span(C)`, and the
//! remaining three coordinates range over a sphere of radius `ρ` with
//! `ρ² = 1 - |center|²`.
//!
//! Exact data (squared distances between realized points) is always carried
//! alongside the float coordinates; every configuration a function emits is
//! re-certified by [`certify_membership`].

use std::f64::consts::PI;

use num_rational::BigRational;
use num_traits::{Signed, Zero};
use rand::Rng;

use crate::error::{Error, Result};
use crate::metric::{certify_membership, embed, EmbeddedSpace, GramMatrix, ScalarSquared, SpaceDistances};
use crate::rational::{snap, to_f64, SnapPolicy};
use crate::rng::Normals;

/// Residual norm below which a point counts as lying in a span.
pub const SPAN_RESIDUAL_MIN: f64 = 1e-6;

/// Bisection stops once the θ bracket is narrower than this.
pub const THETA_TOL: f64 = 1e-12;

/// Rotations are undefined when `|cos(angle(x, y))|` is this close to 1.
const AXIS_EPS: f64 = 1e-12;

const MAX_WITNESS_ATTEMPTS: u32 = 2000;
const MAX_CHAIN_ATTEMPTS: u32 = 50;

type Vec3 = [f64; 3];

fn dot3(a: &Vec3, b: &Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: &Vec3, b: &Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn scale3(a: &Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

fn add3(a: &Vec3, b: &Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

fn norm3(a: &Vec3) -> f64 {
    dot3(a, a).sqrt()
}

fn unit3(a: &Vec3) -> Option<Vec3> {
    let n = norm3(a);
    (n > 1e-300).then(|| scale3(a, 1.0 / n))
}

/// Two unit vectors completing `a` to a right-handed orthonormal frame.
fn perp_frame(a: &Vec3) -> (Vec3, Vec3) {
    let k = (0..3)
        .min_by(|&i, &j| a[i].abs().total_cmp(&a[j].abs()))
        .expect("three axes");
    let mut e = [0.0; 3];
    e[k] = 1.0;
    let u = unit3(&add3(&e, &scale3(a, -a[k]))).expect("axis least aligned with a");
    let v = cross(a, &u);
    (u, v)
}

fn clamp_acos(c: f64) -> f64 {
    c.clamp(-1.0, 1.0).acos()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// A point of `R^{|C|+3}` lying (numerically) on a type sphere.
#[derive(Clone, Debug, PartialEq)]
pub struct TypePoint(Vec<f64>);

impl TypePoint {
    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn sq_dist(&self, other: &TypePoint) -> f64 {
        sq_dist(&self.0, &other.0)
    }
}

/// The realizations of a 1-type over `C`: a 2-sphere of radius `ρ` centered at
/// the common projection onto `span(C)`.
#[derive(Clone, Debug)]
pub struct TypeSphere {
    base_space: SpaceDistances,
    base: EmbeddedSpace,
    prescription: Vec<BigRational>,
    center: Vec<f64>,
    radius_sq: f64,
    radius_sq_exact: BigRational,
    tol: f64,
}

/// Builds the type sphere of points with squared distances `dists_to_c` to `C`.
///
/// Fails with [`Error::NotMember`] when `C` itself or `C ∪ {x}` with the
/// prescribed distances is not strictly positive definite (the type is not
/// realizable in the class).
pub fn type_sphere(c: &SpaceDistances, dists_to_c: &[ScalarSquared], tol: f64) -> Result<TypeSphere> {
    if dists_to_c.len() != c.len() {
        return Err(Error::Malformed(format!(
            "{} prescribed distances for {} base points",
            dists_to_c.len(),
            c.len()
        )));
    }
    let n = c.len();
    let prescription: Vec<BigRational> = dists_to_c.iter().map(|d| d.value().clone()).collect();
    let extended = c.with_point("x", &prescription)?;
    let gram = certify_membership(&extended).into_result()?;
    let radius_sq_exact = gram.pd_certificate().expect("certified")[n].clone();

    let base = embed(c, tol)?.padded(3);
    // Forward substitution: the base coordinates are lower triangular.
    let mut center = vec![0.0; n + 3];
    for i in 0..n {
        let h = 1.0 - to_f64(&prescription[i]) / 2.0;
        let row = base.row(i);
        let partial: f64 = (0..i).map(|k| row[k] * center[k]).sum();
        center[i] = (h - partial) / row[i];
    }
    let radius_sq = to_f64(&radius_sq_exact);
    let float_radius_sq = 1.0 - dot(&center, &center);
    if (float_radius_sq - radius_sq).abs() > tol {
        return Err(Error::IllConditioned(format!(
            "projection gives ρ² = {float_radius_sq:e}, exact pivot gives {radius_sq:e}"
        )));
    }
    Ok(TypeSphere {
        base_space: c.clone(),
        base,
        prescription,
        center,
        radius_sq,
        radius_sq_exact,
        tol,
    })
}

impl TypeSphere {
    pub fn base_space(&self) -> &SpaceDistances {
        &self.base_space
    }

    pub fn base(&self) -> &EmbeddedSpace {
        &self.base
    }

    pub fn prescription(&self) -> &[BigRational] {
        &self.prescription
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn radius_sq(&self) -> f64 {
        self.radius_sq
    }

    /// `ρ²` as the last exact LDLᵀ pivot of `C ∪ {x}`.
    pub fn radius_sq_exact(&self) -> &BigRational {
        &self.radius_sq_exact
    }

    pub fn radius(&self) -> f64 {
        self.radius_sq.sqrt()
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    /// Ambient dimension `|C| + 3`.
    pub fn dim(&self) -> usize {
        self.center.len()
    }

    fn base_len(&self) -> usize {
        self.base_space.len()
    }

    /// Orthonormal basis of the three adjoined coordinates.
    pub fn orth_basis(&self) -> [Vec<f64>; 3] {
        let n = self.base_len();
        std::array::from_fn(|k| {
            let mut e = vec![0.0; n + 3];
            e[n + k] = 1.0;
            e
        })
    }

    fn point_from_direction(&self, dir: &Vec3) -> TypePoint {
        let n = self.base_len();
        let rho = self.radius();
        let mut p = self.center.clone();
        for k in 0..3 {
            p[n + k] = rho * dir[k];
        }
        TypePoint(p)
    }

    /// Unit direction of `p` inside the type sphere, after checking `p` is on it.
    pub fn direction(&self, p: &TypePoint) -> Result<Vec3> {
        let n = self.base_len();
        if p.0.len() != n + 3 {
            return Err(Error::Precondition(format!(
                "point has dimension {}, type sphere lives in {}",
                p.0.len(),
                n + 3
            )));
        }
        let off: f64 = (0..n).map(|i| (p.0[i] - self.center[i]).powi(2)).sum::<f64>().sqrt();
        let w = [p.0[n], p.0[n + 1], p.0[n + 2]];
        let r = norm3(&w);
        if off > self.tol || (r - self.radius()).abs() > self.tol {
            return Err(Error::Precondition(format!(
                "point is not on the type sphere (projection off by {off:e}, radius off by {:e})",
                (r - self.radius()).abs()
            )));
        }
        Ok(scale3(&w, 1.0 / r))
    }

    /// `center + ρ·direction`, with `direction` a unit vector of the adjoined
    /// three coordinates.
    pub fn realize_type(&self, direction: Vec3) -> Result<TypePoint> {
        if (norm3(&direction) - 1.0).abs() > self.tol {
            return Err(Error::Precondition(format!(
                "direction has norm {}, expected 1",
                norm3(&direction)
            )));
        }
        Ok(self.point_from_direction(&direction))
    }

    pub fn random_point<R: Rng>(&self, normals: &mut Normals<R>) -> TypePoint {
        let d = crate::rng::unit_vector(normals, 3);
        self.point_from_direction(&[d[0], d[1], d[2]])
    }

    /// Largest deviation of `|p - c_i|²` from the prescription.
    pub fn prescription_error(&self, p: &TypePoint) -> f64 {
        self.base
            .rows()
            .zip(&self.prescription)
            .map(|(c, d)| (sq_dist(c, &p.0) - to_f64(d)).abs())
            .fold(0.0, f64::max)
    }

    /// Central angle between two points of the sphere.
    pub fn angle(&self, a: &TypePoint, b: &TypePoint) -> Result<f64> {
        Ok(clamp_acos(dot3(&self.direction(a)?, &self.direction(b)?)))
    }

    /// The point at squared distance `sq` from `x`, at azimuth `azimuth`
    /// around `x` measured in a fixed frame perpendicular to `x`.
    pub fn point_at_distance(&self, x: &TypePoint, sq: f64, azimuth: f64) -> Result<TypePoint> {
        let xd = self.direction(x)?;
        let cos_a = 1.0 - sq / (2.0 * self.radius_sq);
        if !(-1.0..=1.0).contains(&cos_a) {
            return Err(Error::Precondition(format!(
                "squared distance {sq} exceeds the type sphere diameter² {}",
                4.0 * self.radius_sq
            )));
        }
        let sin_a = (1.0 - cos_a * cos_a).max(0.0).sqrt();
        let (u, v) = perp_frame(&xd);
        let (s, c) = azimuth.sin_cos();
        let side = add3(&scale3(&u, c), &scale3(&v, s));
        Ok(self.point_from_direction(&add3(&scale3(&xd, cos_a), &scale3(&side, sin_a))))
    }

    /// Image of `x` under the rotation by `theta` of the type sphere about the
    /// axis through `y`. The rotation is right-handed about `y`'s direction
    /// with respect to [`TypeSphere::orth_basis`].
    pub fn rotate_about_axis(&self, x: &TypePoint, y: &TypePoint, theta: f64) -> Result<TypePoint> {
        let xd = self.direction(x)?;
        let axis = self.direction(y)?;
        let c = dot3(&xd, &axis);
        if 1.0 - c.abs() < AXIS_EPS {
            return Err(Error::Precondition(
                "x and y are coincident or antipodal on the type sphere: rotation axis undefined".into(),
            ));
        }
        // Rodrigues' formula.
        let (s, co) = theta.sin_cos();
        let rotated = add3(
            &add3(&scale3(&xd, co), &scale3(&cross(&axis, &xd), s)),
            &scale3(&axis, c * (1.0 - co)),
        );
        Ok(self.point_from_direction(&rotated))
    }

    /// `ε = |x(π) - x|`.
    pub fn epsilon_threshold(&self, x: &TypePoint, y: &TypePoint) -> Result<f64> {
        let flipped = self.rotate_about_axis(x, y, PI)?;
        Ok(flipped.sq_dist(x).sqrt())
    }

    /// The configuration `C ∪ points` with the exact mutual squared distances
    /// `mutual` (symmetric, zero diagonal) among the new points.
    pub fn configuration(&self, labels: &[&str], mutual: &[Vec<BigRational>]) -> Result<SpaceDistances> {
        let mut space = self.base_space.clone();
        for (k, label) in labels.iter().enumerate() {
            let mut dists = self.prescription.clone();
            dists.extend((0..k).map(|j| mutual[k][j].clone()));
            space = space.with_point(*label, &dists)?;
        }
        Ok(space)
    }

    fn check_exact_distance(&self, a: &TypePoint, b: &TypePoint, exact: &BigRational) -> Result<()> {
        let err = (a.sq_dist(b) - to_f64(exact)).abs();
        if err > self.tol {
            return Err(Error::Precondition(format!(
                "points are at squared distance {} but the stated exact value is {exact}",
                a.sq_dist(b)
            )));
        }
        Ok(())
    }
}

/// Two points `x, y` of one type over `C`, realized on its type sphere.
#[derive(Clone, Debug)]
pub struct TypePair {
    pub sphere: TypeSphere,
    pub x: TypePoint,
    pub y: TypePoint,
    /// Exact `|x - y|²`.
    pub xy_sq: BigRational,
}

/// Reads a certified space `C ∪ {x, y}` with `x, y` its last two points and
/// equal distances to every point of `C`, and places `x` and `y` on the type
/// sphere over `C`.
pub fn type_pair(space: &SpaceDistances, tol: f64) -> Result<TypePair> {
    let n = space.len();
    if n < 2 {
        return Err(Error::Precondition("need C plus two points x, y".into()));
    }
    certify_membership(space).into_result()?;
    let (xi, yi) = (n - 2, n - 1);
    if (0..xi).any(|c| space.sq_dist(xi, c) != space.sq_dist(yi, c)) {
        return Err(Error::Precondition(
            "the last two points have different distances to the rest: not one type".into(),
        ));
    }
    let base: Vec<usize> = (0..xi).collect();
    let c = space.restrict(&base)?;
    let profile = (0..xi)
        .map(|j| ScalarSquared::new(space.sq_dist(xi, j).clone()))
        .collect::<Result<Vec<_>>>()?;
    let sphere = type_sphere(&c, &profile, tol)?;
    let xy_sq = space.sq_dist(xi, yi).clone();
    let y = sphere.realize_type([0.0, 0.0, 1.0])?;
    let x = sphere.point_at_distance(&y, to_f64(&xy_sq), 0.0)?;
    Ok(TypePair { sphere, x, y, xy_sq })
}

/// A rotation angle achieving a prescribed squared distance, with the
/// certified configuration `C ∪ {x, y, x(θ)}`.
#[derive(Clone, Debug)]
pub struct ThetaSolution {
    pub theta: f64,
    pub point: TypePoint,
    /// `|x(θ) - x|²` in floating point.
    pub achieved_sq: f64,
    pub space: SpaceDistances,
    pub gram: GramMatrix,
}

/// Finds `0 < θ < π` with `|x(θ) - x|² = target_sq` by bisection.
///
/// `xy_sq` is the exact squared distance between `x` and `y`. The rotation
/// fixes `y`, so `C ∪ {x, y, x(θ)}` has exact squared distances `xy_sq` (twice)
/// and `target_sq`; that configuration is certified before returning.
pub fn solve_theta_for_distance(
    ts: &TypeSphere,
    x: &TypePoint,
    y: &TypePoint,
    xy_sq: &BigRational,
    target_sq: &ScalarSquared,
) -> Result<ThetaSolution> {
    ts.check_exact_distance(x, y, xy_sq)?;
    let eps = ts.epsilon_threshold(x, y)?;
    let target = target_sq.to_f64();
    if target >= eps * eps - ts.tol {
        return Err(Error::Precondition(format!(
            "target squared distance {target} is not below ε² = {}",
            eps * eps
        )));
    }
    let f = |theta: f64| -> Result<f64> { Ok(ts.rotate_about_axis(x, y, theta)?.sq_dist(x)) };
    let (mut lo, mut hi) = (0.0, PI);
    while hi - lo > THETA_TOL {
        let mid = 0.5 * (lo + hi);
        if f(mid)? < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let theta = 0.5 * (lo + hi);
    let point = ts.rotate_about_axis(x, y, theta)?;
    let achieved_sq = point.sq_dist(x);
    if (achieved_sq - target).abs() > ts.tol {
        return Err(Error::IllConditioned(format!(
            "bisection reached |x(θ) - x|² = {achieved_sq}, target {target}"
        )));
    }
    let t = target_sq.value().clone();
    let z = BigRational::zero();
    let mutual = vec![
        vec![z.clone(), xy_sq.clone(), t.clone()],
        vec![xy_sq.clone(), z.clone(), xy_sq.clone()],
        vec![t, xy_sq.clone(), z],
    ];
    let space = ts.configuration(&["x", "y", "x_theta"], &mutual)?;
    let gram = certify_membership(&space).into_result()?;
    Ok(ThetaSolution {
        theta,
        point,
        achieved_sq,
        space,
        gram,
    })
}

/// Unit `z` with `a·z = alpha`, `b·z = beta`, on the side of `hint` relative
/// to the plane of `a` and `b`.
fn two_circle(a: &Vec3, b: &Vec3, alpha: f64, beta: f64, hint: &Vec3) -> Option<Vec3> {
    let gamma = dot3(a, b);
    let det = 1.0 - gamma * gamma;
    if det < 1e-14 {
        return None;
    }
    let p = (alpha - gamma * beta) / det;
    let q = (beta - gamma * alpha) / det;
    let w = add3(&scale3(a, p), &scale3(b, q));
    let rest = 1.0 - dot3(&w, &w);
    if rest <= 0.0 {
        return None;
    }
    let normal = unit3(&cross(a, b))?;
    let sign = if dot3(hint, &normal) < 0.0 { -1.0 } else { 1.0 };
    Some(add3(&w, &scale3(&normal, sign * rest.sqrt())))
}

/// Output of [`connectedness_witness`].
#[derive(Clone, Debug)]
pub struct ConnectednessWitness {
    pub point: TypePoint,
    /// Exact `|z - a|²` and `|z - b|²`.
    pub sq_to_a: BigRational,
    pub sq_to_b: BigRational,
    /// Central angles from `z` to `a` and `b`, both `< φ/2`.
    pub angle_to_a: f64,
    pub angle_to_b: f64,
    pub half_phi: f64,
    /// `2ρ·sin(φ/4)`, the chord length of a central angle of `φ/2`.
    pub chord_bound: f64,
    pub dist_to_a: f64,
    pub dist_to_b: f64,
    /// Distance from `z` to `span(C ∪ {a, b})`.
    pub span_residual: f64,
    pub space: SpaceDistances,
    pub gram: GramMatrix,
    pub attempts: u32,
}

/// Finds `z` on the type sphere within central angle `φ/2` of both `a` and `b`,
/// off `span(C ∪ {a, b})`, with exact rational squared distances to `a` and `b`
/// such that `C ∪ {a, b, z}` is certified.
///
/// `ab_sq` is the exact squared distance between `a` and `b`; zero means
/// `a = b`, in which case `C ∪ {a, z}` is certified instead.
pub fn connectedness_witness<R: Rng>(
    ts: &TypeSphere,
    a: &TypePoint,
    b: &TypePoint,
    ab_sq: &BigRational,
    phi: f64,
    policy: SnapPolicy,
    normals: &mut Normals<R>,
) -> Result<ConnectednessWitness> {
    if !(phi > 0.0 && phi < PI) {
        return Err(Error::Precondition(format!("φ = {phi} outside (0, π)")));
    }
    let coincident = ab_sq.is_zero();
    if ab_sq.is_negative() {
        return Err(Error::Precondition("negative squared distance".into()));
    }
    ts.check_exact_distance(a, b, ab_sq)?;
    let ad = ts.direction(a)?;
    let bd = ts.direction(b)?;
    let ab_angle = if coincident { 0.0 } else { clamp_acos(dot3(&ad, &bd)) };
    if ab_angle >= phi {
        return Err(Error::Precondition(format!(
            "angle(a, b) = {ab_angle} is not below φ = {phi}"
        )));
    }
    let mid = unit3(&add3(&ad, &bd)).expect("angle below π");
    let cap = 0.5 * (phi - ab_angle);
    let (mu, mv) = perp_frame(&mid);
    let normal = if coincident { None } else { unit3(&cross(&ad, &bd)) };
    let rho = ts.radius();
    let residual = |z: &Vec3| -> f64 {
        match &normal {
            Some(nrm) => rho * dot3(z, nrm).abs(),
            None => rho * (1.0 - dot3(z, &ad).powi(2)).max(0.0).sqrt(),
        }
    };
    let half_phi = 0.5 * phi;

    for attempt in 1..=MAX_WITNESS_ATTEMPTS {
        // Uniform draw from the open cap of half-angle `cap` around the midpoint.
        let rng = normals.rng_mut();
        let cos_psi = 1.0 - rng.random::<f64>() * (1.0 - cap.cos());
        let az = rng.random::<f64>() * std::f64::consts::TAU;
        let sin_psi = (1.0 - cos_psi * cos_psi).max(0.0).sqrt();
        let side = add3(&scale3(&mu, az.cos()), &scale3(&mv, az.sin()));
        let cand = add3(&scale3(&mid, cos_psi), &scale3(&side, sin_psi));
        if residual(&cand) <= SPAN_RESIDUAL_MIN {
            continue;
        }
        let cand_point = ts.point_from_direction(&cand);
        for bits in policy.schedule() {
            let Some(sa) = snap(cand_point.sq_dist(a), bits) else { continue };
            let sb = if coincident {
                sa.clone()
            } else {
                match snap(cand_point.sq_dist(b), bits) {
                    Some(v) => v,
                    None => continue,
                }
            };
            if !sa.is_positive() || !sb.is_positive() {
                continue;
            }
            let alpha = 1.0 - to_f64(&sa) / (2.0 * ts.radius_sq);
            let z = if coincident {
                // Keep the candidate's azimuth, move to the snapped polar angle.
                let along = dot3(&cand, &ad);
                let Some(perp) = unit3(&add3(&cand, &scale3(&ad, -along))) else { continue };
                let s = (1.0 - alpha * alpha).max(0.0).sqrt();
                add3(&scale3(&ad, alpha), &scale3(&perp, s))
            } else {
                let beta = 1.0 - to_f64(&sb) / (2.0 * ts.radius_sq);
                match two_circle(&ad, &bd, alpha, beta, &cand) {
                    Some(z) => z,
                    None => continue,
                }
            };
            let angle_a = clamp_acos(dot3(&z, &ad));
            let angle_b = clamp_acos(dot3(&z, &bd));
            let res = residual(&z);
            if angle_a >= half_phi || angle_b >= half_phi || res <= SPAN_RESIDUAL_MIN {
                continue;
            }
            let zero = BigRational::zero();
            let space = if coincident {
                ts.configuration(&["a", "z"], &[vec![zero.clone(), sa.clone()], vec![sa.clone(), zero]])?
            } else {
                ts.configuration(
                    &["a", "b", "z"],
                    &[
                        vec![zero.clone(), ab_sq.clone(), sa.clone()],
                        vec![ab_sq.clone(), zero.clone(), sb.clone()],
                        vec![sa.clone(), sb.clone(), zero],
                    ],
                )?
            };
            let Ok(gram) = certify_membership(&space).into_result() else { continue };
            let point = ts.point_from_direction(&z);
            return Ok(ConnectednessWitness {
                dist_to_a: point.sq_dist(a).sqrt(),
                dist_to_b: point.sq_dist(b).sqrt(),
                point,
                sq_to_a: sa,
                sq_to_b: sb,
                angle_to_a: angle_a,
                angle_to_b: angle_b,
                half_phi,
                chord_bound: 2.0 * rho * (phi / 4.0).sin(),
                span_residual: res,
                space,
                gram,
                attempts: attempt,
            });
        }
    }
    Err(Error::SearchFailed {
        attempts: MAX_WITNESS_ATTEMPTS,
        reason: format!("no certified witness for φ = {phi}; refine the snapping grid"),
    })
}

/// A path `a = p_0, ..., p_m = b` on a type sphere with short exact links.
#[derive(Clone, Debug)]
pub struct Chain {
    pub points: Vec<TypePoint>,
    /// Exact `|p_i - p_{i+1}|²`.
    pub link_sq: Vec<BigRational>,
    /// Certified `C ∪ {p_i, p_{i+1}}` for every link.
    pub link_spaces: Vec<SpaceDistances>,
}

impl Chain {
    pub fn jumps(&self) -> usize {
        self.link_sq.len()
    }
}

/// Upper bound on the number of jumps [`connect_by_chain`] uses.
pub fn chain_length_bound(rho: f64, step: f64) -> usize {
    (1.25 * PI * rho / step).ceil() as usize + 1
}

fn link_space(ts: &TypeSphere, sq: &BigRational) -> Result<SpaceDistances> {
    let z = BigRational::zero();
    ts.configuration(&["p", "q"], &[vec![z.clone(), sq.clone()], vec![sq.clone(), z]])
}

/// Joins `a` to `b` by jumps of squared length at most `step_sq`, every jump an
/// exact rational with `C ∪ {p_i, p_{i+1}}` certified.
///
/// `ab_sq`, when known, is used verbatim for a direct jump; otherwise a direct
/// jump snaps the float distance.
pub fn connect_by_chain<R: Rng>(
    ts: &TypeSphere,
    a: &TypePoint,
    b: &TypePoint,
    ab_sq: Option<&BigRational>,
    step_sq: &BigRational,
    policy: SnapPolicy,
    normals: &mut Normals<R>,
) -> Result<Chain> {
    if !step_sq.is_positive() {
        return Err(Error::Precondition("step_sq must be positive".into()));
    }
    let ad = ts.direction(a)?;
    let bd = ts.direction(b)?;
    let step_f = to_f64(step_sq);
    let direct = a.sq_dist(b);
    if ab_sq.is_some_and(|v| v.is_zero()) || direct <= ts.tol * ts.tol {
        return Ok(Chain {
            points: vec![a.clone()],
            link_sq: Vec::new(),
            link_spaces: Vec::new(),
        });
    }

    if direct <= step_f {
        let candidates: Vec<BigRational> = match ab_sq {
            Some(v) => vec![v.clone()],
            None => policy.schedule().filter_map(|bits| snap(direct, bits)).collect(),
        };
        for sq in candidates {
            if !sq.is_positive() || sq > *step_sq {
                continue;
            }
            let space = link_space(ts, &sq)?;
            if certify_membership(&space).is_member() {
                return Ok(Chain {
                    points: vec![a.clone(), b.clone()],
                    link_sq: vec![sq],
                    link_spaces: vec![space],
                });
            }
        }
    }

    let rho = ts.radius();
    let total = clamp_acos(dot3(&ad, &bd));
    let ratio = (0.8 * step_f.sqrt() / (2.0 * rho)).min(1.0);
    let max_step_angle = (2.0 * ratio.asin()).min(PI / 3.0);
    let m = ((total / max_step_angle).ceil() as usize).max(2);
    let (plane_u, plane_n) = match unit3(&cross(&ad, &bd)) {
        // Great circle through a and b: in-plane unit vector u ⟂ a.
        Some(nrm) => (cross(&nrm, &ad), nrm),
        None => {
            let (u, v) = perp_frame(&ad);
            (u, v)
        }
    };
    let delta = total / m as f64;

    'attempt: for _ in 0..MAX_CHAIN_ATTEMPTS {
        // Intermediate targets on the great circle, pushed off it laterally so
        // that the last point is a transversal two-circle intersection.
        let targets: Vec<Vec3> = (1..m)
            .map(|i| {
                let t = delta * i as f64;
                let on = add3(&scale3(&ad, t.cos()), &scale3(&plane_u, t.sin()));
                let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
                let lateral = sign * delta * (0.05 + 0.1 * normals.rng_mut().random::<f64>());
                unit3(&add3(&scale3(&on, lateral.cos()), &scale3(&plane_n, lateral.sin())))
                    .expect("unit combination")
            })
            .collect();

        let mut points = vec![a.clone()];
        let mut dirs = vec![ad];
        let mut link_sq = Vec::with_capacity(m);
        let mut link_spaces = Vec::with_capacity(m);
        for (i, target) in targets.iter().enumerate() {
            let prev_dir = dirs[i];
            let prev = &points[i];
            let target_pt = ts.point_from_direction(target);
            let last = i + 1 == m - 1;
            let mut placed = None;
            for bits in policy.schedule() {
                let Some(s_prev) = snap(target_pt.sq_dist(prev), bits) else { continue };
                let alpha = 1.0 - to_f64(&s_prev) / (2.0 * ts.radius_sq);
                let (dir, s_next) = if last {
                    let Some(s_b) = snap(target_pt.sq_dist(b), bits) else { continue };
                    let beta = 1.0 - to_f64(&s_b) / (2.0 * ts.radius_sq);
                    match two_circle(&prev_dir, &bd, alpha, beta, target) {
                        Some(d) => (d, Some(s_b)),
                        None => continue,
                    }
                } else {
                    let along = dot3(target, &prev_dir);
                    let Some(perp) = unit3(&add3(target, &scale3(&prev_dir, -along))) else { continue };
                    let s = (1.0 - alpha * alpha).max(0.0).sqrt();
                    (add3(&scale3(&prev_dir, alpha), &scale3(&perp, s)), None)
                };
                let links: Vec<&BigRational> = std::iter::once(&s_prev).chain(s_next.as_ref()).collect();
                if links.iter().any(|s| !s.is_positive() || *s > step_sq) {
                    continue;
                }
                let spaces = links
                    .iter()
                    .map(|s| link_space(ts, s))
                    .collect::<Result<Vec<_>>>()?;
                if spaces.iter().all(|sp| certify_membership(sp).is_member()) {
                    placed = Some((dir, s_prev, s_next, spaces));
                    break;
                }
            }
            let Some((dir, s_prev, s_next, spaces)) = placed else { continue 'attempt };
            points.push(ts.point_from_direction(&dir));
            dirs.push(dir);
            link_sq.push(s_prev);
            link_sq.extend(s_next);
            link_spaces.extend(spaces);
        }
        points.push(b.clone());
        return Ok(Chain {
            points,
            link_sq,
            link_spaces,
        });
    }
    Err(Error::SearchFailed {
        attempts: MAX_CHAIN_ATTEMPTS,
        reason: "could not place certified chain links".into(),
    })
}
