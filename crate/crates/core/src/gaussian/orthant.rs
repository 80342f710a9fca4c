//! Orthant probabilities of centered Gaussian vectors.
//!
//! Dimension 2 has Sheppard's closed form; dimension 3 is computed by nested
//! adaptive quadrature (the classical trivariate closed form is kept as an
//! independent cross-check).

use std::f64::consts::PI;

use crate::stats::{normal_cdf, normal_quantile};

/// `P(X > 0, Y > 0)` for standard normals with correlation `rho`.
pub fn sheppard(rho: f64) -> f64 {
    0.25 + rho.clamp(-1.0, 1.0).asin() / (2.0 * PI)
}

/// `P(X > 0, Y > 0, Z > 0)` from the pairwise correlations.
pub fn trivariate_closed_form(r12: f64, r13: f64, r23: f64) -> f64 {
    0.125 + (r12.asin() + r13.asin() + r23.asin()) / (4.0 * PI)
}

/// Adaptive Simpson quadrature of `f` over `[a, b]` to absolute tolerance `tol`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    #[allow(clippy::too_many_arguments)]
    fn step<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
    if a == b {
        return 0.0;
    }
    // Seed with a fixed split so that narrow features are not missed at depth 0.
    let pieces = 8;
    let h = (b - a) / pieces as f64;
    (0..pieces)
        .map(|i| {
            let (lo, hi) = (a + h * i as f64, a + h * (i + 1) as f64);
            let (flo, fhi) = (f(lo), f(hi));
            let fmid = f(0.5 * (lo + hi));
            let whole = h / 6.0 * (flo + 4.0 * fmid + fhi);
            step(f, lo, hi, flo, fmid, fhi, whole, tol / pieces as f64, 40)
        })
        .sum()
}

/// Upper end of the probability scale used in quadrature; `Φ⁻¹` of this is
/// about 8.2, where the remaining tail mass is below 1e-16.
const U_MAX: f64 = 1.0 - 1e-16;

/// `P(D > 0)` for `D ~ N(0, cov)` in dimension 3, `cov` row-major.
///
/// With `D = L z` (Cholesky), the region is `z1 > 0`, `z2 > -L21 z1 / L22`,
/// and the innermost `z3` integral is a normal tail. The remaining two
/// integrals run over `u = Φ(z)` by adaptive Simpson.
pub fn orthant_3d_quadrature(cov: &[f64; 9], tol: f64) -> Option<f64> {
    let l11 = cov[0].sqrt();
    if !(l11 > 0.0) {
        return None;
    }
    let l21 = cov[3] / l11;
    let l31 = cov[6] / l11;
    let l22 = (cov[4] - l21 * l21).sqrt();
    if !(l22 > 0.0) {
        return None;
    }
    let l32 = (cov[7] - l31 * l21) / l22;
    let l33 = (cov[8] - l31 * l31 - l32 * l32).sqrt();
    if !(l33 > 0.0) {
        return None;
    }
    let inner = |z1: f64| -> f64 {
        let lo = normal_cdf(-l21 * z1 / l22).min(U_MAX);
        let g = |u2: f64| {
            let z2 = normal_quantile(u2.clamp(1e-300, U_MAX));
            normal_cdf((l31 * z1 + l32 * z2) / l33)
        };
        adaptive_simpson(&g, lo, 1.0, tol * 0.1)
    };
    let outer = |u1: f64| inner(normal_quantile(u1.clamp(0.5, U_MAX)));
    Some(adaptive_simpson(&outer, 0.5, 1.0, tol))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sheppard_values() {
        assert_eq!(sheppard(0.0), 0.25);
        assert!((sheppard(0.5) - 1.0 / 3.0).abs() < 1e-15);
        assert!((sheppard(1.0) - 0.5).abs() < 1e-15);
        assert!(sheppard(-1.0).abs() < 1e-15);
    }

    #[test]
    fn simpson_integrates_smooth_functions() {
        let v = adaptive_simpson(&|x: f64| x.sin(), 0.0, PI, 1e-12);
        assert!((v - 2.0).abs() < 1e-10);
        let v = adaptive_simpson(&|x: f64| x.sqrt(), 0.0, 1.0, 1e-10);
        assert!((v - 2.0 / 3.0).abs() < 1e-8);
    }

    #[test]
    fn quadrature_matches_trivariate_closed_form() {
        let cases: [[f64; 9]; 4] = [
            [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
            [1.0, 0.5, 0.5, 0.5, 1.0, 0.5, 0.5, 0.5, 1.0],
            [1.0, -0.5, 0.0, -0.5, 1.0, -0.5, 0.0, -0.5, 1.0],
            [2.0, -1.0, 0.3, -1.0, 2.0, -0.7, 0.3, -0.7, 1.5],
        ];
        for cov in cases {
            let r = |i: usize, j: usize| cov[3 * i + j] / (cov[4 * i] * cov[4 * j]).sqrt();
            let want = trivariate_closed_form(r(0, 1), r(0, 2), r(1, 2));
            let got = orthant_3d_quadrature(&cov, 1e-9).unwrap();
            assert!((got - want).abs() < 1e-6, "{cov:?}: {got} vs {want}");
        }
        assert!(orthant_3d_quadrature(&[1.0, 1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 1.0], 1e-9).is_none());
    }
}
