//! Families of circle equilibria and relative equilibria near the regular
//! polygon: masses that balance a perturbed polygon, the out-of-plane
//! stability threshold of such configurations, and the latitude-circle
//! family that branches off the rotating polygon at the critical speed.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{polar_sin_cos, MassVector, POLE_MARGIN};
use crate::linalg::symmetric_eigen;
use crate::potential::{equilibrium_residual_s1, hessian_blocks_raw};
use crate::spectra::{build_skew_b, critical_alpha_sq};

/// Minimal ratio `σ_{n−1}/σ_n` accepted as a one-dimensional kernel.
pub const KERNEL_GAP: f64 = 1e6;
/// Default half-width, in radians, of the band of angles around the polygon.
pub const PERTURBATION_BOUND: f64 = 0.05;
/// Largest circle residual accepted by [`near_polygon_threshold`].
pub const THRESHOLD_EQUILIBRIUM_TOL: f64 = 1e-9;

/// Singular-value view of the kernel of the skew matrix `B(φ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SkewKernel {
    /// Descending.
    pub singular_values: Vec<f64>,
    /// `σ_{n−1}/σ_n`, infinite when `σ_n = 0`.
    pub gap: f64,
    /// Unit right-singular vector for `σ_n`.
    pub vector: DVector<f64>,
}

pub fn skew_kernel(phi: &[f64]) -> Result<SkewKernel> {
    let b = build_skew_b(phi)?;
    let n = phi.len();
    let svd = b.svd(false, true);
    let v_t = svd.v_t.expect("requested right singular vectors");
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let singular_values: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
    let last = order[n - 1];
    let vector = v_t.row(last).transpose();
    let (small, next) = (singular_values[n - 1], singular_values[n - 2]);
    let gap = if small == 0.0 {
        f64::INFINITY
    } else {
        next / small
    };
    Ok(SkewKernel {
        singular_values,
        gap,
        vector,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MassSolveResult {
    /// Positive masses normalized to `Σ m = n`.
    pub masses: Vec<f64>,
    pub nullspace_dim: usize,
    /// `σ_{n−1}/σ_n` of `B(φ)`.
    pub singular_gap: f64,
    /// `max_i |Σ_j m_j sin(φ_j − φ_i)/|sin(φ_j − φ_i)|³|`.
    pub residual: f64,
}

/// Half the spread of the offsets `φ_k − 2kπ/n` after aligning body 1: the
/// smallest `max_k |φ_k − 2kπ/n − c|` over rotations `c`.
pub fn polygon_offset(phi: &[f64]) -> f64 {
    let n = phi.len() as f64;
    let raw: Vec<f64> = phi
        .iter()
        .enumerate()
        .map(|(k, f)| f - 2.0 * PI * (k + 1) as f64 / n)
        .collect();
    let wrapped: Vec<f64> = raw
        .iter()
        .map(|d| (d - raw[0] + PI).rem_euclid(2.0 * PI) - PI)
        .collect();
    let (lo, hi) = wrapped
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| {
            (a.min(x), b.max(x))
        });
    (hi - lo) / 2.0
}

/// Masses making `φ` an equilibrium on the circle, from the kernel of `B(φ)`,
/// for angles within [`PERTURBATION_BOUND`] of a rotated regular polygon.
pub fn solve_masses(phi: &[f64]) -> Result<MassSolveResult> {
    solve_masses_within(phi, PERTURBATION_BOUND)
}

pub fn solve_masses_within(phi: &[f64], bound: f64) -> Result<MassSolveResult> {
    let n = phi.len();
    if n < 3 || n % 2 == 0 {
        return Err(Error::EvenN { n });
    }
    let offset = polygon_offset(phi);
    if !(offset <= bound) {
        return Err(Error::InvalidInput(format!(
            "angles lie {offset:.3e} rad from the regular polygon, beyond the bound {bound:.3e}"
        )));
    }
    let kernel = skew_kernel(phi)?;
    if !(kernel.gap >= KERNEL_GAP) {
        return Err(Error::KernelDimensionError {
            gap: kernel.gap,
            required: KERNEL_GAP,
        });
    }
    let sum: f64 = kernel.vector.sum();
    let masses: Vec<f64> = kernel.vector.iter().map(|x| x * n as f64 / sum).collect();
    if masses.iter().any(|&m| !(m > 0.0)) {
        return Err(Error::NonPositiveMasses { masses });
    }
    let residual = equilibrium_residual_s1(&MassVector::new(masses.clone())?, phi)?
        .iter()
        .fold(0.0f64, |a, b| a.max(b.abs()));
    Ok(MassSolveResult {
        masses,
        nullspace_dim: 1,
        singular_gap: kernel.gap,
        residual,
    })
}

/// Critical squared angular velocity of an equatorial circle equilibrium:
/// the largest eigenvalue of `E^{1/2} H_θθ E^{1/2}` with `E = diag(1/m)`,
/// which is where the out-of-plane block `H_θθ − α² diag(m)` stops having a
/// positive direction.
pub fn near_polygon_threshold(phi: &[f64], masses: &MassVector) -> Result<f64> {
    let residual = equilibrium_residual_s1(masses, phi)?
        .iter()
        .fold(0.0f64, |a, b| a.max(b.abs()));
    if !(residual <= THRESHOLD_EQUILIBRIUM_TOL) {
        return Err(Error::NotAnEquilibrium {
            residual,
            tolerance: THRESHOLD_EQUILIBRIUM_TOL,
        });
    }
    let n = phi.len();
    let (_, htt) = hessian_blocks_raw(masses.as_slice(), phi, &vec![PI / 2.0; n])?;
    let scale = DVector::from_iterator(n, masses.as_slice().iter().map(|m| 1.0 / m.sqrt()));
    let weighted = DMatrix::from_fn(n, n, |i, j| scale[i] * htt[(i, j)] * scale[j]);
    Ok(symmetric_eigen(&weighted).max())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyPoint {
    pub theta: f64,
    pub alpha_sq: f64,
    /// Distances from body 1 to bodies 2..n.
    pub d1j: Vec<f64>,
}

impl FamilyPoint {
    /// Positive angular velocity of the rotating latitude circle.
    pub fn alpha(&self) -> f64 {
        self.alpha_sq.sqrt()
    }
}

/// Squared angular velocity at which the regular n-gon on the latitude
/// circle `θ` rotates rigidly about the `z`-axis:
/// `α² = Σ_{j=2}^n (1 − cos((j−1)2π/n)) / sin³ d_1j`,
/// `cos d_1j = cos²θ + sin²θ cos((j−1)2π/n)`.
pub fn second_family_alpha_sq(n: usize, theta: f64) -> Result<FamilyPoint> {
    if n < 3 || n % 2 == 0 {
        return Err(Error::EvenN { n });
    }
    if !(POLE_MARGIN..=PI - POLE_MARGIN).contains(&theta) {
        return Err(Error::PoleLatitude { theta });
    }
    let (s, c) = polar_sin_cos(theta);
    let step = 2.0 * PI / n as f64;
    let mut alpha_sq = 0.0;
    let mut d1j = Vec::with_capacity(n - 1);
    for j in 1..n {
        let cw = (j as f64 * step).cos();
        let cd = c * c + s * s * cw;
        let sd2 = 1.0 - cd * cd;
        alpha_sq += (1.0 - cw) / (sd2 * sd2.sqrt());
        d1j.push(cd.clamp(-1.0, 1.0).acos());
    }
    Ok(FamilyPoint {
        theta,
        alpha_sq,
        d1j,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BifurcationScan {
    pub n: usize,
    /// One point per grid value, in grid order.
    pub points: Vec<FamilyPoint>,
    /// `Θ₁`, the critical squared speed of the rotating equatorial polygon.
    pub critical_alpha_sq: f64,
    /// The family evaluated on the equator.
    pub equatorial_alpha_sq: f64,
    /// `|α²(π/2) − Θ₁|`.
    pub intersection_gap: f64,
}

/// `count` equally spaced latitudes strictly inside `(0, π)`.
pub fn latitude_grid(count: usize) -> Vec<f64> {
    (1..=count)
        .map(|k| PI * k as f64 / (count + 1) as f64)
        .collect()
}

pub fn bifurcation_scan(n: usize, theta_grid: &[f64]) -> Result<BifurcationScan> {
    let points = theta_grid
        .iter()
        .map(|&t| second_family_alpha_sq(n, t))
        .collect::<Result<Vec<_>>>()?;
    let theta1 = critical_alpha_sq(n)?;
    let equatorial = second_family_alpha_sq(n, PI / 2.0)?.alpha_sq;
    Ok(BifurcationScan {
        n,
        points,
        critical_alpha_sq: theta1,
        equatorial_alpha_sq: equatorial,
        intersection_gap: (equatorial - theta1).abs(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::rotating_orbit_residual;
    use crate::geometry::{regular_polygon, spherical_point, Point};
    use crate::reduction::{
        jacobi_chart, reduced_field_s2, to_jacobi, ReducedStateS1, ReducedStateS2,
    };
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn polygon_masses_are_uniform() {
        for n in [3, 5, 7, 9] {
            let poly = regular_polygon(n).unwrap();
            let r = solve_masses(poly.phi()).unwrap();
            assert_eq!(r.nullspace_dim, 1);
            for m in &r.masses {
                assert_abs_diff_eq!(*m, 1.0, epsilon = 1e-12);
            }
        }
        assert_eq!(
            solve_masses(&[0.0, 1.0, 2.0, 3.0]),
            Err(Error::EvenN { n: 4 })
        );
    }

    #[test]
    fn perturbed_triangle() {
        let poly = regular_polygon(3).unwrap();
        let phi: Vec<f64> = poly
            .phi()
            .iter()
            .zip([0.03, -0.02, 0.0])
            .map(|(a, b)| a + b)
            .collect();
        let r = solve_masses(&phi).unwrap();
        assert!(r.masses.iter().all(|&m| m > 0.0));
        assert!(r.residual <= 1e-10);
        assert_abs_diff_eq!(r.masses.iter().sum::<f64>(), 3.0, epsilon = 1e-12);
        assert!(r.masses.iter().any(|m| (m - 1.0).abs() > 1e-3));
    }

    #[test]
    fn far_configurations_are_rejected() {
        let phi = [0.0, 1.0, 2.2, 3.9, 5.0];
        assert!(matches!(solve_masses(&phi), Err(Error::InvalidInput(_))));
        // a rotated polygon is still a polygon
        let poly = regular_polygon(5).unwrap();
        let rotated: Vec<f64> = poly.phi().iter().map(|f| f + 2.5).collect();
        assert!(polygon_offset(&rotated) < 1e-12);
        assert!(solve_masses(&rotated).is_ok());
    }

    #[test]
    fn threshold_examples() {
        for n in [3, 5, 7] {
            let poly = regular_polygon(n).unwrap();
            let t = near_polygon_threshold(poly.phi(), &MassVector::uniform(n)).unwrap();
            assert_abs_diff_eq!(
                t,
                critical_alpha_sq(n).unwrap(),
                epsilon = 1e-10 * (1.0 + t)
            );
        }
        let poly = regular_polygon(5).unwrap();
        let phi: Vec<f64> = poly
            .phi()
            .iter()
            .enumerate()
            .map(|(k, f)| f + 1e-4 * ((k * 7 % 5) as f64 - 2.0) / 2.0)
            .collect();
        let r = solve_masses(&phi).unwrap();
        let t = near_polygon_threshold(&phi, &MassVector::new(r.masses).unwrap()).unwrap();
        assert!((t - critical_alpha_sq(5).unwrap()).abs() <= 1e-2);
        let bad = MassVector::new(vec![1.0, 1.0, 2.0]).unwrap();
        assert!(matches!(
            near_polygon_threshold(regular_polygon(3).unwrap().phi(), &bad),
            Err(Error::NotAnEquilibrium { .. })
        ));
    }

    #[test]
    fn second_family_examples() {
        let p = second_family_alpha_sq(3, PI / 2.0).unwrap();
        assert_abs_diff_eq!(p.alpha_sq, 4.618802153517006, epsilon = 1e-12);
        for n in [3, 5, 7] {
            let t = critical_alpha_sq(n).unwrap();
            assert!(
                (second_family_alpha_sq(n, PI / 2.0).unwrap().alpha_sq - t).abs()
                    <= 1e-12 * (1.0 + t)
            );
            for theta in [0.3, 1.0, PI / 3.0] {
                let a = second_family_alpha_sq(n, theta).unwrap().alpha_sq;
                let b = second_family_alpha_sq(n, PI - theta).unwrap().alpha_sq;
                assert_abs_diff_eq!(a, b, epsilon = 1e-12 * a);
                assert!(a > 0.0);
            }
        }
        assert!(matches!(
            second_family_alpha_sq(3, 1e-10),
            Err(Error::PoleLatitude { .. })
        ));
        assert!(matches!(
            second_family_alpha_sq(3, PI),
            Err(Error::PoleLatitude { .. })
        ));
    }

    #[test]
    fn second_family_is_a_reduced_fixed_point() {
        let n = 3;
        let theta = PI / 3.0;
        let point = second_family_alpha_sq(n, theta).unwrap();
        let alpha = point.alpha();
        let chart = jacobi_chart(&MassVector::uniform(n));
        let poly = regular_polygon(n).unwrap();
        let p_phi = vec![alpha * theta.sin().powi(2); n];
        let s1 = ReducedStateS1::from(to_jacobi(&chart, poly.phi(), &p_phi).unwrap());
        let state = ReducedStateS2 {
            u: s1.u,
            theta: vec![theta; n],
            v: s1.v,
            p_theta: vec![0.0; n],
            big_g: s1.big_g,
        };
        let f = reduced_field_s2(&chart, &state).unwrap();
        assert!(f.iter().all(|x| x.abs() <= 1e-9), "{f:?}");
    }

    #[test]
    fn second_family_orbits_solve_the_equations() {
        for n in [3, 5] {
            for theta in [PI / 3.0, 2.0 * PI / 5.0] {
                let point = second_family_alpha_sq(n, theta).unwrap();
                let poly = regular_polygon(n).unwrap();
                let q0: Vec<Point> = poly
                    .phi()
                    .iter()
                    .map(|&f| spherical_point(f, theta))
                    .collect();
                let times: Vec<f64> = (0..10).map(|k| 0.5 * k as f64).collect();
                let r = rotating_orbit_residual(
                    &MassVector::uniform(n),
                    &q0,
                    point.alpha(),
                    0.0,
                    &times,
                )
                .unwrap();
                assert!(r <= 1e-9, "n={n} theta={theta}: {r}");
            }
        }
    }

    #[test]
    fn scan_examples() {
        for n in [3, 5] {
            let s = bifurcation_scan(n, &latitude_grid(99)).unwrap();
            assert_eq!(s.points.len(), 99);
            assert!(s.intersection_gap <= 1e-10);
        }
        assert!(matches!(
            bifurcation_scan(3, &[0.5, 0.0]),
            Err(Error::PoleLatitude { .. })
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]

        #[test]
        fn near_polygon_masses_balance(
            n in prop::sample::select(vec![3usize, 5, 7]),
            noise in prop::collection::vec(-0.05..0.05f64, 7),
        ) {
            let poly = regular_polygon(n).unwrap();
            let phi: Vec<f64> = poly.phi().iter().zip(&noise).map(|(a, b)| a + b).collect();
            let r = solve_masses(&phi).unwrap();
            prop_assert!(r.masses.iter().all(|&m| m > 0.0));
            prop_assert!(r.residual <= 1e-10);
        }
    }
}
