//! Charts, geodesic distances, the block rotations `A(alpha, beta)(t)` and the
//! regular polygon on the unit three-sphere embedded in 4-space.
//!
//! Points are stored as `Vector4` `(x, y, z, w)`. The two-sphere is the slice
//! `w = 0` and the circle is its equator `z = w = 0`; the spherical chart is
//! `(x, y, z) = (sin θ cos φ, sin θ sin φ, cos θ)`.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{Matrix4, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on `‖q‖ = 1` accepted by [`CartesianConfig::new`].
pub const UNIT_NORM_TOL: f64 = 1e-12;
/// Pairs with `|cos d| >= 1 - ANTIPODAL_TOL` are treated as coincident or antipodal.
pub const ANTIPODAL_TOL: f64 = 1e-14;
/// Minimum distance of a polar angle from `{0, π}` in the spherical chart.
pub const POLE_MARGIN: f64 = 1e-8;

pub type Point = Vector4<f64>;

/// Positive body masses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct MassVector(Vec<f64>);

impl MassVector {
    pub fn new(masses: Vec<f64>) -> Result<Self> {
        if masses.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "need at least two masses, got {}",
                masses.len()
            )));
        }
        if let Some((i, m)) = masses
            .iter()
            .enumerate()
            .find(|(_, m)| !(m.is_finite() && **m > 0.0))
        {
            return Err(Error::InvalidInput(format!(
                "mass {i} must be positive and finite, got {m}"
            )));
        }
        Ok(Self(masses))
    }

    pub fn uniform(n: usize) -> Self {
        Self(vec![1.0; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }

    /// Partial sums `μ_k = m_1 + … + m_k`.
    pub fn partial_sums(&self) -> Vec<f64> {
        self.0
            .iter()
            .scan(0.0, |acc, m| {
                *acc += m;
                Some(*acc)
            })
            .collect()
    }
}

impl TryFrom<Vec<f64>> for MassVector {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<MassVector> for Vec<f64> {
    fn from(m: MassVector) -> Self {
        m.0
    }
}

impl std::ops::Index<usize> for MassVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Which great sphere a configuration is confined to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Chart {
    S1,
    S2,
    S3,
}

/// `n` unit vectors in 4-space.
///
/// Construction checks the unit norm and the chart constraint. Membership in
/// the singular set is checked by the operations that are undefined there.
#[derive(Debug, Clone, PartialEq)]
pub struct CartesianConfig {
    points: Vec<Point>,
    chart: Chart,
}

impl CartesianConfig {
    pub fn new(points: Vec<Point>, chart: Chart) -> Result<Self> {
        for (i, q) in points.iter().enumerate() {
            if (q.norm() - 1.0).abs() > UNIT_NORM_TOL {
                return Err(Error::InvalidInput(format!(
                    "point {i} is not on the unit sphere (norm {})",
                    q.norm()
                )));
            }
            let off_chart = match chart {
                Chart::S1 => q[2].abs() > UNIT_NORM_TOL || q[3].abs() > UNIT_NORM_TOL,
                Chart::S2 => q[3].abs() > UNIT_NORM_TOL,
                Chart::S3 => false,
            };
            if off_chart {
                return Err(Error::InvalidInput(format!(
                    "point {i} does not lie on {chart:?}"
                )));
            }
        }
        Ok(Self { points, chart })
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn chart(&self) -> Chart {
        self.chart
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn into_points(self) -> Vec<Point> {
        self.points
    }
}

/// Spherical-chart configuration on the two-sphere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SphericalConfig {
    phi: Vec<f64>,
    theta: Vec<f64>,
}

impl SphericalConfig {
    /// Validates lengths, the pole margin and that no two bodies coincide or
    /// are antipodal.
    pub fn new(phi: Vec<f64>, theta: Vec<f64>) -> Result<Self> {
        if phi.len() != theta.len() {
            return Err(Error::InvalidInput(format!(
                "phi has {} entries but theta has {}",
                phi.len(),
                theta.len()
            )));
        }
        if phi.iter().chain(theta.iter()).any(|a| !a.is_finite()) {
            return Err(Error::InvalidInput("angles must be finite".into()));
        }
        for (index, &t) in theta.iter().enumerate() {
            if t < POLE_MARGIN || t > PI - POLE_MARGIN {
                return Err(Error::PoleSingularity { index, theta: t });
            }
        }
        let cfg = Self { phi, theta };
        let pts = cfg.points();
        check_outside_singular_set(&pts)?;
        Ok(cfg)
    }

    /// All bodies on the equator `θ = π/2`.
    pub fn equatorial(phi: Vec<f64>) -> Result<Self> {
        let theta = vec![PI / 2.0; phi.len()];
        Self::new(phi, theta)
    }

    pub fn phi(&self) -> &[f64] {
        &self.phi
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn len(&self) -> usize {
        self.phi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phi.is_empty()
    }

    fn points(&self) -> Vec<Point> {
        self.phi
            .iter()
            .zip(&self.theta)
            .map(|(&p, &t)| spherical_point(p, t))
            .collect()
    }
}

/// `(sin θ, cos θ)`, with the floating-point `π/2` sent exactly to `(1, 0)`.
///
/// `cos(π/2)` evaluates to about 6e-17; left alone, that offset seeds the
/// out-of-plane instability of equatorial configurations.
pub fn polar_sin_cos(theta: f64) -> (f64, f64) {
    if theta == FRAC_PI_2 {
        (1.0, 0.0)
    } else {
        theta.sin_cos()
    }
}

/// The chart map for a single point; no margin checks.
pub fn spherical_point(phi: f64, theta: f64) -> Point {
    let (st, ct) = polar_sin_cos(theta);
    let (sp, cp) = phi.sin_cos();
    Vector4::new(st * cp, st * sp, ct, 0.0)
}

pub fn spherical_to_cartesian(cfg: &SphericalConfig) -> CartesianConfig {
    CartesianConfig {
        points: cfg.points(),
        chart: Chart::S2,
    }
}

/// Inverse chart. `φ` is returned in `[0, 2π)`.
pub fn cartesian_to_spherical(cfg: &CartesianConfig) -> Result<SphericalConfig> {
    if cfg.chart == Chart::S3 {
        return Err(Error::InvalidInput(
            "spherical chart covers only the w = 0 two-sphere".into(),
        ));
    }
    let (phi, theta) = cfg
        .points
        .iter()
        .map(|q| {
            let rho = q[0].hypot(q[1]);
            (q[1].atan2(q[0]).rem_euclid(2.0 * PI), rho.atan2(q[2]))
        })
        .unzip();
    SphericalConfig::new(phi, theta)
}

/// `cos d` clamped to `[-1, 1]`.
pub fn cos_distance(a: &Point, b: &Point) -> f64 {
    a.dot(b).clamp(-1.0, 1.0)
}

pub fn geodesic_distance(a: &Point, b: &Point) -> Result<f64> {
    geodesic_distance_with_tol(a, b, ANTIPODAL_TOL)
}

pub fn geodesic_distance_with_tol(a: &Point, b: &Point, tol: f64) -> Result<f64> {
    let c = cos_distance(a, b);
    if c.abs() >= 1.0 - tol {
        return Err(Error::AntipodalOrCoincident {
            i: 0,
            j: 1,
            cos_abs: c.abs(),
        });
    }
    Ok(c.acos())
}

pub(crate) fn check_outside_singular_set(points: &[Point]) -> Result<()> {
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            let c = cos_distance(&points[i], &points[j]);
            if c.abs() >= 1.0 - ANTIPODAL_TOL {
                return Err(Error::SingularConfiguration {
                    i,
                    j,
                    cos_abs: c.abs(),
                });
            }
        }
    }
    Ok(())
}

/// Angular velocities and time of the rotation `A(alpha, beta)(t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RotationParams {
    pub alpha: f64,
    pub beta: f64,
    pub t: f64,
}

impl RotationParams {
    /// Rotation by `αt` in the `(x, y)` plane and `βt` in the `(z, w)` plane.
    pub fn matrix(&self) -> Matrix4<f64> {
        let (sa, ca) = (self.alpha * self.t).sin_cos();
        let (sb, cb) = (self.beta * self.t).sin_cos();
        #[rustfmt::skip]
        let m = Matrix4::new(
            ca, -sa, 0.0, 0.0,
            sa,  ca, 0.0, 0.0,
            0.0, 0.0, cb, -sb,
            0.0, 0.0, sb,  cb,
        );
        m
    }

    /// Time derivative `d/dt A(t)`.
    pub fn matrix_rate(&self) -> Matrix4<f64> {
        let (sa, ca) = (self.alpha * self.t).sin_cos();
        let (sb, cb) = (self.beta * self.t).sin_cos();
        let (a, b) = (self.alpha, self.beta);
        #[rustfmt::skip]
        let m = Matrix4::new(
            -a * sa, -a * ca, 0.0, 0.0,
             a * ca, -a * sa, 0.0, 0.0,
            0.0, 0.0, -b * sb, -b * cb,
            0.0, 0.0,  b * cb, -b * sb,
        );
        m
    }

    /// Second time derivative `d²/dt² A(t)`.
    pub fn matrix_accel(&self) -> Matrix4<f64> {
        let (sa, ca) = (self.alpha * self.t).sin_cos();
        let (sb, cb) = (self.beta * self.t).sin_cos();
        let (a2, b2) = (self.alpha * self.alpha, self.beta * self.beta);
        #[rustfmt::skip]
        let m = Matrix4::new(
            -a2 * ca,  a2 * sa, 0.0, 0.0,
            -a2 * sa, -a2 * ca, 0.0, 0.0,
            0.0, 0.0, -b2 * cb,  b2 * sb,
            0.0, 0.0, -b2 * sb, -b2 * cb,
        );
        m
    }
}

pub fn apply_rotation(cfg: &CartesianConfig, r: &RotationParams) -> CartesianConfig {
    let a = r.matrix();
    let points = cfg.points.iter().map(|q| a * q).collect();
    // a (z, w) rotation leaves the S1/S2 slices only when beta t is a multiple of 2π
    let chart = if r.beta * r.t == 0.0 {
        cfg.chart
    } else {
        Chart::S3
    };
    CartesianConfig { points, chart }
}

/// The regular n-gon on the equator: `φ_k = 2kπ/n` for `k = 1..n`, `θ_k = π/2`.
pub fn regular_polygon(n: usize) -> Result<SphericalConfig> {
    if n < 3 || n % 2 == 0 {
        return Err(Error::EvenN { n });
    }
    let phi = (1..=n).map(|k| 2.0 * PI * k as f64 / n as f64).collect();
    SphericalConfig::equatorial(phi)
}

/// Smallest `min(d_ij, π - d_ij)` over all pairs; zero means the
/// configuration touches the singular set.
pub fn min_separation(cfg: &CartesianConfig) -> f64 {
    min_separation_points(&cfg.points)
}

pub(crate) fn min_separation_points(points: &[Point]) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            let d = cos_distance(&points[i], &points[j]).acos();
            best = best.min(d.min(PI - d));
        }
    }
    best
}
