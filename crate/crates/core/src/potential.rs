//! The cotangent potential `U = Σ_{i<j} m_i m_j cot d_ij`, its derivatives in the
//! Cartesian and spherical charts, and equilibrium residuals.
//!
//! `sin d` is always taken as `sqrt(1 - cos² d)` with `cos d` from the inner
//! product, never through `arccos`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    cos_distance, polar_sin_cos, CartesianConfig, MassVector, Point, SphericalConfig, ANTIPODAL_TOL,
};

/// Residual at or below which a configuration is declared an equilibrium.
pub const EQUILIBRIUM_TOL: f64 = 1e-10;
/// Step of the central differences used for the mixed `φθ` Hessian block.
pub const MIXED_FD_STEP: f64 = 1e-5;

fn check_len(masses: &MassVector, n: usize) -> Result<()> {
    if masses.len() != n {
        return Err(Error::InvalidInput(format!(
            "{} masses given for {} bodies",
            masses.len(),
            n
        )));
    }
    Ok(())
}

fn pair_sin(c: f64, i: usize, j: usize) -> Result<f64> {
    if c.abs() >= 1.0 - ANTIPODAL_TOL {
        return Err(Error::SingularConfiguration {
            i,
            j,
            cos_abs: c.abs(),
        });
    }
    Ok((1.0 - c * c).sqrt())
}

pub fn potential_u(masses: &MassVector, cfg: &CartesianConfig) -> Result<f64> {
    check_len(masses, cfg.len())?;
    let q = cfg.points();
    let m = masses.as_slice();
    let mut u = 0.0;
    for i in 0..q.len() {
        for j in i + 1..q.len() {
            let c = cos_distance(&q[i], &q[j]);
            let s = pair_sin(c, i, j)?;
            u += m[i] * m[j] * c / s;
        }
    }
    Ok(u)
}

pub fn potential_spherical(masses: &MassVector, cfg: &SphericalConfig) -> Result<f64> {
    check_len(masses, cfg.len())?;
    potential_raw(masses.as_slice(), cfg.phi(), cfg.theta())
}

pub(crate) fn potential_raw(m: &[f64], phi: &[f64], theta: &[f64]) -> Result<f64> {
    let n = phi.len();
    let mut u = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let c = spherical_cos(phi, theta, i, j);
            let s = pair_sin(c, i, j)?;
            u += m[i] * m[j] * c / s;
        }
    }
    Ok(u)
}

/// `∇_{q_i} U = Σ_{j≠i} m_i m_j (q_j − cos d_ij q_i) / sin³ d_ij`, tangent to the sphere at `q_i`.
pub fn grad_cartesian(masses: &MassVector, cfg: &CartesianConfig) -> Result<Vec<Point>> {
    check_len(masses, cfg.len())?;
    grad_cartesian_points(masses.as_slice(), cfg.points())
}

pub(crate) fn grad_cartesian_points(m: &[f64], q: &[Point]) -> Result<Vec<Point>> {
    let n = q.len();
    let mut g = vec![Point::zeros(); n];
    for i in 0..n {
        for j in i + 1..n {
            let c = cos_distance(&q[i], &q[j]);
            let s = pair_sin(c, i, j)?;
            let w = m[i] * m[j] / (s * s * s);
            g[i] += (q[j] - q[i] * c) * w;
            g[j] += (q[i] - q[j] * c) * w;
        }
    }
    Ok(g)
}

/// Partial derivatives of `U` in the spherical chart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SphericalGradient {
    pub d_phi: Vec<f64>,
    pub d_theta: Vec<f64>,
}

impl SphericalGradient {
    pub fn max_abs(&self) -> f64 {
        self.d_phi
            .iter()
            .chain(&self.d_theta)
            .fold(0.0f64, |a, b| a.max(b.abs()))
    }
}

pub fn grad_spherical(masses: &MassVector, cfg: &SphericalConfig) -> Result<SphericalGradient> {
    check_len(masses, cfg.len())?;
    grad_spherical_raw(masses.as_slice(), cfg.phi(), cfg.theta())
}

#[inline]
fn spherical_cos(phi: &[f64], theta: &[f64], i: usize, j: usize) -> f64 {
    let (si, ci) = polar_sin_cos(theta[i]);
    let (sj, cj) = polar_sin_cos(theta[j]);
    (ci * cj + si * sj * (phi[i] - phi[j]).cos()).clamp(-1.0, 1.0)
}

/// First and second derivatives of `cos d_ij` with respect to the chart
/// coordinates of the pair.
struct PairTerms {
    c: f64,
    s: f64,
    c_phi_i: f64,
    c_theta_i: f64,
    c_theta_j: f64,
    c_phi_phi_ij: f64,
    c_theta_theta_ij: f64,
}

fn pair_terms(phi: &[f64], theta: &[f64], i: usize, j: usize) -> Result<PairTerms> {
    let (sti, cti) = polar_sin_cos(theta[i]);
    let (stj, ctj) = polar_sin_cos(theta[j]);
    let (sd, cd) = (phi[i] - phi[j]).sin_cos();
    let c = (cti * ctj + sti * stj * cd).clamp(-1.0, 1.0);
    let s = pair_sin(c, i, j)?;
    Ok(PairTerms {
        c,
        s,
        c_phi_i: -sti * stj * sd,
        c_theta_i: cti * stj * cd - sti * ctj,
        c_theta_j: sti * ctj * cd - cti * stj,
        c_phi_phi_ij: sti * stj * cd,
        c_theta_theta_ij: cti * ctj * cd + sti * stj,
    })
}

pub(crate) fn grad_spherical_raw(
    m: &[f64],
    phi: &[f64],
    theta: &[f64],
) -> Result<SphericalGradient> {
    let n = phi.len();
    let mut d_phi = vec![0.0; n];
    let mut d_theta = vec![0.0; n];
    for i in 0..n {
        for j in i + 1..n {
            let t = pair_terms(phi, theta, i, j)?;
            let w = m[i] * m[j] / (t.s * t.s * t.s);
            d_phi[i] += w * t.c_phi_i;
            d_phi[j] -= w * t.c_phi_i;
            d_theta[i] += w * t.c_theta_i;
            d_theta[j] += w * t.c_theta_j;
        }
    }
    Ok(SphericalGradient { d_phi, d_theta })
}

/// Hessian of `U` in the `(φ, θ)` chart.
#[derive(Debug, Clone, PartialEq)]
pub struct SphericalHessian {
    pub phi_block: DMatrix<f64>,
    pub theta_block: DMatrix<f64>,
    /// `mixed_block[(i, j)] = ∂²U/∂θ_i∂φ_j`, by central differences.
    pub mixed_block: DMatrix<f64>,
    pub evaluation_point: SphericalConfig,
}

/// Analytic `φφ` and `θθ` blocks; the mixed block is differenced from the
/// analytic gradient with step [`MIXED_FD_STEP`].
pub fn hessian_spherical(masses: &MassVector, cfg: &SphericalConfig) -> Result<SphericalHessian> {
    check_len(masses, cfg.len())?;
    let m = masses.as_slice();
    let (phi_block, theta_block) = hessian_blocks_raw(m, cfg.phi(), cfg.theta())?;
    let n = cfg.len();
    let mut mixed_block = DMatrix::zeros(n, n);
    let mut theta = cfg.theta().to_vec();
    for i in 0..n {
        let t0 = theta[i];
        theta[i] = t0 + MIXED_FD_STEP;
        let plus = grad_spherical_raw(m, cfg.phi(), &theta)?;
        theta[i] = t0 - MIXED_FD_STEP;
        let minus = grad_spherical_raw(m, cfg.phi(), &theta)?;
        theta[i] = t0;
        for j in 0..n {
            mixed_block[(i, j)] = (plus.d_phi[j] - minus.d_phi[j]) / (2.0 * MIXED_FD_STEP);
        }
    }
    Ok(SphericalHessian {
        phi_block,
        theta_block,
        mixed_block,
        evaluation_point: cfg.clone(),
    })
}

/// Uses `∂²cot d/∂x∂y = (3 cos d · c_x c_y + sin² d · c_xy) / sin⁵ d` with `c = cos d`.
pub(crate) fn hessian_blocks_raw(
    m: &[f64],
    phi: &[f64],
    theta: &[f64],
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = phi.len();
    let mut hpp = DMatrix::zeros(n, n);
    let mut htt = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            let t = pair_terms(phi, theta, i, j)?;
            let w = m[i] * m[j];
            let s2 = t.s * t.s;
            let s5 = s2 * s2 * t.s;
            // φ: c_{φj} = -c_{φi}, c_{φiφi} = c_{φjφj} = -c_{φiφj}
            let off_pp = w * (-3.0 * t.c * t.c_phi_i * t.c_phi_i + s2 * t.c_phi_phi_ij) / s5;
            hpp[(i, j)] = off_pp;
            hpp[(j, i)] = off_pp;
            hpp[(i, i)] -= off_pp;
            hpp[(j, j)] -= off_pp;

            let off_tt = w * (3.0 * t.c * t.c_theta_i * t.c_theta_j + s2 * t.c_theta_theta_ij) / s5;
            htt[(i, j)] = off_tt;
            htt[(j, i)] = off_tt;
            // c_{θiθi} = c_{θjθj} = -cos d
            htt[(i, i)] += w * (3.0 * t.c * t.c_theta_i * t.c_theta_i - s2 * t.c) / s5;
            htt[(j, j)] += w * (3.0 * t.c * t.c_theta_j * t.c_theta_j - s2 * t.c) / s5;
        }
    }
    Ok((hpp, htt))
}

/// Residual of `Σ_{j≠i} m_j q_j / sin³ d_ij − λ_i q_i = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumResidual {
    pub residual_vectors: Vec<Point>,
    pub lambda: Vec<f64>,
    pub max_norm: f64,
}

impl EquilibriumResidual {
    pub fn is_equilibrium(&self) -> bool {
        self.max_norm <= EQUILIBRIUM_TOL
    }
}

/// `λ_i = Σ_{j≠i} m_j cos d_ij / sin³ d_ij`; then `m_i · residual_i = ∇_{q_i} U`.
pub fn equilibrium_residual_cartesian(
    masses: &MassVector,
    cfg: &CartesianConfig,
) -> Result<EquilibriumResidual> {
    check_len(masses, cfg.len())?;
    let q = cfg.points();
    let m = masses.as_slice();
    let n = q.len();
    let mut sum = vec![Point::zeros(); n];
    let mut lambda = vec![0.0; n];
    for i in 0..n {
        for j in i + 1..n {
            let c = cos_distance(&q[i], &q[j]);
            let s = pair_sin(c, i, j)?;
            let s3 = s * s * s;
            sum[i] += q[j] * (m[j] / s3);
            sum[j] += q[i] * (m[i] / s3);
            lambda[i] += m[j] * c / s3;
            lambda[j] += m[i] * c / s3;
        }
    }
    let residual_vectors: Vec<Point> = sum
        .iter()
        .zip(q)
        .zip(&lambda)
        .map(|((s, qi), l)| s - qi * *l)
        .collect();
    let max_norm = residual_vectors.iter().fold(0.0f64, |a, r| a.max(r.norm()));
    Ok(EquilibriumResidual {
        residual_vectors,
        lambda,
        max_norm,
    })
}

/// Left-hand sides `Σ_{j≠i} m_j sin(φ_j − φ_i) / sin³ d_ij` for bodies on the circle.
pub fn equilibrium_residual_s1(masses: &MassVector, phi: &[f64]) -> Result<Vec<f64>> {
    check_len(masses, phi.len())?;
    let m = masses.as_slice();
    let n = phi.len();
    let mut r = vec![0.0; n];
    for i in 0..n {
        for j in i + 1..n {
            let (s, c) = (phi[j] - phi[i]).sin_cos();
            let sd = pair_sin(c, i, j)?;
            let k = s / (sd * sd * sd);
            r[i] += m[j] * k;
            r[j] -= m[i] * k;
        }
    }
    Ok(r)
}
