//! Jacobi coordinates for the rotation symmetry about the `z`-axis, the reduced
//! Hamiltonians on the circle and on the two-sphere, and the linear stability
//! of the reduced equilibria generated by the regular polygon.
//!
//! The transformation is `u = 𝒜φ`, `p_φ = 𝒜ᵀv`; the last components of `u`
//! and `v` are the cyclic angle `g_n` (mass-weighted mean of `φ`) and the total
//! angular momentum `G_n = Σ p_φ`. The kinetic form becomes
//! `𝒜 M 𝒜ᵀ = diag(1/M_2, …, 1/M_n, 1/μ_n)` with `M = diag(1/m_i)`.
//!
//! Reduced phase points are ordered `(u_2..u_n, θ_1..θ_n, v_2..v_n, p_θ1..p_θn)`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{polar_sin_cos, regular_polygon, MassVector, POLE_MARGIN};
use crate::linalg::symmetric_eigen;
use crate::potential::{grad_spherical_raw, hessian_blocks_raw, potential_raw};
use crate::spectra::critical_alpha_sq;

/// Relative width of the band around `Θ₁` reported as [`Verdict::Critical`].
pub const CRITICAL_BAND: f64 = 1e-9;
/// Zero-eigenvalue threshold for the block products, scaled by `1 + ‖block‖`.
pub const ZERO_EIGEN_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct JacobiChart {
    /// The matrix 𝒜.
    pub a: DMatrix<f64>,
    /// 𝒜⁻¹ = M 𝒜ᵀ M̃⁻¹.
    pub a_inv: DMatrix<f64>,
    /// Partial sums μ_1..μ_n.
    pub mu: Vec<f64>,
    /// Reduced masses M_2..M_n, `M_k = m_k μ_{k−1} / μ_k`.
    pub big_m: Vec<f64>,
    pub total_mass: f64,
    pub masses: MassVector,
}

pub fn jacobi_chart(masses: &MassVector) -> JacobiChart {
    let n = masses.len();
    let m = masses.as_slice();
    let mu = masses.partial_sums();
    let mut a = DMatrix::zeros(n, n);
    for k in 0..n - 1 {
        for i in 0..=k {
            a[(k, i)] = -m[i] / mu[k];
        }
        a[(k, k + 1)] = 1.0;
    }
    for i in 0..n {
        a[(n - 1, i)] = m[i] / mu[n - 1];
    }
    let big_m: Vec<f64> = (1..n).map(|k| m[k] * mu[k - 1] / mu[k]).collect();
    let mut tilde_inv: Vec<f64> = big_m.clone();
    tilde_inv.push(mu[n - 1]);
    let a_inv = DMatrix::from_fn(n, n, |r, c| a[(c, r)] / m[r] * tilde_inv[c]);
    JacobiChart {
        a,
        a_inv,
        total_mass: mu[n - 1],
        mu,
        big_m,
        masses: masses.clone(),
    }
}

impl JacobiChart {
    pub fn n(&self) -> usize {
        self.mu.len()
    }

    /// Diagonal of M̃ = 𝒜 M 𝒜ᵀ: `(1/M_2, …, 1/M_n, 1/μ_n)`.
    pub fn kinetic_diagonal(&self) -> Vec<f64> {
        self.big_m
            .iter()
            .map(|m| 1.0 / m)
            .chain([1.0 / self.total_mass])
            .collect()
    }

    /// `φ = 𝒜⁻¹ (u, g_n)` with `u` of length `n − 1`.
    fn angles(&self, u: &[f64], g: f64) -> Vec<f64> {
        let full = DVector::from_iterator(self.n(), u.iter().copied().chain([g]));
        (&self.a_inv * full).iter().copied().collect()
    }

    /// `p_φ = 𝒜ᵀ (v, G_n)`.
    fn momenta(&self, v: &[f64], big_g: f64) -> Vec<f64> {
        let full = DVector::from_iterator(self.n(), v.iter().copied().chain([big_g]));
        (self.a.transpose() * full).iter().copied().collect()
    }

    /// `𝒜⁻ᵀ x`, the chain rule from `∂/∂φ` to `∂/∂(u, g_n)`.
    fn pull_back(&self, x: &[f64]) -> Vec<f64> {
        (self.a_inv.transpose() * DVector::from_column_slice(x))
            .iter()
            .copied()
            .collect()
    }
}

/// Full Jacobi point; the last entries are `g_n` and `G_n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JacobiPoint {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

pub fn to_jacobi(chart: &JacobiChart, phi: &[f64], p_phi: &[f64]) -> Result<JacobiPoint> {
    let n = chart.n();
    if phi.len() != n || p_phi.len() != n {
        return Err(Error::InvalidInput(format!(
            "expected {n} angles and momenta, got {} and {}",
            phi.len(),
            p_phi.len()
        )));
    }
    let u = (&chart.a * DVector::from_column_slice(phi))
        .iter()
        .copied()
        .collect();
    // v = 𝒜⁻ᵀ p_φ
    let v = chart.pull_back(p_phi);
    Ok(JacobiPoint { u, v })
}

/// Inverse of [`to_jacobi`]: returns `(φ, p_φ)`.
pub fn from_jacobi(chart: &JacobiChart, point: &JacobiPoint) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = chart.n();
    if point.u.len() != n || point.v.len() != n {
        return Err(Error::InvalidInput(format!(
            "expected {n} Jacobi coordinates and momenta"
        )));
    }
    let phi = chart.angles(&point.u[..n - 1], point.u[n - 1]);
    let p_phi = chart.momenta(&point.v[..n - 1], point.v[n - 1]);
    Ok((phi, p_phi))
}

/// Point of the reduced circle problem on the leaf `G_n = const`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReducedStateS1 {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub big_g: f64,
    /// Cyclic angle, only used to reconstruct absolute positions.
    pub small_g: f64,
}

impl From<JacobiPoint> for ReducedStateS1 {
    fn from(mut p: JacobiPoint) -> Self {
        let small_g = p.u.pop().expect("empty Jacobi point");
        let big_g = p.v.pop().expect("empty Jacobi point");
        Self {
            u: p.u,
            v: p.v,
            big_g,
            small_g,
        }
    }
}

/// Point of the partially reduced two-sphere problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReducedStateS2 {
    pub u: Vec<f64>,
    pub theta: Vec<f64>,
    pub v: Vec<f64>,
    pub p_theta: Vec<f64>,
    pub big_g: f64,
}

impl ReducedStateS2 {
    /// Unreduced `(φ, θ, p_φ, p_θ)` with the cyclic angle set to `g_n`.
    pub fn reconstruct(
        &self,
        chart: &JacobiChart,
        g: f64,
    ) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
        (
            chart.angles(&self.u, g),
            self.theta.clone(),
            chart.momenta(&self.v, self.big_g),
            self.p_theta.clone(),
        )
    }
}

impl ReducedStateS1 {
    pub fn reconstruct(&self, chart: &JacobiChart) -> (Vec<f64>, Vec<f64>) {
        (
            chart.angles(&self.u, self.small_g),
            chart.momenta(&self.v, self.big_g),
        )
    }
}

fn check_state_dims(chart: &JacobiChart, u: usize, v: usize) -> Result<()> {
    let n = chart.n();
    if u != n - 1 || v != n - 1 {
        return Err(Error::InvalidInput(format!(
            "reduced state for n = {n} needs {} coordinates and momenta, got {u} and {v}",
            n - 1
        )));
    }
    Ok(())
}

fn check_poles(theta: &[f64]) -> Result<()> {
    for (index, &t) in theta.iter().enumerate() {
        if !(POLE_MARGIN..=PI - POLE_MARGIN).contains(&t) {
            return Err(Error::PoleSingularity { index, theta: t });
        }
    }
    Ok(())
}

/// `H₁ = Σ_{i=2}^n v_i² / 2M_i − U(u)`; the constant `G_n²/2μ_n` is dropped.
pub fn reduced_h1(chart: &JacobiChart, state: &ReducedStateS1) -> Result<f64> {
    check_state_dims(chart, state.u.len(), state.v.len())?;
    let phi = chart.angles(&state.u, state.small_g);
    let theta = vec![PI / 2.0; phi.len()];
    let kinetic: f64 = state
        .v
        .iter()
        .zip(&chart.big_m)
        .map(|(v, m)| v * v / (2.0 * m))
        .sum();
    Ok(kinetic - potential_raw(chart.masses.as_slice(), &phi, &theta)?)
}

/// `P = 𝒜 S M S 𝒜ᵀ` with `S = diag(1/sin θ_i)`, entry by entry:
///
/// * `P_kk = (1/μ_k²) Σ_{i≤k} m_i/sin²θ_i + 1/(m_{k+1} sin²θ_{k+1})` for `k < n`,
/// * `P_nn = (1/μ_n²) Σ_i m_i/sin²θ_i`,
/// * `P_kl = (1/(μ_k μ_l)) Σ_{i≤k} m_i/sin²θ_i − 1/(μ_l sin²θ_{k+1})` for `k < l < n`,
/// * `P_kn = −(1/(μ_k μ_n)) Σ_{i≤k} m_i/sin²θ_i + 1/(μ_n sin²θ_{k+1})` for `k < n`.
pub fn p_matrix(chart: &JacobiChart, theta: &[f64]) -> Result<DMatrix<f64>> {
    let n = chart.n();
    if theta.len() != n {
        return Err(Error::InvalidInput(format!("expected {n} polar angles")));
    }
    check_poles(theta)?;
    let m = chart.masses.as_slice();
    let mu = &chart.mu;
    let csc2: Vec<f64> = theta.iter().map(|t| 1.0 / t.sin().powi(2)).collect();
    // w_k = Σ_{i≤k} m_i / sin² θ_i
    let w: Vec<f64> = m
        .iter()
        .zip(&csc2)
        .scan(0.0, |acc, (mi, c)| {
            *acc += mi * c;
            Some(*acc)
        })
        .collect();
    let mut p = DMatrix::zeros(n, n);
    for k in 0..n - 1 {
        p[(k, k)] = w[k] / (mu[k] * mu[k]) + csc2[k + 1] / m[k + 1];
        for l in k + 1..n - 1 {
            let v = w[k] / (mu[k] * mu[l]) - csc2[k + 1] / mu[l];
            p[(k, l)] = v;
            p[(l, k)] = v;
        }
        let v = -w[k] / (mu[k] * mu[n - 1]) + csc2[k + 1] / mu[n - 1];
        p[(k, n - 1)] = v;
        p[(n - 1, k)] = v;
    }
    p[(n - 1, n - 1)] = w[n - 1] / (mu[n - 1] * mu[n - 1]);
    Ok(p)
}

/// `H₂ = ½ v̄ᵀ P v̄ + Σ p_θi²/2m_i − U`, with `v̄ = (v_2, …, v_n, G_n)`.
pub fn reduced_h2(chart: &JacobiChart, state: &ReducedStateS2) -> Result<f64> {
    check_state_dims(chart, state.u.len(), state.v.len())?;
    let n = chart.n();
    if state.theta.len() != n || state.p_theta.len() != n {
        return Err(Error::InvalidInput(format!(
            "expected {n} polar angles and momenta"
        )));
    }
    let p = p_matrix(chart, &state.theta)?;
    let vbar = DVector::from_iterator(n, state.v.iter().copied().chain([state.big_g]));
    let m = chart.masses.as_slice();
    let polar: f64 = state
        .p_theta
        .iter()
        .zip(m)
        .map(|(p, m)| p * p / (2.0 * m))
        .sum();
    let phi = chart.angles(&state.u, 0.0);
    Ok(0.5 * vbar.dot(&(&p * &vbar)) + polar - potential_raw(m, &phi, &state.theta)?)
}

/// Hamiltonian vector field of `H₁` as `(u̇, v̇)`.
pub fn reduced_field_s1(chart: &JacobiChart, state: &ReducedStateS1) -> Result<Vec<f64>> {
    check_state_dims(chart, state.u.len(), state.v.len())?;
    let n = chart.n();
    let phi = chart.angles(&state.u, state.small_g);
    let theta = vec![PI / 2.0; n];
    let grad = grad_spherical_raw(chart.masses.as_slice(), &phi, &theta)?;
    let du = chart.pull_back(&grad.d_phi);
    let u_dot = state.v.iter().zip(&chart.big_m).map(|(v, m)| v / m);
    // v̇ = −∂H₁/∂u = +∂U/∂u
    Ok(u_dot.chain(du[..n - 1].iter().copied()).collect())
}

/// Hamiltonian vector field of `H₂` as `(u̇, θ̇, v̇, ṗ_θ)`.
pub fn reduced_field_s2(chart: &JacobiChart, state: &ReducedStateS2) -> Result<Vec<f64>> {
    check_state_dims(chart, state.u.len(), state.v.len())?;
    let n = chart.n();
    let m = chart.masses.as_slice();
    let p = p_matrix(chart, &state.theta)?;
    let vbar = DVector::from_iterator(n, state.v.iter().copied().chain([state.big_g]));
    let u_dot = &p * &vbar;
    let theta_dot = state.p_theta.iter().zip(m).map(|(p, m)| p / m);
    let (phi, _, p_phi, _) = state.reconstruct(chart, 0.0);
    let grad = grad_spherical_raw(m, &phi, &state.theta)?;
    let v_dot = chart.pull_back(&grad.d_phi);
    // −½ v̄ᵀ ∂P/∂θ_i v̄ = p_φi² cos θ_i / (m_i sin³ θ_i)
    let p_theta_dot = (0..n).map(|i| {
        let (s, c) = polar_sin_cos(state.theta[i]);
        p_phi[i] * p_phi[i] * c / (m[i] * s * s * s) + grad.d_theta[i]
    });
    Ok(u_dot
        .iter()
        .take(n - 1)
        .copied()
        .chain(theta_dot)
        .chain(v_dot[..n - 1].iter().copied())
        .chain(p_theta_dot)
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Manifold {
    S1,
    S2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ReducedEquilibrium {
    S1(ReducedStateS1),
    S2(ReducedStateS2),
}

impl ReducedEquilibrium {
    /// Largest component of the reduced Hamiltonian vector field.
    pub fn field_norm(&self, chart: &JacobiChart) -> Result<f64> {
        let f = match self {
            ReducedEquilibrium::S1(s) => reduced_field_s1(chart, s)?,
            ReducedEquilibrium::S2(s) => reduced_field_s2(chart, s)?,
        };
        Ok(f.iter().fold(0.0f64, |a, b| a.max(b.abs())))
    }
}

/// `X_α` (circle) or `Y_α` (two-sphere) for the unit-mass regular n-gon
/// rotating with angular velocity `α`.
pub fn reduced_equilibrium(n: usize, alpha: f64, manifold: Manifold) -> Result<ReducedEquilibrium> {
    let poly = regular_polygon(n)?;
    let chart = jacobi_chart(&MassVector::uniform(n));
    let p_phi = vec![alpha; n];
    let point = to_jacobi(&chart, poly.phi(), &p_phi)?;
    let mut s1 = ReducedStateS1::from(point);
    s1.v.iter_mut().for_each(|v| *v = 0.0);
    Ok(match manifold {
        Manifold::S1 => ReducedEquilibrium::S1(s1),
        Manifold::S2 => ReducedEquilibrium::S2(ReducedStateS2 {
            u: s1.u,
            theta: vec![PI / 2.0; n],
            v: s1.v,
            p_theta: vec![0.0; n],
            big_g: s1.big_g,
        }),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SubspaceKind {
    Elliptic,
    Hyperbolic,
    Nilpotent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BlockPart {
    /// Shape on the circle: `(u, v)`.
    Circle,
    /// Out-of-plane: `(θ, p_θ)`.
    Polar,
}

/// One two-dimensional invariant subspace of `L`, built from an eigenvector
/// `w` with eigenvalue `λ` of the block product (`K D` or `Q E`).
#[derive(Debug, Clone, PartialEq)]
pub struct EigenClass {
    pub part: BlockPart,
    pub lambda: f64,
    pub kind: SubspaceKind,
    /// The pair of eigenvalues of `L` on this subspace.
    pub eigenvalues: [Complex64; 2],
    /// Hyperbolic: eigenvectors for `+√λ` and `−√λ`, `(±D w/√λ, w)`.
    /// Elliptic: `(D w/√|λ|, 0)` and `(0, w)`, on which `L` is a rotation.
    /// Nilpotent: `(D w, 0)` and `(0, w)`.
    pub basis: [DVector<f64>; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    LyapunovStable,
    LinearlyUnstable,
    Critical,
}

/// Linearization of the reduced flow at an equatorial relative equilibrium.
#[derive(Debug, Clone)]
pub struct LinearizationReport {
    pub alpha: f64,
    /// `(4n−2)²` block matrix `[[0,0,D,0],[0,0,0,E],[K,0,0,0],[0,Q,0,0]]`.
    pub l: DMatrix<f64>,
    /// `K = [∂²U/∂u_i∂u_j]`.
    pub u_hessian: DMatrix<f64>,
    /// `Q = [∂²U/∂θ_i∂θ_j] − α² diag(m)`.
    pub theta_matrix: DMatrix<f64>,
    /// `D`: upper `(n−1)` block of `P` at the equator.
    pub mass_block: DMatrix<f64>,
    /// `E = diag(1/m_i)`.
    pub polar_mass: DMatrix<f64>,
    pub eigen_classes: Vec<EigenClass>,
    pub verdict: Verdict,
}

impl LinearizationReport {
    pub fn eigenvalues(&self) -> Vec<Complex64> {
        self.eigen_classes
            .iter()
            .flat_map(|c| c.eigenvalues)
            .collect()
    }

    /// `(rate, direction)` for every hyperbolic pair, direction in the reduced ordering.
    pub fn unstable_directions(&self) -> Vec<(f64, DVector<f64>)> {
        self.eigen_classes
            .iter()
            .filter(|c| c.kind == SubspaceKind::Hyperbolic)
            .map(|c| (c.lambda.sqrt(), c.basis[0].clone()))
            .collect()
    }

    /// `D²H₂ = diag(−K, −Q, D, E)`.
    pub fn hamiltonian_hessian(&self) -> DMatrix<f64> {
        let n1 = self.u_hessian.nrows();
        let n = self.theta_matrix.nrows();
        let mut h = DMatrix::zeros(2 * (n1 + n), 2 * (n1 + n));
        h.view_mut((0, 0), (n1, n1)).copy_from(&(-&self.u_hessian));
        h.view_mut((n1, n1), (n, n))
            .copy_from(&(-&self.theta_matrix));
        h.view_mut((n1 + n, n1 + n), (n1, n1))
            .copy_from(&self.mass_block);
        h.view_mut((2 * n1 + n, 2 * n1 + n), (n, n))
            .copy_from(&self.polar_mass);
        h
    }
}

fn symmetric_sqrt(d: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let e = symmetric_eigen(d);
    let root = DVector::from_iterator(e.values.len(), e.values.iter().map(|v| v.sqrt()));
    let inv = root.map(|r| 1.0 / r);
    let v = &e.vectors;
    (
        v * DMatrix::from_diagonal(&root) * v.transpose(),
        v * DMatrix::from_diagonal(&inv) * v.transpose(),
    )
}

/// Invariant subspaces of `[[0, D], [K, 0]]` from the eigenvectors of `K D`,
/// with `D` symmetric positive definite and `K` symmetric.
fn block_classes(
    part: BlockPart,
    k: &DMatrix<f64>,
    d: &DMatrix<f64>,
    offset: (usize, usize),
    dim: usize,
) -> Vec<EigenClass> {
    let (root, root_inv) = symmetric_sqrt(d);
    // K D ~ D^{1/2} K D^{1/2}; w = D^{-1/2} y for y an eigenvector of the latter
    let sym = &root * k * &root;
    let e = symmetric_eigen(&sym);
    let zero = ZERO_EIGEN_TOL * (1.0 + sym.norm());
    let size = k.nrows();
    (0..size)
        .map(|c| {
            let lambda = e.values[c];
            let w = &root_inv * e.vectors.column(c);
            let dw = d * &w;
            let embed = |top: &DVector<f64>, bottom: &DVector<f64>| {
                let mut x = DVector::zeros(dim);
                x.rows_mut(offset.0, size).copy_from(top);
                x.rows_mut(offset.1, size).copy_from(bottom);
                x
            };
            let z = DVector::zeros(size);
            let (kind, eigenvalues, basis) = if lambda.abs() <= zero {
                (
                    SubspaceKind::Nilpotent,
                    [Complex64::new(0.0, 0.0); 2],
                    [embed(&dw, &z), embed(&z, &w)],
                )
            } else if lambda > 0.0 {
                let r = lambda.sqrt();
                (
                    SubspaceKind::Hyperbolic,
                    [Complex64::new(r, 0.0), Complex64::new(-r, 0.0)],
                    [embed(&(&dw / r), &w), embed(&(-&dw / r), &w)],
                )
            } else {
                let r = (-lambda).sqrt();
                (
                    SubspaceKind::Elliptic,
                    [Complex64::new(0.0, r), Complex64::new(0.0, -r)],
                    [embed(&(&dw / r), &z), embed(&z, &w)],
                )
            };
            EigenClass {
                part,
                lambda,
                kind,
                eigenvalues,
                basis,
            }
        })
        .collect()
}

/// Linearizes the reduced two-sphere flow at the relative equilibrium of an
/// equatorial equilibrium configuration `(φ, masses)` rotating at rate `α`.
///
/// The `u`-Hessian is `Wᵀ [∂²U/∂φ∂φ] W` with `W` the first `n − 1` columns of
/// 𝒜⁻¹; the cross blocks `∂²U/∂u∂θ` and `∂²F/∂v∂θ` vanish on the equator and
/// `∂²F/∂θ_i∂θ_j = α² m_i δ_ij` there.
pub fn linearize_equatorial(
    masses: &MassVector,
    phi: &[f64],
    alpha: f64,
) -> Result<LinearizationReport> {
    let n = masses.len();
    if phi.len() != n {
        return Err(Error::InvalidInput(format!("expected {n} angles")));
    }
    let m = masses.as_slice();
    let chart = jacobi_chart(masses);
    let theta = vec![PI / 2.0; n];
    let (hpp, htt) = hessian_blocks_raw(m, phi, &theta)?;
    let w = chart.a_inv.columns(0, n - 1).into_owned();
    let k = w.transpose() * &hpp * &w;
    let k = (&k + k.transpose()) * 0.5;
    let mass_diag = DMatrix::from_diagonal(&DVector::from_column_slice(m));
    let q = &htt - mass_diag * (alpha * alpha);
    let p = p_matrix(&chart, &theta)?;
    let d = p.view((0, 0), (n - 1, n - 1)).into_owned();
    let e = DMatrix::from_diagonal(&DVector::from_iterator(n, m.iter().map(|x| 1.0 / x)));

    let dim = 4 * n - 2;
    let (u0, t0, v0, pt0) = (0, n - 1, 2 * n - 1, 3 * n - 2);
    let mut l = DMatrix::zeros(dim, dim);
    l.view_mut((u0, v0), (n - 1, n - 1)).copy_from(&d);
    l.view_mut((t0, pt0), (n, n)).copy_from(&e);
    l.view_mut((v0, u0), (n - 1, n - 1)).copy_from(&k);
    l.view_mut((pt0, t0), (n, n)).copy_from(&q);

    let mut eigen_classes = block_classes(BlockPart::Circle, &k, &d, (u0, v0), dim);
    eigen_classes.extend(block_classes(BlockPart::Polar, &q, &e, (t0, pt0), dim));

    let verdict = if eigen_classes
        .iter()
        .any(|c| c.kind == SubspaceKind::Hyperbolic)
    {
        Verdict::LinearlyUnstable
    } else if eigen_classes
        .iter()
        .all(|c| c.kind == SubspaceKind::Elliptic)
    {
        Verdict::LyapunovStable
    } else {
        Verdict::Critical
    };

    Ok(LinearizationReport {
        alpha,
        l,
        u_hessian: k,
        theta_matrix: q,
        mass_block: d,
        polar_mass: e,
        eigen_classes,
        verdict,
    })
}

/// Linearization at `Y_α` for the unit-mass regular n-gon.
pub fn linearize_at_y(n: usize, alpha: f64) -> Result<LinearizationReport> {
    let poly = regular_polygon(n)?;
    linearize_equatorial(&MassVector::uniform(n), poly.phi(), alpha)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityClassification {
    pub n: usize,
    pub alpha: f64,
    pub manifold: Manifold,
    pub verdict: Verdict,
    /// `Θ₁` on the two-sphere; the circle has no threshold.
    pub threshold: Option<f64>,
    /// Smallest eigenvalue of the reduced Hamiltonian's Hessian at the
    /// equilibrium; positive certifies Lyapunov stability.
    pub hessian_min_eigenvalue: f64,
    /// The verdict agrees with the eigenvalue classes of the linearization.
    pub consistent: bool,
}

/// Verdict on the reduced equilibrium `X_α` (circle) or `Y_α` (two-sphere).
///
/// On the two-sphere the verdict is `LinearlyUnstable` for
/// `α² < Θ₁ − band`, `LyapunovStable` for `α² > Θ₁ + band` and `Critical`
/// inside the band `|α² − Θ₁| ≤ 1e-9 (1 + Θ₁)`.
pub fn classify_stability(
    n: usize,
    alpha: f64,
    manifold: Manifold,
) -> Result<StabilityClassification> {
    let report = linearize_at_y(n, alpha)?;
    match manifold {
        Manifold::S1 => {
            // D²H₁ = diag(−K, diag(1/M_i))
            let n1 = n - 1;
            let mut h = DMatrix::zeros(2 * n1, 2 * n1);
            h.view_mut((0, 0), (n1, n1))
                .copy_from(&(-&report.u_hessian));
            h.view_mut((n1, n1), (n1, n1)).copy_from(&report.mass_block);
            let min = symmetric_eigen(&h).min();
            let circle_elliptic = report
                .eigen_classes
                .iter()
                .filter(|c| c.part == BlockPart::Circle)
                .all(|c| c.kind == SubspaceKind::Elliptic);
            Ok(StabilityClassification {
                n,
                alpha,
                manifold,
                verdict: Verdict::LyapunovStable,
                threshold: None,
                hessian_min_eigenvalue: min,
                consistent: circle_elliptic && min > 0.0,
            })
        }
        Manifold::S2 => {
            let theta1 = critical_alpha_sq(n)?;
            let a2 = alpha * alpha;
            let band = CRITICAL_BAND * (1.0 + theta1);
            let verdict = if a2 < theta1 - band {
                Verdict::LinearlyUnstable
            } else if a2 > theta1 + band {
                Verdict::LyapunovStable
            } else {
                Verdict::Critical
            };
            let min = symmetric_eigen(&report.hamiltonian_hessian()).min();
            let consistent = match verdict {
                Verdict::LyapunovStable => min > 0.0 && report.verdict == Verdict::LyapunovStable,
                Verdict::LinearlyUnstable => report.verdict == Verdict::LinearlyUnstable,
                Verdict::Critical => report.verdict != Verdict::LinearlyUnstable,
            };
            Ok(StabilityClassification {
                n,
                alpha,
                manifold,
                verdict,
                threshold: Some(theta1),
                hessian_min_eigenvalue: min,
                consistent,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::SphericalConfig;
    use crate::potential::potential_spherical;
    use crate::spectra::theta_sequence;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn unit(n: usize) -> JacobiChart {
        jacobi_chart(&MassVector::uniform(n))
    }

    #[test]
    fn two_body_chart() {
        let c = unit(2);
        assert_eq!(c.a, DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, 0.5, 0.5]));
        assert_eq!(c.big_m, vec![0.5]);
        let c3 = unit(3);
        for i in 0..3 {
            assert_abs_diff_eq!(c3.a[(2, i)], 1.0 / 3.0, epsilon = 1e-16);
        }
        assert!((&c3.a * &c3.a_inv - DMatrix::identity(3, 3)).amax() < 1e-15);
    }

    #[test]
    fn polygon_jacobi_point() {
        let poly = regular_polygon(3).unwrap();
        let alpha = 0.8;
        let j = to_jacobi(&unit(3), poly.phi(), &[alpha; 3]).unwrap();
        assert_abs_diff_eq!(j.v[0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(j.v[1], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(j.v[2], 3.0 * alpha, epsilon = 1e-15);
        // u_{k+1} = (k+1)π/n
        assert_abs_diff_eq!(j.u[0], 2.0 * PI / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(j.u[1], PI, epsilon = 1e-15);
    }

    #[test]
    fn shift_moves_only_the_cyclic_angle() {
        let chart = jacobi_chart(&MassVector::new(vec![1.0, 2.0, 0.5, 3.0]).unwrap());
        let phi = [0.1, 1.4, 2.2, 5.0];
        let shifted: Vec<f64> = phi.iter().map(|p| p + 0.37).collect();
        let a = to_jacobi(&chart, &phi, &[0.0; 4]).unwrap();
        let b = to_jacobi(&chart, &shifted, &[0.0; 4]).unwrap();
        for k in 0..3 {
            assert_abs_diff_eq!(a.u[k], b.u[k], epsilon = 1e-14);
        }
        assert_abs_diff_eq!(b.u[3] - a.u[3], 0.37, epsilon = 1e-14);
    }

    #[test]
    fn from_jacobi_examples() {
        let c = unit(2);
        let (phi, _) = from_jacobi(
            &c,
            &JacobiPoint {
                u: vec![PI / 2.0, 0.0],
                v: vec![0.0, 0.0],
            },
        )
        .unwrap();
        assert_abs_diff_eq!(phi[0], -PI / 4.0, epsilon = 1e-15);
        assert_abs_diff_eq!(phi[1], PI / 4.0, epsilon = 1e-15);

        // v = 0, G = c → p_φ = 𝒜ᵀ e_n c = m_i c / μ_n
        let masses = MassVector::new(vec![1.0, 2.0, 3.0]).unwrap();
        let chart = jacobi_chart(&masses);
        let (_, p) = from_jacobi(
            &chart,
            &JacobiPoint {
                u: vec![0.0; 3],
                v: vec![0.0, 0.0, 1.2],
            },
        )
        .unwrap();
        for i in 0..3 {
            assert_abs_diff_eq!(p[i], masses[i] * 1.2 / 6.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn h1_at_x_alpha() {
        let ReducedEquilibrium::S1(x) = reduced_equilibrium(3, 1.0, Manifold::S1).unwrap() else {
            unreachable!()
        };
        assert_abs_diff_eq!(
            reduced_h1(&unit(3), &x).unwrap(),
            3f64.sqrt(),
            epsilon = 1e-14
        );
    }

    #[test]
    fn p_matrix_at_equator() {
        for n in [3, 5, 7] {
            let c = unit(n);
            let p = p_matrix(&c, &vec![PI / 2.0; n]).unwrap();
            for k in 0..n - 1 {
                assert_abs_diff_eq!(p[(k, k)], 1.0 / c.big_m[k], epsilon = 1e-14);
                assert_abs_diff_eq!(p[(k, k)], 1.0 / (k as f64 + 1.0) + 1.0, epsilon = 1e-14);
                assert_abs_diff_eq!(p[(k, n - 1)], 0.0, epsilon = 1e-15);
            }
            assert_abs_diff_eq!(p[(n - 1, n - 1)], 1.0 / n as f64, epsilon = 1e-15);
            let off = p.clone() - DMatrix::from_diagonal(&p.diagonal());
            assert!(off.amax() < 1e-15);
        }
        assert!(matches!(
            p_matrix(&unit(2), &[1e-9, 1.0]),
            Err(Error::PoleSingularity { index: 0, .. })
        ));
    }

    #[test]
    fn h2_at_y_alpha() {
        let alpha = 1.3;
        let ReducedEquilibrium::S2(y) = reduced_equilibrium(3, alpha, Manifold::S2).unwrap() else {
            unreachable!()
        };
        let h = reduced_h2(&unit(3), &y).unwrap();
        assert_abs_diff_eq!(h, 3.0 * alpha * alpha / 2.0 + 3f64.sqrt(), epsilon = 1e-13);
    }

    #[test]
    fn equatorial_h2_reduces_to_h1() {
        let masses = MassVector::new(vec![1.0, 0.7, 1.6, 1.1]).unwrap();
        let chart = jacobi_chart(&masses);
        let s1 = ReducedStateS1 {
            u: vec![1.2, 1.9, 2.5],
            v: vec![0.3, -0.2, 0.5],
            big_g: 0.9,
            small_g: 0.0,
        };
        let s2 = ReducedStateS2 {
            u: s1.u.clone(),
            theta: vec![PI / 2.0; 4],
            v: s1.v.clone(),
            p_theta: vec![0.0; 4],
            big_g: s1.big_g,
        };
        let h1 = reduced_h1(&chart, &s1).unwrap();
        let h2 = reduced_h2(&chart, &s2).unwrap();
        assert_abs_diff_eq!(h2, h1 + 0.9 * 0.9 / (2.0 * masses.total()), epsilon = 1e-13);
    }

    #[test]
    fn reduced_equilibria_are_fixed_points() {
        for (n, alpha, manifold) in [
            (3, 1.0, Manifold::S1),
            (3, 0.0, Manifold::S2),
            (5, 2.0, Manifold::S2),
            (7, -0.6, Manifold::S1),
        ] {
            let eq = reduced_equilibrium(n, alpha, manifold).unwrap();
            let norm = eq.field_norm(&unit(n)).unwrap();
            assert!(norm <= 1e-10, "n={n} alpha={alpha}: {norm}");
        }
        assert_eq!(
            reduced_equilibrium(4, 1.0, Manifold::S1),
            Err(Error::EvenN { n: 4 })
        );
    }

    #[test]
    fn potential_ignores_cyclic_angle() {
        let masses = MassVector::new(vec![1.0, 2.0, 1.5]).unwrap();
        let chart = jacobi_chart(&masses);
        let u = [1.0, 2.3];
        let h = 1e-5;
        let eval = |g: f64| {
            let phi = chart.angles(&u, g);
            potential_spherical(&masses, &SphericalConfig::equatorial(phi).unwrap()).unwrap()
        };
        assert!(((eval(0.4 + h) - eval(0.4 - h)) / (2.0 * h)).abs() <= 1e-8);
    }

    #[test]
    fn linearization_examples() {
        let theta1 = critical_alpha_sq(3).unwrap();
        let r = linearize_at_y(3, 0.0).unwrap();
        let polar: Vec<&EigenClass> = r
            .eigen_classes
            .iter()
            .filter(|c| c.part == BlockPart::Polar)
            .collect();
        assert_eq!(
            polar
                .iter()
                .filter(|c| c.kind == SubspaceKind::Nilpotent)
                .count(),
            2
        );
        let hyp: Vec<&&EigenClass> = polar
            .iter()
            .filter(|c| c.kind == SubspaceKind::Hyperbolic)
            .collect();
        assert_eq!(hyp.len(), 1);
        assert_abs_diff_eq!(hyp[0].eigenvalues[0].re, theta1.sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(theta1.sqrt(), 2.149140, epsilon = 1e-6);
        assert_eq!(r.verdict, Verdict::LinearlyUnstable);

        let r = linearize_at_y(3, (1.5 * theta1).sqrt()).unwrap();
        assert!(r
            .eigen_classes
            .iter()
            .all(|c| c.kind == SubspaceKind::Elliptic));
        assert_eq!(r.verdict, Verdict::LyapunovStable);
        for a in [0.0, 0.7, 2.5] {
            let r = linearize_at_y(5, a).unwrap();
            assert!(r
                .eigen_classes
                .iter()
                .filter(|c| c.part == BlockPart::Circle)
                .all(|c| c.kind == SubspaceKind::Elliptic));
            let mut ev = r.eigenvalues();
            let mut neg: Vec<Complex64> = ev.iter().map(|z| -z).collect();
            let key = |z: &Complex64| {
                (z.re * 1e6).round() as i64 * 1_000_000_000 + (z.im * 1e6).round() as i64
            };
            ev.sort_by_key(key);
            neg.sort_by_key(key);
            for (x, y) in ev.iter().zip(&neg) {
                assert!((x - y).norm() <= 1e-9);
            }
        }
    }

    #[test]
    fn basis_vectors_are_invariant() {
        let r = linearize_at_y(5, 1.0).unwrap();
        for c in &r.eigen_classes {
            match c.kind {
                SubspaceKind::Hyperbolic => {
                    for (b, ev) in c.basis.iter().zip(c.eigenvalues) {
                        assert!((&r.l * b - b * ev.re).amax() <= 1e-10);
                    }
                }
                _ => {
                    // L maps the span of the basis into itself
                    let m = DMatrix::from_columns(&[c.basis[0].clone(), c.basis[1].clone()]);
                    let img = &r.l * &m;
                    let coeffs = m.clone().svd(true, true).solve(&img, 1e-14).unwrap();
                    assert!((&m * coeffs - img).amax() <= 1e-10);
                }
            }
        }
    }

    #[test]
    fn theta_part_matches_sequence() {
        for n in [3, 5, 7] {
            let a = 1.1;
            let r = linearize_at_y(n, a).unwrap();
            let mut got: Vec<f64> = r
                .eigen_classes
                .iter()
                .filter(|c| c.part == BlockPart::Polar)
                .map(|c| c.lambda)
                .collect();
            let mut want: Vec<f64> = theta_sequence(n)
                .unwrap()
                .iter()
                .map(|t| t - a * a)
                .collect();
            got.sort_by(f64::total_cmp);
            want.sort_by(f64::total_cmp);
            for (g, w) in got.iter().zip(&want) {
                assert_abs_diff_eq!(g, w, epsilon = 1e-10);
            }
            // u-Hessian has n−1 negative eigenvalues
            let e = symmetric_eigen(&r.u_hessian);
            assert!(e.values.iter().all(|&x| x < -1e-9));
        }
    }

    #[test]
    fn classification_examples() {
        assert_eq!(
            classify_stability(3, 1.0, Manifold::S2).unwrap().verdict,
            Verdict::LinearlyUnstable
        );
        let s = classify_stability(3, 3.0, Manifold::S2).unwrap();
        assert_eq!(s.verdict, Verdict::LyapunovStable);
        assert!(s.consistent && s.hessian_min_eigenvalue > 0.0);
        let t = critical_alpha_sq(3).unwrap();
        assert_eq!(
            classify_stability(3, t.sqrt(), Manifold::S2)
                .unwrap()
                .verdict,
            Verdict::Critical
        );
        for a in [0.0, 0.5, 4.0] {
            let s = classify_stability(5, a, Manifold::S1).unwrap();
            assert_eq!(s.verdict, Verdict::LyapunovStable);
            assert!(s.consistent);
        }
        assert_eq!(
            classify_stability(6, 1.0, Manifold::S2),
            Err(Error::EvenN { n: 6 })
        );
    }

    fn arb_masses() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.1..10.0f64, 2..10)
    }

    proptest! {
        #[test]
        fn kinetic_form_is_diagonal(m in arb_masses()) {
            let masses = MassVector::new(m.clone()).unwrap();
            let c = jacobi_chart(&masses);
            let minv = DMatrix::from_diagonal(&DVector::from_iterator(m.len(), m.iter().map(|x| 1.0 / x)));
            let form = &c.a * minv * c.a.transpose();
            let want = DMatrix::from_diagonal(&DVector::from_vec(c.kinetic_diagonal()));
            prop_assert!((form - want).amax() <= 1e-12 * (1.0 + c.kinetic_diagonal().iter().fold(0.0f64, |a, b| a.max(*b))));
        }

        #[test]
        fn jacobi_round_trip(m in arb_masses(), seed in prop::collection::vec(-3.0..3.0f64, 20)) {
            let n = m.len();
            let masses = MassVector::new(m.clone()).unwrap();
            let c = jacobi_chart(&masses);
            let phi = &seed[..n];
            let p = &seed[10..10 + n];
            let j = to_jacobi(&c, phi, p).unwrap();
            let (phi2, p2) = from_jacobi(&c, &j).unwrap();
            for i in 0..n {
                prop_assert!((phi[i] - phi2[i]).abs() <= 1e-12);
                prop_assert!((p[i] - p2[i]).abs() <= 1e-12);
            }
            let weighted: f64 = phi.iter().zip(&m).map(|(a, b)| a * b).sum();
            prop_assert!((c.total_mass * j.u[n - 1] - weighted).abs() <= 1e-12 * (1.0 + weighted.abs()));
            prop_assert!((j.v[n - 1] - p.iter().sum::<f64>()).abs() <= 1e-12);
        }
    }
}
