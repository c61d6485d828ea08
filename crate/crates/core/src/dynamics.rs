//! Constrained equations of motion on S³, a projected RK4 integrator with
//! conservation monitors, exact rotating solutions, and growth-rate probes
//! around the rotating regular polygon.

use std::f64::consts::PI;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    check_outside_singular_set, cos_distance, min_separation_points, polar_sin_cos,
    regular_polygon, spherical_point, MassVector, Point, RotationParams, POLE_MARGIN,
};
use crate::potential::{grad_cartesian_points, grad_spherical_raw};
use crate::reduction::{jacobi_chart, linearize_at_y, BlockPart, SubspaceKind};
use crate::spectra::critical_alpha_sq;

/// Tolerance on `|q·q − 1|` and `|q·p|` for a valid phase state.
pub const CONSTRAINT_TOL: f64 = 1e-10;
/// Integration stops once the minimal separation drops below this value.
pub const SINGULARITY_FLOOR: f64 = 1e-3;
/// Upper end of the growth-rate fitting window.
pub const FIT_WINDOW_TOP: f64 = 1e-3;
/// A probe whose shape deviation stays below this multiple of `ε` is bounded.
pub const BOUNDED_FACTOR: f64 = 100.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseState {
    pub q: Vec<Point>,
    pub p: Vec<Point>,
    pub time: f64,
}

impl PhaseState {
    /// Validates the constraint `q·q = 1`, its derivative `q·p = 0`, and
    /// distance from the singular set.
    pub fn new(q: Vec<Point>, p: Vec<Point>, time: f64) -> Result<Self> {
        if q.len() != p.len() || q.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "{} positions and {} momenta",
                q.len(),
                p.len()
            )));
        }
        let s = Self { q, p, time };
        let v = s.constraint_violation();
        if !(v <= CONSTRAINT_TOL) {
            return Err(Error::InvalidInput(format!(
                "phase state violates the sphere constraint by {v:e}"
            )));
        }
        check_outside_singular_set(&s.q)?;
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    /// `max_i max(|q_i·q_i − 1|, |q_i·p_i|)`.
    pub fn constraint_violation(&self) -> f64 {
        self.q
            .iter()
            .zip(&self.p)
            .map(|(q, p)| (q.dot(q) - 1.0).abs().max(q.dot(p).abs()))
            .fold(0.0, f64::max)
    }

    /// Polar angles `θ_i = arccos z_i`.
    pub fn polar_angles(&self) -> Vec<f64> {
        self.q
            .iter()
            .map(|q| q[2].clamp(-1.0, 1.0).acos())
            .collect()
    }

    /// Mutual distances `d_ij` for `i < j`, row by row.
    pub fn distances(&self) -> Vec<f64> {
        pair_distances(&self.q)
    }
}

fn pair_distances(q: &[Point]) -> Vec<f64> {
    let n = q.len();
    let mut d = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            d.push(cos_distance(&q[i], &q[j]).acos());
        }
    }
    d
}

fn check_masses(masses: &MassVector, n: usize) -> Result<()> {
    if masses.len() != n {
        return Err(Error::InvalidInput(format!(
            "{} masses for {n} bodies",
            masses.len()
        )));
    }
    Ok(())
}

/// `H = Σ |p_i|²/2m_i − U`.
pub fn hamiltonian(masses: &MassVector, state: &PhaseState) -> Result<f64> {
    check_masses(masses, state.len())?;
    let m = masses.as_slice();
    let mut h: f64 = state
        .p
        .iter()
        .zip(m)
        .map(|(p, m)| p.dot(p) / (2.0 * m))
        .sum();
    for i in 0..state.len() {
        for j in i + 1..state.len() {
            let c = cos_distance(&state.q[i], &state.q[j]);
            let s = (1.0 - c * c).sqrt();
            if s == 0.0 {
                return Err(Error::SingularConfiguration {
                    i,
                    j,
                    cos_abs: c.abs(),
                });
            }
            h -= m[i] * m[j] * c / s;
        }
    }
    Ok(h)
}

/// Angular momentum in the `(x, y)` plane, `J₂ = Σ (x_i p_yi − y_i p_xi) = Σ p_φi`.
pub fn angular_momentum_xy(state: &PhaseState) -> f64 {
    state
        .q
        .iter()
        .zip(&state.p)
        .map(|(q, p)| q[0] * p[1] - q[1] * p[0])
        .sum()
}

/// `(q̇, ṗ)` with `q̇_i = p_i/m_i` and `ṗ_i = ∇_{q_i}U − (p_i·p_i) q_i/m_i`.
pub fn eom_cartesian(masses: &MassVector, state: &PhaseState) -> Result<(Vec<Point>, Vec<Point>)> {
    check_masses(masses, state.len())?;
    eom_raw(masses.as_slice(), &state.q, &state.p)
}

fn eom_raw(m: &[f64], q: &[Point], p: &[Point]) -> Result<(Vec<Point>, Vec<Point>)> {
    let mut dp = grad_cartesian_points(m, q)?;
    let dq = p.iter().zip(m).map(|(p, m)| p / *m).collect();
    for i in 0..q.len() {
        dp[i] -= q[i] * (p[i].dot(&p[i]) / m[i]);
    }
    Ok((dq, dp))
}

/// Canonical coordinates `(φ, θ, p_φ, p_θ)` on (S²)ⁿ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SphericalPhase {
    pub phi: Vec<f64>,
    pub theta: Vec<f64>,
    pub p_phi: Vec<f64>,
    pub p_theta: Vec<f64>,
}

impl SphericalPhase {
    fn check(&self) -> Result<()> {
        let n = self.phi.len();
        if self.theta.len() != n || self.p_phi.len() != n || self.p_theta.len() != n {
            return Err(Error::InvalidInput(
                "spherical phase arrays differ in length".into(),
            ));
        }
        for (index, &theta) in self.theta.iter().enumerate() {
            if !(POLE_MARGIN..=PI - POLE_MARGIN).contains(&theta) {
                return Err(Error::PoleSingularity { index, theta });
            }
        }
        Ok(())
    }

    fn axpy(&self, h: f64, d: &SphericalPhase) -> SphericalPhase {
        let f = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x + h * y).collect();
        SphericalPhase {
            phi: f(&self.phi, &d.phi),
            theta: f(&self.theta, &d.theta),
            p_phi: f(&self.p_phi, &d.p_phi),
            p_theta: f(&self.p_theta, &d.p_theta),
        }
    }
}

/// Canonical equations of `H = Σ (p_φ²/(2m sin²θ) + p_θ²/2m) − U`, returned
/// as the time derivative of each field.
pub fn eom_spherical(masses: &MassVector, state: &SphericalPhase) -> Result<SphericalPhase> {
    state.check()?;
    check_masses(masses, state.phi.len())?;
    let m = masses.as_slice();
    let g = grad_spherical_raw(m, &state.phi, &state.theta)?;
    let n = m.len();
    let mut d = SphericalPhase {
        phi: vec![0.0; n],
        theta: vec![0.0; n],
        p_phi: g.d_phi,
        p_theta: g.d_theta,
    };
    for i in 0..n {
        let (s, c) = polar_sin_cos(state.theta[i]);
        d.phi[i] = state.p_phi[i] / (m[i] * s * s);
        d.theta[i] = state.p_theta[i] / m[i];
        d.p_theta[i] += state.p_phi[i] * state.p_phi[i] * c / (m[i] * s * s * s);
    }
    Ok(d)
}

/// Lifts spherical canonical data to `(q, p)` with `p = m q̇`.
pub fn phase_from_spherical(
    masses: &MassVector,
    s: &SphericalPhase,
    time: f64,
) -> Result<PhaseState> {
    s.check()?;
    check_masses(masses, s.phi.len())?;
    let mut q = Vec::with_capacity(s.phi.len());
    let mut p = Vec::with_capacity(s.phi.len());
    for i in 0..s.phi.len() {
        let (sp, cp) = s.phi[i].sin_cos();
        let (st, ct) = polar_sin_cos(s.theta[i]);
        q.push(spherical_point(s.phi[i], s.theta[i]));
        let e_phi = Point::new(-sp, cp, 0.0, 0.0);
        let e_theta = Point::new(ct * cp, ct * sp, -st, 0.0);
        p.push(e_phi * (s.p_phi[i] / st) + e_theta * s.p_theta[i]);
    }
    PhaseState::new(q, p, time)
}

/// Inverse of [`phase_from_spherical`] for states inside the S² slice `w = 0`.
pub fn phase_to_spherical(state: &PhaseState) -> Result<SphericalPhase> {
    let n = state.len();
    let mut out = SphericalPhase {
        phi: Vec::with_capacity(n),
        theta: Vec::with_capacity(n),
        p_phi: Vec::with_capacity(n),
        p_theta: Vec::with_capacity(n),
    };
    for (q, p) in state.q.iter().zip(&state.p) {
        if q[3].abs() > CONSTRAINT_TOL || p[3].abs() > CONSTRAINT_TOL {
            return Err(Error::InvalidInput(
                "state leaves the two-sphere slice w = 0".into(),
            ));
        }
        let phi = q[1].atan2(q[0]).rem_euclid(2.0 * PI);
        let theta = q[0].hypot(q[1]).atan2(q[2]);
        let (sp, cp) = phi.sin_cos();
        let (st, ct) = polar_sin_cos(theta);
        out.phi.push(phi);
        out.theta.push(theta);
        out.p_phi.push(q[0] * p[1] - q[1] * p[0]);
        out.p_theta
            .push(p.dot(&Point::new(ct * cp, ct * sp, -st, 0.0)));
    }
    out.check()?;
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorConfig {
    pub dt: f64,
    pub t_end: f64,
    /// Keep every `sample_stride`-th step (the initial state is always kept).
    pub sample_stride: usize,
    /// Stop early once the shape deviation exceeds this value.
    #[serde(default)]
    pub stop_deviation: Option<f64>,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            t_end: 100.0,
            sample_stride: 100,
            stop_deviation: None,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "T must be positive, got {}",
                self.t_end
            )));
        }
        if self.sample_stride == 0 {
            return Err(Error::InvalidInput(
                "sample_stride must be at least 1".into(),
            ));
        }
        if let Some(s) = self.stop_deviation {
            if !(s > 0.0) {
                return Err(Error::InvalidInput(
                    "stop_deviation must be positive".into(),
                ));
            }
        }
        Ok(())
    }

    fn steps(&self) -> usize {
        (self.t_end / self.dt).round().max(1.0) as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub state: PhaseState,
    pub energy: f64,
    pub momentum: f64,
    pub shape_deviation: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Termination {
    Completed,
    ShapeThreshold { time: f64 },
    SingularityApproach { time: f64, min_separation: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub samples: Vec<Sample>,
    /// `max |H(t) − H(0)| / |H(0)|` (absolute when `H(0) = 0`).
    pub energy_drift: f64,
    /// `max |J₂(t) − J₂(0)|`.
    pub momentum_drift: f64,
    /// Maximum over every step, not only the kept samples.
    pub max_shape_deviation: f64,
    /// `max |q·q − 1|, |q·p|` over every step.
    pub constraint_violation: f64,
    /// `max_i |θ_i(t) − π/2|` over every step.
    pub equator_offset: f64,
    pub termination: Termination,
}

impl TrajectoryRecord {
    /// Converts an early stop near the singular set into an error.
    pub fn check_singularity(&self) -> Result<()> {
        match self.termination {
            Termination::SingularityApproach {
                time,
                min_separation,
            } => Err(Error::SingularityApproach {
                time,
                min_separation,
            }),
            _ => Ok(()),
        }
    }

    /// `(t, shape deviation)` at the kept samples.
    pub fn deviation_series(&self) -> Vec<(f64, f64)> {
        self.samples
            .iter()
            .map(|s| (s.state.time, s.shape_deviation))
            .collect()
    }
}

/// Tracks `max_{i<j} |d_ij(t) − d_ij(0)|` and `max_i |θ_i(t) − π/2|`.
struct ShapeMonitor {
    reference: Vec<f64>,
}

impl ShapeMonitor {
    fn equator_offset(q: &[Point]) -> f64 {
        q.iter()
            .map(|q| (q[2].clamp(-1.0, 1.0).acos() - PI / 2.0).abs())
            .fold(0.0, f64::max)
    }

    fn deviation(&self, q: &[Point]) -> (f64, f64) {
        let d = pair_distances(q)
            .iter()
            .zip(&self.reference)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let e = Self::equator_offset(q);
        (d.max(e), e)
    }
}

fn rk4_step(m: &[f64], q: &[Point], p: &[Point], h: f64) -> Result<(Vec<Point>, Vec<Point>)> {
    let shift = |base: &[Point], d: &[Point], s: f64| -> Vec<Point> {
        base.iter().zip(d).map(|(b, d)| b + d * s).collect()
    };
    let (k1q, k1p) = eom_raw(m, q, p)?;
    let (k2q, k2p) = eom_raw(m, &shift(q, &k1q, h / 2.0), &shift(p, &k1p, h / 2.0))?;
    let (k3q, k3p) = eom_raw(m, &shift(q, &k2q, h / 2.0), &shift(p, &k2p, h / 2.0))?;
    let (k4q, k4p) = eom_raw(m, &shift(q, &k3q, h), &shift(p, &k3p, h))?;
    let combine = |x: &[Point], a: &[Point], b: &[Point], c: &[Point], d: &[Point]| -> Vec<Point> {
        (0..x.len())
            .map(|i| x[i] + (a[i] + b[i] * 2.0 + c[i] * 2.0 + d[i]) * (h / 6.0))
            .collect()
    };
    let mut q1 = combine(q, &k1q, &k2q, &k3q, &k4q);
    let mut p1 = combine(p, &k1p, &k2p, &k3p, &k4p);
    for (qi, pi) in q1.iter_mut().zip(p1.iter_mut()) {
        *qi /= qi.norm();
        *pi -= *qi * pi.dot(qi);
    }
    Ok((q1, p1))
}

/// Classical RK4 on `(q, p)` followed by projection back onto the constraint
/// manifold after every step.
pub fn integrate(
    masses: &MassVector,
    state0: &PhaseState,
    cfg: &IntegratorConfig,
) -> Result<TrajectoryRecord> {
    cfg.validate()?;
    check_masses(masses, state0.len())?;
    let m = masses.as_slice();
    let h0 = hamiltonian(masses, state0)?;
    let j0 = angular_momentum_xy(state0);
    let monitor = ShapeMonitor {
        reference: pair_distances(&state0.q),
    };
    let (dev0, eq0) = monitor.deviation(&state0.q);
    let mut record = TrajectoryRecord {
        samples: vec![Sample {
            state: state0.clone(),
            energy: h0,
            momentum: j0,
            shape_deviation: dev0,
        }],
        energy_drift: 0.0,
        momentum_drift: 0.0,
        max_shape_deviation: dev0,
        constraint_violation: state0.constraint_violation(),
        equator_offset: eq0,
        termination: Termination::Completed,
    };
    let scale = if h0 == 0.0 { 1.0 } else { h0.abs() };
    let (mut q, mut p) = (state0.q.clone(), state0.p.clone());
    let steps = cfg.steps();
    for step in 1..=steps {
        let time = state0.time + step as f64 * cfg.dt;
        let sep = min_separation_points(&q);
        if sep < SINGULARITY_FLOOR {
            record.termination = Termination::SingularityApproach {
                time: time - cfg.dt,
                min_separation: sep,
            };
            break;
        }
        // a single step can jump past the floor when bodies close in fast
        let stepped = rk4_step(m, &q, &p, cfg.dt).and_then(|(q, p)| {
            let state = PhaseState { q, p, time };
            hamiltonian(masses, &state).map(|h| (state, h))
        });
        let (state, energy) = match stepped {
            Ok(x) => x,
            Err(Error::SingularConfiguration { .. }) => {
                record.termination = Termination::SingularityApproach {
                    time: time - cfg.dt,
                    min_separation: sep,
                };
                break;
            }
            Err(e) => return Err(e),
        };
        let momentum = angular_momentum_xy(&state);
        let (dev, eq) = monitor.deviation(&state.q);
        record.energy_drift = record.energy_drift.max((energy - h0).abs() / scale);
        record.momentum_drift = record.momentum_drift.max((momentum - j0).abs());
        record.max_shape_deviation = record.max_shape_deviation.max(dev);
        record.constraint_violation = record
            .constraint_violation
            .max(state.constraint_violation());
        record.equator_offset = record.equator_offset.max(eq);
        let stop = cfg.stop_deviation.is_some_and(|s| dev > s);
        if step % cfg.sample_stride == 0 || step == steps || stop {
            record.samples.push(Sample {
                state: state.clone(),
                energy,
                momentum,
                shape_deviation: dev,
            });
        }
        if stop {
            record.termination = Termination::ShapeThreshold { time };
            break;
        }
        q = state.q;
        p = state.p;
    }
    Ok(record)
}

/// Plain RK4 in the spherical chart; returns the state at every kept step.
pub fn integrate_spherical(
    masses: &MassVector,
    state0: &SphericalPhase,
    cfg: &IntegratorConfig,
) -> Result<Vec<(f64, SphericalPhase)>> {
    cfg.validate()?;
    let h = cfg.dt;
    let mut s = state0.clone();
    let mut out = vec![(0.0, s.clone())];
    let steps = cfg.steps();
    for step in 1..=steps {
        let k1 = eom_spherical(masses, &s)?;
        let k2 = eom_spherical(masses, &s.axpy(h / 2.0, &k1))?;
        let k3 = eom_spherical(masses, &s.axpy(h / 2.0, &k2))?;
        let k4 = eom_spherical(masses, &s.axpy(h, &k3))?;
        s = s
            .axpy(h / 6.0, &k1)
            .axpy(h / 3.0, &k2)
            .axpy(h / 3.0, &k3)
            .axpy(h / 6.0, &k4);
        if step % cfg.sample_stride == 0 || step == steps {
            out.push((step as f64 * h, s.clone()));
        }
    }
    Ok(out)
}

/// `q(t) = A(t) q₀`, `p(t) = m Ȧ(t) q₀` for a rigidly rotating configuration.
pub fn rotating_state(
    masses: &MassVector,
    q0: &[Point],
    rotation: &RotationParams,
) -> Result<PhaseState> {
    check_masses(masses, q0.len())?;
    let a = rotation.matrix();
    let rate = rotation.matrix_rate();
    let q = q0.iter().map(|x| a * x).collect();
    let p = q0
        .iter()
        .zip(masses.as_slice())
        .map(|(x, m)| rate * x * *m)
        .collect();
    PhaseState::new(q, p, rotation.t)
}

/// `A_{α,β}(t) q̄` for the unit-mass regular n-gon.
pub fn relative_equilibrium_trajectory(
    n: usize,
    alpha: f64,
    beta: f64,
    t: f64,
) -> Result<PhaseState> {
    let poly = regular_polygon(n)?;
    let q0: Vec<Point> = poly
        .phi()
        .iter()
        .map(|&f| spherical_point(f, PI / 2.0))
        .collect();
    rotating_state(
        &MassVector::uniform(n),
        &q0,
        &RotationParams { alpha, beta, t },
    )
}

/// `max_t max_i |m_i Ä(t) q₀ − ṗ_i|` over the given times: how far the rigid
/// rotation `A_{α,β}(t) q₀` is from solving the equations of motion.
pub fn rotating_orbit_residual(
    masses: &MassVector,
    q0: &[Point],
    alpha: f64,
    beta: f64,
    times: &[f64],
) -> Result<f64> {
    let mut worst = 0.0f64;
    for &t in times {
        let rotation = RotationParams { alpha, beta, t };
        let state = rotating_state(masses, q0, &rotation)?;
        let (dq, dp) = eom_cartesian(masses, &state)?;
        let accel = rotation.matrix_accel();
        for i in 0..q0.len() {
            let m = masses[i];
            worst = worst
                .max((accel * q0[i] * m - dp[i]).norm())
                .max((dq[i] - state.p[i] / m).norm());
        }
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProbeDirection {
    /// Along the out-of-plane mode with the largest `Θ_k − α²`: the unstable
    /// eigenvector when one exists.
    UnstableMode,
    /// A Gaussian direction in `(φ, θ, p_φ, p_θ)` from a seeded generator.
    RandomShape { seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProbeVerdict {
    Grows,
    Bounded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub n: usize,
    pub alpha: f64,
    pub epsilon: f64,
    pub direction: ProbeDirection,
    /// `√(Θ₁ − α²)` when positive.
    pub predicted_rate: Option<f64>,
    /// Least-squares slope of `ln(deviation)` against `t` inside the window.
    pub fitted_rate: Option<f64>,
    pub fit_points: usize,
    pub max_shape_deviation: f64,
    pub verdict: ProbeVerdict,
    pub record: TrajectoryRecord,
}

/// Perturbation of the rotating polygon `(φ, θ, p_φ, p_θ)` of unit Euclidean norm.
fn probe_perturbation(n: usize, alpha: f64, direction: ProbeDirection) -> Result<Vec<f64>> {
    let mut x = match direction {
        ProbeDirection::UnstableMode => {
            let report = linearize_at_y(n, alpha)?;
            let mode = report
                .eigen_classes
                .iter()
                .filter(|c| c.part == BlockPart::Polar)
                .max_by(|a, b| a.lambda.total_cmp(&b.lambda))
                .expect("polar block is never empty");
            let reduced = if mode.kind == SubspaceKind::Hyperbolic {
                &mode.basis[0]
            } else {
                // no growing mode: excite the slowest oscillation through its position part
                &mode.basis[1]
            };
            lift_reduced(n, reduced)
        }
        ProbeDirection::RandomShape { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..4 * n)
                .map(|_| StandardNormal.sample(&mut rng))
                .collect()
        }
    };
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    x.iter_mut().for_each(|v| *v /= norm);
    Ok(x)
}

/// Maps a reduced tangent vector `(u, θ, v, p_θ)` to `(φ, θ, p_φ, p_θ)` with
/// the cyclic angle and total momentum held fixed.
fn lift_reduced(n: usize, r: &DVector<f64>) -> Vec<f64> {
    let chart = jacobi_chart(&MassVector::uniform(n));
    let mut u = DVector::zeros(n);
    u.rows_mut(0, n - 1).copy_from(&r.rows(0, n - 1));
    let mut v = DVector::zeros(n);
    v.rows_mut(0, n - 1).copy_from(&r.rows(2 * n - 1, n - 1));
    let phi = &chart.a_inv * u;
    let p_phi = chart.a.transpose() * v;
    phi.iter()
        .chain(r.rows(n - 1, n).iter())
        .chain(p_phi.iter())
        .chain(r.rows(3 * n - 2, n).iter())
        .copied()
        .collect()
}

/// Least-squares slope of `ln y` against `t`.
pub fn fit_log_slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let k = points.len() as f64;
    let (st, sy) = points
        .iter()
        .fold((0.0, 0.0), |(a, b), (t, y)| (a + t, b + y.ln()));
    let (mt, my) = (st / k, sy / k);
    let (num, den) = points.iter().fold((0.0, 0.0), |(a, b), (t, y)| {
        (a + (t - mt) * (y.ln() - my), b + (t - mt) * (t - mt))
    });
    (den > 0.0).then(|| num / den)
}

/// The contiguous stretch after the deviation first reaches `low`, ending
/// before it first exceeds `high`.
fn fit_window(series: &[(f64, f64)], low: f64, high: f64) -> Vec<(f64, f64)> {
    series
        .iter()
        .skip_while(|(_, d)| *d < low)
        .take_while(|(_, d)| *d <= high)
        .copied()
        .collect()
}

/// Perturbs the rotating regular n-gon (unit masses, `p_φ = α`) by `ε` along
/// `direction`, integrates, and fits the exponential growth of the shape
/// deviation on the window `[10ε, 1e-3]`.
pub fn stability_probe(
    n: usize,
    alpha: f64,
    epsilon: f64,
    direction: ProbeDirection,
    cfg: &IntegratorConfig,
) -> Result<ProbeReport> {
    if !(epsilon > 0.0 && epsilon < FIT_WINDOW_TOP / 10.0) {
        return Err(Error::InvalidInput(format!(
            "epsilon must lie in (0, {}), got {epsilon}",
            FIT_WINDOW_TOP / 10.0
        )));
    }
    let theta1 = critical_alpha_sq(n)?;
    let poly = regular_polygon(n)?;
    let dx = probe_perturbation(n, alpha, direction)?;
    let at = |k: usize, i: usize| epsilon * dx[k * n + i];
    let masses = MassVector::uniform(n);
    let start = SphericalPhase {
        phi: (0..n).map(|i| poly.phi()[i] + at(0, i)).collect(),
        theta: (0..n).map(|i| PI / 2.0 + at(1, i)).collect(),
        p_phi: (0..n).map(|i| alpha + at(2, i)).collect(),
        p_theta: (0..n).map(|i| at(3, i)).collect(),
    };
    let state0 = phase_from_spherical(&masses, &start, 0.0)?;
    let mut cfg = *cfg;
    if cfg.stop_deviation.is_none() {
        cfg.stop_deviation = Some(10.0 * FIT_WINDOW_TOP);
    }
    let record = integrate(&masses, &state0, &cfg)?;
    record.check_singularity()?;
    let window = fit_window(&record.deviation_series(), 10.0 * epsilon, FIT_WINDOW_TOP);
    let fitted_rate = fit_log_slope(&window);
    let gap = theta1 - alpha * alpha;
    let verdict = if record.max_shape_deviation > BOUNDED_FACTOR * epsilon {
        ProbeVerdict::Grows
    } else {
        ProbeVerdict::Bounded
    };
    Ok(ProbeReport {
        n,
        alpha,
        epsilon,
        direction,
        predicted_rate: (gap > 0.0).then(|| gap.sqrt()),
        fitted_rate,
        fit_points: window.len(),
        max_shape_deviation: record.max_shape_deviation,
        verdict,
        record,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn polygon_state(n: usize, alpha: f64) -> PhaseState {
        relative_equilibrium_trajectory(n, alpha, 0.0, 0.0).unwrap()
    }

    #[test]
    fn equilibrium_has_zero_field() {
        let s = polygon_state(3, 0.0);
        let (dq, dp) = eom_cartesian(&MassVector::uniform(3), &s).unwrap();
        for (a, b) in dq.iter().zip(&dp) {
            assert!(a.norm() < 1e-15 && b.norm() < 1e-14);
        }
    }

    #[test]
    fn spherical_field_examples() {
        let masses = MassVector::uniform(5);
        let poly = regular_polygon(5).unwrap();
        let s = SphericalPhase {
            phi: poly.phi().to_vec(),
            theta: vec![PI / 2.0; 5],
            p_phi: vec![0.7; 5],
            p_theta: vec![0.0; 5],
        };
        let d = eom_spherical(&masses, &s).unwrap();
        for i in 0..5 {
            assert_eq!(d.theta[i], 0.0);
            assert!(d.p_theta[i].abs() < 1e-13);
            assert!(d.p_phi[i].abs() < 1e-13);
            assert_abs_diff_eq!(d.phi[i], 0.7, epsilon = 1e-15);
        }
        let polar = SphericalPhase {
            theta: vec![1e-9, 1.0, 1.0, 1.0, 1.0],
            ..s
        };
        assert!(matches!(
            eom_spherical(&masses, &polar),
            Err(Error::PoleSingularity { index: 0, .. })
        ));
    }

    #[test]
    fn relative_equilibrium_examples() {
        let s = relative_equilibrium_trajectory(3, 1.0, 0.0, 0.0).unwrap();
        let poly = regular_polygon(3).unwrap();
        for i in 0..3 {
            assert_abs_diff_eq!(
                s.q[i],
                spherical_point(poly.phi()[i], PI / 2.0),
                epsilon = 1e-15
            );
            assert!(s.q[i].dot(&s.p[i]).abs() < 1e-15);
        }
        let later = relative_equilibrium_trajectory(3, 1.0, 0.0, 2.7).unwrap();
        assert!(later
            .polar_angles()
            .iter()
            .all(|t| (t - PI / 2.0).abs() < 1e-15));
        let q0 = s.q.clone();
        let times: Vec<f64> = (0..20).map(|k| 0.37 * k as f64).collect();
        let m = MassVector::uniform(3);
        for (a, b) in [(1.0, 0.0), (0.8, 0.8), (-1.3, -1.3), (2.0, 0.0)] {
            assert!(rotating_orbit_residual(&m, &q0, a, b, &times).unwrap() <= 1e-10);
        }
        assert!(matches!(
            relative_equilibrium_trajectory(4, 1.0, 0.0, 0.0),
            Err(Error::EvenN { n: 4 })
        ));
    }

    #[test]
    fn rigid_rotation_is_invariant() {
        let cfg = IntegratorConfig {
            dt: 1e-3,
            t_end: 50.0,
            sample_stride: 1000,
            stop_deviation: None,
        };
        let r = integrate(&MassVector::uniform(3), &polygon_state(3, 1.0), &cfg).unwrap();
        assert_eq!(r.termination, Termination::Completed);
        assert!(r.max_shape_deviation <= 1e-8, "{}", r.max_shape_deviation);
        assert!(r.energy_drift <= 1e-8);
        assert!(r.momentum_drift <= 1e-10);
        assert!(r.constraint_violation <= 1e-10);
        assert_eq!(r.samples.len(), 51);
        assert!(r
            .samples
            .windows(2)
            .all(|w| w[0].state.time < w[1].state.time));
    }

    #[test]
    fn equilibrium_stays_put() {
        let s = polygon_state(5, 0.0);
        let cfg = IntegratorConfig {
            dt: 1e-3,
            t_end: 10.0,
            sample_stride: 500,
            stop_deviation: None,
        };
        let r = integrate(&MassVector::uniform(5), &s, &cfg).unwrap();
        let end = &r.samples.last().unwrap().state;
        for i in 0..5 {
            assert!((end.q[i] - s.q[i]).norm() <= 1e-10);
            assert!(end.p[i].norm() <= 1e-10);
        }
    }

    fn wobbly_start() -> (MassVector, PhaseState) {
        // rotating triangle above the critical speed, visibly perturbed
        let masses = MassVector::new(vec![1.0, 1.1, 0.9]).unwrap();
        let s = SphericalPhase {
            phi: vec![
                2.0 * PI / 3.0 + 0.05,
                4.0 * PI / 3.0 - 0.03,
                2.0 * PI + 0.02,
            ],
            theta: vec![PI / 2.0 + 0.04, PI / 2.0 - 0.02, PI / 2.0 + 0.03],
            p_phi: vec![3.1, 3.3, 2.6],
            p_theta: vec![0.05, -0.1, 0.02],
        };
        let state = phase_from_spherical(&masses, &s, 0.0).unwrap();
        (masses, state)
    }

    #[test]
    fn fourth_order_convergence() {
        let (masses, state) = wobbly_start();
        let run = |dt: f64| {
            let cfg = IntegratorConfig {
                dt,
                t_end: 4.0,
                sample_stride: 100_000,
                stop_deviation: None,
            };
            integrate(&masses, &state, &cfg).unwrap()
        };
        let (coarse, fine, finer) = (run(0.02), run(0.01), run(0.005));
        // energy error of the projected scheme shrinks at least as fast as dt⁴
        let ratio = coarse.energy_drift / fine.energy_drift;
        assert!(ratio >= 14.0, "energy ratio {ratio}");
        // global state error: Richardson ratio of successive differences
        let end = |r: &TrajectoryRecord| r.samples.last().unwrap().state.clone();
        let gap = |a: &PhaseState, b: &PhaseState| {
            a.q.iter()
                .zip(&b.q)
                .map(|(x, y)| (x - y).norm())
                .fold(0.0, f64::max)
        };
        let rich = gap(&end(&coarse), &end(&fine)) / gap(&end(&fine), &end(&finer));
        assert!((13.0..=19.0).contains(&rich), "state ratio {rich}");
    }

    #[test]
    fn charts_agree() {
        let (masses, state) = wobbly_start();
        let cfg = IntegratorConfig {
            dt: 1e-3,
            t_end: 10.0,
            sample_stride: 500,
            stop_deviation: None,
        };
        let cart = integrate(&masses, &state, &cfg).unwrap();
        let sph = integrate_spherical(&masses, &phase_to_spherical(&state).unwrap(), &cfg).unwrap();
        assert_eq!(cart.samples.len(), sph.len());
        for (c, (t, s)) in cart.samples.iter().zip(&sph) {
            assert_abs_diff_eq!(c.state.time, *t, epsilon = 1e-9);
            let lifted = phase_from_spherical(&masses, s, *t).unwrap();
            for (a, b) in c.state.distances().iter().zip(lifted.distances()) {
                assert!((a - b).abs() <= 1e-7, "t={t}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn singular_approach_is_flagged() {
        let masses = MassVector::uniform(2);
        // two bodies moving toward each other along the equator
        let s = SphericalPhase {
            phi: vec![0.0, 0.3],
            theta: vec![PI / 2.0; 2],
            p_phi: vec![1.0, -1.0],
            p_theta: vec![0.0; 2],
        };
        let state = phase_from_spherical(&masses, &s, 0.0).unwrap();
        let cfg = IntegratorConfig {
            dt: 1e-4,
            t_end: 5.0,
            sample_stride: 100,
            stop_deviation: None,
        };
        let r = integrate(&masses, &state, &cfg).unwrap();
        assert!(matches!(
            r.termination,
            Termination::SingularityApproach { .. }
        ));
        assert!(matches!(
            r.check_singularity(),
            Err(Error::SingularityApproach { .. })
        ));
    }

    #[test]
    fn log_slope_fit() {
        let pts: Vec<(f64, f64)> = (0..50)
            .map(|k| (k as f64 * 0.1, 1e-5 * (1.7 * k as f64 * 0.1).exp()))
            .collect();
        assert_abs_diff_eq!(fit_log_slope(&pts).unwrap(), 1.7, epsilon = 1e-12);
        assert_eq!(fit_log_slope(&pts[..1]), None);
        let w = fit_window(
            &[
                (0.0, 1.0),
                (1.0, 5.0),
                (2.0, 20.0),
                (3.0, 200.0),
                (4.0, 50.0),
            ],
            5.0,
            100.0,
        );
        assert_eq!(w, vec![(1.0, 5.0), (2.0, 20.0)]);
    }

    #[test]
    fn probe_growth_at_rest() {
        let cfg = IntegratorConfig {
            sample_stride: 10,
            ..Default::default()
        };
        let r = stability_probe(3, 0.0, 1e-6, ProbeDirection::UnstableMode, &cfg).unwrap();
        let rate = r.fitted_rate.unwrap();
        assert_eq!(r.verdict, ProbeVerdict::Grows);
        assert!((rate / 2.149140 - 1.0).abs() < 0.05, "rate {rate}");
        assert!(r.record.energy_drift <= 1e-8);
    }

    #[test]
    fn probe_rejects_bad_epsilon() {
        let cfg = IntegratorConfig::default();
        assert!(stability_probe(3, 0.0, 0.0, ProbeDirection::UnstableMode, &cfg).is_err());
        assert!(matches!(
            stability_probe(4, 0.0, 1e-6, ProbeDirection::UnstableMode, &cfg),
            Err(Error::EvenN { .. })
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(20))]

        #[test]
        fn spherical_and_cartesian_fields_agree(
            phi in prop::collection::vec(0.0..2.0 * PI, 4),
            theta in prop::collection::vec(0.4..2.7f64, 4),
            p_phi in prop::collection::vec(-1.0..1.0f64, 4),
            p_theta in prop::collection::vec(-1.0..1.0f64, 4),
            m in prop::collection::vec(0.5..2.0f64, 4),
        ) {
            let masses = MassVector::new(m).unwrap();
            let s = SphericalPhase { phi, theta, p_phi, p_theta };
            let Ok(state) = phase_from_spherical(&masses, &s, 0.0) else { return Ok(()) };
            prop_assume!(min_separation_points(&state.q) > 0.05);
            let d = eom_spherical(&masses, &s).unwrap();
            let (dq, dp) = eom_cartesian(&masses, &state).unwrap();
            // chart transport: q̇ and ṗ by the chain rule from the spherical derivative
            let h = 1e-6;
            let fwd = phase_from_spherical(&masses, &s.axpy(h, &d), 0.0).unwrap();
            let back = phase_from_spherical(&masses, &s.axpy(-h, &d), 0.0).unwrap();
            for i in 0..4 {
                let fq = (fwd.q[i] - back.q[i]) / (2.0 * h);
                let fp = (fwd.p[i] - back.p[i]) / (2.0 * h);
                prop_assert!((fq - dq[i]).norm() <= 1e-6 * (1.0 + dq[i].norm()));
                prop_assert!((fp - dp[i]).norm() <= 1e-6 * (1.0 + dp[i].norm()));
            }
            let back = phase_to_spherical(&state).unwrap();
            for i in 0..4 {
                prop_assert!((back.p_phi[i] - s.p_phi[i]).abs() <= 1e-12);
                prop_assert!((back.p_theta[i] - s.p_theta[i]).abs() <= 1e-12);
                prop_assert!((back.theta[i] - s.theta[i]).abs() <= 1e-12);
            }
        }
    }
}
