//! Circulant spectra of the regular n-gon.
//!
//! With `φ = 2π/n` and `n = 2p + 1` the three closed-form sequences (index
//! `k = 1..n`, stored at `k − 1`) are
//!
//! * `Γ_k = 2 Σ_{j=1}^p sin(j(k−1)φ) / sin²(jφ)`: `B` has eigenvalues `iΓ_k`,
//! * `Φ_k = 4 Σ_{j=1}^p cos(jφ)/sin³(jφ) · (1 − cos((k−1)jφ))`: the `φφ` Hessian block,
//! * `Θ_k = 2 Σ_{j=1}^p (cos(j(k−1)φ) − cos(jφ)) / sin³(jφ)`: the `θθ` Hessian block.
//!
//! Oracle checks compare them against [`crate::linalg::symmetric_eigen`] on the
//! explicit matrices, by sorted multiset and by eigenvector residuals against
//! the roots-of-unity basis.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{regular_polygon, MassVector, ANTIPODAL_TOL};
use crate::linalg::{signature, symmetric_eigen};
use crate::potential::hessian_spherical;

/// Zero band for signature counts, scaled by `1 + ‖block‖`.
pub const SIGNATURE_ZERO_TOL: f64 = 1e-9;
/// Margin required of every strict inequality in [`certify_sequences`].
pub const CERTIFY_MARGIN: f64 = 1e-9;

/// First row of a circulant matrix, `c_{kj} = c_{k−1, j−1}` cyclically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CirculantRow(pub Vec<f64>);

impl CirculantRow {
    pub fn matrix(&self) -> DMatrix<f64> {
        let n = self.0.len();
        DMatrix::from_fn(n, n, |k, j| self.0[(j + n - k) % n])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CirculantEigenpair {
    pub value: Complex64,
    pub vector: Vec<Complex64>,
}

/// `ρ_k = exp(2πik/n)`.
pub fn root_of_unity(n: usize, k: usize) -> Complex64 {
    Complex64::from_polar(1.0, 2.0 * PI * (k % n) as f64 / n as f64)
}

/// Eigenpairs `v_k = (1, ρ_{k−1}, …, ρ_{k−1}^{n−1})`, `λ_k = Σ_j c_{1j} ρ_{k−1}^{j−1}`.
pub fn circulant_eigen(row: &CirculantRow) -> Vec<CirculantEigenpair> {
    let n = row.0.len();
    (0..n)
        .map(|k| {
            let vector: Vec<Complex64> = (0..n).map(|j| root_of_unity(n, k * j)).collect();
            let value = row
                .0
                .iter()
                .zip(&vector)
                .map(|(c, r)| r * *c)
                .sum::<Complex64>();
            CirculantEigenpair { value, vector }
        })
        .collect()
}

/// `b_kj = sin(φ_j − φ_k) / |sin(φ_j − φ_k)|³`, zero diagonal, so `B m` is the
/// vector of circle equilibrium residuals.
pub fn build_skew_b(phi: &[f64]) -> Result<DMatrix<f64>> {
    let n = phi.len();
    let mut b = DMatrix::zeros(n, n);
    for k in 0..n {
        for j in k + 1..n {
            let (s, c) = (phi[j] - phi[k]).sin_cos();
            if c.abs() >= 1.0 - ANTIPODAL_TOL {
                return Err(Error::SingularConfiguration {
                    i: k,
                    j,
                    cos_abs: c.abs(),
                });
            }
            let v = s / (s.abs() * s * s);
            b[(k, j)] = v;
            b[(j, k)] = -v;
        }
    }
    Ok(b)
}

fn half_order(n: usize) -> Result<usize> {
    if n < 3 || n % 2 == 0 {
        return Err(Error::EvenN { n });
    }
    Ok((n - 1) / 2)
}

fn step(n: usize) -> f64 {
    2.0 * PI / n as f64
}

pub fn gamma_sequence(n: usize) -> Result<Vec<f64>> {
    let p = half_order(n)?;
    let a = step(n);
    Ok((0..n)
        .map(|k| {
            2.0 * (1..=p)
                .map(|j| {
                    let j = j as f64;
                    (j * k as f64 * a).sin() / (j * a).sin().powi(2)
                })
                .sum::<f64>()
        })
        .collect())
}

pub fn phi_sequence(n: usize) -> Result<Vec<f64>> {
    let p = half_order(n)?;
    let a = step(n);
    Ok((0..n)
        .map(|k| {
            4.0 * (1..=p)
                .map(|j| {
                    let j = j as f64;
                    (j * a).cos() / (j * a).sin().powi(3) * (1.0 - (k as f64 * j * a).cos())
                })
                .sum::<f64>()
        })
        .collect())
}

pub fn theta_sequence(n: usize) -> Result<Vec<f64>> {
    let p = half_order(n)?;
    let a = step(n);
    Ok((0..n)
        .map(|k| {
            2.0 * (1..=p)
                .map(|j| {
                    let j = j as f64;
                    ((j * k as f64 * a).cos() - (j * a).cos()) / (j * a).sin().powi(3)
                })
                .sum::<f64>()
        })
        .collect())
}

/// `Θ₁ = 2 Σ_{j=1}^p (1 − cos(2jπ/n)) / sin³(2jπ/n)`, the squared critical angular velocity.
pub fn critical_alpha_sq(n: usize) -> Result<f64> {
    let p = half_order(n)?;
    let a = step(n);
    Ok(2.0
        * (1..=p)
            .map(|j| {
                let x = j as f64 * a;
                (1.0 - x.cos()) / x.sin().powi(3)
            })
            .sum::<f64>())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Signature {
    pub zero: usize,
    pub negative: usize,
    pub positive: usize,
}

impl From<(usize, usize, usize)> for Signature {
    fn from((zero, negative, positive): (usize, usize, usize)) -> Self {
        Self {
            zero,
            negative,
            positive,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    pub n: usize,
    pub phi_angle: f64,
    pub gamma: Vec<f64>,
    pub phi_evals: Vec<f64>,
    pub theta_evals: Vec<f64>,
    pub theta1: f64,
    pub critical_alpha: f64,
    /// Counted on eigensolves of the analytic Hessian blocks at the polygon.
    pub phi_signature: Signature,
    pub theta_signature: Signature,
}

pub fn spectrum_report(n: usize) -> Result<SpectrumReport> {
    let gamma = gamma_sequence(n)?;
    let phi_evals = phi_sequence(n)?;
    let theta_evals = theta_sequence(n)?;
    let theta1 = critical_alpha_sq(n)?;
    let h = hessian_spherical(&MassVector::uniform(n), &regular_polygon(n)?)?;
    let ep = symmetric_eigen(&h.phi_block);
    let et = symmetric_eigen(&h.theta_block);
    Ok(SpectrumReport {
        n,
        phi_angle: step(n),
        gamma,
        phi_evals,
        theta_evals,
        theta1,
        critical_alpha: theta1.sqrt(),
        phi_signature: signature(&ep.values, h.phi_block.norm(), SIGNATURE_ZERO_TOL).into(),
        theta_signature: signature(&et.values, h.theta_block.norm(), SIGNATURE_ZERO_TOL).into(),
    })
}

/// Largest entrywise gap between two multisets after sorting both.
pub fn sorted_multiset_gap(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "multisets differ in size");
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    a.iter().zip(&b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// `max_k ‖M v_k − λ_k v_k‖ / ‖v_k‖` over the roots-of-unity basis, checking
/// that `values[k]` belongs to index `k` and not just to the multiset.
pub fn eigenvector_residual(m: &DMatrix<f64>, values: &[Complex64]) -> f64 {
    let n = m.nrows();
    let norm = (n as f64).sqrt();
    (0..n)
        .map(|k| {
            let v: Vec<Complex64> = (0..n).map(|j| root_of_unity(n, k * j)).collect();
            (0..n)
                .map(|r| {
                    let mv: Complex64 = (0..n).map(|c| v[c] * m[(r, c)]).sum();
                    (mv - values[k] * v[r]).norm_sqr()
                })
                .sum::<f64>()
                .sqrt()
                / norm
        })
        .fold(0.0, f64::max)
}

/// Deviations of the closed forms from eigensolves of the explicit matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleComparison {
    pub n: usize,
    /// Γ² against the eigenvalues of `−B²`; the sign and index of each Γ_k
    /// are pinned by `gamma_vector_residual`.
    pub gamma_sq_gap: f64,
    pub phi_gap: f64,
    pub theta_gap: f64,
    pub gamma_vector_residual: f64,
    pub phi_vector_residual: f64,
    pub theta_vector_residual: f64,
}

impl OracleComparison {
    pub fn max_gap(&self) -> f64 {
        [
            self.gamma_sq_gap,
            self.phi_gap,
            self.theta_gap,
            self.gamma_vector_residual,
            self.phi_vector_residual,
            self.theta_vector_residual,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

pub fn compare_with_eigensolve(n: usize) -> Result<OracleComparison> {
    let poly = regular_polygon(n)?;
    let gamma = gamma_sequence(n)?;
    let phis = phi_sequence(n)?;
    let thetas = theta_sequence(n)?;

    let b = build_skew_b(poly.phi())?;
    let neg_b2 = -(&b * &b);
    let eb = symmetric_eigen(&neg_b2);
    let g2: Vec<f64> = gamma.iter().map(|g| g * g).collect();

    let h = hessian_spherical(&MassVector::uniform(n), &poly)?;
    let ep = symmetric_eigen(&h.phi_block);
    let et = symmetric_eigen(&h.theta_block);

    let imag =
        |v: &[f64]| -> Vec<Complex64> { v.iter().map(|&g| Complex64::new(0.0, g)).collect() };
    let real =
        |v: &[f64]| -> Vec<Complex64> { v.iter().map(|&x| Complex64::new(x, 0.0)).collect() };

    Ok(OracleComparison {
        n,
        gamma_sq_gap: sorted_multiset_gap(&g2, &eb.values),
        phi_gap: sorted_multiset_gap(&phis, &ep.values),
        theta_gap: sorted_multiset_gap(&thetas, &et.values),
        gamma_vector_residual: eigenvector_residual(&b, &imag(&gamma)),
        phi_vector_residual: eigenvector_residual(&h.phi_block, &real(&phis)),
        theta_vector_residual: eigenvector_residual(&h.theta_block, &real(&thetas)),
    })
}

/// One inequality chain from the concavity and ordering arguments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceCertificate {
    pub name: String,
    pub holds: bool,
    /// Smallest slack over the strict inequalities; `+∞` when there are none.
    pub worst_margin: f64,
    /// Largest violation among the equalities closing the chain.
    pub max_equality_error: f64,
    pub checked: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certification {
    pub n: usize,
    pub vacuous: bool,
    pub certificates: Vec<SequenceCertificate>,
}

impl Certification {
    pub fn all_hold(&self) -> bool {
        self.certificates.iter().all(|c| c.holds)
    }

    pub fn worst_margin(&self) -> f64 {
        self.certificates
            .iter()
            .map(|c| c.worst_margin)
            .fold(f64::INFINITY, f64::min)
    }
}

fn certificate(
    name: &str,
    slacks: impl IntoIterator<Item = f64>,
    equalities: impl IntoIterator<Item = (f64, f64)>,
) -> SequenceCertificate {
    let (worst, count) = slacks
        .into_iter()
        .fold((f64::INFINITY, 0), |(w, c), s| (w.min(s), c + 1));
    let (eq_err, eq_count) = equalities
        .into_iter()
        .fold((0.0f64, 0), |(e, c), (a, b)| (e.max((a - b).abs()), c + 1));
    SequenceCertificate {
        name: name.to_string(),
        holds: worst > CERTIFY_MARGIN && eq_err <= CERTIFY_MARGIN,
        worst_margin: worst,
        max_equality_error: eq_err,
        checked: count + eq_count,
    }
}

/// Numeric certification, for one odd `n`, of every inequality chain used in
/// the proofs that `Γ_k ≠ 0` (k ≥ 2), that the `φφ` block is negative
/// semidefinite with a simple zero and that the `θθ` block is positive
/// semidefinite with a double zero.
///
/// Each strict inequality must hold with slack above [`CERTIFY_MARGIN`].
pub fn certify_sequences(n: usize) -> Result<Certification> {
    let p = half_order(n)?;
    if p < 2 {
        return Ok(Certification {
            n,
            vacuous: true,
            certificates: Vec::new(),
        });
    }
    let gamma = gamma_sequence(n)?;
    let phis = phi_sequence(n)?;
    let thetas = theta_sequence(n)?;
    let a = step(n);
    // 1-based cyclic index
    let at = |s: &[f64], k: usize| s[(k - 1) % n];
    let evens = |s: &[f64], upto: usize| -> Vec<f64> { (1..=upto).map(|i| at(s, 2 * i)).collect() };

    let g_even = evens(&gamma, p); // Γ_2, Γ_4, …, Γ_2p
    let f_even = evens(&phis, p + 1); // Φ_2, …, Φ_{2p+2} = Φ_1
    let t_even = evens(&thetas, p + 1);

    let second =
        |s: &[f64]| -> Vec<f64> { s.windows(3).map(|w| w[2] - 2.0 * w[1] + w[0]).collect() };
    let third = |s: &[f64]| -> Vec<f64> {
        s.windows(4)
            .map(|w| w[3] - 3.0 * w[2] + 3.0 * w[1] - w[0])
            .collect()
    };
    let increasing = |s: &[f64]| -> Vec<f64> { s.windows(2).map(|w| w[1] - w[0]).collect() };

    let cot_sum: f64 = (1..=p).map(|j| 1.0 / (j as f64 * a).tan()).sum();
    let half_cot: f64 = (1..=p)
        .map(|j| {
            let j = j as f64;
            1.0 / (j * a).tan() - 1.0 / ((j - 0.5) * a).tan()
        })
        .sum();
    let gamma_2p = g_even[p - 1];
    let none = std::iter::empty::<(f64, f64)>;

    let mut certificates = vec![
        certificate(
            "gamma_concave",
            second(&g_even).into_iter().map(|d| -d),
            none(),
        ),
        certificate("gamma_ends_positive", [g_even[0], gamma_2p], none()),
        // Γ_2p = −4 Σ cot jφ = −2 Σ [cot jφ − cot (j − ½)φ] > 0
        certificate(
            "gamma_2p_cotangent_form",
            [-half_cot],
            [(gamma_2p, -4.0 * cot_sum), (gamma_2p, -2.0 * half_cot)],
        ),
        certificate("gamma_nonzero", gamma[1..].iter().map(|g| g.abs()), none()),
    ];

    let f_diff = increasing(&f_even);
    certificates.push(certificate(
        "phi_difference_concave",
        third(&f_even).into_iter().map(|d| -d),
        none(),
    ));
    certificates.push(certificate(
        "phi_difference_ends_positive",
        [f_diff[0], f_diff[p - 1]],
        none(),
    ));
    certificates.push(certificate(
        "phi_ordering",
        f_diff.iter().copied(),
        [(at(&phis, 1), 0.0), (at(&phis, 2 * p + 2), at(&phis, 1))],
    ));

    let t_diff = increasing(&t_even);
    certificates.push(certificate(
        "theta_difference_concave",
        third(&t_even).into_iter().map(|d| -d),
        none(),
    ));
    certificates.push(certificate(
        "theta_difference_ends_positive",
        [t_diff[0], t_diff[p - 1]],
        none(),
    ));
    certificates.push(certificate(
        "theta_ordering",
        t_diff.iter().copied().chain([at(&thetas, 1)]),
        [(at(&thetas, 2), 0.0)],
    ));

    Ok(Certification {
        n,
        vacuous: false,
        certificates,
    })
}
