//! Cyclic Jacobi diagonalization of real symmetric matrices.
//!
//! Each rotation annihilates one off-diagonal pair; sweeps run over all pairs
//! in row order until the off-diagonal Frobenius norm falls below
//! `EPS_REL · ‖A‖_F`.

use nalgebra::DMatrix;

const EPS_REL: f64 = 1e-15;
const MAX_SWEEPS: usize = 100;

/// Eigenvalues in ascending order with matching eigenvector columns.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

impl SymmetricEigen {
    pub fn max(&self) -> f64 {
        *self.values.last().expect("empty spectrum")
    }

    pub fn min(&self) -> f64 {
        self.values[0]
    }
}

/// Diagonalizes the symmetric part of `a`.
pub fn symmetric_eigen(a: &DMatrix<f64>) -> SymmetricEigen {
    assert!(a.is_square(), "symmetric_eigen needs a square matrix");
    let n = a.nrows();
    let mut m = (a + a.transpose()) * 0.5;
    let mut v = DMatrix::<f64>::identity(n, n);
    let scale = m.norm();

    for _ in 0..MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|p| (0..n).filter(move |&q| q != p).map(move |q| (p, q)))
            .map(|(p, q)| m[(p, q)] * m[(p, q)])
            .sum::<f64>()
            .sqrt();
        if off <= EPS_REL * scale || scale == 0.0 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                rotate(&mut m, &mut v, p, q, c, s);
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(i, i)].total_cmp(&m[(j, j)]));
    let values = order.iter().map(|&i| m[(i, i)]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| v[(r, order[c])]);
    SymmetricEigen { values, vectors }
}

// A ← Jᵀ A J, V ← V J for the rotation J in the (p, q) plane.
fn rotate(m: &mut DMatrix<f64>, v: &mut DMatrix<f64>, p: usize, q: usize, c: f64, s: f64) {
    let n = m.nrows();
    for k in 0..n {
        let mkp = m[(k, p)];
        let mkq = m[(k, q)];
        m[(k, p)] = c * mkp - s * mkq;
        m[(k, q)] = s * mkp + c * mkq;
    }
    for k in 0..n {
        let mpk = m[(p, k)];
        let mqk = m[(q, k)];
        m[(p, k)] = c * mpk - s * mqk;
        m[(q, k)] = s * mpk + c * mqk;
    }
    for k in 0..n {
        let vkp = v[(k, p)];
        let vkq = v[(k, q)];
        v[(k, p)] = c * vkp - s * vkq;
        v[(k, q)] = s * vkp + c * vkq;
    }
}

/// Counts of (zero, negative, positive) eigenvalues; zero band `tol · (1 + ‖A‖_F)`.
pub fn signature(values: &[f64], norm: f64, tol: f64) -> (usize, usize, usize) {
    let band = tol * (1.0 + norm);
    values.iter().fold((0, 0, 0), |(z, neg, pos), &x| {
        if x.abs() <= band {
            (z + 1, neg, pos)
        } else if x < 0.0 {
            (z, neg + 1, pos)
        } else {
            (z, neg, pos + 1)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn small_known_spectrum() {
        let a = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 1.0, 1.0, 0.0, 1.0, 1.0, 1.0, 0.0]);
        let e = symmetric_eigen(&a);
        let want = [-1.0, -1.0, 2.0];
        for (x, y) in e.values.iter().zip(want) {
            assert!((x - y).abs() < 1e-14);
        }
    }

    #[test]
    fn diagonal_and_empty_sweeps() {
        let a = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![3.0, -1.0, 2.0]));
        let e = symmetric_eigen(&a);
        assert_eq!(e.values, vec![-1.0, 2.0, 3.0]);
        assert_eq!(signature(&e.values, a.norm(), 1e-9), (0, 1, 2));
    }

    proptest! {
        #[test]
        fn reconstructs_and_matches_reference(entries in prop::collection::vec(-5.0..5.0f64, 36)) {
            let b = DMatrix::from_row_slice(6, 6, &entries);
            let a = &b + b.transpose();
            let e = symmetric_eigen(&a);
            let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(e.values.clone()));
            let recon = &e.vectors * d * e.vectors.transpose();
            prop_assert!((recon - &a).amax() <= 1e-12 * (1.0 + a.amax()));
            let orth = e.vectors.transpose() * &e.vectors - DMatrix::identity(6, 6);
            prop_assert!(orth.amax() <= 1e-13);

            let mut reference: Vec<f64> = a.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
            reference.sort_by(f64::total_cmp);
            for (x, y) in e.values.iter().zip(&reference) {
                prop_assert!((x - y).abs() <= 1e-11 * (1.0 + a.amax()));
            }
        }
    }
}
