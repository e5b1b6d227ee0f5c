//! Cyclic Jacobi eigenvalue iteration for small dense symmetric matrices.

use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 100;

/// Eigenvalues of the symmetric `n × n` row-major matrix `a`, ascending.
pub fn symmetric_eigenvalues(a: &[f64], n: usize) -> Result<Vec<f64>> {
    if a.len() != n * n {
        return Err(Error::usage(format!("matrix has {} entries, expected {n}x{n}", a.len())));
    }
    for i in 0..n {
        for j in 0..i {
            let (x, y) = (a[i * n + j], a[j * n + i]);
            if (x - y).abs() > 1e-12 * (1.0 + x.abs().max(y.abs())) {
                return Err(Error::usage(format!("matrix is not symmetric at ({i}, {j})")));
            }
        }
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric("matrix has non-finite entries"));
    }
    let mut m = a.to_vec();
    let scale = m.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    for _ in 0..MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i * n + j] * m[i * n + j])
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * scale {
            let mut eig: Vec<f64> = (0..n).map(|i| m[i * n + i]).collect();
            eig.sort_by(|x, y| x.partial_cmp(y).unwrap());
            return Ok(eig);
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let (app, aqq) = (m[p * n + p], m[q * n + q]);
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (m[k * n + p], m[k * n + q]);
                    m[k * n + p] = c * akp - s * akq;
                    m[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (m[p * n + k], m[q * n + k]);
                    m[p * n + k] = c * apk - s * aqk;
                    m[q * n + k] = s * apk + c * aqk;
                }
            }
        }
    }
    Err(Error::numeric(format!("Jacobi iteration did not converge for {n}x{n} matrix")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two_closed_form() {
        let eig = symmetric_eigenvalues(&[2.0, 1.0, 1.0, 2.0], 2).unwrap();
        assert!((eig[0] - 1.0).abs() < 1e-14 && (eig[1] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn diagonal_and_trace() {
        let eig = symmetric_eigenvalues(&[3.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 2.0], 3).unwrap();
        assert_eq!(eig, vec![-1.0, 2.0, 3.0]);
    }

    #[test]
    fn rejects_asymmetric() {
        assert!(symmetric_eigenvalues(&[1.0, 2.0, 0.0, 1.0], 2).is_err());
    }
}
