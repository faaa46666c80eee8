// SPDX-License-Identifier: Apache-2.0

//! Non-negative least squares (Lawson-Hanson active set).

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NnlsError {
    #[error("{samples} samples cannot determine {features} coefficients")]
    Underdetermined { samples: usize, features: usize },
    #[error("samples have inconsistent feature counts")]
    Ragged,
    #[error("non-finite input")]
    NonFinite,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NnlsFit {
    pub coefficients: Vec<f64>,
    /// Residual gradient `Aᵀ(b - Ax)`.
    pub gradient: Vec<f64>,
    pub residual_norm: f64,
    pub iterations: usize,
}

/// Stationarity tolerance, scaled by the magnitude of `Aᵀb`.
pub fn kkt_tolerance(a: &DMatrix<f64>, b: &DVector<f64>) -> f64 {
    let atb = a.transpose() * b;
    1e-9 * atb.amax().max(1.0)
}

/// True if `x` satisfies the NNLS optimality conditions within `tol`.
pub fn kkt_holds(a: &DMatrix<f64>, b: &DVector<f64>, x: &[f64], tol: f64) -> bool {
    let xv = DVector::from_column_slice(x);
    let w = a.transpose() * (b - a * &xv);
    x.iter().zip(w.iter()).all(|(&xi, &wi)| {
        if xi < 0.0 {
            false
        } else if xi > 0.0 {
            wi.abs() <= tol
        } else {
            wi <= tol
        }
    })
}

fn lstsq(a: &DMatrix<f64>, b: &DVector<f64>, cols: &[usize]) -> DVector<f64> {
    let sub = a.select_columns(cols);
    sub.svd(true, true).solve(b, 1e-12).expect("svd with u and v")
}

/// Minimizes `|Ax - b|` subject to `x >= 0`. Among equally good entering
/// columns the lowest index wins, so duplicated features pin the first copy.
pub fn nnls(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<NnlsFit, NnlsError> {
    let (m, n) = a.shape();
    if m < n || n == 0 {
        return Err(NnlsError::Underdetermined { samples: m, features: n });
    }
    if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
        return Err(NnlsError::NonFinite);
    }
    let tol = kkt_tolerance(a, b);
    let mut x = DVector::zeros(n);
    let mut passive = vec![false; n];
    let mut w = a.transpose() * b;
    let mut iterations = 0;
    let max_iter = 30 * n.max(1);
    loop {
        let enter = (0..n)
            .filter(|&j| !passive[j] && w[j] > tol)
            .fold(None::<usize>, |best, j| match best {
                Some(k) if w[k] >= w[j] => Some(k),
                _ => Some(j),
            });
        let Some(t) = enter else { break };
        if iterations >= max_iter {
            break;
        }
        passive[t] = true;
        loop {
            iterations += 1;
            let cols: Vec<usize> = (0..n).filter(|&j| passive[j]).collect();
            let zs = lstsq(a, b, &cols);
            let mut z = DVector::zeros(n);
            for (k, &j) in cols.iter().enumerate() {
                z[j] = zs[k];
            }
            if cols.iter().all(|&j| z[j] > 0.0) {
                x = z;
                break;
            }
            let alpha = cols
                .iter()
                .filter(|&&j| z[j] <= 0.0)
                .map(|&j| x[j] / (x[j] - z[j]))
                .fold(f64::INFINITY, f64::min);
            x += (z - &x) * alpha;
            for &j in &cols {
                if x[j] <= f64::EPSILON * x.amax().max(1.0) {
                    x[j] = 0.0;
                    passive[j] = false;
                }
            }
            if iterations >= max_iter {
                break;
            }
        }
        w = a.transpose() * (b - a * &x);
    }
    let r = b - a * &x;
    Ok(NnlsFit {
        coefficients: x.iter().copied().collect(),
        gradient: w.iter().copied().collect(),
        residual_norm: r.norm(),
        iterations,
    })
}

/// Row-wise convenience wrapper.
pub fn fit_nnls(samples: &[(Vec<f64>, f64)]) -> Result<NnlsFit, NnlsError> {
    let n = samples.first().map_or(0, |s| s.0.len());
    if samples.iter().any(|s| s.0.len() != n) {
        return Err(NnlsError::Ragged);
    }
    if samples.len() < n || n == 0 {
        return Err(NnlsError::Underdetermined { samples: samples.len(), features: n });
    }
    let a = DMatrix::from_fn(samples.len(), n, |i, j| samples[i].0[j]);
    let b = DVector::from_iterator(samples.len(), samples.iter().map(|s| s.1));
    nnls(&a, &b)
}
