//! Shared helpers for the integration suites: a dense-matrix oracle for the
//! collapsed Gaussian density, independent of the low-rank implementation.

use nalgebra::{DMatrix, DVector};

pub const LN_2PI: f64 = 1.8378770664093453;

/// Explicit n x n covariance sigma^2 (U D(tau) U' + I) factored densely.
pub fn dense_mvn_logpdf(x: &DVector<f64>, u: &DMatrix<f64>, tau: &[f64], sigma2: f64) -> f64 {
    let n = x.len();
    let mut cov = DMatrix::<f64>::identity(n, n);
    for (l, &t) in tau.iter().enumerate() {
        let col = u.column(l);
        for i in 0..n {
            for j in 0..n {
                cov[(i, j)] += t * col[i] * col[j];
            }
        }
    }
    cov *= sigma2;
    let chol = cov.cholesky().expect("oracle covariance SPD");
    let logdet = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let sol = chol.solve(x);
    -0.5 * (n as f64 * LN_2PI + logdet + x.dot(&sol))
}
