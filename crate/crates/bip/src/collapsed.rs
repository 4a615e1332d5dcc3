//! Feature-wise marginal likelihood with the loadings integrated out.
//!
//! For feature j the collapsed covariance is sigma_j^2 * (U D(tau_j) U^T + I_n)
//! where D(tau_j) carries tau_lj^2 for active entries and exact zeros for
//! spiked ones. Determinant and quadratic form are evaluated through the
//! rank-r capacitance matrix I + S U^T U S (S = D(tau_j)^{1/2}), so one
//! evaluation costs O(r^3) given the shared U^T U and U^T x_j products
//! instead of O(n^3).

use nalgebra::{DMatrix, DVector};

use crate::error::{BipError, Result};
use crate::linalg::{cholesky_in_place, log_det_from_factor, solve_lower};

pub(crate) const LN_2PI: f64 = 1.8378770664093453;
const CHOL_JITTER: f64 = 1e-10;

/// Reusable buffers for the per-feature capacitance factorization.
#[derive(Debug, Clone, Default)]
pub(crate) struct SpdScratch {
    mat: Vec<f64>,
    vec: Vec<f64>,
    idx: Vec<usize>,
}

impl SpdScratch {
    pub(crate) fn new() -> Self {
        SpdScratch::default()
    }
}

/// log|I + S U'U S| and x' Sigma^{-1} x from sufficient statistics.
///
/// `tau_masked[l]` is tau_lj^2 when component l is active for this feature
/// and exactly zero otherwise; zero entries drop out of the capacitance.
pub(crate) fn capacitance_logdet_quad(
    uu: &DMatrix<f64>,
    ut_x: &[f64],
    x_sq: f64,
    tau_masked: &[f64],
    scratch: &mut SpdScratch,
) -> Result<(f64, f64)> {
    scratch.idx.clear();
    for (l, &t) in tau_masked.iter().enumerate() {
        if t < 0.0 || !t.is_finite() {
            return Err(BipError::numerical("negative or non-finite tau^2"));
        }
        if t > 0.0 {
            scratch.idx.push(l);
        }
    }
    let k = scratch.idx.len();
    if k == 0 {
        return Ok((0.0, x_sq));
    }

    scratch.mat.resize(k * k, 0.0);
    scratch.vec.resize(k, 0.0);
    let s: Vec<f64> = scratch.idx.iter().map(|&l| tau_masked[l].sqrt()).collect();
    for a in 0..k {
        for b in 0..=a {
            let val = s[a] * s[b] * uu[(scratch.idx[a], scratch.idx[b])];
            scratch.mat[a * k + b] = val + if a == b { 1.0 } else { 0.0 };
            scratch.mat[b * k + a] = scratch.mat[a * k + b];
        }
        scratch.vec[a] = s[a] * ut_x[scratch.idx[a]];
    }

    let mut factored = cholesky_in_place(&mut scratch.mat, k);
    if !factored {
        // Rebuild with a small ridge and retry once.
        for a in 0..k {
            for b in 0..=a {
                let val = s[a] * s[b] * uu[(scratch.idx[a], scratch.idx[b])];
                scratch.mat[a * k + b] = val + if a == b { 1.0 + CHOL_JITTER } else { 0.0 };
                scratch.mat[b * k + a] = scratch.mat[a * k + b];
            }
        }
        factored = cholesky_in_place(&mut scratch.mat, k);
    }
    if !factored {
        return Err(BipError::numerical("capacitance matrix not positive definite"));
    }

    let logdet = log_det_from_factor(&scratch.mat, k);

    // Forward solve L w = v; the quadratic reduction is |w|^2.
    solve_lower(&scratch.mat, k, &mut scratch.vec);
    let red: f64 = scratch.vec.iter().map(|w| w * w).sum();

    Ok((logdet, x_sq - red))
}

/// log N(x; 0, sigma^2 (U D U^T + I)) from sufficient statistics.
pub(crate) fn log_density_from_stats(
    n: usize,
    uu: &DMatrix<f64>,
    ut_x: &[f64],
    x_sq: f64,
    tau_masked: &[f64],
    sigma2: f64,
    scratch: &mut SpdScratch,
) -> Result<f64> {
    if !(sigma2 > 0.0 && sigma2.is_finite()) {
        return Err(BipError::numerical("sigma^2 must be positive and finite"));
    }
    let (logdet, quad) = capacitance_logdet_quad(uu, ut_x, x_sq, tau_masked, scratch)?;
    Ok(-0.5 * (n as f64 * (LN_2PI + sigma2.ln()) + logdet + quad / sigma2))
}

/// Inputs for one feature's collapsed density: the active latent columns,
/// the eta-masked slab scales, and the residual variance.
#[derive(Debug, Clone)]
pub struct CollapsedContext {
    /// n x r_gamma columns of U with gamma_l = 1.
    pub u_active: DMatrix<f64>,
    /// Length r_gamma; tau_lj^2 where eta_lj = 1, exactly 0 where spiked.
    pub tau_active: DVector<f64>,
    pub sigma2: f64,
}

impl CollapsedContext {
    fn validate(&self, x: &DVector<f64>) -> Result<()> {
        if self.u_active.ncols() != self.tau_active.len() {
            return Err(BipError::DimensionMismatch(format!(
                "{} active columns vs {} tau entries",
                self.u_active.ncols(),
                self.tau_active.len()
            )));
        }
        if self.u_active.ncols() > 0 && self.u_active.nrows() != x.len() {
            return Err(BipError::DimensionMismatch(format!(
                "x has {} rows, U_active has {}",
                x.len(),
                self.u_active.nrows()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) || self.u_active.iter().any(|v| !v.is_finite()) {
            return Err(BipError::NonFinite("collapsed density input".into()));
        }
        if self.tau_active.iter().any(|&t| t < 0.0 || !t.is_finite()) {
            return Err(BipError::numerical("negative or non-finite tau^2"));
        }
        if !(self.sigma2 > 0.0 && self.sigma2.is_finite()) {
            return Err(BipError::numerical("sigma^2 must be positive and finite"));
        }
        Ok(())
    }
}

/// log N(x_j; 0, sigma_j^2 Sigma_j), Sigma_j = U_gamma D(tau_j) U_gamma^T + I_n.
pub fn log_collapsed_density(x: &DVector<f64>, ctx: &CollapsedContext) -> Result<f64> {
    ctx.validate(x)?;
    let uu = ctx.u_active.transpose() * &ctx.u_active;
    let ut_x: Vec<f64> = (ctx.u_active.transpose() * x).iter().copied().collect();
    let x_sq = x.dot(x);
    let tau: Vec<f64> = ctx.tau_active.iter().copied().collect();
    log_density_from_stats(x.len(), &uu, &ut_x, x_sq, &tau, ctx.sigma2, &mut SpdScratch::new())
}

/// Prior weights for one feature's indicator column given the component
/// indicators: delta mass at zero for inactive components, Bernoulli(q_eta)
/// inside active ones.
fn log_eta_prior(gamma: &[bool], eta_j: &[u8], q_eta: f64) -> Result<f64> {
    let mut s = 0.0;
    for (l, &g) in gamma.iter().enumerate() {
        match (g, eta_j[l]) {
            (false, 0) => {}
            (false, _) => {
                return Err(BipError::InvalidConfig(format!(
                    "eta[{l}] = 1 under gamma[{l}] = 0"
                )))
            }
            (true, 1) => s += q_eta.ln(),
            (true, _) => s += (1.0 - q_eta).ln(),
        }
    }
    Ok(s)
}

/// log G_j = log MVN(x_j; 0, sigma^2 Sigma_j) + sum_l log p(eta_lj | gamma_l).
///
/// `u` holds all r latent columns; `tau_j` the j-th column of tau^2.
pub fn log_gj(
    x: &DVector<f64>,
    gamma: &[bool],
    eta_j: &[u8],
    u: &DMatrix<f64>,
    tau_j: &[f64],
    sigma2: f64,
    q_eta: f64,
) -> Result<f64> {
    let r = gamma.len();
    if eta_j.len() != r || tau_j.len() != r || u.ncols() != r {
        return Err(BipError::DimensionMismatch(
            "gamma/eta/tau/U component counts disagree".into(),
        ));
    }
    let prior = log_eta_prior(gamma, eta_j, q_eta)?;
    let tau_masked: Vec<f64> = (0..r)
        .map(|l| {
            if gamma[l] && eta_j[l] == 1 {
                tau_j[l]
            } else {
                0.0
            }
        })
        .collect();
    let ctx = CollapsedContext {
        u_active: u.clone(),
        tau_active: DVector::from_vec(tau_masked),
        sigma2,
    };
    Ok(log_collapsed_density(x, &ctx)? + prior)
}

/// P_lj = G_j(eta_lj = 1) / (G_j(eta_lj = 1) + G_j(eta_lj = 0)) with
/// component l forced active, evaluated in log space. The complement is
/// `1.0 - p` by contract, so the pair always sums to one exactly.
pub fn feature_inclusion_prob(
    x: &DVector<f64>,
    gamma_with_l_on: &[bool],
    eta_base_j: &[u8],
    l: usize,
    u: &DMatrix<f64>,
    tau_j: &[f64],
    sigma2: f64,
    q_eta: f64,
) -> Result<f64> {
    if !gamma_with_l_on[l] {
        return Err(BipError::InvalidConfig(format!(
            "component {l} must be active in the activation proposal"
        )));
    }
    let mut eta1 = eta_base_j.to_vec();
    eta1[l] = 1;
    let mut eta0 = eta_base_j.to_vec();
    eta0[l] = 0;
    let w1 = log_gj(x, gamma_with_l_on, &eta1, u, tau_j, sigma2, q_eta)?;
    let w0 = log_gj(x, gamma_with_l_on, &eta0, u, tau_j, sigma2, q_eta)?;
    Ok(sigmoid_of_diff(w1, w0))
}

/// 1 / (1 + exp(w0 - w1)) without overflow; never NaN for finite inputs.
pub(crate) fn sigmoid_of_diff(w1: f64, w0: f64) -> f64 {
    let d = w1 - w0;
    if d >= 0.0 {
        1.0 / (1.0 + (-d).exp())
    } else {
        let e = d.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    /// Dense-matrix oracle: explicit n x n covariance plus Cholesky.
    fn dense_mvn_logpdf(x: &DVector<f64>, u: &DMatrix<f64>, tau: &[f64], sigma2: f64) -> f64 {
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

    #[test]
    fn standard_normal_at_zero() {
        let ctx = CollapsedContext {
            u_active: DMatrix::zeros(1, 0),
            tau_active: DVector::zeros(0),
            sigma2: 1.0,
        };
        let x = DVector::from_vec(vec![0.0]);
        let got = log_collapsed_density(&x, &ctx).unwrap();
        assert_relative_eq!(got, -0.5 * LN_2PI, epsilon = 1e-12);
    }

    #[test]
    fn two_sample_rank_one() {
        // Covariance diag(2, 1): log-density at zero is -log(2pi) - log(2)/2.
        let ctx = CollapsedContext {
            u_active: DMatrix::from_column_slice(2, 1, &[1.0, 0.0]),
            tau_active: DVector::from_vec(vec![1.0]),
            sigma2: 1.0,
        };
        let x = DVector::from_vec(vec![0.0, 0.0]);
        let got = log_collapsed_density(&x, &ctx).unwrap();
        let expected = -LN_2PI - 0.5 * 2.0f64.ln();
        assert_relative_eq!(got, expected, epsilon = 1e-12);
        let oracle = dense_mvn_logpdf(&x, &ctx.u_active, &[1.0], 1.0);
        assert_relative_eq!(got, oracle, epsilon = 1e-12);
    }

    #[test]
    fn matches_dense_oracle_randomized() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let n = 6;
            let k = 2;
            let u = DMatrix::from_fn(n, k, |_, _| rng.sample::<f64, _>(StandardNormal));
            let tau: Vec<f64> = (0..k).map(|_| rng.random::<f64>() * 2.0 + 0.05).collect();
            let sigma2 = rng.random::<f64>() * 3.0 + 0.2;
            let x = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal) * 2.0);
            let ctx = CollapsedContext {
                u_active: u.clone(),
                tau_active: DVector::from_vec(tau.clone()),
                sigma2,
            };
            let got = log_collapsed_density(&x, &ctx).unwrap();
            let want = dense_mvn_logpdf(&x, &u, &tau, sigma2);
            assert_relative_eq!(got, want, max_relative = 1e-9, epsilon = 1e-10);
        }
    }

    #[test]
    fn gj_prior_factors() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 4;
        let r = 2;
        let u = DMatrix::from_fn(n, r, |_, _| rng.sample::<f64, _>(StandardNormal));
        let x = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let tau = vec![0.7, 1.3];
        let q_eta = 0.05;

        // All inactive: the indicator product is empty.
        let base = log_gj(&x, &[false, false], &[0, 0], &u, &tau, 1.0, q_eta).unwrap();
        let iso = log_collapsed_density(
            &x,
            &CollapsedContext {
                u_active: DMatrix::zeros(n, 0),
                tau_active: DVector::zeros(0),
                sigma2: 1.0,
            },
        )
        .unwrap();
        assert_relative_eq!(base, iso, epsilon = 1e-12);

        // One active component, feature included: density picks up log(q_eta).
        let g1 = log_gj(&x, &[true, false], &[1, 0], &u, &tau, 1.0, q_eta).unwrap();
        let dens1 = dense_mvn_logpdf(&x, &u.columns(0, 1).into_owned(), &[0.7], 1.0);
        assert_relative_eq!(g1, dens1 + q_eta.ln(), max_relative = 1e-9);

        // Feature excluded: tau row masked to zero, factor log(1 - q_eta).
        let g0 = log_gj(&x, &[true, false], &[0, 0], &u, &tau, 1.0, q_eta).unwrap();
        assert_relative_eq!(g0, iso + (1.0 - q_eta).ln(), epsilon = 1e-10);
    }

    #[test]
    fn gj_rejects_eta_outside_gamma() {
        let u = DMatrix::from_element(3, 1, 0.5);
        let x = DVector::from_vec(vec![0.1, 0.2, 0.3]);
        let err = log_gj(&x, &[false], &[1], &u, &[1.0], 1.0, 0.5).unwrap_err();
        assert!(matches!(err, BipError::InvalidConfig(_)));
    }

    #[test]
    fn inclusion_prob_collapses_to_prior_when_slab_vanishes() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 5;
        let u = DMatrix::from_fn(n, 1, |_, _| rng.sample::<f64, _>(StandardNormal));
        let x = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        // tau -> 0 makes both densities equal; prior odds remain.
        let p = feature_inclusion_prob(&x, &[true], &[0], 0, &u, &[0.0], 1.0, 0.05).unwrap();
        assert_relative_eq!(p, 0.05, epsilon = 1e-12);
        let p_half = feature_inclusion_prob(&x, &[true], &[0], 0, &u, &[0.0], 1.0, 0.5).unwrap();
        assert_eq!(p_half, 0.5);
    }

    #[test]
    fn inclusion_prob_detects_strong_signal() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let n = 20;
        let u = DMatrix::from_fn(n, 1, |_, _| rng.sample::<f64, _>(StandardNormal));
        let x = DVector::from_fn(n, |i, _| 2.0 * u[(i, 0)] + 0.01 * rng.sample::<f64, _>(StandardNormal));
        let p = feature_inclusion_prob(&x, &[true], &[0], 0, &u, &[1.0], 1.0, 0.05).unwrap();
        assert!(p > 0.99, "P = {p}");
    }

    #[test]
    fn complement_is_exact_and_never_nan() {
        // Force one side to underflow completely.
        let p = sigmoid_of_diff(-1e308, 3.0);
        assert_eq!(p, 0.0);
        assert_eq!(p + (1.0 - p), 1.0);
        let q = sigmoid_of_diff(3.0, -1e308);
        assert_eq!(q, 1.0);
        assert!(!q.is_nan());
    }

    /// Dyadic values make sums order-exact so permutation equivariance can
    /// be asserted bitwise.
    fn dyadic() -> impl Strategy<Value = f64> {
        (-128i32..=128).prop_map(|k| k as f64 / 64.0)
    }

    proptest! {
        #[test]
        fn permutation_equivariance(
            xs in prop::collection::vec(dyadic(), 8),
            us in prop::collection::vec(dyadic(), 16),
            perm_seed in 0u64..1024,
        ) {
            let u = DMatrix::from_column_slice(8, 2, &us);
            let x = DVector::from_vec(xs.clone());
            let ctx = CollapsedContext {
                u_active: u.clone(),
                tau_active: DVector::from_vec(vec![0.5, 1.0]),
                sigma2: 1.0,
            };
            let base = log_collapsed_density(&x, &ctx).unwrap();

            let mut order: Vec<usize> = (0..8).collect();
            let mut s = perm_seed;
            for i in (1..8).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1);
                order.swap(i, (s >> 33) as usize % (i + 1));
            }
            let xp = DVector::from_fn(8, |i, _| x[order[i]]);
            let up = DMatrix::from_fn(8, 2, |i, j| u[(order[i], j)]);
            let ctx_p = CollapsedContext { u_active: up, tau_active: ctx.tau_active.clone(), sigma2: 1.0 };
            let permuted = log_collapsed_density(&xp, &ctx_p).unwrap();
            prop_assert_eq!(base, permuted);
        }

        #[test]
        fn determinant_monotone_in_new_tau(
            us in prop::collection::vec(-2.0f64..2.0, 12),
            tau_new in 0.01f64..4.0,
        ) {
            let u = DMatrix::from_column_slice(6, 2, &us);
            let uu = u.transpose() * &u;
            let mut scratch = SpdScratch::new();
            let (d0, _) = capacitance_logdet_quad(&uu, &[0.0, 0.0], 0.0, &[1.0, 0.0], &mut scratch).unwrap();
            let (d1, _) = capacitance_logdet_quad(&uu, &[0.0, 0.0], 0.0, &[1.0, tau_new], &mut scratch).unwrap();
            prop_assert!(d1 >= d0 - 1e-12);
        }
    }
}
