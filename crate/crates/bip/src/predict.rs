//! Posterior summarization and out-of-sample prediction by Bayesian model
//! averaging: each retained indicator configuration contributes a plug-in
//! prediction built from the posterior-mode loadings restricted to that
//! configuration, weighted by its visit frequency.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};

use crate::error::{BipError, Result};
use crate::linalg::{cholesky_in_place, solve_spd};
use crate::model::{
    Hyperparameters, IndicatorConfig, PosteriorSummary, RetainedDraws, StandardizationRecord,
    ViewSet,
};

/// Which posterior-mode loading formula to use. The prediction-section
/// form carries a leading sigma_j^2 factor; the conditional-mean form does
/// not. Both are kept so runs can compare them directly. The conditional
/// mean is the default: the scaled form multiplies the outcome coefficient
/// by the outcome's residual variance and overshoots held-out predictions
/// badly whenever that variance is away from one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PosteriorModeVariant {
    ScaledBySigma2,
    #[default]
    ConditionalMean,
}

/// A fitted model: posterior summary, standardization record, and the
/// sufficient statistics (U-bar products against the training columns)
/// needed to rebuild loadings for any retained configuration.
#[derive(Debug, Clone)]
pub struct FittedModel {
    pub summary: PosteriorSummary,
    pub standardization: StandardizationRecord,
    pub hp: Hyperparameters,
    pub variant: PosteriorModeVariant,
    /// U_bar' U_bar.
    pub utu: DMatrix<f64>,
    /// Per block: U_bar' X (block 0 pairs U_bar with the centered outcome
    /// minus the intercept estimate).
    pub ut_x: Vec<DMatrix<f64>>,
    pub dims: Vec<usize>,
    pub n_views: usize,
    pub has_covariates: bool,
}

impl FittedModel {
    /// Build the model from a pooled summary and the standardized training
    /// data, filling in the summary's posterior-mode loadings.
    pub fn assemble(
        data: &ViewSet,
        standardization: StandardizationRecord,
        hp: Hyperparameters,
        summary: PosteriorSummary,
    ) -> Result<Self> {
        if summary.retained.n_retained == 0 {
            return Err(BipError::DimensionMismatch(
                "no retained draws to summarize".into(),
            ));
        }
        let utu = summary.u_bar.transpose() * &summary.u_bar;
        let n_blocks = data.n_blocks();
        let mut ut_x = Vec::with_capacity(n_blocks);
        let mut dims = Vec::with_capacity(n_blocks);
        for b in 0..n_blocks {
            dims.push(data.block_dim(b));
            if b == 0 {
                let y_eff = data.outcome().map(|y| y - summary.alpha0_hat);
                let ut_y = summary.u_bar.transpose() * y_eff;
                ut_x.push(DMatrix::from_column_slice(ut_y.len(), 1, ut_y.as_slice()));
            } else {
                ut_x.push(summary.u_bar.transpose() * data.block(b));
            }
        }
        let mut model = FittedModel {
            summary,
            standardization,
            hp,
            variant: PosteriorModeVariant::default(),
            utu,
            ut_x,
            dims,
            n_views: data.n_views(),
            has_covariates: data.has_covariates(),
        };
        model.refresh_mode_loadings();
        Ok(model)
    }

    pub fn with_variant(mut self, variant: PosteriorModeVariant) -> Self {
        self.variant = variant;
        self.refresh_mode_loadings();
        self
    }

    fn refresh_mode_loadings(&mut self) {
        self.summary.a_mode = (0..self.dims.len())
            .map(|b| self.mode_loadings_masked(b, &self.summary_mask(b), self.variant))
            .collect();
    }

    fn r(&self) -> usize {
        self.hp.r
    }

    /// Summary-level activity mask: MPP > 0.5 on both indicator layers.
    fn summary_mask(&self, block: usize) -> DMatrix<u8> {
        let r = self.r();
        let p = self.dims[block];
        let cov_block = self.has_covariates.then_some(self.n_views + 1);
        DMatrix::from_fn(r, p, |l, j| {
            if Some(block) == cov_block {
                return 1;
            }
            let gamma_on = self.summary.mpp_gamma[block][l] > 0.5;
            if block == 0 {
                return u8::from(gamma_on);
            }
            u8::from(gamma_on && self.summary.mpp_eta[block][(l, j)] > 0.5)
        })
    }

    fn config_mask(&self, config: &IndicatorConfig, block: usize) -> DMatrix<u8> {
        let r = self.r();
        let p = self.dims[block];
        DMatrix::from_fn(r, p, |l, j| {
            u8::from(config.gamma[block][l] && config.eta_at(block, r, l, j))
        })
    }

    /// a_hat_j = [sigma_hat_j^2] (U'U + I)^-1 U'x_j over the entries the
    /// mask keeps, solving on the per-feature active set.
    fn mode_loadings_masked(
        &self,
        block: usize,
        mask: &DMatrix<u8>,
        variant: PosteriorModeVariant,
    ) -> DMatrix<f64> {
        let r = self.r();
        let p = self.dims[block];
        let mut out = DMatrix::zeros(r, p);
        let mut mat = vec![0.0; r * r];
        let mut rhs = vec![0.0; r];
        let mut act = Vec::with_capacity(r);
        for j in 0..p {
            act.clear();
            for l in 0..r {
                if mask[(l, j)] == 1 {
                    act.push(l);
                }
            }
            let k = act.len();
            if k == 0 {
                continue;
            }
            for a in 0..k {
                for c in 0..k {
                    mat[a * k + c] = self.utu[(act[a], act[c])];
                }
                mat[a * k + a] += 1.0;
                rhs[a] = self.ut_x[block][(act[a], j)];
            }
            if !cholesky_in_place(&mut mat, k) {
                continue;
            }
            solve_spd(&mat, k, &mut rhs[..k]);
            let scale = match variant {
                PosteriorModeVariant::ScaledBySigma2 => self.summary.sigma2_bar[block][j],
                PosteriorModeVariant::ConditionalMean => 1.0,
            };
            for a in 0..k {
                out[(act[a], j)] = scale * rhs[a];
            }
        }
        out
    }

    /// Posterior-mode loadings for one block under the summary-level mask.
    pub fn posterior_mode_loadings(&self, block: usize) -> DMatrix<f64> {
        self.mode_loadings_masked(block, &self.summary_mask(block), self.variant)
    }

    /// Latent position of a new sample from its standardized feature vector
    /// (views then covariates, outcome excluded), using the summary-level
    /// loadings.
    pub fn estimate_latent_new(&self, x_std: &[f64]) -> Result<DVector<f64>> {
        let loadings: Vec<DMatrix<f64>> = (1..self.dims.len())
            .map(|b| self.mode_loadings_masked(b, &self.summary_mask(b), self.variant))
            .collect();
        self.latent_from_loadings(&loadings, x_std)
    }

    /// Solve (A D A' + I) u = A D x over the feature blocks, D = sigma^-2.
    fn latent_from_loadings(
        &self,
        loadings: &[DMatrix<f64>],
        x_std: &[f64],
    ) -> Result<DVector<f64>> {
        let r = self.r();
        let expected: usize = self.dims[1..].iter().sum();
        if x_std.len() != expected {
            return Err(BipError::DimensionMismatch(format!(
                "new sample has {} standardized features, model expects {expected}",
                x_std.len()
            )));
        }
        let mut prec = vec![0.0; r * r];
        for l in 0..r {
            prec[l * r + l] = 1.0;
        }
        let mut rhs = vec![0.0; r];
        let mut offset = 0;
        for (bi, a) in loadings.iter().enumerate() {
            let block = bi + 1;
            let p = self.dims[block];
            for j in 0..p {
                let w = 1.0 / self.summary.sigma2_bar[block][j];
                let x = x_std[offset + j];
                for l in 0..r {
                    let alj = a[(l, j)];
                    if alj == 0.0 {
                        continue;
                    }
                    rhs[l] += w * alj * x;
                    for l2 in 0..r {
                        prec[l * r + l2] += w * alj * a[(l2, j)];
                    }
                }
            }
            offset += p;
        }
        if !cholesky_in_place(&mut prec, r) {
            return Err(BipError::numerical("latent projection not positive definite"));
        }
        solve_spd(&prec, r, &mut rhs);
        Ok(DVector::from_vec(rhs))
    }

    /// Model-averaged outcome prediction on the original scale, from raw
    /// (unstandardized) features laid out as views then covariates.
    pub fn bma_predict(&self, x_new_raw: &[f64]) -> Result<f64> {
        let row = vec![x_new_raw.to_vec()];
        Ok(self.bma_predict_batch(&row)?[0])
    }

    /// Batch prediction: per-configuration loadings are built once and
    /// reused across samples.
    pub fn bma_predict_batch(&self, rows: &[Vec<f64>]) -> Result<Vec<f64>> {
        let total = self.summary.retained.n_retained as f64;
        // Pool retained configurations over their (gamma, eta) part; the
        // group indicators do not enter prediction.
        type Key<'a> = (&'a [Vec<bool>], &'a [Vec<u8>]);
        let mut weights: HashMap<Key, f64> = HashMap::new();
        let mut order: Vec<&IndicatorConfig> = Vec::new();
        for (cfg, count) in &self.summary.retained.configs {
            let key: Key = (cfg.gamma.as_slice(), cfg.eta.as_slice());
            if !weights.contains_key(&key) {
                order.push(cfg);
            }
            *weights.entry(key).or_insert(0.0) += *count as f64 / total;
        }

        let standardized: Vec<Vec<f64>> = rows
            .iter()
            .map(|row| self.standardization.transform_features(row))
            .collect::<Result<Vec<_>>>()?;
        let r = self.r();
        let p_total: usize = self.dims[1..].iter().sum();
        // Samples as columns for one matrix product per configuration.
        let x_std = DMatrix::from_fn(p_total, rows.len(), |j, i| standardized[i][j]);

        let mut preds = vec![0.0; rows.len()];
        for cfg in order {
            let w = weights[&(cfg.gamma.as_slice(), cfg.eta.as_slice())];
            // Stacked feature loadings over views and covariates, columns
            // weighted by the inverse residual variances.
            let mut a_cfg = DMatrix::<f64>::zeros(r, p_total);
            let mut a_weighted = DMatrix::<f64>::zeros(r, p_total);
            let mut offset = 0;
            for b in 1..self.dims.len() {
                let block = self.mode_loadings_masked(b, &self.config_mask(cfg, b), self.variant);
                for j in 0..self.dims[b] {
                    let inv = 1.0 / self.summary.sigma2_bar[b][j];
                    for l in 0..r {
                        a_cfg[(l, offset + j)] = block[(l, j)];
                        a_weighted[(l, offset + j)] = block[(l, j)] * inv;
                    }
                }
                offset += self.dims[b];
            }
            let mut prec = &a_weighted * a_cfg.transpose();
            for l in 0..r {
                prec[(l, l)] += 1.0;
            }
            let chol = prec
                .cholesky()
                .ok_or_else(|| BipError::numerical("latent projection not positive definite"))?;
            let rhs = &a_weighted * &x_std;
            let u_new = chol.solve(&rhs);
            let outcome_loading =
                self.mode_loadings_masked(0, &self.config_mask(cfg, 0), self.variant);
            for (i, pred) in preds.iter_mut().enumerate() {
                let mut y = 0.0;
                for l in 0..r {
                    y += u_new[(l, i)] * outcome_loading[(l, 0)];
                }
                *pred += w * y;
            }
        }
        let shift = self.summary.alpha0_hat + self.standardization.outcome_mean;
        for p in preds.iter_mut() {
            *p += shift;
        }
        Ok(preds)
    }
}

/// Recount marginal posterior probabilities from the retained draw log.
/// Returns (component MPPs, flattened feature MPPs, group MPPs) per block.
pub fn compute_mpp(
    draws: &RetainedDraws,
) -> (Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<Option<Vec<f64>>>) {
    let total = draws.n_retained as f64;
    let first = &draws.configs[0].0;
    let n_blocks = first.gamma.len();
    let mut gamma = vec![Vec::new(); n_blocks];
    let mut eta = vec![Vec::new(); n_blocks];
    let mut group: Vec<Option<Vec<f64>>> = vec![None; n_blocks];
    for b in 0..n_blocks {
        gamma[b] = vec![0.0; first.gamma[b].len()];
        eta[b] = vec![0.0; first.eta[b].len()];
        group[b] = first.r_ind[b].as_ref().map(|r| vec![0.0; r.len()]);
    }
    for (cfg, count) in &draws.configs {
        let w = *count as f64;
        for b in 0..n_blocks {
            for (dst, &on) in gamma[b].iter_mut().zip(&cfg.gamma[b]) {
                if on {
                    *dst += w;
                }
            }
            for (dst, &on) in eta[b].iter_mut().zip(&cfg.eta[b]) {
                *dst += w * f64::from(on);
            }
            if let (Some(dst), Some(src)) = (group[b].as_mut(), cfg.r_ind[b].as_ref()) {
                for (d, &on) in dst.iter_mut().zip(src) {
                    *d += w * f64::from(on);
                }
            }
        }
    }
    for b in 0..n_blocks {
        for v in gamma[b].iter_mut() {
            *v /= total;
        }
        for v in eta[b].iter_mut() {
            *v /= total;
        }
        if let Some(g) = group[b].as_mut() {
            for v in g.iter_mut() {
                *v /= total;
            }
        }
    }
    (gamma, eta, group)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(gammas: Vec<Vec<bool>>, etas: Vec<Vec<u8>>) -> IndicatorConfig {
        let blocks = gammas.len();
        IndicatorConfig {
            gamma: gammas,
            eta: etas,
            r_ind: vec![None; blocks],
        }
    }

    #[test]
    fn mpp_recount_simple() {
        let on = config(vec![vec![true]], vec![vec![1]]);
        let off = config(vec![vec![false]], vec![vec![0]]);
        let draws = RetainedDraws {
            configs: vec![(on, 3), (off, 1)],
            n_retained: 4,
        };
        let (gamma, eta, group) = compute_mpp(&draws);
        assert_eq!(gamma[0][0], 0.75);
        assert_eq!(eta[0][0], 0.75);
        assert!(group[0].is_none());
    }

    #[test]
    fn mpp_all_on() {
        let on = config(vec![vec![true, true]], vec![vec![1, 1]]);
        let draws = RetainedDraws {
            configs: vec![(on, 5)],
            n_retained: 5,
        };
        let (gamma, ..) = compute_mpp(&draws);
        assert_eq!(gamma[0], vec![1.0, 1.0]);
    }
}
