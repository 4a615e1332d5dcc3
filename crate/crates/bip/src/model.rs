//! Domain types shared by the sampler, predictor, and generators:
//! the observed data blocks, hyperparameters, grouping design, and the
//! full per-iteration chain state with its structural invariants.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Beta, Distribution, Gamma, StandardNormal};

use crate::error::{BipError, Result};

/// Observed data: M feature views, the outcome (treated as block 0 with a
/// single column), and an optional covariate block appended last.
#[derive(Debug, Clone)]
pub struct ViewSet {
    views: Vec<DMatrix<f64>>,
    outcome: DVector<f64>,
    covariates: Option<DMatrix<f64>>,
    feature_names: Vec<Vec<String>>,
    covariate_names: Vec<String>,
}

impl ViewSet {
    pub fn new(
        views: Vec<DMatrix<f64>>,
        outcome: DVector<f64>,
        covariates: Option<DMatrix<f64>>,
        feature_names: Vec<Vec<String>>,
        covariate_names: Vec<String>,
    ) -> Result<Self> {
        if views.is_empty() {
            return Err(BipError::DimensionMismatch("no feature views".into()));
        }
        let n = outcome.len();
        if n == 0 {
            return Err(BipError::DimensionMismatch("empty outcome".into()));
        }
        if feature_names.len() != views.len() {
            return Err(BipError::DimensionMismatch(format!(
                "{} name lists for {} views",
                feature_names.len(),
                views.len()
            )));
        }
        for (m, x) in views.iter().enumerate() {
            if x.nrows() != n {
                return Err(BipError::DimensionMismatch(format!(
                    "view {} has {} rows, outcome has {}",
                    m + 1,
                    x.nrows(),
                    n
                )));
            }
            if x.ncols() == 0 {
                return Err(BipError::DimensionMismatch(format!("view {} is empty", m + 1)));
            }
            if feature_names[m].len() != x.ncols() {
                return Err(BipError::DimensionMismatch(format!(
                    "view {} has {} columns but {} feature names",
                    m + 1,
                    x.ncols(),
                    feature_names[m].len()
                )));
            }
        }
        if let Some(c) = &covariates {
            if c.nrows() != n {
                return Err(BipError::DimensionMismatch(format!(
                    "covariate block has {} rows, outcome has {}",
                    c.nrows(),
                    n
                )));
            }
            if c.ncols() == 0 || covariate_names.len() != c.ncols() {
                return Err(BipError::DimensionMismatch(
                    "covariate block shape does not match its names".into(),
                ));
            }
        }
        Ok(ViewSet {
            views,
            outcome,
            covariates,
            feature_names,
            covariate_names,
        })
    }

    /// Convenience constructor with synthesized feature names.
    pub fn from_matrices(
        views: Vec<DMatrix<f64>>,
        outcome: DVector<f64>,
        covariates: Option<DMatrix<f64>>,
    ) -> Result<Self> {
        let names = views
            .iter()
            .map(|x| (1..=x.ncols()).map(|j| format!("v{j}")).collect())
            .collect();
        let cov_names = covariates
            .as_ref()
            .map(|c| (1..=c.ncols()).map(|j| format!("c{j}")).collect())
            .unwrap_or_default();
        ViewSet::new(views, outcome, covariates, names, cov_names)
    }

    pub fn n(&self) -> usize {
        self.outcome.len()
    }

    /// Number of omics views M (outcome and covariates not counted).
    pub fn n_views(&self) -> usize {
        self.views.len()
    }

    pub fn has_covariates(&self) -> bool {
        self.covariates.is_some()
    }

    /// Total number of model blocks: outcome + M views + optional covariates.
    pub fn n_blocks(&self) -> usize {
        1 + self.views.len() + usize::from(self.covariates.is_some())
    }

    /// Columns in block `b` (block 0 is the outcome).
    pub fn block_dim(&self, b: usize) -> usize {
        if b == 0 {
            1
        } else if b <= self.views.len() {
            self.views[b - 1].ncols()
        } else {
            self.covariates.as_ref().map(|c| c.ncols()).unwrap_or(0)
        }
    }

    pub fn view(&self, m: usize) -> &DMatrix<f64> {
        &self.views[m]
    }

    pub fn outcome(&self) -> &DVector<f64> {
        &self.outcome
    }

    pub fn covariates(&self) -> Option<&DMatrix<f64>> {
        self.covariates.as_ref()
    }

    pub fn feature_names(&self, m: usize) -> &[String] {
        &self.feature_names[m]
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    /// Feature matrix of block `b > 0` (views, then covariates).
    pub fn block(&self, b: usize) -> &DMatrix<f64> {
        if b == 0 {
            panic!("block 0 is the outcome vector, not a matrix");
        }
        if b <= self.views.len() {
            &self.views[b - 1]
        } else {
            self.covariates.as_ref().expect("no covariate block")
        }
    }
}

/// Per-feature location/scale captured during standardization, kept so new
/// samples can be mapped into the fitted model's units.
#[derive(Debug, Clone)]
pub struct StandardizationRecord {
    /// Per omics view: (means, sds) of the raw training columns.
    pub view_stats: Vec<(Vec<f64>, Vec<f64>)>,
    /// Covariate block stats, when present.
    pub covariate_stats: Option<(Vec<f64>, Vec<f64>)>,
    /// Training outcome mean subtracted during fitting (0 when not centered).
    pub outcome_mean: f64,
}

impl StandardizationRecord {
    /// Standardize one raw feature vector laid out as the concatenation of
    /// all omics views followed by covariates (outcome excluded).
    pub fn transform_features(&self, x_new: &[f64]) -> Result<Vec<f64>> {
        let expected: usize = self.view_stats.iter().map(|(m, _)| m.len()).sum::<usize>()
            + self.covariate_stats.as_ref().map(|(m, _)| m.len()).unwrap_or(0);
        if x_new.len() != expected {
            return Err(BipError::DimensionMismatch(format!(
                "new sample has {} features, model expects {}",
                x_new.len(),
                expected
            )));
        }
        let mut out = Vec::with_capacity(x_new.len());
        let mut offset = 0;
        for (means, sds) in self
            .view_stats
            .iter()
            .chain(self.covariate_stats.iter())
        {
            for j in 0..means.len() {
                out.push((x_new[offset + j] - means[j]) / sds[j]);
            }
            offset += means.len();
        }
        Ok(out)
    }
}

fn column_mean_sd(col: &[f64]) -> (f64, f64) {
    let n = col.len() as f64;
    let mean = col.iter().sum::<f64>() / n;
    let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

const ZERO_VAR_TOL: f64 = 1e-12;

fn standardize_matrix(
    x: &DMatrix<f64>,
    names: &[String],
    label: &str,
) -> Result<(DMatrix<f64>, Vec<f64>, Vec<f64>)> {
    let mut out = x.clone();
    let mut means = Vec::with_capacity(x.ncols());
    let mut sds = Vec::with_capacity(x.ncols());
    for j in 0..x.ncols() {
        let col: Vec<f64> = x.column(j).iter().copied().collect();
        let (mean, sd) = column_mean_sd(&col);
        if !sd.is_finite() || sd < ZERO_VAR_TOL {
            return Err(BipError::ZeroVariance {
                view: label.to_string(),
                feature: names[j].clone(),
            });
        }
        for i in 0..x.nrows() {
            out[(i, j)] = (x[(i, j)] - mean) / sd;
        }
        means.push(mean);
        sds.push(sd);
    }
    Ok((out, means, sds))
}

fn check_finite_matrix(x: &DMatrix<f64>, label: &str) -> Result<()> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(BipError::NonFinite(label.to_string()));
    }
    Ok(())
}

/// Column-standardize every omics view (and the covariate block), center the
/// outcome when requested, and record the transforms for later prediction.
pub fn validate_and_standardize(
    raw: &ViewSet,
    center_outcome: bool,
) -> Result<(ViewSet, StandardizationRecord)> {
    let n = raw.n();
    if n < 3 {
        return Err(BipError::DimensionMismatch(format!(
            "need at least 3 samples, got {n}"
        )));
    }
    if raw.outcome.iter().any(|v| !v.is_finite()) {
        return Err(BipError::NonFinite("outcome".into()));
    }

    let mut views = Vec::with_capacity(raw.views.len());
    let mut view_stats = Vec::with_capacity(raw.views.len());
    for (m, x) in raw.views.iter().enumerate() {
        let label = format!("view {}", m + 1);
        check_finite_matrix(x, &label)?;
        let (std_x, means, sds) = standardize_matrix(x, &raw.feature_names[m], &label)?;
        views.push(std_x);
        view_stats.push((means, sds));
    }

    let covariates = match &raw.covariates {
        Some(c) => {
            check_finite_matrix(c, "covariates")?;
            Some(standardize_matrix(c, &raw.covariate_names, "covariates")?)
        }
        None => None,
    };
    let (cov_matrix, covariate_stats) = match covariates {
        Some((m, means, sds)) => (Some(m), Some((means, sds))),
        None => (None, None),
    };

    let outcome_mean = if center_outcome {
        raw.outcome.iter().sum::<f64>() / n as f64
    } else {
        0.0
    };
    let outcome = raw.outcome.map(|y| y - outcome_mean);

    let standardized = ViewSet {
        views,
        outcome,
        covariates: cov_matrix,
        feature_names: raw.feature_names.clone(),
        covariate_names: raw.covariate_names.clone(),
    };
    Ok((
        standardized,
        StandardizationRecord {
            view_stats,
            covariate_stats,
            outcome_mean,
        },
    ))
}

/// Fixed constants of the prior and the MCMC schedule.
#[derive(Debug, Clone)]
pub struct Hyperparameters {
    /// Maximum number of active components.
    pub r: usize,
    /// Prior probability that a feature loads on an active component.
    pub q_eta: f64,
    /// Beta hyperparameters shared by the component- and group-inclusion
    /// probabilities q^(m) and q_r.
    pub a: f64,
    pub b: f64,
    /// Inverse-gamma shape/rate of the residual variances.
    pub a0: f64,
    pub b0: f64,
    /// Gamma shape of the lambda^2 shrinkage parameters.
    pub alpha: f64,
    /// Gamma hyperparameters of the group effects b_lk.
    pub alpha_b: f64,
    pub beta_b: f64,
    /// Gamma shape of the per-component shrinkage intercepts b_l0
    /// (their rate is `beta_b`).
    pub alpha0_shape: f64,
    pub n_iter: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    pub n_chains: usize,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Hyperparameters {
            r: 4,
            q_eta: 0.05,
            a: 1.0,
            b: 1.0,
            a0: 0.01,
            b0: 0.01,
            alpha: 1.0,
            alpha_b: 1.0,
            beta_b: 1.0,
            alpha0_shape: 1.0,
            n_iter: 5000,
            burn_in: 2500,
            thin: 1,
            seed: 1,
            n_chains: 1,
        }
    }
}

impl Hyperparameters {
    pub fn validate(&self) -> Result<()> {
        let positives = [
            ("a", self.a),
            ("b", self.b),
            ("a0", self.a0),
            ("b0", self.b0),
            ("alpha", self.alpha),
            ("alpha_b", self.alpha_b),
            ("beta_b", self.beta_b),
            ("alpha0_shape", self.alpha0_shape),
        ];
        for (name, v) in positives {
            if !(v.is_finite() && v > 0.0) {
                return Err(BipError::InvalidHyperparameters(format!(
                    "{name} must be strictly positive, got {v}"
                )));
            }
        }
        if !(self.q_eta > 0.0 && self.q_eta < 1.0) {
            return Err(BipError::InvalidHyperparameters(format!(
                "q_eta must lie in (0,1), got {}",
                self.q_eta
            )));
        }
        if self.r == 0 {
            return Err(BipError::InvalidHyperparameters("r must be >= 1".into()));
        }
        if self.n_iter == 0 || self.burn_in >= self.n_iter {
            return Err(BipError::InvalidHyperparameters(format!(
                "need burn_in < n_iter, got {} >= {}",
                self.burn_in, self.n_iter
            )));
        }
        if self.thin == 0 {
            return Err(BipError::InvalidHyperparameters("thin must be >= 1".into()));
        }
        if self.n_chains == 0 {
            return Err(BipError::InvalidHyperparameters(
                "n_chains must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Group membership design for one view: a binary features-by-groups matrix.
/// Rows may belong to zero, one, or several groups.
#[derive(Debug, Clone)]
pub struct GroupSpec {
    pub membership: DMatrix<u8>,
    pub group_names: Vec<String>,
}

impl GroupSpec {
    pub fn new(membership: DMatrix<u8>, group_names: Vec<String>) -> Result<Self> {
        if membership.ncols() == 0 {
            return Err(BipError::DimensionMismatch(
                "group design needs at least one group".into(),
            ));
        }
        if group_names.len() != membership.ncols() {
            return Err(BipError::DimensionMismatch(format!(
                "{} group names for {} groups",
                group_names.len(),
                membership.ncols()
            )));
        }
        if membership.iter().any(|&v| v > 1) {
            return Err(BipError::InvalidConfig(
                "group membership entries must be 0 or 1".into(),
            ));
        }
        Ok(GroupSpec {
            membership,
            group_names,
        })
    }

    pub fn n_groups(&self) -> usize {
        self.membership.ncols()
    }
}

/// Per-view grouping designs. All-absent means the BIP model (no group
/// layer); any present design activates the BIPnet prior for that view.
#[derive(Debug, Clone, Default)]
pub struct GroupDesign {
    pub per_view: Vec<Option<GroupSpec>>,
}

impl GroupDesign {
    /// A design with no grouping information for any of the `m` views.
    pub fn none(m: usize) -> Self {
        GroupDesign {
            per_view: (0..m).map(|_| None).collect(),
        }
    }

    pub fn present(&self) -> bool {
        self.per_view.iter().any(|g| g.is_some())
    }

    pub fn check_against(&self, data: &ViewSet) -> Result<()> {
        if self.per_view.len() != data.n_views() {
            return Err(BipError::DimensionMismatch(format!(
                "group design covers {} views, data has {}",
                self.per_view.len(),
                data.n_views()
            )));
        }
        for (m, g) in self.per_view.iter().enumerate() {
            if let Some(g) = g {
                if g.membership.nrows() != data.view(m).ncols() {
                    return Err(BipError::DimensionMismatch(format!(
                        "group design for view {} has {} feature rows, view has {} features",
                        m + 1,
                        g.membership.nrows(),
                        data.view(m).ncols()
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Group-prior state for one view: effect sizes, their inclusion
/// indicators, and the group-inclusion probability.
#[derive(Debug, Clone)]
pub struct GroupState {
    /// r x K nonnegative effects; exactly zero where `r_ind` is zero.
    pub b: DMatrix<f64>,
    /// r x K binary group-inclusion indicators.
    pub r_ind: DMatrix<u8>,
    pub q_r: f64,
}

/// Sampled quantities tied to one data block (outcome, view, or covariates).
#[derive(Debug, Clone)]
pub struct BlockState {
    /// r x p loadings; exactly zero wherever `eta` is zero.
    pub a: DMatrix<f64>,
    /// Component-level inclusion indicators.
    pub gamma: Vec<bool>,
    /// r x p feature-level inclusion indicators, nested inside `gamma`.
    pub eta: DMatrix<u8>,
    /// Per-feature residual variances.
    pub sigma2: DVector<f64>,
    /// r x p slab scale parameters.
    pub tau2: DMatrix<f64>,
    /// r x p shrinkage rates.
    pub lambda2: DMatrix<f64>,
    /// Component-inclusion probability q^(m); fixed at 1 for covariates.
    pub q: f64,
    /// Per-component baseline shrinkage intercepts b_l0.
    pub b0: DVector<f64>,
    /// Group layer, present only for grouped omics views.
    pub group: Option<GroupState>,
}

impl BlockState {
    pub fn p(&self) -> usize {
        self.a.ncols()
    }
}

/// Everything sampled at one MCMC iteration.
#[derive(Debug, Clone)]
pub struct ChainState {
    /// n x r latent factors.
    pub u: DMatrix<f64>,
    /// Block states in model order: outcome, views 1..M, covariates last.
    pub blocks: Vec<BlockState>,
    /// Outcome intercept.
    pub alpha0: f64,
    /// Number of omics views M.
    pub n_views: usize,
    pub has_covariates: bool,
}

impl ChainState {
    pub fn r(&self) -> usize {
        self.u.ncols()
    }

    pub fn n(&self) -> usize {
        self.u.nrows()
    }

    /// Block index of the covariates, if present.
    pub fn covariate_block(&self) -> Option<usize> {
        self.has_covariates.then_some(self.n_views + 1)
    }

    /// Structural sparsity, forced inclusion, and positivity checks.
    /// Run after initialization and after every sweep in debug builds.
    pub fn check_invariants(&self) -> Result<()> {
        let r = self.r();
        for (idx, blk) in self.blocks.iter().enumerate() {
            let p = blk.p();
            let is_outcome = idx == 0;
            let is_cov = Some(idx) == self.covariate_block();
            for l in 0..r {
                if is_cov && !blk.gamma[l] {
                    return Err(BipError::InvalidConfig(format!(
                        "covariate block has gamma[{l}] = 0"
                    )));
                }
                for j in 0..p {
                    let eta = blk.eta[(l, j)];
                    if eta > 1 {
                        return Err(BipError::InvalidConfig("eta entry outside {0,1}".into()));
                    }
                    if !blk.gamma[l] && eta == 1 {
                        return Err(BipError::InvalidConfig(format!(
                            "block {idx}: eta[{l},{j}] = 1 under gamma[{l}] = 0"
                        )));
                    }
                    if (is_outcome || is_cov) && blk.gamma[l] && eta == 0 {
                        return Err(BipError::InvalidConfig(format!(
                            "block {idx}: eta[{l},{j}] must track gamma (forced inclusion)"
                        )));
                    }
                    if eta == 0 && blk.a[(l, j)] != 0.0 {
                        return Err(BipError::InvalidConfig(format!(
                            "block {idx}: nonzero loading at inactive eta[{l},{j}]"
                        )));
                    }
                    if !(blk.tau2[(l, j)] > 0.0 && blk.tau2[(l, j)].is_finite()) {
                        return Err(BipError::NonFinite(format!("tau2[{l},{j}] block {idx}")));
                    }
                    if !(blk.lambda2[(l, j)] > 0.0 && blk.lambda2[(l, j)].is_finite()) {
                        return Err(BipError::NonFinite(format!("lambda2[{l},{j}] block {idx}")));
                    }
                    if !blk.a[(l, j)].is_finite() {
                        return Err(BipError::NonFinite(format!("loading[{l},{j}] block {idx}")));
                    }
                }
                if !(blk.b0[l] > 0.0 && blk.b0[l].is_finite()) {
                    return Err(BipError::NonFinite(format!("b0[{l}] block {idx}")));
                }
            }
            for j in 0..p {
                if !(blk.sigma2[j] > 0.0 && blk.sigma2[j].is_finite()) {
                    return Err(BipError::NonFinite(format!("sigma2[{j}] block {idx}")));
                }
            }
            if !(0.0..=1.0).contains(&blk.q) {
                return Err(BipError::InvalidConfig(format!("q out of [0,1] in block {idx}")));
            }
            if let Some(g) = &blk.group {
                for l in 0..r {
                    for k in 0..g.b.ncols() {
                        let on = g.r_ind[(l, k)] == 1;
                        let b = g.b[(l, k)];
                        if on && !(b > 0.0 && b.is_finite()) {
                            return Err(BipError::InvalidConfig(format!(
                                "group effect b[{l},{k}] must be positive when selected"
                            )));
                        }
                        if !on && b != 0.0 {
                            return Err(BipError::InvalidConfig(format!(
                                "group effect b[{l},{k}] must be zero when deselected"
                            )));
                        }
                    }
                }
                if !(0.0..=1.0).contains(&g.q_r) {
                    return Err(BipError::InvalidConfig("q_r out of [0,1]".into()));
                }
            }
        }
        if self.u.iter().any(|v| !v.is_finite()) || !self.alpha0.is_finite() {
            return Err(BipError::NonFinite("latent factors or intercept".into()));
        }
        Ok(())
    }
}

/// One retained indicator configuration: which components and features were
/// active in every block at a retained sweep. Hashable so identical
/// configurations can be pooled for model averaging.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct IndicatorConfig {
    /// Per block: component indicators, length r.
    pub gamma: Vec<Vec<bool>>,
    /// Per block: feature indicators, r x p flattened column-major.
    pub eta: Vec<Vec<u8>>,
    /// Per block: group indicators (r x K column-major) for grouped views.
    pub r_ind: Vec<Option<Vec<u8>>>,
}

impl IndicatorConfig {
    pub fn from_state(state: &ChainState) -> Self {
        IndicatorConfig {
            gamma: state.blocks.iter().map(|b| b.gamma.clone()).collect(),
            eta: state
                .blocks
                .iter()
                .map(|b| b.eta.as_slice().to_vec())
                .collect(),
            r_ind: state
                .blocks
                .iter()
                .map(|b| b.group.as_ref().map(|g| g.r_ind.as_slice().to_vec()))
                .collect(),
        }
    }

    pub fn eta_at(&self, block: usize, r: usize, l: usize, j: usize) -> bool {
        self.eta[block][j * r + l] == 1
    }
}

/// Post-burn-in draws kept for Bayesian model averaging, pooled by
/// configuration with visit counts.
#[derive(Debug, Clone, Default)]
pub struct RetainedDraws {
    pub configs: Vec<(IndicatorConfig, usize)>,
    pub n_retained: usize,
}

/// Posterior summaries of one fit: marginal posterior probabilities of the
/// indicator layers, averaged latent factors and residual variances, the
/// posterior-mode loadings, and the retained draws behind them.
#[derive(Debug, Clone)]
pub struct PosteriorSummary {
    /// Per block: length-r component MPPs.
    pub mpp_gamma: Vec<Vec<f64>>,
    /// Per block: r x p feature MPPs.
    pub mpp_eta: Vec<DMatrix<f64>>,
    /// Per omics view: r x K group MPPs when the view is grouped.
    pub mpp_group: Vec<Option<DMatrix<f64>>>,
    /// n x r posterior mean of the latent factors.
    pub u_bar: DMatrix<f64>,
    /// Per block: posterior-mean residual variances.
    pub sigma2_bar: Vec<DVector<f64>>,
    /// Per block: posterior-mode loadings under the MPP > 0.5 masks.
    pub a_mode: Vec<DMatrix<f64>>,
    /// Posterior mean of the outcome intercept.
    pub alpha0_hat: f64,
    pub retained: RetainedDraws,
}

/// Group effect total for feature `j` of a block: sum over selected groups
/// containing `j` of their effects, i.e. the P_j^T b_l term of the
/// shrinkage rate. Zero for ungrouped blocks.
pub(crate) fn group_rate_term(blk: &BlockState, groups: Option<&GroupSpec>, l: usize, j: usize) -> f64 {
    match (&blk.group, groups) {
        (Some(gs), Some(design)) => {
            let mut s = 0.0;
            for k in 0..design.membership.ncols() {
                if design.membership[(j, k)] == 1 && gs.r_ind[(l, k)] == 1 {
                    s += gs.b[(l, k)];
                }
            }
            s
        }
        _ => 0.0,
    }
}

/// Draw the initial chain state: slab scales start at 1, shrinkage
/// intercepts at 0.1, everything else from its prior.
pub fn init_chain<R: Rng>(
    hp: &Hyperparameters,
    data: &ViewSet,
    groups: &GroupDesign,
    rng: &mut R,
) -> Result<ChainState> {
    hp.validate()?;
    groups.check_against(data)?;
    let n = data.n();
    let r = hp.r;
    let n_blocks = data.n_blocks();

    let beta_q = Beta::new(hp.a, hp.b).expect("validated hyperparameters");
    let gamma_slab = Gamma::new(hp.alpha_b, 1.0 / hp.beta_b).expect("validated hyperparameters");

    let mut blocks = Vec::with_capacity(n_blocks);
    for idx in 0..n_blocks {
        let p = data.block_dim(idx);
        let is_outcome = idx == 0;
        let is_cov = data.has_covariates() && idx == n_blocks - 1;
        let view_groups = if !is_outcome && !is_cov {
            groups.per_view[idx - 1].as_ref()
        } else {
            None
        };

        let q = if is_cov { 1.0 } else { beta_q.sample(rng) };
        let gamma: Vec<bool> = (0..r)
            .map(|_| is_cov || rng.random::<f64>() < q)
            .collect();

        let mut eta = DMatrix::<u8>::zeros(r, p);
        for l in 0..r {
            if !gamma[l] {
                continue;
            }
            for j in 0..p {
                let on = if is_outcome || is_cov {
                    true
                } else {
                    rng.random::<f64>() < hp.q_eta
                };
                eta[(l, j)] = u8::from(on);
            }
        }

        let group = view_groups.map(|spec| {
            let k = spec.n_groups();
            let q_r = beta_q.sample(rng);
            let mut r_ind = DMatrix::<u8>::zeros(r, k);
            let mut b = DMatrix::<f64>::zeros(r, k);
            for l in 0..r {
                for g in 0..k {
                    if rng.random::<f64>() < q_r {
                        r_ind[(l, g)] = 1;
                        b[(l, g)] = gamma_slab.sample(rng);
                    }
                }
            }
            GroupState { b, r_ind, q_r }
        });

        let b0 = DVector::from_element(r, 0.1);
        let tau2 = DMatrix::from_element(r, p, 1.0);

        let mut lambda2 = DMatrix::<f64>::zeros(r, p);
        {
            // Temporary block to query group effects before the state exists.
            let probe = BlockState {
                a: DMatrix::zeros(r, p),
                gamma: gamma.clone(),
                eta: eta.clone(),
                sigma2: DVector::zeros(p),
                tau2: tau2.clone(),
                lambda2: DMatrix::zeros(r, p),
                q,
                b0: b0.clone(),
                group: group.clone(),
            };
            for l in 0..r {
                for j in 0..p {
                    let rate = if eta[(l, j)] == 1 {
                        b0[l] + group_rate_term(&probe, view_groups, l, j)
                    } else {
                        b0[l]
                    };
                    lambda2[(l, j)] = Gamma::new(hp.alpha, 1.0 / rate)
                        .expect("positive rate")
                        .sample(rng)
                        .max(1e-300);
                }
            }
        }

        // Residual variances from the (very diffuse) inverse-gamma prior,
        // clamped so a tail draw cannot start the chain at a non-finite
        // state. One sweep of the sigma^2 conditional restores scale.
        let ig_gamma = Gamma::new(hp.a0, 1.0 / hp.b0).expect("validated hyperparameters");
        let sigma2 = DVector::from_iterator(
            p,
            (0..p).map(|_| (1.0 / ig_gamma.sample(rng)).clamp(1e-6, 1e6)),
        );

        let mut a = DMatrix::<f64>::zeros(r, p);
        for l in 0..r {
            for j in 0..p {
                if eta[(l, j)] == 1 {
                    let sd = (tau2[(l, j)] * sigma2[j]).sqrt();
                    let z: f64 = rng.sample(StandardNormal);
                    a[(l, j)] = sd * z;
                }
            }
        }

        blocks.push(BlockState {
            a,
            gamma,
            eta,
            sigma2,
            tau2,
            lambda2,
            q,
            b0,
            group,
        });
    }

    let u = DMatrix::from_fn(n, r, |_, _| rng.sample(StandardNormal));
    let state = ChainState {
        u,
        blocks,
        alpha0: 0.0,
        n_views: data.n_views(),
        has_covariates: data.has_covariates(),
    };
    state.check_invariants()?;
    Ok(state)
}
