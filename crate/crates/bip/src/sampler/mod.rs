//! Chain orchestration: one full sweep per iteration over all conditional
//! updates, in the partially collapsed order that keeps the scheme valid:
//! indicators (loadings marginalized), then residual variances (still
//! marginalized), then loadings, slab scales, shrinkage rates, the group
//! layer, shrinkage intercepts, inclusion probabilities, latent factors,
//! and the outcome intercept.

pub mod dist;
pub mod steps;

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::Result;
use crate::model::{
    init_chain, validate_and_standardize, ChainState, GroupDesign, Hyperparameters,
    IndicatorConfig, PosteriorSummary, RetainedDraws, ViewSet,
};
use crate::predict::FittedModel;
use crate::rng::RngTree;
use steps::Workspace;

pub use dist::sample_inverse_gaussian;

/// Monitoring counters for one sweep.
#[derive(Debug, Clone)]
pub struct SweepDiagnostics {
    /// Accepted component flips per block (outcome, then views).
    pub accept_gamma: Vec<usize>,
    /// Accepted group flips per omics view (zero for ungrouped views).
    pub accept_group: Vec<usize>,
    /// Unnormalized log posterior, for trace monitoring only.
    pub log_joint: f64,
}

pub type ChainDiagnostics = Vec<SweepDiagnostics>;

/// Posterior summaries plus per-sweep diagnostics from a single chain.
pub struct ChainRun {
    pub summary: PosteriorSummary,
    pub diagnostics: ChainDiagnostics,
}

struct Accumulator {
    gamma: Vec<Vec<f64>>,
    eta: Vec<DMatrix<f64>>,
    group: Vec<Option<DMatrix<f64>>>,
    u_sum: DMatrix<f64>,
    sigma2_sum: Vec<DVector<f64>>,
    alpha0_sum: f64,
    configs: HashMap<IndicatorConfig, usize>,
    n_retained: usize,
}

impl Accumulator {
    fn new(state: &ChainState) -> Self {
        Accumulator {
            gamma: state
                .blocks
                .iter()
                .map(|b| vec![0.0; b.gamma.len()])
                .collect(),
            eta: state
                .blocks
                .iter()
                .map(|b| DMatrix::zeros(b.eta.nrows(), b.eta.ncols()))
                .collect(),
            group: state
                .blocks
                .iter()
                .map(|b| {
                    b.group
                        .as_ref()
                        .map(|g| DMatrix::zeros(g.r_ind.nrows(), g.r_ind.ncols()))
                })
                .collect(),
            u_sum: DMatrix::zeros(state.u.nrows(), state.u.ncols()),
            sigma2_sum: state.blocks.iter().map(|b| DVector::zeros(b.p())).collect(),
            alpha0_sum: 0.0,
            configs: HashMap::new(),
            n_retained: 0,
        }
    }

    fn absorb(&mut self, state: &ChainState) {
        for (b, blk) in state.blocks.iter().enumerate() {
            for l in 0..blk.gamma.len() {
                if blk.gamma[l] {
                    self.gamma[b][l] += 1.0;
                }
            }
            for (dst, &src) in self.eta[b].iter_mut().zip(blk.eta.iter()) {
                *dst += f64::from(src);
            }
            if let (Some(acc), Some(g)) = (self.group[b].as_mut(), blk.group.as_ref()) {
                for (dst, &src) in acc.iter_mut().zip(g.r_ind.iter()) {
                    *dst += f64::from(src);
                }
            }
            self.sigma2_sum[b] += &blk.sigma2;
        }
        self.u_sum += &state.u;
        self.alpha0_sum += state.alpha0;
        *self
            .configs
            .entry(IndicatorConfig::from_state(state))
            .or_insert(0) += 1;
        self.n_retained += 1;
    }

    fn into_summary(self, n_views: usize) -> PosteriorSummary {
        let t = self.n_retained as f64;
        PosteriorSummary {
            mpp_gamma: self
                .gamma
                .iter()
                .map(|v| v.iter().map(|c| c / t).collect())
                .collect(),
            mpp_eta: self.eta.iter().map(|m| m / t).collect(),
            mpp_group: self.group[1..=n_views]
                .iter()
                .map(|g| g.as_ref().map(|m| m / t))
                .collect(),
            u_bar: self.u_sum / t,
            sigma2_bar: self.sigma2_sum.iter().map(|v| v / t).collect(),
            a_mode: Vec::new(),
            alpha0_hat: self.alpha0_sum / t,
            retained: RetainedDraws {
                configs: sorted_configs(self.configs),
                n_retained: self.n_retained,
            },
        }
    }
}

/// HashMap iteration order is nondeterministic; fix it for reproducibility.
fn sorted_configs(map: HashMap<IndicatorConfig, usize>) -> Vec<(IndicatorConfig, usize)> {
    let mut configs: Vec<(IndicatorConfig, usize)> = map.into_iter().collect();
    configs.sort_by(|a, b| {
        b.1.cmp(&a.1)
            .then_with(|| a.0.gamma.cmp(&b.0.gamma))
            .then_with(|| a.0.eta.cmp(&b.0.eta))
    });
    configs
}

/// Sweep-level switches. Production fits use the defaults; the
/// distributional test harness flips them to quantify printed-formula
/// variants and to pin the intercept at zero.
///
/// `update_b0` is off by default: the reference algorithm initializes the
/// shrinkage intercepts at 0.1 and never resamples them, and doing so is
/// what keeps the group layer identified (the pseudo-path entries dominate
/// a sampled b_l0 and let it absorb the group effects). The conjugate
/// update remains available and is itself validated by the
/// getting-it-right harness.
#[derive(Debug, Clone, Copy)]
pub(crate) struct SweepOptions {
    pub update_alpha0: bool,
    pub update_b0: bool,
    /// Hold the first `force_components` component indicators at one
    /// instead of letting the flip scan touch them. Used during early
    /// burn-in, introducing components one at a time so each locks onto
    /// the dominant residual structure through the per-feature indicator
    /// refresh; discovery through fresh-prior latent columns alone is a
    /// rare event at realistic scale, and forcing all components at once
    /// lets two of them collide on the same structure.
    pub force_components: usize,
    pub loadings: steps::LoadingsUpdate,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            update_alpha0: true,
            update_b0: false,
            force_components: 0,
            loadings: steps::LoadingsUpdate::default(),
        }
    }
}

pub(crate) fn sweep_once(
    state: &mut ChainState,
    data: &ViewSet,
    groups: &GroupDesign,
    hp: &Hyperparameters,
    ws: &mut Workspace,
    options: SweepOptions,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> Result<SweepDiagnostics> {
    let n_blocks = state.blocks.len();
    let m = state.n_views;
    ws.refresh(state, data);

    let forced = options.force_components.min(hp.r);
    let mut accept_gamma = vec![0; m + 1];
    for b in 0..=m {
        for l in 0..forced {
            state.blocks[b].gamma[l] = true;
            if b == 0 {
                state.blocks[b].eta[(l, 0)] = 1;
            }
        }
        accept_gamma[b] = steps::step_gamma_eta(state, data, groups, hp, ws, b, forced, rng)?;
    }
    // Refresh feature indicators inside staying-active components; the
    // component flips alone would leave those rows frozen.
    for b in 1..=m {
        steps::step_eta_within(state, data, groups, hp, ws, b, rng)?;
    }
    for b in 0..n_blocks {
        steps::step_sigma2(state, data, hp, ws, b, rng)?;
        steps::step_loadings(state, ws, b, options.loadings, rng)?;
        steps::step_tau_lambda(state, groups, hp, b, rng);
    }
    let mut accept_group = vec![0; m];
    for b in 1..=m {
        if state.blocks[b].group.is_some() {
            accept_group[b - 1] = steps::step_group(state, hp, ws, b, rng)?;
        }
    }
    if options.update_b0 {
        for b in 0..n_blocks {
            steps::step_b0(state, groups, hp, b, rng);
        }
    }
    for b in 0..=m {
        steps::step_q(state, hp, b, rng);
    }
    for b in 1..=m {
        if state.blocks[b].group.is_some() {
            steps::step_qr(state, hp, b, rng);
        }
    }
    let log_joint = steps::log_joint(state, groups, hp, ws, data.n());
    steps::step_u(state, data, ws, rng)?;
    if options.update_alpha0 {
        steps::step_alpha0(state, data, rng);
    }

    Ok(SweepDiagnostics {
        accept_gamma,
        accept_group,
        log_joint,
    })
}

/// Run one chain on standardized data. Deterministic for a given
/// (hp.seed, chain_index) pair regardless of thread scheduling.
pub fn run_chain(
    data: &ViewSet,
    groups: &GroupDesign,
    hp: &Hyperparameters,
    chain_index: u64,
) -> Result<ChainRun> {
    hp.validate()?;
    groups.check_against(data)?;
    let tree = RngTree::new(hp.seed);
    let mut init_rng = tree.stream(&[chain_index, 0]);
    let mut state = init_chain(hp, data, groups, &mut init_rng)?;
    let mut ws = Workspace::new(data, groups, hp.r);
    let mut accum = Accumulator::new(&state);
    let mut diagnostics = Vec::with_capacity(hp.n_iter);

    // Early burn-in exploration: components enter one at a time and are
    // held active while the feature indicators, loadings, and latent
    // columns organize around the residual structure; the exact kernel
    // takes over well before retention starts.
    let stage = (hp.burn_in / (2 * hp.r)).min(300);
    for sweep in 0..hp.n_iter {
        let mut rng = tree.stream(&[chain_index, 1 + sweep as u64]);
        let force_components = if stage > 0 && sweep < hp.r * stage {
            sweep / stage + 1
        } else {
            0
        };
        let options = SweepOptions {
            force_components,
            ..SweepOptions::default()
        };
        // If the newest forced component has not captured anything a
        // quarter of the way into its stage, point its latent column at
        // the residual structure instead of waiting on a lucky prior draw.
        if force_components > 0 && sweep % stage == stage / 4 {
            let newest = force_components - 1;
            let captured: usize = (1..=data.n_views())
                .map(|m| {
                    let blk = &state.blocks[m];
                    (0..blk.p()).filter(|&j| blk.eta[(newest, j)] == 1).count()
                })
                .sum();
            if captured < 5 {
                steps::reseed_latent_column(&mut state, data, newest, &mut rng);
            }
        }
        let diag = sweep_once(&mut state, data, groups, hp, &mut ws, options, &mut rng)
            .map_err(|e| e.at_sweep(sweep))?;
        #[cfg(debug_assertions)]
        state.check_invariants().map_err(|e| e.at_sweep(sweep))?;
        diagnostics.push(diag);
        if sweep >= hp.burn_in && (sweep - hp.burn_in) % hp.thin == 0 {
            accum.absorb(&state);
        }
    }
    state.check_invariants()?;

    Ok(ChainRun {
        summary: accum.into_summary(data.n_views()),
        diagnostics,
    })
}

/// A complete fit: the assembled model plus per-chain diagnostics.
pub struct FitResult {
    pub model: FittedModel,
    pub diagnostics: Vec<ChainDiagnostics>,
}

/// Standardize, run `hp.n_chains` independent chains (in parallel), pool
/// their retained draws, and assemble the fitted model.
pub fn fit(raw: &ViewSet, groups: &GroupDesign, hp: &Hyperparameters) -> Result<FitResult> {
    hp.validate()?;
    let (data, record) = validate_and_standardize(raw, true)?;
    groups.check_against(&data)?;

    let runs: Vec<ChainRun> = (0..hp.n_chains)
        .into_par_iter()
        .map(|c| run_chain(&data, groups, hp, c as u64))
        .collect::<Result<Vec<_>>>()?;

    let summary = pool_summaries(&runs.iter().map(|r| &r.summary).collect::<Vec<_>>());
    let diagnostics = runs.into_iter().map(|r| r.diagnostics).collect();
    let model = FittedModel::assemble(&data, record, hp.clone(), summary)?;
    Ok(FitResult { model, diagnostics })
}

/// Equal-weight pooling of per-chain summaries. Each chain retains the same
/// number of draws, so averaging the means and merging configuration counts
/// reproduces the pooled-sample statistics exactly.
fn pool_summaries(summaries: &[&PosteriorSummary]) -> PosteriorSummary {
    if summaries.len() == 1 {
        return summaries[0].clone();
    }
    let k = summaries.len() as f64;
    let mut pooled = summaries[0].clone();
    for s in &summaries[1..] {
        for (dst, src) in pooled.mpp_gamma.iter_mut().zip(&s.mpp_gamma) {
            for (d, v) in dst.iter_mut().zip(src) {
                *d += v;
            }
        }
        for (dst, src) in pooled.mpp_eta.iter_mut().zip(&s.mpp_eta) {
            *dst += src;
        }
        for (dst, src) in pooled.mpp_group.iter_mut().zip(&s.mpp_group) {
            if let (Some(d), Some(v)) = (dst.as_mut(), src.as_ref()) {
                *d += v;
            }
        }
        pooled.u_bar += &s.u_bar;
        for (dst, src) in pooled.sigma2_bar.iter_mut().zip(&s.sigma2_bar) {
            *dst += src;
        }
        pooled.alpha0_hat += s.alpha0_hat;
    }
    for v in pooled.mpp_gamma.iter_mut() {
        for d in v.iter_mut() {
            *d /= k;
        }
    }
    for m in pooled.mpp_eta.iter_mut() {
        *m /= k;
    }
    for g in pooled.mpp_group.iter_mut().flatten() {
        *g /= k;
    }
    pooled.u_bar /= k;
    for v in pooled.sigma2_bar.iter_mut() {
        *v /= k;
    }
    pooled.alpha0_hat /= k;

    let mut merged: HashMap<IndicatorConfig, usize> = HashMap::new();
    let mut total = 0;
    for s in summaries {
        total += s.retained.n_retained;
        for (cfg, count) in &s.retained.configs {
            *merged.entry(cfg.clone()).or_insert(0) += count;
        }
    }
    pooled.retained = RetainedDraws {
        configs: sorted_configs(merged),
        n_retained: total,
    };
    pooled
}
