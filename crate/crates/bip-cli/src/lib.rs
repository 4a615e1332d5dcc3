//! Batch front-end: data ingestion, configuration, and the fit / predict /
//! simulate / evaluate pipeline around the `bip` library.

pub mod config;
pub mod io;
pub mod model_store;

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use nalgebra::{DMatrix, DVector};
use serde_json::{json, Value};

use bip::metrics;
use bip::model::{GroupDesign, GroupSpec, Hyperparameters, ViewSet};
use bip::predict::PosteriorModeVariant;
use bip::simgen::{self, Scenario, ScenarioSpec};

use io::{read_groups, read_matrix, write_atomic, write_component_table, write_groups, write_matrix, MatrixFile};
use model_store::{load_model, save_model, variant_from_name, variant_name, StoredNames};

/// Exit code classification: 2 for validation/input problems, 3 for
/// numerical failures inside the sampler.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if let Some(bip::BipError::Numerical { .. }) = cause.downcast_ref::<bip::BipError>() {
            return 3;
        }
    }
    2
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "view".to_string())
}

/// All inputs to a fit, after merging config file and flags.
#[derive(Debug, Clone)]
pub struct FitOptions {
    pub views: Vec<PathBuf>,
    pub outcome: PathBuf,
    pub covariates: Option<PathBuf>,
    /// One entry per view; "-" skips the view.
    pub groups: Vec<PathBuf>,
    pub out: PathBuf,
    pub hp: Hyperparameters,
    pub center_outcome: bool,
    pub posterior_mode_variant: PosteriorModeVariant,
}

fn load_viewset(
    view_paths: &[PathBuf],
    outcome_path: &Path,
    covariate_path: Option<&Path>,
) -> Result<(ViewSet, Vec<String>, Vec<String>)> {
    if view_paths.is_empty() {
        bail!("at least one view file is required");
    }
    let mut views = Vec::new();
    let mut names = Vec::new();
    let mut view_names = Vec::new();
    let mut ids: Option<Vec<String>> = None;
    let mut check_ids = |file: &MatrixFile, what: &str| -> Result<()> {
        match &ids {
            None => ids = Some(file.sample_ids.clone()),
            Some(existing) => {
                if existing != &file.sample_ids {
                    bail!("sample ids in {what} do not match the first input file");
                }
            }
        }
        Ok(())
    };
    for path in view_paths {
        let file = read_matrix(path)?;
        check_ids(&file, &path.display().to_string())?;
        views.push(file.values);
        names.push(file.feature_names);
        view_names.push(stem(path));
    }
    let outcome_file = read_matrix(outcome_path)?;
    check_ids(&outcome_file, "outcome")?;
    if outcome_file.values.ncols() != 1 {
        bail!("outcome file must have exactly one value column");
    }
    let outcome = DVector::from_column_slice(outcome_file.values.column(0).as_slice());
    let covariates = match covariate_path {
        Some(p) => {
            let file = read_matrix(p)?;
            check_ids(&file, "covariates")?;
            Some((file.values, file.feature_names))
        }
        None => None,
    };
    let (cov, cov_names) = match covariates {
        Some((m, n)) => (Some(m), n),
        None => (None, Vec::new()),
    };
    let data = ViewSet::new(views, outcome, cov, names, cov_names)?;
    Ok((data, view_names, ids.unwrap()))
}

fn load_group_design(group_paths: &[PathBuf], data: &ViewSet) -> Result<GroupDesign> {
    if group_paths.is_empty() {
        return Ok(GroupDesign::none(data.n_views()));
    }
    if group_paths.len() != data.n_views() {
        bail!(
            "got {} group files for {} views (use '-' to skip a view)",
            group_paths.len(),
            data.n_views()
        );
    }
    let mut per_view = Vec::new();
    for (m, path) in group_paths.iter().enumerate() {
        if path.as_os_str() == "-" {
            per_view.push(None);
            continue;
        }
        let (membership, group_names) = read_groups(path, data.feature_names(m))?;
        per_view.push(Some(GroupSpec::new(membership, group_names)?));
    }
    Ok(GroupDesign { per_view })
}

/// Fit the model and write every output artifact into `opts.out`.
pub fn cmd_fit(opts: &FitOptions) -> Result<()> {
    opts.hp.validate()?;
    let (data, view_names, sample_ids) = load_viewset(
        &opts.views,
        &opts.outcome,
        opts.covariates.as_deref(),
    )?;
    let groups = load_group_design(&opts.groups, &data)?;
    let bipnet = groups.present();

    let started = Instant::now();
    let result = bip::fit(&data, &groups, &opts.hp)?;
    let wall = started.elapsed().as_secs_f64();
    let model = result.model.with_variant(opts.posterior_mode_variant);

    std::fs::create_dir_all(&opts.out)
        .with_context(|| format!("creating {}", opts.out.display()))?;

    // Component MPPs: one row per block.
    let r = opts.hp.r;
    let n_blocks = model.dims.len();
    let mut block_names = vec!["y".to_string()];
    block_names.extend(view_names.iter().cloned());
    if model.has_covariates {
        block_names.push("covariates".to_string());
    }
    let gamma_mat = DMatrix::from_fn(n_blocks, r, |b, l| model.summary.mpp_gamma[b][l]);
    write_component_table(&opts.out.join("mpp_gamma.csv"), &block_names, &gamma_mat)?;

    for (m, name) in view_names.iter().enumerate() {
        let eta = &model.summary.mpp_eta[m + 1];
        write_component_table(
            &opts.out.join(format!("mpp_eta_{name}.csv")),
            data.feature_names(m),
            &eta.transpose(),
        )?;
        if let Some(g) = &model.summary.mpp_group[m] {
            let group_names = groups.per_view[m]
                .as_ref()
                .map(|s| s.group_names.clone())
                .unwrap_or_default();
            write_component_table(
                &opts.out.join(format!("mpp_group_{name}.csv")),
                &group_names,
                &g.transpose(),
            )?;
        }
    }

    for (b, bname) in block_names.iter().enumerate() {
        let loadings = &model.summary.a_mode[b];
        let row_names: Vec<String> = if b == 0 {
            vec!["y".to_string()]
        } else if b <= data.n_views() {
            data.feature_names(b - 1).to_vec()
        } else {
            data.covariate_names().to_vec()
        };
        write_component_table(
            &opts.out.join(format!("loadings_{bname}.csv")),
            &row_names,
            &loadings.transpose(),
        )?;
    }

    write_component_table(&opts.out.join("u_scores.csv"), &sample_ids, &model.summary.u_bar)?;

    // Acceptance-rate summaries over all sweeps and chains.
    let mut gamma_rates = vec![0.0; data.n_views() + 1];
    let mut group_rates = vec![0.0; data.n_views()];
    let mut sweeps = 0usize;
    for chain in &result.diagnostics {
        for diag in chain {
            sweeps += 1;
            for (i, &c) in diag.accept_gamma.iter().enumerate() {
                gamma_rates[i] += c as f64;
            }
            for (i, &c) in diag.accept_group.iter().enumerate() {
                group_rates[i] += c as f64;
            }
        }
    }
    for v in gamma_rates.iter_mut() {
        *v /= (sweeps * r) as f64;
    }
    let group_sizes: Vec<usize> = (0..data.n_views())
        .map(|m| groups.per_view[m].as_ref().map(|s| s.n_groups()).unwrap_or(0))
        .collect();
    for (m, v) in group_rates.iter_mut().enumerate() {
        let denom = sweeps * r * group_sizes[m].max(1);
        *v /= denom as f64;
    }

    let fit_info = json!({
        "hyperparameters": model_store::hp_json(&opts.hp),
        "seed": opts.hp.seed,
        "bipnet": bipnet,
        "center_outcome": opts.center_outcome,
        "posterior_mode_variant": variant_name(opts.posterior_mode_variant),
        "views": view_names,
        "n_samples": data.n(),
        "accept_rate_gamma": gamma_rates,
        "accept_rate_group": group_rates,
        "retained_draws": model.summary.retained.n_retained,
        "unique_configurations": model.summary.retained.configs.len(),
        "wall_time_s": wall,
    });
    write_atomic(
        &opts.out.join("fit.json"),
        serde_json::to_string_pretty(&fit_info)?.as_bytes(),
    )?;

    let names = StoredNames {
        view_names: view_names.clone(),
        feature_names: (0..data.n_views())
            .map(|m| data.feature_names(m).to_vec())
            .collect(),
        covariate_names: data.covariate_names().to_vec(),
    };
    save_model(&opts.out.join("model.json"), &model, &names)?;
    println!(
        "fit complete: {} views, {} retained draws, {:.1}s",
        data.n_views(),
        model.summary.retained.n_retained,
        wall
    );
    Ok(())
}

/// Read feature files for prediction, validating names against the model.
fn load_prediction_rows(
    names: &StoredNames,
    view_paths: &[PathBuf],
    covariate_path: Option<&Path>,
) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    if view_paths.len() != names.view_names.len() {
        bail!(
            "model was fit on {} views, got {}",
            names.view_names.len(),
            view_paths.len()
        );
    }
    let mut files = Vec::new();
    for (m, path) in view_paths.iter().enumerate() {
        let file = read_matrix(path)?;
        if file.feature_names != names.feature_names[m] {
            bail!(
                "feature columns of {} do not match view '{}' from the fit",
                path.display(),
                names.view_names[m]
            );
        }
        files.push(file);
    }
    let cov_file = match covariate_path {
        Some(p) => {
            let file = read_matrix(p)?;
            if file.feature_names != names.covariate_names {
                bail!("covariate columns do not match the fit");
            }
            Some(file)
        }
        None => {
            if !names.covariate_names.is_empty() {
                bail!("model was fit with covariates; provide --covariates");
            }
            None
        }
    };
    let n = files[0].sample_ids.len();
    for f in &files {
        if f.sample_ids.len() != n {
            bail!("prediction inputs disagree on sample count");
        }
    }
    let ids = files[0].sample_ids.clone();
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let mut row = Vec::new();
        for f in &files {
            for j in 0..f.values.ncols() {
                row.push(f.values[(i, j)]);
            }
        }
        if let Some(c) = &cov_file {
            for j in 0..c.values.ncols() {
                row.push(c.values[(i, j)]);
            }
        }
        rows.push(row);
    }
    Ok((ids, rows))
}

/// Predict held-out outcomes; optionally print test MSE against a provided
/// outcome file.
pub fn cmd_predict(
    model_dir: &Path,
    view_paths: &[PathBuf],
    covariate_path: Option<&Path>,
    actual_outcome: Option<&Path>,
    out: &Path,
) -> Result<()> {
    let (model, names) = load_model(&model_dir.join("model.json"))?;
    let (ids, rows) = load_prediction_rows(&names, view_paths, covariate_path)?;
    let preds = model.bma_predict_batch(&rows)?;

    let mut text = String::from("sample_id,y_hat\n");
    for (id, p) in ids.iter().zip(&preds) {
        text.push_str(&format!("{id},{p}\n"));
    }
    write_atomic(out, text.as_bytes())?;

    if let Some(actual_path) = actual_outcome {
        let actual = read_matrix(actual_path)?;
        let y: Vec<f64> = actual.values.column(0).iter().copied().collect();
        if y.len() != preds.len() {
            bail!("outcome file has {} rows, predictions have {}", y.len(), preds.len());
        }
        println!("test MSE: {}", metrics::mse(&preds, &y));
    }
    println!("wrote {} predictions to {}", preds.len(), out.display());
    Ok(())
}

/// Scenario generation into a dataset directory (train at the top level,
/// held-out test split under test/).
pub fn cmd_simulate(spec: &ScenarioSpec, out: &Path) -> Result<()> {
    let dataset = simgen::generate(spec)?;
    std::fs::create_dir_all(out.join("test"))?;

    let write_split = |dir: &Path, data: &ViewSet| -> Result<()> {
        let ids: Vec<String> = (1..=data.n()).map(|i| format!("s{i}")).collect();
        for m in 0..data.n_views() {
            write_matrix(
                &dir.join(format!("X{}.csv", m + 1)),
                data.feature_names(m),
                &ids,
                data.view(m),
            )?;
        }
        let y = DMatrix::from_column_slice(data.n(), 1, data.outcome().as_slice());
        write_matrix(&dir.join("y.csv"), &["y".to_string()], &ids, &y)?;
        Ok(())
    };
    write_split(out, &dataset.train)?;
    write_split(&out.join("test"), &dataset.test)?;

    for (m, spec_m) in dataset.groups.per_view.iter().enumerate() {
        if let Some(g) = spec_m {
            write_groups(
                &out.join(format!("groups_X{}.csv", m + 1)),
                dataset.train.feature_names(m),
                &g.membership,
                &g.group_names,
            )?;
        }
    }

    let truth = &dataset.truth;
    let signal_indices: Vec<Vec<usize>> = truth
        .signal
        .iter()
        .map(|sig| sig.iter().enumerate().filter(|(_, &s)| s).map(|(j, _)| j).collect())
        .collect();
    let (scenario_num, setting, overlap) = match spec.scenario {
        Scenario::One { setting } => (1, Some(setting), None),
        Scenario::Two { overlap } => (2, None, Some(overlap)),
        Scenario::Three { overlap } => (3, None, Some(overlap)),
    };
    let doc = json!({
        "scenario": scenario_num,
        "setting": setting,
        "overlap": overlap,
        "n": spec.n,
        "n_test": spec.n_test,
        "p1": spec.p1,
        "p2": spec.p2,
        "seed": spec.seed,
        "iid_noise": spec.iid_noise,
        "outcome_coefs": truth.outcome_coefs,
        "signal_indices": signal_indices,
        "group_signal": truth.group_signal,
        "active_components": truth.active_components,
    });
    write_atomic(
        &out.join("truth.json"),
        serde_json::to_string_pretty(&doc)?.as_bytes(),
    )?;
    println!(
        "simulated scenario {scenario_num} into {} (train n = {}, test n = {})",
        out.display(),
        spec.n,
        spec.n_test
    );
    Ok(())
}

/// Score a fitted model against the generator's truth manifest and a
/// held-out test split.
pub fn cmd_evaluate(model_dir: &Path, truth_path: &Path, test_dir: &Path, out: &Path) -> Result<()> {
    let (model, names) = load_model(&model_dir.join("model.json"))?;
    let truth_text = std::fs::read_to_string(truth_path)
        .with_context(|| format!("reading truth {}", truth_path.display()))?;
    let truth: Value = serde_json::from_str(&truth_text)?;
    let signal_indices: Vec<Vec<usize>> = serde_json::from_value(truth["signal_indices"].clone())?;
    let group_signal: Vec<Vec<bool>> = serde_json::from_value(truth["group_signal"].clone())?;
    if signal_indices.len() != model.n_views {
        bail!("truth covers {} views, model has {}", signal_indices.len(), model.n_views);
    }

    let mut view_reports = Vec::new();
    for m in 0..model.n_views {
        let p = model.dims[m + 1];
        let mut truth_mask = vec![false; p];
        for &j in &signal_indices[m] {
            *truth_mask
                .get_mut(j)
                .ok_or_else(|| anyhow!("signal index {j} out of range for view {}", m + 1))? = true;
        }
        let selected = metrics::select_features(&model.summary.mpp_eta[m + 1], 0.5);
        let report = metrics::selection_scores(&selected, &truth_mask);

        let group_auc = model.summary.mpp_group[m].as_ref().map(|mpp| {
            let k = mpp.ncols();
            let scores: Vec<f64> = (0..k)
                .map(|g| (0..mpp.nrows()).map(|l| mpp[(l, g)]).fold(0.0, f64::max))
                .collect();
            metrics::auc_from_mpp(&scores, &group_signal[m])
        });
        view_reports.push((names.view_names[m].clone(), report, group_auc));
    }

    let view_paths: Vec<PathBuf> = (0..model.n_views)
        .map(|m| test_dir.join(format!("X{}.csv", m + 1)))
        .collect();
    let (_, rows) = load_prediction_rows(&names, &view_paths, None)?;
    let preds = model.bma_predict_batch(&rows)?;
    let y_file = read_matrix(&test_dir.join("y.csv"))?;
    let y: Vec<f64> = y_file.values.column(0).iter().copied().collect();
    let mse = metrics::mse(&preds, &y);

    let doc = json!({
        "views": view_reports.iter().map(|(name, rep, auc)| json!({
            "name": name,
            "fnr": rep.fnr,
            "fpr": rep.fpr,
            "f_measure": rep.f_measure,
            "selected_count": rep.selected.iter().filter(|&&s| s).count(),
            "group_auc": auc,
        })).collect::<Vec<_>>(),
        "mse": mse,
    });
    write_atomic(out, serde_json::to_string_pretty(&doc)?.as_bytes())?;
    for (name, rep, auc) in &view_reports {
        println!(
            "{name}: FNR {:.2}% FPR {:.2}% F {:.2}{}",
            rep.fnr,
            rep.fpr,
            rep.f_measure,
            auc.map(|a| format!(" group-AUC {a:.3}")).unwrap_or_default()
        );
    }
    println!("test MSE: {mse:.4}");
    Ok(())
}

/// Parse a posterior-mode variant flag value.
pub fn parse_variant(name: &str) -> Result<PosteriorModeVariant> {
    variant_from_name(name)
}
