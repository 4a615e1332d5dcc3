//! Serialization of a fitted model to `model.json` and back. serde_json
//! round-trips f64 exactly (shortest-representation printing), so a
//! reloaded model predicts bit-identically.

use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use nalgebra::{DMatrix, DVector};
use serde_json::{json, Value};

use bip::model::{
    Hyperparameters, IndicatorConfig, PosteriorSummary, RetainedDraws, StandardizationRecord,
};
use bip::predict::{FittedModel, PosteriorModeVariant};

use crate::io::write_atomic;

fn mat_json(m: &DMatrix<f64>) -> Value {
    json!({"rows": m.nrows(), "cols": m.ncols(), "data": m.as_slice()})
}

fn mat_from(v: &Value) -> Result<DMatrix<f64>> {
    let rows = v["rows"].as_u64().ok_or_else(|| anyhow!("matrix rows"))? as usize;
    let cols = v["cols"].as_u64().ok_or_else(|| anyhow!("matrix cols"))? as usize;
    let data: Vec<f64> = v["data"]
        .as_array()
        .ok_or_else(|| anyhow!("matrix data"))?
        .iter()
        .map(|x| x.as_f64().ok_or_else(|| anyhow!("matrix entry")))
        .collect::<Result<_>>()?;
    if data.len() != rows * cols {
        bail!("matrix data length mismatch");
    }
    Ok(DMatrix::from_column_slice(rows, cols, &data))
}

fn f64s(v: &Value) -> Result<Vec<f64>> {
    v.as_array()
        .ok_or_else(|| anyhow!("expected array"))?
        .iter()
        .map(|x| x.as_f64().ok_or_else(|| anyhow!("expected number")))
        .collect()
}

pub fn variant_name(v: PosteriorModeVariant) -> &'static str {
    match v {
        PosteriorModeVariant::ScaledBySigma2 => "scaled_by_sigma2",
        PosteriorModeVariant::ConditionalMean => "conditional_mean",
    }
}

pub fn variant_from_name(name: &str) -> Result<PosteriorModeVariant> {
    match name {
        "scaled_by_sigma2" => Ok(PosteriorModeVariant::ScaledBySigma2),
        "conditional_mean" => Ok(PosteriorModeVariant::ConditionalMean),
        other => bail!("unknown posterior_mode_variant '{other}'"),
    }
}

pub fn hp_json(hp: &Hyperparameters) -> Value {
    json!({
        "r": hp.r, "q_eta": hp.q_eta, "a": hp.a, "b": hp.b,
        "a0": hp.a0, "b0": hp.b0, "alpha": hp.alpha,
        "alpha_b": hp.alpha_b, "beta_b": hp.beta_b,
        "alpha0_shape": hp.alpha0_shape,
        "n_iter": hp.n_iter, "burn_in": hp.burn_in, "thin": hp.thin,
        "seed": hp.seed, "n_chains": hp.n_chains,
    })
}

fn hp_from(v: &Value) -> Result<Hyperparameters> {
    Ok(Hyperparameters {
        r: v["r"].as_u64().ok_or_else(|| anyhow!("hp.r"))? as usize,
        q_eta: v["q_eta"].as_f64().ok_or_else(|| anyhow!("hp.q_eta"))?,
        a: v["a"].as_f64().ok_or_else(|| anyhow!("hp.a"))?,
        b: v["b"].as_f64().ok_or_else(|| anyhow!("hp.b"))?,
        a0: v["a0"].as_f64().ok_or_else(|| anyhow!("hp.a0"))?,
        b0: v["b0"].as_f64().ok_or_else(|| anyhow!("hp.b0"))?,
        alpha: v["alpha"].as_f64().ok_or_else(|| anyhow!("hp.alpha"))?,
        alpha_b: v["alpha_b"].as_f64().ok_or_else(|| anyhow!("hp.alpha_b"))?,
        beta_b: v["beta_b"].as_f64().ok_or_else(|| anyhow!("hp.beta_b"))?,
        alpha0_shape: v["alpha0_shape"].as_f64().ok_or_else(|| anyhow!("hp.alpha0_shape"))?,
        n_iter: v["n_iter"].as_u64().ok_or_else(|| anyhow!("hp.n_iter"))? as usize,
        burn_in: v["burn_in"].as_u64().ok_or_else(|| anyhow!("hp.burn_in"))? as usize,
        thin: v["thin"].as_u64().ok_or_else(|| anyhow!("hp.thin"))? as usize,
        seed: v["seed"].as_u64().ok_or_else(|| anyhow!("hp.seed"))?,
        n_chains: v["n_chains"].as_u64().ok_or_else(|| anyhow!("hp.n_chains"))? as usize,
    })
}

/// Feature names per view plus covariate names, needed to validate
/// prediction inputs.
pub struct StoredNames {
    pub view_names: Vec<String>,
    pub feature_names: Vec<Vec<String>>,
    pub covariate_names: Vec<String>,
}

pub fn save_model(
    path: &Path,
    model: &FittedModel,
    names: &StoredNames,
) -> Result<()> {
    let s = &model.summary;
    let record = &model.standardization;
    let doc = json!({
        "format": "bip-model-v1",
        "hp": hp_json(&model.hp),
        "variant": variant_name(model.variant),
        "n_views": model.n_views,
        "has_covariates": model.has_covariates,
        "dims": model.dims,
        "view_names": names.view_names,
        "feature_names": names.feature_names,
        "covariate_names": names.covariate_names,
        "standardization": {
            "views": record.view_stats.iter()
                .map(|(m, s)| json!({"means": m, "sds": s}))
                .collect::<Vec<_>>(),
            "covariates": record.covariate_stats.as_ref()
                .map(|(m, s)| json!({"means": m, "sds": s}))
                .unwrap_or(Value::Null),
            "outcome_mean": record.outcome_mean,
        },
        "utu": mat_json(&model.utu),
        "ut_x": model.ut_x.iter().map(mat_json).collect::<Vec<_>>(),
        "u_bar": mat_json(&s.u_bar),
        "sigma2_bar": s.sigma2_bar.iter().map(|v| json!(v.as_slice())).collect::<Vec<_>>(),
        "alpha0_hat": s.alpha0_hat,
        "mpp_gamma": s.mpp_gamma,
        "mpp_eta": s.mpp_eta.iter().map(mat_json).collect::<Vec<_>>(),
        "mpp_group": s.mpp_group.iter()
            .map(|g| g.as_ref().map(mat_json).unwrap_or(Value::Null))
            .collect::<Vec<_>>(),
        "retained": {
            "n": s.retained.n_retained,
            "configs": s.retained.configs.iter().map(|(cfg, count)| json!({
                "count": count,
                "gamma": cfg.gamma,
                "eta": cfg.eta,
                "r_ind": cfg.r_ind,
            })).collect::<Vec<_>>(),
        },
    });
    write_atomic(path, serde_json::to_string(&doc)?.as_bytes())
}

pub fn load_model(path: &Path) -> Result<(FittedModel, StoredNames)> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading model {}", path.display()))?;
    let doc: Value = serde_json::from_str(&text)?;
    if doc["format"].as_str() != Some("bip-model-v1") {
        bail!("{}: not a bip model file", path.display());
    }
    let hp = hp_from(&doc["hp"])?;
    let variant = variant_from_name(doc["variant"].as_str().unwrap_or_default())?;
    let n_views = doc["n_views"].as_u64().ok_or_else(|| anyhow!("n_views"))? as usize;
    let has_covariates = doc["has_covariates"].as_bool().unwrap_or(false);
    let dims: Vec<usize> = doc["dims"]
        .as_array()
        .ok_or_else(|| anyhow!("dims"))?
        .iter()
        .map(|v| v.as_u64().unwrap_or(0) as usize)
        .collect();

    let std_views = doc["standardization"]["views"]
        .as_array()
        .ok_or_else(|| anyhow!("standardization.views"))?;
    let view_stats = std_views
        .iter()
        .map(|v| Ok((f64s(&v["means"])?, f64s(&v["sds"])?)))
        .collect::<Result<Vec<_>>>()?;
    let covariate_stats = if doc["standardization"]["covariates"].is_null() {
        None
    } else {
        let c = &doc["standardization"]["covariates"];
        Some((f64s(&c["means"])?, f64s(&c["sds"])?))
    };
    let standardization = StandardizationRecord {
        view_stats,
        covariate_stats,
        outcome_mean: doc["standardization"]["outcome_mean"]
            .as_f64()
            .ok_or_else(|| anyhow!("outcome_mean"))?,
    };

    let mpp_gamma: Vec<Vec<f64>> = doc["mpp_gamma"]
        .as_array()
        .ok_or_else(|| anyhow!("mpp_gamma"))?
        .iter()
        .map(f64s)
        .collect::<Result<_>>()?;
    let mpp_eta: Vec<DMatrix<f64>> = doc["mpp_eta"]
        .as_array()
        .ok_or_else(|| anyhow!("mpp_eta"))?
        .iter()
        .map(mat_from)
        .collect::<Result<_>>()?;
    let mpp_group = doc["mpp_group"]
        .as_array()
        .ok_or_else(|| anyhow!("mpp_group"))?
        .iter()
        .map(|g| {
            if g.is_null() {
                Ok(None)
            } else {
                mat_from(g).map(Some)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let sigma2_bar = doc["sigma2_bar"]
        .as_array()
        .ok_or_else(|| anyhow!("sigma2_bar"))?
        .iter()
        .map(|v| Ok(DVector::from_vec(f64s(v)?)))
        .collect::<Result<Vec<_>>>()?;

    let retained_cfgs = doc["retained"]["configs"]
        .as_array()
        .ok_or_else(|| anyhow!("retained.configs"))?;
    let configs = retained_cfgs
        .iter()
        .map(|c| {
            let count = c["count"].as_u64().ok_or_else(|| anyhow!("config count"))? as usize;
            let gamma: Vec<Vec<bool>> = serde_json::from_value(c["gamma"].clone())?;
            let eta: Vec<Vec<u8>> = serde_json::from_value(c["eta"].clone())?;
            let r_ind: Vec<Option<Vec<u8>>> = serde_json::from_value(c["r_ind"].clone())?;
            Ok((IndicatorConfig { gamma, eta, r_ind }, count))
        })
        .collect::<Result<Vec<_>>>()?;

    let summary = PosteriorSummary {
        mpp_gamma,
        mpp_eta,
        mpp_group,
        u_bar: mat_from(&doc["u_bar"])?,
        sigma2_bar,
        a_mode: Vec::new(),
        alpha0_hat: doc["alpha0_hat"].as_f64().ok_or_else(|| anyhow!("alpha0_hat"))?,
        retained: RetainedDraws {
            configs,
            n_retained: doc["retained"]["n"].as_u64().ok_or_else(|| anyhow!("retained.n"))? as usize,
        },
    };

    let model = FittedModel {
        summary,
        standardization,
        hp,
        variant,
        utu: mat_from(&doc["utu"])?,
        ut_x: doc["ut_x"]
            .as_array()
            .ok_or_else(|| anyhow!("ut_x"))?
            .iter()
            .map(mat_from)
            .collect::<Result<_>>()?,
        dims,
        n_views,
        has_covariates,
    }
    .with_variant(variant);

    let names = StoredNames {
        view_names: serde_json::from_value(doc["view_names"].clone())?,
        feature_names: serde_json::from_value(doc["feature_names"].clone())?,
        covariate_names: serde_json::from_value(doc["covariate_names"].clone())?,
    };
    Ok((model, names))
}
