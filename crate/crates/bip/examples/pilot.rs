use std::time::Instant;

use bip::metrics;
use bip::model::Hyperparameters;
use bip::simgen::{generate, Scenario, ScenarioSpec};

fn main() {
    let iid = std::env::args().any(|a| a == "--iid");
    let spec = ScenarioSpec {
        scenario: Scenario::One { setting: 1 },
        seed: 20,
        iid_noise: iid,
        ..ScenarioSpec::default()
    };
    println!("iid_noise = {iid}");
    let t0 = Instant::now();
    let data = generate(&spec).unwrap();
    println!("gen: {:.2}s", t0.elapsed().as_secs_f64());

    let hp = Hyperparameters {
        n_iter: 5000,
        burn_in: 2500,
        seed: 99,
        ..Hyperparameters::default()
    };
    let t1 = Instant::now();
    let fitres = bip::fit(&data.train, &data.groups, &hp).unwrap();
    println!("fit: {:.1}s", t1.elapsed().as_secs_f64());
    let model = fitres.model;

    for m in 0..2 {
        let sel = metrics::select_features(&model.summary.mpp_eta[m + 1], 0.5);
        let rep = metrics::selection_scores(&sel, &data.truth.signal[m]);
        let mpp_g = model.summary.mpp_group[m].as_ref().unwrap();
        let scores: Vec<f64> = (0..mpp_g.ncols())
            .map(|k| (0..mpp_g.nrows()).map(|l| mpp_g[(l, k)]).fold(0.0, f64::max))
            .collect();
        let auc = metrics::auc_from_mpp(&scores, &data.truth.group_signal[m]);
        println!(
            "view {}: FNR {:.2} FPR {:.2} F {:.2} groupAUC {:.3} selected {}",
            m + 1,
            rep.fnr,
            rep.fpr,
            rep.f_measure,
            auc,
            rep.selected.iter().filter(|&&s| s).count()
        );
    }
    println!("mpp_gamma y: {:?}", model.summary.mpp_gamma[0]);
    println!("mpp_gamma X1: {:?}", model.summary.mpp_gamma[1]);
    println!("mpp_gamma X2: {:?}", model.summary.mpp_gamma[2]);
    println!("unique configs: {}", model.summary.retained.configs.len());

    for m in 0..2 {
        let g = model.summary.mpp_group[m].as_ref().unwrap();
        print!("view {} group max-MPP:", m + 1);
        for k in 0..g.ncols() {
            print!(" {:.2}", (0..g.nrows()).map(|l| g[(l, k)]).fold(0.0, f64::max));
        }
        println!();
    }
    let t2 = Instant::now();
    let rows: Vec<Vec<f64>> = (0..data.test.n())
        .map(|i| {
            let mut row = Vec::new();
            for m in 0..2 {
                for j in 0..data.test.view(m).ncols() {
                    row.push(data.test.view(m)[(i, j)]);
                }
            }
            row
        })
        .collect();
    let preds = model.bma_predict_batch(&rows).unwrap();
    let y: Vec<f64> = data.test.outcome().iter().copied().collect();
    println!("predict: {:.2}s; test MSE (scaled_by_sigma2) = {:.4}", t2.elapsed().as_secs_f64(), metrics::mse(&preds, &y));
    let model_cm = model.clone().with_variant(bip::predict::PosteriorModeVariant::ConditionalMean);
    let preds_cm = model_cm.bma_predict_batch(&rows).unwrap();
    println!("test MSE (conditional_mean) = {:.4}", metrics::mse(&preds_cm, &y));
    let var_y = {
        let m = y.iter().sum::<f64>() / y.len() as f64;
        y.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / y.len() as f64
    };
    println!("var(y_test) = {var_y:.3}");
}
