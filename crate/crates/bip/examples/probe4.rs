use bip::metrics;
use bip::model::Hyperparameters;
use bip::simgen::{generate, Scenario, ScenarioSpec};

fn run_case(scenario: Scenario, seed: u64) {
    let spec = ScenarioSpec { scenario, seed, ..ScenarioSpec::default() };
    let data = generate(&spec).unwrap();
    let long = matches!(scenario, Scenario::One { setting: 5 });
    let (n_iter, burn_in) = if long { (12_000, 6_000) } else { (5_000, 2_500) };
    let hp = Hyperparameters { n_iter, burn_in, seed: seed + 7000, ..Hyperparameters::default() };
    let fit = bip::fit(&data.train, &data.groups, &hp).unwrap();
    let model = fit.model;
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
    let mse = metrics::mse(&preds, &y);
    print!("{scenario:?} seed={seed}: ");
    for m in 0..2 {
        let sel = metrics::select_features(&model.summary.mpp_eta[m + 1], 0.5);
        let rep = metrics::selection_scores(&sel, &data.truth.signal[m]);
        let g = model.summary.mpp_group[m].as_ref().unwrap();
        let scores: Vec<f64> = (0..g.ncols())
            .map(|k| (0..g.nrows()).map(|l| g[(l, k)]).fold(0.0, f64::max))
            .collect();
        let auc = metrics::auc_from_mpp(&scores, &data.truth.group_signal[m]);
        print!("v{}: FNR {:.1} FPR {:.2} F {:.1} AUC {:.2} | ", m + 1, rep.fnr, rep.fpr, rep.f_measure, auc);
    }
    let both: Vec<usize> = (0..4)
        .filter(|&l| model.summary.mpp_gamma[1][l] > 0.5 && model.summary.mpp_gamma[2][l] > 0.5)
        .collect();
    println!("MSE {mse:.2} shared-active {both:?}");
}

fn main() {
    for seed in [31u64, 32, 33, 34, 35] {
        run_case(Scenario::One { setting: 5 }, seed);
    }
}
