use bip::model::{init_chain, validate_and_standardize, Hyperparameters};
use bip::rng::RngTree;
use bip::sampler::steps::{self, LoadingsUpdate, Workspace};
use bip::simgen::{generate, Scenario, ScenarioSpec};

fn main() {
    let spec = ScenarioSpec {
        scenario: Scenario::One { setting: 5 },
        seed: 33,
        ..ScenarioSpec::default()
    };
    let data = generate(&spec).unwrap();
    let hp = Hyperparameters { n_iter: 3000, burn_in: 1500, seed: 7033, ..Hyperparameters::default() };
    let (std_data, _) = validate_and_standardize(&data.train, true).unwrap();
    let groups = &data.groups;
    let tree = RngTree::new(hp.seed);
    let mut rng0 = tree.stream(&[0, 0]);
    let mut state = init_chain(&hp, &std_data, groups, &mut rng0).unwrap();
    let mut ws = Workspace::new(&std_data, groups, hp.r);

    for sweep in 0..3000usize {
        let mut rng = tree.stream(&[0, 1 + sweep as u64]);
        ws.refresh(&state, &std_data);
        let force = sweep < 300;
        if force {
            for b in 0..=2 {
                for l in 0..4 {
                    state.blocks[b].gamma[l] = true;
                    if b == 0 { state.blocks[b].eta[(l, 0)] = 1; }
                }
            }
        } else {
            for b in 0..=2 {
                steps::step_gamma_eta(&mut state, &std_data, groups, &hp, &mut ws, b, 0, &mut rng).unwrap();
            }
        }
        for b in 1..=2 {
            steps::step_eta_within(&mut state, &std_data, groups, &hp, &mut ws, b, &mut rng).unwrap();
        }
        for b in 0..state.blocks.len() {
            steps::step_sigma2(&mut state, &std_data, &hp, &mut ws, b, &mut rng).unwrap();
            steps::step_loadings(&mut state, &mut ws, b, LoadingsUpdate::Conjugate, &mut rng).unwrap();
            steps::step_tau_lambda(&mut state, groups, &hp, b, &mut rng);
        }
        for b in 1..=2 {
            steps::step_group(&mut state, &hp, &ws, b, &mut rng).unwrap();
        }
        for b in 0..state.blocks.len() {
            steps::step_b0(&mut state, groups, &hp, b, &mut rng);
        }
        for b in 0..=2 { steps::step_q(&mut state, &hp, b, &mut rng); }
        for b in 1..=2 { steps::step_qr(&mut state, &hp, b, &mut rng); }
        steps::step_u(&mut state, &std_data, &mut ws, &mut rng).unwrap();
        steps::step_alpha0(&mut state, &std_data, &mut rng);

        if sweep % 100 == 0 || sweep == 2999 {
            print!("sweep {sweep}: ");
            for b in 1..=2 {
                let blk = &state.blocks[b];
                print!("v{b}[");
                for l in 0..4 {
                    if blk.gamma[l] {
                        // count eta per 25-block to see which block each component covers
                        let counts: Vec<usize> = (0..4)
                            .map(|blkid| (blkid * 25..(blkid + 1) * 25).filter(|&j| blk.eta[(l, j)] == 1).count())
                            .collect();
                        let noise = (100..blk.p()).filter(|&j| blk.eta[(l, j)] == 1).count();
                        print!("l{l}:{counts:?}+{noise} ");
                    } else {
                        print!("l{l}:off ");
                    }
                }
                print!("] ");
            }
            println!();
        }
    }
}
