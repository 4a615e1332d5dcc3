use bip::geweke::{run_geweke, GewekeModel, SamplerVariant};

fn main() {
    let base = GewekeModel::default();
    for (label, sample_b0, thin, seed) in [
        ("prod thin=40 s707", false, 40usize, 707u64),
        ("prod thin=40 s13", false, 40, 13),
        ("prod thin=100 s707", false, 100, 707),
        ("prod thin=100 s13", false, 100, 13),
        ("b0-sampled thin=100 s707", true, 100, 707),
    ] {
        let mut model = base.clone();
        model.sample_b0 = sample_b0;
        let rep = run_geweke(&model, SamplerVariant::Exact, 10_000, thin, seed).unwrap();
        print!("{label}: ");
        for i in 0..4 {
            print!("{}: D={:.4} p={:.4}  ", rep.names[i], rep.statistic[i], rep.p_value[i]);
        }
        println!();
    }
    let rep = run_geweke(&base, SamplerVariant::VerbatimLoadings, 10_000, 100, 707).unwrap();
    print!("verbatim-loadings thin=100 s707: ");
    for i in 0..4 {
        print!("{}: D={:.4} p={:.2e}  ", rep.names[i], rep.statistic[i], rep.p_value[i]);
    }
    println!();
}
