//! KS trend of the sup-functional convergence experiment across seeds.
//!
//! `cargo run --release --example seed_sweep -- <weight> [seeds]`

use wapprox::dan_models::DistributionModel;
use wapprox::experiments::{
    run_functional_convergence, ConvergenceSpec, Functional, NormKind, TauRule,
};
use wapprox::weights::WeightFunction;
use wapprox::wiener::WienerGrid;

fn main() {
    let mut args = std::env::args().skip(1);
    let weight = args.next().unwrap_or_else(|| "const:1".into());
    let seeds: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(30);
    let tau_rule = if weight == "const:1" {
        TauRule::OneOverN
    } else {
        TauRule::OneOverLogN
    };
    let mut sums = [0.0; 3];
    let (mut trend_ok, mut final_ok) = (0, 0);
    for seed in 1..=seeds {
        let spec = ConvergenceSpec {
            model: DistributionModel::StandardNormal,
            weight: WeightFunction::parse(&weight).expect("valid weight"),
            functional: Functional::Sup { tau_rule },
            normalization: NormKind::BySelf,
            ns: vec![100, 1_000, 10_000],
            replicates: 2000,
            seed,
            grid: WienerGrid::default(),
        };
        let report = run_functional_convergence(&spec)
            .expect("experiment runs")
            .report;
        let ks = report.ks_values();
        for (s, k) in sums.iter_mut().zip(&ks) {
            *s += k;
        }
        let trend = report.ks_nonincreasing(0.01);
        let fin = ks[2] < 0.06;
        trend_ok += usize::from(trend);
        final_ok += usize::from(fin);
        println!("seed {seed}: ks {ks:.4?} trend {trend} final {fin}");
    }
    let k = seeds as f64;
    println!(
        "mean ks {:.4?}; trend {trend_ok}/{seeds}; final {final_ok}/{seeds}",
        sums.map(|s| s / k)
    );
}
