//! Measure test error at several dataset sizes and fit the power law.

use powerscale::config::{default_data_dir, preset_family};
use powerscale::evalsuite::{run_experiment, ExperimentData, RunOptions};
use powerscale::scaling::{fit_power_law, ScalingSeries};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let n_samples = std::env::args().nth(1).map_or(Ok(5), |s| s.parse())?;
    let data = ExperimentData::load(&default_data_dir())?;
    let mut results = Vec::new();
    for p in preset_family("appC_1layer") {
        let cfg = powerscale::evalsuite::ExperimentConfig { n_samples, ..p.experiment };
        let r = run_experiment(&cfg, &data, RunOptions::default())?;
        let published = p.reference.map_or(f64::NAN, |r| r.success_rate);
        println!("{:>4}/label: {:.4} +- {:.4} (published {published})", cfg.examples_per_label, r.success_rate, r.std);
        results.push(r);
    }
    let series = ScalingSeries::from_results("one hidden layer", &results);
    let fit = fit_power_law(&series)?;
    println!("measured: c0 {:.4}, rho {:.4} +- {:.4}", fit.c0, fit.rho, fit.se_rho);
    Ok(())
}
