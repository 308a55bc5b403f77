//! One epoch of the accelerated rule on a network with input crosses.

use powerscale::config::{default_data_dir, preset_config};
use powerscale::evalsuite::{run_experiment, ExperimentData, RunOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let data = ExperimentData::load(&default_data_dir())?;
    let cfg = preset_config("appC_accelerated_30", 2, 1)?;
    let h = &cfg.hyper;
    println!("A = {:?}, beta = {:?}, tau = {}, mu = {}", h.step_amplitude, h.step_gain, h.tau, h.mu);
    let t = std::time::Instant::now();
    let r = run_experiment(&cfg, &data, RunOptions::default())?;
    println!("per sample {:?}: mean {:.4} ({:?})", r.per_sample, r.success_rate, t.elapsed());
    Ok(())
}
