//! Replicas trained on one subset vote by summing their outputs.

use powerscale::config::{default_data_dir, preset_config};
use powerscale::evalsuite::{run_experiment, CommitteeConfig, ExperimentData, RunOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let data = ExperimentData::load(&default_data_dir())?;
    let mut cfg = preset_config("appD_2layer_30", 2, 3)?;
    cfg.committee = Some(CommitteeConfig { n_committee: 15, share_crosses: false });
    let r = run_experiment(&cfg, &data, RunOptions { workers: 0 })?;
    for s in &r.samples {
        println!(
            "sample {}: first replica {:.4}, replica mean {:.4}, committee of {} {:.4}",
            s.sample,
            s.accuracy.unwrap_or(f64::NAN),
            s.replica_mean_accuracy.unwrap_or(f64::NAN),
            s.committee_members,
            s.committee_accuracy.unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
