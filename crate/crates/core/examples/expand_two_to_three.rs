//! Build a three-hidden-layer network that decides exactly like a trained
//! two-hidden-layer one.

use powerscale::config::{default_data_dir, preset_config};
use powerscale::equivalence::{decision_agreement, EquivalencePair};
use powerscale::evalsuite::{train_replica, ExperimentData};
use powerscale::network::{forward, ForwardState, Mode};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let data = ExperimentData::load(&default_data_dir())?;
    let cfg = preset_config("appD_2layer_30", 1, 1)?;
    let trained = train_replica(&cfg, &data, 0, 0)?;
    let pair = EquivalencePair::new(trained.masked_network())?;
    println!("source {:?} -> expanded {:?}", pair.source.architecture().hidden, pair.expanded.architecture().hidden);

    let inputs: Vec<f64> = data.test.inputs().flatten().copied().collect();
    println!("agreement on the test set: {}", decision_agreement(&pair.source, &pair.expanded, &inputs)?);

    let x = data.test.input(0);
    let a = forward(&pair.source, &mut ForwardState::new(&pair.source), x, &[0.0; 2], Mode::Frozen)?;
    let b = forward(&pair.expanded, &mut ForwardState::new(&pair.expanded), x, &[0.0; 3], Mode::Frozen)?;
    println!("outputs on test example 0:");
    for j in 0..10 {
        println!("  label {j}: {:.6} vs {:.6}", a.output()[j], b.output()[j]);
    }
    Ok(())
}
