//! Train one network with the momentum rule for one epoch, evaluate it on
//! the test set and save it.

use powerscale::config::{default_data_dir, preset_config};
use powerscale::evalsuite::{test_error, train_replica, ExperimentData};
use powerscale::network::{read_checkpoint, write_checkpoint, Checkpoint};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let data = ExperimentData::load(&default_data_dir())?;
    let cfg = preset_config("appD_2layer_30", 1, 1)?;
    let t = std::time::Instant::now();
    let trained = train_replica(&cfg, &data, 0, 0)?;
    let net = trained.masked_network();
    let err = test_error(&net, &trained.state, &data.test, &cfg.hyper.field_amplitude)?;
    println!("two hidden layers, 30 examples/label: test success rate {:.4} ({:?})", 1.0 - err, t.elapsed());

    let path = std::env::temp_dir().join("powerscale_momentum.bin");
    write_checkpoint(&path, &Checkpoint::new(net, trained.state, cfg.hyper.field_amplitude.clone(), Some(cfg.seed)))?;
    let back = read_checkpoint(&path)?;
    let again = test_error(&back.network, &back.state, &data.test, &back.field_amplitude)?;
    println!("reloaded from {}: {:.4}", path.display(), 1.0 - again);
    Ok(())
}
