//! Coordinate search over two momentum parameters at 9 examples/label.

use powerscale::config::{default_data_dir, preset_config};
use powerscale::evalsuite::ExperimentData;
use powerscale::gridopt::{sequential_coordinate_search, EvalCache, ExperimentObjective, ParamAxis, ParamSpace, SearchOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let data = ExperimentData::load(&default_data_dir())?;
    let mut base = preset_config("appC_1layer_30", 4, 1)?;
    base.examples_per_label = 9;
    let space = ParamSpace::new(vec![
        ParamAxis::new("eta", 0.002, 0.02, 0.006).with_start(0.005),
        ParamAxis::new("alpha", 0.0, 0.02, 0.01).with_start(0.007),
    ]);
    let objective = ExperimentObjective::new(base, &space, &data)?;
    let opts = SearchOptions { stages: 2, max_sweeps: 2 };
    let trace = sequential_coordinate_search(&space, &objective, &[0, 1], opts, &EvalCache::new())?;
    for e in &trace.entries {
        println!("sweep {} axis {:?} stage {}: {:?} -> {:.4}{}", e.sweep, e.coordinate, e.stage, e.params, e.eval.mean_error,
            if e.cached { " (cached)" } else { "" });
    }
    let best = trace.incumbent().expect("non-empty trace");
    println!("incumbent {:?}: error {:.4} +- {:.4}", best.params, best.eval.mean_error, best.eval.std);
    Ok(())
}
