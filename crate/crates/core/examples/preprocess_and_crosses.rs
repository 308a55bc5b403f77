//! Draw a balanced subset, normalize it, mask constant pixels and wire
//! input crosses to a first hidden layer.

use powerscale::config::default_data_dir;
use powerscale::data::{balanced_subset, generate_crosses, load_mnist, zero_variance_mask, PreparedSet, Split};
use powerscale::network::cross_rescale;
use powerscale::rng::{SeedTree, Stage};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let train = load_mnist(&default_data_dir(), Split::Train)?;
    let seeds = SeedTree::new(7);
    let subset = balanced_subset(&train, 30, &mut seeds.rng(Stage::Subset, &[0]))?;
    let mask = zero_variance_mask(&subset)?;
    let set = PreparedSet::prepare(&subset, &mask);
    println!("{} examples, {} masked pixels", set.len(), mask.count());

    let x = set.input(0);
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / x.len() as f64;
    println!("example 0 after normalization and masking: mean {mean:.2e}, std {:.6}", var.sqrt());

    let crosses = generate_crosses(&mut seeds.rng(Stage::Crosses, &[0, 0]), 10_000, 100, &set)?;
    let (first, second) = crosses.unit(0);
    println!("{} units x {} crosses; unit 0 starts with pixel pairs {:?}", crosses.n_units(), crosses.per_unit(),
        first.iter().zip(second).take(4).collect::<Vec<_>>());
    println!("cross value of the first pair on example 0: {:.4}", crosses.values(0, x)[0]);
    println!("cross weights are rescaled by {:.4}", cross_rescale(784, 10_000));
    Ok(())
}
