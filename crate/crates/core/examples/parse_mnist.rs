//! Read the MNIST IDX files and print basic facts about them.
//!
//! `cargo run --release --example parse_mnist [DIR]`

use powerscale::config::default_data_dir;
use powerscale::data::{load_mnist, zero_variance_mask, Split};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::args().nth(1).map_or_else(default_data_dir, Into::into);
    let train = load_mnist(&dir, Split::Train)?;
    let test = load_mnist(&dir, Split::Test)?;
    println!("train: {} images, labels {:?}", train.len(), train.label_histogram());
    println!("test:  {} images, labels {:?}", test.len(), test.label_histogram());

    let first = train.image(0);
    let sum: u32 = first.iter().map(|&p| p as u32).sum();
    println!("first training image: label {}, pixel sum {sum}", train.labels()[0]);
    for row in first.chunks(28).step_by(2) {
        let line: String = row.iter().step_by(1).map(|&p| if p > 128 { '#' } else if p > 32 { '+' } else { ' ' }).collect();
        println!("  {line}");
    }
    println!("pixels constant over the full training set: {}", zero_variance_mask(&train)?.count());
    Ok(())
}
