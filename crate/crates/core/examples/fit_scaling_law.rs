//! Power-law fits of the published error tables, their extrapolation and
//! crossovers, plus an SVG plot.

use powerscale::config::published_series;
use powerscale::scaling::{
    crossover_with_sensitivity, extrapolate, fit_power_law, required_dataset_size, svg_plot, FitMode, PlotSeries,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let families = ["appC_1layer", "appD_2layer", "appD_3layer", "appB_momentum"];
    let series: Vec<_> = families.iter().map(|f| published_series(f, false)).collect::<Result<_, _>>()?;
    let fits: Vec<_> = series.iter().map(fit_power_law).collect::<Result<_, _>>()?;
    for (s, f) in series.iter().zip(&fits) {
        println!(
            "{:<32} c0 {:.4}  rho {:.4} +- {:.4}  r2 {:.4}  error(6000) {:.4}  n(0.05) {:.0}",
            s.label,
            f.c0,
            f.rho,
            f.se_rho,
            f.r2,
            extrapolate(f, 6000.0),
            required_dataset_size(f, 0.05).unwrap_or(f64::NAN)
        );
    }
    for k in 0..2 {
        let c = crossover_with_sensitivity(&series[k], &series[k + 1], FitMode::Ordinary)?;
        println!("{} meets {} at {:.0} examples/label", families[k], families[k + 1], c.n_star);
    }
    let plots: Vec<PlotSeries> = series.iter().zip(&fits).take(3).map(|(s, f)| PlotSeries { series: s, fit: Some(f) }).collect();
    let path = std::env::temp_dir().join("powerscale_fits.svg");
    std::fs::write(&path, svg_plot(&plots, Some(6000.0)))?;
    println!("plot: {}", path.display());
    Ok(())
}
