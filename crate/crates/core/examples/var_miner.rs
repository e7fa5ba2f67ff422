//! Calibrates toy-ftp and picks the variables that look like protocol state.

use statefuzz::harness::{toy_ftp, ToyFtp};
use statefuzz::var_miner::{calibrate, filter_vars, FilterConfig};

fn main() {
    let traces = calibrate(
        Box::new(ToyFtp::new()),
        &toy_ftp::reference_seeds(),
        10_000,
        0,
    )
    .unwrap();
    let cfg = FilterConfig::default();
    for t in &traces {
        println!(
            "{:<20} {:>6} values, {:>3} seen at least {} times",
            t.name,
            t.unique_values(),
            t.retained_values(cfg.hit_threshold),
            cfg.hit_threshold
        );
    }
    let picked: Vec<&str> = filter_vars(&traces, &cfg)
        .iter()
        .map(|&i| traces[i].name.as_str())
        .collect();
    println!("selected: {picked:?}");
}
