//! Fuzzes toy-ftp with automatically selected state variables.
//!
//! `cargo run --example fuzz_toy_ftp -- [execs] [rng_seed]`

use statefuzz::campaign::{run_campaign, CampaignConfig};
use statefuzz::harness::toy_ftp;

fn main() {
    let mut args = std::env::args()
        .skip(1)
        .map(|a| a.parse::<u64>().expect("numeric argument"));
    let mut cfg = CampaignConfig {
        max_execs: Some(args.next().unwrap_or(100_000)),
        ..CampaignConfig::default()
    };
    cfg.mutation.rng_seed = args.next().unwrap_or(0);

    let r = run_campaign(&cfg, toy_ftp::reference_seeds(), None).unwrap();
    let stats = r.model.stats();
    println!("state variables: {:?}", r.state_vars);
    println!(
        "{} execs at {:.0}/s, corpus {}",
        r.execs,
        r.execs_per_sec(),
        r.corpus.len()
    );
    println!("{} states, {} transitions", stats.n_vertices, stats.n_edges);
    for (from, to, hits) in r.model.edges() {
        println!(
            "  {} -> {} ({hits})",
            r.model.label(from),
            r.model.label(to)
        );
    }
    for c in &r.crashes {
        println!("crash {} at exec {}", c.site, c.exec_index);
    }
}
