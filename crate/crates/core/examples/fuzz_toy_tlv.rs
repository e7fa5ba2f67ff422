//! Compares toy-tlv campaigns with and without grammar-guided field mutations.

use statefuzz::campaign::{run_campaign, CampaignConfig};
use statefuzz::harness::toy_tlv;

fn main() {
    let grammar = toy_tlv::ground_truth_grammar();
    for field_mutations in [true, false] {
        let mut found = 0;
        for rng_seed in 0..5 {
            let mut cfg = CampaignConfig {
                target: "toy-tlv".into(),
                state_vars: vec!["conn_state".into()],
                field_mutations,
                stop_on_site: Some("len_confusion".into()),
                ..CampaignConfig::default()
            };
            cfg.mutation.rng_seed = rng_seed;
            let r = run_campaign(&cfg, toy_tlv::reference_seeds(), Some(grammar.clone())).unwrap();
            match r.first_crash("len_confusion") {
                Some(c) => {
                    found += 1;
                    println!(
                        "field_mutations={field_mutations} seed {rng_seed}: found at exec {}",
                        c.exec_index
                    );
                }
                None => println!(
                    "field_mutations={field_mutations} seed {rng_seed}: not found in {} execs",
                    r.execs
                ),
            }
        }
        println!("field_mutations={field_mutations}: {found}/5\n");
    }
}
