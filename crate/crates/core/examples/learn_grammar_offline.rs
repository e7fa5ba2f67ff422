//! Learns the toy-tlv grammar from recorded model replies.

use std::path::Path;

use statefuzz::grammar::{learn_grammar, FixtureClient};
use statefuzz::harness::toy_tlv;

fn main() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/toy-tlv/llm");
    let mut client = FixtureClient::from_dir(&dir).unwrap();
    let g = learn_grammar(&mut client, "toy-tlv", &toy_tlv::reference_seeds(), 3);
    for f in &g.fields {
        println!(
            "{:<8} bits {:>3}..{:<5} {} dictionary values",
            f.name,
            f.bit_start,
            f.bit_end(),
            g.dictionary_for(&f.name).len()
        );
    }
}
