//! Scores a learned DNS layout against the reference layout.

use std::path::Path;

use statefuzz::grammar::{accuracy, classify_fields};
use statefuzz::message::load_grammar;

fn main() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/dns");
    let truth = load_grammar(dir.join("truth.json")).unwrap();
    let hyp = load_grammar(dir.join("hypothesis.json")).unwrap();
    let r = classify_fields(&hyp.fields, &truth.fields).unwrap();
    let acc = accuracy(&r);
    println!(
        "exact {} merged {} split {} mismatch {} of {}",
        r.g_l, r.l_mg, r.ml_g, r.mismatch, r.total
    );
    println!(
        "exact_acc {:.2}%  multi_acc {:.2}%",
        acc.exact_acc * 100.0,
        acc.multi_acc * 100.0
    );
}
