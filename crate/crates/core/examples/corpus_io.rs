//! Round-trips a corpus through the binary corpus format.

use statefuzz::harness::toy_ftp;
use statefuzz::message::{decode_corpus, encode_corpus};

fn main() {
    let seeds = toy_ftp::reference_seeds();
    let buf = encode_corpus(&seeds);
    println!(
        "{} seeds encode to {} bytes, magic {:?}",
        seeds.len(),
        buf.len(),
        String::from_utf8_lossy(&buf[..4])
    );

    let back = decode_corpus(&buf).unwrap();
    assert_eq!(back, seeds);
    for (i, s) in back.iter().enumerate() {
        println!(
            "seed {i}: {} messages, {} bytes",
            s.messages.len(),
            s.total_bytes()
        );
    }

    println!(
        "truncated: {}",
        decode_corpus(&buf[..buf.len() - 1]).unwrap_err()
    );
}
