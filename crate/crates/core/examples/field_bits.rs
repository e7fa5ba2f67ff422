//! Reading and writing bit-level fields.

use statefuzz::message::{read_field, write_field, Bits};
use statefuzz::{FieldSpec, Message};

fn main() {
    let m = Message::new(vec![0xA5, 0x3C]);
    let f = FieldSpec::new("nibble", 6, 4);
    let v = read_field(&m, &f).unwrap();
    println!("bits 6..10 of a53c: {v}");

    let w = write_field(&m, &f, &Bits::from_u64(0b1111, 4)).unwrap();
    println!("after writing 1111: {}", hex::encode(w.bytes()));

    let too_far = FieldSpec::new("past_end", 12, 8);
    println!("{}", read_field(&m, &too_far).unwrap_err());
}
