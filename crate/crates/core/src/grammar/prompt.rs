use log::warn;
use serde::Deserialize;
use thiserror::Error;

use crate::message::{FieldSpec, Message};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("no JSON array of fields found in response")]
    NoParse,
}

/// Labeled example shown to the model before the real message.
const EXAMPLE_MESSAGE: [u8; 12] = [
    0x01, 0x80, 0x01, 0x02, 0x00, 0x04, b'p', b'i', b'n', b'g', 0xBE, 0xEF,
];
const EXAMPLE_ANSWER: &str = r#"[{"name":"version","bit_start":0,"bit_len":8},{"name":"flags","bit_start":8,"bit_len":8},{"name":"msg_id","bit_start":16,"bit_len":16},{"name":"length","bit_start":32,"bit_len":16},{"name":"payload","bit_start":48,"bit_len":32},{"name":"checksum","bit_start":80,"bit_len":16}]"#;

/// `m` as a string of '0' and '1', most significant bit first.
pub fn bit_string(m: &[u8]) -> String {
    m.iter().map(|b| format!("{b:08b}")).collect()
}

pub fn build_prompt(protocol_name: &str, message: &Message) -> String {
    format!(
        "You are an expert in network protocol reverse engineering. You split a \
binary message into its fields.\n\
\n\
Protocol: {protocol_name}\n\
\n\
Example input ({ex_bits} bits):\n\
{ex}\n\
Example output:\n\
{EXAMPLE_ANSWER}\n\
\n\
Input ({bits} bits):\n\
{msg}\n\
\n\
Answer with a JSON array only. Each element is an object with keys \"name\", \
\"bit_start\" and \"bit_len\". Bit 0 is the most significant bit of the first \
byte. Fields must not overlap.\n",
        ex_bits = EXAMPLE_MESSAGE.len() * 8,
        ex = bit_string(&EXAMPLE_MESSAGE),
        bits = message.bit_len(),
        msg = bit_string(message.bytes()),
    )
}

#[derive(Deserialize)]
struct RawField {
    name: serde_json::Value,
    bit_start: i64,
    bit_len: i64,
}

fn first_array(text: &str) -> Option<Vec<serde_json::Value>> {
    for (i, _) in text.match_indices('[') {
        let mut it =
            serde_json::Deserializer::from_str(&text[i..]).into_iter::<serde_json::Value>();
        if let Some(Ok(serde_json::Value::Array(items))) = it.next() {
            if !items.is_empty() && items.iter().all(|v| v.is_object()) {
                return Some(items);
            }
        }
    }
    None
}

/// Extracts the field list from a model reply for a message of `msg_bits`
/// bits. Invalid, overlapping and out-of-range entries are dropped.
pub fn parse_response(text: &str, msg_bits: usize) -> Result<Vec<FieldSpec>, ParseError> {
    let items = first_array(text).ok_or(ParseError::NoParse)?;
    let mut fields: Vec<FieldSpec> = Vec::new();
    for item in items {
        let raw: RawField = match serde_json::from_value(item) {
            Ok(r) => r,
            Err(e) => {
                warn!("dropping malformed field entry: {e}");
                continue;
            }
        };
        if raw.bit_start < 0 || raw.bit_len < 1 {
            warn!(
                "dropping field with start {} and length {}",
                raw.bit_start, raw.bit_len
            );
            continue;
        }
        let name = match raw.name {
            serde_json::Value::String(s) => s,
            other => other.to_string(),
        };
        fields.push(FieldSpec::new(
            name,
            raw.bit_start as usize,
            raw.bit_len as usize,
        ));
    }
    fields.sort_by_key(|f| (f.bit_start, f.bit_len));
    let mut kept: Vec<FieldSpec> = Vec::with_capacity(fields.len());
    for f in fields {
        if f.bit_end() > msg_bits {
            warn!(
                "dropping field {:?}: ends at bit {} of {msg_bits}",
                f.name,
                f.bit_end()
            );
        } else if kept.last().is_some_and(|k| f.bit_start < k.bit_end()) {
            warn!("dropping field {:?}: overlaps an earlier field", f.name);
        } else {
            kept.push(f);
        }
    }
    if kept.is_empty() {
        return Err(ParseError::NoParse);
    }
    Ok(kept)
}
