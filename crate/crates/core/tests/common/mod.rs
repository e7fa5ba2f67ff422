#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::PathBuf;

use statefuzz::grammar::{build_prompt, prompt_key};
use statefuzz::harness::toy_tlv;
use statefuzz::{FieldSpec, Grammar, Message};

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

/// Rewrite shipped fixtures instead of comparing against them.
pub fn regenerate() -> bool {
    std::env::var_os("STATEFUZZ_REGEN_FIXTURES").is_some()
}

/// Field widths in order; a layout of one message section.
type Layout = &'static [(&'static str, usize)];

const HEADER: Layout = &[
    ("id", 16),
    ("qr", 1),
    ("opcode", 4),
    ("aa", 1),
    ("tc", 1),
    ("rd", 1),
    ("ra", 1),
    ("z", 3),
    ("rcode", 4),
    ("qdcount", 16),
    ("ancount", 16),
    ("nscount", 16),
    ("arcount", 16),
];
const HEADER_ID_SPLIT: Layout = &[
    ("id_hi", 8),
    ("id_lo", 8),
    ("qr", 1),
    ("opcode", 4),
    ("aa", 1),
    ("tc", 1),
    ("rd", 1),
    ("ra", 1),
    ("z", 3),
    ("rcode", 4),
    ("qdcount", 16),
    ("ancount", 16),
    ("nscount", 16),
    ("arcount", 16),
];
const HEADER_FLAGS_MISREAD: Layout = &[
    ("id", 16),
    ("flags_a", 3),
    ("flags_b", 10),
    ("flags_c", 3),
    ("qdcount", 16),
    ("ancount", 16),
    ("nscount", 16),
    ("arcount", 16),
];
// qname "\x03ftp\x04test\x02io\x00", 13 bytes
const QUESTION: Layout = &[("qname", 104), ("qtype", 16), ("qclass", 16)];
const QUESTION_LABELS: Layout = &[
    ("label0_len", 8),
    ("label0", 24),
    ("label1", 40),
    ("label2", 24),
    ("root", 8),
    ("qtype", 16),
    ("qclass", 16),
];
const ANSWER: Layout = &[
    ("name", 16),
    ("type", 16),
    ("class", 16),
    ("ttl", 32),
    ("rdlength", 16),
    ("rdata", 32),
];
const ANSWER_TTL_SPLIT: Layout = &[
    ("name", 16),
    ("type", 16),
    ("class", 16),
    ("ttl_hi", 16),
    ("ttl_lo", 16),
    ("rdlength", 16),
    ("rdata", 32),
];

fn lay_out(name: &str, messages: &[&[Layout]]) -> Grammar {
    let mut fields = Vec::new();
    let mut at = 0;
    for (i, sections) in messages.iter().enumerate() {
        for section in *sections {
            for &(f, len) in *section {
                fields.push(FieldSpec::new(format!("m{}.{f}", i + 1), at, len));
                at += len;
            }
        }
    }
    Grammar {
        protocol: name.into(),
        fields,
        dictionary: BTreeMap::new(),
    }
}

/// Ground truth and a hypothesis over four concatenated DNS messages, built
/// so that the hypothesis has 54 exact, 0 merged, 21 split and 6 wrong
/// fields out of 81.
pub fn dns_pair() -> (Grammar, Grammar) {
    let truth = lay_out(
        "dns",
        &[
            &[HEADER, QUESTION],
            &[HEADER, QUESTION, ANSWER],
            &[HEADER, QUESTION, ANSWER],
            &[HEADER, QUESTION],
        ],
    );
    let hypothesis = lay_out(
        "dns",
        &[
            &[HEADER_ID_SPLIT, QUESTION_LABELS],
            &[HEADER, QUESTION_LABELS, ANSWER_TTL_SPLIT],
            &[HEADER_FLAGS_MISREAD, QUESTION_LABELS, ANSWER_TTL_SPLIT],
            &[HEADER_FLAGS_MISREAD, QUESTION],
        ],
    );
    (truth, hypothesis)
}

/// Distinct non-empty messages of the toy-tlv reference seeds.
pub fn tlv_messages() -> Vec<Message> {
    let mut out: Vec<Message> = Vec::new();
    for m in toy_tlv::reference_seeds()
        .into_iter()
        .flat_map(|s| s.messages)
    {
        if !m.is_empty() && !out.contains(&m) {
            out.push(m);
        }
    }
    out
}

/// What a model that reads toy-tlv frames correctly would answer.
pub fn tlv_transcripts() -> BTreeMap<String, String> {
    tlv_messages()
        .iter()
        .map(|m| {
            let fields: Vec<serde_json::Value> = toy_tlv::message_fields(m)
                .iter()
                .map(|f| serde_json::json!({"name": f.name, "bit_start": f.bit_start, "bit_len": f.bit_len}))
                .collect();
            let reply = format!(
                "The message is a fixed header followed by a variable payload.\n```json\n{}\n```\n",
                serde_json::to_string_pretty(&fields).unwrap()
            );
            (prompt_key(&build_prompt("toy-tlv", m)), reply)
        })
        .collect()
}

pub fn ftp_fsm() -> serde_json::Value {
    use statefuzz::harness::toy_ftp::{state_name, SESSION_STATE_NAMES, TRANSITIONS};
    serde_json::json!({
        "target": "toy-ftp",
        "state_variable": "session_state",
        "initial": "INIT",
        "states": SESSION_STATE_NAMES.iter().map(|(_, n)| *n).collect::<Vec<_>>(),
        "transitions": TRANSITIONS
            .iter()
            .map(|&(a, b)| [state_name(a).unwrap(), state_name(b).unwrap()])
            .collect::<Vec<_>>(),
    })
}
