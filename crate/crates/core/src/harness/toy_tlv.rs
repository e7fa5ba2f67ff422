//! A binary type-length-value server.
//!
//! Header: magic (16 bits, 0x4D5A), type (8 bits), length (16 bits, big
//! endian), then the payload. Anything with a wrong magic is dropped before
//! type dispatch. A STATUS message whose declared length overruns its payload
//! faults, but only once a HELLO has established the connection.

use crate::feedback::StateValue;
use crate::grammar::{harvest_dictionary, merge_fields};
use crate::message::{FieldSpec, Grammar, Message};

use super::{Fault, Probe, Response, Target, VarDecl};

pub const MAGIC: u16 = 0x4D5A;
pub const HEADER_LEN: usize = 5;

pub const T_HELLO: u8 = 0x48;
pub const T_DATA: u8 = 0x64;
pub const T_STATUS: u8 = 0x07;
pub const T_BYE: u8 = 0xB0;

pub const INIT: i64 = 0;
pub const ESTABLISHED: i64 = 1;
pub const CLOSED: i64 = 2;

pub const CONN_STATE_NAMES: &[(i64, &str)] = &[
    (INIT, "INIT"),
    (ESTABLISHED, "ESTABLISHED"),
    (CLOSED, "CLOSED"),
];

const VERSION_PREFIX: &[u8] = b"TLV1";

static VARS: [VarDecl; 5] = [
    VarDecl {
        name: "conn_state",
        value_names: CONN_STATE_NAMES,
    },
    VarDecl::plain("last_type"),
    VarDecl::plain("data_bytes"),
    VarDecl::plain("error_count"),
    VarDecl::plain("protocol_rev"),
];

mod block {
    pub const ENTRY: u16 = 0;
    pub const SHORT: u16 = 1;
    pub const BAD_MAGIC: u16 = 2;
    pub const DISPATCH: u16 = 3;
    pub const UNKNOWN: u16 = 4;
    pub const LEN_MISMATCH: u16 = 5;
    pub const NOT_ESTABLISHED: u16 = 6;
    pub const HELLO: u16 = 10;
    pub const HELLO_OK: u16 = 11;
    pub const HELLO_BAD_VERSION: u16 = 12;
    pub const HELLO_AGAIN: u16 = 13;
    pub const DATA: u16 = 20;
    pub const DATA_BYTE: u16 = 21;
    pub const DATA_EMPTY: u16 = 22;
    pub const STATUS: u16 = 30;
    pub const STATUS_PRE: u16 = 31;
    pub const STATUS_OK: u16 = 32;
    pub const BYE: u16 = 40;
}

#[derive(Clone, Debug)]
pub struct ToyTlv {
    state: i64,
    last_type: i64,
    data_bytes: i64,
    error_count: i64,
    checksum: u32,
}

impl Default for ToyTlv {
    fn default() -> Self {
        Self::new()
    }
}

/// Encodes one message with a correct header.
pub fn frame(ty: u8, payload: &[u8]) -> Message {
    frame_with_len(ty, payload.len() as u16, payload)
}

/// Encodes one message with an arbitrary declared length.
pub fn frame_with_len(ty: u8, len: u16, payload: &[u8]) -> Message {
    let mut b = Vec::with_capacity(HEADER_LEN + payload.len());
    b.extend_from_slice(&MAGIC.to_be_bytes());
    b.push(ty);
    b.extend_from_slice(&len.to_be_bytes());
    b.extend_from_slice(payload);
    Message::new(b)
}

impl ToyTlv {
    pub fn new() -> Self {
        ToyTlv {
            state: INIT,
            last_type: -1,
            data_bytes: 0,
            error_count: 0,
            checksum: 0,
        }
    }

    fn error(&mut self, text: &str) -> Result<Response, Fault> {
        self.error_count += 1;
        Ok(Response::reply(text))
    }
}

impl Target for ToyTlv {
    fn name(&self) -> &str {
        "toy-tlv"
    }

    fn variables(&self) -> &[VarDecl] {
        &VARS
    }

    fn reset(&mut self) {
        *self = ToyTlv::new();
    }

    fn handle(&mut self, msg: &[u8], p: &mut Probe<'_>) -> Result<Response, Fault> {
        p.hit(block::ENTRY)?;
        if msg.len() < HEADER_LEN {
            p.hit(block::SHORT)?;
            return self.error("short");
        }
        if u16::from_be_bytes([msg[0], msg[1]]) != MAGIC {
            p.hit(block::BAD_MAGIC)?;
            return self.error("bad magic");
        }
        p.hit(block::DISPATCH)?;
        let ty = msg[2];
        let declared = u16::from_be_bytes([msg[3], msg[4]]) as usize;
        let payload = &msg[HEADER_LEN..];
        self.last_type = ty as i64;
        match ty {
            T_HELLO => {
                p.hit(block::HELLO)?;
                if declared != payload.len() {
                    p.hit(block::LEN_MISMATCH)?;
                    return self.error("length mismatch");
                }
                if !payload.starts_with(VERSION_PREFIX) {
                    p.hit(block::HELLO_BAD_VERSION)?;
                    return self.error("unsupported version");
                }
                if self.state == INIT {
                    p.hit(block::HELLO_OK)?;
                    self.state = ESTABLISHED;
                } else {
                    p.hit(block::HELLO_AGAIN)?;
                }
                Ok(Response::reply("welcome"))
            }
            T_DATA => {
                p.hit(block::DATA)?;
                if self.state != ESTABLISHED {
                    p.hit(block::NOT_ESTABLISHED)?;
                    return self.error("not established");
                }
                if declared != payload.len() {
                    p.hit(block::LEN_MISMATCH)?;
                    return self.error("length mismatch");
                }
                if payload.is_empty() {
                    p.hit(block::DATA_EMPTY)?;
                }
                for &b in payload {
                    p.hit(block::DATA_BYTE)?;
                    self.checksum = self.checksum.rotate_left(5) ^ b as u32;
                }
                self.data_bytes += payload.len() as i64;
                Ok(Response::reply("ack"))
            }
            T_STATUS => {
                p.hit(block::STATUS)?;
                if self.state != ESTABLISHED {
                    p.hit(block::STATUS_PRE)?;
                    return Ok(Response::reply("idle"));
                }
                if declared > payload.len() {
                    // reads `declared` bytes of a shorter buffer
                    return Err(Fault::Crash("len_confusion"));
                }
                p.hit(block::STATUS_OK)?;
                Ok(Response::reply(&format!("ok {:08x}", self.checksum)))
            }
            T_BYE => {
                p.hit(block::BYE)?;
                self.state = CLOSED;
                Ok(Response::closing("bye"))
            }
            _ => {
                p.hit(block::UNKNOWN)?;
                self.error("unknown type")
            }
        }
    }

    fn read_vars(&self) -> Vec<StateValue> {
        vec![
            Some(self.state),
            Some(self.last_type),
            Some(self.data_bytes),
            Some(self.error_count),
            Some(1),
        ]
    }
}

/// Reference session: handshake, one bulk transfer, goodbye; plus a lone
/// status probe sent before any handshake.
pub fn reference_seeds() -> Vec<crate::message::Seed> {
    use crate::message::Seed;
    let bulk: Vec<u8> = b"abcdefghijklmnopqrstuvwxyz0123456789"
        .iter()
        .copied()
        .cycle()
        .take(1024)
        .collect();
    vec![
        Seed::new(vec![
            frame(T_HELLO, b"TLV1-cli"),
            frame(T_DATA, &bulk),
            frame(T_BYE, b"session complete"),
        ]),
        Seed::new(vec![frame(T_STATUS, b"ping")]),
    ]
}

/// The true field layout of one well-formed message.
pub fn message_fields(m: &Message) -> Vec<FieldSpec> {
    let mut fields = vec![
        FieldSpec::new("magic", 0, 16),
        FieldSpec::new("type", 16, 8),
        FieldSpec::new("length", 24, 16),
    ];
    if m.len() > HEADER_LEN {
        fields.push(FieldSpec::new(
            "payload",
            8 * HEADER_LEN,
            8 * (m.len() - HEADER_LEN),
        ));
    }
    fields
}

/// Grammar of the reference seeds: every message's true layout merged, with
/// the values each field takes in them.
pub fn ground_truth_grammar() -> Grammar {
    let seeds = reference_seeds();
    let messages: Vec<&Message> = seeds.iter().flat_map(|s| &s.messages).collect();
    let lists: Vec<Vec<FieldSpec>> = messages.iter().map(|m| message_fields(m)).collect();
    let fields = merge_fields(&lists);
    let dictionary = harvest_dictionary(&fields, messages.iter().copied());
    Grammar {
        protocol: "toy-tlv".into(),
        fields,
        dictionary,
    }
}
