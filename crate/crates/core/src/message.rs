//! Messages, seeds, field grammars and their on-disk formats.
//!
//! Bits are numbered MSB-first: bit 0 is the most significant bit of byte 0,
//! bit 8 the most significant bit of byte 1, and so on. This is the order in
//! which protocol diagrams and packet dissectors draw header fields.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{FieldError, FormatError};
use crate::feedback::StateId;

/// One request sent to the target.
#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct Message(pub Vec<u8>);

impl Message {
    pub fn new(bytes: impl Into<Vec<u8>>) -> Self {
        Message(bytes.into())
    }

    pub fn bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn bit_len(&self) -> usize {
        self.0.len() * 8
    }

    pub fn bit(&self, idx: usize) -> bool {
        self.0[idx / 8] & (0x80 >> (idx % 8)) != 0
    }

    pub fn set_bit(&mut self, idx: usize, value: bool) {
        let mask = 0x80 >> (idx % 8);
        if value {
            self.0[idx / 8] |= mask;
        } else {
            self.0[idx / 8] &= !mask;
        }
    }

    pub fn flip_bit(&mut self, idx: usize) {
        self.0[idx / 8] ^= 0x80 >> (idx % 8);
    }
}

impl fmt::Debug for Message {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.iter().all(|b| b.is_ascii_graphic() || *b == b' ') {
            write!(f, "Message({:?})", String::from_utf8_lossy(&self.0))
        } else {
            write!(f, "Message(0x{})", hex::encode(&self.0))
        }
    }
}

impl From<&[u8]> for Message {
    fn from(b: &[u8]) -> Self {
        Message(b.to_vec())
    }
}

impl From<&str> for Message {
    fn from(s: &str) -> Self {
        Message(s.as_bytes().to_vec())
    }
}

/// Per-seed scheduling statistics.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SeedPerf {
    /// Times the seed was picked as the base of a mutation round.
    pub times_selected: u64,
    /// Interesting test cases derived from this seed.
    pub coverage_gains: u64,
    /// Whether the deterministic stage already ran on this seed.
    pub det_done: bool,
}

/// A corpus entry: a message sequence and the states it visited when last run.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Seed {
    pub messages: Vec<Message>,
    /// One snapshot per delivered message; empty before the first execution.
    pub state_seq: Vec<StateId>,
    pub perf: SeedPerf,
}

impl Seed {
    pub fn new(messages: Vec<Message>) -> Self {
        Seed {
            messages,
            ..Seed::default()
        }
    }

    pub fn from_strs(msgs: &[&str]) -> Self {
        Seed::new(msgs.iter().map(|m| Message::from(*m)).collect())
    }

    pub fn total_bytes(&self) -> usize {
        self.messages.iter().map(Message::len).sum()
    }
}

/// A bit string, most significant bit first.
#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct Bits(pub Vec<bool>);

impl Bits {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// The low `width` bits of `value`.
    pub fn from_u64(value: u64, width: usize) -> Self {
        Bits(
            (0..width)
                .rev()
                .map(|i| i < 64 && (value >> i) & 1 == 1)
                .collect(),
        )
    }

    /// Value of the last (at most) 64 bits.
    pub fn to_u64(&self) -> u64 {
        self.0.iter().fold(0u64, |acc, &b| (acc << 1) | b as u64)
    }

    /// Every bit of `bytes`, MSB-first.
    pub fn from_bytes(bytes: &[u8]) -> Self {
        Bits(
            bytes
                .iter()
                .flat_map(|b| (0..8).map(move |i| b & (0x80 >> i) != 0))
                .collect(),
        )
    }

    /// Right-aligned byte rendering; the leading partial byte is zero-padded.
    pub fn to_bytes(&self) -> Vec<u8> {
        let pad = (8 - self.0.len() % 8) % 8;
        let mut out = Vec::with_capacity((self.0.len() + pad) / 8);
        let mut acc = 0u8;
        for (i, &b) in std::iter::repeat_n(&false, pad)
            .chain(self.0.iter())
            .enumerate()
        {
            acc = (acc << 1) | b as u8;
            if i % 8 == 7 {
                out.push(acc);
                acc = 0;
            }
        }
        out
    }

    /// Fit to `width` bits: excess high-order bits are dropped, missing ones
    /// are zero-filled at the high-order end.
    pub fn fit(&self, width: usize) -> Bits {
        let n = self.0.len();
        if n >= width {
            Bits(self.0[n - width..].to_vec())
        } else {
            let mut v = vec![false; width - n];
            v.extend_from_slice(&self.0);
            Bits(v)
        }
    }
}

impl fmt::Display for Bits {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.0 {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl fmt::Debug for Bits {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Bits({self})")
    }
}

impl FromStr for Bits {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(format!("not a bit: {other:?}")),
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Bits)
    }
}

/// A named bit range within a message.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FieldSpec {
    pub name: String,
    pub bit_start: usize,
    pub bit_len: usize,
}

impl FieldSpec {
    pub fn new(name: impl Into<String>, bit_start: usize, bit_len: usize) -> Self {
        FieldSpec {
            name: name.into(),
            bit_start,
            bit_len,
        }
    }

    pub fn bit_end(&self) -> usize {
        self.bit_start + self.bit_len
    }

    fn check(&self, m: &Message) -> Result<(), FieldError> {
        if self.bit_end() > m.bit_len() {
            return Err(FieldError::OutOfRange {
                bit_start: self.bit_start,
                bit_len: self.bit_len,
                msg_bits: m.bit_len(),
            });
        }
        Ok(())
    }
}

/// Bits `[bit_start, bit_start + bit_len)` of `m`.
pub fn read_field(m: &Message, f: &FieldSpec) -> Result<Bits, FieldError> {
    f.check(m)?;
    Ok(Bits((f.bit_start..f.bit_end()).map(|i| m.bit(i)).collect()))
}

/// Copy of `m` with the field's bits replaced by `v`.
pub fn write_field(m: &Message, f: &FieldSpec, v: &Bits) -> Result<Message, FieldError> {
    f.check(m)?;
    if v.len() != f.bit_len {
        return Err(FieldError::LengthMismatch {
            expected: f.bit_len,
            got: v.len(),
        });
    }
    let mut out = m.clone();
    for (i, &b) in v.0.iter().enumerate() {
        out.set_bit(f.bit_start + i, b);
    }
    Ok(out)
}

/// Field layout and value dictionary for one protocol.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Grammar {
    pub protocol: String,
    /// Sorted by `bit_start`, non-overlapping once validated.
    pub fields: Vec<FieldSpec>,
    /// Candidate values per field name, stored as right-aligned bytes.
    pub dictionary: BTreeMap<String, Vec<Vec<u8>>>,
}

impl Grammar {
    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    pub fn dictionary_for(&self, name: &str) -> &[Vec<u8>] {
        self.dictionary.get(name).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn to_json(&self) -> String {
        let file = GrammarFile {
            protocol: self.protocol.clone(),
            fields: self.fields.clone(),
            dictionary: self
                .dictionary
                .iter()
                .map(|(k, vs)| (k.clone(), vs.iter().map(hex::encode).collect()))
                .collect(),
        };
        let mut s = serde_json::to_string_pretty(&file).expect("grammar serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, FormatError> {
        let file: GrammarFile = serde_json::from_str(text)?;
        let mut dictionary = BTreeMap::new();
        for (name, values) in file.dictionary {
            let decoded = values
                .iter()
                .map(|h| {
                    hex::decode(h.trim_start_matches("0x")).map_err(|e| {
                        FormatError::InvalidGrammar(format!("dictionary[{name}]: {h:?}: {e}"))
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            dictionary.insert(name, decoded);
        }
        if let Some(f) = file.fields.iter().find(|f| f.bit_len == 0) {
            return Err(FormatError::InvalidGrammar(format!(
                "field {:?} has zero bit_len",
                f.name
            )));
        }
        Ok(Grammar {
            protocol: file.protocol,
            fields: file.fields,
            dictionary,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct GrammarFile {
    protocol: String,
    fields: Vec<FieldSpec>,
    #[serde(default)]
    dictionary: BTreeMap<String, Vec<String>>,
}

pub fn load_grammar(path: impl AsRef<Path>) -> Result<Grammar, FormatError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| FormatError::io(path, e))?;
    Grammar::from_json(&text)
}

pub fn save_grammar(g: &Grammar, path: impl AsRef<Path>) -> Result<(), FormatError> {
    let path = path.as_ref();
    fs::write(path, g.to_json()).map_err(|e| FormatError::io(path, e))
}

pub const CORPUS_MAGIC: &[u8; 4] = b"APFZ";
pub const CORPUS_VERSION: u8 = 0x01;

pub fn encode_corpus(seeds: &[Seed]) -> Vec<u8> {
    let mut out = Vec::with_capacity(9 + seeds.iter().map(|s| s.total_bytes() + 8).sum::<usize>());
    out.extend_from_slice(CORPUS_MAGIC);
    out.push(CORPUS_VERSION);
    out.extend_from_slice(&(seeds.len() as u32).to_le_bytes());
    for seed in seeds {
        out.extend_from_slice(&(seed.messages.len() as u32).to_le_bytes());
        for m in &seed.messages {
            out.extend_from_slice(&(m.len() as u32).to_le_bytes());
            out.extend_from_slice(m.bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], FormatError> {
        if self.buf.len() - self.pos < n {
            return Err(FormatError::Truncated(self.pos));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize, FormatError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }
}

pub fn decode_corpus(buf: &[u8]) -> Result<Vec<Seed>, FormatError> {
    if buf.len() < 4 || &buf[..4] != CORPUS_MAGIC {
        return Err(FormatError::BadMagic);
    }
    let mut r = Reader { buf, pos: 4 };
    let version = r.take(1)?[0];
    if version != CORPUS_VERSION {
        return Err(FormatError::VersionMismatch(version));
    }
    let n_seeds = r.u32()?;
    // Counts are untrusted; cap preallocation by what the buffer could hold.
    let mut seeds = Vec::with_capacity(n_seeds.min(buf.len() / 4));
    for _ in 0..n_seeds {
        let n_msgs = r.u32()?;
        let mut messages = Vec::with_capacity(n_msgs.min(buf.len() / 4));
        for _ in 0..n_msgs {
            let len = r.u32()?;
            messages.push(Message(r.take(len)?.to_vec()));
        }
        seeds.push(Seed::new(messages));
    }
    if r.pos != buf.len() {
        return Err(FormatError::TrailingBytes(r.pos));
    }
    Ok(seeds)
}

/// Reads a corpus file, or every corpus file (sorted by name) in a directory.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Vec<Seed>, FormatError> {
    let path = path.as_ref();
    if path.is_dir() {
        let mut entries = fs::read_dir(path)
            .map_err(|e| FormatError::io(path, e))?
            .filter_map(Result::ok)
            .map(|e| e.path())
            .filter(|p| p.is_file())
            .collect::<Vec<_>>();
        entries.sort();
        let mut seeds = Vec::new();
        for p in entries {
            let buf = fs::read(&p).map_err(|e| FormatError::io(&p, e))?;
            if buf.starts_with(CORPUS_MAGIC) {
                seeds.extend(decode_corpus(&buf)?);
            }
        }
        return Ok(seeds);
    }
    let buf = fs::read(path).map_err(|e| FormatError::io(path, e))?;
    decode_corpus(&buf)
}

pub fn save_corpus(seeds: &[Seed], path: impl AsRef<Path>) -> Result<(), FormatError> {
    let path = path.as_ref();
    fs::write(path, encode_corpus(seeds)).map_err(|e| FormatError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bits(s: &str) -> Bits {
        s.parse().unwrap()
    }

    #[test]
    fn read_low_nibble() {
        let m = Message::new([0x0F]);
        assert_eq!(
            read_field(&m, &FieldSpec::new("f", 4, 4)).unwrap(),
            bits("1111")
        );
    }

    #[test]
    fn read_msb() {
        let m = Message::new([0x80]);
        assert_eq!(
            read_field(&m, &FieldSpec::new("f", 0, 1)).unwrap(),
            bits("1")
        );
    }

    #[test]
    fn read_across_byte_boundary() {
        // 1010_0101 0011_1100, bits 6..10
        let m = Message::new([0xA5, 0x3C]);
        assert_eq!(
            read_field(&m, &FieldSpec::new("f", 6, 4)).unwrap(),
            bits("0100")
        );
    }

    #[test]
    fn read_out_of_range() {
        let m = Message::new([0xA5]);
        assert!(matches!(
            read_field(&m, &FieldSpec::new("f", 4, 5)),
            Err(FieldError::OutOfRange { .. })
        ));
    }

    #[test]
    fn write_examples() {
        let f = FieldSpec::new("f", 4, 4);
        assert_eq!(
            write_field(&Message::new([0x00]), &f, &bits("1111")).unwrap(),
            Message::new([0x0F])
        );
        assert_eq!(
            write_field(
                &Message::new([0xFF]),
                &FieldSpec::new("f", 0, 8),
                &bits("00000000")
            )
            .unwrap(),
            Message::new([0x00])
        );
    }

    #[test]
    fn write_errors() {
        let m = Message::new([0x00]);
        assert_eq!(
            write_field(&m, &FieldSpec::new("f", 0, 4), &bits("111")),
            Err(FieldError::LengthMismatch {
                expected: 4,
                got: 3
            })
        );
        assert!(matches!(
            write_field(&m, &FieldSpec::new("f", 6, 4), &bits("1111")),
            Err(FieldError::OutOfRange { .. })
        ));
    }

    #[test]
    fn bits_fit_truncates_and_pads_high_end() {
        assert_eq!(bits("110101").fit(4), bits("0101"));
        assert_eq!(bits("11").fit(4), bits("0011"));
        assert_eq!(Bits::from_bytes(&[0x00, 0x01]).fit(16).to_u64(), 1);
    }

    #[test]
    fn bits_bytes_right_aligned() {
        assert_eq!(bits("101").to_bytes(), vec![0x05]);
        assert_eq!(bits("1000000001").to_bytes(), vec![0x02, 0x01]);
        assert_eq!(Bits::from_u64(0x4D5A, 16).to_bytes(), vec![0x4D, 0x5A]);
    }

    #[test]
    fn empty_corpus() {
        let buf = encode_corpus(&[]);
        assert_eq!(buf, b"APFZ\x01\x00\x00\x00\x00");
        assert!(decode_corpus(&buf).unwrap().is_empty());
    }

    #[test]
    fn ftp_seed_round_trip() {
        let seeds = vec![Seed::from_strs(&["USER a\r\n", "PASS b\r\n"])];
        let buf = encode_corpus(&seeds);
        let back = decode_corpus(&buf).unwrap();
        assert_eq!(back, seeds);
        assert_eq!(encode_corpus(&back), buf);
    }

    #[test]
    fn corpus_errors() {
        assert!(matches!(decode_corpus(b"APF"), Err(FormatError::BadMagic)));
        assert!(matches!(
            decode_corpus(b"XPFZ\x01"),
            Err(FormatError::BadMagic)
        ));
        assert!(matches!(
            decode_corpus(b"APFZ\x02\0\0\0\0"),
            Err(FormatError::VersionMismatch(2))
        ));
        // one seed, one message claiming 10 bytes but carrying 2
        let mut buf = b"APFZ\x01".to_vec();
        buf.extend_from_slice(&1u32.to_le_bytes());
        buf.extend_from_slice(&1u32.to_le_bytes());
        buf.extend_from_slice(&10u32.to_le_bytes());
        buf.extend_from_slice(b"ab");
        assert!(matches!(
            decode_corpus(&buf),
            Err(FormatError::Truncated(17))
        ));
        // declared seed count exceeding the file
        let mut buf = b"APFZ\x01".to_vec();
        buf.extend_from_slice(&1000u32.to_le_bytes());
        assert!(matches!(
            decode_corpus(&buf),
            Err(FormatError::Truncated(_))
        ));
    }

    #[test]
    fn grammar_json_round_trip() {
        let mut g = Grammar {
            protocol: "toy".into(),
            fields: vec![
                FieldSpec::new("magic", 0, 16),
                FieldSpec::new("type", 16, 8),
            ],
            ..Grammar::default()
        };
        g.dictionary.insert("magic".into(), vec![vec![0x4D, 0x5A]]);
        let back = Grammar::from_json(&g.to_json()).unwrap();
        assert_eq!(back, g);
        assert!(g.to_json().contains("\"4d5a\""));
    }

    #[test]
    fn grammar_rejects_zero_length_field() {
        let text = r#"{"protocol":"p","fields":[{"name":"x","bit_start":0,"bit_len":0}]}"#;
        assert!(matches!(
            Grammar::from_json(text),
            Err(FormatError::InvalidGrammar(_))
        ));
    }
}
