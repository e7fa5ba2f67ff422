use std::collections::{BTreeMap, BTreeSet};

use log::{info, warn};

use crate::message::{read_field, FieldSpec, Grammar, Message, Seed};

use super::llm::LlmClient;
use super::prompt::{build_prompt, parse_response};

/// Merges per-message field lists into one.
///
/// Lists are taken in order. A field with the same name and start as a kept
/// one widens it to the longer length; any other field is kept only if it
/// overlaps nothing already kept.
pub fn merge_fields(lists: &[Vec<FieldSpec>]) -> Vec<FieldSpec> {
    let mut kept: Vec<FieldSpec> = Vec::new();
    let overlaps = |kept: &[FieldSpec], f: &FieldSpec, skip: Option<usize>| {
        kept.iter()
            .enumerate()
            .any(|(i, k)| Some(i) != skip && f.bit_start < k.bit_end() && k.bit_start < f.bit_end())
    };
    for list in lists {
        for f in list {
            let same = kept
                .iter()
                .position(|k| k.name == f.name && k.bit_start == f.bit_start);
            match same {
                Some(i) if f.bit_len > kept[i].bit_len => {
                    if !overlaps(&kept, f, Some(i)) {
                        kept[i].bit_len = f.bit_len;
                    }
                }
                Some(_) => {}
                None if !overlaps(&kept, f, None) => kept.push(f.clone()),
                None => {}
            }
        }
    }
    kept.sort_by_key(|f| f.bit_start);
    kept
}

/// For each field, the distinct values it holds in the messages long enough
/// to contain it whole, as right-aligned bytes, sorted.
pub fn harvest_dictionary<'m>(
    fields: &[FieldSpec],
    messages: impl IntoIterator<Item = &'m Message> + Clone,
) -> BTreeMap<String, Vec<Vec<u8>>> {
    let mut dict = BTreeMap::new();
    for f in fields {
        let values: BTreeSet<Vec<u8>> = messages
            .clone()
            .into_iter()
            .filter_map(|m| read_field(m, f).ok())
            .map(|b| b.to_bytes())
            .collect();
        if !values.is_empty() {
            dict.insert(f.name.clone(), values.into_iter().collect());
        }
    }
    dict
}

/// Asks `client` for the layout of each distinct seed message and merges the
/// answers into one grammar. Gives up on a message after `attempts` failed
/// tries; if no message yields fields the grammar is empty.
pub fn learn_grammar<C: LlmClient + ?Sized>(
    client: &mut C,
    protocol: &str,
    seeds: &[Seed],
    attempts: u32,
) -> Grammar {
    let mut distinct: Vec<&Message> = Vec::new();
    for m in seeds.iter().flat_map(|s| &s.messages) {
        if !m.is_empty() && !distinct.contains(&m) {
            distinct.push(m);
        }
    }
    let mut lists = Vec::new();
    for (i, m) in distinct.iter().enumerate() {
        let prompt = build_prompt(protocol, m);
        let parsed = (0..attempts.max(1)).find_map(|attempt| match client.complete(&prompt) {
            Ok(reply) => match parse_response(&reply, m.bit_len()) {
                Ok(fields) => Some(fields),
                Err(e) => {
                    warn!("message {i}, attempt {attempt}: {e}");
                    None
                }
            },
            Err(e) => {
                warn!("message {i}, attempt {attempt}: {e}");
                None
            }
        });
        match parsed {
            Some(fields) => lists.push(fields),
            None => warn!("message {i}: no usable field layout"),
        }
    }
    let fields = merge_fields(&lists);
    if fields.is_empty() {
        warn!("no field layout learned; fuzzing will use classical mutations only");
    } else {
        info!(
            "learned {} fields from {} of {} messages",
            fields.len(),
            lists.len(),
            distinct.len()
        );
    }
    let dictionary = harvest_dictionary(&fields, distinct.iter().copied());
    Grammar {
        protocol: protocol.to_string(),
        fields,
        dictionary,
    }
}
