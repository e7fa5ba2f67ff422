//! State-variable mining: trace every candidate variable during a
//! calibration run, then keep the ones whose value sets look like protocol
//! states.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::campaign::{traced_values, ConfigError};
use crate::error::FormatError;
use crate::harness::{Target, VarId};
use crate::message::Seed;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VarTrace {
    pub var_id: VarId,
    pub name: String,
    pub value_hits: BTreeMap<i64, u64>,
    pub total_observations: u64,
}

impl VarTrace {
    pub fn new(var_id: VarId, name: impl Into<String>, value_hits: BTreeMap<i64, u64>) -> Self {
        let total_observations = value_hits.values().sum();
        VarTrace {
            var_id,
            name: name.into(),
            value_hits,
            total_observations,
        }
    }

    pub fn unique_values(&self) -> usize {
        self.value_hits.len()
    }

    /// Values seen at least `t` times.
    pub fn retained_values(&self, t: u64) -> usize {
        self.value_hits.values().filter(|&&h| h >= t).count()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterConfig {
    pub min_unique: usize,
    /// Exclusive upper bound on unique values.
    pub max_unique: usize,
    /// Variables with this many raw unique values or more are dropped.
    pub hard_cap: usize,
    /// Values seen fewer times than this are pruned as noise.
    pub hit_threshold: u64,
    pub name_keyword: String,
    /// Names selected whatever their traces look like.
    pub force_include: Vec<String>,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            min_unique: 3,
            max_unique: 10,
            hard_cap: 10_000,
            hit_threshold: 5,
            name_keyword: "state".into(),
            force_include: Vec::new(),
        }
    }
}

/// Fuzzes `target` from `corpus` for `execs` executions with classical
/// mutations only and records every variable after every message.
pub fn calibrate(
    target: Box<dyn Target>,
    corpus: &[Seed],
    execs: u64,
    rng_seed: u64,
) -> Result<Vec<VarTrace>, ConfigError> {
    let names: Vec<&'static str> = target.variables().iter().map(|v| v.name).collect();
    let values = traced_values(target, corpus, execs, rng_seed)?;
    Ok(names
        .into_iter()
        .enumerate()
        .map(|(id, name)| VarTrace::new(id, name, values.get(id).cloned().unwrap_or_default()))
        .collect())
}

/// The lower bound counts values that survive pruning; the upper bounds
/// count every value seen, so a higher threshold can only reject more.
fn passes(t: &VarTrace, cfg: &FilterConfig) -> bool {
    let raw = t.unique_values();
    if raw >= cfg.hard_cap || raw >= cfg.max_unique {
        return false;
    }
    t.retained_values(cfg.hit_threshold) >= cfg.min_unique
}

/// Selected variable ids, best first: names containing the keyword, then
/// fewer retained values, then lower id.
pub fn filter_vars(traces: &[VarTrace], cfg: &FilterConfig) -> Vec<VarId> {
    let mut kept: Vec<(bool, usize, VarId)> = traces
        .iter()
        .filter(|t| passes(t, cfg) || cfg.force_include.contains(&t.name))
        .map(|t| {
            (
                !t.name.contains(cfg.name_keyword.as_str()),
                t.retained_values(cfg.hit_threshold),
                t.var_id,
            )
        })
        .collect();
    kept.sort_unstable();
    kept.dedup_by_key(|k| k.2);
    kept.into_iter().map(|k| k.2).collect()
}

const REPORT_TOP_VALUES: usize = 256;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarSummary {
    pub var_id: VarId,
    pub name: String,
    pub unique_values: usize,
    pub retained_values: usize,
    pub total_observations: u64,
    /// `[value, hits]`, most frequent first, at most 256 entries.
    pub top_values: Vec<(i64, u64)>,
    pub selected: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct VarReport {
    pub variables: Vec<VarSummary>,
    /// `[unique value count, number of variables]`, ascending.
    pub unique_count_histogram: Vec<(usize, usize)>,
    pub selected: Vec<String>,
}

pub fn build_report(traces: &[VarTrace], selection: &[VarId], cfg: &FilterConfig) -> VarReport {
    let mut hist: BTreeMap<usize, usize> = BTreeMap::new();
    let variables = traces
        .iter()
        .map(|t| {
            *hist.entry(t.unique_values()).or_default() += 1;
            let mut top: Vec<(i64, u64)> = t.value_hits.iter().map(|(&v, &h)| (v, h)).collect();
            top.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
            top.truncate(REPORT_TOP_VALUES);
            VarSummary {
                var_id: t.var_id,
                name: t.name.clone(),
                unique_values: t.unique_values(),
                retained_values: t.retained_values(cfg.hit_threshold),
                total_observations: t.total_observations,
                top_values: top,
                selected: selection.contains(&t.var_id),
            }
        })
        .collect();
    let selected = selection
        .iter()
        .filter_map(|id| traces.iter().find(|t| t.var_id == *id))
        .map(|t| t.name.clone())
        .collect();
    VarReport {
        variables,
        unique_count_histogram: hist.into_iter().collect(),
        selected,
    }
}

pub fn emit_report(
    traces: &[VarTrace],
    selection: &[VarId],
    cfg: &FilterConfig,
    path: impl AsRef<Path>,
) -> Result<VarReport, FormatError> {
    let report = build_report(traces, selection, cfg);
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(&report)? + "\n";
    fs::write(path, text).map_err(|e| FormatError::io(path, e))?;
    Ok(report)
}

pub fn load_report(path: impl AsRef<Path>) -> Result<VarReport, FormatError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| FormatError::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}
