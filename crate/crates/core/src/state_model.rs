//! The inferred protocol state machine.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use indexmap::{IndexMap, IndexSet};
use serde::Serialize;

use crate::error::FormatError;
use crate::feedback::StateId;

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct VertexStats {
    pub hits: u64,
    pub times_selected: u64,
    pub coverage_gains: u64,
}

/// Names used when rendering state tuples.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct StateSchema {
    pub var_names: Vec<String>,
    /// Per variable, symbolic names for known values.
    pub value_names: Vec<BTreeMap<i64, String>>,
}

impl StateSchema {
    pub fn render(&self, s: &StateId) -> String {
        let mut out = String::new();
        for (i, v) in s.0.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            match self.var_names.get(i) {
                Some(n) => {
                    let _ = write!(out, "{n}=");
                }
                None => {
                    let _ = write!(out, "v{i}=");
                }
            }
            match v {
                None => out.push_str("UNSET"),
                Some(v) => match self.value_names.get(i).and_then(|m| m.get(v)) {
                    Some(name) => out.push_str(name),
                    None => {
                        let _ = write!(out, "{v}");
                    }
                },
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ModelDelta {
    pub new_vertices: usize,
    pub new_edges: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct ModelStats {
    pub n_vertices: usize,
    pub n_edges: usize,
}

/// Directed graph of observed states and transitions.
///
/// Vertices and edges keep insertion order so every traversal is
/// deterministic. Edges are stored as pairs of vertex indices.
#[derive(Clone, Debug)]
pub struct StateModel {
    initial: StateId,
    vertices: IndexMap<StateId, VertexStats>,
    edges: IndexMap<(usize, usize), u64>,
    schema: StateSchema,
}

impl StateModel {
    /// `initial` is the snapshot taken right after the target is reset.
    pub fn new(initial: StateId) -> Self {
        StateModel {
            initial,
            vertices: IndexMap::new(),
            edges: IndexMap::new(),
            schema: StateSchema::default(),
        }
    }

    pub fn with_schema(mut self, schema: StateSchema) -> Self {
        self.schema = schema;
        self
    }

    pub fn schema(&self) -> &StateSchema {
        &self.schema
    }

    /// The reset state, once any execution has been recorded.
    pub fn initial(&self) -> Option<&StateId> {
        self.vertices.get_key_value(&self.initial).map(|(k, _)| k)
    }

    pub fn initial_state(&self) -> &StateId {
        &self.initial
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn contains(&self, s: &StateId) -> bool {
        self.vertices.contains_key(s)
    }

    pub fn contains_edge(&self, from: &StateId, to: &StateId) -> bool {
        match (
            self.vertices.get_index_of(from),
            self.vertices.get_index_of(to),
        ) {
            (Some(a), Some(b)) => self.edges.contains_key(&(a, b)),
            _ => false,
        }
    }

    pub fn vertex(&self, s: &StateId) -> Option<&VertexStats> {
        self.vertices.get(s)
    }

    pub fn vertex_mut(&mut self, s: &StateId) -> Option<&mut VertexStats> {
        self.vertices.get_mut(s)
    }

    pub fn vertices(&self) -> impl Iterator<Item = (&StateId, &VertexStats)> {
        self.vertices.iter()
    }

    pub fn edges(&self) -> impl Iterator<Item = (&StateId, &StateId, u64)> {
        self.edges.iter().map(|(&(a, b), &h)| {
            (
                self.vertices.get_index(a).unwrap().0,
                self.vertices.get_index(b).unwrap().0,
                h,
            )
        })
    }

    pub fn edge_hits(&self, from: &StateId, to: &StateId) -> Option<u64> {
        let a = self.vertices.get_index_of(from)?;
        let b = self.vertices.get_index_of(to)?;
        self.edges.get(&(a, b)).copied()
    }

    fn intern(&mut self, s: &StateId, delta: &mut ModelDelta) -> usize {
        if let Some(i) = self.vertices.get_index_of(s) {
            return i;
        }
        delta.new_vertices += 1;
        self.vertices
            .insert_full(s.clone(), VertexStats::default())
            .0
    }

    /// Records one execution's state sequence, starting from the reset state.
    ///
    /// Every execution visits the initial vertex once (implicitly, before the
    /// first message), and each listed state once per occurrence.
    pub fn update(&mut self, state_seq: &[StateId]) -> ModelDelta {
        let mut delta = ModelDelta::default();
        if state_seq.is_empty() {
            return delta;
        }
        let initial = self.initial.clone();
        let mut prev = self.intern(&initial, &mut delta);
        self.vertices[prev].hits += 1;
        for s in state_seq {
            let cur = self.intern(s, &mut delta);
            self.vertices[cur].hits += 1;
            let hits = self.edges.entry((prev, cur)).or_insert_with(|| {
                delta.new_edges += 1;
                0
            });
            *hits += 1;
            prev = cur;
        }
        delta
    }

    pub fn stats(&self) -> ModelStats {
        ModelStats {
            n_vertices: self.vertices.len(),
            n_edges: self.edges.len(),
        }
    }

    pub fn label(&self, s: &StateId) -> String {
        if self.schema.var_names.is_empty() {
            s.to_string()
        } else {
            self.schema.render(s)
        }
    }

    /// Directed graph in DOT syntax; nodes and edges sorted by label.
    pub fn to_dot(&self) -> String {
        let mut labels: Vec<(String, &StateId)> =
            self.vertices.keys().map(|s| (self.label(s), s)).collect();
        labels.sort();
        let node_of: BTreeMap<&StateId, usize> = labels
            .iter()
            .enumerate()
            .map(|(i, (_, s))| (*s, i))
            .collect();

        let mut out = String::from("digraph state_model {\n");
        out.push_str("    rankdir=LR;\n    node [shape=ellipse];\n");
        for (i, (label, s)) in labels.iter().enumerate() {
            let shape = if **s == self.initial {
                ", shape=doublecircle"
            } else {
                ""
            };
            let _ = writeln!(out, "    s{i} [label=\"{}\"{shape}];", escape(label));
        }
        let mut edges: Vec<(usize, usize, u64)> = self
            .edges()
            .map(|(a, b, h)| (node_of[a], node_of[b], h))
            .collect();
        edges.sort();
        for (a, b, h) in edges {
            let _ = writeln!(out, "    s{a} -> s{b} [label=\"{h}\"];");
        }
        out.push_str("}\n");
        out
    }

    pub fn export_dot(&self, path: impl AsRef<Path>) -> Result<(), FormatError> {
        let path = path.as_ref();
        fs::write(path, self.to_dot()).map_err(|e| FormatError::io(path, e))
    }

    pub fn to_stats_json(&self) -> serde_json::Value {
        #[derive(Serialize)]
        struct PerState {
            state: String,
            #[serde(flatten)]
            stats: VertexStats,
        }
        #[derive(Serialize)]
        struct Transition {
            from: String,
            to: String,
            hits: u64,
        }
        let mut per_state: Vec<PerState> = self
            .vertices
            .iter()
            .map(|(s, v)| PerState {
                state: self.label(s),
                stats: v.clone(),
            })
            .collect();
        per_state.sort_by(|a, b| a.state.cmp(&b.state));
        let mut transitions: Vec<Transition> = self
            .edges()
            .map(|(a, b, hits)| Transition {
                from: self.label(a),
                to: self.label(b),
                hits,
            })
            .collect();
        transitions.sort_by(|a, b| (&a.from, &a.to).cmp(&(&b.from, &b.to)));
        serde_json::json!({
            "vertices": self.vertices.len(),
            "edges": self.edges.len(),
            "initial": self.label(&self.initial),
            "per_state": per_state,
            "transitions": transitions,
        })
    }

    pub fn export_stats_json(&self, path: impl AsRef<Path>) -> Result<(), FormatError> {
        let path = path.as_ref();
        let mut text = serde_json::to_string_pretty(&self.to_stats_json())?;
        text.push('\n');
        fs::write(path, text).map_err(|e| FormatError::io(path, e))
    }

    /// Set of `(from, to)` edges, for comparisons in tests and reports.
    pub fn edge_set(&self) -> IndexSet<(StateId, StateId)> {
        self.edges()
            .map(|(a, b, _)| (a.clone(), b.clone()))
            .collect()
    }
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}
