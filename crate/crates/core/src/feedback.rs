//! Code-coverage and state feedback, and the interestingness gate.

use std::fmt;

use crate::state_model::StateModel;

/// Number of 8-bit edge counters in a coverage map.
pub const MAP_SIZE: usize = 1 << 16;

/// AFL-style edge-hit bitmap for one execution.
#[derive(Clone, PartialEq, Eq)]
pub struct CoverageMap {
    bits: Box<[u8]>,
    prev_location: u32,
}

impl Default for CoverageMap {
    fn default() -> Self {
        Self::new()
    }
}

impl fmt::Debug for CoverageMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoverageMap")
            .field("edges", &self.count_nonzero())
            .field("prev_location", &self.prev_location)
            .finish()
    }
}

/// Edge index for the transition `prev -> cur`.
#[inline]
pub fn edge_index(prev: u32, cur: u32) -> usize {
    ((cur ^ (prev >> 1)) as usize) & (MAP_SIZE - 1)
}

impl CoverageMap {
    pub fn new() -> Self {
        CoverageMap {
            bits: vec![0u8; MAP_SIZE].into_boxed_slice(),
            prev_location: 0,
        }
    }

    #[inline]
    pub fn record_edge(&mut self, cur: u32) {
        let idx = edge_index(self.prev_location, cur);
        self.bits[idx] = self.bits[idx].saturating_add(1);
        self.prev_location = cur;
    }

    pub fn prev_location(&self) -> u32 {
        self.prev_location
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.bits
    }

    pub fn count_nonzero(&self) -> usize {
        self.bits.iter().filter(|&&c| c != 0).count()
    }

    pub fn is_empty(&self) -> bool {
        self.nonzero().next().is_none()
    }

    /// `(index, count)` for every touched counter, skipping empty words.
    pub fn nonzero(&self) -> impl Iterator<Item = (usize, u8)> + '_ {
        self.bits
            .chunks_exact(8)
            .enumerate()
            .filter(|(_, w)| u64::from_ne_bytes((*w).try_into().unwrap()) != 0)
            .flat_map(|(wi, w)| {
                w.iter()
                    .enumerate()
                    .filter(|(_, &c)| c != 0)
                    .map(move |(i, &c)| (wi * 8 + i, c))
            })
    }
}

/// Hit-count bucket: 1, 2, 3, 4-7, 8-15, 16-31, 32-127, 128+ map to 0..=7.
/// Untouched counters have no bucket.
pub fn bucket(hits: u8) -> Option<u8> {
    Some(match hits {
        0 => return None,
        1 => 0,
        2 => 1,
        3 => 2,
        4..=7 => 3,
        8..=15 => 4,
        16..=31 => 5,
        32..=127 => 6,
        _ => 7,
    })
}

/// Highest bucket seen per edge across the campaign.
#[derive(Clone)]
pub struct GlobalCoverage {
    // bucket + 1; 0 = never hit
    best: Box<[u8]>,
    edges: usize,
}

impl Default for GlobalCoverage {
    fn default() -> Self {
        Self::new()
    }
}

impl fmt::Debug for GlobalCoverage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "GlobalCoverage {{ edges: {} }}", self.edges)
    }
}

impl GlobalCoverage {
    pub fn new() -> Self {
        GlobalCoverage {
            best: vec![0u8; MAP_SIZE].into_boxed_slice(),
            edges: 0,
        }
    }

    pub fn edges_covered(&self) -> usize {
        self.edges
    }

    pub fn has_new_bucket(&self, map: &CoverageMap) -> bool {
        map.nonzero()
            .any(|(i, c)| bucket(c).unwrap() + 1 > self.best[i])
    }

    /// Returns whether anything was raised.
    pub fn merge(&mut self, map: &CoverageMap) -> bool {
        let mut raised = false;
        for (i, c) in map.nonzero() {
            let b = bucket(c).unwrap() + 1;
            if b > self.best[i] {
                if self.best[i] == 0 {
                    self.edges += 1;
                }
                self.best[i] = b;
                raised = true;
            }
        }
        raised
    }
}

/// Value of one selected state variable at a snapshot; `None` is UNSET.
pub type StateValue = Option<i64>;

/// Tuple of selected state-variable values, in selection order.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct StateId(pub Vec<StateValue>);

impl StateId {
    pub fn new(values: Vec<StateValue>) -> Self {
        StateId(values)
    }

    pub fn single(v: i64) -> Self {
        StateId(vec![Some(v)])
    }
}

impl fmt::Display for StateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(")?;
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            match v {
                Some(v) => write!(f, "{v}")?,
                None => f.write_str("UNSET")?,
            }
        }
        f.write_str(")")
    }
}

impl fmt::Debug for StateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "StateId{self}")
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Verdict {
    Ok,
    Crash(String),
    Hang,
}

impl Verdict {
    pub fn is_ok(&self) -> bool {
        matches!(self, Verdict::Ok)
    }

    pub fn crash_site(&self) -> Option<&str> {
        match self {
            Verdict::Crash(s) => Some(s),
            _ => None,
        }
    }
}

/// Everything observed while running one message sequence.
#[derive(Clone, Debug)]
pub struct ExecOutcome {
    pub coverage: CoverageMap,
    /// One entry per delivered message.
    pub state_seq: Vec<StateId>,
    pub verdict: Verdict,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Interest {
    pub new_coverage: bool,
    pub new_state: bool,
    pub new_transition: bool,
    pub interesting: bool,
}

impl Interest {
    pub fn reasons(&self) -> Vec<&'static str> {
        let mut r = Vec::new();
        if self.new_coverage {
            r.push("coverage");
        }
        if self.new_state {
            r.push("state");
        }
        if self.new_transition {
            r.push("transition");
        }
        r
    }
}

/// Decides whether an ok outcome brings new coverage, states or transitions.
///
/// When interesting, the outcome is merged into `global` and `model`. With
/// `state_feedback` off, new states and transitions are still reported but
/// only code coverage can make the outcome interesting.
pub fn is_interesting(
    outcome: &ExecOutcome,
    global: &mut GlobalCoverage,
    model: &mut StateModel,
    state_feedback: bool,
) -> Interest {
    debug_assert!(outcome.verdict.is_ok());
    let new_coverage = global.has_new_bucket(&outcome.coverage);
    let new_state = outcome.state_seq.iter().any(|s| !model.contains(s));
    let mut prev = model.initial().cloned();
    let mut new_transition = false;
    for s in &outcome.state_seq {
        if let Some(p) = &prev {
            if !model.contains_edge(p, s) {
                new_transition = true;
                break;
            }
        }
        prev = Some(s.clone());
    }
    let interesting = new_coverage || (state_feedback && (new_state || new_transition));
    if interesting {
        global.merge(&outcome.coverage);
        model.update(&outcome.state_seq);
    }
    Interest {
        new_coverage,
        new_state,
        new_transition,
        interesting,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn edge_examples() {
        let mut m = CoverageMap::new();
        m.record_edge(5);
        assert_eq!(m.as_slice()[5], 1);
        assert_eq!(edge_index(4, 4), 6);
        let mut m = CoverageMap::new();
        m.record_edge(4);
        m.record_edge(4);
        assert_eq!(m.as_slice()[6], 1);
    }

    #[test]
    fn same_path_same_map() {
        let run = || {
            let mut m = CoverageMap::new();
            for b in [17, 4242, 9] {
                m.record_edge(b);
            }
            m
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn counters_saturate() {
        let mut m = CoverageMap::new();
        for _ in 0..1000 {
            m.record_edge(0);
        }
        assert_eq!(m.as_slice()[0], 255);
    }

    #[test]
    fn bucket_examples() {
        assert_eq!(bucket(0), None);
        assert_eq!(bucket(1), Some(0));
        assert_eq!(bucket(7), Some(3));
        assert_eq!(bucket(200), Some(7));
        let ids: Vec<_> = (1..=255u8).map(|c| bucket(c).unwrap()).collect();
        assert!(ids.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn nonzero_matches_scan() {
        let mut m = CoverageMap::new();
        for b in [1, 900, 65535, 31337, 7] {
            m.record_edge(b);
        }
        let fast: Vec<_> = m.nonzero().collect();
        let slow: Vec<_> = m
            .as_slice()
            .iter()
            .enumerate()
            .filter(|(_, &c)| c != 0)
            .map(|(i, &c)| (i, c))
            .collect();
        assert_eq!(fast, slow);
    }

    fn outcome(blocks: &[u32], states: &[i64]) -> ExecOutcome {
        let mut coverage = CoverageMap::new();
        for &b in blocks {
            coverage.record_edge(b);
        }
        ExecOutcome {
            coverage,
            state_seq: states.iter().map(|&s| StateId::single(s)).collect(),
            verdict: Verdict::Ok,
        }
    }

    #[test]
    fn empty_global_any_coverage_is_interesting() {
        let mut g = GlobalCoverage::new();
        let mut model = StateModel::new(StateId::single(0));
        let i = is_interesting(&outcome(&[3], &[]), &mut g, &mut model, true);
        assert!(i.interesting && i.new_coverage);
        assert_eq!(i.reasons(), vec!["coverage"]);
    }

    #[test]
    fn new_state_and_transition() {
        let mut g = GlobalCoverage::new();
        let mut model = StateModel::new(StateId::single(0));
        model.update(&[StateId::single(0)]);
        g.merge(&outcome(&[3], &[]).coverage);
        let i = is_interesting(&outcome(&[3], &[0, 1]), &mut g, &mut model, true);
        assert!(i.interesting && !i.new_coverage && i.new_state && i.new_transition);
        assert!(model.contains(&StateId::single(1)));
    }

    #[test]
    fn second_merge_is_not_interesting() {
        let mut g = GlobalCoverage::new();
        let mut model = StateModel::new(StateId::single(0));
        let o = outcome(&[1, 2, 3, 2, 3], &[1, 2]);
        assert!(is_interesting(&o, &mut g, &mut model, true).interesting);
        assert_eq!(
            is_interesting(&o, &mut g, &mut model, true),
            Interest::default()
        );
    }

    #[test]
    fn higher_bucket_is_new_lower_is_not() {
        let mut g = GlobalCoverage::new();
        let mut model = StateModel::new(StateId::single(0));
        assert!(is_interesting(&outcome(&[0, 0, 0], &[]), &mut g, &mut model, true).interesting);
        assert!(!is_interesting(&outcome(&[0, 0], &[]), &mut g, &mut model, true).interesting);
        assert!(is_interesting(&outcome(&[0; 9], &[]), &mut g, &mut model, true).interesting);
    }

    #[test]
    fn state_feedback_off_ignores_states() {
        let mut g = GlobalCoverage::new();
        let mut model = StateModel::new(StateId::single(0));
        g.merge(&outcome(&[3], &[]).coverage);
        let i = is_interesting(&outcome(&[3], &[5]), &mut g, &mut model, false);
        assert!(i.new_state && !i.interesting);
        assert!(!model.contains(&StateId::single(5)));
    }

    #[test]
    fn state_id_rendering() {
        assert_eq!(StateId(vec![Some(3), None]).to_string(), "(3,UNSET)");
    }
}
