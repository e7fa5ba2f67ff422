//! The stateful-target contract and the sequence executor.
//!
//! A target is an in-process stand-in for an instrumented server. It reports
//! basic-block visits through a [`Probe`], exposes its candidate state
//! variables, and signals crashes and hangs as [`Fault`]s.

pub mod toy_ftp;
pub mod toy_tlv;

use crate::feedback::{CoverageMap, ExecOutcome, StateId, StateValue, Verdict};
use crate::message::Message;
use crate::state_model::StateSchema;

pub use toy_ftp::ToyFtp;
pub use toy_tlv::ToyTlv;

/// Default per-message budget of basic-block visits before a hang is declared.
pub const DEFAULT_STEP_BUDGET: u64 = 1_000_000;

pub type VarId = usize;

/// A candidate state variable declared by a target.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct VarDecl {
    pub name: &'static str,
    /// Symbolic names for known values, used when rendering states.
    pub value_names: &'static [(i64, &'static str)],
}

impl VarDecl {
    pub const fn plain(name: &'static str) -> Self {
        VarDecl {
            name,
            value_names: &[],
        }
    }
}

/// Server reply; diagnostic only.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Response {
    pub bytes: Vec<u8>,
    /// The server closed the session after this reply.
    pub close: bool,
}

impl Response {
    pub fn reply(text: &str) -> Self {
        Response {
            bytes: text.as_bytes().to_vec(),
            close: false,
        }
    }

    pub fn closing(text: &str) -> Self {
        Response {
            bytes: text.as_bytes().to_vec(),
            close: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Fault {
    Crash(&'static str),
    Hang,
}

/// Coverage sink handed to a target while it handles one message.
pub struct Probe<'a> {
    map: &'a mut CoverageMap,
    steps: u64,
    budget: u64,
}

/// Id of a target-local block in the coverage map.
///
/// Ids are spread over the 16-bit map deterministically so edges between
/// small local numbers do not pile onto the same counters.
pub fn block_id(local: u16) -> u32 {
    (local as u32).wrapping_add(1).wrapping_mul(0x9E37_79B1) >> 16
}

impl<'a> Probe<'a> {
    pub fn new(map: &'a mut CoverageMap, budget: u64) -> Self {
        Probe {
            map,
            steps: 0,
            budget,
        }
    }

    /// Records a visit of block `local`; fails once the step budget is spent.
    #[inline]
    pub fn hit(&mut self, local: u16) -> Result<(), Fault> {
        self.steps += 1;
        if self.steps > self.budget {
            return Err(Fault::Hang);
        }
        self.map.record_edge(block_id(local));
        Ok(())
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }
}

/// Operations required of a fuzzable stateful target.
pub trait Target {
    fn name(&self) -> &str;

    /// Candidate state variables; `VarId` is the index into this slice.
    fn variables(&self) -> &[VarDecl];

    /// Restores the freshly started state; later behavior must not depend on
    /// earlier sessions.
    fn reset(&mut self);

    fn handle(&mut self, msg: &[u8], probe: &mut Probe<'_>) -> Result<Response, Fault>;

    /// Current value of every declared variable, in declaration order.
    fn read_vars(&self) -> Vec<StateValue>;
}

impl<T: Target + ?Sized> Target for Box<T> {
    fn name(&self) -> &str {
        (**self).name()
    }
    fn variables(&self) -> &[VarDecl] {
        (**self).variables()
    }
    fn reset(&mut self) {
        (**self).reset()
    }
    fn handle(&mut self, msg: &[u8], probe: &mut Probe<'_>) -> Result<Response, Fault> {
        (**self).handle(msg, probe)
    }
    fn read_vars(&self) -> Vec<StateValue> {
        (**self).read_vars()
    }
}

pub fn target_names() -> &'static [&'static str] {
    &["toy-ftp", "toy-tlv"]
}

pub fn target_by_name(name: &str) -> Option<Box<dyn Target>> {
    match name {
        "toy-ftp" => Some(Box::new(ToyFtp::new())),
        "toy-tlv" => Some(Box::new(ToyTlv::new())),
        _ => None,
    }
}

/// Resolves variable names to ids.
pub fn resolve_vars(target: &dyn Target, names: &[String]) -> Result<Vec<VarId>, String> {
    names
        .iter()
        .map(|n| {
            target
                .variables()
                .iter()
                .position(|v| v.name == n)
                .ok_or_else(|| format!("target {} has no variable {n:?}", target.name()))
        })
        .collect()
}

pub fn project(values: &[StateValue], selection: &[VarId]) -> StateId {
    StateId(
        selection
            .iter()
            .map(|&v| values.get(v).copied().flatten())
            .collect(),
    )
}

/// Rendering names for the selected variables.
pub fn schema_for(target: &dyn Target, selection: &[VarId]) -> StateSchema {
    let vars = target.variables();
    StateSchema {
        var_names: selection
            .iter()
            .map(|&v| vars[v].name.to_string())
            .collect(),
        value_names: selection
            .iter()
            .map(|&v| {
                vars[v]
                    .value_names
                    .iter()
                    .map(|&(val, n)| (val, n.to_string()))
                    .collect()
            })
            .collect(),
    }
}

/// Delivers `messages` in order to a freshly reset target.
///
/// The selected variables are snapshotted after each handled message, and
/// `observe` sees every variable's value at each snapshot. Delivery stops at
/// the first crash, hang or session close.
pub fn run_sequence_observed(
    target: &mut dyn Target,
    selection: &[VarId],
    messages: &[Message],
    step_budget: u64,
    mut observe: impl FnMut(&[StateValue]),
) -> ExecOutcome {
    let mut coverage = CoverageMap::new();
    let mut state_seq = Vec::with_capacity(messages.len());
    let mut verdict = Verdict::Ok;
    for m in messages {
        let mut probe = Probe::new(&mut coverage, step_budget);
        let result = target.handle(m.bytes(), &mut probe);
        match result {
            Ok(resp) => {
                let values = target.read_vars();
                observe(&values);
                state_seq.push(project(&values, selection));
                if resp.close {
                    break;
                }
            }
            Err(Fault::Crash(site)) => {
                verdict = Verdict::Crash(site.to_string());
                break;
            }
            Err(Fault::Hang) => {
                verdict = Verdict::Hang;
                break;
            }
        }
    }
    ExecOutcome {
        coverage,
        state_seq,
        verdict,
    }
}

pub fn run_sequence(
    target: &mut dyn Target,
    selection: &[VarId],
    messages: &[Message],
    step_budget: u64,
) -> ExecOutcome {
    run_sequence_observed(target, selection, messages, step_budget, |_| {})
}

/// A target together with the variables that define its state.
pub struct Executor {
    target: Box<dyn Target>,
    selection: Vec<VarId>,
    step_budget: u64,
    execs: u64,
    messages_sent: u64,
}

impl Executor {
    pub fn new(target: Box<dyn Target>, selection: Vec<VarId>) -> Self {
        Executor {
            target,
            selection,
            step_budget: DEFAULT_STEP_BUDGET,
            execs: 0,
            messages_sent: 0,
        }
    }

    pub fn with_step_budget(mut self, budget: u64) -> Self {
        self.step_budget = budget;
        self
    }

    pub fn target(&self) -> &dyn Target {
        &*self.target
    }

    pub fn selection(&self) -> &[VarId] {
        &self.selection
    }

    pub fn schema(&self) -> StateSchema {
        schema_for(&*self.target, &self.selection)
    }

    pub fn execs(&self) -> u64 {
        self.execs
    }

    pub fn messages_sent(&self) -> u64 {
        self.messages_sent
    }

    /// State of a freshly reset target.
    pub fn initial_state(&mut self) -> StateId {
        self.target.reset();
        project(&self.target.read_vars(), &self.selection)
    }

    pub fn run(&mut self, messages: &[Message]) -> ExecOutcome {
        self.run_observed(messages, |_| {})
    }

    pub fn run_observed(
        &mut self,
        messages: &[Message],
        observe: impl FnMut(&[StateValue]),
    ) -> ExecOutcome {
        self.target.reset();
        let out = run_sequence_observed(
            &mut *self.target,
            &self.selection,
            messages,
            self.step_budget,
            observe,
        );
        self.execs += 1;
        self.messages_sent += out.state_seq.len() as u64 + u64::from(!out.verdict.is_ok());
        out
    }
}
