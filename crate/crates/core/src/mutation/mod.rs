//! Mutation operators: the deterministic walk, classical stacked byte and
//! message operators, and field-guided bit operators.
//!
//! Every operator touches only the target region `M2` of a seed; the prefix
//! `M1` and suffix `M3` are copied through unchanged.

mod classical;
mod deterministic;
mod field;

pub use classical::{apply_classical_op, classical_stack, ClassicalOp, CLASSICAL_OPS};
pub use deterministic::{apply_det, deterministic_ops, deterministic_stage, DetOp, DetStage};
pub use field::{apply_field_op, field_stack, FieldOp};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::message::{Grammar, Message, Seed};
use crate::scheduler::Regions;

/// Single-byte interesting values.
pub const INTERESTING_8: [u8; 9] = [0, 1, 16, 32, 64, 100, 127, 128, 255];
/// Interesting values used at 16- and 32-bit widths.
pub const INTERESTING_WIDE: [u32; 16] = [
    0, 1, 16, 32, 64, 100, 127, 128, 255, 256, 512, 1000, 1024, 4096, 32767, 65535,
];

/// Upper bound on a mutated message's length.
pub const MAX_MESSAGE_LEN: usize = 1 << 16;
/// Upper bound on the number of messages in a mutated seed.
pub const MAX_MESSAGES: usize = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MutationError {
    #[error("field mutation requested without a grammar")]
    NoGrammar,
    #[error("epsilon {0} outside [0, 1]")]
    BadEpsilon(f64),
    #[error("stack_depth_max must be at least 1")]
    BadStackDepth,
    #[error("region {0:?} invalid for a seed of {1} messages")]
    BadRegion(Regions, usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MutationConfig {
    /// Probability that a stack round uses field operators.
    pub epsilon: f64,
    pub stack_depth_max: u32,
    pub rng_seed: u64,
    /// Leading bytes of each message walked by the deterministic stage.
    pub det_window: usize,
}

impl Default for MutationConfig {
    fn default() -> Self {
        MutationConfig {
            epsilon: 0.5,
            stack_depth_max: 16,
            rng_seed: 0,
            det_window: 64,
        }
    }
}

impl MutationConfig {
    pub fn validate(&self) -> Result<(), MutationError> {
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(MutationError::BadEpsilon(self.epsilon));
        }
        if self.stack_depth_max == 0 {
            return Err(MutationError::BadStackDepth);
        }
        Ok(())
    }
}

/// Which part of a seed to mutate, and the grammar to mutate it with.
#[derive(Clone, Debug)]
pub struct MutationPlan<'g> {
    pub regions: Regions,
    pub grammar: Option<&'g Grammar>,
}

impl<'g> MutationPlan<'g> {
    pub fn new(regions: Regions, grammar: Option<&'g Grammar>) -> Self {
        MutationPlan { regions, grammar }
    }

    pub fn validate(&self, seed: &Seed) -> Result<(), MutationError> {
        let r = &self.regions;
        let n = seed.messages.len();
        let ok = r.prefix.start == 0
            && r.prefix.end == r.target.start
            && r.target.end == r.suffix.start
            && r.suffix.end == n
            && r.target.start <= r.target.end;
        if ok {
            Ok(())
        } else {
            Err(MutationError::BadRegion(r.clone(), n))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MutationKind {
    Classical,
    Field,
}

/// Number of stacked operators: a power of two up to `max`.
pub(crate) fn stack_depth<R: Rng>(max: u32, rng: &mut R) -> u32 {
    let max_pow = 31 - max.leading_zeros();
    (1u32 << rng.gen_range(0..=max_pow)).min(max)
}

/// `M1 ++ region ++ M3` as a fresh, unexecuted seed.
pub(crate) fn reassemble(seed: &Seed, regions: &Regions, region: Vec<Message>) -> Seed {
    let mut messages =
        Vec::with_capacity(regions.prefix.len() + region.len() + regions.suffix.len());
    messages.extend_from_slice(&seed.messages[regions.prefix.clone()]);
    messages.extend(region);
    messages.extend_from_slice(&seed.messages[regions.suffix.clone()]);
    Seed::new(messages)
}

/// One stack round: field operators with probability `epsilon` when a
/// non-empty grammar is available, classical operators otherwise.
pub fn mutate<R: Rng>(
    seed: &Seed,
    plan: &MutationPlan<'_>,
    cfg: &MutationConfig,
    rng: &mut R,
) -> (Seed, MutationKind) {
    let u: f64 = rng.gen();
    let grammar_ready = plan.grammar.is_some_and(|g| !g.is_empty());
    if u < cfg.epsilon && grammar_ready && !plan.regions.target.is_empty() {
        let out =
            field_stack(seed, plan, cfg.stack_depth_max, rng).expect("grammar presence checked");
        (out, MutationKind::Field)
    } else {
        (
            classical_stack(seed, plan, cfg.stack_depth_max, rng),
            MutationKind::Classical,
        )
    }
}
