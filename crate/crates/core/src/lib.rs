//! Greybox fuzzing of stateful network protocol implementations.
//!
//! The fuzzer infers a state model from program state variables, schedules
//! seeds by the state they reach, and mutates the message that drives a
//! chosen state transition, optionally guided by a bit-level field grammar.

pub mod campaign;
pub mod error;
pub mod feedback;
pub mod grammar;
pub mod harness;
pub mod message;
pub mod mutation;
pub mod scheduler;
pub mod state_model;
pub mod var_miner;

pub use error::{FieldError, FormatError};
pub use feedback::{CoverageMap, ExecOutcome, GlobalCoverage, StateId, Verdict};
pub use harness::{Executor, Target};
pub use message::{FieldSpec, Grammar, Message, Seed};
pub use state_model::StateModel;
