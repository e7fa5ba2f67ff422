//! Field grammars for binary messages: learning them from seed messages with
//! a language model, and scoring a learned field list against ground truth.

mod eval;
mod learn;
mod llm;
mod prompt;

pub use eval::{accuracy, classify_fields, Accuracy, EvalError, MatchReport};
pub use learn::{harvest_dictionary, learn_grammar, merge_fields};
#[cfg(feature = "live-llm")]
pub use llm::HttpClient;
pub use llm::{prompt_key, FixtureClient, LlmClient, LlmError, LlmSettings, RecordingClient};
pub use prompt::{bit_string, build_prompt, parse_response, ParseError};
