//! Agents that turn a script into a researched, compilable breakdown, plus
//! the LLM gateway and geocoder they share.

pub mod breakdown;
pub mod compile;
pub mod geocoder;
pub mod llm;
pub mod prompts;
pub mod researcher;

pub use breakdown::{apply_edits, breakdown, regenerate, BreakdownError, ItemEdit};
pub use compile::{compile, compile_for_script, BreakdownOptions, CompileError};
pub use researcher::{execute_action, ChatTurn, Research, ResearchError, Researcher};
