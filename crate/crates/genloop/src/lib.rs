//! Generation loop for parenthetical-translation training data.
//!
//! Each term cluster goes through four agents: a Writer drafts seven English
//! sentences from arXiv context, a Translator renders them in Korean with
//! `한국어(term)` annotations, an Evaluator scores each pair, and a fixed
//! Executor rule either accepts the round or sends it back for revision.
//! Accepted sentences are merged into three composite pairs per cluster.

pub mod agents;
pub mod arxiv;
pub mod combine;
pub mod mock;
pub mod parse;
pub mod pipeline;
pub mod prompts;
pub mod provider;
pub mod review;
pub mod run;

pub use agents::{executor_route, Route};
pub use pipeline::{run_cluster, AgentTranscript, PipelineSettings, Round, TranscriptStatus};
pub use provider::{AgentRole, ChatProvider, HttpChatProvider, ProviderConfig};
