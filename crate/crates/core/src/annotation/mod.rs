//! Prompt assembly, LLM calls, and parsing/repair of the returned
//! `event | hours` lines.

pub mod clean;
pub mod parse;
pub mod prompt;
pub mod provider;

pub use clean::{attribute_sources, clean, CleanConfig, CleanReport};
pub use parse::{parse_response, AnnotatedEvent, ParseReport, Provenance, RejectReason};
pub use prompt::{build_prompt, PromptBundle, PROMPT_TEMPLATE_VERSION};
pub use provider::{annotate, Annotation, ChatRequest, HttpLlm, LlmProvider, LlmSettings, ReplayLlm, RetryPolicy};
