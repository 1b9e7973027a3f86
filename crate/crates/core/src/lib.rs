//! Core library for agentic legal search: the think/search/answer tag
//! protocol, the rollout loop, the search → extract → summarize environment,
//! reward and advantage math, dataset curation, evaluation analytics and the
//! human review queue.

pub mod agent;
pub mod clock;
pub mod curation;
pub mod endpoint;
pub mod eval;
pub mod fixture;
pub mod prompts;
pub mod question;
pub mod records;
pub mod review;
pub mod reward;
pub mod search;
pub mod stubs;
pub mod trajectory;
