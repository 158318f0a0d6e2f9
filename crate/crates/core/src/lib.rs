//! Plan-and-execute question answering over long documents.
//!
//! The pipeline has three LLM-driven stages:
//!
//! 1. **Action mining** ([`registry`]): an LLM proposes reusable reasoning
//!    actions (`FIND_CHARACTER(CTX, X)`, `COMPARE(CTX, X, Y, Z)`, ...) from
//!    training questions, and the resulting vocabulary is reduced in a few
//!    abstraction rounds.
//! 2. **Plan generation** ([`planner`]): for a question, the LLM writes a
//!    small program in the plan language ([`plan`]), which is parsed and
//!    validated; invalid plans are sent back with the parser's error
//!    messages until they validate or a retry limit is hit.
//! 3. **Plan execution** ([`execution`]): each step is run as its own
//!    templated LLM call over the whole document, with earlier outputs bound
//!    into the prompt. `CONCAT` runs locally.
//!
//! Every model call goes through an [`gateway::LlmGateway`]; the replay
//! backend makes the whole pipeline deterministic for tests. The
//! [`eval`] module maps free-form answers back onto multiple-choice options
//! and computes accuracy, significance and plan statistics.

pub mod eval;
pub mod execution;
pub mod gateway;
pub mod plan;
pub mod planner;
pub mod prompts;
pub mod registry;

pub mod concurrency;

pub use eval::{EvalRecord, Method, QaExample, Split};
pub use execution::{execute_plan, Document, Environment, ExecutionResult, ExecutionSettings};
pub use gateway::{GatewayError, LlmExchange, LlmGateway, LlmRequest, ModelConfig, Tag};
pub use plan::{
    format_plan, parse_plan, validate_plan, ActionScope, Argument, ErrorCode, Plan, PlanStep,
    ValidationError,
};
pub use planner::{generate_plan, render_errors, CorrectionTrace, Demonstration, PlanOutcome};
pub use registry::{preset_registry, ActionDef, ActionRegistry, Origin, Preset};
