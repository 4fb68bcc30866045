//! A dynamic state-based model of crowds.
//!
//! Crowds are modelled as threads moving through four phases of states
//! (Assembly, Mode, Structure, Dispersal) and an absorbing terminal state.
//! Threads fork into sub-crowds, react to external events and to each
//! other, can be driven by weighted random walks, and can be recorded and
//! replayed through a small line-based trace language.

pub mod classify;
pub mod engine;
pub mod rules;
pub mod schema;
pub mod stochastic;
pub mod trace;

pub use engine::{
    Annotation, Applied, Cause, CrowdThread, EngineError, ForkSpec, HistoryEntry, HistoryKind,
    TagSet, ThreadId, World,
};
pub use rules::{
    CascadeReport, EventRule, ForcedTransition, ReactionRule, RuleError, SkipReason, SkippedForce,
    ThreadSelector, DEFAULT_MAX_CASCADE_DEPTH,
};
pub use schema::{default_schema, ModelSchema, PhaseId, SchemaOptions, StateId};
pub use trace::{
    ParseError, ParseErrorKind, Replay, ReplayError, ReplayReport, Statement, StatementKind, Trace,
};
