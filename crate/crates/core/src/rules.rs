//! External-event rules and cross-thread reaction rules.
//!
//! An [`EventRule`] forces selected threads into a target state when a named
//! event is dispatched. A [`ReactionRule`] forces threads when some thread
//! enters a watched state, whatever caused that entry. Forced transitions
//! that are illegal for a thread are skipped for that thread only. Reactions
//! may chain; each chained level counts against `max_cascade_depth`.

use std::fmt;

use thiserror::Error;

use crate::engine::{Annotation, Cause, EngineError, EventRecord, HistoryKind, ThreadId, World};
use crate::schema::{PhaseId, StateId};

pub const DEFAULT_MAX_CASCADE_DEPTH: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ThreadSelector {
    Thread(ThreadId),
    All,
    /// Every thread except the one whose entry fired the rule.
    Others,
}

impl ThreadSelector {
    fn can_select(self, id: ThreadId, trigger: ThreadId) -> bool {
        match self {
            ThreadSelector::Thread(t) => t == id,
            ThreadSelector::All => true,
            ThreadSelector::Others => id != trigger,
        }
    }
}

impl fmt::Display for ThreadSelector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ThreadSelector::Thread(id) => write!(f, "{id}"),
            ThreadSelector::All => f.write_str("*"),
            ThreadSelector::Others => f.write_str("others"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct EventRule {
    pub event: String,
    pub selector: ThreadSelector,
    pub target: StateId,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ReactionRule {
    pub watched_state: StateId,
    pub watched: ThreadSelector,
    pub affected: ThreadSelector,
    pub target: StateId,
}

impl ReactionRule {
    /// Whether one thread could be both the watched and the affected one.
    fn selectors_overlap(&self) -> bool {
        match (self.watched, self.affected) {
            (_, ThreadSelector::Others) => false,
            (_, ThreadSelector::All) => true,
            (ThreadSelector::All, ThreadSelector::Thread(_)) => true,
            (ThreadSelector::Thread(a), ThreadSelector::Thread(b)) => a == b,
            (ThreadSelector::Others, _) => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuleSet {
    events: Vec<EventRule>,
    reactions: Vec<ReactionRule>,
    max_cascade_depth: usize,
}

impl Default for RuleSet {
    fn default() -> Self {
        Self {
            events: Vec::new(),
            reactions: Vec::new(),
            max_cascade_depth: DEFAULT_MAX_CASCADE_DEPTH,
        }
    }
}

impl RuleSet {
    pub fn event_rules(&self) -> &[EventRule] {
        &self.events
    }

    pub fn reaction_rules(&self) -> &[ReactionRule] {
        &self.reactions
    }

    pub fn max_cascade_depth(&self) -> usize {
        self.max_cascade_depth
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RuleError {
    #[error("rules cannot target {0}")]
    BadTarget(StateId),
    #[error("selector `{0}` is not allowed here")]
    BadSelector(ThreadSelector),
    #[error("reaction on entering {0} would force the same thread into {0}")]
    SelfLoop(StateId),
    #[error("cascade depth must be positive")]
    ZeroDepth,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ForcedTransition {
    pub thread: ThreadId,
    pub from: StateId,
    pub to: StateId,
    pub cause: Cause,
    /// 0 for event-forced transitions, n for the n-th nested reaction level.
    pub depth: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SkipReason {
    Illegal { from: StateId },
    AlreadyInTarget,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SkippedForce {
    pub thread: ThreadId,
    pub target: StateId,
    pub cause: Cause,
    pub reason: SkipReason,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct CascadeReport {
    pub forced: Vec<ForcedTransition>,
    pub skipped: Vec<SkippedForce>,
    /// Set when the cascade stopped at the depth limit.
    pub truncated: bool,
}

impl CascadeReport {
    pub fn is_empty(&self) -> bool {
        self.forced.is_empty() && self.skipped.is_empty()
    }

    pub fn extend(&mut self, other: CascadeReport) {
        self.forced.extend(other.forced);
        self.skipped.extend(other.skipped);
        self.truncated |= other.truncated;
    }
}

struct DepthExceeded;

impl World {
    pub fn register_event_rule(&mut self, rule: EventRule) -> Result<usize, RuleError> {
        check_target(rule.target)?;
        if rule.selector == ThreadSelector::Others {
            return Err(RuleError::BadSelector(rule.selector));
        }
        self.rules.events.push(rule);
        Ok(self.rules.events.len() - 1)
    }

    pub fn register_reaction_rule(&mut self, rule: ReactionRule) -> Result<usize, RuleError> {
        check_target(rule.target)?;
        if rule.watched == ThreadSelector::Others {
            return Err(RuleError::BadSelector(rule.watched));
        }
        if rule.watched_state == rule.target && rule.selectors_overlap() {
            return Err(RuleError::SelfLoop(rule.target));
        }
        self.rules.reactions.push(rule);
        Ok(self.rules.reactions.len() - 1)
    }

    pub fn set_max_cascade_depth(&mut self, depth: usize) -> Result<(), RuleError> {
        if depth == 0 {
            return Err(RuleError::ZeroDepth);
        }
        self.rules.max_cascade_depth = depth;
        Ok(())
    }

    /// Fires every event rule named `event`, in registration order. Unknown
    /// names are fine and logged like any other event.
    pub fn dispatch_event(
        &mut self,
        event: &str,
        timestamp: Option<String>,
    ) -> Result<CascadeReport, EngineError> {
        self.event_log.push(EventRecord {
            name: event.to_string(),
            timestamp: timestamp.clone(),
        });
        let matching: Vec<EventRule> = self
            .rules
            .events
            .iter()
            .filter(|r| r.event == event)
            .cloned()
            .collect();

        let mut report = CascadeReport::default();
        let cause = Cause::Event(event.to_string());
        for rule in matching {
            let selected = match rule.selector {
                ThreadSelector::Thread(id) => vec![id],
                _ => self.alive_ids(),
            };
            for id in selected {
                let applied = self.try_force(
                    id,
                    rule.target,
                    HistoryKind::ForcedByEvent,
                    &cause,
                    0,
                    &timestamp,
                    &mut report,
                );
                let outcome = match applied {
                    Ok(true) => self.cascade(rule.target, id, 1, &timestamp, &mut report),
                    Ok(false) => Ok(()),
                    Err(e) => Err(e),
                };
                if outcome.is_err() {
                    return Err(self.exceeded(report));
                }
            }
        }
        Ok(report)
    }

    /// Fires reaction rules for `entering` having entered `entered`, as if at
    /// nesting level `depth`.
    pub fn evaluate_reactions(
        &mut self,
        entered: StateId,
        entering: ThreadId,
        depth: usize,
    ) -> Result<CascadeReport, EngineError> {
        self.evaluate_reactions_at(entered, entering, depth, None)
    }

    pub(crate) fn evaluate_reactions_at(
        &mut self,
        entered: StateId,
        entering: ThreadId,
        depth: usize,
        timestamp: Option<String>,
    ) -> Result<CascadeReport, EngineError> {
        let mut report = CascadeReport::default();
        match self.cascade(entered, entering, depth, &timestamp, &mut report) {
            Ok(()) => Ok(report),
            Err(DepthExceeded) => Err(self.exceeded(report)),
        }
    }

    fn exceeded(&self, mut report: CascadeReport) -> EngineError {
        report.truncated = true;
        EngineError::CascadeDepthExceeded {
            limit: self.rules.max_cascade_depth,
            report: Box::new(report),
        }
    }

    fn cascade(
        &mut self,
        entered: StateId,
        entering: ThreadId,
        depth: usize,
        timestamp: &Option<String>,
        report: &mut CascadeReport,
    ) -> Result<(), DepthExceeded> {
        let matching: Vec<ReactionRule> = self
            .rules
            .reactions
            .iter()
            .filter(|r| r.watched_state == entered && r.watched.can_select(entering, entering))
            .cloned()
            .collect();
        let cause = Cause::Reaction {
            thread: entering,
            state: entered,
        };
        for rule in matching {
            let affected: Vec<ThreadId> = match rule.affected {
                ThreadSelector::Thread(id) => vec![id],
                selector => self
                    .alive_ids()
                    .into_iter()
                    .filter(|&id| selector.can_select(id, entering))
                    .collect(),
            };
            for id in affected {
                if self.try_force(
                    id,
                    rule.target,
                    HistoryKind::ForcedByReaction,
                    &cause,
                    depth,
                    timestamp,
                    report,
                )? {
                    self.cascade(rule.target, id, depth + 1, timestamp, report)?;
                }
            }
        }
        Ok(())
    }

    /// Applies one forced transition if possible. Missing or dead threads
    /// are ignored, illegal moves are recorded as skipped. Returns whether
    /// the transition happened.
    #[allow(clippy::too_many_arguments)]
    fn try_force(
        &mut self,
        id: ThreadId,
        target: StateId,
        kind: HistoryKind,
        cause: &Cause,
        depth: usize,
        timestamp: &Option<String>,
        report: &mut CascadeReport,
    ) -> Result<bool, DepthExceeded> {
        let Some(thread) = self.thread(id) else {
            return Ok(false);
        };
        if !thread.alive() {
            return Ok(false);
        }
        let from = thread.current();
        let reason = if from == target {
            Some(SkipReason::AlreadyInTarget)
        } else if !self.schema().is_legal_transition(from, target) {
            Some(SkipReason::Illegal { from })
        } else {
            None
        };
        if let Some(reason) = reason {
            report.skipped.push(SkippedForce {
                thread: id,
                target,
                cause: cause.clone(),
                reason,
            });
            return Ok(false);
        }
        if depth > self.rules.max_cascade_depth {
            return Err(DepthExceeded);
        }
        self.record(
            id,
            kind,
            target,
            Some(cause.clone()),
            Annotation {
                timestamp: timestamp.clone(),
                note: None,
            },
        );
        report.forced.push(ForcedTransition {
            thread: id,
            from,
            to: target,
            cause: cause.clone(),
            depth,
        });
        Ok(true)
    }
}

fn check_target(target: StateId) -> Result<(), RuleError> {
    if target.phase() == PhaseId::Assembly {
        Err(RuleError::BadTarget(target))
    } else {
        Ok(())
    }
}
