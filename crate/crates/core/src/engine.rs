//! Crowd threads and the world that holds them.
//!
//! A [`World`] owns every thread of one session. Threads are created by
//! [`World::spawn_thread`] (a fresh assembly) or [`World::fork_thread`] (a
//! sub-crowd splitting off an existing one), and move by legal transitions
//! until they reach the absorbing terminal state. Every change is appended
//! to the thread's history; nothing is ever rewritten.

use std::collections::BTreeMap;
use std::fmt;
use std::num::NonZeroU32;

use thiserror::Error;

use crate::rules::{CascadeReport, RuleSet};
use crate::schema::{ModelSchema, PhaseId, StateId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ThreadId(NonZeroU32);

impl ThreadId {
    pub fn new(id: u32) -> Option<Self> {
        NonZeroU32::new(id).map(ThreadId)
    }

    pub fn get(self) -> u32 {
        self.0.get()
    }
}

impl fmt::Display for ThreadId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Last state entered in each phase.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct TagSet {
    pub assembly: Option<StateId>,
    pub mode: Option<StateId>,
    pub structure: Option<StateId>,
    pub dispersal: Option<StateId>,
}

impl TagSet {
    pub fn get(&self, phase: PhaseId) -> Option<StateId> {
        match phase {
            PhaseId::Assembly => self.assembly,
            PhaseId::Mode => self.mode,
            PhaseId::Structure => self.structure,
            PhaseId::Dispersal => self.dispersal,
            PhaseId::Terminal => None,
        }
    }

    /// Overwrites the tag of `state`'s phase. Terminal carries no tag.
    pub fn record(&mut self, state: StateId) {
        let slot = match state.phase() {
            PhaseId::Assembly => &mut self.assembly,
            PhaseId::Mode => &mut self.mode,
            PhaseId::Structure => &mut self.structure,
            PhaseId::Dispersal => &mut self.dispersal,
            PhaseId::Terminal => return,
        };
        *slot = Some(state);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum HistoryKind {
    Assembled,
    Transitioned,
    ForkedFrom,
    ForcedByEvent,
    ForcedByReaction,
    Terminated,
}

impl HistoryKind {
    pub fn name(self) -> &'static str {
        match self {
            HistoryKind::Assembled => "assembled",
            HistoryKind::Transitioned => "transitioned",
            HistoryKind::ForkedFrom => "forked_from",
            HistoryKind::ForcedByEvent => "forced_by_event",
            HistoryKind::ForcedByReaction => "forced_by_reaction",
            HistoryKind::Terminated => "terminated",
        }
    }
}

impl fmt::Display for HistoryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Why a history entry happened, when it was not a plain caller command.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Cause {
    Event(String),
    /// Entry of `thread` into `state` fired a reaction rule.
    Reaction {
        thread: ThreadId,
        state: StateId,
    },
    Parent(ThreadId),
}

impl fmt::Display for Cause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cause::Event(name) => write!(f, "event {name}"),
            Cause::Reaction { thread, state } => write!(f, "thread {thread} entering {state}"),
            Cause::Parent(id) => write!(f, "parent {id}"),
        }
    }
}

/// Caller-supplied annotations. Timestamps are opaque labels.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct Annotation {
    pub timestamp: Option<String>,
    pub note: Option<String>,
}

impl Annotation {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn at(label: impl Into<String>) -> Self {
        Self {
            timestamp: Some(label.into()),
            note: None,
        }
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct HistoryEntry {
    pub sequence_index: usize,
    pub kind: HistoryKind,
    pub state: StateId,
    pub timestamp: Option<String>,
    pub note: Option<String>,
    pub cause: Option<Cause>,
}

impl fmt::Display for HistoryEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{} {} {}", self.sequence_index, self.kind, self.state)?;
        if let Some(ts) = &self.timestamp {
            write!(f, " @{ts}")?;
        }
        if let Some(cause) = &self.cause {
            write!(f, " ({cause})")?;
        }
        if let Some(note) = &self.note {
            write!(f, " {note:?}")?;
        }
        Ok(())
    }
}

/// One crowd or sub-crowd.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CrowdThread {
    id: ThreadId,
    current: StateId,
    tags: TagSet,
    inherited: TagSet,
    parent: Option<ThreadId>,
    history: Vec<HistoryEntry>,
    alive: bool,
}

impl CrowdThread {
    pub fn id(&self) -> ThreadId {
        self.id
    }

    pub fn current(&self) -> StateId {
        self.current
    }

    pub fn tags(&self) -> &TagSet {
        &self.tags
    }

    /// Tags copied from the parent at fork time (empty for spawned threads).
    /// A phase the thread itself never entered keeps its inherited tag.
    pub fn inherited_tags(&self) -> &TagSet {
        &self.inherited
    }

    pub fn parent(&self) -> Option<ThreadId> {
        self.parent
    }

    pub fn history(&self) -> &[HistoryEntry] {
        &self.history
    }

    pub fn alive(&self) -> bool {
        self.alive
    }

    fn push(
        &mut self,
        kind: HistoryKind,
        state: StateId,
        cause: Option<Cause>,
        annotation: Annotation,
    ) {
        self.current = state;
        self.tags.record(state);
        self.alive = state != StateId::Terminal;
        self.history.push(HistoryEntry {
            sequence_index: self.history.len(),
            kind,
            state,
            timestamp: annotation.timestamp,
            note: annotation.note,
            cause,
        });
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct EventRecord {
    pub name: String,
    pub timestamp: Option<String>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EngineError {
    #[error("unknown thread {0}")]
    UnknownThread(ThreadId),
    #[error("thread {0} has terminated")]
    TerminalThread(ThreadId),
    #[error("illegal transition for thread {thread}: {from} -> {to}")]
    IllegalTransition {
        thread: ThreadId,
        from: StateId,
        to: StateId,
    },
    #[error("{0} is not an assembly state")]
    NotAnAssemblyState(StateId),
    #[error("unknown parent thread {0}")]
    UnknownParent(ThreadId),
    #[error("parent thread {0} has terminated")]
    DeadParent(ThreadId),
    #[error("{0} is not an assembly state")]
    BadAssemblyState(StateId),
    #[error("{0} cannot be the initial state of a fork")]
    BadInitialState(StateId),
    #[error("reaction cascade exceeded depth {limit}")]
    CascadeDepthExceeded {
        limit: usize,
        report: Box<CascadeReport>,
    },
}

/// Result of a successful caller-driven transition.
#[derive(Debug, Clone, PartialEq)]
pub struct Applied {
    pub thread: CrowdThread,
    /// Transitions forced by reaction rules watching the entered state.
    pub reactions: CascadeReport,
}

/// How a fork is configured.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ForkSpec {
    pub assembly: StateId,
    pub initial: Option<StateId>,
}

impl Default for ForkSpec {
    fn default() -> Self {
        Self {
            assembly: StateId::AssemblySpontaneous,
            initial: None,
        }
    }
}

impl ForkSpec {
    pub fn assembled(assembly: StateId) -> Self {
        Self {
            assembly,
            initial: None,
        }
    }

    pub fn starting_in(mut self, initial: StateId) -> Self {
        self.initial = Some(initial);
        self
    }
}

/// A modelling session: threads, rules and the global event log.
///
/// Single-writer: all mutation goes through `&mut self`.
#[derive(Debug, Clone)]
pub struct World {
    schema: ModelSchema,
    threads: BTreeMap<ThreadId, CrowdThread>,
    pub(crate) rules: RuleSet,
    pub(crate) event_log: Vec<EventRecord>,
    next_id: u32,
}

pub fn new_world(schema: ModelSchema) -> World {
    World::new(schema)
}

impl World {
    pub fn new(schema: ModelSchema) -> Self {
        Self {
            schema,
            threads: BTreeMap::new(),
            rules: RuleSet::default(),
            event_log: Vec::new(),
            next_id: 1,
        }
    }

    pub fn schema(&self) -> &ModelSchema {
        &self.schema
    }

    pub fn rules(&self) -> &RuleSet {
        &self.rules
    }

    pub fn event_log(&self) -> &[EventRecord] {
        &self.event_log
    }

    pub fn thread_count(&self) -> usize {
        self.threads.len()
    }

    /// Threads in id order.
    pub fn threads(&self) -> impl Iterator<Item = &CrowdThread> {
        self.threads.values()
    }

    pub fn thread_ids(&self) -> Vec<ThreadId> {
        self.threads.keys().copied().collect()
    }

    /// The id the next spawn or fork will receive.
    pub fn peek_next_id(&self) -> ThreadId {
        ThreadId::new(self.next_id).expect("ids start at 1")
    }

    pub fn spawn_thread(
        &mut self,
        assembly: StateId,
        annotation: Annotation,
    ) -> Result<ThreadId, EngineError> {
        if assembly.phase() != PhaseId::Assembly {
            return Err(EngineError::NotAnAssemblyState(assembly));
        }
        let id = self.allocate_id();
        let mut thread = CrowdThread {
            id,
            current: assembly,
            tags: TagSet::default(),
            inherited: TagSet::default(),
            parent: None,
            history: Vec::new(),
            alive: true,
        };
        thread.push(HistoryKind::Assembled, assembly, None, annotation);
        self.threads.insert(id, thread);
        Ok(id)
    }

    /// Moves a thread by caller command, then runs any reaction rules
    /// watching the entered state.
    ///
    /// A cascade overflow is reported as an error even though the requested
    /// transition itself was applied.
    pub fn apply_transition(
        &mut self,
        id: ThreadId,
        to: StateId,
        annotation: Annotation,
    ) -> Result<Applied, EngineError> {
        let thread = self
            .threads
            .get(&id)
            .ok_or(EngineError::UnknownThread(id))?;
        if !thread.alive {
            return Err(EngineError::TerminalThread(id));
        }
        let from = thread.current;
        if !self.schema.is_legal_transition(from, to) {
            return Err(EngineError::IllegalTransition {
                thread: id,
                from,
                to,
            });
        }
        let kind = if to == StateId::Terminal {
            HistoryKind::Terminated
        } else {
            HistoryKind::Transitioned
        };
        let timestamp = annotation.timestamp.clone();
        self.record(id, kind, to, None, annotation);
        let reactions = self.evaluate_reactions_at(to, id, 1, timestamp)?;
        Ok(Applied {
            thread: self.threads[&id].clone(),
            reactions,
        })
    }

    /// Splits a child off `parent`. The child inherits the parent's tags,
    /// takes `spec.assembly` as its assembly tag, and starts in
    /// `spec.initial` or else in the parent's current state. A parent still
    /// in an Assembly state yields a child resting in its own assembly state.
    ///
    /// Forking does not fire reaction rules.
    pub fn fork_thread(
        &mut self,
        parent: ThreadId,
        spec: ForkSpec,
        annotation: Annotation,
    ) -> Result<ThreadId, EngineError> {
        let parent_thread = self
            .threads
            .get(&parent)
            .ok_or(EngineError::UnknownParent(parent))?;
        if !parent_thread.alive {
            return Err(EngineError::DeadParent(parent));
        }
        if spec.assembly.phase() != PhaseId::Assembly {
            return Err(EngineError::BadAssemblyState(spec.assembly));
        }
        if let Some(initial) = spec.initial {
            if matches!(initial.phase(), PhaseId::Assembly | PhaseId::Terminal) {
                return Err(EngineError::BadInitialState(initial));
            }
        }
        let effective = match spec.initial {
            Some(initial) => initial,
            None if parent_thread.current.phase() == PhaseId::Assembly => spec.assembly,
            None => parent_thread.current,
        };
        let inherited = parent_thread.tags;

        let id = self.allocate_id();
        let mut child = CrowdThread {
            id,
            current: spec.assembly,
            tags: inherited,
            inherited,
            parent: Some(parent),
            history: Vec::new(),
            alive: true,
        };
        let Annotation { timestamp, note } = annotation;
        child.push(
            HistoryKind::ForkedFrom,
            spec.assembly,
            Some(Cause::Parent(parent)),
            Annotation {
                timestamp: timestamp.clone(),
                note,
            },
        );
        if effective != spec.assembly {
            child.push(
                HistoryKind::Transitioned,
                effective,
                None,
                Annotation {
                    timestamp,
                    note: None,
                },
            );
        }
        self.threads.insert(id, child);
        Ok(id)
    }

    pub fn inspect(&self, id: ThreadId) -> Result<&CrowdThread, EngineError> {
        self.threads.get(&id).ok_or(EngineError::UnknownThread(id))
    }

    pub fn thread_trace(&self, id: ThreadId) -> Result<&[HistoryEntry], EngineError> {
        Ok(self.inspect(id)?.history())
    }

    fn allocate_id(&mut self) -> ThreadId {
        let id = ThreadId::new(self.next_id).expect("ids start at 1");
        self.next_id += 1;
        id
    }

    /// Appends an already-validated transition.
    pub(crate) fn record(
        &mut self,
        id: ThreadId,
        kind: HistoryKind,
        to: StateId,
        cause: Option<Cause>,
        annotation: Annotation,
    ) {
        let thread = self.threads.get_mut(&id).expect("caller checked existence");
        debug_assert!(thread.alive);
        debug_assert!(self.schema.is_legal_transition(thread.current, to));
        thread.push(kind, to, cause, annotation);
    }

    pub(crate) fn thread(&self, id: ThreadId) -> Option<&CrowdThread> {
        self.threads.get(&id)
    }

    pub(crate) fn alive_ids(&self) -> Vec<ThreadId> {
        self.threads
            .values()
            .filter(|t| t.alive)
            .map(|t| t.id)
            .collect()
    }
}
