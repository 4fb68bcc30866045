//! A line-based language for recording and replaying crowd narratives.
//!
//! ```text
//! thread <n> assemble <physical|spontaneous|planned> [@<label>] ["note"]
//! thread <n> goto <state> [@<label>] ["note"]
//! fork <child> from <parent> [assembly <assembly-state>] [initial <state>] [@<label>] ["note"]
//! event <name> [@<label>] ["note"]
//! rule on event <name> thread <n|*> goto <state>
//! rule on enter <state> [by <n|*>] thread <n|*|others> goto <state>
//! thread <n> end [@<label>] ["note"]
//! ```
//!
//! Blank lines and `#` comments are ignored. Notes are double-quoted with
//! `\"` and `\\` escapes. Thread numbers name engine threads directly, so a
//! trace must create threads in order 1, 2, 3, ...

use std::fmt;
use std::fmt::Write as _;

use thiserror::Error;

use crate::engine::{Annotation, EngineError, ForkSpec, ThreadId, World};
use crate::rules::{
    CascadeReport, EventRule, ForcedTransition, ReactionRule, SkippedForce, ThreadSelector,
};
use crate::schema::{ModelSchema, PhaseId, StateId};

const CASE_STUDY: &str = include_str!("../data/case_study.crowd");

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum StatementKind {
    Assemble {
        thread: ThreadId,
        state: StateId,
    },
    Goto {
        thread: ThreadId,
        state: StateId,
    },
    Fork {
        child: ThreadId,
        parent: ThreadId,
        assembly: Option<StateId>,
        initial: Option<StateId>,
    },
    Event {
        name: String,
    },
    EventRule {
        event: String,
        selector: ThreadSelector,
        target: StateId,
    },
    ReactionRule {
        watched_state: StateId,
        watched: ThreadSelector,
        affected: ThreadSelector,
        target: StateId,
    },
    End {
        thread: ThreadId,
    },
}

impl StatementKind {
    /// Rule declarations take no label or note.
    pub fn takes_annotations(&self) -> bool {
        !matches!(
            self,
            StatementKind::EventRule { .. } | StatementKind::ReactionRule { .. }
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Statement {
    pub kind: StatementKind,
    pub timestamp: Option<String>,
    pub note: Option<String>,
    /// 1-based source line; 0 for statements built in code.
    pub line: usize,
}

impl Statement {
    pub fn new(kind: StatementKind) -> Self {
        Self {
            kind,
            timestamp: None,
            note: None,
            line: 0,
        }
    }

    pub fn at(mut self, label: impl Into<String>) -> Self {
        self.timestamp = Some(label.into());
        self
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }

    fn annotation(&self) -> Annotation {
        Annotation {
            timestamp: self.timestamp.clone(),
            note: self.note.clone(),
        }
    }

    /// Equality ignoring source line numbers.
    pub fn same_structure(&self, other: &Statement) -> bool {
        self.kind == other.kind && self.timestamp == other.timestamp && self.note == other.note
    }
}

impl fmt::Display for Statement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            StatementKind::Assemble { thread, state } => {
                write!(f, "thread {thread} assemble {}", state.local_name())?
            }
            StatementKind::Goto { thread, state } => write!(f, "thread {thread} goto {state}")?,
            StatementKind::Fork {
                child,
                parent,
                assembly,
                initial,
            } => {
                write!(f, "fork {child} from {parent}")?;
                if let Some(a) = assembly {
                    write!(f, " assembly {}", a.local_name())?;
                }
                if let Some(i) = initial {
                    write!(f, " initial {i}")?;
                }
            }
            StatementKind::Event { name } => write!(f, "event {name}")?,
            StatementKind::EventRule {
                event,
                selector,
                target,
            } => write!(f, "rule on event {event} thread {selector} goto {target}")?,
            StatementKind::ReactionRule {
                watched_state,
                watched,
                affected,
                target,
            } => {
                write!(f, "rule on enter {watched_state}")?;
                if *watched != ThreadSelector::All {
                    write!(f, " by {watched}")?;
                }
                write!(f, " thread {affected} goto {target}")?;
            }
            StatementKind::End { thread } => write!(f, "thread {thread} end")?,
        }
        if let Some(ts) = &self.timestamp {
            write!(f, " @{ts}")?;
        }
        if let Some(note) = &self.note {
            f.write_str(" \"")?;
            for c in note.chars() {
                match c {
                    '"' => f.write_str("\\\"")?,
                    '\\' => f.write_str("\\\\")?,
                    c => f.write_char(c)?,
                }
            }
            f.write_char('"')?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Trace {
    pub source: String,
    pub statements: Vec<Statement>,
}

impl Trace {
    pub fn new(source: impl Into<String>, statements: Vec<Statement>) -> Self {
        Self {
            source: source.into(),
            statements,
        }
    }

    pub fn len(&self) -> usize {
        self.statements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.statements.is_empty()
    }

    /// Statement-by-statement equality ignoring line numbers and source name.
    pub fn same_structure(&self, other: &Trace) -> bool {
        self.statements.len() == other.statements.len()
            && self
                .statements
                .iter()
                .zip(&other.statements)
                .all(|(a, b)| a.same_structure(b))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParseErrorKind {
    Syntax,
    UnknownStateName,
    MalformedSelector,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("line {line}, column {column}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub kind: ParseErrorKind,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum TokenKind {
    Word(String),
    Label(String),
    Quoted(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Token {
    kind: TokenKind,
    column: usize,
}

impl Token {
    fn describe(&self) -> String {
        match &self.kind {
            TokenKind::Word(w) => format!("`{w}`"),
            TokenKind::Label(l) => format!("`@{l}`"),
            TokenKind::Quoted(_) => "a quoted note".to_string(),
        }
    }
}

fn syntax(line: usize, column: usize, message: impl Into<String>) -> ParseError {
    ParseError {
        line,
        column,
        kind: ParseErrorKind::Syntax,
        message: message.into(),
    }
}

fn is_word_char(c: char) -> bool {
    !c.is_whitespace() && c != '#' && c != '"' && c != '@'
}

fn tokenize(text: &str, line: usize) -> Result<Vec<Token>, ParseError> {
    let chars: Vec<char> = text.chars().collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let column = i + 1;
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if c == '#' {
            break;
        }
        let kind = if c == '"' {
            i += 1;
            let mut note = String::new();
            loop {
                match chars.get(i) {
                    None => return Err(syntax(line, column, "unterminated note")),
                    Some('"') => {
                        i += 1;
                        break;
                    }
                    Some('\\') => {
                        match chars.get(i + 1) {
                            Some(&e @ ('"' | '\\')) => note.push(e),
                            _ => return Err(syntax(line, i + 1, "unknown escape in note")),
                        }
                        i += 2;
                    }
                    Some(&ch) => {
                        note.push(ch);
                        i += 1;
                    }
                }
            }
            TokenKind::Quoted(note)
        } else {
            let start = if c == '@' { i + 1 } else { i };
            let mut end = start;
            while end < chars.len() && is_word_char(chars[end]) {
                end += 1;
            }
            let word: String = chars[start..end].iter().collect();
            i = end;
            if c == '@' {
                if word.is_empty() {
                    return Err(syntax(line, column, "empty timestamp label"));
                }
                TokenKind::Label(word)
            } else {
                TokenKind::Word(word)
            }
        };
        if let Some(&next) = chars.get(i) {
            if !next.is_whitespace() && next != '#' {
                return Err(syntax(
                    line,
                    i + 1,
                    format!("unexpected character `{next}`"),
                ));
            }
        }
        tokens.push(Token { kind, column });
    }
    Ok(tokens)
}

struct LineParser {
    tokens: Vec<Token>,
    pos: usize,
    line: usize,
    end_column: usize,
}

impl LineParser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn here(&self) -> usize {
        self.peek().map(|t| t.column).unwrap_or(self.end_column)
    }

    fn error(&self, kind: ParseErrorKind, message: impl Into<String>) -> ParseError {
        ParseError {
            line: self.line,
            column: self.here(),
            kind,
            message: message.into(),
        }
    }

    fn peek_word(&self) -> Option<&str> {
        match self.peek() {
            Some(Token {
                kind: TokenKind::Word(w),
                ..
            }) => Some(w),
            _ => None,
        }
    }

    fn word(&mut self, what: &str) -> Result<String, ParseError> {
        match self.peek_word() {
            Some(w) => {
                let w = w.to_string();
                self.pos += 1;
                Ok(w)
            }
            None => Err(self.unexpected(what)),
        }
    }

    fn unexpected(&self, what: &str) -> ParseError {
        match self.peek() {
            Some(t) => self.error(
                ParseErrorKind::Syntax,
                format!("expected {what}, found {}", t.describe()),
            ),
            None => self.error(ParseErrorKind::Syntax, format!("expected {what}")),
        }
    }

    fn keyword(&mut self, kw: &str) -> Result<(), ParseError> {
        if self.peek_word() == Some(kw) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.unexpected(&format!("`{kw}`")))
        }
    }

    fn eat_keyword(&mut self, kw: &str) -> bool {
        if self.peek_word() == Some(kw) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn thread_number(&mut self) -> Result<ThreadId, ParseError> {
        let column = self.here();
        let word = self.word("a thread number")?;
        parse_thread_number(&word).ok_or_else(|| {
            syntax(
                self.line,
                column,
                format!("`{word}` is not a positive thread number"),
            )
        })
    }

    fn state(&mut self) -> Result<StateId, ParseError> {
        let column = self.here();
        let word = self.word("a state name")?;
        word.parse::<StateId>().map_err(|_| ParseError {
            line: self.line,
            column,
            kind: ParseErrorKind::UnknownStateName,
            message: format!("unknown state name `{word}`"),
        })
    }

    fn assembly_state(&mut self) -> Result<StateId, ParseError> {
        let column = self.here();
        let word = self.word("an assembly state")?;
        if let Ok(state) = StateId::assembly_from_name(&word) {
            return Ok(state);
        }
        let kind = if word.parse::<StateId>().is_ok() {
            ParseErrorKind::Syntax
        } else {
            ParseErrorKind::UnknownStateName
        };
        Err(ParseError {
            line: self.line,
            column,
            kind,
            message: format!("`{word}` is not an assembly state (physical, spontaneous, planned)"),
        })
    }

    fn event_name(&mut self) -> Result<String, ParseError> {
        let column = self.here();
        let word = self.word("an event name")?;
        if word
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.' | ':'))
        {
            Ok(word)
        } else {
            Err(syntax(
                self.line,
                column,
                format!("invalid event name `{word}`"),
            ))
        }
    }

    fn selector(&mut self, allow_others: bool) -> Result<ThreadSelector, ParseError> {
        let column = self.here();
        let word = self.word("a thread selector")?;
        let malformed = |why: String| ParseError {
            line: self.line,
            column,
            kind: ParseErrorKind::MalformedSelector,
            message: why,
        };
        match word.as_str() {
            "*" => Ok(ThreadSelector::All),
            "others" if allow_others => Ok(ThreadSelector::Others),
            "others" => Err(malformed(
                "`others` is only valid for affected threads of reaction rules".into(),
            )),
            w => parse_thread_number(w)
                .map(ThreadSelector::Thread)
                .ok_or_else(|| malformed(format!("malformed thread selector `{w}`"))),
        }
    }

    fn annotations(
        &mut self,
        allowed: bool,
    ) -> Result<(Option<String>, Option<String>), ParseError> {
        let mut label = None;
        let mut note = None;
        if allowed {
            if let Some(Token {
                kind: TokenKind::Label(l),
                ..
            }) = self.peek()
            {
                label = Some(l.clone());
                self.pos += 1;
            }
            if let Some(Token {
                kind: TokenKind::Quoted(n),
                ..
            }) = self.peek()
            {
                note = Some(n.clone());
                self.pos += 1;
            }
        }
        match self.peek() {
            None => Ok((label, note)),
            Some(t) => Err(self.error(
                ParseErrorKind::Syntax,
                format!("unexpected {}", t.describe()),
            )),
        }
    }

    fn statement(&mut self) -> Result<Statement, ParseError> {
        let head = self.word("a statement")?;
        let kind = match head.as_str() {
            "thread" => {
                let thread = self.thread_number()?;
                let verb = self.word("`assemble`, `goto` or `end`")?;
                match verb.as_str() {
                    "assemble" => StatementKind::Assemble {
                        thread,
                        state: self.assembly_state()?,
                    },
                    "goto" => StatementKind::Goto {
                        thread,
                        state: self.state()?,
                    },
                    "end" => StatementKind::End { thread },
                    other => {
                        self.pos -= 1;
                        return Err(self.error(
                            ParseErrorKind::Syntax,
                            format!("expected `assemble`, `goto` or `end`, found `{other}`"),
                        ));
                    }
                }
            }
            "fork" => {
                let child = self.thread_number()?;
                self.keyword("from")?;
                let parent = self.thread_number()?;
                let assembly = if self.eat_keyword("assembly") {
                    Some(self.assembly_state()?)
                } else {
                    None
                };
                let initial = if self.eat_keyword("initial") {
                    Some(self.state()?)
                } else {
                    None
                };
                StatementKind::Fork {
                    child,
                    parent,
                    assembly,
                    initial,
                }
            }
            "event" => StatementKind::Event {
                name: self.event_name()?,
            },
            "rule" => {
                self.keyword("on")?;
                let trigger = self.word("`event` or `enter`")?;
                match trigger.as_str() {
                    "event" => {
                        let event = self.event_name()?;
                        self.keyword("thread")?;
                        let selector = self.selector(false)?;
                        self.keyword("goto")?;
                        StatementKind::EventRule {
                            event,
                            selector,
                            target: self.state()?,
                        }
                    }
                    "enter" => {
                        let watched_state = self.state()?;
                        let watched = if self.eat_keyword("by") {
                            self.selector(false)?
                        } else {
                            ThreadSelector::All
                        };
                        self.keyword("thread")?;
                        let affected = self.selector(true)?;
                        self.keyword("goto")?;
                        StatementKind::ReactionRule {
                            watched_state,
                            watched,
                            affected,
                            target: self.state()?,
                        }
                    }
                    other => {
                        self.pos -= 1;
                        return Err(self.error(
                            ParseErrorKind::Syntax,
                            format!("expected `event` or `enter`, found `{other}`"),
                        ));
                    }
                }
            }
            other => {
                self.pos -= 1;
                return Err(self.error(
                    ParseErrorKind::Syntax,
                    format!("unknown statement `{other}`"),
                ));
            }
        };
        let (timestamp, note) = self.annotations(kind.takes_annotations())?;
        Ok(Statement {
            kind,
            timestamp,
            note,
            line: self.line,
        })
    }
}

fn parse_thread_number(word: &str) -> Option<ThreadId> {
    if word.is_empty() || !word.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    word.parse::<u32>().ok().and_then(ThreadId::new)
}

pub fn parse(text: &str) -> Result<Trace, ParseError> {
    parse_named(text, "<input>")
}

/// Parses a whole trace. The first error aborts; no partial trace is
/// returned.
pub fn parse_named(text: &str, source: &str) -> Result<Trace, ParseError> {
    let mut statements = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let tokens = tokenize(raw, line)?;
        if tokens.is_empty() {
            continue;
        }
        let mut parser = LineParser {
            tokens,
            pos: 0,
            line,
            end_column: raw.chars().count() + 1,
        };
        statements.push(parser.statement()?);
    }
    Ok(Trace::new(source, statements))
}

/// Canonical text: one statement per line, each newline-terminated.
pub fn serialize(trace: &Trace) -> String {
    let mut out = String::new();
    for statement in &trace.statements {
        let _ = writeln!(out, "{statement}");
    }
    out
}

/// Built-in encoding of the rally case study: three sub-crowds, a police
/// cordon event and the coupled escape of the spectators.
pub fn golden_case_study() -> Trace {
    parse_named(CASE_STUDY, "case_study.crowd").expect("built-in case study parses")
}

pub fn golden_case_study_text() -> &'static str {
    CASE_STUDY
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("line {line}: {message}")]
pub struct ReplayError {
    pub line: usize,
    pub message: String,
    pub source_error: Option<EngineError>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ReplayReport {
    /// Transitions commanded by `goto`/`end` statements.
    pub transitions: usize,
    /// (line, transition) for every rule-forced transition.
    pub forced: Vec<(usize, ForcedTransition)>,
    /// (line, skip) for every rule application that could not happen.
    pub skipped: Vec<(usize, SkippedForce)>,
}

impl ReplayReport {
    fn absorb(&mut self, line: usize, cascade: CascadeReport) {
        self.forced
            .extend(cascade.forced.into_iter().map(|f| (line, f)));
        self.skipped
            .extend(cascade.skipped.into_iter().map(|s| (line, s)));
    }
}

#[derive(Debug, Clone)]
pub struct Replay {
    pub world: World,
    pub report: ReplayReport,
}

/// Runs a trace against a fresh world. Stops at the first hard error.
pub fn replay(trace: &Trace, schema: &ModelSchema) -> Result<Replay, ReplayError> {
    let mut world = World::new(schema.clone());
    let mut report = ReplayReport::default();
    for statement in &trace.statements {
        run_statement(&mut world, &mut report, statement)?;
    }
    Ok(Replay { world, report })
}

fn run_statement(
    world: &mut World,
    report: &mut ReplayReport,
    statement: &Statement,
) -> Result<(), ReplayError> {
    let line = statement.line;
    let fail = |message: String| ReplayError {
        line,
        message,
        source_error: None,
    };
    let engine = |e: EngineError| ReplayError {
        line,
        message: e.to_string(),
        source_error: Some(e),
    };
    let expect_new = |world: &World, id: ThreadId| {
        if world.inspect(id).is_ok() {
            return Err(fail(format!("thread {id} already exists")));
        }
        let next = world.peek_next_id();
        if id != next {
            return Err(fail(format!(
                "thread {id} out of order: the next new thread must be {next}"
            )));
        }
        Ok(())
    };

    match &statement.kind {
        StatementKind::Assemble { thread, state } => {
            expect_new(world, *thread)?;
            world
                .spawn_thread(*state, statement.annotation())
                .map_err(engine)?;
        }
        StatementKind::Goto { thread, state } => {
            let applied = world
                .apply_transition(*thread, *state, statement.annotation())
                .map_err(engine)?;
            report.transitions += 1;
            report.absorb(line, applied.reactions);
        }
        StatementKind::End { thread } => {
            let current = world.inspect(*thread).map_err(engine)?.current();
            if current.phase() != PhaseId::Dispersal {
                return Err(fail(format!(
                    "thread {thread} cannot end from {current}: end requires a dispersal state"
                )));
            }
            let applied = world
                .apply_transition(*thread, StateId::Terminal, statement.annotation())
                .map_err(engine)?;
            report.transitions += 1;
            report.absorb(line, applied.reactions);
        }
        StatementKind::Fork {
            child,
            parent,
            assembly,
            initial,
        } => {
            expect_new(world, *child)?;
            let spec = ForkSpec {
                assembly: assembly.unwrap_or(StateId::AssemblySpontaneous),
                initial: *initial,
            };
            world
                .fork_thread(*parent, spec, statement.annotation())
                .map_err(engine)?;
        }
        StatementKind::Event { name } => {
            let cascade = world
                .dispatch_event(name, statement.timestamp.clone())
                .map_err(engine)?;
            report.absorb(line, cascade);
        }
        StatementKind::EventRule {
            event,
            selector,
            target,
        } => {
            world
                .register_event_rule(EventRule {
                    event: event.clone(),
                    selector: *selector,
                    target: *target,
                })
                .map_err(|e| fail(e.to_string()))?;
        }
        StatementKind::ReactionRule {
            watched_state,
            watched,
            affected,
            target,
        } => {
            world
                .register_reaction_rule(ReactionRule {
                    watched_state: *watched_state,
                    watched: *watched,
                    affected: *affected,
                    target: *target,
                })
                .map_err(|e| fail(e.to_string()))?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::HistoryKind;
    use crate::schema::default_schema;
    use StateId::*;

    fn tid(n: u32) -> ThreadId {
        ThreadId::new(n).unwrap()
    }

    #[test]
    fn parses_assemble() {
        let t = parse("thread 1 assemble planned").unwrap();
        assert_eq!(
            t.statements[0].kind,
            StatementKind::Assemble {
                thread: tid(1),
                state: AssemblyPlanned
            }
        );
        assert_eq!(t.statements[0].line, 1);
    }

    #[test]
    fn misspelt_state_is_rejected() {
        let e = parse("thread 1 goto structure.mobile.laminer").unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::UnknownStateName);
        assert_eq!((e.line, e.column), (1, 15));
        assert_eq!(
            e.to_string(),
            "line 1, column 15: unknown state name `structure.mobile.laminer`"
        );
    }

    #[test]
    fn comments_blank_lines_and_annotations() {
        let text = "# header\n\nthread 1 assemble planned @09:00 \"gates \\\"open\\\" \\\\ now\" # trailing\n   \nthread 1 goto mode.spectator\n";
        let t = parse(text).unwrap();
        assert_eq!(t.len(), 2);
        let s = &t.statements[0];
        assert_eq!(s.line, 3);
        assert_eq!(s.timestamp.as_deref(), Some("09:00"));
        assert_eq!(s.note.as_deref(), Some("gates \"open\" \\ now"));
        assert_eq!(t.statements[1].line, 5);
        assert_eq!(
            s.to_string(),
            "thread 1 assemble planned @09:00 \"gates \\\"open\\\" \\\\ now\""
        );
    }

    #[test]
    fn every_statement_form_parses() {
        let text = "\
thread 1 assemble physical
thread 1 goto MODE.Spectator @t1
fork 2 from 1
fork 3 from 1 assembly planned
fork 4 from 1 initial structure.static.solid
fork 5 from 1 assembly assembly.spontaneous initial mode.expressive @c \"splinter\"
event police_cordon @d
rule on event police_cordon thread 3 goto mode.conflict
rule on event all_clear thread * goto terminal
rule on enter mode.conflict thread 2 goto dispersal.escaping
rule on enter mode.conflict by 3 thread others goto dispersal.escaping
rule on enter mode.conflict by * thread * goto dispersal.escaping
thread 1 end @z
";
        let t = parse(text).unwrap();
        assert_eq!(t.len(), 13);
        assert_eq!(
            t.statements[5].kind,
            StatementKind::Fork {
                child: tid(5),
                parent: tid(1),
                assembly: Some(AssemblySpontaneous),
                initial: Some(ModeExpressive)
            }
        );
        assert_eq!(
            t.statements[10].kind,
            StatementKind::ReactionRule {
                watched_state: ModeConflict,
                watched: ThreadSelector::Thread(tid(3)),
                affected: ThreadSelector::Others,
                target: DispersalEscaping
            }
        );
        let canonical = serialize(&t);
        assert!(canonical.contains("thread 1 goto mode.spectator @t1\n"));
        assert!(
            canonical.contains("rule on enter mode.conflict thread * goto dispersal.escaping\n")
        );
        let again = parse(&canonical).unwrap();
        assert!(again.same_structure(&t));
        assert_eq!(serialize(&again), canonical);
    }

    #[test]
    fn parse_errors() {
        let cases: &[(&str, ParseErrorKind, usize)] = &[
            ("thread 0 goto mode.spectator", ParseErrorKind::Syntax, 8),
            ("thread one goto mode.spectator", ParseErrorKind::Syntax, 8),
            ("thread 1 walk mode.spectator", ParseErrorKind::Syntax, 10),
            (
                "thread 1 assemble spectator",
                ParseErrorKind::UnknownStateName,
                19,
            ),
            (
                "thread 1 assemble mode.spectator",
                ParseErrorKind::Syntax,
                19,
            ),
            ("thread 1 goto", ParseErrorKind::Syntax, 14),
            (
                "thread 1 goto mode.spectator extra",
                ParseErrorKind::Syntax,
                30,
            ),
            (
                "thread 1 goto mode.spectator \"open",
                ParseErrorKind::Syntax,
                30,
            ),
            ("thread 1 goto mode.spectator @", ParseErrorKind::Syntax, 30),
            (
                "thread 1 goto mode.spectator \"x\" @t",
                ParseErrorKind::Syntax,
                34,
            ),
            (
                "rule on event e thread x goto mode.conflict",
                ParseErrorKind::MalformedSelector,
                24,
            ),
            (
                "rule on event e thread others goto mode.conflict",
                ParseErrorKind::MalformedSelector,
                24,
            ),
            (
                "rule on enter mode.conflict by others thread 1 goto mode.spectator",
                ParseErrorKind::MalformedSelector,
                32,
            ),
            (
                "rule on event e thread 1 goto mode.conflict @t",
                ParseErrorKind::Syntax,
                45,
            ),
            (
                "rule on leave mode.conflict thread 1 goto mode.spectator",
                ParseErrorKind::Syntax,
                9,
            ),
            ("event bad!name", ParseErrorKind::Syntax, 7),
            ("fork 2 1", ParseErrorKind::Syntax, 8),
            ("launch 1", ParseErrorKind::Syntax, 1),
            (
                "thread 1 goto mode.spectator\"x\"",
                ParseErrorKind::Syntax,
                29,
            ),
            (
                "thread 1 goto mode.spectator \"bad \\n escape\"",
                ParseErrorKind::Syntax,
                35,
            ),
        ];
        for &(text, kind, column) in cases {
            let e = parse(text).unwrap_err();
            assert_eq!((e.kind, e.line, e.column), (kind, 1, column), "{text}: {e}");
        }
        let e = parse("thread 1 assemble planned\n\nthread 1 goto nowhere\n").unwrap_err();
        assert_eq!(e.line, 3);
    }

    #[test]
    fn empty_trace_serializes_to_empty_text() {
        assert_eq!(serialize(&Trace::default()), "");
        assert!(parse("\n# nothing\n").unwrap().is_empty());
    }

    #[test]
    fn golden_has_sixteen_statements_and_round_trips() {
        let golden = golden_case_study();
        assert_eq!(golden.len(), 16);
        let again = parse(&serialize(&golden)).unwrap();
        assert!(again.same_structure(&golden));
    }

    #[test]
    fn golden_replay() {
        let replay = replay(&golden_case_study(), &default_schema()).unwrap();
        let world = &replay.world;
        assert!(replay.report.skipped.is_empty());
        assert_eq!(replay.report.forced.len(), 2);
        for id in 1..=3 {
            assert!(!world.inspect(tid(id)).unwrap().alive());
        }
        let states = |id| -> Vec<StateId> {
            world
                .thread_trace(tid(id))
                .unwrap()
                .iter()
                .map(|e| e.state)
                .collect()
        };
        assert_eq!(
            states(1),
            vec![
                AssemblyPlanned,
                ModeTransitory,
                MobileLaminar,
                DispersalRoutine,
                Terminal
            ]
        );
        assert_eq!(
            states(2),
            vec![
                AssemblyPlanned,
                ModeSpectator,
                StaticSolid,
                DispersalEscaping,
                Terminal
            ]
        );
        assert_eq!(
            states(3),
            vec![
                AssemblySpontaneous,
                ModeExpressive,
                ModeConflict,
                MobileChaotic,
                DispersalCoerced,
                Terminal
            ]
        );
        let t2 = world.thread_trace(tid(2)).unwrap();
        assert_eq!(t2[3].kind, HistoryKind::ForcedByReaction);
        let t3 = world.thread_trace(tid(3)).unwrap();
        assert_eq!(t3[2].kind, HistoryKind::ForcedByEvent);
        assert_eq!(world.event_log().len(), 1);
    }

    #[test]
    fn replay_errors_name_lines() {
        let e = replay(
            &parse("thread 1 goto mode.spectator").unwrap(),
            &default_schema(),
        )
        .unwrap_err();
        assert_eq!(e.line, 1);
        assert!(e.message.contains("unknown thread 1"));

        let text = "thread 1 assemble planned\nthread 1 goto mode.spectator\nthread 1 end\n";
        let e = replay(&parse(text).unwrap(), &default_schema()).unwrap_err();
        assert_eq!(e.line, 3);
        assert!(e.message.contains("requires a dispersal state"), "{e}");

        let text = "thread 1 assemble planned\nthread 1 goto mode.spectator\nthread 1 goto assembly.planned\n";
        let e = replay(&parse(text).unwrap(), &default_schema()).unwrap_err();
        assert_eq!(e.line, 3);
        assert!(matches!(
            e.source_error,
            Some(EngineError::IllegalTransition { .. })
        ));

        let e = replay(
            &parse("thread 2 assemble planned").unwrap(),
            &default_schema(),
        )
        .unwrap_err();
        assert!(e.message.contains("out of order"), "{e}");

        let e = replay(
            &parse("thread 1 assemble planned\nthread 1 assemble planned").unwrap(),
            &default_schema(),
        )
        .unwrap_err();
        assert_eq!(e.line, 2);
        assert!(e.message.contains("already exists"));

        let e = replay(
            &parse("rule on enter mode.conflict thread * goto mode.conflict").unwrap(),
            &default_schema(),
        )
        .unwrap_err();
        assert_eq!(e.line, 1);
    }

    #[test]
    fn replay_is_deterministic() {
        let golden = golden_case_study();
        let a = replay(&golden, &default_schema()).unwrap();
        let b = replay(&golden, &default_schema()).unwrap();
        let histories = |r: &Replay| format!("{:?}", r.world.threads().collect::<Vec<_>>());
        assert_eq!(histories(&a), histories(&b));
        assert_eq!(a.report, b.report);
    }
}
