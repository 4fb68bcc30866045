//! The canonical crowd state space and its transition topology.
//!
//! A crowd moves through four phases (Assembly, Mode, Structure, Dispersal)
//! and ends in an absorbing terminal state. The inventory is closed: 18
//! states, listed in [`StateId::ALL`] in canonical order (phase order, then
//! lexicographic by name).

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SchemaError {
    #[error("unknown state name `{0}`")]
    UnknownState(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PhaseId {
    Assembly,
    Mode,
    Structure,
    Dispersal,
    Terminal,
}

impl PhaseId {
    pub const ALL: [PhaseId; 5] = [
        PhaseId::Assembly,
        PhaseId::Mode,
        PhaseId::Structure,
        PhaseId::Dispersal,
        PhaseId::Terminal,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PhaseId::Assembly => "assembly",
            PhaseId::Mode => "mode",
            PhaseId::Structure => "structure",
            PhaseId::Dispersal => "dispersal",
            PhaseId::Terminal => "terminal",
        }
    }

    /// States belonging to this phase, in canonical order.
    pub fn states(self) -> impl Iterator<Item = StateId> {
        StateId::ALL.into_iter().filter(move |s| s.phase() == self)
    }
}

impl fmt::Display for PhaseId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One of the 18 canonical crowd states.
///
/// Variants are declared in canonical order so the derived `Ord` is the
/// canonical ordering used throughout the crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum StateId {
    AssemblyPhysical,
    AssemblyPlanned,
    AssemblySpontaneous,
    ModeConflict,
    ModeExpressive,
    ModeParticipatory,
    ModeSpectator,
    ModeTransitory,
    MobileChaotic,
    MobileLaminar,
    MobileRegular,
    StaticCrush,
    StaticSolid,
    StaticSparse,
    DispersalCoerced,
    DispersalEscaping,
    DispersalRoutine,
    Terminal,
}

/// Mobility class of a Structure state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mobility {
    Mobile,
    Static,
}

impl StateId {
    pub const COUNT: usize = 18;

    pub const ALL: [StateId; 18] = [
        StateId::AssemblyPhysical,
        StateId::AssemblyPlanned,
        StateId::AssemblySpontaneous,
        StateId::ModeConflict,
        StateId::ModeExpressive,
        StateId::ModeParticipatory,
        StateId::ModeSpectator,
        StateId::ModeTransitory,
        StateId::MobileChaotic,
        StateId::MobileLaminar,
        StateId::MobileRegular,
        StateId::StaticCrush,
        StateId::StaticSolid,
        StateId::StaticSparse,
        StateId::DispersalCoerced,
        StateId::DispersalEscaping,
        StateId::DispersalRoutine,
        StateId::Terminal,
    ];

    pub fn phase(self) -> PhaseId {
        use StateId::*;
        match self {
            AssemblyPhysical | AssemblyPlanned | AssemblySpontaneous => PhaseId::Assembly,
            ModeConflict | ModeExpressive | ModeParticipatory | ModeSpectator | ModeTransitory => {
                PhaseId::Mode
            }
            MobileChaotic | MobileLaminar | MobileRegular | StaticCrush | StaticSolid
            | StaticSparse => PhaseId::Structure,
            DispersalCoerced | DispersalEscaping | DispersalRoutine => PhaseId::Dispersal,
            Terminal => PhaseId::Terminal,
        }
    }

    /// Canonical lowercase dotted name, e.g. `structure.mobile.laminar`.
    pub fn name(self) -> &'static str {
        use StateId::*;
        match self {
            AssemblyPhysical => "assembly.physical",
            AssemblyPlanned => "assembly.planned",
            AssemblySpontaneous => "assembly.spontaneous",
            ModeConflict => "mode.conflict",
            ModeExpressive => "mode.expressive",
            ModeParticipatory => "mode.participatory",
            ModeSpectator => "mode.spectator",
            ModeTransitory => "mode.transitory",
            MobileChaotic => "structure.mobile.chaotic",
            MobileLaminar => "structure.mobile.laminar",
            MobileRegular => "structure.mobile.regular",
            StaticCrush => "structure.static.crush",
            StaticSolid => "structure.static.solid",
            StaticSparse => "structure.static.sparse",
            DispersalCoerced => "dispersal.coerced",
            DispersalEscaping => "dispersal.escaping",
            DispersalRoutine => "dispersal.routine",
            Terminal => "terminal",
        }
    }

    /// The name without its phase prefix (`planned`, `mobile.laminar`, ...).
    pub fn local_name(self) -> &'static str {
        let name = self.name();
        match name.split_once('.') {
            Some((_, rest)) => rest,
            None => name,
        }
    }

    pub fn mobility(self) -> Option<Mobility> {
        use StateId::*;
        match self {
            MobileChaotic | MobileLaminar | MobileRegular => Some(Mobility::Mobile),
            StaticCrush | StaticSolid | StaticSparse => Some(Mobility::Static),
            _ => None,
        }
    }

    /// Parses an Assembly state given either as `planned` or `assembly.planned`.
    pub fn assembly_from_name(name: &str) -> Result<StateId, SchemaError> {
        let lower = name.to_ascii_lowercase();
        let full = if lower.contains('.') {
            lower
        } else {
            format!("assembly.{lower}")
        };
        match full.parse::<StateId>() {
            Ok(s) if s.phase() == PhaseId::Assembly => Ok(s),
            _ => Err(SchemaError::UnknownState(name.to_string())),
        }
    }

    pub(crate) fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for StateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StateId {
    type Err = SchemaError;

    /// Accepts canonical dotted names, case-insensitively.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        StateId::ALL
            .into_iter()
            .find(|state| state.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| SchemaError::UnknownState(s.to_string()))
    }
}

/// Topology switches. The default is the most permissive topology; every
/// flag either keeps or removes a symmetric group of edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SchemaOptions {
    pub mode_internal: bool,
    pub structure_internal: bool,
    pub dispersal_internal: bool,
    /// Mode <-> Structure edges.
    pub mode_structure: bool,
    /// Dispersal -> Mode and Dispersal -> Structure edges.
    pub dispersal_return: bool,
    /// Removes the static.sparse <-> static.crush edges so static density
    /// only changes one band at a time.
    pub adjacent_static_only: bool,
}

impl Default for SchemaOptions {
    fn default() -> Self {
        Self {
            mode_internal: true,
            structure_internal: true,
            dispersal_internal: true,
            mode_structure: true,
            dispersal_return: true,
            adjacent_static_only: false,
        }
    }
}

/// The state inventory plus a decidable legality relation over ordered pairs.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ModelSchema {
    options: SchemaOptions,
    legal: [[bool; StateId::COUNT]; StateId::COUNT],
}

impl Default for ModelSchema {
    fn default() -> Self {
        default_schema()
    }
}

pub fn default_schema() -> ModelSchema {
    ModelSchema::with_options(SchemaOptions::default())
}

impl ModelSchema {
    pub fn with_options(options: SchemaOptions) -> Self {
        let mut legal = [[false; StateId::COUNT]; StateId::COUNT];
        for from in StateId::ALL {
            for to in StateId::ALL {
                legal[from.index()][to.index()] = edge_allowed(&options, from, to);
            }
        }
        Self { options, legal }
    }

    pub fn options(&self) -> &SchemaOptions {
        &self.options
    }

    /// All states of the schema in canonical order.
    pub fn states(&self) -> &'static [StateId] {
        &StateId::ALL
    }

    pub fn is_legal_transition(&self, from: StateId, to: StateId) -> bool {
        self.legal[from.index()][to.index()]
    }

    /// Legal targets of `from` in canonical order.
    pub fn legal_transitions_from(&self, from: StateId) -> Vec<StateId> {
        StateId::ALL
            .into_iter()
            .filter(|&to| self.is_legal_transition(from, to))
            .collect()
    }

    /// Name-based legality query, for callers holding unparsed state names.
    pub fn is_legal_by_name(&self, from: &str, to: &str) -> Result<bool, SchemaError> {
        Ok(self.is_legal_transition(from.parse()?, to.parse()?))
    }

    /// Graphviz rendering: one cluster per phase, terminal as a free node,
    /// bidirectional pairs collapsed into a single `dir=both` edge.
    pub fn to_dot(&self) -> String {
        let mut out = String::new();
        out.push_str("digraph crowd_model {\n");
        out.push_str("  compound=true;\n");
        out.push_str("  node [shape=ellipse, style=filled];\n");
        for phase in PhaseId::ALL {
            if phase == PhaseId::Terminal {
                continue;
            }
            let _ = writeln!(out, "  subgraph cluster_{} {{", phase.name());
            let _ = writeln!(out, "    label=\"{}\";", capitalize(phase.name()));
            let _ = writeln!(out, "    color=\"{}\";", phase_colour(phase));
            for state in phase.states() {
                let _ = writeln!(
                    out,
                    "    \"{}\" [label=\"{}\", fillcolor=\"{}\"];",
                    state.name(),
                    capitalize(state.local_name()),
                    phase_colour(phase)
                );
            }
            out.push_str("  }\n");
        }
        let _ = writeln!(
            out,
            "  \"terminal\" [label=\"Terminal\", shape=doublecircle, fillcolor=\"white\"];"
        );
        for from in StateId::ALL {
            for to in StateId::ALL {
                if !self.is_legal_transition(from, to) {
                    continue;
                }
                let back = self.is_legal_transition(to, from);
                if back && to < from {
                    // already emitted as a dir=both edge
                    continue;
                }
                if back {
                    let _ = writeln!(out, "  \"{}\" -> \"{}\" [dir=both];", from, to);
                } else {
                    let _ = writeln!(out, "  \"{}\" -> \"{}\";", from, to);
                }
            }
        }
        out.push_str("}\n");
        out
    }
}

pub fn is_legal_transition(schema: &ModelSchema, from: StateId, to: StateId) -> bool {
    schema.is_legal_transition(from, to)
}

pub fn legal_transitions_from(schema: &ModelSchema, from: StateId) -> Vec<StateId> {
    schema.legal_transitions_from(from)
}

pub fn to_dot(schema: &ModelSchema) -> String {
    schema.to_dot()
}

fn edge_allowed(options: &SchemaOptions, from: StateId, to: StateId) -> bool {
    use PhaseId::*;
    if from == to {
        return false;
    }
    match (from.phase(), to.phase()) {
        (Terminal, _) | (_, Assembly) => false,
        (Assembly, Mode | Structure | Dispersal) => true,
        (Assembly, Terminal) => false,
        (Mode, Mode) => options.mode_internal,
        (Structure, Structure) => {
            if !options.structure_internal {
                return false;
            }
            let sparse_crush = matches!(
                (from, to),
                (StateId::StaticSparse, StateId::StaticCrush)
                    | (StateId::StaticCrush, StateId::StaticSparse)
            );
            !(options.adjacent_static_only && sparse_crush)
        }
        (Mode, Structure) | (Structure, Mode) => options.mode_structure,
        (Mode | Structure, Dispersal) => true,
        (Dispersal, Mode | Structure) => options.dispersal_return,
        (Dispersal, Dispersal) => options.dispersal_internal,
        (Dispersal, Terminal) => true,
        (Mode | Structure, Terminal) => false,
    }
}

fn phase_colour(phase: PhaseId) -> &'static str {
    match phase {
        PhaseId::Assembly => "#f7e26b",
        PhaseId::Mode => "#9fd89f",
        PhaseId::Structure => "#9cc3e6",
        PhaseId::Dispersal => "#c8c8c8",
        PhaseId::Terminal => "white",
    }
}

fn capitalize(s: &str) -> String {
    s.split('.')
        .map(|part| {
            let mut chars = part.chars();
            match chars.next() {
                Some(c) => c.to_ascii_uppercase().to_string() + chars.as_str(),
                None => String::new(),
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}
