//! Weighted transitions and seeded random walks over the state graph.
//!
//! Each ordered legal pair carries a non-negative weight; pairs without an
//! explicit entry use the table's default weight (1.0 unless changed), so an
//! empty table walks uniformly over the legal targets.
//!
//! Randomness comes from [`WalkRng`], ChaCha8 seeded with
//! `seed_from_u64(seed)`. A draw takes one `next_u64`, keeps its top 53 bits
//! as a uniform `u` in `[0, 1)`, and selects the first target (canonical
//! order) whose cumulative weight exceeds `u * total`. Output is therefore a
//! pure function of seed, table and start state.

use std::collections::BTreeMap;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use thiserror::Error;

use crate::schema::{ModelSchema, PhaseId, StateId};

pub type WalkRng = ChaCha8Rng;

pub fn walk_rng(seed: u64) -> WalkRng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn unit_f64(rng: &mut impl RngCore) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StochasticError {
    #[error("transition {from} -> {to} is not legal")]
    IllegalPair { from: StateId, to: StateId },
    #[error("weight {0} is not a finite non-negative number")]
    BadWeight(f64),
    #[error("all outgoing weights of {0} are zero")]
    ZeroMass(StateId),
    #[error("{0} has no outgoing transitions")]
    TerminalState(StateId),
    #[error("walk must start in an assembly state, got {0}")]
    NonAssemblyStart(StateId),
    #[error("max_steps must be at least 1")]
    ZeroSteps,
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("line {line}: {message}")]
pub struct WeightFileError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightTable {
    schema: ModelSchema,
    explicit: BTreeMap<(StateId, StateId), f64>,
    default_weight: f64,
}

fn check_weight(w: f64) -> Result<f64, StochasticError> {
    if w.is_finite() && w >= 0.0 {
        Ok(w)
    } else {
        Err(StochasticError::BadWeight(w))
    }
}

impl WeightTable {
    pub fn new(schema: ModelSchema) -> Self {
        Self {
            schema,
            explicit: BTreeMap::new(),
            default_weight: 1.0,
        }
    }

    pub fn schema(&self) -> &ModelSchema {
        &self.schema
    }

    pub fn default_weight(&self) -> f64 {
        self.default_weight
    }

    pub fn set_default_weight(&mut self, weight: f64) -> Result<(), StochasticError> {
        self.default_weight = check_weight(weight)?;
        Ok(())
    }

    pub fn set_weight(
        &mut self,
        from: StateId,
        to: StateId,
        weight: f64,
    ) -> Result<(), StochasticError> {
        if !self.schema.is_legal_transition(from, to) {
            return Err(StochasticError::IllegalPair { from, to });
        }
        self.explicit.insert((from, to), check_weight(weight)?);
        Ok(())
    }

    /// Effective weight of a pair: explicit entry, default for other legal
    /// pairs, zero for illegal ones.
    pub fn weight(&self, from: StateId, to: StateId) -> f64 {
        if !self.schema.is_legal_transition(from, to) {
            return 0.0;
        }
        self.explicit
            .get(&(from, to))
            .copied()
            .unwrap_or(self.default_weight)
    }

    pub fn explicit_entries(&self) -> impl Iterator<Item = (StateId, StateId, f64)> + '_ {
        self.explicit.iter().map(|(&(a, b), &w)| (a, b, w))
    }

    fn outgoing(&self, from: StateId) -> Result<(Vec<(StateId, f64)>, f64), StochasticError> {
        let targets = self.schema.legal_transitions_from(from);
        if targets.is_empty() {
            return Err(StochasticError::TerminalState(from));
        }
        let weighted: Vec<(StateId, f64)> = targets
            .into_iter()
            .map(|t| (t, self.weight(from, t)))
            .collect();
        let total: f64 = weighted.iter().map(|(_, w)| w).sum();
        if total <= 0.0 {
            return Err(StochasticError::ZeroMass(from));
        }
        Ok((weighted, total))
    }

    /// Next-state distribution over every legal target of `from`, in
    /// canonical order.
    pub fn normalize(&self, from: StateId) -> Result<Vec<(StateId, f64)>, StochasticError> {
        let (weighted, total) = self.outgoing(from)?;
        Ok(weighted.into_iter().map(|(t, w)| (t, w / total)).collect())
    }

    pub fn sample_next(
        &self,
        from: StateId,
        rng: &mut impl RngCore,
    ) -> Result<StateId, StochasticError> {
        let (weighted, total) = self.outgoing(from)?;
        let threshold = unit_f64(rng) * total;
        let mut acc = 0.0;
        let mut last_positive = None;
        for (target, w) in weighted {
            if w <= 0.0 {
                continue;
            }
            acc += w;
            last_positive = Some(target);
            if threshold < acc {
                return Ok(target);
            }
        }
        // rounding left `threshold` at or just past the final sum
        Ok(last_positive.expect("positive total implies a positive weight"))
    }

    /// Loads the line-based weight format:
    ///
    /// ```text
    /// # comment
    /// default 0
    /// assembly.planned -> mode.spectator 2.5
    /// ```
    pub fn parse(text: &str, schema: ModelSchema) -> Result<Self, WeightFileError> {
        let mut table = WeightTable::new(schema);
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let err = |message: String| WeightFileError { line, message };
            let content = raw.split('#').next().unwrap_or("");
            let tokens: Vec<&str> = content.split_whitespace().collect();
            match tokens.as_slice() {
                [] => {}
                ["default", value] => {
                    let w = parse_number(value).map_err(err)?;
                    table
                        .set_default_weight(w)
                        .map_err(|e| err(e.to_string()))?;
                }
                [from, "->", to, value] => {
                    let from = from.parse::<StateId>().map_err(|e| err(e.to_string()))?;
                    let to = to.parse::<StateId>().map_err(|e| err(e.to_string()))?;
                    let w = parse_number(value).map_err(err)?;
                    if table.explicit.contains_key(&(from, to)) {
                        return Err(err(format!("duplicate weight for {from} -> {to}")));
                    }
                    table
                        .set_weight(from, to, w)
                        .map_err(|e| err(e.to_string()))?;
                }
                _ => {
                    return Err(err(format!(
                        "expected `<from> -> <to> <weight>` or `default <weight>`, got `{}`",
                        content.trim()
                    )))
                }
            }
        }
        Ok(table)
    }
}

fn parse_number(token: &str) -> Result<f64, String> {
    token
        .parse::<f64>()
        .map_err(|_| format!("`{token}` is not a number"))
}

pub fn normalize(
    table: &WeightTable,
    from: StateId,
) -> Result<Vec<(StateId, f64)>, StochasticError> {
    table.normalize(from)
}

pub fn sample_next(
    table: &WeightTable,
    from: StateId,
    rng: &mut impl RngCore,
) -> Result<StateId, StochasticError> {
    table.sample_next(from, rng)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WalkConfig {
    pub seed: u64,
    pub max_steps: usize,
    pub start: StateId,
    /// Permits starting outside the Assembly phase.
    pub any_start: bool,
}

impl WalkConfig {
    pub fn new(seed: u64, max_steps: usize, start: StateId) -> Self {
        Self {
            seed,
            max_steps,
            start,
            any_start: false,
        }
    }

    pub fn allow_any_start(mut self) -> Self {
        self.any_start = true;
        self
    }

    pub fn validate(&self, schema: &ModelSchema) -> Result<(), StochasticError> {
        if self.max_steps == 0 {
            return Err(StochasticError::ZeroSteps);
        }
        if !self.any_start && self.start.phase() != PhaseId::Assembly {
            return Err(StochasticError::NonAssemblyStart(self.start));
        }
        if schema.legal_transitions_from(self.start).is_empty() {
            return Err(StochasticError::TerminalState(self.start));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WalkResult {
    pub states: Vec<StateId>,
    pub terminated: bool,
}

impl WalkResult {
    pub fn steps(&self) -> usize {
        self.states.len() - 1
    }
}

pub fn walk(table: &WeightTable, config: &WalkConfig) -> Result<WalkResult, StochasticError> {
    config.validate(table.schema())?;
    let mut rng = walk_rng(config.seed);
    walk_with(table, config.start, config.max_steps, &mut rng)
}

/// Walks from `start` using a caller-owned generator.
pub fn walk_with(
    table: &WeightTable,
    start: StateId,
    max_steps: usize,
    rng: &mut impl RngCore,
) -> Result<WalkResult, StochasticError> {
    let mut states = vec![start];
    let mut current = start;
    for _ in 0..max_steps {
        if current == StateId::Terminal {
            break;
        }
        current = table.sample_next(current, rng)?;
        states.push(current);
    }
    Ok(WalkResult {
        terminated: current == StateId::Terminal,
        states,
    })
}
