//! Structure-state classification from measured crowd series.
//!
//! A sample carries density (persons/m²), mean speed (m/s) and a flow-order
//! parameter in `[0, 1]`. Mobility is decided first (static below
//! `static_speed_max`), then density bands pick sparse/solid/crush for a
//! static crowd and order bands pick chaotic/regular/laminar for a mobile
//! one. Given the previous state, a band change is only accepted once the
//! governing metric clears the shared boundary by more than a margin.

use std::cmp::Ordering;
use std::io::Read;

use serde::Deserialize;
use thiserror::Error;

use crate::schema::{Mobility, PhaseId, StateId};

/// Fixed hysteresis margin on the order parameter.
pub const ORDER_MARGIN: f64 = 0.02;
/// Fixed hysteresis margin on mean speed, m/s.
pub const SPEED_MARGIN: f64 = 0.05;

const STATIC_BANDS: [StateId; 3] = [
    StateId::StaticSparse,
    StateId::StaticSolid,
    StateId::StaticCrush,
];
const MOBILE_BANDS: [StateId; 3] = [
    StateId::MobileChaotic,
    StateId::MobileRegular,
    StateId::MobileLaminar,
];

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierConfig {
    pub sparse_max: f64,
    pub solid_max: f64,
    pub hysteresis: f64,
    pub static_speed_max: f64,
    pub chaotic_max: f64,
    pub regular_max: f64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            sparse_max: 2.0,
            solid_max: 4.0,
            hysteresis: 0.2,
            static_speed_max: 0.2,
            chaotic_max: 0.4,
            regular_max: 0.7,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClassifyError {
    #[error("invalid classifier config: {0}")]
    InvalidConfig(String),
    #[error("invalid sample {index}: {reason}")]
    InvalidSample { index: usize, reason: String },
    #[error("no samples")]
    EmptyInput,
    #[error("sample {index}: timestamp `{current}` does not follow `{previous}`")]
    UnorderedTimestamps {
        index: usize,
        previous: String,
        current: String,
    },
}

impl ClassifierConfig {
    pub fn validate(&self) -> Result<(), ClassifyError> {
        let bad = |msg: &str| Err(ClassifyError::InvalidConfig(msg.to_string()));
        let all = [
            self.sparse_max,
            self.solid_max,
            self.hysteresis,
            self.static_speed_max,
            self.chaotic_max,
            self.regular_max,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return bad("values must be finite");
        }
        if !(0.0 < self.sparse_max && self.sparse_max < self.solid_max) {
            return bad("need 0 < sparse_max < solid_max");
        }
        if !(self.hysteresis >= 0.0 && self.hysteresis < (self.solid_max - self.sparse_max) / 2.0) {
            return bad("need 0 <= hysteresis < (solid_max - sparse_max) / 2");
        }
        if !(0.0 < self.chaotic_max
            && self.chaotic_max < self.regular_max
            && self.regular_max < 1.0)
        {
            return bad("need 0 < chaotic_max < regular_max < 1");
        }
        if self.static_speed_max <= 0.0 {
            return bad("static_speed_max must be positive");
        }
        Ok(())
    }

    fn density_edges(&self) -> [f64; 2] {
        [self.sparse_max, self.solid_max]
    }

    fn order_edges(&self) -> [f64; 2] {
        [self.chaotic_max, self.regular_max]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub timestamp: String,
    pub density: f64,
    pub mean_speed: f64,
    pub order: f64,
}

impl Sample {
    pub fn new(timestamp: impl Into<String>, density: f64, mean_speed: f64, order: f64) -> Self {
        Self {
            timestamp: timestamp.into(),
            density,
            mean_speed,
            order,
        }
    }

    fn problem(&self) -> Option<&'static str> {
        if !(self.density.is_finite() && self.density >= 0.0) {
            Some("density must be a finite value >= 0")
        } else if !(self.mean_speed.is_finite() && self.mean_speed >= 0.0) {
            Some("speed must be a finite value >= 0")
        } else if !(0.0..=1.0).contains(&self.order) {
            Some("order must lie in [0, 1]")
        } else {
            None
        }
    }
}

fn raw_band(metric: f64, edges: &[f64; 2]) -> usize {
    edges.iter().filter(|&&e| metric >= e).count()
}

fn sticky_band(previous: usize, metric: f64, edges: &[f64; 2], margin: f64) -> usize {
    let raw = raw_band(metric, edges);
    match raw.cmp(&previous) {
        Ordering::Equal => previous,
        // the highest band whose lower edge is cleared by more than the margin
        Ordering::Greater => (previous + 1..=raw)
            .rev()
            .find(|&b| metric - edges[b - 1] > margin)
            .unwrap_or(previous),
        // the lowest band whose upper edge is undercut by more than the margin
        Ordering::Less => (raw..previous)
            .find(|&b| edges[b] - metric > margin)
            .unwrap_or(previous),
    }
}

fn band_index(state: StateId) -> Option<(Mobility, usize)> {
    let mobility = state.mobility()?;
    let bands = match mobility {
        Mobility::Static => &STATIC_BANDS,
        Mobility::Mobile => &MOBILE_BANDS,
    };
    bands
        .iter()
        .position(|&s| s == state)
        .map(|i| (mobility, i))
}

pub fn classify_sample(
    config: &ClassifierConfig,
    sample: &Sample,
    previous: Option<StateId>,
) -> Result<StateId, ClassifyError> {
    if let Some(reason) = sample.problem() {
        return Err(ClassifyError::InvalidSample {
            index: 0,
            reason: reason.to_string(),
        });
    }
    let raw_mobility = if sample.mean_speed < config.static_speed_max {
        Mobility::Static
    } else {
        Mobility::Mobile
    };
    let previous = previous
        .filter(|p| p.phase() == PhaseId::Structure)
        .and_then(band_index);

    let (mobility, prev_band) = match previous {
        None => (raw_mobility, None),
        Some((prev_mobility, band)) if prev_mobility == raw_mobility => (prev_mobility, Some(band)),
        Some((prev_mobility, band)) => {
            let clearance = (sample.mean_speed - config.static_speed_max).abs();
            if clearance > SPEED_MARGIN {
                (raw_mobility, None)
            } else {
                (prev_mobility, Some(band))
            }
        }
    };

    let (metric, edges, margin, bands) = match mobility {
        Mobility::Static => (
            sample.density,
            config.density_edges(),
            config.hysteresis,
            &STATIC_BANDS,
        ),
        Mobility::Mobile => (
            sample.order,
            config.order_edges(),
            ORDER_MARGIN,
            &MOBILE_BANDS,
        ),
    };
    let band = match prev_band {
        Some(prev) => sticky_band(prev, metric, &edges, margin),
        None => raw_band(metric, &edges),
    };
    Ok(bands[band])
}

/// Compares opaque timestamp labels: numerically when both parse as
/// numbers, lexicographically otherwise.
pub fn compare_timestamps(a: &str, b: &str) -> Ordering {
    match (a.trim().parse::<f64>(), b.trim().parse::<f64>()) {
        (Ok(x), Ok(y)) if x.is_finite() && y.is_finite() => x.total_cmp(&y),
        _ => a.cmp(b),
    }
}

/// Classifies a whole series and keeps only the changes.
pub fn series_to_transitions(
    config: &ClassifierConfig,
    samples: &[Sample],
) -> Result<Vec<(String, StateId)>, ClassifyError> {
    config.validate()?;
    if samples.is_empty() {
        return Err(ClassifyError::EmptyInput);
    }
    for (index, pair) in samples.windows(2).enumerate() {
        if compare_timestamps(&pair[0].timestamp, &pair[1].timestamp) != Ordering::Less {
            return Err(ClassifyError::UnorderedTimestamps {
                index: index + 1,
                previous: pair[0].timestamp.clone(),
                current: pair[1].timestamp.clone(),
            });
        }
    }
    let mut out: Vec<(String, StateId)> = Vec::new();
    let mut current: Option<StateId> = None;
    for (index, sample) in samples.iter().enumerate() {
        let state = classify_sample(config, sample, current).map_err(|e| match e {
            ClassifyError::InvalidSample { reason, .. } => {
                ClassifyError::InvalidSample { index, reason }
            }
            other => other,
        })?;
        if current != Some(state) {
            out.push((sample.timestamp.clone(), state));
            current = Some(state);
        }
    }
    Ok(out)
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("line {line}: {message}")]
pub struct SampleFileError {
    pub line: usize,
    pub message: String,
}

pub const SAMPLE_HEADER: [&str; 4] = ["timestamp", "density", "speed", "order"];

/// Reads `timestamp,density,speed,order` rows. Errors carry the 1-based
/// line number of the offending row.
pub fn read_samples(input: impl Read) -> Result<Vec<Sample>, SampleFileError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(input);
    let mut samples = Vec::new();
    let mut saw_header = false;
    for record in reader.records() {
        let record = record.map_err(|e| SampleFileError {
            line: e.position().map(|p| p.line() as usize).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let err = |message: String| SampleFileError { line, message };
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        if !saw_header {
            let header: Vec<String> = record.iter().map(|f| f.to_ascii_lowercase()).collect();
            if header != SAMPLE_HEADER {
                return Err(err(format!(
                    "expected header `{}`, got `{}`",
                    SAMPLE_HEADER.join(","),
                    record.iter().collect::<Vec<_>>().join(",")
                )));
            }
            saw_header = true;
            continue;
        }
        if record.len() != 4 {
            return Err(err(format!("expected 4 fields, got {}", record.len())));
        }
        if record[0].is_empty() {
            return Err(err("empty timestamp".into()));
        }
        let number = |i: usize| {
            record[i].parse::<f64>().map_err(|_| {
                err(format!(
                    "{} `{}` is not a number",
                    SAMPLE_HEADER[i], &record[i]
                ))
            })
        };
        let sample = Sample::new(&record[0], number(1)?, number(2)?, number(3)?);
        if let Some(reason) = sample.problem() {
            return Err(err(reason.to_string()));
        }
        samples.push(sample);
    }
    if !saw_header {
        return Err(SampleFileError {
            line: 1,
            message: format!("missing header `{}`", SAMPLE_HEADER.join(",")),
        });
    }
    Ok(samples)
}
