//! Episode parsing, hourly discretization and range scaling.
//!
//! An episode is a stream of `(variable, time, value)` observations taken at
//! irregular times. [`discretize`] anchors the first observation at step 0,
//! assigns every observation to the half-open bin `[t, t + width)` and
//! averages observations that share a `(bin, variable)` cell. The resulting
//! [`Grid`] carries a mask marking which cells received at least one
//! observation; unobserved cells hold `0.0` until imputation runs.

use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::tensor::Matrix;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: variable index {index} out of range for {num_vars} variables")]
    Schema {
        line: usize,
        index: usize,
        num_vars: usize,
    },
    #[error("no variable spec for variable {0}")]
    MissingSpec(usize),
    #[error("invalid variable spec: {0}")]
    InvalidSpec(String),
    #[error("bin width must be positive, got {0}")]
    BinWidth(f64),
    #[error("episode {id}: {message}")]
    Episode { id: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub variable: usize,
    pub time: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawEpisode {
    pub id: String,
    pub observations: Vec<Observation>,
    pub labels: Vec<u8>,
}

impl RawEpisode {
    /// Checks the episode against `num_vars` variables.
    pub fn validate(&self, num_vars: usize) -> Result<(), String> {
        if self.observations.is_empty() {
            return Err("episode has no observations".into());
        }
        for o in &self.observations {
            if !o.time.is_finite() {
                return Err("non-finite timestamp".into());
            }
            if o.time < 0.0 {
                return Err("negative timestamp".into());
            }
            if !o.value.is_finite() {
                return Err("non-finite value".into());
            }
            if o.variable >= num_vars {
                return Err(format!(
                    "variable index {} out of range for {num_vars} variables",
                    o.variable
                ));
            }
        }
        if self.labels.iter().any(|&l| l > 1) {
            return Err("labels must be 0 or 1".into());
        }
        Ok(())
    }
}

/// Wire form of one JSONL record.
#[derive(Debug, Serialize, Deserialize)]
struct EpisodeRecord {
    id: String,
    obs: Vec<(usize, f64, f64)>,
    labels: Vec<u8>,
}

impl From<&RawEpisode> for EpisodeRecord {
    fn from(ep: &RawEpisode) -> Self {
        Self {
            id: ep.id.clone(),
            obs: ep
                .observations
                .iter()
                .map(|o| (o.variable, o.time, o.value))
                .collect(),
            labels: ep.labels.clone(),
        }
    }
}

/// Parses line-delimited episode records. Blank lines are skipped; every
/// record must carry the same number of labels.
pub fn parse_episodes<R: BufRead>(
    reader: R,
    num_vars: usize,
) -> Result<Vec<RawEpisode>, IngestError> {
    let mut out = Vec::new();
    let mut num_labels = None;
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: EpisodeRecord = serde_json::from_str(&line).map_err(|e| IngestError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if let Some(&(index, _, _)) = rec.obs.iter().find(|o| o.0 >= num_vars) {
            return Err(IngestError::Schema {
                line: line_no,
                index,
                num_vars,
            });
        }
        let ep = RawEpisode {
            id: rec.id,
            observations: rec
                .obs
                .into_iter()
                .map(|(variable, time, value)| Observation {
                    variable,
                    time,
                    value,
                })
                .collect(),
            labels: rec.labels,
        };
        ep.validate(num_vars)
            .map_err(|message| IngestError::Parse {
                line: line_no,
                message,
            })?;
        match num_labels {
            None => num_labels = Some(ep.labels.len()),
            Some(k) if k != ep.labels.len() => {
                return Err(IngestError::Parse {
                    line: line_no,
                    message: format!("expected {k} labels, found {}", ep.labels.len()),
                })
            }
            _ => {}
        }
        out.push(ep);
    }
    Ok(out)
}

pub fn read_episodes(path: &Path, num_vars: usize) -> Result<Vec<RawEpisode>, IngestError> {
    let file = std::fs::File::open(path)?;
    parse_episodes(std::io::BufReader::new(file), num_vars)
}

pub fn write_episodes<W: std::io::Write>(
    mut w: W,
    episodes: &[RawEpisode],
) -> Result<(), IngestError> {
    for ep in episodes {
        let line = serde_json::to_string(&EpisodeRecord::from(ep)).map_err(std::io::Error::from)?;
        writeln!(w, "{line}")?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableSpec {
    #[serde(rename = "index")]
    pub variable_index: usize,
    pub name: String,
    #[serde(rename = "low")]
    pub range_low: f64,
    #[serde(rename = "high")]
    pub range_high: f64,
}

impl VariableSpec {
    pub fn new(variable_index: usize, name: &str, range_low: f64, range_high: f64) -> Self {
        Self {
            variable_index,
            name: name.to_string(),
            range_low,
            range_high,
        }
    }

    /// Maps a raw value into `[0, 1]`, clamping out-of-range values.
    pub fn scale(&self, v: f64) -> f64 {
        ((v - self.range_low) / (self.range_high - self.range_low)).clamp(0.0, 1.0)
    }
}

/// The 13 physiologic variables with static expert ranges.
pub fn default_variable_specs() -> Vec<VariableSpec> {
    [
        ("diastolic_bp", 20.0, 120.0),
        ("systolic_bp", 40.0, 200.0),
        ("capillary_refill", 0.0, 6.0),
        ("etco2", 10.0, 70.0),
        ("fio2", 0.21, 1.0),
        ("glasgow_coma_scale", 3.0, 15.0),
        ("glucose", 30.0, 400.0),
        ("heart_rate", 40.0, 220.0),
        ("ph", 6.8, 7.8),
        ("respiratory_rate", 5.0, 80.0),
        ("pulse_oximetry", 60.0, 100.0),
        ("temperature", 32.0, 42.0),
        ("urine_output", 0.0, 500.0),
    ]
    .iter()
    .enumerate()
    .map(|(i, &(name, lo, hi))| VariableSpec::new(i, name, lo, hi))
    .collect()
}

/// Sorts specs by index and checks there is exactly one per variable `0..D`.
pub fn validate_specs(mut specs: Vec<VariableSpec>) -> Result<Vec<VariableSpec>, IngestError> {
    specs.sort_by_key(|s| s.variable_index);
    for (i, s) in specs.iter().enumerate() {
        if s.variable_index != i {
            return Err(IngestError::MissingSpec(i));
        }
        if s.range_low.partial_cmp(&s.range_high) != Some(std::cmp::Ordering::Less) {
            return Err(IngestError::InvalidSpec(format!(
                "{}: low {} must be below high {}",
                s.name, s.range_low, s.range_high
            )));
        }
    }
    Ok(specs)
}

pub fn read_variable_specs(path: &Path) -> Result<Vec<VariableSpec>, IngestError> {
    let mut rdr = csv::Reader::from_path(path)?;
    let specs = rdr
        .deserialize()
        .collect::<Result<Vec<VariableSpec>, _>>()?;
    validate_specs(specs)
}

pub fn write_variable_specs(path: &Path, specs: &[VariableSpec]) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_path(path)?;
    for s in specs {
        w.serialize(s)?;
    }
    w.flush()?;
    Ok(())
}

/// Discretized episode: `num_steps × D` values plus the observation mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub id: String,
    pub values: Matrix,
    pub mask: Matrix,
    pub labels: Vec<u8>,
}

impl Grid {
    pub fn num_steps(&self) -> usize {
        self.values.rows()
    }

    pub fn num_vars(&self) -> usize {
        self.values.cols()
    }

    #[inline]
    pub fn observed(&self, t: usize, d: usize) -> bool {
        self.mask.get(t, d) != 0.0
    }

    /// Keeps at most the first `max_steps` steps.
    pub fn truncate(&self, max_steps: usize) -> Grid {
        let t = self.num_steps().min(max_steps.max(1));
        let d = self.num_vars();
        Grid {
            id: self.id.clone(),
            values: Matrix::from_vec(t, d, self.values.as_slice()[..t * d].to_vec()),
            mask: Matrix::from_vec(t, d, self.mask.as_slice()[..t * d].to_vec()),
            labels: self.labels.clone(),
        }
    }
}

pub fn discretize(ep: &RawEpisode, num_vars: usize, bin_width: f64) -> Result<Grid, IngestError> {
    if !bin_width.is_finite() || bin_width <= 0.0 {
        return Err(IngestError::BinWidth(bin_width));
    }
    ep.validate(num_vars)
        .map_err(|message| IngestError::Episode {
            id: ep.id.clone(),
            message,
        })?;
    let start = ep
        .observations
        .iter()
        .map(|o| o.time)
        .fold(f64::INFINITY, f64::min);
    let bin_of = |time: f64| ((time - start) / bin_width).floor() as usize;
    let num_steps = ep
        .observations
        .iter()
        .map(|o| bin_of(o.time))
        .max()
        .unwrap_or(0)
        + 1;

    let mut sums = Matrix::zeros(num_steps, num_vars);
    let mut counts = Matrix::zeros(num_steps, num_vars);
    for o in &ep.observations {
        let t = bin_of(o.time);
        sums.set(t, o.variable, sums.get(t, o.variable) + o.value);
        counts.set(t, o.variable, counts.get(t, o.variable) + 1.0);
    }
    let mut mask = Matrix::zeros(num_steps, num_vars);
    for ((s, &c), m) in sums
        .as_mut_slice()
        .iter_mut()
        .zip(counts.as_slice())
        .zip(mask.as_mut_slice())
    {
        if c > 0.0 {
            *s /= c;
            *m = 1.0;
        }
    }
    Ok(Grid {
        id: ep.id.clone(),
        values: sums,
        mask,
        labels: ep.labels.clone(),
    })
}

/// Scales observed cells into `[0, 1]`; `specs` must be indexed by variable.
pub fn scale_grid(g: &Grid, specs: &[VariableSpec]) -> Result<Grid, IngestError> {
    let d = g.num_vars();
    let mut lookup: Vec<Option<&VariableSpec>> = vec![None; d];
    for s in specs {
        if s.variable_index < d {
            lookup[s.variable_index] = Some(s);
        }
    }
    let lookup = lookup
        .into_iter()
        .enumerate()
        .map(|(i, s)| s.ok_or(IngestError::MissingSpec(i)))
        .collect::<Result<Vec<_>, _>>()?;
    let mut out = g.clone();
    for t in 0..g.num_steps() {
        for (v, spec) in lookup.iter().enumerate() {
            if g.observed(t, v) {
                out.values.set(t, v, spec.scale(g.values.get(t, v)));
            }
        }
    }
    Ok(out)
}
