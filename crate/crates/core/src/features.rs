//! Fixed-width inputs for the feed-forward baselines.
//!
//! Two families:
//! * raw windowed: three 12-step slices (beginning, middle, end) of the
//!   augmented sequence, flattened;
//! * hand-engineered: 12 measurement statistics and 8 missingness
//!   statistics per variable, over the full sequence and the three slices.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::impute::AugmentedSequence;
use crate::ingest::Grid;

/// Steps per raw slice.
pub const WINDOW_STEPS: usize = 12;

pub const MEASUREMENT_FEATURES: [&str; 12] = [
    "first",
    "last",
    "diff",
    "max",
    "min",
    "mean",
    "std",
    "median",
    "p25",
    "p75",
    "slope",
    "intercept",
];

pub const MISSINGNESS_FEATURES: [&str; 8] = [
    "measured",
    "missing_mean",
    "missing_std",
    "switch_rate",
    "stop_rate",
    "start_rate",
    "first_time",
    "last_time",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum WindowTag {
    Full,
    First12,
    Middle12,
    Last12,
}

impl fmt::Display for WindowTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WindowTag::Full => "full",
            WindowTag::First12 => "first12",
            WindowTag::Middle12 => "middle12",
            WindowTag::Last12 => "last12",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WindowMode {
    Raw3,
    He4,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub start: usize,
    pub end: usize,
    pub tag: WindowTag,
}

impl Window {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

pub type WindowSet = Vec<Window>;

/// 12-step window centred on the sequence, clamped to `[0, T)`.
fn centred(t: usize) -> (usize, usize) {
    let start = t.saturating_sub(WINDOW_STEPS) / 2;
    (start, (start + WINDOW_STEPS).min(t))
}

pub fn make_windows(t: usize, mode: WindowMode) -> WindowSet {
    assert!(t >= 1, "sequence must have at least one step");
    let first = Window {
        start: 0,
        end: WINDOW_STEPS.min(t),
        tag: WindowTag::First12,
    };
    let last = Window {
        start: t.saturating_sub(WINDOW_STEPS),
        end: t,
        tag: WindowTag::Last12,
    };
    let (ms, me) = match mode {
        WindowMode::He4 if t > 2 * WINDOW_STEPS => (WINDOW_STEPS, t - WINDOW_STEPS),
        _ => centred(t),
    };
    let middle = Window {
        start: ms,
        end: me,
        tag: WindowTag::Middle12,
    };
    match mode {
        WindowMode::Raw3 => vec![first, middle, last],
        WindowMode::He4 => vec![
            Window {
                start: 0,
                end: t,
                tag: WindowTag::Full,
            },
            first,
            middle,
            last,
        ],
    }
}

/// One column of a feature vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureKey {
    pub window: WindowTag,
    pub variable: usize,
    pub name: String,
}

impl FeatureKey {
    pub fn column_name(&self, var_names: Option<&[String]>) -> String {
        let var = match var_names.and_then(|n| n.get(self.variable)) {
            Some(n) => n.clone(),
            None => format!("v{}", self.variable),
        };
        format!("{}.{}.{}", self.window, var, self.name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub layout: Vec<FeatureKey>,
}

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn header(&self, var_names: Option<&[String]>) -> Vec<String> {
        self.layout
            .iter()
            .map(|k| k.column_name(var_names))
            .collect()
    }
}

/// Layout of the raw windowed vector for `d` base variables and `width`
/// columns per step (`d` or `2d`).
pub fn raw_layout(d: usize, width: usize) -> Vec<FeatureKey> {
    let mut layout = Vec::with_capacity(3 * WINDOW_STEPS * width);
    for tag in [WindowTag::First12, WindowTag::Middle12, WindowTag::Last12] {
        for step in 0..WINDOW_STEPS {
            for c in 0..width {
                let (variable, kind) = if c < d {
                    (c, "value")
                } else {
                    (c - d, "missing")
                };
                layout.push(FeatureKey {
                    window: tag,
                    variable,
                    name: format!("t{step:02}.{kind}"),
                });
            }
        }
    }
    layout
}

/// Flattens three 12-step slices of `seq`. Slices shorter than 12 steps
/// repeat their last row. `base_vars` is the number of value columns.
pub fn raw_concat_features(seq: &AugmentedSequence, base_vars: usize) -> FeatureVector {
    let t = seq.num_steps();
    let width = seq.inputs.cols();
    let mut values = Vec::with_capacity(3 * WINDOW_STEPS * width);
    for w in make_windows(t, WindowMode::Raw3) {
        for step in 0..WINDOW_STEPS {
            let row = (w.start + step).min(w.end - 1);
            values.extend_from_slice(seq.inputs.row(row));
        }
    }
    FeatureVector {
        values,
        layout: raw_layout(base_vars, width),
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn population_std(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64).sqrt()
}

/// Linear-interpolated percentile of sorted data, `q ∈ [0, 1]`.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// The 12 measurement statistics over observed cells of one variable in one
/// window. Step indices are window-relative. All zeros when nothing was
/// observed.
pub fn measurement_features(values: &[f64], observed: &[bool]) -> [f64; 12] {
    let (steps, xs): (Vec<f64>, Vec<f64>) = values
        .iter()
        .zip(observed)
        .enumerate()
        .filter(|(_, (_, &o))| o)
        .map(|(i, (&v, _))| (i as f64, v))
        .unzip();
    if xs.is_empty() {
        return [0.0; 12];
    }
    let first = xs[0];
    let last = xs[xs.len() - 1];
    let mut sorted = xs.clone();
    sorted.sort_by(f64::total_cmp);
    let mu = mean(&xs);
    let (slope, intercept) = if xs.len() < 2 {
        (0.0, mu)
    } else {
        let ms = mean(&steps);
        let sxy: f64 = steps
            .iter()
            .zip(&xs)
            .map(|(s, x)| (s - ms) * (x - mu))
            .sum();
        let sxx: f64 = steps.iter().map(|s| (s - ms) * (s - ms)).sum();
        let slope = sxy / sxx;
        (slope, mu - slope * ms)
    };
    [
        first,
        last,
        last - first,
        sorted[sorted.len() - 1],
        sorted[0],
        mu,
        population_std(&xs),
        percentile(&sorted, 0.5),
        percentile(&sorted, 0.25),
        percentile(&sorted, 0.75),
        slope,
        intercept,
    ]
}

/// The 8 missingness statistics of one variable's indicator sequence over a
/// window (`missing[t] = true` when the cell was not observed).
pub fn missingness_features(missing: &[bool]) -> [f64; 8] {
    let len = missing.len();
    assert!(len >= 1, "window must be nonempty");
    let ind: Vec<f64> = missing.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect();
    let first = missing.iter().position(|&m| !m);
    let last = missing.iter().rposition(|&m| !m);
    let (mut switches, mut stops, mut starts) = (0usize, 0usize, 0usize);
    for pair in missing.windows(2) {
        match (pair[0], pair[1]) {
            (false, true) => stops += 1,
            (true, false) => starts += 1,
            _ => continue,
        }
        switches += 1;
    }
    let rate = |n: usize| {
        if len > 1 {
            n as f64 / (len - 1) as f64
        } else {
            0.0
        }
    };
    let timing = |p: Option<usize>| p.map_or(1.0, |i| i as f64 / len as f64);
    [
        if first.is_some() { 1.0 } else { 0.0 },
        mean(&ind),
        population_std(&ind),
        rate(switches),
        rate(stops),
        rate(starts),
        timing(first),
        timing(last),
    ]
}

/// Hand-engineered vector over the full sequence plus three slices, laid out
/// window → variable → (measurement block, missingness block).
pub fn he_feature_vector(
    g: &Grid,
    include_measurement: bool,
    include_missingness: bool,
) -> FeatureVector {
    assert!(
        include_measurement || include_missingness,
        "at least one feature block must be selected"
    );
    let d = g.num_vars();
    let mut values = Vec::new();
    let mut layout = Vec::new();
    for w in make_windows(g.num_steps(), WindowMode::He4) {
        for v in 0..d {
            let vals: Vec<f64> = (w.start..w.end).map(|t| g.values.get(t, v)).collect();
            let obs: Vec<bool> = (w.start..w.end).map(|t| g.observed(t, v)).collect();
            if include_measurement {
                values.extend(measurement_features(&vals, &obs));
                layout.extend(MEASUREMENT_FEATURES.iter().map(|n| FeatureKey {
                    window: w.tag,
                    variable: v,
                    name: (*n).to_string(),
                }));
            }
            if include_missingness {
                let missing: Vec<bool> = obs.iter().map(|o| !o).collect();
                values.extend(missingness_features(&missing));
                layout.extend(MISSINGNESS_FEATURES.iter().map(|n| FeatureKey {
                    window: w.tag,
                    variable: v,
                    name: (*n).to_string(),
                }));
            }
        }
    }
    FeatureVector { values, layout }
}
