//! End-to-end runs: split, preprocess, train, evaluate, persist.

use std::fmt;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{he_feature_vector, raw_concat_features, FeatureVector};
use crate::impute::{
    augment_with_indicators, compute_medians, impute, AugmentedSequence, ImputeError, ImputePolicy,
    IndicatorMode,
};
use crate::ingest::{discretize, scale_grid, Grid, IngestError, RawEpisode, VariableSpec};
use crate::metrics::{evaluate, EvalReport};
use crate::nn::tensor::Matrix;
use crate::nn::train::EpochRecord;
use crate::nn::{
    train, Example, LinearModel, LstmModel, MlpModel, Network, TrainConfig, TrainError,
    TrainOutcome,
};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid experiment: {0}")]
    Config(String),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Impute(#[from] ImputeError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl ExperimentError {
    /// Process exit code: 2 for configuration problems, 3 for numeric
    /// failures, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Config(_) | ExperimentError::Train(TrainError::Config(_)) => 2,
            ExperimentError::Train(TrainError::NonFinite { .. }) => 3,
            ExperimentError::Ingest(IngestError::Parse { .. })
            | ExperimentError::Ingest(IngestError::Schema { .. })
            | ExperimentError::Ingest(IngestError::MissingSpec(_))
            | ExperimentError::Ingest(IngestError::InvalidSpec(_))
            | ExperimentError::Ingest(IngestError::BinWidth(_))
            | ExperimentError::Impute(_) => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Lstm,
    Mlp,
    LogReg,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Lstm => "LSTM",
            ModelKind::Mlp => "MLP",
            ModelKind::LogReg => "Log Reg",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputKind {
    RawZeros,
    RawImpute,
    RawZerosIndicators,
    RawImputeIndicators,
    IndicatorsOnly,
    HeMeasurement,
    HeIndicators,
    HeBoth,
}

impl InputKind {
    pub const RAW: [InputKind; 5] = [
        InputKind::RawZeros,
        InputKind::RawImpute,
        InputKind::RawZerosIndicators,
        InputKind::RawImputeIndicators,
        InputKind::IndicatorsOnly,
    ];
    pub const HAND_ENGINEERED: [InputKind; 3] = [
        InputKind::HeMeasurement,
        InputKind::HeBoth,
        InputKind::HeIndicators,
    ];

    pub fn is_hand_engineered(self) -> bool {
        Self::HAND_ENGINEERED.contains(&self)
    }

    /// Imputation and indicator handling for sequence-shaped inputs.
    pub fn sequence_treatment(self) -> Option<(bool, IndicatorMode)> {
        match self {
            InputKind::RawZeros => Some((false, IndicatorMode::Off)),
            InputKind::RawImpute => Some((true, IndicatorMode::Off)),
            InputKind::RawZerosIndicators => Some((false, IndicatorMode::On)),
            InputKind::RawImputeIndicators => Some((true, IndicatorMode::On)),
            InputKind::IndicatorsOnly => Some((false, IndicatorMode::Only)),
            _ => None,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            InputKind::RawZeros => "Zeros",
            InputKind::RawImpute => "Impute",
            InputKind::RawZerosIndicators => "Zeros & Indicators",
            InputKind::RawImputeIndicators => "Impute & Indicators",
            InputKind::IndicatorsOnly => "Indicators Only",
            InputKind::HeMeasurement => "HE",
            InputKind::HeIndicators => "HE Indicators Only",
            InputKind::HeBoth => "HE Indicators",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Architecture {
    pub lstm_hidden: Vec<usize>,
    pub mlp_hidden: Vec<usize>,
    pub logreg_l2: f64,
}

impl Default for Architecture {
    fn default() -> Self {
        Self {
            lstm_hidden: vec![128, 128],
            mlp_hidden: vec![500, 500, 500],
            logreg_l2: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub model: ModelKind,
    pub input: InputKind,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub architecture: Architecture,
    /// Seed of the train/validation/test shuffle.
    #[serde(default)]
    pub split_seed: u64,
    #[serde(default = "default_bin_width")]
    pub bin_width: f64,
    /// Optional cap on the number of hourly steps per episode.
    #[serde(default)]
    pub max_steps: Option<usize>,
}

fn default_bin_width() -> f64 {
    1.0
}

impl ExperimentSpec {
    pub fn new(model: ModelKind, input: InputKind) -> Self {
        Self {
            model,
            input,
            train: TrainConfig::default(),
            architecture: Architecture::default(),
            split_seed: 0,
            bin_width: 1.0,
            max_steps: None,
        }
    }

    pub fn name(&self) -> String {
        if self.input.is_hand_engineered() {
            format!("{} {}", self.model, self.input.label())
        } else {
            format!("{} - {}", self.model, self.input.label())
        }
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.model == ModelKind::Lstm && self.input.is_hand_engineered() {
            return Err(ExperimentError::Config(format!(
                "LSTM takes sequence inputs only, not {:?}",
                self.input
            )));
        }
        if self.model == ModelKind::Lstm && self.architecture.lstm_hidden.is_empty() {
            return Err(ExperimentError::Config(
                "LSTM needs at least one layer".into(),
            ));
        }
        if self.architecture.lstm_hidden.contains(&0) || self.architecture.mlp_hidden.contains(&0) {
            return Err(ExperimentError::Config(
                "hidden sizes must be positive".into(),
            ));
        }
        if self.architecture.logreg_l2.is_nan() || self.architecture.logreg_l2 < 0.0 {
            return Err(ExperimentError::Config(
                "logreg_l2 must be non-negative".into(),
            ));
        }
        if self.bin_width.is_nan() || self.bin_width <= 0.0 {
            return Err(ExperimentError::Config("bin_width must be positive".into()));
        }
        if self.max_steps == Some(0) {
            return Err(ExperimentError::Config("max_steps must be positive".into()));
        }
        self.train.validate()?;
        Ok(())
    }
}

/// Every row of the comparison table: five raw input variants for each
/// model family, three hand-engineered variants for the two baselines.
pub fn table_specs(template: &ExperimentSpec) -> Vec<ExperimentSpec> {
    let mut out = Vec::new();
    for model in [ModelKind::LogReg, ModelKind::Mlp, ModelKind::Lstm] {
        for input in InputKind::RAW {
            out.push(ExperimentSpec {
                model,
                input,
                ..template.clone()
            });
        }
    }
    for model in [ModelKind::LogReg, ModelKind::Mlp] {
        for input in InputKind::HAND_ENGINEERED {
            out.push(ExperimentSpec {
                model,
                input,
                ..template.clone()
            });
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<String>,
    pub validation: Vec<String>,
    pub test: Vec<String>,
}

/// 80/10/10 split by seeded shuffle of the sorted ids, so membership does
/// not depend on input order.
pub fn split_ids(ids: &[String], seed: u64) -> Result<Split, ExperimentError> {
    let mut sorted = ids.to_vec();
    sorted.sort();
    if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
        return Err(ExperimentError::Config(format!(
            "duplicate episode id {}",
            w[0]
        )));
    }
    if sorted.len() < 3 {
        return Err(ExperimentError::Config(
            "need at least 3 episodes to split".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sorted.shuffle(&mut rng);
    let n = sorted.len();
    let n_val = ((n as f64 * 0.1).round() as usize).max(1);
    let n_test = n_val;
    let n_train = n - n_val - n_test;
    let test = sorted.split_off(n_train + n_val);
    let validation = sorted.split_off(n_train);
    Ok(Split {
        train: sorted,
        validation,
        test,
    })
}

/// Episodes plus their variable specs.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub episodes: Vec<RawEpisode>,
    pub specs: Vec<VariableSpec>,
}

impl Dataset {
    pub fn num_vars(&self) -> usize {
        self.specs.len()
    }

    pub fn num_labels(&self) -> usize {
        self.episodes.first().map_or(0, |e| e.labels.len())
    }

    fn select(&self, ids: &[String]) -> Vec<&RawEpisode> {
        let index: std::collections::HashMap<&str, &RawEpisode> =
            self.episodes.iter().map(|e| (e.id.as_str(), e)).collect();
        ids.iter().map(|id| index[id.as_str()]).collect()
    }

    fn ids(&self) -> Vec<String> {
        self.episodes.iter().map(|e| e.id.clone()).collect()
    }
}

/// Z-scoring fitted on training features; zero-variance columns keep unit
/// scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(rows: &[Vec<f64>]) -> Self {
        let f = rows[0].len();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; f];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v / n;
            }
        }
        let mut var = vec![0.0; f];
        for r in rows {
            for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
                *s += (v - m) * (v - m) / n;
            }
        }
        let scale = var
            .into_iter()
            .map(|v| if v > 1e-12 { v.sqrt() } else { 1.0 })
            .collect();
        Self { mean, scale }
    }

    pub fn apply(&self, row: &mut [f64]) {
        for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.scale) {
            *v = (*v - m) / s;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum TrainedModel {
    Lstm(LstmModel),
    Mlp(MlpModel),
    LogReg(LinearModel),
}

/// Everything needed to score new episodes with a trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub spec: ExperimentSpec,
    pub num_vars: usize,
    pub num_labels: usize,
    pub medians: Vec<f64>,
    pub standardizer: Option<Standardizer>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub model: TrainedModel,
}

impl Checkpoint {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, ExperimentError> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn predict(
        &self,
        episodes: &[&RawEpisode],
        specs: &[VariableSpec],
    ) -> Result<Matrix, ExperimentError> {
        let grids = grids_for(&self.spec, episodes, specs)?;
        let inputs = build_inputs(&self.spec, &grids, &self.medians)?;
        Ok(match (&self.model, inputs) {
            (TrainedModel::Lstm(m), Inputs::Sequences(xs)) => predict_all(m, &xs, self.num_labels),
            (TrainedModel::Mlp(m), Inputs::Flat(mut xs)) => {
                standardize(&mut xs, self.standardizer.as_ref());
                predict_all(m, &xs, self.num_labels)
            }
            (TrainedModel::LogReg(m), Inputs::Flat(mut xs)) => {
                standardize(&mut xs, self.standardizer.as_ref());
                predict_all(m, &xs, self.num_labels)
            }
            _ => {
                return Err(ExperimentError::Config(
                    "checkpoint model does not match its input kind".into(),
                ))
            }
        })
    }
}

fn standardize(xs: &mut [Example<Vec<f64>>], st: Option<&Standardizer>) {
    if let Some(st) = st {
        for x in xs {
            st.apply(&mut x.input);
        }
    }
}

enum Inputs {
    Sequences(Vec<Example<Matrix>>),
    Flat(Vec<Example<Vec<f64>>>),
}

/// Discretized, scaled and optionally truncated grids.
pub fn grids_for(
    spec: &ExperimentSpec,
    episodes: &[&RawEpisode],
    specs: &[VariableSpec],
) -> Result<Vec<Grid>, ExperimentError> {
    episodes
        .iter()
        .map(|ep| {
            let g = scale_grid(&discretize(ep, specs.len(), spec.bin_width)?, specs)?;
            Ok(match spec.max_steps {
                Some(t) => g.truncate(t),
                None => g,
            })
        })
        .collect()
}

/// Raw or hand-engineered feature vector for one grid.
pub fn feature_vector(
    input: InputKind,
    g: &Grid,
    medians: &[f64],
) -> Result<FeatureVector, ExperimentError> {
    Ok(match input {
        InputKind::HeMeasurement => he_feature_vector(g, true, false),
        InputKind::HeIndicators => he_feature_vector(g, false, true),
        InputKind::HeBoth => he_feature_vector(g, true, true),
        raw => raw_concat_features(&sequence_for(raw, g, medians)?, g.num_vars()),
    })
}

fn sequence_for(
    input: InputKind,
    g: &Grid,
    medians: &[f64],
) -> Result<AugmentedSequence, ExperimentError> {
    let (ffill, mode) = input
        .sequence_treatment()
        .ok_or_else(|| ExperimentError::Config(format!("{input:?} is not a sequence input")))?;
    let policy = if ffill {
        ImputePolicy::ForwardFill {
            medians: medians.to_vec(),
        }
    } else {
        ImputePolicy::Zero
    };
    Ok(augment_with_indicators(&impute(g, &policy)?, mode))
}

fn build_inputs(
    spec: &ExperimentSpec,
    grids: &[Grid],
    medians: &[f64],
) -> Result<Inputs, ExperimentError> {
    if spec.model == ModelKind::Lstm {
        let xs = grids
            .iter()
            .map(|g| {
                Ok(Example {
                    input: sequence_for(spec.input, g, medians)?.inputs,
                    labels: g.labels.clone(),
                })
            })
            .collect::<Result<_, ExperimentError>>()?;
        Ok(Inputs::Sequences(xs))
    } else {
        let xs = grids
            .iter()
            .map(|g| {
                Ok(Example {
                    input: feature_vector(spec.input, g, medians)?.values,
                    labels: g.labels.clone(),
                })
            })
            .collect::<Result<_, ExperimentError>>()?;
        Ok(Inputs::Flat(xs))
    }
}

fn predict_all<N: Network>(model: &N, xs: &[Example<N::Input>], k: usize) -> Matrix {
    let mut out = Matrix::zeros(xs.len(), k);
    for (r, x) in xs.iter().enumerate() {
        out.row_mut(r).copy_from_slice(&model.predict(&x.input));
    }
    out
}

fn labels_of<X>(xs: &[Example<X>]) -> Vec<Vec<u8>> {
    xs.iter().map(|e| e.labels.clone()).collect()
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub name: String,
    pub report: EvalReport,
    pub checkpoint: Checkpoint,
    pub history: Vec<EpochRecord>,
    pub initial_train_loss: f64,
    pub initial_val_loss: f64,
    pub split: Split,
}

impl ExperimentOutcome {
    pub fn losses_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,val_loss\n");
        s.push_str(&format!(
            "0,{},{}\n",
            self.initial_train_loss, self.initial_val_loss
        ));
        for r in &self.history {
            s.push_str(&format!("{},{},{}\n", r.epoch, r.train_loss, r.val_loss));
        }
        s
    }

    /// Writes checkpoint, loss curve, report, per-label table and split.
    pub fn write_to(&self, dir: &Path) -> Result<(), ExperimentError> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("checkpoint.json"), self.checkpoint.to_json())?;
        std::fs::write(dir.join("losses.csv"), self.losses_csv())?;
        std::fs::write(dir.join("report.json"), self.report.to_json())?;
        std::fs::write(dir.join("per_label.csv"), self.report.per_label_csv(None))?;
        std::fs::write(
            dir.join("split.json"),
            serde_json::to_string_pretty(&self.split)?,
        )?;
        Ok(())
    }
}

struct Trained<N> {
    outcome: TrainOutcome<N>,
    val_scores: Matrix,
    test_scores: Matrix,
}

fn fit<N: Network>(
    model: N,
    tr: &[Example<N::Input>],
    va: &[Example<N::Input>],
    te: &[Example<N::Input>],
    cfg: &TrainConfig,
) -> Result<Trained<N>, ExperimentError> {
    let k = model.num_labels();
    let outcome = train(model, tr, va, cfg)?;
    let val_scores = predict_all(&outcome.model, va, k);
    let test_scores = predict_all(&outcome.model, te, k);
    Ok(Trained {
        outcome,
        val_scores,
        test_scores,
    })
}

/// Runs one experiment end to end. Nothing is written to disk here; see
/// [`ExperimentOutcome::write_to`].
pub fn run_experiment(
    spec: &ExperimentSpec,
    data: &Dataset,
) -> Result<ExperimentOutcome, ExperimentError> {
    spec.validate()?;
    let k = data.num_labels();
    if k == 0 {
        return Err(ExperimentError::Config("episodes carry no labels".into()));
    }
    let split = split_ids(&data.ids(), spec.split_seed)?;
    let train_raw = data.select(&split.train);
    let train_owned: Vec<RawEpisode> = train_raw.iter().map(|e| (*e).clone()).collect();
    let medians = compute_medians(&train_owned, &data.specs)?;
    let grids = |ids: &[String]| grids_for(spec, &data.select(ids), &data.specs);
    let (g_tr, g_va, g_te) = (
        grids(&split.train)?,
        grids(&split.validation)?,
        grids(&split.test)?,
    );
    let d = data.num_vars();
    let seed = spec.train.seed;

    let (val_labels, test_labels, trained_model, standardizer, val_scores, test_scores, meta) =
        match (
            build_inputs(spec, &g_tr, &medians)?,
            build_inputs(spec, &g_va, &medians)?,
            build_inputs(spec, &g_te, &medians)?,
        ) {
            (Inputs::Sequences(tr), Inputs::Sequences(va), Inputs::Sequences(te)) => {
                let width = tr[0].input.cols();
                let model = LstmModel::new(
                    width,
                    &spec.architecture.lstm_hidden,
                    k,
                    spec.train.alpha,
                    seed,
                );
                let t = fit(model, &tr, &va, &te, &spec.train)?;
                let meta = (
                    t.outcome.best_epoch,
                    t.outcome.best_val_loss,
                    t.outcome.history,
                    t.outcome.initial_train_loss,
                    t.outcome.initial_val_loss,
                );
                (
                    labels_of(&va),
                    labels_of(&te),
                    TrainedModel::Lstm(t.outcome.model),
                    None,
                    t.val_scores,
                    t.test_scores,
                    meta,
                )
            }
            (Inputs::Flat(mut tr), Inputs::Flat(mut va), Inputs::Flat(mut te)) => {
                let st = Standardizer::fit(&tr.iter().map(|e| e.input.clone()).collect::<Vec<_>>());
                for xs in [&mut tr, &mut va, &mut te] {
                    standardize(xs, Some(&st));
                }
                let width = tr[0].input.len();
                if spec.model == ModelKind::Mlp {
                    let model = MlpModel::new(width, &spec.architecture.mlp_hidden, k, seed);
                    let t = fit(model, &tr, &va, &te, &spec.train)?;
                    let meta = (
                        t.outcome.best_epoch,
                        t.outcome.best_val_loss,
                        t.outcome.history,
                        t.outcome.initial_train_loss,
                        t.outcome.initial_val_loss,
                    );
                    (
                        labels_of(&va),
                        labels_of(&te),
                        TrainedModel::Mlp(t.outcome.model),
                        Some(st),
                        t.val_scores,
                        t.test_scores,
                        meta,
                    )
                } else {
                    let model = LinearModel::new(width, k, spec.architecture.logreg_l2, seed);
                    let t = fit(model, &tr, &va, &te, &spec.train)?;
                    let meta = (
                        t.outcome.best_epoch,
                        t.outcome.best_val_loss,
                        t.outcome.history,
                        t.outcome.initial_train_loss,
                        t.outcome.initial_val_loss,
                    );
                    (
                        labels_of(&va),
                        labels_of(&te),
                        TrainedModel::LogReg(t.outcome.model),
                        Some(st),
                        t.val_scores,
                        t.test_scores,
                        meta,
                    )
                }
            }
            _ => unreachable!("inputs of one spec share a shape"),
        };
    let (best_epoch, best_val_loss, history, initial_train_loss, initial_val_loss) = meta;
    let report = evaluate(&test_scores, &test_labels, &val_scores, &val_labels);
    Ok(ExperimentOutcome {
        name: spec.name(),
        report,
        checkpoint: Checkpoint {
            spec: spec.clone(),
            num_vars: d,
            num_labels: k,
            medians,
            standardizer,
            best_epoch,
            best_val_loss,
            model: trained_model,
        },
        history,
        initial_train_loss,
        initial_val_loss,
        split,
    })
}

/// Scores a checkpoint on the validation and test episodes of its split.
pub fn evaluate_checkpoint(
    ckpt: &Checkpoint,
    data: &Dataset,
) -> Result<EvalReport, ExperimentError> {
    if data.num_vars() != ckpt.num_vars || data.num_labels() != ckpt.num_labels {
        return Err(ExperimentError::Config(
            "data shape does not match checkpoint".into(),
        ));
    }
    let split = split_ids(&data.ids(), ckpt.spec.split_seed)?;
    let va = data.select(&split.validation);
    let te = data.select(&split.test);
    let lab = |eps: &[&RawEpisode]| eps.iter().map(|e| e.labels.clone()).collect::<Vec<_>>();
    let val_scores = ckpt.predict(&va, &data.specs)?;
    let test_scores = ckpt.predict(&te, &data.specs)?;
    Ok(evaluate(&test_scores, &lab(&te), &val_scores, &lab(&va)))
}

/// Runs specs one after another, or on separate threads when `parallel`.
pub fn run_all(
    specs: &[ExperimentSpec],
    data: &Dataset,
    parallel: bool,
) -> Vec<Result<ExperimentOutcome, ExperimentError>> {
    if !parallel {
        return specs.iter().map(|s| run_experiment(s, data)).collect();
    }
    std::thread::scope(|scope| {
        let handles: Vec<_> = specs
            .iter()
            .map(|s| scope.spawn(move || run_experiment(s, data)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("experiment thread panicked"))
            .collect()
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub name: String,
    /// micro AUC, macro AUC, micro F1, macro F1, P@10
    pub metrics: [f64; 5],
}

pub const COMPARISON_COLUMNS: [&str; 5] =
    ["Micro AUC", "Macro AUC", "Micro F1", "Macro F1", "P@10"];

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
}

fn fmt_metric(v: f64) -> String {
    if v.is_nan() {
        "n/a".to_string()
    } else {
        format!("{v:.4}")
    }
}

impl Comparison {
    pub fn to_text(&self) -> String {
        let width = self
            .rows
            .iter()
            .map(|r| r.name.len())
            .max()
            .unwrap_or(5)
            .max(5);
        let mut s = format!("{:<width$}", "Model");
        for c in COMPARISON_COLUMNS {
            s.push_str(&format!("  {c:>9}"));
        }
        s.push('\n');
        for r in &self.rows {
            s.push_str(&format!("{:<width$}", r.name));
            for v in r.metrics {
                s.push_str(&format!("  {:>9}", fmt_metric(v)));
            }
            s.push('\n');
        }
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("model,micro_auc,macro_auc,micro_f1,macro_f1,p_at_10\n");
        for r in &self.rows {
            let cells: Vec<String> = r.metrics.iter().map(|&v| fmt_metric(v)).collect();
            s.push_str(&format!("{},{}\n", r.name, cells.join(",")));
        }
        s
    }
}

/// Aligns reports over the five aggregate metrics, best micro AUC first;
/// rows with an undefined micro AUC go last.
pub fn compare(reports: &[(String, EvalReport)]) -> Result<Comparison, ExperimentError> {
    if reports.len() < 2 {
        return Err(ExperimentError::Config(
            "need at least two reports to compare".into(),
        ));
    }
    let mut rows: Vec<ComparisonRow> = reports
        .iter()
        .map(|(name, r)| ComparisonRow {
            name: name.clone(),
            metrics: [
                r.micro_auc,
                r.macro_auc,
                r.micro_f1,
                r.macro_f1,
                r.precision_at_10.unwrap_or(f64::NAN),
            ],
        })
        .collect();
    rows.sort_by(
        |a, b| match (a.metrics[0].is_nan(), b.metrics[0].is_nan()) {
            (true, true) => std::cmp::Ordering::Equal,
            (true, false) => std::cmp::Ordering::Greater,
            (false, true) => std::cmp::Ordering::Less,
            (false, false) => b.metrics[0].total_cmp(&a.metrics[0]),
        },
    );
    Ok(Comparison { rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("e{i:03}")).collect()
    }

    #[test]
    fn split_is_80_10_10_and_order_free() {
        let a = split_ids(&ids(100), 7).unwrap();
        assert_eq!(
            (a.train.len(), a.validation.len(), a.test.len()),
            (80, 10, 10)
        );
        let mut rev = ids(100);
        rev.reverse();
        assert_eq!(split_ids(&rev, 7).unwrap(), a);
        assert_ne!(split_ids(&ids(100), 8).unwrap(), a);
        let mut all: Vec<String> = a
            .train
            .iter()
            .chain(&a.validation)
            .chain(&a.test)
            .cloned()
            .collect();
        all.sort();
        assert_eq!(all, ids(100));
    }

    #[test]
    fn split_rejects_duplicates_and_tiny_sets() {
        let mut v = ids(10);
        v.push("e000".into());
        assert!(split_ids(&v, 0).is_err());
        assert!(split_ids(&ids(2), 0).is_err());
        let s = split_ids(&ids(3), 0).unwrap();
        assert_eq!((s.train.len(), s.validation.len(), s.test.len()), (1, 1, 1));
    }

    #[test]
    fn spec_validation() {
        let bad = ExperimentSpec::new(ModelKind::Lstm, InputKind::HeBoth);
        let err = bad.validate().unwrap_err();
        assert_eq!(err.exit_code(), 2);
        for input in InputKind::RAW {
            assert!(ExperimentSpec::new(ModelKind::Lstm, input)
                .validate()
                .is_ok());
        }
        for input in InputKind::RAW.iter().chain(&InputKind::HAND_ENGINEERED) {
            assert!(ExperimentSpec::new(ModelKind::Mlp, *input)
                .validate()
                .is_ok());
            assert!(ExperimentSpec::new(ModelKind::LogReg, *input)
                .validate()
                .is_ok());
        }
    }

    #[test]
    fn table_has_every_row_family() {
        let specs = table_specs(&ExperimentSpec::new(ModelKind::LogReg, InputKind::RawZeros));
        assert_eq!(specs.len(), 21);
        assert!(specs.iter().all(|s| s.validate().is_ok()));
        let names: Vec<String> = specs.iter().map(ExperimentSpec::name).collect();
        assert!(names.contains(&"LSTM - Zeros & Indicators".to_string()));
        assert!(names.contains(&"Log Reg HE Indicators Only".to_string()));
        assert!(names.contains(&"MLP HE".to_string()));
    }

    fn report(micro: f64) -> EvalReport {
        EvalReport {
            micro_auc: micro,
            macro_auc: 0.6,
            micro_f1: 0.3,
            macro_f1: 0.2,
            precision_at_10: Some(0.1),
            per_label: vec![],
        }
    }

    #[test]
    fn comparison_sorts_and_renders_nan() {
        let c = compare(&[
            ("a".into(), report(0.7)),
            ("b".into(), report(f64::NAN)),
            ("c".into(), report(0.9)),
        ])
        .unwrap();
        let names: Vec<&str> = c.rows.iter().map(|r| r.name.as_str()).collect();
        assert_eq!(names, vec!["c", "a", "b"]);
        assert_eq!(c.rows[1].metrics, [0.7, 0.6, 0.3, 0.2, 0.1]);
        assert!(c.to_text().contains("n/a"));
        let csv = c.to_csv();
        assert!(csv.starts_with("model,micro_auc"));
        assert!(csv.contains("b,n/a,0.6000"));
        assert!(compare(&[("a".into(), report(0.5))]).is_err());
    }

    #[test]
    fn standardizer_centres_and_scales() {
        let rows = vec![vec![1.0, 5.0], vec![3.0, 5.0]];
        let st = Standardizer::fit(&rows);
        let mut r = rows[0].clone();
        st.apply(&mut r);
        assert_eq!(r, vec![-1.0, 0.0]);
    }
}
