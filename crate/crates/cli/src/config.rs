//! Declarative run configuration (TOML) and flag overrides.

use std::path::{Path, PathBuf};

use misslstm::experiment::{Architecture, ExperimentSpec, InputKind, ModelKind};
use misslstm::nn::TrainConfig;
use misslstm::synth::SynthConfig;
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub data: DataSection,
    pub experiment: ExperimentSection,
    pub synth: SynthConfig,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    /// Episode JSONL file.
    pub episodes: Option<PathBuf>,
    /// Variable spec CSV (`index,name,low,high`).
    pub variables: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    pub model: Option<ModelKind>,
    pub input: Option<InputKind>,
    pub train: TrainConfig,
    pub architecture: Architecture,
    pub split_seed: u64,
    pub bin_width: f64,
    pub max_steps: Option<usize>,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            model: None,
            input: None,
            train: TrainConfig::default(),
            architecture: Architecture::default(),
            split_seed: 0,
            bin_width: 1.0,
            max_steps: None,
        }
    }
}

impl ConfigFile {
    /// Loads `path`, resolving data paths against the file's directory.
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: ConfigFile = toml::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.data.episodes, &mut cfg.data.variables]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ImputeFlag {
    Zero,
    Ffill,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum IndicatorFlag {
    On,
    Off,
    Only,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ModelFlag {
    Lstm,
    Mlp,
    Logreg,
}

impl From<ModelFlag> for ModelKind {
    fn from(m: ModelFlag) -> Self {
        match m {
            ModelFlag::Lstm => ModelKind::Lstm,
            ModelFlag::Mlp => ModelKind::Mlp,
            ModelFlag::Logreg => ModelKind::LogReg,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum InputFlag {
    RawZeros,
    RawImpute,
    RawZerosIndicators,
    RawImputeIndicators,
    IndicatorsOnly,
    HeMeasurement,
    HeIndicators,
    HeBoth,
}

impl From<InputFlag> for InputKind {
    fn from(i: InputFlag) -> Self {
        match i {
            InputFlag::RawZeros => InputKind::RawZeros,
            InputFlag::RawImpute => InputKind::RawImpute,
            InputFlag::RawZerosIndicators => InputKind::RawZerosIndicators,
            InputFlag::RawImputeIndicators => InputKind::RawImputeIndicators,
            InputFlag::IndicatorsOnly => InputKind::IndicatorsOnly,
            InputFlag::HeMeasurement => InputKind::HeMeasurement,
            InputFlag::HeIndicators => InputKind::HeIndicators,
            InputFlag::HeBoth => InputKind::HeBoth,
        }
    }
}

/// Raw input variant named by an imputation strategy and indicator mode.
pub fn input_from_flags(impute: ImputeFlag, indicators: IndicatorFlag) -> InputKind {
    match (impute, indicators) {
        (_, IndicatorFlag::Only) => InputKind::IndicatorsOnly,
        (ImputeFlag::Zero, IndicatorFlag::Off) => InputKind::RawZeros,
        (ImputeFlag::Ffill, IndicatorFlag::Off) => InputKind::RawImpute,
        (ImputeFlag::Zero, IndicatorFlag::On) => InputKind::RawZerosIndicators,
        (ImputeFlag::Ffill, IndicatorFlag::On) => InputKind::RawImputeIndicators,
    }
}

#[derive(Debug, Default, Clone, clap::Args)]
pub struct SpecOverrides {
    #[arg(long, value_enum)]
    pub model: Option<ModelFlag>,
    #[arg(long, value_enum, conflicts_with_all = ["impute", "indicators"])]
    pub input: Option<InputFlag>,
    /// Imputation for raw inputs; combines with --indicators.
    #[arg(long, value_enum)]
    pub impute: Option<ImputeFlag>,
    #[arg(long, value_enum)]
    pub indicators: Option<IndicatorFlag>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Training seed (initialization, shuffling, dropout).
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub split_seed: Option<u64>,
    /// Comma-separated LSTM layer sizes, e.g. `64,64`.
    #[arg(long, value_delimiter = ',')]
    pub lstm_hidden: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub mlp_hidden: Option<Vec<usize>>,
    #[arg(long)]
    pub max_steps: Option<usize>,
}

impl SpecOverrides {
    /// Config values with flags applied on top; model and input may stay
    /// unset for matrix runs.
    pub fn apply(
        &self,
        section: &ExperimentSection,
    ) -> (Option<ModelKind>, Option<InputKind>, ExperimentSpec) {
        let model = self.model.map(ModelKind::from).or(section.model);
        let input = match (self.input, self.impute, self.indicators) {
            (Some(i), _, _) => Some(i.into()),
            (None, None, None) => section.input,
            (None, imp, ind) => Some(input_from_flags(
                imp.unwrap_or(ImputeFlag::Zero),
                ind.unwrap_or(IndicatorFlag::Off),
            )),
        };
        let mut spec = ExperimentSpec {
            model: model.unwrap_or(ModelKind::Lstm),
            input: input.unwrap_or(InputKind::RawZerosIndicators),
            train: section.train.clone(),
            architecture: section.architecture.clone(),
            split_seed: section.split_seed,
            bin_width: section.bin_width,
            max_steps: section.max_steps,
        };
        let t = &mut spec.train;
        if let Some(v) = self.epochs {
            t.epochs = v;
        }
        if let Some(v) = self.learning_rate {
            t.learning_rate = v;
        }
        if let Some(v) = self.dropout {
            t.dropout = v;
        }
        if let Some(v) = self.batch_size {
            t.batch_size = v;
        }
        if let Some(v) = self.seed {
            t.seed = v;
        }
        if let Some(v) = self.split_seed {
            spec.split_seed = v;
        }
        if let Some(v) = &self.lstm_hidden {
            spec.architecture.lstm_hidden = v.clone();
        }
        if let Some(v) = &self.mlp_hidden {
            spec.architecture.mlp_hidden = v.clone();
        }
        if self.max_steps.is_some() {
            spec.max_steps = self.max_steps;
        }
        (model, input, spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flag_pairs_name_the_raw_variants() {
        assert_eq!(
            input_from_flags(ImputeFlag::Zero, IndicatorFlag::Off),
            InputKind::RawZeros
        );
        assert_eq!(
            input_from_flags(ImputeFlag::Ffill, IndicatorFlag::On),
            InputKind::RawImputeIndicators
        );
        assert_eq!(
            input_from_flags(ImputeFlag::Ffill, IndicatorFlag::Only),
            InputKind::IndicatorsOnly
        );
    }

    #[test]
    fn flags_override_file_values() {
        let section: ExperimentSection = toml::from_str(
            r#"
            model = "mlp"
            input = "he_both"
            split_seed = 3
            [train]
            epochs = 7
            "#,
        )
        .unwrap();
        let (_, _, spec) = SpecOverrides::default().apply(&section);
        assert_eq!(
            (spec.model, spec.input, spec.train.epochs, spec.split_seed),
            (ModelKind::Mlp, InputKind::HeBoth, 7, 3)
        );
        let flags = SpecOverrides {
            model: Some(ModelFlag::Lstm),
            impute: Some(ImputeFlag::Ffill),
            epochs: Some(2),
            ..Default::default()
        };
        let (_, _, spec) = flags.apply(&section);
        assert_eq!(
            (spec.model, spec.input, spec.train.epochs),
            (ModelKind::Lstm, InputKind::RawImpute, 2)
        );
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<ConfigFile>("[experiment]\nmodle = \"lstm\"").is_err());
    }
}
