//! `misslstm` command line: synthesize data, build features, train,
//! evaluate, check gradients and run the full comparison matrix.

mod config;

use std::collections::HashSet;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use misslstm::experiment::{
    compare, evaluate_checkpoint, feature_vector, grids_for, run_all, run_experiment, split_ids,
    table_specs, Checkpoint, Dataset, ExperimentError, ExperimentSpec,
};
use misslstm::impute::compute_medians;
use misslstm::ingest::{
    read_episodes, read_variable_specs, write_episodes, write_variable_specs, RawEpisode,
};
use misslstm::nn::gradcheck::check_gradients;
use misslstm::nn::tensor::Matrix;
use misslstm::nn::LstmModel;
use misslstm::synth::{generate, summarize_missingness};

use crate::config::{ConfigFile, SpecOverrides};

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numeric(String),
    Experiment(ExperimentError),
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::Experiment(e) => e.exit_code() as u8,
            CliError::Io(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) | CliError::Numeric(m) | CliError::Io(m) => f.write_str(m),
            CliError::Experiment(e) => write!(f, "{e}"),
        }
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        CliError::Experiment(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

#[derive(Parser)]
#[command(
    name = "misslstm",
    version,
    about = "Missing-data-aware clinical time-series classification"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DataArgs {
    /// Episode JSONL file (overrides `data.episodes`).
    #[arg(long)]
    episodes: Option<PathBuf>,
    /// Variable spec CSV (overrides `data.variables`).
    #[arg(long)]
    variables: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic episodes with label-dependent missingness.
    Synth {
        #[command(flatten)]
        common: Common,
        #[arg(long = "num-episodes")]
        num_episodes: Option<usize>,
        #[arg(long = "num-labels")]
        num_labels: Option<usize>,
        /// MNAR coupling strength.
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long)]
        min_hours: Option<usize>,
        #[arg(long)]
        max_hours: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Write the feature matrix of one input variant as CSV.
    Featurize {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        spec: SpecOverrides,
    },
    /// Train one model and evaluate it on the test split.
    Train {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        spec: SpecOverrides,
    },
    /// Score a checkpoint on the test split of a dataset.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Compare analytic LSTM gradients with central finite differences.
    Gradcheck {
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 3)]
        inputs: usize,
        #[arg(long, value_delimiter = ',', default_value = "4,4")]
        hidden: Vec<usize>,
        #[arg(long, default_value_t = 2)]
        labels: usize,
        #[arg(long, default_value_t = 5)]
        steps: usize,
        #[arg(long, default_value_t = 0.5)]
        alpha: f64,
        #[arg(long, default_value_t = 1e-3)]
        weight_decay: f64,
        #[arg(long, default_value_t = 1e-5)]
        step: f64,
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run every model/input combination on one split and tabulate.
    Matrix {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        spec: SpecOverrides,
        /// Run experiments on separate threads.
        #[arg(long)]
        parallel: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Synth {
            common,
            num_episodes,
            num_labels,
            beta,
            min_hours,
            max_hours,
            seed,
        } => {
            let mut cfg = ConfigFile::load(common.config.as_deref())?.synth;
            if let Some(v) = num_episodes {
                cfg.num_episodes = v;
            }
            if let Some(v) = num_labels {
                cfg.num_labels = v;
            }
            if let Some(v) = beta {
                cfg.mnar_strength = v;
            }
            if let Some(v) = min_hours {
                cfg.min_hours = v;
            }
            if let Some(v) = max_hours {
                cfg.max_hours = v;
            }
            if let Some(v) = seed {
                cfg.seed = v;
            }
            let episodes = generate(&cfg).map_err(|e| CliError::Config(e.to_string()))?;
            fs::create_dir_all(&common.out)?;
            write_episodes(
                BufWriter::new(fs::File::create(common.out.join("episodes.jsonl"))?),
                &episodes,
            )
            .map_err(|e| CliError::Io(e.to_string()))?;
            write_variable_specs(&common.out.join("variables.csv"), &cfg.variable_specs())
                .map_err(|e| CliError::Io(e.to_string()))?;
            let mut summary =
                String::from("variable,measurements_per_hour,missing_entirely,fraction_missing\n");
            for (s, v) in summarize_missingness(&episodes, cfg.variables.len())
                .iter()
                .zip(&cfg.variables)
            {
                summary.push_str(&format!(
                    "{},{:.4},{:.4},{:.4}\n",
                    v.name, s.measurements_per_hour, s.missing_entirely, s.fraction_missing
                ));
            }
            fs::write(common.out.join("missingness.csv"), summary)?;
            fs::write(common.out.join("synth.json"), to_pretty(&cfg))?;
            println!(
                "wrote {} episodes to {}",
                episodes.len(),
                common.out.display()
            );
            Ok(())
        }
        Command::Featurize { common, data, spec } => {
            let file = ConfigFile::load(common.config.as_deref())?;
            let (_, _, spec) = spec.apply(&file.experiment);
            let dataset = load_data(&file, &data)?;
            featurize(&spec, &dataset, &common.out)
        }
        Command::Train { common, data, spec } => {
            let file = ConfigFile::load(common.config.as_deref())?;
            let (model, input, spec) = spec.apply(&file.experiment);
            if model.is_none() || input.is_none() {
                return Err(CliError::Config(
                    "train needs a model and an input (config `experiment.model`/`experiment.input` or flags)".into(),
                ));
            }
            spec.validate()?;
            let dataset = load_data(&file, &data)?;
            let out = run_experiment(&spec, &dataset)?;
            out.write_to(&common.out)?;
            let r = &out.report;
            println!(
                "{}: micro AUC {} macro AUC {} micro F1 {} macro F1 {} P@10 {} (best epoch {})",
                out.name,
                fmt(r.micro_auc),
                fmt(r.macro_auc),
                fmt(r.micro_f1),
                fmt(r.macro_f1),
                r.precision_at_10.map_or("n/a".into(), fmt),
                out.checkpoint.best_epoch
            );
            Ok(())
        }
        Command::Evaluate {
            common,
            data,
            checkpoint,
        } => {
            let file = ConfigFile::load(common.config.as_deref())?;
            let text = fs::read_to_string(&checkpoint).map_err(|e| {
                CliError::Config(format!(
                    "cannot read checkpoint {}: {e}",
                    checkpoint.display()
                ))
            })?;
            let ckpt = Checkpoint::from_json(&text)
                .map_err(|e| CliError::Config(format!("bad checkpoint: {e}")))?;
            let dataset = load_data(&file, &data)?;
            let report = evaluate_checkpoint(&ckpt, &dataset)?;
            fs::create_dir_all(&common.out)?;
            fs::write(common.out.join("report.json"), to_pretty(&report))?;
            let names: Vec<String> = (0..ckpt.num_labels)
                .map(|k| format!("label_{k:02}"))
                .collect();
            fs::write(
                common.out.join("per_label.csv"),
                report.per_label_csv(Some(&names)),
            )?;
            println!("{}", report.to_json());
            Ok(())
        }
        Command::Gradcheck {
            out,
            inputs,
            hidden,
            labels,
            steps,
            alpha,
            weight_decay,
            step,
            tolerance,
            seed,
        } => {
            if inputs == 0 || labels == 0 || steps == 0 || hidden.is_empty() || hidden.contains(&0)
            {
                return Err(CliError::Config("gradcheck sizes must be positive".into()));
            }
            let model = LstmModel::new(inputs, &hidden, labels, alpha, seed);
            let data: Vec<(Matrix, Vec<u8>)> = (0..3)
                .map(|i| {
                    let x = Matrix::from_fn(steps, inputs, |t, c| {
                        ((7 * t + 3 * c + 11 * i) as f64 * 0.37 + seed as f64).sin()
                    });
                    (x, (0..labels).map(|k| ((i + k) % 2) as u8).collect())
                })
                .collect();
            let batch: Vec<(&Matrix, &[u8])> =
                data.iter().map(|(x, y)| (x, y.as_slice())).collect();
            let report = check_gradients(&model, &batch, weight_decay, step);
            for t in &report.tensors {
                println!(
                    "{:<16} {:>6} entries  max rel {:.3e}  max abs {:.3e}",
                    t.name, t.entries, t.max_rel_error, t.max_abs_error
                );
            }
            if let Some(dir) = out {
                fs::create_dir_all(&dir)?;
                fs::write(dir.join("gradcheck.json"), to_pretty(&report))?;
            }
            if report.passes(tolerance) {
                println!(
                    "ok: max relative error {:.3e} <= {tolerance:e}",
                    report.max_rel_error()
                );
                Ok(())
            } else {
                Err(CliError::Numeric(format!(
                    "gradient check failed: max relative error {:.3e} > {tolerance:e}",
                    report.max_rel_error()
                )))
            }
        }
        Command::Matrix {
            common,
            data,
            spec,
            parallel,
        } => {
            let file = ConfigFile::load(common.config.as_deref())?;
            let (_, _, template) = spec.apply(&file.experiment);
            let specs = table_specs(&template);
            for s in &specs {
                s.validate()?;
            }
            let dataset = load_data(&file, &data)?;
            let results = run_all(&specs, &dataset, parallel);
            let mut reports = Vec::new();
            let mut first_error = None;
            for (s, r) in specs.iter().zip(results) {
                match r {
                    Ok(o) => {
                        o.write_to(&common.out.join(slug(&s.name())))?;
                        reports.push((o.name, o.report));
                    }
                    Err(e) => {
                        eprintln!("{}: {e}", s.name());
                        first_error.get_or_insert(e);
                    }
                }
            }
            if let Some(e) = first_error {
                return Err(e.into());
            }
            let table = compare(&reports)?;
            fs::write(common.out.join("comparison.txt"), table.to_text())?;
            fs::write(common.out.join("comparison.csv"), table.to_csv())?;
            print!("{}", table.to_text());
            Ok(())
        }
    }
}

fn fmt(v: f64) -> String {
    if v.is_nan() {
        "n/a".into()
    } else {
        format!("{v:.4}")
    }
}

fn to_pretty<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("value serializes")
}

fn slug(name: &str) -> String {
    let mut s = String::new();
    for c in name.chars() {
        if c.is_ascii_alphanumeric() {
            s.push(c.to_ascii_lowercase());
        } else if !s.ends_with('_') {
            s.push('_');
        }
    }
    s.trim_matches('_').to_string()
}

fn load_data(file: &ConfigFile, args: &DataArgs) -> Result<Dataset, CliError> {
    let pick = |flag: &Option<PathBuf>, cfg: &Option<PathBuf>, what: &str| {
        flag.clone().or_else(|| cfg.clone()).ok_or_else(|| {
            CliError::Config(format!(
                "no {what} given (flag --{what} or config `data.{what}`)"
            ))
        })
    };
    let var_path = pick(&args.variables, &file.data.variables, "variables")?;
    let ep_path = pick(&args.episodes, &file.data.episodes, "episodes")?;
    let specs = read_variable_specs(&var_path)
        .map_err(|e| CliError::Config(format!("{}: {e}", var_path.display())))?;
    let episodes = read_episodes(&ep_path, specs.len())
        .map_err(|e| CliError::Config(format!("{}: {e}", ep_path.display())))?;
    if episodes.is_empty() {
        return Err(CliError::Config(format!(
            "{} holds no episodes",
            ep_path.display()
        )));
    }
    Ok(Dataset { episodes, specs })
}

fn featurize(spec: &ExperimentSpec, data: &Dataset, out: &Path) -> Result<(), CliError> {
    let ids: Vec<String> = data.episodes.iter().map(|e| e.id.clone()).collect();
    let split = split_ids(&ids, spec.split_seed)?;
    let train_ids: HashSet<&String> = split.train.iter().collect();
    let val_ids: HashSet<&String> = split.validation.iter().collect();
    let train: Vec<RawEpisode> = data
        .episodes
        .iter()
        .filter(|e| train_ids.contains(&e.id))
        .cloned()
        .collect();
    let medians = compute_medians(&train, &data.specs).map_err(ExperimentError::from)?;
    let refs: Vec<&RawEpisode> = data.episodes.iter().collect();
    let grids = grids_for(spec, &refs, &data.specs)?;
    let names: Vec<String> = data.specs.iter().map(|s| s.name.clone()).collect();
    let part = |id: &String| {
        if train_ids.contains(id) {
            "train"
        } else if val_ids.contains(id) {
            "validation"
        } else {
            "test"
        }
    };
    let mut csv = String::new();
    for (i, g) in grids.iter().enumerate() {
        let fv = feature_vector(spec.input, g, &medians)?;
        if i == 0 {
            let mut header = vec!["id".to_string(), "split".to_string()];
            header.extend(fv.header(Some(&names)));
            header.extend((0..g.labels.len()).map(|k| format!("label_{k:02}")));
            csv.push_str(&header.join(","));
            csv.push('\n');
        }
        let mut row = vec![g.id.clone(), part(&g.id).to_string()];
        row.extend(fv.values.iter().map(|v| v.to_string()));
        row.extend(g.labels.iter().map(|l| l.to_string()));
        csv.push_str(&row.join(","));
        csv.push('\n');
    }
    fs::create_dir_all(out)?;
    fs::write(out.join("features.csv"), csv)?;
    fs::write(out.join("medians.json"), to_pretty(&medians))?;
    println!(
        "wrote {} rows of {:?} features to {}",
        grids.len(),
        spec.input,
        out.display()
    );
    Ok(())
}
