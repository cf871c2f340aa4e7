//! The `cvnn` command-line tool: `gen-data`, `train`, `eval`, `gradcheck`.
//!
//! Every command accepts `--config FILE`, a JSON object whose keys are the
//! long flag names in snake case. Flags given on the command line win.
//!
//! Exit codes: 0 success, 2 usage, 3 data or shape, 4 numeric.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use crate::activation::{ActivationKind, OutputMap};
use crate::backprop::{grad_check, GradCheckStatus, TrainConfig};
use crate::batchnorm::BatchNormState;
use crate::dataset::{gen, Dataset, Task, TaskParams};
use crate::error::CvnnError;
use crate::init::InitScheme;
use crate::loss::LossKind;
use crate::mvn::MvnConfig;
use crate::network::{Mode, Network};
use crate::train::{evaluate, train_mvn, train_sgd, write_metrics_csv};

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "cvnn", version, about = "Complex-valued neural networks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset.
    GenData(Settings),
    /// Train a network and write the model and per-epoch metrics.
    Train(Settings),
    /// Report loss and accuracy of a saved model.
    Eval(Settings),
    /// Compare analytic gradients against finite differences.
    Gradcheck(Settings),
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    /// JSON file with default values for any of the other options.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,

    /// xor, rotation, circle or arcs.
    #[arg(long)]
    pub task: Option<String>,
    /// Number of samples to generate.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long)]
    pub r1: Option<f64>,
    #[arg(long)]
    pub r2: Option<f64>,
    #[arg(long)]
    pub radial_noise: Option<f64>,
    #[arg(long)]
    pub spread: Option<f64>,

    /// Dataset file (written by gen-data, read by the other commands).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Model file (written by train, read by eval and gradcheck).
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Metrics CSV output.
    #[arg(long)]
    pub metrics: Option<PathBuf>,

    /// Layer widths after the input, e.g. "8,8,1".
    #[arg(long)]
    pub layers: Option<String>,
    /// Hidden activation, e.g. "crelu", "modrelu(b=-1.0)", "type_b(tanh,identity)".
    #[arg(long)]
    pub activation: Option<String>,
    /// Output-layer activation; defaults to the hidden one.
    #[arg(long)]
    pub output_activation: Option<String>,
    /// abs, sqdiff, softmax_abs or softmax_avg.
    #[arg(long)]
    pub output_map: Option<String>,
    /// split or fully_complex.
    #[arg(long)]
    pub mode: Option<String>,
    /// polar or rect.
    #[arg(long)]
    pub init: Option<String>,
    /// Drop the bias column from every layer.
    #[arg(long)]
    pub no_bias: bool,
    /// Batch-normalize every hidden layer.
    #[arg(long)]
    pub batch_norm: bool,

    /// quadratic, log or ace.
    #[arg(long)]
    pub loss: Option<String>,
    /// sgd or mvn.
    #[arg(long)]
    pub algo: Option<String>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    /// MVN error threshold.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Finite-difference step for gradcheck.
    #[arg(long)]
    pub h: Option<f64>,
    /// Relative error tolerance for gradcheck.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Leave wall_ms empty so metrics are reproducible byte for byte.
    #[arg(long)]
    pub no_wall_clock: bool,
}

macro_rules! merge {
    ($a:expr, $b:expr; opt: $($o:ident),*; flag: $($f:ident),*) => {
        Settings {
            config: None,
            $($o: $a.$o.or($b.$o),)*
            $($f: $a.$f || $b.$f,)*
        }
    };
}

impl Settings {
    /// Command-line values over config-file values.
    pub fn merged_with(self, file: Settings) -> Settings {
        merge!(self, file;
            opt: task, n, seed, theta, r1, r2, radial_noise, spread, data, model, metrics,
                 layers, activation, output_activation, output_map, mode, init,
                 loss, algo, eta, epochs, batch, threshold, h, tol;
            flag: no_bias, batch_norm, no_wall_clock)
    }

    /// Applies `--config` when given.
    pub fn resolve(self) -> Result<Settings, CliError> {
        match &self.config {
            None => Ok(self),
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
                let file: Settings = serde_json::from_str(&text)
                    .map_err(|e| CliError::usage(format!("config {}: line {} column {}: {e}", path.display(), e.line(), e.column())))?;
                Ok(self.merged_with(file))
            }
        }
    }

    fn params(&self) -> TaskParams {
        let d = TaskParams::default();
        TaskParams {
            theta: self.theta.unwrap_or(d.theta),
            r1: self.r1.unwrap_or(d.r1),
            r2: self.r2.unwrap_or(d.r2),
            radial_noise: self.radial_noise.unwrap_or(d.radial_noise),
            spread: self.spread.unwrap_or(d.spread),
        }
    }

    fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    fn generate(&self) -> Result<Dataset, CliError> {
        let task: Task = parse_flag("task", self.task.as_deref().unwrap_or("xor"))?;
        Ok(gen(task, self.n.unwrap_or(256), self.seed(), &self.params())?)
    }

    /// The dataset from `--data`, or a freshly generated one.
    fn dataset(&self) -> Result<Dataset, CliError> {
        match &self.data {
            Some(path) => Ok(Dataset::load(path)?),
            None => self.generate(),
        }
    }

    fn loss(&self) -> Result<LossKind, CliError> {
        parse_flag("loss", self.loss.as_deref().unwrap_or("quadratic"))
    }

    fn widths(&self) -> Result<Vec<usize>, CliError> {
        let text = self.layers.as_deref().unwrap_or("1");
        let widths = text
            .split(',')
            .map(|w| w.trim().parse::<usize>().ok().filter(|w| *w >= 1))
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| CliError::usage(format!("--layers: expected comma-separated widths >= 1, got '{text}'")))?;
        Ok(widths)
    }

    fn build_network(&self, input_width: usize) -> Result<Network, CliError> {
        let hidden: ActivationKind = parse_flag("activation", self.activation.as_deref().unwrap_or("ctanh"))?;
        let output = match &self.output_activation {
            Some(s) => parse_flag("output-activation", s)?,
            None => hidden,
        };
        let mode: Mode = parse_flag("mode", self.mode.as_deref().unwrap_or("split"))?;
        let scheme: InitScheme = parse_flag("init", self.init.as_deref().unwrap_or("polar"))?;
        let mut net = Network::random(input_width, &self.widths()?, hidden, output, mode, scheme, !self.no_bias, self.seed())
            .map_err(|e| CliError::usage(e.to_string()))?;
        net.output_map = self
            .output_map
            .as_deref()
            .map(|s| parse_flag::<OutputMap>("output-map", s))
            .transpose()?;
        if self.batch_norm {
            let hidden_layers = net.layers.len() - 1;
            for layer in &mut net.layers[..hidden_layers] {
                *layer = layer.clone().with_batch_norm(BatchNormState::default());
            }
        }
        Ok(net)
    }

    fn load_model(&self) -> Result<Network, CliError> {
        let path = self.model.as_ref().ok_or_else(|| CliError::usage("--model is required"))?;
        Ok(Network::load(path)?)
    }
}

fn parse_flag<T: std::str::FromStr<Err = CvnnError>>(flag: &str, value: &str) -> Result<T, CliError> {
    value.parse().map_err(|e: CvnnError| CliError::usage(format!("--{flag}: {e}")))
}

/// A failed command: message plus process exit code.
#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<CvnnError> for CliError {
    fn from(e: CvnnError) -> Self {
        let code = match &e {
            _ if e.is_numeric() => EXIT_NUMERIC,
            CvnnError::InsufficientBatch { .. } => EXIT_NUMERIC,
            CvnnError::Shape { .. } | CvnnError::Parse { .. } | CvnnError::Io(_) => EXIT_DATA,
            _ => EXIT_USAGE,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CvnnError::from(e).into()
    }
}

fn write_csv(path: &Path, rows: &[crate::train::EpochMetrics]) -> Result<(), CliError> {
    let mut out = BufWriter::new(File::create(path)?);
    write_metrics_csv(&mut out, rows)?;
    out.flush()?;
    Ok(())
}

fn cmd_gen_data(s: &Settings, out: &mut dyn Write) -> Result<(), CliError> {
    let data = s.generate()?;
    match &s.data {
        Some(path) => {
            data.save(path)?;
            writeln!(out, "wrote {} samples to {}", data.len(), path.display())?;
        }
        None => out.write_all(data.to_json()?.as_bytes())?,
    }
    Ok(())
}

fn cmd_train(s: &Settings, out: &mut dyn Write) -> Result<(), CliError> {
    let data = s.dataset()?;
    let net = s.build_network(data.input_width())?;
    let epochs = s.epochs.unwrap_or(100);
    let wall_clock = !s.no_wall_clock;
    let algo = s.algo.as_deref().unwrap_or("sgd");
    let (trained, rows) = match algo {
        "sgd" => {
            let config = TrainConfig {
                eta: s.eta.unwrap_or(0.1),
                epochs,
                batch_size: s.batch.unwrap_or(8),
                seed: s.seed(),
                loss: s.loss()?,
            };
            let mut net = net;
            let rows = train_sgd(&mut net, &data, &config, wall_clock, |_| {})?;
            (net, rows)
        }
        "mvn" => {
            let k = match net.layers[net.layers.len() - 1].activation {
                ActivationKind::MvnDiscrete { k } => Some(k),
                _ => None,
            };
            let config = MvnConfig {
                error_threshold: s.threshold.unwrap_or(0.1),
                max_epochs: epochs,
                k,
                ..MvnConfig::default()
            };
            let (net, _, _, rows) = train_mvn(&net, &data, &config, wall_clock)?;
            (net, rows)
        }
        other => return Err(CliError::usage(format!("--algo: expected sgd or mvn, got '{other}'"))),
    };
    if let Some(path) = &s.model {
        trained.save(path)?;
    }
    if let Some(path) = &s.metrics {
        write_csv(path, &rows)?;
    }
    match rows.last() {
        Some(last) => {
            write!(out, "epochs={} loss={}", rows.len(), last.loss)?;
            if let Some(acc) = last.accuracy {
                write!(out, " accuracy={acc}")?;
            }
            writeln!(out)?;
        }
        None => writeln!(out, "epochs=0")?,
    }
    Ok(())
}

fn cmd_eval(s: &Settings, out: &mut dyn Write) -> Result<(), CliError> {
    let net = s.load_model()?;
    let data = s.dataset()?;
    let (loss, accuracy) = evaluate(&net, &data, s.loss()?)?;
    write!(out, "loss={loss:e}")?;
    if let Some(acc) = accuracy {
        write!(out, " accuracy={acc}")?;
    }
    writeln!(out)?;
    Ok(())
}

fn cmd_gradcheck(s: &Settings, out: &mut dyn Write) -> Result<(), CliError> {
    let data = s.dataset()?;
    let net = match &s.model {
        Some(_) => s.load_model()?,
        None => s.build_network(data.input_width())?,
    };
    let h = s.h.unwrap_or(crate::complex::DEFAULT_STEP);
    let tol = s.tol.unwrap_or(1e-5);
    let report = grad_check(&net, &data.inputs[0], &data.targets[0], s.loss()?, h, tol)?;
    let status = match report.status {
        GradCheckStatus::Pass => "PASS",
        GradCheckStatus::Fail => "FAIL",
        GradCheckStatus::Inconclusive => "INCONCLUSIVE",
    };
    write!(out, "{status} max_rel_err={:e} tol={:e}", report.max_rel_err, report.tolerance)?;
    if report.loose {
        write!(out, " loose")?;
    }
    writeln!(out)?;
    if report.passed() {
        Ok(())
    } else {
        Err(CliError {
            code: EXIT_NUMERIC,
            message: format!("gradcheck: {}", status.to_lowercase()),
        })
    }
}

/// Runs a parsed command, writing its report to `out`.
pub fn run(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::GenData(s) => cmd_gen_data(&s.resolve()?, out),
        Command::Train(s) => cmd_train(&s.resolve()?, out),
        Command::Eval(s) => cmd_eval(&s.resolve()?, out),
        Command::Gradcheck(s) => cmd_gradcheck(&s.resolve()?, out),
    }
}
