//! Synthetic complex-valued tasks.
//!
//! - `xor`: inputs `0, 1, i, 1+i` with labels `0, 1, 1, 0`
//! - `rotation`: `x` uniform in the unit disk, target `e^{i theta} x`
//! - `circle`: class 0 on radius `r1`, class 1 on radius `r2`, uniform angle
//! - `arcs`: unit-circle points, class `c` within `spread` of angle
//!   `theta + c pi`; targets are the matching half-plane bisectors `±i`

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::activation::sector_bisector;
use crate::complex::c;
use crate::error::{CvnnError, Result};
use crate::init::RngStream;
use crate::network::Sig17Formatter;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Xor,
    Rotation,
    Circle,
    Arcs,
}

impl Task {
    pub fn name(&self) -> &'static str {
        match self {
            Task::Xor => "xor",
            Task::Rotation => "rotation",
            Task::Circle => "circle",
            Task::Arcs => "arcs",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Task {
    type Err = CvnnError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_lowercase().as_str() {
            "xor" => Ok(Task::Xor),
            "rotation" => Ok(Task::Rotation),
            "circle" => Ok(Task::Circle),
            "arcs" => Ok(Task::Arcs),
            other => Err(CvnnError::Parse {
                position: "task".into(),
                reason: format!("unknown task '{other}'"),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskParams {
    /// Rotation angle for `rotation`, class-0 direction for `arcs`.
    pub theta: f64,
    pub r1: f64,
    pub r2: f64,
    /// Half-width of the uniform radial jitter for `circle`.
    pub radial_noise: f64,
    /// Angular half-width of each class for `arcs`.
    pub spread: f64,
}

impl Default for TaskParams {
    fn default() -> Self {
        Self {
            theta: PI / 3.0,
            r1: 1.0,
            r2: 2.0,
            radial_noise: 0.0,
            spread: PI / 4.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub task: Task,
    pub inputs: Vec<Vec<Complex64>>,
    pub targets: Vec<Vec<Complex64>>,
    /// Class labels for classification tasks.
    pub labels: Option<Vec<usize>>,
}

impl Dataset {
    pub fn validate(&self) -> Result<()> {
        let n = self.inputs.len();
        if n == 0 || self.targets.len() != n {
            return Err(CvnnError::shape("dataset", "equal nonzero numbers of inputs and targets", format!("{n} and {}", self.targets.len())));
        }
        if let Some(labels) = &self.labels {
            if labels.len() != n {
                return Err(CvnnError::shape("dataset", format!("{n} labels"), labels.len()));
            }
        }
        let width = |v: &[Vec<Complex64>]| v[0].len();
        if self.inputs.iter().any(|x| x.len() != width(&self.inputs)) || self.targets.iter().any(|d| d.len() != width(&self.targets)) {
            return Err(CvnnError::invalid("dataset", "ragged inputs or targets"));
        }
        let finite = self.inputs.iter().chain(&self.targets).flatten().all(|z| z.re.is_finite() && z.im.is_finite());
        if !finite {
            return Err(CvnnError::invalid("dataset", "entries must be finite"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn input_width(&self) -> usize {
        self.inputs.first().map_or(0, Vec::len)
    }

    pub fn target_width(&self) -> usize {
        self.targets.first().map_or(0, Vec::len)
    }

    /// Number of classes, when labeled.
    pub fn classes(&self) -> Option<usize> {
        self.labels.as_ref().map(|l| l.iter().max().map_or(0, |m| m + 1).max(2))
    }

    pub fn to_json(&self) -> Result<String> {
        let split = |v: &[Vec<Complex64>], f: fn(&Complex64) -> f64| v.iter().map(|row| row.iter().map(f).collect()).collect();
        let file = DatasetFile {
            task: self.task.to_string(),
            inputs_re: split(&self.inputs, |z| z.re),
            inputs_im: split(&self.inputs, |z| z.im),
            targets_re: split(&self.targets, |z| z.re),
            targets_im: split(&self.targets, |z| z.im),
            labels: self.labels.clone(),
        };
        let mut out = Vec::new();
        let mut ser = serde_json::Serializer::with_formatter(&mut out, Sig17Formatter);
        file.serialize(&mut ser).map_err(|e| CvnnError::Io(e.to_string()))?;
        out.push(b'\n');
        String::from_utf8(out).map_err(|e| CvnnError::Io(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: DatasetFile = serde_json::from_str(text).map_err(|e| CvnnError::Parse {
            position: format!("line {} column {}", e.line(), e.column()),
            reason: e.to_string(),
        })?;
        let join = |re: Vec<Vec<f64>>, im: Vec<Vec<f64>>, what: &str| -> Result<Vec<Vec<Complex64>>> {
            if re.len() != im.len() || re.iter().zip(&im).any(|(a, b)| a.len() != b.len()) {
                return Err(CvnnError::Parse {
                    position: what.into(),
                    reason: "real and imaginary parts differ in shape".into(),
                });
            }
            Ok(re.into_iter().zip(im).map(|(a, b)| a.into_iter().zip(b).map(|(x, y)| c(x, y)).collect()).collect())
        };
        let data = Dataset {
            task: file.task.parse()?,
            inputs: join(file.inputs_re, file.inputs_im, "inputs")?,
            targets: join(file.targets_re, file.targets_im, "targets")?,
            labels: file.labels,
        };
        data.validate()?;
        Ok(data)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Dataset::from_json(&std::fs::read_to_string(path)?)
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DatasetFile {
    task: String,
    inputs_re: Vec<Vec<f64>>,
    inputs_im: Vec<Vec<f64>>,
    targets_re: Vec<Vec<f64>>,
    targets_im: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    labels: Option<Vec<usize>>,
}

fn labeled(task: Task, inputs: Vec<Vec<Complex64>>, labels: Vec<usize>, target: impl Fn(usize) -> Complex64) -> Dataset {
    Dataset {
        task,
        targets: labels.iter().map(|l| vec![target(*l)]).collect(),
        inputs,
        labels: Some(labels),
    }
}

/// Generates `n` samples (`xor` always has 4). Deterministic given `seed`.
pub fn gen(task: Task, n: usize, seed: u64, params: &TaskParams) -> Result<Dataset> {
    if n == 0 {
        return Err(CvnnError::invalid("dataset", "sample count must be at least 1"));
    }
    let mut rng = RngStream::new(seed);
    let data = match task {
        Task::Xor => labeled(
            task,
            vec![vec![c(0.0, 0.0)], vec![c(1.0, 0.0)], vec![c(0.0, 1.0)], vec![c(1.0, 1.0)]],
            vec![0, 1, 1, 0],
            |l| c(l as f64, 0.0),
        ),
        Task::Rotation => {
            if !params.theta.is_finite() {
                return Err(CvnnError::invalid("dataset", "theta must be finite"));
            }
            let rot = Complex64::from_polar(1.0, params.theta);
            let inputs: Vec<Vec<Complex64>> = (0..n)
                .map(|_| {
                    let r = rng.next_f64().sqrt();
                    vec![Complex64::from_polar(r, 2.0 * PI * rng.next_f64())]
                })
                .collect();
            Dataset {
                task,
                targets: inputs.iter().map(|x| vec![rot * x[0]]).collect(),
                inputs,
                labels: None,
            }
        }
        Task::Circle => {
            let p = params;
            if !(p.r1 >= 0.0 && p.r1 < p.r2 && p.r2.is_finite()) {
                return Err(CvnnError::invalid("dataset", format!("need 0 <= r1 < r2, got r1={} r2={}", p.r1, p.r2)));
            }
            if !(p.radial_noise >= 0.0 && p.radial_noise.is_finite()) {
                return Err(CvnnError::invalid("dataset", "radial noise must be non-negative"));
            }
            let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
            let inputs = labels
                .iter()
                .map(|&l| {
                    let r = if l == 0 { p.r1 } else { p.r2 } + rng.uniform(-p.radial_noise, p.radial_noise);
                    vec![Complex64::from_polar(r, 2.0 * PI * rng.next_f64())]
                })
                .collect();
            labeled(task, inputs, labels, |l| c(l as f64, 0.0))
        }
        Task::Arcs => {
            if !(params.spread > 0.0 && params.spread < PI / 2.0) || !params.theta.is_finite() {
                return Err(CvnnError::invalid("dataset", "arcs need 0 < spread < pi/2 and finite theta"));
            }
            let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
            let inputs = labels
                .iter()
                .map(|&l| {
                    let angle = params.theta + l as f64 * PI + rng.uniform(-params.spread, params.spread);
                    vec![Complex64::from_polar(1.0, angle)]
                })
                .collect();
            labeled(task, inputs, labels, |l| sector_bisector(l as u32, 2))
        }
    };
    Ok(data)
}
