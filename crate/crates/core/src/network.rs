//! Dense feed-forward complex networks and the JSON model file.
//!
//! Layer `l` computes `V = W [X_prev; 1]` (the trailing 1 only when the layer
//! has a bias column), optionally batch-normalizes `V` per neuron, and applies
//! its activation elementwise.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::activation::{ActivationKind, OutputMap};
use crate::batchnorm::{BatchNormState, BnTransform, Mat2};
use crate::complex::{c, ComplexMatrix};
use crate::error::{CvnnError, Result};
use crate::init::{init_layer, InitScheme, InitSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Any activation, including split (component-wise) ones.
    Split,
    /// Hidden layers restricted to holomorphic activations.
    FullyComplex,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Split => "split",
            Mode::FullyComplex => "fully_complex",
        })
    }
}

impl FromStr for Mode {
    type Err = CvnnError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "split" => Ok(Mode::Split),
            "fully_complex" => Ok(Mode::FullyComplex),
            other => Err(CvnnError::Parse {
                position: "mode".into(),
                reason: format!("unknown mode '{other}'"),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `N_l x (N_{l-1} + bias)`; the last column holds biases when `has_bias`.
    pub weights: ComplexMatrix,
    pub activation: ActivationKind,
    pub has_bias: bool,
    /// One state per neuron, applied between the linear map and the activation.
    pub batch_norm: Option<Vec<BatchNormState>>,
}

impl Layer {
    pub fn new(weights: ComplexMatrix, activation: ActivationKind, has_bias: bool) -> Result<Self> {
        let layer = Self {
            weights,
            activation,
            has_bias,
            batch_norm: None,
        };
        layer.validate()?;
        Ok(layer)
    }

    pub fn with_batch_norm(mut self, state: BatchNormState) -> Self {
        self.batch_norm = Some(vec![state; self.width()]);
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.activation.validate()?;
        if self.weights.rows() == 0 {
            return Err(CvnnError::invalid("network", "layer width must be at least 1"));
        }
        if self.weights.cols() < usize::from(self.has_bias) + 1 {
            return Err(CvnnError::invalid("network", "layer needs at least one input"));
        }
        if !self.weights.all_finite() {
            return Err(CvnnError::invalid("network", "weights must be finite"));
        }
        if let Some(bn) = &self.batch_norm {
            if bn.len() != self.width() {
                return Err(CvnnError::shape("network", format!("{} batch-norm states", self.width()), bn.len()));
            }
            for s in bn {
                s.validate()?;
            }
        }
        Ok(())
    }

    /// Number of neurons `N_l`.
    pub fn width(&self) -> usize {
        self.weights.rows()
    }

    /// Number of inputs `N_{l-1}`, excluding the bias input.
    pub fn input_width(&self) -> usize {
        self.weights.cols() - usize::from(self.has_bias)
    }

    /// `W [x; 1]`
    pub fn linear(&self, x: &[Complex64]) -> Result<Vec<Complex64>> {
        if x.len() != self.input_width() {
            return Err(CvnnError::shape("network", format!("{} inputs", self.input_width()), x.len()));
        }
        Ok((0..self.width())
            .map(|n| {
                let row = self.weights.row(n);
                let mut v: Complex64 = row.iter().zip(x).map(|(w, x)| w * x).sum();
                if self.has_bias {
                    v += row[self.input_width()];
                }
                v
            })
            .collect())
    }

    fn inference_transforms(&self) -> Result<Option<Vec<BnTransform>>> {
        self.batch_norm
            .as_ref()
            .map(|states| states.iter().map(BatchNormState::inference_transform).collect())
            .transpose()
    }

    fn finish(&self, linear: Vec<Complex64>, bn: Option<Vec<BnTransform>>) -> LayerCache {
        let pre_activation = match &bn {
            Some(ts) => linear.iter().zip(ts).map(|(v, t)| t.apply(*v)).collect(),
            None => linear.clone(),
        };
        let output = pre_activation.iter().map(|u| self.activation.apply(*u)).collect();
        LayerCache {
            linear,
            pre_activation,
            output,
            bn,
        }
    }

    /// Forward pass of one layer, batch norm in inference mode.
    pub fn forward(&self, x: &[Complex64]) -> Result<LayerCache> {
        let linear = self.linear(x)?;
        Ok(self.finish(linear, self.inference_transforms()?))
    }
}

/// `(V, X)` for one layer.
pub fn layer_forward(layer: &Layer, x_prev: &[Complex64]) -> Result<(Vec<Complex64>, Vec<Complex64>)> {
    let cache = layer.forward(x_prev)?;
    Ok((cache.linear, cache.output))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerCache {
    /// `W [x; 1]`
    pub linear: Vec<Complex64>,
    /// Activation input; equals `linear` when the layer has no batch norm.
    pub pre_activation: Vec<Complex64>,
    pub output: Vec<Complex64>,
    pub bn: Option<Vec<BnTransform>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardCache {
    pub input: Vec<Complex64>,
    pub layers: Vec<LayerCache>,
}

impl ForwardCache {
    /// Output of the last layer.
    pub fn output(&self) -> &[Complex64] {
        &self.layers.last().expect("network has at least one layer").output
    }

    /// Input feeding layer `l` (0-based).
    pub fn layer_input(&self, l: usize) -> &[Complex64] {
        if l == 0 {
            &self.input
        } else {
            &self.layers[l - 1].output
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub layers: Vec<Layer>,
    pub mode: Mode,
    pub output_map: Option<OutputMap>,
}

impl Network {
    pub fn new(layers: Vec<Layer>, mode: Mode, output_map: Option<OutputMap>) -> Result<Self> {
        let net = Self {
            layers,
            mode,
            output_map,
        };
        net.validate()?;
        Ok(net)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(CvnnError::invalid("network", "network needs at least one layer"));
        }
        for (l, layer) in self.layers.iter().enumerate() {
            layer.validate()?;
            if l > 0 && layer.input_width() != self.layers[l - 1].width() {
                return Err(CvnnError::shape(
                    "network",
                    format!("layer {l} input width {}", self.layers[l - 1].width()),
                    layer.input_width(),
                ));
            }
        }
        if self.mode == Mode::FullyComplex {
            let hidden = &self.layers[..self.layers.len() - 1];
            if let Some(bad) = hidden.iter().find(|l| !l.activation.is_holomorphic()) {
                return Err(CvnnError::invalid(
                    "network",
                    format!("fully complex networks need holomorphic hidden activations, got {}", bad.activation),
                ));
            }
        }
        Ok(())
    }

    /// Randomly initialized network. `widths` lists the layer widths after the
    /// input; the last layer uses `output_activation`. Layer `l` is seeded
    /// with `seed ^ l`.
    #[allow(clippy::too_many_arguments)]
    pub fn random(
        input_width: usize,
        widths: &[usize],
        hidden: ActivationKind,
        output_activation: ActivationKind,
        mode: Mode,
        scheme: InitScheme,
        has_bias: bool,
        seed: u64,
    ) -> Result<Self> {
        if widths.is_empty() {
            return Err(CvnnError::invalid("network", "network needs at least one layer"));
        }
        let mut layers = Vec::with_capacity(widths.len());
        let mut n_in = input_width;
        for (l, &n_out) in widths.iter().enumerate() {
            let spec = InitSpec::new(scheme, n_in, n_out, seed ^ l as u64)?;
            let activation = if l + 1 == widths.len() { output_activation } else { hidden };
            layers.push(Layer::new(init_layer(&spec, has_bias), activation, has_bias)?);
            n_in = n_out;
        }
        Network::new(layers, mode, None)
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].input_width()
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().map_or(0, Layer::width)
    }

    pub fn has_batch_norm(&self) -> bool {
        self.layers.iter().any(|l| l.batch_norm.is_some())
    }

    pub fn is_differentiable(&self) -> bool {
        self.layers.iter().all(|l| l.activation.is_differentiable())
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.as_slice().len()).sum()
    }

    /// Real head applied to the final activations, embedded as `r + 0i`; the
    /// activations themselves when there is no head.
    pub fn head(&self, last: &[Complex64]) -> Vec<Complex64> {
        match self.output_map {
            Some(map) => map.apply(last).into_iter().map(|r| c(r, 0.0)).collect(),
            None => last.to_vec(),
        }
    }

    pub fn predict(&self, x: &[Complex64]) -> Result<Vec<Complex64>> {
        Ok(self.head(forward(self, x)?.output()))
    }

    /// Forward pass over a batch using batch statistics in every batch-norm
    /// layer; moving statistics are updated as a side effect.
    pub fn forward_batch_train(&mut self, inputs: &[Vec<Complex64>]) -> Result<Vec<ForwardCache>> {
        let mut caches: Vec<ForwardCache> = inputs
            .iter()
            .map(|x| ForwardCache {
                input: x.clone(),
                layers: Vec::with_capacity(self.layers.len()),
            })
            .collect();
        for l in 0..self.layers.len() {
            let layer = &self.layers[l];
            let linears = caches
                .iter()
                .map(|cache| layer.linear(cache.layer_input(l)))
                .collect::<Result<Vec<_>>>()?;
            let transforms = match &layer.batch_norm {
                None => None,
                Some(states) => {
                    let mut ts = Vec::with_capacity(states.len());
                    let mut stats = Vec::with_capacity(states.len());
                    for (n, state) in states.iter().enumerate() {
                        let column: Vec<Complex64> = linears.iter().map(|v| v[n]).collect();
                        let (t, mean, cov) = state.training_transform(&column)?;
                        ts.push(t);
                        stats.push((mean, cov));
                    }
                    Some((ts, stats))
                }
            };
            let layer_ts = transforms.as_ref().map(|(ts, _)| ts.clone());
            for (cache, linear) in caches.iter_mut().zip(linears) {
                let lc = self.layers[l].finish(linear, layer_ts.clone());
                cache.layers.push(lc);
            }
            if let (Some((_, stats)), Some(states)) = (transforms, self.layers[l].batch_norm.as_mut()) {
                for (state, (mean, cov)) in states.iter_mut().zip(stats) {
                    state.update_moving(mean, cov);
                }
            }
        }
        Ok(caches)
    }

    pub fn to_json(&self) -> Result<String> {
        let file = ModelFile::from_network(self)?;
        let mut out = Vec::new();
        let mut ser = serde_json::Serializer::with_formatter(&mut out, Sig17Formatter);
        file.serialize(&mut ser).map_err(|e| CvnnError::Io(e.to_string()))?;
        out.push(b'\n');
        String::from_utf8(out).map_err(|e| CvnnError::Io(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text).map_err(|e| CvnnError::Parse {
            position: format!("line {} column {}", e.line(), e.column()),
            reason: e.to_string(),
        })?;
        file.into_network()
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(self.to_json()?.as_bytes())?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Network::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Forward pass through every layer.
pub fn forward(net: &Network, x: &[Complex64]) -> Result<ForwardCache> {
    if x.len() != net.input_width() {
        return Err(CvnnError::shape("network", format!("{} inputs", net.input_width()), x.len()));
    }
    let mut layers: Vec<LayerCache> = Vec::with_capacity(net.layers.len());
    for layer in &net.layers {
        let prev = layers.last().map_or(x, |lc| lc.output.as_slice());
        let lc = layer.forward(prev)?;
        layers.push(lc);
    }
    Ok(ForwardCache {
        input: x.to_vec(),
        layers,
    })
}

/// Writes every float with 17 significant digits.
pub(crate) struct Sig17Formatter;

impl serde_json::ser::Formatter for Sig17Formatter {
    fn write_f64<W: ?Sized + std::io::Write>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()> {
        write!(writer, "{value:.16e}")
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    mode: String,
    output_map: Option<String>,
    layers: Vec<LayerFile>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerFile {
    activation: String,
    rows: usize,
    cols: usize,
    has_bias: bool,
    weights_re: Vec<Vec<f64>>,
    weights_im: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    batch_norm: Option<Vec<BatchNormFile>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BatchNormFile {
    moving_mean: [f64; 2],
    moving_cov: [[f64; 2]; 2],
    gamma: [f64; 3],
    beta: [f64; 2],
    alpha: f64,
    epsilon: f64,
}

fn finite_or_err(values: impl IntoIterator<Item = f64>) -> Result<()> {
    if values.into_iter().all(f64::is_finite) {
        Ok(())
    } else {
        Err(CvnnError::invalid("network", "cannot serialize non-finite values"))
    }
}

impl ModelFile {
    fn from_network(net: &Network) -> Result<Self> {
        let layers = net
            .layers
            .iter()
            .map(|layer| {
                let (rows, cols) = layer.weights.shape();
                let weights_re: Vec<Vec<f64>> = (0..rows).map(|r| layer.weights.row(r).iter().map(|z| z.re).collect()).collect();
                let weights_im: Vec<Vec<f64>> = (0..rows).map(|r| layer.weights.row(r).iter().map(|z| z.im).collect()).collect();
                finite_or_err(weights_re.iter().chain(&weights_im).flatten().copied())?;
                let batch_norm = layer.batch_norm.as_ref().map(|states| {
                    states
                        .iter()
                        .map(|s| BatchNormFile {
                            moving_mean: s.moving_mean,
                            moving_cov: s.moving_cov.0,
                            gamma: s.gamma,
                            beta: s.beta,
                            alpha: s.alpha,
                            epsilon: s.epsilon,
                        })
                        .collect()
                });
                Ok(LayerFile {
                    activation: layer.activation.to_string(),
                    rows,
                    cols,
                    has_bias: layer.has_bias,
                    weights_re,
                    weights_im,
                    batch_norm,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ModelFile {
            mode: net.mode.to_string(),
            output_map: net.output_map.map(|m| m.to_string()),
            layers,
        })
    }

    fn into_network(self) -> Result<Network> {
        let parse_err = |position: String, reason: String| CvnnError::Parse { position, reason };
        if self.layers.is_empty() {
            return Err(parse_err("layers".into(), "empty layer list".into()));
        }
        let mode: Mode = self.mode.parse()?;
        let output_map = self.output_map.as_deref().map(str::parse).transpose()?;
        let mut layers = Vec::with_capacity(self.layers.len());
        for (l, lf) in self.layers.into_iter().enumerate() {
            let at = |field: &str| format!("layers[{l}].{field}");
            let activation: ActivationKind = lf.activation.parse()?;
            if lf.weights_re.len() != lf.rows || lf.weights_im.len() != lf.rows {
                return Err(parse_err(at("weights"), format!("expected {} rows", lf.rows)));
            }
            let mut rows = Vec::with_capacity(lf.rows);
            for (r, (re, im)) in lf.weights_re.iter().zip(&lf.weights_im).enumerate() {
                if re.len() != lf.cols || im.len() != lf.cols {
                    return Err(parse_err(at(&format!("weights[{r}]")), format!("expected {} columns", lf.cols)));
                }
                rows.push(re.iter().zip(im).map(|(a, b)| c(*a, *b)).collect());
            }
            let weights = ComplexMatrix::from_rows(rows)?;
            let mut layer = Layer {
                weights,
                activation,
                has_bias: lf.has_bias,
                batch_norm: None,
            };
            if let Some(bn) = lf.batch_norm {
                layer.batch_norm = Some(
                    bn.into_iter()
                        .map(|b| BatchNormState {
                            moving_mean: b.moving_mean,
                            moving_cov: Mat2(b.moving_cov),
                            gamma: b.gamma,
                            beta: b.beta,
                            alpha: b.alpha,
                            epsilon: b.epsilon,
                        })
                        .collect(),
                );
            }
            layer.validate().map_err(|e| parse_err(format!("layers[{l}]"), e.to_string()))?;
            layers.push(layer);
        }
        Network::new(layers, mode, output_map).map_err(|e| parse_err("layers".into(), e.to_string()))
    }
}
