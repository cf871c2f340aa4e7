//! Derivative-free error-correction learning for networks of multi-valued
//! neurons (every layer MVN-activated).
//!
//! Neuron `n` of a layer with `N` inputs (plus the bias input 1) moves by
//!
//! ```text
//! w_n <- w_n + C_n / (N + 1) * e_n * conj(x̃)
//! ```
//!
//! where `x̃` are the inputs recomputed through layers already updated for
//! the current sample. Output errors are `d - X`; hidden errors are spread
//! backward through reciprocal weights:
//!
//! ```text
//! e_j^(l-1) = 1/(N_(l-1) + 1) * sum_k e_k^(l) / w_kj^(l)
//! ```

use num_complex::Complex64;

use crate::complex::{c, ComplexMatrix};
use crate::error::{CvnnError, Result};
use crate::network::{forward, Layer, Network};

/// Weights smaller than this pass no error backward.
pub const RECIPROCAL_CUTOFF: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct MvnConfig {
    /// Per layer, per neuron rates `C`. Missing entries default to 1.
    pub learning_rates: Vec<Vec<f64>>,
    /// Training stops once every layer's mean error modulus is below this.
    pub error_threshold: f64,
    pub max_epochs: usize,
    /// Sector count used to score outputs; `None` for continuous neurons.
    pub k: Option<u32>,
    /// Update the first layer with `e * x̃` instead of `e * conj(x̃)`.
    pub unconjugated_input_layer: bool,
}

impl Default for MvnConfig {
    fn default() -> Self {
        Self {
            learning_rates: Vec::new(),
            error_threshold: 0.1,
            max_epochs: 200,
            k: None,
            unconjugated_input_layer: false,
        }
    }
}

impl MvnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.error_threshold.is_nan() || self.error_threshold <= 0.0 {
            return Err(CvnnError::invalid("mvn", "error threshold must be positive"));
        }
        if matches!(self.k, Some(k) if k < 2) {
            return Err(CvnnError::invalid("mvn", "sector count must be at least 2"));
        }
        if self.learning_rates.iter().flatten().any(|r| !r.is_finite()) {
            return Err(CvnnError::invalid("mvn", "learning rates must be finite"));
        }
        Ok(())
    }

    pub fn rate(&self, layer: usize, neuron: usize) -> f64 {
        self.learning_rates
            .get(layer)
            .and_then(|r| r.get(neuron))
            .copied()
            .unwrap_or(1.0)
    }
}

fn require_mvn(net: &Network) -> Result<()> {
    match net.layers.iter().find(|l| !l.activation.is_mvn()) {
        Some(l) => Err(CvnnError::Unsupported {
            module: "mvn",
            reason: format!("activation {} is not a multi-valued neuron", l.activation),
        }),
        None if net.has_batch_norm() => Err(CvnnError::Unsupported {
            module: "mvn",
            reason: "batch normalization is not supported".into(),
        }),
        None => Ok(()),
    }
}

/// Applies the correction rule to every neuron of `layer`. `inputs` excludes
/// the bias input; `layer_index` selects the learning rates. Neurons whose
/// weighted sum is exactly 0 are skipped.
pub fn mvn_update_layer(
    layer: &Layer,
    inputs: &[Complex64],
    errors: &[Complex64],
    config: &MvnConfig,
    layer_index: usize,
    is_input_layer: bool,
) -> Result<Layer> {
    if errors.len() != layer.width() {
        return Err(CvnnError::shape("mvn", format!("{} errors", layer.width()), errors.len()));
    }
    let z = layer.linear(inputs)?;
    let conjugate = !(is_input_layer && config.unconjugated_input_layer);
    let denom = (layer.input_width() + 1) as f64;
    let mut out = layer.clone();
    for (n, e) in errors.iter().enumerate() {
        if z[n] == c(0.0, 0.0) || *e == c(0.0, 0.0) {
            continue;
        }
        let step = e * (config.rate(layer_index, n) / denom);
        let row = out.weights.row_mut(n);
        for (w, x) in row.iter_mut().zip(inputs) {
            *w += step * if conjugate { x.conj() } else { *x };
        }
        if layer.has_bias {
            row[inputs.len()] += step;
        }
    }
    Ok(out)
}

/// Errors for the layer feeding `layer`, from that layer's errors.
pub fn backpropagate_errors(layer: &Layer, errors: &[Complex64]) -> Vec<Complex64> {
    let w: &ComplexMatrix = &layer.weights;
    let denom = (layer.input_width() + 1) as f64;
    (0..layer.input_width())
        .map(|j| {
            let s: Complex64 = errors
                .iter()
                .enumerate()
                .filter(|(k, _)| w[(*k, j)].norm() >= RECIPROCAL_CUTOFF)
                .map(|(k, e)| e / w[(k, j)])
                .sum();
            s / denom
        })
        .collect()
}

/// Per-layer errors for one sample, first layer first.
pub fn sample_errors(net: &Network, x: &[Complex64], d: &[Complex64]) -> Result<Vec<Vec<Complex64>>> {
    if d.len() != net.output_width() {
        return Err(CvnnError::shape("mvn", format!("{} targets", net.output_width()), d.len()));
    }
    let cache = forward(net, x)?;
    let mut errors = vec![Vec::new(); net.layers.len()];
    let last = net.layers.len() - 1;
    errors[last] = d.iter().zip(cache.output()).map(|(d, o)| d - o).collect();
    for l in (1..=last).rev() {
        errors[l - 1] = backpropagate_errors(&net.layers[l], &errors[l]);
    }
    Ok(errors)
}

fn check_data(inputs: &[Vec<Complex64>], targets: &[Vec<Complex64>]) -> Result<()> {
    if inputs.len() != targets.len() || inputs.is_empty() {
        return Err(CvnnError::shape("mvn", "equal nonzero numbers of inputs and targets", format!("{} and {}", inputs.len(), targets.len())));
    }
    Ok(())
}

/// Mean error modulus per layer over a dataset, without updating.
pub fn layer_errors(net: &Network, inputs: &[Vec<Complex64>], targets: &[Vec<Complex64>]) -> Result<Vec<f64>> {
    check_data(inputs, targets)?;
    let mut sums = vec![0.0; net.layers.len()];
    for (x, d) in inputs.iter().zip(targets) {
        for (s, e) in sums.iter_mut().zip(sample_errors(net, x, d)?) {
            *s += e.iter().map(|z| z.norm()).sum::<f64>() / e.len() as f64;
        }
    }
    Ok(sums.into_iter().map(|s| s / inputs.len() as f64).collect())
}

/// One pass of per-sample updates in dataset order. Returns the mean error
/// modulus per layer, measured before each sample's update.
pub fn mvn_epoch(net: &mut Network, inputs: &[Vec<Complex64>], targets: &[Vec<Complex64>], config: &MvnConfig) -> Result<Vec<f64>> {
    require_mvn(net)?;
    check_data(inputs, targets)?;
    let mut sums = vec![0.0; net.layers.len()];
    for (x, d) in inputs.iter().zip(targets) {
        let errors = sample_errors(net, x, d)?;
        for (s, e) in sums.iter_mut().zip(&errors) {
            *s += e.iter().map(|z| z.norm()).sum::<f64>() / e.len() as f64;
        }
        let mut feed = x.clone();
        for (l, e) in errors.iter().enumerate() {
            let updated = mvn_update_layer(&net.layers[l], &feed, e, config, l, l == 0)?;
            net.layers[l] = updated;
            feed = net.layers[l].forward(&feed)?.output;
        }
    }
    Ok(sums.into_iter().map(|s| s / inputs.len() as f64).collect())
}

/// Trains until every layer's mean error modulus drops below the threshold
/// or `max_epochs` passes have run. `on_epoch` sees the epoch number, the
/// network after that epoch and the errors measured during it.
pub fn mvn_train_with<F>(
    net: &Network,
    inputs: &[Vec<Complex64>],
    targets: &[Vec<Complex64>],
    config: &MvnConfig,
    mut on_epoch: F,
) -> Result<(Network, usize, Vec<f64>)>
where
    F: FnMut(usize, &Network, &[f64]) -> Result<()>,
{
    config.validate()?;
    require_mvn(net)?;
    check_data(inputs, targets)?;
    let mut net = net.clone();
    if config.max_epochs == 0 {
        let errors = layer_errors(&net, inputs, targets)?;
        return Ok((net, 0, errors));
    }
    let mut errors = Vec::new();
    for epoch in 1..=config.max_epochs {
        errors = mvn_epoch(&mut net, inputs, targets, config)?;
        on_epoch(epoch, &net, &errors)?;
        if errors.iter().all(|e| *e < config.error_threshold) {
            return Ok((net, epoch, errors));
        }
    }
    Ok((net, config.max_epochs, errors))
}

pub fn mvn_train(net: &Network, inputs: &[Vec<Complex64>], targets: &[Vec<Complex64>], config: &MvnConfig) -> Result<(Network, usize, Vec<f64>)> {
    mvn_train_with(net, inputs, targets, config, |_, _, _| Ok(()))
}
