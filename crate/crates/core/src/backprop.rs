//! Reverse accumulation of Wirtinger partials through the network.
//!
//! Each neuron carries `g = dE/dX` (the conjugate `dE/dX̄` is implied since
//! `E` is real). Through an activation with partials `(a, b)`:
//!
//! ```text
//! dE/dV = g a + conj(g) conj(b)
//! ```
//!
//! and a weight receives `grad w_nm = 2 dE/dw̄_nm = 2 conj(dE/dV_n x_m)`, the
//! steepest ascent direction of `E` in the `(Re w, Im w)` plane.

use num_complex::Complex64;

use crate::complex::{c, real_gradient_fd, ComplexMatrix};
use crate::error::{CvnnError, Result};
use crate::init::RngStream;
use crate::loss::{loss, loss_partials, LossKind};
use crate::network::{forward, ForwardCache, Network};

/// Relative errors are measured against `max(|analytic|, |numeric|, GRAD_CHECK_FLOOR)`.
pub const GRAD_CHECK_FLOOR: f64 = 1e-3;
/// Tolerance used for nets with batch normalization.
pub const LOOSE_TOLERANCE: f64 = 1e-2;
pub const GRAD_CHECK_ATTEMPTS: usize = 10;

/// Real partials for one batch-norm state.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BnGrad {
    /// `(rr, ri, ii)`, matching [`crate::BatchNormState::gamma`].
    pub gamma: [f64; 3],
    pub beta: [f64; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    /// One matrix per layer, shaped like its weights.
    pub weights: Vec<ComplexMatrix>,
    pub batch_norm: Vec<Option<Vec<BnGrad>>>,
}

impl GradientSet {
    pub fn zeros_like(net: &Network) -> Self {
        Self {
            weights: net
                .layers
                .iter()
                .map(|l| ComplexMatrix::zeros(l.weights.rows(), l.weights.cols()))
                .collect(),
            batch_norm: net
                .layers
                .iter()
                .map(|l| l.batch_norm.as_ref().map(|s| vec![BnGrad::default(); s.len()]))
                .collect(),
        }
    }

    fn check_shape(&self, net: &Network) -> Result<()> {
        let ok = self.weights.len() == net.layers.len()
            && self
                .weights
                .iter()
                .zip(&net.layers)
                .all(|(g, l)| g.shape() == l.weights.shape())
            && self
                .batch_norm
                .iter()
                .zip(&net.layers)
                .all(|(g, l)| g.as_ref().map(Vec::len) == l.batch_norm.as_ref().map(Vec::len));
        if ok {
            Ok(())
        } else {
            Err(CvnnError::shape("backprop", "gradients shaped like the network", "mismatched gradient set"))
        }
    }

    /// `self += s * other`
    pub fn add_scaled(&mut self, other: &GradientSet, s: f64) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            for (x, y) in a.as_mut_slice().iter_mut().zip(b.as_slice()) {
                *x += y * s;
            }
        }
        for (a, b) in self.batch_norm.iter_mut().zip(&other.batch_norm) {
            if let (Some(a), Some(b)) = (a.as_mut(), b.as_ref()) {
                for (x, y) in a.iter_mut().zip(b) {
                    for (p, q) in x.gamma.iter_mut().zip(y.gamma) {
                        *p += s * q;
                    }
                    for (p, q) in x.beta.iter_mut().zip(y.beta) {
                        *p += s * q;
                    }
                }
            }
        }
    }

    pub fn all_finite(&self) -> bool {
        self.weights.iter().all(ComplexMatrix::all_finite)
            && self
                .batch_norm
                .iter()
                .flatten()
                .flatten()
                .all(|g| g.gamma.iter().chain(&g.beta).all(|v| v.is_finite()))
    }

    /// Largest weight-gradient modulus.
    pub fn max_abs(&self) -> f64 {
        self.weights
            .iter()
            .flat_map(|m| m.iter())
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub eta: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub loss: LossKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            eta: 0.1,
            epochs: 100,
            batch_size: 1,
            seed: 0,
            loss: LossKind::Quadratic,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(CvnnError::invalid("backprop", "learning rate must be positive and finite"));
        }
        if self.batch_size == 0 {
            return Err(CvnnError::invalid("backprop", "batch size must be at least 1"));
        }
        Ok(())
    }
}

fn require_differentiable(net: &Network) -> Result<()> {
    match net.layers.iter().find(|l| !l.activation.is_differentiable()) {
        Some(l) => Err(CvnnError::Unsupported {
            module: "backprop",
            reason: format!("activation {} has no gradient", l.activation),
        }),
        None => Ok(()),
    }
}

/// Loss of the network (head included) on one sample.
pub fn sample_loss(net: &Network, x: &[Complex64], d: &[Complex64], kind: LossKind) -> Result<f64> {
    loss(kind, &net.predict(x)?, d)
}

/// `dE/dX^(L)` at the last layer's outputs.
fn output_seed(net: &Network, cache: &ForwardCache, d: &[Complex64], kind: LossKind) -> Result<Vec<Complex64>> {
    let last = cache.output();
    let pairs = loss_partials(kind, &net.head(last), d)?;
    Ok(match net.output_map {
        Some(map) => {
            let upstream: Vec<f64> = pairs.iter().map(|p| 2.0 * p.d_dz.re).collect();
            map.pullback(last, &upstream)
        }
        None => pairs.iter().map(|p| p.d_dz).collect(),
    })
}

fn backward_impl(net: &Network, cache: &ForwardCache, d: &[Complex64], kind: LossKind, holomorphic: bool) -> Result<GradientSet> {
    require_differentiable(net)?;
    if cache.layers.len() != net.layers.len() {
        return Err(CvnnError::shape("backprop", format!("{} cached layers", net.layers.len()), cache.layers.len()));
    }
    let mut grads = GradientSet::zeros_like(net);
    let mut g = output_seed(net, cache, d, kind)?;
    for l in (0..net.layers.len()).rev() {
        let layer = &net.layers[l];
        let lc = &cache.layers[l];
        let x = cache.layer_input(l);
        let mut dv = Vec::with_capacity(layer.width());
        for n in 0..layer.width() {
            let p = layer.activation.partials(lc.pre_activation[n])?;
            let s = if holomorphic { g[n] * p.d_dz } else { g[n] * p.d_dz + g[n].conj() * p.d_dzbar.conj() };
            let s = match (&lc.bn, grads.batch_norm[l].as_mut()) {
                (Some(ts), Some(bg)) => {
                    let t = &ts[n];
                    let gu = [2.0 * s.re, -2.0 * s.im];
                    let xh = t.normalize(lc.linear[n]);
                    bg[n] = BnGrad {
                        gamma: [gu[0] * xh[0], gu[0] * xh[1] + gu[1] * xh[0], gu[1] * xh[1]],
                        beta: gu,
                    };
                    let (alpha, beta) = t.wirtinger();
                    s * alpha + s.conj() * beta.conj()
                }
                _ => s,
            };
            dv.push(s);
        }
        let gw = &mut grads.weights[l];
        for (n, dvn) in dv.iter().enumerate() {
            let row = gw.row_mut(n);
            for (m, xm) in x.iter().enumerate() {
                row[m] = 2.0 * (dvn * xm).conj();
            }
            if layer.has_bias {
                row[x.len()] = 2.0 * dvn.conj();
            }
        }
        if l > 0 {
            g = (0..x.len())
                .map(|m| dv.iter().enumerate().map(|(n, dvn)| dvn * layer.weights[(n, m)]).sum())
                .collect();
        }
    }
    Ok(grads)
}

/// Per-weight gradients `2 dE/dw̄` for one sample, from a cache produced by
/// [`forward`] or [`Network::forward_batch_train`].
pub fn backward(net: &Network, cache: &ForwardCache, d: &[Complex64], kind: LossKind) -> Result<GradientSet> {
    backward_impl(net, cache, d, kind, false)
}

/// Single-term chain rule, valid when every activation is holomorphic and no
/// layer is batch-normalized.
pub fn backward_holomorphic(net: &Network, cache: &ForwardCache, d: &[Complex64], kind: LossKind) -> Result<GradientSet> {
    if let Some(l) = net.layers.iter().find(|l| !l.activation.is_holomorphic()) {
        return Err(CvnnError::Unsupported {
            module: "backprop",
            reason: format!("{} is not holomorphic", l.activation),
        });
    }
    if net.has_batch_norm() {
        return Err(CvnnError::Unsupported {
            module: "backprop",
            reason: "batch normalization is not holomorphic".into(),
        });
    }
    backward_impl(net, cache, d, kind, true)
}

/// Loss and gradients for one sample.
pub fn loss_and_gradient(net: &Network, x: &[Complex64], d: &[Complex64], kind: LossKind) -> Result<(f64, GradientSet)> {
    let cache = forward(net, x)?;
    let e = loss(kind, &net.head(cache.output()), d)?;
    Ok((e, backward(net, &cache, d, kind)?))
}

/// Mean loss and mean gradients over a batch. Nets with batch normalization
/// use batch statistics and update their moving statistics.
pub fn batch_gradient(net: &mut Network, inputs: &[Vec<Complex64>], targets: &[Vec<Complex64>], kind: LossKind) -> Result<(f64, GradientSet)> {
    if inputs.len() != targets.len() || inputs.is_empty() {
        return Err(CvnnError::shape("backprop", "equal nonzero numbers of inputs and targets", format!("{} and {}", inputs.len(), targets.len())));
    }
    let caches = if net.has_batch_norm() {
        net.forward_batch_train(inputs)?
    } else {
        inputs.iter().map(|x| forward(net, x)).collect::<Result<Vec<_>>>()?
    };
    let scale = 1.0 / inputs.len() as f64;
    let mut total = GradientSet::zeros_like(net);
    let mut mean_loss = 0.0;
    for (cache, d) in caches.iter().zip(targets) {
        mean_loss += scale * loss(kind, &net.head(cache.output()), d)?;
        total.add_scaled(&backward(net, cache, d, kind)?, scale);
    }
    Ok((mean_loss, total))
}

/// `w <- w - eta g` in place, batch-norm `gamma` and `beta` included.
pub fn sgd_step_in_place(net: &mut Network, g: &GradientSet, eta: f64) -> Result<()> {
    g.check_shape(net)?;
    for (layer, (gw, gbn)) in net.layers.iter_mut().zip(g.weights.iter().zip(&g.batch_norm)) {
        for (w, d) in layer.weights.as_mut_slice().iter_mut().zip(gw.as_slice()) {
            *w -= eta * d;
        }
        if let (Some(states), Some(gs)) = (layer.batch_norm.as_mut(), gbn.as_ref()) {
            for (s, d) in states.iter_mut().zip(gs) {
                for (p, q) in s.gamma.iter_mut().zip(d.gamma) {
                    *p -= eta * q;
                }
                for (p, q) in s.beta.iter_mut().zip(d.beta) {
                    *p -= eta * q;
                }
            }
        }
    }
    Ok(())
}

/// `w <- w - eta g`, returning the updated network.
pub fn sgd_step(net: &Network, g: &GradientSet, eta: f64) -> Result<Network> {
    let mut out = net.clone();
    sgd_step_in_place(&mut out, g, eta)?;
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradCheckStatus {
    Pass,
    Fail,
    /// Every sampled point sat too close to an activation kink.
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub status: GradCheckStatus,
    pub max_rel_err: f64,
    pub max_abs_err: f64,
    /// Tolerance actually applied.
    pub tolerance: f64,
    /// Batch-normalized nets are checked at [`LOOSE_TOLERANCE`].
    pub loose: bool,
    pub attempts: usize,
    pub entries: usize,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.status == GradCheckStatus::Pass
    }
}

/// Smallest distance from any cached activation input to a kink, scaled so
/// that weight perturbations of size `h` cannot cross it.
fn kink_clearance(net: &Network, cache: &ForwardCache, h: f64) -> bool {
    net.layers.iter().enumerate().all(|(l, layer)| {
        let spread = 1.0 + cache.layer_input(l).iter().map(|x| x.norm()).sum::<f64>();
        cache.layers[l]
            .pre_activation
            .iter()
            .all(|u| layer.activation.kink_distance(*u) > 2.0 * h * spread)
    })
}

fn flat_weights(net: &Network) -> Vec<Complex64> {
    net.layers.iter().flat_map(|l| l.weights.iter().copied()).collect()
}

fn set_flat_weights(net: &mut Network, flat: &[Complex64]) {
    let mut it = flat.iter();
    for layer in &mut net.layers {
        for w in layer.weights.as_mut_slice() {
            *w = *it.next().expect("flat weight vector matches the network");
        }
    }
}

/// Compares [`backward`] against central differences of step `h` on the real
/// and imaginary part of every weight. Batch norm runs on moving statistics.
///
/// When a cached activation input lies within reach of a kink, `x` is nudged by
/// a seeded random perturbation and the check retried, up to
/// [`GRAD_CHECK_ATTEMPTS`] times.
pub fn grad_check(net: &Network, x: &[Complex64], d: &[Complex64], kind: LossKind, h: f64, tol: f64) -> Result<GradCheckReport> {
    require_differentiable(net)?;
    if h.is_nan() || h <= 0.0 || tol.is_nan() || tol <= 0.0 {
        return Err(CvnnError::invalid("backprop", "step and tolerance must be positive"));
    }
    let loose = net.has_batch_norm();
    let tolerance = if loose { tol.max(LOOSE_TOLERANCE) } else { tol };
    let mut rng = RngStream::new(0x6772_6164);
    let mut point = x.to_vec();
    for attempt in 1..=GRAD_CHECK_ATTEMPTS {
        let cache = forward(net, &point)?;
        if !kink_clearance(net, &cache, h) {
            let scale = 1e-2 * (1.0 + x.iter().map(|z| z.norm()).fold(0.0, f64::max));
            point = x
                .iter()
                .map(|z| z + c(rng.uniform(-scale, scale), rng.uniform(-scale, scale)))
                .collect();
            continue;
        }
        let analytic = backward(net, &cache, d, kind)?;
        let mut scratch = net.clone();
        let numeric = real_gradient_fd(
            |w| {
                set_flat_weights(&mut scratch, w);
                sample_loss(&scratch, &point, d, kind)
            },
            &flat_weights(net),
            h,
        )?;
        let mut max_rel_err: f64 = 0.0;
        let mut max_abs_err: f64 = 0.0;
        let analytic_flat = analytic.weights.iter().flat_map(|m| m.iter().copied());
        for (a, n) in analytic_flat.zip(&numeric) {
            let diff = (a - n).norm();
            max_abs_err = max_abs_err.max(diff);
            max_rel_err = max_rel_err.max(diff / a.norm().max(n.norm()).max(GRAD_CHECK_FLOOR));
        }
        let status = if max_rel_err <= tolerance { GradCheckStatus::Pass } else { GradCheckStatus::Fail };
        return Ok(GradCheckReport {
            status,
            max_rel_err,
            max_abs_err,
            tolerance,
            loose,
            attempts: attempt,
            entries: numeric.len(),
        });
    }
    Ok(GradCheckReport {
        status: GradCheckStatus::Inconclusive,
        max_rel_err: f64::NAN,
        max_abs_err: f64::NAN,
        tolerance,
        loose,
        attempts: GRAD_CHECK_ATTEMPTS,
        entries: 0,
    })
}
