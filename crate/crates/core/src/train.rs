//! Training loops and per-epoch metrics.

use std::io::Write;
use std::time::Instant;

use num_complex::Complex64;

use crate::activation::mvn_sector;
use crate::backprop::{batch_gradient, sgd_step_in_place, TrainConfig};
use crate::dataset::Dataset;
use crate::error::{CvnnError, Result};
use crate::init::RngStream;
use crate::loss::{loss, LossKind};
use crate::mvn::{mvn_train_with, MvnConfig};
use crate::network::Network;

pub const METRICS_HEADER: &str = "epoch,loss,accuracy,wall_ms";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub loss: f64,
    pub accuracy: Option<f64>,
    /// Milliseconds since training started; `None` when the clock is off.
    pub wall_ms: Option<u128>,
}

impl EpochMetrics {
    /// One CSV row; missing fields are left empty.
    pub fn csv_row(&self) -> String {
        let acc = self.accuracy.map(|a| a.to_string()).unwrap_or_default();
        let wall = self.wall_ms.map(|w| w.to_string()).unwrap_or_default();
        format!("{},{},{},{}", self.epoch, self.loss, acc, wall)
    }
}

pub fn write_metrics_csv<W: Write>(mut out: W, rows: &[EpochMetrics]) -> Result<()> {
    writeln!(out, "{METRICS_HEADER}")?;
    for row in rows {
        writeln!(out, "{}", row.csv_row())?;
    }
    Ok(())
}

/// Class predicted for `x`. MVN outputs are scored by sector, a single real
/// output by thresholding at 0.5, several outputs by the largest real part.
pub fn predict_class(net: &Network, x: &[Complex64], classes: usize) -> Result<usize> {
    let out = net.predict(x)?;
    let last = &net.layers[net.layers.len() - 1].activation;
    Ok(if last.is_mvn() && net.output_map.is_none() {
        mvn_sector(out[0], classes as u32) as usize
    } else if out.len() == 1 {
        let r = out[0].re;
        if classes == 2 {
            usize::from(r >= 0.5)
        } else {
            r.round().clamp(0.0, (classes - 1) as f64) as usize
        }
    } else {
        out.iter()
            .enumerate()
            .max_by(|a, b| a.1.re.total_cmp(&b.1.re))
            .map_or(0, |(i, _)| i)
    })
}

/// Mean loss and, for labeled data, the fraction classified correctly.
pub fn evaluate(net: &Network, data: &Dataset, kind: LossKind) -> Result<(f64, Option<f64>)> {
    data.validate()?;
    let mut total = 0.0;
    for (x, d) in data.inputs.iter().zip(&data.targets) {
        total += loss(kind, &net.predict(x)?, d)?;
    }
    let accuracy = match (&data.labels, data.classes()) {
        (Some(labels), Some(classes)) => {
            let mut correct = 0usize;
            for (x, l) in data.inputs.iter().zip(labels) {
                if predict_class(net, x, classes)? == *l {
                    correct += 1;
                }
            }
            Some(correct as f64 / data.len() as f64)
        }
        _ => None,
    };
    Ok((total / data.len() as f64, accuracy))
}

fn check_compatible(net: &Network, data: &Dataset) -> Result<()> {
    data.validate()?;
    if net.input_width() != data.input_width() {
        return Err(CvnnError::shape("train", format!("{} inputs per sample", net.input_width()), data.input_width()));
    }
    if net.output_width() != data.target_width() {
        return Err(CvnnError::shape("train", format!("{} targets per sample", net.output_width()), data.target_width()));
    }
    Ok(())
}

struct Clock(Option<Instant>);

impl Clock {
    fn new(enabled: bool) -> Self {
        Clock(enabled.then(Instant::now))
    }

    fn elapsed_ms(&self) -> Option<u128> {
        self.0.map(|t| t.elapsed().as_millis())
    }
}

/// Minibatch SGD. Samples are reshuffled every epoch from a stream seeded by
/// `config.seed`; each epoch ends with a full evaluation pass.
pub fn train_sgd<F>(net: &mut Network, data: &Dataset, config: &TrainConfig, wall_clock: bool, mut on_epoch: F) -> Result<Vec<EpochMetrics>>
where
    F: FnMut(&EpochMetrics),
{
    config.validate()?;
    check_compatible(net, data)?;
    let clock = Clock::new(wall_clock);
    let mut rng = RngStream::new(config.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let min_batch = if net.has_batch_norm() { 2 } else { 1 };
    if config.batch_size.min(data.len()) < min_batch {
        return Err(CvnnError::InsufficientBatch {
            size: config.batch_size.min(data.len()),
        });
    }
    let mut rows = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        rng.shuffle(&mut order);
        for chunk in order.chunks(config.batch_size) {
            if chunk.len() < min_batch {
                continue;
            }
            let xs: Vec<Vec<Complex64>> = chunk.iter().map(|&i| data.inputs[i].clone()).collect();
            let ds: Vec<Vec<Complex64>> = chunk.iter().map(|&i| data.targets[i].clone()).collect();
            let (_, g) = batch_gradient(net, &xs, &ds, config.loss)?;
            if !g.all_finite() {
                return Err(CvnnError::Domain {
                    module: "backprop",
                    reason: format!("non-finite gradient in epoch {epoch}"),
                });
            }
            sgd_step_in_place(net, &g, config.eta)?;
        }
        let (loss, accuracy) = evaluate(net, data, config.loss)?;
        let row = EpochMetrics {
            epoch,
            loss,
            accuracy,
            wall_ms: clock.elapsed_ms(),
        };
        on_epoch(&row);
        rows.push(row);
    }
    Ok(rows)
}

/// MVN learning with per-epoch quadratic loss and accuracy.
pub fn train_mvn(net: &Network, data: &Dataset, config: &MvnConfig, wall_clock: bool) -> Result<(Network, usize, Vec<f64>, Vec<EpochMetrics>)> {
    check_compatible(net, data)?;
    let clock = Clock::new(wall_clock);
    let mut rows = Vec::new();
    let (trained, epochs, errors) = mvn_train_with(net, &data.inputs, &data.targets, config, |epoch, n, _| {
        let (loss, accuracy) = evaluate(n, data, LossKind::Quadratic)?;
        rows.push(EpochMetrics {
            epoch,
            loss,
            accuracy,
            wall_ms: clock.elapsed_ms(),
        });
        Ok(())
    })?;
    Ok((trained, epochs, errors, rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activation::ActivationKind;
    use crate::complex::{c, ComplexMatrix};
    use crate::dataset::{gen, Task, TaskParams};
    use crate::network::{Layer, Mode};

    fn rotation_net(w: Complex64) -> Network {
        let layer = Layer::new(ComplexMatrix::from_rows(vec![vec![w]]).unwrap(), ActivationKind::Identity, false).unwrap();
        Network::new(vec![layer], Mode::FullyComplex, None).unwrap()
    }

    #[test]
    fn csv_rows() {
        let r = EpochMetrics {
            epoch: 3,
            loss: 0.25,
            accuracy: None,
            wall_ms: None,
        };
        assert_eq!(r.csv_row(), "3,0.25,,");
        let mut buf = Vec::new();
        write_metrics_csv(&mut buf, &[r]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "epoch,loss,accuracy,wall_ms\n3,0.25,,\n");
    }

    #[test]
    fn exact_rotation_has_zero_loss() {
        let p = TaskParams::default();
        let data = gen(Task::Rotation, 64, 1, &p).unwrap();
        let (l, acc) = evaluate(&rotation_net(Complex64::from_polar(1.0, p.theta)), &data, LossKind::Quadratic).unwrap();
        assert!(l <= 1e-12);
        assert_eq!(acc, None);
    }

    #[test]
    fn sgd_learns_rotation_deterministically() {
        let data = gen(Task::Rotation, 64, 1, &TaskParams::default()).unwrap();
        let cfg = TrainConfig {
            eta: 0.1,
            epochs: 50,
            batch_size: 8,
            seed: 3,
            loss: LossKind::Quadratic,
        };
        let mut a = rotation_net(c(0.0, 0.0));
        let rows = train_sgd(&mut a, &data, &cfg, false, |_| {}).unwrap();
        assert!(rows.last().unwrap().loss < rows[0].loss);
        let mut b = rotation_net(c(0.0, 0.0));
        assert_eq!(train_sgd(&mut b, &data, &cfg, false, |_| {}).unwrap(), rows);
        assert_eq!(a, b);
    }

    #[test]
    fn mismatched_shapes_are_rejected() {
        let data = gen(Task::Rotation, 4, 1, &TaskParams::default()).unwrap();
        let mut net = Network::random(2, &[1], ActivationKind::Identity, ActivationKind::Identity, Mode::Split, crate::init::InitScheme::RectUniform, true, 0).unwrap();
        let err = train_sgd(&mut net, &data, &TrainConfig::default(), false, |_| {}).unwrap_err();
        assert!(matches!(err, CvnnError::Shape { .. }));
    }

    #[test]
    fn class_prediction_rules() {
        let mut net = rotation_net(c(1.0, 0.0));
        assert_eq!(predict_class(&net, &[c(0.7, 0.0)], 2).unwrap(), 1);
        assert_eq!(predict_class(&net, &[c(0.2, 0.0)], 2).unwrap(), 0);
        net.layers[0].activation = ActivationKind::MvnContinuous;
        assert_eq!(predict_class(&net, &[c(0.0, -1.0)], 2).unwrap(), 1);
    }
}
