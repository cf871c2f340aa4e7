//! Complex batch normalization: each complex value is treated as a point in
//! R^2 and whitened with the inverse square root of its 2x2 covariance, then
//! scaled by a symmetric 2x2 `gamma` and shifted by `beta`.

use std::f64::consts::FRAC_1_SQRT_2;
use std::ops::{Add, Mul};

use num_complex::Complex64;

use crate::complex::c;
use crate::error::{CvnnError, Result};

pub const DEFAULT_EPSILON: f64 = 1e-5;
pub const DEFAULT_MOMENTUM: f64 = 0.9;

/// 2x2 real matrix, row-major.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat2(pub [[f64; 2]; 2]);

impl Mat2 {
    pub const IDENTITY: Mat2 = Mat2([[1.0, 0.0], [0.0, 1.0]]);

    pub fn diag(a: f64, b: f64) -> Self {
        Mat2([[a, 0.0], [0.0, b]])
    }

    pub fn symmetric(rr: f64, ri: f64, ii: f64) -> Self {
        Mat2([[rr, ri], [ri, ii]])
    }

    pub fn scale(self, s: f64) -> Self {
        let m = self.0;
        Mat2([[m[0][0] * s, m[0][1] * s], [m[1][0] * s, m[1][1] * s]])
    }

    pub fn apply(self, v: [f64; 2]) -> [f64; 2] {
        let m = self.0;
        [m[0][0] * v[0] + m[0][1] * v[1], m[1][0] * v[0] + m[1][1] * v[1]]
    }

    pub fn is_symmetric(self) -> bool {
        self.0[0][1] == self.0[1][0]
    }

    pub fn max_abs_diff(self, other: Mat2) -> f64 {
        let mut d: f64 = 0.0;
        for r in 0..2 {
            for col in 0..2 {
                d = d.max((self.0[r][col] - other.0[r][col]).abs());
            }
        }
        d
    }

    /// Wirtinger form of the real-linear map `z -> M (Re z, Im z)`: returns
    /// `(a, b)` with `M z = a z + b z̄`.
    pub fn as_wirtinger(self) -> (Complex64, Complex64) {
        let [[m11, m12], [m21, m22]] = self.0;
        (
            c(0.5 * (m11 + m22), 0.5 * (m21 - m12)),
            c(0.5 * (m11 - m22), 0.5 * (m21 + m12)),
        )
    }
}

impl Mul for Mat2 {
    type Output = Mat2;

    fn mul(self, rhs: Mat2) -> Mat2 {
        let (a, b) = (self.0, rhs.0);
        let mut out = [[0.0; 2]; 2];
        for (r, row) in out.iter_mut().enumerate() {
            for (col, cell) in row.iter_mut().enumerate() {
                *cell = a[r][0] * b[0][col] + a[r][1] * b[1][col];
            }
        }
        Mat2(out)
    }
}

impl Add for Mat2 {
    type Output = Mat2;

    fn add(self, rhs: Mat2) -> Mat2 {
        let (a, b) = (self.0, rhs.0);
        Mat2([[a[0][0] + b[0][0], a[0][1] + b[0][1]], [a[1][0] + b[1][0], a[1][1] + b[1][1]]])
    }
}

/// `(V + eps I)^{-1/2}` for symmetric `V` via closed-form eigendecomposition.
pub fn inv_sqrt_2x2_spd(v: Mat2, epsilon: f64) -> Result<Mat2> {
    let [[a, b], [b2, d]] = v.0;
    if b != b2 {
        return Err(CvnnError::invalid("batchnorm", "covariance must be symmetric"));
    }
    let (a, d) = (a + epsilon, d + epsilon);
    if b == 0.0 {
        if !(a > 0.0 && d > 0.0) {
            return Err(CvnnError::SingularStatistics { lo: a.min(d), hi: a.max(d) });
        }
        return Ok(Mat2::diag(1.0 / a.sqrt(), 1.0 / d.sqrt()));
    }
    let mean = 0.5 * (a + d);
    let disc = (0.5 * (a - d)).hypot(b);
    let hi = mean + disc;
    let det = a * d - b * b;
    let lo = if hi > 0.0 { det / hi } else { mean - disc };
    if !(lo > 0.0 && hi > 0.0) || !lo.is_finite() {
        return Err(CvnnError::SingularStatistics { lo, hi });
    }
    // eigenvector of `hi`, taking the better-conditioned of the two candidates
    let (p, q) = if (hi - a).abs() >= (hi - d).abs() { (b, hi - a) } else { (hi - d, b) };
    let norm = p.hypot(q);
    let (ux, uy) = (p / norm, q / norm);
    let (s_hi, s_lo) = (1.0 / hi.sqrt(), 1.0 / lo.sqrt());
    // M = s_hi u u^T + s_lo w w^T with w = (-uy, ux)
    let m11 = s_hi * ux * ux + s_lo * uy * uy;
    let m22 = s_hi * uy * uy + s_lo * ux * ux;
    let m12 = (s_hi - s_lo) * ux * uy;
    Ok(Mat2::symmetric(m11, m12, m22))
}

fn as_complex(v: [f64; 2]) -> Complex64 {
    c(v[0], v[1])
}

/// Mean and (1/N) covariance of the (Re, Im) components.
pub fn batch_statistics(batch: &[Complex64]) -> Result<([f64; 2], Mat2)> {
    if batch.len() < 2 {
        return Err(CvnnError::InsufficientBatch { size: batch.len() });
    }
    let n = batch.len() as f64;
    let mean = [
        batch.iter().map(|z| z.re).sum::<f64>() / n,
        batch.iter().map(|z| z.im).sum::<f64>() / n,
    ];
    let (mut rr, mut ri, mut ii) = (0.0, 0.0, 0.0);
    for z in batch {
        let (x, y) = (z.re - mean[0], z.im - mean[1]);
        rr += x * x;
        ri += x * y;
        ii += y * y;
    }
    Ok((mean, Mat2::symmetric(rr / n, ri / n, ii / n)))
}

/// Fixed affine map `z -> gamma W (z - mean) + beta` with its intermediate
/// whitened value. Backprop treats it as constant in the batch statistics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BnTransform {
    pub mean: [f64; 2],
    pub whiten: Mat2,
    pub gamma: Mat2,
    pub beta: [f64; 2],
}

impl BnTransform {
    pub fn normalize(&self, z: Complex64) -> [f64; 2] {
        self.whiten.apply([z.re - self.mean[0], z.im - self.mean[1]])
    }

    pub fn apply(&self, z: Complex64) -> Complex64 {
        let g = self.gamma.apply(self.normalize(z));
        c(g[0] + self.beta[0], g[1] + self.beta[1])
    }

    /// `(du/dv, du/dv̄)` of the whole map.
    pub fn wirtinger(&self) -> (Complex64, Complex64) {
        (self.gamma * self.whiten).as_wirtinger()
    }
}

/// Per-neuron batch normalization state.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormState {
    pub moving_mean: [f64; 2],
    pub moving_cov: Mat2,
    /// Symmetric scale stored as its three free entries `(rr, ri, ii)`.
    pub gamma: [f64; 3],
    pub beta: [f64; 2],
    pub alpha: f64,
    pub epsilon: f64,
}

impl Default for BatchNormState {
    fn default() -> Self {
        Self::new(DEFAULT_MOMENTUM, DEFAULT_EPSILON)
    }
}

impl BatchNormState {
    /// Moving covariance and `gamma` start at `I/sqrt(2)`, mean and `beta` at 0.
    pub fn new(alpha: f64, epsilon: f64) -> Self {
        Self {
            moving_mean: [0.0, 0.0],
            moving_cov: Mat2::IDENTITY.scale(FRAC_1_SQRT_2),
            gamma: [FRAC_1_SQRT_2, 0.0, FRAC_1_SQRT_2],
            beta: [0.0, 0.0],
            alpha,
            epsilon,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.alpha) {
            return Err(CvnnError::invalid("batchnorm", format!("momentum must lie in [0, 1), got {}", self.alpha)));
        }
        if self.epsilon.is_nan() || self.epsilon < 0.0 {
            return Err(CvnnError::invalid("batchnorm", "epsilon must be non-negative"));
        }
        if !self.moving_cov.is_symmetric() {
            return Err(CvnnError::invalid("batchnorm", "moving covariance must be symmetric"));
        }
        Ok(())
    }

    pub fn gamma_matrix(&self) -> Mat2 {
        Mat2::symmetric(self.gamma[0], self.gamma[1], self.gamma[2])
    }

    fn transform(&self, mean: [f64; 2], cov: Mat2) -> Result<BnTransform> {
        Ok(BnTransform {
            mean,
            whiten: inv_sqrt_2x2_spd(cov, self.epsilon)?,
            gamma: self.gamma_matrix(),
            beta: self.beta,
        })
    }

    /// Transform built from the moving statistics.
    pub fn inference_transform(&self) -> Result<BnTransform> {
        self.transform(self.moving_mean, self.moving_cov)
    }

    /// Transform built from the statistics of `batch`, returned alongside them.
    pub fn training_transform(&self, batch: &[Complex64]) -> Result<(BnTransform, [f64; 2], Mat2)> {
        let (mean, cov) = batch_statistics(batch)?;
        Ok((self.transform(mean, cov)?, mean, cov))
    }

    /// Normalizes with batch statistics. Returns the outputs and the statistics
    /// for [`BatchNormState::update_moving`].
    pub fn forward_train(&self, batch: &[Complex64]) -> Result<(Vec<Complex64>, [f64; 2], Mat2)> {
        let (t, mean, cov) = self.training_transform(batch)?;
        Ok((batch.iter().map(|z| t.apply(*z)).collect(), mean, cov))
    }

    /// `mu' <- alpha mu' + (1 - alpha) mu`, same for the covariance.
    pub fn update_moving(&mut self, batch_mean: [f64; 2], batch_cov: Mat2) {
        let a = self.alpha;
        for (m, b) in self.moving_mean.iter_mut().zip(batch_mean) {
            *m = a * *m + (1.0 - a) * b;
        }
        self.moving_cov = self.moving_cov.scale(a) + batch_cov.scale(1.0 - a);
    }

    pub fn forward_infer(&self, batch: &[Complex64]) -> Result<Vec<Complex64>> {
        let t = self.inference_transform()?;
        Ok(batch.iter().map(|z| t.apply(*z)).collect())
    }
}

/// Whitened batch before the affine step; handy for checking decorrelation.
pub fn whiten_batch(batch: &[Complex64], epsilon: f64) -> Result<Vec<Complex64>> {
    let (mean, cov) = batch_statistics(batch)?;
    let w = inv_sqrt_2x2_spd(cov, epsilon)?;
    Ok(batch
        .iter()
        .map(|z| as_complex(w.apply([z.re - mean[0], z.im - mean[1]])))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    // Box-Muller
    fn normal_pair(rng: &mut impl Rng) -> (f64, f64) {
        let u1: f64 = 1.0 - rng.random::<f64>();
        let u2: f64 = rng.random();
        let r = (-2.0 * u1.ln()).sqrt();
        let t = 2.0 * std::f64::consts::PI * u2;
        (r * t.cos(), r * t.sin())
    }

    fn correlated_batch(n: usize, seed: u64) -> Vec<Complex64> {
        // Cholesky factor of [[2,1],[1,2]]
        let l11 = 2f64.sqrt();
        let l21 = 1.0 / l11;
        let l22 = (2.0 - l21 * l21).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let (a, b) = normal_pair(&mut rng);
                c(3.0 + l11 * a, -1.0 + l21 * a + l22 * b)
            })
            .collect()
    }

    #[test]
    fn inv_sqrt_examples() {
        assert_eq!(inv_sqrt_2x2_spd(Mat2::IDENTITY, 0.0).unwrap(), Mat2::IDENTITY);
        assert_eq!(inv_sqrt_2x2_spd(Mat2::diag(4.0, 9.0), 0.0).unwrap(), Mat2::diag(0.5, 1.0 / 3.0));
        assert!(matches!(
            inv_sqrt_2x2_spd(Mat2::symmetric(1.0, 1.0, 1.0), 0.0),
            Err(CvnnError::SingularStatistics { .. })
        ));
        assert!(inv_sqrt_2x2_spd(Mat2::symmetric(1.0, 1.0, 1.0), 1e-5).is_ok());
        assert!(inv_sqrt_2x2_spd(Mat2([[1.0, 0.2], [0.1, 1.0]]), 0.0).is_err());
    }

    proptest! {
        #[test]
        fn inv_sqrt_squares_to_inverse(l1 in 0.05..20.0f64, l2 in 0.05..20.0f64, angle in 0.0..3.2f64, eps in 0.0..0.1f64) {
            let (cs, sn) = (angle.cos(), angle.sin());
            let q = Mat2([[cs, -sn], [sn, cs]]);
            let qt = Mat2([[cs, sn], [-sn, cs]]);
            let mut v = q * Mat2::diag(l1, l2) * qt;
            v.0[1][0] = v.0[0][1];
            let m = inv_sqrt_2x2_spd(v, eps).unwrap();
            let reg = v + Mat2::IDENTITY.scale(eps);
            prop_assert!((m * m * reg).max_abs_diff(Mat2::IDENTITY) <= 1e-10);
            prop_assert!(m.is_symmetric());
        }
    }

    #[test]
    fn constant_batch_maps_to_beta() {
        let state = BatchNormState::new(0.9, 1e-5);
        let (out, _, cov) = state.forward_train(&[c(2.0, -3.0); 16]).unwrap();
        assert_eq!(cov, Mat2::symmetric(0.0, 0.0, 0.0));
        assert!(out.iter().all(|z| *z == c(0.0, 0.0)));
        let zero_eps = BatchNormState::new(0.9, 0.0);
        assert!(zero_eps.forward_train(&[c(2.0, -3.0); 4]).is_err());
    }

    #[test]
    fn batch_of_one_is_rejected() {
        let err = BatchNormState::default().forward_train(&[c(1.0, 0.0)]).unwrap_err();
        assert_eq!(err, CvnnError::InsufficientBatch { size: 1 });
    }

    #[test]
    fn whitening_decorrelates() {
        let batch = correlated_batch(1024, 1);
        let (_, cov) = batch_statistics(&batch).unwrap();
        assert!((cov.0[0][1] - 1.0).abs() < 0.25);
        let white = whiten_batch(&batch, 0.0).unwrap();
        let (mean, wcov) = batch_statistics(&white).unwrap();
        assert!(wcov.max_abs_diff(Mat2::IDENTITY) <= 1e-10, "{wcov:?}");
        assert!(mean[0].abs() <= 1e-12 && mean[1].abs() <= 1e-12);
    }

    #[test]
    fn default_gamma_halves_variance() {
        let batch = correlated_batch(512, 2);
        let mut state = BatchNormState::new(0.9, 0.0);
        state.beta = [0.0, 0.0];
        let (out, _, _) = state.forward_train(&batch).unwrap();
        let (_, cov) = batch_statistics(&out).unwrap();
        assert_abs_diff_eq!(cov.0[0][0], 0.5, epsilon = 1e-10);
        assert_abs_diff_eq!(cov.0[1][1], 0.5, epsilon = 1e-10);
        assert_abs_diff_eq!(cov.0[0][1], 0.0, epsilon = 1e-10);
    }

    #[test]
    fn moving_average_examples() {
        let mut s = BatchNormState::new(0.9, 1e-5);
        s.update_moving([1.0, 1.0], Mat2::diag(2.0, 3.0));
        assert_abs_diff_eq!(s.moving_mean[0], 0.1, epsilon = 1e-15);
        assert_abs_diff_eq!(s.moving_mean[1], 0.1, epsilon = 1e-15);

        let mut frozen = BatchNormState::new(0.9, 1e-5);
        frozen.alpha = 1.0;
        let before = frozen.clone();
        frozen.update_moving([5.0, -5.0], Mat2::diag(7.0, 7.0));
        assert_eq!(frozen, before);

        let mut copy = BatchNormState::new(0.0, 1e-5);
        copy.update_moving([5.0, -5.0], Mat2::symmetric(7.0, 0.5, 2.0));
        assert_eq!(copy.moving_mean, [5.0, -5.0]);
        assert_eq!(copy.moving_cov, Mat2::symmetric(7.0, 0.5, 2.0));
    }

    #[test]
    fn inference_is_a_fixed_linear_map() {
        let state = BatchNormState::default();
        let w = inv_sqrt_2x2_spd(Mat2::IDENTITY.scale(FRAC_1_SQRT_2), state.epsilon).unwrap();
        let composed = state.gamma_matrix() * w;
        let inputs = [c(1.0, 0.0), c(0.0, 1.0), c(-2.5, 0.75)];
        let out = state.forward_infer(&inputs).unwrap();
        for (z, o) in inputs.iter().zip(&out) {
            let expect = composed.apply([z.re, z.im]);
            assert!((o - c(expect[0], expect[1])).norm() <= 1e-12);
        }
        assert_eq!(out, state.forward_infer(&inputs).unwrap());

        let shifted = BatchNormState {
            beta: [1.0, 0.0],
            ..BatchNormState::default()
        };
        assert_eq!(shifted.forward_infer(&[c(0.0, 0.0)]).unwrap()[0].re, 1.0);
    }

    #[test]
    fn wirtinger_form_matches_matrix() {
        let m = Mat2([[1.5, -0.25], [0.75, 2.0]]);
        let (a, b) = m.as_wirtinger();
        for z in [c(1.0, 0.0), c(0.0, 1.0), c(-0.3, 2.2)] {
            let direct = m.apply([z.re, z.im]);
            let via = a * z + b * z.conj();
            assert!((via - c(direct[0], direct[1])).norm() <= 1e-14);
        }
    }

    #[test]
    fn moving_statistics_stay_in_envelope() {
        let mut s = BatchNormState::new(0.8, 1e-5);
        let mut lo = s.moving_mean;
        let mut hi = s.moving_mean;
        for step in 0..100 {
            let batch = correlated_batch(32, 100 + step);
            let (_, mean, cov) = s.forward_train(&batch).unwrap();
            for k in 0..2 {
                lo[k] = lo[k].min(mean[k]);
                hi[k] = hi[k].max(mean[k]);
            }
            s.update_moving(mean, cov);
            for k in 0..2 {
                assert!(s.moving_mean[k] >= lo[k] - 1e-12 && s.moving_mean[k] <= hi[k] + 1e-12);
            }
            assert!(s.moving_cov.is_symmetric());
        }
    }
}
