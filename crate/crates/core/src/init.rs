//! Complex weight initialization targeting `Var(w) = 2 / (N_in + N_out)`.
//!
//! - polar: `|w| ~ Rayleigh(1/sqrt(N_in + N_out))`, phase `~ U[0, pi)`
//! - rect: `Re w, Im w ~ U[-sqrt(3/(N_in + N_out)), +sqrt(3/(N_in + N_out))]` independently

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::complex::{c, ComplexMatrix};
use crate::error::{CvnnError, Result};

/// Seeded uniform generator (ChaCha8). Identical seeds give identical
/// streams on every platform.
#[derive(Debug, Clone)]
pub struct RngStream {
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Uniform draw in `[0, 1)`.
    pub fn next_f64(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    /// Standard normal via Box-Muller.
    pub fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}

/// `rng_stream(seed)` as a free function.
pub fn rng_stream(seed: u64) -> RngStream {
    RngStream::new(seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitScheme {
    PolarRayleigh,
    RectUniform,
}

impl fmt::Display for InitScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InitScheme::PolarRayleigh => "polar",
            InitScheme::RectUniform => "rect",
        })
    }
}

impl FromStr for InitScheme {
    type Err = CvnnError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_lowercase().as_str() {
            "polar" => Ok(InitScheme::PolarRayleigh),
            "rect" => Ok(InitScheme::RectUniform),
            other => Err(CvnnError::Parse {
                position: "init".into(),
                reason: format!("unknown init scheme '{other}'"),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InitSpec {
    pub scheme: InitScheme,
    pub n_in: usize,
    pub n_out: usize,
    pub seed: u64,
}

impl InitSpec {
    pub fn new(scheme: InitScheme, n_in: usize, n_out: usize, seed: u64) -> Result<Self> {
        if n_in == 0 || n_out == 0 {
            return Err(CvnnError::invalid("init", "fan-in and fan-out must be at least 1"));
        }
        Ok(Self { scheme, n_in, n_out, seed })
    }

    fn fan_sum(&self) -> f64 {
        (self.n_in + self.n_out) as f64
    }

    /// Target `Var(w) = 2 / (N_in + N_out)`.
    pub fn target_variance(&self) -> f64 {
        2.0 / self.fan_sum()
    }

    /// Rayleigh scale `1 / sqrt(N_in + N_out)`.
    pub fn rayleigh_sigma(&self) -> f64 {
        1.0 / self.fan_sum().sqrt()
    }

    /// Half-width of the per-component uniform range.
    pub fn uniform_bound(&self) -> f64 {
        3f64.sqrt() / self.fan_sum().sqrt()
    }

    pub fn sample(&self, rng: &mut RngStream) -> Complex64 {
        match self.scheme {
            InitScheme::PolarRayleigh => {
                let u = rng.next_f64();
                let magnitude = self.rayleigh_sigma() * (-2.0 * (1.0 - u).ln()).sqrt();
                let angle = std::f64::consts::PI * rng.next_f64();
                Complex64::from_polar(magnitude, angle)
            }
            InitScheme::RectUniform => {
                let b = self.uniform_bound();
                c(rng.uniform(-b, b), rng.uniform(-b, b))
            }
        }
    }
}

/// `rows x cols` matrix of independent draws. Deterministic given the seed.
pub fn init_weights(spec: &InitSpec, rows: usize, cols: usize) -> ComplexMatrix {
    let mut rng = RngStream::new(spec.seed);
    ComplexMatrix::from_fn(rows, cols, |_, _| spec.sample(&mut rng))
}

/// Weights for a dense layer: `n_out x n_in` random block plus a zero bias column.
pub fn init_layer(spec: &InitSpec, has_bias: bool) -> ComplexMatrix {
    let mut rng = RngStream::new(spec.seed);
    let cols = spec.n_in + usize::from(has_bias);
    ComplexMatrix::from_fn(spec.n_out, cols, |_, col| {
        if col < spec.n_in {
            spec.sample(&mut rng)
        } else {
            c(0.0, 0.0)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn formula_values() {
        let s = InitSpec::new(InitScheme::PolarRayleigh, 50, 50, 0).unwrap();
        assert_abs_diff_eq!(s.target_variance(), 0.02, epsilon = 1e-15);
        assert_abs_diff_eq!(s.rayleigh_sigma(), 0.1, epsilon = 1e-15);
        assert_abs_diff_eq!(s.uniform_bound(), 0.17320, epsilon = 1e-5);
        assert!(InitSpec::new(InitScheme::RectUniform, 0, 3, 0).is_err());
    }

    #[test]
    fn rng_is_reproducible() {
        let a: Vec<f64> = {
            let mut r = rng_stream(42);
            (0..1000).map(|_| r.next_f64()).collect()
        };
        let b: Vec<f64> = {
            let mut r = rng_stream(42);
            (0..1000).map(|_| r.next_f64()).collect()
        };
        assert_eq!(a, b);
        assert!(a.iter().all(|x| (0.0..1.0).contains(x)));
        let mut other = rng_stream(43);
        let c10: Vec<f64> = (0..10).map(|_| other.next_f64()).collect();
        assert_ne!(&a[..10], &c10[..]);
    }

    #[test]
    fn rect_stays_in_bounds_and_polar_in_upper_half_plane() {
        let rect = InitSpec::new(InitScheme::RectUniform, 10, 100, 9).unwrap();
        let m = init_weights(&rect, 40, 40);
        let b = rect.uniform_bound();
        assert!(m.iter().all(|w| w.re.abs() <= b && w.im.abs() <= b));
        let polar = InitSpec::new(InitScheme::PolarRayleigh, 10, 100, 9).unwrap();
        assert!(init_weights(&polar, 40, 40).iter().all(|w| w.im >= 0.0));
    }

    #[test]
    fn same_spec_same_matrix() {
        let s = InitSpec::new(InitScheme::PolarRayleigh, 3, 4, 17).unwrap();
        assert_eq!(init_weights(&s, 4, 3), init_weights(&s, 4, 3));
        let l = init_layer(&s, true);
        assert_eq!(l.shape(), (4, 4));
        assert!((0..4).all(|r| l[(r, 3)] == c(0.0, 0.0)));
    }

    #[test]
    fn moments_match_targets() {
        for scheme in [InitScheme::PolarRayleigh, InitScheme::RectUniform] {
            for (n_in, n_out) in [(50, 50), (10, 100)] {
                let s = InitSpec::new(scheme, n_in, n_out, 123).unwrap();
                let m = init_weights(&s, 1, 100_000);
                let n = m.as_slice().len() as f64;
                let second = m.iter().map(|w| w.norm_sqr()).sum::<f64>() / n;
                assert!((second / s.target_variance() - 1.0).abs() < 0.03, "{scheme} {second}");
                if scheme == InitScheme::PolarRayleigh {
                    let first = m.iter().map(|w| w.norm()).sum::<f64>() / n;
                    let expect = s.rayleigh_sigma() * (std::f64::consts::PI / 2.0).sqrt();
                    assert!((first / expect - 1.0).abs() < 0.03);
                } else {
                    let var_re = m.iter().map(|w| w.re * w.re).sum::<f64>() / n;
                    let var_im = m.iter().map(|w| w.im * w.im).sum::<f64>() / n;
                    let half = 1.0 / (n_in + n_out) as f64;
                    assert!((var_re / half - 1.0).abs() < 0.03);
                    assert!((var_im / half - 1.0).abs() < 0.03);
                }
            }
        }
    }
}
