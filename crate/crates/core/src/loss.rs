//! Real-valued losses on complex outputs and their Wirtinger partials.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;

use crate::activation::softmax;
use crate::complex::{c, modulus, phase, wrap_angle, WirtingerPair};
use crate::error::{CvnnError, Result};

/// Lower clamp applied to probabilities inside `ln`.
pub const CE_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    /// `1/2 sum |d - o|^2`
    Quadratic,
    /// `1/2 sum [ln(r_d/r_o)^2 + wrap(phi_d - phi_o)^2]`
    Logarithmic,
    /// `1/2 [CE(softmax(Re o), d) + CE(softmax(Im o), d)]`
    AverageCrossEntropy,
}

impl LossKind {
    pub fn name(&self) -> &'static str {
        match self {
            LossKind::Quadratic => "quadratic",
            LossKind::Logarithmic => "log",
            LossKind::AverageCrossEntropy => "ace",
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossKind {
    type Err = CvnnError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_lowercase().as_str() {
            "quadratic" | "mse" => Ok(LossKind::Quadratic),
            "log" | "logarithmic" => Ok(LossKind::Logarithmic),
            "ace" => Ok(LossKind::AverageCrossEntropy),
            other => Err(CvnnError::Parse {
                position: "loss".into(),
                reason: format!("unknown loss '{other}'"),
            }),
        }
    }
}

/// Cross-entropy `-sum d_k ln(p_k)` with `p_k` clamped to `CE_CLAMP`.
pub fn cross_entropy(p: &[f64], d: &[f64]) -> f64 {
    -p.iter().zip(d).map(|(p, d)| d * p.max(CE_CLAMP).ln()).sum::<f64>()
}

fn check(kind: LossKind, o: &[Complex64], d: &[Complex64]) -> Result<()> {
    if o.len() != d.len() {
        return Err(CvnnError::shape("loss", format!("{} targets", o.len()), d.len()));
    }
    if o.is_empty() {
        return Err(CvnnError::shape("loss", "at least one output", 0));
    }
    match kind {
        LossKind::Quadratic => {}
        LossKind::Logarithmic => {
            if let Some(k) = (0..o.len()).find(|&k| modulus(o[k]) == 0.0 || modulus(d[k]) == 0.0) {
                return Err(CvnnError::Domain {
                    module: "loss",
                    reason: format!("logarithmic loss needs nonzero magnitudes (index {k})"),
                });
            }
        }
        LossKind::AverageCrossEntropy => {
            let total: f64 = d.iter().map(|z| z.re).sum();
            if d.iter().any(|z| z.re < 0.0 || z.im != 0.0) || (total - 1.0).abs() > 1e-9 {
                return Err(CvnnError::Domain {
                    module: "loss",
                    reason: "cross-entropy target must be a real probability vector".into(),
                });
            }
        }
    }
    Ok(())
}

fn log_residual(o: Complex64, d: Complex64) -> Complex64 {
    c(modulus(o).ln() - modulus(d).ln(), wrap_angle(phase(o) - phase(d)))
}

pub fn loss(kind: LossKind, o: &[Complex64], d: &[Complex64]) -> Result<f64> {
    check(kind, o, d)?;
    let value = match kind {
        LossKind::Quadratic => 0.5 * o.iter().zip(d).map(|(o, d)| (d - o).norm_sqr()).sum::<f64>(),
        LossKind::Logarithmic => {
            0.5 * o
                .iter()
                .zip(d)
                .map(|(o, d)| {
                    let mag = (modulus(*d) / modulus(*o)).ln();
                    let ph = wrap_angle(phase(*d) - phase(*o));
                    mag * mag + ph * ph
                })
                .sum::<f64>()
        }
        LossKind::AverageCrossEntropy => {
            let target: Vec<f64> = d.iter().map(|z| z.re).collect();
            let p_re = softmax(&o.iter().map(|z| z.re).collect::<Vec<_>>());
            let p_im = softmax(&o.iter().map(|z| z.im).collect::<Vec<_>>());
            0.5 * (cross_entropy(&p_re, &target) + cross_entropy(&p_im, &target))
        }
    };
    Ok(value)
}

/// `(dE/do_k, dE/dō_k)` per output. The second entry is always the exact
/// conjugate of the first.
pub fn loss_partials(kind: LossKind, o: &[Complex64], d: &[Complex64]) -> Result<Vec<WirtingerPair>> {
    check(kind, o, d)?;
    let d_do: Vec<Complex64> = match kind {
        LossKind::Quadratic => o.iter().zip(d).map(|(o, d)| -0.5 * (d - o).conj()).collect(),
        LossKind::Logarithmic => o
            .iter()
            .zip(d)
            .map(|(o, d)| 0.5 * log_residual(*o, *d).conj() / o)
            .collect(),
        LossKind::AverageCrossEntropy => {
            let target: Vec<f64> = d.iter().map(|z| z.re).collect();
            let mass: f64 = target.iter().sum();
            let p_re = softmax(&o.iter().map(|z| z.re).collect::<Vec<_>>());
            let p_im = softmax(&o.iter().map(|z| z.im).collect::<Vec<_>>());
            (0..o.len())
                .map(|k| {
                    let dx = 0.5 * (p_re[k] * mass - target[k]);
                    let dy = 0.5 * (p_im[k] * mass - target[k]);
                    c(0.5 * dx, -0.5 * dy)
                })
                .collect()
        }
    };
    Ok(d_do.into_iter().map(WirtingerPair::real_valued).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::complex::{real_gradient_fd, DEFAULT_STEP};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    #[test]
    fn quadratic_examples() {
        assert_abs_diff_eq!(loss(LossKind::Quadratic, &[c(0.0, 0.0)], &[c(1.0, 1.0)]).unwrap(), 1.0);
        let p = loss_partials(LossKind::Quadratic, &[c(0.0, 0.0)], &[c(1.0, 0.0)]).unwrap();
        assert_eq!(p[0].d_dz, c(-0.5, 0.0));
        assert_eq!(p[0].d_dzbar, c(-0.5, 0.0));
        let o = vec![c(0.3, -0.2), c(1.0, 4.0)];
        for pair in loss_partials(LossKind::Quadratic, &o, &o).unwrap() {
            assert_eq!(pair.d_dz.norm(), 0.0);
        }
    }

    #[test]
    fn logarithmic_examples() {
        let o = vec![c(0.3, -0.2), c(-1.0, 4.0)];
        assert_eq!(loss(LossKind::Logarithmic, &o, &o).unwrap(), 0.0);
        let v = loss(LossKind::Logarithmic, &[c(1.0, 0.0)], &[c(2.0, 0.0)]).unwrap();
        assert_abs_diff_eq!(v, 0.5 * 2f64.ln().powi(2), epsilon = 1e-15);
        assert_abs_diff_eq!(v, 0.24023, epsilon = 1e-5);

        let p = loss_partials(LossKind::Logarithmic, &[c(1.0, 0.0)], &[c(2.0, 0.0)]).unwrap();
        assert_abs_diff_eq!(p[0].d_dz.re, -2f64.ln() / 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p[0].d_dz.im, 0.0);
    }

    #[test]
    fn logarithmic_rejects_zero_magnitude() {
        let err = loss(LossKind::Logarithmic, &[c(0.0, 0.0)], &[c(1.0, 0.0)]).unwrap_err();
        assert!(matches!(err, CvnnError::Domain { .. }));
        assert!(loss_partials(LossKind::Logarithmic, &[c(1.0, 0.0)], &[c(0.0, 0.0)]).is_err());
    }

    #[test]
    fn length_mismatch_is_shape_error() {
        let err = loss(LossKind::Quadratic, &[c(0.0, 0.0)], &[]).unwrap_err();
        assert!(matches!(err, CvnnError::Shape { .. }));
    }

    #[test]
    fn ace_symmetric_parts_reduce_to_ce() {
        let re = [0.2, -1.0, 0.7];
        let o: Vec<Complex64> = re.iter().map(|&x| c(x, x)).collect();
        let d = vec![c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)];
        let target = [0.0, 1.0, 0.0];
        let ce = cross_entropy(&softmax(&re), &target);
        assert_eq!(loss(LossKind::AverageCrossEntropy, &o, &d).unwrap(), ce);
        assert!(loss(LossKind::AverageCrossEntropy, &o, &[c(0.5, 0.0); 3]).is_err());
    }

    #[test]
    fn phase_wrap_invariance() {
        let o = [c(0.4, -1.1)];
        let (r, phi) = (1.7, 3.0);
        let base = loss(LossKind::Logarithmic, &o, &[Complex64::from_polar(r, phi)]).unwrap();
        for m in [-3.0, -1.0, 1.0, 2.0] {
            let shifted = loss(LossKind::Logarithmic, &o, &[Complex64::from_polar(r, phi + 2.0 * PI * m)]).unwrap();
            assert_abs_diff_eq!(base, shifted, epsilon = 1e-12);
        }
        // the complex number itself is the representation; rotating by an exact 1 changes nothing
        let d = c(-0.9, 0.3);
        let rotated = d * Complex64::from_polar(1.0, 0.0);
        assert_eq!(loss(LossKind::Logarithmic, &o, &[d]).unwrap(), loss(LossKind::Logarithmic, &o, &[rotated]).unwrap());
    }

    fn random_case(rng: &mut ChaCha8Rng, kind: LossKind, n: usize) -> (Vec<Complex64>, Vec<Complex64>) {
        let mut z = || c(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
        let o: Vec<Complex64> = (0..n).map(|_| z()).collect();
        let d: Vec<Complex64> = match kind {
            LossKind::AverageCrossEntropy => {
                let hot = n / 2;
                (0..n).map(|k| c(if k == hot { 1.0 } else { 0.0 }, 0.0)).collect()
            }
            _ => (0..n).map(|_| z()).collect(),
        };
        (o, d)
    }

    #[test]
    fn partials_match_oracle_and_conjugate_rule() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for kind in [LossKind::Quadratic, LossKind::Logarithmic, LossKind::AverageCrossEntropy] {
            let mut checked = 0;
            while checked < 1000 {
                let n = 1 + checked % 4;
                let (o, d) = random_case(&mut rng, kind, n);
                if kind == LossKind::Logarithmic
                    && o.iter().zip(&d).any(|(o, d)| o.norm() < 0.05 || wrap_angle(phase(*o) - phase(*d)).abs() > 3.1)
                {
                    continue;
                }
                let pairs = loss_partials(kind, &o, &d).unwrap();
                let fd = real_gradient_fd(|pt| loss(kind, pt, &d), &o, DEFAULT_STEP).unwrap();
                for (p, g) in pairs.iter().zip(&fd) {
                    assert_eq!(p.d_dzbar, p.d_dz.conj());
                    let analytic = 2.0 * p.d_dzbar;
                    let err = (analytic - g).norm() / analytic.norm().max(g.norm()).max(1.0);
                    assert!(err <= 1e-5, "{kind}: {analytic} vs {g}");
                }
                checked += 1;
            }
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;
        use rand::Rng;

        fn cplx() -> impl Strategy<Value = Complex64> {
            (-3.0..3.0f64, -3.0..3.0f64).prop_map(|(a, b)| c(a, b))
        }

        proptest! {
            #[test]
            fn losses_are_nonnegative(o in prop::collection::vec(cplx(), 1..5), seed in 0u64..1000) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let d: Vec<Complex64> = o.iter().map(|_| c(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0))).collect();
                prop_assert!(loss(LossKind::Quadratic, &o, &d).unwrap() >= 0.0);
                if o.iter().chain(&d).all(|z| z.norm() > 0.0) {
                    prop_assert!(loss(LossKind::Logarithmic, &o, &d).unwrap() >= 0.0);
                }
                let mut hot = vec![c(0.0, 0.0); o.len()];
                hot[seed as usize % o.len()] = c(1.0, 0.0);
                prop_assert!(loss(LossKind::AverageCrossEntropy, &o, &hot).unwrap() >= 0.0);
            }

            #[test]
            fn quadratic_zero_iff_equal(o in prop::collection::vec(cplx(), 1..5)) {
                prop_assert_eq!(loss(LossKind::Quadratic, &o, &o).unwrap(), 0.0);
                let mut d = o.clone();
                d[0] += c(1e-3, 0.0);
                prop_assert!(loss(LossKind::Quadratic, &o, &d).unwrap() > 0.0);
            }
        }
    }
}
