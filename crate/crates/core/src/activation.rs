//! Complex activation functions, their analytic Wirtinger partials, and the
//! real-valued output heads.
//!
//! Every kind has a canonical text name (`crelu`, `modrelu(b=-1.0)`,
//! `type_b(tanh,identity)`, ...) that round-trips through [`Display`] and
//! [`FromStr`]; model files and the CLI use it.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;

use crate::complex::{c, modulus, phase, WirtingerPair};
use crate::error::{CvnnError, Result};

/// Real nonlinearities used as components of split activations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RealFn {
    Sigmoid,
    Tanh,
    Relu,
    Identity,
}

impl RealFn {
    pub fn eval(self, x: f64) -> f64 {
        match self {
            RealFn::Sigmoid => sigmoid(x),
            RealFn::Tanh => x.tanh(),
            RealFn::Relu => x.max(0.0),
            RealFn::Identity => x,
        }
    }

    /// Derivative; `relu'(0) = 0`.
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            RealFn::Sigmoid => {
                let s = sigmoid(x);
                s * (1.0 - s)
            }
            RealFn::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
            RealFn::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            RealFn::Identity => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            RealFn::Sigmoid => "sigmoid",
            RealFn::Tanh => "tanh",
            RealFn::Relu => "relu",
            RealFn::Identity => "identity",
        }
    }

    /// Upper bound on `|f(x)|`, if any.
    pub fn bound(self) -> Option<f64> {
        match self {
            RealFn::Sigmoid | RealFn::Tanh => Some(1.0),
            RealFn::Relu | RealFn::Identity => None,
        }
    }
}

impl FromStr for RealFn {
    type Err = CvnnError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "sigmoid" => Ok(RealFn::Sigmoid),
            "tanh" => Ok(RealFn::Tanh),
            "relu" => Ok(RealFn::Relu),
            "identity" | "id" => Ok(RealFn::Identity),
            other => Err(CvnnError::Parse {
                position: "activation".into(),
                reason: format!("unknown real function '{other}'"),
            }),
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ActivationKind {
    /// `f_re(Re z) + i f_im(Im z)`
    TypeA(RealFn, RealFn),
    /// `f_r(|z|) * exp(i f_phi(arg z))`
    TypeB(RealFn, RealFn),
    CReLU,
    /// `z` on the closed first quadrant, 0 elsewhere.
    ZReLU,
    ModReLU { b: f64 },
    Cardioid,
    MvnDiscrete { k: u32 },
    MvnContinuous,
    ComplexTanh,
    Identity,
}

impl ActivationKind {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ActivationKind::ModReLU { b } if !b.is_finite() => {
                Err(CvnnError::invalid("activation", format!("modrelu radius must be finite, got {b}")))
            }
            ActivationKind::MvnDiscrete { k } if k < 2 => {
                Err(CvnnError::invalid("activation", format!("mvn sector count must be >= 2, got {k}")))
            }
            _ => Ok(()),
        }
    }

    pub fn is_holomorphic(&self) -> bool {
        matches!(self, ActivationKind::ComplexTanh | ActivationKind::Identity)
    }

    pub fn is_differentiable(&self) -> bool {
        !matches!(self, ActivationKind::MvnDiscrete { .. })
    }

    pub fn is_mvn(&self) -> bool {
        matches!(self, ActivationKind::MvnDiscrete { .. } | ActivationKind::MvnContinuous)
    }

    /// Bound on `|f(z)|` over the whole plane, where one exists.
    pub fn bound(&self) -> Option<f64> {
        match *self {
            ActivationKind::TypeA(re, im) => Some(re.bound()?.hypot(im.bound()?)),
            ActivationKind::TypeB(r, _) => r.bound(),
            ActivationKind::MvnDiscrete { .. } | ActivationKind::MvnContinuous => Some(1.0),
            _ => None,
        }
    }

    pub fn apply(&self, z: Complex64) -> Complex64 {
        match *self {
            ActivationKind::TypeA(re, im) => c(re.eval(z.re), im.eval(z.im)),
            ActivationKind::TypeB(r, phi) => {
                Complex64::from_polar(r.eval(modulus(z)), phi.eval(phase(z)))
            }
            ActivationKind::CReLU => c(z.re.max(0.0), z.im.max(0.0)),
            ActivationKind::ZReLU => {
                if z.re >= 0.0 && z.im >= 0.0 {
                    z
                } else {
                    c(0.0, 0.0)
                }
            }
            ActivationKind::ModReLU { b } => {
                let r = modulus(z);
                let m = (r + b).max(0.0);
                if r == 0.0 || m == 0.0 {
                    c(0.0, 0.0)
                } else {
                    z * (m / r)
                }
            }
            ActivationKind::Cardioid => {
                let r = modulus(z);
                if r == 0.0 {
                    c(0.0, 0.0)
                } else {
                    z * (0.5 * (1.0 + z.re / r))
                }
            }
            ActivationKind::MvnDiscrete { k } => root_of_unity(mvn_sector(z, k), k),
            ActivationKind::MvnContinuous => {
                let r = modulus(z);
                if r == 0.0 {
                    c(0.0, 0.0)
                } else {
                    z / r
                }
            }
            ActivationKind::ComplexTanh => z.tanh(),
            ActivationKind::Identity => z,
        }
    }

    /// Analytic `(dX/dV, dX/dV̄)`. At kinks the derivative of the inactive
    /// side (zero) is used.
    pub fn partials(&self, z: Complex64) -> Result<WirtingerPair> {
        let zero = c(0.0, 0.0);
        let pair = match *self {
            ActivationKind::TypeA(re, im) => {
                let dr = re.derivative(z.re);
                let di = im.derivative(z.im);
                WirtingerPair::new(c(0.5 * (dr + di), 0.0), c(0.5 * (dr - di), 0.0))
            }
            ActivationKind::CReLU => ActivationKind::TypeA(RealFn::Relu, RealFn::Relu).partials(z)?,
            ActivationKind::TypeB(r_fn, phi_fn) => {
                let r = modulus(z);
                if r == 0.0 {
                    return Ok(WirtingerPair::ZERO);
                }
                let theta = phase(z);
                let mag = r_fn.eval(r);
                let dmag = r_fn.derivative(r);
                let dphi = phi_fn.derivative(theta);
                let phasor = Complex64::from_polar(1.0, phi_fn.eval(theta));
                let d_dz = phasor * (z.conj() * (dmag / (2.0 * r)) + mag * dphi / (2.0 * z));
                let d_dzbar = phasor * (z * (dmag / (2.0 * r)) - mag * dphi / (2.0 * z.conj()));
                WirtingerPair::new(d_dz, d_dzbar)
            }
            ActivationKind::ZReLU => {
                if z.re > 0.0 && z.im > 0.0 {
                    WirtingerPair::new(c(1.0, 0.0), zero)
                } else {
                    WirtingerPair::ZERO
                }
            }
            ActivationKind::ModReLU { b } => {
                let r = modulus(z);
                if r == 0.0 || r + b <= 0.0 {
                    WirtingerPair::ZERO
                } else {
                    // f = z + b z/|z|
                    let d_dz = c(1.0 + b / (2.0 * r), 0.0);
                    let d_dzbar = -b * z * z / (2.0 * r * r * r);
                    WirtingerPair::new(d_dz, d_dzbar)
                }
            }
            ActivationKind::Cardioid => {
                let r = modulus(z);
                if r == 0.0 {
                    WirtingerPair::ZERO
                } else {
                    // f = z/2 + z^2/(4|z|) + |z|/4
                    let u = z / r;
                    let d_dz = 0.5 + 0.375 * u + 0.125 * z.conj() / r;
                    let d_dzbar = 0.125 * (u - u * u * u);
                    WirtingerPair::new(d_dz, d_dzbar)
                }
            }
            ActivationKind::MvnContinuous => {
                let r = modulus(z);
                if r == 0.0 {
                    WirtingerPair::ZERO
                } else {
                    WirtingerPair::new(c(0.5 / r, 0.0), -z * z / (2.0 * r * r * r))
                }
            }
            ActivationKind::MvnDiscrete { .. } => {
                return Err(CvnnError::NonDifferentiable { kind: self.to_string() })
            }
            ActivationKind::ComplexTanh => {
                let t = z.tanh();
                WirtingerPair::new(1.0 - t * t, zero)
            }
            ActivationKind::Identity => WirtingerPair::new(c(1.0, 0.0), zero),
        };
        Ok(pair)
    }

    /// Distance from `z` to the nearest point where the activation is not
    /// smooth (kink, branch cut or pole). Infinite for smooth kinds.
    pub fn kink_distance(&self, z: Complex64) -> f64 {
        let r = modulus(z);
        match *self {
            ActivationKind::TypeA(re, im) => {
                let dx = if re == RealFn::Relu { z.re.abs() } else { f64::INFINITY };
                let dy = if im == RealFn::Relu { z.im.abs() } else { f64::INFINITY };
                dx.min(dy)
            }
            ActivationKind::TypeB(_, phi) => {
                let cut = match phi {
                    RealFn::Identity => f64::INFINITY,
                    RealFn::Relu => z.im.abs(),
                    _ => {
                        if z.re <= 0.0 {
                            z.im.abs()
                        } else {
                            r
                        }
                    }
                };
                r.min(cut)
            }
            ActivationKind::CReLU => z.re.abs().min(z.im.abs()),
            ActivationKind::ZReLU => {
                let to_real_ray = if z.re >= 0.0 { z.im.abs() } else { r };
                let to_imag_ray = if z.im >= 0.0 { z.re.abs() } else { r };
                to_real_ray.min(to_imag_ray)
            }
            ActivationKind::ModReLU { b } => {
                if b < 0.0 {
                    (r + b).abs()
                } else if b > 0.0 {
                    r
                } else {
                    f64::INFINITY
                }
            }
            ActivationKind::Cardioid | ActivationKind::MvnContinuous => r,
            ActivationKind::MvnDiscrete { .. } => 0.0,
            ActivationKind::ComplexTanh => {
                // poles at i(pi/2 + k pi)
                let k = ((z.im - FRAC_PI_2) / PI).round();
                let pole = FRAC_PI_2 + k * PI;
                z.re.hypot(z.im - pole)
            }
            ActivationKind::Identity => f64::INFINITY,
        }
    }
}

/// Sector index `j` with `2 pi j/k <= arg z < 2 pi (j+1)/k`, `arg` taken in `[0, 2 pi)`.
pub fn mvn_sector(z: Complex64, k: u32) -> u32 {
    let mut theta = phase(z);
    if theta < 0.0 {
        theta += 2.0 * PI;
    }
    let j = (theta * k as f64 / (2.0 * PI)).floor() as u32;
    j.min(k - 1)
}

/// `exp(i 2 pi j / k)`
pub fn root_of_unity(j: u32, k: u32) -> Complex64 {
    Complex64::from_polar(1.0, 2.0 * PI * j as f64 / k as f64)
}

/// Unit-circle point at the centre of sector `j` out of `k`.
pub fn sector_bisector(j: u32, k: u32) -> Complex64 {
    Complex64::from_polar(1.0, PI * (2 * j + 1) as f64 / k as f64)
}

impl fmt::Display for ActivationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ActivationKind::TypeA(a, b) => write!(f, "type_a({},{})", a.name(), b.name()),
            ActivationKind::TypeB(a, b) => write!(f, "type_b({},{})", a.name(), b.name()),
            ActivationKind::CReLU => f.write_str("crelu"),
            ActivationKind::ZReLU => f.write_str("zrelu"),
            ActivationKind::ModReLU { b } => write!(f, "modrelu(b={b:?})"),
            ActivationKind::Cardioid => f.write_str("cardioid"),
            ActivationKind::MvnDiscrete { k } => write!(f, "mvn(k={k})"),
            ActivationKind::MvnContinuous => f.write_str("mvn"),
            ActivationKind::ComplexTanh => f.write_str("ctanh"),
            ActivationKind::Identity => f.write_str("identity"),
        }
    }
}

fn parse_err(s: &str, reason: impl Into<String>) -> CvnnError {
    CvnnError::Parse {
        position: format!("activation '{s}'"),
        reason: reason.into(),
    }
}

impl FromStr for ActivationKind {
    type Err = CvnnError;

    fn from_str(s: &str) -> Result<Self> {
        let compact: String = s.chars().filter(|ch| !ch.is_whitespace()).collect::<String>().to_lowercase();
        let (name, args) = match compact.find('(') {
            Some(open) => {
                if !compact.ends_with(')') {
                    return Err(parse_err(s, "missing ')'"));
                }
                (&compact[..open], Some(&compact[open + 1..compact.len() - 1]))
            }
            None => (compact.as_str(), None),
        };
        let named_arg = |key: &str| -> Result<&str> {
            let a = args.ok_or_else(|| parse_err(s, format!("expected ({key}=...)")))?;
            Ok(a.strip_prefix(key).and_then(|r| r.strip_prefix('=')).unwrap_or(a))
        };
        let kind = match (name, args) {
            ("identity" | "linear", None) => ActivationKind::Identity,
            ("ctanh" | "complex_tanh", None) => ActivationKind::ComplexTanh,
            ("crelu", None) => ActivationKind::CReLU,
            ("zrelu", None) => ActivationKind::ZReLU,
            ("cardioid", None) => ActivationKind::Cardioid,
            ("mvn", None) => ActivationKind::MvnContinuous,
            ("mvn", Some(_)) => {
                let k = named_arg("k")?.parse::<u32>().map_err(|e| parse_err(s, e.to_string()))?;
                ActivationKind::MvnDiscrete { k }
            }
            ("modrelu", Some(_)) => {
                let b = named_arg("b")?.parse::<f64>().map_err(|e| parse_err(s, e.to_string()))?;
                ActivationKind::ModReLU { b }
            }
            ("type_a" | "type_b", Some(a)) => {
                let parts: Vec<&str> = a.split(',').collect();
                if parts.len() != 2 {
                    return Err(parse_err(s, "expected two real functions"));
                }
                let (f1, f2) = (parts[0].parse()?, parts[1].parse()?);
                if name == "type_a" {
                    ActivationKind::TypeA(f1, f2)
                } else {
                    ActivationKind::TypeB(f1, f2)
                }
            }
            _ => return Err(parse_err(s, "unknown activation")),
        };
        kind.validate()?;
        Ok(kind)
    }
}

/// Real-valued output heads applied to the last layer's complex outputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputMap {
    /// `|z|`
    Abs,
    /// `(Re z - Im z)^2`
    SqDiff,
    /// softmax over `|z_k|`
    SoftmaxAbs,
    /// softmax over `(Re z_k + Im z_k)/2`
    SoftmaxAvg,
}

impl OutputMap {
    pub fn apply(&self, v: &[Complex64]) -> Vec<f64> {
        match self {
            OutputMap::Abs => v.iter().map(|z| modulus(*z)).collect(),
            OutputMap::SqDiff => v.iter().map(|z| (z.re - z.im).powi(2)).collect(),
            OutputMap::SoftmaxAbs => softmax(&v.iter().map(|z| modulus(*z)).collect::<Vec<_>>()),
            OutputMap::SoftmaxAvg => softmax(&v.iter().map(|z| 0.5 * (z.re + z.im)).collect::<Vec<_>>()),
        }
    }

    /// Given `dE/dr_k` for the real outputs, returns `dE/dz_j` for the inputs.
    pub fn pullback(&self, v: &[Complex64], upstream: &[f64]) -> Vec<Complex64> {
        match self {
            OutputMap::Abs => v
                .iter()
                .zip(upstream)
                .map(|(z, g)| {
                    let r = modulus(*z);
                    if r == 0.0 {
                        c(0.0, 0.0)
                    } else {
                        *g * z.conj() / (2.0 * r)
                    }
                })
                .collect(),
            OutputMap::SqDiff => v
                .iter()
                .zip(upstream)
                .map(|(z, g)| *g * (z.re - z.im) * c(1.0, 1.0))
                .collect(),
            OutputMap::SoftmaxAbs | OutputMap::SoftmaxAvg => {
                let p = self.apply(v);
                let mean: f64 = p.iter().zip(upstream).map(|(p, g)| p * g).sum();
                v.iter()
                    .zip(p.iter().zip(upstream))
                    .map(|(z, (p, g))| {
                        let ds = p * (g - mean);
                        let score_partial = match self {
                            OutputMap::SoftmaxAbs => {
                                let r = modulus(*z);
                                if r == 0.0 {
                                    c(0.0, 0.0)
                                } else {
                                    z.conj() / (2.0 * r)
                                }
                            }
                            _ => c(0.25, -0.25),
                        };
                        ds * score_partial
                    })
                    .collect()
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            OutputMap::Abs => "abs",
            OutputMap::SqDiff => "sqdiff",
            OutputMap::SoftmaxAbs => "softmax_abs",
            OutputMap::SoftmaxAvg => "softmax_avg",
        }
    }
}

impl fmt::Display for OutputMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for OutputMap {
    type Err = CvnnError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_lowercase().as_str() {
            "abs" => Ok(OutputMap::Abs),
            "sqdiff" => Ok(OutputMap::SqDiff),
            "softmax_abs" => Ok(OutputMap::SoftmaxAbs),
            "softmax_avg" => Ok(OutputMap::SoftmaxAvg),
            other => Err(CvnnError::Parse {
                position: "output_map".into(),
                reason: format!("unknown output map '{other}'"),
            }),
        }
    }
}

/// Real label `c` becomes `c + ic`.
pub fn cast_labels(labels: &[f64]) -> Vec<Complex64> {
    labels.iter().map(|&l| c(l, l)).collect()
}

pub fn softmax(s: &[f64]) -> Vec<f64> {
    let max = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = s.iter().map(|x| (x - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}
