//! Complex scalars, dense complex arrays, Wirtinger pairs and the
//! central-difference oracle that every analytic derivative in the crate is
//! checked against.

use std::f64::consts::PI;
use std::ops::{Index, IndexMut};

use num_complex::Complex64;

use crate::error::{CvnnError, Result};

pub type ComplexValue = Complex64;
pub type ComplexVector = Vec<Complex64>;

/// Default step for the finite-difference oracle.
pub const DEFAULT_STEP: f64 = 1e-6;

pub const I: Complex64 = Complex64::new(0.0, 1.0);

#[inline]
pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

#[inline]
pub fn modulus(z: Complex64) -> f64 {
    z.re.hypot(z.im)
}

/// Principal argument in (-pi, pi], with `phase(0) == 0` for either sign of zero.
#[inline]
pub fn phase(z: Complex64) -> f64 {
    if z.re == 0.0 && z.im == 0.0 {
        return 0.0;
    }
    let a = z.im.atan2(z.re);
    if a <= -PI {
        PI
    } else {
        a
    }
}

/// Wraps an angle into (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    w
}

pub fn is_finite(z: Complex64) -> bool {
    z.re.is_finite() && z.im.is_finite()
}

/// The pair `(df/dz, df/dz̄)` at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WirtingerPair {
    pub d_dz: Complex64,
    pub d_dzbar: Complex64,
}

impl WirtingerPair {
    pub const ZERO: WirtingerPair = WirtingerPair {
        d_dz: Complex64::new(0.0, 0.0),
        d_dzbar: Complex64::new(0.0, 0.0),
    };

    pub fn new(d_dz: Complex64, d_dzbar: Complex64) -> Self {
        Self { d_dz, d_dzbar }
    }

    /// Pair for a real-valued function, built from `df/dz` via the conjugate rule.
    pub fn real_valued(d_dz: Complex64) -> Self {
        Self {
            d_dz,
            d_dzbar: d_dz.conj(),
        }
    }

    /// Partials of `conj(f)`: `(conj(df/dz̄), conj(df/dz))`.
    pub fn conj_swap(self) -> Self {
        Self {
            d_dz: self.d_dzbar.conj(),
            d_dzbar: self.d_dz.conj(),
        }
    }

    /// `df/dx = df/dz + df/dz̄`.
    pub fn d_dx(self) -> Complex64 {
        self.d_dz + self.d_dzbar
    }

    /// `df/dy = i (df/dz - df/dz̄)`.
    pub fn d_dy(self) -> Complex64 {
        I * (self.d_dz - self.d_dzbar)
    }
}

/// Steepest-ascent direction of a real function: `2 * df/dz̄`.
pub fn gradient_from_pair(p: WirtingerPair) -> Complex64 {
    2.0 * p.d_dzbar
}

struct Stencil {
    dx: Complex64,
    dy: Complex64,
}

fn central_stencil<F>(f: F, z: Complex64, h: f64) -> Result<Stencil>
where
    F: Fn(Complex64) -> Complex64,
{
    if !h.is_finite() || h <= 0.0 {
        return Err(CvnnError::invalid("complex", format!("step h must be positive, got {h}")));
    }
    let points = [
        ("z+h", z + h),
        ("z-h", z - h),
        ("z+ih", z + I * h),
        ("z-ih", z - I * h),
    ];
    let mut vals = [Complex64::new(0.0, 0.0); 4];
    for (slot, (label, p)) in vals.iter_mut().zip(points) {
        let v = f(p);
        if !is_finite(v) {
            return Err(CvnnError::OracleEvaluation {
                point: format!("{label} = {} {:+}i", p.re, p.im),
            });
        }
        *slot = v;
    }
    Ok(Stencil {
        dx: (vals[0] - vals[1]) / (2.0 * h),
        dy: (vals[2] - vals[3]) / (2.0 * h),
    })
}

/// Wirtinger partials of `f` at `z` from a 4-point central-difference stencil.
pub fn wirtinger_partials_fd<F>(f: F, z: Complex64, h: f64) -> Result<WirtingerPair>
where
    F: Fn(Complex64) -> Complex64,
{
    let s = central_stencil(f, z, h)?;
    Ok(WirtingerPair {
        d_dz: 0.5 * (s.dx - I * s.dy),
        d_dzbar: 0.5 * (s.dx + I * s.dy),
    })
}

/// `|u_x - v_y| + |u_y + v_x|` from central differences. Zero (numerically)
/// iff `f` satisfies the Cauchy-Riemann equations at `z`.
pub fn cauchy_riemann_residual<F>(f: F, z: Complex64, h: f64) -> Result<f64>
where
    F: Fn(Complex64) -> Complex64,
{
    let s = central_stencil(f, z, h)?;
    let (ux, vx) = (s.dx.re, s.dx.im);
    let (uy, vy) = (s.dy.re, s.dy.im);
    Ok((ux - vy).abs() + (uy + vx).abs())
}

/// Central-difference gradient of a real function of several complex
/// variables. Entry `k` is `df/dRe(z_k) + i df/dIm(z_k)`, i.e. `2 df/dz̄_k`.
pub fn real_gradient_fd<F>(mut f: F, point: &[Complex64], h: f64) -> Result<ComplexVector>
where
    F: FnMut(&[Complex64]) -> Result<f64>,
{
    let mut work = point.to_vec();
    let mut grad = Vec::with_capacity(point.len());
    for k in 0..point.len() {
        let mut partial = [0.0; 2];
        for (axis, dir) in [c(h, 0.0), c(0.0, h)].into_iter().enumerate() {
            work[k] = point[k] + dir;
            let plus = f(&work)?;
            work[k] = point[k] - dir;
            let minus = f(&work)?;
            work[k] = point[k];
            if !plus.is_finite() || !minus.is_finite() {
                return Err(CvnnError::OracleEvaluation {
                    point: format!("coordinate {k}, axis {}", if axis == 0 { "re" } else { "im" }),
                });
            }
            partial[axis] = (plus - minus) / (2.0 * h);
        }
        grad.push(c(partial[0], partial[1]));
    }
    Ok(grad)
}

/// Dense row-major complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![Complex64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for col in 0..cols {
                data.push(f(r, col));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_rows(rows: Vec<Vec<Complex64>>) -> Result<Self> {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != n_cols) {
            return Err(CvnnError::shape("complex", format!("{n_cols} columns"), bad.len()));
        }
        Ok(Self {
            rows: n_rows,
            cols: n_cols,
            data: rows.into_iter().flatten().collect(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn row(&self, r: usize) -> &[Complex64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [Complex64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn iter(&self) -> impl Iterator<Item = &Complex64> {
        self.data.iter()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|z| is_finite(*z))
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = Complex64;

    fn index(&self, (r, col): (usize, usize)) -> &Complex64 {
        debug_assert!(r < self.rows && col < self.cols);
        &self.data[r * self.cols + col]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (r, col): (usize, usize)) -> &mut Complex64 {
        debug_assert!(r < self.rows && col < self.cols);
        &mut self.data[r * self.cols + col]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn close(a: Complex64, b: Complex64, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    #[test]
    fn phase_of_zero_is_zero() {
        assert_eq!(phase(c(0.0, 0.0)), 0.0);
        assert_eq!(phase(c(-0.0, 0.0)), 0.0);
        assert_eq!(phase(c(-0.0, -0.0)), 0.0);
        assert_eq!(phase(c(-1.0, -0.0)), PI);
        assert_eq!(phase(c(-1.0, 0.0)), PI);
    }

    #[test]
    fn wrap_angle_range() {
        assert_abs_diff_eq!(wrap_angle(3.0 * PI), PI, epsilon = 1e-12);
        assert_abs_diff_eq!(wrap_angle(-PI), PI, epsilon = 1e-12);
        assert_abs_diff_eq!(wrap_angle(0.5), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(wrap_angle(2.0 * PI + 0.25), 0.25, epsilon = 1e-12);
    }

    #[test]
    fn square_is_holomorphic() {
        let p = wirtinger_partials_fd(|z| z * z, c(1.0, 1.0), DEFAULT_STEP).unwrap();
        assert!(close(p.d_dz, c(2.0, 2.0), 1e-8));
        assert!(close(p.d_dzbar, c(0.0, 0.0), 1e-8));
    }

    #[test]
    fn conjugate_is_anti_holomorphic() {
        for z in [c(0.3, -1.2), c(-2.0, 0.5), c(0.0, 0.0)] {
            let p = wirtinger_partials_fd(|z| z.conj(), z, DEFAULT_STEP).unwrap();
            assert!(close(p.d_dz, c(0.0, 0.0), 1e-9));
            assert!(close(p.d_dzbar, c(1.0, 0.0), 1e-9));
        }
    }

    #[test]
    fn squared_modulus_partials() {
        // d(z z̄)/dz = z̄, d(z z̄)/dz̄ = z
        let z0 = c(2.0, -1.0);
        let p = wirtinger_partials_fd(|z| c(z.norm_sqr(), 0.0), z0, DEFAULT_STEP).unwrap();
        assert!(close(p.d_dz, z0.conj(), 1e-7));
        assert!(close(p.d_dzbar, z0, 1e-7));
    }

    #[test]
    fn gradient_examples() {
        assert_eq!(gradient_from_pair(WirtingerPair::ZERO), c(0.0, 0.0));

        let p = wirtinger_partials_fd(|w| c(w.norm_sqr(), 0.0), c(1.0, 1.0), DEFAULT_STEP).unwrap();
        assert!(close(p.d_dzbar, c(1.0, 1.0), 1e-7));
        assert!(close(gradient_from_pair(p), c(2.0, 2.0), 1e-7));

        let p = wirtinger_partials_fd(|w| c(w.re, 0.0), c(-0.7, 3.0), DEFAULT_STEP).unwrap();
        assert!(close(p.d_dzbar, c(0.5, 0.0), 1e-9));
        assert!(close(gradient_from_pair(p), c(1.0, 0.0), 1e-9));
    }

    #[test]
    fn cauchy_riemann_examples() {
        let r = cauchy_riemann_residual(|z| z * z * z, c(0.3, 0.2), DEFAULT_STEP).unwrap();
        assert!(r <= 1e-6, "{r}");
        let r = cauchy_riemann_residual(|z| z.conj(), c(1.0, 0.0), DEFAULT_STEP).unwrap();
        assert_abs_diff_eq!(r, 2.0, epsilon = 1e-8);
        let crelu = |z: Complex64| c(z.re.max(0.0), z.im.max(0.0));
        let r = cauchy_riemann_residual(crelu, c(-1.0, 2.0), DEFAULT_STEP).unwrap();
        assert_abs_diff_eq!(r, 1.0, epsilon = 1e-8);
    }

    #[test]
    fn oracle_reports_stencil_point() {
        let err = wirtinger_partials_fd(|z| c(1.0 / z.re, 0.0), c(1e-6, 0.0), DEFAULT_STEP).unwrap_err();
        match err {
            CvnnError::OracleEvaluation { point } => assert!(point.starts_with("z-h"), "{point}"),
            other => panic!("unexpected {other:?}"),
        }
        assert!(wirtinger_partials_fd(|z| z, c(0.0, 0.0), 0.0).is_err());
    }

    #[test]
    fn tanh_is_holomorphic_away_from_poles() {
        for z in [c(0.2, 0.1), c(-1.0, 0.4), c(0.5, -2.5)] {
            let p = wirtinger_partials_fd(|z| z.tanh(), z, DEFAULT_STEP).unwrap();
            assert!(p.d_dzbar.norm() <= 1e-6);
        }
    }

    #[test]
    fn real_gradient_matches_pairs() {
        let f = |v: &[Complex64]| Ok(v[0].norm_sqr() + 3.0 * v[1].re);
        let g = real_gradient_fd(f, &[c(1.0, 1.0), c(0.0, 2.0)], DEFAULT_STEP).unwrap();
        assert!(close(g[0], c(2.0, 2.0), 1e-7));
        assert!(close(g[1], c(3.0, 0.0), 1e-7));
    }

    #[test]
    fn matrix_indexing() {
        let m = ComplexMatrix::from_fn(2, 3, |r, col| c(r as f64, col as f64));
        assert_eq!(m[(1, 2)], c(1.0, 2.0));
        assert_eq!(m.row(1), &[c(1.0, 0.0), c(1.0, 1.0), c(1.0, 2.0)]);
        assert!(ComplexMatrix::from_rows(vec![vec![c(0.0, 0.0)], vec![]]).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn f(z: Complex64) -> Complex64 {
            z * z.conj().sin() + z.exp() * 0.3
        }

        fn g(z: Complex64) -> Complex64 {
            c(z.norm_sqr(), z.re * z.im)
        }

        proptest! {
            #[test]
            fn conjugation_symmetry(re in -2.0..2.0f64, im in -2.0..2.0f64) {
                let z = c(re, im);
                let h = DEFAULT_STEP;
                let p = wirtinger_partials_fd(f, z, h).unwrap();
                let q = wirtinger_partials_fd(|z| f(z).conj(), z, h).unwrap();
                let s = p.conj_swap();
                prop_assert!((q.d_dz - s.d_dz).norm() <= 10.0 * h);
                prop_assert!((q.d_dzbar - s.d_dzbar).norm() <= 10.0 * h);
            }

            #[test]
            fn linearity(re in -2.0..2.0f64, im in -2.0..2.0f64,
                         ar in -2.0..2.0f64, ai in -2.0..2.0f64, b in -2.0..2.0f64) {
                let z = c(re, im);
                let a = c(ar, ai);
                let h = DEFAULT_STEP;
                let pf = wirtinger_partials_fd(f, z, h).unwrap();
                let pg = wirtinger_partials_fd(g, z, h).unwrap();
                let pl = wirtinger_partials_fd(|z| a * f(z) + b * g(z), z, h).unwrap();
                prop_assert!((pl.d_dz - (a * pf.d_dz + b * pg.d_dz)).norm() <= 10.0 * h);
                prop_assert!((pl.d_dzbar - (a * pf.d_dzbar + b * pg.d_dzbar)).norm() <= 10.0 * h);
            }

            #[test]
            fn real_functions_have_conjugate_partials(re in -2.0..2.0f64, im in -2.0..2.0f64) {
                let p = wirtinger_partials_fd(|z| c(g(z).re, 0.0), c(re, im), DEFAULT_STEP).unwrap();
                prop_assert!((p.d_dzbar - p.d_dz.conj()).norm() <= 1e-8);
            }
        }
    }
}
