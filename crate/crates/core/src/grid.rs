//! Periodic spatial grid, sampled fields and the spectral calculus on them.
//!
//! The real line is replaced by the cell `[-L/2, L/2)` with `N` equally
//! spaced nodes. Fourier coefficients are normalized so that
//! `f(x) = sum_k c_k exp(i xi_k (x - x_0))`, with `x_0 = -L/2` the first node.

use std::f64::consts::PI;
use std::fmt;
use std::ops::{Add, Mul, Sub};
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::littlewood_paley::DyadicPartition;

struct Plans {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

/// Uniform periodic grid. Cloning is cheap: FFT plans are shared.
#[derive(Clone)]
pub struct Grid {
    length: f64,
    n: usize,
    plans: Arc<Plans>,
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("length", &self.length)
            .field("n", &self.n)
            .finish()
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.length == other.length
    }
}

impl Grid {
    pub fn new(length: f64, n: usize) -> Result<Self> {
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::InvalidGrid(format!("L must be positive, got {length}")));
        }
        if !n.is_multiple_of(2) {
            return Err(Error::InvalidGrid(format!("N must be even, got {n}")));
        }
        if n < 8 {
            return Err(Error::InvalidGrid(format!("N must be at least 8, got {n}")));
        }
        let mut planner = FftPlanner::new();
        let plans = Plans {
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        };
        Ok(Self {
            length,
            n,
            plans: Arc::new(plans),
        })
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dx(&self) -> f64 {
        self.length / self.n as f64
    }

    /// Left end of the cell, which is also the first node.
    pub fn origin(&self) -> f64 {
        -0.5 * self.length
    }

    pub fn node(&self, i: usize) -> f64 {
        self.origin() + i as f64 * self.dx()
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.node(i)).collect()
    }

    /// Signed mode number of FFT slot `i`: `0, 1, .., N/2, -N/2+1, .., -1`.
    pub fn mode(&self, i: usize) -> i64 {
        if i <= self.n / 2 {
            i as i64
        } else {
            i as i64 - self.n as i64
        }
    }

    /// Wavenumber `2 pi k / L` of FFT slot `i`.
    pub fn wavenumber(&self, i: usize) -> f64 {
        2.0 * PI * self.mode(i) as f64 / self.length
    }

    /// Wavenumbers in FFT slot order.
    pub fn wavenumbers(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.wavenumber(i)).collect()
    }

    pub fn nyquist_slot(&self) -> usize {
        self.n / 2
    }

    /// Largest resolved wavenumber, `pi N / L`.
    pub fn xi_max(&self) -> f64 {
        PI * self.n as f64 / self.length
    }

    /// Wraps a position into the cell `[-L/2, L/2)`.
    pub fn wrap(&self, x: f64) -> f64 {
        let l = self.length;
        (x - self.origin()).rem_euclid(l) + self.origin()
    }

    /// Normalized Fourier coefficients of real samples.
    pub fn spectrum(&self, values: &[f64]) -> Vec<Complex64> {
        debug_assert_eq!(values.len(), self.n);
        let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.plans.forward.process(&mut buf);
        let scale = 1.0 / self.n as f64;
        for c in &mut buf {
            *c *= scale;
        }
        buf
    }

    /// Real samples from normalized coefficients (imaginary residue dropped).
    pub fn synthesize(&self, mut coeffs: Vec<Complex64>) -> Vec<f64> {
        debug_assert_eq!(coeffs.len(), self.n);
        self.plans.inverse.process(&mut coeffs);
        coeffs.into_iter().map(|c| c.re).collect()
    }

    /// Multiplies the spectrum slot-wise by `multiplier(slot)`.
    pub fn apply_multiplier<M>(&self, values: &[f64], multiplier: M) -> Vec<f64>
    where
        M: Fn(usize) -> Complex64,
    {
        let mut coeffs = self.spectrum(values);
        for (i, c) in coeffs.iter_mut().enumerate() {
            *c *= multiplier(i);
        }
        self.synthesize(coeffs)
    }

    /// Spectral derivative multiplier; the Nyquist slot is set to zero.
    pub fn derivative_symbol(&self, slot: usize) -> Complex64 {
        if slot == self.nyquist_slot() {
            Complex64::new(0.0, 0.0)
        } else {
            Complex64::new(0.0, self.wavenumber(slot))
        }
    }

    /// Largest mode kept by the 2/3 rule: `|k| < N/3`.
    pub fn dealias_cutoff(&self) -> i64 {
        (self.n as i64 - 1) / 3
    }

    /// Zeroes every mode with `|k| >= N/3`.
    pub fn dealias(&self, values: &[f64]) -> Vec<f64> {
        let cutoff = self.dealias_cutoff();
        self.apply_multiplier(values, |i| {
            if self.mode(i).abs() <= cutoff {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
    }
}

/// Real samples on a [`Grid`].
#[derive(Clone, Debug)]
pub struct Field {
    grid: Grid,
    values: Vec<f64>,
}

impl Field {
    pub fn new(grid: &Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n() {
            return Err(Error::InvalidArgument(format!(
                "expected {} samples, got {}",
                grid.n(),
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite sample at node {i}")));
        }
        Ok(Self {
            grid: grid.clone(),
            values,
        })
    }

    /// Skips the finiteness check; used on solver intermediates that are
    /// checked in bulk afterwards.
    pub(crate) fn from_raw(grid: &Grid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.n());
        Self {
            grid: grid.clone(),
            values,
        }
    }

    pub fn zeros(grid: &Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: &Grid, c: f64) -> Self {
        Self::from_raw(grid, vec![c; grid.n()])
    }

    pub fn from_fn<F: Fn(f64) -> f64>(grid: &Grid, f: F) -> Self {
        Self::from_raw(grid, grid.nodes().into_iter().map(f).collect())
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn same_grid(&self, other: &Field) -> Result<()> {
        if self.grid == other.grid {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    pub fn map<F: Fn(f64) -> f64>(&self, f: F) -> Field {
        Self::from_raw(&self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    /// Pointwise combination; panics if the grids differ.
    pub fn zip_with<F: Fn(f64, f64) -> f64>(&self, other: &Field, f: F) -> Field {
        assert!(self.grid == other.grid, "fields live on different grids");
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Self::from_raw(&self.grid, values)
    }

    /// Pointwise product.
    pub fn mul(&self, other: &Field) -> Field {
        self.zip_with(other, |a, b| a * b)
    }

    pub fn scale(&self, c: f64) -> Field {
        self.map(|v| c * v)
    }

    pub fn spectrum(&self) -> Vec<Complex64> {
        self.grid.spectrum(&self.values)
    }

    pub fn with_multiplier<M: Fn(usize) -> Complex64>(&self, multiplier: M) -> Field {
        Self::from_raw(&self.grid, self.grid.apply_multiplier(&self.values, multiplier))
    }

    /// Spectral derivative.
    pub fn derivative(&self) -> Field {
        let grid = self.grid.clone();
        self.with_multiplier(|i| grid.derivative_symbol(i))
    }

    /// Second spectral derivative (multiplier `-xi^2`, Nyquist included).
    pub fn second_derivative(&self) -> Field {
        let grid = self.grid.clone();
        self.with_multiplier(|i| {
            let k = grid.wavenumber(i);
            Complex64::new(-k * k, 0.0)
        })
    }

    pub fn dealiased(&self) -> Field {
        Self::from_raw(&self.grid, self.grid.dealias(&self.values))
    }

    /// Rectangle-rule integral over the cell.
    pub fn integrate(&self) -> f64 {
        self.grid.dx() * self.values.iter().sum::<f64>()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Leftmost node attaining the minimum.
    pub fn argmin(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.values.iter().enumerate() {
            if v < self.values[best] {
                best = i;
            }
        }
        best
    }

    /// Leftmost node attaining the maximum.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.values.iter().enumerate() {
            if v > self.values[best] {
                best = i;
            }
        }
        best
    }

    /// `max_i |self_i - other_i|`.
    pub fn max_diff(&self, other: &Field) -> f64 {
        assert!(self.grid == other.grid, "fields live on different grids");
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    /// `(dx sum |f|^p)^(1/p)`, or the node maximum for `p = inf`.
    pub fn lp_norm(&self, p: f64) -> f64 {
        if p.is_infinite() {
            return self.max_abs();
        }
        let sum: f64 = self.values.iter().map(|v| v.abs().powf(p)).sum();
        (self.grid.dx() * sum).powf(1.0 / p)
    }

    /// Squared-coefficient sum `L sum |c_k|^2`, the Plancherel side of `int f^2`.
    pub fn spectral_energy(&self) -> f64 {
        self.grid.length() * self.spectrum().iter().map(|c| c.norm_sqr()).sum::<f64>()
    }

    pub fn interpolant(&self) -> TrigInterpolant {
        TrigInterpolant::new(&self.grid, self.spectrum())
    }

    /// `S_j f`: the sum of dyadic blocks below `j`.
    pub fn lowpass(&self, j: i32, partition: &DyadicPartition) -> Field {
        partition.lowpass(self, j)
    }
}

impl Add for &Field {
    type Output = Field;
    fn add(self, rhs: &Field) -> Field {
        self.zip_with(rhs, |a, b| a + b)
    }
}

impl Sub for &Field {
    type Output = Field;
    fn sub(self, rhs: &Field) -> Field {
        self.zip_with(rhs, |a, b| a - b)
    }
}

impl Mul<f64> for &Field {
    type Output = Field;
    fn mul(self, rhs: f64) -> Field {
        self.scale(rhs)
    }
}

/// Free-function form of [`Field::derivative`].
pub fn derivative(f: &Field) -> Field {
    f.derivative()
}

/// Free-function form of [`Field::integrate`].
pub fn integrate(f: &Field) -> f64 {
    f.integrate()
}

/// Free-function form of [`Field::lowpass`].
pub fn lowpass_sj(f: &Field, j: i32, partition: &DyadicPartition) -> Field {
    f.lowpass(j, partition)
}

/// Trigonometric interpolant of a real field, evaluable anywhere on the line.
///
/// The Nyquist mode enters as a cosine so the interpolant is real; its
/// derivative contribution is dropped, matching [`Field::derivative`].
#[derive(Clone, Debug)]
pub struct TrigInterpolant {
    origin: f64,
    base: f64,
    n: usize,
    /// Coefficients for modes `0..=N/2`.
    half: Vec<Complex64>,
}

impl TrigInterpolant {
    pub fn new(grid: &Grid, coeffs: Vec<Complex64>) -> Self {
        let n = grid.n();
        Self {
            origin: grid.origin(),
            base: 2.0 * PI / grid.length(),
            n,
            half: coeffs[..=n / 2].to_vec(),
        }
    }

    /// Value and first derivative at `x`.
    pub fn eval_with_derivative(&self, x: f64) -> (f64, f64) {
        let theta = self.base * (x - self.origin);
        let step = Complex64::from_polar(1.0, theta);
        let nyq = self.n / 2;
        let mut value = self.half[0].re;
        let mut slope = 0.0;
        let mut phase = step;
        for k in 1..nyq {
            let term = self.half[k] * phase;
            value += 2.0 * term.re;
            // d/dx of 2 Re(c e^{i k theta}) = -2 k base Im(c e^{i k theta})
            slope -= 2.0 * k as f64 * self.base * term.im;
            phase *= step;
        }
        value += self.half[nyq].re * (nyq as f64 * theta).cos();
        (value, slope)
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.eval_with_derivative(x).0
    }

    pub fn eval_derivative(&self, x: f64) -> f64 {
        self.eval_with_derivative(x).1
    }
}
