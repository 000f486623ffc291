//! The nonlocal operators `P * f = (1 - d_x^2)^{-1} f` and `d_x P * f`.
//!
//! On the periodic cell the Green's function of `1 - d_x^2` is
//! `G_L(x) = cosh(|x| - L/2) / (2 sinh(L/2))` for `|x| <= L/2`, which tends
//! to `e^{-|x|}/2` as `L` grows. The spectral route divides by `1 + xi^2`;
//! the quadrature route convolves with `G_L` directly and serves as the
//! independent oracle.

use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::quadrature::gregory_weights;

/// Which kernel [`HelmholtzOperator::kernel_convolve`] integrates against.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kernel {
    /// `G_L`, the periodized `e^{-|x|}/2`.
    Green,
    /// `G_L'`, the periodized `-sign(x) e^{-|x|}/2`.
    GreenDerivative,
}

/// `G_L(z)` for `z` in `[0, L]`, written to stay finite for large `L`.
pub fn green_on_cell(z: f64, length: f64) -> f64 {
    0.5 * ((z - length).exp() + (-z).exp()) / (1.0 - (-length).exp())
}

/// `G_L'(z)` for `z` in `[0, L]`; equals `-1/2` at `0+` and `+1/2` at `L-`.
pub fn green_derivative_on_cell(z: f64, length: f64) -> f64 {
    0.5 * ((z - length).exp() - (-z).exp()) / (1.0 - (-length).exp())
}

/// `G_L(x)` at any `x`, by periodicity.
pub fn periodic_green(x: f64, length: f64) -> f64 {
    green_on_cell(x.rem_euclid(length), length)
}

#[derive(Clone, Debug)]
pub struct HelmholtzOperator {
    grid: Grid,
    multiplier_inv: Vec<f64>,
    multiplier_dx: Vec<Complex64>,
    /// `G_L(j dx)` for `j = 0..=N`.
    kernel: Vec<f64>,
    /// `G_L'(j dx)` for `j = 0..=N`, one-sided at both ends.
    kernel_dx: Vec<f64>,
    weights: Vec<f64>,
}

impl HelmholtzOperator {
    pub fn new(grid: &Grid) -> Self {
        let n = grid.n();
        let l = grid.length();
        let h = grid.dx();
        let multiplier_inv: Vec<f64> = grid
            .wavenumbers()
            .iter()
            .map(|k| 1.0 / (1.0 + k * k))
            .collect();
        let multiplier_dx = (0..n)
            .map(|i| grid.derivative_symbol(i) * multiplier_inv[i])
            .collect();
        let kernel = (0..=n).map(|j| green_on_cell(j as f64 * h, l)).collect();
        let kernel_dx = (0..=n)
            .map(|j| green_derivative_on_cell(j as f64 * h, l))
            .collect();
        Self {
            grid: grid.clone(),
            multiplier_inv,
            multiplier_dx,
            kernel,
            kernel_dx,
            weights: gregory_weights(n, h),
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// `1/(1 + xi_k^2)` in FFT slot order.
    pub fn multiplier_inv(&self) -> &[f64] {
        &self.multiplier_inv
    }

    pub fn multiplier_dx(&self) -> &[Complex64] {
        &self.multiplier_dx
    }

    /// Samples of `G_L` at offsets `0, dx, .., L`.
    pub fn periodized_kernel(&self) -> &[f64] {
        &self.kernel
    }

    /// Corrected-trapezoid integral of the kernel over one cell.
    pub fn kernel_mass(&self) -> f64 {
        self.weights.iter().zip(&self.kernel).map(|(w, g)| w * g).sum()
    }

    fn check(&self, f: &Field) -> Result<()> {
        if f.grid() == &self.grid {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    /// `P * f`, spectrally.
    pub fn helmholtz_inv(&self, f: &Field) -> Result<Field> {
        self.check(f)?;
        Ok(f.with_multiplier(|i| Complex64::new(self.multiplier_inv[i], 0.0)))
    }

    /// `d_x P * f`, spectrally.
    pub fn dx_helmholtz_inv(&self, f: &Field) -> Result<Field> {
        self.check(f)?;
        Ok(f.with_multiplier(|i| self.multiplier_dx[i]))
    }

    /// Direct O(N^2) convolution with the periodized kernel.
    ///
    /// For node `i` the cell is cut open at `x_i`, so the integrand
    /// `K(z) f(x_i - z)` is smooth on `[0, L]` and the corrected trapezoid
    /// rule applies.
    pub fn kernel_convolve(&self, f: &Field, kernel: Kernel) -> Result<Field> {
        self.check(f)?;
        let n = self.grid.n();
        let table = match kernel {
            Kernel::Green => &self.kernel,
            Kernel::GreenDerivative => &self.kernel_dx,
        };
        let v = f.values();
        let out = (0..n)
            .map(|i| {
                (0..=n)
                    .map(|j| {
                        let src = (i + n - j % n) % n;
                        self.weights[j] * table[j] * v[src]
                    })
                    .sum()
            })
            .collect();
        Ok(Field::from_raw(&self.grid, out))
    }

    /// `min_x [P * (u^2 + u_x^2 / 2) - u^2 / 2]`; nonnegative on exact data.
    pub fn lower_bound_margin(&self, u: &Field) -> Result<f64> {
        self.check(u)?;
        let ux = u.derivative();
        let source = u.zip_with(&ux, |a, b| a * a + 0.5 * b * b);
        let smoothed = self.helmholtz_inv(&source)?;
        Ok(smoothed
            .zip_with(u, |p, a| p - 0.5 * a * a)
            .min())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn op(l: f64, n: usize) -> HelmholtzOperator {
        HelmholtzOperator::new(&Grid::new(l, n).unwrap())
    }

    #[test]
    fn multiplier_range() {
        let h = op(40.0, 128);
        for (i, &m) in h.multiplier_inv().iter().enumerate() {
            assert!(m > 0.0 && m <= 1.0);
            assert_eq!(m == 1.0, i == 0);
        }
    }

    #[test]
    fn smoothing_multiplier_identity() {
        let h = op(40.0, 128);
        for (m, k) in h.multiplier_inv().iter().zip(h.grid().wavenumbers()) {
            assert!((m * (1.0 + k * k) - 1.0).abs() <= f64::EPSILON);
        }
    }

    #[test]
    fn kernel_mass_and_line_limit() {
        let h = op(40.0, 512);
        assert!((h.kernel_mass() - 1.0).abs() < 1e-10);
        let mut dev: f64 = 0.0;
        for i in 0..=400 {
            let x = -10.0 + 0.05 * i as f64;
            dev = dev.max((periodic_green(x, 40.0) - 0.5 * (-x.abs()).exp()).abs());
        }
        assert!(dev < 1e-8, "{dev}");
    }

    #[test]
    fn spectral_examples() {
        let h = op(2.0 * PI, 64);
        let g = h.grid().clone();
        let cos = Field::from_fn(&g, f64::cos);
        let r = h.helmholtz_inv(&cos).unwrap();
        assert!(r.max_diff(&cos.scale(0.5)) < 1e-14);
        let c = Field::constant(&g, 2.5);
        assert!(h.helmholtz_inv(&c).unwrap().max_diff(&c) < 1e-14);
        let cos2 = Field::from_fn(&g, |x| (2.0 * x).cos());
        assert!(h.helmholtz_inv(&cos2).unwrap().max_diff(&cos2.scale(0.2)) < 1e-14);

        let sin = Field::from_fn(&g, f64::sin);
        let d = h.dx_helmholtz_inv(&sin).unwrap();
        assert!(d.max_diff(&cos.scale(0.5)) < 1e-14);
        assert!(h.dx_helmholtz_inv(&c).unwrap().max_abs() < 1e-14);
    }

    #[test]
    fn grid_mismatch_is_rejected() {
        let h = op(2.0 * PI, 64);
        let other = Grid::new(2.0 * PI, 32).unwrap();
        let f = Field::zeros(&other);
        assert!(matches!(h.helmholtz_inv(&f), Err(Error::GridMismatch)));
        assert!(matches!(h.dx_helmholtz_inv(&f), Err(Error::GridMismatch)));
        assert!(matches!(
            h.kernel_convolve(&f, Kernel::Green),
            Err(Error::GridMismatch)
        ));
    }

    #[test]
    fn quadrature_oracle_matches_spectral_route() {
        let h = op(2.0 * PI, 128);
        let g = h.grid().clone();
        let cos = Field::from_fn(&g, f64::cos);
        let q = h.kernel_convolve(&cos, Kernel::Green).unwrap();
        assert!(q.max_diff(&cos.scale(0.5)) < 1e-8, "{}", q.max_diff(&cos.scale(0.5)));

        let zero = Field::zeros(&g);
        assert_eq!(h.kernel_convolve(&zero, Kernel::Green).unwrap().max_abs(), 0.0);

        let h = op(40.0, 512);
        let g = h.grid().clone();
        let f = Field::from_fn(&g, |x| (-(x - 1.0) * (x - 1.0) / 2.0).exp() * (1.0 + 0.3 * x.sin()));
        let spectral = h.dx_helmholtz_inv(&f).unwrap();
        let quad = h.kernel_convolve(&f, Kernel::GreenDerivative).unwrap();
        assert!(spectral.max_diff(&quad) < 1e-8, "{}", spectral.max_diff(&quad));
        let spectral = h.helmholtz_inv(&f).unwrap();
        let quad = h.kernel_convolve(&f, Kernel::Green).unwrap();
        assert!(spectral.max_diff(&quad) < 1e-8);
    }

    #[test]
    fn positivity_on_gaussian_bump() {
        let h = op(40.0, 256);
        let g = h.grid().clone();
        let bump = Field::from_fn(&g, |x| (-x * x).exp());
        assert!(h.kernel_convolve(&bump, Kernel::Green).unwrap().min() > 0.0);
        assert!(h.helmholtz_inv(&bump).unwrap().min() > 0.0);
    }

    #[test]
    fn lower_bound_on_smooth_data() {
        let h = op(40.0, 256);
        let g = h.grid().clone();
        let u = Field::from_fn(&g, |x| (-x * x / 3.0).exp() * (2.0 * x).sin());
        assert!(h.lower_bound_margin(&u).unwrap() >= -1e-10);
    }
}
