//! Eulerian evolution of the nonlocal system
//!
//! ```text
//! u_t - u u_x     = d_x P * (k2/2 rho^2 + k1/2 u^2 + (3 - k1)/2 u_x^2)
//! rho_t - k3 u rho_x = k3 rho u_x
//! ```
//!
//! with the momentum form `m_t - u m_x = k1 m u_x + k2 rho rho_x`,
//! `m = u - u_xx`, kept as a cross-check. Quadratic products are dealiased
//! by the 2/3 rule and the density is advanced in conservation form
//! `rho_t = k3 (u rho)_x`.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::helmholtz::{green_on_cell, HelmholtzOperator};
use crate::trajectory::{FieldSeries, Trajectory};

/// Coefficients `(k1, k2, k3)` of the system.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
}

impl Params {
    pub fn new(k1: f64, k2: f64, k3: f64) -> Result<Self> {
        if !(k1.is_finite() && k2.is_finite() && k3.is_finite()) {
            return Err(Error::InvalidArgument("k1, k2, k3 must be finite".into()));
        }
        Ok(Self { k1, k2, k3 })
    }

    /// `(b, 2b, 1)`.
    pub fn case_i(b: f64) -> Result<Self> {
        Self::new(b, 2.0 * b, 1.0)
    }

    /// `(b + 1, 2, b)`.
    pub fn case_ii(b: f64) -> Result<Self> {
        Self::new(b + 1.0, 2.0, b)
    }

    /// Index `n` of the conserved energy `E_n`, when the coefficients admit one.
    pub fn conserved_energy_index(&self) -> Option<u8> {
        if self.k1 == 2.0 && self.k3 == 1.0 {
            if self.k2 == 4.0 {
                return Some(2);
            }
            if self.k2 == 2.0 {
                return Some(1);
            }
        }
        None
    }
}

#[derive(Clone, Debug)]
pub struct State {
    pub t: f64,
    pub u: Field,
    pub rho: Field,
}

impl State {
    pub fn new(t: f64, u: Field, rho: Field) -> Result<Self> {
        u.same_grid(&rho)?;
        if !(u.is_finite() && rho.is_finite()) {
            return Err(Error::NonFinite { t });
        }
        Ok(Self { t, u, rho })
    }

    pub fn zeros(grid: &Grid) -> Self {
        Self {
            t: 0.0,
            u: Field::zeros(grid),
            rho: Field::zeros(grid),
        }
    }

    pub fn grid(&self) -> &Grid {
        self.u.grid()
    }

    /// `m = u - u_xx`.
    pub fn momentum(&self) -> Field {
        &self.u - &self.u.second_derivative()
    }
}

/// Time derivatives of `(u, rho)`.
#[derive(Clone, Debug)]
pub struct Rates {
    pub du: Field,
    pub drho: Field,
}

/// Run controls for [`Model::simulate`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Controls {
    pub cfl_safety: f64,
    /// Keep every `sample_every`-th step as a snapshot (the final state is always kept).
    pub sample_every: usize,
    /// Stop once `||u_x||_inf` exceeds this.
    pub blowup_threshold: f64,
}

impl Default for Controls {
    fn default() -> Self {
        Self {
            cfl_safety: 0.3,
            sample_every: 1,
            blowup_threshold: 1e3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    /// `||u_x||_inf` crossed the threshold at `t`.
    BlowupThreshold { t: f64, ux_inf: f64 },
    /// Non-finite values appeared before the threshold was reached.
    NumericalFailure { t: f64, message: String },
}

/// Per-step diagnostics.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Diagnostics {
    pub t: f64,
    pub e1: f64,
    pub e2: f64,
    pub mass: f64,
    pub min_ux: f64,
    pub max_ux: f64,
    pub u_inf: f64,
}

impl Diagnostics {
    pub fn of(state: &State) -> Self {
        let ux = state.u.derivative();
        let base = state.u.zip_with(&ux, |u, d| u * u + d * d).integrate();
        let rho2 = state.rho.map(|r| r * r).integrate();
        Self {
            t: state.t,
            e1: base + 2.0 * rho2,
            e2: base + 4.0 * rho2,
            mass: state.rho.integrate(),
            min_ux: ux.min(),
            max_ux: ux.max(),
            u_inf: state.u.max_abs(),
        }
    }

    pub fn energy(&self, n: u8) -> f64 {
        if n == 2 {
            self.e2
        } else {
            self.e1
        }
    }

    pub fn ux_inf(&self) -> f64 {
        self.min_ux.abs().max(self.max_ux.abs())
    }
}

#[derive(Clone, Debug)]
pub struct Run {
    pub trajectory: Trajectory,
    pub diagnostics: Vec<Diagnostics>,
    pub status: RunStatus,
    pub steps: usize,
}

impl Run {
    pub fn final_state(&self) -> State {
        State {
            t: *self.trajectory.times().last().expect("non-empty"),
            u: self.trajectory.u.last().clone(),
            rho: self.trajectory.rho.last().clone(),
        }
    }
}

/// Spatial operator of the system on one grid.
#[derive(Clone, Debug)]
pub struct Model {
    grid: Grid,
    params: Params,
    helmholtz: HelmholtzOperator,
    dealias: bool,
}

impl Model {
    pub fn new(grid: &Grid, params: Params) -> Self {
        Self {
            grid: grid.clone(),
            params,
            helmholtz: HelmholtzOperator::new(grid),
            dealias: true,
        }
    }

    /// Disables the 2/3 rule (products are then taken pointwise as-is).
    pub fn without_dealiasing(mut self) -> Self {
        self.dealias = false;
        self
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn params(&self) -> Params {
        self.params
    }

    pub fn helmholtz(&self) -> &HelmholtzOperator {
        &self.helmholtz
    }

    fn mask(&self, slot: usize) -> f64 {
        if !self.dealias || self.grid.mode(slot).abs() <= self.grid.dealias_cutoff() {
            1.0
        } else {
            0.0
        }
    }

    /// Applies `symbol(slot)` together with the dealiasing mask.
    fn filtered<M: Fn(usize) -> Complex64>(&self, values: Vec<f64>, symbol: M) -> Field {
        let out = self
            .grid
            .apply_multiplier(&values, |i| symbol(i) * self.mask(i));
        Field::from_raw(&self.grid, out)
    }

    /// Projects onto the modes kept by the dealiasing rule.
    pub fn project(&self, f: &Field) -> Field {
        if self.dealias {
            f.dealiased()
        } else {
            f.clone()
        }
    }

    /// `k2/2 rho^2 + k1/2 u^2 + (3 - k1)/2 u_x^2`, pointwise.
    pub fn force_source(&self, u: &Field, ux: &Field, rho: &Field) -> Vec<f64> {
        let Params { k1, k2, .. } = self.params;
        let c = 0.5 * (3.0 - k1);
        (0..self.grid.n())
            .map(|i| {
                let (a, d, r) = (u.values()[i], ux.values()[i], rho.values()[i]);
                0.5 * k2 * r * r + 0.5 * k1 * a * a + c * d * d
            })
            .collect()
    }

    /// The nonlocal force `d_x P * (k2/2 rho^2 + k1/2 u^2 + (3 - k1)/2 u_x^2)`.
    pub fn force(&self, u: &Field, rho: &Field) -> Field {
        let ux = u.derivative();
        let src = self.force_source(u, &ux, rho);
        let sym = self.helmholtz.multiplier_dx();
        self.filtered(src, |i| sym[i])
    }

    /// Right-hand side of the nonlocal system.
    pub fn rhs(&self, state: &State) -> Result<Rates> {
        let grid = &self.grid;
        if state.grid() != grid {
            return Err(Error::GridMismatch);
        }
        let k3 = self.params.k3;
        let u = &state.u;
        let rho = &state.rho;
        let ux = u.derivative();

        let advect: Vec<f64> = u.values().iter().zip(ux.values()).map(|(a, b)| a * b).collect();
        let advect = self.filtered(advect, |_| Complex64::new(1.0, 0.0));
        let sym = self.helmholtz.multiplier_dx();
        let force = self.filtered(self.force_source(u, &ux, rho), |i| sym[i]);
        let du = &advect + &force;

        let flux: Vec<f64> = u.values().iter().zip(rho.values()).map(|(a, b)| a * b).collect();
        let drho = self.filtered(flux, |i| grid.derivative_symbol(i) * k3);

        if !(du.is_finite() && drho.is_finite()) {
            return Err(Error::NonFinite { t: state.t });
        }
        Ok(Rates { du, drho })
    }

    /// `d rho/dt` from the product rule `k3 (u rho_x + rho u_x)`.
    pub fn rho_rate_product_rule(&self, state: &State) -> Field {
        let ux = state.u.derivative();
        let rx = state.rho.derivative();
        let k3 = self.params.k3;
        let vals: Vec<f64> = (0..self.grid.n())
            .map(|i| {
                k3 * (state.u.values()[i] * rx.values()[i] + state.rho.values()[i] * ux.values()[i])
            })
            .collect();
        self.filtered(vals, |_| Complex64::new(1.0, 0.0))
    }

    /// `dm/dt = u m_x + k1 m u_x + k2 rho rho_x`.
    pub fn rhs_momentum(&self, state: &State) -> Result<Field> {
        if state.grid() != &self.grid {
            return Err(Error::GridMismatch);
        }
        let Params { k1, k2, .. } = self.params;
        let m = state.momentum();
        let mx = m.derivative();
        let ux = state.u.derivative();
        let rx = state.rho.derivative();
        let (u, r) = (state.u.values(), state.rho.values());
        let vals: Vec<f64> = (0..self.grid.n())
            .map(|i| u[i] * mx.values()[i] + k1 * m.values()[i] * ux.values()[i] + k2 * r[i] * rx.values()[i])
            .collect();
        let out = self.filtered(vals, |_| Complex64::new(1.0, 0.0));
        if !out.is_finite() {
            return Err(Error::NonFinite { t: state.t });
        }
        Ok(out)
    }

    /// `(1 - d_x^2) du/dt`, for comparison with [`Model::rhs_momentum`].
    pub fn momentum_from_rhs(&self, rates: &Rates) -> Field {
        &rates.du - &rates.du.second_derivative()
    }

    /// Largest admissible step `cfl dx / max(1, ||u||_inf)`.
    pub fn cfl_limit(&self, state: &State, cfl_safety: f64) -> f64 {
        cfl_safety * self.grid.dx() / state.u.max_abs().max(1.0)
    }

    fn rk4_from(&self, state: &State, k1: &Rates, dt: f64) -> Result<State> {
        let shift = |s: &State, k: &Rates, h: f64| State {
            t: s.t + h,
            u: s.u.zip_with(&k.du, |a, b| a + h * b),
            rho: s.rho.zip_with(&k.drho, |a, b| a + h * b),
        };
        let k2 = self.rhs(&shift(state, k1, 0.5 * dt))?;
        let k3 = self.rhs(&shift(state, &k2, 0.5 * dt))?;
        let k4 = self.rhs(&shift(state, &k3, dt))?;
        let combine = |y: &Field, a: &Field, b: &Field, c: &Field, d: &Field| {
            let out = (0..y.values().len())
                .map(|i| {
                    y.values()[i]
                        + dt / 6.0
                            * (a.values()[i] + 2.0 * b.values()[i] + 2.0 * c.values()[i] + d.values()[i])
                })
                .collect();
            Field::from_raw(&self.grid, out)
        };
        let next = State {
            t: state.t + dt,
            u: combine(&state.u, &k1.du, &k2.du, &k3.du, &k4.du),
            rho: combine(&state.rho, &k1.drho, &k2.drho, &k3.drho, &k4.drho),
        };
        if !(next.u.is_finite() && next.rho.is_finite()) {
            return Err(Error::NonFinite { t: next.t });
        }
        Ok(next)
    }

    /// One classical fourth-order Runge-Kutta step.
    pub fn step_rk4(&self, state: &State, dt: f64, cfl_safety: f64) -> Result<State> {
        let limit = self.cfl_limit(state, cfl_safety);
        if !(dt > 0.0) || dt > limit * (1.0 + 1e-12) {
            return Err(Error::CflViolation { dt, limit });
        }
        let k1 = self.rhs(state)?;
        self.rk4_from(state, &k1, dt)
    }

    /// Integrates from `init` to `t_end` with adaptive CFL steps.
    ///
    /// Initial fields are first projected onto the dealiased modes.
    pub fn simulate(&self, init: &State, t_end: f64, controls: &Controls) -> Result<Run> {
        if !(t_end > init.t) {
            return Err(Error::InvalidArgument("final time must exceed the initial time".into()));
        }
        if !(controls.cfl_safety > 0.0) || controls.sample_every == 0 {
            return Err(Error::InvalidArgument("cfl_safety > 0 and sample_every >= 1 required".into()));
        }
        let mut state = State::new(init.t, self.project(&init.u), self.project(&init.rho))?;
        let mut rates = self.rhs(&state)?;

        let mut times = vec![state.t];
        let mut us = vec![state.u.clone()];
        let mut rhos = vec![state.rho.clone()];
        let mut dus = vec![rates.du.clone()];
        let mut drhos = vec![rates.drho.clone()];
        let mut diagnostics = vec![Diagnostics::of(&state)];
        let mut status = RunStatus::Completed;
        let mut steps = 0usize;

        while state.t < t_end {
            let mut dt = self.cfl_limit(&state, controls.cfl_safety);
            if state.t + dt >= t_end - 1e-12 * t_end.abs().max(1.0) {
                dt = t_end - state.t;
            }
            let next = match self.rk4_from(&state, &rates, dt) {
                Ok(s) => s,
                Err(Error::NonFinite { t }) => {
                    status = RunStatus::NumericalFailure {
                        t,
                        message: "non-finite values during step".into(),
                    };
                    break;
                }
                Err(e) => return Err(e),
            };
            let next_rates = match self.rhs(&next) {
                Ok(r) => r,
                Err(Error::NonFinite { t }) => {
                    status = RunStatus::NumericalFailure {
                        t,
                        message: "non-finite right-hand side".into(),
                    };
                    break;
                }
                Err(e) => return Err(e),
            };
            steps += 1;
            state = next;
            rates = next_rates;
            if (t_end - state.t).abs() <= 1e-12 * t_end.abs().max(1.0) {
                state.t = t_end;
            }
            let diag = Diagnostics::of(&state);
            diagnostics.push(diag);
            let crossed = diag.ux_inf() > controls.blowup_threshold;
            let done = state.t >= t_end;
            if crossed || done || steps.is_multiple_of(controls.sample_every) {
                times.push(state.t);
                us.push(state.u.clone());
                rhos.push(state.rho.clone());
                dus.push(rates.du.clone());
                drhos.push(rates.drho.clone());
            }
            if crossed {
                status = RunStatus::BlowupThreshold {
                    t: state.t,
                    ux_inf: diag.ux_inf(),
                };
                break;
            }
        }

        let trajectory = Trajectory::new(
            FieldSeries::new(times.clone(), us, dus)?,
            FieldSeries::new(times, rhos, drhos)?,
        )?;
        Ok(Run {
            trajectory,
            diagnostics,
            status,
            steps,
        })
    }
}

fn default_center() -> f64 {
    0.0
}

fn default_width() -> f64 {
    1.0
}

fn default_one() -> f64 {
    1.0
}

fn default_front_amplitude() -> f64 {
    0.5
}

fn default_envelope() -> f64 {
    3.0
}

/// Initial profiles, tagged by `kind` in JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Profile {
    Zero,
    /// `A exp(-((x - center)/width)^2)`.
    Gaussian {
        amplitude: f64,
        #[serde(default = "default_center")]
        center: f64,
        #[serde(default = "default_width")]
        width: f64,
    },
    /// `c e^{-|x - x0|}`, periodized over the cell.
    Peakon {
        c: f64,
        #[serde(default = "default_center")]
        x0: f64,
    },
    /// `A sin(2 pi mode (x - x_0)/L + phase)`; `mode` periods per cell.
    Sine {
        amplitude: f64,
        #[serde(default = "default_one")]
        mode: f64,
        #[serde(default)]
        phase: f64,
    },
    /// Compactly supported `A exp(1 - 1/(1 - r^2))`, `r = |x - center|/radius`.
    Bump {
        amplitude: f64,
        #[serde(default = "default_center")]
        center: f64,
        #[serde(default = "default_one")]
        radius: f64,
    },
    /// `s w tanh((x - c)/w) exp(-((x - c)/envelope)^2)` with `w = amplitude/|s|`;
    /// its extreme slope `s` sits at `c`.
    SteepFront {
        slope: f64,
        #[serde(default = "default_front_amplitude")]
        amplitude: f64,
        #[serde(default = "default_center")]
        center: f64,
        #[serde(default = "default_envelope")]
        envelope: f64,
    },
}

pub const PROFILE_KINDS: [&str; 6] = ["zero", "gaussian", "peakon", "sine", "bump", "steep_front"];

impl Profile {
    /// Parses a JSON profile, reporting an unknown `kind` distinctly.
    pub fn from_json(value: &serde_json::Value) -> Result<Self> {
        let kind = value
            .get("kind")
            .and_then(|k| k.as_str())
            .ok_or_else(|| Error::Config("profile needs a string `kind`".into()))?;
        if !PROFILE_KINDS.contains(&kind) {
            return Err(Error::UnknownProfile(kind.to_string()));
        }
        serde_json::from_value(value.clone()).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidArgument(format!("profile: {what}")));
        match *self {
            Profile::Gaussian { width, .. } if !(width > 0.0) => bad("width must be positive"),
            Profile::Bump { radius, .. } if !(radius > 0.0) => bad("radius must be positive"),
            Profile::SteepFront {
                slope,
                amplitude,
                envelope,
                ..
            } if !(slope != 0.0 && amplitude > 0.0 && envelope > 0.0) => {
                bad("steep_front needs nonzero slope, positive amplitude and envelope")
            }
            _ => Ok(()),
        }
    }

    pub fn sample(&self, grid: &Grid) -> Result<Field> {
        self.validate()?;
        let l = grid.length();
        let field = match *self {
            Profile::Zero => Field::zeros(grid),
            Profile::Gaussian {
                amplitude,
                center,
                width,
            } => Field::from_fn(grid, |x| {
                let z = (x - center) / width;
                amplitude * (-z * z).exp()
            }),
            Profile::Peakon { c, x0 } => Field::from_fn(grid, |x| {
                2.0 * c * green_on_cell((x - x0).rem_euclid(l), l)
            }),
            Profile::Sine {
                amplitude,
                mode,
                phase,
            } => {
                let origin = grid.origin();
                Field::from_fn(grid, |x| {
                    amplitude * (2.0 * PI * mode * (x - origin) / l + phase).sin()
                })
            }
            Profile::Bump {
                amplitude,
                center,
                radius,
            } => Field::from_fn(grid, |x| {
                let r = (x - center) / radius;
                if r.abs() < 1.0 {
                    amplitude * (1.0 - 1.0 / (1.0 - r * r)).exp()
                } else {
                    0.0
                }
            }),
            Profile::SteepFront {
                slope,
                amplitude,
                center,
                envelope,
            } => {
                let w = amplitude / slope.abs();
                Field::from_fn(grid, |x| {
                    let d = x - center;
                    slope * w * (d / w).tanh() * (-(d / envelope).powi(2)).exp()
                })
            }
        };
        Ok(field)
    }
}

/// Samples a named profile with parameters given as a JSON object.
pub fn initial_library(grid: &Grid, kind: &str, params: &serde_json::Value) -> Result<Field> {
    let mut value = params.clone();
    match value.as_object_mut() {
        Some(obj) => {
            obj.insert("kind".into(), serde_json::Value::String(kind.into()));
        }
        None => {
            value = serde_json::json!({ "kind": kind });
        }
    }
    Profile::from_json(&value)?.sample(grid)
}
