//! Successive approximations by linear transport with frozen coefficients.
//!
//! Starting from `u^0 = rho^0 = 0`, iterate `n` solves
//!
//! ```text
//! u^{n+1}_t - u^n u^{n+1}_x        = F^n,   u^{n+1}(0)   = S_{n+1} u0
//! rho^{n+1}_t - k3 u^n rho^{n+1}_x = G^n,   rho^{n+1}(0) = S_{n+1} rho0
//! ```
//!
//! with `F^n` the nonlocal force of `(u^n, rho^n)` and `G^n = k3 rho^n u^n_x`.
//! All iterates share one time mesh.

use serde::Serialize;

use crate::dynamics::{Model, Params};
use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::littlewood_paley::{besov_norm, BesovSpec, DyadicPartition};
use crate::trajectory::FieldSeries;

/// Uniform mesh `0 = t_0 < .. < t_K = T` with `K = ceil(T / max_dt)`.
pub fn uniform_mesh(t_end: f64, max_dt: f64) -> Result<Vec<f64>> {
    if !(t_end > 0.0 && max_dt > 0.0) {
        return Err(Error::InvalidArgument("mesh needs T > 0 and dt > 0".into()));
    }
    let k = (t_end / max_dt).ceil().max(1.0) as usize;
    let mut mesh: Vec<f64> = (0..=k).map(|i| t_end * i as f64 / k as f64).collect();
    mesh[k] = t_end;
    Ok(mesh)
}

fn transport_rate(a: &Field, g: &Field, f: &Field) -> Field {
    let fx = f.derivative();
    let adv = a.zip_with(&fx, |a, d| a * d).dealiased();
    &adv + g
}

/// Solves `f_t - a f_x = g` on the time mesh of `a` by RK4, with the
/// coefficients evaluated between mesh points by Hermite interpolation.
///
/// Every step must respect `dt <= cfl_safety dx / max(1, ||a||_inf)`.
pub fn solve_linear_transport(
    a: &FieldSeries,
    g: &FieldSeries,
    f0: &Field,
    cfl_safety: f64,
) -> Result<FieldSeries> {
    if a.times() != g.times() {
        return Err(Error::InvalidArgument("a and g must share the time mesh".into()));
    }
    if a.grid() != f0.grid() || g.grid() != f0.grid() {
        return Err(Error::GridMismatch);
    }
    let times = a.times();
    let dx = f0.grid().dx();
    let mut f = f0.clone();
    let mut rate = transport_rate(a.value(0), g.value(0), &f);
    let mut values = vec![f.clone()];
    let mut rates = vec![rate.clone()];
    for k in 0..times.len() - 1 {
        let (t0, t1) = (times[k], times[k + 1]);
        let dt = t1 - t0;
        let a_mid = a.at(t0 + 0.5 * dt);
        let g_mid = g.at(t0 + 0.5 * dt);
        let a_sup = a.value(k).max_abs().max(a_mid.max_abs()).max(a.value(k + 1).max_abs());
        let limit = cfl_safety * dx / a_sup.max(1.0);
        if dt > limit * (1.0 + 1e-12) {
            return Err(Error::CflViolation { dt, limit });
        }
        let stage = |base: &Field, k: &Field, h: f64| base.zip_with(k, |b, r| b + h * r);
        let k1 = rate;
        let k2 = transport_rate(&a_mid, &g_mid, &stage(&f, &k1, 0.5 * dt));
        let k3 = transport_rate(&a_mid, &g_mid, &stage(&f, &k2, 0.5 * dt));
        let k4 = transport_rate(a.value(k + 1), g.value(k + 1), &stage(&f, &k3, dt));
        let incr = (0..f.values().len())
            .map(|i| {
                dt / 6.0
                    * (k1.values()[i] + 2.0 * k2.values()[i] + 2.0 * k3.values()[i] + k4.values()[i])
            })
            .collect::<Vec<_>>();
        let next: Vec<f64> = f.values().iter().zip(&incr).map(|(a, b)| a + b).collect();
        f = Field::new(f0.grid(), next).map_err(|_| Error::NonFinite { t: t1 })?;
        rate = transport_rate(a.value(k + 1), g.value(k + 1), &f);
        values.push(f.clone());
        rates.push(rate.clone());
    }
    FieldSeries::new(times.to_vec(), values, rates)
}

/// `F^n` and `G^n` with their time derivatives, from `(u, u_t, rho, rho_t)`.
fn sources(
    model: &Model,
    u: &Field,
    ut: &Field,
    rho: &Field,
    rhot: &Field,
) -> Result<(Field, Field, Field, Field)> {
    let Params { k1, k2, k3 } = model.params();
    let help = model.helmholtz();
    let ux = u.derivative();
    let uxt = ut.derivative();
    let n = u.values().len();
    let (uv, utv, rv, rtv) = (u.values(), ut.values(), rho.values(), rhot.values());
    let (uxv, uxtv) = (ux.values(), uxt.values());

    let force = model.force(u, rho);
    let dsrc: Vec<f64> = (0..n)
        .map(|i| k2 * rv[i] * rtv[i] + k1 * uv[i] * utv[i] + (3.0 - k1) * uxv[i] * uxtv[i])
        .collect();
    let force_t = help.dx_helmholtz_inv(&Field::from_raw(u.grid(), dsrc))?.dealiased();

    let g: Vec<f64> = (0..n).map(|i| k3 * rv[i] * uxv[i]).collect();
    let g_t: Vec<f64> = (0..n)
        .map(|i| k3 * (rtv[i] * uxv[i] + rv[i] * uxtv[i]))
        .collect();
    Ok((
        force,
        Field::from_raw(u.grid(), g).dealiased(),
        force_t,
        Field::from_raw(u.grid(), g_t).dealiased(),
    ))
}

/// Settings for [`picard_iterate`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PicardSettings {
    pub n_max: usize,
    pub t_end: f64,
    pub cfl_safety: f64,
    /// Integrability index of the gap norms; `s = 1 + 1/p` for `u` and `1/p` for `rho`.
    pub p: f64,
    pub r: f64,
}

impl PicardSettings {
    pub fn new(n_max: usize, t_end: f64) -> Self {
        Self {
            n_max,
            t_end,
            cfl_safety: 0.3,
            p: 2.0,
            r: 1.0,
        }
    }

    pub fn u_spec(&self) -> Result<BesovSpec> {
        BesovSpec::new(1.0 + 1.0 / self.p, self.p, self.r)
    }

    pub fn rho_spec(&self) -> Result<BesovSpec> {
        BesovSpec::new(1.0 / self.p, self.p, self.r)
    }
}

/// One iterate `(u^n, rho^n)` and its distance to the previous one.
#[derive(Clone, Debug)]
pub struct IterationRecord {
    pub n: usize,
    pub u: FieldSeries,
    pub rho: FieldSeries,
    /// `max_t ||u^n - u^{n-1}||` in `B^{1+1/p}_{p,r}`.
    pub gap_u: f64,
    /// `max_t ||rho^n - rho^{n-1}||` in `B^{1/p}_{p,r}`.
    pub gap_rho: f64,
    /// `max_t ||u^n - u^{n-1}||_inf`.
    pub gap_sup: f64,
    /// `||u^n(t)||_{B^{1+1/p}} + ||rho^n(t)||_{B^{1/p}}` on the mesh.
    pub norms: Vec<f64>,
}

impl IterationRecord {
    pub fn gap(&self) -> f64 {
        self.gap_u + self.gap_rho
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum PicardOutcome {
    Completed,
    /// Gaps grew over three consecutive iterations, or an iterate became unusable.
    Diverged { n: usize, reason: String },
}

#[derive(Clone, Debug)]
pub struct PicardRun {
    pub times: Vec<f64>,
    pub records: Vec<IterationRecord>,
    pub outcome: PicardOutcome,
    pub settings: PicardSettings,
}

impl PicardRun {
    pub fn gaps(&self) -> Vec<f64> {
        self.records.iter().map(IterationRecord::gap).collect()
    }

    pub fn last(&self) -> Option<&IterationRecord> {
        self.records.last()
    }
}

fn series_norms(
    u: &FieldSeries,
    rho: &FieldSeries,
    us: BesovSpec,
    rs: BesovSpec,
    part: &DyadicPartition,
) -> Vec<f64> {
    u.values()
        .iter()
        .zip(rho.values())
        .map(|(a, b)| besov_norm(a, us, part) + besov_norm(b, rs, part))
        .collect()
}

fn series_gap(a: &FieldSeries, b: &FieldSeries, spec: BesovSpec, part: &DyadicPartition) -> f64 {
    a.values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| besov_norm(&(x - y), spec, part))
        .fold(0.0, f64::max)
}

/// Runs up to `n_max` iterations from the zero seed.
///
/// The shared step is `cfl_safety dx / max(1, 2 ||u0||_inf)`; an iterate
/// that outgrows it ends the run with a divergence report.
pub fn picard_iterate(
    u0: &Field,
    rho0: &Field,
    params: Params,
    settings: PicardSettings,
) -> Result<PicardRun> {
    u0.same_grid(rho0)?;
    if settings.n_max == 0 {
        return Err(Error::InvalidArgument("n_max must be at least 1".into()));
    }
    let grid: &Grid = u0.grid();
    let model = Model::new(grid, params);
    let part = DyadicPartition::new(grid);
    let (us, rs) = (settings.u_spec()?, settings.rho_spec()?);
    let max_dt = settings.cfl_safety * grid.dx() / (2.0 * u0.max_abs()).max(1.0);
    let times = uniform_mesh(settings.t_end, max_dt)?;

    let mut u = FieldSeries::zeros(grid, &times);
    let mut rho = FieldSeries::zeros(grid, &times);
    let mut records: Vec<IterationRecord> = Vec::new();
    let mut outcome = PicardOutcome::Completed;
    let mut growth = 0usize;

    for n in 0..settings.n_max {
        let mut fs = Vec::with_capacity(times.len());
        let mut gs = Vec::with_capacity(times.len());
        let mut fts = Vec::with_capacity(times.len());
        let mut gts = Vec::with_capacity(times.len());
        let mut velocity = Vec::with_capacity(times.len());
        let mut velocity_rate = Vec::with_capacity(times.len());
        for i in 0..times.len() {
            let (f, g, ft, gt) = sources(&model, u.value(i), u.rate(i), rho.value(i), rho.rate(i))?;
            fs.push(f);
            gs.push(g);
            fts.push(ft);
            gts.push(gt);
            velocity.push(u.value(i).clone());
            velocity_rate.push(u.rate(i).clone());
        }
        let a_u = FieldSeries::new(times.clone(), velocity, velocity_rate)?;
        let k3 = params.k3;
        let a_rho = FieldSeries::new(
            times.clone(),
            a_u.values().iter().map(|f| f.scale(k3)).collect(),
            a_u.rates().iter().map(|f| f.scale(k3)).collect(),
        )?;
        let f_series = FieldSeries::new(times.clone(), fs, fts)?;
        let g_series = FieldSeries::new(times.clone(), gs, gts)?;

        let j = n as i32 + 1;
        let solved = solve_linear_transport(&a_u, &f_series, &part.lowpass(u0, j), settings.cfl_safety)
            .and_then(|nu| {
                solve_linear_transport(&a_rho, &g_series, &part.lowpass(rho0, j), settings.cfl_safety)
                    .map(|nr| (nu, nr))
            });
        let (next_u, next_rho) = match solved {
            Ok(pair) => pair,
            Err(e @ (Error::CflViolation { .. } | Error::NonFinite { .. })) => {
                outcome = PicardOutcome::Diverged {
                    n: n + 1,
                    reason: e.to_string(),
                };
                break;
            }
            Err(e) => return Err(e),
        };

        let record = IterationRecord {
            n: n + 1,
            gap_u: series_gap(&next_u, &u, us, &part),
            gap_rho: series_gap(&next_rho, &rho, rs, &part),
            gap_sup: next_u.max_diff(&u),
            norms: series_norms(&next_u, &next_rho, us, rs, &part),
            u: next_u,
            rho: next_rho,
        };
        if !record.gap().is_finite() {
            outcome = PicardOutcome::Diverged {
                n: record.n,
                reason: "non-finite gap".into(),
            };
            records.push(record);
            break;
        }
        if let Some(prev) = records.last() {
            growth = if record.gap() > prev.gap() { growth + 1 } else { 0 };
        }
        u = record.u.clone();
        rho = record.rho.clone();
        let n_done = record.n;
        records.push(record);
        if growth >= 3 {
            outcome = PicardOutcome::Diverged {
                n: n_done,
                reason: "gap grew over three consecutive iterations".into(),
            };
            break;
        }
    }

    Ok(PicardRun {
        times,
        records,
        outcome,
        settings,
    })
}

/// Fit of the envelope `2A / sqrt(1 - 8 C A^2 t)` to the iterates' norms.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundReport {
    /// `||u0||_{B^{1+1/p}} + ||rho0||_{B^{1/p}}`.
    pub initial_norm: f64,
    pub times: Vec<f64>,
    /// `sup_n` of the iterate norms at each time.
    pub sup_norms: Vec<f64>,
    /// Smallest `C >= 0` for which the envelope covers every sample.
    pub fitted_c: f64,
    /// Envelope values with the fitted constant (infinite past its horizon).
    pub envelope: Vec<f64>,
    pub holds: bool,
    pub finite: bool,
    /// Iterations `n >= 3` whose norm grew somewhere in time (observed, not asserted).
    pub late_growth: Vec<usize>,
}

fn envelope_value(a: f64, c: f64, t: f64) -> f64 {
    let d = 1.0 - 8.0 * c * a * a * t;
    if d > 0.0 {
        2.0 * a / d.sqrt()
    } else {
        f64::INFINITY
    }
}

pub fn uniform_bound_check(run: &PicardRun, u0: &Field, rho0: &Field) -> Result<BoundReport> {
    u0.same_grid(rho0)?;
    let part = DyadicPartition::new(u0.grid());
    let a = besov_norm(u0, run.settings.u_spec()?, &part)
        + besov_norm(rho0, run.settings.rho_spec()?, &part);
    let times = run.times.clone();
    let sup_norms: Vec<f64> = (0..times.len())
        .map(|i| {
            run.records
                .iter()
                .map(|r| r.norms[i])
                .fold(0.0, f64::max)
        })
        .collect();
    let finite = sup_norms.iter().all(|v| v.is_finite());

    let mut fitted_c: f64 = 0.0;
    if a > 0.0 {
        for (&t, &s) in times.iter().zip(&sup_norms) {
            if t > 0.0 && s > 0.0 {
                fitted_c = fitted_c.max((1.0 - 4.0 * a * a / (s * s)) / (8.0 * a * a * t));
            }
        }
    }
    let envelope: Vec<f64> = times.iter().map(|&t| envelope_value(a, fitted_c, t)).collect();
    let holds = finite
        && envelope
            .iter()
            .zip(&sup_norms)
            .all(|(e, s)| *s <= e * (1.0 + 1e-12) + 1e-300);

    let late_growth = run
        .records
        .windows(2)
        .filter(|w| w[1].n >= 3 && w[1].norms.iter().zip(&w[0].norms).any(|(b, a)| *b > a * (1.0 + 1e-10)))
        .map(|w| w[1].n)
        .collect();

    Ok(BoundReport {
        initial_norm: a,
        times,
        sup_norms,
        fitted_c,
        envelope,
        holds,
        finite,
        late_growth,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn constant_series(grid: &Grid, times: &[f64], c: f64) -> FieldSeries {
        FieldSeries::new(
            times.to_vec(),
            vec![Field::constant(grid, c); times.len()],
            vec![Field::zeros(grid); times.len()],
        )
        .unwrap()
    }

    #[test]
    fn transport_trivial_cases() {
        let g = Grid::new(2.0 * PI, 64).unwrap();
        let times = uniform_mesh(0.5, 0.02).unwrap();
        let f0 = Field::from_fn(&g, |x| x.sin() + 0.2 * (2.0 * x).cos());
        let zero = constant_series(&g, &times, 0.0);
        let f = solve_linear_transport(&zero, &zero, &f0, 0.3).unwrap();
        assert!(f.values().iter().all(|v| v.max_diff(&f0) < 1e-15));

        let c = constant_series(&g, &times, 0.7);
        let f = solve_linear_transport(&zero, &c, &f0, 0.3).unwrap();
        for (t, v) in f.times().iter().zip(f.values()) {
            assert!(v.max_diff(&f0.map(|x| x + 0.7 * t)) < 1e-13);
        }
    }

    #[test]
    fn unit_velocity_translates() {
        let g = Grid::new(2.0 * PI, 64).unwrap();
        let times = uniform_mesh(0.5, 0.02).unwrap();
        let one = constant_series(&g, &times, 1.0);
        let zero = constant_series(&g, &times, 0.0);
        let f = solve_linear_transport(&one, &zero, &Field::from_fn(&g, f64::sin), 0.3).unwrap();
        let exact = Field::from_fn(&g, |x| (x + 0.5).sin());
        assert!(f.last().max_diff(&exact) < 1e-6);
    }

    #[test]
    fn transport_cfl_is_enforced() {
        let g = Grid::new(2.0 * PI, 64).unwrap();
        let times = uniform_mesh(0.5, 0.1).unwrap();
        let one = constant_series(&g, &times, 1.0);
        let f0 = Field::from_fn(&g, f64::sin);
        assert!(matches!(
            solve_linear_transport(&one, &one, &f0, 0.3),
            Err(Error::CflViolation { .. })
        ));
    }

    #[test]
    fn zero_data_gives_zero_iterates() {
        let g = Grid::new(40.0, 64).unwrap();
        let z = Field::zeros(&g);
        let run = picard_iterate(&z, &z, Params::case_i(2.0).unwrap(), PicardSettings::new(3, 0.1)).unwrap();
        assert_eq!(run.records.len(), 3);
        for r in &run.records {
            assert_eq!(r.gap(), 0.0);
            assert!(r.u.values().iter().all(|f| f.max_abs() == 0.0));
        }
        let b = uniform_bound_check(&run, &z, &z).unwrap();
        assert_eq!(b.fitted_c, 0.0);
        assert!(b.holds && b.sup_norms.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn first_iterate_is_frozen_lowpass() {
        let g = Grid::new(40.0, 128).unwrap();
        let u0 = Field::from_fn(&g, |x| 0.1 * (-x * x).exp());
        let rho0 = Field::from_fn(&g, |x| 0.05 * (-x * x / 2.0).exp());
        let run = picard_iterate(&u0, &rho0, Params::case_ii(1.0).unwrap(), PicardSettings::new(1, 0.1)).unwrap();
        let part = DyadicPartition::new(&g);
        let s1 = part.lowpass(&u0, 1);
        for v in run.records[0].u.values() {
            assert!(v.max_diff(&s1) < 1e-15);
        }
        assert_eq!(run.records[0].u.value(0).values(), s1.values());
    }
}
