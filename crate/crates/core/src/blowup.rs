//! Energies, the wave-breaking constant `B`, the slope criterion, the
//! Riccati comparison `m' = m^2/2 - B^2` and slope monitoring along runs.

use std::f64::consts::SQRT_2;

use serde::{Deserialize, Serialize};

use crate::dynamics::{Params, Run, RunStatus, State};
use crate::error::{Error, Result};
use crate::grid::Field;
use crate::helmholtz::HelmholtzOperator;
use crate::trajectory::Trajectory;

/// `E_n = int (2n rho^2 + u^2 + u_x^2)`, `n` in `{1, 2}`.
pub fn energy(state: &State, n: u8) -> Result<f64> {
    if n != 1 && n != 2 {
        return Err(Error::InvalidArgument(format!("energy index must be 1 or 2, got {n}")));
    }
    Ok(energy_of(&state.u, &state.rho, n))
}

fn energy_of(u: &Field, rho: &Field, n: u8) -> f64 {
    let ux = u.derivative();
    let c = 2.0 * f64::from(n);
    (0..u.values().len())
        .map(|i| {
            let (a, d, r) = (u.values()[i], ux.values()[i], rho.values()[i]);
            c * r * r + a * a + d * d
        })
        .sum::<f64>()
        * u.grid().dx()
}

/// How the energy enters `B`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BForm {
    /// `B = sqrt(E^2 + k2 M ||rho0||_1) / 2`.
    #[default]
    Squared,
    /// `B = sqrt(E + k2 M ||rho0||_1) / 2`.
    Linear,
}

pub fn compute_b(e_n0: f64, m: f64, rho0_l1: f64, k2: f64, form: BForm) -> Result<f64> {
    if !(e_n0 >= 0.0 && m >= 0.0 && rho0_l1 >= 0.0) {
        return Err(Error::InvalidArgument("E_n(0), M and ||rho0||_1 must be nonnegative".into()));
    }
    if !(k2 > 0.0) {
        return Err(Error::InvalidArgument("k2 must be positive".into()));
    }
    let e = match form {
        BForm::Squared => e_n0 * e_n0,
        BForm::Linear => e_n0,
    };
    Ok(0.5 * (e + k2 * m * rho0_l1).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Criterion {
    pub met: bool,
    /// Leftmost node attaining `min u0_x`, when the criterion holds.
    pub witness: Option<usize>,
    pub x0: Option<f64>,
    pub m0: f64,
    /// `-sqrt(2) B`.
    pub threshold: f64,
}

/// `min u0_x < -sqrt(2) B` over the nodes.
pub fn check_criterion(u0: &Field, b: f64) -> Result<Criterion> {
    if !(b >= 0.0) {
        return Err(Error::InvalidArgument("B must be nonnegative".into()));
    }
    let ux = u0.derivative();
    let i = ux.argmin();
    let m0 = ux.values()[i];
    let threshold = -SQRT_2 * b;
    let met = m0 < threshold;
    Ok(Criterion {
        met,
        witness: met.then_some(i),
        x0: met.then(|| u0.grid().node(i)),
        m0,
        threshold,
    })
}

/// Solution of `m' = m^2/2 - B^2`, `m(0) = m0`, in closed form.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Riccati {
    pub m0: f64,
    pub b: f64,
}

impl Riccati {
    pub fn new(m0: f64, b: f64) -> Self {
        Self { m0, b }
    }

    fn a(&self) -> f64 {
        SQRT_2 * self.b
    }

    /// `m(t)`; infinite at and beyond the blow-up time.
    pub fn eval(&self, t: f64) -> f64 {
        let a = self.a();
        let m0 = self.m0;
        if a == 0.0 {
            // m' = m^2 / 2
            let d = 1.0 - 0.5 * m0 * t;
            return if d > 0.0 { m0 / d } else { f64::INFINITY };
        }
        if m0 == -a {
            return m0;
        }
        let r = (m0 - a) / (m0 + a);
        let s = (-a * t).exp();
        if r > 0.0 && r < 1.0 && s <= r {
            return f64::INFINITY;
        }
        a * (s + r) / (s - r)
    }

    /// Blow-up time, when `m0 > sqrt(2) B`.
    pub fn blowup_time(&self) -> Option<f64> {
        let a = self.a();
        if !(self.m0 > a) {
            return None;
        }
        if a == 0.0 {
            return Some(2.0 / self.m0);
        }
        Some(-((self.m0 - a) / (self.m0 + a)).ln() / a)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RiccatiBound {
    pub t0: f64,
    pub comparison: Riccati,
}

/// `T0 = -ln((m0 - sqrt2 B)/(m0 + sqrt2 B)) / (sqrt2 B)` with the comparison solution.
pub fn riccati_bound(m0: f64, b: f64) -> Result<RiccatiBound> {
    let threshold = SQRT_2 * b;
    if !(b > 0.0) || !(m0 > threshold) || !m0.is_finite() {
        return Err(Error::UndefinedBound { m0, threshold });
    }
    let comparison = Riccati::new(m0, b);
    let t0 = comparison.blowup_time().ok_or(Error::UndefinedBound { m0, threshold })?;
    Ok(RiccatiBound { t0, comparison })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ExtremaSample {
    pub t: f64,
    /// `min u_x` over nodes.
    pub m: f64,
    pub argmin: usize,
    pub x_min: f64,
    pub sup: f64,
    pub argmax: usize,
    pub x_max: f64,
    pub u_inf: f64,
    /// Difference quotient of `m` across neighbouring samples.
    pub dm_dt: f64,
    /// `m^2/2 - B^2`.
    pub riccati_rhs: f64,
}

/// Slope extrema per snapshot; ties resolve to the leftmost node.
pub fn monitor_extrema(traj: &Trajectory, b: f64) -> Vec<ExtremaSample> {
    let times = traj.times();
    let grid = traj.grid();
    let mut out: Vec<ExtremaSample> = traj
        .u
        .values()
        .iter()
        .zip(times)
        .map(|(u, &t)| {
            let ux = u.derivative();
            let (imin, imax) = (ux.argmin(), ux.argmax());
            let m = ux.values()[imin];
            ExtremaSample {
                t,
                m,
                argmin: imin,
                x_min: grid.node(imin),
                sup: ux.values()[imax],
                argmax: imax,
                x_max: grid.node(imax),
                u_inf: u.max_abs(),
                dm_dt: 0.0,
                riccati_rhs: 0.5 * m * m - b * b,
            }
        })
        .collect();
    let n = out.len();
    if n >= 2 {
        for k in 0..n {
            let (lo, hi) = if k == 0 {
                (0, 1)
            } else if k == n - 1 {
                (n - 2, n - 1)
            } else {
                (k - 1, k + 1)
            };
            out[k].dm_dt = (out[hi].m - out[lo].m) / (out[hi].t - out[lo].t);
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct UInftyReport {
    pub u_inf: f64,
    /// `||u||_{H^1} / sqrt(2)`.
    pub bound: f64,
    pub holds: bool,
}

/// `||u||_inf <= ||u||_{H^1} / sqrt(2)`.
pub fn verify_uinfty_bound(state: &State) -> UInftyReport {
    let u = &state.u;
    let ux = u.derivative();
    let h1 = u.zip_with(&ux, |a, d| a * a + d * d).integrate().sqrt();
    let u_inf = u.max_abs();
    let bound = h1 / SQRT_2;
    UInftyReport {
        u_inf,
        bound,
        holds: u_inf <= bound * (1.0 + 1e-8),
    }
}

/// Running bounds that hold along conservative runs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ConservativeBounds {
    /// `max_t ||u||_inf^2 - E_n(0)/2`; nonpositive up to roundoff.
    pub u_excess: f64,
    /// `max_t ||P * rho^2||_inf - M ||rho(t)||_1 / 2`.
    pub rho_excess: f64,
    pub m_measured: f64,
}

pub fn conservative_bounds(traj: &Trajectory, n: u8) -> Result<ConservativeBounds> {
    let helm = HelmholtzOperator::new(traj.grid());
    let e0 = energy_of(traj.u.value(0), traj.rho.value(0), n);
    let m_measured = running_rho_max(traj);
    let mut u_excess = f64::NEG_INFINITY;
    let mut rho_excess = f64::NEG_INFINITY;
    for (u, rho) in traj.u.values().iter().zip(traj.rho.values()) {
        let ui = u.max_abs();
        u_excess = u_excess.max(ui * ui - 0.5 * e0);
        let smoothed = helm.helmholtz_inv(&rho.map(|r| r * r))?;
        let l1 = rho.map(f64::abs).integrate();
        rho_excess = rho_excess.max(smoothed.max_abs() - 0.5 * m_measured * l1);
    }
    Ok(ConservativeBounds {
        u_excess,
        rho_excess,
        m_measured,
    })
}

fn running_rho_max(traj: &Trajectory) -> f64 {
    traj.rho.values().iter().map(Field::max_abs).fold(0.0, f64::max)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    /// `min u_x -> -infinity`.
    Inf,
    /// `max u_x -> +infinity`.
    Sup,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "scenario", rename_all = "snake_case")]
pub enum Scenario {
    ThresholdCrossed { side: Side, t: f64 },
    NoCrossing { t_end: f64 },
    NumericalFailure { t: f64 },
}

#[derive(Clone, Debug, Serialize)]
pub struct BlowupReport {
    pub n: u8,
    pub e_n0: f64,
    /// Bound on `|rho|`: supplied, or the running maximum over the run.
    pub m: f64,
    pub m_measured: bool,
    pub rho0_l1: f64,
    pub b_form: BForm,
    pub b: f64,
    pub criterion: Criterion,
    pub m0: f64,
    /// `sup u0_x`.
    pub sup0: f64,
    /// Bound from `m0` (needs `m0 > sqrt(2) B`).
    pub t0_bound: Option<f64>,
    /// Bound from `sup u0_x` in place of `m0`.
    pub t0_bound_sup: Option<f64>,
    pub observed: Option<f64>,
    pub scenario: Scenario,
    /// Present when the run contradicts the sign the criterion predicts.
    pub discrepancy: Option<String>,
    pub m_trace: Vec<ExtremaSample>,
}

impl BlowupReport {
    /// Comparison solutions started from `m0` and from `sup u0_x`.
    pub fn overlays(&self) -> (Riccati, Riccati) {
        (Riccati::new(self.m0, self.b), Riccati::new(self.sup0, self.b))
    }
}

/// Options for [`analyze_run`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AnalysisOptions {
    pub n: u8,
    pub b_form: BForm,
    /// A priori bound on `|rho|`; measured from the run when absent.
    pub m_bound: Option<f64>,
}

/// Assembles the report for a finished (or stopped) run.
pub fn analyze_run(run: &Run, params: &Params, opts: AnalysisOptions) -> Result<BlowupReport> {
    let traj = &run.trajectory;
    let u0 = traj.u.value(0);
    let rho0 = traj.rho.value(0);
    let init = State::new(traj.times()[0], u0.clone(), rho0.clone())?;
    let e_n0 = energy(&init, opts.n)?;
    let (m, m_measured) = match opts.m_bound {
        Some(m) => (m, false),
        None => (running_rho_max(traj), true),
    };
    let rho0_l1 = rho0.map(f64::abs).integrate();
    let b = compute_b(e_n0, m, rho0_l1, params.k2, opts.b_form)?;
    let criterion = check_criterion(u0, b)?;
    let sup0 = u0.derivative().max();
    let t0_bound = riccati_bound(criterion.m0, b).ok().map(|r| r.t0);
    let t0_bound_sup = riccati_bound(sup0, b).ok().map(|r| r.t0);
    let m_trace = monitor_extrema(traj, b);

    let (scenario, observed) = match &run.status {
        RunStatus::Completed => (
            Scenario::NoCrossing {
                t_end: *traj.times().last().expect("non-empty"),
            },
            None,
        ),
        RunStatus::BlowupThreshold { t, .. } => {
            let last = m_trace.last().expect("non-empty");
            let side = if last.sup.abs() >= last.m.abs() {
                Side::Sup
            } else {
                Side::Inf
            };
            (Scenario::ThresholdCrossed { side, t: *t }, Some(*t))
        }
        RunStatus::NumericalFailure { t, .. } => (Scenario::NumericalFailure { t: *t }, None),
    };

    let discrepancy = if criterion.met {
        match scenario {
            Scenario::ThresholdCrossed { side: Side::Inf, .. } => None,
            Scenario::ThresholdCrossed { side: Side::Sup, t } => Some(format!(
                "sign ambiguity: criterion met on inf u0_x = {:.6e}, but the slope diverged through sup u_x at t = {t:.6e}",
                criterion.m0
            )),
            Scenario::NoCrossing { t_end } => Some(format!(
                "sign ambiguity: criterion met on inf u0_x = {:.6e}, yet no threshold crossing by t = {t_end:.6e}; \
                 the Riccati branch needs m(0) > sqrt(2) B, which a negative infimum never satisfies",
                criterion.m0
            )),
            Scenario::NumericalFailure { .. } => None,
        }
    } else {
        match scenario {
            Scenario::ThresholdCrossed { side: Side::Sup, t } => Some(format!(
                "sign ambiguity: criterion not met (inf u0_x = {:.6e}), but the slope diverged through sup u_x at t = {t:.6e}; \
                 sup u0_x = {sup0:.6e} against sqrt(2) B = {:.6e}",
                criterion.m0,
                -criterion.threshold
            )),
            _ => None,
        }
    };

    Ok(BlowupReport {
        n: opts.n,
        e_n0,
        m,
        m_measured,
        rho0_l1,
        b_form: opts.b_form,
        b,
        criterion,
        m0: criterion.m0,
        sup0,
        t0_bound,
        t0_bound_sup,
        observed,
        scenario,
        discrepancy,
        m_trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{Controls, Model, Profile};
    use crate::grid::Grid;
    use std::f64::consts::PI;

    #[test]
    fn energy_examples() {
        let g = Grid::new(40.0, 256).unwrap();
        assert_eq!(energy(&State::zeros(&g), 1).unwrap(), 0.0);
        assert!(energy(&State::zeros(&g), 3).is_err());

        let u = Field::from_fn(&g, |x| (-x * x).exp());
        let rho = Field::from_fn(&g, |x| 0.3 * (-(x - 1.0) * (x - 1.0)).exp());
        let rho2 = rho.scale(2.0);
        let int_r2 = rho.mul(&rho).integrate();
        for n in [1u8, 2] {
            let a = energy(&State::new(0.0, u.clone(), rho.clone()).unwrap(), n).unwrap();
            let b = energy(&State::new(0.0, u.clone(), rho2.clone()).unwrap(), n).unwrap();
            assert!((b - a - 6.0 * f64::from(n) * int_r2).abs() < 1e-12);
        }
    }

    #[test]
    fn b_examples() {
        assert_eq!(compute_b(2.0, 0.0, 0.0, 4.0, BForm::Squared).unwrap(), 1.0);
        assert_eq!(compute_b(3.0, 0.0, 0.0, 2.0, BForm::Squared).unwrap(), 1.5);
        assert_eq!(compute_b(0.0, 1.0, 1.0, 4.0, BForm::Squared).unwrap(), 1.0);
        assert_eq!(compute_b(4.0, 0.0, 0.0, 4.0, BForm::Linear).unwrap(), 1.0);
        assert!(compute_b(-1.0, 0.0, 0.0, 1.0, BForm::Squared).is_err());
        assert!(compute_b(1.0, 0.0, 0.0, 0.0, BForm::Squared).is_err());
    }

    #[test]
    fn criterion_is_strict() {
        let g = Grid::new(2.0 * PI, 64).unwrap();
        let c = check_criterion(&Field::zeros(&g), 1.0).unwrap();
        assert!(!c.met && c.witness.is_none());
        // min of d/dx cos x is -1 at x = pi/2; B = 1/sqrt2 sits exactly on the boundary
        let u = Field::from_fn(&g, f64::cos);
        let m0 = u.derivative().min();
        let guess = -m0 / SQRT_2;
        let b = (0..8u64)
            .flat_map(|k| [guess.to_bits() + k, guess.to_bits() - k])
            .map(f64::from_bits)
            .find(|b| -SQRT_2 * b == m0)
            .expect("some neighbour lands exactly on the boundary");
        assert!(!check_criterion(&u, b).unwrap().met);
        assert!(check_criterion(&u, b * (1.0 - 1e-12)).unwrap().met);
        let c = check_criterion(&u, 0.5).unwrap();
        assert!(c.met);
        assert!((c.x0.unwrap() - PI / 2.0).abs() < 1e-12);
    }

    #[test]
    fn steep_front_meets_criterion() {
        let g = Grid::new(40.0, 1024).unwrap();
        let u = Profile::SteepFront { slope: -5.0, amplitude: 0.5, center: 3.0, envelope: 3.0 }
            .sample(&g)
            .unwrap();
        let c = check_criterion(&u, 1.0).unwrap();
        assert!(c.met);
        assert!((c.x0.unwrap() - 3.0).abs() <= g.dx());
    }

    #[test]
    fn riccati_examples() {
        let r = riccati_bound(3.0, 1.0).unwrap();
        let a = SQRT_2;
        let exact = -((3.0 - a) / (3.0 + a)).ln() / a;
        assert!((r.t0 - exact).abs() <= 1e-12 * exact);
        // the commonly quoted 0.7238 is one unit off in the last place
        assert!((r.t0 - 0.7238).abs() < 2e-4);
        assert!((r.t0 - 0.7239000229).abs() < 1e-10);
        assert!(riccati_bound(1e6, 1.0).unwrap().t0 < 1e-5);
        assert!(matches!(riccati_bound(SQRT_2, 1.0), Err(Error::UndefinedBound { .. })));
        assert!(riccati_bound(-3.0, 1.0).is_err());
        assert!(riccati_bound(3.0, 0.0).is_err());

        let c = r.comparison;
        assert!((c.eval(0.0) - 3.0).abs() < 1e-14);
        assert!(c.eval(r.t0 * 0.999) > 1e3);
        assert!(c.eval(r.t0 * 1.001).is_infinite());
        // from below -sqrt(2) B the comparison rises to the equilibrium
        let low = Riccati::new(-5.0, 1.0);
        assert!((low.eval(50.0) + SQRT_2).abs() < 1e-10);
    }

    #[test]
    fn extrema_of_frozen_cosine() {
        let g = Grid::new(2.0 * PI, 64).unwrap();
        let u = Field::from_fn(&g, f64::cos);
        let series = crate::trajectory::FieldSeries::new(
            vec![0.0, 1.0],
            vec![u.clone(), u.clone()],
            vec![Field::zeros(&g), Field::zeros(&g)],
        )
        .unwrap();
        let zero = crate::trajectory::FieldSeries::zeros(&g, &[0.0, 1.0]);
        let tr = Trajectory::new(series, zero.clone()).unwrap();
        let trace = monitor_extrema(&tr, 1.0);
        for s in &trace {
            assert!((s.m + 1.0).abs() < 1e-12);
            assert!((s.x_min - PI / 2.0).abs() < 1e-12);
            assert_eq!(s.dm_dt, 0.0);
        }
        let zt = Trajectory::new(zero.clone(), zero).unwrap();
        let trace = monitor_extrema(&zt, 1.0);
        assert!(trace.iter().all(|s| s.m == 0.0 && s.argmin == 0));
    }

    #[test]
    fn uinfty_bound_examples() {
        let g = Grid::new(40.0, 256).unwrap();
        let r = verify_uinfty_bound(&State::zeros(&g));
        assert!(r.holds && r.u_inf == 0.0 && r.bound == 0.0);
        let gauss = Field::from_fn(&g, |x| (-x * x).exp());
        let r = verify_uinfty_bound(&State::new(0.0, gauss, Field::zeros(&g)).unwrap());
        assert!(r.holds && r.bound > 1.05 * r.u_inf);

        let g = Grid::new(40.0, 16384).unwrap();
        let peak = Profile::Peakon { c: 1.0, x0: 0.0 }.sample(&g).unwrap();
        let r = verify_uinfty_bound(&State::new(0.0, peak, Field::zeros(&g)).unwrap());
        assert!((r.u_inf - 1.0).abs() < 1e-12);
        assert!((r.bound - r.u_inf).abs() < 1e-3, "{r:?}");
    }

    #[test]
    fn smooth_run_respects_conservative_bounds() {
        let g = Grid::new(40.0, 256).unwrap();
        let p = Params::case_ii(1.0).unwrap();
        let u0 = Field::from_fn(&g, |x| 0.8 * (-x * x / 3.0).exp());
        let r0 = Field::from_fn(&g, |x| 0.3 * (-x * x).exp());
        let run = Model::new(&g, p)
            .simulate(&State::new(0.0, u0, r0).unwrap(), 0.5, &Controls::default())
            .unwrap();
        let cb = conservative_bounds(&run.trajectory, 1).unwrap();
        assert!(cb.u_excess <= 1e-6);
        assert!(cb.rho_excess <= 1e-8);
        let rep = analyze_run(&run, &p, AnalysisOptions { n: 1, b_form: BForm::Squared, m_bound: None }).unwrap();
        assert!(!rep.criterion.met);
        assert!(rep.discrepancy.is_none());
        assert!(matches!(rep.scenario, Scenario::NoCrossing { .. }));
    }
}
