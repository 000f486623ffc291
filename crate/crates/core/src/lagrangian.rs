//! Characteristics `dy/dt = u(t, -k3 y)`, `y(0, xi) = xi`, and the quantities
//! carried along them.
//!
//! With `X = -k3 y` the ensemble stores `U = u(t, X)`, `V = rho(t, X)`, the
//! Jacobian `y_xi` (by its own ODE and by the exponential formula) and
//! `U_xi = -k3 u_x(t, X) y_xi`. Fields are evaluated off-grid by
//! trigonometric interpolation and in time by the trajectory's Hermite
//! interpolation.

use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::Params;
use crate::error::{Error, Result};
use crate::grid::{Field, Grid, TrigInterpolant};
use crate::helmholtz::{green_derivative_on_cell, green_on_cell};
use crate::quadrature::gregory_weights;
use crate::trajectory::{FieldSeries, Trajectory};

/// Everything tracked along the characteristics, indexed `[time][label]`.
#[derive(Clone, Debug)]
pub struct CharacteristicEnsemble {
    pub k3: f64,
    pub xi: Vec<f64>,
    pub times: Vec<f64>,
    pub y: Vec<Vec<f64>>,
    /// Jacobian advanced by `d(y_xi)/dt = -k3 u_x(t, X) y_xi`.
    pub y_xi: Vec<Vec<f64>>,
    /// Jacobian from `exp(-k3 int_0^t u_x(s, X) ds)`.
    pub y_xi_exp: Vec<Vec<f64>>,
    pub u: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub u_xi: Vec<Vec<f64>>,
    /// `dU/dt = u_t(X) - k3 U u_x(X)`.
    pub u_t: Vec<Vec<f64>>,
    /// `d(U_xi)/dt`.
    pub u_xi_t: Vec<Vec<f64>>,
    grid: Grid,
}

impl CharacteristicEnsemble {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn labels(&self) -> usize {
        self.xi.len()
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// `max |y_xi - y_xi_exp|` over all samples.
    pub fn jacobian_route_gap(&self) -> f64 {
        max_pair_diff(&self.y_xi, &self.y_xi_exp)
    }

    /// `min y_xi` over all samples.
    pub fn min_jacobian(&self) -> f64 {
        self.y_xi
            .iter()
            .flatten()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    /// True when `y` stays strictly increasing in the label at every time.
    pub fn labels_ordered(&self) -> bool {
        self.y.iter().all(|row| row.windows(2).all(|w| w[1] > w[0]))
    }
}

fn max_pair_diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Labels at the grid nodes.
pub fn node_labels(grid: &Grid) -> Vec<f64> {
    grid.nodes()
}

#[derive(Clone, Copy, Debug)]
struct Carried {
    y: f64,
    q: f64,
    /// `int_0^t u_x(s, X) ds`.
    s: f64,
}

/// Snapshot fields needed to evaluate everything at arbitrary positions.
struct Snapshot {
    u: TrigInterpolant,
    ux: TrigInterpolant,
    ut: TrigInterpolant,
    rho: Option<TrigInterpolant>,
}

impl Snapshot {
    fn new(u: &Field, ut: &Field, rho: Option<&Field>) -> Self {
        Self {
            u: u.interpolant(),
            ux: u.derivative().interpolant(),
            ut: ut.interpolant(),
            rho: rho.map(Field::interpolant),
        }
    }
}

fn velocity_rhs(interp: &TrigInterpolant, k3: f64, c: Carried) -> Carried {
    let (u, ux) = interp.eval_with_derivative(-k3 * c.y);
    Carried {
        y: u,
        q: -k3 * ux * c.q,
        s: ux,
    }
}

fn axpy(c: Carried, h: f64, d: Carried) -> Carried {
    Carried {
        y: c.y + h * d.y,
        q: c.q + h * d.q,
        s: c.s + h * d.s,
    }
}

/// Advances the characteristics through the trajectory's sample times,
/// with `substeps` RK4 steps per sampling interval.
///
/// `rho` may be omitted, in which case `V` is reported as zero.
pub fn evolve_characteristics(
    u: &FieldSeries,
    rho: Option<&FieldSeries>,
    k3: f64,
    xi0: &[f64],
    substeps: usize,
) -> Result<CharacteristicEnsemble> {
    if xi0.is_empty() || substeps == 0 {
        return Err(Error::InvalidArgument("need labels and at least one substep".into()));
    }
    if let Some(r) = rho {
        if r.times() != u.times() {
            return Err(Error::InvalidArgument("u and rho must share sample times".into()));
        }
    }
    let grid = u.grid().clone();
    let times = u.times().to_vec();
    let m = xi0.len();
    let mut carried: Vec<Carried> = xi0.iter().map(|&x| Carried { y: x, q: 1.0, s: 0.0 }).collect();

    let mut ens = CharacteristicEnsemble {
        k3,
        xi: xi0.to_vec(),
        times: times.clone(),
        y: Vec::with_capacity(times.len()),
        y_xi: Vec::with_capacity(times.len()),
        y_xi_exp: Vec::with_capacity(times.len()),
        u: Vec::with_capacity(times.len()),
        v: Vec::with_capacity(times.len()),
        u_xi: Vec::with_capacity(times.len()),
        u_t: Vec::with_capacity(times.len()),
        u_xi_t: Vec::with_capacity(times.len()),
        grid: grid.clone(),
    };

    let record = |ens: &mut CharacteristicEnsemble, idx: usize, carried: &[Carried]| {
        let snap = Snapshot::new(u.value(idx), u.rate(idx), rho.map(|r| r.value(idx)));
        let samples: Vec<[f64; 7]> = carried
            .par_iter()
            .map(|c| {
                let x = -k3 * c.y;
                let (uu, ux) = snap.u.eval_with_derivative(x);
                let uxx = snap.ux.eval_derivative(x);
                let (ut, uxt) = snap.ut.eval_with_derivative(x);
                let v = snap.rho.as_ref().map_or(0.0, |r| r.eval(x));
                let big_u_t = ut - k3 * uu * ux;
                let uxi = -k3 * ux * c.q;
                // d/dt of -k3 u_x(t, X) q with dX/dt = -k3 U and dq/dt = uxi
                let uxi_t = -k3 * (uxt - k3 * uu * uxx) * c.q - k3 * ux * uxi;
                [uu, v, uxi, big_u_t, uxi_t, c.q, (-k3 * c.s).exp()]
            })
            .collect();
        ens.y.push(carried.iter().map(|c| c.y).collect());
        ens.u.push(samples.iter().map(|s| s[0]).collect());
        ens.v.push(samples.iter().map(|s| s[1]).collect());
        ens.u_xi.push(samples.iter().map(|s| s[2]).collect());
        ens.u_t.push(samples.iter().map(|s| s[3]).collect());
        ens.u_xi_t.push(samples.iter().map(|s| s[4]).collect());
        ens.y_xi.push(samples.iter().map(|s| s[5]).collect());
        ens.y_xi_exp.push(samples.iter().map(|s| s[6]).collect());
    };

    record(&mut ens, 0, &carried);
    for k in 0..times.len().saturating_sub(1) {
        let h = (times[k + 1] - times[k]) / substeps as f64;
        let mut t = times[k];
        let mut start = u.value(k).interpolant();
        for sub in 0..substeps {
            let mid = u.at(t + 0.5 * h).interpolant();
            let end = if sub + 1 == substeps {
                u.value(k + 1).interpolant()
            } else {
                u.at(t + h).interpolant()
            };
            carried.par_iter_mut().for_each(|c| {
                let k1 = velocity_rhs(&start, k3, *c);
                let k2 = velocity_rhs(&mid, k3, axpy(*c, 0.5 * h, k1));
                let k3_ = velocity_rhs(&mid, k3, axpy(*c, 0.5 * h, k2));
                let k4 = velocity_rhs(&end, k3, axpy(*c, h, k3_));
                *c = Carried {
                    y: c.y + h / 6.0 * (k1.y + 2.0 * k2.y + 2.0 * k3_.y + k4.y),
                    q: c.q + h / 6.0 * (k1.q + 2.0 * k2.q + 2.0 * k3_.q + k4.q),
                    s: c.s + h / 6.0 * (k1.s + 2.0 * k2.s + 2.0 * k3_.s + k4.s),
                };
            });
            t += h;
            start = end;
            if let Some((label, c)) = carried
                .iter()
                .enumerate()
                .find(|(_, c)| !(c.q > 0.0) || !c.y.is_finite())
            {
                return Err(Error::DiffeomorphismLoss {
                    t,
                    label,
                    value: c.q,
                });
            }
        }
        record(&mut ens, k + 1, &carried);
    }
    debug_assert!(ens.y.iter().all(|row| row.len() == m));
    Ok(ens)
}

/// Characteristics of a full run, one label per grid node.
pub fn characteristics_of(traj: &Trajectory, k3: f64, substeps: usize) -> Result<CharacteristicEnsemble> {
    let labels = node_labels(traj.grid());
    evolve_characteristics(&traj.u, Some(&traj.rho), k3, &labels, substeps)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InvariantReport {
    /// `max_xi |rho(t, X) y_xi - rho0(-k3 xi)|` per sample time.
    pub per_time: Vec<f64>,
    pub max_error: f64,
}

/// Pointwise residual `rho(t, X) y_xi - rho0(-k3 xi)`, indexed `[time][label]`.
pub fn density_residuals(ens: &CharacteristicEnsemble, rho0: &Field) -> Vec<Vec<f64>> {
    let it = rho0.interpolant();
    let reference: Vec<f64> = ens.xi.iter().map(|&x| it.eval(-ens.k3 * x)).collect();
    ens.v
        .iter()
        .zip(&ens.y_xi)
        .map(|(v, q)| {
            v.iter()
                .zip(q)
                .zip(&reference)
                .map(|((v, q), r)| v * q - r)
                .collect()
        })
        .collect()
}

/// Checks `rho(t, -k3 y) y_xi = rho0(-k3 xi)` along the ensemble.
///
/// The ensemble's `V` must come from the same density trajectory.
pub fn verify_density_invariant(ens: &CharacteristicEnsemble, rho0: &Field) -> InvariantReport {
    let per_time: Vec<f64> = density_residuals(ens, rho0)
        .iter()
        .map(|row| row.iter().fold(0.0, |m: f64, r| m.max(r.abs())))
        .collect();
    let max_error = per_time.iter().copied().fold(0.0, f64::max);
    InvariantReport { per_time, max_error }
}

/// `coarse / fine`; the factor gained by one refinement.
pub fn refinement_ratio(coarse: f64, fine: f64) -> f64 {
    if fine == 0.0 {
        if coarse == 0.0 {
            1.0
        } else {
            f64::INFINITY
        }
    } else {
        coarse / fine
    }
}

/// Labels must be the `N` grid nodes for the label quadrature.
fn check_node_labels(ens: &CharacteristicEnsemble) -> Result<()> {
    let grid = &ens.grid;
    if ens.labels() != grid.n() {
        return Err(Error::InvalidArgument("nonlocal force needs one label per grid node".into()));
    }
    let tol = 1e-12 * grid.length();
    if ens
        .xi
        .iter()
        .enumerate()
        .any(|(i, &x)| (x - grid.node(i)).abs() > tol)
    {
        return Err(Error::InvalidArgument("labels must sit on the grid nodes".into()));
    }
    Ok(())
}

fn check_unit_k3(ens: &CharacteristicEnsemble, params: &Params) -> Result<()> {
    if ens.k3 != 1.0 || params.k3 != 1.0 {
        return Err(Error::InvalidArgument("Lagrangian force is defined for k3 = 1".into()));
    }
    Ok(())
}

/// Label-space source `g = (k2/2 V^2 + k1/2 U^2) y_xi + (3 - k1)/2 U_xi^2 / y_xi`.
fn label_source(ens: &CharacteristicEnsemble, idx: usize, params: &Params) -> Result<Vec<f64>> {
    let Params { k1, k2, .. } = *params;
    let (u, v, uxi, q) = (&ens.u[idx], &ens.v[idx], &ens.u_xi[idx], &ens.y_xi[idx]);
    (0..ens.labels())
        .map(|j| {
            if q[j] < 1e-6 {
                return Err(Error::SingularJacobian { label: j, value: q[j] });
            }
            Ok((0.5 * k2 * v[j] * v[j] + 0.5 * k1 * u[j] * u[j]) * q[j]
                + 0.5 * (3.0 - k1) * uxi[j] * uxi[j] / q[j])
        })
        .collect()
}

/// `int_{xi}^{xi + L} K(y(eta) - y(xi)) g(eta) d eta` at every label.
fn label_convolution<K>(ens: &CharacteristicEnsemble, idx: usize, g: &[f64], kernel: K) -> Vec<f64>
where
    K: Fn(f64, f64) -> f64 + Sync,
{
    let n = ens.labels();
    let l = ens.grid.length();
    let w = gregory_weights(n, ens.grid.dx());
    let y = &ens.y[idx];
    (0..n)
        .into_par_iter()
        .map(|i| {
            (0..=n)
                .map(|j| {
                    let src = (i + j) % n;
                    let lift = if i + j >= n { l } else { 0.0 };
                    let z = (y[src] + lift - y[i]).clamp(0.0, l);
                    w[j] * kernel(z, l) * g[src]
                })
                .sum()
        })
        .collect()
}

/// The nonlocal force in label coordinates at sample `idx`; equals
/// `dU/dt` when `k3 = 1`.
pub fn tilde_f(ens: &CharacteristicEnsemble, idx: usize, params: &Params) -> Result<Vec<f64>> {
    check_unit_k3(ens, params)?;
    check_node_labels(ens)?;
    let g = label_source(ens, idx, params)?;
    Ok(label_convolution(ens, idx, &g, green_derivative_on_cell))
}

/// `d/dxi` of [`tilde_f`]: `g(xi) - y_xi int G(y(eta) - y(xi)) g(eta) d eta`.
pub fn tilde_f_xi(ens: &CharacteristicEnsemble, idx: usize, params: &Params) -> Result<Vec<f64>> {
    check_unit_k3(ens, params)?;
    check_node_labels(ens)?;
    let g = label_source(ens, idx, params)?;
    let conv = label_convolution(ens, idx, &g, green_on_cell);
    let q = &ens.y_xi[idx];
    Ok((0..g.len()).map(|i| g[i] - q[i] * conv[i]).collect())
}

/// Eighth-order centered difference of periodic samples with spacing `h`.
pub fn periodic_fd8(values: &[f64], h: f64) -> Vec<f64> {
    const C: [f64; 4] = [4.0 / 5.0, -1.0 / 5.0, 4.0 / 105.0, -1.0 / 280.0];
    let n = values.len();
    (0..n)
        .map(|i| {
            C.iter()
                .enumerate()
                .map(|(k, c)| {
                    let s = k + 1;
                    c * (values[(i + s) % n] - values[(i + n - s % n) % n])
                })
                .sum::<f64>()
                / h
        })
        .collect()
}

/// The Eulerian force at `X = -y` for every label, through the field's
/// trigonometric interpolant.
pub fn eulerian_force_at_labels(ens: &CharacteristicEnsemble, idx: usize, force: &Field) -> Vec<f64> {
    let it = force.interpolant();
    ens.y[idx].iter().map(|&y| it.eval(-ens.k3 * y)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IdentityReport {
    /// `max |y - xi - int_0^t U|`.
    pub position: f64,
    /// `max |y_xi - 1 - int_0^t U_xi|`.
    pub jacobian: f64,
}

/// Checks `y = xi + int U` and `y_xi = 1 + int U_xi` by Hermite quadrature
/// of the sampled integrands.
pub fn integral_identities(ens: &CharacteristicEnsemble) -> IdentityReport {
    let m = ens.labels();
    let mut int_u = vec![0.0; m];
    let mut int_uxi = vec![0.0; m];
    let (mut position, mut jacobian): (f64, f64) = (0.0, 0.0);
    for k in 1..ens.len() {
        let dt = ens.times[k] - ens.times[k - 1];
        for j in 0..m {
            int_u[j] += 0.5 * dt * (ens.u[k - 1][j] + ens.u[k][j])
                + dt * dt / 12.0 * (ens.u_t[k - 1][j] - ens.u_t[k][j]);
            int_uxi[j] += 0.5 * dt * (ens.u_xi[k - 1][j] + ens.u_xi[k][j])
                + dt * dt / 12.0 * (ens.u_xi_t[k - 1][j] - ens.u_xi_t[k][j]);
            position = position.max((ens.y[k][j] - ens.xi[j] - int_u[j]).abs());
            jacobian = jacobian.max((ens.y_xi[k][j] - 1.0 - int_uxi[j]).abs());
        }
    }
    IdentityReport { position, jacobian }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{Controls, Model, State};

    fn constant_series(grid: &Grid, times: &[f64], c: f64) -> FieldSeries {
        FieldSeries::new(
            times.to_vec(),
            vec![Field::constant(grid, c); times.len()],
            vec![Field::zeros(grid); times.len()],
        )
        .unwrap()
    }

    #[test]
    fn still_and_uniform_flows() {
        let g = Grid::new(40.0, 64).unwrap();
        let times = [0.0, 0.25, 0.5];
        let labels = node_labels(&g);
        let ens = evolve_characteristics(&constant_series(&g, &times, 0.0), None, 1.0, &labels, 2).unwrap();
        assert!(ens.y.iter().all(|row| row == &labels));
        assert!(ens.y_xi.iter().flatten().all(|&q| q == 1.0));

        let ens = evolve_characteristics(&constant_series(&g, &times, 0.3), None, 2.0, &labels, 2).unwrap();
        for (t, row) in times.iter().zip(&ens.y) {
            for (y, x) in row.iter().zip(&labels) {
                assert!((y - x - 0.3 * t).abs() < 1e-13);
            }
        }
        assert!(ens.y_xi.iter().flatten().all(|&q| (q - 1.0).abs() < 1e-14));
    }

    #[test]
    fn zero_state_force_vanishes() {
        let g = Grid::new(40.0, 64).unwrap();
        let times = [0.0, 0.1];
        let ens = evolve_characteristics(&constant_series(&g, &times, 0.0), None, 1.0, &node_labels(&g), 1).unwrap();
        let p = Params::case_i(2.0).unwrap();
        assert!(tilde_f(&ens, 1, &p).unwrap().iter().all(|&v| v == 0.0));
        assert!(tilde_f_xi(&ens, 1, &p).unwrap().iter().all(|&v| v == 0.0));
        let p3 = Params::case_ii(2.0).unwrap();
        assert!(tilde_f(&ens, 1, &p3).is_err());
    }

    #[test]
    fn lagrangian_force_matches_eulerian() {
        let g = Grid::new(40.0, 256).unwrap();
        let p = Params::case_ii(1.0).unwrap();
        let model = Model::new(&g, p);
        let u0 = Field::from_fn(&g, |x| 0.8 * (-x * x / 4.0).exp());
        let r0 = Field::from_fn(&g, |x| 0.4 * (-(x - 1.0) * (x - 1.0) / 3.0).exp());
        let run = model
            .simulate(&State::new(0.0, u0, r0).unwrap(), 0.3, &Controls::default())
            .unwrap();
        let ens = characteristics_of(&run.trajectory, 1.0, 1).unwrap();
        let idx = ens.len() - 1;
        let f = tilde_f(&ens, idx, &p).unwrap();
        let eul = eulerian_force_at_labels(
            &ens,
            idx,
            &model.force(run.trajectory.u.value(idx), run.trajectory.rho.value(idx)),
        );
        let dev = f.iter().zip(&eul).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(dev < 1e-5, "{dev}");
        let dev = f.iter().zip(&ens.u_t[idx]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(dev < 1e-5, "{dev}");

        let fxi = tilde_f_xi(&ens, idx, &p).unwrap();
        let fd = periodic_fd8(&f, g.dx());
        let scale = fxi.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let dev = fxi.iter().zip(&fd).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(dev <= 1e-4 * scale, "{dev} vs {scale}");

        assert!(ens.labels_ordered());
        assert!(ens.jacobian_route_gap() < 1e-6);
    }

    #[test]
    fn fd8_differentiates_sine() {
        let g = Grid::new(2.0 * std::f64::consts::PI, 64).unwrap();
        let s: Vec<f64> = g.nodes().iter().map(|x| x.sin()).collect();
        let d = periodic_fd8(&s, g.dx());
        for (x, v) in g.nodes().iter().zip(&d) {
            assert!((v - x.cos()).abs() < 1e-9);
        }
    }
}
