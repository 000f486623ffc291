//! Time-sampled fields with their time derivatives, interpolated in time by
//! cubic Hermite polynomials.

use crate::error::{Error, Result};
use crate::grid::{Field, Grid};

/// Cubic Hermite basis `(h00, h10, h01, h11)` at fraction `s` of an interval.
pub fn hermite_basis(s: f64) -> [f64; 4] {
    let s2 = s * s;
    let s3 = s2 * s;
    [
        2.0 * s3 - 3.0 * s2 + 1.0,
        s3 - 2.0 * s2 + s,
        -2.0 * s3 + 3.0 * s2,
        s3 - s2,
    ]
}

/// A field sampled at increasing times together with `df/dt` at the same times.
#[derive(Clone, Debug)]
pub struct FieldSeries {
    times: Vec<f64>,
    values: Vec<Field>,
    rates: Vec<Field>,
}

impl FieldSeries {
    pub fn new(times: Vec<f64>, values: Vec<Field>, rates: Vec<Field>) -> Result<Self> {
        if times.is_empty() || times.len() != values.len() || times.len() != rates.len() {
            return Err(Error::InvalidArgument(
                "series needs matching, non-empty times, values and rates".into(),
            ));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument("series times must increase".into()));
        }
        let grid = values[0].grid();
        if values.iter().chain(&rates).any(|f| f.grid() != grid) {
            return Err(Error::GridMismatch);
        }
        Ok(Self {
            times,
            values,
            rates,
        })
    }

    /// Identically zero series on the given times.
    pub fn zeros(grid: &Grid, times: &[f64]) -> Self {
        let zero = Field::zeros(grid);
        Self {
            times: times.to_vec(),
            values: vec![zero.clone(); times.len()],
            rates: vec![zero; times.len()],
        }
    }

    pub fn grid(&self) -> &Grid {
        self.values[0].grid()
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[Field] {
        &self.values
    }

    pub fn rates(&self) -> &[Field] {
        &self.rates
    }

    pub fn value(&self, i: usize) -> &Field {
        &self.values[i]
    }

    pub fn rate(&self, i: usize) -> &Field {
        &self.rates[i]
    }

    pub fn last(&self) -> &Field {
        self.values.last().expect("series is non-empty")
    }

    /// Interval index `k` with `t_k <= t <= t_{k+1}`, clamped to the ends.
    pub fn interval(&self, t: f64) -> usize {
        let n = self.times.len();
        if n < 2 {
            return 0;
        }
        match self.times.binary_search_by(|probe| probe.total_cmp(&t)) {
            Ok(i) => i.min(n - 2),
            Err(i) => i.saturating_sub(1).min(n - 2),
        }
    }

    /// Hermite weights `[w_value_k, w_rate_k, w_value_k1, w_rate_k1]` at `t`.
    pub fn weights(&self, k: usize, t: f64) -> [f64; 4] {
        let dt = self.times[k + 1] - self.times[k];
        let [h00, h10, h01, h11] = hermite_basis((t - self.times[k]) / dt);
        [h00, h10 * dt, h01, h11 * dt]
    }

    /// The field at time `t`, Hermite-interpolated inside the sampled range.
    pub fn at(&self, t: f64) -> Field {
        if self.times.len() == 1 {
            return self.values[0].clone();
        }
        let k = self.interval(t);
        let [a, b, c, d] = self.weights(k, t);
        let (f0, r0, f1, r1) = (
            self.values[k].values(),
            self.rates[k].values(),
            self.values[k + 1].values(),
            self.rates[k + 1].values(),
        );
        let out = (0..f0.len())
            .map(|i| a * f0[i] + b * r0[i] + c * f1[i] + d * r1[i])
            .collect();
        Field::from_raw(self.grid(), out)
    }

    /// `max_t max_x |self - other|` over common sample times.
    pub fn max_diff(&self, other: &FieldSeries) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a.max_diff(b))
            .fold(0.0, f64::max)
    }
}

/// Velocity and density histories on shared sample times.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub u: FieldSeries,
    pub rho: FieldSeries,
}

impl Trajectory {
    pub fn new(u: FieldSeries, rho: FieldSeries) -> Result<Self> {
        if u.times() != rho.times() {
            return Err(Error::InvalidArgument(
                "u and rho must share sample times".into(),
            ));
        }
        Ok(Self { u, rho })
    }

    pub fn times(&self) -> &[f64] {
        self.u.times()
    }

    pub fn grid(&self) -> &Grid {
        self.u.grid()
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }
}
