//! Discrete Littlewood-Paley decomposition and Besov/Sobolev norms.
//!
//! The low cutoff `chi` equals 1 on `|xi| <= 1` and vanishes for
//! `|xi| >= 4/3`; the annulus bump is `phi(xi) = chi(xi/2) - chi(xi)`,
//! supported in `1 <= |xi| <= 8/3`. Blocks are `Delta_{-1} = chi(D)`,
//! `Delta_j = phi(2^{-j} D)` for `j >= 0`, and zero below `-1`.

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Field, Grid};

/// Smooth step rising from 0 at `t <= 0` to 1 at `t >= 1`.
pub fn smooth_step(t: f64) -> f64 {
    fn flat(t: f64) -> f64 {
        if t <= 0.0 {
            0.0
        } else {
            (-1.0 / t).exp()
        }
    }
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        let a = flat(t);
        a / (a + flat(1.0 - t))
    }
}

/// Low-frequency cutoff.
pub fn chi(xi: f64) -> f64 {
    1.0 - smooth_step(3.0 * (xi.abs() - 1.0))
}

/// Annulus bump.
pub fn phi(xi: f64) -> f64 {
    chi(0.5 * xi) - chi(xi)
}

/// Block multipliers tabulated on a grid's wavenumbers.
#[derive(Clone, Debug)]
pub struct DyadicPartition {
    grid: Grid,
    chi: Vec<f64>,
    /// `blocks[j + 1]` holds the multiplier of `Delta_j`, `j = -1..=j_max`.
    blocks: Vec<Vec<f64>>,
    j_max: i32,
}

impl DyadicPartition {
    pub fn new(grid: &Grid) -> Self {
        let xi = grid.wavenumbers();
        let xi_max = grid.xi_max();
        // Block j is nonzero only where |xi| > 2^j.
        let mut j_max = -1;
        while 2f64.powi(j_max + 1) < xi_max {
            j_max += 1;
        }
        let chi_tab: Vec<f64> = xi.iter().map(|&k| chi(k)).collect();
        let mut blocks = vec![chi_tab.clone()];
        for j in 0..=j_max {
            let scale = 2f64.powi(-j);
            blocks.push(xi.iter().map(|&k| phi(scale * k)).collect());
        }
        Self {
            grid: grid.clone(),
            chi: chi_tab,
            blocks,
            j_max,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn chi(&self) -> &[f64] {
        &self.chi
    }

    /// Largest block index with support on the grid.
    pub fn j_max(&self) -> i32 {
        self.j_max
    }

    /// Multiplier of `Delta_j`, or `None` outside `-1..=j_max`.
    pub fn block_multiplier(&self, j: i32) -> Option<&[f64]> {
        if j < -1 || j > self.j_max {
            None
        } else {
            Some(&self.blocks[(j + 1) as usize])
        }
    }

    /// `max_k |chi(xi_k) + sum_j phi(2^{-j} xi_k) - 1|`.
    pub fn unity_residual(&self) -> f64 {
        (0..self.grid.n())
            .map(|i| {
                let total: f64 = self.blocks.iter().map(|b| b[i]).sum();
                (total - 1.0).abs()
            })
            .fold(0.0, f64::max)
    }

    /// The dyadic block `Delta_j f`.
    pub fn block(&self, f: &Field, j: i32) -> Field {
        match self.block_multiplier(j) {
            None => Field::zeros(f.grid()),
            Some(m) => f.with_multiplier(|i| Complex64::new(m[i], 0.0)),
        }
    }

    /// All blocks `j = -1..=j_max`, computed from one forward transform.
    pub fn blocks(&self, f: &Field) -> Vec<Field> {
        let coeffs = f.spectrum();
        self.blocks
            .iter()
            .map(|m| {
                let c = coeffs.iter().zip(m).map(|(c, w)| c * w).collect();
                Field::from_raw(f.grid(), self.grid.synthesize(c))
            })
            .collect()
    }

    /// `S_j f = sum_{j' < j} Delta_{j'} f`, i.e. the multiplier `chi(2^{-j} xi)`.
    pub fn lowpass(&self, f: &Field, j: i32) -> Field {
        if j <= -1 {
            return Field::zeros(f.grid());
        }
        let scale = 2f64.powi(-j);
        let grid = f.grid().clone();
        f.with_multiplier(|i| Complex64::new(chi(scale * grid.wavenumber(i)), 0.0))
    }
}

/// Free-function form of [`DyadicPartition::new`].
pub fn build_partition(grid: &Grid) -> DyadicPartition {
    DyadicPartition::new(grid)
}

/// Free-function form of [`DyadicPartition::block`].
pub fn lp_block(f: &Field, j: i32, partition: &DyadicPartition) -> Field {
    partition.block(f, j)
}

pub mod exponent {
    use serde::de::{self, Deserializer, Visitor};
    use serde::Serializer;
    use std::fmt;

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = f64;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a number or \"inf\"")
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> Result<f64, E> {
                Ok(v)
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> Result<f64, E> {
                Ok(v as f64)
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> Result<f64, E> {
                Ok(v as f64)
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<f64, E> {
                match v {
                    "inf" | "infinity" | "Infinity" => Ok(f64::INFINITY),
                    other => other.parse().map_err(E::custom),
                }
            }
        }
        d.deserialize_any(V)
    }
}

/// Indices `(s, p, r)` of `B^s_{p,r}`; `p` and `r` may be infinite.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BesovSpec {
    pub s: f64,
    #[serde(with = "exponent")]
    pub p: f64,
    #[serde(with = "exponent")]
    pub r: f64,
}

impl BesovSpec {
    pub fn new(s: f64, p: f64, r: f64) -> Result<Self> {
        let spec = Self { s, p, r };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.s.is_finite() {
            return Err(Error::InvalidArgument("s must be finite".into()));
        }
        if !(self.p >= 1.0) || !(self.r >= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "p and r must be >= 1, got p = {}, r = {}",
                self.p, self.r
            )));
        }
        Ok(())
    }
}

/// Weight of block `j` at regularity `s`; the low block `j = -1` carries weight 1.
pub fn block_weight(j: i32, s: f64) -> f64 {
    2f64.powf(j.max(0) as f64 * s)
}

fn lr_aggregate(terms: impl Iterator<Item = f64>, r: f64) -> f64 {
    if r.is_infinite() {
        terms.fold(0.0, f64::max)
    } else {
        terms.map(|t| t.powf(r)).sum::<f64>().powf(1.0 / r)
    }
}

/// `L^p` norms of every block, indexed from `j = -1`.
pub fn block_norms(f: &Field, p: f64, partition: &DyadicPartition) -> Vec<f64> {
    partition.blocks(f).iter().map(|b| b.lp_norm(p)).collect()
}

/// `|| (2^{js} ||Delta_j f||_{L^p})_j ||_{l^r}` over `j = -1..=j_max`.
pub fn besov_norm(f: &Field, spec: BesovSpec, partition: &DyadicPartition) -> f64 {
    let norms = block_norms(f, spec.p, partition);
    lr_aggregate(
        norms
            .iter()
            .enumerate()
            .map(|(idx, n)| block_weight(idx as i32 - 1, spec.s) * n),
        spec.r,
    )
}

/// `(L sum_k (1 + xi_k^2)^s |c_k|^2)^{1/2}`.
pub fn sobolev_norm(f: &Field, s: f64) -> f64 {
    let grid = f.grid();
    let sum: f64 = f
        .spectrum()
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let k = grid.wavenumber(i);
            (1.0 + k * k).powf(s) * c.norm_sqr()
        })
        .sum();
    (grid.length() * sum).sqrt()
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct InterpolationReport {
    pub lhs: f64,
    pub rhs: f64,
    pub violated: bool,
}

/// Compares `||f||_{B^{theta s1 + (1-theta) s2}}` with
/// `||f||_{B^{s1}}^theta ||f||_{B^{s2}}^{1-theta}`.
pub fn check_interpolation(
    f: &Field,
    s1: f64,
    s2: f64,
    theta: f64,
    p: f64,
    r: f64,
    partition: &DyadicPartition,
) -> Result<InterpolationReport> {
    if !(s1 < s2) {
        return Err(Error::InvalidArgument("need s1 < s2".into()));
    }
    if !(theta > 0.0 && theta < 1.0) {
        return Err(Error::InvalidArgument("theta must lie in (0, 1)".into()));
    }
    let norm = |s: f64| -> Result<f64> { Ok(besov_norm(f, BesovSpec::new(s, p, r)?, partition)) };
    let lhs = norm(theta * s1 + (1.0 - theta) * s2)?;
    let rhs = norm(s1)?.powf(theta) * norm(s2)?.powf(1.0 - theta);
    Ok(InterpolationReport {
        lhs,
        rhs,
        violated: lhs > rhs * (1.0 + 1e-10),
    })
}
