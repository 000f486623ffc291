//! End-corrected trapezoidal quadrature (Gregory rules) for integrands that
//! are smooth on a closed interval but not periodic across it.
//!
//! Convolutions with the periodic Green's function have a kink (or a jump,
//! for its derivative) where source and target coincide. Cutting the cell
//! open at that point leaves a smooth integrand on `[0, L]`, which the
//! corrected rule integrates to high order from equispaced samples.

use std::sync::OnceLock;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

/// Number of corrected nodes at each end; the rule is exact for
/// polynomials of degree below this.
pub const GREGORY_ORDER: usize = 10;

/// Bernoulli numbers `B_0..B_10` as (numerator, denominator).
const BERNOULLI: [(i64, i64); 11] = [
    (1, 1),
    (-1, 2),
    (1, 6),
    (0, 1),
    (-1, 30),
    (0, 1),
    (1, 42),
    (0, 1),
    (-1, 30),
    (0, 1),
    (5, 66),
];

fn rational(num: i64, den: i64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

/// Additive corrections `a_j`, `j < order`, to unit weights at the left end.
///
/// Chosen so that `sum_j a_j j^d` cancels the left-end Euler-Maclaurin term
/// of `x^d` for every `d < order`; solved exactly in rational arithmetic.
fn end_corrections(order: usize) -> Vec<f64> {
    assert!(order >= 1 && order < BERNOULLI.len());
    // Right-hand side: -1/2 for d = 0, B_{d+1}/(d+1) for odd d, else 0.
    let rhs: Vec<BigRational> = (0..order)
        .map(|d| {
            if d == 0 {
                rational(-1, 2)
            } else if d % 2 == 1 {
                let (num, den) = BERNOULLI[d + 1];
                rational(num, den * (d as i64 + 1))
            } else {
                BigRational::zero()
            }
        })
        .collect();
    // Vandermonde rows: j^d, d = row.
    let mut a: Vec<Vec<BigRational>> = (0..order)
        .map(|d| {
            (0..order)
                .map(|j| {
                    if d == 0 {
                        BigRational::one()
                    } else {
                        BigRational::from_integer(BigInt::from(j).pow(d as u32))
                    }
                })
                .collect()
        })
        .collect();
    let mut b = rhs;
    for col in 0..order {
        let pivot = (col..order)
            .find(|&r| !a[r][col].is_zero())
            .expect("Vandermonde system is nonsingular");
        a.swap(col, pivot);
        b.swap(col, pivot);
        for r in 0..order {
            if r == col || a[r][col].is_zero() {
                continue;
            }
            let factor = &a[r][col] / &a[col][col];
            for c in col..order {
                let delta = &factor * &a[col][c];
                a[r][c] -= delta;
            }
            let delta = &factor * &b[col];
            b[r] -= delta;
        }
    }
    (0..order)
        .map(|i| {
            let x = &b[i] / &a[i][i];
            let sign = if x.is_negative() { -1.0 } else { 1.0 };
            sign * x.abs().to_f64().unwrap_or(f64::NAN)
        })
        .collect()
}

fn cached_corrections() -> &'static [f64] {
    static CORRECTIONS: OnceLock<Vec<f64>> = OnceLock::new();
    CORRECTIONS.get_or_init(|| end_corrections(GREGORY_ORDER))
}

/// Weights for `n + 1` equispaced samples `x_0..x_n` of spacing `h`.
///
/// Requires `n >= 2 * GREGORY_ORDER` so the two end corrections do not overlap.
pub fn gregory_weights(n: usize, h: f64) -> Vec<f64> {
    let corr = cached_corrections();
    assert!(
        n >= 2 * corr.len(),
        "Gregory rule needs at least {} intervals",
        2 * corr.len()
    );
    let mut w = vec![h; n + 1];
    for (j, a) in corr.iter().enumerate() {
        w[j] += h * a;
        w[n - j] += h * a;
    }
    w
}

/// Integral of samples `f_0..f_n` (spacing `h`) with the corrected rule.
pub fn gregory(samples: &[f64], h: f64) -> f64 {
    let n = samples.len() - 1;
    gregory_weights(n, h)
        .iter()
        .zip(samples)
        .map(|(w, f)| w * f)
        .sum()
}
