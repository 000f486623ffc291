use std::f64::consts::PI;

use bfamily::blowup::{check_criterion, compute_b, BForm};
use bfamily::dynamics::{Model, Params, State};
use bfamily::grid::{Field, Grid};
use bfamily::helmholtz::HelmholtzOperator;
use bfamily::littlewood_paley::{besov_norm, check_interpolation, BesovSpec, DyadicPartition};
use bfamily::picard::{picard_iterate, solve_linear_transport, uniform_mesh, PicardSettings};
use bfamily::trajectory::FieldSeries;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Sum of low Fourier modes `(a_k cos + b_k sin)(2 pi k (x - x0) / L)`.
fn modal(grid: &Grid, coeffs: &[(f64, f64)], offset: f64) -> Field {
    let base = 2.0 * PI / grid.length();
    let x0 = grid.origin();
    Field::from_fn(grid, |x| {
        offset
            + coeffs
                .iter()
                .enumerate()
                .map(|(k, (a, b))| {
                    let th = base * (k + 1) as f64 * (x - x0);
                    a * th.cos() + b * th.sin()
                })
                .sum::<f64>()
    })
}

fn config(cases: u32) -> ProptestConfig {
    ProptestConfig {
        cases,
        failure_persistence: None,
        ..ProptestConfig::default()
    }
}

fn coeffs(max_modes: usize) -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1..=max_modes)
}

fn params() -> impl Strategy<Value = Params> {
    (-2.0f64..4.0, -3.0f64..3.0, -2.0f64..2.0).prop_map(|(a, b, c)| Params::new(a, b, c).unwrap())
}

proptest! {
    #![proptest_config(config(48))]

    #[test]
    fn derivative_has_zero_mean(c in coeffs(8), off in -2.0f64..2.0) {
        let g = Grid::new(2.0 * PI, 64).unwrap();
        let f = modal(&g, &c, off);
        prop_assert!(f.derivative().integrate().abs() < 1e-12);
        prop_assert!((f.integrate() - 2.0 * PI * off).abs() < 1e-12);
    }

    #[test]
    fn helmholtz_inverse_inverts(c in coeffs(10)) {
        let g = Grid::new(40.0, 128).unwrap();
        let h = HelmholtzOperator::new(&g);
        let f = modal(&g, &c, 0.3);
        let p = h.helmholtz_inv(&f).unwrap();
        let back = &p - &p.second_derivative();
        prop_assert!(back.max_diff(&f) < 1e-12);
        let dx_route = h.helmholtz_inv(&f).unwrap().derivative();
        prop_assert!(dx_route.max_diff(&h.dx_helmholtz_inv(&f).unwrap()) < 1e-13);
    }

    #[test]
    fn density_rate_forms_agree(c in coeffs(6), d in coeffs(6), p in params()) {
        let g = Grid::new(2.0 * PI, 64).unwrap();
        let model = Model::new(&g, p);
        let s = State::new(0.0, modal(&g, &c, 0.0), modal(&g, &d, 0.5)).unwrap();
        let rates = model.rhs(&s).unwrap();
        prop_assert!(rates.drho.max_diff(&model.rho_rate_product_rule(&s)) < 1e-10);
    }

    #[test]
    fn momentum_form_is_consistent(c in coeffs(6), d in coeffs(6), p in params()) {
        let g = Grid::new(2.0 * PI, 64).unwrap();
        let model = Model::new(&g, p);
        let s = State::new(0.0, modal(&g, &c, 0.1), modal(&g, &d, 0.0)).unwrap();
        let lhs = model.momentum_from_rhs(&model.rhs(&s).unwrap());
        let rhs = model.rhs_momentum(&s).unwrap();
        prop_assert!(lhs.max_diff(&rhs) < 1e-8);
    }

    #[test]
    fn zero_density_stays_zero(c in coeffs(6), p in params()) {
        let g = Grid::new(2.0 * PI, 64).unwrap();
        let model = Model::new(&g, p);
        let s = State::new(0.0, modal(&g, &c, 0.0), Field::zeros(&g)).unwrap();
        prop_assert_eq!(model.rhs(&s).unwrap().drho.max_abs(), 0.0);
    }

    #[test]
    fn transport_is_linear(c in coeffs(4), d in coeffs(4), e in coeffs(4), alpha in -2.0f64..2.0) {
        let g = Grid::new(2.0 * PI, 32).unwrap();
        let times = uniform_mesh(0.2, 0.02).unwrap();
        let a = FieldSeries::new(
            times.clone(),
            vec![modal(&g, &c, 0.0).scale(0.3); times.len()],
            vec![Field::zeros(&g); times.len()],
        ).unwrap();
        let src = |f: &Field| FieldSeries::new(
            times.clone(),
            vec![f.clone(); times.len()],
            vec![Field::zeros(&g); times.len()],
        ).unwrap();
        let f1 = modal(&g, &d, 0.0);
        let f2 = modal(&g, &e, 0.2);
        let g1 = src(&f2.scale(0.5));
        let g2 = src(&f1);
        let s1 = solve_linear_transport(&a, &g1, &f1, 0.3).unwrap();
        let s2 = solve_linear_transport(&a, &g2, &f2, 0.3).unwrap();
        let combo_g = src(&(&f2.scale(0.5) + &f1.scale(alpha)));
        let combo = solve_linear_transport(&a, &combo_g, &(&f1 + &f2.scale(alpha)), 0.3).unwrap();
        let expected = s1.last() + &s2.last().scale(alpha);
        prop_assert!(combo.last().max_diff(&expected) < 1e-10);
    }

    #[test]
    fn besov_norm_is_monotone_in_s(c in coeffs(12), s1 in -1.0f64..2.0, ds in 0.0f64..2.0, r in 1.0f64..4.0) {
        let g = Grid::new(40.0, 256).unwrap();
        let part = DyadicPartition::new(&g);
        let f = modal(&g, &c, 0.2);
        let a = besov_norm(&f, BesovSpec::new(s1, 2.0, r).unwrap(), &part);
        let b = besov_norm(&f, BesovSpec::new(s1 + ds, 2.0, r).unwrap(), &part);
        prop_assert!(a <= b * (1.0 + 1e-12));
    }

    #[test]
    fn interpolation_holds(c in coeffs(30), s1 in -1.0f64..1.0, ds in 0.1f64..2.0, theta in 0.05f64..0.95) {
        let g = Grid::new(40.0, 256).unwrap();
        let part = DyadicPartition::new(&g);
        let f = modal(&g, &c, 0.0);
        let rep = check_interpolation(&f, s1, s1 + ds, theta, 2.0, 1.0, &part).unwrap();
        prop_assert!(!rep.violated);
    }

    #[test]
    fn compute_b_is_monotone(e in 0.0f64..10.0, m in 0.0f64..5.0, l1 in 0.0f64..5.0, k2 in 0.1f64..5.0, bump in 0.0f64..1.0) {
        for form in [BForm::Squared, BForm::Linear] {
            let base = compute_b(e, m, l1, k2, form).unwrap();
            prop_assert!(base >= 0.0);
            prop_assert!(compute_b(e + bump, m, l1, k2, form).unwrap() >= base);
            prop_assert!(compute_b(e, m + bump, l1, k2, form).unwrap() >= base);
            prop_assert!(compute_b(e, m, l1 + bump, k2, form).unwrap() >= base);
            prop_assert!(compute_b(e, m, l1, k2 + bump, form).unwrap() >= base);
        }
    }

    #[test]
    fn criterion_follows_translation(c in coeffs(5), shift in 0usize..64, b in 0.0f64..2.0) {
        let g = Grid::new(2.0 * PI, 64).unwrap();
        let f = modal(&g, &c, 0.0);
        let mut rolled = f.values().to_vec();
        rolled.rotate_right(shift);
        let shifted = Field::new(&g, rolled).unwrap();
        let a = check_criterion(&f, b).unwrap();
        let s = check_criterion(&shifted, b).unwrap();
        prop_assert_eq!(a.met, s.met);
        prop_assert!((a.m0 - s.m0).abs() < 1e-12);
        if let (Some(i), Some(j)) = (a.witness, s.witness) {
            // ties may pick a different leftmost node after wrapping; compare values there
            let ux = shifted.derivative();
            prop_assert!((ux.values()[(i + shift) % 64] - ux.values()[j]).abs() < 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(config(8))]

    #[test]
    fn picard_keeps_zero_density(c in coeffs(3)) {
        let g = Grid::new(40.0, 128).unwrap();
        let u0 = modal(&g, &c, 0.0).scale(0.05);
        let run = picard_iterate(&u0, &Field::zeros(&g), Params::case_i(2.0).unwrap(), PicardSettings::new(3, 0.05)).unwrap();
        let part = DyadicPartition::new(&g);
        for r in &run.records {
            prop_assert!(r.rho.values().iter().all(|f| f.max_abs() == 0.0));
            let seed = part.lowpass(&u0, r.n as i32);
            prop_assert_eq!(r.u.value(0).values(), seed.values());
        }
    }
}

/// Random field with `modes` Fourier modes decaying like `k^-decay`.
fn random_field(grid: &Grid, rng: &mut ChaCha8Rng) -> Field {
    let modes = rng.gen_range(1..=grid.n() / 3);
    let decay = rng.gen_range(0.5..3.0);
    let c: Vec<(f64, f64)> = (1..=modes)
        .map(|k| {
            let w = (k as f64).powf(-decay);
            (w * rng.gen_range(-1.0..1.0), w * rng.gen_range(-1.0..1.0))
        })
        .collect();
    modal(grid, &c, rng.gen_range(-0.5..0.5))
}

fn embedding_ratios(seed: u64, count: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let n = [64usize, 128, 256, 512][rng.gen_range(0..4)];
        let length = rng.gen_range(PI..60.0);
        let g = Grid::new(length, n).unwrap();
        let part = DyadicPartition::new(&g);
        let f = random_field(&g, &mut rng);
        let p = [1.0, 2.0, 4.0][rng.gen_range(0..3)];
        let b = besov_norm(&f, BesovSpec::new(1.0 / p, p, 1.0).unwrap(), &part);
        out.push(f.max_abs() / b);
    }
    out
}

/// Calibration seed maxed out at 0.744; fixed here with 10% headroom.
const EMBEDDING_C: f64 = 0.82;

#[test]
fn embedding_constant_calibration() {
    let cal = embedding_ratios(20_241_016, 200);
    let measured = cal.iter().cloned().fold(0.0, f64::max);
    println!("calibration max ratio {measured:.6}");
    assert!(measured <= EMBEDDING_C);
    let fresh = embedding_ratios(99, 200);
    let worst = fresh.iter().cloned().fold(0.0, f64::max);
    println!("fresh max ratio {worst:.6}");
    assert!(worst <= EMBEDDING_C);
}
