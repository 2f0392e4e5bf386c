use jdx_core::blockjacobi::{inner, StateSequence};
use jdx_core::darboux::intertwining_residuals;
use jdx_core::harness::scalar_darboux;
use jdx_core::hermite2ch::Application;
use jdx_core::intertwine::{apply_l, apply_ldag};
use jdx_core::seeds::{Parity, SeedSolution};
use jdx_core::smallmat::{anti_hermitian_defect, commutator, max_norm, real_symmetric_defect, CVector};
use num_complex::Complex64;
use proptest::prelude::*;

const NMAX: usize = 60;

fn parity() -> impl Strategy<Value = Parity> {
    prop_oneof![Just(Parity::Even), Just(Parity::Odd)]
}

fn lambda() -> impl Strategy<Value = f64> {
    -3.0..-0.05_f64
}

fn state(len: usize) -> impl Strategy<Value = StateSequence> {
    prop::collection::vec((-1.0..1.0_f64, -1.0..1.0_f64, -1.0..1.0_f64, -1.0..1.0_f64), len).prop_map(move |xs| {
        let mut values: Vec<CVector> = xs
            .into_iter()
            .map(|(a, b, c, d)| CVector::from_vec(vec![Complex64::new(a, b), Complex64::new(c, d)]))
            .collect();
        // finitely supported: the last site stays empty
        if let Some(last) = values.last_mut() {
            *last = CVector::zeros(2);
        }
        StateSequence::new(2, values)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn structure_holds_for_any_negative_pair(l1 in lambda(), l2 in lambda(), p in parity()) {
        let app = Application::build(l1, l2, p, NMAX).unwrap();
        let dx = app.darboux();
        let s0 = dx.sigma(0).unwrap();
        for n in 0..app.rows() {
            let s = dx.sigma(n).unwrap();
            prop_assert!(max_norm(&commutator(&s0, &s)) <= 1e-12 * max_norm(&s0) * max_norm(&s));
        }
        let co = app.coeffs();
        for m in co.a.iter().chain(&co.b) {
            prop_assert!(anti_hermitian_defect(m) <= 1e-10);
        }
        let tc = app.transformed();
        for n in 0..app.rows() {
            prop_assert!(real_symmetric_defect(&tc.dt[n]) <= 1e-10);
            prop_assert!(real_symmetric_defect(&tc.qt[n]) <= 1e-10);
        }
    }

    #[test]
    fn intertwining_holds(l1 in lambda(), l2 in lambda(), p in parity()) {
        let app = Application::build(l1, l2, p, NMAX).unwrap();
        for n in 0..app.rows() - 1 {
            let r = intertwining_residuals(app.darboux().op(), app.coeffs(), app.transformed(), n);
            prop_assert!(r.iter().all(|&x| x <= 1e-9), "n = {n}: {r:?}");
        }
    }

    #[test]
    fn swapping_energies_flips_minus_components(l1 in lambda(), l2 in lambda(), p in parity()) {
        let fwd = Application::build(l1, l2, p, NMAX).unwrap();
        let rev = Application::build(l2, l1, p, NMAX).unwrap();
        for m in 0..fwd.rows() {
            let (a, b) = (fwd.darboux().closed_ab(m).unwrap(), rev.darboux().closed_ab(m).unwrap());
            let tol = 1e-10 * (1.0 + a.a_plus.abs() + a.b_plus.abs());
            prop_assert!((a.a_plus - b.a_plus).abs() <= tol);
            prop_assert!((a.b_plus - b.b_plus).abs() <= tol);
            prop_assert!((a.a_minus + b.a_minus).abs() <= tol);
            prop_assert!((a.b_minus + b.b_minus).abs() <= tol);
        }
    }

    #[test]
    fn channels_decouple_into_scalar_transforms(l1 in lambda(), l2 in lambda(), p in parity()) {
        let app = Application::build(l1, l2, p, NMAX).unwrap();
        let rows = app.rows();
        let d: Vec<f64> = (0..=rows + 1).map(|m| app.chain().d(app.site(m))).collect();
        let q: Vec<f64> = (0..=rows + 1).map(|m| app.chain().q(app.site(m))).collect();
        let scalar = [l1, l2].map(|l| {
            let seed = SeedSolution::hermite(l, p, app.site(rows + 1)).unwrap();
            scalar_darboux(&d, &q, seed.chain_values(), rows).unwrap()
        });
        for m in 0..rows {
            let ab = app.darboux().closed_ab(m).unwrap();
            for (sign, s) in [(1.0, &scalar[0]), (-1.0, &scalar[1])] {
                let (dt, qt) = s[m];
                prop_assert!((ab.a_plus + sign * ab.a_minus - dt).abs() <= 1e-10 * dt.abs().max(1.0));
                prop_assert!((ab.b_plus + sign * ab.b_minus - (qt - q[m])).abs() <= 1e-10 * (qt - q[m]).abs().max(1.0));
            }
        }
    }

    #[test]
    fn l_dagger_is_the_adjoint(l1 in lambda(), l2 in lambda(), p in parity(), psi in state(20), phi in state(20)) {
        let app = Application::build(l1, l2, p, NMAX).unwrap();
        let lhs = inner(&phi, &apply_l(app.coeffs(), &psi).unwrap()).unwrap();
        let rhs = inner(&apply_ldag(app.coeffs(), &phi).unwrap(), &psi).unwrap();
        prop_assert!((lhs - rhs).norm() <= 1e-10 * lhs.norm().max(1.0));
    }

    #[test]
    fn scattering_states_map_to_solutions(l1 in lambda(), l2 in lambda(), p in parity(), e in 0.1..5.0_f64, ch in 1usize..=2) {
        let app = Application::build(l1, l2, p, NMAX).unwrap();
        let tpsi = app.transform_state(e, ch).unwrap();
        for m in 0..app.rows() {
            prop_assert!(app.transformed_residual(&tpsi, e, m) <= 1e-8);
        }
    }
}

#[test]
fn degenerate_pair_has_no_coupling() {
    for p in [Parity::Even, Parity::Odd] {
        let app = Application::build(-1.3, -1.3, p, 120).unwrap();
        for row in app.potential_table().unwrap() {
            assert_eq!((row.a_minus, row.b_minus), (0.0, 0.0), "n = {}", row.n);
        }
    }
}

#[test]
fn potential_table_rows_follow_parity() {
    let app = Application::build(-0.5, -1.0, Parity::Odd, 41).unwrap();
    let rows = app.potential_table().unwrap();
    assert_eq!(rows.len(), 21);
    assert!(rows.iter().all(|r| r.n % 2 == 1));
    assert_eq!(rows.last().unwrap().n, 41);
}
