mod common;

use brm_core::qp::verify_representation;
use brm_core::{solve_pi_sigma, CovModel, IndexSet};
use proptest::prelude::*;

fn instance() -> impl Strategy<Value = (CovModel, Vec<f64>, u64)> {
    (2usize..=5, any::<u64>()).prop_map(|(d, seed)| {
        let mut rng = common::rng(seed);
        let m = common::random_model(&mut rng, d);
        let a = common::random_a(&mut rng, d);
        (m, a, seed)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn agrees_with_brute_force((m, a, _) in instance()) {
        let s = solve_pi_sigma(&m, &a).unwrap();
        let o = common::qp_oracle(m.sigma(), &a);
        prop_assert_eq!(s.index_i.as_slice(), &o.index_i[..]);
        prop_assert!((s.value - o.value).abs() <= 1e-10 * (1.0 + o.value));
    }

    #[test]
    fn kkt_and_optimality((m, a, seed) in instance()) {
        let s = solve_pi_sigma(&m, &a).unwrap();
        let d = a.len();
        for j in 0..d {
            prop_assert!(s.a_tilde[j] >= a[j] - 1e-9);
            prop_assert!(s.lambda[j] >= 0.0);
            if s.index_i.contains(j) {
                prop_assert!((s.a_tilde[j] - a[j]).abs() <= 1e-9 * (1.0 + a[j].abs()));
            } else {
                prop_assert_eq!(s.lambda[j], 0.0);
            }
        }
        // feasible perturbations never do better
        let mut rng = common::rng(seed ^ 0x5eed);
        for _ in 0..20 {
            let x: Vec<f64> = s.a_tilde.iter().zip(&a).map(|(t, a)| {
                let base = t.max(*a);
                base + rand::Rng::random_range(&mut rng, 0.0..0.5)
            }).collect();
            prop_assert!(m.quad_inv(&x) >= s.value - 1e-9 * (1.0 + s.value));
        }
    }

    #[test]
    fn scale_equivariance((m, a, _) in instance(), kappa in 0.1f64..10.0) {
        let s = solve_pi_sigma(&m, &a).unwrap();
        let ka: Vec<f64> = a.iter().map(|x| kappa * x).collect();
        let t = solve_pi_sigma(&m, &ka).unwrap();
        prop_assert_eq!(&s.index_i, &t.index_i);
        prop_assert!((t.value - kappa * kappa * s.value).abs() <= 1e-9 * t.value.max(1.0));
        for (x, y) in s.a_tilde.iter().zip(&t.a_tilde) {
            prop_assert!((kappa * x - y).abs() <= 1e-9 * (1.0 + y.abs()));
        }
    }

    #[test]
    fn time_scale_equivariance((m, a, _) in instance(), t in 0.05f64..20.0) {
        let s = solve_pi_sigma(&m, &a).unwrap();
        let r = solve_pi_sigma(&m.scaled(t), &a).unwrap();
        prop_assert_eq!(&s.index_i, &r.index_i);
        prop_assert!((r.value - s.value / t).abs() <= 1e-9 * (1.0 + r.value));
        for (x, y) in s.a_tilde.iter().zip(&r.a_tilde) {
            prop_assert!((x - y).abs() <= 1e-8 * (1.0 + x.abs()));
        }
    }

    #[test]
    fn representation_on_supersets((m, a, seed) in instance(), extra in any::<u64>()) {
        let s = solve_pi_sigma(&m, &a).unwrap();
        let d = a.len();
        let mut rng = common::rng(seed.wrapping_add(1));
        let x: Vec<f64> = (0..d).map(|_| rand::Rng::random_range(&mut rng, -3.0..3.0)).collect();
        let mask = (extra as usize) & ((1 << d) - 1);
        let f = s.index_i.union(&IndexSet::from_mask(mask as u64, d));
        prop_assert!(verify_representation(&m, &s, &x, &f).unwrap());
    }
}

#[test]
fn all_nonpositive_is_rejected() {
    let m = CovModel::identity(3);
    assert!(matches!(
        solve_pi_sigma(&m, &[0.0, -1.0, -2.0]),
        Err(brm_core::BrmError::AllNonpositive)
    ));
}
