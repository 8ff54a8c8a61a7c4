use deul_core::propagator::{green, solve_multipliers};
use deul_core::spectra::{l2_norm, make_profile, NodeLayout, ProfileKind};
use deul_core::zones::{classify, t_xi};
use deul_core::{Boundary, DampingLaw, Family, Zone, ZoneConfig};
use proptest::prelude::*;

fn law_strategy() -> impl Strategy<Value = DampingLaw> {
    (0.1f64..3.0, 0.0f64..0.95).prop_map(|(mu, lambda)| DampingLaw::new(mu, lambda).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn damping_integral_is_additive(law in law_strategy(), s in 0.0f64..100.0, d1 in 0.0f64..500.0, d2 in 0.0f64..500.0) {
        let r = s + d1;
        let t = r + d2;
        let whole = law.integral_b(s, t).unwrap();
        let parts = law.integral_b(s, r).unwrap() + law.integral_b(r, t).unwrap();
        prop_assert!((whole - parts).abs() <= 1e-12 * whole.abs().max(1.0));
        let whole = law.integral_inv_b(s, t).unwrap();
        let parts = law.integral_inv_b(s, r).unwrap() + law.integral_inv_b(r, t).unwrap();
        prop_assert!((whole - parts).abs() <= 1e-11 * whole.abs().max(1.0));
    }

    #[test]
    fn theta_never_exceeds_gamma(law in law_strategy(), s in 0.0f64..1e3, d in 0.0f64..1e4) {
        let e = law.envelope(s, s + d).unwrap();
        prop_assert!(e.theta <= e.gamma);
        prop_assert!(e.gamma <= 1.0 && e.gamma > 0.0);
    }

    #[test]
    fn vorticity_factor_is_a_cocycle(law in law_strategy(), s in 0.0f64..50.0, d1 in 0.0f64..50.0, d2 in 0.0f64..50.0) {
        let (r, t) = (s + d1, s + d1 + d2);
        let a = law.vorticity_factor(s, r).unwrap() * law.vorticity_factor(r, t).unwrap();
        let b = law.vorticity_factor(s, t).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * b.max(1e-300));
    }

    #[test]
    fn green_determinant_is_the_damping_factor(law in law_strategy(), k in 0.0f64..5.0, s in 0.0f64..20.0, d in 0.0f64..40.0) {
        let g = green(&law, k, s, s + d).unwrap();
        let exact = law.vorticity_factor(s, s + d).unwrap();
        prop_assert!((g.det() - exact).abs() <= 1e-7 * exact.max(g.max_abs().powi(2)), "det {} vs {}", g.det(), exact);
    }

    #[test]
    fn multiplier_wronskian(k in 0.0f64..3.0, s in 0.0f64..20.0, d in 0.1f64..100.0) {
        let law = DampingLaw::new(1.0, 0.5).unwrap();
        for fam in [Family::V, Family::U] {
            let m = solve_multipliers(fam, &law, k, s, &[s + d]).unwrap();
            let exact = law.vorticity_factor(s, s + d).unwrap();
            let w = m.samples[0].wronskian();
            prop_assert!((w - exact).abs() <= 1e-7 * exact, "{:?}: {} vs {}", fam, w, exact);
        }
    }

    #[test]
    fn green_cocycle(k in 0.0f64..3.0, s in 0.0f64..10.0, d1 in 0.0f64..20.0, d2 in 0.0f64..20.0) {
        let law = DampingLaw::new(1.0, 0.5).unwrap();
        let (r, t) = (s + d1, s + d1 + d2);
        let composed = green(&law, k, r, t).unwrap().compose(&green(&law, k, s, r).unwrap());
        let direct = green(&law, k, s, t).unwrap();
        prop_assert!(composed.max_diff(&direct) <= 1e-7 * direct.max_abs().max(1e-12));
    }

    #[test]
    fn elliptic_zone_ends_at_t_xi(k in 0.01f64..0.5) {
        let law = DampingLaw::new(1.0, 0.5).unwrap();
        let cfg = ZoneConfig::default_for(&law);
        for fam in [Family::V, Family::U] {
            if let Boundary::Finite(tx) = t_xi(fam, &law, &cfg, k).unwrap() {
                prop_assert_ne!(classify(fam, &law, &cfg, 1.01 * tx + 1.0, k).unwrap(), Zone::Elliptic);
            }
        }
    }

    #[test]
    fn t_xi_decreases_in_k(k1 in 0.01f64..1.0, f in 1.01f64..3.0) {
        let law = DampingLaw::new(1.0, 0.5).unwrap();
        let cfg = ZoneConfig::default_for(&law);
        for fam in [Family::V, Family::U] {
            let a = t_xi(fam, &law, &cfg, k1).unwrap();
            let b = t_xi(fam, &law, &cfg, f * k1).unwrap();
            if let (Boundary::Finite(a), Boundary::Finite(b)) = (a, b) {
                prop_assert!(b <= a * (1.0 + 1e-9), "{:?}: t_xi({}) = {} < t_xi({}) = {}", fam, k1, a, f * k1, b);
            }
        }
    }

    #[test]
    fn l2_norm_is_homogeneous(c in -10.0f64..10.0, sigma in 0.2f64..3.0) {
        let p = make_profile(ProfileKind::Gaussian { sigma }, 2, &NodeLayout::default()).unwrap();
        let a = l2_norm(&p.scaled(c), 0);
        prop_assert!((a - c.abs() * l2_norm(&p, 0)).abs() <= 1e-12 * a.max(1e-300));
    }
}
