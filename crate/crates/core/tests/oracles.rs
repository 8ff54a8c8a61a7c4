use deul_core::nonlinear::{run, run_with, EulerParams, InitKind, RunOptions, Solver, SolverConfig};
use deul_core::ode::OdeOptions;
use deul_core::propagator::{green_with, PropagatorOptions};
use deul_core::spectra::{find_series, l2_norm, make_profile, NodeLayout, ProfileKind};
use deul_core::DampingLaw;

#[test]
fn green_at_zero_frequency_with_constant_damping() {
    // k = 0, lambda = 0, mu = 2: v is frozen and u decays like exp(-2 (t - s)).
    let law = DampingLaw::new(2.0, 0.0).unwrap();
    let opts = PropagatorOptions { ode: OdeOptions { rtol: 1e-12, atol: 1e-300, ..OdeOptions::default() }, ..PropagatorOptions::default() };
    for (s, t) in [(0.0, 0.5), (1.0, 3.0), (10.0, 20.0)] {
        let g = green_with(&law, 0.0, s, t, &opts).unwrap();
        assert!((g.g11 - 1.0).abs() < 1e-12);
        assert!(g.g12.abs() < 1e-12 && g.g21.abs() < 1e-12);
        let exact = (-2.0 * (t - s)).exp();
        assert!((g.g22 - exact).abs() <= 1e-9 * exact, "{} vs {}", g.g22, exact);
    }
}

#[test]
fn gaussian_derivative_norm_ratio() {
    // For n = 2 and amplitude exp(-k^2/(2 sigma^2)): ||Lambda f|| / ||f|| = sigma.
    for sigma in [0.3, 0.5, 1.0, 2.0] {
        let p = make_profile(ProfileKind::Gaussian { sigma }, 2, &NodeLayout::default()).unwrap();
        let r = l2_norm(&p, 1) / l2_norm(&p, 0);
        assert!((r - sigma).abs() <= 1e-9 * sigma, "sigma {sigma}: {r}");
    }
}

#[test]
fn quadrature_refinement_is_stable() {
    let p = make_profile(ProfileKind::Hat { r: 1.0 }, 2, &NodeLayout::default()).unwrap();
    let q = make_profile(ProfileKind::Hat { r: 1.0 }, 2, &NodeLayout::default().refined()).unwrap();
    for a in 0..3 {
        let (x, y) = (l2_norm(&p, a), l2_norm(&q, a));
        assert!((x - y).abs() <= 1e-6 * y, "order {a}: {x} vs {y}");
    }
}

/// Small box at the resolution of the default configuration (`dx = 200/512`).
fn small(nonlinear: bool) -> SolverConfig {
    SolverConfig { l: 50.0, n: 128, t_end: 4.0, dt: 0.0625, eps: 0.01, r0: 4.0, output_every: 1.0, nonlinear, init: InitKind::GaussianBump }
}

fn params() -> EulerParams {
    EulerParams::new(1.4, DampingLaw::new(1.0, 0.5).unwrap()).unwrap()
}

#[test]
fn discrete_plancherel() {
    let solver = Solver::new(params(), 50.0, 64, true).unwrap();
    let f = solver.init_field(InitKind::GaussianBump, 0.01, 4.0).unwrap();
    let [v, _, _] = solver.real_fields(&f);
    let dx = 50.0 / 64.0;
    let direct: f64 = v.iter().map(|x| x * x).sum::<f64>() * dx * dx;
    let spectral = solver.grid.weighted_norm2(&f.v, |_| 1.0);
    assert!((direct - spectral).abs() <= 1e-10 * direct, "{direct} vs {spectral}");
}

#[test]
fn initial_data_is_normalized() {
    let solver = Solver::new(params(), 50.0, 64, true).unwrap();
    let f = solver.init_field(InitKind::GaussianBump, 0.02, 4.0).unwrap();
    let [v, u1, u2] = solver.real_fields(&f);
    let peak = v.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    assert!((peak - 0.02).abs() <= 1e-12);
    assert!(u1.iter().chain(&u2).all(|x| x.abs() < 1e-15));
    assert!(solver.mass_l1(&f) > 0.0);
    assert!(f.hermitian_defect() < 1e-14);
}

#[test]
fn zero_data_stays_zero() {
    let cfg = SolverConfig { init: InitKind::Zero, eps: 0.0, ..small(true) };
    let out = run(params(), &cfg).unwrap();
    assert_eq!(out.mass_drift(), 0.0);
    assert!(out.series.iter().all(|s| s.values.iter().all(|&x| x == 0.0)));
}

#[test]
fn linear_mode_tracks_the_exact_linear_flow() {
    let out = run_with(params(), &small(false), RunOptions { compare_linear: true }, &mut |_, _| Ok(())).unwrap();
    let dev = out.deviation.unwrap();
    let worst = dev.values.iter().copied().fold(0.0, f64::max);
    assert!(worst < 1e-2, "linear-mode deviation {worst}");
}

#[test]
fn nonlinear_run_conserves_mass() {
    let out = run(params(), &small(true)).unwrap();
    assert!(out.mass_drift() < 1e-8, "drift {}", out.mass_drift());
    assert!(out.max_hermitian_defect < 1e-12);
}

#[test]
fn doubling_the_box_does_not_change_the_norms() {
    let a = run(params(), &small(true)).unwrap();
    let b = run(params(), &SolverConfig { l: 100.0, n: 256, ..small(true) }).unwrap();
    for label in ["v:L2:a=0", "v:L2:a=1", "u:L2:a=0", "u:L2:a=1"] {
        let (x, y) = (find_series(&a.series, label).unwrap(), find_series(&b.series, label).unwrap());
        for (p, q) in x.values.iter().zip(&y.values).filter(|(_, q)| **q != 0.0) {
            assert!((p - q).abs() <= 1e-6 * q.abs(), "{label}: {p} vs {q}");
        }
    }
}
