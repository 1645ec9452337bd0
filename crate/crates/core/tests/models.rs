use mrrd::models::{build, default_setup, jacobian_fd_error, Bz, BzPattern, IcParams, ModelKind, Nagumo, ReactionModel};
use mrrd::radau::{radau5_integrate, RadauOptions};
use mrrd::{Dim, SolverError};
use nalgebra::{Matrix3, SVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn nagumo_examples() {
    let m = Nagumo::default();
    assert_eq!(m.rhs_jac(0.0), (0.0, 0.0));
    assert_eq!(m.rhs_jac(1.0), (0.0, -10.0));
    assert!(m.rhs_jac(2.0 / 3.0).1.abs() < 1e-14);
    assert_eq!(m.diffusion(), &[0.1]);
    for k in 0..=1000 {
        let u = k as f64 / 1000.0;
        assert!(m.rhs_jac(u).1.abs() <= 3.0 * m.k);
    }
}

#[test]
fn bz_examples() {
    assert_eq!(Bz::rhs_jac([0.0; 3]).0, [0.0; 3]);
    let (f, _) = Bz::rhs_jac([0.0, 0.02, 0.7]);
    assert!((f[1] - 1.96).abs() < 1e-12);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..100 {
        let u: [f64; 3] = std::array::from_fn(|_| rng.random_range(-2.0..2.0));
        assert_eq!(Bz::rhs_jac(u).0[2], u[1] - u[2]);
    }
    let (_, j) = Bz::rhs_jac([0.3, 0.1, 0.2]);
    assert_eq!(j[0][0], 1e5 * (-0.02 - 0.1));
    assert_eq!(Bz::default().diffusion(), &[2.5e-3, 2.5e-3, 1.5e-3]);
}

#[test]
fn analytic_jacobians_match_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for kind in [ModelKind::Nagumo, ModelKind::Bz] {
        let model = build(kind, None).unwrap();
        for _ in 0..100 {
            let u: Vec<f64> = (0..model.species()).map(|_| rng.random_range(0.0..2.0)).collect();
            let e = jacobian_fd_error(model.as_ref(), &u);
            assert!(e <= 1e-5, "{kind}: {e} at {u:?}");
        }
    }
}

#[test]
fn bz_equilibrium_is_a_root() {
    let eq = Bz::equilibrium();
    let (f, j) = Bz::rhs_jac(eq);
    assert!(f[0].abs() <= 1e-9 * 1e5 && f[1].abs() <= 1e-12 && f[2] == 0.0, "{f:?}");
    assert!(eq.iter().all(|&v| v > 0.0));
    assert!(j[0][0] < 0.0);
}

fn sample_ic(model: &dyn ReactionModel, dim: Dim, n: usize) -> Vec<Vec<f64>> {
    let m = model.species();
    let mut out = Vec::new();
    for i in 0..n {
        for j in 0..n {
            let x = [(i as f64 + 0.5) / n as f64, (j as f64 + 0.5) / n as f64, 0.5 / n as f64];
            let mut v = vec![0.0; m];
            model.initial_condition(dim, &x, &mut v);
            out.push(v);
        }
    }
    out
}

#[test]
fn nagumo_initial_condition_is_in_unit_range() {
    let model = build(ModelKind::Nagumo, None).unwrap();
    for dim in [Dim::Two, Dim::Three] {
        let vals = sample_ic(model.as_ref(), dim, 200);
        let (lo, hi) = vals.iter().fold((f64::MAX, f64::MIN), |(a, b), v| (a.min(v[0]), b.max(v[0])));
        assert!(lo >= 0.0 && hi <= 1.0);
        assert!(hi > 0.99 && lo < 0.01);
    }
}

#[test]
fn bz_far_field_is_the_equilibrium() {
    let eq = Bz::equilibrium();
    for pattern in [BzPattern::Spiral, BzPattern::Target] {
        let ic = IcParams {
            bz_pattern: pattern,
            ..Bz::default().ic
        };
        let model = build(ModelKind::Bz, Some(ic)).unwrap();
        for x in [[0.02, 0.02, 0.0], [0.95, 0.1, 0.0], [0.9, 0.9, 0.0]] {
            let mut u = [0.0; 3];
            model.initial_condition(Dim::Two, &x, &mut u);
            for (a, b) in u.iter().zip(&eq) {
                assert!((a - b).abs() <= 1e-12 * b.abs(), "{pattern:?} {x:?}: {u:?}");
            }
            let mut f = [0.0; 3];
            model.rhs(&u, &mut f);
            assert!(f.iter().all(|v| v.abs() < 1e-5));
        }
        let mut u = [0.0; 3];
        model.initial_condition(Dim::Two, &[0.48, 0.52, 0.0], &mut u);
        assert!(u[1] > 0.5, "{pattern:?}: no excitation near the centre");
    }
}

#[test]
fn initial_conditions_are_deterministic() {
    for kind in [ModelKind::Nagumo, ModelKind::Bz] {
        let a = sample_ic(build(kind, None).unwrap().as_ref(), Dim::Two, 64);
        let b = sample_ic(build(kind, None).unwrap().as_ref(), Dim::Two, 64);
        assert_eq!(a, b);
    }
}

#[test]
fn stroke_is_a_reserved_slot() {
    assert!(matches!(build(ModelKind::Stroke, None), Err(SolverError::Unsupported(_))));
    assert_eq!("bz".parse::<ModelKind>().unwrap(), ModelKind::Bz);
    assert_eq!("NAGUMO".parse::<ModelKind>().unwrap(), ModelKind::Nagumo);
    assert!("brusselator".parse::<ModelKind>().is_err());
}

#[test]
fn default_setups() {
    for (kind, dt) in [(ModelKind::Nagumo, 1e-2), (ModelKind::Bz, 1e-3)] {
        let model = build(kind, None).unwrap();
        let s = default_setup(model.as_ref(), Dim::Two, 10);
        assert_eq!(s.dt, dt);
        assert_eq!(s.levels, 10);
        assert!(s.eps_mr > 0.0);
    }
}

#[test]
fn nagumo_keeps_the_unit_interval() {
    let m = Nagumo::default();
    let opts = RadauOptions::default();
    for k in 0..=20 {
        let u0 = k as f64 / 20.0;
        let mut y = SVector::<f64, 1>::new(u0);
        for _ in 0..50 {
            let f = |u: &SVector<f64, 1>| SVector::<f64, 1>::new(m.rhs_jac(u[0]).0);
            let j = |u: &SVector<f64, 1>| nalgebra::SMatrix::<f64, 1, 1>::new(m.rhs_jac(u[0]).1);
            y = radau5_integrate(f, Some(j), y, 0.2, &opts).unwrap().0;
            assert!((0.0..=1.0).contains(&y[0]), "u0 = {u0}: {}", y[0]);
        }
        if u0 > 0.0 {
            assert!((y[0] - 1.0).abs() < 1e-4);
        }
    }
}

#[test]
fn bz_orbit_is_stiff() {
    // integrate through the transient, then sample the settled orbit
    let f = |u: &SVector<f64, 3>| SVector::<f64, 3>::from(Bz::rhs_jac([u[0], u[1], u[2]]).0);
    let j = |u: &SVector<f64, 3>| {
        let (_, j) = Bz::rhs_jac([u[0], u[1], u[2]]);
        Matrix3::from_fn(|r, c| j[r][c])
    };
    let opts = RadauOptions {
        rtol: 1e-8,
        atol: 1e-10,
        ..RadauOptions::default()
    };
    let eq = Bz::equilibrium();
    let mut y = SVector::<f64, 3>::new(eq[0], 0.8, eq[2]);
    let mut states = Vec::new();
    for _ in 0..4000 {
        y = radau5_integrate(f, Some(j), y, 0.01, &opts).unwrap().0;
        states.push(y);
    }
    let spread = |k: usize| states.iter().skip(2000).map(|s| s[k]).fold((f64::MAX, f64::MIN), |(a, b), v| (a.min(v), b.max(v)));
    let (lo, hi) = spread(1);
    assert!(hi - lo > 0.1, "orbit collapsed to a point: [{lo}, {hi}]");
    let rho = states
        .iter()
        .skip(2000)
        .map(|s| j(s).complex_eigenvalues().iter().map(|e| e.norm()).fold(0.0, f64::max))
        .fold(0.0, f64::max);
    assert!(rho >= 1e4, "{rho}");
}

proptest! {
    #[test]
    fn bz_jacobian_fd_random(a in 0.0f64..2.0, b in 0.0f64..2.0, c in 0.0f64..2.0) {
        let model = Bz::default();
        prop_assert!(jacobian_fd_error(&model, &[a, b, c]) <= 1e-5);
    }

    #[test]
    fn nagumo_equilibria_and_bound(u in 0.0f64..=1.0) {
        let m = Nagumo::default();
        let (f, df) = m.rhs_jac(u);
        prop_assert!(f >= 0.0);
        prop_assert!(df.abs() <= 30.0);
    }
}

mod internals {
    use mrrd::models::*;

    #[test]
    fn nagumo_examples() {
        let n = Nagumo::default();
        assert_eq!(n.rhs_jac(0.0), (0.0, 0.0));
        assert_eq!(n.rhs_jac(1.0), (0.0, -10.0));
        assert!(n.rhs_jac(2.0 / 3.0).1.abs() < 1e-14);
    }

    #[test]
    fn bz_examples() {
        assert_eq!(Bz::rhs_jac([0.0; 3]).0, [0.0; 3]);
        let f = Bz::rhs_jac([0.0, 0.02, 0.7]).0;
        assert!((f[1] - 1.96).abs() < 1e-12);
        assert_eq!(f[2], 0.02 - 0.7);
    }

    #[test]
    fn bz_equilibrium() {
        let eq = Bz::equilibrium();
        let (f, _) = Bz::rhs_jac(eq);
        assert!(f.iter().all(|v| v.abs() < 1e-9), "{f:?}");
        assert!((eq[0] - 1.262_581_19).abs() < 1e-7);
        assert!((eq[1] - 0.074_837_63).abs() < 1e-7);
    }

    #[test]
    fn stroke_is_a_stub() {
        assert!(build(ModelKind::Stroke, None).is_err());
        assert_eq!("BZ".parse::<ModelKind>().unwrap(), ModelKind::Bz);
    }
}
