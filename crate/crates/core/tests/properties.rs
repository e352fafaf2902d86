use cmperiodic::periodic::{flow_with_monodromy, poincare_map};
use cmperiodic::reproduction::r0_time_averaged;
use cmperiodic::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const OMEGA: f64 = std::f64::consts::TAU / 24.0;

fn coefficient(mean: f64, amp: f64) -> SinusoidalCoefficient<f64> {
    if amp == 0.0 {
        SinusoidalCoefficient::constant(mean, OMEGA).unwrap()
    } else {
        SinusoidalCoefficient::new(mean, amp, OMEGA).unwrap()
    }
}

fn random_params(rng: &mut ChaCha8Rng, periodic: bool) -> ModelParameters64 {
    let mu = rng.gen_range(0.05..0.2);
    let beta = rng.gen_range(0.01..0.5);
    let d = rng.gen_range(0.005..0.05);
    let amp = |rng: &mut ChaCha8Rng, m: f64| if periodic { m * rng.gen_range(0.0..0.9) } else { 0.0 };
    let (am, ab, ad) = (amp(rng, mu), amp(rng, beta), amp(rng, d));
    ModelParameters::new(
        coefficient(mu, am),
        coefficient(beta, ab),
        coefficient(d, ad),
        ScalarRates {
            k: rng.gen_range(0.05..0.5),
            delta: rng.gen_range(0.05..0.2),
            p: rng.gen_range(0.1..1.0),
            c: rng.gen_range(0.05..0.5),
            c1: rng.gen_range(0.0..0.2),
            c2: rng.gen_range(0.0..0.2),
        },
    )
    .unwrap()
}

fn baseline(delta: f64, c: f64) -> ModelParameters64 {
    ModelParameters::new(
        coefficient(0.1, 0.05),
        coefficient(0.3, 0.1),
        coefficient(0.01, 0.005),
        ScalarRates {
            k: 0.2,
            delta,
            p: 0.5,
            c,
            c1: 0.1,
            c2: 0.1,
        },
    )
    .unwrap()
}

#[test]
fn reproduction_number_scales_linearly_in_transmission() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let cfg = IntegratorConfig::spectral();
    for _ in 0..10 {
        let p = random_params(&mut rng, true);
        let s = rng.gen_range(0.1..5.0);
        let base = r0_periodic(&p, 1e-10, &cfg).unwrap().value;
        let scaled = r0_periodic(&p.with_beta_scaled(s).unwrap(), 1e-10, &cfg).unwrap().value;
        assert!((scaled - s * base).abs() <= 1e-6 * s * base, "{scaled} vs {}", s * base);
    }
}

#[test]
fn autonomous_reproduction_number_matches_closed_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let cfg = IntegratorConfig::spectral();
    for _ in 0..20 {
        let p = random_params(&mut rng, false);
        let closed = r0_time_averaged(&p);
        let r = r0_periodic(&p, 1e-10, &cfg).unwrap();
        assert!((r.value - closed).abs() <= 1e-6 * closed, "{} vs {closed}", r.value);
        assert!(r.threshold_consistent());
    }
}

#[test]
fn period_map_preserves_the_positive_cone() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let cfg = IntegratorConfig::simulation();
    let p = baseline(0.1, 0.1);
    for _ in 0..1000 {
        let x = State::new(
            rng.gen_range(0.0..30.0),
            rng.gen_range(0.0..5.0),
            rng.gen_range(0.0..5.0),
            rng.gen_range(0.0..20.0),
        );
        let q = poincare_map(&p, &x, &cfg).unwrap();
        assert!(q.is_nonnegative() && q.is_finite(), "{x:?} -> {q:?}");
    }
}

#[test]
fn multipliers_at_virus_free_orbit_split_into_target_and_infection_blocks() {
    let cfg = IntegratorConfig::spectral();
    for p in [baseline(0.09, 0.18), baseline(0.1, 0.1)] {
        let t_star = virus_free_numeric(&p, &cfg).unwrap();
        let (_, full) = flow_with_monodromy(&p, &t_star.state_at(0.0), &cfg).unwrap();
        let full = floquet_multipliers(&full);

        let lin = build_linearization(&p, t_star).unwrap();
        let mut expected = lin.monodromy_at(1.0, &cfg).unwrap().eigenvalues;
        // T decouples at V = 0 with rate -d(t); its multiplier is exp(-d0 P).
        expected.push(Complex::new((-p.d().mean() * p.period()).exp(), 0.0));
        cmperiodic::linalg::sort_by_modulus_desc(&mut expected);

        for (a, b) in full.iter().zip(&expected) {
            assert!((a - b).norm() <= 1e-8 * b.norm().max(1.0), "{full:?} vs {expected:?}");
        }
    }
}

#[test]
fn matrix_flow_columns_match_vector_flows() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let cfg = IntegratorConfig::spectral();
    let base: Vec<f64> = (0..9).map(|_| rng.gen_range(-0.2..0.2)).collect();
    let a = |t: f64| {
        let mut m = Matrix::from_row_major(3, base.clone());
        for i in 0..3 {
            m[(i, i)] += 0.1 * (OMEGA * t).sin();
        }
        m
    };
    let sol = integrate_matrix(a, 0.0, 24.0, &Matrix::identity(3), &cfg).unwrap();
    for j in 0..3 {
        let mut e = vec![0.0; 3];
        e[j] = 1.0;
        let col = integrate(
            |t, y: &[f64], dy: &mut [f64]| {
                let r = a(t).mul_vec(y);
                dy.copy_from_slice(&r);
            },
            0.0,
            24.0,
            &e,
            &cfg,
        )
        .unwrap();
        for i in 0..3 {
            let (m, v) = (sol.end_matrix[(i, j)], col.final_state[i]);
            assert!((m - v).abs() < 1e-9 * v.abs().max(1.0), "{m} vs {v}");
        }
    }
}

#[test]
fn tightening_tolerance_converges() {
    let p = baseline(0.1, 0.1);
    let x0 = State::new(10.0, 1.0, 1.0, 1.0);
    let reference = simulate(&p, &x0, 240.0, 24.0, &IntegratorConfig::simulation().with_tolerances(1e-12, 1e-14))
        .unwrap()
        .last()
        .unwrap()
        .1;
    let mut prev = f64::INFINITY;
    for tol in [1e-4, 1e-6, 1e-8, 1e-10] {
        let cfg = IntegratorConfig::simulation().with_tolerances(tol, tol * 1e-3);
        let end = simulate(&p, &x0, 240.0, 24.0, &cfg).unwrap().last().unwrap().1;
        let err = end.max_abs_diff(&reference);
        assert!(err < prev.max(1e-11), "tol {tol}: {err} after {prev}");
        prev = err;
    }
    assert!(prev < 1e-7);
}

/// Endemic equilibrium of the constant-coefficient system by bisection on T.
fn endemic_equilibrium(p: &ModelParameters64) -> State64 {
    let r = p.rates();
    let (mu, beta, d) = (p.mu().mean(), p.beta().mean(), p.d().mean());
    let kk = r.c * (r.k + d) * (r.delta + d) / (r.p * r.k);
    let v_of = |t: f64| (mu - d * t) / kk;
    let f = |t: f64| r.p * r.k * beta * t - r.c * (r.k + d) * (r.delta + d) * (1.0 + r.c1 * t) * (1.0 + r.c2 * v_of(t));
    let (mut lo, mut hi) = (0.0, mu / d);
    assert!(f(lo) < 0.0 && f(hi) > 0.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let t = 0.5 * (lo + hi);
    let v = v_of(t);
    let e = kk * v / (r.k + d);
    State::new(t, e, r.k * e / (r.delta + d), v)
}

#[test]
fn autonomous_orbit_is_the_endemic_equilibrium() {
    let p = baseline(0.1, 0.1).time_averaged();
    let expected = endemic_equilibrium(&p);
    let cfg = IntegratorConfig::spectral();
    let guess = cmperiodic::periodic::warm_start(&p, &State::new(10.0, 1.0, 1.0, 1.0), 2000.0, &IntegratorConfig::simulation())
        .unwrap();
    let orbit = find_periodic_orbit(&p, &guess, &cfg, 1e-11, 30).unwrap();
    assert!(orbit.initial_state.max_abs_diff(&expected) < 1e-7, "{:?} vs {expected:?}", orbit.initial_state);
    for s in &orbit.states {
        assert!(s.max_abs_diff(&expected) < 1e-7);
    }
    assert!(orbit.stable);
}

#[test]
fn single_precision_pipeline_runs() {
    let w = std::f32::consts::TAU / 24.0;
    let p = ModelParameters32::new(
        SinusoidalCoefficient::new(0.1, 0.05, w).unwrap(),
        SinusoidalCoefficient::new(0.3, 0.1, w).unwrap(),
        SinusoidalCoefficient::new(0.01, 0.005, w).unwrap(),
        ScalarRates {
            k: 0.2,
            delta: 0.1,
            p: 0.5,
            c: 0.1,
            c1: 0.1,
            c2: 0.1,
        },
    )
    .unwrap();
    let cfg = IntegratorConfig::<f32>::simulation().with_tolerances(1e-4, 1e-6);
    let traj = simulate(&p, &State32::new(10.0, 1.0, 1.0, 1.0), 240.0, 1.0, &cfg).unwrap();
    assert!(traj.states.iter().all(|s| s.is_nonnegative()));
    let r0 = r0_periodic(&p, 1e-3, &cfg).unwrap();
    assert!((r0.value - 64.68).abs() < 0.5, "{}", r0.value);
}
