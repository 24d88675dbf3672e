use std::sync::OnceLock;

use cohold::analysis::{certificate_constants, lyapunov_value, CertificateConstants};
use cohold::codesign::DesignResult;
use cohold::hybridsim::*;
use cohold::linalg::{inverse, lambda_max, lambda_min, max_abs, relative_asymmetry, Mat};
use cohold::lmi::{build_m1_hat, build_m2_hat, build_theta, DesignVariables};
use cohold::model::{build_p1, build_phi, factor_u, invert_controller_map, reconstruct_controller, HolderVariables, LyapunovFactors, TimingBounds, TransformedGains};
use cohold::reference;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn fixture_design() -> &'static DesignResult {
    static D: OnceLock<DesignResult> = OnceLock::new();
    D.get_or_init(|| cohold::io::read_json(concat!(env!("CARGO_MANIFEST_DIR"), "/../../fixtures/unicycle_design.json")).unwrap())
}

fn fixture_constants() -> &'static CertificateConstants {
    static C: OnceLock<CertificateConstants> = OnceLock::new();
    C.get_or_init(|| {
        let d = fixture_design();
        certificate_constants(&d.certificate, d.timing).unwrap()
    })
}

fn random_mat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Mat {
    Mat::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
}

fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> Mat {
    let g = random_mat(rng, n, n);
    &g * g.transpose() + Mat::identity(n, n) * 0.2
}

/// `X`, `Y` with `Θ ≻ 0` and a diagonally dominant `V`.
fn random_factors(rng: &mut ChaCha8Rng, n: usize) -> LyapunovFactors {
    let y = random_spd(rng, n);
    let x = inverse(&y, "Y").unwrap() + random_spd(rng, n);
    let v = Mat::identity(n, n) * 3.0 + random_mat(rng, n, n);
    let u = factor_u(&x, &y, &v).unwrap();
    LyapunovFactors { x, y, u, v }
}

fn random_vars(rng: &mut ChaCha8Rng, delta: f64) -> DesignVariables {
    let plant = reference::unicycle_plant();
    let mut v = DesignVariables::zeros(&plant);
    for m in [&mut v.x, &mut v.y, &mut v.p2, &mut v.q, &mut v.o, &mut v.r, &mut v.f, &mut v.f_i] {
        let g = random_mat(rng, m.nrows(), m.ncols());
        *m = &g + g.transpose();
    }
    for m in [&mut v.k, &mut v.l, &mut v.m, &mut v.n, &mut v.j, &mut v.z, &mut v.v] {
        *m = random_mat(rng, m.nrows(), m.ncols());
    }
    v.gamma1 = rng.random_range(-1.0..1.0);
    v.gamma2 = rng.random_range(-1.0..1.0);
    v.delta = delta;
    v
}

fn combine(a: &DesignVariables, b: &DesignVariables) -> DesignVariables {
    let mut s = a.clone();
    for (m, n) in [
        (&mut s.x, &b.x),
        (&mut s.y, &b.y),
        (&mut s.k, &b.k),
        (&mut s.l, &b.l),
        (&mut s.m, &b.m),
        (&mut s.n, &b.n),
        (&mut s.j, &b.j),
        (&mut s.z, &b.z),
        (&mut s.v, &b.v),
        (&mut s.p2, &b.p2),
        (&mut s.q, &b.q),
        (&mut s.o, &b.o),
        (&mut s.r, &b.r),
        (&mut s.f, &b.f),
        (&mut s.f_i, &b.f_i),
    ] {
        *m += n;
    }
    s.gamma1 += b.gamma1;
    s.gamma2 += b.gamma2;
    s
}

fn close(a: &Mat, b: &Mat, rel: f64) -> bool {
    max_abs(&(a - b)) <= rel * max_abs(a).max(max_abs(b)).max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn trace_bound_holds_for_relaxed_pairs(seed in any::<u64>(), n in 1usize..8, spread in 0.0f64..5.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = random_spd(&mut rng, n);
        let g = random_mat(&mut rng, n, n);
        let f_i = inverse(&f, "F").unwrap() + &g * g.transpose() * spread;
        prop_assert!((&f * &f_i).trace() >= n as f64 - 1e-10);
    }

    #[test]
    fn trace_equality_forces_inverse(seed in any::<u64>(), n in 1usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = random_spd(&mut rng, n);
        let f_i = inverse(&f, "F").unwrap();
        let prod = &f * &f_i;
        prop_assert!((prod.trace() - n as f64).abs() <= 1e-8);
        prop_assert!((prod - Mat::identity(n, n)).norm() <= 1e-7);
    }

    #[test]
    fn congruence_maps_p1_to_theta(seed in any::<u64>(), n in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = random_factors(&mut rng, n);
        let p1 = build_p1(&f.x, &f.y, &f.u, &f.v).unwrap();
        let phi = build_phi(&f.y, &f.v).unwrap();
        prop_assert!(close(&(phi.transpose() * p1 * &phi), &build_theta(&f.x, &f.y).unwrap(), 1e-9));
    }

    #[test]
    fn theta_determinant_identity(seed in any::<u64>(), n in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (x, y) = (random_mat(&mut rng, n, n), random_mat(&mut rng, n, n));
        let lhs = build_theta(&x, &y).unwrap().determinant();
        let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
        let rhs = sign * (Mat::identity(n, n) - &x * &y).determinant();
        prop_assert!((lhs - rhs).abs() <= 1e-9 * lhs.abs().max(1.0));
    }

    #[test]
    fn controller_map_round_trip(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let plant = reference::unicycle_plant();
        let f = random_factors(&mut rng, 3);
        let gains = TransformedGains { k: random_mat(&mut rng, 3, 3), l: random_mat(&mut rng, 3, 2), m: random_mat(&mut rng, 1, 3), n: random_mat(&mut rng, 1, 2) };
        let hv = HolderVariables { j: random_mat(&mut rng, 2, 2), z: random_mat(&mut rng, 2, 3), p2: random_spd(&mut rng, 2) };
        let (ctrl, _) = reconstruct_controller(&plant, &gains, &f, &hv).unwrap();
        let back = invert_controller_map(&plant, &ctrl, &f).unwrap();
        for (a, b) in [(&back.k, &gains.k), (&back.l, &gains.l), (&back.m, &gains.m), (&back.n, &gains.n)] {
            prop_assert!(close(a, b, 1e-9));
        }
    }

    #[test]
    fn synthesis_builders_are_affine_and_symmetric(seed in any::<u64>(), delta in 0.0f64..10.0, frac in 0.0f64..=1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let plant = reference::unicycle_plant();
        let (a, b) = (random_vars(&mut rng, delta), random_vars(&mut rng, delta));
        let zero = { let mut z = DesignVariables::zeros(&plant); z.delta = delta; z };
        let ab = combine(&a, &b);
        let t2 = 1.0;
        let tau = frac * t2;
        let builders: [&dyn Fn(&DesignVariables) -> Mat; 2] = [
            &|v| build_m1_hat(v, &plant).unwrap(),
            &|v| build_m2_hat(tau, t2, v, &plant).unwrap(),
        ];
        for f in builders {
            let sum = f(&a) + f(&b) - f(&zero);
            prop_assert!(close(&sum, &f(&ab), 1e-12));
            prop_assert!(relative_asymmetry(&f(&a)) <= 1e-12);
        }
    }

    #[test]
    fn m2_hat_is_monotone_in_delta_at_zero(lo in 0.0f64..10.0, step in 0.0f64..5.0) {
        let d = fixture_design();
        let plant = &d.plant;
        let mut vars = d.variables.clone().unwrap();
        vars.delta = lo + step;
        let high = build_m2_hat(0.0, d.timing.t2(), &vars, plant).unwrap();
        vars.delta = lo;
        let low = build_m2_hat(0.0, d.timing.t2(), &vars, plant).unwrap();
        prop_assert!(lambda_max(&(high - low)) <= 1e-12 * (1.0 + step));
    }

    #[test]
    fn policy_intervals_stay_in_window(seed in any::<u64>(), t1 in 0.01f64..1.0, width in 0.0f64..2.0, freq in -20.0f64..20.0, phase in -10.0f64..10.0, t_k in 0.0f64..1e4) {
        let timing = TimingBounds::new(t1, t1 + width).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let constant = t1 + width * rng.random::<f64>();
        for policy in [
            TransmissionPolicy::constant(constant.min(t1 + width), timing).unwrap(),
            TransmissionPolicy::uniform(seed, timing),
            TransmissionPolicy::sinusoidal(freq, phase, timing).unwrap(),
        ] {
            let mut s = policy.sampler();
            let mut t = t_k;
            for _ in 0..20 {
                let dt = s.next_interval(t).unwrap();
                prop_assert!(dt >= timing.t1() && dt <= timing.t2());
                t += dt;
            }
        }
    }

    #[test]
    fn lyapunov_sandwich(seed in any::<u64>(), frac in 0.0f64..=1.0) {
        let d = fixture_design();
        let c = fixture_constants();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let xbar: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let eta: Vec<f64> = (0..2).map(|_| rng.random_range(-1.0..1.0)).collect();
        let norm2: f64 = xbar.iter().chain(&eta).map(|v| v * v).sum();
        let v = lyapunov_value(&xbar, &eta, frac * d.timing.t2(), &d.certificate.p1, &d.certificate.p2, d.certificate.delta).unwrap();
        prop_assert!(v >= c.chi1 * norm2 * (1.0 - 1e-9));
        prop_assert!(v <= c.chi2 * norm2 * (1.0 + 1e-9));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn simulated_arcs_are_well_formed(seed in any::<u64>(), scale in 0.0f64..5.0, tau_frac in 0.0f64..=1.0) {
        let d = fixture_design();
        let cl = d.closed_loop().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x0 = InitialState {
            xbar: (0..6).map(|_| scale * rng.random_range(-1.0..1.0)).collect(),
            eta: (0..2).map(|_| scale * rng.random_range(-1.0..1.0)).collect(),
            tau: tau_frac * d.timing.t2(),
        };
        let arc = simulate(&cl, &x0, &Disturbance::zero(1), &TransmissionPolicy::uniform(seed, d.timing), 6.0, &SimSettings::default()).unwrap();
        prop_assert!(arc.validate(1e-9).is_ok());
        prop_assert!((arc.segments[0].t_end - arc.segments[0].t_start - x0.tau).abs() <= 1e-9);
        for (seg, jump) in arc.segments.iter().skip(1).zip(&arc.jumps) {
            prop_assert!(jump.tau_after >= d.timing.t1() && jump.tau_after <= d.timing.t2());
            if seg.ends_in_jump {
                prop_assert!((seg.t_end - seg.t_start - jump.tau_after).abs() <= 1e-9);
            }
            prop_assert!(arc.samples[seg.samples.start].eta.iter().all(|&e| e == 0.0));
        }
        prop_assert!(jump_monotonicity(&arc, &d.certificate).unwrap() <= 1e-9);
        prop_assert!(lemma1_check(&arc, fixture_constants()).pass);
    }
}

#[test]
fn m2_hat_endpoints_bound_interior() {
    let d = fixture_design();
    let vars = d.variables.as_ref().unwrap();
    let t2 = d.timing.t2();
    let ends = [0.0, t2].map(|tau| build_m2_hat(tau, t2, vars, &d.plant).unwrap());
    let scale = ends.iter().map(max_abs).fold(0.0, f64::max);
    assert!(ends.iter().all(|m| lambda_max(m) <= 1e-7 * scale));
    for k in 1..=50 {
        let tau = t2 * k as f64 / 51.0;
        let m = build_m2_hat(tau, t2, vars, &d.plant).unwrap();
        assert!(lambda_max(&m) <= 1e-7 * scale, "tau {tau}: {}", lambda_max(&m));
    }
}

#[test]
fn fixture_certificate_is_positive() {
    let c = &fixture_design().certificate;
    assert!(lambda_min(&c.p1) > 0.0 && lambda_min(&c.p2) > 0.0);
}
