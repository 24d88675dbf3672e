use cohold::analysis::certificate_constants;
use cohold::codesign::DesignResult;
use cohold::hybridsim::*;
use cohold::linalg::{spectral_abscissa, Complex64, Mat};
use cohold::model::TimingBounds;
use cohold::reference;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn fixture_design() -> DesignResult {
    cohold::io::read_json(concat!(env!("CARGO_MANIFEST_DIR"), "/../../fixtures/unicycle_design.json")).unwrap()
}

fn fig1_start(r: &DesignResult) -> InitialState {
    InitialState::from_components(&r.plant, &reference::UNICYCLE_X0, &[0.0; 3], &[0.0, 0.0], r.timing.t2()).unwrap()
}

fn sinusoid(r: &DesignResult) -> TransmissionPolicy {
    TransmissionPolicy::sinusoidal(SINUSOID_FREQUENCY, 0.0, r.timing).unwrap()
}

#[test]
fn attractor_is_invariant_without_input() {
    let r = fixture_design();
    let cl = r.closed_loop().unwrap();
    let x0 = InitialState { xbar: vec![0.0; 6], eta: vec![0.0; 2], tau: 0.3 };
    let arc = simulate(&cl, &x0, &Disturbance::zero(1), &TransmissionPolicy::uniform(3, r.timing), 10.0, &SimSettings::default()).unwrap();
    assert_eq!(arc.max_distance(), 0.0);
    let l2 = empirical_l2_ratio(&arc, r.gamma, 1.0).unwrap();
    assert_eq!(l2.slack, 0.0);
}

#[test]
fn designed_loop_regression_values() {
    let r = fixture_design();
    let x0 = fig1_start(&r);
    let zero = Disturbance::zero(1);
    let arc = simulate(&r.closed_loop().unwrap(), &x0, &zero, &sinusoid(&r), 60.0, &SimSettings::default()).unwrap();
    let est = decay_estimate(&arc).unwrap();
    assert!((est.lambda - 0.1653).abs() < 5e-3, "{est:?}");
    assert!(arc.last().distance() < 1e-3 * arc.first().distance());

    let zoh = simulate(&zoh_variant(&r.plant, &r.controller).unwrap(), &x0, &zero, &sinusoid(&r), 60.0, &SimSettings::default()).unwrap();
    let est = decay_estimate(&zoh).unwrap();
    assert!((est.lambda + 0.0333).abs() < 5e-3, "{est:?}");
    assert!(zoh.max_distance() > 10.0 * zoh.first().distance());
}

#[test]
fn designed_certificate_constants_regression() {
    let r = fixture_design();
    let c = certificate_constants(&r.certificate, r.timing).unwrap();
    // The flow margin sits at the strictness floor, so the rate is tiny but positive.
    assert!(c.lambda_t > 0.0);
    assert!((c.lambda_t / 9.980789644730329e-13 - 1.0).abs() < 0.05, "{}", c.lambda_t);
    assert!((c.chi1 / 0.002987952203786386 - 1.0).abs() < 1e-3);
    assert!((c.chi2 / 24530.24614646353 - 1.0).abs() < 1e-3);
}

#[test]
fn lyapunov_decreases_along_designed_loop() {
    let r = fixture_design();
    let c = certificate_constants(&r.certificate, r.timing).unwrap();
    let settings = SimSettings { sample_dt: Some(1e-3), ..Default::default() };
    let arc = simulate(&r.closed_loop().unwrap(), &fig1_start(&r), &Disturbance::zero(1), &sinusoid(&r), 20.0, &settings).unwrap();
    assert!(jump_monotonicity(&arc, &r.certificate).unwrap() <= 1e-9);
    let diss = flow_dissipation(&arc, &r.certificate, c.lambda_t, r.gamma, 1e-4).unwrap();
    assert!(diss.pass, "{diss:?}");
    assert!(lemma1_check(&arc, &c).pass);
}

#[test]
fn pulse_response_respects_gain() {
    let r = fixture_design();
    let cl = r.closed_loop().unwrap();
    let x0 = InitialState { xbar: vec![0.0; 6], eta: vec![0.0; 2], tau: r.timing.t2() };
    let d = Disturbance::pulse(vec![1.0], 1.0, 3.0).unwrap();
    let arc = simulate(&cl, &x0, &d, &sinusoid(&r), 40.0, &SimSettings::default()).unwrap();
    let l2 = empirical_l2_ratio(&arc, r.gamma, 0.0).unwrap();
    assert!((l2.input_l2 - 2f64.sqrt()).abs() < 1e-9, "{l2:?}");
    assert!(l2.slack > 0.0, "{l2:?}");
}

#[test]
fn energy_quadrature_converges_under_step_halving() {
    let r = fixture_design();
    let cl = r.closed_loop().unwrap();
    let x0 = InitialState { xbar: vec![0.0; 6], eta: vec![0.0; 2], tau: r.timing.t2() };
    let d = Disturbance::random_finite_energy(1, 11);
    let policy = TransmissionPolicy::uniform(11, r.timing);
    let coarse = SimSettings { max_step: 0.1, ..Default::default() };
    let fine = SimSettings { max_step: 0.05, ..Default::default() };
    let a = simulate(&cl, &x0, &d, &policy, 30.0, &coarse).unwrap();
    let b = simulate(&cl, &x0, &d, &policy, 30.0, &fine).unwrap();
    assert!((a.output_l2() - b.output_l2()).abs() < 1e-3 * b.output_l2());
    assert!((a.input_l2() - b.input_l2()).abs() < 1e-3 * b.input_l2());
}

/// `sup_ω |C(iω − A)⁻¹V|` by a log-spaced scan and local refinement.
fn hinf_norm(a: &Mat, v: &Mat, c: &Mat) -> f64 {
    let n = a.nrows();
    let gain = |w: f64| {
        let m = DMatrix::from_fn(n, n, |i, j| Complex64::new(-a[(i, j)], if i == j { w } else { 0.0 }));
        let rhs = DMatrix::from_fn(n, 1, |i, _| Complex64::new(v[(i, 0)], 0.0));
        let x = m.lu().solve(&rhs).unwrap();
        (0..n).map(|i| x[(i, 0)] * c[(0, i)]).sum::<Complex64>().norm()
    };
    let grid: Vec<f64> = (0..=4000).map(|k| 10f64.powf(-4.0 + 8.0 * k as f64 / 4000.0)).collect();
    let (mut best_w, mut best) = (0.0, gain(0.0));
    for &w in &grid {
        let g = gain(w);
        if g > best {
            (best_w, best) = (w, g);
        }
    }
    let (mut lo, mut hi) = (best_w / 1.01, best_w * 1.01 + 1e-9);
    for _ in 0..100 {
        let (m1, m2) = (lo + (hi - lo) / 3.0, hi - (hi - lo) / 3.0);
        if gain(m1) < gain(m2) {
            lo = m1;
        } else {
            hi = m2;
        }
    }
    best.max(gain(0.5 * (lo + hi)))
}

#[test]
fn empirical_gain_below_frequency_domain_norm() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let timing = TimingBounds::new(0.5, 1.0).unwrap();
    for seed in 0..8 {
        let n = 2 + seed as usize % 3;
        let mut a = Mat::from_fn(n, n, |_, _| rng.random_range(-2.0..2.0));
        let shift = spectral_abscissa(&a) + rng.random_range(0.3..1.5);
        a -= Mat::identity(n, n) * shift;
        let v = Mat::from_fn(n, 1, |_, _| rng.random_range(-1.0..1.0));
        let c = Mat::from_fn(1, n, |_, _| rng.random_range(-1.0..1.0));
        let norm = hinf_norm(&a, &v, &c);
        let cl = lti_closed_loop(a, v, c).unwrap();
        let x0 = InitialState { xbar: vec![0.0; n], eta: vec![0.0], tau: 1.0 };
        let d = Disturbance::random_finite_energy(1, seed);
        let arc = simulate(&cl, &x0, &d, &TransmissionPolicy::uniform(seed, timing), 120.0, &SimSettings::default()).unwrap();
        let ratio = empirical_l2_ratio(&arc, norm, 0.0).unwrap().ratio.unwrap();
        assert!(ratio <= 1.05 * norm, "seed {seed}: ratio {ratio} vs H-infinity norm {norm}");
    }
}

#[test]
fn csv_export_is_deterministic() {
    let r = fixture_design();
    let cl = r.closed_loop().unwrap();
    let d = Disturbance::random_finite_energy(1, 2);
    let x0 = fig1_start(&r);
    let run = || simulate(&cl, &x0, &d, &TransmissionPolicy::uniform(2, r.timing), 5.0, &SimSettings::default()).unwrap().to_csv();
    assert_eq!(run(), run());
}
