mod oracle;

use bellbloom::analytic::{steady_state, FirstOrder};
use bellbloom::dsp::fft::{fft_in_place, fft_real};
use bellbloom::model::{EnsembleConfig, GAMMA_RB87};
use bellbloom::sde::{simulate_record, NoiseSwitches, SimPlan, SpinSystem};
use bellbloom::{FieldProgram, ProbeConfig, PumpProgram};
use num_complex::Complex64;
use oracle::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::TAU;

#[test]
fn dft_of_delta_is_flat() {
    let mut x = vec![Complex64::new(0.0, 0.0); 64];
    x[0] = Complex64::new(1.0, 0.0);
    for v in naive_dft(&x) {
        assert!((v - Complex64::new(1.0, 0.0)).norm() < 1e-12);
    }
}

#[test]
fn dft_of_constant_is_single_bin() {
    let x = vec![Complex64::new(2.5, 0.0); 48];
    let s = naive_dft(&x);
    assert!((s[0] - Complex64::new(120.0, 0.0)).norm() < 1e-9);
    assert!(s[1..].iter().all(|v| v.norm() < 1e-9));
}

fn max_rel_dev(a: &[Complex64], b: &[Complex64]) -> f64 {
    let scale = a.iter().map(|v| v.norm()).fold(0.0, f64::max);
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).norm() / scale)
        .fold(0.0, f64::max)
}

#[test]
fn fast_transform_matches_direct_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for n in [1usize, 2, 7, 64, 255, 1000, 1024, 4096] {
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let fast = fft_real(&x);
        let slow = naive_dft_real(&x);
        let dev = max_rel_dev(&slow, &fast);
        assert!(dev < 1e-9, "n = {n}: {dev:e}");

        let mut z: Vec<Complex64> = (0..n)
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        let slow = naive_dft(&z);
        fft_in_place(&mut z);
        assert!(max_rel_dev(&slow, &z) < 1e-9);
    }
}

#[test]
fn pump_moments_match_quadrature() {
    for (duty, center) in [(0.1, 0.0), (0.25, 0.0), (0.5, 1.2), (0.9, -2.0), (0.03, 3.0)] {
        let omega = TAU * 8000.0;
        let mut prog = PumpProgram::new(1234.0, duty, omega).unwrap();
        prog.phase_center = center;
        let (mean, harm) = pulse_moments(prog.p0, duty, omega, center);
        OracleResult::scalar("cycle mean", mean, prog.cycle_mean(), 1e-10).check();
        let h = prog.harmonic_amplitude();
        OracleResult::relative("first harmonic", &[harm.re, harm.im], &[h.re, h.im], 1e-9, mean).check();
    }
}

#[test]
fn pump_waveform_matches_reference_pulse() {
    let omega = TAU * 8000.0;
    let mut prog = PumpProgram::new(50.0, 0.1, omega).unwrap();
    prog.phase_center = 0.7;
    let period = TAU / omega;
    for i in 0..5000 {
        // stay off the window edges
        let t = (i as f64 + 0.37) * period / 997.0;
        let expect = pulse_rate(50.0, 0.1, omega, 0.7, t);
        assert_eq!(prog.rate(t), expect, "t = {t:e}");
    }
    for (t0, t1) in [(0.0, period), (1e-6, 3.3e-4), (0.2 * period, 0.21 * period)] {
        let n = 200_000;
        let q = simpson(|t| pulse_rate(50.0, 0.1, omega, 0.7, t), t0, t1, n) / (t1 - t0);
        OracleResult::relative("interval mean", &[q], &[prog.mean_over(t0, t1)], 1e-3, 50.0).check();
    }
}

#[test]
fn ou_closed_forms() {
    let s = ou_statistics(1.0, 2.0, f64::INFINITY);
    assert_eq!(s.variance, 1.0);
    assert_eq!(s.variance_at_horizon, 1.0);
    assert_eq!(s.autocorr_rate, 1.0);

    let (na, f) = (3.0e7, 2.0);
    let gp = 517.0;
    let s = ou_statistics(gp, 2.0 * gp * na * f * (f + 1.0) / 3.0, 10.0);
    OracleResult::scalar("closure", na * f * (f + 1.0) / 3.0, s.variance, 1e-12).check();
}

fn bare_system(gamma_rel: f64) -> SpinSystem {
    let f_mod = 8000.0;
    SpinSystem {
        ensemble: EnsembleConfig::new(1e6, 1.0, GAMMA_RB87, gamma_rel).unwrap(),
        field: FieldProgram::static_field(TAU * f_mod / GAMMA_RB87.abs()),
        pump: PumpProgram::with_mean(0.0, 1.0, TAU * f_mod).unwrap(),
        probe: ProbeConfig {
            s1_flux: 1.0,
            coupling: 1.0,
            backaction_coupling: 0.0,
            shot_psd: 1.0,
            s3_psd: 0.0,
            squeezing_db: 0.0,
        },
    }
}

#[test]
fn simulated_variance_and_decay_match_ou() {
    let gp = 800.0;
    let sys = bare_system(gp);
    let plan = SimPlan {
        dt: 1.25e-6,
        record_seconds: 0.5,
        n_records: 32,
        seed: 5,
        sample_rate: 32000.0,
    };
    let noise = NoiseSwitches {
        spin: true,
        backaction: false,
        backaction_scale: 1.0,
        probe: false,
    };
    let ou = ou_statistics(gp, 2.0 * gp * sys.ensemble.spin_variance(), f64::INFINITY);
    let lag = 16usize;
    let (mut var, mut cov, mut n) = (0.0, 0.0, 0.0);
    for r in 0..plan.n_records {
        let tr = simulate_record(&plan, &sys, &noise, r).unwrap();
        let x = tr.component(0);
        for i in 0..x.len() - lag {
            var += x[i] * x[i];
            cov += x[i] * x[i + lag];
            n += 1.0;
        }
    }
    var /= n;
    cov /= n;
    // 16 s at Γ′ = 800 s⁻¹: about 1.2 % statistical error on the variance
    OracleResult::scalar("F_x variance", ou.variance, var, 0.03).check();
    let rate = -(cov / var).ln() * plan.sample_rate / lag as f64;
    OracleResult::scalar("F_x decay rate", ou.autocorr_rate, rate, 0.03).check();
}

fn reference_like(detuning_hz: f64) -> FirstOrder {
    let ens = EnsembleConfig::new(1e8, 1.0, GAMMA_RB87, 0.7 * TAU * 170.0).unwrap();
    let pump = PumpProgram::with_mean(0.3 * TAU * 170.0, 0.1, TAU * 8000.0).unwrap();
    FirstOrder::new(&ens, &pump, TAU * detuning_hz).unwrap()
}

fn params(fo: &FirstOrder) -> FirstOrderParams {
    FirstOrderParams {
        delta_omega: fo.delta_omega,
        detuning: fo.detuning,
        f0: fo.f0,
        gamma_abs: fo.gamma_abs,
    }
}

#[test]
fn first_order_matches_direct_solve() {
    for det in [-300.0, -40.0, 0.0, 25.0, 170.0, 900.0] {
        let fo = reference_like(det);
        for w in [0.0, 100.0, 1068.0, 5000.0, 1e5] {
            let (x, y) = first_order_solve(&params(&fo), w).unwrap();
            let (re, im) = fo.quadratures(w);
            let scale = x.norm().max(y.norm());
            OracleResult::relative(
                "first-order quadratures",
                &[x.re, x.im, y.re, y.im],
                &[re.re, re.im, im.re, im.im],
                1e-12,
                scale,
            )
            .check();
        }
    }
}

#[test]
fn direct_solve_reduces_to_resonant_form() {
    let fo = reference_like(0.0);
    for w in [0.0, 300.0, 2000.0, 1e4] {
        let (_, y) = first_order_solve(&params(&fo), w).unwrap();
        let r = fo.resonant_im(w);
        OracleResult::relative("resonant Im", &[y.re, y.im], &[r.re, r.im], 1e-12, y.norm()).check();
    }
}

#[test]
fn drive_term_symmetric_in_detuning() {
    for det in [30.0, 170.0, 600.0] {
        let (p, m) = (params(&reference_like(det)), params(&reference_like(-det)));
        for w in [0.0, 500.0, 3000.0] {
            let (xp, yp) = first_order_solve(&p, w).unwrap();
            let (xm, ym) = first_order_solve(&m, w).unwrap();
            let mag = |x: Complex64, y: Complex64| (x.norm_sqr() + y.norm_sqr()).sqrt();
            OracleResult::scalar("|F₊⁽¹⁾| under δ → −δ", mag(xp, yp), mag(xm, ym), 1e-12).check();
        }
    }
}

#[test]
fn response_rolls_off_as_inverse_frequency() {
    let p = params(&reference_like(40.0));
    let (_, y1) = first_order_solve(&p, 1e7).unwrap();
    let (_, y2) = first_order_solve(&p, 1e8).unwrap();
    OracleResult::scalar("1/ω rolloff", 10.0, y1.norm() / y2.norm(), 1e-4).check();
}

#[test]
fn singular_system_detected() {
    let p = FirstOrderParams {
        delta_omega: 0.0,
        detuning: 0.0,
        f0: Complex64::new(1.0, 0.0),
        gamma_abs: 1.0,
    };
    assert!(first_order_solve(&p, 0.0).is_none());
}

#[test]
fn steady_state_matches_direct_lorentzian() {
    let ens = EnsembleConfig::new(1e8, 1.0, GAMMA_RB87, 700.0).unwrap();
    let pump = PumpProgram::with_mean(300.0, 0.1, TAU * 8000.0).unwrap();
    let (_, harm) = pulse_moments(pump.p0, 0.1, pump.omega_mod, 0.0);
    for det in [-500.0, 0.0, 1000.0] {
        let expect = harm * 1e8 / Complex64::new(1000.0, det);
        let got = steady_state(&ens, &pump, det).unwrap();
        OracleResult::relative("F₊⁽⁰⁾", &[expect.re, expect.im], &[got.re, got.im], 1e-9, expect.norm())
            .check();
    }
}
