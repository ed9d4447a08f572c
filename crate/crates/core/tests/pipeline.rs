mod oracle;

use bellbloom::analytic;
use bellbloom::config::{Profile, RunConfig};
use bellbloom::experiments::{
    field_scan_calibration, magnetic_spectrum, predicted_responsivity, responsivity_sweep, sensitivity_run,
    tone_power, FieldScan, Pipeline,
};
use bellbloom::model::hz_to_rad;
use bellbloom::sde::{simulate_record, NoiseSwitches};
use oracle::OracleResult;

fn desk(records: usize) -> RunConfig {
    RunConfig {
        n_records: records,
        ..RunConfig::profile(Profile::Desk)
    }
}

#[test]
fn noiseless_calibration_matches_model_slope() {
    let cfg = desk(1);
    let cal = field_scan_calibration(&cfg, &FieldScan::from_config(&cfg), &NoiseSwitches::NONE).unwrap();
    let model = predicted_responsivity(&cfg, 0.0).unwrap().re;
    OracleResult::scalar("dv/dB", model, cal.slope.value, 0.005).check();
    // dispersive: v changes sign across resonance, u peaks near it
    let mid = cal.points.len() / 2;
    assert!(cal.points[0].v * cal.points[cal.points.len() - 1].v < 0.0);
    assert!(cal.points[mid].u.abs() > cal.points[0].u.abs());
}

#[test]
fn noisy_calibration_agrees_within_its_error() {
    let cfg = desk(1);
    let cal = field_scan_calibration(&cfg, &FieldScan::from_config(&cfg), &cfg.noise()).unwrap();
    let model = predicted_responsivity(&cfg, 0.0).unwrap().re;
    assert!(cal.slope.pull(model).abs() < 4.0, "{:?} vs {model:e}", cal.slope);
    assert!((cal.slope.value / model - 1.0).abs() < 0.01);
}

#[test]
fn scan_that_misses_resonance_is_rejected() {
    let cfg = desk(1);
    let mut scan = FieldScan::from_config(&cfg);
    scan.center += 3.0 * scan.half_span;
    assert!(field_scan_calibration(&cfg, &scan, &NoiseSwitches::NONE).is_err());
    scan.points = 5;
    assert!(field_scan_calibration(&cfg, &scan, &NoiseSwitches::NONE).is_err());
}

#[test]
fn tone_power_is_quadratic_in_amplitude() {
    let cfg = RunConfig {
        sweep_records: 2,
        ..desk(1)
    };
    let f = 35.0 * Pipeline::from_config(&cfg).unwrap().demod_df();
    let a = cfg.tone_amplitude();
    for noise in [false, true] {
        let c = RunConfig {
            spin_noise: noise,
            backaction_noise: noise,
            probe_noise: noise,
            ..cfg.clone()
        };
        let p1 = tone_power(&c, f, a, 7).unwrap().value;
        let p2 = tone_power(&c, f, 2.0 * a, 7).unwrap().value;
        let ph = tone_power(&c, f, 0.5 * a, 7).unwrap().value;
        OracleResult::scalar("P(2a)/P(a)", 4.0, p2 / p1, 0.01).check();
        OracleResult::scalar("P(a)/P(a/2)", 4.0, p1 / ph, 0.01).check();
    }
}

#[test]
fn noiseless_tone_follows_closed_form_response() {
    let cfg = RunConfig {
        spin_noise: false,
        backaction_noise: false,
        probe_noise: false,
        sweep_records: 1,
        ..desk(1)
    };
    let a = cfg.tone_amplitude();
    let df = Pipeline::from_config(&cfg).unwrap().demod_df();
    let p0 = tone_power(&cfg, 5.0 * df, a, 0).unwrap().value;
    for f in [25.0 * df, 80.0 * df, 200.0 * df, 350.0 * df] {
        let p = tone_power(&cfg, f, a, 0).unwrap().value;
        let r = analytic::lineshape(&cfg.analytic().unwrap(), hz_to_rad(f))
            / analytic::lineshape(&cfg.analytic().unwrap(), hz_to_rad(5.0 * df));
        OracleResult::scalar("relative tone response", r, p / p0, 0.01).check();
    }
}

#[test]
fn zero_backaction_coupling_removes_s3_exactly() {
    let base = RunConfig {
        backaction_coupling: Some(0.0),
        ..desk(2)
    };
    let p = Pipeline::from_config(&base).unwrap();
    let mut off = p.clone();
    off.noise.backaction = false;
    let mut loud = p.clone();
    loud.noise.backaction_scale = 1e4;
    for i in 0..2 {
        let a = simulate_record(&p.plan, &p.sys, &p.noise, i).unwrap();
        let b = simulate_record(&off.plan, &off.sys, &off.noise, i).unwrap();
        let c = simulate_record(&loud.plan, &loud.sys, &loud.noise, i).unwrap();
        assert_eq!(a.f_samples, b.f_samples);
        assert_eq!(a.f_samples, c.f_samples);
    }
}

#[test]
fn runs_are_reproducible() {
    let cfg = desk(3);
    let p = Pipeline::from_config(&cfg).unwrap();
    let a = p.run().unwrap();
    let b = p.run().unwrap();
    assert_eq!(a, b);
    let other = Pipeline::from_config(&RunConfig { seed: 2, ..cfg }).unwrap().run().unwrap();
    assert_ne!(a.records, other.records);
}

#[test]
fn magnetic_spectrum_needs_both_measurements() {
    let cfg = desk(1);
    let s = Pipeline::from_config(&cfg).unwrap().run().unwrap().spectrum().unwrap();
    assert!(magnetic_spectrum(&s, None, None).is_err());
    assert!(sensitivity_run(&cfg, 0.0, None, None).is_err());
}

#[test]
fn readout_gain_cancels_in_magnetic_units() {
    // doubling G·S₁ doubles v, its shot noise and dv/dB in the same way
    let base = RunConfig {
        sweep_points: 6,
        sweep_records: 1,
        backaction_coupling: Some(1e-8),
        ..desk(10)
    };
    let scaled = RunConfig {
        s1_flux: 2.0 * base.s1_flux,
        shot_psd: Some(4.0 * base.probe().unwrap().shot_psd),
        s3_psd: Some(base.probe().unwrap().s3_psd),
        ..base.clone()
    };
    let mut spectra = Vec::new();
    for c in [&base, &scaled] {
        let cal = field_scan_calibration(c, &FieldScan::from_config(c), &c.noise()).unwrap();
        let freqs = bellbloom::experiments::sweep_frequencies(c).unwrap();
        let resp = responsivity_sweep(c, &freqs, c.tone_amplitude()).unwrap();
        spectra.push(sensitivity_run(c, 0.0, Some(&cal), Some(&resp)).unwrap().b_spectrum);
    }
    let r = spectra[0].band(10.0, 850.0);
    OracleResult::relative("S_B", &spectra[0].psd[r.clone()], &spectra[1].psd[r], 1e-6, 0.0).check();
}

#[test]
fn mean_quadratures_match_steady_state() {
    let cfg = desk(4);
    let out = Pipeline::from_config(&cfg).unwrap().run().unwrap();
    let model = cfg.analytic().unwrap().u_mean;
    OracleResult::scalar("⟨u⟩", model, out.u_mean().value, 2e-3).check();
    // the counter-rotating term leaves v slightly off zero on resonance
    assert!(out.v_mean().value.abs() < 0.01 * model);
}

#[test]
fn halving_the_step_leaves_the_spectrum_unchanged() {
    let coarse = desk(40);
    let fine = RunConfig {
        dt: Some(coarse.dt() / 2.0),
        ..coarse.clone()
    };
    let bands = [(10.0, 100.0), (100.0, 250.0), (250.0, 500.0), (500.0, 850.0)];
    let levels = |c: &RunConfig| {
        let out = Pipeline::from_config(c).unwrap().run().unwrap();
        bands.map(|(lo, hi)| out.jackknife(|s| Ok(s.band_mean(lo, hi).unwrap())).unwrap())
    };
    let (a, b) = (levels(&coarse), levels(&fine));
    for i in 0..bands.len() {
        let err = (a[i].stderr.powi(2) + b[i].stderr.powi(2)).sqrt();
        assert!(
            (a[i].value - b[i].value).abs() < 3.0 * err,
            "band {:?}: {:?} vs {:?}",
            bands[i],
            a[i],
            b[i]
        );
    }
}
