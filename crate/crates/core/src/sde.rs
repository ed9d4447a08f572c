//! Stochastic Bloch equation for the collective spin.
//!
//! dF/dt = (−γB x̂ + G_ba·S₃ ẑ) × F − ΓF + P(t)(ẑF_max − F) + N_F
//!
//! with N_F white, per-axis intensity 2·(F(F+1)/3)·N_A·(Γ + P(t)), and S₃ a
//! white Gaussian sequence uncorrelated with the detected S₂ noise.
//!
//! Within one step the pump rate, the field and S₃ are held constant, which
//! makes the remaining equation linear with constant coefficients. The step
//! solves that exactly: isotropic decay commutes with the precession about x̂,
//! so the homogeneous part is a scaled rotation, the pump forcing is a closed
//! form integral, and the noise increment has the exact Ornstein-Uhlenbeck
//! variance. The small rotation about ẑ from S₃ is applied afterwards
//! (Stratonovich sense, norm preserving).

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;

use crate::error::{Error, Result};
use crate::model::{EnsembleConfig, FieldProgram, ProbeConfig};
use crate::pump::PumpProgram;

pub type Vec3 = [f64; 3];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpinState {
    pub f: Vec3,
    pub t: f64,
}

impl SpinState {
    pub fn is_finite(&self) -> bool {
        self.f.iter().all(|x| x.is_finite())
    }

    /// Soft sanity bound |F| ≤ F_max + `sigmas` standard deviations of the
    /// per-axis equilibrium noise.
    pub fn is_plausible(&self, cfg: &EnsembleConfig, sigmas: f64) -> bool {
        let norm = self.f.iter().map(|x| x * x).sum::<f64>().sqrt();
        self.is_finite() && norm <= cfg.f_max() + sigmas * (3.0 * cfg.spin_variance()).sqrt()
    }
}

/// Everything the integrator needs to know about the physical setup.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpinSystem {
    pub ensemble: EnsembleConfig,
    pub field: FieldProgram,
    pub pump: PumpProgram,
    pub probe: ProbeConfig,
}

impl SpinSystem {
    pub fn validate(&self) -> Result<()> {
        self.ensemble.validate()?;
        self.field.validate()?;
        self.pump.validate()?;
        self.probe.validate()
    }

    /// Response bandwidth Γ + P̄, s⁻¹.
    pub fn delta_omega(&self) -> f64 {
        self.ensemble.gamma_rel + self.pump.cycle_mean()
    }

    pub fn f_mod(&self) -> f64 {
        crate::model::rad_to_hz(self.pump.omega_mod)
    }
}

/// Which stochastic terms are active.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSwitches {
    pub spin: bool,
    pub backaction: bool,
    /// Extra factor on the S₃ noise power on top of 1/ξ².
    pub backaction_scale: f64,
    pub probe: bool,
}

impl NoiseSwitches {
    pub const ALL: Self = Self {
        spin: true,
        backaction: true,
        backaction_scale: 1.0,
        probe: true,
    };
    pub const NONE: Self = Self {
        spin: false,
        backaction: false,
        backaction_scale: 1.0,
        probe: false,
    };
}

impl Default for NoiseSwitches {
    fn default() -> Self {
        Self::ALL
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimPlan {
    /// Integrator step, s.
    pub dt: f64,
    pub record_seconds: f64,
    pub n_records: usize,
    pub seed: u64,
    /// Rate of the stored trajectory, Hz.
    pub sample_rate: f64,
}

impl SimPlan {
    /// Default plan for a given modulation frequency: 200 steps per cycle,
    /// storage at 8 samples per cycle, 100 records of 0.5 s.
    pub fn for_modulation(f_mod: f64, seed: u64) -> Self {
        Self {
            dt: 1.0 / (200.0 * f_mod),
            record_seconds: 0.5,
            n_records: 100,
            seed,
            sample_rate: 8.0 * f_mod,
        }
    }

    pub fn samples_per_record(&self) -> usize {
        (self.record_seconds * self.sample_rate).round() as usize
    }

    pub fn steps_per_sample(&self) -> usize {
        (1.0 / (self.sample_rate * self.dt)).round().max(1.0) as usize
    }

    /// The step actually used: the sample interval split evenly.
    pub fn effective_dt(&self) -> f64 {
        1.0 / (self.sample_rate * self.steps_per_sample() as f64)
    }

    pub fn validate(&self, f_mod: f64) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidPlan(m));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if self.dt > 1.0 / (100.0 * f_mod) * (1.0 + 1e-9) {
            return bad(format!(
                "dt = {:.3e} s exceeds 1/(100 f_mod) = {:.3e} s",
                self.dt,
                1.0 / (100.0 * f_mod)
            ));
        }
        if self.sample_rate < 4.0 * f_mod {
            return bad(format!(
                "sample_rate {} Hz below 4 f_mod = {} Hz",
                self.sample_rate,
                4.0 * f_mod
            ));
        }
        if self.n_records < 1 {
            return bad("n_records must be >= 1".into());
        }
        let n = self.record_seconds * self.sample_rate;
        if !(n >= 1.0) || (n - n.round()).abs() > 1e-6 * n.max(1.0) {
            return bad(format!("record_seconds * sample_rate = {n} is not an integer"));
        }
        let k = 1.0 / (self.sample_rate * self.dt);
        if (k - k.round()).abs() > 1e-6 * k {
            return bad(format!(
                "sample interval is not a whole number of steps ({k:.6})"
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpinTrajectory {
    pub times: Vec<f64>,
    pub f_samples: Vec<Vec3>,
    pub plan: SimPlan,
    pub system: SpinSystem,
    pub record_index: usize,
}

impl SpinTrajectory {
    pub fn component(&self, axis: usize) -> Vec<f64> {
        self.f_samples.iter().map(|f| f[axis]).collect()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,Fx,Fy,Fz")?;
        for (t, f) in self.times.iter().zip(&self.f_samples) {
            writeln!(w, "{:e},{:e},{:e},{:e}", t, f[0], f[1], f[2])?;
        }
        Ok(())
    }
}

/// Per-axis white-noise intensity G_N_F = 2·(F(F+1)/3)·N_A·(Γ + P).
pub fn diffusion_strength(cfg: &EnsembleConfig, p_now: f64) -> f64 {
    2.0 * cfg.spin_variance() * (cfg.gamma_rel + p_now)
}

/// Deterministic part of the Bloch equation at the state's time.
pub fn drift(state: &SpinState, sys: &SpinSystem, s3_now: f64) -> Vec3 {
    let [fx, fy, fz] = state.f;
    let wx = -sys.ensemble.gamma * sys.field.bx(state.t);
    let wz = sys.probe.backaction_coupling * s3_now;
    let p = sys.pump.rate(state.t);
    let g = sys.ensemble.gamma_rel;
    let fmax = sys.ensemble.f_max();
    [
        -wz * fy - (g + p) * fx,
        wz * fx - wx * fz - (g + p) * fy,
        wx * fy - (g + p) * fz + p * fmax,
    ]
}

/// Coefficients held constant over one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInputs {
    /// Mean pumping rate over the step, s⁻¹.
    pub pump_rate: f64,
    /// B_x at the step midpoint, T.
    pub bx: f64,
    /// S₃ value for this step.
    pub s3: f64,
}

#[derive(Debug, Clone, Copy)]
struct StepCoefficients {
    key: (u64, u64, u64),
    decay: f64,
    cos: f64,
    sin: f64,
    /// ∫₀^dt e^{−Γ's}(cos ωs, sin ωs) ds
    ic: f64,
    is: f64,
    noise_std: f64,
}

/// (e^x − 1)/x, accurate near zero.
fn phi1(x: Complex64) -> Complex64 {
    if x.norm() < 1e-3 {
        1.0 + x * (0.5 + x * (1.0 / 6.0 + x * (1.0 / 24.0 + x / 120.0)))
    } else {
        (x.exp() - 1.0) / x
    }
}

/// One-step propagator for a fixed ensemble.
#[derive(Debug, Clone)]
pub struct Integrator {
    gamma: f64,
    gamma_rel: f64,
    f_max: f64,
    backaction_coupling: f64,
    ensemble: EnsembleConfig,
    cache: Option<StepCoefficients>,
}

impl Integrator {
    pub fn new(sys: &SpinSystem) -> Self {
        Self {
            gamma: sys.ensemble.gamma,
            gamma_rel: sys.ensemble.gamma_rel,
            f_max: sys.ensemble.f_max(),
            backaction_coupling: sys.probe.backaction_coupling,
            ensemble: sys.ensemble,
            cache: None,
        }
    }

    fn coefficients(&mut self, p: f64, bx: f64, dt: f64) -> StepCoefficients {
        let key = (p.to_bits(), bx.to_bits(), dt.to_bits());
        if let Some(c) = self.cache {
            if c.key == key {
                return c;
            }
        }
        let rate = self.gamma_rel + p;
        let w = -self.gamma * bx;
        let (sin, cos) = (w * dt).sin_cos();
        let z = Complex64::new(-rate * dt, w * dt);
        let integral = phi1(z) * dt;
        let noise_var = if rate > 0.0 {
            diffusion_strength(&self.ensemble, p) * (-(-2.0 * rate * dt).exp_m1()) / (2.0 * rate)
        } else {
            diffusion_strength(&self.ensemble, p) * dt
        };
        let c = StepCoefficients {
            key,
            decay: (-rate * dt).exp(),
            cos,
            sin,
            ic: integral.re,
            is: integral.im,
            noise_std: noise_var.sqrt(),
        };
        self.cache = Some(c);
        c
    }

    /// Advance one step. `eta` are the three standard normals for the spin
    /// noise (ignored when `spin_noise` is false).
    pub fn advance(
        &mut self,
        state: &SpinState,
        inputs: &StepInputs,
        dt: f64,
        eta: Option<Vec3>,
    ) -> SpinState {
        let c = self.coefficients(inputs.pump_rate, inputs.bx, dt);
        let [fx, fy, fz] = state.f;
        let pump = inputs.pump_rate * self.f_max;
        let mut x = c.decay * fx;
        let mut y = c.decay * (c.cos * fy - c.sin * fz) - pump * c.is;
        let mut z = c.decay * (c.sin * fy + c.cos * fz) + pump * c.ic;
        if let Some(eta) = eta {
            x += c.noise_std * eta[0];
            y += c.noise_std * eta[1];
            z += c.noise_std * eta[2];
        }
        if inputs.s3 != 0.0 {
            let (s, co) = (self.backaction_coupling * inputs.s3 * dt).sin_cos();
            let (x0, y0) = (x, y);
            x = co * x0 - s * y0;
            y = s * x0 + co * y0;
        }
        SpinState {
            f: [x, y, z],
            t: state.t + dt,
        }
    }

    /// Advance one step drawing the spin noise from `rng`.
    pub fn step<R: Rng + ?Sized>(
        &mut self,
        state: &SpinState,
        inputs: &StepInputs,
        dt: f64,
        rng: Option<&mut R>,
        step_index: u64,
    ) -> Result<SpinState> {
        let eta = rng.map(|r| {
            [
                r.sample(StandardNormal),
                r.sample(StandardNormal),
                r.sample(StandardNormal),
            ]
        });
        let next = self.advance(state, inputs, dt, eta);
        if next.is_finite() {
            Ok(next)
        } else {
            Err(Error::IntegrationDiverged {
                step: step_index,
                time: state.t,
            })
        }
    }
}

/// Independent random streams used by one record.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Spin = 0,
    Initial = 1,
    Backaction = 2,
    Probe = 3,
}

/// Counter-based stream for `(seed, record, stream)`.
pub fn record_rng(seed: u64, record: usize, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((record as u64) << 2) | stream as u64);
    rng
}

/// Rotating-frame steady state F₊⁽⁰⁾ mapped back to the lab frame at time t.
fn steady_state_lab(sys: &SpinSystem, t: f64) -> Vec3 {
    let dw = sys.delta_omega();
    if dw <= 0.0 {
        return [0.0; 3];
    }
    let omega = sys.pump.omega_mod;
    let detuning = sys.ensemble.gamma.abs() * sys.field.b0 - omega;
    let fp = sys.pump.harmonic_amplitude() * sys.ensemble.f_max() / Complex64::new(dw, detuning);
    let c = fp * Complex64::from_polar(1.0, -omega * t);
    // precession sense flips F_y for positive γ
    let sign = if sys.ensemble.gamma < 0.0 { 1.0 } else { -1.0 };
    [0.0, sign * c.im, c.re]
}

/// Integrate one steady-state record.
///
/// A warm-up of at least 5/(Γ + P̄), started from the rotating-frame steady
/// state plus an equilibrium fluctuation draw, is run and discarded; the
/// stored record starts at t = 0 in the pump's time base.
pub fn simulate_record(
    plan: &SimPlan,
    sys: &SpinSystem,
    noise: &NoiseSwitches,
    record_index: usize,
) -> Result<SpinTrajectory> {
    sys.validate()?;
    plan.validate(sys.f_mod())?;
    let fs = plan.sample_rate;
    let n = plan.samples_per_record();
    let k = plan.steps_per_sample();
    let dt = plan.effective_dt();
    let dw = sys.delta_omega();
    let warm_samples = if dw > 0.0 {
        (5.0 / dw * fs).ceil() as usize
    } else {
        0
    };

    let mut spin_rng = record_rng(plan.seed, record_index, Stream::Spin);
    let mut init_rng = record_rng(plan.seed, record_index, Stream::Initial);
    let mut ba_rng = record_rng(plan.seed, record_index, Stream::Backaction);

    let s3_std = if noise.backaction && sys.probe.s3_psd > 0.0 {
        let psd = sys.probe.s3_psd * sys.probe.anti_squeezing() * noise.backaction_scale;
        (psd / (2.0 * dt)).sqrt()
    } else {
        0.0
    };

    let t0 = -(warm_samples as f64) / fs;
    let mut f = steady_state_lab(sys, t0);
    if noise.spin {
        let sd = sys.ensemble.spin_variance().sqrt();
        for x in f.iter_mut() {
            let e: f64 = init_rng.sample(StandardNormal);
            *x += sd * e;
        }
    }
    let mut state = SpinState { f, t: t0 };
    let mut integ = Integrator::new(sys);

    let mut times = Vec::with_capacity(n);
    let mut samples = Vec::with_capacity(n);
    let total_samples = warm_samples + n;
    let mut step_index: u64 = 0;
    for i in 0..total_samples {
        // time measured from the sample grid avoids accumulated drift
        let t_sample = (i as f64 - warm_samples as f64) / fs;
        state.t = t_sample;
        if i >= warm_samples {
            times.push(t_sample);
            samples.push(state.f);
        }
        if i + 1 == total_samples {
            break;
        }
        for j in 0..k {
            let ta = t_sample + j as f64 * dt;
            let tb = ta + dt;
            let s3 = if s3_std > 0.0 {
                let e: f64 = ba_rng.sample(StandardNormal);
                s3_std * e
            } else {
                0.0
            };
            let inputs = StepInputs {
                pump_rate: sys.pump.mean_over(ta, tb),
                bx: sys.field.bx(0.5 * (ta + tb)),
                s3,
            };
            let rng = if noise.spin {
                Some(&mut spin_rng)
            } else {
                None
            };
            state = integ.step(&state, &inputs, dt, rng, step_index)?;
            step_index += 1;
        }
    }

    Ok(SpinTrajectory {
        times,
        f_samples: samples,
        plan: *plan,
        system: *sys,
        record_index,
    })
}

/// All `plan.n_records` records, generated in parallel.
pub fn simulate_records(
    plan: &SimPlan,
    sys: &SpinSystem,
    noise: &NoiseSwitches,
) -> Result<Vec<SpinTrajectory>> {
    (0..plan.n_records)
        .into_par_iter()
        .map(|r| simulate_record(plan, sys, noise, r))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::GAMMA_RB87;
    use std::f64::consts::TAU;

    fn probe() -> ProbeConfig {
        ProbeConfig {
            s1_flux: 1.0,
            coupling: 1.0,
            backaction_coupling: 1.0,
            shot_psd: 0.0,
            s3_psd: 0.0,
            squeezing_db: 0.0,
        }
    }

    fn system(gamma_rel: f64, p_bar: f64, b0: f64) -> SpinSystem {
        let f_mod = 1000.0;
        SpinSystem {
            ensemble: EnsembleConfig::new(1e4, 1.0, GAMMA_RB87, gamma_rel).unwrap(),
            field: FieldProgram::static_field(b0),
            pump: PumpProgram::with_mean(p_bar, 0.1, TAU * f_mod).unwrap(),
            probe: probe(),
        }
    }

    #[test]
    fn diffusion_values() {
        let e = EnsembleConfig::new(1.0, 1.0, GAMMA_RB87, 1.0).unwrap();
        assert!((diffusion_strength(&e, 0.0) - 4.0 / 3.0).abs() < 1e-15);
        assert!((diffusion_strength(&e, 1.0) - 8.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn fully_pumped_fixed_point() {
        let mut sys = system(0.0, 50.0, 1e-9);
        sys.field = FieldProgram::static_field(0.0);
        let st = SpinState {
            f: [0.0, 0.0, sys.ensemble.f_max()],
            t: 0.0,
        };
        for t in [0.0, 1e-4, 3.3e-4] {
            let d = drift(&SpinState { t, ..st }, &sys, 0.0);
            assert_eq!(d, [0.0, 0.0, 0.0]);
        }
    }

    #[test]
    fn precession_direction() {
        let mut sys = system(0.0, 0.0, 1e-6);
        sys.pump.p0 = 0.0;
        let st = SpinState {
            f: [0.0, 0.0, 2.0],
            t: 0.0,
        };
        let d = drift(&st, &sys, 0.0);
        let expect = sys.ensemble.gamma * 1e-6 * 2.0;
        assert_eq!(d[0], 0.0);
        assert!((d[1] - expect).abs() < 1e-12 * expect.abs());
        assert_eq!(d[2], 0.0);
    }

    #[test]
    fn exponential_decay_is_exact() {
        let gamma = 10.0;
        let mut sys = system(gamma, 0.0, 1e-9);
        sys.field = FieldProgram::static_field(0.0);
        sys.pump.p0 = 0.0;
        let dt = 1e-4 / gamma;
        let mut integ = Integrator::new(&sys);
        let mut st = SpinState {
            f: [1.0, -2.0, 0.5],
            t: 0.0,
        };
        let n0 = st.f.iter().map(|x| x * x).sum::<f64>().sqrt();
        let inputs = StepInputs {
            pump_rate: 0.0,
            bx: 0.0,
            s3: 0.0,
        };
        let steps = (5.0 / gamma / dt).round() as usize;
        for _ in 0..steps {
            st = integ.advance(&st, &inputs, dt, None);
        }
        let n = st.f.iter().map(|x| x * x).sum::<f64>().sqrt();
        let expect = n0 * (-5.0f64).exp();
        assert!(((n - expect) / expect).abs() < 1e-6);
    }

    #[test]
    fn pure_precession_conserves_norm_and_frequency() {
        let b0 = 1e-7;
        let mut sys = system(0.0, 0.0, b0);
        sys.pump.p0 = 0.0;
        let wl = GAMMA_RB87.abs() * b0;
        let dt = TAU / wl / 200.0;
        let mut integ = Integrator::new(&sys);
        let mut st = SpinState {
            f: [0.3, 0.0, 1.0],
            t: 0.0,
        };
        let inputs = StepInputs {
            pump_rate: 0.0,
            bx: b0,
            s3: 0.0,
        };
        let n0 = st.f.iter().map(|x| x * x).sum::<f64>();
        let mut crossings = Vec::new();
        let mut prev = st.f[2];
        for i in 0..20_000 {
            st = integ.advance(&st, &inputs, dt, None);
            let z = st.f[2];
            if prev > 0.0 && z <= 0.0 {
                // linear interpolation of the downward crossing
                crossings.push((i as f64 + prev / (prev - z)) * dt);
            }
            prev = z;
        }
        let n = st.f.iter().map(|x| x * x).sum::<f64>();
        assert!((n - n0).abs() < 1e-10 * n0);
        let periods = (crossings.len() - 1) as f64;
        let period = (crossings.last().unwrap() - crossings[0]) / periods;
        let w = TAU / period;
        assert!(((w - wl) / wl).abs() < 1e-3, "{w} vs {wl}");
        assert_eq!(st.f[0], 0.3);
    }

    #[test]
    fn drift_matches_cross_product_expression() {
        use rand::Rng;
        let sys = SpinSystem {
            probe: ProbeConfig {
                backaction_coupling: 0.37,
                ..probe()
            },
            ..system(3.0, 20.0, 1e-7)
        };
        let mut rng = record_rng(9, 0, Stream::Spin);
        for _ in 0..1000 {
            let st = SpinState {
                f: [
                    rng.random_range(-1e4..1e4),
                    rng.random_range(-1e4..1e4),
                    rng.random_range(-1e4..1e4),
                ],
                t: rng.random_range(0.0..0.01),
            };
            let s3: f64 = rng.random_range(-5.0..5.0);
            let d = drift(&st, &sys, s3);
            // (a × b) written out componentwise from the vector form
            let om = [
                -sys.ensemble.gamma * sys.field.bx(st.t),
                0.0,
                sys.probe.backaction_coupling * s3,
            ];
            let f = st.f;
            let cross = [
                om[1] * f[2] - om[2] * f[1],
                om[2] * f[0] - om[0] * f[2],
                om[0] * f[1] - om[1] * f[0],
            ];
            let p = sys.pump.rate(st.t);
            let g = sys.ensemble.gamma_rel;
            let pumped = [0.0, 0.0, sys.ensemble.f_max()];
            for i in 0..3 {
                let e = cross[i] - g * f[i] + p * (pumped[i] - f[i]);
                let scale = e.abs().max(1.0) * 1e-12 + 1e-12 * (om[0].abs() * 1e4);
                assert!((d[i] - e).abs() <= scale, "{} vs {}", d[i], e);
            }
        }
    }

    #[test]
    fn plan_validation() {
        let plan = SimPlan::for_modulation(1000.0, 1);
        assert!(plan.validate(1000.0).is_ok());
        assert!(SimPlan { dt: 2e-5, ..plan }.validate(1000.0).is_err());
        assert!(SimPlan { sample_rate: 3000.0, ..plan }.validate(1000.0).is_err());
        assert!(SimPlan { n_records: 0, ..plan }.validate(1000.0).is_err());
        assert!(SimPlan { record_seconds: 0.50001, ..plan }.validate(1000.0).is_err());
    }

    #[test]
    fn records_are_deterministic() {
        let sys = SpinSystem {
            probe: ProbeConfig {
                s3_psd: 1e3,
                ..probe()
            },
            ..system(100.0, 100.0, 1000.0 / 7.015e9)
        };
        let plan = SimPlan {
            record_seconds: 0.02,
            n_records: 2,
            ..SimPlan::for_modulation(1000.0, 42)
        };
        let a = simulate_record(&plan, &sys, &NoiseSwitches::ALL, 1).unwrap();
        let b = simulate_record(&plan, &sys, &NoiseSwitches::ALL, 1).unwrap();
        assert_eq!(a, b);
        let c = simulate_record(&plan, &sys, &NoiseSwitches::ALL, 0).unwrap();
        assert_ne!(a.f_samples, c.f_samples);
        assert_eq!(a.times.len(), plan.samples_per_record());
        assert_eq!(a.times[0], 0.0);
    }

    #[test]
    fn divergence_is_reported() {
        let sys = system(1.0, 1.0, 1e-7);
        let mut integ = Integrator::new(&sys);
        let st = SpinState {
            f: [f64::NAN, 0.0, 0.0],
            t: 0.0,
        };
        let inputs = StepInputs {
            pump_rate: 0.0,
            bx: 1e-7,
            s3: 0.0,
        };
        let err = integ
            .step::<ChaCha8Rng>(&st, &inputs, 1e-6, None, 17)
            .unwrap_err();
        assert!(matches!(err, Error::IntegrationDiverged { step: 17, .. }));
    }

    #[test]
    fn ou_variance_unpumped() {
        // P = 0, B = 0: each axis is an OU process with variance N_A F(F+1)/3
        let gamma = 200.0;
        let mut sys = system(gamma, 0.0, 1e-9);
        sys.field = FieldProgram::static_field(0.0);
        sys.pump.p0 = 0.0;
        let var = sys.ensemble.spin_variance();
        let dt = 1e-4;
        let mut integ = Integrator::new(&sys);
        let mut rng = record_rng(3, 0, Stream::Spin);
        let mut st = SpinState { f: [0.0; 3], t: 0.0 };
        let inputs = StepInputs { pump_rate: 0.0, bx: 0.0, s3: 0.0 };
        for _ in 0..1000 {
            st = integ.step(&st, &inputs, dt, Some(&mut rng), 0).unwrap();
        }
        let mut acc = [0.0; 3];
        let n = 1_000_000;
        for _ in 0..n {
            st = integ.step(&st, &inputs, dt, Some(&mut rng), 0).unwrap();
            for i in 0..3 {
                acc[i] += st.f[i] * st.f[i];
            }
        }
        // 5e4 correlation times per axis, 3 axes: relative error ~0.4%
        let est = acc.iter().sum::<f64>() / (3.0 * n as f64);
        assert!(((est - var) / var).abs() < 0.01, "{est} vs {var}");
    }
}
