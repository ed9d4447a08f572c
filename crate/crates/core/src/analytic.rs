//! First-order closed-form model of the demodulated magnetometer.
//!
//! In the frame rotating at the pump frequency, F₊ = (iF_y + F_z)e^{iΩt}
//! relaxes at Δω = Γ + P̄ toward F₊⁽⁰⁾ = P₊F_max/(iδ + Δω), δ = ω_L − Ω. A
//! field perturbation b(t) shows up in the quadrature v = G·S₁·Im F₊ with
//! response R(ω) = γ⟨u⟩/(−iω + Δω), and the spin noise in v has the same
//! Lorentzian shape ℒ(ω) = Δω²/(ω² + Δω²). Angular frequencies are rad/s,
//! spectral densities are single-sided per Hz.
//!
//! Squeezing enters through the optical floor ξ²·S_N only, so
//!
//!   S_B^sq/S_B^SQL = (ℒζ² + ξ²)/(ℒζ² + 1),   ζ² = S_σ/S_N.
//!
//! [`squeezed_ratio_printed`] evaluates the other arrangement,
//! (1 + ℒξ²ζ⁻²)/(1 + ℒζ⁻²), which does not follow from S_B and is kept only
//! for comparison.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::model::{hz_to_rad, rad_to_hz, EnsembleConfig, GAMMA_RB87};
use crate::pump::PumpProgram;
use crate::sde::SpinSystem;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalyticParams {
    /// Δω = Γ + P̄, rad/s.
    pub delta_omega: f64,
    /// ⟨u⟩ = G·S₁·F₊⁽⁰⁾.
    pub u_mean: f64,
    /// Effective gyromagnetic ratio seen by the v quadrature, rad·s⁻¹·T⁻¹.
    pub gamma: f64,
    /// Spin-noise PSD of v at ω = 0.
    pub s_sigma: f64,
    /// Coherent-state optical floor of v.
    pub s_shot: f64,
    pub xi2: f64,
}

impl AnalyticParams {
    pub fn validate(&self) -> Result<()> {
        ensure(self.delta_omega.is_finite() && self.delta_omega > 0.0, || {
            format!("delta_omega must be positive, got {}", self.delta_omega)
        })?;
        ensure(self.s_sigma >= 0.0 && self.s_shot >= 0.0, || {
            "noise densities must be >= 0".into()
        })?;
        ensure(self.xi2 > 0.0 && self.xi2 <= 1.0, || {
            format!("xi2 must be in (0, 1], got {}", self.xi2)
        })
    }

    /// ζ² = S_σ/S_N (coherent-state floor).
    pub fn zeta2(&self) -> f64 {
        self.s_sigma / self.s_shot
    }

    /// Detected optical floor ξ²·S_N.
    pub fn floor(&self) -> f64 {
        self.xi2 * self.s_shot
    }

    pub fn with_xi2(mut self, xi2: f64) -> Self {
        self.xi2 = xi2;
        self
    }

    /// Parameters of the simulated system, resonant or not.
    ///
    /// `v_shot_floor` is the coherent optical floor of the demodulated
    /// quadrature (twice the S₂ floor with the lock-in gain convention).
    /// The field response of v is γ-sign independent: the sign of γ only
    /// mirrors F_y, so the effective γ is −|γ|.
    pub fn from_system(sys: &SpinSystem, v_shot_floor: f64) -> Result<Self> {
        let dw = sys.delta_omega();
        ensure(dw > 0.0, || "Gamma + mean pump must be positive".into())?;
        let detuning = sys.ensemble.gamma.abs() * sys.field.b0 - sys.pump.omega_mod;
        let f0 = steady_state(&sys.ensemble, &sys.pump, detuning)?;
        let g = sys.probe.gain();
        let p = Self {
            delta_omega: dw,
            u_mean: g * f0.re,
            gamma: -sys.ensemble.gamma.abs(),
            s_sigma: 4.0 * g * g * sys.ensemble.spin_variance() / dw,
            s_shot: v_shot_floor,
            xi2: sys.probe.xi2(),
        };
        p.validate()?;
        Ok(p)
    }

    /// Normalized parameters reproducing a measured operating point: knee
    /// `delta_hz`, SQL measurement bandwidth `w3db_hz` and SQL magnetic noise
    /// `sqrt_sb` (T/√Hz) at `f_probe` (Hz). The optical floor is set to 1.
    pub fn from_targets(
        delta_hz: f64,
        w3db_hz: f64,
        xi2: f64,
        sqrt_sb: f64,
        f_probe: f64,
    ) -> Result<Self> {
        let zeta2 = zeta2_from_bandwidths(delta_hz, w3db_hz)?;
        let dw = hz_to_rad(delta_hz);
        let mut p = Self {
            delta_omega: dw,
            u_mean: 1.0,
            gamma: GAMMA_RB87,
            s_sigma: zeta2,
            s_shot: 1.0,
            xi2: 1.0,
        };
        let sb1 = sensitivity(&p, hz_to_rad(f_probe))?;
        p.u_mean = (sb1 / (sqrt_sb * sqrt_sb)).sqrt();
        p.xi2 = xi2;
        p.validate()?;
        Ok(p)
    }
}

/// ζ² implied by a knee and an SQL measurement bandwidth, (ω_3dB/Δω)² − 1.
pub fn zeta2_from_bandwidths(delta_hz: f64, w3db_hz: f64) -> Result<f64> {
    ensure(delta_hz > 0.0 && w3db_hz >= delta_hz, || {
        format!("need 0 < delta ({delta_hz}) <= w3db ({w3db_hz})")
    })?;
    Ok((w3db_hz / delta_hz).powi(2) - 1.0)
}

/// Zero-order rotating-frame amplitude F₊⁽⁰⁾ for detuning δ = ω_L − Ω.
pub fn steady_state(cfg: &EnsembleConfig, pump: &PumpProgram, detuning: f64) -> Result<Complex64> {
    let dw = cfg.gamma_rel + pump.cycle_mean();
    ensure(dw > 0.0, || "Gamma + mean pump must be positive".into())?;
    Ok(pump.harmonic_amplitude() * cfg.f_max() / Complex64::new(dw, detuning))
}

/// Complex field response of v, signal per tesla.
pub fn responsivity(p: &AnalyticParams, omega: f64) -> Complex64 {
    p.gamma * p.u_mean / Complex64::new(p.delta_omega, -omega)
}

pub fn lineshape(p: &AnalyticParams, omega: f64) -> f64 {
    let d2 = p.delta_omega * p.delta_omega;
    d2 / (omega * omega + d2)
}

/// S_v(ω) = ξ²S_N + ℒ(ω)S_σ.
pub fn signal_noise_spectrum(p: &AnalyticParams, omega: f64) -> f64 {
    p.floor() + lineshape(p, omega) * p.s_sigma
}

/// Magnetic noise density S_v/|R|², T²/Hz.
pub fn sensitivity(p: &AnalyticParams, omega: f64) -> Result<f64> {
    if p.u_mean == 0.0 || p.gamma == 0.0 {
        return Err(Error::ZeroSignal);
    }
    let scale = p.delta_omega * p.delta_omega / (p.gamma * p.gamma * p.u_mean * p.u_mean);
    Ok(scale * (p.s_sigma + p.floor() / lineshape(p, omega)))
}

/// S_B with squeezing over S_B without, at the same ω.
pub fn squeezed_ratio(p: &AnalyticParams, omega: f64) -> f64 {
    let lz = lineshape(p, omega) * p.zeta2();
    (lz + p.xi2) / (lz + 1.0)
}

/// Alternative arrangement (1 + ℒξ²/ζ²)/(1 + ℒ/ζ²), for comparison only.
pub fn squeezed_ratio_printed(p: &AnalyticParams, omega: f64) -> f64 {
    let l = lineshape(p, omega);
    let z = p.zeta2();
    (1.0 + l * p.xi2 / z) / (1.0 + l / z)
}

/// Frequencies (Hz) where S_B doubles its ω = 0 value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bandwidths {
    pub sql_hz: f64,
    pub squeezed_hz: f64,
}

impl Bandwidths {
    pub fn ratio(&self) -> f64 {
        self.squeezed_hz / self.sql_hz
    }
}

/// ω_3dB = Δω√(ζ² + 1) and its squeezed counterpart
/// ω_3dB·√((1 + ζ²/ξ²)/(1 + ζ²)).
pub fn bandwidth_3db(p: &AnalyticParams) -> Bandwidths {
    let z = p.zeta2();
    let sql = p.delta_omega * (z + 1.0).sqrt();
    let sq = sql * ((1.0 + z / p.xi2) / (1.0 + z)).sqrt();
    Bandwidths {
        sql_hz: rad_to_hz(sql),
        squeezed_hz: rad_to_hz(sq),
    }
}

/// Increase of the F_x variance per unit single-sided S₃ PSD driving the
/// backaction rotation: G_ba²·|F₊⁽⁰⁾|²/(8Δω).
pub fn backaction_variance_slope(backaction_coupling: f64, f0: Complex64, delta_omega: f64) -> f64 {
    backaction_coupling * backaction_coupling * f0.norm_sqr() / (8.0 * delta_omega)
}

/// Linear response of F₊⁽¹⁾ to B_x about a possibly detuned steady state.
///
/// Writing F₊⁽¹⁾ = x + iy, the Fourier amplitudes solve
/// [[a, −δ], [δ, a]]·(x, y) = |γ|·(Im F₊⁽⁰⁾, −Re F₊⁽⁰⁾) with a = −iω + Δω.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FirstOrder {
    pub delta_omega: f64,
    pub detuning: f64,
    pub f0: Complex64,
    pub gamma_abs: f64,
}

impl FirstOrder {
    pub fn new(cfg: &EnsembleConfig, pump: &PumpProgram, detuning: f64) -> Result<Self> {
        Ok(Self {
            delta_omega: cfg.gamma_rel + pump.cycle_mean(),
            detuning,
            f0: steady_state(cfg, pump, detuning)?,
            gamma_abs: cfg.gamma.abs(),
        })
    }

    /// (Re F₊⁽¹⁾, Im F₊⁽¹⁾) per tesla of drive at ω.
    pub fn quadratures(&self, omega: f64) -> (Complex64, Complex64) {
        let a = Complex64::new(self.delta_omega, -omega);
        let d = self.detuning;
        let r1 = self.gamma_abs * self.f0.im;
        let r2 = -self.gamma_abs * self.f0.re;
        let det = a * a + d * d;
        ((a * r1 + d * r2) / det, (a * r2 - d * r1) / det)
    }

    /// Resonant form −|γ|F₊⁽⁰⁾/(−iω + Δω) of Im F₊⁽¹⁾.
    pub fn resonant_im(&self, omega: f64) -> Complex64 {
        -self.gamma_abs * self.f0.re / Complex64::new(self.delta_omega, -omega)
    }
}
