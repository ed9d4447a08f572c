//! Square-wave modulated optical pumping.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};

use crate::error::{ensure, Result};

/// Pumping rate that is `p0` for a fraction `duty` of each modulation period
/// and zero otherwise. The on-window is centered on Ωt = `phase_center`
/// (mod 2π).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PumpProgram {
    /// Peak pumping rate, s⁻¹.
    pub p0: f64,
    pub duty: f64,
    /// Modulation angular frequency Ω, rad/s.
    pub omega_mod: f64,
    pub phase_center: f64,
}

impl PumpProgram {
    pub fn new(p0: f64, duty: f64, omega_mod: f64) -> Result<Self> {
        let p = Self {
            p0,
            duty,
            omega_mod,
            phase_center: 0.0,
        };
        p.validate()?;
        Ok(p)
    }

    /// Program with cycle mean `p_bar`.
    pub fn with_mean(p_bar: f64, duty: f64, omega_mod: f64) -> Result<Self> {
        Self::new(p_bar / duty, duty, omega_mod)
    }

    pub fn validate(&self) -> Result<()> {
        ensure(self.p0.is_finite() && self.p0 >= 0.0, || {
            format!("p0 must be >= 0, got {}", self.p0)
        })?;
        ensure(self.duty > 0.0 && self.duty <= 1.0, || {
            format!("duty must be in (0, 1], got {}", self.duty)
        })?;
        ensure(self.omega_mod.is_finite() && self.omega_mod > 0.0, || {
            "omega_mod must be positive".into()
        })?;
        ensure(self.phase_center.is_finite(), || "phase must be finite".into())
    }

    pub fn period(&self) -> f64 {
        TAU / self.omega_mod
    }

    /// Instantaneous rate P(t).
    pub fn rate(&self, t: f64) -> f64 {
        if self.duty >= 1.0 {
            return self.p0;
        }
        let theta = (self.omega_mod * t - self.phase_center + self.duty * PI).rem_euclid(TAU);
        if theta < TAU * self.duty {
            self.p0
        } else {
            0.0
        }
    }

    /// Accumulated on-phase (rad of Ωt spent inside the window) from the
    /// reference origin to `t`.
    fn on_phase(&self, t: f64) -> f64 {
        let theta = self.omega_mod * t - self.phase_center + self.duty * PI;
        let cycles = (theta / TAU).floor();
        let frac = theta - cycles * TAU;
        cycles * TAU * self.duty + frac.min(TAU * self.duty)
    }

    /// Exact mean of P over [t0, t1].
    pub fn mean_over(&self, t0: f64, t1: f64) -> f64 {
        if self.duty >= 1.0 || t1 <= t0 {
            return self.rate(t0);
        }
        let on = self.on_phase(t1) - self.on_phase(t0);
        self.p0 * on / (self.omega_mod * (t1 - t0))
    }

    /// Cycle average P̄.
    pub fn cycle_mean(&self) -> f64 {
        self.p0 * self.duty
    }

    /// First harmonic P₊ = (Ω/2π)∫P(t)e^{iΩt}dt over one period.
    pub fn harmonic_amplitude(&self) -> Complex64 {
        if self.duty >= 1.0 {
            return Complex64::new(0.0, 0.0);
        }
        let mag = self.p0 * (PI * self.duty).sin() / PI;
        Complex64::from_polar(mag, self.phase_center)
    }
}

/// Rate P(t) of `prog`.
pub fn pump_rate(prog: &PumpProgram, t: f64) -> f64 {
    prog.rate(t)
}

pub fn cycle_mean(prog: &PumpProgram) -> f64 {
    prog.cycle_mean()
}

pub fn harmonic_amplitude(prog: &PumpProgram) -> Complex64 {
    prog.harmonic_amplitude()
}
