//! Physical parameters and shared value types.
//!
//! Internally every angular frequency is in rad/s. Spectra and anything
//! reported to the user use Hz; [`hz_to_rad`] and [`rad_to_hz`] are the only
//! places the factor 2π is applied.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{ensure, Error, Result};

/// Gyromagnetic ratio of the ⁸⁷Rb F=1 ground state, rad·s⁻¹·T⁻¹.
///
/// Chosen so that 4.3 µT precesses at 30.164 kHz. Negative: the spin
/// precesses clockwise about the field.
pub const GAMMA_RB87: f64 = -2.0 * PI * 7.015e9;

pub fn hz_to_rad(f: f64) -> f64 {
    2.0 * PI * f
}

pub fn rad_to_hz(w: f64) -> f64 {
    w / (2.0 * PI)
}

/// Squeezing in dB to the noise power factor ξ².
pub fn xi2_from_db(db: f64) -> f64 {
    10f64.powf(-db / 10.0)
}

pub fn db_from_xi2(xi2: f64) -> f64 {
    -10.0 * xi2.log10()
}

/// Atomic ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub atom_count: f64,
    pub spin_f: f64,
    /// rad·s⁻¹·T⁻¹, signed.
    pub gamma: f64,
    /// Transverse relaxation Γ, s⁻¹.
    pub gamma_rel: f64,
}

impl EnsembleConfig {
    pub fn new(atom_count: f64, spin_f: f64, gamma: f64, gamma_rel: f64) -> Result<Self> {
        let cfg = Self {
            atom_count,
            spin_f,
            gamma,
            gamma_rel,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        ensure(self.atom_count.is_finite() && self.atom_count > 0.0, || {
            format!("atom_count must be positive, got {}", self.atom_count)
        })?;
        ensure(self.spin_f.is_finite() && self.spin_f > 0.0, || {
            format!("spin_f must be positive, got {}", self.spin_f)
        })?;
        ensure(self.gamma.is_finite() && self.gamma != 0.0, || {
            "gamma must be finite and nonzero".into()
        })?;
        ensure(self.gamma_rel.is_finite() && self.gamma_rel >= 0.0, || {
            format!("gamma_rel must be >= 0, got {}", self.gamma_rel)
        })
    }

    /// Maximum collective polarization N_A·F.
    pub fn f_max(&self) -> f64 {
        self.atom_count * self.spin_f
    }

    /// Per-axis equilibrium variance of the unpolarized ensemble, N_A·F(F+1)/3.
    pub fn spin_variance(&self) -> f64 {
        self.atom_count * self.spin_f * (self.spin_f + 1.0) / 3.0
    }
}

/// Magnetic field along x̂: static bias plus an optional small tone.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldProgram {
    /// Tesla.
    pub b0: f64,
    /// Tesla.
    pub tone_amplitude: f64,
    /// Hz.
    pub tone_frequency: f64,
    /// rad.
    pub tone_phase: f64,
    /// Largest allowed |B⁽¹⁾|/|B⁽⁰⁾|.
    pub linear_guard: f64,
}

impl FieldProgram {
    pub const DEFAULT_GUARD: f64 = 0.01;

    pub fn static_field(b0: f64) -> Self {
        Self {
            b0,
            tone_amplitude: 0.0,
            tone_frequency: 0.0,
            tone_phase: 0.0,
            linear_guard: Self::DEFAULT_GUARD,
        }
    }

    pub fn with_tone(mut self, amplitude: f64, frequency: f64, phase: f64) -> Result<Self> {
        self.tone_amplitude = amplitude;
        self.tone_frequency = frequency;
        self.tone_phase = phase;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        ensure(self.b0.is_finite(), || "b0 must be finite".into())?;
        ensure(
            self.tone_amplitude.is_finite()
                && self.tone_frequency.is_finite()
                && self.tone_phase.is_finite(),
            || "tone parameters must be finite".into(),
        )?;
        ensure(
            self.tone_amplitude.abs() <= self.linear_guard * self.b0.abs(),
            || {
                format!(
                    "tone amplitude {:.3e} T exceeds {} x |B0| = {:.3e} T",
                    self.tone_amplitude,
                    self.linear_guard,
                    self.linear_guard * self.b0.abs()
                )
            },
        )
    }

    /// B_x(t) in tesla.
    pub fn bx(&self, t: f64) -> f64 {
        if self.tone_amplitude == 0.0 {
            self.b0
        } else {
            self.b0
                + self.tone_amplitude
                    * (hz_to_rad(self.tone_frequency) * t + self.tone_phase).cos()
        }
    }
}

/// Larmor angular frequency |γ|·B⁽⁰⁾ in rad/s.
pub fn derive_larmor(cfg: &EnsembleConfig, field: &FieldProgram) -> Result<f64> {
    if !(field.b0 > 0.0) {
        return Err(Error::InvalidInput(format!(
            "bias field must be positive, got {} T",
            field.b0
        )));
    }
    Ok(cfg.gamma.abs() * field.b0)
}

/// Probe beam and polarimeter.
///
/// `shot_psd` is the single-sided coherent-state PSD of the additive noise on
/// the raw S₂ signal. Squeezing multiplies it by ξ² and multiplies the S₃ noise
/// driving the backaction term by 1/ξ².
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    /// Mean Stokes S₁, photons/s.
    pub s1_flux: f64,
    /// Faraday coupling G.
    pub coupling: f64,
    /// Coupling of S₃ to the effective field along ẑ. Equal to `coupling`
    /// unless overridden.
    pub backaction_coupling: f64,
    /// Coherent-state single-sided PSD of the S₂ noise, signal²/Hz.
    pub shot_psd: f64,
    /// Coherent-state single-sided PSD of S₃, photons²·s⁻²/Hz.
    pub s3_psd: f64,
    /// ≥ 0 means S₂ is squeezed.
    pub squeezing_db: f64,
}

impl ProbeConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("s1_flux", self.s1_flux),
            ("coupling", self.coupling),
            ("backaction_coupling", self.backaction_coupling),
        ] {
            ensure(v.is_finite(), || format!("{name} must be finite"))?;
        }
        ensure(self.shot_psd.is_finite() && self.shot_psd >= 0.0, || {
            "shot_psd must be >= 0".into()
        })?;
        ensure(self.s3_psd.is_finite() && self.s3_psd >= 0.0, || {
            "s3_psd must be >= 0".into()
        })?;
        ensure(
            self.squeezing_db.is_finite() && self.squeezing_db >= 0.0,
            || format!("squeezing_db must be >= 0, got {}", self.squeezing_db),
        )
    }

    pub fn xi2(&self) -> f64 {
        xi2_from_db(self.squeezing_db)
    }

    /// Factor applied to the S₃ noise; minimum-uncertainty partner of ξ².
    pub fn anti_squeezing(&self) -> f64 {
        1.0 / self.xi2()
    }

    /// Readout gain G·S₁.
    pub fn gain(&self) -> f64 {
        self.coupling * self.s1_flux
    }

    pub fn with_squeezing_db(mut self, db: f64) -> Self {
        self.squeezing_db = db;
        self
    }

    /// Squeezing observed after a lossy element of power transmission `eta`,
    /// ξ²_eff = η·ξ² + (1 − η).
    pub fn after_transmission(mut self, eta: f64) -> Result<Self> {
        ensure((0.0..=1.0).contains(&eta) && eta > 0.0, || {
            format!("transmission must be in (0, 1], got {eta}")
        })?;
        let xi2 = eta * self.xi2() + (1.0 - eta);
        self.squeezing_db = db_from_xi2(xi2);
        Ok(self)
    }
}

/// Single-sided power spectral density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub freqs: Vec<f64>,
    pub psd: Vec<f64>,
    /// Standard error of the record average in each bin.
    pub psd_stderr: Vec<f64>,
    pub n_averages: usize,
    pub window: String,
    pub record_seconds: f64,
}

impl Spectrum {
    pub fn df(&self) -> f64 {
        1.0 / self.record_seconds
    }

    pub fn validate(&self) -> Result<()> {
        if self.freqs.len() != self.psd.len() {
            return Err(Error::LengthMismatch {
                expected: self.freqs.len(),
                got: self.psd.len(),
            });
        }
        if self.psd_stderr.len() != self.psd.len() {
            return Err(Error::LengthMismatch {
                expected: self.psd.len(),
                got: self.psd_stderr.len(),
            });
        }
        ensure(self.psd.iter().all(|p| *p >= 0.0), || {
            "psd must be non-negative".into()
        })?;
        ensure(self.freqs.windows(2).all(|w| w[1] > w[0]), || {
            "frequencies must ascend".into()
        })
    }

    /// Indices of bins with `lo <= f <= hi`.
    pub fn band(&self, lo: f64, hi: f64) -> std::ops::Range<usize> {
        let start = self.freqs.partition_point(|f| *f < lo);
        let end = self.freqs.partition_point(|f| *f <= hi);
        start..end.max(start)
    }

    pub fn band_mean(&self, lo: f64, hi: f64) -> Option<f64> {
        let r = self.band(lo, hi);
        if r.is_empty() {
            return None;
        }
        let n = r.len() as f64;
        Some(self.psd[r].iter().sum::<f64>() / n)
    }

    /// Pointwise map of the PSD values, keeping the axis.
    pub fn map_psd(&self, f: impl Fn(f64, f64) -> f64) -> Spectrum {
        let psd: Vec<f64> = self
            .freqs
            .iter()
            .zip(&self.psd)
            .map(|(fr, p)| f(*fr, *p))
            .collect();
        let psd_stderr = self
            .freqs
            .iter()
            .zip(self.psd.iter().zip(&self.psd_stderr))
            .map(|(fr, (p, e))| if *p != 0.0 { e * f(*fr, *p) / p } else { 0.0 })
            .collect();
        Spectrum {
            freqs: self.freqs.clone(),
            psd,
            psd_stderr,
            n_averages: self.n_averages,
            window: self.window.clone(),
            record_seconds: self.record_seconds,
        }
    }

    /// Average groups of `width` adjacent bins. A trailing partial group is dropped.
    pub fn rebin(&self, width: usize) -> Spectrum {
        let width = width.max(1);
        let groups = self.freqs.len() / width;
        let mut out = Spectrum {
            freqs: Vec::with_capacity(groups),
            psd: Vec::with_capacity(groups),
            psd_stderr: Vec::with_capacity(groups),
            n_averages: self.n_averages,
            window: self.window.clone(),
            record_seconds: self.record_seconds / width as f64,
        };
        for g in 0..groups {
            let r = g * width..(g + 1) * width;
            let w = width as f64;
            out.freqs.push(self.freqs[r.clone()].iter().sum::<f64>() / w);
            out.psd.push(self.psd[r.clone()].iter().sum::<f64>() / w);
            let var: f64 = self.psd_stderr[r].iter().map(|e| e * e).sum::<f64>();
            out.psd_stderr.push(var.sqrt() / w);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rb() -> EnsembleConfig {
        EnsembleConfig::new(1.0, 1.0, GAMMA_RB87, 1.0).unwrap()
    }

    #[test]
    fn larmor_at_reference_field() {
        let w = derive_larmor(&rb(), &FieldProgram::static_field(4.3e-6)).unwrap();
        let f = rad_to_hz(w);
        assert!((f - 30164.5).abs() < 1.0, "f_L = {f}");
    }

    #[test]
    fn larmor_rejects_zero_field() {
        assert!(derive_larmor(&rb(), &FieldProgram::static_field(0.0)).is_err());
        assert!(derive_larmor(&rb(), &FieldProgram::static_field(-1e-6)).is_err());
    }

    #[test]
    fn larmor_is_linear_in_field() {
        let a = derive_larmor(&rb(), &FieldProgram::static_field(1e-6)).unwrap();
        let b = derive_larmor(&rb(), &FieldProgram::static_field(2e-6)).unwrap();
        assert_eq!(b, 2.0 * a);
    }

    #[test]
    fn xi2_values() {
        assert_eq!(xi2_from_db(0.0), 1.0);
        assert!((xi2_from_db(1.9) - 0.6457).abs() < 5e-5);
        assert!((xi2_from_db(3.0103) - 0.5).abs() < 1e-5);
    }

    #[test]
    fn unit_round_trip() {
        for f in [0.0, 1.0, 170.0, 30164.0] {
            assert!((rad_to_hz(hz_to_rad(f)) - f).abs() <= 1e-12 * f.max(1.0));
        }
    }

    #[test]
    fn ensemble_invariants() {
        let e = EnsembleConfig::new(1e6, 2.0, GAMMA_RB87, 10.0).unwrap();
        assert_eq!(e.f_max(), 2e6);
        assert!(EnsembleConfig::new(0.0, 1.0, GAMMA_RB87, 1.0).is_err());
        assert!(EnsembleConfig::new(1.0, 0.0, GAMMA_RB87, 1.0).is_err());
        assert!(EnsembleConfig::new(1.0, 1.0, GAMMA_RB87, -1.0).is_err());
    }

    #[test]
    fn tone_guard() {
        let f = FieldProgram::static_field(1e-6);
        assert!(f.with_tone(1e-8, 10.0, 0.0).is_ok());
        assert!(f.with_tone(2e-8, 10.0, 0.0).is_err());
    }

    #[test]
    fn transmission_degrades_squeezing() {
        let p = ProbeConfig {
            s1_flux: 1.0,
            coupling: 1.0,
            backaction_coupling: 1.0,
            shot_psd: 1.0,
            s3_psd: 0.0,
            squeezing_db: 2.4,
        };
        let lossy = p.after_transmission(0.7).unwrap();
        assert!((lossy.xi2() - (0.7 * xi2_from_db(2.4) + 0.3)).abs() < 1e-12);
        assert!((lossy.squeezing_db - 1.53).abs() < 0.01);
        assert!(p.after_transmission(1.0).unwrap().squeezing_db - 2.4 < 1e-12);
        assert!(p.after_transmission(0.0).is_err());
    }

    proptest::proptest! {
        #[test]
        fn squeezing_is_minimum_uncertainty(db in 0.0f64..20.0) {
            let p = ProbeConfig {
                s1_flux: 1.0, coupling: 1.0, backaction_coupling: 1.0,
                shot_psd: 1.0, s3_psd: 1.0, squeezing_db: db,
            };
            proptest::prop_assert!((p.xi2() * p.anti_squeezing() - 1.0).abs() < 1e-12);
            proptest::prop_assert!(p.xi2() > 0.0 && p.xi2() <= 1.0);
        }
    }
}
