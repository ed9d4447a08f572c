//! Run configuration: a flat key-value TOML document in SI units layered
//! over a named profile.
//!
//! ```toml
//! profile = "desk"
//! seed = 7
//! n_records = 200
//! squeezing_db = 1.9
//! ```
//!
//! Keys left out take the profile value. Unknown keys are rejected.

use serde::{Deserialize, Serialize};
use std::path::Path;
use std::str::FromStr;

use crate::analytic::AnalyticParams;
use crate::dsp::LockIn;
use crate::error::{Error, Result};
use crate::model::{hz_to_rad, EnsembleConfig, FieldProgram, ProbeConfig, GAMMA_RB87};
use crate::pump::PumpProgram;
use crate::sde::{NoiseSwitches, SimPlan, SpinSystem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    /// 8 kHz modulation keeping the dimensionless ratios of the full-scale profile.
    Desk,
    /// 30.164 kHz modulation at 4.3 µT.
    Paper,
}

impl FromStr for Profile {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Profile::Desk),
            "paper" => Ok(Profile::Paper),
            other => Err(Error::Config(format!(
                "unknown profile '{other}' (expected desk or paper)"
            ))),
        }
    }
}

/// Every tunable of a run. Frequencies in Hz, rates in s⁻¹, fields in T.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub profile: Profile,
    pub seed: u64,

    pub atom_count: f64,
    pub spin_f: f64,
    pub gamma: f64,
    pub gamma_rel: f64,

    pub f_mod: f64,
    pub pump_mean: f64,
    pub duty: f64,
    pub pump_phase: f64,

    /// Bias field; resonant with `f_mod` when absent.
    pub b0: Option<f64>,
    pub linear_guard: f64,

    pub s1_flux: f64,
    pub coupling: f64,
    /// Defaults to `coupling`.
    pub backaction_coupling: Option<f64>,
    /// Coherent S₂ noise PSD; derived from `target_zeta2` when absent.
    pub shot_psd: Option<f64>,
    /// Coherent S₃ noise PSD; derived from `backaction_kappa` when absent.
    pub s3_psd: Option<f64>,
    pub target_zeta2: f64,
    /// Fractional increase of Var(F_x) produced by the coherent S₃ noise.
    pub backaction_kappa: f64,
    pub squeezing_db: f64,

    /// Integrator step; 1/(200 f_mod) when absent.
    pub dt: Option<f64>,
    /// Stored sample rate; 8 f_mod when absent.
    pub sample_rate: Option<f64>,
    pub record_seconds: f64,
    pub n_records: usize,

    pub lp_cutoff: f64,
    pub lp_transition: f64,
    pub decimation: usize,
    pub lockin_phase: f64,

    pub spin_noise: bool,
    pub backaction_noise: bool,
    pub probe_noise: bool,

    pub band_lo: f64,
    pub band_hi: f64,
    pub probe_freq: f64,

    pub cal_points: usize,
    /// Half-width of the calibration scan in units of Γ + P̄.
    pub cal_span: f64,
    /// Half-width of the region used for the slope fit, same units.
    pub cal_fit_span: f64,
    pub cal_record_seconds: f64,

    /// Responsivity tone amplitude as a fraction of the field that shifts
    /// the Larmor frequency by Γ + P̄.
    pub tone_fraction: f64,
    pub sweep_lo: f64,
    pub sweep_hi: f64,
    pub sweep_points: usize,
    /// Records averaged per sweep frequency.
    pub sweep_records: usize,

    pub write_trajectory: bool,
}

impl RunConfig {
    pub fn profile(profile: Profile) -> Self {
        let delta_hz = 170.0;
        let dw = hz_to_rad(delta_hz);
        let desk = Self {
            profile,
            seed: 1,
            atom_count: 1e8,
            spin_f: 1.0,
            gamma: GAMMA_RB87,
            gamma_rel: 0.7 * dw,
            f_mod: 8000.0,
            pump_mean: 0.3 * dw,
            duty: 0.1,
            pump_phase: 0.0,
            b0: None,
            linear_guard: FieldProgram::DEFAULT_GUARD,
            s1_flux: 1e8,
            coupling: 1e-8,
            backaction_coupling: None,
            shot_psd: None,
            s3_psd: None,
            target_zeta2: (275.0f64 / 170.0).powi(2) - 1.0,
            backaction_kappa: 0.1,
            squeezing_db: 0.0,
            // the exponential integrator needs no more than 100 steps per cycle
            dt: Some(1.25e-6),
            sample_rate: Some(32000.0),
            record_seconds: 0.5,
            n_records: 100,
            lp_cutoff: 950.0,
            lp_transition: 150.0,
            decimation: 8,
            lockin_phase: 0.0,
            spin_noise: true,
            backaction_noise: true,
            probe_noise: true,
            band_lo: 10.0,
            band_hi: 5.0 * delta_hz,
            probe_freq: 490.0,
            cal_points: 21,
            cal_span: 0.5,
            cal_fit_span: 0.2,
            cal_record_seconds: 0.1,
            tone_fraction: 0.03,
            sweep_lo: 10.0,
            sweep_hi: 5.0 * delta_hz,
            sweep_points: 12,
            sweep_records: 2,
            write_trajectory: false,
        };
        match profile {
            Profile::Desk => desk,
            Profile::Paper => Self {
                f_mod: 30164.0,
                b0: Some(4.3e-6),
                dt: None,
                sample_rate: None,
                lp_cutoff: 3000.0,
                lp_transition: 500.0,
                decimation: 16,
                band_hi: 2400.0,
                sweep_hi: 2400.0,
                ..desk
            },
        }
    }

    /// Profile defaults overridden by the keys in `text`. A `profile` key in
    /// the document is honored unless `profile` is given.
    pub fn from_toml_str(text: &str, profile: Option<Profile>) -> Result<Self> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        let chosen = match (profile, table.get("profile")) {
            (Some(p), _) => p,
            (None, Some(toml::Value::String(s))) => s.parse()?,
            (None, Some(v)) => return Err(Error::Config(format!("profile must be a string, got {v}"))),
            (None, None) => Profile::Desk,
        };
        let base = Self::profile(chosen);
        let mut merged = toml::Table::try_from(&base).map_err(|e| Error::Config(e.to_string()))?;
        for (k, v) in table {
            if k == "profile" {
                continue;
            }
            // integers are accepted where decimals are expected
            let v = match (merged.get(&k), v) {
                (Some(toml::Value::Float(_)), toml::Value::Integer(i)) => toml::Value::Float(i as f64),
                (_, v) => v,
            };
            merged.insert(k, v);
        }
        let cfg: Self = merged
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, profile: Option<Profile>) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text, profile)
    }

    pub fn validate(&self) -> Result<()> {
        self.system()?.validate()?;
        let f_mod = self.f_mod;
        self.plan().validate(f_mod)?;
        self.lockin().validate(self.sample_rate())?;
        let out_rate = self.sample_rate() / self.decimation as f64;
        if !(self.band_lo > 0.0 && self.band_hi > self.band_lo) {
            return Err(Error::Config("need 0 < band_lo < band_hi".into()));
        }
        if self.band_hi > self.lp_cutoff || 4.0 * self.band_hi > out_rate {
            return Err(Error::Config(format!(
                "analysis band up to {} Hz needs lp_cutoff >= band_hi and a decimated rate >= {} Hz",
                self.band_hi,
                4.0 * self.band_hi
            )));
        }
        if self.cal_points < 11 {
            return Err(Error::Config("cal_points must be >= 11".into()));
        }
        if !(self.cal_fit_span > 0.0 && self.cal_fit_span <= self.cal_span) {
            return Err(Error::Config("need 0 < cal_fit_span <= cal_span".into()));
        }
        if self.sweep_points < 3 || !(self.sweep_lo > 0.0 && self.sweep_hi > self.sweep_lo) {
            return Err(Error::Config("sweep needs >= 3 points and 0 < sweep_lo < sweep_hi".into()));
        }
        if self.sweep_records < 1 {
            return Err(Error::Config("sweep_records must be >= 1".into()));
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        self.dt.unwrap_or(1.0 / (200.0 * self.f_mod))
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate.unwrap_or(8.0 * self.f_mod)
    }

    pub fn delta_omega(&self) -> f64 {
        self.gamma_rel + self.pump_mean
    }

    pub fn b0(&self) -> f64 {
        self.b0
            .unwrap_or(hz_to_rad(self.f_mod) / self.gamma.abs())
    }

    pub fn tone_amplitude(&self) -> f64 {
        self.tone_fraction * self.delta_omega() / self.gamma.abs()
    }

    pub fn ensemble(&self) -> Result<EnsembleConfig> {
        EnsembleConfig::new(self.atom_count, self.spin_f, self.gamma, self.gamma_rel)
    }

    pub fn pump(&self) -> Result<PumpProgram> {
        let mut p = PumpProgram::with_mean(self.pump_mean, self.duty, hz_to_rad(self.f_mod))?;
        p.phase_center = self.pump_phase;
        p.validate()?;
        Ok(p)
    }

    pub fn field(&self) -> FieldProgram {
        FieldProgram {
            linear_guard: self.linear_guard,
            ..FieldProgram::static_field(self.b0())
        }
    }

    /// Probe with the noise levels resolved: the S₂ floor is placed so the
    /// demodulated spin noise is `target_zeta2` times the optical floor, and
    /// S₃ so that the coherent backaction adds `backaction_kappa`·Var to F_x.
    pub fn probe(&self) -> Result<ProbeConfig> {
        let ens = self.ensemble()?;
        let pump = self.pump()?;
        let g = self.coupling * self.s1_flux;
        let dw = self.delta_omega();
        let var = ens.spin_variance();
        let g_ba = self.backaction_coupling.unwrap_or(self.coupling);
        let s_sigma = 4.0 * g * g * var / dw;
        let shot_psd = self
            .shot_psd
            .unwrap_or(s_sigma / (2.0 * self.target_zeta2));
        let s3_psd = match self.s3_psd {
            Some(s) => s,
            None => {
                let f0 = crate::analytic::steady_state(&ens, &pump, 0.0)?.norm();
                if g_ba == 0.0 || f0 == 0.0 {
                    0.0
                } else {
                    self.backaction_kappa * 8.0 * dw * var / (g_ba * g_ba * f0 * f0)
                }
            }
        };
        let p = ProbeConfig {
            s1_flux: self.s1_flux,
            coupling: self.coupling,
            backaction_coupling: g_ba,
            shot_psd,
            s3_psd,
            squeezing_db: self.squeezing_db,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn system(&self) -> Result<SpinSystem> {
        Ok(SpinSystem {
            ensemble: self.ensemble()?,
            field: self.field(),
            pump: self.pump()?,
            probe: self.probe()?,
        })
    }

    pub fn plan(&self) -> SimPlan {
        SimPlan {
            dt: self.dt(),
            record_seconds: self.record_seconds,
            n_records: self.n_records,
            seed: self.seed,
            sample_rate: self.sample_rate(),
        }
    }

    pub fn lockin(&self) -> LockIn {
        LockIn {
            transition: self.lp_transition,
            ..LockIn::new(self.f_mod, self.lockin_phase, self.lp_cutoff, self.decimation)
        }
    }

    pub fn noise(&self) -> NoiseSwitches {
        NoiseSwitches {
            spin: self.spin_noise,
            backaction: self.backaction_noise,
            backaction_scale: 1.0,
            probe: self.probe_noise,
        }
    }

    /// Closed-form parameters matching this configuration.
    pub fn analytic(&self) -> Result<AnalyticParams> {
        let sys = self.system()?;
        AnalyticParams::from_system(&sys, 2.0 * sys.probe.shot_psd)
    }

    pub fn with_squeezing_db(mut self, db: f64) -> Self {
        self.squeezing_db = db;
        self
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::profile(Profile::Desk)
    }
}
