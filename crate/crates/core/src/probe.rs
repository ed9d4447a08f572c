//! Faraday readout: S₂ = G·S₁·F_z + N_S2.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ProbeConfig;
use crate::sde::SpinTrajectory;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolarimeterRecord {
    pub times: Vec<f64>,
    pub s2_samples: Vec<f64>,
    pub sample_rate: f64,
    pub probe: ProbeConfig,
}

/// Detected optical noise floor ξ²·S_SQL.
pub fn shot_floor(probe: &ProbeConfig) -> f64 {
    probe.xi2() * probe.shot_psd
}

/// Polarimeter signal from the trajectory's F_z. Pass `rng = None` for a
/// noiseless probe.
pub fn readout<R: Rng + ?Sized>(
    traj: &SpinTrajectory,
    probe: &ProbeConfig,
    rng: Option<&mut R>,
) -> Result<PolarimeterRecord> {
    if traj.f_samples.is_empty() {
        return Err(Error::InvalidInput("empty trajectory".into()));
    }
    let gain = probe.gain();
    let mut s2: Vec<f64> = traj.f_samples.iter().map(|f| gain * f[2]).collect();
    let fs = traj.plan.sample_rate;
    add_shot_noise(&mut s2, probe, fs, rng);
    Ok(PolarimeterRecord {
        times: traj.times.clone(),
        s2_samples: s2,
        sample_rate: fs,
        probe: *probe,
    })
}

/// White noise of single-sided PSD ξ²·S_SQL: per-sample variance S·fs/2.
pub fn add_shot_noise<R: Rng + ?Sized>(
    samples: &mut [f64],
    probe: &ProbeConfig,
    sample_rate: f64,
    rng: Option<&mut R>,
) {
    let Some(rng) = rng else { return };
    let sd = (shot_floor(probe) * sample_rate / 2.0).sqrt();
    if sd == 0.0 {
        return;
    }
    for s in samples.iter_mut() {
        let e: f64 = rng.sample(StandardNormal);
        *s += sd * e;
    }
}

/// Probe-only record (atoms absent) on a uniform grid.
pub fn shot_noise_record<R: Rng + ?Sized>(
    n: usize,
    sample_rate: f64,
    probe: &ProbeConfig,
    rng: &mut R,
) -> PolarimeterRecord {
    let mut s2 = vec![0.0; n];
    add_shot_noise(&mut s2, probe, sample_rate, Some(rng));
    PolarimeterRecord {
        times: (0..n).map(|i| i as f64 / sample_rate).collect(),
        s2_samples: s2,
        sample_rate,
        probe: *probe,
    }
}
