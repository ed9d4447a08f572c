//! Digital lock-in: mix with cos/sin of the reference, low-pass, decimate.
//!
//! u = LP[2·x·cos(2πf t + φ)], v = LP[2·x·sin(2πf t + φ)], so an input
//! A·cos(2πf t + φ) gives u = A and A·sin(2πf t + φ) gives v = A.
//! For white input noise of single-sided PSD S each output has a flat
//! PSD of 2S inside the pass band: both sidebands fold onto baseband and the
//! gain of 2 doubles the amplitude.

use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

use super::fir::Fir;
use crate::error::{Error, Result};
use crate::probe::PolarimeterRecord;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemodRecord {
    /// Decimated grid, aligned with the input after removing the filter delay.
    pub times: Vec<f64>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub f_ref: f64,
    pub phase_ref: f64,
    pub sample_rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LockIn {
    pub f_ref: f64,
    pub phase: f64,
    /// Edge of the flat pass band, Hz.
    pub lp_cutoff: f64,
    /// Width of the transition band, Hz.
    pub transition: f64,
    pub decim: usize,
    pub atten_db: f64,
}

impl LockIn {
    pub fn new(f_ref: f64, phase: f64, lp_cutoff: f64, decim: usize) -> Self {
        Self {
            f_ref,
            phase,
            lp_cutoff,
            transition: lp_cutoff / 6.0,
            decim,
            atten_db: 80.0,
        }
    }

    pub fn output_rate(&self, sample_rate: f64) -> f64 {
        sample_rate / self.decim as f64
    }

    pub fn validate(&self, sample_rate: f64) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidPlan(m));
        if !(self.f_ref > 0.0 && 2.0 * self.f_ref < sample_rate) {
            return bad(format!(
                "reference {} Hz needs sample rate above {} Hz",
                self.f_ref,
                2.0 * self.f_ref
            ));
        }
        if !(self.lp_cutoff > 0.0 && self.lp_cutoff < self.f_ref / 2.0) {
            return bad(format!(
                "low-pass cutoff {} Hz must be below f_ref/2 = {} Hz",
                self.lp_cutoff,
                self.f_ref / 2.0
            ));
        }
        if self.decim == 0 {
            return bad("decimation must be >= 1".into());
        }
        let out_nyquist = self.output_rate(sample_rate) / 2.0;
        if self.lp_cutoff + self.transition > out_nyquist {
            return bad(format!(
                "stop band edge {} Hz exceeds decimated Nyquist {} Hz",
                self.lp_cutoff + self.transition,
                out_nyquist
            ));
        }
        Ok(())
    }

    pub fn filter(&self, sample_rate: f64) -> Result<Fir> {
        self.validate(sample_rate)?;
        Fir::kaiser_lowpass(sample_rate, self.lp_cutoff, self.transition, self.atten_db)
    }

    /// Demodulate samples `x` taken at `times`.
    pub fn demodulate(&self, times: &[f64], x: &[f64], sample_rate: f64) -> Result<DemodRecord> {
        if times.len() != x.len() {
            return Err(Error::LengthMismatch {
                expected: times.len(),
                got: x.len(),
            });
        }
        let fir = self.filter(sample_rate)?;
        self.demodulate_with(&fir, times, x, sample_rate)
    }

    pub fn demodulate_with(
        &self,
        fir: &Fir,
        times: &[f64],
        x: &[f64],
        sample_rate: f64,
    ) -> Result<DemodRecord> {
        if x.len() < fir.len() {
            return Err(Error::InvalidPlan(format!(
                "record of {} samples shorter than the {}-tap filter",
                x.len(),
                fir.len()
            )));
        }
        let w = TAU * self.f_ref;
        let (mut ci, mut sq) = (Vec::with_capacity(x.len()), Vec::with_capacity(x.len()));
        for (t, s) in times.iter().zip(x) {
            let (sn, cs) = (w * t + self.phase).sin_cos();
            ci.push(2.0 * s * cs);
            sq.push(2.0 * s * sn);
        }
        let u = fir.filter_decimate(&ci, self.decim);
        let v = fir.filter_decimate(&sq, self.decim);
        let d = fir.delay();
        let out_times = (0..u.len()).map(|k| times[d + k * self.decim]).collect();
        Ok(DemodRecord {
            times: out_times,
            u,
            v,
            f_ref: self.f_ref,
            phase_ref: self.phase,
            sample_rate: self.output_rate(sample_rate),
        })
    }
}

/// Demodulate a polarimeter record.
pub fn lock_in(
    rec: &PolarimeterRecord,
    f_ref: f64,
    phase: f64,
    lp_cutoff: f64,
    decim: usize,
) -> Result<DemodRecord> {
    LockIn::new(f_ref, phase, lp_cutoff, decim).demodulate(&rec.times, &rec.s2_samples, rec.sample_rate)
}
