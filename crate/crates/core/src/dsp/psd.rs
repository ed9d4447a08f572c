//! Single-sided periodogram averaged over records.
//!
//! Each record has its mean removed, is windowed, and is transformed;
//! P_k = 2|X_k|²/(f_s·Σw²) with the DC and Nyquist bins not doubled. White
//! noise of variance σ² therefore reads 2σ²/f_s for any window.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

use super::fft::fft_real;
use crate::error::{Error, Result};
use crate::model::Spectrum;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Window {
    Hann,
    Rectangular,
}

impl Window {
    pub fn name(&self) -> &'static str {
        match self {
            Window::Hann => "hann",
            Window::Rectangular => "rectangular",
        }
    }

    /// Periodic window of length n.
    pub fn coefficients(&self, n: usize) -> Vec<f64> {
        match self {
            Window::Hann => (0..n)
                .map(|i| 0.5 - 0.5 * (TAU * i as f64 / n as f64).cos())
                .collect(),
            Window::Rectangular => vec![1.0; n],
        }
    }
}

/// Periodogram of one record, bins 0..=N/2.
pub fn periodogram(x: &[f64], sample_rate: f64, window: Window) -> Vec<f64> {
    let n = x.len();
    let w = window.coefficients(n);
    let mean = x.iter().sum::<f64>() / n as f64;
    let xw: Vec<f64> = x.iter().zip(&w).map(|(a, b)| (a - mean) * b).collect();
    let spec = fft_real(&xw);
    let norm = sample_rate * w.iter().map(|v| v * v).sum::<f64>();
    (0..=n / 2)
        .map(|k| {
            let p = spec[k].norm_sqr() / norm;
            if k == 0 || (n % 2 == 0 && k == n / 2) {
                p
            } else {
                2.0 * p
            }
        })
        .collect()
}

/// Running sum of periodograms of equal-length records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsdAccumulator {
    pub sample_rate: f64,
    pub record_len: usize,
    pub window: Window,
    pub n: usize,
    pub sum: Vec<f64>,
    pub sum_sq: Vec<f64>,
}

impl PsdAccumulator {
    pub fn new(record_len: usize, sample_rate: f64, window: Window) -> Self {
        let bins = record_len / 2 + 1;
        Self {
            sample_rate,
            record_len,
            window,
            n: 0,
            sum: vec![0.0; bins],
            sum_sq: vec![0.0; bins],
        }
    }

    /// Add one periodogram (as returned by [`periodogram`]).
    pub fn add(&mut self, p: &[f64]) -> Result<()> {
        if p.len() != self.sum.len() {
            return Err(Error::LengthMismatch {
                expected: self.sum.len(),
                got: p.len(),
            });
        }
        for ((s, q), v) in self.sum.iter_mut().zip(self.sum_sq.iter_mut()).zip(p) {
            *s += v;
            *q += v * v;
        }
        self.n += 1;
        Ok(())
    }

    pub fn add_record(&mut self, x: &[f64]) -> Result<()> {
        if x.len() != self.record_len {
            return Err(Error::LengthMismatch {
                expected: self.record_len,
                got: x.len(),
            });
        }
        self.add(&periodogram(x, self.sample_rate, self.window))
    }

    pub fn merge(&mut self, other: &Self) -> Result<()> {
        if other.sum.len() != self.sum.len() {
            return Err(Error::LengthMismatch {
                expected: self.sum.len(),
                got: other.sum.len(),
            });
        }
        for i in 0..self.sum.len() {
            self.sum[i] += other.sum[i];
            self.sum_sq[i] += other.sum_sq[i];
        }
        self.n += other.n;
        Ok(())
    }

    /// Record average; the standard error is the spread across records
    /// over √n (zero for a single record).
    pub fn spectrum(&self) -> Result<Spectrum> {
        if self.n == 0 {
            return Err(Error::InvalidInput("no records".into()));
        }
        let m = self.n as f64;
        let psd: Vec<f64> = self.sum.iter().map(|s| s / m).collect();
        let psd_stderr = if self.n > 1 {
            self.sum_sq
                .iter()
                .zip(&psd)
                .map(|(q, mu)| ((q / m - mu * mu).max(0.0) * m / (m - 1.0) / m).sqrt())
                .collect()
        } else {
            vec![0.0; psd.len()]
        };
        let record_seconds = self.record_len as f64 / self.sample_rate;
        Ok(Spectrum {
            freqs: (0..psd.len()).map(|k| k as f64 / record_seconds).collect(),
            psd,
            psd_stderr,
            n_averages: self.n,
            window: self.window.name().into(),
            record_seconds,
        })
    }
}

/// Record-averaged spectrum with the standard error of the mean per bin.
pub fn psd<S: AsRef<[f64]> + Sync>(
    series: &[S],
    sample_rate: f64,
    window: Window,
) -> Result<Spectrum> {
    let Some(first) = series.first() else {
        return Err(Error::InvalidInput("no records".into()));
    };
    let n = first.as_ref().len();
    if n < 2 {
        return Err(Error::InvalidInput("records need at least two samples".into()));
    }
    for s in series {
        if s.as_ref().len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                got: s.as_ref().len(),
            });
        }
    }
    let per: Vec<Vec<f64>> = series
        .par_iter()
        .map(|s| periodogram(s.as_ref(), sample_rate, window))
        .collect();
    let mut acc = PsdAccumulator::new(n, sample_rate, window);
    for p in &per {
        acc.add(p)?;
    }
    acc.spectrum()
}

/// Hann-window spectrum averaged over `series`.
pub fn psd_hann<S: AsRef<[f64]> + Sync>(series: &[S], sample_rate: f64) -> Result<Spectrum> {
    psd(series, sample_rate, Window::Hann)
}
