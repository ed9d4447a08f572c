//! Kaiser-window linear-phase low-pass design.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Modified Bessel function I₀ by its power series.
fn bessel_i0(x: f64) -> f64 {
    let q = 0.25 * x * x;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..500 {
        term *= q / (k as f64 * k as f64);
        sum += term;
        if term < 1e-17 * sum {
            break;
        }
    }
    sum
}

/// Odd-length symmetric FIR with unit DC gain.
#[derive(Debug, Clone, PartialEq)]
pub struct Fir {
    pub taps: Vec<f64>,
}

impl Fir {
    /// Passband flat up to `pass_edge`, at least `atten_db` of rejection
    /// beyond `pass_edge + transition`.
    pub fn kaiser_lowpass(
        sample_rate: f64,
        pass_edge: f64,
        transition: f64,
        atten_db: f64,
    ) -> Result<Self> {
        if !(pass_edge > 0.0 && transition > 0.0 && pass_edge + transition < sample_rate / 2.0) {
            return Err(Error::InvalidPlan(format!(
                "low-pass edges {pass_edge} + {transition} Hz must lie below Nyquist {} Hz",
                sample_rate / 2.0
            )));
        }
        let beta = if atten_db > 50.0 {
            0.1102 * (atten_db - 8.7)
        } else if atten_db >= 21.0 {
            0.5842 * (atten_db - 21.0).powf(0.4) + 0.07886 * (atten_db - 21.0)
        } else {
            0.0
        };
        let dw = 2.0 * PI * transition / sample_rate;
        let mut n = ((atten_db - 7.95) / (2.285 * dw)).ceil() as usize + 1;
        if n % 2 == 0 {
            n += 1;
        }
        let m = (n - 1) as f64 / 2.0;
        let fc = (pass_edge + 0.5 * transition) / sample_rate;
        let i0b = bessel_i0(beta);
        let mut taps: Vec<f64> = (0..n)
            .map(|i| {
                let x = i as f64 - m;
                let sinc = if x == 0.0 {
                    2.0 * fc
                } else {
                    (2.0 * PI * fc * x).sin() / (PI * x)
                };
                let r = x / m;
                let w = bessel_i0(beta * (1.0 - r * r).max(0.0).sqrt()) / i0b;
                sinc * w
            })
            .collect();
        let sum: f64 = taps.iter().sum();
        taps.iter_mut().for_each(|t| *t /= sum);
        Ok(Self { taps })
    }

    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }

    /// Group delay in samples.
    pub fn delay(&self) -> usize {
        (self.taps.len() - 1) / 2
    }

    /// Magnitude response at `f` (Hz).
    pub fn gain_at(&self, f: f64, sample_rate: f64) -> f64 {
        let w = 2.0 * PI * f / sample_rate;
        let (mut re, mut im) = (0.0, 0.0);
        for (i, h) in self.taps.iter().enumerate() {
            re += h * (w * i as f64).cos();
            im -= h * (w * i as f64).sin();
        }
        (re * re + im * im).sqrt()
    }

    /// Valid-mode filtering, keeping every `decim`-th output. Output `k`
    /// is centered on input sample `delay() + k·decim`.
    pub fn filter_decimate(&self, x: &[f64], decim: usize) -> Vec<f64> {
        let l = self.taps.len();
        if x.len() < l {
            return Vec::new();
        }
        let count = (x.len() - l) / decim + 1;
        (0..count)
            .map(|k| {
                let seg = &x[k * decim..k * decim + l];
                seg.iter().zip(&self.taps).map(|(a, b)| a * b).sum()
            })
            .collect()
    }
}
