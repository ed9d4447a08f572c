//! Brute-force references for the tests. Nothing here calls library code.

#![allow(dead_code)]

use num_complex::Complex64;
use std::f64::consts::{PI, TAU};
use std::fmt;

/// Outcome of one oracle comparison.
#[derive(Debug, Clone)]
pub struct OracleResult {
    pub name: String,
    pub expected: Vec<f64>,
    pub got: Vec<f64>,
    pub tolerance: f64,
    pub pass: bool,
}

impl OracleResult {
    /// Elementwise |got − expected| ≤ tol·max(|expected|, scale).
    pub fn relative(name: &str, expected: &[f64], got: &[f64], tol: f64, scale: f64) -> Self {
        let pass = expected.len() == got.len()
            && expected
                .iter()
                .zip(got)
                .all(|(e, g)| (g - e).abs() <= tol * e.abs().max(scale));
        Self {
            name: name.into(),
            expected: expected.to_vec(),
            got: got.to_vec(),
            tolerance: tol,
            pass,
        }
    }

    pub fn scalar(name: &str, expected: f64, got: f64, tol: f64) -> Self {
        Self::relative(name, &[expected], &[got], tol, 0.0)
    }

    #[track_caller]
    pub fn check(self) {
        assert!(self.pass, "{self}");
    }
}

impl fmt::Display for OracleResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let worst = self
            .expected
            .iter()
            .zip(&self.got)
            .map(|(e, g)| (g - e).abs() / e.abs().max(f64::MIN_POSITIVE))
            .fold(0.0, f64::max);
        write!(
            f,
            "{}: {} (worst relative deviation {worst:.3e}, tolerance {:.1e}, {} values)",
            self.name,
            if self.pass { "pass" } else { "FAIL" },
            self.tolerance,
            self.expected.len()
        )
    }
}

/// X_k = Σ_n x_n e^{−2πi kn/N}, by direct summation.
pub fn naive_dft(x: &[Complex64]) -> Vec<Complex64> {
    let n = x.len();
    assert!(n <= 4096, "naive DFT limited to 4096 points");
    (0..n)
        .map(|k| {
            x.iter()
                .enumerate()
                .map(|(j, v)| {
                    // reduce kj mod n first so the phase stays accurate
                    let ph = -TAU * ((k * j) % n) as f64 / n as f64;
                    v * Complex64::from_polar(1.0, ph)
                })
                .sum()
        })
        .collect()
}

pub fn naive_dft_real(x: &[f64]) -> Vec<Complex64> {
    naive_dft(&x.iter().map(|v| Complex64::new(*v, 0.0)).collect::<Vec<_>>())
}

/// Composite Simpson rule on [a, b] with `n` (even) panels.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    assert!(n >= 2 && n % 2 == 0);
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}

/// Rectangular pulse train: height `p0` for a fraction `duty` of each period,
/// centered on Ωt = `center` (mod 2π).
pub fn pulse_rate(p0: f64, duty: f64, omega: f64, center: f64, t: f64) -> f64 {
    let mut d = (omega * t - center) % TAU;
    if d > PI {
        d -= TAU;
    } else if d < -PI {
        d += TAU;
    }
    if d.abs() < PI * duty {
        p0
    } else {
        0.0
    }
}

/// Cycle mean and first harmonic (Ω/2π)∫P e^{iΩt} of the pulse train,
/// integrating piecewise over the on-window so the rule sees no discontinuity.
pub fn pulse_moments(p0: f64, duty: f64, omega: f64, center: f64) -> (f64, Complex64) {
    let period = TAU / omega;
    let t0 = (center - PI * duty) / omega;
    let t1 = (center + PI * duty) / omega;
    let n = 20_000;
    let mean = simpson(|_| p0, t0, t1, n) / period;
    let re = simpson(|t| p0 * (omega * t).cos(), t0, t1, n) / period;
    let im = simpson(|t| p0 * (omega * t).sin(), t0, t1, n) / period;
    (mean, Complex64::new(re, im))
}

/// Closed-form Ornstein–Uhlenbeck statistics for dx = −Γ′x dt + σ dW.
#[derive(Debug, Clone, Copy)]
pub struct OuStats {
    /// Stationary variance σ²/(2Γ′).
    pub variance: f64,
    /// Decay rate of the autocorrelation.
    pub autocorr_rate: f64,
    /// Variance reached after `horizon` starting from x = 0.
    pub variance_at_horizon: f64,
}

pub fn ou_statistics(gamma_prime: f64, g_nf: f64, horizon: f64) -> OuStats {
    assert!(gamma_prime > 0.0);
    let variance = g_nf / (2.0 * gamma_prime);
    OuStats {
        variance,
        autocorr_rate: gamma_prime,
        variance_at_horizon: variance * (1.0 - (-2.0 * gamma_prime * horizon).exp()),
    }
}

/// Inputs of the first-order rotating-frame system.
#[derive(Debug, Clone, Copy)]
pub struct FirstOrderParams {
    /// Γ + P̄, rad/s.
    pub delta_omega: f64,
    /// Larmor minus modulation frequency, rad/s.
    pub detuning: f64,
    /// Zeroth-order F₊.
    pub f0: Complex64,
    pub gamma_abs: f64,
}

/// Solves [[Δω − iω, −δ], [δ, Δω − iω]]·(x, y) = |γ|·(Im F₊⁽⁰⁾, −Re F₊⁽⁰⁾)
/// by Gaussian elimination with partial pivoting. Returns (Re, Im) parts of
/// F₊⁽¹⁾ per unit field, or None when the system is singular.
pub fn first_order_solve(p: &FirstOrderParams, omega: f64) -> Option<(Complex64, Complex64)> {
    let a = Complex64::new(p.delta_omega, -omega);
    let d = Complex64::new(p.detuning, 0.0);
    let mut m = [[a, -d], [d, a]];
    let mut r = [
        Complex64::new(p.gamma_abs * p.f0.im, 0.0),
        Complex64::new(-p.gamma_abs * p.f0.re, 0.0),
    ];
    if m[1][0].norm() > m[0][0].norm() {
        m.swap(0, 1);
        r.swap(0, 1);
    }
    if m[0][0].norm() == 0.0 {
        return None;
    }
    let l = m[1][0] / m[0][0];
    let m11 = m[1][1] - l * m[0][1];
    let r1 = r[1] - l * r[0];
    if m11.norm() <= 1e-300 {
        return None;
    }
    let y = r1 / m11;
    let x = (r[0] - m[0][1] * y) / m[0][0];
    Some((x, y))
}
