//! Weighted least-squares fits of spectral models.
//!
//! Weights come from the current model value (relative errors), iterated to
//! self-consistency, so they do not inherit the downward bias of weighting by
//! the noisy data. Standard errors are scaled by the reduced χ².

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Spectrum;

/// Solve A x = b by Gaussian elimination with partial pivoting.
pub(crate) fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let n = b.len();
    for c in 0..n {
        let p = (c..n)
            .max_by(|i, j| a[*i][c].abs().total_cmp(&a[*j][c].abs()))
            .unwrap();
        if a[p][c].abs() < 1e-300 || !a[p][c].is_finite() {
            return Err(Error::Singular(format!("pivot {c} vanished")));
        }
        a.swap(c, p);
        b.swap(c, p);
        for r in c + 1..n {
            let f = a[r][c] / a[c][c];
            for k in c..n {
                a[r][k] -= f * a[c][k];
            }
            b[r] -= f * b[c];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| a[r][k] * x[k]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    Ok(x)
}

pub(crate) fn invert(a: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let n = a.len();
    let mut cols = Vec::with_capacity(n);
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        cols.push(solve(a.to_vec(), e)?);
    }
    Ok((0..n).map(|i| (0..n).map(|j| cols[j][i]).collect()).collect())
}

#[derive(Debug, Clone)]
pub(crate) struct LmResult {
    pub params: Vec<f64>,
    pub stderr: Vec<f64>,
    pub chi2_red: f64,
}

/// Levenberg-Marquardt on Σ((y − m)/σ)². `model` returns the value and the
/// gradient with respect to the parameters.
pub(crate) fn levenberg_marquardt(
    x: &[f64],
    y: &[f64],
    sigma: &[f64],
    p0: &[f64],
    model: &dyn Fn(f64, &[f64]) -> (f64, Vec<f64>),
    bounds_ok: &dyn Fn(&[f64]) -> bool,
) -> Result<LmResult> {
    let np = p0.len();
    let chi2 = |p: &[f64]| -> f64 {
        x.iter()
            .zip(y)
            .zip(sigma)
            .map(|((xi, yi), s)| {
                let r = (yi - model(*xi, p).0) / s;
                r * r
            })
            .sum()
    };
    let normal = |p: &[f64]| -> (Vec<Vec<f64>>, Vec<f64>) {
        let mut jtj = vec![vec![0.0; np]; np];
        let mut jtr = vec![0.0; np];
        for ((xi, yi), s) in x.iter().zip(y).zip(sigma) {
            let (m, g) = model(*xi, p);
            let r = (yi - m) / s;
            for a in 0..np {
                jtr[a] += g[a] / s * r;
                for b in 0..np {
                    jtj[a][b] += g[a] * g[b] / (s * s);
                }
            }
        }
        (jtj, jtr)
    };
    let mut p = p0.to_vec();
    let mut c = chi2(&p);
    if !c.is_finite() {
        return Err(Error::FitFailed("initial guess gives non-finite residuals".into()));
    }
    let mut lambda = 1e-3;
    let mut converged = false;
    for _ in 0..500 {
        let (jtj, jtr) = normal(&p);
        let mut a = jtj.clone();
        for i in 0..np {
            a[i][i] *= 1.0 + lambda;
            if a[i][i] == 0.0 {
                a[i][i] = lambda;
            }
        }
        let step = match solve(a, jtr) {
            Ok(s) => s,
            Err(_) => {
                lambda *= 10.0;
                continue;
            }
        };
        let trial: Vec<f64> = p.iter().zip(&step).map(|(a, b)| a + b).collect();
        let ct = if bounds_ok(&trial) { chi2(&trial) } else { f64::INFINITY };
        if ct.is_finite() && ct <= c {
            let small = step
                .iter()
                .zip(&p)
                .all(|(s, v)| s.abs() <= 1e-10 * v.abs().max(1e-300));
            let gain = c - ct;
            p = trial;
            c = ct;
            lambda = (lambda / 10.0).max(1e-12);
            if small || gain <= 1e-14 * c {
                converged = true;
                break;
            }
        } else {
            lambda *= 10.0;
            if lambda > 1e12 {
                converged = true;
                break;
            }
        }
    }
    if !converged {
        return Err(Error::FitFailed(format!(
            "no convergence after 500 iterations (chi2 = {c:.4e}, params = {p:?})"
        )));
    }
    let dof = x.len().saturating_sub(np).max(1) as f64;
    let chi2_red = c / dof;
    let (jtj, _) = normal(&p);
    let cov = invert(&jtj)?;
    let stderr = (0..np).map(|i| (cov[i][i] * chi2_red).sqrt()).collect();
    Ok(LmResult {
        params: p,
        stderr,
        chi2_red,
    })
}

/// Floor + Lorentzian: S(f) = floor + amplitude·Δ²/(f² + Δ²), Δ in Hz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseFit {
    pub floor: f64,
    pub floor_stderr: f64,
    pub amplitude: f64,
    pub amplitude_stderr: f64,
    pub bandwidth_hz: f64,
    pub bandwidth_stderr: f64,
    pub chi2_red: f64,
    pub n_bins: usize,
}

impl NoiseFit {
    pub fn eval(&self, f: f64) -> f64 {
        let d2 = self.bandwidth_hz * self.bandwidth_hz;
        self.floor + self.amplitude * d2 / (f * f + d2)
    }
}

fn noise_model(f: f64, p: &[f64]) -> (f64, Vec<f64>) {
    let (floor, amp, d) = (p[0], p[1], p[2]);
    let den = f * f + d * d;
    let l = d * d / den;
    let dl = 2.0 * d * f * f / (den * den);
    (floor + amp * l, vec![1.0, l, amp * dl])
}

/// Iterated relative-weight fit of `model` to the bins in `[lo, hi]`.
fn irls(
    spec: &Spectrum,
    lo: f64,
    hi: f64,
    p0: Vec<f64>,
    model: &dyn Fn(f64, &[f64]) -> (f64, Vec<f64>),
    bounds_ok: &dyn Fn(&[f64]) -> bool,
) -> Result<(LmResult, usize)> {
    let r = spec.band(lo, hi);
    if r.len() < p0.len() + 2 {
        return Err(Error::FitFailed(format!(
            "only {} bins in [{lo}, {hi}] Hz",
            r.len()
        )));
    }
    let x = &spec.freqs[r.clone()];
    let y = &spec.psd[r.clone()];
    let mut p = p0;
    let mut res = None;
    for _ in 0..4 {
        let sigma: Vec<f64> = x
            .iter()
            .map(|f| model(*f, &p).0.abs().max(f64::MIN_POSITIVE))
            .collect();
        let fit = levenberg_marquardt(x, y, &sigma, &p, model, bounds_ok)?;
        p = fit.params.clone();
        res = Some(fit);
    }
    Ok((res.unwrap(), r.len()))
}

/// Fit floor + Lorentzian to the spectrum between `lo` and `hi` (Hz).
pub fn fit_noise_model(spec: &Spectrum, lo: f64, hi: f64) -> Result<NoiseFit> {
    let r = spec.band(lo, hi);
    if r.len() < 8 {
        return Err(Error::FitFailed(format!("only {} bins in band", r.len())));
    }
    let y = &spec.psd[r.clone()];
    let x = &spec.freqs[r.clone()];
    let k = (y.len() / 8).max(1);
    let floor0 = y[y.len() - k..].iter().sum::<f64>() / k as f64;
    let top = y[..k].iter().sum::<f64>() / k as f64;
    let amp0 = top - floor0;
    if !(amp0 > 0.0) {
        return Err(Error::BandwidthUnidentifiable(
            "spectrum does not fall off above the low-frequency bins".into(),
        ));
    }
    let half = floor0 + 0.5 * amp0;
    let d0 = x
        .iter()
        .zip(y)
        .find(|(_, v)| **v < half)
        .map(|(f, _)| *f)
        .unwrap_or(x[x.len() / 2])
        .max(x[0]);
    let (fit, n) = irls(spec, lo, hi, vec![floor0, amp0, d0], &noise_model, &|p| {
        p[2] > 0.0
    })
    .map_err(|e| match e {
        Error::Singular(m) => Error::BandwidthUnidentifiable(m),
        other => other,
    })?;
    let p = &fit.params;
    let out = NoiseFit {
        floor: p[0],
        floor_stderr: fit.stderr[0],
        amplitude: p[1],
        amplitude_stderr: fit.stderr[1],
        bandwidth_hz: p[2],
        bandwidth_stderr: fit.stderr[2],
        chi2_red: fit.chi2_red,
        n_bins: n,
    };
    if !(out.amplitude > 2.0 * out.amplitude_stderr) || !out.bandwidth_stderr.is_finite() {
        return Err(Error::BandwidthUnidentifiable(format!(
            "Lorentzian amplitude {:.3e} +- {:.3e} is not significant",
            out.amplitude, out.amplitude_stderr
        )));
    }
    Ok(out)
}

/// Zero-centered Lorentzian A·Δ²/(f² + Δ²).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LorentzianFit {
    pub amplitude: f64,
    pub amplitude_stderr: f64,
    pub bandwidth_hz: f64,
    pub bandwidth_stderr: f64,
    pub chi2_red: f64,
}

impl LorentzianFit {
    pub fn eval(&self, f: f64) -> f64 {
        let d2 = self.bandwidth_hz * self.bandwidth_hz;
        self.amplitude * d2 / (f * f + d2)
    }
}

/// Fit to points (f, y) with optional per-point errors; relative weights
/// from the model are used where errors are missing.
pub fn fit_lorentzian(freqs: &[f64], y: &[f64], sigma: Option<&[f64]>) -> Result<LorentzianFit> {
    if freqs.len() != y.len() {
        return Err(Error::LengthMismatch {
            expected: freqs.len(),
            got: y.len(),
        });
    }
    if freqs.len() < 3 {
        return Err(Error::FitFailed("need at least 3 points".into()));
    }
    let a0 = y[0];
    if !(a0 > 0.0) {
        return Err(Error::ZeroSignal);
    }
    let d0 = freqs
        .iter()
        .zip(y)
        .find(|(_, v)| **v < 0.5 * a0)
        .map(|(f, _)| *f)
        .unwrap_or(*freqs.last().unwrap());
    let model = |f: f64, p: &[f64]| {
        let (a, d) = (p[0], p[1]);
        let den = f * f + d * d;
        let l = d * d / den;
        (a * l, vec![l, a * 2.0 * d * f * f / (den * den)])
    };
    let ok = |p: &[f64]| p[1] > 0.0;
    let mut p = vec![a0, d0];
    let mut fit = None;
    for _ in 0..4 {
        let s: Vec<f64> = match sigma {
            Some(s) => s.to_vec(),
            None => freqs.iter().map(|f| model(*f, &p).0.abs().max(f64::MIN_POSITIVE)).collect(),
        };
        let r = levenberg_marquardt(freqs, y, &s, &p, &model, &ok)?;
        p = r.params.clone();
        fit = Some(r);
        if sigma.is_some() {
            break;
        }
    }
    let fit = fit.unwrap();
    Ok(LorentzianFit {
        amplitude: fit.params[0],
        amplitude_stderr: fit.stderr[0],
        bandwidth_hz: fit.params[1],
        bandwidth_stderr: fit.stderr[1],
        chi2_red: fit.chi2_red,
    })
}

/// S(f) = a + b·f²; the knee √(a/b) is where S doubles its plateau.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadraticFit {
    pub a: f64,
    pub a_stderr: f64,
    pub b: f64,
    pub b_stderr: f64,
    pub cov_ab: f64,
    pub chi2_red: f64,
}

impl QuadraticFit {
    pub fn eval(&self, f: f64) -> f64 {
        self.a + self.b * f * f
    }

    /// √(a/b) with its first-order error.
    pub fn doubling_frequency(&self) -> (f64, f64) {
        let k = (self.a / self.b).sqrt();
        let ra = self.a_stderr / self.a;
        let rb = self.b_stderr / self.b;
        let rab = self.cov_ab / (self.a * self.b);
        let rel = 0.5 * (ra * ra + rb * rb - 2.0 * rab).max(0.0).sqrt();
        (k, k * rel)
    }
}

/// Relative-weight fit of a + b·f² over bins in `[lo, hi]`.
pub fn fit_quadratic_floor(spec: &Spectrum, lo: f64, hi: f64) -> Result<QuadraticFit> {
    let r = spec.band(lo, hi);
    if r.len() < 4 {
        return Err(Error::FitFailed(format!("only {} bins in band", r.len())));
    }
    let x = &spec.freqs[r.clone()];
    let y = &spec.psd[r];
    let mut p = [y[0].max(f64::MIN_POSITIVE), 0.0];
    let mut last = None;
    for _ in 0..6 {
        let mut ata = vec![vec![0.0; 2]; 2];
        let mut atb = vec![0.0; 2];
        let mut w_all = Vec::with_capacity(x.len());
        for (f, v) in x.iter().zip(y) {
            let m = (p[0] + p[1] * f * f).abs().max(f64::MIN_POSITIVE);
            let w = 1.0 / (m * m);
            w_all.push(w);
            let g = [1.0, f * f];
            for i in 0..2 {
                atb[i] += w * g[i] * v;
                for j in 0..2 {
                    ata[i][j] += w * g[i] * g[j];
                }
            }
        }
        let sol = solve(ata.clone(), atb)?;
        p = [sol[0], sol[1]];
        last = Some((ata, w_all));
    }
    let (ata, w) = last.unwrap();
    let chi2: f64 = x
        .iter()
        .zip(y)
        .zip(&w)
        .map(|((f, v), w)| {
            let r = v - (p[0] + p[1] * f * f);
            w * r * r
        })
        .sum();
    let chi2_red = chi2 / (x.len() - 2) as f64;
    let cov = invert(&ata)?;
    if !(p[0] > 0.0 && p[1] > 0.0) {
        return Err(Error::FitFailed(format!(
            "non-positive plateau or curvature: a = {:.3e}, b = {:.3e}",
            p[0], p[1]
        )));
    }
    Ok(QuadraticFit {
        a: p[0],
        a_stderr: (cov[0][0] * chi2_red).sqrt(),
        b: p[1],
        b_stderr: (cov[1][1] * chi2_red).sqrt(),
        cov_ab: cov[0][1] * chi2_red,
        chi2_red,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solve_small_system() {
        let x = solve(vec![vec![2.0, 1.0], vec![1.0, 3.0]], vec![3.0, 5.0]).unwrap();
        assert!((x[0] - 0.8).abs() < 1e-14 && (x[1] - 1.4).abs() < 1e-14);
        assert!(solve(vec![vec![1.0, 2.0], vec![2.0, 4.0]], vec![1.0, 2.0]).is_err());
    }

    #[test]
    fn exact_lorentzian_recovered() {
        let f: Vec<f64> = (1..40).map(|i| i as f64 * 25.0).collect();
        let y: Vec<f64> = f.iter().map(|x| 3.0 * 170.0f64.powi(2) / (x * x + 170.0f64.powi(2))).collect();
        let fit = fit_lorentzian(&f, &y, None).unwrap();
        assert!((fit.bandwidth_hz - 170.0).abs() < 1e-6);
        assert!((fit.amplitude - 3.0).abs() < 1e-8);
    }
}
