//! Measurement procedures run against the simulator: field-scan calibration,
//! responsivity sweep, magnetic sensitivity with and without squeezing, the
//! backaction A/B comparison and the spin-variance closure check.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::{self, AnalyticParams};
use crate::config::RunConfig;
use crate::dsp::fir::Fir;
use crate::dsp::fit::{fit_lorentzian, fit_noise_model, fit_quadratic_floor, invert, solve};
use crate::dsp::{periodogram, DemodRecord, LockIn, LorentzianFit, NoiseFit, PsdAccumulator, QuadraticFit, Window};
use crate::error::{Error, Result};
use crate::model::{hz_to_rad, Spectrum};
use crate::probe::readout;
use crate::report::Quantity;
use crate::sde::{record_rng, simulate_record, NoiseSwitches, SimPlan, SpinSystem, SpinTrajectory, Stream};

/// Record-index offsets keeping the random streams of different procedures apart.
const CALIBRATION_STREAMS: usize = 1 << 32;
const SWEEP_STREAMS: usize = 2 << 32;

/// Default number of jackknife groups.
pub const JACKKNIFE_GROUPS: usize = 10;

/// simulate → readout → lock-in for one configuration.
#[derive(Debug, Clone)]
pub struct Pipeline {
    pub sys: SpinSystem,
    pub plan: SimPlan,
    pub noise: NoiseSwitches,
    pub lockin: LockIn,
    fir: Fir,
}

/// Per-record scalars kept alongside the spectra.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecordStats {
    pub u_mean: f64,
    pub v_mean: f64,
    pub fx_var: f64,
}

/// Outcome of a multi-record run, grouped for jackknife errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutput {
    pub groups: Vec<PsdAccumulator>,
    pub records: Vec<RecordStats>,
}

fn mean_stderr(x: &[f64]) -> Quantity {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    if x.len() < 2 {
        return Quantity::exact(m);
    }
    let var = x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0);
    Quantity::new(m, (var / n).sqrt())
}

fn jackknife_error(full: f64, partial: &[f64]) -> Quantity {
    let g = partial.len() as f64;
    let mean = partial.iter().sum::<f64>() / g;
    let var = partial.iter().map(|p| (p - mean) * (p - mean)).sum::<f64>() * (g - 1.0) / g;
    Quantity::new(full, var.sqrt())
}

impl RunOutput {
    pub fn spectrum(&self) -> Result<Spectrum> {
        self.spectrum_without(None)
    }

    fn spectrum_without(&self, skip: Option<usize>) -> Result<Spectrum> {
        let mut acc: Option<PsdAccumulator> = None;
        for (i, g) in self.groups.iter().enumerate() {
            if Some(i) == skip || g.n == 0 {
                continue;
            }
            match acc.as_mut() {
                None => acc = Some(g.clone()),
                Some(a) => a.merge(g)?,
            }
        }
        acc.ok_or_else(|| Error::InvalidInput("no records".into()))?
            .spectrum()
    }

    /// `f` of the full spectrum with a leave-one-group-out error.
    pub fn jackknife(&self, f: impl Fn(&Spectrum) -> Result<f64>) -> Result<Quantity> {
        let full = f(&self.spectrum()?)?;
        if self.groups.len() < 2 {
            return Ok(Quantity::exact(full));
        }
        let partial = (0..self.groups.len())
            .map(|i| f(&self.spectrum_without(Some(i))?))
            .collect::<Result<Vec<_>>>()?;
        Ok(jackknife_error(full, &partial))
    }

    /// Like [`Self::jackknife`] for a quantity of two runs with paired seeds.
    pub fn jackknife_pair(
        &self,
        other: &RunOutput,
        f: impl Fn(&Spectrum, &Spectrum) -> Result<f64>,
    ) -> Result<Quantity> {
        if self.groups.len() != other.groups.len() {
            return Err(Error::LengthMismatch {
                expected: self.groups.len(),
                got: other.groups.len(),
            });
        }
        let full = f(&self.spectrum()?, &other.spectrum()?)?;
        if self.groups.len() < 2 {
            return Ok(Quantity::exact(full));
        }
        let partial = (0..self.groups.len())
            .map(|i| f(&self.spectrum_without(Some(i))?, &other.spectrum_without(Some(i))?))
            .collect::<Result<Vec<_>>>()?;
        Ok(jackknife_error(full, &partial))
    }

    pub fn u_mean(&self) -> Quantity {
        mean_stderr(&self.records.iter().map(|r| r.u_mean).collect::<Vec<_>>())
    }

    pub fn v_mean(&self) -> Quantity {
        mean_stderr(&self.records.iter().map(|r| r.v_mean).collect::<Vec<_>>())
    }

    pub fn fx_var(&self) -> Quantity {
        mean_stderr(&self.records.iter().map(|r| r.fx_var).collect::<Vec<_>>())
    }
}

impl Pipeline {
    pub fn new(sys: SpinSystem, plan: SimPlan, noise: NoiseSwitches, lockin: LockIn) -> Result<Self> {
        sys.validate()?;
        plan.validate(sys.f_mod())?;
        let fir = lockin.filter(plan.sample_rate)?;
        if plan.samples_per_record() < fir.len() + 8 * lockin.decim {
            return Err(Error::InvalidPlan(format!(
                "{} samples per record is too short for the {}-tap filter",
                plan.samples_per_record(),
                fir.len()
            )));
        }
        Ok(Self {
            sys,
            plan,
            noise,
            lockin,
            fir,
        })
    }

    pub fn from_config(cfg: &RunConfig) -> Result<Self> {
        Self::new(cfg.system()?, cfg.plan(), cfg.noise(), cfg.lockin())
    }

    /// Length and rate of the demodulated records.
    pub fn demod_shape(&self) -> (usize, f64) {
        let n = self.plan.samples_per_record();
        let len = (n - self.fir.len()) / self.lockin.decim + 1;
        (len, self.lockin.output_rate(self.plan.sample_rate))
    }

    /// Bin spacing of spectra of the demodulated records.
    pub fn demod_df(&self) -> f64 {
        let (len, rate) = self.demod_shape();
        rate / len as f64
    }

    pub fn record(&self, index: usize) -> Result<(SpinTrajectory, DemodRecord)> {
        let traj = simulate_record(&self.plan, &self.sys, &self.noise, index)?;
        let mut rng = self
            .noise
            .probe
            .then(|| record_rng(self.plan.seed, index, Stream::Probe));
        let pol = readout(&traj, &self.sys.probe, rng.as_mut())?;
        let demod = self
            .lockin
            .demodulate_with(&self.fir, &pol.times, &pol.s2_samples, pol.sample_rate)?;
        Ok((traj, demod))
    }

    fn record_summary(&self, index: usize) -> Result<(Vec<f64>, RecordStats)> {
        let (traj, d) = self.record(index)?;
        let fx = traj.component(0);
        let n = fx.len() as f64;
        let fx_mean = fx.iter().sum::<f64>() / n;
        let fx_var = fx.iter().map(|x| (x - fx_mean) * (x - fx_mean)).sum::<f64>() / (n - 1.0);
        let m = d.u.len() as f64;
        let stats = RecordStats {
            u_mean: d.u.iter().sum::<f64>() / m,
            v_mean: d.v.iter().sum::<f64>() / m,
            fx_var,
        };
        Ok((periodogram(&d.v, d.sample_rate, Window::Hann), stats))
    }

    /// Records `first .. first + plan.n_records`, in parallel, reduced in order.
    pub fn run_from(&self, first: usize, groups: usize) -> Result<RunOutput> {
        let n = self.plan.n_records;
        let groups = groups.clamp(1, n);
        let (len, rate) = self.demod_shape();
        let mut out = RunOutput {
            groups: vec![PsdAccumulator::new(len, rate, Window::Hann); groups],
            records: Vec::with_capacity(n),
        };
        let chunk = 4 * rayon::current_num_threads().max(1);
        let mut start = 0;
        while start < n {
            let end = (start + chunk).min(n);
            let part: Vec<(Vec<f64>, RecordStats)> = (start..end)
                .into_par_iter()
                .map(|i| self.record_summary(first + i))
                .collect::<Result<_>>()?;
            for (k, (p, s)) in part.into_iter().enumerate() {
                let i = start + k;
                out.groups[i * groups / n].add(&p)?;
                out.records.push(s);
            }
            start = end;
        }
        Ok(out)
    }

    pub fn run(&self) -> Result<RunOutput> {
        self.run_from(0, JACKKNIFE_GROUPS)
    }
}

/// Demodulated-v spectrum of the configuration together with the matching
/// closed-form parameters.
pub fn noise_spectrum(cfg: &RunConfig) -> Result<(RunOutput, AnalyticParams)> {
    let p = Pipeline::from_config(cfg)?;
    Ok((p.run()?, cfg.analytic()?))
}

/// Fit of the v spectrum in the configured band.
pub fn fit_v_spectrum(cfg: &RunConfig, spec: &Spectrum) -> Result<NoiseFit> {
    fit_noise_model(spec, cfg.band_lo, cfg.band_hi)
}

// ---------------------------------------------------------------- calibration

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldScan {
    /// Tesla.
    pub center: f64,
    pub half_span: f64,
    pub points: usize,
    /// Points within this distance of `center` enter the slope fit.
    pub fit_half_span: f64,
}

impl FieldScan {
    pub fn from_config(cfg: &RunConfig) -> Self {
        let per_rate = 1.0 / cfg.gamma.abs();
        Self {
            center: cfg.b0(),
            half_span: cfg.cal_span * cfg.delta_omega() * per_rate,
            points: cfg.cal_points,
            fit_half_span: cfg.cal_fit_span * cfg.delta_omega() * per_rate,
        }
    }

    pub fn fields(&self) -> Vec<f64> {
        let n = self.points;
        (0..n)
            .map(|i| self.center + self.half_span * (2.0 * i as f64 / (n - 1) as f64 - 1.0))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanPoint {
    pub b0: f64,
    /// |γ|B₀ − Ω, rad/s.
    pub detuning: f64,
    pub u: f64,
    pub v: f64,
    pub v_stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    /// dv/dB at the scan center, signal per tesla.
    pub slope: Quantity,
    /// Fitted v at the scan center.
    pub offset: Quantity,
    pub points: Vec<ScanPoint>,
}

fn block_mean(x: &[f64], blocks: usize) -> Quantity {
    let blocks = blocks.min(x.len()).max(1);
    let size = x.len() / blocks;
    let means: Vec<f64> = (0..blocks)
        .map(|b| x[b * size..(b + 1) * size].iter().sum::<f64>() / size as f64)
        .collect();
    let whole = x.iter().sum::<f64>() / x.len() as f64;
    Quantity::new(whole, mean_stderr(&means).stderr)
}

/// Weighted polynomial fit; returns coefficients and their covariance.
fn polyfit(x: &[f64], y: &[f64], sigma: &[f64], degree: usize) -> Result<(Vec<f64>, Vec<Vec<f64>>, f64)> {
    let np = degree + 1;
    if x.len() < np {
        return Err(Error::FitFailed(format!("{} points for degree {degree}", x.len())));
    }
    let mut ata = vec![vec![0.0; np]; np];
    let mut atb = vec![0.0; np];
    for ((xi, yi), s) in x.iter().zip(y).zip(sigma) {
        let w = 1.0 / (s * s);
        let pw: Vec<f64> = (0..np).map(|k| xi.powi(k as i32)).collect();
        for a in 0..np {
            atb[a] += w * pw[a] * yi;
            for b in 0..np {
                ata[a][b] += w * pw[a] * pw[b];
            }
        }
    }
    let c = solve(ata.clone(), atb)?;
    let dof = (x.len() - np).max(1) as f64;
    let chi2: f64 = x
        .iter()
        .zip(y)
        .zip(sigma)
        .map(|((xi, yi), s)| {
            let m: f64 = c.iter().enumerate().map(|(k, ck)| ck * xi.powi(k as i32)).sum();
            ((yi - m) / s).powi(2)
        })
        .sum();
    let chi2_red = chi2 / dof;
    let scale = if x.len() > np { chi2_red } else { 1.0 };
    let mut cov = invert(&ata)?;
    cov.iter_mut().flatten().for_each(|v| *v *= scale);
    Ok((c, cov, chi2_red))
}

/// Sweep B₀ at fixed pump frequency, record the mean quadrature v per point
/// and fit the dispersive zero crossing with a cubic.
pub fn field_scan_calibration(cfg: &RunConfig, scan: &FieldScan, noise: &NoiseSwitches) -> Result<Calibration> {
    if scan.points < 11 {
        return Err(Error::InvalidInput(format!("calibration needs >= 11 points, got {}", scan.points)));
    }
    let base = cfg.system()?;
    let plan = SimPlan {
        record_seconds: cfg.cal_record_seconds,
        n_records: 1,
        ..cfg.plan()
    };
    let fields = scan.fields();
    let points: Vec<ScanPoint> = fields
        .par_iter()
        .enumerate()
        .map(|(i, b)| {
            let mut sys = base;
            sys.field.b0 = *b;
            let p = Pipeline::new(sys, plan, *noise, cfg.lockin())?;
            let (_, d) = p.record(CALIBRATION_STREAMS + i)?;
            let v = block_mean(&d.v, 10);
            let u = d.u.iter().sum::<f64>() / d.u.len() as f64;
            Ok(ScanPoint {
                b0: *b,
                detuning: sys.ensemble.gamma.abs() * b - sys.pump.omega_mod,
                u,
                v: v.value,
                v_stderr: v.stderr,
            })
        })
        .collect::<Result<_>>()?;

    let (first, last) = (points[0].v, points[points.len() - 1].v);
    if !(first * last < 0.0) {
        return Err(Error::ScanNotBracketing(format!(
            "v = {first:.4e} and {last:.4e} at the scan ends have the same sign"
        )));
    }

    let sel: Vec<&ScanPoint> = points
        .iter()
        .filter(|p| (p.b0 - scan.center).abs() <= scan.fit_half_span * (1.0 + 1e-9))
        .collect();
    // fit in units of the fit half-span for conditioning
    let x: Vec<f64> = sel.iter().map(|p| (p.b0 - scan.center) / scan.fit_half_span).collect();
    let y: Vec<f64> = sel.iter().map(|p| p.v).collect();
    let floor = y.iter().map(|v| v.abs()).fold(0.0, f64::max) * 1e-12;
    let noisy = sel.iter().all(|p| p.v_stderr > floor);
    let sigma: Vec<f64> = sel
        .iter()
        .map(|p| if noisy { p.v_stderr } else { 1.0 })
        .collect();
    let (c, cov, _) = polyfit(&x, &y, &sigma, 3)?;
    let slope = c[1] / scan.fit_half_span;
    let slope_err = cov[1][1].max(0.0).sqrt() / scan.fit_half_span;
    Ok(Calibration {
        slope: Quantity::new(slope, slope_err),
        offset: Quantity::new(c[0], cov[0][0].max(0.0).sqrt()),
        points,
    })
}

// --------------------------------------------------------------- responsivity

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponsivitySweep {
    pub tone_amplitude: f64,
    pub freqs: Vec<f64>,
    /// Integrated tone power in the v spectrum.
    pub power: Vec<Quantity>,
    /// Power over power at the lowest frequency.
    pub normalized: Vec<f64>,
    pub fit: LorentzianFit,
    pub delta_hz: Quantity,
}

impl ResponsivitySweep {
    /// Fitted |R̂(f)|² normalized to 1 at f = 0.
    pub fn normalized_response(&self, f: f64) -> f64 {
        let d2 = self.fit.bandwidth_hz * self.fit.bandwidth_hz;
        d2 / (f * f + d2)
    }
}

/// Log-spaced sweep snapped to bin centers of the demodulated spectrum.
pub fn sweep_frequencies(cfg: &RunConfig) -> Result<Vec<f64>> {
    let df = Pipeline::from_config(cfg)?.demod_df();
    let n = cfg.sweep_points;
    let (lo, hi) = (cfg.sweep_lo.ln(), cfg.sweep_hi.ln());
    let mut bins: Vec<usize> = (0..n)
        .map(|i| {
            let f = (lo + (hi - lo) * i as f64 / (n - 1) as f64).exp();
            (f / df).round() as usize
        })
        .collect();
    bins.dedup();
    Ok(bins.into_iter().map(|k| k as f64 * df).collect())
}

/// Power of a tone of `amplitude` at `freq` in the v spectrum, integrated
/// over ±3 bins with the local background removed.
pub fn tone_power(cfg: &RunConfig, freq: f64, amplitude: f64, first_record: usize) -> Result<Quantity> {
    let mut sys = cfg.system()?;
    sys.field = sys.field.with_tone(amplitude, freq, 0.0)?;
    let plan = SimPlan {
        n_records: cfg.sweep_records,
        ..cfg.plan()
    };
    let p = Pipeline::new(sys, plan, cfg.noise(), cfg.lockin())?;
    let df = p.demod_df();
    let out = p.run_from(first_record, 1)?;
    let spec = out.spectrum()?;
    let k0 = (freq / df).round() as usize;
    if k0 < 4 || k0 + 8 >= spec.psd.len() {
        return Err(Error::ToneNotResolved(format!(
            "{freq} Hz falls in bin {k0} of {} (bin width {df:.3} Hz)",
            spec.psd.len()
        )));
    }
    let peak: f64 = spec.psd[k0 - 3..=k0 + 3].iter().sum();
    let peak_var: f64 = spec.psd_stderr[k0 - 3..=k0 + 3].iter().map(|e| e * e).sum();
    let bg_bins: Vec<f64> = (5..=8)
        .flat_map(|d| [k0.checked_sub(d), Some(k0 + d)])
        .flatten()
        .filter(|k| *k >= 1)
        .map(|k| spec.psd[k])
        .collect();
    let bg = bg_bins.iter().sum::<f64>() / bg_bins.len() as f64;
    Ok(Quantity::new((peak - 7.0 * bg) * df, peak_var.sqrt() * df))
}

/// Inject a tone on B_x at each frequency, measure its power in v,
/// normalize to the lowest frequency and fit a zero-centered Lorentzian.
pub fn responsivity_sweep(cfg: &RunConfig, freqs: &[f64], tone_amp: f64) -> Result<ResponsivitySweep> {
    if freqs.len() < 3 {
        return Err(Error::InvalidInput("sweep needs at least 3 frequencies".into()));
    }
    let power = freqs
        .par_iter()
        .enumerate()
        .map(|(i, f)| tone_power(cfg, *f, tone_amp, SWEEP_STREAMS + i * cfg.sweep_records))
        .collect::<Result<Vec<_>>>()?;
    let p0 = power[0].value;
    if !(p0 > 0.0) {
        return Err(Error::ZeroSignal);
    }
    let normalized: Vec<f64> = power.iter().map(|p| p.value / p0).collect();
    let fit = fit_lorentzian(freqs, &normalized, None)?;
    Ok(ResponsivitySweep {
        tone_amplitude: tone_amp,
        freqs: freqs.to_vec(),
        power,
        normalized,
        fit,
        delta_hz: Quantity::new(fit.bandwidth_hz, fit.bandwidth_stderr),
    })
}

/// Sweep with the configured frequencies and tone.
pub fn default_responsivity_sweep(cfg: &RunConfig) -> Result<ResponsivitySweep> {
    responsivity_sweep(cfg, &sweep_frequencies(cfg)?, cfg.tone_amplitude())
}

// ---------------------------------------------------------------- sensitivity

/// S_B(f) = S_v(f)/((dv/dB)²·|R̂(f)|²).
pub fn magnetic_spectrum(
    v: &Spectrum,
    cal: Option<&Calibration>,
    resp: Option<&ResponsivitySweep>,
) -> Result<Spectrum> {
    let cal = cal.ok_or_else(|| Error::MissingCalibration("dv/dB slope not available".into()))?;
    let resp = resp.ok_or_else(|| Error::MissingCalibration("responsivity not available".into()))?;
    let s2 = cal.slope.value * cal.slope.value;
    if s2 == 0.0 {
        return Err(Error::ZeroSignal);
    }
    Ok(v.map_psd(|f, p| p / (s2 * resp.normalized_response(f))))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityResult {
    pub squeezing_db: f64,
    pub v_spectrum: Spectrum,
    pub b_spectrum: Spectrum,
    /// S_B ≈ a + b·f² over the analysis band.
    pub fit: QuadraticFit,
    pub plateau: Quantity,
    pub w3db_hz: Quantity,
    /// √S_B at the probe frequency from the fit, T/√Hz.
    pub sqrt_sb_probe: Quantity,
    /// √S_B averaged over ±10 % around the probe frequency, raw bins.
    pub sqrt_sb_probe_band: f64,
    pub run: RunOutput,
}

fn sb_fit(cfg: &RunConfig, v: &Spectrum, cal: &Calibration, resp: &ResponsivitySweep) -> Result<QuadraticFit> {
    let b = magnetic_spectrum(v, Some(cal), Some(resp))?;
    fit_quadratic_floor(&b, cfg.band_lo, cfg.band_hi)
}

/// Full pipeline at the given squeezing, converted to magnetic units with a
/// prior calibration and responsivity measurement.
pub fn sensitivity_run(
    cfg: &RunConfig,
    squeezing_db: f64,
    cal: Option<&Calibration>,
    resp: Option<&ResponsivitySweep>,
) -> Result<SensitivityResult> {
    let cal = cal.ok_or_else(|| Error::MissingCalibration("run field_scan_calibration first".into()))?;
    let resp = resp.ok_or_else(|| Error::MissingCalibration("run responsivity_sweep first".into()))?;
    let c = cfg.clone().with_squeezing_db(squeezing_db);
    let run = Pipeline::from_config(&c)?.run()?;
    let v = run.spectrum()?;
    let b = magnetic_spectrum(&v, Some(cal), Some(resp))?;
    let fit = fit_quadratic_floor(&b, c.band_lo, c.band_hi)?;
    let fp = c.probe_freq;
    let w3db = run.jackknife(|s| Ok(sb_fit(&c, s, cal, resp)?.doubling_frequency().0))?;
    let probe = run.jackknife(|s| Ok(sb_fit(&c, s, cal, resp)?.eval(fp).sqrt()))?;
    let plateau = run.jackknife(|s| Ok(sb_fit(&c, s, cal, resp)?.a))?;
    let band = b
        .band_mean(0.9 * fp, 1.1 * fp)
        .ok_or_else(|| Error::InvalidInput("no bins around the probe frequency".into()))?
        .sqrt();
    Ok(SensitivityResult {
        squeezing_db,
        v_spectrum: v,
        b_spectrum: b,
        fit,
        plateau,
        w3db_hz: w3db,
        sqrt_sb_probe: probe,
        sqrt_sb_probe_band: band,
        run,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SqueezingComparison {
    pub sql: SensitivityResult,
    pub squeezed: SensitivityResult,
    /// √S_B ratio squeezed/SQL at the probe frequency.
    pub amplitude_ratio: Quantity,
    pub bandwidth_ratio: Quantity,
    pub plateau_ratio: Quantity,
}

/// Paired-seed SQL and squeezed runs sharing one calibration.
pub fn squeezing_comparison(
    cfg: &RunConfig,
    squeezing_db: f64,
    cal: &Calibration,
    resp: &ResponsivitySweep,
) -> Result<SqueezingComparison> {
    let sql_cfg = cfg.clone().with_squeezing_db(0.0);
    let sq_cfg = cfg.clone().with_squeezing_db(squeezing_db);
    let sql = sensitivity_run(cfg, 0.0, Some(cal), Some(resp))?;
    let squeezed = sensitivity_run(cfg, squeezing_db, Some(cal), Some(resp))?;
    let fp = cfg.probe_freq;
    let pair = |f: &dyn Fn(&QuadraticFit, &QuadraticFit) -> f64| {
        squeezed.run.jackknife_pair(&sql.run, |a, b| {
            Ok(f(&sb_fit(&sq_cfg, a, cal, resp)?, &sb_fit(&sql_cfg, b, cal, resp)?))
        })
    };
    let amplitude_ratio = pair(&|a, b| (a.eval(fp) / b.eval(fp)).sqrt())?;
    let bandwidth_ratio = pair(&|a, b| a.doubling_frequency().0 / b.doubling_frequency().0)?;
    let plateau_ratio = pair(&|a, b| a.a / b.a)?;
    Ok(SqueezingComparison {
        sql,
        squeezed,
        amplitude_ratio,
        bandwidth_ratio,
        plateau_ratio,
    })
}

// ------------------------------------------------------------------ backaction

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackactionAb {
    pub scales: Vec<f64>,
    /// Fitted low-frequency S_B plateau per scale.
    pub plateau: Vec<Quantity>,
    /// Plateau at the largest scale over the plateau at the smallest.
    pub plateau_ratio: Quantity,
    pub fx_var: Vec<Quantity>,
    /// d Var(F_x)/d scale from paired records.
    pub slope: Quantity,
    /// Closed-form slope G_ba²·|F₊⁽⁰⁾|²·S₃/(8Δω).
    pub predicted_slope: f64,
    /// Whether any output depended on the scale at all.
    pub outputs_identical: bool,
}

pub const AB_SCALES: [f64; 3] = [1.0, 10.0, 100.0];

/// Paired simulations with the S₃ noise power multiplied by each scale.
pub fn backaction_ab_test(
    cfg: &RunConfig,
    scales: &[f64],
    cal: &Calibration,
    resp: &ResponsivitySweep,
) -> Result<BackactionAb> {
    if scales.len() < 2 {
        return Err(Error::InvalidInput("need at least two scales".into()));
    }
    let base = Pipeline::from_config(cfg)?;
    let runs = scales
        .iter()
        .map(|s| {
            let mut p = base.clone();
            p.noise.backaction = true;
            p.noise.backaction_scale = *s;
            p.run()
        })
        .collect::<Result<Vec<_>>>()?;
    let plateau = runs
        .iter()
        .map(|r| r.jackknife(|s| Ok(sb_fit(cfg, s, cal, resp)?.a)))
        .collect::<Result<Vec<_>>>()?;
    let last = runs.len() - 1;
    let plateau_ratio = runs[last].jackknife_pair(&runs[0], |a, b| {
        Ok(sb_fit(cfg, a, cal, resp)?.a / sb_fit(cfg, b, cal, resp)?.a)
    })?;
    let fx_var: Vec<Quantity> = runs.iter().map(|r| r.fx_var()).collect();

    // least-squares slope per record, then averaged over records
    let sm = scales.iter().sum::<f64>() / scales.len() as f64;
    let sxx: f64 = scales.iter().map(|s| (s - sm) * (s - sm)).sum();
    let per_record: Vec<f64> = (0..runs[0].records.len())
        .map(|i| {
            let ys: Vec<f64> = runs.iter().map(|r| r.records[i].fx_var).collect();
            let ym = ys.iter().sum::<f64>() / ys.len() as f64;
            scales.iter().zip(&ys).map(|(s, y)| (s - sm) * (y - ym)).sum::<f64>() / sxx
        })
        .collect();
    let slope = mean_stderr(&per_record);

    let sys = &base.sys;
    let f0 = analytic::steady_state(&sys.ensemble, &sys.pump, 0.0)?;
    let predicted_slope = analytic::backaction_variance_slope(sys.probe.backaction_coupling, f0, sys.delta_omega())
        * sys.probe.s3_psd
        * sys.probe.anti_squeezing();
    let outputs_identical = runs.windows(2).all(|w| w[0] == w[1]);
    Ok(BackactionAb {
        scales: scales.to_vec(),
        plateau,
        plateau_ratio,
        fx_var,
        slope,
        predicted_slope,
        outputs_identical,
    })
}

// ---------------------------------------------------------- spin-noise closure

/// Per-axis variance of the spin fluctuations about the deterministic
/// trajectory, from paired noisy and noiseless records.
pub fn spin_variance(cfg: &RunConfig, plan: &SimPlan) -> Result<[Quantity; 3]> {
    let sys = cfg.system()?;
    let noisy = NoiseSwitches {
        spin: true,
        backaction: false,
        backaction_scale: 1.0,
        probe: false,
    };
    let quiet = NoiseSwitches {
        spin: false,
        ..noisy
    };
    // without noise every record follows the same trajectory
    let b = simulate_record(plan, &sys, &quiet, 0)?;
    let per: Vec<[f64; 3]> = (0..plan.n_records)
        .into_par_iter()
        .map(|i| {
            let a = simulate_record(plan, &sys, &noisy, i)?;
            let mut acc = [0.0; 3];
            for (x, y) in a.f_samples.iter().zip(&b.f_samples) {
                for k in 0..3 {
                    let d = x[k] - y[k];
                    acc[k] += d * d;
                }
            }
            let n = a.f_samples.len() as f64;
            Ok([acc[0] / n, acc[1] / n, acc[2] / n])
        })
        .collect::<Result<_>>()?;
    let axis = |k: usize| mean_stderr(&per.iter().map(|v| v[k]).collect::<Vec<_>>());
    Ok([axis(0), axis(1), axis(2)])
}

/// Knee (Hz) of the v spectrum predicted for the configuration.
pub fn predicted_knee_hz(cfg: &RunConfig) -> f64 {
    crate::model::rad_to_hz(cfg.delta_omega())
}

/// Responsivity predicted at `f` Hz, signal per tesla.
pub fn predicted_responsivity(cfg: &RunConfig, f: f64) -> Result<num_complex::Complex64> {
    Ok(analytic::responsivity(&cfg.analytic()?, hz_to_rad(f)))
}
