use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use bellbloom::analytic::{self, AnalyticParams};
use bellbloom::config::{Profile, RunConfig};
use bellbloom::experiments::{self, FieldScan, Pipeline, AB_SCALES};
use bellbloom::model::{hz_to_rad, rad_to_hz, xi2_from_db};
use bellbloom::report::{ExperimentReport, NamedSpectrum, Quantity, Table};
use bellbloom::Result;

#[derive(Parser)]
#[command(name = "bellbloom", version, about = "Bell-Bloom magnetometer noise simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Flat TOML file with overrides (SI units).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Probe squeezing in dB.
    #[arg(long = "squeeze-db")]
    squeeze_db: Option<f64>,
    #[arg(long)]
    records: Option<usize>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, value_parser = ["desk", "paper"])]
    profile: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the demodulated noise spectrum and fit it.
    Simulate(Common),
    /// Field-scan calibration of dv/dB.
    Calibrate(Common),
    /// Responsivity sweep with an injected field tone.
    Respond(Common),
    /// Magnetic sensitivity, with and without squeezing.
    Sensitivity(Common),
    /// Backaction A/B test with scaled S3 noise.
    Abtest(Common),
    /// Closed-form model curves.
    Analytic(Common),
}

fn load(c: &Common) -> Result<RunConfig> {
    let profile: Option<Profile> = c.profile.as_deref().map(str::parse).transpose()?;
    let mut cfg = match &c.config {
        Some(p) => RunConfig::load(p, profile)?,
        None => RunConfig::profile(profile.unwrap_or(Profile::Desk)),
    };
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(n) = c.records {
        cfg.n_records = n;
    }
    if let Some(db) = c.squeeze_db {
        cfg.squeezing_db = db;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn simulate(cfg: &RunConfig, out: &std::path::Path) -> Result<ExperimentReport> {
    let mut rep = ExperimentReport::new("simulate", cfg);
    let pipe = Pipeline::from_config(cfg)?;
    let run = pipe.run()?;
    let spec = run.spectrum()?;
    let model = cfg.analytic()?;
    rep.set("u_mean", run.u_mean());
    rep.set("v_mean", run.v_mean());
    rep.set("fx_variance", run.fx_var());
    rep.set("model_u_mean", Quantity::exact(model.u_mean));
    rep.set("model_knee_hz", Quantity::exact(rad_to_hz(model.delta_omega)));
    rep.set("model_floor", Quantity::exact(model.floor()));
    rep.set("model_spin_noise", Quantity::exact(model.s_sigma));
    match experiments::fit_v_spectrum(cfg, &spec) {
        Ok(fit) => {
            rep.set("fit_floor", Quantity::new(fit.floor, fit.floor_stderr));
            rep.set("fit_spin_noise", Quantity::new(fit.amplitude, fit.amplitude_stderr));
            rep.set("fit_knee_hz", Quantity::new(fit.bandwidth_hz, fit.bandwidth_stderr));
        }
        Err(e) => rep.notes.push(format!("noise fit: {e}")),
    }
    let mut t = Table::new(&["freq_hz", "psd_sim", "psd_stderr", "psd_model"]);
    for r in spec.band(cfg.band_lo, cfg.band_hi) {
        let f = spec.freqs[r];
        t.push(vec![f, spec.psd[r], spec.psd_stderr[r], analytic::signal_noise_spectrum(&model, hz_to_rad(f))]);
    }
    rep.tables.insert("v_model".into(), t);
    rep.spectra.push(NamedSpectrum {
        name: "v".into(),
        units: "signal^2/Hz".into(),
        spectrum: spec,
    });
    if cfg.write_trajectory {
        std::fs::create_dir_all(out)?;
        let (traj, _) = pipe.record(0)?;
        let f = std::fs::File::create(out.join("trajectory.csv"))?;
        traj.write_csv(std::io::BufWriter::new(f))?;
    }
    Ok(rep)
}

fn calibrate(cfg: &RunConfig) -> Result<ExperimentReport> {
    let mut rep = ExperimentReport::new("calibrate", cfg);
    let cal = experiments::field_scan_calibration(cfg, &FieldScan::from_config(cfg), &cfg.noise())?;
    let model = cfg.analytic()?;
    rep.set("dv_db", cal.slope);
    rep.set("v_offset", cal.offset);
    rep.set("model_dv_db", Quantity::exact(analytic::responsivity(&model, 0.0).re));
    let mut t = Table::new(&["b0_t", "detuning_hz", "u", "v", "v_stderr"]);
    for p in &cal.points {
        t.push(vec![p.b0, rad_to_hz(p.detuning), p.u, p.v, p.v_stderr]);
    }
    rep.tables.insert("calibration".into(), t);
    Ok(rep)
}

fn respond(cfg: &RunConfig) -> Result<ExperimentReport> {
    let mut rep = ExperimentReport::new("respond", cfg);
    let sw = experiments::default_responsivity_sweep(cfg)?;
    rep.set("fit_delta_hz", sw.delta_hz);
    rep.set("model_delta_hz", Quantity::exact(experiments::predicted_knee_hz(cfg)));
    rep.set("tone_amplitude_t", Quantity::exact(sw.tone_amplitude));
    let mut t = Table::new(&["freq_hz", "power", "power_stderr", "normalized", "fit"]);
    for (i, f) in sw.freqs.iter().enumerate() {
        t.push(vec![*f, sw.power[i].value, sw.power[i].stderr, sw.normalized[i], sw.fit.eval(*f)]);
    }
    rep.tables.insert("responsivity".into(), t);
    Ok(rep)
}

fn sensitivity(cfg: &RunConfig) -> Result<ExperimentReport> {
    let mut rep = ExperimentReport::new("sensitivity", cfg);
    let cal = experiments::field_scan_calibration(cfg, &FieldScan::from_config(cfg), &cfg.noise())?;
    let resp = experiments::default_responsivity_sweep(cfg)?;
    rep.set("dv_db", cal.slope);
    rep.set("fit_delta_hz", resp.delta_hz);
    let model = cfg.analytic()?.with_xi2(1.0);
    let bw = analytic::bandwidth_3db(&model.with_xi2(xi2_from_db(cfg.squeezing_db)));
    rep.set("model_w3db_sql_hz", Quantity::exact(bw.sql_hz));
    let fp = hz_to_rad(cfg.probe_freq);
    rep.set("model_sqrt_sb_probe_sql", Quantity::exact(analytic::sensitivity(&model, fp)?.sqrt()));
    let emit = |rep: &mut ExperimentReport, tag: &str, r: &experiments::SensitivityResult| {
        rep.set(&format!("w3db_{tag}_hz"), r.w3db_hz);
        rep.set(&format!("plateau_{tag}"), r.plateau);
        rep.set(&format!("sqrt_sb_probe_{tag}"), r.sqrt_sb_probe);
        rep.set(&format!("sqrt_sb_probe_band_{tag}"), Quantity::exact(r.sqrt_sb_probe_band));
        rep.spectra.push(NamedSpectrum {
            name: format!("b_{tag}"),
            units: "T^2/Hz".into(),
            spectrum: r.b_spectrum.clone(),
        });
        rep.spectra.push(NamedSpectrum {
            name: format!("v_{tag}"),
            units: "signal^2/Hz".into(),
            spectrum: r.v_spectrum.clone(),
        });
    };
    if cfg.squeezing_db > 0.0 {
        let cmp = experiments::squeezing_comparison(cfg, cfg.squeezing_db, &cal, &resp)?;
        emit(&mut rep, "sql", &cmp.sql);
        emit(&mut rep, "sq", &cmp.squeezed);
        rep.set("amplitude_ratio", cmp.amplitude_ratio);
        rep.set("bandwidth_ratio", cmp.bandwidth_ratio);
        rep.set("plateau_ratio", cmp.plateau_ratio);
        let sq = model.with_xi2(xi2_from_db(cfg.squeezing_db));
        rep.set("model_w3db_sq_hz", Quantity::exact(bw.squeezed_hz));
        rep.set("model_amplitude_ratio", Quantity::exact(analytic::squeezed_ratio(&sq, fp).sqrt()));
        rep.set("model_bandwidth_ratio", Quantity::exact(bw.ratio()));
    } else {
        let r = experiments::sensitivity_run(cfg, 0.0, Some(&cal), Some(&resp))?;
        emit(&mut rep, "sql", &r);
    }
    Ok(rep)
}

fn abtest(cfg: &RunConfig) -> Result<ExperimentReport> {
    let mut rep = ExperimentReport::new("abtest", cfg);
    let cal = experiments::field_scan_calibration(cfg, &FieldScan::from_config(cfg), &cfg.noise())?;
    let resp = experiments::default_responsivity_sweep(cfg)?;
    let ab = experiments::backaction_ab_test(cfg, &AB_SCALES, &cal, &resp)?;
    rep.set("plateau_ratio", ab.plateau_ratio);
    rep.set("fx_var_slope", ab.slope);
    rep.set("model_fx_var_slope", Quantity::exact(ab.predicted_slope));
    let mut t = Table::new(&["scale", "plateau", "plateau_stderr", "fx_var", "fx_var_stderr"]);
    for (i, s) in ab.scales.iter().enumerate() {
        t.push(vec![*s, ab.plateau[i].value, ab.plateau[i].stderr, ab.fx_var[i].value, ab.fx_var[i].stderr]);
    }
    rep.tables.insert("backaction".into(), t);
    Ok(rep)
}

fn analytic_curves(cfg: &RunConfig) -> Result<ExperimentReport> {
    let mut rep = ExperimentReport::new("analytic", cfg);
    let xi2 = xi2_from_db(cfg.squeezing_db);
    let sql: AnalyticParams = cfg.analytic()?.with_xi2(1.0);
    let sq = sql.with_xi2(xi2);
    let bw = analytic::bandwidth_3db(&sq);
    let fp = hz_to_rad(cfg.probe_freq);
    rep.set("zeta2", Quantity::exact(sql.zeta2()));
    rep.set("xi2", Quantity::exact(xi2));
    rep.set("delta_hz", Quantity::exact(rad_to_hz(sql.delta_omega)));
    rep.set("w3db_sql_hz", Quantity::exact(bw.sql_hz));
    rep.set("w3db_sq_hz", Quantity::exact(bw.squeezed_hz));
    rep.set("power_ratio_probe", Quantity::exact(analytic::squeezed_ratio(&sq, fp)));
    rep.set("power_ratio_probe_alt", Quantity::exact(analytic::squeezed_ratio_printed(&sq, fp)));
    rep.set("lineshape_probe", Quantity::exact(analytic::lineshape(&sql, fp)));
    rep.set("sqrt_sb_probe_sql", Quantity::exact(analytic::sensitivity(&sql, fp)?.sqrt()));
    rep.set("sqrt_sb_probe_sq", Quantity::exact(analytic::sensitivity(&sq, fp)?.sqrt()));
    let mut t = Table::new(&[
        "freq_hz", "sv_sql", "sv_sq", "sb_sql", "sb_sq", "response_norm", "power_ratio", "power_ratio_alt",
    ]);
    let f_hi = 3.0 * cfg.band_hi;
    let n = 600;
    for i in 0..=n {
        let f = f_hi * i as f64 / n as f64;
        let w = hz_to_rad(f);
        let r = analytic::responsivity(&sql, w).norm_sqr() / analytic::responsivity(&sql, 0.0).norm_sqr();
        t.push(vec![
            f,
            analytic::signal_noise_spectrum(&sql, w),
            analytic::signal_noise_spectrum(&sq, w),
            analytic::sensitivity(&sql, w)?,
            analytic::sensitivity(&sq, w)?,
            r,
            analytic::squeezed_ratio(&sq, w),
            analytic::squeezed_ratio_printed(&sq, w),
        ]);
    }
    rep.tables.insert("analytic".into(), t);
    Ok(rep)
}

fn run(cli: Cli) -> Result<()> {
    let (common, rep) = match &cli.command {
        Command::Simulate(c) => {
            let cfg = load(c)?;
            (c, simulate(&cfg, &c.out)?)
        }
        Command::Calibrate(c) => (c, calibrate(&load(c)?)?),
        Command::Respond(c) => (c, respond(&load(c)?)?),
        Command::Sensitivity(c) => (c, sensitivity(&load(c)?)?),
        Command::Abtest(c) => (c, abtest(&load(c)?)?),
        Command::Analytic(c) => (c, analytic_curves(&load(c)?)?),
    };
    rep.write_dir(&common.out)?;
    for (k, q) in &rep.quantities {
        println!("{k:<28} {:>14.6e} +- {:.2e}", q.value, q.stderr);
    }
    for n in &rep.notes {
        println!("note: {n}");
    }
    println!("wrote {}", common.out.join("report.json").display());
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
