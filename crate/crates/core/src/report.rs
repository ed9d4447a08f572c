//! Experiment reports and their on-disk forms.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use crate::config::RunConfig;
use crate::error::Result;
use crate::model::Spectrum;

/// A derived number and its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quantity {
    pub value: f64,
    pub stderr: f64,
}

impl Quantity {
    pub fn new(value: f64, stderr: f64) -> Self {
        Self { value, stderr }
    }

    /// An exact value.
    pub fn exact(value: f64) -> Self {
        Self { value, stderr: 0.0 }
    }

    /// |value − target| in units of the standard error.
    pub fn pull(&self, target: f64) -> f64 {
        (self.value - target) / self.stderr
    }
}

/// Plot-ready columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{}", self.columns.join(","))?;
        for r in &self.rows {
            let line: Vec<String> = r.iter().map(|v| format!("{v:e}")).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    }
}

/// A spectrum with a name and the unit of its density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedSpectrum {
    pub name: String,
    pub units: String,
    pub spectrum: Spectrum,
}

pub fn write_spectrum_csv<W: Write>(mut w: W, s: &NamedSpectrum) -> Result<()> {
    let sp = &s.spectrum;
    writeln!(w, "# name: {}", s.name)?;
    writeln!(w, "# units: {}", s.units)?;
    writeln!(w, "# window: {}", sp.window)?;
    writeln!(w, "# n_averages: {}", sp.n_averages)?;
    writeln!(w, "# record_seconds: {:e}", sp.record_seconds)?;
    writeln!(w, "# df_hz: {:e}", sp.df())?;
    writeln!(w, "freq_hz,psd,psd_stderr")?;
    for i in 0..sp.freqs.len() {
        writeln!(w, "{:e},{:e},{:e}", sp.freqs[i], sp.psd[i], sp.psd_stderr[i])?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub package: String,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub scenario: String,
    pub inputs: RunConfig,
    pub quantities: BTreeMap<String, Quantity>,
    /// Spectra are written next to the report; only their names are kept here.
    #[serde(skip)]
    pub spectra: Vec<NamedSpectrum>,
    #[serde(skip)]
    pub tables: BTreeMap<String, Table>,
    pub notes: Vec<String>,
    pub provenance: Provenance,
}

impl ExperimentReport {
    pub fn new(scenario: &str, inputs: &RunConfig) -> Self {
        Self {
            scenario: scenario.into(),
            inputs: inputs.clone(),
            quantities: BTreeMap::new(),
            spectra: Vec::new(),
            tables: BTreeMap::new(),
            notes: Vec::new(),
            provenance: Provenance {
                seed: inputs.seed,
                package: env!("CARGO_PKG_NAME").into(),
                version: env!("CARGO_PKG_VERSION").into(),
            },
        }
    }

    pub fn set(&mut self, name: &str, q: Quantity) {
        self.quantities.insert(name.into(), q);
    }

    pub fn get(&self, name: &str) -> Option<Quantity> {
        self.quantities.get(name).copied()
    }

    pub fn to_json(&self) -> Result<String> {
        let mut v = serde_json::to_value(self).map_err(|e| crate::Error::Io(e.to_string()))?;
        let files: Vec<String> = self
            .spectra
            .iter()
            .map(|s| format!("spectrum_{}.csv", s.name))
            .chain(self.tables.keys().map(|k| format!("{k}.csv")))
            .collect();
        v["files"] = serde_json::json!(files);
        serde_json::to_string_pretty(&v).map_err(|e| crate::Error::Io(e.to_string()))
    }

    /// report.json plus one CSV per spectrum and per table.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("report.json"), self.to_json()? + "\n")?;
        for s in &self.spectra {
            let f = std::fs::File::create(dir.join(format!("spectrum_{}.csv", s.name)))?;
            write_spectrum_csv(std::io::BufWriter::new(f), s)?;
        }
        for (name, t) in &self.tables {
            let f = std::fs::File::create(dir.join(format!("{name}.csv")))?;
            t.write_csv(std::io::BufWriter::new(f))?;
        }
        Ok(())
    }
}
