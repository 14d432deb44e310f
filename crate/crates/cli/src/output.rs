//! Result serialization: a metrics table (JSON), CSV curves and matrices,
//! and a provenance block. Writing is deterministic: ordered vectors only.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;

#[derive(Debug, Serialize)]
pub struct Metric {
    pub name: String,
    pub value: f64,
    /// The operation that produced the value.
    pub operation: String,
}

pub struct Curve {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

pub struct NamedMatrix {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
    /// Sidecar metadata serialized next to the CSV.
    pub meta: serde_json::Value,
}

#[derive(Default)]
pub struct ResultBundle {
    pub scenario: String,
    pub command: String,
    pub metrics: Vec<Metric>,
    pub curves: Vec<Curve>,
    pub matrices: Vec<NamedMatrix>,
}

impl ResultBundle {
    pub fn new(scenario: &str, command: &str) -> Self {
        ResultBundle {
            scenario: scenario.to_string(),
            command: command.to_string(),
            ..Default::default()
        }
    }

    pub fn metric(&mut self, name: impl Into<String>, value: f64, operation: &str) {
        self.metrics.push(Metric {
            name: name.into(),
            value,
            operation: operation.into(),
        });
    }

    pub fn write(&self, dir: &Path) -> anyhow::Result<()> {
        fs::create_dir_all(dir)
            .with_context(|| format!("cannot create output dir {}", dir.display()))?;
        #[derive(Serialize)]
        struct MetricsFile<'a> {
            scenario: &'a str,
            command: &'a str,
            metrics: &'a [Metric],
        }
        let mf = MetricsFile {
            scenario: &self.scenario,
            command: &self.command,
            metrics: &self.metrics,
        };
        fs::write(
            dir.join("metrics.json"),
            serde_json::to_string_pretty(&mf)? + "\n",
        )?;

        for curve in &self.curves {
            let mut out = String::new();
            out.push_str(&curve.header.join(","));
            out.push('\n');
            for row in &curve.rows {
                let cells: Vec<String> = row.iter().map(|v| format!("{v:.17e}")).collect();
                out.push_str(&cells.join(","));
                out.push('\n');
            }
            fs::write(dir.join(format!("{}.csv", curve.name)), out)?;
        }
        for m in &self.matrices {
            let mut out = String::new();
            for r in 0..m.rows {
                let cells: Vec<String> = (0..m.cols)
                    .map(|c| format!("{:.17e}", m.data[r * m.cols + c]))
                    .collect();
                out.push_str(&cells.join(","));
                out.push('\n');
            }
            fs::write(dir.join(format!("{}.csv", m.name)), out)?;
            fs::write(
                dir.join(format!("{}.json", m.name)),
                serde_json::to_string_pretty(&m.meta)? + "\n",
            )?;
        }
        Ok(())
    }
}

#[derive(Serialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
    pub command: String,
    pub scenario: String,
    pub package_version: String,
    pub threads: usize,
}

pub fn write_provenance(dir: &Path, p: &Provenance) -> anyhow::Result<()> {
    fs::create_dir_all(dir)?;
    let mut f = fs::File::create(dir.join("provenance.json"))?;
    writeln!(f, "{}", serde_json::to_string_pretty(p)?)?;
    Ok(())
}

pub fn default_out_dir(scenario: &str, command: &str) -> PathBuf {
    PathBuf::from(format!("out-{scenario}-{command}"))
}
