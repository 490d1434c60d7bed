//! CSV and JSON artifacts. Files are written to a temporary name in the
//! output directory and renamed into place.

use std::io::Write;
use std::path::{Path, PathBuf};

use qwork::WorkDistribution;
use serde::Serialize;
use serde_json::Value;

use crate::config::ExperimentConfig;
use crate::error::CliError;

pub const UNITS: &str = "hbar = kappa = 1; W in units of kappa, t in units of 1/kappa";

/// Shortest round-trip text for a float; exponent form outside `[1e-4, 1e15)`.
pub fn num(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || (1e-4..1e15).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

/// The `# key = value` block at the top of every CSV.
#[derive(Debug, Clone)]
pub struct Header {
    entries: Vec<(String, String)>,
}

impl Header {
    pub fn new(command: &str, cfg: &ExperimentConfig) -> Self {
        let s = &cfg.schedule;
        let a = &cfg.apparatus;
        let mut h = Self { entries: Vec::new() };
        h.push("tool", format!("qwork {}", env!("CARGO_PKG_VERSION")));
        h.push("command", command);
        h.push("units", UNITS);
        h.push("kappa", num(cfg.system.kappa));
        h.push("t_p", num(s.t_p));
        h.push("t_i", num(s.t_i));
        h.push("t_f", num(s.t_f));
        h.push("t_m", num(s.t_m));
        h.push("delta", num(s.delta));
        h.push("sigma_p", num(a.sigma_p));
        h.push("mass_ratio", num(a.mass_ratio));
        h.push("lambda", num(a.lambda));
        h
    }

    pub fn push(&mut self, key: &str, value: impl Into<String>) {
        self.entries.push((key.to_string(), value.into()));
    }

    pub fn with(mut self, key: &str, value: impl Into<String>) -> Self {
        self.push(key, value);
        self
    }

    fn render(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("# {k} = {v}\n")).collect()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct OutputRecord {
    pub file: String,
    pub kind: String,
    pub rows: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mass: Option<f64>,
}

#[derive(Serialize)]
struct RunMetadata<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    units: &'static str,
    config: &'a ExperimentConfig,
    resolved: &'a Value,
    outputs: &'a [OutputRecord],
    diagnostics: &'a Value,
}

/// Collects the files of one run.
pub struct Artifacts {
    dir: PathBuf,
    mass_tolerance: f64,
    records: Vec<OutputRecord>,
}

impl Artifacts {
    pub fn new(dir: &Path, mass_tolerance: f64) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Io { context: format!("creating {}", dir.display()), source: e })?;
        Ok(Self { dir: dir.to_path_buf(), mass_tolerance, records: Vec::new() })
    }

    /// Checks normalization and non-negativity, then writes
    /// `W_over_kappa,density`.
    pub fn distribution(&mut self, file: &str, header: &Header, d: &WorkDistribution) -> Result<(), CliError> {
        if let Some((k, p)) = d.density.iter().enumerate().find(|(_, p)| !(**p >= 0.0 && p.is_finite())) {
            return Err(CliError::Numerical(format!("{file}: density at W = {} is {p}", d.work[k])));
        }
        let mass = d.mass();
        if !((mass - 1.0).abs() <= self.mass_tolerance) {
            return Err(CliError::Numerical(format!(
                "{file}: distribution mass {mass} is outside 1 +/- {}; widen the work grid",
                self.mass_tolerance
            )));
        }
        let header = header.clone().with("time", num(d.time)).with("engine", format!("{:?}", d.engine).to_lowercase());
        let rows: Vec<Vec<String>> = d.work.iter().zip(&d.density).map(|(w, p)| vec![num(*w), num(*p)]).collect();
        self.write_csv(file, "distribution", &header, &["W_over_kappa", "density"], &rows, Some(mass))
    }

    pub fn table(&mut self, file: &str, kind: &str, header: &Header, columns: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
        self.write_csv(file, kind, header, columns, rows, None)
    }

    fn write_csv(
        &mut self,
        file: &str,
        kind: &str,
        header: &Header,
        columns: &[&str],
        rows: &[Vec<String>],
        mass: Option<f64>,
    ) -> Result<(), CliError> {
        let mut buf = header.render().into_bytes();
        {
            let mut w = csv::Writer::from_writer(&mut buf);
            let io = |e: csv::Error| CliError::Io { context: format!("formatting {file}"), source: e.into() };
            w.write_record(columns).map_err(io)?;
            for row in rows {
                w.write_record(row).map_err(io)?;
            }
            w.flush().map_err(|e| CliError::Io { context: format!("formatting {file}"), source: e })?;
        }
        self.write_file(file, &buf)?;
        self.records.push(OutputRecord { file: file.to_string(), kind: kind.to_string(), rows: rows.len(), mass });
        Ok(())
    }

    fn write_file(&self, file: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.dir.join(file);
        let io = |e: std::io::Error| CliError::Io { context: format!("writing {}", path.display()), source: e };
        let mut tmp = tempfile::NamedTempFile::new_in(&self.dir).map_err(io)?;
        tmp.write_all(bytes).map_err(io)?;
        tmp.as_file().sync_all().map_err(io)?;
        tmp.persist(&path).map_err(|e| io(e.error))?;
        Ok(())
    }

    /// Writes `<command>.json` next to the CSVs.
    pub fn finish(self, command: &str, cfg: &ExperimentConfig, resolved: &Value, diagnostics: &Value) -> Result<PathBuf, CliError> {
        let meta = RunMetadata {
            tool: "qwork",
            version: env!("CARGO_PKG_VERSION"),
            command,
            units: UNITS,
            config: cfg,
            resolved,
            outputs: &self.records,
            diagnostics,
        };
        let mut bytes = serde_json::to_vec_pretty(&meta).map_err(|e| CliError::Io { context: "serializing metadata".into(), source: e.into() })?;
        bytes.push(b'\n');
        let file = format!("{command}.json");
        self.write_file(&file, &bytes)?;
        Ok(self.dir.join(file))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use qwork::Engine;

    #[test]
    fn numbers_round_trip() {
        for x in [0.0, 1.0, -2.5, 0.1 + 0.2, 1e-300, 3.2e-7, 12345.678, 1e20, f64::MIN_POSITIVE] {
            assert_eq!(num(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(num(0.5), "0.5");
        assert_eq!(num(1e-7), "1e-7");
    }

    #[test]
    fn unnormalized_distributions_are_refused() {
        let dir = tempfile::tempdir().unwrap();
        let mut out = Artifacts::new(dir.path(), 1e-4).unwrap();
        let d = WorkDistribution::new(vec![0.0, 1.0, 2.0], vec![1.0, 1.0, 1.0], 4.0, Engine::Analytic).unwrap();
        let header = Header::new("test", &ExperimentConfig::default());
        assert!(matches!(out.distribution("d.csv", &header, &d), Err(CliError::Numerical(_))));
        assert!(!dir.path().join("d.csv").exists());

        let d = WorkDistribution::new(vec![0.0, 1.0, 2.0], vec![0.0, 1.0, 0.0], 4.0, Engine::Analytic).unwrap();
        out.distribution("d.csv", &header, &d).unwrap();
        let text = std::fs::read_to_string(dir.path().join("d.csv")).unwrap();
        assert!(text.starts_with("# tool = qwork"));
        assert!(text.contains("# time = 4\n# engine = analytic\nW_over_kappa,density\n0,0\n1,1\n2,0\n"), "{text}");
    }
}
