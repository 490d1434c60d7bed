//! Experiment configuration. Every field has a default matching the driven
//! qubit figures, so an empty file is a valid config.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, FRAC_PI_8};
use std::path::{Path, PathBuf};

use qwork::numeric::{ket, MomentumGrid, SolverOptions};
use qwork::oracle::{IdealLimitLadder, LadderRung};
use qwork::thermo::IntervalConvention;
use qwork::{ApparatusSpec, DrivenQubit, ProtocolSchedule, SpectralSystem, SystemState, WorkGrid};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: SystemConfig,
    pub schedule: ScheduleConfig,
    pub apparatus: ApparatusConfig,
    pub state: StateConfig,
    pub engine: EngineConfig,
    pub grid: GridConfig,
    pub thermal: ThermalConfig,
    pub sweep: SweepConfig,
    pub output: OutputConfig,
}

/// The driven qubit (`kappa`, `omega`, `thetas`) and the self-commuting
/// system used by `analytic` (`levels`: polynomial coefficients in `t`, one
/// list per level, lowest order first).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemConfig {
    pub kappa: f64,
    pub omega: f64,
    pub thetas: Vec<f64>,
    pub levels: Vec<Vec<f64>>,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            kappa: 1.0,
            omega: 1.0,
            thetas: vec![0.0, FRAC_PI_8, FRAC_PI_4, 3.0 * FRAC_PI_8, FRAC_PI_2],
            levels: vec![vec![0.0, 1.0], vec![0.0, -1.0]],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleConfig {
    pub t_p: f64,
    pub t_i: f64,
    pub t_f: f64,
    pub t_m: f64,
    pub delta: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self { t_p: 0.0, t_i: 2.0, t_f: 3.0, t_m: 4.0, delta: 0.2 }
    }
}

/// `mass_ratio` is `kappa m / sigma_p^2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ApparatusConfig {
    pub mass_ratio: f64,
    pub sigma_p: f64,
    pub lambda: f64,
}

impl Default for ApparatusConfig {
    fn default() -> Self {
        Self { mass_ratio: 1000.0, sigma_p: 2.0, lambda: 1.0 }
    }
}

/// Target state at `t_i`: `alpha |0> + beta |1>` as `[re, im]` pairs, or a
/// diagonal mixture when `populations` is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StateConfig {
    pub alpha: [f64; 2],
    pub beta: [f64; 2],
    #[serde(skip_serializing_if = "Option::is_none")]
    pub populations: Option<Vec<f64>>,
}

impl Default for StateConfig {
    fn default() -> Self {
        let h = 0.5f64.sqrt();
        Self { alpha: [h, 0.0], beta: [h, 0.0], populations: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EngineKind {
    Numeric,
    /// Closed forms; only for a qubit whose field stays along z.
    Analytic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    pub kind: EngineKind,
    pub rtol: f64,
    pub atol: f64,
    pub drift_limit: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
}

impl Default for EngineConfig {
    fn default() -> Self {
        let d = SolverOptions::default();
        Self { kind: EngineKind::Numeric, rtol: d.rtol, atol: d.atol, drift_limit: d.drift_limit, threads: None }
    }
}

/// Momentum grid half-width is `momentum_extent * sigma_p`. The work grid
/// spans the peak centers padded by `work_pad` widths unless both
/// `work_min` and `work_max` are given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub momentum_points: usize,
    pub momentum_extent: f64,
    pub work_points: usize,
    pub work_pad: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub work_min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub work_max: Option<f64>,
    /// Largest tolerated `|mass - 1|` of an emitted distribution.
    pub mass_tolerance: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            momentum_points: MomentumGrid::DEFAULT_POINTS,
            momentum_extent: MomentumGrid::DEFAULT_EXTENT,
            work_points: WorkGrid::DEFAULT_POINTS,
            work_pad: qwork::analytic::GRID_PAD,
            work_min: None,
            work_max: None,
            mass_tolerance: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThermalConfig {
    pub betas: Vec<f64>,
    /// Readout time of the Crooks ratio; `t_m` when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub crooks_time: Option<f64>,
    pub crooks_points: usize,
}

impl Default for ThermalConfig {
    fn default() -> Self {
        Self { betas: vec![0.1, 1.0, 5.0], crooks_time: None, crooks_points: 21 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub thetas: Vec<f64>,
    pub convention: IntervalConvention,
    pub ladder: Vec<LadderRung>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            thetas: (0..=8).map(|k| k as f64 * FRAC_PI_2 / 8.0).collect(),
            convention: IntervalConvention::Mixed,
            ladder: IdealLimitLadder::standard().rungs().to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: PathBuf::from("qwork-out") }
    }
}

/// Reads a TOML config, or the `config` entry of a run's JSON metadata,
/// then applies `key=value` overrides.
pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<ExperimentConfig, CliError> {
    let mut table = match path {
        None => toml::Table::new(),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
            if p.extension().is_some_and(|e| e == "json") {
                from_metadata(&text, p)?
            } else {
                text.parse::<toml::Table>().map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
            }
        }
    };
    for item in overrides {
        apply_override(&mut table, item)?;
    }
    toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| CliError::Config(e.message().to_string()))
}

fn from_metadata(text: &str, path: &Path) -> Result<toml::Table, CliError> {
    let bad = |why: String| CliError::Config(format!("{}: {why}", path.display()));
    let meta: serde_json::Value = serde_json::from_str(text).map_err(|e| bad(e.to_string()))?;
    let config = meta.get("config").ok_or_else(|| bad("no `config` entry".into()))?;
    toml::Table::try_from(config).map_err(|e| bad(e.to_string()))
}

/// `a.b.c=value`; the value is read as a TOML literal, falling back to a
/// bare string.
pub fn apply_override(table: &mut toml::Table, item: &str) -> Result<(), CliError> {
    let (key, raw) = item
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override `{item}` is not of the form key=value")))?;
    let key = key.trim();
    let value = format!("v = {}", raw.trim())
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.trim().to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Config(format!("override key `{key}` is malformed")));
    }
    let mut node = table;
    for part in &parts[..parts.len() - 1] {
        let entry = node.entry(part.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("override key `{key}`: `{part}` is not a table")))?;
    }
    node.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

fn field(section: &'static str) -> impl Fn(qwork::Error) -> CliError {
    move |e| CliError::Config(format!("[{section}] {e}"))
}

impl ExperimentConfig {
    pub fn schedule(&self) -> Result<ProtocolSchedule, CliError> {
        let s = &self.schedule;
        ProtocolSchedule::new(s.t_p, s.t_i, s.t_f, s.t_m, s.delta).map_err(field("schedule"))
    }

    pub fn apparatus(&self) -> Result<ApparatusSpec, CliError> {
        let a = &self.apparatus;
        ApparatusSpec::from_mass_ratio(a.mass_ratio, a.sigma_p, a.lambda, self.system.kappa).map_err(field("apparatus"))
    }

    pub fn qubit(&self, theta: f64) -> Result<DrivenQubit, CliError> {
        DrivenQubit::new(self.system.kappa, self.system.omega, theta).map_err(field("system"))
    }

    pub fn spectral(&self) -> Result<SpectralSystem, CliError> {
        SpectralSystem::polynomial(self.system.levels.clone()).map_err(field("system"))
    }

    pub fn qubit_state(&self) -> Result<SystemState, CliError> {
        match &self.state.populations {
            Some(p) => {
                if p.len() != 2 {
                    return Err(CliError::Config(format!("[state] a qubit needs 2 populations, got {}", p.len())));
                }
                SystemState::diagonal(p).map_err(field("state"))
            }
            None => {
                let [ar, ai] = self.state.alpha;
                let [br, bi] = self.state.beta;
                let v = ket(qwork::linalg::c(ar, ai), qwork::linalg::c(br, bi));
                SystemState::qubit(v[0], v[1]).map_err(field("state"))
            }
        }
    }

    /// Level populations for the self-commuting system.
    pub fn populations(&self, dim: usize) -> Result<Vec<f64>, CliError> {
        let p = match &self.state.populations {
            Some(p) => p.clone(),
            None if dim == 2 => {
                let [ar, ai] = self.state.alpha;
                let [br, bi] = self.state.beta;
                vec![ar * ar + ai * ai, br * br + bi * bi]
            }
            None => return Err(CliError::Config(format!("[state] populations are required for a {dim}-level system"))),
        };
        if p.len() != dim {
            return Err(CliError::Config(format!("[state] {} populations for a {dim}-level system", p.len())));
        }
        qwork::state::check_probabilities(&p).map_err(field("state"))?;
        Ok(p)
    }

    pub fn solver(&self) -> Result<SolverOptions, CliError> {
        let e = &self.engine;
        if !(e.drift_limit > 0.0) {
            return Err(CliError::Config(format!("[engine] drift_limit must be positive, got {}", e.drift_limit)));
        }
        if !(e.rtol > 0.0 && e.atol > 0.0) {
            return Err(CliError::Config(format!("[engine] rtol {} and atol {} must be positive", e.rtol, e.atol)));
        }
        if e.threads == Some(0) {
            return Err(CliError::Config("[engine] threads must be at least 1".into()));
        }
        Ok(SolverOptions { rtol: e.rtol, atol: e.atol, sample_step: None, threads: e.threads, drift_limit: e.drift_limit })
    }

    pub fn momentum_grid(&self, a: &ApparatusSpec) -> Result<MomentumGrid, CliError> {
        let g = &self.grid;
        let grid = MomentumGrid::new(g.momentum_points, g.momentum_extent * a.sigma_p()).map_err(field("grid"))?;
        grid.check(a).map_err(field("grid"))?;
        Ok(grid)
    }

    /// Work grid for peaks at `centers` with width `width`.
    pub fn work_grid(&self, centers: &[f64], width: f64) -> Result<WorkGrid, CliError> {
        let g = &self.grid;
        match (g.work_min, g.work_max) {
            (Some(lo), Some(hi)) => WorkGrid::new(lo, hi, g.work_points).map_err(field("grid")),
            (None, None) => WorkGrid::covering(centers, width, g.work_pad, g.work_points).map_err(field("grid")),
            _ => Err(CliError::Config("[grid] work_min and work_max must be given together".into())),
        }
    }

    pub fn ladder(&self) -> Result<IdealLimitLadder, CliError> {
        IdealLimitLadder::new(self.sweep.ladder.clone()).map_err(field("sweep"))
    }

    /// Checks everything that does not depend on the subcommand.
    pub fn validate(&self) -> Result<(), CliError> {
        self.schedule()?;
        let a = self.apparatus()?;
        self.solver()?;
        self.momentum_grid(&a)?;
        for theta in self.system.thetas.iter().chain(&self.sweep.thetas) {
            self.qubit(*theta)?;
        }
        if self.grid.work_points < 5 {
            return Err(CliError::Config(format!("[grid] work_points must be at least 5, got {}", self.grid.work_points)));
        }
        if !(self.grid.mass_tolerance > 0.0) {
            return Err(CliError::Config(format!("[grid] mass_tolerance must be positive, got {}", self.grid.mass_tolerance)));
        }
        if let Some(b) = self.thermal.betas.iter().find(|b| !(**b >= 0.0 && b.is_finite())) {
            return Err(CliError::Config(format!("[thermal] betas must be finite and non-negative, got {b}")));
        }
        if self.thermal.crooks_points < 2 {
            return Err(CliError::Config(format!("[thermal] crooks_points must be at least 2, got {}", self.thermal.crooks_points)));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_gives_figure_defaults() {
        let cfg = load(None, &[]).unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        let a = cfg.apparatus().unwrap();
        assert_eq!(a.mass(), 4000.0);
        assert_eq!(cfg.schedule().unwrap(), ProtocolSchedule::figure_default());
        cfg.validate().unwrap();
    }

    #[test]
    fn overrides_create_tables_and_parse_literals() {
        let cfg = load(None, &["schedule.delta=0.1".into(), "engine.kind=analytic".into(), "system.thetas=[0, 1]".into()]).unwrap();
        assert_eq!(cfg.schedule.delta, 0.1);
        assert_eq!(cfg.engine.kind, EngineKind::Analytic);
        assert_eq!(cfg.system.thetas, vec![0.0, 1.0]);
    }

    #[test]
    fn unknown_fields_and_bad_values_are_config_errors() {
        assert!(matches!(load(None, &["schedule.dleta=0.1".into()]), Err(CliError::Config(_))));
        assert!(matches!(load(None, &["nokey".into()]), Err(CliError::Config(_))));
        let cfg = load(None, &["schedule.t_i=5".into()]).unwrap();
        let msg = cfg.validate().unwrap_err().to_string();
        assert!(msg.contains("[schedule]"), "{msg}");
    }

    #[test]
    fn metadata_config_round_trips() {
        let mut cfg = ExperimentConfig::default();
        cfg.schedule.delta = 0.1 + 0.2;
        cfg.state.populations = Some(vec![0.3, 0.7]);
        let meta = serde_json::json!({ "config": cfg });
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        std::fs::write(&path, serde_json::to_string(&meta).unwrap()).unwrap();
        assert_eq!(load(Some(&path), &[]).unwrap(), cfg);
    }

    #[test]
    fn shipped_configs_load() {
        let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
        let mut figures = load(Some(&dir.join("figures.toml")), &[]).unwrap();
        figures.output = OutputConfig::default();
        assert_eq!(figures, ExperimentConfig::default());
        let thermal = load(Some(&dir.join("thermal.toml")), &[]).unwrap();
        thermal.validate().unwrap();
        assert_eq!(thermal.populations(3).unwrap(), vec![0.5, 0.3, 0.2]);
    }

    #[test]
    fn populations_default_from_amplitudes() {
        let cfg = ExperimentConfig::default();
        let p = cfg.populations(2).unwrap();
        assert!((p[0] - 0.5).abs() < 1e-15 && (p[1] - 0.5).abs() < 1e-15);
        assert!(cfg.populations(3).is_err());
    }
}
