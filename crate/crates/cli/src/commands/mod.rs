pub mod analytic;
pub mod qubit;
pub mod sweep;
pub mod verify;

use qwork::linalg::{from_dmatrix, Mat2};
use qwork::numeric::{run_state, work_distribution_numeric, MomentumGrid, SolverOptions};
use qwork::oracle::{two_point_distribution_qubit, DiscreteWorkDistribution};
use qwork::thermo::{build_ledger, IntervalConvention, LedgerInputs, QubitFreeTrajectory, ReducedTrajectory, SampledTrajectory, SpectralTrajectory, WorkHeatLedger};
use qwork::{ApparatusSpec, DrivenQubit, ProtocolSchedule, SystemState, WorkDistribution};
use serde_json::{json, Value};

use crate::config::{EngineKind, ExperimentConfig};
use crate::error::{engine, CliError};
use crate::output::num;

/// Parameters shared by every subcommand, validated once.
pub struct Setup {
    pub cfg: ExperimentConfig,
    pub schedule: ProtocolSchedule,
    pub apparatus: ApparatusSpec,
    pub solver: SolverOptions,
    pub momentum: MomentumGrid,
}

impl Setup {
    pub fn new(cfg: ExperimentConfig) -> Result<Self, CliError> {
        cfg.validate()?;
        let apparatus = cfg.apparatus()?;
        Ok(Self {
            schedule: cfg.schedule()?,
            solver: cfg.solver()?,
            momentum: cfg.momentum_grid(&apparatus)?,
            apparatus,
            cfg,
        })
    }

    /// Derived quantities recorded in the metadata.
    pub fn resolved(&self) -> Value {
        let (s, a, g) = (&self.schedule, &self.apparatus, &self.momentum);
        json!({
            "mass": a.mass(),
            "sigma_x": a.sigma_x(),
            "width_at_t_m": a.sigma_width(s.t_m(), s.t_p()),
            "momentum_grid": { "points": g.points(), "p_max": g.p_max(), "spacing": g.spacing() },
            "solver": self.solver,
        })
    }

    pub fn width(&self) -> f64 {
        self.apparatus.sigma_width(self.schedule.t_m(), self.schedule.t_p())
    }
}

pub fn describe_state(cfg: &ExperimentConfig) -> String {
    match &cfg.state.populations {
        Some(p) => format!("mixture {}", p.iter().map(|x| num(*x)).collect::<Vec<_>>().join(" ")),
        None => {
            let [ar, ai] = cfg.state.alpha;
            let [br, bi] = cfg.state.beta;
            format!("pure alpha = {} + {}i, beta = {} + {}i", num(ar), num(ai), num(br), num(bi))
        }
    }
}

/// One driven-qubit evaluation: distribution at `t_m`, ledger and the
/// two-point reference.
pub struct QubitRun {
    pub theta: f64,
    pub dist: WorkDistribution,
    pub ledger: WorkHeatLedger,
    pub norm_drift: f64,
    pub tmp: DiscreteWorkDistribution,
}

impl QubitRun {
    pub fn diagnostics(&self) -> Value {
        json!({
            "theta": self.theta,
            "mass": self.dist.mass(),
            "mean_work": self.dist.mean(),
            "norm_drift": self.norm_drift,
            "two_point_atoms": self.tmp.merged(1e-9).atoms(),
        })
    }
}

pub fn run_qubit(setup: &Setup, theta: f64, convention: IntervalConvention) -> Result<QubitRun, CliError> {
    let cfg = &setup.cfg;
    let (s, a) = (&setup.schedule, &setup.apparatus);
    let q = cfg.qubit(theta)?;
    let state = cfg.qubit_state()?;
    let ctx = format!("theta = {theta}");
    let rho_full = state.density_matrix();
    let rho: Mat2 = from_dmatrix(&rho_full);
    let tmp = two_point_distribution_qubit(&q, &rho, s).map_err(engine(&ctx))?;
    let mut centers: Vec<f64> = Vec::new();
    for ef in q.energies(s.t_f()) {
        for ei in q.energies(s.t_i()) {
            centers.push(ef - ei);
        }
    }
    let grid = cfg.work_grid(&centers, setup.width())?;

    let (dist, measured, norm_drift): (WorkDistribution, Box<dyn ReducedTrajectory>, f64) = match cfg.engine.kind {
        EngineKind::Numeric => numeric(&q, &state, setup, &grid).map_err(engine(&ctx))?,
        EngineKind::Analytic => {
            let sys = q
                .aligned_spectrum()
                .ok_or_else(|| CliError::Config(format!("[engine] kind = analytic needs sin(theta) = 0, got theta = {theta}")))?;
            let diag: Vec<f64> = (0..2).map(|k| rho_full[(k, k)].re).collect();
            let dist = qwork::analytic::work_distribution(&sys, &diag, s, a, s.t_m(), &grid).map_err(engine(&ctx))?;
            let traj = SpectralTrajectory::measured(sys, rho_full.clone(), s.t_i(), *s, *a).map_err(engine(&ctx))?;
            (dist, Box::new(traj), 0.0)
        }
    };
    let free = QubitFreeTrajectory::new(q.clone(), rho, s.t_i()).map_err(engine(&ctx))?;
    let ledger = build_ledger(&LedgerInputs {
        hamiltonian: &q,
        free: &free,
        measured: measured.as_ref(),
        w_dist: dist.mean(),
        schedule: *s,
        convention,
    })
    .map_err(engine(&ctx))?;
    Ok(QubitRun { theta, dist, ledger, norm_drift, tmp })
}

type NumericOutcome = (WorkDistribution, Box<dyn ReducedTrajectory>, f64);

fn numeric(q: &DrivenQubit, state: &SystemState, setup: &Setup, grid: &qwork::WorkGrid) -> qwork::Result<NumericOutcome> {
    let (s, a) = (&setup.schedule, &setup.apparatus);
    let runs = run_state(q, state, s, a, &setup.momentum, s.t_m(), &setup.solver)?;
    let mut dists = Vec::with_capacity(runs.len());
    let mut trajs = Vec::with_capacity(runs.len());
    let mut drift = 0.0f64;
    for (_, traj) in &runs {
        dists.push(work_distribution_numeric(traj.final_field(), a, grid)?);
        trajs.push(SampledTrajectory::from_numeric(traj)?);
        drift = drift.max(traj.norm_drift());
    }
    if runs.len() == 1 {
        let dist = dists.pop().unwrap_or_else(|| unreachable!());
        let traj = trajs.pop().unwrap_or_else(|| unreachable!());
        return Ok((dist, Box::new(traj), drift));
    }
    let weights: Vec<f64> = runs.iter().map(|(w, _)| *w).collect();
    let parts: Vec<(f64, &WorkDistribution)> = weights.iter().copied().zip(&dists).collect();
    let dist = WorkDistribution::convex_combination(&parts)?;
    let parts: Vec<(f64, &SampledTrajectory)> = weights.iter().copied().zip(&trajs).collect();
    let traj = SampledTrajectory::mixture(&parts)?;
    Ok((dist, Box::new(traj), drift))
}

pub fn ledger_columns() -> [&'static str; 12] {
    ["theta", "convention", "w_free", "w_tilde", "w_dist", "du", "du_tilde", "q", "q_tilde", "dW_int", "dW_povm", "dQ_int"]
}

pub fn ledger_row(label: String, l: &WorkHeatLedger) -> Vec<String> {
    let conv = serde_json::to_value(l.convention).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default();
    let mut row = vec![label, conv];
    row.extend([l.w_free, l.w_tilde, l.w_dist, l.du, l.du_tilde, l.q, l.q_tilde, l.dw_int, l.dw_povm, l.dq_int].map(num));
    row
}

/// `qubit_theta_<theta to 4 places>.csv`; refuses thetas that would share a name.
pub fn theta_files(thetas: &[f64], prefix: &str) -> Result<Vec<String>, CliError> {
    let names: Vec<String> = thetas.iter().map(|t| format!("{prefix}_theta_{t:.4}.csv")).collect();
    for (k, n) in names.iter().enumerate() {
        if names[..k].contains(n) {
            return Err(CliError::Config(format!("[system] thetas {} give the same file name {n}", thetas[k])));
        }
    }
    Ok(names)
}
