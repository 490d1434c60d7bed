//! `qwork verify`: the oracle checks on the configured parameters.

use std::path::PathBuf;

use qwork::analytic::{self, CrooksPair, ThermalSpec};
use qwork::linalg::Mat2;
use qwork::numeric::{run_state, work_distribution_numeric};
use qwork::oracle::{povm_effects_qubit, time_reversed, transition_matrix_qubit};
use qwork::thermo::{build_ledger, IntervalConvention, LedgerInputs, SpectralTrajectory};
use qwork::{WorkDistribution, WorkGrid};
use serde::Serialize;
use serde_json::json;

use super::analytic::{crooks_points, jarzynski_quadrature};
use super::Setup;
use crate::error::CliError;
use crate::output::{Artifacts, Header};

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    /// `None` when the check does not apply to this config.
    pub passed: Option<bool>,
    pub detail: String,
}

type Outcome = Result<(Option<bool>, String), CliError>;

fn numerical(context: &'static str) -> impl Fn(qwork::Error) -> CliError {
    move |e| CliError::Numerical(format!("{context}: {e}"))
}

fn cross_engine(setup: &Setup) -> Outcome {
    let cfg = &setup.cfg;
    let (s, a) = (&setup.schedule, &setup.apparatus);
    let q = cfg.qubit(0.0)?;
    let state = cfg.qubit_state()?;
    let rho = state.density_matrix();
    let sys = q.aligned_spectrum().ok_or_else(|| CliError::Numerical("theta = 0 qubit is not self-commuting".into()))?;
    let diag: Vec<f64> = (0..2).map(|k| rho[(k, k)].re).collect();
    let centers = analytic::work_centers(&sys, s).map_err(numerical("centers"))?;
    let work = cfg.work_grid(&centers, setup.width())?;
    let runs = run_state(&q, &state, s, a, &setup.momentum, s.t_m(), &setup.solver).map_err(numerical("numeric run"))?;
    let dists: Vec<WorkDistribution> = runs
        .iter()
        .map(|(_, t)| work_distribution_numeric(t.final_field(), a, &work))
        .collect::<qwork::Result<_>>()
        .map_err(numerical("numeric distribution"))?;
    let parts: Vec<(f64, &WorkDistribution)> = runs.iter().map(|(w, _)| *w).zip(&dists).collect();
    let numeric = WorkDistribution::convex_combination(&parts).map_err(numerical("mixture"))?;
    let closed = analytic::work_distribution(&sys, &diag, s, a, s.t_m(), &work).map_err(numerical("closed form"))?;
    let linf = numeric.max_abs_diff(&closed).map_err(numerical("comparison"))?;
    let drift = runs.iter().map(|(_, t)| t.norm_drift()).fold(0.0, f64::max);
    let mass = (numeric.mass() - 1.0).abs().max((closed.mass() - 1.0).abs());
    Ok((
        Some(linf <= 1e-4 && drift <= 1e-8 && mass <= cfg.grid.mass_tolerance),
        format!("theta = 0: L_inf {linf:.3e} (<= 1e-4), norm drift {drift:.1e} (<= 1e-8), |mass - 1| {mass:.1e}"),
    ))
}

fn self_commuting_nulls(setup: &Setup) -> Outcome {
    let cfg = &setup.cfg;
    let (s, a) = (&setup.schedule, &setup.apparatus);
    let sys = cfg.spectral()?;
    let diag = cfg.populations(sys.dim())?;
    let rho = analytic::diagonal_state(&diag);
    let free = SpectralTrajectory::free(sys.clone(), rho.clone(), s.t_i(), *s).map_err(numerical("free trajectory"))?;
    let measured = SpectralTrajectory::measured(sys.clone(), rho, s.t_i(), *s, *a).map_err(numerical("measured trajectory"))?;
    let w_dist = analytic::average_work_dist(&sys, &diag, s).map_err(numerical("average work"))?;
    let closed = analytic::delta_w_povm(&sys, &diag, s).map_err(numerical("dW_povm"))?;
    let mut worst = [0.0f64; 3];
    for convention in [IntervalConvention::Mixed, IntervalConvention::WorkInterval, IntervalConvention::FullProtocol] {
        let l = build_ledger(&LedgerInputs { hamiltonian: &sys, free: &free, measured: &measured, w_dist, schedule: *s, convention })
            .map_err(numerical("ledger"))?;
        worst[0] = worst[0].max(l.dw_int.abs());
        worst[1] = worst[1].max(l.dq_int.abs());
        if convention == IntervalConvention::Mixed {
            worst[2] = (l.dw_povm - closed).abs();
        }
    }
    Ok((
        Some(worst.iter().all(|w| *w <= 1e-8)),
        format!("|dW_int| {:.1e}, |dQ_int| {:.1e}, |dW_povm - closed form| {:.1e} (all <= 1e-8)", worst[0], worst[1], worst[2]),
    ))
}

fn jarzynski(setup: &Setup) -> Outcome {
    let cfg = &setup.cfg;
    let sys = cfg.spectral()?;
    let mut worst = 0.0f64;
    for beta in &cfg.thermal.betas {
        let th = ThermalSpec::new(*beta).map_err(numerical("beta"))?;
        let closed = analytic::modified_jarzynski(&sys, &th, &setup.schedule, &setup.apparatus).map_err(numerical("closed form"))?;
        let (quad, _, _) = jarzynski_quadrature(&sys, &th, setup).map_err(numerical("quadrature"))?;
        worst = worst.max(((quad - closed) / closed).abs());
    }
    Ok((Some(worst <= 1e-8), format!("max relative gap to quadrature {worst:.1e} (<= 1e-8) over {} temperatures", cfg.thermal.betas.len())))
}

fn crooks(setup: &Setup) -> Outcome {
    let cfg = &setup.cfg;
    let (s, a) = (&setup.schedule, &setup.apparatus);
    if s.t_p() != 0.0 {
        return Ok((None, format!("needs t_p = 0, got {}", s.t_p())));
    }
    let sys = cfg.spectral()?;
    let (rev, back) = time_reversed(&sys, s).map_err(numerical("time reversal"))?;
    let t = cfg.thermal.crooks_time.unwrap_or(s.t_m());
    let pair = CrooksPair::new(t, *s).map_err(|e| CliError::Config(format!("[thermal] crooks_time: {e}")))?;
    let points = crooks_points(&sys, setup, t, 20).map_err(numerical("points"))?;
    let mirrored = WorkGrid::new(-points.end(), -points.start(), points.len()).map_err(numerical("points"))?;
    let mut worst = 0.0f64;
    for beta in &cfg.thermal.betas {
        let th = ThermalSpec::new(*beta).map_err(numerical("beta"))?;
        let forward = analytic::thermal_work_distribution(&sys, &th, s, a, t, &points).map_err(numerical("forward"))?;
        let backward = analytic::thermal_work_distribution(&rev, &th, &back, a, s.t_m() - t, &mirrored).map_err(numerical("backward"))?;
        for (k, w) in points.values().iter().enumerate() {
            let direct = forward.density[k] / backward.density[points.len() - 1 - k];
            let ratio = analytic::crooks_ratio(&sys, &th, &pair, a, *w).map_err(numerical("ratio"))?;
            worst = worst.max(((ratio - direct) / direct).abs());
        }
    }
    Ok((Some(worst <= 1e-8), format!("max relative gap to the time-reversed mixtures {worst:.1e} (<= 1e-8) on 20 points at t = {t}")))
}

fn second_law(setup: &Setup) -> Outcome {
    let cfg = &setup.cfg;
    let sys = cfg.spectral()?;
    let mut slack = f64::INFINITY;
    for beta in cfg.thermal.betas.iter().filter(|b| **b > 0.0) {
        let th = ThermalSpec::new(*beta).map_err(numerical("beta"))?;
        let (lhs, rhs) = analytic::second_law_bound(&sys, &th, &setup.schedule, &setup.apparatus).map_err(numerical("bound"))?;
        slack = slack.min(lhs - rhs);
    }
    if slack == f64::INFINITY {
        return Ok((None, "no positive beta configured".into()));
    }
    Ok((Some(slack >= -1e-10), format!("min <W> - bound {slack:.3e} (>= -1e-10)")))
}

fn two_point_stochastic(setup: &Setup) -> Outcome {
    let cfg = &setup.cfg;
    let mut worst = 0.0f64;
    for theta in &cfg.system.thetas {
        let p = transition_matrix_qubit(&cfg.qubit(*theta)?, &setup.schedule).map_err(numerical("transition matrix"))?;
        for k in 0..2 {
            worst = worst.max((p[k][0] + p[k][1] - 1.0).abs()).max((p[0][k] + p[1][k] - 1.0).abs());
        }
    }
    Ok((Some(worst <= 1e-10), format!("transition matrices doubly stochastic to {worst:.1e} (<= 1e-10)")))
}

fn povm_completeness(setup: &Setup) -> Outcome {
    let cfg = &setup.cfg;
    let (s, a) = (&setup.schedule, &setup.apparatus);
    let Some(theta) = cfg.system.thetas.last() else {
        return Ok((None, "no theta configured".into()));
    };
    let q = cfg.qubit(*theta)?;
    let mut centers = Vec::new();
    for ef in q.energies(s.t_f()) {
        for ei in q.energies(s.t_i()) {
            centers.push(ef - ei);
        }
    }
    let work = cfg.work_grid(&centers, setup.width())?;
    let fx = povm_effects_qubit(&q, s, a, s.t_m(), &setup.momentum, &work, &setup.solver).map_err(numerical("effects"))?;
    let id: Mat2 = fx.completeness() - Mat2::identity();
    let entry = id.iter().map(|z| z.norm()).fold(0.0, f64::max);
    Ok((
        Some(entry <= 1e-4),
        format!("theta = {theta}: max |int E dW - I| entry {entry:.1e} (<= 1e-4), min effect eigenvalue {:.1e}", fx.min_eigenvalue()),
    ))
}

pub fn run(setup: &Setup) -> Result<(PathBuf, bool), CliError> {
    let checks: [(&'static str, fn(&Setup) -> Outcome); 7] = [
        ("cross_engine", cross_engine),
        ("self_commuting_nulls", self_commuting_nulls),
        ("jarzynski", jarzynski),
        ("crooks", crooks),
        ("second_law", second_law),
        ("two_point_stochastic", two_point_stochastic),
        ("povm_completeness", povm_completeness),
    ];
    let mut results = Vec::new();
    for (name, check) in checks {
        let (passed, detail) = match check(setup) {
            Ok(r) => r,
            Err(CliError::Numerical(e)) => (Some(false), e),
            Err(e) => return Err(e),
        };
        let status = match passed {
            Some(true) => "PASS",
            Some(false) => "FAIL",
            None => "SKIP",
        };
        println!("{status} {name}: {detail}");
        results.push(CheckResult { name, passed, detail });
    }
    let ok = results.iter().all(|r| r.passed != Some(false));
    let cfg = &setup.cfg;
    let mut out = Artifacts::new(&cfg.output.dir, cfg.grid.mass_tolerance)?;
    let rows: Vec<Vec<String>> = results
        .iter()
        .map(|r| {
            let status = r.passed.map_or("skip", |p| if p { "pass" } else { "fail" });
            vec![r.name.to_string(), status.to_string(), r.detail.clone()]
        })
        .collect();
    out.table("verify.csv", "checks", &Header::new("verify", cfg), &["check", "status", "detail"], &rows)?;
    let path = out.finish("verify", cfg, &setup.resolved(), &json!({ "checks": results, "all_passed": ok }))?;
    Ok((path, ok))
}
