//! `qwork analytic`: closed-form distributions, ledgers and fluctuation
//! relations for the self-commuting system.

use std::path::PathBuf;

use qwork::analytic::{self, CrooksPair, ThermalSpec};
use qwork::oracle::{quadrature_expectation, Observable};
use qwork::thermo::{build_ledger, IntervalConvention, LedgerInputs, SpectralTrajectory};
use qwork::{SpectralSystem, WorkGrid};
use serde_json::{json, Value};

use super::{ledger_columns, ledger_row, Setup};
use crate::error::{engine, CliError};
use crate::output::{num, Artifacts, Header};

fn levels_text(levels: &[Vec<f64>]) -> String {
    levels
        .iter()
        .map(|c| format!("[{}]", c.iter().map(|x| num(*x)).collect::<Vec<_>>().join(" ")))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Jarzynski average by quadrature on a grid wide enough for `exp(-beta W)`.
pub fn jarzynski_quadrature(sys: &SpectralSystem, th: &ThermalSpec, setup: &Setup) -> qwork::Result<(f64, f64, usize)> {
    let (s, a) = (&setup.schedule, &setup.apparatus);
    let width = setup.width();
    let centers = analytic::work_centers(sys, s)?;
    let points = 2 * setup.cfg.grid.work_points + 1;
    let grid = WorkGrid::covering(&centers, width, setup.cfg.grid.work_pad + th.beta() * width, points)?;
    let d = analytic::thermal_work_distribution(sys, th, s, a, s.t_m(), &grid)?;
    let e = quadrature_expectation(&d, Observable::Boltzmann { beta: th.beta() }, 1e-8)?;
    Ok((e.value, e.error_estimate, points))
}

/// Work points spanning the peak centers at readout time `t`.
pub fn crooks_points(sys: &SpectralSystem, setup: &Setup, t: f64, n: usize) -> qwork::Result<WorkGrid> {
    let s = &setup.schedule;
    let centers: Vec<f64> = (0..sys.dim()).map(|k| analytic::partial_center(sys, s, k, t)).collect::<qwork::Result<_>>()?;
    let lo = centers.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = centers.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = setup.apparatus.sigma_width(t, s.t_p());
    if hi - lo < width {
        return WorkGrid::new(lo - width, hi + width, n);
    }
    WorkGrid::new(lo, hi, n)
}

pub fn run(setup: &Setup) -> Result<PathBuf, CliError> {
    let cfg = &setup.cfg;
    let (s, a) = (&setup.schedule, &setup.apparatus);
    let sys = cfg.spectral()?;
    sys.check_finite(s.t_p(), s.t_m()).map_err(engine("[system] levels"))?;
    let diag = cfg.populations(sys.dim())?;
    let width = setup.width();
    let mut out = Artifacts::new(&cfg.output.dir, cfg.grid.mass_tolerance)?;
    let header = Header::new("analytic", cfg).with("levels", levels_text(&cfg.system.levels));
    let mut warnings: Vec<String> = Vec::new();

    let centers = analytic::work_centers(&sys, s).map_err(engine("work centers"))?;
    let grid = cfg.work_grid(&centers, width)?;
    let d = analytic::work_distribution(&sys, &diag, s, a, s.t_m(), &grid).map_err(engine("distribution"))?;
    let populations = diag.iter().map(|p| num(*p)).collect::<Vec<_>>().join(" ");
    out.distribution("analytic_distribution.csv", &header.clone().with("populations", populations.clone()), &d)?;

    let rho = analytic::diagonal_state(&diag);
    let free = SpectralTrajectory::free(sys.clone(), rho.clone(), s.t_i(), *s).map_err(engine("free trajectory"))?;
    let measured = SpectralTrajectory::measured(sys.clone(), rho, s.t_i(), *s, *a).map_err(engine("measured trajectory"))?;
    let w_dist = analytic::average_work_dist(&sys, &diag, s).map_err(engine("average work"))?;
    let mut ledger_rows = Vec::new();
    let mut ledgers = Vec::new();
    for convention in [IntervalConvention::Mixed, IntervalConvention::WorkInterval, IntervalConvention::FullProtocol] {
        let l = build_ledger(&LedgerInputs { hamiltonian: &sys, free: &free, measured: &measured, w_dist, schedule: *s, convention })
            .map_err(engine("ledger"))?;
        ledger_rows.push(ledger_row(String::new(), &l));
        ledgers.push(l);
    }
    let mut columns = ledger_columns().to_vec();
    columns.remove(0);
    for row in &mut ledger_rows {
        row.remove(0);
    }
    out.table("analytic_ledger.csv", "ledger", &header.clone().with("populations", populations), &columns, &ledger_rows)?;

    let crooks_time = cfg.thermal.crooks_time.unwrap_or(s.t_m());
    let mut relation_rows = Vec::new();
    let mut thermal = Vec::new();
    for beta in &cfg.thermal.betas {
        let th = ThermalSpec::new(*beta).map_err(engine("[thermal] betas"))?;
        let tagged = header.clone().with("beta", num(*beta));
        let ctx = format!("beta = {beta}");
        let d = analytic::thermal_work_distribution(&sys, &th, s, a, s.t_m(), &grid).map_err(engine(&ctx))?;
        out.distribution(&format!("analytic_thermal_beta_{beta}.csv"), &tagged, &d)?;

        let df = analytic::free_energy_change(&sys, &th, s);
        let closed = analytic::modified_jarzynski(&sys, &th, s, a).map_err(engine(&ctx))?;
        let (quad, quad_err, quad_points) = jarzynski_quadrature(&sys, &th, setup).map_err(engine(&ctx))?;
        let gap = ((quad - closed) / closed).abs();
        let weights = analytic::thermal_weights(&sys, &th, s.t_i());
        let mean = analytic::average_work_dist(&sys, &weights, s).map_err(engine(&ctx))?;
        let bound = if *beta > 0.0 { Some(analytic::second_law_bound(&sys, &th, s, a).map_err(engine(&ctx))?.1) } else { None };
        relation_rows.push(vec![
            num(*beta),
            num(df),
            num((-beta * df).exp()),
            num(closed),
            num(quad),
            num(gap),
            num(mean),
            bound.map(num).unwrap_or_default(),
        ]);
        thermal.push(json!({ "beta": beta, "jarzynski_quadrature_points": quad_points, "jarzynski_quadrature_error_estimate": quad_err }));

        if s.t_p() != 0.0 {
            if *beta == cfg.thermal.betas[0] {
                warnings.push(format!("Crooks ratio skipped: it is defined for t_p = 0, got t_p = {}", s.t_p()));
            }
            continue;
        }
        let pair = CrooksPair::new(crooks_time, *s).map_err(engine("[thermal] crooks_time"))?;
        let points = crooks_points(&sys, setup, crooks_time, cfg.thermal.crooks_points).map_err(engine(&ctx))?;
        let mut rows = Vec::new();
        for w in points.values() {
            let ratio = analytic::crooks_ratio(&sys, &th, &pair, a, w).map_err(engine(&ctx))?;
            rows.push(vec![num(w), num(ratio), num((beta * (w - df)).exp())]);
        }
        out.table(
            &format!("analytic_crooks_beta_{beta}.csv"),
            "crooks",
            &tagged.with("crooks_time", num(crooks_time)),
            &["W_over_kappa", "ratio", "ideal"],
            &rows,
        )?;
    }
    out.table(
        "analytic_relations.csv",
        "relations",
        &header,
        &["beta", "delta_F", "exp_minus_beta_delta_F", "jarzynski_closed", "jarzynski_quadrature", "jarzynski_rel_gap", "mean_work", "second_law_bound"],
        &relation_rows,
    )?;
    println!("analytic: {} thermal states, dW_povm = {}", cfg.thermal.betas.len(), num(ledgers[0].dw_povm));
    let diagnostics: Value = json!({
        "centers": centers,
        "mass": d.mass(),
        "delta_w_povm_closed_form": analytic::delta_w_povm(&sys, &diag, s).map_err(engine("dW_povm"))?,
        "ledgers": ledgers,
        "thermal": thermal,
        "warnings": warnings,
    });
    out.finish("analytic", cfg, &setup.resolved(), &diagnostics)
}
