//! `qwork sweep`: average-work corrections across theta, and the
//! self-commuting relations along the ideal-limit ladder.

use std::path::PathBuf;

use qwork::analytic::{self, CrooksPair, ThermalSpec};
use qwork::oracle::IdealLimitLadder;
use qwork::{ApparatusSpec, ProtocolSchedule, SpectralSystem};
use serde_json::json;

use super::{describe_state, run_qubit, Setup};
use crate::error::{engine, CliError};
use crate::output::{num, Artifacts, Header};

/// Distances to the ideal relations at one rung.
struct RungDistances {
    jarzynski: f64,
    crooks: Option<f64>,
    second_law: Option<f64>,
}

fn rung_distances(sys: &SpectralSystem, th: &ThermalSpec, s: &ProtocolSchedule, a: &ApparatusSpec) -> qwork::Result<RungDistances> {
    let df = analytic::free_energy_change(sys, th, s);
    let log_mod = analytic::log_modified_jarzynski(sys, th, s, a)?;
    let jarzynski = (log_mod + th.beta() * df).exp_m1().abs();
    let crooks = if s.t_p() == 0.0 {
        let pair = CrooksPair::new(s.t_m(), *s)?;
        let mut worst = 0.0f64;
        for w in analytic::work_centers(sys, s)? {
            let target = (th.beta() * (w - df)).exp();
            worst = worst.max(((analytic::crooks_ratio(sys, th, &pair, a, w)? - target) / target).abs());
        }
        Some(worst)
    } else {
        None
    };
    let second_law = if th.beta() > 0.0 { Some((analytic::second_law_bound(sys, th, s, a)?.1 - df).abs()) } else { None };
    Ok(RungDistances { jarzynski, crooks, second_law })
}

fn decreasing(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[1] < w[0])
}

pub fn run(setup: &Setup) -> Result<PathBuf, CliError> {
    let cfg = &setup.cfg;
    let mut out = Artifacts::new(&cfg.output.dir, cfg.grid.mass_tolerance)?;
    let conv = serde_json::to_value(cfg.sweep.convention).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default();

    let header = Header::new("sweep", cfg)
        .with("omega", num(cfg.system.omega))
        .with("state", describe_state(cfg))
        .with("convention", conv);
    let mut rows = Vec::new();
    let mut runs = Vec::new();
    for theta in &cfg.sweep.thetas {
        let r = run_qubit(setup, *theta, cfg.sweep.convention)?;
        let mass = r.dist.mass();
        if !((mass - 1.0).abs() <= cfg.grid.mass_tolerance) {
            return Err(CliError::Numerical(format!("theta = {theta}: distribution mass {mass} is outside 1 +/- {}", cfg.grid.mass_tolerance)));
        }
        let l = &r.ledger;
        rows.push(vec![num(*theta), num(l.dw_int), num(l.dw_povm), num(l.dq_int)]);
        println!("theta = {theta}: dW_int = {}, dW_povm = {}, dQ_int = {}", num(l.dw_int), num(l.dw_povm), num(l.dq_int));
        runs.push(json!({ "run": r.diagnostics(), "ledger": r.ledger }));
    }
    out.table("sweep.csv", "sweep", &header, &["theta", "dW_int", "dW_povm", "dQ_int"], &rows)?;

    let sys = cfg.spectral()?;
    let ladder = cfg.ladder()?;
    let diag = cfg.populations(sys.dim())?;
    let mut ladder_rows = Vec::new();
    let mut trends = Vec::new();
    for beta in &cfg.thermal.betas {
        let th = ThermalSpec::new(*beta).map_err(engine("[thermal] betas"))?;
        let mut dists = Vec::new();
        for (k, rung) in ladder.rungs().iter().enumerate() {
            let (s, a) = IdealLimitLadder::apply(rung, &setup.schedule, cfg.apparatus.lambda).map_err(engine(format!("[sweep] ladder rung {k}")))?;
            let d = rung_distances(&sys, &th, &s, &a).map_err(engine(format!("beta = {beta}, rung {k}")))?;
            let dw_povm = analytic::delta_w_povm(&sys, &diag, &s).map_err(engine(format!("rung {k}")))?;
            ladder_rows.push(vec![
                k.to_string(),
                num(rung.sigma_p),
                num(rung.delta),
                num(rung.mass),
                num(*beta),
                num(d.jarzynski),
                d.crooks.map(num).unwrap_or_default(),
                d.second_law.map(num).unwrap_or_default(),
                num(dw_povm),
            ]);
            dists.push(d);
        }
        let j: Vec<f64> = dists.iter().map(|d| d.jarzynski).collect();
        let c: Option<Vec<f64>> = dists.iter().map(|d| d.crooks).collect();
        let sl: Option<Vec<f64>> = dists.iter().map(|d| d.second_law).collect();
        trends.push(json!({
            "beta": beta,
            "jarzynski_decreasing": decreasing(&j),
            "crooks_decreasing": c.map(|c| decreasing(&c)),
            "second_law_decreasing": sl.map(|s| decreasing(&s)),
        }));
    }
    out.table(
        "ideal_limit.csv",
        "ladder",
        &Header::new("sweep", cfg).with("levels", format!("{:?}", cfg.system.levels)),
        &["rung", "sigma_p", "delta", "mass", "beta", "jarzynski_rel_gap", "crooks_max_rel_error", "second_law_gap", "dW_povm"],
        &ladder_rows,
    )?;
    out.finish("sweep", cfg, &setup.resolved(), &json!({ "thetas": runs, "ladder_trends": trends }))
}
