//! `qwork qubit`: driven-qubit distributions and ledgers for each theta.

use std::path::PathBuf;

use serde_json::json;

use super::{describe_state, ledger_columns, ledger_row, run_qubit, theta_files, Setup};
use crate::error::CliError;
use crate::output::{num, Artifacts, Header};

pub fn run(setup: &Setup) -> Result<PathBuf, CliError> {
    let cfg = &setup.cfg;
    let files = theta_files(&cfg.system.thetas, "qubit")?;
    let mut out = Artifacts::new(&cfg.output.dir, cfg.grid.mass_tolerance)?;
    let header = Header::new("qubit", cfg)
        .with("omega", num(cfg.system.omega))
        .with("state", describe_state(cfg))
        .with("state_time", "t_i");
    let mut rows = Vec::new();
    let mut diagnostics = Vec::new();
    for (theta, file) in cfg.system.thetas.iter().zip(&files) {
        let r = run_qubit(setup, *theta, cfg.sweep.convention)?;
        out.distribution(file, &header.clone().with("theta", num(*theta)), &r.dist)?;
        rows.push(ledger_row(num(*theta), &r.ledger));
        diagnostics.push(r.diagnostics());
        println!("theta = {theta}: mass {:.6}, dW_povm = {}", r.dist.mass(), num(r.ledger.dw_povm));
    }
    out.table("qubit_ledger.csv", "ledger", &header, &ledger_columns(), &rows)?;
    out.finish("qubit", cfg, &setup.resolved(), &json!({ "runs": diagnostics }))
}
