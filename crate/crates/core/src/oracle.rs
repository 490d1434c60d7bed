//! Reference results that do not go through the pointer model: projective
//! two-point statistics, effect operators by state tomography, and plain
//! quadrature of sampled densities.

use std::sync::Arc;

use nalgebra::{Matrix4, Vector4};
use serde::{Deserialize, Serialize};

use crate::apparatus::ApparatusSpec;
use crate::distribution::{trapezoid, WorkDistribution, WorkGrid};
use crate::error::{invalid, Error, Result};
use crate::linalg::{c, hermitian_eigenvalues, to_dmatrix, Ket2, Mat2};
use crate::numeric::{ket, run_pure, work_distribution_numeric, MomentumGrid, SolverOptions};
use crate::schedule::ProtocolSchedule;
use crate::state::{check_probabilities, validate_density, SystemState};
use crate::system::{DrivenQubit, EnergyLevel, FnLevel, SpectralSystem};

/// Work values with probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteWorkDistribution {
    atoms: Vec<(f64, f64)>,
}

impl DiscreteWorkDistribution {
    pub fn new(atoms: Vec<(f64, f64)>) -> Result<Self> {
        if let Some((w, p)) = atoms.iter().find(|(w, p)| !w.is_finite() || !(*p >= 0.0)) {
            return Err(invalid("atoms", format!("atom ({w}, {p}) needs a finite position and non-negative weight")));
        }
        let total: f64 = atoms.iter().map(|(_, p)| p).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(invalid("atoms", format!("weights sum to {total}, expected 1")));
        }
        Ok(Self { atoms })
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn total_weight(&self) -> f64 {
        self.atoms.iter().map(|(_, p)| p).sum()
    }

    pub fn mean(&self) -> f64 {
        self.atoms.iter().map(|(w, p)| w * p).sum()
    }

    /// Atoms sorted by position, merging those closer than `tol` and
    /// dropping zero weights.
    pub fn merged(&self, tol: f64) -> Self {
        let mut sorted: Vec<(f64, f64)> = self.atoms.iter().copied().filter(|(_, p)| *p > 0.0).collect();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut out: Vec<(f64, f64)> = Vec::with_capacity(sorted.len());
        for (w, p) in sorted {
            match out.last_mut() {
                Some(last) if (w - last.0).abs() <= tol => {
                    last.0 = (last.0 * last.1 + w * p) / (last.1 + p);
                    last.1 += p;
                }
                _ => out.push((w, p)),
            }
        }
        Self { atoms: out }
    }
}

/// `P_{m -> n} = |<E_n(t_f)| U(t_f, t_i) |E_m(t_i)>|^2`, indexed `[m][n]`.
pub fn transition_matrix_qubit(q: &DrivenQubit, schedule: &ProtocolSchedule) -> Result<[[f64; 2]; 2]> {
    let u = crate::numeric::system_propagator(q, schedule.t_i(), schedule.t_f())?;
    let before = q.eigenvectors(schedule.t_i());
    let after = q.eigenvectors(schedule.t_f());
    let mut p = [[0.0; 2]; 2];
    for (m, em) in before.iter().enumerate() {
        let moved = u * em;
        for (n, en) in after.iter().enumerate() {
            p[m][n] = en.dotc(&moved).norm_sqr();
        }
    }
    Ok(p)
}

/// Two projective energy measurements at `t_i` and `t_f` on the state
/// `rho` (given at `t_i`) of the driven qubit.
pub fn two_point_distribution_qubit(q: &DrivenQubit, rho: &Mat2, schedule: &ProtocolSchedule) -> Result<DiscreteWorkDistribution> {
    validate_density(&to_dmatrix(rho))?;
    let p = transition_matrix_qubit(q, schedule)?;
    let before = q.eigenvectors(schedule.t_i());
    let ei = q.energies(schedule.t_i());
    let ef = q.energies(schedule.t_f());
    let mut atoms = Vec::with_capacity(4);
    for m in 0..2 {
        let pm = before[m].dotc(&(rho * before[m])).re;
        for n in 0..2 {
            atoms.push((ef[n] - ei[m], pm * p[m][n]));
        }
    }
    DiscreteWorkDistribution::new(atoms)
}

/// Two-point statistics of a self-commuting system; no transitions occur.
pub fn two_point_distribution_spectral(
    sys: &SpectralSystem,
    diag: &[f64],
    schedule: &ProtocolSchedule,
) -> Result<DiscreteWorkDistribution> {
    check_probabilities(diag)?;
    if diag.len() != sys.dim() {
        return Err(invalid("populations", format!("{} populations for a {}-level system", diag.len(), sys.dim())));
    }
    let atoms = diag
        .iter()
        .enumerate()
        .map(|(n, p)| (sys.energy(n, schedule.t_f()) - sys.energy(n, schedule.t_i()), *p))
        .collect();
    DiscreteWorkDistribution::new(atoms)
}

/// The protocol run backwards: levels `E'(s) = E(t_m - s)` on the schedule
/// `(t_p, t_m - t_f, t_m - t_i, t_m)`. Only defined for `t_p = 0`, where the
/// reversed schedule spans the same interval.
pub fn time_reversed(sys: &SpectralSystem, schedule: &ProtocolSchedule) -> Result<(SpectralSystem, ProtocolSchedule)> {
    if schedule.t_p() != 0.0 {
        return Err(invalid("t_p", format!("time reversal needs t_p = 0, got {}", schedule.t_p())));
    }
    let t_m = schedule.t_m();
    let levels: Vec<Arc<dyn EnergyLevel>> = (0..sys.dim())
        .map(|n| {
            let sys = sys.clone();
            Arc::new(FnLevel(move |u: f64| sys.energy(n, t_m - u))) as Arc<dyn EnergyLevel>
        })
        .collect();
    let back = ProtocolSchedule::new(0.0, t_m - schedule.t_f(), t_m - schedule.t_i(), t_m, schedule.delta())?;
    Ok((SpectralSystem::new(levels)?, back))
}

/// Effect operators `E(W_k)` on a work grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PovmEffects {
    pub time: f64,
    pub work: Vec<f64>,
    pub effects: Vec<Mat2>,
}

impl PovmEffects {
    /// `tr[E(W_k) rho]` on the grid.
    pub fn probabilities(&self, rho: &Mat2) -> Vec<f64> {
        self.effects.iter().map(|e| (e * rho).trace().re).collect()
    }

    /// Trapezoid integral of `E(W)` over the grid.
    pub fn completeness(&self) -> Mat2 {
        let mut out = Mat2::zeros();
        for r in 0..2 {
            for col in 0..2 {
                let re: Vec<f64> = self.effects.iter().map(|e| e[(r, col)].re).collect();
                let im: Vec<f64> = self.effects.iter().map(|e| e[(r, col)].im).collect();
                out[(r, col)] = c(trapezoid(&self.work, &re), trapezoid(&self.work, &im));
            }
        }
        out
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.effects.iter().map(|e| hermitian_eigenvalues(e)[0]).fold(f64::INFINITY, f64::min)
    }
}

/// `|0>, |1>, |+>, |+i>`, each meant as the state at `t_i`.
pub fn tomography_states() -> [Ket2; 4] {
    let h = 0.5f64.sqrt();
    [
        ket(c(1.0, 0.0), c(0.0, 0.0)),
        ket(c(0.0, 0.0), c(1.0, 0.0)),
        ket(c(h, 0.0), c(h, 0.0)),
        ket(c(h, 0.0), c(0.0, h)),
    ]
}

const MAX_CONDITION: f64 = 1e8;

/// Linear map from `(E_00, E_11, Re E_01, Im E_01)` to `tr[E rho_j]`.
fn tomography_map(states: &[Ket2; 4]) -> Result<Matrix4<f64>> {
    let mut m = Matrix4::zeros();
    for (j, psi) in states.iter().enumerate() {
        let rho = psi * psi.adjoint();
        m[(j, 0)] = rho[(0, 0)].re;
        m[(j, 1)] = rho[(1, 1)].re;
        m[(j, 2)] = 2.0 * rho[(1, 0)].re;
        m[(j, 3)] = -2.0 * rho[(1, 0)].im;
    }
    let sv = m.singular_values();
    let cond = sv.max() / sv.min();
    if !(cond < MAX_CONDITION) {
        return Err(Error::Tomography(format!("condition number {cond:e} for the probe states")));
    }
    m.try_inverse().ok_or_else(|| Error::Tomography("probe states are linearly dependent".into()))
}

/// Reconstructs `E(W)` at readout time `t` from the distributions of the
/// four tomography states.
#[allow(clippy::too_many_arguments)]
pub fn povm_effects_qubit(
    q: &DrivenQubit,
    schedule: &ProtocolSchedule,
    a: &ApparatusSpec,
    t: f64,
    momentum: &MomentumGrid,
    work: &WorkGrid,
    opts: &SolverOptions,
) -> Result<PovmEffects> {
    let states = tomography_states();
    let inverse = tomography_map(&states)?;
    let dists: Vec<WorkDistribution> = states
        .iter()
        .map(|psi| {
            let target = SystemState::qubit(psi[0], psi[1])?;
            let traj = run_pure(q, &target, schedule, a, momentum, t, opts)?;
            work_distribution_numeric(traj.final_field(), a, work)
        })
        .collect::<Result<_>>()?;
    let effects = (0..work.len())
        .map(|k| {
            let x = inverse * Vector4::new(dists[0].density[k], dists[1].density[k], dists[2].density[k], dists[3].density[k]);
            Mat2::new(c(x[0], 0.0), c(x[2], x[3]), c(x[2], -x[3]), c(x[1], 0.0))
        })
        .collect();
    Ok(PovmEffects { time: t, work: work.values(), effects })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Observable {
    Work,
    Boltzmann { beta: f64 },
}

impl Observable {
    fn eval(&self, w: f64) -> f64 {
        match self {
            Self::Work => w,
            Self::Boltzmann { beta } => (-beta * w).exp(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Expectation {
    pub value: f64,
    /// `|T_h - T_2h| / 3` from the two trapezoid sums.
    pub error_estimate: f64,
}

/// Trapezoid expectation of `obs` under `dist` on its uniform grid.
///
/// Fails with a coverage error when the mass is off by more than `coverage`
/// or the integrand at either grid end exceeds `coverage` times its peak.
pub fn quadrature_expectation(dist: &WorkDistribution, obs: Observable, coverage: f64) -> Result<Expectation> {
    let w = &dist.work;
    let n = w.len();
    let h = (w[n - 1] - w[0]) / (n - 1) as f64;
    if w.windows(2).any(|p| ((p[1] - p[0]) - h).abs() > 1e-9 * h.abs().max(1.0)) {
        return Err(invalid("work", "quadrature needs a uniform grid"));
    }
    if n < 5 {
        return Err(invalid("work", format!("need at least 5 grid points, got {n}")));
    }
    let mass = dist.mass();
    if (mass - 1.0).abs() > coverage {
        return Err(Error::Coverage(format!("grid holds mass {mass}, outside 1 +/- {coverage}")));
    }
    let g: Vec<f64> = w.iter().zip(&dist.density).map(|(x, p)| obs.eval(*x) * p).collect();
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::Coverage("integrand overflows on the grid".into()));
    }
    let top = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let edge = g[0].abs().max(g[n - 1].abs());
    if edge > coverage * top {
        return Err(Error::Coverage(format!("integrand at the grid edge is {:e} of its peak", edge / top)));
    }
    let value = trapezoid(w, &g);
    // coarse sum over the largest prefix with an even number of intervals
    let m = if n % 2 == 1 { n } else { n - 1 };
    let fine = trapezoid(&w[..m], &g[..m]);
    let xs: Vec<f64> = w[..m].iter().step_by(2).copied().collect();
    let ys: Vec<f64> = g[..m].iter().step_by(2).copied().collect();
    let coarse = trapezoid(&xs, &ys);
    Ok(Expectation { value, error_estimate: (fine - coarse).abs() / 3.0 })
}

/// Masses of `dist` in windows around each atom, half-width the smaller of
/// `4 width` and half the distance to the nearest neighbouring atom.
pub fn peak_weights(dist: &WorkDistribution, atoms: &[f64], width: f64) -> Vec<f64> {
    atoms
        .iter()
        .enumerate()
        .map(|(k, &x)| {
            let gap = atoms
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != k)
                .map(|(_, y)| (y - x).abs())
                .fold(f64::INFINITY, f64::min);
            let half = (4.0 * width).min(0.5 * gap);
            dist.mass_between(x - half, x + half)
        })
        .collect()
}

/// Largest `|peak weight - atom weight|` after merging coincident atoms.
pub fn atom_weight_distance(dist: &WorkDistribution, tmp: &DiscreteWorkDistribution, width: f64) -> f64 {
    let merged = tmp.merged(1e-9);
    let positions: Vec<f64> = merged.atoms().iter().map(|(w, _)| *w).collect();
    peak_weights(dist, &positions, width)
        .iter()
        .zip(merged.atoms())
        .map(|(got, (_, want))| (got - want).abs())
        .fold(0.0, f64::max)
}

/// One step towards the ideal measurement limit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LadderRung {
    pub sigma_p: f64,
    pub delta: f64,
    pub mass: f64,
}

/// Parameter settings with growing `sigma_p` and `mass` and shrinking `delta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdealLimitLadder {
    rungs: Vec<LadderRung>,
}

impl IdealLimitLadder {
    pub fn new(rungs: Vec<LadderRung>) -> Result<Self> {
        if rungs.len() < 3 {
            return Err(invalid("ladder", format!("need at least 3 rungs, got {}", rungs.len())));
        }
        for pair in rungs.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            let sharper = b.sigma_p >= a.sigma_p && b.delta <= a.delta && b.mass >= a.mass;
            let moved = b.sigma_p > a.sigma_p || b.delta < a.delta;
            if !sharper || !moved {
                return Err(invalid("ladder", format!("rung {b:?} does not approach the ideal limit from {a:?}")));
            }
        }
        Ok(Self { rungs })
    }

    /// `sigma_p = 2, 8, 32` with `delta = 0.4 / sigma_p` and `m = 250 sigma_p^4`,
    /// starting from the figure apparatus.
    pub fn standard() -> Self {
        let rungs = [2.0, 8.0, 32.0]
            .into_iter()
            .map(|s: f64| LadderRung { sigma_p: s, delta: 0.4 / s, mass: 250.0 * s.powi(4) })
            .collect();
        Self { rungs }
    }

    pub fn rungs(&self) -> &[LadderRung] {
        &self.rungs
    }

    /// Schedule and apparatus for one rung, keeping the times and `lambda`.
    pub fn apply(rung: &LadderRung, base: &ProtocolSchedule, lambda: f64) -> Result<(ProtocolSchedule, ApparatusSpec)> {
        Ok((base.with_delta(rung.delta)?, ApparatusSpec::new(rung.mass, rung.sigma_p, lambda)?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub rungs: Vec<LadderRung>,
    pub distances: Vec<f64>,
    /// Distances strictly decrease along the ladder.
    pub monotone: bool,
}

impl SweepReport {
    pub fn last(&self) -> f64 {
        *self.distances.last().expect("ladders have at least 3 rungs")
    }
}

/// Evaluates `distance` (to the ideal-limit target) on every rung.
pub fn ideal_limit_sweep<F>(ladder: &IdealLimitLadder, base: &ProtocolSchedule, lambda: f64, mut distance: F) -> Result<SweepReport>
where
    F: FnMut(&ProtocolSchedule, &ApparatusSpec) -> Result<f64>,
{
    let distances = ladder
        .rungs
        .iter()
        .map(|r| {
            let (s, a) = IdealLimitLadder::apply(r, base, lambda)?;
            distance(&s, &a)
        })
        .collect::<Result<Vec<f64>>>()?;
    let monotone = distances.windows(2).all(|d| d[1] < d[0]);
    Ok(SweepReport { rungs: ladder.rungs.clone(), distances, monotone })
}
