//! First-law bookkeeping for the free and the measured evolution.
//!
//! Work is `int tr[dH/dt rho]`, internal energy is `tr[H rho]` and heat is
//! whatever the first law leaves over. The measured state is the reduced
//! system state with the pointer traced out.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::analytic::{free_state, partial_center, reduced_system_state};
use crate::apparatus::ApparatusSpec;
use crate::error::{invalid, Error, Result};
use crate::linalg::{c, to_dmatrix, Mat2, C64};
use crate::numeric::{system_propagator, Trajectory};
use crate::quadrature::{integrate_with_breaks, QuadOptions};
use crate::schedule::{ProtocolSchedule, WINDOW_SUPPORT};
use crate::state::validate_density;
use crate::system::{DrivenQubit, Hamiltonian, SpectralSystem};

/// Largest sample spacing accepted for work integrals, in units of `delta`.
pub const MAX_SAMPLE_SPACING: f64 = 0.125;

/// A system density matrix as a function of time.
pub trait ReducedTrajectory {
    fn dim(&self) -> usize;

    /// Times at which the state is available.
    fn span(&self) -> (f64, f64);

    fn state(&self, t: f64) -> Result<DMatrix<C64>>;

    /// Points where the state is only piecewise smooth, inside `[from, to]`.
    fn breakpoints(&self, _from: f64, _to: f64) -> Vec<f64> {
        Vec::new()
    }

    /// Largest gap between stored samples inside `[from, to]`; `None` when
    /// the state is exact at every time.
    fn max_spacing(&self, _from: f64, _to: f64) -> Option<f64> {
        None
    }
}

/// Samples of `rho` and `d rho/dt`, joined by cubic Hermite pieces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledTrajectory {
    times: Vec<f64>,
    states: Vec<DMatrix<C64>>,
    rates: Vec<DMatrix<C64>>,
}

impl SampledTrajectory {
    pub fn new(times: Vec<f64>, states: Vec<DMatrix<C64>>, rates: Vec<DMatrix<C64>>) -> Result<Self> {
        if times.len() < 2 || states.len() != times.len() || rates.len() != times.len() {
            return Err(invalid(
                "samples",
                format!("need matching samples, got {} times, {} states, {} rates", times.len(), states.len(), rates.len()),
            ));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(invalid("samples", "sample times must be strictly increasing"));
        }
        let dim = states[0].nrows();
        if states.iter().chain(&rates).any(|m| m.nrows() != dim || m.ncols() != dim) {
            return Err(invalid("samples", "samples have inconsistent dimensions"));
        }
        Ok(Self { times, states, rates })
    }

    /// Reduced-state samples recorded by the momentum-grid solver.
    pub fn from_numeric(traj: &Trajectory) -> Result<Self> {
        let times = traj.samples.iter().map(|s| s.t).collect();
        let states = traj.samples.iter().map(|s| to_dmatrix(&s.rho)).collect();
        let rates = traj.samples.iter().map(|s| to_dmatrix(&s.rate)).collect();
        Self::new(times, states, rates)
    }

    /// Weighted sum of trajectories sampled at the same times, for mixtures
    /// run component by component.
    pub fn mixture(parts: &[(f64, &SampledTrajectory)]) -> Result<Self> {
        let Some((_, first)) = parts.first() else {
            return Err(invalid("components", "empty mixture"));
        };
        let mut states = vec![DMatrix::zeros(first.dim(), first.dim()); first.times.len()];
        let mut rates = states.clone();
        for (w, traj) in parts {
            if traj.times != first.times {
                return Err(invalid("components", "trajectories are sampled at different times"));
            }
            for k in 0..states.len() {
                states[k] += &traj.states[k] * c(*w, 0.0);
                rates[k] += &traj.rates[k] * c(*w, 0.0);
            }
        }
        Self::new(first.times.clone(), states, rates)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }
}

impl ReducedTrajectory for SampledTrajectory {
    fn dim(&self) -> usize {
        self.states[0].nrows()
    }

    fn span(&self) -> (f64, f64) {
        (self.times[0], self.times[self.times.len() - 1])
    }

    fn state(&self, t: f64) -> Result<DMatrix<C64>> {
        let (lo, hi) = self.span();
        if !(t >= lo && t <= hi) {
            return Err(Error::TrajectoryResolution(format!("t = {t} is outside the sampled span [{lo}, {hi}]")));
        }
        let k = match self.times.partition_point(|&s| s <= t) {
            0 => 0,
            n if n >= self.times.len() => self.times.len() - 2,
            n => n - 1,
        };
        let (t0, t1) = (self.times[k], self.times[k + 1]);
        let h = t1 - t0;
        let s = (t - t0) / h;
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        Ok(&self.states[k] * c(h00, 0.0)
            + &self.rates[k] * c(h10 * h, 0.0)
            + &self.states[k + 1] * c(h01, 0.0)
            + &self.rates[k + 1] * c(h11 * h, 0.0))
    }

    fn breakpoints(&self, from: f64, to: f64) -> Vec<f64> {
        self.times.iter().copied().filter(|t| *t > from && *t < to).collect()
    }

    fn max_spacing(&self, from: f64, to: f64) -> Option<f64> {
        let first = self.times.partition_point(|&s| s <= from).saturating_sub(1);
        let last = self.times.partition_point(|&s| s < to).min(self.times.len() - 1);
        self.times[first..=last].windows(2).map(|w| w[1] - w[0]).reduce(f64::max)
    }
}

/// Qubit state under `H(t)` alone, pinned to `rho_ref` at `t_ref`.
#[derive(Debug, Clone, PartialEq)]
pub struct QubitFreeTrajectory {
    qubit: DrivenQubit,
    rho_ref: Mat2,
    t_ref: f64,
}

impl QubitFreeTrajectory {
    pub fn new(qubit: DrivenQubit, rho_ref: Mat2, t_ref: f64) -> Result<Self> {
        validate_density(&to_dmatrix(&rho_ref))?;
        Ok(Self { qubit, rho_ref, t_ref })
    }
}

impl ReducedTrajectory for QubitFreeTrajectory {
    fn dim(&self) -> usize {
        2
    }

    fn span(&self) -> (f64, f64) {
        (f64::NEG_INFINITY, f64::INFINITY)
    }

    fn state(&self, t: f64) -> Result<DMatrix<C64>> {
        let u = system_propagator(&self.qubit, self.t_ref, t)?;
        Ok(to_dmatrix(&(u * self.rho_ref * u.adjoint())))
    }
}

/// Closed-form trajectory of a self-commuting system pinned to `rho_ref` at
/// `t_ref`, with the pointer-induced decoherence when an apparatus is given.
#[derive(Debug, Clone)]
pub struct SpectralTrajectory {
    system: SpectralSystem,
    rho_ref: DMatrix<C64>,
    t_ref: f64,
    schedule: ProtocolSchedule,
    apparatus: Option<ApparatusSpec>,
}

impl SpectralTrajectory {
    pub fn free(system: SpectralSystem, rho_ref: DMatrix<C64>, t_ref: f64, schedule: ProtocolSchedule) -> Result<Self> {
        validate_density(&rho_ref)?;
        if rho_ref.nrows() != system.dim() {
            return Err(invalid("rho", format!("{}x{} state for a {}-level system", rho_ref.nrows(), rho_ref.ncols(), system.dim())));
        }
        Ok(Self { system, rho_ref, t_ref, schedule, apparatus: None })
    }

    pub fn measured(
        system: SpectralSystem,
        rho_ref: DMatrix<C64>,
        t_ref: f64,
        schedule: ProtocolSchedule,
        apparatus: ApparatusSpec,
    ) -> Result<Self> {
        let mut out = Self::free(system, rho_ref, t_ref, schedule)?;
        out.apparatus = Some(apparatus);
        Ok(out)
    }

    /// `d rho / dt`: free phases plus the growth of the decoherence exponent.
    pub fn rate(&self, t: f64, rho: &DMatrix<C64>) -> Result<DMatrix<C64>> {
        let n = self.system.dim();
        let e = self.system.energies(t);
        let (shifts, f, scale) = match &self.apparatus {
            Some(a) => {
                let k: Vec<f64> = (0..n).map(|l| partial_center(&self.system, &self.schedule, l, t)).collect::<Result<_>>()?;
                let inside = t >= self.schedule.t_p() && t <= self.schedule.t_m();
                let f = if inside { self.schedule.sampling_function(t) } else { 0.0 };
                (k, f, a.lambda() * a.sigma_p())
            }
            None => (vec![0.0; n], 0.0, 0.0),
        };
        Ok(DMatrix::from_fn(n, n, |r, col| {
            let gap = e[r] - e[col];
            let decay = -scale * scale * (shifts[r] - shifts[col]) * f * gap / 2.0;
            rho[(r, col)] * c(decay, -gap)
        }))
    }

    /// Samples on `[from, to]` every `step` (ends included) for Hermite interpolation.
    pub fn sample(&self, from: f64, to: f64, step: f64) -> Result<SampledTrajectory> {
        if !(to > from) || !(step > 0.0) {
            return Err(invalid("step", format!("need from < to and a positive step, got [{from}, {to}] by {step}")));
        }
        let n = ((to - from) / step).ceil() as usize;
        let times: Vec<f64> = (0..=n).map(|k| if k == n { to } else { from + k as f64 * (to - from) / n as f64 }).collect();
        let mut states = Vec::with_capacity(times.len());
        let mut rates = Vec::with_capacity(times.len());
        for &t in &times {
            let rho = self.state(t)?;
            rates.push(self.rate(t, &rho)?);
            states.push(rho);
        }
        SampledTrajectory::new(times, states, rates)
    }
}

impl ReducedTrajectory for SpectralTrajectory {
    fn dim(&self) -> usize {
        self.system.dim()
    }

    fn span(&self) -> (f64, f64) {
        (f64::NEG_INFINITY, f64::INFINITY)
    }

    fn state(&self, t: f64) -> Result<DMatrix<C64>> {
        let rho = free_state(&self.system, &self.rho_ref, self.t_ref, t)?;
        match &self.apparatus {
            Some(a) => reduced_system_state(&self.system, &rho, &self.schedule, a, t),
            None => Ok(rho),
        }
    }

    fn breakpoints(&self, from: f64, to: f64) -> Vec<f64> {
        window_breaks(&self.schedule, from, to)
    }
}

fn window_breaks(schedule: &ProtocolSchedule, from: f64, to: f64) -> Vec<f64> {
    let w = WINDOW_SUPPORT * schedule.delta();
    [schedule.t_i() - w, schedule.t_i(), schedule.t_i() + w, schedule.t_f() - w, schedule.t_f(), schedule.t_f() + w]
        .into_iter()
        .filter(|t| *t > from && *t < to)
        .collect()
}

fn trace_re(a: &DMatrix<C64>, b: &DMatrix<C64>) -> f64 {
    (a * b).trace().re
}

fn check_span(traj: &dyn ReducedTrajectory, from: f64, to: f64) -> Result<()> {
    let (lo, hi) = traj.span();
    let slack = 1e-12 * (1.0 + from.abs().max(to.abs()));
    if from.min(to) < lo - slack || from.max(to) > hi + slack {
        return Err(Error::TrajectoryResolution(format!("trajectory spans [{lo}, {hi}], need [{from}, {to}]")));
    }
    Ok(())
}

/// `int_{from}^{to} tr[dH/dt rho(t)] dt`.
pub fn trace_work(h: &dyn Hamiltonian, traj: &dyn ReducedTrajectory, from: f64, to: f64) -> Result<f64> {
    if h.dim() != traj.dim() {
        return Err(invalid("trajectory", format!("{}-level trajectory for a {}-level Hamiltonian", traj.dim(), h.dim())));
    }
    check_span(traj, from, to)?;
    if from == to {
        return Ok(0.0);
    }
    let (lo, hi) = (from.min(to), from.max(to));
    let mut pts = vec![lo];
    pts.extend(traj.breakpoints(lo, hi));
    pts.push(hi);
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let opts = QuadOptions { abs_tol: 1e-12, rel_tol: 1e-12, max_intervals: pts.len() + 4000 };
    // evaluation errors surface through this cell; the integrand itself stays total
    let failure = std::cell::RefCell::new(None);
    let r = integrate_with_breaks(
        |t| match traj.state(t) {
            Ok(rho) => trace_re(&h.rate(t), &rho),
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
                0.0
            }
        },
        &pts,
        opts,
    )?;
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    Ok(if from <= to { r.value } else { -r.value })
}

/// `<W>_S`: work done on the freely evolving system over `[t_i, t_f]`.
pub fn average_work_free(h: &dyn Hamiltonian, free: &dyn ReducedTrajectory, schedule: &ProtocolSchedule) -> Result<f64> {
    trace_work(h, free, schedule.t_i(), schedule.t_f())
}

/// `<W~>_S`: the same integral with the measured reduced state.
pub fn average_work_tilde(
    h: &dyn Hamiltonian,
    measured: &dyn ReducedTrajectory,
    schedule: &ProtocolSchedule,
) -> Result<f64> {
    check_resolution(measured, schedule, schedule.t_i(), schedule.t_f())?;
    trace_work(h, measured, schedule.t_i(), schedule.t_f())
}

fn check_resolution(traj: &dyn ReducedTrajectory, schedule: &ProtocolSchedule, from: f64, to: f64) -> Result<()> {
    check_span(traj, from, to)?;
    let limit = MAX_SAMPLE_SPACING * schedule.delta();
    match traj.max_spacing(from, to) {
        Some(gap) if gap > limit * (1.0 + 1e-9) => Err(Error::TrajectoryResolution(format!(
            "sample spacing {gap} exceeds {limit} on [{from}, {to}]"
        ))),
        _ => Ok(()),
    }
}

/// `tr[H(t_b) rho(t_b)] - tr[H(t_a) rho(t_a)]`.
pub fn internal_energy_change(h: &dyn Hamiltonian, traj: &dyn ReducedTrajectory, t_a: f64, t_b: f64) -> Result<f64> {
    if h.dim() != traj.dim() {
        return Err(invalid("trajectory", format!("{}-level trajectory for a {}-level Hamiltonian", traj.dim(), h.dim())));
    }
    check_span(traj, t_a, t_b)?;
    Ok(trace_re(&h.matrix(t_b), &traj.state(t_b)?) - trace_re(&h.matrix(t_a), &traj.state(t_a)?))
}

/// Time intervals used for the work integrals and for the energy changes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntervalConvention {
    /// Work over `[t_i, t_f]`, energies and heats over `[t_p, t_m]`.
    Mixed,
    /// Everything over `[t_i, t_f]`.
    WorkInterval,
    /// Everything over `[t_p, t_m]`.
    FullProtocol,
}

impl IntervalConvention {
    pub fn work_interval(&self, s: &ProtocolSchedule) -> [f64; 2] {
        match self {
            Self::Mixed | Self::WorkInterval => [s.t_i(), s.t_f()],
            Self::FullProtocol => [s.t_p(), s.t_m()],
        }
    }

    pub fn energy_interval(&self, s: &ProtocolSchedule) -> [f64; 2] {
        match self {
            Self::WorkInterval => [s.t_i(), s.t_f()],
            Self::Mixed | Self::FullProtocol => [s.t_p(), s.t_m()],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorkHeatLedger {
    pub convention: IntervalConvention,
    pub work_interval: [f64; 2],
    pub energy_interval: [f64; 2],
    pub w_free: f64,
    pub w_tilde: f64,
    pub w_dist: f64,
    pub du: f64,
    pub du_tilde: f64,
    pub q: f64,
    pub q_tilde: f64,
    pub dw_int: f64,
    pub dw_povm: f64,
    pub dq_int: f64,
}

/// Everything `build_ledger` needs from the engines.
pub struct LedgerInputs<'a> {
    pub hamiltonian: &'a dyn Hamiltonian,
    pub free: &'a dyn ReducedTrajectory,
    pub measured: &'a dyn ReducedTrajectory,
    /// Mean of the measured work distribution.
    pub w_dist: f64,
    pub schedule: ProtocolSchedule,
    pub convention: IntervalConvention,
}

pub fn build_ledger(inputs: &LedgerInputs<'_>) -> Result<WorkHeatLedger> {
    let s = &inputs.schedule;
    let conv = inputs.convention;
    let [wa, wb] = conv.work_interval(s);
    let [ea, eb] = conv.energy_interval(s);
    for (name, traj) in [("free", inputs.free), ("measured", inputs.measured)] {
        let (lo, hi) = traj.span();
        if wa.min(ea) < lo || wb.max(eb) > hi {
            return Err(Error::IntervalMismatch(format!(
                "{name} trajectory spans [{lo}, {hi}] but the {conv:?} convention needs [{}, {}]",
                wa.min(ea),
                wb.max(eb)
            )));
        }
    }
    check_resolution(inputs.measured, s, wa, wb)?;
    let h = inputs.hamiltonian;
    let w_free = trace_work(h, inputs.free, wa, wb)?;
    let w_tilde = trace_work(h, inputs.measured, wa, wb)?;
    let du = internal_energy_change(h, inputs.free, ea, eb)?;
    let du_tilde = internal_energy_change(h, inputs.measured, ea, eb)?;
    let q = du - w_free;
    let q_tilde = du_tilde - w_tilde;
    Ok(WorkHeatLedger {
        convention: conv,
        work_interval: [wa, wb],
        energy_interval: [ea, eb],
        w_free,
        w_tilde,
        w_dist: inputs.w_dist,
        du,
        du_tilde,
        q,
        q_tilde,
        dw_int: w_tilde - w_free,
        dw_povm: inputs.w_dist - w_free,
        dq_int: q_tilde - q,
    })
}
