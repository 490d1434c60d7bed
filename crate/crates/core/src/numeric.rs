//! Momentum-grid solver for the driven qubit coupled to the pointer.
//!
//! Each momentum `p` carries a two-component system amplitude obeying
//! `i c' = p^2/(2m) c + (1 + lambda f(t) p) H(t) c`. The free pointer phase is
//! removed by `c = exp(-i p^2 (t - t_p) / 2m) d`, and outside the window
//! supports every `p` shares one system propagator.

use nalgebra::Vector2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::apparatus::ApparatusSpec;
use crate::distribution::{Engine, WorkDistribution, WorkGrid};
use crate::error::{invalid, Error, Result};
use crate::linalg::{c, commutator, pairwise_sum, Ket2, Mat2, C64, I};
use crate::ode::Dopri5;
use crate::schedule::{ProtocolSchedule, WINDOW_SUPPORT};
use crate::state::SystemState;
use crate::system::DrivenQubit;

const CHUNK: usize = 64;
// amplitudes this far below the peak are carried along the uncoupled path
const NEGLIGIBLE_AMPLITUDE: f64 = 1e-20;
const SYSTEM_RTOL: f64 = 1e-12;
const SYSTEM_ATOL: f64 = 1e-14;

/// Uniform symmetric momentum grid `p_k = -p_max + k dp`, `k = 0..points`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentumGrid {
    points: usize,
    p_max: f64,
}

impl MomentumGrid {
    pub const DEFAULT_POINTS: usize = 4096;
    /// Default extent in units of `sigma_p`.
    pub const DEFAULT_EXTENT: f64 = 8.0;

    pub fn new(points: usize, p_max: f64) -> Result<Self> {
        if points < 3 {
            return Err(invalid("momentum_points", format!("need at least 3 points, got {points}")));
        }
        if !(p_max.is_finite() && p_max > 0.0) {
            return Err(invalid("p_max", format!("must be positive and finite, got {p_max}")));
        }
        Ok(Self { points, p_max })
    }

    pub fn for_apparatus(a: &ApparatusSpec) -> Self {
        Self { points: Self::DEFAULT_POINTS, p_max: Self::DEFAULT_EXTENT * a.sigma_p() }
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn p_max(&self) -> f64 {
        self.p_max
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.p_max / (self.points - 1) as f64
    }

    pub fn momenta(&self) -> Vec<f64> {
        let dp = self.spacing();
        (0..self.points).map(|k| -self.p_max + k as f64 * dp).collect()
    }

    /// Twice the extent at half the spacing.
    pub fn refined(&self) -> Self {
        Self { points: 4 * (self.points - 1) + 1, p_max: 2.0 * self.p_max }
    }

    /// Largest `|W|` that the spacing resolves without aliasing, `pi / (lambda dp)`.
    pub fn alias_free_work(&self, lambda: f64) -> f64 {
        std::f64::consts::PI / (lambda.abs() * self.spacing())
    }

    pub fn check(&self, a: &ApparatusSpec) -> Result<()> {
        if self.p_max < 6.0 * a.sigma_p() {
            return Err(invalid(
                "p_max",
                format!("{} is below 6 sigma_p = {}", self.p_max, 6.0 * a.sigma_p()),
            ));
        }
        Ok(())
    }
}

/// System amplitudes `c_n(t, p_k)` on a momentum grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientField {
    time: f64,
    grid: MomentumGrid,
    amplitudes: Vec<[C64; 2]>,
}

impl CoefficientField {
    pub fn new(time: f64, grid: MomentumGrid, amplitudes: Vec<[C64; 2]>) -> Result<Self> {
        if amplitudes.len() != grid.points() {
            return Err(invalid(
                "amplitudes",
                format!("{} amplitudes for {} grid points", amplitudes.len(), grid.points()),
            ));
        }
        Ok(Self { time, grid, amplitudes })
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn grid(&self) -> &MomentumGrid {
        &self.grid
    }

    pub fn amplitudes(&self) -> &[[C64; 2]] {
        &self.amplitudes
    }

    /// `sum_k dp (|c_0|^2 + |c_1|^2)`
    pub fn norm(&self) -> f64 {
        let terms: Vec<f64> = self.amplitudes.iter().map(|[a, b]| a.norm_sqr() + b.norm_sqr()).collect();
        pairwise_sum(&terms) * self.grid.spacing()
    }

    /// `rho_nm = sum_k dp c_n c_m^*`
    pub fn reduced_state(&self) -> Mat2 {
        let terms: Vec<Mat2> = self
            .amplitudes
            .iter()
            .map(|[a, b]| {
                let v = Ket2::new(*a, *b);
                v * v.adjoint()
            })
            .collect();
        pairwise_sum(&terms) * c(self.grid.spacing(), 0.0)
    }
}

/// Reduced system state read off the joint amplitudes.
pub fn reduced_system_state_numeric(field: &CoefficientField) -> Mat2 {
    field.reduced_state()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Spacing of reduced-state samples; `None` uses `delta / 40`.
    pub sample_step: Option<f64>,
    /// Worker threads; `None` uses the global pool.
    pub threads: Option<usize>,
    /// Largest tolerated `| |u|^2 - 1 |` for any momentum after a solve.
    pub drift_limit: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { rtol: 1e-9, atol: 1e-11, sample_step: None, threads: None, drift_limit: 1e-7 }
    }
}

impl SolverOptions {
    fn validate(&self) -> Result<()> {
        if !(self.rtol > 0.0 && self.atol > 0.0) {
            return Err(invalid("tolerances", format!("rtol {} and atol {} must be positive", self.rtol, self.atol)));
        }
        if let Some(h) = self.sample_step {
            if !(h > 0.0 && h.is_finite()) {
                return Err(invalid("sample_step", format!("must be positive, got {h}")));
            }
        }
        if self.threads == Some(0) {
            return Err(invalid("threads", "need at least one thread"));
        }
        Ok(())
    }
}

/// Reduced state and its time derivative at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReducedSample {
    pub t: f64,
    pub rho: Mat2,
    pub rate: Mat2,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
    /// Largest `| |u|^2 - 1 |` over momenta for the unit system vectors.
    pub max_pointwise_drift: f64,
    pub worst_momentum: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    /// Fields at the window edges that fall in range, ending with the final time.
    pub checkpoints: Vec<CoefficientField>,
    pub samples: Vec<ReducedSample>,
    pub initial_norm: f64,
    pub stats: SolveStats,
}

impl Trajectory {
    pub fn final_field(&self) -> &CoefficientField {
        self.checkpoints.last().expect("trajectory always ends with a checkpoint")
    }

    pub fn checkpoint_at(&self, t: f64) -> Option<&CoefficientField> {
        self.checkpoints.iter().find(|f| (f.time - t).abs() <= 1e-12 * (1.0 + t.abs()))
    }

    pub fn norm_drift(&self) -> f64 {
        (self.final_field().norm() - self.initial_norm).abs()
    }
}

fn system_rhs(q: &DrivenQubit) -> impl Fn(f64, &Ket2) -> Ket2 + '_ {
    move |t, u| -(q.hamiltonian(t) * u) * I
}

/// Evolves a system vector under `H(t)` alone from `t0` to `t1` (either direction).
pub fn system_propagate(q: &DrivenQubit, psi: &Ket2, t0: f64, t1: f64) -> Result<Ket2> {
    let solver = Dopri5::with_tolerances(SYSTEM_RTOL, SYSTEM_ATOL);
    Ok(solver.integrate(system_rhs(q), t0, *psi, &[t1], |_, _, _| {})?.0)
}

/// Propagator `U(t1, t0)` of `H(t)` alone.
pub fn system_propagator(q: &DrivenQubit, t0: f64, t1: f64) -> Result<Mat2> {
    let solver = Dopri5::with_tolerances(SYSTEM_RTOL, SYSTEM_ATOL);
    let rhs = |t: f64, u: &Mat2| -(q.hamiltonian(t) * u) * I;
    Ok(solver.integrate(rhs, t0, Mat2::identity(), &[t1], |_, _, _| {})?.0)
}

fn pure_vector(target: &SystemState) -> Result<Ket2> {
    match target {
        SystemState::Pure(v) if v.len() == 2 => Ok(Ket2::new(v[0], v[1])),
        SystemState::Pure(v) => Err(invalid("state", format!("qubit state needs 2 amplitudes, got {}", v.len()))),
        SystemState::Mixed(_) => Err(invalid("state", "expected a pure state; run mixtures component by component")),
    }
}

/// Product field at `t_p` whose system part would reach `target` at `t_i`
/// under the system Hamiltonian alone.
pub fn prepare_initial_coefficients(
    q: &DrivenQubit,
    target: &SystemState,
    schedule: &ProtocolSchedule,
    a: &ApparatusSpec,
    grid: &MomentumGrid,
) -> Result<CoefficientField> {
    grid.check(a)?;
    let psi_i = pure_vector(target)?;
    let psi_p = system_propagate(q, &psi_i, schedule.t_i(), schedule.t_p())?;
    let t_p = schedule.t_p();
    let amplitudes = grid
        .momenta()
        .iter()
        .map(|&p| {
            let g = a.momentum_amplitude(p, t_p, t_p);
            [psi_p[0] * g, psi_p[1] * g]
        })
        .collect();
    CoefficientField::new(t_p, *grid, amplitudes)
}

fn with_threads<T: Send>(threads: Option<usize>, job: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(job()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| invalid("threads", e.to_string()))?;
            Ok(pool.install(job))
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    lo: f64,
    hi: f64,
    coupled: bool,
}

fn segments(schedule: &ProtocolSchedule, from: f64, to: f64) -> Vec<Segment> {
    let mut out = Vec::new();
    let mut t = from;
    for [lo, hi] in schedule.coupling_intervals(from, to) {
        if lo > t {
            out.push(Segment { lo: t, hi: lo, coupled: false });
        }
        out.push(Segment { lo, hi, coupled: true });
        t = hi;
    }
    if to > t {
        out.push(Segment { lo: t, hi: to, coupled: false });
    }
    out
}

fn event_times(from: f64, to: f64, step: f64, extra: &[f64]) -> Vec<f64> {
    let mut ts: Vec<f64> = Vec::new();
    let n = ((to - from) / step).floor() as usize;
    for k in 0..=n {
        ts.push(from + k as f64 * step);
    }
    ts.extend(extra.iter().copied().filter(|t| *t >= from && *t <= to));
    ts.push(to);
    ts.sort_by(f64::total_cmp);
    let tol = 1e-10 * (1.0 + to.abs());
    ts.dedup_by(|b, a| (*b - *a).abs() <= tol);
    // the deduplication keeps the first of a close pair; pin exact endpoints
    if let Some(last) = ts.last_mut() {
        *last = to;
    }
    ts
}

fn chirp(p: f64, t: f64, t_p: f64, mass: f64) -> C64 {
    C64::from_polar(1.0, -p * p * (t - t_p) / (2.0 * mass))
}

struct ChunkOutput {
    rho: Vec<Mat2>,
    moment: Vec<Mat2>,
    checkpoints: Vec<Vec<Ket2>>,
    finals: Vec<Ket2>,
    stats: SolveStats,
    error: Option<Error>,
}

/// Integrates `field` to `t_end`, sampling the reduced state every
/// `sample_step` and keeping fields at the window edges.
pub fn evolve_coefficients(
    field: &CoefficientField,
    q: &DrivenQubit,
    schedule: &ProtocolSchedule,
    a: &ApparatusSpec,
    t_end: f64,
    opts: &SolverOptions,
) -> Result<Trajectory> {
    opts.validate()?;
    let t0 = field.time;
    let t_p = schedule.t_p();
    if t_end > schedule.t_m() + 1e-12 {
        return Err(invalid("t_end", format!("{t_end} is past the readout time {}", schedule.t_m())));
    }
    if t_end < t0 {
        return Err(invalid("t_end", format!("{t_end} precedes the field time {t0}")));
    }
    let grid = field.grid;
    let momenta = grid.momenta();
    let dp = grid.spacing();
    let lambda = a.lambda();
    let mass = a.mass();

    // interaction picture, split into scale and unit direction
    let mut scales = Vec::with_capacity(momenta.len());
    let mut units = Vec::with_capacity(momenta.len());
    for (p, amp) in momenta.iter().zip(&field.amplitudes) {
        let back = chirp(*p, t0, t_p, mass).conj();
        let d = Ket2::new(amp[0] * back, amp[1] * back);
        let s = d.norm();
        scales.push(s);
        units.push(if s > 0.0 { d / c(s, 0.0) } else { Ket2::zeros() });
    }
    let peak = scales.iter().copied().fold(0.0, f64::max);
    let weights: Vec<f64> = scales.iter().map(|s| dp * s * s).collect();

    let w = WINDOW_SUPPORT * schedule.delta();
    let edges: Vec<f64> = [schedule.t_i() - w, schedule.t_i() + w, schedule.t_f() - w, schedule.t_f() + w]
        .into_iter()
        .map(|t| t.clamp(schedule.t_p(), schedule.t_m()))
        .filter(|t| *t > t0 && *t < t_end)
        .collect();
    let step = opts.sample_step.unwrap_or(schedule.delta() / 40.0);
    let mut extra = edges.clone();
    extra.extend([schedule.t_i(), schedule.t_f()]);
    let events = event_times(t0, t_end, step, &extra);
    let is_checkpoint = |t: f64| edges.iter().any(|e| (e - t).abs() <= 1e-10 * (1.0 + t.abs())) || t == t_end;

    let accumulate = |units: &[Ket2]| {
        let rho: Vec<Mat2> = units.iter().zip(&weights).map(|(u, wt)| u * u.adjoint() * c(*wt, 0.0)).collect();
        let mom: Vec<Mat2> = units
            .iter()
            .zip(&weights)
            .zip(&momenta)
            .map(|((u, wt), p)| u * u.adjoint() * c(wt * p, 0.0))
            .collect();
        (pairwise_sum(&rho), pairwise_sum(&mom))
    };
    let rate = |t: f64, rho: &Mat2, mom: &Mat2, coupled: bool| {
        let h = q.hamiltonian(t);
        let f = if coupled { schedule.sampling_function(t) } else { 0.0 };
        -(commutator(&h, rho) + commutator(&h, mom) * c(lambda * f, 0.0)) * I
    };
    let make_field = |t: f64, units: &[Ket2]| -> Result<CoefficientField> {
        let amps = units
            .iter()
            .zip(&scales)
            .zip(&momenta)
            .map(|((u, s), p)| {
                let ph = chirp(*p, t, t_p, mass) * s;
                [u[0] * ph, u[1] * ph]
            })
            .collect();
        CoefficientField::new(t, grid, amps)
    };

    let (mut rho, mut mom) = accumulate(&units);
    let initial_norm = field.norm();
    let mut samples = vec![ReducedSample { t: t0, rho, rate: rate(t0, &rho, &mom, false) }];
    let mut checkpoints = Vec::new();
    let mut stats = SolveStats::default();

    for seg in segments(schedule, t0, t_end) {
        let stops: Vec<f64> = events.iter().copied().filter(|t| *t > seg.lo && *t <= seg.hi).collect();
        if stops.is_empty() {
            continue;
        }
        if !seg.coupled {
            let solver = Dopri5::with_tolerances(SYSTEM_RTOL, SYSTEM_ATOL);
            let rhs = |t: f64, u: &Mat2| -(q.hamiltonian(t) * u) * I;
            let (rho0, mom0) = (rho, mom);
            let mut props = Vec::with_capacity(stops.len());
            let (_, st) = solver.integrate(rhs, seg.lo, Mat2::identity(), &stops, |_, _, u| props.push(*u))?;
            stats.accepted += st.accepted;
            stats.rejected += st.rejected;
            stats.evaluations += st.evaluations;
            for (t, u) in stops.iter().zip(&props) {
                rho = u * rho0 * u.adjoint();
                mom = u * mom0 * u.adjoint();
                samples.push(ReducedSample { t: *t, rho, rate: rate(*t, &rho, &mom, false) });
                if is_checkpoint(*t) {
                    let moved: Vec<Ket2> = units.iter().map(|v| u * v).collect();
                    checkpoints.push(make_field(*t, &moved)?);
                }
            }
            let last = props.last().expect("non-empty stops");
            for v in &mut units {
                *v = last * *v;
            }
            continue;
        }

        let checkpoint_idx: Vec<usize> = (0..stops.len()).filter(|&k| is_checkpoint(stops[k])).collect();
        let solver = Dopri5::with_tolerances(opts.rtol, opts.atol);
        let chunk_ids: Vec<usize> = (0..momenta.len().div_ceil(CHUNK)).collect();
        let outputs: Vec<ChunkOutput> = with_threads(opts.threads, || {
            chunk_ids
                .par_iter()
                .map(|&ci| {
                    let range = ci * CHUNK..((ci + 1) * CHUNK).min(momenta.len());
                    let mut out = ChunkOutput {
                        rho: vec![Mat2::zeros(); stops.len()],
                        moment: vec![Mat2::zeros(); stops.len()],
                        checkpoints: vec![Vec::with_capacity(range.len()); checkpoint_idx.len()],
                        finals: Vec::with_capacity(range.len()),
                        stats: SolveStats::default(),
                        error: None,
                    };
                    for k in range {
                        let p = momenta[k];
                        let wt = weights[k];
                        let u0 = units[k];
                        let coupled_path = scales[k] > NEGLIGIBLE_AMPLITUDE * peak;
                        let rhs = |t: f64, u: &Ket2| {
                            let gain = if coupled_path { 1.0 + lambda * schedule.sampling_function(t) * p } else { 1.0 };
                            -(q.hamiltonian(t) * u) * c(0.0, gain)
                        };
                        let mut ck = 0;
                        let result = solver.integrate(rhs, seg.lo, u0, &stops, |idx, _, u| {
                            let proj = u * u.adjoint();
                            out.rho[idx] += proj * c(wt, 0.0);
                            out.moment[idx] += proj * c(wt * p, 0.0);
                            if ck < checkpoint_idx.len() && checkpoint_idx[ck] == idx {
                                out.checkpoints[ck].push(*u);
                                ck += 1;
                            }
                        });
                        match result {
                            Ok((u, st)) => {
                                out.finals.push(u);
                                out.stats.accepted += st.accepted;
                                out.stats.rejected += st.rejected;
                                out.stats.evaluations += st.evaluations;
                                let drift = if scales[k] > 0.0 { (u.norm_squared() - 1.0).abs() } else { 0.0 };
                                if drift > out.stats.max_pointwise_drift {
                                    out.stats.max_pointwise_drift = drift;
                                    out.stats.worst_momentum = p;
                                }
                            }
                            Err(e) => {
                                out.error = Some(Error::SolverTolerance { p, detail: e.to_string() });
                                break;
                            }
                        }
                    }
                    out
                })
                .collect()
        })?;

        for out in &outputs {
            if let Some(e) = &out.error {
                return Err(e.clone());
            }
        }
        for (idx, t) in stops.iter().enumerate() {
            let r: Vec<Mat2> = outputs.iter().map(|o| o.rho[idx]).collect();
            let m: Vec<Mat2> = outputs.iter().map(|o| o.moment[idx]).collect();
            rho = pairwise_sum(&r);
            mom = pairwise_sum(&m);
            samples.push(ReducedSample { t: *t, rho, rate: rate(*t, &rho, &mom, true) });
        }
        for (ck, &idx) in checkpoint_idx.iter().enumerate() {
            let moved: Vec<Ket2> = outputs.iter().flat_map(|o| o.checkpoints[ck].iter().copied()).collect();
            checkpoints.push(make_field(stops[idx], &moved)?);
        }
        units = outputs.iter().flat_map(|o| o.finals.iter().copied()).collect();
        for out in &outputs {
            stats.accepted += out.stats.accepted;
            stats.rejected += out.stats.rejected;
            stats.evaluations += out.stats.evaluations;
            if out.stats.max_pointwise_drift > stats.max_pointwise_drift {
                stats.max_pointwise_drift = out.stats.max_pointwise_drift;
                stats.worst_momentum = out.stats.worst_momentum;
            }
        }
        if stats.max_pointwise_drift > opts.drift_limit {
            return Err(Error::SolverTolerance {
                p: stats.worst_momentum,
                detail: format!("norm drift {:e} exceeds {:e}", stats.max_pointwise_drift, opts.drift_limit),
            });
        }
    }

    if checkpoints.last().map(|f| f.time) != Some(t_end) {
        checkpoints.push(make_field(t_end, &units)?);
    }
    Ok(Trajectory { checkpoints, samples, initial_norm, stats })
}

/// `P(W, t) = (lambda / 2 pi) sum_n |sum_k dp c_n(p_k) exp(i lambda W p_k)|^2`.
pub fn work_distribution_numeric(field: &CoefficientField, a: &ApparatusSpec, grid: &WorkGrid) -> Result<WorkDistribution> {
    let momenta = field.grid.momenta();
    let dp = field.grid.spacing();
    let lambda = a.lambda();
    let amps = &field.amplitudes;
    let work = grid.values();
    let density: Vec<f64> = work
        .par_iter()
        .map(|&w| {
            let k = lambda * w;
            let step = C64::from_polar(1.0, k * dp);
            let mut acc = [C64::new(0.0, 0.0); 2];
            let mut phase = C64::new(1.0, 0.0);
            for (j, (p, amp)) in momenta.iter().zip(amps).enumerate() {
                // resynchronise the recurrence to keep the phase exact
                if j % 64 == 0 {
                    phase = C64::from_polar(1.0, k * p);
                }
                acc[0] += amp[0] * phase;
                acc[1] += amp[1] * phase;
                phase *= step;
            }
            lambda.abs() / (2.0 * std::f64::consts::PI) * dp * dp * (acc[0].norm_sqr() + acc[1].norm_sqr())
        })
        .collect();

    let mut d = WorkDistribution::new(work, density, field.time, Engine::Numeric)?
        .with_parameter("momentum_points", field.grid.points() as f64)
        .with_parameter("p_max", field.grid.p_max())
        .with_parameter("mass", a.mass())
        .with_parameter("sigma_p", a.sigma_p())
        .with_parameter("lambda", lambda);

    let limit = field.grid.alias_free_work(lambda);
    if grid.start().abs().max(grid.end().abs()) > limit {
        d.warnings.push(format!(
            "work grid reaches |W| = {} beyond the alias-free range {limit}",
            grid.start().abs().max(grid.end().abs())
        ));
    }
    let peak = amps.iter().map(|[x, y]| x.norm().max(y.norm())).fold(0.0, f64::max);
    let edge = [amps[0], amps[amps.len() - 1]]
        .iter()
        .map(|[x, y]| x.norm().max(y.norm()))
        .fold(0.0, f64::max);
    if edge > 1e-8 * peak {
        d.warnings.push(format!("amplitude at the momentum grid edge is {:e} of the peak", edge / peak));
    }
    Ok(d)
}

/// Runs one pure target state from `t_p` to `t`.
pub fn run_pure(
    q: &DrivenQubit,
    target: &SystemState,
    schedule: &ProtocolSchedule,
    a: &ApparatusSpec,
    grid: &MomentumGrid,
    t: f64,
    opts: &SolverOptions,
) -> Result<Trajectory> {
    let field = prepare_initial_coefficients(q, target, schedule, a, grid)?;
    evolve_coefficients(&field, q, schedule, a, t, opts)
}

/// Runs every pure component of `target` (its eigen-decomposition when mixed).
pub fn run_state(
    q: &DrivenQubit,
    target: &SystemState,
    schedule: &ProtocolSchedule,
    a: &ApparatusSpec,
    grid: &MomentumGrid,
    t: f64,
    opts: &SolverOptions,
) -> Result<Vec<(f64, Trajectory)>> {
    if target.dim() != 2 {
        return Err(invalid("state", format!("qubit state needs dimension 2, got {}", target.dim())));
    }
    target
        .pure_components()
        .into_iter()
        .map(|(w, v)| Ok((w, run_pure(q, &SystemState::Pure(v), schedule, a, grid, t, opts)?)))
        .collect()
}

/// Convex combination of pure-state distributions read out at `t`.
#[allow(clippy::too_many_arguments)]
pub fn mixed_state_distribution(
    q: &DrivenQubit,
    components: &[(f64, SystemState)],
    schedule: &ProtocolSchedule,
    a: &ApparatusSpec,
    t: f64,
    momentum: &MomentumGrid,
    work: &WorkGrid,
    opts: &SolverOptions,
) -> Result<WorkDistribution> {
    let dists: Vec<WorkDistribution> = components
        .iter()
        .map(|(_, s)| {
            let traj = run_pure(q, s, schedule, a, momentum, t, opts)?;
            work_distribution_numeric(traj.final_field(), a, work)
        })
        .collect::<Result<_>>()?;
    let parts: Vec<(f64, &WorkDistribution)> = components.iter().map(|(w, _)| *w).zip(&dists).collect();
    WorkDistribution::convex_combination(&parts)
}

/// Unit vector `alpha |0> + beta |1>` as a nalgebra column.
pub fn ket(alpha: C64, beta: C64) -> Ket2 {
    Vector2::new(alpha, beta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic;
    use crate::system::SpectralSystem;
    use approx::assert_relative_eq;

    fn small_grid(a: &ApparatusSpec) -> MomentumGrid {
        MomentumGrid::new(513, 8.0 * a.sigma_p()).unwrap()
    }

    fn half() -> f64 {
        0.5f64.sqrt()
    }

    #[test]
    fn grid_geometry() {
        let g = MomentumGrid::new(5, 2.0).unwrap();
        assert_eq!(g.momenta(), vec![-2.0, -1.0, 0.0, 1.0, 2.0]);
        let r = MomentumGrid::new(9, 2.0).unwrap().refined();
        assert_eq!(r.points(), 33);
        assert_relative_eq!(r.spacing(), 0.25, epsilon = 1e-15);
        assert!(MomentumGrid::new(2, 1.0).is_err());
        let a = ApparatusSpec::figure_default();
        assert!(MomentumGrid::new(64, 5.0 * a.sigma_p()).unwrap().check(&a).is_err());
    }

    #[test]
    fn initial_field_for_aligned_drive() {
        // theta = 0: backward evolution from t_i = 2 to t_p = 0 only adds phases
        // exp(+-i (t_i^2 - t_p^2) / 2)
        let q = DrivenQubit::figure_default(0.0).unwrap();
        let s = ProtocolSchedule::figure_default();
        let a = ApparatusSpec::figure_default();
        let grid = small_grid(&a);
        let (al, be) = (c(0.6, 0.0), c(0.0, 0.8));
        let field = prepare_initial_coefficients(&q, &SystemState::qubit(al, be).unwrap(), &s, &a, &grid).unwrap();
        assert!((field.norm() - 1.0).abs() < 1e-10);
        let mid = grid.points() / 2;
        let g0 = a.momentum_amplitude(0.0, 0.0, 0.0);
        let [c0, c1] = field.amplitudes()[mid];
        assert_relative_eq!(c0.re, 0.6 * g0.re * 2.0f64.cos(), epsilon = 1e-10);
        assert_relative_eq!(c0.im, 0.6 * g0.re * 2.0f64.sin(), epsilon = 1e-10);
        assert_relative_eq!(c1.norm(), 0.8 * g0.re, epsilon = 1e-12);
        assert!(prepare_initial_coefficients(&q, &SystemState::diagonal(&[0.5, 0.5]).unwrap(), &s, &a, &grid).is_err());
    }

    #[test]
    fn system_round_trip() {
        let q = DrivenQubit::figure_default(1.1).unwrap();
        let psi = ket(c(0.6, 0.0), c(0.0, 0.8));
        let back = system_propagate(&q, &psi, 2.0, 0.0).unwrap();
        let fwd = system_propagate(&q, &back, 0.0, 2.0).unwrap();
        assert!((fwd - psi).norm() < 1e-8);
        let u = system_propagator(&q, 0.0, 2.0).unwrap();
        assert!((u * back - psi).norm() < 1e-8);
        assert!((u.adjoint() * u - Mat2::identity()).norm() < 1e-9);
    }

    #[test]
    fn segments_cover_the_range() {
        let s = ProtocolSchedule::new(0.0, 1.0, 3.0, 4.0, 0.1).unwrap();
        let segs = segments(&s, 0.0, 4.0);
        let kinds: Vec<bool> = segs.iter().map(|g| g.coupled).collect();
        assert_eq!(kinds, vec![false, true, false, true, false]);
        assert_eq!(segs[0].lo, 0.0);
        assert_eq!(segs[4].hi, 4.0);
        for w in segs.windows(2) {
            assert_eq!(w[0].hi, w[1].lo);
        }
        let ev = event_times(0.0, 4.0, 0.3, &[0.4, 3.6]);
        assert_eq!(ev[0], 0.0);
        assert_eq!(*ev.last().unwrap(), 4.0);
        assert!(ev.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn aligned_eigenstate_keeps_its_populations() {
        let q = DrivenQubit::figure_default(0.0).unwrap();
        let s = ProtocolSchedule::figure_default();
        let a = ApparatusSpec::figure_default();
        let grid = small_grid(&a);
        let traj = run_pure(&q, &SystemState::basis(0, 2).unwrap(), &s, &a, &grid, s.t_m(), &SolverOptions::default()).unwrap();
        let field = traj.final_field();
        let start = prepare_initial_coefficients(&q, &SystemState::basis(0, 2).unwrap(), &s, &a, &grid).unwrap();
        for (x, y) in field.amplitudes().iter().zip(start.amplitudes()) {
            assert!((x[0].norm() - y[0].norm()).abs() < 1e-9);
            assert!(x[1].norm() < 1e-12);
        }
        assert!(traj.norm_drift() < 1e-8);
        for smp in &traj.samples {
            assert!((smp.rho[(0, 0)].re - 1.0).abs() < 1e-9);
        }
        // checkpoints at the window edges and the end
        assert!(traj.checkpoint_at(0.8).is_some());
        assert!(traj.checkpoint_at(4.0).is_some());
        assert!(traj.checkpoint_at(2.0 + 1.2).is_some());
    }

    #[test]
    fn aligned_drive_matches_closed_form() {
        let q = DrivenQubit::figure_default(0.0).unwrap();
        let s = ProtocolSchedule::figure_default();
        let a = ApparatusSpec::figure_default();
        let grid = MomentumGrid::new(1025, 8.0 * a.sigma_p()).unwrap();
        let h = half();
        let target = SystemState::qubit(c(h, 0.0), c(h, 0.0)).unwrap();
        let traj = run_pure(&q, &target, &s, &a, &grid, s.t_m(), &SolverOptions::default()).unwrap();
        let sys = q.aligned_spectrum().unwrap();
        let centers = analytic::work_centers(&sys, &s).unwrap();
        let wgrid = WorkGrid::new(-6.0, 6.0, 801).unwrap();
        let num = work_distribution_numeric(traj.final_field(), &a, &wgrid).unwrap();
        let ana = analytic::work_distribution(&sys, &[0.5, 0.5], &s, &a, s.t_m(), &wgrid).unwrap();
        assert!(num.max_abs_diff(&ana).unwrap() < 1e-4, "{}", num.max_abs_diff(&ana).unwrap());
        assert_relative_eq!(centers[0], 1.0, epsilon = 1e-10);
        assert!(num.warnings.is_empty(), "{:?}", num.warnings);

        // coherence damped by the closed-form decoherence factor
        let rho_num = traj.final_field().reduced_state();
        let rho0 = nalgebra::DMatrix::from_element(2, 2, c(0.5, 0.0));
        let free = analytic::free_state(&sys, &rho0, s.t_i(), s.t_m()).unwrap();
        let rho_ana = analytic::reduced_system_state(&sys, &free, &s, &a, s.t_m()).unwrap();
        assert!((rho_num[(0, 1)] - rho_ana[(0, 1)]).norm() < 1e-4);
    }

    #[test]
    fn interaction_off_gives_free_pointer() {
        // t_i = t_f makes f vanish identically
        let q = DrivenQubit::figure_default(0.9).unwrap();
        let s = ProtocolSchedule::new(0.0, 2.5, 2.5, 4.0, 0.2).unwrap();
        let a = ApparatusSpec::new(3.0, 1.0, 1.0).unwrap();
        let grid = MomentumGrid::new(1025, 10.0).unwrap();
        let traj = run_pure(&q, &SystemState::basis(1, 2).unwrap(), &s, &a, &grid, 4.0, &SolverOptions::default()).unwrap();
        let wgrid = WorkGrid::new(-8.0, 8.0, 401).unwrap();
        let num = work_distribution_numeric(traj.final_field(), &a, &wgrid).unwrap();
        let width = a.sigma_width(4.0, 0.0);
        for (w, p) in num.work.iter().zip(&num.density) {
            let expected = (-(w / width).powi(2)).exp() / (std::f64::consts::PI.sqrt() * width);
            assert!((p - expected).abs() < 1e-10);
        }
    }

    #[test]
    fn results_do_not_depend_on_thread_count() {
        let q = DrivenQubit::figure_default(std::f64::consts::FRAC_PI_2).unwrap();
        let s = ProtocolSchedule::figure_default();
        let a = ApparatusSpec::figure_default();
        let grid = MomentumGrid::new(257, 8.0 * a.sigma_p()).unwrap();
        let target = SystemState::basis(0, 2).unwrap();
        let one = SolverOptions { threads: Some(1), ..SolverOptions::default() };
        let four = SolverOptions { threads: Some(4), ..SolverOptions::default() };
        let x = run_pure(&q, &target, &s, &a, &grid, 4.0, &one).unwrap();
        let y = run_pure(&q, &target, &s, &a, &grid, 4.0, &four).unwrap();
        assert_eq!(x.final_field(), y.final_field());
        assert_eq!(x.samples, y.samples);
    }

    #[test]
    fn mixture_weights_select_components() {
        let q = DrivenQubit::figure_default(0.0).unwrap();
        let s = ProtocolSchedule::figure_default();
        let a = ApparatusSpec::figure_default();
        let grid = MomentumGrid::new(513, 8.0 * a.sigma_p()).unwrap();
        let wgrid = WorkGrid::new(-4.0, 4.0, 401).unwrap();
        let opts = SolverOptions::default();
        let up = SystemState::basis(0, 2).unwrap();
        let down = SystemState::basis(1, 2).unwrap();
        let pure = mixed_state_distribution(&q, &[(1.0, up.clone())], &s, &a, 4.0, &grid, &wgrid, &opts).unwrap();
        let weighted = mixed_state_distribution(&q, &[(1.0, up.clone()), (0.0, down.clone())], &s, &a, 4.0, &grid, &wgrid, &opts).unwrap();
        assert_eq!(pure.density, weighted.density);
        let even = mixed_state_distribution(&q, &[(0.5, up), (0.5, down)], &s, &a, 4.0, &grid, &wgrid, &opts).unwrap();
        assert!((even.mass_between(0.0, 4.0) - 0.5).abs() < 1e-4);
        let sys = SpectralSystem::polynomial(vec![vec![0.0, 1.0], vec![0.0, -1.0]]).unwrap();
        let ana = analytic::work_distribution(&sys, &[0.5, 0.5], &s, &a, 4.0, &wgrid).unwrap();
        assert!(even.max_abs_diff(&ana).unwrap() < 1e-4);
    }
}
