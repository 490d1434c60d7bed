//! Closed forms for self-commuting Hamiltonians: Gaussian-mixture work
//! densities, thermal averages, fluctuation relations and the reduced state.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::apparatus::ApparatusSpec;
use crate::distribution::{Engine, WorkDistribution, WorkGrid};
use crate::error::{invalid, Error, Result};
use crate::linalg::{c, C64};
use crate::quadrature::{integrate_with_breaks, QuadOptions};
use crate::schedule::ProtocolSchedule;
use crate::state::{check_probabilities, validate_density};
use crate::system::SpectralSystem;

const SQRT_PI: f64 = 1.772_453_850_905_516;

/// Grid padding in units of the peak width.
pub const GRID_PAD: f64 = 8.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermalSpec {
    beta: f64,
}

impl ThermalSpec {
    /// `beta = 0` is accepted and yields uniform weights.
    pub fn new(beta: f64) -> Result<Self> {
        if !beta.is_finite() || beta < 0.0 {
            return Err(invalid("beta", format!("must be finite and non-negative, got {beta}")));
        }
        Ok(Self { beta })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }
}

/// Forward readout at `time`, backward readout at `t_m - time`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrooksPair {
    time: f64,
    schedule: ProtocolSchedule,
}

impl CrooksPair {
    pub fn new(time: f64, schedule: ProtocolSchedule) -> Result<Self> {
        if !(time >= schedule.t_p() && time <= schedule.t_m()) {
            return Err(invalid(
                "time",
                format!("must lie in [{}, {}], got {time}", schedule.t_p(), schedule.t_m()),
            ));
        }
        Ok(Self { time, schedule })
    }

    pub fn forward_time(&self) -> f64 {
        self.time
    }

    pub fn backward_time(&self) -> f64 {
        self.schedule.t_m() - self.time
    }

    pub fn schedule(&self) -> &ProtocolSchedule {
        &self.schedule
    }
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let top = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if top == f64::NEG_INFINITY {
        return top;
    }
    top + xs.iter().map(|x| (x - top).exp()).sum::<f64>().ln()
}

fn quad_opts() -> QuadOptions {
    QuadOptions { abs_tol: 1e-10, rel_tol: 1e-13, max_intervals: 4000 }
}

/// `int f(t) g(t) dt` over the window supports inside `[from, to]`, split at
/// the window centres.
pub fn coupled_integral<G: Fn(f64) -> f64>(schedule: &ProtocolSchedule, from: f64, to: f64, g: G) -> Result<f64> {
    let mut total = 0.0;
    for [lo, hi] in schedule.coupling_intervals(from, to) {
        let mut pts = vec![lo];
        for mid in [schedule.t_i(), schedule.t_f()] {
            if mid > lo && mid < hi && mid > *pts.last().unwrap() {
                pts.push(mid);
            }
        }
        pts.push(hi);
        let r = integrate_with_breaks(|t| schedule.sampling_function(t) * g(t), &pts, quad_opts())?;
        total += r.value;
    }
    Ok(total)
}

fn check_level(sys: &SpectralSystem, n: usize) -> Result<()> {
    if n >= sys.dim() {
        return Err(invalid("level", format!("index {n} out of range for dimension {}", sys.dim())));
    }
    Ok(())
}

fn check_diag(sys: &SpectralSystem, diag: &[f64]) -> Result<()> {
    check_probabilities(diag)?;
    if diag.len() != sys.dim() {
        return Err(invalid(
            "populations",
            format!("{} populations for a {}-level system", diag.len(), sys.dim()),
        ));
    }
    Ok(())
}

/// Centre of the `n`-th peak, `int_{t_p}^{t_m} f(t) E_n(t) dt`.
pub fn work_center(sys: &SpectralSystem, schedule: &ProtocolSchedule, n: usize) -> Result<f64> {
    check_level(sys, n)?;
    let level = sys.level(n);
    coupled_integral(schedule, schedule.t_p(), schedule.t_m(), |t| level.energy(t))
}

pub fn work_centers(sys: &SpectralSystem, schedule: &ProtocolSchedule) -> Result<Vec<f64>> {
    (0..sys.dim()).map(|n| work_center(sys, schedule, n)).collect()
}

/// Partial coupling integral `int_{t_p}^{t} f E_n`, the pointer displacement
/// accumulated by level `n` up to `t`.
pub fn partial_center(sys: &SpectralSystem, schedule: &ProtocolSchedule, n: usize, t: f64) -> Result<f64> {
    check_level(sys, n)?;
    let level = sys.level(n);
    coupled_integral(schedule, schedule.t_p(), t.min(schedule.t_m()), |s| level.energy(s))
}

/// Default grid: `[min centre - 8 Sigma, max centre + 8 Sigma]` with 4096 points.
pub fn default_grid(centers: &[f64], width: f64) -> Result<WorkGrid> {
    WorkGrid::covering(centers, width, GRID_PAD, WorkGrid::DEFAULT_POINTS)
}

fn mixture_density(weights: &[f64], centers: &[f64], width: f64, w: f64) -> f64 {
    weights
        .iter()
        .zip(centers)
        .map(|(p, c)| {
            let x = (w - c) / width;
            p * (-x * x).exp()
        })
        .sum::<f64>()
        / (SQRT_PI * width)
}

fn annotate(d: WorkDistribution, schedule: &ProtocolSchedule, a: &ApparatusSpec) -> WorkDistribution {
    d.with_parameter("t_p", schedule.t_p())
        .with_parameter("t_i", schedule.t_i())
        .with_parameter("t_f", schedule.t_f())
        .with_parameter("t_m", schedule.t_m())
        .with_parameter("delta", schedule.delta())
        .with_parameter("mass", a.mass())
        .with_parameter("sigma_p", a.sigma_p())
        .with_parameter("lambda", a.lambda())
}

fn mixture(
    weights: &[f64],
    centers: &[f64],
    schedule: &ProtocolSchedule,
    a: &ApparatusSpec,
    t: f64,
    grid: &WorkGrid,
) -> Result<WorkDistribution> {
    if t < schedule.t_p() {
        return Err(invalid("time", format!("readout time {t} precedes pointer preparation {}", schedule.t_p())));
    }
    let width = a.sigma_width(t, schedule.t_p());
    let work = grid.values();
    let density = work.iter().map(|&w| mixture_density(weights, centers, width, w)).collect();
    let d = WorkDistribution::new(work, density, t, Engine::Analytic)?;
    Ok(annotate(d, schedule, a).with_parameter("sigma", width))
}

/// Gaussian mixture `P(W, t) = sum_n p_n exp(-(W - c_n)^2 / Sigma(t)^2) / (sqrt(pi) Sigma(t))`.
pub fn work_distribution(
    sys: &SpectralSystem,
    diag: &[f64],
    schedule: &ProtocolSchedule,
    a: &ApparatusSpec,
    t: f64,
    grid: &WorkGrid,
) -> Result<WorkDistribution> {
    check_diag(sys, diag)?;
    let centers = work_centers(sys, schedule)?;
    mixture(diag, &centers, schedule, a, t, grid)
}

pub fn average_work_dist(sys: &SpectralSystem, diag: &[f64], schedule: &ProtocolSchedule) -> Result<f64> {
    check_diag(sys, diag)?;
    let centers = work_centers(sys, schedule)?;
    Ok(diag.iter().zip(&centers).map(|(p, c)| p * c).sum())
}

/// `ln Z(t)`, `Z = sum_n exp(-beta E_n(t))`.
pub fn log_partition_function(sys: &SpectralSystem, th: &ThermalSpec, t: f64) -> f64 {
    let xs: Vec<f64> = sys.energies(t).iter().map(|e| -th.beta * e).collect();
    log_sum_exp(&xs)
}

pub fn partition_function(sys: &SpectralSystem, th: &ThermalSpec, t: f64) -> f64 {
    log_partition_function(sys, th, t).exp()
}

/// `Delta F = -(1/beta) ln(Z(t_f) / Z(t_i))`. At `beta = 0` this is the
/// limit `sum_n (E_n(t_f) - E_n(t_i)) / N`.
pub fn free_energy_change(sys: &SpectralSystem, th: &ThermalSpec, schedule: &ProtocolSchedule) -> f64 {
    if th.beta == 0.0 {
        let ei = sys.energies(schedule.t_i());
        let ef = sys.energies(schedule.t_f());
        return ef.iter().zip(&ei).map(|(f, i)| f - i).sum::<f64>() / sys.dim() as f64;
    }
    -(log_partition_function(sys, th, schedule.t_f()) - log_partition_function(sys, th, schedule.t_i())) / th.beta
}

/// Gibbs populations at time `t`.
pub fn thermal_weights(sys: &SpectralSystem, th: &ThermalSpec, t: f64) -> Vec<f64> {
    let log_z = log_partition_function(sys, th, t);
    sys.energies(t).iter().map(|e| (-th.beta * e - log_z).exp()).collect()
}

pub fn thermal_work_distribution(
    sys: &SpectralSystem,
    th: &ThermalSpec,
    schedule: &ProtocolSchedule,
    a: &ApparatusSpec,
    t: f64,
    grid: &WorkGrid,
) -> Result<WorkDistribution> {
    let weights = thermal_weights(sys, th, schedule.t_i());
    let centers = work_centers(sys, schedule)?;
    Ok(mixture(&weights, &centers, schedule, a, t, grid)?.with_parameter("beta", th.beta))
}

/// Ratio `P_F(W, t) / P_B(-W, t_m - t)` for thermal preparations, with the
/// backward peaks centred at `-int_{t_m}^{t_p} f(t_m - s) E_n(t_m - s) ds`.
pub fn crooks_ratio(
    sys: &SpectralSystem,
    th: &ThermalSpec,
    pair: &CrooksPair,
    a: &ApparatusSpec,
    w: f64,
) -> Result<f64> {
    let s = pair.schedule();
    let t_p = s.t_p();
    let fwd_width = a.sigma_width(pair.forward_time(), t_p);
    let bwd_width = a.sigma_width(pair.backward_time(), t_p);
    let fwd_centers = work_centers(sys, s)?;
    let bwd_shift = backward_shifts(sys, s)?;

    let beta = th.beta;
    let ei = sys.energies(s.t_i());
    let ef = sys.energies(s.t_f());
    let num: Vec<f64> = ei
        .iter()
        .zip(&fwd_centers)
        .map(|(e, c)| -beta * e - ((w - c) / fwd_width).powi(2))
        .collect();
    let den: Vec<f64> = ef
        .iter()
        .zip(&bwd_shift)
        .map(|(e, b)| -beta * e - ((w + b) / bwd_width).powi(2))
        .collect();
    let log_num = log_sum_exp(&num);
    let log_den = log_sum_exp(&den);

    let log_z_i = log_partition_function(sys, th, s.t_i());
    let log_z_f = log_partition_function(sys, th, s.t_f());
    // backward density itself, to detect evaluation where it has underflowed
    let log_bwd_density = log_den - log_z_f - (SQRT_PI * bwd_width).ln();
    if !(log_bwd_density > f64::MIN_POSITIVE.ln()) {
        return Err(Error::OutOfSupport { w });
    }
    let log_ratio = (bwd_width / fwd_width).ln() + log_z_f - log_z_i + log_num - log_den;
    let ratio = log_ratio.exp();
    if !ratio.is_finite() {
        return Err(Error::OutOfSupport { w });
    }
    Ok(ratio)
}

/// `int_{t_m}^{t_p} f(t_m - s) E_n(t_m - s) ds`, one value per level.
fn backward_shifts(sys: &SpectralSystem, s: &ProtocolSchedule) -> Result<Vec<f64>> {
    let (t_p, t_m) = (s.t_p(), s.t_m());
    // substituting u = t_m - s maps the integral onto -int_0^{t_m - t_p} f(u) E_n(u) du
    let (lo, hi) = (0.0_f64.max(t_p), t_m - t_p);
    (0..sys.dim())
        .map(|n| {
            let level = sys.level(n);
            if hi <= lo {
                return Ok(0.0);
            }
            let inner = coupled_integral(s, lo, hi, |u| level.energy(u))?;
            // the part of [0, t_m - t_p] below t_p lies outside the schedule's window supports
            let below = if t_p > 0.0 {
                let pts = [0.0, t_p.min(hi)];
                integrate_with_breaks(|u| s.sampling_function(u) * level.energy(u), &pts, quad_opts())?.value
            } else {
                0.0
            };
            Ok(-(inner + below))
        })
        .collect()
}

/// `<exp(-beta W)>` of the thermal distribution read out at `t_m`.
pub fn modified_jarzynski(
    sys: &SpectralSystem,
    th: &ThermalSpec,
    schedule: &ProtocolSchedule,
    a: &ApparatusSpec,
) -> Result<f64> {
    Ok(log_modified_jarzynski(sys, th, schedule, a)?.exp())
}

pub fn log_modified_jarzynski(
    sys: &SpectralSystem,
    th: &ThermalSpec,
    schedule: &ProtocolSchedule,
    a: &ApparatusSpec,
) -> Result<f64> {
    let width = a.sigma_width(schedule.t_m(), schedule.t_p());
    let b = th.beta;
    Ok(b * b * width * width / 4.0 - log_partition_function(sys, th, schedule.t_i()) + log_shifted_sum(sys, th, schedule)?)
}

/// `ln sum_n exp(-beta (E_n(t_i) + c_n))`
fn log_shifted_sum(sys: &SpectralSystem, th: &ThermalSpec, schedule: &ProtocolSchedule) -> Result<f64> {
    let centers = work_centers(sys, schedule)?;
    let xs: Vec<f64> = sys
        .energies(schedule.t_i())
        .iter()
        .zip(&centers)
        .map(|(e, c)| -th.beta * (e + c))
        .collect();
    Ok(log_sum_exp(&xs))
}

/// Thermal `<W>_dist` and its lower bound
/// `-(1/beta) ln(sum_n exp(-beta (E_n(t_i) + c_n)) / Z(t_i)) - beta Sigma(t_m)^2 / 4`.
pub fn second_law_bound(
    sys: &SpectralSystem,
    th: &ThermalSpec,
    schedule: &ProtocolSchedule,
    a: &ApparatusSpec,
) -> Result<(f64, f64)> {
    if th.beta == 0.0 {
        return Err(invalid("beta", "the bound needs a positive inverse temperature"));
    }
    let weights = thermal_weights(sys, th, schedule.t_i());
    let lhs = average_work_dist(sys, &weights, schedule)?;
    let width = a.sigma_width(schedule.t_m(), schedule.t_p());
    let log_mean = log_shifted_sum(sys, th, schedule)? - log_partition_function(sys, th, schedule.t_i());
    let rhs = -log_mean / th.beta - th.beta * width * width / 4.0;
    Ok((lhs, rhs))
}

/// Applies the pointer-induced decoherence to a state evolved under the
/// system Hamiltonian alone: element `(n, m)` is multiplied by
/// `exp(-lambda^2 (k_n - k_m)^2 sigma_p^2 / 4)` with `k_n = int_{t_p}^{t} f E_n`.
pub fn reduced_system_state(
    sys: &SpectralSystem,
    rho_full: &DMatrix<C64>,
    schedule: &ProtocolSchedule,
    a: &ApparatusSpec,
    t: f64,
) -> Result<DMatrix<C64>> {
    validate_density(rho_full)?;
    if rho_full.nrows() != sys.dim() {
        return Err(invalid("rho", format!("{}x{} state for a {}-level system", rho_full.nrows(), rho_full.ncols(), sys.dim())));
    }
    let shifts: Vec<f64> = (0..sys.dim()).map(|n| partial_center(sys, schedule, n, t)).collect::<Result<_>>()?;
    let scale = a.lambda() * a.sigma_p();
    Ok(DMatrix::from_fn(sys.dim(), sys.dim(), |r, col| {
        let d = scale * (shifts[r] - shifts[col]);
        rho_full[(r, col)] * (-d * d / 4.0).exp()
    }))
}

/// State at `t` under the system Hamiltonian alone, starting from `rho0` at `t0`:
/// `rho_nm(t) = rho_nm(t0) exp(-i int_{t0}^{t} (E_n - E_m))`.
pub fn free_state(sys: &SpectralSystem, rho0: &DMatrix<C64>, t0: f64, t: f64) -> Result<DMatrix<C64>> {
    let phases: Vec<f64> = (0..sys.dim())
        .map(|n| {
            let level = sys.level(n);
            integrate_with_breaks(|s| level.energy(s), &[t0, t], quad_opts()).map(|r| r.value)
        })
        .collect::<Result<_>>()?;
    Ok(DMatrix::from_fn(sys.dim(), sys.dim(), |r, col| {
        rho0[(r, col)] * C64::from_polar(1.0, -(phases[r] - phases[col]))
    }))
}

/// `<W>_dist - <W>_S = sum_n p_n (c_n - [E_n(t_f) - E_n(t_i)])`.
pub fn delta_w_povm(sys: &SpectralSystem, diag: &[f64], schedule: &ProtocolSchedule) -> Result<f64> {
    check_diag(sys, diag)?;
    let centers = work_centers(sys, schedule)?;
    Ok(diag
        .iter()
        .enumerate()
        .map(|(n, p)| p * (centers[n] - (sys.energy(n, schedule.t_f()) - sys.energy(n, schedule.t_i()))))
        .sum())
}

/// Diagonal density matrix with the given populations.
pub fn diagonal_state(diag: &[f64]) -> DMatrix<C64> {
    DMatrix::from_fn(diag.len(), diag.len(), |r, col| c(if r == col { diag[r] } else { 0.0 }, 0.0))
}
