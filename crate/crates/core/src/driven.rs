//! Classical driven-oscillator dynamics: the displacement `q_j = D_R * j`, an
//! independent RK4 integrator of `m q'' + m w^2 q = -j`, and factorization checks of
//! the driven functional against shifted-operator averages from the Fock oracle.

use std::ops::Range;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{ordered_average, Branch, Factor, FockState, LinearForm, Observable, OperatorOrdering, OrderedProductSpec, StateKind};
use crate::functional::{gaussian_alpha, gaussian_moment, phi_full_moment, antinormal_pair, weyl_pair, ProbePoint, Variant};
use crate::kernels::{OscKernels, OscillatorParams};
use crate::spectral::{circular_convolve, Kernel, Sampled, SampledSignal, TimeGrid};

/// Which one-sided value a discontinuous current takes at its onset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
    /// Average of both limits.
    Mid,
}

/// Source currents switched on at `t_on`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum CurrentProfile {
    Zero,
    /// `j(t) = A` for `t > t_on`.
    Step { amplitude: f64, t_on: f64 },
    /// `j(t) = A sin(w0 (t - t_on))` for `t > t_on`, resonant with the oscillator.
    Sine { amplitude: f64, t_on: f64 },
}

impl CurrentProfile {
    /// Parses `zero`, `step:A`, `sine:A`.
    pub fn parse(s: &str, t_on: f64) -> Result<Self> {
        let (head, arg) = s.split_once(':').unwrap_or((s, ""));
        let amp = || arg.trim().parse::<f64>().map_err(|e| Error::Parse(format!("current `{s}`: {e}")));
        match head.trim() {
            "zero" => Ok(CurrentProfile::Zero),
            "step" => Ok(CurrentProfile::Step { amplitude: amp()?, t_on }),
            "sine" => Ok(CurrentProfile::Sine { amplitude: amp()?, t_on }),
            _ => Err(Error::Parse(format!("unknown current `{s}`; expected step:A, sine:A or zero"))),
        }
    }

    pub fn t_on(&self) -> f64 {
        match *self {
            CurrentProfile::Zero => 0.0,
            CurrentProfile::Step { t_on, .. } | CurrentProfile::Sine { t_on, .. } => t_on,
        }
    }

    pub fn label(&self) -> String {
        match *self {
            CurrentProfile::Zero => "zero".into(),
            CurrentProfile::Step { amplitude, .. } => format!("step:{amplitude}"),
            CurrentProfile::Sine { amplitude, .. } => format!("sine:{amplitude}"),
        }
    }

    pub fn value(&self, t: f64, omega0: f64, side: Side) -> f64 {
        match *self {
            CurrentProfile::Zero => 0.0,
            CurrentProfile::Step { amplitude, t_on } => {
                if t > t_on {
                    amplitude
                } else if t < t_on {
                    0.0
                } else {
                    match side {
                        Side::Left => 0.0,
                        Side::Right => amplitude,
                        Side::Mid => 0.5 * amplitude,
                    }
                }
            }
            CurrentProfile::Sine { amplitude, t_on } => {
                if t > t_on {
                    amplitude * (omega0 * (t - t_on)).sin()
                } else {
                    0.0
                }
            }
        }
    }

    /// Grid samples, taking the mean of both limits at the onset.
    pub fn sample(&self, grid: TimeGrid, omega0: f64) -> SampledSignal {
        SampledSignal::from_fn(grid, |t| Complex64::new(self.value(t, omega0, Side::Mid), 0.0))
    }

    /// Exact `q_j(t)` for zero initial conditions.
    pub fn analytic_displacement(&self, p: &OscillatorParams, t: f64) -> f64 {
        let (m, w) = (p.mass(), p.omega0());
        match *self {
            CurrentProfile::Zero => 0.0,
            CurrentProfile::Step { amplitude, t_on } => {
                if t <= t_on {
                    0.0
                } else {
                    -amplitude / (m * w * w) * (1.0 - (w * (t - t_on)).cos())
                }
            }
            CurrentProfile::Sine { amplitude, t_on } => {
                if t <= t_on {
                    0.0
                } else {
                    let s = t - t_on;
                    -amplitude / (2.0 * m * w * w) * ((w * s).sin() - w * s * (w * s).cos())
                }
            }
        }
    }
}

/// Oscillator, grid, source current, and initial state of a driven run.
#[derive(Debug, Clone, PartialEq)]
pub struct DriveScenario {
    params: OscillatorParams,
    grid: TimeGrid,
    current: CurrentProfile,
    j: SampledSignal,
    state: StateKind,
}

impl DriveScenario {
    pub fn new(params: OscillatorParams, grid: TimeGrid, current: CurrentProfile, state: StateKind) -> Result<Self> {
        if current.t_on() < 0.0 {
            return Err(Error::InvalidParams(format!("current must vanish for t < 0; onset at {}", current.t_on())));
        }
        if current.t_on() >= grid.time(grid.n() - 1) {
            return Err(Error::InvalidParams(format!("onset {} lies beyond the grid", current.t_on())));
        }
        let j = current.sample(grid, params.omega0());
        Ok(DriveScenario { params, grid, current, j, state })
    }

    pub fn params(&self) -> &OscillatorParams {
        &self.params
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn current(&self) -> &CurrentProfile {
        &self.current
    }

    pub fn j(&self) -> &SampledSignal {
        &self.j
    }

    pub fn state(&self) -> StateKind {
        self.state
    }

    /// Sample indices in `[t_on, t_on + T/2)`, free of periodic wrap-around.
    pub fn causal_window(&self) -> Range<usize> {
        let g = &self.grid;
        let t_on = self.current.t_on();
        let start = (0..g.n()).find(|&k| g.time(k) >= t_on - 1e-12 * g.dt()).unwrap_or(g.n());
        let end = (start + g.n() / 2).min(g.n());
        start..end
    }
}

/// `q_j = D_R * j`.
pub fn classical_displacement(sc: &DriveScenario, retarded: &Kernel) -> Result<SampledSignal> {
    circular_convolve(retarded, &sc.j)
}

/// Fixed-step RK4 settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OdeOptions {
    /// RK4 steps per grid interval.
    pub substeps: usize,
    /// Largest accepted step-halving error estimate.
    pub tolerance: f64,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions { substeps: 4, tolerance: 1e-9 }
    }
}

/// Integrates `q'' + w0^2 q = -j(t)/m` from rest at the onset and samples `q` on the grid.
/// Runs at `substeps` and `2 substeps` per interval; the difference over 15 estimates
/// the error of the finer run, which is returned.
pub fn ode_oscillator(sc: &DriveScenario, opts: OdeOptions) -> Result<SampledSignal> {
    if opts.substeps == 0 {
        return Err(Error::InvalidParams("substeps must be positive".into()));
    }
    let coarse = integrate(sc, opts.substeps);
    let fine = integrate(sc, 2 * opts.substeps);
    for (k, (c, f)) in coarse.iter().zip(&fine).enumerate() {
        let estimate = (c - f).abs() / 15.0;
        if estimate > opts.tolerance {
            return Err(Error::StepTooCoarse { estimate, tolerance: opts.tolerance, time: sc.grid.time(k) });
        }
    }
    SampledSignal::new(sc.grid, fine.into_iter().map(|q| Complex64::new(q, 0.0)).collect())
}

fn integrate(sc: &DriveScenario, substeps: usize) -> Vec<f64> {
    let g = &sc.grid;
    let (m, w) = (sc.params.mass(), sc.params.omega0());
    let t_on = sc.current.t_on();
    let force = |t: f64, side: Side| -sc.current.value(t, w, side) / m;
    let rhs = |t: f64, y: [f64; 2], side: Side| [y[1], -w * w * y[0] + force(t, side)];
    let mut out = vec![0.0; g.n()];
    let mut y = [0.0, 0.0];
    let mut t = t_on;
    for (k, slot) in out.iter_mut().enumerate() {
        let target = g.time(k);
        if target <= t_on {
            continue;
        }
        let h = (target - t) / substeps as f64;
        for _ in 0..substeps {
            let k1 = rhs(t, y, Side::Right);
            let k2 = rhs(t + 0.5 * h, [y[0] + 0.5 * h * k1[0], y[1] + 0.5 * h * k1[1]], Side::Mid);
            let k3 = rhs(t + 0.5 * h, [y[0] + 0.5 * h * k2[0], y[1] + 0.5 * h * k2[1]], Side::Mid);
            let k4 = rhs(t + h, [y[0] + h * k3[0], y[1] + h * k3[1]], Side::Left);
            for i in 0..2 {
                y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
            t += h;
        }
        t = target;
        *slot = y[0];
    }
    out
}

/// Max `|a - b|` over the causal window.
pub fn window_residual(sc: &DriveScenario, a: &SampledSignal, b: &SampledSignal) -> f64 {
    sc.causal_window().map(|k| (a.values()[k] - b.values()[k]).norm()).fold(0.0, f64::max)
}

/// Max `|q(t) - analytic(t)|` over the causal window.
pub fn analytic_residual(sc: &DriveScenario, q: &SampledSignal) -> f64 {
    sc.causal_window()
        .map(|k| (q.values()[k] - Complex64::new(sc.current.analytic_displacement(&sc.params, sc.grid.time(k)), 0.0)).norm())
        .fold(0.0, f64::max)
}

/// One factorization comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorizationRow {
    pub label: String,
    pub order: usize,
    pub residual: f64,
}

/// Moments of the driven functional against shifted-operator averages.
///
/// For each probe-point set (all inside the causal window): the double-time moment
/// extracted from `Phi_vac Phi_in Phi_cl(eta; j)` against the oracle's double-time
/// average of `q(t) + q_j(t)`; and the normal and Weyl moments of the Gaussian state
/// with linear part `q_in + q_j` against the oracle's normal and Weyl averages.
pub fn verify_driven_factorization(
    sc: &DriveScenario,
    kernels: &OscKernels,
    probes: &[Vec<ProbePoint>],
    dim: usize,
) -> Result<Vec<FactorizationRow>> {
    let alpha = gaussian_alpha(&sc.state)?;
    let p = &sc.params;
    let q_j = classical_displacement(sc, &kernels.retarded)?;
    let window = sc.causal_window();
    let st = FockState::make(sc.state, dim)?;
    let mut rows = Vec::new();
    for points in probes {
        if points.len() > 4 {
            return Err(Error::TooManyFactors { count: points.len(), limit: 4 });
        }
        if let Some(pt) = points.iter().find(|pt| !window.contains(&pt.index)) {
            return Err(Error::InvalidParams(format!("probe index {} lies outside the causal window", pt.index)));
        }
        let factors: Vec<Factor> = points.iter().map(|pt| Factor::q(sc.grid.time(pt.index), pt.branch)).collect();
        let spec = OrderedProductSpec::new(factors.clone(), OperatorOrdering::DoubleTime).with_shift_signal(&q_j)?;
        let oracle = ordered_average(&st, &spec, p)?;
        let functional = phi_full_moment(points, &sc.j, &sc.state, kernels, p)?;
        let branches: String = points.iter().map(|pt| if pt.branch == Branch::Minus { '-' } else { '+' }).collect();
        rows.push(FactorizationRow { label: format!("double_time[{branches}]"), order: points.len(), residual: (functional - oracle).norm() });

        let lin: Vec<Complex64> = points
            .iter()
            .map(|pt| {
                let f = LinearForm::heisenberg(p, Observable::Q, sc.grid.time(pt.index));
                alpha * f.c_a + alpha.conj() * f.c_adag + q_j.values()[pt.index]
            })
            .collect();
        let times: Vec<f64> = factors.iter().map(|f| f.time).collect();
        for (variant, ordering) in [(Variant::Normal, OperatorOrdering::Normal), (Variant::Weyl, OperatorOrdering::Weyl)] {
            let unbranched: Vec<Factor> = factors.iter().map(|f| Factor::q(f.time, Branch::None)).collect();
            let spec = OrderedProductSpec::new(unbranched, ordering).with_shift_signal(&q_j)?;
            let oracle = ordered_average(&st, &spec, p)?;
            let predicted = shifted_ordered_moment(variant, &times, &lin, p)?;
            rows.push(FactorizationRow { label: variant.name().to_string(), order: points.len(), residual: (predicted - oracle).norm() });
        }
    }
    Ok(rows)
}

fn shifted_ordered_moment(variant: Variant, times: &[f64], lin: &[Complex64], p: &OscillatorParams) -> Result<Complex64> {
    let pair = |a: usize, b: usize| {
        let tau = times[a] - times[b];
        match variant {
            Variant::Normal => Complex64::new(0.0, 0.0),
            Variant::Weyl => weyl_pair(p, tau),
            Variant::Antinormal => antinormal_pair(p, tau),
        }
    };
    gaussian_moment(pair, |a| lin[a], times.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{osc_kernels, Commensurability};

    fn drive_grid() -> TimeGrid {
        TimeGrid::new(256, 0.005).unwrap()
    }

    fn scenario(current: CurrentProfile, state: StateKind) -> (DriveScenario, OscKernels) {
        let p = OscillatorParams::unit();
        let g = drive_grid();
        let k = osc_kernels(&p, g, Commensurability::Loose).unwrap();
        (DriveScenario::new(p, g, current, state).unwrap(), k)
    }

    #[test]
    fn parse_currents() {
        assert_eq!(CurrentProfile::parse("step:1.0", 0.0).unwrap(), CurrentProfile::Step { amplitude: 1.0, t_on: 0.0 });
        assert_eq!(CurrentProfile::parse("sine:0.5", 0.2).unwrap(), CurrentProfile::Sine { amplitude: 0.5, t_on: 0.2 });
        assert!(CurrentProfile::parse("ramp:1", 0.0).is_err());
        assert!(CurrentProfile::parse("step:x", 0.0).is_err());
    }

    #[test]
    fn rejects_negative_onset() {
        let p = OscillatorParams::unit();
        assert!(DriveScenario::new(p, drive_grid(), CurrentProfile::Step { amplitude: 1.0, t_on: -0.1 }, StateKind::Vacuum).is_err());
    }

    #[test]
    fn zero_current() {
        let (sc, k) = scenario(CurrentProfile::Zero, StateKind::Vacuum);
        assert_eq!(classical_displacement(&sc, &k.retarded).unwrap().max_abs(), 0.0);
        assert_eq!(ode_oscillator(&sc, OdeOptions::default()).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn step_current_against_analytic_and_quadrature() {
        let (sc, k) = scenario(CurrentProfile::Step { amplitude: 1.0, t_on: 0.0 }, StateKind::Vacuum);
        let q = classical_displacement(&sc, &k.retarded).unwrap();
        assert!(q.values().iter().all(|z| z.im.abs() < 1e-12));
        // trapezoid error (dt^2 / 12)(1 - cos t) over a window of 0.64
        let conv_err = analytic_residual(&sc, &q);
        assert!(conv_err < 5e-7, "{conv_err}");
        let ode = ode_oscillator(&sc, OdeOptions::default()).unwrap();
        assert!(analytic_residual(&sc, &ode) < 1e-8);
        assert!(window_residual(&sc, &q, &ode) < 1e-6);
    }

    #[test]
    fn sine_current_ode_matches_variation_of_parameters() {
        let (sc, _) = scenario(CurrentProfile::Sine { amplitude: 1.0, t_on: 0.0 }, StateKind::Vacuum);
        let ode = ode_oscillator(&sc, OdeOptions::default()).unwrap();
        assert!(analytic_residual(&sc, &ode) < 1e-10);
    }

    #[test]
    fn coarse_steps_are_rejected() {
        let p = OscillatorParams::unit();
        let g = TimeGrid::new(16, 1.5).unwrap();
        let sc = DriveScenario::new(p, g, CurrentProfile::Sine { amplitude: 1.0, t_on: 0.0 }, StateKind::Vacuum).unwrap();
        assert!(matches!(ode_oscillator(&sc, OdeOptions { substeps: 1, tolerance: 1e-9 }), Err(Error::StepTooCoarse { .. })));
    }

    #[test]
    fn causality_and_linearity() {
        let (sc, k) = scenario(CurrentProfile::Step { amplitude: 1.0, t_on: 0.0 }, StateKind::Vacuum);
        let q = classical_displacement(&sc, &k.retarded).unwrap();
        let window = sc.causal_window();
        let cut = window.start + 40;
        let mut perturbed = sc.j().clone().into_values();
        for v in perturbed.iter_mut().skip(cut + 1) {
            *v += Complex64::new(3.0, 0.0);
        }
        let qp = circular_convolve(&k.retarded, &SampledSignal::new(*sc.grid(), perturbed).unwrap()).unwrap();
        for idx in window.start..=cut {
            assert!((q.values()[idx] - qp.values()[idx]).norm() < 1e-14);
        }
        let j2 = CurrentProfile::Sine { amplitude: 1.0, t_on: 0.0 }.sample(*sc.grid(), 1.0);
        let combo = &(&sc.j().clone() * 2.0) + &(&j2 * -0.5);
        let lhs = circular_convolve(&k.retarded, &combo).unwrap();
        let rhs = &(&q * 2.0) + &(&circular_convolve(&k.retarded, &j2).unwrap() * -0.5);
        assert!(lhs.max_abs_diff(&rhs) < 1e-15);
    }

    #[test]
    fn factorization_moments() {
        for state in [StateKind::Vacuum, StateKind::Coherent { re: 0.5, im: 0.0 }] {
            let (sc, k) = scenario(CurrentProfile::Step { amplitude: 1.0, t_on: 0.0 }, state);
            let w = sc.causal_window();
            let probes = vec![
                vec![ProbePoint { index: w.start + 30, branch: Branch::Plus }],
                vec![ProbePoint { index: w.start + 10, branch: Branch::Minus }, ProbePoint { index: w.start + 70, branch: Branch::Plus }],
                vec![ProbePoint { index: w.start + 90, branch: Branch::Plus }, ProbePoint { index: w.start + 20, branch: Branch::Plus }],
            ];
            for row in verify_driven_factorization(&sc, &k, &probes, 40).unwrap() {
                assert!(row.residual < 1e-9, "{row:?}");
            }
        }
    }
}
