//! Uniform periodic time grids and the discrete Fourier machinery everything
//! else is computed on.
//!
//! Conventions:
//!
//! * sample `k` of a grid sits at `t0 + k*dt`, with `t0 = -n*dt/2`; kernels use
//!   the same positions as lags `tau`, so lag index `n/2` is `tau = 0`;
//! * a frequency-positive component has the time dependence `exp(-i*w*t)` with
//!   `w > 0`;
//! * the zero and Nyquist bins are shared half/half between the positive and
//!   negative parts, so `plus + minus` is the input exactly;
//! * every full-axis integral is a periodic sum weighted by `dt`.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance used to decide whether a frequency sits on a DFT bin.
pub const BIN_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    n: usize,
    dt: f64,
    t0: f64,
}

impl TimeGrid {
    /// Builds a grid of `n` samples centred on zero.
    pub fn new(n: usize, dt: f64) -> Result<Self> {
        if n < 4 || n % 2 != 0 {
            return Err(Error::InvalidGrid(format!("n must be even and >= 4, got {n}")));
        }
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidGrid(format!("dt must be positive and finite, got {dt}")));
        }
        Ok(TimeGrid { n, dt, t0: -(n as f64) * dt / 2.0 })
    }

    /// Grid of `n` samples whose period holds exactly `bin` cycles at `omega`.
    pub fn commensurate(n: usize, omega: f64, bin: usize) -> Result<Self> {
        if !(omega > 0.0) {
            return Err(Error::InvalidParams(format!("omega must be positive, got {omega}")));
        }
        if bin == 0 || 2 * bin >= n {
            return Err(Error::InvalidGrid(format!("bin {bin} must lie in 1..n/2 for n = {n}")));
        }
        TimeGrid::new(n, 2.0 * PI * bin as f64 / (n as f64 * omega))
    }

    /// Reassembles a grid from serialized fields; `t0` must match the centred layout.
    pub fn from_parts(n: usize, dt: f64, t0: f64) -> Result<Self> {
        let g = TimeGrid::new(n, dt)?;
        if (g.t0 - t0).abs() > 1e-12 * g.period().max(1.0) {
            return Err(Error::InvalidGrid(format!("t0 = {t0} does not match -n*dt/2 = {}", g.t0)));
        }
        Ok(g)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn period(&self) -> f64 {
        self.n as f64 * self.dt
    }

    /// Time of sample `k` (equivalently the lag of kernel index `k`).
    pub fn time(&self, k: usize) -> f64 {
        let half = (self.n / 2) as f64;
        if self.t0 == -half * self.dt {
            // integer lag times one rounding, so that tau(n - k) = -tau(k) exactly
            (k as f64 - half) * self.dt
        } else {
            self.t0 + k as f64 * self.dt
        }
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n).map(move |k| self.time(k))
    }

    /// Index of the lag `steps * dt`, wrapped periodically.
    pub fn lag_index(&self, steps: isize) -> usize {
        let n = self.n as isize;
        (steps + n / 2).rem_euclid(n) as usize
    }

    /// Index of the sample at time `t`, if `t` lies on the grid.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let x = (t - self.t0) / self.dt;
        let k = x.round();
        if (x - k).abs() > 1e-9 || k < 0.0 || k >= self.n as f64 {
            return None;
        }
        Some(k as usize)
    }

    /// Angular frequency of DFT bin `m` (negative for `m > n/2`; the Nyquist
    /// bin is reported as positive).
    pub fn bin_frequency(&self, m: usize) -> f64 {
        let m = m % self.n;
        let signed = if m > self.n / 2 { m as f64 - self.n as f64 } else { m as f64 };
        2.0 * PI * signed / self.period()
    }

    /// Fractional bin index of angular frequency `omega`.
    pub fn bin_of(&self, omega: f64) -> f64 {
        omega * self.period() / (2.0 * PI)
    }

    /// Checks that `omega` sits exactly on a bin strictly between zero and Nyquist.
    pub fn check_on_bin(&self, omega: f64) -> Result<usize> {
        let bin = self.bin_of(omega);
        let k = bin.round();
        let on_bin = (bin - k).abs() <= BIN_TOLERANCE * bin.abs().max(1.0);
        if !on_bin || k < 1.0 || 2.0 * k >= self.n as f64 {
            return Err(Error::Incommensurate { omega, bin });
        }
        Ok(k as usize)
    }

    /// Discrete step function on lag index `k`: one for positive lags, zero for
    /// negative, one half at `tau = 0` and at the wrap point `tau = -T/2`.
    pub fn step(&self, k: usize) -> f64 {
        let half = self.n / 2;
        if k == half || k == 0 {
            0.5
        } else if k > half {
            1.0
        } else {
            0.0
        }
    }

    fn same_as(&self, other: &TimeGrid) -> bool {
        self.n == other.n && self.dt == other.dt && self.t0 == other.t0
    }

    pub fn ensure_same(&self, other: &TimeGrid) -> Result<()> {
        if self.same_as(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!(
                "(n={}, dt={}) vs (n={}, dt={})",
                self.n, self.dt, other.n, other.dt
            )))
        }
    }
}

/// Shorthand for [`TimeGrid::new`].
pub fn make_grid(n: usize, dt: f64) -> Result<TimeGrid> {
    TimeGrid::new(n, dt)
}

/// Common access to grid-sampled sequences (signals and kernels).
pub trait Sampled: Sized + Clone {
    fn grid(&self) -> &TimeGrid;
    fn values(&self) -> &[Complex64];
    fn with_values(&self, values: Vec<Complex64>) -> Self;

    fn len(&self) -> usize {
        self.values().len()
    }

    fn is_empty(&self) -> bool {
        self.values().is_empty()
    }

    /// Time inversion `f(t) -> f(-t)`, periodic.
    fn reflect(&self) -> Self {
        let n = self.len();
        let v = self.values();
        self.with_values((0..n).map(|k| v[(n - k) % n]).collect())
    }

    fn conj(&self) -> Self {
        self.with_values(self.values().iter().map(|z| z.conj()).collect())
    }

    fn map(&self, f: impl Fn(Complex64) -> Complex64) -> Self {
        self.with_values(self.values().iter().map(|&z| f(z)).collect())
    }

    fn zip_with(&self, other: &Self, f: impl Fn(Complex64, Complex64) -> Complex64) -> Self {
        assert_eq!(self.len(), other.len());
        self.with_values(
            self.values().iter().zip(other.values()).map(|(&a, &b)| f(a, b)).collect(),
        )
    }

    fn max_abs(&self) -> f64 {
        self.values().iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Largest pointwise modulus of `self - other`.
    fn max_abs_diff(&self, other: &Self) -> f64 {
        self.values()
            .iter()
            .zip(other.values())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    fn norm_sqr(&self) -> f64 {
        self.values().iter().map(|z| z.norm_sqr()).sum()
    }
}

macro_rules! sampled_type {
    ($name:ident) => {
        impl $name {
            pub fn new(grid: TimeGrid, values: Vec<Complex64>) -> Result<Self> {
                if values.len() != grid.n() {
                    return Err(Error::InvalidGrid(format!(
                        "{} values for a grid of {} samples",
                        values.len(),
                        grid.n()
                    )));
                }
                Ok($name { grid, values })
            }

            pub fn zeros(grid: TimeGrid) -> Self {
                $name { grid, values: vec![Complex64::new(0.0, 0.0); grid.n()] }
            }

            /// Samples `f` at every grid position.
            pub fn from_fn(grid: TimeGrid, f: impl Fn(f64) -> Complex64) -> Self {
                $name { grid, values: grid.times().map(f).collect() }
            }

            pub fn from_real(grid: TimeGrid, values: &[f64]) -> Result<Self> {
                $name::new(grid, values.iter().map(|&x| Complex64::new(x, 0.0)).collect())
            }

            pub fn into_values(self) -> Vec<Complex64> {
                self.values
            }
        }

        impl Sampled for $name {
            fn grid(&self) -> &TimeGrid {
                &self.grid
            }

            fn values(&self) -> &[Complex64] {
                &self.values
            }

            fn with_values(&self, values: Vec<Complex64>) -> Self {
                debug_assert_eq!(values.len(), self.grid.n());
                $name { grid: self.grid, values }
            }
        }

        impl Add for &$name {
            type Output = $name;
            fn add(self, rhs: &$name) -> $name {
                self.zip_with(rhs, |a, b| a + b)
            }
        }

        impl Sub for &$name {
            type Output = $name;
            fn sub(self, rhs: &$name) -> $name {
                self.zip_with(rhs, |a, b| a - b)
            }
        }

        impl Neg for &$name {
            type Output = $name;
            fn neg(self) -> $name {
                self.map(|z| -z)
            }
        }

        impl Mul<Complex64> for &$name {
            type Output = $name;
            fn mul(self, rhs: Complex64) -> $name {
                self.map(|z| z * rhs)
            }
        }

        impl Mul<f64> for &$name {
            type Output = $name;
            fn mul(self, rhs: f64) -> $name {
                self.map(|z| z * rhs)
            }
        }
    };
}

/// A complex function of time sampled on a [`TimeGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct SampledSignal {
    grid: TimeGrid,
    values: Vec<Complex64>,
}

/// A complex function of a time difference `tau`, sampled on the lags of a
/// [`TimeGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    grid: TimeGrid,
    values: Vec<Complex64>,
}

sampled_type!(SampledSignal);
sampled_type!(Kernel);

impl Kernel {
    /// Value at lag `steps * dt`, periodic.
    pub fn at_lag(&self, steps: isize) -> Complex64 {
        self.values[self.grid.lag_index(steps)]
    }

    /// Value at the lag between sample `i` and sample `j`, i.e. `k(t_i - t_j)`.
    pub fn between(&self, i: usize, j: usize) -> Complex64 {
        self.at_lag(i as isize - j as isize)
    }

    /// Multiplies by the discrete step function of the lag.
    pub fn causal(&self) -> Kernel {
        let g = self.grid;
        Kernel {
            grid: g,
            values: self.values.iter().enumerate().map(|(k, &z)| z * g.step(k)).collect(),
        }
    }
}

fn dft_plus_convention(values: &[Complex64]) -> Vec<Complex64> {
    // G_m = sum_k g_k exp(+2 pi i m k / n); rustfft's inverse carries the + sign.
    let mut buf = values.to_vec();
    let mut planner = FftPlanner::<f64>::new();
    planner.plan_fft_inverse(buf.len()).process(&mut buf);
    buf
}

fn idft_plus_convention(spectrum: &[Complex64]) -> Vec<Complex64> {
    let n = spectrum.len() as f64;
    let mut buf = spectrum.to_vec();
    let mut planner = FftPlanner::<f64>::new();
    planner.plan_fft_forward(buf.len()).process(&mut buf);
    buf.iter_mut().for_each(|z| *z /= n);
    buf
}

/// Weight of bin `m` in the frequency-positive part.
fn positive_weight(m: usize, n: usize) -> f64 {
    if m == 0 || 2 * m == n {
        0.5
    } else if 2 * m < n {
        1.0
    } else {
        0.0
    }
}

fn positive_part_values(values: &[Complex64]) -> Vec<Complex64> {
    let n = values.len();
    let mut spec = dft_plus_convention(values);
    for (m, z) in spec.iter_mut().enumerate() {
        *z *= positive_weight(m, n);
    }
    idft_plus_convention(&spec)
}

/// Splits `s` into its frequency-positive and frequency-negative parts.
///
/// The negative part is formed as `s - plus`, which makes the decomposition
/// additive to a single rounding per sample.
pub fn frequency_split<S: Sampled>(s: &S) -> (S, S) {
    let plus = positive_part_values(s.values());
    let minus = s.values().iter().zip(&plus).map(|(a, b)| a - b).collect();
    (s.with_values(plus), s.with_values(minus))
}

pub fn positive_part<S: Sampled>(s: &S) -> S {
    s.with_values(positive_part_values(s.values()))
}

pub fn negative_part<S: Sampled>(s: &S) -> S {
    frequency_split(s).1
}

/// Fraction of the spectral energy of `s` held by the zero and Nyquist bins,
/// where the positive/negative split is a convention rather than a projection.
pub fn edge_bin_fraction<S: Sampled>(s: &S) -> f64 {
    let spec = dft_plus_convention(s.values());
    let total: f64 = spec.iter().map(|z| z.norm_sqr()).sum();
    if total == 0.0 {
        return 0.0;
    }
    let n = spec.len();
    (spec[0].norm_sqr() + spec[n / 2].norm_sqr()) / total
}

/// Spectral time derivative. The Nyquist bin has no well-defined derivative and is dropped.
pub fn spectral_derivative<S: Sampled>(s: &S) -> S {
    let g = *s.grid();
    let n = g.n();
    let mut spec = dft_plus_convention(s.values());
    for (m, z) in spec.iter_mut().enumerate() {
        if 2 * m == n {
            *z = Complex64::new(0.0, 0.0);
        } else {
            // d/dt exp(-i w t) = -i w exp(-i w t)
            *z *= Complex64::new(0.0, -g.bin_frequency(m));
        }
    }
    s.with_values(idft_plus_convention(&spec))
}

/// Periodic convolution `out(t) = dt * sum_t' k(t - t') s(t')`.
pub fn circular_convolve(k: &Kernel, s: &SampledSignal) -> Result<SampledSignal> {
    k.grid().ensure_same(s.grid())?;
    let g = *s.grid();
    let n = g.n();
    let dt = g.dt();
    let kv = k.values();
    let sv = s.values();
    let out = (0..n)
        .map(|i| {
            let acc: Complex64 = (0..n).map(|j| kv[g.lag_index(i as isize - j as isize)] * sv[j]).sum();
            acc * dt
        })
        .collect();
    SampledSignal::new(g, out)
}

/// Hermitian conjugate of a c-number kernel: `out(tau) = conj(k(-tau))`.
pub fn kernel_adjoint(k: &Kernel) -> Kernel {
    k.reflect().conj()
}

/// Bilinear form `dt^2 * sum_{t,t'} a(t) k(t - t') b(t')` (no conjugation).
pub fn bilinear(a: &SampledSignal, k: &Kernel, b: &SampledSignal) -> Result<Complex64> {
    a.grid().ensure_same(k.grid())?;
    let kb = circular_convolve(k, b)?;
    Ok(integrate_product(a, &kb))
}

/// `dt * sum_t a(t) b(t)`.
pub fn integrate_product(a: &SampledSignal, b: &SampledSignal) -> Complex64 {
    let s: Complex64 = a.values().iter().zip(b.values()).map(|(x, y)| x * y).sum();
    s * a.grid().dt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn grid_layout() {
        let g = make_grid(8, 0.5).unwrap();
        let t: Vec<f64> = g.times().collect();
        assert_eq!(t, vec![-2.0, -1.5, -1.0, -0.5, 0.0, 0.5, 1.0, 1.5]);
        let g = make_grid(4, 1.0).unwrap();
        assert_eq!(g.times().collect::<Vec<_>>(), vec![-2.0, -1.0, 0.0, 1.0]);
    }

    #[test]
    fn grid_rejects_bad_input() {
        assert!(make_grid(3, 1.0).is_err());
        assert!(make_grid(2, 1.0).is_err());
        assert!(make_grid(8, 0.0).is_err());
        assert!(make_grid(8, -1.0).is_err());
        assert!(make_grid(8, f64::NAN).is_err());
    }

    #[test]
    fn lag_indexing() {
        let g = make_grid(8, 1.0).unwrap();
        assert_eq!(g.lag_index(0), 4);
        assert_eq!(g.lag_index(1), 5);
        assert_eq!(g.lag_index(-4), 0);
        assert_eq!(g.lag_index(4), 0);
        assert_eq!(g.index_of(0.0), Some(4));
        assert_eq!(g.index_of(0.3), None);
        assert_eq!(g.step(4), 0.5);
        assert_eq!(g.step(0), 0.5);
        assert_eq!(g.step(5), 1.0);
        assert_eq!(g.step(3), 0.0);
    }

    #[test]
    fn on_bin_check() {
        let g = TimeGrid::commensurate(64, 1.0, 3).unwrap();
        assert_eq!(g.check_on_bin(1.0).unwrap(), 3);
        assert!(g.check_on_bin(1.1).is_err());
        assert!(g.check_on_bin(g.bin_frequency(32)).is_err());
    }

    #[test]
    fn split_cosine() {
        let g = TimeGrid::commensurate(32, 1.0, 3).unwrap();
        let s = SampledSignal::from_fn(g, |t| c(t.cos(), 0.0));
        let (p, m) = frequency_split(&s);
        let p_exp = SampledSignal::from_fn(g, |t| c(0.0, -t).exp() * 0.5);
        let m_exp = SampledSignal::from_fn(g, |t| c(0.0, t).exp() * 0.5);
        assert!(p.max_abs_diff(&p_exp) < 1e-14);
        assert!(m.max_abs_diff(&m_exp) < 1e-14);
    }

    #[test]
    fn split_constant_is_halved() {
        let g = make_grid(16, 0.1).unwrap();
        let s = SampledSignal::from_fn(g, |_| c(1.0, 0.0));
        let (p, m) = frequency_split(&s);
        for z in p.values().iter().chain(m.values()) {
            assert!((z - c(0.5, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn split_single_positive_bin() {
        let g = TimeGrid::commensurate(16, 2.0, 5).unwrap();
        let s = SampledSignal::from_fn(g, |t| c(0.0, -2.0 * t).exp());
        let (p, m) = frequency_split(&s);
        assert!(p.max_abs_diff(&s) < 1e-14);
        assert!(m.max_abs() < 1e-14);
    }

    #[test]
    fn identity_kernel_and_zero_signal() {
        let g = make_grid(8, 0.25).unwrap();
        let mut delta = vec![c(0.0, 0.0); 8];
        delta[g.lag_index(0)] = c(1.0 / g.dt(), 0.0);
        let k = Kernel::new(g, delta).unwrap();
        let s = SampledSignal::new(g, (0..8).map(|i| c(i as f64, -(i as f64) * 0.5)).collect()).unwrap();
        let out = circular_convolve(&k, &s).unwrap();
        assert!(out.max_abs_diff(&s) < 1e-14);

        let k = Kernel::from_fn(g, |t| c(t.sin(), t));
        let out = circular_convolve(&k, &SampledSignal::zeros(g)).unwrap();
        assert_eq!(out.max_abs(), 0.0);
    }

    #[test]
    fn convolve_rejects_mismatched_grids() {
        let a = Kernel::zeros(make_grid(8, 0.25).unwrap());
        let b = SampledSignal::zeros(make_grid(8, 0.5).unwrap());
        assert!(matches!(circular_convolve(&a, &b), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn adjoint_of_spike() {
        let g = make_grid(8, 0.5).unwrap();
        let mut v = vec![c(0.0, 0.0); 8];
        v[g.lag_index(1)] = c(0.0, 1.0);
        let k = Kernel::new(g, v).unwrap();
        let a = kernel_adjoint(&k);
        assert_eq!(a.at_lag(-1), c(0.0, -1.0));
        assert_eq!(a.values().iter().filter(|z| z.norm() > 0.0).count(), 1);

        let even = Kernel::from_fn(g, |t| c((-t * t).exp(), 0.0));
        assert_eq!(kernel_adjoint(&even), even);
    }

    #[test]
    fn spectral_derivative_of_sine() {
        let g = TimeGrid::commensurate(32, 1.5, 2).unwrap();
        let s = SampledSignal::from_fn(g, |t| c((1.5 * t).sin(), 0.0));
        let d = spectral_derivative(&s);
        let expected = SampledSignal::from_fn(g, |t| c(1.5 * (1.5 * t).cos(), 0.0));
        assert!(d.max_abs_diff(&expected) < 1e-13);
    }

    #[test]
    fn edge_fraction() {
        let g = make_grid(16, 0.1).unwrap();
        let s = SampledSignal::from_fn(g, |_| c(2.0, 0.0));
        assert!((edge_bin_fraction(&s) - 1.0).abs() < 1e-15);
        let g = TimeGrid::commensurate(16, 1.0, 2).unwrap();
        let s = SampledSignal::from_fn(g, |t| c(t.cos(), 0.0));
        assert!(edge_bin_fraction(&s) < 1e-28);
    }
}
