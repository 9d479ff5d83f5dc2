//! Closed-form oscillator kernels and the reconstruction identities that tie
//! the contractions `D`, `D_F`, `D_F*` to the retarded function `D_R`.
//!
//! Grid kernels store `D` itself; factors of `hbar` are applied at the sites
//! that need them.

mod charged;
mod field;

pub use charged::{
    charged_d_a_from_retarded, charged_d_b_from_retarded, charged_feynman_adjoint_from_retarded,
    charged_feynman_from_retarded, charged_field_kernels, ChargedKernels, ChargedModeSet,
};
pub use field::{
    family_contraction_from_retarded, family_feynman_from_retarded, neutral_field_kernels,
    FieldKernels, KernelFamily, Mode, ModeSet,
};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{frequency_split, spectral_derivative, Kernel, Sampled, TimeGrid};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Whether frequencies must sit exactly on DFT bins of the grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Commensurability {
    #[default]
    Strict,
    /// Off-bin frequencies are admitted; identity checks then only hold to ~1e-3.
    Loose,
}

impl Commensurability {
    pub fn check(self, grid: &TimeGrid, omega: f64) -> Result<()> {
        match self {
            Commensurability::Strict => grid.check_on_bin(omega).map(|_| ()),
            Commensurability::Loose => Ok(()),
        }
    }
}

/// Mass, frequency and Planck constant of the oscillator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OscillatorParams {
    mass: f64,
    omega0: f64,
    hbar: f64,
}

impl OscillatorParams {
    pub fn new(mass: f64, omega0: f64, hbar: f64) -> Result<Self> {
        for (name, v) in [("mass", mass), ("omega0", omega0), ("hbar", hbar)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidParams(format!("{name} must be positive and finite, got {v}")));
            }
        }
        Ok(OscillatorParams { mass, omega0, hbar })
    }

    /// `m = omega0 = hbar = 1`.
    pub fn unit() -> Self {
        OscillatorParams { mass: 1.0, omega0: 1.0, hbar: 1.0 }
    }

    /// Parses `"m,omega0,hbar"`.
    pub fn parse(s: &str) -> Result<Self> {
        let parts: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>().map_err(|e| Error::Parse(format!("`{p}`: {e}"))))
            .collect::<Result<_>>()?;
        match parts.as_slice() {
            [m, w, h] => OscillatorParams::new(*m, *w, *h),
            _ => Err(Error::Parse(format!("expected m,omega0,hbar, got `{s}`"))),
        }
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn omega0(&self) -> f64 {
        self.omega0
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    /// Position scale `sqrt(hbar / (m omega0))`.
    pub fn q0(&self) -> f64 {
        (self.hbar / (self.mass * self.omega0)).sqrt()
    }

    /// Momentum scale `sqrt(hbar m omega0)`.
    pub fn p0(&self) -> f64 {
        (self.hbar * self.mass * self.omega0).sqrt()
    }

    /// `D(tau) = -i exp(-i omega0 tau) / (2 m omega0)`.
    pub fn contraction(&self, tau: f64) -> Complex64 {
        -I * (-I * self.omega0 * tau).exp() / (2.0 * self.mass * self.omega0)
    }

    /// `D_F(tau) = theta(tau) D(tau) + theta(-tau) D(-tau)`, `theta(0) = 1/2`.
    pub fn feynman(&self, tau: f64) -> Complex64 {
        let th = heaviside(tau);
        self.contraction(tau) * th + self.contraction(-tau) * (1.0 - th)
    }

    /// `D_R(tau) = -theta(tau) sin(omega0 tau) / (m omega0)`.
    pub fn retarded(&self, tau: f64) -> f64 {
        -heaviside(tau) * (self.omega0 * tau).sin() / (self.mass * self.omega0)
    }

    /// `[q(t), p(t')] = i hbar cos(omega0 (t - t'))`.
    pub fn qp_commutator(&self, tau: f64) -> Complex64 {
        I * self.hbar * (self.omega0 * tau).cos()
    }
}

/// Step function with `theta(0) = 1/2`.
pub fn heaviside(t: f64) -> f64 {
    if t > 0.0 {
        1.0
    } else if t < 0.0 {
        0.0
    } else {
        0.5
    }
}

/// Grid-sampled oscillator kernels.
#[derive(Debug, Clone)]
pub struct OscKernels {
    pub retarded: Kernel,
    pub contraction: Kernel,
    pub feynman: Kernel,
}

/// Samples `D_R`, `D`, `D_F` on the lags of `grid`.
///
/// The step function is the grid's discrete step, and the time-reflected
/// terms are taken from the periodic reflection of the sampled `D`, so the
/// discrete identities among the three close to rounding.
pub fn osc_kernels(p: &OscillatorParams, grid: TimeGrid, mode: Commensurability) -> Result<OscKernels> {
    mode.check(&grid, p.omega0)?;
    let contraction = Kernel::from_fn(grid, |tau| p.contraction(tau));
    let reflected = contraction.reflect();
    let n = grid.n();
    let feynman_vals = (0..n)
        .map(|k| {
            let th = grid.step(k);
            contraction.values()[k] * th + reflected.values()[k] * (1.0 - th)
        })
        .collect();
    let feynman = Kernel::new(grid, feynman_vals)?;
    // Closed form with the grid's step function (1/2 at tau = 0 and at the wrap point).
    let retarded = Kernel::from_fn(grid, |tau| {
        Complex64::new(-(p.omega0 * tau).sin() / (p.mass * p.omega0), 0.0)
    })
    .causal();
    Ok(OscKernels { retarded, contraction, feynman })
}

/// `D_R(tau) = D_F(tau) - D(-tau)`.
pub fn retarded_from_contractions(feynman: &Kernel, contraction: &Kernel) -> Result<Kernel> {
    feynman.grid().ensure_same(contraction.grid())?;
    Ok(feynman - &contraction.reflect())
}

/// `D(tau) = D_R(+)(tau) - D_R(-)(-tau)`.
pub fn contraction_from_retarded(retarded: &Kernel) -> Kernel {
    let (plus, minus) = frequency_split(retarded);
    &plus - &minus.reflect()
}

/// `D_F(tau) = D_R(+)(tau) + D_R(+)(-tau)`.
pub fn feynman_from_retarded(retarded: &Kernel) -> Kernel {
    let (plus, _) = frequency_split(retarded);
    &plus + &plus.reflect()
}

/// `D_F*(tau) = D_R(-)(tau) + D_R(-)(-tau)`.
pub fn feynman_conj_from_retarded(retarded: &Kernel) -> Kernel {
    let (_, minus) = frequency_split(retarded);
    &minus + &minus.reflect()
}

/// Two-time commutator `[q(t), q(t')] = i hbar (D_R(tau) - D_R(-tau))`.
pub fn commutator_kernel(retarded: &Kernel, hbar: f64) -> Kernel {
    &(retarded - &retarded.reflect()) * (I * hbar)
}

/// `[q(t), p(t')] = i hbar m d/dt' (D_R(t - t') - D_R(t' - t))`, differentiated
/// spectrally, which is exact for on-bin kernels.
pub fn commutator_qp_kernel(retarded: &Kernel, mass: f64, hbar: f64) -> Kernel {
    let odd = retarded - &retarded.reflect();
    // d/dt' = -d/dtau
    &spectral_derivative(&odd) * (-I * hbar * mass)
}
