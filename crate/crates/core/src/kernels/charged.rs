use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::Commensurability;
use crate::spectral::{frequency_split, kernel_adjoint, Kernel, Sampled, TimeGrid};

/// Particle and antiparticle mode content of a charged field, as
/// `(frequency, weight)` pairs with positive entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChargedModeSet {
    particle: Vec<(f64, f64)>,
    antiparticle: Vec<(f64, f64)>,
}

impl ChargedModeSet {
    pub fn new(particle: Vec<(f64, f64)>, antiparticle: Vec<(f64, f64)>) -> Result<Self> {
        for &(w, s) in particle.iter().chain(&antiparticle) {
            if !(w > 0.0) || !(s > 0.0) {
                return Err(Error::InvalidParams(format!(
                    "charged modes need positive frequency and weight, got ({w}, {s})"
                )));
            }
        }
        Ok(ChargedModeSet { particle, antiparticle })
    }

    pub fn particle(&self) -> &[(f64, f64)] {
        &self.particle
    }

    pub fn antiparticle(&self) -> &[(f64, f64)] {
        &self.antiparticle
    }
}

#[derive(Debug, Clone)]
pub struct ChargedKernels {
    /// Frequency-positive particle function `D^A`.
    pub d_a: Kernel,
    /// Frequency-negative antiparticle function `D^B`.
    pub d_b: Kernel,
    pub feynman: Kernel,
    pub feynman_adjoint: Kernel,
    /// `D_F - D^B`.
    pub retarded: Kernel,
    /// `D_F^dagger - D^A^dagger`; equal to `retarded`.
    pub retarded_alt: Kernel,
}

/// `D^A(tau) = -i sum s_k exp(-i w_k tau)`, `D^B(tau) = -i sum s_k exp(+i w_k tau)`,
/// `D_F = theta D^A + theta(-tau) D^B`, and both retarded combinations.
pub fn charged_field_kernels(
    cms: &ChargedModeSet,
    grid: TimeGrid,
    mode: Commensurability,
) -> Result<ChargedKernels> {
    for &(w, _) in cms.particle.iter().chain(&cms.antiparticle) {
        mode.check(&grid, w)?;
    }
    let i = Complex64::new(0.0, 1.0);
    let d_a = Kernel::from_fn(grid, |tau| cms.particle.iter().map(|&(w, s)| -i * s * (-i * w * tau).exp()).sum());
    let d_b = Kernel::from_fn(grid, |tau| {
        cms.antiparticle.iter().map(|&(w, s)| -i * s * (i * w * tau).exp()).sum()
    });
    let n = grid.n();
    let feynman = Kernel::new(
        grid,
        (0..n)
            .map(|k| {
                let th = grid.step(k);
                d_a.values()[k] * th + d_b.values()[k] * (1.0 - th)
            })
            .collect(),
    )?;
    let feynman_adjoint = kernel_adjoint(&feynman);
    let retarded = &feynman - &d_b;
    let retarded_alt = &feynman_adjoint - &kernel_adjoint(&d_a);
    Ok(ChargedKernels { d_a, d_b, feynman, feynman_adjoint, retarded, retarded_alt })
}

/// `D^A = D_R(+) - (D_R^dagger)(+)`.
pub fn charged_d_a_from_retarded(retarded: &Kernel) -> Kernel {
    let (rp, _) = frequency_split(retarded);
    let (ap, _) = frequency_split(&kernel_adjoint(retarded));
    &rp - &ap
}

/// `D^B = (D_R^dagger)(-) - D_R(-)`.
pub fn charged_d_b_from_retarded(retarded: &Kernel) -> Kernel {
    let (_, rm) = frequency_split(retarded);
    let (_, am) = frequency_split(&kernel_adjoint(retarded));
    &am - &rm
}

/// `D_F = D_R(+) + (D_R^dagger)(-)`.
pub fn charged_feynman_from_retarded(retarded: &Kernel) -> Kernel {
    let (rp, _) = frequency_split(retarded);
    let (_, am) = frequency_split(&kernel_adjoint(retarded));
    &rp + &am
}

/// `D_F^dagger = (D_R^dagger)(+) + D_R(-)`.
pub fn charged_feynman_adjoint_from_retarded(retarded: &Kernel) -> Kernel {
    let (_, rm) = frequency_split(retarded);
    let (ap, _) = frequency_split(&kernel_adjoint(retarded));
    &ap + &rm
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> TimeGrid {
        TimeGrid::commensurate(64, 1.0, 2).unwrap()
    }

    #[test]
    fn rejects_non_positive_entries() {
        assert!(ChargedModeSet::new(vec![(1.0, 0.0)], vec![]).is_err());
        assert!(ChargedModeSet::new(vec![], vec![(-1.0, 1.0)]).is_err());
    }

    #[test]
    fn particle_only_set() {
        let cms = ChargedModeSet::new(vec![(1.0, 0.3)], vec![]).unwrap();
        let k = charged_field_kernels(&cms, grid(), Commensurability::Strict).unwrap();
        assert_eq!(k.d_b.max_abs(), 0.0);
        assert!(k.retarded.max_abs_diff(&k.d_a.causal()) < 1e-15);
    }

    #[test]
    fn anti_hermitian_contractions() {
        let cms = ChargedModeSet::new(vec![(1.0, 0.3), (1.5, 0.2)], vec![(0.5, 0.7)]).unwrap();
        let k = charged_field_kernels(&cms, grid(), Commensurability::Strict).unwrap();
        assert!(kernel_adjoint(&k.d_a).max_abs_diff(&(-&k.d_a)) < 1e-14);
        assert!(kernel_adjoint(&k.d_b).max_abs_diff(&(-&k.d_b)) < 1e-14);
        assert!(k.retarded.max_abs_diff(&k.retarded_alt) < 1e-14);
    }
}
