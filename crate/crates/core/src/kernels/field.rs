use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::Commensurability;
use crate::spectral::{frequency_split, Kernel, Sampled, TimeGrid};

/// One field mode: frequency and amplitudes `Q_mu(r)` over every (label, point) site.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mode {
    pub omega: f64,
    /// Row-major over `(mu, r)`: index `mu * n_points + r`.
    pub amplitudes: Vec<Complex64>,
}

/// Neutral-field mode content on a finite set of labels and points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSet {
    n_labels: usize,
    n_points: usize,
    modes: Vec<Mode>,
}

impl ModeSet {
    pub fn new(n_labels: usize, n_points: usize, modes: Vec<Mode>) -> Result<Self> {
        if n_labels == 0 || n_points == 0 {
            return Err(Error::InvalidParams("mode set needs at least one label and one point".into()));
        }
        for (k, m) in modes.iter().enumerate() {
            if !(m.omega > 0.0) {
                return Err(Error::InvalidParams(format!("mode {k}: frequency must be positive, got {}", m.omega)));
            }
            if m.amplitudes.len() != n_labels * n_points {
                return Err(Error::InvalidParams(format!(
                    "mode {k}: {} amplitudes, expected {}",
                    m.amplitudes.len(),
                    n_labels * n_points
                )));
            }
        }
        Ok(ModeSet { n_labels, n_points, modes })
    }

    pub fn n_labels(&self) -> usize {
        self.n_labels
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    pub fn sites(&self) -> usize {
        self.n_labels * self.n_points
    }
}

/// Kernels indexed by a pair of sites `(mu, r)`, `(mu', r')`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelFamily {
    n_labels: usize,
    n_points: usize,
    kernels: Vec<Kernel>,
}

/// Serialized form of one entry of a [`KernelFamily`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabeledKernel {
    pub mu: usize,
    pub mu_prime: usize,
    pub r: usize,
    pub r_prime: usize,
    pub kernel: crate::io::KernelRecord,
}

impl KernelFamily {
    fn sites(&self) -> usize {
        self.n_labels * self.n_points
    }

    fn from_fn(n_labels: usize, n_points: usize, f: impl Fn(usize, usize) -> Kernel) -> Self {
        let s = n_labels * n_points;
        let kernels = (0..s * s).map(|ab| f(ab / s, ab % s)).collect();
        KernelFamily { n_labels, n_points, kernels }
    }

    /// Entry by flattened site indices `a = mu * n_points + r`.
    pub fn site(&self, a: usize, b: usize) -> &Kernel {
        &self.kernels[a * self.sites() + b]
    }

    pub fn get(&self, mu: usize, r: usize, mu_prime: usize, r_prime: usize) -> &Kernel {
        self.site(mu * self.n_points + r, mu_prime * self.n_points + r_prime)
    }

    pub fn n_labels(&self) -> usize {
        self.n_labels
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    /// Largest pointwise difference across all entries.
    pub fn max_abs_diff(&self, other: &KernelFamily) -> f64 {
        self.kernels
            .iter()
            .zip(&other.kernels)
            .map(|(a, b)| a.max_abs_diff(b))
            .fold(0.0, f64::max)
    }

    pub fn to_labeled(&self) -> Vec<LabeledKernel> {
        let np = self.n_points;
        let s = self.sites();
        (0..s * s)
            .map(|ab| {
                let (a, b) = (ab / s, ab % s);
                LabeledKernel {
                    mu: a / np,
                    r: a % np,
                    mu_prime: b / np,
                    r_prime: b % np,
                    kernel: crate::io::KernelRecord::from_sampled(&self.kernels[ab]),
                }
            })
            .collect()
    }

    pub fn from_labeled(n_labels: usize, n_points: usize, entries: &[LabeledKernel]) -> Result<Self> {
        let s = n_labels * n_points;
        if entries.len() != s * s {
            return Err(Error::Parse(format!("expected {} labeled kernels, got {}", s * s, entries.len())));
        }
        let mut slots: Vec<Option<Kernel>> = vec![None; s * s];
        for e in entries {
            if e.mu >= n_labels || e.mu_prime >= n_labels || e.r >= n_points || e.r_prime >= n_points {
                return Err(Error::Parse("labeled kernel index out of range".into()));
            }
            let a = e.mu * n_points + e.r;
            let b = e.mu_prime * n_points + e.r_prime;
            slots[a * s + b] = Some(e.kernel.to_kernel()?);
        }
        let kernels = slots
            .into_iter()
            .map(|k| k.ok_or_else(|| Error::Parse("missing labeled kernel entry".into())))
            .collect::<Result<_>>()?;
        Ok(KernelFamily { n_labels, n_points, kernels })
    }
}

#[derive(Debug, Clone)]
pub struct FieldKernels {
    pub contraction: KernelFamily,
    pub feynman: KernelFamily,
    pub feynman_conj: KernelFamily,
    pub retarded: KernelFamily,
}

/// Mode-sum kernels of a neutral field:
///
/// `D_ab(tau) = -i sum_k exp(-i w_k tau) Q^k_a conj(Q^k_b)`,
/// `D_F,ab(tau) = theta(tau) D_ab(tau) + theta(-tau) D_ba(-tau)`,
/// `D_R,ab(tau) = theta(tau) [D_ab(tau) - D_ba(-tau)]`,
///
/// with `a`, `b` flattened `(mu, r)` sites.
pub fn neutral_field_kernels(ms: &ModeSet, grid: TimeGrid, mode: Commensurability) -> Result<FieldKernels> {
    for m in &ms.modes {
        mode.check(&grid, m.omega)?;
    }
    let (nl, np) = (ms.n_labels, ms.n_points);
    let i = Complex64::new(0.0, 1.0);
    let contraction = KernelFamily::from_fn(nl, np, |a, b| {
        Kernel::from_fn(grid, |tau| {
            ms.modes
                .iter()
                .map(|m| -i * (-i * m.omega * tau).exp() * m.amplitudes[a] * m.amplitudes[b].conj())
                .sum()
        })
    });
    let step = |k: &Kernel| k.causal();
    // theta(-tau) D_ba(-tau) is the reflection of theta(tau) D_ba(tau)
    let feynman = KernelFamily::from_fn(nl, np, |a, b| {
        &step(contraction.site(a, b)) + &step(contraction.site(b, a)).reflect()
    });
    let feynman_conj = KernelFamily::from_fn(nl, np, |a, b| feynman.site(a, b).conj());
    let retarded = KernelFamily::from_fn(nl, np, |a, b| {
        step(&(contraction.site(a, b) - &contraction.site(b, a).reflect()))
    });
    Ok(FieldKernels { contraction, feynman, feynman_conj, retarded })
}

/// `D_ab(tau) = D_R,ab(+)(tau) - D_R,ba(-)(-tau)`.
pub fn family_contraction_from_retarded(retarded: &KernelFamily) -> KernelFamily {
    let splits: Vec<(Kernel, Kernel)> = retarded.kernels.iter().map(frequency_split).collect();
    let s = retarded.sites();
    KernelFamily::from_fn(retarded.n_labels, retarded.n_points, |a, b| {
        &splits[a * s + b].0 - &splits[b * s + a].1.reflect()
    })
}

/// `D_F,ab(tau) = D_R,ab(+)(tau) + D_R,ba(+)(-tau)`.
pub fn family_feynman_from_retarded(retarded: &KernelFamily) -> KernelFamily {
    let plus: Vec<Kernel> = retarded.kernels.iter().map(|k| frequency_split(k).0).collect();
    let s = retarded.sites();
    KernelFamily::from_fn(retarded.n_labels, retarded.n_points, |a, b| {
        &plus[a * s + b] + &plus[b * s + a].reflect()
    })
}
