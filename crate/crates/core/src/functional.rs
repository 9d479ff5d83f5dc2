//! Characteristic functionals of the oscillator and the response substitution
//! `(eta_+, eta_-) -> (eta, sigma)` that turns the vacuum functional into a
//! classical emission form.
//!
//! Probes are grid signals; every integral is a periodic sum weighted by `dt`.
//! Moments are read off exactly: the log of each Gaussian functional is a
//! quadratic polynomial in the probe weights, so its coefficients follow from
//! finitely many evaluations, and the Gaussian moment formula does the rest.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{normal_characteristic, Branch, FockState, LinearForm, Observable, StateKind};
use crate::kernels::{ChargedKernels, FieldKernels, KernelFamily, OscKernels, OscillatorParams};
use crate::spectral::{
    bilinear, circular_convolve, edge_bin_fraction, frequency_split, integrate_product, kernel_adjoint, Kernel, Sampled,
    SampledSignal, TimeGrid,
};
use crate::wick::enumerate_pairings;

const I: Complex64 = Complex64::new(0.0, 1.0);
const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Largest moment order accepted by [`gaussian_moment`].
pub const MAX_MOMENT_ORDER: usize = 6;

/// Zero- and Nyquist-bin energy fraction above which a probe is flagged.
pub const EDGE_FLAG_THRESHOLD: f64 = 1e-10;

/// `eta = -i (eta_+ - eta_-)`, `sigma = hbar (eta_+^(+) + eta_-^(-))`.
pub fn response_substitution(
    eta_plus: &SampledSignal,
    eta_minus: &SampledSignal,
    hbar: f64,
) -> Result<(SampledSignal, SampledSignal)> {
    eta_plus.grid().ensure_same(eta_minus.grid())?;
    let eta = &(eta_plus - eta_minus) * (-I);
    let (pp, _) = frequency_split(eta_plus);
    let (_, mm) = frequency_split(eta_minus);
    let sigma = &(&pp + &mm) * hbar;
    Ok((eta, sigma))
}

/// `eta_+ = i eta^(-) + sigma / hbar`, `eta_- = -i eta^(+) + sigma / hbar`.
pub fn response_inverse(eta: &SampledSignal, sigma: &SampledSignal, hbar: f64) -> Result<(SampledSignal, SampledSignal)> {
    eta.grid().ensure_same(sigma.grid())?;
    let (ep, em) = frequency_split(eta);
    let s = sigma * (1.0 / hbar);
    Ok((&(&em * I) + &s, &(&ep * (-I)) + &s))
}

/// Probe pair `eta_+`, `eta_-` with its response variables.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeSet {
    eta_plus: SampledSignal,
    eta_minus: SampledSignal,
    eta: SampledSignal,
    sigma: SampledSignal,
}

impl ProbeSet {
    pub fn new(eta_plus: SampledSignal, eta_minus: SampledSignal, hbar: f64) -> Result<Self> {
        let (eta, sigma) = response_substitution(&eta_plus, &eta_minus, hbar)?;
        Ok(ProbeSet { eta_plus, eta_minus, eta, sigma })
    }

    pub fn from_response(eta: SampledSignal, sigma: SampledSignal, hbar: f64) -> Result<Self> {
        let (eta_plus, eta_minus) = response_inverse(&eta, &sigma, hbar)?;
        Ok(ProbeSet { eta_plus, eta_minus, eta, sigma })
    }

    pub fn zeros(grid: TimeGrid) -> Self {
        let z = SampledSignal::zeros(grid);
        ProbeSet { eta_plus: z.clone(), eta_minus: z.clone(), eta: z.clone(), sigma: z }
    }

    pub fn grid(&self) -> &TimeGrid {
        self.eta_plus.grid()
    }

    pub fn eta_plus(&self) -> &SampledSignal {
        &self.eta_plus
    }

    pub fn eta_minus(&self) -> &SampledSignal {
        &self.eta_minus
    }

    pub fn eta(&self) -> &SampledSignal {
        &self.eta
    }

    pub fn sigma(&self) -> &SampledSignal {
        &self.sigma
    }

    /// Largest zero/Nyquist energy fraction of `eta_+` and `eta_-`.
    pub fn edge_fraction(&self) -> f64 {
        edge_bin_fraction(&self.eta_plus).max(edge_bin_fraction(&self.eta_minus))
    }

    pub fn edge_flagged(&self) -> bool {
        self.edge_fraction() > EDGE_FLAG_THRESHOLD
    }
}

/// `log Phi_vac = i hbar dt^2 sum [ -1/2 eta_+ eta_+ D_F + 1/2 eta_- eta_- D_F* + eta_- eta_+ D ]`.
pub fn log_phi_vac_quadratic(ps: &ProbeSet, k: &OscKernels, hbar: f64) -> Result<Complex64> {
    let (ep, em) = (&ps.eta_plus, &ps.eta_minus);
    let ff = bilinear(ep, &k.feynman, ep)?;
    let fs = bilinear(em, &k.feynman.conj(), em)?;
    let cr = bilinear(em, &k.contraction, ep)?;
    Ok(I * hbar * (-0.5 * ff + 0.5 * fs + cr))
}

pub fn phi_vac_quadratic(ps: &ProbeSet, k: &OscKernels, hbar: f64) -> Result<Complex64> {
    Ok(log_phi_vac_quadratic(ps, k, hbar)?.exp())
}

/// `log Phi_vac = dt^2 sum eta(t) D_R(t - t') sigma(t')`.
pub fn log_phi_vac_response(ps: &ProbeSet, retarded: &Kernel) -> Result<Complex64> {
    bilinear(&ps.eta, retarded, &ps.sigma)
}

pub fn phi_vac_response(ps: &ProbeSet, retarded: &Kernel) -> Result<Complex64> {
    Ok(log_phi_vac_response(ps, retarded)?.exp())
}

/// `q_j = D_R * j`.
pub fn classical_response(retarded: &Kernel, j: &SampledSignal) -> Result<SampledSignal> {
    circular_convolve(retarded, j)
}

/// `log Phi_cl = dt sum eta(t) q_j(t)`.
pub fn log_phi_cl(eta: &SampledSignal, j: &SampledSignal, retarded: &Kernel) -> Result<Complex64> {
    eta.grid().ensure_same(j.grid())?;
    Ok(integrate_product(eta, &classical_response(retarded, j)?))
}

pub fn phi_cl(eta: &SampledSignal, j: &SampledSignal, retarded: &Kernel) -> Result<Complex64> {
    Ok(log_phi_cl(eta, j, retarded)?.exp())
}

/// `q_in(t) = (q0 / sqrt 2)(alpha e^{-i w t} + alpha* e^{i w t})` on the grid.
pub fn q_in_signal(p: &OscillatorParams, alpha: Complex64, grid: TimeGrid) -> SampledSignal {
    SampledSignal::from_fn(grid, |t| {
        let f = LinearForm::heisenberg(p, Observable::Q, t);
        alpha * f.c_a + alpha.conj() * f.c_adag
    })
}

/// Options for the Fock-space path of [`phi_in`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FockPath {
    pub dim: usize,
    pub order: usize,
}

impl Default for FockPath {
    fn default() -> Self {
        FockPath { dim: 40, order: 6 }
    }
}

/// `Phi_in(eta) = < :exp sum dt eta q: >`. Vacuum and coherent states are analytic;
/// Fock and thermal states use the truncated normally ordered series.
pub fn phi_in(state: &StateKind, eta: &SampledSignal, p: &OscillatorParams, fock: FockPath) -> Result<Complex64> {
    match *state {
        StateKind::Vacuum => Ok(Complex64::new(1.0, 0.0)),
        StateKind::Coherent { re, im } => Ok(log_phi_in_coherent(Complex64::new(re, im), eta, p).exp()),
        StateKind::Fock { .. } | StateKind::Thermal { .. } => {
            if fock.order > MAX_MOMENT_ORDER {
                return Err(Error::Unsupported(format!("Fock-path order {} exceeds {MAX_MOMENT_ORDER}", fock.order)));
            }
            let st = FockState::make(*state, fock.dim)?;
            let (c_a, c_adag) = ladder_projections(eta, p);
            normal_characteristic(&st, c_a, c_adag, fock.order)
        }
    }
}

fn log_phi_in_coherent(alpha: Complex64, eta: &SampledSignal, p: &OscillatorParams) -> Complex64 {
    integrate_product(eta, &q_in_signal(p, alpha, *eta.grid()))
}

/// `(dt sum eta c_a(t), dt sum eta c_adag(t))` for the Heisenberg `q(t)`.
fn ladder_projections(eta: &SampledSignal, p: &OscillatorParams) -> (Complex64, Complex64) {
    let g = eta.grid();
    eta.values().iter().enumerate().fold((ZERO, ZERO), |(ca, cb), (k, &e)| {
        let f = LinearForm::heisenberg(p, Observable::Q, g.time(k));
        (ca + e * f.c_a * g.dt(), cb + e * f.c_adag * g.dt())
    })
}

/// Both forms of the full functional.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhiFull {
    /// `Phi_vac(eta_+, eta_-) Phi_in(eta) Phi_cl(eta; j)`.
    pub factorized: Complex64,
    /// `Phi_cl(eta; j + sigma) Phi_in(eta)`.
    pub response_form: Complex64,
}

impl PhiFull {
    pub fn residual(&self) -> f64 {
        (self.factorized - self.response_form).norm() / self.factorized.norm().max(1e-300)
    }
}

pub fn phi_full(
    ps: &ProbeSet,
    j: &SampledSignal,
    state: &StateKind,
    kernels: &OscKernels,
    p: &OscillatorParams,
    fock: FockPath,
) -> Result<PhiFull> {
    let logs = log_phi_full(ps, j, state, kernels, p, fock)?;
    Ok(PhiFull { factorized: logs.factorized.exp(), response_form: logs.response_form.exp() })
}

/// Logs of both forms; defined for every state, with the Fock-path `Phi_in` entering through its log.
pub fn log_phi_full(
    ps: &ProbeSet,
    j: &SampledSignal,
    state: &StateKind,
    kernels: &OscKernels,
    p: &OscillatorParams,
    fock: FockPath,
) -> Result<PhiFull> {
    let log_in = match *state {
        StateKind::Vacuum => ZERO,
        StateKind::Coherent { re, im } => log_phi_in_coherent(Complex64::new(re, im), &ps.eta, p),
        _ => phi_in(state, &ps.eta, p, fock)?.ln(),
    };
    let log_vac = log_phi_vac_quadratic(ps, kernels, p.hbar())?;
    let log_cl = log_phi_cl(&ps.eta, j, &kernels.retarded)?;
    let log_resp = log_phi_cl(&ps.eta, &(j + &ps.sigma), &kernels.retarded)?;
    Ok(PhiFull { factorized: log_vac + log_in + log_cl, response_form: log_resp + log_in })
}

/// `d^m / d x_1 ... d x_m exp(1/2 x Q x + L x)` at `x = 0`:
/// the sum over pairings of `prod Q(pair) prod L(single)`.
pub fn gaussian_moment(q: impl Fn(usize, usize) -> Complex64, l: impl Fn(usize) -> Complex64, m: usize) -> Result<Complex64> {
    if m > MAX_MOMENT_ORDER {
        return Err(Error::TooManyFactors { count: m, limit: MAX_MOMENT_ORDER });
    }
    let mut total = ZERO;
    for pairing in enumerate_pairings(m)? {
        let mut used = vec![false; m];
        let mut term = Complex64::new(1.0, 0.0);
        for &(i, j) in &pairing {
            used[i] = true;
            used[j] = true;
            term *= q(i, j);
        }
        for (k, u) in used.iter().enumerate() {
            if !u {
                term *= l(k);
            }
        }
        total += term;
    }
    Ok(total)
}

/// A point probe on the grid: sample index and contour branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbePoint {
    pub index: usize,
    pub branch: Branch,
}

/// Quadratic and linear coefficients of a log-functional in spike weights.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticCoefficients {
    pub quadratic: Vec<Vec<Complex64>>,
    pub linear: Vec<Complex64>,
}

/// Recovers `Q_ab`, `L_a` of `f(w) = 1/2 w Q w + L w` by polarization. The probe
/// for weights `w` places `w_a / dt` at each point on its branch, so that
/// `dt sum eta(t) q(t) = sum w_a q(t_a)`.
pub fn polarize(
    grid: TimeGrid,
    points: &[ProbePoint],
    log_phi: impl Fn(&SampledSignal, &SampledSignal) -> Result<Complex64>,
) -> Result<QuadraticCoefficients> {
    let m = points.len();
    let eval = |w: &[(usize, f64)]| -> Result<Complex64> {
        let mut ep = vec![ZERO; grid.n()];
        let mut em = vec![ZERO; grid.n()];
        for &(a, x) in w {
            let v = Complex64::new(x / grid.dt(), 0.0);
            match points[a].branch {
                Branch::Minus => em[points[a].index] += v,
                _ => ep[points[a].index] += v,
            }
        }
        log_phi(&SampledSignal::new(grid, ep)?, &SampledSignal::new(grid, em)?)
    };
    let mut plus = Vec::with_capacity(m);
    let mut minus = Vec::with_capacity(m);
    for a in 0..m {
        plus.push(eval(&[(a, 1.0)])?);
        minus.push(eval(&[(a, -1.0)])?);
    }
    let mut quadratic = vec![vec![ZERO; m]; m];
    for a in 0..m {
        quadratic[a][a] = plus[a] + minus[a];
        for b in (a + 1)..m {
            let v = eval(&[(a, 1.0), (b, 1.0)])? - plus[a] - plus[b];
            quadratic[a][b] = v;
            quadratic[b][a] = v;
        }
    }
    let linear = (0..m).map(|a| 0.5 * (plus[a] - minus[a])).collect();
    Ok(QuadraticCoefficients { quadratic, linear })
}

/// Double-time-ordered moment `< T_- q...q T_+ q...q >` from the coefficients of
/// `log Phi(eta_-, eta_+)`: each minus-branch derivative carries `-i`, each plus `+i`.
pub fn double_time_moment(points: &[ProbePoint], c: &QuadraticCoefficients) -> Result<Complex64> {
    let n_minus = points.iter().filter(|p| p.branch == Branch::Minus).count() as i32;
    let n_plus = points.len() as i32 - n_minus;
    let prefactor = (-I).powi(n_minus) * I.powi(n_plus);
    Ok(prefactor * gaussian_moment(|a, b| c.quadratic[a][b], |a| c.linear[a], points.len())?)
}

/// Double-time moment extracted from [`log_phi_full`] for a Gaussian initial state.
pub fn phi_full_moment(
    points: &[ProbePoint],
    j: &SampledSignal,
    state: &StateKind,
    kernels: &OscKernels,
    p: &OscillatorParams,
) -> Result<Complex64> {
    if !matches!(state, StateKind::Vacuum | StateKind::Coherent { .. }) {
        return Err(Error::Unsupported("moments of Phi_full need a Gaussian (vacuum or coherent) state".into()));
    }
    let grid = *j.grid();
    let coeffs = polarize(grid, points, |ep, em| {
        let ps = ProbeSet::new(ep.clone(), em.clone(), p.hbar())?;
        Ok(log_phi_full(&ps, j, state, kernels, p, FockPath::default())?.factorized)
    })?;
    double_time_moment(points, &coeffs)
}

/// Ordering variant relating Schwinger currents to the Kubo current.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Normal,
    Weyl,
    Antinormal,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Normal, Variant::Weyl, Variant::Antinormal];

    /// Coefficient `g` of the Gaussian factor `exp(g dt^2 sum eta D eta)`.
    pub fn gaussian_coefficient(self, hbar: f64) -> Complex64 {
        match self {
            Variant::Normal => ZERO,
            Variant::Weyl => I * (hbar / 2.0),
            Variant::Antinormal => I * hbar,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Normal => "normal",
            Variant::Weyl => "weyl",
            Variant::Antinormal => "antinormal",
        }
    }
}

/// Schwinger currents `j_± = hbar eta_±` with a chosen Kubo-current map.
#[derive(Debug, Clone, PartialEq)]
pub struct CurrentPair {
    pub j_plus: SampledSignal,
    pub j_minus: SampledSignal,
    pub variant: Variant,
}

impl CurrentPair {
    pub fn new(j_plus: SampledSignal, j_minus: SampledSignal, variant: Variant) -> Result<Self> {
        j_plus.grid().ensure_same(j_minus.grid())?;
        Ok(CurrentPair { j_plus, j_minus, variant })
    }

    /// normal: `j_+^(+) + j_-^(-)`; weyl: `(j_+ + j_-)/2`; antinormal: `j_+^(-) + j_-^(+)`.
    pub fn kubo_current(&self) -> SampledSignal {
        let (pp, pm) = frequency_split(&self.j_plus);
        let (mp, mm) = frequency_split(&self.j_minus);
        match self.variant {
            Variant::Normal => &pp + &mm,
            Variant::Weyl => &(&self.j_plus + &self.j_minus) * 0.5,
            Variant::Antinormal => &pm + &mp,
        }
    }

    /// `hbar eta = -i (j_+ - j_-)`.
    pub fn eta(&self, hbar: f64) -> SampledSignal {
        &(&self.j_plus - &self.j_minus) * (-I / hbar)
    }

    /// Probe set `eta_± = j_± / hbar`.
    pub fn probes(&self, hbar: f64) -> Result<ProbeSet> {
        ProbeSet::new(&self.j_plus * (1.0 / hbar), &self.j_minus * (1.0 / hbar), hbar)
    }
}

/// `(eta, kubo current)` of a current pair.
pub fn schwinger_map(cp: &CurrentPair, hbar: f64) -> (SampledSignal, SampledSignal) {
    (cp.eta(hbar), cp.kubo_current())
}

/// Relative residual of `log Phi_vac(j_-/hbar, j_+/hbar) = dt^2 <eta, D_R j_v> + g_v dt^2 <eta, D eta>`.
pub fn schwinger_residual(cp: &CurrentPair, kernels: &OscKernels, hbar: f64) -> Result<f64> {
    let ps = cp.probes(hbar)?;
    let lhs = log_phi_vac_quadratic(&ps, kernels, hbar)?;
    let (eta, kubo) = schwinger_map(cp, hbar);
    let rhs = bilinear(&eta, &kernels.retarded, &kubo)?
        + cp.variant.gaussian_coefficient(hbar) * bilinear(&eta, &kernels.contraction, &eta)?;
    Ok(relative(lhs, rhs))
}

/// `|a - b| / max(|a|, |b|, tiny)`.
pub fn relative(a: Complex64, b: Complex64) -> f64 {
    let scale = a.norm().max(b.norm());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).norm() / scale
    }
}

/// The three forms of the Weyl Gaussian exponent:
/// `<eta, D_R (eta^(+) - eta^(-))>`, `<eta, [D_R^(+)(tau) - D_R^(-)(-tau)] eta>`, `<eta, D eta>`.
pub fn weyl_kernel_forms(eta: &SampledSignal, contraction: &Kernel, retarded: &Kernel) -> Result<[Complex64; 3]> {
    let (ep, em) = frequency_split(eta);
    let (rp, rm) = frequency_split(retarded);
    let shifted = &rp - &rm.reflect();
    Ok([bilinear(eta, retarded, &(&ep - &em))?, bilinear(eta, &shifted, eta)?, bilinear(eta, contraction, eta)?])
}

/// Max relative spread among the three [`weyl_kernel_forms`].
pub fn weyl_kernel_identity(eta: &SampledSignal, contraction: &Kernel, retarded: &Kernel) -> Result<f64> {
    let [a, b, c] = weyl_kernel_forms(eta, contraction, retarded)?;
    Ok(relative(a, b).max(relative(b, c)).max(relative(a, c)))
}

/// Symmetrized contraction `(i hbar / 2)(D(tau) + D(-tau))`, the Weyl two-point Gaussian kernel.
pub fn weyl_pair(p: &OscillatorParams, tau: f64) -> Complex64 {
    I * (p.hbar() / 2.0) * (p.contraction(tau) + p.contraction(-tau))
}

/// `i hbar (D(tau) + D(-tau))`, the antinormal two-point Gaussian kernel.
pub fn antinormal_pair(p: &OscillatorParams, tau: f64) -> Complex64 {
    I * p.hbar() * (p.contraction(tau) + p.contraction(-tau))
}

/// Moments of `<O exp sum eta q>` for ordering `O` in {normal, weyl, antinormal} and a
/// Gaussian state: pairings of the ordering kernel times products of `q_in`.
pub fn ordered_gaussian_moment(variant: Variant, times: &[f64], alpha: Complex64, p: &OscillatorParams) -> Result<Complex64> {
    let q_in = |t: f64| {
        let f = LinearForm::heisenberg(p, Observable::Q, t);
        alpha * f.c_a + alpha.conj() * f.c_adag
    };
    let pair = |a: usize, b: usize| {
        let tau = times[a] - times[b];
        match variant {
            Variant::Normal => ZERO,
            Variant::Weyl => weyl_pair(p, tau),
            Variant::Antinormal => antinormal_pair(p, tau),
        }
    };
    gaussian_moment(pair, |a| q_in(times[a]), times.len())
}

/// Alpha of a Gaussian state, or an error for states without a Gaussian functional.
pub fn gaussian_alpha(state: &StateKind) -> Result<Complex64> {
    match *state {
        StateKind::Vacuum => Ok(ZERO),
        StateKind::Coherent { re, im } => Ok(Complex64::new(re, im)),
        _ => Err(Error::Unsupported(format!("state {} has no Gaussian functional", state.label()))),
    }
}

/// Residuals of the Weyl factor identity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeylCheck {
    /// Spread of the three kernel forms of the Gaussian exponent.
    pub kernel_identity: f64,
    /// `|normal moment + weyl pair - Fock Weyl average|` at the given time pair.
    pub two_point: f64,
}

/// Checks the kernel rearrangement of the Weyl Gaussian factor and the two-point
/// Weyl average against the Fock oracle.
pub fn weyl_factor_check(
    eta: &SampledSignal,
    kernels: &OscKernels,
    state: &StateKind,
    p: &OscillatorParams,
    times: (f64, f64),
    dim: usize,
) -> Result<WeylCheck> {
    use crate::fock::{ordered_average, Factor, OperatorOrdering, OrderedProductSpec};
    let alpha = gaussian_alpha(state)?;
    let kernel_identity = weyl_kernel_identity(eta, &kernels.contraction, &kernels.retarded)?;
    let st = FockState::make(*state, dim)?;
    let factors = vec![Factor::q(times.0, Branch::None), Factor::q(times.1, Branch::None)];
    let normal = ordered_average(&st, &OrderedProductSpec::new(factors.clone(), OperatorOrdering::Normal), p)?;
    let weyl = ordered_average(&st, &OrderedProductSpec::new(factors, OperatorOrdering::Weyl), p)?;
    let predicted = normal + weyl_pair(p, times.0 - times.1);
    let analytic = ordered_gaussian_moment(Variant::Weyl, &[times.0, times.1], alpha, p)?;
    let two_point = (predicted - weyl).norm().max((analytic - weyl).norm());
    Ok(WeylCheck { kernel_identity, two_point })
}

/// Site-resolved probes for a neutral field: one signal per flattened `(mu, r)` site.
fn family_bilinear(a: &[SampledSignal], fam: &KernelFamily, b: &[SampledSignal], conj: bool) -> Result<Complex64> {
    let s = a.len();
    let mut total = ZERO;
    for x in 0..s {
        for y in 0..s {
            let k = fam.site(x, y);
            total += if conj { bilinear(&a[x], &k.conj(), &b[y])? } else { bilinear(&a[x], k, &b[y])? };
        }
    }
    Ok(total)
}

/// Quadratic and response forms of the neutral-field vacuum functional; returns both logs.
pub fn field_forms(
    eta_plus: &[SampledSignal],
    eta_minus: &[SampledSignal],
    fk: &FieldKernels,
    hbar: f64,
) -> Result<(Complex64, Complex64)> {
    let sites = fk.contraction.n_labels() * fk.contraction.n_points();
    if eta_plus.len() != sites || eta_minus.len() != sites {
        return Err(Error::InvalidParams(format!("field probes need {sites} sites")));
    }
    let quad = I
        * hbar
        * (-0.5 * family_bilinear(eta_plus, &fk.feynman, eta_plus, false)?
            + 0.5 * family_bilinear(eta_minus, &fk.feynman, eta_minus, true)?
            + family_bilinear(eta_minus, &fk.contraction, eta_plus, false)?);
    let mut eta = Vec::with_capacity(sites);
    let mut sigma = Vec::with_capacity(sites);
    for (ep, em) in eta_plus.iter().zip(eta_minus) {
        let (e, s) = response_substitution(ep, em, hbar)?;
        eta.push(e);
        sigma.push(s);
    }
    let resp = family_bilinear(&eta, &fk.retarded, &sigma, false)?;
    Ok((quad, resp))
}

/// Probes of a charged field: `eta_±` and the independent conjugate-field probes `bar eta_±`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChargedProbes {
    pub eta_plus: SampledSignal,
    pub eta_minus: SampledSignal,
    pub bar_plus: SampledSignal,
    pub bar_minus: SampledSignal,
}

/// Four-contraction quadratic form and the two-term `D_R` form of the charged vacuum functional.
///
/// `i hbar [ -<bar eta_+, D_F eta_+> + <bar eta_-, D_F^dagger eta_-> + <bar eta_-, D^A eta_+> + <bar eta_+, D^B eta_-> ]`
/// against `<bar eta, D_R sigma> + <eta, D_R* bar sigma>`.
pub fn charged_forms(pr: &ChargedProbes, ck: &ChargedKernels, hbar: f64) -> Result<(Complex64, Complex64)> {
    let quad = I
        * hbar
        * (-bilinear(&pr.bar_plus, &ck.feynman, &pr.eta_plus)?
            + bilinear(&pr.bar_minus, &kernel_adjoint(&ck.feynman), &pr.eta_minus)?
            + bilinear(&pr.bar_minus, &ck.d_a, &pr.eta_plus)?
            + bilinear(&pr.bar_plus, &ck.d_b, &pr.eta_minus)?);
    let (eta, sigma) = response_substitution(&pr.eta_plus, &pr.eta_minus, hbar)?;
    let (bar_eta, bar_sigma) = response_substitution(&pr.bar_plus, &pr.bar_minus, hbar)?;
    let resp = bilinear(&bar_eta, &ck.retarded, &sigma)? + bilinear(&eta, &ck.retarded.conj(), &bar_sigma)?;
    Ok((quad, resp))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{ordered_average, Factor, OperatorOrdering, OrderedProductSpec};
    use crate::kernels::{osc_kernels, Commensurability};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid64() -> TimeGrid {
        TimeGrid::commensurate(64, 1.0, 4).unwrap()
    }

    fn random_signal(rng: &mut ChaCha8Rng, grid: TimeGrid) -> SampledSignal {
        SampledSignal::new(grid, (0..grid.n()).map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect())
            .unwrap()
    }

    fn kernels(p: &OscillatorParams, g: TimeGrid) -> OscKernels {
        osc_kernels(p, g, Commensurability::Strict).unwrap()
    }

    #[test]
    fn substitution_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = grid64();
        let (ep, em) = (random_signal(&mut rng, g), random_signal(&mut rng, g));
        let (eta, sigma) = response_substitution(&ep, &em, 0.7).unwrap();
        let (bp, bm) = response_inverse(&eta, &sigma, 0.7).unwrap();
        assert!(bp.max_abs_diff(&ep) < 1e-13);
        assert!(bm.max_abs_diff(&em) < 1e-13);
    }

    #[test]
    fn equal_probes_cancel() {
        let g = grid64();
        let f = SampledSignal::from_fn(g, |t| Complex64::new((2.0 * t).cos() + 0.3 * (3.0 * t).sin(), 0.0));
        let (eta, sigma) = response_substitution(&f, &f, 2.0).unwrap();
        assert_eq!(eta.max_abs(), 0.0);
        assert!(sigma.max_abs_diff(&(&f * 2.0)) < 1e-13);
    }

    #[test]
    fn conjugate_probes_give_real_response_variables() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let ep = random_signal(&mut rng, grid64());
        let (eta, sigma) = response_substitution(&ep, &ep.conj(), 1.0).unwrap();
        assert!(eta.values().iter().all(|z| z.im.abs() < 1e-12));
        assert!(sigma.values().iter().all(|z| z.im.abs() < 1e-12));
    }

    #[test]
    fn quadratic_equals_response_form() {
        let p = OscillatorParams::new(1.3, 1.0, 0.8).unwrap();
        let g = grid64();
        let k = kernels(&p, g);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..5 {
            let ps = ProbeSet::new(random_signal(&mut rng, g), random_signal(&mut rng, g), p.hbar()).unwrap();
            let a = log_phi_vac_quadratic(&ps, &k, p.hbar()).unwrap();
            let b = log_phi_vac_response(&ps, &k.retarded).unwrap();
            assert!(relative(a, b) < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn single_spike_quadratic() {
        let p = OscillatorParams::unit();
        let g = grid64();
        let k = kernels(&p, g);
        let w = 0.6;
        let mut ep = SampledSignal::zeros(g).into_values();
        ep[g.index_of(0.0).unwrap()] = Complex64::new(w, 0.0);
        let ps = ProbeSet::new(SampledSignal::new(g, ep).unwrap(), SampledSignal::zeros(g), p.hbar()).unwrap();
        let expect = -I * p.hbar() * w * w * g.dt() * g.dt() * k.feynman.at_lag(0) / 2.0;
        assert!((log_phi_vac_quadratic(&ps, &k, p.hbar()).unwrap() - expect).norm() < 1e-15);
        assert_eq!(phi_vac_quadratic(&ProbeSet::zeros(g), &k, 1.0).unwrap(), Complex64::new(1.0, 0.0));
    }

    #[test]
    fn reality_of_conjugate_probes() {
        let p = OscillatorParams::unit();
        let g = grid64();
        let k = kernels(&p, g);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let ep = &random_signal(&mut rng, g) * 0.1;
        let ps = ProbeSet::new(ep.clone(), ep.conj(), 1.0).unwrap();
        assert!(log_phi_vac_quadratic(&ps, &k, 1.0).unwrap().im.abs() < 1e-12);
    }

    #[test]
    fn response_with_spikes() {
        let p = OscillatorParams::unit();
        let g = grid64();
        let k = kernels(&p, g);
        let (i1, i0) = (g.index_of(1.5 * g.dt() * 2.0).unwrap(), g.index_of(0.0).unwrap());
        let mut eta = vec![ZERO; g.n()];
        let mut sigma = vec![ZERO; g.n()];
        eta[i1] = Complex64::new(0.7, 0.0);
        sigma[i0] = Complex64::new(-1.1, 0.0);
        let ps = ProbeSet::from_response(SampledSignal::new(g, eta).unwrap(), SampledSignal::new(g, sigma).unwrap(), 1.0).unwrap();
        let expect = g.dt() * g.dt() * 0.7 * -1.1 * k.retarded.between(i1, i0);
        assert!((log_phi_vac_response(&ps, &k.retarded).unwrap() - expect).norm() < 1e-15);
        let zero_sigma = ProbeSet::from_response(ps.eta().clone(), SampledSignal::zeros(g), 1.0).unwrap();
        assert_eq!(phi_vac_response(&zero_sigma, &k.retarded).unwrap(), Complex64::new(1.0, 0.0));
    }

    #[test]
    fn coherent_phi_in_spike() {
        let p = OscillatorParams::unit();
        let g = grid64();
        let w = 0.05;
        let mut eta = vec![ZERO; g.n()];
        eta[g.index_of(0.0).unwrap()] = Complex64::new(w, 0.0);
        let eta = SampledSignal::new(g, eta).unwrap();
        let st = StateKind::Coherent { re: 1.0, im: 0.0 };
        let analytic = phi_in(&st, &eta, &p, FockPath::default()).unwrap();
        assert!((analytic.ln() - Complex64::new(w * g.dt() * 2f64.sqrt(), 0.0)).norm() < 1e-14);
        let oracle = FockState::make(st, 40).unwrap();
        let (ca, cb) = ladder_projections(&eta, &p);
        let numeric = normal_characteristic(&oracle, ca, cb, 6).unwrap();
        assert!((numeric - analytic).norm() < 1e-10);
        assert_eq!(phi_in(&StateKind::Vacuum, &eta, &p, FockPath::default()).unwrap(), Complex64::new(1.0, 0.0));
    }

    #[test]
    fn gaussian_moment_orders() {
        let l = [Complex64::new(0.3, 0.1), Complex64::new(-0.2, 0.5), Complex64::new(0.7, 0.0), Complex64::new(0.1, -0.4)];
        let q = |a: usize, b: usize| Complex64::new(0.1 * (a + 2 * b + 1) as f64, 0.05 * (a * b) as f64);
        let qs = |a: usize, b: usize| if a <= b { q(a, b) } else { q(b, a) };
        assert_eq!(gaussian_moment(qs, |a| l[a], 1).unwrap(), l[0]);
        assert!((gaussian_moment(qs, |a| l[a], 2).unwrap() - (qs(0, 1) + l[0] * l[1])).norm() < 1e-15);
        let four = gaussian_moment(qs, |_| ZERO, 4).unwrap();
        let expect = qs(0, 1) * qs(2, 3) + qs(0, 2) * qs(1, 3) + qs(0, 3) * qs(1, 2);
        assert!((four - expect).norm() < 1e-15);
        assert!(gaussian_moment(qs, |a| l[a % 4], 7).is_err());
    }

    /// Central finite differences of `exp(1/2 x Q x + L x)` in four variables.
    #[test]
    fn gaussian_moment_matches_finite_differences() {
        let qm = [[0.4, 0.1, -0.2, 0.3], [0.1, -0.5, 0.2, 0.05], [-0.2, 0.2, 0.3, -0.1], [0.3, 0.05, -0.1, 0.2]];
        let l = [0.2, -0.1, 0.3, 0.15];
        let f = |x: [f64; 4]| {
            let mut s = 0.0;
            for a in 0..4 {
                s += l[a] * x[a];
                for b in 0..4 {
                    s += 0.5 * qm[a][b] * x[a] * x[b];
                }
            }
            s.exp()
        };
        let h = 1e-2;
        let mut fd = 0.0;
        for mask in 0..16u32 {
            let mut x = [0.0; 4];
            let mut sign = 1.0;
            for (a, xa) in x.iter_mut().enumerate() {
                if mask & (1 << a) != 0 {
                    *xa = h;
                } else {
                    *xa = -h;
                    sign = -sign;
                }
            }
            fd += sign * f(x);
        }
        fd /= (2.0 * h).powi(4);
        let exact = gaussian_moment(|a, b| Complex64::new(qm[a][b], 0.0), |a| Complex64::new(l[a], 0.0), 4).unwrap();
        assert!((exact.re - fd).abs() < 1e-4, "{exact} vs {fd}");
    }

    #[test]
    fn full_functional_forms_agree_and_moments_match_oracle() {
        let p = OscillatorParams::unit();
        let g = TimeGrid::commensurate(128, 1.0, 4).unwrap();
        let k = kernels(&p, g);
        let j = SampledSignal::from_fn(g, |t| Complex64::new(if t >= 0.0 { 0.3 } else { 0.0 }, 0.0));
        let st = StateKind::Coherent { re: 0.5, im: 0.0 };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let ps = ProbeSet::new(&random_signal(&mut rng, g) * 0.05, &random_signal(&mut rng, g) * 0.05, 1.0).unwrap();
        let full = phi_full(&ps, &j, &st, &k, &p, FockPath::default()).unwrap();
        assert!(full.residual() < 1e-10);

        let q_j = classical_response(&k.retarded, &j).unwrap();
        let i0 = g.index_of(0.0).unwrap();
        let points = [ProbePoint { index: i0 + 5, branch: Branch::Minus }, ProbePoint { index: i0 + 9, branch: Branch::Plus }];
        let moment = phi_full_moment(&points, &j, &st, &k, &p).unwrap();
        let factors: Vec<Factor> = points.iter().map(|pt| Factor::q(g.time(pt.index), pt.branch)).collect();
        let spec = OrderedProductSpec::new(factors, OperatorOrdering::DoubleTime).with_shift_signal(&q_j).unwrap();
        let oracle = ordered_average(&FockState::make(st, 40).unwrap(), &spec, &p).unwrap();
        assert!((moment - oracle).norm() < 1e-9, "{moment} vs {oracle}");
    }

    #[test]
    fn current_maps() {
        let g = grid64();
        let f = SampledSignal::from_fn(g, |t| Complex64::new((2.0 * t).cos(), 0.0));
        for v in Variant::ALL {
            let cp = CurrentPair::new(f.clone(), f.clone(), v).unwrap();
            let (eta, kubo) = schwinger_map(&cp, 1.0);
            assert_eq!(eta.max_abs(), 0.0);
            assert!(kubo.max_abs_diff(&f) < 1e-13, "{v:?}");
        }
        let p = OscillatorParams::new(0.9, 1.0, 1.4).unwrap();
        let k = kernels(&p, g);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let jp = random_signal(&mut rng, g);
        for v in Variant::ALL {
            let cp = CurrentPair::new(jp.clone(), jp.conj(), v).unwrap();
            let (eta, kubo) = schwinger_map(&cp, p.hbar());
            assert!(eta.values().iter().all(|z| z.im.abs() < 1e-12));
            if v == Variant::Weyl {
                assert!(kubo.values().iter().all(|z| z.im.abs() < 1e-12));
            }
            assert!(schwinger_residual(&CurrentPair::new(jp.clone(), random_signal(&mut rng, g), v).unwrap(), &k, p.hbar()).unwrap() < 1e-12);
        }
        let cp = CurrentPair::new(jp.clone(), random_signal(&mut rng, g), Variant::Normal).unwrap();
        let (eta, kubo) = schwinger_map(&cp, p.hbar());
        let (eta2, sigma) = response_substitution(&(&cp.j_plus * (1.0 / p.hbar())), &(&cp.j_minus * (1.0 / p.hbar())), p.hbar()).unwrap();
        assert!(eta.max_abs_diff(&eta2) < 1e-14);
        assert!(kubo.max_abs_diff(&sigma) < 1e-13);
    }

    #[test]
    fn weyl_checks() {
        let p = OscillatorParams::unit();
        let g = grid64();
        let k = kernels(&p, g);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let eta = random_signal(&mut rng, g);
        let vac = weyl_factor_check(&eta, &k, &StateKind::Vacuum, &p, (0.0, 0.0), 20).unwrap();
        assert!(vac.kernel_identity < 1e-12 && vac.two_point < 1e-12);
        assert!((weyl_pair(&p, 0.0) - Complex64::new(0.5, 0.0)).norm() < 1e-15);
        let coh = weyl_factor_check(&eta, &k, &StateKind::Coherent { re: 1.0, im: 0.0 }, &p, (0.3, -0.8), 40).unwrap();
        assert!(coh.two_point < 1e-10);
        assert!((weyl_pair(&p, 1.1).re - (1.1f64).cos() / 2.0).abs() < 1e-15);
        assert!(weyl_factor_check(&eta, &k, &StateKind::Fock { n: 1 }, &p, (0.0, 0.0), 10).is_err());
    }

    #[test]
    fn neutral_field_forms_agree() {
        use crate::kernels::{neutral_field_kernels, Mode, ModeSet};
        let g = TimeGrid::commensurate(64, 1.0, 2).unwrap();
        let c = Complex64::new;
        let modes = vec![
            Mode { omega: 1.0, amplitudes: vec![c(1.0, 0.0), c(0.3, -0.2), c(-0.5, 0.1), c(0.2, 0.7)] },
            Mode { omega: 1.5, amplitudes: vec![c(0.4, 0.4), c(-0.1, 0.9), c(0.6, 0.0), c(0.0, -0.3)] },
            Mode { omega: 3.0, amplitudes: vec![c(0.2, -0.6), c(0.8, 0.1), c(-0.7, -0.2), c(0.5, 0.5)] },
        ];
        let fk = neutral_field_kernels(&ModeSet::new(2, 2, modes).unwrap(), g, Commensurability::Strict).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let ep: Vec<_> = (0..4).map(|_| random_signal(&mut rng, g)).collect();
        let em: Vec<_> = (0..4).map(|_| random_signal(&mut rng, g)).collect();
        let (quad, resp) = field_forms(&ep, &em, &fk, 0.8).unwrap();
        assert!(relative(quad, resp) < 1e-10, "{quad} {resp}");
        assert!(field_forms(&ep[..3], &em, &fk, 0.8).is_err());
    }

    #[test]
    fn charged_field_forms_agree() {
        use crate::kernels::{charged_field_kernels, ChargedModeSet};
        let g = TimeGrid::commensurate(64, 1.0, 2).unwrap();
        let cms = ChargedModeSet::new(vec![(1.0, 0.7), (1.5, 0.2), (3.0, 1.1)], vec![(0.5, 0.4), (2.0, 0.9)]).unwrap();
        let ck = charged_field_kernels(&cms, g, Commensurability::Strict).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let pr = ChargedProbes {
            eta_plus: random_signal(&mut rng, g),
            eta_minus: random_signal(&mut rng, g),
            bar_plus: random_signal(&mut rng, g),
            bar_minus: random_signal(&mut rng, g),
        };
        let (quad, resp) = charged_forms(&pr, &ck, 1.3).unwrap();
        assert!(relative(quad, resp) < 1e-10, "{quad} {resp}");
    }
}
