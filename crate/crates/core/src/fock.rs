//! Truncated number-basis oracle: ladder operators, Heisenberg-picture `q` and `p`,
//! density matrices, and averages of operator products under every ordering used
//! by the response algebra.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::OscillatorParams;
use crate::spectral::{Sampled, SampledSignal};

pub type CMatrix = DMatrix<Complex64>;

const I: Complex64 = Complex64::new(0.0, 1.0);
const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Largest number of factors accepted by [`ordered_average`].
pub const MAX_FACTORS: usize = 8;

/// Largest truncated-norm deficit a state may carry.
pub const MAX_DEFICIT: f64 = 1e-10;

/// Dense operator on the truncated number basis.
#[derive(Debug, Clone, PartialEq)]
pub struct FockOperator {
    matrix: CMatrix,
}

impl FockOperator {
    pub fn from_matrix(matrix: CMatrix) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() || matrix.nrows() < 2 {
            return Err(Error::Dimension(format!("operator must be square with dim >= 2, got {}x{}", matrix.nrows(), matrix.ncols())));
        }
        Ok(FockOperator { matrix })
    }

    pub fn identity(dim: usize) -> Self {
        FockOperator { matrix: CMatrix::identity(dim, dim) }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn adjoint(&self) -> Self {
        FockOperator { matrix: self.matrix.adjoint() }
    }

    pub fn compose(&self, rhs: &FockOperator) -> Self {
        FockOperator { matrix: &self.matrix * &rhs.matrix }
    }

    pub fn commutator(&self, rhs: &FockOperator) -> Self {
        FockOperator { matrix: &self.matrix * &rhs.matrix - &rhs.matrix * &self.matrix }
    }

    pub fn scale(&self, c: Complex64) -> Self {
        FockOperator { matrix: &self.matrix * c }
    }

    pub fn add(&self, rhs: &FockOperator) -> Self {
        FockOperator { matrix: &self.matrix + &rhs.matrix }
    }

    /// `max |A - A^dagger|` over all entries.
    pub fn hermiticity_residual(&self) -> f64 {
        (&self.matrix - self.matrix.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// `max |A - c I|` over the leading `block x block` entries.
    pub fn block_deviation_from_scalar(&self, c: Complex64, block: usize) -> f64 {
        let b = block.min(self.dim());
        let mut worst: f64 = 0.0;
        for i in 0..b {
            for j in 0..b {
                let target = if i == j { c } else { ZERO };
                worst = worst.max((self.matrix[(i, j)] - target).norm());
            }
        }
        worst
    }
}

/// Annihilation and creation operators, `a[n-1, n] = sqrt(n)`.
pub fn ladder(dim: usize) -> Result<(FockOperator, FockOperator)> {
    if dim < 2 {
        return Err(Error::Dimension(format!("ladder operators need dim >= 2, got {dim}")));
    }
    let mut a = CMatrix::zeros(dim, dim);
    for n in 1..dim {
        a[(n - 1, n)] = Complex64::new((n as f64).sqrt(), 0.0);
    }
    let adag = a.adjoint();
    Ok((FockOperator { matrix: a }, FockOperator { matrix: adag }))
}

/// Position or momentum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Observable {
    Q,
    P,
}

/// `X(t) = c_a a + c_adag a^dagger + c0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearForm {
    pub c_a: Complex64,
    pub c_adag: Complex64,
    pub c0: Complex64,
}

impl LinearForm {
    /// Heisenberg-picture `q(t)` or `p(t)` of the free oscillator.
    ///
    /// `q(t) = (q0/sqrt 2)(a e^{-i w t} + a^dagger e^{i w t})`,
    /// `p(t) = m dq/dt = -i (p0/sqrt 2)(a e^{-i w t} - a^dagger e^{i w t})`.
    pub fn heisenberg(p: &OscillatorParams, obs: Observable, t: f64) -> Self {
        let e = (-I * p.omega0() * t).exp();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        match obs {
            Observable::Q => LinearForm { c_a: e * (p.q0() * s), c_adag: e.conj() * (p.q0() * s), c0: ZERO },
            Observable::P => LinearForm { c_a: -I * e * (p.p0() * s), c_adag: I * e.conj() * (p.p0() * s), c0: ZERO },
        }
    }

    pub fn shifted(self, c: Complex64) -> Self {
        LinearForm { c0: self.c0 + c, ..self }
    }

    pub fn to_operator(&self, a: &FockOperator, adag: &FockOperator) -> FockOperator {
        let dim = a.dim();
        let m = a.matrix() * self.c_a + adag.matrix() * self.c_adag + CMatrix::identity(dim, dim) * self.c0;
        FockOperator { matrix: m }
    }
}

pub fn heisenberg_q(p: &OscillatorParams, t: f64, dim: usize) -> Result<FockOperator> {
    let (a, adag) = ladder(dim)?;
    Ok(LinearForm::heisenberg(p, Observable::Q, t).to_operator(&a, &adag))
}

pub fn heisenberg_p(p: &OscillatorParams, t: f64, dim: usize) -> Result<FockOperator> {
    let (a, adag) = ladder(dim)?;
    Ok(LinearForm::heisenberg(p, Observable::P, t).to_operator(&a, &adag))
}

/// Initial states with a known number-basis density matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum StateKind {
    Vacuum,
    Coherent { re: f64, im: f64 },
    Fock { n: usize },
    Thermal { nbar: f64 },
}

impl StateKind {
    pub fn coherent(alpha: Complex64) -> Self {
        StateKind::Coherent { re: alpha.re, im: alpha.im }
    }

    /// Parses `vacuum`, `coherent:RE[,IM]`, `fock:N`, `thermal:NBAR`.
    pub fn parse(s: &str) -> Result<Self> {
        let (head, arg) = s.split_once(':').unwrap_or((s, ""));
        let num = |x: &str| x.trim().parse::<f64>().map_err(|e| Error::Parse(format!("state `{s}`: {e}")));
        match head.trim() {
            "vacuum" => Ok(StateKind::Vacuum),
            "coherent" => {
                let mut it = arg.split(',');
                let re = num(it.next().unwrap_or(""))?;
                let im = it.next().map(num).transpose()?.unwrap_or(0.0);
                Ok(StateKind::Coherent { re, im })
            }
            "fock" => Ok(StateKind::Fock { n: arg.trim().parse().map_err(|e| Error::Parse(format!("state `{s}`: {e}")))? }),
            "thermal" => Ok(StateKind::Thermal { nbar: num(arg)? }),
            _ => Err(Error::Parse(format!("unknown state `{s}`"))),
        }
    }

    pub fn label(&self) -> String {
        match *self {
            StateKind::Vacuum => "vacuum".into(),
            StateKind::Coherent { re, im } if im == 0.0 => format!("coherent({re})"),
            StateKind::Coherent { re, im } => format!("coherent({re}{im:+}i)"),
            StateKind::Fock { n } => format!("fock({n})"),
            StateKind::Thermal { nbar } => format!("thermal({nbar})"),
        }
    }
}

/// Density matrix on the truncated basis.
#[derive(Debug, Clone, PartialEq)]
pub struct FockState {
    kind: StateKind,
    rho: CMatrix,
    deficit: f64,
}

impl FockState {
    /// Builds the state, failing if truncation loses more than [`MAX_DEFICIT`] of the norm.
    /// Coherent and thermal states are renormalized after truncation.
    pub fn make(kind: StateKind, dim: usize) -> Result<Self> {
        if dim < 2 {
            return Err(Error::Dimension(format!("state needs dim >= 2, got {dim}")));
        }
        let mut rho = CMatrix::zeros(dim, dim);
        let deficit = match kind {
            StateKind::Vacuum => {
                rho[(0, 0)] = ONE;
                0.0
            }
            StateKind::Fock { n } => {
                if n >= dim {
                    return Err(Error::Truncation { dim, deficit: 1.0 });
                }
                rho[(n, n)] = ONE;
                0.0
            }
            StateKind::Coherent { re, im } => {
                let alpha = Complex64::new(re, im);
                let mut amp = Vec::with_capacity(dim);
                let mut c = Complex64::new((-0.5 * alpha.norm_sqr()).exp(), 0.0);
                for n in 0..dim {
                    if n > 0 {
                        c = c * alpha / (n as f64).sqrt();
                    }
                    amp.push(c);
                }
                let norm: f64 = amp.iter().map(|z| z.norm_sqr()).sum();
                let deficit = (1.0 - norm).max(0.0);
                for i in 0..dim {
                    for j in 0..dim {
                        rho[(i, j)] = amp[i] * amp[j].conj() / norm;
                    }
                }
                deficit
            }
            StateKind::Thermal { nbar } => {
                if !(nbar >= 0.0) || !nbar.is_finite() {
                    return Err(Error::InvalidState(format!("thermal occupation must be >= 0, got {nbar}")));
                }
                let x = nbar / (1.0 + nbar);
                let probs: Vec<f64> = (0..dim).map(|n| x.powi(n as i32) / (1.0 + nbar)).collect();
                let norm: f64 = probs.iter().sum();
                for (n, pn) in probs.iter().enumerate() {
                    rho[(n, n)] = Complex64::new(pn / norm, 0.0);
                }
                x.powi(dim as i32)
            }
        };
        if deficit > MAX_DEFICIT {
            return Err(Error::Truncation { dim, deficit });
        }
        Ok(FockState { kind, rho, deficit })
    }

    pub fn kind(&self) -> StateKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.rho.nrows()
    }

    pub fn rho(&self) -> &CMatrix {
        &self.rho
    }

    /// Norm lost to truncation before renormalization.
    pub fn deficit(&self) -> f64 {
        self.deficit
    }

    /// `Tr(rho A)`.
    pub fn expect(&self, op: &FockOperator) -> Complex64 {
        trace_product(&self.rho, op.matrix())
    }

    /// Hermiticity residual, trace error, and most negative eigenvalue.
    pub fn validity(&self) -> (f64, f64, f64) {
        let herm = (&self.rho - self.rho.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
        let tr = (self.rho.trace() - ONE).norm();
        let hermitian_part = (&self.rho + self.rho.adjoint()) * Complex64::new(0.5, 0.0);
        let min_eig = hermitian_part.symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min);
        (herm, tr, min_eig)
    }
}

fn trace_product(a: &CMatrix, b: &CMatrix) -> Complex64 {
    let n = a.nrows();
    let mut s = ZERO;
    for i in 0..n {
        for k in 0..n {
            s += a[(i, k)] * b[(k, i)];
        }
    }
    s
}

/// Contour branch of a factor in a double-time-ordered product.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Plus,
    Minus,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Factor {
    pub observable: Observable,
    pub time: f64,
    pub branch: Branch,
}

impl Factor {
    pub fn q(time: f64, branch: Branch) -> Self {
        Factor { observable: Observable::Q, time, branch }
    }

    pub fn p(time: f64, branch: Branch) -> Self {
        Factor { observable: Observable::P, time, branch }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorOrdering {
    /// `T_-` product of minus-branch factors to the left of the `T_+` product of plus-branch factors.
    DoubleTime,
    /// All `a^dagger` to the left of all `a`.
    Normal,
    /// Equal-weight average over all orderings of the factors.
    Weyl,
    /// All `a` to the left of all `a^dagger`.
    Antinormal,
    /// Factors multiplied in the order given.
    Plain,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrderedProductSpec {
    pub factors: Vec<Factor>,
    pub ordering: OperatorOrdering,
    /// c-number added to each factor, one entry per factor.
    pub shift: Option<Vec<Complex64>>,
}

impl OrderedProductSpec {
    pub fn new(factors: Vec<Factor>, ordering: OperatorOrdering) -> Self {
        OrderedProductSpec { factors, ordering, shift: None }
    }

    pub fn with_shift(mut self, shift: Vec<Complex64>) -> Self {
        self.shift = Some(shift);
        self
    }

    /// Shift sampled from `q_j` at each factor's time. Every factor time must be a grid sample.
    pub fn with_shift_signal(self, q_j: &SampledSignal) -> Result<Self> {
        let shift = self
            .factors
            .iter()
            .map(|f| {
                q_j.grid()
                    .index_of(f.time)
                    .map(|k| q_j.values()[k])
                    .ok_or_else(|| Error::InvalidParams(format!("factor time {} is not a grid sample", f.time)))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(self.with_shift(shift))
    }

    fn validate(&self) -> Result<()> {
        if self.factors.len() > MAX_FACTORS {
            return Err(Error::TooManyFactors { count: self.factors.len(), limit: MAX_FACTORS });
        }
        if let Some(s) = &self.shift {
            if s.len() != self.factors.len() {
                return Err(Error::InvalidParams(format!("shift has {} entries for {} factors", s.len(), self.factors.len())));
            }
        }
        if self.ordering == OperatorOrdering::DoubleTime {
            if let Some(k) = self.factors.iter().position(|f| f.branch == Branch::None) {
                return Err(Error::MissingBranch(k));
            }
        }
        Ok(())
    }

    fn forms(&self, p: &OscillatorParams) -> Vec<LinearForm> {
        self.factors
            .iter()
            .enumerate()
            .map(|(k, f)| {
                let lf = LinearForm::heisenberg(p, f.observable, f.time);
                match &self.shift {
                    Some(s) => lf.shifted(s[k]),
                    None => lf,
                }
            })
            .collect()
    }
}

/// Operator order for a double-time product: minus-branch factors first, earliest
/// on the left; then plus-branch factors, latest on the left. Equal times keep input order.
pub fn double_time_order(factors: &[Factor]) -> Vec<usize> {
    let mut minus: Vec<usize> = (0..factors.len()).filter(|&k| factors[k].branch == Branch::Minus).collect();
    let mut plus: Vec<usize> = (0..factors.len()).filter(|&k| factors[k].branch != Branch::Minus).collect();
    minus.sort_by(|&x, &y| factors[x].time.total_cmp(&factors[y].time));
    plus.sort_by(|&x, &y| factors[y].time.total_cmp(&factors[x].time));
    minus.extend(plus);
    minus
}

/// `Tr(rho O)` with `O` the product of the factors under `spec.ordering`.
pub fn ordered_average(state: &FockState, spec: &OrderedProductSpec, p: &OscillatorParams) -> Result<Complex64> {
    spec.validate()?;
    let forms = spec.forms(p);
    let dim = state.dim();
    match spec.ordering {
        OperatorOrdering::Plain => Ok(product_average(state, &forms, &(0..forms.len()).collect::<Vec<_>>())),
        OperatorOrdering::DoubleTime => Ok(product_average(state, &forms, &double_time_order(&spec.factors))),
        OperatorOrdering::Normal | OperatorOrdering::Antinormal | OperatorOrdering::Weyl => {
            let coeffs = ladder_coefficients(&forms);
            let (a, adag) = ladder(dim)?;
            let mut total = ZERO;
            for (k, row) in coeffs.iter().enumerate() {
                for (l, &c) in row.iter().enumerate() {
                    if c == ZERO {
                        continue;
                    }
                    let word_avg = match spec.ordering {
                        OperatorOrdering::Normal => word_average(state, &a, &adag, &normal_word(k, l)),
                        OperatorOrdering::Antinormal => {
                            let mut w = normal_word(k, l);
                            w.reverse();
                            word_average(state, &a, &adag, &w)
                        }
                        _ => symmetric_word_average(state, &a, &adag, k, l),
                    };
                    total += c * word_avg;
                }
            }
            Ok(total)
        }
    }
}

fn product_average(state: &FockState, forms: &[LinearForm], order: &[usize]) -> Complex64 {
    let dim = state.dim();
    let (a, adag) = ladder(dim).expect("state dim >= 2");
    let mut m = CMatrix::identity(dim, dim);
    for &k in order {
        m = m * forms[k].to_operator(&a, &adag).matrix();
    }
    trace_product(state.rho(), &m)
}

/// `C[k][l]`: coefficient of the monomial with `k` creation and `l` annihilation
/// operators when the product of linear forms is expanded in commuting symbols.
fn ladder_coefficients(forms: &[LinearForm]) -> Vec<Vec<Complex64>> {
    let m = forms.len();
    let mut c = vec![vec![ZERO; m + 1]; m + 1];
    c[0][0] = ONE;
    for f in forms {
        let mut next = vec![vec![ZERO; m + 1]; m + 1];
        for k in 0..=m {
            for l in 0..=m {
                let v = c[k][l];
                if v == ZERO {
                    continue;
                }
                next[k][l] += v * f.c0;
                if k < m {
                    next[k + 1][l] += v * f.c_adag;
                }
                if l < m {
                    next[k][l + 1] += v * f.c_a;
                }
            }
        }
        c = next;
    }
    c
}

/// `true` marks a creation operator.
fn normal_word(k: usize, l: usize) -> Vec<bool> {
    std::iter::repeat(true).take(k).chain(std::iter::repeat(false).take(l)).collect()
}

fn word_average(state: &FockState, a: &FockOperator, adag: &FockOperator, word: &[bool]) -> Complex64 {
    let dim = state.dim();
    let mut m = CMatrix::identity(dim, dim);
    for &create in word {
        m = m * if create { adag.matrix() } else { a.matrix() };
    }
    trace_product(state.rho(), &m)
}

/// Average over all distinct words with `k` creation and `l` annihilation operators.
/// Summing over every permutation of the `k + l` letters visits each distinct word
/// `k! l!` times, so this equals the full permutation average.
fn symmetric_word_average(state: &FockState, a: &FockOperator, adag: &FockOperator, k: usize, l: usize) -> Complex64 {
    let len = k + l;
    let mut sum = ZERO;
    let mut count = 0usize;
    for mask in 0u32..(1u32 << len) {
        if mask.count_ones() as usize != k {
            continue;
        }
        let word: Vec<bool> = (0..len).map(|b| mask & (1 << b) != 0).collect();
        sum += word_average(state, a, adag, &word);
        count += 1;
    }
    sum / count as f64
}

/// A weighted point probe: `eta(t) = sum w_k delta(t - t_k)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spike {
    pub time: f64,
    pub weight: Complex64,
}

/// Degree-truncated series of operator matrices in a formal scaling parameter.
struct OperatorSeries {
    terms: Vec<CMatrix>,
}

impl OperatorSeries {
    fn identity(dim: usize, order: usize) -> Self {
        let mut terms = vec![CMatrix::zeros(dim, dim); order + 1];
        terms[0] = CMatrix::identity(dim, dim);
        OperatorSeries { terms }
    }

    /// `exp(x)` truncated at the series order, `x` first order in the scaling.
    fn exp_of(x: &CMatrix, order: usize) -> Self {
        let dim = x.nrows();
        let mut s = Self::identity(dim, order);
        for k in 1..=order {
            s.terms[k] = &s.terms[k - 1] * x / Complex64::new(k as f64, 0.0);
        }
        s
    }

    fn mul(&self, rhs: &OperatorSeries) -> Self {
        let order = self.terms.len() - 1;
        let dim = self.terms[0].nrows();
        let mut out = vec![CMatrix::zeros(dim, dim); order + 1];
        for i in 0..=order {
            for j in 0..=(order - i) {
                out[i + j] += &self.terms[i] * &rhs.terms[j];
            }
        }
        OperatorSeries { terms: out }
    }
}

/// `Phi(eta_-, eta_+) = < T_- exp(i sum eta_- q) T_+ exp(-i sum eta_+ q) >` for point
/// probes, expanded to total degree `order` in the probe weights.
///
/// Each spike exponential sits at a single time, so the ordered exponential is the
/// time-ordered product of single-spike exponentials.
pub fn characteristic_taylor(
    state: &FockState,
    plus: &[Spike],
    minus: &[Spike],
    p: &OscillatorParams,
    order: usize,
) -> Result<Complex64> {
    let dim = state.dim();
    let (a, adag) = ladder(dim)?;
    let factors: Vec<Factor> = minus
        .iter()
        .map(|s| Factor::q(s.time, Branch::Minus))
        .chain(plus.iter().map(|s| Factor::q(s.time, Branch::Plus)))
        .collect();
    let spikes: Vec<&Spike> = minus.iter().chain(plus).collect();
    let mut series = OperatorSeries::identity(dim, order);
    for k in double_time_order(&factors) {
        let q = LinearForm::heisenberg(p, Observable::Q, factors[k].time).to_operator(&a, &adag);
        let c = match factors[k].branch {
            Branch::Minus => I * spikes[k].weight,
            _ => -I * spikes[k].weight,
        };
        series = series.mul(&OperatorSeries::exp_of(&(q.matrix() * c), order));
    }
    Ok(series.terms.iter().map(|t| trace_product(state.rho(), t)).sum())
}

/// `|Phi*(eta_-, eta_+) - Phi(eta_+*, eta_-*)|` from [`characteristic_taylor`].
pub fn reality_check(state: &FockState, plus: &[Spike], minus: &[Spike], p: &OscillatorParams, order: usize) -> Result<f64> {
    let conj = |v: &[Spike]| v.iter().map(|s| Spike { time: s.time, weight: s.weight.conj() }).collect::<Vec<_>>();
    let lhs = characteristic_taylor(state, plus, minus, p, order)?.conj();
    let rhs = characteristic_taylor(state, &conj(minus), &conj(plus), p, order)?;
    Ok((lhs - rhs).norm())
}

/// `< :exp(c_adag a^dagger + c_a a): >` truncated at total degree `order`:
/// `sum c_adag^k c_a^l / (k! l!) <a^dagger^k a^l>`.
pub fn normal_characteristic(state: &FockState, c_a: Complex64, c_adag: Complex64, order: usize) -> Result<Complex64> {
    let (a, adag) = ladder(state.dim())?;
    let mut total = ZERO;
    let mut fact_k = 1.0;
    for k in 0..=order {
        if k > 0 {
            fact_k *= k as f64;
        }
        let mut fact_l = 1.0;
        for l in 0..=(order - k) {
            if l > 0 {
                fact_l *= l as f64;
            }
            let avg = word_average(state, &a, &adag, &normal_word(k, l));
            total += c_adag.powu(k as u32) * c_a.powu(l as u32) * avg / (fact_k * fact_l);
        }
    }
    Ok(total)
}

/// `< :exp sum_k w_k q(t_k): >` for point probes, to total degree `order`.
pub fn normal_characteristic_spikes(state: &FockState, spikes: &[Spike], p: &OscillatorParams, order: usize) -> Result<Complex64> {
    let (c_a, c_adag) = spikes.iter().fold((ZERO, ZERO), |(ca, cb), s| {
        let f = LinearForm::heisenberg(p, Observable::Q, s.time);
        (ca + s.weight * f.c_a, cb + s.weight * f.c_adag)
    });
    normal_characteristic(state, c_a, c_adag, order)
}
