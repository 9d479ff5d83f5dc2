//! Contraction combinatorics for double-time-ordered products: pairing
//! enumeration, Hori's expansion on the closed time contour, and verification of
//! Wick's theorem against the Fock-space oracle.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{ordered_average, Branch, Factor, FockState, Observable, OperatorOrdering, OrderedProductSpec, StateKind};
use crate::kernels::OscillatorParams;

/// Largest factor count accepted by [`enumerate_pairings`].
pub const MAX_PAIRING_FACTORS: usize = 10;

/// Largest factor count accepted by [`hori_expand`].
pub const MAX_HORI_FACTORS: usize = 8;

pub type Pairing = Vec<(usize, usize)>;

/// Which contraction replaces a pair, by the branches of its two factors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ContractionKind {
    /// Both on the plus branch: `i hbar D_F`.
    F,
    /// Both on the minus branch: `-i hbar D_F*`.
    Fstar,
    /// Minus-branch factor first, plus-branch second: `i hbar D(t_- - t_+)`.
    Cross,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WickTerm {
    pub pairs: Pairing,
    pub kinds: Vec<ContractionKind>,
    pub rest: Vec<usize>,
    pub coefficient: u64,
}

/// Every set of disjoint pairs of `0..m`, the empty set included. Pairs are
/// `(i, j)` with `i < j`, listed by increasing first index.
pub fn enumerate_pairings(m: usize) -> Result<Vec<Pairing>> {
    if m > MAX_PAIRING_FACTORS {
        return Err(Error::TooManyFactors { count: m, limit: MAX_PAIRING_FACTORS });
    }
    let mut out = Vec::new();
    let mut current = Vec::new();
    partial_pairings(&mut vec![false; m], 0, &mut current, &mut out);
    Ok(out)
}

fn partial_pairings(used: &mut Vec<bool>, start: usize, current: &mut Pairing, out: &mut Vec<Pairing>) {
    let Some(i) = (start..used.len()).find(|&i| !used[i]) else {
        out.push(current.clone());
        return;
    };
    // i stays single
    used[i] = true;
    partial_pairings(used, i + 1, current, out);
    for j in (i + 1)..used.len() {
        if !used[j] {
            used[j] = true;
            current.push((i, j));
            partial_pairings(used, i + 1, current, out);
            current.pop();
            used[j] = false;
        }
    }
    used[i] = false;
}

/// Pairings that leave no index single.
pub fn perfect_pairings(m: usize) -> Result<Vec<Pairing>> {
    Ok(enumerate_pairings(m)?.into_iter().filter(|p| 2 * p.len() == m).collect())
}

/// `(2k - 1)!!` for `m = 2k`, zero for odd `m`.
pub fn double_factorial_count(m: usize) -> u64 {
    if m % 2 == 1 {
        return 0;
    }
    (1..m as u64).step_by(2).product()
}

/// Hori's expansion: each pairing of the factors with a contraction kind per pair.
pub fn hori_expand(factors: &[Factor]) -> Result<Vec<WickTerm>> {
    if factors.len() > MAX_HORI_FACTORS {
        return Err(Error::TooManyFactors { count: factors.len(), limit: MAX_HORI_FACTORS });
    }
    if let Some(k) = factors.iter().position(|f| f.branch == Branch::None) {
        return Err(Error::MissingBranch(k));
    }
    if factors.iter().any(|f| f.observable != Observable::Q) {
        return Err(Error::Unsupported("Wick expansion is defined for position factors".into()));
    }
    let m = factors.len();
    Ok(enumerate_pairings(m)?
        .into_iter()
        .map(|pairs| {
            let mut used = vec![false; m];
            let mut normalized = Vec::with_capacity(pairs.len());
            let mut kinds = Vec::with_capacity(pairs.len());
            for &(i, j) in &pairs {
                used[i] = true;
                used[j] = true;
                let (kind, pair) = match (factors[i].branch, factors[j].branch) {
                    (Branch::Plus, Branch::Plus) => (ContractionKind::F, (i, j)),
                    (Branch::Minus, Branch::Minus) => (ContractionKind::Fstar, (i, j)),
                    (Branch::Minus, _) => (ContractionKind::Cross, (i, j)),
                    _ => (ContractionKind::Cross, (j, i)),
                };
                normalized.push(pair);
                kinds.push(kind);
            }
            let rest = (0..m).filter(|&k| !used[k]).collect();
            WickTerm { pairs: normalized, kinds, rest, coefficient: 1 }
        })
        .collect())
}

/// Analytic value of one contraction at the exact time difference of its pair.
pub fn contraction_value(kind: ContractionKind, t_first: f64, t_second: f64, p: &OscillatorParams) -> Complex64 {
    let ih = Complex64::new(0.0, p.hbar());
    let tau = t_first - t_second;
    match kind {
        ContractionKind::F => ih * p.feynman(tau),
        ContractionKind::Fstar => -ih * p.feynman(tau).conj(),
        ContractionKind::Cross => ih * p.contraction(tau),
    }
}

/// Counts how often `n` successive applications of the pair-contracting operator
/// produce each `n`-pair pattern on `m` factors, before division by `n!`.
pub fn hori_raw_counts(m: usize, n: usize) -> Result<BTreeMap<Pairing, u64>> {
    if m > MAX_PAIRING_FACTORS {
        return Err(Error::TooManyFactors { count: m, limit: MAX_PAIRING_FACTORS });
    }
    let mut counts = BTreeMap::new();
    raw_sequences(&mut vec![false; m], n, &mut Vec::new(), &mut counts);
    Ok(counts)
}

fn raw_sequences(used: &mut Vec<bool>, remaining: usize, chosen: &mut Pairing, counts: &mut BTreeMap<Pairing, u64>) {
    if remaining == 0 {
        let mut key = chosen.clone();
        key.sort();
        *counts.entry(key).or_insert(0) += 1;
        return;
    }
    let m = used.len();
    for i in 0..m {
        for j in (i + 1)..m {
            if used[i] || used[j] {
                continue;
            }
            used[i] = true;
            used[j] = true;
            chosen.push((i, j));
            raw_sequences(used, remaining - 1, chosen, counts);
            chosen.pop();
            used[i] = false;
            used[j] = false;
        }
    }
}

/// Both sides of Wick's theorem for one double-time-ordered product.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WickCheck {
    pub lhs: Complex64,
    pub rhs: Complex64,
    pub residual: f64,
}

/// Double-time-ordered average from the oracle against the sum over Hori terms of
/// contraction products times normally ordered averages of the uncontracted factors.
pub fn verify_wick(state: &FockState, factors: &[Factor], p: &OscillatorParams) -> Result<WickCheck> {
    let terms = hori_expand(factors)?;
    let lhs = ordered_average(state, &OrderedProductSpec::new(factors.to_vec(), OperatorOrdering::DoubleTime), p)?;
    let mut rhs = Complex64::new(0.0, 0.0);
    for term in &terms {
        let contracted: Complex64 = term
            .pairs
            .iter()
            .zip(&term.kinds)
            .map(|(&(i, j), &kind)| contraction_value(kind, factors[i].time, factors[j].time, p))
            .product();
        let rest: Vec<Factor> = term.rest.iter().map(|&k| Factor::q(factors[k].time, Branch::None)).collect();
        let normal = ordered_average(state, &OrderedProductSpec::new(rest, OperatorOrdering::Normal), p)?;
        rhs += contracted * normal;
    }
    Ok(WickCheck { lhs, rhs, residual: (lhs - rhs).norm() })
}

/// Parses factors like `"+t0.0,+t1.3,-t0.7"`: sign is the branch, the number is the time.
pub fn parse_factors(s: &str) -> Result<Vec<Factor>> {
    s.split(',')
        .filter(|tok| !tok.trim().is_empty())
        .map(|tok| {
            let tok = tok.trim();
            let (branch, rest) = match tok.chars().next() {
                Some('+') => (Branch::Plus, &tok[1..]),
                Some('-') => (Branch::Minus, &tok[1..]),
                _ => return Err(Error::Parse(format!("factor `{tok}` must start with + or -"))),
            };
            let num = rest
                .strip_prefix('t')
                .ok_or_else(|| Error::Parse(format!("factor `{tok}` must read like +t1.5")))?;
            let time = num.parse::<f64>().map_err(|e| Error::Parse(format!("factor `{tok}`: {e}")))?;
            Ok(Factor::q(time, branch))
        })
        .collect()
}

/// One randomized Wick case: a state from {vacuum, coherent(1), fock(2)}, 2 to 4
/// factors at distinct times in `[-2, 2]`, random branches.
pub fn random_case<R: Rng>(rng: &mut R) -> (StateKind, Vec<Factor>) {
    let state = match rng.gen_range(0..3) {
        0 => StateKind::Vacuum,
        1 => StateKind::Coherent { re: 1.0, im: 0.0 },
        _ => StateKind::Fock { n: 2 },
    };
    let m = rng.gen_range(2..=4);
    let mut times: Vec<f64> = Vec::with_capacity(m);
    while times.len() < m {
        let t = rng.gen_range(-2.0..2.0);
        if times.iter().all(|&u: &f64| (u - t).abs() > 1e-3) {
            times.push(t);
        }
    }
    let factors = times
        .into_iter()
        .map(|t| Factor::q(t, if rng.gen_bool(0.5) { Branch::Plus } else { Branch::Minus }))
        .collect();
    (state, factors)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn pairing_counts() {
        assert_eq!(enumerate_pairings(0).unwrap(), vec![Vec::<(usize, usize)>::new()]);
        assert_eq!(enumerate_pairings(2).unwrap().len(), 2);
        let three = enumerate_pairings(3).unwrap();
        assert_eq!(three.len(), 4);
        assert_eq!(three.iter().filter(|p| p.len() == 1).count(), 3);
        assert!(perfect_pairings(3).unwrap().is_empty());
        for k in 1..=4 {
            assert_eq!(perfect_pairings(2 * k).unwrap().len() as u64, double_factorial_count(2 * k));
        }
        assert_eq!(double_factorial_count(8), 105);
        assert!(enumerate_pairings(11).is_err());
    }

    #[test]
    fn pairings_are_disjoint_and_distinct() {
        let all = enumerate_pairings(6).unwrap();
        // telephone number T(6)
        assert_eq!(all.len(), 76);
        let mut seen = std::collections::HashSet::new();
        for p in &all {
            let mut idx: Vec<usize> = p.iter().flat_map(|&(i, j)| [i, j]).collect();
            assert!(p.iter().all(|&(i, j)| i < j));
            idx.sort();
            idx.dedup();
            assert_eq!(idx.len(), 2 * p.len());
            assert!(seen.insert(p.clone()));
        }
    }

    #[test]
    fn kinds_follow_branches() {
        let f = parse_factors("+t0.0,+t1.0").unwrap();
        let terms = hori_expand(&f).unwrap();
        assert_eq!(terms.len(), 2);
        assert_eq!(terms[1].kinds, vec![ContractionKind::F]);
        let f = parse_factors("+t0.3,-t1.0").unwrap();
        let terms = hori_expand(&f).unwrap();
        assert_eq!(terms[1].kinds, vec![ContractionKind::Cross]);
        assert_eq!(terms[1].pairs, vec![(1, 0)]);
        assert!(terms.iter().all(|t| t.coefficient == 1));
        let f = vec![Factor::q(0.0, Branch::None)];
        assert!(matches!(hori_expand(&f), Err(Error::MissingBranch(0))));
    }

    #[test]
    fn raw_double_application_counts() {
        let counts = hori_raw_counts(4, 2).unwrap();
        assert_eq!(counts.len(), 3);
        assert!(counts.values().all(|&c| c == 2));
        let counts = hori_raw_counts(6, 3).unwrap();
        assert_eq!(counts.len(), 15);
        assert!(counts.values().all(|&c| c == 6));
    }

    #[test]
    fn parse_factor_strings() {
        let f = parse_factors("+t0.0, +t1.3,-t0.7").unwrap();
        assert_eq!(f.len(), 3);
        assert_eq!(f[2], Factor::q(0.7, Branch::Minus));
        assert_eq!(parse_factors("-t-1.5").unwrap()[0].time, -1.5);
        assert!(parse_factors("t0").is_err());
        assert!(parse_factors("+x0").is_err());
    }

    #[test]
    fn two_and_four_plus_factors_in_vacuum() {
        let p = OscillatorParams::unit();
        let vac = FockState::make(StateKind::Vacuum, 20).unwrap();
        let two = parse_factors("+t0.2,+t-0.9").unwrap();
        assert!(verify_wick(&vac, &two, &p).unwrap().residual < 1e-12);
        let four = parse_factors("+t0.1,+t0.8,+t-1.2,+t2.0").unwrap();
        let check = verify_wick(&vac, &four, &p).unwrap();
        let ih = Complex64::new(0.0, 1.0);
        let d = |i: usize, j: usize| p.feynman(four[i].time - four[j].time);
        let oracle = ih * ih * (d(0, 1) * d(2, 3) + d(0, 2) * d(1, 3) + d(0, 3) * d(1, 2));
        assert!((check.lhs - oracle).norm() < 1e-11);
        assert!(check.residual < 1e-11);
    }

    #[test]
    fn coherent_mixed_branches() {
        let p = OscillatorParams::unit();
        let st = FockState::make(StateKind::coherent(Complex64::new(1.0, 0.0)), 40).unwrap();
        let f = parse_factors("+t0.4,-t-0.3,+t1.1,-t0.9").unwrap();
        assert!(verify_wick(&st, &f, &p).unwrap().residual < 1e-9);
    }

    #[test]
    fn random_cases_are_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = OscillatorParams::unit();
        for _ in 0..5 {
            let (kind, f) = random_case(&mut rng);
            assert!((2..=4).contains(&f.len()));
            let st = FockState::make(kind, 40).unwrap();
            assert!(verify_wick(&st, &f, &p).unwrap().residual < 1e-9);
        }
    }
}
