//! Exact psi-class intersection numbers on the moduli of stable curves.
//!
//! Values come from the Virasoro (DVV) recursion with the string equation
//! used to strip `tau_0` insertions first.

use std::collections::HashMap;
use std::sync::{OnceLock, RwLock};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};

use crate::error::{Error, Result};

/// `(g, sorted ks)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct IntersectionKey {
    pub g: u32,
    ks: Vec<u32>,
}

impl IntersectionKey {
    pub fn new(g: u32, ks: &[u32]) -> Self {
        let mut ks = ks.to_vec();
        ks.sort_unstable();
        IntersectionKey { g, ks }
    }

    pub fn ks(&self) -> &[u32] {
        &self.ks
    }

    pub fn n(&self) -> usize {
        self.ks.len()
    }

    pub fn is_stable(&self) -> bool {
        2 * self.g as i64 - 2 + self.n() as i64 > 0
    }

    pub fn dimension_matches(&self) -> bool {
        self.ks.iter().map(|&k| k as i64).sum::<i64>() == 3 * self.g as i64 - 3 + self.n() as i64
    }
}

fn cache() -> &'static RwLock<HashMap<IntersectionKey, BigRational>> {
    static CACHE: OnceLock<RwLock<HashMap<IntersectionKey, BigRational>>> = OnceLock::new();
    CACHE.get_or_init(|| RwLock::new(HashMap::new()))
}

/// `<tau_{k_1} ... tau_{k_N}>_g`; zero when the dimension constraint fails.
pub fn psi_intersection(key: &IntersectionKey) -> Result<BigRational> {
    if !key.is_stable() {
        return Err(Error::Unstable { g: key.g, n: key.n() });
    }
    Ok(value(key))
}

/// Convenience wrapper around [`psi_intersection`].
pub fn tau(g: u32, ks: &[u32]) -> Result<BigRational> {
    psi_intersection(&IntersectionKey::new(g, ks))
}

/// Snapshot of every value computed so far.
pub fn cached_table() -> Vec<(IntersectionKey, BigRational)> {
    let map = cache().read().expect("intersection cache poisoned");
    let mut v: Vec<_> = map.iter().map(|(k, x)| (k.clone(), x.clone())).collect();
    v.sort_by(|a, b| (a.0.g, &a.0.ks).cmp(&(b.0.g, &b.0.ks)));
    v
}

/// Every stable, dimension-matching key with `g <= gmax` and `1 <= N <= nmax`.
pub fn keys_up_to(gmax: u32, nmax: usize) -> Vec<IntersectionKey> {
    fn rec(ks: &mut Vec<u32>, left: usize, min: u32, budget: u32, out: &mut Vec<Vec<u32>>) {
        if left == 0 {
            if budget == 0 {
                out.push(ks.clone());
            }
            return;
        }
        for k in min..=budget {
            ks.push(k);
            rec(ks, left - 1, k, budget - k, out);
            ks.pop();
        }
    }
    let mut keys = Vec::new();
    for g in 0..=gmax {
        for n in 1..=nmax {
            let dim = 3 * g as i64 - 3 + n as i64;
            if dim < 0 || 2 * g as i64 - 2 + n as i64 <= 0 {
                continue;
            }
            let mut out = Vec::new();
            rec(&mut Vec::new(), n, 0, dim as u32, &mut out);
            keys.extend(out.into_iter().map(|ks| IntersectionKey::new(g, &ks)));
        }
    }
    keys
}

/// Outcome of the string and dilaton equations over a table of values.
#[derive(Debug, Clone, Default)]
pub struct EquationCheck {
    pub string_checked: usize,
    pub dilaton_checked: usize,
    pub failures: Vec<String>,
}

impl EquationCheck {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Check `<tau_0 tau_S>_g = sum_j <.. tau_{d_j - 1} ..>_g` and
/// `<tau_1 tau_S>_g = (2g - 2 + |S|) <tau_S>_g` in exact arithmetic on every
/// entry of the cached table with `g <= gmax`, `N <= nmax`.
pub fn check_string_dilaton(gmax: u32, nmax: usize) -> EquationCheck {
    for key in keys_up_to(gmax, nmax) {
        value(&key);
    }
    let mut out = EquationCheck::default();
    for (key, v) in cached_table() {
        if key.g > gmax || key.n() > nmax {
            continue;
        }
        let ks = key.ks();
        let (g, n) = (key.g, ks.len());
        let reduced_stable = 2 * g as i64 - 2 + n as i64 - 1 > 0;
        if !reduced_stable {
            continue;
        }
        if let Some(i) = ks.iter().position(|&k| k == 0) {
            let mut rest = ks.to_vec();
            rest.remove(i);
            let mut rhs = BigRational::zero();
            for j in 0..rest.len() {
                if rest[j] > 0 {
                    let mut r = rest.clone();
                    r[j] -= 1;
                    rhs += value_of(g, r);
                }
            }
            out.string_checked += 1;
            if rhs != v {
                out.failures.push(format!("string: <{ks:?}>_{g} = {v}, rhs {rhs}"));
            }
        }
        if let Some(i) = ks.iter().position(|&k| k == 1) {
            let mut rest = ks.to_vec();
            rest.remove(i);
            let factor = BigRational::from_integer(BigInt::from(2 * g as i64 - 2 + rest.len() as i64));
            let rhs = factor * value_of(g, rest);
            out.dilaton_checked += 1;
            if rhs != v {
                out.failures.push(format!("dilaton: <{ks:?}>_{g} = {v}, rhs {rhs}"));
            }
        }
    }
    out
}

fn dfact(n: i64) -> BigInt {
    // (2r+1)!! with (-1)!! = 1
    let mut acc = BigInt::one();
    let mut k = n;
    while k > 1 {
        acc *= k;
        k -= 2;
    }
    acc
}

fn ratio(num: BigInt, den: BigInt) -> BigRational {
    BigRational::new(num, den)
}

fn value(key: &IntersectionKey) -> BigRational {
    if !key.is_stable() || !key.dimension_matches() {
        return BigRational::zero();
    }
    if let Some(v) = cache().read().expect("intersection cache poisoned").get(key) {
        return v.clone();
    }
    let v = compute(key);
    cache().write().expect("intersection cache poisoned").entry(key.clone()).or_insert(v).clone()
}

fn value_of(g: u32, ks: Vec<u32>) -> BigRational {
    if g > u32::MAX / 2 {
        return BigRational::zero();
    }
    value(&IntersectionKey::new(g, &ks))
}

fn compute(key: &IntersectionKey) -> BigRational {
    let g = key.g;
    let ks = &key.ks;
    if g == 0 && ks.len() == 3 {
        return BigRational::one();
    }
    if g == 1 && ks == &[1] {
        // L_0 constraint: (3/2) <tau_1>_1 = 1/16
        return ratio(1.into(), 16.into()) / ratio(3.into(), 2.into());
    }
    if ks[0] == 0 {
        // String equation.
        let rest = &ks[1..];
        let mut acc = BigRational::zero();
        for j in 0..rest.len() {
            if rest[j] == 0 {
                continue;
            }
            let mut r = rest.to_vec();
            r[j] -= 1;
            acc += value_of(g, r);
        }
        return acc;
    }
    // DVV on the largest insertion tau_{k+1}.
    let last = ks.len() - 1;
    let k = ks[last] as i64 - 1;
    let others = &ks[..last];
    let mut acc = BigRational::zero();
    for j in 0..others.len() {
        let dj = others[j] as i64;
        let mut r = others.to_vec();
        r[j] = (dj + k) as u32;
        let coef = ratio(dfact(2 * k + 2 * dj + 1), dfact(2 * dj - 1));
        acc += coef * value_of(g, r);
    }
    let half = ratio(1.into(), 2.into());
    for r in 0..k.max(0) {
        let s = k - 1 - r;
        let coef = ratio(dfact(2 * r + 1) * dfact(2 * s + 1), 1.into()) * &half;
        if g >= 1 {
            let mut v = others.to_vec();
            v.push(r as u32);
            v.push(s as u32);
            acc += &coef * value_of(g - 1, v);
        }
        // Split the remaining insertions into two ordered subsets.
        let n = others.len();
        for mask in 0u64..(1u64 << n) {
            let (mut i_set, mut j_set) = (vec![r as u32], vec![s as u32]);
            for (t, &d) in others.iter().enumerate() {
                if mask >> t & 1 == 1 {
                    i_set.push(d);
                } else {
                    j_set.push(d);
                }
            }
            for g1 in 0..=g {
                let a = value_of(g1, i_set.clone());
                if a.is_zero() {
                    continue;
                }
                let b = value_of(g - g1, j_set.clone());
                acc += &coef * a * b;
            }
        }
    }
    acc / ratio(dfact(2 * k + 3), 1.into())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    #[test]
    fn base_cases() {
        assert_eq!(tau(0, &[0, 0, 0]).unwrap(), q(1, 1));
        assert_eq!(tau(1, &[1]).unwrap(), q(1, 24));
    }

    #[test]
    fn dimension_mismatch_is_zero() {
        assert_eq!(tau(0, &[0, 0, 1]).unwrap(), q(0, 1));
        assert_eq!(tau(1, &[0, 0]).unwrap(), q(0, 1));
    }

    #[test]
    fn unstable_is_an_error() {
        assert!(matches!(tau(0, &[0, 0]), Err(Error::Unstable { g: 0, n: 2 })));
        assert!(matches!(tau(1, &[]), Err(Error::Unstable { .. })));
    }

    #[test]
    fn string_and_dilaton_hold_on_table() {
        let chk = check_string_dilaton(2, 4);
        assert!(chk.passed(), "{:?}", chk.failures);
        assert!(chk.string_checked > 10 && chk.dilaton_checked > 10);
    }

    #[test]
    fn key_enumeration_counts() {
        // g = 0: N = 3 (1 key), N = 4 (1 key: 0001)
        let keys = keys_up_to(0, 4);
        assert_eq!(keys.len(), 2);
        assert!(keys.iter().all(|k| k.dimension_matches() && k.is_stable()));
    }

    #[test]
    fn known_values() {
        assert_eq!(tau(0, &[0, 0, 0, 1]).unwrap(), q(1, 1));
        assert_eq!(tau(0, &[0, 0, 0, 0, 2]).unwrap(), q(1, 1));
        assert_eq!(tau(0, &[0, 0, 0, 1, 1]).unwrap(), q(2, 1));
        assert_eq!(tau(1, &[1, 1]).unwrap(), q(1, 24));
        assert_eq!(tau(2, &[4]).unwrap(), q(1, 1152));
        assert_eq!(tau(2, &[2, 3]).unwrap(), q(29, 5760));
        assert_eq!(tau(2, &[2, 2, 2]).unwrap(), q(7, 240));
        assert_eq!(tau(3, &[7]).unwrap(), q(1, 82944));
    }
}
