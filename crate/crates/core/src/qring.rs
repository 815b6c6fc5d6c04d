//! A-model ring data: quantum multiplication in the flat basis `X^0..X^{N-1}`,
//! the toric I-function and its Picard-Fuchs operators, and the mirror map.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use nalgebra::DMatrix;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Laurent, Model, ModelParams, Superpotential};
use crate::series::C64;

/// Multiplication by `X` and by the flat basis elements.
#[derive(Debug, Clone, PartialEq)]
pub struct RingPresentation {
    pub size: usize,
    /// Monic critical polynomial `P(X)/lead`, ascending.
    pub relation: Vec<C64>,
    pub mx: DMatrix<C64>,
    /// `c[a]` multiplies by `X^a`.
    pub c: Vec<DMatrix<C64>>,
}

impl RingPresentation {
    /// Multiplication by a Laurent polynomial in `X`; negative powers need an invertible `X`.
    pub fn mult_matrix(&self, f: &Laurent) -> Result<DMatrix<C64>> {
        let n = self.size;
        let mut out = DMatrix::<C64>::zeros(n, n);
        let mut pos = DMatrix::<C64>::identity(n, n);
        for k in 0..=f.kmax().max(0) {
            if k >= f.kmin {
                out += &pos * f.coeff(k);
            }
            pos = &self.mx * pos;
        }
        if f.kmin < 0 {
            let inv = self
                .mx
                .clone()
                .try_inverse()
                .ok_or_else(|| Error::NumericFailure("X is not invertible in the ring".into()))?;
            let mut neg = inv.clone();
            for k in 1..=(-f.kmin) {
                if -k <= f.kmax() {
                    out += &neg * f.coeff(-k);
                }
                neg = &inv * neg;
            }
        }
        Ok(out)
    }

    pub fn commutator_norm(&self) -> f64 {
        let mut worst = 0.0f64;
        for a in &self.c {
            for b in &self.c {
                worst = worst.max((a * b - b * a).norm());
            }
        }
        worst
    }
}

/// Ring of `Jac(W)` with `X` identified with `Y`.
pub fn structure_constants(params: &ModelParams) -> Result<RingPresentation> {
    let params = params.clone().validated()?;
    let sp = params.superpotential();
    let poly = sp.critical_polynomial();
    let deg = poly.len() - 1;
    let lead = poly[deg];
    let relation: Vec<C64> = poly.iter().map(|c| c / lead).collect();
    let mut mx = DMatrix::<C64>::zeros(deg, deg);
    for i in 1..deg {
        mx[(i, i - 1)] = C64::new(1.0, 0.0);
    }
    for i in 0..deg {
        mx[(i, deg - 1)] = -relation[i];
    }
    let mut c = Vec::with_capacity(deg);
    let mut pow = DMatrix::<C64>::identity(deg, deg);
    for _ in 0..deg {
        c.push(pow.clone());
        pow = &mx * pow;
    }
    Ok(RingPresentation { size: deg, relation, mx, c })
}

fn q(n: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

fn frac(x: &BigRational) -> BigRational {
    x - x.floor()
}

fn is_nonneg_int(x: &BigRational) -> bool {
    x.is_integer() && !x.is_negative()
}

/// Toric presentation of `P(m, n)` with the extended divisors.
#[derive(Debug, Clone, PartialEq)]
pub struct ToricData {
    pub m: usize,
    pub n: usize,
    /// Divisor labels `i` in `-m..=n`, `i != 0`.
    pub labels: Vec<i32>,
    /// `mat[i][a]`: coefficient of `e_a` (a = -(n-1)..m-1, stored at `a + n - 1`) in `D_i`.
    pub mat: Vec<Vec<i64>>,
    /// Anticone family as bitmasks over `labels`.
    pub anticones: Vec<u64>,
    pub i0: u64,
}

impl ToricData {
    pub fn new(m: usize, n: usize) -> Self {
        let (mi, ni) = (m as i32, n as i32);
        let rank = m + n - 1;
        let idx = |a: i32| (a + ni - 1) as usize;
        let mut labels = Vec::new();
        let mut mat = Vec::new();
        let mut push = |label: i32, row: Vec<i64>| {
            labels.push(label);
            mat.push(row);
        };
        let mut row = vec![0i64; rank];
        for j in 0..ni {
            row[idx(-j)] = (ni - j) as i64;
        }
        push(-mi, row);
        for l in 1..mi {
            let mut row = vec![0i64; rank];
            row[idx(l)] = n as i64;
            push(-mi + l, row);
        }
        for l in (1..ni).rev() {
            let mut row = vec![0i64; rank];
            row[idx(-l)] = m as i64;
            push(ni - l, row);
        }
        let mut row = vec![0i64; rank];
        for j in 0..mi {
            row[idx(j)] = (mi - j) as i64;
        }
        push(ni, row);
        let anticones = anticone_family(&mat, rank);
        let i0 = anticones.iter().fold(u64::MAX, |acc, s| acc & s) & ((1u64 << labels.len()) - 1);
        ToricData { m, n, labels, mat, anticones, i0 }
    }

    pub fn rank(&self) -> usize {
        self.m + self.n - 1
    }

    /// `<D_i, d>` for every divisor.
    pub fn pairings(&self, d: &[BigRational]) -> Vec<BigRational> {
        self.mat
            .iter()
            .map(|row| row.iter().zip(d).fold(BigRational::zero(), |acc, (r, x)| acc + q(*r) * x))
            .collect()
    }

    /// Coefficient of `P` in `D_i` (only `e_0` survives in degree two).
    pub fn dbar(&self, i: usize) -> BigRational {
        q(self.mat[i][self.n - 1])
    }

    pub fn in_keff(&self, d: &[BigRational]) -> bool {
        let pr = self.pairings(d);
        let mut mask = 0u64;
        for (i, x) in pr.iter().enumerate() {
            if is_nonneg_int(x) {
                mask |= 1 << i;
            }
        }
        self.anticones.contains(&mask)
    }

    fn pos_index(&self) -> usize {
        self.labels.iter().position(|&l| l == self.n as i32).unwrap()
    }

    fn neg_index(&self) -> usize {
        self.labels.iter().position(|&l| l == -(self.m as i32)).unwrap()
    }

    pub fn sector(&self, d: &[BigRational]) -> Sector {
        let pr = self.pairings(d);
        Sector { pos: frac(&-pr[self.pos_index()].clone()), neg: frac(&-pr[self.neg_index()].clone()) }
    }

    /// All `d` in the effective cone with `sum_a d_a <= order`.
    pub fn keff(&self, order: u32) -> Vec<Vec<BigRational>> {
        let (m, n) = (self.m as i64, self.n as i64);
        let bound = q(order as i64);
        let rank = self.rank();
        let zero = self.n - 1;
        let mut out: Vec<Vec<BigRational>> = Vec::new();
        let mut seen: HashSet<Vec<BigRational>> = HashSet::new();
        // Extended coordinates d_l in Z/n (l > 0) and d_{-l} in Z/m (l > 0).
        let mut ext: Vec<(usize, BigRational, i64)> = Vec::new();
        for l in 1..m {
            ext.push((zero + l as usize, BigRational::new(1.into(), n.into()), l));
        }
        for l in 1..n {
            ext.push((zero - l as usize, BigRational::new(1.into(), m.into()), -l));
        }
        let mut stack = vec![(0usize, vec![BigRational::zero(); rank])];
        while let Some((k, d)) = stack.pop() {
            if k < ext.len() {
                let (slot, step, _) = &ext[k];
                let mut v = BigRational::zero();
                loop {
                    let mut dd = d.clone();
                    dd[*slot] = v.clone();
                    // Lower bound of sum_a d_a over both d_0 families; nondecreasing in each slot.
                    let ext_sum: BigRational = dd.iter().sum();
                    let sp: BigRational = (1..m).map(|j| q(m - j) * &dd[zero + j as usize]).sum::<BigRational>() / q(m);
                    let sn: BigRational = (1..n).map(|j| q(n - j) * &dd[zero - j as usize]).sum::<BigRational>() / q(n);
                    if ext_sum - sp.max(sn) > bound {
                        break;
                    }
                    stack.push((k + 1, dd));
                    v += step;
                }
                continue;
            }
            let mut shifts: Vec<(BigRational, i64)> = Vec::new();
            let s_pos: BigRational = (1..m).map(|j| q(m - j) * &d[zero + j as usize]).sum();
            let s_neg: BigRational = (1..n).map(|j| q(n - j) * &d[zero - j as usize]).sum();
            shifts.push((s_pos, m));
            shifts.push((s_neg, n));
            let others: BigRational = d.iter().sum();
            for (s, div) in shifts {
                // <D, d> = div * d_0 + s = k >= 0
                let mut k = BigInt::zero();
                loop {
                    let d0 = (BigRational::from_integer(k.clone()) - &s) / q(div);
                    if &others + &d0 > bound {
                        break;
                    }
                    let mut dd = d.clone();
                    dd[zero] = d0;
                    if self.in_keff(&dd) && seen.insert(dd.clone()) {
                        out.push(dd);
                    }
                    k += 1;
                }
            }
        }
        out.sort_by(|a, b| {
            let sa: BigRational = a.iter().sum();
            let sb: BigRational = b.iter().sum();
            sa.cmp(&sb).then_with(|| a.cmp(b))
        });
        out
    }
}

fn anticone_family(mat: &[Vec<i64>], rank: usize) -> Vec<u64> {
    let nd = mat.len();
    // Columns are divisors; rows are e-coordinates. Solve A c = eta.
    let a: Vec<Vec<BigRational>> = (0..rank).map(|r| (0..nd).map(|i| q(mat[i][r])).collect()).collect();
    let eta = vec![q(1); rank];
    let (cstar, null) = solve_with_kernel(&a, &eta);
    let mut fam = Vec::new();
    for mask in 1u64..(1u64 << nd) {
        if feasible(mask, &cstar, &null) {
            fam.push(mask);
        }
    }
    fam
}

fn feasible(mask: u64, c: &[BigRational], r: &[BigRational]) -> bool {
    let nd = c.len();
    let mut fixed: Option<BigRational> = None;
    for i in 0..nd {
        if mask >> i & 1 == 0 {
            if r[i].is_zero() {
                if !c[i].is_zero() {
                    return false;
                }
            } else {
                let t = -&c[i] / &r[i];
                match &fixed {
                    Some(f) if *f != t => return false,
                    _ => fixed = Some(t),
                }
            }
        }
    }
    let value = |i: usize, t: &BigRational| &c[i] + t * &r[i];
    if let Some(t) = fixed {
        return (0..nd).filter(|i| mask >> i & 1 == 1).all(|i| value(i, &t).is_positive());
    }
    let (mut lo, mut hi): (Option<BigRational>, Option<BigRational>) = (None, None);
    for i in (0..nd).filter(|i| mask >> i & 1 == 1) {
        if r[i].is_zero() {
            if !c[i].is_positive() {
                return false;
            }
            continue;
        }
        let b = -&c[i] / &r[i];
        if r[i].is_positive() {
            lo = Some(lo.map_or(b.clone(), |l: BigRational| l.max(b)));
        } else {
            hi = Some(hi.map_or(b.clone(), |h: BigRational| h.min(b)));
        }
    }
    match (lo, hi) {
        (Some(l), Some(h)) => l < h,
        _ => true,
    }
}

/// Particular solution and a kernel vector of a full-row-rank system with one-dimensional kernel.
fn solve_with_kernel(a: &[Vec<BigRational>], b: &[BigRational]) -> (Vec<BigRational>, Vec<BigRational>) {
    let rows = a.len();
    let cols = a[0].len();
    let mut m: Vec<Vec<BigRational>> = a.iter().zip(b).map(|(r, bi)| {
        let mut r = r.clone();
        r.push(bi.clone());
        r
    }).collect();
    let mut pivots = Vec::new();
    let mut row = 0;
    for col in 0..cols {
        if row == rows {
            break;
        }
        let Some(p) = (row..rows).find(|&r| !m[r][col].is_zero()) else { continue };
        m.swap(row, p);
        let inv = BigRational::one() / &m[row][col];
        for x in m[row].iter_mut() {
            *x = &*x * &inv;
        }
        for r in 0..rows {
            if r != row && !m[r][col].is_zero() {
                let f = m[r][col].clone();
                for c in 0..=cols {
                    let v = &m[row][c] * &f;
                    m[r][c] = &m[r][c] - v;
                }
            }
        }
        pivots.push(col);
        row += 1;
    }
    let free: Vec<usize> = (0..cols).filter(|c| !pivots.contains(c)).collect();
    let mut cstar = vec![BigRational::zero(); cols];
    for (r, &p) in pivots.iter().enumerate() {
        cstar[p] = m[r][cols].clone();
    }
    let mut null = vec![BigRational::zero(); cols];
    if let Some(&f) = free.first() {
        null[f] = BigRational::one();
        for (r, &p) in pivots.iter().enumerate() {
            null[p] = -m[r][f].clone();
        }
    }
    (cstar, null)
}

/// Twisted sector, labelled by the fractional parts of `-<D_n, d>` and `-<D_{-m}, d>`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Sector {
    pub pos: BigRational,
    pub neg: BigRational,
}

impl Sector {
    pub fn untwisted() -> Self {
        Sector { pos: BigRational::zero(), neg: BigRational::zero() }
    }
    pub fn is_untwisted(&self) -> bool {
        self.pos.is_zero() && self.neg.is_zero()
    }
}

impl fmt::Display for Sector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_untwisted() {
            write!(f, "1")
        } else if !self.pos.is_zero() {
            write!(f, "1[{}]", self.pos)
        } else {
            write!(f, "1[-{}]", self.neg)
        }
    }
}

/// `sum_k z^k (a_k + b_k P) 1_sector` with `P^2 = 0`; `P` acts as zero off the untwisted sector.
#[derive(Debug, Clone, PartialEq)]
pub struct SectorValue {
    pub sector: Sector,
    pub terms: BTreeMap<i32, (BigRational, BigRational)>,
}

impl SectorValue {
    pub fn unit(sector: Sector) -> Self {
        let mut terms = BTreeMap::new();
        terms.insert(0, (BigRational::one(), BigRational::zero()));
        SectorValue { sector, terms }
    }

    fn p_coeff(&self, lambda: &BigRational) -> BigRational {
        if self.sector.is_untwisted() {
            lambda.clone()
        } else {
            BigRational::zero()
        }
    }

    /// Multiply by `lambda P + mu z`.
    pub fn mul_linear(&self, lambda: &BigRational, mu: &BigRational) -> Self {
        let lambda = self.p_coeff(lambda);
        let mut out: BTreeMap<i32, (BigRational, BigRational)> = BTreeMap::new();
        for (k, (a, b)) in &self.terms {
            let e = out.entry(k + 1).or_insert((BigRational::zero(), BigRational::zero()));
            e.0 += mu * a;
            e.1 += mu * b;
            let e = out.entry(*k).or_insert((BigRational::zero(), BigRational::zero()));
            e.1 += &lambda * a;
        }
        SectorValue { sector: self.sector.clone(), terms: out }.pruned()
    }

    /// Divide by `lambda P + mu z` with `mu != 0`.
    pub fn div_linear(&self, lambda: &BigRational, mu: &BigRational) -> Self {
        let lambda = self.p_coeff(lambda);
        // 1/(mu z) (1 - lambda P/(mu z))
        let mut out: BTreeMap<i32, (BigRational, BigRational)> = BTreeMap::new();
        for (k, (a, b)) in &self.terms {
            let e = out.entry(k - 1).or_insert((BigRational::zero(), BigRational::zero()));
            e.0 += a / mu;
            e.1 += b / mu;
            let e = out.entry(k - 2).or_insert((BigRational::zero(), BigRational::zero()));
            e.1 -= &lambda * a / (mu * mu);
        }
        SectorValue { sector: self.sector.clone(), terms: out }.pruned()
    }

    pub fn sub(&self, other: &Self) -> Self {
        let mut out = self.terms.clone();
        for (k, (a, b)) in &other.terms {
            let e = out.entry(*k).or_insert((BigRational::zero(), BigRational::zero()));
            e.0 -= a;
            e.1 -= b;
        }
        SectorValue { sector: self.sector.clone(), terms: out }.pruned()
    }

    fn pruned(mut self) -> Self {
        self.terms.retain(|_, (a, b)| !(a.is_zero() && b.is_zero()));
        self
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn max_abs(&self) -> f64 {
        self.terms
            .values()
            .flat_map(|(a, b)| [a, b])
            .map(|x| x.abs().to_f64().unwrap_or(f64::INFINITY))
            .fold(0.0, f64::max)
    }
}

/// One `q^d` term of the I-function (without the `exp(P log q_0 / z)` prefactor).
#[derive(Debug, Clone, PartialEq)]
pub struct ITerm {
    pub d: Vec<BigRational>,
    pub value: SectorValue,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IFunctionSeries {
    pub toric: ToricData,
    pub order: u32,
    pub terms: Vec<ITerm>,
    index: HashMap<Vec<BigRational>, usize>,
}

/// `I(q, z)` through `sum_a d_a <= order`.
pub fn i_function(m: usize, n: usize, order: u32) -> IFunctionSeries {
    let toric = ToricData::new(m, n);
    let terms = toric
        .keff(order)
        .into_iter()
        .map(|d| {
            let value = i_coefficient(&toric, &d);
            ITerm { d, value }
        })
        .collect::<Vec<_>>();
    let index = terms.iter().enumerate().map(|(i, t)| (t.d.clone(), i)).collect();
    IFunctionSeries { toric, order, terms, index }
}

/// The hypergeometric ratio of products for one `d`.
pub fn i_coefficient(toric: &ToricData, d: &[BigRational]) -> SectorValue {
    let pr = toric.pairings(d);
    let mut v = SectorValue::unit(toric.sector(d));
    for (i, di) in pr.iter().enumerate() {
        let lam = toric.dbar(i);
        if di.is_negative() {
            // <D_i,d> <= nu < 0, nu integral
            let mut nu = -BigRational::one();
            while &nu >= di {
                v = v.mul_linear(&lam, &(di - &nu));
                nu -= BigRational::one();
            }
        } else {
            // <D_i,d> > nu >= 0
            let mut nu = BigRational::zero();
            while &nu < di {
                v = v.div_linear(&lam, &(di - &nu));
                nu += BigRational::one();
            }
        }
    }
    v
}

impl IFunctionSeries {
    pub fn coefficient(&self, d: &[BigRational]) -> Option<&SectorValue> {
        self.index.get(d).map(|&i| &self.terms[i].value)
    }

    fn degree(d: &[BigRational]) -> BigRational {
        d.iter().sum()
    }

    /// Max coefficient of `P_d I` over every degree fully determined by the truncation.
    pub fn picard_fuchs_residual(&self, d: &[i64]) -> f64 {
        let t = &self.toric;
        let dq: Vec<BigRational> = d.iter().map(|&x| q(x)).collect();
        let pd = t.pairings(&dq);
        let bound = q(self.order as i64);
        if dq.iter().all(|x| x.is_zero()) {
            return 0.0;
        }
        // Operator D_i acts on the q^{d'} term as multiplication by Dbar_i + z <D_i, d'>.
        let apply = |value: &SectorValue, at: &[BigRational], side_neg: bool| -> SectorValue {
            let pa = t.pairings(at);
            let mut v = value.clone();
            for (i, di) in pd.iter().enumerate() {
                let count = if side_neg { -di.clone() } else { di.clone() };
                let mut nu = BigRational::zero();
                while nu < count {
                    v = v.mul_linear(&t.dbar(i), &(&pa[i] - &nu));
                    nu += BigRational::one();
                }
            }
            v
        };
        let mut worst = 0.0f64;
        let mut targets: Vec<Vec<BigRational>> = self.terms.iter().map(|x| x.d.clone()).collect();
        let mut seen: HashSet<Vec<BigRational>> = targets.iter().cloned().collect();
        for x in &self.terms {
            let shifted: Vec<BigRational> = x.d.iter().zip(&dq).map(|(a, b)| a + b).collect();
            if seen.insert(shifted.clone()) {
                targets.push(shifted);
            }
        }
        for target in targets {
            if Self::degree(&target) > bound {
                continue;
            }
            let prev: Vec<BigRational> = target.iter().zip(&dq).map(|(a, b)| a - b).collect();
            let sector = t.sector(&target);
            let zero = SectorValue { sector: sector.clone(), terms: BTreeMap::new() };
            let cur = self.coefficient(&target).cloned().unwrap_or_else(|| zero.clone());
            let lhs = match self.coefficient(&prev) {
                Some(v) => apply(v, &prev, true),
                None => zero.clone(),
            };
            let rhs = apply(&cur, &target, false);
            let lhs = SectorValue { sector, terms: lhs.terms };
            worst = worst.max(lhs.sub(&rhs).max_abs());
        }
        worst
    }

    /// `[z^{-1}]` of `I - 1` (excluding the `P log q_0` part).
    pub fn mirror_map(&self) -> Vec<(Vec<BigRational>, Sector, BigRational, BigRational)> {
        let mut out = Vec::new();
        for term in &self.terms {
            if term.d.iter().all(|x| x.is_zero()) {
                continue;
            }
            let v = &term.value;
            let a = v.terms.get(&-1).map(|x| x.0.clone()).unwrap_or_else(BigRational::zero);
            let b = v.terms.get(&0).map(|x| x.1.clone()).unwrap_or_else(BigRational::zero);
            if !a.is_zero() || !b.is_zero() {
                out.push((term.d.clone(), v.sector.clone(), a, b));
            }
        }
        out
    }

    /// Coefficients of `ebar_a` in the logarithmic part of the mirror map.
    pub fn mirror_map_log_part(&self) -> Vec<BigRational> {
        let mut v = vec![BigRational::zero(); self.toric.rank()];
        v[self.toric.n - 1] = BigRational::one();
        v
    }
}

/// Coefficients of `1/a(x)` through `x^count` for a power series with `a_0 != 0`.
fn series_inverse(a: &[C64], count: usize) -> Vec<C64> {
    let mut out = vec![C64::new(0.0, 0.0); count + 1];
    out[0] = a[0].inv();
    for k in 1..=count {
        let acc: C64 = (1..=k.min(a.len() - 1)).map(|j| a[j] * out[k - j]).sum();
        out[k] = -acc * out[0];
    }
    out
}

/// `(f, g)` as minus the residues of `f g dY / (Y dW/dy)` at `0` and `infinity`;
/// uses only the coefficients of `W`, never its critical points.
pub fn pairing_by_residues(sp: &Superpotential, f: &Laurent, g: &Laurent) -> C64 {
    let fw = sp.f();
    // f g / (Y fw) = num / P with P = Y^{-kmin} fw a polynomial
    let poly = &fw.coeffs;
    let d = poly.len() - 1;
    let num = f.mul(g).mul(&Laurent::monomial(-fw.kmin - 1, C64::new(1.0, 0.0)));
    let (lo, hi) = (num.kmin, num.kmax());
    let mut total = C64::new(0.0, 0.0);
    // residue at 0 needs [Y^{-1-i}] of 1/P for i <= -1
    if lo <= -1 {
        let inv0 = series_inverse(poly, (-1 - lo) as usize);
        for i in lo..=hi.min(-1) {
            total -= num.coeff(i) * inv0[(-1 - i) as usize];
        }
    }
    // at infinity 1/P = sum_k e_k Y^{-d-k}; the Y^{-1} coefficient enters with a plus sign
    if hi >= d as i32 - 1 {
        let rev: Vec<C64> = poly.iter().rev().copied().collect();
        let inf = series_inverse(&rev, (hi - d as i32 + 1) as usize);
        for i in (d as i32 - 1).max(lo)..=hi {
            total += num.coeff(i) * inf[(i - d as i32 + 1) as usize];
        }
    }
    total
}

/// Pairing identities on one model and their dependence on the weights.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairingReport {
    /// `max |(phi_a, phi_b) - delta_ab / Delta^a|`, relative to `max |1/Delta|`.
    pub canonical: f64,
    /// `max_j |(Y^j, 1)_T - (Y^j, 1)_T'|` over `j = -n+1..=m` between the two weight settings.
    pub independence: f64,
    /// The same difference for `Y^{2m}`, the first power that moves with the weights.
    pub control: f64,
}

/// Check the canonical-basis pairing on `params`, and compare `(Y^j, 1)` against the
/// model with the weights replaced by `alt`.
pub fn pairing_identities(params: &ModelParams, alt: &ModelParams) -> Result<PairingReport> {
    let model = Model::new(params.clone())?;
    let other = alt.clone().validated()?;
    if other.m != params.m || other.n != params.n || other.q_pos != model.params.as_ref().map(|p| p.q_pos.clone()).unwrap_or_default() {
        return Err(Error::InvalidModel("weight comparison needs the same (m, n) and couplings".into()));
    }
    let basis = model.crit.canonical_basis();
    let scale = model.crit.points.iter().map(|p| p.delta.inv().norm()).fold(0.0, f64::max);
    let mut canonical = 0.0f64;
    for (a, fa) in basis.iter().enumerate() {
        for (b, fb) in basis.iter().enumerate() {
            let want = if a == b { model.crit.points[a].delta.inv() } else { C64::new(0.0, 0.0) };
            canonical = canonical.max((pairing_by_residues(&model.sp, fa, fb) - want).norm() / scale);
        }
    }
    let sp_alt = other.superpotential();
    let one = Laurent::monomial(0, C64::new(1.0, 0.0));
    let diff = |j: i32| {
        let y = Laurent::monomial(j, C64::new(1.0, 0.0));
        (pairing_by_residues(&model.sp, &y, &one) - pairing_by_residues(&sp_alt, &y, &one)).norm()
    };
    let (m, n) = (params.m as i32, params.n as i32);
    let independence = (-n + 1..=m).map(diff).fold(0.0, f64::max);
    Ok(PairingReport { canonical, independence, control: diff(2 * m) })
}

/// JSON record for a Picard-Fuchs residual.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResidualRecord {
    pub d: Vec<i64>,
    pub order: u32,
    pub residual: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Model;

    fn r(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    fn draw(m: usize, n: usize, seed: u64) -> ModelParams {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut c = || C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let mut p = ModelParams::simple(m, n);
        p.w_pos = (0..m).map(|_| c()).collect();
        p.w_neg = (0..n).map(|_| c()).collect();
        p.q_pos = (0..m - 1).map(|_| c()).collect();
        p.q_neg = (0..n).map(|_| c()).collect();
        p.q_neg[n - 1] += C64::new(1.5, 0.0);
        p
    }

    #[test]
    fn residue_pairing_matches_root_sum() {
        let model = Model::new(draw(2, 3, 7)).unwrap();
        for j in -4..=7 {
            for k in -2..=3 {
                let f = Laurent::monomial(j, C64::new(1.0, 0.0));
                let g = Laurent::monomial(k, C64::new(1.0, 0.0));
                let a = pairing_by_residues(&model.sp, &f, &g);
                let b = model.crit.residual_pairing(&f, &g);
                assert!((a - b).norm() < 1e-9 * (1.0 + b.norm()), "({j}, {k}): {a} vs {b}");
            }
        }
    }

    #[test]
    fn pairing_is_weight_independent() {
        for (m, n) in [(1, 1), (2, 1), (2, 3)] {
            let base = draw(m, n, 11);
            let mut alt = draw(m, n, 12);
            alt.q_pos = base.q_pos.clone();
            alt.q_neg = base.q_neg.clone();
            let rep = pairing_identities(&base, &alt).unwrap();
            assert!(rep.canonical < 1e-9, "{rep:?}");
            assert!(rep.independence < 1e-9, "{rep:?}");
            assert!(rep.control > 1e-3, "{rep:?}");
        }
    }

    #[test]
    fn mx_spectrum_matches_roots() {
        let mut p = ModelParams::simple(2, 3);
        p.w_pos = vec![C64::new(0.3, 0.1), C64::new(-0.2, 0.4)];
        p.q_pos = vec![C64::new(0.5, -0.2)];
        p.q_neg = vec![C64::new(0.1, 0.0), C64::new(0.0, 0.2), C64::new(1.3, 0.2)];
        let ring = structure_constants(&p).unwrap();
        let model = Model::new(p).unwrap();
        let eig = ring.mx.clone().schur().eigenvalues().unwrap();
        for z in model.crit.roots() {
            assert!(eig.iter().any(|e| (e - z).norm() < 1e-9));
        }
        assert!(ring.commutator_norm() < 1e-9);
        assert_eq!(ring.c[0], DMatrix::identity(5, 5));
    }

    #[test]
    fn nilpotent_shift_at_origin() {
        let mut p = ModelParams::simple(1, 1);
        p.q_neg = vec![C64::new(0.0, 0.0)];
        let ring = structure_constants(&p).unwrap();
        let want = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 0.0]).map(|x| C64::new(x, 0.0));
        assert_eq!(ring.mx, want);
    }

    #[test]
    fn anticones_for_21() {
        let t = ToricData::new(2, 1);
        // labels: -2, -1, 1
        assert_eq!(t.labels, vec![-2, -1, 1]);
        let mut fam = t.anticones.clone();
        fam.sort();
        assert_eq!(fam, vec![0b011, 0b110, 0b111]);
        assert_eq!(t.i0, 0b010);
    }

    #[test]
    fn p1_degree_one_term() {
        let i = i_function(1, 1, 3);
        let c = i.coefficient(&[r(1, 1)]).unwrap();
        // 1/(P+z)^2 = z^-2 (1 - 2P/z)
        assert_eq!(c.terms.len(), 2);
        assert_eq!(c.terms[&-2], (r(1, 1), r(0, 1)));
        assert_eq!(c.terms[&-3], (r(0, 1), r(-2, 1)));
        assert!(i.mirror_map().is_empty());
        let unit = i.coefficient(&[r(0, 1)]).unwrap();
        assert_eq!(*unit, SectorValue::unit(Sector::untwisted()));
    }

    #[test]
    fn picard_fuchs_holds() {
        for (m, n, order) in [(1, 1, 4), (2, 1, 4), (1, 2, 4), (2, 3, 2)] {
            let i = i_function(m, n, order);
            for a in 0..(m + n - 1) {
                let mut d = vec![0i64; m + n - 1];
                d[a] = 1;
                assert_eq!(i.picard_fuchs_residual(&d), 0.0, "m={m} n={n} a={a}");
            }
        }
    }

    #[test]
    fn picard_fuchs_detects_perturbation() {
        let mut i = i_function(1, 1, 4);
        let t = i.terms.iter_mut().find(|t| t.d == vec![r(2, 1)]).unwrap();
        let e = t.value.terms.get_mut(&-4).unwrap();
        e.0 += r(1, 1000);
        assert!(i.picard_fuchs_residual(&[1]) >= 1e-4);
    }
}
