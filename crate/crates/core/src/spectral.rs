//! Local analysis of the spectral curve `x = W(e^y)` at its ramification
//! points: `zeta` charts, Bergman kernel coefficients, the `dxi` and `W_k`
//! forms, and the Eynard-Orantin recursion.

use std::collections::{BTreeMap, HashMap};

use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Model;
use crate::series::{Branch, Tolerance, TruncSeries1, TruncSeries2, Var, C64};

pub const ZETA: Var = Var('ζ');
const ZETA2: (Var, Var) = (Var('ζ'), Var('η'));

fn cplx(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// `(2k-1)!!` with `(-1)!! = 1`.
pub fn double_factorial(k: i64) -> f64 {
    let mut acc = 1.0;
    let mut j = k;
    while j > 1 {
        acc *= j as f64;
        j -= 2;
    }
    acc
}

/// Local chart at one critical point: `x = u - zeta^2`, `y = v - sum h_k zeta^k`.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticalChart {
    pub alpha: usize,
    pub p: C64,
    pub u: C64,
    /// Principal `log p`.
    pub v: C64,
    pub delta: C64,
    /// `s(zeta) = v - y = sum_{k>=1} h_k zeta^k`.
    pub s: TruncSeries1<C64>,
    /// `Y(zeta) = p exp(-s(zeta))`.
    pub y: TruncSeries1<C64>,
}

impl CriticalChart {
    pub fn order(&self) -> i32 {
        self.s.order()
    }

    /// `h_k`, `k >= 1`.
    pub fn h(&self, k: usize) -> C64 {
        self.s.coeff(k as i32)
    }

    /// `(2k-1)!! / 2^{k-1} h_{2k-1}`.
    pub fn h_check(&self, k: usize) -> C64 {
        self.h(2 * k - 1) * (double_factorial(2 * k as i64 - 1) / 2f64.powi(k as i32 - 1))
    }

    /// `y(zeta) = v - s(zeta)`.
    pub fn y_log(&self) -> TruncSeries1<C64> {
        TruncSeries1::constant(ZETA, self.v, self.s.order()).try_sub(&self.s).expect("same variable")
    }
}

/// `u - W(p e^{-s})` as a power series in `s` through `s^order`.
fn gap_series(model: &Model, p: C64, order: i32) -> TruncSeries1<C64> {
    let sp = &model.sp;
    let mut c = vec![C64::zero(); order as usize + 1];
    let mut fact = 1.0;
    for j in 1..=order as usize {
        fact *= j as f64;
        let mut acc = C64::zero();
        for (i, ck) in sp.laurent.coeffs.iter().enumerate() {
            let k = sp.laurent.kmin + i as i32;
            if k == 0 || ck.is_zero() {
                continue;
            }
            acc += ck * p.powi(k) * (-(k as f64)).powi(j as i32);
        }
        c[j] = -acc / fact;
    }
    c[1] += sp.log_coeff;
    TruncSeries1::with_order(ZETA, 0, c, order)
}

/// Expansion of the superpotential around critical point `alpha` through `zeta^order`.
pub fn local_expansion(model: &Model, alpha: usize, order: i32) -> Result<CriticalChart> {
    let pt = model.crit.points[alpha];
    let g = gap_series(model, pt.p, order + 2);
    // Drop the (numerically tiny) linear term: the point is critical.
    let q = TruncSeries1::with_order(ZETA, 0, (2..=order + 2).map(|k| g.coeff(k)).collect(), order);
    let root = q.sqrt_branch(Branch::Plus)?;
    let h1 = model.crit.h1(alpha);
    let root = if (root.coeff(0) * h1 - cplx(1.0)).norm() < 1e-6 { root } else { root.neg_series() };
    if (root.coeff(0) * h1 - cplx(1.0)).norm() > 1e-6 {
        return Err(Error::DegenerateCritical(pt.delta.norm()));
    }
    let zeta_of_s = root.shift(1);
    let s = zeta_of_s.revert()?;
    let y = s.neg_series().exp()?.scale(&pt.p);
    Ok(CriticalChart { alpha, p: pt.p, u: pt.u, v: pt.p.ln(), delta: pt.delta, s, y })
}

/// Bergman kernel coefficients `B^{a,b}_{k,l}` (`[zeta_a^k zeta_b^l]`), double pole removed.
#[derive(Debug, Clone)]
pub struct Bergman {
    pub order: i32,
    grid: HashMap<(usize, usize), TruncSeries2<C64>>,
}

impl Bergman {
    pub fn coeff(&self, a: usize, b: usize, k: usize, l: usize) -> C64 {
        if a <= b {
            self.grid[&(a, b)].coeff(k, l)
        } else {
            self.grid[&(b, a)].coeff(l, k)
        }
    }

    pub fn grid(&self, a: usize, b: usize) -> TruncSeries2<C64> {
        if a <= b {
            self.grid[&(a, b)].clone()
        } else {
            let g = &self.grid[&(b, a)];
            TruncSeries2::from_fn(ZETA2, g.order(), |k, l| g.coeff(l, k))
        }
    }
}

/// Bergman coefficients through total degree `order`; charts need order `>= order + 3`.
pub fn bergman_coeffs(charts: &[CriticalChart], order: i32) -> Result<Bergman> {
    let mut grid = HashMap::new();
    let tol = Tolerance { rel: 1e-7 };
    for a in 0..charts.len() {
        for b in a..charts.len() {
            let ya = charts[a].y.truncate(order + 3);
            let yb = charts[b].y.truncate(order + 3);
            let d1 = TruncSeries2::outer(ZETA2, &ya.derivative(), &yb.derivative(), order + 2);
            let g = if a != b {
                let diff = TruncSeries2::embed(ZETA2, &ya, true).try_sub(&TruncSeries2::embed(ZETA2, &yb, false))?;
                let inv = diff.inv()?;
                d1.try_mul(&inv.try_mul(&inv)?)?
            } else {
                // Divided difference Q with Y(z) - Y(w) = (z - w) Q(z, w).
                let q = TruncSeries2::from_fn(ZETA2, order + 2, |k, l| ya.coeff((k + l + 1) as i32));
                let q2 = q.try_mul(&q)?;
                let num = d1.try_sub(&q2)?;
                let minus = cplx(-1.0);
                let once = num.divide_linear(&minus, tol)?;
                let twice = once.divide_linear(&minus, tol)?;
                twice.try_mul(&q2.inv()?)?
            };
            let g = TruncSeries2::from_fn(ZETA2, order.min(g.order()), |k, l| g.coeff(k, l));
            grid.insert((a, b), g);
        }
    }
    Ok(Bergman { order, grid })
}

/// Charts plus Bergman data for one model.
#[derive(Debug, Clone)]
pub struct SpectralData {
    pub charts: Vec<CriticalChart>,
    pub bergman: Bergman,
}

impl SpectralData {
    /// Charts through `zeta^(order + 3)` and Bergman coefficients through total degree `order`.
    pub fn new(model: &Model, order: i32) -> Result<Self> {
        let charts = (0..model.size())
            .map(|a| local_expansion(model, a, order + 4))
            .collect::<Result<Vec<_>>>()?;
        let bergman = bergman_coeffs(&charts, order)?;
        Ok(SpectralData { charts, bergman })
    }

    pub fn size(&self) -> usize {
        self.charts.len()
    }

    /// `e_{a,j}` (the `[zeta_a'^j]` coefficient of `B(., zeta_a')/d zeta_a'`) in chart `b`.
    pub fn e_form(&self, a: usize, j: usize, b: usize) -> TruncSeries1<C64> {
        let top = self.bergman.order - j as i32;
        let reg: Vec<C64> = (0..=top.max(-1)).map(|l| self.bergman.coeff(b, a, l as usize, j)).collect();
        let mut s = TruncSeries1::with_order(ZETA, 0, reg, top);
        if a == b {
            let pole = TruncSeries1::monomial(ZETA, cplx(j as f64 + 1.0), -(j as i32) - 2, top);
            s = s.try_add(&pole).expect("same variable");
        }
        s
    }

    /// Normalization `(2k-1)!! 2^{-k} i^{-2k-1}` relating `dxi_k^a` to `e_{a,2k}`.
    pub fn dxi_factor(k: usize) -> C64 {
        let i = C64::new(0.0, 1.0);
        i.powi(-(2 * k as i32) - 1) * (double_factorial(2 * k as i64 - 1) / 2f64.powi(k as i32))
    }

    /// `dxi_k^a` in chart `b` (coefficient of `d zeta_b`).
    pub fn dxi(&self, a: usize, k: usize, b: usize) -> TruncSeries1<C64> {
        self.e_form(a, 2 * k, b).scale(&Self::dxi_factor(k))
    }

    /// `xi_{a,0} = -i h_1^a p^a / (Y - p^a)` in chart `b`.
    pub fn xi0_function(&self, a: usize, b: usize) -> Result<TruncSeries1<C64>> {
        let ca = &self.charts[a];
        let yb = &self.charts[b].y;
        let shifted = yb.try_sub(&TruncSeries1::constant(ZETA, ca.p, yb.order()))?;
        let pref = C64::new(0.0, -1.0) * ca.h(1) * ca.p;
        Ok(shifted.inv()?.scale(&pref))
    }

    /// `W_k^a = d((-1)^k theta^k xi_{a,0})` in chart `b` with `theta = (1/(-2 zeta)) d/d zeta`.
    pub fn w_form(&self, a: usize, k: usize, b: usize) -> Result<TruncSeries1<C64>> {
        let mut f = self.xi0_function(a, b)?;
        for _ in 0..k {
            f = f.derivative().shift(-1).scale(&cplx(-0.5)).scale(&cplx(-1.0));
        }
        Ok(f.derivative())
    }

    /// `Bcheck_{k,l}^{a,b} = (2k-1)!! (2l-1)!! / 2^{k+l+1} B_{2k,2l}^{a,b}`.
    pub fn b_check(&self, a: usize, b: usize, k: usize, l: usize) -> C64 {
        let (kk, ll) = (2 * k, 2 * l);
        let f = double_factorial(2 * k as i64 - 1) * double_factorial(2 * l as i64 - 1) / 2f64.powi((k + l + 1) as i32);
        self.bergman.coeff(a, b, kk, ll) * f
    }

    /// Decompose a form in chart `b` by its principal part into `e_{b,j}` coefficients.
    /// Fails when a simple pole is present.
    pub fn principal_decomposition(&self, form: &TruncSeries1<C64>) -> Result<BTreeMap<usize, C64>> {
        let scale = form.max_magnitude().max(1.0);
        let mut out = BTreeMap::new();
        for (k, c) in form.terms() {
            if k >= -1 {
                break;
            }
            let r = -k as usize;
            out.insert(r - 2, *c / (r as f64 - 1.0));
        }
        if form.kmin() <= -1 {
            let res = form.coeff(-1).norm();
            if res > 1e-9 * scale {
                return Err(Error::DecompositionFailure(res));
            }
        }
        Ok(out)
    }
}

impl SpectralData {
    /// `W_k^a` on the `dxi` basis, read off from its principal parts at every chart.
    /// Fails if an odd `e_{b,j}` component survives.
    pub fn w_in_dxi(&self, a: usize, k: usize) -> Result<BTreeMap<(usize, usize), C64>> {
        let mut out = BTreeMap::new();
        for b in 0..self.size() {
            let form = self.w_form(a, k, b)?;
            let scale = form.max_magnitude().max(1.0);
            for (j, c) in self.principal_decomposition(&form)? {
                if j % 2 == 1 {
                    if c.norm() > 1e-9 * scale {
                        return Err(Error::DecompositionFailure(c.norm()));
                    }
                    continue;
                }
                out.insert((b, j / 2), c / Self::dxi_factor(j / 2));
            }
        }
        Ok(out)
    }
}

/// Slot label `(critical point, e-index j)`.
pub type Slot = (usize, usize);

/// Multidifferential stored on the basis `prod_i e_{a_i, j_i}(Y_i)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ETensor {
    pub n: usize,
    pub entries: BTreeMap<Vec<Slot>, C64>,
}

impl ETensor {
    pub fn max_abs(&self) -> f64 {
        self.entries.values().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// Largest deviation from invariance under swapping any two slots.
    pub fn symmetry_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for (key, c) in &self.entries {
            for i in 0..self.n {
                for j in (i + 1)..self.n {
                    let mut k2 = key.clone();
                    k2.swap(i, j);
                    let other = self.entries.get(&k2).copied().unwrap_or_default();
                    worst = worst.max((c - other).norm());
                }
            }
        }
        worst
    }

    /// Largest coefficient on an odd `e_{a,j}` in any slot.
    pub fn odd_part(&self) -> f64 {
        self.entries
            .iter()
            .filter(|(k, _)| k.iter().any(|s| s.1 % 2 == 1))
            .map(|(_, c)| c.norm())
            .fold(0.0, f64::max)
    }
}

/// `omega_{g,N}` on the basis `prod_i dxi_{k_i}^{a_i}(Y_i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormExpansion {
    pub g: u32,
    pub n: usize,
    pub entries: BTreeMap<Vec<(usize, usize)>, C64>,
}

impl FormExpansion {
    pub fn get(&self, key: &[(usize, usize)]) -> C64 {
        self.entries.get(key).copied().unwrap_or_default()
    }

    /// Maximum coefficient difference over the union of supports.
    pub fn max_diff(&self, other: &Self) -> f64 {
        let mut worst = 0.0f64;
        for (k, v) in &self.entries {
            worst = worst.max((v - other.get(k)).norm());
        }
        for (k, v) in &other.entries {
            worst = worst.max((v - self.get(k)).norm());
        }
        worst
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.values().map(|c| c.norm()).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FormEntry {
    pub alphas: Vec<usize>,
    pub ks: Vec<usize>,
    pub re: f64,
    pub im: f64,
}

impl FormExpansion {
    pub fn to_records(&self) -> Vec<FormEntry> {
        self.entries
            .iter()
            .map(|(k, v)| FormEntry {
                alphas: k.iter().map(|s| s.0).collect(),
                ks: k.iter().map(|s| s.1).collect(),
                re: v.re,
                im: v.im,
            })
            .collect()
    }
}

type SlotSeries = BTreeMap<Vec<Slot>, TruncSeries1<C64>>;

fn add_into(map: &mut SlotSeries, key: Vec<Slot>, s: TruncSeries1<C64>) -> Result<()> {
    match map.remove(&key) {
        Some(prev) => {
            map.insert(key, prev.try_add(&s)?);
        }
        None => {
            map.insert(key, s);
        }
    }
    Ok(())
}

/// Eynard-Orantin recursion with memoized `omega_{g,N}`.
#[derive(Debug, Clone)]
pub struct EoSolver {
    pub data: SpectralData,
    memo: HashMap<(u32, usize), ETensor>,
    /// Cached `e_{b,j}` in chart `a`, keyed by `(a, b, j)`.
    e_cache: HashMap<(usize, usize, usize), TruncSeries1<C64>>,
}

/// Largest e-index appearing in `omega_{g,N}`.
pub fn max_e_index(g: u32, n: usize) -> usize {
    2 * (3 * g as usize + n).saturating_sub(3)
}

impl EoSolver {
    /// Sized for every `(g', N')` with `2g' + N' <= 2 g + n`.
    pub fn new(model: &Model, g: u32, n: usize) -> Result<Self> {
        let pole = max_e_index(g, n + 1) as i32 + 2;
        let order = 2 * pole + 6;
        Ok(EoSolver { data: SpectralData::new(model, order)?, memo: HashMap::new(), e_cache: HashMap::new() })
    }

    pub fn from_data(data: SpectralData) -> Self {
        EoSolver { data, memo: HashMap::new(), e_cache: HashMap::new() }
    }

    fn e_at(&mut self, chart: usize, slot: Slot) -> TruncSeries1<C64> {
        let key = (chart, slot.0, slot.1);
        if let Some(s) = self.e_cache.get(&key) {
            return s.clone();
        }
        let s = self.data.e_form(slot.0, slot.1, chart);
        self.e_cache.insert(key, s.clone());
        s
    }

    /// `omega_{g,N}` in the e-basis; `omega_{0,2}` is not representable and is rejected.
    pub fn omega(&mut self, g: u32, n: usize) -> Result<ETensor> {
        if 2 * g as i64 - 2 + n as i64 <= 0 {
            return Err(Error::Unstable { g, n });
        }
        if let Some(t) = self.memo.get(&(g, n)) {
            return Ok(t.clone());
        }
        let mut out = ETensor { n, entries: BTreeMap::new() };
        for a in 0..self.data.size() {
            let bracket = self.bracket(a, g, n)?;
            for (rest, series) in bracket {
                let tol = Tolerance { rel: 1e-14 };
                let Some(v) = series.valuation(tol) else { continue };
                if v > 0 {
                    continue;
                }
                let mut j = 0usize;
                while (j as i32) <= -v {
                    let kappa = self.kappa(a, j, -1 - v)?;
                    let prod = kappa.try_mul(&series)?;
                    let res = prod
                        .get(-1)
                        .ok_or_else(|| Error::NumericFailure(format!("truncation too low for omega_{{{g},{n}}}")))?;
                    if res.norm() > 0.0 {
                        let mut key = rest.clone();
                        key.push((a, j));
                        *out.entries.entry(key).or_default() += res;
                    }
                    j += 2;
                }
            }
        }
        self.memo.insert((g, n), out.clone());
        Ok(out)
    }

    /// `kappa_j(zeta) = zeta^j / (4 (j+1) S(zeta))`, `S = sum_{odd k} h_k zeta^k`, through `zeta^top`.
    fn kappa(&self, a: usize, j: usize, top: i32) -> Result<TruncSeries1<C64>> {
        let s = &self.data.charts[a].s;
        let odd: Vec<C64> = (1..=s.order()).map(|k| if k % 2 == 1 { s.coeff(k) } else { C64::zero() }).collect();
        let s_over = TruncSeries1::with_order(ZETA, 0, odd, s.order() - 1);
        let inv = s_over.inv()?;
        let k = inv.shift(j as i32 - 1).scale(&cplx(1.0 / (4.0 * (j as f64 + 1.0))));
        Ok(k.truncate(top.max(j as i32 - 1)))
    }

    /// `omega_{g',n'}(zeta, Y_rest)` in chart `a`, keyed by the rest slots.
    fn factor(&mut self, a: usize, g: u32, n: usize, cap: i32) -> Result<SlotSeries> {
        let mut out = SlotSeries::new();
        if g == 0 && n == 2 {
            // B(zeta, Y_i) = sum_j zeta^j e_{a,j}(Y_i)
            for j in 0..=cap.max(0) as usize {
                let mono = TruncSeries1::monomial(ZETA, cplx(1.0), j as i32, cap.max(0) + 64);
                out.insert(vec![(a, j)], mono);
            }
            return Ok(out);
        }
        let t = self.omega(g, n)?;
        for (key, c) in &t.entries {
            let s = self.e_at(a, key[0]).scale(c);
            add_into(&mut out, key[1..].to_vec(), s)?;
        }
        Ok(out)
    }

    fn bracket(&mut self, a: usize, g: u32, n: usize) -> Result<SlotSeries> {
        let mut out = SlotSeries::new();
        let cap = max_e_index(g, n + 1) as i32 + 4;
        if g >= 1 {
            if g == 1 && n == 1 {
                // omega_{0,2}(zeta, -zeta) with d(-zeta) = -d zeta
                let ord = self.data.bergman.order;
                let mut c = vec![C64::zero(); (ord + 3) as usize];
                c[0] = cplx(0.25);
                for d in 0..=ord as usize {
                    let mut acc = C64::zero();
                    for k in 0..=d {
                        let sign = if (d - k) % 2 == 0 { 1.0 } else { -1.0 };
                        acc += self.data.bergman.coeff(a, a, k, d - k) * sign;
                    }
                    c[d + 2] = acc;
                }
                let s = TruncSeries1::with_order(ZETA, -2, c, ord).neg_series();
                add_into(&mut out, vec![], s)?;
            } else {
                let t = self.omega(g - 1, n + 1)?;
                for (key, c) in &t.entries {
                    let s0 = self.e_at(a, key[0]);
                    let s1 = self.e_at(a, key[1]).rescale_var(&cplx(-1.0));
                    let s = s0.try_mul(&s1)?.scale(&-*c);
                    add_into(&mut out, key[2..].to_vec(), s)?;
                }
            }
        }
        let rest = n - 1;
        for g1 in 0..=g {
            let g2 = g - g1;
            for mask in 0u32..(1u32 << rest) {
                let ni = mask.count_ones() as usize + 1;
                let nj = rest + 2 - ni;
                if (g1 == 0 && ni == 1) || (g2 == 0 && nj == 1) {
                    continue;
                }
                let f1 = self.factor(a, g1, ni, cap)?;
                let f2 = self.factor(a, g2, nj, cap)?;
                let idx_i: Vec<usize> = (0..rest).filter(|i| mask >> i & 1 == 1).collect();
                let idx_j: Vec<usize> = (0..rest).filter(|i| mask >> i & 1 == 0).collect();
                for (k1, s1) in &f1 {
                    for (k2, s2) in &f2 {
                        let mut key = vec![(0usize, 0usize); rest];
                        for (pos, slot) in idx_i.iter().zip(k1) {
                            key[*pos] = *slot;
                        }
                        for (pos, slot) in idx_j.iter().zip(k2) {
                            key[*pos] = *slot;
                        }
                        let s = s1.try_mul(&s2.rescale_var(&cplx(-1.0)))?.neg_series();
                        add_into(&mut out, key, s)?;
                    }
                }
            }
        }
        Ok(out)
    }

    /// `omega_{g,N}` on the `dxi` basis; fails if odd e-components survive.
    pub fn eo_recursion(&mut self, g: u32, n: usize) -> Result<FormExpansion> {
        let t = self.omega(g, n)?;
        let scale = t.max_abs().max(1.0);
        let odd = t.odd_part();
        if odd > 1e-8 * scale {
            return Err(Error::DecompositionFailure(odd));
        }
        let mut entries = BTreeMap::new();
        for (key, c) in &t.entries {
            if key.iter().any(|s| s.1 % 2 == 1) || c.norm() <= 1e-13 * scale {
                continue;
            }
            let mut v = *c;
            for s in key {
                v /= SpectralData::dxi_factor(s.1 / 2);
            }
            entries.insert(key.iter().map(|s| (s.0, s.1 / 2)).collect(), v);
        }
        Ok(FormExpansion { g, n, entries })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelParams;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn models() -> Vec<Model> {
        let mut a = ModelParams::simple(2, 1);
        a.w_pos = vec![c(0.3, 0.1), c(-0.2, 0.05)];
        a.w_neg = vec![c(0.1, -0.3)];
        a.q_pos = vec![c(0.4, 0.2)];
        a.q_neg = vec![c(1.1, 0.3)];
        let mut b = ModelParams::simple(1, 1);
        b.w_pos = vec![c(0.25, -0.1)];
        b.q_neg = vec![c(0.8, 0.4)];
        vec![Model::new(ModelParams::simple(1, 1)).unwrap(), Model::new(a).unwrap(), Model::new(b).unwrap()]
    }

    #[test]
    fn cosh_chart() {
        let m = &models()[0];
        let ch = local_expansion(m, 0, 6).unwrap();
        assert!((ch.h(1) - c(0.0, 1.0)).norm() < 1e-14);
        // 2 cosh y = 2 - zeta^2 with y = -s: s^2 + s^4/12 = -zeta^2, so h_3 = -h_1^3/24.
        assert!((ch.h(3) - c(0.0, 1.0 / 24.0)).norm() < 1e-14);
        assert!(ch.h(2).norm() < 1e-14);
        assert!(ch.v.norm() < 1e-15);
    }

    #[test]
    fn hessian_identity_and_chart_consistency() {
        for m in models() {
            for a in 0..m.size() {
                let ch = local_expansion(&m, a, 10).unwrap();
                assert!((ch.delta * ch.h(1) * ch.h(1) + c(2.0, 0.0)).norm() < 1e-9);
                for zeta in [c(0.02, 0.0), c(0.0, 0.015), c(-0.01, 0.01)] {
                    let y = ch.y.eval_at(&zeta);
                    let resid = m.sp.eval_log(ch.y_log().eval_at(&zeta)) - ch.u + zeta * zeta;
                    assert!(resid.norm() < 1e-12, "resid {resid}");
                    assert!((y - ch.y_log().eval_at(&zeta).exp()).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn bergman_against_direct_evaluation() {
        for m in models() {
            let sd = SpectralData::new(&m, 14).unwrap();
            let n = m.size();
            for a in 0..n {
                for b in 0..n {
                    let (ca, cb) = (&sd.charts[a], &sd.charts[b]);
                    let (z1, z2) = (c(0.011, 0.004), c(-0.007, 0.009));
                    let y1 = ca.y.eval_at(&z1);
                    let y2 = cb.y.eval_at(&z2);
                    let d1 = ca.y.derivative().eval_at(&z1);
                    let d2 = cb.y.derivative().eval_at(&z2);
                    let mut direct = d1 * d2 / ((y1 - y2) * (y1 - y2));
                    if a == b {
                        direct -= C64::new(1.0, 0.0) / ((z1 - z2) * (z1 - z2));
                    }
                    let mut series = C64::zero();
                    for k in 0..=14usize {
                        for l in 0..=(14 - k) {
                            series += sd.bergman.coeff(a, b, k, l) * z1.powi(k as i32) * z2.powi(l as i32);
                        }
                    }
                    assert!((direct - series).norm() < 1e-7 * (1.0 + direct.norm()), "{a}{b} {direct} {series}");
                    if a == b {
                        for k in 0..6 {
                            for l in 0..6 {
                                let d = sd.bergman.coeff(a, a, k, l) - sd.bergman.coeff(a, a, l, k);
                                assert!(d.norm() < 1e-8);
                            }
                        }
                    }
                }
            }
            if n >= 2 {
                let (c0, c1) = (&sd.charts[0], &sd.charts[1]);
                let want = c0.y.coeff(1) * c1.y.coeff(1) / ((c0.p - c1.p) * (c0.p - c1.p));
                assert!((sd.bergman.coeff(0, 1, 0, 0) - want).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn dxi0_is_exact() {
        for m in models() {
            let sd = SpectralData::new(&m, 12).unwrap();
            for a in 0..m.size() {
                for b in 0..m.size() {
                    let lhs = sd.dxi(a, 0, b);
                    let rhs = sd.xi0_function(a, b).unwrap().derivative();
                    let w0 = sd.w_form(a, 0, b).unwrap();
                    let order = lhs.order().min(rhs.order()).min(8);
                    assert!(lhs.truncate(order).max_diff(&rhs.truncate(order)) < 1e-9);
                    assert!(w0.truncate(order).max_diff(&rhs.truncate(order)) < 1e-12);
                    if a != b {
                        assert!(lhs.valuation(Tolerance::default()).unwrap_or(0) >= 0);
                    }
                }
            }
        }
    }

    #[test]
    fn eo_outputs_are_symmetric_and_even() {
        for m in models() {
            let mut eo = EoSolver::new(&m, 1, 2).unwrap();
            for (g, n) in [(0u32, 3usize), (1, 1), (0, 4), (1, 2)] {
                let t = eo.omega(g, n).unwrap();
                let scale = t.max_abs();
                assert!(scale > 0.0);
                assert!(t.symmetry_defect() < 1e-9 * scale, "({g},{n}) {}", t.symmetry_defect());
                assert!(t.odd_part() < 1e-9 * scale, "({g},{n}) odd {}", t.odd_part());
                let f = eo.eo_recursion(g, n).unwrap();
                assert!(f.entries.keys().all(|k| k.iter().all(|s| s.1 <= 3 * g as usize + n - 3)));
            }
        }
    }
}
