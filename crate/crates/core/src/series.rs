//! Truncated univariate and bivariate (Laurent) series.
//!
//! Two coefficient backends share one implementation: [`C64`] for the
//! geometry and [`BigRational`] for exact combinatorics. Conversion between
//! them is explicit ([`TruncSeries1::to_complex`]).
//!
//! A univariate series carries its own exponent window `[kmin, order]`.
//! Coefficients above `order` are unknown, never implicitly zero, and every
//! operation shrinks the window to what its inputs actually determine.

use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use num_complex::Complex;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use thiserror::Error;

pub type C64 = Complex<f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SeriesError {
    #[error("leading retained coefficient is (numerically) zero")]
    DegenerateSeries,
    #[error("series has no compositional inverse (zero linear term or nonzero constant)")]
    NotInvertible,
    #[error("square root of a series with odd leading exponent {0}")]
    BranchPoint(i32),
    #[error("D(z, -w/c) does not vanish: residual {0:e}")]
    NotDivisible(f64),
    #[error("incompatible variables {0} and {1}")]
    IncompatibleVariables(Var, Var),
    #[error("operation requires a power series (kmin >= 0), got kmin = {0}")]
    NegativeExponent(i32),
}

/// Formal variable tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(pub char);

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Relative tolerance used for "is this coefficient zero" decisions in
/// float mode. The scale is the largest coefficient magnitude involved.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub rel: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance { rel: 1e-9 }
    }
}

/// Coefficient ring for truncated series.
pub trait Coeff:
    Clone
    + fmt::Debug
    + PartialEq
    + Zero
    + One
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn from_i64(v: i64) -> Self;
    fn magnitude(&self) -> f64;
    /// Exact backends only accept exact zero.
    fn negligible(&self, scale: f64, tol: Tolerance) -> bool;
}

impl Coeff for C64 {
    fn from_i64(v: i64) -> Self {
        C64::new(v as f64, 0.0)
    }
    fn magnitude(&self) -> f64 {
        self.norm()
    }
    fn negligible(&self, scale: f64, tol: Tolerance) -> bool {
        self.norm() <= tol.rel * scale.max(f64::MIN_POSITIVE)
    }
}

impl Coeff for BigRational {
    fn from_i64(v: i64) -> Self {
        BigRational::from_integer(v.into())
    }
    fn magnitude(&self) -> f64 {
        self.to_f64().map(f64::abs).unwrap_or(f64::INFINITY)
    }
    fn negligible(&self, _scale: f64, _tol: Tolerance) -> bool {
        self.is_zero()
    }
}

/// Truncated Laurent series `sum_{k=kmin}^{order} c_k x^k + O(x^{order+1})`.
#[derive(Clone, Debug, PartialEq)]
pub struct TruncSeries1<T> {
    var: Var,
    kmin: i32,
    order: i32,
    coeffs: Vec<T>,
}

impl<T: Coeff> TruncSeries1<T> {
    pub fn new(var: Var, kmin: i32, coeffs: Vec<T>) -> Self {
        let order = kmin + coeffs.len() as i32 - 1;
        TruncSeries1 { var, kmin, order, coeffs }
    }

    /// Series with explicit truncation order; `coeffs` beyond `order` are dropped
    /// and missing ones are zero.
    pub fn with_order(var: Var, kmin: i32, mut coeffs: Vec<T>, order: i32) -> Self {
        let len = (order - kmin + 1).max(0) as usize;
        coeffs.resize(len, T::zero());
        TruncSeries1 { var, kmin, order, coeffs }
    }

    pub fn zero(var: Var, order: i32) -> Self {
        Self::with_order(var, 0, vec![], order)
    }

    pub fn constant(var: Var, c: T, order: i32) -> Self {
        Self::with_order(var, 0, vec![c], order)
    }

    /// `c * x^k` known through `order`.
    pub fn monomial(var: Var, c: T, k: i32, order: i32) -> Self {
        Self::with_order(var, k.min(order + 1), vec![c], order)
    }

    pub fn var(&self) -> Var {
        self.var
    }
    pub fn kmin(&self) -> i32 {
        self.kmin
    }
    pub fn order(&self) -> i32 {
        self.order
    }

    /// Coefficient of `x^k`; zero below the window. Panics above the order.
    pub fn coeff(&self, k: i32) -> T {
        assert!(k <= self.order, "coefficient x^{k} is beyond truncation order {}", self.order);
        if k < self.kmin {
            T::zero()
        } else {
            self.coeffs[(k - self.kmin) as usize].clone()
        }
    }

    pub fn get(&self, k: i32) -> Option<T> {
        (k <= self.order).then(|| self.coeff(k))
    }

    pub fn set(&mut self, k: i32, c: T) {
        assert!(k >= self.kmin && k <= self.order);
        self.coeffs[(k - self.kmin) as usize] = c;
    }

    /// Iterator over `(exponent, coefficient)` inside the window.
    pub fn terms(&self) -> impl Iterator<Item = (i32, &T)> {
        self.coeffs.iter().enumerate().map(move |(i, c)| (self.kmin + i as i32, c))
    }

    pub fn max_magnitude(&self) -> f64 {
        self.coeffs.iter().map(|c| c.magnitude()).fold(0.0, f64::max)
    }

    /// Exponent of the first coefficient that is not negligible, if any.
    pub fn valuation(&self, tol: Tolerance) -> Option<i32> {
        let scale = self.max_magnitude();
        self.terms().find(|(_, c)| !c.negligible(scale, tol)).map(|(k, _)| k)
    }

    pub fn is_zero_within(&self, tol: Tolerance) -> bool {
        self.valuation(tol).is_none()
    }

    pub fn truncate(&self, order: i32) -> Self {
        let order = order.min(self.order);
        let mut c = self.coeffs.clone();
        c.truncate((order - self.kmin + 1).max(0) as usize);
        Self::with_order(self.var, self.kmin, c, order)
    }

    /// Drop leading negligible coefficients so `kmin` equals the valuation.
    pub fn normalized(&self, tol: Tolerance) -> Self {
        match self.valuation(tol) {
            None => Self::zero(self.var, self.order).with_kmin_at_most(self.kmin.min(self.order + 1)),
            Some(v) => {
                let c = self.coeffs[(v - self.kmin) as usize..].to_vec();
                Self::with_order(self.var, v, c, self.order)
            }
        }
    }

    fn with_kmin_at_most(mut self, kmin: i32) -> Self {
        if kmin < self.kmin {
            let pad = (self.kmin - kmin) as usize;
            let mut c = vec![T::zero(); pad];
            c.extend(self.coeffs);
            self.coeffs = c;
            self.kmin = kmin;
        }
        self
    }

    fn check_var(&self, other: &Self) -> Result<(), SeriesError> {
        if self.var != other.var {
            return Err(SeriesError::IncompatibleVariables(self.var, other.var));
        }
        Ok(())
    }

    pub fn try_add(&self, other: &Self) -> Result<Self, SeriesError> {
        self.check_var(other)?;
        let order = self.order.min(other.order);
        let kmin = self.kmin.min(other.kmin);
        let coeffs = (kmin..=order).map(|k| {
            let a = if k >= self.kmin { self.coeff(k) } else { T::zero() };
            let b = if k >= other.kmin { other.coeff(k) } else { T::zero() };
            a + b
        });
        Ok(Self::with_order(self.var, kmin, coeffs.collect(), order))
    }

    pub fn try_sub(&self, other: &Self) -> Result<Self, SeriesError> {
        self.try_add(&other.neg_series())
    }

    pub fn neg_series(&self) -> Self {
        Self { coeffs: self.coeffs.iter().map(|c| -c.clone()).collect(), ..self.clone() }
    }

    pub fn scale(&self, s: &T) -> Self {
        Self { coeffs: self.coeffs.iter().map(|c| c.clone() * s.clone()).collect(), ..self.clone() }
    }

    /// Multiply by `x^k`.
    pub fn shift(&self, k: i32) -> Self {
        Self { kmin: self.kmin + k, order: self.order + k, ..self.clone() }
    }

    pub fn try_mul(&self, other: &Self) -> Result<Self, SeriesError> {
        self.check_var(other)?;
        let tol = Tolerance::default();
        // Absolute precision of a product is limited by the other factor's valuation.
        let va = self.valuation(tol).unwrap_or(self.order + 1);
        let vb = other.valuation(tol).unwrap_or(other.order + 1);
        let order = (self.order + vb).min(other.order + va);
        let kmin = self.kmin + other.kmin;
        let len = (order - kmin + 1).max(0) as usize;
        let mut out = vec![T::zero(); len];
        for (i, a) in self.coeffs.iter().enumerate() {
            if a.is_zero() {
                continue;
            }
            for (j, b) in other.coeffs.iter().enumerate() {
                let idx = i + j;
                if idx >= len {
                    break;
                }
                out[idx] = out[idx].clone() + a.clone() * b.clone();
            }
        }
        Ok(Self::with_order(self.var, kmin, out, order))
    }

    /// Multiplicative inverse; the leading retained coefficient must be nonzero.
    pub fn inv(&self) -> Result<Self, SeriesError> {
        let tol = Tolerance::default();
        let v = self.valuation(tol).ok_or(SeriesError::DegenerateSeries)?;
        if v != self.kmin {
            return self.normalized(tol).inv();
        }
        let rel = self.order - v;
        let a0 = self.coeffs[0].clone();
        let mut out: Vec<T> = Vec::with_capacity(rel as usize + 1);
        out.push(T::one() / a0.clone());
        for n in 1..=rel as usize {
            let mut s = T::zero();
            for k in 1..=n {
                s = s + self.coeffs[k].clone() * out[n - k].clone();
            }
            out.push(-s / a0.clone());
        }
        Ok(Self::with_order(self.var, -v, out, -v + rel))
    }

    pub fn try_div(&self, other: &Self) -> Result<Self, SeriesError> {
        self.try_mul(&other.inv()?)
    }

    /// `a + b`, `a * b` or `a / b`.
    pub fn arith(&self, other: &Self, op: ArithOp) -> Result<Self, SeriesError> {
        match op {
            ArithOp::Add => self.try_add(other),
            ArithOp::Mul => self.try_mul(other),
            ArithOp::Div => self.try_div(other),
        }
    }

    pub fn powi(&self, n: i32) -> Result<Self, SeriesError> {
        if n < 0 {
            return self.inv()?.powi(-n);
        }
        if n == 0 {
            return Ok(Self::constant(self.var, T::one(), self.order - self.kmin));
        }
        let mut out = self.clone();
        for _ in 1..n {
            out = out.try_mul(self)?;
        }
        Ok(out)
    }

    pub fn derivative(&self) -> Self {
        let coeffs: Vec<T> = self.terms().map(|(k, c)| c.clone() * T::from_i64(k as i64)).collect();
        Self::with_order(self.var, self.kmin - 1, coeffs, self.order - 1)
    }

    /// Antiderivative with zero constant term. Fails on an `x^-1` term.
    pub fn integral(&self) -> Result<Self, SeriesError> {
        let tol = Tolerance::default();
        let scale = self.max_magnitude();
        let mut coeffs = Vec::with_capacity(self.coeffs.len());
        for (k, c) in self.terms() {
            if k == -1 {
                if !c.negligible(scale, tol) {
                    return Err(SeriesError::DegenerateSeries);
                }
                coeffs.push(T::zero());
            } else {
                coeffs.push(c.clone() / T::from_i64(k as i64 + 1));
            }
        }
        let mut s = Self::with_order(self.var, self.kmin + 1, coeffs, self.order + 1);
        if self.kmin + 1 <= 0 && self.order + 1 >= 0 {
            s.set(0, T::zero());
        }
        Ok(s)
    }

    /// `self(inner(x))` for a power series `self` and `inner` with zero constant term.
    pub fn compose(&self, inner: &Self) -> Result<Self, SeriesError> {
        let tol = Tolerance::default();
        let vi = inner.valuation(tol).unwrap_or(inner.order + 1);
        if vi < 1 {
            return Err(SeriesError::NotInvertible);
        }
        if self.kmin < 0 {
            return Err(SeriesError::NegativeExponent(self.kmin));
        }
        let order = ((self.order + 1) * vi - 1).min(inner.order);
        let inner = inner.truncate(order);
        let mut acc = Self::zero(inner.var, order);
        // Horner from the top.
        for k in (0..=self.order).rev() {
            acc = acc.try_mul(&inner)?.truncate(order);
            let ck = Self::constant(inner.var, self.coeff(k), order);
            acc = acc.try_add(&ck)?;
        }
        Ok(acc.truncate(order))
    }

    /// Compositional inverse of `a = a1 x + a2 x^2 + ...` with `a1 != 0`.
    pub fn revert(&self) -> Result<Self, SeriesError> {
        let tol = Tolerance::default();
        let scale = self.max_magnitude();
        if self.kmin < 0 && self.terms().any(|(k, c)| k < 1 && !c.negligible(scale, tol)) {
            return Err(SeriesError::NotInvertible);
        }
        if self.order < 1 {
            return Err(SeriesError::NotInvertible);
        }
        let c0 = self.coeff(0);
        let a1 = self.coeff(1);
        if !c0.negligible(scale, tol) || a1.negligible(scale, tol) {
            return Err(SeriesError::NotInvertible);
        }
        let order = self.order;
        let a = Self::with_order(self.var, 1, (1..=order).map(|k| self.coeff(k)).collect(), order);
        // Fixed point b = (x - (a(b) - a1 b)) / a1; each pass fixes one more order.
        let x = Self::monomial(self.var, T::one(), 1, order);
        let mut b = x.scale(&(T::one() / a1.clone()));
        let higher = {
            let mut h = a.clone();
            h.set(1, T::zero());
            h
        };
        let higher_ps = Self::with_order(self.var, 0, (0..=order).map(|k| higher.coeff(k)).collect(), order);
        for _ in 1..order {
            let hb = higher_ps.compose(&b)?.truncate(order);
            b = x.try_sub(&hb)?.scale(&(T::one() / a1.clone())).truncate(order);
        }
        Ok(b)
    }

    /// Evaluate the retained polynomial at a point (C64 only makes sense for
    /// floats, but exact evaluation works for rationals too).
    pub fn eval_at(&self, x: &T) -> T {
        let mut acc = T::zero();
        let mut p = T::one();
        if self.kmin < 0 {
            let inv = T::one() / x.clone();
            for _ in 0..(-self.kmin) {
                p = p * inv.clone();
            }
        } else {
            for _ in 0..self.kmin {
                p = p * x.clone();
            }
        }
        for c in &self.coeffs {
            acc = acc + c.clone() * p.clone();
            p = p * x.clone();
        }
        acc
    }

    /// Substitute `x -> c x`.
    pub fn rescale_var(&self, c: &T) -> Self {
        let cinv = T::one() / c.clone();
        let coeffs = self
            .terms()
            .map(|(k, a)| {
                let mut p = T::one();
                let base = if k >= 0 { c.clone() } else { cinv.clone() };
                for _ in 0..k.unsigned_abs() {
                    p = p * base.clone();
                }
                a.clone() * p
            })
            .collect();
        Self::with_order(self.var, self.kmin, coeffs, self.order)
    }

    /// Largest coefficient difference against another series over the common window.
    pub fn max_diff(&self, other: &Self) -> f64 {
        let order = self.order.min(other.order);
        let kmin = self.kmin.min(other.kmin);
        (kmin..=order)
            .map(|k| {
                let a = if k >= self.kmin { self.coeff(k) } else { T::zero() };
                let b = if k >= other.kmin { other.coeff(k) } else { T::zero() };
                (a - b).magnitude()
            })
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArithOp {
    Add,
    Mul,
    Div,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Plus,
    Minus,
}

impl TruncSeries1<C64> {
    pub fn to_complex(&self) -> Self {
        self.clone()
    }

    /// `exp` of a power series; the constant term is exponentiated numerically.
    pub fn exp(&self) -> Result<Self, SeriesError> {
        if self.kmin < 0 {
            let scale = self.max_magnitude();
            if self.terms().any(|(k, c)| k < 0 && !c.negligible(scale, Tolerance::default())) {
                return Err(SeriesError::NegativeExponent(self.kmin));
            }
        }
        let order = self.order;
        let a: Vec<C64> = (0..=order).map(|k| if k >= self.kmin { self.coeff(k) } else { C64::zero() }).collect();
        // b' = a' b
        let mut b = vec![C64::zero(); (order + 1).max(0) as usize];
        if b.is_empty() {
            return Ok(Self::zero(self.var, order));
        }
        b[0] = a[0].exp();
        for n in 1..b.len() {
            let mut s = C64::zero();
            for k in 1..=n {
                s += a[k] * (k as f64) * b[n - k];
            }
            b[n] = s / n as f64;
        }
        Ok(Self::with_order(self.var, 0, b, order))
    }

    /// Principal `log` of a power series with nonzero constant term.
    pub fn ln(&self) -> Result<Self, SeriesError> {
        let tol = Tolerance::default();
        if self.valuation(tol) != Some(0) {
            return Err(SeriesError::DegenerateSeries);
        }
        let a0 = self.coeff(0);
        let d = self.derivative().try_div(self)?;
        let mut l = d.integral()?;
        l = l.truncate(self.order);
        l.set(0, a0.ln());
        Ok(l)
    }

    /// Square root; `branch` picks the sign of the principal root of the
    /// leading coefficient.
    pub fn sqrt_branch(&self, branch: Branch) -> Result<Self, SeriesError> {
        let tol = Tolerance::default();
        let v = self.valuation(tol).ok_or(SeriesError::DegenerateSeries)?;
        if v.rem_euclid(2) != 0 {
            return Err(SeriesError::BranchPoint(v));
        }
        let n = self.normalized(tol);
        let lead = n.coeff(v);
        let unit = n.shift(-v).scale(&(C64::one() / lead));
        let half = C64::new(0.5, 0.0);
        let root = unit.ln()?.scale(&half).exp()?;
        let mut r0 = lead.sqrt();
        if branch == Branch::Minus {
            r0 = -r0;
        }
        Ok(root.scale(&r0).shift(v / 2))
    }
}

impl TruncSeries1<BigRational> {
    pub fn to_complex(&self) -> TruncSeries1<C64> {
        let c = self.coeffs.iter().map(|c| C64::new(c.to_f64().unwrap_or(f64::NAN), 0.0)).collect();
        TruncSeries1::with_order(self.var, self.kmin, c, self.order)
    }
}

/// Truncated bivariate power series with total-degree window `k + l <= order`.
#[derive(Clone, Debug, PartialEq)]
pub struct TruncSeries2<T> {
    vars: (Var, Var),
    order: i32,
    coeffs: Vec<T>,
}

fn tri_index(k: usize, l: usize) -> usize {
    let d = k + l;
    d * (d + 1) / 2 + l
}

impl<T: Coeff> TruncSeries2<T> {
    pub fn zero(vars: (Var, Var), order: i32) -> Self {
        let n = ((order + 1) * (order + 2) / 2).max(0) as usize;
        TruncSeries2 { vars, order, coeffs: vec![T::zero(); n] }
    }

    pub fn from_fn(vars: (Var, Var), order: i32, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut s = Self::zero(vars, order);
        for d in 0..=order.max(-1) as usize {
            for l in 0..=d {
                s.coeffs[tri_index(d - l, l)] = f(d - l, l);
            }
        }
        s
    }

    pub fn vars(&self) -> (Var, Var) {
        self.vars
    }
    pub fn order(&self) -> i32 {
        self.order
    }

    /// `[x^k y^l]`; panics outside the window.
    pub fn coeff(&self, k: usize, l: usize) -> T {
        assert!((k + l) as i32 <= self.order, "[{k},{l}] outside total order {}", self.order);
        self.coeffs[tri_index(k, l)].clone()
    }

    pub fn set(&mut self, k: usize, l: usize, c: T) {
        self.coeffs[tri_index(k, l)] = c;
    }

    /// `a(x) * b(y)` for power series `a`, `b`.
    pub fn outer(vars: (Var, Var), a: &TruncSeries1<T>, b: &TruncSeries1<T>, order: i32) -> Self {
        let order = order.min(a.order() + b.kmin().max(0)).min(b.order() + a.kmin().max(0));
        Self::from_fn(vars, order, |k, l| a.coeff(k as i32) * b.coeff(l as i32))
    }

    /// Embed a univariate series in the first (`first = true`) or second variable.
    pub fn embed(vars: (Var, Var), a: &TruncSeries1<T>, first: bool) -> Self {
        let order = a.order();
        Self::from_fn(vars, order, |k, l| match (first, k, l) {
            (true, k, 0) => a.coeff(k as i32),
            (false, 0, l) => a.coeff(l as i32),
            _ => T::zero(),
        })
    }

    fn check(&self, other: &Self) -> Result<(), SeriesError> {
        if self.vars != other.vars {
            return Err(SeriesError::IncompatibleVariables(self.vars.0, other.vars.0));
        }
        Ok(())
    }

    pub fn try_add(&self, other: &Self) -> Result<Self, SeriesError> {
        self.check(other)?;
        let order = self.order.min(other.order);
        Ok(Self::from_fn(self.vars, order, |k, l| self.coeff(k, l) + other.coeff(k, l)))
    }

    pub fn try_sub(&self, other: &Self) -> Result<Self, SeriesError> {
        self.check(other)?;
        let order = self.order.min(other.order);
        Ok(Self::from_fn(self.vars, order, |k, l| self.coeff(k, l) - other.coeff(k, l)))
    }

    pub fn scale(&self, s: &T) -> Self {
        Self { coeffs: self.coeffs.iter().map(|c| c.clone() * s.clone()).collect(), ..self.clone() }
    }

    pub fn try_mul(&self, other: &Self) -> Result<Self, SeriesError> {
        self.check(other)?;
        let order = self.order.min(other.order);
        let mut out = Self::zero(self.vars, order);
        let o = order as usize;
        for d1 in 0..=o {
            for l1 in 0..=d1 {
                let a = &self.coeffs[tri_index(d1 - l1, l1)];
                if a.is_zero() {
                    continue;
                }
                for d2 in 0..=(o - d1) {
                    for l2 in 0..=d2 {
                        let b = &other.coeffs[tri_index(d2 - l2, l2)];
                        let idx = tri_index(d1 - l1 + d2 - l2, l1 + l2);
                        out.coeffs[idx] = out.coeffs[idx].clone() + a.clone() * b.clone();
                    }
                }
            }
        }
        Ok(out)
    }

    /// Inverse of a series with nonzero constant term.
    pub fn inv(&self) -> Result<Self, SeriesError> {
        let c0 = self.coeff(0, 0);
        let scale = self.coeffs.iter().map(|c| c.magnitude()).fold(0.0, f64::max);
        if c0.negligible(scale, Tolerance::default()) {
            return Err(SeriesError::DegenerateSeries);
        }
        let o = self.order as usize;
        let mut out = Self::zero(self.vars, self.order);
        out.set(0, 0, T::one() / c0.clone());
        for d in 1..=o {
            for l in 0..=d {
                let k = d - l;
                let mut s = T::zero();
                for i in 0..=k {
                    for j in 0..=l {
                        if i == 0 && j == 0 {
                            continue;
                        }
                        s = s + self.coeff(i, j) * out.coeff(k - i, l - j);
                    }
                }
                out.set(k, l, -s / c0.clone());
            }
        }
        Ok(out)
    }

    /// `D(x, y) / (x + c y)`; requires `D(x, -x/c) = 0` through the window.
    pub fn divide_linear(&self, c: &T, tol: Tolerance) -> Result<Self, SeriesError> {
        let o = self.order;
        let scale = self.coeffs.iter().map(|c| c.magnitude()).fold(0.0, f64::max);
        // Check D(x, -x/c) = 0 degree by degree.
        let minv = -(T::one() / c.clone());
        let mut worst = 0.0f64;
        for d in 0..=o.max(-1) as usize {
            let mut s = T::zero();
            let mut p = T::one();
            for l in 0..=d {
                s = s + self.coeff(d - l, l) * p.clone();
                p = p * minv.clone();
            }
            if !s.negligible(scale, tol) {
                worst = worst.max(s.magnitude());
            }
        }
        if worst > 0.0 {
            return Err(SeriesError::NotDivisible(worst));
        }
        let mut q = Self::zero(self.vars, o - 1);
        for d in 0..o.max(0) as usize {
            for k in 0..=d {
                let l = d - k;
                // D_{k,l+1} = Q_{k-1,l+1} + c Q_{k,l}
                let mut v = self.coeff(k, l + 1);
                if k >= 1 {
                    v = v - q.coeff(k - 1, l + 1);
                }
                q.set(k, l, v / c.clone());
            }
        }
        Ok(q)
    }

    pub fn max_diff(&self, other: &Self) -> f64 {
        let order = self.order.min(other.order) as usize;
        let mut m = 0.0f64;
        for d in 0..=order {
            for l in 0..=d {
                m = m.max((self.coeff(d - l, l) - other.coeff(d - l, l)).magnitude());
            }
        }
        m
    }
}

/// `D(z, w) / (z + w)`, the kernel behind edge weights.
pub fn divide_sum_kernel<T: Coeff>(d: &TruncSeries2<T>) -> Result<TruncSeries2<T>, SeriesError> {
    d.divide_linear(&T::one(), Tolerance::default())
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigInt;

    const Z: Var = Var('z');
    const W: Var = Var('w');

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    fn ps(coeffs: &[f64], order: i32) -> TruncSeries1<C64> {
        TruncSeries1::with_order(Z, 0, coeffs.iter().map(|&x| c(x)).collect(), order)
    }

    fn rat(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    #[test]
    fn difference_of_squares() {
        let a = ps(&[1.0, 1.0], 4);
        let b = ps(&[1.0, -1.0], 4);
        let p = a.try_mul(&b).unwrap();
        assert!(p.max_diff(&ps(&[1.0, 0.0, -1.0], 4)) < 1e-15);
    }

    #[test]
    fn self_division_is_one() {
        let a = ps(&[1.0, 3.0, 1.0], 5);
        let q = a.try_div(&a).unwrap();
        assert_eq!(q.order(), 5);
        assert!(q.max_diff(&ps(&[1.0], 5)) < 1e-12);
    }

    #[test]
    fn geometric_series_matches_long_division() {
        // Long division of 1 by 1 - z, written out by hand.
        let q = ps(&[1.0], 4).try_div(&ps(&[1.0, -1.0], 4)).unwrap();
        assert!(q.max_diff(&ps(&[1.0, 1.0, 1.0, 1.0, 1.0], 4)) < 1e-15);
        assert_eq!(q.order(), 4);
    }

    #[test]
    fn division_by_zero_leading_is_degenerate() {
        let zero = ps(&[0.0, 0.0], 3);
        assert_eq!(ps(&[1.0], 3).try_div(&zero).unwrap_err(), SeriesError::DegenerateSeries);
    }

    #[test]
    fn variables_must_match() {
        let a = ps(&[1.0], 2);
        let b = TruncSeries1::with_order(W, 0, vec![c(1.0)], 2);
        assert!(matches!(a.try_add(&b), Err(SeriesError::IncompatibleVariables(..))));
    }

    #[test]
    fn revert_examples() {
        let id = ps(&[0.0, 1.0], 5);
        assert!(id.revert().unwrap().max_diff(&id) < 1e-15);
        // Lagrange inversion of z + z^2: coefficients (-1)^{n-1} Catalan(n-1).
        let r = ps(&[0.0, 1.0, 1.0], 3).revert().unwrap();
        assert!(r.max_diff(&ps(&[0.0, 1.0, -1.0, 2.0], 3)) < 1e-14);
        let r2 = ps(&[0.0, 2.0], 4).revert().unwrap();
        assert!(r2.max_diff(&ps(&[0.0, 0.5], 4)) < 1e-15);
        assert_eq!(ps(&[0.0, 0.0, 1.0], 3).revert().unwrap_err(), SeriesError::NotInvertible);
    }

    #[test]
    fn exact_revert() {
        let a = TruncSeries1::with_order(Z, 0, vec![rat(0, 1), rat(1, 1), rat(1, 1)], 6);
        let r = a.revert().unwrap();
        // Catalan numbers with alternating sign.
        let cat = [0, 1, -1, 2, -5, 14, -42];
        for (k, &cn) in cat.iter().enumerate() {
            assert_eq!(r.coeff(k as i32), rat(cn, 1));
        }
    }

    #[test]
    fn sqrt_examples() {
        // Binomial series (1+2z)^{1/2} = 1 + z - z^2/2 + ...
        let s = ps(&[1.0, 2.0], 2).sqrt_branch(Branch::Plus).unwrap();
        assert!(s.max_diff(&ps(&[1.0, 1.0, -0.5], 2)) < 1e-14);
        let four = ps(&[4.0], 3).sqrt_branch(Branch::Plus).unwrap();
        assert!(four.max_diff(&ps(&[2.0], 3)) < 1e-14);
        let m = ps(&[4.0], 3).sqrt_branch(Branch::Minus).unwrap();
        assert!(m.max_diff(&ps(&[-2.0], 3)) < 1e-14);
        assert_eq!(ps(&[0.0, 1.0], 3).sqrt_branch(Branch::Plus).unwrap_err(), SeriesError::BranchPoint(1));
    }

    #[test]
    fn sqrt_of_even_laurent() {
        let a = TruncSeries1::with_order(Z, -2, vec![c(9.0), c(0.0), c(6.0)], 0);
        let s = a.sqrt_branch(Branch::Plus).unwrap();
        assert_eq!(s.kmin(), -1);
        let sq = s.try_mul(&s).unwrap();
        assert!(sq.max_diff(&a) < 1e-14);
    }

    #[test]
    fn exp_log_roundtrip() {
        let a = ps(&[0.3, -1.0, 0.25, 2.0], 6);
        let back = a.exp().unwrap().ln().unwrap();
        assert!(back.max_diff(&a) < 1e-13);
    }

    #[test]
    fn sum_kernel_examples() {
        let v = (Z, W);
        let d = TruncSeries2::from_fn(v, 6, |k, l| match (k, l) {
            (1, 0) | (0, 1) => c(1.0),
            _ => c(0.0),
        });
        let q = divide_sum_kernel(&d).unwrap();
        assert!(q.max_diff(&TruncSeries2::from_fn(v, 5, |k, l| if k + l == 0 { c(1.0) } else { c(0.0) })) < 1e-15);

        let d = TruncSeries2::from_fn(v, 6, |k, l| match (k, l) {
            (2, 0) => c(1.0),
            (0, 2) => c(-1.0),
            _ => c(0.0),
        });
        let q = divide_sum_kernel(&d).unwrap();
        let want = TruncSeries2::from_fn(v, 5, |k, l| match (k, l) {
            (1, 0) => c(1.0),
            (0, 1) => c(-1.0),
            _ => c(0.0),
        });
        assert!(q.max_diff(&want) < 1e-15);

        // zw(z+w) / (z+w) = zw, checked against schoolbook polynomial division.
        let d = TruncSeries2::from_fn(v, 6, |k, l| match (k, l) {
            (2, 1) | (1, 2) => c(1.0),
            _ => c(0.0),
        });
        let q = divide_sum_kernel(&d).unwrap();
        let want = TruncSeries2::from_fn(v, 5, |k, l| if (k, l) == (1, 1) { c(1.0) } else { c(0.0) });
        assert!(q.max_diff(&want) < 1e-15);

        let bad = TruncSeries2::from_fn(v, 4, |k, l| if (k, l) == (1, 0) { c(1.0) } else { c(0.0) });
        assert!(matches!(divide_sum_kernel(&bad), Err(SeriesError::NotDivisible(_))));
    }

    #[test]
    fn bivariate_inverse() {
        let v = (Z, W);
        let a = TruncSeries2::from_fn(v, 5, |k, l| c(1.0 / (1.0 + k as f64 + 2.0 * l as f64)));
        let p = a.try_mul(&a.inv().unwrap()).unwrap();
        let one = TruncSeries2::from_fn(v, 5, |k, l| if k + l == 0 { c(1.0) } else { c(0.0) });
        assert!(p.max_diff(&one) < 1e-13);
    }
}
