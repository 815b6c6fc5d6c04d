//! R-matrices: the B-model series from formal Laplace integrals, the
//! A-model large-radius blocks from Bernoulli exponents, and the checks
//! relating them (unitarity, quantum differential equation, ambiguity).

use nalgebra::DMatrix;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Laurent, Model, SqrtDelta, Superpotential};
use crate::series::{TruncSeries1, Var, C64};
use crate::spectral::{double_factorial, local_expansion, ZETA};

pub const Z: Var = Var('z');

fn cplx(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// Matrix-valued series `sum_k R_k z^k`; `coeffs[k][(a, b)] = [z^k] R_a^b`.
#[derive(Debug, Clone, PartialEq)]
pub struct RMatrixSeries {
    pub coeffs: Vec<DMatrix<C64>>,
}

impl RMatrixSeries {
    pub fn identity(size: usize, order: usize) -> Self {
        let mut coeffs = vec![DMatrix::zeros(size, size); order + 1];
        coeffs[0] = DMatrix::identity(size, size);
        RMatrixSeries { coeffs }
    }

    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn size(&self) -> usize {
        self.coeffs[0].nrows()
    }

    pub fn entry(&self, a: usize, b: usize) -> TruncSeries1<C64> {
        let c = self.coeffs.iter().map(|m| m[(a, b)]).collect();
        TruncSeries1::with_order(Z, 0, c, self.order() as i32)
    }

    /// `R(-z)`.
    pub fn reflect(&self) -> Self {
        let coeffs = self.coeffs.iter().enumerate().map(|(k, m)| if k % 2 == 0 { m.clone() } else { -m }).collect();
        RMatrixSeries { coeffs }
    }

    pub fn transpose(&self) -> Self {
        RMatrixSeries { coeffs: self.coeffs.iter().map(|m| m.transpose()).collect() }
    }

    pub fn truncate(&self, order: usize) -> Self {
        RMatrixSeries { coeffs: self.coeffs[..=order.min(self.order())].to_vec() }
    }

    pub fn mul(&self, other: &Self) -> Self {
        let order = self.order().min(other.order());
        let n = self.size();
        let coeffs = (0..=order)
            .map(|k| {
                let mut acc = DMatrix::zeros(n, other.coeffs[0].ncols());
                for i in 0..=k {
                    acc += &self.coeffs[i] * &other.coeffs[k - i];
                }
                acc
            })
            .collect();
        RMatrixSeries { coeffs }
    }

    /// Inverse of a series whose constant term is invertible.
    pub fn inverse(&self) -> Result<Self> {
        let inv0 = self.coeffs[0].clone().try_inverse().ok_or(Error::NonconvergentNormalization)?;
        let mut out = vec![inv0.clone()];
        for k in 1..=self.order() {
            let mut acc = DMatrix::zeros(self.size(), self.size());
            for i in 1..=k {
                acc += &self.coeffs[i] * &out[k - i];
            }
            out.push(-&inv0 * acc);
        }
        Ok(RMatrixSeries { coeffs: out })
    }

    pub fn scale_rows(&self, s: &[C64]) -> Self {
        let coeffs = self
            .coeffs
            .iter()
            .map(|m| DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)] * s[i]))
            .collect();
        RMatrixSeries { coeffs }
    }

    /// Sub-matrix on the given index set.
    pub fn block(&self, idx: &[usize]) -> Self {
        let coeffs = self.coeffs.iter().map(|m| DMatrix::from_fn(idx.len(), idx.len(), |i, j| m[(idx[i], idx[j])])).collect();
        RMatrixSeries { coeffs }
    }

    pub fn permute(&self, perm: &[usize]) -> Self {
        self.block(perm)
    }

    /// Largest coefficient of `R(z) R^T(-z) - id`.
    pub fn unitarity_residual(&self) -> f64 {
        let prod = self.mul(&self.transpose().reflect());
        let id = Self::identity(self.size(), self.order());
        prod.max_diff(&id)
    }

    pub fn max_diff(&self, other: &Self) -> f64 {
        self.coeffs
            .iter()
            .zip(&other.coeffs)
            .flat_map(|(a, b)| (a - b).iter().map(|x| x.norm()).collect::<Vec<_>>())
            .fold(0.0, f64::max)
    }

    pub fn to_records(&self) -> Vec<REntry> {
        let n = self.size();
        let mut out = Vec::new();
        for a in 0..n {
            for b in 0..n {
                out.push(REntry {
                    alpha: a,
                    beta: b,
                    coeffs: self.coeffs.iter().map(|m| [m[(a, b)].re, m[(a, b)].im]).collect(),
                });
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct REntry {
    pub alpha: usize,
    pub beta: usize,
    pub coeffs: Vec<[f64; 2]>,
}

/// Normalised B-model R-matrix and the raw `z^0` prefactors removed from each row.
#[derive(Debug, Clone)]
pub struct LaplaceR {
    pub r: RMatrixSeries,
    /// `[z^0]` of the raw integral in row `alpha`, up to the common `i sqrt(2 pi)`.
    pub prefactors: Vec<C64>,
}

/// Formal stationary-phase expansion of `sqrt(-2 pi z) int_{gamma_b} e^{(W-u_b)/z} theta_a`
/// with `theta_a = dY/(Y - p_a)^2` (the constant `c_a` cancels in the normalisation).
///
/// On the thimble `zeta = i tau`, so `int e^{-zeta^2/z} zeta^{2j} d zeta =
/// i (-1)^j Gamma(j + 1/2) (-z)^{j + 1/2}`; odd moments vanish.
pub fn bmodel_r_laplace(model: &Model, order: usize) -> Result<LaplaceR> {
    let n = model.size();
    let chart_order = 2 * order as i32 + 4;
    let charts = (0..n).map(|b| local_expansion(model, b, chart_order)).collect::<Result<Vec<_>>>()?;
    // raw[k][(a, b)] without the common factor i sqrt(2 pi) sqrt(pi)
    let mut raw = vec![DMatrix::<C64>::zeros(n, n); order + 1];
    for (b, ch) in charts.iter().enumerate() {
        let dy = ch.y.derivative();
        for a in 0..n {
            let shifted = ch.y.try_sub(&TruncSeries1::constant(ZETA, charts[a].p, ch.y.order()))?;
            let inv = shifted.inv()?;
            let theta = dy.try_mul(&inv.try_mul(&inv)?)?;
            for j in -1..order as i32 {
                let c = theta.get(2 * j).unwrap_or_default();
                // Gamma(j + 1/2)/sqrt(pi) (-1)^j
                let g = if j < 0 { -2.0 } else { double_factorial(2 * j as i64 - 1) / 2f64.powi(j) };
                let sign = if j.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
                // (-z)^{j+1}
                let zsign = if (j + 1) % 2 == 0 { 1.0 } else { -1.0 };
                raw[(j + 1) as usize][(a, b)] += c * (g * sign * zsign);
            }
        }
    }
    let prefactors: Vec<C64> = (0..n).map(|a| raw[0][(a, a)]).collect();
    let scale: Vec<C64> = prefactors
        .iter()
        .map(|p| if p.norm() > 0.0 { Ok(p.inv()) } else { Err(Error::NonconvergentNormalization) })
        .collect::<Result<_>>()?;
    let r = RMatrixSeries { coeffs: raw }.scale_rows(&scale);
    let off = (0..n).flat_map(|a| (0..n).filter(move |&b| b != a).map(move |b| (a, b))).map(|(a, b)| r.coeffs[0][(a, b)].norm()).fold(0.0, f64::max);
    if off > 1e-9 {
        return Err(Error::NonconvergentNormalization);
    }
    Ok(LaplaceR { r, prefactors })
}

/// Bernoulli numbers `B_0..=B_n` with `B_1 = -1/2`.
pub fn bernoulli_numbers(n: usize) -> Vec<BigRational> {
    let mut b: Vec<BigRational> = Vec::with_capacity(n + 1);
    for k in 0..=n {
        if k == 0 {
            b.push(BigRational::one());
            continue;
        }
        // sum_{j<=k} C(k+1, j) B_j = 0
        let mut acc = BigRational::zero();
        let mut binom = BigInt::one();
        for (j, bj) in b.iter().enumerate() {
            acc += BigRational::from_integer(binom.clone()) * bj;
            binom = binom * BigInt::from(k + 1 - j) / BigInt::from(j + 1);
        }
        b.push(-acc / BigRational::from_integer(BigInt::from(k + 1)));
    }
    b
}

/// Bernoulli polynomial `B_n(x)` at a rational point.
pub fn bernoulli_poly(n: usize, x: &BigRational) -> BigRational {
    let b = bernoulli_numbers(n);
    let mut acc = BigRational::zero();
    let mut binom = BigInt::one();
    for (k, bk) in b.iter().enumerate() {
        acc += BigRational::from_integer(binom.clone()) * bk * x.pow((n - k) as i32);
        binom = binom * BigInt::from(n - k) / BigInt::from(k + 1);
    }
    acc
}

/// Sign of the `t`-th term of the Bernoulli exponent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BernoulliSign {
    /// `(-1)^{t+1}`: Stirling's `log Gamma` series.
    Stirling,
    /// `(-1)^t`, as printed next to the character formula.
    Printed,
}

impl BernoulliSign {
    fn at(self, t: usize) -> f64 {
        let odd = t % 2 == 1;
        match self {
            BernoulliSign::Stirling => if odd { 1.0 } else { -1.0 },
            BernoulliSign::Printed => if odd { -1.0 } else { 1.0 },
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            BernoulliSign::Stirling => "(-1)^(t+1)",
            BernoulliSign::Printed => "(-1)^t",
        }
    }
}

/// `sum_{t=1}^{order} sign_t B_{t+1}(s)/(t(t+1)) x^t` as a series in `x`.
pub fn bernoulli_exponent(s: &BigRational, order: usize, sign: BernoulliSign) -> TruncSeries1<C64> {
    let mut c = vec![C64::zero(); order + 1];
    for (t, ct) in c.iter_mut().enumerate().skip(1) {
        let b = bernoulli_poly(t + 1, s).to_f64().unwrap_or(f64::NAN);
        *ct = cplx(sign.at(t) * b / (t * (t + 1)) as f64);
    }
    TruncSeries1::with_order(Z, 0, c, order as i32)
}

/// Fixed-point reals with `PREC` fractional bits, for validating `log Gamma`.
mod hiprec {
    use num_bigint::BigInt;
    use num_rational::BigRational;
    use num_traits::{One, Signed, Zero};

    pub const PREC: usize = 320;

    #[derive(Debug, Clone, PartialEq)]
    pub struct Fixed(pub BigInt);

    impl Fixed {
        pub fn from_rational(r: &BigRational) -> Self {
            Fixed((r.numer() << PREC) / r.denom())
        }

        pub fn from_int(k: i64) -> Self {
            Fixed(BigInt::from(k) << PREC)
        }

        pub fn add(&self, o: &Self) -> Self {
            Fixed(&self.0 + &o.0)
        }

        pub fn sub(&self, o: &Self) -> Self {
            Fixed(&self.0 - &o.0)
        }

        pub fn mul(&self, o: &Self) -> Self {
            Fixed((&self.0 * &o.0) >> PREC)
        }

        pub fn div(&self, o: &Self) -> Self {
            Fixed((&self.0 << PREC) / &o.0)
        }

        pub fn to_rational(&self) -> BigRational {
            BigRational::new(self.0.clone(), BigInt::one() << PREC)
        }
    }

    /// `atanh(x) = sum x^{2k+1}/(2k+1)` for `|x| < 1/2`.
    fn atanh(x: &Fixed) -> Fixed {
        let x2 = x.mul(x);
        let mut term = x.clone();
        let mut acc = Fixed(BigInt::zero());
        let mut k = 0i64;
        while !term.0.is_zero() {
            acc = acc.add(&Fixed(&term.0 / BigInt::from(2 * k + 1)));
            term = term.mul(&x2);
            k += 1;
        }
        acc
    }

    /// `atan(1/q)` for integer `q > 1`.
    fn atan_inv(q: i64) -> Fixed {
        let mut term = Fixed::from_int(1).div(&Fixed::from_int(q));
        let q2 = BigInt::from(q * q);
        let mut acc = Fixed(BigInt::zero());
        let mut k = 0i64;
        while !term.0.is_zero() {
            let t = Fixed(&term.0 / BigInt::from(2 * k + 1));
            acc = if k % 2 == 0 { acc.add(&t) } else { acc.sub(&t) };
            term = Fixed(&term.0 / &q2);
            k += 1;
        }
        acc
    }

    pub fn pi() -> Fixed {
        let a = atan_inv(5);
        let b = atan_inv(239);
        Fixed(a.0 * 16 - b.0 * 4)
    }

    fn ln2() -> Fixed {
        let third = Fixed::from_int(1).div(&Fixed::from_int(3));
        Fixed(atanh(&third).0 * 2)
    }

    /// Natural logarithm of a positive fixed-point value.
    pub fn ln(x: &Fixed) -> Fixed {
        assert!(x.0.is_positive(), "log of a non-positive value");
        let one = Fixed::from_int(1);
        let two = Fixed::from_int(2);
        let mut y = x.clone();
        let mut k = 0i64;
        while y.0 >= two.0 {
            y = Fixed(&y.0 >> 1);
            k += 1;
        }
        while y.0 < one.0 {
            y = Fixed(&y.0 << 1);
            k -= 1;
        }
        // y in [1, 2): ln y = 2 atanh((y-1)/(y+1)), argument below 1/3
        let r = y.sub(&one).div(&y.add(&one));
        let body = Fixed(atanh(&r).0 * 2);
        body.add(&Fixed(ln2().0 * k))
    }
}

/// Outcome of checking the Bernoulli exponent against `log Gamma`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StirlingValidation {
    pub lambda: f64,
    pub terms: usize,
    /// `|log Gamma(lambda + s) - series|` per sign convention, maximised over `s in {0, 1/2}`.
    pub deviation_stirling: f64,
    pub deviation_printed: f64,
    pub adopted: BernoulliSign,
}

/// Evaluate both sign conventions against `log Gamma` at integer `lambda`
/// and half-integer `lambda + 1/2`, both exact through products of rationals
/// and `sqrt(pi)`, and adopt the one that matches.
pub fn validate_stirling(lambda: u32, terms: usize) -> StirlingValidation {
    use hiprec::{ln, pi, Fixed};
    let lam = BigRational::from_integer(BigInt::from(lambda));
    let ln_lam = ln(&Fixed::from_rational(&lam));
    let ln_2pi = ln(&Fixed(pi().0 * 2));
    let ln_pi = ln(&pi());
    let half = BigRational::new(BigInt::one(), BigInt::from(2));
    let mut dev = [0.0f64; 2];
    for s in [BigRational::zero(), half.clone()] {
        // exact log Gamma(lambda + s)
        let exact = if s.is_zero() {
            let fact: BigInt = (1..lambda).map(BigInt::from).product();
            ln(&Fixed::from_rational(&BigRational::from_integer(fact)))
        } else {
            // Gamma(lambda + 1/2) = sqrt(pi) prod_{k<lambda} (k + 1/2)
            let prod = (0..lambda).fold(BigRational::one(), |acc, k| acc * (BigRational::from_integer(BigInt::from(k)) + &half));
            ln(&Fixed::from_rational(&prod)).add(&Fixed(&ln_pi.0 / 2))
        };
        for (slot, sign) in [BernoulliSign::Stirling, BernoulliSign::Printed].into_iter().enumerate() {
            let lead = Fixed::from_rational(&(&lam + &s - &half)).mul(&ln_lam).sub(&Fixed::from_rational(&lam)).add(&Fixed(&ln_2pi.0 / 2));
            let mut tail = BigRational::zero();
            for t in 1..=terms {
                let b = bernoulli_poly(t + 1, &s);
                let coef = b / BigRational::from_integer(BigInt::from(t * (t + 1))) / lam.pow(t as i32);
                tail += if sign.at(t) > 0.0 { coef } else { -coef };
            }
            let approx = lead.add(&Fixed::from_rational(&tail));
            let diff = exact.sub(&approx).to_rational().to_f64().unwrap_or(f64::INFINITY).abs();
            dev[slot] = dev[slot].max(diff);
        }
    }
    let adopted = if dev[0] <= dev[1] { BernoulliSign::Stirling } else { BernoulliSign::Printed };
    StirlingValidation { lambda: lambda as f64, terms, deviation_stirling: dev[0], deviation_printed: dev[1], adopted }
}

/// Large-radius block `P[(a, b)] = (1/d) sum_h e^{2 pi i h (b - a)/d} exp(E_{h/d}(z/w))`
/// for a fixed point with cyclic stabiliser of order `d` and weight `w`.
pub fn amodel_large_radius(d: usize, w: C64, order: usize, sign: BernoulliSign) -> Result<RMatrixSeries> {
    if w.norm() == 0.0 {
        return Err(Error::UndefinedLimit(d));
    }
    let mut coeffs = vec![DMatrix::<C64>::zeros(d, d); order + 1];
    for h in 0..d {
        let s = BigRational::new(BigInt::from(h), BigInt::from(d));
        let e = bernoulli_exponent(&s, order, sign).rescale_var(&w.inv()).exp()?;
        for a in 0..d {
            for b in 0..d {
                let phase = C64::from_polar(1.0 / d as f64, 2.0 * std::f64::consts::PI * (h as f64) * (b as f64 - a as f64) / d as f64);
                for (k, m) in coeffs.iter_mut().enumerate() {
                    m[(a, b)] += phase * e.coeff(k as i32);
                }
            }
        }
    }
    Ok(RMatrixSeries { coeffs })
}

/// Comparison of the two large-radius blocks for one fixed point.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Prop31Block {
    pub d: usize,
    pub p: [f64; 2],
    /// Root index (in the model's sorted order) carrying character label `beta`.
    pub labels: Vec<usize>,
    pub residual: f64,
    /// Residual with the raw, unnormalised Laplace integrals.
    pub raw_residual: f64,
}

/// Laplace block of `Y^d + p log Y` against the Bernoulli block with `w = p/d`.
pub fn prop31_block(d: usize, p: C64, order: usize, sign: BernoulliSign) -> Result<Prop31Block> {
    let model = Model::from_superpotential(Superpotential::large_radius(d, p))?;
    let lap = bmodel_r_laplace(&model, order)?;
    // Label roots by p^beta = (-p/d)^{1/d} e^{2 pi i beta/d}.
    let base = (-p / d as f64).powf(1.0 / d as f64);
    let mut labels = vec![usize::MAX; d];
    for (idx, pt) in model.crit.points.iter().enumerate() {
        let turn = (pt.p / base).arg() / (2.0 * std::f64::consts::PI) * d as f64;
        let beta = (turn.round() as i64).rem_euclid(d as i64) as usize;
        labels[beta] = idx;
    }
    if labels.contains(&usize::MAX) {
        return Err(Error::NumericFailure("large-radius roots do not form a cyclic orbit".into()));
    }
    let r = lap.r.permute(&labels);
    let pmat = amodel_large_radius(d, p / d as f64, order, sign)?;
    let raw = lap.r.scale_rows(&lap.prefactors).permute(&labels);
    Ok(Prop31Block { d, p: [p.re, p.im], labels, residual: r.max_diff(&pmat), raw_residual: raw.max_diff(&pmat) })
}

/// Both fixed-point blocks of a model: chart 1 is `Y^m + p log Y`, chart 2 is
/// `Y'^n - p log Y'` in the coordinate `Y' = 1/Y`.
pub fn prop31_check(m: usize, n: usize, p: C64, order: usize) -> Result<(StirlingValidation, Vec<Prop31Block>)> {
    let v = validate_stirling(10, 15);
    let blocks = vec![prop31_block(m, p, order, v.adopted)?, prop31_block(n, -p, order, v.adopted)?];
    Ok((v, blocks))
}

/// Coefficients of `x^t` (`x = 1/lambda`, `t = 1..=order`) in
/// `log Gamma(lambda + s) - (lambda + s - 1/2) log lambda + lambda - log(2 pi)/2`,
/// obtained from the closed form by applying Stirling's series at `lambda + s`
/// (Bernoulli numbers only) and re-expanding in `1/lambda`.
pub fn gamma_exponent_closed(s: &BigRational, order: usize) -> Vec<BigRational> {
    let zero = BigRational::zero();
    let mut out = vec![zero.clone(); order + 1];
    let half = BigRational::new(BigInt::one(), BigInt::from(2));
    // log(1 + s x) = sum_{j>=1} (-1)^{j+1} s^j x^j / j, needed through x^{order+1}
    let log1p: Vec<BigRational> = (0..=order + 1)
        .map(|j| if j == 0 { zero.clone() } else { s.pow(j as i32) / BigRational::from_integer(BigInt::from(j)) * if j % 2 == 1 { BigRational::one() } else { -BigRational::one() } })
        .collect();
    // (1/x + s - 1/2) log(1 + s x) - s
    for t in 1..=order {
        out[t] += &log1p[t + 1] + (s - &half) * &log1p[t];
    }
    out[0] += &log1p[1] - s;
    // sum_k B_{2k}/(2k(2k-1)) x^{2k-1} (1 + s x)^{1-2k}
    let b = bernoulli_numbers(order + 1);
    for k in 1..=order.div_ceil(2) {
        let c = &b[2 * k] / BigRational::from_integer(BigInt::from(2 * k * (2 * k - 1)));
        // (1 + s x)^{-(2k-1)} = sum_j C(-(2k-1), j) s^j x^j
        let e = 2 * k as i64 - 1;
        let mut binom = BigRational::one();
        for j in 0..=order {
            let t = (2 * k - 1) + j;
            if t > order {
                break;
            }
            out[t] += &c * &binom * s.pow(j as i32);
            binom = binom * BigRational::from_integer(BigInt::from(-e - j as i64)) / BigRational::from_integer(BigInt::from(j as i64 + 1));
        }
    }
    out
}

/// A flat direction of the deformation space, given by the Laurent monomial it moves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FlatDirection {
    /// `W -> W + t Y^l`; frame element `Y^l`.
    Shift(i32),
    /// `q_l -> e^t q_l`; frame element `q_l Y^l`.
    LogScale(i32),
}

impl FlatDirection {
    fn apply(self, sp: &Superpotential, t: f64) -> Superpotential {
        let mut out = sp.clone();
        match self {
            FlatDirection::Shift(0) => out.constant += cplx(t),
            FlatDirection::Shift(l) => out.laurent = out.laurent.add(&Laurent::monomial(l, cplx(t))),
            FlatDirection::LogScale(l) => {
                let c = sp.laurent.coeff(l) * t.exp();
                out.laurent = out.laurent.add(&Laurent::monomial(l, c - sp.laurent.coeff(l)));
            }
        }
        out
    }

    fn frame_value(self, sp: &Superpotential, y: C64) -> C64 {
        match self {
            FlatDirection::Shift(l) => y.powi(l),
            FlatDirection::LogScale(l) => sp.laurent.coeff(l) * y.powi(l),
        }
    }
}

/// `1, Y, .., Y^{m-1}, Y^{-1}, .., Y^{-(n-1)}` and the scaling of the lowest coupling.
pub fn flat_directions(sp: &Superpotential) -> Vec<FlatDirection> {
    let (lo, hi) = (sp.laurent.kmin, sp.laurent.kmax());
    let mut dirs: Vec<FlatDirection> = (0..hi).map(FlatDirection::Shift).collect();
    dirs.extend((lo + 1..0).rev().map(FlatDirection::Shift));
    if lo < 0 {
        dirs.push(FlatDirection::LogScale(lo));
    }
    dirs
}

/// Canonical data at one point of the deformation space, aligned with a base point.
struct FlatPoint {
    roots: Vec<C64>,
    u: Vec<C64>,
    sqrt_delta: Vec<C64>,
    psi: DMatrix<C64>,
    r: RMatrixSeries,
    gram: DMatrix<C64>,
    frame: DMatrix<C64>,
}

fn flat_point(sp: &Superpotential, dirs: &[FlatDirection], order: usize, base: Option<&FlatPoint>) -> Result<FlatPoint> {
    let model = Model::from_superpotential(sp.clone())?;
    let n = model.size();
    if dirs.len() != n {
        return Err(Error::InvalidModel(format!("{} flat directions for {} critical points", dirs.len(), n)));
    }
    // perm[alpha] = index in this model of the root continuing base root alpha
    let perm: Vec<usize> = match base {
        None => (0..n).collect(),
        Some(b) => {
            let mut used = vec![false; n];
            let mut perm = Vec::with_capacity(n);
            for z in &b.roots {
                let (idx, _) = model
                    .crit
                    .points
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| !used[*i])
                    .map(|(i, pt)| (i, (pt.p - z).norm()))
                    .fold((usize::MAX, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });
                used[idx] = true;
                perm.push(idx);
            }
            perm
        }
    };
    let lap = bmodel_r_laplace(&model, order)?;
    let mut r = lap.r.permute(&perm);
    let pts: Vec<_> = perm.iter().map(|&i| model.crit.points[i]).collect();
    let mut sqrt_delta: Vec<C64> = perm.iter().map(|&i| model.crit.sqrt_delta(i, SqrtDelta::Ledger)).collect();
    if let Some(b) = base {
        // keep the chart branch continuous; a flip conjugates R by the sign
        let signs: Vec<f64> = sqrt_delta.iter().zip(&b.sqrt_delta).map(|(s, t)| if (s - t).norm() <= (s + t).norm() { 1.0 } else { -1.0 }).collect();
        for (s, sg) in sqrt_delta.iter_mut().zip(&signs) {
            *s *= *sg;
        }
        for m in r.coeffs.iter_mut() {
            for a in 0..n {
                for c in 0..n {
                    m[(a, c)] *= signs[a] * signs[c];
                }
            }
        }
    }
    let frame = DMatrix::from_fn(n, n, |b, a| dirs[a].frame_value(sp, pts[b].p));
    let inv = frame.clone().try_inverse().ok_or_else(|| Error::NumericFailure("flat frame is degenerate".into()))?;
    let psi = &inv * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(sqrt_delta.clone()));
    let gram = DMatrix::from_fn(n, n, |a, c| pts.iter().enumerate().map(|(b, pt)| frame[(b, a)] * frame[(b, c)] / pt.delta).sum());
    Ok(FlatPoint { roots: pts.iter().map(|p| p.p).collect(), u: pts.iter().map(|p| p.u).collect(), sqrt_delta, psi, r, gram, frame })
}

/// Outcome of the flatness check for one direction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QdeDirection {
    pub direction: FlatDirection,
    /// Max residual per power of `z` at the requested step.
    pub by_order: Vec<f64>,
    pub residual: f64,
    pub residual_half: f64,
    /// `residual / residual_half`; the difference-quotient error shrinks like `step^2`.
    pub halving_ratio: f64,
    /// `Psi R` does not move along this direction (only `U` shifts), so the
    /// residual is pure round-off and the halving ratio carries no information.
    pub stationary: bool,
    /// `max |du/dt - T_a(p)|` between finite differences and the analytic value.
    pub du_analytic_diff: f64,
    pub metric_drift: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QdeReport {
    pub order: usize,
    pub step: f64,
    pub directions: Vec<QdeDirection>,
    pub residual: f64,
}

/// Which R-matrix multiplies `Psi` in the candidate fundamental solution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum QdeCandidate {
    Laplace,
    /// `R = id`, the negative control.
    Identity,
}

fn qde_residual_at(sp: &Superpotential, dirs: &[FlatDirection], a: usize, order: usize, h: f64, base: &FlatPoint, cand: QdeCandidate) -> Result<(Vec<f64>, f64, f64, f64)> {
    let plus = flat_point(&dirs[a].apply(sp, h), dirs, order, Some(base))?;
    let minus = flat_point(&dirs[a].apply(sp, -h), dirs, order, Some(base))?;
    let n = base.u.len();
    let pick = |p: &FlatPoint| match cand {
        QdeCandidate::Laplace => p.r.clone(),
        QdeCandidate::Identity => RMatrixSeries::identity(n, order),
    };
    let s = |p: &FlatPoint| -> Vec<DMatrix<C64>> { pick(p).coeffs.iter().map(|rk| &p.psi * rk).collect() };
    let (s0, sp_, sm) = (s(base), s(&plus), s(&minus));
    let du: Vec<C64> = (0..n).map(|i| (plus.u[i] - minus.u[i]) / (2.0 * h)).collect();
    let du_m = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(du.clone()));
    let t_vals: Vec<C64> = (0..n).map(|b| base.frame[(b, a)]).collect();
    let du_diff = du.iter().zip(&t_vals).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
    let ca = &base.psi * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(t_vals)) * base.psi.clone().try_inverse().ok_or(Error::NonconvergentNormalization)?;
    let mut by_order = Vec::with_capacity(order + 1);
    for k in 0..=order {
        let mut res = &s0[k] * &du_m - &ca * &s0[k];
        if k > 0 {
            res += (&sp_[k - 1] - &sm[k - 1]) / cplx(2.0 * h);
        }
        by_order.push(res.iter().map(|x| x.norm()).fold(0.0, f64::max));
    }
    let drift = (&plus.gram - &minus.gram).iter().map(|x| x.norm()).fold(0.0, f64::max) / (2.0 * h);
    let moved = sp_.iter().zip(&sm).flat_map(|(a, b)| (a - b).iter().map(|x| x.norm()).collect::<Vec<_>>()).fold(0.0, f64::max);
    Ok((by_order, du_diff, drift, moved))
}

/// Residual of `z d(Psi R) + Psi R dU - C_a Psi R = 0` through `z^order`, per
/// flat direction, with central differences at `step` and `step/2`.
pub fn qde_flatness_check(sp: &Superpotential, order: usize, step: f64, cand: QdeCandidate) -> Result<QdeReport> {
    let dirs = flat_directions(sp);
    let base = flat_point(sp, &dirs, order, None)?;
    let scale = base.gram.iter().map(|x| x.norm()).fold(1.0, f64::max);
    let smax = base.r.coeffs.iter().map(|rk| (&base.psi * rk).iter().map(|x| x.norm()).fold(0.0, f64::max)).fold(1.0, f64::max);
    let floor = 10.0 * f64::EPSILON * smax;
    let mut out = Vec::with_capacity(dirs.len());
    for a in 0..dirs.len() {
        let (by_order, du_diff, drift, moved) = qde_residual_at(sp, &dirs, a, order, step, &base, cand)?;
        if drift > 1e-6 * scale {
            return Err(Error::NonFlatCoordinates(drift));
        }
        let (half, _, _, _) = qde_residual_at(sp, &dirs, a, order, step / 2.0, &base, cand)?;
        let residual = by_order.iter().copied().fold(0.0, f64::max);
        let residual_half = half.iter().copied().fold(0.0, f64::max);
        let halving_ratio = residual / residual_half;
        let stationary = moved <= floor;
        out.push(QdeDirection { direction: dirs[a], by_order, residual, residual_half, halving_ratio, stationary, du_analytic_diff: du_diff, metric_drift: drift });
    }
    if cand == QdeCandidate::Laplace {
        if let Some(bad) = out.iter().find(|d| !d.stationary && !(3.5..=4.5).contains(&d.halving_ratio)) {
            return Err(Error::StepFailure(bad.halving_ratio));
        }
    }
    let residual = out.iter().map(|d| d.residual).fold(0.0, f64::max);
    Ok(QdeReport { order, step, directions: out, residual })
}

/// Diagonal ambiguity `A = R_cand^{-1} R_ref`, written as `exp(sum a_k z^k)` per entry.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Ambiguity {
    /// `exponents[alpha][k] = a_k` for `k = 1..=order` (index 0 unused).
    pub exponents: Vec<Vec<[f64; 2]>>,
    /// Largest coefficient of `A - id`.
    pub deviation: f64,
    pub off_diagonal: f64,
    pub even_part: f64,
}

/// Solve `R_ref = R_cand A`; `A` must be diagonal with odd exponent series, within `tol`.
pub fn ambiguity_normalize(cand: &RMatrixSeries, reference: &RMatrixSeries, tol: f64) -> Result<Ambiguity> {
    let order = cand.order().min(reference.order());
    let a = cand.truncate(order).inverse()?.mul(&reference.truncate(order));
    let n = a.size();
    let off_diagonal = a.coeffs.iter().flat_map(|m| (0..n).flat_map(move |i| (0..n).filter(move |&j| j != i).map(move |j| m[(i, j)].norm()))).fold(0.0, f64::max);
    if off_diagonal > tol {
        return Err(Error::AmbiguityShapeError(format!("off-diagonal entry {off_diagonal:e}")));
    }
    let mut exponents = Vec::with_capacity(n);
    let mut even_part: f64 = 0.0;
    for alpha in 0..n {
        let log = a.entry(alpha, alpha).ln()?;
        let c: Vec<C64> = (0..=order as i32).map(|k| log.coeff(k)).collect();
        for (k, ck) in c.iter().enumerate() {
            if k % 2 == 0 {
                even_part = even_part.max(ck.norm());
            }
        }
        exponents.push(c.iter().map(|x| [x.re, x.im]).collect());
    }
    if even_part > tol {
        return Err(Error::AmbiguityShapeError(format!("even exponent {even_part:e}")));
    }
    let deviation = a.max_diff(&RMatrixSeries::identity(n, order));
    Ok(Ambiguity { exponents, deviation, off_diagonal, even_part })
}

/// Character labels of the critical points near the two large-radius fixed points.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FixedPointLabels {
    /// `(chart, beta)` per critical point, chart 0 near `Y = infinity`, chart 1 near `Y = 0`.
    pub labels: Vec<(usize, usize)>,
}

/// Block-diagonal large-radius R-matrix `diag(P_1, P_2)` in the model's root order.
///
/// Chart 1 sees `Y^m + p log Y` with `p^beta = (-p/m)^{1/m} e^{2 pi i beta/m}`;
/// chart 2 sees `Y'^n - p log Y'` in `Y' = q_{-n}^{1/n}/Y`.
pub fn large_radius_reference(model: &Model, order: usize, sign: BernoulliSign) -> Result<(RMatrixSeries, FixedPointLabels)> {
    let sp = &model.sp;
    let (m, n) = (sp.laurent.kmax() as usize, (-sp.laurent.kmin) as usize);
    let p = sp.log_coeff;
    let q = sp.laurent.coeff(-(n as i32));
    let size = model.size();
    if m + n != size || n == 0 {
        return Err(Error::InvalidModel("large-radius reference needs both charts".into()));
    }
    let mut idx: Vec<usize> = (0..size).collect();
    idx.sort_by(|&a, &b| model.crit.points[b].p.norm().total_cmp(&model.crit.points[a].p.norm()));
    let base1 = (-p / m as f64).powf(1.0 / m as f64);
    let base2 = (p / n as f64).powf(1.0 / n as f64);
    let qroot = q.powf(1.0 / n as f64);
    let mut labels = vec![(usize::MAX, 0); size];
    for (rank, &i) in idx.iter().enumerate() {
        let y = model.crit.points[i].p;
        let (chart, d, ratio) = if rank < m { (0, m, y / base1) } else { (1, n, qroot / y / base2) };
        let beta = ((ratio.arg() / (2.0 * std::f64::consts::PI) * d as f64).round() as i64).rem_euclid(d as i64) as usize;
        labels[i] = (chart, beta);
    }
    let blocks = [amodel_large_radius(m, p / m as f64, order, sign)?, amodel_large_radius(n, -p / n as f64, order, sign)?];
    let mut coeffs = vec![DMatrix::<C64>::zeros(size, size); order + 1];
    for a in 0..size {
        for b in 0..size {
            let ((ca, la), (cb, lb)) = (labels[a], labels[b]);
            if ca == cb {
                for (k, mk) in coeffs.iter_mut().enumerate() {
                    mk[(a, b)] = blocks[ca].coeffs[k][(la, lb)];
                }
            }
        }
    }
    for chart in 0..2 {
        let mut seen: Vec<usize> = labels.iter().filter(|l| l.0 == chart).map(|l| l.1).collect();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != [m, n][chart] {
            return Err(Error::NumericFailure("critical points do not separate into large-radius orbits".into()));
        }
    }
    Ok((RMatrixSeries { coeffs }, FixedPointLabels { labels }))
}

/// Largest cross-chart entry of the Laplace R-matrix.
pub fn cross_chart_max(r: &RMatrixSeries, labels: &FixedPointLabels) -> f64 {
    let n = r.size();
    let mut worst: f64 = 0.0;
    for m in &r.coeffs {
        for a in 0..n {
            for b in 0..n {
                if labels.labels[a].0 != labels.labels[b].0 {
                    worst = worst.max(m[(a, b)].norm());
                }
            }
        }
    }
    worst
}

/// Ambiguity between the Laplace R-matrix and the large-radius blocks near `q -> 0`.
pub fn large_radius_ambiguity(model: &Model, order: usize, tol: f64) -> Result<(Ambiguity, f64)> {
    let sign = validate_stirling(10, 15).adopted;
    let lap = bmodel_r_laplace(model, order)?;
    let (reference, labels) = large_radius_reference(model, order, sign)?;
    let cross = cross_chart_max(&lap.r, &labels);
    Ok((ambiguity_normalize(&lap.r, &reference, tol)?, cross))
}
