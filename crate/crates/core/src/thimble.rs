//! Numerical Lefschetz thimbles and SYZ contours in the `y = log Y` plane,
//! with tanh-sinh quadrature, and the asymptotic comparison against the
//! formal Laplace series.
//!
//! A thimble is parametrised by real `t` through `W(y(t)) = u + t^2`, i.e.
//! `zeta = i t` in the chart `x = u - zeta^2`. Near the saddle the chart
//! series is used directly; beyond it the path is continued by Newton steps.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Laurent, Model, Superpotential};
use crate::rmatrix::{bmodel_r_laplace, LaplaceR, RMatrixSeries};
use crate::series::{TruncSeries1, C64};
use crate::spectral::{local_expansion, CriticalChart};

const CHART_ORDER: i32 = 28;
/// Integrand magnitude below which legs are cut off.
pub const TAIL_CUTOFF: f64 = 1e-14;

/// One traced thimble, sampled on a uniform grid in `t`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Contour {
    pub beta: usize,
    /// `(t, y)` samples for `t` in `[-T, T]`.
    pub points: Vec<(f64, [f64; 2])>,
    /// Net change of `Im y / 2 pi` from the saddle to each end.
    pub winding: [f64; 2],
    /// Smallest `|dW/dy|` seen away from the saddle; a value near zero signals
    /// a Stokes event (the path runs into another saddle).
    pub min_slope: f64,
    pub stokes_event: bool,
}

/// Continuation of one thimble through its chart series and Newton steps.
pub struct ThimblePath<'a> {
    sp: &'a Superpotential,
    f: Laurent,
    chart: CriticalChart,
    y_series: TruncSeries1<C64>,
    dy_series: TruncSeries1<C64>,
    /// Series used for `|t| <= rho`.
    rho: f64,
    /// Minimum number of predictor-corrector substeps between samples.
    substeps: u32,
}

impl<'a> ThimblePath<'a> {
    pub fn new(model: &'a Model, beta: usize) -> Result<Self> {
        let chart = local_expansion(model, beta, CHART_ORDER)?;
        let y_series = chart.y_log();
        let dy_series = y_series.derivative().truncate(CHART_ORDER - 1);
        let u = chart.u;
        let gap = model
            .crit
            .points
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != beta)
            .map(|(_, pt)| (pt.u - u).norm().sqrt())
            .fold(f64::INFINITY, f64::min);
        let rho = 0.2 * gap.min(1.0 / chart.h(1).norm().max(1e-300));
        Ok(ThimblePath { sp: &model.sp, f: model.sp.f(), chart, y_series, dy_series, rho, substeps: 1 })
    }

    /// Force at least `k` continuation substeps between consecutive samples.
    pub fn with_substeps(mut self, k: u32) -> Self {
        self.substeps = k.max(1);
        self
    }

    pub fn u(&self) -> C64 {
        self.chart.u
    }

    pub fn w(&self, y: C64) -> C64 {
        self.sp.eval_log(y)
    }

    pub fn slope(&self, y: C64) -> C64 {
        self.f.eval(y.exp())
    }

    fn series_point(&self, t: f64) -> (C64, C64) {
        let zeta = C64::new(0.0, t);
        let y = self.y_series.eval_at(&zeta);
        let dy = self.dy_series.eval_at(&zeta) * C64::new(0.0, 1.0);
        (y, dy)
    }

    /// `y - v` at the saddle side, accurate for tiny `t`.
    fn series_offset(&self, t: f64) -> C64 {
        -self.chart.s.eval_at(&C64::new(0.0, t))
    }

    /// `Y - p_a` at `y`, using the offset from the saddle when `a` is this saddle.
    fn y_minus_root(&self, y: C64, offset: C64, p: C64) -> C64 {
        if (p - self.chart.p).norm() == 0.0 {
            p * expm1(offset)
        } else {
            y.exp() - p
        }
    }

    /// Newton solve of `W(y) = u + t^2` from `guess`.
    fn correct(&self, guess: C64, t: f64) -> Option<C64> {
        let target = self.chart.u + t * t;
        let mut y = guess;
        for _ in 0..30 {
            let r = self.w(y) - target;
            let d = self.slope(y);
            if d.norm() == 0.0 {
                return None;
            }
            let step = r / d;
            y -= step;
            if step.norm() <= 1e-15 * (1.0 + y.norm()) {
                return Some(y);
            }
        }
        let r = (self.w(y) - target).norm();
        (r <= 1e-12 * (1.0 + target.norm())).then_some(y)
    }

    /// Move from `(t0, y0)` to `t1` along the path, subdividing as needed.
    fn advance(&self, y0: C64, t0: f64, t1: f64, depth: u32) -> Result<C64> {
        let d0 = self.slope(y0);
        let pred = y0 + (t1 - t0) * 2.0 * t0 / d0;
        let mid_t = 0.5 * (t0 + t1);
        let pred_mid = y0 + (mid_t - t0) * 2.0 * t0 / d0;
        let dm = self.slope(pred_mid);
        let pred2 = y0 + (t1 - t0) * 2.0 * mid_t / dm;
        let guess = if pred2.is_finite() { pred2 } else { pred };
        if let Some(y) = self.correct(guess, t1) {
            // a jump much larger than the predicted step means Newton changed sheets
            if (y - guess).norm() <= 0.1 * (guess - y0).norm().max(1e-12) || depth > 40 {
                return Ok(y);
            }
        }
        if depth > 40 {
            return Err(Error::NumericFailure(format!("thimble continuation stalled at t = {t1}")));
        }
        let ym = self.advance(y0, t0, mid_t, depth + 1)?;
        self.advance(ym, mid_t, t1, depth + 1)
    }

    /// Points `y(t)` and `dy/dt` at ascending `|t|` on one side (`sign = +-1`).
    pub fn sweep(&self, sign: f64, ts: &[f64]) -> Result<Vec<(C64, C64)>> {
        Ok(self.sweep_full(sign, ts)?.into_iter().map(|(y, dy, _)| (y, dy)).collect())
    }

    /// As [`ThimblePath::sweep`], also returning `y - v`.
    pub fn sweep_full(&self, sign: f64, ts: &[f64]) -> Result<Vec<(C64, C64, C64)>> {
        let (out, err) = self.sweep_partial(sign, ts);
        match err {
            Some(e) => Err(e),
            None => Ok(out),
        }
    }

    /// Samples up to the first continuation failure, and that failure.
    fn sweep_partial(&self, sign: f64, ts: &[f64]) -> (Vec<(C64, C64, C64)>, Option<Error>) {
        let mut out = Vec::with_capacity(ts.len());
        let mut last: Option<(f64, C64)> = None;
        for &tau in ts {
            let t = sign * tau;
            if tau <= self.rho {
                let (y, dy) = self.series_point(t);
                out.push((y, dy, self.series_offset(t)));
                continue;
            }
            let (t0, y0) = match last {
                Some(v) => v,
                None => {
                    let t0 = sign * self.rho;
                    (t0, self.series_point(t0).0)
                }
            };
            let mut y = y0;
            for j in 0..self.substeps {
                let a = t0 + (t - t0) * j as f64 / self.substeps as f64;
                let b = t0 + (t - t0) * (j + 1) as f64 / self.substeps as f64;
                match self.advance(y, a, b, 0) {
                    Ok(v) => y = v,
                    Err(e) => return (out, Some(e)),
                }
            }
            last = Some((t, y));
            out.push((y, 2.0 * t / self.slope(y), y - self.chart.v));
        }
        (out, None)
    }
}

/// `e^d - 1` without cancellation for small `d`.
fn expm1(d: C64) -> C64 {
    let half = (0.5 * d.im).sin();
    C64::new(d.re.exp_m1() * d.im.cos() - 2.0 * half * half, d.re.exp() * d.im.sin())
}

/// Trace the thimble from saddle `beta` until `W - u` reaches `length`. A path that
/// runs into another saddle is cut there and flagged as a Stokes event.
pub fn trace_thimble(model: &Model, beta: usize, length: f64, samples: usize) -> Result<Contour> {
    let path = ThimblePath::new(model, beta)?;
    let tmax = length.sqrt();
    let mut ts: Vec<f64> = (0..=samples).map(|k| tmax * k as f64 / samples as f64).collect();
    let u = path.u();
    let others: Vec<C64> = model.crit.points.iter().enumerate().filter(|(i, _)| *i != beta).map(|(_, p)| p.p).collect();
    // saddles on the level ray u + [0, length] are sampled exactly
    for pt in &model.crit.points {
        let d = pt.u - u;
        if d.re > 0.0 && d.re <= length && d.im.abs() <= 1e-9 * (1.0 + d.re) {
            ts.push(d.re.sqrt());
        }
    }
    ts.sort_by(f64::total_cmp);
    let mut points = Vec::new();
    let mut winding = [0.0; 2];
    let mut min_slope = f64::INFINITY;
    let mut stokes_event = false;
    for (side, sign) in [-1.0, 1.0].into_iter().enumerate() {
        let (ys, err) = path.sweep_partial(sign, &ts);
        stokes_event |= err.is_some();
        for (k, (y, _, _)) in ys.iter().enumerate() {
            if ts[k] > path.rho {
                // |dW/dy| / t = 2/|dy/dt| stays bounded below unless a saddle is near
                min_slope = min_slope.min(path.slope(*y).norm() / ts[k]);
            }
            stokes_event |= others.iter().any(|p| (y.exp() - p).norm() < 1e-4 * p.norm());
            points.push((sign * ts[k], [y.re, y.im]));
        }
        let end = ys.last().map(|v| v.0).unwrap_or(path.chart.v);
        winding[side] = (end.im - path.chart.v.im) / (2.0 * std::f64::consts::PI);
    }
    points.sort_by(|a, b| a.0.total_cmp(&b.0));
    points.dedup_by(|a, b| a.0 == b.0);
    stokes_event |= min_slope < 1e-6;
    Ok(Contour { beta, points, winding, min_slope, stokes_event })
}

/// Tanh-sinh nodes and weights on `[0, len]`, step `h`.
fn tanh_sinh(len: f64, h: f64) -> Vec<(f64, f64)> {
    let half_pi = std::f64::consts::FRAC_PI_2;
    let mut out = Vec::new();
    let kmax = (4.0 / h).ceil() as i64;
    for k in -kmax..=kmax {
        let s = h * k as f64;
        let e = (2.0 * half_pi * s.sinh()).exp();
        // x + 1 = 2 e / (1 + e)
        let x = if e.is_finite() { len * e / (1.0 + e) } else { len };
        let ch = (half_pi * s.sinh()).cosh();
        let w = len * 0.5 * h * half_pi * s.cosh() / (ch * ch);
        if w > 0.0 && x > 0.0 && x < len {
            out.push((x, w));
        }
    }
    out
}

/// Adaptive tanh-sinh: halve the step until two levels agree to `rel` (or `abs`).
fn integrate_adaptive(len: f64, rel: f64, mut eval: impl FnMut(&[f64]) -> Result<Vec<C64>>) -> Result<(C64, f64)> {
    let mut h = 0.25;
    let mut prev: Option<C64> = None;
    for _ in 0..9 {
        let nodes = tanh_sinh(len, h);
        let ts: Vec<f64> = nodes.iter().map(|n| n.0).collect();
        let vals = eval(&ts)?;
        let sum: C64 = nodes.iter().zip(&vals).map(|(n, v)| v * n.1).sum();
        if let Some(p) = prev {
            let err = (sum - p).norm();
            if err <= rel * sum.norm().max(1e-300) || err < 1e-300 {
                return Ok((sum, err));
            }
        }
        prev = Some(sum);
        h *= 0.5;
    }
    let p = prev.unwrap_or_default();
    Ok((p, f64::NAN))
}

/// Forms integrated against `e^{(W - u_beta)/z}` over a thimble.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Integrand {
    /// `dy`.
    Dy,
    /// `theta_a = dY/(Y - p_a)^2`, integrated by parts to `(1/z) dW/(Y - p_a)`
    /// (the Hadamard finite part when `a = beta`).
    Theta(usize),
    /// `y dW`.
    YdW,
}

/// `int_{gamma_beta} e^{(W - u_beta)/z} form` for real `z < 0`.
pub fn thimble_integral(model: &Model, beta: usize, z: f64, form: Integrand) -> Result<C64> {
    thimble_integral_refined(model, beta, z, form, 1)
}

/// [`thimble_integral`] with at least `substeps` continuation steps between nodes.
pub fn thimble_integral_refined(model: &Model, beta: usize, z: f64, form: Integrand, substeps: u32) -> Result<C64> {
    if z >= 0.0 {
        return Err(Error::InvalidModel(format!("thimble integrals need z < 0, got {z}")));
    }
    let path = ThimblePath::new(model, beta)?.with_substeps(substeps);
    // e^{t^2/z} < TAIL_CUTOFF beyond tmax
    let tmax = (-z * (1.0 / TAIL_CUTOFF).ln()).sqrt() * 1.05;
    let point = |(y, dy, off): (C64, C64, C64), t: f64| -> C64 {
        let e = (t * t / z).exp();
        match form {
            Integrand::Dy => dy * e,
            Integrand::Theta(a) => e * 2.0 * t / path.y_minus_root(y, off, model.crit.points[a].p) / z,
            Integrand::YdW => e * 2.0 * t * y,
        }
    };
    let (val, err) = integrate_adaptive(tmax, 1e-13, |ts| {
        let plus = path.sweep_full(1.0, ts)?;
        let minus = path.sweep_full(-1.0, ts)?;
        Ok(ts.iter().zip(plus.into_iter().zip(minus)).map(|(&t, (a, b))| point(a, t) + point(b, -t)).collect())
    })?;
    if !err.is_finite() || err > 1e-10 * val.norm().max(1e-300) {
        return Err(Error::TailError(err));
    }
    // the integrand at the cutoff must be negligible
    let tail = (point(path.sweep_full(1.0, &[tmax])?[0], tmax).norm() + point(path.sweep_full(-1.0, &[tmax])?[0], -tmax).norm()) * tmax;
    if tail > 1e-12 * val.norm().max(1e-300) {
        return Err(Error::TailError(tail / val.norm()));
    }
    Ok(val)
}

/// `sqrt(-2 pi z) int_{gamma_b} e^{(W - u_b)/z} theta_a / (i sqrt(2) pi c_a)`, with
/// `c_a` the Laplace normalisation of row `a`; asymptotic to the normalised `R[(a, b)]`.
pub fn thimble_r_matrix(model: &Model, lap: &LaplaceR, z: f64) -> Result<DMatrix<C64>> {
    let n = model.size();
    let pref = (-2.0 * std::f64::consts::PI * z).sqrt();
    let scale = C64::new(0.0, 2f64.sqrt() * std::f64::consts::PI);
    let mut out = DMatrix::zeros(n, n);
    for b in 0..n {
        for a in 0..n {
            let v = thimble_integral(model, b, z, Integrand::Theta(a))?;
            out[(a, b)] = v * pref / (scale * lap.prefactors[a]);
        }
    }
    Ok(out)
}

/// Least-squares slope of `log err` against `log |z|`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AsymptoticFit {
    pub order: usize,
    pub zs: Vec<f64>,
    pub errors: Vec<f64>,
    pub slope: f64,
}

/// Fit the decay of `errors` (one per sample `z`, geometric progression) in `|z|`.
pub fn asymptotic_match(order: usize, zs: &[f64], errors: &[f64]) -> Result<AsymptoticFit> {
    if zs.len() < 3 || zs.len() != errors.len() {
        return Err(Error::MatchFailure("need at least three samples".into()));
    }
    let mut idx: Vec<usize> = (0..zs.len()).collect();
    idx.sort_by(|&a, &b| zs[a].abs().total_cmp(&zs[b].abs()));
    if idx.windows(2).any(|w| errors[w[0]] > errors[w[1]]) {
        return Err(Error::MatchFailure(format!("error sequence is not monotone: {errors:?}")));
    }
    let xs: Vec<f64> = zs.iter().map(|z| z.abs().ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.max(1e-300).ln()).collect();
    let k = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / k, ys.iter().sum::<f64>() / k);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    Ok(AsymptoticFit { order, zs: zs.to_vec(), errors: errors.to_vec(), slope: sxy / sxx })
}

fn eval_truncated(r: &RMatrixSeries, order: usize, z: f64) -> DMatrix<C64> {
    let n = r.size();
    let mut acc = DMatrix::zeros(n, n);
    for k in (0..=order.min(r.order())).rev() {
        acc = acc * C64::new(z, 0.0) + &r.coeffs[k];
    }
    acc
}

/// Numerical thimble R-matrices at the sample points together with the Laplace series.
pub struct ThimbleSamples {
    pub zs: Vec<f64>,
    pub numeric: Vec<DMatrix<C64>>,
    pub series: RMatrixSeries,
}

pub fn thimble_samples(model: &Model, zs: &[f64], order: usize) -> Result<ThimbleSamples> {
    let lap = bmodel_r_laplace(model, order)?;
    let numeric = zs.iter().map(|&z| thimble_r_matrix(model, &lap, z)).collect::<Result<Vec<_>>>()?;
    Ok(ThimbleSamples { zs: zs.to_vec(), numeric, series: lap.r })
}

impl ThimbleSamples {
    /// Error of the order-`k` truncation, maximised over entries, per sample.
    pub fn errors(&self, k: usize) -> Vec<f64> {
        self.zs
            .iter()
            .zip(&self.numeric)
            .map(|(&z, num)| (num - eval_truncated(&self.series, k, z)).iter().map(|x| x.norm()).fold(0.0, f64::max))
            .collect()
    }

    pub fn fit(&self, k: usize) -> Result<AsymptoticFit> {
        asymptotic_match(k, &self.zs, &self.errors(k))
    }

    /// Same fit with `[z^1]` deliberately perturbed, as a detector check.
    pub fn fit_perturbed(&self, k: usize, delta: f64) -> Result<AsymptoticFit> {
        let mut s = self.series.clone();
        for x in s.coeffs[1].iter_mut() {
            *x += delta;
        }
        let pert = ThimbleSamples { zs: self.zs.clone(), numeric: self.numeric.clone(), series: s };
        pert.fit(k)
    }
}

/// Oscillatory-integral form of the S-matrix entry: `-z int_{gamma_b} e^{(W - u_b)/z} dxi_{a,0}/sqrt(-2)`
/// against `-z 2 sqrt(pi)/(sqrt(-2) sqrt(-z)) R[(a, b)](z)`, both without `e^{u_b/z}`.
pub fn s_entry(model: &Model, a: usize, b: usize, z: f64) -> Result<C64> {
    let pt = model.crit.points[a];
    let h1 = model.crit.h1(a);
    // dxi_{a,0} = d(-i h_1 p/(Y - p)) = i h_1 p theta_a
    let theta = thimble_integral(model, b, z, Integrand::Theta(a))?;
    let dxi = C64::new(0.0, 1.0) * h1 * pt.p * theta;
    Ok(-z * dxi / C64::new(0.0, 2f64.sqrt()))
}

pub fn s_entry_prediction(r: &RMatrixSeries, order: usize, a: usize, b: usize, z: f64) -> C64 {
    let sqrt_pi = std::f64::consts::PI.sqrt();
    let c = -z * 2.0 * sqrt_pi / (C64::new(0.0, 2f64.sqrt()) * (-z).sqrt());
    c * eval_truncated(r, order, z)[(a, b)]
}

/// Line-bundle data `O(l1 p1 + l2 p2)` indexing an SYZ contour.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KFraming {
    pub l1: i64,
    pub l2: i64,
}

impl KFraming {
    pub fn new(l1: i64, l2: i64) -> Result<Self> {
        if l1 + l2 <= 0 {
            return Err(Error::InvalidModel(format!("l1 + l2 = {} must be positive", l1 + l2)));
        }
        Ok(KFraming { l1, l2 })
    }

    /// Imaginary heights `2 pi (-l1/n)` and `2 pi (l2/m)` of the two horizontal legs.
    pub fn heights(&self, m: usize, n: usize) -> (f64, f64) {
        let tau = 2.0 * std::f64::consts::PI;
        (tau * (-(self.l1 as f64)) / n as f64, tau * self.l2 as f64 / m as f64)
    }
}

/// Forms integrated against `e^{W/z}` over an SYZ contour.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SyzForm {
    Dy,
    YdW,
}

/// `int_{SYZ(L)} e^{(W - shift)/z} form` over the three legs
/// `(-inf + i A -> i A)`, `(i A -> i B)`, `(i B -> +inf + i B)`.
pub fn syz_integral(model: &Model, framing: KFraming, z: f64, form: SyzForm, shift: C64) -> Result<C64> {
    if z >= 0.0 {
        return Err(Error::InvalidModel(format!("SYZ integrals need z < 0, got {z}")));
    }
    let sp = &model.sp;
    let (m, n) = (sp.laurent.kmax() as usize, (-sp.laurent.kmin).max(1) as usize);
    let (lo, hi) = framing.heights(m, n);
    let f = sp.f();
    let integrand = |y: C64, dy: C64| -> C64 {
        let e = ((sp.eval_log(y) - shift) / z).exp();
        match form {
            SyzForm::Dy => e * dy,
            SyzForm::YdW => e * y * f.eval(y.exp()) * dy,
        }
    };
    // leg length where the integrand falls below the cutoff relative to the saddle scale
    let reach = |im: f64, dir: f64| -> Result<f64> {
        let base = integrand(C64::new(0.0, im), C64::new(1.0, 0.0)).norm().max(1.0);
        let mut x: f64 = 0.5;
        while x < 200.0 {
            let v = integrand(C64::new(dir * x, im), C64::new(1.0, 0.0)).norm();
            if v < TAIL_CUTOFF * base && v.is_finite() {
                return Ok(x);
            }
            x *= 1.25;
        }
        Err(Error::TailError(integrand(C64::new(dir * x, im), C64::new(1.0, 0.0)).norm()))
    };
    let l_left = reach(lo, -1.0)?;
    let l_right = reach(hi, 1.0)?;
    let leg = |len: f64, map: &dyn Fn(f64) -> (C64, C64)| -> Result<C64> {
        let (v, err) = integrate_adaptive(len, 1e-13, |ts| Ok(ts.iter().map(|&t| {
            let (y, dy) = map(t);
            integrand(y, dy)
        }).collect()))?;
        if !err.is_finite() {
            return Err(Error::TailError(f64::NAN));
        }
        Ok(v)
    };
    let one = C64::new(1.0, 0.0);
    // left leg runs from -inf to 0 at height lo: y = -(L - t) + i lo
    let left = leg(l_left, &|t| (C64::new(t - l_left, lo), one))?;
    let up = leg(hi - lo, &|t| (C64::new(0.0, lo + t), C64::new(0.0, 1.0)))?;
    let right = leg(l_right, &|t| (C64::new(t, hi), one))?;
    Ok(left + up + right)
}

/// `-z int e^{W/z} dy` and `int e^{W/z} y dW` over one SYZ contour.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IbpCheck {
    pub l1: i64,
    pub l2: i64,
    pub z: f64,
    pub lhs: [f64; 2],
    pub rhs: [f64; 2],
    pub relative: f64,
}

pub fn ibp_check(model: &Model, framing: KFraming, z: f64) -> Result<IbpCheck> {
    // a common shift keeps e^{W/z} in range; it multiplies both sides equally
    let shift = model.crit.points.iter().map(|p| p.u).fold(C64::new(f64::INFINITY, 0.0), |a, b| if b.re < a.re { b } else { a });
    let dy = syz_integral(model, framing, z, SyzForm::Dy, shift)?;
    let ydw = syz_integral(model, framing, z, SyzForm::YdW, shift)?;
    let lhs = -z * dy;
    let relative = (lhs - ydw).norm() / lhs.norm().max(ydw.norm());
    Ok(IbpCheck { l1: framing.l1, l2: framing.l2, z, lhs: [lhs.re, lhs.im], rhs: [ydw.re, ydw.im], relative })
}

/// Least-squares coefficients `c_b` in `SYZ(L) = sum_b c_b gamma_b`, from `dy` integrals
/// at several `z`; reported with the residual, not asserted.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Decomposition {
    pub coefficients: Vec<[f64; 2]>,
    pub residual: f64,
}

pub fn syz_decomposition(model: &Model, framing: KFraming, zs: &[f64]) -> Result<Decomposition> {
    let n = model.size();
    let shift = model.crit.points.iter().map(|p| p.u).fold(C64::new(f64::INFINITY, 0.0), |a, b| if b.re < a.re { b } else { a });
    let mut rows = Vec::new();
    let mut rhs = Vec::new();
    for &z in zs {
        let s = syz_integral(model, framing, z, SyzForm::Dy, shift)?;
        let mut row = Vec::with_capacity(n);
        for b in 0..n {
            let t = thimble_integral(model, b, z, Integrand::Dy)?;
            row.push(t * ((model.crit.points[b].u - shift) / z).exp());
        }
        let scale = row.iter().map(|x| x.norm()).fold(s.norm(), f64::max);
        rows.push(row.into_iter().map(|x| x / scale).collect::<Vec<_>>());
        rhs.push(s / scale);
    }
    let a = DMatrix::from_fn(rows.len(), n, |i, j| rows[i][j]);
    let b = DVector::from_vec(rhs);
    let svd = a.clone().svd(true, true);
    let c = svd.solve(&b, 1e-14).map_err(|e| Error::NumericFailure(e.to_string()))?;
    let residual = (&a * &c - &b).norm();
    Ok(Decomposition { coefficients: c.iter().map(|x| [x.re, x.im]).collect(), residual })
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelParams;
    use proptest::prelude::*;

    const ZS: [f64; 3] = [-0.2, -0.1, -0.05];

    fn model11() -> Model {
        // p = -1/2 keeps the two thimbles apart (p = 0 is a Stokes configuration)
        let mut params = ModelParams::simple(1, 1);
        params.w_pos = vec![C64::new(-0.5, 0.0)];
        Model::new(params).unwrap()
    }

    fn model21() -> Model {
        Model::new(ModelParams {
            m: 2,
            n: 1,
            w_pos: vec![C64::new(0.3, 0.1), C64::new(-0.2, 0.05)],
            w_neg: vec![C64::new(0.1, -0.3)],
            q_pos: vec![C64::new(0.4, 0.2)],
            q_neg: vec![C64::new(1.1, 0.3)],
        })
        .unwrap()
    }

    #[test]
    fn gaussian_control() {
        for z in ZS {
            let tmax = (-z * (1.0 / TAIL_CUTOFF).ln()).sqrt() * 1.05;
            let (v, _) = integrate_adaptive(tmax, 1e-13, |ts| Ok(ts.iter().map(|t| C64::new(2.0 * (t * t / z).exp(), 0.0)).collect())).unwrap();
            let exact = (-std::f64::consts::PI * z).sqrt();
            assert!((v.re - exact).abs() < 1e-10 * exact, "{v} vs {exact}");
        }
    }

    #[test]
    fn large_radius_thimble_is_a_ray() {
        let model = Model::from_superpotential(Superpotential::large_radius(3, C64::new(-0.6, 0.0))).unwrap();
        for beta in 0..3 {
            let c = trace_thimble(&model, beta, 6.0, 200).unwrap();
            assert!(!c.stokes_event);
            let v = model.crit.points[beta].p.ln();
            let off = c.points.iter().map(|(_, y)| (y[1] - v.im).abs()).fold(0.0, f64::max);
            assert!(off < 1e-8, "beta {beta}: {off}");
            assert_eq!(c.winding, [0.0, 0.0]);
        }
    }

    #[test]
    fn level_increases_along_trace() {
        let model = model21();
        for beta in 0..model.size() {
            let c = trace_thimble(&model, beta, 5.0, 100).unwrap();
            let u = model.crit.points[beta].u;
            let levels: Vec<C64> = c.points.iter().map(|(_, y)| model.sp.eval_log(C64::new(y[0], y[1])) - u).collect();
            for (&(t, _), l) in c.points.iter().zip(&levels) {
                assert!(l.im.abs() < 1e-8 && (l.re - t * t).abs() < 1e-8, "t = {t}: {l}");
            }
        }
    }

    #[test]
    fn simple_model_thimble_through_one() {
        let model = Model::new(ModelParams::simple(1, 1)).unwrap();
        let beta = model.crit.points.iter().position(|p| (p.p - 1.0).norm() < 1e-12).unwrap();
        let c = trace_thimble(&model, beta, 3.0, 60).unwrap();
        assert!(!c.stokes_event);
        assert!(c.points.iter().any(|(t, y)| *t == 0.0 && y[0].abs() < 1e-14 && y[1].abs() < 1e-14));
        for (_, y) in &c.points {
            let w = model.sp.eval_log(C64::new(y[0], y[1]));
            assert!(w.re - 2.0 >= -1e-12 && w.im.abs() < 1e-8);
        }
        // the other thimble climbs into this saddle at W - u = 4
        let other = 1 - beta;
        assert!(trace_thimble(&model, other, 6.0, 60).unwrap().stokes_event);
    }

    fn check_slopes(model: &Model) {
        let s = thimble_samples(model, &ZS, 6).unwrap();
        let mut prev = 0.0;
        for k in 1..=4 {
            let fit = s.fit(k).unwrap();
            assert!(fit.slope > prev, "slopes not increasing at K = {k}");
            if k <= 3 {
                assert!(fit.slope >= k as f64 + 0.7, "K = {k}: slope {}", fit.slope);
            }
            prev = fit.slope;
        }
        let pert = s.fit_perturbed(2, 1e-2).unwrap();
        assert!((pert.slope - 1.0).abs() < 0.2, "detector slope {}", pert.slope);
    }

    #[test]
    fn thimble_r_matches_laplace_series() {
        check_slopes(&model11());
        check_slopes(&model21());
    }

    #[test]
    fn s_entries_follow_formal_prediction() {
        let model = model21();
        let lap = bmodel_r_laplace(&model, 4).unwrap();
        for a in 0..model.size() {
            for b in 0..model.size() {
                let errs: Vec<f64> = ZS
                    .iter()
                    .map(|&z| (s_entry(&model, a, b, z).unwrap() - s_entry_prediction(&lap.r, 2, a, b, z)).norm() / z.abs().sqrt())
                    .collect();
                let fit = asymptotic_match(2, &ZS, &errs).unwrap();
                assert!(fit.slope >= 2.7, "({a}, {b}): {}", fit.slope);
            }
        }
    }

    #[test]
    fn refinement_invariance() {
        let model = model21();
        for beta in 0..model.size() {
            for form in [Integrand::Dy, Integrand::Theta(0), Integrand::YdW] {
                let a = thimble_integral(&model, beta, -0.1, form).unwrap();
                let b = thimble_integral_refined(&model, beta, -0.1, form, 4).unwrap();
                assert!((a - b).norm() < 1e-10 * a.norm(), "{beta} {form:?}: {a} {b}");
            }
        }
    }

    #[test]
    fn syz_integration_by_parts() {
        for model in [model11(), model21()] {
            for (l1, l2) in [(0, 1), (1, 0), (1, 1)] {
                let chk = ibp_check(&model, KFraming::new(l1, l2).unwrap(), -0.1).unwrap();
                assert!(chk.relative < 1e-8, "({l1}, {l2}): {}", chk.relative);
            }
        }
    }

    #[test]
    fn syz_decomposition_is_reported() {
        let d = syz_decomposition(&model11(), KFraming::new(0, 1).unwrap(), &[-0.3, -0.2, -0.15, -0.1]).unwrap();
        assert_eq!(d.coefficients.len(), 2);
        assert!(d.residual.is_finite());
    }

    #[test]
    fn rejects_bad_input() {
        assert!(thimble_integral(&model11(), 0, 0.1, Integrand::Dy).is_err());
        assert!(KFraming::new(1, -1).is_err());
        assert!(matches!(asymptotic_match(1, &ZS, &[1e-3, 1e-2, 1e-4]), Err(Error::MatchFailure(_))));
        let heights = KFraming::new(1, 2).unwrap().heights(2, 3);
        let tau = 2.0 * std::f64::consts::PI;
        assert!((heights.0 + tau / 3.0).abs() < 1e-15 && (heights.1 - tau).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn power_law_slope_is_recovered(c in 1e-3f64..1e3, k in 0.5f64..6.0) {
            let errs: Vec<f64> = ZS.iter().map(|z| c * z.abs().powf(k)).collect();
            let fit = asymptotic_match(0, &ZS, &errs).unwrap();
            prop_assert!((fit.slope - k).abs() < 1e-9);
        }
    }
}
