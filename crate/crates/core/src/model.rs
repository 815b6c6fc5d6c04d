//! The Landau-Ginzburg mirror of `P(m, n)`: superpotential, critical data,
//! residual pairing, canonical basis and coordinate changes.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::C64;

/// Relative separation below which two critical points count as colliding.
pub const ROOT_SEPARATION: f64 = 1e-8;

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Input data for one `P(m, n)` instance.
///
/// `w_pos[l-1]` is the weight of `Y^l` (l = 1..m), `w_neg[l-1]` that of
/// `Y^{-l}` (l = 1..n). `q_pos[l-1]` couples `Y^l` (l = 1..m-1) and
/// `q_neg[l-1]` couples `Y^{-l}` (l = 1..n).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub m: usize,
    pub n: usize,
    #[serde(default)]
    pub w_pos: Vec<C64>,
    #[serde(default)]
    pub w_neg: Vec<C64>,
    #[serde(default)]
    pub q_pos: Vec<C64>,
    #[serde(default)]
    pub q_neg: Vec<C64>,
}

impl ModelParams {
    /// Zero weights, zero positive couplings and `q_{-n} = 1`.
    pub fn simple(m: usize, n: usize) -> Self {
        let mut q_neg = vec![C64::new(0.0, 0.0); n];
        if n > 0 {
            q_neg[n - 1] = C64::new(1.0, 0.0);
        }
        ModelParams {
            m,
            n,
            w_pos: vec![C64::new(0.0, 0.0); m],
            w_neg: vec![C64::new(0.0, 0.0); n],
            q_pos: vec![C64::new(0.0, 0.0); m.saturating_sub(1)],
            q_neg,
        }
    }

    /// Pads missing entries with zeros and checks the invariants.
    pub fn validated(mut self) -> Result<Self> {
        if self.m == 0 || self.n == 0 {
            return Err(Error::InvalidModel("m and n must be positive".into()));
        }
        if gcd(self.m, self.n) != 1 {
            return Err(Error::InvalidModel(format!("gcd({}, {}) != 1", self.m, self.n)));
        }
        let fix = |v: &mut Vec<C64>, len: usize, name: &str| -> Result<()> {
            if v.len() > len {
                return Err(Error::InvalidModel(format!("{name} has {} entries, expected {len}", v.len())));
            }
            v.resize(len, C64::new(0.0, 0.0));
            Ok(())
        };
        fix(&mut self.w_pos, self.m, "w_pos")?;
        fix(&mut self.w_neg, self.n, "w_neg")?;
        fix(&mut self.q_pos, self.m - 1, "q_pos")?;
        fix(&mut self.q_neg, self.n, "q_neg")?;
        let all = self.w_pos.iter().chain(&self.w_neg).chain(&self.q_pos).chain(&self.q_neg);
        if all.clone().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::NumericFailure("non-finite model parameter".into()));
        }
        Ok(self)
    }

    /// `p = sum l w_l - sum l w_{-l}`.
    pub fn p_tilde(&self) -> C64 {
        let pos: C64 = self.w_pos.iter().enumerate().map(|(i, w)| w * (i as f64 + 1.0)).sum();
        let neg: C64 = self.w_neg.iter().enumerate().map(|(i, w)| w * (i as f64 + 1.0)).sum();
        pos - neg
    }

    pub fn superpotential(&self) -> Superpotential {
        let (m, n) = (self.m as i32, self.n as i32);
        let mut coeffs = vec![C64::new(0.0, 0.0); (m + n + 1) as usize];
        coeffs[(m + n) as usize] = C64::new(1.0, 0.0);
        for (i, q) in self.q_pos.iter().enumerate() {
            coeffs[(n + i as i32 + 1) as usize] = *q;
        }
        for (i, q) in self.q_neg.iter().enumerate() {
            coeffs[(n - i as i32 - 1) as usize] = *q;
        }
        // w_l log(q_l Y^l) = l w_l log Y + w_l log q_l on the declared branch;
        // terms with q_l = 0 carry no constant.
        let mut constant = C64::new(0.0, 0.0);
        for (w, q) in self.w_pos.iter().zip(&self.q_pos).chain(self.w_neg.iter().zip(&self.q_neg)) {
            if q.norm() > 0.0 && w.norm() > 0.0 {
                constant += w * q.ln();
            }
        }
        Superpotential { laurent: Laurent::new(-n, coeffs), log_coeff: self.p_tilde(), constant }
    }
}

/// Finite Laurent polynomial `sum_{k=kmin} c_k Y^k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Laurent {
    pub kmin: i32,
    pub coeffs: Vec<C64>,
}

impl Laurent {
    pub fn new(kmin: i32, coeffs: Vec<C64>) -> Self {
        Laurent { kmin, coeffs }
    }

    pub fn monomial(k: i32, c: C64) -> Self {
        Laurent { kmin: k, coeffs: vec![c] }
    }

    /// Ordinary polynomial from ascending coefficients.
    pub fn poly(coeffs: Vec<C64>) -> Self {
        Laurent { kmin: 0, coeffs }
    }

    pub fn kmax(&self) -> i32 {
        self.kmin + self.coeffs.len() as i32 - 1
    }

    pub fn coeff(&self, k: i32) -> C64 {
        if k < self.kmin || k > self.kmax() {
            C64::new(0.0, 0.0)
        } else {
            self.coeffs[(k - self.kmin) as usize]
        }
    }

    pub fn eval(&self, y: C64) -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        for c in self.coeffs.iter().rev() {
            acc = acc * y + c;
        }
        acc * y.powi(self.kmin)
    }

    /// `Y d/dY`.
    pub fn y_derivative(&self) -> Self {
        let coeffs = self.coeffs.iter().enumerate().map(|(i, c)| c * (self.kmin + i as i32) as f64).collect();
        Laurent::new(self.kmin, coeffs)
    }

    /// `d/dY`.
    pub fn derivative(&self) -> Self {
        let coeffs = self.coeffs.iter().enumerate().map(|(i, c)| c * (self.kmin + i as i32) as f64).collect();
        Laurent::new(self.kmin - 1, coeffs)
    }

    pub fn add(&self, other: &Self) -> Self {
        let lo = self.kmin.min(other.kmin);
        let hi = self.kmax().max(other.kmax());
        Laurent::new(lo, (lo..=hi).map(|k| self.coeff(k) + other.coeff(k)).collect())
    }

    pub fn mul(&self, other: &Self) -> Self {
        let mut out = vec![C64::new(0.0, 0.0); self.coeffs.len() + other.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in other.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Laurent::new(self.kmin + other.kmin, out)
    }

    pub fn scale(&self, s: C64) -> Self {
        Laurent::new(self.kmin, self.coeffs.iter().map(|c| c * s).collect())
    }
}

/// `W(Y) = L(Y) + c log Y + const` with the principal branch of `log`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Superpotential {
    pub laurent: Laurent,
    pub log_coeff: C64,
    pub constant: C64,
}

impl Superpotential {
    /// `Y^m + p log Y`, the large-radius limit model.
    pub fn large_radius(m: usize, p: C64) -> Self {
        let mut coeffs = vec![C64::new(0.0, 0.0); m + 1];
        coeffs[m] = C64::new(1.0, 0.0);
        Superpotential { laurent: Laurent::poly(coeffs), log_coeff: p, constant: C64::new(0.0, 0.0) }
    }

    pub fn eval(&self, y: C64) -> Result<C64> {
        if y.norm() == 0.0 {
            return Err(Error::PoleAtOrigin);
        }
        Ok(self.laurent.eval(y) + self.log_coeff * y.ln() + self.constant)
    }

    /// Value with `log Y` replaced by a caller-chosen logarithm `y`.
    pub fn eval_log(&self, y: C64) -> C64 {
        self.laurent.eval(y.exp()) + self.log_coeff * y + self.constant
    }

    /// `f = dW/dy = Y dW/dY`, a Laurent polynomial.
    pub fn f(&self) -> Laurent {
        self.laurent.y_derivative().add(&Laurent::monomial(0, self.log_coeff))
    }

    /// `dW/dY`.
    pub fn dw(&self) -> Laurent {
        self.laurent.derivative().add(&Laurent::monomial(-1, self.log_coeff))
    }

    /// Coefficients of `P(Y) = Y^{-kmin} f(Y)` in ascending order.
    pub fn critical_polynomial(&self) -> Vec<C64> {
        let f = self.f();
        let mut c = f.coeffs.clone();
        while c.len() > 1 && c.last().is_some_and(|x| x.norm() == 0.0) {
            c.pop();
        }
        let shift = f.kmin.min(0);
        if shift < 0 {
            // P(Y) = Y^{-shift} f(Y); coefficients already start at Y^{kmin}.
            c
        } else {
            let mut v = vec![C64::new(0.0, 0.0); f.kmin as usize];
            v.extend(c);
            v
        }
    }

    pub fn critical_set(&self) -> Result<CriticalSet> {
        let poly = self.critical_polynomial();
        let roots = poly_roots(&poly)?;
        let f = self.f();
        let fp = f.derivative();
        let mut pts = Vec::with_capacity(roots.len());
        for p in roots {
            if p.norm() == 0.0 {
                return Err(Error::PoleAtOrigin);
            }
            let u = self.eval(p)?;
            let delta = p * fp.eval(p);
            pts.push(CriticalPoint { p, u, delta });
        }
        let cs = CriticalSet { points: pts, lead: *poly.last().unwrap(), shift: -f.kmin.min(0) };
        Ok(cs)
    }
}

fn poly_eval(c: &[C64], x: C64) -> (C64, C64) {
    let mut v = C64::new(0.0, 0.0);
    let mut d = C64::new(0.0, 0.0);
    for a in c.iter().rev() {
        d = d * x + v;
        v = v * x + a;
    }
    (v, d)
}

fn sort_key(z: C64) -> (f64, f64) {
    let scale = z.norm().max(f64::MIN_POSITIVE);
    let im = if z.im.abs() < 1e-12 * scale { 0.0 } else { z.im };
    (im.atan2(z.re), z.norm())
}

/// Roots of `sum c_k Y^k` via companion-matrix eigenvalues plus a Newton step,
/// sorted by argument and then modulus.
pub fn poly_roots(c: &[C64]) -> Result<Vec<C64>> {
    let deg = c.len() - 1;
    let lead = c[deg];
    if lead.norm() == 0.0 || deg == 0 {
        return Err(Error::NumericFailure("degenerate critical polynomial".into()));
    }
    if c.iter().any(|x| !x.re.is_finite() || !x.im.is_finite()) {
        return Err(Error::NumericFailure("non-finite polynomial coefficient".into()));
    }
    let mut comp = DMatrix::<C64>::zeros(deg, deg);
    for i in 1..deg {
        comp[(i, i - 1)] = C64::new(1.0, 0.0);
    }
    for i in 0..deg {
        comp[(i, deg - 1)] = -c[i] / lead;
    }
    let eig = comp
        .schur()
        .eigenvalues()
        .ok_or_else(|| Error::NumericFailure("Schur decomposition did not converge".into()))?;
    let mut roots: Vec<C64> = eig
        .iter()
        .map(|&r| {
            let (v, d) = poly_eval(c, r);
            if d.norm() == 0.0 {
                return r;
            }
            // Keep the polished value only when it actually improves the residual.
            let cand = r - v / d;
            if poly_eval(c, cand).0.norm() < v.norm() {
                cand
            } else {
                r
            }
        })
        .collect();
    if roots.iter().any(|r| !r.re.is_finite() || !r.im.is_finite()) {
        return Err(Error::NumericFailure("root finder produced non-finite values".into()));
    }
    let scale = roots.iter().map(|r| r.norm()).fold(0.0, f64::max);
    let mut min_sep = f64::INFINITY;
    for i in 0..roots.len() {
        for j in 0..i {
            min_sep = min_sep.min((roots[i] - roots[j]).norm());
        }
    }
    if roots.len() > 1 && min_sep < ROOT_SEPARATION * scale {
        return Err(Error::DegenerateCritical(min_sep));
    }
    roots.sort_by(|a, b| sort_key(*a).partial_cmp(&sort_key(*b)).unwrap());
    Ok(roots)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalPoint {
    /// Root `p^alpha`.
    pub p: C64,
    /// Critical value `u^alpha = W(p^alpha)`.
    pub u: C64,
    /// Hessian `Delta^alpha = d^2 W / dy^2` at the critical point.
    pub delta: C64,
}

/// Convention for the square root of the Hessian.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SqrtDelta {
    /// `sqrt(2)/h_1` with `h_1` the principal root of `-2/Delta`; squares to `-Delta`.
    Ledger,
    /// Principal square root of `Delta`.
    Principal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalSet {
    pub points: Vec<CriticalPoint>,
    lead: C64,
    shift: i32,
}

impl CriticalSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn roots(&self) -> Vec<C64> {
        self.points.iter().map(|c| c.p).collect()
    }

    /// Hessian from the product formula `lead * prod (z_a - z_b) / z_a^{shift-1}`.
    pub fn delta_product(&self, alpha: usize) -> C64 {
        let za = self.points[alpha].p;
        let mut prod = self.lead;
        for (b, pt) in self.points.iter().enumerate() {
            if b != alpha {
                prod *= za - pt.p;
            }
        }
        prod / za.powi(self.shift - 1)
    }

    /// `h_1^alpha`, the principal square root of `-2/Delta^alpha`.
    pub fn h1(&self, alpha: usize) -> C64 {
        (C64::new(-2.0, 0.0) / self.points[alpha].delta).sqrt()
    }

    pub fn sqrt_delta(&self, alpha: usize, conv: SqrtDelta) -> C64 {
        match conv {
            SqrtDelta::Ledger => C64::new(2f64.sqrt(), 0.0) / self.h1(alpha),
            SqrtDelta::Principal => self.points[alpha].delta.sqrt(),
        }
    }

    /// `sum_alpha f(p) g(p) / Delta`.
    pub fn residual_pairing(&self, f: &Laurent, g: &Laurent) -> C64 {
        self.points.iter().map(|c| f.eval(c.p) * g.eval(c.p) / c.delta).sum()
    }

    /// Lagrange basis `phi_i(X) = prod_{j != i} (X - z_j)/(z_i - z_j)`.
    pub fn canonical_basis(&self) -> Vec<Laurent> {
        let z = self.roots();
        (0..z.len())
            .map(|i| {
                let mut p = Laurent::poly(vec![C64::new(1.0, 0.0)]);
                for (j, zj) in z.iter().enumerate() {
                    if j != i {
                        let lin = Laurent::poly(vec![-zj, C64::new(1.0, 0.0)]);
                        p = p.mul(&lin).scale(C64::new(1.0, 0.0) / (z[i] - zj));
                    }
                }
                p
            })
            .collect()
    }

    /// Gram matrix of the residual pairing on `X^0..X^{N-1}`.
    pub fn gram(&self) -> DMatrix<C64> {
        let n = self.len();
        DMatrix::from_fn(n, n, |i, j| {
            self.residual_pairing(&Laurent::monomial(i as i32, C64::new(1.0, 0.0)), &Laurent::monomial(j as i32, C64::new(1.0, 0.0)))
        })
    }

    /// `Psi[(beta, alpha)] = sqrt(Delta^alpha) [X^beta] phi_alpha`.
    pub fn psi_matrix(&self, conv: SqrtDelta) -> DMatrix<C64> {
        let basis = self.canonical_basis();
        let n = self.len();
        DMatrix::from_fn(n, n, |b, a| self.sqrt_delta(a, conv) * basis[a].coeff(b as i32))
    }

    /// Values of a ring element at the roots (its canonical coordinates).
    pub fn to_canonical(&self, flat: &[C64]) -> Vec<C64> {
        let poly = Laurent::poly(flat.to_vec());
        self.roots().into_iter().map(|z| poly.eval(z)).collect()
    }

    /// Flat coordinates of `sum u_i phi_i`.
    pub fn from_canonical(&self, u: &[C64]) -> Vec<C64> {
        let basis = self.canonical_basis();
        let n = self.len();
        (0..n).map(|k| basis.iter().zip(u).map(|(phi, ui)| phi.coeff(k as i32) * ui).sum()).collect()
    }

    /// Reduce a Laurent polynomial to flat coordinates by interpolating its values.
    pub fn reduce(&self, f: &Laurent) -> Vec<C64> {
        let vals: Vec<C64> = self.roots().into_iter().map(|z| f.eval(z)).collect();
        self.from_canonical(&vals)
    }
}

/// Coordinate systems on the ring: flat `t`, canonical `u` at the model's
/// parameters, and canonical `u_bar` at a reference model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Coord {
    Flat,
    Canonical,
    CanonicalRef,
}

pub fn coordinates(cs: &CriticalSet, reference: &CriticalSet, pt: &[C64], from: Coord, to: Coord) -> Vec<C64> {
    let flat = match from {
        Coord::Flat => pt.to_vec(),
        Coord::Canonical => cs.from_canonical(pt),
        Coord::CanonicalRef => reference.from_canonical(pt),
    };
    match to {
        Coord::Flat => flat,
        Coord::Canonical => cs.to_canonical(&flat),
        Coord::CanonicalRef => reference.to_canonical(&flat),
    }
}

/// A superpotential together with its critical data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub params: Option<ModelParams>,
    pub sp: Superpotential,
    pub crit: CriticalSet,
}

impl Model {
    pub fn new(params: ModelParams) -> Result<Self> {
        let params = params.validated()?;
        let sp = params.superpotential();
        let crit = sp.critical_set()?;
        Ok(Model { params: Some(params), sp, crit })
    }

    pub fn from_superpotential(sp: Superpotential) -> Result<Self> {
        let crit = sp.critical_set()?;
        Ok(Model { params: None, sp, crit })
    }

    pub fn size(&self) -> usize {
        self.crit.len()
    }
}
