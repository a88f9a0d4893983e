//! Stochastic differential equations involving local time,
//! `X = X_0 + ∫b ds + ∫σ dB + ∫∫ h(s,a) d_sL^a_s dν(a)` (right local time),
//! solved through a strictly increasing space transform `Y = F(t, X)` that
//! removes the local-time term.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::calculus::{ResidualReport, ResolutionInfo};
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::localtime::{local_time_tanaka, SideConvention};
use crate::measure::{Density, Fn2, RadonMeasure};
use crate::pathsim::{brownian_path, euler_solve_with, SamplePath, TimeGrid};
use crate::quad::{gauss8, gauss8_nodes, invert_bracketed, invert_increasing};
use crate::rng::RngStream;

/// A coefficient `(t, x) -> real` with optional analytic time derivative.
#[derive(Clone)]
pub struct Coef {
    f: Fn2,
    f_t: Option<Fn2>,
    time_homogeneous: bool,
    zero: bool,
    expr: Option<Expr>,
}

impl std::fmt::Debug for Coef {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Coef")
            .field("time_homogeneous", &self.time_homogeneous)
            .field("expr", &self.expr)
            .finish()
    }
}

impl Coef {
    pub fn constant(c: f64) -> Self {
        Self {
            f: Arc::new(move |_, _| c),
            f_t: Some(Arc::new(|_, _| 0.0)),
            time_homogeneous: true,
            zero: c == 0.0,
            expr: Some(Expr::Const(c)),
        }
    }

    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    /// Time-dependent coefficient; the time derivative falls back to central
    /// differences unless [`Coef::with_time_derivative`] is used.
    pub fn new(f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            f: Arc::new(f),
            f_t: None,
            time_homogeneous: false,
            zero: false,
            expr: None,
        }
    }

    /// Coefficient depending on space only.
    pub fn space(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            f: Arc::new(move |_, x| f(x)),
            f_t: Some(Arc::new(|_, _| 0.0)),
            time_homogeneous: true,
            zero: false,
            expr: None,
        }
    }

    pub fn with_time_derivative(mut self, f_t: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        self.f_t = Some(Arc::new(f_t));
        self
    }

    pub fn from_expr(e: &Expr) -> Self {
        let th = !e.depends_on_t();
        Self {
            f: e.to_fn(),
            f_t: Some(e.d_dt().to_fn()),
            time_homogeneous: th,
            zero: *e == Expr::Const(0.0),
            expr: Some(e.clone()),
        }
    }

    #[inline]
    pub fn eval(&self, t: f64, x: f64) -> f64 {
        (self.f)(t, x)
    }

    pub fn eval_t(&self, t: f64, x: f64) -> f64 {
        if self.time_homogeneous {
            return 0.0;
        }
        match &self.f_t {
            Some(d) => d(t, x),
            None => {
                let h = 1e-5 * t.abs().max(1.0);
                ((self.f)(t + h, x) - (self.f)(t - h, x)) / (2.0 * h)
            }
        }
    }

    pub fn is_time_homogeneous(&self) -> bool {
        self.time_homogeneous
    }

    pub fn is_zero(&self) -> bool {
        self.zero
    }

    pub fn expr(&self) -> Option<&Expr> {
        self.expr.as_ref()
    }
}

#[derive(Clone, Debug)]
pub struct SdeltSpec {
    pub b: Coef,
    pub sigma: Coef,
    pub h: Coef,
    pub nu: RadonMeasure,
    pub x0: f64,
    pub sigma_min: f64,
}

impl SdeltSpec {
    pub fn new(b: Coef, sigma: Coef, h: Coef, nu: RadonMeasure, x0: f64) -> Self {
        Self {
            b,
            sigma,
            h,
            nu,
            x0,
            sigma_min: 1e-6,
        }
    }

    /// `X = x0 + B + β L⁰(X)`.
    pub fn skew(beta: f64, x0: f64) -> Self {
        Self::new(
            Coef::zero(),
            Coef::constant(1.0),
            Coef::constant(1.0),
            RadonMeasure::dirac(0.0).scaled(beta),
            x0,
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    SigmaLowerBound,
    AtomCondition,
    Unbounded,
    MeasureNotLocallyFinite,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub t: f64,
    pub x: f64,
    pub value: f64,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:?} at (t={}, x={}): {}", self.kind, self.t, self.x, self.value)
    }
}

const COEF_BOUND: f64 = 1e8;

fn lattice_t() -> impl Iterator<Item = f64> {
    (0..17).map(|i| i as f64 / 16.0)
}

fn lattice_x() -> impl Iterator<Item = f64> {
    (0..33).map(|j| -4.0 + j as f64 / 4.0)
}

/// Every violated assumption, with location. Empty means admissible.
pub fn validate_spec(spec: &SdeltSpec) -> std::result::Result<(), Vec<Violation>> {
    let mut out = Vec::new();
    if !(spec.sigma_min > 0.0) {
        out.push(Violation {
            kind: ViolationKind::SigmaLowerBound,
            t: 0.0,
            x: 0.0,
            value: spec.sigma_min,
        });
    }
    for t in lattice_t() {
        for x in lattice_x() {
            let s = spec.sigma.eval(t, x);
            if !(s >= spec.sigma_min) {
                out.push(Violation {
                    kind: ViolationKind::SigmaLowerBound,
                    t,
                    x,
                    value: s,
                });
            }
            for v in [spec.b.eval(t, x), s, spec.h.eval(t, x)] {
                if !(v.abs() <= COEF_BOUND) {
                    out.push(Violation {
                        kind: ViolationKind::Unbounded,
                        t,
                        x,
                        value: v,
                    });
                }
            }
        }
        for &(z, w) in spec.nu.atoms() {
            let hw = spec.h.eval(t, z) * w;
            if !(hw.abs() < 0.5) {
                out.push(Violation {
                    kind: ViolationKind::AtomCondition,
                    t,
                    x: z,
                    value: hw,
                });
            }
        }
    }
    if spec.nu.atoms().iter().any(|a| !a.1.is_finite()) {
        out.push(Violation {
            kind: ViolationKind::MeasureNotLocallyFinite,
            t: 0.0,
            x: f64::NAN,
            value: f64::INFINITY,
        });
    }
    for x in lattice_x() {
        let r = spec.nu.density_at(x);
        if !r.is_finite() || r < 0.0 {
            out.push(Violation {
                kind: ViolationKind::MeasureNotLocallyFinite,
                t: 0.0,
                x,
                value: r,
            });
        }
    }
    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}

fn check(spec: &SdeltSpec) -> Result<()> {
    validate_spec(spec).map_err(|v| {
        let shown: Vec<String> = v.iter().take(5).map(|x| x.to_string()).collect();
        Error::contract(format!("{} spec violation(s): {}", v.len(), shown.join("; ")))
    })
}

/// `h' = h` on atoms and `(hρ + b/σ²)/(ρ + 1)` on the continuous part of
/// `ν' = ν + Lebesgue`; `b' = 0`.
pub fn absorb_drift(spec: &SdeltSpec) -> Result<SdeltSpec> {
    if spec.b.is_zero() {
        return Ok(spec.clone());
    }
    for t in lattice_t() {
        for x in lattice_x() {
            let s = spec.sigma.eval(t, x);
            let r = spec.b.eval(t, x) / (s * s);
            if !r.is_finite() {
                return Err(Error::contract(format!("b/σ² not finite at (t={t}, x={x})")));
            }
        }
    }
    let nu = spec.nu.clone();
    let atoms: Vec<(f64, f64)> = nu.atoms().to_vec();
    let density = match nu.density() {
        Some(d) => {
            let d2 = d.clone();
            let mut breaks = d.breakpoints();
            let (lo, hi) = d.support();
            breaks.extend([lo, hi].into_iter().filter(|x| x.is_finite()));
            Density::new(move |a| d2.eval(a) + 1.0, f64::NEG_INFINITY, f64::INFINITY).with_breaks(breaks)
        }
        None => Density::constant(1.0, f64::NEG_INFINITY, f64::INFINITY),
    };
    let merged = RadonMeasure::from_parts(atoms, Some(density))?;
    let (h, b, sigma) = (spec.h.clone(), spec.b.clone(), spec.sigma.clone());
    let nu_old = nu.clone();
    let th = spec.h.time_homogeneous && spec.b.time_homogeneous && spec.sigma.time_homogeneous;
    let hnew = move |t: f64, a: f64| {
        if nu_old.atom(a) != 0.0 {
            return h.eval(t, a);
        }
        let rho = nu_old.density_at(a);
        let s = sigma.eval(t, a);
        (h.eval(t, a) * rho + b.eval(t, a) / (s * s)) / (rho + 1.0)
    };
    let mut hc = Coef::new(hnew);
    hc.time_homogeneous = th;
    Ok(SdeltSpec {
        b: Coef::zero(),
        sigma: spec.sigma.clone(),
        h: hc,
        nu: merged,
        x0: spec.x0,
        sigma_min: spec.sigma_min,
    })
}

/// Cells per unit length of the tabulated transform.
const TABLE_DENSITY: f64 = 128.0;
const TABLE_HALF_WIDTH: f64 = 16.0;
const PANEL: f64 = 0.25;

#[derive(Clone)]
enum Kind {
    Identity,
    /// Piecewise linear; cached when `h` does not depend on time.
    Atoms(Option<Arc<Pwl>>),
    Table(Arc<Table>),
    Direct,
}

/// `F` for finitely many atoms and time-free `h`: slope `slopes[k]` on
/// `(atoms[k-1], atoms[k]]`, `f_at[k] = F(atoms[k])`.
struct Pwl {
    atoms: Vec<f64>,
    f_at: Vec<f64>,
    slopes: Vec<f64>,
}

impl Pwl {
    #[inline]
    fn segment(&self, x: f64) -> usize {
        self.atoms.partition_point(|&z| z < x)
    }

    fn f(&self, x: f64) -> f64 {
        let k = self.segment(x);
        if k == 0 {
            self.f_at[0] - self.slopes[0] * (self.atoms[0] - x)
        } else {
            self.f_at[k - 1] + self.slopes[k] * (x - self.atoms[k - 1])
        }
    }

    fn fx(&self, x: f64) -> f64 {
        self.slopes[self.segment(x)]
    }

    fn g(&self, y: f64) -> f64 {
        let k = self.f_at.partition_point(|&f| f < y);
        if k == 0 {
            self.atoms[0] - (self.f_at[0] - y) / self.slopes[0]
        } else {
            self.atoms[k - 1] + (y - self.f_at[k - 1]) / self.slopes[k]
        }
    }
}

/// Time-homogeneous transform on a knot grid: `ζ` at knots with one-sided
/// slopes (cubic Hermite inside a cell), `ψ` per cell, `F` at knots. Inside a
/// cell `F` is the quintic matching `F, F', F''` at both ends, in powers of
/// `x - knots[k]`.
struct Table {
    knots: Vec<f64>,
    zeta: Vec<f64>,
    slope_right: Vec<f64>,
    slope_left: Vec<f64>,
    psi: Vec<f64>,
    fvals: Vec<f64>,
    quintic: Vec<[f64; 6]>,
}

/// The space transform `F`, its derivatives and its inverse `G`.
#[derive(Clone)]
pub struct TransformPair {
    h: Coef,
    nu: RadonMeasure,
    kind: Kind,
    breaks: Vec<f64>,
}

impl std::fmt::Debug for TransformPair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let k = match self.kind {
            Kind::Identity => "identity",
            Kind::Atoms(_) => "atoms",
            Kind::Table(_) => "table",
            Kind::Direct => "direct",
        };
        f.debug_struct("TransformPair").field("kind", &k).finish()
    }
}

/// `F(t,x) = ∫_0^x ψ(t,a) e^{ζ(t,a)} da` with `ζ(t,x) = -2∫_0^x h ρ da` and
/// `ψ(t,x) = Π_{0<=z<x} (1 - 2h(t,z)ν({z}))` (reciprocals for `x <= 0`).
pub fn build_transform(h: &Coef, nu: &RadonMeasure) -> Result<TransformPair> {
    for t in lattice_t() {
        for &(z, w) in nu.atoms() {
            let hw = h.eval(t, z) * w;
            if !(hw.abs() < 0.5) {
                return Err(Error::contract(format!("|h·ν({{{z}}})| = {} >= 1/2 at t={t}", hw.abs())));
            }
        }
    }
    let mut breaks: Vec<f64> = nu.atoms().iter().map(|a| a.0).collect();
    if let Some(d) = nu.density() {
        breaks.extend(d.breakpoints());
        let (lo, hi) = d.support();
        breaks.extend([lo, hi].into_iter().filter(|x| x.is_finite()));
    }
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let mut pair = TransformPair {
        h: h.clone(),
        nu: nu.clone(),
        kind: Kind::Direct,
        breaks,
    };
    pair.kind = if nu.is_zero() {
        Kind::Identity
    } else if !nu.has_density() {
        Kind::Atoms(if h.time_homogeneous { Some(Arc::new(pair.build_pwl())) } else { None })
    } else if h.time_homogeneous {
        Kind::Table(Arc::new(pair.build_table()?))
    } else {
        Kind::Direct
    };
    Ok(pair)
}

impl TransformPair {
    #[inline]
    fn rho(&self, a: f64) -> f64 {
        self.nu.density_at(a)
    }

    /// `ψ` as a left-continuous function of `x`.
    pub fn psi(&self, t: f64, x: f64) -> f64 {
        let mut p = 1.0;
        for &(z, w) in self.nu.atoms() {
            if x > 0.0 && z >= 0.0 && z < x {
                p *= 1.0 - 2.0 * self.h.eval(t, z) * w;
            } else if x <= 0.0 && z >= x && z < 0.0 {
                p /= 1.0 - 2.0 * self.h.eval(t, z) * w;
            }
        }
        p
    }

    fn dln_psi_dt(&self, t: f64, x: f64) -> f64 {
        let mut s = 0.0;
        for &(z, w) in self.nu.atoms() {
            let term = || -2.0 * self.h.eval_t(t, z) * w / (1.0 - 2.0 * self.h.eval(t, z) * w);
            if x > 0.0 && z >= 0.0 && z < x {
                s += term();
            } else if x <= 0.0 && z >= x && z < 0.0 {
                s -= term();
            }
        }
        s
    }

    /// Panel endpoints from 0 to x through every breakpoint, widths <= PANEL
    /// when `subdivide`.
    fn panels(&self, x: f64, subdivide: bool) -> Vec<f64> {
        let mut pts = vec![0.0];
        let inner: Vec<f64> = if x > 0.0 {
            self.breaks.iter().copied().filter(|&b| b > 0.0 && b < x).collect()
        } else {
            self.breaks.iter().rev().copied().filter(|&b| b < 0.0 && b > x).collect()
        };
        for b in inner.into_iter().chain(std::iter::once(x)) {
            let prev = *pts.last().unwrap();
            if subdivide {
                let k = ((b - prev).abs() / PANEL).ceil().max(1.0) as usize;
                for i in 1..k {
                    pts.push(prev + (b - prev) * i as f64 / k as f64);
                }
            }
            pts.push(b);
        }
        pts
    }

    pub fn zeta(&self, t: f64, x: f64) -> f64 {
        if !self.nu.has_density() || x == 0.0 {
            return 0.0;
        }
        let pts = self.panels(x, true);
        pts.windows(2)
            .map(|p| -2.0 * gauss8(|a| self.h.eval(t, a) * self.rho(a), p[0], p[1]))
            .sum()
    }

    /// `(F, F_t)` by nested Gauss–Legendre panels.
    fn direct(&self, t: f64, x: f64, want_t: bool) -> (f64, f64) {
        if x == 0.0 {
            return (0.0, 0.0);
        }
        let pts = self.panels(x, self.nu.has_density());
        let (mut f, mut ft) = (0.0, 0.0);
        let (mut z0, mut dz0) = (0.0, 0.0);
        for p in pts.windows(2) {
            let (p0, p1) = (p[0], p[1]);
            let mid = 0.5 * (p0 + p1);
            let psi = self.psi(t, mid);
            let dlpsi = if want_t { self.dln_psi_dt(t, mid) } else { 0.0 };
            if !self.nu.has_density() {
                f += psi * (p1 - p0);
                ft += psi * dlpsi * (p1 - p0);
                continue;
            }
            let hr = |a: f64| self.h.eval(t, a) * self.rho(a);
            let hr_t = |a: f64| self.h.eval_t(t, a) * self.rho(a);
            for (a, w) in gauss8_nodes(p0, p1) {
                let z = z0 - 2.0 * gauss8(hr, p0, a);
                let e = z.exp();
                f += psi * w * e;
                if want_t {
                    let dz = dz0 - 2.0 * gauss8(hr_t, p0, a);
                    ft += psi * w * e * (dlpsi + dz);
                }
            }
            z0 -= 2.0 * gauss8(hr, p0, p1);
            if want_t {
                dz0 -= 2.0 * gauss8(hr_t, p0, p1);
            }
        }
        (f, ft)
    }

    fn build_pwl(&self) -> Pwl {
        let atoms: Vec<f64> = self.nu.atoms().iter().map(|a| a.0).collect();
        let m = atoms.len();
        let mut slopes = Vec::with_capacity(m + 1);
        slopes.push(self.psi(0.0, atoms[0] - 1.0));
        for k in 1..m {
            slopes.push(self.psi(0.0, 0.5 * (atoms[k - 1] + atoms[k])));
        }
        slopes.push(self.psi(0.0, atoms[m - 1] + 1.0));
        let f_at = atoms.iter().map(|&z| self.direct(0.0, z, false).0).collect();
        Pwl { atoms, f_at, slopes }
    }

    fn build_table(&self) -> Result<Table> {
        let amin = self.breaks.first().copied().unwrap_or(0.0).min(0.0);
        let amax = self.breaks.last().copied().unwrap_or(0.0).max(0.0);
        let lo = (-TABLE_HALF_WIDTH).min(amin - 1.0);
        let hi = TABLE_HALF_WIDTH.max(amax + 1.0);
        let k0 = (lo * TABLE_DENSITY).floor() as i64;
        let k1 = (hi * TABLE_DENSITY).ceil() as i64;
        let mut knots: Vec<f64> = (k0..=k1).map(|k| k as f64 / TABLE_DENSITY).collect();
        knots.extend(self.breaks.iter().copied().filter(|&b| b > lo && b < hi));
        knots.sort_by(f64::total_cmp);
        knots.dedup();
        let n = knots.len();
        let i0 = knots.iter().position(|&k| k == 0.0).expect("0 is a knot");
        let t = 0.0;
        let hr = |a: f64| self.h.eval(t, a) * self.rho(a);
        let mut zeta = vec![0.0; n];
        for i in i0 + 1..n {
            zeta[i] = zeta[i - 1] - 2.0 * gauss8(hr, knots[i - 1], knots[i]);
        }
        for i in (0..i0).rev() {
            zeta[i] = zeta[i + 1] + 2.0 * gauss8(hr, knots[i], knots[i + 1]);
        }
        let mut slope_right = vec![0.0; n];
        let mut slope_left = vec![0.0; n];
        for i in 0..n {
            if i + 1 < n {
                let e = 1e-9 * (knots[i + 1] - knots[i]);
                slope_right[i] = -2.0 * hr(knots[i] + e);
            }
            if i > 0 {
                let e = 1e-9 * (knots[i] - knots[i - 1]);
                slope_left[i] = -2.0 * hr(knots[i] - e);
            }
        }
        let psi: Vec<f64> = (0..n.saturating_sub(1)).map(|i| self.psi(t, 0.5 * (knots[i] + knots[i + 1]))).collect();
        let mut table = Table {
            knots,
            zeta,
            slope_right,
            slope_left,
            psi,
            fvals: vec![0.0; n],
            quintic: Vec::new(),
        };
        for i in i0 + 1..n {
            table.fvals[i] = table.fvals[i - 1] + table.cell_integral(i - 1, table.knots[i]);
        }
        for i in (0..i0).rev() {
            table.fvals[i] = table.fvals[i + 1] - table.cell_integral(i, table.knots[i + 1]);
        }
        if table.fvals.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::numeric(0, "tabulated transform is not strictly increasing"));
        }
        table.quintic = (0..n - 1).map(|k| table.fit_quintic(k)).collect();
        Ok(table)
    }

    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            Kind::Identity => "identity",
            Kind::Atoms(_) => "atoms",
            Kind::Table(_) => "table",
            Kind::Direct => "direct",
        }
    }

    pub fn f(&self, t: f64, x: f64) -> f64 {
        match &self.kind {
            Kind::Identity => x,
            Kind::Atoms(Some(p)) => p.f(x),
            Kind::Table(tb) if tb.covers(x) => tb.f(x),
            _ => self.direct(t, x, false).0,
        }
    }

    /// Left space derivative.
    pub fn fx(&self, t: f64, x: f64) -> f64 {
        match &self.kind {
            Kind::Identity => 1.0,
            Kind::Atoms(Some(p)) => p.fx(x),
            Kind::Atoms(None) => self.psi(t, x),
            Kind::Table(tb) if tb.covers(x) => tb.fx(x),
            _ => self.psi(t, x) * self.zeta(t, x).exp(),
        }
    }

    pub fn ft(&self, t: f64, x: f64) -> f64 {
        match &self.kind {
            Kind::Identity => 0.0,
            _ if self.h.time_homogeneous => 0.0,
            _ => self.direct(t, x, true).1,
        }
    }

    /// Inverse of `F(t,·)`.
    pub fn g(&self, t: f64, y: f64) -> Result<f64> {
        self.g_near(t, y, y)
    }

    /// Inverse of `F(t,·)` starting Newton from `guess`.
    pub fn g_near(&self, t: f64, y: f64, guess: f64) -> Result<f64> {
        let tol = 1e-13;
        let fail = |reason: String| Error::Inversion { t, y, reason };
        match &self.kind {
            Kind::Identity => Ok(y),
            Kind::Atoms(Some(p)) => Ok(p.g(y)),
            Kind::Atoms(None) => Ok(self.g_atoms(t, y)),
            Kind::Table(tb) if y > tb.fvals[0] && y <= *tb.fvals.last().unwrap() => Ok(tb.g(y, guess, tol).map_err(fail)?.0),
            _ => invert_increasing(|x| self.f(t, x), |x| self.fx(t, x), y, guess, tol).map_err(fail),
        }
    }

    /// `(G(t,y), F_x(t,G(t,y)))`, sharing the cell lookup where possible.
    pub fn g_fx_near(&self, t: f64, y: f64, guess: f64) -> Result<(f64, f64)> {
        if let Kind::Table(tb) = &self.kind {
            if y > tb.fvals[0] && y <= *tb.fvals.last().unwrap() {
                let (x, k) = tb.g(y, guess, 1e-13).map_err(|reason| Error::Inversion { t, y, reason })?;
                return Ok((x, tb.psi[k] * tb.zeta_in(k, x).exp()));
            }
        }
        let x = self.g_near(t, y, guess)?;
        Ok((x, self.fx(t, x)))
    }

    /// Exact inverse of the piecewise-linear map.
    fn g_atoms(&self, t: f64, y: f64) -> f64 {
        if y == 0.0 {
            return 0.0;
        }
        let atoms = self.nu.atoms();
        if y > 0.0 {
            self.walk_segments(t, y, 1.0, atoms.iter().map(|a| a.0).filter(|&z| z > 0.0))
        } else {
            self.walk_segments(t, y, -1.0, atoms.iter().rev().map(|a| a.0).filter(|&z| z < 0.0))
        }
    }

    /// Walks the linear pieces from 0 in direction `dir` until `F` passes `y`.
    fn walk_segments(&self, t: f64, y: f64, dir: f64, atoms: impl Iterator<Item = f64>) -> f64 {
        let (mut x0, mut f0) = (0.0, 0.0);
        for z in atoms {
            let slope = self.psi(t, 0.5 * (x0 + z));
            let f1 = f0 + slope * (z - x0);
            if (f1 - y) * dir >= 0.0 {
                return x0 + (y - f0) / slope;
            }
            x0 = z;
            f0 = f1;
        }
        x0 + (y - f0) / self.psi(t, x0 + dir)
    }

    pub fn h(&self) -> &Coef {
        &self.h
    }

    pub fn nu(&self) -> &RadonMeasure {
        &self.nu
    }
}

impl Table {
    fn covers(&self, x: f64) -> bool {
        x >= self.knots[0] && x <= *self.knots.last().unwrap()
    }

    /// Cell index `k` with `knots[k] < x <= knots[k+1]` (cell 0 for the first knot).
    #[inline]
    fn cell(&self, x: f64) -> usize {
        let last = self.knots.len() - 2;
        // inserted breaks only push indices up from the uniform estimate
        let mut k = (((x - self.knots[0]) * TABLE_DENSITY).ceil() as isize - 1).clamp(0, last as isize) as usize;
        for _ in 0..8 {
            if k < last && self.knots[k + 1] < x {
                k += 1;
            } else if k > 0 && self.knots[k] >= x {
                k -= 1;
            } else {
                return k;
            }
        }
        self.knots.partition_point(|&kn| kn < x).saturating_sub(1).min(last)
    }

    /// Cell holding `y` in the image, searched outward from `hint`.
    #[inline]
    fn image_cell(&self, y: f64, hint: usize) -> usize {
        let last = self.knots.len() - 2;
        let mut k = hint.min(last);
        for _ in 0..8 {
            if k < last && self.fvals[k + 1] < y {
                k += 1;
            } else if k > 0 && self.fvals[k] >= y {
                k -= 1;
            } else {
                return k;
            }
        }
        self.fvals.partition_point(|&f| f < y).saturating_sub(1).min(last)
    }

    #[inline]
    fn zeta_in(&self, k: usize, x: f64) -> f64 {
        let (a, b) = (self.knots[k], self.knots[k + 1]);
        let d = b - a;
        let s = (x - a) / d;
        let s2 = s * s;
        let s3 = s2 * s;
        (2.0 * s3 - 3.0 * s2 + 1.0) * self.zeta[k]
            + (s3 - 2.0 * s2 + s) * d * self.slope_right[k]
            + (-2.0 * s3 + 3.0 * s2) * self.zeta[k + 1]
            + (s3 - s2) * d * self.slope_left[k + 1]
    }

    /// `∫_{knots[k]}^x ψ e^ζ` inside cell `k`.
    fn cell_integral(&self, k: usize, x: f64) -> f64 {
        let a = self.knots[k];
        self.psi[k] * crate::quad::gauss4(|u| self.zeta_in(k, u).exp(), a, x)
    }

    fn fit_quintic(&self, k: usize) -> [f64; 6] {
        let d = self.knots[k + 1] - self.knots[k];
        let (f0, f1) = (self.fvals[k], self.fvals[k + 1]);
        let g0 = self.psi[k] * self.zeta[k].exp();
        let g1 = self.psi[k] * self.zeta[k + 1].exp();
        let (c0, c1, c2) = (f0, g0, 0.5 * g0 * self.slope_right[k]);
        let h1 = g1 * self.slope_left[k + 1];
        // remaining c3..c5 from the three end conditions at u = d
        let r0 = (f1 - c0 - c1 * d - c2 * d * d) / d.powi(3);
        let r1 = (g1 - c1 - 2.0 * c2 * d) / d.powi(2);
        let r2 = (h1 - 2.0 * c2) / d;
        let c3 = 10.0 * r0 - 4.0 * r1 + 0.5 * r2;
        let c4 = (-15.0 * r0 + 7.0 * r1 - r2) / d;
        let c5 = (6.0 * r0 - 3.0 * r1 + 0.5 * r2) / (d * d);
        [c0, c1, c2, c3, c4, c5]
    }

    #[inline]
    fn poly(&self, k: usize, x: f64) -> (f64, f64) {
        let c = &self.quintic[k];
        let u = x - self.knots[k];
        let v = c[0] + u * (c[1] + u * (c[2] + u * (c[3] + u * (c[4] + u * c[5]))));
        let dv = c[1] + u * (2.0 * c[2] + u * (3.0 * c[3] + u * (4.0 * c[4] + u * 5.0 * c[5])));
        (v, dv)
    }

    fn f(&self, x: f64) -> f64 {
        self.poly(self.cell(x), x).0
    }

    fn fx(&self, x: f64) -> f64 {
        let k = self.cell(x);
        self.psi[k] * self.zeta_in(k, x).exp()
    }

    /// Inverse and the cell it fell in.
    fn g(&self, y: f64, guess: f64, tol: f64) -> std::result::Result<(f64, usize), String> {
        let hint = if guess.is_finite() && self.covers(guess) { self.cell(guess) } else { self.cell(0.0) };
        let k = self.image_cell(y, hint);
        let (a, b) = (self.knots[k], self.knots[k + 1]);
        let (fa, fb) = (self.fvals[k], self.fvals[k + 1]);
        let guess = a + (b - a) * ((y - fa) / (fb - fa)).clamp(0.0, 1.0);
        let x = invert_bracketed(|x| self.poly(k, x).0, |x| self.poly(k, x).1, y, a, b, guess, tol)?;
        Ok((x, k))
    }
}

/// Coefficients of the transformed equation `dY = F_t(t,G) dt + (F_x σ)(t,G) dB`.
#[derive(Clone, Debug)]
pub struct TransformedCoeffs {
    pub pair: TransformPair,
    pub sigma: Coef,
}

impl TransformedCoeffs {
    /// `(x, drift', diff')` at `(t, y)` with `x = G(t, y)`.
    pub fn eval_near(&self, t: f64, y: f64, guess: f64) -> Result<(f64, f64, f64)> {
        let (x, fx) = self.pair.g_fx_near(t, y, guess)?;
        let drift = self.pair.ft(t, x);
        let diff = fx * self.sigma.eval(t, x);
        Ok((x, drift, diff))
    }

    pub fn drift(&self, t: f64, y: f64) -> Result<f64> {
        Ok(self.eval_near(t, y, y)?.1)
    }

    pub fn diffusion(&self, t: f64, y: f64) -> Result<f64> {
        Ok(self.eval_near(t, y, y)?.2)
    }
}

/// Drift and diffusion of `Y = F(t, X)`; `b` must already be absorbed.
pub fn transformed_coeffs(spec: &SdeltSpec, pair: &TransformPair) -> Result<TransformedCoeffs> {
    if !spec.b.is_zero() {
        return Err(Error::contract("absorb the drift before transforming"));
    }
    Ok(TransformedCoeffs {
        pair: pair.clone(),
        sigma: spec.sigma.clone(),
    })
}

#[derive(Clone, Debug)]
pub struct SdeltSolution {
    pub x: SamplePath,
    pub y: SamplePath,
    pub transform: &'static str,
}

/// Solves on the grid of `rng`'s Brownian driver.
pub fn solve_sdelt(spec: &SdeltSpec, grid: TimeGrid, rng: RngStream) -> Result<SamplePath> {
    Ok(solve_sdelt_with_driver(spec, &brownian_path(grid, rng))?.x)
}

/// Validates, absorbs drift, builds the transform, runs Euler on `Y` and maps
/// back through `G`. The returned `X` carries qv `Σσ(t_i,X_i)²Δt` and the
/// decomposition `(Σσ ΔB, remainder)`.
pub fn solve_sdelt_with_driver(spec: &SdeltSpec, driver: &SamplePath) -> Result<SdeltSolution> {
    check(spec)?;
    let work = absorb_drift(spec)?;
    let pair = build_transform(&work.h, &work.nu)?;
    let tc = transformed_coeffs(&work, &pair)?;
    solve_transformed(&tc, spec, driver)
}

pub fn solve_transformed(tc: &TransformedCoeffs, spec: &SdeltSpec, driver: &SamplePath) -> Result<SdeltSolution> {
    let grid = *driver.grid();
    let y0 = tc.pair.f(grid.t0, spec.x0);
    let mut xs = Vec::with_capacity(grid.len());
    let mut guess = spec.x0;
    let y = euler_solve_with(
        |_, t, y| {
            let (x, drift, diff) = tc.eval_near(t, y, guess)?;
            guess = x;
            xs.push(x);
            Ok((drift, diff))
        },
        y0,
        grid,
        driver,
    )?;
    let yn = y.terminal();
    xs.push(tc.pair.g_near(grid.t_end, yn, guess)?);
    let db = driver.values();
    let n = grid.n_steps;
    let mut qv = Vec::with_capacity(n + 1);
    let mut mart = Vec::with_capacity(n + 1);
    let (mut q, mut m) = (0.0, 0.0);
    qv.push(q);
    mart.push(m);
    for i in 0..n {
        let s = spec.sigma.eval(grid.time(i), xs[i]);
        q += s * s * grid.dt();
        m += s * (db[i + 1] - db[i]);
        qv.push(q);
        mart.push(m);
    }
    let bv: Vec<f64> = xs.iter().zip(&mart).map(|(x, m)| x - spec.x0 - m).collect();
    let x = SamplePath::new(grid, xs)?.with_qv(qv)?.with_decomposition(mart, bv)?;
    Ok(SdeltSolution {
        x,
        y,
        transform: tc.pair.kind_name(),
    })
}

/// Terminal values of [`solve_sdelt`] for several specs sharing one driver,
/// without storing any path. Bit-identical to the full solve.
pub fn solve_sdelt_terminals(specs: &[SdeltSpec], grid: TimeGrid, rng: RngStream) -> Result<Vec<f64>> {
    let mut tcs = Vec::with_capacity(specs.len());
    for spec in specs {
        check(spec)?;
        let work = absorb_drift(spec)?;
        let pair = build_transform(&work.h, &work.nu)?;
        tcs.push(transformed_coeffs(&work, &pair)?);
    }
    let mut ys: Vec<f64> = tcs.iter().zip(specs).map(|(tc, s)| tc.pair.f(grid.t0, s.x0)).collect();
    let mut guesses: Vec<f64> = specs.iter().map(|s| s.x0).collect();
    let sd = grid.dt().sqrt();
    let dt = grid.dt();
    let mut b = 0.0f64;
    for (i, z) in rng.normal_iter().take(grid.n_steps).enumerate() {
        // same rounding as differencing the stored driver
        let next = b + sd * z;
        let dbi = next - b;
        b = next;
        let t = grid.time(i);
        for ((tc, y), guess) in tcs.iter().zip(ys.iter_mut()).zip(guesses.iter_mut()) {
            let (x, drift, diff) = tc.eval_near(t, *y, *guess)?;
            if !drift.is_finite() || !diff.is_finite() {
                return Err(Error::numeric(i, format!("coefficients ({drift}, {diff}) at x={y}")));
            }
            *guess = x;
            *y = *y + drift * dt + diff * dbi;
            if !y.is_finite() {
                return Err(Error::numeric(i + 1, "state"));
            }
        }
    }
    tcs.iter()
        .zip(ys)
        .zip(guesses)
        .map(|((tc, y), guess)| tc.pair.g_near(grid.t_end, y, guess))
        .collect()
}

/// Skew Brownian motion `X = B + β L⁰(X)` from 0.
pub fn skew_bm(beta: f64, grid: TimeGrid, rng: RngStream) -> Result<SamplePath> {
    if !(beta.abs() < 0.5) {
        return Err(Error::contract(format!(
            "|β| = {} must be < 1/2 for the right local-time form (|h·ν({{0}})| < 1/2)",
            beta.abs()
        )));
    }
    solve_sdelt(&SdeltSpec::skew(beta, 0.0), grid, rng)
}

/// How the atom local times inside [`verify_sdelt_with`] are estimated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AtomLocalTime {
    /// `L^a = 2[(X-a)⁺ - (X_0-a)⁺ - ∫1_{X>a} dX]` with `dX` expanded through
    /// the equation's own terms (atoms processed from the top down).
    OneSided,
    /// Grid Tanaka estimator of the path.
    GridTanaka,
}

/// Residual of the equation on `X`: `X_t - x0 - Σbdt - ΣσΔB - Σ_atoms w∫h dL
/// - Σ hρσ²Δt` (continuous part through the occupation formula).
pub fn verify_sdelt(x: &SamplePath, spec: &SdeltSpec, driver: &SamplePath) -> Result<ResidualReport> {
    verify_sdelt_with(x, spec, driver, AtomLocalTime::OneSided)
}

pub fn verify_sdelt_with(x: &SamplePath, spec: &SdeltSpec, driver: &SamplePath, est: AtomLocalTime) -> Result<ResidualReport> {
    if x.grid() != driver.grid() {
        return Err(Error::contract("X and driver grids differ"));
    }
    let grid = *x.grid();
    let n = grid.n_steps;
    let dt = grid.dt();
    let v = x.values();
    let db = driver.values();
    // per-step pieces shared by the atom estimator
    let mut sig_db = vec![0.0; n];
    let mut b_dt = vec![0.0; n];
    let mut cont = vec![0.0; n];
    for i in 0..n {
        let t = grid.time(i);
        let s = spec.sigma.eval(t, v[i]);
        sig_db[i] = s * (db[i + 1] - db[i]);
        b_dt[i] = spec.b.eval(t, v[i]) * dt;
        let rho = spec.nu.density_at(v[i]);
        if rho != 0.0 {
            cont[i] = spec.h.eval(t, v[i]) * rho * s * s * dt;
        }
    }
    let mut atoms: Vec<(f64, f64)> = spec.nu.atoms().to_vec();
    atoms.sort_by(|a, b| b.0.total_cmp(&a.0));
    // Σ_{z > a} w_z h(t_i, z) ΔL^z_i for the current a, built top-down
    let mut above = vec![0.0; n];
    let mut atom_term = vec![0.0; n];
    for &(a, w) in &atoms {
        let dl: Vec<f64> = match est {
            AtomLocalTime::GridTanaka => {
                let l = local_time_tanaka(x, a, SideConvention::Right);
                l.values().windows(2).map(|p| p[1] - p[0]).collect()
            }
            AtomLocalTime::OneSided => (0..n)
                .map(|i| {
                    let pos0 = (v[i] - a).max(0.0);
                    let pos1 = (v[i + 1] - a).max(0.0);
                    let dx = if v[i] > a { sig_db[i] + b_dt[i] + cont[i] + above[i] } else { 0.0 };
                    2.0 * (pos1 - pos0 - dx)
                })
                .collect(),
        };
        for i in 0..n {
            let inc = w * spec.h.eval(grid.time(i), a) * dl[i];
            atom_term[i] += inc;
            above[i] += inc;
        }
    }
    let mut res = Vec::with_capacity(n + 1);
    res.push(v[0] - spec.x0);
    let mut acc = 0.0;
    for i in 0..n {
        acc += b_dt[i] + sig_db[i] + cont[i] + atom_term[i];
        res.push(v[i + 1] - spec.x0 - acc);
    }
    ResidualReport::new(
        res,
        ResolutionInfo {
            dt,
            level_spacing: None,
            eps: None,
        },
    )
}

/// Measure section of a spec file.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NuFile {
    #[serde(default)]
    pub atoms: Vec<[f64; 2]>,
    #[serde(default)]
    pub density: Option<Expr>,
    #[serde(default)]
    pub support: Option<[f64; 2]>,
}

/// JSON spec: `{b, sigma, h, nu: {atoms, density, support}, x0}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpecFile {
    pub b: Expr,
    pub sigma: Expr,
    pub h: Expr,
    #[serde(default)]
    pub nu: NuFile,
    pub x0: f64,
    #[serde(default)]
    pub sigma_min: Option<f64>,
}

impl SpecFile {
    pub fn to_spec(&self) -> Result<SdeltSpec> {
        let atoms: Vec<(f64, f64)> = self.nu.atoms.iter().map(|a| (a[0], a[1])).collect();
        let density = match &self.nu.density {
            None => None,
            Some(e) => {
                let (lo, hi) = self.nu.support.map_or((f64::NEG_INFINITY, f64::INFINITY), |s| (s[0], s[1]));
                if !(lo < hi) {
                    return Err(Error::Config(format!("density support [{lo}, {hi}] is empty")));
                }
                let e = e.clone();
                let mut breaks = Vec::new();
                collect_breaks(&e, &mut breaks);
                Some(Density::new(move |a| e.eval(0.0, a), lo, hi).with_breaks(breaks))
            }
        };
        let nu = RadonMeasure::from_parts(atoms, density).map_err(|e| Error::Config(e.to_string()))?;
        let mut spec = SdeltSpec::new(
            Coef::from_expr(&self.b),
            Coef::from_expr(&self.sigma),
            Coef::from_expr(&self.h),
            nu,
            self.x0,
        );
        if let Some(s) = self.sigma_min {
            spec.sigma_min = s;
        }
        Ok(spec)
    }
}

fn collect_breaks(e: &Expr, out: &mut Vec<f64>) {
    match e {
        Expr::Indicator { lo, hi } => out.extend([*lo, *hi].into_iter().filter(|x| x.is_finite())),
        Expr::Exp(x) | Expr::Sin(x) | Expr::Cos(x) | Expr::Atan(x) | Expr::Abs(x) | Expr::Sign(x) | Expr::Inv(x) => collect_breaks(x, out),
        Expr::Sum(v) | Expr::Product(v) => v.iter().for_each(|x| collect_breaks(x, out)),
        _ => {}
    }
}
