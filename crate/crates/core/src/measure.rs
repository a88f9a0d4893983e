//! Radon measures (finitely many atoms plus a piecewise-continuous density),
//! bounded-variation functions and one- and two-parameter Lebesgue–Stieltjes
//! integration.
//!
//! Intervals passed to [`measure_integrate`] are half-open `[lo, hi)`, so an
//! atom at `lo` is included and one at `hi` is not.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::quad;

pub type Fn1 = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type Fn2 = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

pub const QUAD_REL_TOL: f64 = 1e-10;
pub const QUAD_MAX_DEPTH: u32 = 20;

/// Lebesgue density of a measure, zero outside `support`.
#[derive(Clone)]
pub struct Density {
    f: Fn1,
    support: (f64, f64),
    /// Interior points where the density may jump.
    breaks: Vec<f64>,
    constant: Option<f64>,
}

impl Density {
    pub fn new(f: impl Fn(f64) -> f64 + Send + Sync + 'static, lo: f64, hi: f64) -> Self {
        Self {
            f: Arc::new(f),
            support: (lo, hi),
            breaks: Vec::new(),
            constant: None,
        }
    }

    pub fn constant(c: f64, lo: f64, hi: f64) -> Self {
        Self {
            f: Arc::new(move |_| c),
            support: (lo, hi),
            breaks: Vec::new(),
            constant: Some(c),
        }
    }

    pub fn with_breaks(mut self, mut breaks: Vec<f64>) -> Self {
        breaks.sort_by(f64::total_cmp);
        breaks.dedup();
        self.breaks = breaks;
        self
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        if x < self.support.0 || x > self.support.1 {
            0.0
        } else {
            (self.f)(x)
        }
    }

    pub fn support(&self) -> (f64, f64) {
        self.support
    }

    /// `Some(c)` when the density equals `c` on its whole support.
    pub fn constant_value(&self) -> Option<f64> {
        self.constant
    }

    /// Finite support ends and interior breaks.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self.breaks.clone();
        for e in [self.support.0, self.support.1] {
            if e.is_finite() {
                out.push(e);
            }
        }
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    }
}

/// Finite atoms plus an optional density with respect to Lebesgue measure.
#[derive(Clone, Default)]
pub struct RadonMeasure {
    atoms: Vec<(f64, f64)>,
    density: Option<Density>,
}

impl fmt::Debug for RadonMeasure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RadonMeasure")
            .field("atoms", &self.atoms)
            .field("support", &self.density.as_ref().map(|d| d.support))
            .finish()
    }
}

impl RadonMeasure {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn dirac(loc: f64) -> Self {
        Self::from_parts(vec![(loc, 1.0)], None).expect("single atom")
    }

    pub fn lebesgue() -> Self {
        Self {
            atoms: Vec::new(),
            density: Some(Density::constant(1.0, f64::NEG_INFINITY, f64::INFINITY)),
        }
    }

    pub fn lebesgue_on(lo: f64, hi: f64) -> Self {
        Self {
            atoms: Vec::new(),
            density: Some(Density::constant(1.0, lo, hi)),
        }
    }

    /// Atoms must have distinct finite locations; they are stored sorted.
    /// Zero-weight atoms are dropped.
    pub fn from_parts(mut atoms: Vec<(f64, f64)>, density: Option<Density>) -> Result<Self> {
        if atoms.iter().any(|(l, w)| !l.is_finite() || !w.is_finite()) {
            return Err(Error::contract("atom location and weight must be finite"));
        }
        atoms.retain(|&(_, w)| w != 0.0);
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        if atoms.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::contract("duplicate atom location"));
        }
        if let Some(d) = &density {
            if d.support.0 > d.support.1 {
                return Err(Error::contract("density support is empty"));
            }
        }
        Ok(Self { atoms, density })
    }

    pub fn with_atom(self, loc: f64, weight: f64) -> Result<Self> {
        let mut atoms = self.atoms;
        atoms.push((loc, weight));
        Self::from_parts(atoms, self.density)
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            atoms: self.atoms.iter().map(|&(l, w)| (l, c * w)).filter(|a| a.1 != 0.0).collect(),
            density: self.density.as_ref().map(|d| {
                let f = d.f.clone();
                Density {
                    f: Arc::new(move |x| c * f(x)),
                    support: d.support,
                    breaks: d.breaks.clone(),
                    constant: d.constant.map(|k| c * k),
                }
            }),
        }
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn density(&self) -> Option<&Density> {
        self.density.as_ref()
    }

    /// Weight of the atom at exactly `x`, or 0.
    pub fn atom(&self, x: f64) -> f64 {
        self.atoms
            .binary_search_by(|a| a.0.total_cmp(&x))
            .map(|k| self.atoms[k].1)
            .unwrap_or(0.0)
    }

    #[inline]
    pub fn density_at(&self, x: f64) -> f64 {
        self.density.as_ref().map_or(0.0, |d| d.eval(x))
    }

    pub fn is_zero(&self) -> bool {
        self.atoms.is_empty() && self.density.is_none()
    }

    pub fn has_density(&self) -> bool {
        self.density.is_some()
    }

    /// Atoms with `lo <= loc < hi`.
    pub fn atoms_in(&self, lo: f64, hi: f64) -> impl Iterator<Item = &(f64, f64)> {
        self.atoms.iter().filter(move |(l, _)| *l >= lo && *l < hi)
    }

    /// Σ|w| over atoms in `[lo, hi)` plus ∫|density|.
    pub fn total_variation(&self, lo: f64, hi: f64) -> Result<f64> {
        let atoms: f64 = self.atoms_in(lo, hi).map(|a| a.1.abs()).sum();
        let cont = match &self.density {
            None => 0.0,
            Some(d) => integrate_density(d, |x| d.eval(x).abs(), lo, hi)?,
        };
        Ok(atoms + cont)
    }

    /// Total mass of the density part (may be infinite).
    pub fn continuous_mass(&self) -> f64 {
        match &self.density {
            None => 0.0,
            Some(d) => {
                let (lo, hi) = d.support;
                if !(lo.is_finite() && hi.is_finite()) {
                    f64::INFINITY
                } else {
                    integrate_density(d, |x| d.eval(x).abs(), lo, hi).unwrap_or(f64::INFINITY)
                }
            }
        }
    }

    /// Every location where the measure is not smooth: atoms, support ends, density breaks.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self.atoms.iter().map(|a| a.0).collect();
        if let Some(d) = &self.density {
            out.extend(d.breakpoints());
        }
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    }

    /// Sum of two measures; coinciding atoms merge.
    pub fn plus(&self, other: &RadonMeasure) -> Result<RadonMeasure> {
        let mut atoms = self.atoms.clone();
        for &(l, w) in &other.atoms {
            match atoms.iter_mut().find(|a| a.0 == l) {
                Some(a) => a.1 += w,
                None => atoms.push((l, w)),
            }
        }
        let density = match (&self.density, &other.density) {
            (None, None) => None,
            (Some(d), None) | (None, Some(d)) => Some(d.clone()),
            (Some(a), Some(b)) => {
                let (fa, fb) = (a.clone(), b.clone());
                let lo = a.support.0.min(b.support.0);
                let hi = a.support.1.max(b.support.1);
                let mut breaks = a.breakpoints();
                breaks.extend(b.breakpoints());
                let constant = match (a.constant, b.constant) {
                    (Some(x), Some(y)) if a.support == b.support => Some(x + y),
                    _ => None,
                };
                Some(Density {
                    f: Arc::new(move |x| fa.eval(x) + fb.eval(x)),
                    support: (lo, hi),
                    breaks: breaks.into_iter().filter(|&x| x > lo && x < hi).collect(),
                    constant,
                })
            }
        };
        RadonMeasure::from_parts(atoms, density)
    }

    /// Weights `w_j` with `Σ w_j f(a_j) ≈ ∫ f dm` over `[levels[0], levels[last]]`
    /// for `f` interpolated piecewise linearly between levels. Atoms inside
    /// the range must sit on a level.
    pub fn grid_weights(&self, levels: &[f64]) -> Result<Vec<f64>> {
        if levels.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::contract("levels must be strictly increasing"));
        }
        let mut w = vec![0.0; levels.len()];
        if levels.is_empty() {
            return Ok(w);
        }
        let (lo, hi) = (levels[0], levels[levels.len() - 1]);
        for &(loc, weight) in &self.atoms {
            if loc < lo || loc > hi {
                continue;
            }
            let k = levels
                .binary_search_by(|x| x.total_cmp(&loc))
                .map_err(|_| Error::contract(format!("atom at {loc} is not a grid level")))?;
            w[k] += weight;
        }
        if let Some(d) = &self.density {
            let breaks = d.breakpoints();
            for j in 0..levels.len() - 1 {
                let (a, b) = (levels[j], levels[j + 1]);
                let (s0, s1) = d.support;
                if b <= s0 || a >= s1 {
                    continue;
                }
                let h = b - a;
                if let Some(c) = d.constant {
                    if a >= s0 && b <= s1 {
                        w[j] += 0.5 * c * h;
                        w[j + 1] += 0.5 * c * h;
                        continue;
                    }
                }
                let mut cuts = vec![a.max(s0)];
                cuts.extend(breaks.iter().copied().filter(|&x| x > a && x < b));
                cuts.push(b.min(s1));
                for p in cuts.windows(2) {
                    w[j] += quad::gauss8(|x| d.eval(x) * (b - x) / h, p[0], p[1]);
                    w[j + 1] += quad::gauss8(|x| d.eval(x) * (x - a) / h, p[0], p[1]);
                }
            }
        }
        Ok(w)
    }
}

fn integrate_density(d: &Density, g: impl Fn(f64) -> f64, lo: f64, hi: f64) -> Result<f64> {
    let a = lo.max(d.support.0);
    let b = hi.min(d.support.1);
    if a >= b {
        return Ok(0.0);
    }
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::contract("integral of an unbounded density over an unbounded interval"));
    }
    let mut cuts = vec![a];
    cuts.extend(d.breaks.iter().copied().filter(|&x| x > a && x < b));
    cuts.push(b);
    let mut total = 0.0;
    for p in cuts.windows(2) {
        let (v, _) = quad::adaptive(&g, p[0], p[1], QUAD_REL_TOL, QUAD_MAX_DEPTH);
        total += v;
    }
    Ok(total)
}

/// `∫_{[lo,hi)} f dm`: atom sum plus adaptive quadrature of `f·density`.
pub fn measure_integrate(f: impl Fn(f64) -> f64, m: &RadonMeasure, lo: f64, hi: f64) -> Result<f64> {
    if hi < lo {
        return Err(Error::contract("interval with hi < lo"));
    }
    let mut total = 0.0;
    for (k, &(loc, w)) in m.atoms_in(lo, hi).enumerate() {
        let v = f(loc);
        if !v.is_finite() {
            return Err(Error::numeric(k, format!("integrand at atom {loc}")));
        }
        total += v * w;
    }
    if let Some(d) = &m.density {
        let cont = integrate_density(d, |x| f(x) * d.eval(x), lo, hi)?;
        if !cont.is_finite() {
            return Err(Error::numeric(0, "integrand is not finite on the density support"));
        }
        total += cont;
    }
    Ok(total)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jump {
    pub loc: f64,
    pub left: f64,
    pub right: f64,
}

/// A function of bounded variation with its jump locations declared.
#[derive(Clone)]
pub struct BVFunction {
    eval: Fn1,
    jumps: Vec<Jump>,
    derivative: Option<Fn1>,
}

impl fmt::Debug for BVFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BVFunction")
            .field("jumps", &self.jumps)
            .field("has_derivative", &self.derivative.is_some())
            .finish()
    }
}

impl BVFunction {
    pub fn new(eval: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            eval: Arc::new(eval),
            jumps: Vec::new(),
            derivative: None,
        }
    }

    /// Continuous function with a known derivative.
    pub fn smooth(
        eval: impl Fn(f64) -> f64 + Send + Sync + 'static,
        derivative: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            eval: Arc::new(eval),
            jumps: Vec::new(),
            derivative: Some(Arc::new(derivative)),
        }
    }

    /// Derivative of the continuous part (jumps excluded).
    pub fn with_derivative(mut self, d: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        self.derivative = Some(Arc::new(d));
        self
    }

    pub fn with_jump(mut self, loc: f64, left: f64, right: f64) -> Self {
        self.jumps.push(Jump { loc, left, right });
        self.jumps.sort_by(|a, b| a.loc.total_cmp(&b.loc));
        self
    }

    /// `left` below `loc`, `right` from `loc` on (right-continuous step).
    pub fn step(loc: f64, left: f64, right: f64) -> Self {
        Self::new(move |x| if x >= loc { right } else { left })
            .with_jump(loc, left, right)
            .with_derivative(|_| 0.0)
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        (self.eval)(x)
    }

    pub fn jumps(&self) -> &[Jump] {
        &self.jumps
    }

    pub fn derivative(&self) -> Option<&Fn1> {
        self.derivative.as_ref()
    }

    /// Checks the stored one-sided values against the evaluator.
    pub fn check_breakpoints(&self, tol: f64) -> Result<()> {
        for j in &self.jumps {
            let h = 1e-9 * (1.0 + j.loc.abs());
            let l = self.eval(j.loc - h);
            let r = self.eval(j.loc + h);
            if (l - j.left).abs() > tol || (r - j.right).abs() > tol {
                return Err(Error::contract(format!(
                    "jump at {} declared ({}, {}) but evaluates to ({l}, {r})",
                    j.loc, j.left, j.right
                )));
            }
        }
        Ok(())
    }

    fn jump_nodes(&self, lo: f64, hi: f64) -> Vec<f64> {
        let mut nodes = vec![lo];
        nodes.extend(self.jumps.iter().map(|j| j.loc).filter(|&x| x > lo && x < hi));
        nodes.push(hi);
        nodes
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Side {
    Left,
    Right,
}

const MIN_LEVEL: u32 = 4;
const MAX_LEVEL: u32 = 20;

/// Partition of `[lo, hi]` into `2^level` cells per jump-free piece.
fn refined_nodes(pieces: &[f64], level: u32) -> Vec<f64> {
    let k = 1usize << level;
    let mut out = Vec::with_capacity(pieces.len() * k);
    for w in pieces.windows(2) {
        let (a, b) = (w[0], w[1]);
        let h = (b - a) / k as f64;
        for i in 0..k {
            out.push((i as f64).mul_add(h, a));
        }
    }
    out.push(pieces[pieces.len() - 1]);
    out
}

pub fn total_variation(g: &BVFunction, lo: f64, hi: f64) -> Result<f64> {
    if !(lo.is_finite() && hi.is_finite()) || hi < lo {
        return Err(Error::contract("total variation needs a compact interval"));
    }
    if lo == hi {
        return Ok(0.0);
    }
    if let Some(d) = &g.derivative {
        let mut tv = 0.0;
        let nodes = g.jump_nodes(lo, hi);
        for w in nodes.windows(2) {
            let (v, _) = quad::adaptive(|x| d(x).abs(), w[0], w[1], QUAD_REL_TOL, QUAD_MAX_DEPTH);
            tv += v;
        }
        for j in g.jumps.iter().filter(|j| j.loc >= lo && j.loc <= hi) {
            let at = g.eval(j.loc);
            if j.loc > lo {
                tv += (at - j.left).abs();
            }
            if j.loc < hi {
                tv += (j.right - at).abs();
            }
        }
        return Ok(tv);
    }
    let pieces = g.jump_nodes(lo, hi);
    let mut prev = f64::NAN;
    let mut growth = Vec::new();
    for level in MIN_LEVEL..=MAX_LEVEL {
        let nodes = refined_nodes(&pieces, level);
        let vals: Vec<f64> = nodes.iter().map(|&x| g.eval(x)).collect();
        let v: f64 = vals.windows(2).map(|w| (w[1] - w[0]).abs()).sum();
        if !v.is_finite() {
            return Err(Error::VariationUnbounded("non-finite partition sum".into()));
        }
        if prev.is_finite() {
            let d = v - prev;
            if d.abs() <= 1e-10 * (1.0 + v.abs()) {
                return Ok(v);
            }
            growth.push(v / prev.max(1e-300));
        }
        prev = v;
    }
    // a BV function's partition sums settle; sums growing by a roughly
    // constant factor per level do not
    let tail = &growth[growth.len().saturating_sub(4)..];
    if tail.iter().all(|&r| r > 1.05) {
        return Err(Error::VariationUnbounded(format!(
            "partition sums still growing ({:.3}x per level) at depth 2^{MAX_LEVEL}",
            tail[tail.len() - 1]
        )));
    }
    Ok(prev)
}

/// `∫_{[lo,hi]} f dg`, with `f` sampled at the left or right end of each cell.
pub fn stieltjes_integrate(f: impl Fn(f64) -> f64, g: &BVFunction, lo: f64, hi: f64, side: Side) -> Result<f64> {
    if !(lo.is_finite() && hi.is_finite()) || hi < lo {
        return Err(Error::contract("Stieltjes integral needs a compact interval"));
    }
    if lo == hi {
        return Ok(0.0);
    }
    if let Some(d) = &g.derivative {
        let nodes = g.jump_nodes(lo, hi);
        let mut total = 0.0;
        for w in nodes.windows(2) {
            let (v, _) = quad::adaptive(|x| f(x) * d(x), w[0], w[1], QUAD_REL_TOL, QUAD_MAX_DEPTH);
            total += v;
        }
        for j in g.jumps.iter().filter(|j| j.loc >= lo && j.loc <= hi) {
            let at = g.eval(j.loc);
            let fl = f(j.loc);
            if j.loc > lo {
                total += fl * (at - j.left);
            }
            if j.loc < hi {
                let fr = match side {
                    Side::Left => fl,
                    Side::Right => f(j.loc + 1e-12 * (1.0 + j.loc.abs())),
                };
                total += fr * (j.right - at);
            }
        }
        return Ok(total);
    }
    let pieces = g.jump_nodes(lo, hi);
    let mut prev_s = f64::NAN;
    let mut prev_x = f64::NAN;
    for level in MIN_LEVEL..=MAX_LEVEL {
        let nodes = refined_nodes(&pieces, level);
        let gv: Vec<f64> = nodes.iter().map(|&x| g.eval(x)).collect();
        let mut s = 0.0;
        let mut var = 0.0;
        for i in 0..nodes.len() - 1 {
            let x = match side {
                Side::Left => nodes[i],
                Side::Right => nodes[i + 1],
            };
            let dg = gv[i + 1] - gv[i];
            s += f(x) * dg;
            var += dg.abs();
        }
        if !s.is_finite() || !var.is_finite() {
            return Err(Error::VariationUnbounded("non-finite Riemann–Stieltjes sum".into()));
        }
        // first-order error in the mesh, so extrapolate
        let x = if prev_s.is_finite() { 2.0 * s - prev_s } else { s };
        if prev_x.is_finite() && (x - prev_x).abs() <= 1e-10 * (1.0 + x.abs()) {
            return Ok(x);
        }
        prev_s = s;
        prev_x = x;
    }
    total_variation(g, lo, hi)?;
    Ok(prev_x)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rect {
    pub t_lo: f64,
    pub t_hi: f64,
    pub a_lo: f64,
    pub a_hi: f64,
}

impl Rect {
    pub fn new(t_lo: f64, t_hi: f64, a_lo: f64, a_hi: f64) -> Result<Self> {
        if !(t_lo < t_hi && a_lo < a_hi) {
            return Err(Error::contract(format!(
                "degenerate rectangle ({t_lo},{t_hi}]x({a_lo},{a_hi}]"
            )));
        }
        Ok(Self { t_lo, t_hi, a_lo, a_hi })
    }

    /// `H(t_hi,a_hi) - H(t_lo,a_hi) - H(t_hi,a_lo) + H(t_lo,a_lo)`.
    pub fn increment(&self, h: impl Fn(f64, f64) -> f64) -> f64 {
        h(self.t_hi, self.a_hi) - h(self.t_lo, self.a_hi) - h(self.t_hi, self.a_lo) + h(self.t_lo, self.a_lo)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct VitaliOptions {
    pub tol: f64,
    pub min_depth: u32,
    pub max_depth: u32,
    /// Richardson step on successive levels (first-order mesh error).
    pub extrapolate: bool,
}

impl Default for VitaliOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            min_depth: 2,
            max_depth: 11,
            extrapolate: true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VitaliResult {
    pub value: f64,
    pub depth: u32,
    /// Last successive-level difference.
    pub change: f64,
    /// Σ|rectangle increments| at the final depth.
    pub variation: f64,
}

/// Two-parameter Stieltjes integral `∬ φ dH` over `rect`, by dyadic product
/// partitions with φ at the lower-left corner of each cell.
pub fn vitali_integrate(
    phi: impl Fn(f64, f64) -> f64,
    h: impl Fn(f64, f64) -> f64,
    rect: Rect,
    opts: VitaliOptions,
) -> Result<VitaliResult> {
    let mut prev_s = f64::NAN;
    let mut prev_x = f64::NAN;
    let mut variations: Vec<f64> = Vec::new();
    let mut last = VitaliResult {
        value: f64::NAN,
        depth: 0,
        change: f64::INFINITY,
        variation: 0.0,
    };
    for depth in opts.min_depth..=opts.max_depth {
        let k = 1usize << depth;
        let ts: Vec<f64> = (0..=k).map(|i| rect.t_lo + (rect.t_hi - rect.t_lo) * i as f64 / k as f64).collect();
        let as_: Vec<f64> = (0..=k).map(|j| rect.a_lo + (rect.a_hi - rect.a_lo) * j as f64 / k as f64).collect();
        let mut hv = vec![0.0; (k + 1) * (k + 1)];
        for i in 0..=k {
            for j in 0..=k {
                hv[i * (k + 1) + j] = h(ts[i], as_[j]);
            }
        }
        // increments at rounding level of H count as zero
        let floor = 16.0 * f64::EPSILON * hv.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut s = 0.0;
        let mut var = 0.0;
        for i in 0..k {
            for j in 0..k {
                let r = i * (k + 1) + j;
                let inc = hv[r + k + 2] - hv[r + 1] - hv[r + k + 1] + hv[r];
                if inc.abs() > floor {
                    s += phi(ts[i], as_[j]) * inc;
                    var += inc.abs();
                }
            }
        }
        if !s.is_finite() {
            return Err(Error::VariationUnbounded("non-finite rectangle sum".into()));
        }
        variations.push(var);
        let x = if opts.extrapolate && prev_s.is_finite() { 2.0 * s - prev_s } else { s };
        let change = if prev_x.is_finite() { (x - prev_x).abs() } else { f64::INFINITY };
        last = VitaliResult {
            value: x,
            depth,
            change,
            variation: var,
        };
        if change <= opts.tol * (1.0 + x.abs()) && variations.len() >= 3 && !growing(&variations) {
            return Ok(last);
        }
        prev_s = s;
        prev_x = x;
    }
    if growing(&variations) {
        let n = variations.len();
        return Err(Error::VariationUnbounded(format!(
            "rectangle variation keeps growing: {:.3e} at depth {}",
            variations[n - 1], opts.max_depth
        )));
    }
    Ok(last)
}

fn growing(variations: &[f64]) -> bool {
    let n = variations.len();
    n >= 3 && variations[n - 1] > 1.3 * variations[n - 2] && variations[n - 2] > 1.3 * variations[n - 3]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integrate_examples() {
        let one = |_| 1.0;
        assert_eq!(measure_integrate(one, &RadonMeasure::dirac(0.0), -1.0, 1.0).unwrap(), 1.0);
        let v = measure_integrate(|x| x, &RadonMeasure::lebesgue(), 0.0, 1.0).unwrap();
        assert!((v - 0.5).abs() < 1e-12);
        let m = RadonMeasure::lebesgue().with_atom(0.0, 0.5).unwrap();
        let v = measure_integrate(one, &m, -1.0, 1.0).unwrap();
        assert!((v - 2.5).abs() < 1e-12);
    }

    #[test]
    fn half_open_atoms() {
        let m = RadonMeasure::dirac(1.0);
        assert_eq!(measure_integrate(|_| 1.0, &m, 0.0, 1.0).unwrap(), 0.0);
        assert_eq!(measure_integrate(|_| 1.0, &m, 1.0, 2.0).unwrap(), 1.0);
    }

    #[test]
    fn atom_query_exact() {
        let m = RadonMeasure::from_parts(vec![(0.5, 0.25), (-1.0, 2.0)], None).unwrap();
        assert_eq!(m.atom(0.5), 0.25);
        assert_eq!(m.atom(-1.0), 2.0);
        assert_eq!(m.atom(0.4999999), 0.0);
        assert_eq!(m.atoms()[0].0, -1.0);
        assert!(RadonMeasure::from_parts(vec![(0.0, 1.0), (0.0, 2.0)], None).is_err());
    }

    #[test]
    fn non_finite_integrand_errors() {
        let e = measure_integrate(|x| 1.0 / x, &RadonMeasure::dirac(0.0), -1.0, 1.0);
        assert!(matches!(e, Err(Error::NumericDomain { .. })));
    }

    #[test]
    fn measure_tv_and_weights() {
        let m = RadonMeasure::from_parts(vec![(0.0, -0.5)], Some(Density::new(|x: f64| x.sin(), 0.0, 3.0))).unwrap();
        let tv = m.total_variation(-1.0, 4.0).unwrap();
        let exact = 0.5 + (1.0 - 3f64.cos());
        assert!((tv - exact).abs() < 1e-9);
        let levels: Vec<f64> = (0..=16).map(|i| -1.0 + 0.25 * i as f64).collect();
        let w = RadonMeasure::lebesgue().grid_weights(&levels).unwrap();
        assert!((w.iter().sum::<f64>() - 4.0).abs() < 1e-12);
        assert_eq!(w[0], 0.125);
        assert!(RadonMeasure::dirac(0.1).grid_weights(&levels).is_err());
    }

    #[test]
    fn tv_examples() {
        let id = BVFunction::smooth(|x| x, |_| 1.0);
        assert!((total_variation(&id, 0.0, 1.0).unwrap() - 1.0).abs() < 1e-12);
        let abs = BVFunction::new(|x: f64| x.abs());
        assert!((total_variation(&abs, -1.0, 1.0).unwrap() - 2.0).abs() < 1e-9);
        let step = BVFunction::step(0.0, 0.0, 1.0);
        assert!((total_variation(&step, -1.0, 1.0).unwrap() - 1.0).abs() < 1e-12);
        let step_raw = BVFunction::new(|x| if x >= 0.0 { 1.0 } else { 0.0 }).with_jump(0.0, 0.0, 1.0);
        assert!((total_variation(&step_raw, -1.0, 1.0).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tv_detects_unbounded() {
        // Weierstrass-type sum: partition sums grow by about sqrt(2) per level
        let g = BVFunction::new(|x: f64| (0..40).map(|k| 2f64.powf(-0.5 * k as f64) * (2f64.powi(k) * std::f64::consts::PI * x).cos()).sum::<f64>());
        assert!(matches!(total_variation(&g, 0.0, 1.0), Err(Error::VariationUnbounded(_))));
    }

    #[test]
    fn stieltjes_examples() {
        let id = BVFunction::smooth(|x| x, |_| 1.0);
        assert!((stieltjes_integrate(|_| 1.0, &id, 0.0, 1.0, Side::Left).unwrap() - 1.0).abs() < 1e-12);
        let step = BVFunction::step(0.0, 0.0, 1.0);
        let v = stieltjes_integrate(|x: f64| x.cos() + 2.0, &step, -1.0, 1.0, Side::Left).unwrap();
        assert!((v - 3.0).abs() < 1e-12);
        let sq = BVFunction::new(|x| x * x);
        let v = stieltjes_integrate(|x| x, &sq, 0.0, 1.0, Side::Left).unwrap();
        // brute-force refinement until successive sums differ by < 1e-8
        let oracle = {
            let mut n = 16usize;
            let mut prev = f64::NAN;
            loop {
                let h = 1.0 / n as f64;
                let s: f64 = (0..n)
                    .map(|i| {
                        let x0 = i as f64 * h;
                        let x1 = x0 + h;
                        0.5 * (x0 + x1) * (x1 * x1 - x0 * x0)
                    })
                    .sum();
                if (s - prev).abs() < 1e-8 {
                    break s;
                }
                prev = s;
                n *= 2;
            }
        };
        assert!((v - oracle).abs() < 1e-7, "{v} vs {oracle}");
    }

    #[test]
    fn stieltjes_matches_measure_for_smooth_g() {
        let g = BVFunction::smooth(|x: f64| x.sin(), |x: f64| x.cos());
        let f = |x: f64| (x * x + 1.0).ln();
        let s = stieltjes_integrate(f, &g, -0.5, 2.0, Side::Left).unwrap();
        let m = RadonMeasure::from_parts(vec![], Some(Density::new(|x: f64| x.cos(), -0.5, 2.0))).unwrap();
        let v = measure_integrate(f, &m, -0.5, 2.0).unwrap();
        assert!((s - v).abs() < 1e-8);
        // same integral without the declared derivative
        let raw = BVFunction::new(|x: f64| x.sin());
        let r = stieltjes_integrate(f, &raw, -0.5, 2.0, Side::Left).unwrap();
        assert!((r - v).abs() < 1e-7, "{r} vs {v}");
    }

    #[test]
    fn vitali_examples() {
        let unit = Rect::new(0.0, 1.0, 0.0, 1.0).unwrap();
        let o = VitaliOptions::default();
        let r = vitali_integrate(|_, _| 1.0, |t, a| t * a, unit, o).unwrap();
        assert!((r.value - 1.0).abs() < 1e-12);
        let r = vitali_integrate(|t, a| t + a * a, |t: f64, a: f64| t.exp() + a.sin(), unit, o).unwrap();
        assert!(r.value.abs() < 1e-12);
        let r = vitali_integrate(|_, _| 1.0, |t: f64, a: f64| t.min(a), unit, o).unwrap();
        assert!((r.value - 1.0).abs() < 1e-9);
        assert!(Rect::new(1.0, 1.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn vitali_unbounded() {
        // product of two Weierstrass-type functions: rectangle variation doubles per level
        let w = |x: f64| (0..40).map(|k| 2f64.powf(-0.5 * k as f64) * (2f64.powi(k) * std::f64::consts::PI * x).cos()).sum::<f64>();
        let opts = VitaliOptions {
            tol: 1e-14,
            min_depth: 2,
            max_depth: 8,
            extrapolate: false,
        };
        let e = vitali_integrate(|_, _| 1.0, |t, a| w(t) * w(a), Rect::new(0.0, 1.0, 0.0, 1.0).unwrap(), opts);
        assert!(matches!(e, Err(Error::VariationUnbounded(_))), "{e:?}");
    }
}
