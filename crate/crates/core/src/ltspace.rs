//! The local time-space integral Λ(H) in its simple, time-density,
//! space-density, Vitali and shifted-curve forms.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::localtime::{local_time_field, tanaka_increment, uniform_levels, LocalTimeField, SideConvention};
use crate::measure::{measure_integrate, total_variation, BVFunction, Fn2, RadonMeasure, Rect};
use crate::pathsim::SamplePath;
use crate::quad;

#[derive(Clone)]
pub struct TimeDensity {
    pub h: Fn2,
    pub mu: RadonMeasure,
}

#[derive(Clone)]
pub struct SpaceDensity {
    pub g: Fn2,
    pub nu: RadonMeasure,
}

/// `H(t, a)` with whichever density structures the caller can supply.
#[derive(Clone)]
pub struct TimeSpaceFunction {
    eval: Fn2,
    time_density: Option<TimeDensity>,
    space_density: Option<SpaceDensity>,
    vitali: bool,
    check_box: ((f64, f64), (f64, f64)),
}

const LATTICE: usize = 17;

impl TimeSpaceFunction {
    pub fn new(eval: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            eval: Arc::new(eval),
            time_density: None,
            space_density: None,
            vitali: false,
            check_box: ((0.0, 1.0), (-2.0, 2.0)),
        }
    }

    /// Box `[t0,t1] x [a0,a1]` sampled when densities are attached.
    pub fn with_check_box(mut self, t: (f64, f64), a: (f64, f64)) -> Self {
        self.check_box = (t, a);
        self
    }

    /// Attach `h, μ` with `H(t,a) - H(s,a) = ∫_[s,t) h(u,a) dμ(u)`; checked on
    /// a 17x17 lattice.
    pub fn with_time_density(mut self, h: impl Fn(f64, f64) -> f64 + Send + Sync + 'static, mu: RadonMeasure) -> Result<Self> {
        let h: Fn2 = Arc::new(h);
        let ((t0, t1), (a0, a1)) = self.check_box;
        for j in 0..LATTICE {
            let a = lattice(a0, a1, j);
            for i in 1..LATTICE {
                let t = lattice(t0, t1, i);
                let lhs = (self.eval)(t, a) - (self.eval)(t0, a);
                let rhs = measure_integrate(|u| h(u, a), &mu, t0, t)?;
                if (lhs - rhs).abs() > 1e-6 * (1.0 + lhs.abs()) {
                    return Err(Error::contract(format!(
                        "time density inconsistent with H at (t={t}, a={a}): {lhs} vs {rhs}"
                    )));
                }
            }
        }
        self.time_density = Some(TimeDensity { h, mu });
        Ok(self)
    }

    /// Attach `g, ν` with `H(t,y) - H(t,x) = ∫_[x,y) g(t,a) dν(a)`; checked on
    /// a 17x17 lattice.
    pub fn with_space_density(mut self, g: impl Fn(f64, f64) -> f64 + Send + Sync + 'static, nu: RadonMeasure) -> Result<Self> {
        let g: Fn2 = Arc::new(g);
        let ((t0, t1), (a0, a1)) = self.check_box;
        for i in 0..LATTICE {
            let t = lattice(t0, t1, i);
            for j in 1..LATTICE {
                let a = lattice(a0, a1, j);
                let lhs = (self.eval)(t, a) - (self.eval)(t, a0);
                let rhs = measure_integrate(|x| g(t, x), &nu, a0, a)?;
                if (lhs - rhs).abs() > 1e-6 * (1.0 + lhs.abs()) {
                    return Err(Error::contract(format!(
                        "space density inconsistent with H at (t={t}, a={a}): {lhs} vs {rhs}"
                    )));
                }
            }
        }
        self.space_density = Some(SpaceDensity { g, nu });
        Ok(self)
    }

    /// Declare locally bounded Vitali variation.
    pub fn with_vitali(mut self) -> Self {
        self.vitali = true;
        self
    }

    #[inline]
    pub fn eval(&self, t: f64, a: f64) -> f64 {
        (self.eval)(t, a)
    }

    pub fn time_density(&self) -> Option<&TimeDensity> {
        self.time_density.as_ref()
    }

    pub fn space_density(&self) -> Option<&SpaceDensity> {
        self.space_density.as_ref()
    }

    pub fn is_vitali(&self) -> bool {
        self.vitali
    }

    pub fn representations(&self) -> Vec<Representation> {
        let mut r = Vec::new();
        if self.time_density.is_some() {
            r.push(Representation::TimeDensity);
        }
        if self.space_density.is_some() {
            r.push(Representation::SpaceDensity);
        }
        if self.vitali {
            r.push(Representation::Vitali);
        }
        r
    }

    /// `c·H`, with densities scaled alongside.
    pub fn scaled(&self, c: f64) -> Self {
        let e = self.eval.clone();
        Self {
            eval: Arc::new(move |t, a| c * e(t, a)),
            time_density: self.time_density.as_ref().map(|d| {
                let h = d.h.clone();
                TimeDensity {
                    h: Arc::new(move |t, a| c * h(t, a)),
                    mu: d.mu.clone(),
                }
            }),
            space_density: self.space_density.as_ref().map(|d| {
                let g = d.g.clone();
                SpaceDensity {
                    g: Arc::new(move |t, a| c * g(t, a)),
                    nu: d.nu.clone(),
                }
            }),
            vitali: self.vitali,
            check_box: self.check_box,
        }
    }
}

fn lattice(lo: f64, hi: f64, i: usize) -> f64 {
    lo + (hi - lo) * i as f64 / (LATTICE - 1) as f64
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Representation {
    Simple,
    TimeDensity,
    SpaceDensity,
    Vitali,
    Shifted,
}

impl Representation {
    pub fn name(self) -> &'static str {
        match self {
            Representation::Simple => "simple",
            Representation::TimeDensity => "time_density",
            Representation::SpaceDensity => "space_density",
            Representation::Vitali => "vitali",
            Representation::Shifted => "shifted",
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LtsDiagnostics {
    /// Refinement depth (u-panels for time density, dyadic depth for Vitali).
    pub depth: u32,
    pub error_estimate: f64,
    pub notes: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LtsResult {
    pub value: f64,
    pub representation: Representation,
    pub diagnostics: LtsDiagnostics,
}

#[derive(Clone, Copy, Debug)]
pub struct LtsOptions {
    /// Spacing of the level grid used for space integrals.
    pub level_spacing: f64,
    /// Number of u-panels for the μ-integral of the time-density form.
    pub u_panels: usize,
    pub vitali_tol: f64,
    pub vitali_max_depth: u32,
}

impl Default for LtsOptions {
    fn default() -> Self {
        Self {
            level_spacing: 1.0 / 256.0,
            u_panels: 128,
            vitali_tol: 1e-4,
            vitali_max_depth: 12,
        }
    }
}

/// `2[F(X_t) - F(X_0) - Σ f(X_i)ΔX_i]` at node `node`, with `F` the
/// antiderivative of `f` anchored at `X_0`.
pub fn bouleau_yor(f: impl Fn(f64) -> f64, x: &SamplePath, node: usize) -> Result<f64> {
    let v = x.values();
    if node >= v.len() {
        return Err(Error::contract(format!("node {node} beyond path end")));
    }
    let mut ito = 0.0;
    for i in 0..node {
        let fi = f(v[i]);
        if !fi.is_finite() {
            return Err(Error::numeric(i, format!("f({}) is not finite", v[i])));
        }
        ito += fi * (v[i + 1] - v[i]);
    }
    let anti = antiderivative(&f, v[0], v[node]);
    if !anti.is_finite() {
        return Err(Error::numeric(node, "antiderivative is not finite"));
    }
    Ok(2.0 * (anti - ito))
}

fn antiderivative(f: &impl Fn(f64) -> f64, from: f64, to: f64) -> f64 {
    if from == to {
        return 0.0;
    }
    let (lo, hi, sign) = if from < to { (from, to, 1.0) } else { (to, from, -1.0) };
    sign * quad::adaptive(f, lo, hi, 1e-12, 40).0
}

/// Λ of a finite sum of `coeff · 1_(s,t] 1_(x,y]` with corners on the field grid.
pub fn lts_simple(terms: &[(Rect, f64)], field: &LocalTimeField) -> Result<f64> {
    let g = field.tgrid();
    let node = |t: f64| {
        g.node_exact(t)
            .ok_or_else(|| Error::contract(format!("time {t} is not a grid node")))
    };
    let level = |a: f64| {
        field
            .level_index(a)
            .ok_or_else(|| Error::contract(format!("level {a} is not a field level")))
    };
    let mut total = 0.0;
    for (r, c) in terms {
        let (s, t) = (node(r.t_lo)?, node(r.t_hi)?);
        let (x, y) = (level(r.a_lo)?, level(r.a_hi)?);
        total += c * (field.value(t, y) - field.value(s, y) - field.value(t, x) + field.value(s, x));
    }
    Ok(total)
}

/// `-(BY(H(T,·)) - ∫_[0,T) BY_u(h(u,·)) dμ(u))`. The μ-integral runs over a
/// uniform u-grid snapped to path nodes (hat-function weights for the
/// continuous part of μ), plus exact atom terms.
///
/// [`bouleau_yor`] returns `-∫ f(a) d_a L^a` in the Stieltjes sense, hence
/// the outer minus: with it an indicator rectangle gives the four-term
/// local-time combination.
pub fn lts_time_density(hf: &TimeSpaceFunction, x: &SamplePath, t_end: f64, opts: &LtsOptions) -> Result<LtsResult> {
    let td = hf
        .time_density
        .as_ref()
        .ok_or(Error::RepresentationUnavailable("time density"))?;
    let grid = *x.grid();
    let k_end = grid.node_at_or_before(t_end);
    let t_end = grid.time(k_end);
    let mut diag = LtsDiagnostics::default();

    let head = bouleau_yor(|a| hf.eval(t_end, a), x, k_end)?;

    let by_at = |k: usize, u: f64| bouleau_yor(|a| (td.h)(u, a), x, k);

    let mut atoms = 0.0;
    for &(u, w) in td.mu.atoms() {
        if u == t_end {
            diag.notes.push(format!("μ-atom at T={u} excluded"));
            continue;
        }
        if u >= grid.t0 && u < t_end {
            atoms += w * by_at(grid.node_at_or_before(u), u)?;
        }
    }

    let mut cont = 0.0;
    if td.mu.has_density() && k_end > 0 {
        let m = opts.u_panels.max(2).min(k_end);
        let nodes: Vec<usize> = (0..=m).map(|i| (i * k_end + m / 2) / m).collect();
        let us: Vec<f64> = nodes.iter().map(|&k| grid.time(k)).collect();
        let density_only = RadonMeasure::from_parts(Vec::new(), td.mu.density().cloned())?;
        let w = density_only.grid_weights(&us)?;
        let mut vals = vec![0.0; nodes.len()];
        for (i, (&k, &u)) in nodes.iter().zip(&us).enumerate() {
            if w[i] != 0.0 || i % 2 == 0 {
                vals[i] = by_at(k, u)?;
            }
        }
        cont = w.iter().zip(&vals).map(|(a, b)| a * b).sum::<f64>();
        // coarse estimate on every other node
        let half: Vec<f64> = us.iter().step_by(2).copied().collect();
        if half.len() >= 2 && *half.last().unwrap() == *us.last().unwrap() {
            let wh = density_only.grid_weights(&half)?;
            let coarse: f64 = wh.iter().zip(vals.iter().step_by(2)).map(|(a, b)| a * b).sum();
            diag.error_estimate = (coarse - cont).abs() / 3.0;
        }
        diag.depth = m as u32;
    }
    let value = -(head - atoms - cont);
    finite(value, Representation::TimeDensity)?;
    Ok(LtsResult {
        value,
        representation: Representation::TimeDensity,
        diagnostics: diag,
    })
}

fn finite(v: f64, r: Representation) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::numeric(0, format!("{} value is not finite", r.name())))
    }
}

/// Level grid for space integrals over a path: uniform spacing over the path
/// range plus the atoms of `nu` inside it.
pub fn levels_for(x: &SamplePath, nu: &RadonMeasure, spacing: f64) -> Vec<f64> {
    let (lo, hi) = x.min_max();
    let atoms: Vec<f64> = nu
        .atoms()
        .iter()
        .map(|a| a.0)
        .filter(|&a| a >= lo - spacing && a <= hi + spacing)
        .collect();
    uniform_levels(lo, hi, spacing, &atoms)
}

/// `t ↦ Λ_t(H)` at nodes `0..=k_end` in the space-density form, on an
/// existing field whose levels include every atom of ν in range.
pub fn space_density_process(hf: &TimeSpaceFunction, field: &LocalTimeField, k_end: usize) -> Result<Vec<f64>> {
    let sd = hf
        .space_density
        .as_ref()
        .ok_or(Error::RepresentationUnavailable("space density"))?;
    let levels = field.levels();
    let w = sd.nu.grid_weights(levels)?;
    let tg = field.tgrid();
    let mut acc = vec![0.0; k_end + 1];
    for (j, &wj) in w.iter().enumerate() {
        if wj == 0.0 {
            continue;
        }
        let a = levels[j];
        for (step, dl) in field.increments(j) {
            if step >= k_end {
                break;
            }
            let g = (sd.g)(tg.time(step), a);
            if !g.is_finite() {
                return Err(Error::numeric(step, format!("g(t, {a}) is not finite")));
            }
            acc[step + 1] -= wj * g * dl;
        }
    }
    prefix_sum(&mut acc);
    Ok(acc)
}

fn prefix_sum(v: &mut [f64]) {
    for i in 1..v.len() {
        v[i] += v[i - 1];
    }
}

/// `-∫ ∫_0^T g(u,a) d_u L^a_u dν(a)` on a freshly built right local-time field.
pub fn lts_space_density(hf: &TimeSpaceFunction, x: &SamplePath, t_end: f64, opts: &LtsOptions) -> Result<LtsResult> {
    let sd = hf
        .space_density
        .as_ref()
        .ok_or(Error::RepresentationUnavailable("space density"))?;
    let levels = levels_for(x, &sd.nu, opts.level_spacing);
    let field = local_time_field(x, &levels, SideConvention::Right)?;
    lts_space_density_field(hf, &field, t_end)
}

pub fn lts_space_density_field(hf: &TimeSpaceFunction, field: &LocalTimeField, t_end: f64) -> Result<LtsResult> {
    let k_end = field.tgrid().node_at_or_before(t_end);
    let p = space_density_process(hf, field, k_end)?;
    let value = p[k_end];
    finite(value, Representation::SpaceDensity)?;
    Ok(LtsResult {
        value,
        representation: Representation::SpaceDensity,
        diagnostics: LtsDiagnostics::default(),
    })
}

/// `-∫ L^a_T d_aH(T,a) + ∬ L^a_u d_(u,a)H` over the field's levels, with
/// dyadic refinement in time until successive sums agree to `vitali_tol`.
///
/// The double integral enters with a plus sign: that is the orientation
/// under which an indicator rectangle gives the four-term local-time
/// combination.
pub fn lts_vitali(hf: &TimeSpaceFunction, field: &LocalTimeField, t_end: f64, opts: &LtsOptions) -> Result<LtsResult> {
    if !hf.vitali {
        return Err(Error::RepresentationUnavailable("vitali"));
    }
    let tg = *field.tgrid();
    let k_end = tg.node_at_or_before(t_end);
    let t_end = tg.time(k_end);
    let levels = field.levels();
    let m = levels.len();
    // columns that never move contribute nothing
    let active: Vec<usize> = (0..m).filter(|&j| field.terminal(j) != 0.0 && j + 1 < m).collect();

    let mut head = 0.0;
    for &j in &active {
        let lt = field.value(k_end, j);
        head -= lt * (hf.eval(t_end, levels[j + 1]) - hf.eval(t_end, levels[j]));
    }

    let max_depth = opts.vitali_max_depth.min((k_end.max(1) as f64).log2().floor() as u32);
    let mut diag = LtsDiagnostics::default();
    let mut prev = f64::NAN;
    let mut value = 0.0;
    let mut variations: Vec<f64> = Vec::new();
    let min_depth = 4.min(max_depth);
    for depth in min_depth..=max_depth {
        let p = 1usize << depth;
        let nodes: Vec<usize> = (0..=p).map(|i| i * k_end / p).collect();
        let ts: Vec<f64> = nodes.iter().map(|&k| tg.time(k)).collect();
        let mut s = 0.0;
        let mut var = 0.0;
        for &j in &active {
            let (a0, a1) = (levels[j], levels[j + 1]);
            let mut events = field.events(j).peekable();
            let mut cur = 0.0;
            let mut h_prev0 = hf.eval(ts[0], a0);
            let mut h_prev1 = hf.eval(ts[0], a1);
            for i in 0..p {
                while let Some(&(n, v)) = events.peek() {
                    if n <= nodes[i] {
                        cur = v;
                        events.next();
                    } else {
                        break;
                    }
                }
                let h0 = hf.eval(ts[i + 1], a0);
                let h1 = hf.eval(ts[i + 1], a1);
                let inc = h1 - h_prev1 - h0 + h_prev0;
                s += cur * inc;
                var += inc.abs();
                h_prev0 = h0;
                h_prev1 = h1;
            }
        }
        if !s.is_finite() {
            return Err(Error::numeric(0, "vitali sum is not finite"));
        }
        value = s;
        variations.push(var);
        diag.depth = depth;
        if prev.is_finite() {
            diag.error_estimate = (s - prev).abs();
            if diag.error_estimate <= opts.vitali_tol * (1.0 + s.abs()) && depth >= min_depth + 2 {
                break;
            }
        }
        prev = s;
    }
    let n = variations.len();
    if n >= 3 && variations[n - 1] > 1.3 * variations[n - 2] && variations[n - 2] > 1.3 * variations[n - 3] {
        return Err(Error::VariationUnbounded(format!(
            "rectangle variation keeps growing ({:.3e} at depth {})",
            variations[n - 1],
            diag.depth
        )));
    }
    if diag.error_estimate > opts.vitali_tol * (1.0 + value.abs()) {
        diag.notes.push(format!("max depth {} reached", diag.depth));
    }
    let value = head + value;
    finite(value, Representation::Vitali)?;
    Ok(LtsResult {
        value,
        representation: Representation::Vitali,
        diagnostics: diag,
    })
}

/// `-∫ ∫_0^T g(u,a) d_u L⁰_u(X - Ψ(·,a)) dν(a)`.
///
/// Levels start from the path range and are extended outward while the
/// boundary columns still carry local time.
pub fn lts_shifted(
    g: impl Fn(f64, f64) -> f64,
    nu: &RadonMeasure,
    psi: impl Fn(f64, f64) -> f64 + Send + Sync + Clone + 'static,
    x: &SamplePath,
    t_end: f64,
    opts: &LtsOptions,
) -> Result<LtsResult> {
    let grid = *x.grid();
    let k_end = grid.node_at_or_before(t_end);
    let t_end = grid.time(k_end);
    let (plo, phi) = x.min_max();
    for a in [plo, 0.5 * (plo + phi), phi] {
        let p = psi.clone();
        total_variation(&BVFunction::new(move |t| p(t, a)), grid.t0, t_end.max(grid.t0 + grid.dt()))?;
    }
    let times = grid.times();
    let v = x.values();
    let column = |a: f64| -> Vec<(usize, f64)> {
        let mut raw = 0.0f64;
        let mut run = 0.0f64;
        let mut out = Vec::new();
        let mut y0 = v[0] - psi(times[0], a);
        for i in 0..k_end {
            let y1 = v[i + 1] - psi(times[i + 1], a);
            let inc = tanaka_increment(y0, y1, SideConvention::Right);
            if inc != 0.0 {
                raw += inc;
                if raw > run {
                    out.push((i, raw - run));
                    run = raw;
                }
            }
            y0 = y1;
        }
        out
    };

    let h = opts.level_spacing;
    let mut levels = levels_for(x, nu, h);
    let mut cols: Vec<Vec<(usize, f64)>> = levels.iter().map(|&a| column(a)).collect();
    let mut notes = Vec::new();
    let limit = 1usize << 14;
    let mut added = 0;
    while !cols[0].is_empty() {
        let a = levels[0] - h;
        levels.insert(0, a);
        cols.insert(0, column(a));
        added += 1;
        if added > limit {
            return Err(Error::Resolution("shifted local time support does not close".into()));
        }
    }
    while !cols.last().unwrap().is_empty() {
        let a = levels.last().unwrap() + h;
        levels.push(a);
        cols.push(column(a));
        added += 1;
        if added > limit {
            return Err(Error::Resolution("shifted local time support does not close".into()));
        }
    }
    if added > 0 {
        notes.push(format!("{added} levels added beyond the path range"));
    }
    // atoms outside the initial range are not on the extended lattice
    let mut extra: Vec<f64> = nu
        .atoms()
        .iter()
        .map(|a| a.0)
        .filter(|&a| a >= levels[0] && a <= *levels.last().unwrap() && levels.binary_search_by(|l| l.total_cmp(&a)).is_err())
        .collect();
    if !extra.is_empty() {
        extra.sort_by(f64::total_cmp);
        for a in extra {
            let k = levels.partition_point(|&l| l < a);
            levels.insert(k, a);
            cols.insert(k, column(a));
        }
    }

    let w = nu.grid_weights(&levels)?;
    let mut acc = vec![0.0; k_end + 1];
    for (j, &wj) in w.iter().enumerate() {
        if wj == 0.0 {
            continue;
        }
        let a = levels[j];
        for &(step, dl) in &cols[j] {
            let gv = g(times[step], a);
            if !gv.is_finite() {
                return Err(Error::numeric(step, format!("g(t, {a}) is not finite")));
            }
            acc[step + 1] -= wj * gv * dl;
        }
    }
    prefix_sum(&mut acc);
    let value = acc[k_end];
    finite(value, Representation::Shifted)?;
    Ok(LtsResult {
        value,
        representation: Representation::Shifted,
        diagnostics: LtsDiagnostics {
            depth: 0,
            error_estimate: 0.0,
            notes,
        },
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairDiff {
    pub a: Representation,
    pub b: Representation,
    pub abs: f64,
    pub rel: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossCheckReport {
    pub values: BTreeMap<Representation, f64>,
    pub pairwise_diffs: Vec<PairDiff>,
    pub diagnostics: BTreeMap<Representation, LtsDiagnostics>,
}

impl CrossCheckReport {
    pub fn max_abs(&self) -> f64 {
        self.pairwise_diffs.iter().fold(0.0, |m, d| m.max(d.abs))
    }

    pub fn max_rel(&self) -> f64 {
        self.pairwise_diffs.iter().fold(0.0, |m, d| m.max(d.rel))
    }

    /// Every pair within `rel` relative or `abs` absolute.
    pub fn agrees(&self, rel: f64, abs: f64) -> bool {
        self.pairwise_diffs.iter().all(|d| d.rel <= rel || d.abs <= abs)
    }
}

/// Every declared representation of `Λ_T(H)` with pairwise differences.
pub fn lts_cross_check(hf: &TimeSpaceFunction, x: &SamplePath, t_end: f64, opts: &LtsOptions) -> Result<CrossCheckReport> {
    let reps = hf.representations();
    if reps.len() < 2 {
        return Err(Error::contract("cross check needs at least two representations"));
    }
    let mut results = Vec::new();
    let needs_field = hf.space_density.is_some() || hf.vitali;
    let field = if needs_field {
        let empty = RadonMeasure::zero();
        let nu = hf.space_density.as_ref().map_or(&empty, |s| &s.nu);
        let levels = levels_for(x, nu, opts.level_spacing);
        Some(local_time_field(x, &levels, SideConvention::Right)?)
    } else {
        None
    };
    for r in reps {
        let res = match r {
            Representation::TimeDensity => lts_time_density(hf, x, t_end, opts)?,
            Representation::SpaceDensity => lts_space_density_field(hf, field.as_ref().unwrap(), t_end)?,
            Representation::Vitali => lts_vitali(hf, field.as_ref().unwrap(), t_end, opts)?,
            _ => unreachable!(),
        };
        results.push(res);
    }
    Ok(report_from(&results))
}

pub fn report_from(results: &[LtsResult]) -> CrossCheckReport {
    let mut pairwise_diffs = Vec::new();
    for i in 0..results.len() {
        for j in i + 1..results.len() {
            let (u, v) = (results[i].value, results[j].value);
            let abs = (u - v).abs();
            let scale = u.abs().max(v.abs());
            pairwise_diffs.push(PairDiff {
                a: results[i].representation,
                b: results[j].representation,
                abs,
                rel: if scale > 0.0 { abs / scale } else { 0.0 },
            });
        }
    }
    CrossCheckReport {
        values: results.iter().map(|r| (r.representation, r.value)).collect(),
        pairwise_diffs,
        diagnostics: results.iter().map(|r| (r.representation, r.diagnostics.clone())).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::localtime::local_time_tanaka;
    use crate::pathsim::{brownian_path, TimeGrid};
    use crate::rng::RngStream;

    fn bm(exp: u32, seed: u64) -> SamplePath {
        brownian_path(TimeGrid::dyadic(exp), RngStream::new(seed, 0))
    }

    fn exp_arctan() -> TimeSpaceFunction {
        TimeSpaceFunction::new(|t, a| (-t).exp() * a.atan())
            .with_time_density(|u, a| -(-u).exp() * a.atan(), RadonMeasure::lebesgue())
            .unwrap()
            .with_space_density(|t, a| (-t).exp() / (1.0 + a * a), RadonMeasure::lebesgue())
            .unwrap()
            .with_vitali()
    }

    #[test]
    fn by_trivial_cases() {
        let p = bm(12, 1);
        let n = p.len() - 1;
        assert!(bouleau_yor(|_| 1.0, &p, n).unwrap().abs() < 1e-12);
        let (_, hi) = p.min_max();
        assert_eq!(bouleau_yor(|a| if a > hi + 0.1 { 1.0 } else { 0.0 }, &p, n).unwrap(), 0.0);
        assert!(bouleau_yor(|_| f64::NAN, &p, n).is_err());
    }

    #[test]
    fn by_identity_gives_realized_qv() {
        // 2[(X_t²-X_0²)/2 - Σ X_i ΔX_i] = Σ (ΔX_i)²
        let p = bm(12, 2);
        let n = p.len() - 1;
        let qv: f64 = p.increments().map(|d| d * d).sum();
        assert!((bouleau_yor(|a| a, &p, n).unwrap() - qv).abs() < 1e-10);
    }

    #[test]
    fn density_validation_rejects_mismatch() {
        let r = TimeSpaceFunction::new(|t, a| t * a).with_time_density(|_, a| 2.0 * a, RadonMeasure::lebesgue());
        assert!(r.is_err());
        let r = TimeSpaceFunction::new(|t, a| t * a).with_space_density(|t, _| t, RadonMeasure::lebesgue());
        assert!(r.is_ok());
    }

    #[test]
    fn simple_rectangles() {
        let p = bm(10, 3);
        let levels = uniform_levels(-1.0, 1.0, 0.25, &[]);
        let f = local_time_field(&p, &levels, SideConvention::Right).unwrap();
        let r = Rect::new(0.25, 0.75, -0.25, 0.5).unwrap();
        let one = lts_simple(&[(r, 1.0)], &f).unwrap();
        let (y, x) = (f.level_index(0.5).unwrap(), f.level_index(-0.25).unwrap());
        let g = f.tgrid();
        let (s, t) = (g.node_exact(0.25).unwrap(), g.node_exact(0.75).unwrap());
        assert_eq!(one, f.value(t, y) - f.value(s, y) - f.value(t, x) + f.value(s, x));
        let split = [
            (Rect::new(0.25, 0.75, -0.25, 0.0).unwrap(), 1.0),
            (Rect::new(0.25, 0.75, 0.0, 0.5).unwrap(), 1.0),
        ];
        assert!((lts_simple(&split, &f).unwrap() - one).abs() < 1e-14);
        assert_eq!(lts_simple(&[], &f).unwrap(), 0.0);
        assert!(lts_simple(&[(Rect::new(0.1, 0.7, 0.0, 0.5).unwrap(), 1.0)], &f).is_err());
        assert!(lts_simple(&[(Rect::new(0.25, 0.75, 0.0, 0.3).unwrap(), 1.0)], &f).is_err());
    }

    #[test]
    fn time_density_reductions() {
        let p = bm(12, 4);
        let opts = LtsOptions::default();
        // h = 0 collapses to the head term
        let hc = TimeSpaceFunction::new(|_, a| a.sin())
            .with_time_density(|_, _| 0.0, RadonMeasure::lebesgue())
            .unwrap();
        let r = lts_time_density(&hc, &p, 1.0, &opts).unwrap();
        assert_eq!(r.value, -bouleau_yor(|a| a.sin(), &p, p.len() - 1).unwrap());
        // H = t·f(a): T·BY_T(f) - ∫ BY_u(f) du, against a fine trapezoid
        let ht = TimeSpaceFunction::new(|t, a| t * a.cos())
            .with_time_density(|_, a| a.cos(), RadonMeasure::lebesgue())
            .unwrap();
        let r = lts_time_density(&ht, &p, 1.0, &LtsOptions { u_panels: 4096, ..opts }).unwrap();
        let n = p.len() - 1;
        let by: Vec<f64> = (0..=n).map(|k| bouleau_yor(|a| a.cos(), &p, k).unwrap()).collect();
        let dt = p.grid().dt();
        let trap: f64 = by.windows(2).map(|w| 0.5 * (w[0] + w[1]) * dt).sum();
        assert!((r.value + (by[n] - trap)).abs() < 1e-9, "{} vs {}", r.value, trap - by[n]);
    }

    #[test]
    fn space_density_reductions() {
        let p = bm(12, 5);
        let opts = LtsOptions::default();
        let ind = TimeSpaceFunction::new(|_, a| if a > 0.0 { 1.0 } else { 0.0 })
            .with_space_density(|_, _| 1.0, RadonMeasure::dirac(0.0))
            .unwrap();
        let r = lts_space_density(&ind, &p, 1.0, &opts).unwrap();
        let l0 = local_time_tanaka(&p, 0.0, SideConvention::Right).terminal();
        assert_eq!(r.value, -l0);
        let c = TimeSpaceFunction::new(|_, _| 3.0)
            .with_space_density(|_, _| 0.0, RadonMeasure::lebesgue())
            .unwrap();
        assert_eq!(lts_space_density(&c, &p, 1.0, &opts).unwrap().value, 0.0);
        assert!(matches!(
            lts_space_density(&TimeSpaceFunction::new(|_, _| 0.0), &p, 1.0, &opts),
            Err(Error::RepresentationUnavailable(_))
        ));
    }

    #[test]
    fn vitali_time_constant_matches_integration_by_parts() {
        // H(a) = sin(a): -∫L cos da = ∫ sin d_aL = -BY(sin)
        let p = bm(14, 6);
        let hf = TimeSpaceFunction::new(|_, a| a.sin()).with_vitali();
        let levels = uniform_levels(p.min_max().0, p.min_max().1, 1.0 / 512.0, &[]);
        let f = local_time_field(&p, &levels, SideConvention::Right).unwrap();
        let v = lts_vitali(&hf, &f, 1.0, &LtsOptions::default()).unwrap();
        let by = -bouleau_yor(|a| a.sin(), &p, p.len() - 1).unwrap();
        assert!((v.value - by).abs() < 1e-2, "{} vs {by}", v.value);
        let z = TimeSpaceFunction::new(|_, _| 2.0).with_vitali();
        assert_eq!(lts_vitali(&z, &f, 1.0, &LtsOptions::default()).unwrap().value, 0.0);
    }

    #[test]
    fn vitali_indicator_rectangle_matches_simple() {
        let p = bm(12, 7);
        let levels = uniform_levels(-2.0, 2.0, 1.0 / 64.0, &[]);
        let f = local_time_field(&p, &levels, SideConvention::Right).unwrap();
        let (s, t, x, y) = (0.25, 0.75, -0.25, 0.5);
        let hf = TimeSpaceFunction::new(move |u, a| if u > s && u <= t && a > x && a <= y { 1.0 } else { 0.0 }).with_vitali();
        let simple = lts_simple(&[(Rect::new(s, t, x, y).unwrap(), 1.0)], &f).unwrap();
        let v = lts_vitali(&hf, &f, 1.0, &LtsOptions::default()).unwrap();
        assert!((v.value - simple).abs() < 1e-12, "{} vs {simple}", v.value);
    }

    #[test]
    fn cross_representation_agreement() {
        let p = bm(14, 8);
        let rep = lts_cross_check(&exp_arctan(), &p, 1.0, &LtsOptions::default()).unwrap();
        assert_eq!(rep.values.len(), 3);
        assert!(rep.agrees(0.05, 0.02), "{rep:?}");
        let json = serde_json::to_string(&rep).unwrap();
        assert!(json.contains("space_density"));
    }

    #[test]
    fn cross_check_zero_and_contract() {
        let p = bm(10, 9);
        let z = TimeSpaceFunction::new(|_, _| 0.0)
            .with_time_density(|_, _| 0.0, RadonMeasure::lebesgue())
            .unwrap()
            .with_space_density(|_, _| 0.0, RadonMeasure::lebesgue())
            .unwrap()
            .with_vitali();
        let rep = lts_cross_check(&z, &p, 1.0, &LtsOptions::default()).unwrap();
        assert!(rep.values.values().all(|&v| v == 0.0));
        assert_eq!(rep.max_abs(), 0.0);
        let one = TimeSpaceFunction::new(|_, _| 0.0).with_vitali();
        assert!(lts_cross_check(&one, &p, 1.0, &LtsOptions::default()).is_err());
    }

    #[test]
    fn shifted_reduces_to_space_density() {
        let p = bm(12, 10);
        let hf = TimeSpaceFunction::new(|t, a| (-t).exp() * a.atan())
            .with_space_density(|t, a| (-t).exp() / (1.0 + a * a), RadonMeasure::lebesgue())
            .unwrap();
        let opts = LtsOptions::default();
        let sd = lts_space_density(&hf, &p, 1.0, &opts).unwrap();
        let sh = lts_shifted(|t, a| (-t).exp() / (1.0 + a * a), &RadonMeasure::lebesgue(), |_, a| a, &p, 1.0, &opts).unwrap();
        assert!((sd.value - sh.value).abs() < 1e-12);
        let zero = lts_shifted(|_, _| 0.0, &RadonMeasure::lebesgue(), |_, a| a, &p, 1.0, &opts).unwrap();
        assert_eq!(zero.value, 0.0);
    }

    #[test]
    fn shifted_curve_matches_direct_tanaka() {
        let p = bm(12, 11);
        let c = 0.5;
        let sh = lts_shifted(|_, _| 1.0, &RadonMeasure::dirac(0.0), move |t, a| a + c * t, &p, 1.0, &LtsOptions::default()).unwrap();
        let direct = local_time_tanaka(&p.minus_curve(|t| c * t), 0.0, SideConvention::Right).terminal();
        assert!((sh.value + direct).abs() < 1e-12);
    }

    #[test]
    fn linearity_space_density() {
        let p = bm(12, 12);
        let opts = LtsOptions::default();
        let h = exp_arctan();
        let a = lts_space_density(&h, &p, 1.0, &opts).unwrap().value;
        let b = lts_space_density(&h.scaled(-2.5), &p, 1.0, &opts).unwrap().value;
        assert!((b + 2.5 * a).abs() < 1e-12 * (1.0 + a.abs()));
    }
}
