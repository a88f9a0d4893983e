//! Residual processes and convergence tables for the change-of-variables
//! formulas and the local-time limit theorems.

use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::localtime::{local_time_field, local_time_tanaka, SideConvention};
use crate::ltspace::{
    levels_for, lts_space_density_field, lts_time_density, lts_vitali, space_density_process, LtsOptions, TimeSpaceFunction,
};
use crate::measure::{measure_integrate, total_variation, BVFunction, Density, Fn2, RadonMeasure};
use crate::pathsim::{fmt17, SamplePath, TimeGrid};
use crate::quad;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ResolutionInfo {
    pub dt: f64,
    pub level_spacing: Option<f64>,
    pub eps: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub residual: Vec<f64>,
    pub sup_abs: f64,
    pub terminal_abs: f64,
    pub resolution: ResolutionInfo,
    pub paths_used: usize,
}

impl ResidualReport {
    pub fn new(residual: Vec<f64>, resolution: ResolutionInfo) -> Result<Self> {
        if let Some(i) = residual.iter().position(|v| !v.is_finite()) {
            return Err(Error::numeric(i, "residual is not finite"));
        }
        let sup_abs = residual.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let terminal_abs = residual.last().map_or(0.0, |v| v.abs());
        Ok(Self {
            residual,
            sup_abs,
            terminal_abs,
            resolution,
            paths_used: 1,
        })
    }

    pub fn terminal(&self) -> f64 {
        self.residual.last().copied().unwrap_or(0.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub depth_or_eps: f64,
    pub value: f64,
    pub reference: f64,
    pub abs_err: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTable {
    pub rows: Vec<TableRow>,
}

impl ConvergenceTable {
    pub fn push(&mut self, depth_or_eps: f64, value: f64, reference: f64) {
        self.rows.push(TableRow {
            depth_or_eps,
            value,
            reference,
            abs_err: (value - reference).abs(),
        });
    }

    /// `|S_{k+1} - S_k|` for consecutive rows.
    pub fn successive_differences(&self) -> Vec<f64> {
        self.rows.windows(2).map(|w| (w[1].value - w[0].value).abs()).collect()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "depth_or_eps,value,reference,abs_err")?;
        for r in &self.rows {
            writeln!(w, "{},{},{},{}", fmt17(r.depth_or_eps), fmt17(r.value), fmt17(r.reference), fmt17(r.abs_err))?;
        }
        Ok(())
    }
}

/// `F`, its left space derivative as a time-space function, and time
/// densities `(F_t^k, μ_k)` whose sum gives the time increments of `F`.
#[derive(Clone)]
pub struct CovFunction {
    f: Fn2,
    fx: TimeSpaceFunction,
    ft: Vec<(Fn2, RadonMeasure)>,
}

const COV_LATTICE: usize = 9;

impl CovFunction {
    /// Checks on a 9x9 lattice over `[0,1] x [-2,2]` that `F_x` integrates
    /// back to `F` in space and the `F_t` terms integrate back in time.
    pub fn new(f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static, fx: TimeSpaceFunction, ft: Vec<(Fn2, RadonMeasure)>) -> Result<Self> {
        let f: Fn2 = Arc::new(f);
        let node = |lo: f64, hi: f64, i: usize| lo + (hi - lo) * i as f64 / (COV_LATTICE - 1) as f64;
        for i in 0..COV_LATTICE {
            let t = node(0.0, 1.0, i);
            for j in 1..COV_LATTICE {
                let (a0, a) = (-2.0, node(-2.0, 2.0, j));
                let lhs = f(t, a) - f(t, a0);
                let rhs = quad::adaptive(|y| fx.eval(t, y), a0, a, 1e-12, 40).0;
                if (lhs - rhs).abs() > 1e-6 * (1.0 + lhs.abs()) {
                    return Err(Error::contract(format!("F_x does not integrate to F at (t={t}, x={a})")));
                }
            }
        }
        for j in 0..COV_LATTICE {
            let a = node(-2.0, 2.0, j);
            for i in 1..COV_LATTICE {
                let t = node(0.0, 1.0, i);
                let lhs = f(t, a) - f(0.0, a);
                let mut rhs = 0.0;
                for (g, mu) in &ft {
                    rhs += measure_integrate(|u| g(u, a), mu, 0.0, t)?;
                }
                if (lhs - rhs).abs() > 1e-6 * (1.0 + lhs.abs()) {
                    return Err(Error::contract(format!("F_t does not integrate to F at (t={t}, x={a})")));
                }
            }
        }
        Ok(Self { f, fx, ft })
    }

    pub fn time_independent(f: impl Fn(f64) -> f64 + Send + Sync + 'static, fx: TimeSpaceFunction) -> Result<Self> {
        Self::new(move |_, x| f(x), fx, Vec::new())
    }

    pub fn eval(&self, t: f64, x: f64) -> f64 {
        (self.f)(t, x)
    }

    pub fn fx(&self) -> &TimeSpaceFunction {
        &self.fx
    }
}

/// Per-step masses `μ([t_i, t_{i+1}))` of the continuous part of `mu`.
fn step_masses(mu: &RadonMeasure, grid: &TimeGrid, k_end: usize) -> Vec<f64> {
    let mut out = vec![0.0; k_end];
    let Some(d) = mu.density() else { return out };
    let (s0, s1) = d.support();
    for (i, m) in out.iter_mut().enumerate() {
        let (a, b) = (grid.time(i).max(s0), grid.time(i + 1).min(s1));
        if a >= b {
            continue;
        }
        *m = match d.constant_value() {
            Some(c) => c * (b - a),
            None => quad::gauss4(|u| d.eval(u), a, b),
        };
    }
    out
}

/// `F(t,X_t) - F(0,X_0) - ∫_0^{t-} F_t dμ - Σ F_x(t_i,X_i)ΔX_i + ½Λ_t(F_x)` at
/// every node up to `T`, with Λ in its space-density form.
pub fn cov_residual(cf: &CovFunction, x: &SamplePath, t_end: f64, opts: &LtsOptions) -> Result<ResidualReport> {
    let sd = cf
        .fx
        .space_density()
        .ok_or(Error::RepresentationUnavailable("space density of F_x"))?;
    let grid = *x.grid();
    let k_end = grid.node_at_or_before(t_end);
    let levels = levels_for(x, &sd.nu, opts.level_spacing);
    let field = local_time_field(x, &levels, SideConvention::Right)?;
    let lam = space_density_process(&cf.fx, &field, k_end)?;

    let v = x.values();
    let mut time_inc = vec![0.0; k_end];
    for (g, mu) in &cf.ft {
        let masses = step_masses(mu, &grid, k_end);
        for i in 0..k_end {
            if masses[i] != 0.0 {
                time_inc[i] += g(grid.time(i), v[i]) * masses[i];
            }
        }
        for &(u, w) in mu.atoms() {
            if u >= grid.t0 && u < grid.time(k_end) {
                let i = grid.node_at_or_before(u);
                time_inc[i] += g(u, v[i]) * w;
            }
        }
    }

    let f0 = cf.eval(grid.t0, v[0]);
    let mut res = Vec::with_capacity(k_end + 1);
    let (mut tt, mut it) = (0.0, 0.0);
    res.push(0.5 * lam[0]);
    for i in 0..k_end {
        let ti = grid.time(i);
        it += cf.fx.eval(ti, v[i]) * (v[i + 1] - v[i]);
        tt += time_inc[i];
        res.push(cf.eval(grid.time(i + 1), v[i + 1]) - f0 - tt - it + 0.5 * lam[i + 1]);
    }
    ResidualReport::new(
        res,
        ResolutionInfo {
            dt: grid.dt(),
            level_spacing: Some(opts.level_spacing),
            eps: None,
        },
    )
}

/// Residual of `F(X_t) = F(X_0) + Σ F'₋(X_i)ΔX_i + ½∫L^a_t dF'₋(a)` for a
/// difference of convex functions. Runs through [`cov_residual`].
pub fn ito_tanaka_check(
    f: impl Fn(f64) -> f64 + Send + Sync + 'static,
    fprime: &BVFunction,
    x: &SamplePath,
    t_end: f64,
    opts: &LtsOptions,
) -> Result<ResidualReport> {
    let (lo, hi) = x.min_max();
    let (lo, hi) = (lo.min(-2.0) - 1.0, hi.max(2.0) + 1.0);
    total_variation(fprime, lo, hi)?;
    let nu = derivative_measure(fprime, lo, hi)?;
    let fp = fprime.clone();
    let fx = TimeSpaceFunction::new(move |_, a| fp.eval(a)).with_space_density(|_, _| 1.0, nu)?;
    let cf = CovFunction::time_independent(f, fx)?;
    cov_residual(&cf, x, t_end, opts)
}

/// Lebesgue–Stieltjes measure of a BV function on `[lo, hi)`: declared jumps
/// as atoms, the derivative (or a central difference) as density.
fn derivative_measure(g: &BVFunction, lo: f64, hi: f64) -> Result<RadonMeasure> {
    let atoms: Vec<(f64, f64)> = g.jumps().iter().map(|j| (j.loc, j.right - j.left)).collect();
    let density = match g.derivative() {
        Some(d) => {
            let d = d.clone();
            Density::new(move |a| d(a), lo, hi)
        }
        None => {
            let g = g.clone();
            let h = 1e-6;
            Density::new(move |a| (g.eval(a + h) - g.eval(a - h)) / (2.0 * h), lo, hi)
        }
    };
    let breaks: Vec<f64> = atoms.iter().map(|a| a.0).collect();
    RadonMeasure::from_parts(atoms, Some(density.with_breaks(breaks)))
}

/// A `C^{1,2}` function with its derivatives.
#[derive(Clone)]
pub struct SmoothPiece {
    pub f: Fn2,
    pub f_t: Fn2,
    pub f_x: Fn2,
    pub f_xx: Fn2,
}

impl SmoothPiece {
    pub fn new(
        f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        f_t: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        f_x: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        f_xx: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            f: Arc::new(f),
            f_t: Arc::new(f_t),
            f_x: Arc::new(f_x),
            f_xx: Arc::new(f_xx),
        }
    }
}

/// Residual of the change-of-variables formula with local time on the curve
/// `b`: `above` is used where `X > b`, `below` where `X <= b`, and the jump
/// term `½(F_x⁺ - F_x⁻)(s, b(s)) dL` uses the right local time of `X - b`
/// at 0.
pub fn ltc_residual(above: &SmoothPiece, below: &SmoothPiece, b: &BVFunction, x: &SamplePath, t_end: f64) -> Result<ResidualReport> {
    let grid = *x.grid();
    let k_end = grid.node_at_or_before(t_end);
    let t_hi = grid.time(k_end).max(grid.t0 + grid.dt());
    total_variation(b, grid.t0, t_hi)?;
    for i in 0..=32 {
        let t = grid.t0 + (t_hi - grid.t0) * i as f64 / 32.0;
        let c = b.eval(t);
        let (u, l) = ((above.f)(t, c), (below.f)(t, c));
        if (u - l).abs() > 1e-8 * (1.0 + u.abs()) {
            return Err(Error::contract(format!("extensions disagree on the curve at t={t}: {u} vs {l}")));
        }
    }
    let y = x.minus_curve(|t| b.eval(t));
    let lt = local_time_tanaka(&y, 0.0, SideConvention::Right);
    let (v, yv, l) = (x.values(), y.values(), lt.values());
    let dq = x.qv_increments();
    let piece = |i: usize| if yv[i] > 0.0 { above } else { below };
    let p0 = piece(0);
    let f0 = (p0.f)(grid.t0, v[0]);
    let mut acc = 0.0;
    let mut res = Vec::with_capacity(k_end + 1);
    res.push(0.0);
    for i in 0..k_end {
        let t = grid.time(i);
        let p = piece(i);
        acc += (p.f_t)(t, v[i]) * grid.dt() + (p.f_x)(t, v[i]) * (v[i + 1] - v[i]) + 0.5 * (p.f_xx)(t, v[i]) * dq[i];
        let dl = l[i + 1] - l[i];
        if dl != 0.0 {
            let c = b.eval(t);
            acc += 0.5 * ((above.f_x)(t, c) - (below.f_x)(t, c)) * dl;
        }
        let t1 = grid.time(i + 1);
        res.push((piece(i + 1).f)(t1, v[i + 1]) - f0 - acc);
    }
    ResidualReport::new(
        res,
        ResolutionInfo {
            dt: grid.dt(),
            level_spacing: None,
            eps: None,
        },
    )
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GhomrasniReport {
    /// Occupation-side value per ε, reference `|Λ(H)|`.
    pub table: ConvergenceTable,
    pub lambda: f64,
    /// Sign `s` minimising `|occupation(ε_last) - s·Λ|`.
    pub matched_sign: f64,
}

/// `(1/ε) Σ [H(t_i,X_i) - H(t_i,X_i-ε)] Δ⟨X⟩_i` for each ε, next to `Λ_T(H)`.
pub fn ghomrasni_limit(hf: &TimeSpaceFunction, x: &SamplePath, t_end: f64, eps_list: &[f64], opts: &LtsOptions) -> Result<GhomrasniReport> {
    if eps_list.is_empty() || eps_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::contract("eps_list must be non-empty and strictly decreasing"));
    }
    let grid = *x.grid();
    let floor = grid.dt().sqrt();
    if let Some(e) = eps_list.iter().find(|&&e| e < floor) {
        return Err(Error::Resolution(format!("eps {e} below sqrt(dt) = {floor}")));
    }
    let k_end = grid.node_at_or_before(t_end);
    let lambda = lambda_any(hf, x, t_end, opts)?;
    let v = x.values();
    let dq = x.qv_increments();
    let mut table = ConvergenceTable::default();
    let mut last = 0.0;
    for &eps in eps_list {
        let mut s = 0.0;
        for i in 0..k_end {
            let t = grid.time(i);
            s += (hf.eval(t, v[i]) - hf.eval(t, v[i] - eps)) * dq[i];
        }
        last = s / eps;
        table.push(eps, last, lambda.abs());
        let r = table.rows.last_mut().unwrap();
        r.abs_err = (r.value.abs() - lambda.abs()).abs();
    }
    let matched_sign = if (last - lambda).abs() <= (last + lambda).abs() { 1.0 } else { -1.0 };
    Ok(GhomrasniReport {
        table,
        lambda,
        matched_sign,
    })
}

/// Λ_T(H) in the first available of space density, Vitali, time density.
fn lambda_any(hf: &TimeSpaceFunction, x: &SamplePath, t_end: f64, opts: &LtsOptions) -> Result<f64> {
    if let Some(sd) = hf.space_density() {
        let levels = levels_for(x, &sd.nu, opts.level_spacing);
        let field = local_time_field(x, &levels, SideConvention::Right)?;
        return Ok(lts_space_density_field(hf, &field, t_end)?.value);
    }
    if hf.is_vitali() {
        let levels = levels_for(x, &RadonMeasure::zero(), opts.level_spacing);
        let field = local_time_field(x, &levels, SideConvention::Right)?;
        return Ok(lts_vitali(hf, &field, t_end, opts)?.value);
    }
    Ok(lts_time_density(hf, x, t_end, opts)?.value)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RiemannReport {
    pub table: ConvergenceTable,
    /// `Σ H_i ΔL⁰_i(X - θ)` on the full grid.
    pub reference: f64,
}

/// Sums `Σ H_{t_m}(L^{θ_{t_m}}_{t_{m+1}} - L^{θ_{t_m}}_{t_m})` over dyadic
/// partitions of `[0,T]` at each depth, against the shifted-path reference.
pub fn riemann_sum_localtime(hproc: &[f64], theta: &SamplePath, x: &SamplePath, depths: &[u32]) -> Result<RiemannReport> {
    let grid = *x.grid();
    if theta.grid() != x.grid() || hproc.len() != x.len() {
        return Err(Error::contract("H, θ and X must share the grid"));
    }
    check_bv_path(theta)?;
    let n = grid.n_steps;
    let th = theta.values();
    let shifted = SamplePath::new(grid, x.values().iter().zip(th).map(|(a, b)| a - b).collect())?;
    let lref = local_time_tanaka(&shifted, 0.0, SideConvention::Right);
    let lv = lref.values();
    let reference: f64 = (0..n).map(|i| hproc[i] * (lv[i + 1] - lv[i])).sum();

    let mut table = ConvergenceTable::default();
    for &d in depths {
        let p = 1usize << d;
        if p > n {
            return Err(Error::Resolution(format!("depth {d} finer than the path grid")));
        }
        let nodes: Vec<usize> = (0..=p).map(|m| m * n / p).collect();
        let mut levels: Vec<f64> = nodes[..p].iter().map(|&k| th[k]).collect();
        levels.sort_by(f64::total_cmp);
        levels.dedup();
        let field = local_time_field(x, &levels, SideConvention::Right)?;
        let mut s = 0.0;
        for m in 0..p {
            let (k0, k1) = (nodes[m], nodes[m + 1]);
            let j = field.level_index(th[k0]).expect("level present");
            s += hproc[k0] * (field.value(k1, j) - field.value(k0, j));
        }
        table.push(d as f64, s, reference);
    }
    Ok(RiemannReport { table, reference })
}

/// Rejects paths whose discrete variation keeps growing under refinement.
fn check_bv_path(p: &SamplePath) -> Result<()> {
    let v = p.values();
    let tv = |step: usize| -> f64 { v.iter().step_by(step).collect::<Vec<_>>().windows(2).map(|w| (w[1] - w[0]).abs()).sum() };
    if v.len() < 17 {
        return Ok(());
    }
    let (t1, t4, t16) = (tv(1), tv(4), tv(16));
    if t4 > 0.0 && t16 > 0.0 && t1 / t4 > 1.5 && t4 / t16 > 1.5 {
        return Err(Error::VariationUnbounded(format!(
            "discrete variation grows under refinement: {t16:.3e}, {t4:.3e}, {t1:.3e}"
        )));
    }
    Ok(())
}

/// Residual between `∫ G_y(s, F(s,a)) d_s L⁰_s(Y - F(·,a))` and the Tanaka
/// estimate of `L^a(X)` for `X = G(t, Y)`, with `F(t,·)` the inverse of
/// `G(t,·)`.
pub fn change_of_local_time_check(
    g: impl Fn(f64, f64) -> f64,
    g_y: impl Fn(f64, f64) -> f64,
    y: &SamplePath,
    a: f64,
) -> Result<ResidualReport> {
    let grid = *y.grid();
    let (lo, hi) = y.min_max();
    for i in 0..=8 {
        let t = grid.t0 + (grid.t_end - grid.t0) * i as f64 / 8.0;
        let mut prev = f64::NEG_INFINITY;
        for j in 0..=64 {
            let z = lo - 1.0 + (hi - lo + 2.0) * j as f64 / 64.0;
            let gz = g(t, z);
            if !(gz > prev) {
                return Err(Error::contract(format!("G(t,·) is not strictly increasing near (t={t}, y={z})")));
            }
            prev = gz;
        }
    }
    let times = grid.times();
    let mut curve = Vec::with_capacity(times.len());
    let mut guess = a;
    for &t in &times {
        let c = quad::invert_increasing(|z| g(t, z), |z| g_y(t, z), a, guess, 1e-12)
            .map_err(|reason| Error::Inversion { t, y: a, reason })?;
        curve.push(c);
        guess = c;
    }
    let yv = y.values();
    let shifted = SamplePath::new(grid, yv.iter().zip(&curve).map(|(u, c)| u - c).collect())?;
    let lc = local_time_tanaka(&shifted, 0.0, SideConvention::Right);
    let x = SamplePath::new(grid, yv.iter().zip(&times).map(|(&u, &t)| g(t, u)).collect())?;
    let la = local_time_tanaka(&x, a, SideConvention::Right);
    let (lcv, lav) = (lc.values(), la.values());
    let mut lhs = 0.0;
    let mut res = Vec::with_capacity(times.len());
    res.push(0.0);
    for i in 0..grid.n_steps {
        let d = lcv[i + 1] - lcv[i];
        if d != 0.0 {
            lhs += g_y(times[i], curve[i]) * d;
        }
        res.push(lhs - lav[i + 1]);
    }
    ResidualReport::new(
        res,
        ResolutionInfo {
            dt: grid.dt(),
            level_spacing: None,
            eps: None,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pathsim::brownian_path;
    use crate::rng::RngStream;

    fn bm(exp: u32, seed: u64) -> SamplePath {
        brownian_path(TimeGrid::dyadic(exp), RngStream::new(seed, 0))
    }

    fn sgn_left(x: f64) -> f64 {
        if x > 0.0 {
            1.0
        } else {
            -1.0
        }
    }

    fn abs_prime() -> BVFunction {
        BVFunction::new(sgn_left).with_jump(0.0, -1.0, 1.0).with_derivative(|_| 0.0)
    }

    fn exp_abs() -> CovFunction {
        let fx = TimeSpaceFunction::new(|t, x| (-t).exp() * sgn_left(x))
            .with_space_density(|t, _| 2.0 * (-t).exp(), RadonMeasure::dirac(0.0))
            .unwrap();
        let ft: Fn2 = Arc::new(|t, x| -(-t).exp() * x.abs());
        CovFunction::new(|t, x| (-t).exp() * x.abs(), fx, vec![(ft, RadonMeasure::lebesgue())]).unwrap()
    }

    #[test]
    fn cov_identity_is_zero() {
        let p = bm(12, 1);
        let fx = TimeSpaceFunction::new(|_, _| 1.0)
            .with_space_density(|_, _| 0.0, RadonMeasure::zero())
            .unwrap();
        let cf = CovFunction::new(|_, x| x, fx, vec![]).unwrap();
        let r = cov_residual(&cf, &p, 1.0, &LtsOptions::default()).unwrap();
        assert!(r.sup_abs < 1e-12, "{}", r.sup_abs);
        assert!(r.sup_abs >= r.terminal_abs);
    }

    #[test]
    fn cov_validation() {
        let fx = TimeSpaceFunction::new(|_, _| 2.0)
            .with_space_density(|_, _| 0.0, RadonMeasure::zero())
            .unwrap();
        assert!(CovFunction::new(|_, x| x, fx.clone(), vec![]).is_err());
        assert!(CovFunction::new(|t, x| 2.0 * x + t, fx, vec![]).is_err());
    }

    #[test]
    fn cov_exp_abs_small() {
        let p = bm(14, 2);
        let r = cov_residual(&exp_abs(), &p, 1.0, &LtsOptions::default()).unwrap();
        assert!(r.terminal_abs < 0.05, "{}", r.terminal_abs);
    }

    #[test]
    fn tanaka_abs_matches_monotonisation_gap() {
        // |x|: the residual is exactly minus the running-max correction at T
        let p = bm(12, 3);
        let r = ito_tanaka_check(|x| x.abs(), &abs_prime(), &p, 1.0, &LtsOptions::default()).unwrap();
        let v = p.values();
        let raw: f64 = v[v.len() - 1].abs() - v[0].abs() - (0..v.len() - 1).map(|i| sgn_left(v[i]) * (v[i + 1] - v[i])).sum::<f64>();
        let l = local_time_tanaka(&p, 0.0, SideConvention::Right).terminal();
        assert!((r.terminal() - (raw - l)).abs() < 1e-12);
    }

    #[test]
    fn cov_and_ito_tanaka_agree() {
        let p = bm(12, 4);
        let opts = LtsOptions::default();
        let a = ito_tanaka_check(|x| x.abs(), &abs_prime(), &p, 1.0, &opts).unwrap();
        let fx = TimeSpaceFunction::new(|_, x| sgn_left(x))
            .with_space_density(|_, _| 1.0, RadonMeasure::dirac(0.0).scaled(2.0))
            .unwrap();
        let cf = CovFunction::time_independent(|x| x.abs(), fx).unwrap();
        let b = cov_residual(&cf, &p, 1.0, &opts).unwrap();
        for (u, w) in a.residual.iter().zip(&b.residual) {
            assert!((u - w).abs() < 1e-10);
        }
    }

    #[test]
    fn ito_tanaka_linear_and_square() {
        let p = bm(12, 5);
        let opts = LtsOptions::default();
        let lin = ito_tanaka_check(|x| 3.0 * x - 1.0, &BVFunction::smooth(|_| 3.0, |_| 0.0), &p, 1.0, &opts).unwrap();
        assert!(lin.sup_abs < 1e-12);
        let sq = ito_tanaka_check(|x| x * x, &BVFunction::smooth(|x| 2.0 * x, |_| 2.0), &p, 1.0, &opts).unwrap();
        assert!(sq.terminal_abs < 0.01, "{}", sq.terminal_abs);
    }

    #[test]
    fn ltc_reductions() {
        let p = bm(12, 6);
        let up = SmoothPiece::new(|_, x| x, |_, _| 0.0, |_, _| 1.0, |_, _| 0.0);
        let down = SmoothPiece::new(|_, x| -x, |_, _| 0.0, |_, _| -1.0, |_, _| 0.0);
        let zero = BVFunction::smooth(|_| 0.0, |_| 0.0);
        let r = ltc_residual(&up, &down, &zero, &p, 1.0).unwrap();
        let tanaka = ito_tanaka_check(|x| x.abs(), &abs_prime(), &p, 1.0, &LtsOptions::default()).unwrap();
        assert!((r.terminal() - tanaka.terminal()).abs() < 1e-12);
        let bad = SmoothPiece::new(|_, x| x + 1.0, |_, _| 0.0, |_, _| 1.0, |_, _| 0.0);
        assert!(ltc_residual(&bad, &down, &zero, &p, 1.0).is_err());
    }

    #[test]
    fn ltc_moving_curve() {
        let p = bm(14, 7);
        let c = 0.5;
        let up = SmoothPiece::new(move |t, x| x - c * t, move |_, _| -c, |_, _| 1.0, |_, _| 0.0);
        let down = SmoothPiece::new(move |t, x| c * t - x, move |_, _| c, |_, _| -1.0, |_, _| 0.0);
        let b = BVFunction::smooth(move |t| c * t, move |_| c);
        let r = ltc_residual(&up, &down, &b, &p, 1.0).unwrap();
        assert!(r.terminal_abs < 0.05, "{}", r.terminal_abs);
    }

    #[test]
    fn ghomrasni_identity_and_constant() {
        let p = bm(12, 8);
        let opts = LtsOptions::default();
        let id = TimeSpaceFunction::new(|_, a| a)
            .with_space_density(|_, _| 1.0, RadonMeasure::lebesgue())
            .unwrap();
        let r = ghomrasni_limit(&id, &p, 1.0, &[0.1, 0.05, 1.0 / 64.0], &opts).unwrap();
        let qv: f64 = p.qv_increments().iter().sum();
        for row in &r.table.rows {
            assert!((row.value - qv).abs() < 1e-10);
        }
        assert_eq!(r.matched_sign, -1.0);
        let c = TimeSpaceFunction::new(|_, _| 1.0)
            .with_space_density(|_, _| 0.0, RadonMeasure::zero())
            .unwrap();
        let r = ghomrasni_limit(&c, &p, 1.0, &[0.1, 0.05], &opts).unwrap();
        assert!(r.table.rows.iter().all(|row| row.value == 0.0));
        assert!(ghomrasni_limit(&c, &p, 1.0, &[1e-4], &opts).is_err());
        assert!(ghomrasni_limit(&c, &p, 1.0, &[0.05, 0.1], &opts).is_err());
    }

    #[test]
    fn ghomrasni_superposition() {
        let p = bm(12, 9);
        let opts = LtsOptions::default();
        let a = TimeSpaceFunction::new(|_, a| a.atan()).with_vitali();
        let b = TimeSpaceFunction::new(|t, a| t * a.sin()).with_vitali();
        let ab = TimeSpaceFunction::new(|t, a| 2.0 * a.atan() - 3.0 * t * a.sin()).with_vitali();
        let eps = [0.1];
        let va = ghomrasni_limit(&a, &p, 1.0, &eps, &opts).unwrap().table.rows[0].value;
        let vb = ghomrasni_limit(&b, &p, 1.0, &eps, &opts).unwrap().table.rows[0].value;
        let vab = ghomrasni_limit(&ab, &p, 1.0, &eps, &opts).unwrap().table.rows[0].value;
        assert!((vab - (2.0 * va - 3.0 * vb)).abs() < 1e-10);
    }

    #[test]
    fn riemann_constant_theta_telescopes() {
        let p = bm(12, 10);
        let g = *p.grid();
        let theta = SamplePath::new(g, vec![0.1; g.len()]).unwrap();
        let ones = vec![1.0; g.len()];
        let r = riemann_sum_localtime(&ones, &theta, &p, &[2, 5, 8]).unwrap();
        let l = local_time_tanaka(&p, 0.1, SideConvention::Right).terminal();
        for row in &r.table.rows {
            assert!((row.value - l).abs() < 1e-12);
        }
        let zeros = vec![0.0; g.len()];
        let r = riemann_sum_localtime(&zeros, &theta, &p, &[3]).unwrap();
        assert_eq!(r.table.rows[0].value, 0.0);
        let rough = bm(12, 11);
        assert!(matches!(
            riemann_sum_localtime(&ones, &rough, &p, &[3]),
            Err(Error::VariationUnbounded(_))
        ));
    }

    #[test]
    fn riemann_drifting_level_converges() {
        let p = bm(14, 12);
        let g = *p.grid();
        let theta = SamplePath::new(g, g.times().iter().map(|t| 0.5 * t).collect()).unwrap();
        let ones = vec![1.0; g.len()];
        let r = riemann_sum_localtime(&ones, &theta, &p, &[6, 8, 10, 12]).unwrap();
        assert!(r.table.rows.last().unwrap().abs_err < 0.05, "{:?}", r.table);
        let mut buf = Vec::new();
        r.table.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("depth_or_eps,value,reference,abs_err\n"));
    }

    #[test]
    fn change_of_local_time_cases() {
        let p = bm(12, 13);
        let id = change_of_local_time_check(|_, y| y, |_, _| 1.0, &p, 0.1).unwrap();
        assert_eq!(id.sup_abs, 0.0);
        let dbl = change_of_local_time_check(|_, y| 2.0 * y, |_, _| 2.0, &p, 0.2).unwrap();
        assert!(dbl.terminal_abs < 0.05);
        let drift = change_of_local_time_check(|t, y| y + 0.5 * t, |_, _| 1.0, &p, 0.1).unwrap();
        assert!(drift.terminal_abs < 0.05);
        assert!(change_of_local_time_check(|_, y| y * y, |_, y| 2.0 * y, &p, 0.1).is_err());
    }
}
