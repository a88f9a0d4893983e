//! Closed registry of Monte Carlo experiments. Each one returns summary
//! statistics, evaluated pass/fail checks and a per-path (or per-depth) table.

use std::collections::BTreeMap;
use std::io::Write;
use std::sync::Arc;

use rand_chacha::rand_core::RngCore;
use serde::{Deserialize, Serialize};

use crate::calculus::{cov_residual, ghomrasni_limit, ltc_residual, riemann_sum_localtime, CovFunction, SmoothPiece};
use crate::error::{Error, Result};
use crate::localtime::{local_time_field, local_time_occupation, local_time_tanaka, symmetric_from_right, SideConvention};
use crate::ltspace::{levels_for, lts_cross_check, space_density_process, LtsOptions, Representation, TimeSpaceFunction};
use crate::measure::{BVFunction, Fn2, RadonMeasure};
use crate::pathsim::{brownian_path, euler_solve, fmt17, par_map, SamplePath, TimeGrid};
use crate::rng::RngStream;
use crate::sdelt::{solve_sdelt_terminals, solve_sdelt_with_driver, validate_spec, verify_sdelt, verify_sdelt_with, AtomLocalTime, SdeltSpec, SpecFile};
use crate::stats;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum ExperimentName {
    TanakaMean,
    EstimatorAgreement,
    OccupationFormula,
    LtsEquivalence,
    CovResidualAbsT,
    CurveLocalTime,
    GhomrasniLimit,
    RiemannSums,
    LocalTimeConvergence,
    LtsBoundedVariation,
    SkewSignProb,
    SdeltResidual,
    DriftAbsorption,
    SymmetricLocalTime,
}

impl ExperimentName {
    pub const ALL: [ExperimentName; 14] = [
        ExperimentName::TanakaMean,
        ExperimentName::EstimatorAgreement,
        ExperimentName::OccupationFormula,
        ExperimentName::LtsEquivalence,
        ExperimentName::CovResidualAbsT,
        ExperimentName::CurveLocalTime,
        ExperimentName::GhomrasniLimit,
        ExperimentName::RiemannSums,
        ExperimentName::LocalTimeConvergence,
        ExperimentName::LtsBoundedVariation,
        ExperimentName::SkewSignProb,
        ExperimentName::SdeltResidual,
        ExperimentName::DriftAbsorption,
        ExperimentName::SymmetricLocalTime,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentName::TanakaMean => "tanaka_mean",
            ExperimentName::EstimatorAgreement => "estimator_agreement",
            ExperimentName::OccupationFormula => "occupation_formula",
            ExperimentName::LtsEquivalence => "lts_equivalence",
            ExperimentName::CovResidualAbsT => "cov_residual_abs_t",
            ExperimentName::CurveLocalTime => "curve_local_time",
            ExperimentName::GhomrasniLimit => "ghomrasni_limit",
            ExperimentName::RiemannSums => "riemann_sums",
            ExperimentName::LocalTimeConvergence => "local_time_convergence",
            ExperimentName::LtsBoundedVariation => "lts_bounded_variation",
            ExperimentName::SkewSignProb => "skew_sign_prob",
            ExperimentName::SdeltResidual => "sdelt_residual",
            ExperimentName::DriftAbsorption => "drift_absorption",
            ExperimentName::SymmetricLocalTime => "symmetric_local_time",
        }
    }

    /// One-line description and the result it exercises.
    pub fn describe(self) -> (&'static str, &'static str) {
        match self {
            ExperimentName::TanakaMean => ("mean of L^0_1 of Brownian motion vs sqrt(2/pi)", "reflection principle: L^0_1 has the law of |B_1|"),
            ExperimentName::EstimatorAgreement => ("Tanaka vs occupation (eps = sqrt(dt)) local time, and its decay in dt", "occupation density characterisation of local time"),
            ExperimentName::OccupationFormula => ("int G(s,X) d<X> vs int int G(s,a) dL^a_s da for G = e^{-s} cos a", "time-dependent occupation time formula"),
            ExperimentName::LtsEquivalence => ("time-density, space-density and Vitali forms of Lambda(e^{-t} arctan a)", "equivalence of the three local time-space representations"),
            ExperimentName::CovResidualAbsT => ("change-of-variables residual for F = e^{-t}|x|", "change of variables with local time-space integral"),
            ExperimentName::CurveLocalTime => ("residual for F = |x - t/2| with local time on the curve t/2", "change of variables with local time on curves"),
            ExperimentName::GhomrasniLimit => ("(1/eps) int [H(s,X) - H(s,X-eps)] d<X> vs |Lambda(H)|", "Ghomrasni occupation limit"),
            ExperimentName::RiemannSums => ("Riemann sums of L^{theta} increments for theta = t/2 over dyadic partitions", "Protter-San Martin local time Riemann sums"),
            ExperimentName::LocalTimeConvergence => ("|L^0_1(B + t/n) - L^0_1(B)| as n grows", "convergence of local times for converging semimartingales"),
            ExperimentName::LtsBoundedVariation => ("discrete total variation of T -> Lambda_T(1_{a>0})", "bounded variation of the local time-space integral in time"),
            ExperimentName::SkewSignProb => ("P(X_1 > 0) of skew Brownian motion vs a random-walk oracle", "skew Brownian motion as an SDE with local time"),
            ExperimentName::SdeltResidual => ("equation residual of solved skew paths, with a wrong-beta control", "solutions of SDEs with local time via the space transform"),
            ExperimentName::DriftAbsorption => ("b = 1 absorbed into the local-time term vs Euler for dX = dt + dB", "drift absorption h -> h + b/sigma^2"),
            ExperimentName::SymmetricLocalTime => ("symmetric local time from the right one at the atom vs two-sided occupation", "symmetric and right local time of SDELT solutions"),
        }
    }

    pub fn default_resolution(self) -> Resolution {
        let n_paths = match self {
            ExperimentName::TanakaMean => 4096,
            ExperimentName::EstimatorAgreement | ExperimentName::RiemannSums | ExperimentName::LocalTimeConvergence => 64,
            ExperimentName::SkewSignProb => 1 << 14,
            ExperimentName::DriftAbsorption => 1 << 12,
            _ => 256,
        };
        Resolution {
            dt_exponent: 16,
            level_spacing_exponent: 8,
            n_paths,
        }
    }

    pub fn takes_spec(self) -> bool {
        matches!(self, ExperimentName::SdeltResidual | ExperimentName::DriftAbsorption)
    }
}

impl std::fmt::Display for ExperimentName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Resolution {
    pub dt_exponent: u32,
    pub level_spacing_exponent: u32,
    pub n_paths: usize,
}

impl Resolution {
    pub fn grid(&self) -> TimeGrid {
        TimeGrid::dyadic(self.dt_exponent)
    }

    pub fn lts_options(&self) -> LtsOptions {
        LtsOptions {
            level_spacing: (-(self.level_spacing_exponent as f64)).exp2(),
            ..LtsOptions::default()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Op {
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = "==")]
    Eq,
}

/// A threshold evaluated on a statistic.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub op: Op,
    pub limit: f64,
    pub pass: bool,
}

impl Check {
    pub fn le(name: &str, value: f64, limit: f64) -> Self {
        Self {
            name: name.into(),
            value,
            op: Op::Le,
            limit,
            pass: value <= limit,
        }
    }

    pub fn ge(name: &str, value: f64, limit: f64) -> Self {
        Self {
            name: name.into(),
            value,
            op: Op::Ge,
            limit,
            pass: value >= limit,
        }
    }

    pub fn holds(name: &str, ok: bool) -> Self {
        Self {
            name: name.into(),
            value: if ok { 1.0 } else { 0.0 },
            op: Op::Eq,
            limit: 1.0,
            pass: ok,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{}", self.header.join(","))?;
        for r in &self.rows {
            let cells: Vec<String> = r.iter().map(|&v| fmt17(v)).collect();
            writeln!(w, "{}", cells.join(","))?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default)]
pub struct Outcome {
    pub summary: BTreeMap<String, f64>,
    pub checks: Vec<Check>,
    pub table: Table,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    fn put(&mut self, k: &str, v: f64) {
        self.summary.insert(k.into(), v);
    }
}

pub fn run_experiment(name: ExperimentName, res: &Resolution, seed: u64, spec: Option<&SpecFile>) -> Result<Outcome> {
    if spec.is_some() && !name.takes_spec() {
        return Err(Error::Config(format!("experiment {name} does not take a spec")));
    }
    match name {
        ExperimentName::TanakaMean => tanaka_mean(res, seed),
        ExperimentName::EstimatorAgreement => estimator_agreement(res, seed),
        ExperimentName::OccupationFormula => occupation_formula(res, seed),
        ExperimentName::LtsEquivalence => lts_equivalence(res, seed),
        ExperimentName::CovResidualAbsT => cov_residual_abs_t(res, seed),
        ExperimentName::CurveLocalTime => curve_local_time(res, seed),
        ExperimentName::GhomrasniLimit => ghomrasni(res, seed),
        ExperimentName::RiemannSums => riemann_sums(res, seed),
        ExperimentName::LocalTimeConvergence => local_time_convergence(res, seed),
        ExperimentName::LtsBoundedVariation => lts_bounded_variation(res, seed),
        ExperimentName::SkewSignProb => skew_sign_prob(res, seed),
        ExperimentName::SdeltResidual => sdelt_residual(res, seed, spec),
        ExperimentName::DriftAbsorption => drift_absorption(res, seed, spec),
        ExperimentName::SymmetricLocalTime => symmetric_local_time(res, seed),
    }
}

/// Stream ids at or above this are reserved for oracles.
const ORACLE_STREAM: u64 = 1 << 40;

fn bm(res: &Resolution, seed: u64, k: usize) -> SamplePath {
    brownian_path(res.grid(), RngStream::new(seed, k as u64))
}

fn collect<T: Send>(n: usize, f: impl Fn(usize) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
    par_map(n, f).into_iter().collect()
}

fn coarse_of(p: &SamplePath) -> Result<SamplePath> {
    p.subsample(4)
}

fn sgn_left(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        -1.0
    }
}

fn tanaka_mean(res: &Resolution, seed: u64) -> Result<Outcome> {
    let n = res.n_paths;
    let l: Vec<f64> = par_map(n, |k| local_time_tanaka(&bm(res, seed, k), 0.0, SideConvention::Right).terminal());
    let exact = (2.0 / std::f64::consts::PI).sqrt();
    let folded: Vec<f64> = RngStream::new(seed, ORACLE_STREAM).normals(n).iter().map(|z| z.abs()).collect();
    let mut o = Outcome::default();
    let m = stats::mean(&l);
    o.put("mean_L0", m);
    o.put("std_err", stats::std_err(&l));
    o.put("oracle_exact", exact);
    o.put("oracle_abs_normal_mean", stats::mean(&folded));
    o.put("oracle_abs_normal_std_err", stats::std_err(&folded));
    o.checks.push(Check::le("rel_err_vs_sqrt_2_over_pi", (m - exact).abs() / exact, 0.02));
    o.table = Table::new(&["path", "L0_1"]);
    o.table.rows = l.iter().enumerate().map(|(k, &v)| vec![k as f64, v]).collect();
    Ok(o)
}

fn estimator_agreement(res: &Resolution, seed: u64) -> Result<Outcome> {
    let diffs = collect(res.n_paths, |k| {
        let fine = bm(res, seed, k);
        let coarse = coarse_of(&fine)?;
        let d = |p: &SamplePath| -> Result<f64> {
            let eps = p.grid().dt().sqrt();
            let t = local_time_tanaka(p, 0.0, SideConvention::Right).terminal();
            let occ = local_time_occupation(p, 0.0, eps, SideConvention::Right)?.terminal();
            Ok((t - occ).abs())
        };
        Ok((d(&coarse)?, d(&fine)?))
    })?;
    let coarse: Vec<f64> = diffs.iter().map(|d| d.0).collect();
    let fine: Vec<f64> = diffs.iter().map(|d| d.1).collect();
    let (mc, mf) = (stats::median(&coarse), stats::median(&fine));
    let mut o = Outcome::default();
    o.put("mean_abs_diff_fine", stats::mean(&fine));
    o.put("mean_abs_diff_coarse", stats::mean(&coarse));
    o.put("median_abs_diff_fine", mf);
    o.put("median_abs_diff_coarse", mc);
    o.checks.push(Check::le("mean_abs_diff_fine", stats::mean(&fine), 0.05));
    o.checks.push(Check::ge("median_reduction_factor", mc / mf, 1.5));
    o.table = Table::new(&["path", "abs_diff_coarse", "abs_diff_fine"]);
    o.table.rows = diffs.iter().enumerate().map(|(k, d)| vec![k as f64, d.0, d.1]).collect();
    Ok(o)
}

fn occupation_formula(res: &Resolution, seed: u64) -> Result<Outcome> {
    let g = |s: f64, a: f64| (-s).exp() * a.cos();
    let opts = res.lts_options();
    let rows = collect(res.n_paths, |k| {
        let p = bm(res, seed, k);
        let grid = *p.grid();
        let v = p.values();
        let lhs: f64 = p.qv_increments().iter().enumerate().map(|(i, dq)| g(grid.time(i), v[i]) * dq).sum();
        let levels = levels_for(&p, &RadonMeasure::zero(), opts.level_spacing);
        let field = local_time_field(&p, &levels, SideConvention::Right)?;
        let h = opts.level_spacing;
        let rhs: f64 = (0..field.n_levels()).map(|j| field.stieltjes(j, |s| g(s, levels[j])) * h).sum();
        Ok((lhs, rhs, (lhs - rhs).abs() / lhs.abs()))
    })?;
    let rel: Vec<f64> = rows.iter().map(|r| r.2).collect();
    let worst = rel.iter().fold(0.0f64, |m, &r| m.max(r));
    let mut o = Outcome::default();
    o.put("max_rel_err", worst);
    o.put("median_rel_err", stats::median(&rel));
    o.checks.push(Check::le("max_rel_err_per_path", worst, 0.01));
    o.table = Table::new(&["path", "time_side", "space_side", "rel_err"]);
    o.table.rows = rows.iter().enumerate().map(|(k, r)| vec![k as f64, r.0, r.1, r.2]).collect();
    Ok(o)
}

pub fn exp_arctan() -> Result<TimeSpaceFunction> {
    Ok(TimeSpaceFunction::new(|t, a| (-t).exp() * a.atan())
        .with_time_density(|u, a| -(-u).exp() * a.atan(), RadonMeasure::lebesgue())?
        .with_space_density(|t, a| (-t).exp() / (1.0 + a * a), RadonMeasure::lebesgue())?
        .with_vitali())
}

fn lts_equivalence(res: &Resolution, seed: u64) -> Result<Outcome> {
    let hf = exp_arctan()?;
    let opts = res.lts_options();
    let reports = collect(res.n_paths, |k| lts_cross_check(&hf, &bm(res, seed, k), 1.0, &opts))?;
    let mut o = Outcome::default();
    let ok = reports.iter().filter(|r| r.agrees(0.05, 0.02)).count();
    let worst_abs = reports.iter().fold(0.0f64, |m, r| m.max(r.max_abs()));
    let worst_rel = reports.iter().fold(0.0f64, |m, r| m.max(r.max_rel()));
    o.put("paths_agreeing", ok as f64);
    o.put("max_pairwise_abs", worst_abs);
    o.put("max_pairwise_rel", worst_rel);
    o.checks.push(Check::ge("fraction_of_paths_agreeing", ok as f64 / reports.len() as f64, 1.0));
    o.table = Table::new(&["path", "time_density", "space_density", "vitali"]);
    for (k, r) in reports.iter().enumerate() {
        let get = |rep: Representation| r.values.get(&rep).copied().unwrap_or(f64::NAN);
        o.table.rows.push(vec![
            k as f64,
            get(Representation::TimeDensity),
            get(Representation::SpaceDensity),
            get(Representation::Vitali),
        ]);
    }
    Ok(o)
}

pub fn exp_abs_cov() -> Result<CovFunction> {
    let fx = TimeSpaceFunction::new(|t, x| (-t).exp() * sgn_left(x)).with_space_density(|t, _| 2.0 * (-t).exp(), RadonMeasure::dirac(0.0))?;
    let ft: Fn2 = Arc::new(|t, x| -(-t).exp() * x.abs());
    CovFunction::new(|t, x| (-t).exp() * x.abs(), fx, vec![(ft, RadonMeasure::lebesgue())])
}

/// Median terminal residual at Δt and at 4Δt (same driver, subsampled).
fn shrink_checks(o: &mut Outcome, coarse: &[f64], fine: &[f64], limit: f64) {
    let (mc, mf) = (stats::median(coarse), stats::median(fine));
    o.put("median_terminal_residual_fine", mf);
    o.put("median_terminal_residual_coarse", mc);
    o.checks.push(Check::le("median_terminal_residual", mf, limit));
    o.checks.push(Check::le("fine_over_coarse", mf / mc, 0.75));
    o.table = Table::new(&["path", "residual_coarse", "residual_fine"]);
    o.table.rows = coarse.iter().zip(fine).enumerate().map(|(k, (c, f))| vec![k as f64, *c, *f]).collect();
}

fn cov_residual_abs_t(res: &Resolution, seed: u64) -> Result<Outcome> {
    let cf = exp_abs_cov()?;
    let opts = res.lts_options();
    let r = collect(res.n_paths, |k| {
        let fine = bm(res, seed, k);
        let coarse = coarse_of(&fine)?;
        Ok((
            cov_residual(&cf, &coarse, 1.0, &opts)?.terminal_abs,
            cov_residual(&cf, &fine, 1.0, &opts)?.terminal_abs,
        ))
    })?;
    let (c, f): (Vec<f64>, Vec<f64>) = r.into_iter().unzip();
    let mut o = Outcome::default();
    shrink_checks(&mut o, &c, &f, 0.05);
    Ok(o)
}

fn curve_local_time(res: &Resolution, seed: u64) -> Result<Outcome> {
    let up = SmoothPiece::new(|t, x| x - 0.5 * t, |_, _| -0.5, |_, _| 1.0, |_, _| 0.0);
    let down = SmoothPiece::new(|t, x| 0.5 * t - x, |_, _| 0.5, |_, _| -1.0, |_, _| 0.0);
    let b = BVFunction::smooth(|t| 0.5 * t, |_| 0.5);
    let r = collect(res.n_paths, |k| Ok(ltc_residual(&up, &down, &b, &bm(res, seed, k), 1.0)?.terminal_abs))?;
    let mut o = Outcome::default();
    let m = stats::median(&r);
    o.put("median_terminal_residual", m);
    o.put("max_terminal_residual", r.iter().fold(0.0f64, |a, &b| a.max(b)));
    o.checks.push(Check::le("median_terminal_residual", m, 0.05));
    o.table = Table::new(&["path", "terminal_residual"]);
    o.table.rows = r.iter().enumerate().map(|(k, &v)| vec![k as f64, v]).collect();
    Ok(o)
}

fn ghomrasni(res: &Resolution, seed: u64) -> Result<Outcome> {
    let opts = res.lts_options();
    let eps = (-(res.level_spacing_exponent as f64)).exp2();
    let step = TimeSpaceFunction::new(|_, a| if a > 0.0 { 1.0 } else { 0.0 }).with_space_density(|_, _| 1.0, RadonMeasure::dirac(0.0))?;
    let ident = TimeSpaceFunction::new(|_, a| a).with_space_density(|_, _| 1.0, RadonMeasure::lebesgue())?;
    let rows = collect(res.n_paths, |k| {
        let p = bm(res, seed, k);
        let s = ghomrasni_limit(&step, &p, 1.0, &[eps], &opts)?;
        let i = ghomrasni_limit(&ident, &p, 1.0, &[eps], &opts)?;
        let qv: f64 = p.qv_increments().iter().sum();
        Ok([s.table.rows[0].value, s.lambda, s.table.rows[0].abs_err, i.table.rows[0].value, qv])
    })?;
    let errs: Vec<f64> = rows.iter().map(|r| r[2]).collect();
    let worst = errs.iter().fold(0.0f64, |m, &e| m.max(e));
    let qv_gap = rows.iter().fold(0.0f64, |m, r| m.max((r[3] - r[4]).abs()));
    let t_gap = rows.iter().fold(0.0f64, |m, r| m.max((r[3] - 1.0).abs()));
    let mut o = Outcome::default();
    o.put("eps", eps);
    o.put("mean_abs_err_step", stats::mean(&errs));
    o.put("median_abs_err_step", stats::median(&errs));
    o.put("max_abs_err_step", worst);
    o.put("max_identity_minus_qv", qv_gap);
    o.put("max_identity_minus_T", t_gap);
    o.checks.push(Check::le("max_abs_err_step_per_path", worst, 0.05));
    o.checks.push(Check::le("max_identity_minus_qv", qv_gap, 1e-9));
    o.checks.push(Check::le("max_identity_rel_to_T", t_gap, 0.02));
    o.table = Table::new(&["path", "occupation_step", "lambda_step", "abs_err_step", "occupation_identity", "qv"]);
    o.table.rows = rows.iter().enumerate().map(|(k, r)| [&[k as f64][..], &r[..]].concat()).collect();
    Ok(o)
}

fn riemann_sums(res: &Resolution, seed: u64) -> Result<Outcome> {
    let depths: Vec<u32> = (6..=12).filter(|&d| d <= res.dt_exponent).collect();
    if depths.len() < 3 {
        return Err(Error::Config("riemann_sums needs dt_exponent >= 8".into()));
    }
    let reports = collect(res.n_paths, |k| {
        let p = bm(res, seed, k);
        let g = *p.grid();
        let theta = SamplePath::new(g, g.times().iter().map(|t| 0.5 * t).collect())?;
        riemann_sum_localtime(&vec![1.0; g.len()], &theta, &p, &depths)
    })?;
    let nd = depths.len();
    let mut med_diffs = Vec::new();
    for j in 0..nd - 1 {
        let d: Vec<f64> = reports.iter().map(|r| r.table.successive_differences()[j]).collect();
        med_diffs.push(stats::median(&d));
    }
    let decreasing = med_diffs.windows(2).all(|w| w[1] < w[0]);
    let final_err: Vec<f64> = reports.iter().map(|r| r.table.rows[nd - 1].abs_err).collect();
    let worst = final_err.iter().fold(0.0f64, |m, &e| m.max(e));
    let mut o = Outcome::default();
    for (j, m) in med_diffs.iter().enumerate() {
        o.put(&format!("median_diff_depth_{}_{}", depths[j], depths[j + 1]), *m);
    }
    o.put("max_final_abs_err", worst);
    o.checks.push(Check::holds("median_successive_differences_strictly_decreasing", decreasing));
    o.checks.push(Check::le("max_final_abs_err", worst, 0.05));
    o.table = Table::new(&["path", "depth", "value", "reference", "abs_err"]);
    for (k, r) in reports.iter().enumerate() {
        for row in &r.table.rows {
            o.table.rows.push(vec![k as f64, row.depth_or_eps, row.value, row.reference, row.abs_err]);
        }
    }
    Ok(o)
}

fn local_time_convergence(res: &Resolution, seed: u64) -> Result<Outcome> {
    let ns = [1.0, 2.0, 4.0, 8.0, 16.0];
    let rows = collect(res.n_paths, |k| {
        let p = bm(res, seed, k);
        let l = local_time_tanaka(&p, 0.0, SideConvention::Right).terminal();
        Ok(ns.map(|n| (local_time_tanaka(&p.minus_curve(|t| -t / n), 0.0, SideConvention::Right).terminal() - l).abs()))
    })?;
    let meds: Vec<f64> = (0..ns.len()).map(|j| stats::median(&rows.iter().map(|r| r[j]).collect::<Vec<_>>())).collect();
    let mut o = Outcome::default();
    for (n, m) in ns.iter().zip(&meds) {
        o.put(&format!("median_abs_diff_n{n}"), *m);
    }
    o.checks.push(Check::holds("median_decreasing_in_n", meds.windows(2).all(|w| w[1] < w[0])));
    o.table = Table::new(&["path", "n1", "n2", "n4", "n8", "n16"]);
    o.table.rows = rows.iter().enumerate().map(|(k, r)| [&[k as f64][..], &r[..]].concat()).collect();
    Ok(o)
}

fn lts_bounded_variation(res: &Resolution, seed: u64) -> Result<Outcome> {
    let opts = res.lts_options();
    let nu = RadonMeasure::dirac(0.0);
    let hf = TimeSpaceFunction::new(|_, a| if a > 0.0 { 1.0 } else { 0.0 }).with_space_density(|_, _| 1.0, nu.clone())?;
    let rows = collect(res.n_paths, |k| {
        let p = bm(res, seed, k);
        let levels = levels_for(&p, &nu, opts.level_spacing);
        let field = local_time_field(&p, &levels, SideConvention::Right)?;
        let n = p.grid().n_steps;
        let lam = space_density_process(&hf, &field, n)?;
        let tv: f64 = lam.windows(2).map(|w| (w[1] - w[0]).abs()).sum();
        let l0 = field.terminal(field.level_index(0.0).expect("atom level"));
        // sup|g| = 1, ν-mass = 1
        Ok((tv, l0))
    })?;
    let worst = rows.iter().fold(f64::NEG_INFINITY, |m, r| m.max(r.0 - r.1));
    let mut o = Outcome::default();
    o.put("max_tv_minus_bound", worst);
    o.put("mean_tv", stats::mean(&rows.iter().map(|r| r.0).collect::<Vec<_>>()));
    o.checks.push(Check::le("max_tv_minus_bound", worst, 1e-12));
    o.table = Table::new(&["path", "total_variation", "bound"]);
    o.table.rows = rows.iter().enumerate().map(|(k, r)| vec![k as f64, r.0, r.1]).collect();
    Ok(o)
}

/// Fraction of walks `S_n > 0`: steps `±1` with fair coins away from 0 and
/// `P(+1) = p` at 0.
pub fn skew_walk_positive_fraction(p: f64, n_steps: usize, n_paths: usize, seed: u64) -> f64 {
    let hits = par_map(n_paths, |k| {
        let mut g = RngStream::new(seed, ORACLE_STREAM + k as u64).generator();
        let mut pos: i64 = 0;
        let (mut word, mut bits) = (0u64, 0u32);
        for _ in 0..n_steps {
            if pos == 0 {
                let u = (g.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
                pos = if u < p { 1 } else { -1 };
                continue;
            }
            if bits == 0 {
                word = g.next_u64();
                bits = 64;
            }
            pos += if word & 1 == 1 { 1 } else { -1 };
            word >>= 1;
            bits -= 1;
        }
        (pos > 0) as u32
    });
    hits.iter().map(|&h| h as f64).sum::<f64>() / n_paths as f64
}

fn skew_sign_prob(res: &Resolution, seed: u64) -> Result<Outcome> {
    let grid = res.grid();
    let n = res.n_paths;
    let mut o = Outcome {
        table: Table::new(&["beta", "p_oracle", "p_walk", "p_solve", "joint_se"]),
        ..Outcome::default()
    };
    let betas = [0.25, 0.4];
    let specs = betas.map(|b| SdeltSpec::skew(b, 0.0));
    // one driver per path serves both betas
    let signs = collect(n, |k| {
        let x = solve_sdelt_terminals(&specs, grid, RngStream::new(seed, k as u64))?;
        Ok([(x[0] > 0.0) as u32 as f64, (x[1] > 0.0) as u32 as f64])
    })?;
    for (bi, beta) in betas.into_iter().enumerate() {
        let p_solve = stats::mean(&signs.iter().map(|s| s[bi]).collect::<Vec<_>>());
        let p = 1.0 / (2.0 * (1.0 - beta));
        let p_walk = skew_walk_positive_fraction(p, grid.n_steps, n, seed.wrapping_add(bi as u64 + 1));
        let se = ((p_solve * (1.0 - p_solve) + p_walk * (1.0 - p_walk)) / n as f64).sqrt();
        o.put(&format!("p_solve_beta_{beta}"), p_solve);
        o.put(&format!("p_walk_beta_{beta}"), p_walk);
        o.put(&format!("p_exact_beta_{beta}"), p);
        o.checks.push(Check::le(&format!("abs_diff_over_joint_se_beta_{beta}"), (p_solve - p_walk).abs() / se, 3.0));
        o.table.rows.push(vec![beta, p, p_walk, p_solve, se]);
    }
    let d = brownian_path(grid, RngStream::new(seed, 0));
    let zero = solve_sdelt_with_driver(&SdeltSpec::skew(0.0, 0.0), &d)?.x;
    let gap = zero.values().iter().zip(d.values()).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    o.put("beta_0_max_abs_diff_to_driver", gap);
    o.checks.push(Check::le("beta_0_max_abs_diff_to_driver", gap, 1e-12));
    o.checks.push(Check::holds("beta_0.6_rejected", validate_spec(&SdeltSpec::skew(0.6, 0.0)).is_err()));
    Ok(o)
}

/// Residual floor below which both resolutions count as converged.
const RESIDUAL_FLOOR: f64 = 1e-12;

fn sdelt_residual(res: &Resolution, seed: u64, spec: Option<&SpecFile>) -> Result<Outcome> {
    let (spec, control) = match spec {
        Some(f) => {
            let s = f.to_spec()?;
            (s, None)
        }
        None => (SdeltSpec::skew(0.4, 0.0), Some(SdeltSpec::skew(0.2, 0.0))),
    };
    let grid = res.grid();
    let rows = collect(res.n_paths, |k| {
        let fine_d = brownian_path(grid, RngStream::new(seed, k as u64));
        let coarse_d = coarse_of(&fine_d)?;
        let fine = solve_sdelt_with_driver(&spec, &fine_d)?.x;
        let coarse = solve_sdelt_with_driver(&spec, &coarse_d)?.x;
        let mut r = vec![
            verify_sdelt(&coarse, &spec, &coarse_d)?.terminal_abs,
            verify_sdelt(&fine, &spec, &fine_d)?.terminal_abs,
            verify_sdelt_with(&coarse, &spec, &coarse_d, AtomLocalTime::GridTanaka)?.terminal_abs,
            verify_sdelt_with(&fine, &spec, &fine_d, AtomLocalTime::GridTanaka)?.terminal_abs,
        ];
        if let Some(c) = &control {
            r.push(verify_sdelt(&coarse, c, &coarse_d)?.terminal_abs);
            r.push(verify_sdelt(&fine, c, &fine_d)?.terminal_abs);
        }
        Ok(r)
    })?;
    let col = |j: usize| -> Vec<f64> { rows.iter().map(|r| r[j]).collect() };
    let med = |j: usize| stats::median(&col(j));
    let mut o = Outcome::default();
    let (mc, mf) = (med(0), med(1));
    o.put("median_terminal_residual_coarse", mc);
    o.put("median_terminal_residual_fine", mf);
    o.put("median_grid_tanaka_residual_coarse", med(2));
    o.put("median_grid_tanaka_residual_fine", med(3));
    o.checks.push(Check::le("median_terminal_residual", mf, 0.1));
    let shrinks = mf <= 0.75 * mc || (mf <= RESIDUAL_FLOOR && mc <= RESIDUAL_FLOOR);
    o.checks.push(Check::holds("shrinks_25pct_or_at_floor", shrinks));
    let mut header = vec!["path", "residual_coarse", "residual_fine", "grid_tanaka_coarse", "grid_tanaka_fine"];
    if control.is_some() {
        let (cc, cf) = (med(4), med(5));
        o.put("control_median_coarse", cc);
        o.put("control_median_fine", cf);
        o.checks.push(Check::ge("control_fine_over_coarse", cf / cc, 0.75));
        header.extend(["control_coarse", "control_fine"]);
    }
    o.table = Table::new(&header);
    o.table.rows = rows.iter().enumerate().map(|(k, r)| [&[k as f64][..], &r[..]].concat()).collect();
    Ok(o)
}

fn drift_absorption(res: &Resolution, seed: u64, spec: Option<&SpecFile>) -> Result<Outcome> {
    let spec = match spec {
        Some(f) => f.to_spec()?,
        None => SdeltSpec::new(
            crate::sdelt::Coef::constant(1.0),
            crate::sdelt::Coef::constant(1.0),
            crate::sdelt::Coef::zero(),
            RadonMeasure::zero(),
            0.0,
        ),
    };
    if !spec.nu.is_zero() {
        return Err(Error::Config("drift_absorption compares against plain Euler and needs nu = 0".into()));
    }
    let grid = res.grid();
    let n = res.n_paths;
    let ends = collect(n, |k| {
        let d1 = brownian_path(grid, RngStream::new(seed, k as u64));
        let d2 = brownian_path(grid, RngStream::new(seed, ORACLE_STREAM + k as u64));
        let a = solve_sdelt_with_driver(&spec, &d1)?.x.terminal();
        let (b, s) = (spec.b.clone(), spec.sigma.clone());
        let e = euler_solve(move |t, x| b.eval(t, x), move |t, x| s.eval(t, x), spec.x0, grid, &d2)?.terminal();
        Ok((a, e))
    })?;
    let (a, e): (Vec<f64>, Vec<f64>) = ends.into_iter().unzip();
    let se_mean = (stats::std_err(&a).powi(2) + stats::std_err(&e).powi(2)).sqrt();
    let (va, ve) = (stats::variance(&a), stats::variance(&e));
    // SE of a sample variance, normal approximation
    let sv = |v: f64| v * (2.0 / (n as f64 - 1.0)).sqrt();
    let se_var = (sv(va).powi(2) + sv(ve).powi(2)).sqrt();
    let mut o = Outcome::default();
    o.put("mean_absorbed", stats::mean(&a));
    o.put("mean_euler", stats::mean(&e));
    o.put("var_absorbed", va);
    o.put("var_euler", ve);
    o.checks.push(Check::le("mean_diff_over_se", (stats::mean(&a) - stats::mean(&e)).abs() / se_mean, 3.0));
    o.checks.push(Check::le("var_diff_over_se", (va - ve).abs() / se_var, 3.0));
    o.table = Table::new(&["path", "terminal_absorbed", "terminal_euler"]);
    o.table.rows = a.iter().zip(&e).enumerate().map(|(k, (x, y))| vec![k as f64, *x, *y]).collect();
    Ok(o)
}

fn symmetric_local_time(res: &Resolution, seed: u64) -> Result<Outcome> {
    let beta = 0.4;
    let spec = SdeltSpec::skew(beta, 0.0);
    let grid = res.grid();
    let rows = collect(res.n_paths, |k| {
        let d = brownian_path(grid, RngStream::new(seed, k as u64));
        let x = solve_sdelt_with_driver(&spec, &d)?.x;
        let right = local_time_field(&x, &[0.0], SideConvention::Right)?;
        let sym = symmetric_from_right(&right, |_, _| 1.0, &spec.nu)?;
        let exact = (0..grid.len()).all(|i| sym.value(i, 0) == (1.0 - beta) * right.value(i, 0));
        let occ = local_time_occupation(&x, 0.0, grid.dt().sqrt(), SideConvention::Symmetric)?.terminal();
        Ok([right.terminal(0), sym.terminal(0), occ, exact as u32 as f64])
    })?;
    let all_exact = rows.iter().all(|r| r[3] == 1.0);
    let diffs: Vec<f64> = rows.iter().map(|r| (r[1] - r[2]).abs()).collect();
    let mut o = Outcome::default();
    o.put("beta", beta);
    o.put("mean_symmetric", stats::mean(&rows.iter().map(|r| r[1]).collect::<Vec<_>>()));
    o.put("mean_occupation", stats::mean(&rows.iter().map(|r| r[2]).collect::<Vec<_>>()));
    o.put("mean_abs_diff", stats::mean(&diffs));
    o.checks.push(Check::holds("nodewise_exact_factor", all_exact));
    o.checks.push(Check::le("mean_abs_diff_to_occupation", stats::mean(&diffs), 0.05));
    o.table = Table::new(&["path", "right", "symmetric", "occupation_symmetric", "exact"]);
    o.table.rows = rows.iter().enumerate().map(|(k, r)| [&[k as f64][..], &r[..]].concat()).collect();
    Ok(o)
}
