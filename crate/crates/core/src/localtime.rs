//! Local-time estimators: the discrete Tanaka formula, the flat-window
//! occupation estimator, (time x level) fields, side conversion and step
//! approximation of fields.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::RadonMeasure;
use crate::pathsim::{fmt17, SamplePath, TimeGrid};

/// Which one-sided limit defines local time, through the value of `sgn(0)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SideConvention {
    /// `sgn(0) = -1`.
    Right,
    /// `sgn(0) = +1`.
    Left,
    /// `sgn(0) = 0`.
    Symmetric,
}

impl SideConvention {
    pub fn sgn0(self) -> f64 {
        match self {
            SideConvention::Right => -1.0,
            SideConvention::Left => 1.0,
            SideConvention::Symmetric => 0.0,
        }
    }

    #[inline]
    pub fn sgn(self, y: f64) -> f64 {
        if y > 0.0 {
            1.0
        } else if y < 0.0 {
            -1.0
        } else {
            self.sgn0()
        }
    }

    /// Occupation window `[lo, hi)` / `(lo, hi]` membership for level `a`.
    #[inline]
    fn in_window(self, x: f64, a: f64, eps: f64) -> bool {
        match self {
            SideConvention::Right => x >= a && x < a + eps,
            SideConvention::Left => x > a - eps && x <= a,
            SideConvention::Symmetric => x > a - 0.5 * eps && x <= a + 0.5 * eps,
        }
    }
}

/// One step of the discrete Tanaka formula for `y = X - a`.
/// Exactly zero unless the step changes side (or starts at 0 under the
/// symmetric convention).
#[inline]
pub(crate) fn tanaka_increment(y0: f64, y1: f64, side: SideConvention) -> f64 {
    (y1.abs() - y0.abs()) - side.sgn(y0) * (y1 - y0)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TanakaDiagnostics {
    /// Largest gap between the monotonized output and the raw formula.
    pub correction: f64,
    /// `correction > 5·sqrt(Δt)`.
    pub warning: bool,
}

/// `|X_t-a| - |X_0-a| - Σ sgn(X_i-a)(X_{i+1}-X_i)`, monotonized by running
/// maximum (which also clamps at 0).
pub fn local_time_tanaka(x: &SamplePath, a: f64, side: SideConvention) -> SamplePath {
    local_time_tanaka_with_diagnostics(x, a, side).0
}

pub fn local_time_tanaka_with_diagnostics(x: &SamplePath, a: f64, side: SideConvention) -> (SamplePath, TanakaDiagnostics) {
    let v = x.values();
    let mut out = Vec::with_capacity(v.len());
    let mut raw = 0.0f64;
    let mut run = 0.0f64;
    let mut correction = 0.0f64;
    out.push(0.0);
    let mut y0 = v[0] - a;
    for &xi in &v[1..] {
        let y1 = xi - a;
        raw += tanaka_increment(y0, y1, side);
        if raw > run {
            run = raw;
        }
        correction = correction.max(run - raw);
        out.push(run);
        y0 = y1;
    }
    let warning = correction > 5.0 * x.grid().dt().sqrt();
    (
        SamplePath::new(*x.grid(), out).expect("same grid"),
        TanakaDiagnostics { correction, warning },
    )
}

/// `(1/ε) Σ 1_window(X_i) Δ⟨X⟩_i`. Uses the path's qv track, or realized
/// quadratic variation when the path has none.
pub fn local_time_occupation(x: &SamplePath, a: f64, eps: f64, side: SideConvention) -> Result<SamplePath> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::contract(format!("window width must be positive, got {eps}")));
    }
    let dq = x.qv_increments();
    let v = x.values();
    let mut out = Vec::with_capacity(v.len());
    let mut acc = 0.0;
    out.push(acc);
    for i in 0..dq.len() {
        if side.in_window(v[i], a, eps) {
            acc += dq[i] / eps;
        }
        out.push(acc);
    }
    SamplePath::new(*x.grid(), out)
}

/// A column stored as the nodes where its value changes.
#[derive(Clone, Debug, Default, PartialEq)]
struct Column {
    nodes: Vec<u32>,
    values: Vec<f64>,
}

impl Column {
    #[inline]
    fn value(&self, node: usize) -> f64 {
        let k = self.nodes.partition_point(|&n| n as usize <= node);
        if k == 0 {
            0.0
        } else {
            self.values[k - 1]
        }
    }

    fn push(&mut self, node: usize, value: f64) {
        self.nodes.push(node as u32);
        self.values.push(value);
    }

    fn from_dense(col: &[f64]) -> Self {
        let mut c = Column::default();
        let mut prev = 0.0;
        for (i, &v) in col.iter().enumerate() {
            if v != prev {
                c.push(i, v);
                prev = v;
            }
        }
        c
    }
}

/// Local time over a (time node x level) grid.
///
/// Columns are stored by their change points: a discrete local-time column
/// only moves on steps that cross its level.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalTimeField {
    tgrid: TimeGrid,
    levels: Vec<f64>,
    side: SideConvention,
    columns: Vec<Column>,
}

impl LocalTimeField {
    /// Build from dense columns (`columns[j][node]`).
    pub fn from_columns(tgrid: TimeGrid, levels: Vec<f64>, side: SideConvention, columns: &[Vec<f64>]) -> Result<Self> {
        check_levels(&levels)?;
        if columns.len() != levels.len() || columns.iter().any(|c| c.len() != tgrid.len()) {
            return Err(Error::contract("column shape does not match grid"));
        }
        for c in columns {
            if c[0] != 0.0 || c.windows(2).any(|w| w[1] < w[0]) || c.iter().any(|v| !v.is_finite()) {
                return Err(Error::contract("columns must start at 0 and be nondecreasing"));
            }
        }
        Ok(Self {
            tgrid,
            levels,
            side,
            columns: columns.iter().map(|c| Column::from_dense(c)).collect(),
        })
    }

    pub fn tgrid(&self) -> &TimeGrid {
        &self.tgrid
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn side(&self) -> SideConvention {
        self.side
    }

    pub fn n_levels(&self) -> usize {
        self.levels.len()
    }

    /// Index of a level equal to `a` exactly.
    pub fn level_index(&self, a: f64) -> Option<usize> {
        self.levels.binary_search_by(|x| x.total_cmp(&a)).ok()
    }

    #[inline]
    pub fn value(&self, node: usize, level: usize) -> f64 {
        self.columns[level].value(node)
    }

    pub fn terminal(&self, level: usize) -> f64 {
        self.columns[level].values.last().copied().unwrap_or(0.0)
    }

    pub fn column(&self, level: usize) -> Vec<f64> {
        let c = &self.columns[level];
        let mut out = vec![0.0; self.tgrid.len()];
        for (k, (&n, &v)) in c.nodes.iter().zip(&c.values).enumerate() {
            let end = c.nodes.get(k + 1).map_or(out.len(), |&m| m as usize);
            out[n as usize..end].fill(v);
        }
        out
    }

    /// `(node, value)` change points of a column.
    pub fn events(&self, level: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let c = &self.columns[level];
        c.nodes.iter().zip(&c.values).map(|(&n, &v)| (n as usize, v))
    }

    /// `(step, ΔL)` for steps `i -> i+1` where the column moves.
    pub fn increments(&self, level: usize) -> Vec<(usize, f64)> {
        let mut prev = 0.0;
        self.events(level)
            .map(|(n, v)| {
                let d = v - prev;
                prev = v;
                (n - 1, d)
            })
            .collect()
    }

    /// `Σ g(t_i) ΔL_i` over the whole column (left-point Stieltjes sum).
    pub fn stieltjes(&self, level: usize, g: impl Fn(f64) -> f64) -> f64 {
        let mut s = 0.0;
        let mut prev = 0.0;
        for (n, v) in self.events(level) {
            s += g(self.tgrid.time(n - 1)) * (v - prev);
            prev = v;
        }
        s
    }

    /// Dense `[node][level]` matrix.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let cols: Vec<Vec<f64>> = (0..self.levels.len()).map(|j| self.column(j)).collect();
        (0..self.tgrid.len()).map(|i| cols.iter().map(|c| c[i]).collect()).collect()
    }

    /// CSV matrix: first row holds the levels, first column the times.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        write!(w, "t")?;
        for a in &self.levels {
            write!(w, ",{}", fmt17(*a))?;
        }
        writeln!(w)?;
        let cols: Vec<Vec<f64>> = (0..self.levels.len()).map(|j| self.column(j)).collect();
        for i in 0..self.tgrid.len() {
            write!(w, "{}", fmt17(self.tgrid.time(i)))?;
            for c in &cols {
                write!(w, ",{}", fmt17(c[i]))?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    /// JSON sidecar for [`LocalTimeField::write_csv`].
    pub fn sidecar(&self) -> FieldSidecar {
        FieldSidecar {
            schema_version: 1,
            side: self.side,
            t0: self.tgrid.t0,
            t_end: self.tgrid.t_end,
            n_steps: self.tgrid.n_steps,
            n_levels: self.levels.len(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldSidecar {
    pub schema_version: u32,
    pub side: SideConvention,
    pub t0: f64,
    pub t_end: f64,
    pub n_steps: usize,
    pub n_levels: usize,
}

fn check_levels(levels: &[f64]) -> Result<()> {
    if levels.iter().any(|a| !a.is_finite()) {
        return Err(Error::contract("levels must be finite"));
    }
    if levels.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::contract("levels must be sorted and distinct"));
    }
    Ok(())
}

/// Tanaka estimator at every level of `levels`. Each column equals
/// [`local_time_tanaka`] at that level bit for bit.
pub fn local_time_field(x: &SamplePath, levels: &[f64], side: SideConvention) -> Result<LocalTimeField> {
    check_levels(levels)?;
    let v = x.values();
    let m = levels.len();
    let mut raw = vec![0.0f64; m];
    let mut run = vec![0.0f64; m];
    let mut columns = vec![Column::default(); m];
    for i in 0..v.len() - 1 {
        let (x0, x1) = (v[i], v[i + 1]);
        let (lo, hi) = if x0 <= x1 { (x0, x1) } else { (x1, x0) };
        // levels outside [lo, hi] see no sign change, so their increment is exactly 0
        let start = levels.partition_point(|&a| a < lo);
        let end = levels.partition_point(|&a| a <= hi);
        for j in start..end {
            let a = levels[j];
            let inc = tanaka_increment(x0 - a, x1 - a, side);
            if inc != 0.0 {
                raw[j] += inc;
                if raw[j] > run[j] {
                    run[j] = raw[j];
                    columns[j].push(i + 1, run[j]);
                }
            }
        }
    }
    Ok(LocalTimeField {
        tgrid: *x.grid(),
        levels: levels.to_vec(),
        side,
        columns,
    })
}

/// Uniform levels with spacing `h` covering `[lo - h, hi + h]`, plus `extra`
/// (e.g. atoms) merged in.
pub fn uniform_levels(lo: f64, hi: f64, h: f64, extra: &[f64]) -> Vec<f64> {
    let k0 = (lo / h).floor() as i64 - 1;
    let k1 = (hi / h).ceil() as i64 + 1;
    let mut out: Vec<f64> = (k0..=k1).map(|k| k as f64 * h).collect();
    out.extend(extra.iter().copied().filter(|x| x.is_finite()));
    out.sort_by(f64::total_cmp);
    out.dedup();
    out
}

/// Converts a right local-time field of an SDE-with-local-time solution into
/// the symmetric one: at an atom `a` of `nu`,
/// `L̃ᵃ_t = ∫₀ᵗ (1 - h(s,a)·nu({a})) d_s Lᵃ_s`. Other columns are copied.
pub fn symmetric_from_right(field: &LocalTimeField, h: impl Fn(f64, f64) -> f64, nu: &RadonMeasure) -> Result<LocalTimeField> {
    if field.side != SideConvention::Right {
        return Err(Error::contract("input field must hold right local time"));
    }
    let mut columns = Vec::with_capacity(field.columns.len());
    for (j, col) in field.columns.iter().enumerate() {
        let a = field.levels[j];
        let w = nu.atom(a);
        if w == 0.0 {
            columns.push(col.clone());
            continue;
        }
        let mut out = Column::default();
        // summation by parts: a constant factor gives c·L exactly
        let mut carry = 0.0;
        let mut prev_c = f64::NAN;
        let mut prev_v = 0.0;
        for (&n, &v) in col.nodes.iter().zip(&col.values) {
            let t = field.tgrid.time(n as usize - 1);
            let hw = h(t, a) * w;
            if !(hw.abs() < 1.0) {
                return Err(Error::contract(format!("|h·nu({{{a}}})| = {} >= 1 at t = {t}", hw.abs())));
            }
            let c = 1.0 - hw;
            if prev_c.is_finite() {
                carry += (c - prev_c) * prev_v;
            }
            out.push(n as usize, c * v - carry);
            prev_c = c;
            prev_v = v;
        }
        columns.push(out);
    }
    Ok(LocalTimeField {
        tgrid: field.tgrid,
        levels: field.levels.clone(),
        side: SideConvention::Symmetric,
        columns,
    })
}

/// Piecewise-constant approximation of a field on a product partition.
#[derive(Clone, Debug, PartialEq)]
pub struct StepField {
    /// First node of each time cell.
    pub time_cuts: Vec<usize>,
    /// First level index of each level cell.
    pub level_cuts: Vec<usize>,
    /// Cell values, `[time cell][level cell]`.
    pub values: Vec<f64>,
    /// Achieved sup over grid nodes of |field - approximation|.
    pub sup_error: f64,
}

impl StepField {
    pub fn cells(&self) -> usize {
        self.time_cuts.len() * self.level_cuts.len()
    }

    pub fn eval(&self, node: usize, level: usize) -> f64 {
        let p = self.time_cuts.partition_point(|&c| c <= node) - 1;
        let q = self.level_cuts.partition_point(|&c| c <= level) - 1;
        self.values[p * self.level_cuts.len() + q]
    }
}

#[derive(Clone, Copy, Debug)]
pub struct StepOptions {
    pub max_cells: usize,
}

impl Default for StepOptions {
    fn default() -> Self {
        Self { max_cells: 1 << 20 }
    }
}

/// Step approximation with sup error `< eps`. Each cell takes the midrange of
/// the field over the cell; the level partition is chosen first (bounded
/// spread across merged levels), then a greedy time partition.
pub fn step_approximation(field: &LocalTimeField, eps: f64, opts: StepOptions) -> Result<StepField> {
    if !(eps > 0.0) {
        return Err(Error::contract("eps must be positive"));
    }
    let m = field.levels.len();
    if m == 0 {
        return Err(Error::contract("field has no levels"));
    }
    let mut best: Option<StepField> = None;
    for share in [0.25, 0.5, 0.75] {
        let level_cuts = level_partition(field, share * 2.0 * eps);
        if let Some(s) = time_partition(field, &level_cuts, 2.0 * eps) {
            if best.as_ref().map_or(true, |b| s.cells() < b.cells()) {
                best = Some(s);
            }
        }
    }
    let best = best.ok_or_else(|| Error::Resolution("no admissible partition".into()))?;
    if best.cells() > opts.max_cells {
        return Err(Error::Resolution(format!(
            "needs {} cells for eps = {eps}, limit is {}",
            best.cells(),
            opts.max_cells
        )));
    }
    debug_assert!(best.sup_error < eps);
    Ok(best)
}

/// Greedy merge of adjacent levels while max_t(spread across the group) < budget.
fn level_partition(field: &LocalTimeField, budget: f64) -> Vec<usize> {
    let m = field.levels.len();
    let cols: Vec<Vec<(usize, f64)>> = (0..m).map(|j| field.events(j).collect()).collect();
    let mut cuts = vec![0];
    let mut group: Vec<usize> = vec![0];
    for j in 1..m {
        group.push(j);
        if max_spread(&group.iter().map(|&k| &cols[k]).collect::<Vec<_>>()) >= budget {
            cuts.push(j);
            group = vec![j];
        }
    }
    cuts
}

/// Sup over time of (max - min) across several step columns.
fn max_spread(cols: &[&Vec<(usize, f64)>]) -> f64 {
    let mut idx = vec![0usize; cols.len()];
    let mut cur = vec![0.0f64; cols.len()];
    let mut worst = 0.0f64;
    loop {
        let next = cols
            .iter()
            .zip(&idx)
            .filter_map(|(c, &k)| c.get(k).map(|e| e.0))
            .min();
        let Some(node) = next else { break };
        for (q, c) in cols.iter().enumerate() {
            while idx[q] < c.len() && c[idx[q]].0 == node {
                cur[q] = c[idx[q]].1;
                idx[q] += 1;
            }
        }
        let (lo, hi) = cur.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
        worst = worst.max(hi - lo);
    }
    worst
}

fn time_partition(field: &LocalTimeField, level_cuts: &[usize], budget: f64) -> Option<StepField> {
    let m = field.levels.len();
    let nq = level_cuts.len();
    let cell_of: Vec<usize> = (0..m).map(|j| level_cuts.partition_point(|&c| c <= j) - 1).collect();
    // all events in time order
    let mut events: Vec<(usize, usize, f64)> = Vec::new();
    for j in 0..m {
        events.extend(field.events(j).map(|(n, v)| (n, j, v)));
    }
    events.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(&b.1)));

    let mut cur = vec![0.0f64; m];
    let mut base_min = vec![0.0f64; nq];
    let mut cell_max = vec![0.0f64; nq];
    let mut time_cuts = vec![0usize];
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut sup_error = 0.0f64;

    let close_row = |base_min: &[f64], cell_max: &[f64], rows: &mut Vec<Vec<f64>>, sup: &mut f64| {
        rows.push(base_min.iter().zip(cell_max).map(|(lo, hi)| 0.5 * (lo + hi)).collect());
        for (lo, hi) in base_min.iter().zip(cell_max) {
            *sup = sup.max(0.5 * (hi - lo));
        }
    };

    let mut k = 0;
    while k < events.len() {
        let node = events[k].0;
        let mut end = k;
        while end < events.len() && events[end].0 == node {
            let (_, j, v) = events[end];
            cur[j] = v;
            end += 1;
        }
        let over = (k..end).any(|e| {
            let q = cell_of[events[e].1];
            cur[events[e].1].max(cell_max[q]) - base_min[q] >= budget
        });
        if over {
            close_row(&base_min, &cell_max, &mut rows, &mut sup_error);
            time_cuts.push(node);
            for q in 0..nq {
                let lo_j = level_cuts[q];
                let hi_j = level_cuts.get(q + 1).copied().unwrap_or(m);
                let (lo, hi) = cur[lo_j..hi_j]
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
                if hi - lo >= budget {
                    return None;
                }
                base_min[q] = lo;
                cell_max[q] = hi;
            }
        } else {
            for e in k..end {
                let q = cell_of[events[e].1];
                cell_max[q] = cell_max[q].max(cur[events[e].1]);
            }
        }
        k = end;
    }
    close_row(&base_min, &cell_max, &mut rows, &mut sup_error);
    Some(StepField {
        time_cuts,
        level_cuts: level_cuts.to_vec(),
        values: rows.into_iter().flatten().collect(),
        sup_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pathsim::brownian_path;
    use crate::rng::RngStream;

    fn bm(exp: u32, seed: u64) -> SamplePath {
        brownian_path(TimeGrid::dyadic(exp), RngStream::new(seed, 0))
    }

    #[test]
    fn sgn_conventions() {
        assert_eq!(SideConvention::Right.sgn(0.0), -1.0);
        assert_eq!(SideConvention::Left.sgn(0.0), 1.0);
        assert_eq!(SideConvention::Symmetric.sgn(0.0), 0.0);
        assert_eq!(SideConvention::Right.sgn(2.0), 1.0);
    }

    #[test]
    fn unvisited_level_is_zero() {
        let g = TimeGrid::dyadic(8);
        let p = SamplePath::new(g, g.times().iter().map(|t| 1.0 + t).collect()).unwrap();
        let l = local_time_tanaka(&p, 0.5, SideConvention::Right);
        assert!(l.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn translation_exact() {
        let p = bm(10, 1);
        for a in [0.1, -0.37, 0.0] {
            let l1 = local_time_tanaka(&p, a, SideConvention::Right);
            let l2 = local_time_tanaka(&p.shifted(a), 0.0, SideConvention::Right);
            assert_eq!(l1.values(), l2.values());
        }
    }

    #[test]
    fn hand_computed_crossings() {
        // 0 -> 1 -> -1 -> 2: increments 2|X|... right convention, level 0
        let g = TimeGrid::new(0.0, 3.0, 3).unwrap();
        let p = SamplePath::new(g, vec![0.0, 1.0, -1.0, 2.0]).unwrap();
        let l = local_time_tanaka(&p, 0.0, SideConvention::Right);
        assert_eq!(l.values(), &[0.0, 2.0, 4.0, 8.0]);
        let l = local_time_tanaka(&p, 0.0, SideConvention::Left);
        assert_eq!(l.values(), &[0.0, 0.0, 2.0, 6.0]);
        let l = local_time_tanaka(&p, 0.0, SideConvention::Symmetric);
        assert_eq!(l.values(), &[0.0, 1.0, 3.0, 7.0]);
    }

    #[test]
    fn occupation_basics() {
        let p = bm(10, 2);
        assert!(local_time_occupation(&p, 0.0, 0.0, SideConvention::Right).is_err());
        let far = local_time_occupation(&p, 50.0, 0.1, SideConvention::Right).unwrap();
        assert_eq!(far.terminal(), 0.0);
        let o = local_time_occupation(&p, 0.0, 0.05, SideConvention::Symmetric).unwrap();
        assert!(o.values().windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn field_columns_match_fixed_level() {
        let p = bm(12, 3);
        let (lo, hi) = p.min_max();
        let levels = uniform_levels(lo, hi, 1.0 / 64.0, &[0.0123]);
        for side in [SideConvention::Right, SideConvention::Left, SideConvention::Symmetric] {
            let f = local_time_field(&p, &levels, side).unwrap();
            for j in (0..levels.len()).step_by(7) {
                let l = local_time_tanaka(&p, levels[j], side);
                assert_eq!(f.column(j), l.values(), "level {}", levels[j]);
            }
        }
    }

    #[test]
    fn field_support_and_order() {
        let p = bm(10, 4);
        let (lo, hi) = p.min_max();
        let f = local_time_field(&p, &[lo - 1.0, lo - 0.5, hi, hi + 0.5], SideConvention::Right).unwrap();
        for j in 0..4 {
            assert_eq!(f.terminal(j), 0.0);
        }
        assert!(local_time_field(&p, &[0.0, -1.0], SideConvention::Right).is_err());
    }

    #[test]
    fn symmetric_relation_constant_factor() {
        let p = bm(12, 5);
        let f = local_time_field(&p, &[-0.5, 0.0, 0.5], SideConvention::Right).unwrap();
        let nu = RadonMeasure::dirac(0.0).scaled(0.4);
        let s = symmetric_from_right(&f, |_, _| 1.0, &nu).unwrap();
        assert_eq!(s.side(), SideConvention::Symmetric);
        let c = 1.0 - 0.4;
        for (a, b) in s.column(1).iter().zip(f.column(1)) {
            assert_eq!(*a, c * b);
        }
        assert_eq!(s.column(0), f.column(0));
        let none = symmetric_from_right(&f, |_, _| 1.0, &RadonMeasure::zero()).unwrap();
        assert_eq!(none.to_dense(), f.to_dense());
        let bad = symmetric_from_right(&f, |_, _| 3.0, &nu);
        assert!(bad.is_err() || f.terminal(1) == 0.0);
        let left = local_time_field(&p, &[0.0], SideConvention::Left).unwrap();
        assert!(symmetric_from_right(&left, |_, _| 1.0, &nu).is_err());
    }

    #[test]
    fn step_approximation_constant_field() {
        let g = TimeGrid::dyadic(4);
        let cols = vec![vec![0.0; 17], vec![0.0; 17]];
        let f = LocalTimeField::from_columns(g, vec![0.0, 1.0], SideConvention::Right, &cols).unwrap();
        let s = step_approximation(&f, 0.1, StepOptions::default()).unwrap();
        assert_eq!(s.cells(), 1);
        assert_eq!(s.sup_error, 0.0);
    }

    #[test]
    fn step_approximation_error_bound() {
        let p = bm(12, 6);
        let (lo, hi) = p.min_max();
        let levels = uniform_levels(lo, hi, 1.0 / 32.0, &[]);
        let f = local_time_field(&p, &levels, SideConvention::Right).unwrap();
        let eps = 0.1;
        let s = step_approximation(&f, eps, StepOptions::default()).unwrap();
        let dense = f.to_dense();
        let mut worst = 0.0f64;
        for (i, row) in dense.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                worst = worst.max((v - s.eval(i, j)).abs());
            }
        }
        assert!(worst < eps, "{worst}");
        assert!((worst - s.sup_error).abs() < 1e-12);
        let tight = step_approximation(&f, 1e-4, StepOptions { max_cells: 16 });
        assert!(matches!(tight, Err(Error::Resolution(_))));
    }

    #[test]
    fn step_approximation_bm_cell_count() {
        let p = bm(16, 7);
        let (lo, hi) = p.min_max();
        let levels = uniform_levels(lo, hi, 1.0 / 256.0, &[]);
        let f = local_time_field(&p, &levels, SideConvention::Right).unwrap();
        let s = step_approximation(&f, 0.1, StepOptions::default()).unwrap();
        assert!(s.sup_error < 0.1);
        assert!(s.cells() <= 1 << 16, "{}", s.cells());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(48))]

            #[test]
            fn nondecreasing_and_nonnegative(seed in 0u64..10_000, a in -1.0f64..1.0) {
                let p = bm(9, seed);
                for side in [SideConvention::Right, SideConvention::Left, SideConvention::Symmetric] {
                    let l = local_time_tanaka(&p, a, side);
                    prop_assert!(l.values()[0] == 0.0);
                    prop_assert!(l.values().windows(2).all(|w| w[1] >= w[0]));
                }
            }

            #[test]
            fn scaling_by_powers_of_two(seed in 0u64..10_000, k in -3i32..4, a in -1.0f64..1.0) {
                let p = bm(9, seed);
                let c = 2f64.powi(k);
                let l1 = local_time_tanaka(&p, a, SideConvention::Right);
                let l2 = local_time_tanaka(&p.scaled(c), c * a, SideConvention::Right);
                for (u, v) in l1.values().iter().zip(l2.values()) {
                    prop_assert_eq!(c * u, *v);
                }
            }

            #[test]
            fn zero_outside_range(seed in 0u64..10_000, d in 0.001f64..2.0) {
                let p = bm(9, seed);
                let (lo, hi) = p.min_max();
                prop_assert_eq!(local_time_tanaka(&p, hi + d, SideConvention::Right).terminal(), 0.0);
                prop_assert_eq!(local_time_tanaka(&p, lo - d, SideConvention::Left).terminal(), 0.0);
            }

            #[test]
            fn sides_agree_off_grid(seed in 0u64..10_000) {
                // off the grid values the three conventions agree
                let p = bm(9, seed).shifted(1e-7);
                let r = local_time_tanaka(&p, 0.123456789, SideConvention::Right);
                let l = local_time_tanaka(&p, 0.123456789, SideConvention::Left);
                prop_assert_eq!(r.values(), l.values());
            }
        }
    }
}
