//! Uniform time grids, sampled paths, Brownian drivers, Euler–Maruyama and
//! grid-level stochastic integrals.
//!
//! Everything evaluates integrands at left endpoints and accumulates sums
//! strictly left to right, so a path is a pure function of
//! `(seed, stream_id, grid)` no matter how many workers generated it.

use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngStream;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub t0: f64,
    pub t_end: f64,
    pub n_steps: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, t_end: f64, n_steps: usize) -> Result<Self> {
        if !(t0.is_finite() && t_end.is_finite()) || t_end <= t0 {
            return Err(Error::contract(format!("grid needs t0 < T, got [{t0}, {t_end}]")));
        }
        if n_steps == 0 {
            return Err(Error::contract("grid needs at least one step"));
        }
        Ok(Self { t0, t_end, n_steps })
    }

    /// `[0, 1]` with `2^exp` steps.
    pub fn dyadic(exp: u32) -> Self {
        Self {
            t0: 0.0,
            t_end: 1.0,
            n_steps: 1usize << exp,
        }
    }

    #[inline]
    pub fn dt(&self) -> f64 {
        (self.t_end - self.t0) / self.n_steps as f64
    }

    /// Number of nodes (`n_steps + 1`).
    #[inline]
    pub fn len(&self) -> usize {
        self.n_steps + 1
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    /// Time of node `i`; the last node is `T` exactly.
    #[inline]
    pub fn time(&self, i: usize) -> f64 {
        if i >= self.n_steps {
            self.t_end
        } else {
            (i as f64).mul_add(self.dt(), self.t0)
        }
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.time(i)).collect()
    }

    /// Largest node index with time `<= t` (clamped to the grid).
    pub fn node_at_or_before(&self, t: f64) -> usize {
        if t <= self.t0 {
            return 0;
        }
        if t >= self.t_end {
            return self.n_steps;
        }
        let mut i = ((t - self.t0) / self.dt()).floor() as usize;
        i = i.min(self.n_steps);
        while i > 0 && self.time(i) > t {
            i -= 1;
        }
        while i < self.n_steps && self.time(i + 1) <= t {
            i += 1;
        }
        i
    }

    /// Node index whose time equals `t` to within a small fraction of a step.
    pub fn node_exact(&self, t: f64) -> Option<usize> {
        let i = ((t - self.t0) / self.dt()).round();
        if i < 0.0 || i > self.n_steps as f64 {
            return None;
        }
        let i = i as usize;
        ((self.time(i) - t).abs() <= 1e-9 * self.dt()).then_some(i)
    }

    /// Grid keeping every `factor`-th node.
    pub fn coarsen(&self, factor: usize) -> Result<Self> {
        if factor == 0 || self.n_steps % factor != 0 {
            return Err(Error::contract(format!(
                "cannot coarsen {} steps by {factor}",
                self.n_steps
            )));
        }
        Self::new(self.t0, self.t_end, self.n_steps / factor)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Decomposition {
    pub martingale: Vec<f64>,
    pub bv: Vec<f64>,
}

/// One path on a uniform grid. `values[0]` is the initial value.
#[derive(Clone, Debug, PartialEq)]
pub struct SamplePath {
    grid: TimeGrid,
    values: Vec<f64>,
    decomposition: Option<Decomposition>,
    qv: Option<Vec<f64>>,
}

impl SamplePath {
    pub fn new(grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::contract(format!(
                "{} values for a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self {
            grid,
            values,
            decomposition: None,
            qv: None,
        })
    }

    pub fn with_qv(mut self, qv: Vec<f64>) -> Result<Self> {
        if qv.len() != self.grid.len() {
            return Err(Error::contract("qv length does not match grid"));
        }
        if qv.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::contract("qv must be nondecreasing"));
        }
        self.qv = Some(qv);
        Ok(self)
    }

    pub fn with_decomposition(mut self, martingale: Vec<f64>, bv: Vec<f64>) -> Result<Self> {
        if martingale.len() != self.grid.len() || bv.len() != self.grid.len() {
            return Err(Error::contract("decomposition length does not match grid"));
        }
        self.decomposition = Some(Decomposition { martingale, bv });
        Ok(self)
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn qv(&self) -> Option<&[f64]> {
        self.qv.as_deref()
    }

    pub fn decomposition(&self) -> Option<&Decomposition> {
        self.decomposition.as_ref()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn initial(&self) -> f64 {
        self.values[0]
    }

    pub fn terminal(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    pub fn value_at_time(&self, t: f64) -> f64 {
        self.values[self.grid.node_at_or_before(t)]
    }

    /// `X_{i+1} - X_i` for `i = 0..n`.
    pub fn increments(&self) -> impl Iterator<Item = f64> + '_ {
        self.values.windows(2).map(|w| w[1] - w[0])
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    /// Quadratic-variation increments: the stored track when present,
    /// otherwise squared path increments.
    pub fn qv_increments(&self) -> Vec<f64> {
        match &self.qv {
            Some(q) => q.windows(2).map(|w| w[1] - w[0]).collect(),
            None => self.increments().map(|d| d * d).collect(),
        }
    }

    /// `X_t - c(t)` nodewise. The quadratic-variation track is kept, the
    /// decomposition is dropped.
    pub fn minus_curve(&self, curve: impl Fn(f64) -> f64) -> SamplePath {
        let values = self
            .values
            .iter()
            .enumerate()
            .map(|(i, &x)| x - curve(self.grid.time(i)))
            .collect();
        SamplePath {
            grid: self.grid,
            values,
            decomposition: None,
            qv: self.qv.clone(),
        }
    }

    /// `X - a` nodewise (same rounding as the fixed-level estimators).
    pub fn shifted(&self, a: f64) -> SamplePath {
        self.minus_curve(|_| a)
    }

    pub fn scaled(&self, c: f64) -> SamplePath {
        SamplePath {
            grid: self.grid,
            values: self.values.iter().map(|x| c * x).collect(),
            decomposition: self.decomposition.as_ref().map(|d| Decomposition {
                martingale: d.martingale.iter().map(|x| c * x).collect(),
                bv: d.bv.iter().map(|x| c * x).collect(),
            }),
            qv: self.qv.as_ref().map(|q| q.iter().map(|x| c * c * x).collect()),
        }
    }

    /// Pointwise image `(t, x) -> f(t, x)`; decomposition and qv are dropped.
    pub fn map(&self, f: impl Fn(f64, f64) -> f64) -> SamplePath {
        SamplePath {
            grid: self.grid,
            values: self
                .values
                .iter()
                .enumerate()
                .map(|(i, &x)| f(self.grid.time(i), x))
                .collect(),
            decomposition: None,
            qv: None,
        }
    }

    /// Every `factor`-th node. A present qv track is replaced by the realized
    /// quadratic variation of the coarse path.
    pub fn subsample(&self, factor: usize) -> Result<SamplePath> {
        let grid = self.grid.coarsen(factor)?;
        let pick = |v: &[f64]| v.iter().step_by(factor).copied().collect::<Vec<_>>();
        let values = pick(&self.values);
        let qv = self.qv.as_ref().map(|_| cumulative_squares(&values));
        Ok(SamplePath {
            grid,
            decomposition: self.decomposition.as_ref().map(|d| Decomposition {
                martingale: pick(&d.martingale),
                bv: pick(&d.bv),
            }),
            values,
            qv,
        })
    }

    /// CSV dump: header `t,value[,m_part,bv_part,qv]`, 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let mut header = String::from("t,value");
        if self.decomposition.is_some() {
            header.push_str(",m_part,bv_part");
        }
        if self.qv.is_some() {
            header.push_str(",qv");
        }
        writeln!(w, "{header}")?;
        for i in 0..self.len() {
            write!(w, "{},{}", fmt17(self.grid.time(i)), fmt17(self.values[i]))?;
            if let Some(d) = &self.decomposition {
                write!(w, ",{},{}", fmt17(d.martingale[i]), fmt17(d.bv[i]))?;
            }
            if let Some(q) = &self.qv {
                write!(w, ",{}", fmt17(q[i]))?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    /// Reads the format produced by [`SamplePath::write_csv`]. The grid is
    /// recovered from the first and last time stamps.
    pub fn read_csv<R: BufRead>(r: R) -> Result<SamplePath> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Io("empty path file".into()))??;
        let cols: Vec<&str> = header.trim().split(',').collect();
        let has_decomp = cols.contains(&"m_part");
        let has_qv = cols.contains(&"qv");
        let expected = 2 + 2 * has_decomp as usize + has_qv as usize;
        if cols.len() != expected || cols[0] != "t" || cols[1] != "value" {
            return Err(Error::Io(format!("unexpected header `{header}`")));
        }
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let row = line
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Io(e.to_string()))?;
            if row.len() != expected {
                return Err(Error::Io(format!("row has {} fields", row.len())));
            }
            rows.push(row);
        }
        if rows.len() < 2 {
            return Err(Error::Io("path needs at least two rows".into()));
        }
        let grid = TimeGrid::new(rows[0][0], rows[rows.len() - 1][0], rows.len() - 1)?;
        let col = |k: usize| rows.iter().map(|r| r[k]).collect::<Vec<_>>();
        let mut p = SamplePath::new(grid, col(1))?;
        if has_decomp {
            p = p.with_decomposition(col(2), col(3))?;
        }
        if has_qv {
            p = p.with_qv(col(expected - 1))?;
        }
        Ok(p)
    }
}

pub(crate) fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

fn cumulative_squares(values: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    let mut acc = 0.0;
    out.push(acc);
    for w in values.windows(2) {
        let d = w[1] - w[0];
        acc += d * d;
        out.push(acc);
    }
    out
}

/// Standard Brownian motion started at 0, with qv = Σ(ΔB)².
pub fn brownian_path(grid: TimeGrid, rng: RngStream) -> SamplePath {
    let sd = grid.dt().sqrt();
    let z = rng.normals(grid.n_steps);
    let mut values = Vec::with_capacity(grid.len());
    let mut b = 0.0;
    values.push(b);
    for zi in z {
        b += sd * zi;
        values.push(b);
    }
    let qv = cumulative_squares(&values);
    SamplePath {
        grid,
        values,
        decomposition: None,
        qv: Some(qv),
    }
}

/// Drivers for streams `0..n_paths`, generated in parallel, returned in
/// stream order.
pub fn brownian_paths(grid: TimeGrid, seed: u64, n_paths: usize) -> Vec<SamplePath> {
    par_map(n_paths, |k| brownian_path(grid, RngStream::new(seed, k as u64)))
}

/// Order-preserving parallel map over `0..n`.
pub fn par_map<T: Send>(n: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    (0..n).into_par_iter().map(f).collect()
}

/// Euler–Maruyama for `dX = b(t,X) dt + σ(t,X) dB`.
pub fn euler_solve(
    b: impl Fn(f64, f64) -> f64,
    sigma: impl Fn(f64, f64) -> f64,
    x0: f64,
    grid: TimeGrid,
    driver: &SamplePath,
) -> Result<SamplePath> {
    euler_solve_with(|_, t, x| Ok((b(t, x), sigma(t, x))), x0, grid, driver)
}

/// Euler–Maruyama with a joint coefficient callback `(step, t, x) -> (drift, diffusion)`.
pub fn euler_solve_with(
    mut coeffs: impl FnMut(usize, f64, f64) -> Result<(f64, f64)>,
    x0: f64,
    grid: TimeGrid,
    driver: &SamplePath,
) -> Result<SamplePath> {
    if *driver.grid() != grid {
        return Err(Error::contract("driver grid differs from solve grid"));
    }
    if !x0.is_finite() {
        return Err(Error::numeric(0, "initial value"));
    }
    let n = grid.n_steps;
    let dt = grid.dt();
    let db = driver.values();
    let mut values = Vec::with_capacity(n + 1);
    let mut mart = Vec::with_capacity(n + 1);
    let mut bv = Vec::with_capacity(n + 1);
    let mut qv = Vec::with_capacity(n + 1);
    let (mut x, mut m, mut a, mut q) = (x0, 0.0, 0.0, 0.0);
    values.push(x);
    mart.push(m);
    bv.push(a);
    qv.push(q);
    for i in 0..n {
        let t = grid.time(i);
        let (drift, diff) = coeffs(i, t, x)?;
        if !drift.is_finite() || !diff.is_finite() {
            return Err(Error::numeric(i, format!("coefficients ({drift}, {diff}) at x={x}")));
        }
        let dbi = db[i + 1] - db[i];
        let da = drift * dt;
        let dm = diff * dbi;
        x = x + da + dm;
        if !x.is_finite() {
            return Err(Error::numeric(i + 1, "state"));
        }
        a += da;
        m += dm;
        q += diff * diff * dt;
        values.push(x);
        mart.push(m);
        bv.push(a);
        qv.push(q);
    }
    Ok(SamplePath {
        grid,
        values,
        decomposition: Some(Decomposition { martingale: mart, bv }),
        qv: Some(qv),
    })
}

/// Cumulative `Σ φ_i (X_{i+1} - X_i)`. `phi` holds left-endpoint values at
/// nodes `0..n` (a trailing value at node `n` is ignored).
pub fn ito_integral(phi: &[f64], x: &SamplePath) -> Result<SamplePath> {
    let n = x.grid.n_steps;
    if phi.len() != n && phi.len() != n + 1 {
        return Err(Error::contract(format!(
            "integrand has {} values, path has {n} steps",
            phi.len()
        )));
    }
    let v = &x.values;
    let values = cumulative_weighted(phi, v);
    let decomposition = x.decomposition.as_ref().map(|d| Decomposition {
        martingale: cumulative_weighted(phi, &d.martingale),
        bv: cumulative_weighted(phi, &d.bv),
    });
    let qv = x.qv.as_ref().map(|q| {
        let mut out = Vec::with_capacity(n + 1);
        let mut acc = 0.0;
        out.push(acc);
        for i in 0..n {
            acc += phi[i] * phi[i] * (q[i + 1] - q[i]);
            out.push(acc);
        }
        out
    });
    Ok(SamplePath {
        grid: x.grid,
        values,
        decomposition,
        qv,
    })
}

fn cumulative_weighted(phi: &[f64], v: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(v.len());
    let mut acc = 0.0;
    out.push(acc);
    for i in 0..v.len() - 1 {
        acc += phi[i] * (v[i + 1] - v[i]);
        out.push(acc);
    }
    out
}

/// Realized quadratic variation `Σ (X_{i+1} - X_i)²`.
pub fn quadratic_variation(x: &SamplePath) -> SamplePath {
    SamplePath {
        grid: x.grid,
        values: cumulative_squares(&x.values),
        decomposition: None,
        qv: None,
    }
}
