//! One-dimensional quadrature kernels.

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
const GL4: [(f64, f64); 4] = [
    (-0.861_136_311_594_052_6, 0.347_854_845_137_453_85),
    (-0.339_981_043_584_856_26, 0.652_145_154_862_546_1),
    (0.339_981_043_584_856_26, 0.652_145_154_862_546_1),
    (0.861_136_311_594_052_6, 0.347_854_845_137_453_85),
];

const GL8: [(f64, f64); 8] = [
    (-0.960_289_856_497_536_3, 0.101_228_536_290_376_26),
    (-0.796_666_477_413_626_7, 0.222_381_034_453_374_48),
    (-0.525_532_409_916_329, 0.313_706_645_877_887_3),
    (-0.183_434_642_495_649_8, 0.362_683_783_378_362),
    (0.183_434_642_495_649_8, 0.362_683_783_378_362),
    (0.525_532_409_916_329, 0.313_706_645_877_887_3),
    (0.796_666_477_413_626_7, 0.222_381_034_453_374_48),
    (0.960_289_856_497_536_3, 0.101_228_536_290_376_26),
];

#[inline]
fn gauss<const N: usize>(rule: &[(f64, f64); N], f: &mut impl FnMut(f64) -> f64, a: f64, b: f64) -> f64 {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut s = 0.0;
    for &(x, w) in rule {
        s += w * f(mid + half * x);
    }
    s * half
}

pub fn gauss4(mut f: impl FnMut(f64) -> f64, a: f64, b: f64) -> f64 {
    gauss(&GL4, &mut f, a, b)
}

pub fn gauss8(mut f: impl FnMut(f64) -> f64, a: f64, b: f64) -> f64 {
    gauss(&GL8, &mut f, a, b)
}

/// Nodes of the 4-point rule mapped to `[a, b]`, with weights.
pub fn gauss4_nodes(a: f64, b: f64) -> [(f64, f64); 4] {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    GL4.map(|(x, w)| (mid + half * x, w * half))
}

pub fn gauss8_nodes(a: f64, b: f64) -> [(f64, f64); 8] {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    GL8.map(|(x, w)| (mid + half * x, w * half))
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct QuadInfo {
    /// Deepest bisection level reached.
    pub depth: u32,
    /// Sum of local error estimates.
    pub error: f64,
    pub evaluations: usize,
}

/// Adaptive trapezoid refinement with Richardson correction on each panel
/// (Simpson's rule), stopping at relative tolerance `rel_tol` or at
/// bisection depth `max_depth`.
pub fn adaptive(mut f: impl FnMut(f64) -> f64, a: f64, b: f64, rel_tol: f64, max_depth: u32) -> (f64, QuadInfo) {
    let mut info = QuadInfo::default();
    if a == b {
        return (0.0, info);
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    info.evaluations = 3;
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    let scale = ((b - a) / 6.0 * (fa.abs() + 4.0 * fm.abs() + fb.abs())).max(1e-300);
    let abs_tol = rel_tol * scale;
    let mut total = 0.0;
    // explicit stack: (a, b, fa, fm, fb, estimate, tol, depth)
    let mut stack = vec![(a, b, fa, fm, fb, whole, abs_tol, 0u32)];
    while let Some((a, b, fa, fm, fb, est, tol, depth)) = stack.pop() {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        info.evaluations += 2;
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let diff = left + right - est;
        info.depth = info.depth.max(depth + 1);
        if diff.abs() <= 15.0 * tol || depth + 1 >= max_depth || !diff.is_finite() {
            total += left + right + diff / 15.0;
            info.error += diff.abs() / 15.0;
        } else {
            stack.push((m, b, fm, frm, fb, right, 0.5 * tol, depth + 1));
            stack.push((a, m, fa, flm, fm, left, 0.5 * tol, depth + 1));
        }
    }
    (total, info)
}

/// Solves `f(x) = y` for strictly increasing `f` by bracketed Newton with a
/// bisection fallback. Stops when the bracket or step is below `tol·(1+|x|)`.
pub fn invert_increasing(
    f: impl Fn(f64) -> f64,
    df: impl Fn(f64) -> f64,
    y: f64,
    guess: f64,
    tol: f64,
) -> Result<f64, String> {
    let x = if guess.is_finite() { guess } else { 0.0 };
    let fx = f(x) - y;
    if fx == 0.0 {
        return Ok(x);
    }
    // expand a bracket [lo, hi] with f(lo) < y < f(hi)
    let mut step = 1.0f64.max(fx.abs());
    let (mut lo, mut hi);
    if fx < 0.0 {
        lo = x;
        hi = x + step;
        let mut k = 0;
        while f(hi) - y < 0.0 {
            lo = hi;
            step *= 2.0;
            hi += step;
            k += 1;
            if k > 200 || !hi.is_finite() {
                return Err("no upper bracket".into());
            }
        }
    } else {
        hi = x;
        lo = x - step;
        let mut k = 0;
        while f(lo) - y > 0.0 {
            hi = lo;
            step *= 2.0;
            lo -= step;
            k += 1;
            if k > 200 || !lo.is_finite() {
                return Err("no lower bracket".into());
            }
        }
    }
    invert_bracketed(f, df, y, lo, hi, x, tol)
}

/// [`invert_increasing`] on a known bracket `f(lo) <= y <= f(hi)`.
pub fn invert_bracketed(
    f: impl Fn(f64) -> f64,
    df: impl Fn(f64) -> f64,
    y: f64,
    mut lo: f64,
    mut hi: f64,
    guess: f64,
    tol: f64,
) -> Result<f64, String> {
    let mut x = guess.clamp(lo, hi);
    for _ in 0..200 {
        let r = f(x) - y;
        if !r.is_finite() {
            return Err(format!("non-finite residual at x={x}"));
        }
        if r == 0.0 {
            return Ok(x);
        }
        if r < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let d = df(x);
        let newton = x - r / d;
        let next = if d > 0.0 && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        let scale = 1.0 + next.abs();
        if (next - x).abs() <= tol * scale || hi - lo <= tol * scale {
            return Ok(next);
        }
        x = next;
    }
    Err(format!("no convergence, bracket [{lo}, {hi}]"))
}
