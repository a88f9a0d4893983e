//! Closed catalog of coefficient expressions in `(t, x)` for spec files.
//!
//! JSON form is externally tagged, e.g. `{"const": 1.0}`, `"x"`,
//! `{"poly": {"var": "x", "coeffs": [0, 1]}}`,
//! `{"product": [{"exp": {"poly": {"var": "t", "coeffs": [0, -1]}}}, "x"]}`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::measure::Fn2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Var {
    T,
    X,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expr {
    Const(f64),
    T,
    X,
    /// `Σ coeffs[k]·var^k`.
    Poly { var: Var, coeffs: Vec<f64> },
    Exp(Box<Expr>),
    Sin(Box<Expr>),
    Cos(Box<Expr>),
    Atan(Box<Expr>),
    Abs(Box<Expr>),
    /// `sgn` with `sgn(0) = 0`.
    Sign(Box<Expr>),
    /// `1 / e`.
    Inv(Box<Expr>),
    /// `1` where `lo < x <= hi`, else `0` (left-continuous in x).
    Indicator { lo: f64, hi: f64 },
    Sum(Vec<Expr>),
    Product(Vec<Expr>),
}

impl Expr {
    pub fn eval(&self, t: f64, x: f64) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::T => t,
            Expr::X => x,
            Expr::Poly { var, coeffs } => {
                let v = if *var == Var::T { t } else { x };
                coeffs.iter().rev().fold(0.0, |acc, c| acc * v + c)
            }
            Expr::Exp(e) => e.eval(t, x).exp(),
            Expr::Sin(e) => e.eval(t, x).sin(),
            Expr::Cos(e) => e.eval(t, x).cos(),
            Expr::Atan(e) => e.eval(t, x).atan(),
            Expr::Abs(e) => e.eval(t, x).abs(),
            Expr::Sign(e) => {
                let v = e.eval(t, x);
                if v > 0.0 {
                    1.0
                } else if v < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
            Expr::Inv(e) => 1.0 / e.eval(t, x),
            Expr::Indicator { lo, hi } => {
                if x > *lo && x <= *hi {
                    1.0
                } else {
                    0.0
                }
            }
            Expr::Sum(v) => v.iter().map(|e| e.eval(t, x)).sum(),
            Expr::Product(v) => v.iter().map(|e| e.eval(t, x)).product(),
        }
    }

    pub fn depends_on_t(&self) -> bool {
        match self {
            Expr::Const(_) | Expr::X | Expr::Indicator { .. } => false,
            Expr::T => true,
            Expr::Poly { var, coeffs } => *var == Var::T && coeffs.len() > 1,
            Expr::Exp(e) | Expr::Sin(e) | Expr::Cos(e) | Expr::Atan(e) | Expr::Abs(e) | Expr::Sign(e) | Expr::Inv(e) => e.depends_on_t(),
            Expr::Sum(v) | Expr::Product(v) => v.iter().any(Expr::depends_on_t),
        }
    }

    /// Symbolic `∂/∂t` (`Abs` and `Sign` use the a.e. derivative).
    pub fn d_dt(&self) -> Expr {
        if !self.depends_on_t() {
            return Expr::Const(0.0);
        }
        let chain = |outer: Expr, inner: &Expr| Expr::Product(vec![outer, inner.d_dt()]);
        match self {
            Expr::T => Expr::Const(1.0),
            Expr::Poly { var, coeffs } => {
                debug_assert_eq!(*var, Var::T);
                Expr::Poly {
                    var: Var::T,
                    coeffs: coeffs.iter().enumerate().skip(1).map(|(k, c)| k as f64 * c).collect(),
                }
            }
            Expr::Exp(e) => chain(Expr::Exp(e.clone()), e),
            Expr::Sin(e) => chain(Expr::Cos(e.clone()), e),
            Expr::Cos(e) => chain(Expr::Product(vec![Expr::Const(-1.0), Expr::Sin(e.clone())]), e),
            Expr::Atan(e) => chain(
                Expr::Inv(Box::new(Expr::Sum(vec![
                    Expr::Const(1.0),
                    Expr::Product(vec![(**e).clone(), (**e).clone()]),
                ]))),
                e,
            ),
            Expr::Abs(e) => chain(Expr::Sign(e.clone()), e),
            Expr::Sign(_) => Expr::Const(0.0),
            Expr::Inv(e) => chain(
                Expr::Product(vec![Expr::Const(-1.0), Expr::Inv(e.clone()), Expr::Inv(e.clone())]),
                e,
            ),
            Expr::Sum(v) => Expr::Sum(v.iter().map(Expr::d_dt).collect()),
            Expr::Product(v) => Expr::Sum(
                (0..v.len())
                    .map(|k| {
                        Expr::Product(
                            v.iter()
                                .enumerate()
                                .map(|(j, e)| if j == k { e.d_dt() } else { e.clone() })
                                .collect(),
                        )
                    })
                    .collect(),
            ),
            Expr::Const(_) | Expr::X | Expr::Indicator { .. } => unreachable!(),
        }
    }

    pub fn to_fn(&self) -> Fn2 {
        let e = self.clone();
        Arc::new(move |t, x| e.eval(t, x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_t(e: &Expr, t: f64, x: f64) -> f64 {
        let h = 1e-6;
        (e.eval(t + h, x) - e.eval(t - h, x)) / (2.0 * h)
    }

    #[test]
    fn json_round_trip() {
        let src = r#"{"product": [{"exp": {"poly": {"var": "t", "coeffs": [0, -1]}}}, {"atan": "x"}]}"#;
        let e: Expr = serde_json::from_str(src).unwrap();
        assert!((e.eval(0.5, 2.0) - (-0.5f64).exp() * 2f64.atan()).abs() < 1e-15);
        let back: Expr = serde_json::from_str(&serde_json::to_string(&e).unwrap()).unwrap();
        assert_eq!(back, e);
        let c: Expr = serde_json::from_str(r#"{"const": 1.5}"#).unwrap();
        assert_eq!(c.eval(0.0, 0.0), 1.5);
    }

    #[test]
    fn time_derivatives_match_finite_differences() {
        let exprs = [
            Expr::Product(vec![Expr::Exp(Box::new(Expr::Poly { var: Var::T, coeffs: vec![0.0, -1.0] })), Expr::X]),
            Expr::Sin(Box::new(Expr::Product(vec![Expr::T, Expr::X]))),
            Expr::Atan(Box::new(Expr::Sum(vec![Expr::T, Expr::Cos(Box::new(Expr::T))]))),
            Expr::Inv(Box::new(Expr::Sum(vec![Expr::Const(2.0), Expr::Sin(Box::new(Expr::T))]))),
            Expr::Poly { var: Var::T, coeffs: vec![1.0, 2.0, 3.0] },
        ];
        for e in &exprs {
            assert!(e.depends_on_t());
            let d = e.d_dt();
            for (t, x) in [(0.3, 0.7), (1.1, -0.4)] {
                assert!((d.eval(t, x) - fd_t(e, t, x)).abs() < 1e-6, "{e:?}");
            }
        }
        assert_eq!(Expr::Cos(Box::new(Expr::X)).d_dt(), Expr::Const(0.0));
    }
}
