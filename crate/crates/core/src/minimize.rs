//! One-dimensional minimization by golden-section search with parabolic
//! interpolation steps (Brent's method), plus bracket expansion for minima
//! that sit on an edge.

use serde::Serialize;

use crate::error::{Error, Result};

const GOLDEN: f64 = 0.381_966_011_250_105_1; // (3 - sqrt 5) / 2
const MAX_ITER: usize = 500;

/// Absolute tolerance on the minimizer, in the units of the argument.
pub const DEFAULT_TOLERANCE: f64 = 1e-4;
pub const MAX_EXPANSIONS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Minimum {
    pub x: f64,
    pub value: f64,
    pub evaluations: usize,
}

/// One search pass over a bracket.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BracketPass {
    pub lo: f64,
    pub hi: f64,
    pub x: f64,
    pub value: f64,
    pub at_edge: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BracketedMinimum {
    pub x: f64,
    pub value: f64,
    /// Passes in order; more than one means the bracket was expanded.
    pub trace: Vec<BracketPass>,
    /// Still on an edge after the last allowed expansion.
    pub at_edge: bool,
}

impl BracketedMinimum {
    pub fn expansions(&self) -> usize {
        self.trace.len() - 1
    }
}

/// Brent minimization of `f` on `[lo, hi]` to absolute tolerance `tol`.
///
/// The bracket edges are evaluated as candidates too, so a monotone `f`
/// returns the better edge rather than a point just inside it.
pub fn golden_parabolic<F>(mut f: F, lo: f64, hi: f64, tol: f64) -> Result<Minimum>
where
    F: FnMut(f64) -> f64,
{
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::domain(format!("invalid bracket ({lo}, {hi})")));
    }
    if !(tol > 0.0) {
        return Err(Error::domain("tolerance must be positive"));
    }
    let mut evaluations = 0;
    let mut eval = |x: f64| -> Result<f64> {
        evaluations += 1;
        let v = f(x);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Numeric(format!("cost is {v} at {x}")))
        }
    };

    let (mut a, mut b) = (lo, hi);
    let mut x = a + GOLDEN * (b - a);
    let (mut w, mut v) = (x, x);
    let mut fx = eval(x)?;
    let (mut fw, mut fv) = (fx, fx);
    let mut d: f64 = 0.0;
    let mut e: f64 = 0.0;
    let tol1 = tol / 3.0;

    for _ in 0..MAX_ITER {
        let mid = 0.5 * (a + b);
        let tol2 = 2.0 * tol1;
        if (x - mid).abs() <= tol2 - 0.5 * (b - a) {
            break;
        }

        let mut golden_step = true;
        if e.abs() > tol1 {
            // parabola through (v, fv), (w, fw), (x, fx)
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            }
            q = q.abs();
            let e_prev = e;
            if p.abs() < (0.5 * q * e_prev).abs() && p > q * (a - x) && p < q * (b - x) {
                e = d;
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = if x < mid { tol1 } else { -tol1 };
                }
                golden_step = false;
            }
        }
        if golden_step {
            e = if x < mid { b - x } else { a - x };
            d = GOLDEN * e;
        }

        let u = if d.abs() >= tol1 { x + d } else { x + tol1.copysign(d) };
        let fu = eval(u)?;

        if fu <= fx {
            if u < x {
                b = x;
            } else {
                a = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }

    for edge in [lo, hi] {
        let fe = eval(edge)?;
        if fe < fx {
            x = edge;
            fx = fe;
        }
    }

    Ok(Minimum {
        x,
        value: fx,
        evaluations,
    })
}

/// Minimizes over `bracket`, widening it when the result lands on an edge.
///
/// Each expansion moves the offending edge outward by the current width
/// (doubling it), up to [`MAX_EXPANSIONS`] times.
pub fn minimize_bracketed<F>(mut f: F, bracket: (f64, f64), tol: f64) -> Result<BracketedMinimum>
where
    F: FnMut(f64) -> f64,
{
    let (mut lo, mut hi) = bracket;
    let mut trace = Vec::new();
    loop {
        let m = golden_parabolic(&mut f, lo, hi, tol)?;
        let at_lo = m.x - lo <= tol;
        let at_hi = hi - m.x <= tol;
        trace.push(BracketPass {
            lo,
            hi,
            x: m.x,
            value: m.value,
            at_edge: at_lo || at_hi,
        });
        if !(at_lo || at_hi) || trace.len() > MAX_EXPANSIONS {
            return Ok(BracketedMinimum {
                x: m.x,
                value: m.value,
                at_edge: at_lo || at_hi,
                trace,
            });
        }
        let width = hi - lo;
        if at_lo {
            lo -= width;
        } else {
            hi += width;
        }
    }
}
