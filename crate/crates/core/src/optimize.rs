//! Derivative-free 1-D minimization.

use crate::error::{Error, Result};

const INV_PHI: f64 = 0.618_033_988_749_894_9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Minimum {
    pub x: f64,
    pub f: f64,
    pub evaluations: usize,
}

/// Golden-section search for a minimum of a unimodal `f` on `[a, b]`.
/// Stops once the bracket is narrower than `x_tol`.
pub fn golden_section<F>(mut f: F, a: f64, b: f64, x_tol: f64, max_evals: usize) -> Result<Minimum>
where
    F: FnMut(f64) -> f64,
{
    if !(a.is_finite() && b.is_finite()) || b < a {
        return Err(Error::FitFailure(format!("invalid bracket [{a}, {b}]")));
    }
    let (mut lo, mut hi) = (a, b);
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    let mut evals = 2;
    while hi - lo > x_tol && evals < max_evals {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        }
        evals += 1;
    }
    if !(f1.is_finite() || f2.is_finite()) {
        return Err(Error::FitFailure("objective is not finite inside the bracket".into()));
    }
    let (x, fx) = if f1 <= f2 { (x1, f1) } else { (x2, f2) };
    Ok(Minimum {
        x,
        f: fx,
        evaluations: evals,
    })
}

/// Expands `[lo, hi]` upward (keeping `lo` fixed) until `f(hi)` rises above
/// the interior value, giving a bracket for [`golden_section`].
pub fn bracket_upward<F>(mut f: F, lo: f64, mut hi: f64, max_expansions: usize) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> f64,
{
    let mut mid = lo + INV_PHI * (hi - lo);
    let mut f_mid = f(mid);
    for _ in 0..max_expansions {
        let f_hi = f(hi);
        if f_hi > f_mid {
            return Ok((lo, hi));
        }
        mid = hi;
        f_mid = f_hi;
        hi = lo + (hi - lo) * 2.0;
    }
    Err(Error::FitFailure(format!(
        "could not bracket a minimum below {hi:e} (objective still decreasing at {mid:e})"
    )))
}
