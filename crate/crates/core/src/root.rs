//! Bracketed root finding for monotone functions (Brent's method).

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RootError {
    #[error("no sign change on [{lo}, {hi}] (f = {f_lo}, {f_hi})")]
    NoSignChange { lo: f64, hi: f64, f_lo: f64, f_hi: f64 },
    #[error("no convergence after {0} iterations")]
    NoConvergence(usize),
}

#[derive(Debug, Clone, Copy)]
pub struct Tolerance {
    /// Step tolerance relative to `1 + |x|`.
    pub x_rel: f64,
    /// Absolute tolerance on `|f(x)|`.
    pub f_abs: f64,
    pub max_iter: usize,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance { x_rel: 1e-10, f_abs: 1e-10, max_iter: 500 }
    }
}

/// Widens `[lo, hi]` about its centre, doubling the half-width up to
/// `max_doublings` times, until `f` changes sign. Returns the bracket and
/// the function values at its ends.
pub fn expand_bracket<F: FnMut(f64) -> f64>(
    f: &mut F,
    mut lo: f64,
    mut hi: f64,
    max_doublings: usize,
) -> Result<(f64, f64, f64, f64), RootError> {
    let mut f_lo = f(lo);
    let mut f_hi = f(hi);
    let mut doublings = 0;
    while f_lo.signum() == f_hi.signum() && f_lo != 0.0 && f_hi != 0.0 {
        if doublings == max_doublings {
            return Err(RootError::NoSignChange { lo, hi, f_lo, f_hi });
        }
        let centre = 0.5 * (lo + hi);
        let half = hi - centre;
        lo = centre - 2.0 * half;
        hi = centre + 2.0 * half;
        f_lo = f(lo);
        f_hi = f(hi);
        doublings += 1;
    }
    Ok((lo, hi, f_lo, f_hi))
}

/// Finds `x` in `[a, b]` with `f(x) ≈ 0`, given `f(a)` and `f(b)` of
/// opposite sign. Stops once both the step and the residual are within
/// tolerance, or when the bracket can no longer be split in floating point.
pub fn brent<F: FnMut(f64) -> f64>(
    f: &mut F,
    a: f64,
    b: f64,
    fa: f64,
    fb: f64,
    tol: Tolerance,
) -> Result<f64, RootError> {
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(RootError::NoSignChange { lo: a, hi: b, f_lo: fa, f_hi: fb });
    }
    let (mut a, mut b, mut fa, mut fb) = (a, b, fa, fb);
    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut e = d;
    let mut x_tol = tol.x_rel;

    for _ in 0..tol.max_iter {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let floor = 2.0 * f64::EPSILON * b.abs();
        let tol1 = floor + 0.5 * x_tol * (1.0 + b.abs());
        let xm = 0.5 * (c - b);
        if fb == 0.0 || xm.abs() <= floor.max(f64::MIN_POSITIVE) {
            return Ok(b);
        }
        if xm.abs() <= tol1 {
            if fb.abs() <= tol.f_abs {
                return Ok(b);
            }
            // Steep function: keep refining below the step tolerance.
            x_tol *= 1e-3;
            continue;
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * xm * s;
                q = 1.0 - s;
            } else {
                let qa = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * xm * qa * (qa - r) - (b - a) * (r - 1.0));
                q = (qa - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            }
            p = p.abs();
            let min1 = 3.0 * xm * q - (tol1 * q).abs();
            let min2 = (e * q).abs();
            if 2.0 * p < min1.min(min2) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol1 { d } else { tol1.copysign(xm) };
        fb = f(b);
    }
    Err(RootError::NoConvergence(tol.max_iter))
}
