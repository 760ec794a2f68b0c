//! One-dimensional bracketed minimization (Brent's method: golden-section
//! steps with parabolic interpolation where it is safe).

const GOLDEN: f64 = 0.381_966_011_250_105_2; // (3 - sqrt(5)) / 2
const MAX_ITER: usize = 200;

/// Minimizes `f` over `[lo, hi]` to within `tol` on the argument and returns
/// `(x, f(x))`.
///
/// On a unimodal function the bracket always contains the minimum, so the
/// method converges; on an exact quadratic the parabolic step lands on the
/// vertex up to rounding, which is what makes it a sharp cross-check for the
/// closed-form coefficient.
pub(crate) fn brent_min(f: impl Fn(f64) -> f64, lo: f64, hi: f64, tol: f64) -> (f64, f64) {
    let (mut a, mut b) = (lo.min(hi), lo.max(hi));
    let mut x = a + GOLDEN * (b - a);
    let (mut w, mut v) = (x, x);
    let mut fx = f(x);
    let (mut fw, mut fv) = (fx, fx);
    let mut d: f64 = 0.0;
    let mut e: f64 = 0.0;

    for _ in 0..MAX_ITER {
        let mid = 0.5 * (a + b);
        let tol1 = tol.max(f64::EPSILON * x.abs());
        if (x - mid).abs() <= 2.0 * tol1 - 0.5 * (b - a) {
            break;
        }
        let mut use_golden = true;
        if e.abs() > tol1 {
            // Parabola through (v, fv), (w, fw), (x, fx).
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            }
            q = q.abs();
            let e_prev = e;
            e = d;
            if p.abs() < (0.5 * q * e_prev).abs() && p > q * (a - x) && p < q * (b - x) {
                d = p / q;
                let u = x + d;
                if u - a < 2.0 * tol1 || b - u < 2.0 * tol1 {
                    d = if mid > x { tol1 } else { -tol1 };
                }
                use_golden = false;
            }
        }
        if use_golden {
            e = if x < mid { b - x } else { a - x };
            d = GOLDEN * e;
        }
        let u = if d.abs() >= tol1 { x + d } else { x + if d > 0.0 { tol1 } else { -tol1 } };
        let fu = f(u);
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
    (x, fx)
}

/// One parabolic-fit refinement of a minimum near `x0`, sampling at spacing
/// `h`. For a quadratic objective the fitted vertex is exact up to rounding;
/// the wide spacing keeps the divided differences far above cancellation
/// noise, which a shrinking bracket cannot do on a flat valley floor.
pub(crate) fn parabolic_refine(f: impl Fn(f64) -> f64, x0: f64, h: f64) -> f64 {
    let (fl, fm, fr) = (f(x0 - h), f(x0), f(x0 + h));
    let curvature = fl - 2.0 * fm + fr;
    if curvature <= 0.0 || !curvature.is_finite() {
        return x0;
    }
    x0 - 0.5 * h * (fr - fl) / curvature
}
