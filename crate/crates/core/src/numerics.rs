//! Root finding and quadrature used by the analytic pricers.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Brent's method on a bracketing interval `[a, b]`.
///
/// `f(a)` and `f(b)` must have opposite signs (or one of them be zero).
pub fn brent<T: Scalar, F: FnMut(T) -> T>(mut f: F, a: T, b: T, xtol: T, max_iter: usize) -> Result<T> {
    let (mut a, mut b) = (a, b);
    let mut fa = f(a);
    let mut fb = f(b);
    if fa == T::zero() {
        return Ok(a);
    }
    if fb == T::zero() {
        return Ok(b);
    }
    if fa.is_nan() || fb.is_nan() || (fa > T::zero()) == (fb > T::zero()) {
        return Err(Error::Numerical(format!(
            "root not bracketed on [{a}, {b}]: f(a)={fa}, f(b)={fb}"
        )));
    }
    let mut c = a;
    let mut fc = fa;
    let mut d = b - a;
    let mut e = d;
    let two = T::two();
    for _ in 0..max_iter {
        if (fb > T::zero()) == (fc > T::zero()) {
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
        let tol = two * T::epsilon() * b.abs() + T::half() * xtol;
        let m = T::half() * (c - b);
        if m.abs() <= tol || fb == T::zero() {
            return Ok(b);
        }
        if e.abs() >= tol && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = two * m * s;
                q = T::one() - s;
            } else {
                let qq = fa / fc;
                let r = fb / fc;
                p = s * (two * m * qq * (qq - r) - (b - a) * (r - T::one()));
                q = (qq - T::one()) * (r - T::one()) * (s - T::one());
            }
            if p > T::zero() {
                q = -q;
            } else {
                p = -p;
            }
            let min1 = T::lit(3.0) * m * q - (tol * q).abs();
            let min2 = (e * q).abs();
            if two * p < min1.min(min2) {
                e = d;
                d = p / q;
            } else {
                d = m;
                e = m;
            }
        } else {
            d = m;
            e = m;
        }
        a = b;
        fa = fb;
        b = if d.abs() > tol {
            b + d
        } else if m > T::zero() {
            b + tol
        } else {
            b - tol
        };
        fb = f(b);
    }
    Err(Error::Numerical(format!(
        "brent did not converge in {max_iter} iterations"
    )))
}

const GK_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const GK_WEIGHTS_K: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728,
];
const GK_WEIGHTS_G: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<T: Scalar, F: FnMut(T) -> T>(f: &mut F, a: T, b: T) -> (T, T) {
    let c = T::half() * (a + b);
    let h = T::half() * (b - a);
    let fc = f(c);
    let mut kron = fc * T::lit(GK_WEIGHTS_K[7]);
    let mut gauss = fc * T::lit(GK_WEIGHTS_G[3]);
    for j in 0..7 {
        let dx = h * T::lit(GK_NODES[j]);
        let s = f(c - dx) + f(c + dx);
        kron += s * T::lit(GK_WEIGHTS_K[j]);
        if j % 2 == 1 {
            gauss += s * T::lit(GK_WEIGHTS_G[j / 2]);
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

/// Adaptive Gauss-Kronrod (7/15) integration of `f` over `[a, b]`.
///
/// Returns the integral estimate and the accumulated error estimate.
pub fn integrate<T: Scalar, F: FnMut(T) -> T>(mut f: F, a: T, b: T, abs_tol: T, max_depth: usize) -> (T, T) {
    fn recurse<T: Scalar, F: FnMut(T) -> T>(f: &mut F, a: T, b: T, whole: (T, T), tol: T, depth: usize) -> (T, T) {
        if whole.1 <= tol || depth == 0 {
            return whole;
        }
        let m = T::half() * (a + b);
        let left = gk15(f, a, m);
        let right = gk15(f, m, b);
        let l = recurse(f, a, m, left, tol * T::half(), depth - 1);
        let r = recurse(f, m, b, right, tol * T::half(), depth - 1);
        (l.0 + r.0, l.1 + r.1)
    }
    let whole = gk15(&mut f, a, b);
    recurse(&mut f, a, b, whole, abs_tol, max_depth)
}

/// `(1 - e^{-x}) / x`, continuous through `x = 0` and valid for `x < 0`.
pub fn decay_average<T: Scalar>(x: T) -> T {
    if x.abs() < T::lit(1e-4) {
        T::one() - x * (T::half() - x * (T::one() / T::lit(6.0) - x / T::lit(24.0)))
    } else {
        -(-x).exp_m1() / x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn brent_finds_cubic_root() {
        let r = brent(|x: f64| x * x * x - 2.0, 0.0, 2.0, 1e-15, 100).unwrap();
        assert!((r - 2f64.cbrt()).abs() < 1e-14);
    }

    #[test]
    fn brent_rejects_unbracketed() {
        assert!(brent(|x: f64| x * x + 1.0, -1.0, 1.0, 1e-12, 50).is_err());
    }

    #[test]
    fn gauss_kronrod_integrates_gaussian() {
        let (v, err) = integrate(|x: f64| (-x * x).exp(), -8.0, 8.0, 1e-14, 30);
        assert!((v - std::f64::consts::PI.sqrt()).abs() < 1e-13);
        assert!(err < 1e-12);
    }
}
