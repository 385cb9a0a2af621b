//! Semi-closed-form Heston pricing.
//!
//! Prices come from a single Fourier integral of the log-spot
//! characteristic function. The characteristic function uses the rotation
//! free ("little trap") branch and is rearranged so that every division by
//! the squared vol-of-vol cancels analytically, which keeps it exact in the
//! deterministic-variance limit `alpha -> 0`.

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::bs;
use crate::error::{domain, Error, Result};
use crate::instrument::{DigitalKind, EuropeanDigital, OptionKind, Vanilla};
use crate::market::Market;
use crate::numerics::integrate;
use crate::scalar::Scalar;

/// Heston parameters: variance mean reversion `beta`, long-run variance
/// `v_bar`, initial variance `v0`, vol of vol `alpha` and spot/vol
/// correlation `rho`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HestonParams<T> {
    pub beta: T,
    pub v_bar: T,
    pub v0: T,
    pub alpha: T,
    pub rho: T,
}

impl<T: Scalar> HestonParams<T> {
    pub fn new(beta: T, v_bar: T, v0: T, alpha: T, rho: T) -> Result<Self> {
        let p = Self {
            beta,
            v_bar,
            v0,
            alpha,
            rho,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.beta > T::zero()
            && self.v_bar > T::zero()
            && self.v0 > T::zero()
            && self.alpha >= T::zero()
            && self.rho > -T::one()
            && self.rho < T::one()
            && self.beta.is_finite()
            && self.v_bar.is_finite()
            && self.v0.is_finite()
            && self.alpha.is_finite();
        if ok {
            Ok(())
        } else {
            domain(format!("invalid Heston parameters {self:?}"))
        }
    }

    /// Expected instantaneous variance at time `t`.
    pub fn expected_variance(&self, t: T) -> T {
        self.v_bar + (self.v0 - self.v_bar) * (-self.beta * t).exp()
    }

    /// Time-averaged expected variance over `[0, t]`.
    pub fn average_variance(&self, t: T) -> T {
        let bt = self.beta * t;
        let frac = if bt.abs() < T::lit(1e-8) {
            T::one() - T::half() * bt
        } else {
            (T::one() - (-bt).exp()) / bt
        };
        self.v_bar + (self.v0 - self.v_bar) * frac
    }
}

/// Market implied volatility quote.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VolQuote<T> {
    pub strike: T,
    pub vol: T,
    pub expiry: T,
}

#[inline]
fn ln1p_over_z<T: Scalar>(z: Complex<T>) -> Complex<T> {
    if z.norm() < T::lit(1e-5) {
        // 1 - z/2 + z²/3 - z³/4
        let one = Complex::new(T::one(), T::zero());
        one - z
            * (Complex::new(T::half(), T::zero())
                - z * (Complex::new(T::one() / T::lit(3.0), T::zero()) - z * T::lit(0.25)))
    } else {
        (Complex::new(T::one(), T::zero()) + z).ln() / z
    }
}

/// Characteristic function of `ln S_T`, `E[exp(i w ln S_T)]`, for complex `w`.
pub fn char_fn<T: Scalar>(p: &HestonParams<T>, mkt: &Market<T>, t: T, w: Complex<T>) -> Complex<T> {
    let i = Complex::new(T::zero(), T::one());
    let one = Complex::new(T::one(), T::zero());
    let sigma = p.alpha;
    let iw = i * w;
    let q = iw + w * w;
    let b = Complex::new(p.beta, T::zero()) - i * w * (p.rho * sigma);
    let d = (b * b + q * (sigma * sigma)).sqrt();
    let bpd = b + d;
    let m = -q / bpd;
    let h = m / bpd;
    let g = h * (sigma * sigma);
    let e = (-d * t).exp();
    let one_minus_e = one - e;
    let big_d = m * one_minus_e / (one - g * e);
    let z = g * one_minus_e / (one - g);
    let big_c = (m * t - h * one_minus_e / (one - g) * ln1p_over_z(z) * T::two()) * (p.beta * p.v_bar);
    (iw * (mkt.spot.ln() + mkt.drift() * t) + big_c + big_d * p.v0).exp()
}

/// Integrates `f(u)` on `[0, ∞)` panel by panel until the integrand has
/// decayed.
fn fourier_integral<T: Scalar, F: FnMut(T) -> T>(mut f: F, scale: T, tol: T) -> Result<T> {
    let width = T::two() / scale;
    let min_extent = T::lit(8.0) / scale;
    let mut total = T::zero();
    let mut quiet = 0;
    let mut lo = T::zero();
    for _ in 0..2000 {
        let hi = lo + width;
        let (v, _) = integrate(&mut f, lo, hi, tol, 12);
        if !v.is_finite() {
            return Err(Error::Numerical("non-finite Heston integrand".into()));
        }
        total += v;
        if v.abs() < tol && hi > min_extent {
            quiet += 1;
            if quiet >= 2 {
                return Ok(total);
            }
        } else {
            quiet = 0;
        }
        lo = hi;
    }
    Err(Error::Numerical(format!(
        "Heston Fourier integral did not converge (partial value {total}, extent {lo})"
    )))
}

fn integration_scale<T: Scalar>(p: &HestonParams<T>, t: T) -> T {
    let var = p.v0.max(p.v_bar).max(T::lit(1e-6)) * t;
    var.sqrt()
}

fn integration_tol<T: Scalar>(level: T) -> T {
    (T::epsilon() * T::lit(50.0)).max(T::lit(1e-15)) * level.max(T::one())
}

/// Undiscounted forward call price `E[(S_T - K)^+]`.
fn forward_call<T: Scalar>(p: &HestonParams<T>, mkt: &Market<T>, strike: T, t: T) -> Result<T> {
    let fwd = mkt.forward(t);
    let ln_k = strike.ln();
    let i = Complex::new(T::zero(), T::one());
    let integrand = |u: T| {
        let w = Complex::new(u, T::zero());
        let phase = (-(i * w) * ln_k).exp();
        let num = char_fn(p, mkt, t, w - i) - char_fn(p, mkt, t, w) * strike;
        (phase * num / (i * w)).re
    };
    let tol = integration_tol(fwd);
    let integral = fourier_integral(integrand, integration_scale(p, t), tol)?;
    Ok(T::half() * (fwd - strike) + integral / T::PI())
}

/// Probability under the pricing measure that `S_T > K`.
fn prob_above<T: Scalar>(p: &HestonParams<T>, mkt: &Market<T>, strike: T, t: T) -> Result<T> {
    let ln_k = strike.ln();
    let i = Complex::new(T::zero(), T::one());
    let integrand = |u: T| {
        let w = Complex::new(u, T::zero());
        let phase = (-(i * w) * ln_k).exp();
        (phase * char_fn(p, mkt, t, w) / (i * w)).re
    };
    let integral = fourier_integral(integrand, integration_scale(p, t), integration_tol(T::one()))?;
    Ok(T::half() + integral / T::PI())
}

pub fn vanilla_price<T: Scalar>(p: &HestonParams<T>, mkt: &Market<T>, opt: &Vanilla<T>) -> Result<T> {
    p.validate()?;
    mkt.validate()?;
    opt.validate()?;
    let t = opt.expiry;
    let fwd = mkt.forward(t);
    let call = forward_call(p, mkt, opt.strike, t)?;
    let undiscounted = match opt.kind {
        OptionKind::Call => call,
        OptionKind::Put => call - fwd + opt.strike,
    };
    let (lo, hi) = match opt.kind {
        OptionKind::Call => ((fwd - opt.strike).max(T::zero()), fwd),
        OptionKind::Put => ((opt.strike - fwd).max(T::zero()), opt.strike),
    };
    Ok(mkt.discount(t) * undiscounted.max(lo).min(hi))
}

pub fn digital_price<T: Scalar>(p: &HestonParams<T>, mkt: &Market<T>, dig: &EuropeanDigital<T>) -> Result<T> {
    p.validate()?;
    mkt.validate()?;
    if !(dig.strike > T::zero()) || !(dig.expiry > T::zero()) {
        return domain("digital strike and expiry must be positive");
    }
    let above = prob_above(p, mkt, dig.strike, dig.expiry)?.max(T::zero()).min(T::one());
    let df = mkt.discount(dig.expiry);
    Ok(match dig.kind {
        DigitalKind::Above => df * above,
        DigitalKind::Below => df * (T::one() - above),
    })
}

/// Black-Scholes implied volatility of the Heston price, computed from the
/// out-of-the-money option.
pub fn implied_vol<T: Scalar>(p: &HestonParams<T>, mkt: &Market<T>, strike: T, expiry: T) -> Result<T> {
    let kind = if strike >= mkt.forward(expiry) {
        OptionKind::Call
    } else {
        OptionKind::Put
    };
    let opt = Vanilla::new(strike, expiry, kind)?;
    let price = vanilla_price(p, mkt, &opt)?;
    bs::implied_vol(price, &mkt.with_vol(T::one()), &opt)
}

/// Outcome of [`calibrate`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration<T> {
    pub params: HestonParams<T>,
    /// Model minus market implied vol at each quote.
    pub residuals: [T; 3],
    pub iterations: usize,
}

impl<T: Scalar> Calibration<T> {
    pub fn max_abs_residual(&self) -> T {
        self.residuals.iter().fold(T::zero(), |acc, r| acc.max(r.abs()))
    }
}

const RHO_BOUND: f64 = 0.99;
const ALPHA_MAX: f64 = 5.0;
const CALIBRATION_TOL: f64 = 1e-4;

fn clamp_calibration<T: Scalar>(x: [T; 3]) -> [T; 3] {
    [
        x[0].max(T::lit(1e-6)).min(T::lit(4.0)),
        x[1].max(T::zero()).min(T::lit(ALPHA_MAX)),
        x[2].max(-T::lit(RHO_BOUND)).min(T::lit(RHO_BOUND)),
    ]
}

/// Fits `v_bar = v0`, `alpha` and `rho` to three implied-vol quotes of a
/// common expiry with `beta` held fixed.
///
/// Levenberg-Marquardt on the implied-vol residuals with a projected box
/// `0 <= alpha <= 5`, `|rho| <= 0.99`.
pub fn calibrate<T: Scalar>(quotes: &[VolQuote<T>; 3], beta: T, mkt: &Market<T>) -> Result<Calibration<T>> {
    calibrate_from(quotes, beta, mkt, None)
}

/// As [`calibrate`], starting from an explicit initial guess.
pub fn calibrate_from<T: Scalar>(
    quotes: &[VolQuote<T>; 3],
    beta: T,
    mkt: &Market<T>,
    guess: Option<HestonParams<T>>,
) -> Result<Calibration<T>> {
    mkt.validate()?;
    if !(beta > T::zero()) {
        return domain("beta must be positive");
    }
    let expiry = quotes[0].expiry;
    for q in quotes {
        if q.expiry != expiry {
            return domain("calibration quotes must share one expiry");
        }
        if !(q.vol > T::zero()) || !(q.strike > T::zero()) {
            return domain("quotes need positive strike and vol");
        }
    }
    if quotes[0].strike == quotes[1].strike
        || quotes[1].strike == quotes[2].strike
        || quotes[0].strike == quotes[2].strike
    {
        return domain("calibration quotes must have distinct strikes");
    }

    let fwd = mkt.forward(expiry);
    let atm = quotes
        .iter()
        .min_by(|a, b| {
            (a.strike / fwd)
                .ln()
                .abs()
                .partial_cmp(&(b.strike / fwd).ln().abs())
                .unwrap()
        })
        .unwrap();
    let mut sorted = *quotes;
    sorted.sort_by(|a, b| a.strike.partial_cmp(&b.strike).unwrap());
    let skew_sign = if sorted[0].vol > sorted[2].vol {
        -T::one()
    } else if sorted[0].vol < sorted[2].vol {
        T::one()
    } else {
        T::zero()
    };

    let mut x = match guess {
        Some(g) => clamp_calibration([g.v_bar, g.alpha, g.rho]),
        None => [atm.vol * atm.vol, T::lit(0.3), T::lit(0.4) * skew_sign],
    };

    let residuals = |x: &[T; 3]| -> [T; 3] {
        let p = HestonParams {
            beta,
            v_bar: x[0],
            v0: x[0],
            alpha: x[1],
            rho: x[2],
        };
        let mut r = [T::zero(); 3];
        for (ri, q) in r.iter_mut().zip(quotes.iter()) {
            *ri = match implied_vol(&p, mkt, q.strike, q.expiry) {
                Ok(v) => v - q.vol,
                Err(_) => T::one(),
            };
        }
        r
    };
    let norm2 = |r: &[T; 3]| r.iter().fold(T::zero(), |a, v| a + *v * *v);

    let mut r = residuals(&x);
    let mut cost = norm2(&r);
    let mut lambda = T::lit(1e-3);
    let max_iter = 100;
    let mut iterations = 0;
    for it in 0..max_iter {
        iterations = it + 1;
        if r.iter().all(|v| v.abs() < T::lit(1e-10)) {
            break;
        }
        // Forward-difference Jacobian, stepping inward at box edges.
        let mut jac = [[T::zero(); 3]; 3];
        for j in 0..3 {
            let mut step = T::lit(1e-6) * x[j].abs().max(T::lit(1e-2));
            let mut xp = x;
            xp[j] += step;
            if clamp_calibration(xp)[j] != xp[j] {
                step = -step;
                xp[j] = x[j] + step;
            }
            let rp = residuals(&xp);
            for i in 0..3 {
                jac[i][j] = (rp[i] - r[i]) / step;
            }
        }
        let mut jtj = [[T::zero(); 3]; 3];
        let mut jtr = [T::zero(); 3];
        for a in 0..3 {
            for b in 0..3 {
                for i in 0..3 {
                    jtj[a][b] += jac[i][a] * jac[i][b];
                }
            }
            for i in 0..3 {
                jtr[a] += jac[i][a] * r[i];
            }
        }
        let mut improved = false;
        for _ in 0..12 {
            let mut lhs = jtj;
            for (a, row) in lhs.iter_mut().enumerate() {
                row[a] += lambda * (jtj[a][a] + T::lit(1e-12));
            }
            let rhs = [-jtr[0], -jtr[1], -jtr[2]];
            let Some(dx) = solve3(lhs, rhs) else {
                lambda *= T::lit(10.0);
                continue;
            };
            let trial = clamp_calibration([x[0] + dx[0], x[1] + dx[1], x[2] + dx[2]]);
            let rt = residuals(&trial);
            let ct = norm2(&rt);
            if ct < cost {
                x = trial;
                r = rt;
                cost = ct;
                lambda = (lambda * T::lit(0.3)).max(T::lit(1e-9));
                improved = true;
                break;
            }
            lambda *= T::lit(10.0);
        }
        if !improved {
            break;
        }
    }

    let params = HestonParams {
        beta,
        v_bar: x[0],
        v0: x[0],
        alpha: x[1],
        rho: x[2],
    };
    let cal = Calibration {
        params,
        residuals: r,
        iterations,
    };
    if cal.max_abs_residual() > T::lit(CALIBRATION_TOL) {
        return Err(Error::Calibration {
            iterations,
            residual: cal.max_abs_residual().as_f64(),
        });
    }
    Ok(cal)
}

fn solve3<T: Scalar>(mut a: [[T; 3]; 3], mut b: [T; 3]) -> Option<[T; 3]> {
    for col in 0..3 {
        let piv = (col..3)
            .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())
            .unwrap();
        if a[piv][col].abs() < T::lit(1e-300_f64.max(f64::MIN_POSITIVE)) || !a[piv][col].is_finite() {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..3 {
            let f = a[row][col] / a[col][col];
            for k in col..3 {
                let v = a[col][k];
                a[row][k] -= f * v;
            }
            let v = b[col];
            b[row] -= f * v;
        }
    }
    let mut x = [T::zero(); 3];
    for row in (0..3).rev() {
        let mut s = b[row];
        for k in row + 1..3 {
            s -= a[row][k] * x[k];
        }
        x[row] = s / a[row][row];
    }
    if x.iter().all(|v| v.is_finite()) {
        Some(x)
    } else {
        None
    }
}

/// Dupire local variance extracted from Heston call prices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalVariance<T> {
    pub variance: T,
    /// True when the raw finite-difference ratio was not positive and the
    /// floor was applied.
    pub clamped: bool,
}

/// Floor applied to non-positive local variances.
pub const LOCAL_VARIANCE_FLOOR: f64 = 1e-6;

/// Dupire local variance at strike `k_eval` and time `t`, from central
/// finite differences of Heston call prices in strike and expiry.
pub fn dupire_local_variance<T: Scalar>(
    p: &HestonParams<T>,
    mkt: &Market<T>,
    t: T,
    k_eval: T,
) -> Result<LocalVariance<T>> {
    if !(t > T::zero()) {
        return domain(format!("Dupire time must be positive, got {t}"));
    }
    if !(k_eval > T::zero()) {
        return domain("Dupire strike must be positive");
    }
    let hk = T::lit(1e-3) * k_eval;
    let ht = T::lit(1e-3).min(t / T::lit(10.0));
    let call = |k: T, tt: T| vanilla_price(p, mkt, &Vanilla::call(k, tt));
    let c0 = call(k_eval, t)?;
    let c_up = call(k_eval + hk, t)?;
    let c_dn = call(k_eval - hk, t)?;
    let c_later = call(k_eval, t + ht)?;
    let c_earlier = call(k_eval, t - ht)?;
    let dc_dt = (c_later - c_earlier) / (T::two() * ht);
    let dc_dk = (c_up - c_dn) / (T::two() * hk);
    let d2c_dk2 = (c_up - T::two() * c0 + c_dn) / (hk * hk);
    let num = dc_dt + mkt.drift() * k_eval * dc_dk + mkt.rate_asset * c0;
    let den = T::half() * k_eval * k_eval * d2c_dk2;
    let floor = T::lit(LOCAL_VARIANCE_FLOOR);
    if !(num > T::zero()) || !(den > T::zero()) {
        return Ok(LocalVariance {
            variance: floor,
            clamped: true,
        });
    }
    let v = num / den;
    if v < floor || !v.is_finite() {
        return Ok(LocalVariance {
            variance: floor,
            clamped: true,
        });
    }
    Ok(LocalVariance {
        variance: v,
        clamped: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bs::BsMarket;

    fn fig1_params() -> HestonParams<f64> {
        HestonParams::new(2.0, 0.09962f64.powi(2), 0.09962f64.powi(2), 0.2536, -0.3835).unwrap()
    }

    #[test]
    fn char_fn_normalisation() {
        let p = fig1_params();
        let m = Market::new(1.0, 0.01, 0.03).unwrap();
        let t = 0.5;
        let at_zero = char_fn(&p, &m, t, Complex::new(0.0, 0.0));
        assert!((at_zero - Complex::new(1.0, 0.0)).norm() < 1e-15);
        // φ(-i) = E[S_T] = forward.
        let fwd = char_fn(&p, &m, t, Complex::new(0.0, -1.0));
        assert!((fwd.re - m.forward(t)).abs() < 1e-14 && fwd.im.abs() < 1e-14);
    }

    #[test]
    fn deterministic_variance_limit_matches_black_scholes() {
        let s2 = 0.09f64 * 0.09;
        let p = HestonParams::new(2.0, s2, s2, 0.0, -0.5).unwrap();
        let m = Market::new(1.0, 0.02, 0.01).unwrap();
        for &(k, kind) in &[
            (0.9f64, OptionKind::Put),
            (1.0, OptionKind::Call),
            (1.1, OptionKind::Call),
        ] {
            let opt = Vanilla {
                strike: k,
                expiry: 0.5,
                kind,
            };
            let h = vanilla_price(&p, &m, &opt).unwrap();
            let b = bs::vanilla_price(&m.with_vol(0.09), &opt).unwrap();
            assert!((h - b).abs() < 1e-8, "K={k}: {h} vs {b}");
        }
    }

    #[test]
    fn time_averaged_variance_when_alpha_is_zero() {
        let p = HestonParams::<f64>::new(3.0, 0.01, 0.04, 0.0, 0.2).unwrap();
        let m = Market::driftless(1.0);
        let t = 0.75;
        let vol = p.average_variance(t).sqrt();
        let opt = Vanilla::call(1.05, t);
        let h = vanilla_price(&p, &m, &opt).unwrap();
        let b = bs::vanilla_price(&BsMarket::new(1.0, 0.0, 0.0, vol).unwrap(), &opt).unwrap();
        assert!((h - b).abs() < 1e-8);
    }

    #[test]
    fn tiny_alpha_is_continuous_with_zero() {
        let m = Market::driftless(1.0);
        let opt = Vanilla::call(1.02, 0.5);
        let base = HestonParams::<f64>::new(2.0, 0.01, 0.012, 0.0, -0.4).unwrap();
        let p0 = vanilla_price(&base, &m, &opt).unwrap();
        let p1 = vanilla_price(&HestonParams { alpha: 1e-7, ..base }, &m, &opt).unwrap();
        assert!((p0 - p1).abs() < 1e-8, "{p0} vs {p1}");
    }

    #[test]
    fn put_call_parity() {
        let p = fig1_params();
        let m = Market::new(1.0, 0.01, 0.04).unwrap();
        for &k in &[0.9f64, 1.0, 1.08] {
            let c = vanilla_price(&p, &m, &Vanilla::call(k, 0.5)).unwrap();
            let pu = vanilla_price(&p, &m, &Vanilla::put(k, 0.5)).unwrap();
            let parity = m.discount(0.5) * (m.forward(0.5) - k);
            assert!((c - pu - parity).abs() < 1e-12);
        }
    }

    #[test]
    fn digital_completeness_and_strike_derivative() {
        let p = fig1_params();
        let m = Market::new(1.0, 0.02, 0.0).unwrap();
        let t = 0.5;
        for &k in &[0.93f64, 1.0, 1.05] {
            let above = digital_price(&p, &m, &EuropeanDigital::new(k, t, DigitalKind::Above).unwrap()).unwrap();
            let below = digital_price(&p, &m, &EuropeanDigital::new(k, t, DigitalKind::Below).unwrap()).unwrap();
            assert!((above + below - m.discount(t)).abs() < 1e-13);
            let h = 1e-4 * k;
            let up = vanilla_price(&p, &m, &Vanilla::call(k + h, t)).unwrap();
            let dn = vanilla_price(&p, &m, &Vanilla::call(k - h, t)).unwrap();
            assert!((-(up - dn) / (2.0 * h) - above).abs() < 1e-5);
        }
    }

    #[test]
    fn digital_deterministic_limit() {
        let p = HestonParams::<f64>::new(2.0, 0.0081, 0.0081, 0.0, 0.3).unwrap();
        let m = Market::driftless(1.0);
        let d = EuropeanDigital::new(0.97, 0.5, DigitalKind::Below).unwrap();
        let h = digital_price(&p, &m, &d).unwrap();
        let b = bs::digital_price(&m.with_vol(0.09), &d).unwrap();
        assert!((h - b).abs() < 1e-10);
    }

    #[test]
    fn prices_convex_in_strike() {
        let p = fig1_params();
        let m = Market::driftless(1.0);
        let ks: Vec<f64> = (0..41).map(|i| 0.8 + 0.01 * i as f64).collect();
        let c: Vec<f64> = ks
            .iter()
            .map(|&k| vanilla_price(&p, &m, &Vanilla::call(k, 0.5)).unwrap())
            .collect();
        for w in c.windows(3) {
            assert!(w[0] - 2.0 * w[1] + w[2] >= -1e-10);
        }
    }

    #[test]
    fn calibration_rejects_bad_inputs() {
        let m = Market::driftless(1.0);
        let q = |k: f64, v: f64| VolQuote {
            strike: k,
            vol: v,
            expiry: 0.5,
        };
        assert!(calibrate(&[q(1.0, 0.1), q(1.0, 0.09), q(1.04, 0.086)], 2.0, &m).is_err());
        let mixed = [
            q(0.95, 0.1),
            q(1.0, 0.09),
            VolQuote {
                strike: 1.04,
                vol: 0.086,
                expiry: 1.0,
            },
        ];
        assert!(calibrate(&mixed, 2.0, &m).is_err());
    }

    #[test]
    fn dupire_deterministic_variance() {
        let p = HestonParams::new(2.0, 0.01, 0.02, 0.0, -0.3).unwrap();
        let m = Market::new(1.0, 0.0, 0.05).unwrap();
        for &(t, k) in &[(0.1f64, 0.95f64), (0.25, 1.0), (0.4, 1.03)] {
            let lv = dupire_local_variance(&p, &m, t, k).unwrap();
            let expected = p.expected_variance(t);
            assert!(!lv.clamped);
            assert!(
                (lv.variance - expected).abs() < 1e-5 * expected / 1e-2,
                "t={t}: {} vs {expected}",
                lv.variance
            );
        }
    }

    #[test]
    fn dupire_short_time_atm_is_initial_variance() {
        let p = HestonParams::<f64>::new(2.0, 0.01, 0.014, 0.3, -0.4).unwrap();
        let m = Market::driftless(1.0);
        let lv = dupire_local_variance(&p, &m, 0.01, 1.0).unwrap();
        assert!((lv.variance - 0.014).abs() < 3e-4, "{}", lv.variance);
    }

    #[test]
    fn dupire_rejects_bad_time() {
        let p = fig1_params();
        assert!(dupire_local_variance(&p, &Market::driftless(1.0), 0.0, 1.0).is_err());
    }

    #[test]
    fn calibration_round_trip() {
        let m = Market::new(1.0, 0.01, 0.03).unwrap();
        let truth = HestonParams::new(2.0, 0.0121, 0.0121, 0.45, -0.55).unwrap();
        let f = m.forward(0.75);
        let quotes: [VolQuote<f64>; 3] = core::array::from_fn(|i| {
            let k = f * [0.94, 1.0, 1.06][i];
            VolQuote {
                strike: k,
                vol: implied_vol(&truth, &m, k, 0.75).unwrap(),
                expiry: 0.75,
            }
        });
        let cal = calibrate(&quotes, 2.0, &m).unwrap();
        assert!(cal.max_abs_residual() < 1e-6);
        assert!((cal.params.v0 - 0.0121).abs() < 1e-5);
        assert!((cal.params.alpha - 0.45).abs() < 1e-3);
        assert!((cal.params.rho + 0.55).abs() < 1e-3);
    }

    #[test]
    fn calibration_to_flat_smile_has_no_vol_of_vol() {
        let m = Market::<f64>::driftless(1.0);
        let quotes = [0.95, 1.0, 1.05].map(|k| VolQuote {
            strike: k,
            vol: 0.09,
            expiry: 0.5,
        });
        let cal = calibrate(&quotes, 2.0, &m).unwrap();
        assert!((cal.params.v0 - 0.0081).abs() < 1e-6);
        assert!(cal.params.alpha < 1e-3);
        assert!(cal.max_abs_residual() < 1e-4);
    }

    #[test]
    fn fig1_quotes_fit_exactly() {
        let quotes = [(0.9554, 0.101), (1.0, 0.09), (1.0438, 0.086)].map(|(k, v)| VolQuote {
            strike: k,
            vol: v,
            expiry: 0.5,
        });
        let cal = calibrate(&quotes, 2.0, &Market::driftless(1.0)).unwrap();
        assert!(cal.max_abs_residual() < 1e-8);
        assert!(cal.params.rho < 0.0);
    }
}
