//! Black-Scholes closed forms: vanillas, digitals, continuously monitored
//! barriers and pay-at-expiry one touches, greeks, implied volatility and
//! the expected future vanna of a vanilla.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::instrument::{
    BarrierDirection, BarrierOption, BarrierStyle, DigitalKind, EuropeanDigital, OneTouch, OptionKind, Vanilla,
};
use crate::market::Market;
use crate::scalar::{norm_cdf, norm_inv, norm_pdf, Scalar};

/// Below this total standard deviation prices collapse to discounted intrinsic.
const MIN_STDDEV: f64 = 1e-8;

/// Flat Black-Scholes market: spot, domestic rate `r`, asset rate `q` and a
/// constant volatility. The risk-neutral drift is `r - q`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BsMarket<T> {
    pub spot: T,
    pub rate_dom: T,
    pub rate_asset: T,
    pub vol: T,
}

impl<T: Scalar> BsMarket<T> {
    pub fn new(spot: T, rate_dom: T, rate_asset: T, vol: T) -> Result<Self> {
        let m = Self {
            spot,
            rate_dom,
            rate_asset,
            vol,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.spot.is_finite() || !(self.spot > T::zero()) {
            return domain(format!("spot must be positive and finite, got {}", self.spot));
        }
        if !self.vol.is_finite() || !(self.vol > T::zero()) {
            return domain(format!("vol must be positive and finite, got {}", self.vol));
        }
        if !self.rate_dom.is_finite() || !self.rate_asset.is_finite() {
            return domain("rates must be finite");
        }
        Ok(())
    }

    #[inline]
    pub fn drift(&self) -> T {
        self.rate_dom - self.rate_asset
    }

    #[inline]
    pub fn forward(&self, t: T) -> T {
        self.spot * (self.drift() * t).exp()
    }

    #[inline]
    pub fn discount(&self, t: T) -> T {
        (-self.rate_dom * t).exp()
    }

    pub fn with_vol(&self, vol: T) -> Self {
        Self { vol, ..*self }
    }

    pub fn with_spot(&self, spot: T) -> Self {
        Self { spot, ..*self }
    }
}

#[inline]
fn d1_d2<T: Scalar>(fwd: T, strike: T, stddev: T) -> (T, T) {
    let d1 = ((fwd / strike).ln() + T::half() * stddev * stddev) / stddev;
    (d1, d1 - stddev)
}

/// Undiscounted Black formula on the forward.
#[inline]
pub fn black_forward<T: Scalar>(fwd: T, strike: T, stddev: T, kind: OptionKind) -> T {
    if stddev < T::lit(MIN_STDDEV) {
        return match kind {
            OptionKind::Call => (fwd - strike).max(T::zero()),
            OptionKind::Put => (strike - fwd).max(T::zero()),
        };
    }
    let (d1, d2) = d1_d2(fwd, strike, stddev);
    match kind {
        OptionKind::Call => fwd * norm_cdf(d1) - strike * norm_cdf(d2),
        OptionKind::Put => strike * norm_cdf(-d2) - fwd * norm_cdf(-d1),
    }
}

fn check_finite<T: Scalar>(mkt: &BsMarket<T>, strike: T, expiry: T) -> Result<()> {
    mkt.validate()?;
    if !strike.is_finite() || !(strike > T::zero()) {
        return domain(format!("strike must be positive and finite, got {strike}"));
    }
    if !expiry.is_finite() || !(expiry > T::zero()) {
        return domain(format!("expiry must be positive and finite, got {expiry}"));
    }
    Ok(())
}

pub fn vanilla_price<T: Scalar>(mkt: &BsMarket<T>, opt: &Vanilla<T>) -> Result<T> {
    check_finite(mkt, opt.strike, opt.expiry)?;
    let t = opt.expiry;
    let stddev = mkt.vol * t.sqrt();
    Ok(mkt.discount(t) * black_forward(mkt.forward(t), opt.strike, stddev, opt.kind))
}

/// Spot delta, no premium adjustment.
pub fn delta<T: Scalar>(mkt: &BsMarket<T>, opt: &Vanilla<T>) -> Result<T> {
    check_finite(mkt, opt.strike, opt.expiry)?;
    let t = opt.expiry;
    let df_asset = (-mkt.rate_asset * t).exp();
    let stddev = mkt.vol * t.sqrt();
    let (d1, _) = d1_d2(mkt.forward(t), opt.strike, stddev);
    Ok(match opt.kind {
        OptionKind::Call => df_asset * norm_cdf(d1),
        OptionKind::Put => -df_asset * norm_cdf(-d1),
    })
}

/// Sensitivity of the price to the volatility.
pub fn vega<T: Scalar>(mkt: &BsMarket<T>, opt: &Vanilla<T>) -> Result<T> {
    check_finite(mkt, opt.strike, opt.expiry)?;
    let t = opt.expiry;
    let stddev = mkt.vol * t.sqrt();
    let fwd = mkt.forward(t);
    let (d1, _) = d1_d2(fwd, opt.strike, stddev);
    Ok(mkt.discount(t) * fwd * norm_pdf(d1) * t.sqrt())
}

/// Derivative of [`vega`] with respect to the forward, `-d2 φ(d1) / σ`
/// scaled by the domestic discount factor.
pub fn vanna<T: Scalar>(mkt: &BsMarket<T>, opt: &Vanilla<T>) -> Result<T> {
    check_finite(mkt, opt.strike, opt.expiry)?;
    let t = opt.expiry;
    let stddev = mkt.vol * t.sqrt();
    let (d1, d2) = d1_d2(mkt.forward(t), opt.strike, stddev);
    Ok(-mkt.discount(t) * d2 * norm_pdf(d1) / mkt.vol)
}

/// Implied volatility from a vanilla price. The `vol` field of `mkt` is
/// ignored.
pub fn implied_vol<T: Scalar>(price: T, mkt: &BsMarket<T>, opt: &Vanilla<T>) -> Result<T> {
    let probe = mkt.with_vol(T::one());
    check_finite(&probe, opt.strike, opt.expiry)?;
    if !price.is_finite() {
        return domain("price must be finite");
    }
    let t = opt.expiry;
    let df = mkt.discount(t);
    let fwd = mkt.forward(t);
    let target = price / df;
    let k = opt.strike;
    let (lower, upper) = match opt.kind {
        OptionKind::Call => ((fwd - k).max(T::zero()), fwd),
        OptionKind::Put => ((k - fwd).max(T::zero()), k),
    };
    if !(target > lower) || !(target < upper) {
        return domain(format!(
            "price {price} outside no-arbitrage bounds ({}, {})",
            lower * df,
            upper * df
        ));
    }
    let sqrt_t = t.sqrt();
    let mut lo = T::zero();
    let mut hi = T::lit(20.0);
    if black_forward(fwd, k, hi * sqrt_t, opt.kind) < target {
        return domain("implied volatility above 2000%");
    }
    // Initial guess from the ATM approximation, clipped into the bracket.
    let mut sigma = ((T::two() * T::PI() / t).sqrt() * target / fwd)
        .max(T::lit(0.05))
        .min(T::lit(2.0));
    for _ in 0..200 {
        let stddev = sigma * sqrt_t;
        let p = black_forward(fwd, k, stddev, opt.kind);
        let diff = p - target;
        if diff > T::zero() {
            hi = sigma;
        } else {
            lo = sigma;
        }
        if diff.abs() <= T::lit(4.0) * T::epsilon() * target {
            return Ok(sigma);
        }
        let (d1, _) = d1_d2(fwd, k, stddev);
        let v = fwd * norm_pdf(d1) * sqrt_t;
        let mut next = sigma - diff / v;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = T::half() * (lo + hi);
        }
        if (next - sigma).abs() <= T::lit(1e-15) * sigma {
            return Ok(next);
        }
        sigma = next;
        if hi - lo <= T::epsilon() * hi {
            return Ok(sigma);
        }
    }
    Err(Error::Numerical("implied volatility did not converge".into()))
}

/// Price of a European digital paying one unit at expiry.
pub fn digital_price<T: Scalar>(mkt: &BsMarket<T>, dig: &EuropeanDigital<T>) -> Result<T> {
    check_finite(mkt, dig.strike, dig.expiry)?;
    let t = dig.expiry;
    let df = mkt.discount(t);
    let fwd = mkt.forward(t);
    let stddev = mkt.vol * t.sqrt();
    let p_above = if stddev < T::lit(MIN_STDDEV) {
        if fwd > dig.strike {
            T::one()
        } else {
            T::zero()
        }
    } else {
        norm_cdf(d1_d2(fwd, dig.strike, stddev).1)
    };
    Ok(match dig.kind {
        DigitalKind::Above => df * p_above,
        DigitalKind::Below => df * (T::one() - p_above),
    })
}

/// Undiscounted probability that the continuously monitored log-spot touches
/// the barrier before `t`.
pub fn touch_probability<T: Scalar>(spot: T, barrier: T, drift: T, vol: T, t: T, direction: BarrierDirection) -> T {
    if direction.is_breached(spot, barrier) {
        return T::one();
    }
    if t <= T::zero() {
        return T::zero();
    }
    let stddev = vol * t.sqrt();
    let h = (barrier / spot).ln();
    let nu = drift - T::half() * vol * vol;
    if stddev < T::lit(MIN_STDDEV) {
        let end = nu * t;
        let hit = match direction {
            BarrierDirection::Down => end <= h,
            BarrierDirection::Up => end >= h,
        };
        return if hit { T::one() } else { T::zero() };
    }
    let reflect = (T::two() * nu * h / (vol * vol)).exp();
    let p = match direction {
        BarrierDirection::Down => norm_cdf((h - nu * t) / stddev) + reflect * norm_cdf((h + nu * t) / stddev),
        BarrierDirection::Up => norm_cdf((-h + nu * t) / stddev) + reflect * norm_cdf((-h - nu * t) / stddev),
    };
    p.max(T::zero()).min(T::one())
}

/// Price of a one touch paying one unit at expiry.
pub fn one_touch_price<T: Scalar>(mkt: &BsMarket<T>, ot: &OneTouch<T>) -> Result<T> {
    check_finite(mkt, ot.barrier, ot.expiry)?;
    let p = touch_probability(mkt.spot, ot.barrier, mkt.drift(), mkt.vol, ot.expiry, ot.direction);
    Ok(mkt.discount(ot.expiry) * p)
}

/// Continuously monitored single barrier without rebate.
///
/// Knockouts use the image solution; knock-ins are priced as the vanilla
/// minus the knockout so in-out parity holds exactly.
pub fn barrier_price<T: Scalar>(mkt: &BsMarket<T>, opt: &BarrierOption<T>) -> Result<T> {
    opt.validate()?;
    let vanilla = vanilla_price(mkt, &opt.underlying)?;
    let ko = knock_out_price(mkt, opt)?;
    Ok(match opt.style {
        BarrierStyle::KnockOut => ko,
        BarrierStyle::KnockIn => vanilla - ko,
    })
}

fn knock_out_price<T: Scalar>(mkt: &BsMarket<T>, opt: &BarrierOption<T>) -> Result<T> {
    let s = mkt.spot;
    let h = opt.barrier;
    let k = opt.underlying.strike;
    let t = opt.underlying.expiry;
    if opt.direction.is_breached(s, h) {
        return Ok(T::zero());
    }
    let sigma = mkt.vol;
    let stddev = sigma * t.sqrt();
    if stddev < T::lit(MIN_STDDEV) {
        // No diffusion: the forward path is monotone, check its end point.
        let fwd = mkt.forward(t);
        if opt.direction.is_breached(fwd, h) {
            return Ok(T::zero());
        }
        return vanilla_price(mkt, &opt.underlying);
    }
    let r = mkt.rate_dom;
    let b = mkt.drift();
    let mu = (b - T::half() * sigma * sigma) / (sigma * sigma);
    let carry_df = ((b - r) * t).exp();
    let df = (-r * t).exp();
    let phi = opt.underlying.kind.sign::<T>();
    let eta = match opt.direction {
        BarrierDirection::Down => T::one(),
        BarrierDirection::Up => -T::one(),
    };
    let shift = (T::one() + mu) * stddev;
    let x1 = (s / k).ln() / stddev + shift;
    let x2 = (s / h).ln() / stddev + shift;
    let y1 = (h * h / (s * k)).ln() / stddev + shift;
    let y2 = (h / s).ln() / stddev + shift;
    let hs = h / s;
    let pow1 = hs.powf(T::two() * (mu + T::one()));
    let pow2 = hs.powf(T::two() * mu);

    let a = phi * s * carry_df * norm_cdf(phi * x1) - phi * k * df * norm_cdf(phi * x1 - phi * stddev);
    let bb = phi * s * carry_df * norm_cdf(phi * x2) - phi * k * df * norm_cdf(phi * x2 - phi * stddev);
    let c = phi * s * carry_df * pow1 * norm_cdf(eta * y1) - phi * k * df * pow2 * norm_cdf(eta * y1 - eta * stddev);
    let d = phi * s * carry_df * pow1 * norm_cdf(eta * y2) - phi * k * df * pow2 * norm_cdf(eta * y2 - eta * stddev);

    let v = match (opt.underlying.kind, opt.direction) {
        (OptionKind::Call, BarrierDirection::Down) => {
            if k > h {
                a - c
            } else {
                bb - d
            }
        }
        (OptionKind::Call, BarrierDirection::Up) => {
            if k > h {
                T::zero()
            } else {
                a - bb + c - d
            }
        }
        (OptionKind::Put, BarrierDirection::Down) => {
            if k > h {
                a - bb + c - d
            } else {
                T::zero()
            }
        }
        (OptionKind::Put, BarrierDirection::Up) => {
            if k > h {
                bb - d
            } else {
                a - c
            }
        }
    };
    Ok(v.max(T::zero()))
}

/// Strike whose spot delta (no premium adjustment) equals `delta`.
///
/// Positive deltas select calls, negative deltas puts.
pub fn strike_for_delta<T: Scalar>(mkt: &BsMarket<T>, delta: T, expiry: T) -> Result<T> {
    mkt.validate()?;
    if !(delta.abs() > T::zero()) || !(delta.abs() < T::one()) {
        return domain(format!("delta must satisfy 0 < |delta| < 1, got {delta}"));
    }
    if !(expiry > T::zero()) {
        return domain("expiry must be positive");
    }
    let scaled = delta.abs() * (mkt.rate_asset * expiry).exp();
    if !(scaled < T::one()) {
        return domain(format!(
            "delta {delta} unattainable with asset discount factor at expiry {expiry}"
        ));
    }
    let d1 = if delta > T::zero() {
        norm_inv(scaled)
    } else {
        -norm_inv(scaled)
    };
    let stddev = mkt.vol * expiry.sqrt();
    Ok(mkt.forward(expiry) * (-d1 * stddev + T::half() * stddev * stddev).exp())
}

/// Strike with spot delta `delta` on a smile, found by iterating
/// `K -> strike_for_delta(vol_at(K))` from the forward.
///
/// Returns the strike and its smile volatility.
pub fn smile_strike_for_delta<T: Scalar, F>(mkt: &Market<T>, delta: T, expiry: T, mut vol_at: F) -> Result<(T, T)>
where
    F: FnMut(T) -> Result<T>,
{
    let mut k = mkt.forward(expiry);
    let mut vol = vol_at(k)?;
    for _ in 0..200 {
        k = strike_for_delta(&mkt.with_vol(vol), delta, expiry)?;
        let next = vol_at(k)?;
        if (next - vol).abs() < T::lit(1e-12) {
            return Ok((k, next));
        }
        vol = next;
    }
    Err(Error::Numerical(format!(
        "delta strike iteration did not settle for delta {delta}"
    )))
}

/// Expected vanna at a future time `t` of a vanilla struck so that its
/// initial `d1` is `d1_0`, averaged over the lognormal forward at `t`.
///
/// Zero rates; vanna is taken with respect to the forward.
pub fn expected_future_vanna<T: Scalar>(d1_0: T, sigma: T, expiry: T, t: T) -> Result<T> {
    if !(sigma > T::zero()) || !(expiry > T::zero()) {
        return domain("sigma and expiry must be positive");
    }
    if t < T::zero() || t > expiry {
        return domain(format!("t={t} must lie in [0, {expiry}]"));
    }
    let sqrt_t = expiry.sqrt();
    let d2_0 = d1_0 - sigma * sqrt_t;
    let shift = sigma * t / sqrt_t;
    Ok(norm_pdf(d1_0 - shift) * (expiry - t) / (sigma * expiry) * (-d2_0 + shift))
}

/// Small-`σ√T` limit of [`expected_future_vanna`]: the inception vanna
/// decaying linearly to zero at expiry.
pub fn expected_future_vanna_asymptotic<T: Scalar>(d1_0: T, sigma: T, expiry: T, t: T) -> Result<T> {
    if !(sigma > T::zero()) || !(expiry > T::zero()) {
        return domain("sigma and expiry must be positive");
    }
    if t < T::zero() || t > expiry {
        return domain(format!("t={t} must lie in [0, {expiry}]"));
    }
    let d2_0 = d1_0 - sigma * expiry.sqrt();
    Ok(-d2_0 * norm_pdf(d1_0) / sigma * (expiry - t) / expiry)
}

/// Central finite-difference volatility sensitivity of an arbitrary
/// Black-Scholes pricer.
pub fn vol_sensitivity<T: Scalar, F>(mkt: &BsMarket<T>, mut pricer: F) -> Result<T>
where
    F: FnMut(&BsMarket<T>) -> Result<T>,
{
    let h = mkt.vol * T::lit(1e-4);
    let up = pricer(&mkt.with_vol(mkt.vol + h))?;
    let dn = pricer(&mkt.with_vol(mkt.vol - h))?;
    Ok((up - dn) / (T::two() * h))
}
