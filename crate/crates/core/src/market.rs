use serde::{Deserialize, Serialize};

use crate::bs::BsMarket;
use crate::error::{domain, Result};
use crate::scalar::Scalar;

/// Spot and flat continuously-compounded rates, no volatility.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Market<T> {
    pub spot: T,
    pub rate_dom: T,
    pub rate_asset: T,
}

impl<T: Scalar> Market<T> {
    pub fn new(spot: T, rate_dom: T, rate_asset: T) -> Result<Self> {
        let m = Self {
            spot,
            rate_dom,
            rate_asset,
        };
        m.validate()?;
        Ok(m)
    }

    /// Zero-rate market at the given spot.
    pub fn driftless(spot: T) -> Self {
        Self {
            spot,
            rate_dom: T::zero(),
            rate_asset: T::zero(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.spot.is_finite() || !(self.spot > T::zero()) {
            return domain(format!("spot must be positive and finite, got {}", self.spot));
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

    pub fn with_spot(&self, spot: T) -> Self {
        Self { spot, ..*self }
    }

    pub fn with_vol(&self, vol: T) -> BsMarket<T> {
        BsMarket {
            spot: self.spot,
            rate_dom: self.rate_dom,
            rate_asset: self.rate_asset,
            vol,
        }
    }
}

impl<T: Scalar> From<BsMarket<T>> for Market<T> {
    fn from(m: BsMarket<T>) -> Self {
        Self {
            spot: m.spot,
            rate_dom: m.rate_dom,
            rate_asset: m.rate_asset,
        }
    }
}
