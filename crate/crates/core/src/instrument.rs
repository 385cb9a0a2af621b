//! Contract definitions shared by the analytic, Monte Carlo and
//! approximation pricers.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptionKind {
    Call,
    Put,
}

impl OptionKind {
    /// +1 for calls, -1 for puts.
    pub fn sign<T: Scalar>(self) -> T {
        match self {
            OptionKind::Call => T::one(),
            OptionKind::Put => -T::one(),
        }
    }

    pub fn opposite(self) -> Self {
        match self {
            OptionKind::Call => OptionKind::Put,
            OptionKind::Put => OptionKind::Call,
        }
    }
}

/// Exercise condition of a European digital.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DigitalKind {
    /// Pays if the terminal spot is above the strike.
    Above,
    /// Pays if the terminal spot is below the strike.
    Below,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BarrierDirection {
    Up,
    Down,
}

impl BarrierDirection {
    /// The digital that pays in the region beyond the barrier.
    pub fn digital_kind(self) -> DigitalKind {
        match self {
            BarrierDirection::Up => DigitalKind::Above,
            BarrierDirection::Down => DigitalKind::Below,
        }
    }

    /// Direction implied by the barrier level relative to spot.
    pub fn from_levels<T: Scalar>(spot: T, barrier: T) -> Self {
        if barrier < spot {
            BarrierDirection::Down
        } else {
            BarrierDirection::Up
        }
    }

    /// True when `spot` is at or beyond the barrier.
    pub fn is_breached<T: Scalar>(self, spot: T, barrier: T) -> bool {
        match self {
            BarrierDirection::Up => spot >= barrier,
            BarrierDirection::Down => spot <= barrier,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BarrierStyle {
    KnockOut,
    KnockIn,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Vanilla<T> {
    pub strike: T,
    pub expiry: T,
    pub kind: OptionKind,
}

impl<T: Scalar> Vanilla<T> {
    pub fn new(strike: T, expiry: T, kind: OptionKind) -> Result<Self> {
        let v = Self { strike, expiry, kind };
        v.validate()?;
        Ok(v)
    }

    pub fn call(strike: T, expiry: T) -> Self {
        Self {
            strike,
            expiry,
            kind: OptionKind::Call,
        }
    }

    pub fn put(strike: T, expiry: T) -> Self {
        Self {
            strike,
            expiry,
            kind: OptionKind::Put,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.strike > T::zero()) || !self.strike.is_finite() {
            return domain(format!("strike must be positive, got {}", self.strike));
        }
        if !(self.expiry > T::zero()) || !self.expiry.is_finite() {
            return domain(format!("expiry must be positive, got {}", self.expiry));
        }
        Ok(())
    }

    /// Payoff at expiry for terminal spot `s`.
    #[inline]
    pub fn payoff(&self, s: T) -> T {
        match self.kind {
            OptionKind::Call => (s - self.strike).max(T::zero()),
            OptionKind::Put => (self.strike - s).max(T::zero()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BarrierOption<T> {
    pub underlying: Vanilla<T>,
    pub barrier: T,
    pub style: BarrierStyle,
    pub direction: BarrierDirection,
}

impl<T: Scalar> BarrierOption<T> {
    pub fn knock_out(underlying: Vanilla<T>, barrier: T, direction: BarrierDirection) -> Self {
        Self {
            underlying,
            barrier,
            style: BarrierStyle::KnockOut,
            direction,
        }
    }

    pub fn knock_in(underlying: Vanilla<T>, barrier: T, direction: BarrierDirection) -> Self {
        Self {
            underlying,
            barrier,
            style: BarrierStyle::KnockIn,
            direction,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.underlying.validate()?;
        if !(self.barrier > T::zero()) {
            return domain(format!("barrier must be positive, got {}", self.barrier));
        }
        Ok(())
    }

    /// Checks that the direction is consistent with the spot at trade time.
    pub fn validate_against_spot(&self, spot: T) -> Result<()> {
        self.validate()?;
        match self.direction {
            BarrierDirection::Down if self.barrier >= spot => {
                domain(format!("down barrier {} must be below spot {}", self.barrier, spot))
            }
            BarrierDirection::Up if self.barrier <= spot => {
                domain(format!("up barrier {} must be above spot {}", self.barrier, spot))
            }
            _ => Ok(()),
        }
    }

    /// A knockout whose underlying vanilla is out of the money at the
    /// barrier (down-and-out call with `B < K`, up-and-out put with `B > K`).
    pub fn is_out_of_the_money_barrier(&self) -> bool {
        let k = self.underlying.strike;
        match (self.underlying.kind, self.direction) {
            (OptionKind::Call, BarrierDirection::Down) => self.barrier <= k,
            (OptionKind::Put, BarrierDirection::Up) => self.barrier >= k,
            (OptionKind::Call, BarrierDirection::Up) => false,
            (OptionKind::Put, BarrierDirection::Down) => false,
        }
    }
}

/// Pays one unit of the denominated currency at expiry if the barrier was
/// touched at any time before expiry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OneTouch<T> {
    pub barrier: T,
    pub expiry: T,
    pub direction: BarrierDirection,
}

impl<T: Scalar> OneTouch<T> {
    pub fn new(barrier: T, expiry: T, direction: BarrierDirection) -> Result<Self> {
        if !(barrier > T::zero()) {
            return domain(format!("barrier must be positive, got {barrier}"));
        }
        if !(expiry > T::zero()) {
            return domain(format!("expiry must be positive, got {expiry}"));
        }
        Ok(Self {
            barrier,
            expiry,
            direction,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EuropeanDigital<T> {
    pub strike: T,
    pub expiry: T,
    pub kind: DigitalKind,
}

impl<T: Scalar> EuropeanDigital<T> {
    pub fn new(strike: T, expiry: T, kind: DigitalKind) -> Result<Self> {
        if !(strike > T::zero()) {
            return domain(format!("strike must be positive, got {strike}"));
        }
        if !(expiry > T::zero()) {
            return domain(format!("expiry must be positive, got {expiry}"));
        }
        Ok(Self { strike, expiry, kind })
    }

    #[inline]
    pub fn payoff(&self, s: T) -> T {
        let hit = match self.kind {
            DigitalKind::Above => s > self.strike,
            DigitalKind::Below => s < self.strike,
        };
        if hit {
            T::one()
        } else {
            T::zero()
        }
    }
}

/// Any contract the library can price.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Instrument<T> {
    Vanilla(Vanilla<T>),
    Digital(EuropeanDigital<T>),
    OneTouch(OneTouch<T>),
    Barrier(BarrierOption<T>),
}

impl<T: Scalar> Instrument<T> {
    pub fn expiry(&self) -> T {
        match self {
            Instrument::Vanilla(v) => v.expiry,
            Instrument::Digital(d) => d.expiry,
            Instrument::OneTouch(o) => o.expiry,
            Instrument::Barrier(b) => b.underlying.expiry,
        }
    }
}
