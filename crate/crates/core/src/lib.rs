//! Pricing library for the stochastic volatility / stochastic spot-vol
//! correlation (SVSC) model.
//!
//! * [`bs`]: Black-Scholes closed forms and greeks.
//! * [`heston`]: semi-closed-form Heston pricing, calibration and Dupire
//!   local variance.
//! * [`mc`]: Monte Carlo engine for the full three-factor dynamics.
//! * [`approx`]: the fast semi-static replication approximation for
//!   barriers and one touches.
//! * [`estimation`]: historical estimation of the marked parameters.
//!
//! Everything numeric is generic over [`Scalar`]; the `*64` aliases below
//! fix the scalar to `f64`.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod approx;
pub mod bs;
pub mod error;
pub mod estimation;
pub mod heston;
pub mod instrument;
pub mod market;
pub mod mc;
pub mod numerics;
pub mod scalar;

pub use error::{Error, Result};
pub use instrument::{
    BarrierDirection, BarrierOption, BarrierStyle, DigitalKind, EuropeanDigital, Instrument, OneTouch, OptionKind,
    Vanilla,
};
pub use market::Market;
pub use scalar::Scalar;

pub type BsMarket64 = bs::BsMarket<f64>;
pub type Vanilla64 = Vanilla<f64>;
pub type BarrierOption64 = BarrierOption<f64>;
pub type OneTouch64 = OneTouch<f64>;
pub type EuropeanDigital64 = EuropeanDigital<f64>;
pub type Instrument64 = Instrument<f64>;
pub type Market64 = Market<f64>;
pub type HestonParams64 = heston::HestonParams<f64>;
pub type SvscParams64 = mc::SvscParams<f64>;
pub type PricingResult64 = mc::PricingResult<f64>;
pub type ApproxEngine64 = approx::ApproxEngine<f64>;
pub type ApproxResult64 = approx::ApproxResult<f64>;
pub type SvscMarks64 = approx::SvscMarks<f64>;
pub type MarketSeries64 = estimation::MarketSeries<f64>;
pub type EstimationConfig64 = estimation::EstimationConfig<f64>;
pub type EstimationReport64 = estimation::EstimationReport<f64>;
pub type SyntheticConfig64 = estimation::SyntheticConfig<f64>;
