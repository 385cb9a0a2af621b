//! Fast barrier and one-touch approximation.
//!
//! A knockout is replicated semi-statically with vanillas (a one touch with
//! European digitals). The replication is priced under a Heston model
//! calibrated to the vanilla smile at expiry, and the expected cost of
//! unwinding it at the first touch is added bucket by bucket. Each unwind is
//! priced in Heston with the Dupire variance at the barrier and an effective
//! correlation that carries the SVSC spot/correlation covariance.
//!
//! In-the-money knockouts follow from barrier put/call parity with a strip
//! of one touches replicating the barrier forward.

use serde::{Deserialize, Serialize};

use crate::bs::{self, BsMarket};
use crate::error::{domain, Error, Result};
use crate::heston::{self, Calibration, HestonParams, VolQuote};
use crate::instrument::{
    BarrierDirection, BarrierOption, BarrierStyle, DigitalKind, EuropeanDigital, Instrument, OneTouch, OptionKind,
    Vanilla,
};
use crate::market::Market;
use crate::numerics::{brent, decay_average};
use crate::scalar::Scalar;

/// Bound applied to effective correlations handed to Heston.
pub const EFFECTIVE_RHO_BOUND: f64 = 0.99;

/// Risk-reversal weighting factors `(D1, D2)` for variance mean reversion
/// `beta`, correlation mean reversion `gamma` and tenor `t`.
///
/// `D1 = 1 - (1 - e^{-bT})/(bT)` and
/// `D2 = (1 - e^{-gT})/(gT) + (e^{-bT} - e^{-gT})/((b - g)T)`, with the
/// removable singularities at `g = b`, `g = 0` and `T -> 0` handled by series.
pub fn d_factors<T: Scalar>(beta: T, gamma: T, t: T) -> Result<(T, T)> {
    if !(beta > T::zero()) || !(gamma >= T::zero()) || !(t > T::zero()) {
        return domain(format!(
            "d_factors needs beta > 0, gamma >= 0, T > 0 (got {beta}, {gamma}, {t})"
        ));
    }
    let x = beta * t;
    let y = gamma * t;
    if x.max(y) < T::lit(1e-3) {
        // Leading terms of T^-1 ∫ e^{-g s}(1 - e^{-b(T-s)}) ds.
        let d1 = x * (T::half() - x * (T::one() / T::lit(6.0) - x / T::lit(24.0)));
        let d2 = x * (T::half() - (x + y) / T::lit(6.0) + (x * x + x * y + y * y) / T::lit(24.0));
        return Ok((d1, d2));
    }
    let d1 = T::one() - decay_average(x);
    let d2 = decay_average(y) - (-x).exp() * decay_average(y - x);
    Ok((d1, d2))
}

/// Constant correlation matching the risk-reversal premium of the
/// correlation path `rho_bar + (rho0 - rho_bar) e^{-gamma t}` over `[0, T]`.
///
/// Returns the correlation and whether it had to be clamped to
/// `[-0.99, 0.99]`.
pub fn effective_correlation<T: Scalar>(rho_bar: T, rho0: T, beta: T, gamma: T, t: T) -> Result<(T, bool)> {
    let (d1, d2) = d_factors(beta, gamma, t)?;
    let raw = rho_bar + (rho0 - rho_bar) * d2 / d1;
    Ok(clamp_rho(raw))
}

fn clamp_rho<T: Scalar>(raw: T) -> (T, bool) {
    let b = T::lit(EFFECTIVE_RHO_BOUND);
    let c = raw.max(-b).min(b);
    (c, c != raw)
}

/// Strike `K'` of the reflected leg: the Black-Scholes value of
/// `sqrt(K/K')` reflected vanillas equals the Black-Scholes knockout price.
///
/// `mkt` carries the constant (ATM) volatility and drift. Reduces to
/// `B^2/K` at zero drift.
pub fn reflected_strike<T: Scalar>(mkt: &BsMarket<T>, opt: &BarrierOption<T>) -> Result<T> {
    mkt.validate()?;
    opt.validate_against_spot(mkt.spot)?;
    if opt.style != BarrierStyle::KnockOut || !opt.is_out_of_the_money_barrier() {
        return Err(Error::Replication(
            "reflected strike is defined for out-of-the-money knockouts".into(),
        ));
    }
    let k = opt.underlying.strike;
    let t = opt.underlying.expiry;
    let b = opt.barrier;
    let target = bs::vanilla_price(mkt, &opt.underlying)? - bs::barrier_price(mkt, opt)?;
    let kind = opt.underlying.kind.opposite();
    let f = |ln_kp: T| {
        let kp = ln_kp.exp();
        match bs::vanilla_price(
            mkt,
            &Vanilla {
                strike: kp,
                expiry: t,
                kind,
            },
        ) {
            Ok(v) => v * (k / kp).sqrt() - target,
            Err(_) => T::nan(),
        }
    };
    let guess = (b * b / k).ln();
    let mut lo = guess;
    let mut hi = guess;
    let step = T::lit(0.02);
    let mut bracketed = false;
    for i in 1..=200 {
        lo = guess - step * T::lit(i as f64);
        hi = guess + step * T::lit(i as f64);
        let (fl, fh) = (f(lo), f(hi));
        if fl.is_finite() && fh.is_finite() && (fl > T::zero()) != (fh > T::zero()) {
            bracketed = true;
            break;
        }
    }
    if !bracketed {
        return Err(Error::Replication(format!(
            "no reflected strike found for K={k}, B={b}"
        )));
    }
    let root = brent(f, lo, hi, T::lit(1e-14), 200).map_err(|e| Error::Replication(e.to_string()))?;
    Ok(root.exp())
}

/// Expected spot/vol correlation at time `t` conditional on spot first
/// touching `barrier` at `t`.
///
/// `xi` is `rho_cs * epsilon`, `fwd_t` the forward to `t` and `sigma2` the
/// constant variance proxy. Two passes: the first uses `rho_h` in the
/// `sqrt(1 - rho'^2)` factor, the second the midpoint of `rho_h` and the
/// first-pass value.
pub fn conditional_expected_correlation<T: Scalar>(
    t: T,
    barrier: T,
    fwd_t: T,
    rho_h: T,
    gamma: T,
    xi: T,
    sigma2: T,
) -> Result<T> {
    if !(t > T::zero()) || !(barrier > T::zero()) || !(fwd_t > T::zero()) || !(gamma >= T::zero()) {
        return domain("conditional correlation needs t, barrier, forward > 0 and gamma >= 0");
    }
    let shift = decay_average(gamma * t) * ((barrier / fwd_t).ln() + T::half() * sigma2 * t);
    let pass = |rho_prime: T| {
        let perp = (T::one() - rho_prime * rho_prime).max(T::zero()).sqrt();
        (rho_h + xi * perp * shift).max(-T::one()).min(T::one())
    };
    let rho1 = pass(rho_h);
    Ok(pass(T::half() * (rho_h + rho1)))
}

/// Effective Heston correlation for an unwind at `t` when the conditional
/// correlation at `t` is `rho_cond`, relaxing back to `rho_h` at rate
/// `gamma` over the remaining `tau = T - t`.
pub fn unwind_correlation<T: Scalar>(rho_cond: T, rho_h: T, beta: T, gamma: T, tau: T) -> Result<(T, bool)> {
    effective_correlation(rho_h, rho_cond, beta, gamma, tau)
}

/// Approximate undiscounted probability of touching `barrier` before `t`:
/// `P = P_BS + 2 (E - E_BS)(1 - P_BS)`, with `E` the Heston digital beyond
/// the barrier and the Black-Scholes quantities at `atm_vol`.
pub fn first_touch_probability<T: Scalar>(
    t: T,
    barrier: T,
    hp: &HestonParams<T>,
    mkt: &Market<T>,
    atm_vol: T,
) -> Result<T> {
    if !(t > T::zero()) {
        return domain("first-touch time must be positive");
    }
    let direction = BarrierDirection::from_levels(mkt.spot, barrier);
    if direction.is_breached(mkt.spot, barrier) {
        return Ok(T::one());
    }
    let df = mkt.discount(t);
    let dig = EuropeanDigital::new(barrier, t, direction.digital_kind())?;
    let p_bs = bs::touch_probability(mkt.spot, barrier, mkt.drift(), atm_vol, t, direction);
    let e_bs = bs::digital_price(&mkt.with_vol(atm_vol), &dig)? / df;
    let e = heston::digital_price(hp, mkt, &dig)? / df;
    let p = p_bs + T::two() * (e - e_bs) * (T::one() - p_bs);
    Ok(p.max(T::zero()).min(T::one()))
}

/// SVSC parameters the approximation needs beyond the vanilla smile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvscMarks<T> {
    pub beta: T,
    pub gamma: T,
    /// `rho_cs * epsilon`.
    pub xi: T,
}

impl<T: Scalar> SvscMarks<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > T::zero()) || !(self.gamma >= T::zero()) || !self.xi.is_finite() {
            return domain(format!("invalid marks {self:?}"));
        }
        Ok(())
    }
}

/// Where the unwind's instantaneous variance is read from the Dupire
/// surface.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DupirePoint {
    /// Local variance at strike = barrier.
    #[default]
    Barrier,
    /// Local variance at the forward to the bucket midpoint.
    Forward,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApproxConfig<T> {
    pub n_buckets: usize,
    pub dupire_point: DupirePoint,
    /// Long-run correlation used when blending the conditional correlation
    /// into an effective one. `None` uses the calibrated Heston correlation.
    pub rho_bar_override: Option<T>,
}

impl<T: Scalar> Default for ApproxConfig<T> {
    fn default() -> Self {
        Self {
            n_buckets: 10,
            dupire_point: DupirePoint::Barrier,
            rho_bar_override: None,
        }
    }
}

/// Signed position in a replication portfolio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Leg<T> {
    pub instrument: Instrument<T>,
    pub quantity: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationPortfolio<T> {
    pub legs: Vec<Leg<T>>,
    pub strike: T,
    /// Strike of the short leg for barrier replications.
    pub reflected_strike: Option<T>,
    pub barrier: T,
    pub expiry: T,
}

impl<T: Scalar> ReplicationPortfolio<T> {
    /// Heston value with every leg re-expired to `tau` and spot taken from
    /// `mkt`.
    pub fn heston_value(&self, hp: &HestonParams<T>, mkt: &Market<T>, tau: T) -> Result<T> {
        let mut total = T::zero();
        for leg in &self.legs {
            let v = match leg.instrument {
                Instrument::Vanilla(v) => heston::vanilla_price(hp, mkt, &Vanilla { expiry: tau, ..v })?,
                Instrument::Digital(d) => heston::digital_price(hp, mkt, &EuropeanDigital { expiry: tau, ..d })?,
                _ => return Err(Error::Replication("unsupported replication leg".into())),
            };
            total += leg.quantity * v;
        }
        Ok(total)
    }
}

/// Per-bucket record of the unwind calculation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnwindGrid<T> {
    pub t_start: Vec<T>,
    pub t_mid: Vec<T>,
    pub t_end: Vec<T>,
    /// First-touch probability at each bucket end (monotone).
    pub touch_probability: Vec<T>,
    pub discount: Vec<T>,
    pub conditional_rho: Vec<T>,
    pub effective_rho: Vec<T>,
    pub variance: Vec<T>,
    pub replication_value: Vec<T>,
}

impl<T: Scalar> UnwindGrid<T> {
    /// Probability increment of bucket `i`.
    pub fn increment(&self, i: usize) -> T {
        let prev = if i == 0 {
            T::zero()
        } else {
            self.touch_probability[i - 1]
        };
        self.touch_probability[i] - prev
    }

    pub fn total_probability(&self) -> T {
        self.touch_probability.last().copied().unwrap_or(T::zero())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApproxDiagnostics<T> {
    pub replication: ReplicationPortfolio<T>,
    /// Heston value of the replication at inception.
    pub replication_value: T,
    pub unwind_value: T,
    /// Heston-measure barrier (or one-touch) value before normalisation.
    pub heston_value: T,
    pub heston_vanilla: Option<T>,
    pub no_touch_probability: Option<T>,
    pub market_vanilla: Option<T>,
    pub market_digital: Option<T>,
    pub price: T,
    pub grid: UnwindGrid<T>,
    pub calibration: Calibration<T>,
    /// Human-readable notes on clamps and fallbacks.
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApproxResult<T> {
    pub price: T,
    pub diagnostics: ApproxDiagnostics<T>,
}

/// Approximation pricer for one market and one expiry.
///
/// Holds the Heston calibration to the three vanilla quotes so a book of
/// same-expiry instruments shares it.
#[derive(Debug, Clone)]
pub struct ApproxEngine<T> {
    market: Market<T>,
    quotes: [VolQuote<T>; 3],
    marks: SvscMarks<T>,
    config: ApproxConfig<T>,
    calibration: Calibration<T>,
    atm_vol: T,
    expiry: T,
}

impl<T: Scalar> ApproxEngine<T> {
    /// Calibrates Heston (with `beta` from `marks`) to `quotes`.
    pub fn new(
        market: Market<T>,
        quotes: [VolQuote<T>; 3],
        marks: SvscMarks<T>,
        config: ApproxConfig<T>,
    ) -> Result<Self> {
        let calibration = heston::calibrate(&quotes, marks.beta, &market)?;
        Self::with_calibration(market, quotes, marks, config, calibration)
    }

    /// Uses an existing calibration instead of recalibrating.
    pub fn with_calibration(
        market: Market<T>,
        quotes: [VolQuote<T>; 3],
        marks: SvscMarks<T>,
        config: ApproxConfig<T>,
        calibration: Calibration<T>,
    ) -> Result<Self> {
        market.validate()?;
        marks.validate()?;
        if config.n_buckets == 0 {
            return domain("n_buckets must be at least 1");
        }
        let expiry = quotes[0].expiry;
        let fwd = market.forward(expiry);
        let atm = quotes
            .iter()
            .min_by(|a, b| {
                (a.strike / fwd)
                    .ln()
                    .abs()
                    .partial_cmp(&(b.strike / fwd).ln().abs())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
            .map(|q| q.vol)
            .ok_or_else(|| Error::Domain("no quotes".into()))?;
        Ok(Self {
            market,
            quotes,
            marks,
            config,
            calibration,
            atm_vol: atm,
            expiry,
        })
    }

    pub fn calibration(&self) -> &Calibration<T> {
        &self.calibration
    }

    pub fn heston(&self) -> &HestonParams<T> {
        &self.calibration.params
    }

    pub fn atm_vol(&self) -> T {
        self.atm_vol
    }

    pub fn expiry(&self) -> T {
        self.expiry
    }

    pub fn market(&self) -> &Market<T> {
        &self.market
    }

    pub fn quotes(&self) -> &[VolQuote<T>; 3] {
        &self.quotes
    }

    fn bs_market(&self) -> BsMarket<T> {
        self.market.with_vol(self.atm_vol)
    }

    fn rho_bar(&self) -> T {
        self.config.rho_bar_override.unwrap_or(self.calibration.params.rho)
    }

    fn check_expiry(&self, t: T) -> Result<()> {
        if (t - self.expiry).abs() > T::lit(1e-10) * self.expiry.max(T::one()) {
            return domain(format!(
                "instrument expiry {t} differs from the calibrated expiry {}",
                self.expiry
            ));
        }
        Ok(())
    }

    /// Builds the unwind grid over `[0, horizon]` for a replication that is
    /// valued at the barrier by `value_at_barrier(params, market_at_b, tau)`.
    fn unwind_grid<F>(
        &self,
        barrier: T,
        horizon: T,
        warnings: &mut Vec<String>,
        mut value_at_barrier: F,
    ) -> Result<UnwindGrid<T>>
    where
        F: FnMut(&HestonParams<T>, &Market<T>, T) -> Result<T>,
    {
        let n = self.config.n_buckets;
        let hp = self.calibration.params;
        let width = horizon / T::lit(n as f64);
        let tau_floor = horizon / T::lit(4.0 * n as f64);
        let mkt_b = self.market.with_spot(barrier);
        let mut grid = UnwindGrid {
            t_start: Vec::with_capacity(n),
            t_mid: Vec::with_capacity(n),
            t_end: Vec::with_capacity(n),
            touch_probability: Vec::with_capacity(n),
            discount: Vec::with_capacity(n),
            conditional_rho: Vec::with_capacity(n),
            effective_rho: Vec::with_capacity(n),
            variance: Vec::with_capacity(n),
            replication_value: Vec::with_capacity(n),
        };
        let mut running_p = T::zero();
        let mut prev_rho_eff: Option<T> = None;
        for i in 0..n {
            let ts = width * T::lit(i as f64);
            let te = if i + 1 == n {
                horizon
            } else {
                width * T::lit((i + 1) as f64)
            };
            let tm = T::half() * (ts + te);
            let p = first_touch_probability(te, barrier, &hp, &self.market, self.atm_vol)?;
            if p < running_p {
                warnings.push(format!("touch probability made monotone at t={te}"));
            }
            running_p = running_p.max(p);

            let rho_cond = conditional_expected_correlation(
                tm,
                barrier,
                self.market.forward(tm),
                hp.rho,
                self.marks.gamma,
                self.marks.xi,
                hp.v_bar,
            )?;
            // The effective correlation is anchored to the full expiry `T`,
            // not the horizon of a shorter strip one touch.
            let tau = self.expiry - tm;
            let rho_eff = match prev_rho_eff {
                Some(prev) if tau < tau_floor => prev,
                _ => {
                    let (r, clamped) = unwind_correlation(rho_cond, self.rho_bar(), hp.beta, self.marks.gamma, tau)?;
                    if clamped {
                        warnings.push(format!("effective correlation clamped at t={tm}"));
                    }
                    r
                }
            };
            prev_rho_eff = Some(rho_eff);

            let k_eval = match self.config.dupire_point {
                DupirePoint::Barrier => barrier,
                DupirePoint::Forward => self.market.forward(tm),
            };
            let lv = heston::dupire_local_variance(&hp, &self.market, tm, k_eval)?;
            if lv.clamped {
                warnings.push(format!("Dupire variance floored at t={tm}"));
            }
            let unwind_params = HestonParams {
                v0: lv.variance,
                rho: rho_eff,
                ..hp
            };
            let remaining = horizon - tm;
            let v_r = value_at_barrier(&unwind_params, &mkt_b, remaining)?;

            grid.t_start.push(ts);
            grid.t_mid.push(tm);
            grid.t_end.push(te);
            grid.touch_probability.push(running_p);
            grid.discount.push(self.market.discount(tm));
            grid.conditional_rho.push(rho_cond);
            grid.effective_rho.push(rho_eff);
            grid.variance.push(lv.variance);
            grid.replication_value.push(v_r);
        }
        Ok(grid)
    }

    /// Two-leg vanilla replication of an out-of-the-money knockout.
    pub fn barrier_replication(&self, opt: &BarrierOption<T>) -> Result<ReplicationPortfolio<T>> {
        let kp = reflected_strike(&self.bs_market(), opt)?;
        let k = opt.underlying.strike;
        let t = opt.underlying.expiry;
        Ok(ReplicationPortfolio {
            legs: vec![
                Leg {
                    instrument: Instrument::Vanilla(opt.underlying),
                    quantity: T::one(),
                },
                Leg {
                    instrument: Instrument::Vanilla(Vanilla::new(kp, t, opt.underlying.kind.opposite())?),
                    quantity: -(k / kp).sqrt(),
                },
            ],
            strike: k,
            reflected_strike: Some(kp),
            barrier: opt.barrier,
            expiry: t,
        })
    }

    /// Out-of-the-money knockout (down-and-out call with `B <= K` or
    /// up-and-out put with `B >= K`).
    ///
    /// `market_vanilla` is the market price of the underlying vanilla; the
    /// Heston price is used when absent.
    pub fn price_otm_barrier(&self, opt: &BarrierOption<T>, market_vanilla: Option<T>) -> Result<ApproxResult<T>> {
        opt.validate_against_spot(self.market.spot)?;
        self.check_expiry(opt.underlying.expiry)?;
        if opt.style != BarrierStyle::KnockOut || !opt.is_out_of_the_money_barrier() {
            return domain("price_otm_barrier needs an out-of-the-money knockout");
        }
        let hp = self.calibration.params;
        let t = self.expiry;
        let mut warnings = Vec::new();
        let replication = self.barrier_replication(opt)?;
        let v_r0 = replication.heston_value(&hp, &self.market, t)?;
        let grid = self.unwind_grid(opt.barrier, t, &mut warnings, |p, m, tau| {
            replication.heston_value(p, m, tau)
        })?;
        let mut v_u = T::zero();
        for i in 0..grid.t_mid.len() {
            v_u += grid.replication_value[i] * grid.discount[i] * grid.increment(i);
        }
        let mut v_b = v_r0 - v_u;
        if v_b < T::zero() {
            warnings.push(format!("negative Heston barrier value {v_b} floored at 0"));
            v_b = T::zero();
        }
        let heston_vanilla = heston::vanilla_price(&hp, &self.market, &opt.underlying)?;
        let mut no_touch = if heston_vanilla > T::zero() {
            v_b / heston_vanilla
        } else {
            T::zero()
        };
        if no_touch > T::one() {
            warnings.push(format!("no-touch probability {no_touch} capped at 1"));
            no_touch = T::one();
        }
        let vanilla = market_vanilla.unwrap_or(heston_vanilla);
        let price = vanilla * no_touch;
        Ok(ApproxResult {
            price,
            diagnostics: ApproxDiagnostics {
                replication,
                replication_value: v_r0,
                unwind_value: v_u,
                heston_value: v_b,
                heston_vanilla: Some(heston_vanilla),
                no_touch_probability: Some(no_touch),
                market_vanilla,
                market_digital: None,
                price,
                grid,
                calibration: self.calibration,
                warnings,
            },
        })
    }

    /// Digital replication of a one touch: twice the European digital struck
    /// at the barrier.
    pub fn one_touch_replication(&self, ot: &OneTouch<T>) -> Result<ReplicationPortfolio<T>> {
        Ok(ReplicationPortfolio {
            legs: vec![Leg {
                instrument: Instrument::Digital(EuropeanDigital::new(
                    ot.barrier,
                    ot.expiry,
                    ot.direction.digital_kind(),
                )?),
                quantity: T::two(),
            }],
            strike: ot.barrier,
            reflected_strike: None,
            barrier: ot.barrier,
            expiry: ot.expiry,
        })
    }

    /// One touch paying one unit at expiry. The expiry may be earlier than
    /// the calibrated one (strip one touches reuse the calibration).
    ///
    /// `market_digital` is the market price of the replicating digital; the
    /// Heston price is used when absent.
    pub fn price_one_touch(&self, ot: &OneTouch<T>, market_digital: Option<T>) -> Result<ApproxResult<T>> {
        let ot = OneTouch::new(ot.barrier, ot.expiry, ot.direction)?;
        if ot.direction != BarrierDirection::from_levels(self.market.spot, ot.barrier) {
            return domain("one-touch direction inconsistent with spot");
        }
        if ot.expiry > self.expiry * (T::one() + T::lit(1e-10)) {
            return domain("one-touch expiry beyond the calibrated expiry");
        }
        let hp = self.calibration.params;
        let t = ot.expiry;
        let df_t = self.market.discount(t);
        let mut warnings = Vec::new();
        let replication = self.one_touch_replication(&ot)?;
        if ot.direction.is_breached(self.market.spot, ot.barrier) {
            let grid = UnwindGrid {
                t_start: vec![],
                t_mid: vec![],
                t_end: vec![],
                touch_probability: vec![],
                discount: vec![],
                conditional_rho: vec![],
                effective_rho: vec![],
                variance: vec![],
                replication_value: vec![],
            };
            return Ok(ApproxResult {
                price: df_t,
                diagnostics: ApproxDiagnostics {
                    replication,
                    replication_value: df_t,
                    unwind_value: T::zero(),
                    heston_value: df_t,
                    heston_vanilla: None,
                    no_touch_probability: Some(T::zero()),
                    market_vanilla: None,
                    market_digital,
                    price: df_t,
                    grid,
                    calibration: self.calibration,
                    warnings,
                },
            });
        }
        let v_r0 = match market_digital {
            Some(d) => T::two() * d,
            None => replication.heston_value(&hp, &self.market, t)?,
        };
        let grid = self.unwind_grid(ot.barrier, t, &mut warnings, |p, m, tau| {
            replication.heston_value(p, m, tau)
        })?;
        // At the touch the digitals are sold and a bond paying one at expiry
        // is bought; the bucket cost is D(T) - D(t_m) <v_R>.
        let mut v_u = T::zero();
        for i in 0..grid.t_mid.len() {
            v_u += (grid.discount[i] * grid.replication_value[i] - df_t) * grid.increment(i);
        }
        let raw = v_r0 - v_u;
        let price = raw.max(T::zero()).min(df_t);
        if price != raw {
            warnings.push(format!("one-touch value {raw} clamped to [0, {df_t}]"));
        }
        Ok(ApproxResult {
            price,
            diagnostics: ApproxDiagnostics {
                replication,
                replication_value: v_r0,
                unwind_value: v_u,
                heston_value: raw,
                heston_vanilla: None,
                no_touch_probability: Some(T::one() - price / df_t),
                market_vanilla: None,
                market_digital,
                price,
                grid,
                calibration: self.calibration,
                warnings,
            },
        })
    }

    /// Barrier forward struck at `strike` that knocks out at `barrier`,
    /// replicated with one touches:
    /// `S e^{-qT} - K e^{-rT} - (B - K) v_ot(B, T) + B (q - r) ∫ e^{-q(T-t)} v_ot(B, t) dt`,
    /// the integral taken with the midpoint rule over the unwind buckets.
    ///
    /// `market_digital` is passed to the expiry-`T` one touch.
    pub fn price_barrier_forward(&self, strike: T, barrier: T, market_digital: Option<T>) -> Result<T> {
        if !(strike > T::zero()) || !(barrier > T::zero()) {
            return domain("strike and barrier must be positive");
        }
        let t = self.expiry;
        let m = &self.market;
        let direction = BarrierDirection::from_levels(m.spot, barrier);
        let ot_t = self
            .price_one_touch(&OneTouch::new(barrier, t, direction)?, market_digital)?
            .price;
        let q = m.rate_asset;
        let r = m.rate_dom;
        let mut v = m.spot * (-q * t).exp() - strike * m.discount(t) - (barrier - strike) * ot_t;
        if q != r {
            let n = self.config.n_buckets;
            let width = t / T::lit(n as f64);
            let mut strip = T::zero();
            for i in 0..n {
                let tm = width * (T::lit(i as f64) + T::half());
                let ot = self
                    .price_one_touch(&OneTouch::new(barrier, tm, direction)?, None)?
                    .price;
                strip += (-q * (t - tm)).exp() * ot * width;
            }
            v += barrier * (q - r) * strip;
        }
        Ok(v)
    }

    /// In-the-money knockout (up-and-out call with `B > K` or down-and-out
    /// put with `B < K`) via barrier put/call parity
    /// `v_call - v_put = v_forward` against the out-of-the-money knockout
    /// of the opposite kind.
    ///
    /// `counterpart_vanilla` is the market price of the opposite-kind
    /// vanilla at the same strike, which normalises the out-of-the-money
    /// leg.
    pub fn price_itm_barrier(
        &self,
        opt: &BarrierOption<T>,
        counterpart_vanilla: Option<T>,
        market_digital: Option<T>,
    ) -> Result<ApproxResult<T>> {
        opt.validate_against_spot(self.market.spot)?;
        self.check_expiry(opt.underlying.expiry)?;
        if opt.style != BarrierStyle::KnockOut || opt.is_out_of_the_money_barrier() {
            return domain("price_itm_barrier needs an in-the-money knockout");
        }
        let k = opt.underlying.strike;
        let t = self.expiry;
        let counterpart_kind = opt.underlying.kind.opposite();
        let counterpart = BarrierOption::knock_out(Vanilla::new(k, t, counterpart_kind)?, opt.barrier, opt.direction);
        let otm = self.price_otm_barrier(&counterpart, counterpart_vanilla)?;
        let fwd = self.price_barrier_forward(k, opt.barrier, market_digital)?;
        let price = match opt.underlying.kind {
            OptionKind::Call => otm.price + fwd,
            OptionKind::Put => otm.price - fwd,
        };
        let mut diagnostics = otm.diagnostics;
        if price < T::zero() {
            diagnostics
                .warnings
                .push(format!("negative in-the-money barrier value {price} floored at 0"));
        }
        let price = price.max(T::zero());
        diagnostics.price = price;
        Ok(ApproxResult { price, diagnostics })
    }

    /// Opposite-kind vanilla price implied by put/call parity.
    pub fn parity_counterpart(&self, price: T, strike: T, kind: OptionKind) -> T {
        let t = self.expiry;
        let fwd_value = self.market.spot * (-self.market.rate_asset * t).exp() - strike * self.market.discount(t);
        match kind {
            OptionKind::Call => price - fwd_value,
            OptionKind::Put => price + fwd_value,
        }
    }

    /// Any single-barrier option: out-of-the-money and in-the-money
    /// knockouts directly, knock-ins by in/out parity.
    pub fn price_barrier(
        &self,
        opt: &BarrierOption<T>,
        market_vanilla: Option<T>,
        market_digital: Option<T>,
    ) -> Result<ApproxResult<T>> {
        match opt.style {
            BarrierStyle::KnockOut if opt.is_out_of_the_money_barrier() => self.price_otm_barrier(opt, market_vanilla),
            BarrierStyle::KnockOut => {
                let counterpart =
                    market_vanilla.map(|v| self.parity_counterpart(v, opt.underlying.strike, opt.underlying.kind));
                self.price_itm_barrier(opt, counterpart, market_digital)
            }
            BarrierStyle::KnockIn => {
                let ko = BarrierOption {
                    style: BarrierStyle::KnockOut,
                    ..*opt
                };
                let mut res = self.price_barrier(&ko, market_vanilla, market_digital)?;
                let vanilla = match market_vanilla {
                    Some(v) => v,
                    None => heston::vanilla_price(self.heston(), &self.market, &opt.underlying)?,
                };
                res.price = vanilla - res.price;
                res.diagnostics.price = res.price;
                Ok(res)
            }
        }
    }

    /// Digital kind beyond a barrier, exposed for callers assembling market
    /// digital prices.
    pub fn replication_digital(&self, barrier: T) -> Result<EuropeanDigital<T>> {
        let kind: DigitalKind = BarrierDirection::from_levels(self.market.spot, barrier).digital_kind();
        EuropeanDigital::new(barrier, self.expiry, kind)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::integrate;

    fn fig1_engine(q: f64, xi: f64) -> ApproxEngine<f64> {
        let m = Market::new(1.0, 0.0, q).unwrap();
        let f = m.forward(0.5);
        let quotes = [
            VolQuote {
                strike: 0.9554 * f,
                vol: 0.101,
                expiry: 0.5,
            },
            VolQuote {
                strike: f,
                vol: 0.09,
                expiry: 0.5,
            },
            VolQuote {
                strike: 1.0438 * f,
                vol: 0.086,
                expiry: 0.5,
            },
        ];
        let marks = SvscMarks {
            beta: 2.0,
            gamma: 4.0,
            xi,
        };
        ApproxEngine::new(m, quotes, marks, ApproxConfig::default()).unwrap()
    }

    fn flat_engine(vol: f64) -> ApproxEngine<f64> {
        let m = Market::driftless(1.0);
        let quotes = [
            VolQuote {
                strike: 0.95,
                vol,
                expiry: 0.5,
            },
            VolQuote {
                strike: 1.0,
                vol,
                expiry: 0.5,
            },
            VolQuote {
                strike: 1.05,
                vol,
                expiry: 0.5,
            },
        ];
        let marks = SvscMarks {
            beta: 2.0,
            gamma: 4.0,
            xi: 0.0,
        };
        ApproxEngine::new(m, quotes, marks, ApproxConfig::default()).unwrap()
    }

    fn doc(k: f64, b: f64) -> BarrierOption<f64> {
        BarrierOption::knock_out(Vanilla::call(k, 0.5), b, BarrierDirection::Down)
    }

    fn uop(k: f64, b: f64) -> BarrierOption<f64> {
        BarrierOption::knock_out(Vanilla::put(k, 0.5), b, BarrierDirection::Up)
    }

    /// Quadrature of T^-1 ∫ e^{-g s} (1 - e^{-b (T - s)}) ds and its g = 0 case.
    fn d_factors_quadrature(beta: f64, gamma: f64, t: f64) -> (f64, f64) {
        let d1 = integrate(|s: f64| 1.0 - (-beta * (t - s)).exp(), 0.0, t, 1e-14, 30).0 / t;
        let d2 = integrate(
            |s: f64| (-gamma * s).exp() * (1.0 - (-beta * (t - s)).exp()),
            0.0,
            t,
            1e-14,
            30,
        )
        .0 / t;
        (d1, d2)
    }

    #[test]
    fn d_factors_worked_example() {
        let (d1, d2) = d_factors::<f64>(2.0, 4.0, 0.5).unwrap();
        assert!((d1 - 0.367_879).abs() < 1e-6);
        assert!((d2 - 0.199_788).abs() < 1e-6);
        let (q1, q2) = d_factors_quadrature(2.0, 4.0, 0.5);
        assert!((d1 - q1).abs() < 1e-12 && (d2 - q2).abs() < 1e-12);
    }

    #[test]
    fn d_factors_match_quadrature_on_grid() {
        for &beta in &[0.3, 1.0, 2.0, 5.0] {
            for &gamma in &[0.0, 0.5, 2.0, 4.0, 20.0] {
                for &t in &[1e-4, 0.01, 0.1, 0.5, 2.0] {
                    let (d1, d2) = d_factors::<f64>(beta, gamma, t).unwrap();
                    let (q1, q2) = d_factors_quadrature(beta, gamma, t);
                    let scale = q1.abs().max(1e-300);
                    assert!((d1 - q1).abs() < 1e-9 * scale.max(1e-6), "{beta} {gamma} {t}");
                    assert!((d2 - q2).abs() < 1e-9 * scale.max(1e-6), "{beta} {gamma} {t}");
                    assert!(d1 > 0.0 && d1 < 1.0 && d2 > 0.0 && d2 < 1.0);
                }
            }
        }
    }

    #[test]
    fn d2_continuous_at_equal_rates() {
        for &beta in &[0.5, 1.0, 2.0, 3.5, 5.0] {
            for &t in &[0.1, 0.5, 1.0, 2.0] {
                let (_, at) = d_factors::<f64>(beta, beta, t).unwrap();
                let closed = (1.0 - (-beta * t).exp()) / (beta * t) - (-beta * t).exp();
                assert!((at - closed).abs() < 1e-12);
                for &dg in &[1e-9, -1e-9] {
                    let (_, near) = d_factors::<f64>(beta, beta + dg, t).unwrap();
                    assert!((near - at).abs() < 1e-7);
                }
            }
        }
    }

    #[test]
    fn d_factors_small_tenor_limits() {
        let (d1, d2) = d_factors::<f64>(2.0, 4.0, 1e-7).unwrap();
        assert!(d1 < 1e-6 && d2 < 1e-6);
        assert!((d2 / d1 - 1.0).abs() < 1e-5);
        let (d1, d2) = d_factors::<f64>(2.0, 0.0, 0.3).unwrap();
        assert!((d1 - d2).abs() < 1e-15);
    }

    #[test]
    fn d_factors_reject_bad_inputs() {
        assert!(d_factors::<f64>(0.0, 1.0, 0.5).is_err());
        assert!(d_factors::<f64>(1.0, -1.0, 0.5).is_err());
        assert!(d_factors::<f64>(1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn effective_correlation_examples() {
        let (r, c) = effective_correlation::<f64>(-0.6, -0.25, 2.0, 4.0, 0.5).unwrap();
        assert!(!c);
        let expected = -0.6 + 0.35 * 0.199_788 / 0.367_879;
        assert!((r - expected).abs() < 1e-5);
        assert!((r + 0.4099).abs() < 1e-4);

        let (r, _) = effective_correlation::<f64>(-0.4, -0.4, 2.0, 4.0, 0.5).unwrap();
        assert!((r + 0.4).abs() < 1e-15);
        let (r, _) = effective_correlation::<f64>(-0.6, -0.25, 2.0, 1e4, 0.5).unwrap();
        assert!((r + 0.6).abs() < 1e-3);
        let (r, _) = effective_correlation::<f64>(-0.6, -0.25, 2.0, 0.0, 0.5).unwrap();
        assert!((r + 0.25).abs() < 1e-14);
    }

    #[test]
    fn effective_correlation_clamps() {
        let (r, c) = effective_correlation::<f64>(0.0, -0.98, 5.0, 0.0, 1e-3).unwrap();
        assert!(!c && (r + 0.98).abs() < 1e-12);
        let (r, c) = effective_correlation::<f64>(-0.9, 0.5, 0.5, 0.1, 0.1).unwrap();
        assert!(c || r.abs() <= EFFECTIVE_RHO_BOUND);
        let (r, c) = effective_correlation::<f64>(0.9, 3.0, 2.0, 0.0, 0.5).unwrap();
        assert!(c && r == EFFECTIVE_RHO_BOUND);
    }

    #[test]
    fn unwind_correlation_example() {
        let (d1, d2) = d_factors::<f64>(2.0, 4.0, 0.25).unwrap();
        let (r, _) = unwind_correlation::<f64>(-0.30, -0.3835, 2.0, 4.0, 0.25).unwrap();
        assert!((r - (-0.3835 + 0.0835 * d2 / d1)).abs() < 1e-14);
        let (r, _) = unwind_correlation::<f64>(-0.3835, -0.3835, 2.0, 4.0, 0.25).unwrap();
        assert!((r + 0.3835).abs() < 1e-15);
    }

    #[test]
    fn reflected_strike_zero_drift_is_image_strike() {
        let mkt = BsMarket::new(1.0, 0.0, 0.0, 0.09).unwrap();
        let kp = reflected_strike(&mkt, &doc(1.0, 0.95)).unwrap();
        assert!((kp - 0.9025).abs() < 1e-6);
        let kp = reflected_strike(&mkt, &doc(1.10, 0.95)).unwrap();
        assert!((kp - 0.95 * 0.95 / 1.10).abs() < 1e-6);
        let kp = reflected_strike(&mkt, &uop(0.97, 1.01)).unwrap();
        assert!((kp - 1.01 * 1.01 / 0.97).abs() < 1e-6);
    }

    #[test]
    fn reflected_strike_drift_residual() {
        let mkt = BsMarket::new(1.0, 0.0, 0.05, 0.09).unwrap();
        for opt in [doc(1.0, 0.95), doc(0.95, 0.9), uop(0.97, 1.01), uop(1.05, 1.1)] {
            let kp = reflected_strike(&mkt, &opt).unwrap();
            let k = opt.underlying.strike;
            let refl = Vanilla::new(kp, 0.5, opt.underlying.kind.opposite()).unwrap();
            let lhs = bs::vanilla_price(&mkt, &refl).unwrap() * (k / kp).sqrt();
            let rhs = bs::vanilla_price(&mkt, &opt.underlying).unwrap() - bs::barrier_price(&mkt, &opt).unwrap();
            assert!((lhs - rhs).abs() < 1e-10);
            assert!((kp - opt.barrier * opt.barrier / k).abs() > 1e-4);
        }
    }

    #[test]
    fn reflected_strike_rejects_itm_geometry() {
        let mkt = BsMarket::new(1.0, 0.0, 0.0, 0.09).unwrap();
        let itm = BarrierOption::knock_out(Vanilla::call(1.0, 0.5), 1.1, BarrierDirection::Up);
        assert!(matches!(reflected_strike(&mkt, &itm), Err(Error::Replication(_))));
    }

    #[test]
    fn conditional_correlation_trivial_cases() {
        let r = conditional_expected_correlation::<f64>(0.25, 0.95, 1.0, -0.3835, 4.0, 0.0, 0.009924).unwrap();
        assert_eq!(r, -0.3835);
        let s2 = 0.009924;
        let b = (-0.5 * s2 * 0.25_f64).exp();
        let r = conditional_expected_correlation::<f64>(0.25, b, 1.0, -0.3835, 4.0, 7.0, s2).unwrap();
        assert!((r + 0.3835).abs() < 1e-14);
        let down = conditional_expected_correlation::<f64>(0.25, 0.95, 1.0, -0.3835, 4.0, 7.0, s2).unwrap();
        let up = conditional_expected_correlation::<f64>(0.25, 1.05, 1.0, -0.3835, 4.0, 7.0, s2).unwrap();
        assert!(down < -0.3835 && up > -0.3835);
        let extreme = conditional_expected_correlation::<f64>(0.25, 0.5, 1.0, -0.3835, 4.0, 70.0, s2).unwrap();
        assert!(extreme >= -1.0);
    }

    #[test]
    fn conditional_correlation_two_pass_formula() {
        let (t, b, f, rh, g, xi, s2): (f64, f64, f64, f64, f64, f64, f64) =
            (0.25, 0.95, 1.0, -0.3835, 4.0, 7.0, 0.009924);
        let shift = (1.0 - (-g * t).exp()) / (g * t) * ((b / f).ln() + 0.5 * s2 * t);
        let r1 = rh + xi * (1.0 - rh * rh).sqrt() * shift;
        let rp = 0.5 * (rh + r1);
        let r2 = rh + xi * (1.0 - rp * rp).sqrt() * shift;
        let got = conditional_expected_correlation::<f64>(t, b, f, rh, g, xi, s2).unwrap();
        assert!((got - r2).abs() < 1e-14);
    }

    #[test]
    fn first_touch_probability_reduces_to_black_scholes() {
        let m = Market::<f64>::driftless(1.0);
        let hp = HestonParams::new(2.0, 0.0081, 0.0081, 1e-8, -0.5).unwrap();
        for &t in &[0.1, 0.25, 0.5] {
            let p = first_touch_probability(t, 0.95, &hp, &m, 0.09).unwrap();
            let pbs = bs::touch_probability(1.0, 0.95, 0.0, 0.09, t, BarrierDirection::Down);
            assert!((p - pbs).abs() < 1e-6);
        }
        assert_eq!(first_touch_probability(0.5, 1.0, &hp, &m, 0.09).unwrap(), 1.0);
    }

    #[test]
    fn first_touch_probability_bounded_and_increasing() {
        let e = fig1_engine(0.0, 7.0);
        for &b in &[0.9, 0.95, 0.99, 1.01, 1.05, 1.1] {
            let mut prev = 0.0;
            for i in 1..=20 {
                let t = 0.025 * i as f64;
                let p = first_touch_probability(t, b, e.heston(), e.market(), e.atm_vol()).unwrap();
                assert!((0.0..=1.0).contains(&p));
                assert!(p >= prev - 1e-9, "b={b} t={t}");
                prev = p;
            }
        }
    }

    #[test]
    fn table_one_worked_examples() {
        let e = fig1_engine(0.0, 7.0);
        let p = e.price_otm_barrier(&doc(1.0, 0.95), None).unwrap().price * 1e4;
        assert!((p - 226.0).abs() < 1.0, "{p}");
        let p = e.price_otm_barrier(&doc(0.95, 0.90), None).unwrap().price * 1e4;
        assert!((p - 589.5).abs() < 1.0, "{p}");
        let e = fig1_engine(0.05, 7.0);
        let p = e.price_otm_barrier(&uop(0.97, 1.01), None).unwrap().price * 1e4;
        assert!((p - 95.1).abs() < 1.0, "{p}");
    }

    #[test]
    fn replication_portfolio_shape() {
        let e = fig1_engine(0.0, 7.0);
        let r = e.barrier_replication(&doc(1.0, 0.95)).unwrap();
        assert_eq!(r.legs.len(), 2);
        assert_eq!(r.legs[0].quantity, 1.0);
        let kp = r.reflected_strike.unwrap();
        assert!((r.legs[1].quantity + (1.0 / kp).sqrt()).abs() < 1e-15);
        match r.legs[1].instrument {
            Instrument::Vanilla(v) => assert_eq!(v.kind, OptionKind::Put),
            _ => panic!("expected a vanilla leg"),
        }
        let ot = e
            .one_touch_replication(&OneTouch::new(0.95, 0.5, BarrierDirection::Down).unwrap())
            .unwrap();
        assert_eq!(ot.legs.len(), 1);
        assert_eq!(ot.legs[0].quantity, 2.0);
        assert!(
            matches!(ot.legs[0].instrument, Instrument::Digital(d) if d.kind == DigitalKind::Below && d.strike == 0.95)
        );
    }

    #[test]
    fn unwind_grid_invariants() {
        let e = fig1_engine(0.0, 7.0);
        for opt in [doc(1.0, 0.95), uop(0.97, 1.01)] {
            let g = e.price_otm_barrier(&opt, None).unwrap().diagnostics.grid;
            assert_eq!(g.t_start.len(), 10);
            assert_eq!(g.t_start[0], 0.0);
            assert_eq!(*g.t_end.last().unwrap(), 0.5);
            let mut total = 0.0;
            for i in 0..10 {
                if i > 0 {
                    assert_eq!(g.t_start[i], g.t_end[i - 1]);
                }
                assert!((g.t_mid[i] - 0.5 * (g.t_start[i] + g.t_end[i])).abs() < 1e-15);
                assert!(g.increment(i) >= -1e-12);
                assert!(g.effective_rho[i].abs() <= EFFECTIVE_RHO_BOUND);
                total += g.increment(i);
            }
            assert!((total - g.total_probability()).abs() < 1e-15);
        }
    }

    #[test]
    fn degenerate_collapse_is_pure_heston() {
        let e = fig1_engine(0.0, 0.0);
        let opt = doc(1.0, 0.95);
        let res = e.price_otm_barrier(&opt, None).unwrap();
        let d = &res.diagnostics;
        let hp = *e.heston();
        let rep = &d.replication;
        let mut unwind = 0.0;
        for i in 0..10 {
            assert!((d.grid.effective_rho[i] - hp.rho).abs() < 1e-14);
            let tm = d.grid.t_mid[i];
            let lv = heston::dupire_local_variance(&hp, e.market(), tm, 0.95).unwrap();
            let p = HestonParams { v0: lv.variance, ..hp };
            let v = rep.heston_value(&p, &e.market().with_spot(0.95), 0.5 - tm).unwrap();
            unwind += v * d.grid.increment(i);
        }
        let v0 = rep.heston_value(&hp, e.market(), 0.5).unwrap();
        assert!((d.heston_value - (v0 - unwind)).abs() < 1e-14);
    }

    #[test]
    fn flat_smile_recovers_black_scholes_barrier() {
        let e = flat_engine(0.09);
        assert!(e.heston().alpha < 1e-3);
        let mkt = BsMarket::new(1.0, 0.0, 0.0, 0.09).unwrap();
        for opt in [doc(1.0, 0.95), doc(1.03, 0.99), uop(0.97, 1.01), uop(1.0, 1.05)] {
            let p = e.price_otm_barrier(&opt, None).unwrap().price;
            let b = bs::barrier_price(&mkt, &opt).unwrap();
            assert!((p - b).abs() < 2e-6, "{p} {b}");
        }
        let ot = OneTouch::new(0.9569, 0.5, BarrierDirection::Down).unwrap();
        let p = e.price_one_touch(&ot, None).unwrap().price;
        let b = bs::one_touch_price(&mkt, &ot).unwrap();
        assert!((p - b).abs() < 2e-3, "{p} {b}");
    }

    #[test]
    fn knockout_monotone_as_barrier_approaches_spot() {
        let e = fig1_engine(0.0, 7.0);
        let mut prev = f64::INFINITY;
        for i in 0..12 {
            let b = 0.88 + 0.01 * i as f64;
            let p = e.price_otm_barrier(&doc(1.0, b), None).unwrap().price;
            assert!(p <= prev + 1e-12, "b={b}");
            prev = p;
        }
        let mut prev = f64::INFINITY;
        for i in 0..12 {
            let b = 1.12 - 0.01 * i as f64;
            let p = e.price_otm_barrier(&uop(1.0, b), None).unwrap().price;
            assert!(p <= prev + 1e-12, "b={b}");
            prev = p;
        }
    }

    #[test]
    fn itm_parity_by_construction() {
        for q in [0.0, 0.05] {
            let e = fig1_engine(q, 7.0);
            let uoc = BarrierOption::knock_out(Vanilla::call(1.0, 0.5), 1.1, BarrierDirection::Up);
            let itm = e.price_itm_barrier(&uoc, None, None).unwrap().price;
            let otm = e.price_otm_barrier(&uop(1.0, 1.1), None).unwrap().price;
            let fwd = e.price_barrier_forward(1.0, 1.1, None).unwrap();
            assert!((itm - otm - fwd).abs() < 1e-15);

            let dop = BarrierOption::knock_out(Vanilla::put(1.0, 0.5), 0.9, BarrierDirection::Down);
            let itm = e.price_itm_barrier(&dop, None, None).unwrap().price;
            let otm = e.price_otm_barrier(&doc(1.0, 0.9), None).unwrap().price;
            let fwd = e.price_barrier_forward(1.0, 0.9, None).unwrap();
            assert!((otm - itm - fwd).abs() < 1e-15);
        }
    }

    #[test]
    fn barrier_forward_zero_drift_uses_single_one_touch() {
        let e = fig1_engine(0.0, 7.0);
        let ot = e
            .price_one_touch(&OneTouch::new(0.9, 0.5, BarrierDirection::Down).unwrap(), None)
            .unwrap()
            .price;
        let fwd = e.price_barrier_forward(1.0, 0.9, None).unwrap();
        assert!((fwd - (1.0 - 1.0 - (0.9 - 1.0) * ot)).abs() < 1e-15);
        let at_strike = e.price_barrier_forward(0.9, 0.9, None).unwrap();
        assert!((at_strike - 0.1).abs() < 1e-15);
    }

    #[test]
    fn worked_itm_examples() {
        let e = fig1_engine(0.0, 7.0);
        let dop = BarrierOption::knock_out(Vanilla::put(1.0, 0.5), 0.9, BarrierDirection::Down);
        let p = e.price_itm_barrier(&dop, None, None).unwrap().price * 1e4;
        assert!((p - 89.5).abs() < 3.0, "{p}");
        let uoc = BarrierOption::knock_out(Vanilla::call(1.0, 0.5), 1.1, BarrierDirection::Up);
        let p = e.price_itm_barrier(&uoc, None, None).unwrap().price * 1e4;
        assert!((p - 147.6).abs() < 3.0, "{p}");
        let e = fig1_engine(0.05, 7.0);
        let p = e.price_itm_barrier(&dop, None, None).unwrap().price * 1e4;
        assert!((p - 142.7).abs() < 3.0, "{p}");
    }

    #[test]
    fn knock_in_is_vanilla_minus_knockout() {
        let e = fig1_engine(0.0, 7.0);
        let ko = doc(1.0, 0.95);
        let ki = BarrierOption::knock_in(ko.underlying, 0.95, BarrierDirection::Down);
        let v = heston::vanilla_price(e.heston(), e.market(), &ko.underlying).unwrap();
        let pko = e.price_barrier(&ko, None, None).unwrap().price;
        let pki = e.price_barrier(&ki, None, None).unwrap().price;
        assert!((pko + pki - v).abs() < 1e-15);
    }

    #[test]
    fn one_touch_bounds_and_breached_barrier() {
        let e = fig1_engine(0.0, 7.0);
        for &b in &[0.9, 0.95, 0.99, 1.01, 1.05, 1.1] {
            let ot = OneTouch::new(b, 0.5, BarrierDirection::from_levels(1.0, b)).unwrap();
            let p = e.price_one_touch(&ot, None).unwrap().price;
            assert!((0.0..=1.0).contains(&p));
        }
        let at = OneTouch::new(1.0, 0.5, BarrierDirection::Up).unwrap();
        assert_eq!(e.price_one_touch(&at, None).unwrap().price, 1.0);
    }

    #[test]
    fn rejects_mismatched_inputs() {
        let e = fig1_engine(0.0, 7.0);
        let wrong_t = BarrierOption::knock_out(Vanilla::call(1.0, 1.0), 0.95, BarrierDirection::Down);
        assert!(e.price_otm_barrier(&wrong_t, None).is_err());
        let itm = BarrierOption::knock_out(Vanilla::call(1.0, 0.5), 1.1, BarrierDirection::Up);
        assert!(e.price_otm_barrier(&itm, None).is_err());
        assert!(e.price_itm_barrier(&doc(1.0, 0.95), None, None).is_err());
        let late = OneTouch::new(0.95, 1.0, BarrierDirection::Down).unwrap();
        assert!(e.price_one_touch(&late, None).is_err());
        let bad = ApproxConfig {
            n_buckets: 0,
            ..Default::default()
        };
        assert!(ApproxEngine::new(
            *e.market(),
            *e.quotes(),
            SvscMarks {
                beta: 2.0,
                gamma: 4.0,
                xi: 7.0
            },
            bad
        )
        .is_err());
    }

    #[test]
    fn single_precision_pipeline() {
        let m = Market::<f32>::driftless(1.0);
        let quotes = [
            VolQuote {
                strike: 0.9554_f32,
                vol: 0.101,
                expiry: 0.5,
            },
            VolQuote {
                strike: 1.0,
                vol: 0.09,
                expiry: 0.5,
            },
            VolQuote {
                strike: 1.0438,
                vol: 0.086,
                expiry: 0.5,
            },
        ];
        let cal = heston::calibrate(
            &[
                VolQuote {
                    strike: 0.9554,
                    vol: 0.101,
                    expiry: 0.5,
                },
                VolQuote {
                    strike: 1.0,
                    vol: 0.09,
                    expiry: 0.5,
                },
                VolQuote {
                    strike: 1.0438,
                    vol: 0.086,
                    expiry: 0.5,
                },
            ],
            2.0_f64,
            &Market::driftless(1.0),
        )
        .unwrap();
        let p = &cal.params;
        let cal32 = Calibration {
            params: HestonParams::new(p.beta as f32, p.v_bar as f32, p.v0 as f32, p.alpha as f32, p.rho as f32)
                .unwrap(),
            residuals: [0.0; 3],
            iterations: cal.iterations,
        };
        let marks = SvscMarks {
            beta: 2.0_f32,
            gamma: 4.0,
            xi: 7.0,
        };
        let e = ApproxEngine::with_calibration(m, quotes, marks, ApproxConfig::default(), cal32).unwrap();
        let opt = BarrierOption::knock_out(Vanilla::call(1.0_f32, 0.5), 0.95, BarrierDirection::Down);
        let p32 = e.price_otm_barrier(&opt, None).unwrap().price as f64;
        let p64 = fig1_engine(0.0, 7.0)
            .price_otm_barrier(&doc(1.0, 0.95), None)
            .unwrap()
            .price;
        assert!((p32 - p64).abs() < 5e-5, "{p32} {p64}");
    }
}
