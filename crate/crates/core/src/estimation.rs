//! Historical estimation of the marked parameters `beta`, `gamma` and `xi`.
//!
//! * `beta` from the regression of daily moves in squared ATM implied
//!   volatility at two tenors.
//! * `gamma` from the regression of daily moves in 25-delta risk reversals
//!   at two tenors, given `beta`.
//! * `xi` from the rolling risk-reversal beta (risk-reversal move per unit
//!   log spot return) and the risk-reversal level.
//!
//! Market data is read from CSV with header
//! `date,spot,atm_3m,atm_1y,rr25_3m,rr25_1y` (ISO dates, decimal vols).

use std::io::{Read, Write};

use chrono::{Datelike, Days, NaiveDate, Weekday};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::approx::d_factors;
use crate::bs::smile_strike_for_delta;
use crate::error::{domain, Error, Result};
use crate::heston::{self, HestonParams};
use crate::market::Market;
use crate::mc::{simulate_step, PathState, SvscParams};
use crate::numerics::{brent, decay_average};
use crate::scalar::Scalar;

/// Expected CSV header.
pub const CSV_HEADER: [&str; 6] = ["date", "spot", "atm_3m", "atm_1y", "rr25_3m", "rr25_1y"];

/// Smallest rolling window accepted by [`rr_beta`].
pub const MIN_WINDOW: usize = 60;

/// Default rolling window: one year of business days.
pub const DEFAULT_WINDOW: usize = 252;

/// Upper end of the search range for `beta` and `gamma`.
pub const MAX_RATE: f64 = 50.0;

const MIN_RATE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionResult<T> {
    pub slope: T,
    pub intercept: T,
    pub r_squared: T,
    pub slope_stderr: T,
    pub n_obs: usize,
}

/// Ordinary least squares of `y` on `x` with intercept.
pub fn ols<T: Scalar>(x: &[T], y: &[T]) -> Result<RegressionResult<T>> {
    if x.len() != y.len() {
        return domain(format!(
            "regression inputs differ in length ({} vs {})",
            x.len(),
            y.len()
        ));
    }
    let n = x.len();
    if n < 3 {
        return domain(format!("regression needs at least 3 observations, got {n}"));
    }
    let nf = T::lit(n as f64);
    let mx = x.iter().fold(T::zero(), |a, &v| a + v) / nf;
    let my = y.iter().fold(T::zero(), |a, &v| a + v) / nf;
    let (mut sxx, mut sxy, mut syy) = (T::zero(), T::zero(), T::zero());
    for (&xi, &yi) in x.iter().zip(y) {
        let dx = xi - mx;
        let dy = yi - my;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if !(sxx > T::zero()) {
        return Err(Error::DegenerateRegressor("regressor has zero variance".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse = (syy - slope * sxy).max(T::zero());
    let r_squared = if syy > T::zero() {
        (T::one() - sse / syy).max(T::zero()).min(T::one())
    } else {
        T::one()
    };
    let slope_stderr = if n > 2 {
        (sse / T::lit((n - 2) as f64) / sxx).sqrt()
    } else {
        T::zero()
    };
    Ok(RegressionResult {
        slope,
        intercept,
        r_squared,
        slope_stderr,
        n_obs: n,
    })
}

fn check_tenors<T: Scalar>(t1: T, t2: T) -> Result<()> {
    if !(t1 > T::zero()) || !(t2 > t1) {
        return domain(format!("tenors must satisfy 0 < T1 < T2 (got {t1}, {t2})"));
    }
    Ok(())
}

/// Regression slope of `d sigma_I^2(T2)` on `d sigma_I^2(T1)` implied by
/// variance mean reversion `beta`.
pub fn beta_slope<T: Scalar>(beta: T, t1: T, t2: T) -> T {
    decay_average(beta * t2) / decay_average(beta * t1)
}

/// Inverts [`beta_slope`] for `beta` in `(0, 50]`.
pub fn estimate_beta<T: Scalar>(slope: T, t1: T, t2: T) -> Result<T> {
    check_tenors(t1, t2)?;
    let lo = T::lit(MIN_RATE);
    let hi = T::lit(MAX_RATE);
    let (s_hi, s_lo) = (beta_slope(lo, t1, t2), beta_slope(hi, t1, t2));
    if !(slope < s_hi && slope > s_lo) {
        return Err(Error::Estimation(format!(
            "ATM variance slope {slope} outside the attainable range ({s_lo}, {s_hi})"
        )));
    }
    brent(|b| beta_slope(b, t1, t2) - slope, lo, hi, T::lit(1e-13), 200)
}

/// Regression slope of `d RR(T2)` on `d RR(T1)` implied by `beta` and
/// correlation mean reversion `gamma`.
pub fn gamma_slope<T: Scalar>(beta: T, gamma: T, t1: T, t2: T) -> Result<T> {
    let (_, d2_1) = d_factors(beta, gamma, t1)?;
    let (_, d2_2) = d_factors(beta, gamma, t2)?;
    Ok(d2_2 / d2_1 * (t1 / t2).sqrt())
}

/// Inverts [`gamma_slope`] for `gamma` in `(0, 50]` given `beta`.
pub fn estimate_gamma<T: Scalar>(slope: T, t1: T, t2: T, beta: T) -> Result<T> {
    check_tenors(t1, t2)?;
    if !(beta > T::zero()) {
        return domain("beta must be positive");
    }
    let lo = T::lit(MIN_RATE);
    let hi = T::lit(MAX_RATE);
    let f = |g: T| gamma_slope(beta, g, t1, t2).map(|s| s - slope).unwrap_or(T::nan());
    let (f_lo, f_hi) = (f(lo), f(hi));
    if !((f_lo > T::zero()) != (f_hi > T::zero())) {
        return Err(Error::Estimation(format!(
            "risk-reversal slope {slope} outside the attainable range ({}, {}) for beta={beta}",
            f_hi + slope,
            f_lo + slope
        )));
    }
    brent(f, lo, hi, T::lit(1e-13), 200)
}

/// `beta` from paired daily moves of squared ATM vol at `t1` and `t2`.
pub fn estimate_beta_from_moves<T: Scalar>(dv1: &[T], dv2: &[T], t1: T, t2: T) -> Result<(T, RegressionResult<T>)> {
    let reg = ols(dv1, dv2)?;
    Ok((estimate_beta(reg.slope, t1, t2)?, reg))
}

/// `gamma` from paired daily moves of risk reversals at `t1` and `t2`.
pub fn estimate_gamma_from_moves<T: Scalar>(
    drr1: &[T],
    drr2: &[T],
    t1: T,
    t2: T,
    beta: T,
) -> Result<(T, RegressionResult<T>)> {
    let reg = ols(drr1, drr2)?;
    Ok((estimate_gamma(reg.slope, t1, t2, beta)?, reg))
}

/// Closed-form risk-reversal term structure
/// `RR(T) = scale / sqrt(T) * (rho_bar D1(T) + (rho0 - rho_bar) D2(T))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RrApproxParams<T> {
    /// Proportionality constant `B alpha / beta`.
    pub scale: T,
    pub beta: T,
    pub gamma: T,
    pub rho_bar: T,
    pub rho0: T,
}

fn rr_shape<T: Scalar>(p: &RrApproxParams<T>, t: T) -> Result<T> {
    let (d1, d2) = d_factors(p.beta, p.gamma, t)?;
    Ok((p.rho_bar * d1 + (p.rho0 - p.rho_bar) * d2) / t.sqrt())
}

pub fn rr_approx<T: Scalar>(p: &RrApproxParams<T>, t: T) -> Result<T> {
    if !p.scale.is_finite() {
        return domain("risk-reversal scale must be finite");
    }
    Ok(p.scale * rr_shape(p, t)?)
}

/// Returns `p` with `scale` set so that `rr_approx(p, t) = rr`.
pub fn fit_rr_scale<T: Scalar>(p: RrApproxParams<T>, t: T, rr: T) -> Result<RrApproxParams<T>> {
    let shape = rr_shape(&p, t)?;
    if shape == T::zero() {
        return Err(Error::Estimation(
            "risk-reversal shape vanishes; scale undetermined".into(),
        ));
    }
    Ok(RrApproxParams { scale: rr / shape, ..p })
}

/// `xi = (RR_beta / RR) (D1 / D2) rho_bar / sqrt(1 - rho_bar^2)`.
pub fn estimate_xi<T: Scalar>(rr_beta: T, rr: T, t: T, beta: T, gamma: T, rho_bar: T) -> Result<T> {
    if rr == T::zero() || !rr.is_finite() {
        return Err(Error::Estimation(
            "risk reversal is zero; xi needs a non-zero skew level (choose another tenor or date)".into(),
        ));
    }
    if !(rho_bar.abs() < T::one()) {
        return domain(format!("rho_bar must lie in (-1, 1), got {rho_bar}"));
    }
    let (d1, d2) = d_factors(beta, gamma, t)?;
    Ok(rr_beta / rr * d1 / d2 * rho_bar / (T::one() - rho_bar * rho_bar).sqrt())
}

/// Quoted tenors in the market series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tenor {
    #[serde(rename = "3m")]
    ThreeMonth,
    #[serde(rename = "1y")]
    OneYear,
}

impl Tenor {
    pub fn years<T: Scalar>(self) -> T {
        match self {
            Tenor::ThreeMonth => T::lit(0.25),
            Tenor::OneYear => T::one(),
        }
    }
}

/// One day of market data. Missing quotes are `None`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarketSeriesRow<T> {
    pub date: NaiveDate,
    pub spot: T,
    pub atm_3m: Option<T>,
    pub atm_1y: Option<T>,
    pub rr25_3m: Option<T>,
    pub rr25_1y: Option<T>,
}

impl<T: Scalar> MarketSeriesRow<T> {
    pub fn atm(&self, tenor: Tenor) -> Option<T> {
        match tenor {
            Tenor::ThreeMonth => self.atm_3m,
            Tenor::OneYear => self.atm_1y,
        }
    }

    pub fn rr(&self, tenor: Tenor) -> Option<T> {
        match tenor {
            Tenor::ThreeMonth => self.rr25_3m,
            Tenor::OneYear => self.rr25_1y,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketSeries<T> {
    pub rows: Vec<MarketSeriesRow<T>>,
}

#[derive(Debug, Deserialize)]
struct RawRow {
    date: String,
    spot: f64,
    atm_3m: Option<f64>,
    atm_1y: Option<f64>,
    rr25_3m: Option<f64>,
    rr25_1y: Option<f64>,
}

impl<T: Scalar> MarketSeries<T> {
    pub fn new(rows: Vec<MarketSeriesRow<T>>) -> Result<Self> {
        let s = Self { rows };
        s.validate()?;
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Spot and vols positive, dates strictly increasing.
    pub fn validate(&self) -> Result<()> {
        for (i, r) in self.rows.iter().enumerate() {
            let line = i + 2;
            if !(r.spot > T::zero()) {
                return Err(Error::Parse {
                    line,
                    message: format!("spot must be positive, got {}", r.spot),
                });
            }
            for v in [r.atm_3m, r.atm_1y].into_iter().flatten() {
                if !(v > T::zero()) {
                    return Err(Error::Parse {
                        line,
                        message: format!("ATM vol must be positive, got {v}"),
                    });
                }
            }
            for v in [r.rr25_3m, r.rr25_1y].into_iter().flatten() {
                if !v.is_finite() {
                    return Err(Error::Parse {
                        line,
                        message: "risk reversal must be finite".into(),
                    });
                }
            }
            if i > 0 && r.date <= self.rows[i - 1].date {
                return Err(Error::Parse {
                    line,
                    message: format!("date {} not after {}", r.date, self.rows[i - 1].date),
                });
            }
        }
        Ok(())
    }

    /// Parses CSV with the exact header [`CSV_HEADER`]. Empty fields are
    /// missing quotes.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let header = rdr
            .headers()
            .map_err(|e| Error::Parse {
                line: 1,
                message: e.to_string(),
            })?
            .clone();
        let got: Vec<&str> = header.iter().collect();
        if got != CSV_HEADER {
            return Err(Error::Parse {
                line: 1,
                message: format!("expected header {}, got {}", CSV_HEADER.join(","), got.join(",")),
            });
        }
        let mut rows = Vec::new();
        for (i, rec) in rdr.deserialize::<RawRow>().enumerate() {
            let line = i + 2;
            let raw = rec.map_err(|e| Error::Parse {
                line,
                message: e.to_string(),
            })?;
            let date = NaiveDate::parse_from_str(&raw.date, "%Y-%m-%d").map_err(|e| Error::Parse {
                line,
                message: format!("bad date {:?}: {e}", raw.date),
            })?;
            rows.push(MarketSeriesRow {
                date,
                spot: T::lit(raw.spot),
                atm_3m: raw.atm_3m.map(T::lit),
                atm_1y: raw.atm_1y.map(T::lit),
                rr25_3m: raw.rr25_3m.map(T::lit),
                rr25_1y: raw.rr25_1y.map(T::lit),
            });
        }
        Self::new(rows)
    }

    pub fn to_csv<W: Write>(&self, writer: W) -> Result<()> {
        let io = |e: csv::Error| Error::Parse {
            line: 0,
            message: e.to_string(),
        };
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(CSV_HEADER).map_err(io)?;
        let fmt = |v: Option<T>| v.map(|x| format!("{:.10}", x.as_f64())).unwrap_or_default();
        for r in &self.rows {
            w.write_record([
                r.date.format("%Y-%m-%d").to_string(),
                format!("{:.10}", r.spot.as_f64()),
                fmt(r.atm_3m),
                fmt(r.atm_1y),
                fmt(r.rr25_3m),
                fmt(r.rr25_1y),
            ])
            .map_err(io)?;
        }
        w.flush().map_err(|e| Error::Parse {
            line: 0,
            message: e.to_string(),
        })?;
        Ok(())
    }

    /// Daily changes of `f` at both tenors, dropping days where either
    /// tenor is missing on either side of the change.
    fn paired_moves<F: Fn(&MarketSeriesRow<T>, Tenor) -> Option<T>>(&self, f: F) -> (Vec<T>, Vec<T>) {
        let mut a = Vec::new();
        let mut b = Vec::new();
        for w in self.rows.windows(2) {
            let vals = (
                f(&w[0], Tenor::ThreeMonth),
                f(&w[1], Tenor::ThreeMonth),
                f(&w[0], Tenor::OneYear),
                f(&w[1], Tenor::OneYear),
            );
            if let (Some(s0), Some(s1), Some(l0), Some(l1)) = vals {
                a.push(s1 - s0);
                b.push(l1 - l0);
            }
        }
        (a, b)
    }

    /// Paired daily moves of squared ATM vol (3m, 1y).
    pub fn atm_variance_moves(&self) -> (Vec<T>, Vec<T>) {
        self.paired_moves(|r, t| r.atm(t).map(|v| v * v))
    }

    /// Paired daily moves of the 25-delta risk reversal (3m, 1y).
    pub fn risk_reversal_moves(&self) -> (Vec<T>, Vec<T>) {
        self.paired_moves(|r, t| r.rr(t))
    }
}

/// Rolling risk-reversal beta on the date closing each window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RollingBeta<T> {
    pub date: NaiveDate,
    pub row: usize,
    pub regression: RegressionResult<T>,
}

/// Rolling OLS of daily risk-reversal changes on daily log spot returns,
/// `window` observations per regression.
pub fn rr_beta<T: Scalar>(series: &MarketSeries<T>, tenor: Tenor, window: usize) -> Result<Vec<RollingBeta<T>>> {
    if window < MIN_WINDOW {
        return domain(format!("rolling window must be at least {MIN_WINDOW}, got {window}"));
    }
    let mut obs: Vec<(usize, T, T)> = Vec::new();
    for (i, w) in series.rows.windows(2).enumerate() {
        if let (Some(a), Some(b)) = (w[0].rr(tenor), w[1].rr(tenor)) {
            obs.push((i + 1, (w[1].spot / w[0].spot).ln(), b - a));
        }
    }
    if obs.len() < window {
        return Err(Error::Estimation(format!(
            "{} usable observations for a window of {window}",
            obs.len()
        )));
    }
    let mut out = Vec::with_capacity(obs.len() + 1 - window);
    let mut x = Vec::with_capacity(window);
    let mut y = Vec::with_capacity(window);
    for end in window..=obs.len() {
        x.clear();
        y.clear();
        for &(_, r, d) in &obs[end - window..end] {
            x.push(r);
            y.push(d);
        }
        let row = obs[end - 1].0;
        out.push(RollingBeta {
            date: series.rows[row].date,
            row,
            regression: ols(&x, &y)?,
        });
    }
    Ok(out)
}

/// Where the long-run correlation in the `xi` formula comes from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "source")]
pub enum RhoBarSource<T> {
    Fixed {
        rho_bar: T,
    },
    /// Daily Heston fit of `(v, rho)` to the ATM vol and risk reversal of
    /// the tenor, with `alpha` held fixed and `beta` from the estimate.
    Heston {
        alpha: T,
    },
}

/// Heston fit of `v = v0 = v_bar` and `rho` to an ATM vol and a 25-delta
/// risk reversal (zero butterfly), with `alpha` and `beta` fixed.
///
/// `guess` seeds the Newton iteration; the previous day's fit is the usual
/// choice.
pub fn heston_rho_fit<T: Scalar>(
    atm: T,
    rr: T,
    t: T,
    alpha: T,
    beta: T,
    guess: Option<(T, T)>,
) -> Result<HestonParams<T>> {
    if !(atm > T::zero()) || !(t > T::zero()) {
        return domain("ATM vol and tenor must be positive");
    }
    let mkt = Market::driftless(T::one());
    let half = T::half() * rr;
    let (kc, _) = smile_strike_for_delta(&mkt, T::lit(0.25), t, |_| Ok(atm + half))?;
    let (kp, _) = smile_strike_for_delta(&mkt, T::lit(-0.25), t, |_| Ok(atm - half))?;
    let fwd = mkt.forward(t);
    let bound = T::lit(0.99);
    let residuals = |v: T, rho: T| -> Result<[T; 2]> {
        let p = HestonParams::new(beta, v, v, alpha, rho)?;
        let a = heston::implied_vol(&p, &mkt, fwd, t)?;
        let c = heston::implied_vol(&p, &mkt, kc, t)?;
        let q = heston::implied_vol(&p, &mkt, kp, t)?;
        Ok([a - atm, (c - q) - rr])
    };
    let (mut v, mut rho) = guess.unwrap_or((atm * atm, T::zero()));
    for _ in 0..50 {
        let r = residuals(v, rho)?;
        if r[0].abs() < T::lit(1e-9) && r[1].abs() < T::lit(1e-9) {
            return HestonParams::new(beta, v, v, alpha, rho);
        }
        let hv = v * T::lit(1e-4);
        let hr = T::lit(1e-4);
        let rv = residuals(v + hv, rho)?;
        let rr_ = residuals(v, (rho + hr).min(bound))?;
        let j = [
            [(rv[0] - r[0]) / hv, (rr_[0] - r[0]) / hr],
            [(rv[1] - r[1]) / hv, (rr_[1] - r[1]) / hr],
        ];
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        if det == T::zero() || !det.is_finite() {
            break;
        }
        let dv = (j[1][1] * r[0] - j[0][1] * r[1]) / det;
        let dr = (j[0][0] * r[1] - j[1][0] * r[0]) / det;
        v = (v - dv).max(v * T::lit(0.1)).min(v * T::lit(10.0));
        rho = (rho - dr).max(-bound).min(bound);
    }
    let r = residuals(v, rho)?;
    if r[0].abs() < T::lit(1e-6) && r[1].abs() < T::lit(1e-6) {
        return HestonParams::new(beta, v, v, alpha, rho);
    }
    Err(Error::Calibration {
        iterations: 50,
        residual: r[0].abs().max(r[1].abs()).as_f64(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimationConfig<T> {
    pub window: usize,
    pub xi_tenor: Tenor,
    pub rho_bar: RhoBarSource<T>,
    /// Evaluate `xi` on every `xi_stride`-th window end.
    pub xi_stride: usize,
}

impl<T: Scalar> Default for EstimationConfig<T> {
    fn default() -> Self {
        Self {
            window: DEFAULT_WINDOW,
            xi_tenor: Tenor::ThreeMonth,
            rho_bar: RhoBarSource::Heston { alpha: T::lit(0.25) },
            xi_stride: 1,
        }
    }
}

/// Daily `xi` estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct XiPoint<T> {
    pub date: NaiveDate,
    pub rr_beta: T,
    pub rr_beta_stderr: T,
    pub rr: T,
    pub rho_bar: T,
    pub xi: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationReport<T> {
    pub beta: T,
    pub beta_regression: RegressionResult<T>,
    pub gamma: T,
    pub gamma_regression: RegressionResult<T>,
    /// Median of the daily estimates.
    pub xi: T,
    pub xi_series: Vec<XiPoint<T>>,
    /// Days where the `xi` formula or the correlation fit failed.
    pub skipped_days: usize,
}

fn median<T: Scalar>(mut v: Vec<T>) -> T {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        T::half() * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Full pipeline: `beta`, then `gamma` given `beta`, then daily `xi`.
pub fn estimate_all<T: Scalar>(series: &MarketSeries<T>, cfg: &EstimationConfig<T>) -> Result<EstimationReport<T>> {
    series.validate()?;
    if cfg.xi_stride == 0 {
        return domain("xi_stride must be at least 1");
    }
    let t1 = Tenor::ThreeMonth.years::<T>();
    let t2 = Tenor::OneYear.years::<T>();
    let (dv1, dv2) = series.atm_variance_moves();
    let (beta, beta_regression) = estimate_beta_from_moves(&dv1, &dv2, t1, t2)?;
    let (dr1, dr2) = series.risk_reversal_moves();
    let (gamma, gamma_regression) = estimate_gamma_from_moves(&dr1, &dr2, t1, t2, beta)?;

    let tenor = cfg.xi_tenor;
    let t = tenor.years::<T>();
    let betas = rr_beta(series, tenor, cfg.window)?;
    let mut xi_series = Vec::with_capacity(betas.len());
    let mut skipped = 0;
    let mut guess = None;
    for rb in betas.iter().step_by(cfg.xi_stride) {
        let row = &series.rows[rb.row];
        let (Some(atm), Some(rr)) = (row.atm(tenor), row.rr(tenor)) else {
            skipped += 1;
            continue;
        };
        let rho_bar = match cfg.rho_bar {
            RhoBarSource::Fixed { rho_bar } => rho_bar,
            RhoBarSource::Heston { alpha } => match heston_rho_fit(atm, rr, t, alpha, beta, guess) {
                Ok(p) => {
                    guess = Some((p.v0, p.rho));
                    p.rho
                }
                Err(_) => {
                    skipped += 1;
                    continue;
                }
            },
        };
        match estimate_xi(rb.regression.slope, rr, t, beta, gamma, rho_bar) {
            Ok(xi) => xi_series.push(XiPoint {
                date: rb.date,
                rr_beta: rb.regression.slope,
                rr_beta_stderr: rb.regression.slope_stderr,
                rr,
                rho_bar,
                xi,
            }),
            Err(_) => skipped += 1,
        }
    }
    if xi_series.is_empty() {
        return Err(Error::Estimation("no day produced a xi estimate".into()));
    }
    let xi = median(xi_series.iter().map(|p| p.xi).collect());
    Ok(EstimationReport {
        beta,
        beta_regression,
        gamma,
        gamma_regression,
        xi,
        xi_series,
        skipped_days: skipped,
    })
}

/// Synthetic market generator with planted parameters.
///
/// The SVSC state is simulated with [`simulate_step`]; each day the ATM vols
/// follow the zero vol-of-vol term structure
/// `sigma_I^2(T) = v_bar + (v - v_bar)(1 - e^{-beta T})/(beta T)` and the
/// risk reversals follow [`rr_approx`] with the current correlation as
/// `rho0`, plus optional Gaussian quote noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig<T> {
    pub params: SvscParams<T>,
    /// Risk-reversal scale `B alpha / beta`; `None` matches the Heston
    /// 25-delta risk reversal at the 3m tenor with `rho = rho_bar`.
    pub rr_scale: Option<T>,
    pub n_days: usize,
    pub steps_per_day: usize,
    pub atm_noise: T,
    pub rr_noise: T,
    pub start: NaiveDate,
    pub seed: u64,
}

impl<T: Scalar> SyntheticConfig<T> {
    /// Planted `beta = 2`, `gamma = 4`, `xi = 7` (`epsilon = 10`,
    /// `rho_cs = 0.7`) around `v_bar = 0.01`, `rho_bar = -0.6`.
    pub fn planted(n_days: usize, seed: u64) -> Self {
        let heston = HestonParams {
            beta: T::two(),
            v_bar: T::lit(0.01),
            v0: T::lit(0.01),
            alpha: T::lit(0.25),
            rho: T::lit(-0.6),
        };
        let params = SvscParams {
            heston,
            gamma: T::lit(4.0),
            rho_bar: T::lit(-0.6),
            epsilon: T::lit(10.0),
            rho_cs: T::lit(0.7),
            market: Market::driftless(T::one()),
        };
        Self {
            params,
            rr_scale: None,
            n_days,
            steps_per_day: 8,
            atm_noise: T::zero(),
            rr_noise: T::zero(),
            start: NaiveDate::from_ymd_opt(2010, 1, 4).expect("valid date"),
            seed,
        }
    }
}

/// Risk-reversal scale matching the Heston 25-delta risk reversal at tenor
/// `t` for `rho = rho_bar`.
pub fn heston_rr_scale<T: Scalar>(p: &SvscParams<T>, t: T) -> Result<T> {
    let hp = HestonParams {
        rho: p.rho_bar,
        v0: p.heston.v_bar,
        ..p.heston
    };
    let mkt = Market::driftless(T::one());
    let vol = |k: T| heston::implied_vol(&hp, &mkt, k, t);
    let (_, vc) = smile_strike_for_delta(&mkt, T::lit(0.25), t, vol)?;
    let (_, vp) = smile_strike_for_delta(&mkt, T::lit(-0.25), t, vol)?;
    let base = RrApproxParams {
        scale: T::one(),
        beta: p.heston.beta,
        gamma: p.gamma,
        rho_bar: p.rho_bar,
        rho0: p.rho_bar,
    };
    Ok(fit_rr_scale(base, t, vc - vp)?.scale)
}

fn next_business_day(d: NaiveDate) -> NaiveDate {
    let mut n = d + Days::new(1);
    while matches!(n.weekday(), Weekday::Sat | Weekday::Sun) {
        n = n + Days::new(1);
    }
    n
}

pub fn synthetic_series<T: Scalar>(cfg: &SyntheticConfig<T>) -> Result<MarketSeries<T>> {
    let p = &cfg.params;
    p.validate()?;
    if cfg.n_days < 2 || cfg.steps_per_day == 0 {
        return domain("synthetic series needs at least 2 days and 1 step per day");
    }
    let t1 = Tenor::ThreeMonth.years::<T>();
    let t2 = Tenor::OneYear.years::<T>();
    let scale = match cfg.rr_scale {
        Some(s) => s,
        None => heston_rr_scale(p, t1)?,
    };
    let hp = p.heston;
    let rr_params = |rho: T| RrApproxParams {
        scale,
        beta: hp.beta,
        gamma: p.gamma,
        rho_bar: p.rho_bar,
        rho0: rho,
    };
    let g1 = decay_average(hp.beta * t1);
    let g2 = decay_average(hp.beta * t2);
    let atm = |v: T, g: T| (hp.v_bar + (v.max(T::zero()) - hp.v_bar) * g).max(T::lit(1e-8)).sqrt();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let dt = T::one() / T::lit(252.0 * cfg.steps_per_day as f64);
    let mut state = PathState::initial(p);
    let mut date = cfg.start;
    let mut rows = Vec::with_capacity(cfg.n_days);
    for day in 0..cfg.n_days {
        if day > 0 {
            for _ in 0..cfg.steps_per_day {
                let z = [
                    T::sample_standard_normal(&mut rng),
                    T::sample_standard_normal(&mut rng),
                    T::sample_standard_normal(&mut rng),
                ];
                state = simulate_step(&state, dt, z, p).0;
            }
            date = next_business_day(date);
        }
        let mut noise = |s: T| {
            if s > T::zero() {
                s * T::sample_standard_normal(&mut rng)
            } else {
                T::zero()
            }
        };
        let rp = rr_params(state.rho);
        rows.push(MarketSeriesRow {
            date,
            spot: state.x.exp(),
            atm_3m: Some(atm(state.v, g1) + noise(cfg.atm_noise)),
            atm_1y: Some(atm(state.v, g2) + noise(cfg.atm_noise)),
            rr25_3m: Some(rr_approx(&rp, t1)? + noise(cfg.rr_noise)),
            rr25_1y: Some(rr_approx(&rp, t2)? + noise(cfg.rr_noise)),
        });
    }
    MarketSeries::new(rows)
}
