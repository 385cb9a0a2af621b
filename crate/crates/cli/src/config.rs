//! Run configuration and its resolution into library objects.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use svsc::approx::{ApproxConfig, ApproxEngine, DupirePoint, SvscMarks};
use svsc::bs::smile_strike_for_delta;
use svsc::estimation::{RhoBarSource, Tenor};
use svsc::heston::{self, Calibration, HestonParams, VolQuote};
use svsc::mc::{terminal_samples, McConfig, SvscParams};
use svsc::{Instrument, Market};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub market: MarketBlock,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub marks: Option<MarksBlock>,
    #[serde(default)]
    pub engine: EngineBlock,
    #[serde(default)]
    pub instruments: Vec<Instrument<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub smile: Option<SmileBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vega_profile: Option<VegaBlock>,
}

/// Spot and rates plus exactly one of `quotes` or `svsc`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketBlock {
    pub spot: f64,
    #[serde(default)]
    pub rate_dom: f64,
    #[serde(default)]
    pub rate_asset: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quotes: Option<Vec<VolQuote<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub svsc: Option<ModelBlock>,
}

/// Full nine-parameter SVSC model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelBlock {
    pub beta: f64,
    pub v_bar: f64,
    pub v0: f64,
    pub alpha: f64,
    pub rho0: f64,
    pub gamma: f64,
    pub rho_bar: f64,
    pub epsilon: f64,
    pub rho_cs: f64,
}

/// Marked parameters used with quoted markets. `xi` may be given directly
/// or as `epsilon * rho_cs`; Monte Carlo commands need the latter pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarksBlock {
    pub beta: f64,
    pub gamma: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xi: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho_cs: Option<f64>,
    /// Initial correlation; defaults to the calibrated Heston correlation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho0: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarketPrices {
    /// Heston closed forms stand in for market vanillas and digitals.
    #[default]
    Heston,
    /// SVSC Monte Carlo prices on the instruments' own paths, with model
    /// and difference columns in the output.
    Mc,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineBlock {
    pub paths: usize,
    pub steps: usize,
    pub seed: u64,
    pub antithetic: bool,
    pub bridge_correction: bool,
    pub buckets: usize,
    pub market_prices: MarketPrices,
    /// Heston Monte Carlo for path-dependent rows of the Heston column.
    pub heston_mc: bool,
    /// Strike at which the unwind variance is read from the local vol surface.
    pub dupire_point: DupirePoint,
    /// Long-run correlation for the blended correlation; the calibrated
    /// Heston correlation when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho_bar_override: Option<f64>,
}

impl Default for EngineBlock {
    fn default() -> Self {
        Self {
            paths: 100_000,
            steps: 500,
            seed: 1,
            antithetic: true,
            bridge_correction: true,
            buckets: 10,
            market_prices: MarketPrices::Heston,
            heston_mc: true,
            dupire_point: DupirePoint::Barrier,
            rho_bar_override: None,
        }
    }
}

impl EngineBlock {
    pub fn mc(&self) -> McConfig {
        McConfig::new(self.paths, self.steps, self.seed)
            .with_antithetic(self.antithetic)
            .with_bridge(self.bridge_correction)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmileBlock {
    pub expiry: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strikes: Option<Vec<f64>>,
    #[serde(default = "default_n_strikes")]
    pub n_strikes: usize,
    /// Half-width of the default strike grid in ATM standard deviations.
    #[serde(default = "default_width")]
    pub width: f64,
}

fn default_n_strikes() -> usize {
    11
}

fn default_width() -> f64 {
    2.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VegaBlock {
    /// Elapsed times at which the profile is drawn.
    pub elapsed: Vec<f64>,
    pub spot_min: f64,
    pub spot_max: f64,
    #[serde(default = "default_n_spots")]
    pub n_spots: usize,
    /// Black-Scholes volatility; defaults to the ATM quote.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vol: Option<f64>,
}

fn default_n_spots() -> usize {
    61
}

/// Options of the `estimate` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateConfig {
    #[serde(default = "default_window")]
    pub window: usize,
    #[serde(default = "default_tenor")]
    pub xi_tenor: Tenor,
    #[serde(default = "default_rho_bar")]
    pub rho_bar: RhoBarSource<f64>,
    #[serde(default = "default_stride")]
    pub xi_stride: usize,
}

fn default_window() -> usize {
    svsc::estimation::DEFAULT_WINDOW
}

fn default_tenor() -> Tenor {
    Tenor::ThreeMonth
}

fn default_rho_bar() -> RhoBarSource<f64> {
    RhoBarSource::Heston { alpha: 0.25 }
}

fn default_stride() -> usize {
    1
}

impl Default for EstimateConfig {
    fn default() -> Self {
        Self {
            window: default_window(),
            xi_tenor: default_tenor(),
            rho_bar: default_rho_bar(),
            xi_stride: default_stride(),
        }
    }
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text =
        std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Configuration resolved into library objects.
pub struct Resolved {
    pub market: Market<f64>,
    pub marks: SvscMarks<f64>,
    /// Full model when the configuration determines one.
    pub svsc: Option<SvscParams<f64>>,
    /// Heston model at the long-run correlation.
    pub heston: HestonParams<f64>,
    pub calibration: Option<Calibration<f64>>,
    quotes: Option<[VolQuote<f64>; 3]>,
    approx: ApproxConfig<f64>,
    mc: McConfig,
}

fn cfg_err<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Config(e.to_string())
}

impl RunConfig {
    pub fn resolve(&self) -> Result<Resolved, CliError> {
        let m = &self.market;
        let market = Market::new(m.spot, m.rate_dom, m.rate_asset).map_err(cfg_err)?;
        let approx = ApproxConfig {
            n_buckets: self.engine.buckets,
            dupire_point: self.engine.dupire_point,
            rho_bar_override: self.engine.rho_bar_override,
        };
        if let Some(r) = self.engine.rho_bar_override {
            if !(r > -1.0 && r < 1.0) {
                return Err(CliError::Config(format!(
                    "engine.rho_bar_override must lie in (-1, 1), got {r}"
                )));
            }
        }
        if self.engine.buckets == 0 {
            return Err(CliError::Config("engine.buckets must be at least 1".into()));
        }
        self.engine.mc().validate().map_err(cfg_err)?;
        match (&m.quotes, &m.svsc) {
            (Some(q), None) => {
                let quotes: [VolQuote<f64>; 3] = q
                    .clone()
                    .try_into()
                    .map_err(|_| CliError::Config(format!("market.quotes needs exactly 3 quotes, got {}", q.len())))?;
                let mk = self
                    .marks
                    .ok_or_else(|| CliError::Config("marks are required with market.quotes".into()))?;
                let xi = match (mk.xi, mk.epsilon, mk.rho_cs) {
                    (Some(x), Some(e), Some(r)) if (x - e * r).abs() > 1e-12 * x.abs().max(1.0) => {
                        return Err(CliError::Config(format!(
                            "marks.xi={x} disagrees with epsilon*rho_cs={}",
                            e * r
                        )))
                    }
                    (Some(x), _, _) => x,
                    (None, Some(e), Some(r)) => e * r,
                    _ => return Err(CliError::Config("marks need xi or both epsilon and rho_cs".into())),
                };
                let marks = SvscMarks {
                    beta: mk.beta,
                    gamma: mk.gamma,
                    xi,
                };
                marks.validate().map_err(cfg_err)?;
                let calibration = heston::calibrate(&quotes, mk.beta, &market)
                    .map_err(|e| CliError::Failure(format!("calibration failed: {e}")))?;
                let hp = calibration.params;
                let svsc = match (mk.epsilon, mk.rho_cs) {
                    (Some(epsilon), Some(rho_cs)) => Some(
                        SvscParams::new(
                            HestonParams {
                                rho: mk.rho0.unwrap_or(hp.rho),
                                ..hp
                            },
                            mk.gamma,
                            hp.rho,
                            epsilon,
                            rho_cs,
                            market,
                        )
                        .map_err(cfg_err)?,
                    ),
                    _ => None,
                };
                Ok(Resolved {
                    market,
                    marks,
                    svsc,
                    heston: hp,
                    calibration: Some(calibration),
                    quotes: Some(quotes),
                    approx,
                    mc: self.engine.mc(),
                })
            }
            (None, Some(s)) => {
                if self.marks.is_some() {
                    return Err(CliError::Config(
                        "marks are derived from market.svsc and must be omitted".into(),
                    ));
                }
                let hp = HestonParams::new(s.beta, s.v_bar, s.v0, s.alpha, s.rho0).map_err(cfg_err)?;
                let svsc = SvscParams::new(hp, s.gamma, s.rho_bar, s.epsilon, s.rho_cs, market).map_err(cfg_err)?;
                let marks = SvscMarks {
                    beta: s.beta,
                    gamma: s.gamma,
                    xi: s.epsilon * s.rho_cs,
                };
                marks.validate().map_err(cfg_err)?;
                Ok(Resolved {
                    market,
                    marks,
                    svsc: Some(svsc),
                    heston: HestonParams { rho: s.rho_bar, ..hp },
                    calibration: None,
                    quotes: None,
                    approx,
                    mc: self.engine.mc(),
                })
            }
            _ => Err(CliError::Config("market needs exactly one of quotes or svsc".into())),
        }
    }
}

impl Resolved {
    pub fn require_svsc(&self) -> Result<&SvscParams<f64>, CliError> {
        self.svsc.as_ref().ok_or_else(|| {
            CliError::Config("this command needs the full model: market.svsc, or marks.epsilon and marks.rho_cs".into())
        })
    }

    pub fn quote_expiry(&self) -> Option<f64> {
        self.quotes.map(|q| q[0].expiry)
    }

    /// Three quotes read off the SVSC Monte Carlo smile at its 25-delta
    /// put, forward and 25-delta call strikes.
    fn model_quotes(&self, expiry: f64) -> svsc::Result<[VolQuote<f64>; 3]> {
        let p = self
            .svsc
            .as_ref()
            .ok_or_else(|| svsc::Error::Domain("no model to generate quotes from".into()))?;
        let samples = terminal_samples(p, &self.mc, &[expiry])?;
        let vol = |k: f64| {
            samples
                .implied_vol(k, expiry)?
                .vol
                .ok_or_else(|| svsc::Error::Numerical(format!("no implied vol at strike {k}")))
        };
        let (kp, vp) = smile_strike_for_delta(&self.market, -0.25, expiry, vol)?;
        let fwd = self.market.forward(expiry);
        let va = vol(fwd)?;
        let (kc, vc) = smile_strike_for_delta(&self.market, 0.25, expiry, vol)?;
        Ok([
            VolQuote {
                strike: kp,
                vol: vp,
                expiry,
            },
            VolQuote {
                strike: fwd,
                vol: va,
                expiry,
            },
            VolQuote {
                strike: kc,
                vol: vc,
                expiry,
            },
        ])
    }

    /// Engine on a flat smile at `vol`, for Black-Scholes analyses.
    pub fn flat_engine(&self, expiry: f64, vol: f64) -> svsc::Result<ApproxEngine<f64>> {
        let fwd = self.market.forward(expiry);
        let quotes = [0.95, 1.0, 1.05].map(|m| VolQuote {
            strike: m * fwd,
            vol,
            expiry,
        });
        ApproxEngine::new(self.market, quotes, self.marks, self.approx)
    }

    /// Approximation engine per distinct expiry.
    pub fn engines(&self, expiries: impl IntoIterator<Item = f64>) -> BTreeMap<u64, svsc::Result<ApproxEngine<f64>>> {
        let mut out = BTreeMap::new();
        for t in expiries {
            out.entry(t.to_bits()).or_insert_with(|| self.engine(t));
        }
        out
    }

    pub fn engine(&self, expiry: f64) -> svsc::Result<ApproxEngine<f64>> {
        match (self.quotes, self.calibration) {
            (Some(q), Some(c)) => {
                if (q[0].expiry - expiry).abs() > 1e-10 {
                    return Err(svsc::Error::Domain(format!(
                        "instrument expiry {expiry} differs from the quoted expiry {}",
                        q[0].expiry
                    )));
                }
                ApproxEngine::with_calibration(self.market, q, self.marks, self.approx, c)
            }
            _ => ApproxEngine::new(self.market, self.model_quotes(expiry)?, self.marks, self.approx),
        }
    }
}
