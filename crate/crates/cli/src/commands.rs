//! Command implementations. Each returns a table and whether any row
//! failed.

use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;
use svsc::approx::ApproxEngine;
use svsc::bs::{self, BsMarket};
use svsc::estimation::{estimate_all, EstimationConfig, MarketSeries};
use svsc::heston::{self, HestonParams};
use svsc::mc::{price_book, svsc_smile, SvscParams};
use svsc::{
    BarrierDirection, BarrierOption, BarrierStyle, DigitalKind, EuropeanDigital, Instrument, OneTouch, OptionKind,
    Vanilla,
};

use crate::config::{EstimateConfig, MarketPrices, Resolved, RunConfig};
use crate::output::{Cell, Header, Table};
use crate::CliError;

pub type Outcome = Result<(Table, bool), CliError>;

const PRICE_PRECISION: usize = 10;
const BP_PRECISION: usize = 4;

fn kind_name(k: OptionKind) -> &'static str {
    match k {
        OptionKind::Call => "call",
        OptionKind::Put => "put",
    }
}

fn dir_name(d: BarrierDirection) -> &'static str {
    match d {
        BarrierDirection::Up => "up",
        BarrierDirection::Down => "down",
    }
}

pub fn label(inst: &Instrument<f64>) -> String {
    match inst {
        Instrument::Vanilla(v) => format!("{} K={} T={}", kind_name(v.kind), v.strike, v.expiry),
        Instrument::Digital(d) => {
            let k = match d.kind {
                DigitalKind::Above => "above",
                DigitalKind::Below => "below",
            };
            format!("digital {k} K={} T={}", d.strike, d.expiry)
        }
        Instrument::OneTouch(o) => format!("one-touch {} B={} T={}", dir_name(o.direction), o.barrier, o.expiry),
        Instrument::Barrier(b) => {
            let style = match b.style {
                BarrierStyle::KnockOut => "out",
                BarrierStyle::KnockIn => "in",
            };
            format!(
                "{} K={} {}-{} B={} T={}",
                kind_name(b.underlying.kind),
                b.underlying.strike,
                dir_name(b.direction),
                style,
                b.barrier,
                b.underlying.expiry
            )
        }
    }
}

fn is_itm_knockout(b: &BarrierOption<f64>) -> bool {
    b.style == BarrierStyle::KnockOut && !b.is_out_of_the_money_barrier()
}

fn require_instruments(cfg: &RunConfig) -> Result<(), CliError> {
    if cfg.instruments.is_empty() {
        return Err(CliError::Config("the instrument list is empty".into()));
    }
    Ok(())
}

fn bs_price(m: &BsMarket<f64>, inst: &Instrument<f64>) -> svsc::Result<f64> {
    match inst {
        Instrument::Vanilla(v) => bs::vanilla_price(m, v),
        Instrument::Digital(d) => bs::digital_price(m, d),
        Instrument::OneTouch(o) => bs::one_touch_price(m, o),
        Instrument::Barrier(b) => bs::barrier_price(m, b),
    }
}

/// Instruments grouped by expiry, keeping input indices.
fn by_expiry(insts: &[Instrument<f64>]) -> BTreeMap<u64, Vec<usize>> {
    let mut out: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    for (i, inst) in insts.iter().enumerate() {
        out.entry(inst.expiry().to_bits()).or_default().push(i);
    }
    out
}

/// Market inputs for one instrument's approximation.
#[derive(Debug, Clone, Copy, Default)]
struct MarketInputs {
    model: Option<(f64, f64)>,
    vanilla: Option<f64>,
    counterpart: Option<f64>,
    digital: Option<f64>,
}

fn barrier_digital(b: &BarrierOption<f64>) -> svsc::Result<EuropeanDigital<f64>> {
    EuropeanDigital::new(b.barrier, b.underlying.expiry, b.direction.digital_kind())
}

/// Prices each instrument and its market inputs on one SVSC book per
/// expiry.
fn mc_market_inputs(p: &SvscParams<f64>, cfg: &RunConfig) -> Result<Vec<svsc::Result<MarketInputs>>, CliError> {
    let mc = cfg.engine.mc();
    let mut out: Vec<svsc::Result<MarketInputs>> = (0..cfg.instruments.len())
        .map(|_| Ok(MarketInputs::default()))
        .collect();
    for (bits, idx) in by_expiry(&cfg.instruments) {
        let horizon = f64::from_bits(bits);
        let mut book = Vec::new();
        let mut slots = Vec::new();
        let mut failed = Vec::new();
        for &i in &idx {
            let inst = cfg.instruments[i];
            let mut extra = Vec::new();
            match inst {
                Instrument::Barrier(b) => {
                    extra.push(Instrument::Vanilla(b.underlying));
                    extra.push(Instrument::Vanilla(Vanilla {
                        kind: b.underlying.kind.opposite(),
                        ..b.underlying
                    }));
                    match barrier_digital(&b) {
                        Ok(d) => extra.push(Instrument::Digital(d)),
                        Err(e) => {
                            failed.push((i, e));
                            continue;
                        }
                    }
                }
                Instrument::OneTouch(o) => {
                    match EuropeanDigital::new(o.barrier, o.expiry, o.direction.digital_kind()) {
                        Ok(d) => extra.push(Instrument::Digital(d)),
                        Err(e) => {
                            failed.push((i, e));
                            continue;
                        }
                    }
                }
                _ => {}
            }
            slots.push((i, book.len()));
            book.push(inst);
            book.extend(extra);
        }
        let t0 = Instant::now();
        let res = price_book(p, &mc, horizon, &book);
        eprintln!(
            "mc market: T={horizon} {} prices, {} paths x {} steps, {:.2}s",
            book.len(),
            mc.n_paths,
            mc.n_steps,
            t0.elapsed().as_secs_f64()
        );
        for (i, e) in failed {
            out[i] = Err(e);
        }
        match res {
            Ok(r) => {
                for (i, at) in slots {
                    let own = r.results[at];
                    let mut m = MarketInputs {
                        model: Some((own.price, own.stderr)),
                        ..Default::default()
                    };
                    match cfg.instruments[i] {
                        Instrument::Barrier(_) => {
                            m.vanilla = Some(r.results[at + 1].price);
                            m.counterpart = Some(r.results[at + 2].price);
                            m.digital = Some(r.results[at + 3].price);
                        }
                        Instrument::OneTouch(_) => m.digital = Some(r.results[at + 1].price),
                        _ => {}
                    }
                    out[i] = Ok(m);
                }
            }
            Err(e) => {
                for (i, _) in slots {
                    out[i] = Err(e.clone());
                }
            }
        }
    }
    Ok(out)
}

/// Heston Monte Carlo for path-dependent instruments, one book per expiry.
fn heston_mc_prices(res: &Resolved, cfg: &RunConfig, engines: &Engines) -> Vec<Option<svsc::Result<f64>>> {
    let mc = cfg.engine.mc();
    let mut out: Vec<Option<svsc::Result<f64>>> = vec![None; cfg.instruments.len()];
    for (bits, idx) in by_expiry(&cfg.instruments) {
        let path_dep: Vec<usize> = idx
            .into_iter()
            .filter(|&i| matches!(cfg.instruments[i], Instrument::Barrier(_) | Instrument::OneTouch(_)))
            .collect();
        if path_dep.is_empty() {
            continue;
        }
        let book: Vec<Instrument<f64>> = path_dep.iter().map(|&i| cfg.instruments[i]).collect();
        let p = SvscParams::heston(heston_for(res, engines, bits), res.market);
        let t0 = Instant::now();
        let r = price_book(&p, &mc, f64::from_bits(bits), &book);
        eprintln!("heston mc: {} prices, {:.2}s", book.len(), t0.elapsed().as_secs_f64());
        for (k, &i) in path_dep.iter().enumerate() {
            out[i] = Some(r.as_ref().map(|r| r.results[k].price).map_err(|e| e.clone()));
        }
    }
    out
}

fn approx_price(
    engine: &ApproxEngine<f64>,
    inst: &Instrument<f64>,
    m: &MarketInputs,
) -> svsc::Result<(f64, Vec<String>)> {
    match inst {
        Instrument::Vanilla(v) => match m.model {
            Some((p, _)) => Ok((p, vec![])),
            None => Ok((heston::vanilla_price(engine.heston(), engine.market(), v)?, vec![])),
        },
        Instrument::Digital(d) => match m.model {
            Some((p, _)) => Ok((p, vec![])),
            None => Ok((heston::digital_price(engine.heston(), engine.market(), d)?, vec![])),
        },
        Instrument::OneTouch(o) => {
            let r = engine.price_one_touch(o, m.digital)?;
            Ok((r.price, r.diagnostics.warnings))
        }
        Instrument::Barrier(b) => {
            let r = if is_itm_knockout(b) && m.counterpart.is_some() {
                engine.price_itm_barrier(b, m.counterpart, m.digital)?
            } else {
                engine.price_barrier(b, m.vanilla, m.digital)?
            };
            Ok((r.price, r.diagnostics.warnings))
        }
    }
}

type Engines = BTreeMap<u64, svsc::Result<ApproxEngine<f64>>>;

/// Heston model calibrated for the expiry, falling back to the configured
/// one when the engine could not be built.
fn heston_for(res: &Resolved, engines: &Engines, bits: u64) -> HestonParams<f64> {
    match engines.get(&bits) {
        Some(Ok(e)) => *e.heston(),
        _ => res.heston,
    }
}

fn heston_closed_form(hp: &HestonParams<f64>, res: &Resolved, inst: &Instrument<f64>) -> Option<svsc::Result<f64>> {
    match inst {
        Instrument::Vanilla(v) => Some(heston::vanilla_price(hp, &res.market, v)),
        Instrument::Digital(d) => Some(heston::digital_price(hp, &res.market, d)),
        _ => None,
    }
}

pub fn price(cfg: &RunConfig, res: &Resolved, header: Header, bp: bool) -> Outcome {
    require_instruments(cfg)?;
    let with_model = cfg.engine.market_prices == MarketPrices::Mc;
    let inputs = if with_model {
        mc_market_inputs(res.require_svsc()?, cfg)?
    } else {
        (0..cfg.instruments.len())
            .map(|_| Ok(MarketInputs::default()))
            .collect()
    };
    let engines = res.engines(cfg.instruments.iter().map(|i| i.expiry()));
    let heston_mc = if cfg.engine.heston_mc {
        heston_mc_prices(res, cfg, &engines)
    } else {
        vec![None; cfg.instruments.len()]
    };
    let t0 = Instant::now();
    let approx: Vec<svsc::Result<(f64, f64, Vec<String>)>> = cfg
        .instruments
        .par_iter()
        .zip(inputs.par_iter())
        .map(|(inst, m)| {
            let engine = engines[&inst.expiry().to_bits()].as_ref().map_err(|e| e.clone())?;
            let m = m.as_ref().map_err(|e| e.clone())?;
            let bsm = BsMarket::new(
                res.market.spot,
                res.market.rate_dom,
                res.market.rate_asset,
                engine.atm_vol(),
            )?;
            let bs = bs_price(&bsm, inst)?;
            let (a, w) = approx_price(engine, inst, m)?;
            Ok((a, bs, w))
        })
        .collect();
    eprintln!(
        "approximation: {} instruments, {:.3}s",
        cfg.instruments.len(),
        t0.elapsed().as_secs_f64()
    );

    let scale = if bp { 1e4 } else { 1.0 };
    let mut cols = vec!["instrument", "approx", "bs", "heston"];
    if with_model {
        cols.extend(["model", "model_stderr", "approx_diff", "heston_diff", "bs_diff"]);
    }
    cols.push("status");
    let mut t = Table::new(header, &cols, if bp { BP_PRECISION } else { PRICE_PRECISION });
    t.note("units", if bp { "bp" } else { "notional" });
    if let Some(c) = &res.calibration {
        t.note("heston_v_bar", c.params.v_bar);
        t.note("heston_alpha", c.params.alpha);
        t.note("heston_rho", c.params.rho);
    }
    let mut partial = false;
    for (i, inst) in cfg.instruments.iter().enumerate() {
        let hp = heston_for(res, &engines, inst.expiry().to_bits());
        let heston = heston_closed_form(&hp, res, inst).or_else(|| heston_mc[i].clone());
        let heston_val = heston.as_ref().and_then(|h| h.as_ref().ok()).map(|v| v * scale);
        let mut row: Vec<Cell> = vec![label(inst).into()];
        let mut status = Vec::new();
        let (a, b) = match &approx[i] {
            Ok((a, b, w)) => {
                status.extend(w.iter().cloned());
                (Some(a * scale), Some(b * scale))
            }
            Err(e) => {
                status.push(format!("error: {e}"));
                (None, None)
            }
        };
        if let Some(Err(e)) = &heston {
            status.push(format!("heston error: {e}"));
        }
        row.push(a.into());
        row.push(b.into());
        row.push(heston_val.into());
        if with_model {
            let model = inputs[i].as_ref().ok().and_then(|m| m.model);
            let mv = model.map(|(p, _)| p * scale);
            row.push(mv.into());
            row.push(model.map(|(_, s)| s * scale).into());
            let diff = |x: Option<f64>| mv.zip(x).map(|(m, x)| m - x);
            row.push(diff(a).into());
            row.push(diff(heston_val).into());
            row.push(diff(b).into());
        }
        if status.iter().any(|s| s.contains("error")) {
            partial = true;
        }
        row.push(
            if status.is_empty() {
                "ok".to_string()
            } else {
                status.join("; ")
            }
            .into(),
        );
        t.push(row);
    }
    Ok((t, partial))
}

pub fn mc_benchmark(cfg: &RunConfig, res: &Resolved, header: Header, bp: bool) -> Outcome {
    require_instruments(cfg)?;
    let p = res.require_svsc()?;
    let mc = cfg.engine.mc();
    let scale = if bp { 1e4 } else { 1.0 };
    let mut results: Vec<svsc::Result<svsc::mc::PricingResult<f64>>> =
        vec![Err(svsc::Error::Domain("not priced".into())); cfg.instruments.len()];
    let mut t = Table::new(
        header,
        &["instrument", "price", "stderr", "n_paths", "n_steps", "status"],
        if bp { BP_PRECISION } else { PRICE_PRECISION },
    );
    t.note("units", if bp { "bp" } else { "notional" });
    t.note("bridge_correction", cfg.engine.bridge_correction);
    t.note("antithetic", cfg.engine.antithetic);
    for (bits, idx) in by_expiry(&cfg.instruments) {
        let horizon = f64::from_bits(bits);
        let book: Vec<Instrument<f64>> = idx.iter().map(|&i| cfg.instruments[i]).collect();
        let t0 = Instant::now();
        match price_book(p, &mc, horizon, &book) {
            Ok(r) => {
                let secs = t0.elapsed().as_secs_f64();
                let paths_steps = (r.results[0].n_paths * mc.n_steps) as f64;
                eprintln!(
                    "mc: T={horizon} {} instruments, {} paths x {} steps, {secs:.2}s ({:.1} M path-steps/s), rho clamp rate {:.2e}",
                    book.len(),
                    r.results[0].n_paths,
                    mc.n_steps,
                    paths_steps / secs.max(1e-9) / 1e6,
                    r.diagnostics.clamp_rate()
                );
                t.note(&format!("rho_clamp_rate_T{horizon}"), r.diagnostics.clamp_rate());
                for (k, &i) in idx.iter().enumerate() {
                    results[i] = Ok(r.results[k]);
                }
            }
            Err(e) => {
                for &i in &idx {
                    results[i] = Err(e.clone());
                }
            }
        }
    }
    let mut partial = false;
    for (inst, r) in cfg.instruments.iter().zip(&results) {
        let row = match r {
            Ok(r) => vec![
                label(inst).into(),
                (r.price * scale).into(),
                (r.stderr * scale).into(),
                r.n_paths.into(),
                r.n_steps.into(),
                "ok".into(),
            ],
            Err(e) => {
                partial = true;
                vec![
                    label(inst).into(),
                    Cell::Empty,
                    Cell::Empty,
                    Cell::Empty,
                    Cell::Empty,
                    format!("error: {e}").into(),
                ]
            }
        };
        t.push(row);
    }
    Ok((t, partial))
}

pub fn calibrate(res: &Resolved, header: Header) -> Outcome {
    let c = res
        .calibration
        .as_ref()
        .ok_or_else(|| CliError::Config("calibrate needs market.quotes".into()))?;
    let engine = res
        .engine(res.quote_expiry().unwrap_or(0.0))
        .map_err(|e| CliError::Failure(e.to_string()))?;
    let mut t = Table::new(
        header,
        &["strike", "expiry", "market_vol", "model_vol", "residual"],
        PRICE_PRECISION,
    );
    t.note("beta", c.params.beta);
    t.note("v_bar", c.params.v_bar);
    t.note("v0", c.params.v0);
    t.note("alpha", c.params.alpha);
    t.note("rho", c.params.rho);
    t.note("iterations", c.iterations as u64);
    t.note("max_abs_residual", c.max_abs_residual());
    for (q, r) in engine.quotes().iter().zip(c.residuals) {
        t.push(vec![
            q.strike.into(),
            q.expiry.into(),
            q.vol.into(),
            (q.vol + r).into(),
            r.into(),
        ]);
    }
    Ok((t, false))
}

pub fn smile(cfg: &RunConfig, res: &Resolved, header: Header) -> Outcome {
    let block = cfg
        .smile
        .as_ref()
        .ok_or_else(|| CliError::Config("smile needs a smile block".into()))?;
    let p = res.require_svsc()?;
    let t_exp = block.expiry;
    if !(t_exp > 0.0) {
        return Err(CliError::Config("smile.expiry must be positive".into()));
    }
    let fwd = res.market.forward(t_exp);
    let strikes = match &block.strikes {
        Some(k) if !k.is_empty() => k.clone(),
        Some(_) => return Err(CliError::Config("smile.strikes is empty".into())),
        None => {
            let atm = heston::implied_vol(&res.heston, &res.market, fwd, t_exp)
                .map_err(|e| CliError::Failure(e.to_string()))?;
            let sd = atm * t_exp.sqrt() * block.width;
            let n = block.n_strikes.max(1);
            (0..n)
                .map(|i| {
                    let u = if n == 1 {
                        0.0
                    } else {
                        -1.0 + 2.0 * i as f64 / (n - 1) as f64
                    };
                    fwd * (u * sd).exp()
                })
                .collect()
        }
    };
    let t0 = Instant::now();
    let pts = svsc_smile(p, &cfg.engine.mc(), &strikes, t_exp).map_err(|e| CliError::Failure(e.to_string()))?;
    eprintln!("smile: {} strikes, {:.2}s", strikes.len(), t0.elapsed().as_secs_f64());
    let mut t = Table::new(
        header,
        &["strike", "log_moneyness", "heston_vol", "svsc_vol", "svsc_vol_stderr"],
        PRICE_PRECISION,
    );
    t.note("expiry", t_exp);
    let mut partial = false;
    for pt in pts {
        let h = heston::implied_vol(&res.heston, &res.market, pt.strike, t_exp).ok();
        partial |= h.is_none() || pt.vol.is_none();
        t.push(vec![
            pt.strike.into(),
            (pt.strike / fwd).ln().into(),
            h.into(),
            pt.vol.into(),
            if pt.vol_stderr.is_finite() {
                Cell::Num(pt.vol_stderr)
            } else {
                Cell::Empty
            },
        ]);
    }
    Ok((t, partial))
}

fn leg_price(m: &BsMarket<f64>, inst: &Instrument<f64>, tau: f64) -> svsc::Result<f64> {
    match inst {
        Instrument::Vanilla(v) => bs::vanilla_price(m, &Vanilla { expiry: tau, ..*v }),
        Instrument::Digital(d) => bs::digital_price(m, &EuropeanDigital { expiry: tau, ..*d }),
        Instrument::OneTouch(o) => bs::one_touch_price(m, &OneTouch { expiry: tau, ..*o }),
        Instrument::Barrier(b) => bs::barrier_price(
            m,
            &BarrierOption {
                underlying: Vanilla {
                    expiry: tau,
                    ..b.underlying
                },
                ..*b
            },
        ),
    }
}

pub fn vega_profile(cfg: &RunConfig, res: &Resolved, header: Header) -> Outcome {
    require_instruments(cfg)?;
    let block = cfg
        .vega_profile
        .as_ref()
        .ok_or_else(|| CliError::Config("vega-profile needs a vega_profile block".into()))?;
    if !(block.spot_min > 0.0 && block.spot_max > block.spot_min) || block.n_spots < 2 || block.elapsed.is_empty() {
        return Err(CliError::Config(
            "vega_profile needs 0 < spot_min < spot_max, n_spots >= 2 and elapsed times".into(),
        ));
    }
    let mut t = Table::new(
        header,
        &["instrument", "elapsed", "spot", "vega", "hedged_vega", "status"],
        PRICE_PRECISION,
    );
    let engines = match block.vol {
        Some(v) => cfg
            .instruments
            .iter()
            .map(|i| (i.expiry().to_bits(), res.flat_engine(i.expiry(), v)))
            .collect(),
        None => res.engines(cfg.instruments.iter().map(|i| i.expiry())),
    };
    let mut partial = false;
    for inst in &cfg.instruments {
        let prepared = (|| -> svsc::Result<(svsc::approx::ReplicationPortfolio<f64>, f64, f64, BarrierDirection)> {
            let engine = engines[&inst.expiry().to_bits()].as_ref().map_err(|e| e.clone())?;
            let vol = engine.atm_vol();
            match inst {
                Instrument::Barrier(b) if b.style == BarrierStyle::KnockOut && b.is_out_of_the_money_barrier() => {
                    Ok((engine.barrier_replication(b)?, vol, b.barrier, b.direction))
                }
                Instrument::OneTouch(o) => Ok((engine.one_touch_replication(o)?, vol, o.barrier, o.direction)),
                _ => Err(svsc::Error::Domain(
                    "vega profiles need an out-of-the-money knockout or a one touch".into(),
                )),
            }
        })();
        let (repl, vol, barrier, dir) = match prepared {
            Ok(x) => x,
            Err(e) => {
                partial = true;
                t.push(vec![
                    label(inst).into(),
                    Cell::Empty,
                    Cell::Empty,
                    Cell::Empty,
                    Cell::Empty,
                    format!("error: {e}").into(),
                ]);
                continue;
            }
        };
        let expiry = inst.expiry();
        for &e in &block.elapsed {
            let tau = expiry - e;
            if !(tau > 0.0) || e < 0.0 {
                partial = true;
                t.push(vec![
                    label(inst).into(),
                    e.into(),
                    Cell::Empty,
                    Cell::Empty,
                    Cell::Empty,
                    "error: elapsed time outside [0, expiry)".into(),
                ]);
                continue;
            }
            for k in 0..block.n_spots {
                let s = block.spot_min + (block.spot_max - block.spot_min) * k as f64 / (block.n_spots - 1) as f64;
                if dir.is_breached(s, barrier) {
                    continue;
                }
                let row = (|| -> svsc::Result<(f64, f64)> {
                    let m = BsMarket::new(s, res.market.rate_dom, res.market.rate_asset, vol)?;
                    let v = bs::vol_sensitivity(&m, |mm| leg_price(mm, inst, tau))?;
                    let r = bs::vol_sensitivity(&m, |mm| {
                        repl.legs
                            .iter()
                            .map(|l| leg_price(mm, &l.instrument, tau).map(|p| l.quantity * p))
                            .sum()
                    })?;
                    Ok((v, v - r))
                })();
                match row {
                    Ok((v, h)) => t.push(vec![
                        label(inst).into(),
                        e.into(),
                        s.into(),
                        v.into(),
                        h.into(),
                        "ok".into(),
                    ]),
                    Err(err) => {
                        partial = true;
                        t.push(vec![
                            label(inst).into(),
                            e.into(),
                            s.into(),
                            Cell::Empty,
                            Cell::Empty,
                            format!("error: {err}").into(),
                        ]);
                    }
                }
            }
        }
    }
    Ok((t, partial))
}

pub fn estimate(series: &MarketSeries<f64>, opts: &EstimateConfig, header: Header) -> Outcome {
    let ec = EstimationConfig {
        window: opts.window,
        xi_tenor: opts.xi_tenor,
        rho_bar: opts.rho_bar,
        xi_stride: opts.xi_stride,
    };
    let t0 = Instant::now();
    let r = estimate_all(series, &ec).map_err(|e| match e {
        svsc::Error::Parse { .. } | svsc::Error::Domain(_) => CliError::Config(e.to_string()),
        other => CliError::Failure(other.to_string()),
    })?;
    eprintln!("estimation: {} rows, {:.2}s", series.len(), t0.elapsed().as_secs_f64());
    let mut t = Table::new(
        header,
        &["date", "rr_beta", "rr_beta_stderr", "rr", "rho_bar", "xi"],
        PRICE_PRECISION,
    );
    t.note("beta", r.beta);
    t.note("beta_slope", r.beta_regression.slope);
    t.note("beta_r_squared", r.beta_regression.r_squared);
    t.note("beta_n_obs", r.beta_regression.n_obs as u64);
    t.note("gamma", r.gamma);
    t.note("gamma_slope", r.gamma_regression.slope);
    t.note("gamma_r_squared", r.gamma_regression.r_squared);
    t.note("gamma_n_obs", r.gamma_regression.n_obs as u64);
    t.note("xi", r.xi);
    t.note("skipped_days", r.skipped_days as u64);
    for p in &r.xi_series {
        t.push(vec![
            p.date.format("%Y-%m-%d").to_string().into(),
            p.rr_beta.into(),
            p.rr_beta_stderr.into(),
            p.rr.into(),
            p.rho_bar.into(),
            p.xi.into(),
        ]);
    }
    Ok((t, false))
}
