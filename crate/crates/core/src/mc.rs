//! Monte Carlo engine for the three-factor SVSC dynamics
//!
//! ```text
//! dS/S = mu dt + sqrt(v) dw_s
//! dv   = beta (v_bar - v) dt + alpha sqrt(v) dw_v
//! drho = gamma (rho_bar - rho) dt + epsilon sqrt(1 - rho^2) sqrt(v) dw_rho
//! ```
//!
//! with `<dw_s dw_v> = rho`, `<dw_s dw_rho> = rho_cs` and
//! `<dw_v dw_rho> = rho rho_cs`.
//!
//! Paths are grouped into fixed-size blocks. Unit `i` (an antithetic pair,
//! or a single path) draws from ChaCha stream `i` of the configured seed, and
//! block results are merged in block order, so output never depends on the
//! number of worker threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bs;
use crate::error::{domain, Error, Result};
use crate::heston::HestonParams;
use crate::instrument::{
    BarrierDirection, BarrierOption, BarrierStyle, EuropeanDigital, Instrument, OneTouch, OptionKind, Vanilla,
};
use crate::market::Market;
use crate::scalar::Scalar;

/// Correlation is kept strictly inside `(-1, 1)` by this margin.
pub const RHO_CLAMP_MARGIN: f64 = 1e-9;

const UNITS_PER_BLOCK: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvscParams<T> {
    /// Variance dynamics. `heston.rho` is the initial correlation `rho(0)`.
    pub heston: HestonParams<T>,
    pub gamma: T,
    pub rho_bar: T,
    pub epsilon: T,
    pub rho_cs: T,
    pub market: Market<T>,
}

impl<T: Scalar> SvscParams<T> {
    pub fn new(
        heston: HestonParams<T>,
        gamma: T,
        rho_bar: T,
        epsilon: T,
        rho_cs: T,
        market: Market<T>,
    ) -> Result<Self> {
        let p = Self {
            heston,
            gamma,
            rho_bar,
            epsilon,
            rho_cs,
            market,
        };
        p.validate()?;
        Ok(p)
    }

    /// Constant-correlation (pure Heston) dynamics.
    pub fn heston(heston: HestonParams<T>, market: Market<T>) -> Self {
        Self {
            heston,
            gamma: T::zero(),
            rho_bar: heston.rho,
            epsilon: T::zero(),
            rho_cs: T::zero(),
            market,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.heston.validate()?;
        self.market.validate()?;
        if !(self.gamma >= T::zero()) || !self.gamma.is_finite() {
            return domain(format!("gamma must be non-negative, got {}", self.gamma));
        }
        if !(self.rho_bar.abs() <= T::one()) {
            return domain(format!("rho_bar must lie in [-1, 1], got {}", self.rho_bar));
        }
        if !(self.epsilon >= T::zero()) || !self.epsilon.is_finite() {
            return domain(format!("epsilon must be non-negative, got {}", self.epsilon));
        }
        if !(self.rho_cs.abs() < T::one()) {
            return domain(format!("rho_cs must lie in (-1, 1), got {}", self.rho_cs));
        }
        Ok(())
    }

    /// Determinant of the instantaneous correlation matrix of
    /// `(dw_s, dw_v, dw_rho)` at spot/vol correlation `rho`.
    pub fn correlation_determinant(&self, rho: T) -> T {
        (T::one() - rho * rho) * (T::one() - self.rho_cs * self.rho_cs)
    }

    /// Expected correlation path `rho_bar + (rho(0) - rho_bar) e^{-gamma t}`.
    pub fn expected_correlation(&self, t: T) -> T {
        self.rho_bar + (self.heston.rho - self.rho_bar) * (-self.gamma * t).exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct McConfig {
    pub n_paths: usize,
    /// Time steps over the simulated horizon.
    pub n_steps: usize,
    pub seed: u64,
    #[serde(default = "default_true")]
    pub antithetic: bool,
    #[serde(default)]
    pub bridge_correction: bool,
    /// Worker threads; `None` uses the global pool.
    #[serde(default)]
    pub threads: Option<usize>,
}

fn default_true() -> bool {
    true
}

impl McConfig {
    pub fn new(n_paths: usize, n_steps: usize, seed: u64) -> Self {
        Self {
            n_paths,
            n_steps,
            seed,
            antithetic: true,
            bridge_correction: false,
            threads: None,
        }
    }

    pub fn with_bridge(self, on: bool) -> Self {
        Self {
            bridge_correction: on,
            ..self
        }
    }

    pub fn with_antithetic(self, on: bool) -> Self {
        Self { antithetic: on, ..self }
    }

    pub fn with_threads(self, threads: Option<usize>) -> Self {
        Self { threads, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_paths == 0 {
            return domain("n_paths must be at least 1");
        }
        if self.n_steps == 0 {
            return domain("n_steps must be at least 1");
        }
        if self.threads == Some(0) {
            return domain("threads must be at least 1");
        }
        Ok(())
    }

    fn units(&self) -> usize {
        if self.antithetic {
            self.n_paths.div_ceil(2)
        } else {
            self.n_paths
        }
    }

    fn simulated_paths(&self) -> usize {
        if self.antithetic {
            2 * self.units()
        } else {
            self.units()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PricingResult<T> {
    pub price: T,
    pub stderr: T,
    pub n_paths: usize,
    pub n_steps: usize,
    pub seed: u64,
}

/// Engine counters for one simulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct McDiagnostics {
    pub steps_simulated: u64,
    /// Steps where the correlation update left `(-1, 1)` and was clamped.
    pub rho_clamps: u64,
}

impl McDiagnostics {
    pub fn clamp_rate(&self) -> f64 {
        if self.steps_simulated == 0 {
            0.0
        } else {
            self.rho_clamps as f64 / self.steps_simulated as f64
        }
    }
}

/// State of one path: log-spot, variance and spot/vol correlation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathState<T> {
    pub x: T,
    pub v: T,
    pub rho: T,
}

impl<T: Scalar> PathState<T> {
    pub fn initial(p: &SvscParams<T>) -> Self {
        Self {
            x: p.market.spot.ln(),
            v: p.heston.v0,
            rho: p.heston.rho,
        }
    }
}

/// Per-step constants shared by every path.
#[derive(Debug, Clone, Copy)]
struct Stepper<T> {
    dt: T,
    sqrt_dt: T,
    mu: T,
    beta: T,
    v_bar: T,
    alpha: T,
    gamma: T,
    rho_bar: T,
    epsilon: T,
    rho_cs: T,
    rho_cs_perp: T,
    rho_max: T,
}

impl<T: Scalar> Stepper<T> {
    fn new(p: &SvscParams<T>, dt: T) -> Self {
        Self {
            dt,
            sqrt_dt: dt.sqrt(),
            mu: p.market.drift(),
            beta: p.heston.beta,
            v_bar: p.heston.v_bar,
            alpha: p.heston.alpha,
            gamma: p.gamma,
            rho_bar: p.rho_bar,
            epsilon: p.epsilon,
            rho_cs: p.rho_cs,
            rho_cs_perp: (T::one() - p.rho_cs * p.rho_cs).sqrt(),
            rho_max: T::one() - T::lit(RHO_CLAMP_MARGIN),
        }
    }

    #[inline(always)]
    fn step(&self, s: &PathState<T>, z: [T; 3]) -> (PathState<T>, bool) {
        let vp = s.v.max(T::zero());
        let sv = vp.sqrt() * self.sqrt_dt;
        let rho_perp = (T::one() - s.rho * s.rho).max(T::zero()).sqrt();
        let dw_s = z[0];
        let dw_v = s.rho * z[0] + rho_perp * z[1];
        let dw_r = self.rho_cs * z[0] + self.rho_cs_perp * z[2];
        let x = s.x + (self.mu - T::half() * vp) * self.dt + sv * dw_s;
        let v = s.v + self.beta * (self.v_bar - vp) * self.dt + self.alpha * sv * dw_v;
        let raw = s.rho + self.gamma * (self.rho_bar - s.rho) * self.dt + self.epsilon * rho_perp * sv * dw_r;
        let rho = raw.max(-self.rho_max).min(self.rho_max);
        (PathState { x, v, rho }, rho != raw)
    }
}

/// Advances one path by `dt` given three independent standard normal draws.
///
/// Full-truncation Euler for the variance (the stored variance may go
/// negative; only its positive part enters drift and diffusion) and Euler
/// with a clamp to `[-1 + 1e-9, 1 - 1e-9]` for the correlation. The second
/// return value reports whether the clamp was applied.
pub fn simulate_step<T: Scalar>(
    state: &PathState<T>,
    dt: T,
    normals: [T; 3],
    p: &SvscParams<T>,
) -> (PathState<T>, bool) {
    Stepper::new(p, dt).step(state, normals)
}

/// Something evaluated along each simulated path.
trait Observer<T: Scalar>: Sync {
    type Scratch: Send;
    fn n_outputs(&self) -> usize;
    fn scratch(&self) -> Self::Scratch;
    fn begin(&self, s: &mut Self::Scratch, start: &PathState<T>);
    /// Called after step `k` (1-based) moved the path from `prev` to `next`.
    fn step(&self, s: &mut Self::Scratch, k: usize, prev: &PathState<T>, next: &PathState<T>);
    fn finish(&self, s: &mut Self::Scratch, out: &mut [T]);
}

/// Streaming mean and centred second moment, mergeable in a fixed order.
#[derive(Debug, Clone, Copy)]
struct Moments<T> {
    n: u64,
    mean: T,
    m2: T,
}

impl<T: Scalar> Moments<T> {
    fn new() -> Self {
        Self {
            n: 0,
            mean: T::zero(),
            m2: T::zero(),
        }
    }

    #[inline]
    fn push(&mut self, x: T) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / T::lit(self.n as f64);
        self.m2 += d * (x - self.mean);
    }

    fn merge(&mut self, o: &Self) {
        if o.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *o;
            return;
        }
        let n = self.n + o.n;
        let (na, nb, nn) = (T::lit(self.n as f64), T::lit(o.n as f64), T::lit(n as f64));
        let d = o.mean - self.mean;
        self.mean += d * nb / nn;
        self.m2 += o.m2 + d * d * na * nb / nn;
        self.n = n;
    }

    fn stderr(&self) -> T {
        if self.n < 2 {
            return T::zero();
        }
        let n = T::lit(self.n as f64);
        (self.m2.max(T::zero()) / (n - T::one()) / n).sqrt()
    }
}

struct Block<R> {
    acc: R,
    diag: McDiagnostics,
}

/// Runs every path and hands each unit's outputs to `consume` (the second
/// slice is the antithetic partner, if any). Blocks are returned in block
/// order.
fn run_blocks<T, O, R, M, C>(
    p: &SvscParams<T>,
    cfg: &McConfig,
    horizon: T,
    obs: &O,
    make_acc: M,
    consume: C,
) -> Result<Vec<Block<R>>>
where
    T: Scalar,
    O: Observer<T>,
    R: Send,
    M: Fn() -> R + Sync,
    C: Fn(&mut R, &[T], Option<&[T]>) + Sync,
{
    p.validate()?;
    cfg.validate()?;
    if !(horizon > T::zero()) || !horizon.is_finite() {
        return domain(format!("simulation horizon must be positive, got {horizon}"));
    }
    let dt = horizon / T::lit(cfg.n_steps as f64);
    let stepper = Stepper::new(p, dt);
    let start = PathState::initial(p);
    let units = cfg.units();
    let n_blocks = units.div_ceil(UNITS_PER_BLOCK);
    let n_out = obs.n_outputs();
    let paths_per_unit = if cfg.antithetic { 2 } else { 1 };

    let run_block = |b: usize| -> Block<R> {
        let mut acc = make_acc();
        let mut diag = McDiagnostics::default();
        let mut sa = obs.scratch();
        let mut sb = obs.scratch();
        let mut out_a = vec![T::zero(); n_out];
        let mut out_b = vec![T::zero(); n_out];
        let lo = b * UNITS_PER_BLOCK;
        let hi = (lo + UNITS_PER_BLOCK).min(units);
        for unit in lo..hi {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(unit as u64);
            let mut a = start;
            let mut bb = start;
            obs.begin(&mut sa, &a);
            if cfg.antithetic {
                obs.begin(&mut sb, &bb);
            }
            for k in 1..=cfg.n_steps {
                let z = [
                    T::sample_standard_normal(&mut rng),
                    T::sample_standard_normal(&mut rng),
                    T::sample_standard_normal(&mut rng),
                ];
                let (na, ca) = stepper.step(&a, z);
                obs.step(&mut sa, k, &a, &na);
                a = na;
                diag.rho_clamps += ca as u64;
                if cfg.antithetic {
                    let (nb, cb) = stepper.step(&bb, [-z[0], -z[1], -z[2]]);
                    obs.step(&mut sb, k, &bb, &nb);
                    bb = nb;
                    diag.rho_clamps += cb as u64;
                }
            }
            diag.steps_simulated += (cfg.n_steps * paths_per_unit) as u64;
            obs.finish(&mut sa, &mut out_a);
            if cfg.antithetic {
                obs.finish(&mut sb, &mut out_b);
                consume(&mut acc, &out_a, Some(&out_b));
            } else {
                consume(&mut acc, &out_a, None);
            }
        }
        Block { acc, diag }
    };

    let blocks = match cfg.threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Numerical(format!("thread pool: {e}")))?;
            pool.install(|| (0..n_blocks).into_par_iter().map(run_block).collect())
        }
        None => (0..n_blocks).into_par_iter().map(run_block).collect(),
    };
    Ok(blocks)
}

struct RunSummary<T> {
    moments: Vec<Moments<T>>,
    diag: McDiagnostics,
}

fn run_moments<T: Scalar, O: Observer<T>>(
    p: &SvscParams<T>,
    cfg: &McConfig,
    horizon: T,
    obs: &O,
) -> Result<RunSummary<T>> {
    let n_out = obs.n_outputs();
    let blocks = run_blocks(
        p,
        cfg,
        horizon,
        obs,
        || vec![Moments::new(); n_out],
        |acc: &mut Vec<Moments<T>>, a: &[T], b: Option<&[T]>| match b {
            Some(b) => {
                for ((m, &x), &y) in acc.iter_mut().zip(a).zip(b) {
                    m.push(T::half() * (x + y));
                }
            }
            None => {
                for (m, &x) in acc.iter_mut().zip(a) {
                    m.push(x);
                }
            }
        },
    )?;
    let mut moments = vec![Moments::new(); n_out];
    let mut diag = McDiagnostics::default();
    for b in &blocks {
        for (m, bm) in moments.iter_mut().zip(&b.acc) {
            m.merge(bm);
        }
        diag.steps_simulated += b.diag.steps_simulated;
        diag.rho_clamps += b.diag.rho_clamps;
    }
    Ok(RunSummary { moments, diag })
}

fn step_index<T: Scalar>(t: T, horizon: T, n_steps: usize) -> Result<usize> {
    let exact = t / horizon * T::lit(n_steps as f64);
    let k = exact.round();
    if (exact - k).abs() > T::lit(1e-6) * T::lit(n_steps as f64).max(T::one()) || k < T::one() {
        return domain(format!(
            "expiry {t} does not fall on the time grid ({n_steps} steps over {horizon})"
        ));
    }
    Ok(k.to_usize().unwrap_or(0).min(n_steps))
}

/// Barrier level monitored along the path.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Level<T> {
    ln_barrier: T,
    direction: BarrierDirection,
}

#[derive(Debug, Clone, Copy)]
enum Slot<T> {
    Terminal {
        step: usize,
        payoff: TerminalPayoff<T>,
        df: T,
    },
    Touch {
        level: usize,
        df: T,
    },
    Barrier {
        level: usize,
        vanilla: Vanilla<T>,
        style: BarrierStyle,
        df: T,
    },
}

#[derive(Debug, Clone, Copy)]
enum TerminalPayoff<T> {
    Vanilla(Vanilla<T>),
    Digital(EuropeanDigital<T>),
}

impl<T: Scalar> TerminalPayoff<T> {
    #[inline]
    fn eval(&self, s: T) -> T {
        match self {
            TerminalPayoff::Vanilla(v) => v.payoff(s),
            TerminalPayoff::Digital(d) => d.payoff(s),
        }
    }
}

struct BookObserver<T> {
    slots: Vec<Slot<T>>,
    levels: Vec<Level<T>>,
    /// Step indices at which terminal payoffs are read, ascending.
    checkpoints: Vec<usize>,
    n_steps: usize,
    bridge: bool,
    /// `2 / dt`, scaled by `1 / v` per step for the crossing probability.
    two_over_dt: T,
}

struct BookScratch<T> {
    /// Probability that the path has not touched each level.
    survival: Vec<T>,
    /// Log-spot at each checkpoint.
    x_at: Vec<T>,
    next_checkpoint: usize,
    x_end: T,
}

/// Exponent above which the bridge crossing probability is ignored.
const BRIDGE_CUTOFF: f64 = 40.0;

impl<T: Scalar> Observer<T> for BookObserver<T> {
    type Scratch = BookScratch<T>;

    fn n_outputs(&self) -> usize {
        self.slots.len()
    }

    fn scratch(&self) -> BookScratch<T> {
        BookScratch {
            survival: vec![T::one(); self.levels.len()],
            x_at: vec![T::zero(); self.checkpoints.len()],
            next_checkpoint: 0,
            x_end: T::zero(),
        }
    }

    fn begin(&self, s: &mut BookScratch<T>, start: &PathState<T>) {
        for (sv, l) in s.survival.iter_mut().zip(&self.levels) {
            *sv = if touched(l, start.x) { T::zero() } else { T::one() };
        }
        s.next_checkpoint = 0;
    }

    #[inline]
    fn step(&self, s: &mut BookScratch<T>, k: usize, prev: &PathState<T>, next: &PathState<T>) {
        let vp = prev.v.max(T::zero());
        for (sv, l) in s.survival.iter_mut().zip(&self.levels) {
            if *sv == T::zero() {
                continue;
            }
            if touched(l, next.x) {
                *sv = T::zero();
            } else if self.bridge && vp > T::zero() {
                let a = prev.x - l.ln_barrier;
                let b = next.x - l.ln_barrier;
                let e = self.two_over_dt * a * b / vp;
                if e < T::lit(BRIDGE_CUTOFF) {
                    *sv *= T::one() - (-e).exp();
                }
            }
        }
        if s.next_checkpoint < self.checkpoints.len() && self.checkpoints[s.next_checkpoint] == k {
            s.x_at[s.next_checkpoint] = next.x;
            s.next_checkpoint += 1;
        }
        if k == self.n_steps {
            s.x_end = next.x;
        }
    }

    fn finish(&self, s: &mut BookScratch<T>, out: &mut [T]) {
        let spot_end = s.x_end.exp();
        for (o, slot) in out.iter_mut().zip(&self.slots) {
            *o = match slot {
                Slot::Terminal { step, payoff, df } => {
                    let idx = self.checkpoints.binary_search(step).unwrap_or(0);
                    *df * payoff.eval(s.x_at[idx].exp())
                }
                Slot::Touch { level, df } => *df * (T::one() - s.survival[*level]),
                Slot::Barrier {
                    level,
                    vanilla,
                    style,
                    df,
                } => {
                    let alive = s.survival[*level];
                    let weight = match style {
                        BarrierStyle::KnockOut => alive,
                        BarrierStyle::KnockIn => T::one() - alive,
                    };
                    *df * vanilla.payoff(spot_end) * weight
                }
            };
        }
    }
}

#[inline(always)]
fn touched<T: Scalar>(l: &Level<T>, x: T) -> bool {
    match l.direction {
        BarrierDirection::Down => x <= l.ln_barrier,
        BarrierDirection::Up => x >= l.ln_barrier,
    }
}

fn level_index<T: Scalar>(levels: &mut Vec<Level<T>>, barrier: T, direction: BarrierDirection) -> usize {
    let l = Level {
        ln_barrier: barrier.ln(),
        direction,
    };
    if let Some(i) = levels.iter().position(|x| *x == l) {
        return i;
    }
    levels.push(l);
    levels.len() - 1
}

/// Prices of a book from one simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BookResult<T> {
    pub results: Vec<PricingResult<T>>,
    pub diagnostics: McDiagnostics,
}

/// Prices every instrument of `book` on one set of paths (common random
/// numbers).
///
/// Vanillas and digitals may expire at any grid date up to `horizon`;
/// one touches and barriers must expire at `horizon`.
pub fn price_book<T: Scalar>(
    p: &SvscParams<T>,
    cfg: &McConfig,
    horizon: T,
    book: &[Instrument<T>],
) -> Result<BookResult<T>> {
    cfg.validate()?;
    let mut levels = Vec::new();
    let mut slots = Vec::with_capacity(book.len());
    let mut checkpoints = Vec::new();
    let at_horizon = |t: T| (t - horizon).abs() <= T::lit(1e-9) * horizon.max(T::one());
    for inst in book {
        let df = p.market.discount(inst.expiry());
        let slot = match inst {
            Instrument::Vanilla(v) => {
                v.validate()?;
                let step = step_index(v.expiry, horizon, cfg.n_steps)?;
                checkpoints.push(step);
                Slot::Terminal {
                    step,
                    payoff: TerminalPayoff::Vanilla(*v),
                    df,
                }
            }
            Instrument::Digital(d) => {
                EuropeanDigital::new(d.strike, d.expiry, d.kind)?;
                let step = step_index(d.expiry, horizon, cfg.n_steps)?;
                checkpoints.push(step);
                Slot::Terminal {
                    step,
                    payoff: TerminalPayoff::Digital(*d),
                    df,
                }
            }
            Instrument::OneTouch(o) => {
                OneTouch::new(o.barrier, o.expiry, o.direction)?;
                if !at_horizon(o.expiry) {
                    return domain("one touches must expire at the simulation horizon");
                }
                Slot::Touch {
                    level: level_index(&mut levels, o.barrier, o.direction),
                    df,
                }
            }
            Instrument::Barrier(b) => {
                b.validate()?;
                if !at_horizon(b.underlying.expiry) {
                    return domain("barrier options must expire at the simulation horizon");
                }
                Slot::Barrier {
                    level: level_index(&mut levels, b.barrier, b.direction),
                    vanilla: b.underlying,
                    style: b.style,
                    df,
                }
            }
        };
        slots.push(slot);
    }
    checkpoints.sort_unstable();
    checkpoints.dedup();
    let dt = horizon / T::lit(cfg.n_steps as f64);
    let obs = BookObserver {
        slots,
        levels,
        checkpoints,
        n_steps: cfg.n_steps,
        bridge: cfg.bridge_correction,
        two_over_dt: T::two() / dt,
    };
    let summary = run_moments(p, cfg, horizon, &obs)?;
    let results = summary
        .moments
        .iter()
        .map(|m| PricingResult {
            price: m.mean,
            stderr: m.stderr(),
            n_paths: cfg.simulated_paths(),
            n_steps: cfg.n_steps,
            seed: cfg.seed,
        })
        .collect();
    Ok(BookResult {
        results,
        diagnostics: summary.diag,
    })
}

fn price_single<T: Scalar>(p: &SvscParams<T>, cfg: &McConfig, inst: Instrument<T>) -> Result<PricingResult<T>> {
    Ok(price_book(p, cfg, inst.expiry(), &[inst])?.results[0])
}

pub fn price_vanilla_mc<T: Scalar>(p: &SvscParams<T>, cfg: &McConfig, opt: &Vanilla<T>) -> Result<PricingResult<T>> {
    price_single(p, cfg, Instrument::Vanilla(*opt))
}

pub fn price_digital_mc<T: Scalar>(
    p: &SvscParams<T>,
    cfg: &McConfig,
    dig: &EuropeanDigital<T>,
) -> Result<PricingResult<T>> {
    price_single(p, cfg, Instrument::Digital(*dig))
}

pub fn price_one_touch_mc<T: Scalar>(p: &SvscParams<T>, cfg: &McConfig, ot: &OneTouch<T>) -> Result<PricingResult<T>> {
    price_single(p, cfg, Instrument::OneTouch(*ot))
}

pub fn price_barrier_mc<T: Scalar>(
    p: &SvscParams<T>,
    cfg: &McConfig,
    opt: &BarrierOption<T>,
) -> Result<PricingResult<T>> {
    price_single(p, cfg, Instrument::Barrier(*opt))
}

struct ForwardObserver<T> {
    scale: T,
}

impl<T: Scalar> Observer<T> for ForwardObserver<T> {
    type Scratch = T;
    fn n_outputs(&self) -> usize {
        1
    }
    fn scratch(&self) -> T {
        T::zero()
    }
    fn begin(&self, s: &mut T, start: &PathState<T>) {
        *s = start.x;
    }
    #[inline]
    fn step(&self, s: &mut T, _k: usize, _prev: &PathState<T>, next: &PathState<T>) {
        *s = next.x;
    }
    fn finish(&self, s: &mut T, out: &mut [T]) {
        out[0] = s.exp() * self.scale;
    }
}

/// Estimates `E[S_T] e^{-mu T} / S_0`, which is 1 for an unbiased scheme.
pub fn martingale_ratio<T: Scalar>(p: &SvscParams<T>, cfg: &McConfig, horizon: T) -> Result<PricingResult<T>> {
    let obs = ForwardObserver {
        scale: T::one() / p.market.forward(horizon),
    };
    let s = run_moments(p, cfg, horizon, &obs)?;
    Ok(PricingResult {
        price: s.moments[0].mean,
        stderr: s.moments[0].stderr(),
        n_paths: cfg.simulated_paths(),
        n_steps: cfg.n_steps,
        seed: cfg.seed,
    })
}

/// One point of a Monte Carlo implied-volatility smile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmilePoint<T> {
    pub strike: T,
    /// `None` when the price falls outside the no-arbitrage bounds.
    pub vol: Option<T>,
    /// Price standard error divided by Black-Scholes vega.
    pub vol_stderr: T,
    pub price: PricingResult<T>,
    pub kind: OptionKind,
}

fn otm_kind<T: Scalar>(strike: T, fwd: T) -> OptionKind {
    if strike >= fwd {
        OptionKind::Call
    } else {
        OptionKind::Put
    }
}

fn smile_point<T: Scalar>(mkt: &Market<T>, opt: &Vanilla<T>, price: PricingResult<T>) -> SmilePoint<T> {
    let bsm = mkt.with_vol(T::one());
    let vol = bs::implied_vol(price.price, &bsm, opt).ok();
    let vol_stderr = vol
        .and_then(|v| bs::vega(&mkt.with_vol(v), opt).ok())
        .filter(|vega| *vega > T::zero())
        .map(|vega| price.stderr / vega)
        .unwrap_or_else(T::infinity);
    SmilePoint {
        strike: opt.strike,
        vol,
        vol_stderr,
        price,
        kind: opt.kind,
    }
}

/// Implied volatilities of out-of-the-money vanillas priced on one set of
/// paths.
pub fn svsc_smile<T: Scalar>(
    p: &SvscParams<T>,
    cfg: &McConfig,
    strikes: &[T],
    expiry: T,
) -> Result<Vec<SmilePoint<T>>> {
    let fwd = p.market.forward(expiry);
    let mut book = Vec::with_capacity(strikes.len());
    for &k in strikes {
        if !(k > T::zero()) {
            return domain(format!("strike must be positive, got {k}"));
        }
        book.push(Instrument::Vanilla(Vanilla::new(k, expiry, otm_kind(k, fwd))?));
    }
    let res = price_book(p, cfg, expiry, &book)?;
    Ok(book
        .iter()
        .zip(res.results)
        .map(|(inst, r)| match inst {
            Instrument::Vanilla(v) => smile_point(&p.market, v, r),
            _ => unreachable!(),
        })
        .collect())
}

/// Log-spot samples at a set of dates, kept so that options at arbitrary
/// strikes can be priced afterwards on common paths.
#[derive(Debug, Clone, PartialEq)]
pub struct TerminalSamples<T> {
    pub times: Vec<T>,
    /// `log_spots[j]` holds one sample per simulated path at `times[j]`.
    /// With antithetic sampling, paths `2i` and `2i+1` form a pair.
    pub log_spots: Vec<Vec<T>>,
    pub antithetic: bool,
    pub market: Market<T>,
    pub n_steps: usize,
    pub seed: u64,
}

struct SampleObserver {
    checkpoints: Vec<usize>,
}

impl<T: Scalar> Observer<T> for SampleObserver {
    type Scratch = (Vec<T>, usize);
    fn n_outputs(&self) -> usize {
        self.checkpoints.len()
    }
    fn scratch(&self) -> (Vec<T>, usize) {
        (vec![T::zero(); self.checkpoints.len()], 0)
    }
    fn begin(&self, s: &mut (Vec<T>, usize), _start: &PathState<T>) {
        s.1 = 0;
    }
    #[inline]
    fn step(&self, s: &mut (Vec<T>, usize), k: usize, _prev: &PathState<T>, next: &PathState<T>) {
        while s.1 < self.checkpoints.len() && self.checkpoints[s.1] == k {
            s.0[s.1] = next.x;
            s.1 += 1;
        }
    }
    fn finish(&self, s: &mut (Vec<T>, usize), out: &mut [T]) {
        out.copy_from_slice(&s.0);
    }
}

/// Simulates to the last of `times` and stores log-spot at each date.
pub fn terminal_samples<T: Scalar>(p: &SvscParams<T>, cfg: &McConfig, times: &[T]) -> Result<TerminalSamples<T>> {
    cfg.validate()?;
    let horizon = times.iter().copied().fold(T::zero(), |a, b| a.max(b));
    let mut checkpoints = Vec::with_capacity(times.len());
    for w in times.windows(2) {
        if !(w[1] > w[0]) {
            return domain("sample times must be strictly increasing");
        }
    }
    for &t in times {
        checkpoints.push(step_index(t, horizon, cfg.n_steps)?);
    }
    let n = times.len();
    let obs = SampleObserver { checkpoints };
    let blocks = run_blocks(
        p,
        cfg,
        horizon,
        &obs,
        Vec::new,
        |acc: &mut Vec<T>, a: &[T], b: Option<&[T]>| {
            acc.extend_from_slice(a);
            if let Some(b) = b {
                acc.extend_from_slice(b);
            }
        },
    )?
    .into_iter()
    .map(|b| b.acc);
    let units = cfg.units();
    let paths = if cfg.antithetic { 2 * units } else { units };
    let mut log_spots = vec![Vec::with_capacity(paths); n];
    for b in blocks {
        for row in b.chunks_exact(n) {
            for (j, &x) in row.iter().enumerate() {
                log_spots[j].push(x);
            }
        }
    }
    Ok(TerminalSamples {
        times: times.to_vec(),
        log_spots,
        antithetic: cfg.antithetic,
        market: p.market,
        n_steps: cfg.n_steps,
        seed: cfg.seed,
    })
}

impl<T: Scalar> TerminalSamples<T> {
    pub fn n_paths(&self) -> usize {
        self.log_spots.first().map_or(0, |v| v.len())
    }

    fn index_of(&self, t: T) -> Result<usize> {
        self.times
            .iter()
            .position(|&s| (s - t).abs() <= T::lit(1e-12) * t.max(T::one()))
            .ok_or_else(|| Error::Domain(format!("no samples stored at t={t}")))
    }

    /// Monte Carlo price of a vanilla expiring at one of the stored dates.
    pub fn vanilla_price(&self, opt: &Vanilla<T>) -> Result<PricingResult<T>> {
        opt.validate()?;
        let j = self.index_of(opt.expiry)?;
        let df = self.market.discount(opt.expiry);
        let xs = &self.log_spots[j];
        let mut m = Moments::new();
        if self.antithetic {
            for pair in xs.chunks_exact(2) {
                m.push(df * T::half() * (opt.payoff(pair[0].exp()) + opt.payoff(pair[1].exp())));
            }
        } else {
            for &x in xs {
                m.push(df * opt.payoff(x.exp()));
            }
        }
        Ok(PricingResult {
            price: m.mean,
            stderr: m.stderr(),
            n_paths: xs.len(),
            n_steps: self.n_steps,
            seed: self.seed,
        })
    }

    /// Out-of-the-money implied volatility at `strike`.
    pub fn implied_vol(&self, strike: T, expiry: T) -> Result<SmilePoint<T>> {
        let kind = otm_kind(strike, self.market.forward(expiry));
        let opt = Vanilla::new(strike, expiry, kind)?;
        let price = self.vanilla_price(&opt)?;
        Ok(smile_point(&self.market, &opt, price))
    }
}

/// Bucketed distribution of the first touch time of a barrier together with
/// the mean correlation at the touch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirstTouchDistribution<T> {
    pub bucket_edges: Vec<T>,
    /// Probability of first touching inside each bucket.
    pub probability: Vec<T>,
    pub probability_stderr: Vec<T>,
    /// Mean correlation at the touch conditional on touching in the bucket;
    /// `None` for buckets with no touches.
    pub conditional_rho: Vec<Option<T>>,
    pub conditional_rho_stderr: Vec<T>,
    /// Probability of touching before expiry.
    pub total: T,
}

struct FirstTouchObserver<T> {
    level: Level<T>,
    n_steps: usize,
    n_buckets: usize,
    bridge: bool,
    two_over_dt: T,
}

impl<T: Scalar> FirstTouchObserver<T> {
    fn bucket(&self, k: usize) -> usize {
        (((2 * k - 1) * self.n_buckets) / (2 * self.n_steps)).min(self.n_buckets - 1)
    }
}

impl<T: Scalar> Observer<T> for FirstTouchObserver<T> {
    /// (survival, per-bucket outputs)
    type Scratch = (T, Vec<T>);
    fn n_outputs(&self) -> usize {
        3 * self.n_buckets
    }
    fn scratch(&self) -> (T, Vec<T>) {
        (T::one(), vec![T::zero(); 3 * self.n_buckets])
    }
    fn begin(&self, s: &mut (T, Vec<T>), start: &PathState<T>) {
        s.1.iter_mut().for_each(|x| *x = T::zero());
        if touched(&self.level, start.x) {
            s.0 = T::zero();
            s.1[0] = T::one();
            s.1[1] = start.rho;
            s.1[2] = start.rho * start.rho;
        } else {
            s.0 = T::one();
        }
    }
    #[inline]
    fn step(&self, s: &mut (T, Vec<T>), k: usize, prev: &PathState<T>, next: &PathState<T>) {
        if s.0 == T::zero() {
            return;
        }
        let (w, rho) = if touched(&self.level, next.x) {
            let w = s.0;
            s.0 = T::zero();
            (w, next.rho)
        } else if self.bridge && prev.v > T::zero() {
            let a = prev.x - self.level.ln_barrier;
            let b = next.x - self.level.ln_barrier;
            let e = self.two_over_dt * a * b / prev.v;
            if e >= T::lit(BRIDGE_CUTOFF) {
                return;
            }
            let pc = (-e).exp();
            let w = s.0 * pc;
            s.0 *= T::one() - pc;
            (w, T::half() * (prev.rho + next.rho))
        } else {
            return;
        };
        let b = self.bucket(k);
        s.1[3 * b] += w;
        s.1[3 * b + 1] += w * rho;
        s.1[3 * b + 2] += w * rho * rho;
    }
    fn finish(&self, s: &mut (T, Vec<T>), out: &mut [T]) {
        out.copy_from_slice(&s.1);
    }
}

/// First-touch time distribution of `barrier` over `[0, expiry]` in
/// `n_buckets` equal buckets.
pub fn first_touch_distribution_mc<T: Scalar>(
    p: &SvscParams<T>,
    cfg: &McConfig,
    barrier: T,
    expiry: T,
    n_buckets: usize,
) -> Result<FirstTouchDistribution<T>> {
    if n_buckets == 0 {
        return domain("n_buckets must be at least 1");
    }
    if !(barrier > T::zero()) {
        return domain("barrier must be positive");
    }
    cfg.validate()?;
    let direction = BarrierDirection::from_levels(p.market.spot, barrier);
    let dt = expiry / T::lit(cfg.n_steps as f64);
    let obs = FirstTouchObserver {
        level: Level {
            ln_barrier: barrier.ln(),
            direction,
        },
        n_steps: cfg.n_steps,
        n_buckets,
        bridge: cfg.bridge_correction,
        two_over_dt: T::two() / dt,
    };
    let s = run_moments(p, cfg, expiry, &obs)?;
    let n_paths = T::lit(cfg.simulated_paths() as f64);
    let mut probability = Vec::with_capacity(n_buckets);
    let mut probability_stderr = Vec::with_capacity(n_buckets);
    let mut conditional_rho = Vec::with_capacity(n_buckets);
    let mut conditional_rho_stderr = Vec::with_capacity(n_buckets);
    let mut total = T::zero();
    for b in 0..n_buckets {
        let pm = &s.moments[3 * b];
        let prob = pm.mean;
        total += prob;
        probability.push(prob);
        probability_stderr.push(pm.stderr());
        if prob > T::zero() {
            let mean = s.moments[3 * b + 1].mean / prob;
            let second = s.moments[3 * b + 2].mean / prob;
            let var = (second - mean * mean).max(T::zero());
            let effective = (prob * n_paths).max(T::one());
            conditional_rho.push(Some(mean));
            conditional_rho_stderr.push((var / effective).sqrt());
        } else {
            conditional_rho.push(None);
            conditional_rho_stderr.push(T::zero());
        }
    }
    let bucket_edges = (0..=n_buckets)
        .map(|i| expiry * T::lit(i as f64) / T::lit(n_buckets as f64))
        .collect();
    Ok(FirstTouchDistribution {
        bucket_edges,
        probability,
        probability_stderr,
        conditional_rho,
        conditional_rho_stderr,
        total,
    })
}
