//! The wave process: every occupied site `i` fires at rate 1 and replaces
//! sites `i+1..=i+v` by a fresh Bernoulli(p) pattern.
//!
//! Includes the stopping cycle `T ∧ (U+1)` around the rightmost particle, the
//! Monte Carlo ratio `E[M_stop] / M_0` for `M_t = exp(λt - (p/2) R_t)`, the
//! overshoot of chained cycles, and the extension coupling.

use rand::Rng;
use rayon::prelude::*;

use crate::east_sim::Lattice;
use crate::error::{Error, Result};
use crate::model::check_density;
use crate::rng::{exp_time, mix, stream_rng, SimRng};
use crate::stats::MeanEstimate;

/// Default cap on occupied-site positions on the half-line.
pub const DEFAULT_SITE_CAP: usize = 1 << 40;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaveParams {
    pub p: f64,
    pub v: usize,
    pub lambda: f64,
    /// `ceil(5/p)`.
    pub v0: usize,
}

impl WaveParams {
    pub fn new(p: f64, v: usize, lambda: f64) -> Result<Self> {
        check_density(p)?;
        if v == 0 {
            return Err(Error::param("v", v, "v >= 1"));
        }
        if !(lambda > 0.0 && lambda < 1.0) {
            return Err(Error::param("lambda", lambda, "0 < lambda < 1"));
        }
        Ok(WaveParams { p, v, lambda, v0: (5.0 / p).ceil() as usize })
    }

    /// Parameters with the shortest admissible wave, `v = 2 v0`.
    pub fn with_min_length(p: f64, lambda: f64) -> Result<Self> {
        check_density(p)?;
        WaveParams::new(p, 2 * (5.0 / p).ceil() as usize, lambda)
    }

    fn require_long_waves(&self) -> Result<()> {
        if self.v < 2 * self.v0 {
            return Err(Error::param("v", self.v, "v >= 2 ceil(5/p)"));
        }
        Ok(())
    }

    /// `e^(λ-1) / (1-λ)`.
    pub fn supermartingale_bound(&self) -> f64 {
        (self.lambda - 1.0).exp() / (1.0 - self.lambda)
    }
}

/// One wave: fired from `origin` at time `t`, nominal right end `origin + v`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Wave {
    pub t: f64,
    pub origin: usize,
    pub right_end: usize,
    /// Rightmost particle just before and just after the wave.
    pub r_before: usize,
    pub r_after: usize,
}

#[derive(Debug, Clone)]
pub struct WaveSim {
    p: f64,
    v: usize,
    lattice: Lattice,
    /// Occupied sites in increasing order; always starts with 0.
    sites: Vec<usize>,
    clock: f64,
    rng: SimRng,
}

impl WaveSim {
    pub fn new(p: f64, v: usize, lattice: Lattice, init: impl IntoIterator<Item = usize>, rng: SimRng) -> Result<Self> {
        check_density(p)?;
        if v == 0 {
            return Err(Error::param("v", v, "v >= 1"));
        }
        let mut sites: Vec<usize> = std::iter::once(0).chain(init).collect();
        sites.sort_unstable();
        sites.dedup();
        let top = *sites.last().expect("origin");
        match lattice {
            Lattice::Finite(n) if top > n => return Err(Error::SiteOutOfRange { site: top, n }),
            Lattice::HalfLine { cap } if top > cap => return Err(Error::SiteCapExceeded { cap }),
            _ => {}
        }
        Ok(WaveSim { p, v, lattice, sites, clock: 0.0, rng })
    }

    /// Finite chain `0..=n` started from Bernoulli(p).
    pub fn stationary(p: f64, v: usize, n: usize, mut rng: SimRng) -> Result<Self> {
        check_density(p)?;
        let init: Vec<usize> = (1..=n).filter(|_| rng.gen_bool(p)).collect();
        WaveSim::new(p, v, Lattice::Finite(n), init, rng)
    }

    pub fn time(&self) -> f64 {
        self.clock
    }

    pub fn rightmost(&self) -> usize {
        *self.sites.last().expect("origin")
    }

    pub fn sites(&self) -> &[usize] {
        &self.sites
    }

    pub fn is_occupied(&self, site: usize) -> bool {
        self.sites.binary_search(&site).is_ok()
    }

    /// Time of the next wave, without firing it.
    fn draw_next_time(&mut self) -> f64 {
        self.clock + exp_time(&mut self.rng, self.sites.len() as f64)
    }

    /// Fires a wave at time `t` from a uniformly chosen occupied site.
    fn fire_at(&mut self, t: f64) -> Result<Wave> {
        self.clock = t;
        let origin = self.sites[self.rng.gen_range(0..self.sites.len())];
        let right_end = origin + self.v;
        let hi = match self.lattice {
            Lattice::Finite(n) => right_end.min(n),
            Lattice::HalfLine { .. } => right_end,
        };
        let pattern = bernoulli_positions(&mut self.rng, self.p, origin, hi);
        if let (Lattice::HalfLine { cap }, Some(&last)) = (self.lattice, pattern.last()) {
            if last > cap {
                return Err(Error::SiteCapExceeded { cap });
            }
        }
        let r_before = self.rightmost();
        replace_window(&mut self.sites, origin, hi, &pattern);
        Ok(Wave { t, origin, right_end, r_before, r_after: self.rightmost() })
    }

    /// Fires the next wave if it happens by `horizon`; otherwise moves the
    /// clock to `horizon` and returns `None`.
    pub fn step(&mut self, horizon: f64) -> Result<Option<Wave>> {
        let t = self.draw_next_time();
        if t > horizon {
            self.clock = horizon;
            return Ok(None);
        }
        self.fire_at(t).map(Some)
    }

    /// Runs one stopping cycle from the current state; the state is left at
    /// the stopping time so that cycles can be chained.
    pub fn run_stopping_cycle(&mut self, wp: &WaveParams) -> Result<StoppingRecord> {
        let start = self.clock;
        let r0 = self.rightmost();
        let mut u: Option<f64> = None;
        loop {
            let t = self.draw_next_time();
            if let Some(u) = u {
                if t - start > u + 1.0 {
                    self.clock = start + u + 1.0;
                    return Ok(StoppingRecord::new(wp, u, None, u + 1.0, r0, self.rightmost()));
                }
            }
            let w = self.fire_at(t)?;
            let rel = t - start;
            if u.is_none() && (w.origin == r0 || (w.origin < r0 && w.right_end >= r0)) {
                u = Some(rel);
            }
            if w.right_end >= r0 + wp.v0 {
                let u = u.expect("a wave reaching past R0 + v0 covers R0");
                return Ok(StoppingRecord::new(wp, u, Some(rel), rel, r0, self.rightmost()));
            }
        }
    }
}

/// Sites in `(origin, hi]` that receive a particle, by geometric skips.
fn bernoulli_positions<R: Rng + ?Sized>(rng: &mut R, p: f64, origin: usize, hi: usize) -> Vec<usize> {
    let mut out = Vec::new();
    if p >= 1.0 {
        out.extend(origin + 1..=hi);
        return out;
    }
    let log_q = (1.0 - p).ln();
    let mut pos = origin;
    loop {
        let u: f64 = rng.gen();
        let skip = ((1.0 - u).ln() / log_q).floor();
        if !skip.is_finite() || pos as f64 + skip + 1.0 > hi as f64 {
            return out;
        }
        pos += skip as usize + 1;
        out.push(pos);
    }
}

/// Replaces the occupied sites in `(origin, hi]` of the sorted list.
fn replace_window(sites: &mut Vec<usize>, origin: usize, hi: usize, pattern: &[usize]) {
    let lo = sites.partition_point(|&s| s <= origin);
    let up = sites.partition_point(|&s| s <= hi);
    sites.splice(lo..up, pattern.iter().copied());
}

/// Outcome of one `T ∧ (U+1)` cycle, times relative to the cycle start.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StoppingRecord {
    pub u: f64,
    /// `T`, when it happened by `U + 1`.
    pub t: Option<f64>,
    pub stopped_at: f64,
    pub r0: usize,
    pub r_stop: usize,
    /// `M_stop / M_0 = exp(λ stopped_at - (p/2)(R_stop - R_0))`.
    pub m_ratio: f64,
}

impl StoppingRecord {
    fn new(wp: &WaveParams, u: f64, t: Option<f64>, stopped_at: f64, r0: usize, r_stop: usize) -> Self {
        let dr = r_stop as f64 - r0 as f64;
        let m_ratio = (wp.lambda * stopped_at - 0.5 * wp.p * dr).exp();
        StoppingRecord { u, t, stopped_at, r0, r_stop, m_ratio }
    }

    /// `T > U + 1`.
    pub fn t_exceeds(&self) -> bool {
        self.t.is_none()
    }
}

/// Trajectory of waves up to `horizon` from `init`.
pub fn simulate_wave(wp: &WaveParams, lattice: Lattice, init: &[usize], horizon: f64, seed: u64) -> Result<(Vec<Wave>, Vec<usize>)> {
    if !(horizon >= 0.0) || !horizon.is_finite() {
        return Err(Error::param("horizon", horizon, "finite horizon >= 0"));
    }
    let mut sim = WaveSim::new(wp.p, wp.v, lattice, init.iter().copied(), stream_rng(seed, 0))?;
    let mut waves = Vec::new();
    while let Some(w) = sim.step(horizon)? {
        waves.push(w);
    }
    Ok((waves, sim.sites().to_vec()))
}

/// Time-averaged occupation of sites `1..=n` of the finite wave chain from a
/// stationary start, one estimate per site.
pub fn wave_occupation_fractions(p: f64, v: usize, n: usize, horizon: f64, replicas: usize, seed: u64) -> Result<Vec<MeanEstimate>> {
    if !(horizon > 0.0) {
        return Err(Error::param("horizon", horizon, "horizon > 0"));
    }
    let per_replica = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let mut sim = WaveSim::stationary(p, v, n, stream_rng(seed, r as u64))?;
            let mut acc = vec![0.0; n + 1];
            let mut last = 0.0;
            loop {
                let before: Vec<usize> = sim.sites().to_vec();
                let w = sim.step(horizon)?;
                let now = sim.time();
                for s in before {
                    acc[s] += now - last;
                }
                last = now;
                if w.is_none() {
                    break;
                }
            }
            Ok(acc.into_iter().skip(1).map(|x| x / horizon).collect::<Vec<f64>>())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((0..n)
        .map(|s| MeanEstimate::from_samples(&per_replica.iter().map(|v| v[s]).collect::<Vec<_>>()))
        .collect())
}

/// Stress initial configurations for the supermartingale estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StressInit {
    /// Only the origin.
    SingleParticle,
    /// 100 consecutive particles ending at `R0`.
    FrontBlock,
    /// Sites `R0 - v ..= R0 - v + 100` and `R0` occupied.
    Adversarial,
}

impl StressInit {
    pub const ALL: [StressInit; 3] = [StressInit::SingleParticle, StressInit::FrontBlock, StressInit::Adversarial];

    pub fn name(self) -> &'static str {
        match self {
            StressInit::SingleParticle => "single",
            StressInit::FrontBlock => "block",
            StressInit::Adversarial => "adversarial",
        }
    }

    /// Occupied sites (besides the origin) with the front at `r0` and an
    /// extra shift of every site by `shift`.
    pub fn sites(self, v: usize, r0: usize, shift: usize) -> Vec<usize> {
        let base: Vec<usize> = match self {
            StressInit::SingleParticle => Vec::new(),
            StressInit::FrontBlock => (r0.saturating_sub(99).max(1)..=r0).collect(),
            StressInit::Adversarial => {
                let lo = r0.saturating_sub(v).max(1);
                (lo..=(lo + 100).min(r0)).chain([r0]).collect()
            }
        };
        base.into_iter().map(|s| s + shift).collect()
    }
}

/// Front position used for the block and adversarial inits: `4 v`.
pub fn default_stress_front(v: usize) -> usize {
    4 * v
}

/// Per-replica records and the summary estimates of one ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct SupermartingaleReport {
    pub init: StressInit,
    pub records: Vec<StoppingRecord>,
    pub ratio: MeanEstimate,
    pub p_t_exceeds: MeanEstimate,
    pub bound: f64,
}

impl SupermartingaleReport {
    /// `estimate - 3 SE <= bound`.
    pub fn consistent_with_bound(&self) -> bool {
        self.ratio.mean - 3.0 * self.ratio.se <= self.bound
    }

    /// `estimate + 2 SE <= 0.99`.
    pub fn strictly_below(&self) -> bool {
        self.ratio.mean + 2.0 * self.ratio.se <= 0.99
    }
}

/// Monte Carlo estimate of `E[M_{T∧(U+1)}] / M_0` from `init`.
pub fn supermartingale_ratio(wp: &WaveParams, init: StressInit, shift: usize, replicas: usize, seed: u64) -> Result<SupermartingaleReport> {
    wp.require_long_waves()?;
    let sites = init.sites(wp.v, default_stress_front(wp.v), shift);
    let records = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let rng = stream_rng(seed, r as u64);
            let mut sim = WaveSim::new(wp.p, wp.v, Lattice::HalfLine { cap: DEFAULT_SITE_CAP }, sites.iter().copied(), rng)?;
            sim.run_stopping_cycle(wp)
        })
        .collect::<Result<Vec<_>>>()?;
    let ratios: Vec<f64> = records.iter().map(|r| r.m_ratio).collect();
    let exceed = records.iter().filter(|r| r.t_exceeds()).count();
    Ok(SupermartingaleReport {
        init,
        ratio: MeanEstimate::from_samples(&ratios),
        p_t_exceeds: MeanEstimate::proportion(exceed, records.len()),
        bound: wp.supermartingale_bound(),
        records,
    })
}

/// Overshoot `ζ = S_κ - a t` of chained cycles from the single particle, and
/// whether `U <= t1` held in the final cycle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Overshoot {
    pub zeta: f64,
    pub cycles: usize,
    pub u_before_t1: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OvershootReport {
    pub a: f64,
    pub t: f64,
    pub samples: Vec<Overshoot>,
}

impl OvershootReport {
    /// Empirical `P(ζ > 1 + u)`.
    pub fn tail(&self, u: f64) -> MeanEstimate {
        let hits = self.samples.iter().filter(|s| s.zeta > 1.0 + u).count();
        MeanEstimate::proportion(hits, self.samples.len())
    }

    /// `P(ζ > 1 + u) <= e^{-u} + 3 SE`; vacuous without samples.
    pub fn dominated_at(&self, u: f64) -> bool {
        if self.samples.is_empty() {
            return true;
        }
        let e = self.tail(u);
        e.mean <= (-u).exp() + 3.0 * e.se
    }
}

pub fn overshoot_check(wp: &WaveParams, a: f64, t: f64, replicas: usize, seed: u64) -> Result<OvershootReport> {
    if !(a > 0.0 && a < 1.0) {
        return Err(Error::param("a", a, "0 < a < 1"));
    }
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::param("t", t, "finite t > 0"));
    }
    let t0 = a * t;
    let samples = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let rng = stream_rng(seed, r as u64);
            let mut sim = WaveSim::new(wp.p, wp.v, Lattice::HalfLine { cap: DEFAULT_SITE_CAP }, [], rng)?;
            let mut s = 0.0;
            let mut cycles = 0;
            loop {
                let rec = sim.run_stopping_cycle(wp)?;
                cycles += 1;
                if s + rec.stopped_at >= t0 {
                    let t1 = t0 - s;
                    return Ok(Overshoot { zeta: s + rec.stopped_at - t0, cycles, u_before_t1: rec.u <= t1 });
                }
                s += rec.stopped_at;
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(OvershootReport { a, t, samples })
}

/// Gaps `right_end + 1 - R_after` after every wave that covered the
/// rightmost particle, from `init` over `waves` waves.
pub fn regeneration_gaps(wp: &WaveParams, init: &[usize], waves: usize, seed: u64) -> Result<Vec<usize>> {
    let mut sim = WaveSim::new(wp.p, wp.v, Lattice::HalfLine { cap: DEFAULT_SITE_CAP }, init.iter().copied(), stream_rng(seed, 0))?;
    let mut gaps = Vec::new();
    for _ in 0..waves {
        let w = sim.step(f64::INFINITY)?.expect("an occupied origin always fires");
        if w.right_end >= w.r_before {
            gaps.push(w.right_end + 1 - w.r_after);
        }
    }
    Ok(gaps)
}

/// `P(gap = g)` for the geometric(p) law truncated at `v + 1`.
pub fn truncated_geometric_pmf(p: f64, v: usize, g: usize) -> f64 {
    match g {
        0 => 0.0,
        g if g <= v => p * (1.0 - p).powi(g as i32 - 1),
        g if g == v + 1 => (1.0 - p).powi(v as i32),
        _ => 0.0,
    }
}

/// Two coupled copies: `w0` from `x0` and `w1` from an extension `x1`.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingReport {
    pub events: usize,
    /// `(time, sup_{s<=t} r(W0(s)))` after every event.
    pub agreement: Vec<(f64, usize)>,
    pub holds: bool,
    pub first_violation: Option<f64>,
    pub w0: Vec<usize>,
    pub w1: Vec<usize>,
}

/// Runs the extension coupling to `horizon`. Each occupied site of either
/// copy carries one shared rate-1 clock; a ring fires a wave in every copy in
/// which the site is occupied, and both copies use the same per-site
/// Bernoulli draws. With `decoupled` the copy `w0` draws its own pattern,
/// which should break the certificate.
pub fn extension_coupling(
    wp: &WaveParams,
    x0: &[usize],
    x1: &[usize],
    horizon: f64,
    seed: u64,
    decoupled: bool,
) -> Result<CouplingReport> {
    check_density(wp.p)?;
    let norm = |x: &[usize]| {
        let mut s: Vec<usize> = std::iter::once(0).chain(x.iter().copied()).collect();
        s.sort_unstable();
        s.dedup();
        s
    };
    let mut w0 = norm(x0);
    let mut w1 = norm(x1);
    let r0 = *w0.last().expect("origin");
    if let Some(site) = (0..=r0).find(|s| w0.binary_search(s).is_ok() != w1.binary_search(s).is_ok()) {
        return Err(Error::NotAnExtension { site });
    }
    let mut rng = stream_rng(seed, 0);
    let mut side = stream_rng(mix(seed, 1), 0);
    let mut front = r0;
    let mut clock = 0.0;
    let mut agreement = Vec::new();
    let mut first_violation = None;
    loop {
        let union = union_sorted(&w0, &w1);
        clock += exp_time(&mut rng, union.len() as f64);
        if clock > horizon {
            break;
        }
        let origin = union[rng.gen_range(0..union.len())];
        let draws: Vec<bool> = (0..wp.v).map(|_| rng.gen_bool(wp.p)).collect();
        let pattern = |d: &[bool]| -> Vec<usize> {
            d.iter().enumerate().filter(|(_, &b)| b).map(|(k, _)| origin + 1 + k).collect()
        };
        if w1.binary_search(&origin).is_ok() {
            replace_window(&mut w1, origin, origin + wp.v, &pattern(&draws));
        }
        if w0.binary_search(&origin).is_ok() {
            let own: Vec<bool>;
            let d = if decoupled {
                own = (0..wp.v).map(|_| side.gen_bool(wp.p)).collect();
                &own
            } else {
                &draws
            };
            replace_window(&mut w0, origin, origin + wp.v, &pattern(d));
        }
        front = front.max(*w0.last().expect("origin"));
        let agree = w0.iter().copied().take_while(|&s| s <= front).eq(w1.iter().copied().take_while(|&s| s <= front));
        if !agree && first_violation.is_none() {
            first_violation = Some(clock);
        }
        agreement.push((clock, front));
    }
    Ok(CouplingReport {
        events: agreement.len(),
        agreement,
        holds: first_violation.is_none(),
        first_violation,
        w0,
        w1,
    })
}

fn union_sorted(a: &[usize], b: &[usize]) -> Vec<usize> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() || j < b.len() {
        let next = match (a.get(i), b.get(j)) {
            (Some(&x), Some(&y)) if x == y => {
                i += 1;
                j += 1;
                x
            }
            (Some(&x), Some(&y)) if x < y => {
                i += 1;
                x
            }
            (Some(_), Some(&y)) => {
                j += 1;
                y
            }
            (Some(&x), None) => {
                i += 1;
                x
            }
            (None, Some(&y)) => {
                j += 1;
                y
            }
            (None, None) => unreachable!(),
        };
        out.push(next);
    }
    out
}

/// Two-sample comparison of `M` ratios from `init` and from `init` shifted
/// right by `shift`: returns both estimates and whether their difference is
/// within three combined standard errors.
pub fn translation_check(wp: &WaveParams, init: StressInit, shift: usize, replicas: usize, seed: u64) -> Result<(MeanEstimate, MeanEstimate, bool)> {
    let a = supermartingale_ratio(wp, init, 0, replicas, seed)?.ratio;
    let b = supermartingale_ratio(wp, init, shift, replicas, mix(seed, shift as u64))?.ratio;
    let se = (a.se * a.se + b.se * b.se).sqrt();
    Ok((a, b, (a.mean - b.mean).abs() <= 3.0 * se + 1e-12))
}
