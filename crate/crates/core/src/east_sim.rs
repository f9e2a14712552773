//! Event-driven simulation of the East process.
//!
//! Every occupied site carries a rate-1 pulse clock; a pulse from `i` resets
//! site `i + 1` to occupied with probability `p`. The next event is drawn
//! globally (rate = number of occupied sites) and the firing site uniformly
//! among them.

use std::io::{self, Write};

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::check_density;
use crate::rng::{exp_time, stream_rng, SimRng};
use crate::sites::SiteIndex;
use crate::stats::{linear_fit, MeanEstimate};

/// Sites the process lives on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Lattice {
    /// Sites `0..=n`; pulses from site `n` have no effect.
    Finite(usize),
    /// Sites `0, 1, 2, ...`; occupying a site beyond `cap` is an error.
    HalfLine { cap: usize },
}

impl Lattice {
    fn max_site(self) -> usize {
        match self {
            Lattice::Finite(n) => n,
            Lattice::HalfLine { cap } => cap,
        }
    }
}

/// A state change: `site` became `state` at time `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub t: f64,
    pub site: usize,
    pub state: bool,
}

#[derive(Debug, Clone)]
pub struct EastSim {
    p: f64,
    lattice: Lattice,
    occupied: SiteIndex,
    clock: f64,
    front: usize,
    pending: Option<f64>,
    rng: SimRng,
}

impl EastSim {
    /// Starts from the given occupied sites plus the origin.
    pub fn new(p: f64, lattice: Lattice, sites: impl IntoIterator<Item = usize>, rng: SimRng) -> Result<Self> {
        check_density(p)?;
        if let Lattice::Finite(0) = lattice {
            return Err(Error::param("n", 0, "n >= 1"));
        }
        let mut occupied = SiteIndex::default();
        occupied.insert(0);
        let mut front = 0;
        for s in sites {
            if s > lattice.max_site() {
                return match lattice {
                    Lattice::Finite(n) => Err(Error::SiteOutOfRange { site: s, n }),
                    Lattice::HalfLine { cap } => Err(Error::SiteCapExceeded { cap }),
                };
            }
            occupied.insert(s);
            front = front.max(s);
        }
        Ok(EastSim { p, lattice, occupied, clock: 0.0, front, pending: None, rng })
    }

    /// Finite chain started from Bernoulli(p) on sites `1..=n`.
    pub fn stationary(p: f64, n: usize, mut rng: SimRng) -> Result<Self> {
        check_density(p)?;
        let sites: Vec<usize> = (1..=n).filter(|_| rng.gen_bool(p)).collect();
        EastSim::new(p, Lattice::Finite(n), sites, rng)
    }

    pub fn time(&self) -> f64 {
        self.clock
    }

    /// Running maximum of the rightmost occupied site.
    pub fn front(&self) -> usize {
        self.front
    }

    pub fn is_occupied(&self, site: usize) -> bool {
        self.occupied.contains(site)
    }

    pub fn occupied_sites(&self) -> Vec<usize> {
        self.occupied.sorted()
    }

    /// Runs until time `t`, reporting each state change. The clock ends at
    /// exactly `t`; the next event is kept pending, so stopping and resuming
    /// does not change the law of the path.
    pub fn advance_to(&mut self, t: f64, mut on_change: impl FnMut(Event)) -> Result<()> {
        self.advance_while(t, |e| {
            on_change(e);
            true
        })
        .map(|_| ())
    }

    /// Like [`EastSim::advance_to`], but stops right after the first change
    /// for which `keep_going` returns false. Returns whether it stopped early.
    pub fn advance_while(&mut self, t: f64, mut keep_going: impl FnMut(Event) -> bool) -> Result<bool> {
        loop {
            let next = match self.pending {
                Some(x) => x,
                None => {
                    let x = self.clock + exp_time(&mut self.rng, self.occupied.len() as f64);
                    self.pending = Some(x);
                    x
                }
            };
            if next > t {
                self.clock = self.clock.max(t);
                return Ok(false);
            }
            self.pending = None;
            self.clock = next;
            let from = self.occupied.sample(&mut self.rng);
            let up = self.rng.gen_bool(self.p);
            let target = from + 1;
            if let Lattice::Finite(n) = self.lattice {
                if target > n {
                    continue;
                }
            }
            if up == self.occupied.contains(target) {
                continue;
            }
            if let Lattice::HalfLine { cap } = self.lattice {
                if target > cap {
                    return Err(Error::SiteCapExceeded { cap });
                }
            }
            self.occupied.set(target, up);
            if up {
                self.front = self.front.max(target);
            }
            if !keep_going(Event { t: next, site: target, state: up }) {
                return Ok(true);
            }
        }
    }
}

/// Trajectory up to `horizon` from `init` (the origin is always occupied).
pub fn simulate_east(p: f64, lattice: Lattice, init: &[usize], horizon: f64, seed: u64) -> Result<Vec<Event>> {
    if !(horizon >= 0.0) || !horizon.is_finite() {
        return Err(Error::param("horizon", horizon, "finite horizon >= 0"));
    }
    let mut sim = EastSim::new(p, lattice, init.iter().copied(), stream_rng(seed, 0))?;
    let mut events = Vec::new();
    sim.advance_to(horizon, |e| events.push(e))?;
    Ok(events)
}

/// Writes `t,site,state` rows with 17 significant digits for `t`.
pub fn write_trajectory<W: Write>(events: &[Event], mut out: W) -> io::Result<()> {
    writeln!(out, "t,site,state")?;
    for e in events {
        writeln!(out, "{:.16e},{},{}", e.t, e.site, u8::from(e.state))?;
    }
    Ok(())
}

/// Fraction of `[0, horizon]` each site `1..=n` spends occupied, from a
/// stationary start, averaged over replicas.
pub fn occupation_fractions(p: f64, n: usize, horizon: f64, replicas: usize, seed: u64) -> Result<Vec<MeanEstimate>> {
    if !(horizon > 0.0) {
        return Err(Error::param("horizon", horizon, "horizon > 0"));
    }
    let per_replica = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let mut sim = EastSim::stationary(p, n, stream_rng(seed, r as u64))?;
            let mut since: Vec<f64> = vec![0.0; n + 1];
            let mut total = vec![0.0; n + 1];
            sim.advance_to(horizon, |e| {
                if e.state {
                    since[e.site] = e.t;
                } else {
                    total[e.site] += e.t - since[e.site];
                }
            })?;
            for (s, acc) in total.iter_mut().enumerate().skip(1) {
                if sim.is_occupied(s) {
                    *acc += horizon - since[s];
                }
            }
            Ok(total.into_iter().skip(1).map(|x| x / horizon).collect::<Vec<f64>>())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((0..n)
        .map(|s| MeanEstimate::from_samples(&per_replica.iter().map(|v| v[s]).collect::<Vec<_>>()))
        .collect())
}

/// First times the front of the process started from the origin exceeds
/// `x / p`, per replica and threshold; `None` when censored at the budget.
#[derive(Debug, Clone, PartialEq)]
pub struct FrontStats {
    pub p: f64,
    pub thresholds: Vec<f64>,
    pub time_budget: f64,
    pub hit_times: Vec<Vec<Option<f64>>>,
}

impl FrontStats {
    /// Fraction of replicas whose front passed threshold `k` by time `t`.
    pub fn hit_fraction(&self, k: usize, t: f64) -> MeanEstimate {
        let hits = self.hit_times.iter().filter(|h| h[k].is_some_and(|x| x <= t)).count();
        MeanEstimate::proportion(hits, self.hit_times.len())
    }

    /// Empirical survival `P(not hit by t)`.
    pub fn survival(&self, k: usize, t: f64) -> f64 {
        1.0 - self.hit_fraction(k, t).mean
    }

    /// Sample median hit time, treating censored runs as `+inf`.
    pub fn median_hit(&self, k: usize) -> f64 {
        let mut times: Vec<f64> = self.hit_times.iter().map(|h| h[k].unwrap_or(f64::INFINITY)).collect();
        times.sort_by(f64::total_cmp);
        let m = times.len();
        if m == 0 {
            return f64::NAN;
        }
        if m % 2 == 1 {
            times[m / 2]
        } else {
            0.5 * (times[m / 2 - 1] + times[m / 2])
        }
    }

    pub fn censored(&self, k: usize) -> usize {
        self.hit_times.iter().filter(|h| h[k].is_none()).count()
    }
}

pub fn front_excursion(p: f64, thresholds: &[f64], time_budget: f64, replicas: usize, seed: u64) -> Result<FrontStats> {
    check_density(p)?;
    if thresholds.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
        return Err(Error::param("thresholds", format!("{thresholds:?}"), "finite values >= 0"));
    }
    if !(time_budget > 0.0) {
        return Err(Error::param("time_budget", time_budget, "budget > 0"));
    }
    let mut thresholds = thresholds.to_vec();
    thresholds.sort_by(f64::total_cmp);
    // Site counts strictly above x/p.
    let levels: Vec<usize> = thresholds.iter().map(|x| (x / p).floor() as usize + 1).collect();
    let cap = levels.last().copied().unwrap_or(1) + 1;
    let hit_times = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let mut sim = EastSim::new(p, Lattice::HalfLine { cap }, [], stream_rng(seed, r as u64))?;
            let mut hits: Vec<Option<f64>> = vec![None; levels.len()];
            let mut next = 0;
            if !levels.is_empty() {
                sim.advance_while(time_budget, |e| {
                    while next < levels.len() && e.state && e.site >= levels[next] {
                        hits[next] = Some(e.t);
                        next += 1;
                    }
                    next < levels.len()
                })?;
            }
            Ok(hits)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FrontStats { p, thresholds, time_budget, hit_times })
}

/// Fewest conditioned replicas accepted by [`estimate_tau0`].
pub const MIN_CONDITIONED: usize = 30;

/// Conditional occupation curve `P(X_probe(t) = 1 | X_probe(0) = 1) - p` and
/// its exponential tail rate.
#[derive(Debug, Clone, PartialEq)]
pub struct AutocorrEstimate {
    pub probe: usize,
    pub lags: Vec<f64>,
    pub curve: Vec<MeanEstimate>,
    pub conditioned: usize,
    pub replicas: usize,
    /// Inclusive lag-index range used by the fit.
    pub fit_window: (usize, usize),
    pub tau0: f64,
    pub tau0_se: f64,
}

/// Estimates the single-site relaxation time on the chain `0..=n`.
///
/// Replicas start from Bernoulli(p); those with the probe empty at time 0
/// are discarded. The fit is least squares of `log(estimate)` against lag
/// over the later half of the initial run of positive lags whose estimate
/// exceeds five standard errors.
pub fn estimate_tau0(
    p: f64,
    n: usize,
    probe: Option<usize>,
    lags: &[f64],
    replicas: usize,
    seed: u64,
) -> Result<AutocorrEstimate> {
    check_density(p)?;
    let probe = probe.unwrap_or(n / 2);
    let margin = n.div_ceil(4);
    if probe < margin || n - probe.min(n) < margin || probe > n {
        return Err(Error::param("probe", probe, "site at least n/4 from both ends of the chain"));
    }
    if lags.is_empty() || lags[0] != 0.0 || lags.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::param("lags", format!("{lags:?}"), "strictly increasing lags starting at 0"));
    }
    let runs = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let mut sim = EastSim::stationary(p, n, stream_rng(seed, r as u64))?;
            if !sim.is_occupied(probe) {
                return Ok(None);
            }
            let mut row = Vec::with_capacity(lags.len());
            for &t in lags {
                sim.advance_to(t, |_| {})?;
                row.push(sim.is_occupied(probe));
            }
            Ok(Some(row))
        })
        .collect::<Result<Vec<Option<Vec<bool>>>>>()?;
    let rows: Vec<Vec<bool>> = runs.into_iter().flatten().collect();
    if rows.len() < MIN_CONDITIONED {
        return Err(Error::InsufficientConditioning { got: rows.len(), need: MIN_CONDITIONED });
    }
    let curve: Vec<MeanEstimate> = (0..lags.len())
        .map(|k| {
            let hits = rows.iter().filter(|r| r[k]).count();
            let q = MeanEstimate::proportion(hits, rows.len());
            MeanEstimate { mean: q.mean - p, ..q }
        })
        .collect();
    let run_end = (1..lags.len()).take_while(|&k| curve[k].mean > 5.0 * curve[k].se).last().unwrap_or(0);
    let run_len = run_end;
    let start = 1 + run_len / 2;
    let points = (run_end + 1).saturating_sub(start);
    if run_len == 0 || points < 3 {
        return Err(Error::FitWindowTooShort { points, need: 3 });
    }
    let xs: Vec<f64> = lags[start..=run_end].to_vec();
    let ys: Vec<f64> = curve[start..=run_end].iter().map(|e| e.mean.ln()).collect();
    let (_, slope, slope_se) = linear_fit(&xs, &ys).ok_or(Error::FitWindowTooShort { points, need: 3 })?;
    let tau0 = -1.0 / slope;
    Ok(AutocorrEstimate {
        probe,
        lags: lags.to_vec(),
        curve,
        conditioned: rows.len(),
        replicas,
        fit_window: (start, run_end),
        tau0,
        tau0_se: slope_se / (slope * slope),
    })
}
