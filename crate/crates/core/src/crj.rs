//! Coalescing random jumps (CRJ) and the variational lower bound built on it.
//!
//! Particles sit at the sites of `S ⊆ {1..n}` plus a permanent particle at 0.
//! A particle at `i` dies at rate `p^D`, `D` the distance to the nearest
//! lower alive particle. `L(S)` is the site of the last particle of `S` to
//! die, and the test function is `g(x) = P(L(S_x) > n/2)` with `g(0) = 0`.

use std::collections::HashMap;

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{check_density, stationary_vector};
use crate::rng::{exp_time, mix, stream_rng, SimRng};
use crate::spectral::{self, build_generator, TestFunction};
use crate::stats::{log_add_exp, MeanEstimate};

/// Largest site set handled by the exact subset recursion.
pub const EXACT_MAX_SET: usize = 20;
/// Largest chain for which the full `g` table is computed exactly.
pub const EXACT_MAX_CHAIN: usize = 20;

/// Sites `S ⊆ {1..n}`, kept sorted and distinct.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SiteSet {
    n: usize,
    sites: Vec<usize>,
}

impl SiteSet {
    pub fn new(n: usize, sites: impl IntoIterator<Item = usize>) -> Result<Self> {
        let mut sites: Vec<usize> = sites.into_iter().collect();
        sites.sort_unstable();
        sites.dedup();
        if let Some(&s) = sites.iter().find(|&&s| s == 0 || s > n) {
            return Err(Error::SiteOutOfRange { site: s, n });
        }
        Ok(SiteSet { n, sites })
    }

    /// Default chain length `floor(1/p)`.
    pub fn default_n(p: f64) -> usize {
        (1.0 / p).floor() as usize
    }

    /// Set of occupied sites `1..=n` encoded in the low `n` bits of `mask`
    /// (bit `k - 1` for site `k`).
    pub fn from_mask(n: usize, mask: u64) -> Self {
        SiteSet { n, sites: (1..=n).filter(|k| (mask >> (k - 1)) & 1 == 1).collect() }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn sites(&self) -> &[usize] {
        &self.sites
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn contains(&self, site: usize) -> bool {
        self.sites.binary_search(&site).is_ok()
    }

    pub fn without(&self, site: usize) -> Self {
        SiteSet { n: self.n, sites: self.sites.iter().copied().filter(|&s| s != site).collect() }
    }

    pub fn with(&self, site: usize) -> Result<Self> {
        SiteSet::new(self.n, self.sites.iter().copied().chain([site]))
    }
}

/// Last-to-die site and the death order with death times.
#[derive(Debug, Clone, PartialEq)]
pub struct CrjOutcome {
    pub last: usize,
    pub deaths: Vec<(usize, f64)>,
}

/// Gaps to the nearest lower alive site (the origin counts).
fn gaps(alive: &[usize]) -> Vec<usize> {
    let mut lower = 0usize;
    alive
        .iter()
        .map(|&site| {
            let d = site - lower;
            lower = site;
            d
        })
        .collect()
}

/// Death rates divided by the largest one, `p^(d - dmin)`, and `dmin`.
/// Scaling keeps the race well defined when `p^d` underflows.
fn relative_rates(alive: &[usize], p: f64) -> (Vec<f64>, usize) {
    let d = gaps(alive);
    let dmin = d.iter().copied().min().unwrap_or(0);
    (d.iter().map(|&x| p.powi((x - dmin) as i32)).collect(), dmin)
}

/// Exact race simulation of the CRJ process started from `S`.
pub fn crj_simulate<R: Rng + ?Sized>(s: &SiteSet, p: f64, rng: &mut R) -> Result<CrjOutcome> {
    check_density(p)?;
    if s.is_empty() {
        return Err(Error::param("S", "{}", "non-empty site set"));
    }
    let mut alive = s.sites.clone();
    let mut clock = 0.0;
    let mut deaths = Vec::with_capacity(alive.len());
    while !alive.is_empty() {
        let (rates, dmin) = relative_rates(&alive, p);
        let total: f64 = rates.iter().sum();
        let unit: f64 = exp_time(rng, 1.0);
        clock += (unit.ln() - total.ln() - dmin as f64 * p.ln()).exp();
        let mut u = rng.gen::<f64>() * total;
        let mut pick = rates.len() - 1;
        for (k, r) in rates.iter().enumerate() {
            if u < *r {
                pick = k;
                break;
            }
            u -= r;
        }
        deaths.push((alive.remove(pick), clock));
    }
    let last = deaths.last().expect("non-empty").0;
    Ok(CrjOutcome { last, deaths })
}

/// Exact distribution of `L(S)` as `(site, probability)` pairs in site order.
pub fn crj_last_distribution(s: &SiteSet, p: f64) -> Result<Vec<(usize, f64)>> {
    check_density(p)?;
    let k = s.len();
    if k > EXACT_MAX_SET {
        return Err(Error::SubsetTooLarge { size: k, max: EXACT_MAX_SET });
    }
    if k == 0 {
        return Ok(Vec::new());
    }
    // dist[A] = distribution of the last survivor among alive set A, stored
    // as a vector over positions of S.
    let full = (1usize << k) - 1;
    let mut dist: Vec<Vec<f64>> = vec![Vec::new(); full + 1];
    for mask in 1..=full {
        let members: Vec<usize> = (0..k).filter(|&j| (mask >> j) & 1 == 1).collect();
        let mut out = vec![0.0; k];
        if members.len() == 1 {
            out[members[0]] = 1.0;
        } else {
            let alive: Vec<usize> = members.iter().map(|&j| s.sites[j]).collect();
            let (rates, _) = relative_rates(&alive, p);
            let total: f64 = rates.iter().sum();
            for (&j, r) in members.iter().zip(&rates) {
                let w = r / total;
                for (o, d) in out.iter_mut().zip(&dist[mask & !(1 << j)]) {
                    *o += w * d;
                }
            }
        }
        dist[mask] = out;
    }
    Ok(s.sites.iter().copied().zip(dist[full].iter().copied()).collect())
}

/// `g(S) = P(L(S) > n/2)` by recursion over the `2^|S|` alive subsets;
/// zero for the empty set.
pub fn crj_exact_g(s: &SiteSet, p: f64) -> Result<f64> {
    check_density(p)?;
    let k = s.len();
    if k > EXACT_MAX_SET {
        return Err(Error::SubsetTooLarge { size: k, max: EXACT_MAX_SET });
    }
    if k == 0 {
        return Ok(0.0);
    }
    let half = s.n as f64 / 2.0;
    let mut f = vec![0.0f64; 1 << k];
    for mask in 1usize..(1 << k) {
        if mask.count_ones() == 1 {
            let j = mask.trailing_zeros() as usize;
            f[mask] = if s.sites[j] as f64 > half { 1.0 } else { 0.0 };
            continue;
        }
        let members: Vec<usize> = (0..k).filter(|&j| (mask >> j) & 1 == 1).collect();
        let alive: Vec<usize> = members.iter().map(|&j| s.sites[j]).collect();
        let (rates, _) = relative_rates(&alive, p);
        let total: f64 = rates.iter().sum();
        let acc: f64 = members.iter().zip(&rates).map(|(&j, r)| r * f[mask & !(1 << j)]).sum();
        f[mask] = acc / total;
    }
    Ok(f[(1 << k) - 1])
}

/// `g` for every configuration of the chain `0..=n`, indexed like the
/// generator rows: one recursion over all `2^n` subsets of `{1..n}`.
pub fn g_table(n: usize, p: f64) -> Result<TestFunction> {
    check_density(p)?;
    if n == 0 || n > EXACT_MAX_CHAIN {
        return Err(Error::SubsetTooLarge { size: n, max: EXACT_MAX_CHAIN });
    }
    let half = n as f64 / 2.0;
    let pow: Vec<f64> = (0..=n).map(|d| p.powi(d as i32)).collect();
    let mut f = vec![0.0f64; 1 << n];
    for mask in 1usize..(1 << n) {
        if mask.count_ones() == 1 {
            let site = mask.trailing_zeros() as usize + 1;
            f[mask] = if site as f64 > half { 1.0 } else { 0.0 };
            continue;
        }
        let mut lower = 0usize;
        let mut total = 0.0;
        let mut acc = 0.0;
        let mut rest = mask;
        while rest != 0 {
            let bit = rest.trailing_zeros() as usize;
            rest &= rest - 1;
            let site = bit + 1;
            let r = pow[site - lower];
            lower = site;
            total += r;
            acc += r * f[mask & !(1 << bit)];
        }
        f[mask] = acc / total;
    }
    TestFunction::new(f)
}

/// Monte Carlo estimate of `g(S)` from `reps` independent CRJ runs.
pub fn crj_mc_g(s: &SiteSet, p: f64, reps: usize, seed: u64) -> Result<MeanEstimate> {
    if s.is_empty() {
        return Ok(MeanEstimate { mean: 0.0, se: 0.0, count: reps });
    }
    let half = s.n as f64 / 2.0;
    let hits = (0..reps)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream_rng(seed, r as u64);
            crj_simulate(s, p, &mut rng).map(|o| (o.last as f64 > half) as usize)
        })
        .collect::<Result<Vec<usize>>>()?
        .into_iter()
        .sum();
    Ok(MeanEstimate::proportion(hits, reps))
}

/// Admissible/good classification of a pair `(S, i)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GoodnessVerdict {
    pub admissible: bool,
    pub good: bool,
    /// `(k1, k2)` of the first witness in lexicographic order.
    pub witness: Option<(usize, usize)>,
    pub case: Option<GoodCase>,
    pub a: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GoodCase {
    /// `k2 < 2 k1 - a`: `S` avoids `[k1 - b, k1) ∪ (k2, k2 + b]`, `b = k2 - k1 + a`.
    Isolated,
    /// `k2 >= 2 k1 - a`: `k2 <= (n - a)/2` and `S` avoids `(k2, 2 k2 + a]`.
    NearOrigin,
}

/// `a = ceil(4 log(1/p))`.
pub fn window_a(p: f64) -> usize {
    (4.0 * (1.0 / p).ln()).ceil() as usize
}

/// Exhaustive scan over witness pairs `(k1, k2)` in `S x S`.
///
/// For `i = 1` condition (i) only requires `i ∈ [k1, k2]`.
pub fn goodness_check(s: &SiteSet, i: usize, p: f64) -> Result<GoodnessVerdict> {
    check_density(p)?;
    let a = window_a(p);
    let n = s.n;
    let admissible = s.contains(i) && (i == 1 || s.contains(i - 1));
    let mut verdict = GoodnessVerdict { admissible, good: false, witness: None, case: None, a };
    if !admissible {
        return Ok(verdict);
    }
    // prefix[x] = |S ∩ [1, x)|, clamped queries outside 1..=n.
    let mut prefix = vec![0usize; n + 2];
    for x in 1..=n + 1 {
        prefix[x] = prefix[x - 1] + usize::from(x - 1 >= 1 && s.contains(x - 1));
    }
    // |S ∩ [lo, hi]| with signed, unclamped bounds.
    let count = |lo: i64, hi: i64| -> usize {
        let lo = lo.max(1);
        let hi = hi.min(n as i64);
        if lo > hi {
            0
        } else {
            prefix[hi as usize + 1] - prefix[lo as usize]
        }
    };
    let lo_need = if i == 1 { i } else { i - 1 };
    let ai = a as i64;
    for &k1 in s.sites.iter().filter(|&&k| k <= lo_need) {
        for &k2 in s.sites.iter().filter(|&&k| k >= i) {
            let (k1i, k2i) = (k1 as i64, k2 as i64);
            let case = if k2i < 2 * k1i - ai {
                let b = k2i - k1i + ai;
                let clear = count(k1i - b, k1i - 1) == 0 && count(k2i + 1, k2i + b) == 0;
                clear.then_some(GoodCase::Isolated)
            } else {
                let fits = 2 * k2i + ai <= n as i64;
                let clear = count(k2i + 1, 2 * k2i + ai) == 0;
                (fits && clear).then_some(GoodCase::NearOrigin)
            };
            if let Some(case) = case {
                verdict.good = true;
                verdict.witness = Some((k1, k2));
                verdict.case = Some(case);
                return Ok(verdict);
            }
        }
    }
    Ok(verdict)
}

/// Random `S_i`: contains `i`, `i - 1` when `i > 1`, other sites i.i.d. Bernoulli(p).
pub fn sample_si<R: Rng + ?Sized>(i: usize, p: f64, n: usize, rng: &mut R) -> Result<SiteSet> {
    check_density(p)?;
    if i == 0 || i > n {
        return Err(Error::SiteOutOfRange { site: i, n });
    }
    let sites = (1..=n).filter(|&j| j == i || (i > 1 && j == i - 1) || rng.gen_bool(p));
    SiteSet::new(n, sites.collect::<Vec<_>>())
}

/// `alpha(p)` and `beta(p)` with asymptotic diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundFunctions {
    pub p: f64,
    pub n: usize,
    pub a: usize,
    /// `max { m : 2^m (a+1) <= (n-a)/2 }`, if any.
    pub m0: Option<u32>,
    pub log_alpha: f64,
    pub alpha: f64,
    /// No `m0` exists; `alpha` is reported as the vacuous value 1.
    pub alpha_vacuous: bool,
    pub log_beta: f64,
    pub beta: f64,
    /// `log(alpha) * 2 log 2 / log^2(1/p)`; tends to -1.
    pub norm_alpha_exponent: f64,
    /// `log(beta) / log^2(1/p)`; tends to -2.
    pub norm_beta_exponent: f64,
    /// `a + bbar(m+1) = 2^(m+1)(a+1)` for `bbar(m) = 2^m + a(2^m - 1)`, m <= m0.
    pub recursion_identity_holds: bool,
    /// `E exp(Y/2) 1{Y > y} <= 2 sqrt(P(Y > y))` for exponential Y at sampled y.
    pub exp_moment_bound_holds: bool,
}

pub fn bound_functions(p: f64) -> Result<BoundFunctions> {
    bound_functions_with_n(p, SiteSet::default_n(p))
}

pub fn bound_functions_with_n(p: f64, n: usize) -> Result<BoundFunctions> {
    check_density(p)?;
    let a = window_a(p);
    let ln_p = p.ln();
    let half_room = (n as f64 - a as f64) / 2.0;
    let mut m0 = None;
    let mut m = 0u32;
    while m < 200 && 2f64.powi(m as i32) * (a as f64 + 1.0) <= half_room {
        m0 = Some(m);
        m += 1;
    }
    let ln2 = std::f64::consts::LN_2;
    let (log_alpha, alpha_vacuous) = match m0 {
        Some(m0) => (
            (0..m0).map(|m| (m as f64 + 2.0) * ln2 + (a as f64 + 1.0).ln() + ln_p).sum::<f64>(),
            false,
        ),
        None => (0.0, true),
    };
    // 4 p^(a/2) + 2 p^-1 exp(-p^(1-a)), in log space.
    let log_beta = log_add_exp(4f64.ln() + 0.5 * a as f64 * ln_p, 2f64.ln() - ln_p - ((1.0 - a as f64) * ln_p).exp());
    let l2 = (1.0 / p).ln().powi(2);
    let recursion_identity_holds = (0..=m0.unwrap_or(0)).all(|m| {
        let bbar = |k: u32| 2f64.powi(k as i32) + a as f64 * (2f64.powi(k as i32) - 1.0);
        let lhs = a as f64 + bbar(m + 1);
        let rhs = 2f64.powi(m as i32 + 1) * (a as f64 + 1.0);
        (lhs - rhs).abs() <= 1e-9 * rhs
    });
    let exp_moment_bound_holds = [0.0f64, 0.5, 1.0, 2.0, 5.0].iter().all(|&y| {
        // E exp(Y/2) 1{Y > y} = 2 exp(-y/2) for Y ~ Exp(1); P(Y > y) = exp(-y).
        let lhs = 2.0 * (-y / 2.0).exp();
        lhs <= 2.0 * (-y).exp().sqrt() * (1.0 + 1e-12)
    });
    Ok(BoundFunctions {
        p,
        n,
        a,
        m0,
        log_alpha,
        alpha: log_alpha.exp(),
        alpha_vacuous,
        log_beta,
        beta: log_beta.exp(),
        norm_alpha_exponent: log_alpha * 2.0 * ln2 / l2,
        norm_beta_exponent: log_beta / l2,
        recursion_identity_holds,
        exp_moment_bound_holds,
    })
}

/// Where the test function values come from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GSource {
    Exact,
    MonteCarlo { reps: usize, seed: u64 },
}

/// Variance, Dirichlet form and ratio of the CRJ test function on the chain
/// `0..=n`, with the exact relaxation time when computable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineReport {
    pub n: usize,
    pub p: f64,
    pub var_g: f64,
    pub dirichlet: f64,
    pub ratio: f64,
    pub tau_exact: Option<f64>,
    /// `ratio <= tau_exact + 1e-9`; `None` without an exact `tau`.
    pub certified: Option<bool>,
    /// `pi(g = 0)`.
    pub mass_g_zero: f64,
}

/// Largest chain the pipeline diagonalises exactly.
pub const PIPELINE_EXACT_TAU_MAX_N: usize = 12;

pub fn lower_bound_pipeline(n: usize, p: f64, source: GSource) -> Result<PipelineReport> {
    check_density(p)?;
    let g = match source {
        GSource::Exact => {
            if n > PIPELINE_EXACT_TAU_MAX_N {
                return Err(Error::CapExceeded { what: "n", value: n, cap: PIPELINE_EXACT_TAU_MAX_N });
            }
            g_table(n, p)?
        }
        GSource::MonteCarlo { reps, seed } => {
            if n > EXACT_MAX_CHAIN {
                return Err(Error::CapExceeded { what: "n", value: n, cap: EXACT_MAX_CHAIN });
            }
            let values = (0..1u64 << n)
                .map(|mask| crj_mc_g(&SiteSet::from_mask(n, mask), p, reps, mix(seed, mask)).map(|e| e.mean))
                .collect::<Result<Vec<f64>>>()?;
            TestFunction::new(values)?
        }
    };
    let gen = build_generator(n, p, 1)?;
    let pi = stationary_vector(n, p)?;
    let vr = spectral::variational_ratio(&g, &gen, &pi)?;
    let tau_exact = if n <= PIPELINE_EXACT_TAU_MAX_N {
        Some(spectral::spectral_gap(&gen, &pi)?.tau)
    } else {
        None
    };
    let mass_g_zero = g.values().iter().zip(&pi).filter(|(v, _)| **v == 0.0).map(|(_, w)| w).sum();
    Ok(PipelineReport {
        n,
        p,
        var_g: vr.variance,
        dirichlet: vr.energy,
        ratio: vr.ratio,
        tau_exact,
        certified: tau_exact.map(|t| vr.ratio <= t + 1e-9),
        mass_g_zero,
    })
}

/// Poisson clocks shared by the two coupled CRJ copies, one per
/// (dying site, nearest lower alive site) pair, generated lazily from a
/// per-pair stream.
struct PairClocks {
    seed: u64,
    p: f64,
    clocks: HashMap<(usize, usize), (SimRng, Vec<f64>)>,
}

impl PairClocks {
    fn new(seed: u64, p: f64) -> Self {
        PairClocks { seed, p, clocks: HashMap::new() }
    }

    /// First point of the `(site, lower)` process strictly after `t`.
    fn next_after(&mut self, site: usize, lower: usize, t: f64) -> f64 {
        let rate = self.p.powi((site - lower) as i32);
        let seed = self.seed;
        let (rng, points) = self
            .clocks
            .entry((site, lower))
            .or_insert_with(|| (stream_rng(seed, ((site as u64) << 32) | lower as u64), Vec::new()));
        loop {
            if let Some(&x) = points.iter().find(|&&x| x > t) {
                return x;
            }
            let last = points.last().copied().unwrap_or(0.0);
            let next = last + exp_time(rng, rate);
            if !next.is_finite() {
                return f64::INFINITY;
            }
            points.push(next);
        }
    }
}

fn crj_with_clocks(s: &SiteSet, clocks: &mut PairClocks) -> CrjOutcome {
    let mut alive = s.sites.clone();
    let mut t = 0.0;
    let mut deaths = Vec::with_capacity(alive.len());
    while !alive.is_empty() {
        let mut best = (f64::INFINITY, 0usize);
        let mut lower = 0usize;
        for (k, &site) in alive.iter().enumerate() {
            let when = clocks.next_after(site, lower, t);
            if when < best.0 {
                best = (when, k);
            }
            lower = site;
        }
        t = best.0;
        deaths.push((alive.remove(best.1), t));
    }
    CrjOutcome { last: deaths.last().expect("non-empty").0, deaths }
}

/// Joint outcome of the CRJ copies started from `S` and `S \ {i}`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledCrj {
    pub with_i: CrjOutcome,
    pub without_i: CrjOutcome,
    pub differ: bool,
}

/// Couples the CRJ processes from `S` and `S \ {i}` through shared pair
/// clocks: whenever a particle at `k` coalesces onto `j` in one copy while
/// `j` is also `k`'s nearest lower alive particle in the other, the other
/// copy sees the same death at the same time.
pub fn crj_coupling(s: &SiteSet, i: usize, p: f64, seed: u64) -> Result<CoupledCrj> {
    check_density(p)?;
    let admissible = s.contains(i) && (i == 1 || s.contains(i - 1));
    if !admissible || s.len() < 2 {
        return Err(Error::param("(S, i)", format!("{:?}, {i}", s.sites), "admissible pair with |S| >= 2"));
    }
    if p.powi(s.n() as i32) == 0.0 {
        return Err(Error::param("p", p, "p^n representable as a positive double"));
    }
    let mut clocks = PairClocks::new(seed, p);
    let with_i = crj_with_clocks(s, &mut clocks);
    let without_i = crj_with_clocks(&s.without(i), &mut clocks);
    let differ = with_i.last != without_i.last;
    Ok(CoupledCrj { with_i, without_i, differ })
}

/// Fraction of coupled runs in which the last-to-die sites differ.
pub fn coupling_disagreement(s: &SiteSet, i: usize, p: f64, reps: usize, seed: u64) -> Result<MeanEstimate> {
    let hits = (0..reps)
        .into_par_iter()
        .map(|r| crj_coupling(s, i, p, mix(seed, r as u64)).map(|c| c.differ as usize))
        .collect::<Result<Vec<usize>>>()?
        .into_iter()
        .sum();
    Ok(MeanEstimate::proportion(hits, reps))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(n: usize, sites: &[usize]) -> SiteSet {
        SiteSet::new(n, sites.iter().copied()).unwrap()
    }

    /// Direct transcription of the goodness conditions with set iteration.
    fn brute_good(s: &SiteSet, i: usize, p: f64) -> bool {
        let a = window_a(p) as i64;
        let n = s.n() as i64;
        let admissible = s.contains(i) && (i == 1 || s.contains(i - 1));
        if !admissible {
            return false;
        }
        let members: Vec<i64> = s.sites().iter().map(|&x| x as i64).collect();
        let hits = |lo: i64, hi: i64| members.iter().any(|&x| lo <= x && x <= hi);
        for &k1 in &members {
            for &k2 in &members {
                let i = i as i64;
                let cond_i = k1 <= i && i <= k2 && (i == 1 || (k1 <= i - 1 && i - 1 <= k2));
                if !cond_i {
                    continue;
                }
                if k2 < 2 * k1 - a {
                    let b = k2 - k1 + a;
                    if !hits(k1 - b, k1 - 1) && !hits(k2 + 1, k2 + b) {
                        return true;
                    }
                } else if 2 * k2 <= n - a && !hits(k2 + 1, 2 * k2 + a) {
                    return true;
                }
            }
        }
        false
    }

    #[test]
    fn singleton_and_pair() {
        let mut rng = stream_rng(1, 0);
        let o = crj_simulate(&set(5, &[4]), 0.3, &mut rng).unwrap();
        assert_eq!(o.last, 4);
        assert_eq!(o.deaths.len(), 1);
        let d = crj_last_distribution(&set(2, &[1, 2]), 0.3).unwrap();
        assert!((d[1].1 - 0.5).abs() < 1e-15);
        assert_eq!(crj_exact_g(&set(2, &[1, 2]), 0.3).unwrap(), 0.5);
    }

    #[test]
    fn trace_properties() {
        let mut rng = stream_rng(2, 0);
        for _ in 0..100 {
            let s = sample_si(5, 0.3, 10, &mut rng).unwrap();
            let o = crj_simulate(&s, 0.3, &mut rng).unwrap();
            assert_eq!(o.deaths.len(), s.len());
            assert_eq!(o.deaths.last().unwrap().0, o.last);
            assert!(o.deaths.windows(2).all(|w| w[0].1 < w[1].1));
        }
    }

    #[test]
    fn exact_g_boundary_cases() {
        assert_eq!(crj_exact_g(&set(6, &[]), 0.2).unwrap(), 0.0);
        assert_eq!(crj_exact_g(&set(6, &[4]), 0.2).unwrap(), 1.0);
        assert_eq!(crj_exact_g(&set(6, &[3]), 0.2).unwrap(), 0.0);
        let big = SiteSet::new(30, 1..=21).unwrap();
        assert!(matches!(crj_exact_g(&big, 0.2), Err(Error::SubsetTooLarge { .. })));
    }

    #[test]
    fn table_matches_per_set_recursion() {
        let (n, p) = (9, 0.25);
        let table = g_table(n, p).unwrap();
        for mask in 0..1u64 << n {
            let s = SiteSet::from_mask(n, mask);
            let direct = crj_exact_g(&s, p).unwrap();
            assert!((table.values()[mask as usize] - direct).abs() < 1e-14);
            let dist = crj_last_distribution(&s, p).unwrap();
            let via_dist: f64 = dist.iter().filter(|(site, _)| *site as f64 > n as f64 / 2.0).map(|x| x.1).sum();
            assert!((via_dist - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn shifting_max_element_right_does_not_decrease_g() {
        let (n, p) = (10, 0.3);
        let mut rng = stream_rng(5, 0);
        for _ in 0..300 {
            let size = rng.gen_range(1..=5);
            let mut sites: Vec<usize> = (1..=n).collect();
            for k in (1..sites.len()).rev() {
                sites.swap(k, rng.gen_range(0..=k));
            }
            let s = set(n, &sites[..size]);
            let max = *s.sites().last().unwrap();
            if max == n {
                continue;
            }
            let shifted = s.without(max).with(max + 1).unwrap();
            assert!(crj_exact_g(&shifted, p).unwrap() + 1e-12 >= crj_exact_g(&s, p).unwrap());
        }
    }

    #[test]
    fn goodness_matches_brute_force() {
        let mut rng = stream_rng(9, 0);
        for trial in 0..1000 {
            let p = [0.01, 0.02, 0.05][trial % 3];
            let n = SiteSet::default_n(p);
            let i = rng.gen_range(1..=n);
            let s = if trial % 2 == 0 {
                sample_si(i, p, n, &mut rng).unwrap()
            } else {
                let q = rng.gen_range(0.0..0.2);
                SiteSet::new(n, (1..=n).filter(|_| rng.gen_bool(q)).collect::<Vec<_>>()).unwrap()
            };
            let v = goodness_check(&s, i, p).unwrap();
            assert_eq!(v.good, brute_good(&s, i, p), "S={:?} i={i} p={p}", s.sites());
            assert!(!v.good || v.admissible);
        }
    }

    #[test]
    fn isolated_pair_is_good() {
        let p = 0.001;
        assert_eq!(window_a(p), 28);
        let s = set(1000, &[99, 100]);
        let v = goodness_check(&s, 100, p).unwrap();
        assert!(v.good);
        assert_eq!(v.witness, Some((99, 100)));
        assert_eq!(v.case, Some(GoodCase::Isolated));
        // On n = 200 the witness (99, 100) is the only one; a site inside its
        // right window (100, 129] removes it.
        let lone = set(200, &[99, 100, 160, 175]);
        assert_eq!(goodness_check(&lone, 100, p).unwrap().witness, Some((99, 100)));
        let cluttered = lone.with(120).unwrap();
        assert!(!goodness_check(&cluttered, 100, p).unwrap().good);
    }

    #[test]
    fn not_admissible_when_missing() {
        let v = goodness_check(&set(20, &[3, 7]), 5, 0.05).unwrap();
        assert!(!v.admissible && !v.good);
        let v = goodness_check(&set(20, &[3, 7]), 7, 0.05).unwrap();
        assert!(!v.admissible);
    }

    #[test]
    fn si_always_admissible() {
        let mut rng = stream_rng(4, 0);
        for i in 1..=20 {
            let s = sample_si(i, 0.05, 20, &mut rng).unwrap();
            assert!(goodness_check(&s, i, 0.05).unwrap().admissible);
        }
    }

    #[test]
    fn si_inclusion_frequency() {
        let (p, n, i) = (0.2, 12, 6);
        let reps = 20_000;
        let mut rng = stream_rng(8, 0);
        let mut hits = 0;
        for _ in 0..reps {
            if sample_si(i, p, n, &mut rng).unwrap().contains(10) {
                hits += 1;
            }
        }
        assert!(MeanEstimate::proportion(hits, reps).within(p, 3.0));
    }

    #[test]
    fn bound_function_values() {
        let b = bound_functions(0.05).unwrap();
        assert_eq!((b.n, b.a), (20, 12));
        assert!(b.m0.is_none() && b.alpha_vacuous && b.alpha == 1.0);
        let b = bound_functions(1e-6).unwrap();
        assert_eq!((b.a, b.m0), (56, Some(13)));
        assert!((b.norm_beta_exponent + 2.0).abs() <= 0.5);
        assert!(b.recursion_identity_holds && b.exp_moment_bound_holds);
    }

    #[test]
    fn pipeline_small() {
        let r = lower_bound_pipeline(4, 0.25, GSource::Exact).unwrap();
        assert!(r.var_g > 0.0);
        assert!(r.certified == Some(true));
        assert!(r.mass_g_zero >= 0.75f64.powi(4) - 1e-15);
    }

    #[test]
    fn coupling_diagonal_and_marginal() {
        // S = {1, i}: S \ {i} = {1} always ends at 1, so the copies differ
        // exactly when L(S) = i.
        let (p, i) = (0.3, 2);
        let s = set(4, &[1, i]);
        let exact = crj_last_distribution(&s, p).unwrap()[1].1;
        let est = coupling_disagreement(&s, i, p, 20_000, 3).unwrap();
        assert!(est.within(exact, 3.0), "{est:?} vs {exact}");
        let c = crj_coupling(&s, i, p, 1).unwrap();
        assert_eq!(c.without_i.last, 1);
        assert!(crj_coupling(&set(4, &[1]), 1, p, 1).is_err());
    }

    #[test]
    fn coupling_marginal_matches_dp() {
        let (p, n) = (0.3, 8);
        let s = set(n, &[2, 3, 5, 7]);
        let exact = crj_exact_g(&s, p).unwrap();
        let reps = 20_000;
        let hits = (0..reps)
            .filter(|&r| crj_coupling(&s, 3, p, mix(17, r)).unwrap().with_i.last as f64 > n as f64 / 2.0)
            .count();
        assert!(MeanEstimate::proportion(hits, reps as usize).within(exact, 3.0));
    }
}
