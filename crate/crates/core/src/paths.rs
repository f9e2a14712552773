//! Minimum-energy paths of the East process and the comparison constants.
//!
//! Energies here count every occupied site, origin included, so the one-step
//! path from `{0}` to `{0, 1}` has maximum energy 2.

use std::collections::{HashMap, HashSet, VecDeque};

use bitvec::prelude::*;
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{check_density, enumerate_transitions, Configuration, MAX_SITES};
use crate::rng::stream_rng;
use crate::stats::MeanEstimate;

/// Occupancy over sites `0..len`; unlike [`Configuration`] it is not limited
/// to 62 sites.
pub type SiteBits = BitVec<u64, Lsb0>;

/// Default largest `m` for which `3^m` path steps are materialised.
pub const DEFAULT_M_CAP: u32 = 8;

/// Ordered configurations `x^0, ..., x^l` on a fixed site range.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransitionPath {
    steps: Vec<SiteBits>,
    max_energy: usize,
}

impl TransitionPath {
    fn from_steps(steps: Vec<SiteBits>) -> Self {
        let max_energy = steps.iter().map(|s| s.count_ones()).max().unwrap_or(0);
        TransitionPath { steps, max_energy }
    }

    pub fn steps(&self) -> &[SiteBits] {
        &self.steps
    }

    /// Number of steps `l` (configurations minus one).
    pub fn len(&self) -> usize {
        self.steps.len().saturating_sub(1)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn max_energy(&self) -> usize {
        self.max_energy
    }

    pub fn source(&self) -> &SiteBits {
        &self.steps[0]
    }

    pub fn target(&self) -> &SiteBits {
        self.steps.last().expect("non-empty path")
    }

    /// Index of the first step that is neither a hold nor a legal East move.
    pub fn first_illegal_step(&self) -> Option<usize> {
        self.steps.windows(2).position(|w| !(w[0] == w[1] || is_east_move(&w[0], &w[1])))
    }

    /// Every step is a legal East transition or a hold (identical endpoints).
    pub fn is_legal(&self) -> bool {
        self.first_illegal_step().is_none() && self.steps.iter().all(|s| s[0])
    }

    /// Number of moves out of `x`: indices `j < l` with `x^j = x != x^{j+1}`.
    pub fn exits_from(&self, x: &SiteBits) -> usize {
        self.steps.windows(2).filter(|w| &w[0] == x && w[0] != w[1]).count()
    }

    /// One 0/1 string per configuration, site 0 first.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for s in &self.steps {
            out.push_str(&bits_to_string(s));
            out.push('\n');
        }
        out
    }
}

/// `b` differs from `a` at exactly one site `k >= 1`, and `a[k-1]` is occupied.
pub fn is_east_move(a: &SiteBits, b: &SiteBits) -> bool {
    if a.len() != b.len() {
        return false;
    }
    let diff = a.clone() ^ b.clone();
    if diff.count_ones() != 1 {
        return false;
    }
    let k = diff.first_one().expect("one bit");
    k >= 1 && a[k - 1]
}

pub fn bits_to_string(s: &SiteBits) -> String {
    s.iter().map(|b| if *b { '1' } else { '0' }).collect()
}

/// Sites `0..len` with the listed sites occupied (origin always set).
pub fn site_bits(len: usize, sites: &[usize]) -> SiteBits {
    let mut b = bitvec![u64, Lsb0; 0; len];
    b.set(0, true);
    for &s in sites {
        b.set(s, true);
    }
    b
}

/// Path from `{0}` to `{0, 2^m}` on sites `0..=2^m` of length `3^m` and maximum
/// energy `m + 2`.
///
/// Recursion: reach `{0, h}` (`h = 2^(m-1)`), run the same path translated by
/// `h` with `h` held to reach `{0, h, 2h}`, then run the first segment in
/// reverse with `2h` held to clear `h`.
pub fn lm_path(m: u32) -> Result<TransitionPath> {
    lm_path_capped(m, DEFAULT_M_CAP)
}

pub fn lm_path_capped(m: u32, cap: u32) -> Result<TransitionPath> {
    if m > cap {
        return Err(Error::CapExceeded { what: "m", value: m as usize, cap: cap as usize });
    }
    let len = (1usize << m) + 1;
    let offsets = lm_offsets(m);
    let steps = offsets
        .into_iter()
        .map(|occ| {
            let mut b = bitvec![u64, Lsb0; 0; len];
            for s in occ {
                b.set(s, true);
            }
            b
        })
        .collect();
    Ok(TransitionPath::from_steps(steps))
}

/// Occupied-site lists along the `m` path (origin included).
fn lm_offsets(m: u32) -> Vec<Vec<usize>> {
    if m == 0 {
        return vec![vec![0], vec![0, 1]];
    }
    let prev = lm_offsets(m - 1);
    let h = 1usize << (m - 1);
    let mut out: Vec<Vec<usize>> = prev.clone();
    // Translated copy; its own origin lands on h, which is already occupied.
    for occ in prev.iter().skip(1) {
        let mut c = vec![0];
        c.extend(occ.iter().map(|s| s + h));
        out.push(c);
    }
    // Reverse of the first segment with 2h held.
    for occ in prev.iter().rev().skip(1) {
        let mut c = occ.clone();
        c.push(2 * h);
        out.push(c);
    }
    out
}

/// Distinguished path between `w` and `w_prime` on sites `0..=2^m`, length
/// `2 * 3^m`, through `{0, 2^m}`.
///
/// Along the first half, site `i` is occupied when the `m` path occupies it or
/// when `w` had it and the `m` path has not yet reached it. The second half is
/// the same construction for `w_prime`, reversed. A site whose first `m`-path
/// occupation coincides with its retained initial particle produces a hold
/// step (identical consecutive configurations).
pub fn distinguished_path(m: u32, w: &SiteBits, w_prime: &SiteBits) -> Result<TransitionPath> {
    let base = lm_path(m)?;
    let len = (1usize << m) + 1;
    for (name, c) in [("w", w), ("w_prime", w_prime)] {
        if c.len() != len || !c[0] {
            return Err(Error::param(name, bits_to_string(c), "configuration on 0..=2^m with site 0 occupied"));
        }
    }
    let mut steps = half_path(&base, w);
    let mut back = half_path(&base, w_prime);
    back.reverse();
    steps.extend(back.into_iter().skip(1));
    Ok(TransitionPath::from_steps(steps))
}

fn half_path(base: &TransitionPath, w: &SiteBits) -> Vec<SiteBits> {
    let len = w.len();
    let first_hit: Vec<usize> = (0..len)
        .map(|i| base.steps.iter().position(|s| s[i]).unwrap_or(usize::MAX))
        .collect();
    base.steps
        .iter()
        .enumerate()
        .map(|(u, hat)| {
            let mut x = hat.clone();
            for i in 0..len {
                if w[i] && u < first_hit[i] {
                    x.set(i, true);
                }
            }
            x
        })
        .collect()
}

/// Exact energy barrier or a report that it is above the cap.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Barrier {
    Exact(usize),
    ExceedsCap,
}

/// Energy barrier `h(x, x')`: the least `k` such that `x` and `x'` are
/// connected by East moves through configurations of energy at most `k`.
///
/// Breadth-first search over configurations on the sites of `x` (`0..=n`),
/// raising `k` until the target is reached. Frontiers are expanded in numeric
/// order. `budget` caps the number of visited configurations per level.
pub fn h_oracle(
    x: &Configuration,
    x_prime: &Configuration,
    energy_cap: usize,
    budget: usize,
) -> Result<Barrier> {
    if x.n() != x_prime.n() {
        return Err(Error::param("x_prime", x_prime, "configuration on the same site range"));
    }
    let start = x.energy().max(x_prime.energy());
    for k in start..=energy_cap {
        if connected_within(x, x_prime, k, budget)? {
            return Ok(Barrier::Exact(k));
        }
    }
    Ok(Barrier::ExceedsCap)
}

fn connected_within(x: &Configuration, target: &Configuration, k: usize, budget: usize) -> Result<bool> {
    if x == target {
        return Ok(true);
    }
    let mut seen: HashSet<u64> = HashSet::from([x.word()]);
    let mut frontier: Vec<Configuration> = vec![*x];
    while !frontier.is_empty() {
        frontier.sort_unstable_by_key(|c| c.word());
        let mut next = Vec::new();
        for c in &frontier {
            for t in enumerate_transitions(c, 0.5) {
                let y = c.apply_flip(t.site)?;
                if y.energy() > k || !seen.insert(y.word()) {
                    continue;
                }
                if y == *target {
                    return Ok(true);
                }
                if seen.len() > budget {
                    return Err(Error::BudgetExceeded { budget });
                }
                next.push(y);
            }
        }
        frontier = next;
    }
    Ok(false)
}

/// All configurations reachable from `x` through configurations of energy at
/// most `k`, sorted.
pub fn reachable_within(x: &Configuration, k: usize) -> Result<Vec<Configuration>> {
    let mut seen: HashSet<u64> = HashSet::from([x.word()]);
    let mut queue = VecDeque::from([*x]);
    let mut out = vec![*x];
    while let Some(c) = queue.pop_front() {
        for t in enumerate_transitions(&c, 0.5) {
            let y = c.apply_flip(t.site)?;
            if y.energy() <= k && seen.insert(y.word()) {
                out.push(y);
                queue.push_back(y);
            }
        }
    }
    out.sort();
    Ok(out)
}

/// Closed-form constants of the comparison inequality `tau_East <= B L tau_wave`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComparisonConstants {
    pub m: u32,
    pub p: f64,
    /// Path length bound `2 * 3^m`.
    pub l: f64,
    /// Density bound `2^m * 2 * 3^m * p^(-m-2) * (1-p)^(-2^m)` (may be infinite).
    pub b: f64,
    pub log_l: f64,
    pub log_b: f64,
    /// Relaxation-time bound assumed for the wave process.
    pub tau_wave_bound: f64,
    pub log_tau_upper: f64,
    pub tau_upper: f64,
    /// Whether `2^m >= 10/p + 2`.
    pub constraint_holds: bool,
    /// `log(tau_upper) * log 2 / log^2(1/p)`.
    pub normalized_exponent: f64,
}

pub const TAU_WAVE_BOUND: f64 = 10.0 / 3.0;

pub fn comparison_bound(m: u32, p: f64) -> Result<ComparisonConstants> {
    check_density(p)?;
    if m > 1000 {
        return Err(Error::CapExceeded { what: "m", value: m as usize, cap: 1000 });
    }
    let mf = m as f64;
    let ln2 = std::f64::consts::LN_2;
    let log_l = ln2 + mf * 3f64.ln();
    let log_b = mf * ln2 + ln2 + mf * 3f64.ln() - (mf + 2.0) * p.ln() - 2f64.powi(m as i32) * (-p).ln_1p();
    let log_tau_upper = TAU_WAVE_BOUND.ln() + log_b + log_l;
    Ok(ComparisonConstants {
        m,
        p,
        l: log_l.exp(),
        b: log_b.exp(),
        log_l,
        log_b,
        tau_wave_bound: TAU_WAVE_BOUND,
        log_tau_upper,
        tau_upper: log_tau_upper.exp(),
        constraint_holds: 2f64.powi(m as i32) >= 10.0 / p + 2.0,
        normalized_exponent: log_tau_upper * ln2 / (1.0 / p).ln().powi(2),
    })
}

/// Smallest `m` with `2^m >= 10/p + 2`.
pub fn minimal_admissible_m(p: f64) -> Result<u32> {
    check_density(p)?;
    let need = 10.0 / p + 2.0;
    let mut m = 0u32;
    while 2f64.powi(m as i32) < need {
        m += 1;
    }
    Ok(m)
}

/// Exact check of the comparison inequality on a finite chain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComparisonSanity {
    pub n: usize,
    pub p: f64,
    pub m: u32,
    pub tau_east: f64,
    pub tau_wave: f64,
    pub bl: f64,
    pub holds: bool,
}

/// `tau_East(n, p) <= B L tau_wave(n, p, v = 2^m)` with both relaxation
/// times computed exactly.
pub fn comparison_sanity(n: usize, p: f64, m: u32) -> Result<ComparisonSanity> {
    if n > 12 {
        return Err(Error::CapExceeded { what: "n", value: n, cap: 12 });
    }
    if (1usize << m) < n {
        return Err(Error::param("m", m, "2^m >= n"));
    }
    let c = comparison_bound(m, p)?;
    let tau_east = crate::spectral::exact_gap(n, p, 1)?.tau;
    let tau_wave = crate::spectral::exact_gap(n, p, 1 << m)?.tau;
    let bl = c.b * c.l;
    Ok(ComparisonSanity { n, p, m, tau_east, tau_wave, bl, holds: tau_east <= bl * tau_wave })
}

/// Bernoulli(p) configuration on `0..=2^m` with the origin occupied.
pub fn sample_endpoint<R: Rng + ?Sized>(m: u32, p: f64, rng: &mut R) -> SiteBits {
    let len = (1usize << m) + 1;
    let mut b = bitvec![u64, Lsb0; 0; len];
    b.set(0, true);
    for i in 1..len {
        if rng.gen_bool(p) {
            b.set(i, true);
        }
    }
    b
}

/// Upper bound `2 * 3^m * p^(|x| - m - 2)` on the expected number of exits
/// of a random distinguished path from a configuration with energy `energy`.
pub fn exit_count_bound(m: u32, p: f64, energy: usize) -> f64 {
    2.0 * 3f64.powi(m as i32) * p.powi(energy as i32 - m as i32 - 2)
}

/// Monte Carlo mean (and standard error) of the number of exits from `x` of
/// the distinguished path between two independent Bernoulli(p) endpoints.
pub fn exit_count_estimate(m: u32, p: f64, x: &SiteBits, samples: usize, seed: u64) -> Result<MeanEstimate> {
    check_density(p)?;
    if x.len() != (1usize << m) + 1 {
        return Err(Error::param("x", bits_to_string(x), "configuration on 0..=2^m"));
    }
    let counts = (0..samples)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream_rng(seed, r as u64);
            let w = sample_endpoint(m, p, &mut rng);
            let w2 = sample_endpoint(m, p, &mut rng);
            distinguished_path(m, &w, &w2).map(|path| path.exits_from(x) as f64)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(MeanEstimate::from_samples(&counts))
}

/// Probe configurations with energy `m + 3` for the exit-count check: the
/// `count` such configurations exited most often by `pilot` distinguished
/// paths between Bernoulli(p) endpoints, ties broken by the 0/1 string.
pub fn exit_probe_configurations(m: u32, p: f64, count: usize, pilot: usize, seed: u64) -> Result<Vec<SiteBits>> {
    check_density(p)?;
    let energy = m as usize + 3;
    let visits = (0..pilot)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream_rng(seed, r as u64);
            let w = sample_endpoint(m, p, &mut rng);
            let w2 = sample_endpoint(m, p, &mut rng);
            let path = distinguished_path(m, &w, &w2)?;
            Ok(path
                .steps()
                .windows(2)
                .filter(|s| s[0] != s[1] && s[0].count_ones() == energy)
                .map(|s| s[0].clone())
                .collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>>>()?;
    let mut tally: HashMap<SiteBits, usize> = HashMap::new();
    for x in visits.into_iter().flatten() {
        *tally.entry(x).or_default() += 1;
    }
    let mut ranked: Vec<(SiteBits, usize)> = tally.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| bits_to_string(&a.0).cmp(&bits_to_string(&b.0))));
    Ok(ranked.into_iter().take(count).map(|(x, _)| x).collect())
}

/// Converts a short [`SiteBits`] into a packed [`Configuration`].
pub fn to_configuration(b: &SiteBits) -> Result<Configuration> {
    let n = b.len().saturating_sub(1);
    if n > MAX_SITES {
        return Err(Error::ChainTooLong { n, max: MAX_SITES });
    }
    let sites: Vec<usize> = b.iter_ones().filter(|&s| s > 0).collect();
    Configuration::from_sites(n, &sites)
}
