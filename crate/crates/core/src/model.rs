//! Configurations of the finite East chain on sites `0..=n` with a frozen,
//! permanently occupied origin.
//!
//! A site `i >= 1` may flip only while site `i - 1` is occupied; it flips up at
//! rate `p` and down at rate `1 - p`. The product Bernoulli(p) measure on sites
//! `1..=n` is reversible for these rates.

use std::fmt;

use crate::error::{Error, Result};

/// Largest chain length that fits a packed `u64` occupancy word.
pub const MAX_SITES: usize = 62;

/// Occupancy of sites `0..=n`, bit `i` set when site `i` is occupied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Configuration {
    word: u64,
    n: usize,
}

impl Configuration {
    /// Validates the packed word: bit 0 set, nothing above bit `n`.
    pub fn new(n: usize, word: u64) -> Result<Self> {
        check_len(n)?;
        if word & 1 == 0 {
            return Err(Error::InvalidConfiguration { word, n, reason: "site 0 must be occupied" });
        }
        if word >> (n + 1) != 0 {
            return Err(Error::InvalidConfiguration { word, n, reason: "bits above site n are set" });
        }
        Ok(Configuration { word, n })
    }

    /// Only the frozen origin occupied.
    pub fn origin(n: usize) -> Result<Self> {
        Self::new(n, 1)
    }

    /// Origin plus the listed sites.
    pub fn from_sites(n: usize, sites: &[usize]) -> Result<Self> {
        check_len(n)?;
        let mut word = 1u64;
        for &s in sites {
            if s > n {
                return Err(Error::SiteOutOfRange { site: s, n });
            }
            word |= 1 << s;
        }
        Self::new(n, word)
    }

    /// Configuration whose sites `1..=n` are the bits of `index`
    /// (the row ordering used by the generator matrices).
    pub fn from_index(n: usize, index: usize) -> Result<Self> {
        Self::new(n, ((index as u64) << 1) | 1)
    }

    /// Parses a 0/1 string listing site 0 first, e.g. `"11000"`.
    pub fn parse(s: &str) -> Result<Self> {
        let n = s.len().checked_sub(1).ok_or(Error::param("configuration", s, "non-empty 0/1 string"))?;
        check_len(n)?;
        let mut word = 0u64;
        for (i, ch) in s.chars().enumerate() {
            match ch {
                '1' => word |= 1 << i,
                '0' => {}
                _ => return Err(Error::param("configuration", s, "0/1 string")),
            }
        }
        Self::new(n, word)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn word(&self) -> u64 {
        self.word
    }

    /// Row index in `0..2^n`: the occupancy of sites `1..=n`.
    pub fn index(&self) -> usize {
        (self.word >> 1) as usize
    }

    pub fn is_occupied(&self, site: usize) -> bool {
        site <= self.n && (self.word >> site) & 1 == 1
    }

    /// Number of occupied sites in `1..=n` (the origin is not counted).
    pub fn particle_count(&self) -> usize {
        (self.word >> 1).count_ones() as usize
    }

    /// Occupied sites including the origin; the "energy" of path combinatorics.
    pub fn energy(&self) -> usize {
        self.word.count_ones() as usize
    }

    /// Rightmost occupied site (0 when only the origin is occupied).
    pub fn rightmost(&self) -> usize {
        63 - self.word.leading_zeros() as usize
    }

    /// Occupied sites in increasing order, origin included.
    pub fn sites(&self) -> impl Iterator<Item = usize> + '_ {
        (0..=self.n).filter(move |&i| self.is_occupied(i))
    }

    /// Toggles `site`; the origin is rejected.
    pub fn apply_flip(&self, site: usize) -> Result<Self> {
        if site == 0 {
            return Err(Error::FrozenOrigin);
        }
        if site > self.n {
            return Err(Error::SiteOutOfRange { site, n: self.n });
        }
        Ok(Configuration { word: self.word ^ (1 << site), n: self.n })
    }

    /// All `2^n` configurations in index order.
    pub fn all(n: usize) -> Result<impl Iterator<Item = Configuration>> {
        check_len(n)?;
        Ok((0..1u64 << n).map(move |i| Configuration { word: (i << 1) | 1, n }))
    }
}

impl fmt::Display for Configuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..=self.n {
            f.write_str(if self.is_occupied(i) { "1" } else { "0" })?;
        }
        Ok(())
    }
}

fn check_len(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::param("n", n, "n >= 1"));
    }
    if n > MAX_SITES {
        return Err(Error::ChainTooLong { n, max: MAX_SITES });
    }
    Ok(())
}

/// Density, chain length and RNG seed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    pub p: f64,
    pub n: usize,
    pub seed: u64,
}

impl ModelParams {
    pub fn new(p: f64, n: usize, seed: u64) -> Result<Self> {
        check_density(p)?;
        if n == 0 {
            return Err(Error::param("n", n, "n >= 1"));
        }
        Ok(ModelParams { p, n, seed })
    }
}

pub(crate) fn check_density(p: f64) -> Result<()> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(Error::param("p", p, "0 < p < 1"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    /// 0 -> 1 at rate p.
    Up,
    /// 1 -> 0 at rate 1 - p.
    Down,
}

impl Direction {
    pub fn reverse(self) -> Self {
        match self {
            Direction::Up => Direction::Down,
            Direction::Down => Direction::Up,
        }
    }

    pub fn rate(self, p: f64) -> f64 {
        match self {
            Direction::Up => p,
            Direction::Down => 1.0 - p,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub site: usize,
    pub direction: Direction,
    pub rate: f64,
}

impl Transition {
    pub fn reverse(&self, p: f64) -> Transition {
        let direction = self.direction.reverse();
        Transition { site: self.site, direction, rate: direction.rate(p) }
    }
}

/// One transition per site `i` in `1..=n` whose left neighbour is occupied.
pub fn enumerate_transitions(c: &Configuration, p: f64) -> Vec<Transition> {
    (1..=c.n)
        .filter(|&i| c.is_occupied(i - 1))
        .map(|i| {
            let direction = if c.is_occupied(i) { Direction::Down } else { Direction::Up };
            Transition { site: i, direction, rate: direction.rate(p) }
        })
        .collect()
}

/// `p^|c| (1-p)^(n-|c|)` with `|c|` counted over sites `1..=n`.
pub fn stationary_weight(c: &Configuration, p: f64) -> f64 {
    let k = c.particle_count() as i32;
    p.powi(k) * (1.0 - p).powi(c.n as i32 - k)
}

/// Stationary weights of all `2^n` configurations in index order.
pub fn stationary_vector(n: usize, p: f64) -> Result<Vec<f64>> {
    Ok(Configuration::all(n)?.map(|c| stationary_weight(&c, p)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg(s: &str) -> Configuration {
        Configuration::parse(s).unwrap()
    }

    #[test]
    fn transitions_from_origin_only() {
        let t = enumerate_transitions(&cfg("10000"), 0.3);
        assert_eq!(t, vec![Transition { site: 1, direction: Direction::Up, rate: 0.3 }]);
    }

    #[test]
    fn transitions_two_occupied() {
        let p = 0.3;
        let t = enumerate_transitions(&cfg("11000"), p);
        assert_eq!(
            t,
            vec![
                Transition { site: 1, direction: Direction::Down, rate: 1.0 - p },
                Transition { site: 2, direction: Direction::Up, rate: p },
            ]
        );
    }

    #[test]
    fn transitions_full() {
        let t = enumerate_transitions(&cfg("111"), 0.25);
        assert_eq!(t.len(), 2);
        assert!(t.iter().all(|t| t.direction == Direction::Down && t.rate == 0.75));
    }

    #[test]
    fn weights() {
        assert_eq!(stationary_weight(&cfg("100"), 0.5), 0.25);
        assert!((stationary_weight(&cfg("1110"), 0.1) - 0.009).abs() < 1e-15);
        let total: f64 = stationary_vector(4, 0.3).unwrap().iter().sum();
        assert!((total - 1.0).abs() < 1e-15);
    }

    #[test]
    fn flips() {
        assert_eq!(cfg("10000").apply_flip(1).unwrap(), cfg("11000"));
        assert_eq!(cfg("11000").apply_flip(1).unwrap(), cfg("10000"));
        assert_eq!(cfg("10000").apply_flip(0), Err(Error::FrozenOrigin));
        assert!(matches!(cfg("10000").apply_flip(5), Err(Error::SiteOutOfRange { .. })));
    }

    #[test]
    fn validation() {
        assert!(Configuration::new(3, 0b0110).is_err());
        assert!(Configuration::new(3, 0b1_0001).is_err());
        assert!(matches!(Configuration::origin(63), Err(Error::ChainTooLong { .. })));
        assert!(Configuration::origin(62).is_ok());
        assert!(Configuration::origin(0).is_err());
        assert!(ModelParams::new(1.0, 3, 0).is_err());
        assert!(ModelParams::new(0.5, 0, 0).is_err());
    }

    #[test]
    fn display_roundtrip() {
        let c = Configuration::from_sites(6, &[2, 5]).unwrap();
        assert_eq!(c.to_string(), "1010010");
        assert_eq!(cfg("1010010"), c);
        assert_eq!(c.rightmost(), 5);
        assert_eq!(c.energy(), 3);
        assert_eq!(c.particle_count(), 2);
    }

    proptest! {
        #[test]
        fn detailed_balance_and_reverse(n in 1usize..12, raw in any::<u64>(), p in 0.01f64..0.99) {
            let c = Configuration::from_index(n, (raw as usize) & ((1 << n) - 1)).unwrap();
            let ts = enumerate_transitions(&c, p);
            let occupied_below_n = (0..n).filter(|&i| c.is_occupied(i)).count();
            prop_assert_eq!(ts.len(), occupied_below_n);
            for t in ts {
                let c2 = c.apply_flip(t.site).unwrap();
                let back = enumerate_transitions(&c2, p);
                let rev = t.reverse(p);
                prop_assert!(back.contains(&rev));
                let lhs = stationary_weight(&c, p) * t.rate;
                let rhs = stationary_weight(&c2, p) * rev.rate;
                prop_assert!((lhs - rhs).abs() <= 1e-14 * lhs.max(rhs));
            }
        }

        #[test]
        fn flip_is_involution(n in 1usize..20, raw in any::<u64>(), site_seed in any::<usize>()) {
            let c = Configuration::from_index(n, (raw as usize) & ((1 << n) - 1)).unwrap();
            let site = 1 + site_seed % n;
            prop_assert_eq!(c.apply_flip(site).unwrap().apply_flip(site).unwrap(), c);
        }
    }
}
