use std::io::{self, Write};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{check_density, Configuration, MAX_SITES};

/// Default cap on stored generator entries (off-diagonal plus diagonal).
pub const DEFAULT_ENTRY_BUDGET: u128 = 60_000_000;

/// Sparse generator of the finite East (`v = 1`) or wave (`v >= 2`) chain.
///
/// Rows and columns are configuration indices (occupancy of sites `1..=n`).
/// Off-diagonal rows are sorted by column with parallel transitions summed.
#[derive(Debug, Clone)]
pub struct GeneratorMatrix {
    n: usize,
    v: usize,
    p: f64,
    rows: Vec<Vec<(u32, f64)>>,
    diag: Vec<f64>,
}

/// Assembles the generator of the wave chain with wave length `v` on sites
/// `0..=n`. A wave from occupied site `i` resets `i+1..=min(i+v, n)` to a
/// Bernoulli(p) pattern; `v = 1` gives the East chain.
pub fn build_generator(n: usize, p: f64, v: usize) -> Result<GeneratorMatrix> {
    build_generator_with_budget(n, p, v, DEFAULT_ENTRY_BUDGET)
}

pub fn build_generator_with_budget(
    n: usize,
    p: f64,
    v: usize,
    budget: u128,
) -> Result<GeneratorMatrix> {
    check_density(p)?;
    if v == 0 {
        return Err(Error::param("v", v, "v >= 1"));
    }
    if n == 0 {
        return Err(Error::param("n", n, "n >= 1"));
    }
    let entries = entry_estimate(n, v);
    if n > MAX_SITES.min(30) || entries > budget {
        return Err(Error::StateSpaceTooLarge { n, v, entries, budget });
    }
    let dim = 1usize << n;
    let rows: Vec<Vec<(u32, f64)>> = (0..dim)
        .into_par_iter()
        .map(|index| wave_row(n, p, v, index))
        .collect();
    let diag = rows
        .iter()
        .map(|r| -r.iter().map(|&(_, q)| q).sum::<f64>())
        .collect();
    Ok(GeneratorMatrix { n, v, p, rows, diag })
}

/// Upper bound on stored entries: one diagonal per row plus, for every
/// emitting site, the window's `2^w - 1` alternative patterns.
fn entry_estimate(n: usize, v: usize) -> u128 {
    if n >= 120 {
        return u128::MAX;
    }
    let per_row: u128 = (0..n)
        .map(|i| {
            let w = v.min(n - i) as u32;
            (1u128 << w) - 1
        })
        .sum::<u128>()
        + 1;
    per_row.saturating_mul(1u128 << n)
}

fn wave_row(n: usize, p: f64, v: usize, index: usize) -> Vec<(u32, f64)> {
    let word = ((index as u64) << 1) | 1;
    let mut out: Vec<(u32, f64)> = Vec::new();
    for i in 0..n {
        if (word >> i) & 1 == 0 {
            continue;
        }
        let lo = i + 1;
        let w = v.min(n - i);
        let mask = ((1u64 << w) - 1) << lo;
        let current = word & mask;
        for pattern in 0..(1u64 << w) {
            let placed = pattern << lo;
            if placed == current {
                continue;
            }
            let ones = pattern.count_ones() as i32;
            let rate = p.powi(ones) * (1.0 - p).powi(w as i32 - ones);
            let target = (word & !mask) | placed;
            out.push(((target >> 1) as u32, rate));
        }
    }
    out.sort_unstable_by_key(|&(c, _)| c);
    let mut merged: Vec<(u32, f64)> = Vec::with_capacity(out.len());
    for (c, q) in out {
        match merged.last_mut() {
            Some((lc, lq)) if *lc == c => *lq += q,
            _ => merged.push((c, q)),
        }
    }
    merged
}

impl GeneratorMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn v(&self) -> usize {
        self.v
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    /// Off-diagonal entries `(column, rate)` of `row`, sorted by column.
    pub fn row(&self, row: usize) -> &[(u32, f64)] {
        &self.rows[row]
    }

    pub fn diagonal(&self, row: usize) -> f64 {
        self.diag[row]
    }

    /// `q(x, y)` for `x != y`, or the diagonal when `x == y`.
    pub fn rate(&self, x: usize, y: usize) -> f64 {
        if x == y {
            return self.diag[x];
        }
        let row = &self.rows[x];
        match row.binary_search_by_key(&(y as u32), |&(c, _)| c) {
            Ok(k) => row[k].1,
            Err(_) => 0.0,
        }
    }

    pub fn nonzeros(&self) -> usize {
        self.rows.iter().map(Vec::len).sum::<usize>() + self.dim()
    }

    /// `(Q g)(x) = sum_y q(x,y) (g(y) - g(x))`.
    pub fn apply(&self, g: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .enumerate()
            .map(|(x, row)| row.iter().map(|&(y, q)| q * g[y as usize]).sum::<f64>() + self.diag[x] * g[x])
            .collect()
    }

    /// Max |(pi Q)_y| over columns.
    pub fn stationarity_residual(&self, pi: &[f64]) -> f64 {
        let mut flow: Vec<f64> = self.diag.iter().zip(pi).map(|(d, w)| d * w).collect();
        for (x, row) in self.rows.iter().enumerate() {
            for &(y, q) in row {
                flow[y as usize] += pi[x] * q;
            }
        }
        flow.iter().fold(0.0, |m, f| m.max(f.abs()))
    }

    /// Worst `|pi(x) q(x,y) - pi(y) q(y,x)|` relative to the larger flow,
    /// with its location.
    pub fn detailed_balance_violation(&self, pi: &[f64]) -> (f64, usize, usize) {
        let mut worst = (0.0, 0, 0);
        for (x, row) in self.rows.iter().enumerate() {
            for &(y, q) in row {
                let y = y as usize;
                let fwd = pi[x] * q;
                let bwd = pi[y] * self.rate(y, x);
                let rel = (fwd - bwd).abs() / fwd.max(bwd);
                if rel > worst.0 {
                    worst = (rel, x, y);
                }
            }
        }
        worst
    }

    /// Rows whose entries do not sum to zero (within `tol`).
    pub fn max_row_sum(&self) -> f64 {
        self.rows
            .iter()
            .zip(&self.diag)
            .map(|(row, d)| (row.iter().map(|&(_, q)| q).sum::<f64>() + d).abs())
            .fold(0.0, f64::max)
    }

    /// Coordinate-format dump, one `row col value` per line with 17
    /// significant digits; diagonal entries included.
    pub fn write_coo<W: Write>(&self, mut out: W) -> io::Result<()> {
        for (x, row) in self.rows.iter().enumerate() {
            let mut wrote_diag = false;
            for &(y, q) in row {
                let y = y as usize;
                if !wrote_diag && y > x {
                    writeln!(out, "{} {} {:.16e}", x, x, self.diag[x])?;
                    wrote_diag = true;
                }
                writeln!(out, "{} {} {:.16e}", x, y, q)?;
            }
            if !wrote_diag {
                writeln!(out, "{} {} {:.16e}", x, x, self.diag[x])?;
            }
        }
        Ok(())
    }

    /// Configuration labelling row `index`.
    pub fn configuration(&self, index: usize) -> Configuration {
        Configuration::from_index(self.n, index).expect("index within 2^n")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{enumerate_transitions, stationary_vector};

    #[test]
    fn single_spin() {
        let p = 0.37;
        let g = build_generator(1, p, 1).unwrap();
        assert_eq!(g.dim(), 2);
        assert_eq!(g.rate(0, 1), p);
        assert_eq!(g.rate(0, 0), -p);
        assert!((g.rate(1, 0) - (1.0 - p)).abs() < 1e-15);
        assert!((g.rate(1, 1) + (1.0 - p)).abs() < 1e-15);
    }

    #[test]
    fn blocked_site() {
        let g = build_generator(2, 0.5, 1).unwrap();
        // config 100 (index 0): only site 1 may flip, to 110 (index 1)
        assert_eq!(g.row(0), &[(1, 0.5)]);
    }

    #[test]
    fn east_matches_enumeration() {
        let p = 0.3;
        let n = 5;
        let g = build_generator(n, p, 1).unwrap();
        for c in Configuration::all(n).unwrap() {
            let ts = enumerate_transitions(&c, p);
            assert_eq!(g.row(c.index()).len(), ts.len());
            for t in ts {
                let target = c.apply_flip(t.site).unwrap();
                assert_eq!(g.rate(c.index(), target.index()), t.rate);
            }
        }
    }

    #[test]
    fn wave_window_patterns() {
        // n=2, v=2, from 100: the wave from the origin resets sites 1,2 to one
        // of four patterns with probability 1/4 each.
        let g = build_generator(2, 0.5, 2).unwrap();
        let by_hand: Vec<(u32, f64)> = vec![(1, 0.25), (2, 0.25), (3, 0.25)];
        assert_eq!(g.row(0), by_hand.as_slice());
        assert_eq!(g.diagonal(0), -0.75);
        assert!(g.max_row_sum() < 1e-15);
    }

    #[test]
    fn wave_rows_aggregate_parallel_transitions() {
        // From 110 with v=2, n=2: origin wave resets {1,2}, site-1 wave resets {2}.
        // Target 111 is reachable by both: p^2 + p.
        let p = 0.3;
        let g = build_generator(2, p, 2).unwrap();
        let x = Configuration::parse("110").unwrap().index();
        let y = Configuration::parse("111").unwrap().index();
        assert!((g.rate(x, y) - (p * p + p)).abs() < 1e-15);
        let pi = stationary_vector(2, p).unwrap();
        assert!(g.stationarity_residual(&pi) < 1e-15);
    }

    #[test]
    fn coo_dump_is_complete() {
        let g = build_generator(2, 0.5, 1).unwrap();
        let mut buf = Vec::new();
        g.write_coo(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), g.nonzeros());
        assert_eq!(text.lines().next().unwrap(), "0 0 -5.0000000000000000e-1");
    }

    #[test]
    fn budget_guard() {
        assert!(matches!(
            build_generator_with_budget(10, 0.5, 10, 1000),
            Err(Error::StateSpaceTooLarge { .. })
        ));
        assert!(build_generator(2, 0.0, 1).is_err());
        assert!(build_generator(2, 0.5, 0).is_err());
    }
}
