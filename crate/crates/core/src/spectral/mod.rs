//! Exact spectral quantities of the finite East and wave chains.
//!
//! The relaxation time is the reciprocal of the smallest non-zero eigenvalue
//! of `-Q` (reversible, so real), and also the supremum of the Rayleigh
//! quotient `var(g) / E(g, g)` over non-constant test functions.

mod eigen;
mod generator;

pub use eigen::{second_smallest, EigenPair, Solver, SymmetricOperator, DENSE_MAX_DIM};
pub use generator::{build_generator, build_generator_with_budget, GeneratorMatrix, DEFAULT_ENTRY_BUDGET};

use crate::error::{Error, Result};
use crate::model::{stationary_vector, Configuration};

/// Relative detailed-balance violation tolerated before a generator is
/// rejected as non-reversible.
pub const REVERSIBILITY_TOL: f64 = 1e-12;

/// Gap, relaxation time and solver diagnostics.
#[derive(Debug, Clone)]
pub struct SpectralReport {
    pub gap: f64,
    pub tau: f64,
    /// Max |(pi Q)_y|.
    pub residual: f64,
    /// `||L v - gap v||_inf` for the returned eigenvector.
    pub eig_residual: f64,
    /// Unit eigenvector of the symmetrised operator for `gap`.
    pub eigenvector: Vec<f64>,
    pub iterations: usize,
}

impl SpectralReport {
    /// The eigenvector mapped back to a function on configurations,
    /// `g(x) = phi(x) / sqrt(pi(x))`; an eigenfunction of `-Q` for `gap`.
    pub fn eigenfunction(&self, pi: &[f64]) -> TestFunction {
        TestFunction(self.eigenvector.iter().zip(pi).map(|(phi, w)| phi / w.sqrt()).collect())
    }
}

/// Gap of a reversible generator with stationary weights `pi`.
pub fn spectral_gap(gen: &GeneratorMatrix, pi: &[f64]) -> Result<SpectralReport> {
    spectral_gap_with(gen, pi, Solver::Auto)
}

pub fn spectral_gap_with(gen: &GeneratorMatrix, pi: &[f64], solver: Solver) -> Result<SpectralReport> {
    check_len(pi.len(), gen.dim())?;
    let (violation, row, col) = gen.detailed_balance_violation(pi);
    if violation > REVERSIBILITY_TOL {
        return Err(Error::NotReversible { row, col, violation });
    }
    let residual = gen.stationarity_residual(pi);
    let op = SymmetricOperator::from_generator(gen, pi);
    let kernel: Vec<f64> = pi.iter().map(|w| w.sqrt()).collect();
    let pair = second_smallest(&op, &kernel, solver)?;
    let eig_residual = op.residual(pair.value, &pair.vector);
    if !(pair.value > 0.0) {
        return Err(Error::EigenNotConverged { residual: eig_residual, iterations: pair.iterations });
    }
    Ok(SpectralReport {
        gap: pair.value,
        tau: 1.0 / pair.value,
        residual,
        eig_residual,
        eigenvector: pair.vector,
        iterations: pair.iterations,
    })
}

/// Builds the chain for `(n, p, v)` and returns its spectral report.
pub fn exact_gap(n: usize, p: f64, v: usize) -> Result<SpectralReport> {
    let gen = build_generator(n, p, v)?;
    let pi = stationary_vector(n, p)?;
    spectral_gap(&gen, &pi)
}

/// Dense table of a real function on the `2^n` configurations, in index order.
#[derive(Debug, Clone, PartialEq)]
pub struct TestFunction(Vec<f64>);

impl TestFunction {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteTestFunction { index });
        }
        Ok(TestFunction(values))
    }

    /// Tabulates `f` over all configurations on `0..=n`.
    pub fn from_fn(n: usize, f: impl Fn(&Configuration) -> f64) -> Result<Self> {
        Self::new(Configuration::all(n)?.map(|c| f(&c)).collect())
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// `1/2 sum_x pi(x) sum_{y != x} q(x,y) (g(y) - g(x))^2`.
pub fn dirichlet_form(g: &TestFunction, gen: &GeneratorMatrix, pi: &[f64]) -> Result<f64> {
    check_len(g.len(), gen.dim())?;
    check_len(pi.len(), gen.dim())?;
    let g = g.values();
    let total: f64 = (0..gen.dim())
        .map(|x| {
            pi[x] * gen
                .row(x)
                .iter()
                .map(|&(y, q)| q * (g[y as usize] - g[x]).powi(2))
                .sum::<f64>()
        })
        .sum();
    Ok(0.5 * total)
}

/// `-<g, Q g>_pi`, algebraically equal to the Dirichlet form.
pub fn generator_quadratic_form(g: &TestFunction, gen: &GeneratorMatrix, pi: &[f64]) -> Result<f64> {
    check_len(g.len(), gen.dim())?;
    let qg = gen.apply(g.values());
    Ok(-g.values().iter().zip(&qg).zip(pi).map(|((a, b), w)| w * a * b).sum::<f64>())
}

/// Variance under `pi`.
pub fn variance(g: &TestFunction, pi: &[f64]) -> Result<f64> {
    check_len(g.len(), pi.len())?;
    let mean: f64 = g.values().iter().zip(pi).map(|(a, w)| a * w).sum();
    Ok(g.values().iter().zip(pi).map(|(a, w)| w * (a - mean).powi(2)).sum())
}

/// Variance, Dirichlet energy and their ratio, a lower bound on `tau`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VariationalRatio {
    pub variance: f64,
    pub energy: f64,
    pub ratio: f64,
}

pub fn variational_ratio(g: &TestFunction, gen: &GeneratorMatrix, pi: &[f64]) -> Result<VariationalRatio> {
    check_len(g.len(), gen.dim())?;
    let first = g.values().first().copied().unwrap_or(0.0);
    if g.values().iter().all(|&v| v == first) {
        return Err(Error::ConstantTestFunction);
    }
    let var = variance(g, pi)?;
    if !(var > 0.0) {
        return Err(Error::ConstantTestFunction);
    }
    let energy = dirichlet_form(g, gen, pi)?;
    Ok(VariationalRatio { variance: var, energy, ratio: var / energy })
}

fn check_len(got: usize, expected: usize) -> Result<()> {
    if got == expected {
        Ok(())
    } else {
        Err(Error::TestFunctionLength { got, expected })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Roots of det(M - lambda I) for a 4x4 matrix by sign scan and bisection
    /// on a cofactor expansion; independent of the library solvers.
    fn char_poly_roots_4x4(m: [[f64; 4]; 4]) -> Vec<f64> {
        let det = |lambda: f64| -> f64 {
            let mut a = m;
            for (i, row) in a.iter_mut().enumerate() {
                row[i] -= lambda;
            }
            det4(&a)
        };
        let bound: f64 = m.iter().map(|r| r.iter().map(|x| x.abs()).sum::<f64>()).fold(0.0, f64::max) + 1.0;
        let steps = 200_000;
        let mut roots = Vec::new();
        let mut prev_x = -bound;
        let mut prev = det(prev_x);
        for k in 1..=steps {
            let x = -bound + 2.0 * bound * k as f64 / steps as f64;
            let cur = det(x);
            if cur == 0.0 {
                roots.push(x);
            } else if prev.signum() != cur.signum() && prev != 0.0 {
                let (mut lo, mut hi) = (prev_x, x);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if det(mid).signum() == det(lo).signum() {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                roots.push(0.5 * (lo + hi));
            }
            prev_x = x;
            prev = cur;
        }
        roots
    }

    fn det4(a: &[[f64; 4]; 4]) -> f64 {
        let mut total = 0.0;
        for c in 0..4 {
            let mut minor = [[0.0; 3]; 3];
            for r in 1..4 {
                let mut k = 0;
                for cc in 0..4 {
                    if cc != c {
                        minor[r - 1][k] = a[r][cc];
                        k += 1;
                    }
                }
            }
            let d3 = minor[0][0] * (minor[1][1] * minor[2][2] - minor[1][2] * minor[2][1])
                - minor[0][1] * (minor[1][0] * minor[2][2] - minor[1][2] * minor[2][0])
                + minor[0][2] * (minor[1][0] * minor[2][1] - minor[1][1] * minor[2][0]);
            total += if c % 2 == 0 { 1.0 } else { -1.0 } * a[0][c] * d3;
        }
        total
    }

    #[test]
    fn two_state_gap_is_one() {
        for p in [0.05, 0.2, 0.37, 0.5, 0.9] {
            let r = exact_gap(1, p, 1).unwrap();
            assert!((r.gap - 1.0).abs() < 1e-12, "p={p}: {}", r.gap);
            assert_eq!(r.tau * r.gap, 1.0);
        }
    }

    #[test]
    fn n2_gap_matches_characteristic_polynomial() {
        // Explicit -Q for n=2, p=1/2, indices 00,10,01,11 over sites (1,2):
        // 100 -> 110 (0.5); 110 -> 100 (0.5), 111 (0.5);
        // 101 -> 111 (0.5); 111 -> 101 (0.5), 110 (0.5). 101 cannot flip site 2.
        let mq = [
            [0.5, -0.5, 0.0, 0.0],
            [-0.5, 1.0, 0.0, -0.5],
            [0.0, 0.0, 0.5, -0.5],
            [0.0, -0.5, -0.5, 1.0],
        ];
        let mut roots = char_poly_roots_4x4(mq);
        roots.sort_by(f64::total_cmp);
        assert!(roots[0].abs() < 1e-9);
        let oracle = roots[1];
        // Frozen from the root scan above: 1 - 1/sqrt(2).
        assert!((oracle - 0.292_893_218_813_452_5).abs() < 1e-9);
        let r = exact_gap(2, 0.5, 1).unwrap();
        assert!((r.gap - 0.292_893_218_813_452_5).abs() < 1e-12, "{}", r.gap);
        assert!((r.gap - oracle).abs() < 1e-9);
    }

    #[test]
    fn gap_nonincreasing_in_n() {
        let gaps: Vec<f64> = (1..=4).map(|n| exact_gap(n, 0.3, 1).unwrap().gap).collect();
        for w in gaps.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "{gaps:?}");
        }
    }

    #[test]
    fn wave_relaxes_faster_than_east() {
        for n in 2..=6 {
            for p in [0.2, 0.5] {
                let east = exact_gap(n, p, 1).unwrap().gap;
                let wave = exact_gap(n, p, n).unwrap().gap;
                assert!(wave >= east - 1e-12, "n={n} p={p}: {wave} < {east}");
            }
        }
    }

    #[test]
    fn dirichlet_two_state_indicator() {
        let gen = build_generator(1, 0.5, 1).unwrap();
        let pi = stationary_vector(1, 0.5).unwrap();
        let g = TestFunction::new(vec![0.0, 1.0]).unwrap();
        assert!((dirichlet_form(&g, &gen, &pi).unwrap() - 0.25).abs() < 1e-15);
        let c = TestFunction::new(vec![3.0, 3.0]).unwrap();
        assert_eq!(dirichlet_form(&c, &gen, &pi).unwrap(), 0.0);
        assert_eq!(variational_ratio(&c, &gen, &pi), Err(Error::ConstantTestFunction));
    }

    #[test]
    fn eigenfunction_attains_tau() {
        let (n, p) = (5, 0.3);
        let gen = build_generator(n, p, 1).unwrap();
        let pi = stationary_vector(n, p).unwrap();
        let r = spectral_gap(&gen, &pi).unwrap();
        let g = r.eigenfunction(&pi);
        let vr = variational_ratio(&g, &gen, &pi).unwrap();
        assert!((vr.ratio - r.tau).abs() <= 1e-9 * r.tau);
    }

    #[test]
    fn site_occupancy_bounded_by_tau() {
        let (n, p) = (3, 0.3);
        let gen = build_generator(n, p, 1).unwrap();
        let pi = stationary_vector(n, p).unwrap();
        let tau = spectral_gap(&gen, &pi).unwrap().tau;
        let g = TestFunction::from_fn(n, |c| if c.is_occupied(n) { 1.0 } else { 0.0 }).unwrap();
        let vr = variational_ratio(&g, &gen, &pi).unwrap();
        assert!(vr.ratio <= tau * (1.0 + 1e-9));
    }

    #[test]
    fn lanczos_agrees_with_dense() {
        for (n, p, v) in [(7, 0.3, 1), (8, 0.2, 1), (9, 0.5, 3), (10, 0.25, 1)] {
            let gen = build_generator(n, p, v).unwrap();
            let pi = stationary_vector(n, p).unwrap();
            let d = spectral_gap_with(&gen, &pi, Solver::Dense).unwrap();
            let l = spectral_gap_with(&gen, &pi, Solver::Lanczos).unwrap();
            assert!((d.gap - l.gap).abs() <= 1e-9 * d.gap, "n={n}: {} vs {}", d.gap, l.gap);
            assert!(l.eig_residual < 1e-8, "{}", l.eig_residual);
        }
    }

    #[test]
    fn rejects_non_reversible_weights() {
        let gen = build_generator(2, 0.3, 1).unwrap();
        let wrong = stationary_vector(2, 0.4).unwrap();
        assert!(matches!(spectral_gap(&gen, &wrong), Err(Error::NotReversible { .. })));
    }

    #[test]
    fn quadratic_form_identity() {
        let (n, p) = (4, 0.3);
        let gen = build_generator(n, p, 2).unwrap();
        let pi = stationary_vector(n, p).unwrap();
        let g = TestFunction::from_fn(n, |c| (c.word() as f64).sin() + c.particle_count() as f64).unwrap();
        let a = dirichlet_form(&g, &gen, &pi).unwrap();
        let b = generator_quadratic_form(&g, &gen, &pi).unwrap();
        assert!((a - b).abs() < 1e-10);
    }
}
