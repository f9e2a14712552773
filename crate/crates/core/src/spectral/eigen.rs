//! Smallest non-trivial eigenpair of the symmetrised, negated generator.
//!
//! `L = -D^{1/2} Q D^{-1/2}` with `D = diag(pi)` is symmetric positive
//! semi-definite with kernel spanned by `sqrt(pi)`. Small chains use a dense
//! symmetric eigensolver; larger ones run Lanczos with full
//! reorthogonalisation on the complement of `sqrt(pi)`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::generator::GeneratorMatrix;
use crate::error::{Error, Result};

/// Symmetric sparse operator `L` (rows sorted, exactly symmetric).
#[derive(Debug, Clone)]
pub struct SymmetricOperator {
    rows: Vec<Vec<(u32, f64)>>,
    diag: Vec<f64>,
}

impl SymmetricOperator {
    /// Builds `L(x,y) = -q(x,y) sqrt(pi(x)/pi(y))`, averaging each pair so the
    /// stored matrix is bitwise symmetric.
    pub fn from_generator(gen: &GeneratorMatrix, pi: &[f64]) -> Self {
        let dim = gen.dim();
        let mut rows: Vec<Vec<(u32, f64)>> = vec![Vec::new(); dim];
        for x in 0..dim {
            for &(y, q) in gen.row(x) {
                let y = y as usize;
                if y < x {
                    continue;
                }
                let fwd = q * (pi[x] / pi[y]).sqrt();
                let bwd = gen.rate(y, x) * (pi[y] / pi[x]).sqrt();
                let a = -0.5 * (fwd + bwd);
                rows[x].push((y as u32, a));
                rows[y].push((x as u32, a));
            }
        }
        for r in &mut rows {
            r.sort_unstable_by_key(|&(c, _)| c);
        }
        let diag = (0..dim).map(|x| -gen.diagonal(x)).collect();
        SymmetricOperator { rows, diag }
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn entry(&self, x: usize, y: usize) -> f64 {
        if x == y {
            return self.diag[x];
        }
        let row = &self.rows[x];
        match row.binary_search_by_key(&(y as u32), |&(c, _)| c) {
            Ok(k) => row[k].1,
            Err(_) => 0.0,
        }
    }

    pub fn apply(&self, v: &[f64], out: &mut [f64]) {
        for (x, row) in self.rows.iter().enumerate() {
            out[x] = self.diag[x] * v[x] + row.iter().map(|&(y, a)| a * v[y as usize]).sum::<f64>();
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let d = self.dim();
        let mut m = DMatrix::zeros(d, d);
        for (x, row) in self.rows.iter().enumerate() {
            m[(x, x)] = self.diag[x];
            for &(y, a) in row {
                m[(x, y as usize)] = a;
            }
        }
        m
    }

    /// Largest row sum of absolute values; bounds the spectral radius.
    pub fn gershgorin_bound(&self) -> f64 {
        self.rows
            .iter()
            .zip(&self.diag)
            .map(|(r, d)| d.abs() + r.iter().map(|&(_, a)| a.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// `max_x |(L v)(x) - lambda v(x)|`.
    pub fn residual(&self, lambda: f64, v: &[f64]) -> f64 {
        let mut lv = vec![0.0; v.len()];
        self.apply(v, &mut lv);
        lv.iter().zip(v).map(|(a, b)| (a - lambda * b).abs()).fold(0.0, f64::max)
    }
}

/// Which eigensolver to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Solver {
    /// Dense up to [`DENSE_MAX_DIM`], Lanczos above.
    #[default]
    Auto,
    Dense,
    Lanczos,
}

/// Largest dimension handed to the dense solver under [`Solver::Auto`].
pub const DENSE_MAX_DIM: usize = 1 << 10;

const LANCZOS_TOL: f64 = 1e-11;

/// Eigenvalue and unit eigenvector.
#[derive(Debug, Clone)]
pub struct EigenPair {
    pub value: f64,
    pub vector: Vec<f64>,
    pub iterations: usize,
}

/// Smallest eigenpair of `op` orthogonal to the unit vector `kernel`.
pub fn second_smallest(op: &SymmetricOperator, kernel: &[f64], solver: Solver) -> Result<EigenPair> {
    let dim = op.dim();
    if dim < 2 {
        return Err(Error::param("dimension", dim, "at least 2 states"));
    }
    let dense = match solver {
        Solver::Dense => true,
        Solver::Lanczos => false,
        Solver::Auto => dim <= DENSE_MAX_DIM,
    };
    if dense || dim <= 8 {
        Ok(dense_second(op, kernel))
    } else {
        lanczos_second(op, kernel)
    }
}

fn dense_second(op: &SymmetricOperator, kernel: &[f64]) -> EigenPair {
    let eig = SymmetricEigen::new(op.to_dense());
    let k = DVector::from_column_slice(kernel);
    // Pick the smallest eigenvalue whose eigenvector is not the kernel; the
    // kernel is simple for an irreducible chain.
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let kernel_idx = order
        .iter()
        .copied()
        .take(2)
        .max_by(|&a, &b| {
            let oa = eig.eigenvectors.column(a).dot(&k).abs();
            let ob = eig.eigenvectors.column(b).dot(&k).abs();
            oa.total_cmp(&ob)
        })
        .expect("dim >= 2");
    let idx = order.iter().copied().take(2).find(|&i| i != kernel_idx).expect("dim >= 2");
    let mut vector: Vec<f64> = eig.eigenvectors.column(idx).iter().copied().collect();
    normalize_sign(&mut vector);
    EigenPair { value: eig.eigenvalues[idx], vector, iterations: 0 }
}

fn lanczos_second(op: &SymmetricOperator, kernel: &[f64]) -> Result<EigenPair> {
    let dim = op.dim();
    let max_iter = (dim - 1).min(1500);
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();

    // Deterministic, well-mixed start vector.
    let mut q: Vec<f64> = (0..dim)
        .map(|i| {
            let z = crate::rng::mix(0x5eed, i as u64);
            (z >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        })
        .collect();
    project_out(&mut q, kernel);
    let qn = norm(&q);
    scale(&mut q, 1.0 / qn);

    let mut w = vec![0.0; dim];
    for j in 0..max_iter {
        op.apply(&q, &mut w);
        let alpha = dot(&w, &q);
        axpy(&mut w, -alpha, &q);
        if let Some(prev) = basis.last() {
            axpy(&mut w, -betas[j - 1], prev);
        }
        basis.push(q.clone());
        alphas.push(alpha);
        // Full reorthogonalisation, twice, plus the kernel.
        for _ in 0..2 {
            project_out(&mut w, kernel);
            for b in &basis {
                let c = dot(&w, b);
                axpy(&mut w, -c, b);
            }
        }
        let beta = norm(&w);
        let steps = j + 1;
        let check = steps >= 20 && (steps % 10 == 0 || beta < 1e-13 || steps == max_iter);
        if check {
            let (theta, y) = smallest_ritz(&alphas, &betas);
            let est = beta * y[steps - 1].abs();
            if est <= LANCZOS_TOL * theta.abs().max(1e-3) || beta < 1e-13 {
                let vector = ritz_vector(&basis, &y);
                return finish(op, theta, vector, steps);
            }
        }
        if beta < 1e-13 {
            break;
        }
        betas.push(beta);
        q = w.iter().map(|x| x / beta).collect();
    }
    let (theta, y) = smallest_ritz(&alphas, &betas[..alphas.len().saturating_sub(1)]);
    let vector = ritz_vector(&basis, &y);
    let res = op.residual(theta, &vector);
    if res <= 1e-8 {
        return finish(op, theta, vector, alphas.len());
    }
    Err(Error::EigenNotConverged { residual: res, iterations: alphas.len() })
}

fn finish(op: &SymmetricOperator, theta: f64, mut vector: Vec<f64>, iterations: usize) -> Result<EigenPair> {
    let nv = norm(&vector);
    scale(&mut vector, 1.0 / nv);
    normalize_sign(&mut vector);
    // Rayleigh quotient of the normalised Ritz vector is at least as accurate.
    let mut lv = vec![0.0; vector.len()];
    op.apply(&vector, &mut lv);
    let rq = dot(&lv, &vector);
    let value = if rq.is_finite() { rq } else { theta };
    Ok(EigenPair { value, vector, iterations })
}

fn smallest_ritz(alphas: &[f64], betas: &[f64]) -> (f64, Vec<f64>) {
    let k = alphas.len();
    let mut t = DMatrix::zeros(k, k);
    for i in 0..k {
        t[(i, i)] = alphas[i];
        if i + 1 < k {
            t[(i, i + 1)] = betas[i];
            t[(i + 1, i)] = betas[i];
        }
    }
    let eig = SymmetricEigen::new(t);
    let idx = (0..k)
        .min_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]))
        .expect("k >= 1");
    (eig.eigenvalues[idx], eig.eigenvectors.column(idx).iter().copied().collect())
}

fn ritz_vector(basis: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let dim = basis[0].len();
    let mut v = vec![0.0; dim];
    for (b, &c) in basis.iter().zip(y) {
        axpy(&mut v, c, b);
    }
    v
}

/// Fixes the overall sign so the first entry with magnitude above 1e-12 is positive.
fn normalize_sign(v: &mut [f64]) {
    if let Some(first) = v.iter().find(|x| x.abs() > 1e-12) {
        if *first < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

fn project_out(v: &mut [f64], unit: &[f64]) {
    let c = dot(v, unit);
    axpy(v, -c, unit);
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn scale(a: &mut [f64], c: f64) {
    a.iter_mut().for_each(|x| *x *= c);
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += a * xi);
}
