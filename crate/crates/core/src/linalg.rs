//! Small dense helpers on top of nalgebra used across the crate.

use alloc::format;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Singular values in descending order.
pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let mut s: Vec<f64> = m
        .clone()
        .svd(false, false)
        .singular_values
        .iter()
        .copied()
        .collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// `sigma_min / sigma_max`, zero for an all-zero or empty matrix.
pub fn inverse_condition(m: &DMatrix<f64>) -> f64 {
    let s = singular_values(m);
    match (s.first(), s.last()) {
        (Some(&max), Some(&min)) if max > 0.0 => min / max,
        _ => 0.0,
    }
}

/// Number of singular values above `rel_tol * sigma_max`.
pub fn numerical_rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    let s = singular_values(m);
    match s.first() {
        Some(&max) if max > 0.0 => s.iter().filter(|&&v| v > rel_tol * max).count(),
        _ => 0,
    }
}

/// Largest eigenvalue modulus of a square matrix.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    m.complex_eigenvalues()
        .iter()
        .map(|z| libm::hypot(z.re, z.im))
        .fold(0.0, f64::max)
}

/// Minimum eigenvalue of the symmetric part of `m`.
pub fn min_symmetric_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return f64::INFINITY;
    }
    let sym = (m + m.transpose()) * 0.5;
    sym.symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Largest absolute asymmetry `|m - m^T|`.
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    (m - m.transpose()).amax()
}

/// Solves `lhs * X = rhs` by LU with partial pivoting.
pub fn solve(lhs: &DMatrix<f64>, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !lhs.is_square() || lhs.nrows() != rhs.nrows() {
        return Err(Error::Shape(format!(
            "cannot solve {}x{} system against {}x{} right-hand side",
            lhs.nrows(),
            lhs.ncols(),
            rhs.nrows(),
            rhs.ncols()
        )));
    }
    lhs.clone().lu().solve(rhs).ok_or_else(|| {
        Error::Singular(format!(
            "{}x{} matrix has a zero pivot",
            lhs.nrows(),
            lhs.ncols()
        ))
    })
}

/// Solves `X * rhs_of = lhs`, i.e. returns `lhs * rhs_of^{-1}` without forming the inverse.
pub fn solve_right(lhs: &DMatrix<f64>, rhs_of: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    Ok(solve(&rhs_of.transpose(), &lhs.transpose())?.transpose())
}

pub fn check_square(m: &DMatrix<f64>, n: usize, what: &str) -> Result<()> {
    if m.nrows() != n || m.ncols() != n {
        return Err(Error::Shape(format!(
            "{what} must be {n}x{n}, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

pub fn check_shape(m: &DMatrix<f64>, rows: usize, cols: usize, what: &str) -> Result<()> {
    if m.nrows() != rows || m.ncols() != cols {
        return Err(Error::Shape(format!(
            "{what} must be {rows}x{cols}, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

/// Indices of `k` columns picked by Gram-Schmidt with largest-residual pivoting
/// (QR with column pivoting). Stops early when the residual norm drops below
/// `rel_tol` times the largest initial column norm.
pub fn pivoted_columns(m: &DMatrix<f64>, k: usize, rel_tol: f64) -> Vec<usize> {
    let mut work = m.clone();
    let mut chosen = Vec::with_capacity(k);
    let scale = (0..work.ncols())
        .map(|j| work.column(j).norm())
        .fold(0.0, f64::max);
    if scale == 0.0 {
        return chosen;
    }
    while chosen.len() < k {
        let mut best = None;
        let mut best_norm = rel_tol * scale;
        for j in 0..work.ncols() {
            if chosen.contains(&j) {
                continue;
            }
            let nrm = work.column(j).norm();
            if nrm > best_norm {
                best_norm = nrm;
                best = Some(j);
            }
        }
        let Some(p) = best else { break };
        chosen.push(p);
        let q = work.column(p) / best_norm;
        for j in 0..work.ncols() {
            if chosen.contains(&j) {
                continue;
            }
            let proj = q.dot(&work.column(j));
            let mut col = work.column_mut(j);
            col.axpy(-proj, &q, 1.0);
        }
    }
    chosen
}
