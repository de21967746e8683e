//! Lagged scheduling-weighted products `z_w` and the covariance estimators built on them.
//!
//! For a path `r` and a nonempty word `w`,
//! `z^r_w(t) = r(t - |w|) mu_w(t - 1) / sqrt(p_w)`, defined once every factor has a
//! sample. Every average runs over the defined samples and divides by the full
//! path length `N`.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{simulate_deterministic, Dataset};
use crate::realization::{
    solve_scheduled_lyapunov, solve_stationary_lyapunov, DeterministicRealization,
};
use crate::words::{word_matrix_product, ScheduleWeights, Word};

/// Finite map from words to equally shaped matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixSeries {
    rows: usize,
    cols: usize,
    entries: BTreeMap<Word, DMatrix<f64>>,
}

impl MatrixSeries {
    pub fn new(rows: usize, cols: usize) -> Self {
        MatrixSeries {
            rows,
            cols,
            entries: BTreeMap::new(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn insert(&mut self, w: Word, value: DMatrix<f64>) -> Result<()> {
        linalg::check_shape(&value, self.rows, self.cols, "series value")?;
        self.entries.insert(w, value);
        Ok(())
    }

    /// Value at `w`; a missing word is an error, never an implicit zero.
    pub fn get(&self, w: &Word) -> Result<&DMatrix<f64>> {
        self.entries
            .get(w)
            .ok_or_else(|| Error::MissingWord(w.clone()))
    }

    pub fn contains(&self, w: &Word) -> bool {
        self.entries.contains_key(w)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Word, &DMatrix<f64>)> {
        self.entries.iter()
    }

    pub fn words(&self) -> impl Iterator<Item = &Word> {
        self.entries.keys()
    }

    /// Entrywise `self - other` on the words of `self`.
    pub fn difference(&self, other: &MatrixSeries) -> Result<MatrixSeries> {
        let mut out = MatrixSeries::new(self.rows, self.cols);
        for (w, m) in &self.entries {
            out.insert(w.clone(), m - other.get(w)?)?;
        }
        Ok(out)
    }

    /// Largest absolute entry over all stored words.
    pub fn max_abs(&self) -> f64 {
        self.entries.values().map(|m| m.amax()).fold(0.0, f64::max)
    }
}

/// Per-letter symmetric second moments `T_sigma`.
#[derive(Debug, Clone, PartialEq)]
pub struct SecondMomentSet(Vec<DMatrix<f64>>);

impl SecondMomentSet {
    pub fn new(moments: Vec<DMatrix<f64>>) -> Result<Self> {
        for (i, m) in moments.iter().enumerate() {
            if !m.is_square() {
                return Err(Error::Shape(format!("T_{} is not square", i + 1)));
            }
            if linalg::asymmetry(m) > 1e-10 {
                return Err(Error::InvalidArgument(format!(
                    "T_{} is not symmetric",
                    i + 1
                )));
            }
        }
        Ok(SecondMomentSet(moments))
    }

    /// Symmetrizes each member before storing it.
    pub fn symmetrized(moments: Vec<DMatrix<f64>>) -> Result<Self> {
        SecondMomentSet::new(
            moments
                .into_iter()
                .map(|m| (&m + m.transpose()) * 0.5)
                .collect(),
        )
    }

    pub fn get(&self, sigma: u8) -> &DMatrix<f64> {
        &self.0[sigma as usize - 1]
    }

    pub fn as_slice(&self) -> &[DMatrix<f64>] {
        &self.0
    }

    pub fn n_mu(&self) -> usize {
        self.0.len()
    }

    pub fn difference(&self, other: &SecondMomentSet) -> Result<SecondMomentSet> {
        SecondMomentSet::symmetrized(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }
}

/// Samples of `z^r_w`; row `j` holds sample index `start + j`.
#[derive(Debug, Clone, PartialEq)]
pub struct LaggedPath {
    pub start: usize,
    pub values: DMatrix<f64>,
}

/// `z^r_w(t) = r(t - |w|) mu_w(t - 1) / sqrt(p_w)` for `t = |w| .. N-1` (0-based); `z^r_e = r`.
pub fn z_path(
    r: &DMatrix<f64>,
    mu: &DMatrix<f64>,
    w: &Word,
    weights: &ScheduleWeights,
) -> Result<LaggedPath> {
    let n = r.nrows();
    let k = w.len();
    if mu.nrows() != n {
        return Err(Error::Shape(format!(
            "path length {n} but scheduling length {}",
            mu.nrows()
        )));
    }
    w.check_alphabet(mu.ncols().min(weights.n_mu()))?;
    if k == 0 {
        return Ok(LaggedPath {
            start: 0,
            values: r.clone(),
        });
    }
    if n <= k {
        return Err(Error::Range { index: k, len: n });
    }
    let scale = 1.0 / libm::sqrt(weights.of_word(w));
    let len = n - k;
    let mut values = r.rows(0, len).into_owned();
    let letters = w.letters();
    for j in 0..len {
        // letters sit at sample indices j .. j + k - 1, the first one aligned with r(j)
        let mut m = scale;
        for (off, &sigma) in letters.iter().enumerate() {
            m *= mu[(j + off, sigma as usize - 1)];
        }
        values.row_mut(j).scale_mut(m);
    }
    Ok(LaggedPath { start: k, values })
}

/// `(1/N) sum_t a(t) z(t)^T` over the samples where `z` is defined.
pub fn cross_average(a: &DMatrix<f64>, z: &LaggedPath) -> DMatrix<f64> {
    let n = a.nrows();
    let len = z.values.nrows();
    let head = a.rows(z.start, len);
    (head.transpose() * &z.values) / n as f64
}

/// `(1/N) sum_t a(t) z^r_w(t)^T`.
pub fn lagged_cross_moment(
    a: &DMatrix<f64>,
    r: &DMatrix<f64>,
    mu: &DMatrix<f64>,
    w: &Word,
    weights: &ScheduleWeights,
) -> Result<DMatrix<f64>> {
    if a.nrows() != r.nrows() {
        return Err(Error::Shape("paths differ in length".into()));
    }
    Ok(cross_average(a, &z_path(r, mu, w, weights)?))
}

/// `(1/N) sum_t u(t) u(t)^T`.
pub fn estimate_input_covariance(data: &Dataset) -> DMatrix<f64> {
    let u = data.u();
    (u.transpose() * u) / data.len().max(1) as f64
}

/// `p_sigma = (1/N) sum_t mu_sigma(t)^2`, with the constant channel pinned to 1.
pub fn estimate_weights(data: &Dataset) -> Result<ScheduleWeights> {
    let n = data.len().max(1) as f64;
    let mut p: Vec<f64> = (0..data.n_mu())
        .map(|j| data.mu().column(j).iter().map(|v| v * v).sum::<f64>() / n)
        .collect();
    p[0] = 1.0;
    ScheduleWeights::new(p)
}

fn check_lambda(lambda_u: &DMatrix<f64>, n_u: usize) -> Result<()> {
    linalg::check_square(lambda_u, n_u, "input covariance")?;
    if linalg::asymmetry(lambda_u) > 1e-10 {
        return Err(Error::InvalidArgument(
            "input covariance is not symmetric".into(),
        ));
    }
    if linalg::min_symmetric_eigenvalue(lambda_u) <= 0.0 {
        return Err(Error::Singular(
            "input covariance is not positive definite".into(),
        ));
    }
    Ok(())
}

/// `Psi^N_{u,y}(w) = (1/sqrt(p_w)) ((1/N) sum y(t) z^u_w(t)^T) Lambda_u^{-1}` for every `w`.
pub fn empirical_psi_uy<'a>(
    data: &Dataset,
    words: impl IntoIterator<Item = &'a Word>,
    weights: &ScheduleWeights,
    lambda_u: &DMatrix<f64>,
) -> Result<MatrixSeries> {
    check_lambda(lambda_u, data.n_u())?;
    let mut out = MatrixSeries::new(data.n_y(), data.n_u());
    for w in words {
        let z = z_path(data.u(), data.mu(), w, weights)?;
        let avg = cross_average(data.y(), &z) / libm::sqrt(weights.of_word(w));
        out.insert(w.clone(), linalg::solve_right(&avg, lambda_u)?)?;
    }
    Ok(out)
}

/// Output auto-covariances `(1/N) sum r(t) z^r_w(t)^T` keyed by `w`, and
/// per-letter second moments `(1/N) sum z^r_sigma(t) z^r_sigma(t)^T`.
pub fn output_moments<'a>(
    r: &DMatrix<f64>,
    mu: &DMatrix<f64>,
    words: impl IntoIterator<Item = &'a Word>,
    weights: &ScheduleWeights,
) -> Result<(MatrixSeries, SecondMomentSet)> {
    let ny = r.ncols();
    let mut lambda = MatrixSeries::new(ny, ny);
    for w in words {
        lambda.insert(w.clone(), cross_average(r, &z_path(r, mu, w, weights)?))?;
    }
    let n = r.nrows() as f64;
    let mut second = Vec::with_capacity(weights.n_mu());
    for sigma in 1..=weights.n_mu() as u8 {
        let z = z_path(r, mu, &Word::letter(sigma), weights)?;
        second.push((z.values.transpose() * &z.values) / n);
    }
    Ok((lambda, SecondMomentSet::symmetrized(second)?))
}

/// Output moments of a dataset's measured output.
pub fn empirical_output_moments<'a>(
    data: &Dataset,
    words: impl IntoIterator<Item = &'a Word>,
    weights: &ScheduleWeights,
) -> Result<(MatrixSeries, SecondMomentSet)> {
    output_moments(data.y(), data.mu(), words, weights)
}

/// Exact `Psi_{u,y}`: the sub-Markov function of the deterministic part.
pub fn exact_psi_uy<'a>(
    det: &DeterministicRealization,
    words: impl IntoIterator<Item = &'a Word>,
) -> Result<MatrixSeries> {
    let mut out = MatrixSeries::new(det.n_y(), det.n_u());
    for w in words {
        out.insert(w.clone(), det.sub_markov(w)?)?;
    }
    Ok(out)
}

/// Stationary contribution of the deterministic subsystem (driven by white `u`) to the
/// output covariances:
///
/// ```text
/// S       = sum_s p_s (A_s S A_s^T + B_s Lambda_u B_s^T)
/// Lambda_S(sigma w) = sqrt(p_{sigma w}) C A_w (A_sigma S C^T + B_sigma Lambda_u D^T)
/// T_S     = C S C^T + D Lambda_u D^T
/// ```
///
/// Only nonempty words are accepted.
pub fn exact_deterministic_moments<'a>(
    det: &DeterministicRealization,
    lambda_u: &DMatrix<f64>,
    weights: &ScheduleWeights,
    words: impl IntoIterator<Item = &'a Word>,
) -> Result<(MatrixSeries, SecondMomentSet)> {
    det.validate()?;
    check_lambda(lambda_u, det.n_u())?;
    let forcing: Vec<_> = det
        .b
        .iter()
        .zip(weights.as_slice())
        .map(|(b, &p)| b * lambda_u * b.transpose() * p)
        .collect();
    let p = solve_scheduled_lyapunov(&det.a, &forcing, weights)?;
    let s = &p[0];
    let mut lambda = MatrixSeries::new(det.n_y(), det.n_y());
    for w in words {
        let (sigma, rest) = w.split_first().ok_or_else(|| {
            Error::InvalidArgument("deterministic moments need nonempty words".into())
        })?;
        let i = sigma as usize - 1;
        let inner = &det.a[i] * s * det.c.transpose() + &det.b[i] * lambda_u * det.d.transpose();
        let value =
            &det.c * word_matrix_product(&rest, &det.a)? * inner * libm::sqrt(weights.of_word(w));
        lambda.insert(w.clone(), value)?;
    }
    let t = &det.c * s * det.c.transpose() + &det.d * lambda_u * det.d.transpose();
    Ok((
        lambda,
        SecondMomentSet::symmetrized(alloc::vec![t; weights.n_mu()])?,
    ))
}

/// The approximate-covariance formulas in their published form:
///
/// ```text
/// P_sigma = p_sigma sum_s (A_s P_s A_s^T + B_s Lambda_u B_s^T)
/// Lambda_S(sigma w) = (1/sqrt(p_{sigma w})) C A_w (A_sigma P_sigma C^T + B_sigma Lambda_u)
/// T_S(sigma) = (1/p_sigma) (C P_sigma C^T + Lambda_u)
/// ```
///
/// These coincide with [`exact_deterministic_moments`] only when every `p_sigma = 1`
/// and `D = I`; they require `n_u = n_y`.
pub fn published_deterministic_moments<'a>(
    det: &DeterministicRealization,
    lambda_u: &DMatrix<f64>,
    weights: &ScheduleWeights,
    words: impl IntoIterator<Item = &'a Word>,
) -> Result<(MatrixSeries, SecondMomentSet)> {
    det.validate()?;
    check_lambda(lambda_u, det.n_u())?;
    if det.n_u() != det.n_y() {
        return Err(Error::Shape(
            "published moment formulas need n_u = n_y".into(),
        ));
    }
    let p = solve_stationary_lyapunov(&det.a, &det.b, lambda_u, weights)?;
    let mut lambda = MatrixSeries::new(det.n_y(), det.n_y());
    for w in words {
        let (sigma, rest) = w.split_first().ok_or_else(|| {
            Error::InvalidArgument("deterministic moments need nonempty words".into())
        })?;
        let i = sigma as usize - 1;
        let inner = &det.a[i] * &p[i] * det.c.transpose() + &det.b[i] * lambda_u;
        let value =
            &det.c * word_matrix_product(&rest, &det.a)? * inner / libm::sqrt(weights.of_word(w));
        lambda.insert(w.clone(), value)?;
    }
    let t = p
        .iter()
        .zip(weights.as_slice())
        .map(|(pi, &ps)| (&det.c * pi * det.c.transpose() + lambda_u) / ps)
        .collect();
    Ok((lambda, SecondMomentSet::symmetrized(t)?))
}

/// Covariances of the residual `y - y_d` where `y_d` is simulated from a deterministic model.
#[derive(Debug, Clone)]
pub struct ResidualMoments {
    pub psi: MatrixSeries,
    pub second_moments: SecondMomentSet,
    pub residual: DMatrix<f64>,
}

/// Simulates `det` on the dataset's input and scheduling, forms the residual output
/// and estimates its covariance sequence and second moments.
pub fn residual_psi_ys<'a>(
    data: &Dataset,
    det: &DeterministicRealization,
    words: impl IntoIterator<Item = &'a Word>,
    weights: &ScheduleWeights,
) -> Result<ResidualMoments> {
    if det.n_y() != data.n_y() || det.n_u() != data.n_u() || det.n_mu() != data.n_mu() {
        return Err(Error::Shape(
            "deterministic model does not match the dataset".into(),
        ));
    }
    let y_d = simulate_deterministic(det, data.u(), data.mu())?;
    let residual = data.y() - y_d;
    let (psi, second_moments) = output_moments(&residual, data.mu(), words, weights)?;
    Ok(ResidualMoments {
        psi,
        second_moments,
        residual,
    })
}
