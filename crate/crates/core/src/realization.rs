//! Basis-reduced Ho-Kalman realization, stationary Lyapunov solvers, the innovation
//! recursion for the stochastic part and the block composition of both parts.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::covariances::{MatrixSeries, SecondMomentSet};
use crate::error::{Error, Result};
use crate::hankel::{HankelSet, Selection};
use crate::linalg::{self, check_shape, check_square};
use crate::model::{self, LpvSsaModel};
use crate::words::{enumerate_words, ScheduleWeights, Word};

/// `({A_sigma, B_sigma}, C, D)` without a noise channel.
#[derive(Debug, Clone, PartialEq)]
pub struct DeterministicRealization {
    pub a: Vec<DMatrix<f64>>,
    pub b: Vec<DMatrix<f64>>,
    pub c: DMatrix<f64>,
    pub d: DMatrix<f64>,
}

impl DeterministicRealization {
    pub fn order(&self) -> usize {
        self.c.ncols()
    }

    pub fn n_y(&self) -> usize {
        self.c.nrows()
    }

    pub fn n_u(&self) -> usize {
        self.d.ncols()
    }

    pub fn n_mu(&self) -> usize {
        self.a.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n_mu = self.n_mu();
        if n_mu == 0 {
            return Err(Error::InvalidArgument(
                "realization needs at least one scheduling channel".into(),
            ));
        }
        if self.b.len() != n_mu {
            return Err(Error::Shape(format!(
                "B has {} members, expected {n_mu}",
                self.b.len()
            )));
        }
        let (n, ny, nu) = (self.order(), self.n_y(), self.n_u());
        check_shape(&self.d, ny, nu, "D")?;
        for (a, b) in self.a.iter().zip(&self.b) {
            check_square(a, n, "A")?;
            check_shape(b, n, nu, "B")?;
        }
        Ok(())
    }

    pub fn sub_markov(&self, w: &Word) -> Result<DMatrix<f64>> {
        model::sub_markov(&self.a, &self.b, &self.c, &self.d, w)
    }

    /// Sub-Markov parameters for every word of length at most `max_len`.
    pub fn markov_series(&self, max_len: usize) -> Result<MatrixSeries> {
        self.validate()?;
        let mut out = MatrixSeries::new(self.n_y(), self.n_u());
        out.insert(Word::empty(), self.d.clone())?;
        // A_s B_sigma for the words of the previous length
        let mut frontier: BTreeMap<Word, DMatrix<f64>> = BTreeMap::new();
        for sigma in 1..=self.n_mu() as u8 {
            frontier.insert(Word::letter(sigma), self.b[sigma as usize - 1].clone());
        }
        for len in 1..=max_len {
            for (w, x) in &frontier {
                out.insert(w.clone(), &self.c * x)?;
            }
            if len == max_len {
                break;
            }
            let mut next = BTreeMap::new();
            for (w, x) in &frontier {
                for tau in 1..=self.n_mu() as u8 {
                    next.insert(w.concat(&Word::letter(tau)), &self.a[tau as usize - 1] * x);
                }
            }
            frontier = next;
        }
        Ok(out)
    }

    pub fn stability_radius(&self, weights: &ScheduleWeights) -> f64 {
        model::stability_radius(&self.a, weights)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HoKalmanOptions {
    /// Largest accepted `sigma_max / sigma_min` of the Hankel matrix.
    pub cond_max: f64,
    /// Condition number above which the diagnostics carry a warning.
    pub warn_cond: f64,
    /// Rank-`r` truncated SVD factorization instead of square solves.
    pub truncate_to: Option<usize>,
}

impl Default for HoKalmanOptions {
    fn default() -> Self {
        HoKalmanOptions {
            cond_max: 1e10,
            warn_cond: 1e6,
            truncate_to: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HoKalmanDiagnostics {
    pub singular_values: Vec<f64>,
    /// `sigma_max / sigma_min` of the Hankel (or of its retained part when truncating).
    pub condition: f64,
    pub warning: bool,
}

fn condition_check(sv: &[f64], opts: &HoKalmanOptions) -> Result<HoKalmanDiagnostics> {
    let (smax, smin) = (
        sv.first().copied().unwrap_or(0.0),
        sv.last().copied().unwrap_or(0.0),
    );
    if smax == 0.0 {
        return Err(Error::RankDeficient {
            requested: sv.len(),
            achieved: 0,
        });
    }
    if smin * opts.cond_max <= smax {
        return Err(Error::IllConditioned {
            sigma_min: smin,
            sigma_max: smax,
        });
    }
    let condition = smax / smin;
    Ok(HoKalmanDiagnostics {
        singular_values: sv.to_vec(),
        condition,
        warning: condition > opts.warn_cond,
    })
}

/// `A_sigma = H^{-1} H_sigma`, `B_sigma = H^{-1} H_in_sigma`, `C = H_out`, `D = M(e)`.
pub fn ho_kalman(
    hankels: &HankelSet,
    m_eps: &DMatrix<f64>,
    opts: &HoKalmanOptions,
) -> Result<(DeterministicRealization, HoKalmanDiagnostics)> {
    let h = &hankels.h;
    if !h.is_square() {
        return Err(Error::Shape(format!(
            "Hankel matrix is {}x{}",
            h.nrows(),
            h.ncols()
        )));
    }
    let n = h.nrows();
    let n_mu = hankels.shifted.len();
    if hankels.input.len() != n_mu || n_mu == 0 {
        return Err(Error::Shape(
            "shifted and input Hankel families differ in size".into(),
        ));
    }
    let ny = hankels.output.nrows();
    check_shape(&hankels.output, ny, n, "output Hankel")?;
    let nu = m_eps.ncols();
    check_shape(m_eps, ny, nu, "M(e)")?;
    for (hs, hi) in hankels.shifted.iter().zip(&hankels.input) {
        check_square(hs, n, "shifted Hankel")?;
        check_shape(hi, n, nu, "input Hankel")?;
    }
    let sv = linalg::singular_values(h);

    match opts.truncate_to {
        None => {
            let diag = condition_check(&sv, opts)?;
            let lu = h.clone().lu();
            let solve = |rhs: &DMatrix<f64>| {
                lu.solve(rhs)
                    .ok_or_else(|| Error::Singular("Hankel matrix has a zero pivot".into()))
            };
            let det = DeterministicRealization {
                a: hankels.shifted.iter().map(&solve).collect::<Result<_>>()?,
                b: hankels.input.iter().map(&solve).collect::<Result<_>>()?,
                c: hankels.output.clone(),
                d: m_eps.clone(),
            };
            Ok((det, diag))
        }
        Some(r) => {
            if r == 0 || r > n {
                return Err(Error::InvalidArgument(format!(
                    "truncation rank {r} outside 1..={n}"
                )));
            }
            let mut diag = condition_check(&sv[..r], opts)?;
            diag.singular_values = sv;
            let svd = h.clone().svd(true, true);
            let (u, vt) = (
                svd.u.expect("left vectors"),
                svd.v_t.expect("right vectors"),
            );
            // singular values come unsorted from nalgebra
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
            let keep = &order[..r];
            let s: Vec<f64> = keep
                .iter()
                .map(|&i| libm::sqrt(svd.singular_values[i]))
                .collect();
            let u_r = u.select_columns(keep);
            let vt_r = vt.select_rows(keep);
            // O = U S^{1/2}, R = S^{1/2} V^T; O^+ = S^{-1/2} U^T, R^+ = V S^{-1/2}
            let mut o_pinv = u_r.transpose();
            let mut r_pinv = vt_r.transpose();
            for (k, sk) in s.iter().enumerate() {
                o_pinv.row_mut(k).scale_mut(1.0 / sk);
                r_pinv.column_mut(k).scale_mut(1.0 / sk);
            }
            Ok((
                DeterministicRealization {
                    a: hankels
                        .shifted
                        .iter()
                        .map(|hs| &o_pinv * hs * &r_pinv)
                        .collect(),
                    b: hankels.input.iter().map(|hi| &o_pinv * hi).collect(),
                    c: &hankels.output * &r_pinv,
                    d: m_eps.clone(),
                },
                diag,
            ))
        }
    }
}

/// Builds the four Hankel matrices of `series` for `sel` and applies [`ho_kalman`]
/// with `D = series(e)`.
pub fn realize_deterministic(
    series: &MatrixSeries,
    sel: &Selection,
    n_mu: usize,
    opts: &HoKalmanOptions,
) -> Result<(DeterministicRealization, HoKalmanDiagnostics)> {
    let hankels = HankelSet::build(series, sel, n_mu)?;
    ho_kalman(&hankels, series.get(&Word::empty())?, opts)
}

/// Solves `P_sigma = p_sigma sum_s (A_s P_s A_s^T + F_s)` through `P_sigma = p_sigma S`,
/// `S = sum_s (p_s A_s S A_s^T + F_s)`, by vectorization.
pub fn solve_scheduled_lyapunov(
    a: &[DMatrix<f64>],
    forcing: &[DMatrix<f64>],
    weights: &ScheduleWeights,
) -> Result<Vec<DMatrix<f64>>> {
    let n_mu = weights.n_mu();
    if a.len() != n_mu || forcing.len() != n_mu {
        return Err(Error::Shape(format!(
            "{} A matrices and {} forcing terms for {n_mu} weights",
            a.len(),
            forcing.len()
        )));
    }
    let n = a[0].nrows();
    for (ai, fi) in a.iter().zip(forcing) {
        check_square(ai, n, "A")?;
        check_square(fi, n, "forcing")?;
    }
    let rho = model::stability_radius(a, weights);
    if rho >= 1.0 {
        return Err(Error::Unstable(rho));
    }
    let mut lhs = DMatrix::identity(n * n, n * n);
    let mut rhs = DMatrix::zeros(n, n);
    for ((ai, fi), &p) in a.iter().zip(forcing).zip(weights.as_slice()) {
        lhs -= ai.kronecker(ai) * p;
        rhs += fi;
    }
    let rhs = DMatrix::from_column_slice(n * n, 1, rhs.as_slice());
    let vec_s = linalg::solve(&lhs, &rhs)?;
    let s = DMatrix::from_column_slice(n, n, vec_s.as_slice());
    let s = (&s + s.transpose()) * 0.5;
    Ok(weights.as_slice().iter().map(|&p| &s * p).collect())
}

/// `P_sigma = p_sigma sum_s (A_s P_s A_s^T + B_s Lambda_u B_s^T)`.
pub fn solve_stationary_lyapunov(
    a: &[DMatrix<f64>],
    b: &[DMatrix<f64>],
    lambda_u: &DMatrix<f64>,
    weights: &ScheduleWeights,
) -> Result<Vec<DMatrix<f64>>> {
    if b.len() != a.len() {
        return Err(Error::Shape("A and B families differ in size".into()));
    }
    let forcing: Vec<_> = b.iter().map(|bi| bi * lambda_u * bi.transpose()).collect();
    solve_scheduled_lyapunov(a, &forcing, weights)
}

// `(K_sigma, Q_sigma)` for every letter.
type GainsAndVariances = (Vec<DMatrix<f64>>, Vec<DMatrix<f64>>);

/// Relative residual of [`solve_stationary_lyapunov`]'s equation at `p`.
pub fn lyapunov_residual(
    a: &[DMatrix<f64>],
    b: &[DMatrix<f64>],
    lambda_u: &DMatrix<f64>,
    weights: &ScheduleWeights,
    p: &[DMatrix<f64>],
) -> f64 {
    let mut sum = DMatrix::zeros(p[0].nrows(), p[0].ncols());
    for i in 0..a.len() {
        sum += &a[i] * &p[i] * a[i].transpose() + &b[i] * lambda_u * b[i].transpose();
    }
    let mut worst: f64 = 0.0;
    for (pi, &w) in p.iter().zip(weights.as_slice()) {
        let r = (pi - &sum * w).norm() / pi.norm().max(f64::MIN_POSITIVE);
        worst = worst.max(r);
    }
    worst
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecursionOptions {
    pub max_iter: usize,
    /// Stop once `max_sigma ||P^{i+1}_sigma - P^i_sigma||_F` drops below this.
    pub tol: f64,
    /// Relative positive-definiteness threshold on `Q^i_sigma`, scaled by `trace(p_sigma T_sigma)`.
    pub pd_tol: f64,
}

impl Default for RecursionOptions {
    fn default() -> Self {
        RecursionOptions {
            max_iter: 50,
            tol: 1e-9,
            pd_tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecursionResult {
    pub k: Vec<DMatrix<f64>>,
    pub q: Vec<DMatrix<f64>>,
    pub p: Vec<DMatrix<f64>>,
    pub iterations: usize,
    pub converged: bool,
    /// `max_sigma ||P^{i+1}_sigma - P^i_sigma||_F` per iteration.
    pub increments: Vec<f64>,
    /// Smallest eigenvalue seen over all `P^i_sigma`.
    pub min_p_eigenvalue: f64,
}

/// Iterates, from `P^0 = 0`,
///
/// ```text
/// Q^i_sigma = p_sigma T_sigma - C P^i_sigma C^T
/// K^i_sigma = (sqrt(p_sigma) G_sigma - A_sigma P^i_sigma C^T) (Q^i_sigma)^{-1}
/// P^{i+1}_sigma = p_sigma sum_s (A_s P^i_s A_s^T + K^i_s Q^i_s K^i_s^T)
/// ```
///
/// and returns `K`, `Q` evaluated at the last `P`.
pub fn stochastic_recursion(
    a: &[DMatrix<f64>],
    g: &[DMatrix<f64>],
    c: &DMatrix<f64>,
    second_moments: &SecondMomentSet,
    weights: &ScheduleWeights,
    opts: &RecursionOptions,
) -> Result<RecursionResult> {
    let n_mu = weights.n_mu();
    if a.len() != n_mu || g.len() != n_mu || second_moments.n_mu() != n_mu {
        return Err(Error::Shape("recursion families differ in size".into()));
    }
    let (ny, n) = (c.nrows(), c.ncols());
    for i in 0..n_mu {
        check_square(&a[i], n, "A_s")?;
        check_shape(&g[i], n, ny, "G")?;
        check_square(second_moments.get(i as u8 + 1), ny, "second moment")?;
    }
    let p_w = weights.as_slice();
    let gains = |p: &[DMatrix<f64>], iteration: usize| -> Result<GainsAndVariances> {
        let mut ks = Vec::with_capacity(n_mu);
        let mut qs = Vec::with_capacity(n_mu);
        for i in 0..n_mu {
            let t = second_moments.get(i as u8 + 1) * p_w[i];
            let q = &t - c * &p[i] * c.transpose();
            let q = (&q + q.transpose()) * 0.5;
            let min_eig = linalg::min_symmetric_eigenvalue(&q);
            let scale = t.trace().abs().max(f64::MIN_POSITIVE);
            if min_eig <= opts.pd_tol * scale {
                return Err(Error::Indefinite {
                    letter: i as u8 + 1,
                    iteration,
                    eigenvalue: min_eig,
                });
            }
            let num = &g[i] * libm::sqrt(p_w[i]) - &a[i] * &p[i] * c.transpose();
            ks.push(linalg::solve_right(&num, &q)?);
            qs.push(q);
        }
        Ok((ks, qs))
    };

    let mut p = vec![DMatrix::zeros(n, n); n_mu];
    let mut increments = Vec::new();
    let mut converged = false;
    let mut min_p_eigenvalue: f64 = 0.0;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        let (ks, qs) = gains(&p, iterations)?;
        let mut sum = DMatrix::zeros(n, n);
        for i in 0..n_mu {
            sum += &a[i] * &p[i] * a[i].transpose() + &ks[i] * &qs[i] * ks[i].transpose();
        }
        let sum = (&sum + sum.transpose()) * 0.5;
        let next: Vec<DMatrix<f64>> = p_w.iter().map(|&w| &sum * w).collect();
        let inc = next
            .iter()
            .zip(&p)
            .map(|(x, y)| (x - y).norm())
            .fold(0.0, f64::max);
        for m in &next {
            if n > 0 {
                min_p_eigenvalue = min_p_eigenvalue.min(linalg::min_symmetric_eigenvalue(m));
            }
        }
        increments.push(inc);
        p = next;
        iterations += 1;
        if !inc.is_finite() {
            return Err(Error::Divergence(iterations));
        }
        if inc < opts.tol {
            converged = true;
            break;
        }
    }
    let (k, q) = gains(&p, iterations)?;
    Ok(RecursionResult {
        k,
        q,
        p,
        iterations,
        converged,
        increments,
        min_p_eigenvalue,
    })
}

/// Innovation-form realization of the stochastic output component.
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticRealization {
    /// `A_sigma / sqrt(p_sigma)` of the covariance realization.
    pub a: Vec<DMatrix<f64>>,
    /// Input matrices of the covariance realization.
    pub g: Vec<DMatrix<f64>>,
    pub c: DMatrix<f64>,
    pub k: Vec<DMatrix<f64>>,
    pub q: Vec<DMatrix<f64>>,
    pub p: Vec<DMatrix<f64>>,
    pub iterations: usize,
    pub converged: bool,
    pub increments: Vec<f64>,
    /// Smallest eigenvalue over all `P^i_sigma` iterates.
    pub min_p_eigenvalue: f64,
}

impl StochasticRealization {
    /// Zero-dimensional part with innovation variances `q`.
    pub fn empty(n_y: usize, q: Vec<DMatrix<f64>>) -> Self {
        let n_mu = q.len();
        StochasticRealization {
            a: vec![DMatrix::zeros(0, 0); n_mu],
            g: vec![DMatrix::zeros(0, n_y); n_mu],
            c: DMatrix::zeros(n_y, 0),
            k: vec![DMatrix::zeros(0, n_y); n_mu],
            q,
            p: vec![DMatrix::zeros(0, 0); n_mu],
            iterations: 0,
            converged: true,
            increments: Vec::new(),
            min_p_eigenvalue: 0.0,
        }
    }

    pub fn order(&self) -> usize {
        self.c.ncols()
    }

    pub fn n_y(&self) -> usize {
        self.c.nrows()
    }
}

/// Ho-Kalman on the output covariance series (with `M(e) = I`), rescaling
/// `A^s_sigma = A_sigma / sqrt(p_sigma)`, followed by [`stochastic_recursion`].
pub fn realize_stochastic(
    series: &MatrixSeries,
    second_moments: &SecondMomentSet,
    sel: &Selection,
    weights: &ScheduleWeights,
    ho_opts: &HoKalmanOptions,
    rec_opts: &RecursionOptions,
) -> Result<(StochasticRealization, HoKalmanDiagnostics)> {
    let n_mu = weights.n_mu();
    let ny = series.rows();
    if series.cols() != ny {
        return Err(Error::Shape(
            "output covariance series must be square".into(),
        ));
    }
    let hankels = HankelSet::build(series, sel, n_mu)?;
    let (cov, diag) = ho_kalman(&hankels, &DMatrix::identity(ny, ny), ho_opts)?;
    let a_s: Vec<_> = cov
        .a
        .iter()
        .zip(weights.as_slice())
        .map(|(a, &p)| a / libm::sqrt(p))
        .collect();
    let rec = stochastic_recursion(&a_s, &cov.b, &cov.c, second_moments, weights, rec_opts)?;
    Ok((
        StochasticRealization {
            a: a_s,
            g: cov.b,
            c: cov.c,
            k: rec.k,
            q: rec.q,
            p: rec.p,
            iterations: rec.iterations,
            converged: rec.converged,
            increments: rec.increments,
            min_p_eigenvalue: rec.min_p_eigenvalue,
        },
        diag,
    ))
}

/// Block composition: `A = diag(A_d, A_s)`, `B = [B_d; 0]`, `K = [0; K_s]`,
/// `C = [C_d C_s]`, `D = D_d`, `Q = Q_s`.
pub fn compose(
    det: &DeterministicRealization,
    stoch: &StochasticRealization,
    weights: &ScheduleWeights,
) -> Result<LpvSsaModel> {
    det.validate()?;
    if stoch.n_y() != det.n_y() {
        return Err(Error::Shape(format!(
            "deterministic part has {} outputs, stochastic part {}",
            det.n_y(),
            stoch.n_y()
        )));
    }
    let n_mu = det.n_mu();
    if stoch.a.len() != n_mu || stoch.k.len() != n_mu || stoch.q.len() != n_mu {
        return Err(Error::Shape(
            "parts disagree on the number of scheduling channels".into(),
        ));
    }
    let (nd, ns, ny, nu) = (det.order(), stoch.order(), det.n_y(), det.n_u());
    let n = nd + ns;
    let mut a = Vec::with_capacity(n_mu);
    let mut b = Vec::with_capacity(n_mu);
    let mut k = Vec::with_capacity(n_mu);
    for i in 0..n_mu {
        let mut ai = DMatrix::zeros(n, n);
        ai.view_mut((0, 0), (nd, nd)).copy_from(&det.a[i]);
        ai.view_mut((nd, nd), (ns, ns)).copy_from(&stoch.a[i]);
        a.push(ai);
        let mut bi = DMatrix::zeros(n, nu);
        bi.view_mut((0, 0), (nd, nu)).copy_from(&det.b[i]);
        b.push(bi);
        let mut ki = DMatrix::zeros(n, ny);
        ki.view_mut((nd, 0), (ns, ny)).copy_from(&stoch.k[i]);
        k.push(ki);
    }
    let mut c = DMatrix::zeros(ny, n);
    c.view_mut((0, 0), (ny, nd)).copy_from(&det.c);
    c.view_mut((0, nd), (ny, ns)).copy_from(&stoch.c);
    LpvSsaModel::new(a, b, k, stoch.q.clone(), c, det.d.clone(), weights.clone())
}

/// Sub-Markov values of `det` at every word in `Sigma^{<= max_len}`, listed in word order.
pub fn markov_table(
    det: &DeterministicRealization,
    max_len: usize,
) -> Result<Vec<(Word, DMatrix<f64>)>> {
    let series = det.markov_series(max_len)?;
    enumerate_words(det.n_mu(), max_len)
        .into_iter()
        .map(|w| series.get(&w).cloned().map(|m| (w, m)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmark;
    use crate::hankel::{ColumnIndex, RowIndex};

    fn w(s: &str) -> Word {
        s.parse().unwrap()
    }

    fn m1(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    #[test]
    fn trivial_ho_kalman() {
        let e1 = DMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
        let hs = HankelSet {
            h: DMatrix::identity(2, 2),
            shifted: vec![DMatrix::zeros(2, 2); 2],
            input: vec![e1.clone(); 2],
            output: e1.transpose(),
        };
        let (det, diag) = ho_kalman(&hs, &m1(0.0), &HoKalmanOptions::default()).unwrap();
        assert!(det.a.iter().all(|a| a.amax() == 0.0));
        assert_eq!(det.b[0], e1);
        assert_eq!(det.c, e1.transpose());
        assert_eq!(det.d, m1(0.0));
        assert_eq!(diag.condition, 1.0);
        assert!(!diag.warning);
    }

    #[test]
    fn benchmark_deterministic_part_is_recovered() {
        let sys = benchmark::system();
        let det = sys.deterministic_part();
        let series = det.markov_series(7).unwrap();
        let (hat, _) = realize_deterministic(
            &series,
            &benchmark::deterministic_selection(),
            2,
            &Default::default(),
        )
        .unwrap();
        for (word, value) in [
            ("11", 0.80),
            ("21", 0.40),
            ("111", 0.32),
            ("221", 0.16),
            ("1111", 0.128),
        ] {
            assert!(
                (hat.sub_markov(&w(word)).unwrap()[(0, 0)] - value).abs() < 1e-12,
                "{word}"
            );
        }
        let table = markov_table(&hat, 8).unwrap();
        for (word, value) in table {
            assert!(
                (value - sys.sub_markov(&word).unwrap()).amax() < 1e-12,
                "{word}"
            );
        }
    }

    #[test]
    fn markov_series_matches_direct_products() {
        let det = benchmark::system().deterministic_part();
        let series = det.markov_series(5).unwrap();
        assert_eq!(series.len(), 63);
        for (word, value) in series.iter() {
            assert!((value - det.sub_markov(word).unwrap()).amax() < 1e-14);
        }
    }

    #[test]
    fn zero_series_is_rank_deficient() {
        let mut series = MatrixSeries::new(1, 1);
        for word in enumerate_words(2, 7) {
            series.insert(word, m1(0.0)).unwrap();
        }
        let err = realize_deterministic(
            &series,
            &benchmark::deterministic_selection(),
            2,
            &Default::default(),
        );
        assert!(matches!(err, Err(Error::RankDeficient { achieved: 0, .. })));
    }

    #[test]
    fn ill_conditioned_hankel_is_rejected() {
        let mut h = DMatrix::identity(2, 2);
        h[(1, 1)] = 1e-12;
        let hs = HankelSet {
            h,
            shifted: vec![DMatrix::zeros(2, 2)],
            input: vec![DMatrix::zeros(2, 1)],
            output: DMatrix::zeros(1, 2),
        };
        let err = ho_kalman(&hs, &m1(0.0), &HoKalmanOptions::default()).unwrap_err();
        assert!(matches!(err, Error::IllConditioned { sigma_min, .. } if sigma_min == 1e-12));
        assert!(err.is_numerical());
    }

    #[test]
    fn truncated_mode_on_oversized_selection() {
        // Order-3 benchmark realized from a 4-row selection, truncated to rank 3.
        let det = benchmark::system().deterministic_part();
        let series = det.markov_series(9).unwrap();
        let sel = Selection::new(
            vec![
                RowIndex::new(Word::empty(), 1),
                RowIndex::new(w("1"), 1),
                RowIndex::new(w("21"), 1),
                RowIndex::new(w("2"), 1),
            ],
            vec![
                ColumnIndex::new(2, Word::empty(), 1),
                ColumnIndex::new(1, w("2"), 1),
                ColumnIndex::new(2, w("21"), 1),
                ColumnIndex::new(1, Word::empty(), 1),
            ],
        )
        .unwrap();
        let square = realize_deterministic(&series, &sel, 2, &Default::default());
        assert!(square.is_err());
        let opts = HoKalmanOptions {
            truncate_to: Some(3),
            ..Default::default()
        };
        let (hat, diag) = realize_deterministic(&series, &sel, 2, &opts).unwrap();
        assert_eq!(hat.order(), 3);
        assert_eq!(diag.singular_values.len(), 4);
        for (word, value) in markov_table(&hat, 6).unwrap() {
            assert!(
                (value - det.sub_markov(&word).unwrap()).amax() < 1e-9,
                "{word}"
            );
        }
    }

    fn fixed_point_lyapunov(
        a: &[DMatrix<f64>],
        b: &[DMatrix<f64>],
        lam: &DMatrix<f64>,
        p: &ScheduleWeights,
    ) -> Vec<DMatrix<f64>> {
        let n = a[0].nrows();
        let mut cur = vec![DMatrix::zeros(n, n); a.len()];
        for _ in 0..2000 {
            let mut sum = DMatrix::zeros(n, n);
            for i in 0..a.len() {
                sum += &a[i] * &cur[i] * a[i].transpose() + &b[i] * lam * b[i].transpose();
            }
            cur = p.as_slice().iter().map(|&w| &sum * w).collect();
        }
        cur
    }

    #[test]
    fn lyapunov_cases() {
        let one = ScheduleWeights::uniform(1);
        let p = solve_stationary_lyapunov(&[m1(0.5)], &[m1(1.0)], &m1(1.0), &one).unwrap();
        assert!((p[0][(0, 0)] - 4.0 / 3.0).abs() < 1e-12);

        let sys = benchmark::system();
        let weights = benchmark::weights();
        let lam = m1(0.75);
        let zero_a = vec![DMatrix::zeros(3, 3); 2];
        let p0 = solve_stationary_lyapunov(&zero_a, &sys.b, &lam, &weights).unwrap();
        let forcing: DMatrix<f64> = sys.b.iter().map(|b| b * &lam * b.transpose()).sum();
        for (pi, &w) in p0.iter().zip(weights.as_slice()) {
            assert!((pi - &forcing * w).amax() < 1e-14);
        }

        let p = solve_stationary_lyapunov(&sys.a, &sys.b, &lam, &weights).unwrap();
        assert!(lyapunov_residual(&sys.a, &sys.b, &lam, &weights, &p) < 1e-10);
        let oracle = fixed_point_lyapunov(&sys.a, &sys.b, &lam, &weights);
        for (x, y) in p.iter().zip(&oracle) {
            assert!((x - y).amax() < 1e-8);
        }
    }

    #[test]
    fn unstable_family_is_rejected() {
        let err = solve_stationary_lyapunov(
            &[m1(1.2)],
            &[m1(1.0)],
            &m1(1.0),
            &ScheduleWeights::uniform(1),
        );
        assert!(matches!(err, Err(Error::Unstable(r)) if (r - 1.44).abs() < 1e-12));
    }

    #[test]
    fn recursion_with_zero_gain_input() {
        let weights = benchmark::weights();
        let a = vec![DMatrix::identity(2, 2) * 0.3; 2];
        let g = vec![DMatrix::zeros(2, 1); 2];
        let c = DMatrix::from_row_slice(1, 2, &[1.0, 0.5]);
        let t = SecondMomentSet::new(vec![m1(2.0), m1(1.5)]).unwrap();
        let res = stochastic_recursion(&a, &g, &c, &t, &weights, &Default::default()).unwrap();
        assert!(res.converged);
        assert!(res.k.iter().all(|k| k.amax() == 0.0));
        assert!(res.p.iter().all(|p| p.amax() == 0.0));
        assert_eq!(res.q[0], m1(2.0));
        assert!((res.q[1][(0, 0)] - 1.125).abs() < 1e-15);
    }

    // Brute-force scalar fixed point of P = a^2 P + (g - a P)^2 / (m - P) by bisection on [0, m).
    fn scalar_fixed_point(a: f64, g: f64, m: f64) -> f64 {
        let f = |p: f64| a * a * p + (g - a * p).powi(2) / (m - p) - p;
        let (mut lo, mut hi) = (0.0, m * (1.0 - 1e-12));
        assert!(f(lo) >= 0.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    }

    #[test]
    fn scalar_recursion_matches_fixed_point_oracle() {
        let (a, g, m) = (0.5, 0.6, 2.0);
        let one = ScheduleWeights::uniform(1);
        let t = SecondMomentSet::new(vec![m1(m)]).unwrap();
        let first = stochastic_recursion(
            &[m1(a)],
            &[m1(g)],
            &m1(1.0),
            &t,
            &one,
            &RecursionOptions {
                max_iter: 1,
                ..Default::default()
            },
        )
        .unwrap();
        assert!((first.p[0][(0, 0)] - g * g / m).abs() < 1e-15);
        let res = stochastic_recursion(
            &[m1(a)],
            &[m1(g)],
            &m1(1.0),
            &t,
            &one,
            &RecursionOptions {
                max_iter: 500,
                tol: 1e-14,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(res.converged);
        let p = scalar_fixed_point(a, g, m);
        assert!((res.p[0][(0, 0)] - p).abs() < 1e-10);
        assert!((res.q[0][(0, 0)] - (m - p)).abs() < 1e-10);
        assert!((res.k[0][(0, 0)] - (g - a * p) / (m - p)).abs() < 1e-10);
    }

    #[test]
    fn recursion_recovers_true_innovation_model() {
        // Exact covariance data of the benchmark's noise channel: S solves
        // S = sum_s p_s (A S A^T + K Qbar K^T); G_s = sqrt(p_s)(A_s S C^T + K_s Qbar); T_s = C S C^T + Qbar.
        let sys = benchmark::system();
        let weights = benchmark::weights();
        let qbar = m1(1.0);
        let forcing: Vec<_> = sys
            .k
            .iter()
            .zip(weights.as_slice())
            .map(|(k, &p)| k * &qbar * k.transpose() * p)
            .collect();
        let p = solve_scheduled_lyapunov(&sys.a, &forcing, &weights).unwrap();
        let s = &p[0];
        let g: Vec<_> = (0..2)
            .map(|i| {
                (&sys.a[i] * s * sys.c.transpose() + &sys.k[i] * &qbar)
                    * weights.as_slice()[i].sqrt()
            })
            .collect();
        let t = &sys.c * s * sys.c.transpose() + &qbar;
        let t = SecondMomentSet::new(vec![t.clone(), t]).unwrap();
        let res = stochastic_recursion(
            &sys.a,
            &g,
            &sys.c,
            &t,
            &weights,
            &RecursionOptions {
                max_iter: 1000,
                tol: 1e-13,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(res.converged, "{:?}", res.increments.last());
        assert!(res.min_p_eigenvalue >= -1e-10);
        for (i, pi) in p.iter().enumerate() {
            assert!(
                (&res.k[i] - &sys.k[i]).amax() < 1e-6,
                "K_{}: {}",
                i + 1,
                res.k[i]
            );
            assert!((&res.q[i] - &sys.q[i]).amax() < 1e-6);
            assert!((&res.p[i] - pi).amax() < 1e-6);
        }
    }

    #[test]
    fn indefinite_innovation_variance_is_reported() {
        let one = ScheduleWeights::uniform(1);
        let t = SecondMomentSet::new(vec![m1(-1.0)]).unwrap();
        let err = stochastic_recursion(
            &[m1(0.5)],
            &[m1(0.1)],
            &m1(1.0),
            &t,
            &one,
            &Default::default(),
        );
        assert!(matches!(
            err,
            Err(Error::Indefinite {
                letter: 1,
                iteration: 0,
                ..
            })
        ));
    }

    fn stoch_fixture(ns: usize) -> StochasticRealization {
        let n_mu = 2;
        StochasticRealization {
            a: vec![DMatrix::identity(ns, ns) * 0.2; n_mu],
            g: vec![DMatrix::from_element(ns, 1, 0.3); n_mu],
            c: DMatrix::from_element(1, ns, 1.0),
            k: vec![DMatrix::from_element(ns, 1, 0.1); n_mu],
            q: vec![m1(1.0), m1(0.75)],
            p: vec![DMatrix::zeros(ns, ns); n_mu],
            iterations: 1,
            converged: true,
            increments: vec![],
            min_p_eigenvalue: 0.0,
        }
    }

    #[test]
    fn composition_blocks() {
        let weights = benchmark::weights();
        let det = benchmark::system().deterministic_part();
        let model = compose(&det, &stoch_fixture(3), &weights).unwrap();
        assert_eq!(model.n_x(), 6);
        assert_eq!(model.q, vec![m1(1.0), m1(0.75)]);
        for word in enumerate_words(2, 5) {
            assert_eq!(
                model.sub_markov(&word).unwrap(),
                det.sub_markov(&word).unwrap()
            );
        }

        let small = DeterministicRealization {
            a: vec![m1(0.5), m1(0.2)],
            b: vec![m1(1.0), m1(-1.0)],
            c: m1(2.0),
            d: m1(0.3),
        };
        let model = compose(&small, &stoch_fixture(2), &weights).unwrap();
        assert_eq!(model.n_x(), 3);
        for word in enumerate_words(2, 4) {
            assert_eq!(
                model.sub_markov(&word).unwrap(),
                small.sub_markov(&word).unwrap()
            );
        }

        let empty = StochasticRealization::empty(1, vec![m1(1.0), m1(0.75)]);
        let model = compose(&det, &empty, &weights).unwrap();
        assert_eq!(model.a, det.a);
        assert_eq!(model.b, det.b);
        assert!(model.k.iter().all(|k| k.amax() == 0.0));
    }

    #[test]
    fn composition_rejects_mismatched_outputs() {
        let det = benchmark::system().deterministic_part();
        let empty = StochasticRealization::empty(2, vec![DMatrix::identity(2, 2); 2]);
        assert!(matches!(
            compose(&det, &empty, &benchmark::weights()),
            Err(Error::Shape(_))
        ));
    }
}
