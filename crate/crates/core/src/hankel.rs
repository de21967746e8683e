//! Selections of Hankel rows and columns and the four basis-reduced Hankel matrices.
//!
//! For a selection `alpha = {(u_i, k_i)}`, `beta = {(sigma_j, v_j, l_j)}` and a word
//! series `M`:
//!
//! ```text
//! H[i, j]        = M(sigma_j v_j u_i)[k_i, l_j]
//! H_sigma[i, j]  = M(sigma_j v_j sigma u_i)[k_i, l_j]
//! H_in_sigma[i, :] = M(sigma u_i)[k_i, :]
//! H_out[:, j]    = M(sigma_j v_j)[:, l_j]
//! ```

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::covariances::MatrixSeries;
use crate::error::{Error, Result};
use crate::linalg;
use crate::words::{enumerate_words, Word};

/// Hankel row index `(u, k)`: word and 1-based output channel.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RowIndex {
    pub word: Word,
    pub output: usize,
}

impl RowIndex {
    pub fn new(word: Word, output: usize) -> Self {
        RowIndex { word, output }
    }
}

/// Hankel column index `(sigma, v, l)`: letter, word and 1-based input channel.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ColumnIndex {
    pub letter: u8,
    pub word: Word,
    pub input: usize,
}

impl ColumnIndex {
    pub fn new(letter: u8, word: Word, input: usize) -> Self {
        ColumnIndex {
            letter,
            word,
            input,
        }
    }

    /// `sigma v`.
    pub fn prefix(&self) -> Word {
        self.word.prepend(self.letter)
    }
}

/// An ordered `n`-selection `(alpha, beta)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Selection {
    alpha: Vec<RowIndex>,
    beta: Vec<ColumnIndex>,
}

impl Selection {
    pub fn new(alpha: Vec<RowIndex>, beta: Vec<ColumnIndex>) -> Result<Self> {
        let n = alpha.len();
        if n == 0 || beta.len() != n {
            return Err(Error::InvalidArgument(format!(
                "selection needs card(alpha) = card(beta) > 0, got {} and {}",
                n,
                beta.len()
            )));
        }
        if alpha.iter().collect::<BTreeSet<_>>().len() != n {
            return Err(Error::InvalidArgument("duplicate row in selection".into()));
        }
        if beta.iter().collect::<BTreeSet<_>>().len() != n {
            return Err(Error::InvalidArgument(
                "duplicate column in selection".into(),
            ));
        }
        for r in &alpha {
            if r.output == 0 || r.word.len() > n {
                return Err(Error::InvalidArgument(format!(
                    "row ({}, {}) is not in Sigma^{n} x {{1, ...}}",
                    r.word, r.output
                )));
            }
        }
        for c in &beta {
            if c.letter == 0 || c.input == 0 || c.word.len() > n {
                return Err(Error::InvalidArgument(format!(
                    "column ({}, {}, {}) is not in Sigma x Sigma^{n} x {{1, ...}}",
                    c.letter, c.word, c.input
                )));
            }
        }
        Ok(Selection { alpha, beta })
    }

    pub fn order(&self) -> usize {
        self.alpha.len()
    }

    pub fn alpha(&self) -> &[RowIndex] {
        &self.alpha
    }

    pub fn beta(&self) -> &[ColumnIndex] {
        &self.beta
    }

    /// Checks letters and channel indices against the series dimensions.
    pub fn check_dimensions(&self, n_mu: usize, rows: usize, cols: usize) -> Result<()> {
        for r in &self.alpha {
            r.word.check_alphabet(n_mu)?;
            if r.output > rows {
                return Err(Error::InvalidArgument(format!(
                    "row channel {} exceeds {rows}",
                    r.output
                )));
            }
        }
        for c in &self.beta {
            c.prefix().check_alphabet(n_mu)?;
            if c.input > cols {
                return Err(Error::InvalidArgument(format!(
                    "column channel {} exceeds {cols}",
                    c.input
                )));
            }
        }
        Ok(())
    }

    /// Every word the four Hankel matrices read, plus the empty word:
    /// `sigma_j v_j u_i`, `sigma_j v_j sigma u_i`, `sigma_j v_j` and `sigma u_i`.
    pub fn required_words(&self, n_mu: usize) -> BTreeSet<Word> {
        let mut words = BTreeSet::new();
        words.insert(Word::empty());
        for c in &self.beta {
            let prefix = c.prefix();
            for r in &self.alpha {
                words.insert(prefix.concat(&r.word));
                for sigma in 1..=n_mu as u8 {
                    words.insert(prefix.concat(&r.word.prepend(sigma)));
                }
            }
            words.insert(prefix);
        }
        for r in &self.alpha {
            for sigma in 1..=n_mu as u8 {
                words.insert(r.word.prepend(sigma));
            }
        }
        words
    }
}

fn entry(series: &MatrixSeries, w: &Word, row: usize, col: usize) -> Result<f64> {
    let m = series.get(w)?;
    if row == 0 || col == 0 || row > m.nrows() || col > m.ncols() {
        return Err(Error::Shape(format!(
            "entry ({row}, {col}) outside the {}x{} value at word {w}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(m[(row - 1, col - 1)])
}

pub fn build_hankel(series: &MatrixSeries, sel: &Selection) -> Result<DMatrix<f64>> {
    let n = sel.order();
    let mut h = DMatrix::zeros(n, n);
    for (i, r) in sel.alpha.iter().enumerate() {
        for (j, c) in sel.beta.iter().enumerate() {
            h[(i, j)] = entry(series, &c.prefix().concat(&r.word), r.output, c.input)?;
        }
    }
    Ok(h)
}

pub fn build_shifted_hankel(
    series: &MatrixSeries,
    sel: &Selection,
    sigma: u8,
) -> Result<DMatrix<f64>> {
    let n = sel.order();
    let mut h = DMatrix::zeros(n, n);
    for (i, r) in sel.alpha.iter().enumerate() {
        let tail = r.word.prepend(sigma);
        for (j, c) in sel.beta.iter().enumerate() {
            h[(i, j)] = entry(series, &c.prefix().concat(&tail), r.output, c.input)?;
        }
    }
    Ok(h)
}

/// `n x n_cols` matrix with rows `M(sigma u_i)[k_i, :]`.
pub fn build_input_hankel(
    series: &MatrixSeries,
    sel: &Selection,
    sigma: u8,
) -> Result<DMatrix<f64>> {
    let cols = series.cols();
    let mut h = DMatrix::zeros(sel.order(), cols);
    for (i, r) in sel.alpha.iter().enumerate() {
        let w = r.word.prepend(sigma);
        for l in 1..=cols {
            h[(i, l - 1)] = entry(series, &w, r.output, l)?;
        }
    }
    Ok(h)
}

/// `n_rows x n` matrix with columns `M(sigma_j v_j)[:, l_j]`.
pub fn build_output_hankel(series: &MatrixSeries, sel: &Selection) -> Result<DMatrix<f64>> {
    let rows = series.rows();
    let mut h = DMatrix::zeros(rows, sel.order());
    for (j, c) in sel.beta.iter().enumerate() {
        let w = c.prefix();
        for k in 1..=rows {
            h[(k - 1, j)] = entry(series, &w, k, c.input)?;
        }
    }
    Ok(h)
}

/// The Hankel blocks consumed by the Ho-Kalman step.
#[derive(Debug, Clone, PartialEq)]
pub struct HankelSet {
    pub h: DMatrix<f64>,
    pub shifted: Vec<DMatrix<f64>>,
    pub input: Vec<DMatrix<f64>>,
    pub output: DMatrix<f64>,
}

impl HankelSet {
    pub fn build(series: &MatrixSeries, sel: &Selection, n_mu: usize) -> Result<Self> {
        sel.check_dimensions(n_mu, series.rows(), series.cols())?;
        let letters = 1..=n_mu as u8;
        Ok(HankelSet {
            h: build_hankel(series, sel)?,
            shifted: letters
                .clone()
                .map(|s| build_shifted_hankel(series, sel, s))
                .collect::<Result<_>>()?,
            input: letters
                .map(|s| build_input_hankel(series, sel, s))
                .collect::<Result<_>>()?,
            output: build_output_hankel(series, sel)?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SearchStrategy {
    /// Depth-first search over rows then columns in enumeration order; returns the
    /// first selection whose Hankel has numerical rank `n`.
    Exhaustive,
    /// Largest-residual pivoting (QR with column pivoting) on the pre-Hankel.
    Greedy,
}

const SEARCH_NODE_BUDGET: usize = 200_000;

/// Rectangular Hankel over all candidate rows and columns with words in `Sigma^n`.
struct PreHankel {
    rows: Vec<RowIndex>,
    cols: Vec<ColumnIndex>,
    values: DMatrix<f64>,
}

impl PreHankel {
    fn build(series: &MatrixSeries, n: usize, n_mu: usize) -> Result<Self> {
        let words = enumerate_words(n_mu, n);
        let rows: Vec<RowIndex> = words
            .iter()
            .flat_map(|w| (1..=series.rows()).map(move |k| RowIndex::new(w.clone(), k)))
            .collect();
        let cols: Vec<ColumnIndex> = (1..=n_mu as u8)
            .flat_map(|s| {
                words.iter().flat_map(move |w| {
                    (1..=series.cols()).map(move |l| ColumnIndex::new(s, w.clone(), l))
                })
            })
            .collect();
        let mut values = DMatrix::zeros(rows.len(), cols.len());
        for (j, c) in cols.iter().enumerate() {
            let prefix = c.prefix();
            for (i, r) in rows.iter().enumerate() {
                values[(i, j)] = entry(series, &prefix.concat(&r.word), r.output, c.input)?;
            }
        }
        Ok(PreHankel { rows, cols, values })
    }

    fn selection(&self, rows: &[usize], cols: &[usize]) -> Result<Selection> {
        let mut rows = rows.to_vec();
        let mut cols = cols.to_vec();
        rows.sort_unstable();
        cols.sort_unstable();
        Selection::new(
            rows.iter().map(|&i| self.rows[i].clone()).collect(),
            cols.iter().map(|&j| self.cols[j].clone()).collect(),
        )
    }
}

fn submatrix(m: &DMatrix<f64>, rows: &[usize], cols: Option<&[usize]>) -> DMatrix<f64> {
    let rows_m = m.select_rows(rows);
    match cols {
        Some(c) => rows_m.select_columns(c),
        None => rows_m,
    }
}

struct Dfs<'a> {
    pre: &'a DMatrix<f64>,
    n: usize,
    tol: f64,
    nodes: usize,
}

impl Dfs<'_> {
    fn rows(&mut self, start: usize, chosen: &mut Vec<usize>) -> Option<(Vec<usize>, Vec<usize>)> {
        if chosen.len() == self.n {
            let mut cols = Vec::new();
            return self.cols(chosen, 0, &mut cols).map(|c| (chosen.clone(), c));
        }
        for i in start..self.pre.nrows() {
            self.nodes += 1;
            if self.nodes > SEARCH_NODE_BUDGET {
                return None;
            }
            chosen.push(i);
            if self.row_set_ok(chosen) {
                if let Some(found) = self.rows(i + 1, chosen) {
                    return Some(found);
                }
            }
            chosen.pop();
        }
        None
    }

    fn row_set_ok(&self, rows: &[usize]) -> bool {
        let m = submatrix(self.pre, rows, None);
        linalg::inverse_condition(&m) > self.tol
    }

    fn cols(
        &mut self,
        rows: &[usize],
        start: usize,
        chosen: &mut Vec<usize>,
    ) -> Option<Vec<usize>> {
        if chosen.len() == self.n {
            return Some(chosen.clone());
        }
        for j in start..self.pre.ncols() {
            self.nodes += 1;
            if self.nodes > SEARCH_NODE_BUDGET {
                return None;
            }
            chosen.push(j);
            let m = submatrix(self.pre, rows, Some(chosen));
            if linalg::inverse_condition(&m) > self.tol {
                if let Some(found) = self.cols(rows, j + 1, chosen) {
                    return Some(found);
                }
            }
            chosen.pop();
        }
        None
    }
}

/// Finds an `n`-selection whose Hankel matrix has `sigma_min / sigma_max > rank_tol`.
///
/// The series must hold every word `sigma v u` with `|v|, |u| <= n`.
pub fn search_selection(
    series: &MatrixSeries,
    n: usize,
    n_mu: usize,
    strategy: SearchStrategy,
    rank_tol: f64,
) -> Result<Selection> {
    if n == 0 {
        return Err(Error::InvalidArgument(
            "selection order must be positive".into(),
        ));
    }
    let pre = PreHankel::build(series, n, n_mu)?;
    let rank = linalg::numerical_rank(&pre.values, rank_tol);
    if rank < n {
        return Err(Error::RankDeficient {
            requested: n,
            achieved: rank,
        });
    }
    let (rows, cols) = match strategy {
        SearchStrategy::Greedy => {
            let rows = linalg::pivoted_columns(&pre.values.transpose(), n, rank_tol);
            let cols = if rows.len() == n {
                linalg::pivoted_columns(&pre.values.select_rows(&rows), n, rank_tol)
            } else {
                Vec::new()
            };
            (rows, cols)
        }
        SearchStrategy::Exhaustive => {
            let mut dfs = Dfs {
                pre: &pre.values,
                n,
                tol: rank_tol,
                nodes: 0,
            };
            dfs.rows(0, &mut Vec::new()).unwrap_or_default()
        }
    };
    if rows.len() < n || cols.len() < n {
        return Err(Error::RankDeficient {
            requested: n,
            achieved: rows.len().min(cols.len()),
        });
    }
    let sel = pre.selection(&rows, &cols)?;
    let h = build_hankel(series, &sel)?;
    if linalg::inverse_condition(&h) <= rank_tol {
        return Err(Error::RankDeficient {
            requested: n,
            achieved: linalg::numerical_rank(&h, rank_tol),
        });
    }
    Ok(sel)
}
