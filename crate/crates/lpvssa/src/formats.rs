//! JSON model, selection and configuration files, and CSV datasets.
//!
//! Matrices are row-major nested arrays. Words are strings in their textual form
//! (`"e"` for the empty word, `"21"`, or `"10.2"` when a letter exceeds 9).

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use lpvssa_core::hankel::{ColumnIndex, RowIndex};
use lpvssa_core::{
    DMatrix, Dataset, IdentifyConfig, LpvSsaModel, MomentConvention, ScheduleWeights, Selection,
    SplitVariant, Word,
};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type JsonMatrix = Vec<Vec<f64>>;

pub fn matrix_to_json(m: &DMatrix<f64>) -> JsonMatrix {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Builds a `rows x cols` matrix; `rows` is needed to give empty row lists a shape.
pub fn matrix_from_json(
    rows: &[Vec<f64>],
    n_rows: usize,
    n_cols: usize,
    what: &str,
) -> std::result::Result<DMatrix<f64>, String> {
    if rows.len() != n_rows {
        return Err(format!("{what} has {} rows, expected {n_rows}", rows.len()));
    }
    for (i, r) in rows.iter().enumerate() {
        if r.len() != n_cols {
            return Err(format!(
                "{what} row {} has {} entries, expected {n_cols}",
                i + 1,
                r.len()
            ));
        }
    }
    Ok(DMatrix::from_fn(n_rows, n_cols, |i, j| rows[i][j]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub n_x: usize,
    pub n_y: usize,
    pub n_u: usize,
    pub n_mu: usize,
    pub p: Vec<f64>,
    #[serde(rename = "A")]
    pub a: Vec<JsonMatrix>,
    #[serde(rename = "B")]
    pub b: Vec<JsonMatrix>,
    #[serde(rename = "K")]
    pub k: Vec<JsonMatrix>,
    #[serde(rename = "Q")]
    pub q: Vec<JsonMatrix>,
    #[serde(rename = "C")]
    pub c: JsonMatrix,
    #[serde(rename = "D")]
    pub d: JsonMatrix,
}

impl ModelFile {
    pub fn from_model(m: &LpvSsaModel) -> Self {
        let fam = |f: &[DMatrix<f64>]| f.iter().map(matrix_to_json).collect();
        ModelFile {
            n_x: m.n_x(),
            n_y: m.n_y(),
            n_u: m.n_u(),
            n_mu: m.n_mu(),
            p: m.weights.as_slice().to_vec(),
            a: fam(&m.a),
            b: fam(&m.b),
            k: fam(&m.k),
            q: fam(&m.q),
            c: matrix_to_json(&m.c),
            d: matrix_to_json(&m.d),
        }
    }

    pub fn to_model(&self) -> std::result::Result<LpvSsaModel, String> {
        let (nx, ny, nu, nmu) = (self.n_x, self.n_y, self.n_u, self.n_mu);
        let fam = |f: &[JsonMatrix],
                   r: usize,
                   c: usize,
                   name: &str|
         -> std::result::Result<Vec<DMatrix<f64>>, String> {
            if f.len() != nmu {
                return Err(format!(
                    "{name} has {} members, expected n_mu = {nmu}",
                    f.len()
                ));
            }
            f.iter()
                .enumerate()
                .map(|(i, m)| matrix_from_json(m, r, c, &format!("{name}[{}]", i + 1)))
                .collect()
        };
        if self.p.len() != nmu {
            return Err(format!(
                "p has {} entries, expected n_mu = {nmu}",
                self.p.len()
            ));
        }
        let weights = ScheduleWeights::new(self.p.clone()).map_err(|e| e.to_string())?;
        LpvSsaModel::new(
            fam(&self.a, nx, nx, "A")?,
            fam(&self.b, nx, nu, "B")?,
            fam(&self.k, nx, ny, "K")?,
            fam(&self.q, ny, ny, "Q")?,
            matrix_from_json(&self.c, ny, nx, "C")?,
            matrix_from_json(&self.d, ny, nu, "D")?,
            weights,
        )
        .map_err(|e| e.to_string())
    }
}

fn read_to_string(path: &Path) -> Result<String> {
    let mut s = String::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_string(&mut s))
        .map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
    Ok(s)
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    serde_json::from_str(&read_to_string(path)?).map_err(|e| Error::parse(path, e))
}

pub fn to_json_string<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable value");
    s.push('\n');
    s
}

pub fn read_model(path: &Path) -> Result<LpvSsaModel> {
    let file: ModelFile = read_json(path)?;
    file.to_model().map_err(|e| Error::parse(path, e))
}

pub fn write_model(path: &Path, model: &LpvSsaModel) -> Result<()> {
    write_file(path, &to_json_string(&ModelFile::from_model(model)))
}

/// `{"alpha": [["e", 1], ...], "beta": [[2, "e", 1], ...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectionFile {
    pub alpha: Vec<(String, usize)>,
    pub beta: Vec<(u8, String, usize)>,
}

impl SelectionFile {
    pub fn from_selection(sel: &Selection) -> Self {
        SelectionFile {
            alpha: sel
                .alpha()
                .iter()
                .map(|r| (r.word.to_string(), r.output))
                .collect(),
            beta: sel
                .beta()
                .iter()
                .map(|c| (c.letter, c.word.to_string(), c.input))
                .collect(),
        }
    }

    pub fn to_selection(&self) -> std::result::Result<Selection, String> {
        let word = |s: &str| s.parse::<Word>().map_err(|e| e.to_string());
        let alpha = self
            .alpha
            .iter()
            .map(|(w, k)| Ok(RowIndex::new(word(w)?, *k)))
            .collect::<std::result::Result<_, String>>()?;
        let beta = self
            .beta
            .iter()
            .map(|(s, w, l)| Ok(ColumnIndex::new(*s, word(w)?, *l)))
            .collect::<std::result::Result<_, String>>()?;
        Selection::new(alpha, beta).map_err(|e| e.to_string())
    }
}

pub fn read_selection(path: &Path) -> Result<Selection> {
    let file: SelectionFile = read_json(path)?;
    file.to_selection().map_err(|e| Error::parse(path, e))
}

/// A value given explicitly or the string `"estimate"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OrEstimate<T> {
    Given(T),
    Keyword(String),
}

impl<T> OrEstimate<T> {
    fn given(self, what: &str) -> std::result::Result<Option<T>, String> {
        match self {
            OrEstimate::Given(v) => Ok(Some(v)),
            OrEstimate::Keyword(k) if k == "estimate" => Ok(None),
            OrEstimate::Keyword(k) => Err(format!(
                "{what}: expected a value or \"estimate\", got \"{k}\""
            )),
        }
    }
}

fn estimate<T>() -> OrEstimate<T> {
    OrEstimate::Keyword("estimate".into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum VariantName {
    Analytic,
    Residual,
}

impl From<VariantName> for SplitVariant {
    fn from(v: VariantName) -> Self {
        match v {
            VariantName::Analytic => SplitVariant::Analytic,
            VariantName::Residual => SplitVariant::Residual,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ConventionName {
    Stationary,
    Published,
}

impl From<ConventionName> for MomentConvention {
    fn from(v: ConventionName) -> Self {
        match v {
            ConventionName::Stationary => MomentConvention::Stationary,
            ConventionName::Published => MomentConvention::Published,
        }
    }
}

fn default_iters() -> usize {
    50
}
fn default_tol() -> f64 {
    1e-9
}
fn default_rank_tol() -> f64 {
    1e-8
}
fn default_cond_max() -> f64 {
    1e10
}
fn default_pd_tol() -> f64 {
    1e-10
}
fn default_degenerate_ratio() -> f64 {
    1e-2
}
fn default_variant() -> VariantName {
    VariantName::Residual
}
fn default_convention() -> ConventionName {
    ConventionName::Stationary
}

/// Identification settings. Only the two selections are required.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub selection_det: SelectionFile,
    pub selection_stoch: SelectionFile,
    #[serde(default = "estimate")]
    pub weights: OrEstimate<Vec<f64>>,
    #[serde(default = "estimate")]
    pub lambda_u: OrEstimate<JsonMatrix>,
    #[serde(default = "default_iters")]
    pub max_iter: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_variant")]
    pub split_variant: VariantName,
    #[serde(default = "default_convention")]
    pub convention: ConventionName,
    #[serde(default = "default_rank_tol")]
    pub rank_tol: f64,
    #[serde(default = "default_cond_max")]
    pub cond_max: f64,
    #[serde(default = "default_pd_tol")]
    pub pd_tol: f64,
    #[serde(default = "default_degenerate_ratio")]
    pub degenerate_ratio: f64,
    #[serde(default)]
    pub skip_stochastic: bool,
}

impl ConfigFile {
    pub fn from_config(c: &IdentifyConfig) -> Self {
        ConfigFile {
            selection_det: SelectionFile::from_selection(&c.selection_det),
            selection_stoch: SelectionFile::from_selection(&c.selection_stoch),
            weights: c
                .weights
                .as_ref()
                .map_or_else(estimate, |w| OrEstimate::Given(w.as_slice().to_vec())),
            lambda_u: c
                .lambda_u
                .as_ref()
                .map_or_else(estimate, |m| OrEstimate::Given(matrix_to_json(m))),
            max_iter: c.max_iter,
            tol: c.tol,
            split_variant: match c.split_variant {
                SplitVariant::Analytic => VariantName::Analytic,
                SplitVariant::Residual => VariantName::Residual,
            },
            convention: match c.convention {
                MomentConvention::Stationary => ConventionName::Stationary,
                MomentConvention::Published => ConventionName::Published,
            },
            rank_tol: c.rank_tol,
            cond_max: c.cond_max,
            pd_tol: c.pd_tol,
            degenerate_ratio: c.degenerate_ratio,
            skip_stochastic: c.skip_stochastic,
        }
    }

    pub fn to_config(&self) -> std::result::Result<IdentifyConfig, String> {
        let mut c = IdentifyConfig::new(
            self.selection_det.to_selection()?,
            self.selection_stoch.to_selection()?,
        );
        c.weights = self
            .weights
            .clone()
            .given("weights")?
            .map(ScheduleWeights::new)
            .transpose()
            .map_err(|e| e.to_string())?;
        c.lambda_u = match self.lambda_u.clone().given("lambda_u")? {
            Some(rows) => {
                let n = rows.len();
                Some(matrix_from_json(&rows, n, n, "lambda_u")?)
            }
            None => None,
        };
        c.max_iter = self.max_iter;
        c.tol = self.tol;
        c.split_variant = self.split_variant.into();
        c.convention = self.convention.into();
        c.rank_tol = self.rank_tol;
        c.cond_max = self.cond_max;
        c.pd_tol = self.pd_tol;
        c.degenerate_ratio = self.degenerate_ratio;
        c.skip_stochastic = self.skip_stochastic;
        c.validate().map_err(|e| e.to_string())?;
        Ok(c)
    }
}

pub fn read_config(path: &Path) -> Result<IdentifyConfig> {
    let file: ConfigFile = read_json(path)?;
    file.to_config().map_err(|e| Error::parse(path, e))
}

fn column_names(prefix: &str, n: usize) -> impl Iterator<Item = String> + '_ {
    (1..=n).map(move |i| format!("{prefix}{i}"))
}

/// Writes `t,y1..,u1..,mu1..` with one row per sample, `t` counting from 1.
pub fn write_dataset<W: Write>(out: W, data: &Dataset) -> std::result::Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    let header: Vec<String> = std::iter::once("t".to_string())
        .chain(column_names("y", data.n_y()))
        .chain(column_names("u", data.n_u()))
        .chain(column_names("mu", data.n_mu()))
        .collect();
    w.write_record(&header)?;
    let mut record = Vec::with_capacity(header.len());
    for t in 0..data.len() {
        record.clear();
        record.push((t + 1).to_string());
        for m in [data.y(), data.u(), data.mu()] {
            record.extend(m.row(t).iter().map(|v| format!("{v:e}")));
        }
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_dataset(path: &Path, data: &Dataset) -> Result<()> {
    let file = fs::File::create(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    write_dataset(std::io::BufWriter::new(file), data).map_err(|e| Error::parse(path, e))
}

/// Writes `t,e1..` for a noise path.
pub fn save_noise(path: &Path, noise: &DMatrix<f64>) -> Result<()> {
    let file = fs::File::create(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
    let res = (|| {
        let header: Vec<String> = std::iter::once("t".to_string())
            .chain(column_names("e", noise.ncols()))
            .collect();
        w.write_record(&header)?;
        for t in 0..noise.nrows() {
            let mut rec = vec![(t + 1).to_string()];
            rec.extend(noise.row(t).iter().map(|v| format!("{v:e}")));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok::<_, csv::Error>(())
    })();
    res.map_err(|e| Error::parse(path, e))
}

/// Numeric CSV with a header; returns the header and the rows, `t` column included.
fn read_table(path: &Path) -> Result<(Vec<String>, DMatrix<f64>)> {
    let file = fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut r = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(file);
    let header: Vec<String> = r
        .headers()
        .map_err(|e| Error::parse(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.is_empty() || header.iter().all(|h| h.is_empty()) {
        return Err(Error::parse(path, "missing header"));
    }
    let mut values = Vec::new();
    let mut rows = 0;
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| Error::parse(path, e))?;
        for (j, field) in rec.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| {
                Error::parse(
                    path,
                    format!(
                        "row {}, column {}: not a number: {field:?}",
                        i + 2,
                        header[j]
                    ),
                )
            })?;
            values.push(v);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::parse(path, "no data rows"));
    }
    Ok((
        header.clone(),
        DMatrix::from_row_slice(rows, header.len(), &values),
    ))
}

fn columns_with_prefix(header: &[String], prefix: &str) -> Vec<usize> {
    let mut cols = Vec::new();
    for i in 1.. {
        match header.iter().position(|h| *h == format!("{prefix}{i}")) {
            Some(j) => cols.push(j),
            None => break,
        }
    }
    cols
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let (header, table) = read_table(path)?;
    let pick = |prefix: &str| {
        let cols = columns_with_prefix(&header, prefix);
        if cols.is_empty() {
            return Err(Error::parse(path, format!("no {prefix}1 column")));
        }
        Ok(table.select_columns(&cols))
    };
    let (y, u, mu) = (pick("y")?, pick("u")?, pick("mu")?);
    let known = 1 + y.ncols() + u.ncols() + mu.ncols();
    if header.first().map(String::as_str) != Some("t") || header.len() != known {
        return Err(Error::parse(path, "expected columns t,y1..,u1..,mu1.."));
    }
    Dataset::new(y, u, mu).map_err(|e| Error::parse(path, e))
}

pub fn load_noise(path: &Path) -> Result<DMatrix<f64>> {
    let (header, table) = read_table(path)?;
    let cols = columns_with_prefix(&header, "e");
    if cols.is_empty() {
        return Err(Error::parse(path, "no e1 column"));
    }
    Ok(table.select_columns(&cols))
}
