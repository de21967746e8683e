//! JSON reports and plain-text tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use lpvssa_core::identify::Diagnostics;
use lpvssa_core::realization::HoKalmanDiagnostics;
use lpvssa_core::{
    DMatrix, FitReport, IdentifyReport, LpvSsaModel, MatrixSeries, Result as CoreResult, Word,
};
use serde::Serialize;

use crate::formats::{matrix_to_json, JsonMatrix, ModelFile};

/// Words of the true-versus-estimated sub-Markov table.
pub const MARKOV_TABLE_WORDS: [&str; 5] = ["11", "21", "111", "221", "1111"];

fn series_to_json(s: &MatrixSeries) -> BTreeMap<String, JsonMatrix> {
    s.iter()
        .map(|(w, m)| (w.to_string(), matrix_to_json(m)))
        .collect()
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

#[derive(Debug, Clone, Serialize)]
pub struct HankelJson {
    pub singular_values: Vec<f64>,
    pub condition: f64,
    pub warning: bool,
}

impl From<&HoKalmanDiagnostics> for HankelJson {
    fn from(d: &HoKalmanDiagnostics) -> Self {
        HankelJson {
            singular_values: d.singular_values.clone(),
            condition: d.condition,
            warning: d.warning,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DiagnosticsJson {
    pub weights: Option<Vec<f64>>,
    pub estimated_weights: Option<Vec<f64>>,
    pub lambda_u: Option<JsonMatrix>,
    pub estimated_lambda_u: Option<JsonMatrix>,
    pub lambda_u_condition: Option<f64>,
    pub deterministic_hankel: Option<HankelJson>,
    pub stochastic_hankel: Option<HankelJson>,
    pub stochastic_energy_ratio: Option<f64>,
    pub stochastic_degenerate: bool,
    pub recursion_iterations: Option<usize>,
    pub recursion_converged: Option<bool>,
    pub recursion_increments: Vec<f64>,
    pub recursion_min_p_eigenvalue: Option<f64>,
    pub psi_uy: Option<BTreeMap<String, JsonMatrix>>,
    pub psi_ys: Option<BTreeMap<String, JsonMatrix>>,
    pub stochastic_second_moments: Option<Vec<JsonMatrix>>,
    pub warnings: Vec<String>,
}

impl From<&Diagnostics> for DiagnosticsJson {
    fn from(d: &Diagnostics) -> Self {
        DiagnosticsJson {
            weights: d.weights.as_ref().map(|w| w.as_slice().to_vec()),
            estimated_weights: d.estimated_weights.as_ref().map(|w| w.as_slice().to_vec()),
            lambda_u: d.lambda_u.as_ref().map(matrix_to_json),
            estimated_lambda_u: d.estimated_lambda_u.as_ref().map(matrix_to_json),
            lambda_u_condition: d.lambda_u_condition.and_then(finite),
            deterministic_hankel: d.deterministic.as_ref().map(Into::into),
            stochastic_hankel: d.stochastic.as_ref().map(Into::into),
            stochastic_energy_ratio: d.stochastic_energy_ratio,
            stochastic_degenerate: d.stochastic_degenerate,
            recursion_iterations: d.recursion_iterations,
            recursion_converged: d.recursion_converged,
            recursion_increments: d.recursion_increments.clone(),
            recursion_min_p_eigenvalue: d.recursion_min_p_eigenvalue,
            psi_uy: d.psi_uy.as_ref().map(series_to_json),
            psi_ys: d.psi_ys.as_ref().map(series_to_json),
            stochastic_second_moments: d
                .stochastic_second_moments
                .as_ref()
                .map(|t| t.as_slice().iter().map(matrix_to_json).collect()),
            warnings: d.warnings.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FitJson {
    pub bfr: Vec<f64>,
    pub vaf: Vec<f64>,
    pub mean_bfr: f64,
    pub mean_vaf: f64,
    pub snr_db: Option<f64>,
}

impl From<&FitReport> for FitJson {
    fn from(f: &FitReport) -> Self {
        FitJson {
            bfr: f.bfr.clone(),
            vaf: f.vaf.clone(),
            mean_bfr: f.mean_bfr(),
            mean_vaf: f.mean_vaf(),
            snr_db: f.snr_db.and_then(finite),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MarkovRow {
    pub word: String,
    pub reference: Option<JsonMatrix>,
    pub estimate: JsonMatrix,
}

/// `identify` output: the composed model, diagnostics and optional validation results.
#[derive(Debug, Clone, Serialize)]
pub struct IdentifyJson {
    pub model: ModelFile,
    pub deterministic_order: usize,
    pub stochastic_order: usize,
    pub diagnostics: DiagnosticsJson,
    pub fit: Option<FitJson>,
    pub markov: Vec<MarkovRow>,
}

impl IdentifyJson {
    pub fn new(
        report: &IdentifyReport,
        fit: Option<&FitReport>,
        reference: Option<&LpvSsaModel>,
    ) -> CoreResult<Self> {
        let markov = markov_rows(
            &MARKOV_TABLE_WORDS.map(|w| w.parse().expect("valid word")),
            |w| report.deterministic.sub_markov(w),
            reference,
        )?;
        Ok(IdentifyJson {
            model: ModelFile::from_model(&report.model),
            deterministic_order: report.deterministic.order(),
            stochastic_order: report.stochastic.order(),
            diagnostics: (&report.diagnostics).into(),
            fit: fit.map(Into::into),
            markov,
        })
    }
}

/// Estimated sub-Markov values for `words`, with reference values alongside when given.
pub fn markov_rows(
    words: &[Word],
    estimate: impl Fn(&Word) -> CoreResult<DMatrix<f64>>,
    reference: Option<&LpvSsaModel>,
) -> CoreResult<Vec<MarkovRow>> {
    words
        .iter()
        .map(|w| {
            Ok(MarkovRow {
                word: w.to_string(),
                reference: reference
                    .map(|r| r.sub_markov(w))
                    .transpose()?
                    .as_ref()
                    .map(matrix_to_json),
                estimate: matrix_to_json(&estimate(w)?),
            })
        })
        .collect()
}

fn fmt_matrix(m: &JsonMatrix) -> String {
    if m.len() == 1 && m[0].len() == 1 {
        return format!("{:.4}", m[0][0]);
    }
    let rows: Vec<String> = m
        .iter()
        .map(|r| {
            r.iter()
                .map(|v| format!("{v:.4}"))
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect();
    format!("[{}]", rows.join("; "))
}

/// Fit table: one BFR and one VAF line per output channel.
pub fn fit_table(fit: &FitReport) -> String {
    let mut s = String::new();
    let multi = fit.bfr.len() > 1;
    for (i, (b, v)) in fit.bfr.iter().zip(&fit.vaf).enumerate() {
        let tag = if multi {
            format!(" y{}", i + 1)
        } else {
            String::new()
        };
        writeln!(s, "BFR{tag:<4} {b:>7.2} %").unwrap();
        writeln!(s, "VAF{tag:<4} {v:>7.2} %").unwrap();
    }
    if multi {
        writeln!(s, "mean BFR {:>7.2} %", fit.mean_bfr()).unwrap();
        writeln!(s, "mean VAF {:>7.2} %", fit.mean_vaf()).unwrap();
    }
    if let Some(snr) = fit.snr_db {
        writeln!(s, "SNR     {snr:>7.2} dB").unwrap();
    }
    s
}

/// Sub-Markov table with `word`, `true` (when known) and `estimated` columns.
pub fn markov_table(rows: &[MarkovRow]) -> String {
    let mut s = String::new();
    let with_ref = rows.iter().any(|r| r.reference.is_some());
    if with_ref {
        writeln!(s, "{:<10} {:>12} {:>12}", "word", "true", "estimated").unwrap();
    } else {
        writeln!(s, "{:<10} {:>12}", "word", "value").unwrap();
    }
    for r in rows {
        match &r.reference {
            Some(t) if with_ref => writeln!(
                s,
                "{:<10} {:>12} {:>12}",
                r.word,
                fmt_matrix(t),
                fmt_matrix(&r.estimate)
            )
            .unwrap(),
            _ => writeln!(s, "{:<10} {:>12}", r.word, fmt_matrix(&r.estimate)).unwrap(),
        }
    }
    s
}

/// Short human summary of an identification run.
pub fn identify_summary(report: &IdentifyReport) -> String {
    let d = &report.diagnostics;
    let mut s = String::new();
    writeln!(
        s,
        "model order {} (deterministic {}, stochastic {})",
        report.model.n_x(),
        report.deterministic.order(),
        report.stochastic.order()
    )
    .unwrap();
    if let Some(h) = &d.deterministic {
        writeln!(s, "deterministic Hankel condition {:.3e}", h.condition).unwrap();
    }
    if let Some(h) = &d.stochastic {
        writeln!(s, "stochastic Hankel condition    {:.3e}", h.condition).unwrap();
    }
    if let (Some(i), Some(c)) = (d.recursion_iterations, d.recursion_converged) {
        let last = d.recursion_increments.last().copied().unwrap_or(0.0);
        writeln!(
            s,
            "recursion: {i} iterations, converged {c}, last increment {last:.2e}"
        )
        .unwrap();
    }
    if d.stochastic_degenerate {
        writeln!(s, "stochastic component treated as absent").unwrap();
    }
    for w in &d.warnings {
        writeln!(s, "warning: {w}").unwrap();
    }
    s
}
