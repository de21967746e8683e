//! End-to-end identification: input-output covariances, deterministic realization,
//! covariance split, stochastic realization and block composition.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use nalgebra::DMatrix;

use crate::covariances::{
    self, empirical_output_moments, empirical_psi_uy, estimate_input_covariance, estimate_weights,
    MatrixSeries, SecondMomentSet,
};
use crate::error::{Error, Result, Stage};
use crate::hankel::Selection;
use crate::linalg;
use crate::model::{generate, GeneratorSettings, LpvSsaModel};
use crate::realization::{
    compose, realize_deterministic, realize_stochastic, DeterministicRealization,
    HoKalmanDiagnostics, HoKalmanOptions, RecursionOptions, StochasticRealization,
};
use crate::words::{enumerate_words, ScheduleWeights, Word};

/// How the covariances of the stochastic component are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SplitVariant {
    /// Subtract the analytic contribution of the identified deterministic part.
    Analytic,
    /// Simulate the identified deterministic part and estimate covariances of the residual.
    #[default]
    Residual,
}

/// Formulas used by [`SplitVariant::Analytic`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MomentConvention {
    /// Stationary moments of the deterministic subsystem under white input.
    #[default]
    Stationary,
    /// The approximate-covariance formulas as published; exact only when every `p_sigma = 1`.
    Published,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdentifyConfig {
    pub selection_det: Selection,
    pub selection_stoch: Selection,
    /// `None` estimates `p_sigma` from the scheduling path.
    pub weights: Option<ScheduleWeights>,
    /// `None` estimates the input covariance from the input path.
    pub lambda_u: Option<DMatrix<f64>>,
    pub max_iter: usize,
    pub tol: f64,
    pub split_variant: SplitVariant,
    pub convention: MomentConvention,
    pub rank_tol: f64,
    pub cond_max: f64,
    pub pd_tol: f64,
    /// Stochastic block is dropped when `max_sigma tr(T_s) / tr(T_y)` falls below this.
    pub degenerate_ratio: f64,
    /// Skip the split and the stochastic stage entirely.
    pub skip_stochastic: bool,
}

impl IdentifyConfig {
    pub fn new(selection_det: Selection, selection_stoch: Selection) -> Self {
        let rec = RecursionOptions::default();
        IdentifyConfig {
            selection_det,
            selection_stoch,
            weights: None,
            lambda_u: None,
            max_iter: rec.max_iter,
            tol: rec.tol,
            split_variant: SplitVariant::default(),
            convention: MomentConvention::default(),
            rank_tol: 1e-8,
            cond_max: HoKalmanOptions::default().cond_max,
            pd_tol: rec.pd_tol,
            degenerate_ratio: 1e-2,
            skip_stochastic: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iter == 0 {
            return Err(Error::InvalidArgument(
                "iteration count must be positive".into(),
            ));
        }
        for (name, v) in [
            ("tol", self.tol),
            ("rank_tol", self.rank_tol),
            ("cond_max", self.cond_max),
            ("pd_tol", self.pd_tol),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if !(self.degenerate_ratio >= 0.0 && self.degenerate_ratio < 1.0) {
            return Err(Error::InvalidArgument(
                "degenerate_ratio must lie in [0, 1)".into(),
            ));
        }
        Ok(())
    }

    fn ho_kalman_options(&self) -> HoKalmanOptions {
        HoKalmanOptions {
            cond_max: self.cond_max,
            ..Default::default()
        }
    }

    fn recursion_options(&self) -> RecursionOptions {
        RecursionOptions {
            max_iter: self.max_iter,
            tol: self.tol,
            pd_tol: self.pd_tol,
        }
    }
}

/// Everything recorded along the way; fields stay `None` for stages that did not run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Diagnostics {
    pub weights: Option<ScheduleWeights>,
    pub estimated_weights: Option<ScheduleWeights>,
    pub lambda_u: Option<DMatrix<f64>>,
    pub estimated_lambda_u: Option<DMatrix<f64>>,
    /// `sigma_max / sigma_min` of the input covariance in use.
    pub lambda_u_condition: Option<f64>,
    pub psi_uy: Option<MatrixSeries>,
    pub deterministic: Option<HoKalmanDiagnostics>,
    pub psi_ys: Option<MatrixSeries>,
    pub stochastic_second_moments: Option<SecondMomentSet>,
    /// `max_sigma tr(T_s) / tr(T_y)`.
    pub stochastic_energy_ratio: Option<f64>,
    pub stochastic_degenerate: bool,
    pub stochastic: Option<HoKalmanDiagnostics>,
    pub recursion_iterations: Option<usize>,
    pub recursion_converged: Option<bool>,
    pub recursion_increments: Vec<f64>,
    pub recursion_min_p_eigenvalue: Option<f64>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdentifyReport {
    pub model: LpvSsaModel,
    pub deterministic: DeterministicRealization,
    pub stochastic: StochasticRealization,
    pub diagnostics: Diagnostics,
}

/// A failed run: the stage-tagged error plus whatever was gathered before it.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentifyFailure {
    pub error: Error,
    pub diagnostics: Diagnostics,
}

impl fmt::Display for IdentifyFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.error.fmt(f)
    }
}

impl From<IdentifyFailure> for Error {
    fn from(f: IdentifyFailure) -> Error {
        f.error
    }
}

fn words_of(sel: &Selection, n_mu: usize) -> Vec<Word> {
    sel.required_words(n_mu).into_iter().collect()
}

fn trace_ratio(num: &SecondMomentSet, den: &SecondMomentSet) -> f64 {
    num.as_slice()
        .iter()
        .zip(den.as_slice())
        .map(|(a, b)| {
            let d = b.trace();
            if d > 0.0 {
                a.trace() / d
            } else {
                0.0
            }
        })
        .fold(0.0, f64::max)
}

/// Runs the full identification pipeline on `data`.
// The failure carries the partial diagnostics by design.
#[allow(clippy::result_large_err)]
pub fn identify(
    data: &crate::model::Dataset,
    config: &IdentifyConfig,
) -> core::result::Result<IdentifyReport, IdentifyFailure> {
    let mut diagnostics = Diagnostics::default();
    match run(data, config, &mut diagnostics) {
        Ok((model, deterministic, stochastic)) => Ok(IdentifyReport {
            model,
            deterministic,
            stochastic,
            diagnostics,
        }),
        Err(error) => Err(IdentifyFailure { error, diagnostics }),
    }
}

fn run(
    data: &crate::model::Dataset,
    config: &IdentifyConfig,
    diag: &mut Diagnostics,
) -> Result<(LpvSsaModel, DeterministicRealization, StochasticRealization)> {
    config.validate()?;
    let (n_mu, ny, nu) = (data.n_mu(), data.n_y(), data.n_u());
    config
        .selection_det
        .check_dimensions(n_mu, ny, nu)
        .map_err(|e| e.in_stage(Stage::InputCovariances))?;
    if !config.skip_stochastic {
        config
            .selection_stoch
            .check_dimensions(n_mu, ny, ny)
            .map_err(|e| e.in_stage(Stage::StochasticRealization))?;
    }

    // input-output covariances
    let (weights, lambda_u, psi_uy) = (|| {
        let estimated_weights = estimate_weights(data)?;
        let estimated_lambda = estimate_input_covariance(data);
        let weights = match &config.weights {
            Some(w) if w.n_mu() != n_mu => {
                return Err(Error::Shape(format!(
                    "{} weights for {n_mu} scheduling channels",
                    w.n_mu()
                )))
            }
            Some(w) => w.clone(),
            None => estimated_weights.clone(),
        };
        let lambda_u = config
            .lambda_u
            .clone()
            .unwrap_or_else(|| estimated_lambda.clone());
        diag.estimated_weights = Some(estimated_weights);
        diag.estimated_lambda_u = Some(estimated_lambda);
        diag.weights = Some(weights.clone());
        diag.lambda_u = Some(lambda_u.clone());
        let ic = linalg::inverse_condition(&lambda_u);
        diag.lambda_u_condition = Some(if ic > 0.0 { 1.0 / ic } else { f64::INFINITY });
        let words = words_of(&config.selection_det, n_mu);
        let psi = empirical_psi_uy(data, &words, &weights, &lambda_u)?;
        diag.psi_uy = Some(psi.clone());
        Ok((weights, lambda_u, psi))
    })()
    .map_err(|e| e.in_stage(Stage::InputCovariances))?;

    // deterministic part
    let (det, det_diag) = realize_deterministic(
        &psi_uy,
        &config.selection_det,
        n_mu,
        &config.ho_kalman_options(),
    )
    .map_err(|e| e.in_stage(Stage::DeterministicRealization))?;
    if det_diag.warning {
        diag.warnings.push(format!(
            "deterministic Hankel condition number {:.3e} is large",
            det_diag.condition
        ));
    }
    diag.deterministic = Some(det_diag);

    let stoch = if config.skip_stochastic {
        StochasticRealization::empty(ny, alloc::vec![DMatrix::zeros(ny, ny); n_mu])
    } else {
        // covariance split
        let stoch_words: Vec<Word> = words_of(&config.selection_stoch, n_mu)
            .into_iter()
            .filter(|w| !w.is_empty())
            .collect();
        let (psi_ys, t_s, t_y) = (|| {
            let (lambda_y, t_y) = empirical_output_moments(data, &stoch_words, &weights)?;
            let (psi_ys, t_s) = match config.split_variant {
                SplitVariant::Residual => {
                    let res = covariances::residual_psi_ys(data, &det, &stoch_words, &weights)?;
                    (res.psi, res.second_moments)
                }
                SplitVariant::Analytic => {
                    let (lambda_s, t_det) = match config.convention {
                        MomentConvention::Stationary => covariances::exact_deterministic_moments(
                            &det,
                            &lambda_u,
                            &weights,
                            &stoch_words,
                        )?,
                        MomentConvention::Published => {
                            covariances::published_deterministic_moments(
                                &det,
                                &lambda_u,
                                &weights,
                                &stoch_words,
                            )?
                        }
                    };
                    (lambda_y.difference(&lambda_s)?, t_y.difference(&t_det)?)
                }
            };
            Ok((psi_ys, t_s, t_y))
        })()
        .map_err(|e: Error| e.in_stage(Stage::CovarianceSplit))?;
        let ratio = trace_ratio(&t_s, &t_y);
        let tiny = 10.0 * config.rank_tol;
        let degenerate = ratio < config.degenerate_ratio
            || (psi_ys.max_abs() < tiny && t_s.as_slice().iter().all(|t| t.amax() < tiny));
        diag.psi_ys = Some(psi_ys.clone());
        diag.stochastic_second_moments = Some(t_s.clone());
        diag.stochastic_energy_ratio = Some(ratio);
        diag.stochastic_degenerate = degenerate;

        if degenerate {
            diag.warnings.push(format!(
                "stochastic component carries {:.2e} of the output energy; using a zero-dimensional noise block",
                ratio
            ));
            let q = t_s
                .as_slice()
                .iter()
                .zip(weights.as_slice())
                .map(|(t, &p)| t * p)
                .collect();
            StochasticRealization::empty(ny, q)
        } else {
            let (stoch, stoch_diag) = realize_stochastic(
                &psi_ys,
                &t_s,
                &config.selection_stoch,
                &weights,
                &config.ho_kalman_options(),
                &config.recursion_options(),
            )
            .map_err(|e| e.in_stage(Stage::StochasticRealization))?;
            if stoch_diag.warning {
                diag.warnings.push(format!(
                    "stochastic Hankel condition number {:.3e} is large",
                    stoch_diag.condition
                ));
            }
            if !stoch.converged {
                diag.warnings.push(format!(
                    "innovation recursion stopped after {} iterations without meeting the tolerance",
                    stoch.iterations
                ));
            }
            diag.stochastic = Some(stoch_diag);
            diag.recursion_iterations = Some(stoch.iterations);
            diag.recursion_converged = Some(stoch.converged);
            diag.recursion_increments = stoch.increments.clone();
            diag.recursion_min_p_eigenvalue = Some(stoch.min_p_eigenvalue);
            stoch
        }
    };

    let model = compose(&det, &stoch, &weights).map_err(|e| e.in_stage(Stage::Composition))?;
    Ok((model, det, stoch))
}

/// One `(N, seed)` cell of a consistency sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub samples: usize,
    pub seed: u64,
    /// `max_{|w| <= 3} |M_hat(w) - M(w)|`, or the failure of this cell.
    pub outcome: core::result::Result<f64, Error>,
}

/// Largest entrywise sub-Markov deviation over all words of length at most `max_len`.
pub fn sub_markov_error(
    estimate: &DeterministicRealization,
    truth: &DeterministicRealization,
    max_len: usize,
) -> Result<f64> {
    let (a, b) = (
        estimate.markov_series(max_len)?,
        truth.markov_series(max_len)?,
    );
    let mut worst: f64 = 0.0;
    for w in enumerate_words(truth.n_mu(), max_len) {
        let (x, y) = (a.get(&w)?, b.get(&w)?);
        if x.shape() != y.shape() {
            return Err(Error::Shape("estimate and truth differ in shape".into()));
        }
        worst = worst.max((x - y).amax());
    }
    Ok(worst)
}

/// Simulates `model` with `settings` (sample count and seed overridden), identifies it
/// and scores the deterministic part. Only the deterministic stages run, so a failing
/// noise model cannot hide a deterministic estimate.
pub fn sweep_cell(
    model: &LpvSsaModel,
    samples: usize,
    seed: u64,
    settings: &GeneratorSettings,
    config: &IdentifyConfig,
) -> SweepCell {
    let settings = GeneratorSettings {
        samples,
        seed,
        ..settings.clone()
    };
    let config = IdentifyConfig {
        skip_stochastic: true,
        ..config.clone()
    };
    let outcome = generate(model, &settings).and_then(|sim| {
        let report = identify(&sim.dataset, &config)?;
        sub_markov_error(&report.deterministic, &model.deterministic_part(), 3)
    });
    SweepCell {
        samples,
        seed,
        outcome,
    }
}

/// Runs every `(N, seed)` cell in order; failed cells are recorded and the sweep continues.
pub fn consistency_sweep(
    model: &LpvSsaModel,
    sample_sizes: &[usize],
    seeds: &[u64],
    settings: &GeneratorSettings,
    config: &IdentifyConfig,
) -> Vec<SweepCell> {
    sample_sizes
        .iter()
        .flat_map(|&n| seeds.iter().map(move |&s| (n, s)))
        .map(|(n, s)| sweep_cell(model, n, s, settings, config))
        .collect()
}

/// Per sample size: mean error over successful cells and the number of failed cells.
pub fn sweep_means(cells: &[SweepCell]) -> Vec<(usize, Option<f64>, usize)> {
    let mut sizes: Vec<usize> = cells.iter().map(|c| c.samples).collect();
    sizes.dedup();
    sizes
        .into_iter()
        .map(|n| {
            let ok: Vec<f64> = cells
                .iter()
                .filter(|c| c.samples == n)
                .filter_map(|c| c.outcome.as_ref().ok().copied())
                .collect();
            let failed = cells
                .iter()
                .filter(|c| c.samples == n && c.outcome.is_err())
                .count();
            let mean = (!ok.is_empty()).then(|| ok.iter().sum::<f64>() / ok.len() as f64);
            (n, mean, failed)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmark;
    use crate::model::SignalDistribution;

    fn config() -> IdentifyConfig {
        IdentifyConfig::new(
            benchmark::deterministic_selection(),
            benchmark::stochastic_selection(),
        )
    }

    #[test]
    fn config_validation() {
        let mut c = config();
        assert!(c.validate().is_ok());
        c.max_iter = 0;
        assert!(matches!(c.validate(), Err(Error::InvalidArgument(_))));
        let mut c = config();
        c.tol = -1.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn noise_free_data_gives_degenerate_noise_block() {
        let sim = generate(
            &benchmark::system(),
            &GeneratorSettings {
                samples: 20_000,
                noise: SignalDistribution::Zero,
                seed: 5,
                ..Default::default()
            },
        )
        .unwrap();
        let report = identify(&sim.dataset, &config()).unwrap();
        assert!(report.diagnostics.stochastic_degenerate);
        assert_eq!(report.stochastic.order(), 0);
        assert_eq!(report.model.n_x(), 3);
        assert!(report.model.k.iter().all(|k| k.amax() < 0.05));
    }

    #[test]
    fn skipping_the_stochastic_stage_keeps_the_deterministic_realization() {
        let sim = generate(
            &benchmark::system(),
            &GeneratorSettings {
                samples: 5_000,
                seed: 6,
                ..Default::default()
            },
        )
        .unwrap();
        let mut c = config();
        c.skip_stochastic = true;
        let report = identify(&sim.dataset, &c).unwrap();
        let words = c.selection_det.required_words(2);
        let psi = empirical_psi_uy(
            &sim.dataset,
            &words,
            report.diagnostics.weights.as_ref().unwrap(),
            report.diagnostics.lambda_u.as_ref().unwrap(),
        )
        .unwrap();
        let (det, _) =
            realize_deterministic(&psi, &c.selection_det, 2, &Default::default()).unwrap();
        assert_eq!(report.model.a, det.a);
        assert_eq!(report.model.b, det.b);
        assert_eq!(report.model.c, det.c);
        assert_eq!(report.model.d, det.d);
    }

    #[test]
    fn failures_carry_stage_and_diagnostics() {
        let sim = generate(
            &benchmark::system(),
            &GeneratorSettings {
                samples: 1_000,
                seed: 6,
                ..Default::default()
            },
        )
        .unwrap();
        let zero = sim.dataset.with_output(DMatrix::zeros(1_000, 1)).unwrap();
        let failure = identify(&zero, &config()).unwrap_err();
        assert!(matches!(
            &failure.error,
            Error::Stage {
                stage: Stage::DeterministicRealization,
                ..
            }
        ));
        assert!(failure.error.is_numerical());
        assert!(failure.diagnostics.psi_uy.is_some());
        assert!(failure.diagnostics.deterministic.is_none());
    }

    #[test]
    fn identification_is_deterministic() {
        let sim = generate(
            &benchmark::system(),
            &GeneratorSettings {
                samples: 10_000,
                seed: 7,
                ..Default::default()
            },
        )
        .unwrap();
        let a = identify(&sim.dataset, &config());
        let b = identify(&sim.dataset, &config());
        assert_eq!(a, b);
    }

    #[test]
    fn sweep_records_divergence() {
        let mut unstable = benchmark::system();
        unstable.a[0] *= 4.0;
        let cells = consistency_sweep(&unstable, &[2_000], &[1, 2], &Default::default(), &config());
        assert_eq!(cells.len(), 2);
        assert!(cells
            .iter()
            .all(|c| matches!(c.outcome, Err(Error::Divergence(_)))));
        let means = sweep_means(&cells);
        assert_eq!(means, [(2_000, None, 2)]);
    }
}
