use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lpvssa::formats::{self, to_json_string, ConventionName, SelectionFile, VariantName};
use lpvssa::report::{self, FitJson, IdentifyJson};
use lpvssa::sweep::{default_workers, parallel_sweep};
use lpvssa::{Error, Result};
use lpvssa_core::covariances::{
    empirical_output_moments, empirical_psi_uy, estimate_input_covariance, estimate_weights,
};
use lpvssa_core::identify::sweep_means;
use lpvssa_core::model::{generate, predict_one_step};
use lpvssa_core::words::enumerate_words;
use lpvssa_core::{
    hankel, linalg, metrics, FitReport, GeneratorSettings, MatrixSeries, ScheduleWeights,
    SearchStrategy, SignalDistribution, Word,
};
use serde::Serialize;

#[derive(Parser)]
#[command(
    name = "lpvssa",
    version,
    about = "Stochastic LPV-SSA realization and identification"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Output {
    /// Print machine-readable JSON instead of tables.
    #[arg(long, global = true)]
    json: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a model and write a dataset CSV.
    Simulate(SimulateArgs),
    /// Identify a model from a dataset.
    Identify(IdentifyArgs),
    /// One-step-ahead prediction fit of a model on a dataset.
    Validate(ValidateArgs),
    /// Sub-Markov parameters of a model for all words up to a length.
    Markov(MarkovArgs),
    /// Empirical covariance estimates of a dataset.
    Covariances(CovariancesArgs),
    /// Search a selection whose Hankel matrix has full rank.
    SearchSelection(SearchArgs),
    /// Identification error over sample sizes and seeds.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Also write the noise path (`t,e1..`).
    #[arg(long)]
    noise_out: Option<PathBuf>,
    /// Number of samples kept after burn-in.
    #[arg(long, default_value_t = 100_000)]
    n: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 1000)]
    burn_in: usize,
    /// Standard deviation of the Gaussian noise; 0 gives noise-free data.
    #[arg(long, default_value_t = 1.0)]
    noise_std: f64,
    /// Inputs are drawn from Uniform(-r, r).
    #[arg(long, default_value_t = 1.5)]
    input_range: f64,
    /// Scheduling channels 2.. are drawn from Uniform(-r, r).
    #[arg(long, default_value_t = 1.5)]
    scheduling_range: f64,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct IdentifyArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    config: PathBuf,
    /// Write the identified model JSON here.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the full JSON report here.
    #[arg(long)]
    report: Option<PathBuf>,
    /// True model, for the sub-Markov comparison table.
    #[arg(long)]
    reference: Option<PathBuf>,
    /// Validation dataset for the BFR/VAF table.
    #[arg(long)]
    validation: Option<PathBuf>,
    /// Overrides the configured recursion iteration cap.
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long, value_enum)]
    variant: Option<VariantName>,
    #[arg(long, value_enum)]
    convention: Option<ConventionName>,
    #[arg(long)]
    rank_tol: Option<f64>,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Noise path of the dataset, for the SNR line.
    #[arg(long)]
    noise: Option<PathBuf>,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct MarkovArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value_t = 4)]
    max_len: usize,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct CovariancesArgs {
    #[arg(long)]
    data: PathBuf,
    /// Comma-separated words, e.g. `e,1,21`.
    #[arg(long, value_delimiter = ',', required = true)]
    words: Vec<String>,
    /// Comma-separated scheduling weights; estimated from the data when omitted.
    #[arg(long, value_delimiter = ',')]
    weights: Option<Vec<f64>>,
    #[command(flatten)]
    output: Output,
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyName {
    Exhaustive,
    Greedy,
}

#[derive(Args)]
struct SearchArgs {
    /// Search on the empirical input-output covariances of a dataset.
    #[arg(long, conflicts_with = "model", required_unless_present = "model")]
    data: Option<PathBuf>,
    /// Search on the exact sub-Markov parameters of a model.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Selection size.
    #[arg(long)]
    n: usize,
    #[arg(long, value_enum, default_value = "exhaustive")]
    strategy: StrategyName,
    #[arg(long, default_value_t = 1e-8)]
    rank_tol: f64,
    /// Write the selection JSON here.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    config: PathBuf,
    /// Comma-separated sample sizes.
    #[arg(long, value_delimiter = ',', required = true)]
    n: Vec<usize>,
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',', required = true)]
    seed: Vec<u64>,
    #[arg(long)]
    workers: Option<usize>,
    #[command(flatten)]
    output: Output,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Identify(a) => identify(a),
        Command::Validate(a) => validate(a),
        Command::Markov(a) => markov(a),
        Command::Covariances(a) => covariances(a),
        Command::SearchSelection(a) => search_selection(a),
        Command::Sweep(a) => sweep(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn emit<T: Serialize>(json: bool, value: &T, text: impl FnOnce() -> String) {
    if json {
        print!("{}", to_json_string(value));
    } else {
        print!("{}", text());
    }
}

fn usage(msg: impl Into<String>) -> Error {
    Error::Usage(msg.into())
}

fn uniform(range: f64, what: &str) -> Result<SignalDistribution> {
    if !(range > 0.0 && range.is_finite()) {
        return Err(usage(format!("{what} must be positive")));
    }
    Ok(SignalDistribution::Uniform {
        low: -range,
        high: range,
    })
}

#[derive(Serialize)]
struct SimulateJson {
    samples: usize,
    n_y: usize,
    n_u: usize,
    n_mu: usize,
    seed: u64,
    snr_db: Option<f64>,
    stability_radius: f64,
    output: PathBuf,
}

fn simulate(a: SimulateArgs) -> Result<()> {
    if a.n == 0 {
        return Err(usage("--n must be at least 1"));
    }
    if !(a.noise_std >= 0.0 && a.noise_std.is_finite()) {
        return Err(usage("--noise-std must be non-negative"));
    }
    let model = formats::read_model(&a.model)?;
    let settings = GeneratorSettings {
        samples: a.n,
        burn_in: a.burn_in,
        input: uniform(a.input_range, "--input-range")?,
        scheduling: uniform(a.scheduling_range, "--scheduling-range")?,
        noise: if a.noise_std == 0.0 {
            SignalDistribution::Zero
        } else {
            SignalDistribution::Normal {
                mean: 0.0,
                std_dev: a.noise_std,
            }
        },
        seed: a.seed,
    };
    let sim = generate(&model, &settings)?;
    if !sim.is_stable() {
        eprintln!(
            "warning: stability radius {:.4} is not below 1",
            sim.stability_radius
        );
    }
    formats::save_dataset(&a.out, &sim.dataset)?;
    if let Some(p) = &a.noise_out {
        formats::save_noise(p, &sim.noise)?;
    }
    let snr = metrics::snr_db(sim.dataset.y(), &sim.noise)?;
    let out = SimulateJson {
        samples: sim.dataset.len(),
        n_y: sim.dataset.n_y(),
        n_u: sim.dataset.n_u(),
        n_mu: sim.dataset.n_mu(),
        seed: a.seed,
        snr_db: snr.is_finite().then_some(snr),
        stability_radius: sim.stability_radius,
        output: a.out.clone(),
    };
    emit(a.output.json, &out, || {
        let snr = if snr.is_finite() {
            format!("{snr:.2} dB")
        } else {
            "inf (noise-free)".into()
        };
        format!(
            "wrote {} samples to {}\nSNR {snr}\nstability radius {:.4}\n",
            out.samples,
            a.out.display(),
            out.stability_radius
        )
    });
    Ok(())
}

fn identify(a: IdentifyArgs) -> Result<()> {
    let data = formats::load_dataset(&a.data)?;
    let mut config = formats::read_config(&a.config)?;
    if let Some(i) = a.iters {
        config.max_iter = i;
    }
    if let Some(v) = a.variant {
        config.split_variant = v.into();
    }
    if let Some(c) = a.convention {
        config.convention = c.into();
    }
    if let Some(t) = a.rank_tol {
        config.rank_tol = t;
    }
    config.validate()?;
    let reference = a
        .reference
        .as_deref()
        .map(formats::read_model)
        .transpose()?;
    let validation = a
        .validation
        .as_deref()
        .map(formats::load_dataset)
        .transpose()?;

    let report = match lpvssa_core::identify(&data, &config) {
        Ok(r) => r,
        Err(failure) => {
            if let Some(path) = &a.report {
                let diag: report::DiagnosticsJson = (&failure.diagnostics).into();
                formats::write_file(
                    path,
                    &to_json_string(&serde_json::json!({
                        "error": failure.error.to_string(),
                        "diagnostics": diag,
                    })),
                )?;
            }
            return Err(failure.error.into());
        }
    };
    let fit = validation
        .map(|v| {
            let y_hat = predict_one_step(&report.model, &v)?;
            FitReport::new(v.y(), &y_hat, None)
        })
        .transpose()?;
    let json = IdentifyJson::new(&report, fit.as_ref(), reference.as_ref())?;
    if let Some(path) = &a.out {
        formats::write_model(path, &report.model)?;
    }
    if let Some(path) = &a.report {
        formats::write_file(path, &to_json_string(&json))?;
    }
    emit(a.output.json, &json, || {
        let mut s = report::identify_summary(&report);
        if let Some(f) = &fit {
            s.push('\n');
            s.push_str(&report::fit_table(f));
        }
        s.push('\n');
        s.push_str(&report::markov_table(&json.markov));
        s
    });
    Ok(())
}

fn validate(a: ValidateArgs) -> Result<()> {
    let model = formats::read_model(&a.model)?;
    let data = formats::load_dataset(&a.data)?;
    let noise = a.noise.as_deref().map(formats::load_noise).transpose()?;
    let y_hat = predict_one_step(&model, &data)?;
    let fit = FitReport::new(data.y(), &y_hat, noise.as_ref())?;
    emit(a.output.json, &FitJson::from(&fit), || {
        report::fit_table(&fit)
    });
    Ok(())
}

fn markov(a: MarkovArgs) -> Result<()> {
    let model = formats::read_model(&a.model)?;
    let words = enumerate_words(model.n_mu(), a.max_len);
    let series = model.deterministic_part().markov_series(a.max_len)?;
    let rows = report::markov_rows(&words, |w| series.get(w).cloned(), None)?;
    let json: BTreeMap<String, formats::JsonMatrix> = rows
        .iter()
        .map(|r| (r.word.clone(), r.estimate.clone()))
        .collect();
    emit(a.output.json, &json, || report::markov_table(&rows));
    Ok(())
}

#[derive(Serialize)]
struct CovariancesJson {
    samples: usize,
    estimated_weights: Vec<f64>,
    weights: Vec<f64>,
    lambda_u: formats::JsonMatrix,
    lambda_u_condition: Option<f64>,
    psi_uy: BTreeMap<String, formats::JsonMatrix>,
    lambda_y: BTreeMap<String, formats::JsonMatrix>,
    second_moments: Vec<formats::JsonMatrix>,
}

fn parse_words(words: &[String]) -> Result<Vec<Word>> {
    words
        .iter()
        .map(|w| {
            w.trim()
                .parse::<Word>()
                .map_err(|e| usage(format!("bad word {w:?}: {e}")))
        })
        .collect()
}

fn to_json_map(s: &MatrixSeries) -> BTreeMap<String, formats::JsonMatrix> {
    s.iter()
        .map(|(w, m)| (w.to_string(), formats::matrix_to_json(m)))
        .collect()
}

fn covariances(a: CovariancesArgs) -> Result<()> {
    let data = formats::load_dataset(&a.data)?;
    let words = parse_words(&a.words)?;
    for w in &words {
        w.check_alphabet(data.n_mu())?;
    }
    let estimated = estimate_weights(&data)?;
    let weights = match a.weights {
        Some(p) if p.len() != data.n_mu() => {
            return Err(usage(format!(
                "{} weights for {} scheduling channels",
                p.len(),
                data.n_mu()
            )))
        }
        Some(p) => ScheduleWeights::new(p)?,
        None => estimated.clone(),
    };
    let lambda_u = estimate_input_covariance(&data);
    let psi = empirical_psi_uy(&data, &words, &weights, &lambda_u)?;
    let nonempty: Vec<Word> = words.iter().filter(|w| !w.is_empty()).cloned().collect();
    let (lambda_y, t) = empirical_output_moments(&data, &nonempty, &weights)?;
    let ic = linalg::inverse_condition(&lambda_u);
    let out = CovariancesJson {
        samples: data.len(),
        estimated_weights: estimated.as_slice().to_vec(),
        weights: weights.as_slice().to_vec(),
        lambda_u: formats::matrix_to_json(&lambda_u),
        lambda_u_condition: (ic > 0.0).then(|| 1.0 / ic),
        psi_uy: to_json_map(&psi),
        lambda_y: to_json_map(&lambda_y),
        second_moments: t.as_slice().iter().map(formats::matrix_to_json).collect(),
    };
    emit(a.output.json, &out, || {
        let mut s = format!(
            "samples {}\nestimated weights {:?}\ninput covariance {:?}\n\n{:<10} {:>14} {:>14}\n",
            out.samples, out.estimated_weights, out.lambda_u, "word", "psi_uy", "lambda_y"
        );
        for w in &words {
            let key = w.to_string();
            let ly = out
                .lambda_y
                .get(&key)
                .map_or("-".to_string(), |m| format!("{m:?}"));
            s.push_str(&format!(
                "{key:<10} {:>14} {ly:>14}\n",
                format!("{:?}", out.psi_uy[&key])
            ));
        }
        s
    });
    Ok(())
}

fn search_selection(a: SearchArgs) -> Result<()> {
    if a.n == 0 {
        return Err(usage("--n must be at least 1"));
    }
    let max_len = 2 * a.n + 1;
    let (series, n_mu) = match (&a.data, &a.model) {
        (Some(path), None) => {
            let data = formats::load_dataset(path)?;
            let weights = estimate_weights(&data)?;
            let lambda_u = estimate_input_covariance(&data);
            let words = enumerate_words(data.n_mu(), max_len);
            (
                empirical_psi_uy(&data, &words, &weights, &lambda_u)?,
                data.n_mu(),
            )
        }
        (None, Some(path)) => {
            let model = formats::read_model(path)?;
            (
                model.deterministic_part().markov_series(max_len)?,
                model.n_mu(),
            )
        }
        _ => return Err(usage("give exactly one of --data and --model")),
    };
    let strategy = match a.strategy {
        StrategyName::Exhaustive => SearchStrategy::Exhaustive,
        StrategyName::Greedy => SearchStrategy::Greedy,
    };
    let sel = hankel::search_selection(&series, a.n, n_mu, strategy, a.rank_tol)?;
    let file = SelectionFile::from_selection(&sel);
    if let Some(path) = &a.out {
        formats::write_file(path, &to_json_string(&file))?;
    }
    let h = hankel::build_hankel(&series, &sel)?;
    emit(a.output.json, &file, || {
        let mut s = String::from("rows (word, output):\n");
        for (w, k) in &file.alpha {
            s.push_str(&format!("  ({w}, {k})\n"));
        }
        s.push_str("columns (letter, word, input):\n");
        for (sigma, w, l) in &file.beta {
            s.push_str(&format!("  ({sigma}, {w}, {l})\n"));
        }
        s.push_str(&format!(
            "Hankel singular values {:?}\n",
            linalg::singular_values(&h)
        ));
        s
    });
    Ok(())
}

#[derive(Serialize)]
struct SweepRow {
    samples: usize,
    seed: u64,
    error: Option<f64>,
    failure: Option<String>,
}

#[derive(Serialize)]
struct SweepMean {
    samples: usize,
    mean_error: Option<f64>,
    failed: usize,
}

#[derive(Serialize)]
struct SweepJson {
    cells: Vec<SweepRow>,
    means: Vec<SweepMean>,
}

fn sweep(a: SweepArgs) -> Result<()> {
    let model = formats::read_model(&a.model)?;
    let config = formats::read_config(&a.config)?;
    if a.n.contains(&0) {
        return Err(usage("sample sizes must be positive"));
    }
    let workers = a.workers.unwrap_or_else(default_workers);
    let cells = parallel_sweep(
        &model,
        &a.n,
        &a.seed,
        &GeneratorSettings::default(),
        &config,
        workers,
    );
    let out = SweepJson {
        cells: cells
            .iter()
            .map(|c| SweepRow {
                samples: c.samples,
                seed: c.seed,
                error: c.outcome.as_ref().ok().copied(),
                failure: c.outcome.as_ref().err().map(ToString::to_string),
            })
            .collect(),
        means: sweep_means(&cells)
            .into_iter()
            .map(|(samples, mean_error, failed)| SweepMean {
                samples,
                mean_error,
                failed,
            })
            .collect(),
    };
    emit(a.output.json, &out, || {
        let mut s = format!("{:>10} {:>8} {:>14}\n", "N", "seed", "error");
        for c in &out.cells {
            let v = c.error.map_or_else(
                || c.failure.clone().unwrap_or_default(),
                |e| format!("{e:.6}"),
            );
            s.push_str(&format!("{:>10} {:>8} {v:>14}\n", c.samples, c.seed));
        }
        for m in &out.means {
            let v = m.mean_error.map_or("-".to_string(), |e| format!("{e:.6}"));
            s.push_str(&format!(
                "mean N={}: {v} ({} failed)\n",
                m.samples, m.failed
            ));
        }
        s
    });
    Ok(())
}
