//! Stochastic LPV state-space affine models, their simulation and one-step prediction.
//!
//! ```text
//! x(t+1) = sum_i (A_i x(t) + B_i u(t) + K_i v(t)) mu_i(t)
//! y(t)   = C x(t) + D u(t) + v(t)
//! ```

use alloc::format;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::error::{Error, Result};
use crate::linalg::{self, check_shape, check_square};
use crate::realization::DeterministicRealization;
use crate::words::{word_matrix_product, ScheduleWeights, Word};

/// State magnitude beyond which a simulation is declared divergent.
pub const DIVERGENCE_BOUND: f64 = 1e12;

const SYMMETRY_TOL: f64 = 1e-10;

/// Matrix family `({A_i, B_i, K_i, Q_i}, C, D)` with scheduling weights `p_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct LpvSsaModel {
    pub a: Vec<DMatrix<f64>>,
    pub b: Vec<DMatrix<f64>>,
    pub k: Vec<DMatrix<f64>>,
    pub q: Vec<DMatrix<f64>>,
    pub c: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub weights: ScheduleWeights,
}

impl LpvSsaModel {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        a: Vec<DMatrix<f64>>,
        b: Vec<DMatrix<f64>>,
        k: Vec<DMatrix<f64>>,
        q: Vec<DMatrix<f64>>,
        c: DMatrix<f64>,
        d: DMatrix<f64>,
        weights: ScheduleWeights,
    ) -> Result<Self> {
        let model = LpvSsaModel {
            a,
            b,
            k,
            q,
            c,
            d,
            weights,
        };
        model.validate()?;
        Ok(model)
    }

    /// Model without noise channel: `K = 0`, `Q = 0`.
    pub fn deterministic(det: &DeterministicRealization, weights: ScheduleWeights) -> Result<Self> {
        let (n, ny) = (det.order(), det.n_y());
        let n_mu = det.n_mu();
        LpvSsaModel::new(
            det.a.clone(),
            det.b.clone(),
            alloc::vec![DMatrix::zeros(n, ny); n_mu],
            alloc::vec![DMatrix::zeros(ny, ny); n_mu],
            det.c.clone(),
            det.d.clone(),
            weights,
        )
    }

    pub fn validate(&self) -> Result<()> {
        let n_mu = self.a.len();
        if n_mu == 0 {
            return Err(Error::InvalidArgument(
                "model needs at least one scheduling channel".into(),
            ));
        }
        if self.weights.n_mu() != n_mu {
            return Err(Error::Shape(format!(
                "{} weights for {n_mu} scheduling channels",
                self.weights.n_mu()
            )));
        }
        for (name, fam) in [("B", &self.b), ("K", &self.k), ("Q", &self.q)] {
            if fam.len() != n_mu {
                return Err(Error::Shape(format!(
                    "{name} has {} members, expected {n_mu}",
                    fam.len()
                )));
            }
        }
        let (nx, ny, nu) = (self.n_x(), self.n_y(), self.n_u());
        check_shape(&self.c, ny, nx, "C")?;
        check_shape(&self.d, ny, nu, "D")?;
        for i in 0..n_mu {
            check_square(&self.a[i], nx, "A")?;
            check_shape(&self.b[i], nx, nu, "B")?;
            check_shape(&self.k[i], nx, ny, "K")?;
            check_square(&self.q[i], ny, "Q")?;
            if linalg::asymmetry(&self.q[i]) > SYMMETRY_TOL {
                return Err(Error::InvalidArgument(format!(
                    "Q_{} is not symmetric",
                    i + 1
                )));
            }
        }
        let all = self.a.iter().chain(&self.b).chain(&self.k).chain(&self.q);
        if all
            .chain([&self.c, &self.d])
            .any(|m| m.iter().any(|v| !v.is_finite()))
        {
            return Err(Error::InvalidArgument(
                "model contains non-finite entries".into(),
            ));
        }
        Ok(())
    }

    pub fn n_x(&self) -> usize {
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

    /// Spectral radius of `sum_sigma p_sigma A_sigma (x) A_sigma`; the model is stable iff it is below 1.
    pub fn stability_radius(&self) -> f64 {
        stability_radius(&self.a, &self.weights)
    }

    /// `M(e) = D`, `M(sigma s) = C A_s B_sigma`.
    pub fn sub_markov(&self, w: &Word) -> Result<DMatrix<f64>> {
        sub_markov(&self.a, &self.b, &self.c, &self.d, w)
    }

    pub fn deterministic_part(&self) -> DeterministicRealization {
        DeterministicRealization {
            a: self.a.clone(),
            b: self.b.clone(),
            c: self.c.clone(),
            d: self.d.clone(),
        }
    }

    /// State-space change of basis `x' = T x`.
    pub fn transformed(&self, t: &DMatrix<f64>) -> Result<Self> {
        check_square(t, self.n_x(), "basis change")?;
        let t_inv = t
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Singular("basis change is not invertible".into()))?;
        Ok(LpvSsaModel {
            a: self.a.iter().map(|a| t * a * &t_inv).collect(),
            b: self.b.iter().map(|b| t * b).collect(),
            k: self.k.iter().map(|k| t * k).collect(),
            q: self.q.clone(),
            c: &self.c * &t_inv,
            d: self.d.clone(),
            weights: self.weights.clone(),
        })
    }
}

/// Spectral radius of `sum_sigma p_sigma A_sigma (x) A_sigma`.
pub fn stability_radius(a: &[DMatrix<f64>], weights: &ScheduleWeights) -> f64 {
    let n = a.first().map_or(0, |m| m.nrows());
    let mut sum = DMatrix::zeros(n * n, n * n);
    for (i, ai) in a.iter().enumerate() {
        sum += ai.kronecker(ai) * weights.as_slice()[i];
    }
    linalg::spectral_radius(&sum)
}

/// Sub-Markov parameter of `({A_sigma, B_sigma}, C, D)` at `w`.
pub fn sub_markov(
    a: &[DMatrix<f64>],
    b: &[DMatrix<f64>],
    c: &DMatrix<f64>,
    d: &DMatrix<f64>,
    w: &Word,
) -> Result<DMatrix<f64>> {
    match w.split_first() {
        None => Ok(d.clone()),
        Some((sigma, rest)) => {
            w.check_alphabet(a.len())?;
            Ok(c * word_matrix_product(&rest, a)? * &b[sigma as usize - 1])
        }
    }
}

/// Aligned sample paths: one row per sample, `mu` column 1 identically 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    y: DMatrix<f64>,
    u: DMatrix<f64>,
    mu: DMatrix<f64>,
}

impl Dataset {
    pub fn new(y: DMatrix<f64>, u: DMatrix<f64>, mu: DMatrix<f64>) -> Result<Self> {
        let n = y.nrows();
        if u.nrows() != n || mu.nrows() != n {
            return Err(Error::Shape(format!(
                "paths have different lengths: y {n}, u {}, mu {}",
                u.nrows(),
                mu.nrows()
            )));
        }
        if mu.ncols() == 0 {
            return Err(Error::Shape(
                "scheduling path needs at least one channel".into(),
            ));
        }
        if let Some(t) = mu.column(0).iter().position(|&v| v != 1.0) {
            return Err(Error::InvalidArgument(format!(
                "scheduling channel 1 must be identically 1 (sample {})",
                t + 1
            )));
        }
        if [&y, &u, &mu]
            .iter()
            .any(|m| m.iter().any(|v| !v.is_finite()))
        {
            return Err(Error::InvalidArgument(
                "dataset contains non-finite samples".into(),
            ));
        }
        Ok(Dataset { y, u, mu })
    }

    pub fn len(&self) -> usize {
        self.y.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_y(&self) -> usize {
        self.y.ncols()
    }

    pub fn n_u(&self) -> usize {
        self.u.ncols()
    }

    pub fn n_mu(&self) -> usize {
        self.mu.ncols()
    }

    pub fn y(&self) -> &DMatrix<f64> {
        &self.y
    }

    pub fn u(&self) -> &DMatrix<f64> {
        &self.u
    }

    pub fn mu(&self) -> &DMatrix<f64> {
        &self.mu
    }

    /// Same inputs and scheduling with a different output path.
    pub fn with_output(&self, y: DMatrix<f64>) -> Result<Self> {
        Dataset::new(y, self.u.clone(), self.mu.clone())
    }

    fn check_model(&self, n_y: usize, n_u: usize, n_mu: usize) -> Result<()> {
        if self.n_y() != n_y || self.n_u() != n_u || self.n_mu() != n_mu {
            return Err(Error::Shape(format!(
                "dataset is (n_y={}, n_u={}, n_mu={}), model is (n_y={n_y}, n_u={n_u}, n_mu={n_mu})",
                self.n_y(),
                self.n_u(),
                self.n_mu()
            )));
        }
        Ok(())
    }
}

/// Distribution of an i.i.d. signal channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SignalDistribution {
    Zero,
    Uniform { low: f64, high: f64 },
    Normal { mean: f64, std_dev: f64 },
}

impl SignalDistribution {
    /// `E[s^2]`.
    pub fn second_moment(&self) -> f64 {
        match *self {
            SignalDistribution::Zero => 0.0,
            SignalDistribution::Uniform { low, high } => {
                (low * low + low * high + high * high) / 3.0
            }
            SignalDistribution::Normal { mean, std_dev } => mean * mean + std_dev * std_dev,
        }
    }

    fn fill<R: Rng>(&self, rng: &mut R, out: &mut DMatrix<f64>) -> Result<()> {
        match *self {
            SignalDistribution::Zero => out.fill(0.0),
            SignalDistribution::Uniform { low, high } => {
                let dist = Uniform::new(low, high)
                    .map_err(|e| Error::InvalidArgument(format!("uniform({low}, {high}): {e}")))?;
                sample_rows(rng, &dist, out);
            }
            SignalDistribution::Normal { mean, std_dev: 0.0 } => out.fill(mean),
            SignalDistribution::Normal { mean, std_dev } => {
                let dist = Normal::new(mean, std_dev).map_err(|e| {
                    Error::InvalidArgument(format!("normal({mean}, {std_dev}): {e}"))
                })?;
                sample_rows(rng, &dist, out);
            }
        }
        Ok(())
    }
}

// Row-major draw order keeps paths stable when the sample count changes.
fn sample_rows<R: Rng, D: Distribution<f64>>(rng: &mut R, dist: &D, out: &mut DMatrix<f64>) {
    for t in 0..out.nrows() {
        for j in 0..out.ncols() {
            out[(t, j)] = dist.sample(rng);
        }
    }
}

/// Settings for drawing input, scheduling and noise paths and simulating a model.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorSettings {
    pub samples: usize,
    pub burn_in: usize,
    pub input: SignalDistribution,
    /// Distribution of scheduling channels `2..=n_mu`.
    pub scheduling: SignalDistribution,
    pub noise: SignalDistribution,
    pub seed: u64,
}

impl Default for GeneratorSettings {
    fn default() -> Self {
        GeneratorSettings {
            samples: 100_000,
            burn_in: 1000,
            input: SignalDistribution::Uniform {
                low: -1.5,
                high: 1.5,
            },
            scheduling: SignalDistribution::Uniform {
                low: -1.5,
                high: 1.5,
            },
            noise: SignalDistribution::Normal {
                mean: 0.0,
                std_dev: 1.0,
            },
            seed: 0,
        }
    }
}

impl GeneratorSettings {
    /// Scheduling weights implied by the scheduling distribution.
    pub fn implied_weights(&self, n_mu: usize) -> Result<ScheduleWeights> {
        let mut p = alloc::vec![self.scheduling.second_moment(); n_mu];
        p[0] = 1.0;
        ScheduleWeights::new(p)
    }
}

/// Random stream identifiers; each stage draws from its own ChaCha stream of the seed.
pub mod streams {
    pub const INPUT: u64 = 1;
    pub const SCHEDULING: u64 = 2;
    pub const NOISE: u64 = 3;
    pub const MODEL: u64 = 4;
}

/// Generator for one stage of a seeded run.
pub fn stage_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Output of a simulation run after burn-in has been discarded.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub dataset: Dataset,
    /// Noise path `v`, aligned with the dataset.
    pub noise: DMatrix<f64>,
    /// Stability radius of the model; at or above 1 the run is not stationary.
    pub stability_radius: f64,
}

impl Simulation {
    pub fn is_stable(&self) -> bool {
        self.stability_radius < 1.0
    }
}

/// Dimensions and stability margin for [`random_model`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomModelSpec {
    pub n_x: usize,
    pub n_y: usize,
    pub n_u: usize,
    pub n_mu: usize,
    /// Target value of the stability radius, in `(0, 1)`.
    pub stability_radius: f64,
}

/// Model with standard normal `B`, `C`, `D`, `K`, weights `p_sigma` drawn from
/// `Uniform(0.25, 1.5)` for `sigma >= 2`, unit noise variance (`Q_sigma = p_sigma I`),
/// and standard normal `A` family rescaled to the requested stability radius.
/// Such a model is minimal with probability one.
pub fn random_model(spec: &RandomModelSpec, seed: u64) -> Result<LpvSsaModel> {
    let RandomModelSpec {
        n_x,
        n_y,
        n_u,
        n_mu,
        stability_radius: target,
    } = *spec;
    if n_x == 0 || n_y == 0 || n_u == 0 || n_mu == 0 {
        return Err(Error::InvalidArgument(
            "random model dimensions must be positive".into(),
        ));
    }
    if !(target > 0.0 && target < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "stability radius {target} outside (0, 1)"
        )));
    }
    let mut rng = stage_rng(seed, streams::MODEL);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut draw = |r: usize, c: usize| {
        let mut m = DMatrix::zeros(r, c);
        sample_rows(&mut rng, &normal, &mut m);
        m
    };
    let mut a: Vec<_> = (0..n_mu).map(|_| draw(n_x, n_x)).collect();
    let b = (0..n_mu).map(|_| draw(n_x, n_u)).collect();
    let k = (0..n_mu).map(|_| draw(n_x, n_y)).collect();
    let c = draw(n_y, n_x);
    let d = draw(n_y, n_u);
    let mut p = alloc::vec![1.0; n_mu];
    let weight = Uniform::new(0.25, 1.5).expect("valid range");
    for pi in p.iter_mut().skip(1) {
        *pi = weight.sample(&mut rng);
    }
    let weights = ScheduleWeights::new(p)?;
    let rho = stability_radius(&a, &weights);
    if rho > 0.0 {
        // the radius is quadratic in a common scale factor of the A family
        let scale = libm::sqrt(target / rho);
        a.iter_mut().for_each(|m| *m *= scale);
    }
    let q = weights
        .as_slice()
        .iter()
        .map(|&w| DMatrix::identity(n_y, n_y) * w)
        .collect();
    LpvSsaModel::new(a, b, k, q, c, d, weights)
}

/// Draws paths per `settings` and simulates `model` on them.
pub fn generate(model: &LpvSsaModel, settings: &GeneratorSettings) -> Result<Simulation> {
    let total = settings.samples + settings.burn_in;
    let mut u = DMatrix::zeros(total, model.n_u());
    settings
        .input
        .fill(&mut stage_rng(settings.seed, streams::INPUT), &mut u)?;
    let mut mu = DMatrix::zeros(total, model.n_mu());
    if model.n_mu() > 1 {
        let mut rest = DMatrix::zeros(total, model.n_mu() - 1);
        settings.scheduling.fill(
            &mut stage_rng(settings.seed, streams::SCHEDULING),
            &mut rest,
        )?;
        mu.columns_mut(1, model.n_mu() - 1).copy_from(&rest);
    }
    mu.column_mut(0).fill(1.0);
    let mut v = DMatrix::zeros(total, model.n_y());
    settings
        .noise
        .fill(&mut stage_rng(settings.seed, streams::NOISE), &mut v)?;
    simulate(model, &u, &mu, &v, settings.burn_in)
}

/// Iterates the model from `x = 0` on the given paths and discards the first `burn_in` samples.
pub fn simulate(
    model: &LpvSsaModel,
    u: &DMatrix<f64>,
    mu: &DMatrix<f64>,
    v: &DMatrix<f64>,
    burn_in: usize,
) -> Result<Simulation> {
    model.validate()?;
    let total = u.nrows();
    if mu.nrows() != total || v.nrows() != total {
        return Err(Error::Shape(
            "input, scheduling and noise paths differ in length".into(),
        ));
    }
    if burn_in > total {
        return Err(Error::InvalidArgument(format!(
            "burn-in {burn_in} exceeds path length {total}"
        )));
    }
    check_shape(u, total, model.n_u(), "input path")?;
    check_shape(mu, total, model.n_mu(), "scheduling path")?;
    check_shape(v, total, model.n_y(), "noise path")?;
    if mu.column(0).iter().any(|&m| m != 1.0) {
        return Err(Error::InvalidArgument(
            "scheduling channel 1 must be identically 1".into(),
        ));
    }

    let n = total - burn_in;
    let mut y = DMatrix::zeros(n, model.n_y());
    let mut x = DVector::zeros(model.n_x());
    let mut next = DVector::zeros(model.n_x());
    for t in 0..total {
        let ut = u.row(t).transpose();
        let vt = v.row(t).transpose();
        if t >= burn_in {
            let yt = &model.c * &x + &model.d * &ut + &vt;
            y.row_mut(t - burn_in).copy_from(&yt.transpose());
        }
        next.fill(0.0);
        for i in 0..model.n_mu() {
            let m = mu[(t, i)];
            if m == 0.0 {
                continue;
            }
            next.gemv(m, &model.a[i], &x, 1.0);
            next.gemv(m, &model.b[i], &ut, 1.0);
            next.gemv(m, &model.k[i], &vt, 1.0);
        }
        core::mem::swap(&mut x, &mut next);
        check_divergence(&x, t)?;
    }
    Ok(Simulation {
        dataset: Dataset::new(
            y,
            u.rows(burn_in, n).into_owned(),
            mu.rows(burn_in, n).into_owned(),
        )?,
        noise: v.rows(burn_in, n).into_owned(),
        stability_radius: model.stability_radius(),
    })
}

/// Noise-free output of `({A, B}, C, D)` from `x = 0`.
pub fn simulate_deterministic(
    det: &DeterministicRealization,
    u: &DMatrix<f64>,
    mu: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    det.validate()?;
    let total = u.nrows();
    check_shape(u, total, det.n_u(), "input path")?;
    check_shape(mu, total, det.n_mu(), "scheduling path")?;
    let mut y = DMatrix::zeros(total, det.n_y());
    let mut x = DVector::zeros(det.order());
    let mut next = DVector::zeros(det.order());
    for t in 0..total {
        let ut = u.row(t).transpose();
        let yt = &det.c * &x + &det.d * &ut;
        y.row_mut(t).copy_from(&yt.transpose());
        next.fill(0.0);
        for i in 0..det.n_mu() {
            let m = mu[(t, i)];
            if m == 0.0 {
                continue;
            }
            next.gemv(m, &det.a[i], &x, 1.0);
            next.gemv(m, &det.b[i], &ut, 1.0);
        }
        core::mem::swap(&mut x, &mut next);
        check_divergence(&x, t)?;
    }
    Ok(y)
}

/// One-step-ahead predictor in innovation form, started from `x = 0`.
pub fn predict_one_step(model: &LpvSsaModel, data: &Dataset) -> Result<DMatrix<f64>> {
    model.validate()?;
    data.check_model(model.n_y(), model.n_u(), model.n_mu())?;
    let mut y_hat = DMatrix::zeros(data.len(), model.n_y());
    let mut x = DVector::zeros(model.n_x());
    let mut next = DVector::zeros(model.n_x());
    for t in 0..data.len() {
        let ut = data.u.row(t).transpose();
        let yt = &model.c * &x + &model.d * &ut;
        let err = data.y.row(t).transpose() - &yt;
        y_hat.row_mut(t).copy_from(&yt.transpose());
        next.fill(0.0);
        for i in 0..model.n_mu() {
            let m = data.mu[(t, i)];
            if m == 0.0 {
                continue;
            }
            next.gemv(m, &model.a[i], &x, 1.0);
            next.gemv(m, &model.b[i], &ut, 1.0);
            next.gemv(m, &model.k[i], &err, 1.0);
        }
        core::mem::swap(&mut x, &mut next);
        check_divergence(&x, t)?;
    }
    Ok(y_hat)
}

fn check_divergence(x: &DVector<f64>, t: usize) -> Result<()> {
    if x.iter()
        .any(|v| !v.is_finite() || v.abs() > DIVERGENCE_BOUND)
    {
        return Err(Error::Divergence(t + 1));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmark;
    use alloc::vec;

    fn w(s: &str) -> Word {
        s.parse().unwrap()
    }

    fn scalar_model(a: f64) -> LpvSsaModel {
        let m = |v: f64| DMatrix::from_element(1, 1, v);
        LpvSsaModel::new(
            vec![m(a)],
            vec![m(1.0)],
            vec![m(0.0)],
            vec![m(0.0)],
            m(1.0),
            m(0.0),
            ScheduleWeights::uniform(1),
        )
        .unwrap()
    }

    #[test]
    fn stability_radius_cases() {
        let mut zero = benchmark::system();
        zero.a.iter_mut().for_each(|a| a.fill(0.0));
        assert_eq!(zero.stability_radius(), 0.0);
        assert!((scalar_model(1.1).stability_radius() - 1.21).abs() < 1e-12);
        let rho = benchmark::system().stability_radius();
        assert!(rho < 1.0);
        // 0.75 * 0.8^2: the A_2 block [[.4, .4], [.4, .4]] has eigenvalue 0.8.
        assert!((rho - 0.48).abs() < 1e-9, "rho = {rho}");
    }

    #[test]
    fn benchmark_sub_markov_values() {
        let sys = benchmark::system();
        let val = |s: &str| sys.sub_markov(&w(s)).unwrap()[(0, 0)];
        assert!((val("11") - 0.80).abs() < 1e-12);
        assert!((val("21") - 0.40).abs() < 1e-12);
        assert!((val("111") - 0.32).abs() < 1e-12);
        assert!((val("221") - 0.16).abs() < 1e-12);
        assert!((val("1111") - 0.128).abs() < 1e-12);
        assert_eq!(val(""), 1.0);
    }

    #[test]
    fn zero_input_and_noise_gives_zero_output() {
        let sys = benchmark::system();
        let n = 50;
        let mut mu = DMatrix::from_element(n, 2, 0.3);
        mu.column_mut(0).fill(1.0);
        let sim = simulate(&sys, &DMatrix::zeros(n, 1), &mu, &DMatrix::zeros(n, 1), 0).unwrap();
        assert!(sim.dataset.y().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn scalar_impulse_response() {
        let model = scalar_model(0.5);
        let n = 6;
        let mut u = DMatrix::zeros(n, 1);
        u[(0, 0)] = 1.0;
        let mu = DMatrix::from_element(n, 1, 1.0);
        let sim = simulate(&model, &u, &mu, &DMatrix::zeros(n, 1), 0).unwrap();
        let y: Vec<f64> = sim.dataset.y().iter().copied().collect();
        assert_eq!(y, [0.0, 1.0, 0.5, 0.25, 0.125, 0.0625]);
    }

    #[test]
    fn noise_free_simulation_matches_deterministic_path() {
        let sys = benchmark::system();
        let settings = GeneratorSettings {
            samples: 500,
            burn_in: 0,
            noise: SignalDistribution::Zero,
            seed: 7,
            ..Default::default()
        };
        let sim = generate(&sys, &settings).unwrap();
        let yd =
            simulate_deterministic(&sys.deterministic_part(), sim.dataset.u(), sim.dataset.mu())
                .unwrap();
        assert_eq!(&yd, sim.dataset.y());
    }

    #[test]
    fn deterministic_impulse_matches_word_series() {
        // Impulse at the first sample with mu_2 = 0: only letter-1 words contribute.
        let sys = benchmark::system();
        let n = 6;
        let mut u = DMatrix::zeros(n, 1);
        u[(0, 0)] = 1.0;
        let mut mu = DMatrix::zeros(n, 2);
        mu.column_mut(0).fill(1.0);
        let y = simulate_deterministic(&sys.deterministic_part(), &u, &mu).unwrap();
        assert_eq!(y[(0, 0)], 1.0);
        for t in 1..n {
            let word = Word::from_letters(&vec![1u8; t]);
            let expected = sys.sub_markov(&word).unwrap()[(0, 0)];
            assert!((y[(t, 0)] - expected).abs() < 1e-14);
        }
    }

    // Brute-force series: y(t) = D u(t) + sum over sigma v with |sigma v| <= t of
    // C A_v B_sigma u(t - |sigma v|) mu_{sigma v}(t - 1).
    fn series_output(sys: &LpvSsaModel, u: &DMatrix<f64>, mu: &DMatrix<f64>, t: usize) -> f64 {
        let mut acc = (&sys.d * u.row(t).transpose())[(0, 0)];
        for len in 1..=t {
            for word in crate::words::enumerate_words(sys.n_mu(), len)
                .into_iter()
                .filter(|w| w.len() == len)
            {
                let m = sys.sub_markov(&word).unwrap();
                let mw = crate::words::mu_product(&word, mu, t - 1).unwrap();
                acc += (m * u.row(t - len).transpose())[(0, 0)] * mw;
            }
        }
        acc
    }

    #[test]
    fn deterministic_simulation_matches_truncated_series() {
        let sys = benchmark::system();
        let settings = GeneratorSettings {
            samples: 9,
            burn_in: 0,
            seed: 3,
            ..Default::default()
        };
        let sim = generate(&sys, &settings).unwrap();
        let (u, mu) = (sim.dataset.u(), sim.dataset.mu());
        let y = simulate_deterministic(&sys.deterministic_part(), u, mu).unwrap();
        for t in 0..9 {
            assert!((y[(t, 0)] - series_output(&sys, u, mu, t)).abs() < 1e-12);
        }
    }

    #[test]
    fn predictor_without_gain_is_deterministic_simulation() {
        let mut sys = benchmark::system();
        sys.k.iter_mut().for_each(|k| k.fill(0.0));
        let sim = generate(
            &benchmark::system(),
            &GeneratorSettings {
                samples: 300,
                burn_in: 10,
                seed: 11,
                ..Default::default()
            },
        )
        .unwrap();
        let pred = predict_one_step(&sys, &sim.dataset).unwrap();
        let yd =
            simulate_deterministic(&sys.deterministic_part(), sim.dataset.u(), sim.dataset.mu())
                .unwrap();
        assert_eq!(pred, yd);
    }

    #[test]
    fn predictor_tracks_noise_free_data() {
        let sys = benchmark::system();
        let sim = generate(
            &sys,
            &GeneratorSettings {
                samples: 400,
                burn_in: 0,
                noise: SignalDistribution::Zero,
                seed: 5,
                ..Default::default()
            },
        )
        .unwrap();
        let pred = predict_one_step(&sys, &sim.dataset).unwrap();
        let err = (pred - sim.dataset.y()).rows(50, 350).amax();
        assert!(err < 1e-6, "err = {err}");
    }

    #[test]
    fn divergence_is_reported() {
        let mut model = scalar_model(3.0);
        model.k[0][(0, 0)] = 1.0;
        let n = 100;
        let u = DMatrix::from_element(n, 1, 1.0);
        let mu = DMatrix::from_element(n, 1, 1.0);
        let err = simulate(&model, &u, &mu, &DMatrix::zeros(n, 1), 0).unwrap_err();
        assert!(matches!(err, Error::Divergence(_)));
    }

    #[test]
    fn unstable_model_is_a_warning_only() {
        let model = scalar_model(1.01);
        let sim = generate(
            &model,
            &GeneratorSettings {
                samples: 20,
                burn_in: 0,
                seed: 1,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(!sim.is_stable());
    }

    #[test]
    fn seed_determines_output() {
        let sys = benchmark::system();
        let s = GeneratorSettings {
            samples: 200,
            burn_in: 20,
            seed: 42,
            ..Default::default()
        };
        let a = generate(&sys, &s).unwrap();
        let b = generate(&sys, &s).unwrap();
        assert_eq!(a.dataset, b.dataset);
        let c = generate(&sys, &GeneratorSettings { seed: 43, ..s }).unwrap();
        assert_ne!(a.dataset, c.dataset);
    }

    #[test]
    fn dataset_rejects_bad_scheduling() {
        let mu = DMatrix::from_row_slice(2, 1, &[1.0, 0.5]);
        assert!(Dataset::new(DMatrix::zeros(2, 1), DMatrix::zeros(2, 1), mu).is_err());
    }

    #[test]
    fn sub_markov_is_basis_invariant() {
        let sys = benchmark::system();
        let t = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 0.0, 0.0, 1.0, -1.0, 0.5, 0.0, 2.0]);
        let other = sys.transformed(&t).unwrap();
        for word in crate::words::enumerate_words(2, 7) {
            let diff = (sys.sub_markov(&word).unwrap() - other.sub_markov(&word).unwrap()).amax();
            assert!(diff < 1e-9);
        }
    }

    #[test]
    fn random_models_hit_the_requested_radius() {
        for seed in 0..10 {
            let spec = RandomModelSpec {
                n_x: 1 + seed as usize % 4,
                n_y: 1 + seed as usize % 2,
                n_u: 2 - seed as usize % 2,
                n_mu: 1 + seed as usize % 3,
                stability_radius: 0.6,
            };
            let m = random_model(&spec, seed).unwrap();
            assert!((m.stability_radius() - 0.6).abs() < 1e-9);
            assert_eq!(m, random_model(&spec, seed).unwrap());
        }
    }

    #[test]
    fn signal_second_moments() {
        let u = SignalDistribution::Uniform {
            low: -1.5,
            high: 1.5,
        };
        assert!((u.second_moment() - 0.75).abs() < 1e-15);
    }
}
