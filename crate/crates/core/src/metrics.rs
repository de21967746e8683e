//! Fit metrics on sample paths stored one row per sample.
//!
//! Variances use the population convention (divide by `N`).

use alloc::format;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

fn check_paths(y: &DMatrix<f64>, y_hat: &DMatrix<f64>) -> Result<()> {
    if y.shape() != y_hat.shape() {
        return Err(Error::Shape(format!(
            "paths are {}x{} and {}x{}",
            y.nrows(),
            y.ncols(),
            y_hat.nrows(),
            y_hat.ncols()
        )));
    }
    if y.nrows() < 2 {
        return Err(Error::InvalidArgument(
            "fit metrics need at least two samples".into(),
        ));
    }
    Ok(())
}

fn mean(x: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = x.clone().count() as f64;
    x.sum::<f64>() / n
}

fn variance(x: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = mean(x.clone());
    mean(x.map(|v| (v - m) * (v - m)))
}

/// Best fit rate per output channel, in percent:
/// `max(1 - sqrt(sum (y - y_hat)^2 / sum (y - mean y)^2), 0) * 100`.
pub fn bfr(y: &DMatrix<f64>, y_hat: &DMatrix<f64>) -> Result<Vec<f64>> {
    check_paths(y, y_hat)?;
    (0..y.ncols())
        .map(|j| {
            let (yc, hc) = (y.column(j), y_hat.column(j));
            let m = mean(yc.iter().copied());
            let den: f64 = yc.iter().map(|v| (v - m) * (v - m)).sum();
            if den == 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "output {} is constant",
                    j + 1
                )));
            }
            let num: f64 = yc
                .iter()
                .zip(hc.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            Ok((1.0 - libm::sqrt(num / den)).max(0.0) * 100.0)
        })
        .collect()
}

/// Variance accounted for per output channel, in percent:
/// `max(1 - var(y - y_hat) / var(y), 0) * 100`.
pub fn vaf(y: &DMatrix<f64>, y_hat: &DMatrix<f64>) -> Result<Vec<f64>> {
    check_paths(y, y_hat)?;
    (0..y.ncols())
        .map(|j| {
            let (yc, hc) = (y.column(j), y_hat.column(j));
            let den = variance(yc.iter().copied());
            if den == 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "output {} is constant",
                    j + 1
                )));
            }
            let num = variance(yc.iter().zip(hc.iter()).map(|(a, b)| a - b));
            Ok((1.0 - num / den).max(0.0) * 100.0)
        })
        .collect()
}

/// `10 log10(sum (y - e)^2 / sum e^2)` over all channels; `+inf` without noise and
/// `-inf` when `y = e`.
pub fn snr_db(y: &DMatrix<f64>, e: &DMatrix<f64>) -> Result<f64> {
    if y.shape() != e.shape() {
        return Err(Error::Shape(
            "output and noise paths differ in shape".into(),
        ));
    }
    let noise: f64 = e.iter().map(|v| v * v).sum();
    let signal: f64 = y.iter().zip(e.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(match (signal == 0.0, noise == 0.0) {
        (true, true) => f64::NAN,
        (_, true) => f64::INFINITY,
        (true, _) => f64::NEG_INFINITY,
        _ => 10.0 * libm::log10(signal / noise),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub bfr: Vec<f64>,
    pub vaf: Vec<f64>,
    pub snr_db: Option<f64>,
}

impl FitReport {
    /// BFR and VAF of `y_hat` against `y`; SNR when the noise path is known.
    pub fn new(
        y: &DMatrix<f64>,
        y_hat: &DMatrix<f64>,
        noise: Option<&DMatrix<f64>>,
    ) -> Result<Self> {
        Ok(FitReport {
            bfr: bfr(y, y_hat)?,
            vaf: vaf(y, y_hat)?,
            snr_db: noise.map(|e| snr_db(y, e)).transpose()?,
        })
    }

    pub fn mean_bfr(&self) -> f64 {
        self.bfr.iter().sum::<f64>() / self.bfr.len() as f64
    }

    pub fn mean_vaf(&self) -> f64 {
        self.vaf.iter().sum::<f64>() / self.vaf.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn col(v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_column_slice(v.len(), 1, v)
    }

    #[test]
    fn perfect_and_mean_predictions() {
        let y = col(&[1.0, -2.0, 0.5, 3.0]);
        assert_eq!(bfr(&y, &y).unwrap(), [100.0]);
        assert_eq!(vaf(&y, &y).unwrap(), [100.0]);
        let flat = DMatrix::from_element(4, 1, 0.625);
        assert!(bfr(&y, &flat).unwrap()[0].abs() < 1e-12);
        let shifted = y.add_scalar(5.0);
        assert!((vaf(&y, &shifted).unwrap()[0] - 100.0).abs() < 1e-12);
    }

    #[test]
    fn anti_correlated_prediction_clamps_to_zero() {
        let y = col(&[1.0, -1.0, 2.0, -2.0]);
        assert_eq!(bfr(&y, &(-&y)).unwrap(), [0.0]);
        assert_eq!(vaf(&y, &(-&y)).unwrap(), [0.0]);
    }

    #[test]
    fn degenerate_inputs() {
        let y = DMatrix::from_element(3, 1, 2.0);
        assert!(matches!(bfr(&y, &y), Err(Error::InvalidArgument(_))));
        assert!(matches!(vaf(&y, &y), Err(Error::InvalidArgument(_))));
        assert!(matches!(
            bfr(&col(&[1.0]), &col(&[1.0])),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            bfr(&col(&[1.0, 2.0]), &col(&[1.0, 2.0, 3.0])),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn snr_cases() {
        let e = col(&[1.0, -1.0]);
        let y = col(&[2.0, 0.0]);
        assert!(snr_db(&y, &e).unwrap().abs() < 1e-12);
        assert_eq!(snr_db(&y, &col(&[0.0, 0.0])).unwrap(), f64::INFINITY);
        assert_eq!(snr_db(&e, &e).unwrap(), f64::NEG_INFINITY);
        let y = col(&[11.0, 9.0]);
        assert!((snr_db(&y, &e).unwrap() - 20.0).abs() < 1e-12);
    }

    #[test]
    fn report_aggregates_channels() {
        let y = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, -1.0, 0.0, 0.5, 1.0]);
        let r = FitReport::new(&y, &y, None).unwrap();
        assert_eq!(r.mean_bfr(), 100.0);
        assert_eq!(r.mean_vaf(), 100.0);
        assert_eq!(r.snr_db, None);
    }

    proptest! {
        #[test]
        fn metrics_stay_in_range(y in prop::collection::vec(-10.0..10.0f64, 3..40), noise in prop::collection::vec(-5.0..5.0f64, 40)) {
            let y = col(&y);
            let y_hat = &y + col(&noise[..y.nrows()]);
            prop_assume!(variance(y.iter().copied()) > 1e-9);
            for v in bfr(&y, &y_hat).unwrap().into_iter().chain(vaf(&y, &y_hat).unwrap()) {
                prop_assert!((0.0..=100.0).contains(&v));
            }
        }

        #[test]
        fn vaf_is_shift_invariant(y in prop::collection::vec(-10.0..10.0f64, 3..40), noise in prop::collection::vec(-5.0..5.0f64, 40), c in -100.0..100.0f64) {
            let y = col(&y);
            let y_hat = &y + col(&noise[..y.nrows()]);
            prop_assume!(variance(y.iter().copied()) > 1e-6);
            let a = vaf(&y, &y_hat).unwrap()[0];
            let b = vaf(&y, &y_hat.add_scalar(c)).unwrap()[0];
            let d = vaf(&y.add_scalar(c), &y_hat.add_scalar(c)).unwrap()[0];
            prop_assert!((a - b).abs() < 1e-6 && (a - d).abs() < 1e-6);
        }

        #[test]
        fn bfr_is_scale_invariant(y in prop::collection::vec(-10.0..10.0f64, 3..40), noise in prop::collection::vec(-5.0..5.0f64, 40), s in 0.01..100.0f64) {
            let y = col(&y);
            let y_hat = &y + col(&noise[..y.nrows()]);
            prop_assume!(variance(y.iter().copied()) > 1e-6);
            let a = bfr(&y, &y_hat).unwrap()[0];
            let b = bfr(&(&y * s), &(&y_hat * s)).unwrap()[0];
            prop_assert!((a - b).abs() < 1e-8);
        }
    }
}
