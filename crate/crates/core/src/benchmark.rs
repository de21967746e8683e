//! Three-state, two-channel benchmark system used by the test suites and the CLI fixture.

use alloc::vec;

use nalgebra::DMatrix;

use crate::hankel::{ColumnIndex, RowIndex, Selection};
use crate::identify::IdentifyConfig;
use crate::model::LpvSsaModel;
use crate::words::{ScheduleWeights, Word};

/// `p_2` for a scheduling channel drawn from `Uniform(-1.5, 1.5)`.
pub const P2: f64 = 0.75;
/// Input variance for `Uniform(-1.5, 1.5)`.
pub const INPUT_VARIANCE: f64 = 0.75;

pub fn system() -> LpvSsaModel {
    let a1 = DMatrix::from_row_slice(3, 3, &[0.4, 0.4, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    let a2 = DMatrix::from_row_slice(3, 3, &[0.0, 0.0, 0.0, 0.0, 0.4, 0.4, 0.0, 0.4, 0.4]);
    let b1 = DMatrix::from_column_slice(3, 1, &[1.0, 1.0, 1.0]);
    let b2 = DMatrix::from_column_slice(3, 1, &[1.0, 0.0, 1.0]);
    let k1 = DMatrix::from_column_slice(3, 1, &[-0.036, 0.0, 1.0]);
    let k2 = DMatrix::from_column_slice(3, 1, &[0.0, 0.015, 1.17]);
    let c = DMatrix::from_row_slice(1, 3, &[1.0, 0.0, 0.0]);
    let d = DMatrix::from_element(1, 1, 1.0);
    // Unit-variance noise: Q_sigma = E[v^2 mu_sigma^2] = p_sigma.
    let q = vec![
        DMatrix::from_element(1, 1, 1.0),
        DMatrix::from_element(1, 1, P2),
    ];
    LpvSsaModel::new(vec![a1, a2], vec![b1, b2], vec![k1, k2], q, c, d, weights())
        .expect("benchmark system is well formed")
}

pub fn weights() -> ScheduleWeights {
    ScheduleWeights::new(vec![1.0, P2]).expect("valid weights")
}

fn word(s: &str) -> Word {
    s.parse().expect("valid word")
}

fn rows() -> vec::Vec<RowIndex> {
    vec![
        RowIndex::new(word("e"), 1),
        RowIndex::new(word("1"), 1),
        RowIndex::new(word("21"), 1),
    ]
}

/// Rows `{(e,1), (1,1), (21,1)}`, columns `{(2,e,1), (1,2,1), (2,21,1)}`.
pub fn deterministic_selection() -> Selection {
    Selection::new(
        rows(),
        vec![
            ColumnIndex::new(2, word("e"), 1),
            ColumnIndex::new(1, word("2"), 1),
            ColumnIndex::new(2, word("21"), 1),
        ],
    )
    .expect("valid selection")
}

/// Rows `{(e,1), (1,1), (21,1)}`, columns `{(1,e,1), (1,2,1), (1,21,1)}`.
pub fn stochastic_selection() -> Selection {
    Selection::new(
        rows(),
        vec![
            ColumnIndex::new(1, word("e"), 1),
            ColumnIndex::new(1, word("2"), 1),
            ColumnIndex::new(1, word("21"), 1),
        ],
    )
    .expect("valid selection")
}

/// Both benchmark selections, 50 recursion steps, residual split and the known
/// `p_sigma` and input variance.
pub fn identify_config() -> IdentifyConfig {
    let mut config = IdentifyConfig::new(deterministic_selection(), stochastic_selection());
    config.weights = Some(weights());
    config.lambda_u = Some(DMatrix::from_element(1, 1, INPUT_VARIANCE));
    config
}
