//! The two-mode, three-state benchmark system used throughout the tests,
//! the acceptance suite and the CLI examples.

use nalgebra::DMatrix;

use crate::model::SwitchedModel;
use crate::selection::Selection;

/// Two equiprobable modes, scalar input drawn from `U(-1, 1)` and scalar
/// Gaussian noise with standard deviation `sigma_v`.
pub fn two_mode_system(sigma_v: f64) -> SwitchedModel {
    let a1 = DMatrix::from_row_slice(
        3,
        3,
        &[
            0.1039, 0.0255, 0.5598, //
            0.4338, 0.0067, 0.0078, //
            0.3435, 0.0412, 0.0776,
        ],
    );
    let a2 = DMatrix::from_row_slice(
        3,
        3,
        &[
            0.1834, 0.2456, 0.0511, //
            0.0572, 0.2445, 0.0642, //
            0.1395, 0.6413, 0.5598,
        ],
    );
    let b1 = DMatrix::from_column_slice(3, 1, &[1.6143, 5.9383, 7.3671]);
    let b2 = DMatrix::from_column_slice(3, 1, &[6.0624, 4.9800, 3.1372]);
    let k1 = DMatrix::from_column_slice(3, 1, &[0.4942, 0.2827, 0.8098]);
    let k2 = DMatrix::from_column_slice(3, 1, &[0.6215, 0.1561, 0.7780]);
    let c = DMatrix::from_row_slice(1, 3, &[0.1144, 0.7623, 0.0020]);
    let p = vec![0.5, 0.5];
    let noise_var = sigma_v * sigma_v;
    SwitchedModel {
        a: vec![a1, a2],
        b: vec![b1, b2],
        k: vec![k1, k2],
        c,
        d: DMatrix::from_element(1, 1, 1.0),
        f: DMatrix::from_element(1, 1, 1.0),
        q_v: p
            .iter()
            .map(|ps| DMatrix::from_element(1, 1, ps * noise_var))
            .collect(),
        p,
        q_u: DMatrix::from_element(1, 1, 1.0 / 3.0),
    }
}

/// The three-dimensional selection used with the benchmark, for both the
/// joint Markov function and the deterministic part.
pub fn reference_selection() -> Selection {
    Selection::from_parts(
        &[("11", 1), ("1", 1), ("e", 1)],
        &[(2, "e", 1), (1, "2", 1), (1, "1", 1)],
    )
    .expect("static selection parses")
}
