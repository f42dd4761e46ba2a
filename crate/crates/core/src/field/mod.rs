//! Operators as polynomial matrix fields on a box chart.

pub mod io;
pub mod operator;
pub mod poly;

pub use io::{gauge_to_json, operator_to_json, parse_gauge, parse_operator};
pub use operator::{
    apply_affine_diffeo, apply_gauge, compose_operator, decompose_flat, poly, AffineDiffeo, Chart, GaugeTransform,
    OperatorSpec,
};
pub use poly::{Exponent, PolyMatrixField, PolyScalarField};
