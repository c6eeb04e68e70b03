//! Generic-plane operator scans and explicit metric perturbations on
//! Riemannian 3-manifolds given in coordinates.

pub mod certify;
pub mod cli;
pub mod charts;
pub mod error;
pub mod grassmann;
pub mod jet;
pub mod linalg;
pub mod perturb;
pub mod pipeline;
pub mod tensor;

pub use charts::{metric_jet, ChartMetric, MetricJet3, Point3};
pub use error::{Error, Result};
