//! Detection of sensitive features in tabular binary-classification data.
//!
//! Each feature is scored by the normalized kernel dependence (NOCCO) between
//! its one-hot columns and the label. Candidates scoring at or above the
//! median are reported as sensitive, and a cross-validated random forest can
//! check that they are the ones driving group-fairness disparities.

pub mod data;
pub mod dependence;
pub mod detector;
pub mod fairness;
pub mod forest;
pub mod error;
pub mod kernels;
pub mod linalg;
pub mod scalar;
pub mod seed;
pub mod stats;
pub mod synth;
pub mod validation;

pub use data::{encode, load_dataset, load_dataset_path, Dataset, EncodedDataset, Schema};
pub use dependence::{hsic, nocco, DependenceConfig};
pub use detector::{audit, DependenceReport, DetectorConfig, Threshold};
pub use error::{DataError, DetectError, NumericError, ValidationError};
pub use kernels::KernelKind;

/// Double-precision Gram matrix.
pub type Gram = kernels::GramMatrix<f64>;
/// Double-precision regularized operator.
pub type Operator = dependence::RegularizedOperator<f64>;
/// Double-precision label operator used for scoring many columns.
pub type LabelOp = dependence::LabelOperator<f64>;
pub type Mat = linalg::Matrix<f64>;
