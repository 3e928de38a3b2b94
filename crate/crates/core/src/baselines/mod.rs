//! Comparison detectors: a single pooled VAR, a semi-Markov model of the
//! switches alone, and MKAD (SAX + LCS kernels fed to a one-class SVM).

pub mod lcs;
pub mod mkad;
pub mod ocsvm;
pub mod sax;
pub mod smm;
pub mod var;

pub use lcs::{lcs_kernel, lcs_length};
pub use mkad::{mkad_kernel, mkad_score, mkad_score_kernel, KernelMatrix, MkadConfig, MkadOutput};
pub use ocsvm::OneClassSvm;
pub use sax::{sax_transform, SaxConfig};
pub use smm::smm_score;
pub use var::{var_baseline_fit, var_baseline_score};
