//! Factor analysis of feature representations.
//!
//! Features sampled on a Cartesian grid of scene factors are split into
//! per-factor marginal components plus an interaction residual, with relative
//! variances, intrinsic dimensionalities, PCA embeddings and dot-product
//! retrieval built on top.
//!
//! The pipeline is `stimuli` → `extract` → [`FeatureSet`] (stored as `.fset`)
//! → `decompose` / `embed` / `retrieve`.

pub mod decompose;
pub mod embed;
pub mod error;
pub mod extract;
pub mod grid;
pub mod linalg;
pub mod retrieve;
pub mod stimuli;
pub mod store;

pub use decompose::{
    analyze, center, decompose, marginal, variance_report, CenteredFeatures, Decomposition,
    VarianceReport,
};
pub use embed::{fit_pca, intrinsic_dim, Embedding, PcaModel};
pub use error::{Error, Result};
pub use grid::{Factor, FactorGrid, Level};
pub use linalg::Matrix;
pub use retrieve::{build_index, eval_orientation, Match, RetrievalIndex, ViewMeta};
pub use store::{FeatureSet, Manifest};

/// Crate version recorded in reports and manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
