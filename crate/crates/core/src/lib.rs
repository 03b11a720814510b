//! Honest subsampled random forests for heterogeneous treatment-effect
//! estimation.
//!
//! The crate grows forests of honest trees in three flavours (double-sample
//! regression, double-sample causal, and propensity trees), plus a deliberately
//! adaptive causal variant used for comparison. Every forest keeps the
//! subsample membership of each of its trees, which is what the
//! infinitesimal-jackknife variance estimate in [`inference`] is built from.
//!
//! ```no_run
//! use grove::{Dataset, ForestConfig, ForestMode, Forest};
//!
//! let data = Dataset::load("train.csv", true)?;
//! let cfg = ForestConfig::new(ForestMode::CausalDoubleSample, data.n())
//!     .with_subsample_size(data.n() / 2);
//! let forest = Forest::train(&data, &cfg)?;
//! let result = forest.predict_with_ci(&[vec![0.5; data.d()]], 0.95)?;
//! println!("{:?}", result[0]);
//! # Ok::<(), grove::GroveError>(())
//! ```

pub mod baselines;
pub mod config;
pub mod dataset;
pub mod error;
pub mod exec;
pub mod forest;
pub mod harness;
pub mod inference;
pub mod sampling;
pub mod simgen;
pub mod tree;

pub use config::{beta_min, validate_config, ForestConfig, ForestMode};
pub use dataset::{load_dataset, Dataset, Sample};
pub use error::{GroveError, Result};
pub use exec::Exec;
pub use forest::Forest;
pub use inference::{PredictionResult, VarianceKind};
pub use sampling::{derive_stream, RandomStream, SubsampleRecord};
pub use tree::{LeafStats, Node, Tree};
