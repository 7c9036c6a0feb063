//! Closed-form federated ridge classification on frozen features.
//!
//! Clients summarise their data as ridge sufficient statistics `(ZᵀZ, ZᵀY)`;
//! the server sums them and solves one regularised linear system. The crate
//! also carries the random-feature lift for a kernel variant, baseline
//! methods (nearest class mean, federated linear probing), a communication
//! and computation cost model, and a client-coverage simulator.

pub mod baselines;
pub mod cost;
pub mod coupon;
pub mod dataset;
pub mod error;
pub mod federation;
pub mod io;
pub mod linalg;
pub mod partition;
pub mod rff;
pub mod ridge;
pub mod seed;

pub use baselines::{fedncm_fit, run_lp, LpConfig, LpInit, LpRun};
pub use cost::{Algorithm, CostLedger, CostParams, CostSnapshot};
pub use coupon::{coupon_rounds, CoverageResult};
pub use dataset::{gen_gaussian_mixture, FeatureDataset, MixtureSpec};
pub use error::{Error, Result};
pub use federation::{
    run_fed3r, run_fed3r_with_replacement, Fed3rRun, FederationConfig, SamplingMode, TrainingTrace,
};
pub use io::{read_features, write_features};
pub use linalg::DenseMatrix;
pub use partition::{
    partition_dirichlet, partition_single_class, read_manifest, write_manifest, PartitionManifest,
};
pub use rff::{sample_rff, RffConfig, RffMap};
pub use ridge::{
    centralized_rr, compute_local_stats, merge_stats, solve_classifier, Classifier, RRStatistics,
    DEFAULT_LAMBDA,
};
