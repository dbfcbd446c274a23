//! Sequential empirical, quantile, Bahadur–Kiefer and Vervaat processes of
//! long-range dependent Gaussian-subordinated sequences.
//!
//! The pipeline runs bottom-up:
//!
//! - [`lrd_gauss`] samples a stationary Gaussian driver `η_1..η_n` with
//!   covariance `k^{-D}L(k)`;
//! - [`hermite`] computes the Hermite rank of `G`, the coefficient
//!   functions `J_l` and their derivatives;
//! - [`seq_processes`] holds the sample `U_i = F(G(η_i))` and evaluates the
//!   sequential processes exactly on every prefix;
//! - [`bk_vervaat`] builds the Bahadur–Kiefer and Vervaat processes and the
//!   reduction field `J_τ(y) S_{[nt]}`;
//! - [`limit_processes`] simulates the limits;
//! - [`experiments`] ties everything into Monte Carlo runs.
//!
//! The numerical core is generic over [`Scalar`] (`f32` or `f64`). The
//! Monte Carlo harness works in `f64`, and the aliases below name the `f64`
//! instantiations.

pub mod bk_vervaat;
pub mod distributions;
pub mod error;
pub mod experiments;
pub mod hermite;
pub mod limit_processes;
pub mod lrd_gauss;
pub mod quadrature;
pub mod scalar;
pub mod seq_processes;
pub mod special;
pub mod table;

pub use error::{Error, Result};
pub use scalar::Scalar;
pub use seq_processes::{Side, TwoParamField};

pub type CovarianceSpec = lrd_gauss::CovarianceSpec<f64>;
pub type GaussianPath = lrd_gauss::GaussianPath<f64>;
pub type PathGenerator = lrd_gauss::PathGenerator<f64>;
pub type DistributionSpec = distributions::DistributionSpec<f64>;
pub type SubordinationSpec = hermite::SubordinationSpec<f64>;
pub type HermiteAnalysis = hermite::HermiteAnalysis<f64>;
pub type SampleBatch = seq_processes::SampleBatch<f64>;
pub type LevelSlice = seq_processes::LevelSlice<f64>;
pub type ReductionField = bk_vervaat::ReductionField<f64>;
pub type VervaatBundle = bk_vervaat::VervaatBundle<f64>;
pub type LimitPath = limit_processes::LimitPath<f64>;
pub type LimitConstants = limit_processes::LimitConstants<f64>;
pub type PiecewiseLinear = table::PiecewiseLinear<f64>;

pub use experiments::{ExperimentPlan, ExperimentReport, Metric, Model};
