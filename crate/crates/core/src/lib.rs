//! Probability metrics on finite metric spaces and Monte Carlo experiments
//! on the (non-)robustness of Bayesian posteriors.
//!
//! The crate is layered bottom-up:
//!
//! - [`metric_space`]: finite metric spaces, balls and enlargements.
//! - [`measures`]: discrete probability measures, total variation, Hellinger, KL.
//! - [`prob_metrics`]: exact Prokhorov distance via max-flow couplings, its
//!   subset-enumeration oracle, the empirical Ky Fan metric and the Prokhorov
//!   metric on laws of posteriors.
//! - [`bayes_engine`]: categorical models on gridded parameter spaces, exact
//!   Bayes updates and seeded sampling of posterior laws.
//! - [`perturbation_lab`]: KL neighborhoods, prior contaminations, ball
//!   evacuations, covering and packing numbers.
//! - [`harness`]: JSON experiment configs, scenario runners, reports and the CLI.

pub mod bayes_engine;
pub mod error;
pub mod harness;
pub mod measures;
pub mod metric_space;
pub mod perturbation_lab;
pub mod prob_metrics;

pub use bayes_engine::{CategoricalModel, Dataset, RngSeed};
pub use error::{Error, Result};
pub use measures::DiscreteMeasure;
pub use metric_space::{FiniteMetricSpace, IndexSet};
pub use prob_metrics::{EmpiricalLaw, PairedDistanceSample};
