pub mod bayesian;
pub mod error;
pub mod frequentist;
pub mod mechanisms;
pub mod rng;
pub mod simulation;
pub mod special;
pub mod types;
pub mod variates;

pub use error::{Error, Result};
pub use rng::{derive_stream, RandomSource};
pub use types::{EstimateReport, Method, PrivacyBudget, RawDataset, RawRecord, Scenario};
