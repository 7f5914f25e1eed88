//! Configuration loading, campaign execution and result files for the
//! coexistence simulator in `coexsim-core`.
//!
//! A campaign is the cross product of lambdas, seeds and steps. Each run is
//! single-threaded and shares nothing with the others, so runs are spread
//! over a thread pool without affecting any output byte.

pub mod campaign;
pub mod config;
pub mod output;

pub use campaign::{run_campaign, CampaignReport, RunOutcome};
pub use config::{load_config, parse_config, parse_override, CampaignConfig, LoadError, RunKey};
