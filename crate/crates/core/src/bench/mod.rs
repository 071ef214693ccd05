//! Trial protocol, campaigns and benchmark statistics.

pub mod campaign;
pub mod config;
pub mod record;
pub mod stats;
pub mod trial;

pub use campaign::{
    decimate, run_ablation, run_campaign, summarize, Ablation, AblationReport, Campaign, CampaignOptions,
    CampaignSummary, SuccessRate, TraceRow, TrialSummary,
};
pub use config::{
    MissionScript, Perturbation, Preset, ProcedureParams, Stage, StartPads, TrialConfig, VehicleGains,
};
pub use record::{consistency_metrics, Outcome, TickRow, TrialRecord};
pub use stats::{sign_test_p, success_rate_ci, TimeStats};
pub use trial::{rng_stream, run_trial, GuardFilter, GuardValues};
