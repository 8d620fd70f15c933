//! Contact tracing and lockdown decision support from smartphone position telemetry.
//!
//! - [`geo`]: great-circle distance and approach-episode detection
//! - [`clustering`]: K-means over tracked positions
//! - [`lockdown`]: approach totals per cluster and the lockdown verdict
//! - [`exposure`]: registration, contact lookback, Bluetooth matching, notifications
//! - [`platform`]: the server state machine tying these together
//! - [`simulator`]: synthetic agents and scenario runs

pub mod clustering;
pub mod exposure;
pub mod geo;
pub mod lockdown;
pub mod platform;
pub mod simulator;

pub use clustering::{kmeans, seed_centroids, ClusterModel, KMeansParams};
pub use geo::{detect_approach_events, haversine_distance, ApproachEvent, GeoPoint, PositionFix, UserId};
pub use lockdown::{assess_region, rank_regions, LockdownAssessment, Region, Verdict};
pub use platform::{Change, ChangeKind, Platform, PlatformConfig, PlatformError};
pub use simulator::{generate_trace, run_in_process, RunReport, Scenario};
