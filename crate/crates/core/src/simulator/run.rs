use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{generate_trace, AgentSpec, Scenario, SimError};
use crate::exposure::{Gender, NotificationKind, RegistrationForm};
use crate::geo::UserId;
use crate::lockdown::{LockdownAssessment, Verdict};
use crate::platform::{Platform, PlatformConfig, Thresholds};

/// Outcome of feeding a scenario through ingestion and assessment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario: String,
    pub seed: u64,
    pub target: String,
    pub fixes_ingested: usize,
    pub aeo_total: u64,
    pub verdict: Verdict,
    pub notifications: BTreeMap<NotificationKind, usize>,
    pub assessment: LockdownAssessment,
}

/// Synthetic registration for the `index`-th agent, with a locally administered MAC.
pub fn agent_registration(index: usize, agent: &AgentSpec) -> RegistrationForm {
    let b = (index as u32).to_be_bytes();
    RegistrationForm {
        name: format!("Simulated {}", agent.user_id),
        phone: format!("+1-555-{:07}", index),
        postcode: "00000".into(),
        age: 30,
        gender: Gender::Unspecified,
        bt_mac: format!("02:5A:{:02X}:{:02X}:{:02X}:{:02X}", b[0], b[1], b[2], b[3]),
        status: agent.status,
    }
}

/// Runs a scenario against an in-memory platform: register agents, ingest the trace,
/// assess the scenario's region.
pub fn run_in_process(scenario: &Scenario) -> Result<RunReport, SimError> {
    let trace = generate_trace(scenario)?;
    let mut platform = Platform::new(PlatformConfig {
        regions: vec![scenario.region.clone()],
        thresholds: Thresholds {
            tick_seconds: scenario.tick_seconds,
            ..Thresholds::default()
        },
        ..PlatformConfig::default()
    })?;

    let mut ids: BTreeMap<&str, UserId> = BTreeMap::new();
    for (i, agent) in scenario.agents.iter().enumerate() {
        let record = platform.register(&agent_registration(i, agent), scenario.start_time)?;
        ids.insert(agent.user_id.as_str(), record.user_id);
    }
    for fix in &trace {
        platform.ingest_fix(&ids[fix.user_id.as_str()], fix.point, fix.wall_time)?;
    }
    let assessment = platform.assess(&scenario.region.region_id)?;

    let mut notifications = BTreeMap::new();
    for n in platform.notifications().iter() {
        *notifications.entry(n.kind).or_insert(0) += 1;
    }
    Ok(RunReport {
        scenario: scenario.name.clone(),
        seed: scenario.rng_seed,
        target: "in-process".into(),
        fixes_ingested: trace.len(),
        aeo_total: assessment.aeo_total,
        verdict: assessment.verdict,
        notifications,
        assessment,
    })
}
