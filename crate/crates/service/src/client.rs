//! Blocking HTTP client and the service-fed scenario runner.

use std::collections::BTreeMap;

use proxtrace_core::exposure::{CovidStatus, Notification, RegistrationForm, UserRecord};
use proxtrace_core::geo::UserId;
use proxtrace_core::lockdown::LockdownAssessment;
use proxtrace_core::simulator::{self, agent_registration, RunReport, Scenario, SimError};
use reqwest::blocking::{Client, Response};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::json;
use thiserror::Error;

use crate::http::{ClustersResponse, FixAck, FixBody, RegionSummary, ScanResponse, Stats};

/// Largest fix batch sent in one request.
const BATCH: usize = 500;

#[derive(Debug, Error)]
pub enum RemoteError {
    #[error("transport error after {ingested} fixes were ingested: {source}")]
    Transport {
        ingested: usize,
        #[source]
        source: reqwest::Error,
    },
    #[error("service answered {status}: {body}")]
    Status { status: u16, body: String },
    #[error("region {0} is not configured on the service")]
    RegionNotConfigured(String),
    #[error(transparent)]
    Scenario(#[from] SimError),
}

pub struct ServiceClient {
    base: String,
    http: Client,
    /// Fixes acknowledged so far, reported with transport errors.
    ingested: usize,
}

impl ServiceClient {
    pub fn new(base_url: &str) -> Self {
        Self {
            base: base_url.trim_end_matches('/').to_owned(),
            http: Client::new(),
            ingested: 0,
        }
    }

    fn url(&self, path: &str) -> String {
        format!("{}{}", self.base, path)
    }

    fn decode<T: DeserializeOwned>(&self, sent: reqwest::Result<Response>) -> Result<T, RemoteError> {
        let transport = |source| RemoteError::Transport {
            ingested: self.ingested,
            source,
        };
        let resp = sent.map_err(transport)?;
        let status = resp.status();
        if !status.is_success() {
            let body = resp.text().unwrap_or_default();
            return Err(RemoteError::Status {
                status: status.as_u16(),
                body,
            });
        }
        resp.json().map_err(transport)
    }

    fn get<T: DeserializeOwned>(&self, path: &str) -> Result<T, RemoteError> {
        self.decode(self.http.get(self.url(path)).send())
    }

    fn post<B: Serialize, T: DeserializeOwned>(&self, path: &str, body: &B) -> Result<T, RemoteError> {
        self.decode(self.http.post(self.url(path)).json(body).send())
    }

    pub fn register(&self, form: &RegistrationForm) -> Result<UserRecord, RemoteError> {
        self.post("/api/users", form)
    }

    pub fn update_status(&self, user: &UserId, status: CovidStatus) -> Result<UserRecord, RemoteError> {
        self.post(&format!("/api/users/{user}/status"), &json!({ "status": status }))
    }

    /// Sends fixes in order, in batches.
    pub fn post_fixes(&mut self, fixes: &[FixBody]) -> Result<Vec<FixAck>, RemoteError> {
        let mut acks = Vec::with_capacity(fixes.len());
        for chunk in fixes.chunks(BATCH) {
            let got: Vec<FixAck> = self.post("/api/fixes", &chunk)?;
            self.ingested += got.len();
            acks.extend(got);
        }
        Ok(acks)
    }

    pub fn ingested(&self) -> usize {
        self.ingested
    }

    pub fn notifications(&self, user: &UserId, after: Option<u64>) -> Result<Vec<Notification>, RemoteError> {
        let path = match after {
            Some(a) => format!("/api/users/{user}/notifications?after={a}"),
            None => format!("/api/users/{user}/notifications"),
        };
        self.get(&path)
    }

    pub fn regions(&self) -> Result<Vec<RegionSummary>, RemoteError> {
        self.get("/api/regions")
    }

    pub fn assessment(&self, region_id: &str, refresh: bool) -> Result<LockdownAssessment, RemoteError> {
        self.get(&format!("/api/regions/{region_id}/assessment?refresh={refresh}"))
    }

    pub fn clusters(&self, region_id: &str) -> Result<ClustersResponse, RemoteError> {
        self.get(&format!("/api/regions/{region_id}/clusters"))
    }

    pub fn bluetooth_scan(&self, scanner: Option<&UserId>, macs: &[&str]) -> Result<ScanResponse, RemoteError> {
        self.post("/api/bluetooth/scan", &json!({ "macs": macs, "scanner_id": scanner }))
    }

    pub fn stats(&self) -> Result<Stats, RemoteError> {
        self.get("/api/stats")
    }
}

/// Feeds a scenario through a running service: register the agents, upload the trace in
/// per-user order, force an assessment, then count every agent's notifications.
pub fn run_remote(scenario: &Scenario, base_url: &str) -> Result<RunReport, RemoteError> {
    let trace = simulator::generate_trace(scenario)?;
    let mut client = ServiceClient::new(base_url);
    let region_id = &scenario.region.region_id;
    if !client.regions()?.iter().any(|r| &r.region.region_id == region_id) {
        return Err(RemoteError::RegionNotConfigured(region_id.clone()));
    }

    let mut ids: BTreeMap<&str, UserId> = BTreeMap::new();
    for (i, agent) in scenario.agents.iter().enumerate() {
        let record = client.register(&agent_registration(i, agent))?;
        ids.insert(agent.user_id.as_str(), record.user_id);
    }
    let bodies: Vec<FixBody> = trace
        .iter()
        .map(|f| FixBody {
            user_id: ids[f.user_id.as_str()].clone(),
            lat: f.point.lat,
            lon: f.point.lon,
            wall_time: f.wall_time,
        })
        .collect();
    client.post_fixes(&bodies)?;
    let assessment = client.assessment(region_id, true)?;

    let mut notifications = BTreeMap::new();
    for id in ids.values() {
        for n in client.notifications(id, None)? {
            *notifications.entry(n.kind).or_insert(0) += 1;
        }
    }
    Ok(RunReport {
        scenario: scenario.name.clone(),
        seed: scenario.rng_seed,
        target: base_url.to_owned(),
        fixes_ingested: client.ingested(),
        aeo_total: assessment.aeo_total,
        verdict: assessment.verdict,
        notifications,
        assessment,
    })
}
