//! The contact-tracing server state as a deterministic state machine.
//!
//! Every operation is split into a read-only planning step that validates the request and
//! returns the [`Change`]s it implies, and [`Platform::apply`], which performs them. A
//! durable front end persists each change before applying it, and replaying the persisted
//! changes into a fresh platform rebuilds the same state.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exposure::{
    self, bluetooth_match, contact_query, BluetoothMatch, Contact, CovidStatus, ExposureError,
    Notification, NotificationKind, NotificationQueue, RegistrationForm, Registry, StatusChange,
    UserRecord,
};
use crate::geo::{FixStore, GeoError, GeoPoint, PositionFix, StoreError, UserId};
use crate::lockdown::{
    assess_region, clustering_positions, AssessParams, LockdownAssessment, LockdownError, Region,
    Verdict,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Thresholds {
    pub proximity_m: f64,
    pub aeo_threshold: u64,
    pub window_days: u32,
    pub tick_seconds: u32,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            proximity_m: 5.0,
            aeo_threshold: 10,
            window_days: 14,
            tick_seconds: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlatformConfig {
    pub regions: Vec<Region>,
    #[serde(default)]
    pub thresholds: Thresholds,
    /// Key for the pseudonymous user id sequence.
    #[serde(default)]
    pub id_salt: String,
    /// Assessments look at fixes no older than this, measured back from the region's latest fix.
    #[serde(default = "default_assessment_window")]
    pub assessment_window_secs: i64,
}

fn default_assessment_window() -> i64 {
    24 * 3600
}

impl Default for PlatformConfig {
    fn default() -> Self {
        Self {
            regions: Vec::new(),
            thresholds: Thresholds::default(),
            id_salt: String::new(),
            assessment_window_secs: default_assessment_window(),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlatformError {
    #[error("unknown user {0}")]
    UnknownUser(UserId),
    #[error("unknown region {0}")]
    UnknownRegion(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Registration(#[from] ExposureError),
    #[error(transparent)]
    Fix(#[from] StoreError),
    #[error(transparent)]
    Geo(#[from] GeoError),
    #[error(transparent)]
    Lockdown(#[from] LockdownError),
    #[error("change cannot be applied: {0}")]
    Apply(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ChangeKind {
    Registration,
    Fix,
    Status,
    Assessment,
    Notification,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatusUpdate {
    pub user_id: UserId,
    pub status: CovidStatus,
    pub at: i64,
}

/// One state mutation.
#[derive(Debug, Clone, PartialEq)]
pub enum Change {
    Registration(UserRecord),
    Fix(PositionFix),
    Status(StatusUpdate),
    Assessment(LockdownAssessment),
    Notification(Notification),
}

impl Change {
    pub fn kind(&self) -> ChangeKind {
        match self {
            Change::Registration(_) => ChangeKind::Registration,
            Change::Fix(_) => ChangeKind::Fix,
            Change::Status(_) => ChangeKind::Status,
            Change::Assessment(_) => ChangeKind::Assessment,
            Change::Notification(_) => ChangeKind::Notification,
        }
    }

    pub fn payload(&self) -> serde_json::Value {
        let v = match self {
            Change::Registration(r) => serde_json::to_value(r),
            Change::Fix(f) => serde_json::to_value(f),
            Change::Status(s) => serde_json::to_value(s),
            Change::Assessment(a) => serde_json::to_value(a),
            Change::Notification(n) => serde_json::to_value(n),
        };
        v.expect("change payloads always serialize")
    }

    pub fn from_parts(kind: ChangeKind, payload: serde_json::Value) -> Result<Self, serde_json::Error> {
        Ok(match kind {
            ChangeKind::Registration => Change::Registration(serde_json::from_value(payload)?),
            ChangeKind::Fix => Change::Fix(serde_json::from_value(payload)?),
            ChangeKind::Status => Change::Status(serde_json::from_value(payload)?),
            ChangeKind::Assessment => Change::Assessment(serde_json::from_value(payload)?),
            ChangeKind::Notification => Change::Notification(serde_json::from_value(payload)?),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Platform {
    config: PlatformConfig,
    regions: BTreeMap<String, Region>,
    registry: Registry,
    fixes: FixStore,
    notifications: NotificationQueue,
    assessments: BTreeMap<String, LockdownAssessment>,
}

impl Platform {
    pub fn new(config: PlatformConfig) -> Result<Self, PlatformError> {
        let t = &config.thresholds;
        if !(t.proximity_m > 0.0) {
            return Err(PlatformError::Config("proximity_m must be positive".into()));
        }
        if t.tick_seconds == 0 {
            return Err(PlatformError::Config("tick_seconds must be positive".into()));
        }
        let mut regions = BTreeMap::new();
        for r in &config.regions {
            r.validate()?;
            if regions.insert(r.region_id.clone(), r.clone()).is_some() {
                return Err(PlatformError::Config(format!("duplicate region {}", r.region_id)));
            }
        }
        Ok(Self {
            registry: Registry::new(config.id_salt.clone()),
            config,
            regions,
            fixes: FixStore::new(),
            notifications: NotificationQueue::new(),
            assessments: BTreeMap::new(),
        })
    }

    pub fn config(&self) -> &PlatformConfig {
        &self.config
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    pub fn fixes(&self) -> &FixStore {
        &self.fixes
    }

    pub fn notifications(&self) -> &NotificationQueue {
        &self.notifications
    }

    pub fn regions(&self) -> impl Iterator<Item = &Region> {
        self.regions.values()
    }

    pub fn region(&self, region_id: &str) -> Result<&Region, PlatformError> {
        self.regions
            .get(region_id)
            .ok_or_else(|| PlatformError::UnknownRegion(region_id.to_owned()))
    }

    pub fn user(&self, id: &UserId) -> Result<&UserRecord, PlatformError> {
        self.registry
            .get(id)
            .ok_or_else(|| PlatformError::UnknownUser(id.clone()))
    }

    /// Most recent stored assessment of a configured region.
    pub fn latest_assessment(&self, region_id: &str) -> Result<Option<&LockdownAssessment>, PlatformError> {
        self.region(region_id)?;
        Ok(self.assessments.get(region_id))
    }

    pub fn poll_notifications(&self, user: &UserId, after: Option<u64>) -> Result<Vec<Notification>, PlatformError> {
        self.user(user)?;
        Ok(self.notifications.poll(user, after))
    }

    pub fn tick_for(&self, wall_time: i64) -> Result<u64, PlatformError> {
        let tick = wall_time.div_euclid(i64::from(self.config.thresholds.tick_seconds));
        u64::try_from(tick).map_err(|_| PlatformError::Apply(format!("wall time {wall_time} precedes the epoch")))
    }

    pub fn plan_register(&self, form: &RegistrationForm, now: i64) -> Result<Vec<Change>, PlatformError> {
        Ok(vec![Change::Registration(self.registry.prepare(form, now)?)])
    }

    pub fn plan_fix(&self, user_id: &UserId, point: GeoPoint, wall_time: i64) -> Result<Vec<Change>, PlatformError> {
        self.user(user_id)?;
        let point = GeoPoint::new(point.lat, point.lon)?;
        let fix = PositionFix {
            user_id: user_id.clone(),
            point,
            tick: self.tick_for(wall_time)?,
            wall_time,
        };
        self.fixes.check(&fix)?;
        Ok(vec![Change::Fix(fix)])
    }

    /// A status report. Re-reporting the current status changes nothing; a flip to POSITIVE
    /// also notifies every contact in the lookback window.
    pub fn plan_status(&self, user_id: &UserId, status: CovidStatus, now: i64) -> Result<Vec<Change>, PlatformError> {
        let user = self.user(user_id)?;
        if user.status == status {
            return Ok(Vec::new());
        }
        let mut changes = vec![Change::Status(StatusUpdate {
            user_id: user_id.clone(),
            status,
            at: now,
        })];
        if status == CovidStatus::Positive {
            let contacts = self.contacts(user_id, now)?;
            let source = exposure::status_source_event(user_id, user.status_history.len());
            let batch = self.notifications.prepare(
                NotificationKind::ContactWithPositive,
                &source,
                contacts.iter().map(|c| &c.user_id),
                now,
            );
            changes.extend(batch.into_iter().map(Change::Notification));
        }
        Ok(changes)
    }

    pub fn contacts(&self, user_id: &UserId, as_of: i64) -> Result<Vec<Contact>, PlatformError> {
        self.user(user_id)?;
        let t = &self.config.thresholds;
        Ok(contact_query(&self.fixes, user_id, as_of, t.window_days, t.proximity_m)?)
    }

    /// Fixes the region's assessment covers: inside its box and within the assessment
    /// window of the region's latest fix.
    pub fn region_fixes(&self, region_id: &str) -> Result<Vec<PositionFix>, PlatformError> {
        let region = self.region(region_id)?;
        let inside: Vec<&PositionFix> = self.fixes.iter().filter(|f| region.contains(&f.point)).collect();
        let Some(latest) = inside.iter().map(|f| f.wall_time).max() else {
            return Ok(Vec::new());
        };
        let from = latest - self.config.assessment_window_secs;
        Ok(inside.into_iter().filter(|f| f.wall_time >= from).cloned().collect())
    }

    /// Assesses a region; under LOCKDOWN, users whose latest fix lies within twice a
    /// cluster's RMS radius of its centroid get an area alert.
    pub fn plan_assessment(&self, region_id: &str) -> Result<Vec<Change>, PlatformError> {
        let region = self.region(region_id)?;
        let fixes = self.region_fixes(region_id)?;
        let t = &self.config.thresholds;
        let params = AssessParams {
            proximity_m: t.proximity_m,
            aeo_threshold: t.aeo_threshold,
        };
        let assessment = assess_region(region, &fixes, &params, region.seed)?;

        let mut alerted = Vec::new();
        if assessment.verdict == Verdict::Lockdown {
            let positions = clustering_positions(&fixes);
            let model = &assessment.clusters;
            let radii: Vec<f64> = (0..model.k).map(|j| model.rms_radius(&positions, j)).collect();
            for user in self.fixes.users() {
                let Some(latest) = self.fixes.latest(user) else { continue };
                if !region.contains(&latest.point) {
                    continue;
                }
                let inside = (0..model.k).any(|j| model.distance_to_centroid(&latest.point, j) <= 2.0 * radii[j]);
                if inside {
                    alerted.push(user.clone());
                }
            }
        }
        let source = exposure::source_event(&["area", region_id, &assessment.assessed_at.to_string()]);
        let batch = self
            .notifications
            .prepare(NotificationKind::NearInfectedArea, &source, &alerted, assessment.assessed_at);

        let mut changes = vec![Change::Assessment(assessment)];
        changes.extend(batch.into_iter().map(Change::Notification));
        Ok(changes)
    }

    /// Matches a Bluetooth scan; a registered scanner is alerted once per matched owner per day.
    pub fn plan_bluetooth_scan<S: AsRef<str>>(
        &self,
        scanner: Option<&UserId>,
        macs: &[S],
        now: i64,
    ) -> Result<(BluetoothMatch, Vec<Change>), PlatformError> {
        let found = bluetooth_match(macs, &self.registry);
        let mut changes = Vec::new();
        if let Some(scanner) = scanner {
            self.user(scanner)?;
            let day = now.div_euclid(exposure::SECONDS_PER_DAY).to_string();
            let mut pending = self.notifications.clone();
            for (owner, _) in &found.matches {
                if owner == scanner {
                    continue;
                }
                let source = exposure::source_event(&["bt", scanner.as_str(), owner.as_str(), &day]);
                for n in pending.prepare(NotificationKind::BtProximity, &source, [scanner], now) {
                    pending.push(n.clone());
                    changes.push(Change::Notification(n));
                }
            }
        }
        Ok((found, changes))
    }

    pub fn apply(&mut self, change: &Change) -> Result<(), PlatformError> {
        match change {
            Change::Registration(record) => self.registry.insert(record.clone())?,
            Change::Fix(fix) => {
                self.user(&fix.user_id)?;
                self.fixes.insert(fix.clone())?
            }
            Change::Status(s) => {
                self.registry.set_status(
                    &s.user_id,
                    StatusChange {
                        status: s.status,
                        at: s.at,
                    },
                )?;
            }
            Change::Assessment(a) => {
                self.region(&a.region_id)?;
                self.assessments.insert(a.region_id.clone(), a.clone());
            }
            Change::Notification(n) => {
                if !self.notifications.push(n.clone()) {
                    return Err(PlatformError::Apply(format!(
                        "notification {} out of sequence or duplicate",
                        n.notification_id
                    )));
                }
            }
        }
        Ok(())
    }

    /// Applies planned changes in order.
    pub fn commit(&mut self, changes: &[Change]) -> Result<(), PlatformError> {
        changes.iter().try_for_each(|c| self.apply(c))
    }

    pub fn register(&mut self, form: &RegistrationForm, now: i64) -> Result<UserRecord, PlatformError> {
        let changes = self.plan_register(form, now)?;
        self.commit(&changes)?;
        match &changes[0] {
            Change::Registration(r) => Ok(r.clone()),
            _ => unreachable!("registration plan starts with the record"),
        }
    }

    pub fn ingest_fix(&mut self, user_id: &UserId, point: GeoPoint, wall_time: i64) -> Result<PositionFix, PlatformError> {
        let changes = self.plan_fix(user_id, point, wall_time)?;
        self.commit(&changes)?;
        match &changes[0] {
            Change::Fix(f) => Ok(f.clone()),
            _ => unreachable!("fix plan starts with the fix"),
        }
    }

    /// Returns the updated record and the notifications enqueued by the update.
    pub fn update_status(
        &mut self,
        user_id: &UserId,
        status: CovidStatus,
        now: i64,
    ) -> Result<(UserRecord, Vec<Notification>), PlatformError> {
        let changes = self.plan_status(user_id, status, now)?;
        self.commit(&changes)?;
        Ok((self.user(user_id)?.clone(), notifications_in(&changes)))
    }

    pub fn assess(&mut self, region_id: &str) -> Result<LockdownAssessment, PlatformError> {
        let changes = self.plan_assessment(region_id)?;
        self.commit(&changes)?;
        match &changes[0] {
            Change::Assessment(a) => Ok(a.clone()),
            _ => unreachable!("assessment plan starts with the assessment"),
        }
    }
}

pub fn notifications_in(changes: &[Change]) -> Vec<Notification> {
    changes
        .iter()
        .filter_map(|c| match c {
            Change::Notification(n) => Some(n.clone()),
            _ => None,
        })
        .collect()
}
