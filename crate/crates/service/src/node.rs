//! Durable platform: every change is appended to the event log before it is applied.

use std::sync::Arc;

use proxtrace_core::exposure::{BluetoothMatch, CovidStatus, Notification, RegistrationForm, UserRecord};
use proxtrace_core::geo::{GeoPoint, PositionFix, UserId};
use proxtrace_core::lockdown::LockdownAssessment;
use proxtrace_core::platform::{notifications_in, Change, Platform, PlatformError};

use crate::clock::Clock;
use crate::config::ServiceConfig;
use crate::eventlog::{EventLog, Recovery};
use crate::ServiceError;

pub struct Node {
    platform: Platform,
    log: EventLog,
    clock: Arc<dyn Clock>,
    recovery: Recovery,
}

impl Node {
    /// Opens the data directory and rebuilds state by replaying the log.
    pub fn open(config: &ServiceConfig, clock: Arc<dyn Clock>) -> Result<Self, ServiceError> {
        std::fs::create_dir_all(&config.data_dir).map_err(|e| {
            ServiceError::DataDir(format!("{}: {e}", config.data_dir.display()))
        })?;
        let mut platform = Platform::new(config.platform_config())?;
        let (log, entries, recovery) = EventLog::open(config.log_path(), config.sync_writes)?;
        for entry in &entries {
            let change = entry.change().map_err(|e| ServiceError::Replay {
                sequence: entry.sequence,
                reason: e.to_string(),
            })?;
            platform.apply(&change).map_err(|e| ServiceError::Replay {
                sequence: entry.sequence,
                reason: e.to_string(),
            })?;
        }
        Ok(Self {
            platform,
            log,
            clock,
            recovery,
        })
    }

    pub fn platform(&self) -> &Platform {
        &self.platform
    }

    pub fn recovery(&self) -> &Recovery {
        &self.recovery
    }

    pub fn log_sequence(&self) -> u64 {
        self.log.next_sequence() - 1
    }

    pub fn now(&self) -> i64 {
        self.clock.now()
    }

    fn persist(&mut self, changes: &[Change]) -> Result<(), ServiceError> {
        let now = self.clock.now();
        for change in changes {
            self.log.append(change, now)?;
            self.platform.apply(change)?;
        }
        Ok(())
    }

    pub fn register(&mut self, form: &RegistrationForm) -> Result<UserRecord, ServiceError> {
        let changes = self.platform.plan_register(form, self.clock.now())?;
        self.persist(&changes)?;
        match &changes[0] {
            Change::Registration(r) => Ok(r.clone()),
            _ => unreachable!(),
        }
    }

    pub fn ingest_fix(&mut self, user: &UserId, point: GeoPoint, wall_time: i64) -> Result<PositionFix, ServiceError> {
        let changes = self.platform.plan_fix(user, point, wall_time)?;
        self.persist(&changes)?;
        match &changes[0] {
            Change::Fix(f) => Ok(f.clone()),
            _ => unreachable!(),
        }
    }

    pub fn update_status(&mut self, user: &UserId, status: CovidStatus) -> Result<(UserRecord, Vec<Notification>), ServiceError> {
        let changes = self.platform.plan_status(user, status, self.clock.now())?;
        self.persist(&changes)?;
        Ok((self.platform.user(user)?.clone(), notifications_in(&changes)))
    }

    pub fn assess(&mut self, region_id: &str) -> Result<LockdownAssessment, ServiceError> {
        let changes = self.platform.plan_assessment(region_id)?;
        self.persist(&changes)?;
        match &changes[0] {
            Change::Assessment(a) => Ok(a.clone()),
            _ => unreachable!(),
        }
    }

    pub fn bluetooth_scan<S: AsRef<str>>(&mut self, scanner: Option<&UserId>, macs: &[S]) -> Result<BluetoothMatch, ServiceError> {
        let (found, changes) = self.platform.plan_bluetooth_scan(scanner, macs, self.clock.now())?;
        self.persist(&changes)?;
        Ok(found)
    }

    pub fn poll_notifications(&self, user: &UserId, after: Option<u64>) -> Result<Vec<Notification>, PlatformError> {
        self.platform.poll_notifications(user, after)
    }
}
