use std::collections::BTreeMap;
use std::fmt;
use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{GeoError, GeoPoint};

/// Pseudonymous user identifier. The only user reference that circulates in position data.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UserId(pub String);

impl UserId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for UserId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for UserId {
    fn from(s: &str) -> Self {
        Self(s.to_owned())
    }
}

/// One time-stamped position sample on the shared tick grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "FixRecord", try_from = "FixRecord")]
pub struct PositionFix {
    pub user_id: UserId,
    pub point: GeoPoint,
    pub tick: u64,
    pub wall_time: i64,
}

/// Flat wire layout of a fix, one per trace line.
#[derive(Serialize, Deserialize)]
struct FixRecord {
    user_id: UserId,
    lat: f64,
    lon: f64,
    tick: u64,
    wall_time: i64,
}

impl From<PositionFix> for FixRecord {
    fn from(f: PositionFix) -> Self {
        FixRecord {
            user_id: f.user_id,
            lat: f.point.lat,
            lon: f.point.lon,
            tick: f.tick,
            wall_time: f.wall_time,
        }
    }
}

impl TryFrom<FixRecord> for PositionFix {
    type Error = GeoError;

    fn try_from(r: FixRecord) -> Result<Self, Self::Error> {
        Ok(PositionFix {
            user_id: r.user_id,
            point: GeoPoint::new(r.lat, r.lon)?,
            tick: r.tick,
            wall_time: r.wall_time,
        })
    }
}

impl PositionFix {
    pub fn new(user_id: impl Into<String>, point: GeoPoint, tick: u64, wall_time: i64) -> Self {
        Self {
            user_id: UserId(user_id.into()),
            point,
            tick,
            wall_time,
        }
    }
}

/// Reads a JSON Lines trace. Blank lines are skipped.
pub fn read_trace<R: BufRead>(reader: R) -> io::Result<Vec<PositionFix>> {
    let mut fixes = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fix = serde_json::from_str(&line).map_err(|e| {
            io::Error::new(
                io::ErrorKind::InvalidData,
                format!("trace line {}: {e}", lineno + 1),
            )
        })?;
        fixes.push(fix);
    }
    Ok(fixes)
}

pub fn write_trace<W: Write>(mut writer: W, fixes: &[PositionFix]) -> io::Result<()> {
    for fix in fixes {
        serde_json::to_writer(&mut writer, fix)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StoreError {
    #[error("user {user} already has a fix at tick {tick}")]
    DuplicateTick { user: UserId, tick: u64 },
    #[error("fix for user {user} at tick {tick} (wall time {wall_time}) precedes the latest stored fix")]
    OutOfOrder {
        user: UserId,
        tick: u64,
        wall_time: i64,
    },
}

/// Position history indexed by user and by tick.
///
/// Enforces one fix per (user, tick) and non-decreasing wall time per user.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FixStore {
    by_user: BTreeMap<UserId, BTreeMap<u64, PositionFix>>,
    by_tick: BTreeMap<u64, BTreeMap<UserId, PositionFix>>,
    len: usize,
}

impl FixStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Checks whether `fix` could be inserted without modifying the store.
    pub fn check(&self, fix: &PositionFix) -> Result<(), StoreError> {
        let Some(history) = self.by_user.get(&fix.user_id) else {
            return Ok(());
        };
        if history.contains_key(&fix.tick) {
            return Err(StoreError::DuplicateTick {
                user: fix.user_id.clone(),
                tick: fix.tick,
            });
        }
        if let Some((&last_tick, last)) = history.last_key_value() {
            if fix.tick < last_tick || fix.wall_time < last.wall_time {
                return Err(StoreError::OutOfOrder {
                    user: fix.user_id.clone(),
                    tick: fix.tick,
                    wall_time: fix.wall_time,
                });
            }
        }
        Ok(())
    }

    pub fn insert(&mut self, fix: PositionFix) -> Result<(), StoreError> {
        self.check(&fix)?;
        self.by_tick
            .entry(fix.tick)
            .or_default()
            .insert(fix.user_id.clone(), fix.clone());
        self.by_user
            .entry(fix.user_id.clone())
            .or_default()
            .insert(fix.tick, fix);
        self.len += 1;
        Ok(())
    }

    /// All fixes ordered by (tick, user).
    pub fn iter(&self) -> impl Iterator<Item = &PositionFix> {
        self.by_tick.values().flat_map(|m| m.values())
    }

    pub fn user_fixes(&self, user: &UserId) -> impl Iterator<Item = &PositionFix> {
        self.by_user.get(user).into_iter().flat_map(|m| m.values())
    }

    pub fn latest(&self, user: &UserId) -> Option<&PositionFix> {
        self.by_user.get(user)?.last_key_value().map(|(_, f)| f)
    }

    pub fn users(&self) -> impl Iterator<Item = &UserId> {
        self.by_user.keys()
    }

    /// The user's own fixes together with every other user's fix at the same ticks.
    pub fn co_located(&self, user: &UserId) -> Vec<PositionFix> {
        let Some(history) = self.by_user.get(user) else {
            return Vec::new();
        };
        history
            .keys()
            .filter_map(|tick| self.by_tick.get(tick))
            .flat_map(|m| m.values().cloned())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fix(user: &str, tick: u64, wall: i64) -> PositionFix {
        PositionFix::new(user, GeoPoint::new(39.0, -105.0).unwrap(), tick, wall)
    }

    #[test]
    fn trace_line_layout() {
        let line = serde_json::to_string(&fix("a", 3, 15)).unwrap();
        assert_eq!(
            line,
            r#"{"user_id":"a","lat":39.0,"lon":-105.0,"tick":3,"wall_time":15}"#
        );
        let back: PositionFix = serde_json::from_str(&line).unwrap();
        assert_eq!(back, fix("a", 3, 15));
    }

    #[test]
    fn read_trace_reports_bad_line() {
        let text = "{\"user_id\":\"a\",\"lat\":1,\"lon\":2,\"tick\":0,\"wall_time\":0}\n\nnot json\n";
        let err = read_trace(text.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
    }

    #[test]
    fn store_rejects_duplicates_and_reordering() {
        let mut store = FixStore::new();
        store.insert(fix("a", 1, 5)).unwrap();
        assert!(matches!(
            store.insert(fix("a", 1, 6)),
            Err(StoreError::DuplicateTick { .. })
        ));
        assert!(matches!(
            store.insert(fix("a", 0, 0)),
            Err(StoreError::OutOfOrder { .. })
        ));
        assert!(matches!(
            store.insert(fix("a", 2, 4)),
            Err(StoreError::OutOfOrder { .. })
        ));
        store.insert(fix("b", 0, 0)).unwrap();
        assert_eq!(store.len(), 2);
        assert_eq!(store.latest(&"a".into()).unwrap().tick, 1);
    }

    #[test]
    fn co_located_collects_shared_ticks() {
        let mut store = FixStore::new();
        store.insert(fix("a", 1, 5)).unwrap();
        store.insert(fix("b", 1, 5)).unwrap();
        store.insert(fix("b", 2, 10)).unwrap();
        store.insert(fix("c", 3, 15)).unwrap();
        let near = store.co_located(&"a".into());
        assert_eq!(near.len(), 2);
        assert!(store.co_located(&"zz".into()).is_empty());
    }
}
