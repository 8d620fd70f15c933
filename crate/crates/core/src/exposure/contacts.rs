use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{CovidStatus, MacAddress, Registry};
use crate::geo::{detect_approach_events, ApproachEvent, FixStore, GeoError, UserId};

pub const SECONDS_PER_DAY: i64 = 86_400;
pub const DEFAULT_WINDOW_DAYS: u32 = 14;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contact {
    pub user_id: UserId,
    pub event: ApproachEvent,
}

/// Users who shared an approach episode with `index_user` overlapping the window
/// `[as_of - window_days, as_of]` (both ends inclusive). Each contact is reported once, with
/// their most recent qualifying episode; the list is ordered by user id.
pub fn contact_query(
    store: &FixStore,
    index_user: &UserId,
    as_of: i64,
    window_days: u32,
    threshold_m: f64,
) -> Result<Vec<Contact>, GeoError> {
    let window_start = as_of - i64::from(window_days) * SECONDS_PER_DAY;
    let fixes = store.co_located(index_user);
    let events = detect_approach_events(&fixes, threshold_m)?;

    let mut latest: BTreeMap<UserId, ApproachEvent> = BTreeMap::new();
    for ev in events {
        if ev.start_wall_time > as_of || ev.end_wall_time < window_start {
            continue;
        }
        let Some(other) = ev.pair.other(index_user).cloned() else {
            continue;
        };
        match latest.get(&other) {
            Some(prev) if prev.start_tick >= ev.start_tick => {}
            _ => {
                latest.insert(other, ev);
            }
        }
    }
    Ok(latest
        .into_iter()
        .map(|(user_id, event)| Contact { user_id, event })
        .collect())
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BluetoothMatch {
    pub matches: Vec<(UserId, CovidStatus)>,
    /// Scan entries that were not valid MAC addresses.
    pub malformed: usize,
}

/// Matches scanned MACs against the registry, keeping owners who are positive or recovered.
/// Each owner is reported once, in scan order.
pub fn bluetooth_match<S: AsRef<str>>(scanned: &[S], registry: &Registry) -> BluetoothMatch {
    let mut out = BluetoothMatch::default();
    for raw in scanned {
        let Ok(mac) = raw.as_ref().parse::<MacAddress>() else {
            out.malformed += 1;
            continue;
        };
        let Some(owner) = registry.owner_of(&mac) else {
            continue;
        };
        if matches!(owner.status, CovidStatus::Positive | CovidStatus::Recovered)
            && !out.matches.iter().any(|(id, _)| id == &owner.user_id)
        {
            out.matches.push((owner.user_id.clone(), owner.status));
        }
    }
    out
}
