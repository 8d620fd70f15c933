use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::{haversine_distance, GeoError, GeoPoint, PositionFix, UserId};

/// Unordered pair of distinct users, stored with the smaller id first.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct UserPair(UserId, UserId);

impl UserPair {
    /// Returns `None` when both ids are equal.
    pub fn new(a: UserId, b: UserId) -> Option<Self> {
        match a.cmp(&b) {
            std::cmp::Ordering::Less => Some(Self(a, b)),
            std::cmp::Ordering::Greater => Some(Self(b, a)),
            std::cmp::Ordering::Equal => None,
        }
    }

    pub fn first(&self) -> &UserId {
        &self.0
    }

    pub fn second(&self) -> &UserId {
        &self.1
    }

    pub fn contains(&self, user: &UserId) -> bool {
        &self.0 == user || &self.1 == user
    }

    /// The member that is not `user`, if `user` is a member.
    pub fn other(&self, user: &UserId) -> Option<&UserId> {
        if &self.0 == user {
            Some(&self.1)
        } else if &self.1 == user {
            Some(&self.0)
        } else {
            None
        }
    }
}

/// One maximal run of consecutive ticks during which a pair stayed closer than the threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApproachEvent {
    pub pair: UserPair,
    pub start_tick: u64,
    pub end_tick: u64,
    pub min_distance_m: f64,
    /// Earliest wall time of the two fixes at `start_tick`.
    pub start_wall_time: i64,
    /// Latest wall time of the two fixes at `end_tick`.
    pub end_wall_time: i64,
    /// Pair midpoint at `start_tick`.
    pub midpoint: GeoPoint,
}

/// Finds every approach episode in a tick-aligned set of fixes.
///
/// Pairs are only compared at identical ticks. An episode closes on the first tick where the
/// pair is at or beyond `threshold_m`, or where either user has no fix. Events are returned
/// ordered by start tick, then pair.
pub fn detect_approach_events(
    fixes: &[PositionFix],
    threshold_m: f64,
) -> Result<Vec<ApproachEvent>, GeoError> {
    if !(threshold_m > 0.0) {
        return Err(GeoError::Threshold(threshold_m));
    }

    let mut by_tick: BTreeMap<u64, Vec<&PositionFix>> = BTreeMap::new();
    let mut seen: HashSet<(&UserId, u64)> = HashSet::with_capacity(fixes.len());
    for fix in fixes {
        if !seen.insert((&fix.user_id, fix.tick)) {
            return Err(GeoError::DuplicateFix {
                user: fix.user_id.to_string(),
                tick: fix.tick,
            });
        }
        by_tick.entry(fix.tick).or_default().push(fix);
    }

    let mut open: HashMap<UserPair, ApproachEvent> = HashMap::new();
    let mut done = Vec::new();

    for (&tick, present) in &mut by_tick {
        present.sort_by(|a, b| a.user_id.cmp(&b.user_id));
        for (i, a) in present.iter().enumerate() {
            for b in &present[i + 1..] {
                let pair = UserPair(a.user_id.clone(), b.user_id.clone());
                let d = haversine_distance(&a.point, &b.point);
                let close = d < threshold_m;
                match open.remove(&pair) {
                    Some(mut ev) if close && ev.end_tick + 1 == tick => {
                        ev.end_tick = tick;
                        ev.end_wall_time = a.wall_time.max(b.wall_time);
                        ev.min_distance_m = ev.min_distance_m.min(d);
                        open.insert(pair, ev);
                    }
                    prior => {
                        // Either a gap in the pair's data or a tick at/above the threshold.
                        done.extend(prior);
                        if close {
                            open.insert(
                                pair.clone(),
                                ApproachEvent {
                                    pair,
                                    start_tick: tick,
                                    end_tick: tick,
                                    min_distance_m: d,
                                    start_wall_time: a.wall_time.min(b.wall_time),
                                    end_wall_time: a.wall_time.max(b.wall_time),
                                    midpoint: a.point.midpoint(&b.point),
                                },
                            );
                        }
                    }
                }
            }
        }
    }
    done.extend(open.into_values());
    done.sort_by(|x, y| {
        x.start_tick
            .cmp(&y.start_tick)
            .then_with(|| x.pair.cmp(&y.pair))
    });
    Ok(done)
}
