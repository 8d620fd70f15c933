//! Built-in scenarios, including the two reference areas.
//!
//! The reference walks are invented choreographies: the areas are real, the paths are not.

use super::{AgentSpec, Movement, Scenario};
use crate::exposure::CovidStatus;
use crate::geo::GeoPoint;
use crate::lockdown::{BoundingBox, Region};

pub const BUILTIN_NAMES: [&str; 3] = ["denver_crowded", "aspen_sparse", "crowded_walk_demo"];

pub const DENVER: GeoPoint = GeoPoint {
    lat: 39.7392,
    lon: -104.9903,
};
pub const ASPEN: GeoPoint = GeoPoint {
    lat: 39.1911,
    lon: -106.8175,
};

const USERS: [&str; 5] = ["user-a", "user-b", "user-c", "user-d", "user-e"];
const HOME_RADIUS_M: f64 = 40.0;
/// Gap kept by a meeting pair, meters.
const MEETING_GAP_M: f64 = 2.0;
/// Fraction of the way from home to the meeting spot, one entry per tick of a meeting.
const MEETING_PROFILE: [f64; 10] = [0.25, 0.5, 0.75, 1.0, 1.0, 1.0, 0.75, 0.5, 0.25, 0.0];
const LEAD_TICKS: usize = 2;

pub fn builtin(name: &str) -> Option<Scenario> {
    match name {
        "denver_crowded" => Some(denver_crowded()),
        "aspen_sparse" => Some(aspen_sparse()),
        "crowded_walk_demo" => Some(crowded_walk_demo()),
        _ => None,
    }
}

fn region(id: &str, name: &str, center: GeoPoint, k: usize) -> Region {
    Region {
        region_id: id.into(),
        name: name.into(),
        bounding_box: BoundingBox::around(center, 0.005),
        k,
        seed: 0,
    }
}

/// Agents on a 40 m circle who meet pairwise, one meeting at a time.
///
/// Each meeting brings the pair from their homes to 2 m apart for three ticks and back;
/// every other pairwise distance stays above 12 m. With `jitter_m <= 0.5` each meeting is
/// exactly one approach episode at a 5 m threshold, so the trace holds `meetings` events.
/// Pairs are visited in lexicographic order, cycling.
pub fn scripted_meetings(
    name: &str,
    region: Region,
    agents: usize,
    meetings: usize,
    jitter_m: f64,
) -> Scenario {
    let center = region.bounding_box.center();
    let homes: Vec<GeoPoint> = (0..agents)
        .map(|i| {
            let angle = std::f64::consts::TAU * i as f64 / agents as f64;
            center.offset_m(HOME_RADIUS_M * angle.cos(), HOME_RADIUS_M * angle.sin())
        })
        .collect();
    let pairs: Vec<(usize, usize)> = (0..agents)
        .flat_map(|i| (i + 1..agents).map(move |j| (i, j)))
        .collect();

    let ticks = LEAD_TICKS + meetings * MEETING_PROFILE.len() + LEAD_TICKS;
    let mut paths: Vec<Vec<GeoPoint>> = homes.iter().map(|h| vec![*h; ticks]).collect();
    for m in 0..meetings {
        let (i, j) = pairs[m % pairs.len()];
        let mid = homes[i].midpoint(&homes[j]);
        let spot = |me: GeoPoint| {
            // Stop short of the midpoint, on the mover's side.
            let t = 1.0 - MEETING_GAP_M / 2.0 / crate::geo::haversine_distance(&me, &mid);
            GeoPoint {
                lat: me.lat + t * (mid.lat - me.lat),
                lon: me.lon + t * (mid.lon - me.lon),
            }
        };
        let (si, sj) = (spot(homes[i]), spot(homes[j]));
        let first = LEAD_TICKS + m * MEETING_PROFILE.len();
        for (step, &s) in MEETING_PROFILE.iter().enumerate() {
            let lerp = |a: GeoPoint, b: GeoPoint| GeoPoint {
                lat: a.lat + s * (b.lat - a.lat),
                lon: a.lon + s * (b.lon - a.lon),
            };
            paths[i][first + step] = lerp(homes[i], si);
            paths[j][first + step] = lerp(homes[j], sj);
        }
    }

    let agent_list = paths
        .into_iter()
        .enumerate()
        .map(|(i, waypoints)| AgentSpec {
            user_id: agent_name(i),
            start: homes[i],
            movement: Movement::Scripted { waypoints, jitter_m },
            status: CovidStatus::Negative,
        })
        .collect();

    Scenario {
        name: name.into(),
        region,
        agents: agent_list,
        ticks: ticks as u64,
        tick_seconds: 5,
        rng_seed: 0,
        start_time: super::default_start_time(),
    }
}

fn agent_name(i: usize) -> String {
    USERS
        .get(i)
        .map(|s| s.to_string())
        .unwrap_or_else(|| format!("user-{i}"))
}

/// Five users meeting 55 times in central Denver.
pub fn denver_crowded() -> Scenario {
    scripted_meetings("denver_crowded", region("denver", "Denver, CO", DENVER, 3), 5, 55, 0.5)
}

/// Five users walking in Aspen, never within 50 m of each other.
pub fn aspen_sparse() -> Scenario {
    let agents = (0..5)
        .map(|i| {
            let angle = std::f64::consts::TAU * i as f64 / 5.0;
            AgentSpec {
                user_id: agent_name(i),
                start: ASPEN.offset_m(200.0 * angle.cos(), 200.0 * angle.sin()),
                movement: Movement::SparseWalk {
                    min_separation_m: 50.0,
                    speed_mps: 1.4,
                },
                status: CovidStatus::Negative,
            }
        })
        .collect();
    Scenario {
        name: "aspen_sparse".into(),
        region: region("aspen", "Aspen, CO", ASPEN, 3),
        agents,
        ticks: (2 * LEAD_TICKS + 55 * MEETING_PROFILE.len()) as u64,
        tick_seconds: 5,
        rng_seed: 0,
        start_time: super::default_start_time(),
    }
}

/// Five users drifting around a shared spot; approach counts vary with the seed.
pub fn crowded_walk_demo() -> Scenario {
    let agents = (0..5)
        .map(|i| AgentSpec {
            user_id: agent_name(i),
            start: DENVER.offset_m(5.0 * i as f64 - 10.0, 0.0),
            movement: Movement::CrowdedWalk {
                attraction_radius_m: 6.0,
                speed_mps: 1.2,
            },
            status: CovidStatus::Negative,
        })
        .collect();
    Scenario {
        name: "crowded_walk_demo".into(),
        region: region("denver", "Denver, CO", DENVER, 2),
        agents,
        ticks: 240,
        tick_seconds: 5,
        rng_seed: 0,
        start_time: super::default_start_time(),
    }
}
