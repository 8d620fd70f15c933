//! Deterministic agent mobility and scenario runs standing in for real phones.

mod run;
pub mod scenarios;

pub use run::{agent_registration, run_in_process, RunReport};
pub use scenarios::{
    aspen_sparse, builtin, crowded_walk_demo, denver_crowded, scripted_meetings, BUILTIN_NAMES,
};

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exposure::CovidStatus;
use crate::geo::{haversine_distance, GeoPoint, LocalPlane, PositionFix};
use crate::lockdown::Region;
use crate::platform::PlatformError;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("scenario {scenario}: {reason}")]
    InvalidScenario { scenario: String, reason: String },
    #[error("scenario {scenario}: cannot keep {agents} agents {min_separation_m} m apart inside the region")]
    InfeasibleSeparation {
        scenario: String,
        agents: usize,
        min_separation_m: f64,
    },
    #[error(transparent)]
    Platform(#[from] PlatformError),
}

fn default_tick_seconds() -> u32 {
    5
}

fn default_start_time() -> i64 {
    // 2020-05-20T18:40:00Z, on the 5 s grid.
    1_590_000_000
}

fn default_speed() -> f64 {
    1.4
}

fn default_status() -> CovidStatus {
    CovidStatus::Negative
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Movement {
    /// Correlated random walk pulled toward the crowd's centre.
    CrowdedWalk {
        attraction_radius_m: f64,
        #[serde(default = "default_speed")]
        speed_mps: f64,
    },
    /// Random walk that never comes closer than `min_separation_m` to another agent.
    SparseWalk {
        min_separation_m: f64,
        #[serde(default = "default_speed")]
        speed_mps: f64,
    },
    /// Waypoint `i` is the position at tick `i`; the last one is held afterwards.
    Scripted {
        waypoints: Vec<GeoPoint>,
        /// Radius of uniform per-tick noise added to every waypoint, meters.
        #[serde(default)]
        jitter_m: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSpec {
    pub user_id: String,
    pub start: GeoPoint,
    pub movement: Movement,
    #[serde(default = "default_status")]
    pub status: CovidStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub region: Region,
    pub agents: Vec<AgentSpec>,
    pub ticks: u64,
    #[serde(default = "default_tick_seconds")]
    pub tick_seconds: u32,
    #[serde(default)]
    pub rng_seed: u64,
    /// Wall time of the first sample, seconds since the epoch.
    #[serde(default = "default_start_time")]
    pub start_time: i64,
}

impl Scenario {
    /// Same scenario with a different seed for both mobility noise and clustering.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.rng_seed = seed;
        self.region.seed = seed;
        self
    }

    fn invalid(&self, reason: impl Into<String>) -> SimError {
        SimError::InvalidScenario {
            scenario: self.name.clone(),
            reason: reason.into(),
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        self.region
            .validate()
            .map_err(|e| self.invalid(e.to_string()))?;
        if self.tick_seconds == 0 {
            return Err(self.invalid("tick_seconds must be positive"));
        }
        if self.start_time < 0 {
            return Err(self.invalid("start_time must not precede the epoch"));
        }
        let mut ids = std::collections::HashSet::new();
        for a in &self.agents {
            if !ids.insert(a.user_id.as_str()) {
                return Err(self.invalid(format!("duplicate agent {}", a.user_id)));
            }
            if !self.region.contains(&a.start) {
                return Err(self.invalid(format!("agent {} starts outside the region", a.user_id)));
            }
            match &a.movement {
                Movement::CrowdedWalk { attraction_radius_m: r, speed_mps: s }
                | Movement::SparseWalk { min_separation_m: r, speed_mps: s } => {
                    if !(*r > 0.0) || !(*s >= 0.0) {
                        return Err(self.invalid(format!("agent {}: radius and speed must be positive", a.user_id)));
                    }
                }
                Movement::Scripted { waypoints, jitter_m } => {
                    if !(*jitter_m >= 0.0) {
                        return Err(self.invalid(format!("agent {}: negative jitter", a.user_id)));
                    }
                    if let Some(w) = waypoints.iter().find(|w| !self.region.contains(w)) {
                        return Err(self.invalid(format!(
                            "agent {}: waypoint ({}, {}) outside the region",
                            a.user_id, w.lat, w.lon
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Generates one fix per agent per tick, ordered by tick then agent.
///
/// Ticks are the wall-time grid indices `wall_time / tick_seconds`, the same ticks the
/// service assigns on ingestion.
pub fn generate_trace(scenario: &Scenario) -> Result<Vec<PositionFix>, SimError> {
    scenario.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.rng_seed);
    let bbox = scenario.region.bounding_box;
    let plane = LocalPlane::new(bbox.center().lat);
    let ts = f64::from(scenario.tick_seconds);

    let mut pos: Vec<GeoPoint> = scenario
        .agents
        .iter()
        .map(|a| match &a.movement {
            Movement::Scripted { waypoints, .. } => waypoints.first().copied().unwrap_or(a.start),
            _ => a.start,
        })
        .collect();
    let mut heading: Vec<f64> = scenario.agents.iter().map(|_| rng.random::<f64>() * TAU).collect();
    place_sparse_agents(scenario, &plane, &mut pos, &mut rng)?;

    let clamp = |p: GeoPoint| GeoPoint {
        lat: p.lat.clamp(bbox.min_lat, bbox.max_lat),
        lon: p.lon.clamp(bbox.min_lon, bbox.max_lon),
    };

    let mut fixes = Vec::with_capacity(scenario.agents.len() * scenario.ticks as usize);
    for t in 0..scenario.ticks {
        if t > 0 {
            let crowd = crowd_center(scenario, &pos);
            for (i, agent) in scenario.agents.iter().enumerate() {
                match &agent.movement {
                    Movement::Scripted { waypoints, .. } => {
                        if let Some(last) = waypoints.len().checked_sub(1) {
                            pos[i] = waypoints[(t as usize).min(last)];
                        }
                    }
                    Movement::CrowdedWalk { attraction_radius_m, speed_mps } => {
                        let here = plane.project(&pos[i]);
                        let target = plane.project(&crowd.unwrap_or(pos[i]));
                        let (dx, dy) = (target[0] - here[0], target[1] - here[1]);
                        let dist = dx.hypot(dy);
                        let pull = (dist / attraction_radius_m).min(2.0);
                        let noise = rng.random::<f64>() * TAU;
                        let mut vx = 0.6 * heading[i].cos() + 0.8 * noise.cos();
                        let mut vy = 0.6 * heading[i].sin() + 0.8 * noise.sin();
                        if dist > 0.0 {
                            vx += pull * dx / dist;
                            vy += pull * dy / dist;
                        }
                        heading[i] = vy.atan2(vx);
                        let step = speed_mps * ts * rng.random_range(0.3..=1.0);
                        pos[i] = clamp(pos[i].offset_m(step * heading[i].cos(), step * heading[i].sin()));
                    }
                    Movement::SparseWalk { min_separation_m, speed_mps } => {
                        for _ in 0..16 {
                            let dir = rng.random::<f64>() * TAU;
                            let step = speed_mps * ts * rng.random::<f64>();
                            let cand = pos[i].offset_m(step * dir.cos(), step * dir.sin());
                            let clear = scenario.region.contains(&cand)
                                && pos
                                    .iter()
                                    .enumerate()
                                    .all(|(j, p)| j == i || haversine_distance(p, &cand) > *min_separation_m);
                            if clear {
                                pos[i] = cand;
                                break;
                            }
                        }
                    }
                }
            }
        }
        let wall_time = scenario.start_time + t as i64 * i64::from(scenario.tick_seconds);
        let tick = wall_time.div_euclid(i64::from(scenario.tick_seconds)) as u64;
        for (i, agent) in scenario.agents.iter().enumerate() {
            let mut p = pos[i];
            if let Movement::Scripted { jitter_m, .. } = &agent.movement {
                if *jitter_m > 0.0 {
                    let r = jitter_m * rng.random::<f64>().sqrt();
                    let a = rng.random::<f64>() * TAU;
                    p = clamp(p.offset_m(r * a.cos(), r * a.sin()));
                }
            }
            fixes.push(PositionFix::new(agent.user_id.clone(), p, tick, wall_time));
        }
    }
    Ok(fixes)
}

fn crowd_center(scenario: &Scenario, pos: &[GeoPoint]) -> Option<GeoPoint> {
    let crowd: Vec<&GeoPoint> = scenario
        .agents
        .iter()
        .zip(pos)
        .filter(|(a, _)| matches!(a.movement, Movement::CrowdedWalk { .. }))
        .map(|(_, p)| p)
        .collect();
    if crowd.is_empty() {
        return None;
    }
    let n = crowd.len() as f64;
    Some(GeoPoint {
        lat: crowd.iter().map(|p| p.lat).sum::<f64>() / n,
        lon: crowd.iter().map(|p| p.lon).sum::<f64>() / n,
    })
}

/// Moves sparse agents whose start violates the separation to random feasible spots.
fn place_sparse_agents(
    scenario: &Scenario,
    plane: &LocalPlane,
    pos: &mut [GeoPoint],
    rng: &mut ChaCha8Rng,
) -> Result<(), SimError> {
    let sparse: Vec<(usize, f64)> = scenario
        .agents
        .iter()
        .enumerate()
        .filter_map(|(i, a)| match a.movement {
            Movement::SparseWalk { min_separation_m, .. } => Some((i, min_separation_m)),
            _ => None,
        })
        .collect();
    let Some(max_sep) = sparse.iter().map(|s| s.1).reduce(f64::max) else {
        return Ok(());
    };
    let infeasible = || SimError::InfeasibleSeparation {
        scenario: scenario.name.clone(),
        agents: sparse.len(),
        min_separation_m: max_sep,
    };

    // Disjoint discs of radius sep/2 centred inside the box must fit in the box grown by sep/2.
    let bbox = scenario.region.bounding_box;
    let lo = plane.project(&GeoPoint { lat: bbox.min_lat, lon: bbox.min_lon });
    let hi = plane.project(&GeoPoint { lat: bbox.max_lat, lon: bbox.max_lon });
    let grown = (hi[0] - lo[0] + max_sep) * (hi[1] - lo[1] + max_sep);
    let discs = sparse.len() as f64 * std::f64::consts::PI * (max_sep / 2.0).powi(2);
    if sparse.len() > 1 && discs > grown {
        return Err(infeasible());
    }

    for &(i, sep) in &sparse {
        let ok = |p: &GeoPoint, pos: &[GeoPoint]| {
            pos.iter()
                .enumerate()
                .all(|(j, q)| j == i || haversine_distance(p, q) > sep)
        };
        if ok(&pos[i], pos) {
            continue;
        }
        let mut placed = false;
        for _ in 0..10_000 {
            let cand = GeoPoint {
                lat: rng.random_range(bbox.min_lat..=bbox.max_lat),
                lon: rng.random_range(bbox.min_lon..=bbox.max_lon),
            };
            if ok(&cand, pos) {
                pos[i] = cand;
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(infeasible());
        }
    }
    Ok(())
}
