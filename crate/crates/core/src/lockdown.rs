//! Approach-event totals per cluster and region, and the lockdown verdict.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clustering::{self, ClusterError, ClusterModel, KMeansParams};
use crate::geo::{detect_approach_events, GeoError, GeoPoint, PositionFix};

pub const DEFAULT_PROXIMITY_M: f64 = 5.0;
pub const DEFAULT_AEO_THRESHOLD: u64 = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LockdownError {
    #[error("region {region_id}: {reason}")]
    InvalidRegion { region_id: String, reason: String },
    #[error("fix of user {user} at tick {tick} lies outside region {region_id}")]
    FixOutsideRegion {
        region_id: String,
        user: String,
        tick: u64,
    },
    #[error(transparent)]
    Geo(#[from] GeoError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub min_lat: f64,
    pub min_lon: f64,
    pub max_lat: f64,
    pub max_lon: f64,
}

impl BoundingBox {
    pub fn around(center: GeoPoint, half_extent_deg: f64) -> Self {
        Self {
            min_lat: center.lat - half_extent_deg,
            min_lon: center.lon - half_extent_deg,
            max_lat: center.lat + half_extent_deg,
            max_lon: center.lon + half_extent_deg,
        }
    }

    pub fn contains(&self, p: &GeoPoint) -> bool {
        (self.min_lat..=self.max_lat).contains(&p.lat)
            && (self.min_lon..=self.max_lon).contains(&p.lon)
    }

    pub fn center(&self) -> GeoPoint {
        GeoPoint {
            lat: (self.min_lat + self.max_lat) / 2.0,
            lon: (self.min_lon + self.max_lon) / 2.0,
        }
    }
}

fn default_k() -> usize {
    1
}

/// A monitored area.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub region_id: String,
    pub name: String,
    pub bounding_box: BoundingBox,
    #[serde(default = "default_k")]
    pub k: usize,
    /// Seed for the region's clustering runs.
    #[serde(default)]
    pub seed: u64,
}

impl Region {
    pub fn validate(&self) -> Result<(), LockdownError> {
        let bad = |reason: &str| {
            Err(LockdownError::InvalidRegion {
                region_id: self.region_id.clone(),
                reason: reason.to_owned(),
            })
        };
        let b = &self.bounding_box;
        if self.region_id.is_empty() {
            return bad("empty region id");
        }
        if self.k < 1 {
            return bad("k must be at least 1");
        }
        if GeoPoint::new(b.min_lat, b.min_lon).is_err() || GeoPoint::new(b.max_lat, b.max_lon).is_err() {
            return bad("bounding box corner outside WGS84 range");
        }
        if !(b.min_lat < b.max_lat && b.min_lon < b.max_lon) {
            return bad("degenerate bounding box");
        }
        if b.max_lon - b.min_lon > 180.0 {
            return bad("bounding box spans the antimeridian");
        }
        Ok(())
    }

    pub fn contains(&self, p: &GeoPoint) -> bool {
        self.bounding_box.contains(p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    Lockdown,
    NoLockdown,
}

impl Verdict {
    /// Lockdown only when the count strictly exceeds the threshold.
    pub fn from_count(aeo_total: u64, aeo_threshold: u64) -> Self {
        if aeo_total > aeo_threshold {
            Verdict::Lockdown
        } else {
            Verdict::NoLockdown
        }
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Lockdown => "LOCKDOWN",
            Verdict::NoLockdown => "NO_LOCKDOWN",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssessParams {
    pub proximity_m: f64,
    pub aeo_threshold: u64,
}

impl Default for AssessParams {
    fn default() -> Self {
        Self {
            proximity_m: DEFAULT_PROXIMITY_M,
            aeo_threshold: DEFAULT_AEO_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LockdownAssessment {
    pub region_id: String,
    pub aeo_total: u64,
    pub aeo_per_cluster: BTreeMap<usize, u64>,
    pub threshold: u64,
    pub verdict: Verdict,
    pub clusters: ClusterModel,
    /// Latest wall time among the assessed fixes; 0 when there were none.
    pub assessed_at: i64,
}

/// Positions fed to clustering, in a label-independent order: by tick, then coordinates.
pub fn clustering_positions(fixes: &[PositionFix]) -> Vec<GeoPoint> {
    let mut keyed: Vec<(u64, GeoPoint)> = fixes.iter().map(|f| (f.tick, f.point)).collect();
    keyed.sort_by(|a, b| {
        a.0.cmp(&b.0)
            .then(a.1.lat.total_cmp(&b.1.lat))
            .then(a.1.lon.total_cmp(&b.1.lon))
    });
    keyed.into_iter().map(|(_, p)| p).collect()
}

/// Clusters the region's positions, attributes each approach episode to the cluster nearest
/// the pair's midpoint at the episode start, and derives the verdict from the total.
pub fn assess_region(
    region: &Region,
    fixes: &[PositionFix],
    params: &AssessParams,
    rng_seed: u64,
) -> Result<LockdownAssessment, LockdownError> {
    region.validate()?;
    if let Some(f) = fixes.iter().find(|f| !region.contains(&f.point)) {
        return Err(LockdownError::FixOutsideRegion {
            region_id: region.region_id.clone(),
            user: f.user_id.to_string(),
            tick: f.tick,
        });
    }
    let events = detect_approach_events(fixes, params.proximity_m)?;

    let positions = clustering_positions(fixes);
    let clusters = if positions.is_empty() {
        ClusterModel::empty()
    } else {
        let k = region.k.min(clustering::distinct_count(&positions));
        clustering::kmeans(&positions, k, rng_seed, &KMeansParams::default())?
    };

    let mut aeo_per_cluster: BTreeMap<usize, u64> = (0..clusters.k).map(|j| (j, 0)).collect();
    for ev in &events {
        let j = clusters
            .nearest(&ev.midpoint)
            .expect("an event implies at least one position");
        *aeo_per_cluster.entry(j).or_default() += 1;
    }
    let aeo_total = aeo_per_cluster.values().sum();

    Ok(LockdownAssessment {
        region_id: region.region_id.clone(),
        aeo_total,
        aeo_per_cluster,
        threshold: params.aeo_threshold,
        verdict: Verdict::from_count(aeo_total, params.aeo_threshold),
        clusters,
        assessed_at: fixes.iter().map(|f| f.wall_time).max().unwrap_or(0),
    })
}

/// Triage order: most approach events first, ties by region id.
pub fn rank_regions(mut assessments: Vec<LockdownAssessment>) -> Vec<LockdownAssessment> {
    assessments.sort_by(|a, b| {
        b.aeo_total
            .cmp(&a.aeo_total)
            .then_with(|| a.region_id.cmp(&b.region_id))
    });
    assessments
}

#[cfg(test)]
mod tests {
    use super::*;

    fn denver() -> Region {
        Region {
            region_id: "denver".into(),
            name: "Denver".into(),
            bounding_box: BoundingBox::around(GeoPoint { lat: 39.7392, lon: -104.9903 }, 0.01),
            k: 2,
            seed: 0,
        }
    }

    fn stub(region_id: &str, aeo_total: u64) -> LockdownAssessment {
        LockdownAssessment {
            region_id: region_id.into(),
            aeo_total,
            aeo_per_cluster: BTreeMap::new(),
            threshold: 10,
            verdict: Verdict::from_count(aeo_total, 10),
            clusters: ClusterModel::empty(),
            assessed_at: 0,
        }
    }

    #[test]
    fn verdict_boundary_is_strict() {
        assert_eq!(Verdict::from_count(10, 10), Verdict::NoLockdown);
        assert_eq!(Verdict::from_count(11, 10), Verdict::Lockdown);
        assert_eq!(Verdict::from_count(0, 0), Verdict::NoLockdown);
        assert_eq!(serde_json::to_string(&Verdict::NoLockdown).unwrap(), "\"NO_LOCKDOWN\"");
    }

    #[test]
    fn empty_region_is_not_locked_down() {
        let a = assess_region(&denver(), &[], &AssessParams::default(), 0).unwrap();
        assert_eq!(a.aeo_total, 0);
        assert_eq!(a.verdict, Verdict::NoLockdown);
        assert_eq!(a.clusters.k, 0);
    }

    #[test]
    fn malformed_region_rejected() {
        let mut r = denver();
        r.bounding_box.max_lat = r.bounding_box.min_lat;
        assert!(matches!(
            assess_region(&r, &[], &AssessParams::default(), 0),
            Err(LockdownError::InvalidRegion { .. })
        ));
        let mut r = denver();
        r.k = 0;
        assert!(r.validate().is_err());
    }

    #[test]
    fn fix_outside_region_rejected() {
        let fix = PositionFix::new("a", GeoPoint { lat: 0.0, lon: 0.0 }, 0, 0);
        assert!(matches!(
            assess_region(&denver(), &[fix], &AssessParams::default(), 0),
            Err(LockdownError::FixOutsideRegion { .. })
        ));
    }

    #[test]
    fn events_are_attributed_to_clusters() {
        let c = denver().bounding_box.center();
        let far = c.offset_m(500.0, 0.0);
        let mut fixes = Vec::new();
        for t in 0..3u64 {
            let w = 5 * t as i64;
            fixes.push(PositionFix::new("a", c, t, w));
            fixes.push(PositionFix::new("b", c.offset_m(2.0, 0.0), t, w));
            // Approach near `far` only on tick 1.
            let gap = if t == 1 { 1.0 } else { 20.0 };
            fixes.push(PositionFix::new("c", far, t, w));
            fixes.push(PositionFix::new("d", far.offset_m(0.0, gap), t, w));
        }
        let a = assess_region(&denver(), &fixes, &AssessParams::default(), 4).unwrap();
        assert_eq!(a.aeo_total, 2);
        assert_eq!(a.aeo_per_cluster.values().copied().collect::<Vec<_>>(), vec![1, 1]);
        assert_eq!(a.assessed_at, 10);
    }

    #[test]
    fn ranking() {
        assert!(rank_regions(vec![]).is_empty());
        let ids = |v: Vec<LockdownAssessment>| v.into_iter().map(|a| a.region_id).collect::<Vec<_>>();
        assert_eq!(ids(rank_regions(vec![stub("B", 3), stub("A", 55)])), ["A", "B"]);
        assert_eq!(ids(rank_regions(vec![stub("B", 7), stub("A", 7)])), ["A", "B"]);
    }
}
