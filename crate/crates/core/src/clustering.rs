//! K-means clustering of tracked positions.
//!
//! Positions are clustered in a local equirectangular plane fitted to the input, so a
//! centroid is exactly the arithmetic mean of its members' latitudes and longitudes and
//! every Lloyd step is a descent step on the inertia.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{GeoPoint, LocalPlane};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClusterError {
    #[error("k = {k} is invalid for {available} candidate positions")]
    InvalidK { k: usize, available: usize },
    #[error("positions span the antimeridian (longitudes {min_lon} to {max_lon})")]
    AntimeridianSpan { min_lon: f64, max_lon: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansParams {
    pub max_iters: usize,
    /// Convergence threshold on the largest centroid move, in meters.
    pub tol_m: f64,
}

impl Default for KMeansParams {
    fn default() -> Self {
        Self {
            max_iters: 100,
            tol_m: 0.001,
        }
    }
}

/// Result of a K-means run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub k: usize,
    pub centroids: Vec<GeoPoint>,
    /// Cluster index of each input position, by input order.
    pub assignments: Vec<usize>,
    /// Sum of squared member-to-centroid distances, m².
    pub inertia: f64,
    pub iterations: usize,
    /// Inertia after the seeding assignment and after every Lloyd iteration.
    pub inertia_trace: Vec<f64>,
    /// Reference latitude of the plane the model was fitted in.
    pub reference_lat: f64,
}

impl ClusterModel {
    /// Model over zero positions.
    pub fn empty() -> Self {
        Self {
            k: 0,
            centroids: Vec::new(),
            assignments: Vec::new(),
            inertia: 0.0,
            iterations: 0,
            inertia_trace: Vec::new(),
            reference_lat: 0.0,
        }
    }

    fn plane(&self) -> LocalPlane {
        LocalPlane::new(self.reference_lat)
    }

    /// Index of the nearest centroid, lowest index on ties. `None` for an empty model.
    pub fn nearest(&self, p: &GeoPoint) -> Option<usize> {
        nearest_centroid(&self.plane(), &self.centroids, p).map(|(j, _)| j)
    }

    pub fn member_count(&self, cluster: usize) -> usize {
        self.assignments.iter().filter(|&&a| a == cluster).count()
    }

    /// Root-mean-square member distance to the centroid, meters. Zero for an empty cluster.
    pub fn rms_radius(&self, positions: &[GeoPoint], cluster: usize) -> f64 {
        let plane = self.plane();
        let centroid = &self.centroids[cluster];
        let (sum, n) = positions
            .iter()
            .zip(&self.assignments)
            .filter(|(_, &a)| a == cluster)
            .fold((0.0, 0usize), |(s, n), (p, _)| {
                (s + plane.distance_sq(p, centroid), n + 1)
            });
        if n == 0 {
            0.0
        } else {
            (sum / n as f64).sqrt()
        }
    }

    /// Distance in meters from `p` to the given centroid, in the model's plane.
    pub fn distance_to_centroid(&self, p: &GeoPoint, cluster: usize) -> f64 {
        self.plane().distance_sq(p, &self.centroids[cluster]).sqrt()
    }
}

fn nearest_centroid(plane: &LocalPlane, centroids: &[GeoPoint], p: &GeoPoint) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (j, c) in centroids.iter().enumerate() {
        let d = plane.distance_sq(p, c);
        if best.is_none_or(|(_, bd)| d < bd) {
            best = Some((j, d));
        }
    }
    best
}

pub fn distinct_count(positions: &[GeoPoint]) -> usize {
    positions
        .iter()
        .map(|p| (p.lat.to_bits(), p.lon.to_bits()))
        .collect::<HashSet<_>>()
        .len()
}

fn check_span(positions: &[GeoPoint]) -> Result<(), ClusterError> {
    let (min_lon, max_lon) = positions
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
            (lo.min(p.lon), hi.max(p.lon))
        });
    if max_lon - min_lon > 180.0 {
        return Err(ClusterError::AntimeridianSpan { min_lon, max_lon });
    }
    Ok(())
}

/// D²-weighted seeding: the first centroid is uniform over the positions, each further one
/// is drawn with probability proportional to the squared distance to the nearest centroid
/// chosen so far.
pub fn seed_centroids(
    positions: &[GeoPoint],
    k: usize,
    rng_seed: u64,
) -> Result<Vec<GeoPoint>, ClusterError> {
    let available = distinct_count(positions);
    if k < 1 || k > available {
        return Err(ClusterError::InvalidK { k, available });
    }
    check_span(positions)?;
    let plane = LocalPlane::fitted(positions);
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    Ok(d2_seed(&plane, positions, k, &mut rng))
}

/// Draws up to `k` centroids; stops early once every position coincides with a centroid.
fn d2_seed(plane: &LocalPlane, positions: &[GeoPoint], k: usize, rng: &mut ChaCha8Rng) -> Vec<GeoPoint> {
    let first = positions[rng.random_range(0..positions.len())];
    let mut centroids = vec![first];
    let mut nearest_sq: Vec<f64> = positions
        .iter()
        .map(|p| plane.distance_sq(p, &first))
        .collect();
    while centroids.len() < k {
        let total: f64 = nearest_sq.iter().sum();
        if total <= 0.0 {
            break;
        }
        let target = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut pick = None;
        for (i, &w) in nearest_sq.iter().enumerate() {
            if w <= 0.0 {
                continue;
            }
            acc += w;
            pick = Some(i);
            if acc > target {
                break;
            }
        }
        // `pick` is the last positive-weight index if rounding left `acc <= target`.
        let chosen = positions[pick.expect("positive total implies a positive weight")];
        for (d, p) in nearest_sq.iter_mut().zip(positions) {
            *d = d.min(plane.distance_sq(p, &chosen));
        }
        centroids.push(chosen);
    }
    centroids
}

fn assign(plane: &LocalPlane, positions: &[GeoPoint], centroids: &[GeoPoint]) -> (Vec<usize>, f64) {
    let mut inertia = 0.0;
    let assignments = positions
        .iter()
        .map(|p| {
            let (j, d) = nearest_centroid(plane, centroids, p).expect("k >= 1");
            inertia += d;
            j
        })
        .collect();
    (assignments, inertia)
}

/// Lloyd's algorithm with D²-weighted seeding.
///
/// `k` may exceed the number of distinct positions (but not the number of positions); the
/// surplus centroids duplicate existing ones and end up empty. Empty clusters are reseeded
/// at the positions farthest from their current centroids.
pub fn kmeans(
    positions: &[GeoPoint],
    k: usize,
    rng_seed: u64,
    params: &KMeansParams,
) -> Result<ClusterModel, ClusterError> {
    if k < 1 || k > positions.len() {
        return Err(ClusterError::InvalidK {
            k,
            available: positions.len(),
        });
    }
    check_span(positions)?;
    let plane = LocalPlane::fitted(positions);
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut centroids = d2_seed(&plane, positions, k, &mut rng);
    while centroids.len() < k {
        centroids.push(centroids[0]);
    }

    let (mut assignments, mut inertia) = assign(&plane, positions, &centroids);
    let mut trace = vec![inertia];
    let mut iterations = 0;

    while iterations < params.max_iters {
        iterations += 1;
        let updated = update_centroids(&plane, positions, &assignments, &centroids);
        let moved = centroids
            .iter()
            .zip(&updated)
            .map(|(a, b)| plane.distance_sq(a, b).sqrt())
            .fold(0.0, f64::max);
        centroids = updated;
        let (next, next_inertia) = assign(&plane, positions, &centroids);
        let changed = next != assignments;
        assignments = next;
        inertia = next_inertia;
        trace.push(inertia);
        if !changed || moved < params.tol_m {
            break;
        }
    }

    Ok(ClusterModel {
        k,
        centroids,
        assignments,
        inertia,
        iterations,
        inertia_trace: trace,
        reference_lat: reference_lat(positions),
    })
}

fn reference_lat(positions: &[GeoPoint]) -> f64 {
    positions.iter().map(|p| p.lat).sum::<f64>() / positions.len() as f64
}

fn update_centroids(
    plane: &LocalPlane,
    positions: &[GeoPoint],
    assignments: &[usize],
    current: &[GeoPoint],
) -> Vec<GeoPoint> {
    let k = current.len();
    let mut sums = vec![[0.0f64; 2]; k];
    let mut counts = vec![0usize; k];
    for (p, &j) in positions.iter().zip(assignments) {
        sums[j][0] += p.lat;
        sums[j][1] += p.lon;
        counts[j] += 1;
    }

    // Farthest-first candidates for empty clusters; stable on ties.
    let mut far: Vec<(usize, f64)> = positions
        .iter()
        .zip(assignments)
        .enumerate()
        .map(|(i, (p, &j))| (i, plane.distance_sq(p, &current[j])))
        .collect();
    far.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut far = far.into_iter();

    (0..k)
        .map(|j| {
            if counts[j] == 0 {
                match far.next() {
                    Some((i, _)) => positions[i],
                    None => current[j],
                }
            } else {
                let n = counts[j] as f64;
                GeoPoint {
                    lat: sums[j][0] / n,
                    lon: sums[j][1] / n,
                }
            }
        })
        .collect()
}
