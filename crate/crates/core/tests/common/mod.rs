#![allow(dead_code)]

use proxtrace_core::geo::{GeoPoint, PositionFix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const DENVER: GeoPoint = GeoPoint {
    lat: 39.7392,
    lon: -104.9903,
};

/// Random walk trace in a ~20 m box so pairs keep crossing 5 m; some fixes dropped.
pub fn random_trace(seed: u64, max_users: usize, max_ticks: u64) -> Vec<PositionFix> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let users = rng.random_range(2..=max_users);
    let ticks = rng.random_range(1..=max_ticks);
    let drop_rate = rng.random_range(0.0..0.2);
    let origin = DENVER;
    let mut pos: Vec<(f64, f64)> = (0..users)
        .map(|_| (rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0)))
        .collect();
    let mut fixes = Vec::new();
    for t in 0..ticks {
        for (u, p) in pos.iter_mut().enumerate() {
            p.0 = (p.0 + rng.random_range(-1.5..1.5)).clamp(-10.0, 10.0);
            p.1 = (p.1 + rng.random_range(-1.5..1.5)).clamp(-10.0, 10.0);
            if rng.random::<f64>() < drop_rate {
                continue;
            }
            fixes.push(PositionFix::new(
                format!("u{u}"),
                origin.offset_m(p.0, p.1),
                t,
                5 * t as i64,
            ));
        }
    }
    fixes
}

