use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use proxtrace_core::geo::{detect_approach_events, haversine_distance, GeoPoint, PositionFix, UserPair};
mod common;

use common::random_trace;

fn point() -> impl Strategy<Value = GeoPoint> {
    (-90.0..=90.0f64, -180.0..=180.0f64).prop_map(|(lat, lon)| GeoPoint::new(lat, lon).unwrap())
}

proptest! {
    #[test]
    fn symmetric_and_reflexive(a in point(), b in point()) {
        prop_assert_eq!(haversine_distance(&a, &b), haversine_distance(&b, &a));
        prop_assert_eq!(haversine_distance(&a, &a), 0.0);
        prop_assert!(haversine_distance(&a, &b) >= 0.0);
    }

    #[test]
    fn triangle_inequality(a in point(), b in point(), c in point()) {
        let ab = haversine_distance(&a, &b);
        let ac = haversine_distance(&a, &c);
        let cb = haversine_distance(&c, &b);
        prop_assert!(ab <= ac + cb + 1e-6, "{ab} > {ac} + {cb}");
    }
}

/// Direct per-tick scan: counts false→true transitions of "both present and closer than threshold".
fn rising_edges(fixes: &[PositionFix], threshold: f64) -> BTreeMap<(String, String), usize> {
    let mut at: BTreeMap<(String, u64), GeoPoint> = BTreeMap::new();
    let mut users = BTreeSet::new();
    let mut max_tick = 0;
    for f in fixes {
        at.insert((f.user_id.0.clone(), f.tick), f.point);
        users.insert(f.user_id.0.clone());
        max_tick = max_tick.max(f.tick);
    }
    let users: Vec<_> = users.into_iter().collect();
    let mut counts = BTreeMap::new();
    for i in 0..users.len() {
        for j in i + 1..users.len() {
            let mut prev = false;
            let mut n = 0;
            for t in 0..=max_tick {
                let now = match (at.get(&(users[i].clone(), t)), at.get(&(users[j].clone(), t))) {
                    (Some(a), Some(b)) => haversine_distance(a, b) < threshold,
                    _ => false,
                };
                if now && !prev {
                    n += 1;
                }
                prev = now;
            }
            if n > 0 {
                counts.insert((users[i].clone(), users[j].clone()), n);
            }
        }
    }
    counts
}

fn event_counts(fixes: &[PositionFix]) -> BTreeMap<(String, String), usize> {
    let mut counts = BTreeMap::new();
    for e in detect_approach_events(fixes, 5.0).unwrap() {
        *counts
            .entry((e.pair.first().0.clone(), e.pair.second().0.clone()))
            .or_insert(0) += 1;
    }
    counts
}

#[test]
fn episode_count_matches_rising_edge_scan() {
    for seed in 0..100 {
        let trace = random_trace(seed, 10, 1000);
        assert_eq!(event_counts(&trace), rising_edges(&trace, 5.0), "seed {seed}");
    }
}

#[test]
fn events_respect_threshold_and_order() {
    for seed in 0..20 {
        let trace = random_trace(seed, 6, 300);
        for e in detect_approach_events(&trace, 5.0).unwrap() {
            assert!(e.start_tick <= e.end_tick);
            assert!(e.min_distance_m < 5.0);
            assert_ne!(e.pair.first(), e.pair.second());
        }
    }
}

#[test]
fn relabelling_users_preserves_episodes() {
    for seed in 0..20 {
        let trace = random_trace(seed, 8, 200);
        // Reverse the label order: u0 -> z9, u1 -> z8, ...
        let relabel = |id: &str| format!("z{}", 9 - id[1..].parse::<u32>().unwrap());
        let renamed: Vec<PositionFix> = trace
            .iter()
            .map(|f| PositionFix { user_id: relabel(f.user_id.as_str()).as_str().into(), ..f.clone() })
            .collect();
        let key = |fixes: &[PositionFix]| {
            let mut v: Vec<(u64, u64, u64)> = detect_approach_events(fixes, 5.0)
                .unwrap()
                .into_iter()
                .map(|e| (e.start_tick, e.end_tick, e.min_distance_m.to_bits()))
                .collect();
            v.sort();
            v
        };
        assert_eq!(key(&trace), key(&renamed), "seed {seed}");

        let original = detect_approach_events(&trace, 5.0).unwrap();
        let mapped: BTreeSet<(UserPair, u64)> = original
            .iter()
            .map(|e| {
                let a = relabel(e.pair.first().as_str());
                let b = relabel(e.pair.second().as_str());
                (UserPair::new(a.as_str().into(), b.as_str().into()).unwrap(), e.start_tick)
            })
            .collect();
        let renamed_events: BTreeSet<(UserPair, u64)> = detect_approach_events(&renamed, 5.0)
            .unwrap()
            .into_iter()
            .map(|e| (e.pair, e.start_tick))
            .collect();
        assert_eq!(mapped, renamed_events);
    }
}
