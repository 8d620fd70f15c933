use std::collections::BTreeSet;

use proptest::prelude::*;
use proxtrace_core::exposure::{CovidStatus, Gender, RegistrationForm, SECONDS_PER_DAY};
use proxtrace_core::geo::{detect_approach_events, GeoPoint, UserId};
use proxtrace_core::lockdown::{BoundingBox, Region};
use proxtrace_core::platform::{Platform, PlatformConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const CENTER: GeoPoint = GeoPoint {
    lat: 39.7392,
    lon: -104.9903,
};
const T0: i64 = 1_600_000_000;

fn platform() -> Platform {
    Platform::new(PlatformConfig {
        regions: vec![Region {
            region_id: "denver".into(),
            name: "Denver".into(),
            bounding_box: BoundingBox::around(CENTER, 0.01),
            k: 1,
            seed: 0,
        }],
        ..PlatformConfig::default()
    })
    .unwrap()
}

/// Registers `n` users and writes a 30-day history of 5-tick get-togethers between random
/// subsets. Returns the platform and the user ids.
fn random_history(seed: u64, n: usize) -> (Platform, Vec<UserId>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = platform();
    let users: Vec<UserId> = (0..n)
        .map(|i| {
            let form = RegistrationForm {
                name: format!("Person{i}"),
                phone: format!("555{i:07}"),
                postcode: "80202".into(),
                age: 20 + i as u32,
                gender: Gender::Unspecified,
                bt_mac: format!("02:00:00:00:01:{i:02X}"),
                status: CovidStatus::Negative,
            };
            p.register(&form, T0).unwrap().user_id
        })
        .collect();
    let homes: Vec<GeoPoint> = (0..n).map(|i| CENTER.offset_m(30.0 * i as f64, 0.0)).collect();
    let mut wall = T0;
    for _ in 0..40 {
        wall += rng.random_range(1..=2) * SECONDS_PER_DAY / 2 + 5 * rng.random_range(0..100);
        wall -= wall.rem_euclid(5);
        let spot = CENTER.offset_m(0.0, 200.0);
        let present: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
        for step in 0..5 {
            let w = wall + 5 * step;
            for (i, u) in users.iter().enumerate() {
                let at = if present[i] { spot.offset_m(1.0 * i as f64, 0.0) } else { homes[i] };
                p.ingest_fix(u, at, w).unwrap();
            }
        }
        wall += 25;
    }
    (p, users)
}

/// Every approach episode in the store involving `u` that overlaps `[as_of - window, as_of]`.
fn brute_force_contacts(p: &Platform, u: &UserId, as_of: i64, window_days: u32) -> BTreeSet<UserId> {
    let all: Vec<_> = p.fixes().iter().cloned().collect();
    let start = as_of - i64::from(window_days) * SECONDS_PER_DAY;
    detect_approach_events(&all, 5.0)
        .unwrap()
        .into_iter()
        .filter(|e| e.pair.contains(u) && e.start_wall_time <= as_of && e.end_wall_time >= start)
        .map(|e| e.pair.other(u).unwrap().clone())
        .collect()
}

#[test]
fn contact_query_matches_brute_force() {
    for seed in 0..20 {
        let (p, users) = random_history(seed, 6);
        let end = p.fixes().iter().map(|f| f.wall_time).max().unwrap();
        for as_of in [T0 + 10 * SECONDS_PER_DAY, T0 + 16 * SECONDS_PER_DAY, end] {
            for u in &users {
                let got: BTreeSet<UserId> = p.contacts(u, as_of).unwrap().into_iter().map(|c| c.user_id).collect();
                assert_eq!(got, brute_force_contacts(&p, u, as_of, 14), "seed {seed}");
                for other in &got {
                    let back: BTreeSet<UserId> =
                        p.contacts(other, as_of).unwrap().into_iter().map(|c| c.user_id).collect();
                    assert!(back.contains(u), "contacts not symmetric");
                }
            }
        }
    }
}

#[test]
fn positive_report_notifies_window_contacts_once() {
    for seed in 0..10 {
        let (mut p, users) = random_history(seed, 6);
        let as_of = p.fixes().iter().map(|f| f.wall_time).max().unwrap() + 60;
        let index = &users[0];
        let expected = brute_force_contacts(&p, index, as_of, 14);
        let (_, sent) = p.update_status(index, CovidStatus::Positive, as_of).unwrap();
        let recipients: Vec<UserId> = sent.iter().map(|n| n.recipient.clone()).collect();
        assert_eq!(recipients.iter().cloned().collect::<BTreeSet<_>>(), expected);
        assert_eq!(recipients.len(), expected.len());

        // Replanning the same source event yields nothing new.
        let src = sent.first().map(|n| n.source_event.clone());
        if let Some(src) = src {
            let batch = p.notifications().prepare(sent[0].kind, &src, &recipients, as_of);
            assert!(batch.is_empty());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn notifications_carry_no_index_identifiers(
        names in proptest::collection::vec("[A-Z][a-z]{4,10} [A-Z][a-z]{4,10}", 3..7),
        phones in proptest::collection::vec("\\+?[0-9]{9,12}", 7),
        macs in proptest::collection::btree_set("[0-9A-F]{12}", 7),
    ) {
        let mut p = platform();
        let macs: Vec<String> = macs.into_iter().collect();
        let users: Vec<_> = names
            .iter()
            .zip(&phones)
            .zip(&macs)
            .map(|((name, phone), mac)| {
                p.register(&RegistrationForm {
                    name: name.clone(),
                    phone: phone.clone(),
                    postcode: "81611".into(),
                    age: 40,
                    gender: Gender::Female,
                    bt_mac: mac.clone(),
                    status: CovidStatus::Negative,
                }, T0).unwrap()
            })
            .collect();
        for (i, u) in users.iter().enumerate() {
            p.ingest_fix(&u.user_id, CENTER.offset_m(i as f64 * 0.5, 0.0), T0 + 5).unwrap();
        }
        let index = &users[0];
        let (_, sent) = p.update_status(&index.user_id, CovidStatus::Positive, T0 + 100).unwrap();
        prop_assert_eq!(sent.len(), users.len() - 1);
        for n in p.notifications().iter() {
            for secret in [index.user_id.as_str(), &index.name, &index.phone, index.bt_mac.as_str()] {
                prop_assert!(!n.message.contains(secret), "{:?} leaks {secret}", n.message);
                prop_assert!(!n.source_event.contains(secret));
            }
        }
    }
}
