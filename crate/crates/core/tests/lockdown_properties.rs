mod common;

use common::{random_trace, DENVER};
use proptest::prelude::*;
use proxtrace_core::geo::{GeoPoint, PositionFix};
use proxtrace_core::lockdown::{assess_region, AssessParams, BoundingBox, Region, Verdict};

fn region(k: usize) -> Region {
    Region {
        region_id: "denver".into(),
        name: "Denver".into(),
        bounding_box: BoundingBox::around(DENVER, 0.01),
        k,
        seed: 0,
    }
}

fn params(aeo_threshold: u64) -> AssessParams {
    AssessParams {
        proximity_m: 5.0,
        aeo_threshold,
    }
}

/// Two extra users meeting once, 200 m east of the crowd, at the trace's first tick.
fn extra_meeting(trace: &[PositionFix]) -> Vec<PositionFix> {
    let first = trace.iter().map(|f| f.tick).min().unwrap_or(0);
    let spot = DENVER.offset_m(200.0, 0.0);
    vec![
        PositionFix::new("x1", spot, first, 5 * first as i64),
        PositionFix::new("x2", spot.offset_m(1.0, 0.0), first, 5 * first as i64),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn adding_an_event_never_lifts_a_lockdown(seed in 0u64..10_000, k in 1usize..4, threshold in 0u64..40) {
        let trace = random_trace(seed, 5, 60);
        let before = assess_region(&region(k), &trace, &params(threshold), seed).unwrap();
        let mut more = trace.clone();
        more.extend(extra_meeting(&trace));
        let after = assess_region(&region(k), &more, &params(threshold), seed).unwrap();
        prop_assert_eq!(after.aeo_total, before.aeo_total + 1);
        if before.verdict == Verdict::Lockdown {
            prop_assert_eq!(after.verdict, Verdict::Lockdown);
        }
        prop_assert_eq!(after.aeo_per_cluster.values().sum::<u64>(), after.aeo_total);
        prop_assert_eq!(after.verdict == Verdict::Lockdown, after.aeo_total > threshold);
    }

    #[test]
    fn total_ignores_labels_and_translation(
        seed in 0u64..10_000,
        dlon in -0.003f64..0.003,
        dlat in -1e-6f64..1e-6,
        k in 1usize..4,
    ) {
        let trace = random_trace(seed, 6, 80);
        let base = assess_region(&region(k), &trace, &params(10), 1).unwrap();

        let relabelled: Vec<PositionFix> = trace
            .iter()
            .map(|f| PositionFix { user_id: format!("p{}", f.user_id).as_str().into(), ..f.clone() })
            .rev()
            .collect();
        prop_assert_eq!(assess_region(&region(k), &relabelled, &params(10), 1).unwrap().aeo_total, base.aeo_total);

        let moved: Vec<PositionFix> = trace
            .iter()
            .map(|f| PositionFix {
                point: GeoPoint::new(f.point.lat + dlat, f.point.lon + dlon).unwrap(),
                ..f.clone()
            })
            .collect();
        prop_assert_eq!(assess_region(&region(k), &moved, &params(10), 1).unwrap().aeo_total, base.aeo_total);
    }
}

#[test]
fn reassessment_is_bit_identical() {
    for seed in 0..10 {
        let trace = random_trace(seed, 8, 200);
        let a = assess_region(&region(3), &trace, &params(10), seed).unwrap();
        let b = assess_region(&region(3), &trace, &params(10), seed).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }
}

#[test]
fn verdict_depends_only_on_total_and_threshold() {
    let trace = random_trace(5, 6, 300);
    let a = assess_region(&region(2), &trace, &params(10), 0).unwrap();
    for threshold in [0, a.aeo_total.saturating_sub(1), a.aeo_total, a.aeo_total + 1] {
        let b = assess_region(&region(2), &trace, &params(threshold), 0).unwrap();
        assert_eq!(b.aeo_total, a.aeo_total);
        assert_eq!(b.verdict, Verdict::from_count(a.aeo_total, threshold));
    }
}
