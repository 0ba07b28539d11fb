use std::collections::BTreeSet;

use grounded_world::geometry::{Box3, Vec3};
use grounded_world::graph::{NodeId, ObjectNode, SceneGraph};
use grounded_world::query::{evaluate, parse_query, Answer, Query};
use proptest::prelude::*;

const POOL: [&str; 6] = ["mug", "lamp", "book", "stapler", "phone", "plant"];

fn arb_graph() -> impl Strategy<Value = SceneGraph> {
    prop::collection::vec(((0usize..POOL.len()), -1.0..1.0f64, 0.0..1.5f64, -1.0..1.0f64), 0..9).prop_map(|items| {
        let mut g = SceneGraph::new(Vec3::ZERO);
        for (k, (l, x, y, z)) in items.into_iter().enumerate() {
            let p = Vec3::new(x, y, z);
            g.upsert_node(ObjectNode {
                id: k as NodeId,
                label: POOL[l].to_string(),
                confidence: 0.9,
                anchor: p,
                volume: Box3::new(p, Vec3::new(0.05, 0.05, 0.05)).unwrap(),
                last_seen: 0.0,
            })
            .unwrap();
        }
        g
    })
}

fn ids(a: &Answer) -> BTreeSet<NodeId> {
    match a {
        Answer::Objects { ids } => ids.iter().copied().collect(),
        _ => BTreeSet::new(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn measure_is_symmetric(g in arb_graph(), a in 0usize..POOL.len(), b in 0usize..POOL.len()) {
        let ab = evaluate(&Query::Measure { a: POOL[a].into(), b: POOL[b].into() }, &g);
        let ba = evaluate(&Query::Measure { a: POOL[b].into(), b: POOL[a].into() }, &g);
        match (&ab, &ba) {
            (Answer::Distance { meters: x }, Answer::Distance { meters: y }) => prop_assert_eq!(x.to_bits(), y.to_bits()),
            (Answer::Distance { .. }, _) | (_, Answer::Distance { .. }) => prop_assert!(false, "{:?} vs {:?}", ab, ba),
            _ => {}
        }
    }

    #[test]
    fn filter_within_is_monotone(g in arb_graph(), a in 0usize..POOL.len(), d1 in 0.0..2.0f64, d2 in 0.0..2.0f64) {
        let (lo, hi) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
        let near = evaluate(&Query::FilterWithin { distance: lo, anchor: POOL[a].into() }, &g);
        let far = evaluate(&Query::FilterWithin { distance: hi, anchor: POOL[a].into() }, &g);
        prop_assert!(ids(&near).is_subset(&ids(&far)));
        if let Answer::Objects { ids: found } = &far {
            let anchor = g.nodes_with_label(POOL[a]).next().unwrap().anchor;
            for id in found {
                prop_assert!(g.node(*id).unwrap().anchor.distance(anchor) <= hi);
            }
        }
    }

    #[test]
    fn rendered_queries_reparse(a in 0usize..POOL.len(), b in 0usize..POOL.len(), cm in 1u32..200) {
        for q in [
            Query::Locate { label: POOL[a].into() },
            Query::Measure { a: POOL[a].into(), b: POOL[b].into() },
            Query::FilterWithin { distance: cm as f64 / 100.0, anchor: POOL[b].into() },
            Query::Closest { label: POOL[a].into(), to: POOL[b].into() },
        ] {
            let back = parse_query(&q.to_string()).unwrap();
            prop_assert_eq!(back.category(), q.category());
            prop_assert_eq!(back.labels(), q.labels());
        }
    }
}
