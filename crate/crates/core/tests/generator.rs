use std::collections::BTreeSet;

use grounded_world::bench::{
    generate_scene, load_scene, save_scene, scene_from_json, scene_to_json, BenchError, BenchmarkScene, Context,
    Difficulty, NoiseConfig, SceneSpec,
};
use grounded_world::geometry::project_point;
use grounded_world::graph::{ObjectNode, RelationType, SceneGraph};
use grounded_world::relations::{infer_relations, RelationParams};

fn suite() -> Vec<BenchmarkScene> {
    let mut out = Vec::new();
    for (i, c) in Context::ALL.into_iter().enumerate() {
        for (j, d) in Difficulty::ALL.into_iter().enumerate() {
            for shelf in [false, true] {
                let seed = 500 + 10 * i as u64 + 3 * j as u64 + shelf as u64;
                out.push(generate_scene(&SceneSpec::new(c, d, seed).with_shelf(shelf)).unwrap());
            }
        }
    }
    out
}

fn gt_graph(scene: &BenchmarkScene) -> SceneGraph {
    let mut g = SceneGraph::new(scene.user_position);
    for o in &scene.objects {
        g.upsert_node(ObjectNode {
            id: o.id,
            label: o.label.clone(),
            confidence: 1.0,
            anchor: o.center,
            volume: o.box3(),
            last_seen: 0.0,
        })
        .unwrap();
    }
    g
}

#[test]
fn mugs_rest_on_their_desk() {
    let eps_h = RelationParams::default().eps_h;
    let mut near = 0;
    for seed in 0..30 {
        let scene = generate_scene(&SceneSpec::new(Context::Desk, Difficulty::Tidy, seed)).unwrap();
        for mug in scene.objects.iter().filter(|o| o.label == "mug") {
            let desk = scene.object(mug.support_of.unwrap()).unwrap();
            let on = scene
                .edges
                .iter()
                .any(|e| e.src == mug.id && e.dst == desk.id && e.relation == RelationType::On);
            // On also bounds the horizontal offset between the two anchors.
            let offset = mug.center.horizontal_distance(desk.center);
            assert_eq!(on, offset <= eps_h, "seed {seed} offset {offset}");
            near += usize::from(on);
        }
    }
    assert!(near > 0);
}

#[test]
fn spatial_ground_truth_is_pure_geometry() {
    for scene in suite() {
        let params = RelationParams {
            alpha: 0.0,
            ..RelationParams::default()
        };
        let geo = infer_relations(&gt_graph(&scene), &[], &params, scene.pose.horizontal_forward()).unwrap();
        let key = |e: &grounded_world::graph::RelationEdge| (e.src, e.dst, e.relation);
        let want: BTreeSet<_> = geo.iter().map(key).collect();
        let got: BTreeSet<_> = scene.edges.iter().filter(|e| e.relation.is_spatial()).map(key).collect();
        assert_eq!(got, want, "{}", scene.scene_id());
    }
}

#[test]
fn ground_truth_boxes_cover_projected_centers() {
    for scene in suite() {
        for o in &scene.objects {
            let c = project_point(o.center, &scene.intrinsics, &scene.pose).unwrap();
            let inside_frame =
                c.u >= 0.0 && c.v >= 0.0 && c.u <= scene.intrinsics.width as f64 && c.v <= scene.intrinsics.height as f64;
            if inside_frame {
                assert!(o.box2.contains(c), "{} object {}", scene.scene_id(), o.id);
            }
        }
    }
}

#[test]
fn object_counts_and_shelves() {
    for scene in suite() {
        let [lo, hi] = scene.spec.object_count;
        let catalog = scene.objects.iter().filter(|o| !o.is_surface()).count();
        assert!((lo..=hi).contains(&catalog), "{} has {catalog}", scene.scene_id());
        let elevated = scene.elevated_objects(0.2).len();
        assert_eq!(elevated > 0, scene.spec.shelf, "{}", scene.scene_id());
        assert!(!scene.queries.is_empty());
        scene.validate().unwrap();
    }
}

#[test]
fn generation_is_deterministic() {
    let spec = SceneSpec::new(Context::Industrial, Difficulty::Cluttered, 77).with_noise(NoiseConfig {
        depth_sigma: 0.01,
        box_jitter_sigma: 2.0,
        dropout_fraction: 0.1,
    });
    let a = scene_to_json(&generate_scene(&spec).unwrap());
    let b = scene_to_json(&generate_scene(&spec).unwrap());
    assert_eq!(a, b);
    let other = SceneSpec { seed: 78, ..spec };
    assert_ne!(a, scene_to_json(&generate_scene(&other).unwrap()));
}

#[test]
fn scene_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let spec = SceneSpec::new(Context::Assistive, Difficulty::Tidy, 5).with_noise(NoiseConfig {
        depth_sigma: 0.01,
        box_jitter_sigma: 0.0,
        dropout_fraction: 0.1,
    });
    let scene = generate_scene(&spec).unwrap();
    let path = dir.path().join("scene.json");
    save_scene(&scene, &path).unwrap();
    let back = load_scene(&path).unwrap();
    assert_eq!(back, scene);
    let bits = |s: &BenchmarkScene| s.depth.data().iter().map(|d| d.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&back), bits(&scene));
    assert_eq!(scene_to_json(&back), std::fs::read_to_string(&path).unwrap());
}

#[test]
fn format_errors() {
    let scene = generate_scene(&SceneSpec::new(Context::Desk, Difficulty::Tidy, 1)).unwrap();
    let mut value: serde_json::Value = serde_json::from_str(&scene_to_json(&scene)).unwrap();
    value.as_object_mut().unwrap().remove("version");
    match scene_from_json(&value.to_string()) {
        Err(BenchError::Format(m)) => assert!(m.contains("version"), "{m}"),
        other => panic!("{other:?}"),
    }
    value["version"] = 99.into();
    assert!(matches!(scene_from_json(&value.to_string()), Err(BenchError::Format(_))));
    assert!(matches!(scene_from_json("{"), Err(BenchError::Format(_))));
    let missing = std::path::Path::new("/nonexistent/scene.json");
    assert!(matches!(load_scene(missing), Err(BenchError::Io { .. })));
}

#[test]
fn invalid_specs_are_rejected() {
    let mut spec = SceneSpec::new(Context::Desk, Difficulty::Tidy, 1);
    spec.object_count = [0, 3];
    assert!(matches!(generate_scene(&spec), Err(BenchError::InvalidSpec(_))));
    spec.object_count = [5, 2];
    assert!(matches!(generate_scene(&spec), Err(BenchError::InvalidSpec(_))));
    spec.object_count = [3, 6];
    spec.noise.dropout_fraction = 1.5;
    assert!(matches!(generate_scene(&spec), Err(BenchError::InvalidSpec(_))));
    assert!("garage".parse::<Context>().is_err());
    assert!("messy".parse::<Difficulty>().is_err());
}
