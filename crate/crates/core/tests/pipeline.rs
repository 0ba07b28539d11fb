use std::collections::BTreeSet;

use grounded_world::bench::{generate_scene, BenchmarkScene, Context, Difficulty, SceneSpec};
use grounded_world::metrics::{aggregate, evaluate_scene, run_benchmark, BenchParams, MetricsError};
use grounded_world::query::Mode;

fn scenes() -> Vec<BenchmarkScene> {
    (0..6u64)
        .map(|i| {
            let spec = SceneSpec::new(Context::ALL[(i % 3) as usize], Difficulty::ALL[(i / 3) as usize], 900 + i)
                .with_shelf(i % 2 == 0);
            generate_scene(&spec).unwrap()
        })
        .collect()
}

#[test]
fn noiseless_grounding_reproduces_ground_truth() {
    let params = BenchParams::default();
    for scene in scenes() {
        let eval = evaluate_scene(&scene, &params).unwrap();
        let key = |e: &grounded_world::graph::RelationEdge| (e.src, e.dst, e.relation);
        let got: BTreeSet<_> = eval.predicted_edges.iter().map(key).collect();
        let want: BTreeSet<_> = scene.edges.iter().map(key).collect();
        assert_eq!(got, want, "{}", scene.scene_id());
        for o in eval.objects.iter().filter(|o| !o.is_surface) {
            let err = o.error_cm.expect("matched");
            assert!(err <= o.tolerance_cm(), "{} object {}: {err} > {}", scene.scene_id(), o.gt_id, o.tolerance_cm());
        }
        for q in &eval.queries {
            assert!(q.success, "{} '{}': {:?} vs {:?}", scene.scene_id(), q.text, q.answer, q.expected);
        }
        assert_eq!(eval.planar_fallbacks, 0);
    }
}

#[test]
fn coordinator_caches_without_changing_answers() {
    let scenes = scenes();
    let full = BenchParams::default().with_mode(Mode::Full);
    let naive = BenchParams::default().with_mode(Mode::NoCoordinator);
    let mut full_total = 0.0;
    let mut naive_total = 0.0;
    for scene in &scenes {
        let a = evaluate_scene(scene, &full).unwrap();
        let b = evaluate_scene(scene, &naive).unwrap();
        let answers = |e: &grounded_world::metrics::SceneEval| e.queries.iter().map(|q| q.answer.clone()).collect::<Vec<_>>();
        assert_eq!(answers(&a), answers(&b));
        let cached: Vec<_> = a.queries.iter().filter(|q| q.from_cache).collect();
        assert!(!cached.is_empty());
        for q in cached {
            assert_eq!((q.timings.mllm, q.timings.detection, q.timings.end_to_end), (0.0, 0.0, 0.0));
        }
        assert!(b.queries.iter().all(|q| !q.from_cache));
        full_total += a.queries.iter().map(|q| q.timings.end_to_end).sum::<f64>();
        naive_total += b.queries.iter().map(|q| q.timings.end_to_end).sum::<f64>();
    }
    assert!(naive_total > full_total);
}

#[test]
fn planar_lifting_is_worse_with_elevated_objects() {
    let shelf: Vec<_> = scenes().into_iter().filter(|s| s.spec.shelf).collect();
    let full = run_benchmark(&shelf, &BenchParams::default()).unwrap();
    let planar = run_benchmark(&shelf, &BenchParams::default().with_mode(Mode::NoDepth)).unwrap();
    assert!(planar.t1.overall.mean_error_cm.unwrap() > full.t1.overall.mean_error_cm.unwrap());
    assert_eq!(planar.variant, "no-depth");
    assert!(planar.t4.stage_medians.unwrap().client_grounding < full.t4.stage_medians.unwrap().client_grounding);
}

#[test]
fn reports_are_order_independent_and_stable() {
    let scenes = scenes();
    let params = BenchParams::default();
    let mut evals: Vec<_> = scenes.iter().map(|s| evaluate_scene(s, &params).unwrap()).collect();
    let forward = aggregate(&evals, Mode::Full).to_json();
    evals.reverse();
    assert_eq!(forward, aggregate(&evals, Mode::Full).to_json());
    let report = run_benchmark(&scenes, &params).unwrap();
    assert_eq!(report.to_json(), forward);
    assert_eq!(report.t1.overall.success_at_10, 100.0);
    assert_eq!(report.t2.overall.f1, 1.0);
    assert_eq!(report.t2.relation_type_accuracy, Some(1.0));
    assert_eq!(report.t3.overall.success_pct, Some(100.0));
    let back: grounded_world::metrics::BenchmarkReport = serde_json::from_str(&forward).unwrap();
    assert_eq!(back, report);
    assert!(report.to_table().contains("variant full"));
    assert!(matches!(run_benchmark(&[], &params), Err(MetricsError::NoScenes)));
}
