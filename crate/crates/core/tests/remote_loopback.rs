use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::thread;
use std::time::Duration;

use grounded_world::bench::{generate_scene, BenchmarkScene, Context, Difficulty, SceneSpec};
use grounded_world::metrics::{evaluate_scene_with, BenchParams};
use grounded_world::query::{CoordinatorPolicy, Engine, QueryError, SceneInputs, Stage, StageDelays, Tools};
use grounded_world::semantic::{
    wire::serve, Detector, DetectorRequest, GtTools, LabelProposer, ProposerRequest, RelationProposer, RemoteClient,
    SemanticError,
};

fn scene() -> BenchmarkScene {
    generate_scene(&SceneSpec::new(Context::Desk, Difficulty::Cluttered, 31).with_shelf(true)).unwrap()
}

fn start_server(tools: GtTools) -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    thread::spawn(move || serve(listener, &tools, None));
    format!("http://{addr}/")
}

fn drain_request(stream: &mut TcpStream) {
    let mut reader = BufReader::new(stream);
    let mut length = 0usize;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line).unwrap_or(0) == 0 || line == "\r\n" {
            break;
        }
        if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
            length = v.trim().parse().unwrap_or(0);
        }
    }
    let mut body = vec![0u8; length];
    let _ = reader.read_exact(&mut body);
}

/// Serves one canned HTTP response per connection.
fn canned(status: &'static str, body: &'static str) -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    thread::spawn(move || {
        for stream in listener.incoming() {
            let mut stream = stream.unwrap();
            drain_request(&mut stream);
            let _ = write!(
                stream,
                "HTTP/1.1 {status}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            );
        }
    });
    format!("http://{addr}/")
}

fn label_request() -> ProposerRequest {
    ProposerRequest {
        query: String::new(),
        frame_id: "f".into(),
    }
}

#[test]
fn loopback_answers_match_in_process_tools() {
    let scene = scene();
    let gt = GtTools::from_scene(&scene);
    let remote = RemoteClient::new(start_server(gt.clone()), 5.0).unwrap();

    for query in ["", "LOCATE mug", "MEASURE DIST lamp mug"] {
        let req = ProposerRequest {
            query: query.into(),
            frame_id: "f".into(),
        };
        let a = gt.proposer.propose_labels(&req).unwrap().value;
        let b = remote.propose_labels(&req).unwrap().value;
        assert_eq!(a.labels, b.labels, "{query}");
    }
    let req = DetectorRequest {
        labels: scene.labels(),
        frame_id: "f".into(),
        confidence_threshold: 0.35,
    };
    assert_eq!(gt.detector.detect(&req).unwrap().value, remote.detect(&req).unwrap().value);

    let params = BenchParams::default();
    let mut engine = Engine::new(params.policy, params.relation, params.lift, StageDelays::zero());
    let id = scene.scene_id();
    let inputs = SceneInputs {
        frame_id: &id,
        depth: &scene.depth,
        intrinsics: &scene.intrinsics,
        pose: &scene.pose,
        user_position: scene.user_position,
        seed: scene.spec.seed,
    };
    let tools = Tools {
        proposer: &gt.proposer,
        detector: &gt.detector,
        relations: &gt.relations,
    };
    engine.ground_scene(&inputs, &tools).unwrap();
    let mut a = gt.relations.propose_relations(&engine.world, "").unwrap().value;
    let mut b = remote.propose_relations(&engine.world, "").unwrap().value;
    let key = |p: &grounded_world::relations::SemanticProposal| (p.src, p.dst, p.relation);
    a.sort_by_key(key);
    b.sort_by_key(key);
    assert!(!a.is_empty());
    assert_eq!(a, b);
}

#[test]
fn pipeline_results_do_not_depend_on_tool_transport() {
    let scene = scene();
    let gt = GtTools::from_scene(&scene);
    let remote = RemoteClient::new(start_server(gt.clone()), 5.0).unwrap();
    let params = BenchParams::default();
    let local = Tools {
        proposer: &gt.proposer,
        detector: &gt.detector,
        relations: &gt.relations,
    };
    let over_http = Tools {
        proposer: &remote,
        detector: &remote,
        relations: &remote,
    };
    let a = evaluate_scene_with(&scene, &params, &local).unwrap();
    let b = evaluate_scene_with(&scene, &params, &over_http).unwrap();
    assert_eq!(a.objects, b.objects);
    assert_eq!(a.predicted_edges, b.predicted_edges);
    assert_eq!((a.spatial, a.high_level), (b.spatial, b.high_level));
    let answers = |e: &grounded_world::metrics::SceneEval| {
        e.queries.iter().map(|q| (q.answer.clone(), q.success)).collect::<Vec<_>>()
    };
    assert_eq!(answers(&a), answers(&b));
}

#[test]
fn unresponsive_endpoint_times_out() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    thread::spawn(move || {
        let held: Vec<TcpStream> = listener.incoming().take(1).filter_map(Result::ok).collect();
        thread::sleep(Duration::from_secs(10));
        drop(held);
    });
    let client = RemoteClient::new(format!("http://{addr}/"), 0.3).unwrap();
    match client.propose_labels(&label_request()) {
        Err(SemanticError::ProposerUnavailable { elapsed_s, .. }) => {
            assert!((0.25..5.0).contains(&elapsed_s), "{elapsed_s}");
        }
        other => panic!("expected timeout, got {other:?}"),
    }
}

#[test]
fn refused_connection_is_unavailable() {
    let addr = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap();
    let client = RemoteClient::new(format!("http://{addr}/"), 1.0).unwrap();
    assert!(matches!(
        client.propose_labels(&label_request()),
        Err(SemanticError::ProposerUnavailable { .. })
    ));
}

#[test]
fn malformed_json_is_a_protocol_error() {
    let client = RemoteClient::new(canned("200 OK", "{\"labels\": [1, "), 2.0).unwrap();
    assert!(matches!(client.propose_labels(&label_request()), Err(SemanticError::Protocol(_))));
    let client = RemoteClient::new(canned("200 OK", "{\"unexpected\": true}"), 2.0).unwrap();
    assert!(matches!(client.propose_labels(&label_request()), Err(SemanticError::Protocol(_))));
}

#[test]
fn server_error_status_is_unavailable() {
    let client = RemoteClient::new(canned("503 Service Unavailable", "{}"), 2.0).unwrap();
    assert!(matches!(
        client.propose_labels(&label_request()),
        Err(SemanticError::ProposerUnavailable { .. })
    ));
}

#[test]
fn engine_reports_failing_stage() {
    let scene = scene();
    let client = RemoteClient::new(canned("500 Internal Server Error", "{}"), 2.0).unwrap();
    let mut engine = Engine::new(
        CoordinatorPolicy::default(),
        Default::default(),
        Default::default(),
        StageDelays::default(),
    );
    let id = scene.scene_id();
    let inputs = SceneInputs {
        frame_id: &id,
        depth: &scene.depth,
        intrinsics: &scene.intrinsics,
        pose: &scene.pose,
        user_position: scene.user_position,
        seed: scene.spec.seed,
    };
    let tools = Tools {
        proposer: &client,
        detector: &client,
        relations: &client,
    };
    match engine.run_text("LOCATE mug", &inputs, &tools) {
        Err(QueryError::Failed { stage, .. }) => assert_eq!(stage, Stage::Mllm),
        other => panic!("{other:?}"),
    }
    assert!(RemoteClient::new("ftp://example", 1.0).is_err());
    assert!(RemoteClient::new("http://127.0.0.1:1/", 0.0).is_err());
}
