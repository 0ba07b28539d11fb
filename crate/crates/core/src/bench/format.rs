//! Versioned JSON scene files with a base64 little-endian f32 depth payload.

use std::fs;
use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use super::{BenchError, BenchQuery, BenchmarkScene, GtObject, RelationRule, SceneSpec};
use crate::geometry::{CameraIntrinsics, DepthFrame, PoseSE3, Vec3};
use crate::graph::RelationEdge;

pub const SCENE_FORMAT_VERSION: u32 = 1;
const DEPTH_ENCODING: &str = "base64-le-f32";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PoseFile {
    rotation: [f64; 9],
    translation: Vec3,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DepthFile {
    width: u32,
    height: u32,
    encoding: String,
    data: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneFile {
    version: u32,
    spec: SceneSpec,
    intrinsics: CameraIntrinsics,
    pose: PoseFile,
    depth: DepthFile,
    user_position: Vec3,
    objects: Vec<GtObject>,
    edges: Vec<RelationEdge>,
    rules: Vec<RelationRule>,
    queries: Vec<BenchQuery>,
}

fn encode_depth(frame: &DepthFrame) -> DepthFile {
    let mut bytes = Vec::with_capacity(frame.data().len() * 4);
    for d in frame.data() {
        bytes.extend_from_slice(&d.to_le_bytes());
    }
    DepthFile {
        width: frame.width(),
        height: frame.height(),
        encoding: DEPTH_ENCODING.to_string(),
        data: STANDARD.encode(bytes),
    }
}

fn decode_depth(file: DepthFile) -> Result<DepthFrame, BenchError> {
    if file.encoding != DEPTH_ENCODING {
        return Err(BenchError::Format(format!("unsupported depth encoding '{}'", file.encoding)));
    }
    let bytes = STANDARD
        .decode(file.data.as_bytes())
        .map_err(|e| BenchError::Format(format!("depth payload: {e}")))?;
    if bytes.len() % 4 != 0 {
        return Err(BenchError::Format(format!("depth payload of {} bytes is not a multiple of 4", bytes.len())));
    }
    let values: Vec<f32> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    DepthFrame::new(file.width, file.height, values).map_err(|e| BenchError::Format(e.to_string()))
}

pub fn scene_to_json(scene: &BenchmarkScene) -> String {
    let r = scene.pose.rotation;
    let file = SceneFile {
        version: SCENE_FORMAT_VERSION,
        spec: scene.spec.clone(),
        intrinsics: scene.intrinsics,
        pose: PoseFile {
            rotation: [r[0][0], r[0][1], r[0][2], r[1][0], r[1][1], r[1][2], r[2][0], r[2][1], r[2][2]],
            translation: scene.pose.translation,
        },
        depth: encode_depth(&scene.depth),
        user_position: scene.user_position,
        objects: scene.objects.clone(),
        edges: scene.edges.clone(),
        rules: scene.rules.clone(),
        queries: scene.queries.clone(),
    };
    let mut s = serde_json::to_string_pretty(&file).expect("scene serializes");
    s.push('\n');
    s
}

pub fn scene_from_json(text: &str) -> Result<BenchmarkScene, BenchError> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| BenchError::Format(e.to_string()))?;
    match value.get("version") {
        None => return Err(BenchError::Format("missing version".into())),
        Some(v) if v.as_u64() != Some(SCENE_FORMAT_VERSION as u64) => {
            return Err(BenchError::Format(format!("unsupported version {v}")))
        }
        _ => {}
    }
    let file: SceneFile = serde_json::from_value(value).map_err(|e| BenchError::Format(e.to_string()))?;
    let r = file.pose.rotation;
    let pose = PoseSE3::new([[r[0], r[1], r[2]], [r[3], r[4], r[5]], [r[6], r[7], r[8]]], file.pose.translation)?;
    let scene = BenchmarkScene {
        spec: file.spec,
        intrinsics: file.intrinsics,
        pose,
        depth: decode_depth(file.depth)?,
        user_position: file.user_position,
        objects: file.objects,
        edges: file.edges,
        rules: file.rules,
        queries: file.queries,
    };
    scene.validate()?;
    Ok(scene)
}

pub fn save_scene(scene: &BenchmarkScene, path: &Path) -> Result<(), BenchError> {
    fs::write(path, scene_to_json(scene)).map_err(|source| BenchError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_scene(path: &Path) -> Result<BenchmarkScene, BenchError> {
    let text = fs::read_to_string(path).map_err(|source| BenchError::Io {
        path: path.display().to_string(),
        source,
    })?;
    scene_from_json(&text).map_err(|e| match e {
        BenchError::Format(m) => BenchError::Format(format!("{}: {m}", path.display())),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn depth_payload_round_trips_bit_exact() {
        let values = vec![1.25f32, 0.0, f32::NAN, -3.5, f32::INFINITY, 1e-30];
        let frame = DepthFrame::new(3, 2, values.clone()).unwrap();
        let back = decode_depth(encode_depth(&frame)).unwrap();
        let bits = |v: &[f32]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(back.data()), bits(&values));
    }

    #[test]
    fn depth_length_mismatch_rejected() {
        let mut f = encode_depth(&DepthFrame::filled(3, 2, 1.0));
        f.width = 4;
        assert!(matches!(decode_depth(f), Err(BenchError::Format(_))));
    }
}
