//! Depth-grounded 3D scene graphs.
//!
//! Detections are lifted into metric anchors by raycasting against a depth
//! map, related by geometric predicates fused with semantic proposals, and
//! queried through a coordinator that reuses the world model when it is
//! fresh enough. A seeded synthetic benchmark and the full metric suite live
//! alongside.

pub mod geometry;
pub mod lifting;
pub mod graph;
pub mod relations;
pub mod semantic;
pub mod query;
pub mod bench;
pub mod metrics;
