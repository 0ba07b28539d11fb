//! Reference relation inference, written as a literal loop over every ordered
//! pair and every relation type. It shares no code with the production
//! implementation and is meant only as a test oracle.

/// Relation names in tie-break order.
pub const RELATIONS: [&str; 15] = [
    "on",
    "under",
    "next-to",
    "behind",
    "within-reach",
    "closest-to",
    "blocking",
    "sequential",
    "causal",
    "structural",
    "functional",
    "semantic",
    "dependence",
    "interaction",
    "referential",
];

const SPATIAL_COUNT: usize = 7;

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: u64,
    pub anchor: [f64; 3],
    pub min: [f64; 3],
    pub max: [f64; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Proposal {
    pub src: u64,
    pub dst: u64,
    pub relation: &'static str,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub alpha: f64,
    pub tau: f64,
    pub reach_radius: f64,
    pub eps_z: f64,
    pub eps_h: f64,
    pub eps_depth: f64,
    pub eps_support: f64,
    pub footprint_overlap_min: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub src: u64,
    pub dst: u64,
    pub relation: &'static str,
    pub confidence: f64,
}

fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    (dx * dx + dy * dy + dz * dz).sqrt()
}

fn on(a: &Node, b: &Node, p: &Params) -> bool {
    let gap = a.min[1] - b.max[1];
    if gap.abs() > p.eps_z {
        return false;
    }
    let dx = a.anchor[0] - b.anchor[0];
    let dz = a.anchor[2] - b.anchor[2];
    if (dx * dx + dz * dz).sqrt() > p.eps_h {
        return false;
    }
    let lo_x = if a.min[0] > b.min[0] - p.eps_support { a.min[0] } else { b.min[0] - p.eps_support };
    let hi_x = if a.max[0] < b.max[0] + p.eps_support { a.max[0] } else { b.max[0] + p.eps_support };
    let lo_z = if a.min[2] > b.min[2] - p.eps_support { a.min[2] } else { b.min[2] - p.eps_support };
    let hi_z = if a.max[2] < b.max[2] + p.eps_support { a.max[2] } else { b.max[2] + p.eps_support };
    let ox = if hi_x > lo_x { hi_x - lo_x } else { 0.0 };
    let oz = if hi_z > lo_z { hi_z - lo_z } else { 0.0 };
    let area = (a.max[0] - a.min[0]) * (a.max[2] - a.min[2]);
    ox * oz >= p.footprint_overlap_min * area
}

/// Does the segment from `a` to `b`, excluding its endpoints, touch the box?
fn segment_hits(n: &Node, a: [f64; 3], b: [f64; 3]) -> bool {
    let mut enter = f64::NEG_INFINITY;
    let mut exit = f64::INFINITY;
    for k in 0..3 {
        let d = b[k] - a[k];
        if d.abs() < 1e-15 {
            if a[k] < n.min[k] || a[k] > n.max[k] {
                return false;
            }
        } else {
            let t1 = (n.min[k] - a[k]) / d;
            let t2 = (n.max[k] - a[k]) / d;
            enter = enter.max(t1.min(t2));
            exit = exit.min(t1.max(t2));
        }
    }
    enter <= exit && enter < 1.0 && exit > 0.0
}

fn sigmoid(alpha: f64, s_llm: f64, s_geo: f64) -> f64 {
    let x = alpha * s_llm + (1.0 - alpha) * s_geo;
    1.0 / (1.0 + (-x).exp())
}

/// Hybrid relation inference over `nodes`. Errors on proposals that refer to
/// unknown nodes or to a single node.
pub fn infer(
    nodes: &[Node],
    user: [f64; 3],
    view_forward: [f64; 3],
    proposals: &[Proposal],
    p: &Params,
) -> Result<Vec<Edge>, String> {
    for pr in proposals {
        if pr.src == pr.dst {
            return Err(format!("self proposal on {}", pr.src));
        }
        let known = |id: u64| nodes.iter().any(|n| n.id == id);
        if !known(pr.src) || !known(pr.dst) {
            return Err(format!("dangling proposal {}->{}", pr.src, pr.dst));
        }
    }
    let mut edges: Vec<Edge> = Vec::new();
    for i in nodes {
        for j in nodes {
            if i.id == j.id {
                continue;
            }
            let mut geo = [0.0f64; 15];
            if on(i, j, p) {
                geo[0] = 1.0;
            }
            if on(j, i, p) {
                geo[1] = 1.0;
            }
            if dist(i.anchor, j.anchor) <= p.eps_h && geo[0] == 0.0 && geo[1] == 0.0 {
                geo[2] = 1.0;
            }
            let depth = |q: [f64; 3]| {
                (q[0] - user[0]) * view_forward[0] + (q[1] - user[1]) * view_forward[1] + (q[2] - user[2]) * view_forward[2]
            };
            if depth(i.anchor) > depth(j.anchor) + p.eps_depth {
                geo[3] = 1.0;
            }
            if dist(i.anchor, user) <= p.reach_radius {
                geo[4] = 1.0;
            }
            // i must be the nearest node to j, with lower ids winning ties.
            let dij = dist(i.anchor, j.anchor);
            let mut nearest = true;
            for k in nodes {
                if k.id == j.id || k.id == i.id {
                    continue;
                }
                let dkj = dist(k.anchor, j.anchor);
                if dkj < dij || (dkj == dij && k.id < i.id) {
                    nearest = false;
                }
            }
            if nearest {
                geo[5] = 1.0;
            }
            if segment_hits(i, user, j.anchor) {
                geo[6] = 1.0;
            }
            debug_assert!(geo[SPATIAL_COUNT..].iter().all(|v| *v == 0.0));

            let mut best_rel = 0;
            let mut best = f64::NEG_INFINITY;
            for (r, name) in RELATIONS.iter().enumerate() {
                let mut s_llm = 0.0;
                for pr in proposals {
                    if pr.src == i.id && pr.dst == j.id && pr.relation == *name {
                        let s = pr.score.clamp(0.0, 1.0);
                        if s > s_llm {
                            s_llm = s;
                        }
                    }
                }
                let g = sigmoid(p.alpha, s_llm, geo[r]);
                if g > best {
                    best = g;
                    best_rel = r;
                }
            }
            if best >= p.tau {
                edges.push(Edge {
                    src: i.id,
                    dst: j.id,
                    relation: RELATIONS[best_rel],
                    confidence: best,
                });
            }
        }
    }
    let base = edges.clone();
    for e in &base {
        if e.relation == "structural" || e.relation == "interaction" {
            let reversed_present = base.iter().any(|f| f.src == e.dst && f.dst == e.src);
            if !reversed_present {
                edges.push(Edge {
                    src: e.dst,
                    dst: e.src,
                    relation: e.relation,
                    confidence: e.confidence,
                });
            }
        }
    }
    edges.sort_by(|a, b| (a.src, a.dst).cmp(&(b.src, b.dst)));
    Ok(edges)
}
