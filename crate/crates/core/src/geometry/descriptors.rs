//! Per-token geometric descriptors (scale, depth, curvature) and the tree
//! context of each token (parent type, sibling index, role).

use serde::{Deserialize, Serialize};

use crate::cad::{serialize_with_origins, CadSequence, CadTree, NodeType, SketchPrimitive, TokenOrigin, TokenRole};

use super::GeometryError;

/// Arcs whose circumradius exceeds this (sketch units) are treated as lines.
pub const COLLINEAR_RADIUS: f64 = 1.0e3;

const ARC_STEP: f64 = std::f64::consts::PI / 64.0;

/// Sibling indices at or above this are clamped.
pub const MAX_SIBLING: usize = 31;

/// Number of parent classes: one per node type plus "no parent".
pub const PARENT_CLASSES: usize = 7;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GeomDescriptors {
    /// Local geometric scale.
    pub s: Vec<f64>,
    /// Hierarchy depth in `0..=5`.
    pub d: Vec<u8>,
    /// Unsigned curvature.
    pub r: Vec<f64>,
}

impl GeomDescriptors {
    /// All-zero descriptors of length `n`, used when no tree is available.
    pub fn zeros(n: usize) -> Self {
        GeomDescriptors { s: vec![0.0; n], d: vec![0; n], r: vec![0.0; n] }
    }

    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }
}

/// Where each token sits in the tree, as small categorical ids.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeContext {
    /// 0 for no parent, otherwise `1 + NodeType::index()` of the owner's parent.
    pub parent: Vec<u8>,
    /// Position of the owner among its siblings, clamped to [`MAX_SIBLING`].
    pub sibling: Vec<u8>,
    pub role: Vec<u8>,
}

impl TreeContext {
    pub fn empty(n: usize) -> Self {
        TreeContext { parent: vec![0; n], sibling: vec![0; n], role: vec![TokenRole::Pad as u8; n] }
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }
}

fn effective_radius(c: &SketchPrimitive) -> Option<f64> {
    match c {
        SketchPrimitive::Line { .. } => None,
        SketchPrimitive::Circle { .. } => c.arc_circle().map(|(_, r)| r),
        SketchPrimitive::Arc { .. } => c.arc_circle().map(|(_, r)| r).filter(|&r| r <= COLLINEAR_RADIUS),
    }
}

fn curve_scale_and_curvature(c: &SketchPrimitive) -> (f64, f64) {
    match effective_radius(c) {
        Some(r) => (c.length(), 1.0 / r),
        None => ((c.end().coords()[0] - c.start().coords()[0]).hypot(c.end().coords()[1] - c.start().coords()[1]), 0.0),
    }
}

#[derive(Clone, Copy)]
struct Bbox2 {
    lo: [f64; 2],
    hi: [f64; 2],
}

impl Bbox2 {
    const EMPTY: Bbox2 = Bbox2 { lo: [f64::INFINITY; 2], hi: [f64::NEG_INFINITY; 2] };

    fn add(&mut self, p: [f64; 2]) {
        for a in 0..2 {
            self.lo[a] = self.lo[a].min(p[a]);
            self.hi[a] = self.hi[a].max(p[a]);
        }
    }

    fn merge(&mut self, o: Bbox2) {
        if o.lo[0] <= o.hi[0] {
            self.add(o.lo);
            self.add(o.hi);
        }
    }

    fn extent(&self) -> [f64; 2] {
        if self.lo[0] > self.hi[0] {
            return [0.0; 2];
        }
        [self.hi[0] - self.lo[0], self.hi[1] - self.lo[1]]
    }

    fn diagonal(&self) -> f64 {
        let [w, h] = self.extent();
        w.hypot(h)
    }
}

fn curve_bbox(c: &SketchPrimitive) -> Bbox2 {
    let mut b = Bbox2::EMPTY;
    match c {
        SketchPrimitive::Circle { .. } => {
            let (ctr, r) = c.arc_circle().expect("circle");
            b.add([ctr[0] - r, ctr[1] - r]);
            b.add([ctr[0] + r, ctr[1] + r]);
        }
        _ => c.polyline(ARC_STEP).into_iter().for_each(|p| b.add(p)),
    }
    b
}

/// Bounding box of everything under `node`.
fn node_bbox(tree: &CadTree, node: usize) -> Bbox2 {
    if let Some(c) = tree.curve(node) {
        return curve_bbox(c);
    }
    let mut b = Bbox2::EMPTY;
    for &ch in tree.children_of(node) {
        b.merge(node_bbox(tree, ch));
    }
    b
}

fn depth_of_role(role: TokenRole) -> u8 {
    use TokenRole::*;
    match role {
        Pad | Cls | End | EndSolid => 0,
        EndSketch | Angle | Translation | Scale | Depth | Beta | EndExtrusion => 1,
        EndFace => 2,
        EndLoop => 3,
        EndLine | EndArc | EndCircle => 4,
        LinePoint | ArcPoint | CircleCenter | CirclePerimeter => 5,
    }
}

/// Descriptors for tokens with known origins. `origins` must be aligned with
/// the sequence the tree serializes to.
pub fn descriptors_from_origins(tree: &CadTree, origins: &[TokenOrigin]) -> Result<GeomDescriptors, GeometryError> {
    let steps = tree.steps()?;
    let mut out = GeomDescriptors::zeros(origins.len());
    for (k, o) in origins.iter().enumerate() {
        out.d[k] = depth_of_role(o.role);
        let (s, r) = match o.role {
            TokenRole::Pad | TokenRole::Cls | TokenRole::End | TokenRole::EndSolid => (0.0, 0.0),
            TokenRole::EndSketch | TokenRole::EndFace | TokenRole::EndLoop => (node_bbox(tree, o.node).diagonal(), 0.0),
            TokenRole::Angle
            | TokenRole::Translation
            | TokenRole::Scale
            | TokenRole::Depth
            | TokenRole::Beta
            | TokenRole::EndExtrusion => {
                let step = steps
                    .iter()
                    .find(|s| s.extrusion == o.node)
                    .ok_or_else(|| GeometryError::Mismatch(format!("token {k} is not owned by an extrusion")))?;
                let e = step.params.dequantize();
                let [w, h] = node_bbox(tree, step.sketch).extent();
                let depth = e.depth_plus + e.depth_minus;
                (((e.scale * w).powi(2) + (e.scale * h).powi(2) + depth * depth).sqrt(), 0.0)
            }
            _ => {
                let c = tree
                    .curve(o.node)
                    .ok_or_else(|| GeometryError::Mismatch(format!("token {k} is not owned by a curve")))?;
                curve_scale_and_curvature(c)
            }
        };
        out.s[k] = s;
        out.r[k] = r;
    }
    Ok(out)
}

/// Tree context for tokens with known origins.
pub fn tree_context(tree: &CadTree, origins: &[TokenOrigin]) -> TreeContext {
    let mut ctx = TreeContext::empty(origins.len());
    for (k, o) in origins.iter().enumerate() {
        ctx.role[k] = o.role.index() as u8;
        if o.role == TokenRole::Pad {
            continue;
        }
        let node = tree.node(o.node);
        if let Some(p) = node.parent {
            ctx.parent[k] = 1 + tree.node(p).node_type.index() as u8;
            let idx = tree.children_of(p).iter().position(|&c| c == o.node).unwrap_or(0);
            ctx.sibling[k] = idx.min(MAX_SIBLING) as u8;
        }
    }
    ctx
}

fn origins_for(tree: &CadTree, seq: &CadSequence) -> Result<Vec<TokenOrigin>, GeometryError> {
    let (ser, origins) = serialize_with_origins(tree, seq.len())?;
    if ser.tokens != seq.tokens {
        return Err(GeometryError::Mismatch("sequence is not the serialization of the tree".into()));
    }
    Ok(origins)
}

/// Scale, depth and curvature for every token of `seq`, which must be the
/// serialization of `tree`.
pub fn descriptors(tree: &CadTree, seq: &CadSequence) -> Result<GeomDescriptors, GeometryError> {
    descriptors_from_origins(tree, &origins_for(tree, seq)?)
}

/// Descriptors and tree context together, serializing once.
pub fn token_features(tree: &CadTree, seq: &CadSequence) -> Result<(GeomDescriptors, TreeContext), GeometryError> {
    let origins = origins_for(tree, seq)?;
    Ok((descriptors_from_origins(tree, &origins)?, tree_context(tree, &origins)))
}

impl NodeType {
    /// Convenience for decoding a parent class id back to a node type.
    pub fn from_parent_class(c: u8) -> Option<NodeType> {
        (c as usize).checked_sub(1).and_then(|i| NodeType::ALL.get(i).copied())
    }
}
