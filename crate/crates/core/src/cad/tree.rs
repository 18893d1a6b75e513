//! Hierarchical solid → sketch → face → loop → curve representation.

use serde::{Deserialize, Serialize};

use super::vocab::{norm, BooleanOp, TokenId};
use super::CadError;

/// Quantized 2D sketch point.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "[TokenId; 2]", into = "[TokenId; 2]")]
pub struct Point2 {
    pub x: TokenId,
    pub y: TokenId,
}

impl From<[TokenId; 2]> for Point2 {
    fn from([x, y]: [TokenId; 2]) -> Self {
        Point2 { x, y }
    }
}

impl From<Point2> for [TokenId; 2] {
    fn from(p: Point2) -> Self {
        [p.x, p.y]
    }
}

impl Point2 {
    pub fn new(x: TokenId, y: TokenId) -> Self {
        Point2 { x, y }
    }

    /// Quantizes a point given in normalized sketch coordinates (`[-1, 1]²`).
    pub fn from_coords(x: f64, y: f64) -> Result<Self, CadError> {
        Ok(Point2 { x: norm::coord_to_token(x)?, y: norm::coord_to_token(y)? })
    }

    /// Dequantized sketch coordinates.
    pub fn coords(self) -> [f64; 2] {
        [norm::coord_of(self.x), norm::coord_of(self.y)]
    }

    fn grid(self) -> [i64; 2] {
        [i64::from(self.x.get()), i64::from(self.y.get())]
    }
}

/// Twice the signed area of the triangle `a, b, c` in quantized units.
fn cross(a: Point2, b: Point2, c: Point2) -> i64 {
    let (a, b, c) = (a.grid(), b.grid(), c.grid());
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PrimitiveKind {
    Line,
    Arc,
    Circle,
}

/// A sketch curve.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum SketchPrimitive {
    Line { start: Point2, end: Point2 },
    Arc { start: Point2, mid: Point2, end: Point2 },
    Circle { center: Point2, perimeter: Point2 },
}

impl SketchPrimitive {
    pub fn line(start: Point2, end: Point2) -> Result<Self, CadError> {
        let p = SketchPrimitive::Line { start, end };
        p.check()?;
        Ok(p)
    }

    pub fn arc(start: Point2, mid: Point2, end: Point2) -> Result<Self, CadError> {
        let p = SketchPrimitive::Arc { start, mid, end };
        p.check()?;
        Ok(p)
    }

    pub fn circle(center: Point2, perimeter: Point2) -> Result<Self, CadError> {
        let p = SketchPrimitive::Circle { center, perimeter };
        p.check()?;
        Ok(p)
    }

    /// Checks the primitive's own invariants.
    pub fn check(&self) -> Result<(), CadError> {
        match *self {
            SketchPrimitive::Line { start, end } if start == end => {
                Err(CadError::Invalid("line start equals end".into()))
            }
            SketchPrimitive::Arc { start, mid, end } if cross(start, mid, end) == 0 => {
                Err(CadError::Invalid("arc points are collinear; encode as a line".into()))
            }
            SketchPrimitive::Circle { center, perimeter } if center == perimeter => {
                Err(CadError::Invalid("circle perimeter point equals its center".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn kind(&self) -> PrimitiveKind {
        match self {
            SketchPrimitive::Line { .. } => PrimitiveKind::Line,
            SketchPrimitive::Arc { .. } => PrimitiveKind::Arc,
            SketchPrimitive::Circle { .. } => PrimitiveKind::Circle,
        }
    }

    /// Points in token order.
    pub fn points(&self) -> Vec<Point2> {
        match *self {
            SketchPrimitive::Line { start, end } => vec![start, end],
            SketchPrimitive::Arc { start, mid, end } => vec![start, mid, end],
            SketchPrimitive::Circle { center, perimeter } => vec![center, perimeter],
        }
    }

    /// Start point of the curve along its loop; circles start and end on the perimeter point.
    pub fn start(&self) -> Point2 {
        match *self {
            SketchPrimitive::Line { start, .. } | SketchPrimitive::Arc { start, .. } => start,
            SketchPrimitive::Circle { perimeter, .. } => perimeter,
        }
    }

    pub fn end(&self) -> Point2 {
        match *self {
            SketchPrimitive::Line { end, .. } | SketchPrimitive::Arc { end, .. } => end,
            SketchPrimitive::Circle { perimeter, .. } => perimeter,
        }
    }

    /// Circle through the arc's three points (center, radius) in sketch units.
    pub fn arc_circle(&self) -> Option<([f64; 2], f64)> {
        match *self {
            SketchPrimitive::Arc { start, mid, end } => circumcircle(start.coords(), mid.coords(), end.coords()),
            SketchPrimitive::Circle { center, perimeter } => {
                let (c, p) = (center.coords(), perimeter.coords());
                Some((c, (p[0] - c[0]).hypot(p[1] - c[1])))
            }
            SketchPrimitive::Line { .. } => None,
        }
    }

    /// Signed curvature `α = ±1/R` and the flip flag `f` (true when the arc
    /// turns clockwise), derived from the start/mid/end encoding.
    pub fn arc_curvature(&self) -> Option<(f64, bool)> {
        match *self {
            SketchPrimitive::Arc { start, mid, end } => {
                let (_, r) = self.arc_circle()?;
                let clockwise = cross(start, mid, end) < 0;
                Some((if clockwise { -1.0 / r } else { 1.0 / r }, clockwise))
            }
            _ => None,
        }
    }

    /// Curve length in sketch units.
    pub fn length(&self) -> f64 {
        match *self {
            SketchPrimitive::Line { start, end } => dist(start.coords(), end.coords()),
            SketchPrimitive::Circle { .. } => {
                let (_, r) = self.arc_circle().expect("circle");
                2.0 * std::f64::consts::PI * r
            }
            SketchPrimitive::Arc { start, end, .. } => match self.arc_circle() {
                Some((_, r)) => r * self.arc_sweep().expect("arc").abs(),
                None => dist(start.coords(), end.coords()),
            },
        }
    }

    /// Signed sweep angle of an arc from start through mid to end.
    pub fn arc_sweep(&self) -> Option<f64> {
        let SketchPrimitive::Arc { start, mid, end } = *self else {
            return None;
        };
        let (c, _) = self.arc_circle()?;
        let ang = |p: [f64; 2]| (p[1] - c[1]).atan2(p[0] - c[0]);
        let tau = 2.0 * std::f64::consts::PI;
        let a0 = ang(start.coords());
        let sweep_mid = (ang(mid.coords()) - a0).rem_euclid(tau);
        let sweep_end = (ang(end.coords()) - a0).rem_euclid(tau);
        Some(if sweep_mid <= sweep_end { sweep_end } else { sweep_end - tau })
    }

    /// Polyline approximation (sketch units), including both end points.
    pub fn polyline(&self, max_step: f64) -> Vec<[f64; 2]> {
        match *self {
            SketchPrimitive::Line { start, end } => vec![start.coords(), end.coords()],
            SketchPrimitive::Arc { start, end, .. } => {
                let (Some((c, r)), Some(sweep)) = (self.arc_circle(), self.arc_sweep()) else {
                    return vec![start.coords(), end.coords()];
                };
                let s = start.coords();
                let a0 = (s[1] - c[1]).atan2(s[0] - c[0]);
                let n = ((sweep.abs() / max_step).ceil() as usize).max(2);
                let mut pts: Vec<[f64; 2]> = (0..n)
                    .map(|i| {
                        let a = a0 + sweep * i as f64 / n as f64;
                        [c[0] + r * a.cos(), c[1] + r * a.sin()]
                    })
                    .collect();
                pts[0] = s;
                pts.push(end.coords());
                pts
            }
            SketchPrimitive::Circle { .. } => {
                let (c, r) = self.arc_circle().expect("circle");
                let n = ((2.0 * std::f64::consts::PI / max_step).ceil() as usize).max(8);
                let mut pts: Vec<[f64; 2]> = (0..n)
                    .map(|i| {
                        let a = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
                        [c[0] + r * a.cos(), c[1] + r * a.sin()]
                    })
                    .collect();
                pts.push(pts[0]);
                pts
            }
        }
    }
}

pub(crate) fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

pub(crate) fn circumcircle(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> Option<([f64; 2], f64)> {
    let d = 2.0 * (a[0] * (b[1] - c[1]) + b[0] * (c[1] - a[1]) + c[0] * (a[1] - b[1]));
    if d.abs() < 1e-300 {
        return None;
    }
    let (a2, b2, c2) = (a[0] * a[0] + a[1] * a[1], b[0] * b[0] + b[1] * b[1], c[0] * c[0] + c[1] * c[1]);
    let ux = (a2 * (b[1] - c[1]) + b2 * (c[1] - a[1]) + c2 * (a[1] - b[1])) / d;
    let uy = (a2 * (c[0] - b[0]) + b2 * (a[0] - c[0]) + c2 * (b[0] - a[0])) / d;
    let center = [ux, uy];
    Some((center, dist(center, a)))
}

/// Extrusion parameters, all quantized.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ExtrusionParams {
    pub theta: TokenId,
    pub phi: TokenId,
    pub gamma: TokenId,
    pub tau_x: TokenId,
    pub tau_y: TokenId,
    pub tau_z: TokenId,
    pub sigma: TokenId,
    pub d_plus: TokenId,
    pub d_minus: TokenId,
    pub beta: BooleanOp,
}

/// Extrusion parameters in model units, before quantization.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Extrusion {
    /// Roll, pitch, yaw in radians.
    pub angles: [f64; 3],
    pub translation: [f64; 3],
    pub scale: f64,
    pub depth_plus: f64,
    pub depth_minus: f64,
    pub op: BooleanOp,
}

impl Extrusion {
    /// Axis-aligned extrusion on the XY plane through the origin.
    pub fn along_z(depth_plus: f64, depth_minus: f64, op: BooleanOp) -> Self {
        Extrusion {
            angles: [0.0; 3],
            translation: [0.0; 3],
            scale: 1.0,
            depth_plus,
            depth_minus,
            op,
        }
    }
}

impl ExtrusionParams {
    pub fn quantize(e: &Extrusion) -> Result<Self, CadError> {
        let p = ExtrusionParams {
            theta: norm::angle_to_token(e.angles[0])?,
            phi: norm::angle_to_token(e.angles[1])?,
            gamma: norm::angle_to_token(e.angles[2])?,
            tau_x: norm::coord_to_token(e.translation[0])?,
            tau_y: norm::coord_to_token(e.translation[1])?,
            tau_z: norm::coord_to_token(e.translation[2])?,
            sigma: norm::scale_to_token(e.scale)?,
            d_plus: norm::depth_to_token(e.depth_plus)?,
            d_minus: norm::depth_to_token(e.depth_minus)?,
            beta: e.op,
        };
        p.check()?;
        Ok(p)
    }

    pub fn dequantize(&self) -> Extrusion {
        Extrusion {
            angles: [norm::angle_of(self.theta), norm::angle_of(self.phi), norm::angle_of(self.gamma)],
            translation: [norm::coord_of(self.tau_x), norm::coord_of(self.tau_y), norm::coord_of(self.tau_z)],
            scale: norm::scale_of(self.sigma),
            depth_plus: norm::depth_of(self.d_plus),
            depth_minus: norm::depth_of(self.d_minus),
            op: self.beta,
        }
    }

    /// Scalar value tokens in sequence order (β last).
    pub fn scalars(&self) -> [TokenId; 10] {
        [
            self.theta,
            self.phi,
            self.gamma,
            self.tau_x,
            self.tau_y,
            self.tau_z,
            self.sigma,
            self.d_plus,
            self.d_minus,
            self.beta.token(),
        ]
    }

    pub fn from_scalars(s: [TokenId; 10]) -> Result<Self, CadError> {
        let beta = BooleanOp::from_token(s[9])
            .ok_or_else(|| CadError::Invalid(format!("token {} is not a boolean-type value", s[9])))?;
        let p = ExtrusionParams {
            theta: s[0],
            phi: s[1],
            gamma: s[2],
            tau_x: s[3],
            tau_y: s[4],
            tau_z: s[5],
            sigma: s[6],
            d_plus: s[7],
            d_minus: s[8],
            beta,
        };
        p.check()?;
        Ok(p)
    }

    pub fn check(&self) -> Result<(), CadError> {
        let fields = &self.scalars()[..9];
        if let Some(t) = fields.iter().find(|t| !t.is_value()) {
            return Err(CadError::Invalid(format!("extrusion field token {t} is not a value token")));
        }
        if norm::scale_of(self.sigma) <= 0.0 {
            return Err(CadError::Invalid("sketch scale dequantizes to zero".into()));
        }
        if norm::depth_of(self.d_plus) <= 0.0 && norm::depth_of(self.d_minus) <= 0.0 {
            return Err(CadError::Invalid("extrusion has zero depth in both directions".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NodeType {
    Solid,
    Sketch,
    Face,
    Loop,
    Curve,
    Extrusion,
}

impl NodeType {
    pub const ALL: [NodeType; 6] =
        [NodeType::Solid, NodeType::Sketch, NodeType::Face, NodeType::Loop, NodeType::Curve, NodeType::Extrusion];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Fixed hierarchy depth: Solid 0, Sketch/Extrusion 1, Face 2, Loop 3, Curve 4.
    pub fn depth(self) -> u8 {
        match self {
            NodeType::Solid => 0,
            NodeType::Sketch | NodeType::Extrusion => 1,
            NodeType::Face => 2,
            NodeType::Loop => 3,
            NodeType::Curve => 4,
        }
    }

    fn allowed_children(self) -> &'static [NodeType] {
        match self {
            NodeType::Solid => &[NodeType::Sketch, NodeType::Extrusion],
            NodeType::Sketch => &[NodeType::Face],
            NodeType::Face => &[NodeType::Loop],
            NodeType::Loop => &[NodeType::Curve],
            NodeType::Curve | NodeType::Extrusion => &[],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value")]
pub enum NodeParams {
    Empty,
    Curve(SketchPrimitive),
    Extrusion(ExtrusionParams),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeNode {
    pub node_type: NodeType,
    pub params: NodeParams,
    pub children: Vec<usize>,
    pub parent: Option<usize>,
}

/// A CAD model as a tree rooted at a single solid.
///
/// Nodes built through [`TreeBuilder`] or [`crate::cad::deserialize_sequence`]
/// are stored in depth-first pre-order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CadTree {
    pub nodes: Vec<TreeNode>,
    pub root: usize,
}

/// A sketch–extrusion pair borrowed from a tree.
#[derive(Clone, Debug)]
pub struct DesignStep<'a> {
    pub sketch: usize,
    pub extrusion: usize,
    pub params: &'a ExtrusionParams,
}

impl CadTree {
    pub fn node(&self, i: usize) -> &TreeNode {
        &self.nodes[i]
    }

    pub fn children_of(&self, i: usize) -> &[usize] {
        &self.nodes[i].children
    }

    pub fn curve(&self, i: usize) -> Option<&SketchPrimitive> {
        match &self.nodes[i].params {
            NodeParams::Curve(c) => Some(c),
            _ => None,
        }
    }

    pub fn extrusion(&self, i: usize) -> Option<&ExtrusionParams> {
        match &self.nodes[i].params {
            NodeParams::Extrusion(e) => Some(e),
            _ => None,
        }
    }

    /// Pairs each sketch with the extrusion that follows it.
    pub fn steps(&self) -> Result<Vec<DesignStep<'_>>, CadError> {
        let kids = self.children_of(self.root);
        if kids.is_empty() {
            return Err(CadError::Tree { node: self.root, reason: "solid has no sketch or extrusion".into() });
        }
        let mut steps = Vec::with_capacity(kids.len() / 2);
        let mut it = kids.iter().copied();
        while let Some(s) = it.next() {
            if self.nodes[s].node_type != NodeType::Sketch {
                return Err(CadError::Tree { node: s, reason: "extrusion without a preceding sketch".into() });
            }
            let e = it.next().ok_or_else(|| CadError::Tree {
                node: s,
                reason: "sketch is missing its extrusion".into(),
            })?;
            if self.nodes[e].node_type != NodeType::Extrusion {
                return Err(CadError::Tree { node: s, reason: "sketch is missing its extrusion".into() });
            }
            let params = self.extrusion(e).ok_or_else(|| CadError::Tree {
                node: e,
                reason: "extrusion node carries no extrusion parameters".into(),
            })?;
            steps.push(DesignStep { sketch: s, extrusion: e, params });
        }
        Ok(steps)
    }

    /// Curves of a loop in order.
    pub fn loop_curves(&self, lp: usize) -> Vec<&SketchPrimitive> {
        self.children_of(lp).iter().filter_map(|&c| self.curve(c)).collect()
    }

    /// Whether the curve chain of a loop is closed, cyclically and exactly.
    pub fn loop_is_closed(&self, lp: usize) -> bool {
        let curves = self.loop_curves(lp);
        match curves.as_slice() {
            [] => false,
            [SketchPrimitive::Circle { .. }] => true,
            cs if cs.iter().any(|c| c.kind() == PrimitiveKind::Circle) => false,
            [_] => false,
            cs => (0..cs.len()).all(|i| cs[i].end() == cs[(i + 1) % cs.len()].start()),
        }
    }

    /// Checks structural invariants (everything except loop closure) and
    /// returns the first violation.
    pub fn check_structure(&self) -> Result<(), CadError> {
        let n = self.nodes.len();
        if self.root >= n {
            return Err(CadError::Tree { node: self.root, reason: "root index out of range".into() });
        }
        if self.nodes[self.root].node_type != NodeType::Solid || self.nodes[self.root].parent.is_some() {
            return Err(CadError::Tree { node: self.root, reason: "root must be a parentless solid".into() });
        }
        let mut seen = vec![false; n];
        let mut stack = vec![self.root];
        seen[self.root] = true;
        while let Some(i) = stack.pop() {
            let node = &self.nodes[i];
            let params_ok = matches!(
                (node.node_type, &node.params),
                (NodeType::Curve, NodeParams::Curve(_)) | (NodeType::Extrusion, NodeParams::Extrusion(_))
            ) || (!matches!(node.node_type, NodeType::Curve | NodeType::Extrusion)
                && node.params == NodeParams::Empty);
            if !params_ok {
                return Err(CadError::Tree { node: i, reason: "parameters do not match node type".into() });
            }
            match &node.params {
                NodeParams::Curve(c) => c.check().map_err(|e| CadError::Tree { node: i, reason: e.to_string() })?,
                NodeParams::Extrusion(e) => {
                    e.check().map_err(|err| CadError::Tree { node: i, reason: err.to_string() })?
                }
                NodeParams::Empty => {}
            }
            if node.children.is_empty() && matches!(node.node_type, NodeType::Sketch | NodeType::Face | NodeType::Loop) {
                return Err(CadError::Tree { node: i, reason: format!("empty {:?}", node.node_type) });
            }
            for &c in &node.children {
                if c >= n || seen[c] {
                    return Err(CadError::Tree { node: i, reason: format!("child {c} is out of range or shared") });
                }
                if self.nodes[c].parent != Some(i) {
                    return Err(CadError::Tree { node: c, reason: "parent link does not match".into() });
                }
                if !node.node_type.allowed_children().contains(&self.nodes[c].node_type) {
                    return Err(CadError::Tree {
                        node: c,
                        reason: format!("{:?} cannot be a child of {:?}", self.nodes[c].node_type, node.node_type),
                    });
                }
                seen[c] = true;
                stack.push(c);
            }
        }
        if let Some(orphan) = seen.iter().position(|s| !s) {
            return Err(CadError::Tree { node: orphan, reason: "node unreachable from root".into() });
        }
        self.steps()?;
        Ok(())
    }

    /// Full validation, including loop closure.
    pub fn validate(&self) -> Result<(), CadError> {
        self.check_structure()?;
        for (i, node) in self.nodes.iter().enumerate() {
            if node.node_type == NodeType::Loop && !self.loop_is_closed(i) {
                return Err(CadError::Tree { node: i, reason: "loop is not closed".into() });
            }
        }
        Ok(())
    }

    pub fn count(&self, ty: NodeType) -> usize {
        self.nodes.iter().filter(|n| n.node_type == ty).count()
    }

    /// Number of curves of each primitive kind, in `[line, arc, circle]` order.
    pub fn primitive_counts(&self) -> [usize; 3] {
        let mut counts = [0; 3];
        for n in &self.nodes {
            if let NodeParams::Curve(c) = &n.params {
                counts[c.kind() as usize] += 1;
            }
        }
        counts
    }
}

/// Appends nodes in the order they are created, which is depth-first
/// pre-order when a model is built top-down.
#[derive(Debug)]
pub struct TreeBuilder {
    nodes: Vec<TreeNode>,
}

impl Default for TreeBuilder {
    fn default() -> Self {
        Self::new()
    }
}

impl TreeBuilder {
    pub fn new() -> Self {
        TreeBuilder {
            nodes: vec![TreeNode { node_type: NodeType::Solid, params: NodeParams::Empty, children: vec![], parent: None }],
        }
    }

    pub const ROOT: usize = 0;

    pub fn add(&mut self, parent: usize, node_type: NodeType, params: NodeParams) -> usize {
        let id = self.nodes.len();
        self.nodes.push(TreeNode { node_type, params, children: vec![], parent: Some(parent) });
        self.nodes[parent].children.push(id);
        id
    }

    pub fn sketch(&mut self) -> usize {
        self.add(Self::ROOT, NodeType::Sketch, NodeParams::Empty)
    }

    pub fn face(&mut self, sketch: usize) -> usize {
        self.add(sketch, NodeType::Face, NodeParams::Empty)
    }

    pub fn loop_(&mut self, face: usize) -> usize {
        self.add(face, NodeType::Loop, NodeParams::Empty)
    }

    pub fn curve(&mut self, lp: usize, c: SketchPrimitive) -> usize {
        self.add(lp, NodeType::Curve, NodeParams::Curve(c))
    }

    pub fn extrusion(&mut self, params: ExtrusionParams) -> usize {
        self.add(Self::ROOT, NodeType::Extrusion, NodeParams::Extrusion(params))
    }

    pub fn build(self) -> CadTree {
        CadTree { nodes: self.nodes, root: Self::ROOT }
    }
}
