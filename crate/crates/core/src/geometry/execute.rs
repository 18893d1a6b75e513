use crate::cad::{BooleanOp, CadTree, Extrusion, SketchPrimitive};

use super::voxel::{Aabb, VoxelGrid};
use super::GeometryError;

/// Angular step used to flatten arcs for rasterization.
const ARC_STEP: f64 = std::f64::consts::PI / 64.0;

pub const MIN_RESOLUTION: usize = 16;
pub const MAX_RESOLUTION: usize = 256;

#[derive(Clone, Debug)]
enum LoopShape {
    Disc { center: [f64; 2], radius: f64 },
    Polygon(Vec<[f64; 2]>),
}

impl LoopShape {
    fn contains(&self, q: [f64; 2]) -> bool {
        match self {
            LoopShape::Disc { center, radius } => {
                (q[0] - center[0]).powi(2) + (q[1] - center[1]).powi(2) < radius * radius
            }
            LoopShape::Polygon(pts) => {
                let mut inside = false;
                for w in pts.windows(2) {
                    let (a, b) = (w[0], w[1]);
                    if (a[1] > q[1]) != (b[1] > q[1]) {
                        let x = a[0] + (q[1] - a[1]) * (b[0] - a[0]) / (b[1] - a[1]);
                        if q[0] < x {
                            inside = !inside;
                        }
                    }
                }
                inside
            }
        }
    }

    fn extend_bounds(&self, lo: &mut [f64; 2], hi: &mut [f64; 2]) {
        let mut add = |p: [f64; 2]| {
            for a in 0..2 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        };
        match self {
            LoopShape::Disc { center, radius } => {
                add([center[0] - radius, center[1] - radius]);
                add([center[0] + radius, center[1] + radius]);
            }
            LoopShape::Polygon(pts) => pts.iter().copied().for_each(add),
        }
    }
}

/// Planar region of a sketch: the union of its faces, each face filled
/// even–odd over its loops.
#[derive(Clone, Debug)]
pub(crate) struct SketchRegion {
    faces: Vec<Vec<LoopShape>>,
}

impl SketchRegion {
    pub(crate) fn from_sketch(tree: &CadTree, sketch: usize) -> Self {
        let faces = tree
            .children_of(sketch)
            .iter()
            .map(|&face| tree.children_of(face).iter().map(|&lp| loop_shape(tree, lp)).collect())
            .collect();
        SketchRegion { faces }
    }

    pub(crate) fn contains(&self, q: [f64; 2]) -> bool {
        self.faces.iter().any(|loops| loops.iter().filter(|l| l.contains(q)).count() % 2 == 1)
    }

    /// Bounding box in sketch units as `(min, max)`.
    pub(crate) fn bounds(&self) -> ([f64; 2], [f64; 2]) {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for l in self.faces.iter().flatten() {
            l.extend_bounds(&mut lo, &mut hi);
        }
        (lo, hi)
    }
}

fn loop_shape(tree: &CadTree, lp: usize) -> LoopShape {
    let curves = tree.loop_curves(lp);
    if let [c @ SketchPrimitive::Circle { .. }] = curves.as_slice() {
        let (center, radius) = c.arc_circle().expect("circle");
        return LoopShape::Disc { center, radius };
    }
    let mut pts: Vec<[f64; 2]> = Vec::new();
    for c in curves {
        let poly = c.polyline(ARC_STEP);
        let skip = usize::from(!pts.is_empty());
        pts.extend_from_slice(&poly[skip..]);
    }
    if pts.first() != pts.last() {
        if let Some(&first) = pts.first() {
            pts.push(first);
        }
    }
    LoopShape::Polygon(pts)
}

/// Intrinsic Z-Y-X rotation: yaw `γ` about z, pitch `φ` about y, roll `θ` about x.
pub fn rotation(theta: f64, phi: f64, gamma: f64) -> [[f64; 3]; 3] {
    let (sx, cx) = theta.sin_cos();
    let (sy, cy) = phi.sin_cos();
    let (sz, cz) = gamma.sin_cos();
    [
        [cz * cy, cz * sy * sx - sz * cx, cz * sy * cx + sz * sx],
        [sz * cy, sz * sy * sx + cz * cx, sz * sy * cx - cz * sx],
        [-sy, cy * sx, cy * cx],
    ]
}

fn apply(r: &[[f64; 3]; 3], v: [f64; 3]) -> [f64; 3] {
    [0, 1, 2].map(|i| r[i][0] * v[0] + r[i][1] * v[1] + r[i][2] * v[2])
}

fn apply_t(r: &[[f64; 3]; 3], v: [f64; 3]) -> [f64; 3] {
    [0, 1, 2].map(|i| r[0][i] * v[0] + r[1][i] * v[1] + r[2][i] * v[2])
}

/// Rasterizes one extruded sketch into a fresh grid. Voxels are tested at
/// their centers; anything outside the world box is clipped.
pub(crate) fn extrude(region: &SketchRegion, e: &Extrusion, resolution: usize, bounds: Aabb) -> VoxelGrid {
    let mut grid = VoxelGrid::empty(resolution, bounds);
    let rot = rotation(e.angles[0], e.angles[1], e.angles[2]);
    let (lo, hi) = region.bounds();
    if !(lo[0] <= hi[0] && lo[1] <= hi[1]) {
        return grid;
    }
    let s = e.scale;
    let mut wlo = [f64::INFINITY; 3];
    let mut whi = [f64::NEG_INFINITY; 3];
    for &u in &[lo[0] * s, hi[0] * s] {
        for &v in &[lo[1] * s, hi[1] * s] {
            for &w in &[-e.depth_minus, e.depth_plus] {
                let p = apply(&rot, [u, v, w]);
                for a in 0..3 {
                    let x = p[a] + e.translation[a];
                    wlo[a] = wlo[a].min(x);
                    whi[a] = whi[a].max(x);
                }
            }
        }
    }
    let cell = grid.cell_size();
    let range = |a: usize| {
        let first = ((wlo[a] - bounds.min[a]) / cell[a] - 0.5).floor().max(0.0) as usize;
        let last = ((whi[a] - bounds.min[a]) / cell[a] + 0.5).ceil().min(resolution as f64) as usize;
        first..last.max(first)
    };
    let (ri, rj, rk) = (range(0), range(1), range(2));
    for k in rk {
        for j in rj.clone() {
            for i in ri.clone() {
                let p = grid.cell_center(i, j, k);
                let q = apply_t(&rot, [0, 1, 2].map(|a| p[a] - e.translation[a]));
                if q[2] < -e.depth_minus || q[2] > e.depth_plus {
                    continue;
                }
                if region.contains([q[0] / s, q[1] / s]) {
                    grid.set(i, j, k, true);
                }
            }
        }
    }
    grid
}

/// Applies a boolean operation to the accumulated body. `New` unions a
/// fresh body into whatever already exists.
pub fn combine(acc: &VoxelGrid, body: &VoxelGrid, op: BooleanOp) -> VoxelGrid {
    match op {
        BooleanOp::New | BooleanOp::Join => acc.union(body),
        BooleanOp::Cut => acc.subtract(body),
        BooleanOp::Intersect => acc.intersect(body),
    }
}

/// Executes every design step of a tree, in order, into a voxel solid over
/// the world box.
pub fn execute(tree: &CadTree, resolution: usize) -> Result<VoxelGrid, GeometryError> {
    if !(MIN_RESOLUTION..=MAX_RESOLUTION).contains(&resolution) {
        return Err(GeometryError::Resolution(resolution));
    }
    tree.validate()?;
    let mut acc = VoxelGrid::empty(resolution, Aabb::WORLD);
    for step in tree.steps()? {
        let region = SketchRegion::from_sketch(tree, step.sketch);
        let body = extrude(&region, &step.params.dequantize(), resolution, Aabb::WORLD);
        acc = combine(&acc, &body, step.params.beta);
    }
    if acc.is_empty() {
        return Err(GeometryError::EmptySolid);
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cad::{ExtrusionParams, Point2, TreeBuilder};

    fn p(x: f64, y: f64) -> Point2 {
        Point2::from_coords(x, y).unwrap()
    }

    fn square(b: &mut TreeBuilder, x0: f64, y0: f64, x1: f64, y1: f64) {
        let s = b.sketch();
        let f = b.face(s);
        let l = b.loop_(f);
        let c = [p(x0, y0), p(x1, y0), p(x1, y1), p(x0, y1)];
        for i in 0..4 {
            b.curve(l, SketchPrimitive::line(c[i], c[(i + 1) % 4]).unwrap());
        }
    }

    #[test]
    fn rotation_is_orthonormal() {
        let r = rotation(0.3, -1.1, 2.0);
        for i in 0..3 {
            for j in 0..3 {
                let dot: f64 = (0..3).map(|k| r[k][i] * r[k][j]).sum();
                assert!((dot - if i == j { 1.0 } else { 0.0 }).abs() < 1e-12);
            }
        }
        let id = rotation(0.0, 0.0, 0.0);
        assert_eq!(apply(&id, [1.0, 2.0, 3.0]), [1.0, 2.0, 3.0]);
    }

    #[test]
    fn unit_square_extrudes_to_cube() {
        let mut b = TreeBuilder::new();
        square(&mut b, 0.0, 0.0, 1.0, 1.0);
        let e = Extrusion::along_z(1.0, 0.0, BooleanOp::New);
        let params = ExtrusionParams::quantize(&e).unwrap();
        b.extrusion(params);
        let tree = b.build();
        let grid = execute(&tree, 32).unwrap();
        // dequantized square is [0.0039, 1] x [0.0039, 1], scale 1.0039; within one voxel shell of 1/8
        let frac = grid.occupied_fraction();
        let shell = 3.0 * (2.0 / 32.0) / 2.0 * 0.25;
        assert!((frac - 0.125).abs() <= shell, "fraction {frac}");
    }

    #[test]
    fn cut_of_itself_is_empty() {
        let mut b = TreeBuilder::new();
        square(&mut b, -0.5, -0.5, 0.5, 0.5);
        b.extrusion(ExtrusionParams::quantize(&Extrusion::along_z(0.5, 0.0, BooleanOp::New)).unwrap());
        square(&mut b, -0.5, -0.5, 0.5, 0.5);
        b.extrusion(ExtrusionParams::quantize(&Extrusion::along_z(0.5, 0.0, BooleanOp::Cut)).unwrap());
        assert!(matches!(execute(&b.build(), 32), Err(GeometryError::EmptySolid)));
    }

    #[test]
    fn holes_use_even_odd() {
        let mut b = TreeBuilder::new();
        let s = b.sketch();
        let f = b.face(s);
        let outer = b.loop_(f);
        b.curve(outer, SketchPrimitive::circle(p(0.0, 0.0), p(0.8, 0.0)).unwrap());
        let inner = b.loop_(f);
        b.curve(inner, SketchPrimitive::circle(p(0.0, 0.0), p(0.4, 0.0)).unwrap());
        b.extrusion(ExtrusionParams::quantize(&Extrusion::along_z(0.5, 0.0, BooleanOp::New)).unwrap());
        let g = execute(&b.build(), 64).unwrap();
        let mid = g.resolution() / 2;
        let k = g.resolution() / 2 + 4;
        assert!(!g.get(mid, mid, k), "hole should be empty");
        assert!(g.get(mid + 19, mid, k), "ring should be solid");
    }

    #[test]
    fn resolution_bounds() {
        let mut b = TreeBuilder::new();
        square(&mut b, -0.5, -0.5, 0.5, 0.5);
        b.extrusion(ExtrusionParams::quantize(&Extrusion::along_z(0.5, 0.0, BooleanOp::New)).unwrap());
        let t = b.build();
        assert!(matches!(execute(&t, 8), Err(GeometryError::Resolution(8))));
        assert!(matches!(execute(&t, 300), Err(GeometryError::Resolution(300))));
    }
}
