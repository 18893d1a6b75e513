//! Small hand-built parts shared by unit tests.

use crate::cad::{BooleanOp, CadTree, Extrusion, ExtrusionParams, Point2, SketchPrimitive, TreeBuilder};

fn p(x: f64, y: f64) -> Point2 {
    Point2::from_coords(x, y).unwrap()
}

/// A slab whose right side is an arc: three lines and one arc.
pub fn arc_part() -> CadTree {
    let mut b = TreeBuilder::new();
    let s = b.sketch();
    let f = b.face(s);
    let l = b.loop_(f);
    b.curve(l, SketchPrimitive::line(p(-0.5, -0.5), p(0.5, -0.5)).unwrap());
    b.curve(l, SketchPrimitive::arc(p(0.5, -0.5), p(0.7, 0.0), p(0.5, 0.5)).unwrap());
    b.curve(l, SketchPrimitive::line(p(0.5, 0.5), p(-0.5, 0.5)).unwrap());
    b.curve(l, SketchPrimitive::line(p(-0.5, 0.5), p(-0.5, -0.5)).unwrap());
    b.extrusion(ExtrusionParams::quantize(&Extrusion::along_z(0.4, 0.0, BooleanOp::New)).unwrap());
    b.build()
}
