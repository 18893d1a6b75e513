use std::f64::consts::{FRAC_PI_2, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cad::vocab::DEFAULT_MAX_LEN;
use crate::cad::{
    serialize_tree, validate_sequence, BooleanOp, CadTree, Extrusion, ExtrusionParams, Point2, SketchPrimitive, TreeBuilder,
};
use crate::diffusion::derive_seed;

use super::DatasetError;

/// Shortest program: `cls`, one circle loop/face/sketch, one extrusion, `e_solid`, `end`.
pub const MIN_PROGRAM_LEN: usize = 20;
/// Longest program the generator will emit.
pub const MAX_PROGRAM_LEN: usize = 240;

const MAX_STEPS: usize = 6;
const MAX_FACES: usize = 3;
/// Rejection draws per item before giving up.
const MAX_ATTEMPTS: usize = 100_000;
const TAG_ITEM: u64 = 11;

#[derive(Clone, Copy, Debug, PartialEq)]
enum Edge {
    Line,
    Arc,
}

#[derive(Clone, Debug)]
enum LoopPlan {
    Circle,
    Polygon(Vec<Edge>),
}

impl LoopPlan {
    fn tokens(&self) -> usize {
        let curves = match self {
            LoopPlan::Circle => 3,
            LoopPlan::Polygon(edges) => edges.iter().map(|e| if *e == Edge::Arc { 4 } else { 3 }).sum(),
        };
        curves + 1
    }
}

#[derive(Clone, Debug)]
struct FacePlan {
    outer: LoopPlan,
    hole: bool,
}

/// Structural skeleton of a program, sized before any geometry is drawn.
#[derive(Clone, Debug)]
struct Plan {
    steps: Vec<Vec<FacePlan>>,
}

impl Plan {
    fn tokens(&self) -> usize {
        let sketch: usize = self
            .steps
            .iter()
            .map(|faces| {
                let f: usize = faces.iter().map(|f| f.outer.tokens() + if f.hole { 4 } else { 0 } + 1).sum();
                f + 1 + 11
            })
            .sum();
        sketch + 3
    }

    fn draw(rng: &mut impl Rng) -> Self {
        let n_steps = rng.gen_range(1..=MAX_STEPS);
        let steps = (0..n_steps)
            .map(|_| {
                let n_faces = rng.gen_range(1..=MAX_FACES);
                (0..n_faces)
                    .map(|_| {
                        let outer = if rng.gen_bool(0.3) {
                            LoopPlan::Circle
                        } else {
                            let n = rng.gen_range(3..=6);
                            LoopPlan::Polygon((0..n).map(|_| if rng.gen_bool(0.3) { Edge::Arc } else { Edge::Line }).collect())
                        };
                        FacePlan { outer, hole: rng.gen_bool(0.3) }
                    })
                    .collect()
            })
            .collect();
        Plan { steps }
    }
}

fn point(x: f64, y: f64) -> Point2 {
    Point2::from_coords(x.clamp(-1.0, 1.0), y.clamp(-1.0, 1.0)).expect("clamped coordinate")
}

/// Adds one face centered at `c` with half-extent `h` (sketch units).
fn add_face(b: &mut TreeBuilder, sketch: usize, plan: &FacePlan, c: [f64; 2], h: f64, rng: &mut impl Rng) -> Option<()> {
    let face = b.face(sketch);
    let outer = b.loop_(face);
    let r_min;
    match &plan.outer {
        LoopPlan::Circle => {
            let r = h * rng.gen_range(0.6..0.95);
            r_min = r;
            b.curve(outer, SketchPrimitive::circle(point(c[0], c[1]), point(c[0] + r, c[1])).ok()?);
        }
        LoopPlan::Polygon(edges) => {
            let n = edges.len();
            let phase = rng.gen_range(0.0..2.0 * PI);
            let radii: Vec<f64> = (0..n).map(|_| h * rng.gen_range(0.55..0.75)).collect();
            r_min = radii.iter().cloned().fold(f64::INFINITY, f64::min) * (PI / n as f64).cos();
            let verts: Vec<Point2> = (0..n)
                .map(|i| {
                    let a = phase + 2.0 * PI * (i as f64 + rng.gen_range(-0.15..0.15)) / n as f64;
                    point(c[0] + radii[i] * a.cos(), c[1] + radii[i] * a.sin())
                })
                .collect();
            for i in 0..n {
                let (p, q) = (verts[i], verts[(i + 1) % n]);
                let curve = match edges[i] {
                    Edge::Line => SketchPrimitive::line(p, q).ok()?,
                    Edge::Arc => {
                        let (pc, qc) = (p.coords(), q.coords());
                        let (mx, my) = ((pc[0] + qc[0]) / 2.0, (pc[1] + qc[1]) / 2.0);
                        let (dx, dy) = (qc[0] - pc[0], qc[1] - pc[1]);
                        let len = dx.hypot(dy);
                        // counter-clockwise loop: the outward normal is (dy, -dx)
                        let bulge = len * rng.gen_range(0.15..0.3);
                        SketchPrimitive::arc(p, point(mx + dy / len * bulge, my - dx / len * bulge), q).ok()?
                    }
                };
                b.curve(outer, curve);
            }
        }
    }
    if plan.hole {
        let hole = b.loop_(face);
        let r = 0.4 * r_min;
        b.curve(hole, SketchPrimitive::circle(point(c[0], c[1]), point(c[0] + r, c[1])).ok()?);
    }
    Some(())
}

fn axis_angle(rng: &mut impl Rng) -> f64 {
    if rng.gen_bool(0.8) {
        FRAC_PI_2 * rng.gen_range(0..4) as f64
    } else {
        rng.gen_range(0.0..2.0 * PI)
    }
}

fn build(plan: &Plan, rng: &mut impl Rng) -> Option<CadTree> {
    let mut b = TreeBuilder::new();
    for (k, faces) in plan.steps.iter().enumerate() {
        let sketch = b.sketch();
        let n = faces.len();
        let cell = 2.0 / n as f64;
        for (i, f) in faces.iter().enumerate() {
            let h = (cell / 2.0).min(0.8) * rng.gen_range(0.7..0.95);
            let c = [-1.0 + cell * (i as f64 + 0.5), rng.gen_range(-0.2..0.2)];
            add_face(&mut b, sketch, f, c, h, rng)?;
        }
        let op = if k == 0 {
            BooleanOp::New
        } else {
            match rng.gen_range(0..10) {
                0..=4 => BooleanOp::Join,
                5 | 6 => BooleanOp::New,
                7 | 8 => BooleanOp::Cut,
                _ => BooleanOp::Intersect,
            }
        };
        let e = Extrusion {
            angles: [axis_angle(rng), axis_angle(rng), axis_angle(rng)],
            translation: [rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3)],
            scale: rng.gen_range(0.4..0.9),
            depth_plus: rng.gen_range(0.15..0.6),
            depth_minus: if rng.gen_bool(0.3) { rng.gen_range(0.05..0.3) } else { 0.0 },
            op,
        };
        b.extrusion(ExtrusionParams::quantize(&e).ok()?);
    }
    Some(b.build())
}

/// One random tree whose serialization length lies in `[min, max]` and
/// which passes every dataset filter.
pub fn generate_one(min: usize, max: usize, rng: &mut impl Rng) -> Result<CadTree, DatasetError> {
    check_range(min, max)?;
    for _ in 0..MAX_ATTEMPTS {
        let plan = Plan::draw(rng);
        let len = plan.tokens();
        if len < min || len > max {
            continue;
        }
        let Some(tree) = build(&plan, rng) else { continue };
        let Ok(seq) = serialize_tree(&tree, DEFAULT_MAX_LEN) else { continue };
        debug_assert_eq!(seq.valid_len, len);
        if validate_sequence(&seq).all_pass() {
            return Ok(tree);
        }
    }
    Err(DatasetError::Infeasible(format!("no valid program found for lengths {min}..={max}")))
}

pub fn check_range(min: usize, max: usize) -> Result<(), DatasetError> {
    if min < 2 || min > max || max > MAX_PROGRAM_LEN {
        return Err(DatasetError::Infeasible(format!("length range {min}..={max} must satisfy 2 <= min <= max <= {MAX_PROGRAM_LEN}")));
    }
    if max < MIN_PROGRAM_LEN {
        return Err(DatasetError::Infeasible(format!("max length {max} is below the shortest program ({MIN_PROGRAM_LEN} tokens)")));
    }
    Ok(())
}

/// `n` trees with token lengths in `[min, max]`. Item `i` draws from its
/// own seed derived from `(seed, i)`.
pub fn generate(n: usize, length_range: (usize, usize), seed: u64) -> Result<Vec<CadTree>, DatasetError> {
    let (min, max) = length_range;
    check_range(min, max)?;
    (0..n)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, TAG_ITEM, i as u64));
            generate_one(min, max, &mut rng)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cad::deserialize_sequence;

    #[test]
    fn plan_length_matches_serialization() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let plan = Plan::draw(&mut rng);
            if plan.tokens() > 256 {
                continue;
            }
            if let Some(tree) = build(&plan, &mut rng) {
                let seq = serialize_tree(&tree, 256).unwrap();
                assert_eq!(seq.valid_len, plan.tokens());
            }
        }
    }

    #[test]
    fn generated_trees_roundtrip_and_respect_the_range() {
        let trees = generate(12, (20, 80), 5).unwrap();
        for t in &trees {
            let seq = serialize_tree(t, 256).unwrap();
            assert!((20..=80).contains(&seq.valid_len));
            assert_eq!(&deserialize_sequence(&seq).unwrap(), t);
            assert!(validate_sequence(&seq).all_pass());
        }
        assert_eq!(generate(12, (20, 80), 5).unwrap(), trees);
    }

    #[test]
    fn infeasible_ranges_are_rejected() {
        assert!(generate(1, (2, 10), 0).is_err());
        assert!(generate(1, (50, 40), 0).is_err());
        assert!(generate(1, (20, 300), 0).is_err());
    }
}
