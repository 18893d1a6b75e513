use gsmcad_core::cad::BooleanOp;
use gsmcad_core::dataset::generate_one;
use gsmcad_core::geometry::{combine, execute, sample_points, VoxelGrid};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn solid(seed: u64) -> VoxelGrid {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    execute(&generate_one(20, 80, &mut rng).unwrap(), 32).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn boolean_counts_are_consistent(s1 in any::<u64>(), s2 in any::<u64>()) {
        let (a, b) = (solid(s1), solid(s2));
        let join = combine(&a, &b, BooleanOp::Join);
        let inter = combine(&a, &b, BooleanOp::Intersect);
        let cut = combine(&a, &b, BooleanOp::Cut);
        prop_assert_eq!(join.occupied_count() + inter.occupied_count(), a.occupied_count() + b.occupied_count());
        prop_assert_eq!(cut.occupied_count() + inter.occupied_count(), a.occupied_count());
        prop_assert_eq!(&join, &combine(&b, &a, BooleanOp::Join));
        prop_assert_eq!(&inter, &combine(&b, &a, BooleanOp::Intersect));
        prop_assert!(combine(&a, &a, BooleanOp::Cut).is_empty());
    }

    #[test]
    fn samples_lie_on_occupied_cells(seed in any::<u64>()) {
        let g = solid(seed);
        prop_assume!(!g.is_empty());
        let cloud = sample_points(&g, 256, seed).unwrap();
        prop_assert_eq!(cloud.len(), 256);
        let [cx, cy, cz] = g.cell_size();
        let lo = g.bounds().min;
        let n = g.resolution();
        for p in &cloud.points {
            let idx = |v: f64, o: f64, c: f64| (((v - o) / c).floor() as isize).clamp(0, n as isize - 1) as usize;
            let (i, j, k) = (idx(p[0], lo[0], cx), idx(p[1], lo[1], cy), idx(p[2], lo[2], cz));
            prop_assert!(g.get(i, j, k));
        }
    }
}

#[test]
fn execution_is_deterministic() {
    assert_eq!(solid(11), solid(11));
}
