use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::voxel::VoxelGrid;
use super::GeometryError;

/// Unordered set of 3D points in model units.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PointCloud {
    pub points: Vec<[f64; 3]>,
}

impl PointCloud {
    pub fn new(points: Vec<[f64; 3]>) -> Self {
        PointCloud { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Draws `n` points uniformly from the surface cells of `grid`: a surface
/// cell is picked uniformly, then a point uniformly inside it.
pub fn sample_points(grid: &VoxelGrid, n: usize, seed: u64) -> Result<PointCloud, GeometryError> {
    if n == 0 {
        return Err(GeometryError::Invalid("sample size must be at least 1".into()));
    }
    let surface = grid.surface_indices();
    if surface.is_empty() {
        return Err(GeometryError::EmptyGrid);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cell = grid.cell_size();
    let min = grid.bounds().min;
    let points = (0..n)
        .map(|_| {
            let ijk = grid.coords(surface[rng.gen_range(0..surface.len())]);
            [0, 1, 2].map(|a| min[a] + (ijk[a] as f64 + rng.gen::<f64>()) * cell[a])
        })
        .collect();
    Ok(PointCloud { points })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Aabb;

    #[test]
    fn full_grid_samples_lie_on_the_shell() {
        let g = VoxelGrid::full(16, Aabb::WORLD);
        let pc = sample_points(&g, 500, 3).unwrap();
        assert_eq!(pc.len(), 500);
        let inner = 1.0 - 2.0 / 16.0;
        for p in &pc.points {
            assert!(p.iter().any(|c| c.abs() >= inner), "{p:?} is interior");
            assert!(Aabb::WORLD.contains(*p));
        }
    }

    #[test]
    fn single_voxel_contains_all_samples() {
        let mut g = VoxelGrid::empty(16, Aabb::WORLD);
        g.set(3, 7, 11, true);
        let pc = sample_points(&g, 8, 0).unwrap();
        let c = g.cell_center(3, 7, 11);
        let h = g.cell_size()[0] / 2.0;
        for p in &pc.points {
            assert!((0..3).all(|a| (p[a] - c[a]).abs() <= h));
        }
    }

    #[test]
    fn seeded_and_reproducible() {
        let mut g = VoxelGrid::empty(32, Aabb::WORLD);
        for k in 8..24 {
            for j in 8..24 {
                for i in 8..24 {
                    g.set(i, j, k, true);
                }
            }
        }
        let a = sample_points(&g, 2048, 1).unwrap();
        assert_eq!(a, sample_points(&g, 2048, 1).unwrap());
        assert_ne!(a, sample_points(&g, 2048, 2).unwrap());
    }

    #[test]
    fn empty_grid_is_an_error() {
        let g = VoxelGrid::empty(16, Aabb::WORLD);
        assert!(matches!(sample_points(&g, 4, 0), Err(GeometryError::EmptyGrid)));
    }
}
