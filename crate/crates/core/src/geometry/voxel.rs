use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

/// Axis-aligned box in model units.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Aabb {
    /// The normalized world box `[-1, 1]³`.
    pub const WORLD: Aabb = Aabb { min: [-1.0; 3], max: [1.0; 3] };

    pub fn is_degenerate(&self) -> bool {
        (0..3).any(|a| !(self.max[a] > self.min[a]) || !self.min[a].is_finite() || !self.max[a].is_finite())
    }

    pub fn contains(&self, p: [f64; 3]) -> bool {
        (0..3).all(|a| p[a] >= self.min[a] && p[a] <= self.max[a])
    }

    pub fn volume(&self) -> f64 {
        (0..3).map(|a| self.max[a] - self.min[a]).product()
    }
}

/// Cubic occupancy grid stored as a packed bit array, x fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct VoxelGrid {
    resolution: usize,
    bits: Vec<u64>,
    bounds: Aabb,
}

impl VoxelGrid {
    pub fn empty(resolution: usize, bounds: Aabb) -> Self {
        assert!(resolution > 0, "resolution must be positive");
        assert!(!bounds.is_degenerate(), "degenerate bounds");
        let n = resolution * resolution * resolution;
        VoxelGrid { resolution, bits: vec![0; n.div_ceil(64)], bounds }
    }

    pub fn full(resolution: usize, bounds: Aabb) -> Self {
        let mut g = Self::empty(resolution, bounds);
        for i in 0..g.len() {
            g.set_index(i, true);
        }
        g
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn bounds(&self) -> Aabb {
        self.bounds
    }

    /// Total number of cells.
    pub fn len(&self) -> usize {
        self.resolution * self.resolution * self.resolution
    }

    pub fn is_empty(&self) -> bool {
        self.bits.iter().all(|&w| w == 0)
    }

    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.resolution * (j + self.resolution * k)
    }

    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let r = self.resolution;
        [idx % r, (idx / r) % r, idx / (r * r)]
    }

    pub fn get_index(&self, idx: usize) -> bool {
        self.bits[idx / 64] >> (idx % 64) & 1 == 1
    }

    pub fn set_index(&mut self, idx: usize, v: bool) {
        let (w, b) = (idx / 64, idx % 64);
        if v {
            self.bits[w] |= 1 << b;
        } else {
            self.bits[w] &= !(1 << b);
        }
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> bool {
        self.get_index(self.index(i, j, k))
    }

    pub fn set(&mut self, i: usize, j: usize, k: usize, v: bool) {
        let idx = self.index(i, j, k);
        self.set_index(idx, v);
    }

    /// Edge length of one cell along each axis.
    pub fn cell_size(&self) -> [f64; 3] {
        let r = self.resolution as f64;
        [0, 1, 2].map(|a| (self.bounds.max[a] - self.bounds.min[a]) / r)
    }

    pub fn cell_center(&self, i: usize, j: usize, k: usize) -> [f64; 3] {
        let s = self.cell_size();
        let ijk = [i, j, k];
        [0, 1, 2].map(|a| self.bounds.min[a] + (ijk[a] as f64 + 0.5) * s[a])
    }

    pub fn occupied_count(&self) -> usize {
        self.bits.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn occupied_fraction(&self) -> f64 {
        self.occupied_count() as f64 / self.len() as f64
    }

    /// Occupied volume in model units.
    pub fn volume(&self) -> f64 {
        let s = self.cell_size();
        self.occupied_count() as f64 * s[0] * s[1] * s[2]
    }

    pub fn occupied_indices(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(|&i| self.get_index(i))
    }

    fn zip_with(&self, other: &VoxelGrid, f: impl Fn(u64, u64) -> u64) -> VoxelGrid {
        assert_eq!(self.resolution, other.resolution, "resolution mismatch");
        assert_eq!(self.bounds, other.bounds, "bounds mismatch");
        let bits = self.bits.iter().zip(&other.bits).map(|(&a, &b)| f(a, b)).collect();
        VoxelGrid { resolution: self.resolution, bits, bounds: self.bounds }
    }

    pub fn union(&self, other: &VoxelGrid) -> VoxelGrid {
        self.zip_with(other, |a, b| a | b)
    }

    pub fn subtract(&self, other: &VoxelGrid) -> VoxelGrid {
        self.zip_with(other, |a, b| a & !b)
    }

    pub fn intersect(&self, other: &VoxelGrid) -> VoxelGrid {
        self.zip_with(other, |a, b| a & b)
    }

    /// Neighbors across the six cell faces; `None` for sides on the grid boundary.
    pub fn neighbors6(&self, idx: usize) -> [Option<usize>; 6] {
        let r = self.resolution;
        let [i, j, k] = self.coords(idx);
        [
            (i > 0).then(|| idx - 1),
            (i + 1 < r).then(|| idx + 1),
            (j > 0).then(|| idx - r),
            (j + 1 < r).then(|| idx + r),
            (k > 0).then(|| idx - r * r),
            (k + 1 < r).then(|| idx + r * r),
        ]
    }

    /// Occupied cells with at least one empty (or out-of-grid) face neighbor.
    pub fn surface_indices(&self) -> Vec<usize> {
        self.occupied_indices()
            .filter(|&i| self.neighbors6(i).iter().any(|n| n.is_none_or(|n| !self.get_index(n))))
            .collect()
    }

    /// Non-empty occupancy whose outside region is a single 6-connected
    /// component. The outside region is every empty cell reachable from an
    /// empty cell on the grid boundary.
    pub fn is_watertight(&self) -> bool {
        if self.is_empty() {
            return false;
        }
        let r = self.resolution;
        let mut seen = vec![false; self.len()];
        let mut components = 0;
        let mut queue = VecDeque::new();
        for idx in 0..self.len() {
            let [i, j, k] = self.coords(idx);
            let on_boundary = [i, j, k].iter().any(|&c| c == 0 || c + 1 == r);
            if !on_boundary || seen[idx] || self.get_index(idx) {
                continue;
            }
            components += 1;
            if components > 1 {
                return false;
            }
            seen[idx] = true;
            queue.push_back(idx);
            while let Some(c) = queue.pop_front() {
                for n in self.neighbors6(c).into_iter().flatten() {
                    if !seen[n] && !self.get_index(n) {
                        seen[n] = true;
                        queue.push_back(n);
                    }
                }
            }
        }
        true
    }

}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_grid(seed: u64) -> VoxelGrid {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut g = VoxelGrid::empty(16, Aabb::WORLD);
        for i in 0..g.len() {
            g.set_index(i, rng.gen_bool(0.3));
        }
        g
    }

    #[test]
    fn boolean_identities() {
        let (a, b, c) = (random_grid(1), random_grid(2), random_grid(3));
        assert_eq!(a.union(&b), b.union(&a));
        assert_eq!(a.union(&b).union(&c), a.union(&b.union(&c)));
        assert!(a.subtract(&a).is_empty());
        assert_eq!(a.intersect(&a), a);
    }

    #[test]
    fn full_grid_surface_is_the_shell() {
        let g = VoxelGrid::full(16, Aabb::WORLD);
        let shell = 16usize.pow(3) - 14usize.pow(3);
        assert_eq!(g.surface_indices().len(), shell);
        assert!(g.is_watertight());
    }

    #[test]
    fn slab_splitting_the_outside_is_not_watertight() {
        let mut g = VoxelGrid::empty(16, Aabb::WORLD);
        for i in 0..16 {
            for j in 0..16 {
                g.set(i, j, 8, true);
            }
        }
        assert!(!g.is_watertight());
        let mut h = VoxelGrid::empty(16, Aabb::WORLD);
        h.set(4, 4, 4, true);
        assert!(h.is_watertight());
        assert!(!VoxelGrid::empty(16, Aabb::WORLD).is_watertight());
    }
}
