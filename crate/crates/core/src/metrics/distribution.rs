use crate::geometry::PointCloud;

use super::MetricsError;

/// Side of the occupancy grid used for the divergence.
pub const JSD_GRID: usize = 28;

fn nearest_sq(p: [f64; 3], cloud: &[[f64; 3]]) -> f64 {
    let mut best = f64::INFINITY;
    for q in cloud {
        let d = (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2);
        if d < best {
            best = d;
        }
    }
    best
}

/// Symmetric Chamfer distance: mean squared nearest-neighbor distance from
/// `a` to `b` plus the same from `b` to `a`.
pub fn chamfer(a: &PointCloud, b: &PointCloud) -> Result<f64, MetricsError> {
    if a.is_empty() || b.is_empty() {
        return Err(MetricsError::Empty("point cloud"));
    }
    let ab: f64 = a.points.iter().map(|&p| nearest_sq(p, &b.points)).sum::<f64>() / a.len() as f64;
    let ba: f64 = b.points.iter().map(|&p| nearest_sq(p, &a.points)).sum::<f64>() / b.len() as f64;
    Ok(ab + ba)
}

/// All pairwise distances, `gen.len() × refs.len()`, row-major.
pub fn chamfer_matrix(gen: &[PointCloud], refs: &[PointCloud]) -> Result<Vec<f64>, MetricsError> {
    let mut out = Vec::with_capacity(gen.len() * refs.len());
    for g in gen {
        for r in refs {
            out.push(chamfer(g, r)?);
        }
    }
    Ok(out)
}

/// Coverage (percent of references that are the nearest reference of some
/// generated shape) and minimum matching distance (mean over references of
/// the distance to the closest generated shape).
pub fn cov_mmd(gen: &[PointCloud], refs: &[PointCloud]) -> Result<(f64, f64), MetricsError> {
    if gen.is_empty() || refs.is_empty() {
        return Err(MetricsError::Empty("shape set"));
    }
    let d = chamfer_matrix(gen, refs)?;
    Ok(cov_mmd_from_matrix(&d, gen.len(), refs.len()))
}

pub fn cov_mmd_from_matrix(d: &[f64], n_gen: usize, n_ref: usize) -> (f64, f64) {
    let mut covered = vec![false; n_ref];
    for g in 0..n_gen {
        let row = &d[g * n_ref..(g + 1) * n_ref];
        let mut best = 0;
        for r in 1..n_ref {
            if row[r] < row[best] {
                best = r;
            }
        }
        covered[best] = true;
    }
    let cov = 100.0 * covered.iter().filter(|&&c| c).count() as f64 / n_ref as f64;
    let mmd = (0..n_ref).map(|r| (0..n_gen).map(|g| d[g * n_ref + r]).fold(f64::INFINITY, f64::min)).sum::<f64>() / n_ref as f64;
    (cov, mmd)
}

/// Normalized occupancy frequencies of all points of a set over a
/// `grid³` partition of `[-1, 1]³`; points outside are clamped in.
pub fn occupancy_distribution(set: &[PointCloud], grid: usize) -> Vec<f64> {
    let mut counts = vec![0.0; grid * grid * grid];
    let mut total = 0.0;
    for pc in set {
        for p in &pc.points {
            let c = p.map(|x| (((x + 1.0) / 2.0 * grid as f64).floor().max(0.0) as usize).min(grid - 1));
            counts[c[0] + grid * (c[1] + grid * c[2])] += 1.0;
            total += 1.0;
        }
    }
    if total > 0.0 {
        counts.iter_mut().for_each(|c| *c /= total);
    }
    counts
}

/// Jensen–Shannon divergence in nats with `0·log 0 = 0`.
pub fn jsd_of(p: &[f64], q: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        let m = 0.5 * (a + b);
        if a > 0.0 {
            acc += 0.5 * a * (a / m).ln();
        }
        if b > 0.0 {
            acc += 0.5 * b * (b / m).ln();
        }
    }
    acc.max(0.0)
}

/// Divergence between the occupancy distributions of two shape sets.
pub fn jsd(gen: &[PointCloud], refs: &[PointCloud], grid: usize) -> Result<f64, MetricsError> {
    if gen.iter().all(|c| c.is_empty()) || refs.iter().all(|c| c.is_empty()) {
        return Err(MetricsError::Empty("shape set"));
    }
    Ok(jsd_of(&occupancy_distribution(gen, grid), &occupancy_distribution(refs, grid)))
}
