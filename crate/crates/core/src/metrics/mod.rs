//! Evaluation metrics: point-cloud distribution distances, program-level
//! ratios, feature F1 and paired reconstruction accuracy.

mod cad;
mod distribution;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cad::{deserialize_sequence, CadSequence, CadTree};
use crate::geometry::{execute, sample_points, PointCloud};

pub use cad::{
    f1_from_counts, f1_per_type, feature_counts, novelty, paired_counts, uniqueness, valid_ratio, PairedAccuracy,
    PairedCounts, FEATURE_NAMES,
};
pub use distribution::{
    chamfer, chamfer_matrix, cov_mmd, cov_mmd_from_matrix, jsd, jsd_of, occupancy_distribution, JSD_GRID,
};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("empty {0}")]
    Empty(&'static str),
    #[error(transparent)]
    Cad(#[from] crate::cad::CadError),
}

/// Generation and reconstruction scores; `None` marks metrics that were
/// not computed. Percentages are in `[0, 100]`; MMD and
/// JSD are raw and scaled by 10² only in the CSV.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub samples: usize,
    pub cov: Option<f64>,
    pub mmd: Option<f64>,
    pub jsd: Option<f64>,
    pub novel: Option<f64>,
    pub unique: Option<f64>,
    pub valid: Option<f64>,
    pub f1_line: Option<f64>,
    pub f1_arc: Option<f64>,
    pub f1_circle: Option<f64>,
    pub f1_extrusion: Option<f64>,
    pub paired: Option<PairedAccuracy>,
}

fn cell(v: Option<f64>, scale: f64) -> String {
    v.map_or_else(String::new, |x| format!("{:.4}", x * scale))
}

impl MetricsReport {
    pub const CSV_HEADER: &'static str = "samples,cov,mmd_x100,jsd_x100,novel,unique,valid,f1_line,f1_arc,f1_circle,f1_extrusion,acc_cmd,acc_param,acc_line,acc_arc,acc_circle,acc_ext";

    pub fn csv_row(&self) -> String {
        let p = self.paired.unwrap_or_default();
        let cols = [
            self.samples.to_string(),
            cell(self.cov, 1.0),
            cell(self.mmd, 100.0),
            cell(self.jsd, 100.0),
            cell(self.novel, 1.0),
            cell(self.unique, 1.0),
            cell(self.valid, 1.0),
            cell(self.f1_line, 1.0),
            cell(self.f1_arc, 1.0),
            cell(self.f1_circle, 1.0),
            cell(self.f1_extrusion, 1.0),
            cell(p.acc_cmd, 1.0),
            cell(p.acc_param, 1.0),
            cell(p.acc_line, 1.0),
            cell(p.acc_arc, 1.0),
            cell(p.acc_circle, 1.0),
            cell(p.acc_ext, 1.0),
        ];
        cols.join(",")
    }

    pub fn to_csv(&self) -> String {
        format!("{}\n{}\n", Self::CSV_HEADER, self.csv_row())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Shape-sampling settings for set-level evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub resolution: usize,
    pub points: usize,
    pub seed: u64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions { resolution: 64, points: 512, seed: 0 }
    }
}

/// Surface samples of the solid a program executes to, or `None` when it
/// does not parse or execute.
pub fn shape_cloud(seq: &CadSequence, opts: &EvalOptions, index: u64) -> Option<PointCloud> {
    let tree = deserialize_sequence(seq).ok()?;
    let grid = execute(&tree, opts.resolution).ok()?;
    sample_points(&grid, opts.points, opts.seed ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15)).ok()
}

/// Scores a generated set against references (and optionally the
/// training set for novelty). Distribution metrics use only programs that
/// execute; they are `None` when either side has none.
pub fn evaluate(
    gen: &[CadSequence],
    refs: &[CadSequence],
    train: Option<&[CadSequence]>,
    opts: &EvalOptions,
) -> Result<MetricsReport, MetricsError> {
    if gen.is_empty() {
        return Err(MetricsError::Empty("generated set"));
    }
    let clouds = |set: &[CadSequence]| -> Vec<PointCloud> {
        set.iter().enumerate().filter_map(|(i, s)| shape_cloud(s, opts, i as u64)).collect()
    };
    let (gc, rc) = (clouds(gen), clouds(refs));
    let (cov, mmd, jsd_v) = if gc.is_empty() || rc.is_empty() {
        (None, None, None)
    } else {
        let (c, m) = cov_mmd(&gc, &rc)?;
        (Some(c), Some(m), Some(jsd(&gc, &rc, JSD_GRID)?))
    };
    let trees = |set: &[CadSequence]| -> Vec<CadTree> { set.iter().filter_map(|s| deserialize_sequence(s).ok()).collect() };
    let f1 = if refs.is_empty() { None } else { Some(f1_per_type(&trees(gen), &trees(refs))) };
    Ok(MetricsReport {
        samples: gen.len(),
        cov,
        mmd,
        jsd: jsd_v,
        novel: Some(novelty(gen, train.unwrap_or(refs))),
        unique: Some(uniqueness(gen)),
        valid: Some(valid_ratio(gen)),
        f1_line: f1.map(|f| f[0]),
        f1_arc: f1.map(|f| f[1]),
        f1_circle: f1.map(|f| f[2]),
        f1_extrusion: f1.map(|f| f[3]),
        paired: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cad::serialize_tree;

    #[test]
    fn identical_sets_score_perfectly() {
        let seq = serialize_tree(&crate::fixtures::arc_part(), 64).unwrap();
        let set = vec![seq.clone(), seq];
        let r = evaluate(&set, &set, None, &EvalOptions { points: 128, ..Default::default() }).unwrap();
        assert_eq!(r.cov, Some(100.0));
        assert_eq!(r.mmd, Some(0.0));
        assert_eq!(r.jsd, Some(0.0));
        assert_eq!(r.valid, Some(100.0));
        assert_eq!(r.novel, Some(0.0));
        assert_eq!(r.unique, Some(0.0));
        assert_eq!(r.f1_arc, Some(1.0));
    }

    #[test]
    fn csv_scales_distances_and_matches_header() {
        let r = MetricsReport { samples: 3, mmd: Some(0.0123), jsd: Some(0.5), ..Default::default() };
        let row = r.csv_row();
        assert_eq!(row.split(',').count(), MetricsReport::CSV_HEADER.split(',').count());
        assert!(row.contains(",1.2300,50.0000,"), "{row}");
        let back: MetricsReport = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(back, r);
    }
}
