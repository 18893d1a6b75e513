use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::cad::{
    serialize_with_origins, validate_sequence, CadSequence, CadTree, NodeParams, NodeType, PrimitiveKind, TokenPair, TokenRole,
    TokenType,
};

use super::MetricsError;

/// Valid tokens only; two sequences are the same program when these match.
fn key(s: &CadSequence) -> &[TokenPair] {
    s.valid_tokens()
}

/// Percent of generated programs that do not occur in the training set.
pub fn novelty(gen: &[CadSequence], train: &[CadSequence]) -> f64 {
    if gen.is_empty() {
        return 0.0;
    }
    let seen: std::collections::HashSet<_> = train.iter().map(key).collect();
    100.0 * gen.iter().filter(|g| !seen.contains(key(g))).count() as f64 / gen.len() as f64
}

/// Percent of generated programs that occur exactly once among the generated set.
pub fn uniqueness(gen: &[CadSequence]) -> f64 {
    if gen.is_empty() {
        return 0.0;
    }
    let mut counts: HashMap<_, usize> = HashMap::new();
    for g in gen {
        *counts.entry(key(g)).or_default() += 1;
    }
    100.0 * gen.iter().filter(|g| counts[key(g)] == 1).count() as f64 / gen.len() as f64
}

/// Percent of generated programs that parse and execute to a watertight solid.
pub fn valid_ratio(gen: &[CadSequence]) -> f64 {
    if gen.is_empty() {
        return 0.0;
    }
    100.0 * gen.iter().filter(|g| validate_sequence(g).all_pass()).count() as f64 / gen.len() as f64
}

/// Occurrence counts of lines, arcs, circles and extrusions in a tree.
pub fn feature_counts(tree: &CadTree) -> [usize; 4] {
    let [l, a, c] = tree.primitive_counts();
    [l, a, c, tree.count(NodeType::Extrusion)]
}

pub const FEATURE_NAMES: [&str; 4] = ["line", "arc", "circle", "extrusion"];

/// F1 of one feature type from total occurrence counts: matched
/// occurrences are `min(gen, ref)`. Both absent scores 1.
pub fn f1_from_counts(gen: usize, refs: usize) -> f64 {
    if gen == 0 && refs == 0 {
        return 1.0;
    }
    if gen == 0 || refs == 0 {
        return 0.0;
    }
    let tp = gen.min(refs) as f64;
    let (p, r) = (tp / gen as f64, tp / refs as f64);
    2.0 * p * r / (p + r)
}

/// F1 per feature type between the multisets of feature occurrences of a
/// generated and a reference set.
pub fn f1_per_type(gen: &[CadTree], refs: &[CadTree]) -> [f64; 4] {
    let total = |ts: &[CadTree]| {
        ts.iter().fold([0usize; 4], |mut acc, t| {
            for (a, c) in acc.iter_mut().zip(feature_counts(t)) {
                *a += c;
            }
            acc
        })
    };
    let (g, r) = (total(gen), total(refs));
    [0, 1, 2, 3].map(|i| f1_from_counts(g[i], r[i]))
}

/// Correct/total tallies for paired evaluation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairedCounts {
    pub cmd: [usize; 2],
    pub param: [usize; 2],
    pub line: [usize; 2],
    pub arc: [usize; 2],
    pub circle: [usize; 2],
    pub ext: [usize; 2],
}

/// Percent accuracies from [`PairedCounts`]; `None` where nothing was counted.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PairedAccuracy {
    pub acc_cmd: Option<f64>,
    pub acc_param: Option<f64>,
    pub acc_line: Option<f64>,
    pub acc_arc: Option<f64>,
    pub acc_circle: Option<f64>,
    pub acc_ext: Option<f64>,
}

fn pct(c: [usize; 2]) -> Option<f64> {
    (c[1] > 0).then(|| 100.0 * c[0] as f64 / c[1] as f64)
}

impl PairedCounts {
    pub fn add(&mut self, o: &PairedCounts) {
        for (a, b) in [
            (&mut self.cmd, o.cmd),
            (&mut self.param, o.param),
            (&mut self.line, o.line),
            (&mut self.arc, o.arc),
            (&mut self.circle, o.circle),
            (&mut self.ext, o.ext),
        ] {
            a[0] += b[0];
            a[1] += b[1];
        }
    }

    pub fn accuracy(&self) -> PairedAccuracy {
        PairedAccuracy {
            acc_cmd: pct(self.cmd),
            acc_param: pct(self.param),
            acc_line: pct(self.line),
            acc_arc: pct(self.arc),
            acc_circle: pct(self.circle),
            acc_ext: pct(self.ext),
        }
    }
}

/// Compares a predicted sequence against the ground-truth tree.
///
/// * command: every ground-truth token whose predicted type matches;
/// * parameter: each coordinate component and each scalar of a value
///   token, counted only where the predicted type also matches;
/// * line / arc / circle / extrusion: a ground-truth curve or extrusion is
///   correct when every one of its tokens is reproduced exactly.
pub fn paired_counts(pred: &CadSequence, truth: &CadTree) -> Result<PairedCounts, MetricsError> {
    let (seq, origins) = match serialize_with_origins(truth, pred.len()) {
        Ok(r) => r,
        Err(_) => serialize_with_origins(truth, ORIGIN_CAPACITY)?,
    };
    let n = seq.valid_len;
    let pred_type = |i: usize| if i < pred.len() { pred.token_type(i) } else { TokenType::Pad };
    let pred_tok = |i: usize| pred.tokens.get(i).copied();
    let mut c = PairedCounts::default();
    let mut owners: HashMap<usize, bool> = HashMap::new();
    for i in 0..n {
        let ty = seq.token_type(i);
        let same_type = pred_type(i) == ty;
        c.cmd[1] += 1;
        c.cmd[0] += usize::from(same_type);
        let t = seq.tokens[i];
        let p = pred_tok(i);
        match ty {
            TokenType::Coord => {
                c.param[1] += 2;
                if same_type {
                    let p = p.expect("typed token exists");
                    c.param[0] += usize::from(p.a == t.a) + usize::from(p.b == t.b);
                }
            }
            TokenType::ExtScalar | TokenType::Beta => {
                c.param[1] += 1;
                if same_type {
                    c.param[0] += usize::from(p.expect("typed token exists").a == t.a);
                }
            }
            _ => {}
        }
        if !matches!(origins[i].role, TokenRole::Cls | TokenRole::End | TokenRole::EndSolid) {
            let exact = p == Some(t);
            let e = owners.entry(origins[i].node).or_insert(true);
            *e &= exact;
        }
    }
    for (node, ok) in owners {
        let slot = match &truth.node(node).params {
            NodeParams::Curve(cv) => match cv.kind() {
                PrimitiveKind::Line => &mut c.line,
                PrimitiveKind::Arc => &mut c.arc,
                PrimitiveKind::Circle => &mut c.circle,
            },
            NodeParams::Extrusion(_) => &mut c.ext,
            NodeParams::Empty => continue,
        };
        slot[1] += 1;
        slot[0] += usize::from(ok);
    }
    Ok(c)
}

/// Fallback padding when the truth does not fit the predicted length.
const ORIGIN_CAPACITY: usize = 1 << 14;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cad::serialize_tree;
    use crate::fixtures::arc_part;

    #[test]
    fn novelty_and_uniqueness() {
        let a = serialize_tree(&arc_part(), 64).unwrap();
        let mut b = a.clone();
        b.tokens[1] = TokenPair::coord(crate::cad::TokenId::value(40).unwrap(), crate::cad::TokenId::value(41).unwrap());
        assert_eq!(novelty(&[a.clone()], &[a.clone(), b.clone()]), 0.0);
        assert_eq!(novelty(&[a.clone(), b.clone()], &[a.clone()]), 50.0);
        assert_eq!(uniqueness(&[a.clone(), b.clone()]), 100.0);
        assert_eq!(uniqueness(&[a.clone(), a.clone(), b]), 100.0 / 3.0);
        assert_eq!(valid_ratio(&[a]), 100.0);
    }

    #[test]
    fn f1_hand_example() {
        // three generated lines against two reference lines and one arc
        assert!((f1_from_counts(3, 2) - 0.8).abs() < 1e-15);
        assert_eq!(f1_from_counts(0, 1), 0.0);
    }

    #[test]
    fn perfect_prediction_scores_100() {
        let tree = arc_part();
        let seq = serialize_tree(&tree, 64).unwrap();
        let acc = paired_counts(&seq, &tree).unwrap().accuracy();
        assert_eq!(acc.acc_cmd, Some(100.0));
        assert_eq!(acc.acc_param, Some(100.0));
        assert_eq!(acc.acc_line, Some(100.0));
        assert_eq!(acc.acc_arc, Some(100.0));
        assert_eq!(acc.acc_circle, None);
        assert_eq!(acc.acc_ext, Some(100.0));
    }

    #[test]
    fn one_wrong_component_breaks_one_curve() {
        let tree = arc_part();
        let mut seq = serialize_tree(&tree, 64).unwrap();
        // token 1 is the first line's start point
        let t = seq.tokens[1];
        seq.tokens[1] = TokenPair::coord(t.a, crate::cad::TokenId::value(if t.b.get() == 100 { 101 } else { 100 }).unwrap());
        let c = paired_counts(&seq, &tree).unwrap();
        assert_eq!(c.cmd[0], c.cmd[1]);
        assert_eq!(c.param[0] + 1, c.param[1]);
        assert_eq!(c.line, [2, 3]);
        assert_eq!(c.arc, [1, 1]);
    }
}
