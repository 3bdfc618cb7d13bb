//! Layout-quality metrics.
//!
//! Alignment and Overlap are normalized by the element count. Maximum IoU
//! matches layouts and elements optimally; pairs whose label multisets
//! differ score 0 but may still be matched, so the metric is defined for any
//! two equally sized collections.

mod assignment;
mod fid;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use assignment::{assignment_total, solve_assignment};
pub use fid::{fid, fid_from_moments, FeatureSet, EIGEN_TOLERANCE};

use crate::constraints::ConstraintSet;
use crate::error::{Error, Result};
use crate::layout::{iou, Layout};

/// Per-element gaps are clamped to `[0, 1 - ALIGNMENT_GAP_CAP_EPS]` before the log.
pub const ALIGNMENT_GAP_CAP_EPS: f64 = 1e-8;

/// A constraint counts as violated when its cost exceeds this.
pub const VIOLATION_EPS: f64 = 1e-4;

/// `(1/N) Σ_i −ln(1 − d_i)`, where `d_i` is the smallest distance between one
/// of element `i`'s six alignment lines and the same line of any other element.
pub fn alignment_score(layout: &Layout) -> f64 {
    let n = layout.len();
    if n < 2 {
        return 0.0;
    }
    let lines: Vec<[f64; 6]> = layout
        .elements()
        .iter()
        .map(|e| e.bbox.alignment_lines())
        .collect();
    let mut total = 0.0;
    for i in 0..n {
        let mut d = f64::INFINITY;
        for j in 0..n {
            if i == j {
                continue;
            }
            for k in 0..6 {
                d = d.min((lines[i][k] - lines[j][k]).abs());
            }
        }
        let d = d.clamp(0.0, 1.0 - ALIGNMENT_GAP_CAP_EPS);
        total += -(1.0 - d).ln();
    }
    total / n as f64
}

/// `(1/N) Σ_{i≠j} area(b_i ∩ b_j) / area(b_i)`; zero-area boxes contribute 0.
pub fn overlap_score(layout: &Layout) -> f64 {
    let boxes = layout.boxes();
    let n = boxes.len();
    let mut total = 0.0;
    for (i, bi) in boxes.iter().enumerate() {
        let area = bi.area();
        if area <= 0.0 {
            continue;
        }
        for (j, bj) in boxes.iter().enumerate() {
            if i != j {
                total += bi.intersection_area(bj) / area;
            }
        }
    }
    total / n as f64
}

/// Optimal label-preserving element matching between two layouts.
#[derive(Debug, Clone, PartialEq)]
pub struct Similarity {
    pub score: f64,
    /// Element `i` of the first layout is matched to element `matching[i]` of
    /// the second.
    pub matching: Vec<usize>,
}

/// Mean IoU under the best matching that pairs only equal labels.
pub fn layout_similarity(a: &Layout, b: &Layout) -> Result<f64> {
    layout_matching(a, b).map(|s| s.score)
}

pub fn layout_matching(a: &Layout, b: &Layout) -> Result<Similarity> {
    if a.label_multiset() != b.label_multiset() {
        return Err(Error::LabelMismatch);
    }
    let mut groups: BTreeMap<usize, (Vec<usize>, Vec<usize>)> = BTreeMap::new();
    for (i, e) in a.elements().iter().enumerate() {
        groups.entry(e.label).or_default().0.push(i);
    }
    for (j, e) in b.elements().iter().enumerate() {
        groups.entry(e.label).or_default().1.push(j);
    }
    let (ba, bb) = (a.boxes(), b.boxes());
    let mut matching = vec![0usize; a.len()];
    for (ia, ib) in groups.values() {
        let scores: Vec<Vec<f64>> = ia
            .iter()
            .map(|&i| ib.iter().map(|&j| iou(&ba[i], &bb[j])).collect())
            .collect();
        let perm = solve_assignment(&scores, true)?;
        for (r, &c) in perm.iter().enumerate() {
            matching[ia[r]] = ib[c];
        }
    }
    let total: f64 = matching
        .iter()
        .enumerate()
        .map(|(i, &j)| iou(&ba[i], &bb[j]))
        .sum();
    Ok(Similarity {
        score: total / a.len() as f64,
        matching,
    })
}

/// Similarity, or 0 when the label multisets differ.
fn similarity_or_zero(a: &Layout, b: &Layout) -> f64 {
    layout_similarity(a, b).unwrap_or(0.0)
}

/// Mean layout similarity under the best one-to-one matching of the two
/// collections.
pub fn max_iou(generated: &[Layout], references: &[Layout]) -> Result<f64> {
    if generated.len() != references.len() {
        return Err(Error::SizeMismatch {
            what: "layout collections (generated vs reference)",
            left: generated.len(),
            right: references.len(),
        });
    }
    if generated.is_empty() {
        return Err(Error::Validation("max_iou needs at least one layout".into()));
    }
    let scores: Vec<Vec<f64>> = generated
        .iter()
        .map(|g| references.iter().map(|r| similarity_or_zero(g, r)).collect())
        .collect();
    let perm = solve_assignment(&scores, true)?;
    Ok(assignment_total(&scores, &perm) / generated.len() as f64)
}

/// Percentage of individual constraints whose cost exceeds [`VIOLATION_EPS`].
pub fn violation_rate(layouts: &[Layout], sets: &[ConstraintSet]) -> Result<f64> {
    if layouts.len() != sets.len() {
        return Err(Error::SizeMismatch {
            what: "layouts vs constraint sets",
            left: layouts.len(),
            right: sets.len(),
        });
    }
    let mut total = 0usize;
    let mut violated = 0usize;
    for (layout, set) in layouts.iter().zip(sets) {
        let costs = set.eval_all(layout)?;
        total += costs.len();
        violated += costs.iter().filter(|&&c| c > VIOLATION_EPS).count();
    }
    if total == 0 {
        return Ok(0.0);
    }
    Ok(100.0 * violated as f64 / total as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub fid: Option<f64>,
    pub max_iou: f64,
    pub alignment: f64,
    pub overlap: f64,
}

/// Mean alignment/overlap over a collection.
pub fn mean_alignment_overlap(layouts: &[Layout]) -> (f64, f64) {
    if layouts.is_empty() {
        return (0.0, 0.0);
    }
    let m = layouts.len() as f64;
    let a: f64 = layouts.iter().map(alignment_score).sum();
    let o: f64 = layouts.iter().map(overlap_score).sum();
    (a / m, o / m)
}

/// Computes the full metric suite. FID is included only when both feature
/// sets are supplied.
pub fn evaluate(
    generated: &[Layout],
    references: &[Layout],
    features: Option<(&FeatureSet, &FeatureSet)>,
) -> Result<MetricReport> {
    let max_iou = max_iou(generated, references)?;
    let (alignment, overlap) = mean_alignment_overlap(generated);
    let fid = features.map(|(r, g)| fid(r, g)).transpose()?;
    Ok(MetricReport {
        fid,
        max_iou,
        alignment,
        overlap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layout::{BBox, Element};

    fn layout(items: &[(usize, [f64; 4])]) -> Layout {
        Layout::with_max_elements(
            items
                .iter()
                .map(|&(l, b)| Element::new(l, BBox::from_array(b)))
                .collect(),
            64,
        )
        .unwrap()
    }

    #[test]
    fn alignment_cases() {
        assert_eq!(alignment_score(&layout(&[(0, [0.5, 0.5, 0.2, 0.2])])), 0.0);
        // Shared left edge at 0.125.
        let l = layout(&[(0, [0.25, 0.25, 0.25, 0.125]), (1, [0.375, 0.75, 0.5, 0.25])]);
        assert_eq!(alignment_score(&l), 0.0);
        // Left edges 0.01 apart, every other line pair farther.
        let l = layout(&[(0, [0.2, 0.1, 0.2, 0.1]), (0, [0.41, 0.7, 0.6, 0.3])]);
        assert!((alignment_score(&l) - (-(0.99f64).ln())).abs() < 1e-12);
    }

    #[test]
    fn overlap_cases() {
        let disjoint = layout(&[(0, [0.25, 0.25, 0.5, 0.5]), (0, [0.75, 0.75, 0.5, 0.5])]);
        assert_eq!(overlap_score(&disjoint), 0.0);
        let same = layout(&[(0, [0.5, 0.5, 0.4, 0.4]), (1, [0.5, 0.5, 0.4, 0.4])]);
        assert!((overlap_score(&same) - 1.0).abs() < 1e-12);
        let nested = layout(&[(0, [0.5, 0.5, 0.4, 0.4]), (1, [0.5, 0.5, 0.2, 0.4])]);
        assert!((overlap_score(&nested) - 0.75).abs() < 1e-12);
        let degenerate = layout(&[(0, [0.5, 0.5, 0.0, 0.4]), (1, [0.5, 0.5, 0.2, 0.4])]);
        assert_eq!(overlap_score(&degenerate), 0.0);
    }

    #[test]
    fn similarity_identity_and_mismatch() {
        let a = layout(&[(0, [0.2, 0.2, 0.2, 0.2]), (1, [0.7, 0.7, 0.3, 0.2])]);
        assert_eq!(layout_similarity(&a, &a).unwrap(), 1.0);
        let b = layout(&[(0, [0.2, 0.2, 0.2, 0.2]), (0, [0.7, 0.7, 0.3, 0.2])]);
        assert!(matches!(layout_similarity(&a, &b), Err(Error::LabelMismatch)));
        let far = layout(&[(1, [0.9, 0.1, 0.1, 0.1]), (0, [0.1, 0.9, 0.1, 0.1])]);
        assert_eq!(layout_similarity(&a, &far).unwrap(), 0.0);
    }

    #[test]
    fn similarity_prefers_best_same_label_match() {
        let a = layout(&[(0, [0.2, 0.2, 0.2, 0.2]), (0, [0.7, 0.7, 0.2, 0.2])]);
        let b = layout(&[(0, [0.7, 0.7, 0.2, 0.2]), (0, [0.2, 0.2, 0.2, 0.2])]);
        let s = layout_matching(&a, &b).unwrap();
        assert_eq!(s.matching, vec![1, 0]);
        assert_eq!(s.score, 1.0);
    }

    #[test]
    fn max_iou_cases() {
        let a = layout(&[(0, [0.2, 0.2, 0.2, 0.2])]);
        let b = layout(&[(1, [0.2, 0.2, 0.2, 0.2])]);
        let c = layout(&[(0, [0.6, 0.6, 0.3, 0.3]), (1, [0.3, 0.3, 0.3, 0.3])]);
        let gen = vec![a.clone(), c.clone()];
        assert_eq!(max_iou(&gen, &gen).unwrap(), 1.0);
        assert_eq!(max_iou(&[a.clone()], &[b.clone()]).unwrap(), 0.0);
        let err = max_iou(&gen, &[a]).unwrap_err();
        assert!(err.to_string().contains("2 vs 1"), "{err}");
    }

    #[test]
    fn evaluate_without_features() {
        let a = layout(&[(0, [0.2, 0.2, 0.2, 0.2]), (1, [0.6, 0.6, 0.2, 0.2])]);
        let r = evaluate(&[a.clone()], &[a], None).unwrap();
        assert!(r.fid.is_none());
        assert_eq!(r.max_iou, 1.0);
    }
}
