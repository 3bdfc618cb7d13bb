//! Fixtures and brute-force oracles shared by the integration tests.
#![allow(dead_code)]

use latentlayout::constraints::{Constraint, ConstraintKind, Region};
use latentlayout::layout::{iou, BBox, Element, Layout};
use rand::Rng;

pub fn layout(items: &[(usize, [f64; 4])]) -> Layout {
    Layout::new(
        items
            .iter()
            .map(|&(l, b)| Element::new(l, BBox::from_array(b)))
            .collect(),
    )
    .unwrap()
}

/// Boxes with centers anywhere on the canvas and sides in `[0.02, 0.6]`.
pub fn random_box<R: Rng>(rng: &mut R) -> BBox {
    BBox::new(
        rng.random(),
        rng.random(),
        rng.random_range(0.02..0.6),
        rng.random_range(0.02..0.6),
    )
}

pub fn random_layout<R: Rng>(rng: &mut R, labels: &[usize]) -> Layout {
    Layout::new(
        labels
            .iter()
            .map(|&l| Element::new(l, random_box(rng)))
            .collect(),
    )
    .unwrap()
}

pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn go(prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                prefix.push(i);
                go(prefix, used, out);
                prefix.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    go(&mut Vec::new(), &mut vec![false; n], &mut out);
    out
}

/// Best label-preserving matching by enumeration, or `None` when the label
/// multisets differ.
pub fn brute_similarity(a: &Layout, b: &Layout) -> Option<f64> {
    if a.len() != b.len() {
        return None;
    }
    let (ea, eb) = (a.elements(), b.elements());
    let mut best: Option<f64> = None;
    for perm in permutations(a.len()) {
        if (0..a.len()).any(|i| ea[i].label != eb[perm[i]].label) {
            continue;
        }
        let total: f64 = (0..a.len()).map(|i| iou(&ea[i].bbox, &eb[perm[i]].bbox)).sum();
        let score = total / a.len() as f64;
        best = Some(best.map_or(score, |s: f64| s.max(score)));
    }
    best
}

pub fn brute_max_iou(generated: &[Layout], references: &[Layout]) -> f64 {
    let m = generated.len();
    let scores: Vec<Vec<f64>> = generated
        .iter()
        .map(|g| {
            references
                .iter()
                .map(|r| brute_similarity(g, r).unwrap_or(0.0))
                .collect()
        })
        .collect();
    permutations(m)
        .iter()
        .map(|p| (0..m).map(|i| scores[i][p[i]]).sum::<f64>() / m as f64)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Alignment score recomputed from box edges and centers.
pub fn oracle_alignment(l: &Layout) -> f64 {
    let boxes = l.boxes();
    let n = boxes.len();
    if n < 2 {
        return 0.0;
    }
    let lines = |b: &BBox| {
        [
            b.xc() - b.w() / 2.0,
            b.xc(),
            b.xc() + b.w() / 2.0,
            b.yc() - b.h() / 2.0,
            b.yc(),
            b.yc() + b.h() / 2.0,
        ]
    };
    let mut sum = 0.0;
    for i in 0..n {
        let li = lines(&boxes[i]);
        let d = (0..n)
            .filter(|&j| j != i)
            .flat_map(|j| {
                let lj = lines(&boxes[j]);
                (0..6).map(move |k| (li[k] - lj[k]).abs())
            })
            .fold(f64::INFINITY, f64::min)
            .min(1.0 - 1e-8);
        sum -= (1.0 - d).ln();
    }
    sum / n as f64
}

/// Pairwise overlap recomputed from explicit intervals.
pub fn oracle_overlap(l: &Layout) -> f64 {
    let boxes = l.boxes();
    let mut sum = 0.0;
    for (i, a) in boxes.iter().enumerate() {
        let area = a.w() * a.h();
        if area <= 0.0 {
            continue;
        }
        for (j, b) in boxes.iter().enumerate() {
            if i == j {
                continue;
            }
            let ix = (a.right().min(b.right()) - a.left().max(b.left())).max(0.0);
            let iy = (a.bottom().min(b.bottom()) - a.top().max(b.top())).max(0.0);
            sum += ix * iy / area;
        }
    }
    sum / boxes.len() as f64
}

/// Whether `c` holds on `l`, decided from the geometric definition rather
/// than the cost function.
pub fn holds(c: &Constraint, l: &Layout, tau: f64, gamma: f64) -> bool {
    let get = |i: Option<usize>| *l.bbox(i.unwrap()).unwrap();
    match c.kind {
        ConstraintKind::Alignment => oracle_alignment(l) <= c.tau.unwrap_or(tau),
        ConstraintKind::NonOverlap => oracle_overlap(l) == 0.0,
        ConstraintKind::CanvasRegion => {
            let y = get(c.subject).yc();
            let (lo, hi) = match c.region.unwrap() {
                Region::Top => (0.0, 1.0 / 3.0),
                Region::Middle => (1.0 / 3.0, 2.0 / 3.0),
                Region::Bottom => (2.0 / 3.0, 1.0),
            };
            lo <= y && y <= hi
        }
        kind => {
            let (s, o) = (get(c.subject), get(c.object));
            let g = 1.0 + c.gamma.unwrap_or(gamma);
            match kind {
                ConstraintKind::SizeLarger => s.area() >= g * o.area(),
                ConstraintKind::SizeSmaller => o.area() >= g * s.area(),
                ConstraintKind::SizeEqual => s.area() <= g * o.area() && o.area() <= g * s.area(),
                ConstraintKind::LocAbove => s.bottom() <= o.top(),
                ConstraintKind::LocBelow => s.top() >= o.bottom(),
                ConstraintKind::LocLeft => s.right() <= o.left(),
                ConstraintKind::LocRight => s.left() >= o.right(),
                ConstraintKind::LocOverlap => {
                    s.left() <= o.right()
                        && o.left() <= s.right()
                        && s.top() <= o.bottom()
                        && o.top() <= s.bottom()
                }
                _ => unreachable!(),
            }
        }
    }
}
