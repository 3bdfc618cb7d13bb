mod common;

use common::*;
use latentlayout::layout::{iou, BBox, Layout};
use latentlayout::metrics::{
    alignment_score, fid, layout_similarity, max_iou, overlap_score, violation_rate, FeatureSet,
};
use latentlayout::constraints::{Constraint, ConstraintKind, ConstraintSet};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn arb_box() -> impl Strategy<Value = BBox> {
    (0.0f64..1.0, 0.0f64..1.0, 0.0f64..1.0, 0.0f64..1.0).prop_map(|(a, b, c, d)| BBox::new(a, b, c, d))
}

fn arb_layout(max: usize) -> impl Strategy<Value = Layout> {
    prop::collection::vec((0usize..3, arb_box()), 1..=max).prop_map(|v| {
        let (labels, boxes): (Vec<usize>, Vec<BBox>) = v.into_iter().unzip();
        Layout::from_parts(&labels, &boxes).unwrap()
    })
}

proptest! {
    #[test]
    fn iou_is_symmetric_and_bounded(a in arb_box(), b in arb_box()) {
        let (x, y) = (iou(&a, &b), iou(&b, &a));
        prop_assert_eq!(x, y);
        prop_assert!((0.0..=1.0).contains(&x));
    }

    #[test]
    fn scores_match_oracles(l in arb_layout(9)) {
        prop_assert!((alignment_score(&l) - oracle_alignment(&l)).abs() < 1e-12);
        prop_assert!((overlap_score(&l) - oracle_overlap(&l)).abs() < 1e-12);
        prop_assert!(alignment_score(&l) >= 0.0 && overlap_score(&l) >= 0.0);
    }

    #[test]
    fn similarity_matches_enumeration(a in arb_layout(6), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut labels = a.labels();
        for i in (1..labels.len()).rev() {
            labels.swap(i, rng.random_range(0..=i));
        }
        let b = random_layout(&mut rng, &labels);
        let want = brute_similarity(&a, &b).unwrap();
        prop_assert_eq!(layout_similarity(&a, &b).unwrap(), want);
        prop_assert_eq!(layout_similarity(&a, &a).unwrap(), brute_similarity(&a, &a).unwrap());
    }
}

#[test]
fn max_iou_matches_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..100 {
        let m = rng.random_range(1..=4);
        let pool: Vec<Vec<usize>> = (0..2)
            .map(|_| (0..rng.random_range(1..=4)).map(|_| rng.random_range(0..3)).collect())
            .collect();
        let draw = |rng: &mut ChaCha8Rng| {
            let labels = &pool[rng.random_range(0..pool.len())];
            random_layout(rng, labels)
        };
        let gen: Vec<Layout> = (0..m).map(|_| draw(&mut rng)).collect();
        let refs: Vec<Layout> = (0..m).map(|_| draw(&mut rng)).collect();
        assert_eq!(max_iou(&gen, &refs).unwrap(), brute_max_iou(&gen, &refs));
    }
}

#[test]
fn fid_reference_cases() {
    let x = FeatureSet::new(vec![vec![0.25, 1.0], vec![0.5, -1.0], vec![2.0, 0.0]]).unwrap();
    assert!(fid(&x, &x).unwrap().abs() <= 1e-6);
    let a = FeatureSet::new(vec![vec![0.5]; 10]).unwrap();
    let b = FeatureSet::new(vec![vec![3.0]; 10]).unwrap();
    assert_eq!(fid(&a, &b).unwrap(), 6.25);

    // Gaussians N(0, 1) and N(0, 4): (σ1 − σ2)² = 1.
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let n1 = Normal::new(0.0, 1.0).unwrap();
    let n2 = Normal::new(0.0, 2.0).unwrap();
    let s1 = FeatureSet::new((0..20_000).map(|_| vec![n1.sample(&mut rng)]).collect()).unwrap();
    let s2 = FeatureSet::new((0..20_000).map(|_| vec![n2.sample(&mut rng)]).collect()).unwrap();
    assert!((fid(&s1, &s2).unwrap() - 1.0).abs() < 0.1);
}

#[test]
fn violation_rate_counts_constraints() {
    let l = layout(&[(0, [0.25, 0.25, 0.25, 0.25]), (1, [0.75, 0.75, 0.25, 0.25])]);
    let set = ConstraintSet::new(vec![
        Constraint::pair(ConstraintKind::LocAbove, 0, 1),
        Constraint::pair(ConstraintKind::LocAbove, 1, 0),
        Constraint::non_overlap(),
        Constraint::pair(ConstraintKind::LocLeft, 1, 0),
    ]);
    assert_eq!(violation_rate(&[l.clone()], &[set]).unwrap(), 50.0);
    assert_eq!(violation_rate(&[l], &[ConstraintSet::default()]).unwrap(), 0.0);
}
