//! Design constraints as nonnegative hinge costs over a layout. Every cost is
//! exactly 0 when its constraint holds.
//!
//! Relational constraints name a `subject` and an `object` element: `loc-above`
//! means the subject sits above the object, `size-larger` means the subject is
//! larger than the object by the tolerance factor `1 + gamma`, and so on.
//! `canvas-region` places the subject's vertical center in one third of the
//! canvas. `alignment` and `non-overlap` act on the whole layout.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layout::{BBox, Layout};
use crate::metrics::{alignment_score, overlap_score};

pub const DEFAULT_TAU: f64 = 0.004;
pub const DEFAULT_GAMMA: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConstraintKind {
    Alignment,
    NonOverlap,
    SizeLarger,
    SizeSmaller,
    SizeEqual,
    LocAbove,
    LocBelow,
    LocLeft,
    LocRight,
    LocOverlap,
    CanvasRegion,
}

impl ConstraintKind {
    pub const ALL: [ConstraintKind; 11] = [
        ConstraintKind::Alignment,
        ConstraintKind::NonOverlap,
        ConstraintKind::SizeLarger,
        ConstraintKind::SizeSmaller,
        ConstraintKind::SizeEqual,
        ConstraintKind::LocAbove,
        ConstraintKind::LocBelow,
        ConstraintKind::LocLeft,
        ConstraintKind::LocRight,
        ConstraintKind::LocOverlap,
        ConstraintKind::CanvasRegion,
    ];

    pub fn is_global(self) -> bool {
        matches!(self, ConstraintKind::Alignment | ConstraintKind::NonOverlap)
    }

    pub fn is_pairwise(self) -> bool {
        !self.is_global() && self != ConstraintKind::CanvasRegion
    }
}

/// Vertical thirds of the canvas.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Region {
    Top,
    Middle,
    Bottom,
}

impl Region {
    pub fn interval(self) -> (f64, f64) {
        match self {
            Region::Top => (0.0, 1.0 / 3.0),
            Region::Middle => (1.0 / 3.0, 2.0 / 3.0),
            Region::Bottom => (2.0 / 3.0, 1.0),
        }
    }

    /// First region whose closed interval contains `y`.
    pub fn containing(y: f64) -> Region {
        [Region::Top, Region::Middle, Region::Bottom]
            .into_iter()
            .find(|r| {
                let (lo, hi) = r.interval();
                y >= lo && y <= hi
            })
            .unwrap_or(Region::Bottom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub kind: ConstraintKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subject: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub object: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region: Option<Region>,
    /// Overrides the set-level alignment threshold.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    /// Overrides the set-level size tolerance.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
}

impl Constraint {
    fn bare(kind: ConstraintKind) -> Self {
        Constraint {
            kind,
            subject: None,
            object: None,
            region: None,
            tau: None,
            gamma: None,
        }
    }

    pub fn alignment() -> Self {
        Self::bare(ConstraintKind::Alignment)
    }

    pub fn non_overlap() -> Self {
        Self::bare(ConstraintKind::NonOverlap)
    }

    pub fn pair(kind: ConstraintKind, subject: usize, object: usize) -> Self {
        Constraint {
            subject: Some(subject),
            object: Some(object),
            ..Self::bare(kind)
        }
    }

    pub fn canvas(subject: usize, region: Region) -> Self {
        Constraint {
            subject: Some(subject),
            region: Some(region),
            ..Self::bare(ConstraintKind::CanvasRegion)
        }
    }

    /// Checks the shape of the constraint against a layout of `n` elements.
    pub fn validate(&self, n: usize) -> std::result::Result<(), String> {
        for (name, v) in [("tau", self.tau), ("gamma", self.gamma)] {
            if let Some(v) = v {
                if !v.is_finite() || v < 0.0 {
                    return Err(format!("{name} must be a finite nonnegative number"));
                }
            }
        }
        let in_range = |i: usize, role: &str| {
            if i < n {
                Ok(())
            } else {
                Err(format!("{role} index {i} out of range for {n} elements"))
            }
        };
        match self.kind {
            k if k.is_global() => {
                if self.subject.is_some() || self.object.is_some() || self.region.is_some() {
                    return Err(format!("{k:?} takes no element indices or region"));
                }
            }
            ConstraintKind::CanvasRegion => {
                let s = self.subject.ok_or("canvas-region needs a subject")?;
                in_range(s, "subject")?;
                if self.object.is_some() {
                    return Err("canvas-region takes no object".into());
                }
                if self.region.is_none() {
                    return Err("canvas-region needs a region".into());
                }
            }
            k => {
                let s = self.subject.ok_or_else(|| format!("{k:?} needs a subject"))?;
                let o = self.object.ok_or_else(|| format!("{k:?} needs an object"))?;
                in_range(s, "subject")?;
                in_range(o, "object")?;
                if s == o {
                    return Err("subject and object must differ".into());
                }
                if self.region.is_some() {
                    return Err(format!("{k:?} takes no region"));
                }
            }
        }
        Ok(())
    }
}

fn hinge(v: f64) -> f64 {
    v.max(0.0)
}

/// Cost of one constraint on `layout`, using `tau`/`gamma` unless the
/// constraint overrides them.
pub fn eval_constraint(c: &Constraint, layout: &Layout, tau: f64, gamma: f64) -> Result<f64> {
    c.validate(layout.len())
        .map_err(|message| Error::InvalidConstraint { index: 0, message })?;
    Ok(cost_unchecked(c, layout, tau, gamma))
}

fn cost_unchecked(c: &Constraint, layout: &Layout, tau: f64, gamma: f64) -> f64 {
    let tau = c.tau.unwrap_or(tau);
    let gamma = c.gamma.unwrap_or(gamma);
    let get = |i: Option<usize>| -> BBox { *layout.bbox(i.expect("validated")).expect("validated") };
    match c.kind {
        ConstraintKind::Alignment => hinge(alignment_score(layout) - tau),
        ConstraintKind::NonOverlap => overlap_score(layout),
        ConstraintKind::CanvasRegion => {
            let y = get(c.subject).yc();
            let (lo, hi) = c.region.expect("validated").interval();
            hinge(lo - y) + hinge(y - hi)
        }
        kind => {
            let s = get(c.subject);
            let o = get(c.object);
            pair_cost(kind, &s, &o, gamma)
        }
    }
}

fn pair_cost(kind: ConstraintKind, s: &BBox, o: &BBox, gamma: f64) -> f64 {
    let (a_s, a_o) = (s.area(), o.area());
    let g = 1.0 + gamma;
    match kind {
        ConstraintKind::SizeLarger => hinge(g * a_o - a_s),
        ConstraintKind::SizeSmaller => hinge(g * a_s - a_o),
        ConstraintKind::SizeEqual => hinge(a_s - g * a_o) + hinge(a_o - g * a_s),
        ConstraintKind::LocAbove => hinge(s.bottom() - o.top()),
        ConstraintKind::LocBelow => hinge(o.bottom() - s.top()),
        ConstraintKind::LocLeft => hinge(s.right() - o.left()),
        ConstraintKind::LocRight => hinge(o.right() - s.left()),
        ConstraintKind::LocOverlap => {
            hinge(s.left().max(o.left()) - s.right().min(o.right()))
                + hinge(s.top().max(o.top()) - s.bottom().min(o.bottom()))
        }
        _ => unreachable!("not a pairwise kind"),
    }
}

/// An ordered list of constraints with shared tolerances. The list order
/// fixes the index of each constraint's multiplier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "ConstraintDoc")]
pub struct ConstraintSet {
    pub tau: f64,
    pub gamma: f64,
    pub constraints: Vec<Constraint>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ConstraintDoc {
    List(Vec<Constraint>),
    Object {
        #[serde(default)]
        tau: Option<f64>,
        #[serde(default)]
        gamma: Option<f64>,
        #[serde(default)]
        constraints: Vec<Constraint>,
    },
}

impl From<ConstraintDoc> for ConstraintSet {
    fn from(doc: ConstraintDoc) -> Self {
        match doc {
            ConstraintDoc::List(constraints) => ConstraintSet::new(constraints),
            ConstraintDoc::Object {
                tau,
                gamma,
                constraints,
            } => ConstraintSet {
                tau: tau.unwrap_or(DEFAULT_TAU),
                gamma: gamma.unwrap_or(DEFAULT_GAMMA),
                constraints,
            },
        }
    }
}

impl Default for ConstraintSet {
    fn default() -> Self {
        ConstraintSet::new(Vec::new())
    }
}

impl ConstraintSet {
    pub fn new(constraints: Vec<Constraint>) -> Self {
        ConstraintSet {
            tau: DEFAULT_TAU,
            gamma: DEFAULT_GAMMA,
            constraints,
        }
    }

    pub fn len(&self) -> usize {
        self.constraints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.constraints.is_empty()
    }

    pub fn extend(&mut self, more: impl IntoIterator<Item = Constraint>) {
        self.constraints.extend(more);
    }

    /// Validates every constraint for a layout of `n` elements.
    pub fn validate(&self, n: usize) -> Result<()> {
        for (name, v) in [("tau", self.tau), ("gamma", self.gamma)] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Validation(format!(
                    "{name} must be a finite nonnegative number"
                )));
            }
        }
        for (index, c) in self.constraints.iter().enumerate() {
            c.validate(n)
                .map_err(|message| Error::InvalidConstraint { index, message })?;
        }
        Ok(())
    }

    /// Costs of all constraints, in list order.
    pub fn eval_all(&self, layout: &Layout) -> Result<Vec<f64>> {
        self.validate(layout.len())?;
        Ok(self.eval_validated(layout))
    }

    /// [`ConstraintSet::eval_all`] without re-validating; callers must have
    /// validated against this layout's element count.
    pub fn eval_validated(&self, layout: &Layout) -> Vec<f64> {
        self.constraints
            .iter()
            .map(|c| cost_unchecked(c, layout, self.tau, self.gamma))
            .collect()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }
}

/// Every relation that holds on `layout`: one size and one location relation
/// per unordered pair, then one canvas-region relation per element.
pub fn enumerate_relations(layout: &Layout, gamma: f64) -> Vec<Constraint> {
    let boxes = layout.boxes();
    let n = boxes.len();
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in (i + 1)..n {
            let (a, b) = (&boxes[i], &boxes[j]);
            let g = 1.0 + gamma;
            let size = if a.area() > g * b.area() {
                ConstraintKind::SizeLarger
            } else if b.area() > g * a.area() {
                ConstraintKind::SizeSmaller
            } else {
                ConstraintKind::SizeEqual
            };
            out.push(Constraint::pair(size, i, j));

            let loc = if a.bottom() < b.top() {
                ConstraintKind::LocAbove
            } else if b.bottom() < a.top() {
                ConstraintKind::LocBelow
            } else if a.right() < b.left() {
                ConstraintKind::LocLeft
            } else if b.right() < a.left() {
                ConstraintKind::LocRight
            } else {
                ConstraintKind::LocOverlap
            };
            out.push(Constraint::pair(loc, i, j));
        }
    }
    for (i, b) in boxes.iter().enumerate() {
        out.push(Constraint::canvas(i, Region::containing(b.yc())));
    }
    out
}

/// Number of relations kept for a given fraction of `total`.
pub fn subset_size(total: usize, fraction: f64) -> usize {
    // The small offset keeps products like 0.3 * 10 from rounding up.
    ((fraction * total as f64 - 1e-9).ceil().max(0.0) as usize).min(total)
}

/// A seeded uniform subset of the relations holding on `layout`, kept in
/// enumeration order.
pub fn relations_from_layout(layout: &Layout, fraction: f64, seed: u64) -> Result<ConstraintSet> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::Validation(format!(
            "fraction {fraction} is outside [0, 1]"
        )));
    }
    let all = enumerate_relations(layout, DEFAULT_GAMMA);
    let k = subset_size(all.len(), fraction);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = index::sample(&mut rng, all.len(), k).into_vec();
    picked.sort_unstable();
    Ok(ConstraintSet::new(picked.into_iter().map(|i| all[i]).collect()))
}
