//! Layout data model: boxes on a unit canvas, labeled elements, and label
//! vocabularies.
//!
//! Coordinates are normalized with the origin at the top-left corner, x growing
//! rightward and y growing downward. A box is stored as center plus size.
//! Derived edges are not clipped, so a box hugging the border may report an
//! edge outside `[0, 1]`.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Element cap used when none is configured.
pub const DEFAULT_MAX_ELEMENTS: usize = 9;

/// Index into a [`LabelVocabulary`].
pub type Label = usize;

/// Axis-aligned box in center-size form. Every component lies in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBox")]
pub struct BBox {
    xc: f64,
    yc: f64,
    w: f64,
    h: f64,
}

#[derive(Deserialize)]
struct RawBox {
    xc: f64,
    yc: f64,
    w: f64,
    h: f64,
}

impl TryFrom<RawBox> for BBox {
    type Error = Error;

    fn try_from(raw: RawBox) -> Result<Self> {
        BBox::try_new(raw.xc, raw.yc, raw.w, raw.h)
    }
}

impl BBox {
    /// Builds a box, clamping each component into `[0, 1]`. NaN maps to 0.
    pub fn new(xc: f64, yc: f64, w: f64, h: f64) -> Self {
        fn clamp(v: f64) -> f64 {
            if v.is_nan() {
                0.0
            } else {
                v.clamp(0.0, 1.0)
            }
        }
        BBox {
            xc: clamp(xc),
            yc: clamp(yc),
            w: clamp(w),
            h: clamp(h),
        }
    }

    /// Like [`BBox::new`] but rejects non-finite components.
    pub fn try_new(xc: f64, yc: f64, w: f64, h: f64) -> Result<Self> {
        if [xc, yc, w, h].iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "box ({xc}, {yc}, {w}, {h})"
            )));
        }
        Ok(BBox::new(xc, yc, w, h))
    }

    /// Builds a box from `[xc, yc, w, h]`.
    pub fn from_array(v: [f64; 4]) -> Self {
        BBox::new(v[0], v[1], v[2], v[3])
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.xc, self.yc, self.w, self.h]
    }

    pub fn xc(&self) -> f64 {
        self.xc
    }

    pub fn yc(&self) -> f64 {
        self.yc
    }

    pub fn w(&self) -> f64 {
        self.w
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn left(&self) -> f64 {
        self.xc - self.w / 2.0
    }

    pub fn right(&self) -> f64 {
        self.xc + self.w / 2.0
    }

    pub fn top(&self) -> f64 {
        self.yc - self.h / 2.0
    }

    pub fn bottom(&self) -> f64 {
        self.yc + self.h / 2.0
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    /// The six alignment lines: left, x-center, right, top, y-center, bottom.
    pub fn alignment_lines(&self) -> [f64; 6] {
        [
            self.left(),
            self.xc,
            self.right(),
            self.top(),
            self.yc,
            self.bottom(),
        ]
    }

    /// Area of the intersection with `other`; 0 when they do not overlap.
    pub fn intersection_area(&self, other: &BBox) -> f64 {
        let iw = self.right().min(other.right()) - self.left().max(other.left());
        let ih = self.bottom().min(other.bottom()) - self.top().max(other.top());
        if iw <= 0.0 || ih <= 0.0 {
            0.0
        } else {
            iw * ih
        }
    }
}

/// Intersection over union. Zero when the union has no area.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    // Edge arithmetic is inexact, so identical boxes are special-cased.
    if a == b {
        return if a.area() > 0.0 { 1.0 } else { 0.0 };
    }
    let inter = a.intersection_area(b);
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Element {
    pub label: Label,
    #[serde(flatten)]
    pub bbox: BBox,
}

impl Element {
    pub fn new(label: Label, bbox: BBox) -> Self {
        Element { label, bbox }
    }
}

/// A set of labeled boxes on the unit canvas. Element order is storage order
/// only; metrics and constraints treat the elements as a set unless they refer
/// to elements by index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    elements: Vec<Element>,
}

impl Layout {
    /// Builds a layout with the default element cap.
    pub fn new(elements: Vec<Element>) -> Result<Self> {
        Layout::with_max_elements(elements, DEFAULT_MAX_ELEMENTS)
    }

    pub fn with_max_elements(elements: Vec<Element>, max: usize) -> Result<Self> {
        if elements.is_empty() {
            return Err(Error::Validation("layout has no elements".into()));
        }
        if elements.len() > max {
            return Err(Error::Validation(format!(
                "layout has {} elements, maximum is {max}",
                elements.len()
            )));
        }
        Ok(Layout { elements })
    }

    /// Pairs labels with boxes, enforcing only non-emptiness. Used by
    /// generators whose element count is already bounded by their input.
    pub fn from_parts(labels: &[Label], boxes: &[BBox]) -> Result<Self> {
        if labels.len() != boxes.len() {
            return Err(Error::SizeMismatch {
                what: "labels vs boxes",
                left: labels.len(),
                right: boxes.len(),
            });
        }
        let elements: Vec<Element> = labels
            .iter()
            .zip(boxes)
            .map(|(&l, &b)| Element::new(l, b))
            .collect();
        Layout::with_max_elements(elements, usize::MAX)
    }

    pub fn elements(&self) -> &[Element] {
        &self.elements
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn labels(&self) -> Vec<Label> {
        self.elements.iter().map(|e| e.label).collect()
    }

    pub fn boxes(&self) -> Vec<BBox> {
        self.elements.iter().map(|e| e.bbox).collect()
    }

    pub fn bbox(&self, index: usize) -> Option<&BBox> {
        self.elements.get(index).map(|e| &e.bbox)
    }

    /// Sorted labels; equal for two layouts iff their label multisets match.
    pub fn label_multiset(&self) -> Vec<Label> {
        let mut labels = self.labels();
        labels.sort_unstable();
        labels
    }

    /// Checks every label against the vocabulary.
    pub fn validate(&self, vocab: &LabelVocabulary) -> Result<()> {
        for (i, e) in self.elements.iter().enumerate() {
            if e.label >= vocab.len() {
                return Err(Error::Validation(format!(
                    "element {i} has label {} but the vocabulary has {} labels",
                    e.label,
                    vocab.len()
                )));
            }
        }
        Ok(())
    }
}

/// Ordered, unique label names for one dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct LabelVocabulary {
    names: Vec<String>,
}

impl TryFrom<Vec<String>> for LabelVocabulary {
    type Error = Error;

    fn try_from(names: Vec<String>) -> Result<Self> {
        LabelVocabulary::new(names)
    }
}

impl From<LabelVocabulary> for Vec<String> {
    fn from(v: LabelVocabulary) -> Self {
        v.names
    }
}

impl LabelVocabulary {
    pub fn new<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Result<Self> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        let mut seen = HashSet::new();
        for name in &names {
            if name.is_empty() {
                return Err(Error::Validation("empty label name".into()));
            }
            if !seen.insert(name.as_str()) {
                return Err(Error::Validation(format!("duplicate label name `{name}`")));
            }
        }
        Ok(LabelVocabulary { names })
    }

    /// Vocabulary of `n` placeholder names `label0`, `label1`, ...
    pub fn numbered(n: usize) -> Self {
        LabelVocabulary {
            names: (0..n).map(|i| format!("label{i}")).collect(),
        }
    }

    /// The five document labels.
    pub fn publaynet() -> Self {
        Self::new(["text", "title", "list", "table", "figure"]).expect("static names")
    }

    /// The thirteen most frequent mobile-UI labels.
    pub fn rico() -> Self {
        Self::new([
            "Toolbar",
            "Image",
            "Text",
            "Icon",
            "Text Button",
            "Input",
            "List Item",
            "Advertisement",
            "Pager Indicator",
            "Web View",
            "Background Image",
            "Drawer",
            "Modal",
        ])
        .expect("static names")
    }

    /// The five magazine-page labels.
    pub fn magazine() -> Self {
        Self::new(["text", "image", "headline", "text-over-image", "headline-over-image"])
            .expect("static names")
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<Label> {
        self.names.iter().position(|n| n == name)
    }

    /// Resolves a label given either as a name or a numeric index.
    pub fn resolve(&self, token: &str) -> Result<Label> {
        if let Some(i) = self.index_of(token) {
            return Ok(i);
        }
        match token.parse::<usize>() {
            Ok(i) if i < self.len() => Ok(i),
            _ => Err(Error::Validation(format!("unknown label `{token}`"))),
        }
    }

    pub fn check(&self, label: Label) -> Result<()> {
        if label < self.len() {
            Ok(())
        } else {
            Err(Error::Validation(format!(
                "label {label} is outside the vocabulary of {} labels",
                self.len()
            )))
        }
    }
}
