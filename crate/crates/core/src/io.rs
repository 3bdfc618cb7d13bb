//! Canonical layout file: one JSON object holding the label vocabulary and a
//! list of layouts.
//!
//! ```json
//! {"vocabulary": ["text", "title"],
//!  "layouts": [{"elements": [{"label": 0, "xc": 0.5, "yc": 0.2, "w": 0.8, "h": 0.1}]}]}
//! ```
//!
//! Coordinates are written with the shortest representation that round-trips
//! the `f64` exactly.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layout::{BBox, Element, LabelVocabulary, Layout, DEFAULT_MAX_ELEMENTS};

/// Slack allowed outside `[0, 1]` before a coordinate is rejected.
pub const COORD_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy)]
pub struct LoadOptions {
    pub max_elements: usize,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            max_elements: DEFAULT_MAX_ELEMENTS,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayoutCollection {
    pub vocabulary: LabelVocabulary,
    pub layouts: Vec<Layout>,
}

#[derive(Deserialize)]
struct RawFile {
    vocabulary: Vec<String>,
    layouts: Vec<RawLayout>,
}

#[derive(Deserialize)]
struct RawLayout {
    elements: Vec<RawElement>,
}

#[derive(Deserialize)]
struct RawElement {
    label: i64,
    xc: f64,
    yc: f64,
    w: f64,
    h: f64,
}

#[derive(Serialize)]
struct FileRef<'a> {
    vocabulary: &'a LabelVocabulary,
    layouts: &'a [Layout],
}

pub fn load_layouts(path: impl AsRef<Path>) -> Result<LayoutCollection> {
    load_layouts_with(path, LoadOptions::default())
}

pub fn load_layouts_with(path: impl AsRef<Path>, opts: LoadOptions) -> Result<LayoutCollection> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_layouts(&text, opts)
}

/// Parses and validates a layout document held in memory.
pub fn parse_layouts(text: &str, opts: LoadOptions) -> Result<LayoutCollection> {
    let raw: RawFile = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    let vocabulary = LabelVocabulary::new(raw.vocabulary)?;
    let layouts = raw
        .layouts
        .into_iter()
        .enumerate()
        .map(|(li, rl)| convert_layout(li, rl, &vocabulary, opts))
        .collect::<Result<Vec<_>>>()?;
    Ok(LayoutCollection {
        vocabulary,
        layouts,
    })
}

fn convert_layout(
    li: usize,
    raw: RawLayout,
    vocab: &LabelVocabulary,
    opts: LoadOptions,
) -> Result<Layout> {
    let mut elements = Vec::with_capacity(raw.elements.len());
    for (ei, re) in raw.elements.into_iter().enumerate() {
        if re.label < 0 || re.label as usize >= vocab.len() {
            return Err(Error::Validation(format!(
                "layout {li} element {ei}: unknown label id {}",
                re.label
            )));
        }
        for (name, v) in [("xc", re.xc), ("yc", re.yc), ("w", re.w), ("h", re.h)] {
            if !v.is_finite() || v < -COORD_TOLERANCE || v > 1.0 + COORD_TOLERANCE {
                return Err(Error::Validation(format!(
                    "layout {li} element {ei}: {name} = {v} is outside [0, 1]"
                )));
            }
        }
        elements.push(Element::new(
            re.label as usize,
            BBox::new(re.xc, re.yc, re.w, re.h),
        ));
    }
    Layout::with_max_elements(elements, opts.max_elements)
        .map_err(|e| Error::Validation(format!("layout {li}: {e}")))
}

/// Serializes a collection to the canonical document.
pub fn layouts_to_string(layouts: &[Layout], vocab: &LabelVocabulary) -> Result<String> {
    for (i, l) in layouts.iter().enumerate() {
        l.validate(vocab)
            .map_err(|e| Error::Validation(format!("layout {i}: {e}")))?;
    }
    serde_json::to_string_pretty(&FileRef {
        vocabulary: vocab,
        layouts,
    })
    .map_err(|e| Error::Parse(e.to_string()))
}

pub fn save_layouts(
    layouts: &[Layout],
    vocab: &LabelVocabulary,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let text = layouts_to_string(layouts, vocab)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
