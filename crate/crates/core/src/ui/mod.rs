//! Typed UI state: labeled elements parsed from a uiautomator hierarchy, and
//! screens optionally augmented with OCR/detector output.

mod parse;
mod perception;

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::hash::{fnv1a64, fnv1a64_hex};

pub use parse::{parse_hierarchy, serialize_hierarchy};
pub use perception::{
    augment_with_perception, FixturePerception, PerceptionError, PerceptionItem, PerceptionKind,
    PerceptionProvider, PerceptionResult, DEFAULT_IOU_THRESHOLD, DEFAULT_MIN_CONFIDENCE,
};

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum UiError {
    #[error("malformed hierarchy: {0}")]
    MalformedHierarchy(String),
    #[error("invalid bounds [{0},{1}][{2},{3}]")]
    InvalidBounds(u32, u32, u32, u32),
}

/// Axis-aligned pixel rectangle, origin top-left. Serialized as `[x1,y1,x2,y2]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Bounds {
    pub x1: u32,
    pub y1: u32,
    pub x2: u32,
    pub y2: u32,
}

impl Bounds {
    pub fn new(x1: u32, y1: u32, x2: u32, y2: u32) -> Result<Self, UiError> {
        if x1 > x2 || y1 > y2 {
            return Err(UiError::InvalidBounds(x1, y1, x2, y2));
        }
        Ok(Self { x1, y1, x2, y2 })
    }

    pub fn width(&self) -> u32 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> u32 {
        self.y2 - self.y1
    }

    pub fn area(&self) -> u64 {
        u64::from(self.width()) * u64::from(self.height())
    }

    /// Inclusive on all four edges.
    pub fn contains(&self, x: u32, y: u32) -> bool {
        self.x1 <= x && x <= self.x2 && self.y1 <= y && y <= self.y2
    }

    /// Tap point: the floored midpoint.
    pub fn center(&self) -> (u32, u32) {
        element_center(self)
    }

    /// Intersection over union of the two rectangles' areas; 0 when both are empty.
    pub fn iou(&self, other: &Bounds) -> f64 {
        let ix1 = self.x1.max(other.x1);
        let iy1 = self.y1.max(other.y1);
        let ix2 = self.x2.min(other.x2);
        let iy2 = self.y2.min(other.y2);
        let inter = if ix1 < ix2 && iy1 < iy2 {
            u64::from(ix2 - ix1) * u64::from(iy2 - iy1)
        } else {
            0
        };
        let union = self.area() + other.area() - inter;
        if union == 0 {
            0.0
        } else {
            inter as f64 / union as f64
        }
    }
}

impl fmt::Display for Bounds {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{},{}][{},{}]", self.x1, self.y1, self.x2, self.y2)
    }
}

impl Serialize for Bounds {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        [self.x1, self.y1, self.x2, self.y2].serialize(s)
    }
}

impl<'de> Deserialize<'de> for Bounds {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let [x1, y1, x2, y2] = <[u32; 4]>::deserialize(d)?;
        Bounds::new(x1, y1, x2, y2).map_err(serde::de::Error::custom)
    }
}

/// Returns `(floor((x1+x2)/2), floor((y1+y2)/2))`.
pub fn element_center(b: &Bounds) -> (u32, u32) {
    let x = (u64::from(b.x1) + u64::from(b.x2)) / 2;
    let y = (u64::from(b.y1) + u64::from(b.y2)) / 2;
    (x as u32, y as u32)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ElementSource {
    Parser,
    OcrText,
    DetectedIcon,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UiElement {
    pub label: Option<u32>,
    pub resource_id: Option<String>,
    pub class_name: String,
    pub text: Option<String>,
    pub content_desc: Option<String>,
    pub bounds: Bounds,
    pub clickable: bool,
    pub long_clickable: bool,
    pub scrollable: bool,
    pub editable: bool,
    pub source: ElementSource,
    pub visual_desc: Option<String>,
}

fn non_empty(v: &Option<String>) -> Option<&str> {
    v.as_deref().filter(|s| !s.is_empty())
}

impl UiElement {
    /// A parser-sourced element with every flag off.
    pub fn new(class_name: impl Into<String>, bounds: Bounds) -> Self {
        Self {
            label: None,
            resource_id: None,
            class_name: class_name.into(),
            text: None,
            content_desc: None,
            bounds,
            clickable: false,
            long_clickable: false,
            scrollable: false,
            editable: false,
            source: ElementSource::Parser,
            visual_desc: None,
        }
    }

    pub fn is_interactive(&self) -> bool {
        self.clickable
            || self.long_clickable
            || self.scrollable
            || self.editable
            || self.source != ElementSource::Parser
    }

    pub fn resource_id(&self) -> Option<&str> {
        non_empty(&self.resource_id)
    }

    pub fn text(&self) -> Option<&str> {
        non_empty(&self.text)
    }

    pub fn content_desc(&self) -> Option<&str> {
        non_empty(&self.content_desc)
    }

    pub fn visual_desc(&self) -> Option<&str> {
        non_empty(&self.visual_desc)
    }

    /// Stable identity across sessions: resource id, then content description,
    /// then text, then a hash of the visual description, then geometry.
    pub fn key(&self) -> String {
        if let Some(rid) = self.resource_id() {
            format!("rid:{rid}")
        } else if let Some(desc) = self.content_desc() {
            format!("desc:{desc}")
        } else if let Some(text) = self.text() {
            format!("txt:{text}")
        } else if let Some(vis) = self.visual_desc() {
            format!("vis:{}", fnv1a64_hex(vis))
        } else {
            format!("geo:{}:{}", self.class_name, self.bounds)
        }
    }

    /// Short human-readable description used when listing elements in prompts.
    pub fn describe(&self) -> String {
        let mut out = match self.label {
            Some(l) => format!("[{l}] {}", self.class_name),
            None => format!("[-] {}", self.class_name),
        };
        if let Some(rid) = self.resource_id() {
            out.push_str(&format!(" id={rid}"));
        }
        if let Some(text) = self.text() {
            out.push_str(&format!(" text={text:?}"));
        }
        if let Some(desc) = self.content_desc() {
            out.push_str(&format!(" desc={desc:?}"));
        }
        if let Some(vis) = self.visual_desc() {
            out.push_str(&format!(" visual={vis:?}"));
        }
        let mut flags = Vec::new();
        if self.clickable {
            flags.push("clickable");
        }
        if self.long_clickable {
            flags.push("long-clickable");
        }
        if self.scrollable {
            flags.push("scrollable");
        }
        if self.editable {
            flags.push("editable");
        }
        if !flags.is_empty() {
            out.push_str(&format!(" ({})", flags.join(", ")));
        }
        out.push_str(&format!(" at {}", self.bounds));
        out
    }
}

/// Labels interactive elements 1..n in input order and clears the label of
/// everything else.
pub fn assign_labels(mut elements: Vec<UiElement>) -> Vec<UiElement> {
    let mut next = 1;
    for e in &mut elements {
        if e.is_interactive() {
            e.label = Some(next);
            next += 1;
        } else {
            e.label = None;
        }
    }
    elements
}

/// Order- and label-independent content hash over the elements' keys,
/// rendered as 16 lowercase hex digits.
pub fn screen_signature(elements: &[UiElement]) -> String {
    let mut keys: Vec<String> = elements.iter().map(UiElement::key).collect();
    keys.sort();
    let mut joined = String::with_capacity(keys.len() * 16);
    for k in &keys {
        joined.push_str(&format!("{:016x}", fnv1a64(k.as_bytes())));
    }
    fnv1a64_hex(&joined)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Screen {
    pub app_id: String,
    pub elements: Vec<UiElement>,
    pub signature: String,
    pub screenshot_ref: Option<String>,
    pub captured_at: u64,
}

impl Screen {
    /// Labels the elements and computes the signature.
    pub fn new(
        app_id: impl Into<String>,
        elements: Vec<UiElement>,
        screenshot_ref: Option<String>,
        captured_at: u64,
    ) -> Self {
        let elements = assign_labels(elements);
        let signature = screen_signature(&elements);
        Self {
            app_id: app_id.into(),
            elements,
            signature,
            screenshot_ref,
            captured_at,
        }
    }

    pub fn by_label(&self, label: u32) -> Option<&UiElement> {
        self.elements.iter().find(|e| e.label == Some(label))
    }

    pub fn labeled(&self) -> impl Iterator<Item = &UiElement> {
        self.elements.iter().filter(|e| e.label.is_some())
    }

    /// Topmost element containing the point: the last one in document order.
    pub fn hit_test(&self, x: u32, y: u32) -> Option<&UiElement> {
        self.elements.iter().rev().find(|e| e.bounds.contains(x, y))
    }

    /// Prompt listing: labeled elements plus unlabeled ones that carry text.
    pub fn render_elements(&self) -> String {
        let lines: Vec<String> = self
            .elements
            .iter()
            .filter(|e| e.label.is_some() || e.text().is_some() || e.content_desc().is_some())
            .map(UiElement::describe)
            .collect();
        if lines.is_empty() {
            "(no elements)".to_string()
        } else {
            lines.join("\n")
        }
    }
}
