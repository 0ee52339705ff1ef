use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize};

use super::{Bounds, ElementSource, Screen, UiElement};

pub const DEFAULT_MIN_CONFIDENCE: f64 = 0.5;
pub const DEFAULT_IOU_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PerceptionKind {
    Text,
    Icon,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerceptionItem {
    pub kind: PerceptionKind,
    pub text_or_desc: String,
    pub bounds: Bounds,
    #[serde(deserialize_with = "unit_fraction")]
    pub confidence: f64,
}

fn unit_fraction<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    let v = f64::deserialize(d)?;
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(serde::de::Error::custom(format!(
            "confidence {v} outside [0, 1]"
        )))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PerceptionResult {
    pub items: Vec<PerceptionItem>,
}

#[derive(Debug, thiserror::Error)]
pub enum PerceptionError {
    #[error("reading perception fixture {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("perception fixture {path}: {source}")]
    Parse {
        path: String,
        source: serde_json::Error,
    },
}

/// OCR/detector front end. Implementations map a screenshot reference to
/// recognized text and icon regions.
pub trait PerceptionProvider: Send + Sync {
    fn perceive(&self, screenshot_ref: &str) -> Result<PerceptionResult, PerceptionError>;
}

/// Perception backed by a JSON file mapping screenshot_ref to items.
/// Unknown references yield an empty result.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(transparent)]
pub struct FixturePerception {
    by_ref: HashMap<String, PerceptionResult>,
}

impl FixturePerception {
    pub fn from_json(json: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(json)
    }

    pub fn load(path: &Path) -> Result<Self, PerceptionError> {
        let text = std::fs::read_to_string(path).map_err(|source| PerceptionError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text).map_err(|source| PerceptionError::Parse {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn insert(&mut self, screenshot_ref: impl Into<String>, result: PerceptionResult) {
        self.by_ref.insert(screenshot_ref.into(), result);
    }
}

impl PerceptionProvider for FixturePerception {
    fn perceive(&self, screenshot_ref: &str) -> Result<PerceptionResult, PerceptionError> {
        Ok(self.by_ref.get(screenshot_ref).cloned().unwrap_or_default())
    }
}

/// Appends confident perception items that do not overlap any existing
/// element (IoU strictly above `iou_threshold` counts as overlap), then
/// relabels and re-signs the screen. Items are also checked against the ones
/// added earlier in the same call.
pub fn augment_with_perception(
    screen: Screen,
    p: &PerceptionResult,
    min_confidence: f64,
    iou_threshold: f64,
) -> Screen {
    let Screen {
        app_id,
        mut elements,
        screenshot_ref,
        captured_at,
        ..
    } = screen;
    for item in &p.items {
        if item.confidence < min_confidence || item.text_or_desc.trim().is_empty() {
            continue;
        }
        let overlaps = elements
            .iter()
            .any(|e| e.bounds.iou(&item.bounds) > iou_threshold);
        if overlaps {
            continue;
        }
        elements.push(element_from_item(item));
    }
    Screen::new(app_id, elements, screenshot_ref, captured_at)
}

fn element_from_item(item: &PerceptionItem) -> UiElement {
    let (class, source) = match item.kind {
        PerceptionKind::Text => ("ocr.Text", ElementSource::OcrText),
        PerceptionKind::Icon => ("detector.Icon", ElementSource::DetectedIcon),
    };
    let mut e = UiElement::new(class, item.bounds);
    e.clickable = true;
    e.source = source;
    match item.kind {
        PerceptionKind::Text => e.text = Some(item.text_or_desc.clone()),
        PerceptionKind::Icon => e.visual_desc = Some(item.text_or_desc.clone()),
    }
    e
}
