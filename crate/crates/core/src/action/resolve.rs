use serde::{Deserialize, Serialize};

use super::{Action, Direction, TapTarget};
use crate::ui::{Screen, UiElement};

/// Coordinate-resolved form of an [`Action`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "gesture", rename_all = "snake_case")]
pub enum Gesture {
    TapAt {
        x: u32,
        y: u32,
    },
    LongPressAt {
        x: u32,
        y: u32,
        duration_ms: u32,
    },
    SwipePath {
        x1: u32,
        y1: u32,
        x2: u32,
        y2: u32,
        duration_ms: u32,
    },
    TypeText {
        content: String,
    },
    KeyBack,
    KeyHome,
    Sleep {
        duration_ms: u32,
    },
    Terminate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResolveConfig {
    pub long_press_ms: u32,
    pub swipe_ms: u32,
    pub wait_ms: u32,
}

impl Default for ResolveConfig {
    fn default() -> Self {
        Self {
            long_press_ms: 1000,
            swipe_ms: 400,
            wait_ms: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ResolveError {
    #[error("NoSuchLabel: no element labeled {0}")]
    NoSuchLabel(u32),
    #[error("AmbiguousText: {count} elements match {text:?}")]
    AmbiguousText { text: String, count: usize },
    #[error("NoMatch: no element matches {0:?}")]
    NoMatch(String),
}

impl ResolveError {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::NoSuchLabel(_) => "NoSuchLabel",
            Self::AmbiguousText { .. } => "AmbiguousText",
            Self::NoMatch(_) => "NoMatch",
        }
    }
}

pub fn resolve(a: &Action, s: &Screen, device_w: u32, device_h: u32) -> Result<Gesture, ResolveError> {
    resolve_with(a, s, device_w, device_h, &ResolveConfig::default())
}

pub fn resolve_with(
    a: &Action,
    s: &Screen,
    device_w: u32,
    device_h: u32,
    cfg: &ResolveConfig,
) -> Result<Gesture, ResolveError> {
    let clamp = |x: i64, y: i64| -> (u32, u32) {
        let max_x = i64::from(device_w.max(1) - 1);
        let max_y = i64::from(device_h.max(1) - 1);
        (x.clamp(0, max_x) as u32, y.clamp(0, max_y) as u32)
    };
    let center_of = |e: &UiElement| {
        let (x, y) = e.bounds.center();
        clamp(i64::from(x), i64::from(y))
    };
    let by_label = |label: u32| s.by_label(label).ok_or(ResolveError::NoSuchLabel(label));

    Ok(match a {
        Action::TapButton(TapTarget::Label(label)) => {
            let (x, y) = center_of(by_label(*label)?);
            Gesture::TapAt { x, y }
        }
        Action::TapButton(TapTarget::Text(text)) => {
            let (x, y) = center_of(match_text(s, text)?);
            Gesture::TapAt { x, y }
        }
        Action::LongPress(label) => {
            let (x, y) = center_of(by_label(*label)?);
            Gesture::LongPressAt {
                x,
                y,
                duration_ms: cfg.long_press_ms,
            }
        }
        Action::Swipe {
            label,
            direction,
            dist,
        } => {
            let e = by_label(*label)?;
            let (cx, cy) = center_of(e);
            let vertical = matches!(direction, Direction::Up | Direction::Down);
            let extent = if vertical {
                e.bounds.height()
            } else {
                e.bounds.width()
            };
            let extent = if extent == 0 {
                if vertical {
                    device_h
                } else {
                    device_w
                }
            } else {
                extent
            };
            let len = (dist.fraction() * f64::from(extent)).floor() as i64;
            let (dx, dy) = match direction {
                Direction::Up => (0, -len),
                Direction::Down => (0, len),
                Direction::Left => (-len, 0),
                Direction::Right => (len, 0),
            };
            let (x2, y2) = clamp(i64::from(cx) + dx, i64::from(cy) + dy);
            Gesture::SwipePath {
                x1: cx,
                y1: cy,
                x2,
                y2,
                duration_ms: cfg.swipe_ms,
            }
        }
        Action::Text(content) => Gesture::TypeText {
            content: content.clone(),
        },
        Action::Back => Gesture::KeyBack,
        Action::Home => Gesture::KeyHome,
        Action::Wait => Gesture::Sleep {
            duration_ms: cfg.wait_ms,
        },
        Action::Stop => Gesture::Terminate,
    })
}

/// Text targeting in strict priority tiers: exact text, then case-insensitive
/// text, then case-insensitive substring of text, content description or
/// visual description. The first non-empty tier wins and must be unique.
fn match_text<'a>(s: &'a Screen, target: &str) -> Result<&'a UiElement, ResolveError> {
    let lower = target.to_lowercase();
    let tiers: [&dyn Fn(&UiElement) -> bool; 3] = [
        &|e| e.text() == Some(target),
        &|e| e.text().is_some_and(|t| t.to_lowercase() == lower),
        &|e| {
            [e.text(), e.content_desc(), e.visual_desc()]
                .into_iter()
                .flatten()
                .any(|t| t.to_lowercase().contains(&lower))
        },
    ];
    for tier in tiers {
        let hits: Vec<&UiElement> = s.elements.iter().filter(|e| tier(e)).collect();
        match hits.len() {
            0 => continue,
            1 => return Ok(hits[0]),
            count => {
                return Err(ResolveError::AmbiguousText {
                    text: target.to_string(),
                    count,
                })
            }
        }
    }
    Err(ResolveError::NoMatch(target.to_string()))
}
