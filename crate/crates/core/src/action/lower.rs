use super::Gesture;
use crate::device::{Command, DeviceCommand};

/// Lowers a gesture to wire commands. `Terminate` lowers to nothing; the
/// agent loop handles it.
pub fn gesture_to_commands(g: &Gesture) -> Vec<DeviceCommand> {
    let cmd = match g {
        Gesture::TapAt { x, y } => Command::Tap { x: *x, y: *y },
        Gesture::LongPressAt { x, y, duration_ms } => Command::Swipe {
            x1: *x,
            y1: *y,
            x2: *x,
            y2: *y,
            duration_ms: *duration_ms,
        },
        Gesture::SwipePath {
            x1,
            y1,
            x2,
            y2,
            duration_ms,
        } => Command::Swipe {
            x1: *x1,
            y1: *y1,
            x2: *x2,
            y2: *y2,
            duration_ms: *duration_ms,
        },
        Gesture::TypeText { content } => Command::Text(content.clone()),
        Gesture::KeyBack => Command::KeyBack,
        Gesture::KeyHome => Command::KeyHome,
        Gesture::Sleep { duration_ms } => Command::Sleep(*duration_ms),
        Gesture::Terminate => return Vec::new(),
    };
    vec![DeviceCommand::from(&cmd)]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lines(g: Gesture) -> Vec<String> {
        gesture_to_commands(&g).into_iter().map(|c| c.0).collect()
    }

    #[test]
    fn wire_lines() {
        assert_eq!(lines(Gesture::TapAt { x: 50, y: 100 }), ["input tap 50 100"]);
        assert_eq!(
            lines(Gesture::TypeText {
                content: "Hello, world!".into()
            }),
            ["input text Hello,%sworld!"]
        );
        assert!(lines(Gesture::Terminate).is_empty());
        assert_eq!(
            lines(Gesture::LongPressAt {
                x: 3,
                y: 4,
                duration_ms: 1000
            }),
            ["input swipe 3 4 3 4 1000"]
        );
        assert_eq!(
            lines(Gesture::SwipePath {
                x1: 50,
                y1: 600,
                x2: 50,
                y2: 400,
                duration_ms: 400
            }),
            ["input swipe 50 600 50 400 400"]
        );
        assert_eq!(lines(Gesture::KeyBack), ["input keyevent KEYCODE_BACK"]);
        assert_eq!(lines(Gesture::KeyHome), ["input keyevent KEYCODE_HOME"]);
        assert_eq!(lines(Gesture::Sleep { duration_ms: 2000 }), ["sleep 2000"]);
    }
}
