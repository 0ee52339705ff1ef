use std::process::Command as Process;
use std::time::Duration;

use super::{Command, DeviceCommand, DeviceController, DeviceError, DeviceObservation, ExecutionReport};
use crate::ui::{parse_hierarchy, screen_signature};

const DUMP_PATH: &str = "/sdcard/window_dump.xml";
const SHOT_PATH: &str = "/sdcard/agent_screen.png";

/// Runs one `adb shell` command line and returns its stdout.
pub trait AdbTransport: Send {
    fn shell(&mut self, line: &str) -> Result<String, DeviceError>;
}

/// Shells out to the `adb` binary.
#[derive(Debug, Clone)]
pub struct ProcessTransport {
    pub adb: String,
    pub serial: Option<String>,
}

impl ProcessTransport {
    pub fn new(serial: Option<String>) -> Self {
        Self {
            adb: std::env::var("ADB").unwrap_or_else(|_| "adb".to_string()),
            serial,
        }
    }
}

impl AdbTransport for ProcessTransport {
    fn shell(&mut self, line: &str) -> Result<String, DeviceError> {
        let mut cmd = Process::new(&self.adb);
        if let Some(s) = &self.serial {
            cmd.args(["-s", s]);
        }
        cmd.args(["shell", line]);
        let out = cmd
            .output()
            .map_err(|e| DeviceError::DeviceUnavailable(format!("running {}: {e}", self.adb)))?;
        if !out.status.success() {
            let stderr = String::from_utf8_lossy(&out.stderr);
            return Err(DeviceError::DeviceUnavailable(format!(
                "adb shell {line:?} exited with {}: {}",
                out.status,
                stderr.trim()
            )));
        }
        Ok(String::from_utf8_lossy(&out.stdout).into_owned())
    }
}

/// Real-device controller. Commands are forwarded as `adb shell` lines.
pub struct AdbDevice<T: AdbTransport> {
    transport: T,
    size: (u32, u32),
    serial: String,
    last_signature: Option<String>,
    shots: u64,
}

impl<T: AdbTransport> AdbDevice<T> {
    /// Connects and reads the display size via `wm size`.
    pub fn connect(mut transport: T, serial: impl Into<String>) -> Result<Self, DeviceError> {
        let out = transport.shell("wm size")?;
        let size = parse_wm_size(&out).ok_or_else(|| {
            DeviceError::DeviceUnavailable(format!("unexpected `wm size` output: {:?}", out.trim()))
        })?;
        Ok(Self {
            transport,
            size,
            serial: serial.into(),
            last_signature: None,
            shots: 0,
        })
    }

    fn dump(&mut self) -> Result<String, DeviceError> {
        self.transport.shell(&format!("uiautomator dump {DUMP_PATH}"))?;
        let xml = self.transport.shell(&format!("cat {DUMP_PATH}"))?;
        Ok(xml.trim().to_string())
    }

    fn signature_now(&mut self) -> Result<String, DeviceError> {
        let xml = self.dump()?;
        Ok(screen_signature(&parse_hierarchy(&xml)?))
    }
}

/// Parses "Physical size: 1080x1920", preferring an override size line.
pub(crate) fn parse_wm_size(out: &str) -> Option<(u32, u32)> {
    let pick = |prefix: &str| {
        out.lines()
            .find_map(|l| l.trim().strip_prefix(prefix).map(str::trim))
            .and_then(|v| {
                let (w, h) = v.split_once('x')?;
                Some((w.trim().parse().ok()?, h.trim().parse().ok()?))
            })
    };
    pick("Override size:").or_else(|| pick("Physical size:"))
}

fn shell_quote(s: &str) -> String {
    format!("'{}'", s.replace('\'', r"'\''"))
}

fn package_of(xml: &str) -> Option<String> {
    let doc = roxmltree::Document::parse(xml).ok()?;
    doc.descendants()
        .filter(|n| n.has_tag_name("node"))
        .find_map(|n| n.attribute("package").filter(|p| !p.is_empty()))
        .map(str::to_string)
}

impl<T: AdbTransport> DeviceController for AdbDevice<T> {
    fn capture(&mut self) -> Result<DeviceObservation, DeviceError> {
        let xml = self.dump()?;
        let elements = parse_hierarchy(&xml)?;
        self.last_signature = Some(screen_signature(&elements));
        self.shots += 1;
        self.transport.shell(&format!("screencap -p {SHOT_PATH}"))?;
        Ok(DeviceObservation {
            current_app: package_of(&xml).unwrap_or_default(),
            hierarchy_xml: xml,
            screenshot_ref: format!("adb://{}/{}#{}", self.serial, SHOT_PATH, self.shots),
        })
    }

    fn execute(&mut self, cmd: &DeviceCommand) -> Result<ExecutionReport, DeviceError> {
        let parsed = cmd.parse()?;
        let before = match self.last_signature.take() {
            Some(s) => s,
            None => self.signature_now()?,
        };
        match &parsed {
            Command::Sleep(ms) => std::thread::sleep(Duration::from_millis(u64::from(*ms))),
            Command::Dump => {}
            Command::Text(_) => {
                let escaped = cmd.as_str().strip_prefix("input text ").unwrap_or_default();
                self.transport.shell(&format!("input text {}", shell_quote(escaped)))?;
            }
            _ => {
                self.transport.shell(cmd.as_str())?;
            }
        }
        let after = self.signature_now()?;
        let changed_screen = after != before;
        self.last_signature = Some(after);
        Ok(ExecutionReport { changed_screen })
    }

    fn screen_size(&self) -> (u32, u32) {
        self.size
    }
}
