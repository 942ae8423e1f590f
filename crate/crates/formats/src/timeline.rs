//! Style timeline files for frame-by-frame video translation.
//!
//! ```text
//! interp: linear
//! 0: 0.1 -0.3 0.0 1.2 0.5 -0.7 0.9 0.0
//! 48: -1.0 0.2 0.4 0.0 0.0 0.3 -0.2 1.1
//! ```
//!
//! Keyframe indices must be strictly increasing. `#` starts a comment line.

use crate::config::STYLE_DIM;
use crate::error::FormatError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Interpolation {
    /// Use the most recent keyframe's style until the next keyframe.
    #[default]
    Hold,
    /// Coordinate-wise linear blend between surrounding keyframes.
    Linear,
}

impl Interpolation {
    pub fn as_str(self) -> &'static str {
        match self {
            Interpolation::Hold => "hold",
            Interpolation::Linear => "linear",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TimelineFile {
    pub interpolation: Interpolation,
    pub keyframes: Vec<(u64, [f32; STYLE_DIM])>,
}

impl TimelineFile {
    pub fn parse(text: &str) -> Result<Self, FormatError> {
        let mut interpolation = None;
        let mut keyframes: Vec<(u64, [f32; STYLE_DIM])> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let syntax = |msg: String| FormatError::Syntax { line, msg };
            let (head, rest) = trimmed
                .split_once(':')
                .ok_or_else(|| syntax("expected `frame: s1 .. s8` or `interp: mode`".into()))?;
            let head = head.trim();
            if head == "interp" {
                if interpolation.is_some() {
                    return Err(syntax("duplicate interp line".into()));
                }
                interpolation = Some(match rest.trim() {
                    "hold" => Interpolation::Hold,
                    "linear" => Interpolation::Linear,
                    other => return Err(syntax(format!("unknown interpolation {other:?}"))),
                });
                continue;
            }
            let frame: u64 = head
                .parse()
                .map_err(|_| syntax(format!("invalid frame index {head:?}")))?;
            if let Some(&(prev, _)) = keyframes.last() {
                if frame <= prev {
                    return Err(syntax(format!(
                        "frame indices must be strictly increasing ({frame} after {prev})"
                    )));
                }
            }
            let mut style = [0f32; STYLE_DIM];
            let mut count = 0;
            for tok in rest.split_whitespace() {
                if count == STYLE_DIM {
                    return Err(syntax(format!("more than {STYLE_DIM} style values")));
                }
                let v: f32 = tok
                    .parse()
                    .map_err(|_| syntax(format!("invalid style value {tok:?}")))?;
                if !v.is_finite() {
                    return Err(syntax(format!("non-finite style value {tok:?}")));
                }
                style[count] = v;
                count += 1;
            }
            if count != STYLE_DIM {
                return Err(syntax(format!("expected {STYLE_DIM} style values, found {count}")));
            }
            keyframes.push((frame, style));
        }
        Ok(Self {
            interpolation: interpolation.unwrap_or_default(),
            keyframes,
        })
    }

    pub fn render(&self) -> String {
        let mut out = format!("interp: {}\n", self.interpolation.as_str());
        for (frame, style) in &self.keyframes {
            let values: Vec<String> = style.iter().map(|v| v.to_string()).collect();
            out.push_str(&format!("{frame}: {}\n", values.join(" ")));
        }
        out
    }
}
