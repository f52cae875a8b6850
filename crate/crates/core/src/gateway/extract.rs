//! Recovers code from a raw completion using the marker contract.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ExtractError {
    #[error("markers must be non-empty and distinct")]
    InvalidMarkers,
    #[error("no marked or fenced code in the response")]
    NoCodeFound,
    #[error("unbalanced markers: {0}")]
    UnbalancedMarkers(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fallback {
    None,
    FenceStrip,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractedCode {
    pub code: String,
    pub had_markers: bool,
    pub fallback_used: Fallback,
}

/// Returns the code between the first start marker and the last end marker.
///
/// The lines carrying the markers are dropped and blank lines around the
/// remaining text are trimmed. Without any marker, a single triple-backtick
/// fence is stripped instead.
pub fn extract_code(
    raw: &str,
    start_marker: &str,
    end_marker: &str,
) -> Result<ExtractedCode, ExtractError> {
    if start_marker.is_empty() || end_marker.is_empty() || start_marker == end_marker {
        return Err(ExtractError::InvalidMarkers);
    }
    let start = raw.find(start_marker);
    let end = raw.rfind(end_marker);
    match (start, end) {
        (None, None) => strip_fence(raw),
        (Some(_), None) => Err(ExtractError::UnbalancedMarkers("start marker without end marker")),
        (None, Some(_)) => Err(ExtractError::UnbalancedMarkers("end marker without start marker")),
        (Some(s), Some(e)) => {
            let after_start = s + start_marker.len();
            if e < after_start {
                return Err(ExtractError::UnbalancedMarkers("end marker before start marker"));
            }
            let body_start = match raw[after_start..].find('\n') {
                Some(i) => after_start + i + 1,
                None => after_start,
            };
            let body_end = raw[..e].rfind('\n').map(|i| i + 1).unwrap_or(0);
            // Both markers on one line: keep what sits between them.
            let body = if body_start > e || body_end <= s {
                &raw[after_start..e]
            } else {
                &raw[body_start..body_end.max(body_start)]
            };
            let code = trim_blank_lines(body);
            if code.trim().is_empty() {
                return Err(ExtractError::NoCodeFound);
            }
            Ok(ExtractedCode {
                code: code.to_string(),
                had_markers: true,
                fallback_used: Fallback::None,
            })
        }
    }
}

fn strip_fence(raw: &str) -> Result<ExtractedCode, ExtractError> {
    let lines: Vec<&str> = raw.split_inclusive('\n').collect();
    let open = lines
        .iter()
        .position(|l| l.trim_start().starts_with("```"))
        .ok_or(ExtractError::NoCodeFound)?;
    let close = lines
        .iter()
        .rposition(|l| l.trim() == "```")
        .filter(|&c| c > open)
        .unwrap_or(lines.len());
    let body: String = lines[open + 1..close].concat();
    let code = trim_blank_lines(&body);
    if code.trim().is_empty() {
        return Err(ExtractError::NoCodeFound);
    }
    Ok(ExtractedCode {
        code: code.to_string(),
        had_markers: false,
        fallback_used: Fallback::FenceStrip,
    })
}

/// Drops whitespace-only lines at both ends and the final line break.
fn trim_blank_lines(text: &str) -> &str {
    let mut start = 0;
    for line in text.split_inclusive('\n') {
        if !line.trim().is_empty() {
            break;
        }
        start += line.len();
    }
    let rest = &text[start..];
    let mut end = rest.len();
    while end > 0 {
        let head = &rest[..end];
        let head = head.strip_suffix('\n').map(|h| h.strip_suffix('\r').unwrap_or(h)).unwrap_or(head);
        let line_start = head.rfind('\n').map(|i| i + 1).unwrap_or(0);
        if head[line_start..].trim().is_empty() {
            end = line_start;
        } else {
            end = head.len();
            break;
        }
    }
    &rest[..end]
}
