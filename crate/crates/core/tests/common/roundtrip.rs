//! Random (prose, code) pairs for the extraction round-trip property.

#![allow(dead_code)]

use migrate_core::gateway::extract_code;
use migrate_core::prompt::{self, default_template, render, DEFAULT_END_MARKER, DEFAULT_EXAMPLE_CODE, DEFAULT_START_MARKER};
use proptest::prelude::*;

fn free_of_markers(s: &str) -> bool {
    !s.contains(DEFAULT_START_MARKER) && !s.contains(DEFAULT_END_MARKER)
}

fn code_line() -> impl Strategy<Value = String> {
    prop_oneof![
        "[ -~]{0,60}",
        "[ \t]{0,8}[a-zA-Z_][a-zA-Z0-9_]{0,12} = [0-9]{1,4}",
        "[ ]{0,8}(def|async def|class) [a-z_]{1,10}\\([a-z, :]{0,20}\\):",
        "[ ]{0,8}# .{0,30}",
        "[ ]{0,8}\"[^\"\n\r]{0,20}\"",
        "```[a-z]{0,6}",
        "### [A-Z ]{0,12}###",
        "[\\PC&&[^\r\n]]{0,20}",
    ]
}

/// Code with a non-blank first and last line, no carriage returns and no
/// markers: the shapes that survive marker wrapping unchanged.
pub fn code() -> impl Strategy<Value = String> {
    prop::collection::vec(code_line(), 1..16)
        .prop_map(|lines| lines.join("\n"))
        .prop_filter("edge lines must be non-blank and marker-free", |c| {
            let first = c.split('\n').next().unwrap_or("");
            let last = c.rsplit('\n').next().unwrap_or("");
            !first.trim().is_empty() && !last.trim().is_empty() && !c.contains('\r') && free_of_markers(c)
        })
}

pub fn prose() -> impl Strategy<Value = String> {
    "[\\PC\n]{0,200}".prop_filter("prose must not carry markers", |p| free_of_markers(p))
}

pub fn strategy() -> impl Strategy<Value = prompt::Strategy> {
    prop::sample::select(prompt::Strategy::ALL.to_vec())
}

/// Renders `code`, embeds the rendered marked block between two prose pads
/// as a model would, and extracts it again.
pub fn check(strategy: prompt::Strategy, before: &str, code: &str, after: &str) -> Result<(), String> {
    let template = default_template()
        .with_example_code(DEFAULT_EXAMPLE_CODE)
        .map_err(|e| e.to_string())?;
    let rendered = render(strategy, &template, code).map_err(|e| e.to_string())?;
    let response = format!("{before}{}{after}", rendered.subject_block());
    let got = extract_code(&response, template.start_marker(), template.end_marker()).map_err(|e| e.to_string())?;
    if got.code != code {
        return Err(format!("extracted {:?}, expected {:?}", got.code, code));
    }
    if !got.had_markers {
        return Err("markers were not detected".into());
    }
    Ok(())
}
