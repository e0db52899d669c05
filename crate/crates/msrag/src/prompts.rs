//! Versioned prompt templates.
//!
//! Templates live as plain files under `prompts/` at the repository root and
//! are compiled into the binary, so a changed prompt shows up both in review
//! and as a changed prompt digest in run manifests. Placeholders are
//! `{name}` tokens replaced verbatim; all other braces are left untouched.

use crate::canon;

pub const SEGMENT: &str = include_str!("../../../prompts/segment.txt");
pub const GPT_RETRIEVAL: &str = include_str!("../../../prompts/gpt_retrieval.txt");
pub const SUMMARIZE: &str = include_str!("../../../prompts/summarize.txt");
pub const READER_WITH_CONTEXT: &str = include_str!("../../../prompts/reader_with_context.txt");
pub const READER_DIRECT: &str = include_str!("../../../prompts/reader_direct.txt");

/// Replace `{key}` placeholders. Replacement is literal and single-pass per
/// variable; text substituted in is never re-scanned for other placeholders.
pub fn render(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = template.to_string();
    for (key, value) in vars {
        out = out.replace(&format!("{{{key}}}"), value);
    }
    out
}

/// Hex digest of the exact rendered prompt bytes.
pub fn prompt_digest(prompt: &str) -> String {
    canon::sha256_hex(prompt.as_bytes())
}
