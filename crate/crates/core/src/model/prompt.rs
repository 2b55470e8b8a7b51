//! Prompt wire format. Replay fixtures are keyed by prompt hash, so any
//! change here must bump [`PROMPT_VERSION`].

pub const PROMPT_VERSION: &str = "v1";

pub const INPUT_IR_MARKER: &str = "--- input ir ---";
pub const END_IR_MARKER: &str = "--- end ir ---";
pub const GENERATION_MARKER: &str = "--- generation ---";
pub const FEEDBACK_MARKER: &str = "--- feedback ---";
pub const TRY_AGAIN_MARKER: &str = "--- try again ---";

const OPTIMIZE_INSTRUCTION: &str = "Find the pass list that minimizes the instruction count of the IR below. \
Answer with the pass list, the instruction count before and after optimization, and the optimized IR.";

/// The Task Optimize prompt: instruction plus input IR.
pub fn optimize_prompt(ir: &str) -> String {
    format!(
        "[optimize {PROMPT_VERSION}]\n{OPTIMIZE_INSTRUCTION}\n{INPUT_IR_MARKER}\n{}\n{END_IR_MARKER}\n",
        ir.trim_end()
    )
}

/// Extracts the input IR from a prompt built by [`optimize_prompt`].
pub fn extract_input_ir(prompt: &str) -> Option<&str> {
    section(prompt, INPUT_IR_MARKER, END_IR_MARKER)
}

/// Extracts the prior generation from a feedback prompt.
pub fn extract_generation(prompt: &str) -> Option<&str> {
    section(prompt, GENERATION_MARKER, FEEDBACK_MARKER)
}

/// Extracts the feedback text from a feedback prompt.
pub fn extract_feedback(prompt: &str) -> Option<&str> {
    section(prompt, FEEDBACK_MARKER, TRY_AGAIN_MARKER)
}

fn section<'a>(text: &'a str, open: &str, close: &str) -> Option<&'a str> {
    let start = find_line(text, open, 0)? + open.len();
    let start = start + usize::from(text[start..].starts_with('\n'));
    let end = find_line(text, close, start)?;
    Some(text[start..end].strip_suffix('\n').unwrap_or(&text[start..end]))
}

/// Byte offset of the first line equal to `marker` at or after `from`.
fn find_line(text: &str, marker: &str, from: usize) -> Option<usize> {
    let mut pos = from;
    while let Some(i) = text[pos..].find(marker) {
        let at = pos + i;
        let line_start = at == 0 || text.as_bytes()[at - 1] == b'\n';
        let after = at + marker.len();
        let line_end = after == text.len() || text.as_bytes()[after] == b'\n';
        if line_start && line_end {
            return Some(at);
        }
        pos = after;
    }
    None
}
