//! Model adapters and the line-oriented generation grammar.
//!
//! A generation looks like
//!
//! ```text
//! I am sure!
//! passes: constfold peephole dce
//! src_inst_count: 7
//! tgt_inst_count: 4
//! ir:
//! func f(i32 %x) {
//! ...
//! ```
//!
//! The confidence line is optional (only feedback-trained models emit one)
//! and the `ir:` section may be missing when generation stopped after the
//! counts.

mod http;
pub mod prompt;
mod replay;
mod stub;

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::split_pass_names;

pub use http::{HttpConfig, HttpModel};
pub use replay::{fixture_key, FixtureEntry, RecordingModel, ReplayModel};
pub use stub::StubModel;

pub const SURE_LINE: &str = "I am sure!";
pub const RETRY_LINE: &str = "Let me try again.";

/// Upper bound accepted for [`GenParams::temperature`].
pub const MAX_TEMPERATURE: f64 = 2.0;
/// Upper bound accepted for [`GenParams::n_samples`].
pub const MAX_SAMPLES: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Confidence {
    Sure,
    Retry,
    Absent,
}

impl Confidence {
    pub fn line(self) -> Option<&'static str> {
        match self {
            Confidence::Sure => Some(SURE_LINE),
            Confidence::Retry => Some(RETRY_LINE),
            Confidence::Absent => None,
        }
    }
}

/// A parsed model output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Generation {
    pub confidence: Confidence,
    pub passes: Vec<String>,
    pub src_inst_count_pred: u64,
    pub tgt_inst_count_pred: u64,
    pub optimized_ir: Option<String>,
    pub raw_text: String,
}

impl Generation {
    /// Builds a generation whose `raw_text` is its canonical rendering.
    pub fn new(
        confidence: Confidence,
        passes: Vec<String>,
        src_inst_count_pred: u64,
        tgt_inst_count_pred: u64,
        optimized_ir: Option<String>,
    ) -> Self {
        let mut g = Self {
            confidence,
            passes,
            src_inst_count_pred,
            tgt_inst_count_pred,
            optimized_ir,
            raw_text: String::new(),
        };
        g.raw_text = render_generation(&g);
        g
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[error("generation line {line}: {message}")]
pub struct GenerationParseError {
    pub line: usize,
    pub message: String,
}

fn perr(line: usize, message: impl Into<String>) -> GenerationParseError {
    GenerationParseError {
        line,
        message: message.into(),
    }
}

fn parse_count(line_no: usize, line: &str, key: &str) -> Result<u64, GenerationParseError> {
    let Some(rest) = line.strip_prefix(key).and_then(|r| r.strip_prefix(':')) else {
        return Err(perr(line_no, format!("expected '{key}: <count>'")));
    };
    rest.trim()
        .parse::<u64>()
        .map_err(|_| perr(line_no, format!("'{key}' is not a non-negative integer")))
}

pub fn parse_generation(text: &str) -> Result<Generation, GenerationParseError> {
    // Split into (line number, line content, byte offset just past the line).
    let mut lines = Vec::new();
    let mut offset = 0;
    for (i, raw) in text.split_inclusive('\n').enumerate() {
        offset += raw.len();
        lines.push((i + 1, raw.trim_end_matches(['\n', '\r']), offset));
    }
    let mut it = lines.iter().filter(|(_, l, _)| !l.trim().is_empty()).peekable();

    let mut confidence = Confidence::Absent;
    if let Some((_, l, _)) = it.peek() {
        match l.trim() {
            SURE_LINE => confidence = Confidence::Sure,
            RETRY_LINE => confidence = Confidence::Retry,
            _ => {}
        }
        if confidence != Confidence::Absent {
            it.next();
        }
    }

    let last_line = lines.len().max(1);
    let (n, l, _) = it.next().ok_or_else(|| perr(last_line, "missing 'passes:' line"))?;
    let passes = match l.trim().strip_prefix("passes:") {
        Some(rest) => split_pass_names(rest),
        None => return Err(perr(*n, "expected 'passes: <pass names>'")),
    };
    let (n, l, _) = it.next().ok_or_else(|| perr(last_line, "missing 'src_inst_count:' line"))?;
    let src = parse_count(*n, l.trim(), "src_inst_count")?;
    let (n, l, _) = it.next().ok_or_else(|| perr(last_line, "missing 'tgt_inst_count:' line"))?;
    let tgt = parse_count(*n, l.trim(), "tgt_inst_count")?;

    let optimized_ir = match it.next() {
        None => None,
        Some((_, l, end)) if l.trim() == "ir:" => Some(text[*end..].to_string()),
        Some((n, _, _)) => return Err(perr(*n, "expected 'ir:' or end of generation")),
    };

    Ok(Generation {
        confidence,
        passes,
        src_inst_count_pred: src,
        tgt_inst_count_pred: tgt,
        optimized_ir,
        raw_text: text.to_string(),
    })
}

/// Canonical text of `g`; `raw_text` is ignored.
pub fn render_generation(g: &Generation) -> String {
    let mut out = String::new();
    if let Some(line) = g.confidence.line() {
        out.push_str(line);
        out.push('\n');
    }
    out.push_str("passes:");
    for p in &g.passes {
        out.push(' ');
        out.push_str(p);
    }
    out.push('\n');
    out.push_str(&format!("src_inst_count: {}\n", g.src_inst_count_pred));
    out.push_str(&format!("tgt_inst_count: {}\n", g.tgt_inst_count_pred));
    if let Some(ir) = &g.optimized_ir {
        out.push_str("ir:\n");
        out.push_str(ir);
    }
    out
}

/// Sampling parameters for one `generate` call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenParams {
    pub temperature: f64,
    pub n_samples: usize,
    pub max_tokens: usize,
    /// Stop before the `ir:` section (Fast feedback needs no IR).
    pub stop_after_counts: bool,
    /// Global index of the first sample, so that sample `i` of a run is the
    /// same text no matter how the samples are batched into calls.
    pub first_sample_index: u64,
}

impl Default for GenParams {
    fn default() -> Self {
        Self {
            temperature: 0.0,
            n_samples: 1,
            max_tokens: 4096,
            stop_after_counts: false,
            first_sample_index: 0,
        }
    }
}

impl GenParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        if !(0.0..=MAX_TEMPERATURE).contains(&self.temperature) {
            return Err(ModelError::InvalidParams(format!(
                "temperature {} outside [0, {MAX_TEMPERATURE}]",
                self.temperature
            )));
        }
        if self.n_samples == 0 || self.n_samples > MAX_SAMPLES {
            return Err(ModelError::InvalidParams(format!(
                "n_samples {} outside [1, {MAX_SAMPLES}]",
                self.n_samples
            )));
        }
        Ok(())
    }

    /// Stop sequences that a server should honour.
    pub fn stop_sequences(&self) -> Vec<String> {
        let mut stop = vec![prompt::GENERATION_MARKER.to_string()];
        if self.stop_after_counts {
            stop.push("ir:".to_string());
        }
        stop
    }
}

/// Cuts a response at the first stop sequence, as a server would.
pub fn apply_stop(text: &str, params: &GenParams) -> String {
    let mut end = text.len();
    for stop in params.stop_sequences() {
        let found = if stop == "ir:" {
            // Only a line consisting of `ir:` opens the IR section.
            if text.starts_with("ir:") {
                Some(0)
            } else {
                text.find("\nir:").map(|i| i + 1)
            }
        } else {
            text.find(&stop)
        };
        if let Some(i) = found {
            end = end.min(i);
        }
    }
    text[..end].to_string()
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("model request failed after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("no fixture response for {key}")]
    FixtureMiss { key: String },
    #[error("fixture {path}: {message}")]
    Fixture { path: String, message: String },
    #[error("invalid generation parameters: {0}")]
    InvalidParams(String),
    #[error("malformed model response: {0}")]
    Protocol(String),
}

impl ModelError {
    pub fn is_retriable(&self) -> bool {
        matches!(self, ModelError::Transport { .. })
    }
}

/// A text generator. Must tolerate concurrent calls.
pub trait Model: Send + Sync {
    fn name(&self) -> &str;

    /// Returns exactly `params.n_samples` raw texts.
    fn generate(&self, prompt: &str, params: &GenParams) -> Result<Vec<String>, ModelError>;
}

impl<M: Model + ?Sized> Model for &M {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn generate(&self, prompt: &str, params: &GenParams) -> Result<Vec<String>, ModelError> {
        (**self).generate(prompt, params)
    }
}

impl<M: Model + ?Sized> Model for Box<M> {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn generate(&self, prompt: &str, params: &GenParams) -> Result<Vec<String>, ModelError> {
        (**self).generate(prompt, params)
    }
}

/// Counts `generate` calls and returned samples of the wrapped model.
pub struct CountingModel<M> {
    inner: M,
    calls: AtomicU64,
    samples: AtomicU64,
}

impl<M: Model> CountingModel<M> {
    pub fn new(inner: M) -> Self {
        Self {
            inner,
            calls: AtomicU64::new(0),
            samples: AtomicU64::new(0),
        }
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn samples(&self) -> u64 {
        self.samples.load(Ordering::SeqCst)
    }

    pub fn reset(&self) {
        self.calls.store(0, Ordering::SeqCst);
        self.samples.store(0, Ordering::SeqCst);
    }

    pub fn inner(&self) -> &M {
        &self.inner
    }
}

impl<M: Model> Model for CountingModel<M> {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn generate(&self, prompt: &str, params: &GenParams) -> Result<Vec<String>, ModelError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let out = self.inner.generate(prompt, params)?;
        self.samples.fetch_add(out.len() as u64, Ordering::SeqCst);
        Ok(out)
    }
}

/// Replies with a fixed script: the `k`-th call returns `responses[k]`
/// (repeating the last one once the script runs out) for every sample.
pub struct ScriptedModel {
    responses: Vec<String>,
    next: Mutex<usize>,
}

impl ScriptedModel {
    pub fn new(responses: Vec<String>) -> Self {
        assert!(!responses.is_empty(), "scripted model needs at least one response");
        Self {
            responses,
            next: Mutex::new(0),
        }
    }
}

impl Model for ScriptedModel {
    fn name(&self) -> &str {
        "scripted"
    }

    fn generate(&self, _prompt: &str, params: &GenParams) -> Result<Vec<String>, ModelError> {
        params.validate()?;
        let mut next = self.next.lock().expect("scripted model lock");
        let text = self.responses[(*next).min(self.responses.len() - 1)].clone();
        *next += 1;
        Ok(vec![apply_stop(&text, params); params.n_samples])
    }
}

impl fmt::Display for Confidence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Confidence::Sure => "sure",
            Confidence::Retry => "retry",
            Confidence::Absent => "absent",
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_full_generation() {
        let text = "passes: constfold dce\nsrc_inst_count: 3\ntgt_inst_count: 1\nir:\nfunc f() {\nentry:\n  ret i32 0\n}";
        let g = parse_generation(text).unwrap();
        assert_eq!(g.confidence, Confidence::Absent);
        assert_eq!(g.passes, vec!["constfold", "dce"]);
        assert_eq!((g.src_inst_count_pred, g.tgt_inst_count_pred), (3, 1));
        assert_eq!(g.optimized_ir.as_deref(), Some("func f() {\nentry:\n  ret i32 0\n}"));
        assert_eq!(render_generation(&g), text);
    }

    #[test]
    fn parses_sure_with_empty_passes_and_no_ir() {
        let g = parse_generation("I am sure!\npasses:\nsrc_inst_count: 1\ntgt_inst_count: 1").unwrap();
        assert_eq!(g.confidence, Confidence::Sure);
        assert!(g.passes.is_empty());
        assert_eq!(g.optimized_ir, None);
    }

    #[test]
    fn commas_accepted() {
        let g = parse_generation("passes: a, b,c\nsrc_inst_count: 1\ntgt_inst_count: 1\n").unwrap();
        assert_eq!(g.passes, vec!["a", "b", "c"]);
    }

    #[test]
    fn rejects_free_text() {
        let e = parse_generation("optimize please").unwrap_err();
        assert_eq!(e.line, 1);
        let e = parse_generation("passes: dce\nsrc_inst_count: -1\ntgt_inst_count: 1").unwrap_err();
        assert_eq!(e.line, 2);
        let e = parse_generation("passes: dce\nsrc_inst_count: 1").unwrap_err();
        assert!(e.message.contains("tgt_inst_count"));
        let e = parse_generation("passes: dce\nsrc_inst_count: 1\ntgt_inst_count: 1\nhello").unwrap_err();
        assert_eq!(e.line, 4);
        assert!(parse_generation("").is_err());
    }

    #[test]
    fn retry_renders_first() {
        let g = Generation::new(Confidence::Retry, vec!["dce".into()], 2, 2, None);
        assert!(g.raw_text.starts_with("Let me try again.\n"));
        assert!(!g.raw_text.contains("ir:"));
        assert_eq!(parse_generation(&g.raw_text).unwrap(), g);
    }

    #[test]
    fn stop_truncates_ir_section() {
        let p = GenParams {
            stop_after_counts: true,
            ..GenParams::default()
        };
        let text = "passes: dce\nsrc_inst_count: 1\ntgt_inst_count: 1\nir:\nentry:\n";
        assert_eq!(apply_stop(text, &p), "passes: dce\nsrc_inst_count: 1\ntgt_inst_count: 1\n");
        assert_eq!(apply_stop(text, &GenParams::default()), text);
    }

    #[test]
    fn params_bounds() {
        assert!(GenParams::default().validate().is_ok());
        let hot = GenParams {
            temperature: 2.5,
            ..GenParams::default()
        };
        assert!(matches!(hot.validate(), Err(ModelError::InvalidParams(_))));
        let none = GenParams {
            n_samples: 0,
            ..GenParams::default()
        };
        assert!(none.validate().is_err());
    }

    #[test]
    fn counting_and_scripted() {
        let m = CountingModel::new(ScriptedModel::new(vec!["a".into(), "b".into()]));
        let p = GenParams {
            n_samples: 2,
            ..GenParams::default()
        };
        assert_eq!(m.generate("x", &p).unwrap(), vec!["a", "a"]);
        assert_eq!(m.generate("x", &p).unwrap(), vec!["b", "b"]);
        assert_eq!(m.generate("x", &p).unwrap(), vec!["b", "b"]);
        assert_eq!((m.calls(), m.samples()), (3, 6));
    }
}
