//! Compiler-derived feedback on a generation and its Short/Long/Fast
//! renderings.
//!
//! Rendered feedback is a line-per-metric wire format. Every line ends in a
//! newline and the formats extend each other, so Fast is a byte prefix of
//! Short and Short a byte prefix of Long.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::backend::{first_line, validate_pass_list, Compilability, CompileResult, CompilerBackend, Validity};
use crate::ir_text::{bleu_text, count_instructions_text};
use crate::model::prompt::{FEEDBACK_MARKER, GENERATION_MARKER, TRY_AGAIN_MARKER};
use crate::model::{parse_generation, Confidence, Generation, GenerationParseError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeedbackFormat {
    Fast,
    Short,
    Long,
}

impl FeedbackFormat {
    pub const ALL: [FeedbackFormat; 3] = [FeedbackFormat::Fast, FeedbackFormat::Short, FeedbackFormat::Long];

    /// Whether the model must produce IR for this format.
    pub fn needs_generated_ir(self) -> bool {
        self != FeedbackFormat::Fast
    }
}

impl fmt::Display for FeedbackFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FeedbackFormat::Fast => "fast",
            FeedbackFormat::Short => "short",
            FeedbackFormat::Long => "long",
        })
    }
}

impl FromStr for FeedbackFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fast" => Ok(FeedbackFormat::Fast),
            "short" => Ok(FeedbackFormat::Short),
            "long" => Ok(FeedbackFormat::Long),
            other => Err(format!("unknown feedback format '{other}' (expected fast, short or long)")),
        }
    }
}

/// Everything the compiler can tell about one generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackRecord {
    /// Set when the raw output did not follow the generation grammar.
    pub generation_error: Option<String>,
    pub pass_list_valid: bool,
    pub unknown_passes: Vec<String>,
    pub pass_list_too_long: bool,
    pub src_inst_count_pred: Option<u64>,
    pub src_inst_count_actual: u64,
    pub src_count_correct: bool,
    pub tgt_inst_count_pred: Option<u64>,
    pub compiled_inst_count: Option<u64>,
    #[serde(rename = "tgt_inst_cnt_error_C")]
    pub tgt_inst_cnt_error_c: Option<u64>,
    pub tgt_count_correct: bool,
    pub compile_error: Option<String>,
    pub generated_ir_present: bool,
    pub generated_ir_compilable: Option<bool>,
    pub generated_ir_error: Option<String>,
    /// Instruction count of the generated IR.
    #[serde(rename = "tgt_inst_cnt_G")]
    pub tgt_inst_cnt_g: Option<u64>,
    #[serde(rename = "tgt_IR_BLEU_C")]
    pub tgt_ir_bleu_c: Option<f64>,
    pub compiled_ir: Option<String>,
}

/// Instruction count of the source as seen by `backend`.
pub fn source_count(src_ir: &str, backend: &dyn CompilerBackend) -> u64 {
    backend
        .count_instructions(src_ir)
        .unwrap_or_else(|_| count_instructions_text(src_ir)) as u64
}

pub fn evaluate_generation(src_ir: &str, g: &Generation, backend: &dyn CompilerBackend) -> FeedbackRecord {
    evaluate_with_count(src_ir, source_count(src_ir, backend), g, backend)
}

/// [`evaluate_generation`] with the source count already known.
pub fn evaluate_with_count(src_ir: &str, src_count: u64, g: &Generation, backend: &dyn CompilerBackend) -> FeedbackRecord {
    let validity = validate_pass_list(&g.passes, backend.catalog());
    let (pass_list_valid, unknown_passes, pass_list_too_long) = match validity {
        Validity::Valid => (true, vec![], false),
        Validity::Invalid { unknown_names, too_long } => (false, unknown_names, too_long),
    };

    let (compiled_inst_count, compiled_ir, compile_error) = if pass_list_valid {
        match backend.compile(src_ir, &g.passes) {
            CompileResult::Ok { compiled_ir, inst_count } => (Some(inst_count as u64), Some(compiled_ir), None),
            CompileResult::Failed { error_message } => (None, None, Some(first_line(&error_message))),
        }
    } else {
        (None, None, None)
    };
    let tgt_inst_cnt_error_c = compiled_inst_count.map(|c| c.abs_diff(g.tgt_inst_count_pred));

    let (generated_ir_compilable, generated_ir_error, tgt_inst_cnt_g, tgt_ir_bleu_c) = match &g.optimized_ir {
        None => (None, None, None, None),
        Some(ir) => {
            let (ok, err) = match backend.check_compilable(ir) {
                Compilability::Ok => (true, None),
                Compilability::Error { message } => (false, Some(first_line(&message))),
            };
            let bleu = compiled_ir.as_deref().map(|c| bleu_text(ir, c).score);
            (Some(ok), err, Some(count_instructions_text(ir) as u64), bleu)
        }
    };

    FeedbackRecord {
        generation_error: None,
        pass_list_valid,
        unknown_passes,
        pass_list_too_long,
        src_inst_count_pred: Some(g.src_inst_count_pred),
        src_inst_count_actual: src_count,
        src_count_correct: g.src_inst_count_pred == src_count,
        tgt_inst_count_pred: Some(g.tgt_inst_count_pred),
        compiled_inst_count,
        tgt_inst_cnt_error_c,
        tgt_count_correct: tgt_inst_cnt_error_c == Some(0),
        compile_error,
        generated_ir_present: g.optimized_ir.is_some(),
        generated_ir_compilable,
        generated_ir_error,
        tgt_inst_cnt_g,
        tgt_ir_bleu_c,
        compiled_ir,
    }
}

/// Record for output that does not parse as a generation: it is treated as
/// an invalid pass list.
pub fn unparseable_record(err: &GenerationParseError, src_count: u64) -> FeedbackRecord {
    FeedbackRecord {
        generation_error: Some(first_line(&err.to_string())),
        pass_list_valid: false,
        unknown_passes: vec![],
        pass_list_too_long: false,
        src_inst_count_pred: None,
        src_inst_count_actual: src_count,
        src_count_correct: false,
        tgt_inst_count_pred: None,
        compiled_inst_count: None,
        tgt_inst_cnt_error_c: None,
        tgt_count_correct: false,
        compile_error: None,
        generated_ir_present: false,
        generated_ir_compilable: None,
        generated_ir_error: None,
        tgt_inst_cnt_g: None,
        tgt_ir_bleu_c: None,
        compiled_ir: None,
    }
}

/// Parses raw model output and evaluates it.
pub fn evaluate_raw(
    src_ir: &str,
    src_count: u64,
    raw: &str,
    backend: &dyn CompilerBackend,
) -> (Result<Generation, GenerationParseError>, FeedbackRecord) {
    match parse_generation(raw) {
        Ok(g) => {
            let rec = evaluate_with_count(src_ir, src_count, &g, backend);
            (Ok(g), rec)
        }
        Err(e) => {
            let rec = unparseable_record(&e, src_count);
            (Err(e), rec)
        }
    }
}

fn opt(v: Option<u64>) -> String {
    v.map_or_else(|| "none".to_string(), |v| v.to_string())
}

pub fn render_feedback(rec: &FeedbackRecord, fmt: FeedbackFormat) -> String {
    let mut out = String::new();
    let mut line = |s: String| {
        out.push_str(&s);
        out.push('\n');
    };

    line(format!("pass_list_valid: {}", rec.pass_list_valid));
    if let Some(e) = &rec.generation_error {
        line(format!("generation_error: {e}"));
    }
    if !rec.unknown_passes.is_empty() {
        line(format!("unknown_passes: {}", rec.unknown_passes.join(" ")));
    }
    if rec.pass_list_too_long {
        line("pass_list_too_long: true".into());
    }
    line(format!(
        "src_inst_count: predicted={} actual={} correct={}",
        opt(rec.src_inst_count_pred),
        rec.src_inst_count_actual,
        rec.src_count_correct
    ));
    line(format!("tgt_inst_count(predicted): {}", opt(rec.tgt_inst_count_pred)));
    if let (Some(c), Some(e)) = (rec.compiled_inst_count, rec.tgt_inst_cnt_error_c) {
        line(format!("tgt_inst_count(C): {c} error={e} correct={}", rec.tgt_count_correct));
    }
    if let Some(e) = &rec.compile_error {
        line(format!("compile_error: {e}"));
    }
    if fmt == FeedbackFormat::Fast {
        return out;
    }

    if rec.generated_ir_present {
        line(format!(
            "generated_ir_compilable: {}",
            rec.generated_ir_compilable.unwrap_or(false)
        ));
        if let Some(e) = &rec.generated_ir_error {
            line(format!("generated_ir_error: {e}"));
        }
        line(format!("tgt_inst_count(G): {}", opt(rec.tgt_inst_cnt_g)));
        if let Some(b) = rec.tgt_ir_bleu_c {
            line(format!("tgt_IR_BLEU(C): {b:.4}"));
        }
    } else {
        line("generated_ir: absent".into());
    }
    if fmt == FeedbackFormat::Short {
        return out;
    }

    if let Some(ir) = &rec.compiled_ir {
        out.push_str("compiled_ir:\n");
        out.push_str(ir);
        if !ir.ends_with('\n') {
            out.push('\n');
        }
    }
    out
}

fn push_section(out: &mut String, text: &str) {
    out.push_str(text);
    if !text.is_empty() && !text.ends_with('\n') {
        out.push('\n');
    }
}

/// Original prompt, then the prior generation, the feedback and a request
/// to try again, each after its own marker line.
pub fn build_feedback_prompt(original_prompt: &str, generation_text: &str, feedback_text: &str) -> String {
    let mut out = String::new();
    push_section(&mut out, original_prompt);
    out.push_str(GENERATION_MARKER);
    out.push('\n');
    push_section(&mut out, generation_text);
    out.push_str(FEEDBACK_MARKER);
    out.push('\n');
    push_section(&mut out, feedback_text);
    out.push_str(TRY_AGAIN_MARKER);
    out.push('\n');
    out
}

/// The line a feedback-trained model should start with given this record.
pub fn confidence_label(rec: &FeedbackRecord) -> Confidence {
    if rec.pass_list_valid && rec.tgt_count_correct {
        Confidence::Sure
    } else {
        Confidence::Retry
    }
}

/// Checks the presence rules between record fields; returns the first
/// violation.
pub fn check_invariants(rec: &FeedbackRecord) -> Result<(), String> {
    if rec.tgt_count_correct != (rec.tgt_inst_cnt_error_c == Some(0)) {
        return Err("tgt_count_correct disagrees with tgt_inst_cnt_error_C".into());
    }
    let ir_fields = [
        rec.generated_ir_compilable.is_some(),
        rec.tgt_inst_cnt_g.is_some(),
    ];
    if ir_fields.iter().any(|&p| p != rec.generated_ir_present) {
        return Err("generated-IR fields present without generated IR (or missing with it)".into());
    }
    if rec.generated_ir_error.is_some() != (rec.generated_ir_compilable == Some(false)) {
        return Err("generated_ir_error must be present exactly when the IR does not compile".into());
    }
    if rec.tgt_ir_bleu_c.is_some() != (rec.generated_ir_present && rec.compiled_ir.is_some()) {
        return Err("tgt_IR_BLEU_C needs both generated and compiled IR".into());
    }
    if rec.compiled_ir.is_some() != rec.compiled_inst_count.is_some()
        || rec.compiled_inst_count.is_some() != rec.tgt_inst_cnt_error_c.is_some()
    {
        return Err("compiled fields must be present together".into());
    }
    if rec.compile_error.is_some() && rec.compiled_ir.is_some() {
        return Err("compile_error together with compiled IR".into());
    }
    if !rec.pass_list_valid && rec.compiled_ir.is_some() {
        return Err("invalid pass list was compiled".into());
    }
    if let Some(b) = rec.tgt_ir_bleu_c {
        if !(0.0..=1.0).contains(&b) {
            return Err(format!("BLEU {b} outside [0, 1]"));
        }
    }
    Ok(())
}
