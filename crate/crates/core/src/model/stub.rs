use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::prompt::{extract_generation, extract_input_ir};
use super::{parse_generation, Confidence, GenParams, Generation, Model, ModelError};
use crate::ir_text::count_instructions_text;
use crate::mir::{parse_module, run_passes, IrModule, Pass};

/// Preference for each pass (in [`Pass::ALL`] order) by pipeline position.
const POSITION_LOGITS: [[f64; 5]; 6] = [
    [2.0, 1.0, 0.5, 0.5, 1.0],
    [0.5, 1.5, 0.8, 0.6, 1.2],
    [0.3, 0.5, 0.7, 0.8, 1.6],
    [0.4, 0.4, 0.5, 1.4, 1.0],
    [0.3, 0.5, 0.6, 0.7, 1.5],
    [0.5, 0.5, 0.5, 0.5, 1.0],
];
/// Preference for pipeline lengths 1..=6.
const LENGTH_LOGITS: [f64; 6] = [0.3, 1.0, 1.5, 1.0, 0.5, 0.2];
/// Logit bonus per instruction saved when extending a pipeline after feedback.
const GAIN_WEIGHT: f64 = 1.0;

const GARBAGE_PROB: f64 = 0.02;
const UNKNOWN_PASS_PROB: f64 = 0.03;
const SRC_MISCOUNT_PROB: f64 = 0.05;
const DROP_TERMINATOR_PROB: f64 = 0.05;
const BELIEF_DRIFT_PROB: f64 = 0.3;
const BELIEF_DRIFT_PROB_FEEDBACK: f64 = 0.15;
const MAX_FEEDBACK_LEN: usize = 16;

/// Heuristic stand-in for a trained model, for end-to-end runs without one.
///
/// Pass lists are sampled from position-dependent preferences sharpened or
/// flattened by the temperature (argmax at 0). Predicted counts and IR come
/// from compiling a "believed" pipeline with the mini compiler, which
/// sometimes differs from the emitted one by a dropped last pass, so that
/// predictions are sometimes wrong. Small fractions of outputs are corrupted
/// (unparseable text, an unknown pass, a missing terminator) so that every
/// feedback branch is reachable. When the prompt carries feedback, the
/// prior pipeline is extended by one pass, favouring passes that shrink the
/// program.
///
/// Output depends only on `(seed, prompt, temperature, sample index)`, and
/// not on the sample index at temperature 0.
#[derive(Debug, Clone)]
pub struct StubModel {
    seed: u64,
    emit_confidence: bool,
}

impl StubModel {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            emit_confidence: false,
        }
    }

    /// Emit "I am sure!" / "Let me try again." like a feedback-trained model.
    pub fn with_confidence(mut self, emit: bool) -> Self {
        self.emit_confidence = emit;
        self
    }

    fn rng(&self, prompt: &str, temperature: f64, index: u64) -> ChaCha8Rng {
        let mut h = Sha256::new();
        h.update(b"stub-model");
        h.update(self.seed.to_le_bytes());
        h.update(Sha256::digest(prompt.as_bytes()));
        h.update(temperature.to_bits().to_le_bytes());
        if temperature > 0.0 {
            h.update(index.to_le_bytes());
        }
        ChaCha8Rng::from_seed(h.finalize().into())
    }

    fn sample_one(&self, prompt: &str, params: &GenParams, index: u64) -> String {
        let t = params.temperature;
        let mut rng = self.rng(prompt, t, index);

        let ir = extract_input_ir(prompt).unwrap_or(prompt);
        let Ok(module) = parse_module(ir) else {
            let n = count_instructions_text(ir) as u64;
            return Generation::new(self.confidence(false), vec![], n, n, None).raw_text;
        };
        if rng.random_bool(GARBAGE_PROB) {
            return "The function already looks optimal to me.\n".to_string();
        }

        let prior = extract_generation(prompt);
        let emitted: Vec<Pass> = match prior {
            Some(text) => {
                let mut passes: Vec<Pass> = parse_generation(text)
                    .map(|g| g.passes.iter().filter_map(|p| p.parse().ok()).collect())
                    .unwrap_or_default();
                if passes.len() < MAX_FEEDBACK_LEN {
                    let base = run_passes(&module, &passes).inst_count() as f64;
                    let row = POSITION_LOGITS[passes.len().min(POSITION_LOGITS.len() - 1)];
                    let logits: Vec<f64> = Pass::ALL
                        .iter()
                        .zip(row)
                        .map(|(&p, l)| {
                            let mut extended = passes.clone();
                            extended.push(p);
                            l + GAIN_WEIGHT * (base - run_passes(&module, &extended).inst_count() as f64)
                        })
                        .collect();
                    passes.push(Pass::ALL[pick(&mut rng, &logits, t)]);
                }
                passes
            }
            None => {
                let len = pick(&mut rng, &LENGTH_LOGITS, t) + 1;
                (0..len)
                    .map(|pos| Pass::ALL[pick(&mut rng, &POSITION_LOGITS[pos.min(POSITION_LOGITS.len() - 1)], t)])
                    .collect()
            }
        };

        let drift = if prior.is_some() { BELIEF_DRIFT_PROB_FEEDBACK } else { BELIEF_DRIFT_PROB };
        let believed: &[Pass] = if !emitted.is_empty() && rng.random_bool(drift) {
            &emitted[..emitted.len() - 1]
        } else {
            &emitted
        };
        let compiled = run_passes(&module, believed);

        let mut names: Vec<String> = emitted.iter().map(|p| p.name().to_string()).collect();
        if rng.random_bool(UNKNOWN_PASS_PROB) {
            if names.is_empty() {
                names.push("licm".into());
            } else {
                let at = rng.random_range(0..names.len());
                names[at] = "licm".into();
            }
        }
        let mut src = module.inst_count() as u64;
        if rng.random_bool(SRC_MISCOUNT_PROB) {
            src += 1;
        }
        let ir_out = if params.stop_after_counts {
            None
        } else if rng.random_bool(DROP_TERMINATOR_PROB) {
            Some(drop_a_terminator(&compiled, &mut rng))
        } else {
            Some(compiled.render())
        };
        let sure = believed.len() == emitted.len();
        Generation::new(self.confidence(sure), names, src, compiled.inst_count() as u64, ir_out).raw_text
    }

    fn confidence(&self, sure: bool) -> Confidence {
        match (self.emit_confidence, sure) {
            (false, _) => Confidence::Absent,
            (true, true) => Confidence::Sure,
            (true, false) => Confidence::Retry,
        }
    }
}

/// Index drawn from softmax(logits / t); the first maximum when `t == 0`.
fn pick(rng: &mut ChaCha8Rng, logits: &[f64], t: f64) -> usize {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if t <= 0.0 {
        return logits.iter().position(|&l| l == max).unwrap_or(0);
    }
    let weights = logits.iter().map(|l| ((l - max) / t).exp());
    WeightedIndex::new(weights).expect("finite softmax weights").sample(rng)
}

fn drop_a_terminator(module: &IrModule, rng: &mut ChaCha8Rng) -> String {
    let text = module.render();
    let lines: Vec<&str> = text.lines().collect();
    let terms: Vec<usize> = lines
        .iter()
        .enumerate()
        .filter(|(_, l)| {
            let l = l.trim_start();
            l.starts_with("ret ") || l.starts_with("br ")
        })
        .map(|(i, _)| i)
        .collect();
    let skip = terms[rng.random_range(0..terms.len())];
    let mut out: Vec<&str> = lines.iter().enumerate().filter(|&(i, _)| i != skip).map(|(_, l)| *l).collect();
    if text.ends_with('\n') {
        out.push("");
    }
    out.join("\n")
}

fn truncate_tokens(text: String, max_tokens: usize) -> String {
    let mut used = 0;
    let mut end = 0;
    for line in text.split_inclusive('\n') {
        used += line.split_whitespace().count();
        if used > max_tokens {
            return text[..end].to_string();
        }
        end += line.len();
    }
    text
}

impl Model for StubModel {
    fn name(&self) -> &str {
        "stub"
    }

    fn generate(&self, prompt: &str, params: &GenParams) -> Result<Vec<String>, ModelError> {
        params.validate()?;
        Ok((0..params.n_samples as u64)
            .map(|i| {
                let text = self.sample_one(prompt, params, params.first_sample_index + i);
                truncate_tokens(super::apply_stop(&text, params), params.max_tokens)
            })
            .collect())
    }
}
