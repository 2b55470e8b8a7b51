use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autotune::AutotuneLabel;
use crate::backend::{CompileResult, CompilerBackend};
use crate::feedback::{build_feedback_prompt, confidence_label, render_feedback, FeedbackFormat};
use crate::model::prompt::optimize_prompt;
use crate::model::{Confidence, Generation};
use crate::orchestrator::{EpisodeResult, Example};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub example_id: String,
    pub format: FeedbackFormat,
    pub confidence: Confidence,
    pub first_pass_list_valid: bool,
    #[serde(rename = "first_tgt_inst_cnt_error_C")]
    pub first_tgt_inst_cnt_error_c: Option<u64>,
    pub source_count: u64,
    pub best_count: u64,
    pub oz_count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub prompt: String,
    pub completion: String,
    pub meta: DatasetMeta,
}

/// Builds one fine-tuning record per labelled episode.
///
/// The prompt is the feedback prompt on the episode's first generation; the
/// completion starts with the confidence line that generation deserved,
/// followed by the autotuner's pass list, the true counts and (except for
/// Fast) the IR obtained by compiling that pass list. Returns the records
/// and the number of skipped episodes.
pub fn emit_finetune_dataset(
    episodes: &[EpisodeResult],
    examples: &[Example],
    labels: &[AutotuneLabel],
    fmt: FeedbackFormat,
    backend: &dyn CompilerBackend,
) -> (Vec<DatasetRecord>, usize) {
    let irs: HashMap<&str, &str> = examples.iter().map(|e| (e.id.as_str(), e.ir.as_str())).collect();
    let labels: HashMap<&str, &AutotuneLabel> = labels.iter().map(|l| (l.example_id.as_str(), l)).collect();
    let mut out = Vec::new();
    let mut skipped = 0;
    for ep in episodes {
        let id = ep.example_id.as_str();
        let (Some(label), Some(ir), Some(first)) = (labels.get(id), irs.get(id), ep.steps.first()) else {
            skipped += 1;
            continue;
        };
        let (compiled_ir, count) = match backend.compile(ir, &label.best_passes) {
            CompileResult::Ok { compiled_ir, inst_count } => (compiled_ir, inst_count as u64),
            CompileResult::Failed { error_message } => {
                log::warn!("{id}: autotuner passes do not compile: {error_message}");
                skipped += 1;
                continue;
            }
        };
        let confidence = confidence_label(&first.record);
        let prompt = build_feedback_prompt(
            &optimize_prompt(ir),
            &first.generation_text(),
            &render_feedback(&first.record, fmt),
        );
        let completion = Generation::new(
            confidence,
            label.best_passes.clone(),
            label.source_count,
            count,
            fmt.needs_generated_ir().then_some(compiled_ir),
        )
        .raw_text;
        out.push(DatasetRecord {
            prompt,
            completion,
            meta: DatasetMeta {
                example_id: id.to_string(),
                format: fmt,
                confidence,
                first_pass_list_valid: first.record.pass_list_valid,
                first_tgt_inst_cnt_error_c: first.record.tgt_inst_cnt_error_c,
                source_count: label.source_count,
                best_count: count,
                oz_count: label.oz_count,
            },
        });
    }
    if skipped > 0 {
        log::warn!("dataset: skipped {skipped} episode(s) without a usable autotuner label");
    }
    (out, skipped)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    /// Share of records used for training; the rest is held out.
    pub train: f64,
    /// Share of the held-out records moved to validation.
    pub valid_of_heldout: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 0.8,
            valid_of_heldout: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSplit<T> {
    pub train: Vec<T>,
    pub valid: Vec<T>,
    pub test: Vec<T>,
}

/// Seeded shuffle, then train / held-out, then held-out into valid / test.
pub fn split_dataset<T>(mut records: Vec<T>, ratios: SplitRatios, seed: u64) -> DatasetSplit<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    records.shuffle(&mut rng);
    let n = records.len();
    let n_train = ((n as f64) * ratios.train.clamp(0.0, 1.0)).round() as usize;
    let mut heldout = records.split_off(n_train.min(n));
    let n_valid = ((heldout.len() as f64) * ratios.valid_of_heldout.clamp(0.0, 1.0)).round() as usize;
    let test = heldout.split_off(n_valid.min(heldout.len()));
    DatasetSplit {
        train: records,
        valid: heldout,
        test,
    }
}
