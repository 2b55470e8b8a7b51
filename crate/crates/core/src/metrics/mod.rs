//! Per-example metric rows, corpus aggregation and evaluation subsets.
//!
//! Prediction fields of a row (src/tgt counts, BLEU, flags) come from the
//! episode's first generation, i.e. the Task Optimize answer; counts used
//! for improvements come from the episode's chosen candidate.

mod correlation;
mod dataset;
mod export;
mod histogram;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::orchestrator::{EpisodeResult, Provenance};

pub use correlation::{pearson, pearson_matrix, Correlation, CorrelationMatrix};
pub use dataset::{emit_finetune_dataset, split_dataset, DatasetRecord, DatasetSplit, SplitRatios};
pub use export::{read_jsonl, write_csv, write_jsonl, ExportError, SchemaHeader};
pub use histogram::{error_histogram, Bucket, HistField, Histogram};

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("no rows to aggregate")]
    Empty,
    #[error("example {0} has a zero -Oz count")]
    ZeroOzCount(String),
    #[error("correlation needs at least 2 rows, got {0}")]
    TooFewRows(usize),
    #[error("bucket edges must be strictly increasing")]
    UnsortedBuckets,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub example_id: String,
    #[serde(rename = "src_inst_cnt_C")]
    pub src_inst_cnt_c: u64,
    #[serde(rename = "src_inst_cnt_G")]
    pub src_inst_cnt_g: Option<u64>,
    /// Predicted target count.
    #[serde(rename = "tgt_inst_cnt_G")]
    pub tgt_inst_cnt_g: Option<u64>,
    /// Count after compiling the predicted passes.
    #[serde(rename = "tgt_inst_cnt_C")]
    pub tgt_inst_cnt_c: Option<u64>,
    #[serde(rename = "tgt_inst_cnt_error_C")]
    pub tgt_inst_cnt_error_c: Option<u64>,
    #[serde(rename = "tgt_IR_BLEU_C")]
    pub tgt_ir_bleu_c: Option<f64>,
    pub num_flags: Option<u64>,
    pub pass_list_valid: bool,
    pub oz_count: u64,
    pub autotuner_count: Option<u64>,
    pub chosen_count: u64,
    pub improvement_over_oz: f64,
    pub improvement_over_autotuner: Option<f64>,
    pub provenance: Provenance,
    pub steps_used: u64,
}

fn ratio_gain(base: u64, chosen: u64) -> f64 {
    (base as f64 - chosen as f64) / base as f64
}

impl MetricsRow {
    pub fn from_episode(ep: &EpisodeResult) -> Self {
        let first = ep.steps.first();
        let rec = first.map(|s| &s.record);
        let g = first.and_then(|s| s.generation.as_ref());
        Self {
            example_id: ep.example_id.clone(),
            src_inst_cnt_c: ep.source_count,
            src_inst_cnt_g: rec.and_then(|r| r.src_inst_count_pred),
            tgt_inst_cnt_g: rec.and_then(|r| r.tgt_inst_count_pred),
            tgt_inst_cnt_c: rec.and_then(|r| r.compiled_inst_count),
            tgt_inst_cnt_error_c: rec.and_then(|r| r.tgt_inst_cnt_error_c),
            tgt_ir_bleu_c: rec.and_then(|r| r.tgt_ir_bleu_c),
            num_flags: g.map(|g| g.passes.len() as u64),
            pass_list_valid: rec.is_some_and(|r| r.pass_list_valid),
            oz_count: ep.oz_count,
            autotuner_count: ep.autotuner_count,
            chosen_count: ep.chosen_count,
            improvement_over_oz: if ep.oz_count == 0 { 0.0 } else { ratio_gain(ep.oz_count, ep.chosen_count) },
            improvement_over_autotuner: ep
                .autotuner_count
                .filter(|&a| a > 0)
                .map(|a| ratio_gain(a, ep.chosen_count)),
            provenance: ep.provenance,
            steps_used: ep.steps_used as u64,
        }
    }
}

pub fn rows_from_episodes(episodes: &[EpisodeResult]) -> Vec<MetricsRow> {
    episodes.iter().map(MetricsRow::from_episode).collect()
}

/// Corpus summary under both aggregation readings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub rows: usize,
    pub sum_source: u64,
    pub sum_oz: u64,
    pub sum_chosen: u64,
    pub sum_autotuner: Option<u64>,
    /// `(Σoz − Σchosen) / Σoz`.
    pub corpus_improvement: f64,
    pub per_example_mean_improvement: f64,
    /// `(Σoz − Σautotuner) / Σoz`, when every row has a label.
    pub autotuner_corpus_improvement: Option<f64>,
    /// Method improvement over autotuner improvement (ratio of sums);
    /// `None` when undefined.
    pub fraction_of_autotuner: Option<f64>,
    /// Same ratio using per-example mean improvements.
    pub fraction_of_autotuner_per_example: Option<f64>,
    pub oz_fallbacks: usize,
    pub failed: usize,
}

pub fn aggregate(rows: &[MetricsRow]) -> Result<Summary, MetricsError> {
    if rows.is_empty() {
        return Err(MetricsError::Empty);
    }
    if let Some(r) = rows.iter().find(|r| r.oz_count == 0) {
        return Err(MetricsError::ZeroOzCount(r.example_id.clone()));
    }
    let sum_oz: u64 = rows.iter().map(|r| r.oz_count).sum();
    let sum_chosen: u64 = rows.iter().map(|r| r.chosen_count).sum();
    let sum_source: u64 = rows.iter().map(|r| r.src_inst_cnt_c).sum();
    let n = rows.len() as f64;
    let corpus_improvement = (sum_oz as f64 - sum_chosen as f64) / sum_oz as f64;
    let per_example_mean_improvement = rows.iter().map(|r| r.improvement_over_oz).sum::<f64>() / n;

    let sum_autotuner: Option<u64> = rows.iter().map(|r| r.autotuner_count).sum();
    let (autotuner_corpus_improvement, fraction_of_autotuner, fraction_of_autotuner_per_example) = match sum_autotuner {
        Some(sum_at) => {
            let at_gain = sum_oz as f64 - sum_at as f64;
            let frac = (at_gain > 0.0).then(|| (sum_oz as f64 - sum_chosen as f64) / at_gain);
            let at_mean = rows
                .iter()
                .map(|r| ratio_gain(r.oz_count, r.autotuner_count.expect("all labelled")))
                .sum::<f64>()
                / n;
            let frac_pe = (at_mean > 0.0).then(|| per_example_mean_improvement / at_mean);
            (Some(at_gain / sum_oz as f64), frac, frac_pe)
        }
        None => (None, None, None),
    };

    Ok(Summary {
        rows: rows.len(),
        sum_source,
        sum_oz,
        sum_chosen,
        sum_autotuner,
        corpus_improvement,
        per_example_mean_improvement,
        autotuner_corpus_improvement,
        fraction_of_autotuner,
        fraction_of_autotuner_per_example,
        oz_fallbacks: rows.iter().filter(|r| r.provenance == Provenance::OzFallback).count(),
        failed: rows.iter().filter(|r| r.provenance == Provenance::Failed).count(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subset {
    All,
    AutotunerNonOz,
    ModelWorseThanAutotuner,
    MispredictedCount,
}

impl Subset {
    pub const ALL: [Subset; 4] = [
        Subset::All,
        Subset::AutotunerNonOz,
        Subset::ModelWorseThanAutotuner,
        Subset::MispredictedCount,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Subset::All => "all",
            Subset::AutotunerNonOz => "autotuner_non_oz",
            Subset::ModelWorseThanAutotuner => "model_worse_than_autotuner",
            Subset::MispredictedCount => "mispredicted_count",
        }
    }

    pub fn contains(self, r: &MetricsRow) -> bool {
        match self {
            Subset::All => true,
            Subset::AutotunerNonOz => r.autotuner_count.is_some_and(|a| a < r.oz_count),
            Subset::ModelWorseThanAutotuner => r.autotuner_count.is_some_and(|a| r.chosen_count > a),
            Subset::MispredictedCount => r.tgt_inst_cnt_error_c.is_some_and(|e| e > 0),
        }
    }
}

pub fn subset(rows: &[MetricsRow], which: Subset) -> Vec<MetricsRow> {
    rows.iter().filter(|r| which.contains(r)).cloned().collect()
}

/// Numeric row fields usable for correlation and histograms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MetricField {
    SrcInstCntC,
    SrcInstCntG,
    TgtInstCntG,
    TgtInstCntC,
    TgtInstCntErrorC,
    TgtIrBleuC,
    NumFlags,
    ImprovementOverOz,
    ImprovementOverAutotuner,
}

impl MetricField {
    pub const ALL: [MetricField; 9] = [
        MetricField::SrcInstCntC,
        MetricField::SrcInstCntG,
        MetricField::TgtInstCntG,
        MetricField::TgtInstCntC,
        MetricField::TgtInstCntErrorC,
        MetricField::TgtIrBleuC,
        MetricField::NumFlags,
        MetricField::ImprovementOverOz,
        MetricField::ImprovementOverAutotuner,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MetricField::SrcInstCntC => "src_inst_cnt_C",
            MetricField::SrcInstCntG => "src_inst_cnt_G",
            MetricField::TgtInstCntG => "tgt_inst_cnt_G",
            MetricField::TgtInstCntC => "tgt_inst_cnt_C",
            MetricField::TgtInstCntErrorC => "tgt_inst_cnt_error_C",
            MetricField::TgtIrBleuC => "tgt_IR_BLEU_C",
            MetricField::NumFlags => "num_flags",
            MetricField::ImprovementOverOz => "improvement_over_oz",
            MetricField::ImprovementOverAutotuner => "improvement_over_autotuner",
        }
    }

    pub fn value(self, r: &MetricsRow) -> Option<f64> {
        match self {
            MetricField::SrcInstCntC => Some(r.src_inst_cnt_c as f64),
            MetricField::SrcInstCntG => r.src_inst_cnt_g.map(|v| v as f64),
            MetricField::TgtInstCntG => r.tgt_inst_cnt_g.map(|v| v as f64),
            MetricField::TgtInstCntC => r.tgt_inst_cnt_c.map(|v| v as f64),
            MetricField::TgtInstCntErrorC => r.tgt_inst_cnt_error_c.map(|v| v as f64),
            MetricField::TgtIrBleuC => r.tgt_ir_bleu_c,
            MetricField::NumFlags => r.num_flags.map(|v| v as f64),
            MetricField::ImprovementOverOz => Some(r.improvement_over_oz),
            MetricField::ImprovementOverAutotuner => r.improvement_over_autotuner,
        }
    }
}
