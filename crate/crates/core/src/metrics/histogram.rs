use serde::{Deserialize, Serialize};

use super::{MetricsError, MetricsRow};

/// Fields that can be histogrammed against performance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HistField {
    /// `tgt_inst_cnt_error_C`; exact means an error of 0.
    TgtInstCntError,
    /// `tgt_IR_BLEU_C`; exact means a score of 1.
    Bleu,
}

impl HistField {
    fn value(self, r: &MetricsRow) -> Option<f64> {
        match self {
            HistField::TgtInstCntError => r.tgt_inst_cnt_error_c.map(|v| v as f64),
            HistField::Bleu => r.tgt_ir_bleu_c,
        }
    }

    fn exact(self) -> f64 {
        match self {
            HistField::TgtInstCntError => 0.0,
            HistField::Bleu => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            HistField::TgtInstCntError => "tgt_inst_cnt_error_C",
            HistField::Bleu => "tgt_IR_BLEU_C",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bucket {
    /// Inclusive lower edge.
    pub lo: f64,
    /// Exclusive upper edge; `None` for the open last bucket.
    pub hi: Option<f64>,
    pub count: usize,
    pub mean_improvement_over_autotuner: Option<f64>,
    pub mean_improvement_over_oz: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub field: HistField,
    /// Rows hitting the exact value (error 0 or BLEU 1).
    pub exact: Bucket,
    pub buckets: Vec<Bucket>,
    /// Non-exact values below the first edge.
    pub below: usize,
    /// Rows without a value for the field.
    pub missing: usize,
}

#[derive(Default)]
struct Acc {
    count: usize,
    at_sum: f64,
    at_n: usize,
    oz_sum: f64,
}

impl Acc {
    fn add(&mut self, r: &MetricsRow) {
        self.count += 1;
        self.oz_sum += r.improvement_over_oz;
        if let Some(v) = r.improvement_over_autotuner {
            self.at_sum += v;
            self.at_n += 1;
        }
    }

    fn bucket(&self, lo: f64, hi: Option<f64>) -> Bucket {
        Bucket {
            lo,
            hi,
            count: self.count,
            mean_improvement_over_autotuner: (self.at_n > 0).then(|| self.at_sum / self.at_n as f64),
            mean_improvement_over_oz: (self.count > 0).then(|| self.oz_sum / self.count as f64),
        }
    }
}

/// Buckets `[edges[i], edges[i+1])` plus an open last bucket; exact values
/// are counted separately and excluded from the buckets.
pub fn error_histogram(rows: &[MetricsRow], field: HistField, edges: &[f64]) -> Result<Histogram, MetricsError> {
    if edges.windows(2).any(|w| w[0] >= w[1]) {
        return Err(MetricsError::UnsortedBuckets);
    }
    let mut exact = Acc::default();
    let mut accs: Vec<Acc> = edges.iter().map(|_| Acc::default()).collect();
    let (mut below, mut missing) = (0, 0);
    for r in rows {
        let Some(v) = field.value(r) else {
            missing += 1;
            continue;
        };
        if v == field.exact() {
            exact.add(r);
            continue;
        }
        match edges.iter().rposition(|&e| e <= v) {
            Some(i) => accs[i].add(r),
            None => below += 1,
        }
    }
    let x = field.exact();
    Ok(Histogram {
        field,
        exact: exact.bucket(x, None),
        buckets: accs
            .iter()
            .enumerate()
            .map(|(i, a)| a.bucket(edges[i], edges.get(i + 1).copied()))
            .collect(),
        below,
        missing,
    })
}
