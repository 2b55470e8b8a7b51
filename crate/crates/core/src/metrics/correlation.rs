use serde::{Deserialize, Serialize};

use super::{MetricField, MetricsError, MetricsRow};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Correlation {
    Value(f64),
    /// Constant column or fewer than two complete pairs.
    Undefined,
}

impl Correlation {
    pub fn value(self) -> Option<f64> {
        match self {
            Correlation::Value(v) => Some(v),
            Correlation::Undefined => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub fields: Vec<String>,
    pub values: Vec<Vec<Correlation>>,
    /// Rows that had both values, per pair.
    pub support: Vec<Vec<usize>>,
}

/// Sample Pearson correlation; `None` for constant inputs or fewer than two
/// points.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    assert_eq!(xs.len(), ys.len(), "pearson inputs differ in length");
    let n = xs.len();
    if n < 2 {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Pairwise-complete correlation matrix over `fields`.
pub fn pearson_matrix(rows: &[MetricsRow], fields: &[MetricField]) -> Result<CorrelationMatrix, MetricsError> {
    if rows.len() < 2 {
        return Err(MetricsError::TooFewRows(rows.len()));
    }
    let k = fields.len();
    let mut values = vec![vec![Correlation::Undefined; k]; k];
    let mut support = vec![vec![0; k]; k];
    for i in 0..k {
        for j in i..k {
            let (xs, ys): (Vec<f64>, Vec<f64>) = rows
                .iter()
                .filter_map(|r| Some((fields[i].value(r)?, fields[j].value(r)?)))
                .unzip();
            let r = match pearson(&xs, &ys) {
                Some(_) if i == j => Correlation::Value(1.0),
                Some(v) => Correlation::Value(v),
                None => Correlation::Undefined,
            };
            values[i][j] = r;
            values[j][i] = r;
            support[i][j] = xs.len();
            support[j][i] = xs.len();
        }
    }
    Ok(CorrelationMatrix {
        fields: fields.iter().map(|f| f.name().to_string()).collect(),
        values,
        support,
    })
}
