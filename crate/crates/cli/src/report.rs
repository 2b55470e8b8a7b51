use std::collections::HashSet;
use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use passfeedback::metrics::{
    aggregate, error_histogram, pearson_matrix, subset, Bucket, HistField, Histogram, MetricField, MetricsRow,
    SchemaHeader, Subset,
};
use passfeedback::orchestrator::EpisodeResult;
use serde::Serialize;

use crate::args::{Command, ReportArgs};
use crate::setup::{read_records, Manifest, RunDir};
use crate::svg;

/// A finished run as read back from its directory.
struct Run {
    name: String,
    command: Command,
    episodes: Vec<EpisodeResult>,
    rows: Vec<MetricsRow>,
}

impl Run {
    fn load(dir: &Path, name: String) -> Result<Self> {
        let manifest = Manifest::load(&dir.join("manifest.json"))?;
        if manifest.command.episode_args().is_none() {
            anyhow::bail!(
                "{} holds a '{}' run, not episodes",
                dir.display(),
                manifest.command.name()
            );
        }
        Ok(Self {
            name,
            command: manifest.command,
            episodes: read_records(&dir.join("episodes.jsonl"), "episode")?,
            rows: read_records(&dir.join("metrics.jsonl"), "metrics_row")?,
        })
    }

    fn oz_combine(&self) -> bool {
        self.command.episode_args().is_some_and(|a| a.oz_combine)
    }

    fn temperature(&self) -> Option<f64> {
        match &self.command {
            Command::Sample(a) => Some(a.temperature),
            Command::Strategy(a) => Some(a.temperature),
            Command::Optimize(_) | Command::Feedback(_) | Command::Iterate(_) => Some(0.0),
            _ => None,
        }
    }

    fn label(&self) -> String {
        match self.temperature() {
            Some(t) => format!("{} (T={t})", self.name),
            None => self.name.clone(),
        }
    }
}

#[derive(Debug, Serialize)]
struct RunRow {
    run: String,
    command: String,
    format: String,
    strategy: Option<String>,
    temperature: Option<f64>,
    samples: Option<usize>,
    max_steps: Option<usize>,
    oz_combine: bool,
    examples: usize,
    generate_calls: u64,
    mean_generations: f64,
    corpus_improvement: f64,
    per_example_mean_improvement: f64,
    fraction_of_autotuner: Option<f64>,
    oz_fallbacks: usize,
    failed: usize,
}

#[derive(Debug, Serialize)]
struct CurvePoint {
    run: String,
    temperature: Option<f64>,
    generations: usize,
    corpus_improvement: f64,
    fraction_of_autotuner: Option<f64>,
}

#[derive(Debug, Serialize)]
struct SubsetRow {
    subset: &'static str,
    rows: usize,
    share_of_rows: f64,
    corpus_improvement: Option<f64>,
    per_example_mean_improvement: Option<f64>,
    fraction_of_autotuner: Option<f64>,
}

#[derive(Debug, Serialize)]
struct BucketRow {
    bucket: String,
    lo: Option<f64>,
    hi: Option<f64>,
    count: usize,
    mean_improvement_over_autotuner: Option<f64>,
    mean_improvement_over_oz: Option<f64>,
}

pub fn cmd_report(args: &ReportArgs, recorded: &Command) -> Result<()> {
    let mut seen = HashSet::new();
    let mut runs = Vec::with_capacity(args.runs.len());
    for dir in &args.runs {
        let base = dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "run".into());
        let mut name = base.clone();
        let mut k = 2;
        while !seen.insert(name.clone()) {
            name = format!("{base}-{k}");
            k += 1;
        }
        runs.push(Run::load(dir, name)?);
    }
    let out = RunDir::create(&args.out)?;

    let mut table = Vec::new();
    let mut curve = Vec::new();
    let mut series = Vec::new();
    for run in &runs {
        table.push(run_row(run)?);
        let points = best_of_curve(run);
        series.push((run.label(), points.iter().map(|p| (p.generations as f64, p.corpus_improvement)).collect()));
        curve.extend(points);
        per_run(&out, run, args)?;
    }
    out.csv("runs.csv", "report_runs", &table)?;
    out.csv("best_of_n.csv", "best_of_n", &curve)?;
    out.text(
        "best_of_n.svg",
        &svg::line_chart(
            "Best of first k generations",
            "generations per example (k)",
            "corpus improvement over reference",
            &series,
        ),
    )?;
    out.manifest(recorded)?;
    println!("report over {} run(s) written to {}", runs.len(), args.out.display());
    Ok(())
}

fn run_row(run: &Run) -> Result<RunRow> {
    let s = aggregate(&run.rows).with_context(|| format!("aggregating run {}", run.name))?;
    let ep = run.command.episode_args().expect("checked on load");
    let (strategy, samples, max_steps) = match &run.command {
        Command::Sample(a) => (Some("original_sample".to_string()), Some(a.samples), None),
        Command::Strategy(a) => (Some(a.strategy.to_string()), Some(a.samples), None),
        Command::Iterate(a) => (None, None, Some(a.steps)),
        _ => (None, None, None),
    };
    let generate_calls: u64 = run.episodes.iter().map(|e| e.generate_calls).sum();
    Ok(RunRow {
        run: run.name.clone(),
        command: run.command.name().to_string(),
        format: format!("{:?}", ep.format).to_lowercase(),
        strategy,
        temperature: run.temperature(),
        samples,
        max_steps,
        oz_combine: ep.oz_combine,
        examples: s.rows,
        generate_calls,
        mean_generations: generate_calls as f64 / run.episodes.len().max(1) as f64,
        corpus_improvement: s.corpus_improvement,
        per_example_mean_improvement: s.per_example_mean_improvement,
        fraction_of_autotuner: s.fraction_of_autotuner,
        oz_fallbacks: s.oz_fallbacks,
        failed: s.failed,
    })
}

/// Corpus improvement when each example keeps the best of its first k
/// generations, for k up to the longest episode.
fn best_of_curve(run: &Run) -> Vec<CurvePoint> {
    let max_k = run.episodes.iter().map(|e| e.cumulative_best.len()).max().unwrap_or(0);
    let sum_oz: u64 = run.episodes.iter().map(|e| e.oz_count).sum();
    let sum_at: Option<u64> = run.episodes.iter().map(|e| e.autotuner_count).sum();
    (1..=max_k)
        .map(|k| {
            let chosen: u64 = run.episodes.iter().map(|e| e.best_of_first(k, run.oz_combine())).sum();
            let gain = sum_oz as f64 - chosen as f64;
            CurvePoint {
                run: run.name.clone(),
                temperature: run.temperature(),
                generations: k,
                corpus_improvement: if sum_oz > 0 { gain / sum_oz as f64 } else { 0.0 },
                fraction_of_autotuner: sum_at
                    .filter(|&at| at < sum_oz)
                    .map(|at| gain / (sum_oz - at) as f64),
            }
        })
        .collect()
}

fn per_run(out: &RunDir, run: &Run, args: &ReportArgs) -> Result<()> {
    let dir = &run.name;
    if run.rows.len() >= 2 {
        let m = pearson_matrix(&run.rows, &MetricField::ALL)?;
        let mut w = out.writer(&format!("{dir}/correlation.csv"))?;
        writeln!(w, "{}", SchemaHeader::new("correlation").csv_line())?;
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(std::iter::once("field").chain(m.fields.iter().map(String::as_str)))?;
        for (name, row) in m.fields.iter().zip(&m.values) {
            let cells = row.iter().map(|c| c.value().map_or("undefined".to_string(), |v| format!("{v:.6}")));
            csv.write_record(std::iter::once(name.clone()).chain(cells))?;
        }
        csv.flush()?;
        let values: Vec<Vec<Option<f64>>> = m.values.iter().map(|r| r.iter().map(|c| c.value()).collect()).collect();
        out.text(
            &format!("{dir}/correlation.svg"),
            &svg::heatmap(&format!("Correlation: {}", run.name), &m.fields, &values),
        )?;
    } else {
        log::warn!("run {}: fewer than two rows, no correlation matrix", run.name);
    }

    for (field, edges, file) in [
        (HistField::TgtInstCntError, &args.error_edges, "histogram_error"),
        (HistField::Bleu, &args.bleu_edges, "histogram_bleu"),
    ] {
        let h = error_histogram(&run.rows, field, edges)?;
        let rows = bucket_rows(&h);
        out.csv(&format!("{dir}/{file}.csv"), "histogram", &rows)?;
        let bars: Vec<(String, f64, Option<String>)> = rows
            .iter()
            .map(|b| {
                let note = b
                    .mean_improvement_over_autotuner
                    .or(b.mean_improvement_over_oz)
                    .map(|v| format!("{v:+.3}"));
                (b.bucket.clone(), b.count as f64, note)
            })
            .collect();
        out.text(
            &format!("{dir}/{file}.svg"),
            &svg::bar_chart(
                &format!("{} ({}); notes: mean improvement", field.name(), run.name),
                "examples",
                &bars,
            ),
        )?;
    }

    let total = run.rows.len();
    let subsets: Vec<SubsetRow> = Subset::ALL
        .iter()
        .map(|&which| {
            let rows = subset(&run.rows, which);
            let s = aggregate(&rows).ok();
            SubsetRow {
                subset: which.name(),
                rows: rows.len(),
                share_of_rows: if total > 0 { rows.len() as f64 / total as f64 } else { 0.0 },
                corpus_improvement: s.as_ref().map(|s| s.corpus_improvement),
                per_example_mean_improvement: s.as_ref().map(|s| s.per_example_mean_improvement),
                fraction_of_autotuner: s.as_ref().and_then(|s| s.fraction_of_autotuner),
            }
        })
        .collect();
    out.csv(&format!("{dir}/subsets.csv"), "subsets", &subsets)?;
    let bars: Vec<(String, f64, Option<String>)> = subsets
        .iter()
        .map(|s| (s.subset.to_string(), s.corpus_improvement.unwrap_or(0.0), Some(format!("n={}", s.rows))))
        .collect();
    out.text(
        &format!("{dir}/subsets.svg"),
        &svg::bar_chart(&format!("Improvement by subset ({})", run.name), "corpus improvement", &bars),
    )?;
    Ok(())
}

fn bucket_rows(h: &Histogram) -> Vec<BucketRow> {
    let row = |label: String, b: &Bucket| BucketRow {
        bucket: label,
        lo: Some(b.lo),
        hi: b.hi,
        count: b.count,
        mean_improvement_over_autotuner: b.mean_improvement_over_autotuner,
        mean_improvement_over_oz: b.mean_improvement_over_oz,
    };
    let mut out = vec![row("exact".into(), &h.exact)];
    if h.below > 0 {
        out.push(BucketRow {
            bucket: "below".into(),
            lo: None,
            hi: h.buckets.first().map(|b| b.lo),
            count: h.below,
            mean_improvement_over_autotuner: None,
            mean_improvement_over_oz: None,
        });
    }
    for b in &h.buckets {
        let label = match b.hi {
            Some(hi) => format!("[{},{})", b.lo, hi),
            None => format!("[{},inf)", b.lo),
        };
        out.push(row(label, b));
    }
    out.push(BucketRow {
        bucket: "missing".into(),
        lo: None,
        hi: None,
        count: h.missing,
        mean_improvement_over_autotuner: None,
        mean_improvement_over_oz: None,
    });
    out
}
