use anyhow::{bail, ensure, Context, Result};
use passfeedback::autotune::{autotune, AutotuneError, AutotuneLabel, SearchBudget};
use passfeedback::feedback::FeedbackFormat;
use passfeedback::metrics::{aggregate, emit_finetune_dataset, rows_from_episodes, split_dataset, SplitRatios, Summary};
use passfeedback::mir::{generate_corpus, CorpusParams};
use passfeedback::model::{Model, RecordingModel};
use passfeedback::orchestrator::{
    run_corpus, verify_chosen, EpisodeResult, Example, Harness, OrchestratorError, SamplingStrategy,
};
use serde::Serialize;

use crate::args::{AutotuneArgs, Command, DatasetArgs, EpisodeArgs, GenerateArgs, RerunArgs};
use crate::report;
use crate::setup::{
    attach_labels, build_backend, build_model, load_corpus, load_labels, read_records, Manifest, RunDir, RuntimeFailure,
};

pub fn run(command: Command) -> Result<()> {
    log::info!("running {}", command.name());
    let mut recorded = command.clone();
    recorded.absolutize();
    match &command {
        Command::GenerateCorpus(a) => cmd_generate(a, &recorded),
        Command::Autotune(a) => cmd_autotune(a, &recorded),
        Command::Optimize(a) => run_episodes(a, &recorded, |h, e| h.task_optimize(e)),
        Command::Feedback(a) => run_episodes(a, &recorded, |h, e| h.task_feedback(e)),
        Command::Iterate(a) => {
            ensure!(a.steps >= 1, "--steps must be at least 1");
            run_episodes(&a.run, &recorded, |h, e| h.iterate_feedback(e, a.steps))
        }
        Command::Sample(a) => {
            check_sampling(a.samples, a.temperature)?;
            run_episodes(&a.run, &recorded, |h, e| h.sample_optimize(e, a.samples, a.temperature))
        }
        Command::Strategy(a) => {
            check_sampling(a.samples, a.temperature)?;
            let strat = SamplingStrategy {
                kind: a.strategy,
                temperature: a.temperature,
                n_samples: a.samples,
            };
            run_episodes(&a.run, &recorded, |h, e| h.run_strategy(e, &strat))
        }
        Command::Report(a) => report::cmd_report(a, &recorded),
        Command::Dataset(a) => cmd_dataset(a, &recorded),
        Command::Rerun(a) => cmd_rerun(a),
    }
}

fn check_sampling(samples: usize, temperature: f64) -> Result<()> {
    ensure!((1..=1000).contains(&samples), "--samples must be between 1 and 1000, got {samples}");
    ensure!(
        (0.0..=2.0).contains(&temperature),
        "--temperature must be between 0 and 2, got {temperature}"
    );
    Ok(())
}

fn cmd_rerun(args: &RerunArgs) -> Result<()> {
    let manifest = Manifest::load(&args.manifest)?;
    let mut command = manifest.command;
    *command.out_mut().expect("every manifest command has an output") = args.out.clone();
    run(command)
}

fn cmd_generate(args: &GenerateArgs, recorded: &Command) -> Result<()> {
    ensure!(args.max_blocks >= 1, "--max-blocks must be at least 1");
    ensure!(args.max_insts >= 1, "--max-insts must be at least 1");
    for (name, p) in [("--opportunity-prob", args.opportunity_prob), ("--const-branch-prob", args.const_branch_prob)] {
        ensure!((0.0..=1.0).contains(&p), "{name} must be a probability, got {p}");
    }
    let params = CorpusParams {
        max_params: args.max_params,
        max_blocks: args.max_blocks,
        max_insts: args.max_insts,
        opportunity_prob: args.opportunity_prob,
        const_branch_prob: args.const_branch_prob,
        ..CorpusParams::default()
    };
    let out = RunDir::create(&args.out)?;
    for (id, ir) in generate_corpus(args.seed, args.size, &params) {
        out.text(&format!("{id}.mir"), &ir)?;
    }
    out.manifest(recorded)?;
    println!("wrote {} programs to {}", args.size, args.out.display());
    Ok(())
}

fn cmd_autotune(args: &AutotuneArgs, recorded: &Command) -> Result<()> {
    let backend = build_backend(&args.backend)?;
    let examples = load_corpus(&args.corpus.corpus)?;
    let budget = SearchBudget {
        strategy: args.search.into(),
        max_depth: args.depth,
        max_evals: args.evals,
        seed: args.seed,
    };
    let out = RunDir::create(&args.out)?;
    let results = run_corpus(&examples, args.jobs, |e| {
        let source_count = backend.count_instructions(&e.ir).map_err(AutotuneError::Uncompilable)?;
        autotune(&e.ir, &*backend, &budget).map(|r| AutotuneLabel {
            example_id: e.id.clone(),
            best_passes: r.best_passes,
            best_count: r.best_count,
            oz_count: r.oz_count,
            source_count: source_count as u64,
        })
    });
    let mut labels = Vec::with_capacity(examples.len());
    for (e, r) in examples.iter().zip(results) {
        match r {
            Ok(label) => labels.push(label),
            Err(AutotuneError::Uncompilable(msg)) => log::warn!("autotune: skipping {}: {msg}", e.id),
            Err(err) => bail!("{err}"),
        }
    }
    if labels.is_empty() && !examples.is_empty() {
        return Err(RuntimeFailure("autotune: no example could be compiled".into()).into());
    }
    let table: Vec<LabelRow<'_>> = labels
        .iter()
        .map(|l| LabelRow {
            example_id: &l.example_id,
            best_passes: l.best_passes.join(" "),
            best_count: l.best_count,
            oz_count: l.oz_count,
            source_count: l.source_count,
        })
        .collect();
    out.jsonl("labels.jsonl", "autotune_label", &labels)?;
    out.csv("labels.csv", "autotune_label", &table)?;
    out.manifest(recorded)?;
    let oz: u64 = labels.iter().map(|l| l.oz_count).sum();
    let best: u64 = labels.iter().map(|l| l.best_count).sum();
    println!(
        "autotuned {}/{} programs; corpus improvement over reference pipeline {:.4}",
        labels.len(),
        examples.len(),
        if oz > 0 { (oz as f64 - best as f64) / oz as f64 } else { 0.0 }
    );
    Ok(())
}

/// Label as a flat table row, passes separated by spaces.
#[derive(Debug, Serialize)]
struct LabelRow<'a> {
    example_id: &'a str,
    best_passes: String,
    best_count: u64,
    oz_count: u64,
    source_count: u64,
}

/// Summary line of an episode run.
#[derive(Debug, Serialize)]
struct RunSummary {
    command: String,
    examples: usize,
    skipped: Vec<String>,
    generate_calls: u64,
    #[serde(flatten)]
    summary: Summary,
}

fn run_episodes<F>(args: &EpisodeArgs, recorded: &Command, f: F) -> Result<()>
where
    F: Fn(&Harness<'_>, &Example) -> Result<EpisodeResult, OrchestratorError> + Sync + Send,
{
    let backend = build_backend(&args.backend)?;
    let base = build_model(&args.model)?;
    let mut examples = load_corpus(&args.corpus.corpus)?;
    if let Some(path) = &args.labels {
        attach_labels(&mut examples, &load_labels(path)?);
    }
    let out = RunDir::create(&args.out)?;

    let recorder = args.model.record.then(|| RecordingModel::new(&*base));
    let model: &dyn Model = match &recorder {
        Some(r) => r,
        None => &*base,
    };
    let mut harness = Harness::new(model, &*backend, FeedbackFormat::from(args.format)).with_oz_combine(args.oz_combine);
    harness.max_tokens = args.model.max_tokens;

    let results = run_corpus(&examples, args.jobs, |e| f(&harness, e));
    let mut episodes = Vec::with_capacity(examples.len());
    let mut skipped = Vec::new();
    for (e, r) in examples.iter().zip(results) {
        match r {
            Ok(ep) => {
                verify_chosen(e, &ep, &*backend).map_err(RuntimeFailure)?;
                episodes.push(ep);
            }
            Err(OrchestratorError::Source { id, message }) => {
                log::warn!("skipping {id}: {message}");
                skipped.push(id);
            }
            Err(err @ OrchestratorError::Config(_)) => bail!("{err}"),
            Err(err) => return Err(RuntimeFailure::from_error(&err).into()),
        }
    }
    if episodes.is_empty() {
        return Err(RuntimeFailure(format!("none of the {} examples could be compiled", examples.len())).into());
    }

    let rows = rows_from_episodes(&episodes);
    let summary = aggregate(&rows).context("aggregating metrics")?;
    let run_summary = RunSummary {
        command: recorded.name().to_string(),
        examples: examples.len(),
        skipped,
        generate_calls: episodes.iter().map(|e| e.generate_calls).sum(),
        summary,
    };
    out.jsonl("episodes.jsonl", "episode", &episodes)?;
    out.jsonl("metrics.jsonl", "metrics_row", &rows)?;
    out.csv("metrics.csv", "metrics_row", &rows)?;
    out.jsonl("summary.jsonl", "run_summary", std::slice::from_ref(&run_summary))?;
    if let Some(r) = &recorder {
        r.write_fixture(out.writer("fixture.jsonl")?).context("writing fixture.jsonl")?;
    }
    out.manifest(recorded)?;

    let s = &run_summary.summary;
    println!(
        "{}: {} episodes, {} generate calls, corpus improvement over reference pipeline {:.4}{}",
        run_summary.command,
        s.rows,
        run_summary.generate_calls,
        s.corpus_improvement,
        s.fraction_of_autotuner.map(|f| format!(", fraction of autotuner {f:.4}")).unwrap_or_default()
    );
    Ok(())
}

fn cmd_dataset(args: &DatasetArgs, recorded: &Command) -> Result<()> {
    for (name, v) in [("--train", args.train), ("--valid-of-heldout", args.valid_of_heldout)] {
        ensure!((0.0..=1.0).contains(&v), "{name} must be within [0, 1], got {v}");
    }
    let manifest = Manifest::load(&args.run.join("manifest.json"))?;
    let run = manifest
        .command
        .episode_args()
        .with_context(|| format!("{} was not produced by an episode command", args.run.display()))?;
    let fmt = FeedbackFormat::from(args.format.unwrap_or(run.format));
    let backend = build_backend(&run.backend)?;
    let examples = load_corpus(&run.corpus.corpus)?;
    let episodes: Vec<EpisodeResult> = read_records(&args.run.join("episodes.jsonl"), "episode")?;
    let labels = load_labels(&args.labels)?;
    let out = RunDir::create(&args.out)?;

    let (records, skipped) = emit_finetune_dataset(&episodes, &examples, &labels, fmt, &*backend);
    ensure!(
        !records.is_empty(),
        "no episode of {} has a matching label in {}",
        args.run.display(),
        args.labels.display()
    );
    let ratios = SplitRatios {
        train: args.train,
        valid_of_heldout: args.valid_of_heldout,
    };
    let total = records.len();
    let split = split_dataset(records, ratios, args.seed);
    out.jsonl("train.jsonl", "finetune_record", &split.train)?;
    out.jsonl("valid.jsonl", "finetune_record", &split.valid)?;
    out.jsonl("test.jsonl", "finetune_record", &split.test)?;
    out.manifest(recorded)?;
    println!(
        "{total} records ({} train, {} valid, {} test), {skipped} episodes skipped",
        split.train.len(),
        split.valid.len(),
        split.test.len()
    );
    Ok(())
}
