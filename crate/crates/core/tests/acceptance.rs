//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails.

use std::collections::HashMap;
use std::time::{Duration, Instant};

use passfeedback::autotune::{autotune, AutotuneLabel, SearchBudget, SearchStrategy};
use passfeedback::backend::{CompilerBackend, MiniBackend};
use passfeedback::feedback::{check_invariants, confidence_label, render_feedback, FeedbackFormat, FeedbackRecord};
use passfeedback::ir_text::{bleu, TokenSeq};
use passfeedback::metrics::{
    aggregate, emit_finetune_dataset, pearson_matrix, rows_from_episodes, write_csv, write_jsonl, MetricField, MetricsRow,
};
use passfeedback::mir::{apply_pass, generate_corpus, interpret, parse_module, CorpusParams, Pass};
use passfeedback::model::{Confidence, CountingModel, Generation, ScriptedModel, StubModel};
use passfeedback::orchestrator::{run_corpus, verify_chosen, EpisodeResult, Example, Harness, Provenance};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const CORPUS_SEED: u64 = 20240611;
const MODEL_SEED: u64 = 7;

type Outcome = Result<String, String>;
/// Metrics JSONL, metrics CSV and summary JSONL of one run.
type RunBytes = (Vec<u8>, Vec<u8>, Vec<u8>);
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

fn corpus(size: usize) -> Vec<Example> {
    generate_corpus(CORPUS_SEED, size, &CorpusParams::default())
        .into_iter()
        .map(|(id, ir)| Example {
            id,
            ir,
            autotuner_count: None,
        })
        .collect()
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn c01_pass_semantics() -> Outcome {
    let start = Instant::now();
    let programs = generate_corpus(CORPUS_SEED, 1000, &CorpusParams::default());
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut checks, mut mismatches) = (0u64, 0u64);
    for (id, text) in &programs {
        let m = parse_module(text).map_err(|e| format!("{id}: {e}"))?;
        let arity = m.functions[0].params.len();
        let arg_sets: Vec<Vec<i32>> = (0..20)
            .map(|_| (0..arity).map(|_| rng.random::<i32>()).collect())
            .collect();
        for p in Pass::ALL {
            let out = apply_pass(&m, p);
            for args in &arg_sets {
                checks += 1;
                if interpret(&m, args, 100_000) != interpret(&out, args, 100_000) {
                    mismatches += 1;
                }
            }
        }
    }
    let elapsed = start.elapsed();
    ensure(mismatches == 0, || format!("{mismatches} of {checks} runs differ"))?;
    ensure(elapsed < Duration::from_secs(60), || format!("took {elapsed:?}"))?;
    Ok(format!("{checks} runs identical in {:.2}s", elapsed.as_secs_f64()))
}

fn c02_phase_ordering_witness() -> Outcome {
    let be = MiniBackend::new();
    let ir = include_str!("fixtures/fold_witness.mir");
    let count = |ps: &[&str]| {
        be.compile(ir, &ps.iter().map(|s| s.to_string()).collect::<Vec<_>>())
            .inst_count()
            .expect("compiles")
    };
    ensure(count(&["constfold", "dce"]) == 1, || "[constfold, dce] is not 1".into())?;
    ensure(count(&["dce"]) == 3, || "[dce] is not 3".into())?;
    ensure(count(&["dce", "constfold"]) == 3, || "[dce, constfold] is not 3".into())?;
    let mut table = Vec::new();
    for a in Pass::ALL {
        table.push((vec![a.name()], count(&[a.name()])));
        for b in Pass::ALL {
            table.push((vec![a.name(), b.name()], count(&[a.name(), b.name()])));
        }
    }
    let best = table.iter().map(|(_, c)| *c).min().unwrap().min(count(&[]));
    ensure(table.len() + 1 == 31, || "depth-2 space is not 31 pipelines".into())?;
    ensure(best == 1, || format!("depth-2 optimum is {best}"))?;
    let budget = SearchBudget {
        max_depth: 2,
        ..SearchBudget::default()
    };
    let tuned = autotune(ir, &be, &budget).map_err(|e| e.to_string())?;
    ensure(tuned.best_count == best as u64, || format!("autotuner finds {}, enumeration {best}", tuned.best_count))?;
    Ok(format!("[constfold,dce]=1, [dce]=3, [dce,constfold]=3, depth-2 optimum 1 over {} pipelines", table.len() + 1))
}

fn c03_autotuner_dominance() -> Outcome {
    let be = MiniBackend::new();
    let examples = corpus(500);
    let budget = SearchBudget {
        strategy: SearchStrategy::Exhaustive,
        max_depth: 3,
        ..SearchBudget::default()
    };
    let start = Instant::now();
    let results = run_corpus(&examples, 0, |e| autotune(&e.ir, &be, &budget));
    let mut violations = 0;
    let (mut sum_oz, mut sum_at) = (0u64, 0u64);
    for (e, r) in examples.iter().zip(results) {
        let r = r.map_err(|err| format!("{}: {err}", e.id))?;
        if r.best_count > r.oz_count {
            violations += 1;
        }
        sum_oz += r.oz_count;
        sum_at += r.best_count;
    }
    let improvement = (sum_oz as f64 - sum_at as f64) / sum_oz as f64;
    ensure(violations == 0, || format!("{violations} programs where autotuner > -Oz"))?;
    ensure(improvement > 0.0, || format!("autotuner corpus improvement {improvement}"))?;
    Ok(format!(
        "0 violations, autotuner corpus improvement {:.4} over -Oz ({:.1}s)",
        improvement,
        start.elapsed().as_secs_f64()
    ))
}

/// Independent reference: unsmoothed corpus-of-one BLEU, written out longhand.
fn oracle_bleu(c: &[&str], r: &[&str]) -> f64 {
    if c.is_empty() {
        return if r.is_empty() { 1.0 } else { 0.0 };
    }
    let order = c.len().min(4);
    let mut log_sum = 0.0;
    for n in 1..=order {
        let grams = |s: &[&str]| {
            let mut m: HashMap<Vec<String>, usize> = HashMap::new();
            for w in s.windows(n) {
                *m.entry(w.iter().map(|x| x.to_string()).collect()).or_default() += 1;
            }
            m
        };
        let (cg, rg) = (grams(c), grams(r));
        let matched: usize = cg.iter().map(|(g, k)| (*k).min(*rg.get(g).unwrap_or(&0))).sum();
        let total = c.len() - n + 1;
        if matched == 0 {
            return 0.0;
        }
        log_sum += (matched as f64 / total as f64).ln();
    }
    let bp = if c.len() < r.len() { (1.0 - r.len() as f64 / c.len() as f64).exp() } else { 1.0 };
    bp * (log_sum / order as f64).exp()
}

fn seq(s: &str) -> TokenSeq {
    TokenSeq::new(s.split_whitespace().map(str::to_string).collect())
}

fn c04_bleu_oracle() -> Outcome {
    let ten = "t0 t1 t2 t3 t4 t5 t6 t7 t8 t9";
    let b = bleu(&seq(ten), &seq(ten), 4);
    ensure((b.score - 1.0).abs() < 1e-9 && b.brevity_penalty == 1.0, || format!("identity gives {b:?}"))?;
    ensure(b.precisions.iter().all(|p| (p - 1.0).abs() < 1e-9), || "identity precisions".into())?;
    let b = bleu(&seq("a b c"), &seq("x y z"), 4);
    ensure(b.score.abs() < 1e-9, || format!("disjoint gives {}", b.score))?;
    let b = bleu(&seq("a b c d"), &seq("a b c e"), 4);
    let want = [0.75, 2.0 / 3.0, 0.5, 0.0];
    ensure(
        b.precisions.len() == 4 && b.precisions.iter().zip(want).all(|(p, w)| (p - w).abs() < 1e-9),
        || format!("precisions {:?}", b.precisions),
    )?;
    ensure(b.score.abs() < 1e-9, || format!("abcd/abce gives {}", b.score))?;
    let c6 = ["a", "b", "c", "d", "e", "f"];
    let r6 = ["a", "b", "c", "d", "e", "g"];
    let oracle = oracle_bleu(&c6, &r6);
    let closed = (5.0 / 6.0 * 4.0 / 5.0 * 3.0 / 4.0 * 2.0 / 3.0f64).powf(0.25);
    let got = bleu(&seq("a b c d e f"), &seq("a b c d e g"), 4).score;
    ensure((oracle - closed).abs() < 1e-12, || "oracle disagrees with closed form".into())?;
    ensure((got - oracle).abs() < 1e-9, || format!("abcdef/abcdeg gives {got}, oracle {oracle}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for i in 0..100 {
        let len = rng.random_range(1..40);
        let toks: Vec<String> = (0..len).map(|_| format!("w{}", rng.random_range(0..8))).collect();
        let s = TokenSeq::new(toks);
        let score = bleu(&s, &s, 4).score;
        ensure((score - 1.0).abs() < 1e-9, || format!("random sequence {i}: bleu(x,x) = {score}"))?;
    }
    Ok(format!("hand cases match; abcdef/abcdeg = {got:.12}; bleu(x,x)=1 on 100 random sequences"))
}

/// Stub-model episodes in every shape: iterative (Short) and sampled (Long,
/// Fast) over the same corpus.
fn stub_episodes(examples: &[Example]) -> Result<Vec<EpisodeResult>, String> {
    let be = MiniBackend::new();
    let model = StubModel::new(MODEL_SEED).with_confidence(true);
    let runs = run_corpus(examples, 0, |e| -> Result<Vec<EpisodeResult>, String> {
        let short = Harness::new(&model, &be, FeedbackFormat::Short);
        let long = Harness::new(&model, &be, FeedbackFormat::Long);
        let fast = Harness::new(&model, &be, FeedbackFormat::Fast);
        Ok(vec![
            short.iterate_feedback(e, 5).map_err(|x| x.to_string())?,
            long.sample_optimize(e, 3, 1.0).map_err(|x| x.to_string())?,
            fast.iterate_feedback(e, 3).map_err(|x| x.to_string())?,
        ])
    });
    let mut out = Vec::new();
    for r in runs {
        out.extend(r?);
    }
    Ok(out)
}

fn records(episodes: &[EpisodeResult]) -> Vec<(&FeedbackRecord, Option<&Generation>)> {
    episodes
        .iter()
        .flat_map(|e| e.steps.iter().map(|s| (&s.record, s.generation.as_ref())))
        .collect()
}

fn c05_feedback_totality(episodes: &Result<Vec<EpisodeResult>, String>) -> Outcome {
    let episodes = episodes.as_ref().map_err(Clone::clone)?;
    let recs = records(episodes);
    let (mut sure, mut unparsed) = (0, 0);
    for (rec, g) in &recs {
        check_invariants(rec)?;
        let label_sure = confidence_label(rec) == Confidence::Sure;
        let matches = match (rec.compiled_inst_count, g) {
            (Some(c), Some(g)) => c == g.tgt_inst_count_pred,
            _ => false,
        };
        ensure(label_sure == matches, || format!("label {label_sure} but count match {matches}: {rec:?}"))?;
        sure += usize::from(label_sure);
        unparsed += usize::from(g.is_none());
    }
    ensure(recs.len() >= 1500, || format!("only {} records", recs.len()))?;
    Ok(format!(
        "{} records over 500 programs, invariants hold in all; {sure} sure, {unparsed} unparseable",
        recs.len()
    ))
}

fn c06_format_containment(episodes: &Result<Vec<EpisodeResult>, String>) -> Outcome {
    let episodes = episodes.as_ref().map_err(Clone::clone)?;
    let recs = records(episodes);
    let mut with_ir = 0;
    for (rec, _) in &recs {
        let fast = render_feedback(rec, FeedbackFormat::Fast);
        let short = render_feedback(rec, FeedbackFormat::Short);
        let long = render_feedback(rec, FeedbackFormat::Long);
        ensure(short.as_bytes().starts_with(fast.as_bytes()), || format!("fast not a prefix of short:\n{short}"))?;
        ensure(long.as_bytes().starts_with(short.as_bytes()), || format!("short not a prefix of long:\n{long}"))?;
        let has_section = long.contains("compiled_ir:\n");
        ensure(has_section == rec.compiled_ir.is_some(), || format!("compiled IR presence mismatch:\n{long}"))?;
        if let Some(ir) = &rec.compiled_ir {
            ensure(long.contains(ir.as_str()), || "long feedback lacks the compiled IR text".into())?;
            with_ir += 1;
        }
    }
    Ok(format!("prefix property on {} records; {with_ir} carry compiled IR", recs.len()))
}

fn c07_early_stop() -> Outcome {
    let be = MiniBackend::new();
    let example = Example {
        id: "witness".into(),
        ir: include_str!("fixtures/fold_witness.mir").into(),
        autotuner_count: None,
    };
    let line = |c: Confidence| Generation::new(c, vec!["dce".into()], 3, 3, None).raw_text;
    let mut seen = Vec::new();
    for k in 1..=5usize {
        let mut script: Vec<String> = (1..k).map(|_| line(Confidence::Retry)).collect();
        script.push(line(Confidence::Sure));
        script.push(line(Confidence::Retry));
        let model = CountingModel::new(ScriptedModel::new(script));
        let ep = Harness::new(&model, &be, FeedbackFormat::Short)
            .iterate_feedback(&example, 5)
            .map_err(|e| e.to_string())?;
        ensure(model.calls() == k as u64 && ep.steps_used == k, || {
            format!("sure at step {k}: {} calls, {} steps", model.calls(), ep.steps_used)
        })?;
        seen.push(model.calls());
    }
    let never = CountingModel::new(ScriptedModel::new(vec![line(Confidence::Retry)]));
    let ep = Harness::new(&never, &be, FeedbackFormat::Short)
        .iterate_feedback(&example, 5)
        .map_err(|e| e.to_string())?;
    ensure(never.calls() == 5 && ep.steps_used == 5, || "never-sure model did not use 5 steps".into())?;
    Ok(format!("calls per k=1..5: {seen:?}; never-sure model uses 5"))
}

fn c08_sampling_monotonicity() -> Outcome {
    let be = MiniBackend::new();
    let model = StubModel::new(MODEL_SEED);
    let examples = corpus(500);
    let h = Harness::new(&model, &be, FeedbackFormat::Short);
    let episodes: Vec<EpisodeResult> = run_corpus(&examples, 0, |e| h.sample_optimize(e, 10, 1.0))
        .into_iter()
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let sum_oz: u64 = episodes.iter().map(|e| e.oz_count).sum();
    let improvement = |k: usize| {
        let chosen: u64 = episodes.iter().map(|e| e.best_of_first(k, false)).sum();
        (sum_oz as f64 - chosen as f64) / sum_oz as f64
    };
    let ns = [1, 2, 3, 10];
    let values: Vec<f64> = ns.iter().map(|&n| improvement(n)).collect();
    ensure(values.windows(2).all(|w| w[0] <= w[1]), || format!("not monotone: {values:?}"))?;
    ensure(values[3] > values[0], || format!("n=10 does not beat n=1: {values:?}"))?;
    // A separate n=3 run reproduces the 3-sample prefix of the n=10 run.
    for (e, ep) in examples.iter().zip(&episodes).take(50) {
        let three = h.sample_optimize(e, 3, 1.0).map_err(|x| x.to_string())?;
        ensure(three.chosen_count == ep.best_of_first(3, false), || format!("{}: n=3 run disagrees with prefix", e.id))?;
    }
    let shown: Vec<String> = ns.iter().zip(&values).map(|(n, v)| format!("n={n}: {v:+.4}")).collect();
    Ok(format!("corpus improvement over -Oz {}", shown.join(", ")))
}

fn c09_equal_compute() -> Outcome {
    let be = MiniBackend::new();
    let examples = corpus(100);
    let mut early = 0;
    for e in &examples {
        // Model without confidence lines: no early stop, 5 steps vs 5 samples.
        let plain = CountingModel::new(StubModel::new(MODEL_SEED));
        let h = Harness::new(&plain, &be, FeedbackFormat::Short);
        h.iterate_feedback(e, 5).map_err(|x| x.to_string())?;
        let iter_calls = plain.calls();
        plain.reset();
        h.sample_optimize(e, 5, 1.0).map_err(|x| x.to_string())?;
        ensure(iter_calls == 5 && plain.calls() == 5, || {
            format!("{}: iterate {iter_calls} calls, sample {} calls", e.id, plain.calls())
        })?;

        // Confident model: sampling gets exactly the calls iterate used.
        let sure = CountingModel::new(StubModel::new(MODEL_SEED).with_confidence(true));
        let h = Harness::new(&sure, &be, FeedbackFormat::Short);
        let ep = h.iterate_feedback(e, 5).map_err(|x| x.to_string())?;
        let iter_calls = sure.calls();
        early += usize::from(ep.steps_used < 5);
        sure.reset();
        h.sample_optimize(e, ep.steps_used, 1.0).map_err(|x| x.to_string())?;
        ensure(iter_calls == ep.generate_calls && sure.calls() == iter_calls, || {
            format!("{}: iterate {iter_calls} calls, matched sample {}", e.id, sure.calls())
        })?;
    }
    Ok(format!(
        "100 programs: 5 = 5 calls each without early stop; with early stop ({early} episodes) sample budget matches iterate"
    ))
}

fn row_xy(id: &str, x: u64, y: u64) -> MetricsRow {
    MetricsRow {
        example_id: id.into(),
        src_inst_cnt_c: x,
        src_inst_cnt_g: None,
        tgt_inst_cnt_g: None,
        tgt_inst_cnt_c: Some(y),
        tgt_inst_cnt_error_c: None,
        tgt_ir_bleu_c: None,
        num_flags: None,
        pass_list_valid: true,
        oz_count: 10,
        autotuner_count: None,
        chosen_count: 10,
        improvement_over_oz: 0.0,
        improvement_over_autotuner: None,
        provenance: Provenance::Model,
        steps_used: 1,
    }
}

fn c10_metrics_oracles() -> Outcome {
    let xs = [1u64, 2, 3, 4, 5];
    let ys = [2u64, 4, 5, 4, 5];
    let rows: Vec<MetricsRow> = xs.iter().zip(ys).map(|(&x, y)| row_xy(&format!("r{x}"), x, y)).collect();
    let m = pearson_matrix(&rows, &[MetricField::SrcInstCntC, MetricField::TgtInstCntC]).map_err(|e| e.to_string())?;
    // means 3 and 4; Sxy = 6, Sxx = 10, Syy = 6.
    let closed = 6.0 / 60f64.sqrt();
    let r = m.values[0][1].value().ok_or("undefined correlation")?;
    ensure((r - closed).abs() < 1e-12, || format!("r = {r}, closed form {closed}"))?;
    ensure(m.values[1][0] == m.values[0][1], || "matrix not symmetric".into())?;
    ensure(m.values[0][0].value() == Some(1.0), || "diagonal not 1".into())?;

    let toy = |id: &str, chosen: u64| MetricsRow {
        oz_count: 10,
        autotuner_count: Some(8),
        chosen_count: chosen,
        improvement_over_oz: (10.0 - chosen as f64) / 10.0,
        ..row_xy(id, 12, 0)
    };
    let s = aggregate(&[toy("a", 9), toy("b", 8)]).map_err(|e| e.to_string())?;
    ensure(s.corpus_improvement == 0.15, || format!("corpus {}", s.corpus_improvement))?;
    ensure(s.fraction_of_autotuner == Some(0.75), || format!("fraction {:?}", s.fraction_of_autotuner))?;
    Ok(format!("r = {r:.15} (closed form {closed:.15}); toy corpus 0.15, fraction 0.75"))
}

fn c11_dataset_rule() -> Outcome {
    let be = MiniBackend::new();
    let examples = corpus(200);
    let budget = SearchBudget {
        max_depth: 2,
        ..SearchBudget::default()
    };
    let labels: Vec<AutotuneLabel> = examples
        .iter()
        .map(|e| {
            let r = autotune(&e.ir, &be, &budget).expect("corpus compiles");
            AutotuneLabel {
                example_id: e.id.clone(),
                best_passes: r.best_passes,
                best_count: r.best_count,
                oz_count: r.oz_count,
                source_count: be.count_instructions(&e.ir).unwrap() as u64,
            }
        })
        .collect();
    let model = StubModel::new(MODEL_SEED);
    let mut checked = (0, 0);
    for fmt in FeedbackFormat::ALL {
        let h = Harness::new(&model, &be, fmt);
        let episodes: Vec<EpisodeResult> = examples.iter().map(|e| h.task_optimize(e)).collect::<Result<_, _>>().map_err(|e| e.to_string())?;
        let by_id: HashMap<&str, &EpisodeResult> = episodes.iter().map(|e| (e.example_id.as_str(), e)).collect();
        let (records, skipped) = emit_finetune_dataset(&episodes, &examples, &labels, fmt, &be);
        ensure(skipped == 0 && records.len() == examples.len(), || format!("{skipped} skipped"))?;
        for r in &records {
            let first = by_id[r.meta.example_id.as_str()].first_record().ok_or("episode without steps")?;
            if r.completion.starts_with("I am sure!") {
                ensure(first.pass_list_valid && first.tgt_inst_cnt_error_c == Some(0), || {
                    format!("{}: sure label on error {:?}", r.meta.example_id, first.tgt_inst_cnt_error_c)
                })?;
                checked.0 += 1;
            } else if r.completion.starts_with("Let me try again.") {
                ensure(!first.pass_list_valid || first.tgt_inst_cnt_error_c.is_some_and(|e| e > 0) || first.tgt_inst_cnt_error_c.is_none(), || {
                    format!("{}: retry label on a correct prediction", r.meta.example_id)
                })?;
                checked.1 += 1;
            } else {
                return Err(format!("{}: completion without confidence line", r.meta.example_id));
            }
            let g = passfeedback::model::parse_generation(&r.completion).map_err(|e| e.to_string())?;
            let ir = &examples.iter().find(|e| e.id == r.meta.example_id).unwrap().ir;
            let count = be.compile(ir, &g.passes).inst_count().ok_or("label passes fail")? as u64;
            ensure(count == g.tgt_inst_count_pred && g.src_inst_count_pred == r.meta.source_count, || {
                format!("{}: completion counts do not recompile", r.meta.example_id)
            })?;
            ensure(g.optimized_ir.is_some() == fmt.needs_generated_ir(), || "IR section presence".into())?;
        }
    }
    ensure(checked.0 > 0 && checked.1 > 0, || format!("labels one-sided: {checked:?}"))?;
    Ok(format!("{} sure / {} retry completions consistent with their episodes (3 formats)", checked.0, checked.1))
}

fn metrics_bytes(examples: &[Example]) -> Result<RunBytes, String> {
    let be = MiniBackend::new();
    let model = StubModel::new(MODEL_SEED).with_confidence(true);
    let h = Harness::new(&model, &be, FeedbackFormat::Short).with_oz_combine(true);
    let episodes: Vec<EpisodeResult> = run_corpus(examples, 0, |e| h.iterate_feedback(e, 5))
        .into_iter()
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    for (e, ep) in examples.iter().zip(&episodes) {
        verify_chosen(e, ep, &be)?;
        ensure(ep.chosen_count <= ep.oz_count, || format!("{}: oz-combined episode above -Oz", e.id))?;
    }
    let rows = rows_from_episodes(&episodes);
    let summary = aggregate(&rows).map_err(|e| e.to_string())?;
    let (mut a, mut b, mut c) = (Vec::new(), Vec::new(), Vec::new());
    write_jsonl(&mut a, "metrics_rows", &rows).map_err(|e| e.to_string())?;
    write_csv(&mut b, "metrics_rows", &rows).map_err(|e| e.to_string())?;
    write_jsonl(&mut c, "summary", &[summary]).map_err(|e| e.to_string())?;
    Ok((a, b, c))
}

fn c12_reproducibility() -> Outcome {
    let examples = corpus(100);
    let start = Instant::now();
    let first = metrics_bytes(&examples)?;
    let elapsed = start.elapsed();
    let second = metrics_bytes(&examples)?;
    ensure(first == second, || "metrics files differ between identical runs".into())?;
    ensure(elapsed < Duration::from_secs(60), || format!("100-program iterate run took {elapsed:?}"))?;
    Ok(format!(
        "byte-identical rows/csv/summary ({} bytes); 100-program iterate run {:.2}s",
        first.0.len() + first.1.len() + first.2.len(),
        elapsed.as_secs_f64()
    ))
}

fn main() {
    let stub_runs = stub_episodes(&corpus(500));
    let criteria: Vec<Criterion<'_>> = vec![
        ("C01 pass semantics", Box::new(c01_pass_semantics)),
        ("C02 phase-ordering witness", Box::new(c02_phase_ordering_witness)),
        ("C03 autotuner dominance", Box::new(c03_autotuner_dominance)),
        ("C04 BLEU oracle", Box::new(c04_bleu_oracle)),
        ("C05 feedback totality", Box::new(|| c05_feedback_totality(&stub_runs))),
        ("C06 format containment", Box::new(|| c06_format_containment(&stub_runs))),
        ("C07 early stop", Box::new(c07_early_stop)),
        ("C08 sampling monotonicity", Box::new(c08_sampling_monotonicity)),
        ("C09 equal-compute accounting", Box::new(c09_equal_compute)),
        ("C10 metrics oracles", Box::new(c10_metrics_oracles)),
        ("C11 dataset rule", Box::new(c11_dataset_rule)),
        ("C12 reproducibility", Box::new(c12_reproducibility)),
    ];
    let mut failed = 0;
    for (name, run) in &criteria {
        let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(run))
            .unwrap_or_else(|p| Err(format!("panicked: {:?}", p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())))));
        match outcome {
            Ok(detail) => println!("[PASS] {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("[FAIL] {name}: {why}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
