//! Task Optimize, Task Feedback, the iterative feedback loop and the
//! best-of-n sampling strategies.
//!
//! Every call to the model asks for a single sample, so the number of
//! `generate` calls of an episode equals the number of generations it
//! produced. Selection only ever uses counts obtained by compiling the
//! candidate pass list; model predictions never enter it.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{CompileResult, CompilerBackend};
use crate::feedback::{build_feedback_prompt, evaluate_raw, render_feedback, source_count, FeedbackFormat, FeedbackRecord};
use crate::model::prompt::optimize_prompt;
use crate::model::{render_generation, Confidence, GenParams, Generation, Model, ModelError};

pub const DEFAULT_MAX_STEPS: usize = 5;

#[derive(Debug, Error)]
pub enum OrchestratorError {
    #[error("example {id}: source does not compile: {message}")]
    Source { id: String, message: String },
    #[error("example {id}: model failed")]
    Model {
        id: String,
        #[source]
        source: ModelError,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Model,
    OzFallback,
    /// No valid candidate and no fallback allowed.
    Failed,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Provenance::Model => "model",
            Provenance::OzFallback => "oz_fallback",
            Provenance::Failed => "failed",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Optimize,
    Feedback,
}

/// One generation and what the compiler made of it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub task: TaskKind,
    pub temperature: f64,
    pub sample_index: u64,
    pub raw_text: String,
    pub generation: Option<Generation>,
    pub record: FeedbackRecord,
}

impl Step {
    /// Text fed back to the model as "its" previous generation.
    pub fn generation_text(&self) -> String {
        match &self.generation {
            Some(g) => render_generation(g),
            None => self.raw_text.clone(),
        }
    }

    pub fn is_sure(&self) -> bool {
        self.generation.as_ref().is_some_and(|g| g.confidence == Confidence::Sure)
    }

    /// Compiled count when the pass list was valid and compiled.
    pub fn candidate_count(&self) -> Option<u64> {
        if self.record.pass_list_valid {
            self.record.compiled_inst_count
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub example_id: String,
    pub chosen_passes: Vec<String>,
    /// Compiled count of `chosen_passes`; the source count for failed
    /// episodes.
    pub chosen_count: u64,
    pub oz_count: u64,
    pub autotuner_count: Option<u64>,
    pub source_count: u64,
    pub provenance: Provenance,
    /// Index into `steps` of the chosen generation.
    pub chosen_step: Option<usize>,
    pub steps_used: usize,
    pub generate_calls: u64,
    /// Best compiled count among the first `k + 1` steps (`None` while no
    /// valid candidate has appeared), without the fallback.
    pub cumulative_best: Vec<Option<u64>>,
    pub steps: Vec<Step>,
}

impl EpisodeResult {
    /// The step whose record labels the episode (the first generation).
    pub fn first_record(&self) -> Option<&FeedbackRecord> {
        self.steps.first().map(|s| &s.record)
    }

    /// Best count among the first `k` steps, falling back to -Oz when
    /// `oz_combine` is set or nothing valid appeared. Episodes that stopped
    /// early keep their final best for larger `k`.
    pub fn best_of_first(&self, k: usize, oz_combine: bool) -> u64 {
        let at = k.min(self.cumulative_best.len());
        let best = at.checked_sub(1).and_then(|i| self.cumulative_best[i]);
        match (best, oz_combine) {
            (Some(b), true) => b.min(self.oz_count),
            (Some(b), false) => b,
            (None, true) => self.oz_count,
            (None, false) => self.source_count,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    OriginalSample,
    #[serde(rename = "feedback_opt_T_fb_0")]
    FeedbackOptTFb0,
    #[serde(rename = "feedback_opt_0_fb_T")]
    FeedbackOpt0FbT,
    FeedbackThenSample,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 4] = [
        StrategyKind::OriginalSample,
        StrategyKind::FeedbackOptTFb0,
        StrategyKind::FeedbackOpt0FbT,
        StrategyKind::FeedbackThenSample,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::OriginalSample => "original_sample",
            StrategyKind::FeedbackOptTFb0 => "feedback_opt_T_fb_0",
            StrategyKind::FeedbackOpt0FbT => "feedback_opt_0_fb_T",
            StrategyKind::FeedbackThenSample => "feedback_then_sample",
        }
    }

    /// Number of generations the strategy produces for `n` samples.
    pub fn generations(self, n: usize) -> usize {
        match self {
            StrategyKind::OriginalSample => n,
            StrategyKind::FeedbackOptTFb0 => 2 * n,
            StrategyKind::FeedbackOpt0FbT => n + 1,
            StrategyKind::FeedbackThenSample => n + 2,
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StrategyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        StrategyKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = StrategyKind::ALL.iter().map(|k| k.name()).collect();
                format!("unknown strategy '{s}' (expected one of {})", names.join(", "))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingStrategy {
    pub kind: StrategyKind,
    pub temperature: f64,
    pub n_samples: usize,
}

/// One corpus entry with its optional autotuner label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    pub id: String,
    pub ir: String,
    pub autotuner_count: Option<u64>,
}

/// Shared configuration of the procedures.
pub struct Harness<'a> {
    pub model: &'a dyn Model,
    pub backend: &'a dyn CompilerBackend,
    pub format: FeedbackFormat,
    /// Let the reference pipeline compete as a candidate.
    pub oz_combine: bool,
    pub max_tokens: usize,
}

/// Per-example facts computed once.
struct Source<'e> {
    example: &'e Example,
    count: u64,
    oz_passes: Vec<String>,
    oz_count: u64,
    prompt: String,
}

impl<'a> Harness<'a> {
    pub fn new(model: &'a dyn Model, backend: &'a dyn CompilerBackend, format: FeedbackFormat) -> Self {
        Self {
            model,
            backend,
            format,
            oz_combine: false,
            max_tokens: GenParams::default().max_tokens,
        }
    }

    pub fn with_oz_combine(mut self, on: bool) -> Self {
        self.oz_combine = on;
        self
    }

    fn source<'e>(&self, example: &'e Example) -> Result<Source<'e>, OrchestratorError> {
        let err = |message: String| OrchestratorError::Source {
            id: example.id.clone(),
            message,
        };
        let count = self.backend.count_instructions(&example.ir).map_err(err)? as u64;
        let oz_passes = self.backend.catalog().reference_pipeline().to_vec();
        let oz_count = match self.backend.compile(&example.ir, &oz_passes) {
            CompileResult::Ok { inst_count, .. } => inst_count as u64,
            CompileResult::Failed { error_message } => return Err(err(error_message)),
        };
        Ok(Source {
            example,
            count,
            oz_passes,
            oz_count,
            prompt: optimize_prompt(&example.ir),
        })
    }

    fn params(&self, temperature: f64, sample_index: u64) -> GenParams {
        GenParams {
            temperature,
            n_samples: 1,
            max_tokens: self.max_tokens,
            stop_after_counts: self.format == FeedbackFormat::Fast,
            first_sample_index: sample_index,
        }
    }

    fn generate_step(
        &self,
        src: &Source<'_>,
        task: TaskKind,
        prompt: &str,
        temperature: f64,
        sample_index: u64,
    ) -> Result<Step, OrchestratorError> {
        let mut texts = self
            .model
            .generate(prompt, &self.params(temperature, sample_index))
            .map_err(|source| OrchestratorError::Model {
                id: src.example.id.clone(),
                source,
            })?;
        let raw = if texts.is_empty() { String::new() } else { texts.swap_remove(0) };
        let (generation, record) = evaluate_raw(&src.example.ir, src.count, &raw, self.backend);
        Ok(Step {
            task,
            temperature,
            sample_index,
            raw_text: raw,
            generation: generation.ok(),
            record,
        })
    }

    fn optimize_step(&self, src: &Source<'_>, temperature: f64, sample_index: u64) -> Result<Step, OrchestratorError> {
        self.generate_step(src, TaskKind::Optimize, &src.prompt, temperature, sample_index)
    }

    fn feedback_step(&self, src: &Source<'_>, prior: &Step, temperature: f64, sample_index: u64) -> Result<Step, OrchestratorError> {
        let prompt = self.feedback_prompt(&src.prompt, prior);
        self.generate_step(src, TaskKind::Feedback, &prompt, temperature, sample_index)
    }

    /// The Task Feedback prompt built from `prior`.
    pub fn feedback_prompt(&self, optimize_prompt: &str, prior: &Step) -> String {
        build_feedback_prompt(
            optimize_prompt,
            &prior.generation_text(),
            &render_feedback(&prior.record, self.format),
        )
    }

    fn assemble(&self, src: &Source<'_>, steps: Vec<Step>) -> EpisodeResult {
        let mut cumulative_best = Vec::with_capacity(steps.len());
        let mut best: Option<(u64, usize)> = None;
        for (i, s) in steps.iter().enumerate() {
            if let Some(c) = s.candidate_count() {
                if best.is_none_or(|(b, _)| c < b) {
                    best = Some((c, i));
                }
            }
            cumulative_best.push(best.map(|(b, _)| b));
        }
        let fallback = self.oz_combine && best.is_none_or(|(b, _)| src.oz_count < b);
        let (chosen_passes, chosen_count, provenance, chosen_step) = match best {
            _ if fallback => (src.oz_passes.clone(), src.oz_count, Provenance::OzFallback, None),
            Some((c, i)) => {
                let g = steps[i].generation.as_ref().expect("valid candidate has a generation");
                (g.passes.clone(), c, Provenance::Model, Some(i))
            }
            None => (vec![], src.count, Provenance::Failed, None),
        };
        EpisodeResult {
            example_id: src.example.id.clone(),
            chosen_passes,
            chosen_count,
            oz_count: src.oz_count,
            autotuner_count: src.example.autotuner_count,
            source_count: src.count,
            provenance,
            chosen_step,
            steps_used: steps.len(),
            generate_calls: steps.len() as u64,
            cumulative_best,
            steps,
        }
    }

    /// Task Optimize: one generation at temperature 0.
    pub fn task_optimize(&self, example: &Example) -> Result<EpisodeResult, OrchestratorError> {
        let src = self.source(example)?;
        let step = self.optimize_step(&src, 0.0, 0)?;
        Ok(self.assemble(&src, vec![step]))
    }

    /// Task Optimize followed by one Task Feedback at temperature 0.
    pub fn task_feedback(&self, example: &Example) -> Result<EpisodeResult, OrchestratorError> {
        let src = self.source(example)?;
        let first = self.optimize_step(&src, 0.0, 0)?;
        let second = self.feedback_step(&src, &first, 0.0, 0)?;
        Ok(self.assemble(&src, vec![first, second]))
    }

    /// Optimize, then feed back up to `max_steps - 1` times, stopping as
    /// soon as a generation starts with "I am sure!".
    pub fn iterate_feedback(&self, example: &Example, max_steps: usize) -> Result<EpisodeResult, OrchestratorError> {
        if max_steps == 0 {
            return Err(OrchestratorError::Config("max_steps must be at least 1".into()));
        }
        let src = self.source(example)?;
        let mut steps = vec![self.optimize_step(&src, 0.0, 0)?];
        while steps.len() < max_steps && !steps.last().expect("non-empty").is_sure() {
            let next = self.feedback_step(&src, steps.last().expect("non-empty"), 0.0, 0)?;
            steps.push(next);
        }
        Ok(self.assemble(&src, steps))
    }

    /// `n` independent Task Optimize samples at `temperature`.
    pub fn sample_optimize(&self, example: &Example, n: usize, temperature: f64) -> Result<EpisodeResult, OrchestratorError> {
        self.run_strategy(
            example,
            &SamplingStrategy {
                kind: StrategyKind::OriginalSample,
                temperature,
                n_samples: n,
            },
        )
    }

    fn samples<F>(&self, n: usize, f: F) -> Result<Vec<Step>, OrchestratorError>
    where
        F: Fn(u64) -> Result<Step, OrchestratorError> + Sync + Send,
    {
        (0..n as u64).into_par_iter().map(f).collect()
    }

    pub fn run_strategy(&self, example: &Example, strat: &SamplingStrategy) -> Result<EpisodeResult, OrchestratorError> {
        let n = strat.n_samples;
        let t = strat.temperature;
        if n == 0 {
            return Err(OrchestratorError::Config("n_samples must be at least 1".into()));
        }
        let src = self.source(example)?;
        let steps = match strat.kind {
            StrategyKind::OriginalSample => self.samples(n, |i| self.optimize_step(&src, t, i))?,
            StrategyKind::FeedbackOptTFb0 => {
                let pairs: Vec<(Step, Step)> = (0..n as u64)
                    .into_par_iter()
                    .map(|i| {
                        let first = self.optimize_step(&src, t, i)?;
                        let second = self.feedback_step(&src, &first, 0.0, 0)?;
                        Ok((first, second))
                    })
                    .collect::<Result<_, OrchestratorError>>()?;
                pairs.into_iter().flat_map(|(a, b)| [a, b]).collect()
            }
            StrategyKind::FeedbackOpt0FbT => {
                let first = self.optimize_step(&src, 0.0, 0)?;
                let rest = self.samples(n, |i| self.feedback_step(&src, &first, t, i))?;
                std::iter::once(first).chain(rest).collect()
            }
            StrategyKind::FeedbackThenSample => {
                let first = self.optimize_step(&src, 0.0, 0)?;
                let second = self.feedback_step(&src, &first, 0.0, 0)?;
                let rest = self.samples(n, |i| self.feedback_step(&src, &second, t, i))?;
                [first, second].into_iter().chain(rest).collect()
            }
        };
        Ok(self.assemble(&src, steps))
    }
}

/// Runs `f` over the corpus on `jobs` worker threads (0 = all cores),
/// returning results in corpus order.
pub fn run_corpus<T, F>(examples: &[Example], jobs: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&Example) -> T + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .expect("thread pool");
    pool.install(|| examples.par_iter().map(&f).collect())
}

/// Re-compiles the chosen passes of an episode and checks the recorded count.
pub fn verify_chosen(example: &Example, episode: &EpisodeResult, backend: &dyn CompilerBackend) -> Result<(), String> {
    if episode.provenance == Provenance::Failed {
        return if episode.chosen_count == source_count(&example.ir, backend) {
            Ok(())
        } else {
            Err("failed episode must report the source count".into())
        };
    }
    match backend.compile(&example.ir, &episode.chosen_passes) {
        CompileResult::Ok { inst_count, .. } if inst_count as u64 == episode.chosen_count => Ok(()),
        CompileResult::Ok { inst_count, .. } => Err(format!(
            "{}: recorded {} but passes compile to {inst_count}",
            episode.example_id, episode.chosen_count
        )),
        CompileResult::Failed { error_message } => Err(format!("{}: {error_message}", episode.example_id)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::MiniBackend;
    use crate::model::{CountingModel, ScriptedModel, StubModel};

    const WITNESS: &str = "func fold() {\nentry:\n  %a = add i32 2, 3\n  %b = mul i32 %a, 0\n  ret i32 %b\n}";

    fn example() -> Example {
        Example {
            id: "w".into(),
            ir: WITNESS.into(),
            autotuner_count: Some(1),
        }
    }

    fn gen(conf: Confidence, passes: &[&str], tgt: u64) -> String {
        Generation::new(conf, passes.iter().map(|s| s.to_string()).collect(), 3, tgt, None).raw_text
    }

    #[test]
    fn empty_pass_list_compiles_to_source() {
        let m = ScriptedModel::new(vec![gen(Confidence::Absent, &[], 3)]);
        let be = MiniBackend::new();
        let ep = Harness::new(&m, &be, FeedbackFormat::Short).task_optimize(&example()).unwrap();
        assert_eq!(ep.chosen_count, 3);
        assert_eq!(ep.provenance, Provenance::Model);
        verify_chosen(&example(), &ep, &be).unwrap();
    }

    #[test]
    fn early_stop_on_sure() {
        let be = MiniBackend::new();
        let script = vec![
            gen(Confidence::Retry, &["dce"], 1),
            gen(Confidence::Sure, &["constfold", "dce"], 1),
            gen(Confidence::Sure, &["dce"], 3),
        ];
        let m = CountingModel::new(ScriptedModel::new(script));
        let ep = Harness::new(&m, &be, FeedbackFormat::Fast).iterate_feedback(&example(), 5).unwrap();
        assert_eq!(ep.steps_used, 2);
        assert_eq!(m.calls(), 2);
        assert_eq!(ep.chosen_count, 1);
        assert_eq!(ep.cumulative_best, vec![Some(3), Some(1)]);
        assert_eq!(ep.best_of_first(1, false), 3);
        assert_eq!(ep.best_of_first(5, false), 1);
        assert_eq!(ep.best_of_first(0, false), ep.source_count);
    }

    #[test]
    fn oz_fallback_and_failed() {
        let be = MiniBackend::new();
        let m = ScriptedModel::new(vec!["nonsense".into()]);
        let h = Harness::new(&m, &be, FeedbackFormat::Short);
        let ep = h.iterate_feedback(&example(), 3).unwrap();
        assert_eq!(ep.provenance, Provenance::Failed);
        assert_eq!(ep.chosen_count, ep.source_count);
        assert_eq!(ep.steps_used, 3);
        let ep = h.with_oz_combine(true).iterate_feedback(&example(), 2).unwrap();
        assert_eq!(ep.provenance, Provenance::OzFallback);
        assert_eq!(ep.chosen_count, ep.oz_count);
    }

    #[test]
    fn strategy_cardinalities() {
        let be = MiniBackend::new();
        for kind in StrategyKind::ALL {
            let m = CountingModel::new(StubModel::new(4).with_confidence(true));
            let strat = SamplingStrategy {
                kind,
                temperature: 0.8,
                n_samples: 3,
            };
            let ep = Harness::new(&m, &be, FeedbackFormat::Short).run_strategy(&example(), &strat).unwrap();
            assert_eq!(ep.steps.len(), kind.generations(3), "{kind}");
            assert_eq!(m.calls() as usize, kind.generations(3), "{kind}");
            assert_eq!(kind.name().parse::<StrategyKind>().unwrap(), kind);
        }
    }

    #[test]
    fn sample_one_cold_equals_optimize() {
        let be = MiniBackend::new();
        let m = StubModel::new(11);
        let h = Harness::new(&m, &be, FeedbackFormat::Short);
        let a = h.task_optimize(&example()).unwrap();
        let b = h.sample_optimize(&example(), 1, 0.0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn feedback_prompt_has_one_feedback_section() {
        let be = MiniBackend::new();
        let m = StubModel::new(1);
        let h = Harness::new(&m, &be, FeedbackFormat::Long);
        let ep = h.iterate_feedback(&example(), 3).unwrap();
        let p = h.feedback_prompt(&optimize_prompt(WITNESS), &ep.steps[ep.steps.len() - 1]);
        assert_eq!(p.matches("--- feedback ---").count(), 1);
    }

    #[test]
    fn corpus_order_is_stable() {
        let examples: Vec<Example> = (0..20)
            .map(|i| Example {
                id: format!("e{i}"),
                ir: WITNESS.into(),
                autotuner_count: None,
            })
            .collect();
        let ids = run_corpus(&examples, 4, |e| e.id.clone());
        assert_eq!(ids, examples.iter().map(|e| e.id.clone()).collect::<Vec<_>>());
    }
}
