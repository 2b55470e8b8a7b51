use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use passfeedback::autotune::SearchStrategy;
use passfeedback::feedback::FeedbackFormat;
use passfeedback::orchestrator::StrategyKind;
use serde::{Deserialize, Serialize};

#[derive(Parser, Debug)]
#[command(name = "passfeedback", version, about = "Compiler-in-the-loop feedback harness for pass ordering")]
pub struct Cli {
    /// More log output (-v info, -vv debug); RUST_LOG overrides.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "command")]
pub enum Command {
    /// Write a seeded corpus of mini-IR programs as .mir files.
    GenerateCorpus(GenerateArgs),
    /// Search pass pipelines per example and write a labels file.
    Autotune(AutotuneArgs),
    /// Task Optimize: one generation per example at temperature 0.
    Optimize(EpisodeArgs),
    /// Task Optimize followed by one round of compiler feedback.
    Feedback(EpisodeArgs),
    /// Feed compiler feedback back until the model is sure or steps run out.
    Iterate(IterateArgs),
    /// Best of n independent Task Optimize samples.
    Sample(SampleArgs),
    /// Run one of the sampling strategies that mix optimize and feedback.
    Strategy(StrategyArgs),
    /// Tables and charts over one or more finished runs.
    Report(ReportArgs),
    /// Fine-tuning records from a run plus autotuner labels.
    Dataset(DatasetArgs),
    /// Re-execute a command from the manifest of an earlier run.
    #[serde(skip)]
    Rerun(RerunArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::GenerateCorpus(_) => "generate-corpus",
            Command::Autotune(_) => "autotune",
            Command::Optimize(_) => "optimize",
            Command::Feedback(_) => "feedback",
            Command::Iterate(_) => "iterate",
            Command::Sample(_) => "sample",
            Command::Strategy(_) => "strategy",
            Command::Report(_) => "report",
            Command::Dataset(_) => "dataset",
            Command::Rerun(_) => "rerun",
        }
    }

    /// Episode-producing commands expose their shared run arguments.
    pub fn episode_args(&self) -> Option<&EpisodeArgs> {
        match self {
            Command::Optimize(a) | Command::Feedback(a) => Some(a),
            Command::Iterate(a) => Some(&a.run),
            Command::Sample(a) => Some(&a.run),
            Command::Strategy(a) => Some(&a.run),
            _ => None,
        }
    }

    pub fn out_mut(&mut self) -> Option<&mut PathBuf> {
        match self {
            Command::GenerateCorpus(a) => Some(&mut a.out),
            Command::Autotune(a) => Some(&mut a.out),
            Command::Optimize(a) | Command::Feedback(a) => Some(&mut a.out),
            Command::Iterate(a) => Some(&mut a.run.out),
            Command::Sample(a) => Some(&mut a.run.out),
            Command::Strategy(a) => Some(&mut a.run.out),
            Command::Report(a) => Some(&mut a.out),
            Command::Dataset(a) => Some(&mut a.out),
            Command::Rerun(a) => Some(&mut a.out),
        }
    }

    /// Rewrites every input path as an absolute path so a manifest stays
    /// usable from another working directory.
    pub fn absolutize(&mut self) {
        match self {
            Command::GenerateCorpus(_) | Command::Rerun(_) => {}
            Command::Autotune(a) => {
                a.corpus.corpus.absolutize();
                a.backend.absolutize();
            }
            Command::Optimize(a) | Command::Feedback(a) => a.absolutize(),
            Command::Iterate(a) => a.run.absolutize(),
            Command::Sample(a) => a.run.absolutize(),
            Command::Strategy(a) => a.run.absolutize(),
            Command::Report(a) => a.runs.iter_mut().for_each(absolutize),
            Command::Dataset(a) => {
                absolutize(&mut a.run);
                absolutize(&mut a.labels);
            }
        }
    }
}

fn absolutize(p: &mut PathBuf) {
    if let Ok(abs) = std::path::absolute(&*p) {
        *p = abs;
    }
}

/// Where the programs come from: a directory of `.mir` files, a single
/// `.mir` file, or `gen:SEED:SIZE` for the built-in generator.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorpusSpec {
    Path(PathBuf),
    Generated { seed: u64, size: usize },
}

impl CorpusSpec {
    fn absolutize(&mut self) {
        if let CorpusSpec::Path(p) = self {
            absolutize(p);
        }
    }
}

impl FromStr for CorpusSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let Some(rest) = s.strip_prefix("gen:") else {
            return Ok(CorpusSpec::Path(PathBuf::from(s)));
        };
        let (seed, size) = rest
            .split_once(':')
            .ok_or_else(|| format!("generated corpus must look like gen:SEED:SIZE, got '{s}'"))?;
        Ok(CorpusSpec::Generated {
            seed: seed.parse().map_err(|e| format!("corpus seed '{seed}': {e}"))?,
            size: size.parse().map_err(|e| format!("corpus size '{size}': {e}"))?,
        })
    }
}

impl fmt::Display for CorpusSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CorpusSpec::Path(p) => write!(f, "{}", p.display()),
            CorpusSpec::Generated { seed, size } => write!(f, "gen:{seed}:{size}"),
        }
    }
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct CorpusArgs {
    /// Directory or file of .mir programs, or gen:SEED:SIZE.
    #[arg(long)]
    pub corpus: CorpusSpec,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    /// Built-in mini-IR optimizer.
    Mini,
    /// An external optimizer binary driven through an argument template.
    External,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct BackendArgs {
    #[arg(long, value_enum, default_value_t = BackendKind::Mini)]
    pub backend: BackendKind,

    /// Optimizer binary for the external backend.
    #[arg(long, value_name = "PATH")]
    pub opt_binary: Option<PathBuf>,

    /// Argument template for the external backend, with {input}, {passes}
    /// and optionally {output} placeholders.
    #[arg(long, value_name = "TEMPLATE", default_value = "{input} -passes={passes}")]
    pub opt_args: String,

    /// Pass catalog file: first line the reference pipeline, then one pass
    /// name per line. Required for the external backend.
    #[arg(long, value_name = "FILE")]
    pub catalog: Option<PathBuf>,

    /// Per-invocation timeout for the external backend, in seconds.
    #[arg(long, default_value_t = 30)]
    pub timeout_secs: u64,
}

impl BackendArgs {
    fn absolutize(&mut self) {
        if let Some(c) = &mut self.catalog {
            absolutize(c);
        }
        if let Some(b) = &mut self.opt_binary {
            if b.components().count() > 1 {
                absolutize(b);
            }
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    /// Deterministic heuristic model, seeded by --seed.
    Stub,
    /// Answers looked up in a recorded fixture file.
    Replay,
    /// Completion endpoint over HTTP (MODEL_ENDPOINT, MODEL_API_KEY).
    Http,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct ModelArgs {
    #[arg(long, value_enum, default_value_t = ModelKind::Stub)]
    pub model: ModelKind,

    /// Seed of the stub model.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Let the stub model start answers with a confidence line.
    #[arg(long)]
    pub stub_confidence: bool,

    /// Fixture file for the replay model.
    #[arg(long, value_name = "FILE")]
    pub fixture: Option<PathBuf>,

    /// Endpoint for the HTTP model; defaults to $MODEL_ENDPOINT.
    #[arg(long)]
    pub endpoint: Option<String>,

    /// Token budget per generation.
    #[arg(long, default_value_t = 4096)]
    pub max_tokens: usize,

    /// Also record every answer into fixture.jsonl in the run directory.
    #[arg(long)]
    pub record: bool,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FormatArg {
    Short,
    Long,
    Fast,
}

impl From<FormatArg> for FeedbackFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Short => FeedbackFormat::Short,
            FormatArg::Long => FeedbackFormat::Long,
            FormatArg::Fast => FeedbackFormat::Fast,
        }
    }
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct EpisodeArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,

    #[command(flatten)]
    pub backend: BackendArgs,

    #[command(flatten)]
    pub model: ModelArgs,

    /// Feedback format used in prompts and for stop-after-counts.
    #[arg(long, value_enum, default_value_t = FormatArg::Short)]
    pub format: FormatArg,

    /// Autotuner labels file (from `autotune`) for autotuner-relative metrics.
    #[arg(long, value_name = "FILE")]
    pub labels: Option<PathBuf>,

    /// Fall back to the reference pipeline when it beats every candidate.
    #[arg(long)]
    pub oz_combine: bool,

    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,

    /// Run directory; must not exist or be empty.
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

impl EpisodeArgs {
    fn absolutize(&mut self) {
        self.corpus.corpus.absolutize();
        self.backend.absolutize();
        for p in [&mut self.model.fixture, &mut self.labels].into_iter().flatten() {
            absolutize(p);
        }
    }
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct IterateArgs {
    #[command(flatten)]
    pub run: EpisodeArgs,

    /// Maximum generations per example, the first one included.
    #[arg(long, default_value_t = 5)]
    pub steps: usize,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct SampleArgs {
    #[command(flatten)]
    pub run: EpisodeArgs,

    #[arg(long, default_value_t = 10)]
    pub samples: usize,

    #[arg(long, default_value_t = 1.0)]
    pub temperature: f64,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct StrategyArgs {
    #[command(flatten)]
    pub run: EpisodeArgs,

    /// original_sample, feedback_opt_T_fb_0, feedback_opt_0_fb_T or
    /// feedback_then_sample.
    #[arg(long)]
    pub strategy: StrategyKind,

    #[arg(long, default_value_t = 10)]
    pub samples: usize,

    #[arg(long, default_value_t = 1.0)]
    pub temperature: f64,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct GenerateArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    #[arg(long, default_value_t = 100)]
    pub size: usize,

    /// Largest number of function parameters.
    #[arg(long, default_value_t = 3)]
    pub max_params: usize,

    /// Largest number of basic blocks per function.
    #[arg(long, default_value_t = 6)]
    pub max_blocks: usize,

    /// Largest number of non-terminator instructions per block.
    #[arg(long, default_value_t = 6)]
    pub max_insts: usize,

    /// Probability that an instruction is a planted optimization opportunity.
    #[arg(long, default_value_t = 0.3)]
    pub opportunity_prob: f64,

    /// Probability that a conditional branch tests a literal.
    #[arg(long, default_value_t = 0.2)]
    pub const_branch_prob: f64,

    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct AutotuneArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,

    #[command(flatten)]
    pub backend: BackendArgs,

    #[arg(long, value_enum, default_value_t = SearchArg::Exhaustive)]
    pub search: SearchArg,

    /// Longest pipeline considered.
    #[arg(long, default_value_t = 3)]
    pub depth: usize,

    /// Evaluation budget per example.
    #[arg(long, default_value_t = 100_000)]
    pub evals: usize,

    /// Seed for the random and greedy searches.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    #[arg(long, default_value_t = 0)]
    pub jobs: usize,

    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SearchArg {
    Exhaustive,
    Random,
    Greedy,
}

impl From<SearchArg> for SearchStrategy {
    fn from(s: SearchArg) -> Self {
        match s {
            SearchArg::Exhaustive => SearchStrategy::Exhaustive,
            SearchArg::Random => SearchStrategy::Random,
            SearchArg::Greedy => SearchStrategy::Greedy,
        }
    }
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct ReportArgs {
    /// Run directory to include; repeat for several runs.
    #[arg(long = "run", required = true, value_name = "DIR")]
    pub runs: Vec<PathBuf>,

    /// Bucket edges for the count-error histogram.
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,5,10")]
    pub error_edges: Vec<f64>,

    /// Bucket edges for the BLEU histogram.
    #[arg(long, value_delimiter = ',', default_value = "0,0.25,0.5,0.75,0.9")]
    pub bleu_edges: Vec<f64>,

    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct DatasetArgs {
    /// Run directory whose episodes provide the prompts.
    #[arg(long, value_name = "DIR")]
    pub run: PathBuf,

    /// Autotuner labels file providing the completions.
    #[arg(long, value_name = "FILE")]
    pub labels: PathBuf,

    /// Feedback format of the prompts; defaults to the run's format.
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,

    /// Share of records used for training.
    #[arg(long, default_value_t = 0.8)]
    pub train: f64,

    /// Share of the held-out records used for validation.
    #[arg(long, default_value_t = 0.5)]
    pub valid_of_heldout: f64,

    /// Shuffle seed for the split.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, Default)]
pub struct RerunArgs {
    /// manifest.json of the run to repeat.
    #[arg(long, value_name = "FILE")]
    pub manifest: PathBuf,

    #[arg(long)]
    pub out: PathBuf,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corpus_spec_parses_both_forms() {
        assert_eq!(
            "gen:7:100".parse::<CorpusSpec>().unwrap(),
            CorpusSpec::Generated { seed: 7, size: 100 }
        );
        assert_eq!("progs".parse::<CorpusSpec>().unwrap(), CorpusSpec::Path("progs".into()));
        assert!("gen:7".parse::<CorpusSpec>().is_err());
        assert!("gen:x:1".parse::<CorpusSpec>().is_err());
    }

    #[test]
    fn commands_round_trip_through_json() {
        let cli = Cli::try_parse_from([
            "passfeedback",
            "sample",
            "--corpus",
            "gen:1:5",
            "--samples",
            "3",
            "--temperature",
            "0.5",
            "--out",
            "x",
        ])
        .unwrap();
        let json = serde_json::to_string(&cli.command).unwrap();
        assert!(json.starts_with("{\"command\":\"sample\""));
        let back: Command = serde_json::from_str(&json).unwrap();
        match back {
            Command::Sample(a) => {
                assert_eq!(a.samples, 3);
                assert_eq!(a.run.corpus.corpus, CorpusSpec::Generated { seed: 1, size: 5 });
                assert_eq!(a.run.out, PathBuf::new());
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
