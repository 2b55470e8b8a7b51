use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use passfeedback::autotune::AutotuneLabel;
use passfeedback::backend::{CompilerBackend, ExternalBackend, MiniBackend, PassCatalog};
use passfeedback::metrics::{read_jsonl, write_csv, write_jsonl};
use passfeedback::mir::{generate_corpus, CorpusParams};
use passfeedback::model::{HttpConfig, HttpModel, Model, ReplayModel, StubModel};
use passfeedback::orchestrator::Example;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::args::{BackendArgs, BackendKind, Command, CorpusSpec, ModelArgs, ModelKind};

/// Compiler or model failure while running (exit status 2). Anything else
/// is treated as a configuration problem (exit status 1).
#[derive(Debug)]
pub struct RuntimeFailure(pub String);

impl fmt::Display for RuntimeFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for RuntimeFailure {}

impl RuntimeFailure {
    /// Keeps the whole cause chain of `err` in the message.
    pub fn from_error(err: &dyn std::error::Error) -> Self {
        let mut msg = err.to_string();
        let mut cur = err.source();
        while let Some(e) = cur {
            msg.push_str(": ");
            msg.push_str(&e.to_string());
            cur = e.source();
        }
        Self(msg)
    }
}

pub fn exit_code(err: &anyhow::Error) -> u8 {
    if err.chain().any(|e| e.is::<RuntimeFailure>()) {
        2
    } else {
        1
    }
}

pub fn build_backend(args: &BackendArgs) -> Result<Box<dyn CompilerBackend>> {
    let catalog = args
        .catalog
        .as_deref()
        .map(PassCatalog::from_file)
        .transpose()
        .context("invalid pass catalog")?;
    match args.backend {
        BackendKind::Mini => Ok(Box::new(match catalog {
            Some(c) => MiniBackend::with_catalog(c),
            None => MiniBackend::new(),
        })),
        BackendKind::External => {
            let Some(binary) = &args.opt_binary else {
                bail!("the external backend needs --opt-binary");
            };
            let Some(catalog) = catalog else {
                bail!("the external backend needs --catalog");
            };
            let template = args.opt_args.split_whitespace().map(str::to_string).collect();
            Ok(Box::new(
                ExternalBackend::new(binary, template, catalog).with_timeout(Duration::from_secs(args.timeout_secs)),
            ))
        }
    }
}

pub fn build_model(args: &ModelArgs) -> Result<Box<dyn Model>> {
    match args.model {
        ModelKind::Stub => Ok(Box::new(StubModel::new(args.seed).with_confidence(args.stub_confidence))),
        ModelKind::Replay => {
            let Some(path) = &args.fixture else {
                bail!("the replay model needs --fixture");
            };
            Ok(Box::new(ReplayModel::from_file(path).context("cannot load replay fixture")?))
        }
        ModelKind::Http => {
            let env = |k: &str| std::env::var(k).ok().filter(|v| !v.is_empty());
            let endpoint = args
                .endpoint
                .clone()
                .or_else(|| env("MODEL_ENDPOINT"))
                .context("the http model needs --endpoint or MODEL_ENDPOINT")?;
            let mut config = HttpConfig::new(endpoint);
            config.api_key = env("MODEL_API_KEY");
            Ok(Box::new(HttpModel::new(config)))
        }
    }
}

pub fn load_corpus(spec: &CorpusSpec) -> Result<Vec<Example>> {
    let example = |id: String, ir: String| Example {
        id,
        ir,
        autotuner_count: None,
    };
    match spec {
        CorpusSpec::Generated { seed, size } => Ok(generate_corpus(*seed, *size, &CorpusParams::default())
            .into_iter()
            .map(|(id, ir)| example(id, ir))
            .collect()),
        CorpusSpec::Path(path) if path.is_dir() => {
            let mut files: Vec<PathBuf> = fs::read_dir(path)
                .with_context(|| format!("cannot list corpus directory {}", path.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "mir"))
                .collect();
            files.sort();
            if files.is_empty() {
                bail!("corpus directory {} has no .mir files", path.display());
            }
            files.iter().map(|f| read_program(f).map(|(id, ir)| example(id, ir))).collect()
        }
        CorpusSpec::Path(path) if !path.exists() => bail!("corpus path {} does not exist", path.display()),
        CorpusSpec::Path(path) => Ok(vec![read_program(path).map(|(id, ir)| example(id, ir))?]),
    }
}

fn read_program(path: &Path) -> Result<(String, String)> {
    let ir = fs::read_to_string(path).with_context(|| format!("cannot read program {}", path.display()))?;
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string());
    Ok((id, ir))
}

pub fn load_labels(path: &Path) -> Result<Vec<AutotuneLabel>> {
    read_records(path, "autotune_label")
}

/// Attaches autotuner counts to the examples that have a label.
pub fn attach_labels(examples: &mut [Example], labels: &[AutotuneLabel]) {
    let by_id: HashMap<&str, u64> = labels.iter().map(|l| (l.example_id.as_str(), l.best_count)).collect();
    let mut missing = 0;
    for e in examples.iter_mut() {
        e.autotuner_count = by_id.get(e.id.as_str()).copied();
        missing += usize::from(e.autotuner_count.is_none());
    }
    if missing > 0 {
        log::warn!("{missing} example(s) have no autotuner label");
    }
}

pub fn read_records<T: DeserializeOwned>(path: &Path, kind: &str) -> Result<Vec<T>> {
    let file = fs::File::open(path).with_context(|| format!("missing artifact {}", path.display()))?;
    read_jsonl(BufReader::new(file), kind).with_context(|| format!("cannot read {}", path.display()))
}

/// Output directory that accepts each file name once.
pub struct RunDir {
    root: PathBuf,
}

impl RunDir {
    /// Creates `root`, which must be absent or empty.
    pub fn create(root: &Path) -> Result<Self> {
        if root.as_os_str().is_empty() {
            bail!("no output directory given (--out)");
        }
        if root.exists() {
            let mut entries = fs::read_dir(root)
                .with_context(|| format!("output path {} is not a readable directory", root.display()))?;
            if entries.next().is_some() {
                bail!("output directory {} is not empty; runs never overwrite earlier results", root.display());
            }
        }
        fs::create_dir_all(root).with_context(|| format!("cannot create output directory {}", root.display()))?;
        Ok(Self { root: root.to_path_buf() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    fn create_file(&self, name: &str) -> Result<BufWriter<fs::File>> {
        let path = self.path(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).with_context(|| format!("cannot create {}", parent.display()))?;
        }
        let file = fs::OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&path)
            .with_context(|| format!("cannot create {}", path.display()))?;
        Ok(BufWriter::new(file))
    }

    pub fn jsonl<T: Serialize>(&self, name: &str, kind: &str, records: &[T]) -> Result<()> {
        write_jsonl(self.create_file(name)?, kind, records).with_context(|| format!("writing {name}"))
    }

    pub fn csv<T: Serialize>(&self, name: &str, kind: &str, records: &[T]) -> Result<()> {
        write_csv(self.create_file(name)?, kind, records).with_context(|| format!("writing {name}"))
    }

    pub fn text(&self, name: &str, text: &str) -> Result<()> {
        let mut f = self.create_file(name)?;
        f.write_all(text.as_bytes())?;
        f.flush().with_context(|| format!("writing {name}"))
    }

    pub fn writer(&self, name: &str) -> Result<BufWriter<fs::File>> {
        self.create_file(name)
    }

    pub fn manifest(&self, command: &Command) -> Result<()> {
        let m = Manifest {
            schema_version: passfeedback::SCHEMA_VERSION,
            kind: "manifest".into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            command: command.clone(),
        };
        self.text("manifest.json", &(serde_json::to_string_pretty(&m)? + "\n"))
    }
}

/// Everything needed to repeat a run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub kind: String,
    pub tool_version: String,
    pub command: Command,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("missing artifact {}", path.display()))?;
        let m: Manifest = serde_json::from_str(&text).with_context(|| format!("malformed manifest {}", path.display()))?;
        if m.kind != "manifest" || m.schema_version != passfeedback::SCHEMA_VERSION {
            bail!(
                "{} is not a schema {} manifest (kind '{}', version {})",
                path.display(),
                passfeedback::SCHEMA_VERSION,
                m.kind,
                m.schema_version
            );
        }
        Ok(m)
    }
}
