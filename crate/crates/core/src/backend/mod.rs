//! Compiler abstraction used to evaluate model output.
//!
//! A backend validates pass lists against its catalog, compiles IR text with
//! a pass list and checks whether a piece of IR text compiles at all.
//! Compiler failures (bad input, nonzero exit, timeouts) are returned as data,
//! never as errors, because feedback construction records them.

mod external;
mod mini;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use external::ExternalBackend;
pub use mini::MiniBackend;

/// Default maximum pass-list length.
pub const DEFAULT_MAX_PASSES: usize = 16;

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("cannot read pass catalog {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("pass catalog {0} lists no passes")]
    Empty(String),
    #[error("reference pipeline uses pass '{0}' which is not in the catalog")]
    ReferenceNotInCatalog(String),
}

/// The set of valid pass names plus the backend's fixed size pipeline.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PassCatalog {
    names: Vec<String>,
    reference_pipeline: Vec<String>,
    max_len: usize,
}

impl PassCatalog {
    pub fn new(names: Vec<String>, reference_pipeline: Vec<String>, max_len: usize) -> Result<Self, CatalogError> {
        if names.is_empty() {
            return Err(CatalogError::Empty("<inline>".into()));
        }
        if let Some(bad) = reference_pipeline.iter().find(|p| !names.contains(p)) {
            return Err(CatalogError::ReferenceNotInCatalog(bad.clone()));
        }
        Ok(Self {
            names,
            reference_pipeline,
            max_len,
        })
    }

    /// Catalog of the mini compiler.
    pub fn mini() -> Self {
        Self {
            names: crate::mir::Pass::ALL.iter().map(|p| p.name().to_string()).collect(),
            reference_pipeline: crate::mir::REFERENCE_PIPELINE.iter().map(|p| p.name().to_string()).collect(),
            max_len: DEFAULT_MAX_PASSES,
        }
    }

    /// Parses the catalog file format: the first non-comment line is the
    /// reference pipeline (whitespace or comma separated), every following
    /// line one pass name. `#` starts a comment line.
    pub fn parse(text: &str, origin: &str) -> Result<Self, CatalogError> {
        let mut lines = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));
        let reference: Vec<String> = lines
            .next()
            .map(split_pass_names)
            .unwrap_or_default();
        let mut names: Vec<String> = Vec::new();
        for line in lines {
            if !names.iter().any(|n| n == line) {
                names.push(line.to_string());
            }
        }
        if names.is_empty() {
            return Err(CatalogError::Empty(origin.to_string()));
        }
        Self::new(names, reference, DEFAULT_MAX_PASSES)
    }

    pub fn from_file(path: &Path) -> Result<Self, CatalogError> {
        let text = std::fs::read_to_string(path).map_err(|source| CatalogError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn with_max_len(mut self, max_len: usize) -> Self {
        self.max_len = max_len;
        self
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn reference_pipeline(&self) -> &[String] {
        &self.reference_pipeline
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    pub fn contains(&self, name: &str) -> bool {
        self.names.iter().any(|n| n == name)
    }
}

/// Splits a pass list written with spaces and/or commas.
pub fn split_pass_names(s: &str) -> Vec<String> {
    s.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|p| !p.is_empty())
        .map(str::to_string)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Validity {
    Valid,
    Invalid { unknown_names: Vec<String>, too_long: bool },
}

impl Validity {
    pub fn is_valid(&self) -> bool {
        matches!(self, Validity::Valid)
    }
}

/// Checks pass names against the catalog and the length limit.
///
/// Unknown names come back in input order without duplicates.
pub fn validate_pass_list<S: AsRef<str>>(passes: &[S], catalog: &PassCatalog) -> Validity {
    let mut unknown: Vec<String> = Vec::new();
    for p in passes {
        let p = p.as_ref();
        if !catalog.contains(p) && !unknown.iter().any(|u| u == p) {
            unknown.push(p.to_string());
        }
    }
    let too_long = passes.len() > catalog.max_len();
    if unknown.is_empty() && !too_long {
        Validity::Valid
    } else {
        Validity::Invalid {
            unknown_names: unknown,
            too_long,
        }
    }
}

/// Human-readable reason for an invalid pass list.
pub fn describe_invalid(validity: &Validity, catalog: &PassCatalog, len: usize) -> String {
    match validity {
        Validity::Valid => "valid".into(),
        Validity::Invalid { unknown_names, too_long } => {
            let mut parts = Vec::new();
            if !unknown_names.is_empty() {
                parts.push(format!("unknown pass(es) {}", unknown_names.join(", ")));
            }
            if *too_long {
                parts.push(format!("{len} passes exceed the limit of {}", catalog.max_len()));
            }
            format!("invalid pass list: {}", parts.join("; "))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum CompileResult {
    Ok { compiled_ir: String, inst_count: usize },
    Failed { error_message: String },
}

impl CompileResult {
    pub fn is_ok(&self) -> bool {
        matches!(self, CompileResult::Ok { .. })
    }

    pub fn inst_count(&self) -> Option<usize> {
        match self {
            CompileResult::Ok { inst_count, .. } => Some(*inst_count),
            CompileResult::Failed { .. } => None,
        }
    }

    pub fn compiled_ir(&self) -> Option<&str> {
        match self {
            CompileResult::Ok { compiled_ir, .. } => Some(compiled_ir),
            CompileResult::Failed { .. } => None,
        }
    }

    pub fn error_message(&self) -> Option<&str> {
        match self {
            CompileResult::Failed { error_message } => Some(error_message),
            CompileResult::Ok { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Compilability {
    Ok,
    Error { message: String },
}

/// A compiler the harness can drive. Implementations must tolerate
/// concurrent calls.
pub trait CompilerBackend: Send + Sync {
    fn name(&self) -> &str;

    fn catalog(&self) -> &PassCatalog;

    /// Compiles `ir_text` with `passes`. Invalid pass lists fail without
    /// invoking the compiler.
    fn compile(&self, ir_text: &str, passes: &[String]) -> CompileResult;

    /// Parses and verifies only; no passes run.
    fn check_compilable(&self, ir_text: &str) -> Compilability;

    /// Instruction count of `ir_text` as the backend sees it, or the
    /// diagnostic when it does not compile.
    fn count_instructions(&self, ir_text: &str) -> Result<usize, String> {
        match self.compile(ir_text, &[]) {
            CompileResult::Ok { inst_count, .. } => Ok(inst_count),
            CompileResult::Failed { error_message } => Err(error_message),
        }
    }

    fn compile_reference(&self, ir_text: &str) -> CompileResult {
        self.compile(ir_text, self.catalog().reference_pipeline())
    }
}

/// First non-blank line of a diagnostic.
pub(crate) fn first_line(text: &str) -> String {
    text.lines()
        .map(str::trim)
        .find(|l| !l.is_empty())
        .unwrap_or("")
        .to_string()
}
