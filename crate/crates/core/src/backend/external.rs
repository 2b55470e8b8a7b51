use std::io::Read;
use std::path::PathBuf;
use std::process::{Command, Stdio};
use std::thread;
use std::time::Duration;

use wait_timeout::ChildExt;

use super::{describe_invalid, first_line, validate_pass_list, Compilability, CompileResult, CompilerBackend, PassCatalog};
use crate::ir_text::count_instructions_text;

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

/// Drives an external optimizer binary (e.g. LLVM `opt`).
///
/// Each argument of `arg_template` may contain the placeholders `{input}`
/// (path of a temp file holding the IR), `{passes}` (pass names joined by
/// commas) and `{output}` (path the tool should write to). Without an
/// `{output}` placeholder the optimized IR is read from stdout. Every call
/// runs in its own temp directory, removed on completion.
#[derive(Debug, Clone)]
pub struct ExternalBackend {
    binary: PathBuf,
    arg_template: Vec<String>,
    catalog: PassCatalog,
    timeout: Duration,
}

enum Outcome {
    Finished { success: bool, code: Option<i32>, stdout: String, stderr: String },
    TimedOut,
}

impl ExternalBackend {
    pub fn new(binary: impl Into<PathBuf>, arg_template: Vec<String>, catalog: PassCatalog) -> Self {
        Self {
            binary: binary.into(),
            arg_template,
            catalog,
            timeout: DEFAULT_TIMEOUT,
        }
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    fn run(&self, ir_text: &str, passes: &[String]) -> Result<(Outcome, Option<PathBuf>, tempfile::TempDir), String> {
        let dir = tempfile::tempdir().map_err(|e| format!("cannot create temp dir: {e}"))?;
        let input = dir.path().join("input.ll");
        let output = dir.path().join("output.ll");
        std::fs::write(&input, ir_text).map_err(|e| format!("cannot write temp input: {e}"))?;

        let joined = passes.join(",");
        let mut uses_output = false;
        let args: Vec<String> = self
            .arg_template
            .iter()
            .map(|a| {
                uses_output |= a.contains("{output}");
                a.replace("{input}", &input.to_string_lossy())
                    .replace("{passes}", &joined)
                    .replace("{output}", &output.to_string_lossy())
            })
            .collect();

        let mut child = Command::new(&self.binary)
            .args(&args)
            .stdin(Stdio::null())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| format!("cannot run {}: {e}", self.binary.display()))?;

        let mut out_pipe = child.stdout.take().expect("piped stdout");
        let mut err_pipe = child.stderr.take().expect("piped stderr");
        let out_reader = thread::spawn(move || {
            let mut s = String::new();
            let _ = out_pipe.read_to_string(&mut s);
            s
        });
        let err_reader = thread::spawn(move || {
            let mut s = String::new();
            let _ = err_pipe.read_to_string(&mut s);
            s
        });

        let status = child.wait_timeout(self.timeout).map_err(|e| format!("wait failed: {e}"))?;
        let outcome = match status {
            Some(status) => Outcome::Finished {
                success: status.success(),
                code: status.code(),
                stdout: out_reader.join().unwrap_or_default(),
                stderr: err_reader.join().unwrap_or_default(),
            },
            None => {
                let _ = child.kill();
                let _ = child.wait();
                Outcome::TimedOut
            }
        };
        Ok((outcome, uses_output.then_some(output), dir))
    }

    fn run_to_result(&self, ir_text: &str, passes: &[String]) -> CompileResult {
        let failed = |error_message: String| CompileResult::Failed { error_message };
        let (outcome, output, _dir) = match self.run(ir_text, passes) {
            Ok(r) => r,
            Err(e) => return failed(e),
        };
        match outcome {
            Outcome::TimedOut => failed("timeout".into()),
            Outcome::Finished { success: false, code, stdout, stderr } => {
                let mut msg = first_line(&stderr);
                if msg.is_empty() {
                    msg = first_line(&stdout);
                }
                if msg.is_empty() {
                    msg = match code {
                        Some(c) => format!("exit status {c}"),
                        None => "terminated by signal".into(),
                    };
                }
                failed(msg)
            }
            Outcome::Finished { success: true, stdout, .. } => {
                let compiled_ir = match output {
                    Some(path) => match std::fs::read_to_string(&path) {
                        Ok(s) => s,
                        Err(e) => return failed(format!("cannot read tool output: {e}")),
                    },
                    None => stdout,
                };
                CompileResult::Ok {
                    inst_count: count_instructions_text(&compiled_ir),
                    compiled_ir,
                }
            }
        }
    }
}

impl CompilerBackend for ExternalBackend {
    fn name(&self) -> &str {
        "external"
    }

    fn catalog(&self) -> &PassCatalog {
        &self.catalog
    }

    fn compile(&self, ir_text: &str, passes: &[String]) -> CompileResult {
        let validity = validate_pass_list(passes, &self.catalog);
        if !validity.is_valid() {
            return CompileResult::Failed {
                error_message: describe_invalid(&validity, &self.catalog, passes.len()),
            };
        }
        self.run_to_result(ir_text, passes)
    }

    fn check_compilable(&self, ir_text: &str) -> Compilability {
        match self.run_to_result(ir_text, &[]) {
            CompileResult::Ok { .. } => Compilability::Ok,
            CompileResult::Failed { error_message } => Compilability::Error { message: error_message },
        }
    }
}
