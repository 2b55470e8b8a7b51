use super::{describe_invalid, validate_pass_list, Compilability, CompileResult, CompilerBackend, PassCatalog};
use crate::mir::{apply_pipeline, parse_module};

/// Adapter over the in-process mini compiler.
#[derive(Debug, Clone)]
pub struct MiniBackend {
    catalog: PassCatalog,
}

impl MiniBackend {
    pub fn new() -> Self {
        Self {
            catalog: PassCatalog::mini(),
        }
    }

    pub fn with_catalog(catalog: PassCatalog) -> Self {
        Self { catalog }
    }
}

impl Default for MiniBackend {
    fn default() -> Self {
        Self::new()
    }
}

impl CompilerBackend for MiniBackend {
    fn name(&self) -> &str {
        "mini"
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
        let module = match parse_module(ir_text) {
            Ok(m) => m,
            Err(e) => {
                return CompileResult::Failed {
                    error_message: super::first_line(&e.to_string()),
                }
            }
        };
        match apply_pipeline(&module, passes) {
            Ok(out) => CompileResult::Ok {
                inst_count: out.inst_count(),
                compiled_ir: out.source_text,
            },
            Err(e) => CompileResult::Failed {
                error_message: e.to_string(),
            },
        }
    }

    fn check_compilable(&self, ir_text: &str) -> Compilability {
        match parse_module(ir_text) {
            Ok(_) => Compilability::Ok,
            Err(e) => Compilability::Error {
                message: super::first_line(&e.to_string()),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir_text::count_instructions_text;

    const WITNESS: &str = "func fold() {\nentry:\n  %a = add i32 2, 3\n  %b = mul i32 %a, 0\n  ret i32 %b\n}";

    fn passes(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn identity_compile_preserves_structure() {
        let be = MiniBackend::new();
        let r = be.compile(WITNESS, &[]);
        let CompileResult::Ok { compiled_ir, inst_count } = r else { panic!("{r:?}") };
        assert_eq!(inst_count, 3);
        assert_eq!(parse_module(&compiled_ir).unwrap().functions, parse_module(WITNESS).unwrap().functions);
        assert_eq!(count_instructions_text(&compiled_ir), inst_count);
    }

    #[test]
    fn compile_with_fold_and_dce() {
        let r = MiniBackend::new().compile(WITNESS, &passes(&["constfold", "dce"]));
        assert_eq!(r.inst_count(), Some(1));
    }

    #[test]
    fn broken_text_reports_parser_error() {
        let r = MiniBackend::new().compile("func f( {", &passes(&["dce"]));
        let msg = r.error_message().unwrap();
        assert!(msg.starts_with("syntax error at line 1"), "{msg}");
    }

    #[test]
    fn invalid_pass_is_refused() {
        let r = MiniBackend::new().compile(WITNESS, &passes(&["licm"]));
        assert!(r.error_message().unwrap().contains("licm"));
    }

    #[test]
    fn compilability() {
        let be = MiniBackend::new();
        assert_eq!(be.check_compilable(WITNESS), Compilability::Ok);
        assert_eq!(
            be.check_compilable(""),
            Compilability::Error {
                message: "empty module".into()
            }
        );
        let Compilability::Error { message } = be.check_compilable("func f() {\nentry:\n  ret i32 %x\n}") else {
            panic!()
        };
        assert!(message.contains("%x"));
    }

    #[test]
    fn reference_compile() {
        assert_eq!(MiniBackend::new().compile_reference(WITNESS).inst_count(), Some(1));
    }
}
