use thiserror::Error;

use super::verify::{verify_functions, VerifyError};
use super::{BinOp, Block, Cond, Function, Inst, InstKind, IrModule, Operand, Terminator, Ty};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("empty module")]
    Empty,
    #[error("syntax error at line {line}, col {col}: {message}")]
    Syntax { line: usize, col: usize, message: String },
    #[error(transparent)]
    Verify(#[from] VerifyError),
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Word(String),
    Reg(String),
    Punct(char),
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Word(w) => format!("'{w}'"),
            Tok::Reg(r) => format!("'%{r}'"),
            Tok::Punct(c) => format!("'{c}'"),
        }
    }
}

fn is_punct(c: char) -> bool {
    matches!(c, ',' | '(' | ')' | '{' | '}' | '=' | ':')
}

/// Splits one line into tokens with 1-based columns.
fn lex(line: &str) -> Vec<(usize, Tok)> {
    let chars: Vec<char> = line.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let col = i + 1;
        if c.is_whitespace() {
            i += 1;
        } else if is_punct(c) {
            out.push((col, Tok::Punct(c)));
            i += 1;
        } else {
            let reg = c == '%';
            if reg {
                i += 1;
            }
            let start = i;
            while i < chars.len() && !chars[i].is_whitespace() && !is_punct(chars[i]) && chars[i] != '%' {
                i += 1;
            }
            let text: String = chars[start..i].iter().collect();
            out.push((col, if reg { Tok::Reg(text) } else { Tok::Word(text) }));
        }
    }
    out
}

fn is_ident(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.')
}

struct Line<'a> {
    number: usize,
    toks: &'a [(usize, Tok)],
    pos: usize,
    end_col: usize,
}

impl<'a> Line<'a> {
    fn err<T>(&self, col: usize, message: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError::Syntax {
            line: self.number,
            col,
            message: message.into(),
        })
    }

    fn col(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end_col, |t| t.0)
    }

    fn next(&mut self, what: &str) -> Result<(usize, &'a Tok), ParseError> {
        match self.toks.get(self.pos) {
            Some((col, tok)) => {
                self.pos += 1;
                Ok((*col, tok))
            }
            None => self.err(self.end_col, format!("expected {what}, found end of line")),
        }
    }

    fn expect_punct(&mut self, p: char) -> Result<(), ParseError> {
        let (col, tok) = self.next(&format!("'{p}'"))?;
        if *tok == Tok::Punct(p) {
            Ok(())
        } else {
            self.err(col, format!("expected '{p}', found {}", tok.describe()))
        }
    }

    fn word(&mut self, what: &str) -> Result<(usize, &'a str), ParseError> {
        let (col, tok) = self.next(what)?;
        match tok {
            Tok::Word(w) => Ok((col, w)),
            other => self.err(col, format!("expected {what}, found {}", other.describe())),
        }
    }

    fn ident(&mut self, what: &str) -> Result<&'a str, ParseError> {
        let (col, w) = self.word(what)?;
        if is_ident(w) {
            Ok(w)
        } else {
            self.err(col, format!("invalid {what} '{w}'"))
        }
    }

    fn reg(&mut self) -> Result<&'a str, ParseError> {
        let (col, tok) = self.next("register")?;
        match tok {
            Tok::Reg(r) if is_ident(r) => Ok(r),
            Tok::Reg(r) => self.err(col, format!("invalid register name '%{r}'")),
            other => self.err(col, format!("expected register, found {}", other.describe())),
        }
    }

    fn ty(&mut self) -> Result<Ty, ParseError> {
        let (col, w) = self.word("type")?;
        match w {
            "i32" => Ok(Ty::I32),
            "i1" => Ok(Ty::I1),
            other => self.err(col, format!("unknown type '{other}'")),
        }
    }

    fn operand(&mut self) -> Result<Operand, ParseError> {
        let (col, tok) = self.next("operand")?;
        match tok {
            Tok::Reg(r) if is_ident(r) => Ok(Operand::Reg(r.clone())),
            Tok::Word(w) => match w.as_str() {
                "true" => Ok(Operand::Const(1)),
                "false" => Ok(Operand::Const(0)),
                _ => match w.parse::<i64>() {
                    Ok(v) if (i32::MIN as i64..=u32::MAX as i64).contains(&v) => Ok(Operand::Const(v as i32)),
                    Ok(_) => self.err(col, format!("integer literal {w} out of range")),
                    Err(_) => self.err(col, format!("expected operand, found '{w}'")),
                },
            },
            other => self.err(col, format!("expected operand, found {}", other.describe())),
        }
    }

    fn finish(&self) -> Result<(), ParseError> {
        match self.toks.get(self.pos) {
            Some((col, tok)) => self.err(*col, format!("unexpected {}", tok.describe())),
            None => Ok(()),
        }
    }
}

enum Stmt {
    Inst(Inst),
    Term(Terminator),
}

fn parse_stmt(line: &mut Line) -> Result<Stmt, ParseError> {
    let first_col = line.col();
    match line.toks.first() {
        Some((_, Tok::Reg(_))) => {
            let dest = line.reg()?.to_string();
            line.expect_punct('=')?;
            let (col, op) = line.word("opcode")?;
            let kind = if let Some(op) = BinOp::from_name(op) {
                let ty = line.ty()?;
                let lhs = line.operand()?;
                line.expect_punct(',')?;
                let rhs = line.operand()?;
                InstKind::Binary { op, ty, lhs, rhs }
            } else if op == "icmp" {
                let (ccol, c) = line.word("condition")?;
                let Some(cond) = Cond::from_name(c) else {
                    return line.err(ccol, format!("unknown icmp condition '{c}'"));
                };
                let ty = line.ty()?;
                let lhs = line.operand()?;
                line.expect_punct(',')?;
                let rhs = line.operand()?;
                InstKind::Icmp { cond, ty, lhs, rhs }
            } else if op == "select" {
                let ty = line.ty()?;
                let cond = line.operand()?;
                line.expect_punct(',')?;
                let on_true = line.operand()?;
                line.expect_punct(',')?;
                let on_false = line.operand()?;
                InstKind::Select { ty, cond, on_true, on_false }
            } else {
                return line.err(col, format!("unknown opcode '{op}'"));
            };
            line.finish()?;
            Ok(Stmt::Inst(Inst { dest, kind }))
        }
        Some((_, Tok::Word(w))) if w == "br" => {
            line.pos += 1;
            let term = if line.toks.len() == 2 {
                Terminator::Br(line.ident("block label")?.to_string())
            } else {
                let cond = line.operand()?;
                line.expect_punct(',')?;
                let on_true = line.ident("block label")?.to_string();
                line.expect_punct(',')?;
                let on_false = line.ident("block label")?.to_string();
                Terminator::CondBr { cond, on_true, on_false }
            };
            line.finish()?;
            Ok(Stmt::Term(term))
        }
        Some((_, Tok::Word(w))) if w == "ret" => {
            line.pos += 1;
            let ty = line.ty()?;
            let value = line.operand()?;
            line.finish()?;
            Ok(Stmt::Term(Terminator::Ret { ty, value }))
        }
        Some((_, tok)) => line.err(first_col, format!("expected instruction, found {}", tok.describe())),
        None => line.err(first_col, "expected instruction"),
    }
}

fn parse_header(line: &mut Line) -> Result<Function, ParseError> {
    let (col, kw) = line.word("'func'")?;
    if kw != "func" {
        return line.err(col, format!("expected 'func', found '{kw}'"));
    }
    let name = line.ident("function name")?.to_string();
    line.expect_punct('(')?;
    let mut params = Vec::new();
    if line.toks.get(line.pos).map(|t| &t.1) == Some(&Tok::Punct(')')) {
        line.pos += 1;
    } else {
        loop {
            let ty = line.ty()?;
            let reg = line.reg()?.to_string();
            params.push((reg, ty));
            let (col, tok) = line.next("',' or ')'")?;
            match tok {
                Tok::Punct(',') => continue,
                Tok::Punct(')') => break,
                other => return line.err(col, format!("expected ',' or ')', found {}", other.describe())),
            }
        }
    }
    line.expect_punct('{')?;
    line.finish()?;
    Ok(Function {
        name,
        params,
        blocks: Vec::new(),
    })
}

struct OpenBlock {
    label: String,
    insts: Vec<Inst>,
    term: Option<Terminator>,
}

impl OpenBlock {
    fn close(self) -> Result<Block, ParseError> {
        match self.term {
            Some(term) => Ok(Block {
                label: self.label,
                insts: self.insts,
                term,
            }),
            None => Err(VerifyError::MissingTerminator(self.label).into()),
        }
    }
}

/// Parses and verifies mini-IR text.
///
/// Lines starting with `;` or `#` are comments, as is anything after a `;`.
pub fn parse_module(text: &str) -> Result<IrModule, ParseError> {
    let mut functions = Vec::new();
    let mut current: Option<(Function, Option<OpenBlock>)> = None;
    let mut last_line = 0;

    for (idx, raw) in text.lines().enumerate() {
        let number = idx + 1;
        last_line = number;
        let trimmed = raw.trim_start();
        if trimmed.starts_with('#') {
            continue;
        }
        let code = raw.split(';').next().unwrap_or("");
        let toks = lex(code);
        if toks.is_empty() {
            continue;
        }
        let mut line = Line {
            number,
            toks: &toks,
            pos: 0,
            end_col: code.trim_end().chars().count() + 1,
        };

        let Some((func, open)) = current.as_mut() else {
            current = Some((parse_header(&mut line)?, None));
            continue;
        };

        if toks.len() == 1 && toks[0].1 == Tok::Punct('}') {
            let (mut func, open) = current.take().expect("inside a function");
            if let Some(block) = open {
                func.blocks.push(block.close()?);
            }
            functions.push(func);
            continue;
        }

        if toks.len() == 2 && toks[1].1 == Tok::Punct(':') {
            let label = line.ident("block label")?.to_string();
            if let Some(block) = open.take() {
                func.blocks.push(block.close()?);
            }
            *open = Some(OpenBlock {
                label,
                insts: Vec::new(),
                term: None,
            });
            continue;
        }

        let col = line.col();
        let Some(block) = open.as_mut() else {
            return line.err(col, "instruction outside of a block");
        };
        if block.term.is_some() {
            return line.err(col, format!("instruction after terminator in block {}", block.label));
        }
        match parse_stmt(&mut line)? {
            Stmt::Inst(inst) => block.insts.push(inst),
            Stmt::Term(term) => block.term = Some(term),
        }
    }

    if current.is_some() {
        return Err(ParseError::Syntax {
            line: last_line.max(1),
            col: 1,
            message: "unexpected end of input, missing '}'".into(),
        });
    }
    if functions.is_empty() {
        return Err(ParseError::Empty);
    }
    verify_functions(&functions)?;
    Ok(IrModule {
        functions,
        source_text: text.to_string(),
    })
}
