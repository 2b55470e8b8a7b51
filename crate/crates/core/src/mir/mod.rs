//! The mini SSA-like IR.
//!
//! Programs are acyclic control-flow graphs of labeled blocks holding pure
//! integer instructions over `i32` and `i1`, each block closed by a single
//! terminator. The textual form (`.mir`) looks like:
//!
//! ```text
//! func diamond(i32 %x) {
//! entry:
//!   %c = icmp slt i32 %x, 10
//!   br %c, small, big
//! small:
//!   ret i32 1
//! big:
//!   ret i32 2
//! }
//! ```

mod corpus;
mod interp;
mod parse;
mod passes;
mod verify;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use corpus::{generate_corpus, generate_program, CorpusParams};
pub use interp::{interpret, Trap};
pub use parse::{parse_module, ParseError};
pub use passes::{
    apply_pass, apply_pipeline, parse_pass_list, reference_oz, run_passes, Pass, UnknownPass,
    REFERENCE_PIPELINE,
};
pub use verify::{verify_function, VerifyError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Ty {
    I32,
    I1,
}

impl Ty {
    /// Truncates a value to the width of this type (`i1` keeps the low bit).
    pub fn norm(self, v: i32) -> i32 {
        match self {
            Ty::I32 => v,
            Ty::I1 => v & 1,
        }
    }

    /// Signed interpretation of a normalized value.
    pub fn signed(self, v: i32) -> i32 {
        match self {
            Ty::I32 => v,
            Ty::I1 => -(v & 1),
        }
    }
}

impl fmt::Display for Ty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Ty::I32 => "i32",
            Ty::I1 => "i1",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Operand {
    /// Register name without the `%` sigil.
    Reg(String),
    Const(i32),
}

impl Operand {
    pub fn reg(&self) -> Option<&str> {
        match self {
            Operand::Reg(r) => Some(r),
            Operand::Const(_) => None,
        }
    }

    pub fn as_const(&self) -> Option<i32> {
        match self {
            Operand::Const(c) => Some(*c),
            Operand::Reg(_) => None,
        }
    }
}

impl fmt::Display for Operand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Operand::Reg(r) => write!(f, "%{r}"),
            Operand::Const(c) => write!(f, "{c}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    And,
    Or,
    Xor,
}

impl BinOp {
    pub const ALL: [BinOp; 6] = [BinOp::Add, BinOp::Sub, BinOp::Mul, BinOp::And, BinOp::Or, BinOp::Xor];

    pub fn name(self) -> &'static str {
        match self {
            BinOp::Add => "add",
            BinOp::Sub => "sub",
            BinOp::Mul => "mul",
            BinOp::And => "and",
            BinOp::Or => "or",
            BinOp::Xor => "xor",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|op| op.name() == s)
    }

    pub fn is_commutative(self) -> bool {
        !matches!(self, BinOp::Sub)
    }

    /// Wrapping evaluation at type `ty`.
    pub fn eval(self, ty: Ty, a: i32, b: i32) -> i32 {
        let (a, b) = (ty.norm(a), ty.norm(b));
        let r = match self {
            BinOp::Add => a.wrapping_add(b),
            BinOp::Sub => a.wrapping_sub(b),
            BinOp::Mul => a.wrapping_mul(b),
            BinOp::And => a & b,
            BinOp::Or => a | b,
            BinOp::Xor => a ^ b,
        };
        ty.norm(r)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Cond {
    Eq,
    Ne,
    Slt,
    Sgt,
}

impl Cond {
    pub const ALL: [Cond; 4] = [Cond::Eq, Cond::Ne, Cond::Slt, Cond::Sgt];

    pub fn name(self) -> &'static str {
        match self {
            Cond::Eq => "eq",
            Cond::Ne => "ne",
            Cond::Slt => "slt",
            Cond::Sgt => "sgt",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == s)
    }

    pub fn is_commutative(self) -> bool {
        matches!(self, Cond::Eq | Cond::Ne)
    }

    /// Evaluates the comparison; the result is `0` or `1`.
    pub fn eval(self, ty: Ty, a: i32, b: i32) -> i32 {
        let (a, b) = (ty.signed(ty.norm(a)), ty.signed(ty.norm(b)));
        let r = match self {
            Cond::Eq => a == b,
            Cond::Ne => a != b,
            Cond::Slt => a < b,
            Cond::Sgt => a > b,
        };
        r as i32
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum InstKind {
    Binary { op: BinOp, ty: Ty, lhs: Operand, rhs: Operand },
    Icmp { cond: Cond, ty: Ty, lhs: Operand, rhs: Operand },
    Select { ty: Ty, cond: Operand, on_true: Operand, on_false: Operand },
}

impl InstKind {
    /// Type of the value the instruction defines.
    pub fn result_ty(&self) -> Ty {
        match self {
            InstKind::Binary { ty, .. } | InstKind::Select { ty, .. } => *ty,
            InstKind::Icmp { .. } => Ty::I1,
        }
    }

    pub fn operands(&self) -> Vec<&Operand> {
        match self {
            InstKind::Binary { lhs, rhs, .. } | InstKind::Icmp { lhs, rhs, .. } => vec![lhs, rhs],
            InstKind::Select { cond, on_true, on_false, .. } => vec![cond, on_true, on_false],
        }
    }

    pub fn operands_mut(&mut self) -> Vec<&mut Operand> {
        match self {
            InstKind::Binary { lhs, rhs, .. } | InstKind::Icmp { lhs, rhs, .. } => vec![lhs, rhs],
            InstKind::Select { cond, on_true, on_false, .. } => vec![cond, on_true, on_false],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Inst {
    pub dest: String,
    pub kind: InstKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Terminator {
    Br(String),
    CondBr { cond: Operand, on_true: String, on_false: String },
    Ret { ty: Ty, value: Operand },
}

impl Terminator {
    pub fn successors(&self) -> Vec<&str> {
        match self {
            Terminator::Br(l) => vec![l],
            Terminator::CondBr { on_true, on_false, .. } => vec![on_true, on_false],
            Terminator::Ret { .. } => vec![],
        }
    }

    pub fn operands_mut(&mut self) -> Vec<&mut Operand> {
        match self {
            Terminator::Br(_) => vec![],
            Terminator::CondBr { cond, .. } => vec![cond],
            Terminator::Ret { value, .. } => vec![value],
        }
    }

    pub fn operands(&self) -> Vec<&Operand> {
        match self {
            Terminator::Br(_) => vec![],
            Terminator::CondBr { cond, .. } => vec![cond],
            Terminator::Ret { value, .. } => vec![value],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub label: String,
    pub insts: Vec<Inst>,
    pub term: Terminator,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Function {
    pub name: String,
    pub params: Vec<(String, Ty)>,
    /// The first block is the entry block.
    pub blocks: Vec<Block>,
}

impl Function {
    /// Instructions including terminators.
    pub fn inst_count(&self) -> usize {
        self.blocks.iter().map(|b| b.insts.len() + 1).sum()
    }

    pub fn block_index(&self, label: &str) -> Option<usize> {
        self.blocks.iter().position(|b| b.label == label)
    }

    /// Rewrites every register use through `map` (terminators included).
    pub(crate) fn replace_uses(&mut self, map: &std::collections::HashMap<String, Operand>) {
        if map.is_empty() {
            return;
        }
        for block in &mut self.blocks {
            for inst in &mut block.insts {
                for op in inst.kind.operands_mut() {
                    substitute(op, map);
                }
            }
            for op in block.term.operands_mut() {
                substitute(op, map);
            }
        }
    }
}

fn substitute(op: &mut Operand, map: &std::collections::HashMap<String, Operand>) {
    // Chains (a -> b -> c) are resolved by following the map.
    let mut guard = 0;
    while let Operand::Reg(r) = op {
        match map.get(r.as_str()) {
            Some(next) if guard < 64 => {
                *op = next.clone();
                guard += 1;
            }
            _ => break,
        }
    }
}

/// A parsed, verified module together with the text it came from.
///
/// After a pass, `source_text` holds the rendering of the new module.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IrModule {
    pub functions: Vec<Function>,
    pub source_text: String,
}

impl IrModule {
    pub(crate) fn from_functions(functions: Vec<Function>) -> Self {
        let source_text = render_functions(&functions);
        Self {
            functions,
            source_text,
        }
    }

    pub fn inst_count(&self) -> usize {
        self.functions.iter().map(Function::inst_count).sum()
    }

    /// Canonical text of the module.
    pub fn render(&self) -> String {
        render_functions(&self.functions)
    }
}

impl fmt::Display for Inst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "%{} = ", self.dest)?;
        match &self.kind {
            InstKind::Binary { op, ty, lhs, rhs } => write!(f, "{} {ty} {lhs}, {rhs}", op.name()),
            InstKind::Icmp { cond, ty, lhs, rhs } => write!(f, "icmp {} {ty} {lhs}, {rhs}", cond.name()),
            InstKind::Select { ty, cond, on_true, on_false } => {
                write!(f, "select {ty} {cond}, {on_true}, {on_false}")
            }
        }
    }
}

impl fmt::Display for Terminator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Terminator::Br(l) => write!(f, "br {l}"),
            Terminator::CondBr { cond, on_true, on_false } => write!(f, "br {cond}, {on_true}, {on_false}"),
            Terminator::Ret { ty, value } => write!(f, "ret {ty} {value}"),
        }
    }
}

impl fmt::Display for Function {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let params: Vec<String> = self.params.iter().map(|(n, t)| format!("{t} %{n}")).collect();
        writeln!(f, "func {}({}) {{", self.name, params.join(", "))?;
        for block in &self.blocks {
            writeln!(f, "{}:", block.label)?;
            for inst in &block.insts {
                writeln!(f, "  {inst}")?;
            }
            writeln!(f, "  {}", block.term)?;
        }
        writeln!(f, "}}")
    }
}

fn render_functions(functions: &[Function]) -> String {
    functions
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("\n")
}
