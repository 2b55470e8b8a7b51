use std::collections::{HashMap, HashSet};

use thiserror::Error;

use super::{Function, Operand, Ty};

/// Structural violations found after a module has been read.
///
/// Messages are single lines; they are what feedback reports for
/// uncompilable generated IR.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum VerifyError {
    #[error("register %{0} assigned twice")]
    DoubleAssign(String),
    #[error("use of undefined register %{0}")]
    UndefinedRegister(String),
    #[error("register %{reg} used in block {block} before its definition")]
    UseBeforeDef { reg: String, block: String },
    #[error("control flow cycle through block {0}")]
    Cycle(String),
    #[error("block {0} has no terminator")]
    MissingTerminator(String),
    #[error("branch to unknown block {0}")]
    UnknownBlock(String),
    #[error("block {0} defined twice")]
    DuplicateBlock(String),
    #[error("block {0} is unreachable")]
    Unreachable(String),
    #[error("register %{reg} has type {found}, expected {expected}")]
    TypeMismatch { reg: String, expected: Ty, found: Ty },
    #[error("function {0} has no blocks")]
    EmptyFunction(String),
    #[error("function {0} defined twice")]
    DuplicateFunction(String),
}

/// Where a register is defined: a parameter, or (block, instruction index).
#[derive(Clone, Copy)]
enum DefSite {
    Param,
    Inst(usize, usize),
}

pub(crate) struct Cfg {
    pub preds: Vec<Vec<usize>>,
    pub succs: Vec<Vec<usize>>,
}

impl Cfg {
    /// Builds the CFG; assumes every branch target exists.
    pub(crate) fn new(func: &Function) -> Self {
        let index: HashMap<&str, usize> = func
            .blocks
            .iter()
            .enumerate()
            .map(|(i, b)| (b.label.as_str(), i))
            .collect();
        let n = func.blocks.len();
        let mut preds = vec![Vec::new(); n];
        let mut succs = vec![Vec::new(); n];
        for (i, block) in func.blocks.iter().enumerate() {
            for target in block.term.successors() {
                let j = index[target];
                if !succs[i].contains(&j) {
                    succs[i].push(j);
                    preds[j].push(i);
                }
            }
        }
        Self { preds, succs }
    }

    pub(crate) fn reachable(&self) -> Vec<bool> {
        let mut seen = vec![false; self.succs.len()];
        if seen.is_empty() {
            return seen;
        }
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(b) = stack.pop() {
            for &s in &self.succs[b] {
                if !seen[s] {
                    seen[s] = true;
                    stack.push(s);
                }
            }
        }
        seen
    }
}

/// Reverse postorder from the entry, or the block closing a cycle.
pub(crate) fn topo_order(cfg: &Cfg) -> Result<Vec<usize>, usize> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        White,
        Grey,
        Black,
    }
    let n = cfg.succs.len();
    let mut mark = vec![Mark::White; n];
    let mut post = Vec::with_capacity(n);
    // iterative DFS: (node, next successor index)
    let mut stack = vec![(0usize, 0usize)];
    mark[0] = Mark::Grey;
    while let Some(top) = stack.last_mut() {
        let (node, next) = *top;
        if let Some(&s) = cfg.succs[node].get(next) {
            top.1 += 1;
            match mark[s] {
                Mark::White => {
                    mark[s] = Mark::Grey;
                    stack.push((s, 0));
                }
                Mark::Grey => return Err(s),
                Mark::Black => {}
            }
        } else {
            mark[node] = Mark::Black;
            post.push(node);
            stack.pop();
        }
    }
    post.reverse();
    Ok(post)
}

/// Dominator sets (`dom[b][a]` is true when `a` dominates `b`) for an acyclic
/// CFG whose blocks are all reachable.
pub(crate) fn dominators(cfg: &Cfg, order: &[usize]) -> Vec<Vec<bool>> {
    let n = cfg.succs.len();
    let mut dom = vec![vec![false; n]; n];
    for &b in order {
        let mut set = if b == 0 || cfg.preds[b].is_empty() {
            vec![false; n]
        } else {
            let mut acc = vec![true; n];
            for &p in &cfg.preds[b] {
                for (a, d) in acc.iter_mut().zip(&dom[p]) {
                    *a &= *d;
                }
            }
            acc
        };
        set[b] = true;
        dom[b] = set;
    }
    dom
}

/// Checks every structural invariant of a single function.
pub fn verify_function(func: &Function) -> Result<(), VerifyError> {
    if func.blocks.is_empty() {
        return Err(VerifyError::EmptyFunction(func.name.clone()));
    }

    let mut labels = HashSet::new();
    for block in &func.blocks {
        if !labels.insert(block.label.as_str()) {
            return Err(VerifyError::DuplicateBlock(block.label.clone()));
        }
    }
    for block in &func.blocks {
        for target in block.term.successors() {
            if !labels.contains(target) {
                return Err(VerifyError::UnknownBlock(target.to_string()));
            }
        }
    }

    let mut defs: HashMap<&str, (DefSite, Ty)> = HashMap::new();
    for (name, ty) in &func.params {
        if defs.insert(name, (DefSite::Param, *ty)).is_some() {
            return Err(VerifyError::DoubleAssign(name.clone()));
        }
    }
    for (bi, block) in func.blocks.iter().enumerate() {
        for (ii, inst) in block.insts.iter().enumerate() {
            if defs
                .insert(&inst.dest, (DefSite::Inst(bi, ii), inst.kind.result_ty()))
                .is_some()
            {
                return Err(VerifyError::DoubleAssign(inst.dest.clone()));
            }
        }
    }

    let uses = func.blocks.iter().flat_map(|b| {
        b.insts
            .iter()
            .flat_map(|i| i.kind.operands())
            .chain(b.term.operands())
    });
    for op in uses {
        if let Operand::Reg(r) = op {
            if !defs.contains_key(r.as_str()) {
                return Err(VerifyError::UndefinedRegister(r.clone()));
            }
        }
    }

    let cfg = Cfg::new(func);
    let order = topo_order(&cfg).map_err(|b| VerifyError::Cycle(func.blocks[b].label.clone()))?;
    let reachable = cfg.reachable();
    if let Some(b) = reachable.iter().position(|r| !r) {
        return Err(VerifyError::Unreachable(func.blocks[b].label.clone()));
    }
    let dom = dominators(&cfg, &order);

    let check = |op: &Operand, block: usize, pos: usize, expected: Ty| -> Result<(), VerifyError> {
        let Operand::Reg(r) = op else { return Ok(()) };
        let (site, ty) = defs[r.as_str()];
        let available = match site {
            DefSite::Param => true,
            DefSite::Inst(db, di) if db == block => di < pos,
            DefSite::Inst(db, _) => dom[block][db],
        };
        if !available {
            return Err(VerifyError::UseBeforeDef {
                reg: r.clone(),
                block: func.blocks[block].label.clone(),
            });
        }
        if ty != expected {
            return Err(VerifyError::TypeMismatch {
                reg: r.clone(),
                expected,
                found: ty,
            });
        }
        Ok(())
    };

    use super::{InstKind, Terminator};
    for (bi, block) in func.blocks.iter().enumerate() {
        for (ii, inst) in block.insts.iter().enumerate() {
            match &inst.kind {
                InstKind::Binary { ty, lhs, rhs, .. } | InstKind::Icmp { ty, lhs, rhs, .. } => {
                    check(lhs, bi, ii, *ty)?;
                    check(rhs, bi, ii, *ty)?;
                }
                InstKind::Select { ty, cond, on_true, on_false } => {
                    check(cond, bi, ii, Ty::I1)?;
                    check(on_true, bi, ii, *ty)?;
                    check(on_false, bi, ii, *ty)?;
                }
            }
        }
        let pos = block.insts.len();
        match &block.term {
            Terminator::Br(_) => {}
            Terminator::CondBr { cond, .. } => check(cond, bi, pos, Ty::I1)?,
            Terminator::Ret { ty, value } => check(value, bi, pos, *ty)?,
        }
    }
    Ok(())
}

/// Verifies every function and the uniqueness of function names.
pub(crate) fn verify_functions(functions: &[Function]) -> Result<(), VerifyError> {
    let mut names = HashSet::new();
    for f in functions {
        if !names.insert(f.name.as_str()) {
            return Err(VerifyError::DuplicateFunction(f.name.clone()));
        }
        verify_function(f)?;
    }
    Ok(())
}
