//! The five catalog passes.
//!
//! Every pass maps a verified module to a verified, semantically equivalent
//! module and never increases the instruction count.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::verify::Cfg;
use super::{BinOp, Function, InstKind, IrModule, Operand, Terminator};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pass {
    Constfold,
    Peephole,
    Cse,
    Simplifycfg,
    Dce,
}

impl Pass {
    pub const ALL: [Pass; 5] = [Pass::Constfold, Pass::Peephole, Pass::Cse, Pass::Simplifycfg, Pass::Dce];

    pub fn name(self) -> &'static str {
        match self {
            Pass::Constfold => "constfold",
            Pass::Peephole => "peephole",
            Pass::Cse => "cse",
            Pass::Simplifycfg => "simplifycfg",
            Pass::Dce => "dce",
        }
    }
}

impl fmt::Display for Pass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown pass '{0}'")]
pub struct UnknownPass(pub String);

impl FromStr for Pass {
    type Err = UnknownPass;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Pass::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| UnknownPass(s.to_string()))
    }
}

/// The mini backend's stand-in for `-Oz`.
pub const REFERENCE_PIPELINE: [Pass; 6] = [
    Pass::Constfold,
    Pass::Peephole,
    Pass::Cse,
    Pass::Dce,
    Pass::Simplifycfg,
    Pass::Dce,
];

pub fn parse_pass_list<S: AsRef<str>>(names: &[S]) -> Result<Vec<Pass>, UnknownPass> {
    names.iter().map(|n| n.as_ref().parse()).collect()
}

pub fn apply_pass(module: &IrModule, pass: Pass) -> IrModule {
    let mut functions = module.functions.clone();
    for func in &mut functions {
        match pass {
            Pass::Constfold => constfold(func),
            Pass::Peephole => peephole(func),
            Pass::Cse => cse(func),
            Pass::Simplifycfg => simplifycfg(func),
            Pass::Dce => dce(func),
        }
    }
    IrModule::from_functions(functions)
}

/// Left-to-right composition of [`apply_pass`].
pub fn run_passes(module: &IrModule, passes: &[Pass]) -> IrModule {
    let mut current = module.clone();
    for &pass in passes {
        current = apply_pass(&current, pass);
    }
    current
}

/// Resolves pass names, then runs them left to right.
pub fn apply_pipeline<S: AsRef<str>>(module: &IrModule, names: &[S]) -> Result<IrModule, UnknownPass> {
    Ok(run_passes(module, &parse_pass_list(names)?))
}

pub fn reference_oz(module: &IrModule) -> IrModule {
    run_passes(module, &REFERENCE_PIPELINE)
}

fn fold_constant(kind: &InstKind) -> Option<i32> {
    match kind {
        InstKind::Binary { op, ty, lhs, rhs } => Some(op.eval(*ty, lhs.as_const()?, rhs.as_const()?)),
        InstKind::Icmp { cond, ty, lhs, rhs } => Some(cond.eval(*ty, lhs.as_const()?, rhs.as_const()?)),
        InstKind::Select { ty, cond, on_true, on_false } => {
            let c = cond.as_const()?;
            let (t, f) = (on_true.as_const()?, on_false.as_const()?);
            Some(ty.norm(if c & 1 == 1 { t } else { f }))
        }
    }
}

/// Propagates constants into uses and folds all-constant instructions until
/// nothing changes. Folded instructions stay in place for `dce`.
fn constfold(func: &mut Function) {
    let mut consts: HashMap<String, i32> = HashMap::new();
    loop {
        let mut changed = false;
        for block in &mut func.blocks {
            for inst in &mut block.insts {
                for op in inst.kind.operands_mut() {
                    if let Some(&c) = op.reg().and_then(|r| consts.get(r)) {
                        *op = Operand::Const(c);
                        changed = true;
                    }
                }
                if !consts.contains_key(&inst.dest) {
                    if let Some(v) = fold_constant(&inst.kind) {
                        consts.insert(inst.dest.clone(), v);
                        changed = true;
                    }
                }
            }
            for op in block.term.operands_mut() {
                if let Some(&c) = op.reg().and_then(|r| consts.get(r)) {
                    *op = Operand::Const(c);
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
}

fn is_const(op: &Operand, ty: super::Ty, value: i32) -> bool {
    op.as_const().is_some_and(|c| ty.norm(c) == value)
}

fn normalized(op: &Operand, ty: super::Ty) -> Operand {
    match op {
        Operand::Const(c) => Operand::Const(ty.norm(*c)),
        reg => reg.clone(),
    }
}

/// The value an instruction reduces to under an algebraic identity.
fn identity(kind: &InstKind) -> Option<Operand> {
    match kind {
        InstKind::Binary { op, ty, lhs, rhs } => {
            let ty = *ty;
            match op {
                BinOp::Add if is_const(rhs, ty, 0) => Some(normalized(lhs, ty)),
                BinOp::Add if is_const(lhs, ty, 0) => Some(normalized(rhs, ty)),
                BinOp::Sub if is_const(rhs, ty, 0) => Some(normalized(lhs, ty)),
                BinOp::Mul if is_const(rhs, ty, 0) || is_const(lhs, ty, 0) => Some(Operand::Const(0)),
                BinOp::Mul if is_const(rhs, ty, 1) => Some(normalized(lhs, ty)),
                BinOp::Mul if is_const(lhs, ty, 1) => Some(normalized(rhs, ty)),
                BinOp::Xor if lhs == rhs => Some(Operand::Const(0)),
                BinOp::And | BinOp::Or if lhs == rhs => Some(normalized(lhs, ty)),
                _ => None,
            }
        }
        InstKind::Select { ty, cond, on_true, on_false } => {
            let c = cond.as_const()?;
            Some(normalized(if c & 1 == 1 { on_true } else { on_false }, *ty))
        }
        InstKind::Icmp { .. } => None,
    }
}

fn substitute_operands(kind: &mut InstKind, map: &HashMap<String, Operand>) {
    for op in kind.operands_mut() {
        while let Some(next) = op.reg().and_then(|r| map.get(r)) {
            *op = next.clone();
        }
    }
}

/// Removes instructions matched by algebraic identities, forwarding their
/// value to all uses.
fn peephole(func: &mut Function) {
    loop {
        let mut map: HashMap<String, Operand> = HashMap::new();
        for block in &mut func.blocks {
            block.insts.retain_mut(|inst| {
                substitute_operands(&mut inst.kind, &map);
                match identity(&inst.kind) {
                    Some(value) => {
                        map.insert(inst.dest.clone(), value);
                        false
                    }
                    None => true,
                }
            });
        }
        if map.is_empty() {
            break;
        }
        func.replace_uses(&map);
    }
}

fn cse_key(kind: &InstKind) -> InstKind {
    let mut key = kind.clone();
    match &mut key {
        InstKind::Binary { op, lhs, rhs, .. } if op.is_commutative() => {
            if *rhs < *lhs {
                std::mem::swap(lhs, rhs);
            }
        }
        InstKind::Icmp { cond, lhs, rhs, .. } if cond.is_commutative() && *rhs < *lhs => {
            std::mem::swap(lhs, rhs);
        }
        _ => {}
    }
    key
}

/// Within each block, reuses the first of several identical expressions.
fn cse(func: &mut Function) {
    loop {
        let mut map: HashMap<String, Operand> = HashMap::new();
        for block in &mut func.blocks {
            let mut seen: HashMap<InstKind, String> = HashMap::new();
            block.insts.retain_mut(|inst| {
                substitute_operands(&mut inst.kind, &map);
                let key = cse_key(&inst.kind);
                match seen.get(&key) {
                    Some(first) => {
                        map.insert(inst.dest.clone(), Operand::Reg(first.clone()));
                        false
                    }
                    None => {
                        seen.insert(key, inst.dest.clone());
                        true
                    }
                }
            });
        }
        if map.is_empty() {
            break;
        }
        func.replace_uses(&map);
    }
}

/// Folds constant branches, drops unreachable blocks and merges
/// single-predecessor/single-successor chains.
fn simplifycfg(func: &mut Function) {
    loop {
        let mut changed = false;

        for block in &mut func.blocks {
            let folded = match &block.term {
                Terminator::CondBr { cond: Operand::Const(c), on_true, on_false } => {
                    Some(if c & 1 == 1 { on_true.clone() } else { on_false.clone() })
                }
                Terminator::CondBr { on_true, on_false, .. } if on_true == on_false => Some(on_true.clone()),
                _ => None,
            };
            if let Some(target) = folded {
                block.term = Terminator::Br(target);
                changed = true;
            }
        }

        let reachable = Cfg::new(func).reachable();
        if reachable.iter().any(|r| !r) {
            let mut keep = reachable.into_iter();
            func.blocks.retain(|_| keep.next().unwrap_or(true));
            changed = true;
        }

        let cfg = Cfg::new(func);
        let merge = func.blocks.iter().enumerate().find_map(|(i, block)| match &block.term {
            Terminator::Br(target) => {
                let j = func.block_index(target)?;
                (j != 0 && j != i && cfg.preds[j].len() == 1).then_some((i, j))
            }
            _ => None,
        });
        if let Some((i, j)) = merge {
            let succ = func.blocks.remove(j);
            let pred = &mut func.blocks[if j < i { i - 1 } else { i }];
            pred.insts.extend(succ.insts);
            pred.term = succ.term;
            changed = true;
        }

        if !changed {
            break;
        }
    }
}

/// Removes instructions whose result is never used, to fixpoint.
fn dce(func: &mut Function) {
    loop {
        let mut used: HashSet<String> = HashSet::new();
        for block in &func.blocks {
            for inst in &block.insts {
                used.extend(inst.kind.operands().into_iter().filter_map(|o| o.reg().map(str::to_string)));
            }
            used.extend(block.term.operands().into_iter().filter_map(|o| o.reg().map(str::to_string)));
        }
        let mut removed = false;
        for block in &mut func.blocks {
            let before = block.insts.len();
            block.insts.retain(|inst| used.contains(&inst.dest));
            removed |= block.insts.len() != before;
        }
        if !removed {
            break;
        }
    }
}
