//! Seeded generator of random verifiable mini-IR programs.
//!
//! Programs are sprinkled with the patterns the catalog passes target
//! (constant expressions, algebraic identities, duplicated expressions,
//! constant branches, dead values) so that pass order matters.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::verify::{dominators, topo_order, Cfg};
use super::{parse_module, BinOp, Block, Cond, Function, Inst, InstKind, Operand, Terminator, Ty};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusParams {
    pub max_params: usize,
    pub min_blocks: usize,
    pub max_blocks: usize,
    pub min_insts: usize,
    pub max_insts: usize,
    /// Probability that a conditional branch tests a literal.
    pub const_branch_prob: f64,
    /// Probability that an instruction is a planted optimization opportunity.
    pub opportunity_prob: f64,
}

impl Default for CorpusParams {
    fn default() -> Self {
        Self {
            max_params: 3,
            min_blocks: 1,
            max_blocks: 6,
            min_insts: 1,
            max_insts: 6,
            const_branch_prob: 0.2,
            opportunity_prob: 0.3,
        }
    }
}

enum Shape {
    Ret,
    Br(usize),
    CondBr(usize, usize),
}

struct Builder<'a> {
    rng: &'a mut ChaCha8Rng,
    next_reg: usize,
}

impl Builder<'_> {
    fn fresh(&mut self) -> String {
        let r = format!("v{}", self.next_reg);
        self.next_reg += 1;
        r
    }

    fn literal(&mut self) -> Operand {
        Operand::Const(self.rng.random_range(-8..=16))
    }

    fn i32_operand(&mut self, avail: &[String]) -> Operand {
        if avail.is_empty() || self.rng.random_bool(0.25) {
            self.literal()
        } else {
            // bias towards recent values so chains form
            let n = avail.len();
            let idx = if self.rng.random_bool(0.6) {
                n - 1 - self.rng.random_range(0..n.min(3))
            } else {
                self.rng.random_range(0..n)
            };
            Operand::Reg(avail[idx].clone())
        }
    }

    fn opportunity(&mut self, ints: &[String], bools: &[String], block: &[Inst]) -> InstKind {
        let x = self.i32_operand(ints);
        match self.rng.random_range(0..9) {
            0 => InstKind::Binary { op: BinOp::Add, ty: Ty::I32, lhs: x, rhs: Operand::Const(0) },
            1 => InstKind::Binary { op: BinOp::Mul, ty: Ty::I32, lhs: x, rhs: Operand::Const(1) },
            2 => InstKind::Binary { op: BinOp::Mul, ty: Ty::I32, lhs: x, rhs: Operand::Const(0) },
            3 => InstKind::Binary { op: BinOp::Sub, ty: Ty::I32, lhs: x, rhs: Operand::Const(0) },
            4 => {
                let op = *[BinOp::Xor, BinOp::And, BinOp::Or].choose(self.rng).expect("non-empty");
                InstKind::Binary { op, ty: Ty::I32, lhs: x.clone(), rhs: x }
            }
            5 => {
                let op = *BinOp::ALL.choose(self.rng).expect("non-empty");
                let (a, b) = (self.literal(), self.literal());
                InstKind::Binary { op, ty: Ty::I32, lhs: a, rhs: b }
            }
            6 => {
                let y = self.i32_operand(ints);
                InstKind::Select {
                    ty: Ty::I32,
                    cond: Operand::Const(self.rng.random_range(0..=1)),
                    on_true: x,
                    on_false: y,
                }
            }
            7 if !block.is_empty() => block.choose(self.rng).expect("non-empty").kind.clone(),
            _ => {
                let cond = match bools.choose(self.rng) {
                    Some(b) if self.rng.random_bool(0.5) => Operand::Reg(b.clone()),
                    _ => Operand::Const(self.rng.random_range(0..=1)),
                };
                let y = self.i32_operand(ints);
                InstKind::Select { ty: Ty::I32, cond, on_true: x, on_false: y }
            }
        }
    }

    fn regular(&mut self, ints: &[String], bools: &[String]) -> InstKind {
        let roll = self.rng.random_range(0..100);
        if roll < 60 || (roll >= 85 && bools.is_empty()) {
            let op = *BinOp::ALL.choose(self.rng).expect("non-empty");
            let lhs = self.i32_operand(ints);
            let rhs = self.i32_operand(ints);
            InstKind::Binary { op, ty: Ty::I32, lhs, rhs }
        } else if roll < 85 {
            let cond = *Cond::ALL.choose(self.rng).expect("non-empty");
            let lhs = self.i32_operand(ints);
            let rhs = self.i32_operand(ints);
            InstKind::Icmp { cond, ty: Ty::I32, lhs, rhs }
        } else {
            let cond = Operand::Reg(bools.choose(self.rng).expect("non-empty").clone());
            let on_true = self.i32_operand(ints);
            let on_false = self.i32_operand(ints);
            InstKind::Select { ty: Ty::I32, cond, on_true, on_false }
        }
    }
}

fn label(i: usize) -> String {
    if i == 0 {
        "entry".to_string()
    } else {
        format!("bb{i}")
    }
}

/// Generates one program as mini-IR text. The output always verifies.
pub fn generate_program(rng: &mut ChaCha8Rng, params: &CorpusParams, name: &str) -> String {
    let n_params = rng.random_range(1..=params.max_params.max(1));
    let n_blocks = rng.random_range(params.min_blocks.max(1)..=params.max_blocks.max(params.min_blocks).max(1));

    let mut shapes: Vec<Shape> = (0..n_blocks)
        .map(|i| {
            let later = n_blocks - i - 1;
            let roll = rng.random_range(0..100);
            if later == 0 || (roll < 12 && i > 0) {
                Shape::Ret
            } else if later >= 2 && roll < 60 {
                let a = rng.random_range(i + 1..n_blocks);
                let mut b = rng.random_range(i + 1..n_blocks);
                while b == a {
                    b = rng.random_range(i + 1..n_blocks);
                }
                Shape::CondBr(a, b)
            } else {
                Shape::Br(rng.random_range(i + 1..n_blocks))
            }
        })
        .collect();

    // Drop unreachable blocks and renumber.
    let mut reachable = vec![false; n_blocks];
    reachable[0] = true;
    for i in 0..n_blocks {
        if !reachable[i] {
            continue;
        }
        match shapes[i] {
            Shape::Ret => {}
            Shape::Br(t) => reachable[t] = true,
            Shape::CondBr(a, b) => {
                reachable[a] = true;
                reachable[b] = true;
            }
        }
    }
    let mut renumber = vec![usize::MAX; n_blocks];
    let mut kept = 0;
    for (i, r) in reachable.iter().enumerate() {
        if *r {
            renumber[i] = kept;
            kept += 1;
        }
    }
    shapes = shapes
        .into_iter()
        .enumerate()
        .filter(|(i, _)| reachable[*i])
        .map(|(_, s)| match s {
            Shape::Ret => Shape::Ret,
            Shape::Br(t) => Shape::Br(renumber[t]),
            Shape::CondBr(a, b) => Shape::CondBr(renumber[a], renumber[b]),
        })
        .collect();

    let mut func = Function {
        name: name.to_string(),
        params: (0..n_params).map(|i| (format!("p{i}"), Ty::I32)).collect(),
        blocks: shapes
            .iter()
            .enumerate()
            .map(|(i, s)| Block {
                label: label(i),
                insts: Vec::new(),
                term: match s {
                    Shape::Ret => Terminator::Ret { ty: Ty::I32, value: Operand::Const(0) },
                    Shape::Br(t) => Terminator::Br(label(*t)),
                    Shape::CondBr(a, b) => Terminator::CondBr {
                        cond: Operand::Const(1),
                        on_true: label(*a),
                        on_false: label(*b),
                    },
                },
            })
            .collect(),
    };

    let cfg = Cfg::new(&func);
    let order = topo_order(&cfg).expect("forward edges only");
    let dom = dominators(&cfg, &order);

    let mut builder = Builder { rng, next_reg: 0 };
    // values defined per block, by type
    let mut defined: Vec<(Vec<String>, Vec<String>)> = vec![(Vec::new(), Vec::new()); func.blocks.len()];
    let params_i32: Vec<String> = func.params.iter().map(|(n, _)| n.clone()).collect();

    for bi in 0..func.blocks.len() {
        let mut ints = params_i32.clone();
        let mut bools = Vec::new();
        for (d, (i, b)) in defined.iter().enumerate() {
            if d != bi && dom[bi][d] {
                ints.extend(i.iter().cloned());
                bools.extend(b.iter().cloned());
            }
        }

        let n_insts = builder
            .rng
            .random_range(params.min_insts..=params.max_insts.max(params.min_insts));
        let mut insts: Vec<Inst> = Vec::new();
        for _ in 0..n_insts {
            let kind = if builder.rng.random_bool(params.opportunity_prob) {
                builder.opportunity(&ints, &bools, &insts)
            } else {
                builder.regular(&ints, &bools)
            };
            let dest = builder.fresh();
            match kind.result_ty() {
                Ty::I32 => ints.push(dest.clone()),
                Ty::I1 => bools.push(dest.clone()),
            }
            insts.push(Inst { dest, kind });
        }

        let term = match &func.blocks[bi].term {
            Terminator::CondBr { on_true, on_false, .. } => {
                let cond = if builder.rng.random_bool(params.const_branch_prob) {
                    Operand::Const(builder.rng.random_range(0..=1))
                } else {
                    let reg = match bools.choose(builder.rng) {
                        Some(b) => b.clone(),
                        None => {
                            let lhs = builder.i32_operand(&ints);
                            let rhs = builder.literal();
                            let dest = builder.fresh();
                            let cond = *Cond::ALL.choose(builder.rng).expect("non-empty");
                            insts.push(Inst {
                                dest: dest.clone(),
                                kind: InstKind::Icmp { cond, ty: Ty::I32, lhs, rhs },
                            });
                            dest
                        }
                    };
                    Operand::Reg(reg)
                };
                Terminator::CondBr { cond, on_true: on_true.clone(), on_false: on_false.clone() }
            }
            Terminator::Ret { .. } => {
                let value = match ints.last() {
                    Some(last) if builder.rng.random_bool(0.8) => Operand::Reg(last.clone()),
                    _ => builder.i32_operand(&ints),
                };
                Terminator::Ret { ty: Ty::I32, value }
            }
            br => br.clone(),
        };
        func.blocks[bi].term = term;

        let ints_here: Vec<String> = insts
            .iter()
            .filter(|i| i.kind.result_ty() == Ty::I32)
            .map(|i| i.dest.clone())
            .collect();
        let bools_here: Vec<String> = insts
            .iter()
            .filter(|i| i.kind.result_ty() == Ty::I1)
            .map(|i| i.dest.clone())
            .collect();
        defined[bi] = (ints_here, bools_here);
        func.blocks[bi].insts = insts;
    }

    let text = func.to_string();
    if let Err(e) = parse_module(&text) {
        panic!("corpus generator produced an invalid program ({e}):\n{text}");
    }
    text
}

/// Generates `size` programs named `prog00000`, `prog00001`, ...
///
/// Program `i` depends only on `(seed, i, params)`.
pub fn generate_corpus(seed: u64, size: usize, params: &CorpusParams) -> Vec<(String, String)> {
    (0..size)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let id = format!("prog{i:05}");
            let text = generate_program(&mut rng, params, &id);
            (id, text)
        })
        .collect()
}
