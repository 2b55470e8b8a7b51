use std::collections::HashMap;

use thiserror::Error;

use super::{InstKind, IrModule, Operand, Terminator};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Trap {
    #[error("out of fuel")]
    OutOfFuel,
    #[error("module has no functions")]
    NoFunction,
    #[error("expected {expected} arguments, got {got}")]
    Arity { expected: usize, got: usize },
}

/// Executes the first function of a verified module.
///
/// Arithmetic wraps at 32 bits; `i1` arguments keep their low bit. Every
/// executed instruction (terminators included) consumes one unit of fuel.
pub fn interpret(module: &IrModule, args: &[i32], fuel: u64) -> Result<i32, Trap> {
    let func = module.functions.first().ok_or(Trap::NoFunction)?;
    if func.params.len() != args.len() {
        return Err(Trap::Arity {
            expected: func.params.len(),
            got: args.len(),
        });
    }

    let mut env: HashMap<&str, i32> = func
        .params
        .iter()
        .zip(args)
        .map(|((name, ty), &v)| (name.as_str(), ty.norm(v)))
        .collect();
    let index: HashMap<&str, usize> = func
        .blocks
        .iter()
        .enumerate()
        .map(|(i, b)| (b.label.as_str(), i))
        .collect();

    let read = |env: &HashMap<&str, i32>, op: &Operand| match op {
        Operand::Const(c) => *c,
        // verified modules never read an unset register
        Operand::Reg(r) => env[r.as_str()],
    };

    let mut fuel = fuel;
    let mut block = &func.blocks[0];
    loop {
        for inst in &block.insts {
            fuel = fuel.checked_sub(1).ok_or(Trap::OutOfFuel)?;
            let value = match &inst.kind {
                InstKind::Binary { op, ty, lhs, rhs } => op.eval(*ty, read(&env, lhs), read(&env, rhs)),
                InstKind::Icmp { cond, ty, lhs, rhs } => cond.eval(*ty, read(&env, lhs), read(&env, rhs)),
                InstKind::Select { ty, cond, on_true, on_false } => {
                    let picked = if read(&env, cond) & 1 == 1 { on_true } else { on_false };
                    ty.norm(read(&env, picked))
                }
            };
            env.insert(&inst.dest, value);
        }
        fuel = fuel.checked_sub(1).ok_or(Trap::OutOfFuel)?;
        let target = match &block.term {
            Terminator::Ret { ty, value } => return Ok(ty.norm(read(&env, value))),
            Terminator::Br(l) => l,
            Terminator::CondBr { cond, on_true, on_false } => {
                if read(&env, cond) & 1 == 1 {
                    on_true
                } else {
                    on_false
                }
            }
        };
        block = &func.blocks[index[target.as_str()]];
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mir::parse_module;

    fn run(text: &str, args: &[i32]) -> i32 {
        interpret(&parse_module(text).unwrap(), args, 10_000).unwrap()
    }

    #[test]
    fn constant_return() {
        assert_eq!(run("func f() {\nentry:\n  ret i32 7\n}", &[]), 7);
    }

    #[test]
    fn add_constants() {
        assert_eq!(run("func f() {\nentry:\n  %a = add i32 2, 3\n  ret i32 %a\n}", &[]), 5);
    }

    #[test]
    fn wrapping_arithmetic() {
        let text = "func f(i32 %x) {\nentry:\n  %a = mul i32 %x, 2\n  %b = add i32 %a, 1\n  ret i32 %b\n}";
        assert_eq!(run(text, &[i32::MAX]), i32::MAX.wrapping_mul(2).wrapping_add(1));
    }

    #[test]
    fn i1_comparisons_are_signed() {
        // as i1, 1 means -1 under signed comparison
        let text = "func f() {\nentry:\n  %c = icmp slt i1 1, 0\n  %r = select i32 %c, 10, 20\n  ret i32 %r\n}";
        assert_eq!(run(text, &[]), 10);
    }

    #[test]
    fn fuel_guard() {
        let m = parse_module("func f() {\nentry:\n  %a = add i32 1, 1\n  ret i32 %a\n}").unwrap();
        assert_eq!(interpret(&m, &[], 1), Err(Trap::OutOfFuel));
        assert_eq!(interpret(&m, &[], 2), Ok(2));
    }

    #[test]
    fn arity_mismatch() {
        let m = parse_module("func f(i32 %x) {\nentry:\n  ret i32 %x\n}").unwrap();
        assert!(matches!(interpret(&m, &[], 10), Err(Trap::Arity { .. })));
    }
}
