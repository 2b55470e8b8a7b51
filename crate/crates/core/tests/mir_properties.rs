use passfeedback::backend::{CompilerBackend, MiniBackend};
use passfeedback::ir_text::{count_instructions_text, tokenize};
use passfeedback::mir::{
    apply_pass, generate_program, interpret, parse_module, reference_oz, run_passes, verify_function, CorpusParams, IrModule,
    Pass,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn program(seed: u64) -> IrModule {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    parse_module(&generate_program(&mut rng, &CorpusParams::default(), "p")).expect("generator output parses")
}

fn arity(m: &IrModule) -> usize {
    m.functions[0].params.len()
}

fn pass() -> impl Strategy<Value = Pass> {
    prop::sample::select(Pass::ALL.to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn passes_preserve_semantics(seed in any::<u64>(), p in pass(), args in prop::collection::vec(any::<i32>(), 3)) {
        let m = program(seed);
        let out = apply_pass(&m, p);
        let a = &args[..arity(&m)];
        prop_assert_eq!(interpret(&m, a, 10_000), interpret(&out, a, 10_000));
    }

    #[test]
    fn pipelines_preserve_semantics(seed in any::<u64>(), ps in prop::collection::vec(pass(), 0..6), args in prop::collection::vec(any::<i32>(), 3)) {
        let m = program(seed);
        let out = run_passes(&m, &ps);
        let a = &args[..arity(&m)];
        prop_assert_eq!(interpret(&m, a, 10_000), interpret(&out, a, 10_000));
    }

    #[test]
    fn passes_never_grow_and_reverify(seed in any::<u64>(), p in pass()) {
        let m = program(seed);
        let out = apply_pass(&m, p);
        prop_assert!(out.inst_count() <= m.inst_count());
        for f in &out.functions {
            prop_assert!(verify_function(f).is_ok());
        }
        let reparsed = parse_module(&out.render()).unwrap();
        prop_assert_eq!(&reparsed.functions, &out.functions);
    }

    #[test]
    fn fixpoint_passes_are_idempotent(seed in any::<u64>()) {
        let m = program(seed);
        for p in [Pass::Dce, Pass::Constfold] {
            let once = apply_pass(&m, p);
            prop_assert_eq!(&apply_pass(&once, p).functions, &once.functions);
        }
    }

    #[test]
    fn reference_never_grows(seed in any::<u64>()) {
        let m = program(seed);
        prop_assert!(reference_oz(&m).inst_count() <= m.inst_count());
    }

    #[test]
    fn textual_count_matches_parsed_count(seed in any::<u64>(), ps in prop::collection::vec(pass(), 0..4)) {
        let m = run_passes(&program(seed), &ps);
        let text = m.render();
        prop_assert_eq!(count_instructions_text(&text), m.inst_count());
        prop_assert_eq!(count_instructions_text(&m.source_text), m.inst_count());
    }

    #[test]
    fn identity_compile_is_structural_identity(seed in any::<u64>()) {
        let m = program(seed);
        let be = MiniBackend::new();
        let r = be.compile(&m.source_text, &[]);
        let compiled = parse_module(r.compiled_ir().unwrap()).unwrap();
        prop_assert_eq!(&compiled.functions, &m.functions);
        prop_assert_eq!(r.inst_count(), Some(m.inst_count()));
    }

    #[test]
    fn tokens_round_trip_on_programs(seed in any::<u64>()) {
        let t = tokenize(&program(seed).source_text);
        prop_assert_eq!(tokenize(&t.join()), t);
    }
}

#[test]
fn fixture_counts() {
    let diamond = include_str!("fixtures/diamond.mir");
    let m = parse_module(diamond).unwrap();
    assert_eq!(m.inst_count(), 7);
    assert_eq!(m.functions[0].blocks.len() - 1, 2);
    assert_eq!(count_instructions_text(diamond), m.inst_count());
    // x = 4: a = 4, 4 < 10, s = 8.
    assert_eq!(interpret(&m, &[4], 100), Ok(8));
    // x = 12: a = 12, not < 10, b = 2.
    assert_eq!(interpret(&m, &[12], 100), Ok(2));
}

#[test]
fn fixture_token_count_by_hand() {
    // Tokens per line of fold_witness.mir, applying the splitting rule:
    //   func fold() {        -> func fold ( ) {          5
    //   entry:               -> entry :                  2
    //   %a = add i32 2, 3    -> %a = add i32 2 , 3       7
    //   %b = mul i32 %a, 0   -> %b = mul i32 %a , 0      7
    //   ret i32 %b           -> ret i32 %b               3
    //   }                    -> }                        1
    let t = tokenize(include_str!("fixtures/fold_witness.mir"));
    assert_eq!(t.len(), 5 + 2 + 7 + 7 + 3 + 1);
    assert_eq!(t.tokens()[..5], ["func", "fold", "(", ")", "{"]);
}
