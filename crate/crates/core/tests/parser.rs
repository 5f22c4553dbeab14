mod common;

use std::collections::BTreeSet;

use proptest::prelude::*;
use wasmprobe::disasm::{self, Immediate};
use wasmprobe::encode::encode_module;
use wasmprobe::parser::parse_module;
use wasmprobe::{opcodes, CountProbe, LoadError, Module, ParseError, Probe};
use wasmprobe_testkit::{fixture, fixtures};

#[test]
fn every_fixture_round_trips_through_the_encoder() {
    for f in fixtures() {
        let bytes = f.wasm();
        let m = Module::load(&bytes).unwrap();
        assert_eq!(encode_module(&m), bytes, "{}", f.name);
    }
}

#[test]
fn boundaries_match_the_reference_decoder() {
    for f in fixtures() {
        let m = common::module(&f);
        let mine: BTreeSet<(u32, u32)> = (m.num_imported_funcs()..m.num_funcs())
            .flat_map(|i| {
                disasm::instruction_boundaries(m.func(i).unwrap())
                    .into_iter()
                    .map(move |pc| (i, pc))
            })
            .collect();
        assert_eq!(mine, f.oracle().all_pcs, "{}", f.name);
    }
}

#[test]
fn loop3_listing() {
    let m = common::module(&fixture("loop3"));
    assert_eq!(m.num_funcs(), 1);
    let listing = disasm::disassemble(m.func(0).unwrap());
    let text: Vec<(u32, String)> = listing.iter().map(|i| (i.pc, i.to_string())).collect();
    assert_eq!(
        text,
        vec![
            (0, "i32.const 3".to_string()),
            (2, "local.set 0".to_string()),
            (4, "loop".to_string()),
            (6, "local.get 0".to_string()),
            (8, "i32.const 1".to_string()),
            (10, "i32.sub".to_string()),
            (11, "local.tee 0".to_string()),
            (13, "br_if 0".to_string()),
            (15, "end".to_string()),
            (16, "end".to_string()),
        ]
    );
    assert_eq!(listing[0].imm, Immediate::I32(3));
    // The br_if goes back to the loop header.
    let side = m.func(0).unwrap().sidetable();
    assert_eq!(side.branch_targets(13)[0].target_pc, 6);
    assert_eq!(side.loop_headers().collect::<Vec<_>>(), vec![6]);
}

#[test]
fn header_only_module_is_empty() {
    let m = Module::load(b"\0asm\x01\0\0\0").unwrap();
    assert_eq!(m.num_funcs(), 0);
}

#[test]
fn bad_magic_is_malformed_at_offset_three() {
    match parse_module(b"\0asM\x01\0\0\0") {
        Err(ParseError::Malformed { offset, reason }) => {
            assert_eq!(offset, 3);
            assert_eq!(reason, "bad magic");
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn post_mvp_features_are_unsupported() {
    // memory.fill is a bulk-memory operator.
    let bytes = wat::parse_str(
        r#"(module (memory 1) (func i32.const 0 i32.const 0 i32.const 0 memory.fill))"#,
    )
    .unwrap();
    assert!(matches!(
        Module::load(&bytes),
        Err(LoadError::Parse(ParseError::UnsupportedFeature(_)))
    ));
}

#[test]
fn validation_errors_carry_locations() {
    // Built by hand: these bodies are ill-typed.
    let underflow = [
        0, 0x61, 0x73, 0x6d, 1, 0, 0, 0, // header
        1, 4, 1, 0x60, 0, 0, // type () -> ()
        3, 2, 1, 0, // one function
        10, 5, 1, 3, 0, 0x6a, 0x0b, // body: i32.add end
    ];
    match Module::load(&underflow) {
        Err(LoadError::Validation(e)) => {
            assert_eq!(e.location.unwrap().pc, 0);
            assert!(e.reason.contains("underflow"), "{}", e.reason);
        }
        other => panic!("{other:?}"),
    }
    let no_end = [
        0, 0x61, 0x73, 0x6d, 1, 0, 0, 0, 1, 4, 1, 0x60, 0, 0, 3, 2, 1, 0, 10, 5, 1, 3, 0, 0x01, 0x01,
    ];
    assert!(Module::load(&no_end).is_err());
}

#[test]
fn multibyte_immediates_are_skipped() {
    let bytes = wat::parse_str(r#"(module (func (result i32) i32.const 300))"#).unwrap();
    let m = Module::load(&bytes).unwrap();
    let b = disasm::instruction_boundaries(m.func(0).unwrap());
    assert_eq!(b.into_iter().collect::<Vec<_>>(), vec![0, 3]);
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 200, failure_persistence: None, ..ProptestConfig::default() })]

    /// The listing is read from the pristine body, so probes never show.
    #[test]
    fn disassembly_ignores_probes(
        which in 0usize..22,
        ops in prop::collection::vec((any::<prop::sample::Index>(), any::<bool>()), 1..40),
    ) {
        let all = fixtures();
        let f = &all[which % all.len()];
        let (mut inst, _) = common::instance(f);
        let module = common::module(f);
        let funcs: Vec<u32> = (module.num_imported_funcs()..module.num_funcs()).collect();
        prop_assume!(!funcs.is_empty());
        let before: Vec<_> = funcs.iter().map(|&i| disasm::disassemble(inst.module().func(i).unwrap())).collect();
        let sites: Vec<(u32, u32)> = funcs
            .iter()
            .flat_map(|&i| disasm::instruction_boundaries(module.func(i).unwrap()).into_iter().map(move |pc| (i, pc)))
            .collect();
        let probe: Probe = CountProbe::new().into();
        let mut installed = BTreeSet::new();
        for (idx, insert) in ops {
            let (func, pc) = sites[idx.index(sites.len())];
            let loc = inst.module().location(func, pc);
            if insert && installed.insert((func, pc)) {
                inst.instrumentation_mut().insert_probe(loc, probe.clone()).unwrap();
                prop_assert_eq!(inst.live_body(func).unwrap()[pc as usize], opcodes::PROBE);
            } else if !insert && installed.remove(&(func, pc)) {
                inst.instrumentation_mut().remove_probe(loc, &probe).unwrap();
            }
            let after: Vec<_> = funcs.iter().map(|&i| disasm::disassemble(inst.module().func(i).unwrap())).collect();
            prop_assert_eq!(&after, &before);
        }
    }
}
