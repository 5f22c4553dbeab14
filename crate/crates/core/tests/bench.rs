mod common;

use std::rc::Rc;

use wasmprobe::bench::{self, Program, Variant};
use wasmprobe::{Imports, OutputBuffer};
use wasmprobe_testkit::{fixture, hot_loop};

fn env() -> Imports {
    Imports::env(OutputBuffer::default())
}

#[test]
fn table_has_baseline_and_every_variant() {
    let f = hot_loop(20_000);
    let args = common::args(&f);
    let program = Program {
        module: common::module(&f),
        imports: &env,
        entry: f.entry,
        args: &args,
    };
    let variants = [
        Variant::Stripped,
        Variant::Monitor("hotness".into()),
        Variant::EmptyProbes("hotness".into()),
        Variant::Monitor("branch:global".into()),
    ];
    let table = bench::bench(&program, &variants, 3).unwrap();
    assert_eq!(table.baseline.samples.len(), 3);
    assert_eq!(table.rows.len(), 4);
    assert!(table.warnings.is_empty());
    for v in &variants {
        assert!(table.relative(v).unwrap() > 0.0);
    }
    let text = table.to_string();
    assert!(text.starts_with("variant"));
    assert!(text.contains("hotness [empty]"));
    assert!(text.contains("(stripped)"));
}

#[test]
fn empty_probe_mode_replicates_placement() {
    let f = fixture("branches");
    let module = common::module(&f);
    let mut a = wasmprobe::Instance::new_unstarted(module.clone(), &env()).unwrap();
    let mut b = wasmprobe::Instance::new_unstarted(module, &env()).unwrap();
    let mut m = wasmprobe::monitors::create("coverage").unwrap();
    m.on_load(a.instrumentation_mut()).unwrap();
    bench::replicate_empty(a.instrumentation(), b.instrumentation_mut()).unwrap();
    let pa: Vec<_> = a.instrumentation().local_probes().into_iter().map(|(l, p)| (l, p.len())).collect();
    let pb: Vec<_> = b.instrumentation().local_probes().into_iter().map(|(l, p)| (l, p.len())).collect();
    assert_eq!(pa, pb);
    assert!(!pa.is_empty());
}

#[test]
fn nondeterministic_program_is_flagged() {
    // Memory receives a value that a host import changes on every run.
    let wat = r#"(module
        (import "env" "tick" (func $tick (result i32)))
        (memory 1)
        (func (export "main") (i32.store (i32.const 0) (call $tick))))"#;
    let module = Rc::new(wasmprobe::Module::load(&wat::parse_str(wat).unwrap()).unwrap());
    let counter = Rc::new(std::cell::Cell::new(0));
    let imports = move || {
        let c = counter.clone();
        let mut i = Imports::new();
        i.define("env", "tick", wasmprobe::FuncType { params: vec![], results: vec![wasmprobe::ValueType::I32] }, move |_| {
            c.set(c.get() + 1);
            Ok(vec![wasmprobe::Value::I32(c.get())])
        });
        i
    };
    let program = Program {
        module,
        imports: &imports,
        entry: "main",
        args: &[],
    };
    let table = bench::bench(&program, &[], 2).unwrap();
    assert_eq!(table.warnings.len(), 1);
    assert!(table.to_string().contains("warning"));
}

#[test]
fn zero_repetitions_is_an_error() {
    let f = fixture("loop3");
    let program = Program {
        module: common::module(&f),
        imports: &env,
        entry: "main",
        args: &[],
    };
    assert!(bench::bench(&program, &[], 0).is_err());
}
