#![allow(dead_code)]

pub mod criteria;

use std::rc::Rc;

use wasmprobe::{Imports, Instance, Module, OutputBuffer, Value};
use wasmprobe_testkit::oracle::{Outcome, Trace};
use wasmprobe_testkit::{Fixture, Val};

pub fn value(v: Val) -> Value {
    match v {
        Val::I32(x) => Value::I32(x),
        Val::I64(x) => Value::I64(x),
        Val::F32(x) => Value::F32(x),
        Val::F64(x) => Value::F64(x),
    }
}

pub fn val(v: Value) -> Val {
    match v {
        Value::I32(x) => Val::I32(x),
        Value::I64(x) => Val::I64(x),
        Value::F32(x) => Val::F32(x),
        Value::F64(x) => Val::F64(x),
    }
}

pub fn args(f: &Fixture) -> Vec<Value> {
    f.args.iter().copied().map(value).collect()
}

pub fn module(f: &Fixture) -> Rc<Module> {
    Rc::new(Module::load(&f.wasm()).unwrap_or_else(|e| panic!("{}: {e}", f.name)))
}

/// An instance whose start function has not run yet.
pub fn instance(f: &Fixture) -> (Instance, OutputBuffer) {
    let out = OutputBuffer::default();
    let imports = Imports::env(out.clone());
    let inst = Instance::new_unstarted(module(f), &imports).unwrap_or_else(|e| panic!("{}: {e}", f.name));
    (inst, out)
}

/// Observable end state of a run.
#[derive(Debug, PartialEq)]
pub struct Final {
    pub outcome: Result<Vec<Value>, (String, u32, u32)>,
    pub memory: Vec<u8>,
    pub globals: Vec<Value>,
    pub output: String,
}

/// Runs start and entry on a prepared instance.
pub fn finish(f: &Fixture, inst: &mut Instance, out: &OutputBuffer) -> Final {
    try_finish(f, inst, out).unwrap_or_else(|e| panic!("{}: {e}", f.name))
}

/// Like [`finish`], but passes on errors other than traps.
pub fn try_finish(f: &Fixture, inst: &mut Instance, out: &OutputBuffer) -> Result<Final, wasmprobe::ExecError> {
    let r = inst.run_start().and_then(|_| inst.invoke(f.entry, &args(f)));
    let outcome = match r {
        Ok(v) => Ok(v),
        Err(wasmprobe::ExecError::Trap(t)) => Err((t.kind.name().to_string(), t.location.func, t.location.pc)),
        Err(e) => return Err(e),
    };
    Ok(Final {
        outcome,
        memory: inst.memory().to_vec(),
        globals: inst.globals(),
        output: out.contents(),
    })
}

pub fn oracle_final(t: &Trace) -> Final {
    Final {
        outcome: match &t.outcome {
            Outcome::Returned(v) => Ok(v.iter().copied().map(value).collect()),
            Outcome::Trapped(tr) => Err((tr.kind.to_string(), tr.func, tr.pc)),
        },
        memory: t.memory.clone(),
        globals: t.globals.iter().copied().map(value).collect(),
        output: t.output.clone(),
    }
}

pub fn run_with(f: &Fixture, monitors: &mut [Box<dyn wasmprobe::monitors::Monitor>]) -> wasmprobe::monitors::MonitoredRun {
    let imports = Imports::env(OutputBuffer::default());
    wasmprobe::monitors::run_monitored(module(f), &imports, f.entry, &args(f), monitors)
        .unwrap_or_else(|e| panic!("{}: {e}", f.name))
}

/// Runs `f` under a single monitor and returns its report.
pub fn report(f: &Fixture, spec: &str) -> wasmprobe::monitors::Report {
    let mut ms = vec![wasmprobe::monitors::create(spec).unwrap()];
    run_with(f, &mut ms).reports.remove(0)
}

/// `(func, pc, label, value)` of every row.
pub fn rows(r: &wasmprobe::monitors::Report) -> Vec<(Option<u32>, Option<u32>, String, String)> {
    r.rows
        .iter()
        .map(|r| (r.func, r.pc, r.label.clone(), r.value.clone()))
        .collect()
}
