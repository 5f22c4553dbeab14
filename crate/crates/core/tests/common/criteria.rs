//! Checks shared by the regular test targets and the acceptance report. Each
//! returns a one-line summary on success and a description of the first
//! failure otherwise.

use std::cell::{Cell, RefCell};
use std::rc::Rc;
use std::time::Instant;

use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRunner};
use wasmprobe::bench::{self, Program, Variant};
use wasmprobe::{
    disasm, monitors, opcodes, AccessError, CodeLocation, Imports, Instance, InstrumentError, Module,
    OutputBuffer, Probe, Value,
};
use wasmprobe_testkit::{fixture, fixtures, hot_loop, Fixture, HOT_LOOP_ITERATIONS};

use super::{args, finish, instance, module, oracle_final, try_finish, val};

pub type Check = Result<String, String>;

fn runner(cases: u32) -> TestRunner {
    TestRunner::new(Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    })
}

/// Every instruction boundary of every defined function.
pub fn boundaries(m: &Module) -> Vec<CodeLocation> {
    (m.num_imported_funcs()..m.num_funcs())
        .flat_map(|f| {
            disasm::instruction_boundaries(m.func(f).unwrap())
                .into_iter()
                .map(move |pc| m.location(f, pc))
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Dynamic probe consistency.

/// A randomized probe-manipulation scenario at one site. Probes are numbered
/// `0..PROBES`; every probe logs its own firing and may, at given events,
/// insert or remove probes at the same site.
#[derive(Debug, Clone)]
pub struct Scenario {
    site: usize,
    global: bool,
    /// Applied in order before the run: `(insert?, probe)`.
    pre: Vec<(bool, usize)>,
    /// `(actor, event, insert?, target)`.
    actions: Vec<(usize, u32, bool, usize)>,
}

const PROBES: usize = 8;

struct Site {
    fixture: Fixture,
    module: Rc<Module>,
    loc: CodeLocation,
    /// Number of firing events at the site.
    events: u32,
    /// Number of instructions the fixture executes.
    total: u32,
}

fn sites() -> Vec<Site> {
    let mut out = Vec::new();
    for name in ["loop3", "nested_loops", "calls", "branches", "factorial", "loop_entry"] {
        let f = fixture(name);
        let t = f.oracle();
        let m = module(&f);
        for &(func, pc) in &t.all_pcs {
            let n = t.count(func, pc);
            if n >= 2 {
                out.push(Site {
                    fixture: f.clone(),
                    module: m.clone(),
                    loc: m.location(func, pc),
                    events: n as u32,
                    total: t.total as u32,
                });
            }
        }
    }
    out
}

/// The expected firing log `(event, probe)` under snapshot semantics.
fn model(s: &Scenario, events: u32) -> Vec<(u32, usize)> {
    let mut list: Vec<usize> = Vec::new();
    let apply = |list: &mut Vec<usize>, insert: bool, p: usize| {
        let at = list.iter().position(|&q| q == p);
        match (insert, at) {
            (true, None) => list.push(p),
            (false, Some(i)) => {
                list.remove(i);
            }
            _ => {}
        }
    };
    for &(ins, p) in &s.pre {
        apply(&mut list, ins, p);
    }
    let mut log = Vec::new();
    for e in 1..=events {
        let snapshot = list.clone();
        for id in snapshot {
            log.push((e, id));
            for &(actor, at, ins, target) in &s.actions {
                if actor == id && at == e {
                    apply(&mut list, ins, target);
                }
            }
        }
    }
    log
}

/// Runs the scenario on the engine and returns the observed firing log.
fn observe(s: &Scenario, site: &Site) -> Result<Vec<(u32, usize)>, String> {
    let (mut inst, out) = instance_of(site);
    let event = Rc::new(Cell::new(0u32));
    let log: Rc<RefCell<Vec<(u32, usize)>>> = Rc::default();
    let registry: Rc<RefCell<Vec<Probe>>> = Rc::default();
    let (loc, global) = (site.loc, s.global);
    let install = move |instr: &mut wasmprobe::Instrumentation, p: Probe| match global {
        true => instr.insert_global_probe(p),
        false => instr.insert_probe(loc, p),
    };
    let uninstall = move |instr: &mut wasmprobe::Instrumentation, p: &Probe| match global {
        true => instr.remove_global_probe(p),
        false => instr.remove_probe(loc, p),
    };
    for id in 0..PROBES {
        let (event, log, registry) = (event.clone(), log.clone(), registry.clone());
        let mine: Vec<(u32, bool, usize)> = s
            .actions
            .iter()
            .filter(|a| a.0 == id)
            .map(|&(_, e, ins, t)| (e, ins, t))
            .collect();
        registry.clone().borrow_mut().push(Probe::from_fn(move |ctx| {
            let e = event.get();
            log.borrow_mut().push((e, id));
            for &(at, ins, target) in &mine {
                if at != e {
                    continue;
                }
                let p = registry.borrow()[target].clone();
                let r = match ins {
                    true => install(ctx.instrumentation(), p),
                    false => uninstall(ctx.instrumentation(), &p),
                };
                match r {
                    Ok(()) | Err(InstrumentError::DuplicateInsert(_)) | Err(InstrumentError::NotInstalled(_)) => {}
                    Err(e) => return Err(e.into()),
                }
            }
            Ok(())
        }));
    }
    // The sentinel is installed first and never removed, so it opens every
    // event.
    let ev = event.clone();
    let sentinel = Probe::from_fn(move |_| {
        ev.set(ev.get() + 1);
        Ok(())
    });
    let instr = inst.instrumentation_mut();
    install(instr, sentinel).map_err(|e| e.to_string())?;
    for &(ins, p) in &s.pre {
        let probe = registry.borrow()[p].clone();
        let _ = match ins {
            true => install(instr, probe),
            false => uninstall(instr, &probe),
        };
    }
    let fin = finish(&site.fixture, &mut inst, &out);
    let plain = {
        let (mut i, o) = instance_of(site);
        finish(&site.fixture, &mut i, &o)
    };
    if fin != plain {
        return Err(format!("{}: probes changed the program's behavior", site.fixture.name));
    }
    let observed = log.borrow().clone();
    Ok(observed)
}

fn instance_of(site: &Site) -> (Instance, OutputBuffer) {
    let out = OutputBuffer::default();
    let inst = Instance::new_unstarted(site.module.clone(), &Imports::env(out.clone())).unwrap();
    (inst, out)
}

fn probe_id() -> impl Strategy<Value = usize> {
    0..PROBES
}

/// Which aspect a scenario generator stresses.
#[derive(Clone, Copy, Debug)]
pub enum Property {
    /// Installation order, with removals and re-insertions before the run.
    InsertionOrder,
    /// Probes inserting probes at the event that is firing.
    DeferredInsert,
    /// Probes removing probes (themselves included) at the event that is
    /// firing.
    DeferredRemoval,
}

fn scenarios(n_sites: usize, prop: Property) -> BoxedStrategy<Scenario> {
    let site = (0..n_sites, any::<bool>());
    match prop {
        Property::InsertionOrder => (site, prop::collection::vec((prop::bool::weighted(0.75), probe_id()), 1..24))
            .prop_map(|((site, global), pre)| Scenario {
                site,
                global,
                pre,
                actions: vec![],
            })
            .boxed(),
        Property::DeferredInsert | Property::DeferredRemoval => {
            let insert = matches!(prop, Property::DeferredInsert);
            let pre = prop::collection::vec(probe_id(), 1..PROBES).prop_map(|v| v.into_iter().map(|p| (true, p)).collect());
            let actions = prop::collection::vec((probe_id(), 1u32..4, probe_id()), 1..12)
                .prop_map(move |v| v.into_iter().map(|(a, e, t)| (a, e, insert, t)).collect());
            (site, pre, actions)
                .prop_map(|((site, global), pre, actions)| Scenario {
                    site,
                    global,
                    pre,
                    actions,
                })
                .boxed()
        }
    }
}

pub fn consistency(prop: Property, cases: u32) -> Check {
    let sites = sites();
    let start = Instant::now();
    let ran = Cell::new(0u32);
    runner(cases)
        .run(&scenarios(sites.len(), prop), |s| {
            ran.set(ran.get() + 1);
            let site = &sites[s.site];
            let events = if s.global { site.total } else { site.events };
            let want = model(&s, events);
            let got = observe(&s, site).map_err(TestCaseError::fail)?;
            prop_assert_eq!(got, want, "site {} of {}", site.loc, site.fixture.name);
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok(format!("{} scenarios in {:.1}s", ran.get(), start.elapsed().as_secs_f64()))
}

// ---------------------------------------------------------------------------
// Non-intrusiveness and oracle equivalence.

pub fn non_intrusiveness() -> Check {
    let all = fixtures();
    for f in &all {
        let (mut plain, out) = instance(f);
        let plain = finish(f, &mut plain, &out);

        let (mut local, out) = instance(f);
        let m = local.module().clone();
        for loc in boundaries(&m) {
            local.instrumentation_mut().insert_probe(loc, Probe::empty()).unwrap();
        }
        let local = finish(f, &mut local, &out);

        let (mut global, out) = instance(f);
        global.instrumentation_mut().insert_global_probe(Probe::empty()).unwrap();
        let global = finish(f, &mut global, &out);

        if local != plain {
            return Err(format!("{}: empty local probes changed the final state", f.name));
        }
        if global != plain {
            return Err(format!("{}: an empty global probe changed the final state", f.name));
        }
    }
    Ok(format!("{} fixtures identical across 3 configurations", all.len()))
}

/// The located rows of a report as `(func, pc, label, value)`.
fn located(r: &monitors::Report) -> Vec<(u32, u32, String, String)> {
    r.rows
        .iter()
        .filter_map(|r| Some((r.func?, r.pc?, r.label.clone(), r.value.clone())))
        .collect()
}

pub fn oracle_equivalence() -> Check {
    use wasmprobe_testkit::oracle::BranchTally;
    let all = fixtures();
    for f in &all {
        let t = f.oracle();
        let report = |spec: &str| super::report(f, spec);
        let counts = |r: &monitors::Report| -> Vec<(u32, u32, String)> {
            located(r).into_iter().map(|(a, b, _, v)| (a, b, v)).collect()
        };
        let hot: Vec<_> = t.all_pcs.iter().map(|&(a, p)| (a, p, t.count(a, p).to_string())).collect();
        for spec in ["hotness", "hotness:generic", "hotness:global"] {
            if counts(&report(spec)) != hot {
                return Err(format!("{}: {spec} differs from the oracle", f.name));
            }
        }
        let loops: Vec<_> = t.loop_headers.iter().map(|&(a, p)| (a, p, t.count(a, p).to_string())).collect();
        if counts(&report("loop")) != loops {
            return Err(format!("{}: loop differs from the oracle", f.name));
        }
        let mut branches = Vec::new();
        for (&(a, p), tally) in &t.branches {
            match tally {
                BranchTally::Cond { taken, not_taken } => {
                    branches.push((a, p, "taken".to_string(), taken.to_string()));
                    branches.push((a, p, "not-taken".to_string(), not_taken.to_string()));
                }
                BranchTally::Table(h) => {
                    for (i, n) in h.iter().enumerate() {
                        let label = if i + 1 == h.len() { "default".into() } else { format!("target[{i}]") };
                        branches.push((a, p, label, n.to_string()));
                    }
                }
            }
        }
        for spec in ["branch", "branch:global"] {
            if located(&report(spec)) != branches {
                return Err(format!("{}: {spec} differs from the oracle", f.name));
            }
        }
        let calls: Vec<_> = t
            .calls
            .iter()
            .map(|(&(a, p, c), n)| (a, p, format!("->{c}"), n.to_string()))
            .collect();
        if located(&report("calls")) != calls {
            return Err(format!("{}: calls differs from the oracle", f.name));
        }
        let covered = t.covered();
        let coverage: Vec<_> = t
            .all_pcs
            .iter()
            .map(|&(a, p)| (a, p, (covered.contains(&(a, p)) as u8).to_string()))
            .collect();
        if counts(&report("coverage")) != coverage {
            return Err(format!("{}: coverage differs from the oracle", f.name));
        }
    }
    Ok(format!("hotness(3 variants), loop, branch(2 variants), calls, coverage equal on {} fixtures", all.len()))
}

// ---------------------------------------------------------------------------
// Bytecode overwriting.

/// Applies `ops` random insert/remove toggles over all boundaries of a
/// fixture, checking the live opcode after every one, then removes the rest
/// and compares every body to the pristine code.
pub fn overwrite_restore(ops: usize, cases: u32) -> Check {
    let all = fixtures();
    let total = Cell::new(0usize);
    let strategy = (0..all.len(), prop::collection::vec((any::<u32>(), 0..3usize), ops));
    runner(cases)
        .run(&strategy, |(fi, seq)| {
            let f = &all[fi];
            let (mut inst, out) = instance(f);
            let m = inst.module().clone();
            let locs = boundaries(&m);
            let probes: Vec<[Probe; 3]> = locs.iter().map(|_| [Probe::empty(), Probe::empty(), Probe::empty()]).collect();
            let mut installed: Vec<Vec<usize>> = vec![Vec::new(); locs.len()];
            for (r, k) in seq {
                let i = r as usize % locs.len();
                let instr = inst.instrumentation_mut();
                if let Some(pos) = installed[i].iter().position(|&q| q == k) {
                    instr.remove_probe(locs[i], &probes[i][k]).map_err(|e| TestCaseError::fail(e.to_string()))?;
                    installed[i].remove(pos);
                } else {
                    instr.insert_probe(locs[i], probes[i][k].clone()).map_err(|e| TestCaseError::fail(e.to_string()))?;
                    installed[i].push(k);
                }
                let live = instr.live_opcode(locs[i]).unwrap();
                let orig = instr.original_opcode(locs[i]).unwrap();
                let want = if installed[i].is_empty() { orig } else { opcodes::PROBE };
                prop_assert_eq!(live, want, "{} at {}", f.name, locs[i]);
                let listed = instr.probes_at(locs[i]).unwrap();
                prop_assert_eq!(listed.len(), installed[i].len());
                for (p, &k) in listed.probes().iter().zip(&installed[i]) {
                    prop_assert!(p.same(&probes[i][k]), "probe order at {}", locs[i]);
                }
                total.set(total.get() + 1);
            }
            // The program still behaves with whatever is left installed.
            let probed = finish(f, &mut inst, &out);
            let (mut plain, o) = instance(f);
            prop_assert!(probed == finish(f, &mut plain, &o), "{}: behavior changed", f.name);
            for (i, ks) in installed.iter().enumerate() {
                for &k in ks {
                    inst.instrumentation_mut().remove_probe(locs[i], &probes[i][k]).unwrap();
                }
            }
            prop_assert!(!inst.instrumentation().has_probes());
            for func in m.num_imported_funcs()..m.num_funcs() {
                let live = inst.live_body(func).unwrap();
                prop_assert_eq!(live.as_slice(), m.func(func).unwrap().pristine_body(), "{} func {}", f.name, func);
            }
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok(format!("{} operations over {cases} sequences, all bodies pristine", total.get()))
}

// ---------------------------------------------------------------------------
// Dangling accessors.

/// A call tree: `parents[i]` is the caller of function `i` (`i >= 1`).
pub fn call_tree_wat(parents: &[usize]) -> String {
    let n = parents.len() + 1;
    let mut wat = String::from("(module\n");
    for i in 0..n {
        let export = if i == 0 { " (export \"main\")" } else { "" };
        wat.push_str(&format!("  (func $f{i}{export} (param i32) (result i32) (local i32)\n    local.get 0\n"));
        for (c, &p) in parents.iter().enumerate() {
            if p == i {
                let child = c + 1;
                wat.push_str(&format!(
                    "    local.get 0 i32.const {child} i32.add call $f{child} i32.add\n"
                ));
            }
        }
        wat.push_str("    local.tee 1)\n");
    }
    wat.push(')');
    wat
}

fn tree() -> impl Strategy<Value = (Vec<usize>, usize, i32)> {
    (1usize..12)
        .prop_flat_map(|n| {
            let parents: Vec<BoxedStrategy<usize>> = (1..=n).map(|i| (0..i).boxed()).collect();
            (parents, 1..=n, any::<i32>())
        })
}

pub fn dangling_accessor(trials: u32) -> Check {
    let stale_uses = Rc::new(Cell::new(0u64));
    let su = stale_uses.clone();
    runner(trials)
        .run(&tree(), move |(parents, target, arg)| {
            let wasm = wat::parse_str(call_tree_wat(&parents)).unwrap();
            let m = Rc::new(Module::load(&wasm).unwrap());
            let mut inst = Instance::new(m.clone(), &Imports::new()).unwrap();
            let expected = Instance::new(m.clone(), &Imports::new())
                .unwrap()
                .invoke("main", &[Value::I32(arg)])
                .unwrap();

            let target = target as u32;
            let end_pc = m.func(target).unwrap().body_len() - 1;
            let captured: Rc<RefCell<Option<wasmprobe::FrameAccessor>>> = Rc::default();
            let errors: Rc<RefCell<Vec<String>>> = Rc::default();
            let returned = Rc::new(Cell::new(false));
            let checker = {
                let (captured, errors, returned, su) = (captured.clone(), errors.clone(), returned.clone(), su.clone());
                Probe::from_fn(move |ctx| {
                    let a = captured.borrow().clone().unwrap();
                    let loc = ctx.location();
                    if returned.get() {
                        let r1 = a.get_local(ctx, 0);
                        let r2 = a.set_local(ctx, 1, Value::I32(-1));
                        let r3 = a.operands(ctx);
                        if r1 != Err(AccessError::StaleAccessor)
                            || r2 != Err(AccessError::StaleAccessor)
                            || r3 != Err(AccessError::StaleAccessor)
                        {
                            errors.borrow_mut().push(format!("accessor usable after return at {loc}"));
                        }
                        su.set(su.get() + 1);
                    } else {
                        match a.func_index(ctx) {
                            Ok(f) if f == target => {}
                            other => errors.borrow_mut().push(format!("live frame unreadable at {loc}: {other:?}")),
                        }
                    }
                    if loc.func == target && loc.pc == end_pc {
                        returned.set(true);
                    }
                    Ok(())
                })
            };
            let capture = {
                let captured = captured.clone();
                Probe::from_fn(move |ctx| {
                    *captured.borrow_mut() = Some(ctx.accessor());
                    ctx.instrumentation().insert_global_probe(checker.clone())?;
                    Ok(())
                })
            };
            let entry = m.location(target, 0);
            inst.instrumentation_mut().insert_probe(entry, capture.clone()).unwrap();
            let got = inst.invoke("main", &[Value::I32(arg)]).map_err(|e| TestCaseError::fail(e.to_string()))?;
            prop_assert_eq!(&got, &expected);
            let errs = errors.borrow().clone();
            prop_assert!(errs.is_empty(), "{:?}", errs);
            prop_assert!(returned.get());
            let a = captured.borrow().clone().unwrap();
            prop_assert!(!a.is_valid(&inst));
            prop_assert_eq!(a.get_local(&inst, 0), Err(AccessError::StaleAccessor));
            // No corruption: the instance keeps working.
            inst.instrumentation_mut().remove_all();
            prop_assert_eq!(inst.invoke("main", &[Value::I32(arg)]).unwrap(), expected);
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok(format!(
        "{trials} call trees, {} uses of stale accessors all rejected",
        stale_uses.get()
    ))
}

// ---------------------------------------------------------------------------
// Overheads.

fn hot_program_bench(variants: &[Variant], reps: usize) -> Result<bench::BenchTable, String> {
    let f = hot_loop(HOT_LOOP_ITERATIONS);
    let a = args(&f);
    let env = || Imports::env(OutputBuffer::default());
    let program = Program {
        module: module(&f),
        imports: &env,
        entry: f.entry,
        args: &a,
    };
    bench::bench(&program, variants, reps).map_err(|e| e.to_string())
}

pub fn zero_overhead() -> Check {
    let t0 = Instant::now();
    let table = hot_program_bench(&[Variant::Stripped], 7)?;
    let stripped = table.row(&Variant::Stripped).unwrap().median.as_secs_f64();
    let capable = table.baseline.median.as_secs_f64();
    let ratio = capable / stripped;
    let summary = format!(
        "probe-capable {:.1} ms vs stripped {:.1} ms, ratio {ratio:.3} ({:.0}s)",
        capable * 1e3,
        stripped * 1e3,
        t0.elapsed().as_secs_f64()
    );
    if ratio <= 1.05 {
        Ok(summary)
    } else {
        Err(summary)
    }
}

pub fn directional_overhead() -> Check {
    let t0 = Instant::now();
    let branch = |s: &str| Variant::Monitor(s.to_string());
    let table = hot_program_bench(&[branch("branch"), branch("branch:global")], 3)?;
    let b_secs = t0.elapsed().as_secs_f64();
    let t1 = Instant::now();
    let hot = hot_program_bench(&[branch("hotness"), branch("hotness:generic")], 3)?;
    let h_secs = t1.elapsed().as_secs_f64();

    let local = table.relative(&branch("branch")).unwrap();
    let global = table.relative(&branch("branch:global")).unwrap();
    let counter = hot.relative(&branch("hotness")).unwrap();
    let generic = hot.relative(&branch("hotness:generic")).unwrap();
    let summary = format!(
        "branch local {local:.2}x, global {global:.2}x (separation {:.2}); hotness counter {counter:.2}x < generic {generic:.2}x; benches {b_secs:.0}s, {h_secs:.0}s",
        global / local
    );
    if global >= 2.0 * local && counter < generic && b_secs < 120.0 && h_secs < 120.0 {
        Ok(summary)
    } else {
        Err(summary)
    }
}

// ---------------------------------------------------------------------------
// Composability.

pub fn all_monitors() -> Vec<Box<dyn monitors::Monitor>> {
    use wasmprobe::monitors::debug::{Resume, Scripted};
    let mut v: Vec<Box<dyn monitors::Monitor>> = ["trace", "coverage", "loop", "hotness", "branch", "memory", "calls"]
        .iter()
        .map(|s| monitors::create(s).unwrap())
        .collect();
    v.push(Box::new(monitors::DebugMonitor::new(Box::new(Scripted::new(vec![
        Resume::Step,
        Resume::Step,
        Resume::Continue,
    ])))));
    v
}

pub fn composability() -> Check {
    let all = fixtures();
    for f in &all {
        let together = super::run_with(f, &mut all_monitors()).reports;
        if together.len() != 8 {
            return Err(format!("{}: expected 8 reports", f.name));
        }
        for (i, m) in all_monitors().into_iter().enumerate() {
            let solo = super::run_with(f, &mut [m]).reports.remove(0);
            if together[i] != solo {
                return Err(format!("{}: {} report differs when composed", f.name, solo.monitor));
            }
        }
    }
    Ok(format!("8 monitors composed on {} fixtures", all.len()))
}

// ---------------------------------------------------------------------------
// Frame modification.

const FORCE_BUDGET: u64 = 1_000_000;

/// Forces the top operand at one occurrence of one instruction through a
/// probe's `set_operand`, and compares the final state to the oracle run
/// with the same value hard-coded.
pub fn force_and_compare(f: &Fixture, func: u32, pc: u32, nth: u64, bits: u64) -> Result<bool, String> {
    let (mut inst, out) = instance(f);
    let m = inst.module().clone();
    let seen = Rc::new(Cell::new(0u64));
    let forced: Rc<Cell<Option<Value>>> = Rc::default();
    let (s, fo) = (seen.clone(), forced.clone());
    let probe = Probe::from_fn(move |ctx| {
        s.set(s.get() + 1);
        if s.get() == nth {
            let a = ctx.accessor();
            let ty = a.get_operand(ctx, 0)?.ty();
            let v = Value::from_bits(ty, bits);
            a.set_operand(ctx, 0, v)?;
            fo.set(Some(v));
        }
        Ok(())
    });
    inst.instrumentation_mut().insert_probe(m.location(func, pc), probe).map_err(|e| e.to_string())?;
    // A forced condition may send a countdown loop past zero; such runs are
    // cut short and not compared.
    let budget = Cell::new(FORCE_BUDGET);
    inst.instrumentation_mut()
        .insert_global_probe(Probe::from_fn(move |_| match budget.get() {
            0 => Err(wasmprobe::MonitorError("instruction budget exhausted".into())),
            n => {
                budget.set(n - 1);
                Ok(())
            }
        }))
        .map_err(|e| e.to_string())?;
    let got = match try_finish(f, &mut inst, &out) {
        Ok(got) => got,
        Err(wasmprobe::ExecError::Monitor(_)) => return Ok(false),
        Err(e) => return Err(format!("{}: {e}", f.name)),
    };
    let Some(v) = forced.get() else {
        return Ok(false);
    };
    let mut cfg = wasmprobe_testkit::oracle::Config::new();
    cfg.force_top.insert((func, pc, nth), val(v));
    let want = oracle_final(&f.oracle_with(&cfg));
    if got != want {
        return Err(format!("{} {func}:{pc} occurrence {nth} forced to {v}: {got:?} != {want:?}", f.name));
    }
    Ok(true)
}

pub fn frame_modification(cases: u32) -> Check {
    // The documented case: leave loop3 after its first iteration.
    let loop3 = fixture("loop3");
    match force_and_compare(&loop3, 0, 13, 1, 0) {
        Ok(true) => {}
        Ok(false) => return Err("loop3 br_if never reached".into()),
        Err(e) => return Err(e),
    }
    // Random conditions at every conditional branch of the corpus.
    let mut sites = Vec::new();
    for f in fixtures() {
        if f.name == "hot_loop" {
            continue;
        }
        let m = module(&f);
        let t = f.oracle();
        for (&(func, pc), _) in &t.branches {
            let op = disasm::instruction_at(m.func(func).unwrap(), pc).unwrap().opcode;
            if op != opcodes::BR {
                sites.push((f.clone(), func, pc, t.count(func, pc)));
            }
        }
    }
    let forced = Cell::new(0u32);
    let strategy = (0..sites.len(), any::<u64>(), prop::sample::select(vec![0u64, 1, 2, 3, 7, u64::MAX]));
    runner(cases)
        .run(&strategy, |(i, r, bits)| {
            let (f, func, pc, n) = &sites[i];
            let nth = 1 + r % (*n).max(1);
            match force_and_compare(f, *func, *pc, nth, bits) {
                Ok(true) => forced.set(forced.get() + 1),
                Ok(false) => {}
                Err(e) => return Err(TestCaseError::fail(e)),
            }
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    if forced.get() < cases / 2 {
        return Err(format!("only {} of {cases} forced runs completed", forced.get()));
    }
    Ok(format!("loop3 exits early; {} random forced branch conditions match the oracle", forced.get()))
}
