mod common;

use std::cell::{Cell, RefCell};
use std::rc::Rc;

use common::criteria::{self, Property};
use wasmprobe::instrument::library::{after_instruction, instrument_entry_exit};
use wasmprobe::{
    accessors_allocated, CountProbe, DispatchMode, Imports, Instance, InstrumentError, Module, Probe,
    Value,
};
use wasmprobe_testkit::{fixture, fixtures};

fn check(r: criteria::Check) {
    match r {
        Ok(summary) => println!("{summary}"),
        Err(e) => panic!("{e}"),
    }
}

fn load(wat: &str) -> Rc<Module> {
    Rc::new(Module::load(&wat::parse_str(wat).unwrap()).unwrap())
}

#[test]
fn insertion_order_is_firing_order() {
    check(criteria::consistency(Property::InsertionOrder, 1000));
}

#[test]
fn inserts_during_an_event_are_deferred() {
    check(criteria::consistency(Property::DeferredInsert, 1000));
}

#[test]
fn removals_during_an_event_are_deferred() {
    check(criteria::consistency(Property::DeferredRemoval, 1000));
}

#[test]
fn empty_probes_are_not_intrusive() {
    check(criteria::non_intrusiveness());
}

#[test]
fn overwrite_and_restore() {
    check(criteria::overwrite_restore(10_000, 4));
}

#[test]
fn stale_accessors_are_rejected() {
    check(criteria::dangling_accessor(1000));
}

#[test]
fn forced_operands_match_the_oracle() {
    check(criteria::frame_modification(300));
}

#[test]
fn probes_without_accessor_requests_allocate_none() {
    let m = load(
        r#"(module (func (export "main") (param i32)
            (loop $l (br_if $l (local.tee 0 (i32.sub (local.get 0) (i32.const 1)))))))"#,
    );
    let mut inst = Instance::new(m.clone(), &Imports::new()).unwrap();
    let br_if = wasmprobe::disasm::disassemble(m.func(0).unwrap())
        .into_iter()
        .find(|i| i.opcode == wasmprobe::opcodes::BR_IF)
        .unwrap();
    let site = m.location(0, br_if.pc);
    let fired = Rc::new(Cell::new(0u64));
    let f = fired.clone();
    let generic = Probe::from_fn(move |ctx| {
        f.set(f.get() + 1);
        let _ = ctx.location();
        Ok(())
    });
    let tops = Rc::new(Cell::new(0u64));
    let t = tops.clone();
    let operand = Probe::operand_fn(move |_, v| t.set(t.get() + u64::from(v.as_i32().is_some())));
    let counter = CountProbe::new();
    let instr = inst.instrumentation_mut();
    instr.insert_probe(site, generic).unwrap();
    instr.insert_probe(site, operand).unwrap();
    instr.insert_probe(site, counter.clone().into()).unwrap();
    let before = accessors_allocated();
    inst.invoke("main", &[Value::I32(1_000_000)]).unwrap();
    assert_eq!(fired.get(), 1_000_000);
    assert_eq!(tops.get(), 1_000_000);
    assert_eq!(counter.count(), 1_000_000);
    assert_eq!(accessors_allocated(), before);
}

#[test]
fn one_accessor_per_frame() {
    let f = fixture("loop3");
    let (mut inst, _) = common::instance(&f);
    let m = inst.module().clone();
    let seen: Rc<RefCell<Vec<wasmprobe::FrameAccessor>>> = Rc::default();
    let s = seen.clone();
    inst.instrumentation_mut()
        .insert_global_probe(Probe::from_fn(move |ctx| {
            s.borrow_mut().push(ctx.accessor());
            Ok(())
        }))
        .unwrap();
    let before = accessors_allocated();
    inst.invoke("main", &[]).unwrap();
    assert_eq!(accessors_allocated() - before, 1);
    let seen = seen.borrow();
    assert!(seen.windows(2).all(|w| w[0].ptr_eq(&w[1])));
    assert!(!seen[0].is_valid(&inst));
    let _ = m;
}

#[test]
fn frame_ids_are_unique_over_ten_million_frames() {
    let m = load(
        r#"(module
            (func $leaf (result i32) i32.const 1)
            (func (export "main") (param i32) (result i32) (local i32)
              (loop $l
                (local.set 1 (i32.add (local.get 1) (call $leaf)))
                (br_if $l (local.tee 0 (i32.sub (local.get 0) (i32.const 1)))))
              local.get 1))"#,
    );
    let mut inst = Instance::new(m.clone(), &Imports::new()).unwrap();
    let last = Rc::new(Cell::new(None::<u64>));
    let ok = Rc::new(Cell::new(true));
    let (l, o) = (last.clone(), ok.clone());
    inst.instrumentation_mut()
        .insert_probe(
            m.location(0, 0),
            Probe::from_fn(move |ctx| {
                let id = ctx.accessor().frame_id();
                if l.get().is_some_and(|prev| id <= prev) {
                    o.set(false);
                }
                l.set(Some(id));
                Ok(())
            }),
        )
        .unwrap();
    let n = 10_000_000;
    assert_eq!(inst.invoke("main", &[Value::I32(n)]).unwrap(), vec![Value::I32(n)]);
    // Strictly increasing ids are pairwise distinct.
    assert!(ok.get());
}

#[test]
fn frame_operand_count_matches_validator_depth() {
    for f in fixtures() {
        let (mut inst, out) = common::instance(&f);
        let m = inst.module().clone();
        let bad: Rc<RefCell<Vec<String>>> = Rc::default();
        let b = bad.clone();
        inst.instrumentation_mut()
            .insert_global_probe(Probe::from_fn(move |ctx| {
                let loc = ctx.location();
                let a = ctx.accessor();
                let n = a.num_operands(ctx)?;
                let want = m.func(loc.func).unwrap().sidetable().operand_depth(loc.pc);
                if want.is_some_and(|w| w != n) {
                    b.borrow_mut().push(format!("{loc}: {n} vs {want:?}"));
                }
                Ok(())
            }))
            .unwrap();
        common::finish(&f, &mut inst, &out);
        assert!(bad.borrow().is_empty(), "{}: {:?}", f.name, bad.borrow());
    }
}

#[test]
fn dispatch_mode_follows_global_probe_count() {
    let f = fixture("loop3");
    let (mut inst, _) = common::instance(&f);
    let instr = inst.instrumentation_mut();
    let (a, b) = (Probe::empty(), Probe::empty());
    assert_eq!(instr.dispatch_mode(), DispatchMode::Normal);
    instr.insert_global_probe(a.clone()).unwrap();
    instr.insert_global_probe(b.clone()).unwrap();
    assert_eq!(instr.dispatch_mode(), DispatchMode::Global);
    assert!(matches!(instr.insert_global_probe(a.clone()), Err(InstrumentError::DuplicateInsert(_))));
    instr.remove_global_probe(&a).unwrap();
    assert_eq!(instr.dispatch_mode(), DispatchMode::Global);
    instr.remove_global_probe(&b).unwrap();
    assert_eq!(instr.dispatch_mode(), DispatchMode::Normal);
    assert!(instr.remove_global_probe(&b).is_err());
}

#[test]
fn global_probe_inserted_mid_run_fires_at_the_next_instruction() {
    let f = fixture("loop3");
    let (mut inst, _) = common::instance(&f);
    let m = inst.module().clone();
    let log: Rc<RefCell<Vec<u32>>> = Rc::default();
    let l = log.clone();
    let global = Probe::from_fn(move |ctx| {
        l.borrow_mut().push(ctx.location().pc);
        Ok(())
    });
    let once = Cell::new(false);
    let g = global.clone();
    inst.instrumentation_mut()
        .insert_probe(
            m.location(0, 13),
            Probe::from_fn(move |ctx| {
                if !once.replace(true) {
                    ctx.instrumentation().insert_global_probe(g.clone())?;
                }
                Ok(())
            }),
        )
        .unwrap();
    inst.invoke("main", &[]).unwrap();
    // br_if at 13 was taken back to the loop body at 6.
    assert_eq!(log.borrow()[0], 6);
}

#[test]
fn original_opcode_and_invalid_locations() {
    let f = fixture("loop3");
    let (mut inst, _) = common::instance(&f);
    let m = inst.module().clone();
    let br_if = m.location(0, 13);
    let instr = inst.instrumentation_mut();
    assert_eq!(instr.original_opcode(br_if).unwrap(), 0x0D);
    instr.insert_probe(br_if, Probe::empty()).unwrap();
    assert_eq!(instr.live_opcode(br_if).unwrap(), 0xFF);
    assert_eq!(instr.original_opcode(br_if).unwrap(), 0x0D);
    // Inside the LEB immediate of an i32.const.
    let inside = m.location(0, 1);
    assert!(matches!(instr.original_opcode(inside), Err(InstrumentError::InvalidLocation(_))));
    assert!(matches!(
        instr.insert_probe(inside, Probe::empty()),
        Err(InstrumentError::InvalidLocation(_))
    ));
    assert!(instr.insert_probe(m.location(7, 0), Probe::empty()).is_err());
}

#[test]
fn entry_exit_on_recursion_and_loop_at_entry() {
    for (name, func, frames) in [("factorial", 0, 4u64), ("loop_entry", 0, 1)] {
        let f = fixture(name);
        let t = f.oracle();
        let (mut inst, out) = common::instance(&f);
        let (entries, exits) = (Rc::new(Cell::new(0u64)), Rc::new(Cell::new(0u64)));
        let depth_ok = Rc::new(Cell::new(true));
        let (e, x, d) = (entries.clone(), exits.clone(), depth_ok.clone());
        let e2 = entries.clone();
        instrument_entry_exit(
            inst.instrumentation_mut(),
            func,
            Rc::new(move |_| {
                e.set(e.get() + 1);
                Ok(())
            }),
            Rc::new(move |_| {
                x.set(x.get() + 1);
                // Exits never outnumber entries.
                if x.get() > e2.get() {
                    d.set(false);
                }
                Ok(())
            }),
        )
        .unwrap();
        common::finish(&f, &mut inst, &out);
        let oracle_entries = t
            .frame_events
            .iter()
            .filter(|ev| matches!(ev, wasmprobe_testkit::oracle::FrameEvent::Entry(g) if *g == func))
            .count() as u64;
        assert_eq!(entries.get(), frames, "{name}");
        assert_eq!(entries.get(), oracle_entries, "{name}");
        assert_eq!(exits.get(), frames, "{name}");
        assert!(depth_ok.get());
    }
}

#[test]
fn entry_exit_skips_exit_on_trap_and_can_be_removed() {
    let f = fixture("trap_stack");
    let (mut inst, out) = common::instance(&f);
    let m = inst.module().clone();
    let (entries, exits) = (Rc::new(Cell::new(0u64)), Rc::new(Cell::new(0u64)));
    let (e, x) = (entries.clone(), exits.clone());
    let hooks = instrument_entry_exit(
        inst.instrumentation_mut(),
        0,
        Rc::new(move |_| {
            e.set(e.get() + 1);
            Ok(())
        }),
        Rc::new(move |_| {
            x.set(x.get() + 1);
            Ok(())
        }),
    )
    .unwrap();
    let r = common::finish(&f, &mut inst, &out);
    assert!(r.outcome.is_err());
    assert!(entries.get() > 1000);
    assert_eq!(exits.get(), 0);
    hooks.remove(inst.instrumentation_mut()).unwrap();
    assert!(!inst.instrumentation().has_probes());
    for func in m.num_imported_funcs()..m.num_funcs() {
        assert_eq!(inst.live_body(func).unwrap(), m.func(func).unwrap().pristine_body());
    }
}

#[test]
fn after_instruction_fires_at_the_next_executed_instruction() {
    let f = fixture("loop3");
    let (mut inst, _) = common::instance(&f);
    let m = inst.module().clone();
    let log: Rc<RefCell<Vec<u32>>> = Rc::default();
    let l = log.clone();
    after_instruction(
        inst.instrumentation_mut(),
        m.location(0, 13),
        Probe::from_fn(move |ctx| {
            l.borrow_mut().push(ctx.location().pc);
            Ok(())
        }),
    )
    .unwrap();
    inst.invoke("main", &[]).unwrap();
    // Taken twice back to the body at 6, then falls through to the loop's
    // end at 15.
    assert_eq!(*log.borrow(), vec![6, 6, 15]);
    assert_eq!(inst.instrumentation().dispatch_mode(), DispatchMode::Normal);
}

#[test]
fn after_instruction_on_a_call_fires_in_the_callee() {
    let f = fixture("calls");
    let t = f.oracle();
    let (mut inst, out) = common::instance(&f);
    let m = inst.module().clone();
    let (&(func, pc, callee), n) = t.calls.iter().next().unwrap();
    let log: Rc<RefCell<Vec<(u32, u32)>>> = Rc::default();
    let l = log.clone();
    after_instruction(
        inst.instrumentation_mut(),
        m.location(func, pc),
        Probe::from_fn(move |ctx| {
            let loc = ctx.location();
            l.borrow_mut().push((loc.func, loc.pc));
            Ok(())
        }),
    )
    .unwrap();
    common::finish(&f, &mut inst, &out);
    assert_eq!(log.borrow().len() as u64, *n);
    assert!(log.borrow().iter().all(|&l| l == (callee, 0)));
}

#[test]
fn panicking_probe_becomes_a_monitor_error() {
    let f = fixture("loop3");
    let (mut inst, _) = common::instance(&f);
    let m = inst.module().clone();
    inst.instrumentation_mut()
        .insert_probe(m.location(0, 6), Probe::from_fn(|_| panic!("boom")))
        .unwrap();
    let r = inst.invoke("main", &[]);
    assert!(matches!(r, Err(wasmprobe::ExecError::Monitor(ref e)) if e.0.contains("boom")), "{r:?}");
    // The instance is usable afterwards.
    inst.instrumentation_mut().remove_all();
    assert_eq!(inst.invoke("main", &[]).unwrap(), vec![]);
}
