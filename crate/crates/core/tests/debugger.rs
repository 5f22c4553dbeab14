mod common;

use std::cell::RefCell;
use std::io::Cursor;
use std::rc::Rc;

use wasmprobe::monitors::debug::{DebugError, DebugFrontend, Paused, Repl, Resume, Scripted};
use wasmprobe::monitors::{DebugMonitor, Monitor};
use wasmprobe::{ExecError, MonitorError, OutputBuffer, Value};
use wasmprobe_testkit::fixture;

type Log = Rc<RefCell<Vec<(u32, u32, &'static str)>>>;

/// A frontend driven by a closure that sees the pause number (from 0).
struct Driver<F> {
    f: F,
    n: usize,
    log: Log,
}

impl<F: FnMut(usize, &mut Paused<'_, '_>) -> Resume> DebugFrontend for Driver<F> {
    fn on_pause(&mut self, p: &mut Paused<'_, '_>) -> Result<Resume, MonitorError> {
        let loc = p.location();
        self.log.borrow_mut().push((loc.func, loc.pc, p.reason().name()));
        let r = (self.f)(self.n, p);
        self.n += 1;
        Ok(r)
    }
}

fn drive(
    name: &str,
    f: impl FnMut(usize, &mut Paused<'_, '_>) -> Resume + 'static,
) -> (Vec<(u32, u32, &'static str)>, Result<Vec<Value>, ExecError>, common::Final) {
    let fx = fixture(name);
    let log: Log = Rc::default();
    let driver = Driver { f, n: 0, log: log.clone() };
    let mut monitors: Vec<Box<dyn Monitor>> = vec![Box::new(DebugMonitor::new(Box::new(driver)))];
    let run = common::run_with(&fx, &mut monitors);
    let fin = common::Final {
        outcome: match &run.result {
            Ok(v) => Ok(v.clone()),
            Err(ExecError::Trap(t)) => Err((t.kind.name().to_string(), t.location.func, t.location.pc)),
            Err(_) => Err(("error".into(), 0, 0)),
        },
        memory: run.instance.memory().to_vec(),
        globals: run.instance.globals(),
        output: String::new(),
    };
    let log = log.borrow().clone();
    (log, run.result, fin)
}

#[test]
fn breakpoint_at_loop_header_pauses_three_times() {
    let (log, result, _) = drive("loop3", |n, p| {
        if n == 0 {
            p.set_breakpoint(0, 6).unwrap();
        }
        Resume::Continue
    });
    assert!(result.is_ok());
    assert_eq!(
        log,
        vec![(0, 0, "entry"), (0, 6, "breakpoint"), (0, 6, "breakpoint"), (0, 6, "breakpoint")]
    );
}

#[test]
fn step_at_entry_pauses_at_the_second_instruction() {
    let (log, _, _) = drive("loop3", |n, _| if n < 2 { Resume::Step } else { Resume::Continue });
    assert_eq!(log, vec![(0, 0, "entry"), (0, 2, "step"), (0, 4, "step")]);
}

#[test]
fn stepping_through_the_whole_program_visits_every_executed_instruction() {
    let t = fixture("calls").oracle();
    let (log, _, _) = drive("calls", |_, _| Resume::Step);
    assert_eq!(log.len() as u64, t.total);
}

#[test]
fn breakpoint_and_step_at_the_same_instruction_pause_once() {
    let (log, _, _) = drive("loop3", |n, p| {
        if n == 0 {
            p.set_breakpoint(0, 2).unwrap();
        }
        Resume::Step
    });
    assert_eq!(log[1], (0, 2, "step"));
    assert_ne!(log[2].1, 2);
}

#[test]
fn set_local_changes_the_iteration_count() {
    let (log, result, _) = drive("loop3", |n, p| {
        match n {
            0 => p.set_breakpoint(0, 6).unwrap(),
            1 => {
                assert_eq!(p.locals(0).unwrap(), vec![Value::I32(3)]);
                p.set_local(0, 0, Value::I32(1)).unwrap();
            }
            _ => {}
        }
        Resume::Continue
    });
    assert!(result.is_ok());
    assert_eq!(log.iter().filter(|e| e.2 == "breakpoint").count(), 1);
}

#[test]
fn set_operand_at_br_if_matches_the_oracle() {
    let (log, _, got) = drive("loop3", |n, p| {
        match n {
            0 => p.set_breakpoint(0, 13).unwrap(),
            1 => {
                assert_eq!(p.operands(0).unwrap(), vec![Value::I32(2)]);
                assert_eq!(p.instruction().mnemonic(), "br_if");
                p.set_operand(0, 0, Value::I32(0)).unwrap();
            }
            _ => {}
        }
        Resume::Continue
    });
    assert_eq!(log.len(), 2);
    let mut cfg = wasmprobe_testkit::oracle::Config::new();
    cfg.force_top.insert((0, 13, 1), wasmprobe_testkit::Val::I32(0));
    let want = common::oracle_final(&fixture("loop3").oracle_with(&cfg));
    assert_eq!(got.outcome, want.outcome);
    assert_eq!(got.memory, want.memory);
    assert_eq!(got.globals, want.globals);
}

#[test]
fn type_mismatch_and_bad_indices_are_errors() {
    let _ = drive("loop3", |n, p| {
        if n == 0 {
            assert!(matches!(p.set_local(0, 0, Value::I64(1)), Err(DebugError::Access(_))));
            assert!(p.set_local(0, 5, Value::I32(1)).is_err());
            assert!(matches!(p.locals(3), Err(DebugError::NoSuchFrame(3))));
            assert!(matches!(p.set_breakpoint(0, 1), Err(DebugError::InvalidLocation(0, 1))));
            assert!(p.set_breakpoint(9, 0).is_err());
            assert!(p.remove_breakpoint(0, 6).is_err());
            assert!(p.disassemble(4).is_err());
        }
        Resume::Continue
    });
}

#[test]
fn stack_lists_frames_innermost_first() {
    let (_, result, _) = drive("factorial", |n, p| {
        if n == 0 {
            p.set_breakpoint(0, 0).unwrap();
        }
        if n == 4 {
            let stack = p.stack().unwrap();
            let funcs: Vec<u32> = stack.iter().map(|f| f.func).collect();
            assert_eq!(funcs, vec![0, 0, 0, 0, 1]);
            assert_eq!(stack[0].pc, 0);
            assert_eq!(stack[1].instruction, "call 0");
            assert_eq!(p.locals(0).unwrap(), vec![Value::I64(1)]);
            assert_eq!(p.locals(3).unwrap(), vec![Value::I64(4)]);
        }
        Resume::Continue
    });
    assert_eq!(result.unwrap(), vec![Value::I64(24)]);
}

#[test]
fn step_over_runs_calls_to_completion() {
    // main is function 2; find its first call.
    let module = common::module(&fixture("calls"));
    let call_pc = wasmprobe::disasm::disassemble(module.func(2).unwrap())
        .into_iter()
        .find(|i| i.opcode == wasmprobe::opcodes::CALL)
        .unwrap();
    let next = call_pc.next_pc();
    let (log, _, _) = drive("calls", move |n, p| match n {
        0 => {
            p.set_breakpoint(2, call_pc.pc).unwrap();
            Resume::Continue
        }
        1 => Resume::StepOver,
        _ => {
            p.remove_breakpoint(2, call_pc.pc).unwrap();
            Resume::Continue
        }
    });
    assert_eq!(log[1], (2, call_pc.pc, "breakpoint"));
    assert_eq!(log[2], (2, next, "step"));
    assert_eq!(log.len(), 3);
}

#[test]
fn watchpoint_pauses_after_each_change() {
    let (log, _, _) = drive("loop3", |n, p| {
        if n == 0 {
            assert_eq!(p.set_watchpoint(0, 0).unwrap(), 1);
        }
        Resume::Continue
    });
    // 0 -> 3 by local.set, then 2, 1, 0 by local.tee.
    let watch: Vec<_> = log.iter().filter(|e| e.2 == "watchpoint").collect();
    assert_eq!(watch.len(), 4);
    // Detected at the instruction following the write.
    assert_eq!(watch[0].1, 4);
}

#[test]
fn abort_stops_the_program() {
    let (_, result, _) = drive("loop3", |_, _| Resume::Abort);
    assert!(matches!(result, Err(ExecError::Monitor(_))));
}

#[test]
fn report_counts_pauses_by_reason() {
    let mut monitors: Vec<Box<dyn Monitor>> =
        vec![Box::new(DebugMonitor::new(Box::new(Scripted::new(vec![Resume::Step, Resume::Step]))))];
    let run = common::run_with(&fixture("loop3"), &mut monitors);
    let rows: Vec<(String, String)> = run.reports[0].rows.iter().map(|r| (r.label.clone(), r.value.clone())).collect();
    assert_eq!(
        rows,
        vec![
            ("pauses".to_string(), "3".to_string()),
            ("pauses:entry".to_string(), "1".to_string()),
            ("pauses:step".to_string(), "2".to_string()),
        ]
    );
}

#[test]
fn repl_session() {
    let script = "help\nb 0:6\nbl\nc\nbt\nl\no\nset local 0 i32:1\nbogus\ndis\nc\n";
    let out = OutputBuffer::default();
    let repl = Repl::new(Box::new(Cursor::new(script.as_bytes().to_vec())), Box::new(out.clone()));
    let mut monitors: Vec<Box<dyn Monitor>> = vec![Box::new(DebugMonitor::new(Box::new(repl)))];
    let run = common::run_with(&fixture("loop3"), &mut monitors);
    assert!(run.result.is_ok());
    let text = out.contents();
    assert!(text.contains("breakpoint at 0:6"), "{text}");
    assert!(text.contains("#0 func 0 pc 6 local.get 0"), "{text}");
    assert!(text.contains("local[0] = i32:3"), "{text}");
    assert!(text.contains("unknown command"), "{text}");
    assert!(text.contains("=>     6  local.get 0"), "{text}");
    // The edited local ends the loop after one iteration.
    assert_eq!(run.reports[0].rows[0].value, "2");
}

#[test]
fn repl_eof_continues() {
    let out = OutputBuffer::default();
    let repl = Repl::new(Box::new(Cursor::new(Vec::new())), Box::new(out.clone()));
    let mut monitors: Vec<Box<dyn Monitor>> = vec![Box::new(DebugMonitor::new(Box::new(repl)))];
    let run = common::run_with(&fixture("calls"), &mut monitors);
    assert_eq!(run.result.unwrap(), vec![Value::I32(5)]);
}
