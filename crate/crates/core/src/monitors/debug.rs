//! Interactive bytecode-level debugger.
//!
//! Every debugger feature is a probe: breakpoints are local probes, single
//! step is a one-shot global probe, step-over is a one-shot local probe on
//! the instruction after a call that only triggers in the same frame, and
//! watchpoints are a global probe comparing watched locals after every
//! instruction. When one of them triggers, the engine is paused *inside the
//! probe*: the [`DebugFrontend`] gets a [`Paused`] handle for inspecting and
//! modifying frames and decides how to resume.

use std::cell::{Cell, RefCell};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::rc::{Rc, Weak};

use thiserror::Error;

use super::{Monitor, Report, Row};
use crate::disasm::{self, Instruction};
use crate::error::{AccessError, InstrumentError, MonitorError};
use crate::instrument::{FrameAccessor, Instrumentation, Probe, ProbeContext};
use crate::opcodes;
use crate::types::{CodeLocation, Value, ValueType};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PauseReason {
    /// Before the first instruction of the run.
    Entry,
    Breakpoint,
    Step,
    Watchpoint(u32),
    /// The frontend asked to interrupt a running program.
    Interrupt,
}

impl PauseReason {
    pub fn name(&self) -> &'static str {
        match self {
            PauseReason::Entry => "entry",
            PauseReason::Breakpoint => "breakpoint",
            PauseReason::Step => "step",
            PauseReason::Watchpoint(_) => "watchpoint",
            PauseReason::Interrupt => "pause",
        }
    }
}

/// How to continue after a pause.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Resume {
    Continue,
    /// Pause again at the next instruction executed, in any frame.
    Step,
    /// Like `Step`, but a call is run to completion: pause at the
    /// instruction after it, in the same frame.
    StepOver,
    /// Stop the program with a [`MonitorError`].
    Abort,
}

pub trait DebugFrontend {
    /// Called with the engine paused; returns how to resume.
    fn on_pause(&mut self, paused: &mut Paused<'_, '_>) -> Result<Resume, MonitorError>;

    /// Whether the frontend wants to be polled while the program runs. If
    /// so, [`DebugFrontend::poll`] is called at every function entry and
    /// loop header.
    fn can_interrupt(&self) -> bool {
        false
    }

    /// Lets a frontend act on a running program; returns whether to pause
    /// here.
    fn poll(&mut self, _running: &mut Running<'_, '_>) -> Result<bool, MonitorError> {
        Ok(false)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DebugError {
    #[error("invalid location: func {0} pc {1}")]
    InvalidLocation(u32, u32),
    #[error("no frame {0}")]
    NoSuchFrame(u32),
    #[error("no function {0}")]
    NoSuchFunction(u32),
    #[error("no watchpoint {0}")]
    NoSuchWatchpoint(u32),
    #[error("no breakpoint at func {0} pc {1}")]
    NoSuchBreakpoint(u32, u32),
    #[error("{0}")]
    BadValue(String),
    #[error(transparent)]
    Access(#[from] AccessError),
    #[error(transparent)]
    Instrument(#[from] InstrumentError),
}

/// One frame of the paused call stack.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FrameInfo {
    pub func: u32,
    pub pc: u32,
    pub instruction: String,
    pub frame_id: u64,
}

struct Watch {
    id: u32,
    frame: FrameAccessor,
    local: u32,
    last: Value,
}

/// A transient probe that can be disarmed even while its event is being
/// dispatched (a removed probe may still fire for the current event).
struct Transient {
    probe: Probe,
    armed: Rc<Cell<bool>>,
}

#[derive(Default)]
struct Stats {
    pauses: BTreeMap<&'static str, u64>,
}

struct State {
    this: Weak<State>,
    frontend: RefCell<Box<dyn DebugFrontend>>,
    breakpoints: RefCell<BTreeMap<(u32, u32), Probe>>,
    step: RefCell<Option<Transient>>,
    step_over: RefCell<Option<(CodeLocation, Transient)>>,
    watches: RefCell<Vec<Watch>>,
    watch_probe: RefCell<Option<Probe>>,
    next_watch: Cell<u32>,
    /// Reason handed to the breakpoint at the current instruction by a
    /// trigger that fired earlier in the same event.
    deferred: Cell<Option<PauseReason>>,
    stats: RefCell<Stats>,
}

impl State {
    fn has_breakpoint(&self, loc: CodeLocation) -> bool {
        self.breakpoints.borrow().contains_key(&(loc.func, loc.pc))
    }

    /// Pauses unless a breakpoint at this instruction is about to fire, in
    /// which case it pauses on the breakpoint's turn with `reason`.
    fn trigger(&self, ctx: &mut ProbeContext<'_>, reason: PauseReason) -> Result<(), MonitorError> {
        if self.has_breakpoint(ctx.location()) {
            self.deferred.set(Some(reason));
            return Ok(());
        }
        self.pause(ctx, reason)
    }

    fn cancel_steps(&self, instr: &mut Instrumentation) -> Result<(), MonitorError> {
        if let Some(t) = self.step.borrow_mut().take() {
            t.armed.set(false);
            instr.remove_global_probe(&t.probe)?;
        }
        if let Some((loc, t)) = self.step_over.borrow_mut().take() {
            t.armed.set(false);
            instr.remove_probe(loc, &t.probe)?;
        }
        Ok(())
    }

    fn pause(&self, ctx: &mut ProbeContext<'_>, reason: PauseReason) -> Result<(), MonitorError> {
        self.cancel_steps(ctx.instrumentation())?;
        *self.stats.borrow_mut().pauses.entry(reason.name()).or_insert(0) += 1;
        let resume = {
            let mut paused = Paused {
                ctx,
                state: self,
                reason,
            };
            self.frontend.borrow_mut().on_pause(&mut paused)?
        };
        match resume {
            Resume::Continue => {}
            Resume::Step => self.arm_step(ctx.instrumentation())?,
            Resume::StepOver => {
                let loc = ctx.location();
                let module = ctx.module().clone();
                let decl = module.func(loc.func).expect("defined function");
                let ins = disasm::instruction_at(decl, loc.pc).expect("boundary");
                if matches!(ins.opcode, opcodes::CALL | opcodes::CALL_INDIRECT) {
                    let frame = ctx.accessor();
                    self.arm_step_over(ctx.instrumentation(), module.location(loc.func, ins.next_pc()), frame)?;
                } else {
                    self.arm_step(ctx.instrumentation())?;
                }
            }
            Resume::Abort => return Err(MonitorError("execution aborted by debugger".into())),
        }
        self.sync_watch_probe(ctx.instrumentation())?;
        Ok(())
    }

    fn arm_step(&self, instr: &mut Instrumentation) -> Result<(), MonitorError> {
        self.arm_global_step(instr, PauseReason::Step)
    }

    fn arm_global_step(&self, instr: &mut Instrumentation, reason: PauseReason) -> Result<(), MonitorError> {
        let armed = Rc::new(Cell::new(true));
        let state = self.this.clone();
        let a = armed.clone();
        let probe = Probe::from_fn(move |ctx| {
            if !a.get() {
                return Ok(());
            }
            let Some(state) = state.upgrade() else {
                return Ok(());
            };
            state.cancel_steps(ctx.instrumentation())?;
            state.trigger(ctx, reason)
        });
        instr.insert_global_probe(probe.clone())?;
        *self.step.borrow_mut() = Some(Transient { probe, armed });
        Ok(())
    }

    fn arm_step_over(&self, instr: &mut Instrumentation, at: CodeLocation, frame: FrameAccessor) -> Result<(), MonitorError> {
        let armed = Rc::new(Cell::new(true));
        let state = self.this.clone();
        let a = armed.clone();
        let probe = Probe::from_fn(move |ctx| {
            if !a.get() || !ctx.accessor().ptr_eq(&frame) {
                return Ok(());
            }
            let Some(state) = state.upgrade() else {
                return Ok(());
            };
            state.cancel_steps(ctx.instrumentation())?;
            state.trigger(ctx, PauseReason::Step)
        });
        instr.insert_probe(at, probe.clone())?;
        *self.step_over.borrow_mut() = Some((at, Transient { probe, armed }));
        Ok(())
    }

    /// Installs the watch probe while there are watchpoints, removes it
    /// when there are none.
    fn sync_watch_probe(&self, instr: &mut Instrumentation) -> Result<(), MonitorError> {
        let want = !self.watches.borrow().is_empty();
        let mut slot = self.watch_probe.borrow_mut();
        match (want, slot.is_some()) {
            (true, false) => {
                let state = self.this.clone();
                let probe = Probe::from_fn(move |ctx| match state.upgrade() {
                    Some(s) => s.check_watches(ctx),
                    None => Ok(()),
                });
                instr.insert_global_probe(probe.clone())?;
                *slot = Some(probe);
            }
            (false, true) => {
                let probe = slot.take().expect("checked");
                instr.remove_global_probe(&probe)?;
            }
            _ => {}
        }
        Ok(())
    }

    fn check_watches(&self, ctx: &mut ProbeContext<'_>) -> Result<(), MonitorError> {
        let mut hit = None;
        {
            let mut watches = self.watches.borrow_mut();
            // Watchpoints on frames that have returned expire.
            watches.retain(|w| w.frame.is_valid(ctx));
            for w in watches.iter_mut() {
                let v = w.frame.get_local(ctx, w.local)?;
                if v != w.last {
                    w.last = v;
                    hit.get_or_insert(w.id);
                }
            }
        }
        match hit {
            Some(id) => self.trigger(ctx, PauseReason::Watchpoint(id)),
            None => {
                if self.watches.borrow().is_empty() {
                    self.sync_watch_probe(ctx.instrumentation())?;
                }
                Ok(())
            }
        }
    }

    fn insert_breakpoint(&self, instr: &mut Instrumentation, func: u32, pc: u32) -> Result<(), DebugError> {
        if self.breakpoints.borrow().contains_key(&(func, pc)) {
            return Ok(());
        }
        let module = instr.module().clone();
        if module.func(func).is_none() {
            return Err(DebugError::InvalidLocation(func, pc));
        }
        let loc = module.location(func, pc);
        let state = self.this.clone();
        let probe = Probe::from_fn(move |ctx| {
            let Some(state) = state.upgrade() else {
                return Ok(());
            };
            let reason = state.deferred.take().unwrap_or(PauseReason::Breakpoint);
            state.pause(ctx, reason)
        });
        instr.insert_probe(loc, probe.clone()).map_err(|e| match e {
            InstrumentError::InvalidLocation(_) => DebugError::InvalidLocation(func, pc),
            other => other.into(),
        })?;
        self.breakpoints.borrow_mut().insert((func, pc), probe);
        Ok(())
    }

    fn remove_breakpoint(&self, instr: &mut Instrumentation, func: u32, pc: u32) -> Result<(), DebugError> {
        let probe = self
            .breakpoints
            .borrow_mut()
            .remove(&(func, pc))
            .ok_or(DebugError::NoSuchBreakpoint(func, pc))?;
        let loc = instr.module().location(func, pc);
        instr.remove_probe(loc, &probe)?;
        Ok(())
    }
}

/// The debugger's view of a paused engine.
pub struct Paused<'a, 'c> {
    ctx: &'a mut ProbeContext<'c>,
    state: &'a State,
    reason: PauseReason,
}

impl Paused<'_, '_> {
    pub fn location(&self) -> CodeLocation {
        self.ctx.location()
    }

    pub fn reason(&self) -> PauseReason {
        self.reason
    }

    /// The instruction about to execute.
    pub fn instruction(&self) -> Instruction {
        let loc = self.ctx.location();
        let decl = self.ctx.module().func(loc.func).expect("defined function");
        disasm::instruction_at(decl, loc.pc).expect("paused at a boundary")
    }

    /// Live frames, innermost first.
    pub fn frames(&mut self) -> Result<Vec<FrameAccessor>, DebugError> {
        let mut out = vec![self.ctx.accessor()];
        while let Some(c) = out.last().expect("non-empty").caller(self.ctx)? {
            out.push(c);
        }
        Ok(out)
    }

    fn frame(&mut self, n: u32) -> Result<FrameAccessor, DebugError> {
        self.frames()?
            .into_iter()
            .nth(n as usize)
            .ok_or(DebugError::NoSuchFrame(n))
    }

    pub fn stack(&mut self) -> Result<Vec<FrameInfo>, DebugError> {
        let module = self.ctx.module().clone();
        let mut out = Vec::new();
        for f in self.frames()? {
            let func = f.func_index(self.ctx)?;
            let pc = f.pc(self.ctx)?;
            let decl = module.func(func).expect("defined function");
            let instruction = disasm::instruction_at(decl, pc).map_or_else(String::new, |i| i.to_string());
            out.push(FrameInfo {
                func,
                pc,
                instruction,
                frame_id: f.frame_id(),
            });
        }
        Ok(out)
    }

    pub fn locals(&mut self, frame: u32) -> Result<Vec<Value>, DebugError> {
        let f = self.frame(frame)?;
        Ok(f.locals(self.ctx)?)
    }

    pub fn set_local(&mut self, frame: u32, index: u32, value: Value) -> Result<(), DebugError> {
        let f = self.frame(frame)?;
        f.set_local(self.ctx, index, value)?;
        // An edit by the user is not a watched write.
        for w in self.state.watches.borrow_mut().iter_mut() {
            if w.frame.ptr_eq(&f) && w.local == index {
                w.last = value;
            }
        }
        Ok(())
    }

    /// Operands of a frame, bottom of the stack first.
    pub fn operands(&mut self, frame: u32) -> Result<Vec<Value>, DebugError> {
        let f = self.frame(frame)?;
        Ok(f.operands(self.ctx)?)
    }

    /// Sets operand `k` of a frame, counting from the top of its stack.
    pub fn set_operand(&mut self, frame: u32, k: u32, value: Value) -> Result<(), DebugError> {
        let f = self.frame(frame)?;
        Ok(f.set_operand(self.ctx, k, value)?)
    }

    /// Type of local `index` of a frame, for parsing user input.
    pub fn local_type(&mut self, frame: u32, index: u32) -> Result<ValueType, DebugError> {
        let f = self.frame(frame)?;
        Ok(f.get_local(self.ctx, index)?.ty())
    }

    pub fn operand_type(&mut self, frame: u32, k: u32) -> Result<ValueType, DebugError> {
        let f = self.frame(frame)?;
        Ok(f.get_operand(self.ctx, k)?.ty())
    }

    pub fn set_breakpoint(&mut self, func: u32, pc: u32) -> Result<(), DebugError> {
        self.state.insert_breakpoint(self.ctx.instrumentation(), func, pc)
    }

    pub fn remove_breakpoint(&mut self, func: u32, pc: u32) -> Result<(), DebugError> {
        self.state.remove_breakpoint(self.ctx.instrumentation(), func, pc)
    }

    pub fn breakpoints(&self) -> Vec<(u32, u32)> {
        self.state.breakpoints.borrow().keys().copied().collect()
    }

    /// Watches local `index` of a frame for writes that change its value;
    /// returns the watchpoint id. Experimental: a change is noticed at the
    /// instruction following the write.
    pub fn set_watchpoint(&mut self, frame: u32, index: u32) -> Result<u32, DebugError> {
        let f = self.frame(frame)?;
        let last = f.get_local(self.ctx, index)?;
        let id = self.state.next_watch.get() + 1;
        self.state.next_watch.set(id);
        self.state.watches.borrow_mut().push(Watch {
            id,
            frame: f,
            local: index,
            last,
        });
        Ok(id)
    }

    pub fn remove_watchpoint(&mut self, id: u32) -> Result<(), DebugError> {
        let mut w = self.state.watches.borrow_mut();
        let before = w.len();
        w.retain(|w| w.id != id);
        if w.len() == before {
            return Err(DebugError::NoSuchWatchpoint(id));
        }
        Ok(())
    }

    pub fn disassemble(&self, func: u32) -> Result<Vec<Instruction>, DebugError> {
        let module = self.ctx.module();
        let decl = module.func(func).ok_or(DebugError::NoSuchFunction(func))?;
        Ok(disasm::disassemble(decl))
    }

    pub fn num_funcs(&self) -> u32 {
        self.ctx.module().num_funcs()
    }

    pub fn num_imported_funcs(&self) -> u32 {
        self.ctx.module().num_imported_funcs()
    }
}

/// The debugger's view of a running engine at a poll point. Frame state is
/// only available while paused.
pub struct Running<'a, 'c> {
    ctx: &'a mut ProbeContext<'c>,
    state: &'a State,
}

impl Running<'_, '_> {
    pub fn location(&self) -> CodeLocation {
        self.ctx.location()
    }

    pub fn set_breakpoint(&mut self, func: u32, pc: u32) -> Result<(), DebugError> {
        self.state.insert_breakpoint(self.ctx.instrumentation(), func, pc)
    }

    pub fn remove_breakpoint(&mut self, func: u32, pc: u32) -> Result<(), DebugError> {
        self.state.remove_breakpoint(self.ctx.instrumentation(), func, pc)
    }

    pub fn breakpoints(&self) -> Vec<(u32, u32)> {
        self.state.breakpoints.borrow().keys().copied().collect()
    }
}

/// The debugger as a monitor. It pauses before the first instruction and
/// then whenever a breakpoint, step or watchpoint triggers.
pub struct DebugMonitor {
    state: Rc<State>,
}

impl DebugMonitor {
    pub fn new(frontend: Box<dyn DebugFrontend>) -> Self {
        DebugMonitor {
            state: Rc::new_cyclic(|this| State {
                this: this.clone(),
                frontend: RefCell::new(frontend),
                breakpoints: RefCell::default(),
                step: RefCell::default(),
                step_over: RefCell::default(),
                watches: RefCell::default(),
                watch_probe: RefCell::default(),
                next_watch: Cell::new(0),
                deferred: Cell::new(None),
                stats: RefCell::default(),
            }),
        }
    }
}

impl Monitor for DebugMonitor {
    fn name(&self) -> &'static str {
        "debug"
    }

    fn on_load(&mut self, instr: &mut Instrumentation) -> Result<(), MonitorError> {
        self.state.arm_global_step(instr, PauseReason::Entry)?;
        if self.state.frontend.borrow().can_interrupt() {
            let module = instr.module().clone();
            for f in module.num_imported_funcs()..module.num_funcs() {
                let decl = module.func(f).expect("defined function");
                let mut pcs: Vec<u32> = decl.sidetable().loop_headers().collect();
                pcs.push(0);
                pcs.sort_unstable();
                pcs.dedup();
                for pc in pcs {
                    let state = Rc::downgrade(&self.state);
                    let poll = Probe::from_fn(move |ctx| {
                        let Some(s) = state.upgrade() else {
                            return Ok(());
                        };
                        let pause = {
                            let mut running = Running { ctx, state: &s };
                            s.frontend.borrow_mut().poll(&mut running)?
                        };
                        if pause {
                            s.trigger(ctx, PauseReason::Interrupt)?;
                        }
                        Ok(())
                    });
                    instr.insert_probe(module.location(f, pc), poll)?;
                }
            }
        }
        Ok(())
    }

    fn on_finish(&mut self) -> Report {
        let stats = self.state.stats.borrow();
        let total: u64 = stats.pauses.values().sum();
        let mut rows = vec![Row::global("pauses", total)];
        let mut text = format!("debugger paused {total} time(s)\n");
        for (reason, n) in &stats.pauses {
            rows.push(Row::global(format!("pauses:{reason}"), n));
            let _ = writeln!(text, "  {reason}: {n}");
        }
        Report {
            monitor: "debug".into(),
            text,
            rows,
        }
    }
}

/// A frontend that resumes every pause with the same action, recording
/// where it paused. Useful for scripted runs and tests.
pub struct Scripted {
    actions: Vec<Resume>,
    next: usize,
    pub log: Rc<RefCell<Vec<(u32, u32, &'static str)>>>,
}

impl Scripted {
    /// Plays `actions` in order, then continues.
    pub fn new(actions: Vec<Resume>) -> Self {
        Scripted {
            actions,
            next: 0,
            log: Rc::default(),
        }
    }
}

impl DebugFrontend for Scripted {
    fn on_pause(&mut self, p: &mut Paused<'_, '_>) -> Result<Resume, MonitorError> {
        let loc = p.location();
        self.log.borrow_mut().push((loc.func, loc.pc, p.reason().name()));
        let r = self.actions.get(self.next).copied().unwrap_or(Resume::Continue);
        self.next += 1;
        Ok(r)
    }
}

/// Line-oriented command interpreter. `help` lists the commands.
pub struct Repl {
    input: Box<dyn BufRead>,
    output: Box<dyn Write>,
    eof: bool,
}

const HELP: &str = "\
commands:
  c, continue            resume
  s, step                execute one instruction
  n, next                step over calls
  q, quit                abort the program
  b, break F:PC          set a breakpoint
  d, delete F:PC         remove a breakpoint
  bl                     list breakpoints
  bt, stack              show the call stack
  l, locals [FRAME]      show locals (frame 0 = innermost)
  o, operands [FRAME]    show the operand stack, bottom first
  set local I VALUE      change a local of the innermost frame
  set operand K VALUE    change operand K (0 = top) of the innermost frame
  w, watch I             pause when local I of the innermost frame changes
  unwatch ID             remove a watchpoint
  dis [F]                disassemble a function
";

impl Repl {
    pub fn new(input: Box<dyn BufRead>, output: Box<dyn Write>) -> Self {
        Repl {
            input,
            output,
            eof: false,
        }
    }

    pub fn stdio() -> Self {
        Repl::new(Box::new(std::io::stdin().lock()), Box::new(std::io::stderr()))
    }

    fn command(&mut self, p: &mut Paused<'_, '_>, line: &str) -> Result<Option<Resume>, String> {
        let words: Vec<&str> = line.split_whitespace().collect();
        let err = |e: DebugError| e.to_string();
        let loc_arg = |w: Option<&&str>| -> Result<(u32, u32), String> {
            let (f, pc) = w
                .and_then(|w| w.split_once(':'))
                .ok_or("expected F:PC")?;
            Ok((
                f.parse().map_err(|_| "bad function index")?,
                pc.parse().map_err(|_| "bad pc")?,
            ))
        };
        let num = |w: Option<&&str>, default: Option<u32>| -> Result<u32, String> {
            match w {
                Some(w) => w.parse().map_err(|_| format!("not a number: {w}")),
                None => default.ok_or_else(|| "missing argument".to_string()),
            }
        };
        let out = &mut self.output;
        match words.as_slice() {
            [] => {}
            ["c" | "continue"] => return Ok(Some(Resume::Continue)),
            ["s" | "step"] => return Ok(Some(Resume::Step)),
            ["n" | "next"] => return Ok(Some(Resume::StepOver)),
            ["q" | "quit"] => return Ok(Some(Resume::Abort)),
            ["help" | "h" | "?"] => {
                let _ = write!(out, "{HELP}");
            }
            ["b" | "break", rest @ ..] => {
                let (f, pc) = loc_arg(rest.first())?;
                p.set_breakpoint(f, pc).map_err(err)?;
                let _ = writeln!(out, "breakpoint at {f}:{pc}");
            }
            ["d" | "delete", rest @ ..] => {
                let (f, pc) = loc_arg(rest.first())?;
                p.remove_breakpoint(f, pc).map_err(err)?;
            }
            ["bl"] => {
                for (f, pc) in p.breakpoints() {
                    let _ = writeln!(out, "{f}:{pc}");
                }
            }
            ["bt" | "stack"] => {
                for (i, fr) in p.stack().map_err(err)?.iter().enumerate() {
                    let _ = writeln!(out, "#{i} func {} pc {} {}", fr.func, fr.pc, fr.instruction);
                }
            }
            ["l" | "locals", rest @ ..] => {
                let frame = num(rest.first(), Some(0))?;
                for (i, v) in p.locals(frame).map_err(err)?.iter().enumerate() {
                    let _ = writeln!(out, "local[{i}] = {v}");
                }
            }
            ["o" | "operands", rest @ ..] => {
                let frame = num(rest.first(), Some(0))?;
                let ops = p.operands(frame).map_err(err)?;
                let shown: Vec<String> = ops.iter().map(Value::to_string).collect();
                let _ = writeln!(out, "[{}]", shown.join(" "));
            }
            ["set", "local", i, v] => {
                let i: u32 = i.parse().map_err(|_| "bad local index")?;
                let ty = p.local_type(0, i).map_err(err)?;
                let v = Value::parse(v, ty)?;
                p.set_local(0, i, v).map_err(err)?;
            }
            ["set", "operand", k, v] => {
                let k: u32 = k.parse().map_err(|_| "bad operand index")?;
                let ty = p.operand_type(0, k).map_err(err)?;
                let v = Value::parse(v, ty)?;
                p.set_operand(0, k, v).map_err(err)?;
            }
            ["w" | "watch", i] => {
                let i: u32 = i.parse().map_err(|_| "bad local index")?;
                let id = p.set_watchpoint(0, i).map_err(err)?;
                let _ = writeln!(out, "watchpoint {id} on local {i}");
            }
            ["unwatch", id] => {
                let id: u32 = id.parse().map_err(|_| "bad watchpoint id")?;
                p.remove_watchpoint(id).map_err(err)?;
            }
            ["dis", rest @ ..] => {
                let f = num(rest.first(), Some(p.location().func))?;
                let here = p.location();
                for ins in p.disassemble(f).map_err(err)? {
                    let mark = if f == here.func && ins.pc == here.pc { "=>" } else { "  " };
                    let _ = writeln!(out, "{mark} {:>5}  {ins}", ins.pc);
                }
            }
            _ => return Err(format!("unknown command {line:?}; try help")),
        }
        Ok(None)
    }
}

impl DebugFrontend for Repl {
    fn on_pause(&mut self, p: &mut Paused<'_, '_>) -> Result<Resume, MonitorError> {
        if self.eof {
            return Ok(Resume::Continue);
        }
        let loc = p.location();
        let _ = writeln!(
            self.output,
            "paused ({}) at func {} pc {}: {}",
            p.reason().name(),
            loc.func,
            loc.pc,
            p.instruction()
        );
        loop {
            let _ = write!(self.output, "(wdb) ");
            let _ = self.output.flush();
            let mut line = String::new();
            match self.input.read_line(&mut line) {
                Ok(0) | Err(_) => {
                    // Input closed: let the program run to completion.
                    self.eof = true;
                    return Ok(Resume::Continue);
                }
                Ok(_) => {}
            }
            match self.command(p, line.trim()) {
                Ok(Some(r)) => return Ok(r),
                Ok(None) => {}
                Err(e) => {
                    let _ = writeln!(self.output, "error: {e}");
                }
            }
        }
    }
}
