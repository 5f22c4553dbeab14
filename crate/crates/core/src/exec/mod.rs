//! The in-place interpreter.
//!
//! Instructions are executed directly from the function's bytecode. Control
//! flow uses the sidetable computed during validation, and dispatch goes
//! through a 256-entry handler table. Probes are installed by overwriting an
//! opcode byte with the reserved probe opcode (local probes) or by switching
//! to a table whose every entry breaks out of the loop (global probes), so
//! code without probes runs at full speed.

pub(crate) mod handlers;
pub mod host;

use std::rc::Rc;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{ExecError, LinkError, MonitorError, Trap, TrapKind};
use crate::instrument::{self, Instrumentation};
use crate::module::{ConstExpr, ConstOp, FuncCode, Module};
use crate::types::{CodeLocation, Value, ValueType};
use crate::validate::RETURN_TARGET;

use handlers::NORMAL;
pub use host::{HostFunc, Imports, OutputBuffer};

pub const PAGE_SIZE: usize = 65_536;
/// Maximum call depth; one more call traps with `stack-exhausted`.
pub const MAX_FRAMES: usize = 10_000;
/// Upper bound on linear memory, in pages (1 GiB). `memory.grow` beyond it
/// fails with -1.
pub const MAX_MEMORY_PAGES: u32 = 16_384;
/// Upper bound on the value stack, in slots.
const MAX_STACK_SLOTS: usize = 1 << 24;

/// Why a handler left the straight-line dispatch loop.
#[derive(Debug)]
pub(crate) enum Break {
    Finished,
    Trap(TrapKind),
    LocalProbe,
    GlobalProbe,
}

/// How a run of the dispatch loop ended.
enum Stop {
    Finished,
    Trap(Trap),
    Monitor(MonitorError),
}

/// Whether the interpreter is currently dispatching through the regular
/// table or the table that fires global probes before every instruction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DispatchMode {
    Normal,
    Global,
}

pub(crate) struct Frame {
    pub(crate) code: Rc<FuncCode>,
    /// For suspended callers, the pc of the call instruction. Stale for the
    /// executing frame, whose pc lives in [`Core::pc`].
    pub(crate) pc: u32,
    pub(crate) ret_pc: u32,
    /// Stack index of local 0.
    pub(crate) base: u32,
    pub(crate) frame_id: u64,
    /// The accessor handed out for this frame, if any. Dropped with the frame.
    pub(crate) accessor: Option<Rc<instrument::AccessorInner>>,
}

/// Interpreter state. Public only so that it can appear in sealed trait
/// signatures; it has no public API.
#[doc(hidden)]
pub struct Core {
    pub(crate) engine: u64,
    pub(crate) module: Rc<Module>,
    pub(crate) code: Rc<FuncCode>,
    pub(crate) pc: usize,
    pub(crate) base: usize,
    pub(crate) stack: Vec<u64>,
    pub(crate) frames: Vec<Frame>,
    next_frame_id: u64,
    /// Incremented for every top-level invocation.
    pub(crate) execution: u64,
    pub(crate) memory: Vec<u8>,
    pub(crate) max_pages: u32,
    pub(crate) globals: Vec<u64>,
    pub(crate) table: Vec<Option<u32>>,
    hosts: Vec<HostFunc>,
    /// Per-instance code of every defined function, indexed from 0.
    pub(crate) codes: Vec<Rc<FuncCode>>,
    host_error: Option<String>,
}

impl Core {
    #[inline(always)]
    pub(crate) fn pop(&mut self) -> u64 {
        self.stack
            .pop()
            .expect("operand stack underflow in validated code")
    }

    #[inline(always)]
    pub(crate) fn top(&mut self) -> &mut u64 {
        self.stack
            .last_mut()
            .expect("operand stack underflow in validated code")
    }

    pub(crate) fn pages(&self) -> u32 {
        (self.memory.len() / PAGE_SIZE) as u32
    }

    pub(crate) fn location(&self, pc: usize) -> CodeLocation {
        CodeLocation::new(self.module.id, self.code.func_index, pc as u32)
    }

    /// Takes branch entry `k` of the instruction at the current pc.
    #[inline(always)]
    pub(crate) fn take_branch(&mut self, k: usize) -> Result<(), Break> {
        let side = &self.code.side;
        let e = side.branches[side.branch_index[self.pc] as usize + k];
        if e.target_pc == RETURN_TARGET {
            return self.do_return();
        }
        let dst = self.base + self.code.num_locals as usize + e.height as usize;
        let keep = e.keep as usize;
        let top = self.stack.len();
        if top != dst + keep {
            self.stack.copy_within(top - keep..top, dst);
            self.stack.truncate(dst + keep);
        }
        self.pc = e.target_pc as usize;
        Ok(())
    }

    pub(crate) fn do_return(&mut self) -> Result<(), Break> {
        let n = self.code.num_results as usize;
        let top = self.stack.len();
        if top != self.base + n {
            self.stack.copy_within(top - n..top, self.base);
            self.stack.truncate(self.base + n);
        }
        self.frames.pop();
        match self.frames.last() {
            None => Err(Break::Finished),
            Some(f) => {
                self.code = f.code.clone();
                self.pc = f.ret_pc as usize;
                self.base = f.base as usize;
                Ok(())
            }
        }
    }

    pub(crate) fn call(&mut self, func: u32, ret_pc: usize) -> Result<(), Break> {
        let imported = self.hosts.len() as u32;
        if func < imported {
            return self.call_host(func as usize, ret_pc);
        }
        let code = self.codes[(func - imported) as usize].clone();
        self.enter(code, ret_pc)
    }

    fn enter(&mut self, code: Rc<FuncCode>, ret_pc: usize) -> Result<(), Break> {
        if self.frames.len() >= MAX_FRAMES
            || self.stack.len() + code.num_locals as usize > MAX_STACK_SLOTS
        {
            return Err(Break::Trap(TrapKind::StackExhausted));
        }
        let base = self.stack.len() - code.num_params as usize;
        self.stack.resize(base + code.num_locals as usize, 0);
        if let Some(caller) = self.frames.last_mut() {
            caller.pc = self.pc as u32;
            caller.ret_pc = ret_pc as u32;
        }
        let frame_id = self.next_frame_id;
        self.next_frame_id += 1;
        self.frames.push(Frame {
            code: code.clone(),
            pc: 0,
            ret_pc: 0,
            base: base as u32,
            frame_id,
            accessor: None,
        });
        self.code = code;
        self.pc = 0;
        self.base = base;
        Ok(())
    }

    fn call_host(&mut self, index: usize, ret_pc: usize) -> Result<(), Break> {
        let host = self.hosts[index].clone();
        let n = host.ty.params.len();
        let at = self.stack.len() - n;
        let args: Vec<Value> = self.stack[at..]
            .iter()
            .zip(&host.ty.params)
            .map(|(&bits, &t)| Value::from_bits(t, bits))
            .collect();
        self.stack.truncate(at);
        let results = (host.f)(&args).map_err(|msg| {
            self.host_error = Some(msg);
            Break::Trap(TrapKind::Host)
        })?;
        let types: Vec<ValueType> = results.iter().map(Value::ty).collect();
        if types != host.ty.results {
            self.host_error = Some(format!(
                "host function returned {types:?}, expected {:?}",
                host.ty.results
            ));
            return Err(Break::Trap(TrapKind::Host));
        }
        self.stack.extend(results.iter().map(|v| v.to_bits()));
        self.pc = ret_pc;
        Ok(())
    }

    fn reset(&mut self) {
        self.frames.clear();
        self.stack.clear();
        self.pc = 0;
        self.base = 0;
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum InstantiateError {
    #[error(transparent)]
    Link(#[from] LinkError),
    #[error("start function failed: {0}")]
    Start(ExecError),
}

/// Result of executing one instruction of a suspended invocation.
#[derive(Debug, Clone, PartialEq)]
pub enum StepOutcome {
    /// More instructions remain; the invocation is still suspended.
    Continued,
    Returned(Vec<Value>),
    Trapped(Trap),
}

enum State {
    Idle,
    Suspended {
        func: u32,
        /// Results of a host function started directly, returned by the next step.
        immediate: Option<Vec<Value>>,
    },
}

/// An instantiated module: its memory, globals, table and execution state,
/// together with the probes installed on its code.
pub struct Instance {
    pub(crate) core: Core,
    pub(crate) instr: Instrumentation,
    state: State,
}

static NEXT_ENGINE: AtomicU64 = AtomicU64::new(1);

impl Instance {
    /// Links `module` against `imports`, initializes memory, globals and the
    /// table, and runs the start function if there is one.
    pub fn new(module: Rc<Module>, imports: &Imports) -> Result<Instance, InstantiateError> {
        let mut inst = Instance::new_unstarted(module, imports)?;
        inst.run_start().map_err(InstantiateError::Start)?;
        Ok(inst)
    }

    /// Like [`Instance::new`] but does not run the start function, so that
    /// probes can be installed before any code executes. Call
    /// [`Instance::run_start`] afterwards.
    pub fn new_unstarted(module: Rc<Module>, imports: &Imports) -> Result<Instance, LinkError> {
        if !module.is_validated() {
            return Err(LinkError::NotValidated);
        }
        let mut hosts = Vec::with_capacity(module.imports.len());
        for imp in &module.imports {
            let expected = &module.types[imp.type_index as usize];
            let Some(h) = imports.get(&imp.module, &imp.name) else {
                return Err(LinkError::MissingImport {
                    module: imp.module.clone(),
                    name: imp.name.clone(),
                });
            };
            if &h.ty != expected {
                return Err(LinkError::SignatureMismatch {
                    module: imp.module.clone(),
                    name: imp.name.clone(),
                    expected: expected.to_string(),
                    found: h.ty.to_string(),
                });
            }
            hosts.push(h.clone());
        }

        let mut globals: Vec<u64> = Vec::with_capacity(module.globals.len());
        for g in &module.globals {
            let v = eval_const(&g.init, &globals);
            globals.push(v);
        }

        let (memory, max_pages) = match module.memories.first() {
            Some(l) => {
                if l.min > MAX_MEMORY_PAGES {
                    return Err(LinkError::ResourceLimit(format!(
                        "memory of {} pages exceeds the engine limit of {MAX_MEMORY_PAGES}",
                        l.min
                    )));
                }
                let max = l.max.unwrap_or(u32::MAX).min(MAX_MEMORY_PAGES);
                (vec![0u8; l.min as usize * PAGE_SIZE], max)
            }
            None => (Vec::new(), 0),
        };
        let table_size = module.tables.first().map_or(0, |t| t.min as usize);
        let mut table = vec![None; table_size];
        let mut memory = memory;

        // All segments are bounds-checked before any of them is written.
        let mut elem_at = Vec::new();
        for e in &module.elements {
            let off = eval_const(&e.offset, &globals) as u32 as usize;
            if off + e.funcs.len() > table.len() {
                return Err(LinkError::SegmentOutOfBounds("element"));
            }
            elem_at.push(off);
        }
        let mut data_at = Vec::new();
        for d in &module.data {
            let off = eval_const(&d.offset, &globals) as u32 as usize;
            if off + d.bytes.len() > memory.len() {
                return Err(LinkError::SegmentOutOfBounds("data"));
            }
            data_at.push(off);
        }
        for (e, off) in module.elements.iter().zip(elem_at) {
            for (i, &f) in e.funcs.iter().enumerate() {
                table[off + i] = Some(f);
            }
        }
        for (d, off) in module.data.iter().zip(data_at) {
            memory[off..off + d.bytes.len()].copy_from_slice(&d.bytes);
        }

        let codes: Vec<Rc<FuncCode>> = module
            .funcs
            .iter()
            .map(|f| Rc::new(f.code.fork()))
            .collect();
        let engine = NEXT_ENGINE.fetch_add(1, Ordering::Relaxed);
        let idle = Rc::new(FuncCode::idle());
        let instr = Instrumentation::new(module.clone(), codes.clone());
        let core = Core {
            engine,
            module: module.clone(),
            code: idle,
            pc: 0,
            base: 0,
            stack: Vec::with_capacity(1024),
            frames: Vec::new(),
            next_frame_id: 1,
            execution: 0,
            memory,
            max_pages,
            globals,
            table,
            hosts,
            codes,
            host_error: None,
        };
        Ok(Instance {
            core,
            instr,
            state: State::Idle,
        })
    }

    /// Runs the module's start function, if it has one.
    pub fn run_start(&mut self) -> Result<(), ExecError> {
        if let Some(start) = self.core.module.start {
            self.invoke_index(start, &[])?;
        }
        Ok(())
    }

    pub fn module(&self) -> &Rc<Module> {
        &self.core.module
    }

    pub fn instrumentation(&self) -> &Instrumentation {
        &self.instr
    }

    pub fn instrumentation_mut(&mut self) -> &mut Instrumentation {
        &mut self.instr
    }

    pub fn dispatch_mode(&self) -> DispatchMode {
        self.instr.dispatch_mode()
    }

    pub fn memory(&self) -> &[u8] {
        &self.core.memory
    }

    pub fn memory_mut(&mut self) -> &mut [u8] {
        &mut self.core.memory
    }

    pub fn global(&self, index: u32) -> Option<Value> {
        let g = self.core.module.globals.get(index as usize)?;
        Some(Value::from_bits(g.ty, self.core.globals[index as usize]))
    }

    pub fn globals(&self) -> Vec<Value> {
        (0..self.core.globals.len() as u32)
            .filter_map(|i| self.global(i))
            .collect()
    }

    /// Message of the most recent host function failure.
    pub fn last_host_error(&self) -> Option<&str> {
        self.core.host_error.as_deref()
    }

    /// Live instruction bytes of a defined function, probe opcodes included.
    pub fn live_body(&self, func: u32) -> Option<Vec<u8>> {
        let i = func.checked_sub(self.core.module.num_imported_funcs())?;
        let code = self.core.codes.get(i as usize)?;
        Some(code.live.iter().map(std::cell::Cell::get).collect())
    }

    /// Calls an exported function to completion, firing installed probes.
    pub fn invoke(&mut self, name: &str, args: &[Value]) -> Result<Vec<Value>, ExecError> {
        let f = self.export_index(name)?;
        self.invoke_index(f, args)
    }

    pub fn invoke_index(&mut self, func: u32, args: &[Value]) -> Result<Vec<Value>, ExecError> {
        if let Some(results) = self.begin(func, args)? {
            return Ok(results);
        }
        let stop = self.run::<true>();
        self.finish(func, stop)
    }

    /// Calls an exported function with a dispatch loop compiled without any
    /// probe support. Refuses to run if probes are installed.
    ///
    /// This is the uninstrumented baseline that probe overhead is measured
    /// against.
    pub fn invoke_stripped(&mut self, name: &str, args: &[Value]) -> Result<Vec<Value>, ExecError> {
        if self.instr.has_probes() {
            return Err(ExecError::Instrumented);
        }
        let f = self.export_index(name)?;
        if let Some(results) = self.begin(f, args)? {
            return Ok(results);
        }
        let stop = self.run::<false>();
        self.finish(f, stop)
    }

    /// Sets up a call to an exported function without executing anything.
    /// Drive it with [`step`](Self::step) and [`resume`](Self::resume).
    pub fn start(&mut self, name: &str, args: &[Value]) -> Result<(), ExecError> {
        let f = self.export_index(name)?;
        let immediate = self.begin(f, args)?;
        self.state = State::Suspended { func: f, immediate };
        Ok(())
    }

    pub fn is_suspended(&self) -> bool {
        matches!(self.state, State::Suspended { .. })
    }

    /// Location of the next instruction of the suspended invocation.
    pub fn current_location(&self) -> Option<CodeLocation> {
        match self.state {
            State::Suspended {
                immediate: None, ..
            } if !self.core.frames.is_empty() => Some(self.core.location(self.core.pc)),
            _ => None,
        }
    }

    /// Executes exactly one instruction of the suspended invocation, firing
    /// its probes first.
    pub fn step(&mut self) -> Result<StepOutcome, ExecError> {
        let State::Suspended { func, immediate } = &mut self.state else {
            return Err(ExecError::NotSuspended);
        };
        let func = *func;
        if let Some(results) = immediate.take() {
            self.state = State::Idle;
            return Ok(StepOutcome::Returned(results));
        }
        let pc = self.core.pc;
        let op = self.core.code.live[pc].get();
        let handler = self.instr.table[op as usize];
        let stop = match handler(&mut self.core) {
            Ok(()) => return Ok(StepOutcome::Continued),
            Err(b) => match self.on_break::<true>(b, pc) {
                Ok(()) => return Ok(StepOutcome::Continued),
                Err(stop) => stop,
            },
        };
        self.state = State::Idle;
        match self.finish(func, stop) {
            Ok(results) => Ok(StepOutcome::Returned(results)),
            Err(ExecError::Trap(t)) => Ok(StepOutcome::Trapped(t)),
            Err(e) => Err(e),
        }
    }

    /// Runs the suspended invocation to completion.
    pub fn resume(&mut self) -> Result<Vec<Value>, ExecError> {
        let State::Suspended { func, immediate } = &mut self.state else {
            return Err(ExecError::NotSuspended);
        };
        let func = *func;
        let immediate = immediate.take();
        self.state = State::Idle;
        if let Some(results) = immediate {
            return Ok(results);
        }
        let stop = self.run::<true>();
        self.finish(func, stop)
    }

    /// Discards a suspended invocation.
    pub fn abort(&mut self) {
        self.state = State::Idle;
        self.core.reset();
    }

    fn export_index(&self, name: &str) -> Result<u32, ExecError> {
        self.core
            .module
            .exported_func(name)
            .ok_or_else(|| ExecError::NoSuchExport(name.to_owned()))
    }

    /// Pushes the arguments and enters `func`. Host functions are called
    /// immediately and their results returned.
    fn begin(&mut self, func: u32, args: &[Value]) -> Result<Option<Vec<Value>>, ExecError> {
        if self.is_suspended() {
            return Err(ExecError::Busy);
        }
        let module = self.core.module.clone();
        let ty = module
            .func_type(func)
            .ok_or_else(|| ExecError::NoSuchExport(format!("function {func}")))?;
        let found: Vec<ValueType> = args.iter().map(Value::ty).collect();
        if found != ty.params {
            let list = |v: &[ValueType]| v.iter().map(|t| t.name()).collect::<Vec<_>>().join(" ");
            return Err(ExecError::ArgumentMismatch {
                expected: format!("[{}]", list(&ty.params)),
                found: format!("[{}]", list(&found)),
            });
        }
        self.core.reset();
        self.core.execution += 1;
        self.core.stack.extend(args.iter().map(|v| v.to_bits()));
        let imported = module.num_imported_funcs();
        if func < imported {
            let stop = match self.core.call_host(func as usize, 0) {
                Ok(()) => Stop::Finished,
                Err(Break::Trap(k)) => Stop::Trap(Trap {
                    kind: k,
                    location: CodeLocation::new(module.id, func, 0),
                }),
                Err(_) => unreachable!("host calls only trap"),
            };
            return self.finish(func, stop).map(Some);
        }
        let code = self.core.codes[(func - imported) as usize].clone();
        // The call stack is empty, so entering cannot exhaust it.
        let _ = self.core.enter(code, 0);
        Ok(None)
    }

    fn finish(&mut self, func: u32, stop: Stop) -> Result<Vec<Value>, ExecError> {
        let r = match stop {
            Stop::Finished => {
                let ty = self.core.module.func_type(func).expect("function exists");
                Ok(ty
                    .results
                    .iter()
                    .zip(&self.core.stack)
                    .map(|(&t, &bits)| Value::from_bits(t, bits))
                    .collect())
            }
            Stop::Trap(t) => Err(ExecError::Trap(t)),
            Stop::Monitor(e) => Err(ExecError::Monitor(e)),
        };
        self.core.reset();
        r
    }

    fn run<const PROBES: bool>(&mut self) -> Stop {
        loop {
            let pc = self.core.pc;
            let op = self.core.code.live[pc].get() as usize;
            let handler = if PROBES {
                self.instr.table[op]
            } else {
                NORMAL[op]
            };
            if let Err(b) = handler(&mut self.core) {
                if let Err(stop) = self.on_break::<PROBES>(b, pc) {
                    return stop;
                }
            }
        }
    }

    #[inline(never)]
    fn on_break<const PROBES: bool>(&mut self, b: Break, pc: usize) -> Result<(), Stop> {
        match b {
            Break::Finished => Err(Stop::Finished),
            Break::Trap(kind) => Err(Stop::Trap(Trap {
                kind,
                location: self.core.location(pc),
            })),
            Break::GlobalProbe if PROBES => {
                // Local probes inserted or removed by the global probes take
                // effect from the next event on, so look at them first.
                let local = instrument::local_snapshot(&self.core, &self.instr);
                instrument::fire_global(&mut self.core, &mut self.instr).map_err(Stop::Monitor)?;
                if let Some(local) = local {
                    instrument::fire_snapshot(&mut self.core, &mut self.instr, &local)
                        .map_err(Stop::Monitor)?;
                }
                let op = self.core.code.pristine[pc] as usize;
                match NORMAL[op](&mut self.core) {
                    Ok(()) => Ok(()),
                    Err(b) => self.on_break::<PROBES>(b, pc),
                }
            }
            Break::LocalProbe if PROBES => self.on_local::<PROBES>(pc),
            Break::LocalProbe | Break::GlobalProbe => {
                unreachable!("probe reached in a probe-free dispatch loop")
            }
        }
    }

    fn on_local<const PROBES: bool>(&mut self, pc: usize) -> Result<(), Stop> {
        instrument::fire_local(&mut self.core, &mut self.instr).map_err(Stop::Monitor)?;
        let op = self.core.code.pristine[pc] as usize;
        match NORMAL[op](&mut self.core) {
            Ok(()) => Ok(()),
            Err(b) => self.on_break::<PROBES>(b, pc),
        }
    }
}

fn eval_const(e: &ConstExpr, globals: &[u64]) -> u64 {
    match e.op {
        ConstOp::Value(v) => v.to_bits(),
        ConstOp::GlobalGet(i) => globals[i as usize],
    }
}
