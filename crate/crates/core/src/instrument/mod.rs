//! Probe-based instrumentation.
//!
//! A *local probe* is attached to one instruction. Installing the first probe
//! at a location overwrites that instruction's opcode byte in the live code
//! with the reserved probe opcode; removing the last one copies the original
//! byte back from the pristine code. A *global probe* fires before every
//! instruction; while any is installed the interpreter dispatches through a
//! table whose every entry fires the global list first.
//!
//! Probe lists are copy-on-write. Firing iterates a snapshot taken when the
//! firing starts, so a probe inserted while its location is firing first
//! fires on the next occurrence, a probe removed during firing still fires
//! in the current one, and the order of firing is the order of insertion.

mod accessor;
pub mod library;

use std::cell::Cell;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::rc::Rc;

use crate::error::{InstrumentError, MonitorError};
use crate::exec::handlers::{Handler, GLOBAL, NORMAL};
use crate::exec::{Core, DispatchMode};
use crate::module::{FuncCode, Module};
use crate::opcodes::PROBE;
use crate::types::{CodeLocation, Value, ValueType};

pub(crate) use accessor::AccessorInner;
pub use accessor::{accessors_allocated, FrameAccessor, FrameHost};

/// A probe that receives a lazily-materialized view of the frame.
pub trait GenericProbe {
    fn fire(&self, ctx: &mut ProbeContext<'_>) -> Result<(), MonitorError>;
}

/// A probe specialized to the top-of-stack value at its location.
pub trait OperandProbe {
    fn fire_tos(&self, loc: CodeLocation, top: Value);
}

/// A probe that only counts its firings. The engine increments it directly
/// without calling out to monitor code.
#[derive(Debug, Default)]
pub struct CountProbe {
    count: Cell<u64>,
}

impl CountProbe {
    pub fn new() -> Rc<CountProbe> {
        Rc::new(CountProbe::default())
    }

    #[inline(always)]
    pub fn hit(&self) {
        self.count.set(self.count.get().saturating_add(1));
    }

    pub fn count(&self) -> u64 {
        self.count.get()
    }

    pub fn reset(&self) {
        self.count.set(0);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProbeKind {
    Generic,
    Counter,
    OperandTos,
}

/// A reference to a probe object. Two `Probe`s are the same probe when they
/// point to the same object.
#[derive(Clone)]
pub enum Probe {
    Generic(Rc<dyn GenericProbe>),
    Counter(Rc<CountProbe>),
    Operand(Rc<dyn OperandProbe>),
}

impl Probe {
    /// A generic probe running `f` on each firing.
    pub fn from_fn(
        f: impl Fn(&mut ProbeContext<'_>) -> Result<(), MonitorError> + 'static,
    ) -> Probe {
        Probe::Generic(Rc::new(FnProbe(f)))
    }

    /// A top-of-stack probe running `f` on each firing.
    pub fn operand_fn(f: impl Fn(CodeLocation, Value) + 'static) -> Probe {
        Probe::Operand(Rc::new(FnOperandProbe(f)))
    }

    /// A generic probe that does nothing.
    pub fn empty() -> Probe {
        Probe::from_fn(|_| Ok(()))
    }

    pub fn kind(&self) -> ProbeKind {
        match self {
            Probe::Generic(_) => ProbeKind::Generic,
            Probe::Counter(_) => ProbeKind::Counter,
            Probe::Operand(_) => ProbeKind::OperandTos,
        }
    }

    fn addr(&self) -> *const () {
        match self {
            Probe::Generic(p) => Rc::as_ptr(p) as *const (),
            Probe::Counter(p) => Rc::as_ptr(p) as *const (),
            Probe::Operand(p) => Rc::as_ptr(p) as *const (),
        }
    }

    pub fn same(&self, other: &Probe) -> bool {
        self.addr() == other.addr()
    }
}

impl std::fmt::Debug for Probe {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Probe::{:?}({:p})", self.kind(), self.addr())
    }
}

impl From<Rc<CountProbe>> for Probe {
    fn from(p: Rc<CountProbe>) -> Self {
        Probe::Counter(p)
    }
}

struct FnProbe<F>(F);

impl<F: Fn(&mut ProbeContext<'_>) -> Result<(), MonitorError>> GenericProbe for FnProbe<F> {
    fn fire(&self, ctx: &mut ProbeContext<'_>) -> Result<(), MonitorError> {
        (self.0)(ctx)
    }
}

struct FnOperandProbe<F>(F);

impl<F: Fn(CodeLocation, Value)> OperandProbe for FnOperandProbe<F> {
    fn fire_tos(&self, loc: CodeLocation, top: Value) {
        (self.0)(loc, top)
    }
}

/// An ordered, copy-on-write list of probes.
#[derive(Clone, Default)]
pub struct ProbeList {
    probes: Rc<[Probe]>,
    version: u64,
}

impl ProbeList {
    pub fn probes(&self) -> &[Probe] {
        &self.probes
    }

    pub fn len(&self) -> usize {
        self.probes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probes.is_empty()
    }

    /// Incremented on every modification.
    pub fn version(&self) -> u64 {
        self.version
    }

    fn contains(&self, p: &Probe) -> bool {
        self.probes.iter().any(|q| q.same(p))
    }

    fn push(&mut self, p: Probe) {
        self.probes = self
            .probes
            .iter()
            .cloned()
            .chain(std::iter::once(p))
            .collect();
        self.version += 1;
    }

    fn remove(&mut self, p: &Probe) -> bool {
        let Some(i) = self.probes.iter().position(|q| q.same(p)) else {
            return false;
        };
        let mut v = self.probes.to_vec();
        v.remove(i);
        self.probes = v.into();
        self.version += 1;
        true
    }
}

/// The probes installed on one instance's code.
pub struct Instrumentation {
    module: Rc<Module>,
    codes: Vec<Rc<FuncCode>>,
    pub(crate) table: &'static [Handler; 256],
    global: ProbeList,
    /// Per defined function, per pc. Allocated on first insertion.
    local: Vec<Vec<Option<ProbeList>>>,
    probed_sites: usize,
}

impl Instrumentation {
    pub(crate) fn new(module: Rc<Module>, codes: Vec<Rc<FuncCode>>) -> Self {
        let n = codes.len();
        Instrumentation {
            module,
            codes,
            table: &NORMAL,
            global: ProbeList::default(),
            local: vec![Vec::new(); n],
            probed_sites: 0,
        }
    }

    pub fn module(&self) -> &Rc<Module> {
        &self.module
    }

    pub fn dispatch_mode(&self) -> DispatchMode {
        if std::ptr::eq(self.table, &GLOBAL) {
            DispatchMode::Global
        } else {
            DispatchMode::Normal
        }
    }

    fn set_dispatch_mode(&mut self, mode: DispatchMode) {
        self.table = match mode {
            DispatchMode::Normal => &NORMAL,
            DispatchMode::Global => &GLOBAL,
        };
    }

    /// Whether any local or global probe is installed.
    pub fn has_probes(&self) -> bool {
        self.probed_sites > 0 || !self.global.is_empty()
    }

    /// Number of locations with at least one local probe.
    pub fn probed_locations(&self) -> usize {
        self.probed_sites
    }

    /// Maps a location to (defined function index, pc), checking that it is
    /// an instruction boundary of this module.
    fn resolve(&self, loc: CodeLocation) -> Result<(usize, usize), InstrumentError> {
        if loc.module != self.module.id {
            return Err(InstrumentError::WrongContext);
        }
        let fi = loc
            .func
            .checked_sub(self.module.num_imported_funcs())
            .map(|i| i as usize)
            .filter(|&i| i < self.codes.len())
            .ok_or(InstrumentError::InvalidLocation(loc))?;
        if !self.codes[fi].side.is_boundary(loc.pc) {
            return Err(InstrumentError::InvalidLocation(loc));
        }
        Ok((fi, loc.pc as usize))
    }

    /// The opcode at `loc` as it appears in the unmodified code.
    pub fn original_opcode(&self, loc: CodeLocation) -> Result<u8, InstrumentError> {
        let (fi, pc) = self.resolve(loc)?;
        Ok(self.codes[fi].pristine[pc])
    }

    /// The opcode byte at `loc` in the live code.
    pub fn live_opcode(&self, loc: CodeLocation) -> Result<u8, InstrumentError> {
        let (fi, pc) = self.resolve(loc)?;
        Ok(self.codes[fi].live[pc].get())
    }

    pub fn insert_probe(&mut self, loc: CodeLocation, probe: Probe) -> Result<(), InstrumentError> {
        let (fi, pc) = self.resolve(loc)?;
        if let Probe::Operand(_) = probe {
            if self.codes[fi].side.operand_depth(loc.pc) == Some(0) {
                return Err(InstrumentError::InvalidLocation(loc));
            }
        }
        let len = self.codes[fi].pristine.len();
        let lists = &mut self.local[fi];
        if lists.is_empty() {
            lists.resize(len, None);
        }
        let list = lists[pc].get_or_insert_with(ProbeList::default);
        if list.contains(&probe) {
            return Err(InstrumentError::DuplicateInsert(loc.to_string()));
        }
        list.push(probe);
        if list.len() == 1 {
            self.probed_sites += 1;
            self.codes[fi].live[pc].set(PROBE);
        }
        Ok(())
    }

    pub fn remove_probe(
        &mut self,
        loc: CodeLocation,
        probe: &Probe,
    ) -> Result<(), InstrumentError> {
        let (fi, pc) = self.resolve(loc)?;
        let not_installed = || InstrumentError::NotInstalled(loc.to_string());
        let slot = self.local[fi].get_mut(pc).ok_or_else(not_installed)?;
        let list = slot.as_mut().ok_or_else(not_installed)?;
        if !list.remove(probe) {
            return Err(not_installed());
        }
        if list.is_empty() {
            *slot = None;
            self.probed_sites -= 1;
            let code = &self.codes[fi];
            code.live[pc].set(code.pristine[pc]);
        }
        Ok(())
    }

    /// Snapshot of the probes at `loc`, in firing order.
    pub fn probes_at(&self, loc: CodeLocation) -> Result<ProbeList, InstrumentError> {
        let (fi, pc) = self.resolve(loc)?;
        Ok(self.local[fi]
            .get(pc)
            .and_then(Clone::clone)
            .unwrap_or_default())
    }

    /// Every location that has local probes, with a snapshot of its list.
    pub fn local_probes(&self) -> Vec<(CodeLocation, ProbeList)> {
        let first = self.module.num_imported_funcs();
        let mut out = Vec::new();
        for (fi, lists) in self.local.iter().enumerate() {
            for (pc, slot) in lists.iter().enumerate() {
                if let Some(list) = slot {
                    let loc = CodeLocation::new(self.module.id, first + fi as u32, pc as u32);
                    out.push((loc, list.clone()));
                }
            }
        }
        out
    }

    pub fn insert_global_probe(&mut self, probe: Probe) -> Result<(), InstrumentError> {
        if self.global.contains(&probe) {
            return Err(InstrumentError::DuplicateInsert("global".into()));
        }
        self.global.push(probe);
        if self.global.len() == 1 {
            self.set_dispatch_mode(DispatchMode::Global);
        }
        Ok(())
    }

    pub fn remove_global_probe(&mut self, probe: &Probe) -> Result<(), InstrumentError> {
        if !self.global.remove(probe) {
            return Err(InstrumentError::NotInstalled("global".into()));
        }
        if self.global.is_empty() {
            self.set_dispatch_mode(DispatchMode::Normal);
        }
        Ok(())
    }

    pub fn global_probes(&self) -> ProbeList {
        self.global.clone()
    }

    /// Removes every probe and restores all code to its original bytes.
    pub fn remove_all(&mut self) {
        for (fi, lists) in self.local.iter_mut().enumerate() {
            let code = &self.codes[fi];
            for (pc, slot) in lists.iter_mut().enumerate() {
                if slot.take().is_some() {
                    code.live[pc].set(code.pristine[pc]);
                }
            }
            lists.clear();
        }
        self.probed_sites = 0;
        self.global = ProbeList {
            probes: Rc::from([]),
            version: self.global.version + 1,
        };
        self.set_dispatch_mode(DispatchMode::Normal);
    }
}

/// What a generic probe sees when it fires: its location, lazy access to the
/// executing frame, and the instrumentation API.
pub struct ProbeContext<'a> {
    pub(crate) core: &'a mut Core,
    instr: &'a mut Instrumentation,
    loc: CodeLocation,
}

impl<'a> ProbeContext<'a> {
    pub fn location(&self) -> CodeLocation {
        self.loc
    }

    /// The accessor of the executing frame. Materialized on first request
    /// and reused for the rest of the frame's lifetime.
    pub fn accessor(&mut self) -> FrameAccessor {
        let top = self.core.frames.len() - 1;
        accessor::materialize(self.core, top)
    }

    pub fn instrumentation(&mut self) -> &mut Instrumentation {
        self.instr
    }

    pub fn module(&self) -> &Rc<Module> {
        &self.core.module
    }

    /// Identifies the current top-level invocation; changes with every call
    /// into the instance.
    pub fn execution_id(&self) -> u64 {
        self.core.execution
    }

    /// Fires `probe` as if it were attached at the current location.
    pub fn fire(&mut self, probe: &Probe) -> Result<(), MonitorError> {
        let loc = self.loc;
        fire_one(self.core, self.instr, probe, loc)
    }

    /// The function stored in table slot `index`, if any.
    pub fn table_entry(&self, index: u32) -> Option<u32> {
        self.core.table.get(index as usize).copied().flatten()
    }

    /// Shortcut for the executing frame's operand `k` (0 = top).
    pub fn operand(&mut self, k: u32) -> Result<Value, MonitorError> {
        let a = self.accessor();
        Ok(a.get_operand(self, k)?)
    }
}

impl Core {
    fn top_value(&self, pc: u32) -> Value {
        let ty = self.code.side.operand_type(pc, 0).unwrap_or(ValueType::I32);
        Value::from_bits(ty, self.stack.last().copied().unwrap_or(0))
    }
}

fn guard(f: impl FnOnce() -> Result<(), MonitorError>) -> Result<(), MonitorError> {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(r) => r,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            Err(MonitorError(format!("probe panicked: {msg}")))
        }
    }
}

fn fire_one(
    core: &mut Core,
    instr: &mut Instrumentation,
    probe: &Probe,
    loc: CodeLocation,
) -> Result<(), MonitorError> {
    match probe {
        Probe::Counter(c) => {
            c.hit();
            Ok(())
        }
        Probe::Operand(p) => {
            let top = core.top_value(loc.pc);
            guard(|| {
                p.fire_tos(loc, top);
                Ok(())
            })
        }
        Probe::Generic(p) => {
            let mut ctx = ProbeContext { core, instr, loc };
            guard(|| p.fire(&mut ctx))
        }
    }
}

/// Fires the global probe list at the current instruction.
pub(crate) fn fire_global(
    core: &mut Core,
    instr: &mut Instrumentation,
) -> Result<(), MonitorError> {
    let snapshot = instr.global.probes.clone();
    let loc = core.location(core.pc);
    for p in snapshot.iter() {
        fire_one(core, instr, p, loc)?;
    }
    Ok(())
}

/// The local probes attached to the current instruction, as they are now.
pub(crate) fn local_snapshot(core: &Core, instr: &Instrumentation) -> Option<Rc<[Probe]>> {
    let fi = (core.code.func_index - instr.module.num_imported_funcs()) as usize;
    instr.local[fi]
        .get(core.pc)
        .and_then(Option::as_ref)
        .map(|l| l.probes.clone())
}

/// Fires the local probes attached to the current instruction.
pub(crate) fn fire_local(core: &mut Core, instr: &mut Instrumentation) -> Result<(), MonitorError> {
    let pc = core.pc;
    let fi = (core.code.func_index - instr.module.num_imported_funcs()) as usize;
    let Some(list) = instr.local[fi].get(pc).and_then(Option::as_ref) else {
        return Ok(());
    };
    // A lone counter needs no snapshot: incrementing cannot change the list.
    if let [Probe::Counter(c)] = &list.probes[..] {
        c.hit();
        return Ok(());
    }
    let snapshot = list.probes.clone();
    fire_snapshot(core, instr, &snapshot)
}

/// Fires a previously taken snapshot of local probes.
pub(crate) fn fire_snapshot(core: &mut Core, instr: &mut Instrumentation, probes: &[Probe]) -> Result<(), MonitorError> {
    let loc = core.location(core.pc);
    for p in probes {
        fire_one(core, instr, p, loc)?;
    }
    Ok(())
}
