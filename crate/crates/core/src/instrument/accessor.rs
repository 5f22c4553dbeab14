//! Frame accessors: validity-checked views of live interpreter frames.

use std::cell::Cell;
use std::rc::Rc;

use crate::error::AccessError;
use crate::exec::{Core, Frame, Instance};
use crate::module::FuncDecl;
use crate::types::{Value, ValueType};

use super::ProbeContext;

pub(crate) struct AccessorInner {
    engine: u64,
    frame_id: u64,
    index: u32,
}

thread_local! {
    static ALLOCATED: Cell<u64> = const { Cell::new(0) };
}

/// Number of frame accessors created on this thread so far.
pub fn accessors_allocated() -> u64 {
    ALLOCATED.with(Cell::get)
}

/// Returns the accessor of frame `index`, creating it on first request.
pub(crate) fn materialize(core: &mut Core, index: usize) -> FrameAccessor {
    let frame = &mut core.frames[index];
    if let Some(a) = &frame.accessor {
        return FrameAccessor(a.clone());
    }
    ALLOCATED.with(|c| c.set(c.get() + 1));
    let inner = Rc::new(AccessorInner {
        engine: core.engine,
        frame_id: frame.frame_id,
        index: index as u32,
    });
    frame.accessor = Some(inner.clone());
    FrameAccessor(inner)
}

mod sealed {
    pub trait Host {
        fn core_ref(&self) -> &crate::exec::Core;
        fn core_mut(&mut self) -> &mut crate::exec::Core;
    }
}

/// Something that owns live frames: a probe context during firing, or an
/// instance with a suspended invocation.
pub trait FrameHost: sealed::Host {}

impl sealed::Host for ProbeContext<'_> {
    fn core_ref(&self) -> &Core {
        self.core
    }
    fn core_mut(&mut self) -> &mut Core {
        self.core
    }
}
impl FrameHost for ProbeContext<'_> {}

impl sealed::Host for Instance {
    fn core_ref(&self) -> &Core {
        &self.core
    }
    fn core_mut(&mut self) -> &mut Core {
        &mut self.core
    }
}
impl FrameHost for Instance {}

impl Instance {
    /// Accessor of the executing frame of a suspended invocation.
    pub fn top_frame(&mut self) -> Option<FrameAccessor> {
        let n = self.core.frames.len();
        (n > 0).then(|| materialize(&mut self.core, n - 1))
    }
}

/// A view of one interpreter frame.
///
/// There is at most one accessor per frame, so accessors can be compared by
/// identity. Every method first checks that the frame is still live; once the
/// frame has returned (or the execution ended) the accessor is stale and all
/// methods fail with [`AccessError::StaleAccessor`].
#[derive(Clone)]
pub struct FrameAccessor(Rc<AccessorInner>);

impl std::fmt::Debug for FrameAccessor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "FrameAccessor(frame {})", self.0.frame_id)
    }
}

struct View<'c> {
    core: &'c Core,
    index: usize,
    frame: &'c Frame,
}

impl View<'_> {
    fn is_top(&self) -> bool {
        self.index + 1 == self.core.frames.len()
    }

    fn pc(&self) -> u32 {
        if self.is_top() {
            self.core.pc as u32
        } else {
            self.frame.pc
        }
    }

    fn locals(&self) -> std::ops::Range<usize> {
        let b = self.frame.base as usize;
        b..b + self.frame.code.num_locals as usize
    }

    fn operands(&self) -> std::ops::Range<usize> {
        let start = self.locals().end;
        let end = if self.is_top() {
            self.core.stack.len()
        } else {
            self.core.frames[self.index + 1].base as usize
        };
        start..end
    }

    fn local_type(&self, i: usize) -> ValueType {
        self.core
            .module
            .func(self.frame.code.func_index)
            .expect("frames run defined functions")
            .local_types[i]
    }

    /// Static type of operand `k` (0 = top). For suspended callers, the call
    /// instruction has already consumed its arguments, so the static stack at
    /// the call site is deeper than the live one.
    fn operand_type(&self, k: u32) -> Option<ValueType> {
        let side = &self.frame.code.side;
        let pc = self.pc();
        let live = self.operands().len() as u32;
        let skip = side.operand_depth(pc).unwrap_or(live).saturating_sub(live);
        side.operand_type(pc, k + skip)
    }
}

impl FrameAccessor {
    fn view<'c>(&self, core: &'c Core) -> Result<View<'c>, AccessError> {
        if core.engine != self.0.engine {
            return Err(AccessError::WrongContext);
        }
        let index = self.0.index as usize;
        let frame = core.frames.get(index).ok_or(AccessError::StaleAccessor)?;
        match &frame.accessor {
            Some(a) if frame.frame_id == self.0.frame_id && Rc::ptr_eq(a, &self.0) => {
                Ok(View { core, index, frame })
            }
            _ => Err(AccessError::StaleAccessor),
        }
    }

    pub fn frame_id(&self) -> u64 {
        self.0.frame_id
    }

    pub fn ptr_eq(&self, other: &FrameAccessor) -> bool {
        Rc::ptr_eq(&self.0, &other.0)
    }

    pub fn is_valid(&self, host: &impl FrameHost) -> bool {
        self.view(host.core_ref()).is_ok()
    }

    pub fn func<'h>(&self, host: &'h impl FrameHost) -> Result<&'h FuncDecl, AccessError> {
        let v = self.view(host.core_ref())?;
        Ok(v.core
            .module
            .func(v.frame.code.func_index)
            .expect("defined function"))
    }

    /// Index of the frame's function in the module's function index space.
    pub fn func_index(&self, host: &impl FrameHost) -> Result<u32, AccessError> {
        Ok(self.view(host.core_ref())?.frame.code.func_index)
    }

    /// The frame's current instruction: where it is executing, or for a
    /// caller, the call instruction it is suspended at.
    pub fn pc(&self, host: &impl FrameHost) -> Result<u32, AccessError> {
        Ok(self.view(host.core_ref())?.pc())
    }

    /// Number of frames below this one plus one.
    pub fn depth(&self, host: &impl FrameHost) -> Result<u32, AccessError> {
        Ok(self.view(host.core_ref())?.index as u32 + 1)
    }

    pub fn caller(&self, host: &mut impl FrameHost) -> Result<Option<FrameAccessor>, AccessError> {
        let index = self.view(host.core_ref())?.index;
        if index == 0 {
            return Ok(None);
        }
        Ok(Some(materialize(host.core_mut(), index - 1)))
    }

    pub fn num_locals(&self, host: &impl FrameHost) -> Result<u32, AccessError> {
        Ok(self.view(host.core_ref())?.frame.code.num_locals)
    }

    pub fn get_local(&self, host: &impl FrameHost, i: u32) -> Result<Value, AccessError> {
        let v = self.view(host.core_ref())?;
        let r = v.locals();
        check_index(i, r.len())?;
        Ok(Value::from_bits(
            v.local_type(i as usize),
            v.core.stack[r.start + i as usize],
        ))
    }

    pub fn set_local(
        &self,
        host: &mut impl FrameHost,
        i: u32,
        value: Value,
    ) -> Result<(), AccessError> {
        let v = self.view(host.core_ref())?;
        let r = v.locals();
        check_index(i, r.len())?;
        check_type(v.local_type(i as usize), value)?;
        let slot = r.start + i as usize;
        host.core_mut().stack[slot] = value.to_bits();
        Ok(())
    }

    pub fn locals(&self, host: &impl FrameHost) -> Result<Vec<Value>, AccessError> {
        let n = self.num_locals(host)?;
        (0..n).map(|i| self.get_local(host, i)).collect()
    }

    pub fn num_operands(&self, host: &impl FrameHost) -> Result<u32, AccessError> {
        Ok(self.view(host.core_ref())?.operands().len() as u32)
    }

    /// Operand `k`, counting from the top of the frame's operand stack.
    pub fn get_operand(&self, host: &impl FrameHost, k: u32) -> Result<Value, AccessError> {
        let v = self.view(host.core_ref())?;
        let r = v.operands();
        check_index(k, r.len())?;
        let ty = v.operand_type(k).unwrap_or(ValueType::I32);
        Ok(Value::from_bits(ty, v.core.stack[r.end - 1 - k as usize]))
    }

    pub fn set_operand(
        &self,
        host: &mut impl FrameHost,
        k: u32,
        value: Value,
    ) -> Result<(), AccessError> {
        let v = self.view(host.core_ref())?;
        let r = v.operands();
        check_index(k, r.len())?;
        if let Some(ty) = v.operand_type(k) {
            check_type(ty, value)?;
        }
        let slot = r.end - 1 - k as usize;
        host.core_mut().stack[slot] = value.to_bits();
        Ok(())
    }

    /// All operands, bottom of the stack first.
    pub fn operands(&self, host: &impl FrameHost) -> Result<Vec<Value>, AccessError> {
        let n = self.num_operands(host)?;
        (0..n).rev().map(|k| self.get_operand(host, k)).collect()
    }
}

fn check_index(i: u32, len: usize) -> Result<(), AccessError> {
    if (i as usize) < len {
        Ok(())
    } else {
        Err(AccessError::IndexOutOfRange {
            index: i,
            len: len as u32,
        })
    }
}

fn check_type(expected: ValueType, value: Value) -> Result<(), AccessError> {
    if value.ty() == expected {
        Ok(())
    } else {
        Err(AccessError::TypeMismatch {
            expected,
            found: value.ty(),
        })
    }
}
