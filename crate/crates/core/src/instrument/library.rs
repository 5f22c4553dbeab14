//! Higher-level hooks built only from the public probe API.

use std::cell::{Cell, RefCell};
use std::rc::{Rc, Weak};

use super::{FrameAccessor, GenericProbe, Instrumentation, Probe, ProbeContext};
use crate::error::{InstrumentError, MonitorError};
use crate::opcodes;
use crate::types::{CodeLocation, Value};
use crate::validate::RETURN_TARGET;

pub type Callback = Rc<dyn Fn(&mut ProbeContext<'_>) -> Result<(), MonitorError>>;

/// Probes installed by [`instrument_entry_exit`]; pass to
/// [`EntryExit::remove`] to uninstall them.
pub struct EntryExit {
    installed: Vec<(CodeLocation, Probe)>,
}

impl EntryExit {
    pub fn remove(self, instr: &mut Instrumentation) -> Result<(), InstrumentError> {
        for (loc, p) in &self.installed {
            instr.remove_probe(*loc, p)?;
        }
        Ok(())
    }
}

/// Calls `on_entry` once whenever a new frame of `func` starts and `on_exit`
/// once whenever such a frame returns normally.
///
/// The entry probe sits on the first instruction and keeps a shadow stack of
/// frame accessors, so re-executing the first instruction in the same frame
/// (a backedge to a loop starting the function) is not mistaken for an
/// entry. Exit probes sit on every `return`, on the final `end`, and on every
/// branch to the function's outermost label; the conditional ones only act
/// when the branch is taken. A frame that is unwound by a trap produces no
/// exit event.
pub fn instrument_entry_exit(
    instr: &mut Instrumentation,
    func: u32,
    on_entry: Callback,
    on_exit: Callback,
) -> Result<EntryExit, InstrumentError> {
    let module = instr.module().clone();
    let decl = module
        .func(func)
        .ok_or(InstrumentError::InvalidLocation(module.location(func, 0)))?;
    let shadow: Rc<RefCell<Vec<FrameAccessor>>> = Rc::default();

    let sh = shadow.clone();
    let entry = Probe::from_fn(move |ctx| {
        let a = ctx.accessor();
        {
            let mut s = sh.borrow_mut();
            // Frames unwound by a trap were never popped.
            while s.last().is_some_and(|t| !t.is_valid(ctx)) {
                s.pop();
            }
            if s.last().is_some_and(|t| t.ptr_eq(&a)) {
                return Ok(());
            }
            s.push(a);
        }
        on_entry(ctx)
    });

    let mut installed = vec![(module.location(func, 0), entry)];
    let side = decl.sidetable();
    for ins in crate::disasm::disassemble(decl) {
        let exit_kind = match ins.opcode {
            opcodes::RETURN => Some(ExitKind::Always),
            opcodes::END if ins.next_pc() == decl.body_len() => Some(ExitKind::Always),
            opcodes::BR if side.branch_targets(ins.pc)[0].target_pc == RETURN_TARGET => {
                Some(ExitKind::Always)
            }
            opcodes::BR_IF if side.branch_targets(ins.pc)[0].target_pc == RETURN_TARGET => {
                Some(ExitKind::IfTaken)
            }
            opcodes::BR_TABLE
                if side
                    .branch_targets(ins.pc)
                    .iter()
                    .any(|t| t.target_pc == RETURN_TARGET) =>
            {
                Some(ExitKind::Table)
            }
            _ => None,
        };
        let Some(kind) = exit_kind else { continue };
        let sh = shadow.clone();
        let on_exit = on_exit.clone();
        let probe = Probe::from_fn(move |ctx| {
            let pc = ctx.location().pc;
            let leaving = match kind {
                ExitKind::Always => true,
                ExitKind::IfTaken => ctx.operand(0)? != Value::I32(0),
                ExitKind::Table => {
                    let i = ctx.operand(0)?.as_i32().unwrap_or_default() as u32;
                    let func = ctx.location().func;
                    let module = ctx.module().clone();
                    let targets = module
                        .func(func)
                        .expect("defined")
                        .sidetable()
                        .branch_targets(pc);
                    let chosen = targets[(i as usize).min(targets.len() - 1)];
                    chosen.target_pc == RETURN_TARGET
                }
            };
            if !leaving {
                return Ok(());
            }
            let a = ctx.accessor();
            let matched = {
                let mut s = sh.borrow_mut();
                if s.last().is_some_and(|t| t.ptr_eq(&a)) {
                    s.pop();
                    true
                } else {
                    false
                }
            };
            if matched {
                on_exit(ctx)?;
            }
            Ok(())
        });
        installed.push((module.location(func, ins.pc), probe));
    }

    let mut done = Vec::new();
    for (loc, p) in installed {
        if let Err(e) = instr.insert_probe(loc, p.clone()) {
            for (l, q) in &done {
                let _ = instr.remove_probe(*l, q);
            }
            return Err(e);
        }
        done.push((loc, p));
    }
    Ok(EntryExit { installed: done })
}

#[derive(Clone, Copy)]
enum ExitKind {
    Always,
    IfTaken,
    Table,
}

/// One-shot global probe: fires its target at the next instruction executed
/// and then removes itself.
struct OneShot {
    target: Probe,
    this: Weak<OneShot>,
    armed_in: Cell<Option<u64>>,
}

impl GenericProbe for OneShot {
    fn fire(&self, ctx: &mut ProbeContext<'_>) -> Result<(), MonitorError> {
        let me = Probe::Generic(self.this.upgrade().expect("alive while firing"));
        ctx.instrumentation().remove_global_probe(&me)?;
        let armed_in = self.armed_in.take();
        // Armed by an execution that ended before another instruction ran.
        if armed_in != Some(ctx.execution_id()) {
            return Ok(());
        }
        ctx.fire(&self.target)
    }
}

/// Arranges for `probe` to fire once after each execution of the instruction
/// at `loc`, at whatever instruction executes next: the following
/// instruction, a branch target, or the first instruction of a callee. If
/// execution ends right after `loc`, `probe` does not fire.
///
/// Returns the local probe installed at `loc`; remove it to stop.
pub fn after_instruction(
    instr: &mut Instrumentation,
    loc: CodeLocation,
    probe: Probe,
) -> Result<Probe, InstrumentError> {
    let shot = Rc::new_cyclic(|this| OneShot {
        target: probe,
        this: this.clone(),
        armed_in: Cell::new(None),
    });
    let global = Probe::Generic(shot.clone());
    let arm = Probe::from_fn(move |ctx| {
        if shot.armed_in.get().is_none() {
            shot.armed_in.set(Some(ctx.execution_id()));
            ctx.instrumentation().insert_global_probe(global.clone())?;
        } else {
            // Still installed from an execution that ended right after `loc`.
            shot.armed_in.set(Some(ctx.execution_id()));
        }
        Ok(())
    });
    instr.insert_probe(loc, arm.clone())?;
    Ok(arm)
}
