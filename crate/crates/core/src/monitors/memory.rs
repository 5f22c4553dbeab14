use std::cell::{Cell, RefCell};
use std::fmt::Write as _;
use std::rc::Rc;

use super::{listings, Monitor, Report, Row};
use crate::error::MonitorError;
use crate::instrument::library::after_instruction;
use crate::instrument::{Instrumentation, Probe};
use crate::opcodes;
use crate::types::Value;

struct Access {
    func: u32,
    pc: u32,
    store: bool,
    width: u32,
    addr: u64,
    /// Stored operand, or loaded result once the load has completed.
    value: Option<Value>,
}

type Log = Rc<RefCell<Vec<Access>>>;

/// Logs every load and store. The effective address and stored value are
/// read from the operand stack before the access; a loaded value is read
/// from the top of the stack at the instruction that follows the load,
/// using [`after_instruction`].
#[derive(Default)]
pub struct MemoryMonitor {
    log: Log,
}

impl MemoryMonitor {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Monitor for MemoryMonitor {
    fn name(&self) -> &'static str {
        "memory"
    }

    fn on_load(&mut self, instr: &mut Instrumentation) -> Result<(), MonitorError> {
        let module = instr.module().clone();
        for (f, listing) in listings(&module) {
            for ins in listing {
                let Some((width, _)) = opcodes::mem_access(ins.opcode) else {
                    continue;
                };
                let crate::disasm::Immediate::MemArg { offset, .. } = ins.imm else {
                    continue;
                };
                let store = opcodes::is_store(ins.opcode);
                let loc = module.location(f, ins.pc);
                // Index of this site's most recent log entry, for the
                // after-load probe to fill in.
                let pending: Rc<Cell<usize>> = Rc::default();
                let log = self.log.clone();
                let p = pending.clone();
                let probe = Probe::from_fn(move |ctx| {
                    let (base, value) = if store {
                        (ctx.operand(1)?, Some(ctx.operand(0)?))
                    } else {
                        (ctx.operand(0)?, None)
                    };
                    let base = base.as_i32().unwrap_or_default() as u32 as u64;
                    let mut log = log.borrow_mut();
                    p.set(log.len());
                    log.push(Access {
                        func: loc.func,
                        pc: loc.pc,
                        store,
                        width,
                        addr: base + offset as u64,
                        value,
                    });
                    Ok(())
                });
                instr.insert_probe(loc, probe)?;
                if !store {
                    let log = self.log.clone();
                    let after = Probe::from_fn(move |ctx| {
                        let v = ctx.operand(0)?;
                        if let Some(a) = log.borrow_mut().get_mut(pending.get()) {
                            a.value = Some(v);
                        }
                        Ok(())
                    });
                    after_instruction(instr, loc, after)?;
                }
            }
        }
        Ok(())
    }

    fn on_finish(&mut self) -> Report {
        let mut rows = Vec::new();
        let mut text = String::new();
        for a in self.log.borrow().iter() {
            let kind = if a.store { "store" } else { "load" };
            let value = a.value.map_or_else(|| "-".to_string(), |v| v.to_string());
            rows.push(Row::at(a.func, a.pc, format!("{kind}{}@{}", a.width, a.addr), &value));
            let _ = writeln!(
                text,
                "{}:{:<5} {kind:<5} {} bytes @ {:<10} {value}",
                a.func, a.pc, a.width, a.addr
            );
        }
        Report {
            monitor: "memory".into(),
            text,
            rows,
        }
    }
}
