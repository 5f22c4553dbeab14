use std::cell::RefCell;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::rc::Rc;

use super::{listings, Monitor, Report, Row};
use crate::disasm::Immediate;
use crate::error::MonitorError;
use crate::instrument::{CountProbe, Instrumentation, Probe};
use crate::opcodes;

type Edges = Rc<RefCell<BTreeMap<(u32, u32, u32), u64>>>;

/// Dynamic call graph: a counter on every direct call site and, on every
/// `call_indirect`, a probe that resolves the table slot selected by the
/// top-of-stack index.
#[derive(Default)]
pub struct CallsMonitor {
    direct: Vec<((u32, u32, u32), Rc<CountProbe>)>,
    indirect: Edges,
}

impl CallsMonitor {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Monitor for CallsMonitor {
    fn name(&self) -> &'static str {
        "calls"
    }

    fn on_load(&mut self, instr: &mut Instrumentation) -> Result<(), MonitorError> {
        let module = instr.module().clone();
        for (f, listing) in listings(&module) {
            for ins in listing {
                let loc = module.location(f, ins.pc);
                match (ins.opcode, &ins.imm) {
                    (opcodes::CALL, Immediate::Func(callee)) => {
                        let c = CountProbe::new();
                        instr.insert_probe(loc, Probe::from(c.clone()))?;
                        self.direct.push(((f, ins.pc, *callee), c));
                    }
                    (opcodes::CALL_INDIRECT, _) => {
                        let edges = self.indirect.clone();
                        let probe = Probe::from_fn(move |ctx| {
                            let slot = ctx.operand(0)?.as_i32().unwrap_or_default() as u32;
                            if let Some(target) = ctx.table_entry(slot) {
                                *edges.borrow_mut().entry((loc.func, loc.pc, target)).or_insert(0) += 1;
                            }
                            Ok(())
                        });
                        instr.insert_probe(loc, probe)?;
                    }
                    _ => {}
                }
            }
        }
        Ok(())
    }

    fn on_finish(&mut self) -> Report {
        let mut edges: BTreeMap<(u32, u32, u32), (u64, bool)> = BTreeMap::new();
        for (k, c) in &self.direct {
            if c.count() > 0 {
                edges.insert(*k, (c.count(), false));
            }
        }
        for (k, n) in self.indirect.borrow().iter() {
            edges.insert(*k, (*n, true));
        }
        let mut rows = Vec::new();
        let mut text = String::new();
        for ((f, pc, callee), (n, indirect)) in edges {
            rows.push(Row::at(f, pc, format!("->{callee}"), n));
            let via = if indirect { " (indirect)" } else { "" };
            let _ = writeln!(text, "{f}@{pc} -> {callee}  x{n}{via}");
        }
        Report {
            monitor: "calls".into(),
            text,
            rows,
        }
    }
}
