use std::rc::Rc;

use super::{table, Monitor, Report, Row};
use crate::error::MonitorError;
use crate::instrument::{CountProbe, Instrumentation, Probe};
use crate::validate::BlockKind;

struct Site {
    func: u32,
    loop_pc: u32,
    header_pc: u32,
    count: Rc<CountProbe>,
}

/// Loop iteration counts: a counter on the first instruction inside every
/// loop, which runs once on entry and once per backedge.
#[derive(Default)]
pub struct LoopMonitor {
    sites: Vec<Site>,
}

impl LoopMonitor {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Monitor for LoopMonitor {
    fn name(&self) -> &'static str {
        "loop"
    }

    fn on_load(&mut self, instr: &mut Instrumentation) -> Result<(), MonitorError> {
        let module = instr.module().clone();
        for f in module.num_imported_funcs()..module.num_funcs() {
            let decl = module.func(f).expect("defined function");
            for b in decl.sidetable().blocks() {
                if b.kind != BlockKind::Loop {
                    continue;
                }
                let count = CountProbe::new();
                instr.insert_probe(module.location(f, b.body_pc), Probe::from(count.clone()))?;
                self.sites.push(Site {
                    func: f,
                    loop_pc: b.start_pc,
                    header_pc: b.body_pc,
                    count,
                });
            }
        }
        Ok(())
    }

    fn on_finish(&mut self) -> Report {
        let mut rows = Vec::new();
        let mut cells = Vec::new();
        for s in &self.sites {
            let n = s.count.count();
            rows.push(Row::at(s.func, s.header_pc, format!("loop@{}", s.loop_pc), n));
            cells.push(vec![
                s.func.to_string(),
                s.loop_pc.to_string(),
                s.header_pc.to_string(),
                n.to_string(),
            ]);
        }
        Report {
            monitor: "loop".into(),
            text: table(&["func", "loop", "header", "iterations"], &cells),
            rows,
        }
    }
}
