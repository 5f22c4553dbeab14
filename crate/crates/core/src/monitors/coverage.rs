use std::cell::RefCell;
use std::collections::BTreeSet;
use std::rc::{Rc, Weak};

use super::{listings, table, Monitor, Report, Row};
use crate::error::MonitorError;
use crate::instrument::{GenericProbe, Instrumentation, Probe, ProbeContext};

type Covered = Rc<RefCell<BTreeSet<(u32, u32)>>>;

/// Marks its location covered and uninstalls itself, so each instruction
/// pays for instrumentation at most once.
struct Once {
    covered: Covered,
    this: Weak<Once>,
}

impl GenericProbe for Once {
    fn fire(&self, ctx: &mut ProbeContext<'_>) -> Result<(), MonitorError> {
        let loc = ctx.location();
        self.covered.borrow_mut().insert((loc.func, loc.pc));
        let me = Probe::Generic(self.this.upgrade().expect("alive while firing"));
        ctx.instrumentation().remove_probe(loc, &me)?;
        Ok(())
    }
}

/// Instruction coverage. One self-removing probe per instruction.
#[derive(Default)]
pub struct CoverageMonitor {
    covered: Covered,
    listing: Vec<(u32, Vec<(u32, &'static str)>)>,
}

impl CoverageMonitor {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Monitor for CoverageMonitor {
    fn name(&self) -> &'static str {
        "coverage"
    }

    fn on_load(&mut self, instr: &mut Instrumentation) -> Result<(), MonitorError> {
        let module = instr.module().clone();
        for (f, listing) in listings(&module) {
            let mut pcs = Vec::with_capacity(listing.len());
            for ins in listing {
                let probe = Rc::new_cyclic(|this| Once {
                    covered: self.covered.clone(),
                    this: this.clone(),
                });
                instr.insert_probe(module.location(f, ins.pc), Probe::Generic(probe))?;
                pcs.push((ins.pc, ins.mnemonic()));
            }
            self.listing.push((f, pcs));
        }
        Ok(())
    }

    fn on_finish(&mut self) -> Report {
        let covered = self.covered.borrow();
        let mut rows = Vec::new();
        let mut summary = Vec::new();
        for (f, pcs) in &self.listing {
            let mut hit = 0;
            for &(pc, m) in pcs {
                let c = covered.contains(&(*f, pc));
                hit += c as usize;
                rows.push(Row::at(*f, pc, m, c as u8));
            }
            let pct = if pcs.is_empty() {
                0.0
            } else {
                100.0 * hit as f64 / pcs.len() as f64
            };
            rows.push(Row::func(*f, "percent", format!("{pct:.1}")));
            summary.push(vec![
                f.to_string(),
                format!("{hit}/{}", pcs.len()),
                format!("{pct:.1}%"),
            ]);
        }
        Report {
            monitor: "coverage".into(),
            text: table(&["func", "covered", "percent"], &summary),
            rows,
        }
    }
}
