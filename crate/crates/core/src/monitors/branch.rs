use std::cell::{Cell, RefCell};
use std::collections::HashMap;
use std::fmt::Write as _;
use std::rc::Rc;

use super::{listings, Monitor, Report, Row};
use crate::error::MonitorError;
use crate::instrument::{Instrumentation, Probe};
use crate::opcodes;
use crate::types::Value;

enum Tally {
    /// `if` / `br_if`: non-zero (taken) and zero conditions.
    Cond { taken: Cell<u64>, not_taken: Cell<u64> },
    /// `br_table`: one bucket per target; the last is the default.
    Table(RefCell<Vec<u64>>),
}

impl Tally {
    fn record(&self, v: Value) {
        let i = v.as_i32().unwrap_or_default();
        match self {
            Tally::Cond { taken, not_taken } => {
                let c = if i != 0 { taken } else { not_taken };
                c.set(c.get() + 1);
            }
            Tally::Table(h) => {
                let mut h = h.borrow_mut();
                let slot = (i as u32 as usize).min(h.len() - 1);
                h[slot] += 1;
            }
        }
    }

    fn total(&self) -> u64 {
        match self {
            Tally::Cond { taken, not_taken } => taken.get() + not_taken.get(),
            Tally::Table(h) => h.borrow().iter().sum(),
        }
    }
}

struct Site {
    func: u32,
    pc: u32,
    mnemonic: &'static str,
    tally: Rc<Tally>,
}

/// Branch direction profile. The local version puts a top-of-stack probe on
/// every `if`, `br_if` and `br_table`; the global version uses a single
/// global probe that filters by location and reads the condition through
/// the frame accessor.
pub struct BranchMonitor {
    global: bool,
    sites: Vec<Site>,
}

impl BranchMonitor {
    pub fn new(global: bool) -> Self {
        BranchMonitor {
            global,
            sites: Vec::new(),
        }
    }
}

impl Monitor for BranchMonitor {
    fn name(&self) -> &'static str {
        "branch"
    }

    fn on_load(&mut self, instr: &mut Instrumentation) -> Result<(), MonitorError> {
        let module = instr.module().clone();
        for (f, listing) in listings(&module) {
            let side = module.func(f).expect("defined").sidetable();
            for ins in listing {
                let tally = match ins.opcode {
                    opcodes::IF | opcodes::BR_IF => Tally::Cond {
                        taken: Cell::new(0),
                        not_taken: Cell::new(0),
                    },
                    opcodes::BR_TABLE => {
                        Tally::Table(RefCell::new(vec![0; side.branch_targets(ins.pc).len()]))
                    }
                    _ => continue,
                };
                self.sites.push(Site {
                    func: f,
                    pc: ins.pc,
                    mnemonic: ins.mnemonic(),
                    tally: Rc::new(tally),
                });
            }
        }
        if self.global {
            let first = module.num_imported_funcs();
            let mut by_pc: Vec<HashMap<u32, Rc<Tally>>> =
                (first..module.num_funcs()).map(|_| HashMap::new()).collect();
            for s in &self.sites {
                by_pc[(s.func - first) as usize].insert(s.pc, s.tally.clone());
            }
            instr.insert_global_probe(Probe::from_fn(move |ctx| {
                let loc = ctx.location();
                if let Some(t) = by_pc[(loc.func - first) as usize].get(&loc.pc) {
                    let v = ctx.operand(0)?;
                    t.record(v);
                }
                Ok(())
            }))?;
        } else {
            for s in &self.sites {
                let t = s.tally.clone();
                let probe = Probe::operand_fn(move |_, v| t.record(v));
                instr.insert_probe(module.location(s.func, s.pc), probe)?;
            }
        }
        Ok(())
    }

    fn on_finish(&mut self) -> Report {
        let mut rows = Vec::new();
        let mut text = String::new();
        for s in self.sites.iter().filter(|s| s.tally.total() > 0) {
            match &*s.tally {
                Tally::Cond { taken, not_taken } => {
                    let (t, n) = (taken.get(), not_taken.get());
                    rows.push(Row::at(s.func, s.pc, "taken", t));
                    rows.push(Row::at(s.func, s.pc, "not-taken", n));
                    let pct = 100.0 * t as f64 / (t + n) as f64;
                    let _ = writeln!(
                        text,
                        "{}:{:<5} {:<8} taken {t} / not-taken {n} ({pct:.1}% taken)",
                        s.func, s.pc, s.mnemonic
                    );
                }
                Tally::Table(h) => {
                    let h = h.borrow();
                    let last = h.len() - 1;
                    let mut parts = Vec::new();
                    for (i, n) in h.iter().enumerate() {
                        let label = if i == last {
                            "default".to_string()
                        } else {
                            format!("target[{i}]")
                        };
                        parts.push(format!("{label}:{n}"));
                        rows.push(Row::at(s.func, s.pc, label, n));
                    }
                    let _ = writeln!(text, "{}:{:<5} {:<8} {}", s.func, s.pc, s.mnemonic, parts.join(" "));
                }
            }
        }
        Report {
            monitor: "branch".into(),
            text,
            rows,
        }
    }
}
