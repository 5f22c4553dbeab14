use std::cell::{Cell, RefCell};
use std::fmt::Write as _;
use std::rc::Rc;

use super::{listings, Monitor, Report, Row};
use crate::error::MonitorError;
use crate::instrument::{CountProbe, Instrumentation, Probe};

/// How the per-instruction counters are realized.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// A [`CountProbe`] per instruction; the engine increments it directly.
    Counter,
    /// An opaque closure per instruction, dispatched like any user probe.
    Generic,
    /// One global probe that looks up the current location.
    Global,
}

enum Counts {
    Counter(Vec<Vec<(u32, Rc<CountProbe>)>>),
    Generic(Vec<Vec<(u32, Rc<Cell<u64>>)>>),
    /// Per function, indexed by pc.
    Global(Rc<RefCell<Vec<Vec<u64>>>>),
}

/// Execution count of every instruction.
pub struct HotnessMonitor {
    mode: Mode,
    funcs: Vec<(u32, Vec<(u32, String)>)>,
    counts: Option<Counts>,
}

impl HotnessMonitor {
    pub fn new(mode: Mode) -> Self {
        HotnessMonitor {
            mode,
            funcs: Vec::new(),
            counts: None,
        }
    }

    fn count_of(&self, fi: usize, k: usize, pc: u32) -> u64 {
        match self.counts.as_ref() {
            Some(Counts::Counter(c)) => c[fi][k].1.count(),
            Some(Counts::Generic(c)) => c[fi][k].1.get(),
            Some(Counts::Global(c)) => c.borrow()[fi][pc as usize],
            None => 0,
        }
    }
}

impl Monitor for HotnessMonitor {
    fn name(&self) -> &'static str {
        "hotness"
    }

    fn on_load(&mut self, instr: &mut Instrumentation) -> Result<(), MonitorError> {
        let module = instr.module().clone();
        let all = listings(&module);
        self.funcs = all
            .iter()
            .map(|(f, l)| (*f, l.iter().map(|i| (i.pc, i.to_string())).collect()))
            .collect();
        self.counts = Some(match self.mode {
            Mode::Counter => {
                let mut per = Vec::new();
                for (f, listing) in &all {
                    let mut v = Vec::new();
                    for ins in listing {
                        let c = CountProbe::new();
                        instr.insert_probe(module.location(*f, ins.pc), Probe::from(c.clone()))?;
                        v.push((ins.pc, c));
                    }
                    per.push(v);
                }
                Counts::Counter(per)
            }
            Mode::Generic => {
                let mut per = Vec::new();
                for (f, listing) in &all {
                    let mut v = Vec::new();
                    for ins in listing {
                        let c = Rc::new(Cell::new(0u64));
                        let cc = c.clone();
                        let probe = Probe::from_fn(move |_| {
                            cc.set(cc.get() + 1);
                            Ok(())
                        });
                        instr.insert_probe(module.location(*f, ins.pc), probe)?;
                        v.push((ins.pc, c));
                    }
                    per.push(v);
                }
                Counts::Generic(per)
            }
            Mode::Global => {
                let first = module.num_imported_funcs();
                let table: Vec<Vec<u64>> = (first..module.num_funcs())
                    .map(|f| vec![0; module.func(f).expect("defined").body_len() as usize])
                    .collect();
                let table = Rc::new(RefCell::new(table));
                let t = table.clone();
                instr.insert_global_probe(Probe::from_fn(move |ctx| {
                    let loc = ctx.location();
                    t.borrow_mut()[(loc.func - first) as usize][loc.pc as usize] += 1;
                    Ok(())
                }))?;
                Counts::Global(table)
            }
        });
        Ok(())
    }

    fn on_finish(&mut self) -> Report {
        let mut rows = Vec::new();
        let mut per_func = Vec::new();
        for (fi, (f, listing)) in self.funcs.iter().enumerate() {
            let counts: Vec<u64> = listing
                .iter()
                .enumerate()
                .map(|(k, (pc, _))| self.count_of(fi, k, *pc))
                .collect();
            for ((pc, text), n) in listing.iter().zip(&counts) {
                rows.push(Row::at(*f, *pc, text.clone(), n));
            }
            let total: u64 = counts.iter().sum();
            per_func.push((total, *f, fi, counts));
        }
        // Hottest functions first; ties in index order.
        per_func.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
        let mut text = String::new();
        for (total, f, fi, counts) in &per_func {
            let _ = writeln!(text, "func {f}: {total} instructions");
            let max = counts.iter().copied().max().unwrap_or(0).max(1);
            for ((pc, ins), n) in self.funcs[*fi].1.iter().zip(counts) {
                let bar = "#".repeat(((n * 20).div_ceil(max)) as usize);
                let _ = writeln!(text, "  {pc:>5} {n:>12} {bar:<20} {ins}");
            }
        }
        Report {
            monitor: "hotness".into(),
            text,
            rows,
        }
    }
}
