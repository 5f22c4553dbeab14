use std::cell::RefCell;
use std::collections::HashMap;
use std::fmt::Write as _;
use std::rc::Rc;

use super::{listings, Monitor, Report, Row};
use crate::error::MonitorError;
use crate::instrument::{Instrumentation, Probe};

#[derive(Default)]
struct Line {
    depth: u32,
    func: u32,
    pc: u32,
    instr: Rc<str>,
    stack: String,
}

/// Prints every executed instruction, indented by call depth, followed by
/// the operand stack as it is just before the instruction executes.
#[derive(Default)]
pub struct TraceMonitor {
    lines: Rc<RefCell<Vec<Line>>>,
}

impl TraceMonitor {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Monitor for TraceMonitor {
    fn name(&self) -> &'static str {
        "trace"
    }

    fn on_load(&mut self, instr: &mut Instrumentation) -> Result<(), MonitorError> {
        let mut text: HashMap<(u32, u32), Rc<str>> = HashMap::new();
        for (f, listing) in listings(instr.module()) {
            for ins in listing {
                text.insert((f, ins.pc), ins.to_string().into());
            }
        }
        let lines = self.lines.clone();
        let probe = Probe::from_fn(move |ctx| {
            let loc = ctx.location();
            let a = ctx.accessor();
            let depth = a.depth(ctx)?;
            let stack: Vec<String> = a.operands(ctx)?.iter().map(|v| v.to_string()).collect();
            lines.borrow_mut().push(Line {
                depth,
                func: loc.func,
                pc: loc.pc,
                instr: text[&(loc.func, loc.pc)].clone(),
                stack: stack.join(" "),
            });
            Ok(())
        });
        instr.insert_global_probe(probe)?;
        Ok(())
    }

    fn on_finish(&mut self) -> Report {
        let lines = self.lines.borrow();
        let mut text = String::new();
        let mut rows = Vec::with_capacity(lines.len());
        for l in lines.iter() {
            let indent = "  ".repeat(l.depth.saturating_sub(1) as usize);
            let _ = writeln!(text, "{indent}{}:{:<5} {:<24} [{}]", l.func, l.pc, l.instr, l.stack);
            rows.push(Row::at(l.func, l.pc, &*l.instr, format!("{}|{}", l.depth, l.stack)));
        }
        Report {
            monitor: "trace".into(),
            text,
            rows,
        }
    }
}
