//! The monitor zoo: self-contained analyses built only on the public probe
//! API.
//!
//! A monitor instruments an instance before it runs ([`Monitor::on_load`]),
//! observes through its probes, and produces a [`Report`] at the end
//! ([`Monitor::on_finish`]). Monitor state lives in the probes' own
//! closures, shared with the monitor through `Rc`.

mod branch;
mod calls;
mod coverage;
pub mod debug;
mod hotness;
mod loops;
mod memory;
mod trace;

use std::fmt::Write as _;
use std::rc::Rc;

use thiserror::Error;

pub use branch::BranchMonitor;
pub use calls::CallsMonitor;
pub use coverage::CoverageMonitor;
pub use debug::DebugMonitor;
pub use hotness::HotnessMonitor;
pub use loops::LoopMonitor;
pub use memory::MemoryMonitor;
pub use trace::TraceMonitor;

use crate::disasm::{self, Instruction};
use crate::error::{ExecError, LinkError, MonitorError};
use crate::exec::{Imports, Instance};
use crate::instrument::Instrumentation;
use crate::module::Module;
use crate::types::Value;

pub trait Monitor {
    fn name(&self) -> &'static str;
    /// Installs the monitor's probes. Runs before any code of the instance.
    fn on_load(&mut self, instr: &mut Instrumentation) -> Result<(), MonitorError>;
    /// Summarizes what was observed.
    fn on_finish(&mut self) -> Report;
}

/// One machine-readable report line.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Row {
    pub func: Option<u32>,
    pub pc: Option<u32>,
    pub label: String,
    pub value: String,
}

impl Row {
    pub fn at(func: u32, pc: u32, label: impl Into<String>, value: impl ToString) -> Row {
        Row {
            func: Some(func),
            pc: Some(pc),
            label: label.into(),
            value: value.to_string(),
        }
    }

    pub fn func(func: u32, label: impl Into<String>, value: impl ToString) -> Row {
        Row {
            func: Some(func),
            pc: None,
            label: label.into(),
            value: value.to_string(),
        }
    }

    pub fn global(label: impl Into<String>, value: impl ToString) -> Row {
        Row {
            func: None,
            pc: None,
            label: label.into(),
            value: value.to_string(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Report {
    pub monitor: String,
    /// Human-readable rendering.
    pub text: String,
    pub rows: Vec<Row>,
}

impl Report {
    /// Rows as `monitor<TAB>func<TAB>pc<TAB>label<TAB>value` lines; absent
    /// fields are written as `-`.
    pub fn tsv(&self) -> String {
        let mut out = String::new();
        for r in &self.rows {
            let opt = |v: Option<u32>| v.map_or_else(|| "-".to_string(), |v| v.to_string());
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}",
                self.monitor,
                opt(r.func),
                opt(r.pc),
                r.label,
                r.value
            );
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown monitor {0:?}")]
pub struct UnknownMonitor(pub String);

pub struct MonitorInfo {
    pub name: &'static str,
    pub description: &'static str,
}

pub const MONITORS: &[MonitorInfo] = &[
    MonitorInfo {
        name: "trace",
        description: "prints every executed instruction with call depth and operand stack",
    },
    MonitorInfo {
        name: "coverage",
        description: "instruction coverage via self-removing probes",
    },
    MonitorInfo {
        name: "loop",
        description: "counts loop iterations at every loop header",
    },
    MonitorInfo {
        name: "hotness",
        description: "execution count of every instruction (variants :generic, :global)",
    },
    MonitorInfo {
        name: "branch",
        description: "direction profile of if, br_if and br_table (variant :global)",
    },
    MonitorInfo {
        name: "memory",
        description: "log of every load and store with address and value",
    },
    MonitorInfo {
        name: "calls",
        description: "dynamic call graph of direct and indirect calls",
    },
    MonitorInfo {
        name: "debug",
        description: "interactive bytecode debugger (breakpoints, stepping, frame editing)",
    },
];

/// Creates a monitor from its registry name, optionally followed by
/// `:variant`. The `debug` monitor created here reads commands from standard
/// input.
pub fn create(spec: &str) -> Result<Box<dyn Monitor>, UnknownMonitor> {
    let unknown = || UnknownMonitor(spec.to_string());
    let (name, variant) = match spec.split_once(':') {
        Some((n, v)) => (n, Some(v)),
        None => (spec, None),
    };
    Ok(match (name, variant) {
        ("trace", None) => Box::new(TraceMonitor::new()),
        ("coverage", None) => Box::new(CoverageMonitor::new()),
        ("loop", None) => Box::new(LoopMonitor::new()),
        ("hotness", None) => Box::new(HotnessMonitor::new(hotness::Mode::Counter)),
        ("hotness", Some("generic")) => Box::new(HotnessMonitor::new(hotness::Mode::Generic)),
        ("hotness", Some("global")) => Box::new(HotnessMonitor::new(hotness::Mode::Global)),
        ("branch", None) => Box::new(BranchMonitor::new(false)),
        ("branch", Some("global")) => Box::new(BranchMonitor::new(true)),
        ("memory", None) => Box::new(MemoryMonitor::new()),
        ("calls", None) => Box::new(CallsMonitor::new()),
        ("debug", None) => Box::new(DebugMonitor::new(Box::new(debug::Repl::stdio()))),
        _ => return Err(unknown()),
    })
}

/// Parses a comma-separated monitor list.
pub fn create_all(list: &str) -> Result<Vec<Box<dyn Monitor>>, UnknownMonitor> {
    list.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(create)
        .collect()
}

/// Outcome of [`run_monitored`].
pub struct MonitoredRun {
    pub instance: Instance,
    pub result: Result<Vec<Value>, ExecError>,
    pub reports: Vec<Report>,
}

/// Instantiates `module`, lets every monitor instrument it, runs the start
/// function and `entry`, and collects the reports.
pub fn run_monitored(
    module: Rc<Module>,
    imports: &Imports,
    entry: &str,
    args: &[Value],
    monitors: &mut [Box<dyn Monitor>],
) -> Result<MonitoredRun, LinkError> {
    let mut instance = Instance::new_unstarted(module, imports)?;
    let mut result = Ok(Vec::new());
    for m in monitors.iter_mut() {
        if let Err(e) = m.on_load(instance.instrumentation_mut()) {
            result = Err(ExecError::Monitor(e));
            break;
        }
    }
    if result.is_ok() {
        result = instance
            .run_start()
            .and_then(|_| instance.invoke(entry, args));
    }
    let reports = monitors.iter_mut().map(|m| m.on_finish()).collect();
    Ok(MonitoredRun {
        instance,
        result,
        reports,
    })
}

/// Every defined function with its pristine instruction listing.
pub(crate) fn listings(module: &Module) -> Vec<(u32, Vec<Instruction>)> {
    (module.num_imported_funcs()..module.num_funcs())
        .map(|f| (f, disasm::disassemble(module.func(f).expect("defined function"))))
        .collect()
}

/// Left-aligned text table.
pub(crate) fn table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for r in rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.len());
        }
    }
    let mut out = String::new();
    let line = |cells: Vec<&str>, out: &mut String| {
        let parts: Vec<String> = cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect();
        let _ = writeln!(out, "{}", parts.join("  ").trim_end());
    };
    line(header.to_vec(), &mut out);
    for r in rows {
        line(r.iter().map(String::as_str).collect(), &mut out);
    }
    out
}
