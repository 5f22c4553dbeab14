//! `wasmprobe` — run a WebAssembly module under monitors, benchmark monitor
//! overhead, or debug it from a WebSocket client.
//!
//! ```text
//! wasmprobe [run] [--monitors=a,b] [--report=PATH] MODULE.wasm [ARGS...]
//! wasmprobe [run] --bench[=N] [--empty-probes] [--monitors=a,b] MODULE.wasm [ARGS...]
//! wasmprobe [run] --debug-port=P MODULE.wasm [ARGS...]
//! wasmprobe --list-monitors
//! ```
//!
//! Exit codes: 0 success, 1 trap, 2 usage or load error, 3 monitor error.

use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::rc::Rc;

use clap::Parser;
use wasmprobe::bench::{self, Program, Variant};
use wasmprobe::monitors::{self, Report, MONITORS};
use wasmprobe::{ExecError, Imports, Module, Value};
use wasmprobe_debug_server as debug_server;

const USAGE: u8 = 2;
const MONITOR_FAILURE: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "wasmprobe", version, about = "WebAssembly interpreter with probe-based instrumentation")]
struct Cli {
    /// Comma-separated monitors to attach, e.g. `hotness,branch:global`.
    #[arg(long, value_name = "LIST", default_value = "")]
    monitors: String,

    /// Also write every report as tab-separated rows to this file.
    #[arg(long, value_name = "PATH")]
    report: Option<PathBuf>,

    /// Benchmark instead of running once: N repetitions per variant.
    #[arg(long, value_name = "N", num_args = 0..=1, require_equals = true, default_missing_value = "5")]
    bench: Option<usize>,

    /// With --bench, also measure each monitor's probes with empty bodies.
    #[arg(long, requires = "bench")]
    empty_probes: bool,

    /// Serve the debugger on ws://127.0.0.1:P/debug and wait for a client.
    #[arg(long, value_name = "P", conflicts_with = "bench")]
    debug_port: Option<u16>,

    /// Exported function to call (default: `main`, else `_start`).
    #[arg(long, value_name = "NAME")]
    entry: Option<String>,

    /// Print the available monitors and exit.
    #[arg(long)]
    list_monitors: bool,

    /// The module to run: a binary `.wasm` or text `.wat` file.
    #[arg(required_unless_present = "list_monitors")]
    module: Option<PathBuf>,

    /// Arguments of the entry function, e.g. `5` or `i64:-3`.
    #[arg(allow_hyphen_values = true)]
    args: Vec<String>,
}

/// A failure that ends the process with `code` after printing `message`.
struct Fail {
    code: u8,
    message: String,
}

fn fail(code: u8, message: impl ToString) -> Fail {
    Fail {
        code,
        message: message.to_string(),
    }
}

fn main() -> ExitCode {
    // `wasmprobe run ...` and `wasmprobe ...` are the same command.
    let mut argv: Vec<String> = std::env::args().collect();
    if argv.get(1).map(String::as_str) == Some("run") {
        argv.remove(1);
    }
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { USAGE } else { 0 });
        }
    };
    let code = match run(&cli) {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    };
    let _ = io::stdout().flush();
    ExitCode::from(code)
}

fn run(cli: &Cli) -> Result<u8, Fail> {
    if cli.list_monitors {
        let width = MONITORS.iter().map(|m| m.name.len()).max().unwrap_or(0);
        for m in MONITORS {
            println!("{:width$}  {}", m.name, m.description);
        }
        return Ok(0);
    }
    let path = cli.module.as_ref().expect("required by clap");
    let bytes = fs::read(path).map_err(|e| fail(USAGE, format!("{}: {e}", path.display())))?;
    // Text-format modules are assembled first.
    let bytes = if path.extension().is_some_and(|e| e == "wat") {
        wat::parse_bytes(&bytes)
            .map_err(|e| fail(USAGE, format!("{}: {e}", path.display())))?
            .into_owned()
    } else {
        bytes
    };
    let module = Rc::new(Module::load(&bytes).map_err(|e| fail(USAGE, format!("{}: {e}", path.display())))?);
    let entry = entry_point(&module, cli.entry.as_deref())?;
    let args = parse_args(&module, &entry, &cli.args)?;
    // Resolve every name up front so a typo fails before anything runs.
    let monitors = monitors::create_all(&cli.monitors).map_err(|e| fail(USAGE, e))?;

    if let Some(reps) = cli.bench {
        return run_bench(cli, module, &entry, &args, reps);
    }
    let imports = Imports::env(io::stdout());
    let run = match cli.debug_port {
        Some(port) => {
            let (frontend, handle) = debug_server::serve(port).map_err(|e| fail(USAGE, format!("debug server: {e}")))?;
            eprintln!("debugger listening on {}; waiting for a client", handle.url());
            handle.wait_for_client(None);
            let run = debug_server::run_debugged(frontend, &handle, module, &imports, &entry, &args, monitors)
                .map_err(|e| fail(USAGE, e))?;
            handle.shutdown();
            run
        }
        None => {
            let mut monitors = monitors;
            monitors::run_monitored(module, &imports, &entry, &args, &mut monitors).map_err(|e| fail(USAGE, e))?
        }
    };
    let _ = io::stdout().flush();
    emit_reports(&run.reports, cli.report.as_ref())?;
    match &run.result {
        Ok(values) => {
            if !values.is_empty() {
                let text: Vec<String> = values.iter().map(Value::to_string).collect();
                println!("{}", text.join(" "));
            }
            Ok(0)
        }
        Err(ExecError::Trap(t)) => {
            eprintln!("trap: {t}");
            Ok(1)
        }
        Err(ExecError::Monitor(e)) => {
            eprintln!("error: {e}");
            Ok(MONITOR_FAILURE)
        }
        Err(e) => Err(fail(USAGE, e)),
    }
}

fn entry_point(module: &Module, requested: Option<&str>) -> Result<String, Fail> {
    let candidates: Vec<&str> = match requested {
        Some(name) => vec![name],
        None => vec!["main", "_start"],
    };
    candidates
        .iter()
        .find(|n| module.exported_func(n).is_some())
        .map(|n| n.to_string())
        .ok_or_else(|| fail(USAGE, format!("no exported function named {}", candidates.join(" or "))))
}

fn parse_args(module: &Module, entry: &str, raw: &[String]) -> Result<Vec<Value>, Fail> {
    let func = module.exported_func(entry).expect("resolved entry");
    let ty = module.func_type(func).expect("typed function");
    if ty.params.len() != raw.len() {
        return Err(fail(
            USAGE,
            format!("{entry} takes {} argument(s), got {}", ty.params.len(), raw.len()),
        ));
    }
    ty.params
        .iter()
        .zip(raw)
        .map(|(&t, s)| Value::parse(s, t).map_err(|e| fail(USAGE, format!("argument {s:?}: {e}"))))
        .collect()
}

fn emit_reports(reports: &[Report], tsv: Option<&PathBuf>) -> Result<(), Fail> {
    for r in reports {
        eprintln!("== {} ==", r.monitor);
        eprint!("{}", r.text);
        if !r.text.ends_with('\n') {
            eprintln!();
        }
    }
    if let Some(path) = tsv {
        let text: String = reports.iter().map(Report::tsv).collect();
        fs::write(path, text).map_err(|e| fail(USAGE, format!("{}: {e}", path.display())))?;
    }
    Ok(())
}

fn run_bench(cli: &Cli, module: Rc<Module>, entry: &str, args: &[Value], reps: usize) -> Result<u8, Fail> {
    let specs: Vec<&str> = cli.monitors.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
    let mut variants = vec![Variant::Stripped];
    for s in &specs {
        variants.push(Variant::Monitor(s.to_string()));
        if cli.empty_probes {
            variants.push(Variant::EmptyProbes(s.to_string()));
        }
    }
    // Program output is discarded while timing.
    let imports = || Imports::env(io::sink());
    let program = Program {
        module,
        imports: &imports,
        entry,
        args,
    };
    match bench::bench(&program, &variants, reps) {
        Ok(table) => {
            print!("{table}");
            Ok(0)
        }
        Err(bench::BenchError::Monitor(e)) => Err(fail(MONITOR_FAILURE, e)),
        Err(bench::BenchError::Exec {
            variant,
            error: ExecError::Monitor(e),
        }) => Err(fail(MONITOR_FAILURE, format!("{variant}: {e}"))),
        Err(e) => Err(fail(USAGE, e)),
    }
}
