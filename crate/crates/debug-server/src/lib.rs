//! Remote control of the interactive debugger over a WebSocket.
//!
//! [`serve`] binds a listener on localhost and starts an I/O thread that
//! accepts one client at a time on the `/debug` path. The engine side is a
//! [`RemoteFrontend`], a [`DebugFrontend`] that forwards pauses to the client
//! and blocks on its commands; [`ServerHandle`] publishes reports and the exit
//! status. A client that disconnects while the program is paused leaves it
//! paused; the next client to connect receives the current pause again.
//!
//! The engine is single-threaded and never touched by the I/O thread: the two
//! talk only through channels. While the program runs, queued requests are
//! handled at function entries and loop headers, so `pause` and breakpoint
//! edits take effect there; everything that needs a paused frame is answered
//! with a "not paused" error.

pub mod protocol;

use std::io::{self, ErrorKind};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::rc::Rc;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, Receiver, Sender, TryRecvError};
use std::sync::{Arc, Condvar, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use serde_json::{json, Value as Json};
use tungstenite::handshake::server::{ErrorResponse, Request as HttpRequest, Response as HttpResponse};
use tungstenite::{Message, WebSocket};
use wasmprobe::disasm;
use wasmprobe::monitors::debug::{DebugError, DebugFrontend, Paused, PauseReason, Resume, Running};
use wasmprobe::monitors::{self, DebugMonitor, Monitor, MonitoredRun, Report};
use wasmprobe::{ExecError, Imports, LinkError, Module, MonitorError, Value};

use crate::protocol::{codes, param_u32, param_u32_or, parse_request, parse_value, value_json, ErrorObject, Outgoing, Request};

pub const PATH: &str = "/debug";

/// How often the I/O thread looks at its outgoing queue while waiting for
/// client input.
const TICK: Duration = Duration::from_millis(5);

enum Inbound {
    Request(Request),
}

enum Outbound {
    Send(Outgoing),
    /// The engine paused; the event is replayed to clients that connect
    /// before it resumes.
    Paused(Outgoing),
    Resumed,
    Shutdown,
}

struct Shared {
    connected: Mutex<bool>,
    connected_cv: Condvar,
    /// Set once the program has finished. Guarded together with request
    /// forwarding so that no request is queued after the final drain.
    exited: Mutex<bool>,
    stop: AtomicBool,
}

/// Starts the server on `127.0.0.1:port` (0 picks a free port).
pub fn serve(port: u16) -> io::Result<(RemoteFrontend, ServerHandle)> {
    let listener = TcpListener::bind(("127.0.0.1", port))?;
    listener.set_nonblocking(true)?;
    let addr = listener.local_addr()?;
    let shared = Arc::new(Shared {
        connected: Mutex::new(false),
        connected_cv: Condvar::new(),
        exited: Mutex::new(false),
        stop: AtomicBool::new(false),
    });
    let (in_tx, in_rx) = mpsc::channel();
    let (out_tx, out_rx) = mpsc::channel();
    let inbound = Arc::new(Mutex::new(in_rx));
    let thread = {
        let shared = shared.clone();
        thread::Builder::new()
            .name("debug-server".into())
            .spawn(move || io_loop(listener, in_tx, out_rx, shared))?
    };
    let frontend = RemoteFrontend {
        inbound: inbound.clone(),
        outbound: out_tx.clone(),
    };
    let handle = ServerHandle {
        addr,
        inbound,
        outbound: out_tx,
        shared,
        thread: Some(thread),
    };
    Ok((frontend, handle))
}

/// Control of the server from the embedding program.
pub struct ServerHandle {
    addr: SocketAddr,
    inbound: Arc<Mutex<Receiver<Inbound>>>,
    outbound: Sender<Outbound>,
    shared: Arc<Shared>,
    thread: Option<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("ws://{}{PATH}", self.addr)
    }

    /// Blocks until a client is connected; `None` waits forever. Returns
    /// whether one is.
    pub fn wait_for_client(&self, timeout: Option<Duration>) -> bool {
        let deadline = timeout.map(|t| Instant::now() + t);
        let mut connected = self.shared.connected.lock().unwrap();
        while !*connected {
            match deadline {
                None => connected = self.shared.connected_cv.wait(connected).unwrap(),
                Some(d) => {
                    let now = Instant::now();
                    if now >= d {
                        return false;
                    }
                    connected = self.shared.connected_cv.wait_timeout(connected, d - now).unwrap().0;
                }
            }
        }
        true
    }

    pub fn report(&self, report: &Report) {
        self.send(Outgoing::event(
            "report",
            json!({ "monitor": report.monitor, "text": report.text }),
        ));
    }

    /// Announces the end of the program. Requests still queued are answered
    /// with an error, as is everything that arrives later.
    pub fn exited(&self, code: i32) {
        let mut exited = self.shared.exited.lock().unwrap();
        *exited = true;
        let rx = self.inbound.lock().unwrap();
        while let Ok(Inbound::Request(req)) = rx.try_recv() {
            self.send(Outgoing::reply(req.id, Err(exited_error())));
        }
        drop(exited);
        self.send(Outgoing::event("exited", json!({ "code": code })));
    }

    /// Flushes pending messages, closes the connection and stops the I/O
    /// thread. Also done on drop.
    pub fn shutdown(mut self) {
        self.stop();
    }

    fn stop(&mut self) {
        if let Some(t) = self.thread.take() {
            let _ = self.outbound.send(Outbound::Shutdown);
            self.shared.stop.store(true, Ordering::Relaxed);
            let _ = t.join();
        }
    }

    fn send(&self, m: Outgoing) {
        let _ = self.outbound.send(Outbound::Send(m));
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.stop();
    }
}

fn exited_error() -> ErrorObject {
    ErrorObject::new(codes::EXITED, "program has exited")
}

/// Process exit status for the outcome of a run: 0 on success, 1 on a trap,
/// 3 when a monitor failed, 2 for any other error.
pub fn exit_code(result: &Result<Vec<Value>, ExecError>) -> i32 {
    match result {
        Ok(_) => 0,
        Err(ExecError::Trap(_)) => 1,
        Err(ExecError::Monitor(_)) => 3,
        Err(_) => 2,
    }
}

/// Runs `entry` under `monitors` plus a debugger driven by the remote client,
/// then publishes every report and the exit code.
pub fn run_debugged(
    frontend: RemoteFrontend,
    handle: &ServerHandle,
    module: Rc<Module>,
    imports: &Imports,
    entry: &str,
    args: &[Value],
    mut monitors: Vec<Box<dyn Monitor>>,
) -> Result<MonitoredRun, LinkError> {
    monitors.push(Box::new(DebugMonitor::new(Box::new(frontend))));
    let run = match monitors::run_monitored(module, imports, entry, args, &mut monitors) {
        Ok(run) => run,
        Err(e) => {
            handle.exited(2);
            return Err(e);
        }
    };
    for r in &run.reports {
        handle.report(r);
    }
    handle.exited(exit_code(&run.result));
    Ok(run)
}

// ---------------------------------------------------------------------------
// Engine side

/// The engine-side end of the connection.
pub struct RemoteFrontend {
    inbound: Arc<Mutex<Receiver<Inbound>>>,
    outbound: Sender<Outbound>,
}

impl RemoteFrontend {
    fn send(&self, m: Outgoing) {
        let _ = self.outbound.send(Outbound::Send(m));
    }
}

/// Methods that need a paused program.
const PAUSED_ONLY: &[&str] = &[
    "continue",
    "step",
    "stepOver",
    "abort",
    "getStack",
    "getLocals",
    "setLocal",
    "getOperands",
    "setOperand",
    "disassemble",
    "setWatchpoint",
    "removeWatchpoint",
];

impl DebugFrontend for RemoteFrontend {
    fn can_interrupt(&self) -> bool {
        true
    }

    fn poll(&mut self, running: &mut Running<'_, '_>) -> Result<bool, MonitorError> {
        let mut pause = false;
        let rx = self.inbound.lock().unwrap();
        loop {
            let req = match rx.try_recv() {
                Ok(Inbound::Request(req)) => req,
                Err(TryRecvError::Empty) => break,
                Err(TryRecvError::Disconnected) => return Err(MonitorError("debug server stopped".into())),
            };
            let reply = match req.method.as_str() {
                "pause" => {
                    pause = true;
                    Ok(json!({}))
                }
                "setBreakpoint" => location(&req.params)
                    .and_then(|(f, pc)| running.set_breakpoint(f, pc).map_err(debug_error))
                    .map(|_| json!({})),
                "removeBreakpoint" => location(&req.params)
                    .and_then(|(f, pc)| running.remove_breakpoint(f, pc).map_err(debug_error))
                    .map(|_| json!({})),
                m if PAUSED_ONLY.contains(&m) => Err(ErrorObject::not_paused()),
                m => Err(unknown_method(m)),
            };
            self.send(Outgoing::reply(req.id, reply));
        }
        Ok(pause)
    }

    fn on_pause(&mut self, p: &mut Paused<'_, '_>) -> Result<Resume, MonitorError> {
        let loc = p.location();
        let mut params = json!({
            "func": loc.func,
            "pc": loc.pc,
            "reason": p.reason().name(),
            "instruction": p.instruction().to_string(),
        });
        if let PauseReason::Watchpoint(id) = p.reason() {
            params["watchpoint"] = json!(id);
        }
        let _ = self.outbound.send(Outbound::Paused(Outgoing::event("paused", params)));
        let rx = self.inbound.lock().unwrap();
        loop {
            // A client that disconnects leaves the program paused for the
            // next one.
            let req = match rx.recv() {
                Ok(Inbound::Request(req)) => req,
                Err(_) => return Err(MonitorError("debug server stopped".into())),
            };
            match handle_paused(p, &req) {
                Ok(Action::Reply(result)) => self.send(Outgoing::reply(req.id, Ok(result))),
                Ok(Action::Resume(r)) => {
                    let _ = self.outbound.send(Outbound::Resumed);
                    self.send(Outgoing::reply(req.id, Ok(json!({}))));
                    return Ok(r);
                }
                Err(e) => self.send(Outgoing::reply(req.id, Err(e))),
            }
        }
    }
}

enum Action {
    Reply(Json),
    Resume(Resume),
}

fn handle_paused(p: &mut Paused<'_, '_>, req: &Request) -> Result<Action, ErrorObject> {
    let params = &req.params;
    let ok = |_| Action::Reply(json!({}));
    match req.method.as_str() {
        "continue" => Ok(Action::Resume(Resume::Continue)),
        "step" => Ok(Action::Resume(Resume::Step)),
        "stepOver" => Ok(Action::Resume(Resume::StepOver)),
        "abort" => Ok(Action::Resume(Resume::Abort)),
        // Already paused.
        "pause" => Ok(Action::Reply(json!({}))),
        "setBreakpoint" => {
            let (f, pc) = location(params)?;
            p.set_breakpoint(f, pc).map(ok).map_err(debug_error)
        }
        "removeBreakpoint" => {
            let (f, pc) = location(params)?;
            p.remove_breakpoint(f, pc).map(ok).map_err(debug_error)
        }
        "getStack" => {
            let frames: Vec<Json> = p
                .stack()
                .map_err(debug_error)?
                .into_iter()
                .enumerate()
                .map(|(i, f)| {
                    json!({
                        "frame": i,
                        "func": f.func,
                        "pc": f.pc,
                        "mnemonic": f.instruction.split(' ').next().unwrap_or_default(),
                        "instruction": f.instruction,
                        "frameId": f.frame_id,
                    })
                })
                .collect();
            Ok(Action::Reply(json!({ "frames": frames })))
        }
        "getLocals" => {
            let frame = param_u32_or(params, "frame", 0)?;
            let locals = p.locals(frame).map_err(debug_error)?;
            Ok(Action::Reply(json!({ "locals": values(locals) })))
        }
        "setLocal" => {
            let frame = param_u32_or(params, "frame", 0)?;
            let index = param_u32(params, "index")?;
            let ty = p.local_type(frame, index).map_err(debug_error)?;
            let v = parse_value(required(params, "value")?, ty)?;
            p.set_local(frame, index, v).map(ok).map_err(debug_error)
        }
        "getOperands" => {
            let frame = param_u32_or(params, "frame", 0)?;
            let operands = p.operands(frame).map_err(debug_error)?;
            Ok(Action::Reply(json!({ "operands": values(operands) })))
        }
        "setOperand" => {
            let frame = param_u32_or(params, "frame", 0)?;
            let index = param_u32(params, "index")?;
            let ty = p.operand_type(frame, index).map_err(debug_error)?;
            let v = parse_value(required(params, "value")?, ty)?;
            p.set_operand(frame, index, v).map(ok).map_err(debug_error)
        }
        "disassemble" => {
            let func = param_u32_or(params, "func", p.location().func)?;
            let listing = p.disassemble(func).map_err(debug_error)?;
            let breakpoints: Vec<u32> = p
                .breakpoints()
                .into_iter()
                .filter(|&(f, _)| f == func)
                .map(|(_, pc)| pc)
                .collect();
            Ok(Action::Reply(json!({
                "func": func,
                "instructions": listing
                    .iter()
                    .map(|i: &disasm::Instruction| json!({ "pc": i.pc, "text": i.to_string() }))
                    .collect::<Vec<_>>(),
                "breakpoints": breakpoints,
            })))
        }
        "setWatchpoint" => {
            let frame = param_u32_or(params, "frame", 0)?;
            let index = param_u32(params, "index")?;
            let id = p.set_watchpoint(frame, index).map_err(debug_error)?;
            Ok(Action::Reply(json!({ "id": id })))
        }
        "removeWatchpoint" => {
            let id = param_u32(params, "id")?;
            p.remove_watchpoint(id).map(ok).map_err(debug_error)
        }
        m => Err(unknown_method(m)),
    }
}

fn values(vs: Vec<Value>) -> Vec<Json> {
    vs.into_iter().map(value_json).collect()
}

fn location(params: &Json) -> Result<(u32, u32), ErrorObject> {
    Ok((param_u32(params, "func")?, param_u32(params, "pc")?))
}

fn required<'a>(params: &'a Json, name: &str) -> Result<&'a Json, ErrorObject> {
    params
        .get(name)
        .ok_or_else(|| ErrorObject::new(codes::INVALID_PARAMS, format!("missing parameter {name:?}")))
}

fn unknown_method(m: &str) -> ErrorObject {
    ErrorObject::new(codes::METHOD_NOT_FOUND, format!("unknown method {m:?}"))
}

fn debug_error(e: DebugError) -> ErrorObject {
    let code = match &e {
        DebugError::InvalidLocation(..) => codes::INVALID_LOCATION,
        DebugError::Instrument(_) => codes::INVALID_LOCATION,
        DebugError::BadValue(_) | DebugError::Access(_) => codes::BAD_VALUE,
        DebugError::NoSuchFrame(_)
        | DebugError::NoSuchFunction(_)
        | DebugError::NoSuchWatchpoint(_)
        | DebugError::NoSuchBreakpoint(..) => codes::NOT_FOUND,
    };
    ErrorObject::new(code, e.to_string())
}

// ---------------------------------------------------------------------------
// I/O thread

enum Flow {
    Next,
    Stop,
}

fn io_loop(listener: TcpListener, in_tx: Sender<Inbound>, out_rx: Receiver<Outbound>, shared: Arc<Shared>) {
    let mut pause = None;
    loop {
        // Without a client, outgoing messages have nowhere to go.
        loop {
            match out_rx.try_recv() {
                Ok(Outbound::Send(_)) => {}
                Ok(Outbound::Paused(e)) => pause = Some(e),
                Ok(Outbound::Resumed) => pause = None,
                Ok(Outbound::Shutdown) | Err(TryRecvError::Disconnected) => return,
                Err(TryRecvError::Empty) => break,
            }
        }
        if shared.stop.load(Ordering::Relaxed) {
            return;
        }
        match listener.accept() {
            Ok((stream, _)) => {
                if let Flow::Stop = session(stream, &in_tx, &out_rx, &shared, &mut pause) {
                    return;
                }
            }
            Err(e) if e.kind() == ErrorKind::WouldBlock => thread::sleep(TICK),
            Err(_) => thread::sleep(TICK),
        }
    }
}

fn handshake(stream: TcpStream) -> Option<WebSocket<TcpStream>> {
    stream.set_nonblocking(false).ok()?;
    stream.set_read_timeout(Some(Duration::from_secs(5))).ok()?;
    let check = |req: &HttpRequest, resp: HttpResponse| -> Result<HttpResponse, ErrorResponse> {
        if req.uri().path() == PATH {
            Ok(resp)
        } else {
            Err(tungstenite::http::Response::builder()
                .status(404)
                .body(Some(format!("no such endpoint; connect to {PATH}")))
                .expect("valid response"))
        }
    };
    let ws = tungstenite::accept_hdr(stream, check).ok()?;
    ws.get_ref().set_read_timeout(Some(TICK)).ok()?;
    Some(ws)
}

fn session(
    stream: TcpStream,
    in_tx: &Sender<Inbound>,
    out_rx: &Receiver<Outbound>,
    shared: &Shared,
    pause: &mut Option<Outgoing>,
) -> Flow {
    let Some(mut ws) = handshake(stream) else {
        return Flow::Next;
    };
    if write(&mut ws, &Outgoing::hello()).is_err() {
        return Flow::Next;
    }
    if let Some(p) = pause.as_ref() {
        if write(&mut ws, p).is_err() {
            return Flow::Next;
        }
    }
    set_connected(shared, true);
    let flow = loop {
        match ws.read() {
            Ok(Message::Text(t)) => {
                let mut failed = false;
                for line in t.as_str().lines().filter(|l| !l.trim().is_empty()) {
                    if let Some(reply) = forward(line, in_tx, shared) {
                        failed |= write(&mut ws, &reply).is_err();
                    }
                }
                if failed {
                    break Flow::Next;
                }
            }
            // Pings and the closing handshake are handled by the library.
            Ok(_) => {}
            Err(tungstenite::Error::Io(e)) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {}
            Err(_) => break Flow::Next,
        }
        let mut flow = None;
        loop {
            let m = match out_rx.try_recv() {
                Ok(Outbound::Send(m)) => m,
                Ok(Outbound::Paused(m)) => {
                    *pause = Some(m.clone());
                    m
                }
                Ok(Outbound::Resumed) => {
                    *pause = None;
                    continue;
                }
                Ok(Outbound::Shutdown) | Err(TryRecvError::Disconnected) => {
                    close(&mut ws);
                    flow = Some(Flow::Stop);
                    break;
                }
                Err(TryRecvError::Empty) => break,
            };
            if write(&mut ws, &m).is_err() {
                flow = Some(Flow::Next);
                break;
            }
        }
        if let Some(f) = flow {
            break f;
        }
    };
    set_connected(shared, false);
    flow
}

/// Hands a request to the engine, or returns the reply when the I/O thread
/// can answer by itself.
fn forward(line: &str, in_tx: &Sender<Inbound>, shared: &Shared) -> Option<Outgoing> {
    let req = match parse_request(line) {
        Ok(r) => r,
        Err((id, error)) => return Some(Outgoing::Error { id, error }),
    };
    let exited = shared.exited.lock().unwrap();
    if *exited {
        return Some(Outgoing::reply(req.id, Err(exited_error())));
    }
    let id = req.id;
    match in_tx.send(Inbound::Request(req)) {
        Ok(()) => None,
        Err(_) => Some(Outgoing::reply(id, Err(exited_error()))),
    }
}

fn write(ws: &mut WebSocket<TcpStream>, m: &Outgoing) -> tungstenite::Result<()> {
    ws.send(Message::text(m.to_line()))
}

fn close(ws: &mut WebSocket<TcpStream>) {
    if ws.close(None).is_err() {
        return;
    }
    // Wait briefly for the client's half of the closing handshake.
    let deadline = Instant::now() + Duration::from_secs(1);
    while Instant::now() < deadline {
        match ws.read() {
            Ok(_) => {}
            Err(tungstenite::Error::Io(e)) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {
                let _ = ws.flush();
            }
            Err(_) => return,
        }
    }
}

fn set_connected(shared: &Shared, v: bool) {
    *shared.connected.lock().unwrap() = v;
    shared.connected_cv.notify_all();
}
