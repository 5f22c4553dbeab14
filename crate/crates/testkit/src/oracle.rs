//! A deliberately naive reference interpreter used as a test oracle.
//!
//! It shares no code with the engine under test: decoding goes through
//! `wasmparser`, control flow is resolved by scanning for matching `end`s, and
//! values are kept as typed enums on an ordinary `Vec`. Every executed
//! instruction is tallied, which gives brute-force answers to the questions
//! the monitors answer incrementally.
//!
//! Conventions shared with the engine's notion of an "executed instruction":
//! a taken branch to a block resumes after its `end` (the `end` is not
//! executed); a branch to a loop resumes at the loop's first inner
//! instruction; a false `if` resumes after `else` (or after `end`); reaching
//! `else` jumps past `end`; the function's final `end` executes only when
//! control falls through to it.

use std::collections::{BTreeMap, BTreeSet};

use wasmparser::{BlockType, ElementItems, ElementKind, DataKind, Operator, Parser, Payload, TypeRef, ValType};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Val {
    I32(i32),
    I64(i64),
    F32(u32),
    F64(u64),
}

impl Val {
    fn zero(t: ValType) -> Val {
        match t {
            ValType::I32 => Val::I32(0),
            ValType::I64 => Val::I64(0),
            ValType::F32 => Val::F32(0),
            ValType::F64 => Val::F64(0),
            other => panic!("unsupported value type {other:?}"),
        }
    }
    fn i32(self) -> i32 {
        match self {
            Val::I32(v) => v,
            other => panic!("expected i32, found {other:?}"),
        }
    }
    fn i64(self) -> i64 {
        match self {
            Val::I64(v) => v,
            other => panic!("expected i64, found {other:?}"),
        }
    }
    fn f32(self) -> f32 {
        match self {
            Val::F32(v) => f32::from_bits(v),
            other => panic!("expected f32, found {other:?}"),
        }
    }
    fn f64(self) -> f64 {
        match self {
            Val::F64(v) => f64::from_bits(v),
            other => panic!("expected f64, found {other:?}"),
        }
    }
}

/// Trap kinds, named like the engine's.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OracleTrap {
    pub kind: &'static str,
    pub func: u32,
    pub pc: u32,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Outcome {
    Returned(Vec<Val>),
    Trapped(OracleTrap),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum BranchTally {
    /// `if` / `br_if`: condition non-zero vs zero.
    Cond { taken: u64, not_taken: u64 },
    /// `br_table`: one bucket per target, the last being the default.
    Table(Vec<u64>),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MemAccess {
    pub func: u32,
    pub pc: u32,
    pub store: bool,
    pub width: u32,
    pub addr: u64,
    /// The stored operand, or the loaded result; `None` if the access trapped.
    pub value: Option<Val>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FrameEvent {
    Entry(u32),
    Exit(u32),
}

#[derive(Clone, Debug, Default)]
pub struct Config {
    /// Replaces the top operand just before an instruction executes:
    /// `(func, pc, occurrence) -> value`, occurrence counting from 1.
    pub force_top: BTreeMap<(u32, u32, u64), Val>,
    /// Live-frame limit; entering a function beyond it traps.
    pub max_frames: usize,
}

impl Config {
    pub fn new() -> Self {
        Config {
            force_top: BTreeMap::new(),
            max_frames: 10_000,
        }
    }
}

/// Everything the oracle observed during one run (start function included).
#[derive(Clone, Debug)]
pub struct Trace {
    pub counts: BTreeMap<(u32, u32), u64>,
    pub total: u64,
    /// Every instruction boundary of every defined function.
    pub all_pcs: BTreeSet<(u32, u32)>,
    /// Header pc (first instruction inside) of every `loop`.
    pub loop_headers: BTreeSet<(u32, u32)>,
    pub branches: BTreeMap<(u32, u32), BranchTally>,
    /// `(caller, call pc, callee) -> count`, for `call` and `call_indirect`.
    pub calls: BTreeMap<(u32, u32, u32), u64>,
    pub memory_log: Vec<MemAccess>,
    pub frame_events: Vec<FrameEvent>,
    pub outcome: Outcome,
    pub memory: Vec<u8>,
    pub globals: Vec<Val>,
    pub output: String,
}

impl Trace {
    pub fn count(&self, func: u32, pc: u32) -> u64 {
        self.counts.get(&(func, pc)).copied().unwrap_or(0)
    }

    pub fn covered(&self) -> BTreeSet<(u32, u32)> {
        self.counts.keys().copied().collect()
    }
}

#[derive(Clone, Debug)]
struct Sig {
    params: Vec<ValType>,
    results: Vec<ValType>,
}

struct Func<'a> {
    index: u32,
    ty: u32,
    locals: Vec<ValType>,
    ops: Vec<(u32, Operator<'a>)>,
    /// For every block/loop/if: index of its matching `end`.
    end_of: BTreeMap<usize, usize>,
    /// For every `if` with an `else`: index of the `else`.
    else_of: BTreeMap<usize, usize>,
}

enum Import {
    Print,
    PrintLn,
    NowUs,
}

struct Machine<'a> {
    cfg: &'a Config,
    types: Vec<Sig>,
    imports: Vec<(Import, u32)>,
    funcs: Vec<Func<'a>>,
    table: Vec<Option<u32>>,
    memory: Vec<u8>,
    max_pages: u64,
    globals: Vec<Val>,
    depth: usize,
    seen: BTreeMap<(u32, u32), u64>,
    trace: Trace,
}

const PAGE: usize = 65536;

/// Parses `wasm`, instantiates it, runs its start function and then the
/// export `entry` with `args`.
pub fn run(wasm: &[u8], entry: &str, args: &[Val], cfg: &Config) -> Result<Trace, String> {
    // The interpreter recurses natively once per wasm call.
    std::thread::scope(|s| {
        std::thread::Builder::new()
            .stack_size(1 << 30)
            .spawn_scoped(s, || run_inner(wasm, entry, args, cfg))
            .map_err(|e| e.to_string())?
            .join()
            .map_err(|_| "oracle panicked".to_string())?
    })
}

fn run_inner(wasm: &[u8], entry: &str, args: &[Val], cfg: &Config) -> Result<Trace, String> {
    let mut types = Vec::new();
    let mut imports = Vec::new();
    let mut func_types = Vec::new();
    let mut table_size = 0usize;
    let mut memory = None;
    let mut global_inits = Vec::new();
    let mut exports = BTreeMap::new();
    let mut start = None;
    let mut elems = Vec::new();
    let mut datas = Vec::new();
    let mut bodies = Vec::new();

    for payload in Parser::new(0).parse_all(wasm) {
        match payload.map_err(|e| e.to_string())? {
            Payload::TypeSection(r) => {
                for ft in r.into_iter_err_on_gc_types() {
                    let ft = ft.map_err(|e| e.to_string())?;
                    types.push(Sig {
                        params: ft.params().to_vec(),
                        results: ft.results().to_vec(),
                    });
                }
            }
            Payload::ImportSection(r) => {
                for imp in r.into_imports() {
                    let imp = imp.map_err(|e| e.to_string())?;
                    let TypeRef::Func(ty) = imp.ty else {
                        return Err("only function imports are supported".into());
                    };
                    let which = match (imp.module, imp.name) {
                        ("env", "print_i32") => Import::Print,
                        ("env", "print_ln") => Import::PrintLn,
                        ("env", "now_us") => Import::NowUs,
                        (m, n) => return Err(format!("unknown import {m}.{n}")),
                    };
                    imports.push((which, ty));
                }
            }
            Payload::FunctionSection(r) => {
                for t in r {
                    func_types.push(t.map_err(|e| e.to_string())?);
                }
            }
            Payload::TableSection(r) => {
                for t in r {
                    table_size = t.map_err(|e| e.to_string())?.ty.initial as usize;
                }
            }
            Payload::MemorySection(r) => {
                for m in r {
                    let m = m.map_err(|e| e.to_string())?;
                    memory = Some((m.initial, m.maximum));
                }
            }
            Payload::GlobalSection(r) => {
                for g in r {
                    let g = g.map_err(|e| e.to_string())?;
                    global_inits.push(const_ops(&g.init_expr)?);
                }
            }
            Payload::ExportSection(r) => {
                for e in r {
                    let e = e.map_err(|e| e.to_string())?;
                    if e.kind == wasmparser::ExternalKind::Func {
                        exports.insert(e.name.to_string(), e.index);
                    }
                }
            }
            Payload::StartSection { func, .. } => start = Some(func),
            Payload::ElementSection(r) => {
                for e in r {
                    let e = e.map_err(|e| e.to_string())?;
                    let ElementKind::Active { offset_expr, .. } = e.kind else {
                        continue;
                    };
                    let ElementItems::Functions(fs) = e.items else {
                        return Err("expression element segments are unsupported".into());
                    };
                    let fs: Result<Vec<u32>, _> = fs.into_iter().collect();
                    elems.push((const_ops(&offset_expr)?, fs.map_err(|e| e.to_string())?));
                }
            }
            Payload::DataSection(r) => {
                for d in r {
                    let d = d.map_err(|e| e.to_string())?;
                    if let DataKind::Active { offset_expr, .. } = d.kind {
                        datas.push((const_ops(&offset_expr)?, d.data));
                    }
                }
            }
            Payload::CodeSectionEntry(body) => bodies.push(body),
            _ => {}
        }
    }

    let nimp = imports.len() as u32;
    let mut funcs = Vec::new();
    for (i, body) in bodies.iter().enumerate() {
        let ty = func_types[i];
        let mut locals = types[ty as usize].params.clone();
        for l in body.get_locals_reader().map_err(|e| e.to_string())? {
            let (n, t) = l.map_err(|e| e.to_string())?;
            locals.extend(std::iter::repeat_n(t, n as usize));
        }
        let mut ops = Vec::new();
        let mut reader = body.get_operators_reader().map_err(|e| e.to_string())?;
        let mut base = None;
        while !reader.eof() {
            let (op, off) = reader.read_with_offset().map_err(|e| e.to_string())?;
            let base = *base.get_or_insert(off);
            ops.push(((off - base) as u32, op));
        }
        let (end_of, else_of) = match_blocks(&ops)?;
        funcs.push(Func {
            index: nimp + i as u32,
            ty,
            locals,
            ops,
            end_of,
            else_of,
        });
    }

    let mut all_pcs = BTreeSet::new();
    let mut loop_headers = BTreeSet::new();
    for f in &funcs {
        for (k, (pc, op)) in f.ops.iter().enumerate() {
            all_pcs.insert((f.index, *pc));
            if matches!(op, Operator::Loop { .. }) {
                loop_headers.insert((f.index, f.ops[k + 1].0));
            }
        }
    }

    let mut globals = Vec::new();
    for init in &global_inits {
        let v = eval_const(init, &globals);
        globals.push(v);
    }
    let (pages, max_pages) = memory.unwrap_or((0, Some(0)));
    let mut mem = vec![0u8; pages as usize * PAGE];
    let mut table = vec![None; table_size];
    for (off, fs) in &elems {
        let off = eval_const(off, &globals).i32() as u32 as usize;
        if off + fs.len() > table.len() {
            return Err("element segment out of bounds".into());
        }
        for (k, f) in fs.iter().enumerate() {
            table[off + k] = Some(*f);
        }
    }
    for (off, bytes) in &datas {
        let off = eval_const(off, &globals).i32() as u32 as usize;
        if off + bytes.len() > mem.len() {
            return Err("data segment out of bounds".into());
        }
        mem[off..off + bytes.len()].copy_from_slice(bytes);
    }

    let entry = *exports
        .get(entry)
        .ok_or_else(|| format!("no export named {entry}"))?;

    let mut m = Machine {
        cfg,
        types,
        imports,
        funcs,
        table,
        memory: mem,
        max_pages: max_pages.unwrap_or(65536).min(65536),
        globals,
        depth: 0,
        seen: BTreeMap::new(),
        trace: Trace {
            counts: BTreeMap::new(),
            total: 0,
            all_pcs,
            loop_headers,
            branches: BTreeMap::new(),
            calls: BTreeMap::new(),
            memory_log: Vec::new(),
            frame_events: Vec::new(),
            outcome: Outcome::Returned(Vec::new()),
            memory: Vec::new(),
            globals: Vec::new(),
            output: String::new(),
        },
    };

    let mut outcome = Ok(Vec::new());
    if let Some(s) = start {
        outcome = m.invoke(s, Vec::new());
    }
    if outcome.is_ok() {
        outcome = m.invoke(entry, args.to_vec());
    }
    m.trace.outcome = match outcome {
        Ok(v) => Outcome::Returned(v),
        Err(t) => Outcome::Trapped(t),
    };
    m.trace.memory = m.memory;
    m.trace.globals = m.globals;
    Ok(m.trace)
}

#[derive(Clone, Debug)]
enum ConstOp {
    Val(Val),
    Global(u32),
}

fn const_ops(e: &wasmparser::ConstExpr<'_>) -> Result<ConstOp, String> {
    let mut r = e.get_operators_reader();
    let op = r.read().map_err(|e| e.to_string())?;
    Ok(match op {
        Operator::I32Const { value } => ConstOp::Val(Val::I32(value)),
        Operator::I64Const { value } => ConstOp::Val(Val::I64(value)),
        Operator::F32Const { value } => ConstOp::Val(Val::F32(value.bits())),
        Operator::F64Const { value } => ConstOp::Val(Val::F64(value.bits())),
        Operator::GlobalGet { global_index } => ConstOp::Global(global_index),
        other => return Err(format!("unsupported constant expression {other:?}")),
    })
}

fn eval_const(c: &ConstOp, globals: &[Val]) -> Val {
    match c {
        ConstOp::Val(v) => *v,
        ConstOp::Global(g) => globals[*g as usize],
    }
}

type Blocks = (BTreeMap<usize, usize>, BTreeMap<usize, usize>);

fn match_blocks(ops: &[(u32, Operator<'_>)]) -> Result<Blocks, String> {
    let mut end_of = BTreeMap::new();
    let mut else_of = BTreeMap::new();
    let mut open = Vec::new();
    for (k, (_, op)) in ops.iter().enumerate() {
        match op {
            Operator::Block { .. } | Operator::Loop { .. } | Operator::If { .. } => open.push(k),
            Operator::Else => {
                let i = *open.last().ok_or("else outside if")?;
                else_of.insert(i, k);
            }
            Operator::End => {
                // The function body's own `end` has no opener.
                if let Some(i) = open.pop() {
                    end_of.insert(i, k);
                }
            }
            _ => {}
        }
    }
    Ok((end_of, else_of))
}

struct Label {
    /// Continuation: loop start, or index just past the `end`.
    cont: usize,
    is_loop: bool,
    arity: usize,
    height: usize,
}

enum Flow {
    Next,
    Jump(usize),
    Return,
}

enum Fault {
    Here(&'static str),
    /// A trap raised inside a callee, passed through unchanged.
    Callee(OracleTrap),
}

impl From<&'static str> for Fault {
    fn from(kind: &'static str) -> Self {
        Fault::Here(kind)
    }
}

type Step = Result<Flow, Fault>;

macro_rules! bin {
    ($s:expr, $get:ident, $mk:expr, |$a:ident, $b:ident| $body:expr) => {{
        let $b = $s.pop().unwrap().$get();
        let $a = $s.pop().unwrap().$get();
        $s.push($mk($body));
    }};
}

macro_rules! un {
    ($s:expr, $get:ident, $mk:expr, |$a:ident| $body:expr) => {{
        let $a = $s.pop().unwrap().$get();
        $s.push($mk($body));
    }};
}

fn b(v: bool) -> Val {
    Val::I32(v as i32)
}
fn f32v(v: f32) -> Val {
    Val::F32(v.to_bits())
}
fn f64v(v: f64) -> Val {
    Val::F64(v.to_bits())
}

fn fmin32(a: f32, b: f32) -> f32 {
    if a.is_nan() || b.is_nan() {
        f32::NAN
    } else if a == b {
        f32::from_bits(a.to_bits() | b.to_bits())
    } else if a < b {
        a
    } else {
        b
    }
}
fn fmax32(a: f32, b: f32) -> f32 {
    if a.is_nan() || b.is_nan() {
        f32::NAN
    } else if a == b {
        f32::from_bits(a.to_bits() & b.to_bits())
    } else if a > b {
        a
    } else {
        b
    }
}
fn fmin64(a: f64, b: f64) -> f64 {
    if a.is_nan() || b.is_nan() {
        f64::NAN
    } else if a == b {
        f64::from_bits(a.to_bits() | b.to_bits())
    } else if a < b {
        a
    } else {
        b
    }
}
fn fmax64(a: f64, b: f64) -> f64 {
    if a.is_nan() || b.is_nan() {
        f64::NAN
    } else if a == b {
        f64::from_bits(a.to_bits() & b.to_bits())
    } else if a > b {
        a
    } else {
        b
    }
}

/// Truncates toward zero and checks that the result lies in `[lo, hi]`.
fn trunc_checked(x: f64, lo: f64, hi: f64) -> Result<f64, &'static str> {
    if x.is_nan() {
        return Err("invalid-conversion");
    }
    let t = x.trunc();
    if t < lo || t > hi {
        return Err("integer-overflow");
    }
    Ok(t)
}

const I64_MIN_F: f64 = -9_223_372_036_854_775_808.0;
const TWO_63: f64 = 9_223_372_036_854_775_808.0;
const TWO_64: f64 = 18_446_744_073_709_551_616.0;

fn trunc_to_i64(x: f64) -> Result<i64, &'static str> {
    if x.is_nan() {
        return Err("invalid-conversion");
    }
    let t = x.trunc();
    if !(I64_MIN_F..TWO_63).contains(&t) {
        return Err("integer-overflow");
    }
    Ok(t as i64)
}

fn trunc_to_u64(x: f64) -> Result<u64, &'static str> {
    if x.is_nan() {
        return Err("invalid-conversion");
    }
    let t = x.trunc();
    if t <= -1.0 || t >= TWO_64 {
        return Err("integer-overflow");
    }
    Ok(t as u64)
}

impl Machine<'_> {
    fn func_sig(&self, f: u32) -> &Sig {
        let nimp = self.imports.len() as u32;
        let ty = if f < nimp {
            self.imports[f as usize].1
        } else {
            self.funcs[(f - nimp) as usize].ty
        };
        &self.types[ty as usize]
    }

    fn invoke(&mut self, f: u32, args: Vec<Val>) -> Result<Vec<Val>, OracleTrap> {
        let nimp = self.imports.len() as u32;
        if f < nimp {
            return Ok(self.call_host(f, &args));
        }
        self.depth += 1;
        let r = self.exec(f, args);
        self.depth -= 1;
        r
    }

    fn call_host(&mut self, f: u32, args: &[Val]) -> Vec<Val> {
        match self.imports[f as usize].0 {
            Import::Print => {
                self.trace.output.push_str(&args[0].i32().to_string());
                Vec::new()
            }
            Import::PrintLn => {
                self.trace.output.push('\n');
                Vec::new()
            }
            Import::NowUs => vec![Val::I64(0)],
        }
    }

    fn exec(&mut self, fidx: u32, args: Vec<Val>) -> Result<Vec<Val>, OracleTrap> {
        let nimp = self.imports.len() as u32;
        let fi = (fidx - nimp) as usize;
        let sig = self.func_sig(fidx).clone();
        let mut locals = args;
        for t in &self.funcs[fi].locals[sig.params.len()..] {
            locals.push(Val::zero(*t));
        }
        let mut stack: Vec<Val> = Vec::new();
        let mut labels: Vec<Label> = vec![Label {
            cont: usize::MAX,
            is_loop: false,
            arity: sig.results.len(),
            height: 0,
        }];
        self.trace.frame_events.push(FrameEvent::Entry(fidx));
        let mut ip = 0usize;
        loop {
            let pc = self.funcs[fi].ops[ip].0;
            *self.trace.counts.entry((fidx, pc)).or_insert(0) += 1;
            self.trace.total += 1;
            let nth = {
                let n = self.seen.entry((fidx, pc)).or_insert(0);
                *n += 1;
                *n
            };
            if let Some(v) = self.cfg.force_top.get(&(fidx, pc, nth)) {
                *stack.last_mut().expect("forced operand exists") = *v;
            }
            let flow = match self.step(fi, ip, &mut stack, &mut locals, &mut labels) {
                Ok(flow) => flow,
                Err(Fault::Here(kind)) => return Err(OracleTrap { kind, func: fidx, pc }),
                Err(Fault::Callee(t)) => return Err(t),
            };
            match flow {
                Flow::Next => ip += 1,
                Flow::Jump(to) => ip = to,
                Flow::Return => {
                    let n = sig.results.len();
                    let results = stack.split_off(stack.len() - n);
                    self.trace.frame_events.push(FrameEvent::Exit(fidx));
                    return Ok(results);
                }
            }
        }
    }

    fn branch(&self, depth: u32, stack: &mut Vec<Val>, labels: &mut Vec<Label>) -> Flow {
        let li = labels.len() - 1 - depth as usize;
        if li == 0 {
            return Flow::Return;
        }
        let l = &labels[li];
        let keep = stack.split_off(stack.len() - l.arity);
        stack.truncate(l.height);
        stack.extend(keep);
        let cont = l.cont;
        if l.is_loop {
            labels.truncate(li + 1);
        } else {
            labels.truncate(li);
        }
        Flow::Jump(cont)
    }

    fn arity(&self, bt: &BlockType) -> usize {
        match bt {
            BlockType::Empty => 0,
            BlockType::Type(_) => 1,
            BlockType::FuncType(t) => self.types[*t as usize].results.len(),
        }
    }

    fn addr(&mut self, fi: usize, ip: usize, base: Val, offset: u64, width: u32, store: Option<Val>) -> Result<usize, &'static str> {
        let f = &self.funcs[fi];
        let addr = base.i32() as u32 as u64 + offset;
        self.trace.memory_log.push(MemAccess {
            func: f.index,
            pc: f.ops[ip].0,
            store: store.is_some(),
            width,
            addr,
            value: store,
        });
        if addr + width as u64 > self.memory.len() as u64 {
            return Err("out-of-bounds");
        }
        Ok(addr as usize)
    }

    fn load<const N: usize>(&mut self, fi: usize, ip: usize, stack: &mut Vec<Val>, offset: u64) -> Result<[u8; N], &'static str> {
        let base = stack.pop().unwrap();
        let a = self.addr(fi, ip, base, offset, N as u32, None)?;
        Ok(self.memory[a..a + N].try_into().unwrap())
    }

    fn store(&mut self, fi: usize, ip: usize, stack: &mut Vec<Val>, offset: u64, width: usize) -> Result<(), &'static str> {
        let v = stack.pop().unwrap();
        let base = stack.pop().unwrap();
        let a = self.addr(fi, ip, base, offset, width as u32, Some(v))?;
        let bytes = match v {
            Val::I32(x) => (x as u32 as u64).to_le_bytes(),
            Val::I64(x) => x.to_le_bytes(),
            Val::F32(x) => (x as u64).to_le_bytes(),
            Val::F64(x) => x.to_le_bytes(),
        };
        self.memory[a..a + width].copy_from_slice(&bytes[..width]);
        Ok(())
    }

    fn loaded(&mut self, v: Val) {
        if let Some(last) = self.trace.memory_log.last_mut() {
            last.value = Some(v);
        }
    }

    fn tally_cond(&mut self, key: (u32, u32), taken: bool) {
        let t = self
            .trace
            .branches
            .entry(key)
            .or_insert(BranchTally::Cond { taken: 0, not_taken: 0 });
        if let BranchTally::Cond { taken: a, not_taken: b } = t {
            if taken {
                *a += 1
            } else {
                *b += 1
            }
        }
    }

    fn tally_call(&mut self, fi: usize, ip: usize, callee: u32) {
        let f = &self.funcs[fi];
        *self.trace.calls.entry((f.index, f.ops[ip].0, callee)).or_insert(0) += 1;
    }

    /// Performs a call whose edge has already been tallied.
    fn do_call(&mut self, callee: u32, stack: &mut Vec<Val>) -> Result<(), Fault> {
        let nimp = self.imports.len() as u32;
        if callee >= nimp && self.depth >= self.cfg.max_frames {
            return Err("stack-exhausted".into());
        }
        let n = self.func_sig(callee).params.len();
        let args = stack.split_off(stack.len() - n);
        match self.invoke(callee, args) {
            Ok(r) => {
                stack.extend(r);
                Ok(())
            }
            Err(t) => Err(Fault::Callee(t)),
        }
    }

    fn step(&mut self, fi: usize, ip: usize, s: &mut Vec<Val>, locals: &mut [Val], labels: &mut Vec<Label>) -> Step {
        use Operator as O;
        let (pc, op) = self.funcs[fi].ops[ip].clone();
        let fidx = self.funcs[fi].index;
        match op {
            O::Unreachable => return Err("unreachable".into()),
            O::Nop => {}
            O::Block { blockty } => labels.push(Label {
                cont: self.funcs[fi].end_of[&ip] + 1,
                is_loop: false,
                arity: self.arity(&blockty),
                height: s.len(),
            }),
            O::Loop { .. } => labels.push(Label {
                cont: ip + 1,
                is_loop: true,
                arity: 0,
                height: s.len(),
            }),
            O::If { blockty } => {
                let c = s.pop().unwrap().i32();
                self.tally_cond((fidx, pc), c != 0);
                let end = self.funcs[fi].end_of[&ip];
                let label = Label {
                    cont: end + 1,
                    is_loop: false,
                    arity: self.arity(&blockty),
                    height: s.len(),
                };
                if c != 0 {
                    labels.push(label);
                } else if let Some(&e) = self.funcs[fi].else_of.get(&ip) {
                    labels.push(label);
                    return Ok(Flow::Jump(e + 1));
                } else {
                    return Ok(Flow::Jump(end + 1));
                }
            }
            O::Else => {
                let l = labels.pop().unwrap();
                return Ok(Flow::Jump(l.cont));
            }
            O::End => {
                if labels.len() == 1 {
                    return Ok(Flow::Return);
                }
                labels.pop();
            }
            O::Br { relative_depth } => return Ok(self.branch(relative_depth, s, labels)),
            O::BrIf { relative_depth } => {
                let c = s.pop().unwrap().i32();
                self.tally_cond((fidx, pc), c != 0);
                if c != 0 {
                    return Ok(self.branch(relative_depth, s, labels));
                }
            }
            O::BrTable { targets } => {
                let i = s.pop().unwrap().i32() as u32;
                let list: Vec<u32> = targets.targets().map(|t| t.unwrap()).collect();
                let n = list.len();
                let slot = (i as usize).min(n);
                let t = self
                    .trace
                    .branches
                    .entry((fidx, pc))
                    .or_insert_with(|| BranchTally::Table(vec![0; n + 1]));
                if let BranchTally::Table(h) = t {
                    h[slot] += 1;
                }
                let depth = if slot < n { list[slot] } else { targets.default() };
                return Ok(self.branch(depth, s, labels));
            }
            O::Return => return Ok(Flow::Return),
            O::Call { function_index } => {
                self.tally_call(fi, ip, function_index);
                self.do_call(function_index, s)?
            }
            O::CallIndirect { type_index, .. } => {
                let i = s.pop().unwrap().i32() as u32 as usize;
                let callee = match self.table.get(i) {
                    Some(Some(f)) => *f,
                    _ => return Err("undefined-element".into()),
                };
                // The edge counts as attempted even if the signature check fails.
                self.tally_call(fi, ip, callee);
                let want = &self.types[type_index as usize];
                let have = self.func_sig(callee);
                if want.params != have.params || want.results != have.results {
                    return Err("indirect-call-mismatch".into());
                }
                self.do_call(callee, s)?;
            }
            O::Drop => {
                s.pop();
            }
            O::Select => {
                let c = s.pop().unwrap().i32();
                let b2 = s.pop().unwrap();
                let a = s.pop().unwrap();
                s.push(if c != 0 { a } else { b2 });
            }
            O::LocalGet { local_index } => s.push(locals[local_index as usize]),
            O::LocalSet { local_index } => locals[local_index as usize] = s.pop().unwrap(),
            O::LocalTee { local_index } => locals[local_index as usize] = *s.last().unwrap(),
            O::GlobalGet { global_index } => s.push(self.globals[global_index as usize]),
            O::GlobalSet { global_index } => self.globals[global_index as usize] = s.pop().unwrap(),

            O::I32Load { memarg } => {
                let v = Val::I32(i32::from_le_bytes(self.load::<4>(fi, ip, s, memarg.offset)?));
                self.loaded(v);
                s.push(v);
            }
            O::I64Load { memarg } => {
                let v = Val::I64(i64::from_le_bytes(self.load::<8>(fi, ip, s, memarg.offset)?));
                self.loaded(v);
                s.push(v);
            }
            O::F32Load { memarg } => {
                let v = Val::F32(u32::from_le_bytes(self.load::<4>(fi, ip, s, memarg.offset)?));
                self.loaded(v);
                s.push(v);
            }
            O::F64Load { memarg } => {
                let v = Val::F64(u64::from_le_bytes(self.load::<8>(fi, ip, s, memarg.offset)?));
                self.loaded(v);
                s.push(v);
            }
            O::I32Load8S { memarg } => {
                let v = Val::I32(self.load::<1>(fi, ip, s, memarg.offset)?[0] as i8 as i32);
                self.loaded(v);
                s.push(v);
            }
            O::I32Load8U { memarg } => {
                let v = Val::I32(self.load::<1>(fi, ip, s, memarg.offset)?[0] as i32);
                self.loaded(v);
                s.push(v);
            }
            O::I32Load16S { memarg } => {
                let v = Val::I32(i16::from_le_bytes(self.load::<2>(fi, ip, s, memarg.offset)?) as i32);
                self.loaded(v);
                s.push(v);
            }
            O::I32Load16U { memarg } => {
                let v = Val::I32(u16::from_le_bytes(self.load::<2>(fi, ip, s, memarg.offset)?) as i32);
                self.loaded(v);
                s.push(v);
            }
            O::I64Load8S { memarg } => {
                let v = Val::I64(self.load::<1>(fi, ip, s, memarg.offset)?[0] as i8 as i64);
                self.loaded(v);
                s.push(v);
            }
            O::I64Load8U { memarg } => {
                let v = Val::I64(self.load::<1>(fi, ip, s, memarg.offset)?[0] as i64);
                self.loaded(v);
                s.push(v);
            }
            O::I64Load16S { memarg } => {
                let v = Val::I64(i16::from_le_bytes(self.load::<2>(fi, ip, s, memarg.offset)?) as i64);
                self.loaded(v);
                s.push(v);
            }
            O::I64Load16U { memarg } => {
                let v = Val::I64(u16::from_le_bytes(self.load::<2>(fi, ip, s, memarg.offset)?) as i64);
                self.loaded(v);
                s.push(v);
            }
            O::I64Load32S { memarg } => {
                let v = Val::I64(i32::from_le_bytes(self.load::<4>(fi, ip, s, memarg.offset)?) as i64);
                self.loaded(v);
                s.push(v);
            }
            O::I64Load32U { memarg } => {
                let v = Val::I64(u32::from_le_bytes(self.load::<4>(fi, ip, s, memarg.offset)?) as i64);
                self.loaded(v);
                s.push(v);
            }
            O::I32Store { memarg } | O::F32Store { memarg } | O::I64Store32 { memarg } => {
                self.store(fi, ip, s, memarg.offset, 4)?
            }
            O::I64Store { memarg } | O::F64Store { memarg } => self.store(fi, ip, s, memarg.offset, 8)?,
            O::I32Store8 { memarg } | O::I64Store8 { memarg } => self.store(fi, ip, s, memarg.offset, 1)?,
            O::I32Store16 { memarg } | O::I64Store16 { memarg } => self.store(fi, ip, s, memarg.offset, 2)?,
            O::MemorySize { .. } => s.push(Val::I32((self.memory.len() / PAGE) as i32)),
            O::MemoryGrow { .. } => {
                let d = s.pop().unwrap().i32() as u32 as u64;
                let old = (self.memory.len() / PAGE) as u64;
                if old + d > self.max_pages {
                    s.push(Val::I32(-1));
                } else {
                    self.memory.resize(((old + d) as usize) * PAGE, 0);
                    s.push(Val::I32(old as i32));
                }
            }

            O::I32Const { value } => s.push(Val::I32(value)),
            O::I64Const { value } => s.push(Val::I64(value)),
            O::F32Const { value } => s.push(Val::F32(value.bits())),
            O::F64Const { value } => s.push(Val::F64(value.bits())),

            O::I32Eqz => un!(s, i32, b, |a| a == 0),
            O::I32Eq => bin!(s, i32, b, |x, y| x == y),
            O::I32Ne => bin!(s, i32, b, |x, y| x != y),
            O::I32LtS => bin!(s, i32, b, |x, y| x < y),
            O::I32LtU => bin!(s, i32, b, |x, y| (x as u32) < (y as u32)),
            O::I32GtS => bin!(s, i32, b, |x, y| x > y),
            O::I32GtU => bin!(s, i32, b, |x, y| (x as u32) > (y as u32)),
            O::I32LeS => bin!(s, i32, b, |x, y| x <= y),
            O::I32LeU => bin!(s, i32, b, |x, y| (x as u32) <= (y as u32)),
            O::I32GeS => bin!(s, i32, b, |x, y| x >= y),
            O::I32GeU => bin!(s, i32, b, |x, y| (x as u32) >= (y as u32)),
            O::I64Eqz => un!(s, i64, b, |a| a == 0),
            O::I64Eq => bin!(s, i64, b, |x, y| x == y),
            O::I64Ne => bin!(s, i64, b, |x, y| x != y),
            O::I64LtS => bin!(s, i64, b, |x, y| x < y),
            O::I64LtU => bin!(s, i64, b, |x, y| (x as u64) < (y as u64)),
            O::I64GtS => bin!(s, i64, b, |x, y| x > y),
            O::I64GtU => bin!(s, i64, b, |x, y| (x as u64) > (y as u64)),
            O::I64LeS => bin!(s, i64, b, |x, y| x <= y),
            O::I64LeU => bin!(s, i64, b, |x, y| (x as u64) <= (y as u64)),
            O::I64GeS => bin!(s, i64, b, |x, y| x >= y),
            O::I64GeU => bin!(s, i64, b, |x, y| (x as u64) >= (y as u64)),
            O::F32Eq => bin!(s, f32, b, |x, y| x == y),
            O::F32Ne => bin!(s, f32, b, |x, y| x != y),
            O::F32Lt => bin!(s, f32, b, |x, y| x < y),
            O::F32Gt => bin!(s, f32, b, |x, y| x > y),
            O::F32Le => bin!(s, f32, b, |x, y| x <= y),
            O::F32Ge => bin!(s, f32, b, |x, y| x >= y),
            O::F64Eq => bin!(s, f64, b, |x, y| x == y),
            O::F64Ne => bin!(s, f64, b, |x, y| x != y),
            O::F64Lt => bin!(s, f64, b, |x, y| x < y),
            O::F64Gt => bin!(s, f64, b, |x, y| x > y),
            O::F64Le => bin!(s, f64, b, |x, y| x <= y),
            O::F64Ge => bin!(s, f64, b, |x, y| x >= y),

            O::I32Clz => un!(s, i32, Val::I32, |a| a.leading_zeros() as i32),
            O::I32Ctz => un!(s, i32, Val::I32, |a| a.trailing_zeros() as i32),
            O::I32Popcnt => un!(s, i32, Val::I32, |a| a.count_ones() as i32),
            O::I32Add => bin!(s, i32, Val::I32, |x, y| x.wrapping_add(y)),
            O::I32Sub => bin!(s, i32, Val::I32, |x, y| x.wrapping_sub(y)),
            O::I32Mul => bin!(s, i32, Val::I32, |x, y| x.wrapping_mul(y)),
            O::I32DivS => {
                let y = s.pop().unwrap().i32();
                let x = s.pop().unwrap().i32();
                if y == 0 {
                    return Err("divide-by-zero".into());
                }
                s.push(Val::I32(x.checked_div(y).ok_or("integer-overflow")?));
            }
            O::I32DivU => {
                let y = s.pop().unwrap().i32() as u32;
                let x = s.pop().unwrap().i32() as u32;
                s.push(Val::I32(x.checked_div(y).ok_or("divide-by-zero")? as i32));
            }
            O::I32RemS => {
                let y = s.pop().unwrap().i32();
                let x = s.pop().unwrap().i32();
                if y == 0 {
                    return Err("divide-by-zero".into());
                }
                s.push(Val::I32(x.wrapping_rem(y)));
            }
            O::I32RemU => {
                let y = s.pop().unwrap().i32() as u32;
                let x = s.pop().unwrap().i32() as u32;
                s.push(Val::I32(x.checked_rem(y).ok_or("divide-by-zero")? as i32));
            }
            O::I32And => bin!(s, i32, Val::I32, |x, y| x & y),
            O::I32Or => bin!(s, i32, Val::I32, |x, y| x | y),
            O::I32Xor => bin!(s, i32, Val::I32, |x, y| x ^ y),
            O::I32Shl => bin!(s, i32, Val::I32, |x, y| x.wrapping_shl(y as u32)),
            O::I32ShrS => bin!(s, i32, Val::I32, |x, y| x.wrapping_shr(y as u32)),
            O::I32ShrU => bin!(s, i32, Val::I32, |x, y| (x as u32).wrapping_shr(y as u32) as i32),
            O::I32Rotl => bin!(s, i32, Val::I32, |x, y| x.rotate_left(y as u32 % 32)),
            O::I32Rotr => bin!(s, i32, Val::I32, |x, y| x.rotate_right(y as u32 % 32)),

            O::I64Clz => un!(s, i64, Val::I64, |a| a.leading_zeros() as i64),
            O::I64Ctz => un!(s, i64, Val::I64, |a| a.trailing_zeros() as i64),
            O::I64Popcnt => un!(s, i64, Val::I64, |a| a.count_ones() as i64),
            O::I64Add => bin!(s, i64, Val::I64, |x, y| x.wrapping_add(y)),
            O::I64Sub => bin!(s, i64, Val::I64, |x, y| x.wrapping_sub(y)),
            O::I64Mul => bin!(s, i64, Val::I64, |x, y| x.wrapping_mul(y)),
            O::I64DivS => {
                let y = s.pop().unwrap().i64();
                let x = s.pop().unwrap().i64();
                if y == 0 {
                    return Err("divide-by-zero".into());
                }
                s.push(Val::I64(x.checked_div(y).ok_or("integer-overflow")?));
            }
            O::I64DivU => {
                let y = s.pop().unwrap().i64() as u64;
                let x = s.pop().unwrap().i64() as u64;
                s.push(Val::I64(x.checked_div(y).ok_or("divide-by-zero")? as i64));
            }
            O::I64RemS => {
                let y = s.pop().unwrap().i64();
                let x = s.pop().unwrap().i64();
                if y == 0 {
                    return Err("divide-by-zero".into());
                }
                s.push(Val::I64(x.wrapping_rem(y)));
            }
            O::I64RemU => {
                let y = s.pop().unwrap().i64() as u64;
                let x = s.pop().unwrap().i64() as u64;
                s.push(Val::I64(x.checked_rem(y).ok_or("divide-by-zero")? as i64));
            }
            O::I64And => bin!(s, i64, Val::I64, |x, y| x & y),
            O::I64Or => bin!(s, i64, Val::I64, |x, y| x | y),
            O::I64Xor => bin!(s, i64, Val::I64, |x, y| x ^ y),
            O::I64Shl => bin!(s, i64, Val::I64, |x, y| x.wrapping_shl(y as u32)),
            O::I64ShrS => bin!(s, i64, Val::I64, |x, y| x.wrapping_shr(y as u32)),
            O::I64ShrU => bin!(s, i64, Val::I64, |x, y| (x as u64).wrapping_shr(y as u32) as i64),
            O::I64Rotl => bin!(s, i64, Val::I64, |x, y| x.rotate_left((y as u64 % 64) as u32)),
            O::I64Rotr => bin!(s, i64, Val::I64, |x, y| x.rotate_right((y as u64 % 64) as u32)),

            O::F32Abs => un!(s, f32, f32v, |a| a.abs()),
            O::F32Neg => un!(s, f32, f32v, |a| -a),
            O::F32Ceil => un!(s, f32, f32v, |a| a.ceil()),
            O::F32Floor => un!(s, f32, f32v, |a| a.floor()),
            O::F32Trunc => un!(s, f32, f32v, |a| a.trunc()),
            O::F32Nearest => un!(s, f32, f32v, |a| a.round_ties_even()),
            O::F32Sqrt => un!(s, f32, f32v, |a| a.sqrt()),
            O::F32Add => bin!(s, f32, f32v, |x, y| x + y),
            O::F32Sub => bin!(s, f32, f32v, |x, y| x - y),
            O::F32Mul => bin!(s, f32, f32v, |x, y| x * y),
            O::F32Div => bin!(s, f32, f32v, |x, y| x / y),
            O::F32Min => bin!(s, f32, f32v, |x, y| fmin32(x, y)),
            O::F32Max => bin!(s, f32, f32v, |x, y| fmax32(x, y)),
            O::F32Copysign => bin!(s, f32, f32v, |x, y| x.copysign(y)),
            O::F64Abs => un!(s, f64, f64v, |a| a.abs()),
            O::F64Neg => un!(s, f64, f64v, |a| -a),
            O::F64Ceil => un!(s, f64, f64v, |a| a.ceil()),
            O::F64Floor => un!(s, f64, f64v, |a| a.floor()),
            O::F64Trunc => un!(s, f64, f64v, |a| a.trunc()),
            O::F64Nearest => un!(s, f64, f64v, |a| a.round_ties_even()),
            O::F64Sqrt => un!(s, f64, f64v, |a| a.sqrt()),
            O::F64Add => bin!(s, f64, f64v, |x, y| x + y),
            O::F64Sub => bin!(s, f64, f64v, |x, y| x - y),
            O::F64Mul => bin!(s, f64, f64v, |x, y| x * y),
            O::F64Div => bin!(s, f64, f64v, |x, y| x / y),
            O::F64Min => bin!(s, f64, f64v, |x, y| fmin64(x, y)),
            O::F64Max => bin!(s, f64, f64v, |x, y| fmax64(x, y)),
            O::F64Copysign => bin!(s, f64, f64v, |x, y| x.copysign(y)),

            O::I32WrapI64 => un!(s, i64, Val::I32, |a| a as i32),
            O::I64ExtendI32S => un!(s, i32, Val::I64, |a| a as i64),
            O::I64ExtendI32U => un!(s, i32, Val::I64, |a| a as u32 as i64),
            O::I32TruncF32S => {
                let x = s.pop().unwrap().f32() as f64;
                s.push(Val::I32(trunc_checked(x, -2147483648.0, 2147483647.0)? as i32));
            }
            O::I32TruncF32U => {
                let x = s.pop().unwrap().f32() as f64;
                s.push(Val::I32(trunc_checked(x, 0.0, 4294967295.0)? as u32 as i32));
            }
            O::I32TruncF64S => {
                let x = s.pop().unwrap().f64();
                s.push(Val::I32(trunc_checked(x, -2147483648.0, 2147483647.0)? as i32));
            }
            O::I32TruncF64U => {
                let x = s.pop().unwrap().f64();
                s.push(Val::I32(trunc_checked(x, 0.0, 4294967295.0)? as u32 as i32));
            }
            O::I64TruncF32S => {
                let x = s.pop().unwrap().f32() as f64;
                s.push(Val::I64(trunc_to_i64(x)?));
            }
            O::I64TruncF32U => {
                let x = s.pop().unwrap().f32() as f64;
                s.push(Val::I64(trunc_to_u64(x)? as i64));
            }
            O::I64TruncF64S => {
                let x = s.pop().unwrap().f64();
                s.push(Val::I64(trunc_to_i64(x)?));
            }
            O::I64TruncF64U => {
                let x = s.pop().unwrap().f64();
                s.push(Val::I64(trunc_to_u64(x)? as i64));
            }
            O::F32ConvertI32S => un!(s, i32, f32v, |a| a as f32),
            O::F32ConvertI32U => un!(s, i32, f32v, |a| a as u32 as f32),
            O::F32ConvertI64S => un!(s, i64, f32v, |a| a as f32),
            O::F32ConvertI64U => un!(s, i64, f32v, |a| a as u64 as f32),
            O::F64ConvertI32S => un!(s, i32, f64v, |a| a as f64),
            O::F64ConvertI32U => un!(s, i32, f64v, |a| a as u32 as f64),
            O::F64ConvertI64S => un!(s, i64, f64v, |a| a as f64),
            O::F64ConvertI64U => un!(s, i64, f64v, |a| a as u64 as f64),
            O::F32DemoteF64 => un!(s, f64, f32v, |a| a as f32),
            O::F64PromoteF32 => un!(s, f32, f64v, |a| a as f64),
            O::I32ReinterpretF32 => match s.pop().unwrap() {
                Val::F32(bits) => s.push(Val::I32(bits as i32)),
                other => panic!("expected f32, found {other:?}"),
            },
            O::I64ReinterpretF64 => match s.pop().unwrap() {
                Val::F64(bits) => s.push(Val::I64(bits as i64)),
                other => panic!("expected f64, found {other:?}"),
            },
            O::F32ReinterpretI32 => un!(s, i32, Val::F32, |a| a as u32),
            O::F64ReinterpretI64 => un!(s, i64, Val::F64, |a| a as u64),
            other => panic!("oracle: unsupported operator {other:?}"),
        }
        Ok(Flow::Next)
    }
}
