//! Type checking of decoded modules.
//!
//! Validating a function body also produces its [`Sidetable`]: resolved
//! branch targets for in-place interpretation plus the operand stack height
//! and operand types at every instruction boundary.

use std::collections::{HashMap, HashSet};
use std::rc::Rc;

use crate::disasm::{self, BlockType, Immediate, Instruction};
use crate::error::ValidationError;
use crate::module::{ConstExpr, ConstOp, ExportKind, Module};
use crate::opcodes;
use crate::types::{CodeLocation, FuncType, ValueType};

const NONE: u32 = u32::MAX;
/// Marks a branch to the function's outermost label, which returns.
pub const RETURN_TARGET: u32 = u32::MAX;
/// Maximum number of 64 KiB pages of a linear memory.
pub const MAX_PAGES: u32 = 65_536;

/// A resolved branch: where control continues and how the operand stack is
/// reshaped on the way.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BranchTarget {
    /// Destination pc, or [`RETURN_TARGET`].
    pub target_pc: u32,
    /// Number of values carried to the destination.
    pub keep: u32,
    /// Operand stack height (relative to the frame's operand base) at the
    /// destination, before the carried values are pushed.
    pub height: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BlockKind {
    Block,
    Loop,
    If,
}

/// Extent of one structured control instruction.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BlockInfo {
    pub kind: BlockKind,
    /// pc of the `block` / `loop` / `if` instruction.
    pub start_pc: u32,
    /// First instruction inside the block.
    pub body_pc: u32,
    pub else_pc: Option<u32>,
    pub end_pc: u32,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct TypeNode {
    /// `None` for operands of statically unreachable code.
    ty: Option<ValueType>,
    parent: u32,
}

/// Control-flow and stack-shape metadata for one function body.
#[derive(Debug, Default, Clone)]
pub struct Sidetable {
    /// pc -> first index into `branches`, for branching instructions.
    pub(crate) branch_index: Box<[u32]>,
    pub(crate) branches: Vec<BranchTarget>,
    spans: HashMap<u32, (u32, u32)>,
    depth: Box<[u32]>,
    type_top: Box<[u32]>,
    type_nodes: Vec<TypeNode>,
    blocks: Vec<BlockInfo>,
}

impl Sidetable {
    pub fn is_boundary(&self, pc: u32) -> bool {
        self.depth.get(pc as usize).is_some_and(|&d| d != NONE)
    }

    /// Operand stack height before the instruction at `pc` executes.
    pub fn operand_depth(&self, pc: u32) -> Option<u32> {
        self.depth.get(pc as usize).copied().filter(|&d| d != NONE)
    }

    /// Static type of operand `k` (0 = top of stack) before `pc` executes.
    pub fn operand_type(&self, pc: u32, k: u32) -> Option<ValueType> {
        let mut node = *self.type_top.get(pc as usize)?;
        for _ in 0..k {
            if node == NONE {
                return None;
            }
            node = self.type_nodes[node as usize].parent;
        }
        if node == NONE {
            return None;
        }
        self.type_nodes[node as usize].ty
    }

    /// Branch targets of the instruction at `pc`. For `br_table` the default
    /// target comes last; for `if` the single entry is the false edge.
    pub fn branch_targets(&self, pc: u32) -> &[BranchTarget] {
        match self.spans.get(&pc) {
            Some(&(start, len)) => &self.branches[start as usize..(start + len) as usize],
            None => &[],
        }
    }

    /// Structured blocks in order of their start pc.
    pub fn blocks(&self) -> &[BlockInfo] {
        &self.blocks
    }

    pub fn loop_headers(&self) -> impl Iterator<Item = u32> + '_ {
        self.blocks
            .iter()
            .filter(|b| b.kind == BlockKind::Loop)
            .map(|b| b.body_pc)
    }
}

/// Type-checks `m` and computes the sidetable of every function.
pub fn validate_module(m: &mut Module) -> Result<(), ValidationError> {
    if m.validated {
        return Ok(());
    }
    let err = |reason: String| ValidationError {
        location: None,
        reason,
    };
    for imp in &m.imports {
        if imp.type_index as usize >= m.types.len() {
            return Err(err(format!("unknown type {}", imp.type_index)));
        }
    }
    for f in &m.funcs {
        if f.type_index as usize >= m.types.len() {
            return Err(err(format!("unknown type {}", f.type_index)));
        }
    }
    for l in m.tables.iter() {
        if l.max.is_some_and(|max| max < l.min) {
            return Err(err("size minimum must not be greater than maximum".into()));
        }
    }
    for l in m.memories.iter() {
        if l.min > MAX_PAGES || l.max.is_some_and(|max| max > MAX_PAGES) {
            return Err(err("memory size must be at most 65536 pages (4GiB)".into()));
        }
        if l.max.is_some_and(|max| max < l.min) {
            return Err(err("size minimum must not be greater than maximum".into()));
        }
    }
    for (i, g) in m.globals.iter().enumerate() {
        check_const(m, &g.init, g.ty, i)?;
    }
    let mut names = HashSet::new();
    for e in &m.exports {
        if !names.insert(e.name.as_str()) {
            return Err(err(format!("duplicate export name {:?}", e.name)));
        }
        let ok = match e.kind {
            ExportKind::Func => e.index < m.num_funcs(),
            ExportKind::Table => (e.index as usize) < m.tables.len(),
            ExportKind::Memory => (e.index as usize) < m.memories.len(),
            ExportKind::Global => (e.index as usize) < m.globals.len(),
        };
        if !ok {
            return Err(err(format!("unknown export index {}", e.index)));
        }
    }
    if let Some(start) = m.start {
        match m.func_type(start) {
            None => return Err(err(format!("unknown function {start}"))),
            Some(t) if !t.params.is_empty() || !t.results.is_empty() => {
                return Err(err("start function must have type [] -> []".into()))
            }
            _ => {}
        }
    }
    for seg in &m.elements {
        if m.tables.is_empty() {
            return Err(err("unknown table 0".into()));
        }
        check_const(m, &seg.offset, ValueType::I32, m.globals.len())?;
        if let Some(&f) = seg.funcs.iter().find(|&&f| f >= m.num_funcs()) {
            return Err(err(format!("unknown function {f}")));
        }
    }
    for seg in &m.data {
        if m.memories.is_empty() {
            return Err(err("unknown memory 0".into()));
        }
        check_const(m, &seg.offset, ValueType::I32, m.globals.len())?;
    }

    let mut tables = Vec::with_capacity(m.funcs.len());
    for f in &m.funcs {
        let ty = &m.types[f.type_index as usize];
        let mut locals = ty.params.clone();
        locals.extend_from_slice(&f.local_types_declared());
        let side = FuncValidator::new(m, f.index, ty, &locals).run(f.pristine_body())?;
        tables.push((locals, side));
    }
    for (f, (locals, side)) in m.funcs.iter_mut().zip(tables) {
        let ty = &m.types[f.type_index as usize];
        f.num_params = ty.params.len() as u32;
        let code = Rc::get_mut(&mut f.code).expect("function code is not shared before validation");
        code.num_params = ty.params.len() as u32;
        code.num_results = ty.results.len() as u32;
        code.num_locals = locals.len() as u32;
        code.side = side;
        f.local_types = locals;
    }
    m.validated = true;
    Ok(())
}

impl crate::module::FuncDecl {
    fn local_types_declared(&self) -> Vec<ValueType> {
        self.local_runs
            .iter()
            .flat_map(|&(n, t)| std::iter::repeat_n(t, n as usize))
            .collect()
    }
}

/// `visible_globals` bounds which globals a `global.get` may reference.
fn check_const(
    m: &Module,
    e: &ConstExpr,
    expected: ValueType,
    visible_globals: usize,
) -> Result<(), ValidationError> {
    let found = match e.op {
        ConstOp::Value(v) => v.ty(),
        ConstOp::GlobalGet(g) => {
            let Some(global) = m
                .globals
                .get(g as usize)
                .filter(|_| (g as usize) < visible_globals)
            else {
                return Err(ValidationError {
                    location: None,
                    reason: format!("unknown global {g}"),
                });
            };
            if global.mutable {
                return Err(ValidationError {
                    location: None,
                    reason: "constant expression required".into(),
                });
            }
            global.ty
        }
    };
    if found != expected {
        return Err(ValidationError {
            location: None,
            reason: "type mismatch in constant expression".into(),
        });
    }
    Ok(())
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Kind {
    Func,
    Block,
    Loop,
    If,
    Else,
}

struct Ctrl {
    kind: Kind,
    end_types: Vec<ValueType>,
    height: usize,
    unreachable: bool,
    body_pc: u32,
    /// Branch entries whose target is the pc after this block's `end`.
    fixups: Vec<usize>,
    /// The false-edge entry of an `if`, patched at `else` or `end`.
    if_entry: Option<usize>,
    block_slot: usize,
}

impl Ctrl {
    fn label_types(&self) -> &[ValueType] {
        if self.kind == Kind::Loop {
            &[]
        } else {
            &self.end_types
        }
    }
}

struct FuncValidator<'m> {
    m: &'m Module,
    func: u32,
    ty: &'m FuncType,
    locals: &'m [ValueType],
    opds: Vec<Option<ValueType>>,
    opd_nodes: Vec<u32>,
    ctrls: Vec<Ctrl>,
    pc: u32,
    side: Sidetable,
}

impl<'m> FuncValidator<'m> {
    fn new(m: &'m Module, func: u32, ty: &'m FuncType, locals: &'m [ValueType]) -> Self {
        FuncValidator {
            m,
            func,
            ty,
            locals,
            opds: Vec::new(),
            opd_nodes: Vec::new(),
            ctrls: Vec::new(),
            pc: 0,
            side: Sidetable::default(),
        }
    }

    fn error(&self, reason: impl Into<String>) -> ValidationError {
        ValidationError {
            location: Some(CodeLocation::new(self.m.id, self.func, self.pc)),
            reason: reason.into(),
        }
    }

    fn push(&mut self, t: Option<ValueType>) {
        let parent = self.opd_nodes.last().copied().unwrap_or(NONE);
        self.side.type_nodes.push(TypeNode { ty: t, parent });
        self.opd_nodes.push(self.side.type_nodes.len() as u32 - 1);
        self.opds.push(t);
    }

    fn pop(&mut self) -> Result<Option<ValueType>, ValidationError> {
        let c = self.ctrls.last().expect("control stack is non-empty");
        if self.opds.len() == c.height {
            if c.unreachable {
                return Ok(None);
            }
            return Err(self.error("stack underflow"));
        }
        self.opd_nodes.pop();
        Ok(self.opds.pop().unwrap())
    }

    fn pop_expect(&mut self, expected: ValueType) -> Result<Option<ValueType>, ValidationError> {
        let t = self.pop()?;
        match t {
            Some(found) if found != expected => {
                Err(self.error(format!("type mismatch: expected {expected}, found {found}")))
            }
            _ => Ok(Some(expected)),
        }
    }

    fn pop_all(&mut self, types: &[ValueType]) -> Result<(), ValidationError> {
        for &t in types.iter().rev() {
            self.pop_expect(t)?;
        }
        Ok(())
    }

    fn truncate(&mut self, height: usize) {
        self.opds.truncate(height);
        self.opd_nodes.truncate(height);
    }

    fn set_unreachable(&mut self) {
        let h = self.ctrls.last().unwrap().height;
        self.truncate(h);
        self.ctrls.last_mut().unwrap().unreachable = true;
    }

    fn push_ctrl(&mut self, kind: Kind, bt: BlockType, ins: &Instruction) {
        let end_types = match bt {
            BlockType::Empty => vec![],
            BlockType::Value(t) => vec![t],
        };
        let block_slot = self.side.blocks.len();
        self.side.blocks.push(BlockInfo {
            kind: match kind {
                Kind::Loop => BlockKind::Loop,
                Kind::If => BlockKind::If,
                _ => BlockKind::Block,
            },
            start_pc: ins.pc,
            body_pc: ins.next_pc(),
            else_pc: None,
            end_pc: NONE,
        });
        self.ctrls.push(Ctrl {
            kind,
            end_types,
            height: self.opds.len(),
            unreachable: false,
            body_pc: ins.next_pc(),
            fixups: vec![],
            if_entry: None,
            block_slot,
        });
    }

    /// Builds the branch entry for label `depth` of the current control stack.
    fn label_entry(&mut self, depth: u32) -> Result<BranchTarget, ValidationError> {
        let n = self.ctrls.len();
        if depth as usize >= n {
            return Err(self.error(format!("unknown label {depth}")));
        }
        let idx = n - 1 - depth as usize;
        let c = &self.ctrls[idx];
        let target_pc = match c.kind {
            Kind::Func => RETURN_TARGET,
            Kind::Loop => c.body_pc,
            _ => NONE,
        };
        Ok(BranchTarget {
            target_pc,
            keep: c.label_types().len() as u32,
            height: c.height as u32,
        })
    }

    fn add_entry(&mut self, depth: u32) -> Result<usize, ValidationError> {
        let entry = self.label_entry(depth)?;
        let idx = self.side.branches.len();
        self.side.branches.push(entry);
        let n = self.ctrls.len();
        let c = &mut self.ctrls[n - 1 - depth as usize];
        // Function-label branches keep RETURN_TARGET; only block and if
        // labels are resolved when their `end` is reached.
        if matches!(c.kind, Kind::Block | Kind::If | Kind::Else) {
            c.fixups.push(idx);
        }
        Ok(idx)
    }

    fn label_types_at(&self, depth: u32) -> Vec<ValueType> {
        let n = self.ctrls.len();
        self.ctrls[n - 1 - depth as usize].label_types().to_vec()
    }

    fn run(mut self, body: &[u8]) -> Result<Sidetable, ValidationError> {
        let len = body.len();
        self.side.branch_index = vec![NONE; len].into();
        self.side.depth = vec![NONE; len].into();
        self.side.type_top = vec![NONE; len].into();
        self.ctrls.push(Ctrl {
            kind: Kind::Func,
            end_types: self.ty.results.clone(),
            height: 0,
            unreachable: false,
            body_pc: 0,
            fixups: vec![],
            if_entry: None,
            block_slot: NONE as usize,
        });
        let mut pc = 0usize;
        while pc < len {
            if self.ctrls.is_empty() {
                self.pc = pc as u32;
                return Err(self.error("operators remaining after end of function"));
            }
            let ins = disasm::decode_at(body, pc, 0).map_err(|e| self.error(e.to_string()))?;
            self.pc = ins.pc;
            self.side.depth[pc] = self.opds.len() as u32;
            self.side.type_top[pc] = self.opd_nodes.last().copied().unwrap_or(NONE);
            self.instruction(&ins)?;
            pc += ins.len as usize;
        }
        if !self.ctrls.is_empty() {
            self.pc = len as u32;
            return Err(self.error("unexpected end of function body: missing end"));
        }
        Ok(self.side)
    }

    fn instruction(&mut self, ins: &Instruction) -> Result<(), ValidationError> {
        use ValueType::*;
        let op = ins.opcode;
        match (&ins.imm, op) {
            (_, opcodes::UNREACHABLE) => self.set_unreachable(),
            (_, opcodes::NOP) => {}
            (Immediate::Block(bt), opcodes::BLOCK) => self.push_ctrl(Kind::Block, *bt, ins),
            (Immediate::Block(bt), opcodes::LOOP) => self.push_ctrl(Kind::Loop, *bt, ins),
            (Immediate::Block(bt), opcodes::IF) => {
                self.pop_expect(I32)?;
                self.push_ctrl(Kind::If, *bt, ins);
                let idx = self.side.branches.len();
                self.side.branches.push(BranchTarget {
                    target_pc: NONE,
                    keep: 0,
                    height: self.opds.len() as u32,
                });
                self.side.branch_index[ins.pc as usize] = idx as u32;
                self.side.spans.insert(ins.pc, (idx as u32, 1));
                self.ctrls.last_mut().unwrap().if_entry = Some(idx);
            }
            (_, opcodes::ELSE) => {
                let c = self.ctrls.last().unwrap();
                if c.kind != Kind::If {
                    return Err(self.error("else without matching if"));
                }
                let end_types = c.end_types.clone();
                let height = c.height;
                self.pop_all(&end_types)?;
                if self.opds.len() != height {
                    return Err(self.error("type mismatch: values remaining on stack at else"));
                }
                // Falling into `else` leaves the block like a branch to its label.
                let idx = self.side.branches.len();
                self.side.branches.push(BranchTarget {
                    target_pc: NONE,
                    keep: end_types.len() as u32,
                    height: height as u32,
                });
                self.side.branch_index[ins.pc as usize] = idx as u32;
                self.side.spans.insert(ins.pc, (idx as u32, 1));
                let c = self.ctrls.last_mut().unwrap();
                c.fixups.push(idx);
                c.kind = Kind::Else;
                c.unreachable = false;
                if let Some(e) = c.if_entry.take() {
                    self.side.branches[e].target_pc = ins.next_pc();
                }
                let slot = c.block_slot;
                self.side.blocks[slot].else_pc = Some(ins.pc);
            }
            (_, opcodes::END) => {
                let c = self.ctrls.last().unwrap();
                let end_types = c.end_types.clone();
                let height = c.height;
                if c.kind == Kind::If && !end_types.is_empty() {
                    return Err(
                        self.error("type mismatch: if without else must not produce values")
                    );
                }
                self.pop_all(&end_types)?;
                if self.opds.len() != height {
                    return Err(
                        self.error("type mismatch: values remaining on stack at end of block")
                    );
                }
                let c = self.ctrls.pop().unwrap();
                let after = ins.next_pc();
                for idx in c.fixups {
                    self.side.branches[idx].target_pc = after;
                }
                if let Some(e) = c.if_entry {
                    self.side.branches[e].target_pc = after;
                }
                if c.kind != Kind::Func {
                    self.side.blocks[c.block_slot].end_pc = ins.pc;
                }
                for t in end_types {
                    self.push(Some(t));
                }
            }
            (Immediate::Label(l), opcodes::BR) => {
                let idx = self.add_entry(*l)?;
                self.side.branch_index[ins.pc as usize] = idx as u32;
                self.side.spans.insert(ins.pc, (idx as u32, 1));
                let types = self.label_types_at(*l);
                self.pop_all(&types)?;
                self.set_unreachable();
            }
            (Immediate::Label(l), opcodes::BR_IF) => {
                self.pop_expect(I32)?;
                let idx = self.add_entry(*l)?;
                self.side.branch_index[ins.pc as usize] = idx as u32;
                self.side.spans.insert(ins.pc, (idx as u32, 1));
                let types = self.label_types_at(*l);
                self.pop_all(&types)?;
                for t in types {
                    self.push(Some(t));
                }
            }
            (Immediate::Table { targets, default }, opcodes::BR_TABLE) => {
                self.pop_expect(I32)?;
                let start = self.side.branches.len();
                let arity = {
                    self.label_entry(*default)?;
                    self.label_types_at(*default).len()
                };
                for &l in targets.iter().chain(std::iter::once(default)) {
                    self.add_entry(l)?;
                    let types = self.label_types_at(l);
                    if types.len() != arity {
                        return Err(
                            self.error("type mismatch: br_table targets have inconsistent arity")
                        );
                    }
                    // Check the carried values against each label without consuming them.
                    let saved_opds = self.opds.clone();
                    let saved_nodes = self.opd_nodes.clone();
                    self.pop_all(&types)?;
                    self.opds = saved_opds;
                    self.opd_nodes = saved_nodes;
                }
                self.side.branch_index[ins.pc as usize] = start as u32;
                self.side
                    .spans
                    .insert(ins.pc, (start as u32, targets.len() as u32 + 1));
                self.set_unreachable();
            }
            (_, opcodes::RETURN) => {
                let results = self.ty.results.clone();
                self.pop_all(&results)?;
                self.set_unreachable();
            }
            (Immediate::Func(f), opcodes::CALL) => {
                let Some(ty) = self.m.func_type(*f) else {
                    return Err(self.error(format!("unknown function {f}")));
                };
                let ty = ty.clone();
                self.pop_all(&ty.params)?;
                for t in ty.results {
                    self.push(Some(t));
                }
            }
            (Immediate::CallIndirect { type_index, .. }, opcodes::CALL_INDIRECT) => {
                if self.m.tables.is_empty() {
                    return Err(self.error("unknown table 0"));
                }
                let Some(ty) = self.m.types.get(*type_index as usize) else {
                    return Err(self.error(format!("unknown type {type_index}")));
                };
                let ty = ty.clone();
                self.pop_expect(I32)?;
                self.pop_all(&ty.params)?;
                for t in ty.results {
                    self.push(Some(t));
                }
            }
            (_, opcodes::DROP) => {
                self.pop()?;
            }
            (_, opcodes::SELECT) => {
                self.pop_expect(I32)?;
                let t1 = self.pop()?;
                let t2 = self.pop()?;
                match (t1, t2) {
                    (Some(a), Some(b)) if a != b => {
                        return Err(
                            self.error(format!("type mismatch: select operands {a} and {b}"))
                        )
                    }
                    _ => self.push(t1.or(t2)),
                }
            }
            (Immediate::Local(i), opcodes::LOCAL_GET) => {
                let t = self.local(*i)?;
                self.push(Some(t));
            }
            (Immediate::Local(i), opcodes::LOCAL_SET) => {
                let t = self.local(*i)?;
                self.pop_expect(t)?;
            }
            (Immediate::Local(i), opcodes::LOCAL_TEE) => {
                let t = self.local(*i)?;
                self.pop_expect(t)?;
                self.push(Some(t));
            }
            (Immediate::Global(g), opcodes::GLOBAL_GET) => {
                let t = self.global(*g)?.0;
                self.push(Some(t));
            }
            (Immediate::Global(g), opcodes::GLOBAL_SET) => {
                let (t, mutable) = self.global(*g)?;
                if !mutable {
                    return Err(self.error("global is immutable"));
                }
                self.pop_expect(t)?;
            }
            (Immediate::MemArg { align, .. }, op)
                if opcodes::is_load(op) || opcodes::is_store(op) =>
            {
                if self.m.memories.is_empty() {
                    return Err(self.error("unknown memory 0"));
                }
                let (width, t) = opcodes::mem_access(op).unwrap();
                if (1u64 << align) > u64::from(width) {
                    return Err(self.error("alignment must not be larger than natural"));
                }
                if opcodes::is_load(op) {
                    self.pop_expect(I32)?;
                    self.push(Some(t));
                } else {
                    self.pop_expect(t)?;
                    self.pop_expect(I32)?;
                }
            }
            (_, opcodes::MEMORY_SIZE) => {
                if self.m.memories.is_empty() {
                    return Err(self.error("unknown memory 0"));
                }
                self.push(Some(I32));
            }
            (_, opcodes::MEMORY_GROW) => {
                if self.m.memories.is_empty() {
                    return Err(self.error("unknown memory 0"));
                }
                self.pop_expect(I32)?;
                self.push(Some(I32));
            }
            (_, opcodes::I32_CONST) => self.push(Some(I32)),
            (_, opcodes::I64_CONST) => self.push(Some(I64)),
            (_, opcodes::F32_CONST) => self.push(Some(F32)),
            (_, opcodes::F64_CONST) => self.push(Some(F64)),
            (_, op) => {
                let Some((params, result)) = opcodes::numeric_sig(op) else {
                    return Err(self.error(format!("illegal opcode 0x{op:02x}")));
                };
                self.pop_all(params)?;
                self.push(Some(result));
            }
        }
        Ok(())
    }

    fn local(&self, i: u32) -> Result<ValueType, ValidationError> {
        self.locals
            .get(i as usize)
            .copied()
            .ok_or_else(|| self.error(format!("unknown local {i}")))
    }

    fn global(&self, g: u32) -> Result<(ValueType, bool), ValidationError> {
        self.m
            .globals
            .get(g as usize)
            .map(|gl| (gl.ty, gl.mutable))
            .ok_or_else(|| self.error(format!("unknown global {g}")))
    }
}
