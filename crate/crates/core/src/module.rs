//! In-memory representation of a decoded module.

use std::cell::Cell;
use std::rc::Rc;

use crate::types::{CodeLocation, FuncType, ModuleId, Value, ValueType};
use crate::validate::Sidetable;

#[derive(Debug)]
pub struct Module {
    pub id: ModuleId,
    pub types: Vec<FuncType>,
    /// Host function imports. They occupy the low end of the function index space.
    pub imports: Vec<Import>,
    /// Functions defined in the module, in index order after the imports.
    pub funcs: Vec<FuncDecl>,
    pub tables: Vec<Limits>,
    pub memories: Vec<Limits>,
    pub globals: Vec<Global>,
    pub exports: Vec<Export>,
    pub start: Option<u32>,
    pub elements: Vec<ElementSegment>,
    pub data: Vec<DataSegment>,
    pub(crate) customs: Vec<CustomSection>,
    /// Non-custom section ids in the order they appeared in the binary.
    pub(crate) section_order: Vec<u8>,
    pub(crate) validated: bool,
}

impl Module {
    pub fn num_imported_funcs(&self) -> u32 {
        self.imports.len() as u32
    }

    pub fn num_funcs(&self) -> u32 {
        (self.imports.len() + self.funcs.len()) as u32
    }

    pub fn func_type_index(&self, func: u32) -> Option<u32> {
        let imported = self.num_imported_funcs();
        if func < imported {
            Some(self.imports[func as usize].type_index)
        } else {
            self.funcs
                .get((func - imported) as usize)
                .map(|f| f.type_index)
        }
    }

    pub fn func_type(&self, func: u32) -> Option<&FuncType> {
        self.func_type_index(func)
            .and_then(|t| self.types.get(t as usize))
    }

    /// A defined (non-imported) function by its function index.
    pub fn func(&self, func: u32) -> Option<&FuncDecl> {
        func.checked_sub(self.num_imported_funcs())
            .and_then(|i| self.funcs.get(i as usize))
    }

    pub fn export(&self, name: &str) -> Option<&Export> {
        self.exports.iter().find(|e| e.name == name)
    }

    pub fn exported_func(&self, name: &str) -> Option<u32> {
        self.export(name)
            .filter(|e| e.kind == ExportKind::Func)
            .map(|e| e.index)
    }

    pub fn is_validated(&self) -> bool {
        self.validated
    }

    pub fn location(&self, func: u32, pc: u32) -> CodeLocation {
        CodeLocation::new(self.id, func, pc)
    }
}

#[derive(Debug, Clone)]
pub struct Import {
    pub module: String,
    pub name: String,
    pub type_index: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportKind {
    Func,
    Table,
    Memory,
    Global,
}

#[derive(Debug, Clone)]
pub struct Export {
    pub name: String,
    pub kind: ExportKind,
    pub index: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Limits {
    pub min: u32,
    pub max: Option<u32>,
}

/// A constant initializer expression.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstExpr {
    pub op: ConstOp,
    /// Encoded bytes including the terminating `end`.
    pub(crate) raw: Vec<u8>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ConstOp {
    Value(Value),
    GlobalGet(u32),
}

#[derive(Debug, Clone)]
pub struct Global {
    pub ty: ValueType,
    pub mutable: bool,
    pub init: ConstExpr,
}

#[derive(Debug, Clone)]
pub struct ElementSegment {
    pub table: u32,
    pub offset: ConstExpr,
    pub funcs: Vec<u32>,
}

#[derive(Debug, Clone)]
pub struct DataSegment {
    pub memory: u32,
    pub offset: ConstExpr,
    pub bytes: Vec<u8>,
}

#[derive(Debug, Clone)]
pub(crate) struct CustomSection {
    /// Number of non-custom sections preceding this one.
    pub(crate) position: usize,
    pub(crate) name: String,
    pub(crate) payload: Vec<u8>,
}

/// A function defined in the module.
#[derive(Debug)]
pub struct FuncDecl {
    /// Index in the module's function index space.
    pub index: u32,
    pub type_index: u32,
    /// Local declarations as (count, type) runs, as encoded.
    pub local_runs: Vec<(u32, ValueType)>,
    /// Parameter types followed by declared locals, one entry per slot.
    pub local_types: Vec<ValueType>,
    pub num_params: u32,
    pub(crate) code: Rc<FuncCode>,
}

impl FuncDecl {
    /// The original, never-modified instruction bytes.
    pub fn pristine_body(&self) -> &[u8] {
        &self.code.pristine
    }

    pub fn body_len(&self) -> u32 {
        self.code.pristine.len() as u32
    }

    pub fn sidetable(&self) -> &Sidetable {
        &self.code.side
    }

    pub fn is_boundary(&self, pc: u32) -> bool {
        self.code.side.is_boundary(pc)
    }
}

/// Instruction bytes of one function plus the metadata the interpreter needs.
#[derive(Debug)]
pub(crate) struct FuncCode {
    pub(crate) live: Box<[Cell<u8>]>,
    pub(crate) pristine: Box<[u8]>,
    pub(crate) side: Sidetable,
    pub(crate) func_index: u32,
    pub(crate) num_locals: u32,
    pub(crate) num_params: u32,
    pub(crate) num_results: u32,
}

impl FuncCode {
    pub(crate) fn new(body: &[u8], func_index: u32) -> Self {
        FuncCode {
            live: body.iter().map(|&b| Cell::new(b)).collect(),
            pristine: body.into(),
            side: Sidetable::default(),
            func_index,
            num_locals: 0,
            num_params: 0,
            num_results: 0,
        }
    }

    /// A fresh copy with unmodified live bytes, for a new instance.
    pub(crate) fn fork(&self) -> Self {
        FuncCode {
            live: self.pristine.iter().map(|&b| Cell::new(b)).collect(),
            pristine: self.pristine.clone(),
            side: self.side.clone(),
            func_index: self.func_index,
            num_locals: self.num_locals,
            num_params: self.num_params,
            num_results: self.num_results,
        }
    }

    /// Placeholder code for an instance with nothing executing.
    pub(crate) fn idle() -> Self {
        FuncCode::new(&[crate::opcodes::END], u32::MAX)
    }
}
