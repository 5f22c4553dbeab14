//! Opcode numbering, mnemonics and immediate layouts for the supported subset.

use crate::types::ValueType::{self, F32, F64, I32, I64};

/// Opcode byte written over an instrumented instruction. Unassigned in the MVP.
pub const PROBE: u8 = 0xff;

pub const UNREACHABLE: u8 = 0x00;
pub const NOP: u8 = 0x01;
pub const BLOCK: u8 = 0x02;
pub const LOOP: u8 = 0x03;
pub const IF: u8 = 0x04;
pub const ELSE: u8 = 0x05;
pub const END: u8 = 0x0b;
pub const BR: u8 = 0x0c;
pub const BR_IF: u8 = 0x0d;
pub const BR_TABLE: u8 = 0x0e;
pub const RETURN: u8 = 0x0f;
pub const CALL: u8 = 0x10;
pub const CALL_INDIRECT: u8 = 0x11;
pub const DROP: u8 = 0x1a;
pub const SELECT: u8 = 0x1b;
pub const LOCAL_GET: u8 = 0x20;
pub const LOCAL_SET: u8 = 0x21;
pub const LOCAL_TEE: u8 = 0x22;
pub const GLOBAL_GET: u8 = 0x23;
pub const GLOBAL_SET: u8 = 0x24;
pub const I32_LOAD: u8 = 0x28;
pub const I64_LOAD32_U: u8 = 0x35;
pub const I32_STORE: u8 = 0x36;
pub const I64_STORE32: u8 = 0x3e;
pub const MEMORY_SIZE: u8 = 0x3f;
pub const MEMORY_GROW: u8 = 0x40;
pub const I32_CONST: u8 = 0x41;
pub const I64_CONST: u8 = 0x42;
pub const F32_CONST: u8 = 0x43;
pub const F64_CONST: u8 = 0x44;

/// Layout of the immediates following an opcode.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ImmKind {
    None,
    BlockType,
    Label,
    BrTable,
    Func,
    CallIndirect,
    Local,
    Global,
    MemArg,
    /// The reserved memory index byte of `memory.size` / `memory.grow`.
    MemIdx,
    I32,
    I64,
    F32,
    F64,
}

pub fn imm_kind(op: u8) -> ImmKind {
    match op {
        BLOCK | LOOP | IF => ImmKind::BlockType,
        BR | BR_IF => ImmKind::Label,
        BR_TABLE => ImmKind::BrTable,
        CALL => ImmKind::Func,
        CALL_INDIRECT => ImmKind::CallIndirect,
        LOCAL_GET | LOCAL_SET | LOCAL_TEE => ImmKind::Local,
        GLOBAL_GET | GLOBAL_SET => ImmKind::Global,
        0x28..=0x3e => ImmKind::MemArg,
        MEMORY_SIZE | MEMORY_GROW => ImmKind::MemIdx,
        I32_CONST => ImmKind::I32,
        I64_CONST => ImmKind::I64,
        F32_CONST => ImmKind::F32,
        F64_CONST => ImmKind::F64,
        _ => ImmKind::None,
    }
}

pub fn is_load(op: u8) -> bool {
    (I32_LOAD..=I64_LOAD32_U).contains(&op)
}

pub fn is_store(op: u8) -> bool {
    (I32_STORE..=I64_STORE32).contains(&op)
}

/// Access width in bytes and value type of a load or store.
pub fn mem_access(op: u8) -> Option<(u32, ValueType)> {
    Some(match op {
        0x28 => (4, I32),
        0x29 => (8, I64),
        0x2a => (4, F32),
        0x2b => (8, F64),
        0x2c | 0x2d => (1, I32),
        0x2e | 0x2f => (2, I32),
        0x30 | 0x31 => (1, I64),
        0x32 | 0x33 => (2, I64),
        0x34 | 0x35 => (4, I64),
        0x36 => (4, I32),
        0x37 => (8, I64),
        0x38 => (4, F32),
        0x39 => (8, F64),
        0x3a => (1, I32),
        0x3b => (2, I32),
        0x3c => (1, I64),
        0x3d => (2, I64),
        0x3e => (4, I64),
        _ => return None,
    })
}

/// Operand and result types of the pure numeric instructions.
pub fn numeric_sig(op: u8) -> Option<(&'static [ValueType], ValueType)> {
    const I32_1: &[ValueType] = &[I32];
    const I32_2: &[ValueType] = &[I32, I32];
    const I64_1: &[ValueType] = &[I64];
    const I64_2: &[ValueType] = &[I64, I64];
    const F32_1: &[ValueType] = &[F32];
    const F32_2: &[ValueType] = &[F32, F32];
    const F64_1: &[ValueType] = &[F64];
    const F64_2: &[ValueType] = &[F64, F64];
    Some(match op {
        0x45 => (I32_1, I32),
        0x46..=0x4f => (I32_2, I32),
        0x50 => (I64_1, I32),
        0x51..=0x5a => (I64_2, I32),
        0x5b..=0x60 => (F32_2, I32),
        0x61..=0x66 => (F64_2, I32),
        0x67..=0x69 => (I32_1, I32),
        0x6a..=0x78 => (I32_2, I32),
        0x79..=0x7b => (I64_1, I64),
        0x7c..=0x8a => (I64_2, I64),
        0x8b..=0x91 => (F32_1, F32),
        0x92..=0x98 => (F32_2, F32),
        0x99..=0x9f => (F64_1, F64),
        0xa0..=0xa6 => (F64_2, F64),
        0xa7 => (I64_1, I32),
        0xa8 | 0xa9 => (F32_1, I32),
        0xaa | 0xab => (F64_1, I32),
        0xac | 0xad => (I32_1, I64),
        0xae | 0xaf => (F32_1, I64),
        0xb0 | 0xb1 => (F64_1, I64),
        0xb2 | 0xb3 => (I32_1, F32),
        0xb4 | 0xb5 => (I64_1, F32),
        0xb6 => (F64_1, F32),
        0xb7 | 0xb8 => (I32_1, F64),
        0xb9 | 0xba => (I64_1, F64),
        0xbb => (F32_1, F64),
        0xbc => (F32_1, I32),
        0xbd => (F64_1, I64),
        0xbe => (I32_1, F32),
        0xbf => (I64_1, F64),
        _ => return None,
    })
}

/// Mnemonic for every opcode of the supported subset; `None` for all others.
pub fn mnemonic(op: u8) -> Option<&'static str> {
    Some(match op {
        0x00 => "unreachable",
        0x01 => "nop",
        0x02 => "block",
        0x03 => "loop",
        0x04 => "if",
        0x05 => "else",
        0x0b => "end",
        0x0c => "br",
        0x0d => "br_if",
        0x0e => "br_table",
        0x0f => "return",
        0x10 => "call",
        0x11 => "call_indirect",
        0x1a => "drop",
        0x1b => "select",
        0x20 => "local.get",
        0x21 => "local.set",
        0x22 => "local.tee",
        0x23 => "global.get",
        0x24 => "global.set",
        0x28 => "i32.load",
        0x29 => "i64.load",
        0x2a => "f32.load",
        0x2b => "f64.load",
        0x2c => "i32.load8_s",
        0x2d => "i32.load8_u",
        0x2e => "i32.load16_s",
        0x2f => "i32.load16_u",
        0x30 => "i64.load8_s",
        0x31 => "i64.load8_u",
        0x32 => "i64.load16_s",
        0x33 => "i64.load16_u",
        0x34 => "i64.load32_s",
        0x35 => "i64.load32_u",
        0x36 => "i32.store",
        0x37 => "i64.store",
        0x38 => "f32.store",
        0x39 => "f64.store",
        0x3a => "i32.store8",
        0x3b => "i32.store16",
        0x3c => "i64.store8",
        0x3d => "i64.store16",
        0x3e => "i64.store32",
        0x3f => "memory.size",
        0x40 => "memory.grow",
        0x41 => "i32.const",
        0x42 => "i64.const",
        0x43 => "f32.const",
        0x44 => "f64.const",
        0x45 => "i32.eqz",
        0x46 => "i32.eq",
        0x47 => "i32.ne",
        0x48 => "i32.lt_s",
        0x49 => "i32.lt_u",
        0x4a => "i32.gt_s",
        0x4b => "i32.gt_u",
        0x4c => "i32.le_s",
        0x4d => "i32.le_u",
        0x4e => "i32.ge_s",
        0x4f => "i32.ge_u",
        0x50 => "i64.eqz",
        0x51 => "i64.eq",
        0x52 => "i64.ne",
        0x53 => "i64.lt_s",
        0x54 => "i64.lt_u",
        0x55 => "i64.gt_s",
        0x56 => "i64.gt_u",
        0x57 => "i64.le_s",
        0x58 => "i64.le_u",
        0x59 => "i64.ge_s",
        0x5a => "i64.ge_u",
        0x5b => "f32.eq",
        0x5c => "f32.ne",
        0x5d => "f32.lt",
        0x5e => "f32.gt",
        0x5f => "f32.le",
        0x60 => "f32.ge",
        0x61 => "f64.eq",
        0x62 => "f64.ne",
        0x63 => "f64.lt",
        0x64 => "f64.gt",
        0x65 => "f64.le",
        0x66 => "f64.ge",
        0x67 => "i32.clz",
        0x68 => "i32.ctz",
        0x69 => "i32.popcnt",
        0x6a => "i32.add",
        0x6b => "i32.sub",
        0x6c => "i32.mul",
        0x6d => "i32.div_s",
        0x6e => "i32.div_u",
        0x6f => "i32.rem_s",
        0x70 => "i32.rem_u",
        0x71 => "i32.and",
        0x72 => "i32.or",
        0x73 => "i32.xor",
        0x74 => "i32.shl",
        0x75 => "i32.shr_s",
        0x76 => "i32.shr_u",
        0x77 => "i32.rotl",
        0x78 => "i32.rotr",
        0x79 => "i64.clz",
        0x7a => "i64.ctz",
        0x7b => "i64.popcnt",
        0x7c => "i64.add",
        0x7d => "i64.sub",
        0x7e => "i64.mul",
        0x7f => "i64.div_s",
        0x80 => "i64.div_u",
        0x81 => "i64.rem_s",
        0x82 => "i64.rem_u",
        0x83 => "i64.and",
        0x84 => "i64.or",
        0x85 => "i64.xor",
        0x86 => "i64.shl",
        0x87 => "i64.shr_s",
        0x88 => "i64.shr_u",
        0x89 => "i64.rotl",
        0x8a => "i64.rotr",
        0x8b => "f32.abs",
        0x8c => "f32.neg",
        0x8d => "f32.ceil",
        0x8e => "f32.floor",
        0x8f => "f32.trunc",
        0x90 => "f32.nearest",
        0x91 => "f32.sqrt",
        0x92 => "f32.add",
        0x93 => "f32.sub",
        0x94 => "f32.mul",
        0x95 => "f32.div",
        0x96 => "f32.min",
        0x97 => "f32.max",
        0x98 => "f32.copysign",
        0x99 => "f64.abs",
        0x9a => "f64.neg",
        0x9b => "f64.ceil",
        0x9c => "f64.floor",
        0x9d => "f64.trunc",
        0x9e => "f64.nearest",
        0x9f => "f64.sqrt",
        0xa0 => "f64.add",
        0xa1 => "f64.sub",
        0xa2 => "f64.mul",
        0xa3 => "f64.div",
        0xa4 => "f64.min",
        0xa5 => "f64.max",
        0xa6 => "f64.copysign",
        0xa7 => "i32.wrap_i64",
        0xa8 => "i32.trunc_f32_s",
        0xa9 => "i32.trunc_f32_u",
        0xaa => "i32.trunc_f64_s",
        0xab => "i32.trunc_f64_u",
        0xac => "i64.extend_i32_s",
        0xad => "i64.extend_i32_u",
        0xae => "i64.trunc_f32_s",
        0xaf => "i64.trunc_f32_u",
        0xb0 => "i64.trunc_f64_s",
        0xb1 => "i64.trunc_f64_u",
        0xb2 => "f32.convert_i32_s",
        0xb3 => "f32.convert_i32_u",
        0xb4 => "f32.convert_i64_s",
        0xb5 => "f32.convert_i64_u",
        0xb6 => "f32.demote_f64",
        0xb7 => "f64.convert_i32_s",
        0xb8 => "f64.convert_i32_u",
        0xb9 => "f64.convert_i64_s",
        0xba => "f64.convert_i64_u",
        0xbb => "f64.promote_f32",
        0xbc => "i32.reinterpret_f32",
        0xbd => "i64.reinterpret_f64",
        0xbe => "f32.reinterpret_i32",
        0xbf => "f64.reinterpret_i64",
        _ => return None,
    })
}

/// Name used in `UnsupportedFeature` errors for opcodes outside the subset.
pub(crate) fn unsupported_name(op: u8) -> String {
    match op {
        0x06..=0x0a | 0x18 | 0x19 => "exception handling".into(),
        0x12 | 0x13 => "tail calls".into(),
        0x14 | 0x15 => "typed function references".into(),
        0x1c => "typed select".into(),
        0x25 | 0x26 => "reference types (table.get/table.set)".into(),
        0xc0..=0xc4 => "sign-extension operators".into(),
        0xd0..=0xd6 => "reference types".into(),
        0xfb => "garbage collection".into(),
        0xfc => "bulk memory / saturating conversions".into(),
        0xfd => "SIMD".into(),
        0xfe => "threads".into(),
        _ => format!("opcode 0x{op:02x}"),
    }
}
