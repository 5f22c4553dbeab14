//! Instruction decoding and disassembly.
//!
//! Disassembly always reads a function's pristine body, so listings are
//! unaffected by probes currently installed in the live body.

use std::collections::BTreeSet;
use std::fmt;

use crate::error::ParseError;
use crate::leb::Reader;
use crate::module::FuncDecl;
use crate::opcodes::{self, ImmKind};
use crate::types::ValueType;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BlockType {
    Empty,
    Value(ValueType),
}

impl BlockType {
    pub fn arity(self) -> u32 {
        match self {
            BlockType::Empty => 0,
            BlockType::Value(_) => 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Immediate {
    None,
    Block(BlockType),
    Label(u32),
    Table { targets: Vec<u32>, default: u32 },
    Func(u32),
    CallIndirect { type_index: u32, table: u32 },
    Local(u32),
    Global(u32),
    MemArg { align: u32, offset: u32 },
    MemIdx(u32),
    I32(i32),
    I64(i64),
    F32(u32),
    F64(u64),
}

/// One decoded instruction.
#[derive(Clone, Debug, PartialEq)]
pub struct Instruction {
    pub pc: u32,
    pub opcode: u8,
    pub imm: Immediate,
    /// Encoded length in bytes, opcode included.
    pub len: u32,
}

impl Instruction {
    pub fn mnemonic(&self) -> &'static str {
        opcodes::mnemonic(self.opcode).unwrap_or("<invalid>")
    }

    pub fn next_pc(&self) -> u32 {
        self.pc + self.len
    }

    /// Immediates rendered as individual tokens.
    pub fn immediates(&self) -> Vec<String> {
        match &self.imm {
            Immediate::None => vec![],
            Immediate::Block(BlockType::Empty) => vec![],
            Immediate::Block(BlockType::Value(t)) => vec![t.to_string()],
            Immediate::Label(l)
            | Immediate::Func(l)
            | Immediate::Local(l)
            | Immediate::Global(l) => {
                vec![l.to_string()]
            }
            Immediate::Table { targets, default } => targets
                .iter()
                .chain(std::iter::once(default))
                .map(u32::to_string)
                .collect(),
            Immediate::CallIndirect { type_index, table } => {
                vec![format!("type={type_index}"), format!("table={table}")]
            }
            Immediate::MemArg { align, offset } => {
                vec![
                    format!("offset={offset}"),
                    format!("align={}", 1u64 << align),
                ]
            }
            Immediate::MemIdx(_) => vec![],
            Immediate::I32(v) => vec![v.to_string()],
            Immediate::I64(v) => vec![v.to_string()],
            Immediate::F32(b) => vec![f32::from_bits(*b).to_string()],
            Immediate::F64(b) => vec![f64::from_bits(*b).to_string()],
        }
    }
}

impl fmt::Display for Instruction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.mnemonic())?;
        for imm in self.immediates() {
            write!(f, " {imm}")?;
        }
        Ok(())
    }
}

/// Decodes the instruction starting at `pc`.
///
/// `origin` is added to offsets in error messages.
pub(crate) fn decode_at(body: &[u8], pc: usize, origin: usize) -> Result<Instruction, ParseError> {
    let mut r = Reader::with_origin(&body[pc..], origin + pc);
    let opcode = r.byte()?;
    if opcodes::mnemonic(opcode).is_none() {
        return Err(match opcode {
            opcodes::PROBE => r.err("illegal opcode 0xff"),
            0x06..=0x0a
            | 0x12..=0x19
            | 0x1c
            | 0x25
            | 0x26
            | 0xc0..=0xc4
            | 0xd0..=0xd6
            | 0xfb..=0xfe => ParseError::UnsupportedFeature(opcodes::unsupported_name(opcode)),
            _ => r.err(format!("illegal opcode 0x{opcode:02x}")),
        });
    }
    let imm = match opcodes::imm_kind(opcode) {
        ImmKind::None => Immediate::None,
        ImmKind::BlockType => Immediate::Block(block_type(&mut r)?),
        ImmKind::Label => Immediate::Label(r.u32()?),
        ImmKind::BrTable => {
            let n = r.u32()?;
            if n as usize > r.remaining() {
                return Err(r.err("br_table target count too large"));
            }
            let targets = (0..n).map(|_| r.u32()).collect::<Result<Vec<_>, _>>()?;
            Immediate::Table {
                targets,
                default: r.u32()?,
            }
        }
        ImmKind::Func => Immediate::Func(r.u32()?),
        ImmKind::CallIndirect => {
            let type_index = r.u32()?;
            let table = r.byte()?;
            if table != 0 {
                return Err(ParseError::UnsupportedFeature("multiple tables".into()));
            }
            Immediate::CallIndirect {
                type_index,
                table: 0,
            }
        }
        ImmKind::Local => Immediate::Local(r.u32()?),
        ImmKind::Global => Immediate::Global(r.u32()?),
        ImmKind::MemArg => {
            let align = r.u32()?;
            if align >= 64 {
                return Err(r.err("malformed memop flags"));
            }
            Immediate::MemArg {
                align,
                offset: r.u32()?,
            }
        }
        ImmKind::MemIdx => {
            let idx = r.byte()?;
            if idx != 0 {
                return Err(r.err("zero byte expected"));
            }
            Immediate::MemIdx(0)
        }
        ImmKind::I32 => Immediate::I32(r.i32()?),
        ImmKind::I64 => Immediate::I64(r.i64()?),
        ImmKind::F32 => Immediate::F32(r.f32_bits()?),
        ImmKind::F64 => Immediate::F64(r.f64_bits()?),
    };
    Ok(Instruction {
        pc: pc as u32,
        opcode,
        imm,
        len: r.pos() as u32,
    })
}

fn block_type(r: &mut Reader<'_>) -> Result<BlockType, ParseError> {
    match r.peek() {
        Some(0x40) => {
            r.byte()?;
            Ok(BlockType::Empty)
        }
        Some(b) if ValueType::from_byte(b).is_some() => {
            r.byte()?;
            Ok(BlockType::Value(ValueType::from_byte(b).unwrap()))
        }
        _ => {
            let idx = r.s33()?;
            if idx < 0 {
                Err(r.err("malformed block type"))
            } else {
                Err(ParseError::UnsupportedFeature(
                    "multi-value block types".into(),
                ))
            }
        }
    }
}

/// Decodes a whole instruction sequence linearly.
pub(crate) fn decode_all(body: &[u8], origin: usize) -> Result<Vec<Instruction>, ParseError> {
    let mut out = Vec::new();
    let mut pc = 0;
    while pc < body.len() {
        let ins = decode_at(body, pc, origin)?;
        pc += ins.len as usize;
        out.push(ins);
    }
    Ok(out)
}

/// Lists every instruction of `f`'s pristine body in ascending pc order.
pub fn disassemble(f: &FuncDecl) -> Vec<Instruction> {
    // Bodies are decoded once during parsing, so this cannot fail.
    decode_all(f.pristine_body(), 0).expect("function body was decoded at parse time")
}

/// The set of byte offsets at which instructions begin.
pub fn instruction_boundaries(f: &FuncDecl) -> BTreeSet<u32> {
    disassemble(f).into_iter().map(|i| i.pc).collect()
}

/// Decodes the single instruction at `pc` of `f`'s pristine body.
pub fn instruction_at(f: &FuncDecl, pc: u32) -> Option<Instruction> {
    if !f.is_boundary(pc) {
        return None;
    }
    decode_at(f.pristine_body(), pc as usize, 0).ok()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn multibyte_immediate_advances_past_leb() {
        // i32.const 300 ; end
        let body = [0x41, 0xac, 0x02, 0x0b];
        let ins = decode_all(&body, 0).unwrap();
        assert_eq!(ins.len(), 2);
        assert_eq!(ins[0].imm, Immediate::I32(300));
        assert_eq!(ins[1].pc, 3);
    }

    #[test]
    fn post_mvp_opcode_is_unsupported() {
        let err = decode_all(&[0xc0, 0x0b], 0).unwrap_err();
        assert!(matches!(err, ParseError::UnsupportedFeature(_)));
        let err = decode_all(&[0xfc, 0x00, 0x0b], 0).unwrap_err();
        assert!(matches!(err, ParseError::UnsupportedFeature(_)));
    }

    #[test]
    fn probe_opcode_in_input_is_malformed() {
        let err = decode_all(&[0xff, 0x0b], 0).unwrap_err();
        assert!(matches!(err, ParseError::Malformed { .. }));
    }

    #[test]
    fn br_table_renders_targets_then_default() {
        let body = [0x0e, 0x02, 0x00, 0x01, 0x02, 0x0b];
        let ins = decode_at(&body, 0, 0).unwrap();
        assert_eq!(ins.immediates(), vec!["0", "1", "2"]);
        assert_eq!(ins.to_string(), "br_table 0 1 2");
    }
}
