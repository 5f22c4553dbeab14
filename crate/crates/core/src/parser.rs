//! Decoder for the WebAssembly MVP binary format (version 1).

use std::rc::Rc;

use crate::disasm;
use crate::error::ParseError;
use crate::leb::Reader;
use crate::module::{
    ConstExpr, ConstOp, CustomSection, DataSegment, ElementSegment, Export, ExportKind, FuncCode,
    FuncDecl, Global, Import, Limits, Module,
};
use crate::types::{FuncType, ModuleId, Value, ValueType};

const MAGIC: &[u8; 4] = b"\0asm";
const VERSION: [u8; 4] = [1, 0, 0, 0];
/// Upper bound on the number of locals in one function.
const MAX_LOCALS: u64 = 50_000;

/// Decodes a binary module. The result still has to be validated before
/// it can be instantiated.
pub fn parse_module(bytes: &[u8]) -> Result<Module, ParseError> {
    let mut r = Reader::new(bytes);
    if bytes.len() < 4 {
        return Err(ParseError::Malformed {
            offset: bytes.len(),
            reason: "unexpected end".into(),
        });
    }
    for (i, (&got, &want)) in bytes.iter().zip(MAGIC).enumerate() {
        if got != want {
            return Err(ParseError::Malformed {
                offset: i,
                reason: "bad magic".into(),
            });
        }
    }
    r.bytes(4)?;
    let version = r.bytes(4).map_err(|_| ParseError::Malformed {
        offset: bytes.len(),
        reason: "unexpected end".into(),
    })?;
    if version != VERSION {
        return Err(ParseError::Malformed {
            offset: 4,
            reason: "unknown binary version".into(),
        });
    }

    let mut m = Module {
        id: ModuleId::fresh(),
        types: vec![],
        imports: vec![],
        funcs: vec![],
        tables: vec![],
        memories: vec![],
        globals: vec![],
        exports: vec![],
        start: None,
        elements: vec![],
        data: vec![],
        customs: vec![],
        section_order: vec![],
        validated: false,
    };
    let mut func_types: Vec<u32> = Vec::new();
    let mut saw_code = false;
    let mut last_id = 0u8;

    while !r.is_empty() {
        let id_offset = r.offset();
        let id = r.byte()?;
        let size = r.u32()? as usize;
        let origin = r.offset();
        let payload = r.bytes(size).map_err(|_| ParseError::Malformed {
            offset: origin,
            reason: "section size mismatch: unexpected end".into(),
        })?;
        let mut s = Reader::with_origin(payload, origin);
        if id == 0 {
            let name = s.name()?;
            m.customs.push(CustomSection {
                position: m.section_order.len(),
                name,
                payload: payload[s.pos()..].to_vec(),
            });
            continue;
        }
        if id > 11 {
            return Err(match id {
                12 => ParseError::UnsupportedFeature("data count section (bulk memory)".into()),
                13 => ParseError::UnsupportedFeature("tag section (exception handling)".into()),
                _ => ParseError::Malformed {
                    offset: id_offset,
                    reason: format!("malformed section id {id}"),
                },
            });
        }
        if id <= last_id {
            return Err(ParseError::Malformed {
                offset: id_offset,
                reason: "unexpected content after last section".into(),
            });
        }
        last_id = id;
        m.section_order.push(id);
        match id {
            1 => m.types = vec_of(&mut s, func_type)?,
            2 => m.imports = vec_of(&mut s, import)?,
            3 => func_types = vec_of(&mut s, |s| s.u32())?,
            4 => {
                m.tables = vec_of(&mut s, table_type)?;
                if m.tables.len() > 1 {
                    return Err(ParseError::UnsupportedFeature("multiple tables".into()));
                }
            }
            5 => {
                m.memories = vec_of(&mut s, limits)?;
                if m.memories.len() > 1 {
                    return Err(ParseError::UnsupportedFeature("multiple memories".into()));
                }
            }
            6 => m.globals = vec_of(&mut s, global)?,
            7 => m.exports = vec_of(&mut s, export)?,
            8 => m.start = Some(s.u32()?),
            9 => m.elements = vec_of(&mut s, element)?,
            10 => {
                saw_code = true;
                let n = s.u32()? as usize;
                if n != func_types.len() {
                    return Err(s.err("function and code section have inconsistent lengths"));
                }
                let imported = m.imports.len() as u32;
                for (i, &ty) in func_types.iter().enumerate() {
                    m.funcs.push(code_entry(&mut s, imported + i as u32, ty)?);
                }
            }
            11 => m.data = vec_of(&mut s, data)?,
            _ => unreachable!(),
        }
        if !s.is_empty() {
            return Err(s.err("section size mismatch"));
        }
    }
    if !saw_code && !func_types.is_empty() {
        return Err(ParseError::Malformed {
            offset: bytes.len(),
            reason: "function and code section have inconsistent lengths".into(),
        });
    }
    Ok(m)
}

fn vec_of<T>(
    s: &mut Reader<'_>,
    mut item: impl FnMut(&mut Reader<'_>) -> Result<T, ParseError>,
) -> Result<Vec<T>, ParseError> {
    let n = s.u32()? as usize;
    // Every item takes at least one byte; reject absurd counts before allocating.
    if n > s.remaining() {
        return Err(s.err("vector length exceeds section size"));
    }
    (0..n).map(|_| item(s)).collect()
}

fn value_type(s: &mut Reader<'_>) -> Result<ValueType, ParseError> {
    let off = s.offset();
    let b = s.byte()?;
    ValueType::from_byte(b).ok_or_else(|| match b {
        0x7b => ParseError::UnsupportedFeature("SIMD (v128)".into()),
        0x70 | 0x6f => ParseError::UnsupportedFeature("reference types".into()),
        _ => ParseError::Malformed {
            offset: off,
            reason: "malformed value type".into(),
        },
    })
}

fn func_type(s: &mut Reader<'_>) -> Result<FuncType, ParseError> {
    let off = s.offset();
    if s.byte()? != 0x60 {
        return Err(ParseError::Malformed {
            offset: off,
            reason: "malformed function type".into(),
        });
    }
    let params = vec_of(s, value_type)?;
    let results = vec_of(s, value_type)?;
    if results.len() > 1 {
        return Err(ParseError::UnsupportedFeature("multi-value results".into()));
    }
    Ok(FuncType { params, results })
}

fn import(s: &mut Reader<'_>) -> Result<Import, ParseError> {
    let module = s.name()?;
    let name = s.name()?;
    let off = s.offset();
    match s.byte()? {
        0x00 => Ok(Import {
            module,
            name,
            type_index: s.u32()?,
        }),
        0x01 => Err(ParseError::UnsupportedFeature("table imports".into())),
        0x02 => Err(ParseError::UnsupportedFeature("memory imports".into())),
        0x03 => Err(ParseError::UnsupportedFeature("global imports".into())),
        _ => Err(ParseError::Malformed {
            offset: off,
            reason: "malformed import kind".into(),
        }),
    }
}

fn limits(s: &mut Reader<'_>) -> Result<Limits, ParseError> {
    let off = s.offset();
    match s.byte()? {
        0x00 => Ok(Limits {
            min: s.u32()?,
            max: None,
        }),
        0x01 => Ok(Limits {
            min: s.u32()?,
            max: Some(s.u32()?),
        }),
        0x02 | 0x03 => Err(ParseError::UnsupportedFeature(
            "shared memory (threads)".into(),
        )),
        0x04..=0x07 => Err(ParseError::UnsupportedFeature("64-bit memory".into())),
        _ => Err(ParseError::Malformed {
            offset: off,
            reason: "integer too large".into(),
        }),
    }
}

fn table_type(s: &mut Reader<'_>) -> Result<Limits, ParseError> {
    let off = s.offset();
    match s.byte()? {
        0x70 => limits(s),
        0x6f => Err(ParseError::UnsupportedFeature(
            "reference types (externref)".into(),
        )),
        _ => Err(ParseError::Malformed {
            offset: off,
            reason: "malformed reference type".into(),
        }),
    }
}

fn const_expr(s: &mut Reader<'_>) -> Result<ConstExpr, ParseError> {
    let start = s.pos();
    let off = s.offset();
    let op = match s.byte()? {
        0x41 => ConstOp::Value(Value::I32(s.i32()?)),
        0x42 => ConstOp::Value(Value::I64(s.i64()?)),
        0x43 => ConstOp::Value(Value::F32(s.f32_bits()?)),
        0x44 => ConstOp::Value(Value::F64(s.f64_bits()?)),
        0x23 => ConstOp::GlobalGet(s.u32()?),
        op => {
            return Err(ParseError::Malformed {
                offset: off,
                reason: format!("constant expression required, found opcode 0x{op:02x}"),
            })
        }
    };
    if s.byte()? != 0x0b {
        return Err(s.err("constant expression required"));
    }
    Ok(ConstExpr {
        op,
        raw: s.slice(start, s.pos()).to_vec(),
    })
}

fn global(s: &mut Reader<'_>) -> Result<Global, ParseError> {
    let ty = value_type(s)?;
    let off = s.offset();
    let mutable = match s.byte()? {
        0 => false,
        1 => true,
        _ => {
            return Err(ParseError::Malformed {
                offset: off,
                reason: "malformed mutability".into(),
            })
        }
    };
    Ok(Global {
        ty,
        mutable,
        init: const_expr(s)?,
    })
}

fn export(s: &mut Reader<'_>) -> Result<Export, ParseError> {
    let name = s.name()?;
    let off = s.offset();
    let kind = match s.byte()? {
        0 => ExportKind::Func,
        1 => ExportKind::Table,
        2 => ExportKind::Memory,
        3 => ExportKind::Global,
        _ => {
            return Err(ParseError::Malformed {
                offset: off,
                reason: "malformed export kind".into(),
            })
        }
    };
    Ok(Export {
        name,
        kind,
        index: s.u32()?,
    })
}

fn element(s: &mut Reader<'_>) -> Result<ElementSegment, ParseError> {
    match s.u32()? {
        0 => Ok(ElementSegment {
            table: 0,
            offset: const_expr(s)?,
            funcs: vec_of(s, |s| s.u32())?,
        }),
        _ => Err(ParseError::UnsupportedFeature(
            "non-MVP element segment encoding".into(),
        )),
    }
}

fn data(s: &mut Reader<'_>) -> Result<DataSegment, ParseError> {
    match s.u32()? {
        0 => {
            let offset = const_expr(s)?;
            let len = s.u32()? as usize;
            Ok(DataSegment {
                memory: 0,
                offset,
                bytes: s.bytes(len)?.to_vec(),
            })
        }
        _ => Err(ParseError::UnsupportedFeature(
            "non-MVP data segment encoding".into(),
        )),
    }
}

fn code_entry(s: &mut Reader<'_>, index: u32, type_index: u32) -> Result<FuncDecl, ParseError> {
    let size = s.u32()? as usize;
    let origin = s.offset();
    let entry = s.bytes(size)?;
    let mut e = Reader::with_origin(entry, origin);
    let runs = e.u32()?;
    let mut local_runs = Vec::new();
    let mut total = 0u64;
    for _ in 0..runs {
        let n = e.u32()?;
        total += u64::from(n);
        if total > MAX_LOCALS {
            return Err(e.err("too many locals"));
        }
        local_runs.push((n, value_type(&mut e)?));
    }
    let body_origin = e.offset();
    let body = &entry[e.pos()..];
    // One linear pass rejects illegal and post-MVP opcodes up front.
    disasm::decode_all(body, body_origin)?;
    let local_types = local_runs
        .iter()
        .flat_map(|&(n, t)| std::iter::repeat_n(t, n as usize))
        .collect();
    Ok(FuncDecl {
        index,
        type_index,
        local_runs,
        local_types,
        num_params: 0,
        code: Rc::new(FuncCode::new(body, index)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_module() {
        let m = parse_module(b"\0asm\x01\0\0\0").unwrap();
        assert_eq!(m.funcs.len(), 0);
        assert_eq!(m.num_funcs(), 0);
    }

    #[test]
    fn bad_magic() {
        let err = parse_module(b"\0asM\x01\0\0\0").unwrap_err();
        assert_eq!(
            err,
            ParseError::Malformed {
                offset: 3,
                reason: "bad magic".into()
            }
        );
    }

    #[test]
    fn bad_version() {
        let err = parse_module(b"\0asm\x02\0\0\0").unwrap_err();
        assert!(matches!(err, ParseError::Malformed { offset: 4, .. }));
    }

    #[test]
    fn truncated_section() {
        let err = parse_module(b"\0asm\x01\0\0\0\x01\x05\x01").unwrap_err();
        assert!(matches!(err, ParseError::Malformed { .. }));
    }

    #[test]
    fn data_count_section_is_unsupported() {
        let err = parse_module(b"\0asm\x01\0\0\0\x0c\x01\x00").unwrap_err();
        assert!(matches!(err, ParseError::UnsupportedFeature(_)));
    }

    #[test]
    fn out_of_order_sections() {
        // type section after function section
        let bytes = b"\0asm\x01\0\0\0\x03\x01\x00\x01\x01\x00";
        assert!(parse_module(bytes).is_err());
    }
}
