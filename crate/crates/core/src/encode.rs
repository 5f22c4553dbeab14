//! Re-encoding of a decoded module to the binary format.
//!
//! Function bodies are emitted from their pristine copies, so a module with
//! probes installed encodes to the same bytes as an uninstrumented one.

use crate::leb::{write_u32, write_u64};
use crate::module::{ConstExpr, ExportKind, Limits, Module};

pub fn encode_module(m: &Module) -> Vec<u8> {
    let mut out = b"\0asm\x01\0\0\0".to_vec();
    let mut customs = m.customs.iter().peekable();
    for (i, &id) in m.section_order.iter().enumerate() {
        while let Some(c) = customs.next_if(|c| c.position == i) {
            let mut p = Vec::new();
            name(&mut p, &c.name);
            p.extend_from_slice(&c.payload);
            section(&mut out, 0, &p);
        }
        let mut p = Vec::new();
        match id {
            1 => vec(&mut p, &m.types, |p, t| {
                p.push(0x60);
                vec(p, &t.params, |p, v| p.push(v.to_byte()));
                vec(p, &t.results, |p, v| p.push(v.to_byte()));
            }),
            2 => vec(&mut p, &m.imports, |p, imp| {
                name(p, &imp.module);
                name(p, &imp.name);
                p.push(0);
                write_u32(p, imp.type_index);
            }),
            3 => vec(&mut p, &m.funcs, |p, f| write_u32(p, f.type_index)),
            4 => vec(&mut p, &m.tables, |p, l| {
                p.push(0x70);
                limits(p, l);
            }),
            5 => vec(&mut p, &m.memories, limits),
            6 => vec(&mut p, &m.globals, |p, g| {
                p.push(g.ty.to_byte());
                p.push(u8::from(g.mutable));
                const_expr(p, &g.init);
            }),
            7 => vec(&mut p, &m.exports, |p, e| {
                name(p, &e.name);
                p.push(match e.kind {
                    ExportKind::Func => 0,
                    ExportKind::Table => 1,
                    ExportKind::Memory => 2,
                    ExportKind::Global => 3,
                });
                write_u32(p, e.index);
            }),
            8 => write_u32(&mut p, m.start.unwrap_or_default()),
            9 => vec(&mut p, &m.elements, |p, e| {
                write_u32(p, 0);
                const_expr(p, &e.offset);
                vec(p, &e.funcs, |p, &f| write_u32(p, f));
            }),
            10 => vec(&mut p, &m.funcs, |p, f| {
                let mut entry = Vec::new();
                vec(&mut entry, &f.local_runs, |e, &(n, t)| {
                    write_u32(e, n);
                    e.push(t.to_byte());
                });
                entry.extend_from_slice(f.pristine_body());
                write_u32(p, entry.len() as u32);
                p.extend(entry);
            }),
            11 => vec(&mut p, &m.data, |p, d| {
                write_u32(p, 0);
                const_expr(p, &d.offset);
                write_u32(p, d.bytes.len() as u32);
                p.extend_from_slice(&d.bytes);
            }),
            _ => unreachable!("only MVP sections are retained"),
        }
        section(&mut out, id, &p);
    }
    for c in customs {
        let mut p = Vec::new();
        name(&mut p, &c.name);
        p.extend_from_slice(&c.payload);
        section(&mut out, 0, &p);
    }
    out
}

fn section(out: &mut Vec<u8>, id: u8, payload: &[u8]) {
    out.push(id);
    write_u32(out, payload.len() as u32);
    out.extend_from_slice(payload);
}

fn vec<T>(out: &mut Vec<u8>, items: &[T], mut f: impl FnMut(&mut Vec<u8>, &T)) {
    write_u64(out, items.len() as u64);
    for item in items {
        f(out, item);
    }
}

fn name(out: &mut Vec<u8>, s: &str) {
    write_u32(out, s.len() as u32);
    out.extend_from_slice(s.as_bytes());
}

fn limits(out: &mut Vec<u8>, l: &Limits) {
    match l.max {
        None => {
            out.push(0);
            write_u32(out, l.min);
        }
        Some(max) => {
            out.push(1);
            write_u32(out, l.min);
            write_u32(out, max);
        }
    }
}

fn const_expr(out: &mut Vec<u8>, e: &ConstExpr) {
    out.extend_from_slice(&e.raw);
}
