//! One handler per opcode, dispatched through 256-entry tables.
//!
//! Stack slots are untyped `u64`s. `i32` and `f32` values occupy the low 32
//! bits with the high bits zero.

use super::{Break, Core};
use crate::error::TrapKind;
use crate::leb::{read_i64_at, read_u32_at};

pub(crate) type Handler = fn(&mut Core) -> Result<(), Break>;
type R = Result<(), Break>;

/// Regular dispatch: every opcode runs its handler, the probe opcode breaks
/// out to fire local probes.
pub(crate) static NORMAL: [Handler; 256] = build_normal();

/// Dispatch while global probes are installed: every entry breaks out so the
/// engine can fire them before the instruction executes.
pub(crate) static GLOBAL: [Handler; 256] = [global_probe as Handler; 256];

fn local_probe(_: &mut Core) -> R {
    Err(Break::LocalProbe)
}

fn global_probe(_: &mut Core) -> R {
    Err(Break::GlobalProbe)
}

fn illegal(_: &mut Core) -> R {
    debug_assert!(false, "illegal opcode in validated code");
    Err(Break::Trap(TrapKind::Unreachable))
}

fn trap(k: TrapKind) -> Break {
    Break::Trap(k)
}

// ---- control -------------------------------------------------------------

fn unreachable(_: &mut Core) -> R {
    Err(trap(TrapKind::Unreachable))
}

fn nop(c: &mut Core) -> R {
    c.pc += 1;
    Ok(())
}

/// `block` and `loop`: the label is resolved in the sidetable, so entering is
/// just skipping the one-byte block type.
fn enter_block(c: &mut Core) -> R {
    c.pc += 2;
    Ok(())
}

fn if_(c: &mut Core) -> R {
    if c.pop() as u32 != 0 {
        c.pc += 2;
        Ok(())
    } else {
        c.take_branch(0)
    }
}

fn else_(c: &mut Core) -> R {
    c.take_branch(0)
}

fn end(c: &mut Core) -> R {
    if c.pc + 1 == c.code.live.len() {
        c.do_return()
    } else {
        c.pc += 1;
        Ok(())
    }
}

fn br(c: &mut Core) -> R {
    c.take_branch(0)
}

fn br_if(c: &mut Core) -> R {
    if c.pop() as u32 != 0 {
        c.take_branch(0)
    } else {
        let (_, n) = read_u32_at(&c.code.live, c.pc + 1);
        c.pc += 1 + n;
        Ok(())
    }
}

fn br_table(c: &mut Core) -> R {
    let i = c.pop() as u32;
    let (count, _) = read_u32_at(&c.code.live, c.pc + 1);
    c.take_branch(i.min(count) as usize)
}

fn return_(c: &mut Core) -> R {
    c.do_return()
}

fn call(c: &mut Core) -> R {
    let (f, n) = read_u32_at(&c.code.live, c.pc + 1);
    let ret = c.pc + 1 + n;
    c.call(f, ret)
}

fn call_indirect(c: &mut Core) -> R {
    let (type_index, n) = read_u32_at(&c.code.live, c.pc + 1);
    // The reserved table byte follows the type index.
    let ret = c.pc + 1 + n + 1;
    let i = c.pop() as u32;
    let f = match c.table.get(i as usize) {
        Some(Some(f)) => *f,
        _ => return Err(trap(TrapKind::UndefinedElement)),
    };
    let expected = &c.module.types[type_index as usize];
    if c.module.func_type(f) != Some(expected) {
        return Err(trap(TrapKind::IndirectCallMismatch));
    }
    c.call(f, ret)
}

// ---- parametric and variables ------------------------------------------

fn drop_(c: &mut Core) -> R {
    c.pop();
    c.pc += 1;
    Ok(())
}

fn select(c: &mut Core) -> R {
    let cond = c.pop() as u32;
    let b = c.pop();
    if cond == 0 {
        *c.top() = b;
    }
    c.pc += 1;
    Ok(())
}

fn local_get(c: &mut Core) -> R {
    let (i, n) = read_u32_at(&c.code.live, c.pc + 1);
    let v = c.stack[c.base + i as usize];
    c.stack.push(v);
    c.pc += 1 + n;
    Ok(())
}

fn local_set(c: &mut Core) -> R {
    let (i, n) = read_u32_at(&c.code.live, c.pc + 1);
    let v = c.pop();
    let slot = c.base + i as usize;
    c.stack[slot] = v;
    c.pc += 1 + n;
    Ok(())
}

fn local_tee(c: &mut Core) -> R {
    let (i, n) = read_u32_at(&c.code.live, c.pc + 1);
    let v = *c.top();
    let slot = c.base + i as usize;
    c.stack[slot] = v;
    c.pc += 1 + n;
    Ok(())
}

fn global_get(c: &mut Core) -> R {
    let (i, n) = read_u32_at(&c.code.live, c.pc + 1);
    let v = c.globals[i as usize];
    c.stack.push(v);
    c.pc += 1 + n;
    Ok(())
}

fn global_set(c: &mut Core) -> R {
    let (i, n) = read_u32_at(&c.code.live, c.pc + 1);
    let v = c.pop();
    c.globals[i as usize] = v;
    c.pc += 1 + n;
    Ok(())
}

// ---- memory ----------------------------------------------------------------

/// Pops the address operand, applies the memarg offset and bounds-checks an
/// access of `width` bytes. Advances past the immediates on success.
#[inline(always)]
fn effective_address(c: &mut Core, width: usize) -> Result<usize, Break> {
    let (_, la) = read_u32_at(&c.code.live, c.pc + 1);
    let (offset, lo) = read_u32_at(&c.code.live, c.pc + 1 + la);
    let addr = c.pop() as u32;
    let ea = u64::from(addr) + u64::from(offset);
    if ea + width as u64 > c.memory.len() as u64 {
        return Err(trap(TrapKind::OutOfBounds));
    }
    c.pc += 1 + la + lo;
    Ok(ea as usize)
}

#[inline(always)]
fn load_raw<const N: usize>(c: &mut Core) -> Result<u64, Break> {
    let ea = effective_address(c, N)?;
    let mut buf = [0u8; 8];
    buf[..N].copy_from_slice(&c.memory[ea..ea + N]);
    Ok(u64::from_le_bytes(buf))
}

#[inline(always)]
fn store<const N: usize>(c: &mut Core) -> R {
    let v = c.pop();
    let ea = effective_address(c, N)?;
    c.memory[ea..ea + N].copy_from_slice(&v.to_le_bytes()[..N]);
    Ok(())
}

macro_rules! load {
    ($name:ident, $n:literal, |$v:ident| $conv:expr) => {
        fn $name(c: &mut Core) -> R {
            let $v = load_raw::<$n>(c)?;
            c.stack.push($conv);
            Ok(())
        }
    };
}

load!(i32_load, 4, |v| v);
load!(i64_load, 8, |v| v);
load!(i32_load8_s, 1, |v| from_i32(v as u8 as i8 as i32));
load!(i32_load8_u, 1, |v| v);
load!(i32_load16_s, 2, |v| from_i32(v as u16 as i16 as i32));
load!(i32_load16_u, 2, |v| v);
load!(i64_load8_s, 1, |v| v as u8 as i8 as i64 as u64);
load!(i64_load16_s, 2, |v| v as u16 as i16 as i64 as u64);
load!(i64_load32_s, 4, |v| v as u32 as i32 as i64 as u64);

fn store1(c: &mut Core) -> R {
    store::<1>(c)
}

fn store2(c: &mut Core) -> R {
    store::<2>(c)
}

fn store4(c: &mut Core) -> R {
    store::<4>(c)
}

fn store8(c: &mut Core) -> R {
    store::<8>(c)
}

fn load1_u(c: &mut Core) -> R {
    i32_load8_u(c)
}

fn load2_u(c: &mut Core) -> R {
    i32_load16_u(c)
}

fn load4_u(c: &mut Core) -> R {
    i32_load(c)
}

fn memory_size(c: &mut Core) -> R {
    let pages = c.pages();
    c.stack.push(u64::from(pages));
    c.pc += 2;
    Ok(())
}

fn memory_grow(c: &mut Core) -> R {
    let delta = c.pop() as u32;
    let old = c.pages();
    let r = match old.checked_add(delta) {
        Some(new) if new <= c.max_pages => {
            c.memory.resize(new as usize * super::PAGE_SIZE, 0);
            old
        }
        _ => u32::MAX,
    };
    c.stack.push(u64::from(r));
    c.pc += 2;
    Ok(())
}

// ---- constants -------------------------------------------------------------

fn i32_const(c: &mut Core) -> R {
    let (v, n) = read_i64_at(&c.code.live, c.pc + 1);
    c.stack.push(from_i32(v as i32));
    c.pc += 1 + n;
    Ok(())
}

fn i64_const(c: &mut Core) -> R {
    let (v, n) = read_i64_at(&c.code.live, c.pc + 1);
    c.stack.push(v as u64);
    c.pc += 1 + n;
    Ok(())
}

fn f32_const(c: &mut Core) -> R {
    let mut b = [0u8; 4];
    for (i, x) in b.iter_mut().enumerate() {
        *x = c.code.live[c.pc + 1 + i].get();
    }
    c.stack.push(u64::from(u32::from_le_bytes(b)));
    c.pc += 5;
    Ok(())
}

fn f64_const(c: &mut Core) -> R {
    let mut b = [0u8; 8];
    for (i, x) in b.iter_mut().enumerate() {
        *x = c.code.live[c.pc + 1 + i].get();
    }
    c.stack.push(u64::from_le_bytes(b));
    c.pc += 9;
    Ok(())
}

// ---- numeric ---------------------------------------------------------------

#[inline(always)]
fn i32_(v: u64) -> i32 {
    v as u32 as i32
}
#[inline(always)]
fn u32_(v: u64) -> u32 {
    v as u32
}
#[inline(always)]
fn i64_(v: u64) -> i64 {
    v as i64
}
#[inline(always)]
fn u64_(v: u64) -> u64 {
    v
}
#[inline(always)]
fn f32_(v: u64) -> f32 {
    f32::from_bits(v as u32)
}
#[inline(always)]
fn f64_(v: u64) -> f64 {
    f64::from_bits(v)
}
#[inline(always)]
fn from_i32(v: i32) -> u64 {
    u64::from(v as u32)
}
#[inline(always)]
fn from_u32(v: u32) -> u64 {
    u64::from(v)
}
#[inline(always)]
fn from_i64(v: i64) -> u64 {
    v as u64
}
#[inline(always)]
fn from_u64(v: u64) -> u64 {
    v
}
#[inline(always)]
fn from_f32(v: f32) -> u64 {
    u64::from(v.to_bits())
}
#[inline(always)]
fn from_f64(v: f64) -> u64 {
    v.to_bits()
}
#[inline(always)]
fn from_bool(v: bool) -> u64 {
    u64::from(v)
}

#[inline(always)]
fn un(c: &mut Core, f: impl FnOnce(u64) -> u64) -> R {
    let t = c.top();
    *t = f(*t);
    c.pc += 1;
    Ok(())
}

#[inline(always)]
fn un_t(c: &mut Core, f: impl FnOnce(u64) -> Result<u64, TrapKind>) -> R {
    let t = c.top();
    *t = f(*t).map_err(Break::Trap)?;
    c.pc += 1;
    Ok(())
}

#[inline(always)]
fn bin(c: &mut Core, f: impl FnOnce(u64, u64) -> u64) -> R {
    let b = c.pop();
    let a = c.top();
    *a = f(*a, b);
    c.pc += 1;
    Ok(())
}

#[inline(always)]
fn bin_t(c: &mut Core, f: impl FnOnce(u64, u64) -> Result<u64, TrapKind>) -> R {
    let b = c.pop();
    let a = c.top();
    *a = f(*a, b).map_err(Break::Trap)?;
    c.pc += 1;
    Ok(())
}

macro_rules! unop {
    ($($name:ident: $in:ident -> $out:ident, |$a:ident| $e:expr;)*) => {$(
        fn $name(c: &mut Core) -> R {
            un(c, |x| {
                let $a = $in(x);
                $out($e)
            })
        }
    )*};
}

macro_rules! unop_t {
    ($($name:ident: $in:ident -> $out:ident, |$a:ident| $e:expr;)*) => {$(
        fn $name(c: &mut Core) -> R {
            un_t(c, |x| {
                let $a = $in(x);
                ($e).map($out)
            })
        }
    )*};
}

macro_rules! binop {
    ($($name:ident: $in:ident -> $out:ident, |$a:ident, $b:ident| $e:expr;)*) => {$(
        fn $name(c: &mut Core) -> R {
            bin(c, |x, y| {
                let $a = $in(x);
                let $b = $in(y);
                $out($e)
            })
        }
    )*};
}

macro_rules! binop_t {
    ($($name:ident: $in:ident -> $out:ident, |$a:ident, $b:ident| $e:expr;)*) => {$(
        fn $name(c: &mut Core) -> R {
            bin_t(c, |x, y| {
                let $a = $in(x);
                let $b = $in(y);
                ($e).map($out)
            })
        }
    )*};
}

unop! {
    i32_eqz: u32_ -> from_bool, |a| a == 0;
    i64_eqz: u64_ -> from_bool, |a| a == 0;
    i32_clz: u32_ -> from_u32, |a| a.leading_zeros();
    i32_ctz: u32_ -> from_u32, |a| a.trailing_zeros();
    i32_popcnt: u32_ -> from_u32, |a| a.count_ones();
    i64_clz: u64_ -> from_u64, |a| u64::from(a.leading_zeros());
    i64_ctz: u64_ -> from_u64, |a| u64::from(a.trailing_zeros());
    i64_popcnt: u64_ -> from_u64, |a| u64::from(a.count_ones());

    f32_abs: f32_ -> from_f32, |a| f32::from_bits(a.to_bits() & 0x7fff_ffff);
    f32_neg: f32_ -> from_f32, |a| f32::from_bits(a.to_bits() ^ 0x8000_0000);
    f32_ceil: f32_ -> from_f32, |a| a.ceil();
    f32_floor: f32_ -> from_f32, |a| a.floor();
    f32_trunc: f32_ -> from_f32, |a| a.trunc();
    f32_nearest: f32_ -> from_f32, |a| a.round_ties_even();
    f32_sqrt: f32_ -> from_f32, |a| a.sqrt();
    f64_abs: f64_ -> from_f64, |a| f64::from_bits(a.to_bits() & 0x7fff_ffff_ffff_ffff);
    f64_neg: f64_ -> from_f64, |a| f64::from_bits(a.to_bits() ^ 0x8000_0000_0000_0000);
    f64_ceil: f64_ -> from_f64, |a| a.ceil();
    f64_floor: f64_ -> from_f64, |a| a.floor();
    f64_trunc: f64_ -> from_f64, |a| a.trunc();
    f64_nearest: f64_ -> from_f64, |a| a.round_ties_even();
    f64_sqrt: f64_ -> from_f64, |a| a.sqrt();

    i32_wrap_i64: u64_ -> from_u32, |a| a as u32;
    i64_extend_i32_s: i32_ -> from_i64, |a| i64::from(a);
    i64_extend_i32_u: u32_ -> from_u64, |a| u64::from(a);
    f32_convert_i32_s: i32_ -> from_f32, |a| a as f32;
    f32_convert_i32_u: u32_ -> from_f32, |a| a as f32;
    f32_convert_i64_s: i64_ -> from_f32, |a| a as f32;
    f32_convert_i64_u: u64_ -> from_f32, |a| a as f32;
    f32_demote_f64: f64_ -> from_f32, |a| a as f32;
    f64_convert_i32_s: i32_ -> from_f64, |a| f64::from(a);
    f64_convert_i32_u: u32_ -> from_f64, |a| f64::from(a);
    f64_convert_i64_s: i64_ -> from_f64, |a| a as f64;
    f64_convert_i64_u: u64_ -> from_f64, |a| a as f64;
    f64_promote_f32: f32_ -> from_f64, |a| f64::from(a);
}

/// Float-to-integer truncation; the bounds are the exclusive limits of the
/// target range, checked in f64 (exact for every f32 input).
fn trunc(x: f64, lo: f64, hi: f64) -> Result<f64, TrapKind> {
    if x.is_nan() {
        Err(TrapKind::InvalidConversion)
    } else if x <= lo || x >= hi {
        Err(TrapKind::IntegerOverflow)
    } else {
        Ok(x.trunc())
    }
}

const I32_LO: f64 = -2_147_483_649.0;
const I32_HI: f64 = 2_147_483_648.0;
const U32_HI: f64 = 4_294_967_296.0;
const I64_HI: f64 = 9_223_372_036_854_775_808.0;
const U64_HI: f64 = 18_446_744_073_709_551_616.0;

fn trunc_i64_s(x: f64) -> Result<i64, TrapKind> {
    // -2^63 itself is representable; the next f64 below it is not.
    if x.is_nan() {
        Err(TrapKind::InvalidConversion)
    } else if x < -I64_HI || x >= I64_HI {
        Err(TrapKind::IntegerOverflow)
    } else {
        Ok(x as i64)
    }
}

unop_t! {
    i32_trunc_f32_s: f32_ -> from_i32, |a| trunc(f64::from(a), I32_LO, I32_HI).map(|v| v as i32);
    i32_trunc_f32_u: f32_ -> from_u32, |a| trunc(f64::from(a), -1.0, U32_HI).map(|v| v as u32);
    i32_trunc_f64_s: f64_ -> from_i32, |a| trunc(a, I32_LO, I32_HI).map(|v| v as i32);
    i32_trunc_f64_u: f64_ -> from_u32, |a| trunc(a, -1.0, U32_HI).map(|v| v as u32);
    i64_trunc_f32_s: f32_ -> from_i64, |a| trunc_i64_s(f64::from(a));
    i64_trunc_f32_u: f32_ -> from_u64, |a| trunc(f64::from(a), -1.0, U64_HI).map(|v| v as u64);
    i64_trunc_f64_s: f64_ -> from_i64, |a| trunc_i64_s(a);
    i64_trunc_f64_u: f64_ -> from_u64, |a| trunc(a, -1.0, U64_HI).map(|v| v as u64);
}

fn fmin32(a: f32, b: f32) -> f32 {
    if a.is_nan() || b.is_nan() {
        f32::NAN
    } else if a == b {
        f32::from_bits(a.to_bits() | b.to_bits())
    } else {
        a.min(b)
    }
}

fn fmax32(a: f32, b: f32) -> f32 {
    if a.is_nan() || b.is_nan() {
        f32::NAN
    } else if a == b {
        f32::from_bits(a.to_bits() & b.to_bits())
    } else {
        a.max(b)
    }
}

fn fmin64(a: f64, b: f64) -> f64 {
    if a.is_nan() || b.is_nan() {
        f64::NAN
    } else if a == b {
        f64::from_bits(a.to_bits() | b.to_bits())
    } else {
        a.min(b)
    }
}

fn fmax64(a: f64, b: f64) -> f64 {
    if a.is_nan() || b.is_nan() {
        f64::NAN
    } else if a == b {
        f64::from_bits(a.to_bits() & b.to_bits())
    } else {
        a.max(b)
    }
}

binop! {
    i32_eq: u32_ -> from_bool, |a, b| a == b;
    i32_ne: u32_ -> from_bool, |a, b| a != b;
    i32_lt_s: i32_ -> from_bool, |a, b| a < b;
    i32_lt_u: u32_ -> from_bool, |a, b| a < b;
    i32_gt_s: i32_ -> from_bool, |a, b| a > b;
    i32_gt_u: u32_ -> from_bool, |a, b| a > b;
    i32_le_s: i32_ -> from_bool, |a, b| a <= b;
    i32_le_u: u32_ -> from_bool, |a, b| a <= b;
    i32_ge_s: i32_ -> from_bool, |a, b| a >= b;
    i32_ge_u: u32_ -> from_bool, |a, b| a >= b;
    i64_eq: u64_ -> from_bool, |a, b| a == b;
    i64_ne: u64_ -> from_bool, |a, b| a != b;
    i64_lt_s: i64_ -> from_bool, |a, b| a < b;
    i64_lt_u: u64_ -> from_bool, |a, b| a < b;
    i64_gt_s: i64_ -> from_bool, |a, b| a > b;
    i64_gt_u: u64_ -> from_bool, |a, b| a > b;
    i64_le_s: i64_ -> from_bool, |a, b| a <= b;
    i64_le_u: u64_ -> from_bool, |a, b| a <= b;
    i64_ge_s: i64_ -> from_bool, |a, b| a >= b;
    i64_ge_u: u64_ -> from_bool, |a, b| a >= b;
    f32_eq: f32_ -> from_bool, |a, b| a == b;
    f32_ne: f32_ -> from_bool, |a, b| a != b;
    f32_lt: f32_ -> from_bool, |a, b| a < b;
    f32_gt: f32_ -> from_bool, |a, b| a > b;
    f32_le: f32_ -> from_bool, |a, b| a <= b;
    f32_ge: f32_ -> from_bool, |a, b| a >= b;
    f64_eq: f64_ -> from_bool, |a, b| a == b;
    f64_ne: f64_ -> from_bool, |a, b| a != b;
    f64_lt: f64_ -> from_bool, |a, b| a < b;
    f64_gt: f64_ -> from_bool, |a, b| a > b;
    f64_le: f64_ -> from_bool, |a, b| a <= b;
    f64_ge: f64_ -> from_bool, |a, b| a >= b;

    i32_add: u32_ -> from_u32, |a, b| a.wrapping_add(b);
    i32_sub: u32_ -> from_u32, |a, b| a.wrapping_sub(b);
    i32_mul: u32_ -> from_u32, |a, b| a.wrapping_mul(b);
    i32_and: u32_ -> from_u32, |a, b| a & b;
    i32_or: u32_ -> from_u32, |a, b| a | b;
    i32_xor: u32_ -> from_u32, |a, b| a ^ b;
    i32_shl: u32_ -> from_u32, |a, b| a.wrapping_shl(b);
    i32_shr_s: i32_ -> from_i32, |a, b| a.wrapping_shr(b as u32);
    i32_shr_u: u32_ -> from_u32, |a, b| a.wrapping_shr(b);
    i32_rotl: u32_ -> from_u32, |a, b| a.rotate_left(b % 32);
    i32_rotr: u32_ -> from_u32, |a, b| a.rotate_right(b % 32);
    i64_add: u64_ -> from_u64, |a, b| a.wrapping_add(b);
    i64_sub: u64_ -> from_u64, |a, b| a.wrapping_sub(b);
    i64_mul: u64_ -> from_u64, |a, b| a.wrapping_mul(b);
    i64_and: u64_ -> from_u64, |a, b| a & b;
    i64_or: u64_ -> from_u64, |a, b| a | b;
    i64_xor: u64_ -> from_u64, |a, b| a ^ b;
    i64_shl: u64_ -> from_u64, |a, b| a.wrapping_shl(b as u32);
    i64_shr_s: i64_ -> from_i64, |a, b| a.wrapping_shr(b as u32);
    i64_shr_u: u64_ -> from_u64, |a, b| a.wrapping_shr(b as u32);
    i64_rotl: u64_ -> from_u64, |a, b| a.rotate_left((b % 64) as u32);
    i64_rotr: u64_ -> from_u64, |a, b| a.rotate_right((b % 64) as u32);

    f32_add: f32_ -> from_f32, |a, b| a + b;
    f32_sub: f32_ -> from_f32, |a, b| a - b;
    f32_mul: f32_ -> from_f32, |a, b| a * b;
    f32_div: f32_ -> from_f32, |a, b| a / b;
    f32_min: f32_ -> from_f32, |a, b| fmin32(a, b);
    f32_max: f32_ -> from_f32, |a, b| fmax32(a, b);
    f32_copysign: f32_ -> from_f32, |a, b| a.copysign(b);
    f64_add: f64_ -> from_f64, |a, b| a + b;
    f64_sub: f64_ -> from_f64, |a, b| a - b;
    f64_mul: f64_ -> from_f64, |a, b| a * b;
    f64_div: f64_ -> from_f64, |a, b| a / b;
    f64_min: f64_ -> from_f64, |a, b| fmin64(a, b);
    f64_max: f64_ -> from_f64, |a, b| fmax64(a, b);
    f64_copysign: f64_ -> from_f64, |a, b| a.copysign(b);
}

binop_t! {
    i32_div_s: i32_ -> from_i32, |a, b| match (a, b) {
        (_, 0) => Err(TrapKind::DivideByZero),
        (i32::MIN, -1) => Err(TrapKind::IntegerOverflow),
        _ => Ok(a / b),
    };
    i32_div_u: u32_ -> from_u32, |a, b| a.checked_div(b).ok_or(TrapKind::DivideByZero);
    i32_rem_s: i32_ -> from_i32, |a, b| if b == 0 {
        Err(TrapKind::DivideByZero)
    } else {
        Ok(a.wrapping_rem(b))
    };
    i32_rem_u: u32_ -> from_u32, |a, b| a.checked_rem(b).ok_or(TrapKind::DivideByZero);
    i64_div_s: i64_ -> from_i64, |a, b| match (a, b) {
        (_, 0) => Err(TrapKind::DivideByZero),
        (i64::MIN, -1) => Err(TrapKind::IntegerOverflow),
        _ => Ok(a / b),
    };
    i64_div_u: u64_ -> from_u64, |a, b| a.checked_div(b).ok_or(TrapKind::DivideByZero);
    i64_rem_s: i64_ -> from_i64, |a, b| if b == 0 {
        Err(TrapKind::DivideByZero)
    } else {
        Ok(a.wrapping_rem(b))
    };
    i64_rem_u: u64_ -> from_u64, |a, b| a.checked_rem(b).ok_or(TrapKind::DivideByZero);
}

const fn build_normal() -> [Handler; 256] {
    let mut t = [illegal as Handler; 256];
    t[0x00] = unreachable;
    t[0x01] = nop;
    t[0x02] = enter_block;
    t[0x03] = enter_block;
    t[0x04] = if_;
    t[0x05] = else_;
    t[0x0b] = end;
    t[0x0c] = br;
    t[0x0d] = br_if;
    t[0x0e] = br_table;
    t[0x0f] = return_;
    t[0x10] = call;
    t[0x11] = call_indirect;
    t[0x1a] = drop_;
    t[0x1b] = select;
    t[0x20] = local_get;
    t[0x21] = local_set;
    t[0x22] = local_tee;
    t[0x23] = global_get;
    t[0x24] = global_set;

    t[0x28] = i32_load;
    t[0x29] = i64_load;
    t[0x2a] = i32_load;
    t[0x2b] = i64_load;
    t[0x2c] = i32_load8_s;
    t[0x2d] = load1_u;
    t[0x2e] = i32_load16_s;
    t[0x2f] = load2_u;
    t[0x30] = i64_load8_s;
    t[0x31] = load1_u;
    t[0x32] = i64_load16_s;
    t[0x33] = load2_u;
    t[0x34] = i64_load32_s;
    t[0x35] = load4_u;
    t[0x36] = store4;
    t[0x37] = store8;
    t[0x38] = store4;
    t[0x39] = store8;
    t[0x3a] = store1;
    t[0x3b] = store2;
    t[0x3c] = store1;
    t[0x3d] = store2;
    t[0x3e] = store4;
    t[0x3f] = memory_size;
    t[0x40] = memory_grow;
    t[0x41] = i32_const;
    t[0x42] = i64_const;
    t[0x43] = f32_const;
    t[0x44] = f64_const;

    t[0x45] = i32_eqz;
    t[0x46] = i32_eq;
    t[0x47] = i32_ne;
    t[0x48] = i32_lt_s;
    t[0x49] = i32_lt_u;
    t[0x4a] = i32_gt_s;
    t[0x4b] = i32_gt_u;
    t[0x4c] = i32_le_s;
    t[0x4d] = i32_le_u;
    t[0x4e] = i32_ge_s;
    t[0x4f] = i32_ge_u;
    t[0x50] = i64_eqz;
    t[0x51] = i64_eq;
    t[0x52] = i64_ne;
    t[0x53] = i64_lt_s;
    t[0x54] = i64_lt_u;
    t[0x55] = i64_gt_s;
    t[0x56] = i64_gt_u;
    t[0x57] = i64_le_s;
    t[0x58] = i64_le_u;
    t[0x59] = i64_ge_s;
    t[0x5a] = i64_ge_u;
    t[0x5b] = f32_eq;
    t[0x5c] = f32_ne;
    t[0x5d] = f32_lt;
    t[0x5e] = f32_gt;
    t[0x5f] = f32_le;
    t[0x60] = f32_ge;
    t[0x61] = f64_eq;
    t[0x62] = f64_ne;
    t[0x63] = f64_lt;
    t[0x64] = f64_gt;
    t[0x65] = f64_le;
    t[0x66] = f64_ge;

    t[0x67] = i32_clz;
    t[0x68] = i32_ctz;
    t[0x69] = i32_popcnt;
    t[0x6a] = i32_add;
    t[0x6b] = i32_sub;
    t[0x6c] = i32_mul;
    t[0x6d] = i32_div_s;
    t[0x6e] = i32_div_u;
    t[0x6f] = i32_rem_s;
    t[0x70] = i32_rem_u;
    t[0x71] = i32_and;
    t[0x72] = i32_or;
    t[0x73] = i32_xor;
    t[0x74] = i32_shl;
    t[0x75] = i32_shr_s;
    t[0x76] = i32_shr_u;
    t[0x77] = i32_rotl;
    t[0x78] = i32_rotr;
    t[0x79] = i64_clz;
    t[0x7a] = i64_ctz;
    t[0x7b] = i64_popcnt;
    t[0x7c] = i64_add;
    t[0x7d] = i64_sub;
    t[0x7e] = i64_mul;
    t[0x7f] = i64_div_s;
    t[0x80] = i64_div_u;
    t[0x81] = i64_rem_s;
    t[0x82] = i64_rem_u;
    t[0x83] = i64_and;
    t[0x84] = i64_or;
    t[0x85] = i64_xor;
    t[0x86] = i64_shl;
    t[0x87] = i64_shr_s;
    t[0x88] = i64_shr_u;
    t[0x89] = i64_rotl;
    t[0x8a] = i64_rotr;

    t[0x8b] = f32_abs;
    t[0x8c] = f32_neg;
    t[0x8d] = f32_ceil;
    t[0x8e] = f32_floor;
    t[0x8f] = f32_trunc;
    t[0x90] = f32_nearest;
    t[0x91] = f32_sqrt;
    t[0x92] = f32_add;
    t[0x93] = f32_sub;
    t[0x94] = f32_mul;
    t[0x95] = f32_div;
    t[0x96] = f32_min;
    t[0x97] = f32_max;
    t[0x98] = f32_copysign;
    t[0x99] = f64_abs;
    t[0x9a] = f64_neg;
    t[0x9b] = f64_ceil;
    t[0x9c] = f64_floor;
    t[0x9d] = f64_trunc;
    t[0x9e] = f64_nearest;
    t[0x9f] = f64_sqrt;
    t[0xa0] = f64_add;
    t[0xa1] = f64_sub;
    t[0xa2] = f64_mul;
    t[0xa3] = f64_div;
    t[0xa4] = f64_min;
    t[0xa5] = f64_max;
    t[0xa6] = f64_copysign;

    t[0xa7] = i32_wrap_i64;
    t[0xa8] = i32_trunc_f32_s;
    t[0xa9] = i32_trunc_f32_u;
    t[0xaa] = i32_trunc_f64_s;
    t[0xab] = i32_trunc_f64_u;
    t[0xac] = i64_extend_i32_s;
    t[0xad] = i64_extend_i32_u;
    t[0xae] = i64_trunc_f32_s;
    t[0xaf] = i64_trunc_f32_u;
    t[0xb0] = i64_trunc_f64_s;
    t[0xb1] = i64_trunc_f64_u;
    t[0xb2] = f32_convert_i32_s;
    t[0xb3] = f32_convert_i32_u;
    t[0xb4] = f32_convert_i64_s;
    t[0xb5] = f32_convert_i64_u;
    t[0xb6] = f32_demote_f64;
    t[0xb7] = f64_convert_i32_s;
    t[0xb8] = f64_convert_i32_u;
    t[0xb9] = f64_convert_i64_s;
    t[0xba] = f64_convert_i64_u;
    t[0xbb] = f64_promote_f32;
    // Reinterpretations leave the slot bits unchanged.
    t[0xbc] = nop;
    t[0xbd] = nop;
    t[0xbe] = nop;
    t[0xbf] = nop;

    t[0xff] = local_probe;
    t
}
