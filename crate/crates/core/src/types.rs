use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};

/// Numeric value types of the WebAssembly MVP.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ValueType {
    I32,
    I64,
    F32,
    F64,
}

impl ValueType {
    pub(crate) fn from_byte(b: u8) -> Option<ValueType> {
        match b {
            0x7f => Some(ValueType::I32),
            0x7e => Some(ValueType::I64),
            0x7d => Some(ValueType::F32),
            0x7c => Some(ValueType::F64),
            _ => None,
        }
    }

    pub(crate) fn to_byte(self) -> u8 {
        match self {
            ValueType::I32 => 0x7f,
            ValueType::I64 => 0x7e,
            ValueType::F32 => 0x7d,
            ValueType::F64 => 0x7c,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ValueType::I32 => "i32",
            ValueType::I64 => "i64",
            ValueType::F32 => "f32",
            ValueType::F64 => "f64",
        }
    }
}

impl fmt::Display for ValueType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A typed WebAssembly value.
///
/// Floats are carried as raw bits so that NaN payloads survive round trips
/// through the engine unchanged and equality is bitwise.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Value {
    I32(i32),
    I64(i64),
    F32(u32),
    F64(u64),
}

impl Value {
    pub fn f32(v: f32) -> Value {
        Value::F32(v.to_bits())
    }

    pub fn f64(v: f64) -> Value {
        Value::F64(v.to_bits())
    }

    pub fn ty(&self) -> ValueType {
        match self {
            Value::I32(_) => ValueType::I32,
            Value::I64(_) => ValueType::I64,
            Value::F32(_) => ValueType::F32,
            Value::F64(_) => ValueType::F64,
        }
    }

    pub fn default_for(ty: ValueType) -> Value {
        Value::from_bits(ty, 0)
    }

    /// Reinterprets an untyped stack slot.
    pub fn from_bits(ty: ValueType, bits: u64) -> Value {
        match ty {
            ValueType::I32 => Value::I32(bits as u32 as i32),
            ValueType::I64 => Value::I64(bits as i64),
            ValueType::F32 => Value::F32(bits as u32),
            ValueType::F64 => Value::F64(bits),
        }
    }

    /// The untyped stack-slot representation of this value.
    pub fn to_bits(self) -> u64 {
        match self {
            Value::I32(v) => u64::from(v as u32),
            Value::I64(v) => v as u64,
            Value::F32(v) => u64::from(v),
            Value::F64(v) => v,
        }
    }

    pub fn as_i32(&self) -> Option<i32> {
        match *self {
            Value::I32(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_i64(&self) -> Option<i64> {
        match *self {
            Value::I64(v) => Some(v),
            _ => None,
        }
    }
}

impl Value {
    /// Parses `i32:5`, `f64:-0.5` and so on, or a bare number read as
    /// `default_ty`. This is the inverse of the `Display` rendering.
    pub fn parse(text: &str, default_ty: ValueType) -> Result<Value, String> {
        let text = text.trim();
        let (ty, num) = match text.split_once(':') {
            Some(("i32", n)) => (ValueType::I32, n),
            Some(("i64", n)) => (ValueType::I64, n),
            Some(("f32", n)) => (ValueType::F32, n),
            Some(("f64", n)) => (ValueType::F64, n),
            Some((t, _)) => return Err(format!("unknown value type {t:?}")),
            None => (default_ty, text),
        };
        let bad = |e: &dyn fmt::Display| format!("invalid {ty} value {num:?}: {e}");
        Ok(match ty {
            ValueType::I32 => Value::I32(match num.parse::<i32>() {
                Ok(v) => v,
                Err(e) => num.parse::<u32>().map_err(|_| bad(&e))? as i32,
            }),
            ValueType::I64 => Value::I64(match num.parse::<i64>() {
                Ok(v) => v,
                Err(e) => num.parse::<u64>().map_err(|_| bad(&e))? as i64,
            }),
            ValueType::F32 => Value::f32(num.parse().map_err(|e| bad(&e))?),
            ValueType::F64 => Value::f64(num.parse().map_err(|e| bad(&e))?),
        })
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Value::I32(v) => write!(f, "i32:{v}"),
            Value::I64(v) => write!(f, "i64:{v}"),
            Value::F32(v) => write!(f, "f32:{}", f32::from_bits(v)),
            Value::F64(v) => write!(f, "f64:{}", f64::from_bits(v)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Default)]
pub struct FuncType {
    pub params: Vec<ValueType>,
    pub results: Vec<ValueType>,
}

impl fmt::Display for FuncType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let list = |v: &[ValueType]| v.iter().map(|t| t.name()).collect::<Vec<_>>().join(" ");
        write!(f, "[{}] -> [{}]", list(&self.params), list(&self.results))
    }
}

/// Opaque identity of a parsed module.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ModuleId(u64);

impl ModuleId {
    pub(crate) fn fresh() -> ModuleId {
        static NEXT: AtomicU64 = AtomicU64::new(1);
        ModuleId(NEXT.fetch_add(1, Ordering::Relaxed))
    }
}

/// Address of an instruction: module, function index (in the function index
/// space, imports included) and byte offset from the start of the body's
/// instruction sequence.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CodeLocation {
    pub module: ModuleId,
    pub func: u32,
    pub pc: u32,
}

impl CodeLocation {
    pub fn new(module: ModuleId, func: u32, pc: u32) -> Self {
        CodeLocation { module, func, pc }
    }
}

impl fmt::Display for CodeLocation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "func {} +{}", self.func, self.pc)
    }
}
