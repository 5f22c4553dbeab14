use std::fmt;

use thiserror::Error;

use crate::types::{CodeLocation, ValueType};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("malformed binary at offset {offset}: {reason}")]
    Malformed { offset: usize, reason: String },
    #[error("unsupported feature: {0}")]
    UnsupportedFeature(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("validation error{}: {reason}", location.map(|l| format!(" at {l}")).unwrap_or_default())]
pub struct ValidationError {
    pub location: Option<CodeLocation>,
    pub reason: String,
}

/// Failure to load a module: decode or type-check.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LoadError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Validation(#[from] ValidationError),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LinkError {
    #[error("missing import {module}.{name}")]
    MissingImport { module: String, name: String },
    #[error("import {module}.{name} has signature {found}, expected {expected}")]
    SignatureMismatch {
        module: String,
        name: String,
        expected: String,
        found: String,
    },
    #[error("{0} segment does not fit")]
    SegmentOutOfBounds(&'static str),
    #[error("module has not been validated")]
    NotValidated,
    #[error("resource limit: {0}")]
    ResourceLimit(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TrapKind {
    Unreachable,
    DivideByZero,
    IntegerOverflow,
    InvalidConversion,
    OutOfBounds,
    UndefinedElement,
    IndirectCallMismatch,
    StackExhausted,
    /// A host function reported failure.
    Host,
}

impl TrapKind {
    pub fn name(self) -> &'static str {
        match self {
            TrapKind::Unreachable => "unreachable",
            TrapKind::DivideByZero => "divide-by-zero",
            TrapKind::IntegerOverflow => "integer-overflow",
            TrapKind::InvalidConversion => "invalid-conversion",
            TrapKind::OutOfBounds => "out-of-bounds",
            TrapKind::UndefinedElement => "undefined-element",
            TrapKind::IndirectCallMismatch => "indirect-call-mismatch",
            TrapKind::StackExhausted => "stack-exhausted",
            TrapKind::Host => "host",
        }
    }
}

impl fmt::Display for TrapKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Error)]
#[error("trap: {kind} at {location}")]
pub struct Trap {
    pub kind: TrapKind,
    pub location: CodeLocation,
}

/// Failure raised by monitor code running inside a probe.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("monitor error: {0}")]
pub struct MonitorError(pub String);

impl From<AccessError> for MonitorError {
    fn from(e: AccessError) -> Self {
        MonitorError(e.to_string())
    }
}

impl From<InstrumentError> for MonitorError {
    fn from(e: InstrumentError) -> Self {
        MonitorError(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExecError {
    #[error(transparent)]
    Trap(#[from] Trap),
    #[error("no exported function named {0:?}")]
    NoSuchExport(String),
    #[error("argument mismatch: expected {expected}, got {found}")]
    ArgumentMismatch { expected: String, found: String },
    #[error(transparent)]
    Monitor(#[from] MonitorError),
    #[error("an execution is already in progress")]
    Busy,
    #[error("no execution is suspended")]
    NotSuspended,
    #[error("stripped execution requires an instance without probes")]
    Instrumented,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InstrumentError {
    #[error("invalid location: {0}")]
    InvalidLocation(CodeLocation),
    #[error("probe already installed at {0}")]
    DuplicateInsert(String),
    #[error("probe not installed at {0}")]
    NotInstalled(String),
    #[error("instrumentation belongs to a different module or engine")]
    WrongContext,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AccessError {
    #[error("frame accessor refers to a frame that is no longer live")]
    StaleAccessor,
    #[error("index {index} out of range (size {len})")]
    IndexOutOfRange { index: u32, len: u32 },
    #[error("type mismatch: slot holds {expected}, got {found}")]
    TypeMismatch {
        expected: ValueType,
        found: ValueType,
    },
    #[error("frame accessor used with a different engine")]
    WrongContext,
}
