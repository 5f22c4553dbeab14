//! An embeddable WebAssembly MVP interpreter with probe-based
//! instrumentation.
//!
//! ```
//! use std::rc::Rc;
//! use wasmprobe::{CountProbe, Imports, Instance, Module};
//!
//! // (func (export "main") (result i32) i32.const 41 i32.const 1 i32.add)
//! let bytes = [
//!     0x00, 0x61, 0x73, 0x6d, 0x01, 0x00, 0x00, 0x00, 0x01, 0x05, 0x01, 0x60, 0x00, 0x01,
//!     0x7f, 0x03, 0x02, 0x01, 0x00, 0x07, 0x08, 0x01, 0x04, 0x6d, 0x61, 0x69, 0x6e, 0x00,
//!     0x00, 0x0a, 0x09, 0x01, 0x07, 0x00, 0x41, 0x29, 0x41, 0x01, 0x6a, 0x0b,
//! ];
//! let module = Rc::new(Module::load(&bytes).unwrap());
//! let mut instance = Instance::new(module.clone(), &Imports::new()).unwrap();
//! let counter = CountProbe::new();
//! let loc = module.location(0, 4); // the i32.add
//! instance.instrumentation_mut().insert_probe(loc, counter.clone().into()).unwrap();
//! let results = instance.invoke("main", &[]).unwrap();
//! assert_eq!(results, vec![wasmprobe::Value::I32(42)]);
//! assert_eq!(counter.count(), 1);
//! ```

pub mod bench;
pub mod disasm;
pub mod encode;
pub mod error;
pub mod exec;
pub mod instrument;
mod leb;
pub mod module;
pub mod monitors;
pub mod opcodes;
pub mod parser;
pub mod types;
pub mod validate;

pub use error::{
    AccessError, ExecError, InstrumentError, LinkError, LoadError, MonitorError, ParseError, Trap,
    TrapKind, ValidationError,
};
pub use exec::{DispatchMode, Imports, Instance, InstantiateError, OutputBuffer, StepOutcome};
pub use instrument::{
    accessors_allocated, CountProbe, FrameAccessor, FrameHost, GenericProbe, Instrumentation,
    OperandProbe, Probe, ProbeContext, ProbeKind, ProbeList,
};
pub use module::{FuncDecl, Module};
pub use types::{CodeLocation, FuncType, ModuleId, Value, ValueType};

impl Module {
    /// Decodes and validates a binary module.
    pub fn load(bytes: &[u8]) -> Result<Module, LoadError> {
        let mut m = parser::parse_module(bytes)?;
        validate::validate_module(&mut m)?;
        Ok(m)
    }
}
