//! Host function imports.

use std::cell::RefCell;
use std::collections::HashMap;
use std::io::Write;
use std::rc::Rc;
use std::time::Instant;

use crate::types::{FuncType, Value, ValueType};

pub type HostFn = dyn Fn(&[Value]) -> Result<Vec<Value>, String>;

#[derive(Clone)]
pub struct HostFunc {
    pub ty: FuncType,
    pub(crate) f: Rc<HostFn>,
}

impl std::fmt::Debug for HostFunc {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "HostFunc({})", self.ty)
    }
}

/// Named host functions offered to a module at instantiation.
#[derive(Clone, Default)]
pub struct Imports {
    funcs: HashMap<(String, String), HostFunc>,
}

impl Imports {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn define(
        &mut self,
        module: &str,
        name: &str,
        ty: FuncType,
        f: impl Fn(&[Value]) -> Result<Vec<Value>, String> + 'static,
    ) -> &mut Self {
        self.funcs.insert(
            (module.to_owned(), name.to_owned()),
            HostFunc { ty, f: Rc::new(f) },
        );
        self
    }

    pub(crate) fn get(&self, module: &str, name: &str) -> Option<&HostFunc> {
        self.funcs.get(&(module.to_owned(), name.to_owned()))
    }

    /// The built-in `env` import set: `print_i32`, `print_ln` and `now_us`.
    ///
    /// Printed text goes to `out`.
    pub fn env(out: impl Write + 'static) -> Self {
        let out: Rc<RefCell<dyn Write>> = Rc::new(RefCell::new(out));
        let mut imports = Imports::new();
        let o = out.clone();
        imports.define(
            "env",
            "print_i32",
            FuncType {
                params: vec![ValueType::I32],
                results: vec![],
            },
            move |args| {
                let v = args[0].as_i32().unwrap_or_default();
                write!(o.borrow_mut(), "{v}").map_err(|e| e.to_string())?;
                Ok(vec![])
            },
        );
        let o = out;
        imports.define("env", "print_ln", FuncType::default(), move |_| {
            let mut w = o.borrow_mut();
            writeln!(w).map_err(|e| e.to_string())?;
            w.flush().map_err(|e| e.to_string())?;
            Ok(vec![])
        });
        let epoch = Instant::now();
        imports.define(
            "env",
            "now_us",
            FuncType {
                params: vec![],
                results: vec![ValueType::I64],
            },
            move |_| Ok(vec![Value::I64(epoch.elapsed().as_micros() as i64)]),
        );
        imports
    }
}

/// A cloneable in-memory sink, handy for capturing program output.
#[derive(Clone, Default, Debug)]
pub struct OutputBuffer(Rc<RefCell<Vec<u8>>>);

impl OutputBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn contents(&self) -> String {
        String::from_utf8_lossy(&self.0.borrow()).into_owned()
    }

    pub fn take(&self) -> Vec<u8> {
        std::mem::take(&mut self.0.borrow_mut())
    }
}

impl Write for OutputBuffer {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        self.0.borrow_mut().extend_from_slice(buf);
        Ok(buf.len())
    }

    fn flush(&mut self) -> std::io::Result<()> {
        Ok(())
    }
}
