//! Wire format: newline-delimited JSON objects carried in WebSocket text
//! messages.
//!
//! * request  `{"id":u64,"method":text,"params":object}`
//! * response `{"id":u64,"result":object}` or
//!   `{"id":u64,"error":{"code":int,"message":text}}`
//! * event    `{"event":text,"params":object}`

use serde::{Deserialize, Serialize};
use serde_json::{json, Value as Json};
use wasmprobe::{Value, ValueType};

pub const VERSION: u32 = 1;

pub mod codes {
    pub const PARSE_ERROR: i64 = -32700;
    pub const INVALID_REQUEST: i64 = -32600;
    pub const METHOD_NOT_FOUND: i64 = -32601;
    pub const INVALID_PARAMS: i64 = -32602;
    pub const NOT_PAUSED: i64 = 1;
    pub const INVALID_LOCATION: i64 = 2;
    pub const BAD_VALUE: i64 = 3;
    pub const EXITED: i64 = 4;
    pub const NOT_FOUND: i64 = 5;
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct Request {
    pub id: u64,
    pub method: String,
    #[serde(default)]
    pub params: Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorObject {
    pub code: i64,
    pub message: String,
}

impl ErrorObject {
    pub fn new(code: i64, message: impl Into<String>) -> Self {
        ErrorObject {
            code,
            message: message.into(),
        }
    }

    pub fn not_paused() -> Self {
        ErrorObject::new(codes::NOT_PAUSED, "not paused")
    }

    pub fn invalid_location() -> Self {
        ErrorObject::new(codes::INVALID_LOCATION, "invalid location")
    }
}

/// Anything the server sends.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Outgoing {
    Result { id: Option<u64>, result: Json },
    Error { id: Option<u64>, error: ErrorObject },
    Event { event: String, params: Json },
}

impl Outgoing {
    pub fn reply(id: u64, r: Result<Json, ErrorObject>) -> Self {
        match r {
            Ok(result) => Outgoing::Result { id: Some(id), result },
            Err(error) => Outgoing::Error { id: Some(id), error },
        }
    }

    pub fn event(name: &str, params: Json) -> Self {
        Outgoing::Event {
            event: name.to_string(),
            params,
        }
    }

    pub fn hello() -> Self {
        Outgoing::event("hello", json!({ "version": VERSION }))
    }

    pub fn to_line(&self) -> String {
        let mut s = serde_json::to_string(self).expect("serializable");
        s.push('\n');
        s
    }
}

/// Parses one line. Failures come with the request id if it could be
/// recovered.
pub fn parse_request(line: &str) -> Result<Request, (Option<u64>, ErrorObject)> {
    let raw: Json = serde_json::from_str(line)
        .map_err(|e| (None, ErrorObject::new(codes::PARSE_ERROR, format!("parse error: {e}"))))?;
    let id = raw.get("id").and_then(Json::as_u64);
    let mut req: Request = serde_json::from_value(raw)
        .map_err(|e| (id, ErrorObject::new(codes::INVALID_REQUEST, format!("invalid request: {e}"))))?;
    if req.params.is_null() {
        req.params = json!({});
    }
    if !req.params.is_object() {
        return Err((id, ErrorObject::new(codes::INVALID_REQUEST, "params must be an object")));
    }
    Ok(req)
}

/// `{"type":"i32","value":"3"}`. Values are strings so that 64-bit
/// integers survive JavaScript clients.
pub fn value_json(v: Value) -> Json {
    let text = v.to_string();
    let (ty, val) = text.split_once(':').expect("typed display");
    json!({ "type": ty, "value": val })
}

/// Accepts `"7"`, `"i32:7"`, or a JSON number, typed after the slot.
pub fn parse_value(j: &Json, ty: ValueType) -> Result<Value, ErrorObject> {
    let text = match j {
        Json::String(s) => s.clone(),
        Json::Number(n) => n.to_string(),
        Json::Object(o) => match o.get("value") {
            Some(inner) => return parse_value(inner, ty),
            None => return Err(ErrorObject::new(codes::INVALID_PARAMS, "value object without \"value\"")),
        },
        _ => return Err(ErrorObject::new(codes::INVALID_PARAMS, "value must be a string or number")),
    };
    Value::parse(&text, ty).map_err(|e| ErrorObject::new(codes::BAD_VALUE, e))
}

pub fn param_u32(params: &Json, name: &str) -> Result<u32, ErrorObject> {
    params
        .get(name)
        .and_then(Json::as_u64)
        .and_then(|v| u32::try_from(v).ok())
        .ok_or_else(|| ErrorObject::new(codes::INVALID_PARAMS, format!("missing or invalid parameter {name:?}")))
}

pub fn param_u32_or(params: &Json, name: &str, default: u32) -> Result<u32, ErrorObject> {
    match params.get(name) {
        None | Some(Json::Null) => Ok(default),
        Some(_) => param_u32(params, name),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn requests_and_errors() {
        let r = parse_request(r#"{"id":3,"method":"step"}"#).unwrap();
        assert_eq!(r.id, 3);
        assert_eq!(r.params, json!({}));
        let (id, e) = parse_request("{nope").unwrap_err();
        assert_eq!((id, e.code), (None, codes::PARSE_ERROR));
        let (id, e) = parse_request(r#"{"id":4}"#).unwrap_err();
        assert_eq!((id, e.code), (Some(4), codes::INVALID_REQUEST));
        let (_, e) = parse_request(r#"{"id":4,"method":"x","params":[1]}"#).unwrap_err();
        assert_eq!(e.code, codes::INVALID_REQUEST);
    }

    #[test]
    fn message_shapes() {
        let ok = Outgoing::reply(1, Ok(json!({})));
        assert_eq!(ok.to_line(), "{\"id\":1,\"result\":{}}\n");
        let err = Outgoing::reply(2, Err(ErrorObject::not_paused()));
        assert_eq!(err.to_line(), "{\"id\":2,\"error\":{\"code\":1,\"message\":\"not paused\"}}\n");
        assert_eq!(Outgoing::hello().to_line(), "{\"event\":\"hello\",\"params\":{\"version\":1}}\n");
    }

    #[test]
    fn values() {
        assert_eq!(value_json(Value::I64(-5)), json!({"type":"i64","value":"-5"}));
        assert_eq!(parse_value(&json!(7), ValueType::I32).unwrap(), Value::I32(7));
        assert_eq!(parse_value(&json!("i32:7"), ValueType::I32).unwrap(), Value::I32(7));
        assert_eq!(parse_value(&json!({"type":"f64","value":"1.5"}), ValueType::F64).unwrap(), Value::f64(1.5));
        assert_eq!(parse_value(&json!("x"), ValueType::I32).unwrap_err().code, codes::BAD_VALUE);
        assert_eq!(parse_value(&json!(true), ValueType::I32).unwrap_err().code, codes::INVALID_PARAMS);
    }
}
