//! The `frame/1` wire format: one compact JSON object per line.
//!
//! ```text
//! {"id":"1","type":"request","operation":"ping","resource":"","payload":{}}\n
//! ```
//!
//! Keys are always written in the order `id, type, operation, resource,
//! payload, fault`, `fault` only for fault frames. JSON string escaping
//! guarantees that the only LF byte is the terminator.

use serde_json::Value as Json;

use crate::error::Error;
use crate::state::State;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FrameType {
    Request,
    Response,
    Fault,
}

impl FrameType {
    fn as_str(self) -> &'static str {
        match self {
            FrameType::Request => "request",
            FrameType::Response => "response",
            FrameType::Fault => "fault",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Frame {
    pub id: String,
    pub kind: FrameType,
    pub operation: String,
    pub resource: String,
    pub payload: State,
    /// Present exactly when `kind` is [`FrameType::Fault`].
    pub fault: Option<String>,
}

impl Frame {
    pub fn request(id: impl Into<String>, operation: impl Into<String>, payload: State) -> Frame {
        Frame {
            id: id.into(),
            kind: FrameType::Request,
            operation: operation.into(),
            resource: String::new(),
            payload,
            fault: None,
        }
    }

    pub fn with_resource(mut self, resource: impl Into<String>) -> Frame {
        self.resource = resource.into();
        self
    }

    pub fn response(id: impl Into<String>, operation: impl Into<String>, payload: State) -> Frame {
        Frame {
            id: id.into(),
            kind: FrameType::Response,
            operation: operation.into(),
            resource: String::new(),
            payload,
            fault: None,
        }
    }

    pub fn fault(id: impl Into<String>, operation: impl Into<String>, fault: impl Into<String>) -> Frame {
        Frame {
            id: id.into(),
            kind: FrameType::Fault,
            operation: operation.into(),
            resource: String::new(),
            payload: State::new(),
            fault: Some(fault.into()),
        }
    }

    /// The answer this frame represents: the payload, or the carried fault.
    pub fn into_result(self) -> Result<State, crate::Fault> {
        match self.kind {
            FrameType::Fault => Err(crate::Fault::new(self.fault.unwrap_or_default())),
            _ => Ok(self.payload),
        }
    }
}

fn quote(s: &str) -> String {
    Json::String(s.to_owned()).to_string()
}

pub fn encode_frame(f: &Frame) -> Result<Vec<u8>, Error> {
    if (f.kind == FrameType::Fault) != f.fault.is_some() {
        return Err(Error::Encode("fault name present iff the frame is a fault frame".into()));
    }
    let mut out = String::with_capacity(96);
    out.push_str("{\"id\":");
    out.push_str(&quote(&f.id));
    out.push_str(",\"type\":\"");
    out.push_str(f.kind.as_str());
    out.push_str("\",\"operation\":");
    out.push_str(&quote(&f.operation));
    out.push_str(",\"resource\":");
    out.push_str(&quote(&f.resource));
    out.push_str(",\"payload\":");
    out.push_str(&f.payload.to_json_string()?);
    if let Some(fault) = &f.fault {
        out.push_str(",\"fault\":");
        out.push_str(&quote(fault));
    }
    out.push_str("}\n");
    Ok(out.into_bytes())
}

/// Decodes one line; a trailing LF is accepted and stripped.
pub fn decode_frame(bytes: &[u8]) -> Result<Frame, Error> {
    let line = bytes.strip_suffix(b"\n").unwrap_or(bytes);
    if line.contains(&b'\n') {
        return Err(Error::Decode("frame spans more than one line".into()));
    }
    let doc: Json = serde_json::from_slice(line).map_err(|e| Error::Decode(e.to_string()))?;
    let obj = doc
        .as_object()
        .ok_or_else(|| Error::Decode("frame must be a JSON object".into()))?;
    for k in obj.keys() {
        if !matches!(k.as_str(), "id" | "type" | "operation" | "resource" | "payload" | "fault") {
            return Err(Error::Decode(format!("unknown frame key {k:?}")));
        }
    }
    let text = |k: &str| -> Result<String, Error> {
        obj.get(k)
            .ok_or_else(|| Error::Decode(format!("frame is missing {k:?}")))?
            .as_str()
            .map(str::to_owned)
            .ok_or_else(|| Error::Decode(format!("frame key {k:?} must be a string")))
    };
    let kind = match text("type")?.as_str() {
        "request" => FrameType::Request,
        "response" => FrameType::Response,
        "fault" => FrameType::Fault,
        other => return Err(Error::Decode(format!("unknown frame type {other:?}"))),
    };
    let payload = State::from_json(
        obj.get("payload")
            .ok_or_else(|| Error::Decode("frame is missing \"payload\"".into()))?,
    )?;
    let fault = match (kind, obj.contains_key("fault")) {
        (FrameType::Fault, true) => Some(text("fault")?),
        (FrameType::Fault, false) => return Err(Error::Decode("fault frame without a fault name".into())),
        (_, true) => return Err(Error::Decode("only fault frames carry \"fault\"".into())),
        (_, false) => None,
    };
    Ok(Frame {
        id: text("id")?,
        kind,
        operation: text("operation")?,
        resource: text("resource")?,
        payload,
        fault,
    })
}

/// Best-effort recovery of the `id` of an undecodable line.
pub fn salvage_id(bytes: &[u8]) -> String {
    serde_json::from_slice::<Json>(bytes.strip_suffix(b"\n").unwrap_or(bytes))
        .ok()
        .and_then(|d| d.get("id").and_then(Json::as_str).map(str::to_owned))
        .unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state;

    #[test]
    fn ping_is_bit_exact() {
        let bytes = encode_frame(&Frame::request("1", "ping", State::new())).unwrap();
        assert_eq!(
            bytes,
            b"{\"id\":\"1\",\"type\":\"request\",\"operation\":\"ping\",\"resource\":\"\",\"payload\":{}}\n"
        );
    }

    #[test]
    fn fault_key_comes_last() {
        let bytes = encode_frame(&Frame::fault("7", "div", "DivisionByZero")).unwrap();
        let text = String::from_utf8(bytes).unwrap();
        assert!(text.ends_with(",\"fault\":\"DivisionByZero\"}\n"), "{text}");
    }

    #[test]
    fn newlines_are_escaped() {
        let f = Frame::request("a\nb", "op", state!("s" => "x\ny", "d" => 2.0));
        let bytes = encode_frame(&f).unwrap();
        assert_eq!(bytes.iter().filter(|b| **b == b'\n').count(), 1);
        assert_eq!(decode_frame(&bytes).unwrap(), f);
    }

    #[test]
    fn decode_errors() {
        let cases: [&[u8]; 6] = [
            br#"{"id":"1","type":"request","resource":"","payload":{}}"#,
            br#"{"id":"1","type":"reply","operation":"x","resource":"","payload":{}}"#,
            br#"{"id":"1","type":"request","operation":"x","resource":"","payload":{},"extra":1}"#,
            br#"{"id":"1","type":"fault","operation":"x","resource":"","payload":{}}"#,
            br#"{"id":"1","type":"request","operation":"x","resource":"","payload":{},"fault":"F"}"#,
            b"not json",
        ];
        for c in cases {
            assert!(matches!(decode_frame(c), Err(Error::Decode(_))), "{}", String::from_utf8_lossy(c));
        }
    }

    #[test]
    fn salvage() {
        assert_eq!(salvage_id(br#"{"id":"9","type":"bogus"}"#), "9");
        assert_eq!(salvage_id(b"garbage"), "");
    }
}
