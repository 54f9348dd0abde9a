use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde_json::{json, Map, Value as Json};

use crate::error::{Error, Fault};
use crate::state::{State, Value};

pub const FRAME_PROTOCOL: &str = "frame/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FieldType {
    String,
    Int,
    Double,
    Bool,
    Any,
}

impl FieldType {
    fn parse(s: &str) -> Result<Self, Error> {
        Ok(match s {
            "string" => FieldType::String,
            "int" => FieldType::Int,
            "double" => FieldType::Double,
            "bool" => FieldType::Bool,
            "any" => FieldType::Any,
            other => return Err(Error::Parse(format!("unknown field type {other:?}"))),
        })
    }

    fn as_str(self) -> &'static str {
        match self {
            FieldType::String => "string",
            FieldType::Int => "int",
            FieldType::Double => "double",
            FieldType::Bool => "bool",
            FieldType::Any => "any",
        }
    }

    fn admits(self, v: &Value) -> bool {
        matches!(
            (self, v),
            (FieldType::Any, _)
                | (FieldType::String, Value::Str(_))
                | (FieldType::Int, Value::Int(_))
                | (FieldType::Double, Value::Double(_))
                | (FieldType::Bool, Value::Bool(_))
        )
    }
}

/// Declared payload fields. Fields typed `any` are optional; undeclared
/// fields are allowed.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct MessageType {
    pub fields: BTreeMap<String, FieldType>,
}

impl MessageType {
    pub fn conforms(&self, payload: &State) -> bool {
        self.fields.iter().all(|(name, ty)| match payload.lookup(name) {
            Some(v) => ty.admits(v),
            None => *ty == FieldType::Any,
        })
    }

    pub fn check(&self, payload: &State) -> Result<(), Fault> {
        if self.conforms(payload) {
            Ok(())
        } else {
            Err(Fault::type_fault())
        }
    }

    fn from_json(v: Option<&Json>) -> Result<Self, Error> {
        let Some(v) = v else { return Ok(Self::default()) };
        let obj = v
            .as_object()
            .ok_or_else(|| Error::Parse(format!("message type must be an object, got {v}")))?;
        let fields = obj
            .iter()
            .map(|(k, t)| {
                let t = t
                    .as_str()
                    .ok_or_else(|| Error::Parse(format!("type of {k:?} must be a string")))?;
                Ok((k.clone(), FieldType::parse(t)?))
            })
            .collect::<Result<_, Error>>()?;
        Ok(MessageType { fields })
    }

    fn to_json(&self) -> Json {
        Json::Object(
            self.fields
                .iter()
                .map(|(k, t)| (k.clone(), Json::String(t.as_str().into())))
                .collect(),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OperationKind {
    OneWay,
    RequestResponse,
    Notification,
    SolicitResponse,
}

impl OperationKind {
    pub fn is_input(self) -> bool {
        matches!(self, OperationKind::OneWay | OperationKind::RequestResponse)
    }

    pub fn has_response(self) -> bool {
        matches!(self, OperationKind::RequestResponse | OperationKind::SolicitResponse)
    }

    fn as_str(self) -> &'static str {
        match self {
            OperationKind::OneWay => "OneWay",
            OperationKind::RequestResponse => "RequestResponse",
            OperationKind::Notification => "Notification",
            OperationKind::SolicitResponse => "SolicitResponse",
        }
    }
}

impl FromStr for OperationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        Ok(match s {
            "OneWay" => OperationKind::OneWay,
            "RequestResponse" => OperationKind::RequestResponse,
            "Notification" => OperationKind::Notification,
            "SolicitResponse" => OperationKind::SolicitResponse,
            other => return Err(Error::Parse(format!("unknown operation kind {other:?}"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct OperationDecl {
    pub name: String,
    pub kind: OperationKind,
    pub request: MessageType,
    pub response: MessageType,
}

impl OperationDecl {
    pub fn new(name: impl Into<String>, kind: OperationKind) -> Self {
        OperationDecl {
            name: name.into(),
            kind,
            request: MessageType::default(),
            response: MessageType::default(),
        }
    }

    pub fn from_json(v: &Json) -> Result<Self, Error> {
        let obj = v
            .as_object()
            .ok_or_else(|| Error::Parse(format!("operation declaration must be an object, got {v}")))?;
        for k in obj.keys() {
            if !matches!(k.as_str(), "name" | "kind" | "request" | "response") {
                return Err(Error::Parse(format!("operation declaration has unknown key {k:?}")));
            }
        }
        let name = obj
            .get("name")
            .and_then(Json::as_str)
            .ok_or_else(|| Error::Parse("operation declaration needs a name".into()))?;
        let kind: OperationKind = obj
            .get("kind")
            .and_then(Json::as_str)
            .ok_or_else(|| Error::Parse(format!("operation {name:?} needs a kind")))?
            .parse()?;
        let response = MessageType::from_json(obj.get("response"))?;
        if !kind.has_response() && !response.fields.is_empty() {
            return Err(Error::Validation(format!("{} operation {name:?} cannot declare a response", kind.as_str())));
        }
        Ok(OperationDecl {
            name: name.to_owned(),
            kind,
            request: MessageType::from_json(obj.get("request"))?,
            response,
        })
    }

    pub fn to_json(&self) -> Json {
        let mut o = Map::new();
        o.insert("name".into(), json!(self.name));
        o.insert("kind".into(), json!(self.kind.as_str()));
        o.insert("request".into(), self.request.to_json());
        if self.kind.has_response() {
            o.insert("response".into(), self.response.to_json());
        }
        Json::Object(o)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Interface {
    pub operations: BTreeMap<String, OperationDecl>,
}

impl Interface {
    pub fn new(decls: impl IntoIterator<Item = OperationDecl>) -> Result<Self, Error> {
        let mut operations = BTreeMap::new();
        for d in decls {
            if operations.contains_key(&d.name) {
                return Err(Error::Validation(format!("operation {:?} declared twice", d.name)));
            }
            operations.insert(d.name.clone(), d);
        }
        Ok(Interface { operations })
    }

    pub fn get(&self, op: &str) -> Option<&OperationDecl> {
        self.operations.get(op)
    }

    pub fn contains(&self, op: &str) -> bool {
        self.operations.contains_key(op)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.operations.keys().map(String::as_str)
    }

    /// The sub-interface made of the named operations.
    pub fn restrict<'a>(&self, names: impl IntoIterator<Item = &'a str>) -> Result<Interface, Error> {
        let mut operations = BTreeMap::new();
        for n in names {
            let d = self
                .get(n)
                .ok_or_else(|| Error::Validation(format!("operation {n:?} is not declared")))?;
            operations.insert(n.to_owned(), d.clone());
        }
        Ok(Interface { operations })
    }

    pub fn from_json(v: &Json) -> Result<Self, Error> {
        let list = v
            .as_array()
            .ok_or_else(|| Error::Parse(format!("interface must be a list, got {v}")))?;
        Interface::new(list.iter().map(OperationDecl::from_json).collect::<Result<Vec<_>, _>>()?)
    }

    pub fn to_json(&self) -> Json {
        Json::Array(self.operations.values().map(OperationDecl::to_json).collect())
    }
}

/// A network endpoint: `socket://host:port` or `local://name`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Location {
    Socket { host: String, port: u16 },
    Local(String),
}

impl Location {
    pub fn is_local(&self) -> bool {
        matches!(self, Location::Local(_))
    }
}

impl FromStr for Location {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        if let Some(rest) = s.strip_prefix("socket://") {
            let (host, port) = rest
                .rsplit_once(':')
                .ok_or_else(|| Error::Parse(format!("socket location {s:?} needs host:port")))?;
            let port = port
                .parse()
                .map_err(|_| Error::Parse(format!("bad port in {s:?}")))?;
            if host.is_empty() {
                return Err(Error::Parse(format!("empty host in {s:?}")));
            }
            Ok(Location::Socket { host: host.to_owned(), port })
        } else if let Some(name) = s.strip_prefix("local://") {
            if name.is_empty() {
                return Err(Error::Parse("empty local location name".into()));
            }
            Ok(Location::Local(name.to_owned()))
        } else {
            Err(Error::Parse(format!("unknown location scheme in {s:?}")))
        }
    }
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Location::Socket { host, port } => write!(f, "socket://{host}:{port}"),
            Location::Local(n) => write!(f, "local://{n}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InputPort {
    pub name: String,
    pub location: Location,
    pub protocol: String,
    pub interface: Interface,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutputPort {
    pub name: String,
    pub location: Location,
    pub protocol: String,
    pub interface: Interface,
    /// Prepended to the resource of every request sent through this port.
    pub resource: Option<String>,
}
