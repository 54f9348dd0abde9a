//! Flat variable-to-value mappings and their algebra.
//!
//! A [`State`] is used for session local state, the engine's global state
//! and message payloads alike. Composition is left-biased: `a.compose(&b)`
//! keeps every binding of `a` and fills the remaining variables from `b`.

use std::collections::BTreeMap;
use std::fmt;
use std::hash::{Hash, Hasher};

use serde_json::{Map, Number};

use crate::error::Error;

/// A scalar value. Doubles compare by bit pattern so that equality stays an
/// equivalence relation (NaN equals itself, `0.0` and `-0.0` differ).
#[derive(Debug, Clone)]
pub enum Value {
    Str(String),
    Int(i64),
    Double(f64),
    Bool(bool),
}

impl PartialEq for Value {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Value::Str(a), Value::Str(b)) => a == b,
            (Value::Int(a), Value::Int(b)) => a == b,
            (Value::Double(a), Value::Double(b)) => a.to_bits() == b.to_bits(),
            (Value::Bool(a), Value::Bool(b)) => a == b,
            _ => false,
        }
    }
}

impl Eq for Value {}

impl Hash for Value {
    fn hash<H: Hasher>(&self, state: &mut H) {
        std::mem::discriminant(self).hash(state);
        match self {
            Value::Str(s) => s.hash(state),
            Value::Int(i) => i.hash(state),
            Value::Double(d) => d.to_bits().hash(state),
            Value::Bool(b) => b.hash(state),
        }
    }
}

impl Value {
    pub fn type_name(&self) -> &'static str {
        match self {
            Value::Str(_) => "string",
            Value::Int(_) => "int",
            Value::Double(_) => "double",
            Value::Bool(_) => "bool",
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Value::Str(s) => Some(s),
            _ => None,
        }
    }

    pub fn to_json(&self) -> Result<serde_json::Value, Error> {
        Ok(match self {
            Value::Str(s) => serde_json::Value::String(s.clone()),
            Value::Int(i) => serde_json::Value::Number((*i).into()),
            Value::Double(d) => serde_json::Value::Number(
                Number::from_f64(*d)
                    .ok_or_else(|| Error::Encode(format!("non-finite double {d}")))?,
            ),
            Value::Bool(b) => serde_json::Value::Bool(*b),
        })
    }

    /// Numbers without a fraction or exponent decode as integers, everything
    /// else numeric as a double.
    pub fn from_json(v: &serde_json::Value) -> Result<Value, Error> {
        match v {
            serde_json::Value::String(s) => Ok(Value::Str(s.clone())),
            serde_json::Value::Bool(b) => Ok(Value::Bool(*b)),
            serde_json::Value::Number(n) => {
                if let Some(i) = n.as_i64() {
                    Ok(Value::Int(i))
                } else if n.is_u64() {
                    Err(Error::Decode(format!("integer {n} out of range")))
                } else {
                    n.as_f64()
                        .map(Value::Double)
                        .ok_or_else(|| Error::Decode(format!("bad number {n}")))
                }
            }
            other => Err(Error::Decode(format!("not a flat value: {other}"))),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Str(s) => f.write_str(s),
            Value::Int(i) => write!(f, "{i}"),
            Value::Double(d) => write!(f, "{d:?}"),
            Value::Bool(b) => write!(f, "{b}"),
        }
    }
}

impl From<i64> for Value {
    fn from(v: i64) -> Self {
        Value::Int(v)
    }
}

impl From<f64> for Value {
    fn from(v: f64) -> Self {
        Value::Double(v)
    }
}

impl From<bool> for Value {
    fn from(v: bool) -> Self {
        Value::Bool(v)
    }
}

impl From<&str> for Value {
    fn from(v: &str) -> Self {
        Value::Str(v.to_owned())
    }
}

impl From<String> for Value {
    fn from(v: String) -> Self {
        Value::Str(v)
    }
}

/// A variable name: `[A-Za-z_][A-Za-z0-9_]*`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VarName(String);

impl VarName {
    pub fn new(name: impl Into<String>) -> Result<Self, Error> {
        let name = name.into();
        if Self::is_valid(&name) {
            Ok(VarName(name))
        } else {
            Err(Error::Validation(format!("invalid variable name {name:?}")))
        }
    }

    pub fn is_valid(name: &str) -> bool {
        let mut chars = name.chars();
        match chars.next() {
            Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
            _ => return false,
        }
        chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for VarName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::borrow::Borrow<str> for VarName {
    fn borrow(&self) -> &str {
        &self.0
    }
}

/// A finite partial map from variables to values.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct State {
    bindings: BTreeMap<VarName, Value>,
}

impl State {
    pub fn new() -> Self {
        Self::default()
    }

    /// `None` is the distinguished `undefined` result.
    pub fn lookup(&self, x: &str) -> Option<&Value> {
        self.bindings.get(x)
    }

    pub fn contains(&self, x: &str) -> bool {
        self.bindings.contains_key(x)
    }

    pub fn update(&self, x: VarName, v: Value) -> State {
        let mut next = self.clone();
        next.set(x, v);
        next
    }

    /// In-place form of [`State::update`].
    pub fn set(&mut self, x: VarName, v: Value) {
        self.bindings.insert(x, v);
    }

    pub fn remove(&mut self, x: &str) -> Option<Value> {
        self.bindings.remove(x)
    }

    /// Left-biased composition: `self` wins on shared variables.
    pub fn compose(&self, right: &State) -> State {
        let mut out = right.clone();
        for (k, v) in &self.bindings {
            out.bindings.insert(k.clone(), v.clone());
        }
        out
    }

    pub fn domain(&self) -> impl Iterator<Item = &VarName> {
        self.bindings.keys()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&VarName, &Value)> {
        self.bindings.iter()
    }

    pub fn len(&self) -> usize {
        self.bindings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bindings.is_empty()
    }

    /// Restriction of the state to the given variables.
    pub fn project<'a>(&self, vars: impl IntoIterator<Item = &'a VarName>) -> State {
        let mut out = State::new();
        for v in vars {
            if let Some(val) = self.bindings.get(v) {
                out.bindings.insert(v.clone(), val.clone());
            }
        }
        out
    }

    pub fn to_json(&self) -> Result<serde_json::Value, Error> {
        let mut map = Map::new();
        for (k, v) in &self.bindings {
            map.insert(k.0.clone(), v.to_json()?);
        }
        Ok(serde_json::Value::Object(map))
    }

    pub fn from_json(v: &serde_json::Value) -> Result<State, Error> {
        let obj = v
            .as_object()
            .ok_or_else(|| Error::Decode(format!("state must be a JSON object, got {v}")))?;
        let mut out = State::new();
        for (k, v) in obj {
            let name = VarName::new(k.clone()).map_err(|e| Error::Decode(e.to_string()))?;
            out.set(name, Value::from_json(v)?);
        }
        Ok(out)
    }

    /// Compact JSON text, keys in sorted order.
    pub fn to_json_string(&self) -> Result<String, Error> {
        Ok(self.to_json()?.to_string())
    }
}

impl FromIterator<(VarName, Value)> for State {
    fn from_iter<T: IntoIterator<Item = (VarName, Value)>>(iter: T) -> Self {
        State {
            bindings: iter.into_iter().collect(),
        }
    }
}

/// Builds a state from literal pairs; panics on an invalid name.
#[macro_export]
macro_rules! state {
    () => { $crate::state::State::new() };
    ($($k:expr => $v:expr),+ $(,)?) => {{
        let mut s = $crate::state::State::new();
        $( s.set($crate::state::VarName::new($k).expect("variable name"), $crate::state::Value::from($v)); )+
        s
    }};
}
