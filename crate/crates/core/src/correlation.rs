//! Correlation sets: which session an incoming message belongs to.
//!
//! Each input operation may declare a correlation function mapping message
//! fields to session variables. The correlation set is the union of all
//! declared targets. A message is routed to a session when every correlated
//! field either equals the session's variable or finds it still unbound.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value as Json;

use crate::behaviour::Message;
use crate::error::Error;
use crate::state::{State, VarName};

pub type SessionId = u64;

/// Message field → session variable, for one operation. Injective.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CorrelationFunction {
    map: BTreeMap<VarName, VarName>,
}

impl CorrelationFunction {
    pub fn new(pairs: impl IntoIterator<Item = (VarName, VarName)>) -> Result<Self, Error> {
        let map: BTreeMap<VarName, VarName> = pairs.into_iter().collect();
        let mut seen = BTreeSet::new();
        for target in map.values() {
            if !seen.insert(target) {
                return Err(Error::Validation(format!(
                    "correlation function maps two fields to {target}"
                )));
            }
        }
        Ok(CorrelationFunction { map })
    }

    pub fn get(&self, field: &str) -> Option<&VarName> {
        self.map.get(field)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&VarName, &VarName)> {
        self.map.iter()
    }

    pub fn codomain(&self) -> impl Iterator<Item = &VarName> {
        self.map.values()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CorrelationConfig {
    functions: BTreeMap<String, CorrelationFunction>,
    cset: BTreeSet<VarName>,
}

static EMPTY: std::sync::OnceLock<CorrelationFunction> = std::sync::OnceLock::new();

impl CorrelationConfig {
    pub fn new(functions: BTreeMap<String, CorrelationFunction>) -> Self {
        let cset = functions
            .values()
            .flat_map(|f| f.codomain().cloned())
            .collect();
        CorrelationConfig { functions, cset }
    }

    /// The union of every function's codomain.
    pub fn cset(&self) -> &BTreeSet<VarName> {
        &self.cset
    }

    /// The function for `op`; operations without one correlate vacuously.
    pub fn function(&self, op: &str) -> &CorrelationFunction {
        self.functions
            .get(op)
            .unwrap_or_else(|| EMPTY.get_or_init(CorrelationFunction::default))
    }

    pub fn operations(&self) -> impl Iterator<Item = &str> {
        self.functions.keys().map(String::as_str)
    }

    pub fn correlates(&self, m: &Message, s: &State) -> bool {
        correlates(m, self.function(&m.operation), &self.cset, s)
    }

    pub fn bind(&self, m: &Message, s: &State) -> State {
        bind_correlation(m, self.function(&m.operation), &self.cset, s)
    }

    /// Accepts `{"correlation":{op:{field:var}}}` or the inner object alone.
    pub fn from_json(doc: &Json) -> Result<Self, Error> {
        let inner = doc.get("correlation").unwrap_or(doc);
        let obj = inner
            .as_object()
            .ok_or_else(|| Error::Parse(format!("correlation config must be an object, got {inner}")))?;
        let mut functions = BTreeMap::new();
        for (op, fields) in obj {
            let fields = fields
                .as_object()
                .ok_or_else(|| Error::Parse(format!("correlation for {op:?} must be an object")))?;
            let pairs = fields
                .iter()
                .map(|(field, var)| {
                    let var = var
                        .as_str()
                        .ok_or_else(|| Error::Parse(format!("correlation target for {field:?} must be a string")))?;
                    Ok((VarName::new(field.clone())?, VarName::new(var)?))
                })
                .collect::<Result<Vec<_>, Error>>()?;
            functions.insert(op.clone(), CorrelationFunction::new(pairs)?);
        }
        Ok(CorrelationConfig::new(functions))
    }

    pub fn to_json(&self) -> Json {
        Json::Object(
            self.functions
                .iter()
                .map(|(op, f)| {
                    let fields = f
                        .iter()
                        .map(|(k, v)| (k.to_string(), Json::String(v.to_string())))
                        .collect();
                    (op.clone(), Json::Object(fields))
                })
                .collect(),
        )
    }
}

/// The routing predicate: every correlated field of the payload matches the
/// session's variable or finds it undefined.
pub fn correlates(m: &Message, c: &CorrelationFunction, cset: &BTreeSet<VarName>, s: &State) -> bool {
    m.payload.iter().all(|(field, value)| match c.get(field.as_str()) {
        Some(target) if cset.contains(target) => match s.lookup(target.as_str()) {
            None => true,
            Some(bound) => bound == value,
        },
        _ => true,
    })
}

/// Binds the correlation variables that the message fixes and the session
/// has not bound yet.
pub fn bind_correlation(m: &Message, c: &CorrelationFunction, cset: &BTreeSet<VarName>, s: &State) -> State {
    let mut out = s.clone();
    for (field, value) in m.payload.iter() {
        if let Some(target) = c.get(field.as_str()) {
            if cset.contains(target) && !out.contains(target.as_str()) {
                out.set(target.clone(), value.clone());
            }
        }
    }
    out
}

/// Chooses among the candidates that correlate with `m`. Ties are broken by a
/// PRNG seeded with `seed` over the matches sorted by session id.
pub fn select_session(
    m: &Message,
    candidates: &[(SessionId, State)],
    cfg: &CorrelationConfig,
    seed: u64,
) -> Option<SessionId> {
    let mut matched: Vec<SessionId> = candidates
        .iter()
        .filter(|(_, s)| cfg.correlates(m, s))
        .map(|(id, _)| *id)
        .collect();
    matched.sort_unstable();
    match matched.len() {
        0 => None,
        1 => Some(matched[0]),
        n => Some(matched[ChaCha8Rng::seed_from_u64(seed).gen_range(0..n)]),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state;

    fn cfg(op: &str, pairs: &[(&str, &str)]) -> CorrelationConfig {
        let f = CorrelationFunction::new(
            pairs.iter().map(|(a, b)| (VarName::new(*a).unwrap(), VarName::new(*b).unwrap())),
        )
        .unwrap();
        CorrelationConfig::new(BTreeMap::from([(op.to_owned(), f)]))
    }

    #[test]
    fn predicate_examples() {
        let c = cfg("put", &[("id", "sid")]);
        let m = Message::new("put", state!("id" => 7i64));
        assert!(c.correlates(&m, &state!("sid" => 7i64)));
        assert!(c.correlates(&m, &State::new()));
        assert!(!c.correlates(&m, &state!("sid" => 8i64)));
    }

    #[test]
    fn select_examples() {
        let c = cfg("put", &[("id", "sid")]);
        let m = Message::new("put", state!("id" => 7i64));
        let cands = vec![(1, state!("sid" => 7i64)), (2, state!("sid" => 8i64))];
        assert_eq!(select_session(&m, &cands, &c, 99), Some(1));
        let both = vec![(1, State::new()), (2, State::new())];
        let pick = select_session(&m, &both, &c, 5).unwrap();
        for _ in 0..5 {
            assert_eq!(select_session(&m, &both, &c, 5), Some(pick));
        }
        let picks: BTreeSet<_> = (0..32).map(|seed| select_session(&m, &both, &c, seed).unwrap()).collect();
        assert_eq!(picks, BTreeSet::from([1, 2]));
        assert_eq!(select_session(&m, &[], &c, 0), None);
    }

    #[test]
    fn bind_examples() {
        let c = cfg("put", &[("id", "sid")]);
        let m = Message::new("put", state!("id" => 7i64));
        assert_eq!(c.bind(&m, &State::new()), state!("sid" => 7i64));
        assert_eq!(c.bind(&m, &state!("sid" => 7i64)), state!("sid" => 7i64));
        let m2 = Message::new("put", state!("id" => 7i64, "other" => 1i64));
        assert_eq!(c.bind(&m2, &State::new()), state!("sid" => 7i64));
    }

    #[test]
    fn cset_is_union_of_codomains() {
        let doc = serde_json::json!({"correlation": {"a": {"x": "s1"}, "b": {"y": "s2", "z": "s1"}}});
        let c = CorrelationConfig::from_json(&doc).unwrap();
        let names: Vec<_> = c.cset().iter().map(|v| v.as_str()).collect();
        assert_eq!(names, vec!["s1", "s2"]);
        assert_eq!(CorrelationConfig::from_json(&c.to_json()).unwrap(), c);
    }

    #[test]
    fn non_injective_function_rejected() {
        let doc = serde_json::json!({"correlation": {"a": {"x": "s", "y": "s"}}});
        assert!(matches!(CorrelationConfig::from_json(&doc), Err(Error::Validation(_))));
    }

    #[test]
    fn removing_a_field_never_breaks_a_match() {
        let c = cfg("put", &[("a", "x"), ("b", "y")]);
        let s = state!("x" => 1i64, "y" => 2i64);
        let full = Message::new("put", state!("a" => 1i64, "b" => 2i64));
        assert!(c.correlates(&full, &s));
        for drop in ["a", "b"] {
            let mut p = full.payload.clone();
            p.remove(drop);
            assert!(c.correlates(&Message::new("put", p), &s));
        }
    }
}
