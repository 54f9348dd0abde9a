//! The routing formula evaluated by explicit iteration. Deliberately takes
//! plain maps so it shares no code with the correlation module.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;

use crate::state::{State, Value, VarName};

/// `∀x ∈ Dom(m): c(x) ∈ cset ⇒ s(c(x)) = m(x) ∨ s(c(x)) undefined`.
pub fn oracle_correlates(m: &State, c: &BTreeMap<String, String>, cset: &BTreeSet<String>, s: &State) -> bool {
    for (x, mx) in m.iter() {
        let Some(target) = c.get(x.as_str()) else { continue };
        if !cset.contains(target) {
            continue;
        }
        let sx = s.lookup(target);
        let holds = match sx {
            None => true,
            Some(v) => same(v, mx),
        };
        if !holds {
            return false;
        }
    }
    true
}

fn same(a: &Value, b: &Value) -> bool {
    match (a, b) {
        (Value::Int(x), Value::Int(y)) => x == y,
        (Value::Str(x), Value::Str(y)) => x == y,
        (Value::Bool(x), Value::Bool(y)) => x == y,
        (Value::Double(x), Value::Double(y)) => x.to_bits() == y.to_bits(),
        _ => false,
    }
}

/// Bounds for random oracle inputs.
#[derive(Debug, Clone)]
pub struct OracleConfig {
    pub vars: Vec<String>,
    pub values: Vec<i64>,
    pub sessions: usize,
    pub operations: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            vars: ["a", "b", "c", "d"].map(String::from).to_vec(),
            values: vec![1, 2],
            sessions: 5,
            operations: 3,
        }
    }
}

/// One random (message payload, correlation function, session state).
#[derive(Debug, Clone)]
pub struct Triple {
    pub payload: State,
    pub function: BTreeMap<String, String>,
    pub cset: BTreeSet<String>,
    pub state: State,
}

impl OracleConfig {
    /// A state over the variable pool; each variable is 1, 2 or undefined.
    pub fn state<R: Rng + ?Sized>(&self, rng: &mut R) -> State {
        let mut s = State::new();
        for v in &self.vars {
            let i = rng.gen_range(0..=self.values.len());
            if i < self.values.len() {
                s.set(VarName::new(v.clone()).expect("pool name"), Value::Int(self.values[i]));
            }
        }
        s
    }

    /// An injective partial map from the pool to the pool.
    pub fn function<R: Rng + ?Sized>(&self, rng: &mut R) -> BTreeMap<String, String> {
        let mut targets = self.vars.clone();
        let mut out = BTreeMap::new();
        for field in &self.vars {
            if targets.is_empty() || rng.gen_bool(0.4) {
                continue;
            }
            let t = targets.swap_remove(rng.gen_range(0..targets.len()));
            out.insert(field.clone(), t);
        }
        out
    }

    /// The correlation set is the union of codomains over a few functions,
    /// so it may contain variables this function does not target.
    pub fn triple<R: Rng + ?Sized>(&self, rng: &mut R) -> Triple {
        let function = self.function(rng);
        let mut cset: BTreeSet<String> = function.values().cloned().collect();
        for _ in 1..self.operations {
            cset.extend(self.function(rng).into_values());
        }
        Triple {
            payload: self.state(rng),
            function,
            cset,
            state: self.state(rng),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state;

    #[test]
    fn vacuous_cases() {
        let c = BTreeMap::from([("id".to_owned(), "sid".to_owned())]);
        let cset = BTreeSet::from(["sid".to_owned()]);
        assert!(oracle_correlates(&State::new(), &c, &cset, &state!("sid" => 8i64)));
        assert!(oracle_correlates(&state!("id" => 7i64), &BTreeMap::new(), &BTreeSet::new(), &state!("sid" => 8i64)));
        assert!(!oracle_correlates(&state!("id" => 7i64), &c, &cset, &state!("sid" => 8i64)));
        assert!(oracle_correlates(&state!("id" => 7i64), &c, &cset, &State::new()));
    }
}
