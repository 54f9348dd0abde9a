//! Exhaustive exploration of one session's scheduling choices.

use std::collections::{BTreeMap, HashSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::behaviour::interp::{ContainerAction, GlobalAction, StorageAction};
use crate::behaviour::{BehaviourDef, Completion, Machine, Message, ReplyTo, SessionIo, StepResult};
use crate::error::{Error, Fault};
use crate::state::{State, Value};

/// Deterministic session environment: every trace message is in the mailbox
/// from the start, solicits are answered at once by echoing the request, and
/// global and storage state are plain maps.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct TraceIo {
    pub mailbox: Vec<Message>,
    pub sent: Vec<(String, String, State)>,
    pub replies: Vec<(ReplyTo, String, Result<State, Fault>)>,
    pub global: State,
    pub storage: BTreeMap<String, Value>,
    responses: BTreeMap<u64, Result<State, Fault>>,
    next_token: u64,
}

impl TraceIo {
    pub fn new(trace: &[Message]) -> TraceIo {
        TraceIo {
            mailbox: trace.to_vec(),
            ..TraceIo::default()
        }
    }
}

impl SessionIo for TraceIo {
    fn available(&self, op: &str) -> bool {
        self.mailbox.iter().any(|m| m.operation == op)
    }

    fn take(&mut self, op: &str) -> Option<Message> {
        let i = self.mailbox.iter().position(|m| m.operation == op)?;
        Some(self.mailbox.remove(i))
    }

    fn notify(&mut self, port: &str, op: &str, payload: State) -> Result<(), Fault> {
        self.sent.push((port.to_owned(), op.to_owned(), payload));
        Ok(())
    }

    fn solicit(&mut self, port: &str, op: &str, payload: State) -> Result<u64, Fault> {
        self.next_token += 1;
        self.responses.insert(self.next_token, Ok(payload.clone()));
        self.sent.push((port.to_owned(), op.to_owned(), payload));
        Ok(self.next_token)
    }

    fn response_ready(&self, token: u64) -> bool {
        self.responses.contains_key(&token)
    }

    fn take_response(&mut self, token: u64) -> Option<Result<State, Fault>> {
        self.responses.remove(&token)
    }

    fn reply(&mut self, to: &ReplyTo, op: &str, result: Result<State, Fault>) -> Result<(), Fault> {
        self.replies.push((to.clone(), op.to_owned(), result));
        Ok(())
    }

    fn global(&mut self, action: GlobalAction) -> Result<Option<Value>, Fault> {
        match action {
            GlobalAction::Read(x) => Ok(self.global.lookup(x.as_str()).cloned()),
            GlobalAction::Write(x, v) => {
                self.global.set(x, v);
                Ok(None)
            }
            GlobalAction::Add(x, d) => {
                let next = match (self.global.lookup(x.as_str()), &d) {
                    (None, _) => d.clone(),
                    (Some(Value::Int(a)), Value::Int(b)) => {
                        Value::Int(a.checked_add(*b).ok_or_else(|| Fault::new(Fault::ARITHMETIC))?)
                    }
                    _ => return Err(Fault::type_fault()),
                };
                self.global.set(x, next.clone());
                Ok(Some(next))
            }
        }
    }

    fn storage(&mut self, action: StorageAction) -> Result<Option<Value>, Fault> {
        match action {
            StorageAction::Get(k) => Ok(self.storage.get(&k).cloned()),
            StorageAction::Put(k, v) => {
                self.storage.insert(k, v);
                Ok(None)
            }
            StorageAction::Del(k) => {
                self.storage.remove(&k);
                Ok(None)
            }
        }
    }

    fn container(&mut self, _action: ContainerAction) -> Result<Option<Value>, Fault> {
        Err(Fault::new(Fault::CONTAINER_FAULT))
    }
}

/// A final local state and how the session ended. A session that blocks
/// for good is reported as terminated.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Outcome {
    pub local: State,
    pub completion: Completion,
}

fn outcome(m: &Machine) -> Outcome {
    Outcome {
        local: m.local().clone(),
        completion: m.outcome().cloned().unwrap_or(Completion::Terminated),
    }
}

/// Every outcome reachable by some scheduling of `b` over `trace`, by DFS
/// with memoisation of visited configurations.
pub fn enumerate_interleavings(b: &BehaviourDef, trace: &[Message], max_steps: usize) -> Result<HashSet<Outcome>, Error> {
    let start = (Machine::new(&b.root, State::new()), TraceIo::new(trace));
    let mut seen = HashSet::new();
    let mut out = HashSet::new();
    let mut stack = vec![(start, 0usize)];
    while let Some(((m, io), depth)) = stack.pop() {
        if !seen.insert((m.clone(), io.clone())) {
            continue;
        }
        let enabled = m.enabled(&io);
        if m.is_finished() || enabled.is_empty() {
            out.insert(outcome(&m));
            continue;
        }
        if depth >= max_steps {
            return Err(Error::BudgetExceeded(format!("more than {max_steps} steps")));
        }
        for path in enabled {
            let (mut m2, mut io2) = (m.clone(), io.clone());
            m2.step_at(&path, &mut io2);
            stack.push(((m2, io2), depth + 1));
        }
    }
    if out.is_empty() {
        return Err(Error::BudgetExceeded("no schedule ends".into()));
    }
    Ok(out)
}

/// One run of the seeded scheduler over the same environment.
pub fn run_seeded(b: &BehaviourDef, trace: &[Message], seed: u64, max_steps: usize) -> Result<(Outcome, TraceIo), Error> {
    let mut m = Machine::new(&b.root, State::new());
    let mut io = TraceIo::new(trace);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..=max_steps {
        match m.step(&mut rng, &mut io) {
            StepResult::Stepped => {}
            StepResult::Blocked | StepResult::Finished(_) => return Ok((outcome(&m), io)),
        }
    }
    Err(Error::BudgetExceeded(format!("more than {max_steps} steps")))
}
