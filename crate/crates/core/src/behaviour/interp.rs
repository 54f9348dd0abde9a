//! Step interpreter for one session.
//!
//! The running behaviour is a tree of [`Proc`] nodes. Each call to
//! [`Machine::step_at`] executes exactly one enabled leaf (an atomic
//! activity, a loop test, or the arrival of a solicit response) and then
//! settles the tree: finished sequences advance, finished scopes install
//! their compensation handler, and faults unwind to the nearest scope
//! whose body they were raised in.
//!
//! Fault discipline: when a fault reaches scope `S` from its body, every
//! still-running scope nested in the body has its termination handler
//! queued (innermost first). The handlers run, then either `S`'s handler for
//! the fault runs, or the fault continues to `S`'s parent. A fault raised by
//! a termination handler surfaces as `HandlerFault`. A fault raised by a
//! fault handler propagates to the parent scope. The root is an implicit
//! scope without handlers.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use rand::Rng;

use super::{Activity, ExprMap, ScopeDef};
use crate::error::Fault;
use crate::state::{State, Value, VarName};

/// An incoming message as seen by a session.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Message {
    pub operation: String,
    pub payload: State,
    pub resource: String,
    pub channel_id: u64,
    pub request_id: String,
    /// Set for Request-Response requests that are owed an answer.
    pub expects_reply: bool,
}

impl Message {
    pub fn new(operation: impl Into<String>, payload: State) -> Self {
        Message {
            operation: operation.into(),
            payload,
            resource: String::new(),
            channel_id: 0,
            request_id: String::new(),
            expects_reply: false,
        }
    }

    pub fn reply_to(&self) -> ReplyTo {
        ReplyTo {
            channel_id: self.channel_id,
            request_id: self.request_id.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ReplyTo {
    pub channel_id: u64,
    pub request_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Completion {
    Success,
    Fault(Fault),
    Terminated,
}

impl std::fmt::Display for Completion {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Completion::Success => f.write_str("success"),
            Completion::Fault(x) => write!(f, "fault({x})"),
            Completion::Terminated => f.write_str("terminated"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum GlobalAction {
    Read(VarName),
    Write(VarName, Value),
    Add(VarName, Value),
}

#[derive(Debug, Clone, PartialEq)]
pub enum StorageAction {
    Get(String),
    Put(String, Value),
    Del(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum ContainerAction {
    Embed { document: String, name: String },
    Unembed(String),
    Redirect { resource: String, target: String, owner: Option<u64> },
}

/// Everything a session needs from its surroundings.
pub trait SessionIo {
    /// Whether a message for `op` is waiting in the mailbox.
    fn available(&self, op: &str) -> bool;
    fn take(&mut self, op: &str) -> Option<Message>;
    fn notify(&mut self, port: &str, op: &str, payload: State) -> Result<(), Fault>;
    /// Sends a request and returns a token for the pending response.
    fn solicit(&mut self, port: &str, op: &str, payload: State) -> Result<u64, Fault>;
    fn response_ready(&self, token: u64) -> bool;
    fn take_response(&mut self, token: u64) -> Option<Result<State, Fault>>;
    fn reply(&mut self, to: &ReplyTo, op: &str, result: Result<State, Fault>) -> Result<(), Fault>;

    fn global(&mut self, _action: GlobalAction) -> Result<Option<Value>, Fault> {
        Err(Fault::new(Fault::PROTOCOL_FAULT))
    }

    fn storage(&mut self, _action: StorageAction) -> Result<Option<Value>, Fault> {
        Err(Fault::new(Fault::STORAGE_ERROR))
    }

    fn container(&mut self, _action: ContainerAction) -> Result<Option<Value>, Fault> {
        Err(Fault::new(Fault::CONTAINER_FAULT))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
enum Proc {
    Done,
    Leaf(Activity),
    Await { token: u64, into: String },
    Seq { list: Arc<Vec<Activity>>, idx: usize, head: Box<Proc> },
    Par(Vec<Proc>),
    Loop { cond: super::Expression, body: Arc<Activity>, current: Option<Box<Proc>> },
    Scope(Box<ScopeRun>),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct ScopeRun {
    id: u64,
    def: Arc<ScopeDef>,
    phase: Phase,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
enum Phase {
    Body(Proc),
    Terminating { run: Proc, then: Then },
    Handling(Proc),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
enum Then {
    Handle(Fault),
    Propagate(Fault),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct Pending {
    to: ReplyTo,
    scopes: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct Installed {
    name: String,
    handler: Activity,
    order: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct Env {
    local: State,
    pending: BTreeMap<String, Pending>,
    installed: Vec<Installed>,
    next_scope: u64,
    next_install: u64,
}

impl Env {
    fn instantiate(&mut self, a: &Activity) -> Proc {
        match a {
            Activity::Nil => Proc::Done,
            Activity::Sequence(list) => match list.first() {
                None => Proc::Done,
                Some(first) => Proc::Seq {
                    head: Box::new(self.instantiate(first)),
                    list: list.clone(),
                    idx: 0,
                },
            },
            Activity::Parallel(list) => Proc::Par(list.iter().map(|c| self.instantiate(c)).collect()),
            Activity::While { cond, body } => Proc::Loop {
                cond: cond.clone(),
                body: body.clone(),
                current: None,
            },
            Activity::Scope(def) => {
                let id = self.next_scope;
                self.next_scope += 1;
                let body = self.instantiate(&def.body);
                Proc::Scope(Box::new(ScopeRun {
                    id,
                    def: def.clone(),
                    phase: Phase::Body(body),
                }))
            }
            other => Proc::Leaf(other.clone()),
        }
    }

    fn answer_pending(&mut self, scope: u64, fault: &Fault, io: &mut dyn SessionIo) {
        let owed: Vec<String> = self
            .pending
            .iter()
            .filter(|(_, p)| p.scopes.contains(&scope))
            .map(|(op, _)| op.clone())
            .collect();
        for op in owed {
            let p = self.pending.remove(&op).expect("listed");
            let _ = io.reply(&p.to, &op, Err(fault.clone()));
        }
    }

    fn write_fields(&mut self, prefix: &str, payload: &State) -> Result<(), Fault> {
        for (k, v) in payload.iter() {
            let name = VarName::new(format!("{prefix}{k}")).map_err(|_| Fault::type_fault())?;
            self.local.set(name, v.clone());
        }
        Ok(())
    }

    fn eval_map(&self, m: &ExprMap) -> Result<State, Fault> {
        m.iter()
            .map(|(k, e)| Ok((k.clone(), e.eval(&self.local)?)))
            .collect()
    }

    fn eval_string(&self, e: &super::Expression) -> Result<String, Fault> {
        match e.eval(&self.local)? {
            Value::Str(s) => Ok(s),
            _ => Err(Fault::type_fault()),
        }
    }
}

fn set_or_clear(local: &mut State, into: &VarName, v: Option<Value>) {
    match v {
        Some(v) => local.set(into.clone(), v),
        None => {
            local.remove(into.as_str());
        }
    }
}

/// One session's interpreter state. Cloneable and hashable so that the
/// harness can explore every scheduling choice.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Machine {
    root: Proc,
    env: Env,
    outcome: Option<Completion>,
    terminating: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StepResult {
    Stepped,
    Blocked,
    Finished(Completion),
}

impl Machine {
    pub fn new(root: &Activity, local: State) -> Machine {
        let def = Arc::new(ScopeDef {
            name: String::new(),
            body: root.clone(),
            faults: BTreeMap::new(),
            on_terminate: Activity::Nil,
            on_compensate: Activity::Nil,
        });
        let mut env = Env {
            local,
            pending: BTreeMap::new(),
            installed: Vec::new(),
            next_scope: 0,
            next_install: 0,
        };
        let root = env.instantiate(&Activity::Scope(def));
        let mut m = Machine {
            root,
            env,
            outcome: None,
            terminating: false,
        };
        m.settle(&mut NoIo);
        m
    }

    pub fn local(&self) -> &State {
        &self.env.local
    }

    pub fn outcome(&self) -> Option<&Completion> {
        self.outcome.as_ref()
    }

    /// Operations some remaining part of the session may still receive,
    /// handlers included. Empty once finished.
    pub fn receivable(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        if self.outcome.is_some() {
            return out;
        }
        let mut add = |a: &Activity| {
            a.walk(&mut |x| {
                if let Activity::Receive { op, .. } = x {
                    out.insert(op.clone());
                }
            })
        };
        for i in &self.env.installed {
            add(&i.handler);
        }
        residual_activities(&self.root, &mut add);
        out
    }

    pub fn is_finished(&self) -> bool {
        self.outcome.is_some()
    }

    /// Binds each variable of `bindings` that is still undefined locally.
    pub fn bind_missing(&mut self, bindings: &State) {
        for (k, v) in bindings.iter() {
            if !self.env.local.contains(k.as_str()) {
                self.env.local.set(k.clone(), v.clone());
            }
        }
    }

    /// Paths of every leaf that can make progress now, in tree order.
    pub fn enabled(&self, io: &dyn SessionIo) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        if self.outcome.is_none() {
            collect_enabled(&self.root, io, &mut Vec::new(), &mut out);
        }
        out
    }

    /// Picks one enabled leaf with `rng` and executes it.
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R, io: &mut dyn SessionIo) -> StepResult {
        if let Some(c) = &self.outcome {
            return StepResult::Finished(c.clone());
        }
        let enabled = self.enabled(io);
        if enabled.is_empty() {
            return StepResult::Blocked;
        }
        let pick = if enabled.len() == 1 { 0 } else { rng.gen_range(0..enabled.len()) };
        self.step_at(&enabled[pick], io);
        match &self.outcome {
            Some(c) => StepResult::Finished(c.clone()),
            None => StepResult::Stepped,
        }
    }

    /// Executes the leaf at `path`, which must come from [`Machine::enabled`].
    pub fn step_at(&mut self, path: &[usize], io: &mut dyn SessionIo) {
        let mut scopes = Vec::new();
        let node = node_at(&mut self.root, path, &mut scopes);
        let result = match node {
            Proc::Leaf(act) => {
                let act = act.clone();
                exec(&act, &scopes, &mut self.env, io).map(|p| *node = p)
            }
            Proc::Await { token, into } => {
                let (token, into) = (*token, into.clone());
                match io.take_response(token) {
                    Some(Ok(payload)) => self.env.write_fields(&into, &payload).map(|_| *node = Proc::Done),
                    Some(Err(f)) => Err(f),
                    None => Ok(()),
                }
            }
            Proc::Loop { cond, body, current } => {
                debug_assert!(current.is_none());
                match cond.eval(&self.env.local) {
                    Ok(Value::Bool(true)) => {
                        let body = body.clone();
                        let p = self.env.instantiate(&body);
                        if let Proc::Loop { current, .. } = node {
                            *current = Some(Box::new(p));
                        }
                        Ok(())
                    }
                    Ok(Value::Bool(false)) => {
                        *node = Proc::Done;
                        Ok(())
                    }
                    Ok(_) => Err(Fault::type_fault()),
                    Err(f) => Err(f),
                }
            }
            other => panic!("step_at on a non-leaf node {other:?}"),
        };
        if let Err(f) = result {
            self.raise(path, f, io);
        }
        self.settle(io);
    }

    /// Stops the session: running scopes' termination handlers are run by
    /// subsequent steps, outstanding replies are answered with `Terminated`.
    pub fn terminate(&mut self, io: &mut dyn SessionIo) {
        if self.outcome.is_some() || self.terminating {
            return;
        }
        self.terminating = true;
        let owed: Vec<String> = self.env.pending.keys().cloned().collect();
        for op in owed {
            let p = self.env.pending.remove(&op).expect("listed");
            let _ = io.reply(&p.to, &op, Err(Fault::new(Fault::TERMINATED)));
        }
        let mut handlers = Vec::new();
        if let Proc::Scope(root) = &self.root {
            if let Phase::Body(body) = &root.phase {
                collect_termination(body, &mut handlers);
            }
        }
        let run = self.env.instantiate(&Activity::seq(handlers));
        if let Proc::Scope(root) = &mut self.root {
            root.phase = Phase::Terminating {
                run,
                then: Then::Propagate(Fault::new(Fault::TERMINATED)),
            };
        }
        self.settle(io);
    }

    fn raise(&mut self, path: &[usize], f: Fault, io: &mut dyn SessionIo) {
        if let Some(f) = raise_rec(&mut self.root, path, f, &mut self.env, io) {
            self.finish(Completion::Fault(f), io);
        }
    }

    fn finish(&mut self, c: Completion, io: &mut dyn SessionIo) {
        let c = if self.terminating { Completion::Terminated } else { c };
        let owed: Vec<String> = self.env.pending.keys().cloned().collect();
        for op in owed {
            let p = self.env.pending.remove(&op).expect("listed");
            let _ = io.reply(&p.to, &op, Err(Fault::new(Fault::NO_REPLY)));
        }
        self.root = Proc::Done;
        self.outcome = Some(c);
    }

    fn settle(&mut self, io: &mut dyn SessionIo) {
        loop {
            if self.outcome.is_some() {
                return;
            }
            let mut events = Vec::new();
            normalize(&mut self.root, &mut self.env, &mut Vec::new(), &mut events);
            if matches!(self.root, Proc::Done) {
                self.finish(Completion::Success, io);
                return;
            }
            match events.into_iter().next() {
                Some((path, f)) => self.raise(&path, f, io),
                None => return,
            }
        }
    }
}

struct NoIo;

impl SessionIo for NoIo {
    fn available(&self, _: &str) -> bool {
        false
    }
    fn take(&mut self, _: &str) -> Option<Message> {
        None
    }
    fn notify(&mut self, _: &str, _: &str, _: State) -> Result<(), Fault> {
        Err(Fault::io())
    }
    fn solicit(&mut self, _: &str, _: &str, _: State) -> Result<u64, Fault> {
        Err(Fault::io())
    }
    fn response_ready(&self, _: u64) -> bool {
        false
    }
    fn take_response(&mut self, _: u64) -> Option<Result<State, Fault>> {
        None
    }
    fn reply(&mut self, _: &ReplyTo, _: &str, _: Result<State, Fault>) -> Result<(), Fault> {
        Err(Fault::io())
    }
}

fn child_mut(node: &mut Proc, i: usize) -> &mut Proc {
    match node {
        Proc::Seq { head, .. } => head,
        Proc::Par(cs) => &mut cs[i],
        Proc::Loop { current: Some(c), .. } => c,
        Proc::Scope(s) => match &mut s.phase {
            Phase::Body(p) | Phase::Handling(p) | Phase::Terminating { run: p, .. } => p,
        },
        other => panic!("no child {i} under {other:?}"),
    }
}

fn node_at<'a>(mut node: &'a mut Proc, path: &[usize], scopes: &mut Vec<u64>) -> &'a mut Proc {
    for &i in path {
        if let Proc::Scope(s) = node {
            scopes.push(s.id);
        }
        node = child_mut(node, i);
    }
    node
}

fn collect_enabled(node: &Proc, io: &dyn SessionIo, path: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    let descend = |child: &Proc, i: usize, path: &mut Vec<usize>, out: &mut Vec<Vec<usize>>| {
        path.push(i);
        collect_enabled(child, io, path, out);
        path.pop();
    };
    match node {
        Proc::Done => {}
        Proc::Leaf(Activity::Receive { op, .. }) => {
            if io.available(op) {
                out.push(path.clone());
            }
        }
        Proc::Leaf(_) => out.push(path.clone()),
        Proc::Await { token, .. } => {
            if io.response_ready(*token) {
                out.push(path.clone());
            }
        }
        Proc::Seq { head, .. } => descend(head, 0, path, out),
        Proc::Par(cs) => {
            for (i, c) in cs.iter().enumerate() {
                descend(c, i, path, out);
            }
        }
        Proc::Loop { current: None, .. } => out.push(path.clone()),
        Proc::Loop { current: Some(c), .. } => descend(c, 0, path, out),
        Proc::Scope(s) => match &s.phase {
            Phase::Body(p) | Phase::Handling(p) | Phase::Terminating { run: p, .. } => descend(p, 0, path, out),
        },
    }
}

/// Termination handlers of every scope still running its body, innermost first.
fn residual_activities(node: &Proc, f: &mut dyn FnMut(&Activity)) {
    match node {
        Proc::Done | Proc::Await { .. } => {}
        Proc::Leaf(a) => f(a),
        Proc::Seq { list, idx, head } => {
            residual_activities(head, f);
            list[idx + 1..].iter().for_each(&mut *f);
        }
        Proc::Par(cs) => cs.iter().for_each(|c| residual_activities(c, f)),
        Proc::Loop { body, current, .. } => {
            if let Some(c) = current {
                residual_activities(c, f);
            }
            f(body);
        }
        Proc::Scope(run) => {
            match &run.phase {
                Phase::Body(p) | Phase::Handling(p) => residual_activities(p, f),
                Phase::Terminating { run: p, .. } => residual_activities(p, f),
            }
            run.def.faults.values().for_each(&mut *f);
            f(&run.def.on_terminate);
        }
    }
}

fn collect_termination(node: &Proc, out: &mut Vec<Activity>) {
    match node {
        Proc::Seq { head, .. } => collect_termination(head, out),
        Proc::Par(cs) => cs.iter().for_each(|c| collect_termination(c, out)),
        Proc::Loop { current: Some(c), .. } => collect_termination(c, out),
        Proc::Scope(s) => {
            if let Phase::Body(body) = &s.phase {
                collect_termination(body, out);
                if s.def.on_terminate != Activity::Nil {
                    out.push(s.def.on_terminate.clone());
                }
            }
        }
        _ => {}
    }
}

/// Delivers fault `f`, raised at `path` below `node`. Returns the fault if it
/// escapes `node`.
fn raise_rec(node: &mut Proc, path: &[usize], f: Fault, env: &mut Env, io: &mut dyn SessionIo) -> Option<Fault> {
    let Some((&i, rest)) = path.split_first() else {
        *node = Proc::Done;
        return Some(f);
    };
    let f = raise_rec(child_mut(node, i), rest, f, env, io)?;
    let Proc::Scope(s) = node else {
        return Some(f);
    };
    match &mut s.phase {
        Phase::Body(body) => {
            let mut handlers = Vec::new();
            collect_termination(body, &mut handlers);
            env.answer_pending(s.id, &f, io);
            let then = if s.def.faults.contains_key(f.name()) {
                Then::Handle(f)
            } else {
                Then::Propagate(f)
            };
            let run = env.instantiate(&Activity::seq(handlers));
            s.phase = Phase::Terminating { run, then };
            None
        }
        Phase::Terminating { .. } => {
            *node = Proc::Done;
            Some(Fault::new(Fault::HANDLER_FAULT))
        }
        Phase::Handling(_) => {
            *node = Proc::Done;
            Some(f)
        }
    }
}

fn normalize(node: &mut Proc, env: &mut Env, path: &mut Vec<usize>, events: &mut Vec<(Vec<usize>, Fault)>) {
    match node {
        Proc::Seq { list, idx, head } => loop {
            path.push(0);
            normalize(head, env, path, events);
            path.pop();
            if !matches!(**head, Proc::Done) {
                break;
            }
            if *idx + 1 < list.len() {
                *idx += 1;
                let next = list[*idx].clone();
                **head = env.instantiate(&next);
            } else {
                *node = Proc::Done;
                break;
            }
        },
        Proc::Par(cs) => {
            for (i, c) in cs.iter_mut().enumerate() {
                path.push(i);
                normalize(c, env, path, events);
                path.pop();
            }
            if cs.iter().all(|c| matches!(c, Proc::Done)) {
                *node = Proc::Done;
            }
        }
        Proc::Loop { current, .. } => {
            if let Some(c) = current {
                path.push(0);
                normalize(c, env, path, events);
                path.pop();
                if matches!(**c, Proc::Done) {
                    *current = None;
                }
            }
        }
        Proc::Scope(s) => loop {
            path.push(0);
            let done = match &mut s.phase {
                Phase::Body(p) | Phase::Handling(p) | Phase::Terminating { run: p, .. } => {
                    normalize(p, env, path, events);
                    matches!(p, Proc::Done)
                }
            };
            path.pop();
            if !done {
                break;
            }
            match &s.phase {
                Phase::Body(_) => {
                    env.installed.push(Installed {
                        name: s.def.name.clone(),
                        handler: s.def.on_compensate.clone(),
                        order: env.next_install,
                    });
                    env.next_install += 1;
                    *node = Proc::Done;
                    break;
                }
                Phase::Handling(_) => {
                    *node = Proc::Done;
                    break;
                }
                Phase::Terminating { then: Then::Handle(f), .. } => {
                    let handler = s.def.faults[f.name()].clone();
                    s.phase = Phase::Handling(env.instantiate(&handler));
                }
                Phase::Terminating { then: Then::Propagate(f), .. } => {
                    events.push((path.clone(), f.clone()));
                    break;
                }
            }
        },
        Proc::Done | Proc::Leaf(_) | Proc::Await { .. } => {}
    }
}

fn exec(act: &Activity, scopes: &[u64], env: &mut Env, io: &mut dyn SessionIo) -> Result<Proc, Fault> {
    match act {
        Activity::Receive { op, into } => {
            let msg = io.take(op).ok_or_else(Fault::protocol)?;
            if msg.expects_reply {
                if env.pending.contains_key(op) {
                    let _ = io.reply(&msg.reply_to(), op, Err(Fault::protocol()));
                    return Err(Fault::protocol());
                }
                env.pending.insert(
                    op.clone(),
                    Pending {
                        to: msg.reply_to(),
                        scopes: scopes.to_vec(),
                    },
                );
            }
            env.write_fields(into, &msg.payload)?;
        }
        Activity::Reply { op, from } => {
            let pending = env.pending.get(op).cloned().ok_or_else(Fault::protocol)?;
            let payload = env.eval_map(from)?;
            env.pending.remove(op);
            io.reply(&pending.to, op, Ok(payload))?;
        }
        Activity::Notify { port, op, payload } => {
            let payload = env.eval_map(payload)?;
            io.notify(port, op, payload)?;
        }
        Activity::Solicit { port, op, payload, into } => {
            let payload = env.eval_map(payload)?;
            let token = io.solicit(port, op, payload)?;
            return Ok(Proc::Await { token, into: into.clone() });
        }
        Activity::Assign { var, expr } => {
            let v = expr.eval(&env.local)?;
            env.local.set(var.clone(), v);
        }
        Activity::If { cond, then, otherwise } => {
            return match cond.eval(&env.local)? {
                Value::Bool(true) => Ok(env.instantiate(then)),
                Value::Bool(false) => Ok(env.instantiate(otherwise)),
                _ => Err(Fault::type_fault()),
            };
        }
        Activity::Throw(f) => return Err(f.clone()),
        Activity::Compensate(name) => {
            let mut chosen: Vec<Installed> = Vec::new();
            env.installed.retain(|i| {
                if &i.name == name {
                    chosen.push(i.clone());
                    false
                } else {
                    true
                }
            });
            chosen.sort_by_key(|i| std::cmp::Reverse(i.order));
            let seq = Activity::seq(chosen.into_iter().map(|i| i.handler).collect());
            return Ok(env.instantiate(&seq));
        }
        Activity::GlobalRead { var, into } => {
            let v = io.global(GlobalAction::Read(var.clone()))?;
            set_or_clear(&mut env.local, into, v);
        }
        Activity::GlobalWrite { var, value } => {
            let v = value.eval(&env.local)?;
            io.global(GlobalAction::Write(var.clone(), v))?;
        }
        Activity::GlobalAdd { var, delta } => {
            let v = delta.eval(&env.local)?;
            io.global(GlobalAction::Add(var.clone(), v))?;
        }
        Activity::StorageGet { key, into } => {
            let v = io.storage(StorageAction::Get(key.clone()))?;
            set_or_clear(&mut env.local, into, v);
        }
        Activity::StoragePut { key, value } => {
            let v = value.eval(&env.local)?;
            io.storage(StorageAction::Put(key.clone(), v))?;
        }
        Activity::StorageDel { key } => {
            io.storage(StorageAction::Del(key.clone()))?;
        }
        Activity::Embed { service, name } => {
            let document = env.eval_string(service)?;
            let name = env.eval_string(name)?;
            io.container(ContainerAction::Embed { document, name })?;
        }
        Activity::Unembed { name } => {
            let name = env.eval_string(name)?;
            io.container(ContainerAction::Unembed(name))?;
        }
        Activity::Redirect { resource, target, private_to } => {
            let resource = env.eval_string(resource)?;
            let target = env.eval_string(target)?;
            let owner = match private_to {
                None => None,
                Some(op) => Some(env.pending.get(op).ok_or_else(Fault::protocol)?.to.channel_id),
            };
            io.container(ContainerAction::Redirect { resource, target, owner })?;
        }
        Activity::Nil
        | Activity::Sequence(_)
        | Activity::Parallel(_)
        | Activity::While { .. }
        | Activity::Scope(_) => unreachable!("structural activities are never leaves"),
    }
    Ok(Proc::Done)
}
