//! Session management: creation, routing of incoming messages, the three
//! state tiers, and sequential or concurrent execution.
//!
//! All routing decisions and session bookkeeping go through one lock, so
//! intake is serialized per engine. Each session keeps its [`Machine`]
//! privately; the table only holds the session's correlation-set projection,
//! its mailbox and the responses it is waiting for.

mod log;
mod storage;

pub use log::EventLog;
pub use storage::Storage;

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex, MutexGuard, Weak};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::behaviour::interp::{ContainerAction, GlobalAction, StorageAction};
use crate::behaviour::{BehaviourDef, Completion, Machine, Message, ReplyTo, SessionIo, StepResult};
use crate::correlation::{select_session, CorrelationConfig, SessionId};
use crate::deployment::Net;
use crate::error::{Error, Fault};
use crate::state::{State, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum ExecutionMode {
    Sequential,
    #[default]
    Concurrent,
}

impl ExecutionMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ExecutionMode::Sequential => "sequential",
            ExecutionMode::Concurrent => "concurrent",
        }
    }
}

impl FromStr for ExecutionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "sequential" => Ok(ExecutionMode::Sequential),
            "concurrent" => Ok(ExecutionMode::Concurrent),
            other => Err(Error::Parse(format!("unknown execution mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SessionStatus {
    Created,
    Running,
    Blocked,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RoutingOutcome {
    Delivered(SessionId),
    Created(SessionId),
    /// Sequential mode: the target session exists but has not started yet.
    Queued(SessionId),
    Rejected(Fault),
}

impl RoutingOutcome {
    pub fn session(&self) -> Option<SessionId> {
        match self {
            RoutingOutcome::Delivered(id) | RoutingOutcome::Created(id) | RoutingOutcome::Queued(id) => Some(*id),
            RoutingOutcome::Rejected(_) => None,
        }
    }
}

/// Answers a Request-Response message.
pub type ReplyFn = Box<dyn FnOnce(Result<State, Fault>) + Send>;
pub type ResponseFn = Box<dyn FnOnce(Result<State, Fault>) + Send>;

/// What sessions need from the hosting container: output ports and the
/// container's dynamic tables.
pub trait Outbound: Send + Sync {
    fn notify(&self, port: &str, op: &str, payload: State) -> Result<(), Fault>;
    fn solicit(&self, port: &str, op: &str, payload: State, done: ResponseFn) -> Result<(), Fault>;
    fn container(&self, _action: ContainerAction) -> Result<Option<Value>, Fault> {
        Err(Fault::new(Fault::CONTAINER_FAULT))
    }
}

/// An engine with no output ports.
pub struct Isolated;

impl Outbound for Isolated {
    fn notify(&self, _: &str, _: &str, _: State) -> Result<(), Fault> {
        Err(Fault::io())
    }
    fn solicit(&self, _: &str, _: &str, _: State, _: ResponseFn) -> Result<(), Fault> {
        Err(Fault::io())
    }
}

pub struct EngineSpec {
    pub name: String,
    pub behaviour: BehaviourDef,
    pub correlation: CorrelationConfig,
    pub mode: ExecutionMode,
    pub seed: u64,
    pub storage: Option<PathBuf>,
    /// Operations accepted by `submit`; `None` accepts any.
    pub accepts: Option<BTreeSet<String>>,
    pub log: Arc<EventLog>,
    pub outbound: Arc<dyn Outbound>,
    /// When false, the firing session waits for [`Engine::fire`].
    pub fire_on_start: bool,
}

impl EngineSpec {
    pub fn new(name: impl Into<String>, behaviour: BehaviourDef) -> EngineSpec {
        EngineSpec {
            name: name.into(),
            behaviour,
            correlation: CorrelationConfig::default(),
            mode: ExecutionMode::Concurrent,
            seed: 0,
            storage: None,
            accepts: None,
            log: Arc::new(EventLog::discard()),
            outbound: Arc::new(Isolated),
            fire_on_start: true,
        }
    }
}

/// Message accounting. `submitted` always equals the sum of the others.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Counters {
    pub submitted: u64,
    pub delivered: u64,
    pub created: u64,
    pub queued: u64,
    pub rejected: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StopReport {
    pub sessions: BTreeMap<SessionId, Completion>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Snapshot {
    pub unfinished: usize,
    pub running: usize,
    pub activity: u64,
}

struct Slot {
    projection: State,
    binds: State,
    /// `true` marks the message that created the session.
    mailbox: VecDeque<(bool, Message)>,
    receivable: BTreeSet<String>,
    responses: HashMap<u64, Result<State, Fault>>,
    status: SessionStatus,
    terminate: bool,
}

struct Inner {
    sessions: BTreeMap<SessionId, Slot>,
    finished: BTreeMap<SessionId, Completion>,
    ready: VecDeque<(SessionId, Machine)>,
    active: Option<SessionId>,
    replies: HashMap<ReplyTo, ReplyFn>,
    next_id: SessionId,
    next_token: u64,
    version: u64,
    counters: Counters,
    stopping: bool,
    abandon: bool,
    firing: Option<SessionId>,
    global: State,
}

struct Shared {
    name: String,
    behaviour: BehaviourDef,
    correlation: CorrelationConfig,
    mode: ExecutionMode,
    seed: u64,
    accepts: Option<BTreeSet<String>>,
    log: Arc<EventLog>,
    outbound: Arc<dyn Outbound>,
    storage: Option<Mutex<Storage>>,
    inner: Mutex<Inner>,
    cv: Condvar,
    activity: AtomicU64,
    threads: Mutex<Vec<JoinHandle<()>>>,
}

pub struct Engine {
    shared: Arc<Shared>,
}

fn mix(seed: u64, n: u64) -> u64 {
    seed ^ n.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

impl Shared {
    fn lock(&self) -> MutexGuard<'_, Inner> {
        self.inner.lock().expect("engine lock")
    }

    fn log(&self, session: Option<SessionId>, event: &str, detail: serde_json::Value) {
        self.log.record(&self.name, session, event, detail);
    }

    fn bump(&self, inner: &mut Inner) {
        inner.version += 1;
        self.activity.fetch_add(1, Ordering::SeqCst);
        self.cv.notify_all();
    }

    fn new_slot(&self, local: &State, machine: &Machine) -> Slot {
        Slot {
            projection: local.project(self.correlation.cset()),
            binds: State::new(),
            mailbox: VecDeque::new(),
            receivable: machine.receivable(),
            responses: HashMap::new(),
            status: SessionStatus::Created,
            terminate: false,
        }
    }

    /// Removes a session from the live table. Messages it never consumed
    /// are routed again; those that cannot be placed are answered.
    fn retire(self: &Arc<Self>, inner: &mut Inner, id: SessionId, c: Completion) -> Vec<(ReplyFn, Fault)> {
        let mut owed = Vec::new();
        self.log(Some(id), "finish", json!({"completion": c.to_string()}));
        inner.finished.insert(id, c.clone());
        if let Some(slot) = inner.sessions.remove(&id) {
            for (creator, m) in slot.mailbox {
                let fault = if c == Completion::Terminated || inner.stopping {
                    Fault::new(Fault::TERMINATED)
                } else if creator {
                    Fault::new(Fault::NO_REPLY)
                } else {
                    match self.route(inner, &m) {
                        RoutingOutcome::Rejected(f) => f,
                        o => {
                            self.log(o.session(), "reroute", json!({"operation": m.operation, "outcome": outcome_name(&o)}));
                            continue;
                        }
                    }
                };
                if let Some(r) = inner.replies.remove(&m.reply_to()) {
                    owed.push((r, fault));
                }
            }
        }
        self.bump(inner);
        owed
    }

    fn create(self: &Arc<Self>, inner: &mut Inner, local: State) -> SessionId {
        let id = inner.next_id;
        inner.next_id += 1;
        let machine = Machine::new(&self.behaviour.root, local.clone());
        inner.sessions.insert(id, self.new_slot(&local, &machine));
        self.log(Some(id), "create", json!({}));
        match self.mode {
            ExecutionMode::Sequential => inner.ready.push_back((id, machine)),
            ExecutionMode::Concurrent => {
                let s = self.clone();
                self.threads
                    .lock()
                    .expect("threads")
                    .push(thread::spawn(move || run_session(s, id, machine)));
            }
        }
        self.bump(inner);
        id
    }

    fn route(self: &Arc<Self>, inner: &mut Inner, m: &Message) -> RoutingOutcome {
        if inner.stopping {
            return RoutingOutcome::Rejected(Fault::new(Fault::TERMINATED));
        }
        if let Some(acc) = &self.accepts {
            if !acc.contains(&m.operation) {
                return RoutingOutcome::Rejected(Fault::new(Fault::UNKNOWN_OPERATION));
            }
        }
        let candidates: Vec<(SessionId, State)> = inner
            .sessions
            .iter()
            .filter(|(_, s)| s.receivable.contains(&m.operation))
            .map(|(id, s)| (*id, s.projection.clone()))
            .collect();
        let seed = mix(self.seed, inner.counters.submitted);
        if let Some(id) = select_session(m, &candidates, &self.correlation, seed) {
            let queued = self.mode == ExecutionMode::Sequential
                && inner.sessions[&id].status == SessionStatus::Created;
            let slot = inner.sessions.get_mut(&id).expect("candidate");
            let bound = self.correlation.bind(m, &slot.projection);
            slot.binds = bound.compose(&slot.binds);
            slot.projection = bound;
            slot.mailbox.push_back((false, m.clone()));
            self.bump(inner);
            return if queued { RoutingOutcome::Queued(id) } else { RoutingOutcome::Delivered(id) };
        }
        if self.behaviour.initiators.contains(&m.operation) {
            let waits = self.mode == ExecutionMode::Sequential && (inner.active.is_some() || !inner.ready.is_empty());
            let local = self.correlation.bind(m, &State::new());
            let id = self.create(inner, local);
            inner.sessions.get_mut(&id).expect("created").mailbox.push_back((true, m.clone()));
            return if waits { RoutingOutcome::Queued(id) } else { RoutingOutcome::Created(id) };
        }
        RoutingOutcome::Rejected(Fault::new(Fault::CORRELATION_ERROR))
    }
}

struct Ctx {
    shared: Arc<Shared>,
    id: SessionId,
}

impl SessionIo for Ctx {
    fn available(&self, op: &str) -> bool {
        let inner = self.shared.lock();
        inner.sessions[&self.id].mailbox.iter().any(|(_, m)| m.operation == op)
    }

    fn take(&mut self, op: &str) -> Option<Message> {
        let mut inner = self.shared.lock();
        let mb = &mut inner.sessions.get_mut(&self.id)?.mailbox;
        let i = mb.iter().position(|(_, m)| m.operation == op)?;
        mb.remove(i).map(|(_, m)| m)
    }

    fn notify(&mut self, port: &str, op: &str, payload: State) -> Result<(), Fault> {
        self.shared.outbound.notify(port, op, payload)
    }

    fn solicit(&mut self, port: &str, op: &str, payload: State) -> Result<u64, Fault> {
        let token = {
            let mut inner = self.shared.lock();
            inner.next_token += 1;
            inner.next_token
        };
        let weak: Weak<Shared> = Arc::downgrade(&self.shared);
        let id = self.id;
        self.shared.outbound.solicit(
            port,
            op,
            payload,
            Box::new(move |r| {
                if let Some(shared) = weak.upgrade() {
                    let mut inner = shared.lock();
                    if let Some(slot) = inner.sessions.get_mut(&id) {
                        slot.responses.insert(token, r);
                        shared.bump(&mut inner);
                    }
                }
            }),
        )?;
        Ok(token)
    }

    fn response_ready(&self, token: u64) -> bool {
        self.shared.lock().sessions[&self.id].responses.contains_key(&token)
    }

    fn take_response(&mut self, token: u64) -> Option<Result<State, Fault>> {
        self.shared.lock().sessions.get_mut(&self.id)?.responses.remove(&token)
    }

    fn reply(&mut self, to: &ReplyTo, _op: &str, result: Result<State, Fault>) -> Result<(), Fault> {
        let r = self.shared.lock().replies.remove(to);
        if let Some(r) = r {
            r(result);
        }
        Ok(())
    }

    fn global(&mut self, action: GlobalAction) -> Result<Option<Value>, Fault> {
        global_action(&self.shared, action)
    }

    fn storage(&mut self, action: StorageAction) -> Result<Option<Value>, Fault> {
        storage_action(&self.shared, action)
    }

    fn container(&mut self, action: ContainerAction) -> Result<Option<Value>, Fault> {
        self.shared.outbound.container(action)
    }
}

fn global_action(shared: &Shared, action: GlobalAction) -> Result<Option<Value>, Fault> {
    let mut inner = shared.lock();
    let g = &mut inner.global;
    match action {
        GlobalAction::Read(x) => Ok(g.lookup(x.as_str()).cloned()),
        GlobalAction::Write(x, v) => {
            g.set(x, v);
            Ok(None)
        }
        GlobalAction::Add(x, delta) => {
            let next = match (g.lookup(x.as_str()), &delta) {
                (None, Value::Int(_) | Value::Double(_)) => delta.clone(),
                (Some(Value::Int(a)), Value::Int(b)) => {
                    Value::Int(a.checked_add(*b).ok_or_else(|| Fault::new(Fault::ARITHMETIC))?)
                }
                (Some(Value::Double(a)), Value::Double(b)) => Value::Double(a + b),
                _ => return Err(Fault::type_fault()),
            };
            g.set(x, next.clone());
            Ok(Some(next))
        }
    }
}

fn storage_action(shared: &Shared, action: StorageAction) -> Result<Option<Value>, Fault> {
    let storage = shared.storage.as_ref().ok_or_else(|| Fault::new(Fault::STORAGE_ERROR))?;
    let mut st = storage.lock().expect("storage lock");
    let io = |r: Result<(), Error>| r.map(|_| None).map_err(|_| Fault::new(Fault::STORAGE_ERROR));
    match action {
        StorageAction::Get(k) => Ok(st.get(&k)),
        StorageAction::Put(k, v) => io(st.put(&k, v)),
        StorageAction::Del(k) => io(st.del(&k)),
    }
}

fn run_session(shared: Arc<Shared>, id: SessionId, mut machine: Machine) {
    let mut rng = ChaCha8Rng::seed_from_u64(mix(shared.seed, id));
    let mut io = Ctx { shared: shared.clone(), id };
    let mut terminating = false;
    shared.log(Some(id), "start", json!({}));
    loop {
        let (binds, terminate, version) = {
            let mut inner = shared.lock();
            let version = inner.version;
            let slot = inner.sessions.get_mut(&id).expect("live session");
            slot.status = SessionStatus::Running;
            (std::mem::take(&mut slot.binds), slot.terminate, version)
        };
        if !binds.is_empty() {
            machine.bind_missing(&binds);
        }
        if terminate && !terminating {
            terminating = true;
            machine.terminate(&mut io);
        }
        let result = machine.step(&mut rng, &mut io);
        let mut inner = shared.lock();
        if let StepResult::Finished(c) = result {
            let owed = shared.retire(&mut inner, id, c);
            drop(inner);
            for (r, f) in owed {
                r(Err(f));
            }
            return;
        }
        let cset = shared.correlation.cset();
        let slot = inner.sessions.get_mut(&id).expect("live session");
        slot.projection = machine.local().project(cset).compose(&slot.binds);
        slot.receivable = machine.receivable();
        if result == StepResult::Stepped {
            shared.activity.fetch_add(1, Ordering::SeqCst);
            shared.log(Some(id), "step", json!({}));
            continue;
        }
        slot.status = SessionStatus::Blocked;
        while inner.version == version && !inner.abandon {
            inner = shared.cv.wait(inner).expect("engine lock");
        }
        if inner.abandon {
            let owed = shared.retire(&mut inner, id, Completion::Terminated);
            drop(inner);
            for (r, f) in owed {
                r(Err(f));
            }
            return;
        }
    }
}

fn sequential_worker(shared: Arc<Shared>) {
    loop {
        let next = {
            let mut inner = shared.lock();
            loop {
                if inner.stopping {
                    return;
                }
                if let Some(next) = inner.ready.pop_front() {
                    inner.active = Some(next.0);
                    break next;
                }
                inner = shared.cv.wait(inner).expect("engine lock");
            }
        };
        run_session(shared.clone(), next.0, next.1);
        shared.lock().active = None;
    }
}

impl Engine {
    /// Opens storage, starts the execution units and, for a firing
    /// behaviour, the firing session.
    pub fn start(spec: EngineSpec) -> Result<Engine, Error> {
        let fire = spec.fire_on_start;
        let storage = spec.storage.as_ref().map(Storage::open).transpose()?.map(Mutex::new);
        let shared = Arc::new(Shared {
            name: spec.name,
            behaviour: spec.behaviour,
            correlation: spec.correlation,
            mode: spec.mode,
            seed: spec.seed,
            accepts: spec.accepts,
            log: spec.log,
            outbound: spec.outbound,
            storage,
            inner: Mutex::new(Inner {
                sessions: BTreeMap::new(),
                finished: BTreeMap::new(),
                ready: VecDeque::new(),
                active: None,
                replies: HashMap::new(),
                next_id: 1,
                next_token: 0,
                version: 0,
                counters: Counters::default(),
                stopping: false,
                abandon: false,
                firing: None,
                global: State::new(),
            }),
            cv: Condvar::new(),
            activity: AtomicU64::new(0),
            threads: Mutex::new(Vec::new()),
        });
        let engine = Engine { shared: shared.clone() };
        shared.log(None, "engine-start", json!({"mode": shared.mode.as_str()}));
        if shared.mode == ExecutionMode::Sequential {
            let s = shared.clone();
            shared.threads.lock().expect("threads").push(thread::spawn(move || sequential_worker(s)));
        }
        if fire {
            engine.fire();
        }
        Ok(engine)
    }

    /// Creates the firing session of a firing behaviour, once.
    pub fn fire(&self) -> Option<SessionId> {
        let shared = &self.shared;
        let mut inner = shared.lock();
        if shared.behaviour.firing && inner.firing.is_none() && !inner.stopping {
            let id = shared.create(&mut inner, State::new());
            inner.firing = Some(id);
        }
        inner.firing
    }

    pub fn name(&self) -> &str {
        &self.shared.name
    }

    pub fn mode(&self) -> ExecutionMode {
        self.shared.mode
    }

    /// Routes `m` to a session, creating one for an initiator operation.
    /// `reply` answers the message if it is a Request-Response request;
    /// on rejection it is called with the fault right away.
    pub fn submit(&self, m: Message, reply: Option<ReplyFn>) -> RoutingOutcome {
        let shared = &self.shared;
        let mut inner = shared.lock();
        inner.counters.submitted += 1;
        let outcome = shared.route(&mut inner, &m);
        match &outcome {
            RoutingOutcome::Delivered(_) => inner.counters.delivered += 1,
            RoutingOutcome::Created(_) => inner.counters.created += 1,
            RoutingOutcome::Queued(_) => inner.counters.queued += 1,
            RoutingOutcome::Rejected(_) => inner.counters.rejected += 1,
        }
        let detail = json!({"operation": m.operation, "outcome": outcome_name(&outcome)});
        shared.log(outcome.session(), "submit", detail);
        match (&outcome, reply) {
            (RoutingOutcome::Rejected(f), Some(r)) => {
                drop(inner);
                r(Err(f.clone()));
            }
            (_, Some(r)) if m.expects_reply => {
                inner.replies.insert(m.reply_to(), r);
            }
            _ => {}
        }
        outcome
    }

    pub fn global_access(&self, action: GlobalAction) -> Result<Option<Value>, Fault> {
        global_action(&self.shared, action)
    }

    pub fn storage_access(&self, action: StorageAction) -> Result<Option<Value>, Fault> {
        storage_action(&self.shared, action)
    }

    pub fn counters(&self) -> Counters {
        self.shared.lock().counters
    }

    pub fn firing_session(&self) -> Option<SessionId> {
        self.shared.lock().firing
    }

    /// The session's correlation-set projection while it is live.
    pub fn projection(&self, id: SessionId) -> Option<State> {
        self.shared.lock().sessions.get(&id).map(|s| s.projection.clone())
    }

    pub fn status(&self, id: SessionId) -> Option<SessionStatus> {
        self.shared.lock().sessions.get(&id).map(|s| s.status)
    }

    pub fn completion(&self, id: SessionId) -> Option<Completion> {
        self.shared.lock().finished.get(&id).cloned()
    }

    pub fn completions(&self) -> BTreeMap<SessionId, Completion> {
        self.shared.lock().finished.clone()
    }

    /// Waits for session `id` to finish.
    pub fn wait_session(&self, id: SessionId, timeout: Duration) -> Option<Completion> {
        let deadline = Instant::now() + timeout;
        let mut inner = self.shared.lock();
        loop {
            if let Some(c) = inner.finished.get(&id) {
                return Some(c.clone());
            }
            let left = deadline.checked_duration_since(Instant::now())?;
            inner = self.shared.cv.wait_timeout(inner, left).expect("engine lock").0;
        }
    }

    /// Waits until no session is live.
    pub fn wait_idle(&self, timeout: Duration) -> bool {
        let deadline = Instant::now() + timeout;
        let mut inner = self.shared.lock();
        while !inner.sessions.is_empty() {
            let Some(left) = deadline.checked_duration_since(Instant::now()) else {
                return false;
            };
            inner = self.shared.cv.wait_timeout(inner, left).expect("engine lock").0;
        }
        true
    }

    pub fn snapshot(&self) -> Snapshot {
        let inner = self.shared.lock();
        Snapshot {
            unfinished: inner.sessions.len(),
            running: inner
                .sessions
                .values()
                .filter(|s| s.status == SessionStatus::Running)
                .count(),
            activity: self.shared.activity.load(Ordering::SeqCst),
        }
    }

    /// Terminates every live session, waits up to `grace` for their
    /// termination handlers, and reports each session's completion.
    pub fn stop(&self, grace: Duration) -> StopReport {
        let shared = &self.shared;
        let mut owed = Vec::new();
        {
            let mut inner = shared.lock();
            if !inner.stopping {
                inner.stopping = true;
                let queued: Vec<SessionId> = inner.ready.drain(..).map(|(id, _)| id).collect();
                for id in queued {
                    owed.extend(shared.retire(&mut inner, id, Completion::Terminated));
                }
                for slot in inner.sessions.values_mut() {
                    slot.terminate = true;
                }
                shared.bump(&mut inner);
            }
        }
        for (r, f) in owed {
            r(Err(f));
        }
        if !self.wait_idle(grace) {
            let mut inner = shared.lock();
            inner.abandon = true;
            shared.cv.notify_all();
        }
        self.wait_idle(grace);
        let handles: Vec<JoinHandle<()>> = self.shared.threads.lock().expect("threads").drain(..).collect();
        for h in handles {
            if h.is_finished() || shared.lock().sessions.is_empty() {
                let _ = h.join();
            }
        }
        let mut inner = shared.lock();
        inner.global = State::new();
        let leftover: Vec<ReplyFn> = inner.replies.drain().map(|(_, r)| r).collect();
        let report = StopReport {
            sessions: inner.finished.clone(),
        };
        drop(inner);
        for r in leftover {
            r(Err(Fault::new(Fault::TERMINATED)));
        }
        shared.log(None, "engine-stop", json!({}));
        report
    }
}

impl Drop for Engine {
    fn drop(&mut self) {
        if !self.shared.lock().stopping {
            self.stop(Duration::from_millis(200));
        }
    }
}

fn outcome_name(o: &RoutingOutcome) -> String {
    match o {
        RoutingOutcome::Delivered(_) => "delivered".into(),
        RoutingOutcome::Created(_) => "created".into(),
        RoutingOutcome::Queued(_) => "queued".into(),
        RoutingOutcome::Rejected(f) => format!("rejected({f})"),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quiescence {
    /// Every session is settled.
    Idle,
    /// Live sessions exist, none is running, and nothing moved for the grace period.
    Deadlock,
    /// Still making progress when the timeout expired.
    Busy,
}

/// Observes a group of engines (and the network between them) until they
/// are idle, deadlocked, or `timeout` passes.
pub fn watch(engines: &[&Engine], net: Option<&Net>, grace: Duration, timeout: Duration) -> Quiescence {
    let deadline = Instant::now() + timeout;
    let sample = || {
        let snaps: Vec<Snapshot> = engines.iter().map(|e| e.snapshot()).collect();
        let unfinished: usize = snaps.iter().map(|s| s.unfinished).sum();
        let running: usize = snaps.iter().map(|s| s.running).sum();
        let activity: u64 = snaps.iter().map(|s| s.activity).sum::<u64>() + net.map_or(0, Net::activity);
        (unfinished, running, activity)
    };
    let mut last = sample();
    let mut quiet_since = Instant::now();
    loop {
        let now = sample();
        if now.0 == 0 {
            return Quiescence::Idle;
        }
        if now != last || now.1 > 0 {
            last = now;
            quiet_since = Instant::now();
        } else if quiet_since.elapsed() >= grace {
            return Quiescence::Deadlock;
        }
        if Instant::now() >= deadline {
            return Quiescence::Busy;
        }
        thread::sleep(Duration::from_millis(5));
    }
}

#[cfg(test)]
mod tests;
