use std::sync::mpsc;

use super::*;
use crate::behaviour::interp::GlobalAction;
use crate::state;
use crate::state::VarName;

fn behaviour(doc: serde_json::Value) -> BehaviourDef {
    BehaviourDef::parse(&doc).unwrap()
}

fn corr(doc: serde_json::Value) -> CorrelationConfig {
    CorrelationConfig::from_json(&doc).unwrap()
}

fn var(x: &str) -> VarName {
    VarName::new(x).unwrap()
}

const WAIT: Duration = Duration::from_secs(5);

#[test]
fn firing_session_runs_without_input() {
    let e = Engine::start(EngineSpec::new("f", behaviour(serde_json::json!({"gwrite": ["a", "1"]})))).unwrap();
    let id = e.firing_session().unwrap();
    assert_eq!(e.wait_session(id, WAIT), Some(Completion::Success));
    assert_eq!(e.global_access(GlobalAction::Read(var("a"))).unwrap(), Some(Value::Int(1)));
    assert_eq!(e.completions().len(), 1);
}

#[test]
fn non_firing_engine_waits() {
    let b = behaviour(serde_json::json!({"seq": [{"receive": {"op": "go"}}]}));
    let e = Engine::start(EngineSpec::new("w", b)).unwrap();
    assert_eq!(e.firing_session(), None);
    assert_eq!(e.snapshot().unfinished, 0);
}

fn open_put_engine(mode: ExecutionMode) -> Engine {
    let b = behaviour(serde_json::json!({"seq": [
        {"receive": {"op": "open", "into": "o_"}},
        {"receive": {"op": "put", "into": "p_"}},
        {"gwrite": ["last", "p_v"]}
    ]}));
    let mut spec = EngineSpec::new("kv", b);
    spec.correlation = corr(serde_json::json!({"open": {"id": "sid"}, "put": {"id": "sid"}}));
    spec.mode = mode;
    Engine::start(spec).unwrap()
}

#[test]
fn routing_create_deliver_reject() {
    let e = open_put_engine(ExecutionMode::Concurrent);
    let RoutingOutcome::Created(s) = e.submit(Message::new("open", state!("id" => 7i64)), None) else {
        panic!("expected created");
    };
    assert_eq!(e.projection(s), Some(state!("sid" => 7i64)));
    assert_eq!(
        e.submit(Message::new("put", state!("id" => 9i64, "v" => 1i64)), None),
        RoutingOutcome::Rejected(Fault::new(Fault::CORRELATION_ERROR))
    );
    assert_eq!(
        e.submit(Message::new("put", state!("id" => 7i64, "v" => 5i64)), None),
        RoutingOutcome::Delivered(s)
    );
    assert_eq!(e.wait_session(s, WAIT), Some(Completion::Success));
    assert_eq!(e.global_access(GlobalAction::Read(var("last"))).unwrap(), Some(Value::Int(5)));
    let c = e.counters();
    assert_eq!((c.submitted, c.created, c.delivered, c.rejected), (3, 1, 1, 1));
}

#[test]
fn unknown_operation_is_rejected() {
    let b = behaviour(serde_json::json!({"receive": {"op": "a"}}));
    let mut spec = EngineSpec::new("u", b);
    spec.accepts = Some(["a".to_owned()].into());
    let e = Engine::start(spec).unwrap();
    assert_eq!(
        e.submit(Message::new("b", State::new()), None),
        RoutingOutcome::Rejected(Fault::new(Fault::UNKNOWN_OPERATION))
    );
}

#[test]
fn request_response_reply_reaches_caller() {
    let b = behaviour(serde_json::json!({"seq": [
        {"receive": {"op": "sum"}},
        {"reply": {"op": "sum", "from": {"r": "x + y"}}}
    ]}));
    let e = Engine::start(EngineSpec::new("calc", b)).unwrap();
    let (tx, rx) = mpsc::channel();
    let mut m = Message::new("sum", state!("x" => 2i64, "y" => 3i64));
    m.expects_reply = true;
    m.request_id = "1".into();
    e.submit(m, Some(Box::new(move |r| tx.send(r).unwrap())));
    assert_eq!(rx.recv_timeout(WAIT).unwrap(), Ok(state!("r" => 5i64)));
}

#[test]
fn sequential_firing_session_goes_first() {
    let root = Activity::from_json(&serde_json::json!({"if": {
        "cond": "defined(x)",
        "then": {"gadd": ["n", "1"]},
        "else": {"seq": [{"assign": ["x", "0"]}, {"receive": {"op": "release"}}]}
    }}))
    .unwrap();
    let b = BehaviourDef::with_defaults(root, Some(true), Some(vec!["go".into()]));
    let log = Arc::new(EventLog::memory());
    let mut spec = EngineSpec::new("seq", b);
    spec.mode = ExecutionMode::Sequential;
    spec.log = log.clone();
    spec.correlation = corr(serde_json::json!({"go": {"x": "x"}, "release": {"x": "x"}}));
    let e = Engine::start(spec).unwrap();
    while e.status(1) != Some(SessionStatus::Blocked) {
        thread::sleep(Duration::from_millis(1));
    }
    let o1 = e.submit(Message::new("go", state!("x" => 1i64)), None);
    let o2 = e.submit(Message::new("go", state!("x" => 2i64)), None);
    assert!(matches!(o1, RoutingOutcome::Queued(_)), "{o1:?}");
    assert!(matches!(o2, RoutingOutcome::Queued(_)), "{o2:?}");
    assert_eq!(e.submit(Message::new("release", state!("x" => 0i64)), None), RoutingOutcome::Delivered(1));
    assert!(e.wait_idle(WAIT));
    let events: Vec<(u64, String)> = log
        .records()
        .iter()
        .filter(|r| r["event"] == "start" || r["event"] == "finish" || r["event"] == "step")
        .map(|r| (r["session"].as_u64().unwrap(), r["event"].as_str().unwrap().to_owned()))
        .collect();
    let mut current = None;
    let mut started = Vec::new();
    for (s, ev) in &events {
        match ev.as_str() {
            "start" => {
                assert_eq!(current, None, "overlap: {events:?}");
                current = Some(*s);
                started.push(*s);
            }
            "step" => assert_eq!(current, Some(*s)),
            _ => current = None,
        }
    }
    assert_eq!(started, vec![1, 2, 3]);
}

#[test]
fn global_add_is_atomic() {
    let b = BehaviourDef::with_defaults(
        Activity::from_json(&serde_json::json!({"seq": [{"receive": {"op": "hit"}}, {"gadd": ["counter", "1"]}]}))
            .unwrap(),
        None,
        None,
    );
    let mut spec = EngineSpec::new("g", b);
    spec.correlation = corr(serde_json::json!({"hit": {"id": "id"}}));
    let e = Engine::start(spec).unwrap();
    for i in 0..100i64 {
        let o = e.submit(Message::new("hit", state!("id" => i)), None);
        assert!(matches!(o, RoutingOutcome::Created(_)), "{o:?}");
    }
    assert!(e.wait_idle(WAIT));
    assert_eq!(e.global_access(GlobalAction::Read(var("counter"))).unwrap(), Some(Value::Int(100)));
    assert_eq!(e.global_access(GlobalAction::Read(var("never"))).unwrap(), None);
    e.global_access(GlobalAction::Write(var("s"), "x".into())).unwrap();
    assert_eq!(
        e.global_access(GlobalAction::Add(var("s"), Value::Int(1))),
        Err(Fault::type_fault())
    );
}

#[test]
fn session_privacy() {
    let b = BehaviourDef::with_defaults(
        Activity::from_json(&serde_json::json!({"seq": [
            {"receive": {"op": "go"}},
            {"if": {"cond": "role == 1", "then": {"assign": ["secret", "42"]},
                    "else": {"if": {"cond": "defined(secret)", "then": {"gwrite": ["seen", "true"]},
                                    "else": {"gwrite": ["seen", "false"]}}}}}
        ]}))
        .unwrap(),
        None,
        None,
    );
    let e = Engine::start(EngineSpec::new("p", b)).unwrap();
    let s1 = e.submit(Message::new("go", state!("role" => 1i64)), None);
    let RoutingOutcome::Created(s1) = s1 else { panic!() };
    e.wait_session(s1, WAIT);
    e.submit(Message::new("go", state!("role" => 2i64)), None);
    assert!(e.wait_idle(WAIT));
    assert_eq!(e.global_access(GlobalAction::Read(var("seen"))).unwrap(), Some(Value::Bool(false)));
}

#[test]
fn stop_terminates_blocked_sessions() {
    let dir = tempfile::tempdir().unwrap();
    let b = behaviour(serde_json::json!({"seq": [
        {"receive": {"op": "a"}},
        {"scope": {"name": "s", "body": {"receive": {"op": "b"}}, "onTerminate": {"sput": ["t", "1"]}}}
    ]}));
    let mut spec = EngineSpec::new("t", b);
    spec.storage = Some(dir.path().join("s.log"));
    let e = Engine::start(spec).unwrap();
    let RoutingOutcome::Created(s) = e.submit(Message::new("a", State::new()), None) else { panic!() };
    while e.status(s) != Some(SessionStatus::Blocked) {
        thread::sleep(Duration::from_millis(1));
    }
    e.global_access(GlobalAction::Write(var("g"), Value::Int(1))).unwrap();
    let report = e.stop(WAIT);
    assert_eq!(report.sessions[&s], Completion::Terminated);
    assert_eq!(e.storage_access(StorageAction::Get("t".into())).unwrap(), Some(Value::Int(1)));
    assert_eq!(e.global_access(GlobalAction::Read(var("g"))).unwrap(), None);
}

#[test]
fn storage_survives_restart_global_does_not() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("store.log");
    let spec = |root: serde_json::Value| {
        let mut s = EngineSpec::new("st", BehaviourDef::with_defaults(Activity::from_json(&root).unwrap(), Some(true), None));
        s.storage = Some(path.clone());
        s
    };
    let e = Engine::start(spec(serde_json::json!({"seq": [{"sput": ["k", "1"]}, {"gwrite": ["g", "1"]}]}))).unwrap();
    assert_eq!(e.wait_session(1, WAIT), Some(Completion::Success));
    e.stop(WAIT);
    drop(e);
    let e = Engine::start(spec(serde_json::json!({"seq": [{"sget": ["k", "k"]}, {"gwrite": ["copy", "k"]}]}))).unwrap();
    assert_eq!(e.wait_session(1, WAIT), Some(Completion::Success));
    assert_eq!(e.global_access(GlobalAction::Read(var("copy"))).unwrap(), Some(Value::Int(1)));
    assert_eq!(e.global_access(GlobalAction::Read(var("g"))).unwrap(), None);
    assert_eq!(e.storage_access(StorageAction::Get("absent".into())).unwrap(), None);
    e.storage_access(StorageAction::Del("k".into())).unwrap();
    assert_eq!(e.storage_access(StorageAction::Get("k".into())).unwrap(), None);
}

use crate::behaviour::Activity;

#[test]
fn stateless_service_answers_every_request() {
    let b = behaviour(serde_json::json!({"seq": [
        {"receive": {"op": "sum"}},
        {"reply": {"op": "sum", "from": {"r": "x + y"}}}
    ]}));
    for mode in [ExecutionMode::Concurrent, ExecutionMode::Sequential] {
        let mut spec = EngineSpec::new("calc", b.clone());
        spec.mode = mode;
        let e = Engine::start(spec).unwrap();
        let (tx, rx) = mpsc::channel();
        for i in 0..200i64 {
            let mut m = Message::new("sum", state!("x" => i, "y" => 1i64));
            m.expects_reply = true;
            m.request_id = i.to_string();
            let tx = tx.clone();
            e.submit(m, Some(Box::new(move |r| tx.send((i, r)).unwrap())));
        }
        for _ in 0..200 {
            let (i, r) = rx.recv_timeout(WAIT).unwrap();
            assert_eq!(r, Ok(state!("r" => i + 1)), "{mode:?}");
        }
    }
}
