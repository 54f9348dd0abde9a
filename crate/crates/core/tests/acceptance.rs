//! Acceptance suite: one PASS/FAIL line per criterion.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::{BufRead, BufReader, Write};
use std::panic::{self, AssertUnwindSafe};
use std::sync::mpsc;
use std::time::{Duration, Instant};

use orchestra::behaviour::interp::{GlobalAction, StorageAction};
use orchestra::behaviour::{BehaviourDef, Completion, Message};
use orchestra::correlation::{bind_correlation, correlates, select_session, CorrelationConfig, CorrelationFunction};
use orchestra::demos::{calculator_deployments, deadlock_once, Demo};
use orchestra::deployment::{decode_frame, encode_frame, memnet_pair, Client, Frame, FrameType, Net};
use orchestra::engine::{Engine, EngineSpec, ExecutionMode, Quiescence};
use orchestra::harness::{check_traces, enumerate_interleavings, oracle_correlates, run_seeded, OracleConfig};
use orchestra::{state, State, Value, VarName};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

type Check = fn() -> Result<String, String>;

const WAIT: Duration = Duration::from_secs(5);

fn main() {
    let criteria: [(&str, Check); 9] = [
        ("routing predicate agrees with the oracle", routing_oracle),
        ("state algebra", state_algebra),
        ("session identification", session_identification),
        ("state lifetimes", lifetimes),
        ("sequential vs concurrent execution", sequential_vs_concurrent),
        ("wire protocol", wire_protocol),
        ("composition transparency", composition_transparency),
        ("pattern demos", pattern_demos),
        ("fault semantics", fault_semantics),
    ];
    panic::set_hook(Box::new(|_| {}));
    let started = Instant::now();
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let result = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| (*s).to_owned()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let ms = t.elapsed().as_millis();
        match result {
            Ok(detail) => println!("criterion {}: PASS {name}: {detail} ({ms} ms)", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {}: FAIL {name}: {why} ({ms} ms)", i + 1);
            }
        }
        let _ = std::io::stdout().flush();
    }
    println!(
        "acceptance: {} passed, {failed} failed in {:.1} s",
        criteria.len() - failed,
        started.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}

fn ensure(ok: bool, why: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(why())
    }
}

fn var(x: &str) -> VarName {
    VarName::new(x).unwrap()
}

fn routing_oracle() -> Result<String, String> {
    let cfg = OracleConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let n = 10_000;
    let mut matched = 0;
    for i in 0..n {
        let t = cfg.triple(&mut rng);
        let expected = oracle_correlates(&t.payload, &t.function, &t.cset, &t.state);
        let m = Message::new("op", t.payload.clone());
        let f = CorrelationFunction::new(t.function.iter().map(|(a, b)| (var(a), var(b)))).unwrap();
        let cset: BTreeSet<VarName> = t.cset.iter().map(|x| var(x)).collect();
        let direct = correlates(&m, &f, &cset, &t.state);
        // the rest of the correlation set comes from another operation
        let rest: Vec<(VarName, VarName)> = t
            .cset
            .iter()
            .filter(|x| !t.function.values().any(|v| v == *x))
            .map(|x| (var(x), var(x)))
            .collect();
        let config = CorrelationConfig::new(BTreeMap::from([
            ("op".to_owned(), f),
            ("other".to_owned(), CorrelationFunction::new(rest).unwrap()),
        ]));
        ensure(config.cset() == &cset, || format!("triple {i}: correlation set {:?} != {cset:?}", config.cset()))?;
        let via_config = config.correlates(&m, &t.state);
        ensure(direct == expected && via_config == expected, || {
            format!("triple {i} disagrees: oracle {expected}, correlates {direct}, config {via_config}: {t:?}")
        })?;
        matched += usize::from(expected);
    }
    Ok(format!("{n} triples, 0 disagreements, {matched} correlating"))
}

fn random_value(rng: &mut ChaCha8Rng) -> Value {
    match rng.gen_range(0..7) {
        0 => Value::Int(rng.gen_range(0..3)),
        1 => Value::Str(["", "a", "b"][rng.gen_range(0..3)].to_owned()),
        2 => Value::Bool(rng.gen()),
        3 => Value::Double([0.0, -0.0, 1.5][rng.gen_range(0..3)]),
        4 => Value::Double(f64::NAN),
        5 => Value::Int(1),
        _ => Value::Double(1.0),
    }
}

fn random_state(rng: &mut ChaCha8Rng) -> State {
    let mut s = State::new();
    for x in ["a", "b", "c", "d", "e"] {
        if rng.gen_bool(0.5) {
            s.set(var(x), random_value(rng));
        }
    }
    s
}

fn state_algebra() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let n = 1_000;
    let empty = State::new();
    let mut equal_pairs = 0;
    for i in 0..n {
        let (a, b, c) = (random_state(&mut rng), random_state(&mut rng), random_state(&mut rng));
        // small pool, so some triples repeat a state
        let c = if i % 10 == 0 { a.clone() } else { c };
        let ab = a.compose(&b);
        ensure(ab.compose(&c) == a.compose(&b.compose(&c)), || format!("triple {i}: not associative"))?;
        ensure(a.compose(&empty) == a && empty.compose(&a) == a, || format!("triple {i}: identity fails"))?;
        for x in ["a", "b", "c", "d", "e"] {
            let want = a.lookup(x).or_else(|| b.lookup(x));
            ensure(ab.lookup(x) == want, || format!("triple {i}: not left-biased at {x}"))?;
        }
        ensure(ab.len() == a.domain().chain(b.domain()).collect::<BTreeSet<_>>().len(), || {
            format!("triple {i}: domain is not the union")
        })?;
        ensure(a == a.clone() && b == b.clone() && c == c.clone(), || format!("triple {i}: equality not reflexive"))?;
        for (x, y) in [(&a, &b), (&b, &c), (&a, &c)] {
            let (xy, yx) = (x == y, y == x);
            ensure(xy == yx, || format!("triple {i}: equality not symmetric"))?;
        }
        ensure(!(a == b && b == c) || a == c, || format!("triple {i}: equality not transitive"))?;
        equal_pairs += usize::from(a == c);
    }
    let zeros = state!("x" => 0.0f64) == state!("x" => -0.0f64);
    let nan = state!("x" => f64::NAN) == state!("x" => f64::NAN);
    let cross = state!("x" => 1i64) == state!("x" => 1.0f64);
    ensure(!zeros && nan && !cross, || "bitwise double equality or cross-type equality is wrong".into())?;
    Ok(format!("{n} triples, {equal_pairs} with equal states"))
}

fn session_identification() -> Result<String, String> {
    // Two sessions whose correlation projections agree cannot be told apart.
    let cfg = CorrelationConfig::from_json(&json!({"open": {"user": "u"}, "put": {"token": "t", "user": "u"}})).unwrap();
    let cset = cfg.cset().clone();
    let s1 = state!("u" => "ann", "cart" => 3i64);
    let s2 = state!("u" => "ann", "cart" => 9i64, "note" => "x");
    ensure(s1.project(&cset) == s2.project(&cset), || "projections differ".into())?;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for i in 0..10 {
        let mut p = State::new();
        if rng.gen_bool(0.7) {
            p.set(var("user"), Value::from(["ann", "bob"][rng.gen_range(0..2)]));
        }
        if rng.gen_bool(0.7) {
            p.set(var("token"), Value::from(["t1", "t2"][rng.gen_range(0..2)]));
        }
        p.set(var("v"), Value::Int(i));
        let m = Message::new(["open", "put"][rng.gen_range(0..2)], p);
        let (r1, r2) = (cfg.correlates(&m, &s1), cfg.correlates(&m, &s2));
        ensure(r1 == r2, || format!("probe {i} tells the sessions apart"))?;
        let pick = select_session(&m, &[(1, s1.clone()), (2, s2.clone())], &cfg, 5);
        ensure(pick.is_some() == r1, || format!("probe {i}: selection disagrees with the predicate"))?;
    }

    // Binding distinct tokens separates them.
    let put = cfg.function("put").clone();
    let bound = [
        bind_correlation(&Message::new("put", state!("token" => "t1")), &put, &cset, &s1),
        bind_correlation(&Message::new("put", state!("token" => "t2")), &put, &cset, &s2),
    ];
    let candidates = [(1, bound[0].clone()), (2, bound[1].clone())];
    let order = interleaving(&mut rng);
    for (i, &k) in order.iter().enumerate() {
        let tok = ["t1", "t2"][k];
        let m = Message::new("put", state!("token" => tok, "user" => "ann", "v" => i as i64));
        let pick = select_session(&m, &candidates, &cfg, i as u64);
        ensure(pick == Some(k as u64 + 1), || format!("message {i} with {tok} went to {pick:?}"))?;
    }

    // The same through a running engine.
    let e = token_engine();
    let opened: Vec<u64> = ["t1", "t2"]
        .iter()
        .map(|t| e.submit(Message::new("open", state!("token" => *t)), None).session().unwrap())
        .collect();
    for (i, &k) in order.iter().enumerate() {
        let tok = ["t1", "t2"][k];
        let got = e.submit(Message::new("put", state!("token" => tok, "v" => i as i64)), None);
        ensure(got.session() == Some(opened[k]), || format!("engine routed message {i} with {tok} to {got:?}"))?;
    }
    ensure(e.wait_idle(WAIT), || "sessions did not finish".into())?;
    for (t, id) in ["t1", "t2"].iter().zip(&opened) {
        ensure(e.completion(*id) == Some(Completion::Success), || format!("session {t}: {:?}", e.completion(*id)))?;
    }
    let strays = e.global_access(GlobalAction::Read(var("stray"))).unwrap();
    ensure(strays.is_none(), || "a session received a foreign token".into())?;
    Ok(format!("10 probes, {} interleaved messages routed by token", order.len()))
}

/// Fifty of each session index in a random order.
fn interleaving(rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut order: Vec<usize> = (0..100).map(|i| i % 2).collect();
    for i in (1..order.len()).rev() {
        order.swap(i, rng.gen_range(0..=i));
    }
    order
}

fn token_engine() -> Engine {
    let b = BehaviourDef::parse(&json!({"seq": [
        {"receive": {"op": "open", "into": "o_"}},
        {"assign": ["n", "0"]},
        {"while": {"cond": "n < 50", "body": {"seq": [
            {"receive": {"op": "put", "into": "p_"}},
            {"if": {"cond": "p_token != o_token", "then": {"gwrite": ["stray", "p_token"]}}},
            {"assign": ["n", "n + 1"]}
        ]}}}
    ]}))
    .unwrap();
    let mut spec = EngineSpec::new("tokens", b);
    spec.correlation = CorrelationConfig::from_json(&json!({"open": {"token": "tok"}, "put": {"token": "tok"}})).unwrap();
    spec.mode = ExecutionMode::Concurrent;
    Engine::start(spec).unwrap()
}

fn lifetimes() -> Result<String, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("tiers.log");
    let start = || {
        let b = BehaviourDef::parse(&json!({"seq": [
            {"receive": {"op": "go", "into": "m_"}},
            {"if": {"cond": "m_role == 'writer'",
                    "then": {"seq": [{"assign": ["secret", "42"]}, {"gwrite": ["shared", "7"]}, {"sput": ["kept", "m_role"]}]},
                    "else": {"seq": [
                        {"if": {"cond": "defined(secret)", "then": {"gwrite": ["leak", "secret"]}}},
                        {"gread": ["shared", "g"]},
                        {"if": {"cond": "defined(g)", "then": {"gwrite": ["seen", "g"]}}}
                    ]}}}
        ]}))
        .unwrap();
        let mut spec = EngineSpec::new("tiers", b);
        spec.storage = Some(path.clone());
        Engine::start(spec).unwrap()
    };
    let go = |e: &Engine, role: &str| {
        let id = e.submit(Message::new("go", state!("role" => role)), None).session().unwrap();
        e.wait_session(id, WAIT)
    };
    let read = |e: &Engine, x: &str| e.global_access(GlobalAction::Read(var(x))).unwrap();
    let exotic = [
        ("min", Value::Int(i64::MIN)),
        ("third", Value::Double(0.1 + 0.2)),
        ("negzero", Value::Double(-0.0)),
        ("tiny", Value::Double(f64::from_bits(1))),
        ("text", Value::from("quote \" slash \\ line\n tab\t é ✓")),
        ("flag", Value::Bool(false)),
    ];

    let e = start();
    ensure(go(&e, "writer") == Some(Completion::Success), || "writer failed".into())?;
    ensure(go(&e, "reader") == Some(Completion::Success), || "reader failed".into())?;
    ensure(read(&e, "leak").is_none(), || "local state leaked across sessions".into())?;
    ensure(read(&e, "seen") == Some(Value::Int(7)), || "global state did not outlive its session".into())?;
    for (k, v) in &exotic {
        e.storage_access(StorageAction::Put((*k).to_owned(), v.clone())).unwrap();
    }
    e.stop(WAIT);
    drop(e);

    let e = start();
    ensure(read(&e, "shared").is_none(), || "global state survived a restart".into())?;
    ensure(go(&e, "reader") == Some(Completion::Success), || "reader failed after restart".into())?;
    ensure(read(&e, "seen").is_none(), || "reader saw global state from before the restart".into())?;
    let kept = e.storage_access(StorageAction::Get("kept".into())).unwrap();
    ensure(kept == Some(Value::from("writer")), || format!("storage lost the session's put: {kept:?}"))?;
    for (k, v) in &exotic {
        let got = e.storage_access(StorageAction::Get((*k).to_owned())).unwrap();
        let same = match (&got, v) {
            (Some(Value::Double(a)), Value::Double(b)) => a.to_bits() == b.to_bits(),
            (Some(a), b) => a == b,
            _ => false,
        };
        ensure(same, || format!("storage changed {k}: {got:?} != {v:?}"))?;
    }
    Ok(format!("local private, global per engine run, {} storage values bit-exact", exotic.len() + 1))
}

fn sequential_vs_concurrent() -> Result<String, String> {
    let seeds: Vec<u64> = (0..20).collect();
    let runs: Vec<(String, u64, Quiescence, Duration)> = std::thread::scope(|s| {
        let handles: Vec<_> = ["sequential", "concurrent"]
            .iter()
            .flat_map(|mode| seeds.iter().map(move |seed| (*mode, *seed)))
            .map(|(mode, seed)| {
                s.spawn(move || {
                    let (q, took) = deadlock_once(mode, seed, &Net::new()).expect("deadlock config loads");
                    (mode.to_owned(), seed, q, took)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("run")).collect()
    });
    let mut slowest = [Duration::ZERO; 2];
    for (mode, seed, q, took) in &runs {
        let (want, slot) = if mode == "sequential" { (Quiescence::Deadlock, 0) } else { (Quiescence::Idle, 1) };
        ensure(*q == want, || format!("{mode} seed {seed}: {q:?}"))?;
        ensure(*took < Duration::from_secs(2), || format!("{mode} seed {seed}: took {took:?}"))?;
        slowest[slot] = slowest[slot].max(*took);
    }
    Ok(format!(
        "20 seeds per mode; deadlock reported within {} ms, concurrent done within {} ms",
        slowest[0].as_millis(),
        slowest[1].as_millis()
    ))
}

fn random_text(rng: &mut ChaCha8Rng) -> String {
    const ALPHABET: &[char] = &['a', 'Z', '0', ' ', '"', '\\', '/', '\n', '\t', '\u{1}', 'é', '✓', '😀', '{', ':'];
    (0..rng.gen_range(0..8)).map(|_| ALPHABET[rng.gen_range(0..ALPHABET.len())]).collect()
}

fn random_frame(rng: &mut ChaCha8Rng) -> Frame {
    let mut payload = State::new();
    for i in 0..rng.gen_range(0..5) {
        let v = match rng.gen_range(0..4) {
            0 => Value::Str(random_text(rng)),
            1 => Value::Int(rng.gen()),
            2 => Value::Bool(rng.gen()),
            _ => loop {
                let d = f64::from_bits(rng.gen());
                if d.is_finite() {
                    break Value::Double(d);
                }
            },
        };
        payload.set(var(&format!("f{i}")), v);
    }
    let kind = [FrameType::Request, FrameType::Response, FrameType::Fault][rng.gen_range(0..3)];
    Frame {
        id: random_text(rng),
        kind,
        operation: random_text(rng),
        resource: random_text(rng),
        payload,
        fault: (kind == FrameType::Fault).then(|| random_text(rng)),
    }
}

fn wire_protocol() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let n = 10_000;
    for i in 0..n {
        let f = random_frame(&mut rng);
        let bytes = encode_frame(&f).map_err(|e| format!("frame {i}: {e}"))?;
        ensure(bytes.iter().filter(|b| **b == b'\n').count() == 1, || format!("frame {i} is not one line"))?;
        let back = decode_frame(&bytes).map_err(|e| format!("frame {i}: {e}"))?;
        ensure(back == f, || format!("frame {i} changed: {f:?} -> {back:?}"))?;
    }

    let mut traces = Vec::new();
    for d in Demo::ALL {
        let run = d.run(7).map_err(|e| format!("{d}: {e}"))?;
        traces.extend(run.traces);
    }
    let checked = check_traces(&traces)?;
    ensure(checked > 0, || "the demos recorded no connections".into())?;

    out_of_order_responses()?;
    Ok(format!("{n} frames round-trip, {checked} demo connections keep id discipline, out-of-order matching holds"))
}

/// A server answering a batch of requests in reverse order; each caller
/// still gets its own answer.
fn out_of_order_responses() -> Result<(), String> {
    let (client_end, server_end) = memnet_pair();
    let net = Net::new();
    let client = Client::from_conn(client_end.into_conn(net.next_channel()), &net, "mem".into());
    let server = std::thread::spawn(move || {
        let mut reader = BufReader::new(server_end.reader);
        let mut writer = server_end.writer;
        let mut batch = Vec::new();
        for _ in 0..5 {
            let mut line = String::new();
            reader.read_line(&mut line).unwrap();
            batch.push(decode_frame(line.as_bytes()).unwrap());
        }
        for req in batch.iter().rev() {
            let reply = if req.payload.lookup("x") == Some(&Value::Int(3)) {
                Frame::fault(req.id.clone(), req.operation.clone(), "Odd")
            } else {
                Frame::response(req.id.clone(), req.operation.clone(), req.payload.clone())
            };
            writer.write_all(&encode_frame(&reply).unwrap()).unwrap();
        }
        writer.flush().unwrap();
    });
    let (tx, rx) = mpsc::channel();
    for x in 0..5i64 {
        let tx = tx.clone();
        client
            .call(
                Frame::request("", "echo", state!("x" => x)),
                Some(Box::new(move |r| tx.send((x, r)).unwrap())),
            )
            .map_err(|f| f.to_string())?;
    }
    let mut seen = Vec::new();
    for _ in 0..5 {
        let (x, r) = rx.recv_timeout(WAIT).map_err(|_| "a response never arrived".to_owned())?;
        let r = r.and_then(Frame::into_result);
        let want = if x == 3 { Err("Odd".to_owned()) } else { Ok(state!("x" => x)) };
        ensure(r.clone().map_err(|f| f.to_string()) == want, || format!("call {x} got {r:?}"))?;
        seen.push(x);
    }
    server.join().map_err(|_| "server panicked".to_owned())?;
    ensure(seen == [4, 3, 2, 1, 0], || format!("responses arrived as {seen:?}"))
}

fn composition_transparency() -> Result<String, String> {
    let runs = calculator_deployments(7).map_err(|e| e.to_string())?;
    let reference = &runs[0];
    ensure(!reference.responses.is_empty(), || "no responses recorded".into())?;
    for d in &runs {
        ensure(d.client == "success", || format!("{}: client ended with {}", d.name, d.client))?;
        ensure(d.responses == reference.responses, || {
            format!("{} answered {:?}, {} answered {:?}", reference.name, reference.responses, d.name, d.responses)
        })?;
        ensure(d.result == reference.result, || format!("{}: result {}", d.name, d.result))?;
    }
    let embedded = runs.iter().find(|d| d.name == "embedded").ok_or("no embedded deployment")?;
    ensure(embedded.socket_bytes == 0 && embedded.local_bytes > 0, || {
        format!("embedded: {} socket bytes, {} local bytes", embedded.socket_bytes, embedded.local_bytes)
    })?;
    let names: Vec<&str> = runs.iter().map(|d| d.name).collect();
    Ok(format!(
        "{} identical responses across {}; embedded used 0 socket bytes",
        reference.responses.len(),
        names.join("/")
    ))
}

fn pattern_demos() -> Result<String, String> {
    let demos = [Demo::RrVsCallback, Demo::Web, Demo::SlaveMobility, Demo::MasterMobility, Demo::Sos];
    for d in demos {
        for seed in [1, 2, 3] {
            let run = d.run(seed).map_err(|e| format!("{d} seed {seed}: {e}"))?;
            ensure(run.passed(), || format!("{d} seed {seed}:\n{}", run.diff()))?;
            check_traces(&run.traces).map_err(|e| format!("{d} seed {seed}: {e}"))?;
        }
    }
    Ok(format!("{} demos x 3 seeds match their transcripts", demos.len()))
}

fn fault_semantics() -> Result<String, String> {
    let behaviours = [
        (
            "fault in parallel terminates a sibling scope",
            json!({"scope": {"name": "outer", "faults": {"F": {"assign": ["h", "1"]}}, "body": {"par": [
                {"seq": [{"assign": ["a", "1"]}, {"throw": "F"}]},
                {"scope": {"name": "in", "body": {"seq": [{"assign": ["x", "1"]}, {"assign": ["x", "2"]}]},
                           "onTerminate": {"assign": ["t", "x"]}}}
            ]}}}),
            vec![],
        ),
        (
            "unhandled fault",
            json!({"par": [{"throw": "F"}, {"seq": [{"assign": ["a", "1"]}, {"assign": ["b", "2"]}]}]}),
            vec![],
        ),
        (
            "fault inside a termination handler",
            json!({"scope": {"name": "outer", "faults": {"F": {"assign": ["h", "1"]}}, "body": {"par": [
                {"throw": "F"},
                {"scope": {"name": "in", "body": {"seq": [{"assign": ["x", "1"]}, {"assign": ["x", "2"]}]},
                           "onTerminate": {"throw": "X"}}}
            ]}}}),
            vec![],
        ),
        (
            "rethrow from a fault handler",
            json!({"scope": {"name": "outer", "faults": {"G": {"assign": ["g", "1"]}}, "body": {"par": [
                {"scope": {"name": "in", "body": {"throw": "F"}, "faults": {"F": {"throw": "G"}}}},
                {"assign": ["y", "1"]}
            ]}}}),
            vec![],
        ),
        (
            "compensation of parallel scopes",
            json!({"scope": {"name": "main", "faults": {"F": {"compensate": "step"}}, "body": {"seq": [
                {"assign": ["log", "''"]},
                {"par": [
                    {"scope": {"name": "step", "body": "nil", "onCompensate": {"assign": ["log", "log + 'a'"]}}},
                    {"scope": {"name": "step", "body": "nil", "onCompensate": {"assign": ["log", "log + 'b'"]}}}
                ]},
                {"throw": "F"}
            ]}}}),
            vec![],
        ),
        (
            "received message drives a scope",
            json!({"seq": [
                {"receive": {"op": "go", "into": "m_"}},
                {"scope": {"name": "s", "faults": {"DivisionByZero": {"assign": ["r", "-1"]}},
                           "body": {"par": [{"assign": ["r", "10 / m_d"]}, {"assign": ["seen", "m_d"]}]}}}
            ]}),
            vec![Message::new("go", state!("d" => 0i64))],
        ),
    ];
    let mut outcomes = 0;
    for (name, doc, trace) in &behaviours {
        let b = BehaviourDef::parse(doc).map_err(|e| format!("{name}: {e}"))?;
        let all = enumerate_interleavings(&b, trace, 20).map_err(|e| format!("{name}: {e}"))?;
        for seed in 0..50 {
            let (o, _) = run_seeded(&b, trace, seed, 20).map_err(|e| format!("{name}: {e}"))?;
            ensure(all.contains(&o), || format!("{name}: seed {seed} reached {o:?} outside {all:?}"))?;
        }
        outcomes += all.len();
    }
    let chain = compensation_chain()?;
    Ok(format!(
        "{} behaviours, {outcomes} reachable outcomes, 50 seeded runs each inside them; {chain}",
        behaviours.len()
    ))
}

/// Three scopes completing in sequence are compensated in reverse order,
/// and in parallel the order still mirrors completion.
fn compensation_chain() -> Result<String, String> {
    let step = |tag: &str| {
        json!({"scope": {"name": "step",
            "body": {"assign": ["done", format!("done + '{tag}'")]},
            "onCompensate": {"assign": ["log", format!("log + '{tag}'")]}}})
    };
    let chain = |body: serde_json::Value| {
        json!({"scope": {"name": "main", "faults": {"F": {"compensate": "step"}}, "body": {"seq": [
            {"assign": ["log", "''"]}, {"assign": ["done", "''"]}, body, {"throw": "F"}
        ]}}})
    };
    let sequential = chain(json!({"seq": [step("a"), step("b"), step("c")]}));
    let parallel = chain(json!({"par": [step("a"), step("b"), step("c")]}));
    let mut orders = HashSet::new();
    for (name, doc, budget) in [("sequential", sequential, 40), ("parallel", parallel, 40)] {
        let b = BehaviourDef::parse(&doc).map_err(|e| e.to_string())?;
        let all = enumerate_interleavings(&b, &[], budget).map_err(|e| format!("{name} chain: {e}"))?;
        for o in &all {
            ensure(o.completion == Completion::Success, || format!("{name} chain: {:?}", o.completion))?;
            let text = |x: &str| o.local.lookup(x).and_then(Value::as_str).unwrap_or_default().to_owned();
            let reversed: String = text("done").chars().rev().collect();
            ensure(text("log") == reversed, || {
                format!("{name} chain compensated {:?} after completing {:?}", text("log"), text("done"))
            })?;
            orders.insert(text("log"));
        }
        if name == "sequential" {
            ensure(all.len() == 1 && orders.contains("cba"), || format!("sequential chain gave {orders:?}"))?;
        }
    }
    Ok(format!("3-scope chains compensate in reverse completion order ({} orders seen)", orders.len()))
}
