use orchestra::composition::{Container, ContainerConfig, ContainerOptions, ServiceDef, NO_FIRING_SESSION};
use orchestra::deployment::{Connector, Frame, Location};
use orchestra::{state, Error, State};
use serde_json::{json, Value as Json};

/// A request-response service answering `op(x)` with `{r: expr}`.
fn answering(name: &str, op: &str, expr: &str, location: &str) -> Json {
    json!({
        "name": name,
        "interface": [{"name": op, "kind": "RequestResponse", "request": {"x": "int"}, "response": {"r": "any"}}],
        "behaviour": {"seq": [
            {"receive": {"op": op, "into": "q_"}},
            {"reply": {"op": op, "from": {"r": expr}}}
        ]},
        "inputPorts": [{"name": "in", "location": location, "interface": [op]}]
    })
}

fn load(cfg: Json) -> Result<Container, Error> {
    Container::load(&ContainerConfig::from_json(&cfg)?, ContainerOptions::default())
}

fn call(c: &Container, at: &str, resource: &str, op: &str, x: i64) -> Result<State, String> {
    let connector = Connector::new(c.registry().clone(), c.net().clone());
    let at: Location = at.parse().unwrap();
    let client = connector.client(&at).map_err(|f| f.to_string())?;
    let r = client
        .call_blocking(Frame::request("", op, state!("x" => x)).with_resource(resource))
        .and_then(Frame::into_result)
        .map_err(|f| f.to_string());
    connector.close_all();
    r
}

#[test]
fn a_system_without_firing_sessions_loads_with_a_warning() {
    let c = load(json!({"services": [answering("s", "op", "q_x", "local://s")]})).unwrap();
    assert!(c.warnings().iter().any(|w| w.starts_with(NO_FIRING_SESSION)));
}

#[test]
fn duplicate_redirect_resource_is_rejected() {
    let e = ContainerConfig::parse(r#"{"redirects": {"A": "local://a", "A": "local://b"}}"#).unwrap_err();
    assert_eq!(e.kind(), "ValidationError");
    assert!(ContainerConfig::parse(r#"{"redirects": {"A": "local://a", "B": "local://b"}}"#).is_ok());
}

#[test]
fn embedded_calls_stay_off_the_network() {
    let c = load(json!({"services": [answering("calc", "sum", "q_x + 3", "local://calc")], "embed": ["calc"]})).unwrap();
    assert_eq!(call(&c, "local://calc", "", "sum", 2), Ok(state!("r" => 5i64)));
    assert_eq!(c.net().socket_bytes(), 0);
    assert!(c.net().local_bytes() > 0);
}

#[test]
fn embedding_lifecycle() {
    let c = load(json!({})).unwrap();
    let v1 = ServiceDef::from_json(&answering("calc", "sum", "q_x + 1", "local://{self}")).unwrap();
    let v2 = ServiceDef::from_json(&answering("calc", "sum", "q_x * 10", "local://{self}")).unwrap();
    c.embed(&v1, "calc").unwrap();
    assert!(matches!(c.embed(&v1, "calc"), Err(Error::NameClash(_))));
    assert_eq!(call(&c, "local://calc", "", "sum", 4), Ok(state!("r" => 5i64)));
    c.unembed("calc").unwrap();
    assert_eq!(call(&c, "local://calc", "", "sum", 4), Err("IOFault".into()));
    assert!(matches!(c.unembed("calc"), Err(Error::UnknownService(_))));
    c.embed(&v2, "calc").unwrap();
    assert_eq!(call(&c, "local://calc", "", "sum", 4), Ok(state!("r" => 40i64)));
    let socket = ServiceDef::from_json(&answering("net", "sum", "q_x", "socket://127.0.0.1:0")).unwrap();
    assert!(matches!(c.embed(&socket, "net"), Err(Error::Validation(_))));
}

#[test]
fn storage_survives_re_embedding() {
    let dir = tempfile::tempdir().unwrap();
    let def = ServiceDef::from_json(&json!({
        "name": "counter",
        "interface": [{"name": "inc", "kind": "RequestResponse", "response": {"r": "int"}}],
        "engine": {"storage": "counter.log"},
        "behaviour": {"seq": [
            {"receive": {"op": "inc"}},
            {"sget": ["n", "n"]},
            {"if": {"cond": "defined(n)", "then": {"assign": ["n", "n + 1"]}, "else": {"assign": ["n", "1"]}}},
            {"sput": ["n", "n"]},
            {"reply": {"op": "inc", "from": {"r": "n"}}}
        ]},
        "inputPorts": [{"name": "in", "location": "local://{self}", "interface": ["inc"]}]
    }))
    .unwrap();
    let opts = ContainerOptions {
        storage_dir: Some(dir.path().to_owned()),
        ..ContainerOptions::default()
    };
    let c = Container::load(&ContainerConfig::from_json(&json!({})).unwrap(), opts).unwrap();
    c.embed(&def, "counter").unwrap();
    assert_eq!(call(&c, "local://counter", "", "inc", 0), Ok(state!("r" => 1i64)));
    c.unembed("counter").unwrap();
    c.embed(&def, "counter").unwrap();
    assert_eq!(call(&c, "local://counter", "", "inc", 0), Ok(state!("r" => 2i64)));
}

fn redirecting_master() -> Container {
    load(json!({
        "services": [
            answering("A", "who", "'A'", "local://A"),
            answering("B", "who", "'B'", "local://B"),
            answering("C", "who", "'C'", "local://C")
        ],
        "listen": "socket://127.0.0.1:0",
        "redirects": {"A": "local://A", "B": "local://B", "C": "local://C"}
    }))
    .unwrap()
}

#[test]
fn redirects_reach_only_the_named_service() {
    let m = redirecting_master();
    let at = m.master_location().unwrap().to_string();
    for name in ["A", "B", "C"] {
        assert_eq!(call(&m, &at, name, "who", 0), Ok(state!("r" => name)));
    }
    assert_eq!(call(&m, &at, "D", "who", 0), Err("UnknownResource".into()));
    m.set_redirect("A", "local://C".parse().unwrap(), None);
    assert_eq!(call(&m, &at, "A", "who", 0), Ok(state!("r" => "C")));
    assert!(m.net().socket_bytes() > 0);
}

#[test]
fn aggregation_routes_by_operation() {
    let m = load(json!({
        "services": [
            answering("a", "op1", "q_x + 1", "local://a"),
            answering("b", "op2", "q_x + 2", "local://b")
        ],
        "listen": "socket://127.0.0.1:0",
        "aggregate": {"map": {"op1": "a", "op2": "b"}}
    }))
    .unwrap();
    let at = m.master_location().unwrap().to_string();
    assert_eq!(call(&m, &at, "", "op1", 10), Ok(state!("r" => 11i64)));
    assert_eq!(call(&m, &at, "", "op2", 10), Ok(state!("r" => 12i64)));
    assert_eq!(call(&m, &at, "", "op1", 0), Ok(state!("r" => 1i64)));
    assert_eq!(call(&m, &at, "", "op3", 0), Err("UnknownOperation".into()));
    let names: Vec<String> = m.aggregation().unwrap().interface.names().map(str::to_owned).collect();
    assert_eq!(names, ["op1", "op2"]);
}

#[test]
fn clashing_aggregate_interfaces_fail_loudly() {
    let mut b = answering("b", "op2", "q_x", "local://b");
    b["interface"].as_array_mut().unwrap().push(json!({"name": "op1", "kind": "OneWay", "request": {"x": "int"}}));
    b["inputPorts"][0]["interface"] = json!(["op1", "op2"]);
    let e = load(json!({
        "services": [answering("a", "op1", "q_x", "local://a"), b],
        "listen": "socket://127.0.0.1:0",
        "aggregate": {"map": {"op1": "a", "op2": "b"}}
    }))
    .err()
    .unwrap();
    assert!(e.to_string().contains("InterfaceClash"), "{e}");
}

#[test]
fn two_containers_over_sockets() {
    let b = load(json!({"services": [answering("calc", "sum", "q_x + 1", "socket://127.0.0.1:0")]})).unwrap();
    let at = b.service_location("calc").unwrap().to_string();
    let a = load(json!({
        "services": [{
            "name": "client",
            "interface": [{"name": "sum", "kind": "SolicitResponse", "request": {"x": "int"}, "response": {"r": "int"}}],
            "behaviour": {"seq": [
                {"solicit": {"port": "calc", "op": "sum", "payload": {"x": "41"}, "into": "s_"}},
                {"gwrite": ["r", "s_r"]}
            ]},
            "outputPorts": [{"name": "calc", "location": at, "interface": ["sum"]}]
        }]
    }))
    .unwrap();
    assert!(a.warnings().is_empty());
    let e = a.engine("client").unwrap();
    let id = e.firing_session().unwrap();
    assert_eq!(e.wait_session(id, std::time::Duration::from_secs(5)).unwrap().to_string(), "success");
    let r = e
        .global_access(orchestra::behaviour::interp::GlobalAction::Read(orchestra::VarName::new("r").unwrap()))
        .unwrap();
    assert_eq!(r, Some(orchestra::Value::Int(42)));
}
