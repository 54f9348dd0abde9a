//! One calculator, one client script, four ways of wiring them together.

use std::sync::Arc;

use serde_json::json;

use super::{firing_outcome, global, load, service, service_json};
use crate::composition::{Container, ServiceDef};
use crate::deployment::transport::{Direction, Side};
use crate::deployment::{FrameType, Net};
use crate::error::Error;

const CALC: &str = include_str!("configs/calc.json");
const ECHO: &str = include_str!("configs/echo.json");
const CLIENT: &str = include_str!("configs/calc_client.json");
const ANY_PORT: &str = "socket://127.0.0.1:0";

pub struct Deployment {
    pub name: &'static str,
    /// Response payloads seen by the client, in arrival order; faults as
    /// `fault:<name>`.
    pub responses: Vec<String>,
    /// Socket bytes on the client's side of the system.
    pub socket_bytes: u64,
    pub local_bytes: u64,
    pub client: String,
    pub result: String,
}

fn client(target: &str, resource: Option<&str>) -> Result<ServiceDef, Error> {
    let mut doc = service_json(CLIENT, &[("target", target)])?;
    if let Some(r) = resource {
        doc["outputPorts"][0]["resource"] = json!(r);
    }
    ServiceDef::from_json(&doc)
}

fn calc_server(seed: u64) -> Result<(Container, String), Error> {
    let c = load(vec![service(CALC, &[("calc", ANY_PORT)])?], json!({}), seed, &Net::new())?;
    let at = c.service_location("calc").expect("calc listens").to_string();
    Ok((c, at))
}

fn observe(name: &'static str, x: &Container, net: &Arc<Net>) -> Deployment {
    let outcome = firing_outcome(x, "client");
    let mut traces = net.traces();
    traces.sort_by_key(|t| t.channel);
    let responses = traces
        .iter()
        .filter(|t| t.side == Side::Client)
        .flat_map(|t| t.snapshot())
        .filter(|(d, _)| *d == Direction::Received)
        .map(|(_, f)| match f.kind {
            FrameType::Fault => format!("fault:{}", f.fault.unwrap_or_default()),
            _ => f.payload.to_json_string().unwrap_or_default(),
        })
        .collect();
    Deployment {
        name,
        responses,
        socket_bytes: net.socket_bytes(),
        local_bytes: net.local_bytes(),
        client: outcome,
        result: format!("{} {}", global(x, "client", "result"), global(x, "client", "divByZero")),
    }
}

/// Runs the client script against the calculator composed simply, embedded,
/// behind a redirect, and behind an aggregation, in that order.
pub fn calculator_deployments(seed: u64) -> Result<Vec<Deployment>, Error> {
    let mut out = Vec::new();

    let (_c, at) = calc_server(seed)?;
    let net = Net::recording();
    let x = load(vec![client(&at, None)?], json!({}), seed, &net)?;
    out.push(observe("simple", &x, &net));

    let net = Net::recording();
    let x = load(
        vec![service(CALC, &[("calc", "local://calc")])?, client("local://calc", None)?],
        json!({"embed": ["calc"]}),
        seed,
        &net,
    )?;
    out.push(observe("embedded", &x, &net));

    let (_c, at) = calc_server(seed)?;
    let m = load(Vec::new(), json!({"listen": ANY_PORT, "redirects": {"calc": at}}), seed, &Net::new())?;
    let master = m.master_location().expect("master listens").to_string();
    let net = Net::recording();
    let x = load(vec![client(&master, Some("calc"))?], json!({}), seed, &net)?;
    out.push(observe("redirected", &x, &net));

    let m = load(
        vec![
            service(CALC, &[("calc", "local://calc")])?,
            service(ECHO, &[("echo", "local://echo")])?,
        ],
        json!({
            "listen": ANY_PORT,
            "aggregate": {"publish": ["eval", "echo"], "map": {"eval": "calc", "echo": "echo"}}
        }),
        seed,
        &Net::new(),
    )?;
    let master = m.master_location().expect("master listens").to_string();
    let net = Net::recording();
    let x = load(vec![client(&master, None)?], json!({}), seed, &net)?;
    out.push(observe("aggregated", &x, &net));

    Ok(out)
}
