use std::net::TcpListener;
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde_json::json;

use super::{firing_outcome, global, load, repository, service, socket, Caller};
use crate::deployment::transport::Side;
use crate::deployment::{Location, Net};
use crate::engine::{watch, Quiescence};
use crate::error::Error;
use crate::state;
use crate::state::State;

/// `n` distinct loopback ports, all held until every one is chosen.
fn ports<const N: usize>() -> Result<[String; N], Error> {
    let held = (0..N)
        .map(|_| TcpListener::bind("127.0.0.1:0"))
        .collect::<Result<Vec<_>, _>>()?;
    let mut out: [String; N] = std::array::from_fn(|_| String::new());
    for (slot, l) in out.iter_mut().zip(&held) {
        *slot = socket(l.local_addr()?.port());
    }
    Ok(out)
}

fn loc(s: &str) -> Location {
    s.parse().expect("demo location")
}

fn shown(r: Result<State, String>, field: &str) -> String {
    match r {
        Ok(p) => p.lookup(field).map_or_else(|| "undefined".into(), |v| v.to_string()),
        Err(f) => f,
    }
}

pub(super) fn rr_vs_callback(seed: u64, net: &Arc<Net>) -> Result<Vec<String>, Error> {
    let [quote, asynch, client] = ports::<3>()?;
    let vars = [("quote", quote.as_str()), ("async", asynch.as_str()), ("client", client.as_str())];
    let _server = load(
        vec![
            service(include_str!("configs/quote.json"), &vars)?,
            service(include_str!("configs/quote_async.json"), &vars)?,
        ],
        json!({}),
        seed,
        net,
    )?;
    let buyer = load(vec![service(include_str!("configs/rr_client.json"), &vars)?], json!({}), seed, net)?;
    let done = firing_outcome(&buyer, "buyer");
    let on_request_conn = net
        .traces()
        .iter()
        .filter(|t| t.side == Side::Client && t.peer == quote)
        .flat_map(|t| t.snapshot())
        .filter(|(_, f)| f.operation == "priceResult")
        .count();
    Ok(vec![
        format!("request-response: price(book) = {}", global(&buyer, "buyer", "rr")),
        format!(
            "callback: priceResult(book) = {} for ticket {}",
            global(&buyer, "buyer", "cb"),
            global(&buyer, "buyer", "cbTicket")
        ),
        format!("callback frames on the request connection: {on_request_conn}"),
        format!("buyer: {done}"),
    ])
}

pub(super) fn web(seed: u64, net: &Arc<Net>) -> Result<Vec<String>, Error> {
    let [shop] = ports::<1>()?;
    let _c = load(
        vec![service(include_str!("configs/shop.json"), &[("shop", &shop)])?],
        json!({}),
        seed,
        net,
    )?;
    let at = loc(&shop);
    let (alice, bob) = (Caller::new(net), Caller::new(net));
    let get = |c: &Caller, user: &str| shown(c.call(&at, "", "get", state!("user" => user)), "token");
    let post = |c: &Caller, token: &str, item: &str| match c.call(&at, "", "post", state!("token" => token, "item" => item)) {
        Ok(p) => format!("{}/{}", shown(Ok(p.clone()), "user"), shown(Ok(p), "item")),
        Err(f) => f,
    };
    let ta = get(&alice, "alice");
    let tb = get(&bob, "bob");
    Ok(vec![
        format!("alice GET -> {ta}"),
        format!("bob GET -> {tb}"),
        format!("bob POST pear -> {}", post(&bob, &tb, "pear")),
        format!("alice POST apple -> {}", post(&alice, &ta, "apple")),
        format!("alice POST again -> {}", post(&alice, &ta, "plum")),
        format!("POST with unknown token -> {}", post(&bob, "tok99", "fig")),
    ])
}

pub(super) fn slave_mobility(seed: u64, net: &Arc<Net>) -> Result<Vec<String>, Error> {
    let [repo] = ports::<1>()?;
    let doubler = service(include_str!("configs/doubler.json"), &[])?;
    let _r = load(vec![repository(&repo, &[("doubler", &doubler)])?], json!({}), seed, net)?;
    let m = load(
        vec![service(include_str!("configs/slave_master.json"), &[("repository", &repo)])?],
        json!({}),
        seed,
        net,
    )?;
    let done = firing_outcome(&m, "master");
    let embedded = global(&m, "master", "embedded") == "true";
    Ok(vec![
        format!(
            "master {} doubler from the repository",
            if embedded { "embedded" } else { "did not embed" }
        ),
        format!("double(21) = {}", global(&m, "master", "answer")),
        format!("after unembed: {}", global(&m, "master", "afterUnembed")),
        format!("master: {done}"),
    ])
}

pub(super) fn master_mobility(seed: u64, net: &Arc<Net>) -> Result<Vec<String>, Error> {
    let [repo, adder] = ports::<2>()?;
    let workflow = service(include_str!("configs/workflow.json"), &[("adder", &adder)])?;
    let _r = load(vec![repository(&repo, &[("workflow", &workflow)])?], json!({}), seed, net)?;
    let a = load(
        vec![service(include_str!("configs/adder.json"), &[("adder", &adder)])?],
        json!({}),
        seed,
        net,
    )?;
    let w = load(
        vec![service(include_str!("configs/worker.json"), &[("repository", &repo)])?],
        json!({}),
        seed,
        net,
    )?;
    let done = firing_outcome(&w, "worker");
    let embedded = global(&w, "worker", "embedded") == "true";
    let adds = a.engine("adder").map_or(0, |e| e.counters().submitted);
    Ok(vec![
        format!(
            "worker {} flow from the repository",
            if embedded { "embedded" } else { "did not embed" }
        ),
        format!("run(5) = {}", global(&w, "worker", "answer")),
        format!("adder requests: {adds}"),
        format!("worker: {done}"),
    ])
}

pub(super) fn sos(seed: u64, net: &Arc<Net>) -> Result<Vec<String>, Error> {
    let [repo, sos] = ports::<2>()?;
    let counter = service(include_str!("configs/counter.json"), &[])?;
    let _r = load(vec![repository(&repo, &[("counter", &counter)])?], json!({}), seed, net)?;
    let _s = load(
        vec![service(include_str!("configs/sos.json"), &[("repository", &repo), ("sos", &sos)])?],
        json!({}),
        seed,
        net,
    )?;
    let at = loc(&sos);
    let (alice, bob) = (Caller::new(net), Caller::new(net));
    let open = |c: &Caller| shown(c.call(&at, "", "open", state!("service" => "counter")), "resource");
    let inc = |c: &Caller, r: &str| shown(c.call(&at, r, "inc", State::new()), "n");
    let ra = open(&alice);
    let rb = open(&bob);
    Ok(vec![
        format!("alice opened {ra}"),
        format!("bob opened {rb}"),
        format!("alice inc -> {}", inc(&alice, &ra)),
        format!("alice inc -> {}", inc(&alice, &ra)),
        format!("bob inc -> {}", inc(&bob, &rb)),
        format!("bob on {ra} -> {}", inc(&bob, &ra)),
        format!("alice on {rb} -> {}", inc(&alice, &rb)),
    ])
}

/// Outcome of one run of the deadlock configuration in `mode`, and how
/// long the watchdog took to decide.
pub fn deadlock_once(mode: &str, seed: u64, net: &Arc<Net>) -> Result<(Quiescence, Duration), Error> {
    let cfg = super::service_json(include_str!("configs/deadlock.json"), &[("mode", mode)])?;
    let services = crate::composition::ContainerConfig::from_json(&cfg)?.services;
    let c = load(services, json!({}), seed, net)?;
    let started = Instant::now();
    let (a, b) = (c.engine("A").expect("A"), c.engine("B").expect("B"));
    let q = watch(&[&a, &b], Some(net), Duration::from_millis(500), Duration::from_secs(2));
    let took = started.elapsed();
    c.stop();
    Ok((q, took))
}

pub(super) fn deadlock(seed: u64, net: &Arc<Net>) -> Result<Vec<String>, Error> {
    let verdict = |q: Quiescence| match q {
        Quiescence::Deadlock => "DEADLOCK",
        Quiescence::Idle => "OK",
        Quiescence::Busy => "BUSY",
    };
    let (seq, _) = deadlock_once("sequential", seed, net)?;
    let (conc, _) = deadlock_once("concurrent", seed, net)?;
    Ok(vec![
        format!("sequential: {}", verdict(seq)),
        format!("concurrent: {}", verdict(conc)),
    ])
}
