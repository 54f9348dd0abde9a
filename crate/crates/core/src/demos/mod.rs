//! Self-contained scenarios over loopback sockets and local transport.
//! Each one drives its containers, collects a transcript and compares it
//! with the expected one.

mod calculator;
mod scenarios;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Duration;

use serde_json::{json, Value as Json};

use crate::composition::{Container, ContainerConfig, ContainerOptions, ServiceDef};
use crate::deployment::transport::ConnTrace;
use crate::deployment::{Connector, Frame, LocalRegistry, Location, Net};
use crate::engine::EventLog;
use crate::error::Error;
use crate::state::State;

pub use calculator::{calculator_deployments, Deployment};
pub use scenarios::deadlock_once;

const WAIT: Duration = Duration::from_secs(5);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Demo {
    RrVsCallback,
    Web,
    SlaveMobility,
    MasterMobility,
    Sos,
    Deadlock,
}

impl Demo {
    pub const ALL: [Demo; 6] = [
        Demo::RrVsCallback,
        Demo::Web,
        Demo::SlaveMobility,
        Demo::MasterMobility,
        Demo::Sos,
        Demo::Deadlock,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Demo::RrVsCallback => "rr-vs-callback",
            Demo::Web => "web",
            Demo::SlaveMobility => "slave-mobility",
            Demo::MasterMobility => "master-mobility",
            Demo::Sos => "sos",
            Demo::Deadlock => "deadlock",
        }
    }

    pub fn expected(self) -> Vec<String> {
        let lines: &[&str] = match self {
            Demo::RrVsCallback => &[
                "request-response: price(book) = 12",
                "callback: priceResult(book) = 12 for ticket 7",
                "callback frames on the request connection: 0",
                "buyer: success",
            ],
            Demo::Web => &[
                "alice GET -> tok1",
                "bob GET -> tok2",
                "bob POST pear -> bob/pear",
                "alice POST apple -> alice/apple",
                "alice POST again -> CorrelationError",
                "POST with unknown token -> CorrelationError",
            ],
            Demo::SlaveMobility => &[
                "master embedded doubler from the repository",
                "double(21) = 42",
                "after unembed: IOFault",
                "master: success",
            ],
            Demo::MasterMobility => &[
                "worker embedded flow from the repository",
                "run(5) = 11",
                "adder requests: 2",
                "worker: success",
            ],
            Demo::Sos => &[
                "alice opened counter1",
                "bob opened counter2",
                "alice inc -> 1",
                "alice inc -> 2",
                "bob inc -> 1",
                "bob on counter1 -> UnknownResource",
                "alice on counter2 -> UnknownResource",
            ],
            Demo::Deadlock => &["sequential: DEADLOCK", "concurrent: OK"],
        };
        lines.iter().map(|l| (*l).to_owned()).collect()
    }

    pub fn run(self, seed: u64) -> Result<DemoRun, Error> {
        let net = Net::recording();
        let actual = match self {
            Demo::RrVsCallback => scenarios::rr_vs_callback(seed, &net)?,
            Demo::Web => scenarios::web(seed, &net)?,
            Demo::SlaveMobility => scenarios::slave_mobility(seed, &net)?,
            Demo::MasterMobility => scenarios::master_mobility(seed, &net)?,
            Demo::Sos => scenarios::sos(seed, &net)?,
            Demo::Deadlock => scenarios::deadlock(seed, &net)?,
        };
        Ok(DemoRun {
            demo: self,
            expected: self.expected(),
            actual,
            traces: net.traces(),
        })
    }
}

impl FromStr for Demo {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        Demo::ALL
            .into_iter()
            .find(|d| d.name() == s)
            .ok_or_else(|| Error::Validation(format!("unknown demo {s:?}")))
    }
}

impl fmt::Display for Demo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub struct DemoRun {
    pub demo: Demo,
    pub expected: Vec<String>,
    pub actual: Vec<String>,
    /// Every connection recorded while the scenario ran.
    pub traces: Vec<Arc<ConnTrace>>,
}

impl DemoRun {
    pub fn passed(&self) -> bool {
        self.expected == self.actual
    }

    /// Line diff, `-` for expected and `+` for actual.
    pub fn diff(&self) -> String {
        let mut out = String::new();
        let n = self.expected.len().max(self.actual.len());
        for i in 0..n {
            match (self.expected.get(i), self.actual.get(i)) {
                (Some(e), Some(a)) if e == a => out.push_str(&format!("  {e}\n")),
                (e, a) => {
                    if let Some(e) = e {
                        out.push_str(&format!("- {e}\n"));
                    }
                    if let Some(a) = a {
                        out.push_str(&format!("+ {a}\n"));
                    }
                }
            }
        }
        out
    }
}

pub(crate) fn socket(port: u16) -> String {
    format!("socket://127.0.0.1:{port}")
}

/// Reads a bundled service definition, replacing each `${key}` in the text.
pub(crate) fn service_json(text: &str, vars: &[(&str, &str)]) -> Result<Json, Error> {
    let mut text = text.to_owned();
    for (k, v) in vars {
        text = text.replace(&format!("${{{k}}}"), v);
    }
    serde_json::from_str(&text).map_err(|e| Error::Parse(e.to_string()))
}

pub(crate) fn service(text: &str, vars: &[(&str, &str)]) -> Result<ServiceDef, Error> {
    ServiceDef::from_json(&service_json(text, vars)?)
}

/// Quotes `s` as a string literal of the expression language.
pub(crate) fn literal(s: &str) -> String {
    format!("'{}'", s.replace('\\', "\\\\").replace('\'', "\\'"))
}

/// A repository service answering `fetch(name)` with one of `docs`.
pub(crate) fn repository(location: &str, docs: &[(&str, &ServiceDef)]) -> Result<ServiceDef, Error> {
    let mut catalogue = json!({"throw": "UnknownService"});
    for (name, def) in docs.iter().rev() {
        catalogue = json!({"if": {
            "cond": format!("q_name == {}", literal(name)),
            "then": {"assign": ["doc", literal(&def.to_document())]},
            "else": catalogue,
        }});
    }
    let mut doc = service_json(include_str!("configs/repository.json"), &[("repository", location)])?;
    doc["behaviour"]["seq"][1] = catalogue;
    ServiceDef::from_json(&doc)
}

pub(crate) fn load(services: Vec<ServiceDef>, mut extra: Json, seed: u64, net: &Arc<Net>) -> Result<Container, Error> {
    extra["services"] = Json::Array(services.iter().map(ServiceDef::to_json).collect());
    let cfg = ContainerConfig::from_json(&extra)?;
    Container::load(
        &cfg,
        ContainerOptions {
            seed,
            log: Arc::new(EventLog::discard()),
            net: net.clone(),
            storage_dir: None,
        },
    )
}

/// A stand-alone caller with its own connection pool.
pub(crate) struct Caller {
    connector: Arc<Connector>,
}

impl Caller {
    pub(crate) fn new(net: &Arc<Net>) -> Caller {
        Caller {
            connector: Connector::new(LocalRegistry::new(), net.clone()),
        }
    }

    pub(crate) fn call(&self, at: &Location, resource: &str, op: &str, payload: State) -> Result<State, String> {
        let client = self.connector.client(at).map_err(|f| f.to_string())?;
        client
            .call_blocking(Frame::request("", op, payload).with_resource(resource))
            .and_then(Frame::into_result)
            .map_err(|f| f.to_string())
    }
}

impl Drop for Caller {
    fn drop(&mut self) {
        self.connector.close_all();
    }
}

/// How the firing session of `service` ended, or `timeout`.
pub(crate) fn firing_outcome(c: &Container, service: &str) -> String {
    let Some(e) = c.engine(service) else { return "not running".into() };
    let Some(id) = e.firing_session() else { return "no firing session".into() };
    e.wait_session(id, WAIT).map_or_else(|| "timeout".into(), |c| c.to_string())
}

pub(crate) fn global(c: &Container, service: &str, var: &str) -> String {
    let read = c.engine(service).and_then(|e| {
        e.global_access(crate::behaviour::interp::GlobalAction::Read(crate::VarName::new(var).ok()?))
            .ok()
            .flatten()
    });
    read.map_or_else(|| "undefined".into(), |v| v.to_string())
}
