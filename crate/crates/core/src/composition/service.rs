//! Service definitions: interface, behaviour, correlation, engine settings
//! and ports, read from and written to one JSON document.

use std::collections::BTreeSet;

use serde_json::{json, Map, Value as Json};

use crate::behaviour::{Activity, BehaviourDef};
use crate::correlation::CorrelationConfig;
use crate::deployment::{InputPort, Interface, Location, OperationKind, OutputPort, FRAME_PROTOCOL};
use crate::engine::ExecutionMode;
use crate::error::Error;

/// Stands for the service's own name in a `local://` location, so that
/// one definition can be embedded several times under different names.
pub const SELF_PLACEHOLDER: &str = "{self}";

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct EngineSettings {
    pub mode: ExecutionMode,
    pub storage: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServiceDef {
    pub name: String,
    pub interface: Interface,
    pub behaviour: BehaviourDef,
    pub correlation: CorrelationConfig,
    pub engine: EngineSettings,
    pub input_ports: Vec<InputPort>,
    pub output_ports: Vec<OutputPort>,
}

fn only_keys(obj: &Map<String, Json>, allowed: &[&str], what: &str) -> Result<(), Error> {
    match obj.keys().find(|k| !allowed.contains(&k.as_str())) {
        Some(k) => Err(Error::Parse(format!("{what} has unknown key {k:?}"))),
        None => Ok(()),
    }
}

fn text<'a>(obj: &'a Map<String, Json>, key: &str, what: &str) -> Result<&'a str, Error> {
    obj.get(key)
        .and_then(Json::as_str)
        .ok_or_else(|| Error::Parse(format!("{what} needs a string {key:?}")))
}

fn names(v: Option<&Json>, what: &str) -> Result<Option<Vec<String>>, Error> {
    let Some(v) = v else { return Ok(None) };
    let list = v
        .as_array()
        .ok_or_else(|| Error::Parse(format!("{what} must be a list of names")))?;
    list.iter()
        .map(|x| {
            x.as_str()
                .map(str::to_owned)
                .ok_or_else(|| Error::Parse(format!("{what} must be a list of names")))
        })
        .collect::<Result<Vec<_>, _>>()
        .map(Some)
}

struct RawPort {
    name: String,
    location: Location,
    protocol: String,
    ops: Vec<String>,
    resource: Option<String>,
}

fn parse_port(v: &Json, output: bool) -> Result<RawPort, Error> {
    let what = if output { "output port" } else { "input port" };
    let obj = v
        .as_object()
        .ok_or_else(|| Error::Parse(format!("{what} must be an object")))?;
    let mut allowed = vec!["name", "location", "protocol", "interface"];
    if output {
        allowed.push("resource");
    }
    only_keys(obj, &allowed, what)?;
    let name = text(obj, "name", what)?.to_owned();
    let protocol = match obj.get("protocol") {
        None => FRAME_PROTOCOL.to_owned(),
        Some(p) => p
            .as_str()
            .ok_or_else(|| Error::Parse(format!("{what} {name:?}: protocol must be a string")))?
            .to_owned(),
    };
    if protocol != FRAME_PROTOCOL {
        return Err(Error::Validation(format!("{what} {name:?}: unsupported protocol {protocol:?}")));
    }
    let resource = match obj.get("resource") {
        None => None,
        Some(r) => Some(
            r.as_str()
                .ok_or_else(|| Error::Parse(format!("{what} {name:?}: resource must be a string")))?
                .to_owned(),
        ),
    };
    Ok(RawPort {
        location: text(obj, "location", what)?.parse()?,
        ops: names(obj.get("interface"), what)?.unwrap_or_default(),
        name,
        protocol,
        resource,
    })
}

impl ServiceDef {
    pub fn from_json(doc: &Json) -> Result<ServiceDef, Error> {
        let obj = doc
            .as_object()
            .ok_or_else(|| Error::Parse("service definition must be an object".into()))?;
        only_keys(
            obj,
            &["name", "interface", "behaviour", "correlation", "engine", "inputPorts", "outputPorts"],
            "service definition",
        )?;
        let name = text(obj, "name", "service definition")?.to_owned();
        let interface = match obj.get("interface") {
            Some(i) => Interface::from_json(i)?,
            None => Interface::default(),
        };
        let mut behaviour = BehaviourDef::parse(
            obj.get("behaviour")
                .ok_or_else(|| Error::Parse(format!("service {name:?} has no behaviour")))?,
        )?;
        let correlation = match obj.get("correlation") {
            Some(c) => CorrelationConfig::from_json(c)?,
            None => CorrelationConfig::default(),
        };
        let mut engine = EngineSettings::default();
        if let Some(e) = obj.get("engine") {
            let e = e
                .as_object()
                .ok_or_else(|| Error::Parse("engine section must be an object".into()))?;
            only_keys(e, &["mode", "firing", "initiators", "storage"], "engine section")?;
            if let Some(m) = e.get("mode") {
                engine.mode = m
                    .as_str()
                    .ok_or_else(|| Error::Parse("engine mode must be a string".into()))?
                    .parse()?;
            }
            if let Some(s) = e.get("storage") {
                engine.storage = Some(
                    s.as_str()
                        .ok_or_else(|| Error::Parse("storage must be a path string".into()))?
                        .to_owned(),
                );
            }
            let firing = match e.get("firing") {
                None => None,
                Some(f) => Some(f.as_bool().ok_or_else(|| Error::Parse("firing must be a bool".into()))?),
            };
            let initiators = names(e.get("initiators"), "initiators")?;
            if firing.is_some() || initiators.is_some() {
                let firing = firing.unwrap_or(behaviour.firing);
                let initiators = initiators.unwrap_or_else(|| behaviour.initiators.iter().cloned().collect());
                behaviour = BehaviourDef::with_defaults(behaviour.root, Some(firing), Some(initiators));
            }
        }
        let port_list = |key: &str, output: bool| -> Result<Vec<RawPort>, Error> {
            match obj.get(key) {
                None => Ok(Vec::new()),
                Some(Json::Array(a)) => a.iter().map(|p| parse_port(p, output)).collect(),
                Some(_) => Err(Error::Parse(format!("{key} must be a list"))),
            }
        };
        let restrict = |p: &RawPort| -> Result<Interface, Error> {
            interface
                .restrict(p.ops.iter().map(String::as_str))
                .map_err(|e| Error::Validation(format!("port {:?}: {e}", p.name)))
        };
        let input_ports = port_list("inputPorts", false)?
            .into_iter()
            .map(|p| {
                Ok(InputPort {
                    interface: restrict(&p)?,
                    name: p.name,
                    location: p.location,
                    protocol: p.protocol,
                })
            })
            .collect::<Result<Vec<_>, Error>>()?;
        let output_ports = port_list("outputPorts", true)?
            .into_iter()
            .map(|p| {
                Ok(OutputPort {
                    interface: restrict(&p)?,
                    name: p.name,
                    location: p.location,
                    protocol: p.protocol,
                    resource: p.resource,
                })
            })
            .collect::<Result<Vec<_>, Error>>()?;
        let def = ServiceDef {
            name,
            interface,
            behaviour,
            correlation,
            engine,
            input_ports,
            output_ports,
        };
        def.validate()?;
        Ok(def)
    }

    pub fn to_json(&self) -> Json {
        let port_ops = |i: &Interface| Json::Array(i.names().map(|n| json!(n)).collect());
        let mut engine = Map::new();
        engine.insert("mode".into(), json!(self.engine.mode.as_str()));
        engine.insert("firing".into(), json!(self.behaviour.firing));
        engine.insert("initiators".into(), json!(self.behaviour.initiators));
        if let Some(s) = &self.engine.storage {
            engine.insert("storage".into(), json!(s));
        }
        json!({
            "name": self.name,
            "interface": self.interface.to_json(),
            "behaviour": self.behaviour.root.to_json(),
            "correlation": self.correlation.to_json(),
            "engine": engine,
            "inputPorts": self.input_ports.iter().map(|p| json!({
                "name": p.name,
                "location": p.location.to_string(),
                "protocol": p.protocol,
                "interface": port_ops(&p.interface),
            })).collect::<Vec<_>>(),
            "outputPorts": self.output_ports.iter().map(|p| {
                let mut o = json!({
                    "name": p.name,
                    "location": p.location.to_string(),
                    "protocol": p.protocol,
                    "interface": port_ops(&p.interface),
                });
                if let Some(r) = &p.resource {
                    o["resource"] = json!(r);
                }
                o
            }).collect::<Vec<_>>(),
        })
    }

    /// The definition as a single transferable document.
    pub fn to_document(&self) -> String {
        self.to_json().to_string()
    }

    pub fn from_document(doc: &str) -> Result<ServiceDef, Error> {
        let v: Json = serde_json::from_str(doc).map_err(|e| Error::Parse(e.to_string()))?;
        ServiceDef::from_json(&v)
    }

    /// Cross-checks behaviour, correlation and ports against the interface.
    pub fn validate(&self) -> Result<(), Error> {
        let fail = |msg: String| Err(Error::Validation(format!("service {:?}: {msg}", self.name)));
        let kind = |op: &str| self.interface.get(op).map(|d| d.kind);
        for p in &self.input_ports {
            if let Some(d) = p.interface.operations.values().find(|d| !d.kind.is_input()) {
                return fail(format!("input port {:?} lists output operation {:?}", p.name, d.name));
            }
        }
        for p in &self.output_ports {
            if let Some(d) = p.interface.operations.values().find(|d| d.kind.is_input()) {
                return fail(format!("output port {:?} lists input operation {:?}", p.name, d.name));
            }
        }
        let mut names = BTreeSet::new();
        for n in self.input_ports.iter().map(|p| &p.name).chain(self.output_ports.iter().map(|p| &p.name)) {
            if !names.insert(n) {
                return fail(format!("port {n:?} declared twice"));
            }
        }
        let mut problem = None;
        self.behaviour.root.walk(&mut |a| {
            if problem.is_some() {
                return;
            }
            problem = match a {
                Activity::Receive { op, .. } if !kind(op).is_some_and(OperationKind::is_input) => {
                    Some(format!("receive on {op:?}, which is not a declared input operation"))
                }
                Activity::Reply { op, .. } if kind(op) != Some(OperationKind::RequestResponse) => {
                    Some(format!("reply on {op:?}, which is not a declared RequestResponse operation"))
                }
                Activity::Notify { port, op, .. } => self.check_output(port, op, OperationKind::Notification),
                Activity::Solicit { port, op, .. } => self.check_output(port, op, OperationKind::SolicitResponse),
                _ => None,
            };
        });
        if let Some(p) = problem {
            return fail(p);
        }
        if let Some(op) = self.behaviour.initiators.iter().find(|op| !kind(op).is_some_and(OperationKind::is_input)) {
            return fail(format!("initiator {op:?} is not a declared input operation"));
        }
        if let Some(op) = self.correlation.operations().find(|op| !kind(op).is_some_and(OperationKind::is_input)) {
            return fail(format!("correlation for {op:?}, which is not a declared input operation"));
        }
        let rr: BTreeSet<String> = self
            .interface
            .operations
            .values()
            .filter(|d| d.kind == OperationKind::RequestResponse)
            .map(|d| d.name.clone())
            .collect();
        self.behaviour.validate_with_request_response(&rr)
    }

    fn check_output(&self, port: &str, op: &str, want: OperationKind) -> Option<String> {
        let Some(p) = self.output_ports.iter().find(|p| p.name == port) else {
            return Some(format!("no output port {port:?}"));
        };
        match p.interface.get(op) {
            Some(d) if d.kind == want => None,
            Some(d) => Some(format!("{op:?} on port {port:?} is {:?}, not {want:?}", d.kind)),
            None => Some(format!("output port {port:?} does not list {op:?}")),
        }
    }

    /// A copy renamed to `name`, with `{self}` locations resolved.
    pub fn instantiate(&self, name: &str) -> ServiceDef {
        let mut d = self.clone();
        d.name = name.to_owned();
        let fix = |l: &mut Location| {
            if let Location::Local(n) = l {
                if n.contains(SELF_PLACEHOLDER) {
                    *n = n.replace(SELF_PLACEHOLDER, name);
                }
            }
        };
        d.input_ports.iter_mut().for_each(|p| fix(&mut p.location));
        d.output_ports.iter_mut().for_each(|p| fix(&mut p.location));
        d
    }

    /// Operations accepted on any input port.
    pub fn accepted_operations(&self) -> BTreeSet<String> {
        self.input_ports
            .iter()
            .flat_map(|p| p.interface.names().map(str::to_owned))
            .collect()
    }

    pub fn is_local_only(&self) -> bool {
        self.input_ports.iter().all(|p| p.location.is_local())
    }
}

/// Joins interfaces; one name with two different declarations is an
/// `InterfaceClash`.
pub fn merge_interfaces(parts: &[Interface]) -> Result<Interface, Error> {
    let mut out = Interface::default();
    for part in parts {
        for (name, d) in &part.operations {
            match out.operations.get(name) {
                Some(existing) if existing != d => {
                    return Err(Error::InterfaceClash(format!("operation {name:?} is declared differently")));
                }
                Some(_) => {}
                None => {
                    out.operations.insert(name.clone(), d.clone());
                }
            }
        }
    }
    Ok(out)
}
