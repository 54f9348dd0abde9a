//! Containers: host services and dispatch frames arriving at their input
//! ports through the redirect table, the aggregation map, or the service's
//! own engine.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use std::sync::{Arc, Mutex, RwLock, Weak};
use std::time::Duration;

use serde::de::{Deserialize, DeserializeSeed, Deserializer, IgnoredAny, MapAccess, Visitor};
use serde_json::{json, Value as Json};

use super::service::{merge_interfaces, ServiceDef};
use crate::behaviour::interp::ContainerAction;
use crate::behaviour::Message;
use crate::deployment::client::Callback;
use crate::deployment::{
    serve, solicit_with, send_notification, Connector, Frame, FrameHandler, FrameType, Interface, Listener,
    LocalRegistry, Location, Net, OperationKind, OutputPort, Responder,
};
use crate::engine::{Engine, EngineSpec, EventLog, Outbound, ResponseFn, RoutingOutcome, StopReport};
use crate::error::{Error, Fault};
use crate::state::{State, Value};

pub const NO_FIRING_SESSION: &str = "NoFiringSession";

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Aggregation {
    /// Published operations; the merged member interfaces when the config
    /// does not restrict them.
    pub interface: Interface,
    pub map: BTreeMap<String, String>,
}

/// `publish` list (if any) and the operation → service map.
pub type AggregateSection = (Option<Vec<String>>, BTreeMap<String, String>);

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ContainerConfig {
    pub services: Vec<ServiceDef>,
    pub embed: BTreeSet<String>,
    pub redirects: BTreeMap<String, Location>,
    /// Raw `aggregate` section; resolved against the services at load.
    pub aggregate: Option<AggregateSection>,
    /// Bare endpoint serving only redirects and the aggregation.
    pub listen: Option<Location>,
}

/// Keys of the top-level `redirects` object in source order, duplicates
/// kept; a parsed JSON value has already merged them.
struct RedirectKeys(Vec<String>);

impl<'de> Deserialize<'de> for RedirectKeys {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct Top;
        struct Keys;
        impl<'de> Visitor<'de> for Keys {
            type Value = Vec<String>;
            fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
                f.write_str("an object")
            }
            fn visit_map<A: MapAccess<'de>>(self, mut m: A) -> Result<Vec<String>, A::Error> {
                let mut out = Vec::new();
                while let Some((k, IgnoredAny)) = m.next_entry::<String, IgnoredAny>()? {
                    out.push(k);
                }
                Ok(out)
            }
        }
        struct KeysSeed;
        impl<'de> DeserializeSeed<'de> for KeysSeed {
            type Value = Vec<String>;
            fn deserialize<D: Deserializer<'de>>(self, d: D) -> Result<Vec<String>, D::Error> {
                d.deserialize_map(Keys)
            }
        }
        impl<'de> Visitor<'de> for Top {
            type Value = Vec<String>;
            fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
                f.write_str("a container config object")
            }
            fn visit_map<A: MapAccess<'de>>(self, mut m: A) -> Result<Vec<String>, A::Error> {
                let mut out = Vec::new();
                while let Some(k) = m.next_key::<String>()? {
                    if k == "redirects" {
                        out.extend(m.next_value_seed(KeysSeed)?);
                    } else {
                        m.next_value::<IgnoredAny>()?;
                    }
                }
                Ok(out)
            }
        }
        d.deserialize_map(Top).map(RedirectKeys)
    }
}

impl ContainerConfig {
    /// Parses config text. Unlike [`ContainerConfig::from_json`] this sees
    /// repeated keys in `redirects`.
    pub fn parse(text: &str) -> Result<ContainerConfig, Error> {
        let doc: Json = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        if let Ok(RedirectKeys(keys)) = serde_json::from_str(text) {
            let mut seen = BTreeSet::new();
            if let Some(k) = keys.into_iter().find(|k| !seen.insert(k.clone())) {
                return Err(Error::Validation(format!("duplicate redirect resource {k:?}")));
            }
        }
        ContainerConfig::from_json(&doc)
    }

    pub fn from_json(doc: &Json) -> Result<ContainerConfig, Error> {
        let obj = doc
            .as_object()
            .ok_or_else(|| Error::Parse("container config must be an object".into()))?;
        if let Some(k) = obj
            .keys()
            .find(|k| !matches!(k.as_str(), "services" | "embed" | "redirects" | "aggregate" | "listen"))
        {
            return Err(Error::Parse(format!("container config has unknown key {k:?}")));
        }
        let services = match obj.get("services") {
            None => Vec::new(),
            Some(Json::Array(a)) => a.iter().map(ServiceDef::from_json).collect::<Result<_, _>>()?,
            Some(_) => return Err(Error::Parse("services must be a list".into())),
        };
        let str_list = |v: &Json, what: &str| -> Result<Vec<String>, Error> {
            v.as_array()
                .and_then(|a| a.iter().map(|x| x.as_str().map(str::to_owned)).collect::<Option<Vec<_>>>())
                .ok_or_else(|| Error::Parse(format!("{what} must be a list of names")))
        };
        let str_map = |v: &Json, what: &str| -> Result<Vec<(String, String)>, Error> {
            v.as_object()
                .and_then(|o| {
                    o.iter()
                        .map(|(k, v)| v.as_str().map(|s| (k.clone(), s.to_owned())))
                        .collect::<Option<Vec<_>>>()
                })
                .ok_or_else(|| Error::Parse(format!("{what} must map names to strings")))
        };
        let embed = match obj.get("embed") {
            None => BTreeSet::new(),
            Some(v) => str_list(v, "embed")?.into_iter().collect(),
        };
        let mut redirects = BTreeMap::new();
        if let Some(v) = obj.get("redirects") {
            for (res, target) in str_map(v, "redirects")? {
                if res.is_empty() || res.contains('/') {
                    return Err(Error::Validation(format!("invalid resource name {res:?}")));
                }
                if redirects.insert(res.clone(), target.parse()?).is_some() {
                    return Err(Error::Validation(format!("duplicate redirect resource {res:?}")));
                }
            }
        }
        let aggregate = match obj.get("aggregate") {
            None => None,
            Some(a) => {
                let o = a
                    .as_object()
                    .ok_or_else(|| Error::Parse("aggregate must be an object".into()))?;
                if let Some(k) = o.keys().find(|k| !matches!(k.as_str(), "publish" | "map")) {
                    return Err(Error::Parse(format!("aggregate has unknown key {k:?}")));
                }
                let publish = o.get("publish").map(|p| str_list(p, "publish")).transpose()?;
                let map = str_map(
                    o.get("map").ok_or_else(|| Error::Parse("aggregate needs a map".into()))?,
                    "aggregate map",
                )?
                .into_iter()
                .collect();
                Some((publish, map))
            }
        };
        let listen = obj
            .get("listen")
            .map(|l| {
                l.as_str()
                    .ok_or_else(|| Error::Parse("listen must be a location string".into()))?
                    .parse()
            })
            .transpose()?;
        let cfg = ContainerConfig {
            services,
            embed,
            redirects,
            aggregate,
            listen,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), Error> {
        let mut names = BTreeSet::new();
        for s in &self.services {
            if !names.insert(s.name.as_str()) {
                return Err(Error::Validation(format!("service {:?} defined twice", s.name)));
            }
            if self.embed.contains(&s.name) && !s.instantiate(&s.name).is_local_only() {
                return Err(Error::Validation(format!(
                    "embedded service {:?} must use local input ports only",
                    s.name
                )));
            }
        }
        if let Some(e) = self.embed.iter().find(|e| !names.contains(e.as_str())) {
            return Err(Error::Validation(format!("embed names unknown service {e:?}")));
        }
        if self.aggregate.is_some() {
            self.aggregation()?;
        }
        Ok(())
    }

    /// The published interface and the operation map, checked for totality.
    pub fn aggregation(&self) -> Result<Option<Aggregation>, Error> {
        let Some((publish, map)) = &self.aggregate else { return Ok(None) };
        let members: BTreeSet<&str> = map.values().map(String::as_str).collect();
        let mut parts = Vec::new();
        for m in &members {
            let s = self
                .services
                .iter()
                .find(|s| s.name == *m)
                .ok_or_else(|| Error::Validation(format!("aggregation member {m:?} is not a service")))?;
            parts.push(s.input_ports.iter().map(|p| p.interface.clone()).collect::<Vec<_>>());
        }
        let merged = merge_interfaces(&parts.concat())?;
        let interface = match publish {
            Some(p) => merged
                .restrict(p.iter().map(String::as_str))
                .map_err(|e| Error::Validation(format!("aggregate publish: {e}")))?,
            None => merged,
        };
        for op in interface.names() {
            let Some(member) = map.get(op) else {
                return Err(Error::Validation(format!("aggregate map has no service for {op:?}")));
            };
            let s = self.services.iter().find(|s| &s.name == member).expect("checked");
            if !s.input_ports.iter().any(|p| p.interface.contains(op)) {
                return Err(Error::Validation(format!("service {member:?} does not serve {op:?}")));
            }
        }
        if let Some(op) = map.keys().find(|op| !interface.contains(op)) {
            return Err(Error::Validation(format!("aggregate maps unpublished operation {op:?}")));
        }
        Ok(Some(Aggregation {
            interface,
            map: map.clone(),
        }))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Redirect {
    pub target: Location,
    /// When set, only requests arriving on this channel may use the resource.
    pub owner: Option<u64>,
}

struct Hosted {
    def: ServiceDef,
    engine: Arc<Engine>,
    listeners: Vec<Listener>,
}

pub struct ContainerOptions {
    pub seed: u64,
    pub log: Arc<EventLog>,
    pub net: Arc<Net>,
    /// Directory for relative storage paths.
    pub storage_dir: Option<PathBuf>,
}

impl Default for ContainerOptions {
    fn default() -> Self {
        ContainerOptions {
            seed: 0,
            log: Arc::new(EventLog::discard()),
            net: Net::new(),
            storage_dir: None,
        }
    }
}

struct Inner {
    name: String,
    seed: u64,
    log: Arc<EventLog>,
    net: Arc<Net>,
    registry: Arc<LocalRegistry>,
    connector: Arc<Connector>,
    storage_dir: Option<PathBuf>,
    services: RwLock<BTreeMap<String, Hosted>>,
    redirects: RwLock<BTreeMap<String, Redirect>>,
    aggregation: RwLock<Option<Aggregation>>,
    master: Mutex<Option<Listener>>,
    warnings: Mutex<Vec<String>>,
}

pub struct Container {
    inner: Arc<Inner>,
}

fn name_seed(seed: u64, name: &str) -> u64 {
    // FNV-1a, stable across runs
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    seed ^ h
}

impl Container {
    /// Starts every service of `config`, then the master endpoint.
    pub fn load(config: &ContainerConfig, opts: ContainerOptions) -> Result<Container, Error> {
        config.validate()?;
        let registry = LocalRegistry::new();
        let inner = Arc::new(Inner {
            name: config.services.first().map_or_else(|| "container".to_owned(), |s| s.name.clone()),
            seed: opts.seed,
            log: opts.log,
            connector: Connector::new(registry.clone(), opts.net.clone()),
            net: opts.net,
            registry,
            storage_dir: opts.storage_dir,
            services: RwLock::new(BTreeMap::new()),
            redirects: RwLock::new(
                config
                    .redirects
                    .iter()
                    .map(|(k, v)| (k.clone(), Redirect { target: v.clone(), owner: None }))
                    .collect(),
            ),
            aggregation: RwLock::new(config.aggregation()?),
            master: Mutex::new(None),
            warnings: Mutex::new(Vec::new()),
        });
        let c = Container { inner };
        if !config.services.iter().any(|s| s.behaviour.firing) {
            c.warn(NO_FIRING_SESSION, "no service in this container starts with a firing session");
        }
        for s in &config.services {
            if let Err(e) = c.start_service(s.instantiate(&s.name)) {
                c.stop();
                return Err(e);
            }
        }
        if let Some(l) = &config.listen {
            let handler = Arc::new(PortHandler {
                container: Arc::downgrade(&c.inner),
                service: None,
                interface: Interface::default(),
            });
            match serve(l, &c.inner.registry, &c.inner.net, handler) {
                Ok(listener) => *c.inner.master.lock().expect("master") = Some(listener),
                Err(e) => {
                    c.stop();
                    return Err(e);
                }
            }
        }
        for name in c.service_names() {
            if let Some(e) = c.engine(&name) {
                e.fire();
            }
        }
        Ok(c)
    }

    fn warn(&self, tag: &str, msg: &str) {
        self.inner.log.record(&self.inner.name, None, "warning", json!({"warning": tag, "message": msg}));
        self.inner.warnings.lock().expect("warnings").push(format!("{tag}: {msg}"));
    }

    pub fn warnings(&self) -> Vec<String> {
        self.inner.warnings.lock().expect("warnings").clone()
    }

    pub fn net(&self) -> &Arc<Net> {
        &self.inner.net
    }

    pub fn registry(&self) -> &Arc<LocalRegistry> {
        &self.inner.registry
    }

    pub fn connector(&self) -> &Arc<Connector> {
        &self.inner.connector
    }

    fn start_service(&self, def: ServiceDef) -> Result<(), Error> {
        start_service(&self.inner, def)
    }

    /// Runs `def` inside this container under `name`. Its input ports must
    /// all be local.
    pub fn embed(&self, def: &ServiceDef, name: &str) -> Result<(), Error> {
        embed(&self.inner, def, name)
    }

    /// Stops the named service and releases its locations.
    pub fn unembed(&self, name: &str) -> Result<StopReport, Error> {
        unembed(&self.inner, name)
    }

    pub fn set_redirect(&self, resource: &str, target: Location, owner: Option<u64>) {
        self.inner
            .redirects
            .write()
            .expect("redirects")
            .insert(resource.to_owned(), Redirect { target, owner });
    }

    pub fn redirects(&self) -> BTreeMap<String, Redirect> {
        self.inner.redirects.read().expect("redirects").clone()
    }

    pub fn aggregation(&self) -> Option<Aggregation> {
        self.inner.aggregation.read().expect("aggregation").clone()
    }

    pub fn engine(&self, name: &str) -> Option<Arc<Engine>> {
        self.inner.services.read().expect("services").get(name).map(|h| h.engine.clone())
    }

    pub fn service_names(&self) -> Vec<String> {
        self.inner.services.read().expect("services").keys().cloned().collect()
    }

    /// Where the named service's first input port actually listens.
    pub fn service_location(&self, name: &str) -> Option<Location> {
        let services = self.inner.services.read().expect("services");
        services.get(name)?.listeners.first().map(|l| l.location().clone())
    }

    pub fn master_location(&self) -> Option<Location> {
        self.inner.master.lock().expect("master").as_ref().map(|l| l.location().clone())
    }

    /// Every socket this container currently listens on.
    pub fn socket_locations(&self) -> Vec<Location> {
        let master = self.master_location();
        let services = self.inner.services.read().expect("services");
        services
            .values()
            .flat_map(|h| h.listeners.iter().map(|l| l.location().clone()))
            .chain(master)
            .filter(|l| !l.is_local())
            .collect()
    }

    /// Stops the master endpoint and every service.
    pub fn stop(&self) -> BTreeMap<String, StopReport> {
        if let Some(mut l) = self.inner.master.lock().expect("master").take() {
            l.stop();
        }
        let names = self.service_names();
        let reports = names
            .into_iter()
            .filter_map(|n| unembed(&self.inner, &n).ok().map(|r| (n, r)))
            .collect();
        self.inner.connector.close_all();
        reports
    }
}

impl Drop for Container {
    fn drop(&mut self) {
        self.stop();
    }
}

fn start_service(inner: &Arc<Inner>, def: ServiceDef) -> Result<(), Error> {
    if inner.services.read().expect("services").contains_key(&def.name) {
        return Err(Error::NameClash(format!("service {:?} already runs here", def.name)));
    }
    let storage = def.engine.storage.as_ref().map(|p| {
        let p = PathBuf::from(p);
        match &inner.storage_dir {
            Some(dir) if p.is_relative() => dir.join(p),
            _ => p,
        }
    });
    let outbound = Arc::new(ServiceOutbound {
        ports: def.output_ports.iter().map(|p| (p.name.clone(), p.clone())).collect(),
        connector: inner.connector.clone(),
        container: Arc::downgrade(inner),
    });
    let engine = Arc::new(Engine::start(EngineSpec {
        name: def.name.clone(),
        behaviour: def.behaviour.clone(),
        correlation: def.correlation.clone(),
        mode: def.engine.mode,
        seed: name_seed(inner.seed, &def.name),
        storage,
        accepts: Some(def.accepted_operations()),
        log: inner.log.clone(),
        outbound,
        fire_on_start: false,
    })?);
    let mut listeners = Vec::new();
    for p in &def.input_ports {
        let handler = Arc::new(PortHandler {
            container: Arc::downgrade(inner),
            service: Some(def.name.clone()),
            interface: p.interface.clone(),
        });
        match serve(&p.location, &inner.registry, &inner.net, handler) {
            Ok(l) => listeners.push(l),
            Err(e) => {
                for mut l in listeners {
                    l.stop();
                }
                engine.stop(Duration::from_millis(200));
                return Err(e);
            }
        }
    }
    inner.log.record(&def.name, None, "service-start", json!({}));
    inner
        .services
        .write()
        .expect("services")
        .insert(def.name.clone(), Hosted { def, engine, listeners });
    Ok(())
}

fn embed(inner: &Arc<Inner>, def: &ServiceDef, name: &str) -> Result<(), Error> {
    let def = def.instantiate(name);
    if !def.is_local_only() {
        return Err(Error::Validation(format!("embedded service {name:?} must use local input ports only")));
    }
    def.validate()?;
    let name = def.name.clone();
    start_service(inner, def)?;
    if let Some(h) = inner.services.read().expect("services").get(&name) {
        h.engine.fire();
    }
    Ok(())
}

fn unembed(inner: &Arc<Inner>, name: &str) -> Result<StopReport, Error> {
    let hosted = inner
        .services
        .write()
        .expect("services")
        .remove(name)
        .ok_or_else(|| Error::UnknownService(name.to_owned()))?;
    let Hosted { def, engine, listeners } = hosted;
    for mut l in listeners {
        l.stop();
    }
    let report = engine.stop(Duration::from_secs(2));
    inner.log.record(&def.name, None, "service-stop", json!({}));
    Ok(report)
}

struct ServiceOutbound {
    ports: BTreeMap<String, OutputPort>,
    connector: Arc<Connector>,
    container: Weak<Inner>,
}

impl ServiceOutbound {
    fn port(&self, name: &str) -> Result<&OutputPort, Fault> {
        self.ports.get(name).ok_or_else(|| Fault::new(Fault::IO_FAULT))
    }
}

impl Outbound for ServiceOutbound {
    fn notify(&self, port: &str, op: &str, payload: State) -> Result<(), Fault> {
        send_notification(&self.connector, self.port(port)?, op, &payload)
    }

    fn solicit(&self, port: &str, op: &str, payload: State, done: ResponseFn) -> Result<(), Fault> {
        solicit_with(&self.connector, self.port(port)?, op, &payload, done)
    }

    fn container(&self, action: ContainerAction) -> Result<Option<Value>, Fault> {
        let inner = self.container.upgrade().ok_or_else(|| Fault::new(Fault::CONTAINER_FAULT))?;
        let to_fault = |e: Error| {
            inner.log.record(&inner.name, None, "container-fault", json!({"error": e.to_string()}));
            Fault::new(Fault::CONTAINER_FAULT)
        };
        match action {
            ContainerAction::Embed { document, name } => {
                let def = ServiceDef::from_document(&document).map_err(to_fault)?;
                embed(&inner, &def, &name).map_err(to_fault)?;
            }
            ContainerAction::Unembed(name) => {
                // the caller may be a session of the service being removed
                thread_unembed(inner.clone(), name);
            }
            ContainerAction::Redirect { resource, target, owner } => {
                if resource.is_empty() || resource.contains('/') {
                    return Err(Fault::new(Fault::CONTAINER_FAULT));
                }
                let target: Location = target.parse().map_err(to_fault)?;
                inner
                    .redirects
                    .write()
                    .expect("redirects")
                    .insert(resource, Redirect { target, owner });
            }
        }
        Ok(None)
    }
}

fn thread_unembed(inner: Arc<Inner>, name: String) {
    let svc = inner.services.write().expect("services").remove(&name);
    if let Some(Hosted { def, engine, listeners }) = svc {
        for mut l in listeners {
            l.stop();
        }
        std::thread::spawn(move || {
            engine.stop(Duration::from_secs(2));
            inner.log.record(&def.name, None, "service-stop", json!({}));
        });
    }
}

struct PortHandler {
    container: Weak<Inner>,
    /// `None` for the bare master endpoint.
    service: Option<String>,
    interface: Interface,
}

impl FrameHandler for PortHandler {
    fn handle(&self, frame: Frame, responder: Responder) {
        let Some(inner) = self.container.upgrade() else {
            responder.fault(&frame.id, &frame.operation, Fault::CONTAINER_FAULT);
            return;
        };
        if !frame.resource.is_empty() {
            return relay_redirect(&inner, frame, responder);
        }
        if self.service.is_none() {
            return relay_aggregate(&inner, frame, responder);
        }
        self.submit(&inner, frame, responder);
    }
}

impl PortHandler {
    fn submit(&self, inner: &Inner, frame: Frame, responder: Responder) {
        let name = self.service.as_deref().expect("service port");
        let Some(decl) = self.interface.get(&frame.operation).cloned() else {
            responder.fault(&frame.id, &frame.operation, Fault::UNKNOWN_OPERATION);
            return;
        };
        if decl.request.check(&frame.payload).is_err() {
            responder.fault(&frame.id, &frame.operation, Fault::TYPE_FAULT);
            return;
        }
        let engine = inner.services.read().expect("services").get(name).map(|h| h.engine.clone());
        let Some(engine) = engine else {
            responder.fault(&frame.id, &frame.operation, Fault::IO_FAULT);
            return;
        };
        let rr = decl.kind == OperationKind::RequestResponse;
        let msg = Message {
            operation: frame.operation.clone(),
            payload: frame.payload,
            resource: frame.resource,
            channel_id: responder.channel(),
            request_id: frame.id.clone(),
            expects_reply: rr,
        };
        let (id, op) = (frame.id, frame.operation);
        let reply: Box<dyn FnOnce(Result<State, Fault>) + Send> = Box::new(move |r| {
            let out = match r.and_then(|p| decl.response.check(&p).map(|_| p)) {
                Ok(p) => Frame::response(id, op, p),
                Err(f) => Frame::fault(id, op, f.name()),
            };
            let _ = responder.send(&out);
        });
        if rr {
            engine.submit(msg, Some(reply));
        } else if let RoutingOutcome::Rejected(f) = engine.submit(msg, None) {
            inner
                .log
                .record(name, None, "dropped", json!({"fault": f.name()}));
        }
    }
}

fn relay(inner: &Inner, target: &Location, frame: Frame, responder: Responder, awaits: bool) {
    let original = frame.id.clone();
    let op = frame.operation.clone();
    let client = match inner.connector.client(target) {
        Ok(c) => c,
        Err(f) => {
            responder.fault(&original, &op, f.name());
            return;
        }
    };
    let (id2, op2, resp2) = (original.clone(), op.clone(), responder.clone());
    let cb: Callback = Box::new(move |r| {
        let out = match r {
            Ok(mut f) => {
                f.id = id2;
                f.resource = String::new();
                f
            }
            Err(fault) => Frame::fault(id2, op2, fault.name()),
        };
        let _ = resp2.send(&out);
    });
    let forwarded = Frame { kind: FrameType::Request, ..frame };
    if let Err(f) = client.call(forwarded, awaits.then_some(cb)) {
        responder.fault(&original, &op, f.name());
    }
}

fn relay_redirect(inner: &Inner, frame: Frame, responder: Responder) {
    let (head, rest) = match frame.resource.split_once('/') {
        Some((h, r)) => (h.to_owned(), r.to_owned()),
        None => (frame.resource.clone(), String::new()),
    };
    let redirect = inner.redirects.read().expect("redirects").get(&head).cloned();
    match redirect {
        Some(r) if r.owner.is_none_or(|o| o == responder.channel()) => {
            relay(inner, &r.target, Frame { resource: rest, ..frame }, responder, true)
        }
        _ => responder.fault(&frame.id, &frame.operation, Fault::UNKNOWN_RESOURCE),
    }
}

fn relay_aggregate(inner: &Inner, frame: Frame, responder: Responder) {
    let (member, awaits) = match inner.aggregation.read().expect("aggregation").as_ref() {
        Some(a) => match a.interface.get(&frame.operation) {
            Some(d) => (a.map.get(&frame.operation).cloned(), d.kind.has_response()),
            None => (None, false),
        },
        None => (None, false),
    };
    let target = member.and_then(|m| {
        let services = inner.services.read().expect("services");
        let hosted = services.get(&m)?;
        let i = hosted.def.input_ports.iter().position(|p| p.interface.contains(&frame.operation))?;
        hosted.listeners.get(i).map(|l| l.location().clone())
    });
    match target {
        Some(t) => relay(inner, &t, frame, responder, awaits),
        None => responder.fault(&frame.id, &frame.operation, Fault::UNKNOWN_OPERATION),
    }
}
