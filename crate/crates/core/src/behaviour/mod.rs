//! Service behaviours: the activity tree, its JSON syntax, and the
//! step interpreter that runs one session of it.
//!
//! The JSON node spellings are:
//!
//! ```text
//! {"seq":[A,...]}            {"par":[A,...]}             "nil"
//! {"if":{"cond":E,"then":A,"else":A}}   {"while":{"cond":E,"body":A}}
//! {"assign":[var,E]}         {"throw":fault}             {"compensate":scope}
//! {"receive":{"op":name,"into":prefix}}
//! {"reply":{"op":name,"from":{field:E,...}}}
//! {"notify":{"port":p,"op":name,"payload":{field:E,...}}}
//! {"solicit":{"port":p,"op":name,"payload":{...},"into":prefix}}
//! {"scope":{"name":n,"body":A,"faults":{f:A,...},"onTerminate":A,"onCompensate":A}}
//! ```
//!
//! State-tier and container access use these additional nodes:
//!
//! ```text
//! {"gread":[var,into]}  {"gwrite":[var,E]}  {"gadd":[var,E]}
//! {"sget":[key,into]}   {"sput":[key,E]}    {"sdel":key}
//! {"embed":{"service":E,"as":E}}  {"unembed":E}
//! {"redirect":{"resource":E,"target":E,"private":op}}
//! ```
//!
//! Expressions are JSON strings parsed by [`expr`]. A `receive` or
//! `solicit` writes each payload field `f` to the variable `prefix + f`.

pub mod expr;
pub mod interp;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde_json::{json, Map, Value as Json};

use crate::error::{Error, Fault};
use crate::state::VarName;

pub use expr::Expression;
pub use interp::{Completion, Machine, Message, ReplyTo, SessionIo, StepResult};

pub type ExprMap = BTreeMap<VarName, Expression>;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Activity {
    Nil,
    Receive { op: String, into: String },
    Reply { op: String, from: ExprMap },
    Notify { port: String, op: String, payload: ExprMap },
    Solicit { port: String, op: String, payload: ExprMap, into: String },
    Assign { var: VarName, expr: Expression },
    Sequence(Arc<Vec<Activity>>),
    Parallel(Arc<Vec<Activity>>),
    If { cond: Expression, then: Arc<Activity>, otherwise: Arc<Activity> },
    While { cond: Expression, body: Arc<Activity> },
    Throw(Fault),
    Scope(Arc<ScopeDef>),
    Compensate(String),
    GlobalRead { var: VarName, into: VarName },
    GlobalWrite { var: VarName, value: Expression },
    GlobalAdd { var: VarName, delta: Expression },
    StorageGet { key: String, into: VarName },
    StoragePut { key: String, value: Expression },
    StorageDel { key: String },
    Embed { service: Expression, name: Expression },
    Unembed { name: Expression },
    Redirect { resource: Expression, target: Expression, private_to: Option<String> },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ScopeDef {
    pub name: String,
    pub body: Activity,
    pub faults: BTreeMap<String, Activity>,
    pub on_terminate: Activity,
    pub on_compensate: Activity,
}

/// A behaviour plus the session-start configuration that goes with it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BehaviourDef {
    pub root: Activity,
    pub initiators: BTreeSet<String>,
    pub firing: bool,
}

impl Activity {
    pub fn seq(children: Vec<Activity>) -> Activity {
        Activity::Sequence(Arc::new(children))
    }

    pub fn par(children: Vec<Activity>) -> Activity {
        Activity::Parallel(Arc::new(children))
    }

    pub fn from_json(doc: &Json) -> Result<Activity, Error> {
        parse_activity(doc)
    }

    pub fn to_json(&self) -> Json {
        activity_to_json(self)
    }

    /// Visits this activity and every nested one, handlers included.
    pub fn walk<'a>(&'a self, f: &mut dyn FnMut(&'a Activity)) {
        f(self);
        match self {
            Activity::Sequence(cs) | Activity::Parallel(cs) => cs.iter().for_each(|c| c.walk(f)),
            Activity::If { then, otherwise, .. } => {
                then.walk(f);
                otherwise.walk(f);
            }
            Activity::While { body, .. } => body.walk(f),
            Activity::Scope(s) => {
                s.body.walk(f);
                s.faults.values().for_each(|h| h.walk(f));
                s.on_terminate.walk(f);
                s.on_compensate.walk(f);
            }
            _ => {}
        }
    }
}

impl BehaviourDef {
    /// Parses either a bare activity or `{"root":A,"firing":b,"initiators":[..]}`.
    ///
    /// For a bare activity, the initiators default to the operation of a
    /// leading `receive`, and the behaviour is firing when there is none.
    pub fn parse(doc: &Json) -> Result<BehaviourDef, Error> {
        let (root, firing, initiators) = match doc.as_object() {
            Some(obj) if obj.contains_key("root") => {
                for k in obj.keys() {
                    if !matches!(k.as_str(), "root" | "firing" | "initiators") {
                        return Err(Error::Parse(format!("unknown behaviour key {k:?}")));
                    }
                }
                let root = parse_activity(&obj["root"])?;
                let firing = match obj.get("firing") {
                    None => None,
                    Some(Json::Bool(b)) => Some(*b),
                    Some(other) => return Err(Error::Parse(format!("firing must be a bool, got {other}"))),
                };
                let initiators = obj.get("initiators").map(string_list).transpose()?;
                (root, firing, initiators)
            }
            _ => (parse_activity(doc)?, None, None),
        };
        let def = BehaviourDef::with_defaults(root, firing, initiators);
        def.validate()?;
        Ok(def)
    }

    pub fn with_defaults(root: Activity, firing: Option<bool>, initiators: Option<Vec<String>>) -> Self {
        let initiators: BTreeSet<String> = match initiators {
            Some(list) => list.into_iter().collect(),
            None => leading_receive(&root).into_iter().map(str::to_owned).collect(),
        };
        let firing = firing.unwrap_or(initiators.is_empty());
        BehaviourDef { root, initiators, firing }
    }

    pub fn to_json(&self) -> Json {
        json!({
            "root": self.root.to_json(),
            "firing": self.firing,
            "initiators": self.initiators.iter().collect::<Vec<_>>(),
        })
    }

    /// Structural checks that need no interface.
    pub fn validate(&self) -> Result<(), Error> {
        if !self.firing && self.initiators.is_empty() {
            return Err(Error::Validation(
                "behaviour is not firing and declares no initiator operation".into(),
            ));
        }
        check_scope_names(&self.root, &mut Vec::new())?;
        check_replies(&self.root, &BTreeSet::new(), None)?;
        Ok(())
    }

    /// Like [`BehaviourDef::validate`], additionally flagging a second
    /// `receive` on a Request-Response operation whose reply is still due on
    /// the same sequential path.
    pub fn validate_with_request_response(&self, rr_ops: &BTreeSet<String>) -> Result<(), Error> {
        self.validate()?;
        check_replies(&self.root, &BTreeSet::new(), Some(rr_ops)).map(|_| ())
    }

    /// Every operation named by a `receive` or `reply`.
    pub fn input_operations(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.root.walk(&mut |a| match a {
            Activity::Receive { op, .. } | Activity::Reply { op, .. } => {
                out.insert(op.clone());
            }
            _ => {}
        });
        out
    }
}

fn leading_receive(a: &Activity) -> Option<&str> {
    match a {
        Activity::Receive { op, .. } => Some(op),
        Activity::Sequence(cs) => cs.first().and_then(leading_receive),
        Activity::Scope(s) => leading_receive(&s.body),
        _ => None,
    }
}

fn check_scope_names(a: &Activity, path: &mut Vec<String>) -> Result<(), Error> {
    match a {
        Activity::Scope(s) => {
            if path.contains(&s.name) {
                return Err(Error::Validation(format!("scope name {:?} repeated on one path", s.name)));
            }
            path.push(s.name.clone());
            let res = (|| {
                check_scope_names(&s.body, path)?;
                for h in s.faults.values() {
                    check_scope_names(h, path)?;
                }
                check_scope_names(&s.on_terminate, path)?;
                check_scope_names(&s.on_compensate, path)
            })();
            path.pop();
            res
        }
        Activity::Sequence(cs) | Activity::Parallel(cs) => {
            cs.iter().try_for_each(|c| check_scope_names(c, path))
        }
        Activity::If { then, otherwise, .. } => {
            check_scope_names(then, path)?;
            check_scope_names(otherwise, path)
        }
        Activity::While { body, .. } => check_scope_names(body, path),
        _ => Ok(()),
    }
}

/// Dominance check. `seen` is the set of operations received on every path
/// reaching `a`; returns the set after `a`. When `rr` is given, the set also
/// tracks which Request-Response receives still await their reply.
fn check_replies(
    a: &Activity,
    seen: &BTreeSet<String>,
    rr: Option<&BTreeSet<String>>,
) -> Result<BTreeSet<String>, Error> {
    let pending_key = |op: &str| format!("\u{0}{op}");
    Ok(match a {
        Activity::Receive { op, .. } => {
            let mut out = seen.clone();
            if let Some(rr) = rr {
                if rr.contains(op) {
                    if seen.contains(&pending_key(op)) {
                        return Err(Error::Validation(format!(
                            "second receive on request-response {op:?} before its reply"
                        )));
                    }
                    out.insert(pending_key(op));
                }
            }
            out.insert(op.clone());
            out
        }
        Activity::Reply { op, .. } => {
            if !seen.contains(op) {
                return Err(Error::Validation(format!("reply on {op:?} is not preceded by a receive")));
            }
            let mut out = seen.clone();
            out.remove(&pending_key(op));
            out
        }
        Activity::Sequence(cs) => {
            let mut cur = seen.clone();
            for c in cs.iter() {
                cur = check_replies(c, &cur, rr)?;
            }
            cur
        }
        Activity::Parallel(cs) => {
            let mut out = seen.clone();
            for c in cs.iter() {
                out.extend(check_replies(c, seen, rr)?);
            }
            out
        }
        Activity::If { then, otherwise, .. } => {
            let t = check_replies(then, seen, rr)?;
            let e = check_replies(otherwise, seen, rr)?;
            // receives must hold on both branches; pending replies on either
            let mut out: BTreeSet<String> = t.intersection(&e).cloned().collect();
            out.extend(t.union(&e).filter(|k| k.starts_with('\u{0}')).cloned());
            out
        }
        Activity::While { body, .. } => {
            check_replies(body, seen, rr)?;
            seen.clone()
        }
        Activity::Scope(s) => {
            let body = check_replies(&s.body, seen, rr)?;
            let mut out = body;
            for h in s.faults.values() {
                let after = check_replies(h, seen, None)?;
                out = out.intersection(&after).cloned().collect();
            }
            check_replies(&s.on_terminate, seen, None)?;
            check_replies(&s.on_compensate, seen, None)?;
            out
        }
        _ => seen.clone(),
    })
}

fn string_list(v: &Json) -> Result<Vec<String>, Error> {
    v.as_array()
        .ok_or_else(|| Error::Parse(format!("expected a list of names, got {v}")))?
        .iter()
        .map(|x| {
            x.as_str()
                .map(str::to_owned)
                .ok_or_else(|| Error::Parse(format!("expected a name, got {x}")))
        })
        .collect()
}

fn as_str<'a>(v: &'a Json, what: &str) -> Result<&'a str, Error> {
    v.as_str()
        .ok_or_else(|| Error::Parse(format!("{what} must be a string, got {v}")))
}

fn field<'a>(obj: &'a Map<String, Json>, key: &str, node: &str) -> Result<&'a Json, Error> {
    obj.get(key)
        .ok_or_else(|| Error::Parse(format!("{node} is missing {key:?}")))
}

fn only_keys(obj: &Map<String, Json>, allowed: &[&str], node: &str) -> Result<(), Error> {
    for k in obj.keys() {
        if !allowed.contains(&k.as_str()) {
            return Err(Error::Parse(format!("{node} has unknown key {k:?}")));
        }
    }
    Ok(())
}

fn parse_expr(v: &Json) -> Result<Expression, Error> {
    Expression::parse(as_str(v, "expression")?)
}

fn parse_var(v: &Json) -> Result<VarName, Error> {
    VarName::new(as_str(v, "variable")?).map_err(|e| Error::Parse(e.to_string()))
}

fn parse_prefix(v: Option<&Json>) -> Result<String, Error> {
    let p = match v {
        None => return Ok(String::new()),
        Some(v) => as_str(v, "into")?,
    };
    if p.is_empty() || VarName::is_valid(p) {
        Ok(p.to_owned())
    } else {
        Err(Error::Parse(format!("invalid variable prefix {p:?}")))
    }
}

fn parse_expr_map(v: Option<&Json>) -> Result<ExprMap, Error> {
    let Some(v) = v else { return Ok(ExprMap::new()) };
    let obj = v
        .as_object()
        .ok_or_else(|| Error::Parse(format!("expected an object of expressions, got {v}")))?;
    obj.iter()
        .map(|(k, e)| {
            Ok((
                VarName::new(k.clone()).map_err(|e| Error::Parse(e.to_string()))?,
                parse_expr(e)?,
            ))
        })
        .collect()
}

fn pair<'a>(v: &'a Json, node: &str) -> Result<(&'a Json, &'a Json), Error> {
    match v.as_array().map(Vec::as_slice) {
        Some([a, b]) => Ok((a, b)),
        _ => Err(Error::Parse(format!("{node} expects a two-element list, got {v}"))),
    }
}

fn parse_activity(doc: &Json) -> Result<Activity, Error> {
    if doc.as_str() == Some("nil") {
        return Ok(Activity::Nil);
    }
    let obj = doc
        .as_object()
        .filter(|o| o.len() == 1)
        .ok_or_else(|| Error::Parse(format!("malformed activity node {doc}")))?;
    let (kind, body) = obj.iter().next().expect("one key");
    let node = kind.as_str();
    let sub = |key: &str| -> Result<&Map<String, Json>, Error> {
        body.as_object()
            .ok_or_else(|| Error::Parse(format!("{key} expects an object, got {body}")))
    };
    Ok(match node {
        "seq" | "par" => {
            let children = body
                .as_array()
                .ok_or_else(|| Error::Parse(format!("{node} expects a list")))?
                .iter()
                .map(parse_activity)
                .collect::<Result<Vec<_>, _>>()?;
            if node == "seq" {
                Activity::seq(children)
            } else {
                Activity::par(children)
            }
        }
        "if" => {
            let o = sub(node)?;
            only_keys(o, &["cond", "then", "else"], node)?;
            Activity::If {
                cond: parse_expr(field(o, "cond", node)?)?,
                then: Arc::new(parse_activity(field(o, "then", node)?)?),
                otherwise: Arc::new(o.get("else").map(parse_activity).transpose()?.unwrap_or(Activity::Nil)),
            }
        }
        "while" => {
            let o = sub(node)?;
            only_keys(o, &["cond", "body"], node)?;
            Activity::While {
                cond: parse_expr(field(o, "cond", node)?)?,
                body: Arc::new(parse_activity(field(o, "body", node)?)?),
            }
        }
        "assign" => {
            let (x, e) = pair(body, node)?;
            Activity::Assign { var: parse_var(x)?, expr: parse_expr(e)? }
        }
        "receive" => {
            let o = sub(node)?;
            only_keys(o, &["op", "into"], node)?;
            Activity::Receive {
                op: as_str(field(o, "op", node)?, "op")?.to_owned(),
                into: parse_prefix(o.get("into"))?,
            }
        }
        "reply" => {
            let o = sub(node)?;
            only_keys(o, &["op", "from"], node)?;
            Activity::Reply {
                op: as_str(field(o, "op", node)?, "op")?.to_owned(),
                from: parse_expr_map(o.get("from"))?,
            }
        }
        "notify" => {
            let o = sub(node)?;
            only_keys(o, &["port", "op", "payload"], node)?;
            Activity::Notify {
                port: as_str(field(o, "port", node)?, "port")?.to_owned(),
                op: as_str(field(o, "op", node)?, "op")?.to_owned(),
                payload: parse_expr_map(o.get("payload"))?,
            }
        }
        "solicit" => {
            let o = sub(node)?;
            only_keys(o, &["port", "op", "payload", "into"], node)?;
            Activity::Solicit {
                port: as_str(field(o, "port", node)?, "port")?.to_owned(),
                op: as_str(field(o, "op", node)?, "op")?.to_owned(),
                payload: parse_expr_map(o.get("payload"))?,
                into: parse_prefix(o.get("into"))?,
            }
        }
        "throw" => Activity::Throw(Fault::new(as_str(body, "fault")?)),
        "compensate" => Activity::Compensate(as_str(body, "scope")?.to_owned()),
        "scope" => {
            let o = sub(node)?;
            only_keys(o, &["name", "body", "faults", "onTerminate", "onCompensate"], node)?;
            let opt = |k: &str| o.get(k).map(parse_activity).transpose().map(|a| a.unwrap_or(Activity::Nil));
            let faults = match o.get("faults") {
                None => BTreeMap::new(),
                Some(f) => f
                    .as_object()
                    .ok_or_else(|| Error::Parse("scope faults must be an object".into()))?
                    .iter()
                    .map(|(k, a)| Ok((k.clone(), parse_activity(a)?)))
                    .collect::<Result<_, Error>>()?,
            };
            Activity::Scope(Arc::new(ScopeDef {
                name: as_str(field(o, "name", node)?, "scope name")?.to_owned(),
                body: parse_activity(field(o, "body", node)?)?,
                faults,
                on_terminate: opt("onTerminate")?,
                on_compensate: opt("onCompensate")?,
            }))
        }
        "gread" => {
            let (x, into) = pair(body, node)?;
            Activity::GlobalRead { var: parse_var(x)?, into: parse_var(into)? }
        }
        "gwrite" => {
            let (x, e) = pair(body, node)?;
            Activity::GlobalWrite { var: parse_var(x)?, value: parse_expr(e)? }
        }
        "gadd" => {
            let (x, e) = pair(body, node)?;
            Activity::GlobalAdd { var: parse_var(x)?, delta: parse_expr(e)? }
        }
        "sget" => {
            let (k, into) = pair(body, node)?;
            Activity::StorageGet { key: as_str(k, "key")?.to_owned(), into: parse_var(into)? }
        }
        "sput" => {
            let (k, e) = pair(body, node)?;
            Activity::StoragePut { key: as_str(k, "key")?.to_owned(), value: parse_expr(e)? }
        }
        "sdel" => Activity::StorageDel { key: as_str(body, "key")?.to_owned() },
        "embed" => {
            let o = sub(node)?;
            only_keys(o, &["service", "as"], node)?;
            Activity::Embed {
                service: parse_expr(field(o, "service", node)?)?,
                name: parse_expr(field(o, "as", node)?)?,
            }
        }
        "unembed" => Activity::Unembed { name: parse_expr(body)? },
        "redirect" => {
            let o = sub(node)?;
            only_keys(o, &["resource", "target", "private"], node)?;
            Activity::Redirect {
                resource: parse_expr(field(o, "resource", node)?)?,
                target: parse_expr(field(o, "target", node)?)?,
                private_to: o.get("private").map(|p| as_str(p, "private").map(str::to_owned)).transpose()?,
            }
        }
        other => return Err(Error::Parse(format!("unknown activity kind {other:?}"))),
    })
}

fn expr_map_json(m: &ExprMap) -> Json {
    Json::Object(
        m.iter()
            .map(|(k, e)| (k.to_string(), Json::String(e.source().to_owned())))
            .collect(),
    )
}

fn e(x: &Expression) -> Json {
    Json::String(x.source().to_owned())
}

fn activity_to_json(a: &Activity) -> Json {
    match a {
        Activity::Nil => json!("nil"),
        Activity::Receive { op, into } => json!({"receive": {"op": op, "into": into}}),
        Activity::Reply { op, from } => json!({"reply": {"op": op, "from": expr_map_json(from)}}),
        Activity::Notify { port, op, payload } => {
            json!({"notify": {"port": port, "op": op, "payload": expr_map_json(payload)}})
        }
        Activity::Solicit { port, op, payload, into } => json!({"solicit": {
            "port": port, "op": op, "payload": expr_map_json(payload), "into": into}}),
        Activity::Assign { var, expr } => json!({"assign": [var.as_str(), e(expr)]}),
        Activity::Sequence(cs) => json!({"seq": cs.iter().map(activity_to_json).collect::<Vec<_>>()}),
        Activity::Parallel(cs) => json!({"par": cs.iter().map(activity_to_json).collect::<Vec<_>>()}),
        Activity::If { cond, then, otherwise } => json!({"if": {
            "cond": e(cond), "then": activity_to_json(then), "else": activity_to_json(otherwise)}}),
        Activity::While { cond, body } => json!({"while": {"cond": e(cond), "body": activity_to_json(body)}}),
        Activity::Throw(f) => json!({"throw": f.name()}),
        Activity::Compensate(s) => json!({"compensate": s}),
        Activity::Scope(s) => json!({"scope": {
            "name": s.name,
            "body": activity_to_json(&s.body),
            "faults": s.faults.iter().map(|(k, v)| (k.clone(), activity_to_json(v))).collect::<Map<_, _>>(),
            "onTerminate": activity_to_json(&s.on_terminate),
            "onCompensate": activity_to_json(&s.on_compensate),
        }}),
        Activity::GlobalRead { var, into } => json!({"gread": [var.as_str(), into.as_str()]}),
        Activity::GlobalWrite { var, value } => json!({"gwrite": [var.as_str(), e(value)]}),
        Activity::GlobalAdd { var, delta } => json!({"gadd": [var.as_str(), e(delta)]}),
        Activity::StorageGet { key, into } => json!({"sget": [key, into.as_str()]}),
        Activity::StoragePut { key, value } => json!({"sput": [key, e(value)]}),
        Activity::StorageDel { key } => json!({"sdel": key}),
        Activity::Embed { service, name } => json!({"embed": {"service": e(service), "as": e(name)}}),
        Activity::Unembed { name } => json!({"unembed": e(name)}),
        Activity::Redirect { resource, target, private_to } => {
            let mut o = Map::new();
            o.insert("resource".into(), e(resource));
            o.insert("target".into(), e(target));
            if let Some(p) = private_to {
                o.insert("private".into(), json!(p));
            }
            json!({ "redirect": o })
        }
    }
}
