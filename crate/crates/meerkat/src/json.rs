//! JSON encodings of values, errors, environments and store snapshots.

use meerkat_core::runtime::{ActionError, Rejection, StepChoice, StepRecord};
use meerkat_core::store::{Change, Store, Value};
use meerkat_core::syntax::{render_expr, ParseError};
use meerkat_core::typesys::{CompatReport, Kind, TypeEnv, TypeError, Violation};
use serde_json::{json, Map, Value as Json};

/// Base values map to JSON scalars (unit to `null`); closures and actions to
/// an object holding their source text.
pub fn value(v: &Value) -> Json {
    match v {
        Value::Int(n) => json!(n),
        Value::Bool(b) => json!(b),
        Value::Str(s) => json!(&**s),
        Value::Unit => Json::Null,
        Value::Closure(_) => json!({ "closure": v.render() }),
        Value::Action(_) => json!({ "action": v.render() }),
    }
}

pub fn option_value(v: Option<&Value>) -> Json {
    v.map_or(Json::Null, value)
}

pub fn change(c: &Change) -> Json {
    json!({
        "name": c.name,
        "old": option_value(c.old.as_ref()),
        "new": value(&c.new),
        "txn": c.txn.0,
    })
}

pub fn parse_error(e: &ParseError) -> Json {
    json!({
        "message": e.to_string(),
        "line": e.span.line,
        "col": e.span.col,
        "expected": e.expected,
        "found": e.found,
    })
}

pub fn type_error(e: &TypeError) -> Json {
    let mut m = Map::new();
    m.insert("code".into(), json!(e.code()));
    m.insert("message".into(), json!(e.to_string()));
    if let Some(n) = e.name() {
        m.insert("name".into(), json!(n));
    }
    if let Some(d) = &e.decl {
        m.insert("decl".into(), json!(d));
    }
    if let Some(s) = e.span {
        m.insert("line".into(), json!(s.line));
        m.insert("col".into(), json!(s.col));
    }
    Json::Object(m)
}

pub fn violation(v: &Violation) -> Json {
    let mut m = Map::new();
    m.insert("code".into(), json!(v.code()));
    m.insert("message".into(), json!(v.to_string()));
    match v {
        Violation::Cycle { path } => {
            m.insert("path".into(), json!(path));
        }
        Violation::InconsistentDependency { binding, dependency, .. } => {
            m.insert("binding".into(), json!(binding));
            m.insert("dependency".into(), json!(dependency));
        }
        Violation::KindFlip { name } => {
            m.insert("name".into(), json!(name));
        }
        Violation::StaleDependent { dependent, changed } => {
            m.insert("dependent".into(), json!(dependent));
            m.insert("changed".into(), json!(changed));
        }
        Violation::BadWriteTarget { binding, target } => {
            m.insert("binding".into(), json!(binding));
            m.insert("target".into(), json!(target));
        }
    }
    Json::Object(m)
}

pub fn compat_report(r: &CompatReport) -> Json {
    json!({
        "message": r.to_string(),
        "violations": r.violations.iter().map(violation).collect::<Vec<_>>(),
    })
}

/// `(reason, detail)` for a rejected evolution.
pub fn rejection(r: &Rejection) -> (String, Json) {
    let detail = match r {
        Rejection::Type(e) => type_error(e),
        Rejection::Incompatible(rep) => compat_report(rep),
        Rejection::Runtime(e) => json!({ "code": e.code(), "message": e.to_string() }),
    };
    (r.code().into(), detail)
}

pub fn action_error(e: &ActionError) -> Json {
    match e {
        ActionError::Type(t) => type_error(t),
        ActionError::Runtime(r) => json!({ "code": r.code(), "message": r.to_string() }),
    }
}

/// `{"bindings": {name: {"kind", "type", "deps"}}}`, keyed by name.
pub fn env(env: &TypeEnv) -> Json {
    let mut bindings = Map::new();
    for (name, b) in env.iter() {
        let (kind, deps) = match &b.kind {
            Kind::StateVar => ("var", Map::new()),
            Kind::Def(d) => ("def", d.iter().map(|(n, t)| (n.clone(), json!(t.to_string()))).collect()),
        };
        bindings.insert(
            name.clone(),
            json!({ "kind": kind, "type": b.ty.to_string(), "deps": Json::Object(deps) }),
        );
    }
    json!({ "bindings": Json::Object(bindings) })
}

/// `{"txn", "vars": {name: value}, "defs": {name: {"c", "expr"}}}`.
pub fn dump(store: &Store) -> Json {
    let vars: Map<String, Json> = store.vars().iter().map(|(n, c)| (n.clone(), value(&c.c))).collect();
    let defs: Map<String, Json> = store
        .defs()
        .iter()
        .map(|(n, d)| (n.clone(), json!({ "c": value(&d.c), "expr": render_expr(&d.e) })))
        .collect();
    json!({ "txn": store.committed().0, "vars": vars, "defs": defs })
}

pub fn choice(c: &StepChoice) -> Json {
    let kind = match c {
        StepChoice::EvolveOne(_) => "evolve_one",
        StepChoice::EvolveTwo(..) => "evolve_two",
        StepChoice::QueueDie => "queue_die",
        StepChoice::DoOne(_) => "do_one",
        StepChoice::DoTwo(..) => "do_two",
    };
    json!({ "step": kind, "tickets": c.tickets() })
}

pub fn parse_choice(j: &Json) -> Option<StepChoice> {
    let t: Vec<u64> = j
        .get("tickets")
        .and_then(Json::as_array)
        .map(|a| a.iter().filter_map(Json::as_u64).collect())
        .unwrap_or_default();
    Some(match (j.get("step")?.as_str()?, t.as_slice()) {
        ("evolve_one", [a]) => StepChoice::EvolveOne(*a),
        ("evolve_two", [a, b]) => StepChoice::EvolveTwo(*a, *b),
        ("queue_die", []) => StepChoice::QueueDie,
        ("do_one", [a]) => StepChoice::DoOne(*a),
        ("do_two", [a, b]) => StepChoice::DoTwo(*a, *b),
        _ => return None,
    })
}

/// One line of a scheduler trace.
pub fn trace_line(rec: &StepRecord) -> Json {
    let mut j = choice(&rec.choice);
    j["txns"] = json!(rec.txns.iter().map(|t| t.0).collect::<Vec<_>>());
    j
}
