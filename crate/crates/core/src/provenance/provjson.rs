//! W3C PROV-JSON. Entity, activity and agent attributes use the `prov:`
//! names where PROV has one; the rest use `voprov:`, user attributes of
//! entities are prefixed `gw:` and activity parameters `param:`. Activity
//! descriptions, which PROV lacks, live in a top-level
//! `voprov:activityDescription` member.

use std::path::Path;

use serde_json::{json, Map, Value};

use super::{
    ActivityDescription, AgentKind, ParamType, ParameterDescription, ProvActivity, ProvAgent, ProvEntity,
    ProvError, ProvGraph, Used, WasAssociatedWith, WasAttributedTo, WasGeneratedBy,
};
use crate::obscore::write_atomic;

const ATTR_PREFIX: &str = "gw:";
const PARAM_PREFIX: &str = "param:";
const DESCRIPTIONS: &str = "voprov:activityDescription";

fn put(obj: &mut Map<String, Value>, key: &str, v: &Option<String>) {
    if let Some(v) = v {
        obj.insert(key.to_owned(), Value::String(v.clone()));
    }
}

fn relation(fields: [(&str, &str); 2], role: &Option<String>) -> Value {
    let mut o = Map::new();
    for (k, v) in fields {
        o.insert(k.to_owned(), Value::String(v.to_owned()));
    }
    put(&mut o, "prov:role", role);
    Value::Object(o)
}

pub fn serialize_provjson(graph: &ProvGraph) -> Vec<u8> {
    let mut entities = Map::new();
    for (id, e) in &graph.entities {
        let mut o = Map::new();
        o.insert("prov:label".into(), Value::String(e.name.clone()));
        put(&mut o, "prov:location", &e.location);
        put(&mut o, "voprov:generatedAtTime", &e.generated_at);
        put(&mut o, "voprov:comment", &e.comment);
        for (k, v) in &e.attributes {
            o.insert(format!("{ATTR_PREFIX}{k}"), Value::String(v.clone()));
        }
        entities.insert(id.clone(), Value::Object(o));
    }
    let mut activities = Map::new();
    for (id, a) in &graph.activities {
        let mut o = Map::new();
        o.insert("prov:label".into(), Value::String(a.name.clone()));
        put(&mut o, "prov:startTime", &a.start_time);
        put(&mut o, "prov:endTime", &a.end_time);
        put(&mut o, "voprov:description", &a.description_ref);
        put(&mut o, "voprov:comment", &a.comment);
        put(&mut o, "voprov:workflow", &a.workflow);
        put(&mut o, "voprov:instrument", &a.instrument);
        for (k, v) in &a.parameters {
            o.insert(format!("{PARAM_PREFIX}{k}"), Value::String(v.clone()));
        }
        activities.insert(id.clone(), Value::Object(o));
    }
    let mut agents = Map::new();
    for (id, a) in &graph.agents {
        agents.insert(
            id.clone(),
            json!({"prov:label": a.name, "prov:type": a.kind.prov_type()}),
        );
    }
    let mut descriptions = Map::new();
    for (id, d) in &graph.descriptions {
        let params: Vec<Value> = d
            .parameters
            .iter()
            .map(|p| json!({"name": p.name, "type": p.kind.as_str(), "unit": p.unit, "required": p.required}))
            .collect();
        descriptions.insert(
            id.clone(),
            json!({"voprov:name": d.name, "voprov:version": d.version, "voprov:doc": d.doc, "voprov:parameters": params}),
        );
    }
    let numbered = |prefix: &str, items: Vec<Value>| -> Value {
        Value::Object(
            items
                .into_iter()
                .enumerate()
                .map(|(i, v)| (format!("_:{prefix}{}", i + 1), v))
                .collect(),
        )
    };
    let doc = json!({
        "prefix": {
            "prov": "http://www.w3.org/ns/prov#",
            "voprov": "http://www.ivoa.net/documents/ProvenanceDM/ns/voprov/",
            "gw": "urn:x-gateway:attribute:",
            "param": "urn:x-gateway:parameter:",
        },
        "entity": entities,
        "activity": activities,
        "agent": agents,
        "used": numbered("u", graph.used.iter().map(|u| relation([("prov:activity", &u.activity), ("prov:entity", &u.entity)], &u.role)).collect()),
        "wasGeneratedBy": numbered("g", graph.was_generated_by.iter().map(|g| relation([("prov:entity", &g.entity), ("prov:activity", &g.activity)], &g.role)).collect()),
        "wasAttributedTo": numbered("t", graph.was_attributed_to.iter().map(|a| relation([("prov:entity", &a.entity), ("prov:agent", &a.agent)], &a.role)).collect()),
        "wasAssociatedWith": numbered("s", graph.was_associated_with.iter().map(|a| relation([("prov:activity", &a.activity), ("prov:agent", &a.agent)], &a.role)).collect()),
        DESCRIPTIONS: descriptions,
    });
    let mut out = serde_json::to_vec_pretty(&doc).expect("json values serialize");
    out.push(b'\n');
    out
}

fn bad(m: impl Into<String>) -> ProvError {
    ProvError::MalformedDocument(m.into())
}

/// Plain string or typed literal `{"$": "...", "type": "..."}`.
fn literal(v: &Value, ctx: &str) -> Result<String, ProvError> {
    match v {
        Value::String(s) => Ok(s.clone()),
        Value::Object(o) => match o.get("$") {
            Some(Value::String(s)) => Ok(s.clone()),
            _ => Err(bad(format!("{ctx}: typed literal without string \"$\""))),
        },
        _ => Err(bad(format!("{ctx}: expected a string"))),
    }
}

fn member<'a>(doc: &'a Map<String, Value>, key: &str) -> Result<Option<&'a Map<String, Value>>, ProvError> {
    match doc.get(key) {
        None => Ok(None),
        Some(Value::Object(o)) => Ok(Some(o)),
        Some(_) => Err(bad(format!("member {key} is not an object"))),
    }
}

type Records<'a> = Vec<(&'a String, &'a Map<String, Value>)>;

fn records<'a>(doc: &'a Map<String, Value>, key: &str) -> Result<Records<'a>, ProvError> {
    let Some(m) = member(doc, key)? else {
        return Ok(Vec::new());
    };
    m.iter()
        .map(|(id, v)| match v {
            Value::Object(o) => Ok((id, o)),
            _ => Err(bad(format!("{key} {id} is not an object"))),
        })
        .collect()
}

fn opt(o: &Map<String, Value>, key: &str, ctx: &str) -> Result<Option<String>, ProvError> {
    o.get(key).map(|v| literal(v, ctx)).transpose()
}

fn req(o: &Map<String, Value>, key: &str, ctx: &str) -> Result<String, ProvError> {
    opt(o, key, ctx)?.ok_or_else(|| bad(format!("{ctx}: missing {key}")))
}

pub fn parse_provjson(bytes: &[u8]) -> Result<ProvGraph, ProvError> {
    let doc: Value = serde_json::from_slice(bytes).map_err(|e| bad(e.to_string()))?;
    let Value::Object(doc) = doc else {
        return Err(bad("document is not a JSON object"));
    };
    let mut g = ProvGraph::new();

    for (id, o) in records(&doc, "entity")? {
        let ctx = format!("entity {id}");
        let mut e = ProvEntity::new(id.clone(), opt(o, "prov:label", &ctx)?.unwrap_or_else(|| id.clone()));
        for (k, v) in o {
            let v = literal(v, &ctx)?;
            match k.as_str() {
                "prov:label" => {}
                "prov:location" => e.location = Some(v),
                "voprov:generatedAtTime" => e.generated_at = Some(v),
                "voprov:comment" => e.comment = Some(v),
                other => {
                    let key = other.strip_prefix(ATTR_PREFIX).unwrap_or(other);
                    e.attributes.insert(key.to_owned(), v);
                }
            }
        }
        g.entities.insert(id.clone(), e);
    }
    for (id, o) in records(&doc, "activity")? {
        let ctx = format!("activity {id}");
        let mut a = ProvActivity {
            id: id.clone(),
            name: opt(o, "prov:label", &ctx)?.unwrap_or_else(|| id.clone()),
            ..Default::default()
        };
        for (k, v) in o {
            let v = literal(v, &ctx)?;
            match k.as_str() {
                "prov:label" => {}
                "prov:startTime" => a.start_time = Some(v),
                "prov:endTime" => a.end_time = Some(v),
                "voprov:description" => a.description_ref = Some(v),
                "voprov:comment" => a.comment = Some(v),
                "voprov:workflow" => a.workflow = Some(v),
                "voprov:instrument" => a.instrument = Some(v),
                other => {
                    if let Some(p) = other.strip_prefix(PARAM_PREFIX) {
                        a.parameters.insert(p.to_owned(), v);
                    }
                }
            }
        }
        g.activities.insert(id.clone(), a);
    }
    for (id, o) in records(&doc, "agent")? {
        let ctx = format!("agent {id}");
        let kind = match opt(o, "prov:type", &ctx)? {
            None => AgentKind::default(),
            Some(t) => AgentKind::from_prov_type(&t).ok_or_else(|| bad(format!("{ctx}: unknown prov:type {t}")))?,
        };
        g.agents.insert(
            id.clone(),
            ProvAgent {
                id: id.clone(),
                name: opt(o, "prov:label", &ctx)?.unwrap_or_else(|| id.clone()),
                kind,
            },
        );
    }
    for (id, o) in records(&doc, DESCRIPTIONS)? {
        let ctx = format!("description {id}");
        let mut parameters = Vec::new();
        match o.get("voprov:parameters") {
            None => {}
            Some(Value::Array(items)) => {
                for p in items {
                    let Value::Object(p) = p else {
                        return Err(bad(format!("{ctx}: parameter is not an object")));
                    };
                    let kind = req(p, "type", &ctx)?;
                    parameters.push(ParameterDescription {
                        name: req(p, "name", &ctx)?,
                        kind: ParamType::parse(&kind).ok_or_else(|| bad(format!("{ctx}: unknown type {kind}")))?,
                        unit: opt(p, "unit", &ctx)?.unwrap_or_default(),
                        required: match p.get("required") {
                            None => false,
                            Some(Value::Bool(b)) => *b,
                            Some(_) => return Err(bad(format!("{ctx}: required is not a boolean"))),
                        },
                    });
                }
            }
            Some(_) => return Err(bad(format!("{ctx}: voprov:parameters is not an array"))),
        }
        g.descriptions.insert(
            id.clone(),
            ActivityDescription {
                id: id.clone(),
                name: req(o, "voprov:name", &ctx)?,
                version: opt(o, "voprov:version", &ctx)?.unwrap_or_default(),
                doc: opt(o, "voprov:doc", &ctx)?.unwrap_or_default(),
                parameters,
            },
        );
    }
    for (id, o) in records(&doc, "used")? {
        let ctx = format!("used {id}");
        g.used.push(Used {
            activity: req(o, "prov:activity", &ctx)?,
            entity: req(o, "prov:entity", &ctx)?,
            role: opt(o, "prov:role", &ctx)?,
        });
    }
    for (id, o) in records(&doc, "wasGeneratedBy")? {
        let ctx = format!("wasGeneratedBy {id}");
        g.was_generated_by.push(WasGeneratedBy {
            entity: req(o, "prov:entity", &ctx)?,
            activity: req(o, "prov:activity", &ctx)?,
            role: opt(o, "prov:role", &ctx)?,
        });
    }
    for (id, o) in records(&doc, "wasAttributedTo")? {
        let ctx = format!("wasAttributedTo {id}");
        g.was_attributed_to.push(WasAttributedTo {
            entity: req(o, "prov:entity", &ctx)?,
            agent: req(o, "prov:agent", &ctx)?,
            role: opt(o, "prov:role", &ctx)?,
        });
    }
    for (id, o) in records(&doc, "wasAssociatedWith")? {
        let ctx = format!("wasAssociatedWith {id}");
        g.was_associated_with.push(WasAssociatedWith {
            activity: req(o, "prov:activity", &ctx)?,
            agent: req(o, "prov:agent", &ctx)?,
            role: opt(o, "prov:role", &ctx)?,
        });
    }
    g.validate().map_err(|e| bad(e.to_string()))?;
    Ok(g)
}

/// The store file is the PROV-JSON document itself; a missing file is an
/// empty store.
pub fn load_store_file(path: &Path) -> Result<ProvGraph, ProvError> {
    match std::fs::read(path) {
        Ok(bytes) => parse_provjson(&bytes),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(ProvGraph::new()),
        Err(e) => Err(ProvError::Io(format!("{}: {e}", path.display()))),
    }
}

pub fn save_store_file(graph: &ProvGraph, path: &Path) -> Result<(), ProvError> {
    write_atomic(path, &serialize_provjson(graph)).map_err(|e| ProvError::Io(format!("{}: {e}", path.display())))
}
