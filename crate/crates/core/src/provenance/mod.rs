//! Provenance graph (entities, activities, agents, activity descriptions and
//! the four relations between them), capture of runs, last-step keyword
//! embedding and PROV-JSON / PROV-N serializations.

mod capture;
mod laststep;
mod provjson;
mod provn;

pub use capture::{GeneratedEntity, Run};
pub use laststep::{
    decode_cards, decode_last_step, extract_on_top, reconstruct, ActivityView, LastStep, LastStepView, MAX_INDEXED,
};
pub use provjson::{load_store_file, parse_provjson, save_store_file, serialize_provjson};
pub use provn::serialize_provn;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use thiserror::Error;

/// Attribute marking entities created only because something referenced them.
pub const STUB_ATTRIBUTE: &str = "stub";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProvError {
    #[error("unknown activity description {0}")]
    UnknownDescription(String),
    #[error("duplicate activity description {0}")]
    DuplicateDescription(String),
    #[error("parameter {param}: {reason}")]
    ParamType { param: String, reason: String },
    #[error("entity id {0} already exists")]
    DuplicateEntityId(String),
    #[error("activity id {0} already exists")]
    DuplicateActivityId(String),
    #[error("cycle: {0}")]
    Cycle(String),
    #[error("unknown entity {0}")]
    UnknownEntity(String),
    #[error("entity {0} has no generating activity")]
    NoGeneration(String),
    #[error("malformed provenance keyword: {0}")]
    MalformedKeyword(String),
    #[error("conflicting last-step records for activity {0}")]
    ConflictingActivity(String),
    #[error("malformed PROV document: {0}")]
    MalformedDocument(String),
    #[error("invalid provenance graph: {0}")]
    InvalidGraph(String),
    #[error("i/o error: {0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ProvEntity {
    pub id: String,
    pub name: String,
    pub location: Option<String>,
    pub generated_at: Option<String>,
    pub comment: Option<String>,
    pub attributes: BTreeMap<String, String>,
}

impl ProvEntity {
    pub fn new(id: impl Into<String>, name: impl Into<String>) -> Self {
        ProvEntity {
            id: id.into(),
            name: name.into(),
            ..Default::default()
        }
    }

    pub fn stub(id: &str) -> Self {
        let mut e = ProvEntity::new(id, id);
        e.attributes.insert(STUB_ATTRIBUTE.into(), "true".into());
        e
    }

    pub fn is_stub(&self) -> bool {
        self.attributes.get(STUB_ATTRIBUTE).is_some_and(|v| v == "true")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ProvActivity {
    pub id: String,
    pub name: String,
    /// ISO-8601 UTC; compared lexicographically.
    pub start_time: Option<String>,
    pub end_time: Option<String>,
    pub description_ref: Option<String>,
    pub parameters: BTreeMap<String, String>,
    pub comment: Option<String>,
    pub workflow: Option<String>,
    pub instrument: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AgentKind {
    #[default]
    Person,
    SoftwareAgent,
    Organization,
}

impl AgentKind {
    pub fn prov_type(self) -> &'static str {
        match self {
            AgentKind::Person => "prov:Person",
            AgentKind::SoftwareAgent => "prov:SoftwareAgent",
            AgentKind::Organization => "prov:Organization",
        }
    }

    pub fn from_prov_type(s: &str) -> Option<Self> {
        Some(match s {
            "prov:Person" => AgentKind::Person,
            "prov:SoftwareAgent" => AgentKind::SoftwareAgent,
            "prov:Organization" => AgentKind::Organization,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProvAgent {
    pub id: String,
    pub name: String,
    pub kind: AgentKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamType {
    String,
    Float,
    Int,
}

impl ParamType {
    pub fn as_str(self) -> &'static str {
        match self {
            ParamType::String => "string",
            ParamType::Float => "float",
            ParamType::Int => "int",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "string" => ParamType::String,
            "float" => ParamType::Float,
            "int" => ParamType::Int,
            _ => return None,
        })
    }

    pub fn accepts(self, value: &str) -> bool {
        match self {
            ParamType::String => true,
            ParamType::Float => value.trim().parse::<f64>().is_ok_and(f64::is_finite),
            ParamType::Int => value.trim().parse::<i64>().is_ok(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParameterDescription {
    pub name: String,
    pub kind: ParamType,
    pub unit: String,
    pub required: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActivityDescription {
    pub id: String,
    pub name: String,
    pub version: String,
    pub doc: String,
    pub parameters: Vec<ParameterDescription>,
}

impl ActivityDescription {
    fn check(&self) -> Result<(), ProvError> {
        let mut seen = BTreeSet::new();
        for p in &self.parameters {
            if p.name.is_empty() || p.name.contains('=') {
                return Err(ProvError::ParamType {
                    param: p.name.clone(),
                    reason: "parameter names must be non-empty and free of '='".into(),
                });
            }
            if !seen.insert(p.name.as_str()) {
                return Err(ProvError::ParamType {
                    param: p.name.clone(),
                    reason: format!("declared twice in description {}", self.id),
                });
            }
        }
        Ok(())
    }

    /// Required parameters present, values of the declared type, nothing
    /// undeclared.
    pub fn check_parameters(&self, params: &BTreeMap<String, String>) -> Result<(), ProvError> {
        for p in &self.parameters {
            match params.get(&p.name) {
                None if p.required => {
                    return Err(ProvError::ParamType {
                        param: p.name.clone(),
                        reason: "required parameter missing".into(),
                    })
                }
                Some(v) if !p.kind.accepts(v) => {
                    return Err(ProvError::ParamType {
                        param: p.name.clone(),
                        reason: format!("{v:?} is not a valid {}", p.kind.as_str()),
                    })
                }
                _ => {}
            }
        }
        if let Some(extra) = params.keys().find(|k| !self.parameters.iter().any(|p| &p.name == *k)) {
            return Err(ProvError::ParamType {
                param: extra.clone(),
                reason: format!("not declared by description {}", self.id),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Used {
    pub activity: String,
    pub entity: String,
    pub role: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct WasGeneratedBy {
    pub entity: String,
    pub activity: String,
    pub role: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct WasAttributedTo {
    pub entity: String,
    pub agent: String,
    pub role: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct WasAssociatedWith {
    pub activity: String,
    pub agent: String,
    pub role: Option<String>,
}

/// Nodes are id-keyed; relation lists keep insertion order (the order of
/// `used` is the order of PRVUSEn keywords).
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ProvGraph {
    pub entities: BTreeMap<String, ProvEntity>,
    pub activities: BTreeMap<String, ProvActivity>,
    pub agents: BTreeMap<String, ProvAgent>,
    pub descriptions: BTreeMap<String, ActivityDescription>,
    pub used: Vec<Used>,
    pub was_generated_by: Vec<WasGeneratedBy>,
    pub was_attributed_to: Vec<WasAttributedTo>,
    pub was_associated_with: Vec<WasAssociatedWith>,
}

impl ProvGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
            && self.activities.is_empty()
            && self.agents.is_empty()
            && self.descriptions.is_empty()
    }

    pub fn register_description(&mut self, desc: ActivityDescription) -> Result<(), ProvError> {
        desc.check()?;
        if self.descriptions.contains_key(&desc.id) {
            return Err(ProvError::DuplicateDescription(desc.id));
        }
        self.descriptions.insert(desc.id.clone(), desc);
        Ok(())
    }

    pub fn add_entity(&mut self, entity: ProvEntity) -> Result<(), ProvError> {
        if entity.id.is_empty() {
            return Err(ProvError::InvalidGraph("empty entity id".into()));
        }
        if self.entities.contains_key(&entity.id) {
            return Err(ProvError::DuplicateEntityId(entity.id));
        }
        self.entities.insert(entity.id.clone(), entity);
        Ok(())
    }

    pub fn add_agent(&mut self, agent: ProvAgent) {
        self.agents.entry(agent.id.clone()).or_insert(agent);
    }

    /// The activity that generated `entity_id`, if any.
    pub fn generation_of(&self, entity_id: &str) -> Option<&WasGeneratedBy> {
        self.was_generated_by.iter().find(|g| g.entity == entity_id)
    }

    /// Used entity ids of an activity, in recorded order.
    pub fn used_by(&self, activity_id: &str) -> Vec<&str> {
        self.used
            .iter()
            .filter(|u| u.activity == activity_id)
            .map(|u| u.entity.as_str())
            .collect()
    }

    /// Entity ids generated by an activity, in recorded order.
    pub fn generated_by(&self, activity_id: &str) -> Vec<&str> {
        self.was_generated_by
            .iter()
            .filter(|g| g.activity == activity_id)
            .map(|g| g.entity.as_str())
            .collect()
    }

    pub fn agent_of(&self, activity_id: &str) -> Option<&str> {
        self.was_associated_with
            .iter()
            .find(|a| a.activity == activity_id)
            .map(|a| a.agent.as_str())
    }

    /// Referential integrity, single generation, start <= end and
    /// acyclicity of the used / wasGeneratedBy digraph.
    pub fn validate(&self) -> Result<(), ProvError> {
        let bad = |m: String| Err(ProvError::InvalidGraph(m));
        for (id, e) in &self.entities {
            if id.is_empty() || *id != e.id {
                return bad(format!("entity key {id:?} does not match id {:?}", e.id));
            }
        }
        for (id, a) in &self.activities {
            if id.is_empty() || *id != a.id {
                return bad(format!("activity key {id:?} does not match id {:?}", a.id));
            }
            if let (Some(s), Some(e)) = (&a.start_time, &a.end_time) {
                if s > e {
                    return bad(format!("activity {id} ends ({e}) before it starts ({s})"));
                }
            }
            if let Some(d) = &a.description_ref {
                if !self.descriptions.contains_key(d) {
                    return bad(format!("activity {id} references unknown description {d}"));
                }
            }
        }
        for (id, a) in &self.agents {
            if id.is_empty() || *id != a.id {
                return bad(format!("agent key {id:?} does not match id {:?}", a.id));
            }
        }
        for (id, d) in &self.descriptions {
            if *id != d.id {
                return bad(format!("description key {id:?} does not match id {:?}", d.id));
            }
            d.check()?;
        }
        let ent = |id: &str| self.entities.contains_key(id);
        let act = |id: &str| self.activities.contains_key(id);
        let agt = |id: &str| self.agents.contains_key(id);
        for u in &self.used {
            if !act(&u.activity) || !ent(&u.entity) {
                return bad(format!("used({}, {}) has a dangling endpoint", u.activity, u.entity));
            }
        }
        let mut generated = BTreeSet::new();
        for g in &self.was_generated_by {
            if !act(&g.activity) || !ent(&g.entity) {
                return bad(format!(
                    "wasGeneratedBy({}, {}) has a dangling endpoint",
                    g.entity, g.activity
                ));
            }
            if !generated.insert(g.entity.as_str()) {
                return bad(format!("entity {} is generated more than once", g.entity));
            }
        }
        for a in &self.was_attributed_to {
            if !ent(&a.entity) || !agt(&a.agent) {
                return bad(format!(
                    "wasAttributedTo({}, {}) has a dangling endpoint",
                    a.entity, a.agent
                ));
            }
        }
        for a in &self.was_associated_with {
            if !act(&a.activity) || !agt(&a.agent) {
                return bad(format!(
                    "wasAssociatedWith({}, {}) has a dangling endpoint",
                    a.activity, a.agent
                ));
            }
        }
        self.check_acyclic()
    }

    fn check_acyclic(&self) -> Result<(), ProvError> {
        // Nodes: entities then activities. Edges follow derivation time:
        // entity -> activity that used it, activity -> entity it generated.
        let n_ent = self.entities.len();
        let index: HashMap<&str, usize> = self.entities.keys().map(String::as_str).enumerate().map(|(i, k)| (k, i)).collect();
        let act_index: HashMap<&str, usize> = self
            .activities
            .keys()
            .map(String::as_str)
            .enumerate()
            .map(|(i, k)| (k, n_ent + i))
            .collect();
        let n = n_ent + self.activities.len();
        let mut adj = vec![Vec::new(); n];
        for u in &self.used {
            adj[index[u.entity.as_str()]].push(act_index[u.activity.as_str()]);
        }
        for g in &self.was_generated_by {
            adj[act_index[g.activity.as_str()]].push(index[g.entity.as_str()]);
        }
        // Iterative three-colour DFS.
        let mut colour = vec![0u8; n];
        for root in 0..n {
            if colour[root] != 0 {
                continue;
            }
            let mut stack = vec![(root, 0usize)];
            colour[root] = 1;
            while let Some((node, next)) = stack.last_mut() {
                if let Some(&child) = adj[*node].get(*next) {
                    *next += 1;
                    match colour[child] {
                        0 => {
                            colour[child] = 1;
                            stack.push((child, 0));
                        }
                        1 => {
                            let name = |i: usize| {
                                if i < n_ent {
                                    self.entities.keys().nth(i).cloned().unwrap_or_default()
                                } else {
                                    self.activities.keys().nth(i - n_ent).cloned().unwrap_or_default()
                                }
                            };
                            return Err(ProvError::Cycle(format!("through {}", name(child))));
                        }
                        _ => {}
                    }
                } else {
                    colour[*node] = 2;
                    stack.pop();
                }
            }
        }
        Ok(())
    }

    /// Subgraph reachable from `entity_id` walking generation -> activity ->
    /// used entities, at most `depth` activity hops (`None` = unlimited).
    /// Agents and descriptions attached to included nodes come along;
    /// co-generated siblings of included entities do not.
    pub fn ancestry(&self, entity_id: &str, depth: Option<usize>) -> Result<ProvGraph, ProvError> {
        if !self.entities.contains_key(entity_id) {
            return Err(ProvError::UnknownEntity(entity_id.to_owned()));
        }
        let mut entities = BTreeSet::from([entity_id.to_owned()]);
        let mut activities = BTreeSet::new();
        let mut frontier = vec![entity_id.to_owned()];
        let mut hops = 0;
        while !frontier.is_empty() && depth.is_none_or(|d| hops < d) {
            let mut next = Vec::new();
            for e in &frontier {
                let Some(g) = self.generation_of(e) else { continue };
                if !activities.insert(g.activity.clone()) {
                    continue;
                }
                for u in self.used_by(&g.activity) {
                    if entities.insert(u.to_owned()) {
                        next.push(u.to_owned());
                    }
                }
            }
            frontier = next;
            hops += 1;
        }
        let mut out = ProvGraph::new();
        for e in &entities {
            out.entities.insert(e.clone(), self.entities[e].clone());
        }
        for a in &activities {
            let act = self.activities[a].clone();
            if let Some(d) = &act.description_ref {
                if let Some(desc) = self.descriptions.get(d) {
                    out.descriptions.insert(d.clone(), desc.clone());
                }
            }
            out.activities.insert(a.clone(), act);
        }
        out.used = self
            .used
            .iter()
            .filter(|u| activities.contains(&u.activity) && entities.contains(&u.entity))
            .cloned()
            .collect();
        out.was_generated_by = self
            .was_generated_by
            .iter()
            .filter(|g| activities.contains(&g.activity) && entities.contains(&g.entity))
            .cloned()
            .collect();
        out.was_attributed_to = self
            .was_attributed_to
            .iter()
            .filter(|a| entities.contains(&a.entity))
            .cloned()
            .collect();
        out.was_associated_with = self
            .was_associated_with
            .iter()
            .filter(|a| activities.contains(&a.activity))
            .cloned()
            .collect();
        for agent in out
            .was_attributed_to
            .iter()
            .map(|a| &a.agent)
            .chain(out.was_associated_with.iter().map(|a| &a.agent))
        {
            if let Some(a) = self.agents.get(agent) {
                out.agents.insert(agent.clone(), a.clone());
            }
        }
        Ok(out)
    }

    /// Adds nodes and relations of `other` that are not yet present. Existing
    /// nodes are kept as they are, except that a stub entity is replaced by
    /// a full one. A second, different generation of an entity is rejected.
    pub fn merge(&mut self, other: &ProvGraph) -> Result<(), ProvError> {
        let mut next = self.clone();
        for (id, e) in &other.entities {
            match next.entities.get(id) {
                Some(existing) if !existing.is_stub() || e.is_stub() => {}
                _ => {
                    next.entities.insert(id.clone(), e.clone());
                }
            }
        }
        for (id, a) in &other.activities {
            next.activities.entry(id.clone()).or_insert_with(|| a.clone());
        }
        for (id, a) in &other.agents {
            next.agents.entry(id.clone()).or_insert_with(|| a.clone());
        }
        for (id, d) in &other.descriptions {
            next.descriptions.entry(id.clone()).or_insert_with(|| d.clone());
        }
        for u in &other.used {
            if !next.used.contains(u) {
                next.used.push(u.clone());
            }
        }
        for g in &other.was_generated_by {
            match next.generation_of(&g.entity) {
                Some(existing) if existing.activity == g.activity => {}
                Some(existing) => {
                    return Err(ProvError::ConflictingActivity(format!(
                        "{} already generated by {}, not {}",
                        g.entity, existing.activity, g.activity
                    )))
                }
                None => next.was_generated_by.push(g.clone()),
            }
        }
        for a in &other.was_attributed_to {
            if !next.was_attributed_to.contains(a) {
                next.was_attributed_to.push(a.clone());
            }
        }
        for a in &other.was_associated_with {
            if !next.was_associated_with.contains(a) {
                next.was_associated_with.push(a.clone());
            }
        }
        next.validate()?;
        *self = next;
        Ok(())
    }
}
