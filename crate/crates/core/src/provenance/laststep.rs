//! Last-step flat provenance: the generating activity of one entity, its
//! software, agent, context, parameters and the ids of used and co-generated
//! entities, as FITS-embeddable `PRV*` keywords of at most 8 characters.

use std::collections::{BTreeMap, BTreeSet};

use super::{
    ActivityDescription, ProvActivity, ProvAgent, ProvEntity, ProvError, ProvGraph, Used, WasAssociatedWith,
    WasAttributedTo, WasGeneratedBy,
};
use crate::fits::{Card, Value};

/// Highest index of PRVPARn / PRVUSEn / PRVGENn (keeps keys within 8 chars).
pub const MAX_INDEXED: usize = 99;

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LastStep {
    pub entity_id: String,
    pub activity_id: String,
    pub activity_name: String,
    pub start_time: Option<String>,
    pub end_time: Option<String>,
    pub software_name: Option<String>,
    pub software_version: Option<String>,
    pub agent: Option<String>,
    pub workflow: Option<String>,
    pub instrument: Option<String>,
    /// `(name, value)` pairs; names never contain '='.
    pub parameters: Vec<(String, String)>,
    pub used: Vec<String>,
    /// Co-generated siblings, excluding `entity_id` itself.
    pub generated: Vec<String>,
}

fn malformed(m: impl Into<String>) -> ProvError {
    ProvError::MalformedKeyword(m.into())
}

impl LastStep {
    /// Ordered keyword map: fixed keys first, then PRVPARn, PRVUSEn, PRVGENn.
    pub fn to_keywords(&self) -> Result<Vec<(String, String)>, ProvError> {
        let mut out = vec![
            ("PRVENTID".to_owned(), self.entity_id.clone()),
            ("PRVACTID".to_owned(), self.activity_id.clone()),
            ("PRVACTNM".to_owned(), self.activity_name.clone()),
        ];
        for (key, v) in [
            ("PRVACTBE", &self.start_time),
            ("PRVACTEN", &self.end_time),
            ("PRVSWNAM", &self.software_name),
            ("PRVSWVER", &self.software_version),
            ("PRVAGENT", &self.agent),
            ("PRVWKFLW", &self.workflow),
            ("PRVINSTR", &self.instrument),
        ] {
            if let Some(v) = v {
                out.push((key.to_owned(), v.clone()));
            }
        }
        for (prefix, items) in [
            (
                "PRVPAR",
                self.parameters
                    .iter()
                    .map(|(k, v)| {
                        if k.contains('=') {
                            Err(malformed(format!("parameter name {k:?} contains '='")))
                        } else {
                            Ok(format!("{k}={v}"))
                        }
                    })
                    .collect::<Result<Vec<_>, _>>()?,
            ),
            ("PRVUSE", self.used.clone()),
            ("PRVGEN", self.generated.clone()),
        ] {
            if items.len() > MAX_INDEXED {
                return Err(malformed(format!(
                    "{} {prefix} entries exceed the limit of {MAX_INDEXED}",
                    items.len()
                )));
            }
            for (i, v) in items.into_iter().enumerate() {
                out.push((format!("{prefix}{}", i + 1), v));
            }
        }
        Ok(out)
    }

    pub fn to_cards(&self) -> Result<Vec<Card>, ProvError> {
        Ok(self
            .to_keywords()?
            .into_iter()
            .map(|(k, v)| Card::new(k, v))
            .collect())
    }
}

/// Parses PRV* keywords (other keys are ignored). `None` when there are none.
pub fn decode_last_step(keywords: &[(String, String)]) -> Result<Option<LastStep>, ProvError> {
    let mut fixed: BTreeMap<&str, &str> = BTreeMap::new();
    let mut indexed: BTreeMap<(&str, usize), &str> = BTreeMap::new();
    for (key, value) in keywords {
        let key = key.as_str();
        if !key.starts_with("PRV") {
            continue;
        }
        let slot = match key {
            "PRVENTID" | "PRVACTID" | "PRVACTNM" | "PRVACTBE" | "PRVACTEN" | "PRVSWNAM" | "PRVSWVER"
            | "PRVAGENT" | "PRVWKFLW" | "PRVINSTR" => fixed.insert(key, value.as_str()).is_none(),
            _ => {
                let prefix = ["PRVPAR", "PRVUSE", "PRVGEN"]
                    .into_iter()
                    .find(|p| key.starts_with(p))
                    .ok_or_else(|| malformed(format!("unknown keyword {key}")))?;
                let digits = &key[prefix.len()..];
                let n: usize = if !digits.is_empty() && !digits.starts_with('0') && digits.bytes().all(|b| b.is_ascii_digit()) {
                    digits.parse().map_err(|_| malformed(format!("bad index in {key}")))?
                } else {
                    return Err(malformed(format!("bad index in {key}")));
                };
                if n > MAX_INDEXED {
                    return Err(malformed(format!("index of {key} exceeds {MAX_INDEXED}")));
                }
                indexed.insert((prefix, n), value.as_str()).is_none()
            }
        };
        if !slot {
            return Err(malformed(format!("{key} appears twice")));
        }
    }
    if fixed.is_empty() && indexed.is_empty() {
        return Ok(None);
    }
    let list = |prefix: &str| -> Result<Vec<String>, ProvError> {
        let mut out = Vec::new();
        let mut expected = 1;
        for (&(p, n), v) in &indexed {
            if p != prefix {
                continue;
            }
            if n != expected {
                return Err(malformed(format!(
                    "{prefix}{n} present without {prefix}{expected}"
                )));
            }
            out.push((*v).to_owned());
            expected += 1;
        }
        Ok(out)
    };
    let required = |k: &str| {
        fixed
            .get(k)
            .map(|v| (*v).to_owned())
            .ok_or_else(|| malformed(format!("{k} missing")))
    };
    let optional = |k: &str| fixed.get(k).map(|v| (*v).to_owned());
    let parameters = list("PRVPAR")?
        .into_iter()
        .map(|p| {
            p.split_once('=')
                .map(|(k, v)| (k.to_owned(), v.to_owned()))
                .ok_or_else(|| malformed(format!("parameter {p:?} is not name=value")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut names = BTreeSet::new();
    if let Some((k, _)) = parameters.iter().find(|(k, _)| !names.insert(k.as_str())) {
        return Err(malformed(format!("parameter {k} given twice")));
    }
    Ok(Some(LastStep {
        entity_id: required("PRVENTID")?,
        activity_id: required("PRVACTID")?,
        activity_name: required("PRVACTNM")?,
        start_time: optional("PRVACTBE"),
        end_time: optional("PRVACTEN"),
        software_name: optional("PRVSWNAM"),
        software_version: optional("PRVSWVER"),
        agent: optional("PRVAGENT"),
        workflow: optional("PRVWKFLW"),
        instrument: optional("PRVINSTR"),
        parameters,
        used: list("PRVUSE")?,
        generated: list("PRVGEN")?,
    }))
}

/// Reads PRV* cards of a header. String values only.
pub fn decode_cards(cards: &[Card]) -> Result<Option<LastStep>, ProvError> {
    let mut kv = Vec::new();
    for c in cards.iter().filter(|c| c.keyword.starts_with("PRV")) {
        match &c.value {
            Some(Value::Text(s)) => kv.push((c.keyword.clone(), s.clone())),
            _ => return Err(malformed(format!("{} is not a string card", c.keyword))),
        }
    }
    decode_last_step(&kv)
}

/// Provenance "on top": lifts the last step embedded in a header into a
/// one-activity graph fragment (empty when the header carries none).
pub fn extract_on_top(cards: &[Card]) -> Result<ProvGraph, ProvError> {
    match decode_cards(cards)? {
        None => Ok(ProvGraph::new()),
        Some(step) => reconstruct(&[step]),
    }
}

impl ProvGraph {
    pub fn encode_last_step(&self, entity_id: &str) -> Result<LastStep, ProvError> {
        if !self.entities.contains_key(entity_id) {
            return Err(ProvError::UnknownEntity(entity_id.to_owned()));
        }
        let g = self
            .generation_of(entity_id)
            .ok_or_else(|| ProvError::NoGeneration(entity_id.to_owned()))?;
        let act = &self.activities[&g.activity];
        let desc = act.description_ref.as_ref().and_then(|d| self.descriptions.get(d));
        let step = LastStep {
            entity_id: entity_id.to_owned(),
            activity_id: act.id.clone(),
            activity_name: act.name.clone(),
            start_time: act.start_time.clone(),
            end_time: act.end_time.clone(),
            software_name: desc.map(|d| d.name.clone()),
            software_version: desc.map(|d| d.version.clone()),
            agent: self.agent_of(&act.id).map(str::to_owned),
            workflow: act.workflow.clone(),
            instrument: act.instrument.clone(),
            parameters: act.parameters.iter().map(|(k, v)| (k.clone(), v.clone())).collect(),
            used: self.used_by(&act.id).into_iter().map(str::to_owned).collect(),
            generated: self
                .generated_by(&act.id)
                .into_iter()
                .filter(|e| *e != entity_id)
                .map(str::to_owned)
                .collect(),
        };
        // Reject what could not be embedded.
        step.to_keywords()?;
        Ok(step)
    }

    /// The part of the graph that last-step keywords can carry; two graphs
    /// with equal views are id-isomorphic up to unrepresentable attributes.
    pub fn last_step_view(&self) -> LastStepView {
        let mut view = LastStepView::default();
        for (id, a) in &self.activities {
            let desc = a.description_ref.as_ref().and_then(|d| self.descriptions.get(d));
            view.activities.insert(
                id.clone(),
                ActivityView {
                    name: a.name.clone(),
                    start_time: a.start_time.clone(),
                    end_time: a.end_time.clone(),
                    software_name: desc.map(|d| d.name.clone()),
                    software_version: desc.map(|d| d.version.clone()),
                    agent: self.agent_of(id).map(str::to_owned),
                    workflow: a.workflow.clone(),
                    instrument: a.instrument.clone(),
                    parameters: a.parameters.clone(),
                    used: self.used_by(id).into_iter().map(str::to_owned).collect(),
                    generated: self.generated_by(id).into_iter().map(str::to_owned).collect(),
                },
            );
        }
        for u in &self.used {
            view.entities.insert(u.entity.clone());
        }
        for g in &self.was_generated_by {
            view.entities.insert(g.entity.clone());
        }
        for a in &self.was_attributed_to {
            view.attributed.insert((a.entity.clone(), a.agent.clone()));
            view.agents.insert(a.agent.clone());
        }
        for a in &self.was_associated_with {
            view.agents.insert(a.agent.clone());
        }
        view
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ActivityView {
    pub name: String,
    pub start_time: Option<String>,
    pub end_time: Option<String>,
    pub software_name: Option<String>,
    pub software_version: Option<String>,
    pub agent: Option<String>,
    pub workflow: Option<String>,
    pub instrument: Option<String>,
    pub parameters: BTreeMap<String, String>,
    pub used: Vec<String>,
    pub generated: BTreeSet<String>,
}

/// Entities and agents that take part in at least one relation, every
/// activity with its representable attributes, and attributions.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LastStepView {
    pub entities: BTreeSet<String>,
    pub agents: BTreeSet<String>,
    pub activities: BTreeMap<String, ActivityView>,
    pub attributed: BTreeSet<(String, String)>,
}

/// Rebuilds a graph from last-step records: one activity per distinct
/// PRVACTID, entities without a record of their own become stubs.
pub fn reconstruct(steps: &[LastStep]) -> Result<ProvGraph, ProvError> {
    struct Acc<'a> {
        first: &'a LastStep,
        generated: BTreeSet<&'a str>,
    }
    let mut order: Vec<&str> = Vec::new();
    let mut acts: BTreeMap<&str, Acc> = BTreeMap::new();
    let mut own: BTreeMap<&str, &LastStep> = BTreeMap::new();
    for s in steps {
        if let Some(prev) = own.insert(&s.entity_id, s) {
            if prev != s {
                return Err(ProvError::ConflictingActivity(s.activity_id.clone()));
            }
            continue;
        }
        let gen: BTreeSet<&str> = std::iter::once(s.entity_id.as_str())
            .chain(s.generated.iter().map(String::as_str))
            .collect();
        match acts.get(s.activity_id.as_str()) {
            None => {
                order.push(&s.activity_id);
                acts.insert(&s.activity_id, Acc { first: s, generated: gen });
            }
            Some(acc) => {
                let f = acc.first;
                let same = f.activity_name == s.activity_name
                    && f.start_time == s.start_time
                    && f.end_time == s.end_time
                    && f.software_name == s.software_name
                    && f.software_version == s.software_version
                    && f.agent == s.agent
                    && f.workflow == s.workflow
                    && f.instrument == s.instrument
                    && f.parameters == s.parameters
                    && f.used == s.used
                    && acc.generated == gen;
                if !same {
                    return Err(ProvError::ConflictingActivity(s.activity_id.clone()));
                }
            }
        }
    }

    let mut g = ProvGraph::new();
    let ensure_entity = |g: &mut ProvGraph, id: &str| {
        if g.entities.contains_key(id) {
            return;
        }
        let e = match own.get(id) {
            Some(s) => ProvEntity {
                generated_at: s.end_time.clone(),
                ..ProvEntity::new(id, id)
            },
            None => ProvEntity::stub(id),
        };
        g.entities.insert(id.to_owned(), e);
    };
    for act_id in order {
        let acc = &acts[act_id];
        let s = acc.first;
        let description_ref = s.software_name.as_ref().map(|name| {
            let version = s.software_version.clone().unwrap_or_default();
            let id = if version.is_empty() {
                name.clone()
            } else {
                format!("{name}/{version}")
            };
            g.descriptions.entry(id.clone()).or_insert_with(|| ActivityDescription {
                id: id.clone(),
                name: name.clone(),
                version,
                doc: String::new(),
                parameters: Vec::new(),
            });
            id
        });
        let mut parameters = BTreeMap::new();
        for (k, v) in &s.parameters {
            if parameters.insert(k.clone(), v.clone()).is_some() {
                return Err(malformed(format!("parameter {k} given twice")));
            }
        }
        g.activities.insert(
            act_id.to_owned(),
            ProvActivity {
                id: act_id.to_owned(),
                name: s.activity_name.clone(),
                start_time: s.start_time.clone(),
                end_time: s.end_time.clone(),
                description_ref,
                parameters,
                comment: None,
                workflow: s.workflow.clone(),
                instrument: s.instrument.clone(),
            },
        );
        for u in &s.used {
            ensure_entity(&mut g, u);
            g.used.push(Used {
                activity: act_id.to_owned(),
                entity: u.clone(),
                role: None,
            });
        }
        for e in &acc.generated {
            ensure_entity(&mut g, e);
            g.was_generated_by.push(WasGeneratedBy {
                entity: (*e).to_owned(),
                activity: act_id.to_owned(),
                role: None,
            });
        }
        if let Some(agent) = &s.agent {
            g.add_agent(ProvAgent {
                id: agent.clone(),
                name: agent.clone(),
                kind: Default::default(),
            });
            g.was_associated_with.push(WasAssociatedWith {
                activity: act_id.to_owned(),
                agent: agent.clone(),
                role: None,
            });
            for e in &acc.generated {
                g.was_attributed_to.push(WasAttributedTo {
                    entity: (*e).to_owned(),
                    agent: agent.clone(),
                    role: None,
                });
            }
        }
    }
    g.validate()?;
    Ok(g)
}
