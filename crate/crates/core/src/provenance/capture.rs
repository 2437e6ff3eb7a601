use std::collections::{BTreeMap, BTreeSet};

use super::{
    ProvActivity, ProvAgent, ProvEntity, ProvError, ProvGraph, Used, WasAssociatedWith, WasAttributedTo,
    WasGeneratedBy,
};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeneratedEntity {
    pub id: String,
    pub name: String,
    pub location: Option<String>,
}

impl GeneratedEntity {
    pub fn new(id: impl Into<String>) -> Self {
        let id = id.into();
        GeneratedEntity {
            name: id.clone(),
            id,
            location: None,
        }
    }

    pub fn with_location(mut self, name: impl Into<String>, location: impl Into<String>) -> Self {
        self.name = name.into();
        self.location = Some(location.into());
        self
    }
}

/// One execution to be recorded.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Run {
    /// Generated as `{description name}/{counter}` when absent.
    pub activity_id: Option<String>,
    /// Defaults to the description's name.
    pub name: Option<String>,
    pub description_id: String,
    pub parameters: BTreeMap<String, String>,
    pub used: Vec<String>,
    pub generated: Vec<GeneratedEntity>,
    pub agent_id: String,
    pub workflow: Option<String>,
    pub instrument: Option<String>,
    pub start_time: Option<String>,
    pub end_time: Option<String>,
}

impl Run {
    pub fn new(description_id: impl Into<String>, agent_id: impl Into<String>) -> Self {
        Run {
            activity_id: None,
            name: None,
            description_id: description_id.into(),
            parameters: BTreeMap::new(),
            used: Vec::new(),
            generated: Vec::new(),
            agent_id: agent_id.into(),
            workflow: None,
            instrument: None,
            start_time: None,
            end_time: None,
        }
    }
}

impl ProvGraph {
    /// Next free `{prefix}/{n}` activity id.
    pub fn fresh_activity_id(&self, prefix: &str) -> String {
        let mut n = self.activities.len() + 1;
        loop {
            let id = format!("{prefix}/{n}");
            if !self.activities.contains_key(&id) {
                return id;
            }
            n += 1;
        }
    }

    /// Records one activity with its usage, generation, association and
    /// attribution relations. Used ids missing from the graph become stub
    /// entities. Everything is checked before anything is inserted, so an
    /// error leaves the graph untouched.
    pub fn record_run(&mut self, run: Run) -> Result<String, ProvError> {
        let desc = self
            .descriptions
            .get(&run.description_id)
            .ok_or_else(|| ProvError::UnknownDescription(run.description_id.clone()))?;
        desc.check_parameters(&run.parameters)?;
        let name = run.name.clone().unwrap_or_else(|| desc.name.clone());
        let activity_id = match &run.activity_id {
            Some(id) if id.is_empty() => return Err(ProvError::InvalidGraph("empty activity id".into())),
            Some(id) if self.activities.contains_key(id) => {
                return Err(ProvError::DuplicateActivityId(id.clone()))
            }
            Some(id) => id.clone(),
            None => self.fresh_activity_id(&desc.name),
        };
        if run.agent_id.is_empty() {
            return Err(ProvError::InvalidGraph("empty agent id".into()));
        }
        if let (Some(s), Some(e)) = (&run.start_time, &run.end_time) {
            if s > e {
                return Err(ProvError::InvalidGraph(format!("run ends ({e}) before it starts ({s})")));
            }
        }
        let mut used_set = BTreeSet::new();
        for u in &run.used {
            if u.is_empty() || !used_set.insert(u.as_str()) {
                return Err(ProvError::InvalidGraph(format!("used entity {u:?} is empty or listed twice")));
            }
        }
        let mut gen_set = BTreeSet::new();
        for g in &run.generated {
            if used_set.contains(g.id.as_str()) {
                return Err(ProvError::Cycle(format!(
                    "activity {activity_id} both uses and generates {}",
                    g.id
                )));
            }
            if g.id.is_empty() || self.entities.contains_key(&g.id) || !gen_set.insert(g.id.as_str()) {
                return Err(ProvError::DuplicateEntityId(g.id.clone()));
            }
        }

        for u in &run.used {
            if !self.entities.contains_key(u) {
                self.entities.insert(u.clone(), ProvEntity::stub(u));
            }
        }
        self.add_agent(ProvAgent {
            id: run.agent_id.clone(),
            name: run.agent_id.clone(),
            kind: Default::default(),
        });
        self.activities.insert(
            activity_id.clone(),
            ProvActivity {
                id: activity_id.clone(),
                name,
                start_time: run.start_time.clone(),
                end_time: run.end_time.clone(),
                description_ref: Some(run.description_id.clone()),
                parameters: run.parameters,
                comment: None,
                workflow: run.workflow,
                instrument: run.instrument,
            },
        );
        for u in run.used {
            self.used.push(Used {
                activity: activity_id.clone(),
                entity: u,
                role: None,
            });
        }
        for g in run.generated {
            self.entities.insert(
                g.id.clone(),
                ProvEntity {
                    id: g.id.clone(),
                    name: g.name,
                    location: g.location,
                    generated_at: run.end_time.clone(),
                    comment: None,
                    attributes: BTreeMap::new(),
                },
            );
            self.was_generated_by.push(WasGeneratedBy {
                entity: g.id.clone(),
                activity: activity_id.clone(),
                role: None,
            });
            self.was_attributed_to.push(WasAttributedTo {
                entity: g.id,
                agent: run.agent_id.clone(),
                role: None,
            });
        }
        self.was_associated_with.push(WasAssociatedWith {
            activity: activity_id.clone(),
            agent: run.agent_id,
            role: None,
        });
        Ok(activity_id)
    }
}
