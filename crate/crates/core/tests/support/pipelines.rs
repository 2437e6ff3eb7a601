use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::Rng;

use gammagate_core::dl3::write_dl3_bytes;
use gammagate_core::gateway::{Gateway, GatewayConfig};
use gammagate_core::obscore::{to_obscore, Catalog, ObsCoreConfig};
use gammagate_core::processing::{data_path, read_provenance_cards, run_activity, ActivityRegistry, CommitContext};
use gammagate_core::provenance::{decode_cards, LastStep, ProvGraph};
use gammagate_core::synthetic::observation;

pub struct Pipeline {
    pub dir: tempfile::TempDir,
    pub store: ProvGraph,
    pub catalog: Catalog,
    /// Every entity produced by the chain, in creation order.
    pub generated: Vec<String>,
    pub activities: usize,
}

fn params(kv: &[(&str, String)]) -> BTreeMap<String, String> {
    kv.iter().map(|(k, v)| ((*k).to_owned(), v.clone())).collect()
}

/// 1..=6 chained activities over synthetic inputs, fan-in 1..=3, each step
/// consuming at least one output of the step before it.
pub fn random_pipeline(rng: &mut impl Rng) -> Pipeline {
    let dir = tempfile::tempdir().unwrap();
    let obscore = ObsCoreConfig::default();
    let registry = ActivityRegistry::builtin();
    let mut catalog = Catalog::new();
    let mut store = ProvGraph::new();

    let mut pointing = BTreeMap::new();
    let mut dl3: Vec<String> = Vec::new();
    for i in 0..rng.random_range(1..=3) {
        let id = format!("obs{i}");
        let (ra, dec) = (rng.random_range(0.0..360.0), rng.random_range(-60.0..60.0));
        let o = observation(&id, ra, dec, rng.random_range(5..60));
        std::fs::write(data_path(dir.path(), &id), write_dl3_bytes(&o).unwrap()).unwrap();
        catalog.ingest(to_obscore(&o, &obscore).unwrap());
        pointing.insert(id.clone(), (ra, dec));
        dl3.push(id);
    }

    let steps = rng.random_range(1..=6);
    let mut generated = Vec::new();
    let mut previous: Vec<String> = dl3.clone();
    for step in 0..steps {
        let last = step + 1 == steps;
        let fan_in = rng.random_range(1..=3.min(dl3.len()));
        let mut inputs = vec![previous.choose(rng).unwrap().clone()];
        while inputs.len() < fan_in {
            let c = dl3.choose(rng).unwrap();
            if !inputs.contains(c) {
                inputs.push(c.clone());
            }
        }
        let kind = if last { rng.random_range(0..3) } else { rng.random_range(0..2) };
        let (name, p) = match kind {
            0 => {
                let (ra, dec) = pointing[&inputs[0]];
                let r = rng.random_range(0.2..2.0);
                ("region_select", params(&[("ra", ra.to_string()), ("dec", dec.to_string()), ("radius", r.to_string())]))
            }
            1 => {
                let lo: f64 = rng.random_range(0.05..1.0);
                let hi = lo * rng.random_range(2.0..500.0);
                ("energy_filter", params(&[("e_min", lo.to_string()), ("e_max", hi.to_string())]))
            }
            _ => ("counts_histogram", params(&[("edges", "0.1,0.5,1,5,10,100".to_owned())])),
        };
        let ctx = CommitContext {
            data_dir: dir.path(),
            obscore: &obscore,
            agent: ["alice", "bob", "gateway"].choose(rng).unwrap(),
            workflow: rng.random_bool(0.5).then(|| "random-chain".to_owned()),
            instrument: rng.random_bool(0.5).then(|| "H.E.S.S.".to_owned()),
        };
        let out = run_activity(&registry, &mut store, &mut catalog, &ctx, name, p, &inputs).unwrap();
        for (o, i) in out.outputs.iter().zip(inputs.iter().cycle()) {
            if name != "counts_histogram" {
                pointing.insert(o.clone(), pointing[i]);
                dl3.push(o.clone());
            }
        }
        generated.extend(out.outputs.iter().cloned());
        previous = out.outputs;
    }
    Pipeline { dir, store, catalog, generated, activities: steps }
}

/// Last-step records as embedded in the output files.
pub fn steps_from_files(dir: &Path, ids: &[String]) -> Vec<LastStep> {
    ids.iter()
        .map(|id| {
            let bytes = std::fs::read(data_path(dir, id)).unwrap();
            decode_cards(&read_provenance_cards(&bytes).unwrap()).unwrap().expect("file carries PRV cards")
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActivityFacts {
    pub name: String,
    pub start: Option<String>,
    pub end: Option<String>,
    pub software: Option<(String, String)>,
    pub agents: BTreeSet<String>,
    pub workflow: Option<String>,
    pub instrument: Option<String>,
    pub parameters: BTreeMap<String, String>,
    pub used: Vec<String>,
    pub generated: BTreeSet<String>,
}

/// What last-step keywords can carry about a graph, read straight off the
/// graph's fields.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Facts {
    pub activities: BTreeMap<String, ActivityFacts>,
    /// Entities taking part in a relation, with their stub flag.
    pub entities: BTreeMap<String, bool>,
    pub attributed: BTreeSet<(String, String)>,
    pub associated: BTreeSet<(String, String)>,
}

pub fn facts(g: &ProvGraph) -> Facts {
    let mut activities = BTreeMap::new();
    for (id, a) in &g.activities {
        let software = a
            .description_ref
            .as_ref()
            .map(|d| &g.descriptions[d])
            .map(|d| (d.name.clone(), d.version.clone()));
        activities.insert(
            id.clone(),
            ActivityFacts {
                name: a.name.clone(),
                start: a.start_time.clone(),
                end: a.end_time.clone(),
                software,
                agents: g.was_associated_with.iter().filter(|w| &w.activity == id).map(|w| w.agent.clone()).collect(),
                workflow: a.workflow.clone(),
                instrument: a.instrument.clone(),
                parameters: a.parameters.clone(),
                used: g.used.iter().filter(|u| &u.activity == id).map(|u| u.entity.clone()).collect(),
                generated: g.was_generated_by.iter().filter(|w| &w.activity == id).map(|w| w.entity.clone()).collect(),
            },
        );
    }
    let mut entities = BTreeMap::new();
    let involved = g.used.iter().map(|u| &u.entity).chain(g.was_generated_by.iter().map(|w| &w.entity));
    for e in involved {
        entities.insert(e.clone(), g.entities[e].is_stub());
    }
    Facts {
        activities,
        entities,
        attributed: g.was_attributed_to.iter().map(|a| (a.entity.clone(), a.agent.clone())).collect(),
        associated: g.was_associated_with.iter().map(|a| (a.activity.clone(), a.agent.clone())).collect(),
    }
}

pub struct Demo {
    pub dir: tempfile::TempDir,
    pub gateway: Gateway,
    pub input: String,
    /// Outputs of region_select, energy_filter and counts_histogram.
    pub outputs: [String; 3],
}

/// One synthetic observation through region_select, energy_filter and
/// counts_histogram on a gateway rooted in a temporary directory.
pub fn demo_pipeline() -> Demo {
    let dir = tempfile::tempdir().unwrap();
    let gateway = Gateway::open(GatewayConfig {
        catalog_path: dir.path().join("catalog.jsonl"),
        store_path: dir.path().join("prov.json"),
        data_dir: dir.path().join("files"),
        workflow: Some("demo".into()),
        ..GatewayConfig::default()
    })
    .unwrap();
    let o = observation("23523", 83.633, 22.014, 500);
    let input = gateway.ingest_bytes(&write_dl3_bytes(&o).unwrap()).unwrap().obs_id;
    let sel = gateway
        .run(
            "region_select",
            params(&[("ra", "83.633".into()), ("dec", "22.014".into()), ("radius", "0.5".into())]),
            std::slice::from_ref(&input),
            Some("alice"),
        )
        .unwrap();
    let eflt = gateway
        .run("energy_filter", params(&[("e_min", "0.5".into()), ("e_max", "50".into())]), &sel.outputs, Some("alice"))
        .unwrap();
    let hist = gateway
        .run("counts_histogram", params(&[("edges", "0.5,1,5,10,50".into())]), &eflt.outputs, None)
        .unwrap();
    let outputs = [sel.outputs[0].clone(), eflt.outputs[0].clone(), hist.outputs[0].clone()];
    Demo { dir, gateway, input, outputs }
}
