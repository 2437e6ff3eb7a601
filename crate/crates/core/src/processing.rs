//! Online processing: DL3 transforms registered as activities, each run
//! captured in the provenance store and its outputs written with embedded
//! last-step cards.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use chrono::{SecondsFormat, Utc};
use thiserror::Error;

use crate::dl3::{read_dl3_bytes, write_dl3_bytes, Dl3Error, Dl3Observation};
use crate::fits::{read_fits, write_fits, BinTable, Card, Cell, Column, ColumnForm, FitsError, Hdu};
use crate::geometry::angular_separation;
use crate::obscore::{to_obscore, write_atomic, Catalog, ObsCoreConfig, ObsCoreError};
use crate::provenance::{
    ActivityDescription, GeneratedEntity, ParamType, ParameterDescription, ProvError, ProvGraph, Run,
};

pub const HISTOGRAM_EXTNAME: &str = "COUNTS";

#[derive(Debug, Error)]
pub enum ProcessingError {
    #[error("invalid radius {0}: must be >= 0")]
    InvalidRadius(f64),
    #[error("invalid centre: {0}")]
    InvalidCenter(String),
    #[error("invalid energy range [{e_min}, {e_max}): need 0 < e_min < e_max")]
    InvalidRange { e_min: f64, e_max: f64 },
    #[error("bad histogram edges: {0}")]
    BadEdges(String),
    #[error("unknown activity {0}")]
    UnknownActivity(String),
    #[error("unknown entity {0}: not a DL3 observation in the catalog")]
    UnknownEntity(String),
    #[error("activity {0} needs at least one input")]
    NoInputs(String),
    #[error(transparent)]
    Prov(#[from] ProvError),
    #[error(transparent)]
    Dl3(#[from] Dl3Error),
    #[error(transparent)]
    Fits(#[from] FitsError),
    #[error(transparent)]
    ObsCore(#[from] ObsCoreError),
    #[error("i/o error: {0}")]
    Io(String),
}

impl ProcessingError {
    /// Errors caused by the request rather than by stored data or the system.
    pub fn is_client_error(&self) -> bool {
        matches!(
            self,
            ProcessingError::InvalidRadius(_)
                | ProcessingError::InvalidCenter(_)
                | ProcessingError::InvalidRange { .. }
                | ProcessingError::BadEdges(_)
                | ProcessingError::UnknownActivity(_)
                | ProcessingError::UnknownEntity(_)
                | ProcessingError::NoInputs(_)
                | ProcessingError::Prov(ProvError::ParamType { .. })
        )
    }

    pub fn is_not_found(&self) -> bool {
        matches!(
            self,
            ProcessingError::UnknownActivity(_) | ProcessingError::UnknownEntity(_)
        )
    }
}

fn suffixed(obs: &Dl3Observation, suffix: &str) -> Dl3Observation {
    Dl3Observation {
        obs_id: format!("{}{suffix}", obs.obs_id),
        events: Vec::new(),
        ..obs.clone()
    }
}

/// Events within `radius` degrees of the centre, order preserved.
pub fn region_select(
    obs: &Dl3Observation,
    center_ra: f64,
    center_dec: f64,
    radius: f64,
) -> Result<Dl3Observation, ProcessingError> {
    if !(radius >= 0.0) {
        return Err(ProcessingError::InvalidRadius(radius));
    }
    angular_separation(center_ra, center_dec, center_ra, center_dec)
        .map_err(|e| ProcessingError::InvalidCenter(e.to_string()))?;
    let mut out = suffixed(obs, "-sel");
    for e in &obs.events {
        let sep = angular_separation(e.ra, e.dec, center_ra, center_dec)
            .map_err(|err| ProcessingError::Dl3(Dl3Error::InvariantViolation {
                field: "DEC".into(),
                message: format!("event {}: {err}", e.event_id),
            }))?;
        if sep <= radius {
            out.events.push(*e);
        }
    }
    Ok(out)
}

/// Events with `e_min <= energy < e_max`.
pub fn energy_filter(obs: &Dl3Observation, e_min: f64, e_max: f64) -> Result<Dl3Observation, ProcessingError> {
    if !(e_min > 0.0 && e_min < e_max) {
        return Err(ProcessingError::InvalidRange { e_min, e_max });
    }
    let mut out = suffixed(obs, "-eflt");
    out.events = obs
        .events
        .iter()
        .filter(|e| e_min <= e.energy && e.energy < e_max)
        .cloned()
        .collect();
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub bin_lo: Vec<f64>,
    pub bin_hi: Vec<f64>,
    pub counts: Vec<i64>,
}

impl Histogram {
    /// Primary HDU plus a `COUNTS` table; `cards` go into the table header.
    pub fn to_hdus(&self, cards: Vec<Card>) -> Vec<Hdu> {
        let mut t = BinTable::new(
            HISTOGRAM_EXTNAME,
            vec![
                Column::new("BIN_LO", ColumnForm::Float64).with_unit("TeV"),
                Column::new("BIN_HI", ColumnForm::Float64).with_unit("TeV"),
                Column::new("COUNTS", ColumnForm::Int64),
            ],
        );
        t.rows = (0..self.counts.len())
            .map(|i| {
                vec![
                    Cell::Float64(self.bin_lo[i]),
                    Cell::Float64(self.bin_hi[i]),
                    Cell::Int64(self.counts[i]),
                ]
            })
            .collect();
        vec![Hdu::empty_primary(), Hdu::bintable(t, cards)]
    }

    pub fn from_hdus(hdus: &[Hdu]) -> Result<Histogram, ProcessingError> {
        let t = hdus
            .iter()
            .find(|h| h.extname() == HISTOGRAM_EXTNAME)
            .and_then(|h| h.table())
            .ok_or_else(|| ProcessingError::Dl3(Dl3Error::MissingHdu(HISTOGRAM_EXTNAME.into())))?;
        let col = |name: &str| {
            t.column_index(name).ok_or_else(|| {
                ProcessingError::Dl3(Dl3Error::MissingColumn {
                    hdu: HISTOGRAM_EXTNAME.into(),
                    column: name.into(),
                })
            })
        };
        let (lo, hi, n) = (col("BIN_LO")?, col("BIN_HI")?, col("COUNTS")?);
        let mut h = Histogram {
            bin_lo: Vec::new(),
            bin_hi: Vec::new(),
            counts: Vec::new(),
        };
        for row in &t.rows {
            h.bin_lo.push(row[lo].as_f64().unwrap_or(f64::NAN));
            h.bin_hi.push(row[hi].as_f64().unwrap_or(f64::NAN));
            h.counts.push(row[n].as_i64().unwrap_or(0));
        }
        Ok(h)
    }
}

fn check_edges(edges: &[f64]) -> Result<(), ProcessingError> {
    if edges.len() < 2 {
        return Err(ProcessingError::BadEdges(format!("need at least 2 edges, got {}", edges.len())));
    }
    if edges.iter().any(|e| e.is_nan()) {
        return Err(ProcessingError::BadEdges("NaN edge".into()));
    }
    if let Some(w) = edges.windows(2).find(|w| w[0] >= w[1]) {
        return Err(ProcessingError::BadEdges(format!(
            "edges must increase strictly ({} then {})",
            w[0], w[1]
        )));
    }
    Ok(())
}

/// Counts per half-open bin `[edges[i], edges[i+1])`; events outside all
/// bins are not counted.
pub fn counts_histogram(obs: &Dl3Observation, edges: &[f64]) -> Result<Histogram, ProcessingError> {
    histogram_of(std::slice::from_ref(obs), edges)
}

fn histogram_of(inputs: &[Dl3Observation], edges: &[f64]) -> Result<Histogram, ProcessingError> {
    check_edges(edges)?;
    let mut counts = vec![0i64; edges.len() - 1];
    for e in inputs.iter().flat_map(|o| &o.events) {
        // First edge strictly above the energy; the bin is the one before it.
        let k = edges.partition_point(|&x| x <= e.energy);
        if k > 0 && k < edges.len() {
            counts[k - 1] += 1;
        }
    }
    Ok(Histogram {
        bin_lo: edges[..edges.len() - 1].to_vec(),
        bin_hi: edges[1..].to_vec(),
        counts,
    })
}

/// Result of a transform before it is committed.
#[derive(Debug, Clone, PartialEq)]
#[allow(clippy::large_enum_variant)]
pub enum Output {
    Dl3(Dl3Observation),
    Table(Histogram),
}

type Transform = fn(&[Dl3Observation], &BTreeMap<String, String>) -> Result<Vec<Output>, ProcessingError>;

fn float(params: &BTreeMap<String, String>, name: &str) -> Result<f64, ProcessingError> {
    let raw = params.get(name).ok_or_else(|| ProvError::ParamType {
        param: name.into(),
        reason: "required parameter missing".into(),
    })?;
    raw.trim().parse().map_err(|_| {
        ProcessingError::Prov(ProvError::ParamType {
            param: name.into(),
            reason: format!("{raw:?} is not a valid float"),
        })
    })
}

/// Comma-separated edge list, e.g. `0.1,1,10`.
pub fn parse_edges(text: &str) -> Result<Vec<f64>, ProcessingError> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| ProcessingError::BadEdges(format!("{s:?} is not a number")))
        })
        .collect()
}

fn run_region_select(inputs: &[Dl3Observation], p: &BTreeMap<String, String>) -> Result<Vec<Output>, ProcessingError> {
    let (ra, dec, r) = (float(p, "ra")?, float(p, "dec")?, float(p, "radius")?);
    inputs
        .iter()
        .map(|o| region_select(o, ra, dec, r).map(Output::Dl3))
        .collect()
}

fn run_energy_filter(inputs: &[Dl3Observation], p: &BTreeMap<String, String>) -> Result<Vec<Output>, ProcessingError> {
    let (lo, hi) = (float(p, "e_min")?, float(p, "e_max")?);
    inputs
        .iter()
        .map(|o| energy_filter(o, lo, hi).map(Output::Dl3))
        .collect()
}

fn run_counts_histogram(
    inputs: &[Dl3Observation],
    p: &BTreeMap<String, String>,
) -> Result<Vec<Output>, ProcessingError> {
    let edges = parse_edges(p.get("edges").map(String::as_str).unwrap_or(""))?;
    Ok(vec![Output::Table(histogram_of(inputs, &edges)?)])
}

pub struct ActivityRegistry {
    entries: BTreeMap<String, (ActivityDescription, Transform)>,
}

impl fmt::Debug for ActivityRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.entries.keys()).finish()
    }
}

fn param(name: &str, kind: ParamType, unit: &str) -> ParameterDescription {
    ParameterDescription {
        name: name.into(),
        kind,
        unit: unit.into(),
        required: true,
    }
}

impl ActivityRegistry {
    /// `region_select` and `energy_filter` map each input observation to one
    /// output observation; `counts_histogram` bins the events of all inputs
    /// into one table.
    pub fn builtin() -> Self {
        let version = env!("CARGO_PKG_VERSION");
        let mut entries: BTreeMap<String, (ActivityDescription, Transform)> = BTreeMap::new();
        let mut add = |name: &str, doc: &str, parameters: Vec<ParameterDescription>, t: Transform| {
            entries.insert(
                name.into(),
                (
                    ActivityDescription {
                        id: name.into(),
                        name: name.into(),
                        version: version.into(),
                        doc: doc.into(),
                        parameters,
                    },
                    t,
                ),
            );
        };
        add(
            "region_select",
            "Keep events within a cone around (ra, dec)",
            vec![
                param("ra", ParamType::Float, "deg"),
                param("dec", ParamType::Float, "deg"),
                param("radius", ParamType::Float, "deg"),
            ],
            run_region_select,
        );
        add(
            "energy_filter",
            "Keep events with e_min <= energy < e_max",
            vec![
                param("e_min", ParamType::Float, "TeV"),
                param("e_max", ParamType::Float, "TeV"),
            ],
            run_energy_filter,
        );
        add(
            "counts_histogram",
            "Event counts in half-open energy bins given as comma-separated edges",
            vec![param("edges", ParamType::String, "TeV")],
            run_counts_histogram,
        );
        ActivityRegistry { entries }
    }

    pub fn description(&self, name: &str) -> Option<&ActivityDescription> {
        self.entries.get(name).map(|(d, _)| d)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }
}

/// Where the gateway keeps the file of entity / observation `id`.
pub fn data_path(data_dir: &Path, id: &str) -> PathBuf {
    data_dir.join(format!("{id}.fits"))
}

pub fn now_utc() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Micros, true)
}

/// A transform that has run but whose outputs are not yet stored.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub activity: String,
    pub parameters: BTreeMap<String, String>,
    pub inputs: Vec<String>,
    pub outputs: Vec<Output>,
    pub start_time: String,
    pub end_time: String,
}

/// Loads the inputs and runs the transform; touches no shared state.
pub fn execute(
    registry: &ActivityRegistry,
    catalog: &Catalog,
    data_dir: &Path,
    name: &str,
    parameters: BTreeMap<String, String>,
    inputs: &[String],
) -> Result<Prepared, ProcessingError> {
    let (desc, transform) = registry
        .entries
        .get(name)
        .ok_or_else(|| ProcessingError::UnknownActivity(name.into()))?;
    desc.check_parameters(&parameters)?;
    if inputs.is_empty() {
        return Err(ProcessingError::NoInputs(name.into()));
    }
    let start_time = now_utc();
    let mut observations = Vec::with_capacity(inputs.len());
    for id in inputs {
        if catalog.find_obs_id(id).is_none() {
            return Err(ProcessingError::UnknownEntity(id.clone()));
        }
        let path = data_path(data_dir, id);
        let bytes = std::fs::read(&path).map_err(|e| ProcessingError::Io(format!("{}: {e}", path.display())))?;
        observations.push(read_dl3_bytes(&bytes)?);
    }
    let outputs = transform(&observations, &parameters)?;
    Ok(Prepared {
        activity: name.into(),
        parameters,
        inputs: inputs.to_vec(),
        outputs,
        start_time,
        end_time: now_utc(),
    })
}

#[derive(Debug, Clone)]
pub struct CommitContext<'a> {
    pub data_dir: &'a Path,
    pub obscore: &'a ObsCoreConfig,
    pub agent: &'a str,
    pub workflow: Option<String>,
    pub instrument: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunOutcome {
    pub outputs: Vec<String>,
    pub activity_id: String,
    pub files: Vec<PathBuf>,
}

/// Assigns ids, records the run, writes output files carrying their
/// last-step cards and ingests DL3 outputs. All-or-nothing: on error the
/// store and catalog are unchanged and no output file is left behind.
pub fn commit(
    registry: &ActivityRegistry,
    prepared: Prepared,
    store: &mut ProvGraph,
    catalog: &mut Catalog,
    ctx: &CommitContext<'_>,
) -> Result<RunOutcome, ProcessingError> {
    let desc = registry
        .description(&prepared.activity)
        .ok_or_else(|| ProcessingError::UnknownActivity(prepared.activity.clone()))?;
    let mut graph = store.clone();
    if !graph.descriptions.contains_key(&desc.id) {
        graph.register_description(desc.clone())?;
    }

    let mut n = graph.activities.len() + 1;
    let (activity_id, ids) = loop {
        let activity_id = format!("{}/{n}", prepared.activity);
        let ids: Vec<String> = prepared
            .outputs
            .iter()
            .zip(prepared.inputs.iter().cycle())
            .map(|(_, input)| format!("{input}-{}-{n}", prepared.activity))
            .collect();
        let taken = graph.activities.contains_key(&activity_id)
            || ids.iter().any(|id| {
                graph.entities.contains_key(id)
                    || catalog.find_obs_id(id).is_some()
                    || data_path(ctx.data_dir, id).exists()
            });
        if !taken {
            break (activity_id, ids);
        }
        n += 1;
    };

    let paths: Vec<PathBuf> = ids.iter().map(|id| data_path(ctx.data_dir, id)).collect();
    graph.record_run(Run {
        activity_id: Some(activity_id.clone()),
        name: None,
        description_id: desc.id.clone(),
        parameters: prepared.parameters.clone(),
        used: prepared.inputs.clone(),
        generated: ids
            .iter()
            .zip(&paths)
            .map(|(id, p)| GeneratedEntity::new(id.clone()).with_location(id.clone(), p.display().to_string()))
            .collect(),
        agent_id: ctx.agent.into(),
        workflow: ctx.workflow.clone(),
        instrument: ctx.instrument.clone(),
        start_time: Some(prepared.start_time.clone()),
        end_time: Some(prepared.end_time.clone()),
    })?;

    let mut new_catalog = catalog.clone();
    let mut files = Vec::with_capacity(ids.len());
    for ((output, id), path) in prepared.outputs.into_iter().zip(&ids).zip(&paths) {
        let cards = graph.encode_last_step(id)?.to_cards()?;
        let bytes = match output {
            Output::Dl3(mut obs) => {
                obs.obs_id = id.clone();
                obs.remove_cards_where(|c| c.keyword.starts_with("PRV"));
                obs.extra_cards.extend(cards);
                new_catalog.ingest(to_obscore(&obs, ctx.obscore)?);
                write_dl3_bytes(&obs)?
            }
            Output::Table(h) => write_fits(&h.to_hdus(cards))?,
        };
        files.push((path.clone(), bytes));
    }

    let mut written: Vec<PathBuf> = Vec::new();
    for (path, bytes) in &files {
        if let Err(e) = write_atomic(path, bytes) {
            for w in &written {
                let _ = std::fs::remove_file(w);
            }
            return Err(ProcessingError::Io(format!("{}: {e}", path.display())));
        }
        written.push(path.clone());
    }
    *store = graph;
    *catalog = new_catalog;
    Ok(RunOutcome {
        outputs: ids,
        activity_id,
        files: written,
    })
}

/// `execute` then `commit`.
#[allow(clippy::too_many_arguments)]
pub fn run_activity(
    registry: &ActivityRegistry,
    store: &mut ProvGraph,
    catalog: &mut Catalog,
    ctx: &CommitContext<'_>,
    name: &str,
    parameters: BTreeMap<String, String>,
    inputs: &[String],
) -> Result<RunOutcome, ProcessingError> {
    let prepared = execute(registry, catalog, ctx.data_dir, name, parameters, inputs)?;
    commit(registry, prepared, store, catalog, ctx)
}

/// Header cards of the first HDU carrying PRV* keywords (empty if none).
pub fn provenance_cards(hdus: &[Hdu]) -> Vec<Card> {
    hdus.iter()
        .find(|h| h.header.cards().iter().any(|c| c.keyword.starts_with("PRV")))
        .map(|h| h.header.cards().to_vec())
        .unwrap_or_default()
}

/// Reads a file written by [`commit`] and returns its PRV* header cards.
pub fn read_provenance_cards(bytes: &[u8]) -> Result<Vec<Card>, ProcessingError> {
    Ok(provenance_cards(&read_fits(bytes)?))
}
