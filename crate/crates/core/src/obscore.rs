//! ObsCore discovery records for DL3 event lists and the persistent catalog
//! behind the `ivoa.obscore` table.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dl3::{write_dl3_bytes, Dl3Observation};

/// Table name exposed to ADQL.
pub const TABLE_NAME: &str = "ivoa.obscore";

/// h·c in TeV·m (1.23984193e-6 eV·m).
pub const HC_TEV_M: f64 = 1.23984193e-18;

const SECONDS_PER_DAY: f64 = 86400.0;

#[derive(Debug, Error)]
pub enum ObsCoreError {
    #[error("energy must be positive, got {0} TeV")]
    NonPositiveEnergy(f64),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("catalog line {line}: {message}")]
    MalformedLine { line: usize, message: String },
    #[error("catalog I/O: {0}")]
    Io(#[from] io::Error),
}

/// Photon wavelength for an energy in TeV; ObsCore spectral bounds are
/// wavelengths in metres.
pub fn energy_to_wavelength(energy_tev: f64) -> Result<f64, ObsCoreError> {
    if !(energy_tev > 0.0) {
        return Err(ObsCoreError::NonPositiveEnergy(energy_tev));
    }
    Ok(HC_TEV_M / energy_tev)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObsCoreRecord {
    pub dataproduct_type: String,
    pub calib_level: i32,
    pub obs_collection: String,
    pub obs_id: String,
    pub obs_publisher_did: String,
    pub access_url: String,
    pub access_format: String,
    /// kbyte
    pub access_estsize: i64,
    pub target_name: String,
    pub s_ra: f64,
    pub s_dec: f64,
    pub s_fov: f64,
    /// MJD
    pub t_min: f64,
    pub t_max: f64,
    /// s
    pub t_exptime: f64,
    /// m
    pub em_min: f64,
    pub em_max: f64,
    pub facility_name: String,
    pub instrument_name: String,
}

/// Ingest-time settings for the ObsCore columns DL3 headers do not carry.
#[derive(Debug, Clone, PartialEq)]
pub struct ObsCoreConfig {
    pub collection: String,
    pub authority: String,
    /// Prefix of `access_url`; the record gets `{base}/{obs_id}.fits`.
    pub access_base_url: String,
    pub e_min: f64,
    pub e_max: f64,
    pub fov: f64,
    pub facility: String,
    pub instrument: String,
    /// Overrides the `OBJECT` header card when set.
    pub target_name: Option<String>,
}

impl Default for ObsCoreConfig {
    fn default() -> Self {
        ObsCoreConfig {
            collection: "hess-dl3-dr1".into(),
            authority: "example.org".into(),
            access_base_url: "http://localhost:8080/data".into(),
            e_min: 0.1,
            e_max: 100.0,
            fov: 5.0,
            facility: "H.E.S.S.".into(),
            instrument: "H.E.S.S.".into(),
            target_name: None,
        }
    }
}

impl ObsCoreConfig {
    pub fn validate(&self) -> Result<(), ObsCoreError> {
        let bad = |m: &str| Err(ObsCoreError::InvalidConfig(m.to_owned()));
        if self.authority.trim().is_empty() {
            return bad("empty publisher authority");
        }
        if self.collection.trim().is_empty() {
            return bad("empty collection name");
        }
        if !(self.e_min > 0.0 && self.e_min < self.e_max) {
            return bad("energy range must satisfy 0 < e_min < e_max");
        }
        if !(self.fov > 0.0) {
            return bad("fov must be positive");
        }
        Ok(())
    }

    pub fn publisher_did(&self, obs_id: &str) -> String {
        format!("ivo://{}/{}#{}", self.authority, self.collection, obs_id)
    }
}

pub fn to_obscore(obs: &Dl3Observation, config: &ObsCoreConfig) -> Result<ObsCoreRecord, ObsCoreError> {
    config.validate()?;
    let size_bytes = write_dl3_bytes(obs)
        .map_err(|e| ObsCoreError::InvalidConfig(format!("observation not serializable: {e}")))?
        .len();
    let target_name = config.target_name.clone().unwrap_or_else(|| {
        obs.card_value("OBJECT")
            .and_then(|v| v.as_str())
            .unwrap_or("")
            .to_owned()
    });
    Ok(ObsCoreRecord {
        dataproduct_type: "event".into(),
        calib_level: 3,
        obs_collection: config.collection.clone(),
        obs_id: obs.obs_id.clone(),
        obs_publisher_did: config.publisher_did(&obs.obs_id),
        access_url: format!(
            "{}/{}.fits",
            config.access_base_url.trim_end_matches('/'),
            obs.obs_id
        ),
        access_format: "application/fits".into(),
        access_estsize: size_bytes.div_ceil(1024) as i64,
        target_name,
        s_ra: obs.ra_pnt,
        s_dec: obs.dec_pnt,
        s_fov: config.fov,
        t_min: obs.mjdref + obs.tstart / SECONDS_PER_DAY,
        t_max: obs.mjdref + obs.tstop / SECONDS_PER_DAY,
        t_exptime: obs.livetime,
        em_min: energy_to_wavelength(config.e_max)?,
        em_max: energy_to_wavelength(config.e_min)?,
        facility_name: config.facility.clone(),
        instrument_name: config.instrument.clone(),
    })
}

// ---------------------------------------------------------------------------
// Table schema

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Datatype {
    Char,
    Int,
    Long,
    Double,
}

impl Datatype {
    pub fn as_votable(self) -> &'static str {
        match self {
            Datatype::Char => "char",
            Datatype::Int => "int",
            Datatype::Long => "long",
            Datatype::Double => "double",
        }
    }

    pub fn is_numeric(self) -> bool {
        !matches!(self, Datatype::Char)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColumnDef {
    pub name: &'static str,
    pub datatype: Datatype,
    pub unit: Option<&'static str>,
    pub ucd: &'static str,
    pub description: &'static str,
}

const fn col(
    name: &'static str,
    datatype: Datatype,
    unit: Option<&'static str>,
    ucd: &'static str,
    description: &'static str,
) -> ColumnDef {
    ColumnDef {
        name,
        datatype,
        unit,
        ucd,
        description,
    }
}

use Datatype::{Char, Double, Int, Long};

/// `ivoa.obscore` columns in table order. The last six are always null.
pub const COLUMNS: &[ColumnDef] = &[
    col("dataproduct_type", Char, None, "meta.id", "Data product type (event list)"),
    col("calib_level", Int, None, "meta.code;obs.calib", "Calibration level (3 for DL3)"),
    col("obs_collection", Char, None, "meta.id", "Name of the data collection"),
    col("obs_id", Char, None, "meta.id", "Observation identifier"),
    col("obs_publisher_did", Char, None, "meta.ref.ivoid", "Publisher dataset identifier"),
    col("access_url", Char, None, "meta.ref.url", "URL of the DL3 file"),
    col("access_format", Char, None, "meta.code.mime", "MIME type of the DL3 file"),
    col("access_estsize", Long, Some("kbyte"), "phys.size;meta.file", "Estimated file size"),
    col("target_name", Char, None, "meta.id;src", "Observed target"),
    col("s_ra", Double, Some("deg"), "pos.eq.ra", "Pointing right ascension (ICRS)"),
    col("s_dec", Double, Some("deg"), "pos.eq.dec", "Pointing declination (ICRS)"),
    col("s_fov", Double, Some("deg"), "phys.angSize;instr.fov", "Field of view diameter"),
    col("t_min", Double, Some("d"), "time.start;obs.exposure", "Start time (MJD)"),
    col("t_max", Double, Some("d"), "time.end;obs.exposure", "Stop time (MJD)"),
    col("t_exptime", Double, Some("s"), "time.duration;obs.exposure", "Dead-time corrected exposure"),
    col("em_min", Double, Some("m"), "em.wl;stat.min", "Shortest wavelength (highest energy)"),
    col("em_max", Double, Some("m"), "em.wl;stat.max", "Longest wavelength (lowest energy)"),
    col("facility_name", Char, None, "meta.id;instr.tel", "Observatory name"),
    col("instrument_name", Char, None, "meta.id;instr", "Instrument name"),
    col("s_region", Char, None, "pos.outline;obs.field", "Sky footprint (not provided)"),
    col("s_resolution", Double, Some("arcsec"), "pos.angResolution", "Spatial resolution (not provided)"),
    col("t_resolution", Double, Some("s"), "time.resolution", "Time resolution (not provided)"),
    col("em_res_power", Double, None, "spect.resolution", "Spectral resolving power (not provided)"),
    col("o_ucd", Char, None, "meta.ucd", "UCD of observable (not provided)"),
    col("pol_states", Char, None, "meta.code;phys.polarization", "Polarization states (not provided)"),
];

/// Case-insensitive column lookup; returns the column's index.
pub fn column_index(name: &str) -> Option<usize> {
    COLUMNS.iter().position(|c| c.name.eq_ignore_ascii_case(name))
}

/// A typed cell of the `ivoa.obscore` table.
#[derive(Debug, Clone, PartialEq)]
pub enum FieldValue {
    Null,
    Int(i64),
    Double(f64),
    Text(String),
}

impl FieldValue {
    pub fn as_f64(&self) -> Option<f64> {
        match *self {
            FieldValue::Int(i) => Some(i as f64),
            FieldValue::Double(d) => Some(d),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            FieldValue::Text(s) => Some(s),
            _ => None,
        }
    }

    pub fn is_null(&self) -> bool {
        matches!(self, FieldValue::Null)
    }
}

impl ObsCoreRecord {
    /// Value of column `index` of [`COLUMNS`].
    pub fn field(&self, index: usize) -> FieldValue {
        use FieldValue::{Double as D, Int as I, Null, Text as T};
        match index {
            0 => T(self.dataproduct_type.clone()),
            1 => I(self.calib_level.into()),
            2 => T(self.obs_collection.clone()),
            3 => T(self.obs_id.clone()),
            4 => T(self.obs_publisher_did.clone()),
            5 => T(self.access_url.clone()),
            6 => T(self.access_format.clone()),
            7 => I(self.access_estsize),
            8 => T(self.target_name.clone()),
            9 => D(self.s_ra),
            10 => D(self.s_dec),
            11 => D(self.s_fov),
            12 => D(self.t_min),
            13 => D(self.t_max),
            14 => D(self.t_exptime),
            15 => D(self.em_min),
            16 => D(self.em_max),
            17 => T(self.facility_name.clone()),
            18 => T(self.instrument_name.clone()),
            _ => Null,
        }
    }

    /// Borrowing variant of [`field`](Self::field) for the filter hot path.
    pub(crate) fn field_ref(&self, index: usize) -> FieldRef<'_> {
        match index {
            0 => FieldRef::Text(&self.dataproduct_type),
            1 => FieldRef::Num(self.calib_level.into()),
            2 => FieldRef::Text(&self.obs_collection),
            3 => FieldRef::Text(&self.obs_id),
            4 => FieldRef::Text(&self.obs_publisher_did),
            5 => FieldRef::Text(&self.access_url),
            6 => FieldRef::Text(&self.access_format),
            7 => FieldRef::Num(self.access_estsize as f64),
            8 => FieldRef::Text(&self.target_name),
            9 => FieldRef::Num(self.s_ra),
            10 => FieldRef::Num(self.s_dec),
            11 => FieldRef::Num(self.s_fov),
            12 => FieldRef::Num(self.t_min),
            13 => FieldRef::Num(self.t_max),
            14 => FieldRef::Num(self.t_exptime),
            15 => FieldRef::Num(self.em_min),
            16 => FieldRef::Num(self.em_max),
            17 => FieldRef::Text(&self.facility_name),
            18 => FieldRef::Text(&self.instrument_name),
            _ => FieldRef::Null,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum FieldRef<'a> {
    Null,
    Num(f64),
    Text(&'a str),
}

// ---------------------------------------------------------------------------
// Catalog

/// Records keyed by `obs_publisher_did`; iteration is in DID order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Catalog {
    records: BTreeMap<String, ObsCoreRecord>,
}

impl Catalog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> impl Iterator<Item = &ObsCoreRecord> {
        self.records.values()
    }

    pub fn get(&self, did: &str) -> Option<&ObsCoreRecord> {
        self.records.get(did)
    }

    pub fn find_obs_id(&self, obs_id: &str) -> Option<&ObsCoreRecord> {
        self.records.values().find(|r| r.obs_id == obs_id)
    }

    /// Inserts, replacing any record with the same DID.
    pub fn ingest(&mut self, record: ObsCoreRecord) {
        self.records.insert(record.obs_publisher_did.clone(), record);
    }
}

impl FromIterator<ObsCoreRecord> for Catalog {
    fn from_iter<I: IntoIterator<Item = ObsCoreRecord>>(iter: I) -> Self {
        let mut c = Catalog::new();
        for r in iter {
            c.ingest(r);
        }
        c
    }
}

/// Value-returning form of [`Catalog::ingest`].
pub fn ingest(mut catalog: Catalog, record: ObsCoreRecord) -> Catalog {
    catalog.ingest(record);
    catalog
}

/// One JSON object per line, keys exactly the record field names.
pub fn save_catalog(catalog: &Catalog) -> Vec<u8> {
    let mut out = Vec::new();
    for r in catalog.records() {
        serde_json::to_writer(&mut out, r).expect("records serialize");
        out.push(b'\n');
    }
    out
}

pub fn load_catalog(bytes: &[u8]) -> Result<Catalog, ObsCoreError> {
    let text = std::str::from_utf8(bytes).map_err(|e| ObsCoreError::MalformedLine {
        line: 1 + bytes[..e.valid_up_to()].iter().filter(|&&b| b == b'\n').count(),
        message: "not UTF-8".into(),
    })?;
    let mut catalog = Catalog::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: ObsCoreRecord =
            serde_json::from_str(line).map_err(|e| ObsCoreError::MalformedLine {
                line: i + 1,
                message: e.to_string(),
            })?;
        if catalog.get(&record.obs_publisher_did).is_some() {
            return Err(ObsCoreError::MalformedLine {
                line: i + 1,
                message: format!("duplicate DID {}", record.obs_publisher_did),
            });
        }
        catalog.ingest(record);
    }
    Ok(catalog)
}

/// Writes `bytes` to a sibling temp file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    if let Some(d) = dir {
        fs::create_dir_all(d)?;
    }
    let file_name = path
        .file_name()
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "path has no file name"))?;
    let tmp = path.with_file_name(format!(
        ".{}.tmp{}",
        file_name.to_string_lossy(),
        std::process::id()
    ));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)
}

pub fn save_catalog_file(catalog: &Catalog, path: &Path) -> Result<(), ObsCoreError> {
    Ok(write_atomic(path, &save_catalog(catalog))?)
}

/// Missing file loads as an empty catalog.
pub fn load_catalog_file(path: &Path) -> Result<Catalog, ObsCoreError> {
    match fs::read(path) {
        Ok(bytes) => load_catalog(&bytes),
        Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(Catalog::new()),
        Err(e) => Err(e.into()),
    }
}
