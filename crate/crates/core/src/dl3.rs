//! GADF-style DL3 observations: event list, good-time intervals and the
//! effective-area response, mapped onto FITS binary tables.
//!
//! Layout written and expected on read:
//!
//! | EXTNAME          | columns                                                       |
//! |------------------|---------------------------------------------------------------|
//! | `EVENTS`         | `EVENT_ID` K, `TIME` D s, `RA` E deg, `DEC` E deg, `ENERGY` E TeV |
//! | `GTI`            | `START` D s, `STOP` D s                                        |
//! | `EFFECTIVE AREA` | `ENERG_LO`/`ENERG_HI` D TeV, `THETA_LO`/`THETA_HI` D deg, `EFFAREA` D m2 |
//!
//! The effective area is stored one row per (energy, offset) bin, energy
//! major, since array columns are outside the supported FITS subset.
//! `RA`, `DEC` and `ENERGY` are single precision on disk.

use thiserror::Error;

use crate::fits::{BinTable, Card, Cell, Column, ColumnForm, FitsError, FitsHeader, Hdu};

pub const EVENTS_EXTNAME: &str = "EVENTS";
pub const GTI_EXTNAME: &str = "GTI";
pub const AEFF_EXTNAME: &str = "EFFECTIVE AREA";

/// Relative tolerance on `LIVETIME == ONTIME * DEADC`.
pub const LIVETIME_RTOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Dl3Error {
    #[error(transparent)]
    Fits(#[from] FitsError),
    #[error("missing HDU {0}")]
    MissingHdu(String),
    #[error("HDU {hdu}: missing column {column}")]
    MissingColumn { hdu: String, column: String },
    #[error("HDU {hdu}: missing keyword {keyword}")]
    MissingKeyword { hdu: String, keyword: String },
    #[error("HDU {hdu}: unit mismatch for {column}: expected '{expected}', found '{found}'")]
    UnitMismatch {
        hdu: String,
        column: String,
        expected: String,
        found: String,
    },
    #[error("invariant violated on {field}: {message}")]
    InvariantViolation { field: String, message: String },
}

impl Dl3Error {
    fn invariant(f: &Finding) -> Self {
        Dl3Error::InvariantViolation {
            field: f.field.clone(),
            message: f.message.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventRecord {
    pub event_id: i64,
    /// Seconds since the `MJDREF` epoch.
    pub time: f64,
    pub ra: f64,
    pub dec: f64,
    /// TeV
    pub energy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GoodTimeInterval {
    pub start: f64,
    pub stop: f64,
}

impl GoodTimeInterval {
    pub fn contains(&self, t: f64) -> bool {
        self.start <= t && t <= self.stop
    }
}

/// Effective area on an (energy × offset) grid; `area[i][j]` is energy bin
/// `i`, offset bin `j`, in m².
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveArea {
    pub energy_lo: Vec<f64>,
    pub energy_hi: Vec<f64>,
    pub offset_lo: Vec<f64>,
    pub offset_hi: Vec<f64>,
    pub area: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dl3Observation {
    pub obs_id: String,
    pub tstart: f64,
    pub tstop: f64,
    pub ontime: f64,
    pub livetime: f64,
    pub deadc: f64,
    pub ra_pnt: f64,
    pub dec_pnt: f64,
    /// `MJDREFI + MJDREFF`, days.
    pub mjdref: f64,
    pub events: Vec<EventRecord>,
    pub gtis: Vec<GoodTimeInterval>,
    pub aeff: Option<EffectiveArea>,
    /// Cards of the EVENTS header beyond the modelled keywords, in order.
    /// Provenance (`PRV*`) cards live here.
    pub extra_cards: Vec<Card>,
    /// HDUs other than EVENTS/GTI/EFFECTIVE AREA, carried through unchanged.
    pub extra_hdus: Vec<Hdu>,
}

impl Dl3Observation {
    /// Replaces or appends a card among `extra_cards`.
    pub fn set_card(&mut self, card: Card) {
        match self
            .extra_cards
            .iter_mut()
            .find(|c| c.value.is_some() && c.keyword == card.keyword)
        {
            Some(existing) => *existing = card,
            None => self.extra_cards.push(card),
        }
    }

    pub fn remove_cards_where(&mut self, mut pred: impl FnMut(&Card) -> bool) {
        self.extra_cards.retain(|c| !pred(c));
    }

    pub fn card_value(&self, keyword: &str) -> Option<&crate::fits::Value> {
        self.extra_cards
            .iter()
            .find(|c| c.keyword == keyword)
            .and_then(|c| c.value.as_ref())
    }

    pub fn in_any_gti(&self, t: f64) -> bool {
        self.gtis.iter().any(|g| g.contains(t))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Finding {
    pub severity: Severity,
    pub field: String,
    pub message: String,
}

impl Finding {
    fn error(field: &str, message: String) -> Self {
        Finding {
            severity: Severity::Error,
            field: field.to_owned(),
            message,
        }
    }
}

impl std::fmt::Display for Finding {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{sev}: {}: {}", self.field, self.message)
    }
}

// ---------------------------------------------------------------------------
// Validation

fn invariant_findings(obs: &Dl3Observation) -> Vec<Finding> {
    let mut out = Vec::new();
    let mut err = |field: &str, message: String| out.push(Finding::error(field, message));

    if obs.obs_id.trim().is_empty() {
        err("obs_id", "empty observation id".into());
    }
    let scalars = [
        ("tstart", obs.tstart),
        ("tstop", obs.tstop),
        ("ontime", obs.ontime),
        ("livetime", obs.livetime),
        ("deadc", obs.deadc),
        ("ra_pnt", obs.ra_pnt),
        ("dec_pnt", obs.dec_pnt),
        ("mjdref", obs.mjdref),
    ];
    for (name, v) in scalars {
        if !v.is_finite() {
            err(name, format!("{v} is not finite"));
        }
    }
    if !(obs.tstart < obs.tstop) {
        err("tstart", format!("tstart {} must precede tstop {}", obs.tstart, obs.tstop));
    }
    if !(obs.deadc > 0.0 && obs.deadc <= 1.0) {
        err("deadc", format!("{} outside (0, 1]", obs.deadc));
    }
    if obs.ontime < 0.0 || obs.livetime < 0.0 {
        err("ontime", "negative exposure".into());
    }
    if obs.livetime > obs.ontime {
        err(
            "livetime",
            format!("livetime {} exceeds ontime {}", obs.livetime, obs.ontime),
        );
    } else if obs.deadc > 0.0 && obs.deadc <= 1.0 {
        let expected = obs.ontime * obs.deadc;
        if (obs.livetime - expected).abs() > LIVETIME_RTOL * expected.abs() {
            err(
                "livetime",
                format!(
                    "livetime {} != ontime * deadc = {expected}",
                    obs.livetime
                ),
            );
        }
    }
    if !(0.0..360.0).contains(&obs.ra_pnt) {
        err("ra_pnt", format!("{} outside [0, 360)", obs.ra_pnt));
    }
    if !(-90.0..=90.0).contains(&obs.dec_pnt) {
        err("dec_pnt", format!("{} outside [-90, 90]", obs.dec_pnt));
    }

    let mut ids = std::collections::HashSet::with_capacity(obs.events.len());
    for (i, ev) in obs.events.iter().enumerate() {
        if !(-90.0..=90.0).contains(&ev.dec) {
            err("dec", format!("event {i}: dec {} outside [-90, 90]", ev.dec));
        }
        if !(0.0..360.0).contains(&ev.ra) {
            err("ra", format!("event {i}: ra {} outside [0, 360)", ev.ra));
        }
        if !(ev.energy > 0.0 && ev.energy.is_finite()) {
            err("energy", format!("event {i}: energy {} not positive", ev.energy));
        }
        if !(obs.tstart <= ev.time && ev.time <= obs.tstop) {
            err(
                "time",
                format!(
                    "event {i}: time {} outside [{}, {}]",
                    ev.time, obs.tstart, obs.tstop
                ),
            );
        }
        if !ids.insert(ev.event_id) {
            err("event_id", format!("duplicate event id {}", ev.event_id));
        }
    }
    for (i, g) in obs.gtis.iter().enumerate() {
        if !(g.start < g.stop) {
            err("gti", format!("interval {i}: start {} >= stop {}", g.start, g.stop));
        }
    }
    if let Some(a) = &obs.aeff {
        for msg in aeff_problems(a) {
            err("aeff", msg);
        }
    }
    out
}

fn edge_problems(what: &str, lo: &[f64], hi: &[f64]) -> Vec<String> {
    let mut p = Vec::new();
    if lo.is_empty() || lo.len() != hi.len() {
        p.push(format!("{what}: need matching non-empty lo/hi edges"));
        return p;
    }
    for i in 0..lo.len() {
        if !(lo[i] < hi[i]) || !lo[i].is_finite() || !hi[i].is_finite() {
            p.push(format!("{what} bin {i}: edges not strictly increasing"));
        }
        if i + 1 < lo.len() && lo[i + 1] != hi[i] {
            p.push(format!("{what} bin {i}: edges not contiguous"));
        }
    }
    p
}

fn aeff_problems(a: &EffectiveArea) -> Vec<String> {
    let mut p = edge_problems("energy", &a.energy_lo, &a.energy_hi);
    p.extend(edge_problems("offset", &a.offset_lo, &a.offset_hi));
    if a.area.len() != a.energy_lo.len() || a.area.iter().any(|r| r.len() != a.offset_lo.len()) {
        p.push("area grid does not match bin counts".into());
    }
    if a.area.iter().flatten().any(|&v| !(v >= 0.0 && v.is_finite())) {
        p.push("negative or non-finite area".into());
    }
    p
}

/// All findings: invariant breaches as errors, events outside every GTI
/// as warnings. Empty iff the observation is fully conformant.
pub fn validate_dl3(obs: &Dl3Observation) -> Vec<Finding> {
    let mut findings = invariant_findings(obs);
    for (i, ev) in obs.events.iter().enumerate() {
        if !obs.in_any_gti(ev.time) {
            findings.push(Finding {
                severity: Severity::Warning,
                field: "time".into(),
                message: format!("event {i} (id {}) at t={} outside all GTIs", ev.event_id, ev.time),
            });
        }
    }
    findings
}

fn check_invariants(obs: &Dl3Observation) -> Result<(), Dl3Error> {
    match invariant_findings(obs).first() {
        Some(f) => Err(Dl3Error::invariant(f)),
        None => Ok(()),
    }
}

// ---------------------------------------------------------------------------
// Reading

const EVENTS_KEYWORDS: &[&str] = &[
    "OBS_ID", "TSTART", "TSTOP", "ONTIME", "LIVETIME", "DEADC", "RA_PNT", "DEC_PNT", "MJDREFI",
    "MJDREFF",
];

/// Keywords emitted by `write_dl3` and consumed by `parse_dl3`; anything else
/// in the EVENTS header is kept in `extra_cards`.
fn is_modelled_keyword(kw: &str) -> bool {
    const STRUCTURAL: &[&str] = &[
        "XTENSION", "BITPIX", "NAXIS", "NAXIS1", "NAXIS2", "PCOUNT", "GCOUNT", "TFIELDS",
        "EXTNAME", "HDUCLASS", "HDUCLAS1",
    ];
    if STRUCTURAL.contains(&kw) || EVENTS_KEYWORDS.contains(&kw) {
        return true;
    }
    ["TTYPE", "TFORM", "TUNIT"].iter().any(|p| {
        kw.strip_prefix(p)
            .is_some_and(|n| !n.is_empty() && n.bytes().all(|b| b.is_ascii_digit()))
    })
}

fn extname_matches(hdu: &Hdu, name: &str) -> bool {
    hdu.extname().eq_ignore_ascii_case(name)
}

struct TableView<'a> {
    hdu: &'a str,
    table: &'a BinTable,
}

impl<'a> TableView<'a> {
    fn column(&self, name: &str, unit: Option<&str>) -> Result<usize, Dl3Error> {
        let idx = self
            .table
            .column_index(name)
            .ok_or_else(|| Dl3Error::MissingColumn {
                hdu: self.hdu.into(),
                column: name.into(),
            })?;
        if let Some(expected) = unit {
            let found = self.table.columns[idx].unit.as_deref().unwrap_or("").trim();
            if found != expected {
                return Err(Dl3Error::UnitMismatch {
                    hdu: self.hdu.into(),
                    column: name.into(),
                    expected: expected.into(),
                    found: found.into(),
                });
            }
        }
        Ok(idx)
    }

    fn f64s(&self, name: &str, unit: Option<&str>) -> Result<Vec<f64>, Dl3Error> {
        let idx = self.column(name, unit)?;
        self.table
            .rows
            .iter()
            .map(|row| {
                row[idx].as_f64().ok_or_else(|| Dl3Error::MissingColumn {
                    hdu: self.hdu.into(),
                    column: format!("{name} (numeric)"),
                })
            })
            .collect()
    }

    fn i64s(&self, name: &str) -> Result<Vec<i64>, Dl3Error> {
        let idx = self.column(name, None)?;
        self.table
            .rows
            .iter()
            .map(|row| {
                row[idx].as_i64().ok_or_else(|| Dl3Error::MissingColumn {
                    hdu: self.hdu.into(),
                    column: format!("{name} (integer)"),
                })
            })
            .collect()
    }
}

fn table_of<'a>(hdu: &'a Hdu, name: &'a str) -> Result<TableView<'a>, Dl3Error> {
    let table = hdu.table().ok_or_else(|| Dl3Error::MissingHdu(format!("{name} (binary table)")))?;
    Ok(TableView { hdu: name, table })
}

fn header_f64(header: &FitsHeader, hdu: &str, kw: &str) -> Result<f64, Dl3Error> {
    header.get_f64(kw).ok_or_else(|| Dl3Error::MissingKeyword {
        hdu: hdu.into(),
        keyword: kw.into(),
    })
}

pub fn parse_dl3(hdus: &[Hdu]) -> Result<Dl3Observation, Dl3Error> {
    let events_hdu = hdus
        .iter()
        .skip(1)
        .find(|h| extname_matches(h, EVENTS_EXTNAME))
        .ok_or_else(|| Dl3Error::MissingHdu(EVENTS_EXTNAME.into()))?;
    let h = &events_hdu.header;
    let obs_id = match h.get("OBS_ID") {
        Some(crate::fits::Value::Text(s)) => s.trim_end().to_owned(),
        Some(crate::fits::Value::Integer(i)) => i.to_string(),
        _ => {
            return Err(Dl3Error::MissingKeyword {
                hdu: EVENTS_EXTNAME.into(),
                keyword: "OBS_ID".into(),
            })
        }
    };
    let get = |kw: &str| header_f64(h, EVENTS_EXTNAME, kw);
    let mjdrefi = get("MJDREFI")?;
    let mjdreff = get("MJDREFF")?;

    let view = table_of(events_hdu, EVENTS_EXTNAME)?;
    let ids = view.i64s("EVENT_ID")?;
    let times = view.f64s("TIME", Some("s"))?;
    let ras = view.f64s("RA", Some("deg"))?;
    let decs = view.f64s("DEC", Some("deg"))?;
    let energies = view.f64s("ENERGY", Some("TeV"))?;
    let events = (0..ids.len())
        .map(|i| EventRecord {
            event_id: ids[i],
            time: times[i],
            ra: ras[i],
            dec: decs[i],
            energy: energies[i],
        })
        .collect();

    let mut obs = Dl3Observation {
        obs_id,
        tstart: get("TSTART")?,
        tstop: get("TSTOP")?,
        ontime: get("ONTIME")?,
        livetime: get("LIVETIME")?,
        deadc: get("DEADC")?,
        ra_pnt: get("RA_PNT")?,
        dec_pnt: get("DEC_PNT")?,
        mjdref: mjdrefi + mjdreff,
        events,
        gtis: Vec::new(),
        aeff: None,
        extra_cards: h
            .cards()
            .iter()
            .filter(|c| c.value.is_none() || !is_modelled_keyword(&c.keyword))
            .cloned()
            .collect(),
        extra_hdus: Vec::new(),
    };

    let mut saw_gti = false;
    for hdu in hdus.iter().skip(1) {
        if extname_matches(hdu, EVENTS_EXTNAME) {
            continue;
        } else if extname_matches(hdu, GTI_EXTNAME) && !saw_gti {
            saw_gti = true;
            let v = table_of(hdu, GTI_EXTNAME)?;
            let starts = v.f64s("START", Some("s"))?;
            let stops = v.f64s("STOP", Some("s"))?;
            obs.gtis = starts
                .into_iter()
                .zip(stops)
                .map(|(start, stop)| GoodTimeInterval { start, stop })
                .collect();
        } else if extname_matches(hdu, AEFF_EXTNAME) && obs.aeff.is_none() {
            obs.aeff = Some(parse_aeff(hdu)?);
        } else {
            obs.extra_hdus.push(hdu.clone());
        }
    }
    if !saw_gti {
        obs.gtis = vec![GoodTimeInterval {
            start: obs.tstart,
            stop: obs.tstop,
        }];
    }
    check_invariants(&obs)?;
    Ok(obs)
}

fn parse_aeff(hdu: &Hdu) -> Result<EffectiveArea, Dl3Error> {
    let v = table_of(hdu, AEFF_EXTNAME)?;
    let e_lo = v.f64s("ENERG_LO", Some("TeV"))?;
    let e_hi = v.f64s("ENERG_HI", Some("TeV"))?;
    let t_lo = v.f64s("THETA_LO", Some("deg"))?;
    let t_hi = v.f64s("THETA_HI", Some("deg"))?;
    let area = v.f64s("EFFAREA", Some("m2"))?;
    let bad = |msg: &str| Dl3Error::InvariantViolation {
        field: "aeff".into(),
        message: msg.into(),
    };

    // Offset bins repeat within each energy bin; the first energy bin lists them all.
    let n_off = e_lo
        .iter()
        .zip(&e_hi)
        .take_while(|(lo, hi)| **lo == e_lo[0] && **hi == e_hi[0])
        .count();
    if n_off == 0 || area.len() % n_off != 0 {
        return Err(bad("rows do not form an energy x offset grid"));
    }
    let n_e = area.len() / n_off;
    let mut aeff = EffectiveArea {
        energy_lo: Vec::with_capacity(n_e),
        energy_hi: Vec::with_capacity(n_e),
        offset_lo: t_lo[..n_off].to_vec(),
        offset_hi: t_hi[..n_off].to_vec(),
        area: Vec::with_capacity(n_e),
    };
    for i in 0..n_e {
        let base = i * n_off;
        for j in 0..n_off {
            let k = base + j;
            if e_lo[k] != e_lo[base]
                || e_hi[k] != e_hi[base]
                || t_lo[k] != aeff.offset_lo[j]
                || t_hi[k] != aeff.offset_hi[j]
            {
                return Err(bad("rows are not in energy-major grid order"));
            }
        }
        aeff.energy_lo.push(e_lo[base]);
        aeff.energy_hi.push(e_hi[base]);
        aeff.area.push(area[base..base + n_off].to_vec());
    }
    Ok(aeff)
}

// ---------------------------------------------------------------------------
// Writing

pub fn write_dl3(obs: &Dl3Observation) -> Result<Vec<Hdu>, Dl3Error> {
    check_invariants(obs)?;
    let mut hdus = vec![Hdu::empty_primary()];

    let mut events = BinTable::new(
        EVENTS_EXTNAME,
        vec![
            Column::new("EVENT_ID", ColumnForm::Int64),
            Column::new("TIME", ColumnForm::Float64).with_unit("s"),
            Column::new("RA", ColumnForm::Float32).with_unit("deg"),
            Column::new("DEC", ColumnForm::Float32).with_unit("deg"),
            Column::new("ENERGY", ColumnForm::Float32).with_unit("TeV"),
        ],
    );
    events.rows = obs
        .events
        .iter()
        .map(|e| {
            vec![
                Cell::Int64(e.event_id),
                Cell::Float64(e.time),
                Cell::Float32(e.ra as f32),
                Cell::Float32(e.dec as f32),
                Cell::Float32(e.energy as f32),
            ]
        })
        .collect();
    let mjdrefi = obs.mjdref.floor();
    let mut cards = vec![
        Card::new("HDUCLASS", "GADF"),
        Card::new("HDUCLAS1", "EVENTS"),
        Card::new("OBS_ID", obs.obs_id.as_str()).with_comment("observation identifier"),
        Card::new("TSTART", obs.tstart).with_comment("[s] start time"),
        Card::new("TSTOP", obs.tstop).with_comment("[s] stop time"),
        Card::new("ONTIME", obs.ontime).with_comment("[s] total good time"),
        Card::new("LIVETIME", obs.livetime).with_comment("[s] ontime * deadc"),
        Card::new("DEADC", obs.deadc).with_comment("dead time correction"),
        Card::new("RA_PNT", obs.ra_pnt).with_comment("[deg] pointing RA"),
        Card::new("DEC_PNT", obs.dec_pnt).with_comment("[deg] pointing Dec"),
        Card::new("MJDREFI", mjdrefi as i64).with_comment("[d] MJD reference, integer part"),
        Card::new("MJDREFF", obs.mjdref - mjdrefi).with_comment("[d] MJD reference, fraction"),
    ];
    cards.extend(obs.extra_cards.iter().cloned());
    hdus.push(Hdu::bintable(events, cards));

    let mut gti = BinTable::new(
        GTI_EXTNAME,
        vec![
            Column::new("START", ColumnForm::Float64).with_unit("s"),
            Column::new("STOP", ColumnForm::Float64).with_unit("s"),
        ],
    );
    gti.rows = obs
        .gtis
        .iter()
        .map(|g| vec![Cell::Float64(g.start), Cell::Float64(g.stop)])
        .collect();
    hdus.push(Hdu::bintable(
        gti,
        [Card::new("HDUCLASS", "GADF"), Card::new("HDUCLAS1", "GTI")],
    ));

    if let Some(a) = &obs.aeff {
        let mut t = BinTable::new(
            AEFF_EXTNAME,
            vec![
                Column::new("ENERG_LO", ColumnForm::Float64).with_unit("TeV"),
                Column::new("ENERG_HI", ColumnForm::Float64).with_unit("TeV"),
                Column::new("THETA_LO", ColumnForm::Float64).with_unit("deg"),
                Column::new("THETA_HI", ColumnForm::Float64).with_unit("deg"),
                Column::new("EFFAREA", ColumnForm::Float64).with_unit("m2"),
            ],
        );
        for i in 0..a.energy_lo.len() {
            for j in 0..a.offset_lo.len() {
                t.rows.push(vec![
                    Cell::Float64(a.energy_lo[i]),
                    Cell::Float64(a.energy_hi[i]),
                    Cell::Float64(a.offset_lo[j]),
                    Cell::Float64(a.offset_hi[j]),
                    Cell::Float64(a.area[i][j]),
                ]);
            }
        }
        hdus.push(Hdu::bintable(
            t,
            [Card::new("HDUCLASS", "GADF"), Card::new("HDUCLAS1", "RESPONSE")],
        ));
    }
    hdus.extend(obs.extra_hdus.iter().cloned());
    Ok(hdus)
}

/// `read_fits` followed by `parse_dl3`.
pub fn read_dl3_bytes(bytes: &[u8]) -> Result<Dl3Observation, Dl3Error> {
    parse_dl3(&crate::fits::read_fits(bytes)?)
}

/// `write_dl3` followed by `write_fits`.
pub fn write_dl3_bytes(obs: &Dl3Observation) -> Result<Vec<u8>, Dl3Error> {
    Ok(crate::fits::write_fits(&write_dl3(obs)?)?)
}
