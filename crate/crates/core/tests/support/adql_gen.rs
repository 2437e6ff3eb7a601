use rand::seq::IndexedRandom;
use rand::Rng;

use gammagate_core::adql::{AdqlQuery, CmpOp, Expr, Operand, OrderBy, Selection};
use gammagate_core::obscore::{Catalog, FieldValue, ObsCoreRecord, COLUMNS};

const TARGETS: &[&str] = &["Crab", "Crab off", "PKS 2155-304", "Galactic Centre", "M87", "O'Neil's", "50%_off", ""];
const NUMERIC: &[&str] = &[
    "calib_level", "access_estsize", "s_ra", "s_dec", "s_fov", "t_min", "t_max", "t_exptime", "em_min", "em_max",
    "s_resolution", "t_resolution", "em_res_power",
];
const TEXT: &[&str] = &[
    "dataproduct_type", "obs_collection", "obs_id", "obs_publisher_did", "access_url", "access_format", "target_name",
    "facility_name", "instrument_name", "s_region", "o_ucd", "pol_states",
];
const CMP: [CmpOp; 6] = [CmpOp::Eq, CmpOp::Ne, CmpOp::Lt, CmpOp::Le, CmpOp::Gt, CmpOp::Ge];

pub fn random_record(rng: &mut impl Rng, i: usize) -> ObsCoreRecord {
    let obs_id = format!("{}", rng.random_range(10_000..100_000) * 1000 + i);
    let t_min = 53000.0 + rng.random_range(0.0..8000.0);
    let dur = rng.random_range(0.001..0.05);
    let e_lo = 10f64.powf(rng.random_range(-1.5..0.5));
    let e_hi = e_lo * 10f64.powf(rng.random_range(0.5..3.0));
    ObsCoreRecord {
        dataproduct_type: "event-list".into(),
        calib_level: *[2, 3].choose(rng).unwrap(),
        obs_collection: ["HESS-DL3-DR1", "CTA-1DC"].choose(rng).unwrap().to_string(),
        obs_publisher_did: format!("ivo://example.org/dl3?{obs_id}"),
        access_url: format!("http://localhost:8080/data/{obs_id}.fits"),
        obs_id,
        access_format: "application/fits".into(),
        access_estsize: rng.random_range(1..100_000),
        target_name: TARGETS.choose(rng).unwrap().to_string(),
        s_ra: rng.random_range(0.0..360.0),
        s_dec: (rng.random_range(-1.0..=1.0f64)).asin().to_degrees(),
        s_fov: *[2.5, 5.0, 10.0].choose(rng).unwrap(),
        t_min,
        t_max: t_min + dur,
        t_exptime: (dur * 86400.0 * 0.95).round(),
        em_min: 1.23984193e-18 / e_hi,
        em_max: 1.23984193e-18 / e_lo,
        facility_name: ["HESS", "MAGIC", "VERITAS"].choose(rng).unwrap().to_string(),
        instrument_name: ["CT1-4", "CT5"].choose(rng).unwrap().to_string(),
    }
}

/// Records are returned in catalog (DID) order.
pub fn random_catalog(rng: &mut impl Rng, max_rows: usize) -> (Catalog, Vec<ObsCoreRecord>) {
    let n = rng.random_range(0..=max_rows);
    let mut records: Vec<ObsCoreRecord> = (0..n).map(|i| random_record(rng, i)).collect();
    records.sort_by(|a, b| a.obs_publisher_did.cmp(&b.obs_publisher_did));
    let catalog = records.iter().cloned().collect();
    (catalog, records)
}

fn column_value(r: &ObsCoreRecord, name: &str) -> FieldValue {
    r.field(COLUMNS.iter().position(|c| c.name == name).unwrap())
}

fn num_literal(rng: &mut impl Rng, records: &[ObsCoreRecord], column: &str) -> Operand {
    if !records.is_empty() && rng.random_bool(0.6) {
        let r = records.choose(rng).unwrap();
        if let Some(v) = column_value(r, column).as_f64() {
            return Operand::Number(v);
        }
    }
    Operand::Number(match rng.random_range(0..4) {
        0 => rng.random_range(-100.0..400.0),
        1 => rng.random_range(-5..5) as f64,
        2 => 53000.0 + rng.random_range(0.0..8000.0),
        _ => 10f64.powf(rng.random_range(-20.0..6.0)),
    })
}

fn text_literal(rng: &mut impl Rng, records: &[ObsCoreRecord], column: &str) -> Operand {
    if !records.is_empty() && rng.random_bool(0.6) {
        let r = records.choose(rng).unwrap();
        if let Some(s) = column_value(r, column).as_str() {
            return Operand::Str(s.to_owned());
        }
    }
    Operand::Str(TARGETS.choose(rng).unwrap().to_string())
}

fn like_pattern(rng: &mut impl Rng, source: &str) -> String {
    let mut out = String::new();
    for c in source.chars() {
        match rng.random_range(0..10) {
            0 => out.push('_'),
            1 => out.push('%'),
            2 => {}
            3 => {
                out.push('%');
                out.push(c);
            }
            _ => out.push(c),
        }
    }
    if rng.random_bool(0.2) {
        out.push('%');
    }
    out
}

fn leaf(rng: &mut impl Rng, records: &[ObsCoreRecord]) -> Expr {
    match rng.random_range(0..7) {
        0 => {
            let c = *NUMERIC.choose(rng).unwrap();
            let (lhs, rhs) = (Operand::Column(c.into()), num_literal(rng, records, c));
            let (lhs, rhs) = if rng.random_bool(0.2) { (rhs, lhs) } else { (lhs, rhs) };
            Expr::Compare { lhs, op: *CMP.choose(rng).unwrap(), rhs }
        }
        1 => {
            let c = *TEXT.choose(rng).unwrap();
            Expr::Compare {
                lhs: Operand::Column(c.into()),
                op: *CMP.choose(rng).unwrap(),
                rhs: text_literal(rng, records, c),
            }
        }
        2 => {
            let c = *NUMERIC.choose(rng).unwrap();
            let (a, b) = (num_literal(rng, records, c), num_literal(rng, records, c));
            let (lo, hi) = match (&a, &b) {
                (Operand::Number(x), Operand::Number(y)) if x > y && rng.random_bool(0.8) => (b, a),
                _ => (a, b),
            };
            Expr::Between { expr: Operand::Column(c.into()), lo, hi }
        }
        3 => {
            let c = *TEXT.choose(rng).unwrap();
            let source = match text_literal(rng, records, c) {
                Operand::Str(s) => s,
                _ => unreachable!(),
            };
            Expr::Like { column: c.into(), pattern: like_pattern(rng, &source) }
        }
        4 => {
            let all: Vec<&str> = NUMERIC.iter().chain(TEXT).copied().collect();
            Expr::IsNull { column: all.choose(rng).unwrap().to_string() }
        }
        _ => {
            let (ra, dec) = match records.choose(rng) {
                Some(r) if rng.random_bool(0.7) => (r.s_ra, r.s_dec),
                _ => (rng.random_range(0.0..360.0), rng.random_range(-90.0..=90.0)),
            };
            let radius = match rng.random_range(0..4) {
                0 => Operand::Number(0.0),
                1 => Operand::Column("s_fov".into()),
                _ => Operand::Number(rng.random_range(0.0..120.0)),
            };
            let point = if rng.random_bool(0.9) {
                [Operand::Column("s_ra".into()), Operand::Column("s_dec".into())]
            } else {
                [Operand::Number(ra), Operand::Number(dec)]
            };
            let circle = if rng.random_bool(0.9) {
                [Operand::Number(ra), Operand::Number(dec), radius]
            } else {
                [Operand::Column("s_ra".into()), Operand::Column("s_dec".into()), radius]
            };
            Expr::Contains { point, circle, inside: rng.random_bool(0.8) }
        }
    }
}

/// Boolean tree of depth at most `depth` (a single predicate has depth 1).
pub fn random_expr(rng: &mut impl Rng, records: &[ObsCoreRecord], depth: usize) -> Expr {
    if depth <= 1 || rng.random_bool(0.3) {
        return leaf(rng, records);
    }
    match rng.random_range(0..5) {
        0 => Expr::not(random_expr(rng, records, depth - 1)),
        1 | 2 => Expr::and(random_expr(rng, records, depth - 1), random_expr(rng, records, depth - 1)),
        _ => Expr::or(random_expr(rng, records, depth - 1), random_expr(rng, records, depth - 1)),
    }
}

pub fn expr_depth(e: &Expr) -> usize {
    match e {
        Expr::And(a, b) | Expr::Or(a, b) => 1 + expr_depth(a).max(expr_depth(b)),
        Expr::Not(a) => 1 + expr_depth(a),
        _ => 1,
    }
}

pub fn random_query(rng: &mut impl Rng, records: &[ObsCoreRecord]) -> AdqlQuery {
    let names: Vec<&str> = COLUMNS.iter().map(|c| c.name).collect();
    let columns = if rng.random_bool(0.4) {
        Selection::All
    } else {
        let k = rng.random_range(1..=5);
        Selection::Columns(names.choose_multiple(rng, k).map(|s| {
            if rng.random_bool(0.1) { s.to_uppercase() } else { s.to_string() }
        }).collect())
    };
    AdqlQuery {
        top: rng.random_bool(0.2).then(|| rng.random_range(0..20)),
        columns,
        table: "ivoa.obscore".into(),
        where_clause: rng.random_bool(0.9).then(|| random_expr(rng, records, 4)),
        order_by: rng.random_bool(0.4).then(|| OrderBy {
            column: names.choose(rng).unwrap().to_string(),
            ascending: rng.random(),
        }),
    }
}
