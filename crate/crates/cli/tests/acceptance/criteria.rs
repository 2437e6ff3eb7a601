#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::process::{Command, Stdio};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::Rng;

use gammagate_core::adql::{parse_query, evaluate, Expr};
use gammagate_core::dl3::{parse_dl3, read_dl3_bytes, validate_dl3, write_dl3, write_dl3_bytes};
use gammagate_core::fits::{read_fits, write_fits, HduData};
use gammagate_core::gateway::{Gateway, GatewayConfig};
use gammagate_core::geometry::angular_separation;
use gammagate_core::obscore::{save_catalog_file, Catalog};
use gammagate_core::processing::{data_path, provenance_cards, Histogram};
use gammagate_core::provenance::{extract_on_top, parse_provjson, reconstruct, serialize_provjson};
use gammagate_core::synthetic::observation;

use super::support::{self, adql_gen, dl3_gen, fits_gen, oracle, pipelines};
use super::Outcome;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !($cond) {
            return Err(format!($($msg)+));
        }
    };
}

pub fn fits() -> Outcome {
    let mut rng = support::rng(0xF175);
    let mut rows = 0;
    let mut forms = BTreeSet::new();
    for case in 0..500 {
        let hdus = fits_gen::random_file(&mut rng, 1000);
        if let HduData::Table(t) = &hdus[1].data {
            rows += t.rows.len();
            forms.extend(t.columns.iter().map(|c| c.form.tform().chars().last().unwrap()));
        }
        let bytes = write_fits(&hdus).map_err(|e| format!("case {case}: write: {e}"))?;
        let back = read_fits(&bytes).map_err(|e| format!("case {case}: read: {e}"))?;
        ensure!(back == hdus, "case {case}: read(write(x)) != x");
        ensure!(write_fits(&back).unwrap() == bytes, "case {case}: write(read(b)) != b");
    }
    ensure!(forms.len() == 5, "only forms {forms:?} exercised");
    let fixtures = fits_gen::hand_fixtures();
    for (i, b) in fixtures.iter().enumerate() {
        let hdus = read_fits(b).map_err(|e| format!("fixture {i}: {e}"))?;
        ensure!(write_fits(&hdus).unwrap() == *b, "fixture {i}: write(read(b)) != b");
    }
    Ok(format!("500 tables, {rows} rows, forms {forms:?}; {} canonical fixtures byte-identical", fixtures.len()))
}

pub fn dl3() -> Outcome {
    let mut rng = support::rng(0xD13);
    let mut events = 0;
    for case in 0..100 {
        let obs = dl3_gen::random_observation(&mut rng, &format!("{}", 10_000 + case), 500);
        events += obs.events.len();
        let bytes = write_dl3_bytes(&obs).map_err(|e| format!("case {case}: write: {e}"))?;
        let back = read_dl3_bytes(&bytes).map_err(|e| format!("case {case}: parse: {e}"))?;
        ensure!(back == obs, "case {case}: parsed observation differs");
        let findings = validate_dl3(&back);
        ensure!(findings.is_empty(), "case {case}: {findings:?}");
    }
    let mut mutated = 0;
    for (k, m) in dl3_gen::MUTATIONS.iter().cycle().take(20).enumerate() {
        let mut obs = dl3_gen::random_observation(&mut rng, "mut", 50);
        while obs.events.is_empty() {
            obs = dl3_gen::random_observation(&mut rng, "mut", 50);
        }
        let mut hdus = write_dl3(&obs).unwrap();
        dl3_gen::mutate(&mut rng, &obs, &mut hdus, *m);
        let result = read_fits(&write_fits(&hdus).unwrap())
            .map_err(Into::into)
            .and_then(|h| parse_dl3(&h))
            .map(|o| validate_dl3(&o));
        ensure!(
            dl3_gen::matches_expected(&result, &m.expected()),
            "mutation {k} {m:?}: wanted {:?}, got {result:?}",
            m.expected()
        );
        mutated += 1;
    }
    Ok(format!("100 valid observations ({events} events) clean; {mutated} mutations reported as designated"))
}

fn kinds(e: &Expr, out: &mut BTreeSet<&'static str>) {
    match e {
        Expr::And(a, b) | Expr::Or(a, b) => {
            kinds(a, out);
            kinds(b, out);
        }
        Expr::Not(a) => kinds(a, out),
        Expr::Compare { .. } => {
            out.insert("compare");
        }
        Expr::Between { .. } => {
            out.insert("between");
        }
        Expr::Like { .. } => {
            out.insert("like");
        }
        Expr::IsNull { .. } => {
            out.insert("is null");
        }
        Expr::Contains { .. } => {
            out.insert("contains");
        }
    }
}

pub fn adql() -> Outcome {
    let mut rng = support::rng(0xAD91);
    let mut seen = BTreeSet::new();
    let (mut total_rows, mut nonempty, mut max_depth) = (0, 0, 0);
    for case in 0..1000 {
        let (catalog, records) = adql_gen::random_catalog(&mut rng, 1000);
        let ast = adql_gen::random_query(&mut rng, &records);
        if let Some(w) = &ast.where_clause {
            kinds(w, &mut seen);
            max_depth = max_depth.max(adql_gen::expr_depth(w));
        }
        let maxrec = rng.random_bool(0.3).then(|| rng.random_range(0..50));
        let text = ast.to_string();
        let parsed = parse_query(&text).map_err(|e| format!("case {case}: {text}: {e}"))?;
        ensure!(parsed == ast, "case {case}: parse(print(ast)) != ast for {text}");
        let got = evaluate(&parsed, &catalog, maxrec).map_err(|e| format!("case {case}: {text}: {e}"))?;
        let (want, overflow) = oracle::run(&ast, &records, maxrec);
        ensure!(got.rows == want, "case {case}: {text}: {} rows, oracle {}", got.rows.len(), want.len());
        ensure!(got.overflow == overflow, "case {case}: overflow flag differs");
        total_rows += want.len();
        nonempty += usize::from(!want.is_empty());
    }
    ensure!(seen.len() == 5, "predicate kinds exercised: {seen:?}");
    ensure!(max_depth <= 4, "tree depth {max_depth}");
    Ok(format!(
        "1000 queries agree ({nonempty} non-empty, {total_rows} rows, depth <= {max_depth}, kinds {seen:?})"
    ))
}

pub fn geometry() -> Outcome {
    let mut rng = support::rng(0x6E0);
    let point = |rng: &mut rand_chacha::ChaCha8Rng| {
        let ra: f64 = rng.random_range(0.0..360.0);
        let z: f64 = rng.random_range(-1.0..=1.0);
        (ra, z.asin().to_degrees())
    };
    let mut worst: f64 = 0.0;
    for i in 0..1_000_000 {
        let ((a, b), (c, d)) = (point(&mut rng), point(&mut rng));
        let s = angular_separation(a, b, c, d).map_err(|e| e.to_string())?;
        let t = angular_separation(c, d, a, b).map_err(|e| e.to_string())?;
        ensure!(s == t, "pair {i}: asymmetric {s} vs {t}");
        let diff = (s - oracle::arccos_separation(a, b, c, d)).abs();
        worst = worst.max(diff);
        ensure!(diff <= 1e-9, "pair {i} ({a}, {b}) ({c}, {d}): off by {diff:e} deg");
    }
    let coincident = [(0.0, 0.0), (83.633, 22.014), (359.999, -89.9), (180.0, 90.0)];
    for (a, b) in coincident {
        let s = angular_separation(a, b, a, b).unwrap();
        ensure!(s == 0.0, "coincident ({a}, {b}) gives {s}");
    }
    let antipodal = [((0.0, 0.0), (180.0, 0.0)), ((10.0, 90.0), (10.0, -90.0)), ((83.633, 22.014), (263.633, -22.014))];
    for ((a, b), (c, d)) in antipodal {
        let s = angular_separation(a, b, c, d).unwrap();
        ensure!((s - 180.0).abs() <= 1e-12, "antipodal ({a}, {b}) ({c}, {d}) gives {s}");
    }
    let pole = angular_separation(0.0, 89.0, 180.0, 89.0).unwrap();
    ensure!((pole - 2.0).abs() <= 1e-9, "(0,89)-(180,89) gives {pole}");
    Ok(format!("10^6 pairs symmetric, max |haversine - arccos| = {worst:.1e} deg; fixtures 0/180/2"))
}

// ---------------------------------------------------------------------------
// TAP over HTTP against an in-process server

struct Server {
    base: String,
    runtime: tokio::runtime::Runtime,
    stop: Option<tokio::sync::oneshot::Sender<()>>,
}

impl Drop for Server {
    fn drop(&mut self) {
        if let Some(s) = self.stop.take() {
            let _ = s.send(());
        }
        let rt = std::mem::replace(&mut self.runtime, tokio::runtime::Builder::new_current_thread().build().unwrap());
        rt.shutdown_timeout(Duration::from_secs(2));
    }
}

fn start_server(gw: Gateway) -> Server {
    let runtime = tokio::runtime::Builder::new_multi_thread().worker_threads(4).enable_all().build().unwrap();
    let listener = runtime.block_on(tokio::net::TcpListener::bind("127.0.0.1:0")).unwrap();
    let base = format!("http://{}", listener.local_addr().unwrap());
    let (tx, rx) = tokio::sync::oneshot::channel::<()>();
    runtime.spawn(gammagate_tap::serve(listener, Arc::new(gw), async {
        let _ = rx.await;
    }));
    Server { base, runtime, stop: Some(tx) }
}

struct Reply {
    statuses: Vec<String>,
    rows: Vec<Vec<String>>,
    fields: Vec<String>,
}

fn parse_votable(body: &str) -> Result<Reply, String> {
    let doc = roxmltree::Document::parse(body).map_err(|e| format!("malformed XML: {e}"))?;
    let root = doc.root_element();
    if root.tag_name().name() != "VOTABLE" {
        return Err(format!("root element {}", root.tag_name().name()));
    }
    let statuses = doc
        .descendants()
        .filter(|n| n.has_tag_name("INFO") && n.attribute("name") == Some("QUERY_STATUS"))
        .map(|n| n.attribute("value").unwrap_or("").to_owned())
        .collect();
    let fields = doc
        .descendants()
        .filter(|n| n.has_tag_name("FIELD"))
        .map(|n| n.attribute("name").unwrap_or("").to_owned())
        .collect();
    let rows = doc
        .descendants()
        .filter(|n| n.has_tag_name("TR"))
        .map(|tr| {
            tr.children()
                .filter(|n| n.has_tag_name("TD"))
                .map(|td| td.text().unwrap_or("").to_owned())
                .collect()
        })
        .collect();
    Ok(Reply { statuses, rows, fields })
}

fn sync(client: &reqwest::blocking::Client, base: &str, params: &[(&str, String)], post: bool) -> Result<Reply, String> {
    let url = format!("{base}/sync");
    let req = if post { client.post(&url).form(params) } else { client.get(&url).query(params) };
    let resp = req.send().map_err(|e| e.to_string())?;
    let ct = resp.headers().get("content-type").and_then(|v| v.to_str().ok()).unwrap_or("").to_owned();
    let body = resp.text().map_err(|e| e.to_string())?;
    if !ct.starts_with("application/x-votable+xml") {
        return Err(format!("content type {ct:?}"));
    }
    parse_votable(&body)
}

fn status_ok(statuses: &[String]) -> bool {
    matches!(statuses, [s] if s == "OK" || s == "ERROR") || statuses == ["OK", "OVERFLOW"]
}

fn mangle(rng: &mut impl Rng, q: &str) -> String {
    let chars: Vec<char> = q.chars().collect();
    let at = rng.random_range(0..=chars.len());
    let junk = ["'", "(", ")", "SELECT", "WHERE", "AND", "--", ";", "\u{e9}", "1e999", "''", "*", ",", "ORDER BY", "TOP"];
    let mut out: String = match rng.random_range(0..4) {
        0 => chars[..at].iter().collect(),
        1 => chars.iter().enumerate().filter(|(i, _)| *i != at).map(|(_, c)| c).collect(),
        _ => {
            let mut s: String = chars[..at].iter().collect();
            s.push(' ');
            s.push_str(junk[rng.random_range(0..junk.len())]);
            s.push(' ');
            s.extend(&chars[at..]);
            s
        }
    };
    if rng.random_bool(0.1) {
        out = out.to_lowercase();
    }
    out
}

pub fn tap() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut rng = support::rng(0x7A9);
    let records: Vec<_> = (0..1000).map(|i| adql_gen::random_record(&mut rng, i)).collect();
    let mut sorted = records.clone();
    sorted.sort_by(|a, b| a.obs_publisher_did.cmp(&b.obs_publisher_did));
    let catalog: Catalog = records.into_iter().collect();
    let config = GatewayConfig {
        catalog_path: dir.path().join("catalog.jsonl"),
        store_path: dir.path().join("prov.json"),
        data_dir: dir.path().join("files"),
        ..GatewayConfig::default()
    };
    save_catalog_file(&catalog, &config.catalog_path).map_err(|e| e.to_string())?;
    let gw = Gateway::open(config).map_err(|e| e.to_string())?;
    ensure!(gw.catalog().len() == 1000, "catalog holds {}", gw.catalog().len());
    let server = start_server(gw);
    let client = reqwest::blocking::Client::new();
    let base = server.base.clone();

    // fuzz set
    let mut tally: BTreeMap<String, usize> = BTreeMap::new();
    for case in 0..100 {
        let valid = adql_gen::random_query(&mut rng, &sorted);
        let query = if case % 2 == 0 { valid.to_string() } else { mangle(&mut rng, &valid.to_string()) };
        let mut params = vec![("REQUEST", "doQuery".to_owned()), ("LANG", "ADQL".to_owned()), ("QUERY", query.clone())];
        match case % 10 {
            1 => params.push(("MAXREC", rng.random_range(0..20).to_string())),
            3 => params.push(("MAXREC", "-1".into())),
            5 => params[1].1 = "SQL".into(),
            7 => {
                params.remove(2);
            }
            9 => params.push(("FORMAT", "votable".into())),
            _ => {}
        }
        let reply = sync(&client, &base, &params, case % 3 == 0).map_err(|e| format!("fuzz {case} {query:?}: {e}"))?;
        ensure!(status_ok(&reply.statuses), "fuzz {case} {query:?}: statuses {:?}", reply.statuses);
        *tally.entry(reply.statuses.join("+")).or_default() += 1;
        if case % 2 == 0 {
            ensure!(reply.statuses == ["OK"], "fuzz {case} {query}: valid query answered {:?}", reply.statuses);
            let (want, _) = oracle::run(&valid, &sorted, None);
            ensure!(reply.rows.len() == want.len(), "fuzz {case} {query}: {} rows, oracle {}", reply.rows.len(), want.len());
        }
    }

    // MAXREC truncation
    for k in [0usize, 1, 7, 999] {
        let params = [
            ("REQUEST", "doQuery".to_owned()),
            ("LANG", "ADQL".to_owned()),
            ("QUERY", "SELECT obs_id FROM ivoa.obscore".to_owned()),
            ("MAXREC", k.to_string()),
        ];
        let r = sync(&client, &base, &params, false)?;
        ensure!(r.rows.len() == k, "MAXREC={k}: {} rows", r.rows.len());
        ensure!(r.statuses == ["OK", "OVERFLOW"], "MAXREC={k}: statuses {:?}", r.statuses);
    }
    let r = sync(
        &client,
        &base,
        &[("REQUEST", "doQuery".into()), ("LANG", "ADQL".into()), ("QUERY", "SELECT obs_id FROM ivoa.obscore".into()), ("MAXREC", "1000".into())],
        false,
    )?;
    ensure!(r.rows.len() == 1000 && r.statuses == ["OK"], "MAXREC=1000: {} rows {:?}", r.rows.len(), r.statuses);

    // concurrency
    let queries: Vec<String> = (0..50)
        .map(|i| {
            if i % 2 == 0 {
                let ra = 7.2 * i as f64;
                format!(
                    "SELECT obs_id, s_ra, s_dec FROM ivoa.obscore WHERE CONTAINS(POINT('ICRS', s_ra, s_dec), CIRCLE('ICRS', {ra}, {}, {}))= 1",
                    (i as f64 - 25.0) * 3.0,
                    5.0 + i as f64
                )
            } else {
                format!("SELECT obs_id FROM ivoa.obscore WHERE t_exptime BETWEEN {} AND {} OR target_name LIKE 'Crab%'", 100 * i, 100 * i + 1500)
            }
        })
        .collect();
    let expected: Vec<usize> = queries
        .iter()
        .map(|q| oracle::run(&parse_query(q).unwrap(), &sorted, None).0.len())
        .collect();
    let results: Vec<Result<usize, String>> = std::thread::scope(|s| {
        let handles: Vec<_> = queries
            .iter()
            .map(|q| {
                let (client, base) = (client.clone(), base.clone());
                s.spawn(move || {
                    let params = [("REQUEST", "doQuery".to_owned()), ("LANG", "ADQL".to_owned()), ("QUERY", q.clone())];
                    let r = sync(&client, &base, &params, false)?;
                    if r.statuses != ["OK"] {
                        return Err(format!("statuses {:?}", r.statuses));
                    }
                    Ok(r.rows.len())
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    for (i, (got, want)) in results.iter().zip(&expected).enumerate() {
        match got {
            Ok(n) => ensure!(n == want, "concurrent query {i}: {n} rows, oracle {want}"),
            Err(e) => return Err(format!("concurrent query {i}: {e}")),
        }
    }
    drop(server);
    Ok(format!(
        "100 fuzz replies well-formed {tally:?}; MAXREC=k exact with OVERFLOW; 50 concurrent counts correct (total {})",
        expected.iter().sum::<usize>()
    ))
}

// ---------------------------------------------------------------------------
// Provenance

pub fn reconstruction() -> Outcome {
    let mut rng = support::rng(0x9E0);
    let (mut acts, mut ents, mut fan_in) = (0, 0, 0);
    for case in 0..100 {
        let p = pipelines::random_pipeline(&mut rng);
        let steps = pipelines::steps_from_files(p.dir.path(), &p.generated);
        let rebuilt = reconstruct(&steps).map_err(|e| format!("pipeline {case}: {e}"))?;
        let (got, want) = (pipelines::facts(&rebuilt), pipelines::facts(&p.store));
        ensure!(got == want, "pipeline {case}: reconstructed graph differs\n{got:?}\n{want:?}");
        acts += p.activities;
        ents += want.entities.len();
        fan_in = fan_in.max(want.activities.values().map(|a| a.used.len()).max().unwrap_or(0));
    }
    Ok(format!("100 pipelines ({acts} activities, {ents} entities, fan-in up to {fan_in}) rebuilt id-isomorphic"))
}

pub fn demo() -> Outcome {
    let d = pipelines::demo_pipeline();
    let gw = &d.gateway;
    let store = gw.store();
    let facts = pipelines::facts(&store);
    for (i, id) in d.outputs.iter().enumerate() {
        let bytes = std::fs::read(data_path(&gw.config().data_dir, id)).map_err(|e| e.to_string())?;
        let hdus = read_fits(&bytes).map_err(|e| format!("{id}: {e}"))?;
        if i < 2 {
            read_dl3_bytes(&bytes).map_err(|e| format!("{id}: {e}"))?;
        } else {
            Histogram::from_hdus(&hdus).map_err(|e| format!("{id}: {e}"))?;
        }
        let on_top = pipelines::facts(&extract_on_top(&provenance_cards(&hdus)).map_err(|e| e.to_string())?);
        ensure!(on_top.activities.len() == 1, "{id}: {} activities on top", on_top.activities.len());
        for (act, view) in &on_top.activities {
            ensure!(facts.activities.get(act) == Some(view), "{id}: on-top activity {act} differs from the store");
        }
        ensure!(on_top.attributed.is_subset(&facts.attributed), "{id}: attribution not in store");
    }
    let anc = store.ancestry(&d.outputs[2], None).map_err(|e| e.to_string())?;
    ensure!(
        anc.activities.len() == 3 && anc.entities.len() == 4,
        "ancestry has {} activities, {} entities",
        anc.activities.len(),
        anc.entities.len()
    );
    let back = parse_provjson(&serialize_provjson(&store)).map_err(|e| e.to_string())?;
    ensure!(back == store, "PROV-JSON round trip changed the store");
    Ok("outputs re-parse and match the store; ancestry 3 activities / 4 entities; PROV-JSON identity".into())
}

// ---------------------------------------------------------------------------
// End to end through the binary

fn gateway_cmd(dir: &Path) -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_gateway"));
    c.env_remove("GATEWAY_CONFIG")
        .env("RUST_LOG", "warn")
        .arg("--catalog")
        .arg(dir.join("catalog.jsonl"))
        .arg("--store")
        .arg(dir.join("prov.json"))
        .arg("--data-dir")
        .arg(dir.join("files"));
    c
}

struct Child(std::process::Child);

impl Drop for Child {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

pub fn end_to_end() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let dir = dir.path();
    let (ra0, dec0, radius) = (83.633, 22.014, 1.5);
    let pointings = [
        ("31001", 83.633, 22.014),
        ("31002", 266.4, -28.9),
        ("31003", 84.6, 22.9),
        ("31004", 83.633, 24.0),
        ("31005", 329.7, -30.2),
    ];
    let mut files = Vec::new();
    for (id, ra, dec) in pointings {
        let p = dir.join(format!("{id}.fits"));
        std::fs::write(&p, write_dl3_bytes(&observation(id, ra, dec, 200)).unwrap()).map_err(|e| e.to_string())?;
        files.push(p);
    }
    let out = gateway_cmd(dir).arg("ingest").args(&files).output().map_err(|e| e.to_string())?;
    ensure!(out.status.success(), "ingest: {}", String::from_utf8_lossy(&out.stderr));

    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let base = format!("http://127.0.0.1:{port}");
    let mut server = Child(
        gateway_cmd(dir)
            .args(["serve", "--port", &port.to_string()])
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| e.to_string())?,
    );
    let client = reqwest::blocking::Client::new();
    let deadline = Instant::now() + Duration::from_secs(5);
    loop {
        if client.get(format!("{base}/availability")).send().is_ok_and(|r| r.status().is_success()) {
            break;
        }
        if let Some(s) = server.0.try_wait().unwrap() {
            return Err(format!("server exited: {s}"));
        }
        ensure!(Instant::now() < deadline, "server did not come up");
        std::thread::sleep(Duration::from_millis(25));
    }

    let adql = format!(
        "SELECT obs_id, s_ra, s_dec FROM ivoa.obscore WHERE CONTAINS(POINT('ICRS', s_ra, s_dec), CIRCLE('ICRS', {ra0}, {dec0}, {radius})) = 1"
    );
    let reply = sync(
        &client,
        &base,
        &[("REQUEST", "doQuery".into()), ("LANG", "ADQL".into()), ("QUERY", adql)],
        false,
    )?;
    ensure!(reply.statuses == ["OK"], "cone search statuses {:?}", reply.statuses);
    let id_col = reply.fields.iter().position(|f| f == "obs_id").ok_or("no obs_id field")?;
    let got: BTreeSet<String> = reply.rows.iter().map(|r| r[id_col].clone()).collect();
    let want: BTreeSet<String> = pointings
        .iter()
        .filter(|(_, ra, dec)| oracle::vincenty_separation(*ra, *dec, ra0, dec0) <= radius)
        .map(|(id, ..)| id.to_string())
        .collect();
    ensure!(want.len() == 2, "oracle expects {want:?}");
    ensure!(got == want, "cone search returned {got:?}, oracle {want:?}");

    let input = got.iter().next().unwrap().clone();
    let body = serde_json::json!({
        "activity": "region_select",
        "params": {"ra": ra0, "dec": dec0, "radius": 0.5},
        "inputs": [input],
        "agent": "e2e",
    });
    let resp = client.post(format!("{base}/run")).json(&body).send().map_err(|e| e.to_string())?;
    ensure!(resp.status().is_success(), "POST /run: {}", resp.status());
    let v: serde_json::Value = resp.json().map_err(|e| e.to_string())?;
    let output = v["outputs"][0].as_str().ok_or("no output id")?.to_owned();
    let activity = v["activity_id"].as_str().ok_or("no activity id")?.to_owned();

    let out = gateway_cmd(dir)
        .args(["prov", "export", &output, "--format", "provn"])
        .output()
        .map_err(|e| e.to_string())?;
    ensure!(out.status.success(), "prov export: {}", String::from_utf8_lossy(&out.stderr));
    let provn = String::from_utf8_lossy(&out.stdout).into_owned();
    let provn_activity = activity.replace('/', "\\/");
    ensure!(provn.trim_start().starts_with("document") && provn.trim_end().ends_with("endDocument"), "not a PROV-N document");
    ensure!(provn.contains(&format!("activity({provn_activity}")), "PROV-N lacks activity {activity}:\n{provn}");
    ensure!(provn.contains(&format!("used({provn_activity}, {input}")), "PROV-N lacks usage of {input}:\n{provn}");
    ensure!(provn.contains(&format!("wasGeneratedBy({output}, {provn_activity}")), "PROV-N lacks generation of {output}:\n{provn}");

    // the new product is itself discoverable
    let reply = sync(
        &client,
        &base,
        &[("REQUEST", "doQuery".into()), ("LANG", "ADQL".into()), ("QUERY", format!("SELECT obs_id FROM ivoa.obscore WHERE obs_id = '{output}'"))],
        false,
    )?;
    ensure!(reply.rows.len() == 1, "new product not in catalog");
    drop(server);
    Ok(format!("cone search returned {got:?}; {activity} produced {output}; PROV-N exported"))
}
