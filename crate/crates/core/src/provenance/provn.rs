use super::ProvGraph;

/// Escapes an id for use as a PROV-N local name.
fn qname(id: &str) -> String {
    let mut out = String::with_capacity(id.len());
    for c in id.chars() {
        if c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.' | ':') {
            out.push(c);
        } else {
            out.push('\\');
            out.push(c);
        }
    }
    out
}

fn string(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

fn attrs(pairs: &[(String, String)]) -> String {
    let body: Vec<String> = pairs.iter().map(|(k, v)| format!("{k}={}", string(v))).collect();
    format!("[{}]", body.join(", "))
}

fn push(pairs: &mut Vec<(String, String)>, key: &str, v: &Option<String>) {
    if let Some(v) = v {
        pairs.push((key.to_owned(), v.clone()));
    }
}

fn role(r: &Option<String>) -> String {
    let mut pairs = Vec::new();
    push(&mut pairs, "prov:role", r);
    attrs(&pairs)
}

/// PROV-N, one statement per line, ordered by statement kind and then id so
/// equal graphs print identically.
pub fn serialize_provn(graph: &ProvGraph) -> String {
    let mut lines = vec!["document".to_owned()];
    for (id, e) in &graph.entities {
        let mut pairs = vec![("prov:label".to_owned(), e.name.clone())];
        push(&mut pairs, "prov:location", &e.location);
        push(&mut pairs, "voprov:generatedAtTime", &e.generated_at);
        push(&mut pairs, "voprov:comment", &e.comment);
        for (k, v) in &e.attributes {
            pairs.push((format!("gw:{}", qname(k)), v.clone()));
        }
        lines.push(format!("entity({}, {})", qname(id), attrs(&pairs)));
    }
    for (id, a) in &graph.activities {
        let mut pairs = vec![("prov:label".to_owned(), a.name.clone())];
        push(&mut pairs, "voprov:description", &a.description_ref);
        push(&mut pairs, "voprov:comment", &a.comment);
        push(&mut pairs, "voprov:workflow", &a.workflow);
        push(&mut pairs, "voprov:instrument", &a.instrument);
        for (k, v) in &a.parameters {
            pairs.push((format!("param:{}", qname(k)), v.clone()));
        }
        let time = |t: &Option<String>| t.clone().unwrap_or_else(|| "-".into());
        lines.push(format!(
            "activity({}, {}, {}, {})",
            qname(id),
            time(&a.start_time),
            time(&a.end_time),
            attrs(&pairs)
        ));
    }
    for (id, a) in &graph.agents {
        let pairs = vec![
            ("prov:label".to_owned(), a.name.clone()),
            ("prov:type".to_owned(), a.kind.prov_type().to_owned()),
        ];
        lines.push(format!("agent({}, {})", qname(id), attrs(&pairs)));
    }
    let mut rel = |kind: &str, mut items: Vec<(&String, &String, &Option<String>)>, third: &str| {
        items.sort();
        for (a, b, r) in items {
            lines.push(format!("{kind}({}, {}{third}, {})", qname(a), qname(b), role(r)));
        }
    };
    rel("used", graph.used.iter().map(|u| (&u.activity, &u.entity, &u.role)).collect(), ", -");
    rel(
        "wasGeneratedBy",
        graph.was_generated_by.iter().map(|g| (&g.entity, &g.activity, &g.role)).collect(),
        ", -",
    );
    rel(
        "wasAttributedTo",
        graph.was_attributed_to.iter().map(|a| (&a.entity, &a.agent, &a.role)).collect(),
        "",
    );
    rel(
        "wasAssociatedWith",
        graph.was_associated_with.iter().map(|a| (&a.activity, &a.agent, &a.role)).collect(),
        ", -",
    );
    lines.push("endDocument".to_owned());
    lines.join("\n")
}
