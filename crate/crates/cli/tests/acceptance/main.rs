//! End-to-end acceptance run: one PASS/FAIL line per criterion, each within
//! its time budget. Exits non-zero if any criterion fails.

#[path = "../../../core/tests/support/mod.rs"]
mod support;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

mod criteria;

type Outcome = Result<String, String>;

struct Criterion {
    name: &'static str,
    budget: Duration,
    run: fn() -> Outcome,
}

fn main() {
    let all = [
        Criterion { name: "fits round trip", budget: Duration::from_secs(10), run: criteria::fits },
        Criterion { name: "dl3 write/parse/validate", budget: Duration::from_secs(10), run: criteria::dl3 },
        Criterion { name: "adql vs brute force", budget: Duration::from_secs(60), run: criteria::adql },
        Criterion { name: "angular separation", budget: Duration::from_secs(30), run: criteria::geometry },
        Criterion { name: "tap protocol", budget: Duration::from_secs(60), run: criteria::tap },
        Criterion { name: "last-step reconstruction", budget: Duration::from_secs(30), run: criteria::reconstruction },
        Criterion { name: "three-step demo pipeline", budget: Duration::from_secs(5), run: criteria::demo },
        Criterion { name: "end to end", budget: Duration::from_secs(10), run: criteria::end_to_end },
    ];
    let filter: Option<String> = std::env::args().skip(1).find(|a| !a.starts_with('-'));

    let mut failed = 0;
    for (i, c) in all.iter().enumerate() {
        let n = i + 1;
        if filter.as_ref().is_some_and(|f| !c.name.contains(f.as_str()) && *f != n.to_string()) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(c.run)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let took = start.elapsed();
        let outcome = match outcome {
            Ok(detail) if took > c.budget => Err(format!("{detail}; over budget")),
            o => o,
        };
        let (verdict, detail) = match &outcome {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        println!(
            "{verdict} {n} {}: {detail} ({:.2} s of {} s)",
            c.name,
            took.as_secs_f64(),
            c.budget.as_secs()
        );
        if outcome.is_err() {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
