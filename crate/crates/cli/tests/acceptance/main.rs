//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any failed. Extra arguments filter criteria by name.

mod atomicity;
mod concurrency;
mod fixture;
mod oracle;
mod roundtrip;
mod shuffle;
mod simulation;
mod support;

use std::panic::{self, AssertUnwindSafe};
use std::time::{Duration, Instant};

type Check = Result<String, String>;

struct Criterion {
    id: u8,
    name: &'static str,
    budget: Option<Duration>,
    run: fn() -> Check,
}

const CRITERIA: [Criterion; 7] = [
    Criterion {
        id: 1,
        name: "reference_layout",
        budget: Some(Duration::from_secs(1)),
        run: fixture::run,
    },
    Criterion {
        id: 2,
        name: "export_round_trip",
        budget: Some(Duration::from_secs(30)),
        run: roundtrip::run,
    },
    Criterion {
        id: 3,
        name: "aggregation_oracle",
        budget: Some(Duration::from_secs(30)),
        run: oracle::run,
    },
    Criterion {
        id: 4,
        name: "shuffle_properties",
        budget: Some(Duration::from_secs(10)),
        run: shuffle::run,
    },
    Criterion {
        id: 5,
        name: "end_to_end_simulation",
        budget: Some(Duration::from_secs(120)),
        run: simulation::run,
    },
    Criterion {
        id: 6,
        name: "concurrency_no_loss",
        budget: Some(Duration::from_secs(60)),
        run: concurrency::run,
    },
    Criterion {
        id: 7,
        name: "crash_atomicity",
        budget: None,
        run: atomicity::run,
    },
];

fn main() {
    if atomicity::child_main() {
        return;
    }
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    panic::set_hook(Box::new(|_| {}));

    let mut failed = 0;
    for c in &CRITERIA {
        if !filters.is_empty() && !filters.iter().any(|f| c.name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let result = panic::catch_unwind(AssertUnwindSafe(c.run)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let elapsed = start.elapsed();
        let result = match (result, c.budget) {
            (Ok(_), Some(budget)) if elapsed > budget => Err(format!("took {elapsed:.2?}, budget {budget:?}")),
            (r, _) => r,
        };
        match result {
            Ok(detail) => println!("PASS {} {} ({elapsed:.2?}): {detail}", c.id, c.name),
            Err(reason) => {
                failed += 1;
                println!("FAIL {} {} ({elapsed:.2?}): {reason}", c.id, c.name);
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
