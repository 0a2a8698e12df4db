//! Acceptance gate: runs the default corpus through every criterion and prints
//! one line per criterion. Exits non-zero if any criterion fails.

use std::collections::BTreeMap;
use std::process::ExitCode;
use std::time::Instant;

use caginalp_core::verification::{run_acceptance_suite, CorpusSpec, SuiteRow};

const NAMES: [&str; 10] = [
    "ODE-reduction exactness",
    "MMS convergence orders",
    "uniqueness",
    "continuous dependence",
    "energy inequality",
    "conservation",
    "hypothesis constants",
    "(M4) violation",
    "homotopy invariants",
    "estimate ledger stability",
];

fn describe(row: &SuiteRow) -> String {
    let measured = row.measured.map_or("n/a".to_string(), |m| format!("{m:.6e}"));
    let note = row.note.as_deref().map(|n| format!(" ({n})")).unwrap_or_default();
    format!("{} measured {measured} bound {:?}{note}", row.case_id, row.bound)
}

fn main() -> ExitCode {
    let spec = CorpusSpec::default_corpus();
    let start = Instant::now();
    let rows = run_acceptance_suite(&spec);
    let mut by_criterion: BTreeMap<u32, Vec<&SuiteRow>> = BTreeMap::new();
    for row in &rows {
        by_criterion.entry(row.criterion).or_default().push(row);
    }

    let mut failed = 0;
    for (i, name) in NAMES.iter().enumerate() {
        let c = i as u32 + 1;
        let group = by_criterion.get(&c).map(Vec::as_slice).unwrap_or(&[]);
        let pass = !group.is_empty() && group.iter().all(|r| r.pass);
        if !pass {
            failed += 1;
        }
        println!("criterion {c:>2} {name}: {} ({} checks)", if pass { "PASS" } else { "FAIL" }, group.len());
        for row in group.iter().filter(|r| !r.pass) {
            println!("    failing: {}", describe(row));
        }
    }
    println!("acceptance: {} of 10 criteria pass in {:.1} s", 10 - failed, start.elapsed().as_secs_f64());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
