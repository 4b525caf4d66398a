//! Minimal runner for the acceptance suite: each criterion prints one
//! `PASS`/`FAIL` line with its measured values and runtime.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

/// Result of one criterion body.
#[derive(Debug, Clone)]
pub struct Verdict {
    pub pass: bool,
    pub detail: String,
}

impl Verdict {
    pub fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

pub struct Criterion {
    pub id: u32,
    pub name: &'static str,
    /// Wall-clock budget; exceeding it fails the criterion.
    pub budget: Duration,
    pub run: fn() -> Verdict,
}

/// Criterion ids selected by positional arguments; all when none are given.
pub fn selected(args: impl IntoIterator<Item = String>) -> Option<Vec<u32>> {
    let ids: Vec<u32> = args.into_iter().filter_map(|a| a.parse().ok()).collect();
    (!ids.is_empty()).then_some(ids)
}

/// Runs the criteria in order and returns whether all passed.
pub fn run_all(criteria: &[Criterion], only: Option<&[u32]>) -> bool {
    let mut all = true;
    for c in criteria {
        if only.is_some_and(|ids| !ids.contains(&c.id)) {
            continue;
        }
        let started = Instant::now();
        let verdict = catch_unwind(AssertUnwindSafe(c.run)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Verdict::new(false, format!("panicked: {msg}"))
        });
        let elapsed = started.elapsed();
        let in_time = elapsed <= c.budget;
        let pass = verdict.pass && in_time;
        all &= pass;
        println!(
            "{} criterion {} ({}): {}; runtime {:.1}s {} {:.0}s",
            if pass { "PASS" } else { "FAIL" },
            c.id,
            c.name,
            verdict.detail,
            elapsed.as_secs_f64(),
            if in_time { "<=" } else { ">" },
            c.budget.as_secs_f64()
        );
    }
    all
}
