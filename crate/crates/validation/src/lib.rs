//! Reporting harness for the acceptance checks: each criterion prints one
//! `PASS` or `FAIL` line, followed by any non-gating `INFO` lines.

use std::panic::{catch_unwind, AssertUnwindSafe, UnwindSafe};
use std::time::Instant;

pub struct Outcome {
    pub pass: bool,
    pub summary: String,
    pub info: Vec<String>,
}

impl Outcome {
    pub fn new(pass: bool, summary: String) -> Self {
        Outcome {
            pass,
            summary,
            info: Vec::new(),
        }
    }

    pub fn info(mut self, line: String) -> Self {
        self.info.push(line);
        self
    }
}

/// Evaluates one criterion, reporting a panic as a failure.
pub fn check(id: &str, title: &str, f: impl FnOnce() -> Outcome + UnwindSafe) -> bool {
    let start = Instant::now();
    let outcome = catch_unwind(f).unwrap_or_else(|e| {
        let msg = e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        Outcome::new(false, format!("panicked: {msg}"))
    });
    println!(
        "{} {id} {title}: {} [{:.2} s]",
        if outcome.pass { "PASS" } else { "FAIL" },
        outcome.summary,
        start.elapsed().as_secs_f64()
    );
    for line in &outcome.info {
        println!("INFO {id} {line}");
    }
    outcome.pass
}

/// Like [`check`] for closures borrowing shared state.
pub fn check_ref(id: &str, title: &str, f: impl FnOnce() -> Outcome) -> bool {
    check(id, title, AssertUnwindSafe(f))
}
