//! Check reports: named results with canonical-text payloads, rendered as
//! plain text or JSON. Payload lines are the cross-run comparison format, so
//! everything in them must come from canonical displays; the timing field is
//! the one exception and is excluded from golden comparisons.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Skipped,
}

impl std::fmt::Display for Status {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Status::Pass => write!(f, "pass"),
            Status::Fail => write!(f, "fail"),
            Status::Skipped => write!(f, "skipped"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub status: Status,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub payload: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub command: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_fingerprint: Option<String>,
    pub results: Vec<CheckResult>,
    pub timing_ms: u128,
}

impl Report {
    pub fn new(command: impl Into<String>) -> Self {
        Report {
            command: command.into(),
            model_fingerprint: None,
            results: Vec::new(),
            timing_ms: 0,
        }
    }

    pub fn push(&mut self, name: impl Into<String>, status: Status, payload: Vec<String>) {
        self.results.push(CheckResult { name: name.into(), status, payload });
    }

    pub fn pass(&mut self, name: impl Into<String>, payload: Vec<String>) {
        self.push(name, Status::Pass, payload);
    }

    pub fn fail(&mut self, name: impl Into<String>, payload: Vec<String>) {
        self.push(name, Status::Fail, payload);
    }

    pub fn skipped(&mut self, name: impl Into<String>, payload: Vec<String>) {
        self.push(name, Status::Skipped, payload);
    }

    /// Record a boolean check outcome in one call.
    pub fn check(&mut self, name: impl Into<String>, ok: bool, payload: Vec<String>) {
        self.push(name, if ok { Status::Pass } else { Status::Fail }, payload);
    }

    pub fn all_passed(&self) -> bool {
        self.results.iter().all(|r| r.status != Status::Fail)
    }

    /// Human-readable rendering. Header lines are bracketed; payload lines
    /// are printed verbatim at column zero so they can be compared against
    /// canonical polynomial text directly.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("command: {}\n", self.command));
        if let Some(fp) = &self.model_fingerprint {
            out.push_str(&format!("model: {fp}\n"));
        }
        for r in &self.results {
            out.push_str(&format!("[{}] {}\n", r.status, r.name));
            for line in &r.payload {
                out.push_str(line);
                out.push('\n');
            }
        }
        out.push_str(&format!("elapsed: {} ms\n", self.timing_ms));
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Run independent tasks on the rayon pool, collecting results in task
/// order so reports stay deterministic under parallel execution.
pub fn run_ordered<T, F>(tasks: Vec<F>) -> Vec<T>
where
    T: Send,
    F: FnOnce() -> T + Send,
{
    use rayon::prelude::*;
    tasks.into_par_iter().map(|f| f()).collect()
}

/// Size the global rayon pool from `PNREC_THREADS` when the variable is set
/// to a positive count. Later calls are no-ops, as are invalid values.
pub fn configure_threads() {
    if let Ok(raw) = std::env::var("PNREC_THREADS") {
        if let Ok(n) = raw.trim().parse::<usize>() {
            if n >= 1 {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_rendering_and_exit_predicate() {
        let mut r = Report::new("check torsion");
        r.model_fingerprint = Some("abc123".into());
        r.pass("torsion residual", vec!["0".into()]);
        assert!(r.all_passed());
        let text = r.to_text();
        assert!(text.contains("command: check torsion\n"));
        assert!(text.contains("model: abc123\n"));
        assert!(text.contains("[pass] torsion residual\n0\n"));
        r.fail("other", vec![]);
        assert!(!r.all_passed());
    }

    #[test]
    fn json_round_trip() {
        let mut r = Report::new("s1 ch");
        r.skipped("level 3", vec!["window too small".into()]);
        let back: Report = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn ordered_execution_keeps_task_order() {
        let tasks: Vec<Box<dyn FnOnce() -> usize + Send>> = (0..64usize)
            .map(|i| Box::new(move || i * i) as Box<dyn FnOnce() -> usize + Send>)
            .collect();
        let out = run_ordered(tasks);
        assert_eq!(out, (0..64usize).map(|i| i * i).collect::<Vec<_>>());
    }
}
