use std::collections::BTreeMap;
use std::fmt::Write as _;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct NodeCounts {
    pub executed: u64,
    pub emitted: u64,
}

/// Summary of one topology run, printable as a flat `key=value` block.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunReport {
    pub nodes: BTreeMap<String, NodeCounts>,
    /// Spout messages emitted for the first time (replays excluded).
    pub spout_messages: u64,
    pub replays: u64,
    pub failed_roots: u64,
    pub injected_drops: u64,
    /// Tuples routed to the error channel (e.g. undecodable payloads).
    pub errors: u64,
    pub restarts: u64,
    pub wall_time_ms: u64,
    pub clock_ms: u64,
    pub killed: bool,
    pub metrics: BTreeMap<String, u64>,
}

impl RunReport {
    pub fn metric(&self, key: &str) -> u64 {
        self.metrics.get(key).copied().unwrap_or(0)
    }

    pub fn total_executed(&self) -> u64 {
        self.nodes.values().map(|c| c.executed).sum()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "run.wall_time_ms={}", self.wall_time_ms);
        let _ = writeln!(out, "run.clock_ms={}", self.clock_ms);
        let _ = writeln!(out, "run.killed={}", self.killed);
        let _ = writeln!(out, "run.spout_messages={}", self.spout_messages);
        let _ = writeln!(out, "run.replays={}", self.replays);
        let _ = writeln!(out, "run.failed_roots={}", self.failed_roots);
        let _ = writeln!(out, "run.injected_drops={}", self.injected_drops);
        let _ = writeln!(out, "run.errors={}", self.errors);
        let _ = writeln!(out, "run.restarts={}", self.restarts);
        for (node, c) in &self.nodes {
            let _ = writeln!(out, "node.{node}.executed={}", c.executed);
            let _ = writeln!(out, "node.{node}.emitted={}", c.emitted);
        }
        for (k, v) in &self.metrics {
            let _ = writeln!(out, "metric.{k}={v}");
        }
        out
    }

    /// Parses the output of [`RunReport::to_text`]. Unknown keys are ignored.
    pub fn parse_text(text: &str) -> Option<RunReport> {
        let mut r = RunReport::default();
        let mut any = false;
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
            let (key, value) = line.split_once('=')?;
            any = true;
            if key == "run.killed" {
                r.killed = value == "true";
                continue;
            }
            let n: u64 = value.parse().ok()?;
            if let Some(m) = key.strip_prefix("metric.") {
                r.metrics.insert(m.to_string(), n);
            } else if let Some(rest) = key.strip_prefix("node.") {
                let (node, field) = rest.rsplit_once('.')?;
                let c = r.nodes.entry(node.to_string()).or_default();
                match field {
                    "executed" => c.executed = n,
                    "emitted" => c.emitted = n,
                    _ => {}
                }
            } else {
                match key {
                    "run.wall_time_ms" => r.wall_time_ms = n,
                    "run.clock_ms" => r.clock_ms = n,
                    "run.spout_messages" => r.spout_messages = n,
                    "run.replays" => r.replays = n,
                    "run.failed_roots" => r.failed_roots = n,
                    "run.injected_drops" => r.injected_drops = n,
                    "run.errors" => r.errors = n,
                    "run.restarts" => r.restarts = n,
                    _ => {}
                }
            }
        }
        any.then_some(r)
    }
}
