//! Per-identity quotas over fixed windows.
//!
//! A window opens at an identity's first counted request and lasts
//! `window_secs`. Text format, one entry per line after a header:
//! `<operation> <identity> <window_start> <count>`.

use std::collections::HashMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Operation {
    Query,
    Decrypt,
}

impl Operation {
    fn as_str(self) -> &'static str {
        match self {
            Operation::Query => "QUERY",
            Operation::Decrypt => "DECRYPT",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "QUERY" => Some(Operation::Query),
            "DECRYPT" => Some(Operation::Decrypt),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Entry {
    window_start: u64,
    count: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RateLimited {
    /// Seconds until the identity's window reopens.
    pub retry_after: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RateLedger {
    quota: u32,
    window_secs: u64,
    entries: HashMap<(Operation, String), Entry>,
}

const HEADER: &str = "# geopsi rate ledger v1";

impl RateLedger {
    pub fn new(quota: u32, window_secs: u64) -> Self {
        RateLedger {
            quota,
            window_secs: window_secs.max(1),
            entries: HashMap::new(),
        }
    }

    pub fn quota(&self) -> u32 {
        self.quota
    }

    pub fn window_secs(&self) -> u64 {
        self.window_secs
    }

    /// Counts one request if the identity still has quota in its window.
    pub fn try_acquire(
        &mut self,
        op: Operation,
        identity: &str,
        now: u64,
    ) -> Result<(), RateLimited> {
        let window = self.window_secs;
        let entry = self
            .entries
            .entry((op, identity.to_string()))
            .or_insert(Entry {
                window_start: now,
                count: 0,
            });
        if now.saturating_sub(entry.window_start) >= window {
            *entry = Entry {
                window_start: now,
                count: 0,
            };
        }
        if entry.count >= self.quota {
            return Err(RateLimited {
                retry_after: (entry.window_start + window).saturating_sub(now),
            });
        }
        entry.count += 1;
        Ok(())
    }

    pub fn used(&self, op: Operation, identity: &str) -> u32 {
        self.entries
            .get(&(op, identity.to_string()))
            .map_or(0, |e| e.count)
    }

    pub fn to_text(&self) -> String {
        let mut lines: Vec<String> = self
            .entries
            .iter()
            .map(|((op, id), e)| format!("{} {} {} {}", op.as_str(), id, e.window_start, e.count))
            .collect();
        lines.sort();
        let mut out = String::from(HEADER);
        out.push('\n');
        for l in lines {
            out.push_str(&l);
            out.push('\n');
        }
        out
    }

    /// Restores entries; quota and window come from the current configuration.
    pub fn from_text(text: &str, quota: u32, window_secs: u64) -> Result<Self, String> {
        let mut ledger = RateLedger::new(quota, window_secs);
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parts: Vec<&str> = line.split_whitespace().collect();
            let bad = || format!("ledger line {}: {line:?}", i + 1);
            let [op, id, start, count] = parts[..] else {
                return Err(bad());
            };
            let op = Operation::parse(op).ok_or_else(bad)?;
            let entry = Entry {
                window_start: start.parse().map_err(|_| bad())?,
                count: count.parse().map_err(|_| bad())?,
            };
            ledger.entries.insert((op, id.to_string()), entry);
        }
        Ok(ledger)
    }
}
