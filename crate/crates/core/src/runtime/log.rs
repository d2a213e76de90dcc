//! Text form of replay logs and their well-formedness checks.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EventKind {
    Sync,
    Race,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LogEvent {
    Sync {
        tid: usize,
        icount: u64,
        ts: u64,
        op: String,
        object: String,
    },
    Race {
        tid: usize,
        icount: u64,
        ts: u64,
        /// Site-table row.
        site: u32,
        value: i64,
    },
}

impl LogEvent {
    pub fn kind(&self) -> EventKind {
        match self {
            LogEvent::Sync { .. } => EventKind::Sync,
            LogEvent::Race { .. } => EventKind::Race,
        }
    }

    pub fn tid(&self) -> usize {
        match self {
            LogEvent::Sync { tid, .. } | LogEvent::Race { tid, .. } => *tid,
        }
    }

    pub fn icount(&self) -> u64 {
        match self {
            LogEvent::Sync { icount, .. } | LogEvent::Race { icount, .. } => *icount,
        }
    }

    pub fn ts(&self) -> u64 {
        match self {
            LogEvent::Sync { ts, .. } | LogEvent::Race { ts, .. } => *ts,
        }
    }

    pub fn ts_mut(&mut self) -> &mut u64 {
        match self {
            LogEvent::Sync { ts, .. } | LogEvent::Race { ts, .. } => ts,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReplayLog {
    pub digest: String,
    pub seed: u64,
    pub threads: usize,
    pub events: Vec<LogEvent>,
}

const MAGIC: &str = "#racx-log v1";

impl ReplayLog {
    pub fn render(&self) -> String {
        let mut out = format!("{MAGIC} digest={} seed={} threads={}\n", self.digest, self.seed, self.threads);
        for e in &self.events {
            let _ = match e {
                LogEvent::Sync {
                    tid,
                    icount,
                    ts,
                    op,
                    object,
                } => writeln!(out, "S {tid} {icount} {ts} {op}:{object}"),
                LogEvent::Race {
                    tid,
                    icount,
                    ts,
                    site,
                    value,
                } => writeln!(out, "R {tid} {icount} {ts} {site} {value}"),
            };
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or_else(|| Error::Log("empty log".into()))?;
        let rest = header
            .strip_prefix(MAGIC)
            .ok_or_else(|| Error::Log(format!("bad header `{header}`")))?;
        let mut fields = BTreeMap::new();
        for kv in rest.split_whitespace() {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Log(format!("bad header field `{kv}`")))?;
            fields.insert(k, v);
        }
        let field = |k: &str| -> Result<&str> {
            fields
                .get(k)
                .copied()
                .ok_or_else(|| Error::Log(format!("header lacks `{k}`")))
        };
        let digest = field("digest")?.to_string();
        let seed = num(field("seed")?, 1)?;
        let threads = num(field("threads")?, 1)?;
        let mut events = Vec::new();
        for (i, line) in lines {
            let n = i + 1;
            let parts: Vec<&str> = line.split_whitespace().collect();
            let ev = match parts.as_slice() {
                ["S", tid, icount, ts, opobj] => {
                    let (op, object) = opobj
                        .split_once(':')
                        .ok_or_else(|| Error::Log(format!("line {n}: expected op:object")))?;
                    LogEvent::Sync {
                        tid: num(tid, n)?,
                        icount: num(icount, n)?,
                        ts: num(ts, n)?,
                        op: op.to_string(),
                        object: object.to_string(),
                    }
                }
                ["R", tid, icount, ts, site, value] => LogEvent::Race {
                    tid: num(tid, n)?,
                    icount: num(icount, n)?,
                    ts: num(ts, n)?,
                    site: num(site, n)?,
                    value: num(value, n)?,
                },
                _ => return Err(Error::Log(format!("line {n}: cannot parse `{line}`"))),
            };
            events.push(ev);
        }
        Ok(ReplayLog {
            digest,
            seed,
            threads,
            events,
        })
    }

    /// Timestamps of each kind are exactly 1..N; per thread and kind,
    /// instruction counts never decrease and timestamps increase in file
    /// order.
    pub fn validate(&self) -> Result<()> {
        let mut seen: BTreeMap<EventKind, Vec<bool>> = BTreeMap::new();
        let mut counts: BTreeMap<EventKind, usize> = BTreeMap::new();
        for e in &self.events {
            *counts.entry(e.kind()).or_default() += 1;
        }
        for (k, n) in &counts {
            seen.insert(*k, vec![false; *n]);
        }
        let mut last: BTreeMap<(usize, EventKind), (u64, u64)> = BTreeMap::new();
        for (i, e) in self.events.iter().enumerate() {
            let marks = seen.get_mut(&e.kind()).expect("counted");
            let ts = e.ts();
            if ts == 0 || ts as usize > marks.len() || marks[ts as usize - 1] {
                return Err(Error::Log(format!(
                    "event {}: {:?} timestamp {ts} is out of range or repeated",
                    i + 1,
                    e.kind()
                )));
            }
            marks[ts as usize - 1] = true;
            if let Some(&(ic, t)) = last.get(&(e.tid(), e.kind())) {
                if e.icount() < ic || ts <= t {
                    return Err(Error::Log(format!(
                        "event {}: thread {} goes from (icount {ic}, ts {t}) to (icount {}, ts {ts})",
                        i + 1,
                        e.tid(),
                        e.icount()
                    )));
                }
            }
            last.insert((e.tid(), e.kind()), (e.icount(), ts));
        }
        Ok(())
    }

    pub fn count(&self, kind: EventKind) -> usize {
        self.events.iter().filter(|e| e.kind() == kind).count()
    }
}

fn num<T: std::str::FromStr>(s: &str, line: usize) -> Result<T> {
    s.parse()
        .map_err(|_| Error::Log(format!("line {line}: bad number `{s}`")))
}
