//! Attaches `@trace(k)` annotations to every access that survives pruning.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::frontend::{shared_accesses, AccessKind, Program, SiteId};
use crate::lockset::RaceReport;
use crate::{program_digest, Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SiteRow {
    pub index: u32,
    pub site: SiteId,
    /// Position among the statement's shared accesses.
    pub slot: u32,
    pub lvalue: String,
    pub kind: AccessKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SiteTable {
    /// Digest of the instrumented program.
    pub digest: String,
    pub rows: Vec<SiteRow>,
}

impl SiteTable {
    pub fn empty(p: &Program) -> Self {
        SiteTable {
            digest: program_digest(p),
            rows: Vec::new(),
        }
    }

    pub fn row(&self, k: u32) -> Option<&SiteRow> {
        self.rows.get(k as usize)
    }

    pub fn sites(&self) -> BTreeSet<SiteId> {
        self.rows.iter().map(|r| r.site.clone()).collect()
    }

    /// Fails unless `p` is exactly the program this table was built for.
    pub fn check(&self, p: &Program) -> Result<()> {
        let d = program_digest(p);
        if d != self.digest {
            return Err(Error::Stale(format!(
                "site table digest {} does not match program digest {d}",
                self.digest
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("table serializes") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Annotates every access named in `report` and returns the instrumented
/// program with its site table. The report must describe exactly `p`.
pub fn instrument(p: &Program, report: &RaceReport) -> Result<(Program, SiteTable)> {
    let digest = program_digest(p);
    if report.digest != digest {
        return Err(Error::Stale(format!(
            "report digest {} does not match program digest {digest}",
            report.digest
        )));
    }
    let mut wanted: BTreeMap<(SiteId, u32), (String, AccessKind)> = BTreeMap::new();
    for w in &report.warnings {
        for a in &w.accesses {
            wanted.insert((a.key.site.clone(), a.key.slot), (w.lvalue.clone(), a.kind));
        }
    }
    let mut rows = Vec::new();
    for ((site, slot), (lvalue, kind)) in &wanted {
        let stmt = p
            .find_stmt(site)
            .ok_or_else(|| Error::Stale(format!("report names site {site} which is not in the program")))?;
        let ok = shared_accesses(p, stmt)
            .iter()
            .any(|a| a.slot == *slot && &a.lvalue == lvalue && a.kind == *kind);
        if !ok {
            return Err(Error::Stale(format!(
                "site {site} has no {kind} of `{lvalue}` at slot {slot}"
            )));
        }
        rows.push(SiteRow {
            index: rows.len() as u32,
            site: site.clone(),
            slot: *slot,
            lvalue: lvalue.clone(),
            kind: *kind,
        });
    }
    let mut by_site: BTreeMap<SiteId, Vec<u32>> = BTreeMap::new();
    for r in &rows {
        by_site.entry(r.site.clone()).or_default().push(r.index);
    }
    let mut out = p.clone();
    for f in &mut out.functions {
        f.walk_mut(&mut |s| {
            s.traces = by_site.get(&s.site).cloned().unwrap_or_default();
        });
    }
    let table = SiteTable {
        digest: program_digest(&out),
        rows,
    };
    Ok((out, table))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::{parse_program, print_program};
    use crate::lockset::analyze;

    #[test]
    fn no_warnings_no_annotations() {
        let p = parse_program("int x;\nvoid main() { x = 1; }").unwrap();
        let r = analyze(&p).unwrap();
        let (q, t) = instrument(&p, &r).unwrap();
        assert!(t.rows.is_empty());
        assert_eq!(print_program(&q), print_program(&p));
    }

    #[test]
    fn increment_gets_read_then_write() {
        let p = parse_program("int x;\nvoid w(int id) { x = x + 1; }\nvoid main() { spawn w(0); spawn w(1); }")
            .unwrap();
        let r = analyze(&p).unwrap();
        let (q, t) = instrument(&p, &r).unwrap();
        let kinds: Vec<(u32, AccessKind)> = t.rows.iter().map(|r| (r.slot, r.kind)).collect();
        assert_eq!(kinds, vec![(0, AccessKind::Read), (1, AccessKind::Write)]);
        assert!(print_program(&q).contains("@trace(0) @trace(1) x = x + 1;"));
        t.check(&q).unwrap();
        assert!(t.check(&p).is_err());
    }

    #[test]
    fn stale_report_rejected() {
        let p = parse_program("int x;\nvoid w(int id) { x = 1; }\nvoid main() { spawn w(0); spawn w(1); }").unwrap();
        let r = analyze(&p).unwrap();
        let q = parse_program("int x;\nvoid w(int id) { x = 2; }\nvoid main() { spawn w(0); spawn w(1); }").unwrap();
        let err = instrument(&q, &r).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("digest"));
    }
}
