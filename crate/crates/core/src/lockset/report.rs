use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::frontend::{AccessKind, SiteId};

/// One static access as seen from one thread entry.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AccessKey {
    pub entry: String,
    pub site: SiteId,
    pub slot: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WarningAccess {
    #[serde(flatten)]
    pub key: AccessKey,
    pub kind: AccessKind,
    /// Distinct absolute locksets (L+) the access is reached with.
    pub locksets: Vec<Vec<String>>,
    /// Locks that may be held at the access in some context.
    pub may_held: Vec<String>,
    pub subscript: Option<String>,
}

impl WarningAccess {
    pub fn unlocked(&self) -> bool {
        self.locksets.iter().any(|l| l.is_empty())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Warning {
    pub lvalue: String,
    pub accesses: Vec<WarningAccess>,
    pub entry_pairs: Vec<(String, String)>,
    pub pairs: Vec<(AccessKey, AccessKey)>,
}

impl Warning {
    pub fn access(&self, key: &AccessKey) -> Option<&WarningAccess> {
        self.accesses.iter().find(|a| &a.key == key)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub warnings: usize,
    pub pairs: usize,
    pub sites: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RaceReport {
    /// Digest of the program the report describes.
    pub digest: String,
    pub warnings: Vec<Warning>,
    pub counts: Counts,
}

impl RaceReport {
    /// Sorts everything into the canonical order, drops accesses that are in
    /// no pair and warnings without pairs, and recomputes derived fields.
    pub fn normalize(&mut self) {
        for w in &mut self.warnings {
            for (a, b) in &mut w.pairs {
                if b < a {
                    std::mem::swap(a, b);
                }
            }
            w.pairs.sort();
            w.pairs.dedup();
            let used: BTreeSet<&AccessKey> = w.pairs.iter().flat_map(|(a, b)| [a, b]).collect();
            w.accesses.retain(|a| used.contains(&a.key));
            w.accesses
                .sort_by(|x, y| (&x.key.site, x.key.slot, &x.key.entry).cmp(&(&y.key.site, y.key.slot, &y.key.entry)));
            let mut eps: Vec<(String, String)> = w
                .pairs
                .iter()
                .map(|(a, b)| {
                    let (x, y) = (a.entry.clone(), b.entry.clone());
                    if x <= y {
                        (x, y)
                    } else {
                        (y, x)
                    }
                })
                .collect();
            eps.sort();
            eps.dedup();
            w.entry_pairs = eps;
        }
        self.warnings.retain(|w| !w.pairs.is_empty());
        self.warnings.sort_by(|a, b| a.lvalue.cmp(&b.lvalue));
        self.counts = self.recount();
    }

    /// Counts derived from the warnings themselves.
    pub fn recount(&self) -> Counts {
        Counts {
            warnings: self.warnings.len(),
            pairs: self.warnings.iter().map(|w| w.pairs.len()).sum(),
            sites: self.sites().len(),
        }
    }

    pub fn sites(&self) -> BTreeSet<SiteId> {
        self.warnings
            .iter()
            .flat_map(|w| w.accesses.iter().map(|a| a.key.site.clone()))
            .collect()
    }

    /// Every pair with the lvalue of its warning.
    pub fn pairs(&self) -> Vec<(String, AccessKey, AccessKey)> {
        self.warnings
            .iter()
            .flat_map(|w| w.pairs.iter().map(move |(a, b)| (w.lvalue.clone(), a.clone(), b.clone())))
            .collect()
    }

    /// Keeps only the pairs accepted by `keep`, then normalizes.
    pub fn retain_pairs(&mut self, mut keep: impl FnMut(&Warning, &AccessKey, &AccessKey) -> bool) {
        for i in 0..self.warnings.len() {
            let w = self.warnings[i].clone();
            self.warnings[i].pairs.retain(|(a, b)| keep(&w, a, b));
        }
        self.normalize();
    }

    /// Site pairs (unordered) covered by the report's warnings.
    pub fn site_pairs(&self) -> BTreeSet<(SiteId, SiteId)> {
        self.warnings
            .iter()
            .flat_map(|w| w.pairs.iter())
            .map(|(a, b)| order(a.site.clone(), b.site.clone()))
            .collect()
    }

    /// Access metadata by key, across warnings.
    pub fn access_index(&self) -> BTreeMap<AccessKey, (String, AccessKind)> {
        self.warnings
            .iter()
            .flat_map(|w| w.accesses.iter().map(move |a| (a.key.clone(), (w.lvalue.clone(), a.kind))))
            .collect()
    }

    /// Fails unless the report was computed for exactly `p`.
    pub fn check(&self, p: &crate::frontend::Program) -> crate::Result<()> {
        let d = crate::program_digest(p);
        if d != self.digest {
            return Err(crate::Error::Stale(format!(
                "report digest {} does not match program digest {d}",
                self.digest
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

pub fn order<T: Ord>(a: T, b: T) -> (T, T) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}
