use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::affine::Affine;
use super::range::{RangeConstraint, Relation};

/// One side of a cross-range question: an access's resolved subscript and
/// the constraints of one of its call paths.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CspSide {
    pub subscript: Affine,
    pub constraints: Vec<RangeConstraint>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrossRangeCsp {
    /// `objective.0 == objective.1`.
    pub objective: (Affine, Affine),
    pub constraints: Vec<RangeConstraint>,
    /// Thread-id variables of the two instances, constrained unequal.
    pub distinctness: Option<(String, String)>,
    /// Objective variables no constraint mentions.
    pub unbounded: BTreeSet<String>,
}

/// Instance-suffixed name; `nthreads` is shared by both instances.
pub fn instance(name: &str, k: u8) -> String {
    if name == "nthreads" {
        name.to_string()
    } else {
        format!("{name}#{k}")
    }
}

/// Builds the overlap question for two accesses. `distinct_id` names the
/// thread-id variable (e.g. `worker.id`) when both accesses run in
/// instances of one entry whose ids are provably distinct.
pub fn build_cross_range_csp(a1: &CspSide, a2: &CspSide, distinct_id: Option<&str>) -> CrossRangeCsp {
    let lhs = a1.subscript.rename(&mut |v| instance(v, 1));
    let rhs = a2.subscript.rename(&mut |v| instance(v, 2));
    let mut all: Vec<RangeConstraint> = Vec::new();
    for (side, k) in [(a1, 1u8), (a2, 2u8)] {
        for c in &side.constraints {
            all.push(c.map(&mut |a| a.rename(&mut |v| instance(v, k))));
        }
    }
    let distinctness = distinct_id.map(|id| (instance(id, 1), instance(id, 2)));
    if let Some((x, y)) = &distinctness {
        all.push(RangeConstraint::new(x.clone(), Relation::Ne, Affine::var(y.clone())));
    }
    let mut relevant: BTreeSet<String> = lhs.vars().chain(rhs.vars()).cloned().collect();
    if let Some((x, y)) = &distinctness {
        relevant.insert(x.clone());
        relevant.insert(y.clone());
    }
    // keep only constraints connected to the objective through shared names
    let mut keep = vec![false; all.len()];
    loop {
        let mut grew = false;
        for (i, c) in all.iter().enumerate() {
            if keep[i] {
                continue;
            }
            let vs = c.vars();
            if vs.iter().any(|v| relevant.contains(v)) {
                keep[i] = true;
                relevant.extend(vs);
                grew = true;
            }
        }
        if !grew {
            break;
        }
    }
    let mut constraints: Vec<RangeConstraint> = all
        .into_iter()
        .zip(keep)
        .filter_map(|(c, k)| k.then_some(c))
        .collect();
    if relevant.contains("nthreads") {
        constraints.push(RangeConstraint::new("nthreads", Relation::Ge, Affine::constant(1)));
    }
    constraints.sort();
    constraints.dedup();
    let constrained: BTreeSet<String> = constraints.iter().flat_map(|c| c.vars()).collect();
    let unbounded = lhs
        .vars()
        .chain(rhs.vars())
        .filter(|v| !constrained.contains(*v))
        .cloned()
        .collect();
    CrossRangeCsp {
        objective: (lhs, rhs),
        constraints,
        distinctness,
        unbounded,
    }
}

impl fmt::Display for CrossRangeCsp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} == {}", self.objective.0, self.objective.1)?;
        let cs: Vec<String> = self.constraints.iter().map(|c| c.to_string()).collect();
        write!(f, " s.t. {{{}}}", cs.join(", "))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn side(sub: Affine, cs: Vec<RangeConstraint>) -> CspSide {
        CspSide {
            subscript: sub,
            constraints: cs,
        }
    }

    #[test]
    fn shifted_subscripts() {
        let a = side(Affine::var("w.id"), vec![]);
        let b = side(Affine::var("w.id").add(&Affine::constant(1)), vec![]);
        let csp = build_cross_range_csp(&a, &b, None);
        assert_eq!(csp.objective.0.to_string(), "w.id#1");
        assert_eq!(csp.objective.1.to_string(), "w.id#2 + 1");
        assert_eq!(csp.unbounded.len(), 2);
    }

    #[test]
    fn irrelevant_constraints_are_dropped() {
        let cs = vec![
            RangeConstraint::new("f.i", Relation::Ge, Affine::constant(0)),
            RangeConstraint::new("f.k", Relation::Le, Affine::var("f.m")),
            RangeConstraint::new("f.m", Relation::Le, Affine::constant(4)),
        ];
        let a = side(Affine::var("f.i"), cs.clone());
        let csp = build_cross_range_csp(&a, &a, Some("f.id"));
        let names: BTreeSet<String> = csp.constraints.iter().flat_map(|c| c.vars()).collect();
        assert!(names.contains("f.i#1") && names.contains("f.id#2"));
        assert!(!names.iter().any(|n| n.starts_with("f.k") || n.starts_with("f.m")));
        assert!(csp.unbounded.is_empty());
    }
}
