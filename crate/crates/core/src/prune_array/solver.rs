//! Bounded integer solver for cross-range questions.
//!
//! Pipeline: eliminate unit-coefficient equalities, propagate interval
//! bounds, try the affine proof rules when some variable has no finite
//! interval, then enumerate with optional interval pruning. Enumeration
//! windows for half-bounded variables only ever produce witnesses; a
//! failed windowed search is reported as unknown.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::affine::Affine;
use super::csp::CrossRangeCsp;
use super::range::Relation;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Width of the enumeration window for variables without a finite interval.
    pub id_bound: i64,
    /// Maximum number of trial assignments.
    pub budget: u64,
    pub interval_pruning: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            id_bound: 64,
            budget: 10_000_000,
            interval_pruning: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "UPPERCASE")]
pub enum CspVerdict {
    Unsat,
    Sat { witness: BTreeMap<String, i64> },
    Unknown { reason: String },
}

impl CspVerdict {
    pub fn is_unsat(&self) -> bool {
        matches!(self, CspVerdict::Unsat)
    }

    pub fn label(&self) -> &'static str {
        match self {
            CspVerdict::Unsat => "UNSAT",
            CspVerdict::Sat { .. } => "SAT",
            CspVerdict::Unknown { .. } => "UNKNOWN",
        }
    }

    fn unknown(reason: impl Into<String>) -> Self {
        CspVerdict::Unknown { reason: reason.into() }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SolveStats {
    /// Trial assignments made during enumeration.
    pub assignments: u64,
}

pub fn solve_csp(csp: &CrossRangeCsp, opts: &SolverOptions) -> CspVerdict {
    solve_csp_with_stats(csp, opts).0
}

pub fn solve_csp_with_stats(csp: &CrossRangeCsp, opts: &SolverOptions) -> (CspVerdict, SolveStats) {
    let mut stats = SolveStats::default();
    let verdict = solve(csp, opts, &mut stats);
    (verdict, stats)
}

/// Checks a witness against the objective and every constraint.
pub fn check_witness(csp: &CrossRangeCsp, w: &BTreeMap<String, i64>) -> bool {
    let (l, r) = &csp.objective;
    let obj = matches!((l.eval(w), r.eval(w)), (Some(a), Some(b)) if a == b);
    obj && csp.constraints.iter().all(|c| c.holds(w) == Some(true))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Iv {
    lo: Option<i128>,
    hi: Option<i128>,
}

impl Iv {
    const FULL: Iv = Iv { lo: None, hi: None };

    fn point(v: i128) -> Iv {
        Iv {
            lo: Some(v),
            hi: Some(v),
        }
    }

    fn finite(&self) -> Option<(i128, i128)> {
        Some((self.lo?, self.hi?))
    }

    fn empty(&self) -> bool {
        matches!((self.lo, self.hi), (Some(l), Some(h)) if l > h)
    }

    fn meet(&self, o: &Iv) -> Iv {
        let lo = match (self.lo, o.lo) {
            (Some(a), Some(b)) => Some(a.max(b)),
            (a, b) => a.or(b),
        };
        let hi = match (self.hi, o.hi) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        };
        Iv { lo, hi }
    }
}

/// `Σ coef·x + k  rel  0` over variable indices.
#[derive(Debug, Clone)]
struct Lin {
    terms: Vec<(usize, i128)>,
    k: i128,
    rel: Relation,
}

fn floor_div(n: i128, d: i128) -> i128 {
    let q = n / d;
    if n % d != 0 && ((n < 0) != (d < 0)) {
        q - 1
    } else {
        q
    }
}

fn ceil_div(n: i128, d: i128) -> i128 {
    let q = n / d;
    if n % d != 0 && ((n < 0) == (d < 0)) {
        q + 1
    } else {
        q
    }
}

fn gcd(a: i128, b: i128) -> i128 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

impl Lin {
    /// Interval of the expression, leaving out variable `skip`.
    fn interval(&self, dom: &[Iv], skip: Option<usize>) -> Iv {
        let mut lo = Some(self.k);
        let mut hi = Some(self.k);
        for &(v, a) in &self.terms {
            if Some(v) == skip {
                continue;
            }
            let d = dom[v];
            let (tl, th) = if a > 0 { (d.lo, d.hi) } else { (d.hi, d.lo) };
            lo = lo.zip(tl).and_then(|(x, t)| x.checked_add(t.checked_mul(a)?));
            hi = hi.zip(th).and_then(|(x, t)| x.checked_add(t.checked_mul(a)?));
        }
        Iv { lo, hi }
    }

    fn feasible(&self, dom: &[Iv]) -> bool {
        let iv = self.interval(dom, None);
        match self.rel {
            Relation::Ge => iv.hi.is_none_or(|h| h >= 0),
            Relation::Le => iv.lo.is_none_or(|l| l <= 0),
            Relation::Eq => iv.hi.is_none_or(|h| h >= 0) && iv.lo.is_none_or(|l| l <= 0),
            Relation::Ne => !(iv.lo == Some(0) && iv.hi == Some(0)),
        }
    }

    /// Bounds this constraint places on variable `v` (coefficient `a`).
    fn narrow(&self, dom: &[Iv], v: usize, a: i128) -> Iv {
        let rest = self.interval(dom, Some(v));
        let mut out = Iv::FULL;
        // a·x + R >= 0  ⇒  a·x >= -R.hi
        let ge = |out: &mut Iv| {
            if let Some(t) = rest.hi.and_then(|h| h.checked_neg()) {
                if a > 0 {
                    out.lo = Some(ceil_div(t, a));
                } else {
                    out.hi = Some(floor_div(t, a));
                }
            }
        };
        // a·x + R <= 0  ⇒  a·x <= -R.lo
        let le = |out: &mut Iv| {
            if let Some(t) = rest.lo.and_then(|l| l.checked_neg()) {
                if a > 0 {
                    out.hi = Some(floor_div(t, a));
                } else {
                    out.lo = Some(ceil_div(t, a));
                }
            }
        };
        match self.rel {
            Relation::Ge => ge(&mut out),
            Relation::Le => le(&mut out),
            Relation::Eq => {
                ge(&mut out);
                let mut o2 = Iv::FULL;
                le(&mut o2);
                out = out.meet(&o2);
            }
            Relation::Ne => {
                if let (Some(l), Some(h)) = (rest.lo, rest.hi) {
                    if l == h && (-l) % a == 0 {
                        let banned = -l / a;
                        let d = dom[v];
                        if d.lo == Some(banned) {
                            out.lo = Some(banned + 1);
                        }
                        if d.hi == Some(banned) {
                            out.hi = Some(banned - 1);
                        }
                    }
                }
            }
        }
        out
    }
}

struct Problem {
    vars: Vec<String>,
    lins: Vec<Lin>,
    /// Index of the objective within `lins`.
    objective: usize,
}

fn to_lin(a: &Affine, rel: Relation, index: &BTreeMap<String, usize>) -> Lin {
    Lin {
        terms: a.terms.iter().map(|(v, c)| (index[v], *c as i128)).collect(),
        k: a.constant as i128,
        rel,
    }
}

fn solve(csp: &CrossRangeCsp, opts: &SolverOptions, stats: &mut SolveStats) -> CspVerdict {
    let Some(objective) = csp.objective.0.checked_sub(&csp.objective.1) else {
        return CspVerdict::unknown("coefficient overflow");
    };
    let mut rows: Vec<(Affine, Relation)> = Vec::new();
    for c in &csp.constraints {
        match c.difference() {
            Some(d) => rows.push((d, c.relation)),
            None => return CspVerdict::unknown("coefficient overflow"),
        }
    }
    let mut objective = objective;

    // Unit-coefficient equalities: solve for the variable and substitute.
    let mut eliminated: Vec<(String, Affine)> = Vec::new();
    while let Some(pos) = rows
        .iter()
        .position(|(a, r)| *r == Relation::Eq && a.terms.values().any(|c| c.abs() == 1))
    {
        let (row, _) = rows.remove(pos);
        let (x, c) = row
            .terms
            .iter()
            .find(|(_, c)| c.abs() == 1)
            .map(|(v, c)| (v.clone(), *c))
            .expect("unit term");
        let mut rest = row.clone();
        rest.terms.remove(&x);
        // c·x + rest = 0  ⇒  x = -c·rest  (c = ±1)
        let Some(value) = rest.checked_scale(-c) else {
            return CspVerdict::unknown("coefficient overflow");
        };
        let subst = |a: &Affine| -> Option<Affine> {
            let k = a.coef(&x);
            if k == 0 {
                return Some(a.clone());
            }
            let mut base = a.clone();
            base.terms.remove(&x);
            base.checked_add(&value.checked_scale(k)?)
        };
        for (a, _) in rows.iter_mut() {
            match subst(a) {
                Some(n) => *a = n,
                None => return CspVerdict::unknown("coefficient overflow"),
            }
        }
        match subst(&objective) {
            Some(n) => objective = n,
            None => return CspVerdict::unknown("coefficient overflow"),
        }
        eliminated.push((x, value));
    }

    // Constant rows decide themselves.
    for (a, r) in rows.iter().chain(std::iter::once(&(objective.clone(), Relation::Eq))) {
        if a.is_constant() && !r.holds(a.constant as i128) {
            return CspVerdict::Unsat;
        }
    }
    rows.retain(|(a, _)| !a.is_constant());

    let vars: BTreeSet<String> = rows
        .iter()
        .flat_map(|(a, _)| a.vars().cloned())
        .chain(objective.vars().cloned())
        .collect();
    let vars: Vec<String> = vars.into_iter().collect();
    let index: BTreeMap<String, usize> = vars.iter().enumerate().map(|(i, v)| (v.clone(), i)).collect();
    let mut lins: Vec<Lin> = rows.iter().map(|(a, r)| to_lin(a, *r, &index)).collect();
    lins.push(to_lin(&objective, Relation::Eq, &index));
    let problem = Problem {
        objective: lins.len() - 1,
        vars,
        lins,
    };

    for l in &problem.lins {
        if l.rel == Relation::Eq && !l.terms.is_empty() {
            let g = l.terms.iter().fold(0, |g, (_, a)| gcd(g, *a));
            if g > 1 && l.k % g != 0 {
                return CspVerdict::Unsat;
            }
        }
    }

    let Some(dom) = propagate(&problem.lins, vec![Iv::FULL; problem.vars.len()]) else {
        return CspVerdict::Unsat;
    };

    let open: Vec<usize> = (0..problem.vars.len()).filter(|&v| dom[v].finite().is_none()).collect();
    let found = if open.is_empty() {
        match enumerate(&problem.lins, &dom, opts, stats) {
            Ok(None) => return CspVerdict::Unsat,
            Ok(Some(sol)) => sol,
            Err(()) => return CspVerdict::unknown("assignment budget exceeded"),
        }
    } else {
        if periodicity(&problem, &dom) || relaxation(&problem, &dom, opts, stats) {
            return CspVerdict::Unsat;
        }
        let window: Vec<Iv> = dom
            .iter()
            .map(|d| {
                let w = opts.id_bound.max(0) as i128;
                match (d.lo, d.hi) {
                    (Some(_), Some(_)) => *d,
                    (Some(l), None) => Iv { lo: Some(l), hi: Some(l + w) },
                    (None, Some(h)) => Iv { lo: Some(h - w), hi: Some(h) },
                    (None, None) => Iv { lo: Some(-w), hi: Some(w) },
                }
            })
            .collect();
        let names: Vec<&str> = open.iter().map(|&v| problem.vars[v].as_str()).collect();
        match enumerate(&problem.lins, &window, opts, stats) {
            Ok(Some(sol)) => sol,
            Ok(None) => {
                return CspVerdict::unknown(format!(
                    "no witness within the enumeration window; unbounded: {}",
                    names.join(", ")
                ))
            }
            Err(()) => return CspVerdict::unknown("assignment budget exceeded"),
        }
    };

    let mut env: BTreeMap<String, i128> = problem.vars.iter().cloned().zip(found).collect();
    let mut all_names: BTreeSet<String> = csp.objective.0.vars().chain(csp.objective.1.vars()).cloned().collect();
    for c in &csp.constraints {
        all_names.extend(c.vars());
    }
    for (x, _) in &eliminated {
        all_names.remove(x);
    }
    for n in all_names {
        env.entry(n).or_insert(0);
    }
    for (x, value) in eliminated.iter().rev() {
        let mut acc = value.constant as i128;
        for (v, c) in &value.terms {
            acc += (*c as i128) * env.get(v).copied().unwrap_or(0);
        }
        env.insert(x.clone(), acc);
    }
    let mut witness = BTreeMap::new();
    for (k, v) in env {
        match i64::try_from(v) {
            Ok(v) => {
                witness.insert(k, v);
            }
            Err(_) => return CspVerdict::unknown("witness out of range"),
        }
    }
    if check_witness(csp, &witness) {
        CspVerdict::Sat { witness }
    } else {
        CspVerdict::unknown("witness failed self-check")
    }
}

/// Bounds propagation to a fixpoint (or a round limit). `None` means some
/// interval became empty.
fn propagate(lins: &[Lin], mut dom: Vec<Iv>) -> Option<Vec<Iv>> {
    for _ in 0..256 {
        let mut changed = false;
        for l in lins {
            for &(v, a) in &l.terms {
                let n = dom[v].meet(&l.narrow(&dom, v, a));
                if n.empty() {
                    return None;
                }
                if n != dom[v] {
                    dom[v] = n;
                    changed = true;
                }
            }
            if !l.feasible(&dom) {
                return None;
            }
        }
        if !changed {
            break;
        }
    }
    Some(dom)
}

/// `c·(x − y) + r = 0` with `x ≠ y`: if `r`'s interval holds no non-zero
/// multiple of `c`, the objective is unsatisfiable for all values of x, y.
fn periodicity(p: &Problem, dom: &[Iv]) -> bool {
    let obj = &p.lins[p.objective];
    let coef = |v: usize| obj.terms.iter().find(|(x, _)| *x == v).map_or(0, |(_, a)| *a);
    for l in &p.lins {
        if l.rel != Relation::Ne || l.k != 0 || l.terms.len() != 2 {
            continue;
        }
        let (x, y) = match (l.terms[0], l.terms[1]) {
            ((x, 1), (y, -1)) | ((y, -1), (x, 1)) => (x, y),
            _ => continue,
        };
        let c = coef(x);
        if c == 0 || coef(y) != -c {
            continue;
        }
        let rest = Lin {
            terms: obj.terms.iter().copied().filter(|(v, _)| *v != x && *v != y).collect(),
            k: obj.k,
            rel: Relation::Eq,
        };
        let Some((lo, hi)) = rest.interval(dom, None).finite() else {
            continue;
        };
        let m = c.abs();
        let (kl, kh) = (ceil_div(lo, m), floor_div(hi, m));
        if kl > kh || (kl == 0 && kh == 0) {
            return true;
        }
    }
    false
}

/// Drops every constraint touching an unbounded variable and searches the
/// finite remainder exhaustively; an empty remainder proves the whole.
fn relaxation(p: &Problem, dom: &[Iv], opts: &SolverOptions, stats: &mut SolveStats) -> bool {
    let finite: Vec<Lin> = p
        .lins
        .iter()
        .filter(|l| l.terms.iter().all(|(v, _)| dom[*v].finite().is_some()))
        .cloned()
        .collect();
    if finite.is_empty() {
        return false;
    }
    let used: BTreeSet<usize> = finite.iter().flat_map(|l| l.terms.iter().map(|(v, _)| *v)).collect();
    let sub: Vec<Iv> = (0..dom.len())
        .map(|v| if used.contains(&v) { dom[v] } else { Iv::point(0) })
        .collect();
    matches!(enumerate(&finite, &sub, opts, stats), Ok(None))
}

/// Depth-first enumeration over finite domains. `Err` on budget exhaustion.
fn enumerate(
    lins: &[Lin],
    dom: &[Iv],
    opts: &SolverOptions,
    stats: &mut SolveStats,
) -> Result<Option<Vec<i128>>, ()> {
    let n = dom.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&v| {
        let (l, h) = dom[v].finite().expect("finite domain");
        (h - l, v)
    });
    let pos: Vec<usize> = {
        let mut p = vec![0; n];
        for (i, &v) in order.iter().enumerate() {
            p[v] = i;
        }
        p
    };
    let mut by_var: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut closing: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, l) in lins.iter().enumerate() {
        for (v, _) in &l.terms {
            by_var[*v].push(i);
        }
        if let Some(last) = l.terms.iter().map(|(v, _)| pos[*v]).max() {
            closing[last].push(i);
        }
    }
    let mut s = Search {
        lins,
        order,
        by_var,
        closing,
        prune: opts.interval_pruning,
        budget: opts.budget,
        stats,
    };
    let mut dom = dom.to_vec();
    let found = s.dfs(0, &mut dom)?;
    Ok(found.then(|| dom.iter().map(|d| d.lo.expect("assigned")).collect()))
}

struct Search<'a> {
    lins: &'a [Lin],
    order: Vec<usize>,
    by_var: Vec<Vec<usize>>,
    closing: Vec<Vec<usize>>,
    prune: bool,
    budget: u64,
    stats: &'a mut SolveStats,
}

impl Search<'_> {
    /// On success `dom` holds the solution as point intervals.
    fn dfs(&mut self, depth: usize, dom: &mut Vec<Iv>) -> Result<bool, ()> {
        if depth == self.order.len() {
            return Ok(true);
        }
        let v = self.order[depth];
        let saved = dom[v];
        let mut range = saved;
        if self.prune {
            for &i in &self.by_var[v] {
                let l = &self.lins[i];
                let a = l.terms.iter().find(|(x, _)| *x == v).map(|(_, a)| *a).expect("term");
                range = range.meet(&l.narrow(dom, v, a));
            }
        }
        let Some((lo, hi)) = range.finite() else {
            return Ok(false);
        };
        let mut x = lo;
        while x <= hi {
            self.stats.assignments += 1;
            if self.stats.assignments > self.budget {
                dom[v] = saved;
                return Err(());
            }
            dom[v] = Iv::point(x);
            let checks = if self.prune { &self.by_var[v] } else { &self.closing[depth] };
            if checks.iter().all(|&i| self.lins[i].feasible(dom)) && self.dfs(depth + 1, dom)? {
                return Ok(true);
            }
            x += 1;
        }
        dom[v] = saved;
        Ok(false)
    }
}
