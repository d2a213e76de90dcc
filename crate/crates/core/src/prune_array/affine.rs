use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::frontend::{BinOp, Expr, UnOp};

/// `Σ coef·var + constant` over integers. Zero coefficients are never stored.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Affine {
    pub terms: BTreeMap<String, i64>,
    pub constant: i64,
}

impl Affine {
    pub fn constant(c: i64) -> Self {
        Affine {
            terms: BTreeMap::new(),
            constant: c,
        }
    }

    pub fn var(name: impl Into<String>) -> Self {
        let mut terms = BTreeMap::new();
        terms.insert(name.into(), 1);
        Affine { terms, constant: 0 }
    }

    pub fn is_constant(&self) -> bool {
        self.terms.is_empty()
    }

    /// The variable name if this is exactly `1·v`.
    pub fn as_var(&self) -> Option<&str> {
        match (self.terms.len(), self.constant) {
            (1, 0) => {
                let (v, c) = self.terms.iter().next().expect("one term");
                (*c == 1).then_some(v.as_str())
            }
            _ => None,
        }
    }

    pub fn coef(&self, v: &str) -> i64 {
        self.terms.get(v).copied().unwrap_or(0)
    }

    pub fn vars(&self) -> impl Iterator<Item = &String> {
        self.terms.keys()
    }

    pub fn checked_add(&self, o: &Affine) -> Option<Affine> {
        let mut out = self.clone();
        out.constant = out.constant.checked_add(o.constant)?;
        for (v, c) in &o.terms {
            let e = out.terms.entry(v.clone()).or_insert(0);
            *e = e.checked_add(*c)?;
            if *e == 0 {
                out.terms.remove(v);
            }
        }
        Some(out)
    }

    pub fn checked_scale(&self, k: i64) -> Option<Affine> {
        if k == 0 {
            return Some(Affine::default());
        }
        let mut terms = BTreeMap::new();
        for (v, c) in &self.terms {
            terms.insert(v.clone(), c.checked_mul(k)?);
        }
        Some(Affine {
            terms,
            constant: self.constant.checked_mul(k)?,
        })
    }

    pub fn checked_sub(&self, o: &Affine) -> Option<Affine> {
        self.checked_add(&o.checked_scale(-1)?)
    }

    pub fn add(&self, o: &Affine) -> Affine {
        self.checked_add(o).expect("affine overflow")
    }

    pub fn sub(&self, o: &Affine) -> Affine {
        self.checked_sub(o).expect("affine overflow")
    }

    pub fn scale(&self, k: i64) -> Affine {
        self.checked_scale(k).expect("affine overflow")
    }

    /// Replaces variable `v` by `by`.
    pub fn substitute(&self, v: &str, by: &Affine) -> Affine {
        let c = self.coef(v);
        if c == 0 {
            return self.clone();
        }
        let mut rest = self.clone();
        rest.terms.remove(v);
        rest.add(&by.scale(c))
    }

    pub fn rename(&self, f: &mut impl FnMut(&str) -> String) -> Affine {
        let mut out = Affine::constant(self.constant);
        for (v, c) in &self.terms {
            out = out.add(&Affine::var(f(v)).scale(*c));
        }
        out
    }

    pub fn eval(&self, env: &BTreeMap<String, i64>) -> Option<i128> {
        let mut acc = self.constant as i128;
        for (v, c) in &self.terms {
            acc += (*c as i128) * (*env.get(v)? as i128);
        }
        Some(acc)
    }

    /// Converts an expression, resolving each scalar name through `name`
    /// (`None` makes the whole expression non-affine).
    pub fn from_expr(e: &Expr, name: &mut impl FnMut(&str) -> Option<Affine>) -> Option<Affine> {
        match e {
            Expr::Int(v) => Some(Affine::constant(*v)),
            Expr::Var(v) => name(v),
            Expr::NThreads => name("nthreads"),
            Expr::Index(..) => None,
            Expr::Unary(UnOp::Neg, x) => Affine::from_expr(x, name)?.checked_scale(-1),
            Expr::Unary(UnOp::Not, _) => None,
            Expr::Binary(op, l, r) => {
                let a = Affine::from_expr(l, name)?;
                let b = Affine::from_expr(r, name)?;
                match op {
                    BinOp::Add => a.checked_add(&b),
                    BinOp::Sub => a.checked_sub(&b),
                    BinOp::Mul if a.is_constant() => b.checked_scale(a.constant),
                    BinOp::Mul if b.is_constant() => a.checked_scale(b.constant),
                    _ => None,
                }
            }
        }
    }
}

impl fmt::Display for Affine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (v, c) in &self.terms {
            let (sign, mag) = if *c < 0 { ("-", -c) } else { ("+", *c) };
            if first {
                if sign == "-" {
                    f.write_str("-")?;
                }
            } else {
                write!(f, " {sign} ")?;
            }
            if mag == 1 {
                write!(f, "{v}")?;
            } else {
                write!(f, "{mag}*{v}")?;
            }
            first = false;
        }
        if first {
            write!(f, "{}", self.constant)
        } else if self.constant > 0 {
            write!(f, " + {}", self.constant)
        } else if self.constant < 0 {
            write!(f, " - {}", -self.constant)
        } else {
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::Expr;

    fn named(v: &str) -> Option<Affine> {
        Some(Affine::var(v))
    }

    #[test]
    fn linearizes_worker_subscript() {
        // j + 10 * (2 * i + id)
        let e = Expr::bin(
            BinOp::Add,
            Expr::var("j"),
            Expr::bin(
                BinOp::Mul,
                Expr::Int(10),
                Expr::bin(
                    BinOp::Add,
                    Expr::bin(BinOp::Mul, Expr::Int(2), Expr::var("i")),
                    Expr::var("id"),
                ),
            ),
        );
        let a = Affine::from_expr(&e, &mut named).unwrap();
        assert_eq!(a.coef("j"), 1);
        assert_eq!(a.coef("i"), 20);
        assert_eq!(a.coef("id"), 10);
        assert_eq!(a.to_string(), "20*i + 10*id + j");
    }

    #[test]
    fn rejects_nonlinear() {
        let e = Expr::bin(BinOp::Mul, Expr::var("i"), Expr::var("j"));
        assert!(Affine::from_expr(&e, &mut named).is_none());
        let e = Expr::bin(BinOp::Div, Expr::var("i"), Expr::Int(2));
        assert!(Affine::from_expr(&e, &mut named).is_none());
    }

    #[test]
    fn cancellation_drops_terms() {
        let a = Affine::var("x").sub(&Affine::var("x"));
        assert!(a.is_constant());
        assert_eq!(a.to_string(), "0");
    }
}
