//! Recursive-descent parser for MTC / iMTC.

use std::collections::BTreeMap;

use super::ast::*;
use super::lexer::{tokenize, Tok, Token};
use super::ParseError;

pub(super) fn parse(src: &str) -> Result<Program, ParseError> {
    let mut p = Parser {
        toks: tokenize(src)?,
        pos: 0,
        dims: BTreeMap::new(),
        func: String::new(),
        next_ordinal: 0,
    };
    p.program()
}

#[derive(Default)]
struct Annot {
    traces: Vec<u32>,
    site: Option<u32>,
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    /// Array dimensions of globals declared so far (scalars map to `[]`).
    dims: BTreeMap<String, Vec<usize>>,
    func: String,
    next_ordinal: u32,
}

const KEYWORDS: &[&str] = &[
    "int",
    "void",
    "lock",
    "unlock",
    "cond",
    "barrier",
    "if",
    "else",
    "while",
    "for",
    "return",
    "spawn",
    "join",
    "signal",
    "broadcast",
    "wait",
    "print",
    "nthreads",
];

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, n: usize) -> &Tok {
        let i = (self.pos + n).min(self.toks.len() - 1);
        &self.toks[i].tok
    }

    fn line(&self) -> u32 {
        self.toks[self.pos].line
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn err<T>(&self, expected: &str) -> Result<T, ParseError> {
        let t = &self.toks[self.pos];
        Err(ParseError::Syntax {
            line: t.line,
            col: t.col,
            expected: expected.to_string(),
            found: t.tok.to_string(),
        })
    }

    fn is_punct(&self, p: &str) -> bool {
        matches!(self.peek(), Tok::Punct(q) if *q == p)
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    fn eat_punct(&mut self, p: &str) -> bool {
        if self.is_punct(p) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_punct(&mut self, p: &str) -> Result<(), ParseError> {
        if self.eat_punct(p) {
            Ok(())
        } else {
            self.err(&format!("`{p}`"))
        }
    }

    fn expect_kw(&mut self, kw: &str) -> Result<(), ParseError> {
        if self.is_kw(kw) {
            self.bump();
            Ok(())
        } else {
            self.err(&format!("`{kw}`"))
        }
    }

    fn ident(&mut self) -> Result<String, ParseError> {
        match self.peek() {
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => {
                let s = s.clone();
                self.bump();
                Ok(s)
            }
            _ => self.err("identifier"),
        }
    }

    fn int(&mut self) -> Result<i64, ParseError> {
        let neg = self.eat_punct("-");
        match self.peek() {
            Tok::Int(v) => {
                let v = *v;
                self.bump();
                Ok(if neg { -v } else { v })
            }
            _ => self.err("integer literal"),
        }
    }

    /// Allocates the next sequential ordinal unless an explicit `@site(k)`
    /// was given, which leaves the sequence untouched.
    fn site(&mut self, line: u32, explicit: Option<u32>) -> SiteId {
        match explicit {
            Some(k) => SiteId::new(self.func.clone(), k, line),
            None => {
                let s = SiteId::new(self.func.clone(), self.next_ordinal, line);
                self.next_ordinal += 1;
                s
            }
        }
    }

    fn program(&mut self) -> Result<Program, ParseError> {
        let mut prog = Program {
            globals: Vec::new(),
            syncs: Vec::new(),
            functions: Vec::new(),
            main: "main".to_string(),
        };
        while *self.peek() != Tok::Eof {
            let line = self.line();
            if self.is_kw("lock") || self.is_kw("cond") {
                let kind = if self.is_kw("lock") {
                    SyncKind::Lock
                } else {
                    SyncKind::Cond
                };
                self.bump();
                loop {
                    let name = self.ident()?;
                    prog.syncs.push(SyncDecl {
                        name,
                        kind: kind.clone(),
                        line,
                    });
                    if !self.eat_punct(",") {
                        break;
                    }
                }
                self.expect_punct(";")?;
            } else if self.is_kw("barrier") {
                self.bump();
                let name = self.ident()?;
                self.expect_punct("(")?;
                let count = self.expr()?;
                self.expect_punct(")")?;
                self.expect_punct(";")?;
                prog.syncs.push(SyncDecl {
                    name,
                    kind: SyncKind::Barrier(count),
                    line,
                });
            } else if self.is_kw("void")
                || (self.is_kw("int") && matches!(self.peek_at(2), Tok::Punct("(")))
            {
                prog.functions.push(self.function()?);
            } else if self.is_kw("int") {
                self.bump();
                let name = self.ident()?;
                let mut dims = Vec::new();
                while self.eat_punct("[") {
                    let n = self.int()?;
                    if n <= 0 {
                        return Err(ParseError::Semantic {
                            line,
                            msg: format!("array `{name}` needs a positive length"),
                        });
                    }
                    dims.push(n as usize);
                    self.expect_punct("]")?;
                }
                let init = if dims.is_empty() && self.eat_punct("=") {
                    self.int()?
                } else {
                    0
                };
                self.expect_punct(";")?;
                self.dims.insert(name.clone(), dims.clone());
                prog.globals.push(Global {
                    name,
                    dims,
                    init,
                    line,
                });
            } else {
                return self.err("declaration");
            }
        }
        Ok(prog)
    }

    fn function(&mut self) -> Result<Function, ParseError> {
        let line = self.line();
        let returns_value = self.is_kw("int");
        self.bump();
        let name = self.ident()?;
        self.func = name.clone();
        self.next_ordinal = 0;
        self.expect_punct("(")?;
        let mut params = Vec::new();
        if !self.is_punct(")") {
            loop {
                self.expect_kw("int")?;
                params.push(self.ident()?);
                if !self.eat_punct(",") {
                    break;
                }
            }
        }
        self.expect_punct(")")?;
        let body = self.block()?;
        Ok(Function {
            name,
            params,
            returns_value,
            body,
            line,
        })
    }

    fn block(&mut self) -> Result<Vec<Stmt>, ParseError> {
        self.expect_punct("{")?;
        let mut out = Vec::new();
        while !self.is_punct("}") {
            if *self.peek() == Tok::Eof {
                return self.err("`}`");
            }
            out.push(self.stmt()?);
        }
        self.bump();
        Ok(out)
    }

    fn annotations(&mut self) -> Result<Annot, ParseError> {
        let mut out = Annot::default();
        while self.is_punct("@") {
            self.bump();
            let is_site = matches!(self.peek(), Tok::Ident(s) if s == "site");
            if is_site {
                self.bump();
            } else {
                self.expect_kw_ident("trace")?;
            }
            self.expect_punct("(")?;
            let k = self.int()?;
            if k < 0 || k > u32::MAX as i64 {
                return self.err("non-negative annotation argument");
            }
            self.expect_punct(")")?;
            if is_site {
                out.site = Some(k as u32);
            } else {
                out.traces.push(k as u32);
            }
        }
        Ok(out)
    }

    fn expect_kw_ident(&mut self, word: &str) -> Result<(), ParseError> {
        match self.peek() {
            Tok::Ident(s) if s == word => {
                self.bump();
                Ok(())
            }
            _ => self.err(&format!("`{word}`")),
        }
    }

    fn stmt(&mut self) -> Result<Stmt, ParseError> {
        let annot = self.annotations()?;
        let line = self.line();
        let kw = match self.peek() {
            Tok::Ident(s) => s.clone(),
            _ => String::new(),
        };
        let mut stmt = match kw.as_str() {
            "if" => return self.if_stmt(annot),
            "while" => {
                self.bump();
                let site = self.site(line, annot.site);
                self.expect_punct("(")?;
                let cond = self.expr()?;
                self.expect_punct(")")?;
                let body = self.block()?;
                Stmt {
                    site,
                    traces: Vec::new(),
                    kind: StmtKind::While { cond, body },
                }
            }
            "for" => {
                self.bump();
                self.expect_punct("(")?;
                let init = if self.is_punct(";") {
                    None
                } else {
                    let a = self.annotations()?;
                    let l = self.line();
                    let site = self.site(l, a.site);
                    if self.is_kw("int") {
                        self.bump();
                        let name = self.ident()?;
                        self.expect_punct("=")?;
                        let value = self.expr()?;
                        Some(Box::new(Stmt {
                            site,
                            traces: a.traces,
                            kind: StmtKind::Local {
                                name,
                                init: Some(LocalInit::Expr(value)),
                            },
                        }))
                    } else {
                        Some(Box::new(self.simple_assign(site, a.traces)?))
                    }
                };
                self.expect_punct(";")?;
                let site = self.site(line, annot.site);
                let cond = if self.is_punct(";") {
                    None
                } else {
                    Some(self.expr()?)
                };
                self.expect_punct(";")?;
                let update = if self.is_punct(")") {
                    None
                } else {
                    let a = self.annotations()?;
                    let l = self.line();
                    let usite = self.site(l, a.site);
                    Some(Box::new(self.simple_assign(usite, a.traces)?))
                };
                self.expect_punct(")")?;
                let body = self.block()?;
                Stmt {
                    site,
                    traces: Vec::new(),
                    kind: StmtKind::For {
                        init,
                        cond,
                        update,
                        body,
                    },
                }
            }
            _ => {
                let site = self.site(line, annot.site);
                let s = self.simple_stmt(site)?;
                self.expect_punct(";")?;
                s
            }
        };
        stmt.traces = annot.traces;
        Ok(stmt)
    }

    fn if_stmt(&mut self, annot: Annot) -> Result<Stmt, ParseError> {
        let line = self.line();
        self.expect_kw("if")?;
        let site = self.site(line, annot.site);
        self.expect_punct("(")?;
        let cond = self.expr()?;
        self.expect_punct(")")?;
        let then_body = self.block()?;
        let else_body = if self.is_kw("else") {
            self.bump();
            if self.is_kw("if") || self.is_punct("@") {
                vec![self.stmt()?]
            } else {
                self.block()?
            }
        } else {
            Vec::new()
        };
        Ok(Stmt {
            site,
            traces: annot.traces,
            kind: StmtKind::If {
                cond,
                then_body,
                else_body,
            },
        })
    }

    /// Statements that end in `;` (the semicolon is consumed by the caller).
    fn simple_stmt(&mut self, site: SiteId) -> Result<Stmt, ParseError> {
        let kw = match self.peek() {
            Tok::Ident(s) => s.clone(),
            _ => return self.err("statement"),
        };
        let kind = match kw.as_str() {
            "int" => {
                self.bump();
                let name = self.ident()?;
                let init = if self.eat_punct("=") {
                    Some(self.local_init()?)
                } else {
                    None
                };
                StmtKind::Local { name, init }
            }
            "lock" | "unlock" | "barrier" | "signal" | "broadcast" => {
                self.bump();
                self.expect_punct("(")?;
                let n = self.ident()?;
                self.expect_punct(")")?;
                match kw.as_str() {
                    "lock" => StmtKind::Lock(n),
                    "unlock" => StmtKind::Unlock(n),
                    "barrier" => StmtKind::Barrier(n),
                    "signal" => StmtKind::Signal(n),
                    _ => StmtKind::Broadcast(n),
                }
            }
            "wait" => {
                self.bump();
                self.expect_punct("(")?;
                let cond = self.ident()?;
                self.expect_punct(",")?;
                let mutex = self.ident()?;
                self.expect_punct(")")?;
                StmtKind::Wait { cond, mutex }
            }
            "join" => {
                self.bump();
                self.expect_punct("(")?;
                let e = self.expr()?;
                self.expect_punct(")")?;
                StmtKind::Join(e)
            }
            "print" => {
                self.bump();
                self.expect_punct("(")?;
                let e = self.expr()?;
                self.expect_punct(")")?;
                StmtKind::Print(e)
            }
            "return" => {
                self.bump();
                if self.is_punct(";") {
                    StmtKind::Return(None)
                } else {
                    StmtKind::Return(Some(self.expr()?))
                }
            }
            "spawn" => {
                let (func, arg) = self.spawn_tail()?;
                StmtKind::Spawn {
                    target: None,
                    func,
                    arg,
                }
            }
            _ => {
                if matches!(self.peek_at(1), Tok::Punct("(")) {
                    let (func, args) = self.call_tail()?;
                    StmtKind::Call {
                        target: None,
                        func,
                        args,
                    }
                } else {
                    return self.assignment(site, Vec::new(), true);
                }
            }
        };
        Ok(Stmt {
            site,
            traces: Vec::new(),
            kind,
        })
    }

    fn local_init(&mut self) -> Result<LocalInit, ParseError> {
        if self.is_kw("spawn") {
            let (func, arg) = self.spawn_tail()?;
            return Ok(LocalInit::Spawn { func, arg });
        }
        if matches!(self.peek(), Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()))
            && matches!(self.peek_at(1), Tok::Punct("("))
        {
            let (func, args) = self.call_tail()?;
            return Ok(LocalInit::Call { func, args });
        }
        Ok(LocalInit::Expr(self.expr()?))
    }

    fn spawn_tail(&mut self) -> Result<(String, Expr), ParseError> {
        self.expect_kw("spawn")?;
        let func = self.ident()?;
        self.expect_punct("(")?;
        let arg = self.expr()?;
        self.expect_punct(")")?;
        Ok((func, arg))
    }

    fn call_tail(&mut self) -> Result<(String, Vec<Expr>), ParseError> {
        let func = self.ident()?;
        self.expect_punct("(")?;
        let mut args = Vec::new();
        if !self.is_punct(")") {
            loop {
                args.push(self.expr()?);
                if !self.eat_punct(",") {
                    break;
                }
            }
        }
        self.expect_punct(")")?;
        Ok((func, args))
    }

    /// Assignment forms usable as for-loop init/update.
    fn simple_assign(&mut self, site: SiteId, traces: Vec<u32>) -> Result<Stmt, ParseError> {
        self.assignment(site, traces, false)
    }

    fn assignment(
        &mut self,
        site: SiteId,
        traces: Vec<u32>,
        allow_call: bool,
    ) -> Result<Stmt, ParseError> {
        let target = self.lvalue()?;
        let op = match self.peek() {
            Tok::Punct(p @ ("=" | "+=" | "-=" | "++" | "--")) => *p,
            _ => return self.err("assignment operator"),
        };
        self.bump();
        let kind = match op {
            "++" | "--" => {
                let bop = if op == "++" { BinOp::Add } else { BinOp::Sub };
                StmtKind::Assign {
                    value: Expr::bin(bop, target.to_expr(), Expr::Int(1)),
                    target,
                }
            }
            "+=" | "-=" => {
                let bop = if op == "+=" { BinOp::Add } else { BinOp::Sub };
                let rhs = self.expr()?;
                StmtKind::Assign {
                    value: Expr::bin(bop, target.to_expr(), rhs),
                    target,
                }
            }
            _ => {
                if allow_call && self.is_kw("spawn") {
                    let (func, arg) = self.spawn_tail()?;
                    StmtKind::Spawn {
                        target: Some(target),
                        func,
                        arg,
                    }
                } else if allow_call
                    && matches!(self.peek(), Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()))
                    && matches!(self.peek_at(1), Tok::Punct("("))
                {
                    let (func, args) = self.call_tail()?;
                    StmtKind::Call {
                        target: Some(target),
                        func,
                        args,
                    }
                } else {
                    StmtKind::Assign {
                        value: self.expr()?,
                        target,
                    }
                }
            }
        };
        Ok(Stmt { site, traces, kind })
    }

    fn lvalue(&mut self) -> Result<LValue, ParseError> {
        let line = self.line();
        let name = self.ident()?;
        let index = self.subscripts(&name, line)?;
        Ok(LValue { name, index })
    }

    /// Parses `[e]...` after an identifier, linearizing multi-dimensional
    /// subscripts with the declared dimensions.
    fn subscripts(&mut self, name: &str, line: u32) -> Result<Option<Expr>, ParseError> {
        if !self.is_punct("[") {
            return Ok(None);
        }
        let mut subs = Vec::new();
        while self.eat_punct("[") {
            subs.push(self.expr()?);
            self.expect_punct("]")?;
        }
        let dims = match self.dims.get(name) {
            Some(d) if !d.is_empty() => d.clone(),
            _ => {
                return Err(ParseError::IndexOnScalar {
                    name: name.to_string(),
                    line,
                })
            }
        };
        if subs.len() == 1 {
            return Ok(subs.pop());
        }
        if subs.len() != dims.len() {
            return Err(ParseError::Semantic {
                line,
                msg: format!(
                    "array `{name}` has {} dimensions but {} subscripts were given",
                    dims.len(),
                    subs.len()
                ),
            });
        }
        let mut it = subs.into_iter();
        let mut acc = it.next().expect("non-empty");
        for (sub, dim) in it.zip(dims.into_iter().skip(1)) {
            acc = Expr::bin(
                BinOp::Add,
                Expr::bin(BinOp::Mul, acc, Expr::Int(dim as i64)),
                sub,
            );
        }
        Ok(Some(acc))
    }

    pub(super) fn expr(&mut self) -> Result<Expr, ParseError> {
        self.binary(1)
    }

    fn binop(&self) -> Option<BinOp> {
        let Tok::Punct(p) = self.peek() else {
            return None;
        };
        Some(match *p {
            "||" => BinOp::Or,
            "&&" => BinOp::And,
            "==" => BinOp::Eq,
            "!=" => BinOp::Ne,
            "<" => BinOp::Lt,
            "<=" => BinOp::Le,
            ">" => BinOp::Gt,
            ">=" => BinOp::Ge,
            "+" => BinOp::Add,
            "-" => BinOp::Sub,
            "*" => BinOp::Mul,
            "/" => BinOp::Div,
            "%" => BinOp::Rem,
            _ => return None,
        })
    }

    fn binary(&mut self, min_prec: u8) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        while let Some(op) = self.binop() {
            if op.precedence() < min_prec {
                break;
            }
            self.bump();
            let rhs = self.binary(op.precedence() + 1)?;
            lhs = Expr::bin(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.eat_punct("-") {
            let e = self.unary()?;
            return Ok(match e {
                Expr::Int(v) => Expr::Int(-v),
                e => Expr::Unary(UnOp::Neg, Box::new(e)),
            });
        }
        if self.eat_punct("!") {
            return Ok(Expr::Unary(UnOp::Not, Box::new(self.unary()?)));
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        let line = self.line();
        match self.peek().clone() {
            Tok::Int(v) => {
                self.bump();
                Ok(Expr::Int(v))
            }
            Tok::Punct("(") => {
                self.bump();
                let e = self.expr()?;
                self.expect_punct(")")?;
                Ok(e)
            }
            Tok::Ident(s) if s == "nthreads" => {
                self.bump();
                Ok(Expr::NThreads)
            }
            Tok::Ident(_) => {
                let name = self.ident()?;
                if self.is_punct("(") {
                    return Err(ParseError::Semantic {
                        line,
                        msg: format!(
                            "call to `{name}` inside an expression; calls must be statements"
                        ),
                    });
                }
                Ok(match self.subscripts(&name, line)? {
                    Some(sub) => Expr::Index(name, Box::new(sub)),
                    None => Expr::Var(name),
                })
            }
            _ => self.err("expression"),
        }
    }
}
