//! Abstract syntax of MTC programs.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Stable identity of a statement: owning function and per-function ordinal.
/// The source line is carried for diagnostics only and takes no part in
/// equality, hashing or ordering, so identities survive re-printing.
///
/// Ordinals are assigned in source order by the parser; rewrites that insert
/// statements allocate fresh ordinals past the current maximum (printed as
/// `@site(k)` so a re-parse reproduces them).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SiteId {
    pub function: String,
    pub ordinal: u32,
    pub line: u32,
}

impl SiteId {
    pub fn new(function: impl Into<String>, ordinal: u32, line: u32) -> Self {
        Self {
            function: function.into(),
            ordinal,
            line,
        }
    }
}

impl PartialEq for SiteId {
    fn eq(&self, other: &Self) -> bool {
        self.ordinal == other.ordinal && self.function == other.function
    }
}

impl Eq for SiteId {}

impl std::hash::Hash for SiteId {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.function.hash(state);
        self.ordinal.hash(state);
    }
}

impl PartialOrd for SiteId {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for SiteId {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (&self.function, self.ordinal).cmp(&(&other.function, other.ordinal))
    }
}

impl fmt::Display for SiteId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}@{}", self.function, self.ordinal, self.line)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AccessKind {
    Read,
    Write,
}

impl AccessKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AccessKind::Read => "read",
            AccessKind::Write => "write",
        }
    }
}

impl fmt::Display for AccessKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Rem,
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
    And,
    Or,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Rem => "%",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::And => "&&",
            BinOp::Or => "||",
        }
    }

    /// Binding strength; larger binds tighter.
    pub fn precedence(self) -> u8 {
        match self {
            BinOp::Or => 1,
            BinOp::And => 2,
            BinOp::Eq | BinOp::Ne => 3,
            BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => 4,
            BinOp::Add | BinOp::Sub => 5,
            BinOp::Mul | BinOp::Div | BinOp::Rem => 6,
        }
    }

    pub fn is_comparison(self) -> bool {
        matches!(
            self,
            BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge | BinOp::Eq | BinOp::Ne
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnOp {
    Neg,
    Not,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Expr {
    Int(i64),
    /// Local, parameter or global scalar.
    Var(String),
    /// Array element; multi-dimensional subscripts are linearized by the parser.
    Index(String, Box<Expr>),
    /// The configured worker-thread count, a program parameter.
    NThreads,
    Unary(UnOp, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn var(name: impl Into<String>) -> Self {
        Expr::Var(name.into())
    }

    pub fn bin(op: BinOp, lhs: Expr, rhs: Expr) -> Self {
        Expr::Binary(op, Box::new(lhs), Box::new(rhs))
    }

    pub fn index(array: impl Into<String>, sub: Expr) -> Self {
        Expr::Index(array.into(), Box::new(sub))
    }

    /// Calls `f` on every variable name read by this expression (scalars and
    /// array names alike), in evaluation order.
    pub fn visit_names(&self, f: &mut impl FnMut(&str)) {
        match self {
            Expr::Int(_) | Expr::NThreads => {}
            Expr::Var(v) => f(v),
            Expr::Index(a, sub) => {
                sub.visit_names(f);
                f(a);
            }
            Expr::Unary(_, e) => e.visit_names(f),
            Expr::Binary(_, l, r) => {
                l.visit_names(f);
                r.visit_names(f);
            }
        }
    }

    pub fn mentions(&self, name: &str) -> bool {
        let mut found = false;
        self.visit_names(&mut |n| found |= n == name);
        found
    }

    /// Rewrites every `Var(name)` through `f`, leaving array names alone.
    pub fn map_vars(&self, f: &mut impl FnMut(&str) -> Option<Expr>) -> Expr {
        match self {
            Expr::Int(_) | Expr::NThreads => self.clone(),
            Expr::Var(v) => f(v).unwrap_or_else(|| self.clone()),
            Expr::Index(a, sub) => Expr::Index(a.clone(), Box::new(sub.map_vars(f))),
            Expr::Unary(op, e) => Expr::Unary(*op, Box::new(e.map_vars(f))),
            Expr::Binary(op, l, r) => {
                Expr::Binary(*op, Box::new(l.map_vars(f)), Box::new(r.map_vars(f)))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LValue {
    pub name: String,
    pub index: Option<Expr>,
}

impl LValue {
    pub fn scalar(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            index: None,
        }
    }

    pub fn to_expr(&self) -> Expr {
        match &self.index {
            None => Expr::Var(self.name.clone()),
            Some(i) => Expr::Index(self.name.clone(), Box::new(i.clone())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum LocalInit {
    Expr(Expr),
    Call { func: String, args: Vec<Expr> },
    Spawn { func: String, arg: Expr },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Stmt {
    pub site: SiteId,
    /// `@trace(k)` annotations: rows of the site table traced at this statement.
    pub traces: Vec<u32>,
    pub kind: StmtKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum StmtKind {
    Local {
        name: String,
        init: Option<LocalInit>,
    },
    Assign {
        target: LValue,
        value: Expr,
    },
    Call {
        target: Option<LValue>,
        func: String,
        args: Vec<Expr>,
    },
    Spawn {
        target: Option<LValue>,
        func: String,
        arg: Expr,
    },
    Join(Expr),
    Lock(String),
    Unlock(String),
    Barrier(String),
    Signal(String),
    Broadcast(String),
    Wait {
        cond: String,
        mutex: String,
    },
    /// The statement's own site is the condition.
    If {
        cond: Expr,
        then_body: Vec<Stmt>,
        else_body: Vec<Stmt>,
    },
    While {
        cond: Expr,
        body: Vec<Stmt>,
    },
    /// The statement's own site is the loop condition; init and update carry
    /// their own sites.
    For {
        init: Option<Box<Stmt>>,
        cond: Option<Expr>,
        update: Option<Box<Stmt>>,
        body: Vec<Stmt>,
    },
    Return(Option<Expr>),
    Print(Expr),
}

impl Stmt {
    pub fn is_compound(&self) -> bool {
        matches!(
            self.kind,
            StmtKind::If { .. } | StmtKind::While { .. } | StmtKind::For { .. }
        )
    }

    /// Visits this statement and all nested statements (including for-loop
    /// init/update) in source order.
    pub fn walk<'a>(&'a self, f: &mut impl FnMut(&'a Stmt)) {
        f(self);
        match &self.kind {
            StmtKind::If {
                then_body,
                else_body,
                ..
            } => {
                then_body.iter().for_each(|s| s.walk(f));
                else_body.iter().for_each(|s| s.walk(f));
            }
            StmtKind::While { body, .. } => body.iter().for_each(|s| s.walk(f)),
            StmtKind::For {
                init, update, body, ..
            } => {
                if let Some(i) = init {
                    i.walk(f);
                }
                if let Some(u) = update {
                    u.walk(f);
                }
                body.iter().for_each(|s| s.walk(f));
            }
            _ => {}
        }
    }

    pub fn walk_mut(&mut self, f: &mut impl FnMut(&mut Stmt)) {
        f(self);
        match &mut self.kind {
            StmtKind::If {
                then_body,
                else_body,
                ..
            } => {
                then_body.iter_mut().for_each(|s| s.walk_mut(f));
                else_body.iter_mut().for_each(|s| s.walk_mut(f));
            }
            StmtKind::While { body, .. } => body.iter_mut().for_each(|s| s.walk_mut(f)),
            StmtKind::For {
                init, update, body, ..
            } => {
                if let Some(i) = init {
                    i.walk_mut(f);
                }
                if let Some(u) = update {
                    u.walk_mut(f);
                }
                body.iter_mut().for_each(|s| s.walk_mut(f));
            }
            _ => {}
        }
    }

    /// Applies `f` to every expression owned directly by this statement,
    /// lvalue subscripts included; nested statements are not visited.
    pub fn exprs_mut(&mut self, f: &mut impl FnMut(&mut Expr)) {
        let lv = |t: &mut Option<LValue>, f: &mut dyn FnMut(&mut Expr)| {
            if let Some(LValue { index: Some(i), .. }) = t {
                f(i);
            }
        };
        match &mut self.kind {
            StmtKind::Local { init, .. } => match init {
                None => {}
                Some(LocalInit::Expr(e)) | Some(LocalInit::Spawn { arg: e, .. }) => f(e),
                Some(LocalInit::Call { args, .. }) => args.iter_mut().for_each(f),
            },
            StmtKind::Assign { target, value } => {
                if let Some(i) = &mut target.index {
                    f(i);
                }
                f(value);
            }
            StmtKind::Call { target, args, .. } => {
                args.iter_mut().for_each(&mut *f);
                lv(target, f);
            }
            StmtKind::Spawn { target, arg, .. } => {
                f(arg);
                lv(target, f);
            }
            StmtKind::Join(e) | StmtKind::Print(e) | StmtKind::Return(Some(e)) => f(e),
            StmtKind::If { cond, .. } | StmtKind::While { cond, .. } => f(cond),
            StmtKind::For { cond: Some(c), .. } => f(c),
            _ => {}
        }
    }

    /// The assigned lvalue of an assignment, call or spawn statement.
    pub fn target_mut(&mut self) -> Option<&mut LValue> {
        match &mut self.kind {
            StmtKind::Assign { target, .. } => Some(target),
            StmtKind::Call { target, .. } | StmtKind::Spawn { target, .. } => target.as_mut(),
            _ => None,
        }
    }

    /// Name of the variable this statement assigns, if any (locals and
    /// globals alike; array element writes report the array). A declaration
    /// without initializer assigns nothing: locals start at zero on function
    /// entry.
    pub fn assigned_name(&self) -> Option<&str> {
        match &self.kind {
            StmtKind::Local { init: None, .. } => None,
            StmtKind::Local { name, .. } => Some(name),
            StmtKind::Assign { target, .. } => Some(&target.name),
            StmtKind::Call {
                target: Some(t), ..
            }
            | StmtKind::Spawn {
                target: Some(t), ..
            } => Some(&t.name),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Function {
    pub name: String,
    pub params: Vec<String>,
    pub returns_value: bool,
    pub body: Vec<Stmt>,
    pub line: u32,
}

impl Function {
    pub fn walk<'a>(&'a self, f: &mut impl FnMut(&'a Stmt)) {
        self.body.iter().for_each(|s| s.walk(f));
    }

    pub fn walk_mut(&mut self, f: &mut impl FnMut(&mut Stmt)) {
        self.body.iter_mut().for_each(|s| s.walk_mut(f));
    }

    pub fn max_ordinal(&self) -> u32 {
        let mut max = 0;
        self.walk(&mut |s| max = max.max(s.site.ordinal));
        max
    }

    /// Every site in this function, in source order.
    pub fn sites(&self) -> Vec<SiteId> {
        let mut out = Vec::new();
        self.walk(&mut |s| out.push(s.site.clone()));
        out
    }

    pub fn find_stmt(&self, site: &SiteId) -> Option<&Stmt> {
        let mut found = None;
        self.walk(&mut |s| {
            if found.is_none() && &s.site == site {
                found = Some(s);
            }
        });
        found
    }

    /// Number of statements assigning `name` anywhere in the body.
    pub fn assignment_count(&self, name: &str) -> usize {
        let mut n = 0;
        self.walk(&mut |s| {
            if s.assigned_name() == Some(name) {
                n += 1;
            }
        });
        n
    }

    pub fn locals(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.walk(&mut |s| {
            if let StmtKind::Local { name, .. } = &s.kind {
                out.push(name.clone());
            }
        });
        out
    }
}

#[derive(Debug, Clone)]
pub struct Global {
    pub name: String,
    /// Empty for scalars.
    pub dims: Vec<usize>,
    pub init: i64,
    pub line: u32,
}

impl Global {
    pub fn is_array(&self) -> bool {
        !self.dims.is_empty()
    }

    /// Number of cells; a scalar has one.
    pub fn cells(&self) -> usize {
        self.dims.iter().product::<usize>().max(1)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum SyncKind {
    Lock,
    Cond,
    /// Participant count, an expression over constants and `nthreads`.
    Barrier(Expr),
}

#[derive(Debug, Clone)]
pub struct SyncDecl {
    pub name: String,
    pub kind: SyncKind,
    pub line: u32,
}

/// A `spawn` statement: who creates which thread entry, with which id argument.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ThreadCreation {
    pub creator: String,
    pub site: SiteId,
    pub entry: String,
    pub id_arg: Expr,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Program {
    pub globals: Vec<Global>,
    pub syncs: Vec<SyncDecl>,
    pub functions: Vec<Function>,
    pub main: String,
}

impl Program {
    pub fn function(&self, name: &str) -> Option<&Function> {
        self.functions.iter().find(|f| f.name == name)
    }

    pub fn function_mut(&mut self, name: &str) -> Option<&mut Function> {
        self.functions.iter_mut().find(|f| f.name == name)
    }

    pub fn global(&self, name: &str) -> Option<&Global> {
        self.globals.iter().find(|g| g.name == name)
    }

    pub fn is_global(&self, name: &str) -> bool {
        self.global(name).is_some()
    }

    pub fn sync(&self, name: &str) -> Option<&SyncDecl> {
        self.syncs.iter().find(|s| s.name == name)
    }

    pub fn locks(&self) -> impl Iterator<Item = &str> {
        self.syncs
            .iter()
            .filter(|s| s.kind == SyncKind::Lock)
            .map(|s| s.name.as_str())
    }

    pub fn thread_creations(&self) -> Vec<ThreadCreation> {
        let mut out = Vec::new();
        for f in &self.functions {
            f.walk(&mut |s| {
                let spawn = match &s.kind {
                    StmtKind::Spawn { func, arg, .. } => Some((func, arg)),
                    StmtKind::Local {
                        init: Some(LocalInit::Spawn { func, arg }),
                        ..
                    } => Some((func, arg)),
                    _ => None,
                };
                if let Some((entry, arg)) = spawn {
                    out.push(ThreadCreation {
                        creator: f.name.clone(),
                        site: s.site.clone(),
                        entry: entry.clone(),
                        id_arg: arg.clone(),
                    });
                }
            });
        }
        out
    }

    /// Thread entry functions: `main` first, then every spawn target in
    /// name order.
    pub fn thread_entries(&self) -> Vec<String> {
        let mut spawned: Vec<String> = self
            .thread_creations()
            .into_iter()
            .map(|t| t.entry)
            .filter(|e| e != &self.main)
            .collect();
        spawned.sort();
        spawned.dedup();
        let mut out = vec![self.main.clone()];
        out.extend(spawned);
        out
    }

    pub fn find_stmt(&self, site: &SiteId) -> Option<&Stmt> {
        self.function(&site.function)?.find_stmt(site)
    }
}

// Source lines are diagnostic only and do not take part in equality.
impl PartialEq for Function {
    fn eq(&self, o: &Self) -> bool {
        self.name == o.name
            && self.params == o.params
            && self.returns_value == o.returns_value
            && self.body == o.body
    }
}

impl Eq for Function {}

impl PartialEq for Global {
    fn eq(&self, o: &Self) -> bool {
        self.name == o.name && self.dims == o.dims && self.init == o.init
    }
}

impl Eq for Global {}

impl PartialEq for SyncDecl {
    fn eq(&self, o: &Self) -> bool {
        self.name == o.name && self.kind == o.kind
    }
}

impl Eq for SyncDecl {}
