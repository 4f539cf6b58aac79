//! Name resolution for one function body.
//!
//! Produces the declaration table, every resolved reference, and each
//! reassignment together with the loops and `if` conditions that enclose it.

use std::collections::{BTreeMap, HashMap, HashSet};

use crate::lang::{Expr, ExprKind, FunctionDecl, LoopId, SourceSpan, Stmt, StmtKind, TypeName};

use super::AnalysisError;

#[derive(Debug, Clone)]
pub(crate) struct Decl<'a> {
    pub name: &'a str,
    pub line: u32,
    pub span: SourceSpan,
    pub is_param: bool,
    pub ty: TypeName,
    pub init: Option<&'a Expr>,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Reference {
    pub decl: usize,
    pub line: u32,
    pub span: SourceSpan,
}

#[derive(Debug, Clone)]
pub(crate) struct AssignSite<'a> {
    pub decl: usize,
    pub line: u32,
    pub value: &'a Expr,
    /// Enclosing loops, outermost first.
    pub loops: Vec<LoopId>,
    /// Conditions of enclosing `if` statements (either branch).
    pub guards: Vec<&'a Expr>,
}

#[derive(Debug, Clone)]
pub(crate) struct CallSite<'a> {
    pub callee: &'a str,
    pub arity: usize,
    pub span: SourceSpan,
}

#[derive(Debug)]
pub(crate) struct FunctionScopes<'a> {
    pub decls: Vec<Decl<'a>>,
    pub refs: Vec<Reference>,
    pub assigns: Vec<AssignSite<'a>>,
    /// Declaration each `Var` expression resolves to, keyed by its span.
    pub var_decl: HashMap<SourceSpan, usize>,
    /// Declarations written (assigned or declared) anywhere inside each loop.
    pub loop_writes: BTreeMap<LoopId, HashSet<usize>>,
    pub calls: Vec<CallSite<'a>>,
    pub conditions: Vec<&'a Expr>,
    pub loops: Vec<&'a Stmt>,
}

struct Walker<'a, 'e> {
    out: FunctionScopes<'a>,
    scopes: Vec<Vec<(&'a str, usize)>>,
    loops: Vec<LoopId>,
    guards: Vec<&'a Expr>,
    errors: &'e mut Vec<AnalysisError>,
}

impl<'a> Walker<'a, '_> {
    fn lookup(&self, name: &str) -> Option<usize> {
        self.scopes
            .iter()
            .rev()
            .flat_map(|s| s.iter().rev())
            .find(|(n, _)| *n == name)
            .map(|&(_, d)| d)
    }

    fn declare(&mut self, decl: Decl<'a>) -> usize {
        let scope = self.scopes.last_mut().expect("scope stack is never empty");
        if scope.iter().any(|(n, _)| *n == decl.name) {
            self.errors.push(AnalysisError::Redeclared {
                name: decl.name.to_owned(),
                span: decl.span,
            });
        }
        let id = self.out.decls.len();
        scope.push((decl.name, id));
        self.out.decls.push(decl);
        self.mark_written(id);
        id
    }

    fn mark_written(&mut self, decl: usize) {
        for l in &self.loops {
            self.out.loop_writes.entry(*l).or_default().insert(decl);
        }
    }

    fn reference(&mut self, name: &str, span: SourceSpan) -> Option<usize> {
        match self.lookup(name) {
            Some(decl) => {
                self.out.refs.push(Reference {
                    decl,
                    line: span.start_line,
                    span,
                });
                Some(decl)
            }
            None => {
                self.errors.push(AnalysisError::UndefinedVariable {
                    name: name.to_owned(),
                    span,
                });
                None
            }
        }
    }

    fn expr(&mut self, e: &'a Expr) {
        match &e.kind {
            ExprKind::Var(name) => {
                if let Some(d) = self.reference(name, e.span) {
                    self.out.var_decl.insert(e.span, d);
                }
            }
            ExprKind::Call { callee, args } => {
                self.out.calls.push(CallSite {
                    callee: &callee.name,
                    arity: args.len(),
                    span: e.span,
                });
                args.iter().for_each(|a| self.expr(a));
            }
            _ => e.children().into_iter().for_each(|c| self.expr(c)),
        }
    }

    fn scoped(&mut self, f: impl FnOnce(&mut Self)) {
        self.scopes.push(Vec::new());
        f(self);
        self.scopes.pop();
    }

    fn stmt(&mut self, s: &'a Stmt) {
        match &s.kind {
            StmtKind::VarDecl { name, ty, init } => {
                self.expr(init);
                self.declare(Decl {
                    name: &name.name,
                    line: name.span.start_line,
                    span: name.span,
                    is_param: false,
                    ty: *ty,
                    init: Some(init),
                });
            }
            StmtKind::Assign { target, value } => {
                self.expr(value);
                if let Some(decl) = self.reference(&target.name, target.span) {
                    self.mark_written(decl);
                    self.out.assigns.push(AssignSite {
                        decl,
                        line: target.span.start_line,
                        value,
                        loops: self.loops.clone(),
                        guards: self.guards.clone(),
                    });
                }
            }
            StmtKind::If {
                cond,
                then_branch,
                else_branch,
            } => {
                self.expr(cond);
                self.out.conditions.push(cond);
                self.guards.push(cond);
                self.scoped(|w| w.stmt(then_branch));
                self.guards.pop();
                if let Some(e) = else_branch {
                    self.guards.push(cond);
                    self.scoped(|w| w.stmt(e));
                    self.guards.pop();
                }
            }
            StmtKind::While { id, cond, body } => {
                self.out.loops.push(s);
                self.loops.push(*id);
                self.out.loop_writes.entry(*id).or_default();
                self.expr(cond);
                self.scoped(|w| w.stmt(body));
                self.loops.pop();
            }
            StmtKind::For {
                id,
                init,
                cond,
                update,
                body,
            } => {
                self.out.loops.push(s);
                self.out.loop_writes.entry(*id).or_default();
                self.scoped(|w| {
                    if let Some(init) = init {
                        w.stmt(init);
                    }
                    w.loops.push(*id);
                    if let Some(c) = cond {
                        w.expr(c);
                    }
                    w.scoped(|w| w.stmt(body));
                    if let Some(u) = update {
                        w.stmt(u);
                    }
                    w.loops.pop();
                });
            }
            StmtKind::Return(e) => {
                if let Some(e) = e {
                    self.expr(e);
                }
            }
            StmtKind::Expr(e) => self.expr(e),
            StmtKind::Block(b) => self.scoped(|w| b.stmts.iter().for_each(|s| w.stmt(s))),
        }
    }
}

pub(crate) fn resolve<'a>(
    func: &'a FunctionDecl,
    errors: &mut Vec<AnalysisError>,
) -> FunctionScopes<'a> {
    let mut w = Walker {
        out: FunctionScopes {
            decls: Vec::new(),
            refs: Vec::new(),
            assigns: Vec::new(),
            var_decl: HashMap::new(),
            loop_writes: BTreeMap::new(),
            calls: Vec::new(),
            conditions: Vec::new(),
            loops: Vec::new(),
        },
        scopes: vec![Vec::new()],
        loops: Vec::new(),
        guards: Vec::new(),
        errors,
    };
    for p in &func.params {
        w.declare(Decl {
            name: &p.name.name,
            line: func.header_line(),
            span: p.name.span,
            is_param: true,
            ty: p.ty,
            init: None,
        });
    }
    // the body shares the parameters' scope, as in Java
    for s in &func.body.stmts {
        w.stmt(s);
    }
    w.out
}

impl FunctionScopes<'_> {
    /// Whether `e` reads nothing that `loop_id` writes. Calls are pure in
    /// this language, so only variable reads matter.
    pub fn is_loop_invariant(&self, e: &Expr, loop_id: LoopId) -> bool {
        let written = &self.loop_writes[&loop_id];
        let mut invariant = true;
        e.walk(&mut |sub| {
            if let ExprKind::Var(_) = sub.kind {
                match self.var_decl.get(&sub.span) {
                    Some(d) if !written.contains(d) => {}
                    _ => invariant = false,
                }
            }
        });
        invariant
    }

    pub fn refers_to(&self, e: &Expr, decl: usize) -> bool {
        matches!(e.kind, ExprKind::Var(_)) && self.var_decl.get(&e.span) == Some(&decl)
    }
}
