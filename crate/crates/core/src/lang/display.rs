//! Canonical source rendering of AST nodes.
//!
//! Rendering inserts only the parentheses precedence requires, so parsing
//! the output yields a structurally equal tree.

use std::fmt::{self, Write};

use super::ast::*;

const PREC_CONDITIONAL: u8 = 0;
const PREC_UNARY: u8 = 7;
const PREC_POSTFIX: u8 = 8;

fn precedence(e: &Expr) -> u8 {
    match &e.kind {
        ExprKind::Conditional { .. } => PREC_CONDITIONAL,
        ExprKind::Binary { op, .. } => op.precedence(),
        ExprKind::Unary { .. } => PREC_UNARY,
        _ => PREC_POSTFIX,
    }
}

pub(crate) fn escape_char(c: char, quote: char, out: &mut String) {
    match c {
        '\n' => out.push_str("\\n"),
        '\t' => out.push_str("\\t"),
        '\r' => out.push_str("\\r"),
        '\0' => out.push_str("\\0"),
        '\\' => out.push_str("\\\\"),
        c if c == quote => {
            out.push('\\');
            out.push(c);
        }
        c => out.push(c),
    }
}

/// `"text"` with Java escapes.
pub fn quote_str(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        escape_char(c, '"', &mut out);
    }
    out.push('"');
    out
}

/// `'c'` with Java escapes.
pub fn quote_char(c: char) -> String {
    let mut out = String::from("'");
    escape_char(c, '\'', &mut out);
    out.push('\'');
    out
}

fn write_expr(e: &Expr, min_prec: u8, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    let parens = precedence(e) < min_prec;
    if parens {
        f.write_char('(')?;
    }
    match &e.kind {
        ExprKind::Int(v) => write!(f, "{v}")?,
        ExprKind::Char(c) => f.write_str(&quote_char(*c))?,
        ExprKind::Str(s) => f.write_str(&quote_str(s))?,
        ExprKind::Bool(b) => write!(f, "{b}")?,
        ExprKind::Var(name) => f.write_str(name)?,
        ExprKind::Unary { op, operand } => {
            f.write_char(match op {
                UnaryOp::Neg => '-',
                UnaryOp::Not => '!',
            })?;
            write_expr(operand, PREC_UNARY, f)?;
        }
        ExprKind::Binary { op, lhs, rhs } => {
            write_expr(lhs, op.precedence(), f)?;
            write!(f, " {} ", op.symbol())?;
            write_expr(rhs, op.precedence() + 1, f)?;
        }
        ExprKind::Conditional {
            cond,
            then_expr,
            else_expr,
        } => {
            write_expr(cond, 1, f)?;
            f.write_str(" ? ")?;
            write_expr(then_expr, PREC_CONDITIONAL, f)?;
            f.write_str(" : ")?;
            write_expr(else_expr, PREC_CONDITIONAL, f)?;
        }
        ExprKind::Call { callee, args } => {
            f.write_str(&callee.name)?;
            write_args(args, f)?;
        }
        ExprKind::Builtin {
            receiver,
            method,
            args,
        } => {
            write_expr(receiver, PREC_POSTFIX, f)?;
            write!(f, ".{}", method.name())?;
            write_args(args, f)?;
        }
    }
    if parens {
        f.write_char(')')?;
    }
    Ok(())
}

fn write_args(args: &[Expr], f: &mut fmt::Formatter<'_>) -> fmt::Result {
    f.write_char('(')?;
    for (i, a) in args.iter().enumerate() {
        if i > 0 {
            f.write_str(", ")?;
        }
        write_expr(a, PREC_CONDITIONAL, f)?;
    }
    f.write_char(')')
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_expr(self, PREC_CONDITIONAL, f)
    }
}

fn simple(stmt: &Stmt) -> String {
    match &stmt.kind {
        StmtKind::VarDecl { name, ty, init } => format!("{ty} {} = {init}", name.name),
        StmtKind::Assign { target, value } => format!("{} = {value}", target.name),
        StmtKind::Expr(e) => e.to_string(),
        _ => unreachable!("not a simple statement"),
    }
}

fn write_stmt(stmt: &Stmt, indent: usize, out: &mut String) {
    let pad = "  ".repeat(indent);
    match &stmt.kind {
        StmtKind::VarDecl { .. } | StmtKind::Assign { .. } | StmtKind::Expr(_) => {
            let _ = writeln!(out, "{pad}{};", simple(stmt));
        }
        StmtKind::Return(None) => {
            let _ = writeln!(out, "{pad}return;");
        }
        StmtKind::Return(Some(e)) => {
            let _ = writeln!(out, "{pad}return {e};");
        }
        StmtKind::Block(block) => {
            let _ = writeln!(out, "{pad}{{");
            for s in &block.stmts {
                write_stmt(s, indent + 1, out);
            }
            let _ = writeln!(out, "{pad}}}");
        }
        StmtKind::If {
            cond,
            then_branch,
            else_branch,
        } => {
            let _ = writeln!(out, "{pad}if ({cond})");
            write_stmt(then_branch, indent + 1, out);
            if let Some(e) = else_branch {
                let _ = writeln!(out, "{pad}else");
                write_stmt(e, indent + 1, out);
            }
        }
        StmtKind::While { cond, body, .. } => {
            let _ = writeln!(out, "{pad}while ({cond})");
            write_stmt(body, indent + 1, out);
        }
        StmtKind::For {
            init,
            cond,
            update,
            body,
            ..
        } => {
            let init = init.as_deref().map(simple).unwrap_or_default();
            let cond = cond.as_ref().map(|c| c.to_string()).unwrap_or_default();
            let update = update.as_deref().map(simple).unwrap_or_default();
            let _ = writeln!(out, "{pad}for ({init}; {cond}; {update})");
            write_stmt(body, indent + 1, out);
        }
    }
}

impl fmt::Display for Stmt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut out = String::new();
        write_stmt(self, 0, &mut out);
        f.write_str(&out)
    }
}

impl fmt::Display for FunctionDecl {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "static {} {}(", self.return_type, self.name.name)?;
        for (i, p) in self.params.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{} {}", p.ty, p.name.name)?;
        }
        f.write_str(") ")?;
        let body = Stmt {
            kind: StmtKind::Block(self.body.clone()),
            span: self.body.span,
        };
        write!(f, "{body}")
    }
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, func) in self.functions.iter().enumerate() {
            if i > 0 {
                f.write_char('\n')?;
            }
            write!(f, "{func}")?;
        }
        Ok(())
    }
}
