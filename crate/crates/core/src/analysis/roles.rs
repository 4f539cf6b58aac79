//! Syntactic roles-of-variables classification.
//!
//! Rules are tried in a fixed order and the first match wins:
//!
//! 1. fixed value: never reassigned after declaration or parameter binding;
//! 2. stepper: every reassignment sits in a loop and is `v = v ± c` where
//!    `c` is a literal or a name the loop does not write;
//! 3. most-wanted holder: every reassignment is guarded by a comparison
//!    (`<`, `<=`, `>`, `>=`) of `v` against the assigned value or a name it
//!    reads, either through an enclosing `if` or a `?:` in the value itself;
//! 4. gatherer: every reassignment sits in a loop and is `v = v ⊕ e` with
//!    `⊕` one of `+ - *` and `e` varying with the loop;
//! 5. other.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::lang::{BinaryOp, Expr, ExprKind, Program};

use super::resolve::{resolve, AssignSite, FunctionScopes};
use super::VariableFacts;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Role {
    FixedValue,
    Stepper,
    MostWantedHolder,
    Gatherer,
    Other,
}

impl Role {
    pub const ALL: [Role; 5] = [
        Role::FixedValue,
        Role::Stepper,
        Role::MostWantedHolder,
        Role::Gatherer,
        Role::Other,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Role::FixedValue => "fixed value",
            Role::Stepper => "stepper",
            Role::MostWantedHolder => "most-wanted holder",
            Role::Gatherer => "gatherer",
            Role::Other => "other",
        }
    }

    /// Student-facing description used as a multiple-choice option.
    pub fn description(self) -> &'static str {
        match self {
            Role::FixedValue => {
                "Fixed value: it keeps the value it was first given and is never changed afterwards."
            }
            Role::Stepper => {
                "Stepper: it goes through a predictable sequence of values, such as counting up by one."
            }
            Role::MostWantedHolder => {
                "Most-wanted holder: it holds the best value seen so far, such as the largest or smallest."
            }
            Role::Gatherer => {
                "Gatherer: it gradually accumulates a result by combining many individual values."
            }
            Role::Other => "None of the above: it does not follow any of these common patterns.",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Classifies the variable described by `var`; returns [`Role::Other`] when
/// the variable cannot be located in `program`.
pub fn classify_variable_role(var: &VariableFacts, program: &Program) -> Role {
    let Some(func) = program.function(&var.function) else {
        return Role::Other;
    };
    let mut errors = Vec::new();
    let scopes = resolve(func, &mut errors);
    match scopes
        .decls
        .iter()
        .position(|d| d.name == var.name && d.line == var.decl_line)
    {
        Some(decl) => classify(&scopes, decl),
        None => Role::Other,
    }
}

pub(crate) fn classify(scopes: &FunctionScopes<'_>, decl: usize) -> Role {
    let sites: Vec<&AssignSite> = scopes.assigns.iter().filter(|a| a.decl == decl).collect();
    if sites.is_empty() {
        return Role::FixedValue;
    }
    if sites.iter().all(|s| is_step(scopes, s)) {
        return Role::Stepper;
    }
    if sites.iter().all(|s| is_most_wanted_update(scopes, s)) {
        return Role::MostWantedHolder;
    }
    if sites.iter().all(|s| is_gather(scopes, s)) {
        return Role::Gatherer;
    }
    Role::Other
}

/// Splits `v ⊕ x` (or `x ⊕ v` for commutative ⊕) into `(⊕, x)`.
fn self_update<'e>(scopes: &FunctionScopes, site: &AssignSite<'e>) -> Option<(BinaryOp, &'e Expr)> {
    let ExprKind::Binary { op, lhs, rhs } = &site.value.kind else {
        return None;
    };
    if scopes.refers_to(lhs, site.decl) {
        Some((*op, rhs))
    } else if matches!(op, BinaryOp::Add | BinaryOp::Mul) && scopes.refers_to(rhs, site.decl) {
        Some((*op, lhs))
    } else {
        None
    }
}

fn is_step(scopes: &FunctionScopes, site: &AssignSite) -> bool {
    let Some(&innermost) = site.loops.last() else {
        return false;
    };
    match self_update(scopes, site) {
        Some((BinaryOp::Add | BinaryOp::Sub, delta)) => {
            delta.is_literal()
                || (matches!(delta.kind, ExprKind::Var(_))
                    && scopes.is_loop_invariant(delta, innermost))
        }
        _ => false,
    }
}

fn is_gather(scopes: &FunctionScopes, site: &AssignSite) -> bool {
    let Some(&innermost) = site.loops.last() else {
        return false;
    };
    match self_update(scopes, site) {
        Some((BinaryOp::Add | BinaryOp::Sub | BinaryOp::Mul, e)) => {
            !scopes.is_loop_invariant(e, innermost)
        }
        _ => false,
    }
}

/// Ordering comparisons reachable through `&&`/`||`/`!` in a condition.
fn comparisons<'e>(cond: &'e Expr, out: &mut Vec<(&'e Expr, &'e Expr)>) {
    match &cond.kind {
        ExprKind::Binary { op, lhs, rhs } if op.is_ordering() => out.push((lhs, rhs)),
        ExprKind::Binary {
            op: BinaryOp::And | BinaryOp::Or,
            lhs,
            rhs,
        } => {
            comparisons(lhs, out);
            comparisons(rhs, out);
        }
        ExprKind::Unary { operand, .. } => comparisons(operand, out),
        _ => {}
    }
}

/// Whether `other` is the candidate value itself or a name it reads.
fn matches_candidate(other: &Expr, candidate: &Expr) -> bool {
    if other.to_string() == candidate.to_string() {
        return true;
    }
    match &other.kind {
        ExprKind::Var(name) => candidate.variables().contains(&name.as_str()),
        _ => match &candidate.kind {
            ExprKind::Var(name) => other.variables().contains(&name.as_str()),
            _ => false,
        },
    }
}

fn compares_against(scopes: &FunctionScopes, cond: &Expr, decl: usize, candidate: &Expr) -> bool {
    let mut pairs = Vec::new();
    comparisons(cond, &mut pairs);
    pairs.into_iter().any(|(l, r)| {
        (scopes.refers_to(l, decl) && matches_candidate(r, candidate))
            || (scopes.refers_to(r, decl) && matches_candidate(l, candidate))
    })
}

fn is_most_wanted_update(scopes: &FunctionScopes, site: &AssignSite) -> bool {
    let guarded = site
        .guards
        .iter()
        .any(|cond| compares_against(scopes, cond, site.decl, site.value));
    if guarded {
        return true;
    }
    // v = cond ? x : v   or   v = cond ? v : x
    if let ExprKind::Conditional {
        cond,
        then_expr,
        else_expr,
    } = &site.value.kind
    {
        let candidate = if scopes.refers_to(else_expr, site.decl) {
            then_expr
        } else if scopes.refers_to(then_expr, site.decl) {
            else_expr
        } else {
            return false;
        };
        return compares_against(scopes, cond, site.decl, candidate);
    }
    false
}
