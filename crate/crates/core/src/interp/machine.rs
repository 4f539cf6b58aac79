use std::collections::HashMap;

use crate::lang::{
    BinaryOp, BuiltinMethod, Expr, ExprKind, FunctionDecl, LoopId, Program, Stmt, StmtKind,
    TypeName, UnaryOp,
};

use super::{DynamicFacts, Fuel, RuntimeError, RuntimeErrorKind, TraceEvent, Value};

/// Native stack reserved for one execution. Only touched pages are committed.
const STACK_BYTES: usize = 512 << 20;

type Exec<T> = Result<T, RuntimeError>;

enum Flow {
    Normal,
    Return(Value, u32),
}

struct Frame {
    fn_name: String,
    invocation: u32,
    scopes: Vec<Vec<(String, Value)>>,
}

impl Frame {
    fn lookup(&mut self, name: &str) -> Option<&mut Value> {
        self.scopes
            .iter_mut()
            .rev()
            .flat_map(|s| s.iter_mut().rev())
            .find(|(n, _)| n == name)
            .map(|(_, v)| v)
    }
}

struct Machine<'p> {
    program: &'p Program,
    fuel: Fuel,
    steps: u64,
    depth: u32,
    invocations: HashMap<&'p str, u32>,
    trace: Vec<TraceEvent>,
}

fn err(kind: RuntimeErrorKind, message: impl Into<String>, line: u32) -> RuntimeError {
    RuntimeError {
        kind,
        message: message.into(),
        line,
    }
}

fn type_error(message: impl Into<String>, line: u32) -> RuntimeError {
    err(RuntimeErrorKind::TypeError, message, line)
}

fn overflow(line: u32) -> RuntimeError {
    err(
        RuntimeErrorKind::IntegerOverflow,
        "result does not fit in a 64-bit integer",
        line,
    )
}

impl<'p> Machine<'p> {
    fn tick(&mut self, line: u32) -> Exec<()> {
        self.steps += 1;
        if self.steps > self.fuel.max_steps {
            return Err(err(
                RuntimeErrorKind::FuelExhausted,
                format!("execution exceeded {} steps", self.fuel.max_steps),
                line,
            ));
        }
        Ok(())
    }

    fn call(&mut self, name: &str, args: Vec<Value>, line: u32) -> Exec<Value> {
        let program = self.program;
        let func: &'p FunctionDecl = program.function(name).ok_or_else(|| {
            err(
                RuntimeErrorKind::UndefinedFunction,
                format!("no function named `{name}`"),
                line,
            )
        })?;
        if func.params.len() != args.len() {
            return Err(type_error(
                format!(
                    "`{name}` expects {} argument(s) but got {}",
                    func.params.len(),
                    args.len()
                ),
                line,
            ));
        }
        for (p, a) in func.params.iter().zip(&args) {
            if a.type_name() != p.ty {
                return Err(type_error(
                    format!(
                        "argument `{}` of `{name}` must be {} but got {}",
                        p.name.name,
                        p.ty,
                        a.type_name()
                    ),
                    line,
                ));
            }
        }
        self.tick(line)?;
        if self.depth >= self.fuel.max_call_depth.min(Fuel::CALL_DEPTH_CAP) {
            return Err(err(
                RuntimeErrorKind::StackOverflow,
                format!(
                    "call stack exceeded {} frames",
                    self.fuel.max_call_depth.min(Fuel::CALL_DEPTH_CAP)
                ),
                line,
            ));
        }
        self.depth += 1;
        let invocation = {
            let n = self.invocations.entry(func.name.name.as_str()).or_insert(0);
            *n += 1;
            *n
        };
        self.trace.push(TraceEvent::CallEnter {
            fn_name: func.name.name.clone(),
            args: args.clone(),
            depth: self.depth,
            invocation_index: invocation,
        });
        let mut frame = Frame {
            fn_name: func.name.name.clone(),
            invocation,
            scopes: vec![func
                .params
                .iter()
                .map(|p| p.name.name.clone())
                .zip(args)
                .collect()],
        };
        let value = match self.block(&func.body.stmts, &mut frame)? {
            Flow::Return(v, ret_line) => {
                if v.type_name() != func.return_type {
                    return Err(type_error(
                        format!(
                            "`{name}` must return {} but returned {}",
                            func.return_type,
                            v.type_name()
                        ),
                        ret_line,
                    ));
                }
                v
            }
            Flow::Normal if func.return_type == TypeName::Void => Value::Void,
            Flow::Normal => {
                return Err(type_error(
                    format!("`{name}` ended without returning a {}", func.return_type),
                    func.body.span.end_line,
                ))
            }
        };
        self.depth -= 1;
        self.trace.push(TraceEvent::CallExit {
            fn_name: func.name.name.clone(),
            return_value: value.clone(),
        });
        Ok(value)
    }

    fn block(&mut self, stmts: &'p [Stmt], frame: &mut Frame) -> Exec<Flow> {
        for s in stmts {
            if let Flow::Return(v, l) = self.stmt(s, frame)? {
                return Ok(Flow::Return(v, l));
            }
        }
        Ok(Flow::Normal)
    }

    fn scoped(&mut self, stmt: &'p Stmt, frame: &mut Frame) -> Exec<Flow> {
        frame.scopes.push(Vec::new());
        let flow = self.stmt(stmt, frame);
        frame.scopes.pop();
        flow
    }

    fn record_assign(&mut self, var: &str, line: u32, value: &Value, frame: &Frame) {
        self.trace.push(TraceEvent::Assign {
            var_name: var.to_owned(),
            line,
            value: value.clone(),
            fn_name: frame.fn_name.clone(),
            invocation_index: frame.invocation,
        });
    }

    fn condition(&mut self, cond: &'p Expr, frame: &mut Frame) -> Exec<bool> {
        match self.eval(cond, frame)? {
            Value::Bool(b) => Ok(b),
            other => Err(type_error(
                format!("condition must be boolean but is {}", other.type_name()),
                cond.span.start_line,
            )),
        }
    }

    fn stmt(&mut self, s: &'p Stmt, frame: &mut Frame) -> Exec<Flow> {
        let line = s.span.start_line;
        self.tick(line)?;
        match &s.kind {
            StmtKind::VarDecl { name, ty, init } => {
                let value = self.eval(init, frame)?;
                if value.type_name() != *ty {
                    return Err(type_error(
                        format!(
                            "cannot initialize {ty} `{}` with a {}",
                            name.name,
                            value.type_name()
                        ),
                        line,
                    ));
                }
                self.record_assign(&name.name, name.span.start_line, &value, frame);
                frame
                    .scopes
                    .last_mut()
                    .expect("frames always have a scope")
                    .push((name.name.clone(), value));
            }
            StmtKind::Assign { target, value } => {
                let value = self.eval(value, frame)?;
                let slot = frame.lookup(&target.name).ok_or_else(|| {
                    type_error(format!("`{}` is not declared", target.name), line)
                })?;
                if slot.type_name() != value.type_name() {
                    return Err(type_error(
                        format!(
                            "cannot assign a {} to {} `{}`",
                            value.type_name(),
                            slot.type_name(),
                            target.name
                        ),
                        line,
                    ));
                }
                *slot = value.clone();
                self.record_assign(&target.name, target.span.start_line, &value, frame);
            }
            StmtKind::If {
                cond,
                then_branch,
                else_branch,
            } => {
                if self.condition(cond, frame)? {
                    return self.scoped(then_branch, frame);
                } else if let Some(e) = else_branch {
                    return self.scoped(e, frame);
                }
            }
            StmtKind::While { id, cond, body } => {
                return self.run_loop(*id, Some(cond), None, body, frame);
            }
            StmtKind::For {
                id,
                init,
                cond,
                update,
                body,
            } => {
                frame.scopes.push(Vec::new());
                let flow = match init {
                    Some(init) => self.stmt(init, frame),
                    None => Ok(Flow::Normal),
                }
                .and_then(|_| self.run_loop(*id, cond.as_ref(), update.as_deref(), body, frame));
                frame.scopes.pop();
                return flow;
            }
            StmtKind::Return(e) => {
                let v = match e {
                    Some(e) => self.eval(e, frame)?,
                    None => Value::Void,
                };
                return Ok(Flow::Return(v, line));
            }
            StmtKind::Expr(e) => {
                self.eval(e, frame)?;
            }
            StmtKind::Block(b) => {
                frame.scopes.push(Vec::new());
                let flow = self.block(&b.stmts, frame);
                frame.scopes.pop();
                return flow;
            }
        }
        Ok(Flow::Normal)
    }

    fn run_loop(
        &mut self,
        id: LoopId,
        cond: Option<&'p Expr>,
        update: Option<&'p Stmt>,
        body: &'p Stmt,
        frame: &mut Frame,
    ) -> Exec<Flow> {
        let mut iteration = 0;
        loop {
            let line = cond.map_or(body.span.start_line, |c| c.span.start_line);
            self.tick(line)?;
            let go = match cond {
                Some(c) => self.condition(c, frame)?,
                None => true,
            };
            if !go {
                return Ok(Flow::Normal);
            }
            iteration += 1;
            self.trace.push(TraceEvent::LoopIter {
                loop_id: id,
                iteration_index: iteration,
            });
            if let Flow::Return(v, l) = self.scoped(body, frame)? {
                return Ok(Flow::Return(v, l));
            }
            if let Some(u) = update {
                self.stmt(u, frame)?;
            }
        }
    }

    fn eval(&mut self, e: &'p Expr, frame: &mut Frame) -> Exec<Value> {
        let line = e.span.start_line;
        Ok(match &e.kind {
            ExprKind::Int(v) => Value::Int(*v),
            ExprKind::Char(c) => Value::Char(*c),
            ExprKind::Str(s) => Value::Str(s.clone()),
            ExprKind::Bool(b) => Value::Bool(*b),
            ExprKind::Var(name) => frame
                .lookup(name)
                .cloned()
                .ok_or_else(|| type_error(format!("`{name}` is not declared"), line))?,
            ExprKind::Unary { op, operand } => {
                let v = self.eval(operand, frame)?;
                match (op, v) {
                    (UnaryOp::Neg, Value::Int(i)) => {
                        Value::Int(i.checked_neg().ok_or_else(|| overflow(line))?)
                    }
                    (UnaryOp::Not, Value::Bool(b)) => Value::Bool(!b),
                    (op, v) => {
                        let sym = if *op == UnaryOp::Neg { "-" } else { "!" };
                        return Err(type_error(
                            format!("operator {sym} cannot be applied to a {}", v.type_name()),
                            line,
                        ));
                    }
                }
            }
            ExprKind::Binary { op, lhs, rhs } => {
                let l = self.eval(lhs, frame)?;
                match (op, &l) {
                    (BinaryOp::And, Value::Bool(false)) => return Ok(Value::Bool(false)),
                    (BinaryOp::Or, Value::Bool(true)) => return Ok(Value::Bool(true)),
                    _ => {}
                }
                let r = self.eval(rhs, frame)?;
                binary(*op, l, r, line)?
            }
            ExprKind::Conditional {
                cond,
                then_expr,
                else_expr,
            } => {
                if self.condition(cond, frame)? {
                    self.eval(then_expr, frame)?
                } else {
                    self.eval(else_expr, frame)?
                }
            }
            ExprKind::Call { callee, args } => {
                let mut values = Vec::with_capacity(args.len());
                for a in args {
                    values.push(self.eval(a, frame)?);
                }
                self.call(&callee.name, values, line)?
            }
            ExprKind::Builtin {
                receiver,
                method,
                args,
            } => {
                let recv = self.eval(receiver, frame)?;
                let mut values = Vec::with_capacity(args.len());
                for a in args {
                    values.push(self.eval(a, frame)?);
                }
                builtin(*method, recv, &values, line)?
            }
        })
    }
}

fn binary(op: BinaryOp, l: Value, r: Value, line: u32) -> Exec<Value> {
    use Value::*;
    let mismatch = |l: &Value, r: &Value| {
        type_error(
            format!(
                "operator {} cannot be applied to {} and {}",
                op.symbol(),
                l.type_name(),
                r.type_name()
            ),
            line,
        )
    };
    Ok(match (op, &l, &r) {
        (BinaryOp::Add, Str(_), _) | (BinaryOp::Add, _, Str(_))
            if l != Void && r != Void =>
        {
            Str(l.concat_text() + &r.concat_text())
        }
        (BinaryOp::Add, Int(a), Int(b)) => Int(a.checked_add(*b).ok_or_else(|| overflow(line))?),
        (BinaryOp::Sub, Int(a), Int(b)) => Int(a.checked_sub(*b).ok_or_else(|| overflow(line))?),
        (BinaryOp::Mul, Int(a), Int(b)) => Int(a.checked_mul(*b).ok_or_else(|| overflow(line))?),
        (BinaryOp::Div | BinaryOp::Rem, Int(_), Int(0)) => {
            return Err(err(
                RuntimeErrorKind::DivisionByZero,
                format!("operator {} with a zero divisor", op.symbol()),
                line,
            ))
        }
        (BinaryOp::Div, Int(a), Int(b)) => Int(a.checked_div(*b).ok_or_else(|| overflow(line))?),
        (BinaryOp::Rem, Int(a), Int(b)) => Int(a.checked_rem(*b).ok_or_else(|| overflow(line))?),
        (op, Int(a), Int(b)) if op.is_ordering() => Bool(compare(op, a, b)),
        (op, Char(a), Char(b)) if op.is_ordering() => Bool(compare(op, a, b)),
        (BinaryOp::Eq | BinaryOp::Ne, _, _)
            if l.type_name() == r.type_name() && l != Void =>
        {
            Bool((l == r) == (op == BinaryOp::Eq))
        }
        (BinaryOp::And, Bool(_), Bool(b)) | (BinaryOp::Or, Bool(_), Bool(b)) => Bool(*b),
        _ => return Err(mismatch(&l, &r)),
    })
}

fn compare<T: Ord>(op: BinaryOp, a: T, b: T) -> bool {
    match op {
        BinaryOp::Lt => a < b,
        BinaryOp::Le => a <= b,
        BinaryOp::Gt => a > b,
        BinaryOp::Ge => a >= b,
        _ => unreachable!("not an ordering operator"),
    }
}

fn builtin(method: BuiltinMethod, recv: Value, args: &[Value], line: u32) -> Exec<Value> {
    let Value::Str(s) = recv else {
        return Err(type_error(
            format!("{}() needs a String but got a {}", method.name(), recv.type_name()),
            line,
        ));
    };
    match method {
        BuiltinMethod::Length => Ok(Value::Int(s.chars().count() as i64)),
        BuiltinMethod::CharAt => {
            let Some(Value::Int(i)) = args.first() else {
                return Err(type_error("charAt() needs an int index", line));
            };
            usize::try_from(*i)
                .ok()
                .and_then(|i| s.chars().nth(i))
                .map(Value::Char)
                .ok_or_else(|| {
                    err(
                        RuntimeErrorKind::IndexOutOfBounds,
                        format!(
                            "index {i} is outside \"{s}\" (length {})",
                            s.chars().count()
                        ),
                        line,
                    )
                })
        }
    }
}

/// Runs `entry` (a call with literal arguments) against `program`.
///
/// Runtime failures end up in [`DynamicFacts::result`]; the trace keeps
/// every event up to the failure.
pub fn execute(program: &Program, entry: &Expr, fuel: Fuel) -> DynamicFacts {
    std::thread::scope(|scope| {
        std::thread::Builder::new()
            .name("qlc-exec".into())
            .stack_size(STACK_BYTES)
            .spawn_scoped(scope, || execute_here(program, entry, fuel))
            .expect("failed to spawn interpreter thread")
            .join()
            .expect("interpreter thread panicked")
    })
}

fn execute_here(program: &Program, entry: &Expr, fuel: Fuel) -> DynamicFacts {
    let mut machine = Machine {
        program,
        fuel,
        steps: 0,
        depth: 0,
        invocations: HashMap::new(),
        trace: Vec::new(),
    };
    let line = entry.span.start_line;
    let result = match &entry.kind {
        ExprKind::Call { callee, args } => {
            let mut scratch = Frame {
                fn_name: String::new(),
                invocation: 0,
                scopes: vec![Vec::new()],
            };
            args.iter()
                .map(|a| machine.eval(a, &mut scratch))
                .collect::<Exec<Vec<_>>>()
                .and_then(|values| machine.call(&callee.name, values, line))
        }
        _ => Err(type_error("the entry expression must be a function call", line)),
    };
    DynamicFacts::from_trace(entry.clone(), result, machine.trace)
}
