//! Recursive-descent parser producing a span-annotated [`Program`].
//!
//! Syntax errors inside a block are recovered at the next statement boundary
//! so one pass can report several problems. Lexical errors abort immediately.

use super::ast::*;
use super::lexer::{tokenize, Token, TokenKind};
use super::span::SourceSpan;
use super::{ParseError, ParseErrorKind};

/// Nesting bound for statements and expressions; keeps hostile input from
/// exhausting the native stack.
const MAX_NESTING: usize = 200;

type PResult<T> = Result<T, ParseError>;

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    errors: Vec<ParseError>,
    next_loop: u32,
    depth: usize,
    eof_span: SourceSpan,
}

fn syntactic(message: impl Into<String>, span: SourceSpan) -> ParseError {
    ParseError {
        message: message.into(),
        span,
        kind: ParseErrorKind::Syntactic,
    }
}

impl Parser {
    fn new(tokens: Vec<Token>, source: &str) -> Self {
        let eof_span = tokens.last().map_or_else(
            || {
                let idx = super::span::LineIndex::new(source);
                let line = idx.line_count() as u32;
                let col = idx.line(line).map_or(0, |l| l.chars().count() as u32) + 1;
                SourceSpan::point(line, col)
            },
            |t| SourceSpan::point(t.span.end_line, t.span.end_col + 1),
        );
        Self {
            tokens,
            pos: 0,
            errors: Vec::new(),
            next_loop: 0,
            depth: 0,
            eof_span,
        }
    }

    fn peek(&self) -> Option<&TokenKind> {
        self.tokens.get(self.pos).map(|t| &t.kind)
    }

    fn peek_at(&self, offset: usize) -> Option<&TokenKind> {
        self.tokens.get(self.pos + offset).map(|t| &t.kind)
    }

    fn at(&self, kind: &TokenKind) -> bool {
        self.peek() == Some(kind)
    }

    fn current_span(&self) -> SourceSpan {
        self.tokens
            .get(self.pos)
            .map_or(self.eof_span, |t| t.span)
    }

    fn prev_span(&self) -> SourceSpan {
        self.tokens[self.pos - 1].span
    }

    fn bump(&mut self) -> &Token {
        self.pos += 1;
        &self.tokens[self.pos - 1]
    }

    fn eat(&mut self, kind: &TokenKind) -> bool {
        if self.at(kind) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn unexpected(&self, expected: &str) -> ParseError {
        match self.tokens.get(self.pos) {
            Some(t) => syntactic(format!("expected {expected}, found {}", t.kind), t.span),
            None => syntactic(format!("expected {expected}, found end of input"), self.eof_span),
        }
    }

    fn expect(&mut self, kind: TokenKind) -> PResult<SourceSpan> {
        if self.at(&kind) {
            Ok(self.bump().span)
        } else {
            Err(self.unexpected(&kind.to_string()))
        }
    }

    fn ident(&mut self, what: &str) -> PResult<Ident> {
        match self.peek() {
            Some(TokenKind::Ident(_)) => {
                let tok = self.bump();
                let TokenKind::Ident(name) = &tok.kind else {
                    unreachable!()
                };
                Ok(Ident {
                    name: name.clone(),
                    span: tok.span,
                })
            }
            _ => Err(self.unexpected(what)),
        }
    }

    fn nest(&mut self) -> PResult<()> {
        self.depth += 1;
        if self.depth > MAX_NESTING {
            return Err(syntactic(
                format!("nesting deeper than {MAX_NESTING} levels"),
                self.current_span(),
            ));
        }
        Ok(())
    }

    fn unnest(&mut self) {
        self.depth -= 1;
    }

    fn type_name(&mut self) -> Option<TypeName> {
        let ty = match self.peek()? {
            TokenKind::IntType => TypeName::Int,
            TokenKind::CharType => TypeName::Char,
            TokenKind::BooleanType => TypeName::Boolean,
            TokenKind::StringType => TypeName::String,
            TokenKind::Void => TypeName::Void,
            _ => return None,
        };
        self.pos += 1;
        Some(ty)
    }

    fn at_type(&self) -> bool {
        matches!(
            self.peek(),
            Some(
                TokenKind::IntType
                    | TokenKind::CharType
                    | TokenKind::BooleanType
                    | TokenKind::StringType
                    | TokenKind::Void
            )
        )
    }

    // ---- declarations -------------------------------------------------

    fn program(&mut self) -> Vec<FunctionDecl> {
        let mut functions: Vec<FunctionDecl> = Vec::new();
        while self.peek().is_some() {
            match self.function() {
                Ok(f) => {
                    if functions.iter().any(|g| g.name.name == f.name.name) {
                        self.errors.push(syntactic(
                            format!("function `{}` is defined more than once", f.name.name),
                            f.name.span,
                        ));
                    }
                    functions.push(f);
                }
                Err(e) => {
                    self.errors.push(e);
                    self.recover_to_function();
                }
            }
        }
        functions
    }

    /// Skips forward to something that can start a function declaration at
    /// brace depth zero.
    fn recover_to_function(&mut self) {
        let mut depth = 0usize;
        let start = self.pos;
        while let Some(kind) = self.peek() {
            match kind {
                TokenKind::LBrace => depth += 1,
                TokenKind::RBrace => {
                    depth = depth.saturating_sub(1);
                    self.pos += 1;
                    if depth == 0 {
                        return;
                    }
                    continue;
                }
                TokenKind::Static if depth == 0 && self.pos > start => return,
                _ => {}
            }
            self.pos += 1;
        }
    }

    fn function(&mut self) -> PResult<FunctionDecl> {
        let start = self.current_span();
        self.eat(&TokenKind::Static);
        let return_type = self
            .type_name()
            .ok_or_else(|| self.unexpected("a return type"))?;
        let name = self.ident("a function name")?;
        self.expect(TokenKind::LParen)?;
        let mut params: Vec<Param> = Vec::new();
        if !self.at(&TokenKind::RParen) {
            loop {
                let pstart = self.current_span();
                let ty = self
                    .type_name()
                    .ok_or_else(|| self.unexpected("a parameter type"))?;
                if ty == TypeName::Void {
                    return Err(syntactic("parameters cannot have type void", pstart));
                }
                let pname = self.ident("a parameter name")?;
                if params.iter().any(|p| p.name.name == pname.name) {
                    self.errors.push(syntactic(
                        format!("duplicate parameter `{}`", pname.name),
                        pname.span,
                    ));
                }
                params.push(Param {
                    span: pstart.to(pname.span),
                    name: pname,
                    ty,
                });
                if !self.eat(&TokenKind::Comma) {
                    break;
                }
            }
        }
        self.expect(TokenKind::RParen)?;
        let body = self.block()?;
        Ok(FunctionDecl {
            span: start.to(body.span),
            name,
            params,
            return_type,
            body,
        })
    }

    // ---- statements ---------------------------------------------------

    fn block(&mut self) -> PResult<Block> {
        let open = self.expect(TokenKind::LBrace)?;
        let mut stmts = Vec::new();
        loop {
            match self.peek() {
                None => return Err(self.unexpected("`}`")),
                Some(TokenKind::RBrace) => break,
                Some(_) => match self.statement() {
                    Ok(s) => stmts.push(s),
                    Err(e) => {
                        self.errors.push(e);
                        self.recover_to_statement();
                    }
                },
            }
        }
        let close = self.bump().span;
        Ok(Block {
            stmts,
            span: open.to(close),
        })
    }

    /// Skips to just past the next `;` or to the next `}` at the current depth.
    fn recover_to_statement(&mut self) {
        let mut depth = 0usize;
        while let Some(kind) = self.peek() {
            match kind {
                TokenKind::Semicolon if depth == 0 => {
                    self.pos += 1;
                    return;
                }
                TokenKind::LBrace => depth += 1,
                TokenKind::RBrace => {
                    if depth == 0 {
                        return;
                    }
                    depth -= 1;
                    if depth == 0 {
                        self.pos += 1;
                        return;
                    }
                }
                _ => {}
            }
            self.pos += 1;
        }
    }

    fn statement(&mut self) -> PResult<Stmt> {
        self.nest()?;
        let result = self.statement_inner();
        self.unnest();
        result
    }

    fn statement_inner(&mut self) -> PResult<Stmt> {
        let start = self.current_span();
        match self.peek() {
            Some(TokenKind::LBrace) => {
                let block = self.block()?;
                Ok(Stmt {
                    span: block.span,
                    kind: StmtKind::Block(block),
                })
            }
            Some(TokenKind::If) => {
                self.bump();
                self.expect(TokenKind::LParen)?;
                let cond = self.expr()?;
                self.expect(TokenKind::RParen)?;
                let then_branch = Box::new(self.statement()?);
                let else_branch = if self.eat(&TokenKind::Else) {
                    Some(Box::new(self.statement()?))
                } else {
                    None
                };
                let end = else_branch.as_ref().map_or(then_branch.span, |e| e.span);
                Ok(Stmt {
                    span: start.to(end),
                    kind: StmtKind::If {
                        cond,
                        then_branch,
                        else_branch,
                    },
                })
            }
            Some(TokenKind::While) => {
                self.bump();
                let id = self.fresh_loop();
                self.expect(TokenKind::LParen)?;
                let cond = self.expr()?;
                self.expect(TokenKind::RParen)?;
                let body = Box::new(self.statement()?);
                Ok(Stmt {
                    span: start.to(body.span),
                    kind: StmtKind::While { id, cond, body },
                })
            }
            Some(TokenKind::For) => {
                self.bump();
                let id = self.fresh_loop();
                self.expect(TokenKind::LParen)?;
                let init = if self.at(&TokenKind::Semicolon) {
                    None
                } else {
                    Some(Box::new(self.simple_statement(true)?))
                };
                self.expect(TokenKind::Semicolon)?;
                let cond = if self.at(&TokenKind::Semicolon) {
                    None
                } else {
                    Some(self.expr()?)
                };
                self.expect(TokenKind::Semicolon)?;
                let update = if self.at(&TokenKind::RParen) {
                    None
                } else {
                    Some(Box::new(self.simple_statement(false)?))
                };
                self.expect(TokenKind::RParen)?;
                let body = Box::new(self.statement()?);
                Ok(Stmt {
                    span: start.to(body.span),
                    kind: StmtKind::For {
                        id,
                        init,
                        cond,
                        update,
                        body,
                    },
                })
            }
            Some(TokenKind::Return) => {
                self.bump();
                let value = if self.at(&TokenKind::Semicolon) {
                    None
                } else {
                    Some(self.expr()?)
                };
                let end = self.expect(TokenKind::Semicolon)?;
                Ok(Stmt {
                    span: start.to(end),
                    kind: StmtKind::Return(value),
                })
            }
            Some(TokenKind::Else) => Err(syntactic("`else` without a matching `if`", start)),
            _ => {
                let mut stmt = self.simple_statement(true)?;
                let end = self.expect(TokenKind::Semicolon)?;
                stmt.span = stmt.span.to(end);
                Ok(stmt)
            }
        }
    }

    fn fresh_loop(&mut self) -> LoopId {
        let id = LoopId(self.next_loop);
        self.next_loop += 1;
        id
    }

    /// Declaration, assignment or call, without the trailing `;`.
    fn simple_statement(&mut self, allow_decl: bool) -> PResult<Stmt> {
        let start = self.current_span();
        if self.at_type() {
            if !allow_decl {
                return Err(syntactic("a declaration is not allowed here", start));
            }
            let ty = self.type_name().expect("checked by at_type");
            if ty == TypeName::Void {
                return Err(syntactic("variables cannot have type void", start));
            }
            let name = self.ident("a variable name")?;
            if !self.at(&TokenKind::Assign) {
                return Err(self.unexpected("`=` (variables must be initialized)"));
            }
            self.bump();
            let init = self.expr()?;
            return Ok(Stmt {
                span: start.to(init.span),
                kind: StmtKind::VarDecl { name, ty, init },
            });
        }
        if matches!(self.peek(), Some(TokenKind::Ident(_)))
            && self.peek_at(1) == Some(&TokenKind::Assign)
        {
            let target = self.ident("a variable name")?;
            self.bump();
            let value = self.expr()?;
            return Ok(Stmt {
                span: start.to(value.span),
                kind: StmtKind::Assign { target, value },
            });
        }
        let expr = self.expr()?;
        if !matches!(expr.kind, ExprKind::Call { .. } | ExprKind::Builtin { .. }) {
            return Err(syntactic("not a statement", expr.span));
        }
        Ok(Stmt {
            span: expr.span,
            kind: StmtKind::Expr(expr),
        })
    }

    // ---- expressions --------------------------------------------------

    fn expr(&mut self) -> PResult<Expr> {
        self.nest()?;
        let result = self.conditional();
        self.unnest();
        result
    }

    fn conditional(&mut self) -> PResult<Expr> {
        let cond = self.binary(1)?;
        if !self.eat(&TokenKind::Question) {
            return Ok(cond);
        }
        let then_expr = self.expr()?;
        self.expect(TokenKind::Colon)?;
        let else_expr = self.expr()?;
        Ok(Expr {
            span: cond.span.to(else_expr.span),
            kind: ExprKind::Conditional {
                cond: Box::new(cond),
                then_expr: Box::new(then_expr),
                else_expr: Box::new(else_expr),
            },
        })
    }

    fn binary_op(&self) -> Option<BinaryOp> {
        Some(match self.peek()? {
            TokenKind::OrOr => BinaryOp::Or,
            TokenKind::AndAnd => BinaryOp::And,
            TokenKind::EqEq => BinaryOp::Eq,
            TokenKind::NotEq => BinaryOp::Ne,
            TokenKind::Lt => BinaryOp::Lt,
            TokenKind::Le => BinaryOp::Le,
            TokenKind::Gt => BinaryOp::Gt,
            TokenKind::Ge => BinaryOp::Ge,
            TokenKind::Plus => BinaryOp::Add,
            TokenKind::Minus => BinaryOp::Sub,
            TokenKind::Star => BinaryOp::Mul,
            TokenKind::Slash => BinaryOp::Div,
            TokenKind::Percent => BinaryOp::Rem,
            _ => return None,
        })
    }

    fn binary(&mut self, min_prec: u8) -> PResult<Expr> {
        let mut lhs = self.unary()?;
        while let Some(op) = self.binary_op() {
            let prec = op.precedence();
            if prec < min_prec {
                break;
            }
            self.bump();
            self.nest()?;
            let rhs = self.binary(prec + 1);
            self.unnest();
            let rhs = rhs?;
            lhs = Expr {
                span: lhs.span.to(rhs.span),
                kind: ExprKind::Binary {
                    op,
                    lhs: Box::new(lhs),
                    rhs: Box::new(rhs),
                },
            };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> PResult<Expr> {
        let op = match self.peek() {
            Some(TokenKind::Minus) => UnaryOp::Neg,
            Some(TokenKind::Bang) => UnaryOp::Not,
            _ => return self.postfix(),
        };
        let start = self.bump().span;
        self.nest()?;
        let operand = self.unary();
        self.unnest();
        let operand = operand?;
        Ok(Expr {
            span: start.to(operand.span),
            kind: ExprKind::Unary {
                op,
                operand: Box::new(operand),
            },
        })
    }

    fn postfix(&mut self) -> PResult<Expr> {
        let mut expr = self.primary()?;
        while self.eat(&TokenKind::Dot) {
            let name = self.ident("a method name")?;
            let method = BuiltinMethod::from_name(&name.name).ok_or_else(|| {
                syntactic(
                    format!(
                        "unsupported method `{}` (only length() and charAt(int) exist)",
                        name.name
                    ),
                    name.span,
                )
            })?;
            self.expect(TokenKind::LParen)?;
            let args = self.arguments()?;
            let close = self.prev_span();
            if args.len() != method.arity() {
                return Err(syntactic(
                    format!(
                        "`{}` takes {} argument(s) but {} were given",
                        method.name(),
                        method.arity(),
                        args.len()
                    ),
                    name.span.to(close),
                ));
            }
            expr = Expr {
                span: expr.span.to(close),
                kind: ExprKind::Builtin {
                    receiver: Box::new(expr),
                    method,
                    args,
                },
            };
        }
        Ok(expr)
    }

    /// Parses `args )` after an already-consumed `(`.
    fn arguments(&mut self) -> PResult<Vec<Expr>> {
        let mut args = Vec::new();
        if !self.eat(&TokenKind::RParen) {
            loop {
                args.push(self.expr()?);
                if self.eat(&TokenKind::Comma) {
                    continue;
                }
                self.expect(TokenKind::RParen)?;
                break;
            }
        }
        Ok(args)
    }

    fn primary(&mut self) -> PResult<Expr> {
        let Some(tok) = self.tokens.get(self.pos).cloned() else {
            return Err(self.unexpected("an expression"));
        };
        let kind = match tok.kind {
            TokenKind::Int(v) => ExprKind::Int(v),
            TokenKind::Char(c) => ExprKind::Char(c),
            TokenKind::Str(s) => ExprKind::Str(s),
            TokenKind::True => ExprKind::Bool(true),
            TokenKind::False => ExprKind::Bool(false),
            TokenKind::Ident(name) => {
                self.bump();
                if self.eat(&TokenKind::LParen) {
                    let args = self.arguments()?;
                    return Ok(Expr {
                        span: tok.span.to(self.prev_span()),
                        kind: ExprKind::Call {
                            callee: Ident {
                                name,
                                span: tok.span,
                            },
                            args,
                        },
                    });
                }
                return Ok(Expr {
                    kind: ExprKind::Var(name),
                    span: tok.span,
                });
            }
            TokenKind::LParen => {
                self.bump();
                let mut inner = self.expr()?;
                let close = self.expect(TokenKind::RParen)?;
                // parenthesized expressions keep the parentheses in their span
                inner.span = tok.span.to(close);
                return Ok(inner);
            }
            _ => return Err(self.unexpected("an expression")),
        };
        self.bump();
        Ok(Expr {
            kind,
            span: tok.span,
        })
    }
}

/// Parses a whole source file.
pub fn parse_program(source: &str) -> Result<Program, Vec<ParseError>> {
    let tokens = tokenize(source).map_err(|e| vec![e])?;
    let mut parser = Parser::new(tokens, source);
    let functions = parser.program();
    if parser.errors.is_empty() {
        Ok(Program {
            functions,
            source: source.to_owned(),
        })
    } else {
        Err(parser.errors)
    }
}

/// Parses a standalone expression (no free-variable or shape restrictions).
pub fn parse_expression(text: &str) -> Result<Expr, ParseError> {
    let tokens = tokenize(text)?;
    let mut parser = Parser::new(tokens, text);
    let expr = parser.expr()?;
    if parser.peek().is_some() {
        return Err(parser.unexpected("end of expression"));
    }
    Ok(expr)
}

/// Parses a teacher-supplied entry call such as `smallest("ABBA")`.
///
/// The expression must be a call to a user function whose arguments are all
/// literals.
pub fn parse_entry_expression(text: &str) -> Result<Expr, ParseError> {
    let expr = parse_expression(text)?;
    let ExprKind::Call { args, .. } = &expr.kind else {
        return Err(syntactic(
            "an entry expression must be a function call",
            expr.span,
        ));
    };
    if let Some(bad) = args.iter().find(|a| !a.is_literal()) {
        return Err(syntactic(
            "entry call arguments must be literals",
            bad.span,
        ));
    }
    Ok(expr)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALLEST: &str = include_str!("../../fixtures/smallest.mjq");

    #[test]
    fn smallest_program_shape() {
        let program = parse_program(SMALLEST).unwrap();
        let names: Vec<_> = program
            .functions
            .iter()
            .map(|f| f.name.name.as_str())
            .collect();
        assert_eq!(names, ["smallest", "smallestFrom"]);
        let params: Vec<_> = program.functions[1]
            .params
            .iter()
            .map(|p| p.name.name.as_str())
            .collect();
        assert_eq!(params, ["word", "index"]);
        assert_eq!(program.functions[1].return_type, TypeName::Char);
        assert_eq!(program.functions[1].header_line(), 5);
    }

    #[test]
    fn zero_functions() {
        let program = parse_program("  // nothing here\n").unwrap();
        assert!(program.functions.is_empty());
    }

    #[test]
    fn missing_return_expression() {
        let errs = parse_program("static int f() { return }").unwrap_err();
        assert_eq!(errs.len(), 1);
        assert_eq!(errs[0].kind, ParseErrorKind::Syntactic);
        assert_eq!(errs[0].span, SourceSpan::point(1, 25));
    }

    #[test]
    fn recovers_to_report_several_errors() {
        let src = "int f() {\n  int x = ;\n  x = 1 +;\n  return x;\n}\nint g( {\n}\nint h() { return 1 }";
        let errs = parse_program(src).unwrap_err();
        let lines: Vec<_> = errs.iter().map(|e| e.span.start_line).collect();
        assert_eq!(lines, [2, 3, 6, 8]);
    }

    #[test]
    fn rejects_non_statements_and_unknown_methods() {
        assert!(parse_program("void f() { 1 + 2; }").is_err());
        let errs = parse_program("int f(String s) { return s.size(); }").unwrap_err();
        assert!(errs[0].message.contains("unsupported method"));
        assert!(parse_program("int f(String s) { return s.charAt(); }").is_err());
        assert!(parse_program("int f() { int x; return 0; }").is_err());
    }

    #[test]
    fn duplicates_are_errors() {
        assert!(parse_program("int f() { return 0; } int f() { return 1; }").is_err());
        assert!(parse_program("int f(int a, int a) { return a; }").is_err());
    }

    #[test]
    fn loops_numbered_in_source_order() {
        let src = "void f() { while (true) { for (;;) {} } for (int i = 0; i < 2; i = i + 1) {} }";
        let program = parse_program(src).unwrap();
        let body = &program.functions[0].body.stmts;
        let StmtKind::While { id, body: inner, .. } = &body[0].kind else {
            panic!()
        };
        assert_eq!(*id, LoopId(0));
        let StmtKind::Block(b) = &inner.kind else { panic!() };
        assert_eq!(b.stmts[0].loop_id(), Some(LoopId(1)));
        assert_eq!(body[1].loop_id(), Some(LoopId(2)));
    }

    #[test]
    fn precedence_and_rendering() {
        let e = parse_expression("a + b * c - -d < 3 == !e && f || g ? x : y").unwrap();
        assert_eq!(e.to_string(), "a + b * c - -d < 3 == !e && f || g ? x : y");
        let e = parse_expression("(a + b) * (c - (d - e))").unwrap();
        assert_eq!(e.to_string(), "(a + b) * (c - (d - e))");
        assert_eq!(e.span, SourceSpan::new(1, 1, 1, 23));
        // well-formed syntax; the type error surfaces at run time
        let e = parse_expression("s.charAt(i + 1).length()").unwrap();
        assert_eq!(e.to_string(), "s.charAt(i + 1).length()");
    }

    #[test]
    fn entry_expressions() {
        let e = parse_entry_expression("smallest(\"ABBA\")").unwrap();
        let ExprKind::Call { callee, args } = &e.kind else { panic!() };
        assert_eq!(callee.name, "smallest");
        assert_eq!(args[0].kind, ExprKind::Str("ABBA".into()));

        let e = parse_entry_expression("smallestFrom(\"ACDC\", 0)").unwrap();
        assert_eq!(e.to_string(), "smallestFrom(\"ACDC\", 0)");
        let ExprKind::Call { args, .. } = &e.kind else { panic!() };
        assert_eq!(args[1].kind, ExprKind::Int(0));

        assert!(parse_entry_expression("f(-3, 'x', true)").is_ok());
        let err = parse_entry_expression("1 + 2").unwrap_err();
        assert!(err.message.contains("must be a function call"));
        assert!(parse_entry_expression("f(x)").is_err());
        assert!(parse_entry_expression("f(1 + 2)").is_err());
        assert!(parse_entry_expression("f(1) g").is_err());
    }

    #[test]
    fn deep_nesting_is_rejected_not_overflowed() {
        let src = format!("int f() {{ return {}1{}; }}", "(".repeat(5000), ")".repeat(5000));
        let errs = parse_program(&src).unwrap_err();
        assert!(errs[0].message.contains("nesting"));
    }
}
