//! Recursive-descent parser producing a [`Program`].
//!
//! Directive comments are attached, unparsed, to the statement that follows
//! them. A directive with no following statement is reported as
//! [`CompileError::DanglingDirective`]; parsing continues past it so every
//! dangling directive in a file is reported.

use crate::diag::{CompileError, Diagnostic, Diagnostics};
use crate::frontend::ast::*;
use crate::frontend::lexer::{Token, TokenKind, DIRECTIVE_SENTINEL};

pub fn parse(tokens: &[Token]) -> Result<Program, Diagnostics> {
    if tokens.last().map(|t| t.kind) != Some(TokenKind::Eof) {
        let pos = tokens.last().map(Token::pos).unwrap_or(Pos::new(1, 1));
        return Err(Diagnostic::new(
            pos,
            CompileError::Parse("token stream must end with end-of-file".into()),
        )
        .into());
    }
    let mut p = Parser {
        tokens,
        at: 0,
        dangling: Vec::new(),
    };
    match p.program() {
        Ok(program) if p.dangling.is_empty() => Ok(program),
        Ok(_) => Err(Diagnostics(p.dangling).sorted()),
        Err(e) => {
            let mut all = p.dangling;
            all.push(e);
            Err(Diagnostics(all).sorted())
        }
    }
}

struct Parser<'t> {
    tokens: &'t [Token],
    at: usize,
    dangling: Vec<Diagnostic>,
}

type PResult<T> = Result<T, Diagnostic>;

fn describe(t: &Token) -> String {
    match t.kind {
        TokenKind::Eof => "end of file".to_string(),
        TokenKind::DirectiveComment => "directive comment".to_string(),
        _ => format!("`{}`", t.text),
    }
}

impl<'t> Parser<'t> {
    fn peek(&self) -> &'t Token {
        &self.tokens[self.at]
    }

    fn peek_nth(&self, n: usize) -> &'t Token {
        let i = (self.at + n).min(self.tokens.len() - 1);
        &self.tokens[i]
    }

    fn advance(&mut self) -> &'t Token {
        let t = &self.tokens[self.at];
        if t.kind != TokenKind::Eof {
            self.at += 1;
        }
        t
    }

    fn check(&self, kind: TokenKind, text: &str) -> bool {
        self.peek().is(kind, text)
    }

    fn check_sym(&self, text: &str) -> bool {
        let t = self.peek();
        matches!(t.kind, TokenKind::Operator | TokenKind::Punctuation) && t.text == text
    }

    fn eat_sym(&mut self, text: &str) -> bool {
        if self.check_sym(text) {
            self.advance();
            true
        } else {
            false
        }
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.check(TokenKind::Keyword, kw) {
            self.advance();
            true
        } else {
            false
        }
    }

    fn error(&self, expected: &str) -> Diagnostic {
        let t = self.peek();
        Diagnostic::new(
            t.pos(),
            CompileError::Parse(format!("expected {expected}, found {}", describe(t))),
        )
    }

    fn expect_sym(&mut self, text: &str) -> PResult<&'t Token> {
        if self.check_sym(text) {
            Ok(self.advance())
        } else {
            Err(self.error(&format!("`{text}`")))
        }
    }

    fn expect_kw(&mut self, kw: &str) -> PResult<&'t Token> {
        if self.check(TokenKind::Keyword, kw) {
            Ok(self.advance())
        } else {
            Err(self.error(&format!("`{kw}`")))
        }
    }

    fn expect_ident(&mut self) -> PResult<&'t Token> {
        if self.peek().kind == TokenKind::Identifier {
            Ok(self.advance())
        } else {
            Err(self.error("identifier"))
        }
    }

    /// Consumes directive comments, returning them in order.
    fn directives(&mut self) -> Vec<RawDirective> {
        let mut out = Vec::new();
        while self.peek().kind == TokenKind::DirectiveComment {
            let t = self.advance();
            out.push(RawDirective {
                text: t.text[DIRECTIVE_SENTINEL.len()..].trim().to_string(),
                pos: t.pos(),
            });
        }
        out
    }

    fn report_dangling(&mut self, pending: Vec<RawDirective>) {
        for d in pending {
            self.dangling
                .push(Diagnostic::new(d.pos, CompileError::DanglingDirective(d.text)));
        }
    }

    fn program(&mut self) -> PResult<Program> {
        let mut program = Program::default();
        loop {
            let pending = self.directives();
            if !pending.is_empty() {
                self.report_dangling(pending);
            }
            let t = self.peek();
            match t.kind {
                TokenKind::Eof => break,
                TokenKind::Keyword if t.text == "fn" => program.functions.push(self.function()?),
                TokenKind::Keyword if t.text == "extern" => program.externs.push(self.extern_decl()?),
                _ => return Err(self.error("`fn` or `extern`")),
            }
        }
        Ok(program)
    }

    fn signature(&mut self) -> PResult<(String, Vec<Param>, Option<Type>)> {
        let name = self.expect_ident()?.text.clone();
        self.expect_sym("(")?;
        let mut params = Vec::new();
        if !self.check_sym(")") {
            loop {
                let pname = self.expect_ident()?.text.clone();
                self.expect_sym(":")?;
                let ty = self.param_type()?;
                params.push(Param { name: pname, ty });
                if !self.eat_sym(",") {
                    break;
                }
            }
        }
        self.expect_sym(")")?;
        let ret = if self.eat_sym("->") {
            Some(self.scalar_type()?)
        } else {
            None
        };
        Ok((name, params, ret))
    }

    fn function(&mut self) -> PResult<FunctionDecl> {
        let pos = self.expect_kw("fn")?.pos();
        let (name, params, ret) = self.signature()?;
        let body = self.block()?;
        Ok(FunctionDecl {
            name,
            params,
            ret,
            body,
            pos,
        })
    }

    fn extern_decl(&mut self) -> PResult<ExternDecl> {
        let pos = self.expect_kw("extern")?.pos();
        let abi = match self.peek() {
            t if t.is(TokenKind::Identifier, "fortran") => {
                self.advance();
                Abi::Fortran
            }
            t if t.is(TokenKind::Identifier, "native") => {
                self.advance();
                Abi::Native
            }
            _ => Abi::Native,
        };
        self.expect_kw("fn")?;
        let (name, params, ret) = self.signature()?;
        self.expect_sym(";")?;
        Ok(ExternDecl {
            name,
            abi,
            params,
            ret,
            pos,
        })
    }

    fn scalar_type(&mut self) -> PResult<Type> {
        let t = self.peek();
        let ty = match (t.kind, t.text.as_str()) {
            (TokenKind::Keyword, "int") => Type::Int,
            (TokenKind::Keyword, "float") => Type::Float,
            (TokenKind::Keyword, "bool") => Type::Bool,
            _ => return Err(self.error("type")),
        };
        self.advance();
        Ok(ty)
    }

    fn elem_type(&mut self) -> PResult<ElemType> {
        if self.eat_kw("int") {
            Ok(ElemType::Int)
        } else if self.eat_kw("float") {
            Ok(ElemType::Float)
        } else {
            Err(self.error("`int` or `float` element type"))
        }
    }

    /// `int`, `float`, `bool` or `[elem]`.
    fn param_type(&mut self) -> PResult<Type> {
        if self.eat_sym("[") {
            let elem = self.elem_type()?;
            self.expect_sym("]")?;
            Ok(Type::Array(elem))
        } else {
            self.scalar_type()
        }
    }

    fn block(&mut self) -> PResult<Block> {
        self.expect_sym("{")?;
        let mut stmts = Vec::new();
        loop {
            let pending = self.directives();
            if self.check_sym("}") || self.peek().kind == TokenKind::Eof {
                self.report_dangling(pending);
                break;
            }
            let mut stmt = self.statement()?;
            stmt.directives = pending;
            stmts.push(stmt);
        }
        self.expect_sym("}")?;
        Ok(Block { stmts })
    }

    fn statement(&mut self) -> PResult<Stmt> {
        let t = self.peek();
        let pos = t.pos();
        let kind = match (t.kind, t.text.as_str()) {
            (TokenKind::Keyword, "let") => self.let_stmt()?,
            (TokenKind::Keyword, "if") => self.if_stmt()?,
            (TokenKind::Keyword, "while") => {
                self.advance();
                let cond = self.expr()?;
                let body = self.block()?;
                StmtKind::While { cond, body }
            }
            (TokenKind::Keyword, "for") => self.for_stmt()?,
            (TokenKind::Keyword, "return") => {
                self.advance();
                let value = if self.check_sym(";") { None } else { Some(self.expr()?) };
                self.expect_sym(";")?;
                StmtKind::Return(value)
            }
            (TokenKind::Keyword, "print") => {
                self.advance();
                let args = self.call_args()?;
                self.expect_sym(";")?;
                StmtKind::Print(args)
            }
            (TokenKind::Punctuation, "{") => StmtKind::Block(self.block()?),
            (TokenKind::Identifier, _) => {
                let name = self.advance().text.clone();
                if self.check_sym("(") {
                    let args = self.call_args()?;
                    self.expect_sym(";")?;
                    StmtKind::Call { name, args }
                } else if self.eat_sym("[") {
                    let index = self.expr()?;
                    self.expect_sym("]")?;
                    self.expect_sym("=")?;
                    let value = self.expr()?;
                    self.expect_sym(";")?;
                    StmtKind::IndexAssign { name, index, value }
                } else if self.eat_sym("=") {
                    let value = self.expr()?;
                    self.expect_sym(";")?;
                    StmtKind::Assign { name, value }
                } else {
                    return Err(self.error("`=`, `[` or `(`"));
                }
            }
            _ => return Err(self.error("statement")),
        };
        Ok(Stmt::new(kind, pos))
    }

    fn let_stmt(&mut self) -> PResult<StmtKind> {
        self.expect_kw("let")?;
        let name = self.expect_ident()?.text.clone();
        self.expect_sym(":")?;
        if self.eat_sym("[") {
            let elem = self.elem_type()?;
            self.expect_sym(";")?;
            let len = self.expr()?;
            self.expect_sym("]")?;
            self.expect_sym(";")?;
            return Ok(StmtKind::Let {
                name,
                ty: Type::Array(elem),
                len: Some(len),
                init: None,
            });
        }
        let ty = self.scalar_type()?;
        let init = if self.eat_sym("=") { Some(self.expr()?) } else { None };
        self.expect_sym(";")?;
        Ok(StmtKind::Let {
            name,
            ty,
            len: None,
            init,
        })
    }

    fn if_stmt(&mut self) -> PResult<StmtKind> {
        self.expect_kw("if")?;
        let cond = self.expr()?;
        let then_block = self.block()?;
        let else_block = if self.eat_kw("else") {
            if self.check(TokenKind::Keyword, "if") {
                let pos = self.peek().pos();
                let nested = self.if_stmt()?;
                Some(Block::new(vec![Stmt::new(nested, pos)]))
            } else {
                Some(self.block()?)
            }
        } else {
            None
        };
        Ok(StmtKind::If {
            cond,
            then_block,
            else_block,
        })
    }

    fn for_stmt(&mut self) -> PResult<StmtKind> {
        self.expect_kw("for")?;
        let var = self.expect_ident()?.text.clone();
        self.expect_kw("in")?;
        let lower = self.expr()?;
        self.expect_sym("..")?;
        let upper = self.expr()?;
        let step = if self.eat_kw("step") { Some(self.expr()?) } else { None };
        let body = self.block()?;
        Ok(StmtKind::For {
            var,
            lower,
            upper,
            step,
            body,
        })
    }

    fn call_args(&mut self) -> PResult<Vec<Expr>> {
        self.expect_sym("(")?;
        let mut args = Vec::new();
        if !self.check_sym(")") {
            loop {
                args.push(self.expr()?);
                if !self.eat_sym(",") {
                    break;
                }
            }
        }
        self.expect_sym(")")?;
        Ok(args)
    }

    pub fn expr(&mut self) -> PResult<Expr> {
        self.binary(1)
    }

    fn binary_op(&self) -> Option<BinaryOp> {
        let t = self.peek();
        if t.kind != TokenKind::Operator {
            return None;
        }
        Some(match t.text.as_str() {
            "+" => BinaryOp::Add,
            "-" => BinaryOp::Sub,
            "*" => BinaryOp::Mul,
            "/" => BinaryOp::Div,
            "%" => BinaryOp::Rem,
            "==" => BinaryOp::Eq,
            "!=" => BinaryOp::Ne,
            "<" => BinaryOp::Lt,
            "<=" => BinaryOp::Le,
            ">" => BinaryOp::Gt,
            ">=" => BinaryOp::Ge,
            "&&" => BinaryOp::And,
            "||" => BinaryOp::Or,
            _ => return None,
        })
    }

    /// Precedence climbing; all binary operators are left-associative.
    fn binary(&mut self, min_prec: u8) -> PResult<Expr> {
        let mut lhs = self.unary()?;
        while let Some(op) = self.binary_op() {
            if op.precedence() < min_prec {
                break;
            }
            let pos = self.advance().pos();
            let rhs = self.binary(op.precedence() + 1)?;
            lhs = Expr::new(
                ExprKind::Binary {
                    op,
                    lhs: Box::new(lhs),
                    rhs: Box::new(rhs),
                },
                pos,
            );
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> PResult<Expr> {
        let pos = self.peek().pos();
        let op = if self.eat_sym("-") {
            UnaryOp::Neg
        } else if self.eat_sym("!") {
            UnaryOp::Not
        } else {
            return self.primary();
        };
        let operand = self.unary()?;
        Ok(Expr::new(
            ExprKind::Unary {
                op,
                operand: Box::new(operand),
            },
            pos,
        ))
    }

    fn primary(&mut self) -> PResult<Expr> {
        let t = self.peek();
        let pos = t.pos();
        let kind = match t.kind {
            TokenKind::IntLiteral => {
                self.advance();
                let v = t
                    .text
                    .parse()
                    .map_err(|_| Diagnostic::new(pos, CompileError::Parse("integer literal out of range".into())))?;
                ExprKind::Int(v)
            }
            TokenKind::FloatLiteral => {
                self.advance();
                let v = t
                    .text
                    .parse()
                    .map_err(|_| Diagnostic::new(pos, CompileError::Parse("invalid float literal".into())))?;
                ExprKind::Float(v)
            }
            TokenKind::Keyword if t.text == "true" || t.text == "false" => {
                self.advance();
                ExprKind::Bool(t.text == "true")
            }
            TokenKind::Keyword
                if (t.text == "int" || t.text == "float") && self.peek_nth(1).is(TokenKind::Punctuation, "(") =>
            {
                self.advance();
                let to = if t.text == "int" { Type::Int } else { Type::Float };
                self.expect_sym("(")?;
                let operand = self.expr()?;
                self.expect_sym(")")?;
                ExprKind::Cast {
                    to,
                    operand: Box::new(operand),
                }
            }
            TokenKind::Identifier => {
                let name = self.advance().text.clone();
                if self.check_sym("(") {
                    let args = self.call_args()?;
                    ExprKind::Call { name, args }
                } else if self.eat_sym("[") {
                    let index = self.expr()?;
                    self.expect_sym("]")?;
                    ExprKind::Index {
                        name,
                        index: Box::new(index),
                    }
                } else {
                    ExprKind::Var(name)
                }
            }
            TokenKind::Punctuation if t.text == "(" => {
                self.advance();
                let inner = self.expr()?;
                self.expect_sym(")")?;
                return Ok(inner);
            }
            _ => return Err(self.error("expression")),
        };
        Ok(Expr::new(kind, pos))
    }
}
