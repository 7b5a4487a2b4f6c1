//! Front end for MiniLang, a small indentation-structured language:
//!
//! ```text
//! program := stmt*
//! stmt    := assign | if | while | exprstmt
//! assign  := IDENT "=" expr
//! if      := "if" expr ":" block ["else" ":" block]
//! while   := "while" expr ":" block
//! expr    := term (("+"|"-"|"*"|"/"|">"|"<"|"==") term)*
//! term    := IDENT | INT | IDENT "(" [expr ("," expr)*] ")"
//! ```
//!
//! Blocks are indented by two spaces, or a single simple statement on the
//! same line after the colon. Binary operators chain left-associatively
//! without precedence. `#` starts a comment.

use super::ast::{Ast, AstBuilder};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Int(String),
    Op(&'static str),
    Assign,
    Colon,
    LParen,
    RParen,
    Comma,
    If,
    Else,
    While,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) | Tok::Int(s) => format!("`{s}`"),
            Tok::Op(o) => format!("`{o}`"),
            Tok::Assign => "`=`".into(),
            Tok::Colon => "`:`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::Comma => "`,`".into(),
            Tok::If => "`if`".into(),
            Tok::Else => "`else`".into(),
            Tok::While => "`while`".into(),
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    col: usize,
}

#[derive(Debug)]
struct Line {
    no: usize,
    indent: usize,
    tokens: Vec<Token>,
    end_col: usize,
}

#[derive(Debug)]
enum Expr {
    Name(String),
    Int(String),
    Call(String, Vec<Expr>),
    Binary(Box<Expr>, &'static str, Box<Expr>),
}

#[derive(Debug)]
enum Stmt {
    Assign(String, Expr),
    If(Expr, Vec<Stmt>, Option<Vec<Stmt>>),
    While(Expr, Vec<Stmt>),
    Expr(Expr),
}

/// Kind name used for a binary operator node.
pub fn operator_kind(op: &str) -> &'static str {
    match op {
        "+" => "Add",
        "-" => "Sub",
        "*" => "Mult",
        "/" => "Div",
        ">" => "Gt",
        "<" => "Lt",
        "==" => "Eq",
        _ => "BinOp",
    }
}

fn syntax(line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Syntax {
        line,
        column,
        message: message.into(),
    }
}

fn lex_line(no: usize, text: &str) -> Result<Option<Line>> {
    let chars: Vec<char> = text.chars().collect();
    let mut indent = 0;
    while indent < chars.len() && chars[indent] == ' ' {
        indent += 1;
    }
    if indent < chars.len() && chars[indent] == '\t' {
        return Err(syntax(no, indent + 1, "tabs are not allowed in indentation"));
    }
    let mut tokens = Vec::new();
    let mut i = indent;
    while i < chars.len() {
        let c = chars[i];
        let col = i + 1;
        if c == '#' {
            break;
        }
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let tok = if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            let word: String = chars[start..i].iter().collect();
            tokens.push(Token {
                tok: match word.as_str() {
                    "if" => Tok::If,
                    "else" => Tok::Else,
                    "while" => Tok::While,
                    _ => Tok::Ident(word),
                },
                col,
            });
            continue;
        } else if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            if i < chars.len() && (chars[i].is_ascii_alphabetic() || chars[i] == '_') {
                return Err(syntax(no, i + 1, "identifier cannot start with a digit"));
            }
            tokens.push(Token {
                tok: Tok::Int(chars[start..i].iter().collect()),
                col,
            });
            continue;
        } else if c == '=' && chars.get(i + 1) == Some(&'=') {
            i += 1;
            Tok::Op("==")
        } else {
            match c {
                '=' => Tok::Assign,
                '+' => Tok::Op("+"),
                '-' => Tok::Op("-"),
                '*' => Tok::Op("*"),
                '/' => Tok::Op("/"),
                '>' => Tok::Op(">"),
                '<' => Tok::Op("<"),
                ':' => Tok::Colon,
                '(' => Tok::LParen,
                ')' => Tok::RParen,
                ',' => Tok::Comma,
                other => return Err(syntax(no, col, format!("unexpected character `{other}`"))),
            }
        };
        tokens.push(Token { tok, col });
        i += 1;
    }
    if tokens.is_empty() {
        return Ok(None);
    }
    if indent % 2 != 0 {
        return Err(syntax(no, 1, "indentation must be a multiple of two spaces"));
    }
    Ok(Some(Line {
        no,
        indent,
        tokens,
        end_col: chars.len() + 1,
    }))
}

struct Cursor<'a> {
    line: &'a Line,
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn peek(&self) -> Option<&'a Tok> {
        self.line.tokens.get(self.pos).map(|t| &t.tok)
    }

    fn peek_at(&self, k: usize) -> Option<&'a Tok> {
        self.line.tokens.get(self.pos + k).map(|t| &t.tok)
    }

    fn col(&self) -> usize {
        self.line
            .tokens
            .get(self.pos)
            .map_or(self.line.end_col, |t| t.col)
    }

    fn error(&self, expected: &str) -> Error {
        let found = self
            .peek()
            .map_or_else(|| "end of line".to_string(), Tok::describe);
        syntax(self.line.no, self.col(), format!("expected {expected}, found {found}"))
    }

    fn bump(&mut self) -> Option<&'a Tok> {
        let t = self.peek();
        self.pos += 1;
        t
    }

    fn expect(&mut self, tok: &Tok, what: &str) -> Result<()> {
        if self.peek() == Some(tok) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.error(what))
        }
    }

    fn at_end(&self) -> bool {
        self.pos >= self.line.tokens.len()
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut left = self.term()?;
        while let Some(Tok::Op(op)) = self.peek() {
            self.pos += 1;
            let right = self.term()?;
            left = Expr::Binary(Box::new(left), op, Box::new(right));
        }
        Ok(left)
    }

    fn term(&mut self) -> Result<Expr> {
        match self.peek() {
            Some(Tok::Int(v)) => {
                self.pos += 1;
                Ok(Expr::Int(v.clone()))
            }
            Some(Tok::Ident(name)) => {
                self.pos += 1;
                if self.peek() != Some(&Tok::LParen) {
                    return Ok(Expr::Name(name.clone()));
                }
                self.pos += 1;
                let mut args = Vec::new();
                if self.peek() != Some(&Tok::RParen) {
                    loop {
                        args.push(self.expr()?);
                        match self.peek() {
                            Some(Tok::Comma) => self.pos += 1,
                            Some(Tok::RParen) => break,
                            _ => return Err(self.error("`,` or `)`")),
                        }
                    }
                }
                self.expect(&Tok::RParen, "`)`")?;
                Ok(Expr::Call(name.clone(), args))
            }
            _ => Err(self.error("an expression")),
        }
    }

    /// Assignment or expression statement.
    fn simple(&mut self) -> Result<Stmt> {
        match (self.peek(), self.peek_at(1)) {
            (Some(Tok::Ident(name)), Some(Tok::Assign)) => {
                self.pos += 2;
                Ok(Stmt::Assign(name.clone(), self.expr()?))
            }
            (Some(Tok::If | Tok::While | Tok::Else), _) => {
                Err(self.error("a simple statement after `:`"))
            }
            _ => Ok(Stmt::Expr(self.expr()?)),
        }
    }

    fn finish(&self) -> Result<()> {
        if self.at_end() {
            Ok(())
        } else {
            Err(self.error("end of line"))
        }
    }
}

struct Parser<'a> {
    lines: &'a [Line],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn block(&mut self, indent: usize) -> Result<Vec<Stmt>> {
        let mut stmts = Vec::new();
        while let Some(line) = self.lines.get(self.pos) {
            if line.indent < indent {
                break;
            }
            if line.indent > indent {
                return Err(syntax(line.no, 1, "unexpected indent"));
            }
            stmts.push(self.statement()?);
        }
        Ok(stmts)
    }

    /// Body after a `:`; inline when tokens remain on the line, otherwise an
    /// indented block on the following lines.
    fn body(&mut self, cur: &mut Cursor<'a>, indent: usize) -> Result<Vec<Stmt>> {
        if !cur.at_end() {
            let stmt = cur.simple()?;
            cur.finish()?;
            self.pos += 1;
            return Ok(vec![stmt]);
        }
        let header = cur.line.no;
        self.pos += 1;
        let stmts = self.block(indent + 2)?;
        if stmts.is_empty() {
            let (line, col) = self
                .lines
                .get(self.pos)
                .map_or((header + 1, 1), |l| (l.no, l.indent + 1));
            return Err(syntax(line, col, "expected an indented block"));
        }
        Ok(stmts)
    }

    fn statement(&mut self) -> Result<Stmt> {
        let line = &self.lines[self.pos];
        let mut cur = Cursor { line, pos: 0 };
        match cur.peek() {
            Some(Tok::If) => {
                cur.bump();
                let cond = cur.expr()?;
                cur.expect(&Tok::Colon, "`:`")?;
                let then = self.body(&mut cur, line.indent)?;
                let mut otherwise = None;
                if let Some(next) = self.lines.get(self.pos) {
                    if next.indent == line.indent && next.tokens[0].tok == Tok::Else {
                        let mut ec = Cursor { line: next, pos: 1 };
                        ec.expect(&Tok::Colon, "`:`")?;
                        otherwise = Some(self.body(&mut ec, next.indent)?);
                    }
                }
                Ok(Stmt::If(cond, then, otherwise))
            }
            Some(Tok::While) => {
                cur.bump();
                let cond = cur.expr()?;
                cur.expect(&Tok::Colon, "`:`")?;
                let body = self.body(&mut cur, line.indent)?;
                Ok(Stmt::While(cond, body))
            }
            Some(Tok::Else) => Err(syntax(line.no, cur.col(), "`else` without matching `if`")),
            _ => {
                let stmt = cur.simple()?;
                cur.finish()?;
                self.pos += 1;
                Ok(stmt)
            }
        }
    }
}

fn lower_expr(b: &mut AstBuilder, e: &Expr) -> usize {
    match e {
        Expr::Name(n) => b.terminal("Identifier", n),
        Expr::Int(v) => b.terminal("IntLit", v),
        Expr::Call(f, args) => {
            let id = b.open("Call");
            let name = b.terminal("FuncName", f);
            b.attach(id, name);
            for a in args {
                let c = lower_expr(b, a);
                b.attach(id, c);
            }
            id
        }
        Expr::Binary(l, op, r) => {
            let id = b.open(operator_kind(op));
            let lc = lower_expr(b, l);
            b.attach(id, lc);
            let rc = lower_expr(b, r);
            b.attach(id, rc);
            id
        }
    }
}

fn lower_block(b: &mut AstBuilder, stmts: &[Stmt]) -> usize {
    let id = b.open("Block");
    for s in stmts {
        let c = lower_stmt(b, s);
        b.attach(id, c);
    }
    id
}

fn lower_stmt(b: &mut AstBuilder, s: &Stmt) -> usize {
    match s {
        Stmt::Assign(target, value) => {
            let id = b.open("Assign");
            let t = b.terminal("Identifier", target);
            b.attach(id, t);
            let v = lower_expr(b, value);
            b.attach(id, v);
            id
        }
        Stmt::If(cond, then, otherwise) => {
            let id = b.open("If");
            let c = lower_expr(b, cond);
            b.attach(id, c);
            let t = lower_block(b, then);
            b.attach(id, t);
            if let Some(o) = otherwise {
                let e = lower_block(b, o);
                b.attach(id, e);
            }
            id
        }
        Stmt::While(cond, body) => {
            let id = b.open("While");
            let c = lower_expr(b, cond);
            b.attach(id, c);
            let bl = lower_block(b, body);
            b.attach(id, bl);
            id
        }
        Stmt::Expr(e) => {
            let id = b.open("Expr");
            let c = lower_expr(b, e);
            b.attach(id, c);
            id
        }
    }
}

/// Parses MiniLang source into an AST. A program of exactly one statement
/// is rooted at that statement; longer programs are rooted at `Module`.
pub fn parse_minilang(source: &str) -> Result<Ast> {
    let mut lines = Vec::new();
    for (i, text) in source.lines().enumerate() {
        if let Some(line) = lex_line(i + 1, text.trim_end_matches('\r'))? {
            lines.push(line);
        }
    }
    if lines.is_empty() {
        return Err(Error::EmptyInput);
    }
    let first_indent = lines[0].indent;
    if first_indent != 0 {
        return Err(syntax(lines[0].no, 1, "unexpected indent"));
    }
    let mut parser = Parser {
        lines: &lines,
        pos: 0,
    };
    let stmts = parser.block(0)?;
    if let Some(line) = parser.lines.get(parser.pos) {
        return Err(syntax(line.no, 1, "unexpected indent"));
    }

    let mut b = AstBuilder::default();
    if let [only] = stmts.as_slice() {
        lower_stmt(&mut b, only);
    } else {
        let root = b.open("Module");
        for s in &stmts {
            let c = lower_stmt(&mut b, s);
            b.attach(root, c);
        }
    }
    b.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_assignment() {
        let ast = parse_minilang("x = 1").unwrap();
        assert_eq!(ast.to_sexpr(), r#"Assign(Identifier "x", IntLit "1")"#);
        assert_eq!(ast.terminals().len(), 2);
    }

    #[test]
    fn inline_if_body() {
        let ast = parse_minilang("if x: x = x + y").unwrap();
        assert_eq!(
            ast.to_sexpr(),
            r#"If(Identifier "x", Block(Assign(Identifier "x", Add(Identifier "x", Identifier "y"))))"#
        );
    }

    #[test]
    fn double_equals_is_reported_at_second_sign() {
        match parse_minilang("x = = 1") {
            Err(Error::Syntax { line, column, .. }) => assert_eq!((line, column), (1, 5)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn empty_source_is_rejected() {
        assert!(matches!(parse_minilang(""), Err(Error::EmptyInput)));
        assert!(matches!(parse_minilang("\n  \n# note\n"), Err(Error::EmptyInput)));
    }

    #[test]
    fn blocks_else_and_while() {
        let src = "while i < n:\n  i = i + 1\n  if i > m:\n    m = i\n  else:\n    log(i, m)\ndone(m)\n";
        let ast = parse_minilang(src).unwrap();
        assert_eq!(
            ast.to_sexpr(),
            concat!(
                r#"Module(While(Lt(Identifier "i", Identifier "n"), Block(Assign(Identifier "i", Add(Identifier "i", IntLit "1")), "#,
                r#"If(Gt(Identifier "i", Identifier "m"), Block(Assign(Identifier "m", Identifier "i")), Block(Expr(Call(FuncName "log", Identifier "i", Identifier "m")))))), "#,
                r#"Expr(Call(FuncName "done", Identifier "m")))"#
            )
        );
        let labels: Vec<_> = ast
            .terminals()
            .iter()
            .map(|&t| ast.node(t).label.clone())
            .collect();
        assert_eq!(labels, ["i", "n", "i", "i", "1", "i", "m", "m", "i", "log", "i", "m", "done", "m"]);
    }

    #[test]
    fn operators_chain_left_to_right() {
        let ast = parse_minilang("r = a - b * c").unwrap();
        assert_eq!(
            ast.to_sexpr(),
            r#"Assign(Identifier "r", Mult(Sub(Identifier "a", Identifier "b"), Identifier "c"))"#
        );
    }

    #[test]
    fn structural_errors() {
        for (src, line) in [
            ("if x:\nx = 1", 2),
            ("x = 1\n  y = 2", 2),
            ("else:\n  x = 1", 1),
            ("f(a,", 1),
            ("x = 1 2", 1),
            ("x = 3 $ 4", 1),
            (" x = 1", 1),
        ] {
            match parse_minilang(src) {
                Err(Error::Syntax { line: l, .. }) => assert_eq!(l, line, "{src:?}"),
                other => panic!("{src:?}: {other:?}"),
            }
        }
    }
}
