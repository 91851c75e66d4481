//! Canonical S-expression text format for terms.
//!
//! | term                | text                     |
//! |---------------------|--------------------------|
//! | generator           | `(gen)`                  |
//! | constants           | `ok bot no accept reject auth lo hi unlinkable select`, `(mm K)` |
//! | data / scalar name  | `(name ID)` / `(scalar ID)` |
//! | variable / alias    | `(var N)`                |
//! | product             | `(mult F1 F2 ...)`       |
//! | scalar mult         | `(smult S P)`            |
//! | hash                | `(hash M)`               |
//! | encryption          | `(enc BODY KEY)`         |
//! | tuple               | `(tuple M1 M2 ...)`      |
//! | keys and signatures | `(pk K) (sig K M) (pkv K) (sigv K M)` |
//! | destructors         | `(check V S) (checkv V S) (proj I M) (dec K C)` |
//!
//! Identifiers consist of ASCII letters, digits and `_ . - # ! '`.
//! Printing a normal form and parsing it back yields the same term.

use std::fmt;

use thiserror::Error;

use super::{Const, Name, Sort, Term};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("parse error at byte {pos}: {msg}")]
pub struct ParseError {
    pub pos: usize,
    pub msg: String,
}

pub(super) fn write_term(f: &mut fmt::Formatter<'_>, t: &Term) -> fmt::Result {
    match t {
        Term::Gen => f.write_str("(gen)"),
        Term::Const(c) => match c {
            Const::Ok => f.write_str("ok"),
            Const::Bot => f.write_str("bot"),
            Const::No => f.write_str("no"),
            Const::Accept => f.write_str("accept"),
            Const::Reject => f.write_str("reject"),
            Const::Auth => f.write_str("auth"),
            Const::Lo => f.write_str("lo"),
            Const::Hi => f.write_str("hi"),
            Const::Unlinkable => f.write_str("unlinkable"),
            Const::Select => f.write_str("select"),
            Const::Month(k) => write!(f, "(mm {k})"),
        },
        Term::Name(n) => match n.sort {
            Sort::Data => write!(f, "(name {})", n.id),
            Sort::Scalar => write!(f, "(scalar {})", n.id),
        },
        Term::Var(v) => write!(f, "(var {v})"),
        Term::Mult(xs) => list(f, "mult", xs.iter()),
        Term::Tuple(xs) => list(f, "tuple", xs.iter()),
        Term::SMult(x, y) => list(f, "smult", [&**x, &**y].into_iter()),
        Term::Hash(x) => list(f, "hash", [&**x].into_iter()),
        Term::Enc(x, y) => list(f, "enc", [&**x, &**y].into_iter()),
        Term::Pk(x) => list(f, "pk", [&**x].into_iter()),
        Term::Sig(x, y) => list(f, "sig", [&**x, &**y].into_iter()),
        Term::Pkv(x) => list(f, "pkv", [&**x].into_iter()),
        Term::Sigv(x, y) => list(f, "sigv", [&**x, &**y].into_iter()),
        Term::CheckSig(x, y) => list(f, "check", [&**x, &**y].into_iter()),
        Term::CheckSigv(x, y) => list(f, "checkv", [&**x, &**y].into_iter()),
        Term::Dec(x, y) => list(f, "dec", [&**x, &**y].into_iter()),
        Term::Proj(i, x) => {
            write!(f, "(proj {i} ")?;
            write_term(f, x)?;
            f.write_str(")")
        }
    }
}

fn list<'a>(
    f: &mut fmt::Formatter<'_>,
    head: &str,
    items: impl Iterator<Item = &'a Term>,
) -> fmt::Result {
    write!(f, "({head}")?;
    for x in items {
        f.write_str(" ")?;
        write_term(f, x)?;
    }
    f.write_str(")")
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Open,
    Close,
    Atom(String),
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || matches!(c, '_' | '.' | '-' | '#' | '!' | '\'')
}

fn tokenize(src: &str) -> Result<Vec<(usize, Tok)>, ParseError> {
    let mut out = Vec::new();
    let mut it = src.char_indices().peekable();
    while let Some(&(pos, c)) = it.peek() {
        if c.is_whitespace() {
            it.next();
        } else if c == '(' {
            out.push((pos, Tok::Open));
            it.next();
        } else if c == ')' {
            out.push((pos, Tok::Close));
            it.next();
        } else if is_ident_char(c) {
            let mut s = String::new();
            while let Some(&(_, c)) = it.peek() {
                if !is_ident_char(c) {
                    break;
                }
                s.push(c);
                it.next();
            }
            out.push((pos, Tok::Atom(s)));
        } else {
            return Err(ParseError {
                pos,
                msg: format!("unexpected character {c:?}"),
            });
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    i: usize,
    end: usize,
}

impl Parser {
    fn err<T>(&self, msg: impl Into<String>) -> Result<T, ParseError> {
        let pos = self.toks.get(self.i).map(|t| t.0).unwrap_or(self.end);
        Err(ParseError {
            pos,
            msg: msg.into(),
        })
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.i).map(|t| t.1.clone());
        self.i += 1;
        t
    }

    fn atom(&mut self) -> Result<String, ParseError> {
        match self.next() {
            Some(Tok::Atom(s)) => Ok(s),
            _ => {
                self.i -= 1;
                self.err("expected identifier")
            }
        }
    }

    fn number(&mut self) -> Result<u32, ParseError> {
        let s = self.atom()?;
        s.parse().or_else(|_| {
            self.i -= 1;
            self.err(format!("expected number, found {s:?}"))
        })
    }

    fn close(&mut self) -> Result<(), ParseError> {
        match self.next() {
            Some(Tok::Close) => Ok(()),
            _ => {
                self.i -= 1;
                self.err("expected ')'")
            }
        }
    }

    fn rest(&mut self) -> Result<Vec<Term>, ParseError> {
        let mut items = Vec::new();
        loop {
            match self.toks.get(self.i).map(|t| &t.1) {
                Some(Tok::Close) => {
                    self.i += 1;
                    return Ok(items);
                }
                None => return self.err("unterminated list"),
                _ => items.push(self.term()?),
            }
        }
    }

    fn fixed(&mut self, head: &str, n: usize) -> Result<Vec<Term>, ParseError> {
        let items = self.rest()?;
        if items.len() != n {
            self.i -= 1;
            return self.err(format!("{head} takes {n} argument(s), got {}", items.len()));
        }
        Ok(items)
    }

    fn term(&mut self) -> Result<Term, ParseError> {
        match self.next() {
            None => self.err("unexpected end of input"),
            Some(Tok::Close) => {
                self.i -= 1;
                self.err("unexpected ')'")
            }
            Some(Tok::Atom(a)) => Ok(Term::Const(match a.as_str() {
                "ok" => Const::Ok,
                "bot" => Const::Bot,
                "no" => Const::No,
                "accept" => Const::Accept,
                "reject" => Const::Reject,
                "auth" => Const::Auth,
                "lo" => Const::Lo,
                "hi" => Const::Hi,
                "unlinkable" => Const::Unlinkable,
                "select" => Const::Select,
                _ => {
                    self.i -= 1;
                    return self.err(format!("unknown constant {a:?}"));
                }
            })),
            Some(Tok::Open) => {
                let head = self.atom()?;
                let b = Box::new;
                let t = match head.as_str() {
                    "gen" => {
                        self.close()?;
                        Term::Gen
                    }
                    "mm" => {
                        let k = self.number()?;
                        self.close()?;
                        Term::Const(Const::Month(k))
                    }
                    "name" | "scalar" => {
                        let id = self.atom()?;
                        self.close()?;
                        let sort = if head == "name" { Sort::Data } else { Sort::Scalar };
                        Term::Name(Name { id, sort })
                    }
                    "var" => {
                        let v = self.number()?;
                        self.close()?;
                        Term::Var(v)
                    }
                    "proj" => {
                        let i = self.number()?;
                        let body = self.term()?;
                        self.close()?;
                        Term::Proj(i, b(body))
                    }
                    "mult" => Term::Mult(self.rest()?),
                    "tuple" => Term::Tuple(self.rest()?),
                    "hash" | "pk" | "pkv" => {
                        let mut xs = self.fixed(&head, 1)?;
                        let x = b(xs.pop().unwrap());
                        match head.as_str() {
                            "hash" => Term::Hash(x),
                            "pk" => Term::Pk(x),
                            _ => Term::Pkv(x),
                        }
                    }
                    "smult" | "enc" | "sig" | "sigv" | "check" | "checkv" | "dec" => {
                        let mut xs = self.fixed(&head, 2)?;
                        let y = b(xs.pop().unwrap());
                        let x = b(xs.pop().unwrap());
                        match head.as_str() {
                            "smult" => Term::SMult(x, y),
                            "enc" => Term::Enc(x, y),
                            "sig" => Term::Sig(x, y),
                            "sigv" => Term::Sigv(x, y),
                            "check" => Term::CheckSig(x, y),
                            "checkv" => Term::CheckSigv(x, y),
                            _ => Term::Dec(x, y),
                        }
                    }
                    _ => {
                        self.i -= 1;
                        return self.err(format!("unknown head {head:?}"));
                    }
                };
                Ok(t)
            }
        }
    }
}

/// Parses one term. The result is returned exactly as written; call
/// [`super::normalize`] to obtain its normal form.
pub fn parse(src: &str) -> Result<Term, ParseError> {
    let mut p = Parser {
        toks: tokenize(src)?,
        i: 0,
        end: src.len(),
    };
    let t = p.term()?;
    if p.i != p.toks.len() {
        return p.err("trailing input");
    }
    Ok(t)
}
