//! Reader and writer for `(label child child)` / `(label token)` trees.
//!
//! An absent label is written as `_`.

use super::tree::{NodeId, Tree, TreeBuilder};
use crate::error::{Error, Result};

pub const ABSENT_LABEL: &str = "_";

struct Parser<'a> {
    src: &'a str,
    pos: usize,
    builder: TreeBuilder,
}

impl<'a> Parser<'a> {
    fn err(&self, offset: usize, message: impl Into<String>) -> Error {
        Error::Parse {
            offset,
            message: message.into(),
        }
    }

    fn peek(&self) -> Option<u8> {
        self.src.as_bytes().get(self.pos).copied()
    }

    fn skip_ws(&mut self) {
        while self.peek().is_some_and(|b| b.is_ascii_whitespace()) {
            self.pos += 1;
        }
    }

    fn expect(&mut self, byte: u8) -> Result<()> {
        self.skip_ws();
        match self.peek() {
            Some(b) if b == byte => {
                self.pos += 1;
                Ok(())
            }
            Some(b) => Err(self.err(
                self.pos,
                format!("expected `{}`, found `{}`", byte as char, b as char),
            )),
            None => Err(self.err(
                self.pos,
                format!(
                    "unbalanced parentheses: expected `{}` before end of input",
                    byte as char
                ),
            )),
        }
    }

    fn label(&mut self) -> Result<Option<usize>> {
        self.skip_ws();
        let start = self.pos;
        while self
            .peek()
            .is_some_and(|b| !b.is_ascii_whitespace() && b != b'(' && b != b')')
        {
            self.pos += 1;
        }
        let text = &self.src[start..self.pos];
        if text.is_empty() {
            return Err(self.err(start, "missing label"));
        }
        if text == ABSENT_LABEL {
            return Ok(None);
        }
        text.parse::<usize>().map(Some).map_err(|_| {
            self.err(
                start,
                format!("label `{text}` is not a non-negative integer"),
            )
        })
    }

    fn node(&mut self) -> Result<NodeId> {
        self.expect(b'(')?;
        let open = self.pos - 1;
        let label = self.label()?;
        self.skip_ws();
        match self.peek() {
            None => Err(self.err(self.pos, "unbalanced parentheses: unexpected end of input")),
            Some(b'(') => {
                let mut children = Vec::with_capacity(2);
                loop {
                    self.skip_ws();
                    match self.peek() {
                        Some(b'(') => children.push(self.node()?),
                        Some(b')') => {
                            self.pos += 1;
                            break;
                        }
                        None => {
                            return Err(self
                                .err(self.pos, "unbalanced parentheses: unexpected end of input"))
                        }
                        Some(_) => return Err(self.err(self.pos, "token mixed with child nodes")),
                    }
                }
                match children[..] {
                    [l, r] => Ok(self.builder.internal(label, l, r)),
                    _ => Err(self.err(
                        open,
                        format!("internal node has {} children, expected 2", children.len()),
                    )),
                }
            }
            Some(_) => {
                let start = self.pos;
                let rest = &self.src[start..];
                let Some(len) = rest.find([')', '(']) else {
                    return Err(self.err(
                        self.src.len(),
                        "unbalanced parentheses: unexpected end of input",
                    ));
                };
                if rest.as_bytes()[len] == b'(' {
                    return Err(self.err(start + len, "token mixed with child nodes"));
                }
                let token = rest[..len].trim();
                self.pos = start + len + 1;
                if token.is_empty() {
                    return Err(self.err(start, "empty token"));
                }
                Ok(self.builder.leaf(label, token))
            }
        }
    }
}

/// Parses exactly one s-expression tree.
pub fn parse_sexpr(text: &str) -> Result<Tree> {
    let mut p = Parser {
        src: text,
        pos: 0,
        builder: TreeBuilder::new(),
    };
    p.skip_ws();
    if p.peek().is_none() {
        return Err(p.err(0, "empty input"));
    }
    p.node()?;
    p.skip_ws();
    if p.pos != text.len() {
        return Err(p.err(p.pos, "trailing content after tree"));
    }
    p.builder.finish()
}

/// Canonical single-line form.
pub fn serialize(tree: &Tree) -> String {
    let mut out = String::with_capacity(tree.len() * 8);
    write_node(tree, tree.root_id(), &mut out);
    out
}

fn write_node(tree: &Tree, id: NodeId, out: &mut String) {
    let node = tree.node(id);
    out.push('(');
    match node.label {
        Some(l) => out.push_str(&l.to_string()),
        None => out.push_str(ABSENT_LABEL),
    }
    out.push(' ');
    match node.children() {
        None => out.push_str(node.token.as_deref().unwrap_or_default()),
        Some([l, r]) => {
            write_node(tree, l, out);
            out.push(' ');
            write_node(tree, r, out);
        }
    }
    out.push(')');
}
