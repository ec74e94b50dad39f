use alloc::boxed::Box;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use thiserror::Error;

use super::{canonical_classes, ElemExpr, StepExpr, StrExpr};

/// A syntax or nesting error at a byte offset of the input.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("at byte {position}: {message}")]
pub struct ParseError {
    pub position: usize,
    pub message: String,
}

pub fn parse_step(input: &str) -> Result<StepExpr, ParseError> {
    let mut p = Parser { src: input, pos: 0 };
    let step = p.step()?;
    p.finish()?;
    step.validate().map_err(|e| ParseError { position: 0, message: e.to_string() })?;
    Ok(step)
}

pub fn parse_elem(input: &str) -> Result<ElemExpr, ParseError> {
    let mut p = Parser { src: input, pos: 0 };
    let e = p.elem()?;
    p.finish()?;
    e.validate().map_err(|e| ParseError { position: 0, message: e.to_string() })?;
    Ok(e)
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

/// What may appear as the string argument of `Type`.
enum TypeArg {
    Str(StrExpr),
    AnyField,
}

impl<'a> Parser<'a> {
    fn err<T>(&self, message: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError { position: self.pos, message: message.into() })
    }

    fn rest(&self) -> &str {
        &self.src[self.pos..]
    }

    fn skip_ws(&mut self) {
        let trimmed = self.rest().trim_start();
        self.pos = self.src.len() - trimmed.len();
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.rest().chars().next()
    }

    fn expect(&mut self, c: char) -> Result<(), ParseError> {
        if self.peek() == Some(c) {
            self.pos += c.len_utf8();
            Ok(())
        } else {
            match self.peek() {
                Some(got) => self.err(alloc::format!("expected `{c}`, found `{got}`")),
                None => self.err(alloc::format!("expected `{c}`, found end of input")),
            }
        }
    }

    fn ident(&mut self) -> Result<(usize, &'a str), ParseError> {
        self.skip_ws();
        let start = self.pos;
        let len = self.rest().find(|c: char| !c.is_ascii_alphanumeric()).unwrap_or(self.rest().len());
        if len == 0 {
            return self.err("expected a constructor name");
        }
        self.pos += len;
        Ok((start, &self.src[start..start + len]))
    }

    fn string(&mut self) -> Result<String, ParseError> {
        self.expect('"')?;
        let mut out = String::new();
        let mut chars = self.rest().char_indices();
        loop {
            match chars.next() {
                None => return self.err("unterminated string"),
                Some((i, '"')) => {
                    self.pos += i + 1;
                    return Ok(out);
                }
                Some((_, '\\')) => match chars.next() {
                    Some((_, c @ ('"' | '\\'))) => out.push(c),
                    Some((i, _)) => {
                        self.pos += i;
                        return self.err("unknown escape");
                    }
                    None => return self.err("unterminated string"),
                },
                Some((_, c)) => out.push(c),
            }
        }
    }

    fn finish(&mut self) -> Result<(), ParseError> {
        match self.peek() {
            None => Ok(()),
            Some(c) => self.err(alloc::format!("unexpected trailing `{c}`")),
        }
    }

    fn step(&mut self) -> Result<StepExpr, ParseError> {
        let (at, name) = self.ident()?;
        self.expect('(')?;
        let step = match name {
            "Click" => StepExpr::Click(self.elem()?),
            "Type" => {
                let e = self.elem()?;
                self.expect(',')?;
                match self.type_arg()? {
                    TypeArg::Str(s) => StepExpr::Type(e, s),
                    TypeArg::AnyField => StepExpr::TypeAnyField(e),
                }
            }
            other => {
                self.pos = at;
                return self.err(alloc::format!("unknown step `{other}`"));
            }
        };
        self.expect(')')?;
        Ok(step)
    }

    fn type_arg(&mut self) -> Result<TypeArg, ParseError> {
        if self.peek() == Some('"') {
            return Ok(TypeArg::Str(StrExpr::Lit(self.string()?)));
        }
        let (at, name) = self.ident()?;
        if name != "Field" {
            self.pos = at;
            return self.err("expected a string or Field(..)");
        }
        self.expect('(')?;
        let arg = if self.peek() == Some('*') {
            self.pos += 1;
            TypeArg::AnyField
        } else {
            TypeArg::Str(StrExpr::Field(self.string()?))
        };
        self.expect(')')?;
        Ok(arg)
    }

    fn str_expr(&mut self) -> Result<StrExpr, ParseError> {
        if self.peek() == Some('"') {
            return Ok(StrExpr::Lit(self.string()?));
        }
        let (at, name) = self.ident()?;
        if name != "Field" {
            self.pos = at;
            return self.err("expected a string or Field(..)");
        }
        self.expect('(')?;
        if self.peek() == Some('*') {
            return self.err("Field(*) is only allowed as the text of Type");
        }
        let key = self.string()?;
        self.expect(')')?;
        Ok(StrExpr::Field(key))
    }

    fn elem(&mut self) -> Result<ElemExpr, ParseError> {
        if self.peek() == Some('"') {
            return Ok(ElemExpr::Text(StrExpr::Lit(self.string()?)));
        }
        let (at, name) = self.ident()?;
        if name == "Field" {
            self.pos = at;
            return Ok(ElemExpr::Text(self.str_expr()?));
        }
        self.expect('(')?;
        let e = match name {
            "Tag" => ElemExpr::Tag(self.string()?.to_lowercase()),
            "Text" => ElemExpr::Text(self.str_expr()?),
            "Like" => ElemExpr::Like(self.str_expr()?),
            "Near" => ElemExpr::Near(Box::new(self.elem()?)),
            "SameRow" => ElemExpr::SameRow(Box::new(self.elem()?)),
            "SameCol" => ElemExpr::SameCol(Box::new(self.elem()?)),
            "And" => {
                let inner = self.elem()?;
                self.expect(',')?;
                let classes = self.classes()?;
                ElemExpr::And(Box::new(inner), classes)
            }
            other => {
                self.pos = at;
                return self.err(alloc::format!("unknown selector `{other}`"));
            }
        };
        self.expect(')')?;
        Ok(e)
    }

    fn classes(&mut self) -> Result<Vec<String>, ParseError> {
        let (at, name) = self.ident()?;
        if name != "Class" {
            self.pos = at;
            return self.err("expected Class(..)");
        }
        self.expect('(')?;
        let mut raw = Vec::new();
        if self.peek() == Some('[') {
            self.pos += 1;
            loop {
                raw.push(self.string()?);
                if self.peek() == Some(',') {
                    self.pos += 1;
                } else {
                    break;
                }
            }
            self.expect(']')?;
        } else {
            raw.push(self.string()?);
        }
        self.expect(')')?;
        Ok(canonical_classes(raw.iter().map(String::as_str)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;

    #[test]
    fn parses_fixture_lines() {
        let z = parse_step(r#"Type(Tag("input_text"),Field("username"))"#).unwrap();
        assert_eq!(z, StepExpr::Type(ElemExpr::tag("input_text"), StrExpr::field("username")));
        let z = parse_step(r#"Click(And(SameRow(Tag("label")),Class(["input-selection","last"])))"#).unwrap();
        assert_eq!(z, StepExpr::Click(ElemExpr::tag("label").same_row().and_class(&["input-selection", "last"])));
        let z = parse_step(r#"Click(Near(Field("by")))"#).unwrap();
        assert_eq!(z.to_string(), r#"Click(Near(Text(Field("by"))))"#);
        let z = parse_step(r#"Type(And(Near("Subject"),Class("forward-sender")),Field("to"))"#).unwrap();
        assert_eq!(z.to_string(), r#"Type(And(Near(Text("Subject")),Class("forward-sender")),Field("to"))"#);
        assert!(matches!(parse_step(r#"Type(Near(Tag("button")),Field(*))"#).unwrap(), StepExpr::TypeAnyField(_)));
    }

    #[test]
    fn rejects_deep_nesting_without_class_filter() {
        let err = parse_step(r#"Click(Near(Near(Near(Tag("a")))))"#).unwrap_err();
        assert!(err.message.contains("at most"), "{err}");
        let err = parse_step(r#"Click(Near(Near(Tag("a"))))"#).unwrap_err();
        assert!(err.message.contains("Class filter"), "{err}");
    }

    #[test]
    fn reports_positions() {
        let err = parse_step(r#"Click(Tag("a")"#).unwrap_err();
        assert_eq!(err.position, 14);
        let err = parse_step(r#"Click(Foo("a"))"#).unwrap_err();
        assert_eq!(err.position, 6);
        let err = parse_step(r#"Click(Text(Field(*)))"#).unwrap_err();
        assert!(err.message.contains("Field(*)"));
        assert!(parse_step(r#"Click(Tag("a")) x"#).is_err());
        assert!(parse_step(r#"Click(Tag("a"#).is_err());
    }

    #[test]
    fn whitespace_is_insignificant() {
        let a = parse_step(r#" Click ( And ( Tag ( "div" ) , Class ( [ "a" , "b" ] ) ) ) "#).unwrap();
        let b = parse_step(r#"Click(And(Tag("div"),Class(["b","a"])))"#).unwrap();
        assert_eq!(a, b);
    }
}
