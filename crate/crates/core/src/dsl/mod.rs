//! The workflow constraint language.
//!
//! A [`StepExpr`] maps a page state to a finite set of concrete actions.
//! Concrete syntax is the usual one:
//!
//! ```text
//! Click(Near(Text("Bob")))
//! Type(And(Near(Text("Subject")),Class("forward-sender")),Field("to"))
//! Type(Near(Tag("button")),Field(*))
//! ```
//!
//! In element position a bare string or `Field(..)` is shorthand for
//! `Text(..)`; the printer always writes the long form.

mod enumerate;
mod eval;
mod parse;

use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use thiserror::Error;

pub use enumerate::{enumerate_consistent_steps, extract_literals, Literals, DEFAULT_STEP_CAP};
pub use eval::{eval_elems, eval_step, Evaluator};
pub use parse::{parse_elem, parse_step, ParseError};

/// Maximum number of nested element-set applications.
pub const MAX_DEPTH: usize = 3;

/// A string argument: a literal or the value of a goal field.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum StrExpr {
    Lit(String),
    Field(String),
}

/// A selector denoting a set of elements.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ElemExpr {
    Tag(String),
    Text(StrExpr),
    Like(StrExpr),
    Near(Box<ElemExpr>),
    SameRow(Box<ElemExpr>),
    SameCol(Box<ElemExpr>),
    /// Members of the inner set having at least one of the classes.
    And(Box<ElemExpr>, Vec<String>),
}

/// One workflow step.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum StepExpr {
    Click(ElemExpr),
    Type(ElemExpr, StrExpr),
    /// `Type(es,Field(*))`: any goal field value.
    TypeAnyField(ElemExpr),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NestingError {
    #[error("selector nests {0} applications; at most {MAX_DEPTH} are allowed")]
    TooDeep(usize),
    #[error("the third nested application must be a Class filter")]
    ThirdNotClass,
    #[error("class list is empty")]
    EmptyClasses,
}

impl StrExpr {
    pub fn lit(s: impl Into<String>) -> Self {
        StrExpr::Lit(s.into())
    }

    pub fn field(name: impl Into<String>) -> Self {
        StrExpr::Field(name.into())
    }
}

impl ElemExpr {
    pub fn tag(t: &str) -> Self {
        ElemExpr::Tag(t.to_lowercase())
    }

    pub fn text(s: &str) -> Self {
        ElemExpr::Text(StrExpr::lit(s))
    }

    pub fn like(s: &str) -> Self {
        ElemExpr::Like(StrExpr::lit(s))
    }

    pub fn near(self) -> Self {
        ElemExpr::Near(Box::new(self))
    }

    pub fn same_row(self) -> Self {
        ElemExpr::SameRow(Box::new(self))
    }

    pub fn same_col(self) -> Self {
        ElemExpr::SameCol(Box::new(self))
    }

    /// `And(self, Class(classes))` with classes lowercased, sorted and deduplicated.
    pub fn and_class<S: AsRef<str>>(self, classes: &[S]) -> Self {
        ElemExpr::And(Box::new(self), canonical_classes(classes.iter().map(|c| c.as_ref())))
    }

    /// Number of nested selector applications; literal selectors count one.
    pub fn depth(&self) -> usize {
        match self {
            ElemExpr::Tag(_) | ElemExpr::Text(_) | ElemExpr::Like(_) => 1,
            ElemExpr::Near(x) | ElemExpr::SameRow(x) | ElemExpr::SameCol(x) | ElemExpr::And(x, _) => 1 + x.depth(),
        }
    }

    pub fn validate(&self) -> Result<(), NestingError> {
        let d = self.depth();
        if d > MAX_DEPTH {
            return Err(NestingError::TooDeep(d));
        }
        if d == MAX_DEPTH && !matches!(self, ElemExpr::And(..)) {
            return Err(NestingError::ThirdNotClass);
        }
        self.check_classes()
    }

    fn check_classes(&self) -> Result<(), NestingError> {
        match self {
            ElemExpr::And(_, cs) if cs.is_empty() => Err(NestingError::EmptyClasses),
            ElemExpr::Near(x) | ElemExpr::SameRow(x) | ElemExpr::SameCol(x) | ElemExpr::And(x, _) => x.check_classes(),
            _ => Ok(()),
        }
    }

    /// Count of syntax nodes, used to rank candidate steps.
    pub fn size(&self) -> usize {
        match self {
            ElemExpr::Tag(_) => 1,
            ElemExpr::Text(_) | ElemExpr::Like(_) => 2,
            ElemExpr::Near(x) | ElemExpr::SameRow(x) | ElemExpr::SameCol(x) => 1 + x.size(),
            ElemExpr::And(x, _) => 2 + x.size(),
        }
    }
}

impl StepExpr {
    pub fn elems(&self) -> &ElemExpr {
        match self {
            StepExpr::Click(e) | StepExpr::Type(e, _) | StepExpr::TypeAnyField(e) => e,
        }
    }

    pub fn validate(&self) -> Result<(), NestingError> {
        self.elems().validate()
    }

    pub fn size(&self) -> usize {
        match self {
            StepExpr::Click(e) => 1 + e.size(),
            StepExpr::Type(e, _) | StepExpr::TypeAnyField(e) => 2 + e.size(),
        }
    }
}

pub(crate) fn canonical_classes<'a>(classes: impl Iterator<Item = &'a str>) -> Vec<String> {
    let mut v: Vec<String> = classes.map(|c| c.to_lowercase()).collect();
    v.sort();
    v.dedup();
    v
}

fn write_quoted(f: &mut fmt::Formatter<'_>, s: &str) -> fmt::Result {
    f.write_str("\"")?;
    for c in s.chars() {
        match c {
            '"' => f.write_str("\\\"")?,
            '\\' => f.write_str("\\\\")?,
            c => write!(f, "{c}")?,
        }
    }
    f.write_str("\"")
}

impl fmt::Display for StrExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StrExpr::Lit(s) => write_quoted(f, s),
            StrExpr::Field(k) => {
                f.write_str("Field(")?;
                write_quoted(f, k)?;
                f.write_str(")")
            }
        }
    }
}

impl fmt::Display for ElemExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ElemExpr::Tag(t) => {
                f.write_str("Tag(")?;
                write_quoted(f, t)?;
                f.write_str(")")
            }
            ElemExpr::Text(s) => write!(f, "Text({s})"),
            ElemExpr::Like(s) => write!(f, "Like({s})"),
            ElemExpr::Near(x) => write!(f, "Near({x})"),
            ElemExpr::SameRow(x) => write!(f, "SameRow({x})"),
            ElemExpr::SameCol(x) => write!(f, "SameCol({x})"),
            ElemExpr::And(x, cs) => {
                write!(f, "And({x},Class(")?;
                if let [one] = cs.as_slice() {
                    write_quoted(f, one)?;
                } else {
                    f.write_str("[")?;
                    for (i, c) in cs.iter().enumerate() {
                        if i > 0 {
                            f.write_str(",")?;
                        }
                        write_quoted(f, c)?;
                    }
                    f.write_str("]")?;
                }
                f.write_str("))")
            }
        }
    }
}

impl fmt::Display for StepExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StepExpr::Click(e) => write!(f, "Click({e})"),
            StepExpr::Type(e, s) => write!(f, "Type({e},{s})"),
            StepExpr::TypeAnyField(e) => write!(f, "Type({e},Field(*))"),
        }
    }
}
