#![allow(dead_code)]

pub mod gradcheck;
pub mod grammar_oracle;
pub mod laws;
