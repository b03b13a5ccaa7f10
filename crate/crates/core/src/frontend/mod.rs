//! Text front end: the `.smm` model language, final-state rendering and the
//! command-line driver.

use std::fmt;

use crate::universe::Model;
use crate::variation::{Config, Selections};
use crate::vm::Setup;

mod cli;
mod lexer;
mod parser;
mod printer;
mod render;

pub use cli::cli_main;
pub use printer::print_model;
pub use render::{render_final_state, render_step, Format};

/// Line and column, both 1-based.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Span {
    pub line: usize,
    pub col: usize,
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

/// A located problem in model text.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Diagnostic {
    pub span: Span,
    pub message: String,
}

impl Diagnostic {
    pub fn new(span: Span, message: impl Into<String>) -> Self {
        Diagnostic {
            span,
            message: message.into(),
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.span, self.message)
    }
}

impl std::error::Error for Diagnostic {}

/// Everything a model file describes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModelDef {
    pub model: Model,
    pub setup: Setup,
    pub selections: Selections,
}

impl ModelDef {
    /// A run configuration using the file's own strategy selections.
    pub fn config(&self) -> Config {
        Config::new(self.model.clone(), self.selections)
    }
}

/// Parses and validates model text. All diagnostics are sorted by position.
///
/// ```
/// let def = sysmodel::frontend::parse_model(
///     "class A { attr n: Int = 1; }\n\
///      op A.run(): Void { return void; }\n\
///      setup { a: A active run(): Void prio 0; }",
/// )
/// .unwrap();
/// assert_eq!(def.setup.len(), 1);
/// ```
pub fn parse_model(text: &str) -> Result<ModelDef, Vec<Diagnostic>> {
    parser::parse(text)
}
