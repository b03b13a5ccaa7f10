//! A deterministic virtual machine for object-oriented system models.
//!
//! A model is a set of classes with attributes, operations implemented by
//! methods written in a small action language, and an initial object
//! network. The [`vm`] runs it step by step. Which thread moves next is
//! decided by exchangeable strategies bundled in a
//! [`variation::Config`], so the same model can be executed under
//! run-to-completion or fully concurrent object semantics, and under
//! round-robin or aging priority scheduling.
//!
//! ```
//! use sysmodel::frontend::{parse_model, render_final_state, Format};
//! use sysmodel::variation::{Config, RunnablesKind, SchedulerKind, Selections};
//! use sysmodel::vm::run_main;
//!
//! let def = parse_model(sysmodel::fixtures::PRODCONS).unwrap();
//! let cfg = Config::new(
//!     def.model.clone(),
//!     Selections::new(RunnablesKind::Rtc, SchedulerKind::Prio),
//! );
//! let result = run_main(&cfg, &def.setup).unwrap();
//! let text = render_final_state(&result, Format::Text);
//! assert!(text.contains("Buffer(id 3): [(\"data\",VInt -1)]"));
//! ```

#![allow(clippy::result_large_err)]

pub mod actions;
pub mod frontend;
pub mod state;
pub mod universe;
pub mod variation;
pub mod vm;

/// Model sources shipped with the crate.
pub mod fixtures {
    /// One producer, two consumers and an unsynchronized one-slot buffer.
    pub const PRODCONS: &str = include_str!("../models/prodcons.smm");
    /// Two objects that call each other while both run to completion.
    pub const DEADLOCK: &str = include_str!("../models/deadlock.smm");
}

/// The guide's chapters, compiled as doc-tests so their snippets keep
/// working.
#[cfg(doctest)]
pub mod guide {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub mod introduction {}
    #[doc = include_str!("../../../book/src/model.md")]
    pub mod model {}
    #[doc = include_str!("../../../book/src/state.md")]
    pub mod state {}
    #[doc = include_str!("../../../book/src/actions.md")]
    pub mod actions {}
    #[doc = include_str!("../../../book/src/variation.md")]
    pub mod variation {}
    #[doc = include_str!("../../../book/src/run-loop.md")]
    pub mod run_loop {}
    #[doc = include_str!("../../../book/src/dsl.md")]
    pub mod dsl {}
    #[doc = include_str!("../../../book/src/cli.md")]
    pub mod cli {}
}
