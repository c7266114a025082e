#![no_std]
#![forbid(unsafe_code)]

//! Core of the meerkat reactive language.
//!
//! A program is a set of state variables (`var`) and reactive definitions
//! (`def`). Definitions are kept consistent with the cells they read, actions
//! (`action { x := e }`) write state variables transactionally, and code can
//! be evolved while the program runs.
//!
//! The crate is `no_std` and only needs `alloc`:
//!
//! * [`syntax`] parses and renders source text.
//! * [`typesys`] infers dependency-annotated types and checks that an
//!   environment stays consistent and acyclic across evolutions.
//! * [`store`] holds the runtime cells and propagates writes glitch-free.
//! * [`runtime`] steps a configuration of environment, store and the two
//!   pending queues (evolutions and actions).

extern crate alloc;

pub mod runtime;
pub mod store;
pub mod syntax;
pub mod typesys;

pub use runtime::{Config, ScheduleSource, StepChoice, StepOutcome, StepRecord, Ticket};
pub use store::{Change, RuntimeError, Store, TxnId, Value};
pub use syntax::{parse_do, parse_program, DoStmt, Expr, ParseError, Program};
pub use typesys::{CompatReport, Type, TypeEnv, TypeError};
