//! Command-line tools, file formats, a live LLM backend and an HTTP
//! session service around `visa-core`.

pub mod eval_run;
pub mod gen;
pub mod intake;
pub mod io;
pub mod live;
pub mod report;
pub mod script;
pub mod service;
pub mod session;
