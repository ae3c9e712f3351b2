//! Loop mapping of sparse CNN blocks onto streaming CGRAs.
//!
//! The pipeline turns a weight mask into an s-DFG ([`frontend`]), modulo schedules
//! it ([`scheduler`]), binds it through a conflict graph ([`binder`]) and checks the
//! result independently ([`validator`]).

pub mod binder;
pub mod frontend;
pub mod model;
pub mod report;
pub mod scheduler;
pub mod validator;
