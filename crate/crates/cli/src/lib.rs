//! Declarative scenario runner for the transport engine: an expression
//! language for user-defined geometries, JSON scenario configs and
//! machine-readable reports.

pub mod expr;
pub mod scenario;
pub mod report;
pub mod run;
