//! Path and surface holonomy of 2-connections on Lie crossed modules,
//! computed by multiplicative integration.

pub mod canon;
pub mod cli;
pub mod chains;
pub mod crossed;
pub mod expr;
pub mod forms;
pub mod lie;
pub mod mi;
pub mod quadrature;
pub mod scenario;
pub mod verify;
