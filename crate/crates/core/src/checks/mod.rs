//! Numerical oracles and the property suites run by `zcs check`.

pub mod fd;
pub mod suites;

pub use fd::{central_weights, fd_derivative, fd_field, fornberg_weights, rel_max_error, FdConfig};
pub use suites::{run_suite, Bound, Property, Suite};
