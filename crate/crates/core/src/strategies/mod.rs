//! Coordinate derivatives of operator-network outputs.
//!
//! Three interchangeable strategies compute `∂^α u_ij / ∂x_j^α` for every
//! function `i` and point `j`: a loop over functions, duplication of the
//! inputs into `M·N` rows, and the zero coordinate shift, which reroutes all
//! coordinate derivatives through one scalar leaf per dimension and recovers
//! per-point fields through a dummy weight leaf.

mod derivatives;
mod multi_index;
mod operator;
mod request;

pub use derivatives::{
    derive, derive_datavect, derive_funcloop, derive_zcs, pinn_derivative, zcs_product,
    DerivativeBundle, Derivatives, ProductMode, Strategy,
};
pub use multi_index::MultiIndex;
pub use operator::Operator;
pub use request::{DerivativeRequest, Field, LinearTerm, ProductTerm};
