//! Optimal-transport and linear-programming kernels.
//!
//! * [`transport`]: exact balanced transport by successive shortest paths
//!   with node potentials (yields a primal plan and a dual certificate).
//! * [`simplex`]: a general revised simplex for `min cᵀx, Ax = b, x ≥ 0`,
//!   used for the Lipschitz-dual formulation of `W_ψ`.
//! * [`sinkhorn`]: log-domain entropic transport.
//! * [`quantile`]: monotone coupling on the line.

pub mod quantile;
pub mod simplex;
pub mod sinkhorn;
pub mod transport;

pub use transport::{solve_transport, TransportSolution};
